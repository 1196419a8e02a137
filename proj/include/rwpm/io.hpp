#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rwpm/errors.hpp"
#include "rwpm/jump_kernel.hpp"
#include "rwpm/walk.hpp"

namespace rwpm {

// Fixed 12-significant-digit formatting so reruns diff byte-identically.
inline std::string format_value(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

class CsvWriter {
  public:
    explicit CsvWriter(std::vector<std::string> header) : header_(std::move(header)) {}

    void add_row(const std::vector<std::string>& cells) {
        if (cells.size() != header_.size()) throw NumericsError("csv row width mismatch");
        rows_.push_back(cells);
    }

    std::string str() const {
        std::ostringstream out;
        for (std::size_t i = 0; i < header_.size(); ++i) out << (i ? "," : "") << header_[i];
        out << "\n";
        for (const auto& row : rows_) {
            for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
            out << "\n";
        }
        return out.str();
    }

    void write(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw ConfigError("cannot open output file " + path);
        f << str();
    }

  private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

// Kernel spec files: one support point per line, "dx [dy [dz [dw]]] prob",
// '#' comments allowed.
template <int D>
JumpKernel<D> read_kernel_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open kernel file " + path);
    std::vector<std::pair<Site<D>, double>> spec;
    std::string line;
    while (std::getline(f, line)) {
        const auto hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line.resize(hash_pos);
        std::istringstream ss(line);
        Site<D> x{};
        bool any = false;
        for (int i = 0; i < D; ++i) {
            if (!(ss >> x[static_cast<std::size_t>(i)])) {
                if (i == 0) break; // blank line
                throw BadDimension("kernel file line has fewer than d coordinates: " + line);
            }
            any = true;
        }
        if (!any) continue;
        double p = 0;
        if (!(ss >> p)) throw ConfigError("kernel file line missing probability: " + line);
        double extra;
        if (ss >> extra) throw BadDimension("kernel file line has too many columns: " + line);
        spec.emplace_back(x, p);
    }
    return build_kernel<D>(spec);
}

// Path dump: header line with kernel hash, rate and seed, then one line per
// jump "t dx dy dz".
template <int D>
void write_path(const WalkPath<D>& path, std::uint64_t seed, const std::string& out_path) {
    std::ofstream f(out_path, std::ios::binary);
    if (!f) throw ConfigError("cannot open path output " + out_path);
    char head[160];
    std::snprintf(head, sizeof head, "# kernel %016llx rate %s horizon %s seed %llu\n",
                  static_cast<unsigned long long>(path.kernel_hash), format_value(path.rate).c_str(),
                  format_value(path.horizon).c_str(), static_cast<unsigned long long>(seed));
    f << head;
    for (std::size_t k = 0; k < path.jump_times.size(); ++k) {
        f << format_value(path.jump_times[k]);
        const Site<D> step = path.sites[k + 1] - path.sites[k];
        for (int i = 0; i < D; ++i) f << ' ' << step[static_cast<std::size_t>(i)];
        f << "\n";
    }
}

} // namespace rwpm
