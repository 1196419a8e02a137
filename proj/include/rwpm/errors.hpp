#pragma once

#include <stdexcept>
#include <string>

namespace rwpm {

// Validation failures when constructing a jump kernel.
struct NotAProbability : std::invalid_argument {
    explicit NotAProbability(const std::string& msg) : std::invalid_argument(msg) {}
};
struct NotSymmetric : std::invalid_argument {
    explicit NotSymmetric(const std::string& msg) : std::invalid_argument(msg) {}
};
struct NotIrreducible : std::invalid_argument {
    explicit NotIrreducible(const std::string& msg) : std::invalid_argument(msg) {}
};
struct BadDimension : std::invalid_argument {
    explicit BadDimension(const std::string& msg) : std::invalid_argument(msg) {}
};

// Numeric/domain failures at evaluation time.
struct HorizonExceeded : std::runtime_error {
    explicit HorizonExceeded(const std::string& msg) : std::runtime_error(msg) {}
};
struct RecurrentWalk : std::domain_error {
    explicit RecurrentWalk(const std::string& msg) : std::domain_error(msg) {}
};
struct TailBoundFailed : std::runtime_error {
    explicit TailBoundFailed(const std::string& msg) : std::runtime_error(msg) {}
};
struct OutOfHorizon : std::out_of_range {
    explicit OutOfHorizon(const std::string& msg) : std::out_of_range(msg) {}
};
struct GridTooCoarse : std::runtime_error {
    explicit GridTooCoarse(const std::string& msg) : std::runtime_error(msg) {}
};
struct UnsupportedAlpha : std::domain_error {
    explicit UnsupportedAlpha(const std::string& msg) : std::domain_error(msg) {}
};
struct BoxTooSmall : std::runtime_error {
    explicit BoxTooSmall(const std::string& msg) : std::runtime_error(msg) {}
};
struct EnvelopeViolated : std::runtime_error {
    explicit EnvelopeViolated(const std::string& msg) : std::runtime_error(msg) {}
};
struct NotConverged : std::runtime_error {
    explicit NotConverged(const std::string& msg) : std::runtime_error(msg) {}
};
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};
struct NumericsError : std::runtime_error {
    explicit NumericsError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace rwpm
