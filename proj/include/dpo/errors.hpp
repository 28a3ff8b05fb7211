#pragma once

#include <stdexcept>
#include <string>

namespace dpo {

// Invalid or inconsistent inputs: bad parameters, malformed configs.
// Maps to process exit code 2.
struct ConfigError : std::invalid_argument {
    explicit ConfigError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Failure of a numerical procedure: quadrature non-convergence, singular
// systems, ODE blow-up, degenerate payoffs, bankrupt inner wealth.
// Maps to process exit code 3.
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem failures while reading configs or writing outputs.
// Maps to process exit code 4.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace dpo
