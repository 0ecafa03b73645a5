#pragma once

#include <stdexcept>
#include <string>

namespace carnot {

/// Invalid run configuration (grid too coarse, guard exceeded, empty probe set, ...).
class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

/// Iterative solver failed to reach its tolerance; carries the last residual.
class convergence_error : public std::runtime_error {
public:
    convergence_error(const std::string& what, double residual)
        : std::runtime_error(what + " (last residual " + std::to_string(residual) + ")"),
          last_residual(residual) {}

    double last_residual;
};

} // namespace carnot
