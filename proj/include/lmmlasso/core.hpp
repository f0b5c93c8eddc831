#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lmmlasso {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Malformed or inconsistent user input (dimensions, symmetry, rank, config).
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Cholesky factorization of a covariance block failed.
///
/// `minor()` is the 1-based index (within the full n x n matrix) of the first
/// leading minor that was not numerically positive.
class FactorizationError : public std::runtime_error {
public:
    FactorizationError(const std::string& what, Index minor)
        : std::runtime_error(what), minor_(minor) {}

    [[nodiscard]] Index minor() const noexcept { return minor_; }

private:
    Index minor_;
};

}  // namespace lmmlasso
