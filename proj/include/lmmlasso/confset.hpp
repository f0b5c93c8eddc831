#pragma once

#include "lmmlasso/lasso.hpp"
#include "lmmlasso/model.hpp"

#include <optional>

namespace lmmlasso {

/// Maximal noncentrality over sign vectors d of d^T Lambda C^{-1} Lambda d.
struct Noncentrality {
    double xi = 0.0;
    /// Maximizing sign vector; unset when the conservative bound was used.
    std::optional<Vector> d;
    bool conservative = false;
};

/// Largest p for which the sign vectors are enumerated exactly.
inline constexpr Index kMaxExactSignDimension = 20;

/// Exact maximum over {-1, 1}^p for p <= 20 (2^{p-1} sign classes, Gray-code
/// order); above that, the bound p * eta_1(Lambda C^{-1} Lambda).
[[nodiscard]] Noncentrality max_noncentrality(const Matrix& C, const Vector& lambda_diag);

/// p * eta_1(Lambda C^{-1} Lambda), an upper bound on the maximum.
[[nodiscard]] double noncentrality_upper_bound(const Matrix& C, const Vector& lambda_diag);

/// The set {beta : n (center - beta)^T C (center - beta) <= radius}.
struct ConfidenceEllipsoid {
    Vector center;
    Matrix shape;
    /// Lower Cholesky factor of `shape`; membership is evaluated through it.
    Matrix shape_factor;
    double radius = 0.0;
    double alpha = 0.05;
    Index n = 0;
    std::optional<Vector> d_star;
    double xi_star = 0.0;
    bool conservative = false;

    [[nodiscard]] Index p() const { return center.size(); }
    /// n ||L^T (center - beta)||^2.
    [[nodiscard]] double statistic(const Vector& beta) const;
    /// Boundary inclusive.
    [[nodiscard]] bool contains(const Vector& beta) const;
};

/// Ellipsoid from its parts; the factor of `shape` is computed here.
[[nodiscard]] ConfidenceEllipsoid make_ellipsoid(Vector center, const Matrix& shape, double radius,
                                                 double alpha, Index n);

/// Uniformly valid set: center beta_L, shape C, radius the 1 - alpha quantile of
/// chi^2_p(xi*) with Lambda = n^{-1/2} diag(lambda).
[[nodiscard]] ConfidenceEllipsoid build_ellipsoid(const ModelData& model, const Vector& theta_hat,
                                                  const LassoSolution& lasso, const Vector& lambda, double alpha);

/// Same construction from a precomputed C.
[[nodiscard]] ConfidenceEllipsoid build_ellipsoid(const Matrix& C, Index n, const Vector& center,
                                                  const Vector& lambda, double alpha);

[[nodiscard]] inline bool contains(const ConfidenceEllipsoid& e, const Vector& beta) { return e.contains(beta); }

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    [[nodiscard]] double width() const { return hi - lo; }
    [[nodiscard]] bool contains(double v) const { return lo <= v && v <= hi; }
};

/// One-dimensional version for coordinate j (zero-based): scalar shape
/// 1 / (C^{-1})_jj and noncentrality lambda_j^2 (C^{-1})_jj / n.
[[nodiscard]] Interval coordinate_interval(const ModelData& model, const Vector& theta_hat,
                                           const LassoSolution& lasso, const Vector& lambda, Index j, double alpha);

[[nodiscard]] Interval coordinate_interval(const Matrix& C_inv, Index n, double center, double lambda_j, Index j,
                                           double alpha);

}  // namespace lmmlasso
