#pragma once

#include "lmmlasso/model.hpp"

#include <Eigen/Cholesky>

#include <vector>

namespace lmmlasso {

struct LassoOptions {
    double tol = 1e-10;
    int max_sweeps = 100000;
    /// Start from the unpenalized solution rather than zero.
    bool warm_start = true;
    /// Cyclic visiting order; empty means 0..p-1.
    std::vector<Index> order;
    /// Keep the objective after every sweep in LassoSolution::history.
    bool record_history = false;
};

struct LassoSolution {
    Vector beta;
    Vector lambda;
    std::vector<Index> active_set;
    double objective = 0.0;
    double kkt_residual = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> history;
};

/// Soft-thresholding S(z, t) = sign(z) max(|z| - t, 0), coefficient-wise.
template <typename Derived, typename OtherDerived>
[[nodiscard]] typename Derived::PlainObject soft_threshold(const Eigen::ArrayBase<Derived>& z,
                                                           const Eigen::ArrayBase<OtherDerived>& t) {
    return z.sign() * (z.abs() - t).max(typename Derived::Scalar(0));
}

[[nodiscard]] inline double soft_threshold(double z, double t) {
    return z > t ? z - t : (z < -t ? z + t : 0.0);
}

/// ||yt - Xt beta||^2 + 2 sum_j lambda_j |beta_j| in terms of gram = Xt^T Xt,
/// xty = Xt^T yt and yty = yt^T yt.
[[nodiscard]] double lasso_objective(const Matrix& gram, const Vector& xty, double yty, const Vector& lambda,
                                     const Vector& beta);

/// Coordinate descent on the Gram form of the whitened problem.
[[nodiscard]] LassoSolution fit_lasso_gram(const Matrix& gram, const Vector& xty, double yty,
                                           const Vector& lambda, const LassoOptions& options = {});

/// Minimizes ||V(theta)^{-1/2}(y - X beta)||^2 + 2 sum_j lambda_j |beta_j|.
[[nodiscard]] LassoSolution fit_lasso(const ModelData& model, const Vector& theta_hat, const Vector& lambda,
                                      const LassoOptions& options = {});

struct WlsFit {
    Vector beta;
    /// C^{-1}, so that Var(beta) is approximately cov_scaled / n.
    Matrix cov_scaled;
};

[[nodiscard]] WlsFit wls(const ModelData& model, const Vector& theta_hat);

/// Max KKT violation with g = Xt^T (yt - Xt beta).
[[nodiscard]] double kkt_residual_gram(const Matrix& gram, const Vector& xty, const Vector& lambda,
                                       const Vector& beta);
[[nodiscard]] double kkt_residual(const ModelData& model, const Vector& theta_hat, const Vector& lambda,
                                  const Vector& beta);

/// Limiting minimizer u_d = C^{-1}(w - Lambda d); `lambda_diag` holds the diagonal of Lambda.
template <typename DerivedC, typename DerivedW, typename DerivedL, typename DerivedD>
[[nodiscard]] Vector u_d(const Eigen::MatrixBase<DerivedC>& C, const Eigen::MatrixBase<DerivedW>& w,
                         const Eigen::MatrixBase<DerivedL>& lambda_diag, const Eigen::MatrixBase<DerivedD>& d) {
    const Matrix Cp = C;
    return Cp.llt().solve(Vector(w - lambda_diag.cwiseProduct(d)));
}

}  // namespace lmmlasso
