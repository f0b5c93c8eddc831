#pragma once

#include "lmmlasso/model.hpp"

#include <vector>

namespace lmmlasso {

struct RemlOptions {
    /// Convergence threshold on max_k |score_k| / nu_k.
    double tol = 1e-8;
    int max_iter = 100;
    /// Include the all-ones and method-of-moments starts.
    bool default_starts = true;
    /// Extra user starts, tried after the defaults.
    std::vector<Vector> starts;
};

struct ThetaEstimate {
    Vector theta_hat;
    double loglik = 0.0;
    /// max_k |score_k| / nu_k at theta_hat.
    double score_norm = 0.0;
    Vector score;
    Matrix fisher_info;
    Vector nu;
    bool converged = false;
    int iterations = 0;
    int starts_tried = 0;
    /// theta_hat(k) < 1e-6 * max(theta_hat).
    std::vector<bool> near_boundary;
};

/// l_R(theta) = -1/2 ln|V| - 1/2 ln|X^T V^{-1} X| - 1/2 y^T P(theta) y.
[[nodiscard]] double reml_loglik(const ModelData& model, const Vector& theta);

/// d l_R / d theta_i = 1/2 y^T P H_i P y - 1/2 tr(P H_i).
[[nodiscard]] Vector reml_score(const ModelData& model, const Vector& theta);

/// I_ij = 1/2 tr(P H_i P H_j).
[[nodiscard]] Matrix reml_fisher_info(const ModelData& model, const Vector& theta);

/// nu_k = tr(V^{-1} H_k) / sqrt(rk(H_k)).
[[nodiscard]] Vector nu(const ModelData& model, const Vector& theta);

/// The starting points fit_reml tries, in order.
[[nodiscard]] std::vector<Vector> reml_starts(const ModelData& model, const RemlOptions& options = {});

/// Multi-start Fisher scoring; returns the best local maximizer found.
[[nodiscard]] ThetaEstimate fit_reml(const ModelData& model, const RemlOptions& options = {});

}  // namespace lmmlasso
