#pragma once

#include "lmmlasso/model.hpp"

#include <optional>
#include <string>
#include <vector>

namespace lmmlasso {

/// Per-component quantities from condition (D), with S = sum_l H_l.
struct OmegaBounds {
    /// tr(S^{-1} H_k) / rk(H_k).
    Vector ratio;
    /// Sum of the p largest eigenvalues of S^{-1} H_k.
    Vector eigsum;
};

[[nodiscard]] OmegaBounds omega_bounds(const ModelData& model);

/// K_ij = tr{P(1, c) H_i P(1, c) H_j} / sqrt(rk(H_i) rk(H_j)) with the penalized
/// projector P(theta, a) = V^{-1} - a V^{-1} X (X^T V^{-1} X)^{-1} X^T V^{-1}.
struct KMatrix {
    Matrix K;
    double eta_min = 0.0;
};

[[nodiscard]] KMatrix K_matrix(const ModelData& model, double c);

struct ConditionThresholds {
    /// Bound on max(theta)/min(theta); unset means report only.
    std::optional<double> max_ratio;
    /// Warn when the smallest eigenvalue of K falls below this.
    double min_eta_K = 1e-6;
    /// Constant for K; defaults to max(1, max(theta)/min(theta)).
    std::optional<double> c;
};

struct ConditionReport {
    double ratio_c = 1.0;
    double c_used = 1.0;
    OmegaBounds omega;
    Matrix K;
    double eta_min_K = 0.0;
    bool rank_X_ok = false;
    bool psd_ok = false;
    bool ratio_ok = true;
    bool K_ok = true;
    /// gamma_i = sigma_v^2 / (sigma_v^2 + sigma_e^2 / n_i); random-intercept models only.
    std::vector<double> intraclass;
    std::vector<std::string> warnings;
};

/// Aggregates the diagnostics. Never throws for a valid model; failures are flags.
[[nodiscard]] ConditionReport check_all(const ModelData& model, const Vector& theta_hat,
                                        const ConditionThresholds& thresholds = {});

}  // namespace lmmlasso
