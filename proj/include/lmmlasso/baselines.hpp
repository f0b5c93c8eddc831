#pragma once

#include "lmmlasso/confset.hpp"
#include "lmmlasso/lasso.hpp"
#include "lmmlasso/model.hpp"
#include "lmmlasso/reml.hpp"

#include <optional>
#include <string>
#include <vector>

namespace lmmlasso {

/// Classical set: center beta_WLS, shape C, central chi^2_{p, 1-alpha} radius.
[[nodiscard]] ConfidenceEllipsoid wls_ellipsoid(const ModelData& model, const Vector& theta_hat, double alpha);

/// WLS-shaped set around the Lasso estimate, without the noncentrality correction.
[[nodiscard]] ConfidenceEllipsoid naive_lasso_set(const ModelData& model, const Vector& theta_hat,
                                                  const LassoSolution& lasso, double alpha);

struct SubsetFit {
    std::vector<Index> subset;
    double aic = 0.0;
    double loglik = 0.0;
    /// Maximum likelihood covariance estimate for this subset.
    Vector theta;
    bool converged = false;
};

struct SelectionResult {
    std::vector<Index> subset;
    double aic = 0.0;
    /// Every subset in enumeration order (by size, then lexicographic).
    std::vector<SubsetFit> fits;
    /// REML refit on the selected columns; empty when the subset is empty.
    Vector theta_selected;
    Vector beta_selected;
    Matrix C_selected;
    Index n = 0;
    Index p = 0;
    std::vector<std::string> warnings;
};

struct AicOptions {
    RemlOptions fit;
    /// Extra start for every subset's ML fit (typically the full-model REML estimate).
    std::optional<Vector> warm_start;
    /// REML estimate to reuse when the full subset is selected.
    std::optional<Vector> full_theta;
};

/// Exhaustive AIC search over all 2^p subsets (p <= 15) using the profile ML
/// likelihood; AIC = -2 l + 2 (|S| + r). Ties go to the smaller, then
/// lexicographically first, subset.
[[nodiscard]] SelectionResult aic_select(const ModelData& model, const AicOptions& options = {});

/// {beta : beta_j = 0 off S, n (b_S - beta_S)^T C_S (b_S - beta_S) <= chi^2_{|S|, 1-alpha}}.
struct SelectionSet {
    std::vector<Index> subset;
    Index p = 0;
    /// Set over the selected coordinates; unset when S is empty (the set is {0}).
    std::optional<ConfidenceEllipsoid> ellipsoid;

    [[nodiscard]] bool contains(const Vector& beta) const;
};

[[nodiscard]] SelectionSet aic_wls_set(const ModelData& model, const SelectionResult& selection, double alpha);

}  // namespace lmmlasso
