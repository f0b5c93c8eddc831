#pragma once

#include "lmmlasso/conditions.hpp"
#include "lmmlasso/confset.hpp"
#include "lmmlasso/lasso.hpp"
#include "lmmlasso/model.hpp"
#include "lmmlasso/reml.hpp"

#include <json.hpp>

#include <string>
#include <utility>
#include <vector>

namespace lmmlasso {

/// Everything `lmmlasso fit` produces for one data set.
struct FitReport {
    std::string template_name;
    Index n = 0;
    Index p = 0;
    Index r = 0;
    std::vector<std::string> labels;
    ThetaEstimate theta;
    WlsFit wls_fit;
    LassoSolution lasso;
    ConfidenceEllipsoid ellipsoid;
    /// One interval per fixed effect.
    std::vector<Interval> intervals;
    ConditionReport conditions;
    /// Wall-clock seconds per stage, in execution order.
    std::vector<std::pair<std::string, double>> timing;
    std::vector<std::string> warnings;

    [[nodiscard]] double tau_hat() const { return ellipsoid.radius; }
};

/// REML, WLS, Lasso, ellipsoid, coordinate intervals and condition checks.
/// A non-converged REML fit is reported (theta.converged = false), not thrown.
[[nodiscard]] FitReport make_report(const ModelData& model, const Vector& lambda, double alpha,
                                    const RemlOptions& reml = {}, const ConditionThresholds& thresholds = {});

[[nodiscard]] nlohmann::json to_json(const FitReport& report);
[[nodiscard]] nlohmann::json to_json(const ConfidenceEllipsoid& ellipsoid);
[[nodiscard]] ConfidenceEllipsoid ellipsoid_from_json(const nlohmann::json& j);

}  // namespace lmmlasso
