#include "lmmlasso/report.hpp"

#include <chrono>

namespace lmmlasso {

namespace {

using nlohmann::json;

json vec(const Vector& v) { return json(std::vector<double>(v.begin(), v.end())); }

json mat(const Matrix& M) {
    json rows = json::array();
    for (Index i = 0; i < M.rows(); ++i) {
        const Vector row = M.row(i).transpose();
        rows.push_back(vec(row));
    }
    return rows;
}

Vector to_vector(const json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

Matrix to_matrix(const json& j) {
    const Index rows = static_cast<Index>(j.size());
    const Index cols = rows > 0 ? static_cast<Index>(j.at(0).size()) : 0;
    Matrix M(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        const auto& row = j.at(static_cast<std::size_t>(i));
        if (static_cast<Index>(row.size()) != cols) throw InputError("matrix rows have different lengths");
        for (Index c = 0; c < cols; ++c) M(i, c) = row.at(static_cast<std::size_t>(c)).get<double>();
    }
    return M;
}

class Stopwatch {
public:
    double lap() {
        const auto now = std::chrono::steady_clock::now();
        const double s = std::chrono::duration<double>(now - last_).count();
        last_ = now;
        return s;
    }

private:
    std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

}  // namespace

FitReport make_report(const ModelData& model, const Vector& lambda, double alpha, const RemlOptions& reml,
                      const ConditionThresholds& thresholds) {
    if (lambda.size() != model.p()) throw InputError("lambda must have one entry per fixed effect");
    FitReport rep;
    rep.n = model.n();
    rep.p = model.p();
    rep.r = model.r();
    rep.labels = model.labels;
    switch (model.kind) {
        case CovarianceTemplate::random_intercept: rep.template_name = "random_intercept"; break;
        case CovarianceTemplate::linear: rep.template_name = "linear"; break;
        case CovarianceTemplate::custom: rep.template_name = "custom"; break;
    }

    Stopwatch clock;
    rep.theta = fit_reml(model, reml);
    rep.timing.emplace_back("reml", clock.lap());
    if (!std::isfinite(rep.theta.loglik)) {
        throw std::runtime_error("REML failed at every starting point; nothing to report");
    }
    if (!rep.theta.converged) {
        rep.warnings.push_back("REML did not converge (score norm " + std::to_string(rep.theta.score_norm) +
                               "); inference uses the best iterate");
    }
    for (std::size_t k = 0; k < rep.theta.near_boundary.size(); ++k) {
        if (rep.theta.near_boundary[k]) {
            rep.warnings.push_back("theta_" + std::to_string(k + 1) + " is at the boundary of the parameter space");
        }
    }
    const Vector& theta = rep.theta.theta_hat;

    rep.wls_fit = wls(model, theta);
    rep.lasso = fit_lasso(model, theta, lambda);
    rep.timing.emplace_back("lasso", clock.lap());
    if (!rep.lasso.converged) rep.warnings.push_back("Lasso coordinate descent hit the sweep limit");

    const Matrix C = compute_C(model, theta);
    rep.ellipsoid = build_ellipsoid(C, model.n(), rep.lasso.beta, lambda, alpha);
    const Matrix C_inv = rep.wls_fit.cov_scaled;
    for (Index j = 0; j < model.p(); ++j) {
        rep.intervals.push_back(coordinate_interval(C_inv, model.n(), rep.lasso.beta(j), lambda(j), j, alpha));
    }
    rep.timing.emplace_back("confidence_sets", clock.lap());

    rep.conditions = check_all(model, theta, thresholds);
    rep.timing.emplace_back("conditions", clock.lap());
    return rep;
}

nlohmann::json to_json(const ConfidenceEllipsoid& e) {
    json j;
    j["center"] = vec(e.center);
    j["shape"] = mat(e.shape);
    j["shape_cholesky"] = mat(e.shape_factor);
    j["radius"] = e.radius;
    j["alpha"] = e.alpha;
    j["n"] = e.n;
    j["d_star"] = e.d_star ? vec(*e.d_star) : json(nullptr);
    j["xi_star"] = e.xi_star;
    j["conservative"] = e.conservative;
    return j;
}

ConfidenceEllipsoid ellipsoid_from_json(const nlohmann::json& j) {
    try {
        ConfidenceEllipsoid e;
        e.center = to_vector(j.at("center"));
        e.shape = to_matrix(j.at("shape"));
        e.shape_factor = to_matrix(j.at("shape_cholesky"));
        e.radius = j.at("radius").get<double>();
        e.alpha = j.at("alpha").get<double>();
        e.n = j.at("n").get<Index>();
        if (!j.at("d_star").is_null()) e.d_star = to_vector(j.at("d_star"));
        e.xi_star = j.at("xi_star").get<double>();
        e.conservative = j.at("conservative").get<bool>();
        const Index p = e.center.size();
        if (e.shape.rows() != p || e.shape.cols() != p || e.shape_factor.rows() != p || e.shape_factor.cols() != p) {
            throw InputError("ellipsoid: shape does not match center");
        }
        return e;
    } catch (const json::exception& ex) {
        throw InputError(std::string("ellipsoid: ") + ex.what());
    }
}

nlohmann::json to_json(const FitReport& rep) {
    json j;
    j["template"] = rep.template_name;
    j["n"] = rep.n;
    j["p"] = rep.p;
    j["r"] = rep.r;
    j["labels"] = rep.labels;

    const auto& t = rep.theta;
    j["theta"] = {{"theta_hat", vec(t.theta_hat)},
                  {"loglik", t.loglik},
                  {"score", vec(t.score)},
                  {"score_norm", t.score_norm},
                  {"fisher_info", mat(t.fisher_info)},
                  {"nu", vec(t.nu)},
                  {"converged", t.converged},
                  {"iterations", t.iterations},
                  {"starts_tried", t.starts_tried},
                  {"near_boundary", t.near_boundary}};

    j["beta_wls"] = vec(rep.wls_fit.beta);
    j["cov_scaled"] = mat(rep.wls_fit.cov_scaled);
    std::vector<Index> active(rep.lasso.active_set.begin(), rep.lasso.active_set.end());
    for (auto& a : active) ++a;
    j["lasso"] = {{"beta", vec(rep.lasso.beta)},
                  {"active_set", active},
                  {"objective", rep.lasso.objective},
                  {"kkt_residual", rep.lasso.kkt_residual},
                  {"iterations", rep.lasso.iterations},
                  {"converged", rep.lasso.converged}};
    j["lambda"] = vec(rep.lasso.lambda);
    j["tau_hat"] = rep.tau_hat();
    j["ellipsoid"] = to_json(rep.ellipsoid);

    json intervals = json::array();
    for (std::size_t k = 0; k < rep.intervals.size(); ++k) {
        json iv = {{"lo", rep.intervals[k].lo}, {"hi", rep.intervals[k].hi}};
        if (k < rep.labels.size()) iv["label"] = rep.labels[k];
        intervals.push_back(iv);
    }
    j["intervals"] = intervals;

    const auto& c = rep.conditions;
    j["conditions"] = {{"ratio_c", c.ratio_c},
                       {"c_used", c.c_used},
                       {"omega_ratio", vec(c.omega.ratio)},
                       {"omega_eigsum", vec(c.omega.eigsum)},
                       {"K", mat(c.K)},
                       {"eta_min_K", c.eta_min_K},
                       {"rank_X_ok", c.rank_X_ok},
                       {"psd_ok", c.psd_ok},
                       {"ratio_ok", c.ratio_ok},
                       {"K_ok", c.K_ok},
                       {"intraclass", c.intraclass},
                       {"warnings", c.warnings}};

    json timing = json::object();
    for (const auto& [stage, seconds] : rep.timing) timing[stage] = seconds;
    j["timing"] = timing;
    j["warnings"] = rep.warnings;
    return j;
}

}  // namespace lmmlasso
