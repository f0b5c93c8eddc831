#include "lmmlasso/reml.hpp"

#include "likelihood.hpp"

#include <cmath>
#include <limits>

namespace lmmlasso {

using detail::Likelihood;

double reml_loglik(const ModelData& model, const Vector& theta) {
    return detail::trace_terms(model, detail::block_design(model), theta, Likelihood::restricted).loglik;
}

Vector reml_score(const ModelData& model, const Vector& theta) {
    const auto t = detail::trace_terms(model, detail::block_design(model), theta, Likelihood::restricted);
    return detail::score(t, Likelihood::restricted);
}

Matrix reml_fisher_info(const ModelData& model, const Vector& theta) {
    const auto t = detail::trace_terms(model, detail::block_design(model), theta, Likelihood::restricted);
    return detail::information(t, Likelihood::restricted);
}

Vector nu(const ModelData& model, const Vector& theta) {
    const CovOperator cov = assemble_cov(model, theta);
    const auto& s = *model.structure;
    Vector out = Vector::Zero(model.r());
    for (std::size_t b = 0; b < s.blocks.size(); ++b) {
        const auto L = cov.factors()[b].triangularView<Eigen::Lower>();
        for (Index k = 0; k < model.r(); ++k) {
            const Matrix T = L.solve(s.components[static_cast<std::size_t>(k)][b]);
            out(k) += L.solve(T.transpose()).trace();
        }
    }
    for (Index k = 0; k < model.r(); ++k) {
        out(k) /= std::sqrt(static_cast<double>(s.ranks[static_cast<std::size_t>(k)]));
    }
    return out;
}

std::vector<Vector> reml_starts(const ModelData& model, const RemlOptions& options) {
    std::vector<Vector> starts;
    const Index r = model.r();
    if (options.default_starts) {
        starts.push_back(Vector::Ones(r));

        // Moments start: theta_r = y^T M y / tr(M H_r) with M the OLS residual projector.
        const auto& s = *model.structure;
        const Matrix XtX = model.X.transpose() * model.X;
        const Eigen::LLT<Matrix> llt(XtX);
        const Vector resid = model.y - model.X * llt.solve(model.X.transpose() * model.y);
        const auto& Hr = s.components.back();
        double trace = 0.0;
        Matrix XtHX = Matrix::Zero(model.p(), model.p());
        for (std::size_t b = 0; b < s.blocks.size(); ++b) {
            trace += Hr[b].trace();
            const Matrix Xb = model.X(s.blocks[b], Eigen::all);
            XtHX.noalias() += Xb.transpose() * Hr[b] * Xb;
        }
        trace -= llt.solve(XtHX).trace();
        const double theta_r = trace > 0.0 ? resid.squaredNorm() / trace : 0.0;
        if (std::isfinite(theta_r) && theta_r > 0.0) {
            Vector start = Vector::Constant(r, 0.1 * theta_r);
            start(r - 1) = theta_r;
            starts.push_back(std::move(start));
        }
    }
    for (const auto& st : options.starts) {
        if (st.size() != r || (st.array() <= 0.0).any()) {
            throw InputError("REML start must be a positive vector of length r");
        }
        starts.push_back(st);
    }
    if (starts.empty()) throw InputError("no REML starting values");
    return starts;
}

ThetaEstimate fit_reml(const ModelData& model, const RemlOptions& options) {
    const auto starts = reml_starts(model, options);
    const auto design = detail::block_design(model);
    const detail::ScoringOptions sopt{options.tol, options.max_iter};

    detail::ScoringResult best;
    best.loglik = -std::numeric_limits<double>::infinity();
    bool have = false;
    for (const auto& start : starts) {
        auto res = detail::fisher_scoring(model, design, start, Likelihood::restricted, sopt);
        if (!std::isfinite(res.loglik)) continue;
        // Prefer converged fits; among those, the highest l_R.
        const bool better = !have || (res.converged && !best.converged) ||
                            (res.converged == best.converged && res.loglik > best.loglik);
        if (better) {
            best = std::move(res);
            have = true;
        }
    }

    ThetaEstimate est;
    est.starts_tried = static_cast<int>(starts.size());
    if (!have) {
        est.theta_hat = starts.front();
        est.loglik = -std::numeric_limits<double>::infinity();
        est.score_norm = std::numeric_limits<double>::infinity();
        est.fisher_info = Matrix::Zero(model.r(), model.r());
        est.nu = Vector::Zero(model.r());
        est.score = Vector::Zero(model.r());
        est.near_boundary.assign(static_cast<std::size_t>(model.r()), false);
        return est;
    }
    est.theta_hat = best.theta;
    est.loglik = best.loglik;
    est.score_norm = best.score_norm;
    est.score = best.score;
    est.fisher_info = 0.5 * (best.info + best.info.transpose());
    est.nu = best.nu;
    est.converged = best.converged;
    est.iterations = best.iterations;
    const double top = best.theta.maxCoeff();
    for (Index k = 0; k < best.theta.size(); ++k) est.near_boundary.push_back(best.theta(k) < 1e-6 * top);
    return est;
}

}  // namespace lmmlasso
