#include "lmmlasso/baselines.hpp"

#include "likelihood.hpp"
#include "lmmlasso/ncchisq.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>

namespace lmmlasso {

namespace {

std::vector<std::vector<Index>> enumerate_subsets(Index p) {
    std::vector<std::vector<Index>> out;
    const std::uint32_t count = std::uint32_t{1} << p;
    for (std::uint32_t mask = 0; mask < count; ++mask) {
        std::vector<Index> s;
        for (Index j = 0; j < p; ++j) {
            if (mask & (std::uint32_t{1} << j)) s.push_back(j);
        }
        out.push_back(std::move(s));
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        if (a.size() != b.size()) return a.size() < b.size();
        return a < b;
    });
    return out;
}

}  // namespace

ConfidenceEllipsoid wls_ellipsoid(const ModelData& model, const Vector& theta_hat, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("alpha must lie in (0, 1)");
    const auto fit = wls(model, theta_hat);
    const Matrix C = compute_C(model, theta_hat);
    return make_ellipsoid(fit.beta, C, chisq_quantile(1.0 - alpha, static_cast<int>(model.p())), alpha, model.n());
}

ConfidenceEllipsoid naive_lasso_set(const ModelData& model, const Vector& theta_hat, const LassoSolution& lasso,
                                    double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("alpha must lie in (0, 1)");
    const Matrix C = compute_C(model, theta_hat);
    return make_ellipsoid(lasso.beta, C, chisq_quantile(1.0 - alpha, static_cast<int>(model.p())), alpha,
                          model.n());
}

SelectionResult aic_select(const ModelData& model, const AicOptions& options) {
    const Index p = model.p();
    if (p > 15) throw InputError("AIC subset search supports at most 15 fixed effects");
    const Index r = model.r();

    std::vector<Vector> starts;
    if (options.warm_start) starts.push_back(*options.warm_start);
    for (auto& s : reml_starts(model, options.fit)) starts.push_back(std::move(s));

    const detail::ScoringOptions sopt{options.fit.tol, options.fit.max_iter};
    SelectionResult res;
    res.n = model.n();
    res.p = p;
    bool have = false;
    for (auto& subset : enumerate_subsets(p)) {
        const ModelData sub = model.with_columns(subset);
        const auto design = detail::block_design(sub);
        detail::ScoringResult best;
        best.loglik = -std::numeric_limits<double>::infinity();
        for (std::size_t s = 0; s < starts.size(); ++s) {
            auto fit = detail::fisher_scoring(sub, design, starts[s], detail::Likelihood::profile, sopt);
            const bool better = (fit.converged && !best.converged) ||
                                (fit.converged == best.converged && fit.loglik > best.loglik);
            if (better) best = std::move(fit);
            // A converged warm start settles the subset.
            if (s == 0 && options.warm_start && best.converged) break;
        }
        SubsetFit sf;
        sf.subset = subset;
        sf.converged = best.converged;
        sf.theta = best.theta;
        sf.loglik = best.loglik;
        sf.aic = -2.0 * best.loglik + 2.0 * static_cast<double>(static_cast<Index>(subset.size()) + r);
        if (!sf.converged) {
            std::string name = "{";
            for (Index j : subset) name += (name.size() > 1 ? "," : "") + std::to_string(j + 1);
            res.warnings.push_back("ML fit did not converge for subset " + name + "}; skipped");
        } else if (!have || sf.aic < res.aic) {
            // Strict comparison keeps the earlier (smaller, then lexicographically first) subset on ties.
            res.aic = sf.aic;
            res.subset = subset;
            have = true;
        }
        res.fits.push_back(std::move(sf));
    }
    if (!have) throw std::runtime_error("AIC selection failed: no subset fit converged");

    if (!res.subset.empty()) {
        const ModelData sub = model.with_columns(res.subset);
        if (static_cast<Index>(res.subset.size()) == p && options.full_theta) {
            res.theta_selected = *options.full_theta;
        } else {
            RemlOptions ropt = options.fit;
            if (options.warm_start) ropt.starts.push_back(*options.warm_start);
            const auto est = fit_reml(sub, ropt);
            if (!est.converged) throw std::runtime_error("REML refit on the selected subset did not converge");
            res.theta_selected = est.theta_hat;
        }
        res.beta_selected = wls(sub, res.theta_selected).beta;
        res.C_selected = compute_C(sub, res.theta_selected);
    }
    return res;
}

bool SelectionSet::contains(const Vector& beta) const {
    if (beta.size() != p) throw InputError("selection set membership: dimension mismatch");
    std::vector<bool> in(static_cast<std::size_t>(p), false);
    for (Index j : subset) in[static_cast<std::size_t>(j)] = true;
    for (Index j = 0; j < p; ++j) {
        if (!in[static_cast<std::size_t>(j)] && beta(j) != 0.0) return false;
    }
    if (!ellipsoid) return true;
    return ellipsoid->contains(beta(subset));
}

SelectionSet aic_wls_set(const ModelData& model, const SelectionResult& selection, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("alpha must lie in (0, 1)");
    if (selection.p != model.p()) throw InputError("selection does not belong to this model");
    SelectionSet set;
    set.subset = selection.subset;
    set.p = selection.p;
    if (!selection.subset.empty()) {
        const int k = static_cast<int>(selection.subset.size());
        set.ellipsoid = make_ellipsoid(selection.beta_selected, selection.C_selected, chisq_quantile(1.0 - alpha, k),
                                       alpha, selection.n);
    }
    return set;
}

}  // namespace lmmlasso
