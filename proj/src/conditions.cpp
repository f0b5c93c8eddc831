#include "lmmlasso/conditions.hpp"

#include "likelihood.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

namespace lmmlasso {

OmegaBounds omega_bounds(const ModelData& model) {
    const auto& s = *model.structure;
    const Index r = s.r();
    const Vector ones = Vector::Ones(r);
    const CovOperator cov = assemble_cov(model, ones);

    OmegaBounds out{Vector::Zero(r), Vector::Zero(r)};
    for (Index k = 0; k < r; ++k) {
        std::vector<double> eigs;
        for (std::size_t b = 0; b < s.blocks.size(); ++b) {
            const auto L = cov.factors()[b].triangularView<Eigen::Lower>();
            const Matrix T = L.solve(s.components[static_cast<std::size_t>(k)][b]);
            const Matrix G = L.solve(T.transpose());
            out.ratio(k) += G.trace();
            Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (G + G.transpose()), Eigen::EigenvaluesOnly);
            for (Index i = 0; i < es.eigenvalues().size(); ++i) eigs.push_back(es.eigenvalues()(i));
        }
        out.ratio(k) /= static_cast<double>(s.ranks[static_cast<std::size_t>(k)]);
        const auto top = std::min<std::size_t>(static_cast<std::size_t>(model.p()), eigs.size());
        std::partial_sort(eigs.begin(), eigs.begin() + static_cast<std::ptrdiff_t>(top), eigs.end(),
                          std::greater<>());
        for (std::size_t i = 0; i < top; ++i) out.eigsum(k) += eigs[i];
    }
    return out;
}

KMatrix K_matrix(const ModelData& model, double c) {
    if (!(c >= 1.0)) throw InputError("K_matrix requires c >= 1");
    const Index r = model.r();
    const auto t = detail::trace_terms(model, detail::block_design(model), Vector::Ones(r),
                                       detail::Likelihood::restricted);
    KMatrix out;
    out.K = t.trace_GG - 2.0 * c * t.trace_WW + c * c * t.trace_SS;
    const auto& ranks = model.structure->ranks;
    for (Index i = 0; i < r; ++i) {
        for (Index j = 0; j < r; ++j) {
            out.K(i, j) /= std::sqrt(static_cast<double>(ranks[static_cast<std::size_t>(i)]) *
                                     static_cast<double>(ranks[static_cast<std::size_t>(j)]));
        }
    }
    out.K = 0.5 * (out.K + out.K.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(out.K, Eigen::EigenvaluesOnly);
    out.eta_min = es.eigenvalues()(0);
    return out;
}

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

// Larger ratios mean a collapsed fit, not a meaningful constant.
constexpr double kMaxDefaultC = 1e6;

}  // namespace

ConditionReport check_all(const ModelData& model, const Vector& theta_hat,
                          const ConditionThresholds& thresholds) {
    ConditionReport rep;
    rep.ratio_c = theta_hat.maxCoeff() / theta_hat.minCoeff();
    rep.c_used = thresholds.c.value_or(std::max(1.0, rep.ratio_c));
    if (!thresholds.c && !(rep.ratio_c <= kMaxDefaultC)) {
        rep.c_used = 1.0;
        rep.warnings.push_back("theta_hat is degenerate (max/min ratio " + fmt(rep.ratio_c) + "); K evaluated at c = 1");
    }

    rep.rank_X_ok = model.p() < model.n() && dependent_columns(model.X).empty();
    if (!rep.rank_X_ok) rep.warnings.push_back("design matrix fails rk(X) = p < n");

    const auto& s = *model.structure;
    rep.psd_ok = true;
    for (Index k = 0; k < s.r(); ++k) {
        double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
        for (const auto& block : s.components[static_cast<std::size_t>(k)]) {
            Eigen::SelfAdjointEigenSolver<Matrix> es(block, Eigen::EigenvaluesOnly);
            lo = std::min(lo, es.eigenvalues()(0));
            hi = std::max(hi, es.eigenvalues().cwiseAbs().maxCoeff());
        }
        const bool last = k + 1 == s.r();
        if (last ? !(lo > 1e-10 * hi) : lo < -1e-8 * hi) rep.psd_ok = false;
    }
    if (!rep.psd_ok) rep.warnings.push_back("variance components are not PSD with a positive definite last component");

    if (thresholds.max_ratio && rep.ratio_c > *thresholds.max_ratio) {
        rep.ratio_ok = false;
        rep.warnings.push_back("max(theta)/min(theta) exceeds the configured bound");
    }

    rep.omega = omega_bounds(model);
    const auto K = K_matrix(model, rep.c_used);
    rep.K = K.K;
    rep.eta_min_K = K.eta_min;
    if (!(rep.eta_min_K >= thresholds.min_eta_K)) {
        rep.K_ok = false;
        rep.warnings.push_back("smallest eigenvalue of K is near zero; variance components may not be identifiable");
    }

    if (model.kind == CovarianceTemplate::random_intercept && theta_hat.size() == 2) {
        for (const auto& block : s.blocks) {
            const double ni = static_cast<double>(block.size());
            rep.intraclass.push_back(theta_hat(0) / (theta_hat(0) + theta_hat(1) / ni));
        }
    }
    return rep;
}

}  // namespace lmmlasso
