#include "likelihood.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>
#include <numbers>

namespace lmmlasso::detail {

namespace {

struct Factorized {
    std::vector<Matrix> L;
    std::vector<Vector> yt;
    std::vector<Matrix> Xt;
    double logdet_V = 0.0;
    double logdet_A = 0.0;
    double yy = 0.0;
    Matrix A;
    Vector c;
    Eigen::LLT<Matrix> A_llt;
};

Matrix block_covariance(const CovarianceStructure& s, const Vector& theta, std::size_t b) {
    Matrix V = theta(0) * s.components[0][b];
    for (Index k = 1; k < s.r(); ++k) V += theta(k) * s.components[static_cast<std::size_t>(k)][b];
    return V;
}

Index twin_of(const CovarianceStructure& s, std::size_t b) {
    return s.twin.empty() ? static_cast<Index>(b) : s.twin[b];
}

// Returns false if any factorization fails. Blocks with a twin reuse its factor.
bool factorize(const ModelData& model, const BlockDesign& d, const Vector& theta, bool keep,
               Factorized& f) {
    const auto& s = *model.structure;
    if (!theta.allFinite() || (theta.array() <= 0.0).any()) return false;
    f.A = Matrix::Zero(d.p, d.p);
    f.c = Vector::Zero(d.p);
    f.logdet_V = 0.0;
    f.yy = 0.0;
    f.L.assign(s.blocks.size(), Matrix());
    std::vector<double> logdets(s.blocks.size(), 0.0);
    if (keep) {
        f.yt.resize(s.blocks.size());
        f.Xt.resize(s.blocks.size());
    }
    for (std::size_t b = 0; b < s.blocks.size(); ++b) {
        const auto t = static_cast<std::size_t>(twin_of(s, b));
        if (t == b) {
            Eigen::LLT<Matrix> llt(block_covariance(s, theta, b));
            if (llt.info() != Eigen::Success) return false;
            const auto diag = llt.matrixLLT().diagonal().array();
            if ((diag <= 0.0).any()) return false;
            logdets[b] = 2.0 * diag.log().sum();
            f.L[b] = llt.matrixL();
        }
        const auto L = f.L[t].triangularView<Eigen::Lower>();
        Vector yt = L.solve(d.y[b]);
        Matrix Xt = L.solve(d.X[b]);
        f.logdet_V += logdets[t];
        f.A.noalias() += Xt.transpose() * Xt;
        f.c.noalias() += Xt.transpose() * yt;
        f.yy += yt.squaredNorm();
        if (keep) {
            f.yt[b] = std::move(yt);
            f.Xt[b] = std::move(Xt);
        }
    }
    f.logdet_A = 0.0;
    if (d.p > 0) {
        f.A_llt.compute(f.A);
        if (f.A_llt.info() != Eigen::Success) return false;
        f.logdet_A = 2.0 * f.A_llt.matrixLLT().diagonal().array().log().sum();
    }
    return std::isfinite(f.logdet_V) && std::isfinite(f.logdet_A);
}

double quadratic(const Factorized& f, Index p) {
    if (p == 0) return f.yy;
    const Vector z = f.A_llt.matrixL().solve(f.c);
    return std::max(f.yy - z.squaredNorm(), 0.0);
}

double combine(const Factorized& f, Index n, Index p, Likelihood kind) {
    const double quad = quadratic(f, p);
    if (kind == Likelihood::restricted) return -0.5 * (f.logdet_V + f.logdet_A + quad);
    return -0.5 * (f.logdet_V + quad + static_cast<double>(n) * std::log(2.0 * std::numbers::pi));
}

}  // namespace

BlockDesign block_design(const ModelData& model, const Matrix& X) {
    const auto& s = *model.structure;
    if (X.rows() != model.n()) throw InputError("design rows do not match n");
    BlockDesign d;
    d.n = model.n();
    d.p = X.cols();
    for (const auto& block : s.blocks) {
        d.y.emplace_back(model.y(block));
        d.X.emplace_back(X(block, Eigen::all));
    }
    return d;
}

BlockDesign block_design(const ModelData& model) { return block_design(model, model.X); }

double loglik(const ModelData& model, const BlockDesign& d, const Vector& theta, Likelihood kind) {
    Factorized f;
    if (!factorize(model, d, theta, false, f)) return -std::numeric_limits<double>::infinity();
    return combine(f, d.n, d.p, kind);
}

TraceTerms trace_terms(const ModelData& model, const BlockDesign& d, const Vector& theta,
                       Likelihood kind) {
    const auto& s = *model.structure;
    Factorized f;
    if (!factorize(model, d, theta, true, f)) {
        // Re-run the public factorization to obtain a precise diagnostic.
        (void)assemble_cov(model, theta);
        throw FactorizationError("X^T V^{-1} X is not positive definite", 0);
    }
    const Index r = s.r();
    const Index p = d.p;

    TraceTerms t;
    t.loglik = combine(f, d.n, p, kind);
    t.trace_G = Vector::Zero(r);
    t.trace_QGQ = Vector::Zero(r);
    t.quad_G = Vector::Zero(r);
    t.trace_GG = Matrix::Zero(r, r);
    t.trace_WW = Matrix::Zero(r, r);
    t.trace_SS = Matrix::Zero(r, r);

    Vector beta = Vector::Zero(p);
    Matrix LAinvT;  // R^{-1} with A = R^T R, so Q = Xt R^{-1}
    if (p > 0) {
        beta = f.A_llt.solve(f.c);
        LAinvT = f.A_llt.matrixU().solve(Matrix::Identity(p, p));
    }

    std::vector<Matrix> S(static_cast<std::size_t>(r), Matrix::Zero(p, p));
    // G_k per representative block, then shared by its twins.
    std::vector<std::vector<Matrix>> Gs(s.blocks.size());
    std::vector<Matrix> W(static_cast<std::size_t>(r));
    for (std::size_t b = 0; b < s.blocks.size(); ++b) {
        const auto tb = static_cast<std::size_t>(twin_of(s, b));
        if (tb == b) {
            const auto L = f.L[b].triangularView<Eigen::Lower>();
            for (Index k = 0; k < r; ++k) {
                Matrix T = L.solve(s.components[static_cast<std::size_t>(k)][b]);
                Gs[b].push_back(L.solve(T.transpose()));
            }
        }
        const auto& G = Gs[tb];
        const Vector resid = p > 0 ? Vector(f.yt[b] - f.Xt[b] * beta) : f.yt[b];
        const Matrix Q = p > 0 ? Matrix(f.Xt[b] * LAinvT) : Matrix(f.Xt[b].rows(), 0);
        for (Index k = 0; k < r; ++k) {
            const auto kk = static_cast<std::size_t>(k);
            t.trace_G(k) += G[kk].trace();
            t.quad_G(k) += resid.dot(G[kk] * resid);
            if (p > 0) {
                W[kk] = G[kk] * Q;
                S[kk].noalias() += Q.transpose() * W[kk];
            }
        }
        for (Index i = 0; i < r; ++i) {
            for (Index j = 0; j <= i; ++j) {
                const auto ii = static_cast<std::size_t>(i);
                const auto jj = static_cast<std::size_t>(j);
                t.trace_GG(i, j) += G[ii].cwiseProduct(G[jj]).sum();
                if (p > 0) t.trace_WW(i, j) += W[ii].cwiseProduct(W[jj]).sum();
            }
        }
    }
    for (Index i = 0; i < r; ++i) {
        t.trace_QGQ(i) = S[static_cast<std::size_t>(i)].trace();
        for (Index j = 0; j <= i; ++j) {
            t.trace_SS(i, j) =
                S[static_cast<std::size_t>(i)].cwiseProduct(S[static_cast<std::size_t>(j)].transpose()).sum();
            t.trace_GG(j, i) = t.trace_GG(i, j);
            t.trace_WW(j, i) = t.trace_WW(i, j);
            t.trace_SS(j, i) = t.trace_SS(i, j);
        }
    }
    return t;
}

Vector score(const TraceTerms& t, Likelihood kind) {
    if (kind == Likelihood::restricted) return 0.5 * (t.quad_G - (t.trace_G - t.trace_QGQ));
    return 0.5 * (t.quad_G - t.trace_G);
}

Matrix information(const TraceTerms& t, Likelihood kind) {
    if (kind == Likelihood::restricted) return 0.5 * (t.trace_GG - 2.0 * t.trace_WW + t.trace_SS);
    return 0.5 * t.trace_GG;
}

ScoringResult fisher_scoring(const ModelData& model, const BlockDesign& d, Vector start, Likelihood kind,
                             const ScoringOptions& opt) {
    const auto& ranks = model.structure->ranks;
    const Index r = model.r();
    Vector rank_sqrt(r);
    for (Index k = 0; k < r; ++k) rank_sqrt(k) = std::sqrt(static_cast<double>(ranks[static_cast<std::size_t>(k)]));

    ScoringResult res;
    res.theta = std::move(start);
    Vector phi = res.theta.array().log().matrix();

    TraceTerms t;
    try {
        t = trace_terms(model, d, res.theta, kind);
    } catch (const FactorizationError&) {
        res.loglik = -std::numeric_limits<double>::infinity();
        res.score = Vector::Constant(r, std::numeric_limits<double>::quiet_NaN());
        res.info = Matrix::Zero(r, r);
        res.nu = Vector::Zero(r);
        res.score_norm = std::numeric_limits<double>::infinity();
        return res;
    }

    auto summarize = [&](const TraceTerms& terms) {
        res.loglik = terms.loglik;
        res.score = score(terms, kind);
        res.info = information(terms, kind);
        res.nu = terms.trace_G.cwiseQuotient(rank_sqrt);
        res.score_norm = res.score.cwiseAbs().cwiseQuotient(res.nu).maxCoeff();
    };
    summarize(t);

    for (int iter = 0; iter < opt.max_iter; ++iter) {
        if (res.score_norm < opt.tol) break;
        const Vector g = res.theta.cwiseProduct(res.score);
        const Matrix I_phi = res.theta.asDiagonal() * res.info * res.theta.asDiagonal();
        Vector delta = I_phi.ldlt().solve(g);
        if (!delta.allFinite()) delta = g.cwiseQuotient(I_phi.diagonal().cwiseMax(1e-300));

        // Near the optimum the predicted gain drops below the roundoff in l, so a
        // step that loses at most `slack` is kept if it shrinks the score.
        const double slack = 1e-11 * (1.0 + std::abs(res.loglik));
        double step = 1.0;
        bool accepted = false;
        Vector phi_new;
        TraceTerms cand;
        for (int h = 0; h < 60; ++h) {
            phi_new = (phi + step * delta).cwiseMax(-700.0).cwiseMin(700.0);
            try {
                cand = trace_terms(model, d, phi_new.array().exp().matrix(), kind);
            } catch (const FactorizationError&) {
                step *= 0.5;
                continue;
            }
            if (std::isfinite(cand.loglik)) {
                if (cand.loglik >= res.loglik) {
                    accepted = true;
                    break;
                }
                if (cand.loglik >= res.loglik - slack) {
                    const Vector sc = score(cand, kind);
                    const Vector nu_c = cand.trace_G.cwiseQuotient(rank_sqrt);
                    if (sc.cwiseAbs().cwiseQuotient(nu_c).maxCoeff() < res.score_norm) {
                        accepted = true;
                        break;
                    }
                }
            }
            step *= 0.5;
        }
        if (!accepted) break;
        const double moved = (phi_new - phi).cwiseAbs().maxCoeff();
        phi = phi_new;
        res.theta = phi.array().exp().matrix();
        summarize(cand);
        res.iterations = iter + 1;
        if (moved < 1e-12) break;
    }
    res.converged = res.score_norm < opt.tol;
    return res;
}

}  // namespace lmmlasso::detail
