#pragma once

// Whitened evaluation of Gaussian (restricted) likelihoods for V(theta) = sum theta_k H_k.
//
// Everything is accumulated block by block from G_k = L^{-1} H_k L^{-T}, the
// whitened design Xt = L^{-1} X and an orthonormal basis Q = Xt R^{-1} of its
// column space, so no n x n inverse is ever formed.

#include "lmmlasso/model.hpp"

#include <vector>

namespace lmmlasso::detail {

enum class Likelihood { restricted, profile };

/// Per-block response and design, cached once per (model, X) pair.
struct BlockDesign {
    std::vector<Vector> y;
    std::vector<Matrix> X;
    Index n = 0;
    Index p = 0;
};

[[nodiscard]] BlockDesign block_design(const ModelData& model, const Matrix& X);
[[nodiscard]] BlockDesign block_design(const ModelData& model);

/// Log-likelihood only. Returns -inf if V(theta) cannot be factorized.
[[nodiscard]] double loglik(const ModelData& model, const BlockDesign& d, const Vector& theta,
                            Likelihood kind);

/// Trace quantities at theta. With M = I - Q Q^T and r = M L^{-1} y:
///   trace_G(k)     = tr(G_k) = tr(V^{-1} H_k)
///   trace_QGQ(k)   = tr(Q^T G_k Q)
///   quad_G(k)      = r^T G_k r
///   trace_GG(i,j)  = tr(G_i G_j)
///   trace_WW(i,j)  = tr(Q^T G_i G_j Q)
///   trace_SS(i,j)  = tr((Q^T G_i Q)(Q^T G_j Q))
struct TraceTerms {
    double loglik = 0.0;
    Vector trace_G;
    Vector trace_QGQ;
    Vector quad_G;
    Matrix trace_GG;
    Matrix trace_WW;
    Matrix trace_SS;
};

/// Throws FactorizationError on failure.
[[nodiscard]] TraceTerms trace_terms(const ModelData& model, const BlockDesign& d, const Vector& theta,
                                     Likelihood kind);

/// Score and expected information of the chosen likelihood.
[[nodiscard]] Vector score(const TraceTerms& t, Likelihood kind);
[[nodiscard]] Matrix information(const TraceTerms& t, Likelihood kind);

struct ScoringOptions {
    double tol = 1e-8;
    int max_iter = 100;
};

struct ScoringResult {
    Vector theta;
    double loglik = 0.0;
    Vector score;
    Matrix info;
    Vector nu;
    double score_norm = 0.0;
    bool converged = false;
    int iterations = 0;
};

/// Fisher scoring in log(theta) with step halving, from one start.
[[nodiscard]] ScoringResult fisher_scoring(const ModelData& model, const BlockDesign& d, Vector start,
                                           Likelihood kind, const ScoringOptions& opt);

}  // namespace lmmlasso::detail
