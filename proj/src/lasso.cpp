#include "lmmlasso/lasso.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lmmlasso {

namespace {

struct Whitened {
    Matrix gram;
    Vector xty;
    double yty = 0.0;
};

Whitened whitened_problem(const ModelData& model, const Vector& theta) {
    const CovOperator cov = assemble_cov(model, theta);
    const Matrix Xt = whiten(cov, model.X);
    const Vector yt = whiten(cov, model.y);
    Whitened w;
    w.gram = Xt.transpose() * Xt;
    w.gram = 0.5 * (w.gram + w.gram.transpose());
    w.xty = Xt.transpose() * yt;
    w.yty = yt.squaredNorm();
    return w;
}

void check_lambda(const Vector& lambda, Index p) {
    if (lambda.size() != p) throw InputError("lambda must have one entry per fixed effect");
    if (!lambda.allFinite() || (lambda.array() < 0.0).any()) throw InputError("lambda must be nonnegative");
}

// Solves the stationarity equations on the current sign pattern. The result is
// accepted only if it keeps the pattern and satisfies the inactive KKT bounds.
bool polish(const Matrix& gram, const Vector& xty, const Vector& lambda, Vector& beta) {
    std::vector<Index> active;
    for (Index j = 0; j < beta.size(); ++j) {
        if (beta(j) != 0.0) active.push_back(j);
    }
    Vector candidate = Vector::Zero(beta.size());
    if (!active.empty()) {
        const Matrix A = gram(active, active);
        Vector rhs(static_cast<Index>(active.size()));
        for (std::size_t a = 0; a < active.size(); ++a) {
            const Index j = active[a];
            rhs(static_cast<Index>(a)) = xty(j) - lambda(j) * (beta(j) > 0.0 ? 1.0 : -1.0);
        }
        const Eigen::LLT<Matrix> llt(A);
        if (llt.info() != Eigen::Success) return false;
        const Vector sol = llt.solve(rhs);
        for (std::size_t a = 0; a < active.size(); ++a) {
            const Index j = active[a];
            const double v = sol(static_cast<Index>(a));
            if (!(v * beta(j) > 0.0)) return false;
            candidate(j) = v;
        }
    }
    const Vector g = xty - gram * candidate;
    const double scale = 1.0 + xty.cwiseAbs().maxCoeff();
    for (Index j = 0; j < beta.size(); ++j) {
        if (candidate(j) == 0.0 && std::abs(g(j)) > lambda(j) + 1e-12 * scale) return false;
    }
    beta = candidate;
    return true;
}

}  // namespace

double lasso_objective(const Matrix& gram, const Vector& xty, double yty, const Vector& lambda,
                       const Vector& beta) {
    return yty - 2.0 * xty.dot(beta) + beta.dot(gram * beta) + 2.0 * lambda.dot(beta.cwiseAbs());
}

LassoSolution fit_lasso_gram(const Matrix& gram, const Vector& xty, double yty, const Vector& lambda,
                             const LassoOptions& options) {
    const Index p = gram.rows();
    if (gram.cols() != p || xty.size() != p) throw InputError("lasso: Gram/cross-product size mismatch");
    check_lambda(lambda, p);

    std::vector<Index> order = options.order;
    if (order.empty()) {
        order.resize(static_cast<std::size_t>(p));
        std::iota(order.begin(), order.end(), Index{0});
    } else {
        auto sorted = order;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < sorted.size(); ++i) {
            if (sorted[i] != static_cast<Index>(i) || sorted.size() != static_cast<std::size_t>(p)) {
                throw InputError("lasso: coordinate order must be a permutation of 0..p-1");
            }
        }
    }

    LassoSolution sol;
    sol.lambda = lambda;
    sol.beta = Vector::Zero(p);
    if (options.warm_start) {
        const Eigen::LLT<Matrix> llt(gram);
        if (llt.info() == Eigen::Success) sol.beta = llt.solve(xty);
    }
    Vector g = xty - gram * sol.beta;  // g = Xt^T (yt - Xt beta)

    for (int sweep = 0; sweep < options.max_sweeps; ++sweep) {
        double max_change = 0.0;
        for (Index j : order) {
            const double ajj = gram(j, j);
            const double old = sol.beta(j);
            const double z = g(j) + ajj * old;
            const double updated = soft_threshold(z, lambda(j)) / ajj;
            if (updated != old) {
                g.noalias() -= gram.col(j) * (updated - old);
                sol.beta(j) = updated;
                max_change = std::max(max_change, std::abs(updated - old));
            }
        }
        sol.iterations = sweep + 1;
        if (options.record_history) {
            sol.history.push_back(lasso_objective(gram, xty, yty, lambda, sol.beta));
        }
        if (max_change < options.tol * (1.0 + sol.beta.cwiseAbs().maxCoeff())) {
            sol.converged = true;
            break;
        }
    }

    if (sol.converged) {
        Vector polished = sol.beta;
        if (polish(gram, xty, lambda, polished) &&
            lasso_objective(gram, xty, yty, lambda, polished) <=
                lasso_objective(gram, xty, yty, lambda, sol.beta) + 1e-12 * (1.0 + std::abs(yty))) {
            sol.beta = polished;
        }
    }

    for (Index j = 0; j < p; ++j) {
        if (sol.beta(j) != 0.0) sol.active_set.push_back(j);
    }
    sol.objective = lasso_objective(gram, xty, yty, lambda, sol.beta);
    sol.kkt_residual = kkt_residual_gram(gram, xty, lambda, sol.beta);
    return sol;
}

LassoSolution fit_lasso(const ModelData& model, const Vector& theta_hat, const Vector& lambda,
                        const LassoOptions& options) {
    check_lambda(lambda, model.p());
    const auto w = whitened_problem(model, theta_hat);
    return fit_lasso_gram(w.gram, w.xty, w.yty, lambda, options);
}

WlsFit wls(const ModelData& model, const Vector& theta_hat) {
    const auto w = whitened_problem(model, theta_hat);
    const Eigen::LLT<Matrix> llt(w.gram);
    if (llt.info() != Eigen::Success) throw FactorizationError("X^T V^{-1} X is not positive definite", 0);
    WlsFit fit;
    fit.beta = llt.solve(w.xty);
    fit.cov_scaled = static_cast<double>(model.n()) * llt.solve(Matrix::Identity(model.p(), model.p()));
    fit.cov_scaled = 0.5 * (fit.cov_scaled + fit.cov_scaled.transpose());
    return fit;
}

double kkt_residual_gram(const Matrix& gram, const Vector& xty, const Vector& lambda, const Vector& beta) {
    const Vector g = xty - gram * beta;
    double worst = 0.0;
    for (Index j = 0; j < beta.size(); ++j) {
        const double v = beta(j) != 0.0 ? std::abs(g(j) - lambda(j) * (beta(j) > 0.0 ? 1.0 : -1.0))
                                        : std::max(std::abs(g(j)) - lambda(j), 0.0);
        worst = std::max(worst, v);
    }
    return worst;
}

double kkt_residual(const ModelData& model, const Vector& theta_hat, const Vector& lambda, const Vector& beta) {
    check_lambda(lambda, model.p());
    if (beta.size() != model.p()) throw InputError("beta has wrong length");
    const auto w = whitened_problem(model, theta_hat);
    return kkt_residual_gram(w.gram, w.xty, lambda, beta);
}

}  // namespace lmmlasso
