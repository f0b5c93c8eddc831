#pragma once

// Dense reference computations and data generators shared by the tests. The
// oracles use explicit n x n inverses on purpose: they are slow and obvious.

#include "lmmlasso/model.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <vector>

namespace testing {

using lmmlasso::Index;
using lmmlasso::Matrix;
using lmmlasso::ModelData;
using lmmlasso::Vector;

inline Matrix random_matrix(std::mt19937_64& rng, Index rows, Index cols, double sd = 1.0) {
    std::normal_distribution<double> g(0.0, sd);
    Matrix M(rows, cols);
    for (Index j = 0; j < cols; ++j) {
        for (Index i = 0; i < rows; ++i) M(i, j) = g(rng);
    }
    return M;
}

inline Vector random_vector(std::mt19937_64& rng, Index n, double sd = 1.0) {
    return random_matrix(rng, n, 1, sd).col(0);
}

inline Matrix random_spd(std::mt19937_64& rng, Index p, double ridge = 0.5) {
    const Matrix A = random_matrix(rng, p, p);
    return A * A.transpose() / static_cast<double>(p) + ridge * Matrix::Identity(p, p);
}

inline std::vector<Index> balanced_clusters(Index m, Index size) {
    std::vector<Index> c;
    for (Index i = 0; i < m; ++i) c.insert(c.end(), static_cast<std::size_t>(size), i);
    return c;
}

/// Random-intercept data y = X beta + Z v + u, one cluster label per row.
inline ModelData random_intercept_data(std::mt19937_64& rng, const std::vector<Index>& cluster_of, const Matrix& X,
                                       const Vector& beta, double sigma_v, double sigma_u) {
    const Index n = X.rows();
    Index m = 0;
    for (Index c : cluster_of) m = std::max(m, c + 1);
    const Vector v = random_vector(rng, m, sigma_v);
    Vector y = X * beta + random_vector(rng, n, sigma_u);
    for (Index i = 0; i < n; ++i) y(i) += v(cluster_of[static_cast<std::size_t>(i)]);
    return lmmlasso::build_random_intercept(y, X, cluster_of);
}

struct DenseReml {
    double loglik;
    Vector score;
    Matrix info;
};

inline Matrix dense_V(const ModelData& model, const Vector& theta) {
    Matrix V = Matrix::Zero(model.n(), model.n());
    for (Index k = 0; k < model.r(); ++k) V += theta(k) * model.component(k);
    return V;
}

/// P = V^-1 - V^-1 X (X^T V^-1 X)^-1 X^T V^-1, scaled by `a` on the correction.
inline Matrix dense_P(const Matrix& V, const Matrix& X, double a = 1.0) {
    const Matrix Vi = V.inverse();
    if (X.cols() == 0) return Vi;
    return Vi - a * Vi * X * (X.transpose() * Vi * X).inverse() * X.transpose() * Vi;
}

inline DenseReml dense_reml(const ModelData& model, const Vector& theta) {
    const Matrix V = dense_V(model, theta);
    const Matrix Vi = V.inverse();
    const Matrix P = dense_P(V, model.X);
    const Matrix A = model.X.transpose() * Vi * model.X;
    DenseReml out;
    out.loglik = -0.5 * (std::log(V.determinant()) + std::log(A.determinant()) + model.y.dot(P * model.y));
    const Index r = model.r();
    out.score.resize(r);
    out.info.resize(r, r);
    std::vector<Matrix> PH;
    for (Index k = 0; k < r; ++k) PH.push_back(P * model.component(k));
    for (Index i = 0; i < r; ++i) {
        out.score(i) = 0.5 * model.y.dot(PH[static_cast<std::size_t>(i)] * P * model.y) -
                       0.5 * PH[static_cast<std::size_t>(i)].trace();
        for (Index j = 0; j < r; ++j) {
            out.info(i, j) = 0.5 * (PH[static_cast<std::size_t>(i)] * PH[static_cast<std::size_t>(j)]).trace();
        }
    }
    return out;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

inline double max_rel_err(const Matrix& a, const Matrix& b) {
    return (a - b).cwiseAbs().maxCoeff() / std::max(b.cwiseAbs().maxCoeff(), 1e-300);
}

}  // namespace testing
