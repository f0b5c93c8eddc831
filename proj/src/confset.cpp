#include "lmmlasso/confset.hpp"

#include "lmmlasso/ncchisq.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <bit>
#include <cmath>
#include <cstdint>

namespace lmmlasso {

namespace {

Matrix sign_form(const Matrix& C, const Vector& lambda_diag) {
    if (C.rows() != C.cols() || C.rows() != lambda_diag.size()) {
        throw InputError("noncentrality: C and Lambda dimensions differ");
    }
    const Eigen::LLT<Matrix> llt(C);
    if (llt.info() != Eigen::Success) throw InputError("noncentrality: C is not positive definite");
    Matrix B = lambda_diag.asDiagonal() * llt.solve(Matrix(lambda_diag.asDiagonal()));
    return 0.5 * (B + B.transpose());
}

void check_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("alpha must lie in (0, 1)");
}

}  // namespace

double noncentrality_upper_bound(const Matrix& C, const Vector& lambda_diag) {
    const Matrix B = sign_form(C, lambda_diag);
    Eigen::SelfAdjointEigenSolver<Matrix> es(B, Eigen::EigenvaluesOnly);
    return static_cast<double>(B.rows()) * std::max(es.eigenvalues().maxCoeff(), 0.0);
}

Noncentrality max_noncentrality(const Matrix& C, const Vector& lambda_diag) {
    const Index p = C.rows();
    if (p < 1) throw InputError("noncentrality: empty dimension");
    if (p > kMaxExactSignDimension) {
        return {noncentrality_upper_bound(C, lambda_diag), std::nullopt, true};
    }
    const Matrix B = sign_form(C, lambda_diag);

    // d and -d give the same value, so d(0) = +1 is fixed.
    Vector d = Vector::Ones(p);
    Vector Bd = B * d;
    double value = d.dot(Bd);
    double best = value;
    Vector best_d = d;
    const std::uint64_t classes = std::uint64_t{1} << (p - 1);
    for (std::uint64_t i = 1; i < classes; ++i) {
        const Index j = static_cast<Index>(std::countr_zero(i)) + 1;
        value += -4.0 * d(j) * Bd(j) + 4.0 * B(j, j);
        Bd.noalias() -= 2.0 * d(j) * B.col(j);
        d(j) = -d(j);
        if (value > best) {
            best = value;
            best_d = d;
        }
    }
    return {best_d.dot(B * best_d), best_d, false};
}

double ConfidenceEllipsoid::statistic(const Vector& beta) const {
    if (beta.size() != center.size()) throw InputError("ellipsoid membership: dimension mismatch");
    const Vector diff = center - beta;
    return static_cast<double>(n) * (shape_factor.transpose().triangularView<Eigen::Upper>() * diff).squaredNorm();
}

bool ConfidenceEllipsoid::contains(const Vector& beta) const { return statistic(beta) <= radius; }

ConfidenceEllipsoid make_ellipsoid(Vector center, const Matrix& shape, double radius, double alpha, Index n) {
    if (shape.rows() != center.size() || shape.cols() != center.size()) {
        throw InputError("ellipsoid shape does not match center");
    }
    const Eigen::LLT<Matrix> llt(shape);
    if (llt.info() != Eigen::Success) throw InputError("ellipsoid shape is not positive definite");
    ConfidenceEllipsoid e;
    e.center = std::move(center);
    e.shape = shape;
    e.shape_factor = llt.matrixL();
    e.radius = radius;
    e.alpha = alpha;
    e.n = n;
    return e;
}

ConfidenceEllipsoid build_ellipsoid(const Matrix& C, Index n, const Vector& center, const Vector& lambda,
                                    double alpha) {
    check_alpha(alpha);
    if (lambda.size() != C.rows()) throw InputError("lambda must have one entry per fixed effect");
    const Vector lambda_diag = lambda / std::sqrt(static_cast<double>(n));
    const auto nc = max_noncentrality(C, lambda_diag);
    const int p = static_cast<int>(C.rows());
    auto e = make_ellipsoid(center, C, ncchisq_quantile(1.0 - alpha, p, nc.xi), alpha, n);
    e.d_star = nc.d;
    e.xi_star = nc.xi;
    e.conservative = nc.conservative;
    return e;
}

ConfidenceEllipsoid build_ellipsoid(const ModelData& model, const Vector& theta_hat, const LassoSolution& lasso,
                                    const Vector& lambda, double alpha) {
    return build_ellipsoid(compute_C(model, theta_hat), model.n(), lasso.beta, lambda, alpha);
}

Interval coordinate_interval(const Matrix& C_inv, Index n, double center, double lambda_j, Index j, double alpha) {
    check_alpha(alpha);
    if (j < 0 || j >= C_inv.rows()) throw InputError("coordinate index out of range");
    const double v = C_inv(j, j);
    const double nn = static_cast<double>(n);
    const double xi = lambda_j * lambda_j * v / nn;
    const double t = ncchisq_quantile(1.0 - alpha, 1, xi);
    const double half = std::sqrt(t * v / nn);
    return {center - half, center + half};
}

Interval coordinate_interval(const ModelData& model, const Vector& theta_hat, const LassoSolution& lasso,
                             const Vector& lambda, Index j, double alpha) {
    if (lambda.size() != model.p()) throw InputError("lambda must have one entry per fixed effect");
    if (j < 0 || j >= model.p()) throw InputError("coordinate index out of range");
    const Matrix C = compute_C(model, theta_hat);
    const Matrix C_inv = C.llt().solve(Matrix::Identity(C.rows(), C.cols()));
    return coordinate_interval(C_inv, model.n(), lasso.beta(j), lambda(j), j, alpha);
}

}  // namespace lmmlasso
