#include "support.hpp"

#include "lmmlasso/lasso.hpp"

#include <Eigen/QR>
#include <doctest.h>

using namespace lmmlasso;
using namespace testing;

namespace {

struct Instance {
    ModelData model;
    Vector theta;
};

Instance random_instance(std::uint64_t seed, Index p) {
    std::mt19937_64 rng(seed);
    const Index m = 10, k = 6;
    Vector beta = random_vector(rng, p, 2.0);
    for (Index j = 0; j < p; j += 2) beta(j) = 0.0;
    Instance out{random_intercept_data(rng, balanced_clusters(m, k), random_matrix(rng, m * k, p), beta, 1.0, 1.5),
                 Vector{{1.0, 2.25}}};
    return out;
}

// y = Q a + e with Q^T Q = I and V = I.
ModelData orthonormal_model(std::mt19937_64& rng, Index n, Index p) {
    const Matrix Q = Eigen::HouseholderQR<Matrix>(random_matrix(rng, n, p)).householderQ() * Matrix::Identity(n, p);
    const Vector y = Q * random_vector(rng, p, 3.0) + random_vector(rng, n, 0.5);
    return build_from_components(y, Q, {Matrix::Identity(n, n)});
}

}  // namespace

TEST_CASE("soft thresholding") {
    CHECK(soft_threshold(3.0, 1.0) == 2.0);
    CHECK(soft_threshold(-3.0, 1.0) == -2.0);
    CHECK(soft_threshold(0.5, 1.0) == 0.0);
    const Eigen::ArrayXd z{{-2.0, 0.2, 4.0}};
    const Eigen::ArrayXd t{{1.0, 1.0, 0.5}};
    const Eigen::ArrayXd s = soft_threshold(z, t);
    CHECK(s(0) == -1.0);
    CHECK(s(1) == 0.0);
    CHECK(s(2) == 3.5);
}

TEST_CASE("zero penalty reproduces weighted least squares") {
    const Instance in = random_instance(1, 5);
    const LassoSolution sol = fit_lasso(in.model, in.theta, Vector::Zero(5));
    const WlsFit w = wls(in.model, in.theta);
    CHECK((sol.beta - w.beta).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(kkt_residual(in.model, in.theta, Vector::Zero(5), w.beta) < 1e-8);
}

TEST_CASE("orthonormal design reduces to soft thresholding") {
    std::mt19937_64 rng(2);
    const ModelData model = orthonormal_model(rng, 40, 6);
    const Vector theta = Vector::Ones(1);
    const Vector z = model.X.transpose() * model.y;
    const Vector lambda{{0.5, 1.0, 2.0, 0.1, 5.0, 3.0}};
    const LassoSolution sol = fit_lasso(model, theta, lambda);
    const Vector expect = soft_threshold(z.array(), lambda.array()).matrix();
    CHECK((sol.beta - expect).cwiseAbs().maxCoeff() < 1e-10);

    SUBCASE("penalties above |z_j| zero everything") {
        const LassoSolution zero = fit_lasso(model, theta, (z.cwiseAbs().array() + 0.1).matrix());
        CHECK(zero.beta == Vector::Zero(6));
        CHECK(zero.active_set.empty());
        CHECK(kkt_residual(model, theta, (z.cwiseAbs().array() + 0.1).matrix(), Vector::Zero(6)) == 0.0);
    }
    SUBCASE("active sets shrink as the penalty grows") {
        std::vector<Index> previous = sol.active_set;
        for (double s : {1.5, 2.0, 4.0, 10.0}) {
            const LassoSolution scaled = fit_lasso(model, theta, s * lambda);
            for (Index j : scaled.active_set) {
                CHECK(std::find(previous.begin(), previous.end(), j) != previous.end());
            }
            previous = scaled.active_set;
        }
    }
}

TEST_CASE("KKT certificate on random instances") {
    for (std::uint64_t seed = 10; seed < 40; ++seed) {
        const Index p = 1 + static_cast<Index>(seed % 10);
        const Instance in = random_instance(seed, p);
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(0.0, 15.0);
        Vector lambda(p);
        for (Index j = 0; j < p; ++j) lambda(j) = u(rng);
        const LassoSolution sol = fit_lasso(in.model, in.theta, lambda);
        CAPTURE(seed);
        CHECK(sol.converged);
        CHECK(sol.kkt_residual < 1e-8);
        CHECK(sol.kkt_residual == kkt_residual(in.model, in.theta, lambda, sol.beta));
        for (Index j = 0; j < p; ++j) {
            const bool listed = std::find(sol.active_set.begin(), sol.active_set.end(), j) != sol.active_set.end();
            CHECK(listed == (sol.beta(j) != 0.0));
        }
    }
}

TEST_CASE("objective decreases across sweeps and beats the WLS point") {
    const Instance in = random_instance(3, 6);
    const Vector lambda = Vector::Constant(6, 8.0);
    LassoOptions opt;
    opt.record_history = true;
    opt.warm_start = false;
    const LassoSolution sol = fit_lasso(in.model, in.theta, lambda, opt);
    for (std::size_t i = 1; i < sol.history.size(); ++i) CHECK(sol.history[i] <= sol.history[i - 1] + 1e-9);

    const CovOperator cov = assemble_cov(in.model, in.theta);
    const Matrix Xt = whiten(cov, in.model.X);
    const Vector yt = whiten(cov, in.model.y);
    const Vector bw = wls(in.model, in.theta).beta;
    const double at_wls = (yt - Xt * bw).squaredNorm() + 2.0 * lambda.dot(bw.cwiseAbs());
    CHECK(sol.objective <= at_wls + 1e-9);
    CHECK(sol.objective == doctest::Approx((yt - Xt * sol.beta).squaredNorm() + 2.0 * lambda.dot(sol.beta.cwiseAbs()))
                               .epsilon(1e-10));
}

TEST_CASE("solution does not depend on the sweep order") {
    const Instance in = random_instance(4, 7);
    const Vector lambda = Vector::LinSpaced(7, 1.0, 12.0);
    const LassoSolution forward = fit_lasso(in.model, in.theta, lambda);
    LassoOptions opt;
    opt.order = {6, 5, 4, 3, 2, 1, 0};
    const LassoSolution backward = fit_lasso(in.model, in.theta, lambda, opt);
    CHECK((forward.beta - backward.beta).cwiseAbs().maxCoeff() < 1e-9);
    opt.order = {0, 0, 1, 2, 3, 4, 5};
    CHECK_THROWS_AS((void)fit_lasso(in.model, in.theta, lambda, opt), InputError);
}

TEST_CASE("perturbing an active coordinate raises the KKT residual") {
    const Instance in = random_instance(5, 4);
    const Vector lambda = Vector::Constant(4, 3.0);
    const LassoSolution sol = fit_lasso(in.model, in.theta, lambda);
    REQUIRE_FALSE(sol.active_set.empty());
    Vector moved = sol.beta;
    moved(sol.active_set.front()) += 1e-3;
    CHECK(kkt_residual(in.model, in.theta, lambda, moved) > sol.kkt_residual);
}

TEST_CASE("sweep limit is reported") {
    const Instance in = random_instance(6, 5);
    LassoOptions opt;
    opt.max_sweeps = 1;
    opt.warm_start = false;
    opt.tol = 0.0;
    const LassoSolution sol = fit_lasso(in.model, in.theta, Vector::Constant(5, 2.0), opt);
    CHECK_FALSE(sol.converged);
    CHECK(sol.iterations == 1);
    CHECK_THROWS_AS((void)fit_lasso(in.model, in.theta, Vector::Constant(5, -1.0)), InputError);
}

TEST_CASE("weighted least squares") {
    std::mt19937_64 rng(7);
    SUBCASE("identity covariance is ordinary least squares") {
        const ModelData model = build_from_components(random_vector(rng, 30), random_matrix(rng, 30, 4),
                                                      {Matrix::Identity(30, 30)});
        const Vector ols = (model.X.transpose() * model.X).ldlt().solve(model.X.transpose() * model.y);
        CHECK((wls(model, Vector::Ones(1)).beta - ols).cwiseAbs().maxCoeff() < 1e-10);
    }
    SUBCASE("normal equations and dense inverse") {
        const Instance in = random_instance(8, 3);
        const WlsFit fit = wls(in.model, in.theta);
        const Matrix Vi = dense_V(in.model, in.theta).inverse();
        const Vector g = in.model.X.transpose() * Vi * (in.model.y - in.model.X * fit.beta);
        CHECK(g.norm() < 1e-8 * (in.model.X.transpose() * Vi * in.model.y).norm());
        const Matrix A = in.model.X.transpose() * Vi * in.model.X;
        CHECK((fit.beta - A.inverse() * in.model.X.transpose() * Vi * in.model.y).cwiseAbs().maxCoeff() < 1e-9);
        CHECK(max_rel_err(fit.cov_scaled, double(in.model.n()) * A.inverse()) < 1e-9);
    }
}

TEST_CASE("limiting minimizers") {
    std::mt19937_64 rng(9);
    const Matrix C = random_spd(rng, 3);
    const Vector w = random_vector(rng, 3);
    const Vector d{{1.0, -1.0, 1.0}};
    CHECK((u_d(C, w, Vector::Zero(3), d) - C.ldlt().solve(w)).norm() < 1e-12);
    CHECK((u_d(Matrix::Identity(3, 3), Vector::Zero(3), Vector::Ones(3), Vector::Ones(3)) + Vector::Ones(3)).norm() ==
          0.0);
}
