#include "support.hpp"

#include "lmmlasso/reml.hpp"

#include <doctest.h>

using namespace lmmlasso;
using namespace testing;

namespace {

ModelData two_component_model(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const std::vector<Index> clusters{0, 0, 0, 1, 1, 2, 2, 2, 2, 3, 3, 3, 4, 4, 4, 4, 4, 5, 5, 5};
    Matrix X = random_matrix(rng, 20, 3);
    X.col(0).setOnes();
    return random_intercept_data(rng, clusters, X, Vector{{1.0, -2.0, 0.5}}, 1.5, 1.0);
}

// y ~ N(0, sigma2 I) with an intercept: r = 1, H = I.
ModelData identity_model(std::uint64_t seed, Index n, Index p) {
    std::mt19937_64 rng(seed);
    Matrix X = random_matrix(rng, n, p);
    X.col(0).setOnes();
    return build_from_components(random_vector(rng, n, 2.0), X, {Matrix::Identity(n, n)});
}

}  // namespace

TEST_CASE("REML objective, score and information match dense formulas") {
    const ModelData model = two_component_model(11);
    for (const Vector& theta : {Vector{{1.0, 1.0}}, Vector{{0.2, 3.0}}, Vector{{4.0, 0.5}}}) {
        const DenseReml ref = dense_reml(model, theta);
        CHECK(reml_loglik(model, theta) == doctest::Approx(ref.loglik).epsilon(1e-10));
        CHECK(max_rel_err(reml_score(model, theta), ref.score) < 1e-9);
        const Matrix info = reml_fisher_info(model, theta);
        CHECK(max_rel_err(info, ref.info) < 1e-9);
        CHECK(info == info.transpose());
        Eigen::SelfAdjointEigenSolver<Matrix> es(info);
        CHECK(es.eigenvalues().minCoeff() >= -1e-8 * es.eigenvalues().cwiseAbs().maxCoeff());
    }
}

TEST_CASE("REML quantities are invariant to y -> y + X b") {
    const ModelData model = two_component_model(12);
    const ModelData shifted = model.with_response(model.y + model.X * Vector{{3.0, -1.0, 7.0}});
    const Vector theta{{0.7, 1.3}};
    CHECK(reml_loglik(shifted, theta) == doctest::Approx(reml_loglik(model, theta)).epsilon(1e-8));
    CHECK(max_rel_err(reml_score(shifted, theta), reml_score(model, theta)) < 1e-8);
    CHECK(max_rel_err(reml_fisher_info(shifted, theta), reml_fisher_info(model, theta)) < 1e-8);
}

TEST_CASE("score matches central finite differences of the objective") {
    const ModelData model = two_component_model(13);
    const Vector theta{{0.9, 1.4}};
    const Vector score = reml_score(model, theta);
    for (Index k = 0; k < 2; ++k) {
        const double h = 1e-6 * theta(k);
        Vector up = theta, down = theta;
        up(k) += h;
        down(k) -= h;
        const double fd = (reml_loglik(model, up) - reml_loglik(model, down)) / (2.0 * h);
        CHECK(rel_err(fd, score(k)) < 1e-5);
    }
}

TEST_CASE("identity covariance has a closed-form maximizer") {
    const ModelData model = identity_model(14, 30, 3);
    const Matrix& X = model.X;
    const Matrix M = Matrix::Identity(30, 30) - X * (X.transpose() * X).inverse() * X.transpose();
    const double closed = model.y.dot(M * model.y) / (30.0 - 3.0);

    CHECK(std::abs(reml_score(model, Vector{{closed}})(0)) < 1e-8);
    const ThetaEstimate est = fit_reml(model);
    CHECK(est.converged);
    CHECK(est.theta_hat(0) == doctest::Approx(closed).epsilon(1e-8));
    CHECK(est.score_norm < 1e-8);
}

TEST_CASE("information for the centering projection") {
    const ModelData model = identity_model(15, 25, 1);
    const double theta = 1.7;
    CHECK(reml_fisher_info(model, Vector{{theta}})(0, 0) ==
          doctest::Approx((25.0 - 1.0) / (2.0 * theta * theta)).epsilon(1e-12));
}

TEST_CASE("nu normalizers") {
    const ModelData id = identity_model(16, 36, 2);
    CHECK(nu(id, Vector{{2.0}})(0) == doctest::Approx(std::sqrt(36.0) / 2.0).epsilon(1e-12));

    const ModelData model = two_component_model(17);
    const Vector theta{{0.6, 1.1}};
    const Vector v = nu(model, theta);
    const Vector scaled = nu(model, 3.0 * theta);
    CHECK(max_rel_err(scaled, v / 3.0) < 1e-12);

    const Matrix Vi = dense_V(model, theta).inverse();
    const auto& ranks = model.structure->ranks;
    for (Index k = 0; k < 2; ++k) {
        const double ref = (Vi * model.component(k)).trace() / std::sqrt(static_cast<double>(ranks[static_cast<std::size_t>(k)]));
        CHECK(v(k) == doctest::Approx(ref).epsilon(1e-10));
        CHECK(v(k) > 0.0);
    }
}

TEST_CASE("nu on the two-per-cluster intercept model") {
    // V(1) blocks are 1 1^T + I on pairs; tr(V^-1 H_1) = m * 2/3.
    const Index m = 6;
    std::mt19937_64 rng(18);
    const ModelData model =
        build_random_intercept(random_vector(rng, 2 * m), Matrix::Ones(2 * m, 1), balanced_clusters(m, 2));
    const Vector v = nu(model, Vector::Ones(2));
    CHECK(v(0) == doctest::Approx(m * (2.0 / 3.0) / std::sqrt(double(m))).epsilon(1e-12));
    const Matrix Vi = dense_V(model, Vector::Ones(2)).inverse();
    CHECK(v(1) == doctest::Approx(Vi.trace() / std::sqrt(2.0 * m)).epsilon(1e-12));
}

TEST_CASE("balanced one-way layout reproduces the ANOVA estimates") {
    std::mt19937_64 rng(19);
    const Index m = 8, k = 6, n = m * k;
    int checked = 0;
    while (checked < 5) {
        const ModelData model =
            random_intercept_data(rng, balanced_clusters(m, k), Matrix::Ones(n, 1), Vector{{2.0}}, 1.0, 1.0);
        Vector means = Vector::Zero(m);
        for (Index i = 0; i < n; ++i) means(i / k) += model.y(i) / double(k);
        double ssw = 0.0;
        for (Index i = 0; i < n; ++i) ssw += std::pow(model.y(i) - means(i / k), 2);
        const double msw = ssw / double(n - m);
        const double msb = double(k) * (means.array() - means.mean()).square().sum() / double(m - 1);
        if (msb <= msw) continue;
        const ThetaEstimate est = fit_reml(model);
        REQUIRE(est.converged);
        CHECK(rel_err(est.theta_hat(1), msw) < 1e-6);
        CHECK(rel_err(est.theta_hat(0), (msb - msw) / double(k)) < 1e-6);
        ++checked;
    }
}

TEST_CASE("zero between-cluster variation hits the boundary") {
    std::mt19937_64 rng(20);
    const Index m = 6, k = 5, n = m * k;
    Vector y = random_vector(rng, n);
    for (Index c = 0; c < m; ++c) y.segment(c * k, k).array() -= y.segment(c * k, k).mean();
    const ModelData model = build_random_intercept(y, Matrix::Ones(n, 1), balanced_clusters(m, k));
    const ThetaEstimate est = fit_reml(model);
    REQUIRE(est.near_boundary.size() == 2);
    CHECK(est.near_boundary[0]);
    CHECK_FALSE(est.near_boundary[1]);
    CHECK((est.theta_hat.array() > 0.0).all());
}

TEST_CASE("starts and determinism") {
    const ModelData model = two_component_model(21);
    RemlOptions opt;
    opt.starts.push_back(Vector{{5.0, 5.0}});
    const auto starts = reml_starts(model, opt);
    REQUIRE(starts.size() == 3);
    CHECK(starts[0] == Vector::Ones(2));
    CHECK(starts[1](0) == doctest::Approx(0.1 * starts[1](1)));
    CHECK(starts[2] == Vector{{5.0, 5.0}});

    const ThetaEstimate a = fit_reml(model, opt);
    const ThetaEstimate b = fit_reml(model, opt);
    CHECK(a.theta_hat == b.theta_hat);
    CHECK(a.starts_tried == 3);
    if (a.converged) CHECK(a.score_norm < opt.tol);
}

TEST_CASE("expected score at the truth is zero") {
    std::mt19937_64 rng(22);
    const Index m = 10, k = 4, n = m * k;
    const Matrix X = random_matrix(rng, n, 2);
    const auto clusters = balanced_clusters(m, k);
    const Vector theta0{{2.0, 1.0}};
    const int reps = 2000;
    Matrix scores(reps, 2);
    for (int r = 0; r < reps; ++r) {
        const ModelData model = random_intercept_data(rng, clusters, X, Vector::Zero(2), std::sqrt(2.0), 1.0);
        scores.row(r) = reml_score(model, theta0).transpose();
    }
    const Vector mean = scores.colwise().mean();
    const Matrix centered = scores.rowwise() - mean.transpose();
    const Vector se = (centered.colwise().squaredNorm() / double(reps - 1) / double(reps)).cwiseSqrt();
    CHECK(std::abs(mean(0)) < 3.0 * se(0));
    CHECK(std::abs(mean(1)) < 3.0 * se(1));
}

TEST_CASE("information matches the average observed information") {
    std::mt19937_64 rng(23);
    const Index m = 12, k = 5, n = m * k;
    const Matrix X = random_matrix(rng, n, 2);
    const auto clusters = balanced_clusters(m, k);
    const Vector theta0{{1.5, 1.0}};
    Matrix avg = Matrix::Zero(2, 2);
    const int reps = 200;
    ModelData model;
    for (int r = 0; r < reps; ++r) {
        model = random_intercept_data(rng, clusters, X, Vector::Zero(2), std::sqrt(1.5), 1.0);
        for (Index j = 0; j < 2; ++j) {
            const double h = 1e-5 * theta0(j);
            Vector up = theta0, down = theta0;
            up(j) += h;
            down(j) -= h;
            avg.col(j) -= (reml_score(model, up) - reml_score(model, down)) / (2.0 * h) / double(reps);
        }
    }
    const Matrix info = reml_fisher_info(model, theta0);
    for (Index i = 0; i < 2; ++i) {
        for (Index j = 0; j < 2; ++j) CHECK(rel_err(avg(i, j), info(i, j)) < 0.05);
    }
}
