#include "support.hpp"

#include "lmmlasso/conditions.hpp"

#include <doctest.h>

using namespace lmmlasso;
using namespace testing;

namespace {

ModelData pairs_model(Index m) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(m));
    return build_random_intercept(random_vector(rng, 2 * m), Matrix::Ones(2 * m, 1), balanced_clusters(m, 2));
}

Matrix example_K(Index m) {
    const double f = double(m - 1) / double(m);
    return Matrix{{4.0 * f, std::sqrt(2.0) * f}, {std::sqrt(2.0) * f, double(10 * m - 1) / double(2 * m)}} / 9.0;
}

// K from an explicit penalized projector.
Matrix dense_K(const ModelData& model, double c) {
    const Index r = model.r();
    const Matrix P = dense_P(dense_V(model, Vector::Ones(r)), model.X, c);
    Matrix K(r, r);
    const auto& rk = model.structure->ranks;
    for (Index i = 0; i < r; ++i) {
        for (Index j = 0; j < r; ++j) {
            K(i, j) = (P * model.component(i) * P * model.component(j)).trace() /
                      std::sqrt(double(rk[static_cast<std::size_t>(i)] * rk[static_cast<std::size_t>(j)]));
        }
    }
    return K;
}

}  // namespace

TEST_CASE("two observations per cluster: closed forms") {
    for (Index m : {2, 5, 10, 100}) {
        CAPTURE(m);
        const ModelData model = pairs_model(m);
        const OmegaBounds w = omega_bounds(model);
        for (Index k = 0; k < 2; ++k) {
            CHECK(w.ratio(k) >= 1.0 / 3.0 - 1e-12);
            CHECK(w.ratio(k) <= 2.0 / 3.0 + 1e-12);
        }
        const KMatrix K = K_matrix(model, 1.0);
        CHECK((K.K - example_K(m)).cwiseAbs().maxCoeff() < 1e-10);
        CHECK(K.eta_min >= 0.2 - 1e-10);
    }
}

TEST_CASE("single identity component") {
    std::mt19937_64 rng(1);
    const ModelData model = build_from_components(random_vector(rng, 12), random_matrix(rng, 12, 3),
                                                  {Matrix::Identity(12, 12)});
    const OmegaBounds w = omega_bounds(model);
    CHECK(w.ratio(0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(w.eigsum(0) == doctest::Approx(3.0).epsilon(1e-14));
}

TEST_CASE("omega bounds agree with a dense inverse") {
    std::mt19937_64 rng(2);
    const std::vector<Index> clusters{0, 1, 1, 2, 2, 2, 0, 3, 3, 3, 3, 1};
    const ModelData model =
        random_intercept_data(rng, clusters, random_matrix(rng, 12, 2), Vector::Zero(2), 1.0, 1.0);
    const Matrix Si = (model.component(0) + model.component(1)).inverse();
    const OmegaBounds w = omega_bounds(model);
    for (Index k = 0; k < 2; ++k) {
        const Matrix A = Si * model.component(k);
        const double rk = double(model.structure->ranks[static_cast<std::size_t>(k)]);
        CHECK(w.ratio(k) == doctest::Approx(A.trace() / rk).epsilon(1e-10));
        Eigen::EigenSolver<Matrix> es(A);
        Vector ev = es.eigenvalues().real();
        std::sort(ev.begin(), ev.end(), std::greater<>());
        CHECK(w.eigsum(k) == doctest::Approx(ev(0) + ev(1)).epsilon(1e-10));
    }
}

TEST_CASE("K agrees with the dense projector for c > 1") {
    std::mt19937_64 rng(3);
    const std::vector<Index> clusters{0, 0, 0, 1, 1, 2, 2, 2, 2, 3, 3, 4, 4, 4};
    const ModelData model =
        random_intercept_data(rng, clusters, random_matrix(rng, 14, 2), Vector::Zero(2), 1.0, 1.0);
    for (double c : {1.0, 1.5, 4.0}) {
        const KMatrix K = K_matrix(model, c);
        CHECK(max_rel_err(K.K, dense_K(model, c)) < 1e-10);
        CHECK(K.K == K.K.transpose());
    }
    CHECK_THROWS_AS((void)K_matrix(model, 0.5), InputError);
}

TEST_CASE("smallest eigenvalue of K passes a Rayleigh check") {
    const KMatrix K = K_matrix(pairs_model(7), 1.0);
    std::mt19937_64 rng(4);
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 1000; ++i) {
        const Vector a = random_vector(rng, 2).normalized();
        best = std::min(best, a.dot(K.K * a));
    }
    CHECK(best >= K.eta_min - 1e-8);
    CHECK(best - K.eta_min < 1e-3);
}

TEST_CASE("K is invariant to reordering observations") {
    std::mt19937_64 rng(5);
    const std::vector<Index> clusters{0, 0, 1, 1, 1, 2, 2, 2, 2, 3};
    const ModelData model =
        random_intercept_data(rng, clusters, random_matrix(rng, 10, 2), Vector::Zero(2), 1.0, 1.0);
    std::vector<Index> perm{7, 2, 9, 0, 4, 1, 8, 3, 6, 5};
    std::vector<Index> pc;
    Vector py(10);
    Matrix pX(10, 2);
    for (Index i = 0; i < 10; ++i) {
        const auto src = static_cast<std::size_t>(perm[static_cast<std::size_t>(i)]);
        pc.push_back(clusters[src]);
        py(i) = model.y(static_cast<Index>(src));
        pX.row(i) = model.X.row(static_cast<Index>(src));
    }
    const ModelData permuted = build_random_intercept(py, pX, pc);
    CHECK(max_rel_err(K_matrix(permuted, 2.0).K, K_matrix(model, 2.0).K) < 1e-12);
}

TEST_CASE("duplicated random intercepts make K singular") {
    std::mt19937_64 rng(6);
    const Index m = 8, k = 3, n = m * k;
    Matrix ZZ = Matrix::Zero(n, n);
    for (Index c = 0; c < m; ++c) ZZ.block(c * k, c * k, k, k).setOnes();
    Matrix X = random_matrix(rng, n, 2);
    X.col(0).setOnes();
    const ModelData model = build_from_components(random_vector(rng, n), X, {ZZ, ZZ, Matrix::Identity(n, n)});
    const KMatrix K = K_matrix(model, 1.0);
    CHECK(std::abs(K.eta_min) < 1e-12);

    const ConditionReport rep = check_all(model, Vector::Ones(3));
    CHECK_FALSE(rep.K_ok);
    CHECK_FALSE(rep.warnings.empty());
}

TEST_CASE("check_all aggregates the diagnostics") {
    std::mt19937_64 rng(7);
    const ModelData model = random_intercept_data(rng, balanced_clusters(10, 20), random_matrix(rng, 200, 2),
                                                  Vector::Zero(2), 4.0, 4.0);
    SUBCASE("unit theta") {
        const ConditionReport rep = check_all(model, Vector::Ones(2));
        CHECK(rep.ratio_c == 1.0);
        CHECK(rep.c_used == 1.0);
        CHECK(rep.rank_X_ok);
        CHECK(rep.psd_ok);
        CHECK(rep.K_ok);
        CHECK(rep.eta_min_K == doctest::Approx(K_matrix(model, 1.0).eta_min).epsilon(1e-12));
        CHECK((rep.omega.ratio.array() > 0.0).all());
    }
    SUBCASE("intraclass ratio") {
        const ConditionReport rep = check_all(model, Vector{{16.0, 16.0}});
        REQUIRE(rep.intraclass.size() == 10);
        CHECK(rep.intraclass[0] == doctest::Approx(16.0 / (16.0 + 16.0 / 20.0)).epsilon(1e-14));
    }
    SUBCASE("ratio threshold and default c") {
        ConditionThresholds th;
        th.max_ratio = 5.0;
        const ConditionReport rep = check_all(model, Vector{{10.0, 1.0}}, th);
        CHECK(rep.ratio_c == doctest::Approx(10.0));
        CHECK(rep.c_used == doctest::Approx(10.0));
        CHECK_FALSE(rep.ratio_ok);
    }
    SUBCASE("degenerate theta falls back to c = 1") {
        const ConditionReport rep = check_all(model, Vector{{1e-300, 1.0}});
        CHECK(rep.c_used == 1.0);
        CHECK(std::isfinite(rep.eta_min_K));
    }
}
