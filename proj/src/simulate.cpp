#include "lmmlasso/simulate.hpp"

#include "lmmlasso/baselines.hpp"
#include "lmmlasso/confset.hpp"
#include "lmmlasso/lasso.hpp"
#include "lmmlasso/ncchisq.hpp"

#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <exception>
#include <mutex>
#include <ostream>
#include <random>
#include <thread>

namespace lmmlasso {

namespace {

constexpr std::uint64_t kDesignStream = 0x44455349474eULL;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::string fnv1a_digest(const Matrix& X) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const auto* bytes = reinterpret_cast<const unsigned char*>(X.data());
    const std::size_t len = static_cast<std::size_t>(X.size()) * sizeof(double);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
    return buf;
}

std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

}  // namespace

std::string_view to_string(Method method) {
    switch (method) {
        case Method::lasso_uniform: return "lasso_uniform";
        case Method::wls: return "wls";
        case Method::aic_wls: return "aic_wls";
        case Method::naive_lasso: return "naive_lasso";
    }
    return "unknown";
}

Method parse_method(std::string_view name) {
    for (Method m : {Method::lasso_uniform, Method::wls, Method::aic_wls, Method::naive_lasso}) {
        if (to_string(m) == name) return m;
    }
    throw InputError("unknown method '" + std::string(name) + "'");
}

std::string_view to_string(ThetaMode mode) { return mode == ThetaMode::oracle ? "oracle" : "estimated"; }

ThetaMode parse_theta_mode(std::string_view name) {
    if (name == "oracle") return ThetaMode::oracle;
    if (name == "estimated") return ThetaMode::estimated;
    throw InputError("unknown theta_mode '" + std::string(name) + "'");
}

void SimConfig::validate() const {
    if (m < 2) throw InputError("simulation: need at least two clusters");
    if (cluster_sizes.empty()) throw InputError("simulation: cluster sizes missing");
    if (cluster_sizes.size() != 1 && static_cast<Index>(cluster_sizes.size()) != m) {
        throw InputError("simulation: give one cluster size or one per cluster");
    }
    for (Index s : cluster_sizes) {
        if (s < 1) throw InputError("simulation: cluster sizes must be positive");
    }
    if (!(sigma_u > 0.0) || !(sigma_v > 0.0)) throw InputError("simulation: sigma_u and sigma_v must be positive");
    if (p < 1 || p >= n()) throw InputError("simulation: need 1 <= p < n");
    if (!(x_var > 0.0)) throw InputError("simulation: x_var must be positive");
    if (lambda && (lambda->size() != p || (lambda->array() < 0.0).any())) {
        throw InputError("simulation: lambda must be p nonnegative values");
    }
    if (grid.empty() || (grid.size() != 1 && static_cast<Index>(grid.size()) != p)) {
        throw InputError("simulation: give one grid range or one per axis");
    }
    for (const auto& axis : grid) {
        if (axis.points < 1) throw InputError("simulation: grid axes need at least one point");
        if (axis.points > 1 && !(axis.hi >= axis.lo)) throw InputError("simulation: grid range is reversed");
    }
    if (reps < 1) throw InputError("simulation: reps must be at least 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("simulation: alpha must lie in (0, 1)");
    if (methods.empty()) throw InputError("simulation: no methods selected");
}

std::vector<Index> SimConfig::sizes() const {
    if (cluster_sizes.size() == 1) return std::vector<Index>(static_cast<std::size_t>(m), cluster_sizes.front());
    return cluster_sizes;
}

Index SimConfig::n() const {
    const auto s = sizes();
    Index total = 0;
    for (Index v : s) total += v;
    return total;
}

Vector SimConfig::lambda_values() const {
    if (lambda) return *lambda;
    return Vector::Constant(p, 0.5 * std::sqrt(static_cast<double>(n())));
}

Vector SimConfig::theta0() const { return Vector{{sigma_v * sigma_v, sigma_u * sigma_u}}; }

std::uint64_t replication_seed(std::uint64_t base, std::uint64_t cell, std::uint64_t rep) {
    return splitmix64(splitmix64(splitmix64(base) ^ cell) ^ (rep + 0x5851f42d4c957f2dULL));
}

SimDesign gen_design(const SimConfig& config, std::uint64_t seed) {
    config.validate();
    const auto sizes = config.sizes();
    const Index n = config.n();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> draw(0.0, std::sqrt(config.x_var));
    Matrix X(n, config.p);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < config.p; ++j) X(i, j) = draw(rng);
    }
    std::vector<Index> cluster_of;
    cluster_of.reserve(static_cast<std::size_t>(n));
    for (std::size_t c = 0; c < sizes.size(); ++c) {
        cluster_of.insert(cluster_of.end(), static_cast<std::size_t>(sizes[c]), static_cast<Index>(c));
    }
    SimDesign design;
    design.digest = fnv1a_digest(X);
    design.skeleton = build_random_intercept(Vector::Zero(n), std::move(X), cluster_of);
    for (Index j = 0; j < config.p; ++j) design.skeleton.labels.push_back("x" + std::to_string(j + 1));
    return design;
}

Vector simulate_response(const ModelData& skeleton, const Vector& beta0, const Vector& theta0, std::uint64_t seed) {
    if (beta0.size() != skeleton.p()) throw InputError("beta0 has wrong length");
    if (theta0.size() != 2 || (theta0.array() <= 0.0).any()) {
        throw InputError("theta0 must be (sigma_v^2, sigma_u^2), both positive");
    }
    const auto& blocks = skeleton.structure->blocks;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> std_normal(0.0, 1.0);
    const double sd_v = std::sqrt(theta0(0));
    const double sd_u = std::sqrt(theta0(1));
    Vector y = skeleton.X * beta0;
    for (const auto& block : blocks) {
        const double v = sd_v * std_normal(rng);
        for (Index i : block) y(i) += v;
    }
    for (Index i = 0; i < y.size(); ++i) y(i) += sd_u * std_normal(rng);
    return y;
}

SimDesign gen_design(const SimConfig& config) { return gen_design(config, splitmix64(config.seed ^ kDesignStream)); }

std::vector<CoverageRecord> coverage_cell(const SimDesign& design, const Vector& beta0, const SimConfig& config,
                                          std::uint64_t cell_index) {
    config.validate();
    const ModelData& skeleton = design.skeleton;
    const Index n = skeleton.n();
    const Index p = skeleton.p();
    const Vector lambda = config.lambda_values();
    const Vector theta0 = config.theta0();
    const double central = chisq_quantile(1.0 - config.alpha, static_cast<int>(p));
    const std::size_t nm = config.methods.size();
    std::vector<Index> hits(nm, 0), used(nm, 0), failures(nm, 0);

    for (Index rep = 0; rep < config.reps; ++rep) {
        const auto seed = replication_seed(config.seed, cell_index, static_cast<std::uint64_t>(rep));
        const ModelData model = skeleton.with_response(simulate_response(skeleton, beta0, theta0, seed));
        Vector theta = theta0;
        if (config.theta_mode == ThetaMode::estimated) {
            const auto est = fit_reml(model, config.reml);
            if (!est.converged) {
                for (auto& f : failures) ++f;
                continue;
            }
            theta = est.theta_hat;
        }
        const Matrix C = compute_C(model, theta);
        LassoSolution lasso;
        const bool need_lasso = std::any_of(config.methods.begin(), config.methods.end(), [](Method m) {
            return m == Method::lasso_uniform || m == Method::naive_lasso;
        });
        if (need_lasso) lasso = fit_lasso(model, theta, lambda);

        for (std::size_t k = 0; k < nm; ++k) {
            bool covered = false;
            try {
                switch (config.methods[k]) {
                    case Method::lasso_uniform:
                        covered = build_ellipsoid(C, n, lasso.beta, lambda, config.alpha).contains(beta0);
                        break;
                    case Method::wls:
                        covered = make_ellipsoid(wls(model, theta).beta, C, central, config.alpha, n).contains(beta0);
                        break;
                    case Method::naive_lasso:
                        covered = make_ellipsoid(lasso.beta, C, central, config.alpha, n).contains(beta0);
                        break;
                    case Method::aic_wls: {
                        AicOptions opt;
                        opt.fit = config.reml;
                        opt.warm_start = theta;
                        if (config.theta_mode == ThetaMode::estimated) opt.full_theta = theta;
                        const auto sel = aic_select(model, opt);
                        covered = aic_wls_set(model, sel, config.alpha).contains(beta0);
                        break;
                    }
                }
            } catch (const std::runtime_error&) {
                ++failures[k];
                continue;
            }
            ++used[k];
            if (covered) ++hits[k];
        }
    }

    std::vector<CoverageRecord> records;
    for (std::size_t k = 0; k < nm; ++k) {
        CoverageRecord rec;
        rec.beta0 = beta0;
        rec.method = config.methods[k];
        rec.reps = used[k];
        rec.failures = failures[k];
        rec.seed = replication_seed(config.seed, cell_index, 0);
        if (used[k] > 0) {
            rec.coverage = static_cast<double>(hits[k]) / static_cast<double>(used[k]);
            rec.mc_se = std::sqrt(rec.coverage * (1.0 - rec.coverage) / static_cast<double>(used[k]));
        } else {
            rec.coverage = std::nan("");
            rec.mc_se = std::nan("");
        }
        rec.flagged = 100 * failures[k] >= config.reps;
        records.push_back(std::move(rec));
    }
    return records;
}

std::vector<Vector> grid_points(const SimConfig& config) {
    config.validate();
    const Index p = config.p;
    std::vector<std::vector<double>> axes;
    for (Index j = 0; j < p; ++j) {
        const auto& a = config.grid.size() == 1 ? config.grid.front() : config.grid[static_cast<std::size_t>(j)];
        std::vector<double> values;
        for (Index i = 0; i < a.points; ++i) {
            values.push_back(a.points == 1 ? a.lo
                                           : a.lo + (a.hi - a.lo) * static_cast<double>(i) /
                                                        static_cast<double>(a.points - 1));
        }
        axes.push_back(std::move(values));
    }
    std::vector<Vector> points;
    std::vector<std::size_t> idx(static_cast<std::size_t>(p), 0);
    while (true) {
        Vector pt(p);
        for (Index j = 0; j < p; ++j) pt(j) = axes[static_cast<std::size_t>(j)][idx[static_cast<std::size_t>(j)]];
        points.push_back(std::move(pt));
        Index j = p - 1;
        while (j >= 0) {
            auto& i = idx[static_cast<std::size_t>(j)];
            if (++i < axes[static_cast<std::size_t>(j)].size()) break;
            i = 0;
            --j;
        }
        if (j < 0) break;
    }
    return points;
}

CoverageGrid run_grid(const SimConfig& config, unsigned threads) {
    config.validate();
    const auto points = grid_points(config);
    const SimDesign design = gen_design(config);

    std::vector<std::vector<CoverageRecord>> cells(points.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (std::size_t c = next++; c < points.size(); c = next++) {
            try {
                cells[c] = coverage_cell(design, points[c], config, c);
            } catch (...) {
                const std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
            }
        }
    };
    const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(points.size())));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < workers; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (error) std::rethrow_exception(error);

    CoverageGrid grid;
    grid.design_digest = design.digest;
    grid.p = config.p;
    for (auto& cell : cells) {
        for (auto& rec : cell) grid.records.push_back(std::move(rec));
    }
    return grid;
}

void write_grid_csv(const CoverageGrid& grid, std::ostream& out) {
    for (Index j = 0; j < grid.p; ++j) out << "beta_" << (j + 1) << ',';
    out << "method,coverage,mc_se,reps,failures,seed\n";
    for (const auto& r : grid.records) {
        for (Index j = 0; j < r.beta0.size(); ++j) out << format_number(r.beta0(j)) << ',';
        out << to_string(r.method) << ',' << format_number(r.coverage) << ',' << format_number(r.mc_se) << ','
            << r.reps << ',' << r.failures << ',' << r.seed << '\n';
    }
}

}  // namespace lmmlasso
