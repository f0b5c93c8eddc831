#pragma once

#include "lmmlasso/model.hpp"
#include "lmmlasso/reml.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lmmlasso {

enum class Method { lasso_uniform, wls, aic_wls, naive_lasso };
enum class ThetaMode { estimated, oracle };

[[nodiscard]] std::string_view to_string(Method method);
[[nodiscard]] Method parse_method(std::string_view name);
[[nodiscard]] std::string_view to_string(ThetaMode mode);
[[nodiscard]] ThetaMode parse_theta_mode(std::string_view name);

struct AxisRange {
    double lo = -4.0;
    double hi = 4.0;
    Index points = 81;
};

/// Random-intercept coverage study y_ij = x_ij^T beta0 + v_i + u_ij.
/// Defaults reproduce the full-scale study (81 x 81 grid, 2000 replications).
struct SimConfig {
    Index m = 20;
    /// One entry for balanced clusters, otherwise one per cluster.
    std::vector<Index> cluster_sizes{20};
    double sigma_u = 4.0;
    double sigma_v = 4.0;
    Index p = 2;
    /// Variance of the covariate draws.
    double x_var = 4.0;
    /// Penalties; unset means lambda_j = sqrt(n) / 2.
    std::optional<Vector> lambda;
    /// One range for all axes, or one per axis.
    std::vector<AxisRange> grid{AxisRange{}};
    Index reps = 2000;
    double alpha = 0.05;
    std::uint64_t seed = 20240607;
    std::vector<Method> methods{Method::lasso_uniform, Method::wls, Method::aic_wls, Method::naive_lasso};
    ThetaMode theta_mode = ThetaMode::estimated;
    RemlOptions reml;

    void validate() const;
    [[nodiscard]] Index n() const;
    [[nodiscard]] std::vector<Index> sizes() const;
    [[nodiscard]] Vector lambda_values() const;
    /// (sigma_v^2, sigma_u^2).
    [[nodiscard]] Vector theta0() const;
};

struct SimDesign {
    ModelData skeleton;
    std::string digest;
};

/// Draws X once (entries N(0, x_var)) and builds the random-intercept skeleton.
[[nodiscard]] SimDesign gen_design(const SimConfig& config, std::uint64_t seed);
/// The design run_grid uses for config.seed.
[[nodiscard]] SimDesign gen_design(const SimConfig& config);

/// y = X beta0 + Z v + u with v ~ N(0, theta0(0)), u ~ N(0, theta0(1)).
[[nodiscard]] Vector simulate_response(const ModelData& skeleton, const Vector& beta0, const Vector& theta0,
                                       std::uint64_t seed);

/// Counter-based seed for (base, cell, replication); independent of scheduling.
[[nodiscard]] std::uint64_t replication_seed(std::uint64_t base, std::uint64_t cell, std::uint64_t rep);

struct CoverageRecord {
    Vector beta0;
    Method method = Method::wls;
    double coverage = 0.0;
    double mc_se = 0.0;
    /// Replications that entered the coverage fraction.
    Index reps = 0;
    Index failures = 0;
    std::uint64_t seed = 0;
    /// failures >= 1% of the requested replications.
    bool flagged = false;
};

[[nodiscard]] std::vector<CoverageRecord> coverage_cell(const SimDesign& design, const Vector& beta0,
                                                        const SimConfig& config, std::uint64_t cell_index);

struct CoverageGrid {
    std::vector<CoverageRecord> records;
    std::string design_digest;
    Index p = 0;
};

/// Cartesian grid points, first axis slowest.
[[nodiscard]] std::vector<Vector> grid_points(const SimConfig& config);

/// Evaluates every cell; `threads` workers, results independent of the count.
[[nodiscard]] CoverageGrid run_grid(const SimConfig& config, unsigned threads = 1);

void write_grid_csv(const CoverageGrid& grid, std::ostream& out);

}  // namespace lmmlasso
