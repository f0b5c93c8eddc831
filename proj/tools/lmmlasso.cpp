#include "lmmlasso/io.hpp"
#include "lmmlasso/ncchisq.hpp"
#include "lmmlasso/report.hpp"
#include "lmmlasso/simulate.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

using namespace lmmlasso;

namespace {

constexpr int kOk = 0;
constexpr int kInputError = 1;
constexpr int kNotConverged = 2;

bool verbose = false;

void note(const std::string& msg) {
    if (verbose) std::cerr << "lmmlasso: " << msg << '\n';
}

std::string fmt(double v, int digits = 6) {
    std::ostringstream os;
    os << std::setprecision(digits) << v;
    return os.str();
}

std::string row(const Vector& v, int digits = 6) {
    std::string s;
    for (Index i = 0; i < v.size(); ++i) s += (i ? " " : "") + fmt(v(i), digits);
    return s;
}

std::vector<std::string> split(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

Vector parse_lambda(const std::string& text) {
    const auto items = split(text);
    if (items.empty()) throw InputError("--lambda: empty list");
    Vector v(static_cast<Index>(items.size()));
    for (std::size_t i = 0; i < items.size(); ++i) {
        std::size_t used = 0;
        try {
            v(static_cast<Index>(i)) = std::stod(items[i], &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != items[i].size()) throw InputError("--lambda: cannot parse '" + items[i] + "'");
    }
    return v;
}

struct FitArgs {
    std::string data;
    std::string config;
    std::optional<double> alpha;
    std::string lambda;
    std::string lambda_rule;
    std::string out;
};

int cmd_fit(const FitArgs& a) {
    Config cfg = load_config(a.config);
    if (a.alpha) cfg.alpha = *a.alpha;
    if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw InputError("--alpha must lie in (0, 1)");
    if (!a.lambda.empty() && !a.lambda_rule.empty()) throw InputError("give --lambda or --lambda-rule, not both");
    if (!a.lambda.empty()) cfg.penalty.lambda = parse_lambda(a.lambda);
    if (!a.lambda_rule.empty()) {
        cfg.penalty.lambda.reset();
        cfg.penalty.rule = a.lambda_rule;
    }

    const ModelData model = build_model(read_csv(std::filesystem::path(a.data)), cfg);
    note("model: n = " + std::to_string(model.n()) + ", p = " + std::to_string(model.p()) +
         ", r = " + std::to_string(model.r()));
    const Vector lambda = resolve_lambda(cfg.penalty, model.n(), model.p());

    FitReport rep;
    try {
        rep = make_report(model, lambda, cfg.alpha, cfg.reml, cfg.conditions);
    } catch (const FactorizationError& e) {
        std::cerr << "lmmlasso: REML failed: " << e.what() << '\n';
        return kNotConverged;
    }
    for (const auto& w : rep.warnings) std::cerr << "warning: " << w << '\n';

    const std::string text = to_json(rep).dump(2) + "\n";
    if (a.out.empty()) {
        std::cout << text;
    } else {
        std::ofstream out(a.out, std::ios::binary);
        if (!out) throw InputError("cannot write " + a.out);
        out << text;
        note("report written to " + a.out);
    }
    return rep.theta.converged ? kOk : kNotConverged;
}

struct SimArgs {
    std::string config;
    std::string out;
    std::string methods;
};

int cmd_simulate(const SimArgs& a, unsigned threads, std::optional<std::uint64_t> seed) {
    Config cfg = load_config(a.config);
    SimConfig sim = cfg.simulation;
    if (seed) sim.seed = *seed;
    if (!a.methods.empty()) {
        sim.methods.clear();
        for (const auto& m : split(a.methods)) sim.methods.push_back(parse_method(m));
    }
    sim.validate();
    note("grid of " + std::to_string(grid_points(sim).size()) + " cells, " + std::to_string(sim.reps) +
         " replications each, " + std::to_string(threads) + " worker(s)");

    const CoverageGrid grid = run_grid(sim, threads);

    std::ostream* summary = &std::cout;
    if (a.out.empty()) {
        write_grid_csv(grid, std::cout);
        summary = &std::cerr;
    } else {
        std::ofstream out(a.out, std::ios::binary);
        if (!out) throw InputError("cannot write " + a.out);
        write_grid_csv(grid, out);
    }

    std::map<Method, std::pair<double, Index>> worst;
    Index flagged = 0;
    for (const auto& r : grid.records) {
        auto [it, inserted] = worst.try_emplace(r.method, r.coverage, 0);
        if (!inserted && r.coverage < it->second.first) it->second.first = r.coverage;
        it->second.second += r.failures;
        if (r.flagged) ++flagged;
    }
    *summary << "design digest " << grid.design_digest << '\n';
    for (Method m : sim.methods) {
        const auto& [cov, fails] = worst.at(m);
        *summary << std::left << std::setw(14) << to_string(m) << " min coverage " << fmt(cov, 4)
                 << "  failures " << fails << '\n';
    }
    if (flagged > 0) std::cerr << "warning: " << flagged << " records have failure rates of 1% or more\n";
    return kOk;
}

int cmd_check(const std::string& data, const std::string& config) {
    const Config cfg = load_config(config);
    const ModelData model = build_model(read_csv(std::filesystem::path(data)), cfg);
    const auto est = fit_reml(model, cfg.reml);
    if (!std::isfinite(est.loglik)) throw std::runtime_error("REML failed at every starting point");
    const auto rep = check_all(model, est.theta_hat, cfg.conditions);

    auto flag = [](bool ok) { return ok ? "ok" : "FAIL"; };
    std::cout << "n = " << model.n() << ", p = " << model.p() << ", r = " << model.r() << ", template "
              << to_string(model.kind) << '\n';
    std::cout << "theta_hat = " << row(est.theta_hat) << (est.converged ? "" : "  (not converged)") << '\n';
    std::cout << "max(theta)/min(theta) = " << fmt(rep.ratio_c) << "  [" << flag(rep.ratio_ok) << "]\n";
    std::cout << "rank(X) = p < n  [" << flag(rep.rank_X_ok) << "]\n";
    std::cout << "components PSD, last PD  [" << flag(rep.psd_ok) << "]\n";
    std::cout << "omega ratios tr{(sum H)^-1 H_k}/rk(H_k) = " << row(rep.omega.ratio) << '\n';
    std::cout << "omega bounds [" << fmt(rep.omega.ratio.minCoeff()) << ", " << fmt(rep.omega.ratio.maxCoeff())
              << "]\n";
    std::cout << "eigenvalue sums (top p) = " << row(rep.omega.eigsum) << '\n';
    std::cout << "K (c = " << fmt(rep.c_used) << "):\n";
    for (Index i = 0; i < rep.K.rows(); ++i) std::cout << "  " << row(rep.K.row(i).transpose(), 10) << '\n';
    std::cout << "eta_min(K) = " << fmt(rep.eta_min_K, 10) << "  [" << flag(rep.K_ok) << "]\n";
    if (!rep.intraclass.empty()) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (double g : rep.intraclass) {
            lo = std::min(lo, g);
            hi = std::max(hi, g);
        }
        std::cout << "intraclass gamma_i in [" << fmt(lo) << ", " << fmt(hi) << "]\n";
    }
    for (const auto& w : rep.warnings) std::cerr << "warning: " << w << '\n';
    return kOk;
}

int cmd_quantile(int p, double xi, double prob) {
    const double q = ncchisq_quantile(prob, p, xi);
    std::printf("%.10g\n", q);
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Uniformly valid confidence sets for fixed effects in linear mixed models"};
    app.require_subcommand(1);
    app.add_flag("-v,--verbose", verbose, "Progress and diagnostics on stderr");
    unsigned threads = std::max(1u, std::thread::hardware_concurrency());
    app.add_option("--threads", threads, "Worker threads for simulate (results do not depend on it)")
        ->check(CLI::PositiveNumber);
    std::optional<std::uint64_t> seed;
    app.add_option("--seed", seed, "Override the simulation base seed");

    FitArgs fit;
    auto* fit_cmd = app.add_subcommand("fit", "Fit REML and Lasso, build the confidence ellipsoid");
    fit_cmd->fallthrough();
    fit_cmd->add_option("data", fit.data, "Input CSV")->required();
    fit_cmd->add_option("--config", fit.config, "Config file")->required();
    fit_cmd->add_option("--alpha", fit.alpha, "Level (overrides [inference] alpha)");
    fit_cmd->add_option("--lambda", fit.lambda, "Comma-separated penalties, or one value for all");
    fit_cmd->add_option("--lambda-rule", fit.lambda_rule, "Penalty rule")->check(CLI::IsMember({"sqrt_n_over_2"}));
    fit_cmd->add_option("--out", fit.out, "Report path (JSON); stdout if omitted");

    SimArgs sim;
    auto* sim_cmd = app.add_subcommand("simulate", "Run the coverage study");
    sim_cmd->fallthrough();
    sim_cmd->add_option("--config", sim.config, "Config file")->required();
    sim_cmd->add_option("--out", sim.out, "Grid CSV path; stdout if omitted");
    sim_cmd->add_option("--methods", sim.methods, "Comma-separated subset of lasso_uniform,wls,aic_wls,naive_lasso");

    std::string check_data, check_config;
    auto* check_cmd = app.add_subcommand("check", "Report the regularity diagnostics");
    check_cmd->fallthrough();
    check_cmd->add_option("data", check_data, "Input CSV")->required();
    check_cmd->add_option("--config", check_config, "Config file")->required();

    int q_p = 0;
    double q_xi = 0.0, q_prob = 0.0;
    auto* q_cmd = app.add_subcommand("quantile", "Non-central chi-square quantile");
    q_cmd->fallthrough();
    q_cmd->add_option("--p", q_p, "Degrees of freedom")->required();
    q_cmd->add_option("--xi", q_xi, "Noncentrality")->required();
    q_cmd->add_option("--prob", q_prob, "Probability in (0, 1)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kInputError;
    }

    try {
        if (*fit_cmd) return cmd_fit(fit);
        if (*sim_cmd) return cmd_simulate(sim, threads, seed);
        if (*check_cmd) return cmd_check(check_data, check_config);
        if (*q_cmd) return cmd_quantile(q_p, q_xi, q_prob);
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInputError;
    } catch (const FactorizationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInputError;
    } catch (const std::runtime_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNotConverged;
    }
    return kInputError;
}
