#include "lmmlasso/io.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <boost/tokenizer.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <sstream>

namespace lmmlasso {

namespace {

namespace pt = boost::property_tree;

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split_fields(const std::string& line) {
    using Sep = boost::escaped_list_separator<char>;
    boost::tokenizer<Sep> tok(line, Sep('\\', ',', '"'));
    std::vector<std::string> out;
    for (const auto& f : tok) out.push_back(trim(f));
    return out;
}

std::optional<double> parse_double(const std::string& text) {
    const std::string t = trim(text);
    double v = 0.0;
    const char* begin = t.data();
    const char* end = t.data() + t.size();
    if (!t.empty() && *begin == '+') ++begin;
    const auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end || t.empty()) return std::nullopt;
    return v;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

double number(const std::string& text, const std::string& where) {
    const auto v = parse_double(text);
    if (!v) throw InputError(where + ": cannot parse '" + text + "' as a number");
    return *v;
}

Index integer(const std::string& text, const std::string& where) {
    const double v = number(text, where);
    if (v != std::floor(v) || std::abs(v) > 1e15) throw InputError(where + ": expected an integer, got '" + text + "'");
    return static_cast<Index>(v);
}

bool boolean(const std::string& text, const std::string& where) {
    std::string t = trim(text);
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
    if (t == "true" || t == "yes" || t == "1" || t == "on") return true;
    if (t == "false" || t == "no" || t == "0" || t == "off") return false;
    throw InputError(where + ": expected true or false, got '" + text + "'");
}

Vector numbers(const std::string& text, const std::string& where) {
    const auto items = split_list(text);
    Vector v(static_cast<Index>(items.size()));
    for (std::size_t i = 0; i < items.size(); ++i) v(static_cast<Index>(i)) = number(items[i], where);
    return v;
}

// Section reader that rejects keys it was never asked about.
class Section {
public:
    Section(const pt::ptree* tree, std::string name) : tree_(tree), name_(std::move(name)) {}

    std::optional<std::string> get(const std::string& key) {
        seen_.insert(key);
        if (!tree_) return std::nullopt;
        const auto child = tree_->get_child_optional(pt::ptree::path_type(key, '\0'));
        if (!child) return std::nullopt;
        return trim(child->data());
    }
    [[nodiscard]] std::string where(const std::string& key) const { return "[" + name_ + "] " + key; }

    void finish() const {
        if (!tree_) return;
        for (const auto& [key, _] : *tree_) {
            if (!seen_.count(key)) throw InputError("config: unknown key '" + key + "' in [" + name_ + "]");
        }
    }

private:
    const pt::ptree* tree_;
    std::string name_;
    std::set<std::string> seen_;
};

void read_simulation(Section& s, SimConfig& sim) {
    if (auto v = s.get("m")) sim.m = integer(*v, s.where("m"));
    if (auto v = s.get("n_i")) {
        sim.cluster_sizes.clear();
        for (const auto& item : split_list(*v)) sim.cluster_sizes.push_back(integer(item, s.where("n_i")));
    }
    if (auto v = s.get("sigma_u")) sim.sigma_u = number(*v, s.where("sigma_u"));
    if (auto v = s.get("sigma_v")) sim.sigma_v = number(*v, s.where("sigma_v"));
    if (auto v = s.get("p")) sim.p = integer(*v, s.where("p"));
    if (auto v = s.get("x_var")) sim.x_var = number(*v, s.where("x_var"));
    if (auto v = s.get("lambda")) sim.lambda = numbers(*v, s.where("lambda"));
    if (auto v = s.get("lambda_rule")) {
        if (*v != "sqrt_n_over_2") throw InputError(s.where("lambda_rule") + ": unknown rule '" + *v + "'");
        sim.lambda.reset();
    }
    std::vector<double> lo, hi;
    std::vector<Index> pts;
    if (auto v = s.get("grid_lo")) {
        const Vector x = numbers(*v, s.where("grid_lo"));
        lo.assign(x.begin(), x.end());
    }
    if (auto v = s.get("grid_hi")) {
        const Vector x = numbers(*v, s.where("grid_hi"));
        hi.assign(x.begin(), x.end());
    }
    if (auto v = s.get("grid_points")) {
        for (const auto& item : split_list(*v)) pts.push_back(integer(item, s.where("grid_points")));
    }
    if (!lo.empty() || !hi.empty() || !pts.empty()) {
        const std::size_t axes = std::max({lo.size(), hi.size(), pts.size()});
        auto pick = [&](const auto& values, auto fallback, std::size_t j, const char* key) {
            if (values.empty()) return fallback;
            if (values.size() == 1) return values.front();
            if (values.size() != axes) throw InputError(s.where(key) + ": give one value or one per axis");
            return values[j];
        };
        sim.grid.clear();
        for (std::size_t j = 0; j < axes; ++j) {
            sim.grid.push_back(AxisRange{pick(lo, -4.0, j, "grid_lo"), pick(hi, 4.0, j, "grid_hi"),
                                         pick(pts, Index{81}, j, "grid_points")});
        }
    }
    if (auto v = s.get("reps")) sim.reps = integer(*v, s.where("reps"));
    if (auto v = s.get("alpha")) sim.alpha = number(*v, s.where("alpha"));
    if (auto v = s.get("seed")) {
        const auto text = trim(*v);
        std::uint64_t seed = 0;
        const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), seed);
        if (ec != std::errc() || ptr != text.data() + text.size()) {
            throw InputError(s.where("seed") + ": expected an unsigned integer, got '" + text + "'");
        }
        sim.seed = seed;
    }
    if (auto v = s.get("methods")) {
        sim.methods.clear();
        for (const auto& item : split_list(*v)) sim.methods.push_back(parse_method(item));
    }
    if (auto v = s.get("theta_mode")) sim.theta_mode = parse_theta_mode(*v);
    if (auto v = s.get("reml_tol")) sim.reml.tol = number(*v, s.where("reml_tol"));
    if (auto v = s.get("reml_max_iter")) sim.reml.max_iter = static_cast<int>(integer(*v, s.where("reml_max_iter")));
}

}  // namespace

std::size_t CsvTable::column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw InputError(source + ": no column named '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
}

Vector CsvTable::numeric(const std::string& name) const {
    const std::size_t j = column(name);
    Vector v(rows_count());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto x = parse_double(rows[i][j]);
        if (!x || !std::isfinite(*x)) {
            throw InputError(source + ": row " + std::to_string(i + 2) + ", column '" + name + "': '" + rows[i][j] +
                             "' is not a finite number");
        }
        v(static_cast<Index>(i)) = *x;
    }
    return v;
}

CsvTable read_csv(std::istream& in, const std::string& source) {
    CsvTable t;
    t.source = source;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        std::vector<std::string> fields;
        try {
            fields = split_fields(line);
        } catch (const boost::escaped_list_error& e) {
            throw InputError(source + ": line " + std::to_string(line_no) + ": " + e.what());
        }
        if (t.header.empty()) {
            t.header = std::move(fields);
            std::set<std::string> names;
            for (const auto& h : t.header) {
                if (h.empty()) throw InputError(source + ": empty column name in header");
                if (!names.insert(h).second) throw InputError(source + ": duplicate column '" + h + "'");
            }
            continue;
        }
        if (fields.size() != t.header.size()) {
            throw InputError(source + ": line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                             " fields, header has " + std::to_string(t.header.size()));
        }
        t.rows.push_back(std::move(fields));
    }
    if (t.header.empty()) throw InputError(source + ": empty file");
    if (t.rows.empty()) throw InputError(source + ": no data rows");
    return t;
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path.string());
    return read_csv(in, path.string());
}

Matrix read_matrix_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        std::vector<double> row;
        std::size_t col = 0;
        for (const auto& f : split_fields(line)) {
            ++col;
            const auto v = parse_double(f);
            if (!v) {
                throw InputError(path.string() + ": line " + std::to_string(line_no) + ", column " +
                                 std::to_string(col) + ": '" + f + "' is not a number");
            }
            row.push_back(*v);
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw InputError(path.string() + ": line " + std::to_string(line_no) + " has a different width");
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw InputError(path.string() + ": empty matrix");
    Matrix M(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) M(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
    }
    return M;
}

CovarianceTemplate parse_template(const std::string& name) {
    if (name == "random_intercept") return CovarianceTemplate::random_intercept;
    if (name == "linear") return CovarianceTemplate::linear;
    if (name == "custom") return CovarianceTemplate::custom;
    throw InputError("unknown covariance template '" + name + "' (expected random_intercept, linear or custom)");
}

std::string to_string(CovarianceTemplate kind) {
    switch (kind) {
        case CovarianceTemplate::random_intercept: return "random_intercept";
        case CovarianceTemplate::linear: return "linear";
        case CovarianceTemplate::custom: return "custom";
    }
    return "custom";
}

Config parse_config(std::istream& in, const std::filesystem::path& base_dir) {
    pt::ptree tree;
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw InputError(std::string("config: ") + e.what());
    }
    static const std::set<std::string> known{"data", "model", "penalty", "inference", "conditions", "simulation"};
    for (const auto& [name, _] : tree) {
        if (!known.count(name)) throw InputError("config: unknown section [" + name + "]");
    }
    auto section = [&](const std::string& name) {
        const auto child = tree.get_child_optional(name);
        return Section(child ? &*child : nullptr, name);
    };

    Config c;
    {
        auto s = section("data");
        if (auto v = s.get("response")) c.data.response = *v;
        if (auto v = s.get("covariates")) c.data.covariates = split_list(*v);
        if (auto v = s.get("cluster"); v && !v->empty()) c.data.cluster = *v;
        if (auto v = s.get("intercept")) c.data.intercept = boolean(*v, s.where("intercept"));
        if (auto v = s.get("random")) c.data.random = split_list(*v);
        if (auto v = s.get("components")) {
            for (const auto& item : split_list(*v)) {
                std::filesystem::path path(item);
                c.data.components.push_back(path.is_relative() ? base_dir / path : path);
            }
        }
        s.finish();
    }
    {
        auto s = section("model");
        if (auto v = s.get("template")) c.template_kind = parse_template(*v);
        if (auto v = s.get("reml_tol")) c.reml.tol = number(*v, s.where("reml_tol"));
        if (auto v = s.get("reml_max_iter")) c.reml.max_iter = static_cast<int>(integer(*v, s.where("reml_max_iter")));
        s.finish();
    }
    {
        auto s = section("penalty");
        if (auto v = s.get("lambda")) c.penalty.lambda = numbers(*v, s.where("lambda"));
        if (auto v = s.get("rule")) {
            if (*v != "sqrt_n_over_2") throw InputError(s.where("rule") + ": unknown rule '" + *v + "'");
            c.penalty.rule = *v;
        }
        s.finish();
    }
    {
        auto s = section("inference");
        if (auto v = s.get("alpha")) c.alpha = number(*v, s.where("alpha"));
        s.finish();
    }
    {
        auto s = section("conditions");
        if (auto v = s.get("max_ratio")) c.conditions.max_ratio = number(*v, s.where("max_ratio"));
        if (auto v = s.get("min_eta_K")) c.conditions.min_eta_K = number(*v, s.where("min_eta_K"));
        if (auto v = s.get("c")) c.conditions.c = number(*v, s.where("c"));
        s.finish();
    }
    {
        auto s = section("simulation");
        read_simulation(s, c.simulation);
        s.finish();
    }
    if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw InputError("[inference] alpha must lie in (0, 1)");
    if (c.conditions.c && *c.conditions.c < 1.0) throw InputError("[conditions] c must be at least 1");
    return c;
}

Config load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config " + path.string());
    return parse_config(in, path.parent_path());
}

Vector resolve_lambda(const PenaltyConfig& penalty, Index n, Index p) {
    if (penalty.lambda) {
        const Vector& l = *penalty.lambda;
        if (l.size() == 1) return Vector::Constant(p, l(0));
        if (l.size() != p) {
            throw InputError("lambda has " + std::to_string(l.size()) + " entries, expected 1 or " + std::to_string(p));
        }
        if ((l.array() < 0.0).any() || !l.allFinite()) throw InputError("lambda entries must be finite and >= 0");
        return l;
    }
    if (penalty.rule == "sqrt_n_over_2") return Vector::Constant(p, 0.5 * std::sqrt(static_cast<double>(n)));
    throw InputError("unknown lambda rule '" + penalty.rule + "'");
}

ModelData build_model(const CsvTable& table, const Config& config) {
    const auto& d = config.data;
    const Index n = table.rows_count();
    if (d.covariates.empty() && !d.intercept) throw InputError("config: no covariates and no intercept");

    Vector y = table.numeric(d.response);
    std::vector<std::string> labels;
    Matrix X(n, static_cast<Index>(d.covariates.size()) + (d.intercept ? 1 : 0));
    Index col = 0;
    if (d.intercept) {
        X.col(col++).setOnes();
        labels.emplace_back("(Intercept)");
    }
    for (const auto& name : d.covariates) {
        X.col(col++) = table.numeric(name);
        labels.push_back(name);
    }
    if (X.cols() < n) {
        const auto dep = dependent_columns(X);
        if (!dep.empty()) {
            std::string names;
            for (Index j : dep) names += (names.empty() ? "" : ", ") + labels[static_cast<std::size_t>(j)];
            throw InputError(table.source + ": design matrix is rank deficient; dependent columns: " + names);
        }
    }

    std::optional<std::vector<Index>> cluster_of;
    if (d.cluster) {
        const std::size_t j = table.column(*d.cluster);
        std::map<std::string, Index> ids;
        cluster_of.emplace();
        for (const auto& row : table.rows) {
            const auto [it, _] = ids.try_emplace(row[j], static_cast<Index>(ids.size()));
            cluster_of->push_back(it->second);
        }
    }
    const std::string tname = to_string(config.template_kind);
    if (config.template_kind != CovarianceTemplate::custom && !cluster_of) {
        throw InputError("template " + tname + " needs a cluster column ([data] cluster)");
    }

    ModelData model;
    switch (config.template_kind) {
        case CovarianceTemplate::random_intercept:
            model = build_random_intercept(std::move(y), std::move(X), *cluster_of);
            break;
        case CovarianceTemplate::linear: {
            if (d.random.empty()) throw InputError("template linear needs [data] random");
            std::vector<Vector> zcols;
            for (const auto& name : d.random) {
                zcols.push_back(name == "1" ? Vector(Vector::Ones(n)) : table.numeric(name));
            }
            const Index q = static_cast<Index>(zcols.size());
            // One variance per random effect plus the residual; observations are regrouped by cluster.
            ClusteredSpec spec;
            for (Index k = 0; k <= q; ++k) {
                Matrix psi = Matrix::Zero(q, q);
                if (k < q) psi(k, k) = 1.0;
                spec.psi.push_back(std::move(psi));
            }
            std::vector<std::vector<Index>> members;
            for (Index i = 0; i < n; ++i) {
                const auto c = static_cast<std::size_t>((*cluster_of)[static_cast<std::size_t>(i)]);
                if (c >= members.size()) members.resize(c + 1);
                members[c].push_back(i);
            }
            for (const auto& rows : members) {
                const Index ni = static_cast<Index>(rows.size());
                Cluster cl;
                cl.y = y(rows);
                cl.X = X(rows, Eigen::all);
                cl.Z.resize(ni, q);
                for (Index k = 0; k < q; ++k) cl.Z.col(k) = zcols[static_cast<std::size_t>(k)](rows);
                for (Index k = 0; k < q; ++k) cl.omega.push_back(Matrix::Zero(ni, ni));
                cl.omega.push_back(Matrix::Identity(ni, ni));
                spec.clusters.push_back(std::move(cl));
            }
            model = build_from_clustered(spec);
            break;
        }
        case CovarianceTemplate::custom: {
            if (d.components.empty()) throw InputError("template custom needs [data] components");
            std::vector<Matrix> components;
            for (const auto& path : d.components) components.push_back(read_matrix_csv(path));
            model = build_from_components(std::move(y), std::move(X), std::move(components));
            if (cluster_of) model = attach_clusters(model, *cluster_of);
            break;
        }
    }
    model.kind = config.template_kind;
    model.labels = std::move(labels);
    return model;
}

}  // namespace lmmlasso
