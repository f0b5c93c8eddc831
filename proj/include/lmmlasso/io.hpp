#pragma once

#include "lmmlasso/conditions.hpp"
#include "lmmlasso/model.hpp"
#include "lmmlasso/reml.hpp"
#include "lmmlasso/simulate.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace lmmlasso {

/// A CSV file with a header row; fields are kept as text.
struct CsvTable {
    std::string source;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    [[nodiscard]] Index rows_count() const { return static_cast<Index>(rows.size()); }
    /// Zero-based column position; throws InputError naming the file if absent.
    [[nodiscard]] std::size_t column(const std::string& name) const;
    /// Parses a column as numbers, with row/column diagnostics on failure.
    [[nodiscard]] Vector numeric(const std::string& name) const;
};

[[nodiscard]] CsvTable read_csv(std::istream& in, const std::string& source);
[[nodiscard]] CsvTable read_csv(const std::filesystem::path& path);

/// Dense numeric matrix from a headerless CSV (used for custom components).
[[nodiscard]] Matrix read_matrix_csv(const std::filesystem::path& path);

struct DataConfig {
    std::string response = "y";
    std::vector<std::string> covariates;
    std::optional<std::string> cluster;
    /// Prepend a column of ones labelled "(Intercept)".
    bool intercept = false;
    /// linear template: random-effect columns, "1" for a random intercept.
    std::vector<std::string> random;
    /// custom template: files holding the dense n x n components, last one positive definite.
    std::vector<std::filesystem::path> components;
};

struct PenaltyConfig {
    /// Explicit penalties, one per fixed effect; overrides the rule.
    std::optional<Vector> lambda;
    /// "sqrt_n_over_2" gives lambda_j = sqrt(n) / 2.
    std::string rule = "sqrt_n_over_2";
};

struct Config {
    DataConfig data;
    CovarianceTemplate template_kind = CovarianceTemplate::random_intercept;
    RemlOptions reml;
    PenaltyConfig penalty;
    double alpha = 0.05;
    ConditionThresholds conditions;
    SimConfig simulation;
};

/// INI-style file with sections [data], [model], [penalty], [inference],
/// [conditions] and [simulation]. Unknown keys are errors. Relative component
/// paths resolve against `base_dir`.
[[nodiscard]] Config parse_config(std::istream& in, const std::filesystem::path& base_dir = {});
[[nodiscard]] Config load_config(const std::filesystem::path& path);

[[nodiscard]] CovarianceTemplate parse_template(const std::string& name);
[[nodiscard]] std::string to_string(CovarianceTemplate kind);

/// Penalty vector for n observations and p fixed effects.
[[nodiscard]] Vector resolve_lambda(const PenaltyConfig& penalty, Index n, Index p);

/// Builds the model described by the config from a data table.
[[nodiscard]] ModelData build_model(const CsvTable& table, const Config& config);

}  // namespace lmmlasso
