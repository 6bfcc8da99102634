#pragma once

// Declarative experiments: a versioned JSON config names presets, a grid,
// orders and tolerances; run_experiment drives the probe / compose / verify
// pipelines and writes report.json, metadata.json, CSV tables and .sgf grid
// functions into one output directory.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgfio/verify.hpp"

namespace sgfio {

constexpr int config_schema_version = 1;

enum class ExperimentKind { check_symbol, check_phase, check_weight, apply, compose, parametrix, egorov, l2norm, remainder };

std::string to_string(ExperimentKind k);
std::optional<ExperimentKind> parse_experiment_kind(const std::string& s);
const std::vector<std::string>& experiment_kind_names();

struct PresetRef {
    std::string name;
    std::map<std::string, double> params;
    bool operator==(const PresetRef&) const = default;
};

struct GridSpec {
    std::size_t points_per_axis = 128;
    double half_width = 10.0;
    bool operator==(const GridSpec&) const = default;
};

struct InputSpec {
    TestKind kind = TestKind::gaussian;
    double width = 1.0;
    std::vector<double> center, frequency;
    int hermite_index = 0;
    bool operator==(const InputSpec&) const = default;
};

struct Tolerances {
    double threshold = 100.0;   // seminorm / moderation constants
    double tail = 1e-10;        // apply tail guard
    double defect = 1e-3;       // compose: relative L^2 defect at the largest M
    double adjoint = 1e-8;      // apply: adjoint pair defect
    double slack = 0.5;         // remainder slopes
    double variation = 0.1;     // l2norm: (max - min) / min across grids
    double defect_radius = 4.0; // parametrix defect probes
    double growth = 10.0;       // egorov: scaled discrepancy vs its value at <xi> = 4
    bool operator==(const Tolerances&) const = default;
};

struct OutputSpec {
    bool csv = true;
    bool grid_functions = true;
    bool operator==(const OutputSpec&) const = default;
};

struct ExperimentConfig {
    int schema = config_schema_version;
    ExperimentKind kind = ExperimentKind::apply;
    std::string name;  // output subdirectory; defaults to the kind
    std::size_t dimension = 1;
    GridSpec grid;
    std::vector<GridSpec> grids;  // l2norm refinement matrix
    PresetRef phase{"identity", {}};
    PresetRef symbol{"one", {}};             // the amplitude / symbol under test
    std::optional<PresetRef> symbol_b;       // second amplitude (FIO pairs); defaults to symbol
    std::optional<PresetRef> p;              // pseudo-differential factor
    std::vector<PresetRef> symbols;          // l2norm preset list
    std::optional<PresetRef> weight;         // check-weight, check-symbol, parametrix
    InputSpec input;
    std::string operator_kind = "fio_type1";  // apply, l2norm
    double quantization = 0.0;                // pdo_t
    std::string mode = "pdo_fio1";            // compose / remainder: mixed modes or I_II / II_I
    std::vector<int> orders{3};
    int K = 1;
    Tolerances tolerances;
    OutputSpec output;
    std::uint64_t seed = 0;

    bool operator==(const ExperimentConfig&) const = default;
};

struct ConfigViolation {
    std::string path;     // e.g. "grid.points_per_axis"
    std::string message;
};

struct ParseResult {
    std::optional<ExperimentConfig> config;
    std::vector<ConfigViolation> violations;  // every violation, not just the first
    bool ok() const { return config.has_value(); }
};

ParseResult parse_config(const std::string& text);
ParseResult parse_config(const nlohmann::json& j);
/// Normalized form (all defaults explicit); parse_config(to_json(c)) == c.
nlohmann::json to_json(const ExperimentConfig& c);
std::string format_violations(const std::vector<ConfigViolation>& v);

/// Closest candidate by edit distance, if reasonably close.
std::optional<std::string> suggest(const std::string& word, const std::vector<std::string>& candidates);

struct RunOptions {
    std::string out_dir;           // created if missing
    std::vector<std::string> argv; // recorded in metadata.json
    unsigned threads = 1;
};

struct RunOutcome {
    nlohmann::json report;
    bool pass = false;
    int exit_code = 1;  // 0 iff every check passed and nothing threw
    std::vector<std::string> files;
};

/// Deterministic given the config: report.json carries no timings (those go
/// to metadata.json). Module errors are captured into the report.
RunOutcome run_experiment(const ExperimentConfig& c, const RunOptions& opt);

/// Output root: $SGFIO_OUT if set, else "sgfio-out".
std::string default_output_root();

}  // namespace sgfio
