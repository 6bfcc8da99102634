#include "sgfio/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

namespace sgfio {

using nlohmann::json;
namespace fs = std::filesystem;

// -------------------------------------------------------------------- kinds

namespace {

constexpr ExperimentKind all_kinds[] = {
    ExperimentKind::check_symbol, ExperimentKind::check_phase, ExperimentKind::check_weight,
    ExperimentKind::apply,        ExperimentKind::compose,     ExperimentKind::parametrix,
    ExperimentKind::egorov,       ExperimentKind::l2norm,      ExperimentKind::remainder};

const std::vector<std::string> mode_names{"pdo_fio1", "fio1_pdo", "fio2_pdo", "pdo_fio2", "I_II", "II_I"};
const std::vector<std::string> operator_kind_names{"fio_type1", "fio_type2", "pdo_t"};
const std::vector<std::string> test_kind_names{"gaussian", "hermite", "modulated_gaussian"};

// parameters each preset accepts
const std::map<std::string, std::vector<std::string>> symbol_params{{"theta", {"m", "mu"}}, {"gauss_x", {"width"}}};
const std::map<std::string, std::vector<std::string>> phase_params{{"transport", {"t"}}, {"perturbed", {"eps"}}};
const std::map<std::string, std::vector<std::string>> weight_params{{"theta", {"m", "mu"}}, {"constant", {"c"}}};

bool is_pair_mode(const std::string& m) { return m == "I_II" || m == "II_I"; }

}  // namespace

std::string to_string(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::check_symbol: return "check-symbol";
        case ExperimentKind::check_phase: return "check-phase";
        case ExperimentKind::check_weight: return "check-weight";
        case ExperimentKind::apply: return "apply";
        case ExperimentKind::compose: return "compose";
        case ExperimentKind::parametrix: return "parametrix";
        case ExperimentKind::egorov: return "egorov";
        case ExperimentKind::l2norm: return "l2norm";
        case ExperimentKind::remainder: return "remainder";
    }
    return "?";
}

std::optional<ExperimentKind> parse_experiment_kind(const std::string& s) {
    for (auto k : all_kinds)
        if (to_string(k) == s) return k;
    return std::nullopt;
}

const std::vector<std::string>& experiment_kind_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> v;
        for (auto k : all_kinds) v.push_back(to_string(k));
        return v;
    }();
    return names;
}

// ---------------------------------------------------------------- suggest

std::optional<std::string> suggest(const std::string& word, const std::vector<std::string>& candidates) {
    auto dist = [](const std::string& a, const std::string& b) {
        std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
        for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
        for (std::size_t i = 1; i <= a.size(); ++i) {
            cur[0] = i;
            for (std::size_t j = 1; j <= b.size(); ++j)
                cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] != b[j - 1])});
            std::swap(prev, cur);
        }
        return prev[b.size()];
    };
    std::optional<std::string> best;
    std::size_t bd = std::max<std::size_t>(2, word.size() / 3) + 1;
    for (const auto& c : candidates) {
        const auto d = dist(word, c);
        if (d < bd) bd = d, best = c;
    }
    return best;
}

std::string format_violations(const std::vector<ConfigViolation>& v) {
    std::string s;
    for (const auto& e : v) s += (e.path.empty() ? std::string("<root>") : e.path) + ": " + e.message + "\n";
    return s;
}

// ------------------------------------------------------------------ parsing

namespace {

class Parser {
public:
    std::vector<ConfigViolation> out;

    void fail(const std::string& path, const std::string& msg) { out.push_back({path, msg}); }

    static std::string join(const std::string& path, const std::string& key) {
        return path.empty() ? key : path + "." + key;
    }

    void unknown_keys(const json& obj, const std::string& path, const std::vector<std::string>& allowed) {
        for (const auto& [k, v] : obj.items()) {
            if (std::find(allowed.begin(), allowed.end(), k) != allowed.end()) continue;
            std::string msg = "unknown key '" + k + "'";
            if (auto s = suggest(k, allowed)) msg += " (did you mean '" + *s + "'?)";
            fail(join(path, k), msg);
        }
    }

    bool object(const json& j, const std::string& path) {
        if (j.is_object()) return true;
        fail(path, "must be an object");
        return false;
    }

    // finite number in [lo, hi]; open bounds when the flags say so
    void number(const json& obj, const std::string& key, const std::string& path, double& v, double lo, double hi,
                bool lo_open = false) {
        if (!obj.contains(key)) return;
        const auto& j = obj[key];
        const auto p = join(path, key);
        if (!j.is_number()) return fail(p, "must be a number");
        const double x = j.get<double>();
        if (!std::isfinite(x) || x < lo || x > hi || (lo_open && x == lo)) {
            std::ostringstream os;
            os << "must lie in " << (lo_open ? "(" : "[") << lo << ", " << hi << "], got " << x;
            return fail(p, os.str());
        }
        v = x;
    }

    template <class I>
    void integer(const json& obj, const std::string& key, const std::string& path, I& v, long long lo, long long hi) {
        if (!obj.contains(key)) return;
        const auto& j = obj[key];
        const auto p = join(path, key);
        if (!j.is_number_integer()) return fail(p, "must be an integer");
        if (j.is_number_unsigned()) {
            const auto x = j.get<unsigned long long>();
            if (hi >= 0 && x > static_cast<unsigned long long>(hi))
                return fail(p, "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
            v = static_cast<I>(x);
            return;
        }
        const auto x = j.get<long long>();
        if (x < lo || (hi >= 0 && x > hi)) return fail(p, "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
        v = static_cast<I>(x);
    }

    void boolean(const json& obj, const std::string& key, const std::string& path, bool& v) {
        if (!obj.contains(key)) return;
        if (!obj[key].is_boolean()) return fail(join(path, key), "must be true or false");
        v = obj[key].get<bool>();
    }

    void string(const json& obj, const std::string& key, const std::string& path, std::string& v) {
        if (!obj.contains(key)) return;
        if (!obj[key].is_string()) return fail(join(path, key), "must be a string");
        v = obj[key].get<std::string>();
    }

    void choice(const json& obj, const std::string& key, const std::string& path, std::string& v,
                const std::vector<std::string>& allowed, const char* what) {
        std::string s = v;
        const auto before = out.size();
        string(obj, key, path, s);
        if (out.size() != before) return;
        if (std::find(allowed.begin(), allowed.end(), s) == allowed.end()) {
            std::string msg = std::string("unknown ") + what + " '" + s + "'";
            if (auto g = suggest(s, allowed)) msg += "; did you mean '" + *g + "'?";
            return fail(join(path, key), msg);
        }
        v = s;
    }

    std::optional<PresetRef> preset(const json& j, const std::string& path, const std::vector<std::string>& names,
                                    const std::map<std::string, std::vector<std::string>>& params, const char* what) {
        PresetRef r;
        if (j.is_string()) {
            r.name = j.get<std::string>();
        } else if (j.is_object()) {
            unknown_keys(j, path, {"name", "params"});
            if (!j.contains("name") || !j["name"].is_string()) {
                fail(join(path, "name"), "required string");
                return std::nullopt;
            }
            r.name = j["name"].get<std::string>();
            if (j.contains("params")) {
                const auto& ps = j["params"];
                const auto pp = join(path, "params");
                if (!ps.is_object()) {
                    fail(pp, "must be an object of numbers");
                } else {
                    const auto it = params.find(r.name);
                    const std::vector<std::string> ok = it == params.end() ? std::vector<std::string>{} : it->second;
                    for (const auto& [k, v] : ps.items()) {
                        if (std::find(ok.begin(), ok.end(), k) == ok.end()) {
                            std::string msg = std::string(what) + " '" + r.name + "' takes no parameter '" + k + "'";
                            if (!ok.empty()) {
                                msg += " (accepted:";
                                for (const auto& o : ok) msg += " " + o;
                                msg += ")";
                            }
                            fail(join(pp, k), msg);
                        } else if (!v.is_number() || !std::isfinite(v.get<double>())) {
                            fail(join(pp, k), "must be a finite number");
                        } else {
                            r.params[k] = v.get<double>();
                        }
                    }
                }
            }
        } else {
            fail(path, "must be a preset name or {\"name\": ..., \"params\": {...}}");
            return std::nullopt;
        }
        if (std::find(names.begin(), names.end(), r.name) == names.end()) {
            std::string msg = std::string("unknown ") + what + " preset '" + r.name + "'";
            if (auto g = suggest(r.name, names)) msg += "; did you mean '" + *g + "'?";
            fail(j.is_string() ? path : join(path, "name"), msg);
            return std::nullopt;
        }
        return r;
    }

    void grid(const json& j, const std::string& path, GridSpec& g) {
        if (!object(j, path)) return;
        unknown_keys(j, path, {"points_per_axis", "half_width"});
        integer(j, "points_per_axis", path, g.points_per_axis, 4, 4096);
        if (g.points_per_axis % 2 != 0) fail(join(path, "points_per_axis"), "must be even");
        number(j, "half_width", path, g.half_width, 0.0, 1e6, true);
    }
};

json preset_json(const PresetRef& r) {
    json p = json::object();
    for (const auto& [k, v] : r.params) p[k] = v;
    return {{"name", r.name}, {"params", p}};
}

json grid_spec_json(const GridSpec& g) { return {{"points_per_axis", g.points_per_axis}, {"half_width", g.half_width}}; }

}  // namespace

ParseResult parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        return {std::nullopt, {{"", std::string("not valid JSON: ") + e.what()}}};
    }
    return parse_config(j);
}

ParseResult parse_config(const json& j) {
    Parser P;
    ExperimentConfig c;
    if (!j.is_object()) return {std::nullopt, {{"", "config must be a JSON object"}}};

    P.unknown_keys(j, "", {"schema",  "kind",    "name",          "dimension",    "grid",   "grids",
                           "phase",   "symbol",  "symbol_b",      "p",            "symbols", "weight",
                           "input",   "operator_kind", "quantization", "mode", "orders", "K",
                           "tolerances", "output", "seed"});

    if (!j.contains("schema"))
        P.fail("schema", "required (current version " + std::to_string(config_schema_version) + ")");
    else if (!j["schema"].is_number_integer() || j["schema"].get<long long>() != config_schema_version)
        P.fail("schema", "unsupported schema version (expected " + std::to_string(config_schema_version) + ")");

    if (!j.contains("kind")) {
        P.fail("kind", "required");
    } else {
        std::string k = "apply";
        P.choice(j, "kind", "", k, experiment_kind_names(), "experiment kind");
        if (auto kk = parse_experiment_kind(k)) c.kind = *kk;
    }
    P.string(j, "name", "", c.name);
    if (!c.name.empty() && (c.name.find('/') != std::string::npos || c.name.find("..") != std::string::npos))
        P.fail("name", "must be a plain directory name");
    P.integer(j, "dimension", "", c.dimension, 1, 3);
    if (j.contains("grid")) P.grid(j["grid"], "grid", c.grid);
    if (j.contains("grids")) {
        if (!j["grids"].is_array()) {
            P.fail("grids", "must be an array of grid specs");
        } else {
            for (std::size_t i = 0; i < j["grids"].size(); ++i) {
                GridSpec g;
                P.grid(j["grids"][i], "grids[" + std::to_string(i) + "]", g);
                c.grids.push_back(g);
            }
        }
    }

    const auto snames = symbol_preset_names(), pnames = phase_preset_names(), wnames = weight_preset_names();
    if (j.contains("phase"))
        if (auto r = P.preset(j["phase"], "phase", pnames, phase_params, "phase")) c.phase = *r;
    if (j.contains("symbol"))
        if (auto r = P.preset(j["symbol"], "symbol", snames, symbol_params, "symbol")) c.symbol = *r;
    if (j.contains("symbol_b") && !j["symbol_b"].is_null())
        c.symbol_b = P.preset(j["symbol_b"], "symbol_b", snames, symbol_params, "symbol");
    if (j.contains("p") && !j["p"].is_null()) c.p = P.preset(j["p"], "p", snames, symbol_params, "symbol");
    if (j.contains("weight") && !j["weight"].is_null())
        c.weight = P.preset(j["weight"], "weight", wnames, weight_params, "weight");
    if (j.contains("symbols")) {
        if (!j["symbols"].is_array()) {
            P.fail("symbols", "must be an array of presets");
        } else {
            for (std::size_t i = 0; i < j["symbols"].size(); ++i)
                if (auto r = P.preset(j["symbols"][i], "symbols[" + std::to_string(i) + "]", snames, symbol_params,
                                      "symbol"))
                    c.symbols.push_back(*r);
        }
    }

    if (j.contains("input") && P.object(j["input"], "input")) {
        const auto& in = j["input"];
        P.unknown_keys(in, "input", {"kind", "width", "center", "frequency", "hermite_index"});
        std::string k = to_string(c.input.kind);
        P.choice(in, "kind", "input", k, test_kind_names, "test function");
        c.input.kind = parse_test_kind(k);
        P.number(in, "width", "input", c.input.width, 0.0, 1e3, true);
        P.integer(in, "hermite_index", "input", c.input.hermite_index, 0, 20);
        for (const char* key : {"center", "frequency"}) {
            if (!in.contains(key)) continue;
            auto& dst = std::string(key) == "center" ? c.input.center : c.input.frequency;
            const auto p = std::string("input.") + key;
            if (!in[key].is_array()) {
                P.fail(p, "must be an array of numbers");
                continue;
            }
            for (const auto& v : in[key]) {
                if (!v.is_number() || !std::isfinite(v.get<double>())) {
                    P.fail(p, "must be an array of finite numbers");
                    break;
                }
                dst.push_back(v.get<double>());
            }
        }
    }

    P.choice(j, "operator_kind", "", c.operator_kind, operator_kind_names, "operator kind");
    P.number(j, "quantization", "", c.quantization, 0.0, 1.0);
    P.choice(j, "mode", "", c.mode, mode_names, "composition mode");
    if (j.contains("orders")) {
        if (!j["orders"].is_array() || j["orders"].empty()) {
            P.fail("orders", "must be a non-empty array of integers");
        } else {
            c.orders.clear();
            for (const auto& v : j["orders"]) {
                if (!v.is_number_integer() || v.get<long long>() < 0 || v.get<long long>() > max_expansion_order) {
                    P.fail("orders", "entries must be integers in [0, " + std::to_string(max_expansion_order) + "]");
                    break;
                }
                c.orders.push_back(v.get<int>());
            }
            if (!std::is_sorted(c.orders.begin(), c.orders.end()) ||
                std::adjacent_find(c.orders.begin(), c.orders.end()) != c.orders.end())
                P.fail("orders", "must be strictly increasing");
        }
    }
    P.integer(j, "K", "", c.K, 0, 4);

    if (j.contains("tolerances") && P.object(j["tolerances"], "tolerances")) {
        const auto& t = j["tolerances"];
        auto& T = c.tolerances;
        P.unknown_keys(t, "tolerances",
                       {"threshold", "tail", "defect", "adjoint", "slack", "variation", "defect_radius", "growth"});
        P.number(t, "threshold", "tolerances", T.threshold, 0, 1e12, true);
        P.number(t, "tail", "tolerances", T.tail, 0, 1, true);
        P.number(t, "defect", "tolerances", T.defect, 0, 10, true);
        P.number(t, "adjoint", "tolerances", T.adjoint, 0, 1, true);
        P.number(t, "slack", "tolerances", T.slack, 0, 10);
        P.number(t, "variation", "tolerances", T.variation, 0, 10, true);
        P.number(t, "defect_radius", "tolerances", T.defect_radius, 0, 1e6);
        P.number(t, "growth", "tolerances", T.growth, 1, 1e12);
    }
    if (j.contains("output") && P.object(j["output"], "output")) {
        P.unknown_keys(j["output"], "output", {"csv", "grid_functions"});
        P.boolean(j["output"], "csv", "output", c.output.csv);
        P.boolean(j["output"], "grid_functions", "output", c.output.grid_functions);
    }
    P.integer(j, "seed", "", c.seed, 0, -1);

    // cross-field requirements
    const auto d = c.dimension;
    for (const char* key : {"center", "frequency"}) {
        const auto& v = std::string(key) == "center" ? c.input.center : c.input.frequency;
        if (!v.empty() && v.size() != d)
            P.fail(std::string("input.") + key, "must have " + std::to_string(d) + " entries (the dimension)");
    }
    const bool mixed = !is_pair_mode(c.mode);
    if (c.orders.empty()) c.orders.push_back(0);  // already reported
    switch (c.kind) {
        case ExperimentKind::compose:
            if (mixed && !c.p) P.fail("p", "required for compose with a mixed mode");
            if (c.orders.back() < 1) P.fail("orders", "compose needs an order >= 1");
            break;
        case ExperimentKind::remainder:
            if (!mixed) P.fail("mode", "remainder probes take the mixed modes");
            if (!c.p) P.fail("p", "required for remainder");
            if (c.orders.back() >= RemainderOptions{}.M_ref)
                P.fail("orders", "must stay below the reference order " + std::to_string(RemainderOptions{}.M_ref));
            break;
        case ExperimentKind::egorov:
            if (!c.p) P.fail("p", "required for egorov");
            if (c.orders.back() < 1) P.fail("orders", "egorov needs an order >= 1");
            break;
        case ExperimentKind::parametrix:
            if (c.orders.back() < 1) P.fail("orders", "parametrix needs a depth >= 1");
            break;
        case ExperimentKind::check_weight:
            if (!c.weight) P.fail("weight", "required for check-weight");
            break;
        default: break;
    }

    // presets must instantiate with their parameters
    auto try_make = [&](const std::string& path, auto&& make) {
        try {
            make();
        } catch (const std::exception& e) {
            P.fail(path, e.what());
        }
    };
    if (P.out.empty()) {
        try_make("phase", [&] { phase_preset(c.phase.name, c.phase.params, d); });
        try_make("symbol", [&] { symbol_preset(c.symbol.name, c.symbol.params, d); });
        if (c.symbol_b) try_make("symbol_b", [&] { symbol_preset(c.symbol_b->name, c.symbol_b->params, d); });
        if (c.p) try_make("p", [&] { symbol_preset(c.p->name, c.p->params, d); });
        if (c.weight) try_make("weight", [&] { weight_preset(c.weight->name, c.weight->params, d); });
        for (std::size_t i = 0; i < c.symbols.size(); ++i)
            try_make("symbols[" + std::to_string(i) + "]",
                     [&] { symbol_preset(c.symbols[i].name, c.symbols[i].params, d); });
    }

    if (!P.out.empty()) return {std::nullopt, std::move(P.out)};
    return {std::move(c), {}};
}

json to_json(const ExperimentConfig& c) {
    json j;
    j["schema"] = c.schema;
    j["kind"] = to_string(c.kind);
    j["name"] = c.name;
    j["dimension"] = c.dimension;
    j["grid"] = grid_spec_json(c.grid);
    j["grids"] = json::array();
    for (const auto& g : c.grids) j["grids"].push_back(grid_spec_json(g));
    j["phase"] = preset_json(c.phase);
    j["symbol"] = preset_json(c.symbol);
    if (c.symbol_b) j["symbol_b"] = preset_json(*c.symbol_b);
    if (c.p) j["p"] = preset_json(*c.p);
    j["symbols"] = json::array();
    for (const auto& s : c.symbols) j["symbols"].push_back(preset_json(s));
    if (c.weight) j["weight"] = preset_json(*c.weight);
    j["input"] = {{"kind", to_string(c.input.kind)},
                  {"width", c.input.width},
                  {"center", c.input.center},
                  {"frequency", c.input.frequency},
                  {"hermite_index", c.input.hermite_index}};
    j["operator_kind"] = c.operator_kind;
    j["quantization"] = c.quantization;
    j["mode"] = c.mode;
    j["orders"] = c.orders;
    j["K"] = c.K;
    const auto& T = c.tolerances;
    j["tolerances"] = {{"threshold", T.threshold}, {"tail", T.tail},       {"defect", T.defect},
                       {"adjoint", T.adjoint},     {"slack", T.slack},     {"variation", T.variation},
                       {"defect_radius", T.defect_radius}, {"growth", T.growth}};
    j["output"] = {{"csv", c.output.csv}, {"grid_functions", c.output.grid_functions}};
    j["seed"] = c.seed;
    return j;
}

std::string default_output_root() {
    const char* e = std::getenv("SGFIO_OUT");
    return e && *e ? std::string(e) : std::string("sgfio-out");
}

// ------------------------------------------------------------------ running

namespace {

std::string num(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::string index_str(const MultiIndex& a) {
    std::string s;
    for (std::size_t i = 0; i < a.size(); ++i) s += (i ? " " : "") + std::to_string(a[i]);
    return s;
}

class Csv {
public:
    explicit Csv(std::vector<std::string> header) : header_(std::move(header)) {}
    void row(std::vector<std::string> r) { rows_.push_back(std::move(r)); }
    void write(const fs::path& p) const {
        std::ofstream os(p, std::ios::binary);
        auto line = [&](const std::vector<std::string>& r) {
            for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << quote(r[i]);
            os << "\n";
        };
        line(header_);
        for (const auto& r : rows_) line(r);
    }

private:
    // RFC 4180: ray labels in d = 2 carry commas
    static std::string quote(const std::string& f) {
        if (f.find_first_of(",\"\n") == std::string::npos) return f;
        std::string q = "\"";
        for (char ch : f) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
        return q + "\"";
    }

    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

std::string error_kind(const std::exception& e) {
    if (dynamic_cast<const TailMassError*>(&e)) return "TailMassError";
    if (dynamic_cast<const HypothesisError*>(&e)) return "HypothesisError";
    if (dynamic_cast<const NewtonError*>(&e)) return "NewtonError";
    if (dynamic_cast<const GridError*>(&e)) return "GridError";
    if (dynamic_cast<const ProbeError*>(&e)) return "ProbeError";
    if (dynamic_cast<const CutoffRegionError*>(&e)) return "CutoffRegionError";
    if (dynamic_cast<const AsymptoticSumError*>(&e)) return "AsymptoticSumError";
    if (dynamic_cast<const std::domain_error*>(&e)) return "domain_error";
    if (dynamic_cast<const std::invalid_argument*>(&e)) return "invalid_argument";
    return "runtime_error";
}

// One run: accumulates checks, results and files; everything lands in the
// report even if a later stage throws.
struct Run {
    const ExperimentConfig& c;
    fs::path dir;
    json checks = json::array();
    json results = json::object();
    std::vector<std::string> files;
    std::size_t d;

    Run(const ExperimentConfig& cfg, fs::path out) : c(cfg), dir(std::move(out)), d(cfg.dimension) {}

    bool check(const std::string& invariant, const std::string& subject, bool pass, double value, double bound,
               json detail = nullptr) {
        json e{{"invariant", invariant}, {"subject", subject}, {"pass", pass}, {"value", value}, {"bound", bound}};
        if (!detail.is_null()) e["detail"] = std::move(detail);
        checks.push_back(std::move(e));
        return pass;
    }

    void csv(const std::string& name, const Csv& t) {
        if (!c.output.csv) return;
        t.write(dir / name);
        files.push_back(name);
    }

    void grid_function(const std::string& name, const GridFunction& f) {
        if (!c.output.grid_functions) return;
        save_binary(f, (dir / (name + ".sgf")).string());
        files.push_back(name + ".sgf");
        if (c.output.csv) {
            std::ofstream os(dir / (name + ".csv"), std::ios::binary);
            write_csv(f, os);
            files.push_back(name + ".csv");
        }
    }

    SymbolHandle symbol(const PresetRef& r) const { return symbol_preset(r.name, r.params, d); }
    PhaseHandle phase() const { return phase_preset(c.phase.name, c.phase.params, d); }
    Grid grid(const GridSpec& g) const { return make_grid(d, g.points_per_axis, g.half_width); }

    GridFunction input(const Grid& g) const {
        TestParams tp;
        tp.width = c.input.width;
        tp.center = c.input.center;
        tp.frequency = c.input.frequency;
        tp.hermite_index = c.input.hermite_index;
        return test_function(g, c.input.kind, tp);
    }

    // Phase admissibility gate for every FIO pipeline; names the failed probe.
    bool phase_gate(const PhaseHandle& phi, bool regular) {
        PhaseProbeOptions po;
        po.seminorm_threshold = c.tolerances.threshold;
        const auto r = phase_probe(phi, default_probes(d), po);
        results["phase_probe"] = to_json(r);
        const json det{{"failed_probe", r.failed}};
        bool ok = check("phase.simple", phi.name, r.simple, r.simple ? 1.0 : 0.0, 1.0, det);
        if (regular) ok = check("phase.regular", phi.name, r.regular, r.det_min, po.det_bound, det) && ok;
        return ok;
    }

    OperatorSpec fio_or_pdo(const std::string& kind, const SymbolHandle& a, const PhaseHandle& phi) const {
        if (kind == "fio_type1") return make_fio1(phi, a);
        if (kind == "fio_type2") return make_fio2(phi, a);
        return make_pdo(a, c.quantization);
    }

    void check_symbol();
    void check_phase();
    void check_weight();
    void apply();
    void compose();
    void parametrix();
    void egorov();
    void l2norm();
    void remainder();
};

void Run::check_symbol() {
    const auto a = symbol(c.symbol);
    const auto w = c.weight ? weight_preset(c.weight->name, c.weight->params, d) : a.weight;
    const auto rep = seminorm_probe(a, w, a.r, a.rho, c.K, default_probes(d), c.tolerances.threshold);
    results["seminorm"] = to_json(rep);
    check("symbol.seminorm_bound", a.name + " in SG^(" + w.provenance + ")", rep.pass, rep.max_constant,
          c.tolerances.threshold);
    Csv t({"alpha", "beta", "constant"});
    for (const auto& e : rep.orders) t.row({index_str(e.alpha), index_str(e.beta), num(e.constant)});
    csv("seminorms.csv", t);

    const auto probes = random_probes(d, 100, c.seed, 10.0);
    FdResult worst;
    for (const auto& z : probes.points) {
        const auto r = fd_check(*a.f, z, 4);
        worst.checks += r.checks;
        if (r.worst >= worst.worst) worst.worst = r.worst, worst.where = r.where;
    }
    results["jet_integrity"] = {{"worst", worst.worst}, {"where", worst.where}, {"checks", worst.checks}};
    check("field.jet_integrity", a.name, worst.worst <= 1.0, worst.worst, 1.0);
}

void Run::check_phase() {
    const auto phi = phase();
    if (!phase_gate(phi, true)) return;
    const auto r = psi_decay_probe(phi);
    results["psi_decay"] = r.json;
    for (const auto& e : r.entries)
        check("mixed.psi_decay", phi.name + " alpha=" + index_str(e.alpha), e.pass,
              std::max(e.x_fit.vanishes ? -1e300 : e.x_fit.slope - e.x_bound,
                       e.xi_fit.vanishes ? -1e300 : e.xi_fit.slope - e.xi_bound),
              0.0);
    Csv t({"alpha", "ray", "t", "magnitude"});
    for (const auto& e : r.entries)
        for (const auto* f : {&e.x_fit, &e.xi_fit})
            for (std::size_t i = 0; i < f->t.size(); ++i)
                t.row({index_str(e.alpha), f->ray, num(f->t[i]), num(f->magnitude[i])});
    csv("psi_decay.csv", t);
}

void Run::check_weight() {
    const auto w = weight_preset(c.weight->name, c.weight->params, d);
    const auto probes = default_probes(d);
    ModerationOptions mo;
    mo.threshold = c.tolerances.threshold;
    const auto m = weight_probe(w, w.r, w.rho, c.K, probes, mo);
    results["moderation"] = to_json(m);
    check("weight.moderate", w.provenance, m.pass, std::max(m.v_ratio_max, [&] {
              double x = 0;
              for (const auto& e : m.orders) x = std::max(x, e.constant);
              return x;
          }()),
          c.tolerances.threshold);
    Csv t({"alpha", "beta", "constant"});
    for (const auto& e : m.orders) t.row({index_str(e.alpha), index_str(e.beta), num(e.constant)});
    csv("weight_orders.csv", t);

    const auto phi = phase();
    const auto r1 = invariance_probe(w, phi.grad_xi, 1, probes, &phi);
    const auto r2 = invariance_probe(w, transpose(phi.grad_x, d), 2, probes);
    results["invariance"] = {{"side1", to_json(r1)}, {"side2", to_json(r2)}};
    check("weight.phase_invariance", w.provenance + " under " + phi.name + ", side 1", r1.pass, r1.ratio_max,
          InvarianceOptions{}.ratio_bound);
    check("weight.phase_invariance", w.provenance + " under " + phi.name + ", side 2", r2.pass, r2.ratio_max,
          InvarianceOptions{}.ratio_bound);
}

void Run::apply() {
    const auto g = grid(c.grid);
    const auto a = symbol(c.symbol);
    const auto phi = phase();
    if (c.operator_kind != "pdo_t" && !phase_gate(phi, c.operator_kind == "fio_type2")) return;
    const auto op = fio_or_pdo(c.operator_kind, a, phi);
    const auto u = input(g);
    grid_function("input", u);
    ApplyOptions ao;
    ao.tail_threshold = c.tolerances.tail;
    const auto r = apply_checked(op, u, ao);
    grid_function("output", r.out);
    results["apply"] = {{"operator", to_string(op.kind)},
                        {"symbol", a.name},
                        {"phase", c.operator_kind == "pdo_t" ? json(nullptr) : json(phi.name)},
                        {"grid", grid_json(g)},
                        {"input_norm", u.norm()},
                        {"output_norm", r.out.norm()},
                        {"tail_ratio", r.tail_ratio},
                        {"warnings", r.warnings}};
    check("operator.tail_guard", to_string(op.kind), r.tail_ratio <= c.tolerances.tail, r.tail_ratio,
          c.tolerances.tail);

    // seeded companion v for the adjoint pair
    std::mt19937_64 rng(c.seed);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    TestParams tp;
    tp.width = 0.9 + 0.2 * (U(rng) + 1) / 2;
    for (std::size_t i = 0; i < d; ++i) tp.center.push_back(U(rng)), tp.frequency.push_back(2 * U(rng));
    const auto v = test_function(g, TestKind::modulated_gaussian, tp);
    const auto Av = apply_checked(adjoint(op), v, ao).out;
    const double defect = std::abs(inner_product(r.out, v) - inner_product(u, Av)) / (u.norm() * v.norm());
    results["adjoint_pair"] = {{"defect", defect}, {"seed", c.seed}};
    check("operator.adjoint_pair", to_string(op.kind), defect <= c.tolerances.adjoint, defect, c.tolerances.adjoint);
}

void Run::compose() {
    const auto g = grid(c.grid);
    const auto a = symbol(c.symbol);
    const auto b = c.symbol_b ? symbol(*c.symbol_b) : a;
    const auto phi = phase();
    const bool pair = is_pair_mode(c.mode);
    const bool type2 = pair || c.mode == "fio2_pdo" || c.mode == "pdo_fio2";
    if (!phase_gate(phi, type2)) return;
    const auto u = input(g);
    grid_function("input", u);

    GridFunction direct;
    std::optional<CompositionSpec> spec;
    if (pair) {
        const auto A = make_fio1(phi, a), B = make_fio2(phi, b);
        direct = c.mode == "I_II" ? apply_checked(A, apply_checked(B, u).out).out
                                  : apply_checked(B, apply_checked(A, u).out).out;
    } else {
        spec = CompositionSpec{parse_mixed_mode(c.mode), symbol(*c.p), a, phi, {}};
        direct = apply_direct(*spec, u);
    }
    grid_function("direct", direct);

    Csv t({"M", "defect"});
    json rows = json::array();
    std::vector<double> defects;
    for (int M : c.orders) {
        double defect = 1.0;  // M = 0: the empty sum
        if (M > 0) {
            const auto r = pair ? compose_fio_pair(parse_pair_order(c.mode), a, b, phi, M)
                                : compose_mixed(spec->mode, spec->p, a, phi, M);
            const auto out = apply_checked(r.as_operator(), u).out;
            defect = relative_error(out, direct);
            if (M == c.orders.back()) {
                grid_function("composed", out);
                results["composition"] = to_json(r);
            }
        }
        defects.push_back(defect);
        rows.push_back({{"M", M}, {"defect", defect}});
        t.row({std::to_string(M), num(defect)});
    }
    csv("defects.csv", t);
    results["defects"] = rows;
    const std::string subject = c.mode + " under " + phi.name;
    check("compose.direct_agreement", subject + " at M=" + std::to_string(c.orders.back()),
          defects.back() <= c.tolerances.defect, defects.back(), c.tolerances.defect);
    if (defects.size() > 1)
        check("compose.defect_decreases", subject, defects.back() < defects.front(), defects.back(), defects.front());
}

void Run::parametrix() {
    const auto a = symbol(c.symbol);
    const auto phi = phase();
    if (!phase_gate(phi, true)) return;
    const auto w = c.weight ? weight_preset(c.weight->name, c.weight->params, d) : a.weight;
    ParametrixOptions po;
    po.K = c.K;
    po.threshold = c.tolerances.threshold;
    po.defect_radius = c.tolerances.defect_radius;
    const int M = c.orders.back();
    const auto r = sgfio::parametrix(a, phi, w, M, po);
    results["parametrix"] = r.report;
    Csv t({"k", "class_m", "class_mu", "constant", "whole_space_constant"});
    for (std::size_t k = 0; k < r.defects.size(); ++k) {
        const double m = -static_cast<double>(k + 1);
        check("parametrix.defect_class",
              "r_" + std::to_string(k) + " in theta(" + num(m) + "," + num(m) + ")", r.defects[k].pass,
              r.defects[k].max_constant, c.tolerances.threshold);
        t.row({std::to_string(k), num(m), num(m), num(r.defects[k].max_constant), num(r.whole_space_constants[k])});
    }
    csv("defects.csv", t);
}

void Run::egorov() {
    const auto p = symbol(*c.p);
    const auto a = symbol(c.symbol);
    const auto phi = phase();
    if (!phase_gate(phi, true)) return;
    const int M = c.orders.back();
    const auto ch = egorov_chain(p, a, phi, M);
    const auto eg = egorov_symbol(p, a, phi, EgorovVariant::sandwich_adjoint);
    const std::vector<double> ts{4, 8, 16, 32, 64};
    Csv t({"ray", "t", "chain_re", "chain_im", "egorov_re", "egorov_im", "discrepancy", "scaled"});
    json rays = json::array();
    for (const auto& ray : {xi_ray(1.0), xi_ray(-3.0)}) {
        std::vector<double> s;
        bool rounding = true;  // agreement to rounding: the scaled ratio is noise
        for (double tt : ts) {
            const auto z = ray.at(tt);
            const cplx cv = ch.symbol(z), ev = eg(z);
            const double disc = std::abs(cv - ev);
            rounding = rounding && disc <= 1e3 * std::numeric_limits<double>::epsilon() * std::max({std::abs(cv), std::abs(ev), 1.0});
            // remainder class is w_p w_a theta_{-1,-1}; on a xi-ray <x> is fixed
            s.push_back(disc * tt / (p.weight(z) * a.weight(z)));
            t.row({ray.str(), num(tt), num(cv.real()), num(cv.imag()), num(ev.real()), num(ev.imag()), num(disc),
                   num(s.back())});
        }
        const double mx = *std::max_element(s.begin(), s.end());
        rays.push_back({{"ray", ray.str()}, {"t", ts}, {"scaled", s}, {"rounding_level", rounding}});
        check("egorov.leading_symbol", ray.str(), rounding || mx <= c.tolerances.growth * s.front(), mx,
              c.tolerances.growth * s.front(), rounding ? json{{"rounding_level", true}} : json());
    }
    csv("egorov.csv", t);
    results["egorov"] = {{"M", M}, {"phase", phi.name}, {"p", p.name}, {"a", a.name}, {"rays", rays}};
}

void Run::l2norm() {
    const auto phi = phase();
    if (c.operator_kind != "pdo_t" && !phase_gate(phi, c.operator_kind == "fio_type2")) return;
    const auto grids = c.grids.empty() ? std::vector<GridSpec>{c.grid} : c.grids;
    const auto presets = c.symbols.empty() ? std::vector<PresetRef>{c.symbol} : c.symbols;
    Csv t({"preset", "N", "L", "norm", "iterations", "residual", "converged", "schur"});
    json table = json::array();
    for (const auto& pr : presets) {
        const auto a = symbol(pr);
        const auto op = fio_or_pdo(c.operator_kind, a, phi);
        std::vector<double> norms;
        bool converged = true, dominated = true;
        std::size_t admissible = 0;
        double worst_gap = -1e300;
        for (const auto& gs : grids) {
            const auto g = grid(gs);
            const auto n = operator_norm(op, g, 2000, c.seed);
            norms.push_back(n.value);
            converged = converged && n.converged;
            json row = to_json(n);
            row["preset"] = a.name;
            std::string schur;
            try {
                const double s = schur_bound(op, g);
                ++admissible;
                dominated = dominated && n.value <= s + 1e-6;
                worst_gap = std::max(worst_gap, n.value - s);
                row["schur"] = s;
                schur = num(s);
            } catch (const TailMassError&) {
                row["schur"] = nullptr;  // kernel not integrable on this grid: Schur test not admissible
            }
            table.push_back(row);
            t.row({a.name, std::to_string(gs.points_per_axis), num(gs.half_width), num(n.value),
                   std::to_string(n.iterations), num(n.residual), n.converged ? "1" : "0", schur});
        }
        const auto [lo, hi] = std::minmax_element(norms.begin(), norms.end());
        const double var = (*hi - *lo) / *lo;
        check("verify.norm_converged", a.name, converged, converged ? 1.0 : 0.0, 1.0);
        check("verify.norm_stability", a.name, var <= c.tolerances.variation, var, c.tolerances.variation);
        if (admissible > 0) check("verify.schur_dominance", a.name, dominated, worst_gap, 1e-6);
    }
    csv("norms.csv", t);
    results["norms"] = table;
}

void Run::remainder() {
    const auto g = grid(c.grid);
    const auto phi = phase();
    const auto mode = parse_mixed_mode(c.mode);
    if (!phase_gate(phi, mode == MixedMode::fio2_pdo || mode == MixedMode::pdo_fio2)) return;
    const CompositionSpec spec{mode, symbol(*c.p), symbol(c.symbol), phi, {}};
    RemainderOptions ro;
    ro.slack = c.tolerances.slack;
    const auto r = remainder_probe(spec, c.orders, {input(g)}, {xi_ray(1.0), xi_ray(-2.0, -1.0)}, ro);
    results["remainder"] = r.json;
    const std::string subject = c.mode + ": " + spec.p.name + " with " + spec.a.name + " under " + phi.name;
    check("mixed.remainder_symbol_monotone", subject, r.symbol_monotone, r.symbol_monotone ? 1.0 : 0.0, 1.0);
    check("mixed.remainder_order_drop", subject, r.slopes_ok, r.slopes_ok ? 1.0 : 0.0, 1.0);
    check("mixed.remainder_operator_monotone", subject, r.operator_monotone, r.operator_monotone ? 1.0 : 0.0, 1.0);

    Csv ts({"M", "ray", "t", "magnitude", "slope"});
    Csv to({"M", "defect"});
    for (std::size_t k = 0; k < r.orders.size(); ++k) {
        for (const auto& f : r.fits[k])
            for (std::size_t i = 0; i < f.t.size(); ++i)
                ts.row({std::to_string(r.orders[k]), f.ray, num(f.t[i]), num(f.magnitude[i]),
                        f.vanishes ? "-inf" : num(f.slope)});
        for (double dft : r.operator_defects[k]) to.row({std::to_string(r.orders[k]), num(dft)});
    }
    csv("remainder_symbol.csv", ts);
    csv("remainder_operator.csv", to);
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

RunOutcome run_experiment(const ExperimentConfig& c, const RunOptions& opt) {
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path dir = opt.out_dir.empty() ? fs::path(default_output_root()) / (c.name.empty() ? to_string(c.kind) : c.name)
                                             : fs::path(opt.out_dir);
    fs::create_directories(dir);
    const unsigned saved = thread_count();
    set_thread_count(opt.threads);

    Run run(c, dir);
    json error = nullptr;
    try {
        switch (c.kind) {
            case ExperimentKind::check_symbol: run.check_symbol(); break;
            case ExperimentKind::check_phase: run.check_phase(); break;
            case ExperimentKind::check_weight: run.check_weight(); break;
            case ExperimentKind::apply: run.apply(); break;
            case ExperimentKind::compose: run.compose(); break;
            case ExperimentKind::parametrix: run.parametrix(); break;
            case ExperimentKind::egorov: run.egorov(); break;
            case ExperimentKind::l2norm: run.l2norm(); break;
            case ExperimentKind::remainder: run.remainder(); break;
        }
    } catch (const std::exception& e) {
        error = {{"type", error_kind(e)}, {"message", e.what()}};
    }
    set_thread_count(saved);

    bool pass = error.is_null() && !run.checks.empty();
    for (const auto& ch : run.checks) pass = pass && ch["pass"].get<bool>();

    RunOutcome out;
    out.pass = pass;
    out.exit_code = pass ? 0 : 1;
    out.files = run.files;
    out.files.push_back("report.json");
    out.files.push_back("metadata.json");
    out.report = {{"schema", config_schema_version},
                  {"kind", to_string(c.kind)},
                  {"config", to_json(c)},
                  {"checks", run.checks},
                  {"results", run.results},
                  {"error", error},
                  {"pass", pass},
                  {"files", out.files}};
    {
        std::ofstream os(dir / "report.json", std::ios::binary);
        os << out.report.dump(2) << "\n";
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    json meta{{"timestamp", utc_timestamp()},
              {"wall_seconds", wall},
              {"threads", opt.threads},
              {"argv", opt.argv},
              {"exit_code", out.exit_code}};
    std::ofstream os(dir / "metadata.json", std::ios::binary);
    os << meta.dump(2) << "\n";
    return out;
}

}  // namespace sgfio
