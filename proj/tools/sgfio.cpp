// sgfio: batch runner for declarative experiments and the acceptance suite.
//
//   sgfio <kind> --config exp.json [--out DIR] [--seed N] [--threads N]
//   sgfio run --config exp.json          (kind taken from the config)
//   sgfio validate --config exp.json
//   sgfio presets
//   sgfio suite --acceptance [--only 1,4,13] [--json FILE]
//   sgfio suite --config a.json --config b.json ...
//
// Exit status: 0 all checks passed, 1 a check failed or a module error was
// captured, 2 invalid config or usage.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "sgfio/acceptance.hpp"
#include "sgfio/experiment.hpp"

namespace {

using namespace sgfio;

struct Common {
    std::string out;
    std::optional<std::uint64_t> seed;
    unsigned threads = 1;
};

std::optional<ExperimentConfig> load(const std::string& path) {
    std::ifstream is(path);
    if (!is) {
        std::cerr << "sgfio: cannot read config '" << path << "'\n";
        return std::nullopt;
    }
    std::stringstream ss;
    ss << is.rdbuf();
    auto r = parse_config(ss.str());
    if (!r.ok()) {
        std::cerr << path << ": " << r.violations.size() << " violation(s)\n" << format_violations(r.violations);
        return std::nullopt;
    }
    return r.config;
}

int run_one(ExperimentConfig c, const Common& o, const std::vector<std::string>& argv, std::string out_dir) {
    if (o.seed) c.seed = *o.seed;
    RunOptions ro;
    ro.out_dir = std::move(out_dir);
    ro.threads = o.threads;
    ro.argv = argv;
    const auto r = run_experiment(c, ro);
    for (const auto& ch : r.report["checks"]) {
        std::printf("[%s] %s: %s (value %g, bound %g)\n", ch["pass"].get<bool>() ? "PASS" : "FAIL",
                    ch["invariant"].get<std::string>().c_str(), ch["subject"].get<std::string>().c_str(),
                    ch["value"].is_number() ? ch["value"].get<double>() : 0.0,
                    ch["bound"].is_number() ? ch["bound"].get<double>() : 0.0);
    }
    if (!r.report["error"].is_null())
        std::printf("[ERROR] %s: %s\n", r.report["error"]["type"].get<std::string>().c_str(),
                    r.report["error"]["message"].get<std::string>().c_str());
    const std::string dir = ro.out_dir.empty()
                                ? default_output_root() + "/" + (c.name.empty() ? to_string(c.kind) : c.name)
                                : ro.out_dir;
    std::printf("%s -> %s (%s)\n", to_string(c.kind).c_str(), dir.c_str(), r.pass ? "pass" : "FAIL");
    return r.exit_code;
}

void add_common(CLI::App* sc, Common& o) {
    sc->add_option("--out", o.out, "Output directory (default $SGFIO_OUT/<name>, else sgfio-out/<name>)");
    sc->add_option("--seed", o.seed, "Override the config's RNG seed");
    sc->add_option("--threads", o.threads, "Worker threads (0 = hardware concurrency)")->default_val(1);
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::string> args(argv, argv + argc);
    CLI::App app{"Numerical SG Fourier-integral-operator calculus: experiments and acceptance suite"};
    app.require_subcommand(1);

    Common common;
    std::string config;
    int status = 0;

    // one subcommand per experiment kind; the config's kind must agree
    for (const auto& kind : experiment_kind_names()) {
        auto* sc = app.add_subcommand(kind, "Run an experiment of kind '" + kind + "'");
        sc->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
        add_common(sc, common);
        sc->callback([&, kind] {
            auto c = load(config);
            if (!c) {
                status = 2;
                return;
            }
            if (to_string(c->kind) != kind) {
                std::cerr << "sgfio: config kind is '" << to_string(c->kind) << "', not '" << kind << "'\n";
                status = 2;
                return;
            }
            status = run_one(*c, common, args, common.out);
        });
    }

    auto* run = app.add_subcommand("run", "Run the experiment a config describes");
    run->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    add_common(run, common);
    run->callback([&] {
        auto c = load(config);
        status = c ? run_one(*c, common, args, common.out) : 2;
    });

    auto* validate = app.add_subcommand("validate", "Check a config and print its normalized form");
    validate->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    validate->callback([&] {
        auto c = load(config);
        if (!c) {
            status = 2;
            return;
        }
        std::cout << to_json(*c).dump(2) << "\n";
    });

    app.add_subcommand("presets", "List preset names")->callback([&] {
        auto list = [](const char* what, const std::vector<std::string>& v) {
            std::printf("%s:", what);
            for (const auto& s : v) std::printf(" %s", s.c_str());
            std::printf("\n");
        };
        list("symbols", symbol_preset_names());
        list("phases", phase_preset_names());
        list("weights", weight_preset_names());
        list("kinds", experiment_kind_names());
        std::printf("parameters: theta{m,mu} gauss_x{width} transport{t} perturbed{eps} weight theta{m,mu} "
                    "constant{c}\n");
    });

    auto* suite = app.add_subcommand("suite", "Run the acceptance set or a list of experiment configs");
    bool acceptance = false;
    std::vector<int> only;
    std::vector<std::string> configs;
    std::string json_out;
    suite->add_flag("--acceptance", acceptance, "Run the acceptance criteria");
    suite->add_option("--only", only, "Criterion ids (acceptance)")->delimiter(',');
    suite->add_option("--json", json_out, "Write the acceptance results as JSON");
    suite->add_option("--config", configs, "Experiment configs (each into its own directory)")
        ->check(CLI::ExistingFile);
    add_common(suite, common);
    suite->callback([&] {
        if (acceptance == !configs.empty()) {
            std::cerr << "sgfio suite: give either --acceptance or one or more --config\n";
            status = 2;
            return;
        }
        if (acceptance) {
            std::setvbuf(stdout, nullptr, _IONBF, 0);
            AcceptanceOptions ao;
            ao.only = only;
            ao.threads = common.threads;
            if (common.seed) ao.seed = *common.seed;
            auto all = nlohmann::json::array();
            bool ok = true;
            run_acceptance(ao, [&](const CriterionResult& r) {
                std::printf("%s\n", format_line(r).c_str());
                all.push_back(to_json(r));
                ok = ok && r.pass;
            });
            if (!json_out.empty()) std::ofstream(json_out) << all.dump(2) << "\n";
            status = ok ? 0 : 1;
            return;
        }
        // experiments run one after another, each into its own directory
        std::vector<ExperimentConfig> cs;
        for (const auto& p : configs) {
            auto c = load(p);
            if (!c) {
                status = 2;
                return;
            }
            cs.push_back(*c);
        }
        int worst = 0;
        for (const auto& c : cs) {
            const std::string name = c.name.empty() ? to_string(c.kind) : c.name;
            const std::string dir = common.out.empty() ? "" : common.out + "/" + name;
            worst = std::max(worst, run_one(c, common, args, dir));
        }
        status = worst;
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    return status;
}
