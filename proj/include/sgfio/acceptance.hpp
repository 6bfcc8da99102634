#pragma once

// The acceptance set: thirteen property checks at fixed tolerances, shared by
// the ctest binary and `sgfio suite --acceptance`. Jet integrity (13) runs
// first and gates the rest.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

namespace sgfio {

struct CriterionResult {
    int id = 0;
    std::string title;
    bool pass = false;
    bool ran = false;     // false: gated off or not selected
    std::string summary;  // measured value vs bound
    double seconds = 0;
    nlohmann::json detail = nlohmann::json::object();
};

struct AcceptanceOptions {
    std::vector<int> only;  // empty: all
    unsigned threads = 0;   // 0: hardware concurrency
    std::uint64_t seed = 20240611;
};

/// Runs the criteria (13 first); `on_result` sees each result as it lands.
std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& opt = {},
                                            const std::function<void(const CriterionResult&)>& on_result = {});

/// "[PASS] 01 identity reduction: ... (0.1 s)"
std::string format_line(const CriterionResult& r);
nlohmann::json to_json(const CriterionResult& r);

}  // namespace sgfio
