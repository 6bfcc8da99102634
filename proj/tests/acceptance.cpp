// Runs the acceptance set and prints one line per criterion; exit status 0
// iff every criterion passes. Optional arguments: criterion ids to run.

#include <cstdio>
#include <cstdlib>
#include <string>

#include "sgfio/acceptance.hpp"

int main(int argc, char** argv) {
    std::setvbuf(stdout, nullptr, _IONBF, 0);
    sgfio::AcceptanceOptions opt;
    for (int i = 1; i < argc; ++i) opt.only.push_back(std::atoi(argv[i]));
    int failed = 0;
    const auto rs = sgfio::run_acceptance(opt, [&](const sgfio::CriterionResult& r) {
        std::printf("%s\n", sgfio::format_line(r).c_str());
        failed += !r.pass;
    });
    std::printf("%zu criteria, %d failed\n", rs.size(), failed);
    return failed == 0 ? 0 : 1;
}
