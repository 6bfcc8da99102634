#pragma once

// Independent reference computations used by the tests: finite differences
// of jets, the classical Kohn-Nirenberg composition.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "sgfio/verify.hpp"

namespace oracle {

using sgfio::cplx;
using sgfio::MultiIndex;

// Central differences of jets (shared with the acceptance suite).
inline sgfio::FdResult fd_check(const sgfio::Field& f, const std::vector<double>& z, int K = 4,
                                std::size_t component = 0) {
    return sgfio::fd_check(f, z, K, component);
}

inline cplx kn_term(const sgfio::Field& p, const sgfio::Field& a, const MultiIndex& alpha,
                    const std::vector<double>& z) {
    return sgfio::kn_product_term(p, a, alpha, z);
}

}  // namespace oracle
