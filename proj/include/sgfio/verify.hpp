#pragma once

// Quantitative checks: L^2 operator norms by power iteration, Schur kernel
// bounds, log-log decay fits along rays, remainder measurements for the
// composition engine and the psi-derivative decay probe.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgfio/calculus.hpp"

namespace sgfio {

// ------------------------------------------------------------ jet integrity

struct FdResult {
    double worst = 0;  // max |jet - fd| / tol
    std::string where;
    std::size_t checks = 0;
};

/// Compares d^{beta + e_v} f from the jet with a Richardson-extrapolated
/// central difference of d^beta f (also from jets; steps h and h/2,
/// h = eps^{1/3} max(1, |z_v|)) for |beta| + 1 <= K.
/// Tolerance: 1e-6 |jet| + 300 eps S / h, S the largest jet coefficient of
/// order < K at z (the rounding scale of the jet arithmetic); worst <= 1 passes.
FdResult fd_check(const Field& f, std::span<const double> z, int K = 4, std::size_t component = 0);

/// (-i)^{|alpha|} d^alpha_xi p d^alpha_x a at z: the alpha-th term (without
/// 1/alpha!) of the classical Kohn-Nirenberg product p # a, from the jets of
/// p and a alone.
cplx kn_product_term(const Field& p, const Field& a, const MultiIndex& alpha, std::span<const double> z);

// ------------------------------------------------------------------- norms

struct NormEstimate {
    double value = 0;
    int iterations = 0;
    double residual = 0;  // relative change of ||A||^2 between the last two iterates
    bool converged = false;
    double tail_ratio = 0;  // worst tail-guard ratio seen by apply
    nlohmann::json grid;
};

nlohmann::json to_json(const NormEstimate& n);
nlohmann::json grid_json(const Grid& g);

/// Power iteration on A* A from a seeded complex Gaussian start vector.
NormEstimate operator_norm(const OperatorSpec& op, const Grid& g, int iters = 2000, std::uint64_t seed = 0,
                           double tol = 1e-8);

/// max(sup_y sum_x |K| h^d, sup_x sum_y |K| h^d) over grid nodes.
double schur_bound(const OperatorSpec& op, const Grid& g);

// -------------------------------------------------------------- decay fits

/// Samples at <moving half> = t: the moving half of z is sqrt(t^2 - 1) dir
/// (dir a unit vector), the other half is `fixed`.
struct Ray {
    enum class Side { x, xi } side = Side::xi;
    std::vector<double> fixed;
    std::vector<double> dir;

    std::vector<double> at(double t) const;
    std::string str() const;
};

Ray xi_ray(double x, double sign = 1.0);
Ray x_ray(double xi, double sign = 1.0);

const std::vector<double>& default_ray_samples();  // 4, 8, ..., 128

struct DecayFit {
    std::string ray;
    std::vector<double> t, magnitude;
    double slope = 0, intercept = 0, residual = 0;
    bool vanishes = false;  // every sample below 1e-300: slope = -inf
};

nlohmann::json to_json(const DecayFit& f);

/// Least squares on (log t, log magnitude); needs >= 5 samples over >= 1.5 decades.
DecayFit fit_decay(std::string ray, std::vector<double> t, std::vector<double> magnitude);
DecayFit fit_along(const Ray& ray, const std::function<double(std::span<const double>)>& f,
                   const std::vector<double>& t = default_ray_samples());

// -------------------------------------------------------------- remainders

struct CompositionSpec {
    MixedMode mode = MixedMode::pdo_fio1;
    SymbolHandle p, a;
    PhaseHandle phi;
    ComposeOptions opt;
};

/// The direct pipeline: the two operators applied one after the other.
GridFunction apply_direct(const CompositionSpec& spec, const GridFunction& u);

/// Relative difference of the direct pipeline on g and on the twice finer
/// grid (same box), on the common nodes, for a test function sampled on each.
double quadrature_floor(const CompositionSpec& spec, const Grid& g, TestKind kind, const TestParams& tp = {});

struct RemainderOptions {
    int M_ref = 5;                // reference truncation for symbol defects
    double slack = 0.5;           // on slopes, per unit M
    double floor = 0;             // operator defects may rise by this much and stay "monotone"
    std::vector<double> t = default_ray_samples();
};

struct RemainderReport {
    std::vector<int> orders;
    std::vector<std::vector<double>> operator_defects;  // [order][test function]
    std::vector<std::vector<DecayFit>> fits;            // [order][ray]
    double drop_x = 0, drop_xi = 0;                     // predicted slope drop per unit M
    bool operator_monotone = true, symbol_monotone = true, slopes_ok = true, pass = false;
    nlohmann::json json;
};

/// Operator level: ||(direct - Op(c_M)) u|| / ||direct u|| per test function.
/// Symbol level: |c_M - c_{M_ref}| along the rays (M = 0 means c = 0).
RemainderReport remainder_probe(const CompositionSpec& spec, const std::vector<int>& orders,
                                const std::vector<GridFunction>& tests, const std::vector<Ray>& rays,
                                const RemainderOptions& opt = {});

// ------------------------------------------------------------ psi decay

struct PsiDecayEntry {
    MultiIndex alpha;
    DecayFit x_fit, xi_fit;
    double x_bound = 0, xi_bound = 0;
    bool pass = false;
};

struct PsiDecayReport {
    std::string phase;
    std::vector<PsiDecayEntry> entries;
    bool pass = false;
    nlohmann::json json;
};

/// |D^alpha_y e^{i psi}|_{y=x}| for 1 <= |alpha| <= max_order: along xi-rays
/// (x fixed) the slope must be <= |alpha|/2 + slack, along x-rays (xi fixed)
/// <= -|alpha|/2 + slack. Identically vanishing derivatives pass.
PsiDecayReport psi_decay_probe(const PhaseHandle& phi, int max_order = 4, double slack = 0.3,
                               const std::vector<double>& t = default_ray_samples());

}  // namespace sgfio
