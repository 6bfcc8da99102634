#pragma once

// Application of Op_t(a), amplitude operators and type I / II SG FIOs to grid
// functions by direct quadrature, kernels, dense discretizations and the
// integration-by-parts regularizer.

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sgfio/grid.hpp"
#include "sgfio/phases.hpp"
#include "sgfio/symbols.hpp"

namespace sgfio {

// ----------------------------------------------------------------- threading

/// Worker count for parallel loops (default 1; 0 means hardware concurrency).
void set_thread_count(unsigned n);
unsigned thread_count();

/// Runs body(begin, end) over contiguous chunks of [0, n). Each index is
/// handled by exactly one call, so per-index results do not depend on the
/// schedule.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

// ----------------------------------------------------------------- operators

enum class OperatorKind { pdo_t, pdo_amplitude, fio_type1, fio_type2 };
std::string to_string(OperatorKind k);
OperatorKind parse_operator_kind(const std::string& s);

struct OperatorSpec {
    OperatorKind kind = OperatorKind::fio_type1;
    SymbolHandle symbol;        // pdo_t, fio kinds
    AmplitudeHandle amplitude;  // pdo_amplitude
    std::optional<PhaseHandle> phase;
    double t = 0;         // quantization, pdo_t
    bool direct = false;  // pdo_t: literal double integral even for t = 0
};

OperatorSpec make_fio1(const PhaseHandle& phi, const SymbolHandle& a);
OperatorSpec make_fio2(const PhaseHandle& phi, const SymbolHandle& b);
OperatorSpec make_pdo(const SymbolHandle& a, double t = 0, bool direct = false);
OperatorSpec make_pdo_amplitude(const AmplitudeHandle& a);

/// Formal adjoint: type I <-> type II with the same (phi, a), Op_t(a)^* =
/// Op_{1-t}(conj a), and a^*(x, y, xi) = conj a(y, x, xi) for amplitudes.
OperatorSpec adjoint(const OperatorSpec& op);

/// Dimension of the operator's symbol.
std::size_t dimension(const OperatorSpec& op);

class TailMassError : public std::runtime_error {
public:
    TailMassError(const std::string& what, double ratio) : std::runtime_error(what), ratio_(ratio) {}
    double ratio() const { return ratio_; }

private:
    double ratio_;
};

struct ApplyOptions {
    double tail_threshold = 1e-10;
    bool check_phase = true;  // FIO kinds: phase must probe simple (type II: regular)
};

struct ApplyResult {
    GridFunction out;
    double tail_ratio = 0;  // max |integrand| on the xi-boundary / global max
    std::vector<std::string> warnings;
};

/// Checks dimensions and phase admissibility; throws std::invalid_argument.
void validate(const OperatorSpec& op, const Grid& g, const ApplyOptions& opt = {});

ApplyResult apply_checked(const OperatorSpec& op, const GridFunction& u, const ApplyOptions& opt = {});
/// As apply_checked; warnings go to stderr.
GridFunction apply(const OperatorSpec& op, const GridFunction& u, const ApplyOptions& opt = {});

struct AdjointCheck {
    double defect = 0;
    std::vector<std::string> warnings;
};

/// |<Op_phi(a) u, v> - <u, Op*_phi(a) v>| / (||u|| ||v||).
AdjointCheck adjoint_pair_check(const PhaseHandle& phi, const SymbolHandle& a, const GridFunction& u,
                                const GridFunction& v);

/// Quadrature value of the distribution kernel on the frequency grid of g:
/// type I (2pi)^{-d} sum e^{i(phi(x, xi) - <y, xi>)} a(x, xi) dxi^d, type II
/// its conjugate transpose, pdo kinds (2pi)^{-d} sum e^{i<x - y, xi>} a(., xi).
/// Throws TailMassError if the xi-integrand is not negligible at the boundary.
cplx kernel_eval(const OperatorSpec& op, const Grid& g, std::span<const double> x, std::span<const double> y,
                 double tail_threshold = 1e-10);

// ------------------------------------------------------------ discretization

/// Dense discretization out = Post(C Pre(u)) with Pre / Post unitary
/// transforms, so the exact adjoint is available.
class DiscreteOperator {
public:
    enum class Stage { none, forward, inverse };

    static DiscreteOperator build(const OperatorSpec& op, const Grid& g, const ApplyOptions& opt = {});

    GridFunction apply(const GridFunction& u) const;
    /// Adjoint with respect to the discrete L^2 inner products.
    GridFunction apply_adjoint(const GridFunction& v) const;

    const Grid& grid() const { return g_; }
    std::size_t size() const { return g_.size(); }
    std::span<const cplx> core() const { return core_; }
    Stage pre() const { return pre_; }
    Stage post() const { return post_; }

    /// Largest dense core accepted (entries).
    static constexpr std::size_t max_entries = std::size_t(1) << 24;

private:
    Grid g_;
    std::vector<cplx> core_;  // row-major n x n
    Stage pre_ = Stage::none, post_ = Stage::none;
    double in_cell_ = 1, out_cell_ = 1;  // cell volumes of the core's domains
};

// ------------------------------------------------------------ regularization

struct Regularized {
    SymbolHandle principal;   // D^l a,  D a = a / (<phi'_xi>^2 - i Lap_xi phi)
    SymbolHandle correction;  // ((1 - Lap_xi) D)^l a - D^l a
};

/// Throws std::domain_error beyond the derivative cap (l <= 4).
Regularized regularize(const PhaseHandle& phi, const SymbolHandle& a, int l);
/// The factor <phi'_xi>^2 - i Lap_xi phi.
FieldPtr regularizer_denominator(const PhaseHandle& phi);

}  // namespace sgfio
