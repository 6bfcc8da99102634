#pragma once

// Composition engine: expansion terms c_alpha, pdo x FIO compositions, FIO x
// FIO compositions through S_phi, parametrices and Egorov symbols.
//
// Convention: D = -i d. The pdo x FIO term of order alpha is
//   c_alpha = i^{|alpha|} (D^alpha_xi p)(x, phi'_x) D^alpha_y[e^{i psi} a]|_{y=x}
//           = (d^alpha_xi p)(x, phi'_x) (-i)^{|alpha|} d^alpha_y[e^{i psi} a]|_{y=x},
// and symbols are sum_{|alpha| < M} c_alpha / alpha!.

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgfio/operators.hpp"

namespace sgfio {

constexpr int max_expansion_order = 6;

struct ExpansionTerm {
    MultiIndex alpha;
    SymbolHandle term;  // c_alpha (without 1/alpha!); weight = predicted class
    std::optional<double> probe_constant;
};

enum class MixedMode { pdo_fio1, fio1_pdo, fio2_pdo, pdo_fio2 };
enum class PairOrder { I_II, II_I };
/// Type II mixed compositions: `adjoint` reads the result as Op*_phi(c)
/// (what the adjoint reduction produces), `literal` as Op_phi(c).
enum class TypeIIReading { adjoint, literal };

std::string to_string(MixedMode m);
std::string to_string(PairOrder o);
std::string to_string(TypeIIReading r);
MixedMode parse_mixed_mode(const std::string& s);
PairOrder parse_pair_order(const std::string& s);

struct CompositionResult {
    std::string mode;
    int M = 0;
    SymbolHandle symbol;
    std::vector<ExpansionTerm> terms;
    OperatorKind output = OperatorKind::fio_type1;
    std::optional<PhaseHandle> phase;
    TypeIIReading reading = TypeIIReading::adjoint;
    nlohmann::json remainder = nlohmann::json::object();
    std::vector<double> excision_radii;  // asymptotic summation only

    /// The operator the result stands for (Op_phi(c), Op*_phi(c) or Op(c)).
    OperatorSpec as_operator() const;
};

nlohmann::json to_json(const CompositionResult& r);

/// Fills probe_constant of every term: seminorm probe in its tagged class.
void probe_terms(CompositionResult& r, const ProbeSet& probes, int K = 1);

class HypothesisError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// --------------------------------------------------------------- mixed terms

/// e^{i psi(x, y, xi)} a(y, xi) on R^{3d}, psi = phi(y,xi) - phi(x,xi) - <y - x, phi'_x(x,xi)>.
FieldPtr psi_amplitude(const PhaseHandle& phi, const SymbolHandle& a);

/// D^alpha_y [e^{i psi} a(y, xi)] at y = x.
cplx psi_derivative(const PhaseHandle& phi, const SymbolHandle& a, const MultiIndex& alpha, std::span<const double> x,
                    std::span<const double> xi);

ExpansionTerm expansion_term(const SymbolHandle& p, const SymbolHandle& a, const PhaseHandle& phi,
                             const MultiIndex& alpha);

/// q = sum_{|alpha| < M} (i^{|alpha|} / alpha!) D^alpha_x D^alpha_xi conj(p)
///   = sum (-i)^{|alpha|} / alpha! d^alpha_x d^alpha_xi conj(p).
SymbolHandle kn_adjoint_symbol(const SymbolHandle& p, int M);

/// truncated: sum_{|alpha| < M} c_alpha / alpha!; asymptotic: the order-j
/// groups are excision-masked by asymptotic_sum, which keeps the low-frequency
/// region (where the expansion is not asymptotic) out of the higher terms.
enum class Summation { truncated, asymptotic };

struct ComposeOptions {
    bool check_hypotheses = true;
    TypeIIReading reading = TypeIIReading::adjoint;
    Summation summation = Summation::truncated;
};

CompositionResult compose_mixed(MixedMode mode, const SymbolHandle& p, const SymbolHandle& a, const PhaseHandle& phi,
                                int M, const ComposeOptions& opt = {});

// ---------------------------------------------------------------- FIO x FIO

struct PairOptions {
    double k_cutoff = 0.5;
    bool check_hypotheses = true;
    bool force_general = false;  // do not shortcut S_phi for the identity phase
    NewtonOptions newton;
};

/// sum_{|alpha| < M} ((-i)^{|alpha|} / alpha!) d^alpha_u d^alpha_v S|_diag as a
/// symbol on R^{2d}: (u, v) = (y, xi) at y = x for `xy` (S on (x, y, xi)),
/// (x, eta) at eta = xi for `xi_eta` (S on (x, xi, eta)). With `only`, the
/// single term of that alpha (times 1, not 1/alpha!).
FieldPtr diagonal_expansion(FieldPtr S, std::size_t d, SPhiVariant v, int M,
                            std::optional<MultiIndex> only = std::nullopt);

/// I_II: Op_phi(a) Op*_phi(b) = Op(c); II_I: Op*_phi(b) Op_phi(a) = Op(c).
CompositionResult compose_fio_pair(PairOrder order, const SymbolHandle& a, const SymbolHandle& b,
                                   const PhaseHandle& phi, int M, const PairOptions& opt = {});

// ---------------------------------------------------------------- parametrix

struct ParametrixOptions {
    PairOptions pair;
    int K = 1;                 // seminorm order for the defect probes
    double threshold = 100.0;  // seminorm threshold for the defect class
    // Defect probes are restricted to |x| + |xi| >= defect_radius: the defect
    // is a class statement modulo SG^{-inf,-inf}, and near the origin the
    // truncated expansion of the nested iterates is not asymptotic.
    double defect_radius = 4.0;
    std::optional<ProbeSet> probes;
};

struct ParametrixResult {
    OperatorSpec op;  // Op*_phi(b)
    SymbolHandle b;
    std::vector<SymbolHandle> iterates;  // b_0, ..., b_{M-1}
    std::vector<SeminormReport> defects;  // r_k = c(b_k) - 1 in class theta_{-(k+1), -(k+1)}
    std::vector<double> whole_space_constants;  // same probe without the ball excision
    nlohmann::json report;
};

/// Left parametrix: Op*_phi(b) Op_phi(a) = Op(1 + r). b_0 = |det phi''_{x xi}| / conj(a);
/// each of the M - 1 refinements removes the leading part of the defect.
ParametrixResult parametrix(const SymbolHandle& a, const PhaseHandle& phi, const WeightHandle& w, int M,
                            const ParametrixOptions& opt = {});

// -------------------------------------------------------------------- Egorov

enum class EgorovVariant { sandwich_adjoint, conjugation };
std::string to_string(EgorovVariant v);

/// sandwich_adjoint: p(phi'_xi(x, eta), eta) |a(x, eta)|^2 / |det phi''_{x xi}(x, eta)|,
/// conjugation: p(phi'_xi(x, eta), eta), with eta = (phi'_x)^{-1}(x, xi).
SymbolHandle egorov_symbol(const SymbolHandle& p, const SymbolHandle& a, const PhaseHandle& phi, EgorovVariant v);

/// Full chain for Op_phi(a) Op(p) Op*_phi(a): fio1 o pdo, then I o II.
CompositionResult egorov_chain(const SymbolHandle& p, const SymbolHandle& a, const PhaseHandle& phi, int M,
                               const PairOptions& opt = {});

// --------------------------------------------------------- reading diagnostics

struct ReadingCheck {
    double adjoint_error = 0, literal_error = 0;  // relative L^2 vs direct composition
    TypeIIReading matches = TypeIIReading::adjoint;
};

nlohmann::json to_json(const ReadingCheck& r);

/// For the type II modes, compares Op*_phi(c) u and Op_phi(c) u with the
/// direct double application.
ReadingCheck check_reading(const CompositionResult& r, const SymbolHandle& p, const SymbolHandle& b,
                           const PhaseHandle& phi, MixedMode mode, const GridFunction& u);

}  // namespace sgfio
