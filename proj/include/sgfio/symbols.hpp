#pragma once

// SG symbols and amplitudes: presets, seminorm and ellipticity probes,
// cut-off / excision functions and excision-masked asymptotic summation.

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgfio/field.hpp"
#include "sgfio/weights.hpp"

namespace sgfio {

struct SymbolHandle {
    FieldPtr f;  // complex, arity 2d: (x, xi)
    std::size_t d = 1;
    WeightHandle weight;  // claimed class SG^{(weight)}_{r, rho}
    double r = 1.0, rho = 1.0;
    std::string name;

    cplx operator()(std::span<const double> z) const { return f->value(z); }
};

struct AmplitudeHandle {
    FieldPtr f;  // complex, arity 3d: (x, y, xi)
    std::size_t d = 1;
    double r1 = 1.0, r2 = 1.0, rho = 1.0;
    std::string name;

    cplx operator()(std::span<const double> z) const { return f->value(z); }
};

SymbolHandle make_symbol(FieldPtr f, std::size_t d, std::string name, WeightHandle w, double r = 1.0,
                         double rho = 1.0);
AmplitudeHandle make_amplitude(FieldPtr f, std::size_t d, std::string name);

/// ^t a(x, xi) = a(xi, x)
SymbolHandle transpose_symbol(const SymbolHandle& a);
/// conj(a(x, xi))
SymbolHandle conjugate_symbol(const SymbolHandle& a);
/// a(x, xi) viewed as the amplitude (x, y, xi) -> a(x, xi)
AmplitudeHandle left_amplitude(const SymbolHandle& a);

// ------------------------------------------------------------------ presets

/// one, theta{m,mu}, xi, x_xi, japanese_xi, gauss_xi, gauss_xxi, oscillating,
/// elliptic, gauss_x{width}, rank_one_gauss.
SymbolHandle symbol_preset(const std::string& name, const std::map<std::string, double>& params, std::size_t d);
std::vector<std::string> symbol_preset_names();

// --------------------------------------------------------------- seminorms

struct SeminormReport {
    std::vector<OrderEntry> orders;
    double threshold = 100.0;
    double max_constant = 0;
    bool pass = false;
    std::string probes;
};

nlohmann::json to_json(const SeminormReport& r);

/// sup over probes of <x>^{r|alpha|}<xi>^{rho|beta|} |D^alpha_x D^beta_xi a| / w,
/// |alpha| + |beta| <= K; pass iff every constant <= threshold.
SeminormReport seminorm_probe(const SymbolHandle& a, const WeightHandle& w, double r, double rho, int K,
                              const ProbeSet& probes, double threshold = 100.0);
SeminormReport seminorm_probe(const FieldPtr& a, std::size_t d, const WeightHandle& w, double r, double rho, int K,
                              const ProbeSet& probes, double threshold = 100.0);

// ------------------------------------------------------ structure functions

/// 1 for t <= t0, 0 for t >= t1, smooth and monotone in between:
/// h(1-s)/(h(1-s)+h(s)), s = (t - t0)/(t1 - t0), h(s) = exp(-1/s) for s > 0.
template <class T>
T smooth_step(const T& t, double t0, double t1);

/// chi(x, y) = step(|y - x| / (k <x>); 1/2, 1) on R^{2d}; k in (0, 1).
SymbolHandle cutoff_diagonal(double k, std::size_t d = 1);

enum class ExcisionKind { joint, xi_only, x_only };

/// 0 near the origin, 1 far out. joint: in |(x, xi)|, vanishing for
/// |x| + |xi| <= R/2 and equal to 1 for |x| + |xi| >= R; xi_only / x_only use
/// |xi| / |x| alone.
SymbolHandle excision(double R, std::size_t d = 1, ExcisionKind kind = ExcisionKind::joint);

enum class StructureKind { cutoff_diagonal, excision };
SymbolHandle structure_function(StructureKind kind, double param, std::size_t d = 1);

// ------------------------------------------------------- asymptotic summation

struct AsymptoticTerm {
    SymbolHandle a;
    double s = 0, sigma = 0;  // a in SG^{(w theta_{s, sigma})}
};

struct AsymptoticOptions {
    int K = 2;          // seminorm order used for the radius search
    int max_doublings = 60;
};

struct AsymptoticSum {
    SymbolHandle symbol;
    std::vector<double> radii;
    ExcisionKind kind = ExcisionKind::joint;
    std::vector<SymbolHandle> masked;
};

class AsymptoticSumError : public std::runtime_error {
public:
    AsymptoticSumError(const std::string& what, std::size_t term) : std::runtime_error(what), term_(term) {}
    std::size_t term() const { return term_; }

private:
    std::size_t term_;
};

/// a = sum_j excision(R_j) a_j with R_j increasing so that each masked term
/// has seminorm <= 2^{-j} in the class of the previous term.
AsymptoticSum asymptotic_sum(const std::vector<AsymptoticTerm>& terms, const WeightHandle& w, double r, double rho,
                             const ProbeSet& probes, const AsymptoticOptions& opt = {});

// --------------------------------------------------------------- ellipticity

struct EllipticityReport {
    double inf_ratio = 0;
    std::vector<double> witness;
    std::size_t qualifying = 0;
    double threshold = 0;
    bool pass = false;
};

nlohmann::json to_json(const EllipticityReport& r);

/// inf over probes with |x| + |xi| >= R of |a| / w; pass iff >= threshold.
EllipticityReport ellipticity_probe(const SymbolHandle& a, const WeightHandle& w, double R, const ProbeSet& probes,
                                    double threshold = 1e-2);

// ------------------------------------------------------------ implementation

template <class T>
T smooth_step(const T& t, double t0, double t1) {
    const double tb = base_value(t);
    if (tb <= t0) return t * 0.0 + 1.0;
    if (tb >= t1) return t * 0.0;
    // a / (a + b) = 1 / (1 + e^g), g = 1/(1-s) - 1/s; the logistic form keeps
    // jets near the plateaus free of cancellation between O(1) terms
    const T s = (t - t0) / (t1 - t0);
    const T g = 1.0 / (1.0 - s) - 1.0 / s;
    if (base_value(g) <= 0) return 1.0 / (exp(g) + 1.0);
    const T e = exp(-g);
    return e / (e + 1.0);
}

}  // namespace sgfio
