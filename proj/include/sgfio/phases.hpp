#pragma once

// Phase functions: presets, admissibility probes, Newton inversion of the
// gradient maps, the canonical transformation, and the S_phi change of
// variables used by the FIO x FIO compositions.

#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgfio/field.hpp"
#include "sgfio/weights.hpp"

namespace sgfio {

struct PhaseHandle {
    FieldPtr f;         // real phase on R^{2d}
    std::size_t d = 1;
    std::string name;
    std::map<std::string, double> params;
    FieldPtr grad_x;    // phi'_x, d outputs
    FieldPtr grad_xi;   // phi'_xi, d outputs
    bool identity = false;  // phi = <x, xi>; enables exact shortcuts

    double operator()(std::span<const double> z) const { return f->value(z).real(); }
};

/// Wraps a phase field and derives its gradient fields.
PhaseHandle make_phase(FieldPtr f, std::size_t d, std::string name, std::map<std::string, double> params = {});

PhaseHandle identity_phase(std::size_t d = 1);
/// <x, xi> + t <xi>
PhaseHandle transport_phase(double t, std::size_t d = 1);
/// <x, xi> + eps <x><xi>
PhaseHandle perturbed_phase(double eps, std::size_t d = 1);
/// sum x_i xi_i^3 (not simple)
PhaseHandle cubic_phase(std::size_t d = 1);
/// sum x_i xi_i / <xi> (not simple; det phi''_{x xi} = <xi>^{-3} in d = 1)
PhaseHandle degenerate_phase(std::size_t d = 1);

/// Registry by name: identity, transport{t}, perturbed{eps}, cubic, degenerate.
PhaseHandle phase_preset(const std::string& name, const std::map<std::string, double>& params, std::size_t d);
std::vector<std::string> phase_preset_names();

/// (<x, xi>)^t-style helpers.
/// ^t phi(x, xi) = phi(xi, x)
PhaseHandle transpose_phase(const PhaseHandle& phi);

// ------------------------------------------------------------------- probes

struct PhaseProbeOptions {
    double ratio_bound = 100.0;  // <phi'_xi>/<x>, <phi'_x>/<xi> in [1/b, b]
    double seminorm_threshold = 100.0;
    double det_bound = 1e-2;     // regular iff inf |det phi''_{x xi}| >= det_bound
    int K = 3;
};

struct PhaseReport {
    double xi_ratio_min = 0, xi_ratio_max = 0;  // <phi'_xi>/<x>
    double x_ratio_min = 0, x_ratio_max = 0;    // <phi'_x>/<xi>
    std::vector<OrderEntry> seminorms;          // SG^{1,1}_{1,1}
    bool seminorm_pass = false;
    double det_min = 0, det_max = 0;            // |det phi''_{x xi}|
    bool simple = false, regular = false;
    std::string failed;  // first failed probe, empty if regular
};

nlohmann::json to_json(const PhaseReport& r);

PhaseReport phase_probe(const PhaseHandle& phi, const ProbeSet& probes, const PhaseProbeOptions& opt = {});

// ------------------------------------------------------------------- Newton

struct NewtonOptions {
    double tol = 1e-12;  // relative to <target>
    int max_iter = 50;
};

class NewtonError : public std::runtime_error {
public:
    NewtonError(const std::string& what, std::vector<double> trace)
        : std::runtime_error(what), trace_(std::move(trace)) {}
    /// Residual norm after each iteration.
    const std::vector<double>& trace() const { return trace_; }

private:
    std::vector<double> trace_;
};

/// Solves F(z) = target for z in R^n by damped Newton; F returns the value and
/// the Jacobian (row-major n x n). Initial guess defaults to the target.
std::vector<double> newton_solve(
    const std::function<void(std::span<const double>, std::span<double>, std::span<double>)>& F,
    std::span<const double> target, std::optional<std::vector<double>> guess = {},
    const NewtonOptions& opt = {});

enum class GradientSide { x, xi };

/// side x:  eta with phi'_x(fixed, eta) = target;
/// side xi: y with phi'_xi(y, fixed) = target.
std::vector<double> invert_gradient(const PhaseHandle& phi, GradientSide side, std::span<const double> fixed,
                                    std::span<const double> target,
                                    std::optional<std::vector<double>> guess = {}, const NewtonOptions& opt = {});

/// (y, xi) = (phi'_xi(x, eta), phi'_x(x, eta)), concatenated.
std::vector<double> canonical_transform(const PhaseHandle& phi, std::span<const double> x,
                                        std::span<const double> eta);

/// Field of arity 2d with d outputs: (x, xi) -> (phi'_x)^{-1}(x, xi), with
/// jets by implicit differentiation.
FieldPtr inverse_gradient_x(const PhaseHandle& phi);
/// (x, xi) -> y with phi'_xi(y, xi) = x.
FieldPtr inverse_gradient_xi(const PhaseHandle& phi);

/// |det phi''_{x xi}| as a field on R^{2d}.
FieldPtr mixed_hessian_det(const PhaseHandle& phi);

// ------------------------------------------------------- implicit functions

/// Jets z(p) solving G(p, z(p)) = 0 near (p0, z0) to the order of the p jets.
/// `G` has arity n_p + n_z and n_z outputs; `p` are jets sharing one layout.
std::vector<Jet> implicit_jets(const Field& G, std::span<const Jet> p, std::span<const double> z0);

// -------------------------------------------------------------------- S_phi

enum class SPhiVariant { xy, xi_eta };

struct SPhiOptions {
    double k_cutoff = 0.5;   // region |y - x| <= k <x>  (|eta - xi| <= k <xi> for xi_eta)
    bool force_general = false;  // do not shortcut the identity phase
    NewtonOptions newton;
};

class CutoffRegionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Averaged gradient  int_0^1 phi'_x(y + t(x - y), xi) dt  (xy) or
/// int_0^1 phi'_xi(x, eta + t(xi - eta)) dt  (xi_eta) by Gauss-Legendre.
std::vector<double> averaged_gradient(const PhaseHandle& phi, SPhiVariant v, std::span<const double> a,
                                      std::span<const double> b, std::span<const double> z);

/// Phi(x, y, xi) solving averaged_gradient(x, y, Phi) = xi (xy), or
/// Phi(x, xi, eta) solving averaged_gradient(xi, eta, Phi) = x (xi_eta); as a
/// field of arity 3d with d outputs.
FieldPtr averaged_inverse(const PhaseHandle& phi, SPhiVariant v, const SPhiOptions& opt = {});

/// (S_phi c0)(x, y, xi) = c0(x, y, Phi) |det Phi'_xi|       (xy)
/// (S_phi c0)(x, xi, eta) = c0(Phi, xi, eta) |det Phi'_x|   (xi_eta)
FieldPtr s_phi_transform(FieldPtr c0, const PhaseHandle& phi, SPhiVariant v, const SPhiOptions& opt = {});

// ------------------------------------------------------------- small linalg

/// Solves A z = b in place (n <= 3, partial pivoting); returns false if singular.
bool solve_small(std::span<double> A, std::span<double> b, std::size_t n);
double det_small(std::span<const double> A, std::size_t n);
Jet det_jets(std::span<const Jet> A, std::size_t n);

}  // namespace sgfio
