#pragma once

// Weights on R^{2d} (and R^d, R^{3d}), finite probe sets standing in for
// sup-type conditions, and the moderateness / invariance probes.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgfio/field.hpp"

namespace sgfio {

struct PhaseHandle;

/// <z> = (1 + |z|^2)^{1/2}
double japanese(std::span<const double> z);

template <class T>
T japanese_sq(std::span<const T> z) {
    T s = z[0] * z[0] + 1.0;
    for (std::size_t i = 1; i < z.size(); ++i) s += z[i] * z[i];
    return s;
}

struct WeightHandle {
    FieldPtr f;                 // positive, real-valued
    std::size_t d = 1;          // space dimension
    std::size_t arity = 2;      // d, 2d or 3d
    double r = 1.0, rho = 1.0;  // claimed moderation orders
    std::string provenance;

    double operator()(std::span<const double> z) const { return f->value(z).real(); }
};

/// theta_{m,mu}(x, xi) = <x>^m <xi>^mu on R^{2d}.
WeightHandle theta_weight(double m, double mu, std::size_t d = 1);
WeightHandle constant_weight(double c = 1.0, std::size_t d = 1);
/// Pointwise product; claimed orders are the minima.
WeightHandle weight_product(const WeightHandle& a, const WeightHandle& b);

/// Registry by name: theta{m, mu}, constant{c}.
WeightHandle weight_preset(const std::string& name, const std::map<std::string, double>& params, std::size_t d);
std::vector<std::string> weight_preset_names();

// --------------------------------------------------------------------- probes

enum class ProbeRule { log_radial, lattice, random };

struct ProbeSet {
    std::size_t d = 1;
    ProbeRule rule = ProbeRule::log_radial;
    std::vector<std::vector<double>> points;  // each of length 2d: (x, xi)
    std::string description;

    std::size_t size() const { return points.size(); }
};

/// Rays through the origin along x, xi, diagonal and anti-diagonal
/// directions (both signs), radii log-spaced from 10^-1 to rmax, plus the
/// origin.
ProbeSet log_radial_probes(std::size_t d, double rmax = 1e3, int per_decade = 4);
/// Tensor lattice with per-coordinate values {0, +-1, +-10, +-100}.
ProbeSet lattice_probes(std::size_t d);
/// Seeded random directions with log-uniform radius in [0.1, rmax].
ProbeSet random_probes(std::size_t d, std::size_t count, std::uint64_t seed, double rmax = 1e3);
ProbeSet default_probes(std::size_t d);
/// The probes with |x| + |xi| >= R.
ProbeSet outside_ball(const ProbeSet& probes, double R);

std::string to_string(ProbeRule r);

// ------------------------------------------------------------ seminorm tables

struct OrderEntry {
    MultiIndex alpha, beta;
    double constant = 0;
};

/// sup over probes of <x>^{r|alpha|} <xi>^{rho|beta|} |d^alpha_x d^beta_xi f| / w
/// for all |alpha| + |beta| <= K. Throws ProbeError on non-finite values.
std::vector<OrderEntry> derivative_table(const Field& f, std::size_t d, const WeightHandle& w, double r,
                                         double rho, int K, const ProbeSet& probes);

class ProbeError : public std::runtime_error {
public:
    ProbeError(const std::string& what, std::vector<double> point)
        : std::runtime_error(what), point_(std::move(point)) {}
    const std::vector<double>& point() const { return point_; }

private:
    std::vector<double> point_;
};

nlohmann::json to_json(const std::vector<OrderEntry>& t);

// ---------------------------------------------------------------- moderation

struct ModerationOptions {
    double threshold = 100.0;  // pass iff every constant and v-ratio <= threshold
    double v_exponent = 4.0;   // v(z) = <z>^{N_v}
    std::size_t max_pairs = 4000;
};

struct ModerationReport {
    std::vector<OrderEntry> orders;
    double v_ratio_max = 0;
    double threshold = 0;
    bool pass = false;
    std::string probes;
};

nlohmann::json to_json(const ModerationReport& r);

ModerationReport weight_probe(const WeightHandle& w, double r, double rho, int K, const ProbeSet& probes,
                              const ModerationOptions& opt = {});

// ------------------------------------------------------------- phase-pulled

/// side 1: w(phi'_xi(x, xi), xi);  side 2: w(x, phi'_x(x, xi)).
WeightHandle theta_transform(const WeightHandle& w, const PhaseHandle& phi, int side);

struct InvarianceOptions {
    double ratio_bound = 10.0;
    double theta_bound = 100.0;  // max/min of Theta_1 w / Theta_2 w
    std::vector<std::vector<double>> shifts;  // default: +-1, +-10, +-100 along each axis
};

struct InvarianceReport {
    double ratio_max = 0;
    std::vector<double> witness;  // (x, xi, shift) attaining ratio_max
    std::optional<double> theta_ratio_min, theta_ratio_max;
    bool pass = false;
};

nlohmann::json to_json(const InvarianceReport& r);

/// `map` has arity 2d and d outputs: M(x, eta). Side 1 probes
/// w(M(x, xi + s), xi) / w(M(x, xi), xi), side 2 probes
/// w(x, M(xi, x + s)) / w(x, M(xi, x)) over probe points (x, xi) and shifts s.
/// If `phi` is given, also reports the range of Theta_1 w / Theta_2 w.
InvarianceReport invariance_probe(const WeightHandle& w, const FieldPtr& map, int side, const ProbeSet& probes,
                                  const PhaseHandle* phi = nullptr, const InvarianceOptions& opt = {});

}  // namespace sgfio
