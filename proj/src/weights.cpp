#include "sgfio/weights.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "sgfio/phases.hpp"

namespace sgfio {

double japanese(std::span<const double> z) {
    double s = 1.0;
    for (double v : z) s += v * v;
    return std::sqrt(s);
}

namespace {

struct ThetaExpr {
    double m, mu;
    std::size_t d;
    template <class T>
    T operator()(std::span<const T> a) const {
        const T x2 = japanese_sq(a.subspan(0, d));
        const T xi2 = japanese_sq(a.subspan(d, d));
        return pow(x2, 0.5 * m) * pow(xi2, 0.5 * mu);
    }
};

std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

}  // namespace

WeightHandle theta_weight(double m, double mu, std::size_t d) {
    WeightHandle w;
    w.f = make_expr(2 * d, ThetaExpr{m, mu, d});
    w.d = d;
    w.arity = 2 * d;
    w.r = w.rho = 1.0;
    w.provenance = "theta(" + fmt(m) + "," + fmt(mu) + ")";
    return w;
}

WeightHandle constant_weight(double c, std::size_t d) {
    WeightHandle w;
    w.f = constant_field(2 * d, c);
    w.d = d;
    w.arity = 2 * d;
    w.r = w.rho = 1.0;
    w.provenance = "constant(" + fmt(c) + ")";
    return w;
}

WeightHandle weight_product(const WeightHandle& a, const WeightHandle& b) {
    if (a.arity != b.arity) throw std::invalid_argument("weight_product: arity mismatch");
    WeightHandle w;
    w.f = mul(a.f, b.f);
    w.d = a.d;
    w.arity = a.arity;
    w.r = std::min(a.r, b.r);
    w.rho = std::min(a.rho, b.rho);
    w.provenance = a.provenance + "*" + b.provenance;
    return w;
}

WeightHandle weight_preset(const std::string& name, const std::map<std::string, double>& params, std::size_t d) {
    auto get = [&](const char* k, double def) {
        auto it = params.find(k);
        return it == params.end() ? def : it->second;
    };
    if (name == "theta") return theta_weight(get("m", 0), get("mu", 0), d);
    if (name == "constant") {
        const double c = get("c", 1.0);
        if (!(c > 0)) throw std::invalid_argument("weight preset 'constant': c must be positive");
        return constant_weight(c, d);
    }
    throw std::invalid_argument("unknown weight preset '" + name + "'");
}

std::vector<std::string> weight_preset_names() { return {"theta", "constant"}; }

// --------------------------------------------------------------------- probes

std::string to_string(ProbeRule r) {
    switch (r) {
        case ProbeRule::log_radial: return "log_radial";
        case ProbeRule::lattice: return "lattice";
        case ProbeRule::random: return "random";
    }
    return "?";
}

ProbeSet log_radial_probes(std::size_t d, double rmax, int per_decade) {
    ProbeSet p;
    p.d = d;
    p.rule = ProbeRule::log_radial;
    const std::size_t n = 2 * d;
    const double s = 1.0 / std::sqrt(static_cast<double>(d));
    // unit directions: x-axis, xi-axis, diagonal, anti-diagonal (both signs)
    std::vector<std::vector<double>> dirs;
    auto add = [&](double cx, double cxi) {
        std::vector<double> v(n);
        const double nn = std::sqrt(cx * cx + cxi * cxi);
        for (std::size_t i = 0; i < d; ++i) {
            v[i] = s * cx / nn;
            v[d + i] = s * cxi / nn;
        }
        dirs.push_back(v);
        for (auto& c : v) c = -c;
        dirs.push_back(std::move(v));
    };
    add(1, 0);
    add(0, 1);
    add(1, 1);
    add(1, -1);
    p.points.emplace_back(n, 0.0);
    const int kmax = static_cast<int>(std::ceil(std::log10(rmax) * per_decade));
    for (const auto& dir : dirs)
        for (int k = -per_decade; k <= kmax; ++k) {
            const double r = std::min(rmax, std::pow(10.0, static_cast<double>(k) / per_decade));
            std::vector<double> z(n);
            for (std::size_t i = 0; i < n; ++i) z[i] = r * dir[i];
            p.points.push_back(std::move(z));
        }
    p.description = "log_radial: 8 rays, radii 1e-1.." + fmt(rmax) + ", " + std::to_string(per_decade) +
                    "/decade, plus origin";
    return p;
}

ProbeSet lattice_probes(std::size_t d) {
    ProbeSet p;
    p.d = d;
    p.rule = ProbeRule::lattice;
    const double vals[] = {0, 1, -1, 10, -10, 100, -100};
    const std::size_t n = 2 * d;
    std::size_t total = 1;
    for (std::size_t i = 0; i < n; ++i) total *= 7;
    for (std::size_t f = 0; f < total; ++f) {
        std::vector<double> z(n);
        std::size_t g = f;
        for (std::size_t i = 0; i < n; ++i) {
            z[i] = vals[g % 7];
            g /= 7;
        }
        p.points.push_back(std::move(z));
    }
    p.description = "lattice: {0,+-1,+-10,+-100}^" + std::to_string(n);
    return p;
}

ProbeSet random_probes(std::size_t d, std::size_t count, std::uint64_t seed, double rmax) {
    ProbeSet p;
    p.d = d;
    p.rule = ProbeRule::random;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> logr(-1.0, std::log10(rmax));
    const std::size_t n = 2 * d;
    for (std::size_t c = 0; c < count; ++c) {
        std::vector<double> z(n);
        double nn = 0;
        for (auto& v : z) {
            v = normal(rng);
            nn += v * v;
        }
        const double r = std::pow(10.0, logr(rng)) / std::sqrt(nn);
        for (auto& v : z) v *= r;
        p.points.push_back(std::move(z));
    }
    p.description = "random: " + std::to_string(count) + " points, seed " + std::to_string(seed) +
                    ", log-uniform radius in [0.1, " + fmt(rmax) + "]";
    return p;
}

ProbeSet default_probes(std::size_t d) { return log_radial_probes(d); }

ProbeSet outside_ball(const ProbeSet& probes, double R) {
    ProbeSet out = probes;
    out.points.clear();
    for (const auto& z : probes.points) {
        double nx = 0, nxi = 0;
        for (std::size_t i = 0; i < probes.d; ++i) {
            nx += z[i] * z[i];
            nxi += z[probes.d + i] * z[probes.d + i];
        }
        if (std::sqrt(nx) + std::sqrt(nxi) >= R) out.points.push_back(z);
    }
    std::ostringstream os;
    os << probes.description << ", |x|+|xi| >= " << R;
    out.description = os.str();
    return out;
}

// ------------------------------------------------------------ seminorm tables

std::vector<OrderEntry> derivative_table(const Field& f, std::size_t d, const WeightHandle& w, double r,
                                         double rho, int K, const ProbeSet& probes) {
    if (f.arity() != 2 * d) throw std::invalid_argument("derivative_table: field arity must be 2d");
    const auto monos = MultiIndex::enumerate(2 * d, K);
    std::vector<OrderEntry> table(monos.size());
    for (std::size_t i = 0; i < monos.size(); ++i) {
        std::vector<int> a(monos[i].entries().begin(), monos[i].entries().begin() + d);
        std::vector<int> b(monos[i].entries().begin() + d, monos[i].entries().end());
        table[i].alpha = MultiIndex(a);
        table[i].beta = MultiIndex(b);
    }
    for (const auto& z : probes.points) {
        const double wz = w(z);
        if (!(wz > 0) || !std::isfinite(wz)) throw ProbeError("weight not positive/finite at probe", z);
        const double jx = japanese(std::span<const double>(z).subspan(0, d));
        const double jxi = japanese(std::span<const double>(z).subspan(d, d));
        const Jet t = taylor(f, z, K);
        for (std::size_t i = 0; i < monos.size(); ++i) {
            const cplx v = t.coeff(i) * monos[i].factorial();
            if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
                throw ProbeError("non-finite derivative " + monos[i].str() + " at probe", z);
            const double c = std::abs(v) * std::pow(jx, r * table[i].alpha.order()) *
                             std::pow(jxi, rho * table[i].beta.order()) / wz;
            table[i].constant = std::max(table[i].constant, c);
        }
    }
    return table;
}

nlohmann::json to_json(const std::vector<OrderEntry>& t) {
    auto a = nlohmann::json::array();
    for (const auto& e : t) a.push_back({e.alpha.entries(), e.beta.entries(), e.constant});
    return a;
}

// ---------------------------------------------------------------- moderation

nlohmann::json to_json(const ModerationReport& r) {
    return {{"orders", to_json(r.orders)},
            {"v_ratio_max", r.v_ratio_max},
            {"threshold", r.threshold},
            {"probes", r.probes},
            {"pass", r.pass}};
}

ModerationReport weight_probe(const WeightHandle& w, double r, double rho, int K, const ProbeSet& probes,
                              const ModerationOptions& opt) {
    if (w.arity != 2 * probes.d) throw std::invalid_argument("weight_probe: weight/probe dimension mismatch");
    ModerationReport rep;
    rep.threshold = opt.threshold;
    rep.probes = probes.description;
    rep.orders = derivative_table(*w.f, probes.d, w, r, rho, K, probes);

    // v-moderateness: w(X + Y) <= C w(X) v(Y) over paired probes
    const std::size_t n = probes.size();
    const std::size_t stride = std::max<std::size_t>(1, n * n / std::max<std::size_t>(1, opt.max_pairs));
    std::vector<double> s(2 * probes.d);
    for (std::size_t k = 0; k < n * n; k += stride) {
        const auto& X = probes.points[k / n];
        const auto& Y = probes.points[k % n];
        for (std::size_t i = 0; i < s.size(); ++i) s[i] = X[i] + Y[i];
        const double ratio = w(s) / (w(X) * std::pow(japanese(Y), opt.v_exponent));
        if (!std::isfinite(ratio)) throw ProbeError("non-finite v-moderateness ratio", s);
        rep.v_ratio_max = std::max(rep.v_ratio_max, ratio);
    }
    rep.pass = rep.v_ratio_max <= opt.threshold;
    for (const auto& e : rep.orders) rep.pass = rep.pass && e.constant <= opt.threshold;
    return rep;
}

// ------------------------------------------------------------- phase-pulled

WeightHandle theta_transform(const WeightHandle& w, const PhaseHandle& phi, int side) {
    if (w.arity != 2 * phi.d) throw std::invalid_argument("theta_transform: needs a 2d-profile weight");
    const std::size_t d = phi.d;
    std::vector<FieldPtr> xs, xis;
    for (std::size_t i = 0; i < d; ++i) {
        xs.push_back(coordinate(2 * d, i));
        xis.push_back(coordinate(2 * d, d + i));
    }
    WeightHandle out = w;
    if (side == 1) {
        std::vector<FieldPtr> inner{phi.grad_xi};
        for (auto& c : xis) inner.push_back(c);
        out.f = compose(w.f, inner);
    } else if (side == 2) {
        std::vector<FieldPtr> inner = xs;
        inner.push_back(phi.grad_x);
        out.f = compose(w.f, inner);
    } else {
        throw std::invalid_argument("theta_transform: side must be 1 or 2");
    }
    out.provenance = "Theta" + std::to_string(side) + "[" + phi.name + "](" + w.provenance + ")";
    return out;
}

nlohmann::json to_json(const InvarianceReport& r) {
    nlohmann::json j{{"ratio_max", r.ratio_max}, {"witness", r.witness}, {"pass", r.pass}};
    if (r.theta_ratio_min) j["theta_ratio_min"] = *r.theta_ratio_min;
    if (r.theta_ratio_max) j["theta_ratio_max"] = *r.theta_ratio_max;
    return j;
}

InvarianceReport invariance_probe(const WeightHandle& w, const FieldPtr& map, int side, const ProbeSet& probes,
                                  const PhaseHandle* phi, const InvarianceOptions& opt) {
    const std::size_t d = probes.d;
    if (map->arity() != 2 * d || map->outputs() != d)
        throw std::invalid_argument("invariance_probe: map must be R^{2d} -> R^d");
    if (side != 1 && side != 2) throw std::invalid_argument("invariance_probe: side must be 1 or 2");
    auto shifts = opt.shifts;
    if (shifts.empty())
        for (std::size_t i = 0; i < d; ++i)
            for (double s : {1.0, -1.0, 10.0, -10.0, 100.0, -100.0}) {
                std::vector<double> v(d, 0.0);
                v[i] = s;
                shifts.push_back(v);
            }

    InvarianceReport rep;
    std::vector<double> arg(2 * d), warg(2 * d);
    std::vector<cplx> m(d);
    auto pulled = [&](std::span<const double> z, std::span<const double> eta) {
        // side 1: w(M(x, eta), xi);  side 2: w(x, M(xi, eta))
        const std::size_t pt = side == 1 ? 0 : d;
        for (std::size_t i = 0; i < d; ++i) {
            arg[i] = z[pt + i];
            arg[d + i] = eta[i];
        }
        map->values(arg, m);
        for (std::size_t i = 0; i < d; ++i) {
            warg[i] = side == 1 ? m[i].real() : z[i];
            warg[d + i] = side == 1 ? z[d + i] : m[i].real();
        }
        return w(warg);
    };
    std::vector<double> eta(d);
    for (const auto& z : probes.points) {
        const std::size_t par = side == 1 ? d : 0;
        std::span<const double> eta0(z.data() + par, d);
        const double base = pulled(z, eta0);
        for (const auto& s : shifts) {
            for (std::size_t i = 0; i < d; ++i) eta[i] = eta0[i] + s[i];
            const double ratio = pulled(z, eta) / base;
            if (!std::isfinite(ratio)) {
                auto wit = z;
                wit.insert(wit.end(), s.begin(), s.end());
                throw ProbeError("non-finite invariance ratio", wit);
            }
            if (ratio > rep.ratio_max) {
                rep.ratio_max = ratio;
                rep.witness = z;
                rep.witness.insert(rep.witness.end(), s.begin(), s.end());
            }
        }
    }
    rep.pass = rep.ratio_max <= opt.ratio_bound;
    if (phi) {
        const auto t1 = theta_transform(w, *phi, 1);
        const auto t2 = theta_transform(w, *phi, 2);
        double lo = INFINITY, hi = 0;
        for (const auto& z : probes.points) {
            const double q = t1(z) / t2(z);
            if (!std::isfinite(q)) throw ProbeError("non-finite Theta ratio", z);
            lo = std::min(lo, q);
            hi = std::max(hi, q);
        }
        rep.theta_ratio_min = lo;
        rep.theta_ratio_max = hi;
        rep.pass = rep.pass && hi / lo <= opt.theta_bound;
    }
    return rep;
}

}  // namespace sgfio
