#include "sgfio/symbols.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace sgfio {

SymbolHandle make_symbol(FieldPtr f, std::size_t d, std::string name, WeightHandle w, double r, double rho) {
    if (f->arity() != 2 * d) throw std::invalid_argument("make_symbol: arity must be 2d");
    SymbolHandle s;
    s.f = std::move(f);
    s.d = d;
    s.name = std::move(name);
    s.weight = std::move(w);
    s.r = r;
    s.rho = rho;
    return s;
}

AmplitudeHandle make_amplitude(FieldPtr f, std::size_t d, std::string name) {
    if (f->arity() != 3 * d) throw std::invalid_argument("make_amplitude: arity must be 3d");
    AmplitudeHandle a;
    a.f = std::move(f);
    a.d = d;
    a.name = std::move(name);
    return a;
}

SymbolHandle transpose_symbol(const SymbolHandle& a) {
    SymbolHandle t = a;
    t.f = transpose(a.f, a.d);
    t.weight.f = transpose(a.weight.f, a.d);
    t.weight.provenance = "t(" + a.weight.provenance + ")";
    std::swap(t.r, t.rho);
    t.name = "t(" + a.name + ")";
    return t;
}

SymbolHandle conjugate_symbol(const SymbolHandle& a) {
    SymbolHandle t = a;
    t.f = conjugate(a.f);
    t.name = "conj(" + a.name + ")";
    return t;
}

AmplitudeHandle left_amplitude(const SymbolHandle& a) {
    const std::size_t d = a.d;
    std::vector<std::size_t> perm;
    for (std::size_t i = 0; i < d; ++i) perm.push_back(i);
    for (std::size_t i = 0; i < d; ++i) perm.push_back(2 * d + i);
    return make_amplitude(permute_args(a.f, 3 * d, perm), d, a.name);
}

// ------------------------------------------------------------------ presets

namespace {

constexpr double pi = std::numbers::pi;

template <class T>
T sum_sq(std::span<const T> a) {
    T s = a[0] * a[0];
    for (std::size_t i = 1; i < a.size(); ++i) s += a[i] * a[i];
    return s;
}

template <class T>
T dot(std::span<const T> a, std::span<const T> b) {
    T s = a[0] * b[0];
    for (std::size_t i = 1; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

struct Theta {
    std::size_t d;
    double m, mu;
    template <class T>
    T operator()(std::span<const T> a) const {
        return pow(japanese_sq(a.subspan(0, d)), 0.5 * m) * pow(japanese_sq(a.subspan(d, d)), 0.5 * mu);
    }
};

struct Xi1 {
    std::size_t d;
    template <class T>
    T operator()(std::span<const T> a) const { return a[d]; }
};

struct XXi1 {
    std::size_t d;
    template <class T>
    T operator()(std::span<const T> a) const { return a[0] * a[d]; }
};

struct GaussXi {
    std::size_t d;
    template <class T>
    T operator()(std::span<const T> a) const { return exp(-sum_sq(a.subspan(d, d))); }
};

struct GaussXXi {
    std::size_t d;
    template <class T>
    T operator()(std::span<const T> a) const { return exp(-sum_sq(a.subspan(0, d)) - sum_sq(a.subspan(d, d))); }
};

struct Oscillating {
    std::size_t d;
    template <class T>
    T operator()(std::span<const T> a) const {
        return exp(dot(a.subspan(0, d), a.subspan(d, d)) * cplx(0, 1));
    }
};

// 2 + (x.xi + i x_1) / (<x><xi>):  |a| in [1, 3]
struct Elliptic {
    std::size_t d;
    template <class T>
    T operator()(std::span<const T> a) const {
        const T den = sqrt(japanese_sq(a.subspan(0, d)) * japanese_sq(a.subspan(d, d)));
        return (dot(a.subspan(0, d), a.subspan(d, d)) + a[0] * cplx(0, 1)) / den + 2.0;
    }
};

// exp(-|x|^2 / (2 w^2)) (1 + i xi_1 / (2 <xi>))
struct GaussX {
    std::size_t d;
    double w;
    template <class T>
    T operator()(std::span<const T> a) const {
        const T env = exp(sum_sq(a.subspan(0, d)) * (-0.5 / (w * w)));
        return env * (a[d] / sqrt(japanese_sq(a.subspan(d, d))) * cplx(0, 0.5) + 1.0);
    }
};

// pi^{d/2} exp(-|x|^2 - i x.xi - |xi|^2/4): kernel exp(-|x|^2 - |y|^2) under Op_0
struct RankOneGauss {
    std::size_t d;
    template <class T>
    T operator()(std::span<const T> a) const {
        const auto x = a.subspan(0, d), xi = a.subspan(d, d);
        return exp(-sum_sq(x) - dot(x, xi) * cplx(0, 1) - sum_sq(xi) * 0.25) * std::pow(pi, 0.5 * d);
    }
};

std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

}  // namespace

std::vector<std::string> symbol_preset_names() {
    return {"one",       "theta",     "xi",          "x_xi",     "japanese_xi",   "gauss_xi",
            "gauss_xxi", "oscillating", "elliptic", "gauss_x", "rank_one_gauss"};
}

SymbolHandle symbol_preset(const std::string& name, const std::map<std::string, double>& params, std::size_t d) {
    auto get = [&](const char* k, double def) {
        auto it = params.find(k);
        return it == params.end() ? def : it->second;
    };
    const std::size_t n = 2 * d;
    if (name == "one") return make_symbol(constant_field(n, 1.0), d, name, theta_weight(0, 0, d));
    if (name == "theta") {
        const double m = get("m", 0), mu = get("mu", 0);
        return make_symbol(make_expr(n, Theta{d, m, mu}), d, "theta(" + fmt(m) + "," + fmt(mu) + ")",
                           theta_weight(m, mu, d));
    }
    if (name == "xi") return make_symbol(make_expr(n, Xi1{d}), d, name, theta_weight(0, 1, d));
    if (name == "x_xi") return make_symbol(make_expr(n, XXi1{d}), d, name, theta_weight(1, 1, d));
    if (name == "japanese_xi") return make_symbol(make_expr(n, Theta{d, 0, 1}), d, name, theta_weight(0, 1, d));
    if (name == "gauss_xi") return make_symbol(make_expr(n, GaussXi{d}), d, name, theta_weight(0, 0, d));
    if (name == "gauss_xxi") return make_symbol(make_expr(n, GaussXXi{d}), d, name, theta_weight(0, 0, d));
    if (name == "oscillating") return make_symbol(make_expr(n, Oscillating{d}), d, name, theta_weight(0, 0, d));
    if (name == "elliptic") return make_symbol(make_expr(n, Elliptic{d}), d, name, theta_weight(0, 0, d));
    if (name == "gauss_x") {
        const double w = get("width", 1.0);
        return make_symbol(make_expr(n, GaussX{d, w}), d, "gauss_x(" + fmt(w) + ")", theta_weight(0, 0, d));
    }
    if (name == "rank_one_gauss")
        return make_symbol(make_expr(n, RankOneGauss{d}), d, name, theta_weight(0, 0, d));
    throw std::invalid_argument("unknown symbol preset '" + name + "'");
}

// --------------------------------------------------------------- seminorms

nlohmann::json to_json(const SeminormReport& r) {
    return {{"orders", to_json(r.orders)},
            {"max_constant", r.max_constant},
            {"threshold", r.threshold},
            {"probes", r.probes},
            {"pass", r.pass}};
}

SeminormReport seminorm_probe(const FieldPtr& a, std::size_t d, const WeightHandle& w, double r, double rho, int K,
                              const ProbeSet& probes, double threshold) {
    SeminormReport rep;
    rep.threshold = threshold;
    rep.probes = probes.description;
    rep.orders = derivative_table(*a, d, w, r, rho, K, probes);
    for (const auto& e : rep.orders) rep.max_constant = std::max(rep.max_constant, e.constant);
    rep.pass = rep.max_constant <= threshold;
    return rep;
}

SeminormReport seminorm_probe(const SymbolHandle& a, const WeightHandle& w, double r, double rho, int K,
                              const ProbeSet& probes, double threshold) {
    return seminorm_probe(a.f, a.d, w, r, rho, K, probes, threshold);
}

// ------------------------------------------------------ structure functions

namespace {

struct Cutoff {
    std::size_t d;
    double k;
    template <class T>
    T operator()(std::span<const T> a) const {
        T dist2 = (a[d] - a[0]) * (a[d] - a[0]);
        for (std::size_t i = 1; i < d; ++i) dist2 += (a[d + i] - a[i]) * (a[d + i] - a[i]);
        const T ratio2 = dist2 / (japanese_sq(a.subspan(0, d)) * (k * k));
        // plateaus decided on the squared ratio to avoid sqrt at the diagonal
        const double rb = base_value(ratio2);
        if (rb <= 0.25) return ratio2 * 0.0 + 1.0;
        if (rb >= 1.0) return ratio2 * 0.0;
        return smooth_step(sqrt(ratio2), 0.5, 1.0);
    }
};

struct Excision {
    std::size_t d;
    double R;
    ExcisionKind kind;
    template <class T>
    T operator()(std::span<const T> a) const {
        const std::size_t lo = kind == ExcisionKind::xi_only ? d : 0;
        const std::size_t hi = kind == ExcisionKind::x_only ? d : 2 * d;
        T r2 = a[lo] * a[lo];
        for (std::size_t i = lo + 1; i < hi; ++i) r2 += a[i] * a[i];
        const double rb = base_value(r2);
        if (rb <= 0.25 * R * R) return r2 * 0.0;
        if (rb >= 0.5 * R * R) return r2 * 0.0 + 1.0;
        return 1.0 - smooth_step(sqrt(r2), 0.5 * R, R / std::sqrt(2.0));
    }
};

}  // namespace

SymbolHandle cutoff_diagonal(double k, std::size_t d) {
    if (!(k > 0 && k < 1)) throw std::invalid_argument("cutoff_diagonal: k must lie in (0, 1)");
    return make_symbol(make_expr(2 * d, Cutoff{d, k}), d, "cutoff(" + fmt(k) + ")", theta_weight(0, 0, d));
}

SymbolHandle excision(double R, std::size_t d, ExcisionKind kind) {
    if (!(R > 0) || !std::isfinite(R)) throw std::invalid_argument("excision: R must be positive");
    const char* tag = kind == ExcisionKind::joint ? "" : (kind == ExcisionKind::xi_only ? ",xi" : ",x");
    return make_symbol(make_expr(2 * d, Excision{d, R, kind}), d, "excision(" + fmt(R) + tag + ")",
                       theta_weight(0, 0, d));
}

SymbolHandle structure_function(StructureKind kind, double param, std::size_t d) {
    return kind == StructureKind::cutoff_diagonal ? cutoff_diagonal(param, d) : excision(param, d);
}

// ------------------------------------------------------- asymptotic summation

AsymptoticSum asymptotic_sum(const std::vector<AsymptoticTerm>& terms, const WeightHandle& w, double r, double rho,
                             const ProbeSet& probes, const AsymptoticOptions& opt) {
    if (terms.empty()) throw std::invalid_argument("asymptotic_sum: empty term list");
    const std::size_t d = terms[0].a.d;
    for (std::size_t j = 0; j < terms.size(); ++j) {
        if (terms[j].a.d != d) throw AsymptoticSumError("asymptotic_sum: dimension mismatch", j);
        if (terms[j].s > 0 || terms[j].sigma > 0) throw AsymptoticSumError("asymptotic_sum: positive order tag", j);
        if (j && (terms[j].s > terms[j - 1].s || terms[j].sigma > terms[j - 1].sigma))
            throw AsymptoticSumError("asymptotic_sum: order tags must be non-increasing", j);
    }
    AsymptoticSum out;
    const bool s_drops = terms.back().s < terms.front().s;
    const bool sigma_drops = terms.back().sigma < terms.front().sigma;
    out.kind = (s_drops == sigma_drops) ? ExcisionKind::joint
                                        : (sigma_drops ? ExcisionKind::xi_only : ExcisionKind::x_only);

    double rmin = INFINITY;
    for (const auto& z : probes.points) {
        double n = 0;
        for (double v : z) n += v * v;
        if (n > 0) rmin = std::min(rmin, std::sqrt(n));
    }
    if (!std::isfinite(rmin)) rmin = 1.0;

    double R = rmin;
    for (std::size_t j = 0; j < terms.size(); ++j) {
        if (j > 0) {
            const WeightHandle cls = weight_product(w, theta_weight(terms[j - 1].s, terms[j - 1].sigma, d));
            const double target = std::ldexp(1.0, -static_cast<int>(j));
            R *= 2.0;
            int k = 0;
            for (;; ++k, R *= 2.0) {
                if (k > opt.max_doublings)
                    throw AsymptoticSumError("asymptotic_sum: radius search did not terminate for term " +
                                                 std::to_string(j),
                                             j);
                const auto masked = mul(excision(R, d, out.kind).f, terms[j].a.f);
                const auto rep = seminorm_probe(masked, d, cls, r, rho, opt.K, probes, target);
                if (rep.pass) break;
            }
        }
        out.radii.push_back(R);
        auto m = terms[j].a;
        m.f = mul(excision(R, d, out.kind).f, terms[j].a.f);
        m.name = "excised(" + terms[j].a.name + ")";
        out.masked.push_back(m);
    }
    std::vector<FieldPtr> parts;
    std::vector<cplx> ones;
    for (const auto& m : out.masked) {
        parts.push_back(m.f);
        ones.push_back(1.0);
    }
    out.symbol = make_symbol(linear_combination(parts, ones), d, "asymptotic_sum", weight_product(w, theta_weight(
                                                                                        terms[0].s, terms[0].sigma, d)),
                             r, rho);
    return out;
}

// --------------------------------------------------------------- ellipticity

nlohmann::json to_json(const EllipticityReport& r) {
    return {{"inf_ratio", r.inf_ratio},
            {"witness", r.witness},
            {"qualifying", r.qualifying},
            {"threshold", r.threshold},
            {"pass", r.pass}};
}

EllipticityReport ellipticity_probe(const SymbolHandle& a, const WeightHandle& w, double R, const ProbeSet& probes,
                                    double threshold) {
    const std::size_t d = a.d;
    EllipticityReport rep;
    rep.threshold = threshold;
    rep.inf_ratio = INFINITY;
    for (const auto& z : probes.points) {
        const double nx = japanese(std::span<const double>(z).subspan(0, d));
        const double nxi = japanese(std::span<const double>(z).subspan(d, d));
        // |x| + |xi| from the Japanese brackets
        const double s = std::sqrt(std::max(0.0, nx * nx - 1)) + std::sqrt(std::max(0.0, nxi * nxi - 1));
        if (s < R) continue;
        ++rep.qualifying;
        const double q = std::abs(a(z)) / w(z);
        if (!std::isfinite(q)) throw ProbeError("ellipticity_probe: non-finite ratio", z);
        if (q < rep.inf_ratio) {
            rep.inf_ratio = q;
            rep.witness = z;
        }
    }
    if (rep.qualifying == 0) throw std::invalid_argument("ellipticity_probe: no probe with |x| + |xi| >= R");
    rep.pass = rep.inf_ratio >= threshold;
    return rep;
}

}  // namespace sgfio
