#include "sgfio/calculus.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace sgfio {

namespace {

cplx minus_i_pow(int n) {
    static const cplx p[4] = {1.0, cplx(0, -1), -1.0, cplx(0, 1)};
    return p[n % 4];
}

void check_order(int M, const char* who) {
    if (M < 1) throw std::invalid_argument(std::string(who) + ": truncation order must be >= 1");
    if (M > max_expansion_order)
        throw std::domain_error(std::string(who) + ": truncation order exceeds the cap " +
                                std::to_string(max_expansion_order));
}

std::vector<FieldPtr> coords(std::size_t arity, std::size_t begin, std::size_t n) {
    std::vector<FieldPtr> c;
    for (std::size_t i = 0; i < n; ++i) c.push_back(coordinate(arity, begin + i));
    return c;
}

std::vector<std::size_t> iota(std::size_t begin, std::size_t n) {
    std::vector<std::size_t> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = begin + i;
    return v;
}

std::vector<std::size_t> cat(std::vector<std::size_t> a, const std::vector<std::size_t>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

std::string theta_str(double m, double mu) {
    std::ostringstream os;
    os << "theta(" << m << "," << mu << ")";
    return os.str();
}

WeightHandle tagged(const WeightHandle& w, double m, double mu) {
    if (m == 0 && mu == 0) return w;
    auto t = weight_product(w, theta_weight(m, mu, w.d));
    t.provenance = w.provenance + "*" + theta_str(m, mu);
    return t;
}

/// x-coordinates followed by a d-output field as the arguments of a 2d-symbol.
FieldPtr at_x_and(FieldPtr f, std::size_t d, FieldPtr second) {
    auto inner = coords(2 * d, 0, d);
    inner.push_back(std::move(second));
    return compose(std::move(f), std::move(inner));
}

/// f(first(x, xi), xi)
FieldPtr at_and_xi(FieldPtr f, std::size_t d, FieldPtr first) {
    std::vector<FieldPtr> inner{std::move(first)};
    for (auto& c : coords(2 * d, d, d)) inner.push_back(c);
    return compose(std::move(f), std::move(inner));
}

SymbolHandle transposed_term(const SymbolHandle& s) {
    auto t = transpose_symbol(s);
    t.name = s.name;
    return t;
}

// Sum_{|alpha| < M} c_alpha / alpha! for (p, a, phi).
struct Expansion {
    std::vector<ExpansionTerm> terms;
    SymbolHandle symbol;
};

Expansion base_expansion(const SymbolHandle& p, const SymbolHandle& a, const PhaseHandle& phi, int M,
                         const std::string& name) {
    Expansion e;
    std::vector<FieldPtr> fs;
    std::vector<cplx> cs;
    for (const auto& alpha : MultiIndex::enumerate(a.d, M - 1)) {
        e.terms.push_back(expansion_term(p, a, phi, alpha));
        fs.push_back(e.terms.back().term.f);
        cs.push_back(1.0 / alpha.factorial());
    }
    const auto& t0 = e.terms.front().term;
    e.symbol = make_symbol(linear_combination(fs, cs), a.d, name, t0.weight, t0.r, t0.rho);
    return e;
}

ProbeSet hypothesis_probes(std::size_t d) { return log_radial_probes(d, 1e3, 2); }

void require_phase(const PhaseHandle& phi, bool regular, const std::string& who) {
    if (phi.identity) return;
    const auto rep = phase_probe(phi, hypothesis_probes(phi.d));
    if (!rep.simple || (regular && !rep.regular))
        throw HypothesisError(who + ": phase '" + phi.name + "' fails the " + (regular ? "regular" : "simple") +
                              " probe (" + rep.failed + ")");
}

void require_invariance(const WeightHandle& w, const PhaseHandle& phi, int side, const std::string& who) {
    if (phi.identity) return;
    const std::size_t d = phi.d;
    const FieldPtr map = side == 2 ? transpose(phi.grad_x, d) : phi.grad_xi;
    const auto rep = invariance_probe(w, map, side, hypothesis_probes(d));
    if (!rep.pass) {
        std::ostringstream os;
        os << who << ": weight '" << w.provenance << "' fails the (phi," << side
           << ")-invariance probe (ratio " << rep.ratio_max << ")";
        throw HypothesisError(os.str());
    }
}

FieldPtr inverse_weight(const WeightHandle& w) { return divide(constant_field(w.arity, 1.0), w.f); }

}  // namespace

// ---------------------------------------------------------------- strings

std::string to_string(MixedMode m) {
    switch (m) {
        case MixedMode::pdo_fio1: return "pdo_fio1";
        case MixedMode::fio1_pdo: return "fio1_pdo";
        case MixedMode::fio2_pdo: return "fio2_pdo";
        case MixedMode::pdo_fio2: return "pdo_fio2";
    }
    return "?";
}

std::string to_string(PairOrder o) { return o == PairOrder::I_II ? "I_II" : "II_I"; }
std::string to_string(TypeIIReading r) { return r == TypeIIReading::adjoint ? "adjoint" : "literal"; }
std::string to_string(EgorovVariant v) {
    return v == EgorovVariant::sandwich_adjoint ? "sandwich_adjoint" : "conjugation";
}

MixedMode parse_mixed_mode(const std::string& s) {
    for (auto m : {MixedMode::pdo_fio1, MixedMode::fio1_pdo, MixedMode::fio2_pdo, MixedMode::pdo_fio2})
        if (s == to_string(m)) return m;
    throw std::invalid_argument("unknown composition mode '" + s +
                                "' (expected pdo_fio1, fio1_pdo, fio2_pdo or pdo_fio2)");
}

PairOrder parse_pair_order(const std::string& s) {
    if (s == "I_II") return PairOrder::I_II;
    if (s == "II_I") return PairOrder::II_I;
    throw std::invalid_argument("unknown pair order '" + s + "' (expected I_II or II_I)");
}

// ------------------------------------------------------------------ results

OperatorSpec CompositionResult::as_operator() const {
    switch (output) {
        case OperatorKind::fio_type1: return make_fio1(*phase, symbol);
        case OperatorKind::fio_type2: return make_fio2(*phase, symbol);
        case OperatorKind::pdo_t: return make_pdo(symbol);
        default: throw std::logic_error("CompositionResult: unexpected output kind");
    }
}

nlohmann::json to_json(const CompositionResult& r) {
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& t : r.terms) {
        nlohmann::json j{{"alpha", t.alpha.entries()},
                         {"class_tag", {{"weight", t.term.weight.provenance}, {"r", t.term.r}, {"rho", t.term.rho}}}};
        j["probe_constant"] = t.probe_constant ? nlohmann::json(*t.probe_constant) : nlohmann::json(nullptr);
        terms.push_back(j);
    }
    nlohmann::json j{{"mode", r.mode},
                     {"M", r.M},
                     {"output", to_string(r.output)},
                     {"terms", terms},
                     {"remainder", r.remainder}};
    if (r.output == OperatorKind::fio_type2 || r.mode == "fio2_pdo" || r.mode == "pdo_fio2")
        j["reading"] = to_string(r.reading);
    if (r.phase) j["phase"] = r.phase->name;
    if (!r.excision_radii.empty()) j["excision_radii"] = r.excision_radii;
    return j;
}

void probe_terms(CompositionResult& r, const ProbeSet& probes, int K) {
    for (auto& t : r.terms) {
        const auto rep = seminorm_probe(t.term, t.term.weight, t.term.r, t.term.rho, K, probes);
        t.probe_constant = rep.max_constant;
    }
}

// ------------------------------------------------------------- mixed terms

FieldPtr psi_amplitude(const PhaseHandle& phi, const SymbolHandle& a) {
    const std::size_t d = phi.d;
    if (a.d != d) throw std::invalid_argument("psi_amplitude: dimension mismatch");
    auto f = phi.f, gx = phi.grad_x, af = a.f;
    auto jet = [f, gx, af, d](std::span<const Jet> z) {
        std::vector<Jet> xxi, yxi;
        for (std::size_t i = 0; i < d; ++i) {
            xxi.push_back(z[i]);
            yxi.push_back(z[d + i]);
        }
        for (std::size_t i = 0; i < d; ++i) {
            xxi.push_back(z[2 * d + i]);
            yxi.push_back(z[2 * d + i]);
        }
        Jet psi = f->compose1(yxi) - f->compose1(xxi);
        const auto g = gx->compose(xxi);
        for (std::size_t i = 0; i < d; ++i) psi -= (z[d + i] - z[i]) * g[i];
        return std::vector<Jet>{exp(psi * cplx(0, 1)) * af->compose1(yxi)};
    };
    return std::make_shared<LambdaField>(3 * d, 1, nullptr, jet);
}

cplx psi_derivative(const PhaseHandle& phi, const SymbolHandle& a, const MultiIndex& alpha, std::span<const double> x,
                    std::span<const double> xi) {
    const std::size_t d = phi.d;
    if (alpha.size() != d || x.size() != d || xi.size() != d)
        throw std::invalid_argument("psi_derivative: dimension mismatch");
    if (alpha.order() > max_expansion_order)
        throw std::domain_error("psi_derivative: |alpha| exceeds the cap " + std::to_string(max_expansion_order));
    std::vector<double> z(x.begin(), x.end());
    z.insert(z.end(), x.begin(), x.end());
    z.insert(z.end(), xi.begin(), xi.end());
    const Jet t = taylor(*psi_amplitude(phi, a), z, alpha.order());
    return minus_i_pow(alpha.order()) * t.partial(MultiIndex(d).concat(alpha).concat(MultiIndex(d)));
}

ExpansionTerm expansion_term(const SymbolHandle& p, const SymbolHandle& a, const PhaseHandle& phi,
                             const MultiIndex& alpha) {
    const std::size_t d = phi.d;
    if (p.d != d || a.d != d || alpha.size() != d) throw std::invalid_argument("expansion_term: dimension mismatch");
    const int n = alpha.order();
    if (n > max_expansion_order)
        throw std::domain_error("expansion_term: |alpha| exceeds the cap " + std::to_string(max_expansion_order));

    // (d^alpha_xi p)(x, phi'_x(x, xi))
    FieldPtr dp = derivative(p.f, MultiIndex(d).concat(alpha));
    FieldPtr pf = phi.identity ? dp : at_x_and(dp, d, phi.grad_x);

    // (-i)^{|alpha|} d^alpha_y [e^{i psi} a]|_{y = x}
    FieldPtr af;
    if (phi.identity) {
        af = derivative(a.f, alpha.concat(MultiIndex(d)));
    } else {
        auto dpsi = derivative(psi_amplitude(phi, a), MultiIndex(d).concat(alpha).concat(MultiIndex(d)));
        auto inner = coords(2 * d, 0, d);
        for (auto& c : coords(2 * d, 0, d)) inner.push_back(c);
        for (auto& c : coords(2 * d, d, d)) inner.push_back(c);
        af = compose(dpsi, inner);
    }

    ExpansionTerm t;
    t.alpha = alpha;
    const double r = std::min({a.r, p.r, 1.0}), rho = std::min(a.rho, 1.0);
    WeightHandle w0 = weight_product(a.weight, phi.identity ? p.weight : theta_transform(p.weight, phi, 2));
    w0.provenance = a.weight.provenance + "*" + (phi.identity ? p.weight.provenance
                                                              : "Theta2[" + phi.name + "](" + p.weight.provenance + ")");
    const WeightHandle w = tagged(w0, -std::min(a.r, 0.5) * n, -0.5 * n);
    t.term = make_symbol(scale(mul(pf, af), minus_i_pow(n)), d, "c" + alpha.str(), w, r, rho);
    return t;
}

SymbolHandle kn_adjoint_symbol(const SymbolHandle& p, int M) {
    check_order(M, "kn_adjoint_symbol");
    const std::size_t d = p.d;
    const FieldPtr pb = conjugate(p.f);
    std::vector<FieldPtr> fs;
    std::vector<cplx> cs;
    for (const auto& alpha : MultiIndex::enumerate(d, M - 1)) {
        fs.push_back(derivative(pb, alpha.concat(alpha)));
        cs.push_back(minus_i_pow(alpha.order()) / alpha.factorial());
    }
    auto q = p;
    q.f = M == 1 ? pb : linear_combination(fs, cs);
    q.name = "adj(" + p.name + ")";
    return q;
}

CompositionResult compose_mixed(MixedMode mode, const SymbolHandle& p, const SymbolHandle& a, const PhaseHandle& phi,
                                int M, const ComposeOptions& opt) {
    check_order(M, "compose_mixed");
    const std::size_t d = phi.d;
    if (p.d != d || a.d != d) throw std::invalid_argument("compose_mixed: dimension mismatch");
    const std::string who = "compose_mixed(" + to_string(mode) + ")";

    const bool left = mode == MixedMode::pdo_fio1 || mode == MixedMode::fio2_pdo;
    const bool type2 = mode == MixedMode::fio2_pdo || mode == MixedMode::pdo_fio2;
    if (opt.check_hypotheses) {
        require_phase(phi, false, who);
        if (left) {
            if (p.rho != 1.0) throw HypothesisError(who + ": symbol needs rho = 1");
            require_invariance(p.weight, phi, 2, who);
        } else {
            if (p.r != 1.0) throw HypothesisError(who + ": symbol needs r = 1");
            require_invariance(p.weight, phi, 1, who);
        }
    }

    const SymbolHandle q = type2 ? kn_adjoint_symbol(p, M) : p;
    CompositionResult res;
    res.mode = to_string(mode);
    res.M = M;
    res.phase = phi;
    res.reading = opt.reading;
    res.output = type2 && opt.reading == TypeIIReading::adjoint ? OperatorKind::fio_type2 : OperatorKind::fio_type1;
    if (left) {
        auto e = base_expansion(q, a, phi, M, "c");
        res.terms = std::move(e.terms);
        res.symbol = e.symbol;
    } else {
        // Op_phi(a) Op(p) via the swapped-argument handles.
        auto e = base_expansion(transpose_symbol(q), transpose_symbol(a), transpose_phase(phi), M, "c");
        for (auto& t : e.terms) t.term = transposed_term(t.term);
        res.terms = std::move(e.terms);
        res.symbol = transposed_term(e.symbol);
    }
    if (opt.summation == Summation::asymptotic && M > 1) {
        // order-j groups tagged theta_{-min(r_a, 1/2) j, -j/2} (arguments swapped for transpose modes)
        std::vector<AsymptoticTerm> groups;
        for (int j = 0; j < M; ++j) {
            std::vector<FieldPtr> fs;
            std::vector<cplx> cs;
            for (const auto& t : res.terms)
                if (t.alpha.order() == j) {
                    fs.push_back(t.term.f);
                    cs.push_back(1.0 / t.alpha.factorial());
                }
            const double s = -std::min(a.r, 0.5) * j, sigma = -0.5 * j;
            AsymptoticTerm g;
            g.a = res.terms.front().term;
            g.a.f = linear_combination(fs, cs);
            g.s = left ? s : sigma;
            g.sigma = left ? sigma : s;
            groups.push_back(g);
        }
        const auto& t0 = res.terms.front().term;
        const auto sum = asymptotic_sum(groups, t0.weight, t0.r, t0.rho, default_probes(d));
        res.symbol.f = sum.symbol.f;
        res.excision_radii = sum.radii;
    }
    res.symbol.name = "c[" + res.mode + "]";
    return res;
}

// ---------------------------------------------------------------- FIO x FIO

FieldPtr diagonal_expansion(FieldPtr S, std::size_t d, SPhiVariant v, int M, std::optional<MultiIndex> only) {
    check_order(M, "diagonal_expansion");
    if (S->arity() != 3 * d) throw std::invalid_argument("diagonal_expansion: S must have arity 3d");
    std::vector<MultiIndex> alphas;
    if (only) {
        if (only->size() != d) throw std::invalid_argument("diagonal_expansion: alpha dimension mismatch");
        alphas.push_back(*only);
    } else {
        alphas = MultiIndex::enumerate(d, M - 1);
    }
    int top = 0;
    for (const auto& a : alphas) top = std::max(top, a.order());
    const bool single = only.has_value();
    // Diagonal point and the variables paired by alpha.
    auto lift = [v, d](std::span<const double> z) {
        std::vector<double> p(z.begin(), z.begin() + d);
        if (v == SPhiVariant::xy) {
            p.insert(p.end(), z.begin(), z.begin() + d);
            p.insert(p.end(), z.begin() + d, z.end());
        } else {
            p.insert(p.end(), z.begin() + d, z.end());
            p.insert(p.end(), z.begin() + d, z.end());
        }
        return p;
    };
    auto index = [v, d](const MultiIndex& a) {
        return v == SPhiVariant::xy ? MultiIndex(d).concat(a).concat(a) : a.concat(MultiIndex(d)).concat(a);
    };
    auto jet = [S, d, v, alphas, top, single, lift, index](std::span<const Jet> args) {
        const int K = args[0].order();
        const auto b = base_point(args);
        const Jet T = taylor(*S, lift(b), K + 2 * top);
        const auto inc = increments(args);
        std::vector<Jet> deltas;
        for (std::size_t i = 0; i < d; ++i) deltas.push_back(inc[i]);
        if (v == SPhiVariant::xy)
            for (std::size_t i = 0; i < d; ++i) deltas.push_back(inc[i]);
        for (std::size_t i = 0; i < d; ++i) deltas.push_back(inc[d + i]);
        if (v == SPhiVariant::xi_eta)
            for (std::size_t i = 0; i < d; ++i) deltas.push_back(inc[d + i]);
        Jet out(args[0].layout_ptr(), 0.0);
        for (const auto& a : alphas) {
            const cplx c = minus_i_pow(a.order()) / (single ? 1.0 : a.factorial());
            Jet D = T.derivative(index(a));
            out += substitute(D, deltas) * c;
        }
        return std::vector<Jet>{out};
    };
    return std::make_shared<LambdaField>(2 * d, 1, nullptr, jet);
}

CompositionResult compose_fio_pair(PairOrder order, const SymbolHandle& a, const SymbolHandle& b,
                                   const PhaseHandle& phi, int M, const PairOptions& opt) {
    check_order(M, "compose_fio_pair");
    const std::size_t d = phi.d;
    if (a.d != d || b.d != d) throw std::invalid_argument("compose_fio_pair: dimension mismatch");
    if (!(opt.k_cutoff > 0 && opt.k_cutoff < 1))
        throw std::invalid_argument("compose_fio_pair: k_cutoff must lie in (0, 1)");
    const std::string who = "compose_fio_pair(" + to_string(order) + ")";
    const bool I_II = order == PairOrder::I_II;

    const WeightHandle w_ab = weight_product(a.weight, b.weight);
    if (opt.check_hypotheses) {
        require_phase(phi, true, who);
        require_invariance(w_ab, phi, I_II ? 2 : 1, who);
    }

    // c0 on (x, y, xi) = a(x, xi) conj b(y, xi) chi(x, y)   (I_II)
    //    on (x, xi, eta) = a(x, xi) conj b(x, eta) chi(xi, eta)  (II_I)
    const auto X = iota(0, d), Y = iota(d, d), Z = iota(2 * d, d);
    const SymbolHandle chi = cutoff_diagonal(opt.k_cutoff, d);
    FieldPtr c0;
    if (I_II)
        c0 = mul(mul(permute_args(a.f, 3 * d, cat(X, Z)), permute_args(conjugate(b.f), 3 * d, cat(Y, Z))),
                 permute_args(chi.f, 3 * d, cat(X, Y)));
    else
        c0 = mul(mul(permute_args(a.f, 3 * d, cat(X, Y)), permute_args(conjugate(b.f), 3 * d, cat(X, Z))),
                 permute_args(chi.f, 3 * d, cat(Y, Z)));
    const SPhiVariant v = I_II ? SPhiVariant::xy : SPhiVariant::xi_eta;
    SPhiOptions so;
    so.k_cutoff = opt.k_cutoff;
    so.force_general = opt.force_general;
    so.newton = opt.newton;
    const FieldPtr S = s_phi_transform(c0, phi, v, so);

    // Result class: w_a w_b pulled back along the inverse gradient map.
    WeightHandle w = w_ab;
    if (!phi.identity) {
        w.f = I_II ? at_x_and(w_ab.f, d, inverse_gradient_x(phi)) : at_and_xi(w_ab.f, d, inverse_gradient_xi(phi));
        w.provenance = (I_II ? "(w_a w_b)(x,eta)" : "(w_a w_b)(y,xi)");
    }
    const double r = std::min({a.r, b.r, 1.0}), rho = std::min({a.rho, b.rho, 1.0});

    CompositionResult res;
    res.mode = to_string(order);
    res.M = M;
    res.output = OperatorKind::pdo_t;
    std::vector<FieldPtr> fs;
    std::vector<cplx> cs;
    for (const auto& alpha : MultiIndex::enumerate(d, M - 1)) {
        ExpansionTerm t;
        t.alpha = alpha;
        const int n = alpha.order();
        t.term = make_symbol(diagonal_expansion(S, d, v, n + 1, alpha), d, "c" + alpha.str(),
                             tagged(w, -r * n, -rho * n), r, rho);
        res.terms.push_back(t);
    }
    res.symbol = make_symbol(diagonal_expansion(S, d, v, M), d, "c[" + res.mode + "]", w, r, rho);

    if (opt.check_hypotheses && !phi.identity) {
        // S_phi must be computable on the diagonal of the probe region.
        const auto probes = hypothesis_probes(d);
        for (std::size_t i = 0; i < probes.size(); i += 7) {
            const cplx c = res.symbol.f->value(probes.points[i]);
            if (!std::isfinite(c.real()) || !std::isfinite(c.imag()))
                throw HypothesisError(who + ": non-finite composed symbol at a probe point");
        }
    }
    return res;
}

// ---------------------------------------------------------------- parametrix

ParametrixResult parametrix(const SymbolHandle& a, const PhaseHandle& phi, const WeightHandle& w, int M,
                            const ParametrixOptions& opt) {
    check_order(M, "parametrix");
    const std::size_t d = phi.d;
    const ProbeSet probes = opt.probes ? *opt.probes : default_probes(d);
    const ProbeSet outer = outside_ball(probes, opt.defect_radius);
    if (outer.points.empty()) throw std::invalid_argument("parametrix: no probe outside the defect radius");
    const auto ell = ellipticity_probe(a, w, 0.0, probes);
    if (!ell.pass) {
        std::ostringstream os;
        os << "parametrix: symbol '" << a.name << "' is not elliptic with respect to '" << w.provenance
           << "' (inf |a|/w = " << ell.inf_ratio << ")";
        throw HypothesisError(os.str());
    }
    if (opt.pair.check_hypotheses) require_phase(phi, true, "parametrix");

    // b0 = |det phi''_{x xi}| / conj(a)
    const FieldPtr det = phi.identity ? constant_field(2 * d, 1.0) : mixed_hessian_det(phi);
    WeightHandle wb = w;
    wb.f = inverse_weight(w);
    wb.provenance = "1/(" + w.provenance + ")";
    const SymbolHandle b0 = make_symbol(divide(det, conjugate(a.f)), d, "b0", wb, a.r, a.rho);

    ParametrixResult res;
    res.iterates.push_back(b0);
    nlohmann::json hist = nlohmann::json::array();
    const SymbolHandle one = make_symbol(constant_field(2 * d, 1.0), d, "1", constant_weight(1.0, d));
    const FieldPtr y_of = phi.identity ? nullptr : phi.grad_xi;
    for (int k = 0; k < M; ++k) {
        const auto& bk = res.iterates.back();
        const auto c = compose_fio_pair(PairOrder::II_I, a, bk, phi, M + 1, opt.pair);
        const FieldPtr r = sub(c.symbol.f, one.f);
        const auto cls = theta_weight(-(k + 1.0), -(k + 1.0), d);
        const auto rep = seminorm_probe(r, d, cls, 1.0, 1.0, opt.K, outer, opt.threshold);
        const double whole = seminorm_probe(r, d, cls, 1.0, 1.0, opt.K, probes, opt.threshold).max_constant;
        res.defects.push_back(rep);
        res.whole_space_constants.push_back(whole);
        hist.push_back({{"iterate", k},
                        {"class", theta_str(-(k + 1.0), -(k + 1.0))},
                        {"max_constant", rep.max_constant},
                        {"whole_space_constant", whole},
                        {"pass", rep.pass}});
        if (k + 1 == M) break;
        // e(y, xi) = b0(y, xi) conj(r(phi'_xi(y, xi), xi))
        const FieldPtr r_at = phi.identity ? r : at_and_xi(r, d, y_of);
        auto next = bk;
        next.f = sub(bk.f, mul(b0.f, conjugate(r_at)));
        next.name = "b" + std::to_string(k + 1);
        res.iterates.push_back(next);
    }
    res.b = res.iterates.back();
    res.b.name = "parametrix(" + a.name + ")";
    res.op = make_fio2(phi, res.b);
    res.report = {{"M", M},
                  {"defect_radius", opt.defect_radius},
                  {"ellipticity", to_json(ell)},
                  {"defects", hist},
                  {"pass", std::all_of(res.defects.begin(), res.defects.end(), [](const auto& x) { return x.pass; })}};
    return res;
}

// -------------------------------------------------------------------- Egorov

SymbolHandle egorov_symbol(const SymbolHandle& p, const SymbolHandle& a, const PhaseHandle& phi, EgorovVariant v) {
    const std::size_t d = phi.d;
    if (p.d != d || a.d != d) throw std::invalid_argument("egorov_symbol: dimension mismatch");
    if (v == EgorovVariant::conjugation) {
        const auto ell = ellipticity_probe(a, a.weight, 0.0, default_probes(d));
        if (!ell.pass) throw HypothesisError("egorov_symbol: amplitude '" + a.name + "' is not elliptic");
    }
    FieldPtr f, wf;
    if (phi.identity) {
        f = p.f;
        wf = p.weight.f;
        if (v == EgorovVariant::sandwich_adjoint) {
            f = mul(f, mul(a.f, conjugate(a.f)));
            wf = mul(wf, mul(a.weight.f, a.weight.f));
        }
    } else {
        // eta = (phi'_x)^{-1}(x, xi), y = phi'_xi(x, eta)
        const FieldPtr eta = inverse_gradient_x(phi);
        const FieldPtr xeta = stack([&] {
            auto parts = coords(2 * d, 0, d);
            for (std::size_t i = 0; i < d; ++i) parts.push_back(component(eta, i));
            return parts;
        }());
        const FieldPtr y = compose(phi.grad_xi, {xeta});
        const FieldPtr ye = stack([&] {
            std::vector<FieldPtr> parts;
            for (std::size_t i = 0; i < d; ++i) parts.push_back(component(y, i));
            for (std::size_t i = 0; i < d; ++i) parts.push_back(component(eta, i));
            return parts;
        }());
        f = compose(p.f, {ye});
        wf = compose(p.weight.f, {ye});
        if (v == EgorovVariant::sandwich_adjoint) {
            const FieldPtr aa = compose(mul(a.f, conjugate(a.f)), {xeta});
            f = divide(mul(f, aa), compose(mixed_hessian_det(phi), {xeta}));
            wf = mul(wf, compose(mul(a.weight.f, a.weight.f), {xeta}));
        }
    }
    WeightHandle w = p.weight;
    w.f = wf;
    w.provenance = "egorov(" + p.weight.provenance + ")";
    return make_symbol(f, d, "egorov[" + to_string(v) + "](" + p.name + ")", w, std::min(p.r, a.r),
                       std::min(p.rho, a.rho));
}

CompositionResult egorov_chain(const SymbolHandle& p, const SymbolHandle& a, const PhaseHandle& phi, int M,
                               const PairOptions& opt) {
    ComposeOptions co;
    co.check_hypotheses = opt.check_hypotheses;
    const auto c1 = compose_mixed(MixedMode::fio1_pdo, p, a, phi, M, co);
    auto res = compose_fio_pair(PairOrder::I_II, c1.symbol, a, phi, M, opt);
    res.mode = "egorov_chain";
    return res;
}

// --------------------------------------------------------- reading diagnostics

nlohmann::json to_json(const ReadingCheck& r) {
    return {{"adjoint_error", r.adjoint_error},
            {"literal_error", r.literal_error},
            {"matches", to_string(r.matches)}};
}

ReadingCheck check_reading(const CompositionResult& r, const SymbolHandle& p, const SymbolHandle& b,
                           const PhaseHandle& phi, MixedMode mode, const GridFunction& u) {
    if (mode != MixedMode::fio2_pdo && mode != MixedMode::pdo_fio2)
        throw std::invalid_argument("check_reading: only the type II modes have two readings");
    const auto P = make_pdo(p);
    const auto B = make_fio2(phi, b);
    const GridFunction direct = mode == MixedMode::fio2_pdo ? apply(B, apply(P, u)) : apply(P, apply(B, u));
    ReadingCheck c;
    c.adjoint_error = relative_error(apply(make_fio2(phi, r.symbol), u), direct);
    c.literal_error = relative_error(apply(make_fio1(phi, r.symbol), u), direct);
    c.matches = c.adjoint_error <= c.literal_error ? TypeIIReading::adjoint : TypeIIReading::literal;
    return c;
}

}  // namespace sgfio
