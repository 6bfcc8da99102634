#include "sgfio/phases.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <boost/math/quadrature/gauss.hpp>

namespace sgfio {

namespace {

std::vector<std::size_t> range(std::size_t a, std::size_t b) {
    std::vector<std::size_t> v;
    for (std::size_t i = a; i < b; ++i) v.push_back(i);
    return v;
}

std::vector<double> reals(std::span<const cplx> z) {
    std::vector<double> v(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) v[i] = z[i].real();
    return v;
}

double norm2(std::span<const double> v) {
    double s = 0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}


}  // namespace

// ------------------------------------------------------------------ presets

PhaseHandle make_phase(FieldPtr f, std::size_t d, std::string name, std::map<std::string, double> params) {
    if (f->arity() != 2 * d) throw std::invalid_argument("make_phase: arity must be 2d");
    PhaseHandle p;
    p.f = f;
    p.d = d;
    p.name = std::move(name);
    p.params = std::move(params);
    p.grad_x = gradient(f, range(0, d));
    p.grad_xi = gradient(f, range(d, 2 * d));
    return p;
}

namespace {

template <class T>
T dot_x_xi(std::span<const T> a, std::size_t d) {
    T s = a[0] * a[d];
    for (std::size_t i = 1; i < d; ++i) s += a[i] * a[d + i];
    return s;
}

struct IdentityPhase {
    std::size_t d;
    template <class T>
    T operator()(std::span<const T> a) const { return dot_x_xi(a, d); }
};

struct TransportPhase {
    std::size_t d;
    double t;
    template <class T>
    T operator()(std::span<const T> a) const {
        return dot_x_xi(a, d) + sqrt(japanese_sq(a.subspan(d, d))) * t;
    }
};

struct PerturbedPhase {
    std::size_t d;
    double eps;
    template <class T>
    T operator()(std::span<const T> a) const {
        return dot_x_xi(a, d) + sqrt(japanese_sq(a.subspan(0, d)) * japanese_sq(a.subspan(d, d))) * eps;
    }
};

struct CubicPhase {
    std::size_t d;
    template <class T>
    T operator()(std::span<const T> a) const {
        T s = a[0] * a[d] * a[d] * a[d];
        for (std::size_t i = 1; i < d; ++i) s += a[i] * a[d + i] * a[d + i] * a[d + i];
        return s;
    }
};

struct DegeneratePhase {
    std::size_t d;
    template <class T>
    T operator()(std::span<const T> a) const {
        return dot_x_xi(a, d) / sqrt(japanese_sq(a.subspan(d, d)));
    }
};

}  // namespace

PhaseHandle identity_phase(std::size_t d) {
    auto p = make_phase(make_expr(2 * d, IdentityPhase{d}), d, "identity");
    p.identity = true;
    return p;
}

PhaseHandle transport_phase(double t, std::size_t d) {
    return make_phase(make_expr(2 * d, TransportPhase{d, t}), d, "transport", {{"t", t}});
}

PhaseHandle perturbed_phase(double eps, std::size_t d) {
    return make_phase(make_expr(2 * d, PerturbedPhase{d, eps}), d, "perturbed", {{"eps", eps}});
}

PhaseHandle cubic_phase(std::size_t d) { return make_phase(make_expr(2 * d, CubicPhase{d}), d, "cubic"); }

PhaseHandle degenerate_phase(std::size_t d) {
    return make_phase(make_expr(2 * d, DegeneratePhase{d}), d, "degenerate");
}

std::vector<std::string> phase_preset_names() { return {"identity", "transport", "perturbed", "cubic", "degenerate"}; }

PhaseHandle phase_preset(const std::string& name, const std::map<std::string, double>& params, std::size_t d) {
    auto get = [&](const char* k, double def) {
        auto it = params.find(k);
        return it == params.end() ? def : it->second;
    };
    if (name == "identity") return identity_phase(d);
    if (name == "transport") return transport_phase(get("t", 1.0), d);
    if (name == "perturbed") return perturbed_phase(get("eps", 0.3), d);
    if (name == "cubic") return cubic_phase(d);
    if (name == "degenerate") return degenerate_phase(d);
    throw std::invalid_argument("unknown phase preset '" + name + "'");
}

PhaseHandle transpose_phase(const PhaseHandle& phi) {
    auto p = make_phase(transpose(phi.f, phi.d), phi.d, "t(" + phi.name + ")", phi.params);
    p.identity = phi.identity;
    return p;
}

// ------------------------------------------------------------- small linalg

bool solve_small(std::span<double> A, std::span<double> b, std::size_t n) {
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < n; ++r)
            if (std::abs(A[r * n + c]) > std::abs(A[piv * n + c])) piv = r;
        if (A[piv * n + c] == 0.0 || !std::isfinite(A[piv * n + c])) return false;
        if (piv != c) {
            for (std::size_t k = 0; k < n; ++k) std::swap(A[c * n + k], A[piv * n + k]);
            std::swap(b[c], b[piv]);
        }
        for (std::size_t r = c + 1; r < n; ++r) {
            const double f = A[r * n + c] / A[c * n + c];
            for (std::size_t k = c; k < n; ++k) A[r * n + k] -= f * A[c * n + k];
            b[r] -= f * b[c];
        }
    }
    for (std::size_t c = n; c-- > 0;) {
        double s = b[c];
        for (std::size_t k = c + 1; k < n; ++k) s -= A[c * n + k] * b[k];
        b[c] = s / A[c * n + c];
    }
    return true;
}

double det_small(std::span<const double> A, std::size_t n) {
    if (n == 1) return A[0];
    if (n == 2) return A[0] * A[3] - A[1] * A[2];
    if (n == 3)
        return A[0] * (A[4] * A[8] - A[5] * A[7]) - A[1] * (A[3] * A[8] - A[5] * A[6]) +
               A[2] * (A[3] * A[7] - A[4] * A[6]);
    throw std::invalid_argument("det_small: n <= 3");
}

Jet det_jets(std::span<const Jet> A, std::size_t n) {
    if (n == 1) return A[0];
    if (n == 2) return A[0] * A[3] - A[1] * A[2];
    if (n == 3)
        return A[0] * (A[4] * A[8] - A[5] * A[7]) - A[1] * (A[3] * A[8] - A[5] * A[6]) +
               A[2] * (A[3] * A[7] - A[4] * A[6]);
    throw std::invalid_argument("det_jets: n <= 3");
}

// ------------------------------------------------------------------- probes

nlohmann::json to_json(const PhaseReport& r) {
    return {{"xi_ratio", {r.xi_ratio_min, r.xi_ratio_max}},
            {"x_ratio", {r.x_ratio_min, r.x_ratio_max}},
            {"seminorms", to_json(r.seminorms)},
            {"seminorm_pass", r.seminorm_pass},
            {"det", {r.det_min, r.det_max}},
            {"simple", r.simple},
            {"regular", r.regular},
            {"failed", r.failed}};
}

namespace {

// Mixed Hessian H[i][j] = d^2 phi / dx_i dxi_j from a jet of order >= 2.
void mixed_hessian(const Jet& t, std::size_t d, std::span<double> H) {
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            MultiIndex m(2 * d);
            m[i] += 1;
            m[d + j] += 1;
            H[i * d + j] = t.partial(m).real();
        }
}

}  // namespace

PhaseReport phase_probe(const PhaseHandle& phi, const ProbeSet& probes, const PhaseProbeOptions& opt) {
    const std::size_t d = phi.d;
    if (probes.d != d) throw std::invalid_argument("phase_probe: dimension mismatch");
    PhaseReport rep;
    rep.xi_ratio_min = rep.x_ratio_min = rep.det_min = INFINITY;
    std::vector<double> gx(d), gxi(d), H(d * d);
    for (const auto& z : probes.points) {
        const Jet t = taylor(*phi.f, z, 2);
        for (std::size_t i = 0; i < d; ++i) {
            gx[i] = t.coeff(1 + i).real();
            gxi[i] = t.coeff(1 + d + i).real();
        }
        const double rxi = japanese(gxi) / japanese(std::span<const double>(z).subspan(0, d));
        const double rx = japanese(gx) / japanese(std::span<const double>(z).subspan(d, d));
        mixed_hessian(t, d, H);
        const double det = std::abs(det_small(H, d));
        if (!std::isfinite(rxi) || !std::isfinite(rx) || !std::isfinite(det))
            throw ProbeError("phase_probe: non-finite value", z);
        rep.xi_ratio_min = std::min(rep.xi_ratio_min, rxi);
        rep.xi_ratio_max = std::max(rep.xi_ratio_max, rxi);
        rep.x_ratio_min = std::min(rep.x_ratio_min, rx);
        rep.x_ratio_max = std::max(rep.x_ratio_max, rx);
        rep.det_min = std::min(rep.det_min, det);
        rep.det_max = std::max(rep.det_max, det);
    }
    rep.seminorms = derivative_table(*phi.f, d, theta_weight(1, 1, d), 1, 1, opt.K, probes);
    rep.seminorm_pass = std::all_of(rep.seminorms.begin(), rep.seminorms.end(),
                                    [&](const OrderEntry& e) { return e.constant <= opt.seminorm_threshold; });
    const double b = opt.ratio_bound;
    const bool xi_ok = rep.xi_ratio_min >= 1 / b && rep.xi_ratio_max <= b;
    const bool x_ok = rep.x_ratio_min >= 1 / b && rep.x_ratio_max <= b;
    rep.simple = xi_ok && x_ok && rep.seminorm_pass;
    rep.regular = rep.simple && rep.det_min >= opt.det_bound;
    if (!xi_ok)
        rep.failed = "simple: <phi'_xi>/<x> outside [1/b, b]";
    else if (!x_ok)
        rep.failed = "simple: <phi'_x>/<xi> outside [1/b, b]";
    else if (!rep.seminorm_pass)
        rep.failed = "simple: SG^{1,1}_{1,1} seminorm above threshold";
    else if (!rep.regular)
        rep.failed = "regular: inf |det phi''_{x xi}| below bound";
    return rep;
}

// ------------------------------------------------------------------- Newton

std::vector<double> newton_solve(
    const std::function<void(std::span<const double>, std::span<double>, std::span<double>)>& F,
    std::span<const double> target, std::optional<std::vector<double>> guess, const NewtonOptions& opt) {
    const std::size_t n = target.size();
    std::vector<double> z = guess ? *guess : std::vector<double>(target.begin(), target.end());
    std::vector<double> val(n), J(n * n), step(n), trial(n), tval(n), tJ(n * n);
    const double scale = japanese(target);
    auto resid = [&](std::span<const double> v) {
        double s = 0;
        for (std::size_t i = 0; i < n; ++i) s += (v[i] - target[i]) * (v[i] - target[i]);
        return std::sqrt(s);
    };
    std::vector<double> trace;
    F(z, val, J);
    double r = resid(val);
    for (int it = 0;; ++it) {
        if (!std::isfinite(r)) throw NewtonError("Newton: non-finite residual", trace);
        if (r <= opt.tol * scale) return z;
        if (it >= opt.max_iter) {
            std::ostringstream os;
            os << "Newton: no convergence after " << opt.max_iter << " iterations (residual " << r << ")";
            throw NewtonError(os.str(), trace);
        }
        for (std::size_t i = 0; i < n; ++i) step[i] = target[i] - val[i];
        if (!solve_small(J, step, n)) throw NewtonError("Newton: singular Jacobian", trace);
        double lambda = 1.0;
        double rt = INFINITY;
        for (int h = 0; h < 30; ++h, lambda *= 0.5) {
            for (std::size_t i = 0; i < n; ++i) trial[i] = z[i] + lambda * step[i];
            F(trial, tval, tJ);
            rt = resid(tval);
            if (rt < r) break;
        }
        z = trial;
        val = tval;
        J = tJ;
        r = rt;
        trace.push_back(r);
    }
}

std::vector<double> invert_gradient(const PhaseHandle& phi, GradientSide side, std::span<const double> fixed,
                                    std::span<const double> target, std::optional<std::vector<double>> guess,
                                    const NewtonOptions& opt) {
    const std::size_t d = phi.d;
    if (fixed.size() != d || target.size() != d) throw std::invalid_argument("invert_gradient: dimension mismatch");
    std::vector<double> p(2 * d), H(d * d);
    auto F = [&](std::span<const double> z, std::span<double> val, std::span<double> J) {
        for (std::size_t i = 0; i < d; ++i) {
            p[i] = side == GradientSide::x ? fixed[i] : z[i];
            p[d + i] = side == GradientSide::x ? z[i] : fixed[i];
        }
        const Jet t = taylor(*phi.f, p, 2);
        mixed_hessian(t, d, H);
        for (std::size_t i = 0; i < d; ++i) {
            val[i] = t.coeff(1 + (side == GradientSide::x ? i : d + i)).real();
            for (std::size_t j = 0; j < d; ++j)
                J[i * d + j] = side == GradientSide::x ? H[i * d + j] : H[j * d + i];
        }
    };
    return newton_solve(F, target, std::move(guess), opt);
}

std::vector<double> canonical_transform(const PhaseHandle& phi, std::span<const double> x,
                                        std::span<const double> eta) {
    const std::size_t d = phi.d;
    std::vector<double> p(x.begin(), x.end());
    p.insert(p.end(), eta.begin(), eta.end());
    std::vector<cplx> gx(d), gxi(d);
    phi.grad_x->values(p, gx);
    phi.grad_xi->values(p, gxi);
    std::vector<double> out = reals(gxi);
    for (auto v : gx) out.push_back(v.real());
    return out;
}

// ------------------------------------------------------- implicit functions

std::vector<Jet> implicit_jets(const Field& G, std::span<const Jet> p, std::span<const double> z0) {
    const std::size_t np = p.size(), nz = z0.size();
    if (G.arity() != np + nz || G.outputs() != nz) throw std::invalid_argument("implicit_jets: arity mismatch");
    const int K = p[0].order();
    std::vector<double> base = base_point(p);
    base.insert(base.end(), z0.begin(), z0.end());
    const auto T = taylor_all(G, base, K);
    // J = dG/dz at the base point, inverted once
    std::vector<double> Jinv(nz * nz, 0.0);
    {
        std::vector<double> J(nz * nz);
        for (std::size_t i = 0; i < nz; ++i)
            for (std::size_t j = 0; j < nz; ++j) J[i * nz + j] = T[i].coeff(1 + np + j).real();
        for (std::size_t c = 0; c < nz; ++c) {
            std::vector<double> A = J, e(nz, 0.0);
            e[c] = 1.0;
            if (!solve_small(A, e, nz)) throw std::runtime_error("implicit_jets: singular Jacobian");
            for (std::size_t r = 0; r < nz; ++r) Jinv[r * nz + c] = e[r];
        }
    }
    std::vector<Jet> deltas = increments(p);
    for (std::size_t j = 0; j < nz; ++j) deltas.emplace_back(p[0].layout_ptr(), 0.0);
    if (K > 0) {
        std::vector<Jet> R(nz);
        for (int it = 0; it < K; ++it) {
            for (std::size_t i = 0; i < nz; ++i) {
                R[i] = substitute(T[i], deltas);
                R[i].coeff(0) = 0.0;
            }
            for (std::size_t r = 0; r < nz; ++r) {
                Jet upd(p[0].layout_ptr(), 0.0);
                for (std::size_t c = 0; c < nz; ++c) upd += R[c] * Jinv[r * nz + c];
                deltas[np + r] -= upd;
            }
        }
    }
    std::vector<Jet> z;
    for (std::size_t j = 0; j < nz; ++j) z.push_back(deltas[np + j] + z0[j]);
    return z;
}

namespace {

// G(p, z) = grad(phi)(arrangement of p, z) - target(p); used for the inverse
// gradient maps. which: 0 -> phi'_x(x, z) - xi, 1 -> phi'_xi(z, xi) - x.
FieldPtr gradient_equation(const PhaseHandle& phi, int which) {
    const std::size_t d = phi.d;
    auto g = which == 0 ? phi.grad_x : phi.grad_xi;
    auto jet = [g, d, which](std::span<const Jet> a) {
        std::vector<Jet> args;
        for (std::size_t i = 0; i < d; ++i) args.push_back(which == 0 ? a[i] : a[2 * d + i]);
        for (std::size_t i = 0; i < d; ++i) args.push_back(which == 0 ? a[2 * d + i] : a[d + i]);
        auto r = g->compose(args);
        for (std::size_t i = 0; i < d; ++i) r[i] -= which == 0 ? a[d + i] : a[i];
        return r;
    };
    return std::make_shared<LambdaField>(3 * d, d, nullptr, jet);
}

FieldPtr inverse_gradient(const PhaseHandle& phi, int which) {
    const std::size_t d = phi.d;
    auto G = gradient_equation(phi, which);
    auto solve = [phi, d, which](std::span<const double> z) {
        std::span<const double> x = z.subspan(0, d), xi = z.subspan(d, d);
        return which == 0 ? invert_gradient(phi, GradientSide::x, x, xi)
                          : invert_gradient(phi, GradientSide::xi, xi, x);
    };
    auto val = [solve](std::span<const double> z, std::span<cplx> out) {
        const auto s = solve(z);
        for (std::size_t i = 0; i < s.size(); ++i) out[i] = s[i];
    };
    auto jet = [G, solve](std::span<const Jet> a) {
        const auto b = base_point(a);
        const auto z0 = solve(b);
        const auto s = seed(b, a[0].order());
        auto z = implicit_jets(*G, s, z0);
        const auto inc = increments(a);
        for (auto& j : z) j = substitute(j, inc);
        return z;
    };
    return std::make_shared<LambdaField>(2 * d, d, val, jet);
}

}  // namespace

FieldPtr inverse_gradient_x(const PhaseHandle& phi) { return inverse_gradient(phi, 0); }
FieldPtr inverse_gradient_xi(const PhaseHandle& phi) { return inverse_gradient(phi, 1); }

FieldPtr mixed_hessian_det(const PhaseHandle& phi) {
    const std::size_t d = phi.d;
    auto f = phi.f;
    auto jet = [f, d](std::span<const Jet> a) {
        const int K = a[0].order();
        const auto b = base_point(a);
        const Jet t = taylor(*f, b, K + 2);
        std::vector<Jet> H;
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                MultiIndex m(2 * d);
                m[i] += 1;
                m[d + j] += 1;
                H.push_back(t.derivative(m));
            }
        Jet det = det_jets(H, d);
        if (det.value().real() < 0) det = -det;
        return std::vector<Jet>{substitute(det, increments(a))};
    };
    return std::make_shared<LambdaField>(2 * d, 1, nullptr, jet);
}

// -------------------------------------------------------------------- S_phi

namespace {

struct Rule {
    std::vector<double> t, w;  // nodes in [0, 1], weights summing to 1
};

template <int N>
Rule gauss_rule() {
    using G = boost::math::quadrature::gauss<double, N>;
    Rule r;
    const auto& a = G::abscissa();
    const auto& w = G::weights();
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] == 0.0) {
            r.t.push_back(0.5);
            r.w.push_back(0.5 * w[i]);
            continue;
        }
        for (double s : {-1.0, 1.0}) {
            r.t.push_back(0.5 * (1 + s * a[i]));
            r.w.push_back(0.5 * w[i]);
        }
    }
    return r;
}

const Rule& rule8() {
    static const Rule r = gauss_rule<8>();
    return r;
}
const Rule& rule16() {
    static const Rule r = gauss_rule<16>();
    return r;
}

// sum_q w_q grad(arg_q) where xy: arg_q = (b + t_q (a - b), z), grad = phi'_x;
// xi_eta: arg_q = (z, b + t_q (a - b)), grad = phi'_xi.
template <class T, class Eval>
std::vector<T> averaged(const Rule& R, SPhiVariant v, std::size_t d, std::span<const T> a, std::span<const T> b,
                        std::span<const T> z, Eval&& eval, const T& zero) {
    std::vector<T> acc(d, zero), arg(2 * d, zero);
    for (std::size_t q = 0; q < R.t.size(); ++q) {
        for (std::size_t i = 0; i < d; ++i) {
            const T mid = b[i] + (a[i] - b[i]) * R.t[q];
            arg[v == SPhiVariant::xy ? i : d + i] = mid;
            arg[v == SPhiVariant::xy ? d + i : i] = z[i];
        }
        const auto g = eval(std::span<const T>(arg));
        for (std::size_t i = 0; i < d; ++i) acc[i] += g[i] * R.w[q];
    }
    return acc;
}

const Rule& choose_rule(const PhaseHandle& phi, SPhiVariant v, std::span<const double> a, std::span<const double> b,
                        std::span<const double> z) {
    const std::size_t d = phi.d;
    auto grad = v == SPhiVariant::xy ? phi.grad_x : phi.grad_xi;
    std::vector<cplx> out(d);
    auto eval = [&](std::span<const double> arg) {
        grad->values(arg, out);
        return reals(out);
    };
    const auto g8 = averaged<double>(rule8(), v, d, a, b, z, eval, 0.0);
    const auto g16 = averaged<double>(rule16(), v, d, a, b, z, eval, 0.0);
    double diff = 0;
    for (std::size_t i = 0; i < d; ++i) diff = std::max(diff, std::abs(g8[i] - g16[i]));
    return diff > 1e-12 * std::max(1.0, norm2(g16)) ? rule16() : rule8();
}

// Mixed second derivatives d^2 phi / d(grad var i) d(z var j) for the Jacobian
// of the averaged map with respect to z.
std::vector<double> averaged_jacobian(const Rule& R, const PhaseHandle& phi, SPhiVariant v,
                                      std::span<const double> a, std::span<const double> b,
                                      std::span<const double> z) {
    const std::size_t d = phi.d;
    std::vector<double> J(d * d, 0.0), arg(2 * d), H(d * d);
    for (std::size_t q = 0; q < R.t.size(); ++q) {
        for (std::size_t i = 0; i < d; ++i) {
            const double mid = b[i] + (a[i] - b[i]) * R.t[q];
            arg[v == SPhiVariant::xy ? i : d + i] = mid;
            arg[v == SPhiVariant::xy ? d + i : i] = z[i];
        }
        const Jet t = taylor(*phi.f, arg, 2);
        mixed_hessian(t, d, H);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j)
                J[i * d + j] += R.w[q] * (v == SPhiVariant::xy ? H[i * d + j] : H[j * d + i]);
    }
    return J;
}

}  // namespace

std::vector<double> averaged_gradient(const PhaseHandle& phi, SPhiVariant v, std::span<const double> a,
                                      std::span<const double> b, std::span<const double> z) {
    const std::size_t d = phi.d;
    const Rule& R = choose_rule(phi, v, a, b, z);
    auto grad = v == SPhiVariant::xy ? phi.grad_x : phi.grad_xi;
    std::vector<cplx> out(d);
    auto eval = [&](std::span<const double> arg) {
        grad->values(arg, out);
        return reals(out);
    };
    return averaged<double>(R, v, d, a, b, z, eval, 0.0);
}

namespace {

// Arguments of the averaged inverse: xy (x, y, xi): a = x, b = y, target = xi;
// xi_eta (x, xi, eta): a = xi, b = eta, target = x.
struct Split {
    std::span<const double> a, b, target;
};

Split split(SPhiVariant v, std::span<const double> p, std::size_t d) {
    if (v == SPhiVariant::xy) return {p.subspan(0, d), p.subspan(d, d), p.subspan(2 * d, d)};
    return {p.subspan(d, d), p.subspan(2 * d, d), p.subspan(0, d)};
}

std::vector<double> solve_averaged(const PhaseHandle& phi, SPhiVariant v, std::span<const double> p,
                                   const NewtonOptions& opt) {
    const std::size_t d = phi.d;
    const auto s = split(v, p, d);
    const Rule& R = choose_rule(phi, v, s.a, s.b, s.target);
    auto grad = v == SPhiVariant::xy ? phi.grad_x : phi.grad_xi;
    std::vector<cplx> out(d);
    auto F = [&](std::span<const double> z, std::span<double> val, std::span<double> J) {
        auto eval = [&](std::span<const double> arg) {
            grad->values(arg, out);
            return reals(out);
        };
        const auto g = averaged<double>(R, v, d, s.a, s.b, z, eval, 0.0);
        std::copy(g.begin(), g.end(), val.begin());
        const auto Jm = averaged_jacobian(R, phi, v, s.a, s.b, z);
        std::copy(Jm.begin(), Jm.end(), J.begin());
    };
    return newton_solve(F, s.target, std::nullopt, opt);
}

// G(p, z) = averaged(p, z) - target(p), arity 4d, d outputs.
FieldPtr averaged_equation(const PhaseHandle& phi, SPhiVariant v, const Rule* R) {
    const std::size_t d = phi.d;
    auto grad = v == SPhiVariant::xy ? phi.grad_x : phi.grad_xi;
    auto jet = [grad, d, v, R](std::span<const Jet> args) {
        const auto p = args.subspan(0, 3 * d);
        const auto z = args.subspan(3 * d, d);
        std::span<const Jet> a, b, target;
        if (v == SPhiVariant::xy) {
            a = p.subspan(0, d);
            b = p.subspan(d, d);
            target = p.subspan(2 * d, d);
        } else {
            a = p.subspan(d, d);
            b = p.subspan(2 * d, d);
            target = p.subspan(0, d);
        }
        const Jet zero(args[0].layout_ptr(), 0.0);
        auto eval = [&](std::span<const Jet> arg) { return grad->compose(arg); };
        auto g = averaged<Jet>(*R, v, d, a, b, z, eval, zero);
        for (std::size_t i = 0; i < d; ++i) g[i] -= target[i];
        return g;
    };
    return std::make_shared<LambdaField>(4 * d, d, nullptr, jet);
}

// Jets of Phi at the base point of `seeds` (identity jets in 3d variables).
std::vector<Jet> averaged_inverse_jets(const PhaseHandle& phi, SPhiVariant v, std::span<const Jet> seeds,
                                       const NewtonOptions& opt) {
    const std::size_t d = phi.d;
    const auto b = base_point(seeds);
    const auto z0 = solve_averaged(phi, v, b, opt);
    const auto s = split(v, b, d);
    const Rule& R = choose_rule(phi, v, s.a, s.b, z0);
    auto G = averaged_equation(phi, v, &R);
    return implicit_jets(*G, seeds, z0);
}

void check_region(SPhiVariant v, std::span<const double> p, std::size_t d, double k) {
    // xy: |y - x| <= k <x>;  xi_eta: |eta - xi| <= k <xi>
    const auto u = p.subspan(v == SPhiVariant::xy ? 0 : d, d);
    const auto w = p.subspan(v == SPhiVariant::xy ? d : 2 * d, d);
    double dist = 0;
    for (std::size_t i = 0; i < d; ++i) dist += (w[i] - u[i]) * (w[i] - u[i]);
    if (std::sqrt(dist) > k * japanese(u)) {
        std::ostringstream os;
        os << "S_phi: point outside the cutoff region (|difference| = " << std::sqrt(dist) << " > k<.> = "
           << k * japanese(u) << ")";
        throw CutoffRegionError(os.str());
    }
}

}  // namespace

FieldPtr averaged_inverse(const PhaseHandle& phi, SPhiVariant v, const SPhiOptions& opt) {
    const std::size_t d = phi.d;
    auto val = [phi, v, opt](std::span<const double> p, std::span<cplx> out) {
        const auto z = solve_averaged(phi, v, p, opt.newton);
        for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i];
    };
    auto jet = [phi, v, opt](std::span<const Jet> args) {
        const auto b = base_point(args);
        const auto s = seed(b, args[0].order());
        auto z = averaged_inverse_jets(phi, v, s, opt.newton);
        const auto inc = increments(args);
        for (auto& j : z) j = substitute(j, inc);
        return z;
    };
    return std::make_shared<LambdaField>(3 * d, d, val, jet);
}

FieldPtr s_phi_transform(FieldPtr c0, const PhaseHandle& phi, SPhiVariant v, const SPhiOptions& opt) {
    const std::size_t d = phi.d;
    if (c0->arity() != 3 * d) throw std::invalid_argument("s_phi_transform: amplitude must have arity 3d");
    if (phi.identity && !opt.force_general) return c0;
    auto jet = [c0, phi, v, opt, d](std::span<const Jet> args) {
        const int K = args[0].order();
        const auto b = base_point(args);
        check_region(v, b, d, opt.k_cutoff);
        const auto s = seed(b, K + 1);
        const auto Phi = averaged_inverse_jets(phi, v, s, opt.newton);
        // Jacobian of Phi with respect to xi (xy, vars 2d..3d) or x (xi_eta, vars 0..d)
        const std::size_t off = v == SPhiVariant::xy ? 2 * d : 0;
        std::vector<Jet> J;
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) J.push_back(Phi[i].derivative(off + j));
        Jet det = det_jets(J, d);
        if (det.value().real() < 0) det = -det;
        std::vector<Jet> cargs;
        for (std::size_t i = 0; i < 3 * d; ++i) {
            const bool replaced = i >= off && i < off + d;
            cargs.push_back(replaced ? Phi[i - off].truncated(K) : s[i].truncated(K));
        }
        const Jet S = c0->compose1(cargs) * det;
        return std::vector<Jet>{substitute(S, increments(args))};
    };
    return std::make_shared<LambdaField>(3 * d, 1, nullptr, jet);
}

}  // namespace sgfio
