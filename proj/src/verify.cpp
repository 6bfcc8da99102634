#include "sgfio/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace sgfio {

// ------------------------------------------------------------ jet integrity

FdResult fd_check(const Field& f, std::span<const double> z, int K, std::size_t component) {
    const std::size_t n = z.size();
    const double eps = std::numeric_limits<double>::epsilon();
    FdResult r;
    const Jet t = taylor(f, z, K, component);
    const auto betas = MultiIndex::enumerate(n, K - 1);
    // rounding in jet arithmetic is relative to the size of the whole jet, not
    // of the one coefficient (flat regions of smooth steps give ~1e-14 noise)
    double S = 0;
    for (const auto& b : betas) S = std::max(S, std::abs(t.partial(b)));
    for (std::size_t v = 0; v < n; ++v) {
        // central differences at h and h/2, one Richardson step: O(h^4), so
        // steep but smooth regions (edges of cut-off plateaus) stay resolved
        const double h = std::cbrt(eps) * std::max(1.0, std::abs(z[v]));
        auto central = [&](double step) {
            std::vector<double> zp(z.begin(), z.end()), zm(z.begin(), z.end());
            zp[v] += step;
            zm[v] -= step;
            return std::tuple{taylor(f, zp, K - 1, component), taylor(f, zm, K - 1, component), zp[v] - zm[v]};
        };
        const auto [tp, tm, hh] = central(h);
        const auto [tp2, tm2, hh2] = central(h / 2);
        for (const auto& b : betas) {
            MultiIndex up = b;
            up[v] += 1;
            const cplx jet = t.partial(up);
            const cplx d1 = (tp.partial(b) - tm.partial(b)) / hh;
            const cplx d2 = (tp2.partial(b) - tm2.partial(b)) / hh2;
            const cplx fd = (4.0 * d2 - d1) / 3.0;
            const double scale = std::max({std::abs(tp.partial(b)), std::abs(tm.partial(b)), S});
            const double tol = 1e-6 * std::abs(jet) + 300 * eps * scale / h + 1e-300;
            const double q = std::abs(jet - fd) / tol;
            ++r.checks;
            if (q > r.worst) {
                r.worst = q;
                r.where = "d" + up.str() + " var " + std::to_string(v);
            }
        }
    }
    return r;
}

cplx kn_product_term(const Field& p, const Field& a, const MultiIndex& alpha, std::span<const double> z) {
    const std::size_t d = alpha.size();
    const int k = alpha.order();
    const auto tp = taylor(p, z, k);
    const auto ta = taylor(a, z, k);
    MultiIndex mx(2 * d), mxi(2 * d);
    for (std::size_t i = 0; i < d; ++i) {
        mx[i] = alpha[i];
        mxi[d + i] = alpha[i];
    }
    cplx f = 1.0;
    for (int j = 0; j < k; ++j) f *= cplx(0, -1);
    return f * tp.partial(mxi) * ta.partial(mx);
}

// ------------------------------------------------------------------- norms

nlohmann::json grid_json(const Grid& g) {
    return {{"d", g.dim()}, {"N", g.points_per_axis()}, {"L", g.half_width()}, {"h", g.spacing()}};
}

nlohmann::json to_json(const NormEstimate& n) {
    return {{"value", n.value},         {"iterations", n.iterations}, {"residual", n.residual},
            {"converged", n.converged}, {"tail_ratio", n.tail_ratio}, {"grid", n.grid}};
}

NormEstimate operator_norm(const OperatorSpec& op, const Grid& g, int iters, std::uint64_t seed, double tol) {
    if (iters < 10) throw std::invalid_argument("operator_norm: iters must be >= 10");
    validate(op, g);
    const OperatorSpec adj = adjoint(op);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    std::vector<cplx> v(g.size());
    for (auto& c : v) c = {normal(rng), normal(rng)};
    GridFunction u(g, std::move(v));
    u = u * (1.0 / u.norm());

    NormEstimate est;
    est.grid = grid_json(g);
    double lambda = 0;
    for (int k = 1; k <= iters; ++k) {
        auto a = apply_checked(op, u);
        auto b = apply_checked(adj, a.out);
        est.tail_ratio = std::max({est.tail_ratio, a.tail_ratio, b.tail_ratio});
        // u has unit norm: ||A* A u|| -> ||A||^2
        const double next = b.out.norm();
        est.iterations = k;
        if (next == 0) {  // A u = 0 exactly
            lambda = 0;
            est.residual = 0;
            est.converged = true;
            break;
        }
        est.residual = std::abs(next - lambda) / next;
        lambda = next;
        u = b.out * (1.0 / next);
        if (k > 1 && est.residual <= tol) {
            est.converged = true;
            break;
        }
    }
    est.value = std::sqrt(lambda);
    return est;
}

double schur_bound(const OperatorSpec& op, const Grid& g) {
    validate(op, g);
    const std::size_t n = g.size(), d = g.dim();
    const double cell = std::pow(g.spacing(), static_cast<double>(d));
    std::vector<double> rows(n, 0.0), cols(n, 0.0);
    parallel_for(n, [&](std::size_t lo, std::size_t hi) {
        std::vector<double> x(d), y(d);
        for (std::size_t i = lo; i < hi; ++i) {
            g.point(i, x);
            for (std::size_t j = 0; j < n; ++j) {
                g.point(j, y);
                rows[i] += std::abs(kernel_eval(op, g, x, y)) * cell;
            }
        }
    });
    // columns: a second pass keeps the parallel loop free of shared writes
    parallel_for(n, [&](std::size_t lo, std::size_t hi) {
        std::vector<double> x(d), y(d);
        for (std::size_t j = lo; j < hi; ++j) {
            g.point(j, y);
            for (std::size_t i = 0; i < n; ++i) {
                g.point(i, x);
                cols[j] += std::abs(kernel_eval(op, g, x, y)) * cell;
            }
        }
    });
    return std::max(*std::max_element(rows.begin(), rows.end()), *std::max_element(cols.begin(), cols.end()));
}

// -------------------------------------------------------------- decay fits

std::vector<double> Ray::at(double t) const {
    const double s = std::sqrt(std::max(0.0, t * t - 1));
    const std::size_t d = fixed.size();
    std::vector<double> z(2 * d);
    const std::size_t moving = side == Side::x ? 0 : d, other = side == Side::x ? d : 0;
    for (std::size_t i = 0; i < d; ++i) {
        z[moving + i] = s * dir[i];
        z[other + i] = fixed[i];
    }
    return z;
}

std::string Ray::str() const {
    std::ostringstream os;
    os << (side == Side::x ? "x-ray" : "xi-ray") << " dir=(";
    for (std::size_t i = 0; i < dir.size(); ++i) os << (i ? "," : "") << dir[i];
    os << ") " << (side == Side::x ? "xi" : "x") << "=(";
    for (std::size_t i = 0; i < fixed.size(); ++i) os << (i ? "," : "") << fixed[i];
    os << ")";
    return os.str();
}

Ray xi_ray(double x, double sign) { return Ray{Ray::Side::xi, {x}, {sign}}; }
Ray x_ray(double xi, double sign) { return Ray{Ray::Side::x, {xi}, {sign}}; }

const std::vector<double>& default_ray_samples() {
    static const std::vector<double> t{4, 8, 16, 32, 64, 128};
    return t;
}

nlohmann::json to_json(const DecayFit& f) {
    nlohmann::json j{{"ray", f.ray}, {"t", f.t}, {"magnitude", f.magnitude}, {"vanishes", f.vanishes}};
    if (f.vanishes) {
        j["slope"] = nullptr;
    } else {
        j["slope"] = f.slope;
        j["intercept"] = f.intercept;
        j["residual"] = f.residual;
    }
    return j;
}

DecayFit fit_decay(std::string ray, std::vector<double> t, std::vector<double> magnitude) {
    if (t.size() != magnitude.size()) throw std::invalid_argument("fit_decay: size mismatch");
    if (t.size() < 5) throw std::invalid_argument("fit_decay: need at least 5 samples");
    const auto [lo, hi] = std::minmax_element(t.begin(), t.end());
    if (*lo <= 0 || std::log10(*hi / *lo) < 1.5 - 1e-12)
        throw std::invalid_argument("fit_decay: samples must span at least 1.5 decades");
    DecayFit f{std::move(ray), std::move(t), std::move(magnitude)};
    if (std::all_of(f.magnitude.begin(), f.magnitude.end(), [](double m) { return m < 1e-300; })) {
        f.vanishes = true;
        f.slope = -std::numeric_limits<double>::infinity();
        return f;
    }
    const std::size_t n = f.t.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::vector<double> lx(n), ly(n);
    for (std::size_t i = 0; i < n; ++i) {
        lx[i] = std::log(f.t[i]);
        // isolated exact zeros would dominate the fit; clamp them to the floor
        ly[i] = std::log(std::max(f.magnitude[i], 1e-300));
        sx += lx[i];
        sy += ly[i];
        sxx += lx[i] * lx[i];
        sxy += lx[i] * ly[i];
    }
    const double dn = static_cast<double>(n);
    f.slope = (dn * sxy - sx * sy) / (dn * sxx - sx * sx);
    f.intercept = (sy - f.slope * sx) / dn;
    double rss = 0;
    for (std::size_t i = 0; i < n; ++i) rss += std::pow(ly[i] - f.intercept - f.slope * lx[i], 2);
    f.residual = std::sqrt(rss / dn);
    return f;
}

DecayFit fit_along(const Ray& ray, const std::function<double(std::span<const double>)>& f,
                   const std::vector<double>& t) {
    std::vector<double> m;
    m.reserve(t.size());
    for (double s : t) m.push_back(f(ray.at(s)));
    return fit_decay(ray.str(), t, std::move(m));
}

// -------------------------------------------------------------- remainders

GridFunction apply_direct(const CompositionSpec& s, const GridFunction& u) {
    const auto P = make_pdo(s.p);
    switch (s.mode) {
        case MixedMode::pdo_fio1: return apply(P, apply(make_fio1(s.phi, s.a), u));
        case MixedMode::fio1_pdo: return apply(make_fio1(s.phi, s.a), apply(P, u));
        case MixedMode::fio2_pdo: return apply(make_fio2(s.phi, s.a), apply(P, u));
        case MixedMode::pdo_fio2: return apply(P, apply(make_fio2(s.phi, s.a), u));
    }
    throw std::logic_error("apply_direct: unknown mode");
}

double quadrature_floor(const CompositionSpec& spec, const Grid& g, TestKind kind, const TestParams& tp) {
    const Grid fine = make_grid(g.dim(), 2 * g.points_per_axis(), g.half_width());
    const auto coarse_out = apply_direct(spec, test_function(g, kind, tp));
    const auto fine_out = apply_direct(spec, test_function(fine, kind, tp));
    // fine node 2j sits on coarse node j
    std::vector<cplx> restricted(g.size());
    std::vector<std::size_t> idx(g.dim());
    for (std::size_t i = 0; i < g.size(); ++i) {
        g.unflatten(i, idx);
        for (auto& k : idx) k *= 2;
        restricted[i] = fine_out[fine.flatten(idx)];
    }
    return relative_error(coarse_out, GridFunction(g, std::move(restricted)));
}

RemainderReport remainder_probe(const CompositionSpec& spec, const std::vector<int>& orders,
                                const std::vector<GridFunction>& tests, const std::vector<Ray>& rays,
                                const RemainderOptions& opt) {
    if (orders.empty()) throw std::invalid_argument("remainder_probe: no orders");
    if (!std::is_sorted(orders.begin(), orders.end()) || orders.front() < 0 || orders.back() >= opt.M_ref)
        throw std::invalid_argument("remainder_probe: orders must be increasing, in [0, M_ref)");
    RemainderReport rep;
    rep.orders = orders;
    const double r = std::min({spec.p.r, spec.a.r, 1.0});
    rep.drop_x = std::min(r, 0.5);
    rep.drop_xi = 0.5;

    const auto ref = compose_mixed(spec.mode, spec.p, spec.a, spec.phi, opt.M_ref, spec.opt);
    std::vector<GridFunction> direct;
    for (const auto& u : tests) direct.push_back(apply_direct(spec, u));

    nlohmann::json jorders = nlohmann::json::array();
    for (int M : orders) {
        std::optional<CompositionResult> c;
        if (M > 0) c = compose_mixed(spec.mode, spec.p, spec.a, spec.phi, M, spec.opt);
        std::vector<double> defects;
        for (std::size_t i = 0; i < tests.size(); ++i) {
            if (!c) {
                defects.push_back(1.0);  // Op(0) u = 0
                continue;
            }
            defects.push_back(relative_error(apply(c->as_operator(), tests[i]), direct[i]));
        }
        std::vector<DecayFit> fits;
        for (const auto& ray : rays)
            fits.push_back(fit_along(
                ray,
                [&](std::span<const double> z) { return std::abs((c ? c->symbol(z) : cplx(0)) - ref.symbol(z)); },
                opt.t));
        nlohmann::json jf = nlohmann::json::array();
        for (const auto& f : fits) jf.push_back(to_json(f));
        jorders.push_back({{"M", M}, {"operator_defects", defects}, {"fits", jf}});
        rep.operator_defects.push_back(std::move(defects));
        rep.fits.push_back(std::move(fits));
    }

    nlohmann::json checks = nlohmann::json::array();
    for (std::size_t k = 1; k < orders.size(); ++k) {
        const double dM = orders[k] - orders[k - 1];
        for (std::size_t i = 0; i < tests.size(); ++i)
            if (rep.operator_defects[k][i] > rep.operator_defects[k - 1][i] + opt.floor) rep.operator_monotone = false;
        for (std::size_t j = 0; j < rays.size(); ++j) {
            const auto& lo = rep.fits[k - 1][j];
            const auto& hi = rep.fits[k][j];
            for (std::size_t s = 0; s < lo.magnitude.size(); ++s)
                if (!(hi.magnitude[s] < lo.magnitude[s]) && lo.magnitude[s] > 0) rep.symbol_monotone = false;
            const double drop = rays[j].side == Ray::Side::xi ? rep.drop_xi : rep.drop_x;
            const double need = -dM * (drop - opt.slack);
            const double got = hi.vanishes ? -INFINITY : hi.slope - lo.slope;
            const bool ok = hi.vanishes || lo.vanishes ? hi.vanishes : got <= need + 1e-12;
            if (!ok) rep.slopes_ok = false;
            checks.push_back({{"from", orders[k - 1]},
                              {"to", orders[k]},
                              {"ray", rays[j].str()},
                              {"slope_change", hi.vanishes || lo.vanishes ? nlohmann::json(nullptr) : nlohmann::json(got)},
                              {"required", need},
                              {"pass", ok}});
        }
    }
    rep.pass = rep.operator_monotone && rep.symbol_monotone && rep.slopes_ok;
    rep.json = {{"mode", to_string(spec.mode)},
                {"p", spec.p.name},
                {"a", spec.a.name},
                {"phase", spec.phi.name},
                {"M_ref", opt.M_ref},
                {"slack", opt.slack},
                {"floor", opt.floor},
                {"predicted_drop", {{"x", rep.drop_x}, {"xi", rep.drop_xi}}},
                {"orders", jorders},
                {"slope_checks", checks},
                {"operator_monotone", rep.operator_monotone},
                {"symbol_monotone", rep.symbol_monotone},
                {"slopes_ok", rep.slopes_ok},
                {"pass", rep.pass}};
    return rep;
}

// ------------------------------------------------------------ psi decay

PsiDecayReport psi_decay_probe(const PhaseHandle& phi, int max_order, double slack, const std::vector<double>& t) {
    const std::size_t d = phi.d;
    const auto one = symbol_preset("one", {}, d);
    PsiDecayReport rep;
    rep.phase = phi.name;
    rep.pass = true;
    // base points: the rays run along the first coordinate direction
    std::vector<double> e1(d, 0.0);
    e1[0] = 1.0;
    const Ray rxi{Ray::Side::xi, std::vector<double>(d, 1.0), e1};
    const Ray rx{Ray::Side::x, std::vector<double>(d, 1.0), e1};
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& alpha : MultiIndex::enumerate(d, max_order)) {
        const int n = alpha.order();
        if (n == 0) continue;
        auto mag = [&](std::span<const double> z) {
            return std::abs(psi_derivative(phi, one, alpha, z.subspan(0, d), z.subspan(d, d)));
        };
        PsiDecayEntry e{alpha, fit_along(rx, mag, t), fit_along(rxi, mag, t), -n / 2.0 + slack, n / 2.0 + slack};
        // exact zeros up to round-off in the jet algebra
        auto negligible = [](const DecayFit& f) {
            return std::all_of(f.magnitude.begin(), f.magnitude.end(), [](double m) { return m <= 1e-13; });
        };
        const bool x_ok = e.x_fit.vanishes || negligible(e.x_fit) || e.x_fit.slope <= e.x_bound;
        const bool xi_ok = e.xi_fit.vanishes || negligible(e.xi_fit) || e.xi_fit.slope <= e.xi_bound;
        e.pass = x_ok && xi_ok;
        rep.pass = rep.pass && e.pass;
        entries.push_back({{"alpha", alpha.str()},
                           {"x_fit", to_json(e.x_fit)},
                           {"xi_fit", to_json(e.xi_fit)},
                           {"x_bound", e.x_bound},
                           {"xi_bound", e.xi_bound},
                           {"pass", e.pass}});
        rep.entries.push_back(std::move(e));
    }
    rep.json = {{"phase", phi.name}, {"slack", slack}, {"entries", entries}, {"pass", rep.pass}};
    return rep;
}

}  // namespace sgfio
