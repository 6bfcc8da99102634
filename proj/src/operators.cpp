#include "sgfio/operators.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

namespace sgfio {

namespace {
constexpr double pi = std::numbers::pi;
std::atomic<unsigned> g_threads{1};
}  // namespace

void set_thread_count(unsigned n) { g_threads = n; }

unsigned thread_count() {
    const unsigned n = g_threads;
    return n == 0 ? std::max(1u, std::thread::hardware_concurrency()) : n;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body) {
    const std::size_t workers = std::min<std::size_t>(thread_count(), n);
    if (workers <= 1) {
        if (n) body(0, n);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t b = w * chunk, e = std::min(n, b + chunk);
        pool.emplace_back([&, w, b, e] {
            try {
                if (b < e) body(b, e);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

// ------------------------------------------------------------------ specs

std::string to_string(OperatorKind k) {
    switch (k) {
        case OperatorKind::pdo_t: return "pdo_t";
        case OperatorKind::pdo_amplitude: return "pdo_amplitude";
        case OperatorKind::fio_type1: return "fio_type1";
        case OperatorKind::fio_type2: return "fio_type2";
    }
    return "?";
}

OperatorKind parse_operator_kind(const std::string& s) {
    for (auto k : {OperatorKind::pdo_t, OperatorKind::pdo_amplitude, OperatorKind::fio_type1, OperatorKind::fio_type2})
        if (to_string(k) == s) return k;
    throw std::invalid_argument("unknown operator kind '" + s + "'");
}

OperatorSpec make_fio1(const PhaseHandle& phi, const SymbolHandle& a) {
    OperatorSpec op;
    op.kind = OperatorKind::fio_type1;
    op.phase = phi;
    op.symbol = a;
    return op;
}

OperatorSpec make_fio2(const PhaseHandle& phi, const SymbolHandle& b) {
    auto op = make_fio1(phi, b);
    op.kind = OperatorKind::fio_type2;
    return op;
}

OperatorSpec make_pdo(const SymbolHandle& a, double t, bool direct) {
    OperatorSpec op;
    op.kind = OperatorKind::pdo_t;
    op.symbol = a;
    op.t = t;
    op.direct = direct;
    return op;
}

OperatorSpec make_pdo_amplitude(const AmplitudeHandle& a) {
    OperatorSpec op;
    op.kind = OperatorKind::pdo_amplitude;
    op.amplitude = a;
    return op;
}

OperatorSpec adjoint(const OperatorSpec& op) {
    OperatorSpec r = op;
    switch (op.kind) {
        case OperatorKind::fio_type1: r.kind = OperatorKind::fio_type2; break;
        case OperatorKind::fio_type2: r.kind = OperatorKind::fio_type1; break;
        case OperatorKind::pdo_t:
            r.symbol = conjugate_symbol(op.symbol);
            r.t = 1.0 - op.t;
            r.direct = op.direct || r.t != 0;
            break;
        case OperatorKind::pdo_amplitude: {
            const std::size_t d = op.amplitude.d;
            std::vector<std::size_t> perm(3 * d);
            for (std::size_t i = 0; i < d; ++i) {
                perm[i] = d + i;
                perm[d + i] = i;
                perm[2 * d + i] = 2 * d + i;
            }
            r.amplitude.f = conjugate(permute_args(op.amplitude.f, 3 * d, perm));
            r.amplitude.name = "adjoint(" + op.amplitude.name + ")";
            break;
        }
    }
    return r;
}

std::size_t dimension(const OperatorSpec& op) {
    return op.kind == OperatorKind::pdo_amplitude ? op.amplitude.d : op.symbol.d;
}

// ------------------------------------------------------------- validation

namespace {

struct PhaseVerdict {
    std::weak_ptr<const Field> f;
    bool simple, regular;
};

std::mutex g_phase_mutex;
std::map<const Field*, PhaseVerdict> g_phase_cache;

std::pair<bool, bool> phase_verdict(const PhaseHandle& phi) {
    if (phi.identity) return {true, true};
    {
        std::lock_guard lock(g_phase_mutex);
        auto it = g_phase_cache.find(phi.f.get());
        if (it != g_phase_cache.end() && it->second.f.lock() == phi.f)
            return {it->second.simple, it->second.regular};
    }
    const auto rep = phase_probe(phi, default_probes(phi.d));
    std::lock_guard lock(g_phase_mutex);
    g_phase_cache[phi.f.get()] = {phi.f, rep.simple, rep.regular};
    return {rep.simple, rep.regular};
}

}  // namespace

void validate(const OperatorSpec& op, const Grid& g, const ApplyOptions& opt) {
    const std::size_t d = dimension(op);
    if (op.kind == OperatorKind::pdo_amplitude) {
        if (!op.amplitude.f || op.amplitude.f->arity() != 3 * d)
            throw std::invalid_argument("operator: amplitude must have arity 3d");
    } else if (!op.symbol.f || op.symbol.f->arity() != 2 * d) {
        throw std::invalid_argument("operator: symbol must have arity 2d");
    }
    if (g.dim() != d)
        throw std::invalid_argument("operator: grid dimension " + std::to_string(g.dim()) +
                                    " does not match symbol dimension " + std::to_string(d));
    if (op.kind == OperatorKind::fio_type1 || op.kind == OperatorKind::fio_type2) {
        if (!op.phase) throw std::invalid_argument("operator: FIO kinds need a phase");
        if (op.phase->d != d) throw std::invalid_argument("operator: phase dimension mismatch");
        if (opt.check_phase) {
            const auto [simple, regular] = phase_verdict(*op.phase);
            if (!simple) throw std::invalid_argument("operator: phase '" + op.phase->name + "' is not simple");
            if (op.kind == OperatorKind::fio_type2 && !regular)
                throw std::invalid_argument("operator: phase '" + op.phase->name + "' is not regular");
        }
    }
}

// ------------------------------------------------------------- core rows

namespace {

using Stage = DiscreteOperator::Stage;

// Row generator for out = Post(C Pre(u)).
struct Core {
    Stage pre = Stage::none, post = Stage::none;
    double in_cell = 1, out_cell = 1;
    std::function<void(std::size_t, std::span<cplx>)> row;
};

double dot_xi(std::span<const double> a, std::span<const double> b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

Core make_core(const OperatorSpec& op, const Grid& g) {
    const std::size_t d = g.dim(), n = g.size();
    const double h = std::pow(g.spacing(), double(d)), dxi = std::pow(g.dual_spacing(), double(d));
    Core c;
    switch (op.kind) {
        case OperatorKind::fio_type1:
        case OperatorKind::pdo_t:
            if (op.kind == OperatorKind::fio_type1 || (op.t == 0 && !op.direct)) {
                // out_j = (2pi)^{-d/2} dxi^d sum_k e^{i phi(x_j, xi_k)} a(x_j, xi_k) u^_k
                const double s = std::pow(2 * pi, -0.5 * d) * dxi;
                const FieldPtr phi = op.kind == OperatorKind::fio_type1 && !op.phase->identity ? op.phase->f : nullptr;
                const FieldPtr a = op.symbol.f;
                c.pre = Stage::forward;
                c.in_cell = dxi;
                c.out_cell = h;
                c.row = [=, &g](std::size_t j, std::span<cplx> out) {
                    std::array<double, 6> z{};
                    g.point(j, std::span<double>(z.data(), d));
                    for (std::size_t k = 0; k < n; ++k) {
                        g.frequency(k, std::span<double>(z.data() + d, d));
                        const std::span<const double> zz(z.data(), 2 * d);
                        const double ph = phi ? phi->value(zz).real()
                                              : dot_xi(zz.subspan(0, d), zz.subspan(d, d));
                        out[k] = s * std::polar(1.0, ph) * a->value(zz);
                    }
                };
                return c;
            }
            [[fallthrough]];
        case OperatorKind::pdo_amplitude: {
            // K(x_j, y_l) h^d with K = (2pi)^{-d} dxi^d sum_k e^{i<x - y, xi_k>} a(., xi_k)
            const double s = std::pow(2 * pi, -double(d)) * dxi * h;
            const bool amp = op.kind == OperatorKind::pdo_amplitude;
            const FieldPtr a = amp ? op.amplitude.f : op.symbol.f;
            const double t = op.t;
            c.in_cell = c.out_cell = h;
            c.row = [=, &g](std::size_t j, std::span<cplx> out) {
                std::array<double, 3> x{}, y{}, xi{};
                std::array<double, 9> z{};
                g.point(j, std::span<double>(x.data(), d));
                std::vector<cplx> av(n);
                // with t = 0 the symbol does not depend on y
                const bool sep = !amp && t == 0;
                if (sep)
                    for (std::size_t k = 0; k < n; ++k) {
                        std::copy_n(x.begin(), d, z.begin());
                        g.frequency(k, std::span<double>(z.data() + d, d));
                        av[k] = a->value(std::span<const double>(z.data(), 2 * d));
                    }
                for (std::size_t l = 0; l < n; ++l) {
                    g.point(l, std::span<double>(y.data(), d));
                    if (amp) {
                        std::copy_n(x.begin(), d, z.begin());
                        std::copy_n(y.begin(), d, z.begin() + d);
                    } else {
                        for (std::size_t i = 0; i < d; ++i) z[i] = (1 - t) * x[i] + t * y[i];
                    }
                    const std::size_t off = amp ? 2 * d : d;
                    cplx sum = 0;
                    for (std::size_t k = 0; k < n; ++k) {
                        g.frequency(k, std::span<double>(xi.data(), d));
                        double ph = 0;
                        for (std::size_t i = 0; i < d; ++i) ph += (x[i] - y[i]) * xi[i];
                        cplx av_k;
                        if (sep) {
                            av_k = av[k];
                        } else {
                            std::copy_n(xi.begin(), d, z.begin() + off);
                            av_k = a->value(std::span<const double>(z.data(), off + d));
                        }
                        sum += std::polar(1.0, ph) * av_k;
                    }
                    out[l] = s * sum;
                }
            };
            return c;
        }
        case OperatorKind::fio_type2: {
            // w_k = (2pi)^{-d/2} h^d sum_j conj(e^{i phi(y_j, xi_k)} b(y_j, xi_k)) u_j; out = F^{-1} w
            const double s = std::pow(2 * pi, -0.5 * d) * h;
            const FieldPtr phi = op.phase->f, b = op.symbol.f;
            c.post = Stage::inverse;
            c.in_cell = h;
            c.out_cell = dxi;
            c.row = [=, &g](std::size_t k, std::span<cplx> out) {
                std::array<double, 6> z{};
                g.frequency(k, std::span<double>(z.data() + d, d));
                for (std::size_t j = 0; j < n; ++j) {
                    g.point(j, std::span<double>(z.data(), d));
                    const std::span<const double> zz(z.data(), 2 * d);
                    out[j] = s * std::conj(std::polar(1.0, phi->value(zz).real()) * b->value(zz));
                }
            };
            return c;
        }
    }
    throw std::logic_error("make_core: unknown kind");
}

GridFunction stage(const GridFunction& u, Stage s) {
    switch (s) {
        case Stage::none: return u;
        case Stage::forward: return fourier(u, Direction::forward);
        case Stage::inverse: return fourier(u, Direction::inverse);
    }
    return u;
}

Stage inverse_stage(Stage s) {
    return s == Stage::forward ? Stage::inverse : (s == Stage::inverse ? Stage::forward : Stage::none);
}

Domain core_output_domain(const Core& c) { return c.post == Stage::inverse ? Domain::frequency : Domain::space; }

// Max of |a(x_j, xi_k) u^_k| on the xi-boundary relative to the global max:
// the integrand proxy used for the double-integral routes.
double pdo_tail_proxy(const OperatorSpec& op, const Grid& g, const GridFunction& uhat) {
    const std::size_t d = g.dim(), n = g.size();
    const bool amp = op.kind == OperatorKind::pdo_amplitude;
    const FieldPtr a = amp ? op.amplitude.f : op.symbol.f;
    std::vector<double> gmax(n, 0), bmax(n, 0);
    parallel_for(n, [&](std::size_t b0, std::size_t e0) {
        std::array<double, 9> z{};
        for (std::size_t j = b0; j < e0; ++j) {
            g.point(j, std::span<double>(z.data(), d));
            if (amp) std::copy_n(z.begin(), d, z.begin() + d);
            const std::size_t off = amp ? 2 * d : d;
            for (std::size_t k = 0; k < n; ++k) {
                g.frequency(k, std::span<double>(z.data() + off, d));
                const double v = std::abs(a->value(std::span<const double>(z.data(), off + d)) * uhat[k]);
                gmax[j] = std::max(gmax[j], v);
                if (g.on_boundary(k)) bmax[j] = std::max(bmax[j], v);
            }
        }
    });
    const double G = *std::max_element(gmax.begin(), gmax.end());
    const double B = *std::max_element(bmax.begin(), bmax.end());
    return G > 0 ? B / G : 0.0;
}

std::string tail_warning(const OperatorSpec& op, double ratio, double thr) {
    std::ostringstream os;
    os << "tail mass: " << to_string(op.kind) << " integrand at the frequency boundary is " << ratio
       << " of its maximum (threshold " << thr << "); refine the grid or use a smoother input";
    return os.str();
}

}  // namespace

ApplyResult apply_checked(const OperatorSpec& op, const GridFunction& u, const ApplyOptions& opt) {
    const Grid& g = u.grid();
    if (u.domain() != Domain::space) throw std::invalid_argument("apply: input must be a space-domain function");
    validate(op, g, opt);
    const Core c = make_core(op, g);
    const std::size_t n = g.size();
    const GridFunction v = stage(u, c.pre);
    std::vector<cplx> w(n);
    std::vector<double> gmax(n, 0), bmax(n, 0);  // per-row integrand maxima (pre = forward)
    parallel_for(n, [&](std::size_t b, std::size_t e) {
        std::vector<cplx> row(n);
        for (std::size_t j = b; j < e; ++j) {
            c.row(j, row);
            cplx s = 0;
            for (std::size_t k = 0; k < n; ++k) {
                const cplx t = row[k] * v[k];
                s += t;
                if (c.pre == Stage::forward) {
                    const double a = std::abs(t);
                    gmax[j] = std::max(gmax[j], a);
                    if (g.on_boundary(k)) bmax[j] = std::max(bmax[j], a);
                }
            }
            w[j] = s;
        }
    });
    ApplyResult r;
    if (c.pre == Stage::forward) {
        const double G = *std::max_element(gmax.begin(), gmax.end());
        const double B = *std::max_element(bmax.begin(), bmax.end());
        r.tail_ratio = G > 0 ? B / G : 0;
    } else if (c.post == Stage::inverse) {
        double G = 0, B = 0;
        for (std::size_t k = 0; k < n; ++k) {
            G = std::max(G, std::abs(w[k]));
            if (g.on_boundary(k)) B = std::max(B, std::abs(w[k]));
        }
        r.tail_ratio = G > 0 ? B / G : 0;
    } else {
        r.tail_ratio = pdo_tail_proxy(op, g, fourier(u, Direction::forward));
    }
    r.out = stage(GridFunction(g, std::move(w), core_output_domain(c)), c.post);
    if (r.tail_ratio > opt.tail_threshold) r.warnings.push_back(tail_warning(op, r.tail_ratio, opt.tail_threshold));
    return r;
}

GridFunction apply(const OperatorSpec& op, const GridFunction& u, const ApplyOptions& opt) {
    auto r = apply_checked(op, u, opt);
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
    return std::move(r.out);
}

AdjointCheck adjoint_pair_check(const PhaseHandle& phi, const SymbolHandle& a, const GridFunction& u,
                                const GridFunction& v) {
    if (!(u.grid() == v.grid())) throw std::invalid_argument("adjoint_pair_check: grids differ");
    const auto A = apply_checked(make_fio1(phi, a), u);
    const auto B = apply_checked(make_fio2(phi, a), v);
    AdjointCheck r;
    r.defect = std::abs(inner_product(A.out, v) - inner_product(u, B.out)) / (u.norm() * v.norm());
    r.warnings = A.warnings;
    r.warnings.insert(r.warnings.end(), B.warnings.begin(), B.warnings.end());
    return r;
}

cplx kernel_eval(const OperatorSpec& op, const Grid& g, std::span<const double> x, std::span<const double> y,
                 double tail_threshold) {
    const std::size_t d = g.dim(), n = g.size();
    ApplyOptions vo;
    vo.check_phase = false;
    validate(op, g, vo);
    if (x.size() != d || y.size() != d) throw std::invalid_argument("kernel_eval: point dimension mismatch");
    if (op.kind == OperatorKind::fio_type2) {
        auto I = op;
        I.kind = OperatorKind::fio_type1;
        return std::conj(kernel_eval(I, g, y, x, tail_threshold));
    }
    const bool amp = op.kind == OperatorKind::pdo_amplitude;
    const FieldPtr a = amp ? op.amplitude.f : op.symbol.f;
    std::array<double, 9> z{};
    // symbol base point: x (type I), (1-t)x + ty (Op_t), (x, y) (amplitude)
    for (std::size_t i = 0; i < d; ++i) {
        z[i] = op.kind == OperatorKind::pdo_t ? (1 - op.t) * x[i] + op.t * y[i] : x[i];
        if (amp) z[d + i] = y[i];
    }
    const std::size_t off = amp ? 2 * d : d;
    std::array<double, 6> pz{};
    std::copy(x.begin(), x.end(), pz.begin());
    cplx sum = 0;
    double G = 0, B = 0;
    std::array<double, 3> xi{};
    for (std::size_t k = 0; k < n; ++k) {
        g.frequency(k, std::span<double>(xi.data(), d));
        std::copy_n(xi.begin(), d, z.begin() + off);
        const cplx av = a->value(std::span<const double>(z.data(), off + d));
        double ph = 0;
        if (op.kind == OperatorKind::fio_type1) {
            std::copy_n(xi.begin(), d, pz.begin() + d);
            ph = op.phase->f->value(std::span<const double>(pz.data(), 2 * d)).real();
        } else {
            for (std::size_t i = 0; i < d; ++i) ph += x[i] * xi[i];
        }
        for (std::size_t i = 0; i < d; ++i) ph -= y[i] * xi[i];
        sum += std::polar(1.0, ph) * av;
        G = std::max(G, std::abs(av));
        if (g.on_boundary(k)) B = std::max(B, std::abs(av));
    }
    const double ratio = G > 0 ? B / G : 0;
    if (ratio > tail_threshold)
        throw TailMassError("kernel_eval: amplitude is not integrable on the frequency grid (boundary/max = " +
                                std::to_string(ratio) + "); kernels need xi-decaying amplitudes",
                            ratio);
    return sum * std::pow(2 * pi, -double(d)) * std::pow(g.dual_spacing(), double(d));
}

// ------------------------------------------------------------ discretization

DiscreteOperator DiscreteOperator::build(const OperatorSpec& op, const Grid& g, const ApplyOptions& opt) {
    validate(op, g, opt);
    const std::size_t n = g.size();
    if (n * n > max_entries)
        throw std::invalid_argument("DiscreteOperator: " + std::to_string(n) + "^2 entries exceed the dense limit");
    const Core c = make_core(op, g);
    DiscreteOperator D;
    D.g_ = g;
    D.pre_ = c.pre;
    D.post_ = c.post;
    D.in_cell_ = c.in_cell;
    D.out_cell_ = c.out_cell;
    D.core_.resize(n * n);
    parallel_for(n, [&](std::size_t b, std::size_t e) {
        for (std::size_t j = b; j < e; ++j) c.row(j, std::span<cplx>(D.core_.data() + j * n, n));
    });
    return D;
}

GridFunction DiscreteOperator::apply(const GridFunction& u) const {
    const GridFunction v = stage(u, pre_);
    const std::size_t n = size();
    std::vector<cplx> w(n);
    parallel_for(n, [&](std::size_t b, std::size_t e) {
        for (std::size_t j = b; j < e; ++j) {
            const cplx* row = core_.data() + j * n;
            cplx s = 0;
            for (std::size_t k = 0; k < n; ++k) s += row[k] * v[k];
            w[j] = s;
        }
    });
    return stage(GridFunction(g_, std::move(w), post_ == Stage::inverse ? Domain::frequency : Domain::space), post_);
}

GridFunction DiscreteOperator::apply_adjoint(const GridFunction& v) const {
    const GridFunction z = stage(v, inverse_stage(post_));
    const std::size_t n = size();
    const double s = out_cell_ / in_cell_;
    std::vector<cplx> w(n);
    parallel_for(n, [&](std::size_t b, std::size_t e) {
        for (std::size_t k = b; k < e; ++k) {
            cplx acc = 0;
            for (std::size_t j = 0; j < n; ++j) acc += std::conj(core_[j * n + k]) * z[j];
            w[k] = s * acc;
        }
    });
    return stage(GridFunction(g_, std::move(w), pre_ == Stage::forward ? Domain::frequency : Domain::space),
                 inverse_stage(pre_));
}

// ------------------------------------------------------------ regularization

FieldPtr regularizer_denominator(const PhaseHandle& phi) {
    const std::size_t d = phi.d;
    std::vector<FieldPtr> terms{constant_field(2 * d, 1.0)};
    std::vector<cplx> coef{1.0};
    for (std::size_t i = 0; i < d; ++i) {
        MultiIndex e1(2 * d), e2(2 * d);
        e1[d + i] = 1;
        e2[d + i] = 2;
        const auto g = derivative(phi.f, e1);
        terms.push_back(mul(g, g));
        coef.push_back(1.0);
        terms.push_back(derivative(phi.f, e2));
        coef.push_back(cplx(0, -1));
    }
    return linear_combination(terms, coef);
}

Regularized regularize(const PhaseHandle& phi, const SymbolHandle& a, int l) {
    if (l < 1) throw std::invalid_argument("regularize: l must be a positive integer");
    if (l > 4) throw std::domain_error("regularize: derivative cap exceeded (jets of order 2l+2 > 10)");
    if (a.d != phi.d) throw std::invalid_argument("regularize: dimension mismatch");
    const std::size_t d = phi.d;
    const FieldPtr den = regularizer_denominator(phi);
    auto D = [&](FieldPtr f) { return divide(f, den); };
    auto one_minus_lap = [&](FieldPtr f) {
        std::vector<FieldPtr> terms{f};
        std::vector<cplx> coef{1.0};
        for (std::size_t i = 0; i < d; ++i) {
            MultiIndex e2(2 * d);
            e2[d + i] = 2;
            terms.push_back(derivative(f, e2));
            coef.push_back(-1.0);
        }
        return linear_combination(terms, coef);
    };
    FieldPtr p = a.f, full = a.f;
    for (int k = 0; k < l; ++k) {
        p = D(p);
        full = one_minus_lap(D(full));
    }
    Regularized r;
    r.principal = make_symbol(p, d, "D^" + std::to_string(l) + "(" + a.name + ")",
                              weight_product(a.weight, theta_weight(-2.0 * l, 0, d)), a.r, a.rho);
    r.correction = make_symbol(sub(full, p), d, "Q_" + std::to_string(l) + "(" + a.name + ")",
                               weight_product(a.weight, theta_weight(-2.0 * l, -2, d)), a.r, a.rho);
    return r;
}

}  // namespace sgfio
