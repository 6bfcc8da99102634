#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <random>

#include "sgfio/operators.hpp"

using namespace sgfio;

namespace {

constexpr double pi = std::numbers::pi;

GridFunction gaussian(const Grid& g, double c = 0, double w = 1, double freq = 0) {
    TestParams p;
    p.width = w;
    p.center.assign(g.dim(), c);
    p.frequency.assign(g.dim(), freq);
    return test_function(g, freq != 0 ? TestKind::modulated_gaussian : TestKind::gaussian, p);
}

std::vector<GridFunction> presets(const Grid& g) {
    std::vector<GridFunction> out;
    out.push_back(gaussian(g));
    for (int k : {1, 3}) {
        TestParams p;
        p.hermite_index = k;
        out.push_back(test_function(g, TestKind::hermite, p));
    }
    out.push_back(gaussian(g, 0.5, 1.0, g.dim() == 1 ? 3.0 : 1.5));
    return out;
}

SymbolHandle sym(const std::string& n, std::size_t d = 1) { return symbol_preset(n, {}, d); }

}  // namespace

TEST_CASE("identity phase with a = 1 is the identity") {
    for (auto g : {make_grid(1, 128, 10.0), make_grid(2, 64, 10.0)}) {
        const auto op = make_fio1(identity_phase(g.dim()), sym("one", g.dim()));
        for (const auto& u : presets(g)) {
            const auto r = apply_checked(op, u);
            CHECK(relative_error(r.out, u) <= 1e-10);
            CHECK(r.warnings.empty());
        }
    }
}

TEST_CASE("Op_0(xi) is -i d/dx") {
    const auto g = make_grid(1, 128, 10.0);
    const auto u = gaussian(g);
    const auto out = apply(make_pdo(sym("xi")), u);
    // u = c e^{-x^2/2}, -i u' = i x u
    const auto want = GridFunction::sample(g, [&](std::span<const double> x) {
        return cplx(0, 1) * x[0] * u[g.x_index(x[0])];
    });
    CHECK(relative_error(out, want) <= 1e-9);
}

TEST_CASE("Op_t(x xi) u = -i (x u' + t u)") {
    const auto g = make_grid(1, 64, 10.0);
    const auto u = gaussian(g, 0.3);
    for (double t : {0.0, 0.5, 1.0}) {
        const auto out = apply(make_pdo(sym("x_xi"), t, true), u);
        const auto want = GridFunction::sample(g, [&](std::span<const double> x) {
            const double y = x[0] - 0.3;
            return cplx(0, -1) * (x[0] * (-y) + t) * u[g.x_index(x[0])];
        });
        CHECK_MESSAGE(relative_error(out, want) <= 1e-9, "t=", t);
    }
}

TEST_CASE("fio_type1 with identity phase equals the direct Op_0 double integral") {
    const auto g = make_grid(1, 128, 10.0);
    const auto u = gaussian(g, -0.5, 1.0, 2.0);
    for (const char* n : {"gauss_xxi", "elliptic", "x_xi"}) {
        const auto fio = apply(make_fio1(identity_phase(), sym(n)), u);
        const auto b = apply(make_pdo(sym(n), 0, true), u);
        CHECK_MESSAGE(relative_error(fio, b) <= 1e-11, n);
    }
}

// Stationary phase of x xi + t<xi> - x0 xi puts the packet at x0 - t xi0 / <xi0>.
TEST_CASE("transport phase moves a wave packet by -t xi0 / <xi0>") {
    const auto g = make_grid(1, 256, 20.0);
    const double x0 = -3, xi0 = 6, t = 2;
    const auto u = gaussian(g, x0, 0.7, xi0);
    const auto out = apply(make_fio1(transport_phase(t), sym("one")), u);
    double m0 = 0, m1 = 0;
    for (std::size_t j = 0; j < g.size(); ++j) {
        const double w = std::norm(out[j]);
        m0 += w;
        m1 += w * g.x_at(j);
    }
    CHECK(std::abs(m1 / m0 - (x0 - t * xi0 / std::sqrt(1 + xi0 * xi0))) <= g.spacing());
}

TEST_CASE("type II agrees with its literal double integral") {
    const auto g = make_grid(1, 64, 10.0);
    const auto phi = perturbed_phase(0.3);
    const auto b = symbol_preset("gauss_x", {{"width", 2.0}}, 1);
    const auto u = gaussian(g, 0.4, 1.0, 1.5);
    const auto out = apply(make_fio2(phi, b), u);
    const double h = g.spacing(), dxi = g.dual_spacing();
    double err = 0, nrm = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        cplx s = 0;
        for (std::size_t k = 0; k < g.size(); ++k)
            for (std::size_t j = 0; j < g.size(); ++j) {
                const double z[2] = {g.x_at(j), g.xi_at(k)};
                const double ph = g.x_at(i) * g.xi_at(k) - phi.f->value(z).real();
                s += std::polar(1.0, ph) * std::conj(b.f->value(z)) * u[j];
            }
        s *= h * dxi / (2 * pi);
        err = std::max(err, std::abs(s - out[i]));
        nrm = std::max(nrm, std::abs(s));
    }
    CHECK(err <= 1e-12 * nrm);
}

TEST_CASE("adjoint pairs") {
    const auto g = make_grid(1, 128, 12.0);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> U(-2, 2);
    auto random_fn = [&] { return gaussian(g, U(rng), 0.8 + 0.2 * std::abs(U(rng)), U(rng)); };
    const auto id = adjoint_pair_check(identity_phase(), sym("one"), gaussian(g), gaussian(g, 1.0));
    CHECK(id.defect <= 1e-11);
    for (const auto& phi : {identity_phase(), transport_phase(1.0), perturbed_phase(0.3)})
        for (const char* n : {"gauss_xi", "gauss_x", "elliptic", "oscillating"})
            for (int s = 0; s < 5; ++s) {
                const auto r = adjoint_pair_check(phi, sym(n), random_fn(), random_fn());
                CHECK_MESSAGE(r.defect <= 1e-8, phi.name, " ", n);
            }
    // boundary mass: a step has a slowly decaying spectrum
    const auto step = GridFunction::sample(g, [](std::span<const double> x) { return cplx(x[0] > 0 ? 1 : 0); });
    const auto r = adjoint_pair_check(identity_phase(), sym("one"), step, gaussian(g));
    CHECK_FALSE(r.warnings.empty());
    CHECK(r.warnings[0].find("tail mass") != std::string::npos);
}

TEST_CASE("apply rejects inadmissible input") {
    const auto g = make_grid(1, 64, 10.0);
    const auto u = gaussian(g);
    CHECK_THROWS_AS(apply(make_fio1(cubic_phase(), sym("one")), u), std::invalid_argument);
    CHECK_THROWS_AS(apply(make_fio2(degenerate_phase(), sym("one")), u), std::invalid_argument);
    CHECK_THROWS_AS(apply(make_fio1(identity_phase(2), sym("one", 2)), u), std::invalid_argument);
    CHECK_THROWS_AS(apply(make_fio1(identity_phase(), sym("one")), fourier(u, Direction::forward)),
                    std::invalid_argument);
}

TEST_CASE("kernel evaluation") {
    const auto g = make_grid(1, 128, 10.0);
    auto a = make_symbol(make_expr(2, [](auto z) { return exp(-(z[1] * z[1])); }), 1, "e^{-xi^2}",
                         theta_weight(0, 0));
    const auto I = make_fio1(identity_phase(), a);
    for (auto [x, y] : std::initializer_list<std::pair<double, double>>{{0, 0}, {1, -0.5}, {2.5, 3}}) {
        const double X[1] = {x}, Y[1] = {y};
        const cplx k = kernel_eval(I, g, X, Y);
        CHECK(std::abs(k - std::sqrt(pi) / (2 * pi) * std::exp(-(x - y) * (x - y) / 4)) < 1e-14);
    }
    const auto phi = perturbed_phase(0.3);
    auto b = symbol_preset("gauss_xxi", {}, 1);
    const double X[1] = {0.7}, Y[1] = {-1.1};
    CHECK(std::abs(kernel_eval(make_fio2(phi, b), g, X, Y) - std::conj(kernel_eval(make_fio1(phi, b), g, Y, X))) <
          1e-15);
    CHECK_THROWS_AS(kernel_eval(make_fio1(identity_phase(), sym("one")), g, X, Y), TailMassError);
    // the pdo kernel with t = 0 agrees with the type I kernel of the identity phase
    CHECK(std::abs(kernel_eval(make_pdo(b), g, X, Y) - kernel_eval(make_fio1(identity_phase(), b), g, X, Y)) < 1e-15);
}

TEST_CASE("dense discretization matches apply, its adjoint and an explicit matrix") {
    const auto g = make_grid(1, 96, 12.0);
    const auto u = gaussian(g, 0.2, 1.2), v = gaussian(g, -0.4, 0.9, 1.0);
    const auto phi = perturbed_phase(0.3);
    const auto a = symbol_preset("gauss_x", {{"width", 2.0}}, 1);
    for (const auto& op : {make_fio1(phi, a), make_fio2(phi, a), make_pdo(a, 0.5), make_pdo(a)}) {
        const auto D = DiscreteOperator::build(op, g);
        const auto Au = D.apply(u);
        CHECK(relative_error(Au, apply(op, u)) <= 1e-13);
        const cplx l = inner_product(Au, v), r = inner_product(u, D.apply_adjoint(v));
        CHECK(std::abs(l - r) <= 1e-13 * u.norm() * v.norm());
        CHECK(relative_error(D.apply_adjoint(v), apply(adjoint(op), v)) <= 1e-12);
    }

    // explicit type I matrix: A = E F, F_kj = h / sqrt(2 pi) e^{-i xi_k x_j}
    const std::size_t n = g.size();
    Eigen::MatrixXcd E(n, n), F(n, n);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < n; ++k) {
            const double z[2] = {g.x_at(j), g.xi_at(k)};
            E(j, k) = g.dual_spacing() / std::sqrt(2 * pi) * std::polar(1.0, phi.f->value(z).real()) * a.f->value(z);
            F(k, j) = g.spacing() / std::sqrt(2 * pi) * std::polar(1.0, -g.xi_at(k) * g.x_at(j));
        }
    Eigen::VectorXcd uv(n);
    for (std::size_t j = 0; j < n; ++j) uv(j) = u[j];
    const Eigen::VectorXcd want = E * (F * uv);
    const auto got = DiscreteOperator::build(make_fio1(phi, a), g).apply(u);
    double err = 0;
    for (std::size_t j = 0; j < n; ++j) err = std::max(err, std::abs(got[j] - want(j)));
    CHECK(err <= 1e-13 * want.cwiseAbs().maxCoeff());
}

TEST_CASE("grid refinement stability") {
    const auto phi = perturbed_phase(0.3);
    const auto a = symbol_preset("gauss_x", {{"width", 2.0}}, 1);
    double prev = -1;
    for (std::size_t N : {96, 192, 384}) {
        const auto g = make_grid(1, N, 12.0);
        const double nrm = apply(make_fio1(phi, a), gaussian(g, 0.5, 1.0, 1.0)).norm();
        if (prev > 0) CHECK(std::abs(nrm - prev) <= 1e-6 * prev);
        prev = nrm;
    }
}

TEST_CASE("parallel application is schedule independent") {
    const auto g = make_grid(1, 96, 10.0);
    const auto u = gaussian(g, 0.1, 1.0, 2.0);
    const auto op = make_fio1(perturbed_phase(0.3), sym("elliptic"));
    const auto one = apply(op, u);
    set_thread_count(3);
    const auto three = apply(op, u);
    set_thread_count(1);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(one[i] == three[i]);
}

TEST_CASE("regularization") {
    const auto id = identity_phase();
    const auto a = symbol_preset("gauss_xxi", {}, 1);
    const auto r1 = regularize(id, a, 1);
    for (const auto& z : random_probes(1, 20, 2, 20.0).points)
        CHECK(std::abs(r1.principal(z) - a(z) / (1 + z[0] * z[0])) <= 1e-15 * std::abs(a(z)) + 1e-300);
    CHECK_THROWS_AS(regularize(id, a, 5), std::domain_error);
    CHECK_THROWS_AS(regularize(id, a, 0), std::invalid_argument);

    const auto phi = perturbed_phase(0.3);
    const auto th = symbol_preset("theta", {{"m", 1}, {"mu", 1}}, 1);
    for (int l : {1, 2}) {
        const auto r = regularize(phi, th, l);
        const auto rep = seminorm_probe(r.principal, r.principal.weight, 1, 1, 2, default_probes(1));
        CHECK_MESSAGE(rep.pass, "l=", l, " max ", rep.max_constant);
        const auto rq = seminorm_probe(r.correction, r.correction.weight, 1, 1, 1, default_probes(1));
        CHECK_MESSAGE(rq.pass, "l=", l, " max ", rq.max_constant);
    }

    // integration by parts: int e^{i phi} ((1 - Lap) D)^l f dxi = int e^{i phi} f dxi
    auto f = make_symbol(make_expr(2, [](auto z) { return exp(-(z[1] - 1.0) * (z[1] - 1.0) * 0.5) * (z[0] + z[1]); }),
                         1, "f", theta_weight(0, 0));
    for (int l : {1, 2})
        for (double x : {0.0, 1.5, -4.0}) {
            const auto r = regularize(phi, f, l);
            cplx I0 = 0, I1 = 0;
            const double dxi = 0.01;
            for (double xi = -20; xi <= 22; xi += dxi) {
                const double z[2] = {x, xi};
                const cplx e = std::polar(1.0, phi.f->value(z).real());
                I0 += e * f(z);
                I1 += e * (r.principal(z) + r.correction(z));
            }
            CHECK_MESSAGE(std::abs(I0 - I1) * dxi <= 1e-8, "l=", l, " x=", x);
        }
}
