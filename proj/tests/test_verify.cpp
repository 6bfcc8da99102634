#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "sgfio/verify.hpp"

using namespace sgfio;

namespace {

SymbolHandle sym(const std::string& name, std::size_t d = 1) { return symbol_preset(name, {}, d); }

double dense_top_singular_value(const OperatorSpec& op, const Grid& g) {
    const std::size_t n = g.size();
    Eigen::MatrixXcd A(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        std::vector<cplx> e(n, 0.0);
        e[j] = 1.0;
        const auto col = apply_checked(op, GridFunction(g, std::move(e))).out;
        for (std::size_t i = 0; i < n; ++i) A(i, j) = col[i];
    }
    return Eigen::JacobiSVD<Eigen::MatrixXcd>(A).singularValues()(0);
}

}  // namespace

TEST_CASE("operator norm: identity, dense oracle, homogeneity, determinism") {
    const auto g = make_grid(1, 64, 6.0);
    const auto id = operator_norm(make_pdo(sym("one")), g);
    CHECK(id.converged);
    CHECK(std::abs(id.value - 1.0) <= 1e-10);

    const auto A = make_fio1(identity_phase(), sym("gauss_xxi"));
    const auto n = operator_norm(A, g);
    CHECK(n.converged);
    CHECK(n.residual <= 1e-8);
    CHECK(std::abs(n.value - dense_top_singular_value(A, g)) <= 1e-6);

    auto two = sym("gauss_xxi");
    two.f = mul(constant_field(2, 2.0), two.f);
    CHECK(std::abs(operator_norm(make_fio1(identity_phase(), two), g).value - 2 * n.value) <= 1e-10);

    const auto B = make_fio1(perturbed_phase(0.3), sym("gauss_xi"));
    const auto b1 = operator_norm(B, g, 2000, 7), b2 = operator_norm(B, g, 2000, 7);
    CHECK(b1.value == b2.value);
    CHECK(b1.iterations == b2.iterations);
    CHECK(std::abs(b1.value - dense_top_singular_value(B, g)) <= 1e-6);
    CHECK_THROWS_AS(operator_norm(A, g, 5), std::invalid_argument);
    CHECK(to_json(b1)["grid"]["N"] == 64);
}

TEST_CASE("Schur bound") {
    const auto g = make_grid(1, 64, 6.0);
    const auto K = make_pdo(sym("rank_one_gauss"));
    const double s = schur_bound(K, g);
    CHECK(std::abs(s - std::sqrt(M_PI)) <= 1e-6);
    const auto n = operator_norm(K, g);
    CHECK(std::abs(n.value - std::sqrt(M_PI / 2)) <= 1e-8);  // rank one: ||e^{-x^2}||^2
    CHECK(n.value <= s + 1e-6);
    for (const auto& op : {make_pdo(sym("gauss_xxi")), make_fio1(perturbed_phase(0.3), sym("gauss_xi"))})
        CHECK(operator_norm(op, g).value <= schur_bound(op, g) + 1e-6);
    CHECK_THROWS_AS(schur_bound(make_pdo(sym("one")), g), TailMassError);
}

TEST_CASE("decay fits") {
    const auto& t = default_ray_samples();
    std::vector<double> m;
    for (double s : t) m.push_back(3.0 * std::pow(s, -1.5));
    const auto f = fit_decay("power", t, m);
    CHECK(f.slope == doctest::Approx(-1.5).epsilon(1e-12));
    CHECK(std::exp(f.intercept) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(f.residual <= 1e-12);
    CHECK(fit_decay("zero", t, std::vector<double>(t.size(), 0.0)).vanishes);
    CHECK_THROWS_AS(fit_decay("few", {4, 8, 16, 128}, {1, 1, 1, 1}), std::invalid_argument);
    CHECK_THROWS_AS(fit_decay("short", {4, 8, 16, 32, 64}, {1, 1, 1, 1, 1}), std::invalid_argument);

    // the moving half has Japanese bracket t
    for (double s : t) {
        const auto z = xi_ray(2.0, -1.0).at(s);
        CHECK(z[0] == 2.0);
        CHECK(std::hypot(1.0, z[1]) == doctest::Approx(s).epsilon(1e-14));
        CHECK(z[1] < 0);
        CHECK(std::hypot(1.0, x_ray(1.0).at(s)[0]) == doctest::Approx(s).epsilon(1e-14));
    }
}

TEST_CASE("psi-derivative decay bounds") {
    for (const auto& phi : {perturbed_phase(0.3), transport_phase(1.0)}) {
        const auto r = psi_decay_probe(phi);
        CHECK(r.entries.size() == 4);
        CAPTURE(r.json.dump());
        CHECK(r.pass);
    }
    // transport phases are linear in x: psi vanishes
    for (const auto& e : psi_decay_probe(transport_phase(1.0)).entries) CHECK(e.xi_fit.vanishes);
    // the bound is attained in xi for even orders: (psi'')^{|alpha|/2} ~ <xi>^{|alpha|/2}
    const auto p = psi_decay_probe(perturbed_phase(0.3));
    CHECK(p.entries[1].xi_fit.slope == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("remainder probe: exact Leibniz case sits at the quadrature floor") {
    const auto g = make_grid(1, 256, 12.0);
    const CompositionSpec s{MixedMode::pdo_fio1, sym("xi"), sym("gauss_x"), perturbed_phase(0.3), {}};
    const double floor = quadrature_floor(s, g, TestKind::gaussian);
    CHECK(floor <= 1e-8);
    const auto r = remainder_probe(s, {2}, {test_function(g, TestKind::gaussian)}, {});
    CAPTURE(floor);
    CAPTURE(r.operator_defects[0][0]);
    CHECK(r.operator_defects[0][0] <= 10 * floor);
}

TEST_CASE("remainder probe: <xi> preset drops orders along xi-rays") {
    const CompositionSpec s{MixedMode::pdo_fio1, sym("japanese_xi"), sym("elliptic"), perturbed_phase(0.3), {}};
    const auto r = remainder_probe(s, {0, 1, 2, 3}, {}, {xi_ray(1.0), xi_ray(-2.0, -1.0)});
    CAPTURE(r.json.dump());
    CHECK(r.symbol_monotone);
    CHECK(r.slopes_ok);
    CHECK(r.pass);
    // c_M itself: slope +1 for the empty sum, then the remainder drops
    CHECK(r.fits[0][0].slope == doctest::Approx(1.0).epsilon(0.05));
    for (std::size_t k = 1; k < 4; ++k) CHECK(r.fits[k][0].slope <= r.fits[k - 1][0].slope - 0.5);
    CHECK_THROWS_AS(remainder_probe(s, {1, 5}, {}, {}), std::invalid_argument);
}

TEST_CASE("remainder probe: operator defects shrink on a packet") {
    const auto g = make_grid(1, 128, 10.0);
    TestParams tp;
    tp.frequency = {8.0};
    const auto u = test_function(g, TestKind::modulated_gaussian, tp);
    const CompositionSpec s{MixedMode::pdo_fio1, sym("japanese_xi"), symbol_preset("gauss_x", {{"width", 2.0}}, 1),
                            perturbed_phase(0.3), {}};
    const auto r = remainder_probe(s, {1, 2, 3}, {u}, {xi_ray(1.0)});
    CAPTURE(r.json.dump());
    CHECK(r.operator_defects[1][0] < r.operator_defects[0][0]);
    CHECK(r.operator_defects[2][0] < r.operator_defects[1][0]);
    CHECK(r.pass);
}
