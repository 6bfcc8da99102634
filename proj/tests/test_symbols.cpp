#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "sgfio/symbols.hpp"

using namespace sgfio;

TEST_CASE("symbol preset jets agree with finite differences") {
    for (std::size_t d : {1u, 2u}) {
        const auto probes = random_probes(d, d == 1 ? 100 : 25, 17, 10.0);
        for (const auto& name : symbol_preset_names()) {
            const auto a = symbol_preset(name, {{"m", 1.5}, {"mu", -0.5}, {"width", 2.0}}, d);
            CHECK(a.f->arity() == 2 * d);
            for (const auto& z : probes.points) {
                const auto r = oracle::fd_check(*a.f, z, d == 1 ? 4 : 3);
                CHECK_MESSAGE(r.worst <= 1.0, name, " ", r.where, " q=", r.worst);
            }
        }
    }
    CHECK_THROWS_AS(symbol_preset("nope", {}, 1), std::invalid_argument);
}

TEST_CASE("seminorm probe examples") {
    const auto probes = default_probes(1);
    const auto one = seminorm_probe(symbol_preset("one", {}, 1), theta_weight(0, 0), 1, 1, 3, probes);
    CHECK(one.pass);
    for (const auto& e : one.orders) CHECK(e.constant == (e.alpha.order() + e.beta.order() == 0 ? 1.0 : 0.0));

    const auto th = seminorm_probe(symbol_preset("theta", {{"m", 1}, {"mu", 1}}, 1), theta_weight(1, 1), 1, 1, 3, probes);
    CHECK(th.pass);
    CHECK(th.max_constant <= 2.0);

    const auto osc = seminorm_probe(symbol_preset("oscillating", {}, 1), theta_weight(0, 0), 1, 1, 2, probes);
    CHECK_FALSE(osc.pass);
    // claimed class too small
    CHECK_FALSE(seminorm_probe(symbol_preset("x_xi", {}, 1), theta_weight(0, 1), 1, 1, 1, probes).pass);
    for (const auto& name : {"xi", "x_xi", "japanese_xi", "gauss_xi", "gauss_xxi", "elliptic", "gauss_x"}) {
        const auto a = symbol_preset(name, {}, 1);
        CHECK_MESSAGE(seminorm_probe(a, a.weight, a.r, a.rho, 3, probes).pass, name);
    }
}

TEST_CASE("cutoff near the diagonal") {
    CHECK_THROWS_AS(cutoff_diagonal(1.0), std::invalid_argument);
    CHECK_THROWS_AS(cutoff_diagonal(0.0), std::invalid_argument);
    const double k = 0.5;
    const auto chi = cutoff_diagonal(k);
    for (const auto& z : random_probes(1, 400, 3, 50.0).points) {
        const double x = z[0];
        const double y = x + z[1] * std::sqrt(1 + x * x) * k / 25.0;  // spread |y - x| over [0, 2 k <x>]
        const double ratio = std::abs(y - x) / (k * std::sqrt(1 + x * x));
        const double v = chi.f->value(std::vector<double>{x, y}).real();
        if (ratio <= 0.5) CHECK(v == 1.0);
        if (ratio >= 1.0) CHECK(v == 0.0);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    for (const auto& z : random_probes(1, 50, 4, 10.0).points) {
        const double x = z[0], y = x + 0.7 * k * std::sqrt(1 + x * x) * (z[1] > 0 ? 1 : -1);
        CHECK(oracle::fd_check(*chi.f, {x, y}, 3).worst <= 1.0);
    }
    // chi in SG^{0,0}_{1,1} on the product space. First order only: a plateau
    // step of width k<x>/2 forces |d_y^2 chi| <y>^2 >= 16 (1+k)^2 / k^2 > 50.
    const auto rep = seminorm_probe(chi, theta_weight(0, 0), 1, 1, 1, default_probes(1), 50.0);
    CHECK_MESSAGE(rep.pass, "max ", rep.max_constant);
    const auto rep2 = seminorm_probe(cutoff_diagonal(0.5, 2), theta_weight(0, 0, 2), 1, 1, 1, default_probes(2), 50.0);
    CHECK_MESSAGE(rep2.pass, "max ", rep2.max_constant);
    CHECK(seminorm_probe(chi, theta_weight(0, 0), 1, 1, 3, default_probes(1), 1e4).pass);
}

TEST_CASE("excision functions") {
    const auto e = excision(4.0);
    CHECK(e.f->value(std::vector<double>{3.0, 2.0}).real() == 1.0);
    CHECK(e.f->value(std::vector<double>{0.0, 0.0}).real() == 0.0);
    CHECK(e.f->value(std::vector<double>{1.0, 0.9}).real() == 0.0);
    CHECK(e.f->value(std::vector<double>{4.0, 0.0}).real() == 1.0);
    const auto ex = excision(4.0, 1, ExcisionKind::xi_only);
    CHECK(ex.f->value(std::vector<double>{100.0, 0.0}).real() == 0.0);
    CHECK(ex.f->value(std::vector<double>{0.0, 5.0}).real() == 1.0);
    const auto xo = excision(4.0, 1, ExcisionKind::x_only);
    CHECK(xo.f->value(std::vector<double>{0.0, 100.0}).real() == 0.0);
    CHECK(oracle::fd_check(*e.f, {1.5, 1.2}, 4).worst <= 1.0);
    CHECK(seminorm_probe(e, theta_weight(0, 0), 1, 1, 3, default_probes(1), 50.0).pass);
    CHECK(structure_function(StructureKind::excision, 2.0).name == excision(2.0).name);
    CHECK_THROWS_AS(excision(-1.0), std::invalid_argument);
}

TEST_CASE("asymptotic sum of theta_{0,-j}") {
    const auto probes = default_probes(1);
    std::vector<AsymptoticTerm> terms;
    for (int j = 0; j < 4; ++j)
        terms.push_back({symbol_preset("theta", {{"m", 0}, {"mu", -double(j)}}, 1), 0.0, -double(j)});
    const auto s = asymptotic_sum(terms, theta_weight(0, 0), 1, 1, probes);
    CHECK(s.kind == ExcisionKind::xi_only);
    REQUIRE(s.radii.size() == 4);
    for (std::size_t j = 1; j < 4; ++j) CHECK(s.radii[j] > s.radii[j - 1]);
    // each masked term sits in the previous class with constant <= 2^-j
    for (std::size_t j = 1; j < 4; ++j) {
        const auto rep = seminorm_probe(s.masked[j], theta_weight(0, -double(j - 1)), 1, 1, 2, probes);
        CHECK(rep.max_constant <= std::ldexp(1.0, -int(j)));
    }
    // far out the mask is inactive
    const double xi = 4 * s.radii.back();
    const std::vector<double> z{0.5, xi};
    double want = 0;
    for (int j = 0; j < 4; ++j) want += std::pow(1 + xi * xi, -0.5 * j);
    CHECK(std::abs(s.symbol(z) - want) < 1e-14);
    // remainder after two terms lies in theta_{0,-2}
    std::vector<FieldPtr> rest{s.symbol.f, s.masked[0].f, s.masked[1].f};
    const auto R2 = linear_combination(rest, {1.0, -1.0, -1.0});
    double worst = 0;
    for (const auto& p : probes.points) worst = std::max(worst, std::abs(R2->value(p)) * (1 + p[1] * p[1]));
    CHECK(worst <= 2.0);

    CHECK_THROWS_AS(asymptotic_sum({}, theta_weight(0, 0), 1, 1, probes), std::invalid_argument);
    std::vector<AsymptoticTerm> bad{terms[1], terms[0]};
    CHECK_THROWS_AS(asymptotic_sum(bad, theta_weight(0, 0), 1, 1, probes), AsymptoticSumError);
}

TEST_CASE("ellipticity probe") {
    const auto probes = default_probes(1);
    const auto th = symbol_preset("theta", {{"m", 1}, {"mu", 1}}, 1);
    const auto r1 = ellipticity_probe(th, theta_weight(1, 1), 1.0, probes);
    CHECK(r1.pass);
    CHECK(r1.inf_ratio == doctest::Approx(1.0));
    auto xs = make_symbol(make_expr(2, [](auto a) { return a[0]; }), 1, "x", theta_weight(1, 0));
    const auto r2 = ellipticity_probe(xs, theta_weight(1, 0), 1.0, probes);
    CHECK_FALSE(r2.pass);
    REQUIRE(r2.witness.size() == 2);
    CHECK(r2.witness[0] == 0.0);
    auto plus = make_symbol(make_expr(2, [](auto a) { return sqrt((1.0 + a[0] * a[0]) * (1.0 + a[1] * a[1])) + 1.0; }),
                            1, "1+theta", theta_weight(1, 1));
    CHECK(ellipticity_probe(plus, theta_weight(1, 1), 1.0, probes).inf_ratio >= 1.0);
    CHECK(ellipticity_probe(symbol_preset("elliptic", {}, 1), theta_weight(0, 0), 1.0, probes).pass);
    CHECK_FALSE(ellipticity_probe(symbol_preset("gauss_xi", {}, 1), theta_weight(0, 0), 1.0, probes).pass);
}

TEST_CASE("transpose and conjugate") {
    const auto a = symbol_preset("gauss_x", {{"width", 2.0}}, 1);
    const auto t = transpose_symbol(a);
    const auto c = conjugate_symbol(a);
    const std::vector<double> z{0.3, -1.7}, zt{-1.7, 0.3};
    CHECK(t(z) == a(zt));
    CHECK(c(z) == std::conj(a(z)));
    const auto l = left_amplitude(a);
    CHECK(l(std::vector<double>{0.3, 9.0, -1.7}) == a(z));
}
