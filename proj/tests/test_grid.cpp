#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "sgfio/grid.hpp"

using namespace sgfio;
constexpr double pi = std::numbers::pi;

TEST_CASE("make_grid basics and validation") {
    const Grid g = make_grid(1, 8, 4.0);
    CHECK(g.spacing() == 1.0);
    CHECK(g.xi_at(0) == doctest::Approx(-pi));
    CHECK(g.xi_at(7) == doctest::Approx(3 * pi / 4));
    CHECK(g.spacing() * 8 == 2 * 4.0);
    for (std::size_t j = 0; j < 8; ++j) {
        CHECK(g.x_index(g.x_at(j)) == j);
        CHECK(g.xi_index(g.xi_at(j)) == j);
    }
    const Grid g2 = make_grid(2, 16, 5.0);
    CHECK(g2.size() == 256);
    CHECK(g2.spacing() == 0.625);
    CHECK_THROWS_AS(make_grid(1, 7, 4.0), GridError);
    CHECK_THROWS_AS(make_grid(1, 8, 0.0), GridError);
    CHECK_THROWS_AS(make_grid(4, 8, 1.0), GridError);
    CHECK_THROWS_AS(make_grid(1, 6, 1.0), GridError);
}

TEST_CASE("gaussian is a fixed point of the unitary transform") {
    const Grid g = make_grid(1, 256, 10.0);
    auto f = GridFunction::sample(g, [](auto x) { return cplx(std::exp(-0.5 * x[0] * x[0])); });
    const auto fh = fourier(f, Direction::forward);
    double err = 0;
    for (std::size_t m = 0; m < g.size(); ++m)
        err = std::max(err, std::abs(fh[m] - std::exp(-0.5 * g.xi_at(m) * g.xi_at(m))));
    CHECK(err < 1e-12);
    CHECK(relative_error(fourier(fh, Direction::inverse), f) < 1e-13);
    CHECK(std::abs(fh.norm() - f.norm()) < 1e-13 * f.norm());
    CHECK(std::abs(inner_product(f, f) - std::sqrt(pi)) < 1e-10);
}

TEST_CASE("round trip, Parseval and shift law in 2d") {
    const Grid g = make_grid(2, 96, 10.0);
    TestParams p;
    p.center = {0.5, -1.0};
    p.frequency = {2.0, 1.0};
    const auto f = test_function(g, TestKind::modulated_gaussian, p);
    const auto fh = fourier(f, Direction::forward);
    CHECK(relative_error(fourier(fh, Direction::inverse), f) < 1e-12);
    CHECK(std::abs(fh.norm() - f.norm()) < 1e-12);
    // shift by a = (2h, -3h)
    const double a0 = 2 * g.spacing(), a1 = -3 * g.spacing();
    auto fs = GridFunction::sample(g, [&](auto x) {
        double y[2] = {x[0] - a0, x[1] - a1};
        double ph = 2.0 * y[0] + 1.0 * y[1];
        double r2 = (y[0] - 0.5) * (y[0] - 0.5) + (y[1] + 1.0) * (y[1] + 1.0);
        return std::polar(std::exp(-0.5 * r2), ph);
    });
    fs = fs * (1.0 / fs.norm());
    const auto fsh = fourier(fs, Direction::forward);
    auto want = GridFunction::sample(
        g, [&](auto xi) { return std::polar(1.0, -(a0 * xi[0] + a1 * xi[1])); }, Domain::frequency);
    double err = 0;
    for (std::size_t i = 0; i < g.size(); ++i) err = std::max(err, std::abs(fsh[i] - want[i] * fh[i]));
    CHECK(err < 1e-10);
}

TEST_CASE("inner product properties") {
    const Grid g = make_grid(1, 256, 10.0);
    TestParams a, b;
    a.center = {-5};
    b.center = {5};
    a.width = b.width = 0.5;
    const auto f = test_function(g, TestKind::gaussian, a);
    const auto h = test_function(g, TestKind::gaussian, b);
    CHECK(std::abs(inner_product(f, h)) < 1e-13);
    const auto u = test_function(g, TestKind::hermite, TestParams{1.0, {}, {}, 2});
    CHECK(std::abs(inner_product(f, u) - std::conj(inner_product(u, f))) < 1e-15);
    CHECK_THROWS_AS(inner_product(f, test_function(make_grid(1, 128, 10.0), TestKind::gaussian)), GridError);
}

TEST_CASE("test functions: normalization, parity, margins") {
    const Grid g = make_grid(1, 256, 10.0);
    const auto f = test_function(g, TestKind::gaussian);
    CHECK(std::abs(f.norm() - 1) < 1e-12);
    CHECK(std::abs(f[g.x_index(0.0)] - std::pow(pi, -0.25)) < 1e-12);
    const auto h1 = test_function(g, TestKind::hermite, TestParams{1.0, {}, {}, 1});
    CHECK(std::abs(h1[g.x_index(0.0)]) < 1e-15);
    CHECK(std::abs(h1[g.x_index(1.25)] + h1[g.x_index(-1.25)]) < 1e-15);
    TestParams hi;
    hi.frequency = {0.9 * g.nyquist()};
    CHECK_THROWS_WITH_AS(test_function(g, TestKind::modulated_gaussian, hi), doctest::Contains("aliasing"), GridError);
    TestParams wide;
    wide.width = 4.0;
    CHECK_THROWS_WITH_AS(test_function(g, TestKind::gaussian, wide), doctest::Contains("truncation"), GridError);
}

TEST_CASE("binary and csv serialization") {
    const Grid g = make_grid(2, 8, 3.0);
    const auto f = GridFunction::sample(g, [](auto x) { return cplx(x[0], x[1] * x[1]); });
    std::stringstream ss;
    write_binary(f, ss);
    CHECK(ss.str().size() == 16 + 64 * 16);
    const auto r = read_binary(ss);
    CHECK(r.grid() == g);
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(r[i] == f[i]);
    std::ostringstream cs;
    write_csv(f, cs);
    CHECK(cs.str().rfind("i0,i1,x0,x1,re,im\n", 0) == 0);
}
