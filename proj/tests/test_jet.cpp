#include <doctest.h>

#include <cmath>

#include "sgfio/field.hpp"
#include "sgfio/jet.hpp"

using namespace sgfio;

TEST_CASE("multi-index enumeration is graded-lex and complete") {
    const auto all = MultiIndex::enumerate(2, 3);
    CHECK(all.size() == 10);
    CHECK(all[0] == MultiIndex{0, 0});
    CHECK(all[1] == MultiIndex{1, 0});
    CHECK(all[2] == MultiIndex{0, 1});
    CHECK(all[3] == MultiIndex{2, 0});
    int prev = 0;
    for (const auto& m : all) {
        CHECK(m.order() >= prev);
        prev = m.order();
    }
    CHECK(MultiIndex{2, 3}.factorial() == 12.0);
}

TEST_CASE("univariate elementary functions match closed-form derivatives") {
    const double x0 = 0.7;
    const Jet x = Jet::variable(1, 6, 0, x0);
    const Jet e = exp(x);
    const Jet s = sin(x);
    const Jet l = log(x);
    const Jet r = sqrt(x);
    const Jet p = pow(x, -1.5);
    double fact = 1;
    for (int k = 0; k <= 6; ++k) {
        if (k) fact *= k;
        const MultiIndex m{k};
        CHECK(std::abs(e.coeff(m) - std::exp(x0) / fact) < 1e-14);
        CHECK(std::abs(s.partial(m) - std::sin(x0 + k * M_PI / 2)) < 1e-13);
        if (k >= 1) {
            // d^k log = (-1)^{k-1} (k-1)! x^{-k}
            const double want = (k % 2 ? 1 : -1) * (fact / k) * std::pow(x0, -k);
            CHECK(std::abs(l.partial(m) - want) < 1e-10 * std::abs(want));
        }
        double ff = 1;  // falling factorial of 0.5 and -1.5
        double fp = 1;
        for (int j = 0; j < k; ++j) {
            ff *= 0.5 - j;
            fp *= -1.5 - j;
        }
        CHECK(std::abs(r.partial(m) - ff * std::pow(x0, 0.5 - k)) < 1e-12 * std::max(1.0, std::abs(ff)));
        CHECK(std::abs(p.partial(m) - fp * std::pow(x0, -1.5 - k)) < 1e-11 * std::abs(fp * std::pow(x0, -1.5 - k)));
    }
}

TEST_CASE("bivariate product and quotient rules") {
    const auto v = seed(std::vector<double>{0.3, -1.2}, 5);
    const Jet f = v[0] * v[0] * v[1] / (1.0 + v[1] * v[1]);
    // f = x^2 g(y), g = y/(1+y^2);  d_x^2 d_y f = 2 g'(y)
    const double y = -1.2;
    const double gp = (1 - y * y) / ((1 + y * y) * (1 + y * y));
    CHECK(std::abs(f.partial(MultiIndex{2, 1}) - 2 * gp) < 1e-13);
    CHECK(std::abs(f.partial(MultiIndex{3, 0})) < 1e-15);
    CHECK(std::abs(f.partial(MultiIndex{0, 0}) - 0.09 * y / (1 + y * y)) < 1e-15);
}

TEST_CASE("substitute composes Taylor polynomials") {
    // t = exp(u) at u0 = 0.2, substitute u - u0 = sin(z) - sin(z0) in z at z0=0.4
    const Jet u = Jet::variable(1, 6, 0, 0.2);
    const Jet t = exp(u);
    const Jet z = Jet::variable(1, 6, 0, 0.4);
    const Jet inc = (sin(z) - std::sin(0.4)).increment();
    const Jet comp = substitute(t, std::span<const Jet>(&inc, 1));
    // reference: exp(0.2 + sin(z) - sin(0.4)) directly
    const Jet ref = exp(0.2 + sin(z) - std::sin(0.4));
    for (std::size_t i = 0; i < ref.layout().size(); ++i)
        CHECK(std::abs(comp.coeff(i) - ref.coeff(i)) < 1e-13);
}

TEST_CASE("field derivative and gradient agree with direct jets") {
    auto f = make_expr(2, [](auto a) { return exp(a[0] * a[1]) + a[0] * a[0] * a[0]; });
    const std::vector<double> p{0.4, -0.6};
    const Jet t = taylor(*f, p, 6);
    auto d = derivative(f, MultiIndex{1, 2});
    const Jet td = taylor(*d, p, 3);
    const Jet want = t.derivative(MultiIndex{1, 2});
    for (std::size_t i = 0; i < td.layout().size(); ++i) CHECK(std::abs(td.coeff(i) - want.coeff(i)) < 1e-12);
    CHECK(std::abs(d->value(p) - t.partial(MultiIndex{1, 2})) < 1e-12);

    auto g = gradient(f, {0, 1});
    cplx out[2];
    g->values(p, out);
    CHECK(std::abs(out[0] - t.partial(MultiIndex{1, 0})) < 1e-14);
    CHECK(std::abs(out[1] - t.partial(MultiIndex{0, 1})) < 1e-14);
    const auto gj = taylor_all(*g, p, 2);
    CHECK(std::abs(gj[1].partial(MultiIndex{1, 1}) - t.partial(MultiIndex{1, 2})) < 1e-12);

    auto tr = transpose(f, 1);
    CHECK(std::abs(tr->value(std::vector<double>{-0.6, 0.4}) - f->value(p)) < 1e-15);
}
