#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "sgfio/phases.hpp"
#include "sgfio/weights.hpp"

using namespace sgfio;

TEST_CASE("theta weights: closed forms") {
    const auto w = theta_weight(2, 2);
    CHECK(w(std::vector<double>{std::sqrt(3.0), 1.0}) == doctest::Approx(8.0).epsilon(1e-14));
    const auto one = theta_weight(0, 0);
    const Jet t = taylor(*one.f, std::vector<double>{0.3, -2.0}, 3);
    CHECK(std::abs(t.value() - 1.0) < 1e-15);
    for (std::size_t i = 1; i < t.layout().size(); ++i) CHECK(std::abs(t.coeff(i)) < 1e-15);
    const auto w10 = theta_weight(1, 0);
    const Jet t10 = taylor(*w10.f, std::vector<double>{1.0, 0.4}, 1);
    CHECK(std::abs(t10.partial(MultiIndex{1, 0}) - 1 / std::sqrt(2.0)) < 1e-15);
}

TEST_CASE("theta weight jets agree with finite differences") {
    const auto probes = random_probes(1, 100, 7, 10.0);
    for (auto [m, mu] : std::initializer_list<std::pair<double, double>>{{1.0, 1.0}, {-2.0, 0.5}, {0.0, -3.0}}) {
        const auto w = theta_weight(m, mu);
        for (const auto& z : probes.points) CHECK(oracle::fd_check(*w.f, z).worst <= 1.0);
    }
    const auto w2 = theta_weight(1.5, -1.0, 2);
    for (const auto& z : random_probes(2, 30, 8, 10.0).points) CHECK(oracle::fd_check(*w2.f, z).worst <= 1.0);
}

TEST_CASE("weight_probe examples") {
    const auto probes = default_probes(1);
    const auto ok = weight_probe(theta_weight(1, 1), 1, 1, 2, probes);
    CHECK(ok.pass);
    for (const auto& e : ok.orders) CHECK(e.constant <= 2.0);
    CHECK(ok.v_ratio_max <= 2.0);

    const auto bad = weight_probe(theta_weight(1, 1), 2, 2, 1, probes);
    CHECK_FALSE(bad.pass);

    const auto c = weight_probe(constant_weight(1.0), 3, 3, 3, probes);
    CHECK(c.pass);
    for (const auto& e : c.orders)
        if (e.alpha.order() + e.beta.order() >= 1) CHECK(e.constant == 0.0);
    const auto j = to_json(ok);
    CHECK(j.contains("orders"));
    CHECK(j["pass"].get<bool>());
}

TEST_CASE("theta_transform") {
    const auto id = identity_phase();
    const auto w01 = theta_weight(0, 1), w10 = theta_weight(1, 0);
    const auto t2 = theta_transform(w01, id, 2);
    const auto t1 = theta_transform(w10, id, 1);
    for (const auto& z : random_probes(1, 20, 3).points) {
        CHECK(std::abs(t2(z) - w01(z)) < 1e-13 * w01(z));
        CHECK(std::abs(t1(z) - w10(z)) < 1e-13 * w10(z));
    }
    const auto half = perturbed_phase(0.5);
    const auto th = theta_transform(w01, half, 2);
    CHECK(th(std::vector<double>{0.0, 0.0}) == doctest::Approx(1.0).epsilon(1e-15));
    // composed expression evaluated directly
    const auto w = theta_weight(1, 2);
    const auto t1h = theta_transform(w, half, 1);
    for (const auto& z : random_probes(1, 20, 4).points) {
        const double x = z[0], xi = z[1];
        const double gxi = x + 0.5 * std::sqrt(1 + x * x) * xi / std::sqrt(1 + xi * xi);
        const double want = std::sqrt(1 + gxi * gxi) * (1 + xi * xi);
        CHECK(std::abs(t1h(z) - want) <= 1e-13 * want);
    }
    CHECK(oracle::fd_check(*t1h.f, {0.7, -1.3}).worst <= 1.0);
}

namespace {
// M(xi, eta) = phi'_x(eta, xi): the side-2 map in (point, parameter) order
FieldPtr side2_map(const PhaseHandle& p) { return transpose(p.grad_x, p.d); }
}  // namespace

TEST_CASE("invariance probes for theta weights and every regular preset") {
    const auto probes = default_probes(1);
    for (const auto& phi : {identity_phase(), transport_phase(1.0), perturbed_phase(0.3)}) {
        for (auto [m, mu] : std::initializer_list<std::pair<double, double>>{{1.0, 1.0}, {-1.0, 0.5}, {0.0, 1.0}}) {
            const auto w = theta_weight(m, mu);
            const auto r1 = invariance_probe(w, phi.grad_xi, 1, probes, &phi);
            const auto r2 = invariance_probe(w, side2_map(phi), 2, probes);
            CHECK_MESSAGE(r1.pass, phi.name, " side 1 ratio ", r1.ratio_max);
            CHECK_MESSAGE(r2.pass, phi.name, " side 2 ratio ", r2.ratio_max);
        }
    }
    const auto one = invariance_probe(constant_weight(), perturbed_phase(0.3).grad_xi, 1, probes);
    CHECK(one.ratio_max == doctest::Approx(1.0));
    const auto id = identity_phase();
    const auto r = invariance_probe(theta_weight(1, 1), id.grad_xi, 1, probes, &id);
    CHECK(*r.theta_ratio_min == doctest::Approx(1.0));
    CHECK(*r.theta_ratio_max == doctest::Approx(1.0));
}

TEST_CASE("probe sets") {
    const auto p = log_radial_probes(2);
    CHECK(p.points.front() == std::vector<double>(4, 0.0));
    double xmax = 0, ximax = 0;
    for (const auto& z : p.points) {
        xmax = std::max(xmax, japanese(std::span<const double>(z).subspan(0, 2)));
        ximax = std::max(ximax, japanese(std::span<const double>(z).subspan(2, 2)));
    }
    CHECK(xmax >= 100);
    CHECK(ximax >= 100);
    CHECK(lattice_probes(1).size() == 49);
    const auto a = random_probes(1, 10, 42), b = random_probes(1, 10, 42);
    CHECK(a.points == b.points);
}
