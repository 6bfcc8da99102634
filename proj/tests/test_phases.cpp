#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "sgfio/phases.hpp"
#include "sgfio/symbols.hpp"

using namespace sgfio;

TEST_CASE("phase_probe classification") {
    const auto probes = default_probes(1);
    const auto id = phase_probe(identity_phase(), probes);
    CHECK(id.simple);
    CHECK(id.regular);
    CHECK(id.xi_ratio_min == doctest::Approx(1.0));
    CHECK(id.x_ratio_max == doctest::Approx(1.0));
    CHECK(id.det_min == doctest::Approx(1.0));
    // analytic SG^{1,1} bounds of <x, xi> are 1 in every entry
    for (const auto& e : id.seminorms) CHECK(e.constant <= 2.0);

    const auto half = perturbed_phase(0.5);
    const auto pr = phase_probe(half, probes);
    CHECK(pr.regular);
    CHECK(pr.det_min >= 0.5 - 1e-12);
    CHECK(pr.det_max <= 1.5 + 1e-12);
    CHECK(mixed_hessian_det(half)->value(std::vector<double>{1, 1}).real() == doctest::Approx(1.25).epsilon(1e-14));

    const auto cub = phase_probe(cubic_phase(), probes);
    CHECK_FALSE(cub.simple);
    CHECK(cub.x_ratio_max > 100);
    const auto deg = phase_probe(degenerate_phase(), probes);
    CHECK_FALSE(deg.regular);
    CHECK(deg.det_min < 1e-6);
    CHECK(to_json(pr)["regular"].get<bool>());
}

TEST_CASE("gradient inversion") {
    const auto id = identity_phase(2);
    const std::vector<double> x{0.3, -4.0}, xi{2.0, 7.5};
    const auto eta = invert_gradient(id, GradientSide::x, x, xi);
    CHECK(std::abs(eta[0] - 2.0) < 1e-14);
    CHECK(std::abs(eta[1] - 7.5) < 1e-14);

    const auto tr = transport_phase(1.0);
    for (double xi0 : {-3.0, 0.0, 0.5, 20.0})
        for (double y0 : {-2.0, 1.0, 100.0}) {
            const auto y = invert_gradient(tr, GradientSide::xi, std::vector<double>{xi0}, std::vector<double>{y0});
            CHECK(std::abs(y[0] - (y0 - xi0 / std::sqrt(1 + xi0 * xi0))) < 1e-10);
        }

    const auto deg = degenerate_phase();
    try {
        invert_gradient(deg, GradientSide::x, std::vector<double>{0.0}, std::vector<double>{2.0});
        FAIL("expected divergence");
    } catch (const NewtonError& e) {
        CHECK(e.trace().size() >= 1);
        CHECK(std::string(e.what()).find("Newton") != std::string::npos);
    }
}

TEST_CASE("canonical transform and round trip") {
    const auto tr = transport_phase(1.0);
    const auto c = canonical_transform(tr, std::vector<double>{0.0}, std::vector<double>{1.0});
    CHECK(c[1] == doctest::Approx(1.0));
    CHECK(c[0] == doctest::Approx(1 / std::sqrt(2.0)).epsilon(1e-14));
    const auto id = canonical_transform(identity_phase(), std::vector<double>{3.0}, std::vector<double>{-2.0});
    CHECK(id[0] == 3.0);
    CHECK(id[1] == -2.0);

    for (const auto& phi : {identity_phase(), transport_phase(2.0), perturbed_phase(0.3)})
        for (const auto& z : default_probes(1).points) {
            const std::vector<double> x{z[0]}, eta{z[1]};
            const auto yx = canonical_transform(phi, x, eta);
            const auto back = invert_gradient(phi, GradientSide::x, x, std::vector<double>{yx[1]});
            CHECK(std::abs(back[0] - eta[0]) <= 1e-10 * std::max(1.0, std::abs(eta[0])));
        }
    const auto p2 = perturbed_phase(0.3, 2);
    for (const auto& z : random_probes(2, 20, 11).points) {
        const std::vector<double> x{z[0], z[1]}, eta{z[2], z[3]};
        const auto yx = canonical_transform(p2, x, eta);
        const auto back = invert_gradient(p2, GradientSide::x, x, std::vector<double>{yx[2], yx[3]});
        CHECK(std::abs(back[0] - eta[0]) + std::abs(back[1] - eta[1]) <= 1e-10 * japanese(eta));
    }
}

TEST_CASE("inverse gradient fields: values and implicit jets") {
    const auto phi = perturbed_phase(0.4);
    const auto inv = inverse_gradient_x(phi);
    for (const auto& z : random_probes(1, 20, 5, 10.0).points) {
        const auto eta = invert_gradient(phi, GradientSide::x, std::vector<double>{z[0]}, std::vector<double>{z[1]});
        CHECK(std::abs(inv->value(z).real() - eta[0]) < 1e-13 * japanese(eta));
        CHECK(oracle::fd_check(*inv, z, 4).worst <= 1.0);
    }
    const auto invy = inverse_gradient_xi(transport_phase(1.5));
    CHECK(oracle::fd_check(*invy, {0.4, -0.8}, 4).worst <= 1.0);
}

TEST_CASE("implicit jets solve a scalar equation to full order") {
    // z + 0.3 sin z = p  =>  dz/dp = 1 / (1 + 0.3 cos z)
    auto G = make_expr(2, [](auto a) { return a[1] + sin(a[1]) * 0.3 - a[0]; });
    const double p0 = 0.8;
    const auto z0 = newton_solve(
        [](std::span<const double> z, std::span<double> v, std::span<double> J) {
            v[0] = z[0] + 0.3 * std::sin(z[0]);
            J[0] = 1 + 0.3 * std::cos(z[0]);
        },
        std::vector<double>{p0});
    const auto p = seed(std::vector<double>{p0}, 6);
    const auto z = implicit_jets(*G, p, z0);
    // the residual jet G(p, z(p)) must vanish to all orders
    std::vector<Jet> args{p[0], z[0]};
    const Jet res = G->compose1(args);
    for (std::size_t i = 0; i < res.layout().size(); ++i) CHECK(std::abs(res.coeff(i)) < 1e-13);
    CHECK(std::abs(z[0].partial(MultiIndex{1}) - 1 / (1 + 0.3 * std::cos(z0[0]))) < 1e-14);
}

TEST_CASE("averaged gradient and S_phi") {
    const auto phi = perturbed_phase(0.3);
    // Gauss-Legendre average of an affine-in-t integrand is exact
    const auto idp = identity_phase();
    const auto g = averaged_gradient(idp, SPhiVariant::xy, std::vector<double>{1.0}, std::vector<double>{-2.0},
                                     std::vector<double>{3.5});
    CHECK(g[0] == doctest::Approx(3.5).epsilon(1e-15));

    // at y = x the averaged inverse is the gradient inverse
    const auto Phi = averaged_inverse(phi, SPhiVariant::xy);
    for (const auto& z : default_probes(1).points) {
        const std::vector<double> p{z[0], z[0], z[1]};
        const auto eta = invert_gradient(phi, GradientSide::x, std::vector<double>{z[0]}, std::vector<double>{z[1]});
        CHECK(std::abs(Phi->value(p).real() - eta[0]) <= 1e-10 * japanese(eta));
    }

    // identity phase: S_phi is the identity on amplitudes
    auto c0 = make_expr(3, [](auto a) { return exp(-(a[0] * a[0]) * 0.5) * (a[2] + cplx(0, 1) * a[1]); });
    SPhiOptions gen;
    gen.force_general = true;
    gen.k_cutoff = 0.9;
    for (auto v : {SPhiVariant::xy, SPhiVariant::xi_eta}) {
        const auto S = s_phi_transform(c0, idp, v, gen);
        for (const auto& z : random_probes(1, 30, 9, 30.0).points) {
            const std::vector<double> p = v == SPhiVariant::xy ? std::vector<double>{z[0], z[0] + 0.3, z[1]}
                                                               : std::vector<double>{z[0], z[1], z[1] - 0.3};
            CHECK(std::abs(S->value(p) - c0->value(p)) <= 1e-12 * std::max(1.0, std::abs(c0->value(p))));
        }
    }

    // Jacobian positivity: |det Phi'_xi| >= (2 sup det phi''_{x xi})^{-1}
    const auto one = constant_field(3, 1.0);
    const auto S1 = s_phi_transform(one, phi, SPhiVariant::xy, gen);
    const double sup = phase_probe(phi, default_probes(1)).det_max;
    for (const auto& z : default_probes(1).points) {
        const std::vector<double> p{z[0], z[0] + 0.2 * japanese(std::vector<double>{z[0]}), z[1]};
        CHECK(S1->value(p).real() >= 1 / (2 * sup));
    }
    CHECK_THROWS_AS(S1->value(std::vector<double>{0.0, 5.0, 1.0}), CutoffRegionError);
    CHECK(oracle::fd_check(*S1, {0.5, 0.9, -1.2}, 3).worst <= 1.0);
    const auto S2 = s_phi_transform(one, phi, SPhiVariant::xi_eta, gen);
    CHECK(oracle::fd_check(*S2, {0.5, 0.9, 0.7}, 3).worst <= 1.0);
}

TEST_CASE("derivatives of e^{i phi} lie in SG^{|beta|,|alpha|}") {
    const auto probes = log_radial_probes(1, 1e3, 2);
    for (const auto& phi : {transport_phase(1.0), perturbed_phase(0.3)}) {
        auto e = make_expr(2, [f = phi.f](auto a) {
            using T = std::remove_cv_t<typename decltype(a)::element_type>;
            if constexpr (std::is_same_v<T, Jet>)
                return exp(f->compose1(a) * cplx(0, 1));
            else
                return std::exp(f->value(std::vector<double>{a[0].real(), a[1].real()}) * cplx(0, 1));
        });
        for (const auto& ab : MultiIndex::enumerate(2, 3)) {
            if (ab.order() == 0) continue;
            auto b = divide(derivative(e, ab), e);
            const auto rep = seminorm_probe(b, 1, theta_weight(ab[1], ab[0]), 1, 1, 1, probes);
            CHECK_MESSAGE(rep.pass, phi.name, " ", ab.str(), " max ", rep.max_constant);
        }
    }
}
