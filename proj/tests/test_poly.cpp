#include <gtest/gtest.h>

#include <random>

#include "bulkvac/poly.hpp"
#include "bulkvac/solver.hpp"
#include "support/models.hpp"

using namespace bulkvac;

namespace {

std::vector<cplx> nodes(int n) { return circle_nodes(n); }

CVec sample(const std::function<cplx(cplx)>& f, const std::vector<cplx>& z) {
    CVec v(static_cast<Eigen::Index>(z.size()));
    for (size_t i = 0; i < z.size(); ++i) v(static_cast<Eigen::Index>(i)) = f(z[i]);
    return v;
}

}  // namespace

TEST(Interpolation, Quadratic) {
    const auto z = nodes(3);
    const auto p = poly_from_samples(z, sample([](cplx x) { return x * x - 1.0; }, z), 2);
    ASSERT_EQ(p.degree(), 2);
    EXPECT_NEAR(std::abs(p.coeff(0) + 1.0), 0.0, 1e-12);
    EXPECT_NEAR(std::abs(p.coeff(1)), 0.0, 1e-12);
    EXPECT_NEAR(std::abs(p.coeff(2) - 1.0), 0.0, 1e-12);
}

TEST(Interpolation, ConstantTrims) {
    const auto z = nodes(4);
    const auto p = poly_from_samples(z, sample([](cplx) { return cplx(5.0); }, z), 3);
    ASSERT_EQ(p.degree(), 0);
    EXPECT_NEAR(std::abs(p.coeff(0) - 5.0), 0.0, 1e-12);
}

TEST(Interpolation, DuplicateNodesRejected) {
    std::vector<cplx> z{1.0, 1.0, 2.0};
    CVec v(3);
    v << 1.0, 1.0, 2.0;
    EXPECT_THROW(poly_from_samples(z, v, 2), std::exception);
}

TEST(Determinant, Examples) {
    const auto p = det_poly(
        [](cplx z) {
            CMat M(2, 2);
            M << z, 1.0, 0.0, z;
            return M;
        },
        2, 2);
    ASSERT_EQ(p.degree(), 2);
    EXPECT_NEAR(std::abs(p.coeff(2) - 1.0), 0.0, 1e-12);
    EXPECT_NEAR(std::abs(p.coeff(0)), 0.0, 1e-12);

    const auto q = det_poly(
        [](cplx z) {
            CMat M(1, 1);
            M << 3.0 * z * z - 2.0;
            return M;
        },
        1, 2);
    EXPECT_NEAR(std::abs(q.coeff(2) - 3.0), 0.0, 1e-12);
    EXPECT_NEAR(std::abs(q.coeff(0) + 2.0), 0.0, 1e-12);
}

TEST(Roots, Examples) {
    const auto a = find_roots(Polynomial{-1.0, 0.0, 1.0});
    ASSERT_EQ(a.roots.size(), 2u);
    for (const auto& r : a.roots) {
        EXPECT_EQ(r.multiplicity, 1);
        EXPECT_EQ(r.location, Location::OnCircle);
        EXPECT_NEAR(std::abs(std::abs(r.value) - 1.0), 0.0, 1e-12);
    }
    const auto b = find_roots(Polynomial{4.0, -4.0, 1.0});
    ASSERT_EQ(b.roots.size(), 1u);
    EXPECT_EQ(b.roots[0].multiplicity, 2);
    EXPECT_EQ(b.roots[0].location, Location::Outside);
    EXPECT_NEAR(std::abs(b.roots[0].value - 2.0), 0.0, 1e-6);
}

TEST(Roots, RoundTripRandom) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> U(-1.5, 1.5);
    for (int trial = 0; trial < 40; ++trial) {
        const int deg = 1 + trial % 12;
        std::vector<cplx> roots;
        while (static_cast<int>(roots.size()) < deg) {
            const cplx c(U(rng), U(rng));
            bool ok = true;
            for (const auto& r : roots)
                if (std::abs(r - c) < 0.1) ok = false;
            if (ok) roots.push_back(c);
        }
        const auto found = find_roots(Polynomial::from_roots(roots));
        ASSERT_EQ(found.total(), deg);
        for (const auto& r : roots) {
            double best = 1e9;
            for (const auto& f : found.roots) best = std::min(best, std::abs(f.value - r));
            EXPECT_LT(best, 1e-6);
        }
    }
}

TEST(Roots, Classification) {
    EXPECT_EQ(classify(cplx(0.5, 0.0)), Location::Inside);
    EXPECT_EQ(classify(cplx(1.0 + 1e-10, 0.0)), Location::OnCircle);
    EXPECT_EQ(classify(cplx(0.0, 1.01)), Location::Outside);
}

TEST(PartialFractions, Geometric) {
    const auto pf = partial_fractions(Polynomial{1.0}, Polynomial{-2.0, 1.0}, {{2.0, 1, Location::Outside}});
    const CVec c = pf.coefficients(20);
    for (int n = 0; n < 20; ++n) EXPECT_NEAR(std::abs(c(n) + 0.5 * std::pow(0.5, n)), 0.0, 1e-14);
}

TEST(PartialFractions, InsideFactorCancels) {
    const Polynomial num{-0.5, 1.0};
    const Polynomial den = Polynomial{-0.5, 1.0} * Polynomial{-3.0, 1.0};
    const auto pf = partial_fractions(num, den, {{3.0, 1, Location::Outside}});
    ASSERT_EQ(pf.terms.size(), 1u);
    EXPECT_NEAR(std::abs(pf.terms[0].pole - 3.0), 0.0, 1e-12);
    EXPECT_NEAR(std::abs(pf(cplx(0.2, 0.1)) - 1.0 / (cplx(0.2, 0.1) - 3.0)), 0.0, 1e-12);
}

TEST(PartialFractions, NonDivisibleRejected) {
    const Polynomial den = Polynomial{-0.5, 1.0} * Polynomial{-3.0, 1.0};
    EXPECT_THROW(partial_fractions(Polynomial{1.0}, den, {{3.0, 1, Location::Outside}}), DivisibilityError);
}

TEST(PartialFractions, ContourMatchesClosedForm) {
    // f(z) = (z^2 + 1) / ((z - 2)^2 (z + 3)) has a double pole and a simple pole
    auto f = [](cplx z) {
        CVec v(1);
        v(0) = (z * z + 1.0) / ((z - 2.0) * (z - 2.0) * (z + 3.0));
        return v;
    };
    const auto pf = partial_fractions_contour(f, 1, {{2.0, 2, Location::Outside}, {-3.0, 1, Location::Outside}}, 0, 0.5);
    ASSERT_EQ(pf.size(), 1u);
    // exact series: (1 + z^2) * sum (n+1) z^n / 2^(n+2) * sum (-z)^n / 3^(n+1)
    std::vector<double> a(30), b(30), ab(30, 0.0), exact(30, 0.0);
    for (int n = 0; n < 30; ++n) {
        a[n] = (n + 1) / std::pow(2.0, n + 2);
        b[n] = (n % 2 ? -1.0 : 1.0) / std::pow(3.0, n + 1);
    }
    for (int n = 0; n < 30; ++n)
        for (int k = 0; k <= n; ++k) ab[n] += a[k] * b[n - k];
    for (int n = 0; n < 30; ++n) exact[n] = ab[n] + (n >= 2 ? ab[n - 2] : 0.0);
    const CVec c = pf[0].coefficients(30);
    for (int n = 0; n < 30; ++n) EXPECT_NEAR(std::abs(c(n) - exact[n]), 0.0, 1e-13 * std::max(1.0, std::abs(exact[n])));
    const auto tay = taylor_coefficients(f, 1, 10, 0.5, 128);
    for (int n = 0; n < 10; ++n) EXPECT_NEAR(std::abs(tay[n](0) - exact[n]), 0.0, 1e-11);
    for (const cplx z : {cplx(1.5, 1.0), cplx(-1.0, -2.0), cplx(4.0, 0.5)})
        EXPECT_NEAR(std::abs(pf[0](z) - f(z)(0)), 0.0, 1e-10 * std::abs(f(z)(0)));
}

TEST(PartialFractions, ClosePolesResolvedSeparately) {
    // two simple poles 5e-4 apart share a contour but keep their own residues
    const cplx a = 1.315, b = 1.3155;
    auto f = [&](cplx z) {
        CVec v(2);
        v(0) = 1.0 / (z - a) + 2.0 / (z - b);
        v(1) = 1.0 / (z - a) - 1.0 / (z - b);
        return v;
    };
    const auto pf = partial_fractions_contour(f, 2, {{a, 1, Location::Outside}, {b, 1, Location::Outside}}, -1, 0.5);
    const CVec c0 = pf[0].coefficients(200), c1 = pf[1].coefficients(200);
    for (int n = 0; n < 200; ++n) {
        const cplx ea = -std::pow(a, -(n + 1)), eb = -std::pow(b, -(n + 1));
        EXPECT_NEAR(std::abs(c0(n) - (ea + 2.0 * eb)), 0.0, 1e-10 * std::abs(ea)) << n;
        EXPECT_NEAR(std::abs(c1(n) - (ea - eb)), 0.0, 1e-10 * std::abs(ea)) << n;
    }
}

TEST(PartialFractions, CoincidentPolesMerge) {
    const cplx a = 1.5;
    auto f = [&](cplx z) {
        CVec v(1);
        v(0) = 1.0 / ((z - a) * (z - a));
        return v;
    };
    // a numerically split double root
    const auto pf = partial_fractions_contour(
        f, 1, {{a + 1e-10, 1, Location::Outside}, {a - 1e-10, 1, Location::Outside}}, -1, 0.5);
    const CVec c = pf[0].coefficients(50);
    for (int n = 0; n < 50; ++n) EXPECT_NEAR(std::abs(c(n) - (n + 1.0) * std::pow(a, -(n + 2))), 0.0, 1e-12) << n;
}

TEST(PartialFractions, CauchyDerivatives) {
    auto f = [](cplx z) {
        CVec v(1);
        v(0) = std::exp(2.0 * z);
        return v;
    };
    const auto d = cauchy_derivatives(f, 0.3, 0.2, 3);
    for (int k = 0; k <= 3; ++k) EXPECT_NEAR(std::abs(d[k](0) - std::pow(2.0, k) * std::exp(0.6)), 0.0, 1e-10);
}

class ReferenceCharacteristic : public ::testing::TestWithParam<Policy> {};

TEST_P(ReferenceCharacteristic, DeterminantRootsAndDegree) {
    const auto q = testmodels::reference_model(GetParam());
    const auto ch = build_characteristic(q);
    EXPECT_EQ(ch.degree_bound_M, 30);
    EXPECT_LE(ch.det_M.degree(), 30);
    const cplx z0(0.37, 0.2);
    const cplx direct = ch.M(z0).determinant();
    EXPECT_NEAR(std::abs(ch.det_M(z0) - direct), 0.0, 1e-8 * std::abs(direct));

    for (const RootSet* rs : {&ch.roots_M, &ch.roots_P}) {
        EXPECT_EQ(rs->count(Location::Inside) + rs->count(Location::OnCircle), 18);
        int at_one = 0, other_circle = 0;
        for (const auto& r : rs->roots) {
            if (std::abs(r.value - 1.0) < 1e-6) at_one += r.multiplicity;
            else if (r.location == Location::OnCircle) ++other_circle;
        }
        EXPECT_EQ(at_one, 1);
        EXPECT_EQ(other_circle, 0);
        EXPECT_EQ(rs->total(), rs == &ch.roots_M ? ch.det_M.degree() : ch.P.degree());
    }
}

TEST(Characteristic, MM1Scalar) {
    const double lam = 0.6, mu = 1.0;
    const auto q = testmodels::mm1(lam, mu, 5.0);
    const auto ch = build_characteristic(q);
    // z (mu + lam - lam z) - mu after clearing the kernel denominator
    for (const cplx z : {cplx(0.3, 0.1), cplx(-0.7, 0.4)}) {
        const cplx expect = z * (mu + lam - lam * z) - mu;
        EXPECT_NEAR(std::abs(ch.det_M(z) - expect), 0.0, 1e-12);
    }
    std::vector<double> mods;
    for (const auto& r : ch.roots_M.roots) mods.push_back(r.value.real());
    std::sort(mods.begin(), mods.end());
    ASSERT_EQ(mods.size(), 2u);
    EXPECT_NEAR(mods[0], 1.0, 1e-10);
    EXPECT_NEAR(mods[1], mu / lam, 1e-10);
}

INSTANTIATE_TEST_SUITE_P(Policies, ReferenceCharacteristic, ::testing::Values(Policy::SV, Policy::MV),
                         [](const auto& info) { return std::string(policy_name(info.param)); });
