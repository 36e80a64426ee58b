#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "bulkvac/config.hpp"
#include "bulkvac/solver.hpp"
#include "support/brute.hpp"
#include "support/models.hpp"

using namespace bulkvac;

namespace {

const Solution& reference(Policy p) {
    static const Solution sv = solve(testmodels::reference_model(Policy::SV));
    static const Solution mv = solve(testmodels::reference_model(Policy::MV));
    return p == Policy::SV ? sv : mv;
}

double max_abs(const RowVec& v) { return v.cwiseAbs().maxCoeff(); }

// Worst absolute gap between solver tables and the truncated chain, up to n_max.
struct Gaps {
    double embedded = 0.0, arbitrary = 0.0;
};

Gaps against_brute(const QueueModel& q, const Solution& s, const brute::Result& b, int n_max) {
    Gaps g;
    const int h = q.h, H = q.H;
    for (int n = 0; n <= n_max; ++n) {
        for (int r = h; r <= H; ++r) {
            g.embedded = std::max(g.embedded, max_abs(s.embedded.xi_plus[r - h][n] - b.busy_plus[r - h][n]));
            g.arbitrary = std::max(g.arbitrary, max_abs(s.arbitrary.xi[r - h][n] - b.busy[r - h][n]));
        }
        for (int k = 0; k < h; ++k) {
            g.embedded = std::max(g.embedded, max_abs(s.embedded.gamma_plus[k][n] - b.vac_plus[k][n]));
            g.arbitrary = std::max(g.arbitrary, max_abs(s.arbitrary.gamma[k][n] - b.vac[k][n]));
        }
    }
    for (int n = 0; n < static_cast<int>(s.arbitrary.R_dormant.size()); ++n)
        g.arbitrary = std::max(g.arbitrary, max_abs(s.arbitrary.R_dormant[n] - b.dormant[n]));
    return g;
}

}  // namespace

// Frozen from an independent implementation of the same pipeline.
TEST(Reference, SingleVacationValues) {
    const auto& s = reference(Policy::SV);
    const auto& r = s.report;
    EXPECT_NEAR(s.sigma.E, 0.1205442, 1e-6);
    EXPECT_NEAR(r.L_q, 48.59958, 5e-4);
    EXPECT_NEAR(r.L_s, 51.18510, 5e-4);
    EXPECT_NEAR(r.W_q, 0.86017, 1e-5);
    EXPECT_NEAR(r.W_s, 0.90593, 1e-5);
    EXPECT_NEAR(r.L_ser, 8.14118, 1e-4);
    EXPECT_NEAR(r.L_vac, 0.83748, 1e-4);
    EXPECT_NEAR(r.P_dor, 0.0031862, 1e-6);
    EXPECT_NEAR(r.P_busy, 0.317585, 1e-6);
    const double xi9[] = {0.00283110, 0.00626003, 0.00887635, 0.01034670, 0.01086234};
    for (int n = 0; n < 5; ++n) EXPECT_NEAR(s.embedded.xi_plus[4][n](0), xi9[n], 2e-8) << n;
    const double totals[] = {0.035347, 0.026521, 0.024203, 0.018155, 0.021400,
                             0.016054, 0.018776, 0.014086, 0.363290, 0.272507};
    for (int r2 = 5; r2 <= 9; ++r2) {
        RowVec t = RowVec::Zero(2);
        for (int n = 0; n <= s.embedded.n_trunc; ++n) t += s.embedded.xi_plus[r2 - 5][n];
        EXPECT_NEAR(t(0), totals[2 * (r2 - 5)], 1e-6);
        EXPECT_NEAR(t(1), totals[2 * (r2 - 5) + 1], 1e-6);
    }
}

TEST(Reference, MultipleVacationValues) {
    const auto& r = reference(Policy::MV).report;
    EXPECT_NEAR(r.L_q, 48.31942, 5e-4);
    EXPECT_NEAR(r.L_s, 50.88895, 5e-4);
    EXPECT_NEAR(r.W_q, 0.85521, 1e-5);
    EXPECT_NEAR(r.L_ser, 8.22363, 1e-4);
    EXPECT_NEAR(r.L_vac, 0.88708, 1e-4);
    EXPECT_NEAR(r.P_busy, 0.312458, 1e-6);
    EXPECT_NEAR(r.P_idle, 0.687542, 1e-6);
    EXPECT_DOUBLE_EQ(r.P_dor, 0.0);
}

TEST(Reference, DesignatedCells) {
    const auto& sv = reference(Policy::SV);
    const auto& mv = reference(Policy::MV);
    EXPECT_NEAR(sv.embedded.xi_plus[4][2](0), 0.00888, 5e-6);
    EXPECT_NEAR(sv.embedded.gamma_plus[4][4](0), 0.00218, 5e-6);
    EXPECT_NEAR(sv.embedded.gamma_plus[4][4](1), 0.00156, 5e-6);
    EXPECT_NEAR(mv.embedded.gamma_plus[4][4](0), 0.00272, 5e-6);
    EXPECT_NEAR(sv.arbitrary.R_dormant[4](0), 0.00126, 5e-6);
    EXPECT_NEAR(mv.arbitrary.gamma[4][4](0), 0.00388, 5e-6);
    EXPECT_NEAR(sv.report.P_dor, 0.0032, 2e-4);
    for (int n = 31; n <= sv.embedded.n_trunc; ++n) EXPECT_LE(sv.embedded.xi_plus[0][n](0), 5e-6) << n;
}

TEST(Reference, SingleVacationTerminationsFeedFromServiceCompletions) {
    // SV: a vacation that ends with k waiting started with k waiting and saw no arrival.
    const auto q = testmodels::reference_model(Policy::SV);
    const auto& s = reference(Policy::SV);
    for (int k = 0; k < q.h; ++k) {
        const auto kc = kernel_coefficients_adaptive(q.vacation(k), q.arrivals);
        const RowVec expect = s.embedded.xi_total(k) * kc.at(0);
        EXPECT_LT(max_abs(s.embedded.gamma_plus[k][k] - expect), 1e-12) << k;
    }
}

TEST(Reference, MultipleVacationHasNoDormancy) {
    const auto& s = reference(Policy::MV);
    EXPECT_TRUE(s.arbitrary.R_dormant.empty());
    EXPECT_NEAR(s.sigma.E, s.sigma.w_hat, 1e-15);
}

TEST(Reference, DormancyFlowBalance) {
    // Leaving dormancy at level n: R(n) D e = sum_{m<=n} gamma+(m) e / E, cumulated.
    const auto q = testmodels::reference_model(Policy::SV);
    const auto& s = reference(Policy::SV);
    const Vec e = Vec::Ones(2);
    double entered = 0.0;
    for (int n = 0; n < q.h; ++n) {
        entered += s.embedded.gamma_total(n).sum() / s.sigma.E;
        const double out = (s.arbitrary.R_dormant[n] * q.arrivals.D * e)(0);
        EXPECT_NEAR(out, entered, 1e-12) << n;
    }
}

class PolicyProperties : public ::testing::TestWithParam<Policy> {};

TEST_P(PolicyProperties, Normalizations) {
    const auto& s = reference(GetParam());
    EXPECT_NEAR(s.embedded_total, 1.0, 1e-8);
    EXPECT_NEAR(s.arbitrary.total, 1.0, 1e-7);
    const auto& r = s.report;
    EXPECT_NEAR(r.P_dor + r.P_busy + r.P_vac, 1.0, 1e-7);
    EXPECT_DOUBLE_EQ(r.W_q, r.L_q / r.lambda);
    EXPECT_DOUBLE_EQ(r.W_s, r.L_s / r.lambda);
    EXPECT_NEAR(s.sigma.sigma_inverse * s.sigma.E, 1.0, 1e-12);
    EXPECT_EQ(s.arbitrary.clamped, 0);
}

TEST_P(PolicyProperties, CrossRouteIdentity) {
    const auto q = testmodels::reference_model(GetParam());
    const auto& s = reference(GetParam());
    const KernelTable kt = build_kernels(q, {});
    const VacationMap vmap = vacation_termination(q, kt);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    for (int i = 0; i < 10; ++i) {
        const cplx z = std::polar(0.9 * std::sqrt(U(rng)), 2.0 * M_PI * U(rng));
        CRowVec from_tables = CRowVec::Zero(2);
        cplx zn = 1.0;
        for (int n = 0; n <= s.embedded.n_trunc; ++n, zn *= z)
            from_tables += s.embedded.xi_total(n).cast<cplx>() * zn;
        const CRowVec direct = psi_plus(q, vmap, s.boundary.x, z);
        EXPECT_LT((from_tables - direct).norm(), 1e-7 * direct.norm()) << z;
    }
}

TEST_P(PolicyProperties, ComponentChoiceAgrees) {
    const auto& s = reference(GetParam());
    EXPECT_LT(s.boundary.component_gap, 1e-6);
    SolverOptions o;
    o.component = 1;
    const auto other = solve(testmodels::reference_model(GetParam()), o);
    EXPECT_NEAR(other.report.L_q, s.report.L_q, 1e-6 * s.report.L_q);
}

TEST_P(PolicyProperties, GeometricDecay) {
    // A pole of order k at modulus 1/q gives coefficients ~ n^(k-1) q^n, so the ratio is q (1 + (k-1)/n).
    const auto q = testmodels::reference_model(GetParam());
    const auto& s = reference(GetParam());
    const double beta = s.ch.min_kernel_pole;
    int order = 1;
    auto scan = [&](const PhaseType& law) {
        for (const auto& r : kernel_poles(law, q.arrivals))
            if (std::abs(std::abs(r.value) - beta) < 1e-9) order = std::max(order, r.multiplicity);
    };
    for (int r = q.h; r <= q.H; ++r) scan(q.service(r));
    for (int k = 0; k < q.h; ++k) scan(q.vacation(k));
    EXPECT_EQ(order, 2);
    const auto& E = s.embedded;
    for (int n = 60; n < E.n_trunc - 1; ++n) {
        const double a = E.xi_total(n).sum(), b = E.xi_total(n + 1).sum();
        EXPECT_LE(b / a, (1.0 + (order - 1.0) / n) / beta + 1e-6) << n;
    }
    const int n = E.n_trunc - 2;
    EXPECT_GT(E.xi_total(n + 1).sum() / E.xi_total(n).sum(), 1.0 / beta);
}

TEST_P(PolicyProperties, AgreesWithTruncatedChain) {
    const auto q = testmodels::reference_model(GetParam());
    const auto& s = reference(GetParam());
    const auto b = brute::solve(q, 1800);
    ASSERT_LT(b.boundary_mass, 1e-11);
    const auto g = against_brute(q, s, b, 400);
    EXPECT_LT(g.embedded, 1e-9);
    EXPECT_LT(g.arbitrary, 1e-9);
    EXPECT_NEAR(s.sigma.sigma_inverse, b.epoch_rate, 1e-8 * b.epoch_rate);
}

INSTANTIATE_TEST_SUITE_P(Policies, PolicyProperties, ::testing::Values(Policy::SV, Policy::MV),
                         [](const auto& info) { return std::string(policy_name(info.param)); });

TEST(MM1, EmbeddedGeometricLaw) {
    const double lam = 0.6, mu = 1.0, rho = lam / mu;
    const auto s = solve(testmodels::mm1(lam, mu));
    double total = 0.0;
    for (int n = 0; n <= s.embedded.n_trunc; ++n) total += s.embedded.xi_total(n).sum();
    for (int n = 0; n < 40; ++n)
        EXPECT_NEAR(s.embedded.xi_total(n).sum() / total, (1 - rho) * std::pow(rho, n), 1e-6) << n;
    EXPECT_NEAR(s.report.L_q, rho * rho / (1 - rho), 1e-6);
    EXPECT_NEAR(s.report.P_busy, rho, 1e-6);
}

TEST(MM1, BothPoliciesCoincideInTheLimit) {
    const auto sv = solve(testmodels::mm1(0.5, 1.0, 1e9, Policy::SV));
    const auto mv = solve(testmodels::mm1(0.5, 1.0, 1e9, Policy::MV));
    EXPECT_NEAR(sv.report.L_q, mv.report.L_q, 1e-6);
}

TEST(Stability, RhoAtLeastOneRejected) {
    EXPECT_THROW(solve(testmodels::mm1(1.0, 1.0)), InstabilityError);
    EXPECT_THROW(solve(testmodels::mm1(1.2, 1.0)), InstabilityError);
}

TEST(Limits, FastVacationsApproachZeroVacationQueue) {
    auto fast = [](double scale) {
        auto q = testmodels::reference_model(Policy::MV);
        for (auto& v : q.vacations) v = validate_ph(v.alpha, v.T * scale);
        return solve(q).report.L_q;
    };
    const double a = fast(1e3), b = fast(1e6);
    EXPECT_LT(std::abs(a - b), 1e-3);
}

TEST(Limits, QueueGrowsWithArrivalScale) {
    double prev = 0.0;
    for (double l : {1.0, 1.5, 2.0, 2.5, 3.0}) {
        auto q = testmodels::reference_model(Policy::SV);
        q.arrivals = validate_map(l * q.arrivals.C, l * q.arrivals.D);
        const double Lq = solve(q).report.L_q;
        EXPECT_GT(Lq, prev) << l;
        prev = Lq;
    }
}

TEST(Truncation, FixedLevelLeavesResidual) {
    SolverOptions o;
    o.n_trunc = 10;
    const auto s = solve(testmodels::reference_model(Policy::SV), o);
    EXPECT_EQ(s.embedded.n_trunc, 10);
    EXPECT_GT(s.embedded.truncation_residual, 1e-3);
    EXPECT_LT(s.embedded_total, 1.0 - 1e-3);
    EXPECT_FALSE(s.warnings.empty());
}

class RandomModels : public ::testing::TestWithParam<int> {};

TEST_P(RandomModels, AgreeWithTruncatedChain) {
    testmodels::RandomSpec spec{};
    const auto q = testmodels::random_model(1000 + GetParam(), &spec);
    SCOPED_TRACE(::testing::Message() << "m=" << spec.m << " h=" << spec.h << " H=" << spec.H << " rho=" << spec.rho
                                      << " " << policy_name(q.policy));
    const auto s = solve(q);
    EXPECT_NEAR(s.embedded_total, 1.0, 1e-8);
    EXPECT_NEAR(s.arbitrary.total, 1.0, 1e-7);
    EXPECT_NEAR(s.report.P_dor + s.report.P_busy + s.report.P_vac, 1.0, 1e-7);

    const int nmax = s.embedded.n_trunc + 40;
    const auto b = brute::solve(q, nmax);
    ASSERT_LT(b.boundary_mass, 1e-9);
    const auto g = against_brute(q, s, b, s.embedded.n_trunc);
    EXPECT_LT(g.embedded, 1e-8);
    EXPECT_LT(g.arbitrary, 1e-8);
    EXPECT_NEAR(s.sigma.sigma_inverse, b.epoch_rate, 1e-7 * b.epoch_rate);
}

INSTANTIATE_TEST_SUITE_P(Seeds, RandomModels, ::testing::Range(0, 25));

TEST(MixedLaws, ShippedToyModelAgreesWithTruncatedChain) {
    for (Policy p : {Policy::SV, Policy::MV}) {
        auto q = load_config(BULKVAC_SOURCE_DIR "/configs/toy.json").model;
        q.policy = p;
        const auto s = solve(q);
        const auto b = brute::solve(q, s.embedded.n_trunc + 60);
        const auto g = against_brute(q, s, b, s.embedded.n_trunc);
        EXPECT_LT(g.embedded, 1e-9) << policy_name(p);
        EXPECT_LT(g.arbitrary, 1e-9) << policy_name(p);
        EXPECT_NEAR(s.sigma.sigma_inverse, b.epoch_rate, 1e-8 * b.epoch_rate);
    }
}
