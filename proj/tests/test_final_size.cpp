#include "epi/final_size.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <random>

using namespace epi;
using namespace epi::testing;

namespace {

TwoBlockSpec counterexample_spec(double beta2 = 4.0, double s2 = 0.5) {
    TwoBlockSpec tb;
    tb.alpha1 = tb.alpha2 = 1.0;
    tb.beta1 = 3.0;
    tb.beta2 = beta2;
    tb.beta12 = 0.5;
    tb.gamma1 = tb.gamma2 = 1.0;
    tb.S1 = 1.0 - s2 - 0.05;
    tb.I1 = 0.05;
    tb.S2 = s2;
    return tb;
}

}  // namespace

TEST_CASE("residual") {
    Scenario s = make_homogeneous(41);
    FinalSizeProblem problem = make_problem(s);

    SUBCASE("disease-free fixed point") {
        Scenario clean = make_homogeneous(41, 2.0, 1.0, 1.0, 1.0, 0.0);
        FinalSizeProblem p0 = make_problem(clean);
        CHECK(residual(p0, clean.initial.S).cwiseAbs().maxCoeff() < 1e-14);
    }
    SUBCASE("homogeneous residual equals the scalar identity mismatch") {
        Field trial = Field::Constant(41, 0.3);
        Field r = residual(problem, trial);
        const double scalar = std::log(0.3) - 2.0 * 0.3 -
                              (std::log(0.99) - 2.0 * (0.99 + 0.01));
        for (Eigen::Index i = 0; i < 41; ++i)
            CHECK(r(i) == doctest::Approx(scalar).epsilon(1e-12));
    }
    SUBCASE("nonpositive field rejected") {
        CHECK_THROWS_AS(residual(problem, Field::Zero(41)), std::domain_error);
    }
}

TEST_CASE("solve_monotone") {
    SUBCASE("disease-free problem returns S0 at once") {
        Scenario s = make_homogeneous(41, 2.0, 1.0, 1.0, 1.0, 0.0);
        FinalSizeSolution sol = solve_monotone(make_problem(s));
        CHECK((sol.s_infinity - s.initial.S).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(sol.iterations <= 2);
    }
    SUBCASE("homogeneous case against the scalar bisection oracle") {
        Scenario s = make_homogeneous();
        FinalSizeSolution sol = solve_monotone(make_problem(s));
        const double oracle = scalar_final_size(2.0, 1.0, 0.99, 0.0, 0.01);
        CHECK(integrate(s.params.domain, sol.s_infinity) ==
              doctest::Approx(oracle).epsilon(1e-8));
        CHECK(sol.residual <= 1e-10);
        CHECK(sol.radius_at_limit < 1.0);
        CHECK(sol.attack_rate > 0.0);
    }
    SUBCASE("ordering: 0 < S_infinity <= S0 and subcritical limit") {
        Scenario s = make_rank1();
        FinalSizeSolution sol = solve_monotone(make_problem(s));
        CHECK((sol.s_infinity.array() > 0.0).all());
        CHECK((sol.s_infinity.array() <= s.initial.S.array() + 1e-15).all());
        CHECK(sol.radius_at_limit < 1.0);
    }
}

TEST_CASE("two-block branches order the monotone limit") {
    // the upper branch is a repelling fixed point of the iteration map
    // (slope b2 S2 = 2 > 1 in block 2), so roundoff drives solve_monotone to
    // the attracting lower branch; the enumerated upper branch dominates it
    Scenario s = make_two_block_scenario(counterexample_spec());
    std::vector<FinalSizeSolution> sols = enumerate_block_solutions(s);
    REQUIRE(sols.size() == 2);
    FinalSizeSolution mono = solve_monotone(make_problem(s));
    CHECK(block_values(s.params.domain, mono).s2_infinity ==
          doctest::Approx(block_values(s.params.domain, sols[1]).s2_infinity)
              .epsilon(1e-9));
    CHECK((mono.s_infinity.array() <=
           sols[0].s_infinity.array() + 1e-9).all());
}

TEST_CASE("solve_contraction") {
    Scenario s = make_homogeneous();
    LongTimeResult limit = long_time_limit(s);
    FinalSizeProblem problem = make_problem(s);

    SUBCASE("agrees with the monotone solver from a herd-immunity baseline") {
        problem.baseline_state = baseline_below(limit.trajectory, s.params);
        FinalSizeSolution contraction = solve_contraction(problem);
        FinalSizeSolution monotone = solve_monotone(problem);
        CHECK((contraction.s_infinity - monotone.s_infinity)
                  .cwiseAbs().maxCoeff() <= 1e-8);
        REQUIRE(contraction.contraction_factor.has_value());
        const double r_t = radius_at(s.params, problem.baseline_state->S);
        CHECK(*contraction.contraction_factor <= r_t + 1e-9);
        CHECK(contraction.residual <= 1e-10);
    }
    SUBCASE("near-final baseline converges immediately") {
        problem.baseline_state = limit.state;
        FinalSizeSolution sol = solve_contraction(problem);
        CHECK(sol.iterations < 60);
        CHECK(sol.residual <= 1e-10);
    }
    SUBCASE("supercritical baseline is rejected") {
        problem.baseline_state = s.initial;  // r = 1.98 > 1
        CHECK_THROWS(solve_contraction(problem));
    }
    SUBCASE("missing baseline is rejected") {
        FinalSizeProblem bare = make_problem(s);
        CHECK_THROWS_AS(solve_contraction(bare), std::invalid_argument);
    }
}

TEST_CASE("contraction estimate on random pairs in K") {
    Scenario s = make_rank1();
    LongTimeResult limit = long_time_limit(s);
    EpidemicState base = baseline_below(limit.trajectory, s.params);
    const Field phi_t = phi_field(s.params, base);
    SpectralResult spec = spectral_radius(build_operator(s.params, base.S),
                                          1e-12, 100000, &s.initial.S);
    const Field weight = spec.psi.cwiseProduct(base.S);
    auto norm_t = [&](const Field& f) {
        return integrate(s.params.domain, weight.cwiseProduct(f.cwiseAbs()));
    };
    auto F = [&](const Field& v) -> Field {
        return beta_over_gamma(
            s.params, base.S.cwiseProduct((v - phi_t).array().exp().matrix()));
    };
    std::mt19937 rng(47);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        Field u_fld(phi_t.size()), v_fld(phi_t.size());
        for (Eigen::Index i = 0; i < phi_t.size(); ++i) {
            u_fld(i) = unit(rng) * phi_t(i);
            v_fld(i) = unit(rng) * phi_t(i);
        }
        CHECK(norm_t(F(u_fld) - F(v_fld)) <=
              spec.radius * norm_t(u_fld - v_fld) + 1e-10);
    }
}

TEST_CASE("enumerate_block_solutions") {
    SUBCASE("triangular kernel yields two residual-verified solutions") {
        Scenario s = make_two_block_scenario(counterexample_spec());
        std::vector<FinalSizeSolution> sols = enumerate_block_solutions(s);
        REQUIRE(sols.size() == 2);
        BlockFinalSize a = block_values(s.params.domain, sols[0]);
        BlockFinalSize b = block_values(s.params.domain, sols[1]);
        CHECK(a.s2_infinity == doctest::Approx(0.5));  // untouched branch
        CHECK(b.s2_infinity < a.s2_infinity);
        CHECK(std::abs(a.s2_infinity - b.s2_infinity) >= 0.01);
        for (const FinalSizeSolution& sol : sols)
            CHECK(sol.residual <= 1e-9);
    }
    SUBCASE("block-2 root against a scalar bisection oracle (beta2=3)") {
        Scenario s = make_two_block_scenario(counterexample_spec(3.0));
        std::vector<FinalSizeSolution> sols = enumerate_block_solutions(s);
        REQUIRE(sols.size() == 2);
        // ln s - 3 s = ln 0.5 - 1.5, second root below the crest at 1/3
        auto g = [](double v) {
            return std::log(v) - 3.0 * v - (std::log(0.5) - 1.5);
        };
        double lo = 1e-12, hi = 1.0 / 3.0;
        for (int iter = 0; iter < 200; ++iter) {
            const double mid = 0.5 * (lo + hi);
            (g(mid) < 0.0 ? lo : hi) = mid;
        }
        CHECK(block_values(s.params.domain, sols[1]).s2_infinity ==
              doctest::Approx(0.5 * (lo + hi)).epsilon(1e-9));
    }
    SUBCASE("tangent configuration: S2 at the crest is a double root") {
        // beta2/gamma2 = 2 with S2 = 0.5 puts S2 exactly at the crest of
        // the block-2 identity, so only the trivial branch exists
        Scenario s = make_two_block_scenario(counterexample_spec(2.0));
        std::vector<FinalSizeSolution> sols = enumerate_block_solutions(s);
        CHECK(sols.size() == 1);
        CHECK(block_values(s.params.domain, sols[0]).s2_infinity ==
              doctest::Approx(0.5));
    }
    SUBCASE("initial infection in block 2 collapses to one solution") {
        TwoBlockSpec tb = counterexample_spec();
        tb.I2 = 0.01;
        tb.S1 -= 0.01;  // keep unit mass
        Scenario s = make_two_block_scenario(tb);
        CHECK(enumerate_block_solutions(s).size() == 1);
    }
    SUBCASE("non-triangular kernel rejected") {
        TwoBlockSpec tb = counterexample_spec();
        tb.beta21 = 0.1;
        Scenario s = make_two_block_scenario(tb);
        CHECK_THROWS_AS(enumerate_block_solutions(s), std::invalid_argument);
    }
}

TEST_CASE("dynamics consistency and grid convergence") {
    SUBCASE("long-time limit matches the fixed point") {
        Scenario s = make_rank1(61);
        LongTimeResult limit = long_time_limit(s);
        FinalSizeSolution sol = solve_monotone(make_problem(s));
        CHECK((limit.state.S - sol.s_infinity).cwiseAbs().maxCoeff() <= 1e-6);
    }
    SUBCASE("attack rate converges at second order in the grid") {
        auto attack = [](Eigen::Index n) {
            Scenario s = make_rank1(n);
            return solve_monotone(make_problem(s)).attack_rate;
        };
        const double a1 = attack(21), a2 = attack(41), a3 = attack(81);
        const double ratio = (a1 - a2) / (a2 - a3);
        CHECK(ratio > 2.5);
        CHECK(ratio < 6.0);
    }
}
