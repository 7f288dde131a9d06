#include "epi/reduced.hpp"

#include "epi/final_size.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

using namespace epi;
using namespace epi::testing;

namespace {

/// Separable rank-2 SIR scenario: beta = b1 p1 + b2 p2, constant recovery.
Scenario make_rank2(Eigen::Index n = 61) {
    TraitDomain domain = TraitDomain::interval(0.0, 1.0, n);
    Field b1(n), p1(n), b2(n), p2(n), i0(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double x = domain.nodes()(i);
        b1(i) = 1.5 + x;
        p1(i) = 1.0;
        b2(i) = 0.8 * (1.0 + std::cos(M_PI * x));
        p2(i) = 0.4 + 0.6 * x;
        i0(i) = 0.01 * (1.0 + x);
    }
    RankNKernel rk;
    rk.beta = {b1, b2};
    rk.p = {p1, p2};
    Scenario s;
    s.params = ModelParams::make(domain, Field::Constant(n, 1.0),
                                 Field::Constant(n, 1.0), rk.to_dense(domain), rk);
    s.initial.S = Field::Constant(n, 0.98);
    s.initial.E = Field::Zero(n);
    s.initial.I = i0;
    s.initial.R = Field::Zero(n);
    s.name = "rank2";
    return s;
}

/// Randomized rank-1 scenario with positive smooth factors.
Scenario random_rank1(std::mt19937& rng, Eigen::Index n = 31) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    TraitDomain domain = TraitDomain::interval(0.0, 1.0, n);
    const double c1 = 0.5 + 2.0 * unit(rng), c2 = unit(rng);
    const double d1 = 0.3 + unit(rng), d2 = unit(rng);
    Field b(n), p(n), i0(n), s0(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double x = domain.nodes()(i);
        b(i) = c1 * (1.0 + 0.8 * c2 * std::sin(M_PI * x));
        p(i) = d1 * (1.0 + 0.7 * d2 * std::cos(M_PI * x));
        i0(i) = 0.01 * (1.0 + 0.5 * unit(rng));
        s0(i) = 0.9 + 0.09 * unit(rng);
    }
    RankNKernel rk;
    rk.beta = {b};
    rk.p = {p};
    Scenario s;
    s.params = ModelParams::make(domain, Field::Constant(n, 1.0),
                                 Field::Constant(n, 1.0), rk.to_dense(domain), rk);
    s.initial.S = s0;
    s.initial.E = Field::Zero(n);
    s.initial.I = i0;
    s.initial.R = Field::Zero(n);
    s.name = "random_rank1";
    return s;
}

}  // namespace

TEST_CASE("rank1_eigen_elements") {
    SUBCASE("unit coefficients on the unit interval give r = 1") {
        Scenario s = make_homogeneous(41, 1.0, 1.0);
        SpectralResult res = rank1_eigen_elements(s.params, Field::Ones(41));
        CHECK(res.radius == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(res.iterations == 0);
        CHECK(res.phi.maxCoeff() - res.phi.minCoeff() < 1e-14);
        for (Eigen::Index i = 0; i < 41; ++i)
            CHECK(res.psi(i) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("matches the dense power iteration") {
        Scenario s = make_rank1(61);
        SpectralResult closed = rank1_eigen_elements(s.params, s.initial.S);
        SpectralResult dense = spectral_radius(
            build_operator(s.params, s.initial.S), 1e-13, 100000, &s.initial.S);
        CHECK(closed.radius == doctest::Approx(dense.radius).epsilon(1e-10));
        CHECK((closed.phi - dense.phi).cwiseAbs().maxCoeff() <= 1e-9);
        CHECK((closed.psi - dense.psi).cwiseAbs().maxCoeff() <= 1e-9);
        CHECK(closed.residual <= 1e-12);
        CHECK(closed.adjoint_residual <= 1e-12);
    }
    SUBCASE("vanishing susceptible field is degenerate") {
        Scenario s = make_rank1(21);
        SpectralResult res = rank1_eigen_elements(s.params, Field::Zero(21));
        CHECK(res.degenerate);
        CHECK(res.radius == 0.0);
    }
    SUBCASE("kernel without a separable declaration is rejected") {
        std::mt19937 rng(11);
        Scenario s = make_random_scenario(rng);
        CHECK_THROWS_AS(rank1_eigen_elements(s.params, s.initial.S),
                        std::invalid_argument);
    }
}

TEST_CASE("rankN_eigen") {
    SUBCASE("rank 1 reduces to the closed form") {
        Scenario s = make_rank1(41);
        RankNEigen red = rankN_eigen(s.params, s.initial.S);
        SpectralResult closed = rank1_eigen_elements(s.params, s.initial.S);
        CHECK(red.matrix.entries.rows() == 1);
        CHECK(red.spectral.radius ==
              doctest::Approx(closed.radius).epsilon(1e-12));
        CHECK((red.spectral.phi - closed.phi).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK((red.spectral.psi - closed.psi).cwiseAbs().maxCoeff() <= 1e-10);
    }
    SUBCASE("rank 2 against the dense operator") {
        Scenario s = make_rank2();
        RankNEigen red = rankN_eigen(s.params, s.initial.S);
        SpectralResult dense = spectral_radius(
            build_operator(s.params, s.initial.S), 1e-13, 200000, &s.initial.S);
        CHECK(red.spectral.radius == doctest::Approx(dense.radius).epsilon(1e-9));
        CHECK(red.spectral.residual <= 1e-9);
        CHECK(red.spectral.adjoint_residual <= 1e-9);
        CHECK(red.matrix.residual <= 1e-10);
        // eigen identity of the reduced matrix
        Eigen::VectorXd mx = red.matrix.entries * red.matrix.X;
        CHECK((mx - red.matrix.lambda * red.matrix.X).cwiseAbs().maxCoeff() <=
              1e-10);
    }
}

TEST_CASE("rank1_sir_reduce") {
    Scenario s = make_rank1(61);

    SUBCASE("initial slope equals integral(p I0)") {
        ReducedSystem sys = rank1_sir_reduce(s);
        const double expected = integrate(s.params.domain,
                                          sys.kernel.p[0].cwiseProduct(sys.i0));
        CHECK(sys.mdot(Eigen::VectorXd::Zero(1))(0) ==
              doctest::Approx(expected).epsilon(1e-12));
    }
    SUBCASE("grid SIR matches the reduced reconstruction") {
        ReducedSystem sys = rank1_sir_reduce(s);
        IntegrationControls controls;
        controls.step = 0.002;
        controls.output_every = 0.5;
        Trajectory grid = integrate_sir(s, 10.0, controls);
        ReducedTrajectory red = integrate_reduced(sys, 10.0, controls);
        REQUIRE(grid.states.size() == red.states.size());
        for (size_t k = 0; k < red.states.size(); ++k) {
            Field rebuilt = sys.s_field(red.states[k].m);
            CHECK((grid.states[k].S - rebuilt).cwiseAbs().maxCoeff() <= 1e-7);
        }
        // m is nondecreasing: its slope is a weighted infected mass
        for (size_t k = 1; k < red.states.size(); ++k)
            CHECK(red.states[k].m(0) >= red.states[k - 1].m(0) - 1e-12);
    }
    SUBCASE("no initial infection freezes the system") {
        Scenario clean = s;
        clean.initial.I.setZero();
        ReducedSystem sys = rank1_sir_reduce(clean);
        ReducedTrajectory red = integrate_reduced(sys, 5.0);
        CHECK(red.back().m.cwiseAbs().maxCoeff() <= 1e-14);
        CHECK_THROWS_AS(herd_root_rank1(sys), std::invalid_argument);
    }
    SUBCASE("nonconstant recovery rate rejected") {
        Scenario bad = s;
        Field gamma = bad.params.gamma;
        gamma(3) = 1.5;
        bad.params = ModelParams::make(bad.params.domain, bad.params.alpha,
                                       gamma, bad.params.beta,
                                       *bad.params.low_rank);
        CHECK_THROWS_AS(rank1_sir_reduce(bad), std::invalid_argument);
    }
    SUBCASE("exposed compartment needs the collapse flag") {
        Scenario seir = s;
        seir.initial.E = Field::Constant(61, 0.005);
        CHECK_THROWS_AS(rank1_sir_reduce(seir), std::invalid_argument);
        ReducedSystem sys = rank1_sir_reduce(seir, true);
        CHECK(integrate(s.params.domain, sys.i0) ==
              doctest::Approx(integrate(s.params.domain,
                                        seir.initial.I + seir.initial.E)));
    }
}

TEST_CASE("herd_root_rank1") {
    Scenario s = make_rank1(61);
    ReducedSystem sys = rank1_sir_reduce(s);
    HerdRoot herd = herd_root_rank1(sys);

    SUBCASE("the root is the stationary exposure") {
        MInfinity minf = m_infinity(sys);
        CHECK(minf.stationarity <= 1e-10);
        CHECK(herd.m_h == doctest::Approx(minf.m(0)).epsilon(1e-9));
    }
    SUBCASE("the slope at zero encodes the basic reproduction number") {
        SpectralResult closed = rank1_eigen_elements(s.params, s.initial.S);
        CHECK(herd.r0 == doctest::Approx(closed.radius).epsilon(1e-10));
        CHECK(herd.f_at_zero < herd.target);
        CHECK(herd.m_h > 0.0);
    }
}

TEST_CASE("m_infinity reproduces the final size") {
    SUBCASE("rank 1") {
        Scenario s = make_rank1(61);
        ReducedSystem sys = rank1_sir_reduce(s);
        MInfinity minf = m_infinity(sys);
        FinalSizeSolution fixed = solve_monotone(make_problem(s));
        CHECK((sys.s_field(minf.m) - fixed.s_infinity).cwiseAbs().maxCoeff() <=
              1e-7);
    }
    SUBCASE("rank 2") {
        Scenario s = make_rank2();
        ReducedSystem sys = rankN_sir_reduce(s);
        MInfinity minf = m_infinity(sys);
        CHECK(minf.stationarity <= 1e-10);
        FinalSizeSolution fixed = solve_monotone(make_problem(s));
        CHECK((sys.s_field(minf.m) - fixed.s_infinity).cwiseAbs().maxCoeff() <=
              1e-7);
    }
}

TEST_CASE("rankN_sir_reduce at rank 2 matches the grid SIR run") {
    Scenario s = make_rank2();
    ReducedSystem sys = rankN_sir_reduce(s);
    IntegrationControls controls;
    controls.step = 0.002;
    controls.output_every = 0.5;
    Trajectory grid = integrate_sir(s, 8.0, controls);
    ReducedTrajectory red = integrate_reduced(sys, 8.0, controls);
    REQUIRE(grid.states.size() == red.states.size());
    for (size_t k = 0; k < red.states.size(); ++k) {
        Field rebuilt = sys.s_field(red.states[k].m);
        CHECK((grid.states[k].S - rebuilt).cwiseAbs().maxCoeff() <= 1e-7);
        // ln S = ln S0 - Q along the flow
        Field lhs = grid.states[k].S.array().log().matrix();
        Field rhs = sys.s0.array().log().matrix() - red.states[k].q_field;
        CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-6);
    }
    for (size_t k = 1; k < red.states.size(); ++k)
        CHECK((red.states[k].m - red.states[k - 1].m).minCoeff() >= -1e-12);
}

TEST_CASE("randomized closed form vs dense power iteration") {
    std::mt19937 rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        Scenario s = random_rank1(rng);
        SpectralResult closed = rank1_eigen_elements(s.params, s.initial.S);
        SpectralResult dense = spectral_radius(
            build_operator(s.params, s.initial.S), 1e-13, 100000, &s.initial.S);
        CHECK(closed.radius == doctest::Approx(dense.radius).epsilon(1e-9));
    }
}

TEST_CASE("write_reduced_csv") {
    namespace fs = std::filesystem;
    Scenario s = make_rank2();
    ReducedSystem sys = rankN_sir_reduce(s);
    IntegrationControls controls;
    controls.output_every = 1.0;
    ReducedTrajectory red = integrate_reduced(sys, 3.0, controls);
    const fs::path dir = fs::temp_directory_path() / "epi_reduced_csv";
    fs::create_directories(dir);
    const std::string path = (dir / "m.csv").string();
    write_reduced_csv(red, path);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "t,m_1,m_2");
    size_t lines = 0;
    for (std::string line; std::getline(in, line);) ++lines;
    CHECK(lines == red.states.size());
    fs::remove_all(dir);
}
