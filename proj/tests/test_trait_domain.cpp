#include "epi/trait_domain.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace epi;

TEST_CASE("interval domain basics") {
    TraitDomain d = TraitDomain::interval(0.0, 1.0, 101);
    CHECK(d.kind() == DomainKind::Interval);
    CHECK(d.size() == 101);
    CHECK(d.spacing() == doctest::Approx(0.01));
    CHECK(d.measure() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((d.weights().array() > 0.0).all());
    for (Eigen::Index i = 1; i < d.size(); ++i)
        CHECK(d.nodes()(i) > d.nodes()(i - 1));
    CHECK_THROWS_AS(TraitDomain::interval(0.0, 1.0, 2), std::invalid_argument);
    CHECK_THROWS_AS(TraitDomain::interval(1.0, 0.0, 11), std::invalid_argument);
}

TEST_CASE("discrete domain basics") {
    Field w(2);
    w << 0.3, 0.7;
    TraitDomain d = TraitDomain::discrete(w, {"young", "old"});
    CHECK(d.kind() == DomainKind::Discrete);
    CHECK(d.measure() == doctest::Approx(1.0));
    CHECK(d.labels()[1] == "old");
    CHECK(integrate(d, Field::Ones(2)) == doctest::Approx(1.0));
    Field bad(2);
    bad << 0.3, 0.0;
    CHECK_THROWS_AS(TraitDomain::discrete(bad), std::invalid_argument);
}

TEST_CASE("integrate") {
    TraitDomain d = TraitDomain::interval(0.0, 1.0, 201);
    CHECK(integrate(d, Field::Ones(201)) == doctest::Approx(1.0).epsilon(1e-12));
    // linear integrand is exact for the trapezoid rule
    CHECK(integrate(d, d.nodes()) == doctest::Approx(0.5).epsilon(1e-10));
    CHECK_THROWS_AS(integrate(d, Field::Ones(7)), std::invalid_argument);
}

TEST_CASE("apply_kernel") {
    const Eigen::Index n = 51;
    TraitDomain d = TraitDomain::interval(0.0, 1.0, n);

    SUBCASE("zero kernel") {
        Field out = apply_kernel(d, Kernel::Zero(n, n), Field::Ones(n));
        CHECK(out.cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("constant kernel, constant integrand") {
        Field out = apply_kernel(d, Kernel::Ones(n, n), Field::Constant(n, 3.5));
        for (Eigen::Index i = 0; i < n; ++i)
            CHECK(out(i) == doctest::Approx(3.5).epsilon(1e-12));
    }
    SUBCASE("separable kernel vs brute-force quadrature") {
        Field b(n), p(n), f(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double x = d.nodes()(i);
            b(i) = 1.0 + x * x;
            p(i) = std::exp(-x);
            f(i) = std::sin(3.0 * x);
        }
        Kernel k = b * p.transpose();
        Field fast = apply_kernel(d, k, f);
        for (Eigen::Index i = 0; i < n; ++i) {
            double slow = 0.0;
            for (Eigen::Index j = 0; j < n; ++j)
                slow += d.weights()(j) * k(i, j) * f(j);
            CHECK(fast(i) == doctest::Approx(slow).epsilon(1e-13));
        }
        CHECK((fast - b * integrate(d, p.cwiseProduct(f))).cwiseAbs().maxCoeff()
              < 1e-13);
    }
    SUBCASE("shape mismatch") {
        CHECK_THROWS_AS(apply_kernel(d, Kernel::Ones(3, 3), Field::Ones(n)),
                        std::invalid_argument);
    }
}

TEST_CASE("apply_kernel is linear in the integrand") {
    const Eigen::Index n = 31;
    TraitDomain d = TraitDomain::interval(-1.0, 2.0, n);
    std::mt19937 rng(71);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Kernel k(n, n);
    Field f(n), g(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        f(i) = u(rng);
        g(i) = u(rng);
        for (Eigen::Index j = 0; j < n; ++j) k(i, j) = u(rng);
    }
    const double a = 1.7;
    Field lhs = apply_kernel(d, k, a * f + g);
    Field rhs = a * apply_kernel(d, k, f) + apply_kernel(d, k, g);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() <
          1e-12 * std::max(1.0, lhs.cwiseAbs().maxCoeff()));
}

TEST_CASE("kernel transpose duality under the quadrature pairing") {
    const Eigen::Index n = 31;
    TraitDomain d = TraitDomain::interval(0.0, 2.0, n);
    std::mt19937 rng(72);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Kernel k(n, n);
    Field f(n), g(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        f(i) = u(rng);
        g(i) = u(rng);
        for (Eigen::Index j = 0; j < n; ++j) k(i, j) = u(rng);
    }
    const double lhs = integrate(d, apply_kernel(d, k, f).cwiseProduct(g));
    const double rhs = integrate(d, f.cwiseProduct(apply_kernel(d, Kernel(k.transpose()), g)));
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("trapezoid rule is second order") {
    auto err = [](Eigen::Index n) {
        TraitDomain d = TraitDomain::interval(0.0, 1.0, n);
        Field f = d.nodes().array().exp();
        return std::abs(integrate(d, f) - (std::exp(1.0) - 1.0));
    };
    const double ratio = err(51) / err(101);
    CHECK(ratio > 3.5);
    CHECK(ratio < 4.5);
}
