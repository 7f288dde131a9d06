#pragma once

#include "epi/dynamics.hpp"
#include "epi/model.hpp"
#include "epi/spectral.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace epi::testing {

/// Constant-coefficient SEIR scenario on (0,1); the grid dynamics at every
/// node coincide with the scalar well-mixed model.
inline Scenario make_homogeneous(Eigen::Index n = 101, double beta = 2.0,
                                 double gamma = 1.0, double alpha = 1.0,
                                 double s0 = 0.99, double i0 = 0.01,
                                 double e0 = 0.0) {
    TraitDomain domain = TraitDomain::interval(0.0, 1.0, n);
    RankNKernel rk;
    rk.beta.push_back(Field::Constant(n, beta));
    rk.p.push_back(Field::Constant(n, 1.0));
    Scenario s;
    s.params = ModelParams::make(domain, Field::Constant(n, alpha),
                                 Field::Constant(n, gamma),
                                 Kernel::Constant(n, n, beta), rk);
    s.initial.S = Field::Constant(n, s0);
    s.initial.E = Field::Constant(n, e0);
    s.initial.I = Field::Constant(n, i0);
    s.initial.R = Field::Zero(n);
    s.name = "homogeneous";
    return s;
}

/// Separable kernel b(x) p(y) with heterogeneous susceptibility.
inline Scenario make_rank1(Eigen::Index n = 101) {
    TraitDomain domain = TraitDomain::interval(0.0, 1.0, n);
    Field b(n), p(n), i0(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double x = domain.nodes()(i);
        b(i) = 2.0 + 1.5 * std::sin(M_PI * x);
        p(i) = 1.0;
        i0(i) = 0.01 * (1.0 + 0.5 * std::cos(M_PI * x));
    }
    RankNKernel rk;
    rk.beta.push_back(b);
    rk.p.push_back(p);
    Scenario s;
    s.params = ModelParams::make(domain, Field::Constant(n, 1.0),
                                 Field::Constant(n, 1.0),
                                 rk.to_dense(domain), rk);
    s.initial.S = Field::Constant(n, 0.99);
    s.initial.E = Field::Zero(n);
    s.initial.I = i0;
    s.initial.R = Field::Zero(n);
    s.name = "rank1";
    return s;
}

/// Randomized smooth heterogeneous scenario with strictly positive kernel.
inline Scenario make_random_scenario(std::mt19937& rng, Eigen::Index n = 41) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    TraitDomain domain = TraitDomain::interval(0.0, 1.0, n);
    const double a1 = 0.5 + unit(rng), a2 = 2.0 * M_PI * unit(rng);
    const double g1 = 0.2 + 0.6 * unit(rng), g2 = 2.0 * M_PI * unit(rng);
    const double b0 = 1.0 + 2.0 * unit(rng);
    const double bx = unit(rng), by = unit(rng);
    Field alpha(n), gamma(n), i0(n), s0(n);
    Kernel beta(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double x = domain.nodes()(i);
        alpha(i) = 0.8 + a1 * (1.0 + std::sin(x * 3.0 + a2)) * 0.5;
        gamma(i) = 0.7 + g1 * (1.0 + std::cos(x * 2.0 + g2)) * 0.5;
        i0(i) = 0.005 * (1.0 + 0.8 * std::sin(2.0 * M_PI * x + a2));
        s0(i) = 0.98 * (1.0 + 0.1 * std::cos(M_PI * x + g2));
        for (Eigen::Index j = 0; j < n; ++j) {
            const double y = domain.nodes()(j);
            beta(i, j) = b0 * (1.0 + 0.5 * bx * std::sin(M_PI * x)) *
                         (1.0 + 0.5 * by * std::cos(M_PI * y));
        }
    }
    Scenario s;
    s.params = ModelParams::make(domain, std::move(alpha), std::move(gamma),
                                 std::move(beta));
    s.initial.S = std::move(s0);
    s.initial.E = Field::Zero(n);
    s.initial.I = std::move(i0);
    s.initial.R = Field::Zero(n);
    s.initial = normalize(s.params.domain, s.initial);
    s.name = "random";
    return s;
}

/// Scalar bisection oracle for the classical final size identity
/// S - (g/b) ln S = S0 + E0 + I0 - (g/b) ln S0, root below min(S0, g/b).
inline double scalar_final_size(double beta, double gamma, double s0, double e0,
                                double i0) {
    const double ratio = gamma / beta;
    const double target = s0 + e0 + i0 - ratio * std::log(s0);
    auto g = [&](double s) { return s - ratio * std::log(s) - target; };
    double hi = std::min(s0, ratio);
    if (g(hi) > 0.0) return hi;  // already at or past the crossing
    double lo = hi;
    while (g(lo) < 0.0) lo *= 0.5;
    for (int iter = 0; iter < 200; ++iter) {
        const double mid = 0.5 * (lo + hi);
        (g(mid) < 0.0 ? hi : lo) = mid;
    }
    return 0.5 * (lo + hi);
}

struct ScalarSeir {
    double s, e, i, r;
};

/// Fixed-step RK4 on the scalar SEIR system (the well-mixed reduction).
inline ScalarSeir scalar_seir_run(double beta, double gamma, double alpha,
                                  ScalarSeir y, double t_end, double h) {
    auto f = [&](const ScalarSeir& u) {
        const double force = beta * u.s * u.i;
        return ScalarSeir{-force, force - alpha * u.e, alpha * u.e - gamma * u.i,
                          gamma * u.i};
    };
    auto axpy = [](const ScalarSeir& u, const ScalarSeir& d, double c) {
        return ScalarSeir{u.s + c * d.s, u.e + c * d.e, u.i + c * d.i,
                          u.r + c * d.r};
    };
    const long steps = static_cast<long>(std::ceil(t_end / h));
    const double hs = t_end / static_cast<double>(steps);
    for (long k = 0; k < steps; ++k) {
        const ScalarSeir k1 = f(y);
        const ScalarSeir k2 = f(axpy(y, k1, hs / 2));
        const ScalarSeir k3 = f(axpy(y, k2, hs / 2));
        const ScalarSeir k4 = f(axpy(y, k3, hs));
        y.s += hs / 6 * (k1.s + 2 * k2.s + 2 * k3.s + k4.s);
        y.e += hs / 6 * (k1.e + 2 * k2.e + 2 * k3.e + k4.e);
        y.i += hs / 6 * (k1.i + 2 * k2.i + 2 * k3.i + k4.i);
        y.r += hs / 6 * (k1.r + 2 * k2.r + 2 * k3.r + k4.r);
    }
    return y;
}

/// First stored state with r(K_S) at or below the requested level.
inline EpidemicState baseline_below(const Trajectory& traj,
                                    const ModelParams& params,
                                    double level = 0.95) {
    for (size_t k = 0; k < traj.states.size(); ++k)
        if (radius_at(params, traj.states[k].S) <= level)
            return traj.states[k];
    throw std::runtime_error("no stored state with radius below the level");
}

}  // namespace epi::testing
