#include "epi/reduced.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace epi {

namespace {

const RankNKernel& require_low_rank(const ModelParams& params, const char* what,
                                    int rank = 0) {
    if (!params.low_rank)
        throw std::invalid_argument(std::string(what) +
                                    ": kernel was not declared in separable form");
    if (rank > 0 && params.low_rank->rank() != rank)
        throw std::invalid_argument(std::string(what) + ": kernel rank is " +
                                    std::to_string(params.low_rank->rank()) +
                                    ", expected " + std::to_string(rank));
    return *params.low_rank;
}

double constant_gamma(const ModelParams& params, const char* what) {
    const double g = params.gamma(0);
    const double spread = params.gamma.maxCoeff() - params.gamma.minCoeff();
    if (spread > 1e-12 * std::max(1.0, std::abs(g)))
        throw std::invalid_argument(std::string(what) +
                                    ": requires a constant recovery rate");
    return g;
}

Field direct_residual(const ModelParams& params, const Field& s, double r,
                      const Field& phi) {
    return s.cwiseProduct(beta_over_gamma(params, phi)) - r * phi;
}

Field adjoint_residual_field(const ModelParams& params, const Field& s, double r,
                             const Field& psi) {
    const Field ws = params.domain.weights().cwiseProduct(s);
    return (params.beta.transpose() * ws.cwiseProduct(psi))
               .cwiseQuotient(params.gamma) - r * psi;
}

}  // namespace

SpectralResult rank1_eigen_elements(const ModelParams& params, const Field& s) {
    const RankNKernel& k = require_low_rank(params, "rank1_eigen_elements", 1);
    require_aligned(params.domain, s, "rank1_eigen_elements");
    const Field& b = k.beta[0];
    const Field& p = k.p[0];

    SpectralResult result;
    result.iterations = 0;
    result.radius = integrate(params.domain,
                              p.cwiseProduct(s).cwiseProduct(b).cwiseQuotient(
                                  params.gamma));

    Field phi = b.cwiseProduct(s);
    const double phi_max = phi.cwiseAbs().maxCoeff();
    if (phi_max == 0.0) {
        result.degenerate = true;
        result.radius = 0.0;
        result.phi = Field::Zero(s.size());
        result.psi = Field::Zero(s.size());
        return result;
    }
    result.phi = phi / phi_max;

    Field psi = p.cwiseQuotient(params.gamma);
    const double pairing = integrate(params.domain, psi.cwiseProduct(s));
    if (pairing <= 0.0)
        throw std::runtime_error("rank1_eigen_elements: cannot normalize psi "
                                 "against the supplied susceptible field");
    result.psi = psi / pairing;

    result.residual = direct_residual(params, s, result.radius, result.phi)
                          .cwiseAbs().maxCoeff();
    result.adjoint_residual =
        adjoint_residual_field(params, s, result.radius, result.psi)
            .cwiseAbs().maxCoeff();
    return result;
}

RankNEigen rankN_eigen(const ModelParams& params, const Field& s) {
    const RankNKernel& k = require_low_rank(params, "rankN_eigen");
    require_aligned(params.domain, s, "rankN_eigen");
    const int n = k.rank();

    RankNEigen out;
    out.matrix.entries.resize(n, n);
    const Field weight = s.cwiseQuotient(params.gamma);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            out.matrix.entries(i, j) = integrate(
                params.domain, k.beta[i].cwiseProduct(k.p[j]).cwiseProduct(weight));

    PowerIterationResult right = power_iteration(out.matrix.entries, 1e-14, 200000);
    PowerIterationResult left =
        power_iteration(out.matrix.entries.transpose(), 1e-14, 200000);
    if (!right.converged || !left.converged)
        throw std::runtime_error("rankN_eigen: reduced-matrix iteration stalled");
    out.matrix.lambda = right.eigenvalue;
    out.matrix.X = right.vector;
    out.matrix.Y = left.vector;
    out.matrix.residual =
        (out.matrix.entries * right.vector - right.eigenvalue * right.vector)
            .cwiseAbs().maxCoeff();

    SpectralResult& spec = out.spectral;
    spec.radius = out.matrix.lambda;
    spec.iterations = right.iterations + left.iterations;
    if (right.degenerate) {
        spec.degenerate = true;
        spec.phi = Field::Zero(s.size());
        spec.psi = Field::Zero(s.size());
        return out;
    }

    // the left eigenvector assembles phi, the right one assembles psi
    Field phi = Field::Zero(s.size());
    Field psi = Field::Zero(s.size());
    for (int i = 0; i < n; ++i) {
        phi += out.matrix.Y(i) * k.beta[i].cwiseProduct(s);
        psi += out.matrix.X(i) * k.p[i].cwiseQuotient(params.gamma);
    }
    const double phi_max = phi.cwiseAbs().maxCoeff();
    if (phi_max == 0.0)
        throw std::runtime_error("rankN_eigen: assembled eigenfunction vanishes");
    spec.phi = phi / phi_max;
    const double pairing = integrate(params.domain, psi.cwiseProduct(s));
    if (pairing <= 0.0)
        throw std::runtime_error("rankN_eigen: cannot normalize psi");
    spec.psi = psi / pairing;
    spec.residual = direct_residual(params, s, spec.radius, spec.phi)
                        .cwiseAbs().maxCoeff();
    spec.adjoint_residual =
        adjoint_residual_field(params, s, spec.radius, spec.psi)
            .cwiseAbs().maxCoeff();
    return out;
}

Eigen::VectorXd ReducedSystem::mdot(const Eigen::VectorXd& m) const {
    const Field s = s_field(m);
    Eigen::VectorXd out(rank());
    for (int i = 0; i < rank(); ++i)
        out(i) = target(i) -
                 integrate(params.domain, kernel.p[i].cwiseProduct(s)) -
                 gamma * m(i);
    return out;
}

Field ReducedSystem::q_field(const Eigen::VectorXd& m) const {
    Field q = Field::Zero(s0.size());
    for (int i = 0; i < rank(); ++i) q += m(i) * kernel.beta[i];
    return q;
}

Field ReducedSystem::s_field(const Eigen::VectorXd& m) const {
    return s0.cwiseProduct((-q_field(m)).array().exp().matrix());
}

namespace {

ReducedSystem build_reduced(const Scenario& scenario, bool collapse_exposed,
                            const char* what, int rank) {
    const ModelParams& params = scenario.params;
    const RankNKernel& k = require_low_rank(params, what, rank);

    ReducedSystem sys;
    sys.params = params;
    sys.kernel = k;
    sys.gamma = constant_gamma(params, what);
    sys.s0 = scenario.initial.S;
    sys.i0 = scenario.initial.I;
    if (scenario.initial.E.cwiseAbs().maxCoeff() > 0.0) {
        if (!collapse_exposed)
            throw std::invalid_argument(std::string(what) +
                                        ": scenario has an exposed compartment; "
                                        "pass collapse_exposed to merge it into I");
        sys.i0 += scenario.initial.E;
    }

    sys.target.resize(sys.rank());
    for (int i = 0; i < sys.rank(); ++i)
        sys.target(i) = integrate(params.domain,
                                  k.p[i].cwiseProduct(sys.s0 + sys.i0));
    return sys;
}

}  // namespace

ReducedSystem rank1_sir_reduce(const Scenario& scenario, bool collapse_exposed) {
    return build_reduced(scenario, collapse_exposed, "rank1_sir_reduce", 1);
}

ReducedSystem rankN_sir_reduce(const Scenario& scenario, bool collapse_exposed) {
    return build_reduced(scenario, collapse_exposed, "rankN_sir_reduce", 0);
}

ReducedTrajectory integrate_reduced(const ReducedSystem& system, double t_end,
                                    const IntegrationControls& controls) {
    if (t_end < 0.0)
        throw std::invalid_argument("integrate_reduced: t_end must be >= 0");
    double rate = std::max(1.0, system.gamma);
    for (int i = 0; i < system.rank(); ++i)
        rate = std::max(rate, system.kernel.beta[i].cwiseAbs().maxCoeff() *
                                  std::abs(system.target(i)));
    const double h = controls.step > 0.0 ? controls.step : 0.01 / rate;
    const double out_dt = controls.output_every > 0.0 ? controls.output_every : 0.1;

    auto f = [&](double, const Eigen::VectorXd& m) { return system.mdot(m); };

    ReducedTrajectory traj;
    traj.step_used = h;
    Eigen::VectorXd m = Eigen::VectorXd::Zero(system.rank());
    auto record = [&](double t) {
        traj.times.push_back(t);
        traj.states.push_back({t, m, system.q_field(m)});
    };
    record(0.0);

    const long n_out = static_cast<long>(std::ceil(t_end / out_dt - 1e-12));
    for (long k = 1; k <= n_out; ++k) {
        const double t_target = std::min(k * out_dt, t_end);
        const double span = t_target - traj.times.back();
        const long sub = std::max<long>(1, static_cast<long>(std::ceil(span / h)));
        const double hs = span / static_cast<double>(sub);
        double t = traj.times.back();
        for (long j = 0; j < sub; ++j) {
            m = detail::rk4_step(f, t, m, hs);
            t += hs;
        }
        record(t_target);
    }
    return traj;
}

HerdRoot herd_root_rank1(const ReducedSystem& system) {
    if (system.rank() != 1)
        throw std::invalid_argument("herd_root_rank1: rank-1 system expected");
    const Field& b = system.kernel.beta[0];
    const Field& p = system.kernel.p[0];
    const double ip_i0 = integrate(system.params.domain,
                                   p.cwiseProduct(system.i0));
    if (ip_i0 <= 0.0)
        throw std::invalid_argument("herd_root_rank1: requires a nontrivial "
                                    "initial infection");

    HerdRoot out;
    out.target = system.target(0);
    auto F = [&](double m) {
        return integrate(system.params.domain,
                         system.s0.cwiseProduct(p).cwiseProduct(
                             (-m * b.array()).exp().matrix())) +
               system.gamma * m;
    };
    out.f_at_zero = F(0.0);
    if (!(out.f_at_zero < out.target))
        throw std::runtime_error("herd_root_rank1: bracketing failed, F(0) >= "
                                 "target");

    double hi = 1.0;
    while (F(hi) < out.target) {
        hi *= 2.0;
        if (hi > 1e12)
            throw std::runtime_error("herd_root_rank1: no finite root found");
    }
    double lo = 0.0;
    for (int iter = 0; iter < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++iter) {
        const double mid = 0.5 * (lo + hi);
        (F(mid) < out.target ? lo : hi) = mid;
    }
    out.m_h = 0.5 * (lo + hi);

    const double f_prime_0 = system.gamma -
        integrate(system.params.domain,
                  system.s0.cwiseProduct(p).cwiseProduct(b));
    out.r0 = 1.0 - f_prime_0 / system.gamma;
    return out;
}

MInfinity m_infinity(const ReducedSystem& system,
                     const IntegrationControls& controls) {
    const int n = system.rank();
    auto f = [&](double, const Eigen::VectorXd& m) { return system.mdot(m); };

    double rate = std::max(1.0, system.gamma);
    for (int i = 0; i < n; ++i)
        rate = std::max(rate, system.kernel.beta[i].cwiseAbs().maxCoeff() *
                                  std::abs(system.target(i)));
    const double h = controls.step > 0.0 ? controls.step : 0.01 / rate;

    Eigen::VectorXd m = Eigen::VectorXd::Zero(n);
    double t = 0.0;
    while (t < controls.t_max && system.mdot(m).cwiseAbs().maxCoeff() > 1e-12) {
        m = detail::rk4_step(f, t, m, h);
        t += h;
    }

    MInfinity out;
    const double tol = 1e-14 * std::max(1.0, system.target.cwiseAbs().maxCoeff());
    for (int iter = 0; iter < 100; ++iter) {
        const Eigen::VectorXd g = system.mdot(m);
        out.stationarity = g.cwiseAbs().maxCoeff();
        if (out.stationarity <= tol) break;
        const Field s = system.s_field(m);
        Eigen::MatrixXd jac(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                jac(i, j) = integrate(system.params.domain,
                                      system.kernel.p[i].cwiseProduct(s)
                                          .cwiseProduct(system.kernel.beta[j])) -
                            (i == j ? system.gamma : 0.0);
        m -= jac.partialPivLu().solve(g);
        ++out.newton_iterations;
    }
    out.stationarity = system.mdot(m).cwiseAbs().maxCoeff();
    out.m = std::move(m);
    return out;
}

Trajectory integrate_sir(const Scenario& scenario, double t_end,
                         const IntegrationControls& controls) {
    const ModelParams& params = scenario.params;
    if (scenario.initial.E.cwiseAbs().maxCoeff() > 0.0)
        throw std::invalid_argument("integrate_sir: exposed compartment must be "
                                    "identically zero");
    auto deriv = [&params](const EpidemicState& s) {
        StateDeriv d;
        const Field force = apply_kernel(params.domain, params.beta, s.I);
        d.dS = -s.S.cwiseProduct(force);
        d.dE = Field::Zero(s.S.size());
        d.dI = s.S.cwiseProduct(force) - params.gamma.cwiseProduct(s.I);
        d.dR = params.gamma.cwiseProduct(s.I);
        return d;
    };
    auto conserved = [&params](const EpidemicState& s) -> Field {
        return s.S.array().log().matrix() -
               beta_over_gamma(params, s.S + s.I);
    };
    return detail::integrate_with(params, scenario.initial, t_end, controls,
                                  deriv, conserved,
                                  std::numeric_limits<double>::infinity(),
                                  nullptr);
}

void write_reduced_csv(const ReducedTrajectory& trajectory,
                       const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    const int n = trajectory.states.empty()
                      ? 0
                      : static_cast<int>(trajectory.states.front().m.size());
    out << "t";
    for (int i = 1; i <= n; ++i) out << ",m_" << i;
    out << "\n";
    char buf[64];
    for (size_t k = 0; k < trajectory.states.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g", trajectory.times[k]);
        out << buf;
        for (int i = 0; i < n; ++i) {
            std::snprintf(buf, sizeof buf, ",%.17g", trajectory.states[k].m(i));
            out << buf;
        }
        out << "\n";
    }
}

}  // namespace epi
