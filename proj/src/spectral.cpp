#include "epi/spectral.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace epi {

Kernel NextGenOperator::adjoint_matrix() const {
    const Field& w = domain.weights();
    // W^{-1} A^T W: the adjoint with respect to the quadrature pairing
    return w.cwiseInverse().asDiagonal() * matrix.transpose() * w.asDiagonal();
}

PowerIterationResult power_iteration(const Kernel& matrix, double tol, int max_iter) {
    const Eigen::Index n = matrix.rows();
    if (matrix.cols() != n)
        throw std::invalid_argument("power_iteration: matrix must be square");

    PowerIterationResult result;
    Field v = Field::Ones(n);
    for (int iter = 1; iter <= max_iter; ++iter) {
        Field w = matrix * v;
        result.iterations = iter;
        const double scale = w.cwiseAbs().maxCoeff();
        if (scale == 0.0) {
            result.eigenvalue = 0.0;
            result.vector = Field::Zero(n);
            result.degenerate = true;
            result.converged = true;
            return result;
        }
        const double lambda = v.dot(w) / v.dot(v);
        result.residual = (w - lambda * v).cwiseAbs().maxCoeff() /
                          v.cwiseAbs().maxCoeff();
        result.eigenvalue = lambda;
        v = w / scale;
        if (result.residual <= tol) {
            result.vector = v;
            result.converged = true;
            return result;
        }
    }
    result.vector = v;
    return result;
}

NextGenOperator build_operator(const ModelParams& params, const Field& s) {
    require_aligned(params.domain, s, "build_operator");
    if ((s.array() < 0.0).any())
        throw std::invalid_argument("build_operator: susceptible field must be >= 0");
    NextGenOperator op;
    op.domain = params.domain;
    op.susceptible = s;
    const Field col = params.domain.weights().cwiseQuotient(params.gamma);
    op.matrix = s.asDiagonal() * params.beta * col.asDiagonal();
    return op;
}

SpectralResult spectral_radius(const NextGenOperator& op, double tol, int max_iter,
                               const Field* s_norm) {
    PowerIterationResult direct = power_iteration(op.matrix, tol, max_iter);
    if (!direct.converged)
        throw std::runtime_error("spectral_radius: power iteration did not converge "
                                 "(reducible kernel?)");
    SpectralResult result;
    result.radius = direct.eigenvalue;
    result.iterations = direct.iterations;
    result.residual = direct.residual;
    result.degenerate = direct.degenerate;
    result.phi = direct.vector;
    if (result.degenerate) {
        result.psi = Field::Zero(op.matrix.rows());
        return result;
    }

    PowerIterationResult adjoint = power_iteration(op.adjoint_matrix(), tol, max_iter);
    if (!adjoint.converged)
        throw std::runtime_error("spectral_radius: adjoint power iteration did not "
                                 "converge");
    result.adjoint_residual = adjoint.residual;
    result.psi = adjoint.vector;
    const Field& ref = s_norm ? *s_norm : op.susceptible;
    const double pairing = integrate(op.domain, result.psi.cwiseProduct(ref));
    if (pairing <= 0.0)
        throw std::runtime_error("spectral_radius: cannot normalize psi against a "
                                 "vanishing susceptible field");
    result.psi /= pairing;
    return result;
}

double r0(const Scenario& scenario) {
    return spectral_radius(build_operator(scenario.params, scenario.initial.S)).radius;
}

bool in_herd_immunity_domain(const ModelParams& params, const Field& s) {
    // tiny slack so the r = 1 boundary is included despite roundoff
    return radius_at(params, s) <= 1.0 + 1e-12;
}

double radius_at(const ModelParams& params, const Field& s) {
    PowerIterationResult pi = power_iteration(build_operator(params, s).matrix);
    if (!pi.converged)
        throw std::runtime_error("radius_at: power iteration did not converge");
    return pi.eigenvalue;
}

namespace {

EpidemicState advance(const ModelParams& params, const EpidemicState& from, double dt) {
    if (dt <= 0.0) return from;
    IntegrationControls controls;
    controls.output_every = dt;
    Trajectory t = detail::integrate_with(
        params, from, dt, controls,
        [&](const EpidemicState& s) { return rhs(params, s); },
        [&](const EpidemicState& s) -> Field {
            return s.S.array().log().matrix() - phi_field(params, s);
        },
        std::numeric_limits<double>::infinity(), nullptr);
    EpidemicState out = t.back();
    out.t = from.t + dt;
    return out;
}

}  // namespace

double find_t0(const Trajectory& trajectory, const ModelParams& params, double tol) {
    if (trajectory.states.size() < 2)
        throw std::invalid_argument("find_t0: trajectory too short");

    const double r_start = radius_at(params, trajectory.front().S);
    if (r_start <= 1.0)
        throw std::runtime_error("find_t0: no crossing, r(K_{S0}) <= 1");

    // cheap bracketing on the stored output grid
    size_t k = 0;
    double r_left = r_start;
    bool bracketed = false;
    for (size_t j = 1; j < trajectory.states.size(); ++j) {
        const double r_right = radius_at(params, trajectory.states[j].S);
        if (std::abs(r_right - 1.0) <= tol) return trajectory.times[j];
        if (r_left > 1.0 && r_right < 1.0) {
            k = j - 1;
            bracketed = true;
            break;
        }
        r_left = r_right;
    }
    if (!bracketed)
        throw std::runtime_error("find_t0: trajectory too short, r stays above 1; "
                                 "extend the run");

    EpidemicState anchor = trajectory.states[k];
    double ta = trajectory.times[k];
    double tb = trajectory.times[k + 1];
    for (int iter = 0; iter < 200 && tb - ta > 1e-14 * std::max(1.0, tb); ++iter) {
        const double tm = 0.5 * (ta + tb);
        EpidemicState mid = advance(params, anchor, tm - ta);
        const double r_mid = radius_at(params, mid.S);
        if (std::abs(r_mid - 1.0) <= tol) return tm;
        if (r_mid > 1.0) {
            ta = tm;
            anchor = mid;
        } else {
            tb = tm;
        }
    }
    return 0.5 * (ta + tb);
}

DecayRateEstimate estimate_decay_rate(const ModelParams& params,
                                      const Field& s_infinity, double r_infinity) {
    if (r_infinity >= 1.0)
        throw std::invalid_argument("estimate_decay_rate: requires r_infinity < 1");
    (void)s_infinity;

    const double a = params.alpha_inf;
    const double g = params.gamma_inf;
    auto bound = [&](double theta) {
        return std::min((1.0 - theta) * a, (1.0 - r_infinity / theta) * g);
    };

    double lo = std::max(r_infinity, 0.0) + 1e-12;
    double hi = 1.0 - 1e-12;
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
    double f1 = bound(x1), f2 = bound(x2);
    for (int iter = 0; iter < 200 && hi - lo > 1e-14; ++iter) {
        if (f1 < f2) {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + gr * (hi - lo);
            f2 = bound(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - gr * (hi - lo);
            f1 = bound(x1);
        }
    }
    DecayRateEstimate est;
    est.theta = 0.5 * (lo + hi);
    est.epsilon = 0.0;
    est.lambda = bound(est.theta);
    if (!(est.lambda > 0.0))
        throw std::runtime_error("estimate_decay_rate: optimizer produced a "
                                 "nonpositive rate");
    return est;
}

EquilibriumStability classify_equilibrium(const ModelParams& params,
                                          const Field& s_star, double tol) {
    const double r = radius_at(params, s_star);
    if (r < 1.0 - tol) return EquilibriumStability::Stable;
    if (r > 1.0 + tol) return EquilibriumStability::Unstable;
    return EquilibriumStability::Marginal;
}

}  // namespace epi
