#include "epi/diffusion.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace epi {

namespace {

void require_interval(const TraitDomain& domain, const char* what) {
    if (domain.kind() != DomainKind::Interval)
        throw std::invalid_argument(std::string(what) +
                                    ": requires an interval trait domain");
}

}  // namespace

NeumannLaplacian::NeumannLaplacian(Eigen::Index n, double h) : n_(n), h_(h) {
    if (n < 3) throw std::invalid_argument("NeumannLaplacian: need n >= 3");
    if (!(h > 0.0)) throw std::invalid_argument("NeumannLaplacian: h must be positive");
}

NeumannLaplacian::NeumannLaplacian(const TraitDomain& domain)
    : NeumannLaplacian((require_interval(domain, "NeumannLaplacian"), domain.size()),
                       domain.spacing()) {}

Field NeumannLaplacian::apply(const Field& u) const {
    if (u.size() != n_) throw std::invalid_argument("NeumannLaplacian: size mismatch");
    Field out(n_);
    const double inv_h2 = 1.0 / (h_ * h_);
    out(0) = 2.0 * (u(1) - u(0)) * inv_h2;
    for (Eigen::Index i = 1; i < n_ - 1; ++i)
        out(i) = (u(i - 1) - 2.0 * u(i) + u(i + 1)) * inv_h2;
    out(n_ - 1) = 2.0 * (u(n_ - 2) - u(n_ - 1)) * inv_h2;
    return out;
}

Field NeumannLaplacian::solve_shifted(const Field& zeroth, const Field& rhs) const {
    if (zeroth.size() != n_ || rhs.size() != n_)
        throw std::invalid_argument("solve_shifted: size mismatch");
    const double inv_h2 = 1.0 / (h_ * h_);

    // Thomas algorithm on (-Laplacian + diag(zeroth)) u = rhs
    Field diag = zeroth.array() + 2.0 * inv_h2;
    Field upper = Field::Constant(n_ - 1, -inv_h2);
    Field lower = Field::Constant(n_ - 1, -inv_h2);
    upper(0) = -2.0 * inv_h2;
    lower(n_ - 2) = -2.0 * inv_h2;

    Field c(n_ - 1), d(n_);
    c(0) = upper(0) / diag(0);
    d(0) = rhs(0) / diag(0);
    for (Eigen::Index i = 1; i < n_; ++i) {
        const double denom = diag(i) - lower(i - 1) * c(i - 1);
        if (i < n_ - 1) c(i) = upper(i) / denom;
        d(i) = (rhs(i) - lower(i - 1) * d(i - 1)) / denom;
    }
    Field u(n_);
    u(n_ - 1) = d(n_ - 1);
    for (Eigen::Index i = n_ - 2; i >= 0; --i)
        u(i) = d(i) - c(i) * u(i + 1);
    return u;
}

Field solve_elliptic(const NeumannLaplacian& laplacian, const Field& gamma,
                     const Field& rhs) {
    if (!(gamma.minCoeff() > 0.0))
        throw std::invalid_argument("solve_elliptic: gamma infimum must be positive");
    return laplacian.solve_shifted(gamma, rhs);
}

Field diffusion_phi(const ModelParams& params, const NeumannLaplacian& laplacian,
                    const EpidemicState& state) {
    return solve_elliptic(laplacian, params.gamma, state.S + state.E + state.I);
}

namespace {

std::function<StateDeriv(const EpidemicState&)> diffusion_deriv(
    const ModelParams& params, const NeumannLaplacian& lap, double nu) {
    return [&params, lap, nu](const EpidemicState& s) {
        StateDeriv d = rhs(params, s);
        d.dI += nu * lap.apply(s.I);
        return d;
    };
}

std::function<Field(const EpidemicState&)> diffusion_conserved(
    const ModelParams& params, const NeumannLaplacian& lap, double nu) {
    return [&params, lap, nu](const EpidemicState& s) -> Field {
        const Field phi = lap.solve_shifted(params.gamma / nu,
                                            (s.S + s.E + s.I) / nu);
        return s.S.array().log().matrix() -
               apply_kernel(params.domain, params.beta, phi);
    };
}

}  // namespace

Trajectory integrate_diffusion(const Scenario& scenario, double t_end,
                               const DiffusionControls& controls) {
    const ModelParams& params = scenario.params;
    require_interval(params.domain, "integrate_diffusion");
    const NeumannLaplacian lap(params.domain);
    const double nu = controls.diffusivity;
    const double stencil_cap = 0.4 * lap.spacing() * lap.spacing() / std::max(nu, 1e-300);
    return detail::integrate_with(params, scenario.initial, t_end, controls,
                                  diffusion_deriv(params, lap, nu),
                                  diffusion_conserved(params, lap, nu),
                                  stencil_cap, nullptr, /*pointwise_mass=*/false);
}

Field apply_kdelta(const ModelParams& params, const NeumannLaplacian& laplacian,
                   const Field& s, const Field& f, double diffusivity) {
    const Field inner = f.cwiseQuotient(params.gamma);
    return s.cwiseProduct(apply_kernel(params.domain, params.beta, inner)) +
           diffusivity * laplacian.apply(inner);
}

namespace {

struct InnerEigen {
    double lambda = 0.0;
    Field vector;
    int iterations = 0;
};

/// Dominant eigenpair of a positive operator given by its action.
InnerEigen operator_power_iteration(const std::function<Field(const Field&)>& apply,
                                    Eigen::Index n, double tol, int max_iter) {
    InnerEigen out;
    Field v = Field::Ones(n);
    for (int iter = 1; iter <= max_iter; ++iter) {
        Field w = apply(v);
        out.iterations = iter;
        const double scale = w.cwiseAbs().maxCoeff();
        if (scale == 0.0)
            throw std::runtime_error("kdelta power iteration: operator annihilated "
                                     "the iterate");
        const double lambda = v.dot(w) / v.dot(v);
        const double residual = (w - lambda * v).cwiseAbs().maxCoeff() / scale;
        out.lambda = lambda;
        v = w / scale;
        if (residual <= tol) {
            out.vector = v;
            return out;
        }
    }
    throw std::runtime_error("kdelta power iteration stalled");
}

}  // namespace

DiffusionSpectralResult kdelta_eigenpair(const ModelParams& params, const Field& s,
                                         double tol, const Field* s_norm,
                                         double diffusivity) {
    require_interval(params.domain, "kdelta_eigenpair");
    require_aligned(params.domain, s, "kdelta_eigenpair");
    if ((s.array() < 0.0).any() || s.maxCoeff() <= 0.0)
        throw std::invalid_argument("kdelta_eigenpair: s must be nonnegative and "
                                    "not identically zero");
    const NeumannLaplacian lap(params.domain);
    const double nu = diffusivity;
    const Eigen::Index n = params.domain.size();
    const double inner_tol = std::min(tol, 1e-12);

    DiffusionSpectralResult result;

    // Lambda_M: dominant eigenvalue of phi -> (-nu Lap + M gamma)^{-1}(S int beta phi)
    auto lambda_of = [&](double m, Field* eigvec) {
        InnerEigen ie = operator_power_iteration(
            [&](const Field& v) -> Field {
                const Field coupled = s.cwiseProduct(apply_kernel(params.domain,
                                                                  params.beta, v));
                return lap.solve_shifted(m * params.gamma / nu, coupled / nu);
            },
            n, inner_tol, 200000);
        result.iterations += ie.iterations;
        if (eigvec) *eigvec = std::move(ie.vector);
        return ie.lambda;
    };

    // geometric scan for a sign change of Lambda_M - 1
    double m_lo = 0.0, m_hi = 0.0;
    double prev_m = 0.0, prev_lambda = 0.0;
    for (double m = 1e-6; m <= 1.0000001e6; m *= 10.0) {
        const double lam = lambda_of(m, nullptr);
        result.lambda_curve.emplace_back(m, lam);
        if (prev_m > 0.0 && (prev_lambda - 1.0) * (lam - 1.0) <= 0.0) {
            m_lo = prev_m;
            m_hi = m;
            break;
        }
        prev_m = m;
        prev_lambda = lam;
    }
    if (m_lo == 0.0)
        throw std::runtime_error("kdelta_eigenpair: no unit crossing of the Lambda "
                                 "curve in the scan range [1e-6, 1e6]");

    // bisection in ln M on Lambda_M - 1
    double lo = std::log(m_lo), hi = std::log(m_hi);
    double m_star = std::exp(0.5 * (lo + hi));
    Field phi_inner;
    for (int iter = 0; iter < 200; ++iter) {
        m_star = std::exp(0.5 * (lo + hi));
        const double lam = lambda_of(m_star, &phi_inner);
        if (std::abs(lam - 1.0) <= tol) break;
        // Lambda decreases in M near the crossing
        if (lam > 1.0) lo = std::log(m_star);
        else hi = std::log(m_star);
    }

    result.m_star = m_star;
    result.phi = params.gamma.cwiseProduct(phi_inner);
    result.phi /= result.phi.maxCoeff();
    result.residual = (apply_kdelta(params, lap, s, result.phi, nu) -
                       m_star * result.phi).cwiseAbs().maxCoeff() /
                      result.phi.cwiseAbs().maxCoeff();

    // adjoint eigenfunction from the transposed coupling at the crossing
    const Field ws = params.domain.weights().cwiseProduct(s);
    InnerEigen adj = operator_power_iteration(
        [&](const Field& v) -> Field {
            const Field coupled = params.beta.transpose() * ws.cwiseProduct(v);
            return lap.solve_shifted(m_star * params.gamma / nu, coupled / nu);
        },
        n, inner_tol, 200000);
    result.iterations += adj.iterations;
    result.psi = adj.vector;
    const Field kstar_psi =
        (params.beta.transpose() * ws.cwiseProduct(result.psi) +
         nu * lap.apply(result.psi)).cwiseQuotient(params.gamma);
    result.adjoint_residual = (kstar_psi - m_star * result.psi).cwiseAbs().maxCoeff() /
                              result.psi.cwiseAbs().maxCoeff();
    const Field& ref = s_norm ? *s_norm : s;
    const double pairing = integrate(params.domain, result.psi.cwiseProduct(ref));
    if (pairing <= 0.0)
        throw std::runtime_error("kdelta_eigenpair: adjoint normalization failed");
    result.psi /= pairing;
    return result;
}

DiffusionFinalSize solve_final_size_diffusion(const Scenario& scenario, double tol,
                                              long max_iter, double diffusivity) {
    const ModelParams& params = scenario.params;
    require_interval(params.domain, "solve_final_size_diffusion");
    const NeumannLaplacian lap(params.domain);
    const double nu = diffusivity;
    const EpidemicState& init = scenario.initial;
    if ((init.S.array() <= 0.0).any())
        throw std::invalid_argument("solve_final_size_diffusion: S0 > 0 required");

    auto ell = [&](const Field& rhs) {
        return lap.solve_shifted(params.gamma / nu, rhs / nu);
    };

    DiffusionFinalSize out;
    out.phi_0 = ell(init.S + init.E + init.I);

    Field phi = out.phi_0;
    for (long iter = 1; iter <= max_iter; ++iter) {
        const Field exponent = apply_kernel(params.domain, params.beta, phi - out.phi_0);
        Field next = ell(init.S.cwiseProduct(exponent.array().exp().matrix()));
        const double overshoot = (next - phi).maxCoeff();
        if (overshoot > 1e-12) {
            // the exact iteration is monotone; damp and report
            next = 0.5 * (next + phi);
            ++out.damping_events;
        }
        const double gap = (next - phi).cwiseAbs().maxCoeff();
        phi = std::move(next);
        if (gap <= tol) {
            out.iterations = static_cast<int>(iter);
            out.phi_infinity = phi;
            const Field exponent_inf =
                apply_kernel(params.domain, params.beta, phi - out.phi_0);
            out.s_infinity = init.S.cwiseProduct(exponent_inf.array().exp().matrix());
            out.residual = (-nu * lap.apply(phi) + params.gamma.cwiseProduct(phi) -
                            out.s_infinity).cwiseAbs().maxCoeff();
            out.attack_rate = integrate(params.domain, init.S - out.s_infinity);
            return out;
        }
    }
    throw std::runtime_error("solve_final_size_diffusion: max_iter exceeded");
}

double diffusion_t0(const Trajectory& trajectory, const Scenario& scenario,
                    double tol, double diffusivity) {
    const ModelParams& params = scenario.params;
    require_interval(params.domain, "diffusion_t0");
    const NeumannLaplacian lap(params.domain);
    const double nu = diffusivity;
    const double stencil_cap = 0.4 * lap.spacing() * lap.spacing() / std::max(nu, 1e-300);

    auto radius = [&](const Field& s_field) {
        return kdelta_eigenpair(params, s_field, 1e-12, nullptr, nu).m_star;
    };
    auto advance = [&](const EpidemicState& from, double dt) {
        IntegrationControls controls;
        controls.output_every = dt;
        Trajectory t = detail::integrate_with(params, from, dt, controls,
                                              diffusion_deriv(params, lap, nu),
                                              diffusion_conserved(params, lap, nu),
                                              stencil_cap, nullptr);
        EpidemicState out = t.back();
        out.t = from.t + dt;
        return out;
    };

    if (trajectory.states.size() < 2)
        throw std::invalid_argument("diffusion_t0: trajectory too short");
    double r_left = radius(trajectory.front().S);
    if (r_left <= 1.0)
        throw std::runtime_error("diffusion_t0: no crossing, r(K^Delta_{S0}) <= 1");
    size_t k = 0;
    bool bracketed = false;
    for (size_t j = 1; j < trajectory.states.size(); ++j) {
        const double r_right = radius(trajectory.states[j].S);
        if (std::abs(r_right - 1.0) <= tol) return trajectory.times[j];
        if (r_left > 1.0 && r_right < 1.0) {
            k = j - 1;
            bracketed = true;
            break;
        }
        r_left = r_right;
    }
    if (!bracketed)
        throw std::runtime_error("diffusion_t0: radius stays above 1; extend the run");

    EpidemicState anchor = trajectory.states[k];
    double ta = trajectory.times[k];
    double tb = trajectory.times[k + 1];
    for (int iter = 0; iter < 200 && tb - ta > 1e-14 * std::max(1.0, tb); ++iter) {
        const double tm = 0.5 * (ta + tb);
        EpidemicState mid = advance(anchor, tm - ta);
        const double r_mid = radius(mid.S);
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

}  // namespace epi
