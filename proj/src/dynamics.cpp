#include "epi/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace epi {

StateDeriv rhs(const ModelParams& params, const EpidemicState& state) {
    const Field force = apply_kernel(params.domain, params.beta, state.I);
    StateDeriv d;
    d.dS = -state.S.cwiseProduct(force);
    d.dE = state.S.cwiseProduct(force) - params.alpha.cwiseProduct(state.E);
    d.dI = params.alpha.cwiseProduct(state.E) - params.gamma.cwiseProduct(state.I);
    d.dR = params.gamma.cwiseProduct(state.I);
    return d;
}

double default_step(const ModelParams& params, const EpidemicState& initial) {
    const double mass = initial.total_mass(params.domain);
    const double beta_rate = params.beta.maxCoeff() * std::max(mass, 1.0);
    const double rate = std::max({beta_rate, params.alpha.maxCoeff(),
                                  params.gamma.maxCoeff(), 1.0});
    return 0.01 / rate;
}

namespace {

constexpr double kNegativeGuard = -1e-12;

EpidemicState axpy(const EpidemicState& s, double a, const StateDeriv& d) {
    EpidemicState out;
    out.t = s.t;
    out.S = s.S + a * d.dS;
    out.E = s.E + a * d.dE;
    out.I = s.I + a * d.dI;
    out.R = s.R + a * d.dR;
    return out;
}

bool finite(const EpidemicState& s) {
    return s.S.allFinite() && s.E.allFinite() && s.I.allFinite() && s.R.allFinite();
}

double min_coeff(const EpidemicState& s) {
    return std::min({s.S.minCoeff(), s.E.minCoeff(), s.I.minCoeff(), s.R.minCoeff()});
}

void clamp_tiny_negatives(EpidemicState& s) {
    for (Field* f : {&s.S, &s.E, &s.I, &s.R})
        *f = f->cwiseMax(0.0);
}

using DerivFn = std::function<StateDeriv(const EpidemicState&)>;

EpidemicState rk4_state_step(const DerivFn& f, const EpidemicState& y, double h) {
    const StateDeriv k1 = f(y);
    const StateDeriv k2 = f(axpy(y, 0.5 * h, k1));
    const StateDeriv k3 = f(axpy(y, 0.5 * h, k2));
    const StateDeriv k4 = f(axpy(y, h, k3));
    EpidemicState out;
    out.t = y.t + h;
    out.S = y.S + (h / 6.0) * (k1.dS + 2.0 * k2.dS + 2.0 * k3.dS + k4.dS);
    out.E = y.E + (h / 6.0) * (k1.dE + 2.0 * k2.dE + 2.0 * k3.dE + k4.dE);
    out.I = y.I + (h / 6.0) * (k1.dI + 2.0 * k2.dI + 2.0 * k3.dI + k4.dI);
    out.R = y.R + (h / 6.0) * (k1.dR + 2.0 * k2.dR + 2.0 * k3.dR + k4.dR);
    return out;
}

/// Step with automatic halving when a compartment undershoots the guard.
EpidemicState guarded_step(const DerivFn& f, const EpidemicState& y, double h) {
    for (int halving = 0; halving < 40; ++halving) {
        const int pieces = 1 << halving;
        const double sub = h / pieces;
        EpidemicState cur = y;
        bool ok = true;
        for (int i = 0; i < pieces && ok; ++i) {
            EpidemicState next = rk4_state_step(f, cur, sub);
            if (!finite(next))
                throw std::runtime_error("integration failure: non-finite state at t=" +
                                         std::to_string(cur.t));
            if (min_coeff(next) < kNegativeGuard) {
                ok = false;
                break;
            }
            clamp_tiny_negatives(next);
            cur = next;
        }
        if (ok) return cur;
    }
    throw std::runtime_error("integration failure: positivity guard could not be "
                             "satisfied at t=" + std::to_string(y.t));
}

}  // namespace

namespace detail {

Eigen::VectorXd rk4_step(const std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)>& f,
                         double t, const Eigen::VectorXd& y, double h) {
    const Eigen::VectorXd k1 = f(t, y);
    const Eigen::VectorXd k2 = f(t + 0.5 * h, y + 0.5 * h * k1);
    const Eigen::VectorXd k3 = f(t + 0.5 * h, y + 0.5 * h * k2);
    const Eigen::VectorXd k4 = f(t + h, y + h * k3);
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Trajectory integrate_with(const ModelParams& params, const EpidemicState& initial,
                          double t_end, const IntegrationControls& controls,
                          const DerivFn& deriv,
                          const std::function<Field(const EpidemicState&)>& conserved,
                          double step_cap,
                          const std::function<bool(const EpidemicState&)>& stop,
                          bool pointwise_mass) {
    if (!(t_end > 0.0))
        throw std::invalid_argument("integrate: t_end must be positive");

    double h = controls.step > 0.0 ? controls.step : default_step(params, initial);
    h = std::min(h, step_cap);
    const double out_dt = std::min(controls.output_every, t_end);
    const int steps_per_output = std::max(1, static_cast<int>(std::ceil(out_dt / h)));
    const double sub = out_dt / steps_per_output;

    const Field mass0 = initial.S + initial.E + initial.I + initial.R;
    const double total0 = integrate(params.domain, mass0);
    const Field cons0 = conserved(initial);

    Trajectory traj;
    traj.step_used = sub;
    EpidemicState cur = initial;
    cur.t = 0.0;

    auto record = [&](const EpidemicState& s) {
        StepDiagnostics diag;
        diag.t = s.t;
        const Field mass = s.S + s.E + s.I + s.R;
        // diffusion moves mass between nodes, so only the total is conserved
        diag.mass_drift = pointwise_mass
                              ? (mass - mass0).cwiseAbs().maxCoeff()
                              : std::abs(integrate(params.domain, mass) - total0);
        diag.lyapunov_drift = (conserved(s) - cons0).cwiseAbs().maxCoeff();
        if (diag.mass_drift > 1e-8) traj.mass_warning = true;
        traj.times.push_back(s.t);
        traj.states.push_back(s);
        traj.diagnostics.push_back(diag);
    };

    record(cur);
    const long total_outputs = std::lround(std::ceil(t_end / out_dt - 1e-12));
    for (long block = 0; block < total_outputs; ++block) {
        for (int i = 0; i < steps_per_output; ++i)
            cur = guarded_step(deriv, cur, sub);
        cur.t = (block + 1) * out_dt;  // keep the time grid exact
        record(cur);
        if (stop && stop(cur)) break;
    }
    return traj;
}

}  // namespace detail

Trajectory integrate_trajectory(const Scenario& scenario, double t_end,
                                const IntegrationControls& controls) {
    const ModelParams& params = scenario.params;
    return detail::integrate_with(
        params, scenario.initial, t_end, controls,
        [&](const EpidemicState& s) { return rhs(params, s); },
        [&](const EpidemicState& s) -> Field {
            return s.S.array().log().matrix() - phi_field(params, s);
        },
        std::numeric_limits<double>::infinity(), nullptr);
}

LongTimeResult long_time_limit(const Scenario& scenario,
                               const IntegrationControls& controls) {
    const ModelParams& params = scenario.params;
    LongTimeResult result;
    if (scenario.initial.infected_mass(params.domain) < controls.eps_stop) {
        result.state = scenario.initial;
        result.converged = true;
        return result;
    }
    result.trajectory = detail::integrate_with(
        params, scenario.initial, controls.t_max, controls,
        [&](const EpidemicState& s) { return rhs(params, s); },
        [&](const EpidemicState& s) -> Field {
            return s.S.array().log().matrix() - phi_field(params, s);
        },
        std::numeric_limits<double>::infinity(),
        [&](const EpidemicState& s) {
            return s.infected_mass(params.domain) < controls.eps_stop;
        });
    result.state = result.trajectory.back();
    result.residual_infected = result.state.infected_mass(params.domain);
    result.converged = result.residual_infected < controls.eps_stop;
    return result;
}

double fit_decay_rate(const TraitDomain& domain, const Trajectory& trajectory,
                      const Field& psi_infinity, double theta) {
    if ((psi_infinity.array() <= 0.0).any())
        throw std::invalid_argument("fit_decay_rate: psi must be positive");
    const size_t n = trajectory.states.size();
    if (n < 8)
        throw std::invalid_argument("fit_decay_rate: trajectory too short");

    std::vector<double> logval(n);
    for (size_t k = 0; k < n; ++k) {
        const EpidemicState& s = trajectory.states[k];
        const double v = integrate(domain, psi_infinity.cwiseProduct(s.E + theta * s.I));
        logval[k] = v > 0.0 ? std::log(v) : -std::numeric_limits<double>::infinity();
    }
    const size_t peak = std::distance(logval.begin(),
                                      std::max_element(logval.begin(), logval.end()));
    if (peak + 4 >= n)
        throw std::runtime_error("fit_decay_rate: trajectory truncated before or at "
                                 "the epidemic peak");

    // final decade of decay: tail points within a factor 10 of the last value
    const double floor_log = logval[n - 1];
    if (!std::isfinite(floor_log))
        throw std::runtime_error("fit_decay_rate: weighted infection reached zero");
    size_t start = peak;
    while (start < n - 1 && logval[start] > floor_log + std::log(10.0)) ++start;
    if (n - start < 5)
        throw std::runtime_error("fit_decay_rate: not enough points in the decay tail");
    for (size_t k = start; k + 1 < n; ++k)
        if (logval[k + 1] > logval[k] + 1e-9)
            throw std::runtime_error("fit_decay_rate: decay tail is not monotone");

    double st = 0, sy = 0, stt = 0, sty = 0;
    const double m = static_cast<double>(n - start);
    for (size_t k = start; k < n; ++k) {
        st += trajectory.times[k];
        sy += logval[k];
        stt += trajectory.times[k] * trajectory.times[k];
        sty += trajectory.times[k] * logval[k];
    }
    const double slope = (m * sty - st * sy) / (m * stt - st * st);
    if (!(slope < 0.0))
        throw std::runtime_error("fit_decay_rate: tail is not decaying");
    return -slope;
}

void write_trajectory_csv(const TraitDomain& domain, const Trajectory& traj,
                          const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "t,node,S,E,I,R\n";
    char buf[256];
    for (size_t k = 0; k < traj.states.size(); ++k) {
        const EpidemicState& s = traj.states[k];
        for (Eigen::Index i = 0; i < domain.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g,%lld,%.17g,%.17g,%.17g,%.17g\n",
                          traj.times[k], static_cast<long long>(i), s.S(i), s.E(i),
                          s.I(i), s.R(i));
            out << buf;
        }
    }
}

void write_trajectory_summary_csv(const TraitDomain& domain, const Trajectory& traj,
                                  const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "t,S_total,E_total,I_total,R_total,mass_drift,lyapunov_drift\n";
    char buf[320];
    for (size_t k = 0; k < traj.states.size(); ++k) {
        const EpidemicState& s = traj.states[k];
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                      traj.times[k], integrate(domain, s.S), integrate(domain, s.E),
                      integrate(domain, s.I), integrate(domain, s.R),
                      traj.diagnostics[k].mass_drift,
                      traj.diagnostics[k].lyapunov_drift);
        out << buf;
    }
}

}  // namespace epi
