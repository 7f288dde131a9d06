#pragma once

#include "epi/model.hpp"

#include <functional>
#include <vector>

namespace epi {

struct StateDeriv {
    Field dS, dE, dI, dR;
};

struct IntegrationControls {
    double step = 0.0;          ///< 0: pick automatically from the fastest rate
    double output_every = 0.1;  ///< spacing of stored output states
    double eps_stop = 1e-10;    ///< stopping threshold on integral of E+I
    double t_max = 500.0;       ///< cap for long-time runs
};

struct StepDiagnostics {
    double t = 0.0;
    double mass_drift = 0.0;      ///< drift of S+E+I+R since t=0 (per node, or
                                  ///< of the total under diffusion)
    double lyapunov_drift = 0.0;  ///< max node drift of ln S - Phi since t=0
};

struct Trajectory {
    std::vector<double> times;
    std::vector<EpidemicState> states;
    std::vector<StepDiagnostics> diagnostics;
    double step_used = 0.0;
    bool mass_warning = false;  ///< pointwise mass drift exceeded 1e-8

    const EpidemicState& front() const { return states.front(); }
    const EpidemicState& back() const { return states.back(); }
};

struct LongTimeResult {
    EpidemicState state;
    Trajectory trajectory;
    bool converged = false;       ///< integral of E+I fell below eps_stop
    double residual_infected = 0.0;
};

/// SEIR vector field: dS = -S (beta I), dE = S (beta I) - alpha E,
/// dI = alpha E - gamma I, dR = gamma I.
StateDeriv rhs(const ModelParams& params, const EpidemicState& state);

/// Default step from the fastest rate in the model.
double default_step(const ModelParams& params, const EpidemicState& initial);

/// Fixed-step RK4 with automatic step halving when a compartment dips below
/// -1e-12; values in (-1e-12, 0) are clamped to 0.
Trajectory integrate_trajectory(const Scenario& scenario, double t_end,
                                const IntegrationControls& controls = {});

/// Integrates until the integral of E+I falls below controls.eps_stop or
/// controls.t_max is reached.
LongTimeResult long_time_limit(const Scenario& scenario,
                               const IntegrationControls& controls = {});

/// Least-squares slope of t -> ln integral(psi_inf (E + theta I)) over the
/// final decade of decay past the epidemic peak. Returns the (positive)
/// measured rate. Throws if the tail is missing or not decaying.
double fit_decay_rate(const TraitDomain& domain, const Trajectory& trajectory,
                      const Field& psi_infinity, double theta);

/// Trajectory export: per-node CSV (t, node, S, E, I, R) and a summary CSV
/// of aggregated totals plus conserved-quantity drift.
void write_trajectory_csv(const TraitDomain& domain, const Trajectory& traj,
                          const std::string& path);
void write_trajectory_summary_csv(const TraitDomain& domain, const Trajectory& traj,
                                  const std::string& path);

namespace detail {
/// One RK4 step of a generic vector ODE; reused by the reduced systems.
Eigen::VectorXd rk4_step(const std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)>& f,
                         double t, const Eigen::VectorXd& y, double h);

/// Shared RK4 driver: positivity guard, exact output grid, drift diagnostics.
/// `conserved` supplies the per-node quantity whose drift is monitored
/// (ln S - Phi without diffusion, its elliptic analogue with diffusion);
/// `stop`, when set, is checked at output times. With pointwise_mass false
/// the mass diagnostic tracks the domain integral instead of each node (the
/// right invariant when diffusion moves mass between nodes).
Trajectory integrate_with(const ModelParams& params, const EpidemicState& initial,
                          double t_end, const IntegrationControls& controls,
                          const std::function<StateDeriv(const EpidemicState&)>& deriv,
                          const std::function<Field(const EpidemicState&)>& conserved,
                          double step_cap,
                          const std::function<bool(const EpidemicState&)>& stop,
                          bool pointwise_mass = true);
}  // namespace detail

}  // namespace epi
