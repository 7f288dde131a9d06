#pragma once

#include "epi/dynamics.hpp"
#include "epi/model.hpp"
#include "epi/spectral.hpp"

#include <string>
#include <vector>

namespace epi {

/// State of the reduced system: m_i(t) are cumulative weighted exposures,
/// Q(t,x) = sum_k beta_k(x) m_k(t) reconstructs the field quantities.
struct RankNState {
    double t = 0.0;
    Eigen::VectorXd m;
    Field q_field;
};

/// N x N matrix M_ij = integral(beta_i p_j s / gamma) with its principal
/// eigenpair; X is the right eigenvector (M X = lambda X), Y the left one.
struct RankNMatrix {
    Kernel entries;
    double lambda = 0.0;
    Eigen::VectorXd X;
    Eigen::VectorXd Y;
    double residual = 0.0;
};

/// Autonomous reduced ODE system for a separable-kernel SIR model with
/// constant recovery rate:
///   dm_i/dt = integral(p_i (S0 + I0)) - integral(p_i S0 e^{-Q}) - gamma m_i
/// with m(0) = 0 and S(t,x) = S0(x) e^{-Q(t,x)}.
struct ReducedSystem {
    ModelParams params;
    RankNKernel kernel;
    Field s0;
    Field i0;
    double gamma = 0.0;        ///< the constant recovery rate
    Eigen::VectorXd target;    ///< integral(p_i (S0 + I0))

    int rank() const { return kernel.rank(); }
    Eigen::VectorXd mdot(const Eigen::VectorXd& m) const;
    Field q_field(const Eigen::VectorXd& m) const;
    Field s_field(const Eigen::VectorXd& m) const;  ///< S0 e^{-Q}
};

struct ReducedTrajectory {
    std::vector<double> times;
    std::vector<RankNState> states;
    double step_used = 0.0;

    const RankNState& back() const { return states.back(); }
};

struct HerdRoot {
    double m_h = 0.0;
    double r0 = 0.0;       ///< 1 - F'(0)/gamma
    double target = 0.0;   ///< integral(p (S0 + I0))
    double f_at_zero = 0.0;
};

struct MInfinity {
    Eigen::VectorXd m;
    int newton_iterations = 0;
    double stationarity = 0.0;  ///< inf-norm of mdot at the polished root
};

/// Closed-form principal eigen-elements of the rank-1 next-generation
/// operator at susceptible field s: r = integral(beta p s / gamma),
/// phi = beta s, psi proportional to p / gamma. No iteration is performed.
SpectralResult rank1_eigen_elements(const ModelParams& params, const Field& s);

/// Principal eigenpair through the N x N reduction, cross-checked by
/// assembling phi = sum(Y_i beta_i s) and psi = sum(X_i p_i / gamma).
struct RankNEigen {
    RankNMatrix matrix;
    SpectralResult spectral;
};
RankNEigen rankN_eigen(const ModelParams& params, const Field& s);

/// Builds the scalar (rank-1) reduced system. The scenario must be SIR
/// (E0 identically zero) unless collapse_exposed merges E0 into I0; the
/// recovery rate must be constant over the domain.
ReducedSystem rank1_sir_reduce(const Scenario& scenario,
                               bool collapse_exposed = false);

/// Same construction for a rank-N kernel.
ReducedSystem rankN_sir_reduce(const Scenario& scenario,
                               bool collapse_exposed = false);

/// Fixed-step RK4 on the m system with the dynamics output conventions.
ReducedTrajectory integrate_reduced(const ReducedSystem& system, double t_end,
                                    const IntegrationControls& controls = {});

/// Unique positive root m_H of F(m) = integral(p S0 e^{-beta m}) + gamma m
/// against the target integral(p (S0 + I0)); F is convex with F(0) < target
/// whenever I0 is not identically zero. Also reports R0 = 1 - F'(0)/gamma.
HerdRoot herd_root_rank1(const ReducedSystem& system);

/// m(infinity): integrate until the drift falls below 1e-12 (or t_max), then
/// polish with Newton on the stationarity equation mdot(m) = 0.
MInfinity m_infinity(const ReducedSystem& system,
                     const IntegrationControls& controls = {});

/// Grid SIR integrator (E frozen at zero, dI = S(beta I) - gamma I); the
/// oracle counterpart of the reduced systems.
Trajectory integrate_sir(const Scenario& scenario, double t_end,
                         const IntegrationControls& controls = {});

/// CSV export: header t,m_1,...,m_N.
void write_reduced_csv(const ReducedTrajectory& trajectory,
                       const std::string& path);

}  // namespace epi
