#pragma once

#include "epi/dynamics.hpp"
#include "epi/model.hpp"

namespace epi {

/// Discretized next-generation operator K_S: matrix entry
/// (i,j) = S_i beta_ij w_j / gamma_j, so matrix * phi realizes
/// S(x) integral beta(x,y)/gamma(y) phi(y) dy.
struct NextGenOperator {
    Kernel matrix;
    Field susceptible;
    TraitDomain domain;

    Field apply(const Field& f) const { return matrix * f; }
    /// Adjoint with respect to the quadrature inner product:
    /// entry (j,i) = w_i S_i beta_ij / gamma_j.
    Kernel adjoint_matrix() const;
};

struct SpectralResult {
    double radius = 0.0;
    Field phi;  ///< direct principal eigenfunction, positive, max-normalized
    Field psi;  ///< adjoint eigenfunction, scaled so integral(psi * S0) = 1
    int iterations = 0;
    double residual = 0.0;          ///< relative inf-norm eigen-residual (direct)
    double adjoint_residual = 0.0;
    bool degenerate = false;        ///< zero operator
};

struct PowerIterationResult {
    double eigenvalue = 0.0;
    Field vector;
    int iterations = 0;
    double residual = 0.0;
    bool degenerate = false;
    bool converged = false;
};

struct DecayRateEstimate {
    double theta = 0.0;    ///< in (r_infinity, 1)
    double epsilon = 0.0;  ///< fixed to 0: evaluated at the exact limit field
    double lambda = 0.0;   ///< min((1-theta) alpha_inf, (1 - r_inf/theta) gamma_inf)
};

enum class EquilibriumStability { Stable, Unstable, Marginal };

/// Power iteration with all-ones start; converges on eigenvalue Cauchy
/// difference and relative residual.
PowerIterationResult power_iteration(const Kernel& matrix, double tol = 1e-12,
                                     int max_iter = 100000);

NextGenOperator build_operator(const ModelParams& params, const Field& s);

/// Spectral radius plus direct/adjoint principal eigenfunctions. The adjoint
/// eigenfunction is rescaled so integral(psi * s_norm) = 1; pass the
/// scenario's S0 as s_norm (defaults to the operator's own susceptible field).
SpectralResult spectral_radius(const NextGenOperator& op, double tol = 1e-12,
                               int max_iter = 100000,
                               const Field* s_norm = nullptr);

double r0(const Scenario& scenario);

/// True iff r(K_s) <= 1 (boundary included).
bool in_herd_immunity_domain(const ModelParams& params, const Field& s);

/// Radius of K at a trajectory state; helper for crossing searches.
double radius_at(const ModelParams& params, const Field& s);

/// Locates the unique T0 with r(K_{S(T0)}) = 1 by bracketing over the stored
/// trajectory states and bisecting with local re-integration.
/// Requires r > 1 at the start and r < 1 at the end of the trajectory.
double find_t0(const Trajectory& trajectory, const ModelParams& params,
               double tol = 1e-8);

/// Optimal theta (golden section, epsilon = 0) for the decay-rate bound
/// lambda = min((1-theta) alpha_inf, (1 - r_inf/theta) gamma_inf).
DecayRateEstimate estimate_decay_rate(const ModelParams& params,
                                      const Field& s_infinity,
                                      double r_infinity);

EquilibriumStability classify_equilibrium(const ModelParams& params,
                                          const Field& s_star, double tol = 1e-8);

}  // namespace epi
