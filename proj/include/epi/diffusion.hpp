#pragma once

#include "epi/dynamics.hpp"
#include "epi/final_size.hpp"
#include "epi/model.hpp"

#include <utility>
#include <vector>

namespace epi {

/// Second-order finite-difference Laplacian on a uniform interval grid with
/// ghost-point Neumann closure. Row sums vanish and the stencil is
/// self-adjoint with respect to the trapezoid weights.
class NeumannLaplacian {
public:
    NeumannLaplacian(Eigen::Index n, double h);
    explicit NeumannLaplacian(const TraitDomain& domain);

    Eigen::Index size() const { return n_; }
    double spacing() const { return h_; }

    Field apply(const Field& u) const;

    /// Direct tridiagonal solve of (-Laplacian + diag(zeroth)) u = rhs.
    Field solve_shifted(const Field& zeroth, const Field& rhs) const;

private:
    Eigen::Index n_;
    double h_;
};

/// Solution of -Laplacian(phi) + gamma phi = rhs with Neumann conditions;
/// unique since inf gamma > 0.
Field solve_elliptic(const NeumannLaplacian& laplacian, const Field& gamma,
                     const Field& rhs);

struct DiffusionSpectralResult {
    double m_star = 0.0;  ///< principal eigenvalue of the diffusion operator
    Field phi;            ///< direct eigenfunction (gamma * inner eigenfunction)
    Field psi;            ///< adjoint eigenfunction, integral(psi * s_norm) = 1
    std::vector<std::pair<double, double>> lambda_curve;  ///< sampled (M, Lambda_M)
    double residual = 0.0;
    double adjoint_residual = 0.0;
    int iterations = 0;
};

struct DiffusionControls : IntegrationControls {
    double diffusivity = 1.0;
};

/// Method-of-lines SEIR run with the Neumann Laplacian acting on I; the
/// monitored conserved quantity is ln S - integral(beta Phi) with Phi from
/// the elliptic problem.
Trajectory integrate_diffusion(const Scenario& scenario, double t_end,
                               const DiffusionControls& controls = {});

/// Phi(t,.) for the diffusion system: -Laplacian(Phi) + gamma Phi = S+E+I.
Field diffusion_phi(const ModelParams& params, const NeumannLaplacian& laplacian,
                    const EpidemicState& state);

/// Discrete action of the diffusion next-generation operator on a field.
Field apply_kdelta(const ModelParams& params, const NeumannLaplacian& laplacian,
                   const Field& s, const Field& f, double diffusivity = 1.0);

/// Principal eigenpair of the diffusion next-generation operator via the
/// shifted-inverse construction: for a trial shift M the dominant eigenvalue
/// Lambda_M of phi -> (-Laplacian + M gamma)^{-1}(S integral(beta phi)) is
/// computed by power iteration with one elliptic solve per step; the unit
/// crossing of the Lambda curve is located by bisection in ln M. The adjoint
/// eigenfunction comes from the transposed coupling at the crossing.
DiffusionSpectralResult kdelta_eigenpair(const ModelParams& params, const Field& s,
                                         double tol = 1e-10,
                                         const Field* s_norm = nullptr,
                                         double diffusivity = 1.0);

/// Monotone elliptic iteration for the diffusion final size: Phi_{k+1} solves
/// -Laplacian(Phi) + gamma Phi = S0 exp(integral(beta (Phi_k - Phi_0))) from
/// Phi_0; S_infinity is reconstructed from the limit.
struct DiffusionFinalSize {
    Field s_infinity;
    Field phi_0;
    Field phi_infinity;
    int iterations = 0;
    double residual = 0.0;        ///< inf-norm defect of -Lap(Phi_inf)+gamma Phi_inf = S_inf
    double attack_rate = 0.0;
    int damping_events = 0;
};
DiffusionFinalSize solve_final_size_diffusion(const Scenario& scenario,
                                              double tol = 1e-12,
                                              long max_iter = 1000000,
                                              double diffusivity = 1.0);

/// T0 for the diffusion radius r(K^Delta_{S(t)}): bracketing on the stored
/// trajectory then bisection with local re-integration.
double diffusion_t0(const Trajectory& trajectory, const Scenario& scenario,
                    double tol = 1e-8, double diffusivity = 1.0);

}  // namespace epi
