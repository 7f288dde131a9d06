#pragma once

#include "epi/model.hpp"
#include "epi/spectral.hpp"

#include <optional>

namespace epi {

/// Final-size equation data: ln s - integral(beta/gamma s) = A with
/// A = ln S0 - integral(beta/gamma (S0+E0+I0)).
struct FinalSizeProblem {
    ModelParams params;
    EpidemicState initial;
    Field affine;  ///< A(x)
    std::optional<EpidemicState> baseline_state;  ///< state at time T for the contraction scheme
};

enum class FinalSizeMethod { Monotone, Contraction };

struct FinalSizeSolution {
    Field s_infinity;
    Field phi_infinity;  ///< integral(beta/gamma S_infinity)
    FinalSizeMethod method = FinalSizeMethod::Monotone;
    int iterations = 0;
    double residual = 0.0;  ///< inf-norm residual of the final size equation
    std::optional<double> contraction_factor;
    double attack_rate = 0.0;  ///< integral(S0 - S_infinity)
    double radius_at_limit = 0.0;  ///< r(K_{S_infinity})
};

FinalSizeProblem make_problem(const Scenario& scenario);

/// Nodewise residual ln s - integral(beta/gamma s) - A; requires s > 0.
Field residual(const FinalSizeProblem& problem, const Field& s);

/// Monotone iteration ln S_{k+1} = integral(beta/gamma S_k) + A from S0.
/// The iterates decrease pointwise; Aitken acceleration is applied when it
/// keeps the iterate on the super-solution side.
FinalSizeSolution solve_monotone(const FinalSizeProblem& problem,
                                 double tol = 1e-12, long max_iter = 1000000);

/// Weighted-norm contraction below the herd-immunity state: fixed-point
/// iteration on Phi clamped to {0 <= u <= Phi(T,.)}, convergence in
/// ||u||_T = integral(psi_T S_T |u|). Requires r(K_{S(T,.)}) < 1.
FinalSizeSolution solve_contraction(const FinalSizeProblem& problem,
                                    double tol = 1e-12, long max_iter = 1000000);

/// Both roots of the block-2 scalar identity for a block-triangular
/// two-block kernel with no initial infection in block 2, each extended to a
/// full two-point solution. Falls back to solve_monotone (single solution)
/// when block 2 starts infected.
std::vector<FinalSizeSolution> enumerate_block_solutions(const Scenario& scenario,
                                                         double tol = 1e-12);

/// Aggregated block values of a 2-point solution (for reporting).
struct BlockFinalSize {
    double s1_infinity = 0.0;
    double s2_infinity = 0.0;
};
BlockFinalSize block_values(const TraitDomain& domain, const FinalSizeSolution& sol);

}  // namespace epi
