#pragma once

#include "epi/trait_domain.hpp"

#include <optional>
#include <string>
#include <vector>

namespace epi {

/// Low-rank contact kernel beta(x,y) = sum_i beta_i(x) p_i(y).
struct RankNKernel {
    std::vector<Field> beta;
    std::vector<Field> p;

    int rank() const { return static_cast<int>(beta.size()); }
    Kernel to_dense(const TraitDomain& domain) const;
};

/// Model coefficients on the grid. alpha is the incubation rate, gamma the
/// recovery rate, beta the contact kernel; alpha_inf/gamma_inf cache the
/// infima required to be positive by the standing hypotheses.
struct ModelParams {
    TraitDomain domain;
    Field alpha;
    Field gamma;
    Kernel beta;
    double alpha_inf = 0.0;
    double gamma_inf = 0.0;
    bool strict_positivity = false;

    /// Present when the kernel was declared in separable form.
    std::optional<RankNKernel> low_rank;

    static ModelParams make(TraitDomain domain, Field alpha, Field gamma,
                            Kernel beta,
                            std::optional<RankNKernel> low_rank = std::nullopt);
};

/// Compartment proportions (densities over the trait space) at one time.
struct EpidemicState {
    double t = 0.0;
    Field S, E, I, R;

    double total_mass(const TraitDomain& domain) const;
    double infected_mass(const TraitDomain& domain) const;  // integral of E+I
};

struct ValidationReport {
    std::vector<std::string> errors;
    std::vector<std::string> warnings;
    bool reducible = false;
    bool strictly_positive = false;

    bool ok() const { return errors.empty(); }
    std::string summary() const;
};

struct TwoBlockSpec {
    double weight1 = 1.0, weight2 = 1.0;  // measures of Omega_1, Omega_2
    double alpha1 = 0.0, alpha2 = 0.0;
    double beta1 = 0.0, beta2 = 0.0, beta12 = 0.0;
    double beta21 = 0.0;  // 0 keeps the kernel block-triangular
    double gamma1 = 0.0, gamma2 = 0.0;
    // block-aggregated initial proportions
    double S1 = 0.0, E1 = 0.0, I1 = 0.0, R1 = 0.0;
    double S2 = 0.0, E2 = 0.0, I2 = 0.0, R2 = 0.0;
};

struct Scenario {
    ModelParams params;
    EpidemicState initial;
    std::string name;
    std::string description;
    std::optional<TwoBlockSpec> two_block;
};

/// Checks the standing hypotheses on the coefficients and initial data.
/// Reducible kernels are reported as warnings (the nonuniqueness example
/// must stay runnable); hard violations (nonpositive rate infima, negative
/// compartments, zero mass) are errors.
ValidationReport validate(const ModelParams& params, const EpidemicState& initial);

/// Scales all compartments by one common factor so the total mass is 1.
EpidemicState normalize(const TraitDomain& domain, const EpidemicState& initial);

/// Kernel irreducibility via reachability on the adjacency graph of
/// strictly positive entries.
bool kernel_irreducible(const Kernel& beta);

/// Two-point discrete-domain scenario whose aggregated dynamics equal the
/// two-block ODE system. Block initial data are given as aggregated
/// proportions; densities are obtained by dividing by the block weights.
Scenario make_two_block_scenario(const TwoBlockSpec& spec);

/// x -> integral of beta(x,y)/gamma(y) f(y) dy; the pairing behind the
/// next-generation operator and the conserved quantity.
Field beta_over_gamma(const ModelParams& params, const Field& f);

/// Phi(t,.) recomputed from the state: beta/gamma paired with S+E+I.
Field phi_field(const ModelParams& params, const EpidemicState& state);

}  // namespace epi
