#include "epi/model.hpp"

#include <cmath>
#include <deque>
#include <sstream>

namespace epi {

Kernel RankNKernel::to_dense(const TraitDomain& domain) const {
    const Eigen::Index n = domain.size();
    Kernel k = Kernel::Zero(n, n);
    for (size_t i = 0; i < beta.size(); ++i) {
        require_aligned(domain, beta[i], "RankNKernel");
        require_aligned(domain, p[i], "RankNKernel");
        k.noalias() += beta[i] * p[i].transpose();
    }
    return k;
}

ModelParams ModelParams::make(TraitDomain domain, Field alpha, Field gamma,
                              Kernel beta, std::optional<RankNKernel> low_rank) {
    require_aligned(domain, alpha, "ModelParams alpha");
    require_aligned(domain, gamma, "ModelParams gamma");
    require_aligned(domain, beta, "ModelParams beta");
    ModelParams p;
    p.alpha_inf = alpha.minCoeff();
    p.gamma_inf = gamma.minCoeff();
    p.strict_positivity = (beta.array() > 0.0).all();
    p.domain = std::move(domain);
    p.alpha = std::move(alpha);
    p.gamma = std::move(gamma);
    p.beta = std::move(beta);
    p.low_rank = std::move(low_rank);
    return p;
}

double EpidemicState::total_mass(const TraitDomain& domain) const {
    return integrate(domain, S + E + I + R);
}

double EpidemicState::infected_mass(const TraitDomain& domain) const {
    return integrate(domain, E + I);
}

std::string ValidationReport::summary() const {
    std::ostringstream os;
    if (ok()) os << "valid";
    for (const auto& e : errors) os << "\nerror: " << e;
    for (const auto& w : warnings) os << "\nwarning: " << w;
    return os.str();
}

bool kernel_irreducible(const Kernel& beta) {
    const Eigen::Index n = beta.rows();
    if (n == 1) return beta(0, 0) > 0.0;
    // strong connectivity: every node reachable from node 0 and node 0
    // reachable from every node
    auto reach = [&](bool transpose) {
        std::vector<char> seen(n, 0);
        std::deque<Eigen::Index> queue{0};
        seen[0] = 1;
        while (!queue.empty()) {
            const Eigen::Index u = queue.front();
            queue.pop_front();
            for (Eigen::Index v = 0; v < n; ++v) {
                const double edge = transpose ? beta(v, u) : beta(u, v);
                if (!seen[v] && edge > 0.0) {
                    seen[v] = 1;
                    queue.push_back(v);
                }
            }
        }
        for (Eigen::Index v = 0; v < n; ++v)
            if (!seen[v]) return false;
        return true;
    };
    return reach(false) && reach(true);
}

ValidationReport validate(const ModelParams& params, const EpidemicState& initial) {
    ValidationReport report;
    const TraitDomain& dom = params.domain;

    if (!(params.alpha_inf > 0.0))
        report.errors.push_back("incubation rate infimum must be positive");
    if (!(params.gamma_inf > 0.0))
        report.errors.push_back("recovery rate infimum must be positive");
    if ((params.beta.array() < 0.0).any())
        report.errors.push_back("contact kernel has negative entries");
    if (!params.beta.allFinite() || !params.alpha.allFinite() || !params.gamma.allFinite())
        report.errors.push_back("coefficients contain non-finite entries");

    for (const Field* f : {&initial.S, &initial.E, &initial.I, &initial.R}) {
        if (f->size() != dom.size()) {
            report.errors.push_back("initial state not aligned with domain");
            return report;
        }
    }
    if ((initial.S.array() < 0.0).any() || (initial.E.array() < 0.0).any() ||
        (initial.I.array() < 0.0).any() || (initial.R.array() < 0.0).any())
        report.errors.push_back("initial compartments must be nonnegative");
    if ((initial.S.array() <= 0.0).any())
        report.warnings.push_back("S0 is not strictly positive everywhere");

    const double mass = initial.total_mass(dom);
    if (!(mass > 0.0))
        report.errors.push_back("initial state has zero total mass");
    else if (std::abs(mass - 1.0) > 1e-8)
        report.warnings.push_back("initial total mass differs from 1; consider normalize()");

    if (initial.infected_mass(dom) <= 0.0)
        report.warnings.push_back("E0 + I0 vanishes: disease-free initial state");

    report.strictly_positive = params.strict_positivity;
    if (!params.strict_positivity) {
        if (kernel_irreducible(params.beta)) {
            report.warnings.push_back(
                "contact kernel has zero entries but is irreducible");
        } else {
            report.reducible = true;
            report.warnings.push_back(
                "reducible kernel: the final size equation may have multiple "
                "solutions; solvers report the fixed point they reach");
        }
    }
    return report;
}

EpidemicState normalize(const TraitDomain& domain, const EpidemicState& initial) {
    const double mass = initial.total_mass(domain);
    if (!(mass > 0.0))
        throw std::invalid_argument("normalize: zero total mass");
    EpidemicState out = initial;
    out.S /= mass;
    out.E /= mass;
    out.I /= mass;
    out.R /= mass;
    return out;
}

Scenario make_two_block_scenario(const TwoBlockSpec& spec) {
    for (double rate : {spec.alpha1, spec.alpha2, spec.beta1, spec.beta2,
                        spec.gamma1, spec.gamma2})
        if (!(rate > 0.0))
            throw std::invalid_argument("two-block scenario: rates must be positive");

    TraitDomain domain = TraitDomain::discrete(
        (Field(2) << spec.weight1, spec.weight2).finished(), {"block1", "block2"});

    Field alpha = (Field(2) << spec.alpha1, spec.alpha2).finished();
    Field gamma = (Field(2) << spec.gamma1, spec.gamma2).finished();
    Kernel beta(2, 2);
    beta << spec.beta1, spec.beta12, spec.beta21, spec.beta2;

    EpidemicState initial;
    initial.t = 0.0;
    initial.S = (Field(2) << spec.S1 / spec.weight1, spec.S2 / spec.weight2).finished();
    initial.E = (Field(2) << spec.E1 / spec.weight1, spec.E2 / spec.weight2).finished();
    initial.I = (Field(2) << spec.I1 / spec.weight1, spec.I2 / spec.weight2).finished();
    initial.R = (Field(2) << spec.R1 / spec.weight1, spec.R2 / spec.weight2).finished();

    Scenario scenario;
    scenario.params = ModelParams::make(std::move(domain), std::move(alpha),
                                        std::move(gamma), std::move(beta));
    scenario.initial = std::move(initial);
    scenario.name = "two-block";
    scenario.description = "piecewise-constant two-block kernel";
    scenario.two_block = spec;
    return scenario;
}

Field beta_over_gamma(const ModelParams& params, const Field& f) {
    return apply_kernel(params.domain, params.beta,
                        f.cwiseQuotient(params.gamma));
}

Field phi_field(const ModelParams& params, const EpidemicState& state) {
    return beta_over_gamma(params, state.S + state.E + state.I);
}

}  // namespace epi
