#include "epi/final_size.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace epi {

FinalSizeProblem make_problem(const Scenario& scenario) {
    const EpidemicState& init = scenario.initial;
    if ((init.S.array() <= 0.0).any())
        throw std::invalid_argument("final size problem requires S0 > 0 pointwise");
    FinalSizeProblem problem;
    problem.params = scenario.params;
    problem.initial = init;
    problem.affine = init.S.array().log().matrix() -
                     beta_over_gamma(scenario.params, init.S + init.E + init.I);
    return problem;
}

Field residual(const FinalSizeProblem& problem, const Field& s) {
    require_aligned(problem.params.domain, s, "final size residual");
    if ((s.array() <= 0.0).any())
        throw std::domain_error("final size residual: s must be positive");
    return s.array().log().matrix() - beta_over_gamma(problem.params, s) -
           problem.affine;
}

namespace {

double radius_or_nan(const ModelParams& params, const Field& s) {
    PowerIterationResult pi = power_iteration(build_operator(params, s).matrix);
    return pi.converged ? pi.eigenvalue : std::numeric_limits<double>::quiet_NaN();
}

FinalSizeSolution finish(const FinalSizeProblem& problem, Field s_inf,
                         FinalSizeMethod method, int iterations) {
    FinalSizeSolution sol;
    sol.residual = residual(problem, s_inf).cwiseAbs().maxCoeff();
    sol.phi_infinity = beta_over_gamma(problem.params, s_inf);
    sol.method = method;
    sol.iterations = iterations;
    sol.attack_rate = integrate(problem.params.domain, problem.initial.S - s_inf);
    sol.radius_at_limit = radius_or_nan(problem.params, s_inf);
    sol.s_infinity = std::move(s_inf);
    return sol;
}

/// Root of a continuous f on [lo, hi] with f(lo), f(hi) of opposite sign.
double bisect(const std::function<double(double)>& f, double lo, double hi,
              double tol) {
    double flo = f(lo);
    double fhi = f(hi);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if (flo * fhi > 0.0)
        throw std::runtime_error("bisect: endpoints do not bracket a root");
    for (int iter = 0; iter < 200 && hi - lo > tol; ++iter) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if (fm == 0.0) return mid;
        if (fm * flo < 0.0) {
            hi = mid;
        } else {
            lo = mid;
            flo = fm;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace

FinalSizeSolution solve_monotone(const FinalSizeProblem& problem, double tol,
                                 long max_iter) {
    const ModelParams& params = problem.params;
    Field prev2, prev1;
    Field s = problem.initial.S;
    double gap = std::numeric_limits<double>::infinity();
    for (long iter = 1; iter <= max_iter; ++iter) {
        Field next = (beta_over_gamma(params, s) + problem.affine).array().exp();
        if ((next.array() > s.array() + 1e-12).any())
            throw std::runtime_error("solve_monotone: iteration is not decreasing; "
                                     "invalid problem");
        gap = (next - s).cwiseAbs().maxCoeff();
        if (gap <= tol)
            return finish(problem, std::move(next), FinalSizeMethod::Monotone,
                          static_cast<int>(iter));

        // Aitken delta-squared, kept only while it stays a super-solution
        if (prev2.size() > 0) {
            Field accel = next;
            bool usable = true;
            for (Eigen::Index i = 0; i < next.size() && usable; ++i) {
                const double denom = next(i) - 2.0 * prev1(i) + prev2(i);
                if (std::abs(denom) > 1e3 * std::numeric_limits<double>::epsilon()) {
                    const double d = next(i) - prev1(i);
                    accel(i) = next(i) - d * d / denom;
                }
                if (!(accel(i) > 0.0) || accel(i) > prev1(i)) usable = false;
            }
            if (usable && (residual(problem, accel).array() >= -1e-12).all()) {
                prev2.resize(0);
                prev1.resize(0);
                s = std::move(accel);
                continue;
            }
        }
        prev2 = std::move(prev1);
        prev1 = s;
        s = std::move(next);
    }
    throw std::runtime_error("solve_monotone: max_iter exceeded, current gap " +
                             std::to_string(gap) +
                             " (near-critical problems converge slowly)");
}

FinalSizeSolution solve_contraction(const FinalSizeProblem& problem, double tol,
                                    long max_iter) {
    if (!problem.baseline_state)
        throw std::invalid_argument("solve_contraction: baseline state at time T "
                                    "is required");
    const ModelParams& params = problem.params;
    const EpidemicState& base = *problem.baseline_state;
    const Field& s_T = base.S;

    SpectralResult spec = spectral_radius(build_operator(params, s_T), 1e-12, 100000,
                                          &problem.initial.S);
    const double r_T = spec.radius;
    if (r_T >= 1.0)
        throw std::runtime_error("solve_contraction: r(K_{S(T)}) = " +
                                 std::to_string(r_T) + " >= 1; pick a later T");

    const Field phi_T = phi_field(params, base);
    const Field norm_weight = spec.psi.cwiseProduct(s_T);
    auto norm_T = [&](const Field& u) {
        return integrate(params.domain, norm_weight.cwiseProduct(u.cwiseAbs()));
    };
    auto fixed_point_map = [&](const Field& u) -> Field {
        return beta_over_gamma(params, s_T.cwiseProduct((u - phi_T).array().exp().matrix()));
    };

    Field u = phi_T;
    double prev_diff_norm = -1.0;
    double factor = 0.0;
    // below this, the ratio of successive differences is roundoff noise
    const double norm_floor = 1e-6 * std::max(1.0, norm_T(phi_T));
    for (long iter = 1; iter <= max_iter; ++iter) {
        Field next = fixed_point_map(u).cwiseMax(0.0).cwiseMin(phi_T);
        const double diff_inf = (next - u).cwiseAbs().maxCoeff();
        const double diff_norm = norm_T(next - u);
        if (prev_diff_norm > norm_floor)
            factor = std::max(factor, diff_norm / prev_diff_norm);
        prev_diff_norm = diff_norm;
        u = std::move(next);
        if (diff_inf <= tol) {
            if (factor > r_T + 1e-9)
                throw std::runtime_error(
                    "solve_contraction: observed contraction factor " +
                    std::to_string(factor) + " exceeds the radius bound " +
                    std::to_string(r_T));
            Field s_inf = s_T.cwiseProduct((u - phi_T).array().exp().matrix());
            FinalSizeSolution sol = finish(problem, std::move(s_inf),
                                           FinalSizeMethod::Contraction,
                                           static_cast<int>(iter));
            sol.contraction_factor = factor;
            return sol;
        }
    }
    throw std::runtime_error("solve_contraction: max_iter exceeded");
}

std::vector<FinalSizeSolution> enumerate_block_solutions(const Scenario& scenario,
                                                         double tol) {
    if (!scenario.two_block)
        throw std::invalid_argument("enumerate_block_solutions: scenario does not "
                                    "carry two-block structure");
    const TwoBlockSpec& tb = *scenario.two_block;
    if (tb.beta21 != 0.0)
        throw std::invalid_argument("enumerate_block_solutions: kernel must be "
                                    "block upper-triangular (beta21 = 0)");

    const FinalSizeProblem problem = make_problem(scenario);
    if (tb.E2 + tb.I2 > 0.0)
        return {solve_monotone(problem, tol)};

    const double b2 = tb.beta2 / tb.gamma2;
    const double rhs2 = std::log(tb.S2) - b2 * tb.S2;  // E2 + I2 = 0
    auto block2 = [&](double s) { return std::log(s) - b2 * s - rhs2; };
    const double crest = 1.0 / b2;  // maximum of the concave block-2 identity

    std::vector<double> s2_roots{tb.S2};
    if (std::abs(tb.S2 - crest) > 1e-14) {
        // second root lies on the other side of the crest
        double lo, hi;
        if (tb.S2 > crest) {
            hi = crest;
            lo = hi;
            while (block2(lo) > 0.0) lo *= 0.5;
        } else {
            lo = crest;
            hi = lo;
            while (block2(hi) > 0.0) hi *= 2.0;
        }
        const double other = bisect(block2, lo, hi, 1e-15);
        if (other < tb.S2) s2_roots.push_back(other);
        // a second root above S2^0 is non-physical and is not reported
    }

    const double b1 = tb.beta1 / tb.gamma1;
    const double cross = tb.beta12 / tb.gamma2;
    const double base1 = std::log(tb.S1) - b1 * (tb.S1 + tb.E1 + tb.I1) -
                         cross * (tb.S2 + tb.E2 + tb.I2);

    std::vector<FinalSizeSolution> solutions;
    for (double s2 : s2_roots) {
        auto block1 = [&](double s) {
            return std::log(s) - b1 * s - (base1 + cross * s2);
        };
        double hi = std::min(tb.S1, 1.0 / b1);
        double lo = hi;
        while (block1(lo) > 0.0) lo *= 0.5;
        const double s1 = bisect(block1, lo, hi, 1e-15);

        Field s_inf(2);
        s_inf << s1 / tb.weight1, s2 / tb.weight2;
        FinalSizeSolution sol = finish(problem, std::move(s_inf),
                                       FinalSizeMethod::Monotone, 0);
        if (sol.residual > 1e-9)
            throw std::runtime_error("enumerate_block_solutions: block root does "
                                     "not satisfy the full final size equation");
        solutions.push_back(std::move(sol));
    }
    return solutions;
}

BlockFinalSize block_values(const TraitDomain& domain, const FinalSizeSolution& sol) {
    if (domain.size() != 2)
        throw std::invalid_argument("block_values: 2-point domain expected");
    BlockFinalSize out;
    out.s1_infinity = domain.weights()(0) * sol.s_infinity(0);
    out.s2_infinity = domain.weights()(1) * sol.s_infinity(1);
    return out;
}

}  // namespace epi
