#include "epi/trait_domain.hpp"

namespace epi {

TraitDomain TraitDomain::interval(double lower, double upper, Eigen::Index n) {
    if (!(upper > lower))
        throw std::invalid_argument("interval domain: upper must exceed lower");
    if (n < 3)
        throw std::invalid_argument("interval domain: need at least 3 nodes");
    TraitDomain d;
    d.kind_ = DomainKind::Interval;
    d.lower_ = lower;
    d.upper_ = upper;
    d.nodes_ = Field::LinSpaced(n, lower, upper);
    const double h = (upper - lower) / static_cast<double>(n - 1);
    d.weights_ = Field::Constant(n, h);
    d.weights_(0) = 0.5 * h;
    d.weights_(n - 1) = 0.5 * h;
    return d;
}

TraitDomain TraitDomain::discrete(Field weights, std::vector<std::string> labels) {
    const Eigen::Index n = weights.size();
    if (n < 1) throw std::invalid_argument("discrete domain: empty weight list");
    if ((weights.array() <= 0.0).any())
        throw std::invalid_argument("discrete domain: weights must be positive");
    if (!labels.empty() && static_cast<Eigen::Index>(labels.size()) != n)
        throw std::invalid_argument("discrete domain: label count mismatch");
    if (labels.empty()) {
        labels.reserve(n);
        for (Eigen::Index i = 0; i < n; ++i)
            labels.push_back("w" + std::to_string(i));
    }
    TraitDomain d;
    d.kind_ = DomainKind::Discrete;
    d.nodes_ = Field::LinSpaced(n, 0.0, static_cast<double>(n - 1));
    d.weights_ = std::move(weights);
    d.labels_ = std::move(labels);
    return d;
}

double TraitDomain::spacing() const {
    if (kind_ != DomainKind::Interval)
        throw std::logic_error("spacing() is defined for interval domains only");
    return (upper_ - lower_) / static_cast<double>(nodes_.size() - 1);
}

void require_aligned(const TraitDomain& domain, const Field& f, const char* what) {
    if (f.size() != domain.size())
        throw std::invalid_argument(std::string(what) +
                                    ": field size does not match domain");
}

void require_aligned(const TraitDomain& domain, const Kernel& k, const char* what) {
    if (k.rows() != domain.size() || k.cols() != domain.size())
        throw std::invalid_argument(std::string(what) +
                                    ": kernel shape does not match domain");
}

double integrate(const TraitDomain& domain, const Field& f) {
    require_aligned(domain, f, "integrate");
    return domain.weights().dot(f);
}

Field apply_kernel(const TraitDomain& domain, const Kernel& k, const Field& f) {
    require_aligned(domain, k, "apply_kernel");
    require_aligned(domain, f, "apply_kernel");
    return k * domain.weights().cwiseProduct(f);
}

}  // namespace epi
