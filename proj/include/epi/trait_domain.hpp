#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace epi {

/// A function of the trait, sampled at the domain nodes.
using Field = Eigen::VectorXd;

/// A two-trait kernel sampled on the node grid: entry (i,j) = k(node_i, node_j).
using Kernel = Eigen::MatrixXd;

enum class DomainKind { Interval, Discrete };

/// Discretized trait space with quadrature weights, so that every integral
/// over the domain becomes a weighted sum. Interval domains use a uniform
/// grid with composite trapezoid weights; discrete domains carry
/// user-supplied subset measures.
class TraitDomain {
public:
    /// Empty domain; every accessor is valid but size() is 0.
    TraitDomain() = default;

    static TraitDomain interval(double lower, double upper, Eigen::Index n);
    static TraitDomain discrete(Field weights,
                                std::vector<std::string> labels = {});

    DomainKind kind() const { return kind_; }
    Eigen::Index size() const { return weights_.size(); }
    double lower() const { return lower_; }
    double upper() const { return upper_; }
    /// Grid spacing; interval domains only.
    double spacing() const;
    const Field& nodes() const { return nodes_; }
    const Field& weights() const { return weights_; }
    const std::vector<std::string>& labels() const { return labels_; }
    /// |Omega|: interval length, or total weight for discrete domains.
    double measure() const { return weights_.sum(); }

private:
    DomainKind kind_ = DomainKind::Interval;
    double lower_ = 0.0;
    double upper_ = 0.0;
    Field nodes_;
    Field weights_;
    std::vector<std::string> labels_;
};

/// Quadrature of f over the domain: sum_i w_i f_i.
double integrate(const TraitDomain& domain, const Field& f);

/// x -> integral of k(x,y) f(y) dy, realized as K (w .* f).
Field apply_kernel(const TraitDomain& domain, const Kernel& k, const Field& f);

/// Throws on size mismatch between a field and the domain.
void require_aligned(const TraitDomain& domain, const Field& f,
                     const char* what);
void require_aligned(const TraitDomain& domain, const Kernel& k,
                     const char* what);

}  // namespace epi
