#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eventfuse/event_algebra.hpp"

namespace eventfuse {

// Nonnegative mass over every product-space cell of the marginals' features,
// consistent with the stored marginals.
class JointDistribution {
public:
    // Validates normalization and that each single-feature marginalization
    // reproduces the stored marginal within kProbabilityTolerance.
    JointDistribution(std::vector<ProbabilityReport> marginals, std::vector<double> mass);

    // Marginals computed from the mass; used for hand-built joints.
    static JointDistribution from_mass(const Catalog& catalog, std::vector<double> mass);

    const Catalog& features() const noexcept { return catalog_; }
    const std::vector<ProductCell>& cells() const noexcept { return cells_; }
    const std::vector<double>& mass() const noexcept { return mass_; }
    const std::vector<ProbabilityReport>& marginals() const noexcept { return marginals_; }
    std::size_t num_features() const noexcept { return catalog_.size(); }

    // Throws ReferenceError for unknown features.
    std::size_t feature_index(std::string_view feature_id) const;
    bool has_feature(std::string_view feature_id) const;

private:
    std::vector<ProbabilityReport> marginals_;
    Catalog catalog_;
    std::vector<ProductCell> cells_;
    std::vector<double> mass_;
};

// rho in [0, 1]: weight of the max-MI coupling in the blend.
class CorrelationCoefficient {
public:
    explicit CorrelationCoefficient(double rho);
    double value() const noexcept { return rho_; }

private:
    double rho_;
};

// Product of marginals.
JointDistribution min_mi_joint(std::span<const ProbabilityReport> marginals);

struct GreedyCoupling {
    JointDistribution joint;
    int iterations = 0;
    // Largest per-marginal residual total after each iteration.
    std::vector<double> residual_trace;
};

// Joint-entropy-minimizing greedy coupling: each step places the smallest of
// the per-marginal residual maxima on the cell of those argmax events.
GreedyCoupling greedy_coupling(std::span<const ProbabilityReport> marginals);
JointDistribution max_mi_joint_greedy(std::span<const ProbabilityReport> marginals);

// rho * max_mi + (1 - rho) * min_mi, cellwise.
JointDistribution blend_joint(const JointDistribution& max_mi, const JointDistribution& min_mi,
                              CorrelationCoefficient rho);

// Bits.
double joint_entropy(const JointDistribution& joint);
double entropy_bits(std::span<const double> probs);
double mutual_information(const JointDistribution& joint, std::string_view feature_a,
                          std::string_view feature_b);

ProbabilityReport marginalize(const JointDistribution& joint, std::string_view feature_id);

// |Pearson correlation| clamped to [0, 1].
CorrelationCoefficient estimate_rho(std::span<const double> values_a, std::span<const double> values_b);
double pearson_correlation(std::span<const double> values_a, std::span<const double> values_b);

// Tab-separated: header of feature ids then "mass"; one row per cell.
void write_joint_table(std::ostream& out, const JointDistribution& joint);
JointDistribution read_joint_table(std::istream& in, const Catalog& catalog);

}  // namespace eventfuse
