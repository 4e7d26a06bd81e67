#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "eventfuse/classifiers.hpp"

namespace eventfuse {

// Subsets of a frame of at most 63 hypotheses, as bit masks. Bit i stands for
// hypothesis i; the full mask is the frame itself.
using Subset = std::uint64_t;

class MassFunction {
public:
    MassFunction(int frame_size, std::map<Subset, double> masses);

    static MassFunction vacuous(int frame_size);
    // Singleton masses reliability * p_i, remainder on the frame.
    static MassFunction from_probabilities(std::span<const double> probs, double reliability = 0.9);

    int frame_size() const noexcept { return frame_size_; }
    Subset frame() const noexcept { return (Subset{1} << frame_size_) - 1; }
    const std::map<Subset, double>& masses() const noexcept { return masses_; }
    double mass(Subset s) const;

private:
    int frame_size_;
    std::map<Subset, double> masses_;
};

// Conjunctive combination renormalized by 1 - K. Throws ConflictError when the
// sources are in total conflict.
MassFunction dempster_combine(const MassFunction& a, const MassFunction& b);

// BetP(i) = sum over focal sets A containing i of m(A) / |A|.
std::vector<double> pignistic(const MassFunction& m);

// Weight-normalized convex combination of equal-length reports.
std::vector<double> fuse_similar_sensors(const std::vector<std::vector<double>>& reports,
                                         std::span<const double> weights);

// Row-wise concatenation of aligned sensor matrices (raw features, no bias).
Eigen::MatrixXd concatenate_samples(const std::vector<Eigen::MatrixXd>& per_sensor_samples);

// One SVM over object classes trained on concatenated sensor vectors.
WeightMatrix fuse_feature_concatenation(const std::vector<Eigen::MatrixXd>& per_sensor_samples,
                                        const std::vector<int>& labels, int num_classes, const SvmConfig& config);

}  // namespace eventfuse
