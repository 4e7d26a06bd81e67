#include "eventfuse/baselines.hpp"

#include <bit>
#include <cmath>
#include <numeric>

#include "eventfuse/errors.hpp"

namespace eventfuse {

MassFunction::MassFunction(int frame_size, std::map<Subset, double> masses)
    : frame_size_(frame_size), masses_(std::move(masses)) {
    if (frame_size < 1 || frame_size > 63) throw ValidationError("frame size must lie in [1, 63]");
    double total = 0.0;
    for (auto it = masses_.begin(); it != masses_.end();) {
        if (it->first == 0 && it->second != 0.0) throw ValidationError("the empty set carries no mass");
        if (it->first & ~frame()) throw ValidationError("focal set lies outside the frame");
        if (!(it->second >= 0.0)) throw ValidationError("masses must be nonnegative");
        total += it->second;
        it = it->second == 0.0 ? masses_.erase(it) : std::next(it);
    }
    if (std::abs(total - 1.0) > 1e-9) throw ValidationError("masses sum to " + std::to_string(total) + ", not 1");
}

MassFunction MassFunction::vacuous(int frame_size) {
    return MassFunction(frame_size, {{(Subset{1} << frame_size) - 1, 1.0}});
}

MassFunction MassFunction::from_probabilities(std::span<const double> probs, double reliability) {
    if (!(reliability >= 0.0 && reliability <= 1.0)) throw ValidationError("reliability must lie in [0, 1]");
    const int n = static_cast<int>(probs.size());
    if (n < 1 || n > 63) throw ValidationError("frame size must lie in [1, 63]");
    std::map<Subset, double> m;
    double placed = 0.0;
    for (int i = 0; i < n; ++i) {
        if (!(probs[i] >= 0.0)) throw ValidationError("probabilities must be nonnegative");
        const double v = reliability * probs[i];
        m[Subset{1} << i] += v;
        placed += v;
    }
    m[(Subset{1} << n) - 1] += std::max(0.0, 1.0 - placed);
    return MassFunction(n, std::move(m));
}

double MassFunction::mass(Subset s) const {
    const auto it = masses_.find(s);
    return it == masses_.end() ? 0.0 : it->second;
}

MassFunction dempster_combine(const MassFunction& a, const MassFunction& b) {
    if (a.frame_size() != b.frame_size()) throw IncompatibleError("mass functions use different frames");
    std::map<Subset, double> joint;
    double conflict = 0.0;
    for (const auto& [sa, ma] : a.masses())
        for (const auto& [sb, mb] : b.masses()) {
            const Subset s = sa & sb;
            if (s == 0)
                conflict += ma * mb;
            else
                joint[s] += ma * mb;
        }
    const double keep = 1.0 - conflict;
    if (keep <= 1e-15) throw ConflictError("sources are in total conflict (K = 1)");
    for (auto& [s, m] : joint) m /= keep;
    // Absorb rounding so the result passes the unit-sum check.
    double total = 0.0;
    for (const auto& [s, m] : joint) total += m;
    for (auto& [s, m] : joint) m /= total;
    return MassFunction(a.frame_size(), std::move(joint));
}

std::vector<double> pignistic(const MassFunction& m) {
    std::vector<double> p(m.frame_size(), 0.0);
    for (const auto& [s, v] : m.masses()) {
        const double share = v / double(std::popcount(s));
        for (int i = 0; i < m.frame_size(); ++i)
            if (s & (Subset{1} << i)) p[i] += share;
    }
    return p;
}

std::vector<double> fuse_similar_sensors(const std::vector<std::vector<double>>& reports,
                                         std::span<const double> weights) {
    if (reports.empty()) throw ValidationError("no reports to fuse");
    if (reports.size() != weights.size()) throw ValidationError("one weight per report is required");
    const std::size_t n = reports.front().size();
    double total = 0.0;
    for (std::size_t r = 0; r < reports.size(); ++r) {
        if (reports[r].size() != n) throw IncompatibleError("reports have different lengths");
        if (!(weights[r] >= 0.0)) throw ValidationError("weights must be nonnegative");
        total += weights[r];
    }
    if (!(total > 0.0)) throw ValidationError("weights are all zero");
    std::vector<double> out(n, 0.0);
    for (std::size_t r = 0; r < reports.size(); ++r)
        for (std::size_t j = 0; j < n; ++j) out[j] += weights[r] / total * reports[r][j];
    return out;
}

Eigen::MatrixXd concatenate_samples(const std::vector<Eigen::MatrixXd>& per_sensor_samples) {
    if (per_sensor_samples.empty()) throw ValidationError("no sensors to concatenate");
    const auto n = per_sensor_samples.front().rows();
    Eigen::Index cols = 0;
    for (const auto& m : per_sensor_samples) {
        if (m.rows() != n) throw ValidationError("sensor sample counts are misaligned");
        cols += m.cols();
    }
    Eigen::MatrixXd out(n, cols);
    Eigen::Index at = 0;
    for (const auto& m : per_sensor_samples) {
        out.middleCols(at, m.cols()) = m;
        at += m.cols();
    }
    return out;
}

WeightMatrix fuse_feature_concatenation(const std::vector<Eigen::MatrixXd>& per_sensor_samples,
                                        const std::vector<int>& labels, int num_classes, const SvmConfig& config) {
    const Eigen::MatrixXd x = concatenate_samples(per_sensor_samples);
    if (static_cast<std::size_t>(x.rows()) != labels.size()) throw ValidationError("labels are misaligned");
    return train_multiclass_svm(LabeledDataset::with_bias(x, labels, num_classes), config);
}

}  // namespace eventfuse
