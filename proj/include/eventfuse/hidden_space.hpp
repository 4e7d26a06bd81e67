#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "eventfuse/classifiers.hpp"

namespace eventfuse {

// d x d_l, entries N(0, 1) / sqrt(d_l); fixed once sampled.
struct RandomProjection {
    Eigen::MatrixXd matrix;
    std::uint64_t seed = 0;

    static RandomProjection sample(int d, int d_l, std::uint64_t seed);
};

struct HsConfig {
    double c1 = 1.0;
    double c2 = 1.0;
    double c3 = 1.0;
    double learning_rate = 1e-3;
    int epochs = 200;
    int d = 2;
    std::uint64_t seed = 0;
    // Geometric step decay as in SvmConfig; 1 keeps the step constant.
    double final_lr_fraction = 1.0;

    // d must stay below every sensor dimension.
    void validate(int min_sensor_dim) const;
};

// AB - BA.
Eigen::MatrixXd commutator(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

double hinge_slack(const WeightMatrix& w, const Eigen::Ref<const Eigen::VectorXd>& h, int y);

// Sensor observations as rows (N x d_r), bias column included when wanted.
struct SensorData {
    std::string id;
    Eigen::MatrixXd samples;
};

struct FeatureTask {
    std::string feature_id;
    std::string owner;
    int num_events = 0;
    std::vector<int> labels;
};

// All sensors observe the same N objects in the same order.
struct HsProblem {
    std::vector<SensorData> sensors;
    std::vector<FeatureTask> features;

    void validate() const;
    std::size_t sensor_index(const std::string& id) const;
    int min_sensor_dim() const;
};

// One classifier shared by the hinge terms of the listed operator slots.
struct HingeTask {
    std::vector<int> labels;
    int num_events = 0;
    std::vector<std::size_t> sources;
};

struct HsVariables {
    std::vector<Eigen::MatrixXd> w;  // one J x d per task
    std::vector<Eigen::MatrixXd> z;  // one d x d per operator slot
};

struct HsTerms {
    double regularizer = 0.0;
    double hinge = 0.0;        // C1-weighted
    double commutation = 0.0;  // C2-weighted, each unordered pair once
    double alignment = 0.0;    // C3-weighted, each unordered pair once

    double total() const { return regularizer + hinge + commutation + alignment; }
};

// 1/2 sum ||W||^2 + C1 sum hinge + 1/2 sum_{r != s} (C2 ||[Z_r, Z_s]||^2
//   + C3 sum_n ||Z_r U_r x_rn - Z_s U_s x_sn||^2), every slot paired with
// every other. The gradient is exact away from hinge kinks.
class HiddenSpaceObjective {
public:
    // projected[r] = U_r X_r, d x N.
    HiddenSpaceObjective(std::vector<Eigen::MatrixXd> projected, std::vector<HingeTask> tasks, double c1, double c2,
                         double c3);

    HsTerms terms(const HsVariables& v) const;
    double value(const HsVariables& v) const { return terms(v).total(); }
    HsVariables gradient(const HsVariables& v) const;

    // Z = I, W = 0.
    HsVariables initial() const;
    // Mean over slot pairs of (1/N) sum_n ||Z_r U_r x_rn - Z_s U_s x_sn||^2.
    double mean_pairwise_gap(const HsVariables& v) const;
    // Smallest |V_tn| and smallest gap between the top two competitors;
    // both must be positive for the gradient to be differentiable.
    double kink_distance(const HsVariables& v) const;

    std::size_t num_slots() const { return projected_.size(); }
    const std::vector<HingeTask>& tasks() const { return tasks_; }
    int dim() const { return static_cast<int>(projected_.front().rows()); }

private:
    std::vector<Eigen::MatrixXd> projected_;
    std::vector<HingeTask> tasks_;
    double c1_, c2_, c3_;
};

struct HsTrace {
    std::vector<HsTerms> terms;  // before each epoch, then after the last
    std::vector<double> mean_gap;
};

// Simultaneous gradient steps on every variable from initial().
HsVariables minimize_hidden_space(const HiddenSpaceObjective& objective, const HsConfig& config,
                                  HsTrace* trace = nullptr);

enum class HiddenSpaceKind { Independent, Global };

// Z_k^{lr}: feature k owned by sensor l, applied to data of sensor r. Global
// operators have an empty feature and owner equal to source.
struct OperatorEntry {
    std::string feature;
    std::string owner;
    std::string source;
    Eigen::MatrixXd z;
    RandomProjection projection;
};

class OperatorSet {
public:
    OperatorSet() = default;
    OperatorSet(HiddenSpaceKind kind, int d, std::uint64_t seed, std::vector<OperatorEntry> entries);

    HiddenSpaceKind kind() const noexcept { return kind_; }
    int dim() const noexcept { return d_; }
    std::uint64_t seed() const noexcept { return seed_; }
    const std::vector<OperatorEntry>& entries() const noexcept { return entries_; }

    // Throws ReferenceError when absent. The feature is ignored for GHS.
    const OperatorEntry& find(const std::string& feature, const std::string& source) const;
    bool contains(const std::string& feature, const std::string& source) const;

    // Z U X^T for rows X (N x d_r); returns d x N.
    Eigen::MatrixXd transform(const std::string& feature, const std::string& source,
                              const Eigen::MatrixXd& samples) const;

private:
    HiddenSpaceKind kind_ = HiddenSpaceKind::Independent;
    int d_ = 0;
    std::uint64_t seed_ = 0;
    std::vector<OperatorEntry> entries_;
};

struct HiddenSpaceModel {
    OperatorSet operators;
    std::map<std::string, WeightMatrix> classifiers;  // by feature, J x d
    // By feature for IHS; a single entry keyed "" for GHS.
    std::map<std::string, HsTrace> traces;
};

HiddenSpaceModel train_independent_hidden_spaces(const HsProblem& problem, const HsConfig& config);
HiddenSpaceModel train_global_hidden_space(const HsProblem& problem, const HsConfig& config);

// Average of Z_k^{mr} U_k^{mr} X^r over the available sensors; d x N.
Eigen::MatrixXd recover_hidden_space(const OperatorSet& ops, const std::string& damaged_sensor,
                                     const std::string& feature,
                                     const std::map<std::string, Eigen::MatrixXd>& available);

// Event reports (rows of probabilities) for the columns of H.
std::vector<std::vector<double>> hidden_space_probabilities(const WeightMatrix& w, const Eigen::MatrixXd& h);

// Condition number of the eigenvector matrix; infinite when defective.
double eigenvector_condition_number(const Eigen::MatrixXd& z);

void write_operator_set(std::ostream& out, const OperatorSet& ops);
OperatorSet read_operator_set(std::istream& in);

}  // namespace eventfuse
