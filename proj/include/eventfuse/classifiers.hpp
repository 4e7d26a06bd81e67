#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "eventfuse/event_algebra.hpp"

namespace eventfuse {

// Training samples with the bias feature already appended: samples is
// N x (Q + 1) and its last column is all ones. Labels are 0-based.
struct LabeledDataset {
    Eigen::MatrixXd samples;
    std::vector<int> labels;
    int num_classes = 0;

    static LabeledDataset with_bias(const Eigen::MatrixXd& raw, std::vector<int> labels, int num_classes);
    void validate() const;
    Eigen::Index size() const { return samples.rows(); }
};

// One row of weights per event; the last column multiplies the bias feature.
struct WeightMatrix {
    Eigen::MatrixXd weights;

    int num_classes() const { return static_cast<int>(weights.rows()); }
    Eigen::VectorXd scores(const Eigen::Ref<const Eigen::VectorXd>& x) const { return weights * x; }
};

struct SvmConfig {
    double c = 1.0;
    double learning_rate = 1e-3;
    int epochs = 500;
    std::uint64_t seed = 0;
    // Step size decays geometrically from learning_rate to
    // learning_rate * final_lr_fraction over the run; 1 keeps it constant.
    double final_lr_fraction = 1e-4;

    void validate() const;
};

struct SvmTrainResult {
    WeightMatrix weights;
    // Objective at the start of every epoch, then once after the last update.
    std::vector<double> objective_trace;
};

// 0.5 ||W||^2 + C sum_n max_{t != y_n} max(0, 1 - w_{y_n}.x_n + w_t.x_n)
double svm_objective(const WeightMatrix& w, const LabeledDataset& data, double c);

// Largest margin violation over t != y; index of the worst competitor is
// written to worst (ties to the lowest index).
double multiclass_hinge(const Eigen::Ref<const Eigen::VectorXd>& scores, int y, int* worst = nullptr);

// Full-batch subgradient descent from W = 0. Deterministic.
SvmTrainResult train_multiclass_svm_traced(const LabeledDataset& data, const SvmConfig& config);
WeightMatrix train_multiclass_svm(const LabeledDataset& data, const SvmConfig& config);

int predict(const WeightMatrix& w, const Eigen::Ref<const Eigen::VectorXd>& x);
double accuracy(const WeightMatrix& w, const LabeledDataset& data);

// Max-shifted softmax.
std::vector<double> softmax(std::span<const double> scores);
std::vector<double> event_probabilities(const WeightMatrix& w, const Eigen::Ref<const Eigen::VectorXd>& x);
ProbabilityReport event_report(const WeightMatrix& w, const Eigen::Ref<const Eigen::VectorXd>& x, EventSetPtr events);

// [mean - 2 sd, mean + 2 sd) per class (sample standard deviation).
std::vector<EventSpec> derive_event_ranges(const std::vector<std::vector<double>>& values_per_class,
                                           const std::vector<std::string>& ids = {});

// Accuracy-weighted average of reports over one event set.
ProbabilityReport combine_duplicate_feature_reports(std::span<const ProbabilityReport> reports,
                                                    std::span<const double> accuracies);

// |X(k)| of the plain DFT for k = 0 .. N/2.
std::vector<double> magnitude_spectrum(std::span<const double> signal);

// Per-column z-scoring fitted on training rows. Constant columns keep unit scale.
struct Standardizer {
    Eigen::RowVectorXd mean;
    Eigen::RowVectorXd scale;

    static Standardizer fit(const Eigen::MatrixXd& rows);
    Eigen::MatrixXd apply(const Eigen::MatrixXd& rows) const;
};

// Two '#' header lines (feature id, event ids) followed by one tab-separated
// row per event.
void write_weights(std::ostream& out, const WeightMatrix& w, const std::string& feature_id,
                   const std::vector<std::string>& event_ids);
WeightMatrix read_weights(std::istream& in, std::string* feature_id = nullptr,
                          std::vector<std::string>* event_ids = nullptr);

// Shared by the weight and operator persistence formats.
void write_matrix_rows(std::ostream& out, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix_rows(std::istream& in, Eigen::Index rows);

}  // namespace eventfuse
