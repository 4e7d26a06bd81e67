#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "eventfuse/classifiers.hpp"
#include "eventfuse/hidden_space.hpp"
#include "eventfuse/synth_data.hpp"

namespace eventfuse {

struct RocCurve {
    std::vector<std::pair<double, double>> points;  // (fpr, tpr), (0, 0) first, (1, 1) last
    double auc = 0.0;
};

// Thresholds at every unique score, descending; trapezoidal area.
RocCurve compute_roc(const std::vector<double>& scores, const std::vector<bool>& positives);

enum class RhoMode { Value, Estimate, Optimize };

struct SensorConfig {
    std::string id;
    std::string kind;
    double snr_db = 20.0;
    // Subset of the kind's features; empty means all of them.
    std::vector<std::string> features;
};

struct EventOverride {
    bool derive = false;
    std::vector<EventSpec> events;
};

inline const std::vector<std::string> kBaselineMethods = {"sensor", "feature_concatenation", "similar_sensor_fusion",
                                                          "dempster_shafer"};
inline const std::vector<std::string> kDamageMethods = {"ignore", "ihs", "ghs"};

struct ExperimentConfig {
    std::string dataset = "field";  // space | field
    int samples = 600;
    std::uint64_t seed = 1;
    int repeats = 1;
    double train_fraction = 0.7;
    // Share of the training part held out for accuracies and rho search.
    double validation_fraction = 0.25;
    RhoMode rho_mode = RhoMode::Estimate;
    double rho = 0.0;
    double rho_step = 0.1;
    std::vector<SensorConfig> sensors;
    std::map<std::string, EventOverride> events;
    std::vector<std::pair<std::string, std::string>> objects;  // overrides when nonempty
    SvmConfig svm;
    HsConfig hs;
    std::vector<std::string> damaged;
    std::vector<std::string> damage_methods = kDamageMethods;
    std::vector<std::string> baselines = kBaselineMethods;
    double ds_reliability = 0.9;
    TelescopeParams telescope;

    // Benchmark with the configured objects; event overrides other than
    // derive are applied here.
    BenchmarkSpec benchmark() const;
    std::vector<std::string> sensor_features(const SensorConfig& s) const;
    // Every reference resolves; runs before any data is generated.
    void validate() const;
};

// Sections: [experiment], [sensor <id>], [events <feature>], [objects],
// [svm], [hidden_space], [damage], [baselines], [telescope].
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::filesystem::path& path);

struct Split {
    std::vector<int> fit;
    std::vector<int> validation;
    std::vector<int> test;
};

Split make_split(int n, double train_fraction, double validation_fraction, std::uint64_t seed);

std::uint64_t repeat_seed(std::uint64_t seed, int repeat);

struct SensorModel {
    std::string id;
    std::string kind;
    std::vector<std::string> features;
    Standardizer scaler;
    WeightMatrix class_svm;
    double validation_accuracy = 0.0;
};

struct EventClassifier {
    std::string feature;
    std::string sensor;
    WeightMatrix weights;
    double validation_accuracy = 0.0;
};

struct TrainedModel {
    BenchmarkSpec spec;
    std::vector<ObjectDefinition> objects;
    double rho = 0.0;
    std::vector<SensorModel> sensors;
    std::vector<EventClassifier> event_classifiers;
    std::map<std::string, std::vector<double>> event_priors;
    std::optional<WeightMatrix> concatenation;
    std::optional<HiddenSpaceModel> ihs;
    std::optional<HiddenSpaceModel> ghs;

    const SensorModel& sensor(const std::string& id) const;
};

// Event ranges of derive-mode features, estimated on the fit rows and
// grouped by the benchmark's own event labels.
BenchmarkSpec resolve_events(const ExperimentConfig& cfg, const SyntheticDataset& data, const Split& split);

TrainedModel train_model(const ExperimentConfig& cfg, const SyntheticDataset& data, const Split& split);

// Class scores and argmax decisions of one method over a set of rows.
struct MethodOutput {
    std::string method;
    std::vector<int> rows;
    std::vector<std::vector<double>> scores;
    std::vector<int> predicted;
};

// Event-driven fusion first, then the enabled baselines, then the damage
// methods when sensors are damaged.
std::vector<MethodOutput> apply_model(const TrainedModel& model, const ExperimentConfig& cfg,
                                      const SyntheticDataset& data, const std::vector<int>& rows);

// Event-driven fusion on the given per-feature reports of one sample.
FusedReport fuse_reports(const TrainedModel& model, const std::vector<ProbabilityReport>& reports, double rho);

struct RepeatResult {
    int repeat = 0;
    std::uint64_t seed = 0;
    double rho = 0.0;
    std::vector<int> truth;  // over the test rows
    std::vector<MethodOutput> methods;
    // "feature@sensor" -> test accuracy of the event classifier.
    std::map<std::string, double> event_accuracy;
};

struct ExperimentReport {
    std::vector<std::string> class_names;
    Catalog catalog;
    std::vector<RepeatResult> repeats;

    std::vector<std::string> method_names() const;
    // Mean test accuracy over repeats.
    double mean_accuracy(const std::string& method) const;
};

RepeatResult run_repeat(const ExperimentConfig& cfg, int repeat);
ExperimentReport run_experiment(const ExperimentConfig& cfg);

double accuracy_of(const MethodOutput& m, const std::vector<int>& truth);

void write_metrics(std::ostream& out, const ExperimentReport& report);
void write_event_accuracy(std::ostream& out, const ExperimentReport& report);
void write_events(std::ostream& out, const Catalog& catalog);
// repeat, method, sample, truth, one score per class, predicted.
void write_fused_reports(std::ostream& out, const ExperimentReport& report);

struct FusedRow {
    int repeat = 0;
    std::string method;
    int sample = 0;
    int truth = 0;
    std::vector<double> scores;
    int predicted = 0;
};

struct FusedTable {
    std::vector<std::string> class_names;
    std::vector<FusedRow> rows;
};

FusedTable read_fused_reports(std::istream& in);

// One curve per (method, class), pooled over repeats, one-vs-rest.
std::map<std::pair<std::string, std::string>, RocCurve> roc_curves(const FusedTable& table);
void write_roc_outputs(const std::filesystem::path& dir, const FusedTable& table);

void write_model(const std::filesystem::path& dir, const TrainedModel& model);
TrainedModel read_model(const std::filesystem::path& dir);

}  // namespace eventfuse
