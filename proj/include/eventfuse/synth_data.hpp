#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "eventfuse/event_algebra.hpp"
#include "eventfuse/imaging.hpp"

namespace eventfuse {

// Per-sample ground truth. Only the features of the generating dataset carry
// meaningful values; the rest stay zero.
struct TargetTruth {
    double velocity = 0.0;       // v, mi/s
    double range = 0.0;          // r, mi
    double cross_section = 0.0;  // cs, m^2
    double displacement = 0.0;   // d, pixels at reporting scale
    double aspect_ratio = 0.0;   // ar
    double weight = 0.0;         // w, pounds
    double speed = 0.0;          // s, m/s
    double noise_level = 0.0;    // n, dB
    int object_class = 0;        // index into the object list; the count means "neither"

    double value(const std::string& feature_id) const;
    void set(const std::string& feature_id, double v);
};

// Event sets, object definitions and class-conditional sampling ranges of one
// benchmark. sample_ranges[f][j] is the closed interval values of event j are
// drawn from; prototypes[c][f] is the preferred event of class c or -1.
struct BenchmarkSpec {
    std::string name;
    Catalog catalog;
    std::vector<std::pair<std::string, std::string>> objects;  // name, expression
    std::map<std::string, std::vector<std::pair<double, double>>> sample_ranges;
    std::vector<std::map<std::string, int>> prototypes;
    std::string complement_name = "neither";
    double flip_probability = 0.15;

    std::vector<ObjectDefinition> parsed_objects() const;
    const EventSetPtr& events(const std::string& feature_id) const;
    // Object names followed by the complement name.
    std::vector<std::string> class_names() const;
    int num_classes() const noexcept { return static_cast<int>(objects.size()) + 1; }
};

// Radar (v, r, cs) and telescope (d, ar) events with dangerous / safe objects.
BenchmarkSpec space_benchmark();
// Seismic (w, s) and acoustic (n, s) events with human / vehicle objects.
BenchmarkSpec field_benchmark();

// Class first (uniform over objects plus "neither"), then feature values by
// rejection until the event labels evaluate to that class.
std::vector<TargetTruth> sample_truths(const BenchmarkSpec& spec, int n, std::mt19937_64& rng);

// Event index of each truth under spec's event sets (nearest centre outside).
std::vector<int> event_labels(const BenchmarkSpec& spec, const std::string& feature_id,
                              const std::vector<TargetTruth>& truths);

struct RadarParams {
    int samples = 128;
    double snr_db = 20.0;
};

// Doppler tone at bin round(3 + 28 v / 35) and range tone at bin
// round(36 + 24 r / 600),
// both with amplitude 0.2 + cs / 50, plus white noise of std 10^(-snr/20).
Eigen::VectorXd radar_signal(const TargetTruth& t, const RadarParams& p, std::mt19937_64& rng);

struct TelescopeParams {
    int width = 128;
    int height = 128;
    double bg_mean = 20.0;
    double bg_std = 2.0;
    double star_min = 60.0;
    double star_max = 90.0;
    double streak_intensity = 40.0;
    int stars = 12;
    // Reporting units per image pixel.
    double pixel_scale = 5.0;
    int search_radius = 45;
    double alpha = 0.01;
    double gamma = 1.5;
    double beta = 0.0;
    double c = 0.0;
};

struct ImagePair {
    GrayImage first;
    GrayImage second;
    TargetTruth truth;
    int shift_x = 0;
    int shift_y = 0;
};

// Stars are 5 x 5 blocks (3 x 3 interior); the streak is 5 pixels high with an
// interior width of round(3 * ar). The realized shift is written back into
// truth.displacement.
ImagePair render_image_pair(TargetTruth truth, const TelescopeParams& p, std::mt19937_64& rng);

struct TelescopeMeasurement {
    double aspect_ratio = 0.0;
    double displacement = 0.0;  // reporting units
    // Most probable (u, v) shift in image pixels.
    int shift_x = 0;
    int shift_y = 0;
    std::vector<double> displacement_event_probs;
    bool detected = false;
};

// Detection, aspect-ratio filtering and block matching on one pair. The
// object of interest is the kept object with the largest |R - c|.
TelescopeMeasurement measure_image_pair(const ImagePair& pair, const TelescopeParams& p,
                                        const EventSet& displacement_events);

// [R, d_hat, P(d event 1), ..., P(d event J)].
Eigen::VectorXd telescope_observation(const TelescopeMeasurement& m);

std::vector<ImagePair> gen_imaging_pairs(int n_pairs, std::uint64_t seed, const TelescopeParams& p = {});

struct FieldParams {
    int samples = 64;
    double seismic_snr_db = 10.0;
    double acoustic_snr_db = 20.0;
};

// Footstep tone at bin 2 + 3 s with amplitude w / 500.
Eigen::VectorXd seismic_signal(const TargetTruth& t, const FieldParams& p, std::mt19937_64& rng);
// Engine tone at bin 3 + 2.5 s with amplitude 10^(n / 20).
Eigen::VectorXd acoustic_signal(const TargetTruth& t, const FieldParams& p, std::mt19937_64& rng);

// Raw observations of one sensor: N rows of signal values.
struct SensorObservations {
    std::string id;
    std::string kind;
    Eigen::MatrixXd values;
};

struct SyntheticDataset {
    BenchmarkSpec spec;
    std::vector<TargetTruth> truths;
    std::vector<SensorObservations> sensors;
    // Image pairs of the first few samples, kept for inspection.
    std::vector<ImagePair> sample_pairs;

    std::vector<int> classes() const;
    const SensorObservations& sensor(const std::string& id) const;
};

struct SensorSpec {
    std::string id;
    std::string kind;  // radar, telescope, seismic, acoustic
    double snr_db = 20.0;
};

// Features observed by a sensor kind.
std::vector<std::string> features_of_kind(const std::string& kind);

// Classifier inputs of one sensor: magnitude spectra for signal kinds, the
// measurement vector itself for the telescope.
Eigen::MatrixXd sensor_features(const SensorObservations& obs);

SyntheticDataset generate_dataset(const BenchmarkSpec& spec, const std::vector<SensorSpec>& sensors, int n,
                                  std::uint64_t seed, const TelescopeParams& telescope = {}, int keep_pairs = 1);

SyntheticDataset gen_radar_dataset(int n_samples, std::uint64_t seed, double snr_db);
SyntheticDataset gen_seismic_acoustic_dataset(int n_samples, std::uint64_t seed, const FieldParams& p = {});

// Tab-separated: one row per (sample, sensor) with class, per-feature event
// labels and the signal values.
void write_dataset(std::ostream& out, const SyntheticDataset& data);
// Sample index, class and the truth value of every catalog feature.
void write_truths(std::ostream& out, const SyntheticDataset& data);

}  // namespace eventfuse
