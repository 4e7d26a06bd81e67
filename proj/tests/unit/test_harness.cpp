#include <algorithm>
#include <filesystem>
#include <map>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "eventfuse/errors.hpp"
#include "eventfuse/harness.hpp"

using namespace eventfuse;
namespace fs = std::filesystem;

namespace {

const char* kFieldConfig = R"(
[experiment]
dataset = field
samples = 240
seed = 3
repeats = 2

[sensor seismic]
kind = seismic
snr_db = 10

[sensor acoustic]
kind = acoustic
snr_db = 20

[svm]
learning_rate = 0.01
epochs = 150

[hidden_space]
c3 = 0.1
learning_rate = 0.0001
epochs = 60
d = 8
)";

ExperimentConfig config_of(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
}

ExperimentConfig field_config(const std::string& extra = "") { return config_of(kFieldConfig + extra); }

// Area as the share of (positive, negative) pairs ordered correctly, ties half.
double pairwise_auc(const std::vector<double>& s, const std::vector<bool>& pos) {
    double good = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s.size(); ++j)
            if (pos[i] && !pos[j]) {
                pairs += 1.0;
                good += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
            }
    return good / pairs;
}

void expect_monotone(const RocCurve& roc) {
    ASSERT_GE(roc.points.size(), 2u);
    EXPECT_EQ(roc.points.front(), std::make_pair(0.0, 0.0));
    EXPECT_EQ(roc.points.back(), std::make_pair(1.0, 1.0));
    for (std::size_t i = 1; i < roc.points.size(); ++i) {
        EXPECT_GE(roc.points[i].first, roc.points[i - 1].first);
        EXPECT_GE(roc.points[i].second, roc.points[i - 1].second);
    }
    EXPECT_GE(roc.auc, 0.0);
    EXPECT_LE(roc.auc, 1.0);
}

std::string metrics_text(const ExperimentReport& r) {
    std::ostringstream out;
    write_metrics(out, r);
    write_event_accuracy(out, r);
    write_fused_reports(out, r);
    return out.str();
}

}  // namespace

TEST(Roc, SeparatedScoresGiveUnitArea) {
    const auto roc = compute_roc({0.9, 0.8, 0.3, 0.1}, {true, true, false, false});
    EXPECT_DOUBLE_EQ(roc.auc, 1.0);
    expect_monotone(roc);
}

TEST(Roc, EqualScoresGiveChance) {
    const auto roc = compute_roc({0.4, 0.4, 0.4, 0.4, 0.4}, {true, false, true, false, false});
    EXPECT_DOUBLE_EQ(roc.auc, 0.5);
    EXPECT_EQ(roc.points.size(), 2u);
}

TEST(Roc, HandCaseMatchesPairCount) {
    // One of the two (positive, negative) pairs is ordered correctly.
    const std::vector<double> s = {0.9, 0.7, 0.8};
    const std::vector<bool> pos = {true, true, false};
    const auto roc = compute_roc(s, pos);
    EXPECT_DOUBLE_EQ(roc.auc, pairwise_auc(s, pos));
    EXPECT_DOUBLE_EQ(roc.auc, 0.5);
    expect_monotone(roc);
}

TEST(Roc, SingleClassIsRejected) {
    EXPECT_THROW(compute_roc({0.1, 0.2}, {true, true}), ValidationError);
    EXPECT_THROW(compute_roc({0.1, 0.2}, {false, false}), ValidationError);
    EXPECT_THROW(compute_roc({0.1}, {true, false}), ValidationError);
}

TEST(Roc, RandomCurvesAreMonotoneAndMatchPairwiseArea) {
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<int> level(0, 9);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 2 + trial % 30;
        std::vector<double> s(n);
        std::vector<bool> pos(n);
        for (int i = 0; i < n; ++i) {
            s[i] = level(rng) / 10.0;
            pos[i] = rng() & 1;
        }
        pos[0] = true;
        pos[1] = false;
        const auto roc = compute_roc(s, pos);
        expect_monotone(roc);
        EXPECT_NEAR(roc.auc, pairwise_auc(s, pos), 1e-12);
    }
}

TEST(Config, ParsesSectionsAndLists) {
    const auto cfg = field_config(R"(
[damage]
sensors = seismic
methods = ihs, ghs

[events s]
a1s = [0.37, 2.12)
a2s = [2.12, inf)
)");
    EXPECT_EQ(cfg.sensors.size(), 2u);
    EXPECT_EQ(cfg.samples, 240);
    EXPECT_EQ(cfg.rho_mode, RhoMode::Estimate);
    EXPECT_EQ(cfg.damaged, std::vector<std::string>{"seismic"});
    EXPECT_EQ(cfg.damage_methods, (std::vector<std::string>{"ihs", "ghs"}));
    ASSERT_EQ(cfg.events.at("s").events.size(), 2u);
    EXPECT_NO_THROW(cfg.validate());
    EXPECT_EQ(cfg.benchmark().events("s")->size(), 2u);
}

TEST(Config, RhoForms) {
    EXPECT_EQ(config_of("[experiment]\nrho = optimize\n").rho_mode, RhoMode::Optimize);
    const auto v = config_of("[experiment]\nrho = 0.25\n");
    EXPECT_EQ(v.rho_mode, RhoMode::Value);
    EXPECT_DOUBLE_EQ(v.rho, 0.25);
    EXPECT_THROW(config_of("[experiment]\nrho = often\n"), ValidationError);
}

TEST(Config, MalformedInputIsRejected) {
    EXPECT_THROW(config_of("[experiment]\nsampels = 3\n"), ValidationError);
    EXPECT_THROW(config_of("[experimnt]\nsamples = 3\n"), ValidationError);
    EXPECT_THROW(config_of("[sensor]\nkind = radar\n"), ValidationError);
    EXPECT_THROW(config_of("[sensor a]\nsnr_db = 3\n"), ValidationError);
    EXPECT_THROW(config_of("[experiment]\nsamples = many\n"), ValidationError);
    EXPECT_THROW(config_of("[events w]\nmode = derive\na1w = [0, 1)\n"), ValidationError);
    EXPECT_THROW(config_of("[experiment\n"), ValidationError);
}

TEST(Config, ReferencesAreCheckedBeforeTraining) {
    auto bad_rho = field_config();
    bad_rho.rho_mode = RhoMode::Value;
    bad_rho.rho = 1.5;
    EXPECT_THROW(bad_rho.validate(), ValidationError);
    EXPECT_THROW(field_config("[damage]\nsensors = lidar\n").validate(), ReferenceError);
    EXPECT_THROW(field_config("[damage]\nsensors = seismic, acoustic\n").validate(), ValidationError);
    EXPECT_THROW(field_config("[damage]\nsensors = seismic\nmethods = pray\n").validate(), ReferenceError);
    EXPECT_THROW(field_config("[baselines]\nmethods = oracle\n").validate(), ReferenceError);
    EXPECT_THROW(field_config("[objects]\nhuman = a1s & a7w\n").validate(), ReferenceError);
    EXPECT_THROW(field_config("[sensor extra]\nkind = acoustic\nfeatures = w\n").validate(), ReferenceError);
    EXPECT_THROW(field_config("[sensor seismic]\nkind = seismic\n").validate(), ValidationError);
    EXPECT_THROW(field_config("[events v]\nmode = derive\n").validate(), ReferenceError);
    EXPECT_THROW(run_experiment(field_config("[damage]\nsensors = lidar\n")), ReferenceError);
    // Dropping the only observer of n leaves it unobserved.
    EXPECT_THROW(config_of(R"(
[experiment]
dataset = field
[sensor seismic]
kind = seismic
)").validate(),
                 ReferenceError);
}

TEST(Split, DisjointCoverAndDeterministic) {
    const auto s = make_split(200, 0.7, 0.25, 9);
    EXPECT_EQ(s.test.size(), 60u);
    EXPECT_EQ(s.fit.size() + s.validation.size(), 140u);
    std::vector<int> all = s.fit;
    all.insert(all.end(), s.validation.begin(), s.validation.end());
    all.insert(all.end(), s.test.begin(), s.test.end());
    std::sort(all.begin(), all.end());
    for (int i = 0; i < 200; ++i) EXPECT_EQ(all[i], i);
    EXPECT_TRUE(std::is_sorted(s.test.begin(), s.test.end()));
    const auto t = make_split(200, 0.7, 0.25, 9);
    EXPECT_EQ(s.fit, t.fit);
    EXPECT_EQ(s.test, t.test);
    EXPECT_NE(make_split(200, 0.7, 0.25, 10).test, s.test);
}

TEST(Experiment, MetricsAreByteIdenticalAcrossRuns) {
    const auto cfg = field_config();
    EXPECT_EQ(metrics_text(run_experiment(cfg)), metrics_text(run_experiment(cfg)));
}

TEST(Experiment, AccuracyMatchesPersistedFusedReports) {
    const auto report = run_experiment(field_config());
    std::stringstream fused;
    write_fused_reports(fused, report);
    const auto table = read_fused_reports(fused);
    EXPECT_EQ(table.class_names, report.class_names);
    std::map<std::pair<int, std::string>, std::pair<int, int>> counts;
    for (const auto& row : table.rows) {
        const int best = static_cast<int>(std::max_element(row.scores.begin(), row.scores.end()) - row.scores.begin());
        EXPECT_EQ(best, row.predicted);
        auto& [correct, total] = counts[{row.repeat, row.method}];
        correct += best == row.truth;
        ++total;
    }
    for (const auto& r : report.repeats)
        for (const auto& m : r.methods) {
            const auto [correct, total] = counts.at({r.repeat, m.method});
            EXPECT_EQ(total, static_cast<int>(r.truth.size()));
            EXPECT_DOUBLE_EQ(accuracy_of(m, r.truth), double(correct) / double(total)) << m.method;
        }
    for (const auto& [key, roc] : roc_curves(table)) expect_monotone(roc);
}

TEST(Experiment, EmptyDamageMatchesNoDamageKey) {
    const auto plain = field_config();
    const auto empty = field_config("[damage]\nsensors =\n");
    EXPECT_TRUE(empty.damaged.empty());
    EXPECT_EQ(metrics_text(run_experiment(plain)), metrics_text(run_experiment(empty)));
}

TEST(Experiment, DamageAddsRecoveryMethods) {
    const auto report = run_experiment(field_config("[damage]\nsensors = seismic\n"));
    const auto names = report.method_names();
    for (const std::string m : {"damaged:ignore", "damaged:ihs", "damaged:ghs"})
        EXPECT_NE(std::find(names.begin(), names.end(), m), names.end()) << m;
    EXPECT_TRUE(report.repeats.front().event_accuracy.count("w@ihs"));
    EXPECT_FALSE(report.repeats.front().event_accuracy.count("n@ihs"));
}

TEST(Experiment, EstimatedRhoIsNoWorseThanIndependence) {
    auto est = field_config();
    auto zero = est;
    zero.rho_mode = RhoMode::Value;
    zero.rho = 0.0;
    const auto a = run_experiment(est), b = run_experiment(zero);
    EXPECT_GT(a.repeats.front().rho, 0.0);
    EXPECT_GE(a.mean_accuracy("event_driven_fusion"), b.mean_accuracy("event_driven_fusion"));
}

TEST(Model, RoundTripReproducesOutputs) {
    auto cfg = field_config("[damage]\nsensors = acoustic\n");
    cfg.validate();
    cfg.hs.seed = 5;
    std::vector<SensorSpec> sensors;
    for (const auto& s : cfg.sensors) sensors.push_back({s.id, s.kind, s.snr_db});
    const auto data = generate_dataset(field_benchmark(), sensors, cfg.samples, 21, cfg.telescope, 0);
    const auto split = make_split(cfg.samples, cfg.train_fraction, cfg.validation_fraction, 22);
    const auto model = train_model(cfg, data, split);
    const fs::path dir = fs::temp_directory_path() / "eventfuse_model_roundtrip";
    fs::remove_all(dir);
    write_model(dir, model);
    const auto loaded = read_model(dir);
    EXPECT_EQ(loaded.rho, model.rho);
    const auto a = apply_model(model, cfg, data, split.test);
    const auto b = apply_model(loaded, cfg, data, split.test);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t m = 0; m < a.size(); ++m) {
        EXPECT_EQ(a[m].method, b[m].method);
        EXPECT_EQ(a[m].predicted, b[m].predicted);
        EXPECT_EQ(a[m].scores, b[m].scores) << a[m].method;
    }
    fs::remove_all(dir);
}
