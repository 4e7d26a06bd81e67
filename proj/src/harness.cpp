#include "eventfuse/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "eventfuse/baselines.hpp"
#include "eventfuse/errors.hpp"
#include "eventfuse/joint_distribution.hpp"
#include "eventfuse/seeding.hpp"

namespace eventfuse {

namespace fs = std::filesystem;

namespace {

constexpr const char* kFusionMethod = "event_driven_fusion";

// ---------------------------------------------------------------- parsing

std::string trim(std::string s) {
    boost::algorithm::trim(s);
    return s;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> parts;
    const std::string t = trim(text);
    if (t.empty()) return parts;
    boost::algorithm::split(parts, t, boost::is_any_of(","));
    for (auto& p : parts) {
        p = trim(p);
        if (p.empty()) throw ValidationError("empty item in list '" + text + "'");
    }
    return parts;
}

double to_double(const std::string& text, const std::string& where) {
    const std::string t = trim(text);
    if (t == "inf" || t == "+inf") return std::numeric_limits<double>::infinity();
    if (t == "-inf") return -std::numeric_limits<double>::infinity();
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
        throw ValidationError(where + ": '" + text + "' is not a number");
    return v;
}

long long to_integer(const std::string& text, const std::string& where) {
    const std::string t = trim(text);
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
        throw ValidationError(where + ": '" + text + "' is not an integer");
    return v;
}

// "[lo, hi)" or "[lo, hi]"; a leading '(' is read as closed.
EventSpec parse_interval(const std::string& id, const std::string& text) {
    const std::string t = trim(text);
    if (t.size() < 5 || (t.front() != '[' && t.front() != '(') || (t.back() != ']' && t.back() != ')'))
        throw ValidationError("event " + id + ": expected an interval like [lo, hi), got '" + text + "'");
    const auto parts = split_list(t.substr(1, t.size() - 2));
    if (parts.size() != 2) throw ValidationError("event " + id + ": an interval has two bounds");
    return {id, to_double(parts[0], "event " + id), to_double(parts[1], "event " + id), t.back() == ')'};
}

using Section = boost::property_tree::ptree;

template <class F>
void for_keys(const Section& body, const std::string& section, F&& f) {
    for (const auto& [key, value] : body) {
        if (!value.empty()) throw ValidationError("[" + section + "] " + key + ": nested keys are not supported");
        f(key, value.data());
    }
}

[[noreturn]] void unknown_key(const std::string& section, const std::string& key) {
    throw ValidationError("[" + section + "] unknown key '" + key + "'");
}

int dim_of_kind(const std::string& kind, const TelescopeParams&) {
    if (kind == "radar") return 65;
    if (kind == "telescope") return 4;
    if (kind == "seismic" || kind == "acoustic") return 33;
    throw ReferenceError("unknown sensor kind '" + kind + "'");
}

// ---------------------------------------------------------------- numerics

std::vector<double> fit_rows_labels(const std::vector<int>& labels, const std::vector<int>& rows) {
    std::vector<double> out;
    out.reserve(rows.size());
    for (int r : rows) out.push_back(double(labels[r]));
    return out;
}

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& m, const std::vector<int>& rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
    return out;
}

std::vector<int> select(const std::vector<int>& v, const std::vector<int>& rows) {
    std::vector<int> out;
    out.reserve(rows.size());
    for (int r : rows) out.push_back(v[r]);
    return out;
}

Eigen::VectorXd with_bias_row(const Eigen::MatrixXd& m, Eigen::Index row) {
    Eigen::VectorXd x(m.cols() + 1);
    x.head(m.cols()) = m.row(row).transpose();
    x[m.cols()] = 1.0;
    return x;
}

int argmax(const std::vector<double>& v) {
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

std::vector<double> class_scores(const WeightMatrix& w, const Eigen::VectorXd& x) {
    return event_probabilities(w, x);
}

std::vector<int> feature_labels(const BenchmarkSpec& spec, const std::string& feature, const SyntheticDataset& data) {
    return event_labels(spec, feature, data.truths);
}

// Standardized classifier inputs of every configured sensor, all rows.
std::map<std::string, Eigen::MatrixXd> standardized_inputs(const TrainedModel& model, const SyntheticDataset& data) {
    std::map<std::string, Eigen::MatrixXd> out;
    for (const auto& s : model.sensors) out[s.id] = s.scaler.apply(sensor_features(data.sensor(s.id)));
    return out;
}

const EventClassifier& event_classifier(const TrainedModel& model, const std::string& feature,
                                        const std::string& sensor) {
    for (const auto& e : model.event_classifiers)
        if (e.feature == feature && e.sensor == sensor) return e;
    throw ReferenceError("no event classifier for " + feature + "@" + sensor);
}

std::string owner_of(const TrainedModel& model, const std::string& feature) {
    for (const auto& s : model.sensors)
        if (std::find(s.features.begin(), s.features.end(), feature) != s.features.end()) return s.id;
    throw ReferenceError("feature '" + feature + "' is observed by no sensor");
}

// Per-row reports over the catalog. Features with no surviving observer
// are filled by fallback(feature, row index).
template <class Fallback>
std::vector<std::vector<ProbabilityReport>> build_reports(const TrainedModel& model,
                                                          const std::map<std::string, Eigen::MatrixXd>& inputs,
                                                          const std::vector<int>& rows,
                                                          const std::set<std::string>& damaged, Fallback&& fallback) {
    std::vector<std::vector<ProbabilityReport>> out(rows.size());
    for (const auto& es : model.spec.catalog) {
        const auto& f = es->feature_id();
        std::vector<const EventClassifier*> sources;
        for (const auto& e : model.event_classifiers)
            if (e.feature == f && !damaged.count(e.sensor)) sources.push_back(&e);
        if (sources.empty()) {
            const auto probs = fallback(f);
            for (std::size_t i = 0; i < rows.size(); ++i) out[i].emplace_back(es, probs[i]);
            continue;
        }
        std::vector<double> acc;
        for (const auto* s : sources) acc.push_back(std::max(s->validation_accuracy, 1e-6));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            std::vector<ProbabilityReport> reps;
            for (const auto* s : sources)
                reps.push_back(event_report(s->weights, with_bias_row(inputs.at(s->sensor), rows[i]), es));
            out[i].push_back(reps.size() == 1 ? reps.front() : combine_duplicate_feature_reports(reps, acc));
        }
    }
    return out;
}

MethodOutput fuse_rows(const TrainedModel& model, const std::string& name, const std::vector<int>& rows,
                       const std::vector<std::vector<ProbabilityReport>>& reports, double rho) {
    MethodOutput m{name, rows, {}, {}};
    for (const auto& r : reports) {
        const auto fused = fuse_reports(model, r, rho);
        m.scores.push_back(fused.scores());
        m.predicted.push_back(static_cast<int>(fused.label));
    }
    return m;
}

double accuracy_against(const std::vector<int>& predicted, const std::vector<int>& truth) {
    int hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
    return truth.empty() ? 0.0 : double(hits) / double(truth.size());
}

std::string fixed(double v, int digits) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

std::string file_safe(std::string s) {
    for (char& c : s)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) c = '_';
    return s;
}

std::vector<std::string> tabs(const std::string& line) {
    std::vector<std::string> out;
    boost::algorithm::split(out, line, boost::is_any_of("\t"));
    return out;
}

}  // namespace

// ---------------------------------------------------------------- roc

RocCurve compute_roc(const std::vector<double>& scores, const std::vector<bool>& positives) {
    if (scores.size() != positives.size()) throw ValidationError("one label per score is required");
    const auto pos = std::count(positives.begin(), positives.end(), true);
    const auto neg = static_cast<long>(positives.size()) - pos;
    if (pos == 0 || neg == 0) throw ValidationError("ROC needs at least one positive and one negative");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    RocCurve roc;
    roc.points.emplace_back(0.0, 0.0);
    long tp = 0, fp = 0;
    for (std::size_t i = 0; i < order.size();) {
        const double t = scores[order[i]];
        for (; i < order.size() && scores[order[i]] == t; ++i) (positives[order[i]] ? tp : fp)++;
        const auto& [x0, y0] = roc.points.back();
        const double x = double(fp) / double(neg), y = double(tp) / double(pos);
        roc.auc += (x - x0) * (y + y0) / 2.0;
        roc.points.emplace_back(x, y);
    }
    return roc;
}

// ---------------------------------------------------------------- config

BenchmarkSpec ExperimentConfig::benchmark() const {
    BenchmarkSpec spec = dataset == "space" ? space_benchmark() : field_benchmark();
    for (auto& es : spec.catalog) {
        const auto it = events.find(es->feature_id());
        if (it != events.end() && !it->second.derive)
            es = make_event_set(es->feature_id(), es->sensor_id(), it->second.events);
    }
    if (!objects.empty()) spec.objects = objects;
    return spec;
}

std::vector<std::string> ExperimentConfig::sensor_features(const SensorConfig& s) const {
    return s.features.empty() ? features_of_kind(s.kind) : s.features;
}

void ExperimentConfig::validate() const {
    if (dataset != "space" && dataset != "field") throw ValidationError("dataset must be 'space' or 'field'");
    if (samples < 20) throw ValidationError("samples must be at least 20");
    if (repeats < 1) throw ValidationError("repeats must be positive");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ValidationError("train_fraction must lie in (0, 1)");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
        throw ValidationError("validation_fraction must lie in (0, 1)");
    if (rho_mode == RhoMode::Value) (void)CorrelationCoefficient(rho);
    if (!(rho_step > 0.0 && rho_step <= 1.0)) throw ValidationError("rho_step must lie in (0, 1]");
    if (sensors.empty()) throw ValidationError("no sensors configured");
    const BenchmarkSpec spec = benchmark();
    for (const auto& [f, o] : events) spec.events(f);
    std::set<std::string> ids, observed;
    int min_dim = std::numeric_limits<int>::max();
    for (const auto& s : sensors) {
        if (!ids.insert(s.id).second) throw ValidationError("duplicate sensor '" + s.id + "'");
        const auto all = features_of_kind(s.kind);
        for (const auto& f : sensor_features(s)) {
            if (std::find(all.begin(), all.end(), f) == all.end())
                throw ReferenceError("sensor " + s.id + " of kind " + s.kind + " cannot observe feature '" + f + "'");
            spec.events(f);
            observed.insert(f);
        }
        min_dim = std::min(min_dim, dim_of_kind(s.kind, telescope));
    }
    for (const auto& es : spec.catalog)
        if (!observed.count(es->feature_id()))
            throw ReferenceError("feature '" + es->feature_id() + "' is observed by no sensor");
    spec.parsed_objects();
    std::set<std::string> gone;
    for (const auto& d : damaged) {
        if (!ids.count(d)) throw ReferenceError("damaged sensor '" + d + "' is not configured");
        gone.insert(d);
    }
    if (!damaged.empty() && gone.size() == ids.size()) throw ValidationError("every sensor is damaged");
    for (const auto& m : damage_methods)
        if (std::find(kDamageMethods.begin(), kDamageMethods.end(), m) == kDamageMethods.end())
            throw ReferenceError("unknown damage method '" + m + "'");
    for (const auto& b : baselines)
        if (std::find(kBaselineMethods.begin(), kBaselineMethods.end(), b) == kBaselineMethods.end())
            throw ReferenceError("unknown baseline '" + b + "'");
    if (!(ds_reliability >= 0.0 && ds_reliability <= 1.0)) throw ValidationError("ds_reliability must lie in [0, 1]");
    svm.validate();
    if (!damaged.empty()) hs.validate(min_dim);
}

ExperimentConfig parse_config(std::istream& in) {
    Section tree;
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ValidationError(std::string("config: ") + e.message() + " at line " + std::to_string(e.line()));
    }
    ExperimentConfig cfg;
    for (const auto& [name, body] : tree) {
        if (body.empty() && !body.data().empty()) throw ValidationError("config: key '" + name + "' outside a section");
        std::vector<std::string> words;
        boost::algorithm::split(words, name, boost::is_any_of(" "), boost::token_compress_on);
        const std::string& head = words.front();
        if (head == "experiment") {
            for_keys(body, name, [&](const std::string& k, const std::string& v) {
                const std::string where = "[" + name + "] " + k;
                if (k == "dataset") cfg.dataset = trim(v);
                else if (k == "samples") cfg.samples = static_cast<int>(to_integer(v, where));
                else if (k == "seed") cfg.seed = static_cast<std::uint64_t>(to_integer(v, where));
                else if (k == "repeats") cfg.repeats = static_cast<int>(to_integer(v, where));
                else if (k == "train_fraction") cfg.train_fraction = to_double(v, where);
                else if (k == "validation_fraction") cfg.validation_fraction = to_double(v, where);
                else if (k == "rho_step") cfg.rho_step = to_double(v, where);
                else if (k == "rho") {
                    const std::string t = trim(v);
                    if (t == "estimate") cfg.rho_mode = RhoMode::Estimate;
                    else if (t == "optimize") cfg.rho_mode = RhoMode::Optimize;
                    else {
                        cfg.rho_mode = RhoMode::Value;
                        cfg.rho = to_double(t, where);
                    }
                } else unknown_key(name, k);
            });
        } else if (head == "sensor") {
            if (words.size() != 2) throw ValidationError("config: sensor sections are named [sensor <id>]");
            SensorConfig s{words[1], "", 20.0, {}};
            for_keys(body, name, [&](const std::string& k, const std::string& v) {
                if (k == "kind") s.kind = trim(v);
                else if (k == "snr_db") s.snr_db = to_double(v, "[" + name + "] " + k);
                else if (k == "features") s.features = split_list(v);
                else unknown_key(name, k);
            });
            if (s.kind.empty()) throw ValidationError("config: [" + name + "] needs a kind");
            cfg.sensors.push_back(std::move(s));
        } else if (head == "events") {
            if (words.size() != 2) throw ValidationError("config: event sections are named [events <feature>]");
            EventOverride o;
            for_keys(body, name, [&](const std::string& k, const std::string& v) {
                if (k == "mode") {
                    if (trim(v) != "derive" && trim(v) != "explicit")
                        throw ValidationError("[" + name + "] mode must be derive or explicit");
                    o.derive = trim(v) == "derive";
                } else {
                    o.events.push_back(parse_interval(k, v));
                }
            });
            if (o.derive && !o.events.empty())
                throw ValidationError("[" + name + "] derive mode takes no explicit intervals");
            cfg.events[words[1]] = std::move(o);
        } else if (head == "objects") {
            for_keys(body, name, [&](const std::string& k, const std::string& v) { cfg.objects.emplace_back(k, trim(v)); });
        } else if (head == "svm") {
            for_keys(body, name, [&](const std::string& k, const std::string& v) {
                const std::string where = "[svm] " + k;
                if (k == "c") cfg.svm.c = to_double(v, where);
                else if (k == "learning_rate") cfg.svm.learning_rate = to_double(v, where);
                else if (k == "epochs") cfg.svm.epochs = static_cast<int>(to_integer(v, where));
                else if (k == "final_lr_fraction") cfg.svm.final_lr_fraction = to_double(v, where);
                else unknown_key(name, k);
            });
        } else if (head == "hidden_space") {
            for_keys(body, name, [&](const std::string& k, const std::string& v) {
                const std::string where = "[hidden_space] " + k;
                if (k == "c1") cfg.hs.c1 = to_double(v, where);
                else if (k == "c2") cfg.hs.c2 = to_double(v, where);
                else if (k == "c3") cfg.hs.c3 = to_double(v, where);
                else if (k == "learning_rate") cfg.hs.learning_rate = to_double(v, where);
                else if (k == "epochs") cfg.hs.epochs = static_cast<int>(to_integer(v, where));
                else if (k == "d") cfg.hs.d = static_cast<int>(to_integer(v, where));
                else if (k == "final_lr_fraction") cfg.hs.final_lr_fraction = to_double(v, where);
                else unknown_key(name, k);
            });
        } else if (head == "damage") {
            for_keys(body, name, [&](const std::string& k, const std::string& v) {
                if (k == "sensors") cfg.damaged = split_list(v);
                else if (k == "methods") cfg.damage_methods = split_list(v);
                else unknown_key(name, k);
            });
        } else if (head == "baselines") {
            for_keys(body, name, [&](const std::string& k, const std::string& v) {
                if (k == "methods") cfg.baselines = split_list(v);
                else if (k == "ds_reliability") cfg.ds_reliability = to_double(v, "[baselines] " + k);
                else unknown_key(name, k);
            });
        } else if (head == "telescope") {
            for_keys(body, name, [&](const std::string& k, const std::string& v) {
                const std::string where = "[telescope] " + k;
                auto& t = cfg.telescope;
                if (k == "bg_mean") t.bg_mean = to_double(v, where);
                else if (k == "bg_std") t.bg_std = to_double(v, where);
                else if (k == "stars") t.stars = static_cast<int>(to_integer(v, where));
                else if (k == "streak_intensity") t.streak_intensity = to_double(v, where);
                else if (k == "search_radius") t.search_radius = static_cast<int>(to_integer(v, where));
                else if (k == "alpha") t.alpha = to_double(v, where);
                else unknown_key(name, k);
            });
        } else {
            throw ValidationError("config: unknown section [" + name + "]");
        }
    }
    return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config " + path.string());
    return parse_config(in);
}

// ---------------------------------------------------------------- pipeline

Split make_split(int n, double train_fraction, double validation_fraction, std::uint64_t seed) {
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(seed);
    for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[std::uniform_int_distribution<int>(0, i)(rng)]);
    const int n_train = static_cast<int>(std::lround(train_fraction * n));
    const int n_val = static_cast<int>(std::lround(validation_fraction * n_train));
    if (n_train - n_val < 2 || n_val < 1 || n - n_train < 1) throw ValidationError("split leaves an empty part");
    Split s;
    s.fit.assign(perm.begin(), perm.begin() + (n_train - n_val));
    s.validation.assign(perm.begin() + (n_train - n_val), perm.begin() + n_train);
    s.test.assign(perm.begin() + n_train, perm.end());
    for (auto* v : {&s.fit, &s.validation, &s.test}) std::sort(v->begin(), v->end());
    return s;
}

std::uint64_t repeat_seed(std::uint64_t seed, int repeat) { return derive_seed(seed, static_cast<std::uint64_t>(repeat)); }

const SensorModel& TrainedModel::sensor(const std::string& id) const {
    for (const auto& s : sensors)
        if (s.id == id) return s;
    throw ReferenceError("unknown sensor '" + id + "'");
}

BenchmarkSpec resolve_events(const ExperimentConfig& cfg, const SyntheticDataset& data, const Split& split) {
    BenchmarkSpec spec = cfg.benchmark();
    const BenchmarkSpec base = cfg.dataset == "space" ? space_benchmark() : field_benchmark();
    for (auto& es : spec.catalog) {
        const auto it = cfg.events.find(es->feature_id());
        if (it == cfg.events.end() || !it->second.derive) continue;
        const auto& ref = base.events(es->feature_id());
        std::vector<std::vector<double>> groups(ref->size());
        for (int r : split.fit) {
            const double v = data.truths[r].value(es->feature_id());
            groups[ref->label_value(v)].push_back(v);
        }
        std::vector<std::string> ids;
        for (const auto& e : ref->events()) ids.push_back(e.id);
        es = make_event_set(es->feature_id(), es->sensor_id(), derive_event_ranges(groups, ids));
    }
    return spec;
}

FusedReport fuse_reports(const TrainedModel& model, const std::vector<ProbabilityReport>& reports, double rho) {
    const auto min_mi = min_mi_joint(reports);
    const auto joint = rho > 0.0 ? blend_joint(max_mi_joint_greedy(reports), min_mi, CorrelationCoefficient(rho)) : min_mi;
    return fused_report(model.objects, joint);
}

TrainedModel train_model(const ExperimentConfig& cfg, const SyntheticDataset& data, const Split& split) {
    TrainedModel model;
    model.spec = resolve_events(cfg, data, split);
    model.objects = model.spec.parsed_objects();
    const int classes = model.spec.num_classes();
    const auto truth = data.classes();
    std::map<std::string, Eigen::MatrixXd> inputs;
    for (const auto& sc : cfg.sensors) {
        const Eigen::MatrixXd raw = sensor_features(data.sensor(sc.id));
        SensorModel sm{sc.id, sc.kind, cfg.sensor_features(sc), Standardizer::fit(select_rows(raw, split.fit)), {}, 0.0};
        const Eigen::MatrixXd x = sm.scaler.apply(raw);
        sm.class_svm = train_multiclass_svm(
            LabeledDataset::with_bias(select_rows(x, split.fit), select(truth, split.fit), classes), cfg.svm);
        sm.validation_accuracy = accuracy(
            sm.class_svm, LabeledDataset::with_bias(select_rows(x, split.validation), select(truth, split.validation), classes));
        for (const auto& f : sm.features) {
            const auto labels = feature_labels(model.spec, f, data);
            const int j = static_cast<int>(model.spec.events(f)->size());
            EventClassifier ec{f, sc.id, {}, 0.0};
            ec.weights = train_multiclass_svm(
                LabeledDataset::with_bias(select_rows(x, split.fit), select(labels, split.fit), j), cfg.svm);
            ec.validation_accuracy = accuracy(
                ec.weights, LabeledDataset::with_bias(select_rows(x, split.validation), select(labels, split.validation), j));
            model.event_classifiers.push_back(std::move(ec));
        }
        inputs[sc.id] = x;
        model.sensors.push_back(std::move(sm));
    }

    std::map<std::string, std::vector<int>> labels;
    for (const auto& es : model.spec.catalog) {
        const auto& f = es->feature_id();
        labels[f] = feature_labels(model.spec, f, data);
        std::vector<double> prior(es->size(), 1.0);
        for (int r : split.fit) prior[labels[f][r]] += 1.0;
        for (double& p : prior) p /= double(split.fit.size() + es->size());
        model.event_priors[f] = prior;
    }

    switch (cfg.rho_mode) {
        case RhoMode::Value:
            model.rho = cfg.rho;
            break;
        case RhoMode::Estimate: {
            double total = 0.0;
            int pairs = 0;
            for (std::size_t a = 0; a < model.spec.catalog.size(); ++a)
                for (std::size_t b = a + 1; b < model.spec.catalog.size(); ++b) {
                    const auto la = fit_rows_labels(labels[model.spec.catalog[a]->feature_id()], split.fit);
                    const auto lb = fit_rows_labels(labels[model.spec.catalog[b]->feature_id()], split.fit);
                    try {
                        total += estimate_rho(la, lb).value();
                        ++pairs;
                    } catch (const DegenerateInputError&) {
                    }
                }
            model.rho = pairs ? total / pairs : 0.0;
            break;
        }
        case RhoMode::Optimize: {
            const auto reports = build_reports(model, inputs, split.validation, {}, [](const std::string& f) -> std::vector<std::vector<double>> {
                throw ReferenceError("feature '" + f + "' has no observer");
            });
            const auto val_truth = select(truth, split.validation);
            double best = -1.0;
            const int steps = static_cast<int>(std::floor(1.0 / cfg.rho_step + 1e-9));
            for (int k = 0; k <= steps; ++k) {
                const double rho = std::min(1.0, k * cfg.rho_step);
                const double acc = accuracy_against(fuse_rows(model, "", split.validation, reports, rho).predicted, val_truth);
                if (acc > best) {
                    best = acc;
                    model.rho = rho;
                }
            }
            break;
        }
    }

    const bool concat = std::find(cfg.baselines.begin(), cfg.baselines.end(), "feature_concatenation") != cfg.baselines.end();
    if (concat) {
        std::vector<Eigen::MatrixXd> views;
        for (const auto& s : model.sensors) views.push_back(select_rows(inputs[s.id], split.fit));
        model.concatenation = fuse_feature_concatenation(views, select(truth, split.fit), classes, cfg.svm);
    }

    if (!cfg.damaged.empty()) {
        HsProblem problem;
        for (const auto& s : model.sensors) problem.sensors.push_back({s.id, select_rows(inputs[s.id], split.fit)});
        for (const auto& es : model.spec.catalog) {
            const auto& f = es->feature_id();
            problem.features.push_back(
                {f, owner_of(model, f), static_cast<int>(es->size()), select(labels[f], split.fit)});
        }
        const auto has = [&](const char* m) {
            return std::find(cfg.damage_methods.begin(), cfg.damage_methods.end(), m) != cfg.damage_methods.end();
        };
        if (has("ihs")) model.ihs = train_independent_hidden_spaces(problem, cfg.hs);
        if (has("ghs")) model.ghs = train_global_hidden_space(problem, cfg.hs);
    }
    return model;
}

std::vector<MethodOutput> apply_model(const TrainedModel& model, const ExperimentConfig& cfg,
                                      const SyntheticDataset& data, const std::vector<int>& rows) {
    const auto inputs = standardized_inputs(model, data);
    std::vector<MethodOutput> out;
    const auto no_fallback = [](const std::string& f) -> std::vector<std::vector<double>> {
        throw ReferenceError("feature '" + f + "' has no observer");
    };
    out.push_back(fuse_rows(model, kFusionMethod, rows, build_reports(model, inputs, rows, {}, no_fallback), model.rho));

    const auto enabled = [&](const char* b) {
        return std::find(cfg.baselines.begin(), cfg.baselines.end(), b) != cfg.baselines.end();
    };
    // Class scores of each sensor's own classifier.
    std::vector<std::vector<std::vector<double>>> per_sensor;
    for (const auto& s : model.sensors) {
        std::vector<std::vector<double>> sc;
        for (int r : rows) sc.push_back(class_scores(s.class_svm, with_bias_row(inputs.at(s.id), r)));
        per_sensor.push_back(std::move(sc));
    }
    const auto emit = [&](const std::string& name, std::vector<std::vector<double>> scores) {
        MethodOutput m{name, rows, std::move(scores), {}};
        for (const auto& s : m.scores) m.predicted.push_back(argmax(s));
        out.push_back(std::move(m));
    };
    if (enabled("sensor"))
        for (std::size_t k = 0; k < model.sensors.size(); ++k) emit("sensor:" + model.sensors[k].id, per_sensor[k]);
    if (enabled("feature_concatenation") && model.concatenation) {
        std::vector<Eigen::MatrixXd> views;
        for (const auto& s : model.sensors) views.push_back(inputs.at(s.id));
        const Eigen::MatrixXd x = concatenate_samples(views);
        std::vector<std::vector<double>> sc;
        for (int r : rows) sc.push_back(class_scores(*model.concatenation, with_bias_row(x, r)));
        emit("feature_concatenation", std::move(sc));
    }
    if (enabled("similar_sensor_fusion")) {
        std::vector<double> w;
        for (const auto& s : model.sensors) w.push_back(std::max(s.validation_accuracy, 1e-6));
        std::vector<std::vector<double>> sc;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            std::vector<std::vector<double>> reps;
            for (const auto& p : per_sensor) reps.push_back(p[i]);
            sc.push_back(fuse_similar_sensors(reps, w));
        }
        emit("similar_sensor_fusion", std::move(sc));
    }
    if (enabled("dempster_shafer")) {
        std::vector<std::vector<double>> sc;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            MassFunction m = MassFunction::vacuous(model.spec.num_classes());
            for (const auto& p : per_sensor) m = dempster_combine(m, MassFunction::from_probabilities(p[i], cfg.ds_reliability));
            sc.push_back(pignistic(m));
        }
        emit("dempster_shafer", std::move(sc));
    }

    if (cfg.damaged.empty()) return out;
    const std::set<std::string> damaged(cfg.damaged.begin(), cfg.damaged.end());
    for (const auto& method : cfg.damage_methods) {
        std::function<std::vector<std::vector<double>>(const std::string&)> fallback;
        if (method == "ignore") {
            fallback = [&](const std::string& f) {
                return std::vector<std::vector<double>>(rows.size(), model.event_priors.at(f));
            };
        } else {
            const auto& hs = method == "ihs" ? model.ihs : model.ghs;
            if (!hs) throw ValidationError("damage method " + method + " was not trained");
            fallback = [&, hsm = &*hs](const std::string& f) {
                std::map<std::string, Eigen::MatrixXd> available;
                for (const auto& s : model.sensors)
                    if (!damaged.count(s.id)) available[s.id] = select_rows(inputs.at(s.id), rows);
                const Eigen::MatrixXd h = recover_hidden_space(hsm->operators, owner_of(model, f), f, available);
                return hidden_space_probabilities(hsm->classifiers.at(f), h);
            };
        }
        out.push_back(fuse_rows(model, "damaged:" + method, rows, build_reports(model, inputs, rows, damaged, fallback),
                                model.rho));
    }
    return out;
}

double accuracy_of(const MethodOutput& m, const std::vector<int>& truth) { return accuracy_against(m.predicted, truth); }

RepeatResult run_repeat(const ExperimentConfig& cfg_in, int repeat) {
    ExperimentConfig cfg = cfg_in;
    RepeatResult res;
    res.repeat = repeat;
    res.seed = repeat_seed(cfg.seed, repeat);
    cfg.hs.seed = derive_seed(res.seed, 2);
    std::vector<SensorSpec> sensors;
    for (const auto& s : cfg.sensors) sensors.push_back({s.id, s.kind, s.snr_db});
    const BenchmarkSpec base = cfg.dataset == "space" ? space_benchmark() : field_benchmark();
    const auto data = generate_dataset(base, sensors, cfg.samples, res.seed, cfg.telescope, 0);
    const auto split = make_split(cfg.samples, cfg.train_fraction, cfg.validation_fraction, derive_seed(res.seed, 1));
    const auto model = train_model(cfg, data, split);
    res.rho = model.rho;
    res.truth = select(data.classes(), split.test);
    res.methods = apply_model(model, cfg, data, split.test);
    const auto inputs = standardized_inputs(model, data);
    for (const auto& ec : model.event_classifiers) {
        const auto labels = feature_labels(model.spec, ec.feature, data);
        res.event_accuracy[ec.feature + "@" + ec.sensor] = accuracy(
            ec.weights, LabeledDataset::with_bias(select_rows(inputs.at(ec.sensor), split.test), select(labels, split.test),
                                                  static_cast<int>(model.spec.events(ec.feature)->size())));
    }
    // Recovered event accuracy of features that lost every observer.
    const std::set<std::string> damaged(cfg.damaged.begin(), cfg.damaged.end());
    for (const auto& [tag, hs] : {std::pair{"ihs", &model.ihs}, std::pair{"ghs", &model.ghs}}) {
        if (!*hs) continue;
        std::map<std::string, Eigen::MatrixXd> available;
        for (const auto& s : model.sensors)
            if (!damaged.count(s.id)) available[s.id] = select_rows(inputs.at(s.id), split.test);
        for (const auto& es : model.spec.catalog) {
            const auto& f = es->feature_id();
            bool observed = false;
            for (const auto& ec : model.event_classifiers) observed = observed || (ec.feature == f && !damaged.count(ec.sensor));
            if (observed) continue;
            const auto probs = hidden_space_probabilities(
                (*hs)->classifiers.at(f), recover_hidden_space((*hs)->operators, owner_of(model, f), f, available));
            const auto labels = select(feature_labels(model.spec, f, data), split.test);
            std::vector<int> pred;
            for (const auto& p : probs) pred.push_back(argmax(p));
            res.event_accuracy[f + "@" + tag] = accuracy_against(pred, labels);
        }
    }
    return res;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    ExperimentReport report;
    const BenchmarkSpec spec = cfg.benchmark();
    report.class_names = spec.class_names();
    report.catalog = spec.catalog;
    for (int r = 0; r < cfg.repeats; ++r) report.repeats.push_back(run_repeat(cfg, r));
    return report;
}

std::vector<std::string> ExperimentReport::method_names() const {
    std::vector<std::string> out;
    if (repeats.empty()) return out;
    for (const auto& m : repeats.front().methods) out.push_back(m.method);
    return out;
}

double ExperimentReport::mean_accuracy(const std::string& method) const {
    double total = 0.0;
    for (const auto& r : repeats) {
        const auto it = std::find_if(r.methods.begin(), r.methods.end(), [&](const auto& m) { return m.method == method; });
        if (it == r.methods.end()) throw ReferenceError("method '" + method + "' was not run");
        total += accuracy_of(*it, r.truth);
    }
    return repeats.empty() ? 0.0 : total / double(repeats.size());
}

// ---------------------------------------------------------------- tables

void write_metrics(std::ostream& out, const ExperimentReport& report) {
    out << "method\trepeat\taccuracy\n";
    for (const auto& name : report.method_names()) {
        for (const auto& r : report.repeats)
            for (const auto& m : r.methods)
                if (m.method == name) out << name << '\t' << r.repeat << '\t' << fixed(accuracy_of(m, r.truth), 6) << '\n';
        out << name << "\tmean\t" << fixed(report.mean_accuracy(name), 6) << '\n';
    }
}

void write_event_accuracy(std::ostream& out, const ExperimentReport& report) {
    out << "task\trepeat\taccuracy\n";
    if (report.repeats.empty()) return;
    for (const auto& [task, a] : report.repeats.front().event_accuracy) {
        double total = 0.0;
        for (const auto& r : report.repeats) {
            out << task << '\t' << r.repeat << '\t' << fixed(r.event_accuracy.at(task), 6) << '\n';
            total += r.event_accuracy.at(task);
        }
        out << task << "\tmean\t" << fixed(total / double(report.repeats.size()), 6) << '\n';
    }
}

void write_events(std::ostream& out, const Catalog& catalog) {
    out << "feature\tsensor\tevent\tlower\tupper\tupper_open\n" << std::setprecision(17);
    for (const auto& es : catalog)
        for (const auto& e : es->events())
            out << es->feature_id() << '\t' << es->sensor_id() << '\t' << e.id << '\t' << e.lower << '\t' << e.upper << '\t'
                << (e.upper_open ? 1 : 0) << '\n';
}

void write_fused_reports(std::ostream& out, const ExperimentReport& report) {
    out << "repeat\tmethod\tsample\ttruth";
    for (const auto& c : report.class_names) out << "\tp_" << c;
    out << "\tpredicted\n";
    for (const auto& r : report.repeats)
        for (const auto& m : r.methods)
            for (std::size_t i = 0; i < m.rows.size(); ++i) {
                out << r.repeat << '\t' << m.method << '\t' << m.rows[i] << '\t' << report.class_names.at(r.truth[i]);
                for (double s : m.scores[i]) out << '\t' << fixed(s, 10);
                out << '\t' << report.class_names.at(m.predicted[i]) << '\n';
            }
}

FusedTable read_fused_reports(std::istream& in) {
    FusedTable t;
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("empty fused report table");
    const auto head = tabs(line);
    if (head.size() < 6 || head[0] != "repeat" || head[1] != "method" || head.back() != "predicted")
        throw ValidationError("fused report header is malformed");
    for (std::size_t k = 4; k + 1 < head.size(); ++k) {
        if (head[k].rfind("p_", 0) != 0) throw ValidationError("fused report score columns start with p_");
        t.class_names.push_back(head[k].substr(2));
    }
    const auto class_index = [&](const std::string& name) {
        const auto it = std::find(t.class_names.begin(), t.class_names.end(), name);
        if (it == t.class_names.end()) throw ReferenceError("unknown class '" + name + "'");
        return static_cast<int>(it - t.class_names.begin());
    };
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = tabs(line);
        if (f.size() != head.size()) throw ValidationError("fused report row has " + std::to_string(f.size()) + " fields");
        FusedRow row;
        row.repeat = static_cast<int>(to_integer(f[0], "repeat"));
        row.method = f[1];
        row.sample = static_cast<int>(to_integer(f[2], "sample"));
        row.truth = class_index(f[3]);
        for (std::size_t k = 4; k + 1 < f.size(); ++k) row.scores.push_back(to_double(f[k], "score"));
        row.predicted = class_index(f.back());
        t.rows.push_back(std::move(row));
    }
    return t;
}

std::map<std::pair<std::string, std::string>, RocCurve> roc_curves(const FusedTable& table) {
    std::map<std::string, std::vector<const FusedRow*>> by_method;
    for (const auto& r : table.rows) by_method[r.method].push_back(&r);
    std::map<std::pair<std::string, std::string>, RocCurve> out;
    for (const auto& [method, rows] : by_method)
        for (std::size_t k = 0; k < table.class_names.size(); ++k) {
            std::vector<double> scores;
            std::vector<bool> pos;
            for (const auto* r : rows) {
                scores.push_back(r->scores.at(k));
                pos.push_back(r->truth == static_cast<int>(k));
            }
            const auto p = std::count(pos.begin(), pos.end(), true);
            if (p == 0 || p == static_cast<long>(pos.size())) continue;
            out[{method, table.class_names[k]}] = compute_roc(scores, pos);
        }
    return out;
}

void write_roc_outputs(const fs::path& dir, const FusedTable& table) {
    fs::create_directories(dir);
    std::ofstream summary(dir / "roc_summary.tsv");
    summary << "method\tclass\tauc\n";
    for (const auto& [key, roc] : roc_curves(table)) {
        std::ofstream f(dir / ("roc_" + file_safe(key.first) + "_" + file_safe(key.second) + ".tsv"));
        f << "fpr\ttpr\n";
        for (const auto& [x, y] : roc.points) f << fixed(x, 6) << '\t' << fixed(y, 6) << '\n';
        summary << key.first << '\t' << key.second << '\t' << fixed(roc.auc, 6) << '\n';
    }
}

// ---------------------------------------------------------------- model files

namespace {

std::ofstream open_out(const fs::path& p) {
    std::ofstream out(p);
    if (!out) throw ValidationError("cannot write " + p.string());
    out << std::setprecision(17);
    return out;
}

std::ifstream open_in(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw ValidationError("cannot read " + p.string());
    return in;
}

std::vector<std::string> expect_line(std::istream& in, const std::string& tag) {
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("model file ends before '" + tag + "'");
    auto f = tabs(line);
    if (f.empty() || f[0] != tag) throw ValidationError("model file: expected '" + tag + "', got '" + line + "'");
    f.erase(f.begin());
    return f;
}

void write_hidden_space(const fs::path& dir, const std::string& tag, const HiddenSpaceModel& hs) {
    auto ops = open_out(dir / (tag + "_operators.tsv"));
    write_operator_set(ops, hs.operators);
    auto cls = open_out(dir / (tag + "_classifiers.tsv"));
    cls << "count\t" << hs.classifiers.size() << '\n';
    for (const auto& [f, w] : hs.classifiers) {
        std::vector<std::string> ids;
        for (int j = 0; j < w.num_classes(); ++j) ids.push_back("e" + std::to_string(j + 1));
        write_weights(cls, w, f, ids);
    }
}

HiddenSpaceModel read_hidden_space(const fs::path& dir, const std::string& tag) {
    HiddenSpaceModel hs;
    auto ops = open_in(dir / (tag + "_operators.tsv"));
    hs.operators = read_operator_set(ops);
    auto cls = open_in(dir / (tag + "_classifiers.tsv"));
    const auto n = to_integer(expect_line(cls, "count").at(0), "count");
    for (long long k = 0; k < n; ++k) {
        std::string f;
        auto w = read_weights(cls, &f);
        hs.classifiers[f] = std::move(w);
    }
    return hs;
}

}  // namespace

void write_model(const fs::path& dir, const TrainedModel& model) {
    fs::create_directories(dir);
    {
        auto out = open_out(dir / "manifest.tsv");
        out << "dataset\t" << model.spec.name << "\nrho\t" << model.rho << "\nsensors";
        for (const auto& s : model.sensors) out << '\t' << s.id;
        out << "\nconcatenation\t" << (model.concatenation ? 1 : 0) << "\nihs\t" << (model.ihs ? 1 : 0) << "\nghs\t"
            << (model.ghs ? 1 : 0) << '\n';
    }
    {
        auto out = open_out(dir / "events.tsv");
        write_events(out, model.spec.catalog);
    }
    {
        auto out = open_out(dir / "objects.tsv");
        for (const auto& [name, text] : model.spec.objects) out << name << '\t' << text << '\n';
    }
    {
        auto out = open_out(dir / "priors.tsv");
        for (const auto& es : model.spec.catalog) {
            out << es->feature_id();
            for (double p : model.event_priors.at(es->feature_id())) out << '\t' << p;
            out << '\n';
        }
    }
    const auto classes = model.spec.class_names();
    for (const auto& s : model.sensors) {
        auto out = open_out(dir / ("sensor_" + file_safe(s.id) + ".tsv"));
        out << "kind\t" << s.kind << "\nfeatures";
        for (const auto& f : s.features) out << '\t' << f;
        out << "\nvalidation_accuracy\t" << s.validation_accuracy << "\ncolumns\t" << s.scaler.mean.size() << '\n';
        write_matrix_rows(out, s.scaler.mean);
        write_matrix_rows(out, s.scaler.scale);
        write_weights(out, s.class_svm, "class", classes);
        for (const auto& f : s.features) {
            const auto& ec = event_classifier(model, f, s.id);
            std::vector<std::string> ids;
            for (const auto& e : model.spec.events(f)->events()) ids.push_back(e.id);
            out << "event_validation_accuracy\t" << ec.validation_accuracy << '\n';
            write_weights(out, ec.weights, f, ids);
        }
    }
    if (model.concatenation) {
        auto out = open_out(dir / "concatenation.tsv");
        write_weights(out, *model.concatenation, "class", classes);
    }
    if (model.ihs) write_hidden_space(dir, "ihs", *model.ihs);
    if (model.ghs) write_hidden_space(dir, "ghs", *model.ghs);
}

TrainedModel read_model(const fs::path& dir) {
    TrainedModel model;
    auto manifest = open_in(dir / "manifest.tsv");
    const auto dataset = expect_line(manifest, "dataset").at(0);
    if (dataset != "space" && dataset != "field") throw ValidationError("model: unknown dataset '" + dataset + "'");
    model.spec = dataset == "space" ? space_benchmark() : field_benchmark();
    model.rho = to_double(expect_line(manifest, "rho").at(0), "rho");
    const auto sensor_ids = expect_line(manifest, "sensors");
    const bool concat = expect_line(manifest, "concatenation").at(0) == "1";
    const bool ihs = expect_line(manifest, "ihs").at(0) == "1";
    const bool ghs = expect_line(manifest, "ghs").at(0) == "1";

    {
        auto in = open_in(dir / "events.tsv");
        std::string line;
        std::getline(in, line);
        std::vector<std::pair<std::string, std::string>> order;
        std::map<std::string, std::vector<EventSpec>> events;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto f = tabs(line);
            if (f.size() != 6) throw ValidationError("model: malformed event row '" + line + "'");
            if (!events.count(f[0])) order.emplace_back(f[0], f[1]);
            events[f[0]].push_back({f[2], to_double(f[3], "lower"), to_double(f[4], "upper"), f[5] == "1"});
        }
        model.spec.catalog.clear();
        for (const auto& [feature, sensor] : order) model.spec.catalog.push_back(make_event_set(feature, sensor, events[feature]));
    }
    {
        auto in = open_in(dir / "objects.tsv");
        model.spec.objects.clear();
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto tab = line.find('\t');
            if (tab == std::string::npos) throw ValidationError("model: malformed object row");
            model.spec.objects.emplace_back(line.substr(0, tab), line.substr(tab + 1));
        }
        model.objects = model.spec.parsed_objects();
    }
    {
        auto in = open_in(dir / "priors.tsv");
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            auto f = tabs(line);
            std::vector<double> p;
            for (std::size_t k = 1; k < f.size(); ++k) p.push_back(to_double(f[k], "prior"));
            model.event_priors[f[0]] = std::move(p);
        }
    }
    for (const auto& id : sensor_ids) {
        auto in = open_in(dir / ("sensor_" + file_safe(id) + ".tsv"));
        SensorModel s;
        s.id = id;
        s.kind = expect_line(in, "kind").at(0);
        s.features = expect_line(in, "features");
        s.validation_accuracy = to_double(expect_line(in, "validation_accuracy").at(0), "accuracy");
        expect_line(in, "columns");
        s.scaler.mean = read_matrix_rows(in, 1);
        s.scaler.scale = read_matrix_rows(in, 1);
        s.class_svm = read_weights(in);
        for (const auto& f : s.features) {
            EventClassifier ec{f, id, {}, to_double(expect_line(in, "event_validation_accuracy").at(0), "accuracy")};
            ec.weights = read_weights(in);
            model.event_classifiers.push_back(std::move(ec));
        }
        model.sensors.push_back(std::move(s));
    }
    if (concat) {
        auto in = open_in(dir / "concatenation.tsv");
        model.concatenation = read_weights(in);
    }
    if (ihs) model.ihs = read_hidden_space(dir, "ihs");
    if (ghs) model.ghs = read_hidden_space(dir, "ghs");
    return model;
}

}  // namespace eventfuse
