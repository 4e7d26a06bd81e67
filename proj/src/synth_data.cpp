#include "eventfuse/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>

#include "eventfuse/classifiers.hpp"
#include "eventfuse/errors.hpp"
#include "eventfuse/seeding.hpp"

namespace eventfuse {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTwoPi = 2.0 * std::numbers::pi;

EventSpec closed(std::string id, double lo, double hi) { return {std::move(id), lo, hi, false}; }
EventSpec open_upper(std::string id, double lo, double hi) { return {std::move(id), lo, hi, true}; }

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

double noise_std(double snr_db) { return std::pow(10.0, -snr_db / 20.0); }

void add_tone(Eigen::VectorXd& x, double amplitude, double cycles, double phase) {
    const double n = double(x.size());
    for (Eigen::Index t = 0; t < x.size(); ++t) x[t] += amplitude * std::sin(kTwoPi * cycles * double(t) / n + phase);
}

void add_noise(Eigen::VectorXd& x, double sd, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, sd);
    for (Eigen::Index t = 0; t < x.size(); ++t) x[t] += g(rng);
}

struct Rect {
    int x = 0, y = 0, w = 0, h = 0;

    bool overlaps(const Rect& o, int margin) const {
        return x - margin < o.x + o.w && o.x - margin < x + w && y - margin < o.y + o.h && o.y - margin < y + h;
    }
};

void paint(GrayImage& img, const Rect& r, double level) {
    for (int y = r.y; y < r.y + r.h; ++y)
        for (int x = r.x; x < r.x + r.w; ++x)
            if (img.inside(x, y)) img.at(x, y) = level;
}

void add_pixel_noise(GrayImage& img, double sd, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, sd);
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) img.at(x, y) += g(rng);
}

}  // namespace

double TargetTruth::value(const std::string& f) const {
    if (f == "v") return velocity;
    if (f == "r") return range;
    if (f == "cs") return cross_section;
    if (f == "d") return displacement;
    if (f == "ar") return aspect_ratio;
    if (f == "w") return weight;
    if (f == "s") return speed;
    if (f == "n") return noise_level;
    throw ReferenceError("unknown feature '" + f + "'");
}

void TargetTruth::set(const std::string& f, double v) {
    if (f == "v") velocity = v;
    else if (f == "r") range = v;
    else if (f == "cs") cross_section = v;
    else if (f == "d") displacement = v;
    else if (f == "ar") aspect_ratio = v;
    else if (f == "w") weight = v;
    else if (f == "s") speed = v;
    else if (f == "n") noise_level = v;
    else throw ReferenceError("unknown feature '" + f + "'");
}

std::vector<ObjectDefinition> BenchmarkSpec::parsed_objects() const {
    std::vector<ObjectDefinition> out;
    for (const auto& [name, text] : objects) out.push_back(parse_object_expression(text, catalog, name));
    return out;
}

const EventSetPtr& BenchmarkSpec::events(const std::string& feature_id) const {
    for (const auto& e : catalog)
        if (e->feature_id() == feature_id) return e;
    throw ReferenceError("feature '" + feature_id + "' is not in the catalog");
}

std::vector<std::string> BenchmarkSpec::class_names() const {
    std::vector<std::string> out;
    for (const auto& o : objects) out.push_back(o.first);
    out.push_back(complement_name);
    return out;
}

BenchmarkSpec space_benchmark() {
    BenchmarkSpec b;
    b.name = "space";
    b.catalog = {
        make_event_set("v", "radar", {closed("a1v", 0, 10), closed("a2v", 15, 35)}),
        make_event_set("r", "radar", {closed("a1r", 0, 300), open_upper("a2r", 300, kInf)}),
        make_event_set("cs", "radar", {closed("a1cs", 0, 20), closed("a2cs", 15, 50)}),
        make_event_set("d", "telescope", {closed("a1d", 0, 60), closed("a2d", 90, 210)}),
        make_event_set("ar", "telescope", {closed("a1ar", 0, 1.5), open_upper("a2ar", 1.5, kInf)}),
    };
    b.objects = {{"dangerous", "a1r & ((a2v & a2d) | (a2cs | a2ar))"},
                 {"safe", "a1v & a1d & a2r & a1cs & a1ar"}};
    b.complement_name = "neither";
    // Overlaps resolve to the nearer event centre; every range stays on its
    // own side of that midpoint and clear of rounding in the image model.
    b.sample_ranges = {
        {"v", {{0.0, 10.0}, {15.0, 35.0}}},
        {"r", {{20.0, 290.0}, {310.0, 600.0}}},
        {"cs", {{1.0, 14.0}, {22.0, 50.0}}},
        {"d", {{0.0, 55.0}, {95.0, 205.0}}},
        {"ar", {{1.2, 1.45}, {1.7, 6.0}}},
    };
    b.prototypes = {
        {{"v", 1}, {"r", 0}, {"cs", 1}, {"d", 1}, {"ar", 1}},
        {{"v", 0}, {"r", 1}, {"cs", 0}, {"d", 0}, {"ar", 0}},
        {{"v", 1}, {"r", 1}, {"cs", -1}, {"d", -1}, {"ar", -1}},
    };
    return b;
}

BenchmarkSpec field_benchmark() {
    BenchmarkSpec b;
    b.name = "field";
    b.catalog = {
        make_event_set("w", "seismic", {closed("a1w", 96.08, 230.61), open_upper("a2w", 1311.61, kInf)}),
        make_event_set("s", "seismic", {closed("a1s", 0.37, 2.12), open_upper("a2s", 1.7, kInf)}),
        make_event_set("n", "acoustic", {closed("a1n", -kInf, -30.0), closed("a2n", -10.6658, 7.84)}),
    };
    b.objects = {{"human", "a1s & (a1w | a1n)"}, {"vehicle", "a2s & a2w & a2n"}};
    b.complement_name = "none";
    b.sample_ranges = {
        {"w", {{100.0, 230.0}, {1320.0, 4000.0}}},
        {"s", {{0.4, 1.4}, {2.2, 8.0}}},
        {"n", {{-60.0, -30.0}, {-10.0, 7.8}}},
    };
    b.prototypes = {
        {{"w", 0}, {"s", 0}, {"n", 0}},
        {{"w", 1}, {"s", 1}, {"n", 1}},
        {{"w", 0}, {"s", 1}, {"n", 0}},
    };
    return b;
}

std::vector<TargetTruth> sample_truths(const BenchmarkSpec& spec, int n, std::mt19937_64& rng) {
    if (n < 1) throw ValidationError("sample count must be positive");
    const auto objects = spec.parsed_objects();
    const int classes = spec.num_classes();
    if (static_cast<int>(spec.prototypes.size()) != classes)
        throw ValidationError("one prototype per class is required");
    std::bernoulli_distribution flip(spec.flip_probability);
    std::vector<TargetTruth> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        const int c = uniform_int(rng, 0, classes - 1);
        ProductCell cell;
        for (int attempt = 0;; ++attempt) {
            if (attempt > 100000) throw ValidationError("class " + std::to_string(c) + " has no satisfying cell");
            cell.events.clear();
            for (const auto& es : spec.catalog) {
                const int j_count = static_cast<int>(es->size());
                const auto it = spec.prototypes[c].find(es->feature_id());
                const int proto = it == spec.prototypes[c].end() ? -1 : it->second;
                int j = proto;
                if (proto < 0) {
                    j = uniform_int(rng, 0, j_count - 1);
                } else if (flip(rng)) {
                    j = uniform_int(rng, 0, j_count - 2);
                    if (j >= proto) ++j;
                }
                cell.events.push_back(static_cast<std::uint32_t>(j));
            }
            int label = static_cast<int>(objects.size());
            for (std::size_t o = 0; o < objects.size(); ++o)
                if (satisfies(objects[o].expr, spec.catalog, cell)) {
                    label = static_cast<int>(o);
                    break;
                }
            if (label == c) break;
        }
        TargetTruth t;
        t.object_class = c;
        for (std::size_t f = 0; f < spec.catalog.size(); ++f) {
            const auto& id = spec.catalog[f]->feature_id();
            const auto& [lo, hi] = spec.sample_ranges.at(id).at(cell.events[f]);
            t.set(id, uniform(rng, lo, hi));
        }
        out.push_back(t);
    }
    return out;
}

std::vector<int> event_labels(const BenchmarkSpec& spec, const std::string& feature_id,
                              const std::vector<TargetTruth>& truths) {
    const auto& es = spec.events(feature_id);
    std::vector<int> out;
    out.reserve(truths.size());
    for (const auto& t : truths) out.push_back(static_cast<int>(es->label_value(t.value(feature_id))));
    return out;
}

Eigen::VectorXd radar_signal(const TargetTruth& t, const RadarParams& p, std::mt19937_64& rng) {
    if (p.samples < 8) throw ValidationError("radar records need at least 8 samples");
    Eigen::VectorXd x = Eigen::VectorXd::Zero(p.samples);
    const double amplitude = 0.2 + t.cross_section / 50.0;
    // Whole-bin tones keep the spectral peak height proportional to amplitude.
    add_tone(x, amplitude, std::round(3.0 + 28.0 * t.velocity / 35.0), uniform(rng, 0.0, kTwoPi));
    add_tone(x, amplitude, std::round(36.0 + 24.0 * std::min(t.range, 600.0) / 600.0), uniform(rng, 0.0, kTwoPi));
    add_noise(x, noise_std(p.snr_db), rng);
    return x;
}

ImagePair render_image_pair(TargetTruth truth, const TelescopeParams& p, std::mt19937_64& rng) {
    const int iw = std::max(1, static_cast<int>(std::lround(3.0 * truth.aspect_ratio)));
    const Rect streak_size{0, 0, iw + 2, 5};
    const double theta = uniform(rng, 0.0, kTwoPi);
    const double shift = truth.displacement / p.pixel_scale;
    const int sx = static_cast<int>(std::lround(shift * std::cos(theta)));
    const int sy = static_cast<int>(std::lround(shift * std::sin(theta)));
    truth.aspect_ratio = double(iw) / 3.0;
    truth.displacement = p.pixel_scale * std::hypot(double(sx), double(sy));

    // Both frames' streaks straddle the image centre.
    Rect a = streak_size;
    a.x = static_cast<int>(std::lround(0.5 * (p.width - a.w - sx))) + uniform_int(rng, -4, 4);
    a.y = static_cast<int>(std::lround(0.5 * (p.height - a.h - sy))) + uniform_int(rng, -4, 4);
    Rect b = a;
    b.x += sx;
    b.y += sy;
    if (a.x < 3 || b.x < 3 || a.y < 3 || b.y < 3 || a.x + a.w > p.width - 3 || b.x + b.w > p.width - 3 ||
        a.y + a.h > p.height - 3 || b.y + b.h > p.height - 3)
        throw SizeError("streak displacement does not fit the image");

    std::vector<std::pair<Rect, double>> stars;
    for (int attempt = 0; attempt < 2000 && static_cast<int>(stars.size()) < p.stars; ++attempt) {
        Rect s{uniform_int(rng, 3, p.width - 8), uniform_int(rng, 3, p.height - 8), 5, 5};
        bool ok = !s.overlaps(a, 3) && !s.overlaps(b, 3);
        for (const auto& [o, level] : stars) ok = ok && !s.overlaps(o, 3);
        const double level = uniform(rng, p.star_min, p.star_max);
        if (ok) stars.emplace_back(s, level);
    }

    ImagePair out{GrayImage(p.width, p.height, p.bg_mean), GrayImage(p.width, p.height, p.bg_mean), truth, sx, sy};
    for (const auto& [s, level] : stars) {
        paint(out.first, s, level);
        paint(out.second, s, level);
    }
    paint(out.first, a, p.streak_intensity);
    paint(out.second, b, p.streak_intensity);
    add_pixel_noise(out.first, p.bg_std, rng);
    add_pixel_noise(out.second, p.bg_std, rng);
    return out;
}

TelescopeMeasurement measure_image_pair(const ImagePair& pair, const TelescopeParams& p,
                                        const EventSet& displacement_events) {
    TelescopeMeasurement m;
    m.displacement_event_probs.assign(displacement_events.size(), 1.0 / double(displacement_events.size()));
    const PixelModel model = estimate_background(pair.first, 1, p.alpha);
    const auto interior = classify_interior_pixels(pair.first, model);
    if (interior.empty()) return m;
    const auto objects = cluster_interior(interior, {p.beta, p.gamma, p.c});
    auto kept = filter_objects_of_interest(objects, p.c);
    if (kept.empty()) kept = objects;
    const DetectedObject* best = &kept.front();
    for (const auto& o : kept)
        if (std::abs(o.aspect_ratio - p.c) > std::abs(best->aspect_ratio - p.c)) best = &o;

    const auto surface = displacement_error_surface(pair.first, pair.second, *best, p.search_radius);
    const double side = 2.0 * surface.half_window + 1.0;
    const auto dist = displacement_distribution(surface, 2.0 * model.bg_std * model.bg_std * side * side);
    const auto [u, v] = dist.argmax();
    m.detected = true;
    m.aspect_ratio = best->aspect_ratio;
    m.shift_x = u;
    m.shift_y = v;
    m.displacement = p.pixel_scale * std::hypot(double(u), double(v));
    // Event bounds are inclusive at the lower end; the tally is strict.
    for (std::size_t j = 0; j < displacement_events.size(); ++j) {
        const auto& e = displacement_events[j];
        const double hi = e.upper_open ? e.upper : std::nextafter(e.upper, kInf);
        m.displacement_event_probs[j] =
            displacement_event_probability(dist, std::nextafter(e.lower, -kInf), hi, p.pixel_scale);
    }
    return m;
}

Eigen::VectorXd telescope_observation(const TelescopeMeasurement& m) {
    Eigen::VectorXd x(2 + static_cast<Eigen::Index>(m.displacement_event_probs.size()));
    x[0] = m.aspect_ratio;
    x[1] = m.displacement;
    for (std::size_t j = 0; j < m.displacement_event_probs.size(); ++j)
        x[2 + static_cast<Eigen::Index>(j)] = m.displacement_event_probs[j];
    return x;
}

std::vector<ImagePair> gen_imaging_pairs(int n_pairs, std::uint64_t seed, const TelescopeParams& p) {
    if (n_pairs < 1) throw ValidationError("pair count must be positive");
    const auto spec = space_benchmark();
    std::mt19937_64 truth_rng(derive_seed(seed, 0));
    std::mt19937_64 image_rng(derive_seed(seed, 1));
    std::vector<ImagePair> out;
    for (const auto& t : sample_truths(spec, n_pairs, truth_rng)) out.push_back(render_image_pair(t, p, image_rng));
    return out;
}

Eigen::VectorXd seismic_signal(const TargetTruth& t, const FieldParams& p, std::mt19937_64& rng) {
    if (p.samples < 8) throw ValidationError("seismic records need at least 8 samples");
    Eigen::VectorXd x = Eigen::VectorXd::Zero(p.samples);
    add_tone(x, t.weight / 500.0, 2.0 + 3.0 * t.speed, uniform(rng, 0.0, kTwoPi));
    add_noise(x, noise_std(p.seismic_snr_db), rng);
    return x;
}

Eigen::VectorXd acoustic_signal(const TargetTruth& t, const FieldParams& p, std::mt19937_64& rng) {
    if (p.samples < 8) throw ValidationError("acoustic records need at least 8 samples");
    Eigen::VectorXd x = Eigen::VectorXd::Zero(p.samples);
    add_tone(x, std::pow(10.0, t.noise_level / 20.0), 3.0 + 2.5 * t.speed, uniform(rng, 0.0, kTwoPi));
    add_noise(x, noise_std(p.acoustic_snr_db), rng);
    return x;
}

std::vector<int> SyntheticDataset::classes() const {
    std::vector<int> out;
    out.reserve(truths.size());
    for (const auto& t : truths) out.push_back(t.object_class);
    return out;
}

const SensorObservations& SyntheticDataset::sensor(const std::string& id) const {
    for (const auto& s : sensors)
        if (s.id == id) return s;
    throw ReferenceError("unknown sensor '" + id + "'");
}

std::vector<std::string> features_of_kind(const std::string& kind) {
    if (kind == "radar") return {"v", "r", "cs"};
    if (kind == "telescope") return {"d", "ar"};
    if (kind == "seismic") return {"w", "s"};
    if (kind == "acoustic") return {"n", "s"};
    throw ReferenceError("unknown sensor kind '" + kind + "'");
}

Eigen::MatrixXd sensor_features(const SensorObservations& obs) {
    if (obs.kind == "telescope") return obs.values;
    features_of_kind(obs.kind);
    const Eigen::Index n = obs.values.rows();
    Eigen::MatrixXd out;
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::VectorXd row = obs.values.row(i).transpose();
        const auto spec = magnitude_spectrum(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
        if (i == 0) out.resize(n, static_cast<Eigen::Index>(spec.size()));
        for (std::size_t k = 0; k < spec.size(); ++k) out(i, static_cast<Eigen::Index>(k)) = spec[k];
    }
    return out;
}

SyntheticDataset generate_dataset(const BenchmarkSpec& spec, const std::vector<SensorSpec>& sensors, int n,
                                  std::uint64_t seed, const TelescopeParams& telescope, int keep_pairs) {
    if (sensors.empty()) throw ValidationError("no sensors configured");
    SyntheticDataset data;
    data.spec = spec;
    std::mt19937_64 truth_rng(derive_seed(seed, 0));
    data.truths = sample_truths(spec, n, truth_rng);
    for (std::size_t si = 0; si < sensors.size(); ++si) {
        const auto& s = sensors[si];
        for (const auto& f : features_of_kind(s.kind)) spec.events(f);
        std::mt19937_64 rng(derive_seed(seed, 1 + si));
        SensorObservations obs{s.id, s.kind, {}};
        for (int i = 0; i < n; ++i) {
            Eigen::VectorXd x;
            if (s.kind == "radar") {
                x = radar_signal(data.truths[i], {128, s.snr_db}, rng);
            } else if (s.kind == "telescope") {
                auto pair = render_image_pair(data.truths[i], telescope, rng);
                data.truths[i].displacement = pair.truth.displacement;
                data.truths[i].aspect_ratio = pair.truth.aspect_ratio;
                x = telescope_observation(measure_image_pair(pair, telescope, *spec.events("d")));
                if (i < keep_pairs) data.sample_pairs.push_back(std::move(pair));
            } else if (s.kind == "seismic") {
                FieldParams fp;
                fp.seismic_snr_db = s.snr_db;
                x = seismic_signal(data.truths[i], fp, rng);
            } else {
                FieldParams fp;
                fp.acoustic_snr_db = s.snr_db;
                x = acoustic_signal(data.truths[i], fp, rng);
            }
            if (i == 0) obs.values.resize(n, x.size());
            obs.values.row(i) = x.transpose();
        }
        data.sensors.push_back(std::move(obs));
    }
    return data;
}

SyntheticDataset gen_radar_dataset(int n_samples, std::uint64_t seed, double snr_db) {
    return generate_dataset(space_benchmark(), {{"radar", "radar", snr_db}}, n_samples, seed);
}

SyntheticDataset gen_seismic_acoustic_dataset(int n_samples, std::uint64_t seed, const FieldParams& p) {
    return generate_dataset(field_benchmark(),
                            {{"seismic", "seismic", p.seismic_snr_db}, {"acoustic", "acoustic", p.acoustic_snr_db}},
                            n_samples, seed);
}

void write_dataset(std::ostream& out, const SyntheticDataset& data) {
    const auto names = data.spec.class_names();
    out << std::setprecision(17);
    for (const auto& s : data.sensors) {
        const auto features = features_of_kind(s.kind);
        out << "# sensor\t" << s.id << "\tkind\t" << s.kind << "\tfeatures";
        for (const auto& f : features) out << '\t' << f;
        out << "\tvalues\t" << s.values.cols() << '\n';
        std::vector<std::vector<int>> labels;
        for (const auto& f : features) labels.push_back(event_labels(data.spec, f, data.truths));
        for (Eigen::Index i = 0; i < s.values.rows(); ++i) {
            out << s.id << '\t' << i << '\t' << names.at(data.truths[i].object_class);
            for (std::size_t f = 0; f < features.size(); ++f)
                out << '\t' << (*data.spec.events(features[f]))[labels[f][i]].id;
            for (Eigen::Index k = 0; k < s.values.cols(); ++k) out << '\t' << s.values(i, k);
            out << '\n';
        }
    }
}

void write_truths(std::ostream& out, const SyntheticDataset& data) {
    const auto names = data.spec.class_names();
    out << std::setprecision(17) << "sample\tclass";
    for (const auto& e : data.spec.catalog) out << '\t' << e->feature_id();
    out << '\n';
    for (std::size_t i = 0; i < data.truths.size(); ++i) {
        out << i << '\t' << names.at(data.truths[i].object_class);
        for (const auto& e : data.spec.catalog) out << '\t' << data.truths[i].value(e->feature_id());
        out << '\n';
    }
}

}  // namespace eventfuse
