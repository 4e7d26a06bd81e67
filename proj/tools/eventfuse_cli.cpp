#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "eventfuse/errors.hpp"
#include "eventfuse/harness.hpp"
#include "eventfuse/imaging.hpp"
#include "eventfuse/seeding.hpp"

namespace fs = std::filesystem;
using namespace eventfuse;

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> repeats;
    std::string out = "out";
    std::string input;
    std::vector<std::string> damage;
};

ExperimentConfig load(const Options& o) {
    if (o.config.empty()) throw ValidationError("--config is required");
    ExperimentConfig cfg = load_config(o.config);
    if (o.seed) cfg.seed = *o.seed;
    if (o.repeats) cfg.repeats = *o.repeats;
    if (!o.damage.empty()) cfg.damaged = o.damage;
    cfg.validate();
    return cfg;
}

std::ofstream create(const fs::path& p) {
    fs::create_directories(p.parent_path());
    std::ofstream out(p);
    if (!out) throw ValidationError("cannot write " + p.string());
    return out;
}

fs::path repeat_dir(const fs::path& base, int r) { return base / ("repeat_" + std::to_string(r)); }

std::vector<SensorSpec> sensor_specs(const ExperimentConfig& cfg) {
    std::vector<SensorSpec> out;
    for (const auto& s : cfg.sensors) out.push_back({s.id, s.kind, s.snr_db});
    return out;
}

BenchmarkSpec generator(const ExperimentConfig& cfg) {
    return cfg.dataset == "space" ? space_benchmark() : field_benchmark();
}

SyntheticDataset regenerate(const ExperimentConfig& cfg, int r, int keep_pairs = 0) {
    return generate_dataset(generator(cfg), sensor_specs(cfg), cfg.samples, repeat_seed(cfg.seed, r), cfg.telescope,
                            keep_pairs);
}

Split split_of(const ExperimentConfig& cfg, int r) {
    return make_split(cfg.samples, cfg.train_fraction, cfg.validation_fraction, derive_seed(repeat_seed(cfg.seed, r), 1));
}

void gen_data(const Options& o) {
    const auto cfg = load(o);
    for (int r = 0; r < cfg.repeats; ++r) {
        const auto data = regenerate(cfg, r, 2);
        const fs::path dir = repeat_dir(o.out, r);
        auto ds = create(dir / "dataset.tsv");
        write_dataset(ds, data);
        auto tr = create(dir / "truths.tsv");
        write_truths(tr, data);
        for (std::size_t i = 0; i < data.sample_pairs.size(); ++i) {
            auto a = create(dir / ("pair_" + std::to_string(i) + "_first.pgm"));
            write_pgm(a, data.sample_pairs[i].first);
            auto b = create(dir / ("pair_" + std::to_string(i) + "_second.pgm"));
            write_pgm(b, data.sample_pairs[i].second);
        }
    }
}

void train(const Options& o) {
    auto cfg = load(o);
    for (int r = 0; r < cfg.repeats; ++r) {
        cfg.hs.seed = derive_seed(repeat_seed(cfg.seed, r), 2);
        const auto data = regenerate(cfg, r);
        write_model(fs::path(o.out) / "model" / ("repeat_" + std::to_string(r)), train_model(cfg, data, split_of(cfg, r)));
    }
}

ExperimentReport fuse_from_models(const Options& o, const ExperimentConfig& cfg) {
    ExperimentReport report;
    const auto spec = cfg.benchmark();
    report.class_names = spec.class_names();
    report.catalog = spec.catalog;
    for (int r = 0; r < cfg.repeats; ++r) {
        const fs::path dir = fs::path(o.out) / "model" / ("repeat_" + std::to_string(r));
        if (!fs::exists(dir / "manifest.tsv")) throw ValidationError("no trained model in " + dir.string() + "; run train first");
        const auto model = read_model(dir);
        const auto data = regenerate(cfg, r);
        const auto split = split_of(cfg, r);
        RepeatResult res;
        res.repeat = r;
        res.seed = repeat_seed(cfg.seed, r);
        res.rho = model.rho;
        for (int i : split.test) res.truth.push_back(data.truths[i].object_class);
        res.methods = apply_model(model, cfg, data, split.test);
        report.repeats.push_back(std::move(res));
    }
    return report;
}

void fuse(const Options& o) {
    const auto cfg = load(o);
    const auto report = fuse_from_models(o, cfg);
    auto out = create(fs::path(o.out) / "fused_reports.tsv");
    write_fused_reports(out, report);
}

void write_all(const fs::path& dir, const ExperimentReport& report) {
    auto m = create(dir / "metrics.tsv");
    write_metrics(m, report);
    auto e = create(dir / "event_accuracy.tsv");
    write_event_accuracy(e, report);
    auto ev = create(dir / "events.tsv");
    write_events(ev, report.catalog);
    auto f = create(dir / "fused_reports.tsv");
    write_fused_reports(f, report);
    auto rho = create(dir / "rho.tsv");
    rho << "repeat\trho\n";
    for (const auto& r : report.repeats) rho << r.repeat << '\t' << std::fixed << std::setprecision(6) << r.rho << '\n';
}

void evaluate(const Options& o) {
    const auto report = run_experiment(load(o));
    write_all(o.out, report);
    std::cout << std::fixed << std::setprecision(4);
    for (const auto& m : report.method_names()) std::cout << m << '\t' << report.mean_accuracy(m) << '\n';
}

void simulate_damage(const Options& o) {
    const auto cfg = load(o);
    if (cfg.damaged.empty()) throw ValidationError("no damaged sensors: set [damage] sensors or pass --damage");
    evaluate(o);
}

void roc(const Options& o) {
    const fs::path input = o.input.empty() ? fs::path(o.out) / "fused_reports.tsv" : fs::path(o.input);
    std::ifstream in(input);
    if (!in) throw ValidationError("cannot read " + input.string());
    write_roc_outputs(o.out, read_fused_reports(in));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Event-driven decision-level sensor fusion"};
    app.require_subcommand(1);
    Options o;
    const auto common = [&](CLI::App* sub, bool needs_config) {
        auto* c = sub->add_option("--config", o.config, "Experiment config file");
        if (needs_config) c->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", o.seed, "Override the experiment seed");
        sub->add_option("--repeats", o.repeats, "Override the repeat count")->check(CLI::PositiveNumber);
        sub->add_option("--out", o.out, "Output directory")->capture_default_str();
    };
    auto* gen = app.add_subcommand("gen-data", "Generate the synthetic datasets");
    auto* tr = app.add_subcommand("train", "Train and persist per-repeat models");
    auto* fu = app.add_subcommand("fuse", "Fuse test reports with persisted models");
    auto* ev = app.add_subcommand("evaluate", "Train, fuse and score every method");
    auto* dmg = app.add_subcommand("simulate-damage", "Evaluate with damaged sensors");
    auto* rc = app.add_subcommand("roc", "ROC curves from fused reports");
    for (auto* s : {gen, tr, fu, ev, dmg}) common(s, true);
    common(rc, false);
    dmg->add_option("--damage", o.damage, "Damaged sensor ids (overrides the config)")->delimiter(',');
    rc->add_option("--input", o.input, "Fused report table (default <out>/fused_reports.tsv)");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*gen) gen_data(o);
        else if (*tr) train(o);
        else if (*fu) fuse(o);
        else if (*ev) evaluate(o);
        else if (*dmg) simulate_damage(o);
        else if (*rc) roc(o);
    } catch (const eventfuse::Error& e) {
        std::cerr << "eventfuse: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "eventfuse: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
