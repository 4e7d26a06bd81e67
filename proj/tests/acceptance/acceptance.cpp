// Prints one PASS/FAIL line per acceptance criterion. Exit status is nonzero
// when a criterion fails, unless it is named with --allow-fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "eventfuse/baselines.hpp"
#include "eventfuse/classifiers.hpp"
#include "eventfuse/errors.hpp"
#include "eventfuse/event_algebra.hpp"
#include "eventfuse/harness.hpp"
#include "eventfuse/hidden_space.hpp"
#include "eventfuse/joint_distribution.hpp"
#include "eventfuse/synth_data.hpp"
#include "test_support.hpp"

using namespace eventfuse;
namespace fs = std::filesystem;

namespace {

// Tolerances and sizes.
constexpr int kC1Instances = 100;
constexpr double kC1BitBand = 1.0;
constexpr int kC2Instances = 1000;
constexpr double kC2Tolerance = 1e-9;
constexpr int kC3Instances = 500;
constexpr double kC3Tolerance = 1e-9;
constexpr double kC4MinAccuracy = 0.99;
constexpr double kC4MaxSlack = 1e-6;
constexpr int kC5Points = 20;
constexpr double kC5RelativeError = 1e-4;
constexpr double kC6Reduction = 0.5;
constexpr int kRepeats = 10;
constexpr int kC9Pairs = 50;
constexpr double kC9ShareWithinPixel = 0.95;
constexpr double kC10Tolerance = 1e-12;
constexpr int kC10Pairs = 100;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string num(double v, int digits = 4) {
    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(digits);
    out << v;
    return out.str();
}

std::string sci(double v) {
    std::ostringstream out;
    out.setf(std::ios::scientific);
    out.precision(2);
    out << v;
    return out.str();
}

fs::path g_configs = EVENTFUSE_CONFIG_DIR;
fs::path g_cli = EVENTFUSE_CLI_PATH;

Outcome coupling_band() {
    std::mt19937_64 rng(101);
    double worst = -1e300;
    bool ok = true;
    for (int i = 0; i < kC1Instances; ++i) {
        const auto catalog = testing::random_catalog(rng, 2, 4);
        const auto marginals = testing::random_marginals(rng, catalog);
        const double greedy = joint_entropy(max_mi_joint_greedy(marginals));
        const double oracle = testing::brute_force_min_entropy(marginals[0].probs(), marginals[1].probs(), rng);
        worst = std::max(worst, greedy - oracle);
        ok = ok && greedy <= oracle + kC1BitBand;
    }
    return {ok, "max greedy - oracle = " + num(worst) + " bits over " + std::to_string(kC1Instances) + " instances"};
}

Outcome marginal_consistency() {
    std::mt19937_64 rng(202);
    double worst = 0.0;
    for (int i = 0; i < kC2Instances; ++i) {
        const auto catalog = testing::random_catalog(rng, 2 + i % 2, 4);
        const auto marginals = testing::random_marginals(rng, catalog);
        const auto hi = max_mi_joint_greedy(marginals);
        const auto lo = min_mi_joint(marginals);
        std::vector<JointDistribution> joints = {hi, lo};
        for (double rho : {0.0, 0.25, 0.5, 0.75, 1.0}) joints.push_back(blend_joint(hi, lo, CorrelationCoefficient(rho)));
        for (const auto& j : joints)
            for (std::size_t f = 0; f < catalog.size(); ++f) {
                const auto back = marginalize(j, catalog[f]->feature_id());
                for (std::size_t e = 0; e < back.size(); ++e)
                    worst = std::max(worst, std::abs(back[e] - marginals[f][e]));
            }
    }
    return {worst <= kC2Tolerance, "max marginal error " + sci(worst)};
}

Outcome fusion_identities() {
    std::mt19937_64 rng(303);
    double worst = 0.0;
    for (int i = 0; i < kC3Instances; ++i) {
        const auto catalog = testing::random_catalog(rng, 2 + i % 2, 3);
        const auto joint = testing::random_joint(rng, catalog);
        const Expr a = testing::random_expr(rng, catalog, 2), b = testing::random_expr(rng, catalog, 2);
        const double pa = evaluate_expression(a, joint), pb = evaluate_expression(b, joint);
        const double por = evaluate_expression(Expr::disj(a, b), joint);
        const double pand = evaluate_expression(Expr::conj(a, b), joint);
        const double pnot = evaluate_expression(Expr::negate(a), joint);
        worst = std::max({worst, std::abs(por - (pa + pb - pand)), std::abs(pnot - (1.0 - pa)),
                         std::abs(pa - testing::oracle_probability(a, joint)),
                         std::abs(por - testing::oracle_probability(Expr::disj(a, b), joint)),
                         std::abs(pand - testing::oracle_probability(Expr::conj(a, b), joint))});
    }
    return {worst <= kC3Tolerance, "max identity or oracle error " + sci(worst)};
}

Outcome svm_correctness() {
    std::mt19937_64 rng(404);
    const auto blobs = testing::separable_blobs(rng, 3, 100);
    const auto data = LabeledDataset::with_bias(blobs.x, blobs.y, 3);
    const auto w = train_multiclass_svm(data, SvmConfig{});
    double slack = 0.0;
    for (Eigen::Index n = 0; n < data.size(); ++n)
        slack = std::max(slack, multiclass_hinge(w.scores(data.samples.row(n).transpose()), data.labels[n]));
    const double acc = accuracy(w, data);
    return {acc >= kC4MinAccuracy && slack < kC4MaxSlack, "accuracy " + num(acc) + ", max slack " + sci(slack)};
}

// The two-modality toy: 4-d and 3-d views of one latent class signal, d = 2.
HsProblem toy_problem(std::uint64_t seed, int n) {
    std::mt19937_64 rng(seed);
    auto t = testing::toy_modalities(rng, n);
    HsProblem p;
    p.sensors = {{"s1", t.x1}, {"s2", t.x2}};
    p.features = {{"f", "s1", 2, t.y}};
    return p;
}

std::vector<double*> slots(HsVariables& v) {
    std::vector<double*> out;
    for (auto& m : v.w)
        for (Eigen::Index i = 0; i < m.size(); ++i) out.push_back(m.data() + i);
    for (auto& m : v.z)
        for (Eigen::Index i = 0; i < m.size(); ++i) out.push_back(m.data() + i);
    return out;
}

Outcome gradient_check() {
    const auto p = toy_problem(505, 30);
    const auto u1 = RandomProjection::sample(2, 4, 506), u2 = RandomProjection::sample(2, 3, 507);
    HiddenSpaceObjective obj({u1.matrix * p.sensors[0].samples.transpose(), u2.matrix * p.sensors[1].samples.transpose()},
                             {{p.features[0].labels, 2, {0, 1}}}, 1.0, 0.7, 0.3);
    std::mt19937_64 rng(508);
    std::normal_distribution<double> g(0.0, 1.0);
    double worst = 0.0;
    for (int checked = 0; checked < kC5Points;) {
        HsVariables v = obj.initial();
        for (auto* x : slots(v)) *x += 0.5 * g(rng);
        if (obj.kink_distance(v) < 1e-3) continue;
        HsVariables grad = obj.gradient(v);
        const auto analytic = slots(grad);
        const auto params = slots(v);
        double num2 = 0.0, den2 = 0.0;
        const double h = 1e-6;
        for (std::size_t i = 0; i < params.size(); ++i) {
            const double keep = *params[i];
            *params[i] = keep + h;
            const double up = obj.value(v);
            *params[i] = keep - h;
            const double down = obj.value(v);
            *params[i] = keep;
            const double fd = (up - down) / (2 * h);
            num2 += (fd - *analytic[i]) * (fd - *analytic[i]);
            den2 += fd * fd;
        }
        worst = std::max(worst, std::sqrt(num2 / den2));
        ++checked;
    }
    return {worst < kC5RelativeError, "max relative error " + sci(worst) + " at " + std::to_string(kC5Points) + " points"};
}

Outcome commutation_effect() {
    const auto p = toy_problem(606, 60);
    HsConfig cfg;
    cfg.c1 = 1.0;
    cfg.c3 = 1.0;
    cfg.learning_rate = 2e-3;
    cfg.epochs = 400;
    cfg.seed = 607;
    cfg.c2 = 0.0;
    const auto free = train_independent_hidden_spaces(p, cfg);
    cfg.c2 = 10.0;
    const auto penalized = train_independent_hidden_spaces(p, cfg);
    auto comm = [](const HiddenSpaceModel& m) {
        return commutator(m.operators.find("f", "s1").z, m.operators.find("f", "s2").z).norm();
    };
    const double a = comm(free), b = comm(penalized);
    const auto& gap = penalized.traces.at("f").mean_gap;
    const bool ok = b <= kC6Reduction * a && gap.back() < gap.front();
    return {ok, "commutator " + num(a) + " -> " + num(b) + ", gap " + num(gap.front()) + " -> " + num(gap.back())};
}

ExperimentReport run_config(const std::string& name, const std::vector<std::string>& damaged = {}, bool damage = false) {
    auto cfg = load_config(g_configs / name);
    cfg.repeats = kRepeats;
    if (damage) cfg.damaged = damaged;
    return run_experiment(cfg);
}

Outcome graceful_degradation() {
    bool ok = true;
    std::string detail;
    for (const auto& [gone, left] : {std::pair<std::string, std::string>{"seismic", "acoustic"}, {"acoustic", "seismic"}}) {
        const auto r = run_config("field_damage.cfg", {gone}, true);
        const double ihs = r.mean_accuracy("damaged:ihs"), ghs = r.mean_accuracy("damaged:ghs");
        const double alone = r.mean_accuracy("sensor:" + left);
        ok = ok && ihs >= alone && ihs >= ghs;
        if (!detail.empty()) detail += "; ";
        detail += gone + " lost: ihs " + num(ihs) + " ghs " + num(ghs) + " " + left + " alone " + num(alone);
    }
    return {ok, detail};
}

Outcome fusion_beats_singles() {
    bool ok = true;
    std::string detail;
    for (const std::string name : {"field.cfg", "space.cfg"}) {
        const auto r = run_config(name);
        const double fused = r.mean_accuracy("event_driven_fusion");
        std::string worst;
        double best_other = 0.0;
        for (const auto& m : r.method_names()) {
            const bool compared = m.rfind("sensor:", 0) == 0 || m == "feature_concatenation" || m == "similar_sensor_fusion";
            if (!compared) continue;
            const double a = r.mean_accuracy(m);
            if (a > best_other) {
                best_other = a;
                worst = m;
            }
        }
        ok = ok && fused >= best_other;
        if (!detail.empty()) detail += "; ";
        detail += name.substr(0, name.find('.')) + " fused " + num(fused) + " vs best " + worst + " " + num(best_other);
    }
    return {ok, detail};
}

Outcome displacement_accuracy() {
    const TelescopeParams p;
    const auto pairs = gen_imaging_pairs(kC9Pairs, 909, p);
    const auto d_events = space_benchmark().events("d");
    int within = 0;
    for (const auto& pair : pairs) {
        const auto m = measure_image_pair(pair, p, *d_events);
        if (m.detected && std::hypot(m.shift_x - pair.shift_x, m.shift_y - pair.shift_y) <= 1.0) ++within;
    }
    const double share = double(within) / double(pairs.size());
    return {share >= kC9ShareWithinPixel, std::to_string(within) + "/" + std::to_string(pairs.size()) + " within 1 px"};
}

MassFunction random_mass(std::mt19937_64& rng, int frame) {
    std::uniform_int_distribution<Subset> subset(1, (Subset{1} << frame) - 1);
    std::uniform_int_distribution<int> count(1, 4);
    std::map<Subset, double> m;
    const int k = count(rng);
    const auto w = testing::random_simplex(rng, k);
    for (int i = 0; i < k; ++i) m[subset(rng)] += w[i];
    return MassFunction(frame, m);
}

Outcome dempster_checks() {
    const MassFunction a(3, {{1, 0.6}, {7, 0.4}}), b(3, {{1, 0.5}, {7, 0.5}});
    const auto hand = dempster_combine(a, b);
    const double hand_err = std::max(std::abs(hand.mass(1) - 0.8), std::abs(hand.mass(7) - 0.2));
    std::mt19937_64 rng(1010);
    double vac_err = 0.0, comm_err = 0.0;
    for (int checked = 0; checked < kC10Pairs;) {
        const auto x = random_mass(rng, 3), y = random_mass(rng, 3);
        const auto v = dempster_combine(x, MassFunction::vacuous(3));
        for (Subset s = 1; s <= x.frame(); ++s) vac_err = std::max(vac_err, std::abs(v.mass(s) - x.mass(s)));
        try {
            const auto xy = dempster_combine(x, y), yx = dempster_combine(y, x);
            for (Subset s = 1; s <= x.frame(); ++s) comm_err = std::max(comm_err, std::abs(xy.mass(s) - yx.mass(s)));
            ++checked;
        } catch (const ConflictError&) {
        }
    }
    const bool ok = hand_err <= kC10Tolerance && vac_err <= kC10Tolerance && comm_err <= kC10Tolerance;
    return {ok, "hand " + sci(hand_err) + ", vacuous " + sci(vac_err) + ", commutativity " + sci(comm_err)};
}

std::map<std::string, std::string> tree_contents(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        std::ifstream in(e.path(), std::ios::binary);
        out[fs::relative(e.path(), root).string()] = std::string(std::istreambuf_iterator<char>(in), {});
    }
    return out;
}

Outcome cli_determinism() {
    const fs::path base = fs::temp_directory_path() / "eventfuse_acceptance_cli";
    fs::remove_all(base);
    const std::string cli = g_cli.string();
    const std::string field = (g_configs / "field.cfg").string(), damage = (g_configs / "field_damage.cfg").string(),
                      space = (g_configs / "space.cfg").string();
    const std::vector<std::pair<std::string, std::string>> commands = {
        {"gen-data", "gen-data --config " + space + " --repeats 1 --out {}/gen"},
        {"train", "train --config " + damage + " --repeats 2 --out {}/model"},
        {"fuse", "fuse --config " + damage + " --repeats 2 --out {}/model"},
        {"evaluate", "evaluate --config " + field + " --repeats 2 --out {}/eval"},
        {"simulate-damage", "simulate-damage --config " + damage + " --repeats 2 --out {}/damage"},
        {"roc", "roc --out {}/eval"},
    };
    std::vector<std::map<std::string, std::string>> runs;
    for (const std::string run : {"a", "b"}) {
        const auto dir = base / run;
        fs::create_directories(dir);
        for (const auto& [name, args] : commands) {
            std::string line = args;
            for (std::size_t at; (at = line.find("{}")) != std::string::npos;) line.replace(at, 2, dir.string());
            const std::string cmd = "\"" + cli + "\" " + line + " > \"" + (dir / (name + ".stdout")).string() + "\" 2>&1";
            if (std::system(cmd.c_str()) != 0) return {false, name + " exited nonzero"};
        }
        runs.push_back(tree_contents(dir));
    }
    std::vector<std::string> differing;
    for (const auto& [file, bytes] : runs[0]) {
        const auto it = runs[1].find(file);
        if (it == runs[1].end() || it->second != bytes) differing.push_back(file);
    }
    if (runs[0].size() != runs[1].size()) differing.push_back("(file sets differ)");
    fs::remove_all(base);
    if (!differing.empty()) return {false, "differs: " + differing.front()};
    return {true, std::to_string(runs[0].size()) + " files byte-identical over " + std::to_string(commands.size()) +
                      " commands"};
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> allowed;
    std::set<int> only;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--allow-fail" && i + 1 < argc) allowed.insert(std::atoi(argv[++i]));
        else if (arg == "--only" && i + 1 < argc) only.insert(std::atoi(argv[++i]));
        else if (arg == "--configs" && i + 1 < argc) g_configs = argv[++i];
        else if (arg == "--cli" && i + 1 < argc) g_cli = argv[++i];
        else {
            std::cerr << "usage: acceptance [--only N] [--allow-fail N] [--configs DIR] [--cli PATH]\n";
            return 2;
        }
    }
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"coupling optimality band", coupling_band},
        {"marginal consistency", marginal_consistency},
        {"fusion identities", fusion_identities},
        {"svm correctness", svm_correctness},
        {"gradient check", gradient_check},
        {"commutation effect", commutation_effect},
        {"graceful degradation", graceful_degradation},
        {"fusion beats singles", fusion_beats_singles},
        {"displacement accuracy", displacement_accuracy},
        {"dempster-shafer checks", dempster_checks},
        {"cli determinism", cli_determinism},
    };
    int blocking = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!only.empty() && !only.count(id)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("C%-2d %s  %-26s %s (%.1f s)%s\n", id, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                    o.detail.c_str(), secs, !o.pass && allowed.count(id) ? " [known failure]" : "");
        std::fflush(stdout);
        if (!o.pass && !allowed.count(id)) ++blocking;
    }
    return blocking == 0 ? 0 : 1;
}
