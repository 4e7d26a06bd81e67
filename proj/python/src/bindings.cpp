#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "eventfuse/baselines.hpp"
#include "eventfuse/classifiers.hpp"
#include "eventfuse/errors.hpp"
#include "eventfuse/event_algebra.hpp"
#include "eventfuse/harness.hpp"
#include "eventfuse/joint_distribution.hpp"
#include "eventfuse/synth_data.hpp"

namespace py = pybind11;
using namespace eventfuse;

namespace {

using Interval = std::tuple<std::string, double, double>;
using EventTable = std::vector<std::pair<std::string, std::vector<Interval>>>;

Catalog catalog_of(const EventTable& table) {
    Catalog out;
    for (const auto& [feature, intervals] : table) {
        std::vector<EventSpec> events;
        for (const auto& [id, lo, hi] : intervals) events.push_back({id, lo, hi});
        out.push_back(make_event_set(feature, "", std::move(events)));
    }
    return out;
}

// Features f0, f1, ... with events e0, e1, ... sized by the marginals.
std::vector<ProbabilityReport> anonymous_reports(const std::vector<std::vector<double>>& marginals) {
    std::vector<ProbabilityReport> out;
    for (std::size_t f = 0; f < marginals.size(); ++f) {
        std::vector<EventSpec> events;
        for (std::size_t j = 0; j < marginals[f].size(); ++j)
            events.push_back({"f" + std::to_string(f) + "e" + std::to_string(j), double(j), double(j + 1)});
        out.emplace_back(make_event_set("f" + std::to_string(f), "", std::move(events)), marginals[f]);
    }
    return out;
}

std::vector<double> joint_mass(const std::vector<std::vector<double>>& marginals, double rho) {
    const auto reports = anonymous_reports(marginals);
    return blend_joint(max_mi_joint_greedy(reports), min_mi_joint(reports), CorrelationCoefficient(rho)).mass();
}

py::dict fuse(const EventTable& events, const std::map<std::string, std::vector<double>>& reports,
              const std::vector<std::pair<std::string, std::string>>& objects, double rho) {
    const Catalog catalog = catalog_of(events);
    std::vector<ProbabilityReport> marginals;
    for (const auto& es : catalog) {
        const auto it = reports.find(es->feature_id());
        if (it == reports.end()) throw ReferenceError("no report for feature '" + es->feature_id() + "'");
        marginals.emplace_back(es, it->second);
    }
    std::vector<ObjectDefinition> defs;
    for (const auto& [name, text] : objects) defs.push_back(parse_object_expression(text, catalog, name));
    const auto joint = blend_joint(max_mi_joint_greedy(marginals), min_mi_joint(marginals), CorrelationCoefficient(rho));
    const auto r = fused_report(defs, joint);
    py::dict out;
    out["object_probs"] = r.object_probs;
    out["complement"] = r.complement;
    out["label"] = r.label;
    return out;
}

py::dict dataset_dict(const SyntheticDataset& d) {
    py::dict sensors;
    for (const auto& s : d.sensors) sensors[py::str(s.id)] = s.values;
    py::dict out;
    out["sensors"] = sensors;
    out["classes"] = d.classes();
    out["class_names"] = d.spec.class_names();
    return out;
}

}  // namespace

PYBIND11_MODULE(_eventfuse, m) {
    m.doc() = "Event-driven decision-level sensor fusion";

    auto base = py::register_exception<Error>(m, "Error");
    py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
    py::register_exception<ReferenceError>(m, "ReferenceError", base.ptr());
    py::register_exception<ParseError>(m, "ParseError", base.ptr());
    py::register_exception<ConflictError>(m, "ConflictError", base.ptr());
    py::register_exception<TrainingError>(m, "TrainingError", base.ptr());

    m.def("min_mi_joint", [](const std::vector<std::vector<double>>& p) { return joint_mass(p, 0.0); },
          py::arg("marginals"), "Product of the marginals as a flat mass vector, first feature most significant.");
    m.def("max_mi_joint", [](const std::vector<std::vector<double>>& p) { return joint_mass(p, 1.0); },
          py::arg("marginals"), "Greedy minimum-entropy coupling as a flat mass vector.");
    m.def("blend_joint", &joint_mass, py::arg("marginals"), py::arg("rho"));
    m.def("joint_entropy", [](const std::vector<double>& mass) { return entropy_bits(mass); }, py::arg("mass"));
    m.def("fuse", &fuse, py::arg("events"), py::arg("reports"), py::arg("objects"), py::arg("rho") = 0.0,
          "events: [(feature, [(event, lower, upper), ...]), ...]; reports: {feature: probs}; "
          "objects: [(name, expression), ...].");

    m.def(
        "train_svm",
        [](const Eigen::MatrixXd& x, const std::vector<int>& y, int num_classes, double c, double learning_rate,
           int epochs) {
            SvmConfig cfg;
            cfg.c = c;
            cfg.learning_rate = learning_rate;
            cfg.epochs = epochs;
            return train_multiclass_svm(LabeledDataset::with_bias(x, y, num_classes), cfg).weights;
        },
        py::arg("x"), py::arg("y"), py::arg("num_classes"), py::arg("c") = 1.0, py::arg("learning_rate") = 1e-3,
        py::arg("epochs") = 200, "Class-by-(features + 1) weights; the last column multiplies a constant 1.");
    m.def(
        "svm_predict",
        [](const Eigen::MatrixXd& w, const Eigen::MatrixXd& x) {
            const auto d = LabeledDataset::with_bias(x, std::vector<int>(x.rows(), 0), static_cast<int>(w.rows()));
            std::vector<int> out;
            for (Eigen::Index i = 0; i < d.size(); ++i) out.push_back(predict(WeightMatrix{w}, d.samples.row(i).transpose()));
            return out;
        },
        py::arg("w"), py::arg("x"));

    m.def(
        "dempster_combine",
        [](int frame_size, const std::map<Subset, double>& a, const std::map<Subset, double>& b) {
            return dempster_combine(MassFunction(frame_size, a), MassFunction(frame_size, b)).masses();
        },
        py::arg("frame_size"), py::arg("a"), py::arg("b"), "Masses keyed by subset bit masks.");
    m.def(
        "pignistic",
        [](int frame_size, const std::map<Subset, double>& a) { return pignistic(MassFunction(frame_size, a)); },
        py::arg("frame_size"), py::arg("masses"));

    m.def(
        "compute_roc",
        [](const std::vector<double>& scores, const std::vector<bool>& positives) {
            const auto r = compute_roc(scores, positives);
            return std::make_pair(r.points, r.auc);
        },
        py::arg("scores"), py::arg("positives"), "(points, auc) with points as (fpr, tpr).");

    m.def(
        "gen_seismic_acoustic_dataset",
        [](int n, std::uint64_t seed) { return dataset_dict(gen_seismic_acoustic_dataset(n, seed)); },
        py::arg("n_samples"), py::arg("seed"));
    m.def(
        "gen_radar_dataset",
        [](int n, std::uint64_t seed, double snr_db) { return dataset_dict(gen_radar_dataset(n, seed, snr_db)); },
        py::arg("n_samples"), py::arg("seed"), py::arg("snr_db"));

    m.def(
        "run_experiment",
        [](const std::string& config, std::optional<std::uint64_t> seed, std::optional<int> repeats) {
            auto cfg = load_config(config);
            if (seed) cfg.seed = *seed;
            if (repeats) cfg.repeats = *repeats;
            const auto report = [&] {
                py::gil_scoped_release release;
                return run_experiment(cfg);
            }();
            std::map<std::string, double> out;
            for (const auto& name : report.method_names()) out[name] = report.mean_accuracy(name);
            return out;
        },
        py::arg("config"), py::arg("seed") = py::none(), py::arg("repeats") = py::none(),
        "Mean test accuracy per method.");
}
