#include "eventfuse/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <istream>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>

#include "eventfuse/errors.hpp"

namespace eventfuse {

LabeledDataset LabeledDataset::with_bias(const Eigen::MatrixXd& raw, std::vector<int> labels, int num_classes) {
    LabeledDataset d;
    d.samples.resize(raw.rows(), raw.cols() + 1);
    d.samples.leftCols(raw.cols()) = raw;
    d.samples.col(raw.cols()).setOnes();
    d.labels = std::move(labels);
    d.num_classes = num_classes;
    d.validate();
    return d;
}

void LabeledDataset::validate() const {
    if (samples.rows() < 1) throw ValidationError("dataset is empty");
    if (static_cast<std::size_t>(samples.rows()) != labels.size())
        throw ValidationError("dataset has " + std::to_string(samples.rows()) + " samples and " +
                              std::to_string(labels.size()) + " labels");
    if (num_classes < 2) throw ValidationError("dataset needs at least two classes");
    for (int y : labels)
        if (y < 0 || y >= num_classes) throw ValidationError("label " + std::to_string(y) + " out of range");
    if (samples.cols() < 1 || (samples.col(samples.cols() - 1).array() != 1.0).any())
        throw ValidationError("last sample column must be the constant bias feature");
}

void SvmConfig::validate() const {
    if (!(c > 0.0)) throw ValidationError("svm c must be positive");
    if (!(learning_rate > 0.0)) throw ValidationError("svm learning_rate must be positive");
    if (epochs < 1) throw ValidationError("svm epochs must be positive");
    if (!(final_lr_fraction > 0.0 && final_lr_fraction <= 1.0))
        throw ValidationError("svm final_lr_fraction must lie in (0, 1]");
}

double multiclass_hinge(const Eigen::Ref<const Eigen::VectorXd>& scores, int y, int* worst) {
    int best_t = -1;
    double best = -std::numeric_limits<double>::infinity();
    for (int t = 0; t < scores.size(); ++t) {
        if (t == y) continue;
        if (scores[t] > best) {
            best = scores[t];
            best_t = t;
        }
    }
    if (worst) *worst = best_t;
    return std::max(0.0, 1.0 - scores[y] + best);
}

double svm_objective(const WeightMatrix& w, const LabeledDataset& data, double c) {
    const Eigen::MatrixXd scores = data.samples * w.weights.transpose();
    double hinge = 0.0;
    for (Eigen::Index n = 0; n < scores.rows(); ++n)
        hinge += multiclass_hinge(scores.row(n).transpose(), data.labels[n]);
    return 0.5 * w.weights.squaredNorm() + c * hinge;
}

SvmTrainResult train_multiclass_svm_traced(const LabeledDataset& data, const SvmConfig& config) {
    data.validate();
    config.validate();
    {
        std::vector<bool> present(data.num_classes, false);
        for (int y : data.labels) present[y] = true;
        if (std::count(present.begin(), present.end(), true) < 2)
            throw ValidationError("svm training needs at least two classes present in the labels");
    }

    const auto& x = data.samples;
    const Eigen::Index n = x.rows();
    SvmTrainResult result;
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(data.num_classes, x.cols());
    Eigen::MatrixXd grad(w.rows(), w.cols());
    Eigen::MatrixXd scores(n, w.rows());
    result.objective_trace.reserve(config.epochs + 1);

    const double decay =
        config.epochs > 1 ? std::pow(config.final_lr_fraction, 1.0 / double(config.epochs - 1)) : 1.0;
    double step = config.learning_rate;
    for (int epoch = 0; epoch <= config.epochs; ++epoch) {
        scores.noalias() = x * w.transpose();
        grad = w;
        double hinge = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            int worst = -1;
            const int y = data.labels[i];
            const double v = multiclass_hinge(scores.row(i).transpose(), y, &worst);
            if (v > 0.0) {
                hinge += v;
                grad.row(worst) += config.c * x.row(i);
                grad.row(y) -= config.c * x.row(i);
            }
        }
        const double objective = 0.5 * w.squaredNorm() + config.c * hinge;
        if (!std::isfinite(objective)) throw TrainingError("svm objective diverged", epoch);
        result.objective_trace.push_back(objective);
        if (epoch == config.epochs) break;
        w -= step * grad;
        step *= decay;
    }
    result.weights.weights = std::move(w);
    return result;
}

WeightMatrix train_multiclass_svm(const LabeledDataset& data, const SvmConfig& config) {
    return train_multiclass_svm_traced(data, config).weights;
}

int predict(const WeightMatrix& w, const Eigen::Ref<const Eigen::VectorXd>& x) {
    Eigen::Index best = 0;
    w.scores(x).maxCoeff(&best);
    return static_cast<int>(best);
}

double accuracy(const WeightMatrix& w, const LabeledDataset& data) {
    const Eigen::MatrixXd scores = data.samples * w.weights.transpose();
    int correct = 0;
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        Eigen::Index best = 0;
        scores.row(i).maxCoeff(&best);
        correct += (best == data.labels[i]);
    }
    return double(correct) / double(scores.rows());
}

std::vector<double> softmax(std::span<const double> scores) {
    if (scores.empty()) throw ValidationError("softmax of an empty score vector");
    double top = -std::numeric_limits<double>::infinity();
    for (double s : scores) {
        if (!std::isfinite(s)) throw EvaluationError("non-finite classifier score");
        top = std::max(top, s);
    }
    std::vector<double> p(scores.size());
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) total += (p[i] = std::exp(scores[i] - top));
    for (double& v : p) v /= total;
    return p;
}

std::vector<double> event_probabilities(const WeightMatrix& w, const Eigen::Ref<const Eigen::VectorXd>& x) {
    if (x.size() != w.weights.cols())
        throw ShapeError("sample has " + std::to_string(x.size()) + " entries, weights expect " +
                         std::to_string(w.weights.cols()));
    const Eigen::VectorXd s = w.scores(x);
    return softmax(std::span<const double>(s.data(), static_cast<std::size_t>(s.size())));
}

ProbabilityReport event_report(const WeightMatrix& w, const Eigen::Ref<const Eigen::VectorXd>& x, EventSetPtr events) {
    return ProbabilityReport(std::move(events), event_probabilities(w, x));
}

std::vector<EventSpec> derive_event_ranges(const std::vector<std::vector<double>>& values_per_class,
                                           const std::vector<std::string>& ids) {
    if (!ids.empty() && ids.size() != values_per_class.size())
        throw ValidationError("event id count does not match the class count");
    std::vector<EventSpec> out;
    for (std::size_t j = 0; j < values_per_class.size(); ++j) {
        const auto& v = values_per_class[j];
        if (v.size() < 2) throw DegenerateInputError("event range needs at least two samples per class");
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        const double sd = std::sqrt(ss / double(v.size() - 1));
        if (!(sd > 0.0)) throw DegenerateInputError("event range has zero width (constant class values)");
        out.push_back({ids.empty() ? "a" + std::to_string(j + 1) : ids[j], mean - 2.0 * sd, mean + 2.0 * sd, true});
    }
    return out;
}

ProbabilityReport combine_duplicate_feature_reports(std::span<const ProbabilityReport> reports,
                                                    std::span<const double> accuracies) {
    if (reports.empty()) throw ValidationError("no reports to combine");
    if (reports.size() != accuracies.size()) throw ValidationError("one accuracy per report is required");
    const auto& first = reports.front().events();
    for (const auto& r : reports) {
        if (r.feature_id() != first.feature_id() || r.size() != first.size())
            throw IncompatibleError("reports cover different event sets");
        for (std::size_t j = 0; j < first.size(); ++j)
            if (r.events()[j].id != first[j].id) throw IncompatibleError("reports cover different event sets");
    }
    double total = 0.0;
    for (double a : accuracies) {
        if (!(a >= 0.0 && a <= 1.0)) throw ValidationError("accuracies must lie in [0, 1]");
        total += a;
    }
    if (!(total > 0.0)) throw ValidationError("accuracies are all zero");
    std::vector<double> p(first.size(), 0.0);
    for (std::size_t r = 0; r < reports.size(); ++r)
        for (std::size_t j = 0; j < p.size(); ++j) p[j] += accuracies[r] / total * reports[r][j];
    const double sum = std::accumulate(p.begin(), p.end(), 0.0);
    for (double& v : p) v /= sum;
    return ProbabilityReport(reports.front().event_set(), std::move(p));
}

std::vector<double> magnitude_spectrum(std::span<const double> signal) {
    const std::size_t n = signal.size();
    if (n == 0) return {};
    std::vector<double> out(n / 2 + 1);
    for (std::size_t k = 0; k < out.size(); ++k) {
        std::complex<double> acc{0.0, 0.0};
        for (std::size_t t = 0; t < n; ++t) {
            const double phase = -2.0 * std::numbers::pi * double(k * t % n) / double(n);
            acc += signal[t] * std::complex<double>(std::cos(phase), std::sin(phase));
        }
        out[k] = std::abs(acc);
    }
    return out;
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& rows) {
    if (rows.rows() < 1) throw ValidationError("cannot standardize an empty matrix");
    Standardizer s;
    s.mean = rows.colwise().mean();
    s.scale.resize(rows.cols());
    for (Eigen::Index j = 0; j < rows.cols(); ++j) {
        const double var = (rows.col(j).array() - s.mean[j]).square().mean();
        s.scale[j] = var > 1e-24 ? std::sqrt(var) : 1.0;
    }
    return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& rows) const {
    if (rows.cols() != mean.size()) throw ShapeError("standardizer fitted on a different column count");
    return (rows.rowwise() - mean).array().rowwise() / scale.array();
}

void write_matrix_rows(std::ostream& out, const Eigen::MatrixXd& m) {
    std::ostringstream row;
    row.precision(17);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        row.str({});
        for (Eigen::Index j = 0; j < m.cols(); ++j) row << (j ? "\t" : "") << m(i, j);
        row << '\n';
        out << row.str();
    }
}

Eigen::MatrixXd read_matrix_rows(std::istream& in, Eigen::Index rows) {
    std::vector<std::vector<double>> data;
    std::string line;
    while (static_cast<Eigen::Index>(data.size()) < rows && std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::vector<double> vals;
        std::string tok;
        while (std::getline(ls, tok, '\t')) vals.push_back(std::stod(tok));
        if (!data.empty() && vals.size() != data.front().size()) throw ValidationError("ragged matrix rows");
        data.push_back(std::move(vals));
    }
    if (static_cast<Eigen::Index>(data.size()) != rows) throw ValidationError("matrix has too few rows");
    Eigen::MatrixXd m(rows, rows ? static_cast<Eigen::Index>(data.front().size()) : 0);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = data[i][j];
    return m;
}

namespace {

std::vector<std::string> header_fields(std::istream& in, const std::string& key) {
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("missing '" + key + "' header");
    std::istringstream ls(line);
    std::string hash, name, tok;
    std::getline(ls, hash, '\t');
    if (hash != "# " + key) throw ValidationError("expected '# " + key + "' header, found '" + hash + "'");
    std::vector<std::string> fields;
    while (std::getline(ls, tok, '\t')) fields.push_back(tok);
    return fields;
}

}  // namespace

void write_weights(std::ostream& out, const WeightMatrix& w, const std::string& feature_id,
                   const std::vector<std::string>& event_ids) {
    if (static_cast<Eigen::Index>(event_ids.size()) != w.weights.rows())
        throw ValidationError("one event id per weight row is required");
    out << "# feature\t" << feature_id << '\n' << "# events";
    for (const auto& e : event_ids) out << '\t' << e;
    out << '\n';
    write_matrix_rows(out, w.weights);
}

WeightMatrix read_weights(std::istream& in, std::string* feature_id, std::vector<std::string>* event_ids) {
    const auto feature = header_fields(in, "feature");
    if (feature.size() != 1) throw ValidationError("feature header needs exactly one id");
    auto events = header_fields(in, "events");
    WeightMatrix w{read_matrix_rows(in, static_cast<Eigen::Index>(events.size()))};
    if (feature_id) *feature_id = feature.front();
    if (event_ids) *event_ids = std::move(events);
    return w;
}

}  // namespace eventfuse
