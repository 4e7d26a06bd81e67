#include "eventfuse/hidden_space.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "eventfuse/errors.hpp"
#include "eventfuse/seeding.hpp"

namespace eventfuse {

RandomProjection RandomProjection::sample(int d, int d_l, std::uint64_t seed) {
    if (d < 1 || d_l < 1) throw ValidationError("projection dimensions must be positive");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    RandomProjection p;
    p.seed = seed;
    p.matrix.resize(d, d_l);
    const double scale = 1.0 / std::sqrt(double(d_l));
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d_l; ++j) p.matrix(i, j) = g(rng) * scale;
    return p;
}

void HsConfig::validate(int min_sensor_dim) const {
    if (!(c1 > 0.0)) throw ValidationError("hidden-space c1 must be positive");
    if (!(c2 >= 0.0 && c3 >= 0.0)) throw ValidationError("hidden-space c2 and c3 must be nonnegative");
    if (!(learning_rate > 0.0)) throw ValidationError("hidden-space learning_rate must be positive");
    if (epochs < 1) throw ValidationError("hidden-space epochs must be positive");
    if (d < 1) throw ValidationError("hidden-space dimension must be positive");
    if (d >= min_sensor_dim)
        throw ValidationError("hidden-space dimension " + std::to_string(d) + " must be below every sensor dimension (" +
                              std::to_string(min_sensor_dim) + ")");
    if (!(final_lr_fraction > 0.0 && final_lr_fraction <= 1.0))
        throw ValidationError("hidden-space final_lr_fraction must lie in (0, 1]");
}

Eigen::MatrixXd commutator(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() != a.cols() || b.rows() != b.cols() || a.rows() != b.rows())
        throw ShapeError("commutator needs two square matrices of equal size");
    return a * b - b * a;
}

double hinge_slack(const WeightMatrix& w, const Eigen::Ref<const Eigen::VectorXd>& h, int y) {
    if (y < 0 || y >= w.num_classes()) throw IndexError("event index " + std::to_string(y) + " out of range");
    if (h.size() != w.weights.cols()) throw ShapeError("hidden vector length does not match the classifier");
    return multiclass_hinge(w.weights * h, y);
}

void HsProblem::validate() const {
    if (sensors.empty()) throw ValidationError("hidden-space problem has no sensors");
    const auto n = sensors.front().samples.rows();
    if (n < 1) throw ValidationError("hidden-space problem has no samples");
    std::set<std::string> ids;
    for (const auto& s : sensors) {
        if (s.samples.rows() != n)
            throw ValidationError("sensor " + s.id + " has " + std::to_string(s.samples.rows()) +
                                  " samples, expected " + std::to_string(n));
        if (!s.samples.allFinite()) throw ValidationError("sensor " + s.id + " has non-finite samples");
        if (!ids.insert(s.id).second) throw ValidationError("duplicate sensor id " + s.id);
    }
    std::set<std::string> features;
    for (const auto& f : this->features) {
        if (!ids.count(f.owner)) throw ReferenceError("feature " + f.feature_id + " owned by unknown sensor " + f.owner);
        if (!features.insert(f.feature_id).second) throw ValidationError("duplicate feature id " + f.feature_id);
        if (static_cast<Eigen::Index>(f.labels.size()) != n)
            throw ValidationError("feature " + f.feature_id + " labels are misaligned with the samples");
        if (f.num_events < 2) throw ValidationError("feature " + f.feature_id + " needs at least two events");
        for (int y : f.labels)
            if (y < 0 || y >= f.num_events) throw ValidationError("feature " + f.feature_id + " label out of range");
    }
}

std::size_t HsProblem::sensor_index(const std::string& id) const {
    for (std::size_t i = 0; i < sensors.size(); ++i)
        if (sensors[i].id == id) return i;
    throw ReferenceError("unknown sensor " + id);
}

int HsProblem::min_sensor_dim() const {
    int m = std::numeric_limits<int>::max();
    for (const auto& s : sensors) m = std::min(m, static_cast<int>(s.samples.cols()));
    return m;
}

HiddenSpaceObjective::HiddenSpaceObjective(std::vector<Eigen::MatrixXd> projected, std::vector<HingeTask> tasks,
                                           double c1, double c2, double c3)
    : projected_(std::move(projected)), tasks_(std::move(tasks)), c1_(c1), c2_(c2), c3_(c3) {
    if (projected_.empty()) throw ValidationError("objective needs at least one operator slot");
    const auto d = projected_.front().rows();
    const auto n = projected_.front().cols();
    for (const auto& p : projected_)
        if (p.rows() != d || p.cols() != n) throw ShapeError("projected data must share d and N");
    for (const auto& t : tasks_) {
        if (static_cast<Eigen::Index>(t.labels.size()) != n) throw ValidationError("task labels misaligned");
        if (t.num_events < 2) throw ValidationError("task needs at least two events");
        for (auto s : t.sources)
            if (s >= projected_.size()) throw IndexError("task source slot out of range");
        for (int y : t.labels)
            if (y < 0 || y >= t.num_events) throw ValidationError("task label out of range");
    }
}

HsVariables HiddenSpaceObjective::initial() const {
    HsVariables v;
    const auto d = dim();
    for (const auto& t : tasks_) v.w.push_back(Eigen::MatrixXd::Zero(t.num_events, d));
    v.z.assign(projected_.size(), Eigen::MatrixXd::Identity(d, d));
    return v;
}

HsTerms HiddenSpaceObjective::terms(const HsVariables& v) const {
    HsTerms out;
    std::vector<Eigen::MatrixXd> a(projected_.size());
    for (std::size_t r = 0; r < a.size(); ++r) a[r] = v.z[r] * projected_[r];
    for (std::size_t k = 0; k < tasks_.size(); ++k) {
        out.regularizer += 0.5 * v.w[k].squaredNorm();
        for (auto r : tasks_[k].sources) {
            const Eigen::MatrixXd s = v.w[k] * a[r];
            for (Eigen::Index n = 0; n < s.cols(); ++n) out.hinge += c1_ * multiclass_hinge(s.col(n), tasks_[k].labels[n]);
        }
    }
    for (std::size_t r = 0; r < a.size(); ++r)
        for (std::size_t s = r + 1; s < a.size(); ++s) {
            out.commutation += c2_ * commutator(v.z[r], v.z[s]).squaredNorm();
            out.alignment += c3_ * (a[r] - a[s]).squaredNorm();
        }
    return out;
}

HsVariables HiddenSpaceObjective::gradient(const HsVariables& v) const {
    HsVariables g;
    std::vector<Eigen::MatrixXd> a(projected_.size());
    for (std::size_t r = 0; r < a.size(); ++r) a[r] = v.z[r] * projected_[r];
    g.z.assign(projected_.size(), Eigen::MatrixXd::Zero(dim(), dim()));
    for (std::size_t k = 0; k < tasks_.size(); ++k) {
        Eigen::MatrixXd gw = v.w[k];
        for (auto r : tasks_[k].sources) {
            const Eigen::MatrixXd s = v.w[k] * a[r];
            Eigen::MatrixXd coef = Eigen::MatrixXd::Zero(s.rows(), s.cols());
            for (Eigen::Index n = 0; n < s.cols(); ++n) {
                int worst = -1;
                const int y = tasks_[k].labels[n];
                if (multiclass_hinge(s.col(n), y, &worst) > 0.0) {
                    coef(worst, n) += c1_;
                    coef(y, n) -= c1_;
                }
            }
            gw.noalias() += coef * a[r].transpose();
            g.z[r].noalias() += v.w[k].transpose() * coef * projected_[r].transpose();
        }
        g.w.push_back(std::move(gw));
    }
    for (std::size_t r = 0; r < a.size(); ++r)
        for (std::size_t s = 0; s < a.size(); ++s) {
            if (r == s) continue;
            const Eigen::MatrixXd c = commutator(v.z[r], v.z[s]);
            g.z[r].noalias() += 2.0 * c2_ * (c * v.z[s].transpose() - v.z[s].transpose() * c);
            g.z[r].noalias() += 2.0 * c3_ * (a[r] - a[s]) * projected_[r].transpose();
        }
    return g;
}

double HiddenSpaceObjective::mean_pairwise_gap(const HsVariables& v) const {
    if (projected_.size() < 2) return 0.0;
    double total = 0.0;
    int pairs = 0;
    const double n = double(projected_.front().cols());
    for (std::size_t r = 0; r < projected_.size(); ++r)
        for (std::size_t s = r + 1; s < projected_.size(); ++s, ++pairs)
            total += (v.z[r] * projected_[r] - v.z[s] * projected_[s]).squaredNorm() / n;
    return total / pairs;
}

double HiddenSpaceObjective::kink_distance(const HsVariables& v) const {
    double closest = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < tasks_.size(); ++k)
        for (auto r : tasks_[k].sources) {
            const Eigen::MatrixXd s = v.w[k] * v.z[r] * projected_[r];
            for (Eigen::Index n = 0; n < s.cols(); ++n) {
                const int y = tasks_[k].labels[n];
                double top = -std::numeric_limits<double>::infinity(), second = top;
                for (Eigen::Index t = 0; t < s.rows(); ++t) {
                    if (t == y) continue;
                    if (s(t, n) > top) {
                        second = top;
                        top = s(t, n);
                    } else if (s(t, n) > second) {
                        second = s(t, n);
                    }
                }
                closest = std::min(closest, std::abs(1.0 - s(y, n) + top));
                if (std::isfinite(second)) closest = std::min(closest, top - second);
            }
        }
    return closest;
}

HsVariables minimize_hidden_space(const HiddenSpaceObjective& objective, const HsConfig& config, HsTrace* trace) {
    HsVariables v = objective.initial();
    const double decay =
        config.epochs > 1 ? std::pow(config.final_lr_fraction, 1.0 / double(config.epochs - 1)) : 1.0;
    double step = config.learning_rate;
    for (int epoch = 0; epoch <= config.epochs; ++epoch) {
        const HsTerms t = objective.terms(v);
        if (!std::isfinite(t.total())) throw TrainingError("hidden-space objective diverged", epoch);
        if (trace) {
            trace->terms.push_back(t);
            trace->mean_gap.push_back(objective.mean_pairwise_gap(v));
        }
        if (epoch == config.epochs) break;
        const HsVariables g = objective.gradient(v);
        for (std::size_t k = 0; k < v.w.size(); ++k) v.w[k] -= step * g.w[k];
        for (std::size_t r = 0; r < v.z.size(); ++r) v.z[r] -= step * g.z[r];
        step *= decay;
    }
    return v;
}

OperatorSet::OperatorSet(HiddenSpaceKind kind, int d, std::uint64_t seed, std::vector<OperatorEntry> entries)
    : kind_(kind), d_(d), seed_(seed), entries_(std::move(entries)) {
    for (const auto& e : entries_) {
        if (e.z.rows() != d || e.z.cols() != d) throw ShapeError("operator must be d x d");
        if (!e.z.allFinite()) throw ValidationError("operator has non-finite entries");
        if (e.projection.matrix.rows() != d) throw ShapeError("projection must have d rows");
    }
}

bool OperatorSet::contains(const std::string& feature, const std::string& source) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const OperatorEntry& e) {
        return e.source == source && (kind_ == HiddenSpaceKind::Global || e.feature == feature);
    });
}

const OperatorEntry& OperatorSet::find(const std::string& feature, const std::string& source) const {
    for (const auto& e : entries_)
        if (e.source == source && (kind_ == HiddenSpaceKind::Global || e.feature == feature)) return e;
    throw ReferenceError("no operator for feature " + feature + " from sensor " + source);
}

Eigen::MatrixXd OperatorSet::transform(const std::string& feature, const std::string& source,
                                       const Eigen::MatrixXd& samples) const {
    const auto& e = find(feature, source);
    if (samples.cols() != e.projection.matrix.cols())
        throw ShapeError("sensor " + source + " samples have " + std::to_string(samples.cols()) +
                         " columns, projection expects " + std::to_string(e.projection.matrix.cols()));
    return e.z * (e.projection.matrix * samples.transpose());
}

namespace {

HiddenSpaceModel assemble(HiddenSpaceKind kind, const HsConfig& config, std::vector<OperatorEntry> entries,
                          std::map<std::string, WeightMatrix> classifiers, std::map<std::string, HsTrace> traces) {
    HiddenSpaceModel m;
    m.operators = OperatorSet(kind, config.d, config.seed, std::move(entries));
    m.classifiers = std::move(classifiers);
    m.traces = std::move(traces);
    return m;
}

}  // namespace

HiddenSpaceModel train_independent_hidden_spaces(const HsProblem& problem, const HsConfig& config) {
    problem.validate();
    config.validate(problem.min_sensor_dim());
    std::vector<OperatorEntry> entries;
    std::map<std::string, WeightMatrix> classifiers;
    std::map<std::string, HsTrace> traces;
    std::uint64_t slot = 0;
    for (const auto& f : problem.features) {
        std::vector<RandomProjection> us;
        std::vector<Eigen::MatrixXd> projected;
        HingeTask task{f.labels, f.num_events, {}};
        for (std::size_t r = 0; r < problem.sensors.size(); ++r) {
            const auto& s = problem.sensors[r];
            us.push_back(RandomProjection::sample(config.d, static_cast<int>(s.samples.cols()),
                                                  derive_seed(config.seed, slot++)));
            projected.push_back(us.back().matrix * s.samples.transpose());
            task.sources.push_back(r);
        }
        HiddenSpaceObjective objective(std::move(projected), {std::move(task)}, config.c1, config.c2, config.c3);
        HsTrace trace;
        HsVariables v = minimize_hidden_space(objective, config, &trace);
        for (std::size_t r = 0; r < problem.sensors.size(); ++r)
            entries.push_back({f.feature_id, f.owner, problem.sensors[r].id, std::move(v.z[r]), std::move(us[r])});
        classifiers[f.feature_id] = WeightMatrix{std::move(v.w.front())};
        traces[f.feature_id] = std::move(trace);
    }
    return assemble(HiddenSpaceKind::Independent, config, std::move(entries), std::move(classifiers),
                    std::move(traces));
}

HiddenSpaceModel train_global_hidden_space(const HsProblem& problem, const HsConfig& config) {
    problem.validate();
    config.validate(problem.min_sensor_dim());
    std::vector<RandomProjection> us;
    std::vector<Eigen::MatrixXd> projected;
    for (std::size_t r = 0; r < problem.sensors.size(); ++r) {
        const auto& s = problem.sensors[r];
        us.push_back(RandomProjection::sample(config.d, static_cast<int>(s.samples.cols()), derive_seed(config.seed, r)));
        projected.push_back(us.back().matrix * s.samples.transpose());
    }
    std::vector<HingeTask> tasks;
    for (const auto& f : problem.features) tasks.push_back({f.labels, f.num_events, {problem.sensor_index(f.owner)}});
    HiddenSpaceObjective objective(std::move(projected), std::move(tasks), config.c1, config.c2, config.c3);
    HsTrace trace;
    HsVariables v = minimize_hidden_space(objective, config, &trace);
    std::vector<OperatorEntry> entries;
    for (std::size_t r = 0; r < problem.sensors.size(); ++r) {
        const auto& id = problem.sensors[r].id;
        entries.push_back({"", id, id, std::move(v.z[r]), std::move(us[r])});
    }
    std::map<std::string, WeightMatrix> classifiers;
    for (std::size_t k = 0; k < problem.features.size(); ++k)
        classifiers[problem.features[k].feature_id] = WeightMatrix{std::move(v.w[k])};
    std::map<std::string, HsTrace> traces{{"", std::move(trace)}};
    return assemble(HiddenSpaceKind::Global, config, std::move(entries), std::move(classifiers), std::move(traces));
}

Eigen::MatrixXd recover_hidden_space(const OperatorSet& ops, const std::string& damaged_sensor,
                                     const std::string& feature,
                                     const std::map<std::string, Eigen::MatrixXd>& available) {
    if (available.empty()) throw NoSourceError("no available sensor to recover " + damaged_sensor + " from");
    Eigen::MatrixXd sum;
    for (const auto& [source, samples] : available) {
        if (ops.kind() == HiddenSpaceKind::Independent) {
            const auto& e = ops.find(feature, source);
            if (e.owner != damaged_sensor)
                throw ReferenceError("feature " + feature + " is not owned by sensor " + damaged_sensor);
        }
        Eigen::MatrixXd h = ops.transform(feature, source, samples);
        if (sum.size() == 0) {
            sum = std::move(h);
        } else {
            if (h.cols() != sum.cols()) throw ValidationError("available sensors disagree on the sample count");
            sum += h;
        }
    }
    return sum / double(available.size());
}

std::vector<std::vector<double>> hidden_space_probabilities(const WeightMatrix& w, const Eigen::MatrixXd& h) {
    if (h.rows() != w.weights.cols()) throw ShapeError("hidden space dimension does not match the classifier");
    std::vector<std::vector<double>> out;
    out.reserve(h.cols());
    for (Eigen::Index n = 0; n < h.cols(); ++n) out.push_back(event_probabilities(w, h.col(n)));
    return out;
}

double eigenvector_condition_number(const Eigen::MatrixXd& z) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(z);
    if (es.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(es.eigenvectors());
    const auto& sv = svd.singularValues();
    const double lo = sv.minCoeff();
    return lo > 0.0 ? sv.maxCoeff() / lo : std::numeric_limits<double>::infinity();
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream ls(line);
    std::string tok;
    while (std::getline(ls, tok, '\t')) out.push_back(tok);
    return out;
}

std::string field(const std::vector<std::string>& h, const std::string& key) {
    for (std::size_t i = 1; i + 1 < h.size(); i += 2)
        if (h[i] == key) return h[i + 1];
    throw ValidationError("operator header lacks '" + key + "'");
}

}  // namespace

void write_operator_set(std::ostream& out, const OperatorSet& ops) {
    out << "# operators\tkind\t" << (ops.kind() == HiddenSpaceKind::Global ? "global" : "independent") << "\td\t"
        << ops.dim() << "\tseed\t" << ops.seed() << "\tcount\t" << ops.entries().size() << '\n';
    for (const auto& e : ops.entries()) {
        out << "# operator\tfeature\t" << (e.feature.empty() ? "*" : e.feature) << "\towner\t" << e.owner
            << "\tsource\t" << e.source << "\tprojection_seed\t" << e.projection.seed << "\tcols\t"
            << e.projection.matrix.cols() << '\n';
        write_matrix_rows(out, e.z);
        write_matrix_rows(out, e.projection.matrix);
    }
}

OperatorSet read_operator_set(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("empty operator file");
    const auto top = split_tabs(line);
    if (top.empty() || top[0] != "# operators") throw ValidationError("missing '# operators' header");
    const std::string kind = field(top, "kind");
    if (kind != "global" && kind != "independent") throw ValidationError("unknown operator kind " + kind);
    const int d = std::stoi(field(top, "d"));
    const auto seed = std::stoull(field(top, "seed"));
    const auto count = std::stoul(field(top, "count"));
    std::vector<OperatorEntry> entries;
    for (std::size_t i = 0; i < count; ++i) {
        if (!std::getline(in, line)) throw ValidationError("operator file ends early");
        const auto h = split_tabs(line);
        if (h.empty() || h[0] != "# operator") throw ValidationError("missing '# operator' header");
        OperatorEntry e;
        e.feature = field(h, "feature");
        if (e.feature == "*") e.feature.clear();
        e.owner = field(h, "owner");
        e.source = field(h, "source");
        e.projection.seed = std::stoull(field(h, "projection_seed"));
        e.z = read_matrix_rows(in, d);
        e.projection.matrix = read_matrix_rows(in, d);
        if (e.projection.matrix.cols() != std::stol(field(h, "cols"))) throw ShapeError("projection width mismatch");
        entries.push_back(std::move(e));
    }
    return OperatorSet(kind == "global" ? HiddenSpaceKind::Global : HiddenSpaceKind::Independent, d, seed,
                       std::move(entries));
}

}  // namespace eventfuse
