#include "eventfuse/joint_distribution.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "eventfuse/errors.hpp"

namespace eventfuse {

namespace {

constexpr double kZeroMass = 1e-12;

Catalog catalog_of(std::span<const ProbabilityReport> marginals) {
    Catalog catalog;
    catalog.reserve(marginals.size());
    for (const auto& m : marginals) {
        for (const auto& existing : catalog)
            if (existing->feature_id() == m.feature_id())
                throw ValidationError("feature '" + m.feature_id() + "' appears twice in the marginals");
        catalog.push_back(m.event_set());
    }
    return catalog;
}

std::vector<std::size_t> strides_of(const Catalog& catalog) {
    std::vector<std::size_t> strides(catalog.size(), 1);
    for (std::size_t f = catalog.size(); f-- > 1;) strides[f - 1] = strides[f] * catalog[f]->size();
    return strides;
}

std::vector<std::vector<double>> marginal_sums(const Catalog& catalog, const std::vector<ProductCell>& cells,
                                               const std::vector<double>& mass) {
    std::vector<std::vector<double>> sums;
    sums.reserve(catalog.size());
    for (const auto& set : catalog) sums.emplace_back(set->size(), 0.0);
    for (std::size_t i = 0; i < cells.size(); ++i)
        for (std::size_t f = 0; f < catalog.size(); ++f) sums[f][cells[i].events[f]] += mass[i];
    return sums;
}

// Rescales to an exact unit sum; inputs are already within tolerance.
std::vector<ProbabilityReport> normalized(std::span<const ProbabilityReport> marginals) {
    std::vector<ProbabilityReport> out;
    out.reserve(marginals.size());
    for (const auto& m : marginals) {
        const double total = std::accumulate(m.probs().begin(), m.probs().end(), 0.0);
        std::vector<double> p = m.probs();
        for (double& v : p) v /= total;
        out.emplace_back(m.event_set(), std::move(p));
    }
    return out;
}

void require_marginals(std::span<const ProbabilityReport> marginals) {
    if (marginals.size() < 2) throw ValidationError("a coupling needs at least two marginals");
}

}  // namespace

JointDistribution::JointDistribution(std::vector<ProbabilityReport> marginals, std::vector<double> mass)
    : marginals_(std::move(marginals)),
      catalog_(catalog_of(marginals_)),
      cells_(enumerate_product_space(catalog_)),
      mass_(std::move(mass)) {
    if (mass_.size() != cells_.size())
        throw ValidationError("joint has " + std::to_string(mass_.size()) + " masses for " +
                              std::to_string(cells_.size()) + " cells");
    double total = 0.0;
    for (double& m : mass_) {
        if (!(m >= -kZeroMass)) throw ValidationError("joint mass must be nonnegative");
        m = std::max(m, 0.0);
        total += m;
    }
    if (std::abs(total - 1.0) > kProbabilityTolerance)
        throw ValidationError("joint mass sums to " + std::to_string(total));
    const auto sums = marginal_sums(catalog_, cells_, mass_);
    for (std::size_t f = 0; f < catalog_.size(); ++f)
        for (std::size_t j = 0; j < sums[f].size(); ++j)
            if (std::abs(sums[f][j] - marginals_[f][j]) > kProbabilityTolerance)
                throw ValidationError("joint does not reproduce the marginal of '" + catalog_[f]->feature_id() + "'");
}

JointDistribution JointDistribution::from_mass(const Catalog& catalog, std::vector<double> mass) {
    const auto cells = enumerate_product_space(catalog);
    if (mass.size() != cells.size()) throw ValidationError("mass vector does not match the product space");
    const auto sums = marginal_sums(catalog, cells, mass);
    std::vector<ProbabilityReport> marginals;
    for (std::size_t f = 0; f < catalog.size(); ++f) marginals.emplace_back(catalog[f], sums[f]);
    return JointDistribution(std::move(marginals), std::move(mass));
}

std::size_t JointDistribution::feature_index(std::string_view feature_id) const {
    for (std::size_t f = 0; f < catalog_.size(); ++f)
        if (catalog_[f]->feature_id() == feature_id) return f;
    throw ReferenceError("feature '" + std::string(feature_id) + "' is not part of the joint distribution");
}

bool JointDistribution::has_feature(std::string_view feature_id) const {
    return std::any_of(catalog_.begin(), catalog_.end(),
                       [&](const EventSetPtr& s) { return s->feature_id() == feature_id; });
}

CorrelationCoefficient::CorrelationCoefficient(double rho) : rho_(rho) {
    if (!(rho >= 0.0 && rho <= 1.0)) throw ValidationError("rho must lie in [0, 1]");
}

JointDistribution min_mi_joint(std::span<const ProbabilityReport> marginals) {
    require_marginals(marginals);
    auto norm = normalized(marginals);
    const Catalog catalog = catalog_of(norm);
    const auto cells = enumerate_product_space(catalog);
    std::vector<double> mass(cells.size(), 1.0);
    for (std::size_t i = 0; i < cells.size(); ++i)
        for (std::size_t f = 0; f < catalog.size(); ++f) mass[i] *= norm[f][cells[i].events[f]];
    return JointDistribution(std::move(norm), std::move(mass));
}

GreedyCoupling greedy_coupling(std::span<const ProbabilityReport> marginals) {
    require_marginals(marginals);
    auto norm = normalized(marginals);
    const Catalog catalog = catalog_of(norm);
    const auto strides = strides_of(catalog);
    std::vector<double> mass(product_cardinality(catalog), 0.0);

    std::vector<std::vector<double>> residual;
    std::size_t max_iterations = 1;
    for (const auto& m : norm) {
        residual.push_back(m.probs());
        max_iterations += m.size();
    }

    auto largest_total = [&] {
        double worst = 0.0;
        for (const auto& r : residual) worst = std::max(worst, std::accumulate(r.begin(), r.end(), 0.0));
        return worst;
    };

    int iterations = 0;
    std::vector<double> trace;
    std::vector<std::size_t> argmax(catalog.size());
    for (std::size_t it = 0; it < max_iterations && largest_total() >= kZeroMass; ++it) {
        double step = std::numeric_limits<double>::infinity();
        for (std::size_t f = 0; f < residual.size(); ++f) {
            // First maximum: ties go to the lowest event index.
            argmax[f] = static_cast<std::size_t>(std::max_element(residual[f].begin(), residual[f].end()) -
                                                 residual[f].begin());
            step = std::min(step, residual[f][argmax[f]]);
        }
        if (!(step > 0.0)) break;
        std::size_t cell = 0;
        for (std::size_t f = 0; f < residual.size(); ++f) {
            cell += argmax[f] * strides[f];
            residual[f][argmax[f]] -= step;
        }
        mass[cell] += step;
        ++iterations;
        trace.push_back(largest_total());
    }
    return GreedyCoupling{JointDistribution(std::move(norm), std::move(mass)), iterations, std::move(trace)};
}

JointDistribution max_mi_joint_greedy(std::span<const ProbabilityReport> marginals) {
    return greedy_coupling(marginals).joint;
}

JointDistribution blend_joint(const JointDistribution& max_mi, const JointDistribution& min_mi,
                              CorrelationCoefficient rho) {
    const auto& a = max_mi.features();
    const auto& b = min_mi.features();
    if (a.size() != b.size()) throw IncompatibleError("joints cover different features");
    for (std::size_t f = 0; f < a.size(); ++f) {
        if (a[f]->feature_id() != b[f]->feature_id() || a[f]->size() != b[f]->size())
            throw IncompatibleError("joints have different cells");
        for (std::size_t j = 0; j < a[f]->size(); ++j) {
            if ((*a[f])[j].id != (*b[f])[j].id) throw IncompatibleError("joints have different cells");
            if (std::abs(max_mi.marginals()[f][j] - min_mi.marginals()[f][j]) > kProbabilityTolerance)
                throw IncompatibleError("joints have different marginals for '" + a[f]->feature_id() + "'");
        }
    }
    const double r = rho.value();
    std::vector<double> mass(max_mi.mass().size());
    for (std::size_t i = 0; i < mass.size(); ++i) mass[i] = r * max_mi.mass()[i] + (1.0 - r) * min_mi.mass()[i];
    return JointDistribution(min_mi.marginals(), std::move(mass));
}

double entropy_bits(std::span<const double> probs) {
    double h = 0.0;
    for (double p : probs)
        if (p >= kZeroMass) h -= p * std::log2(p);
    return h;
}

double joint_entropy(const JointDistribution& joint) { return entropy_bits(joint.mass()); }

double mutual_information(const JointDistribution& joint, std::string_view feature_a, std::string_view feature_b) {
    const std::size_t fa = joint.feature_index(feature_a);
    const std::size_t fb = joint.feature_index(feature_b);
    const std::size_t na = joint.features()[fa]->size();
    const std::size_t nb = joint.features()[fb]->size();
    std::vector<double> pair(na * nb, 0.0), pa(na, 0.0), pb(nb, 0.0);
    const auto& cells = joint.cells();
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto ea = cells[i].events[fa];
        const auto eb = cells[i].events[fb];
        pair[ea * nb + eb] += joint.mass()[i];
        pa[ea] += joint.mass()[i];
        pb[eb] += joint.mass()[i];
    }
    double mi = 0.0;
    for (std::size_t x = 0; x < na; ++x)
        for (std::size_t y = 0; y < nb; ++y) {
            const double p = pair[x * nb + y];
            if (p >= kZeroMass) mi += p * std::log2(p / (pa[x] * pb[y]));
        }
    return std::max(mi, 0.0);
}

ProbabilityReport marginalize(const JointDistribution& joint, std::string_view feature_id) {
    const std::size_t f = joint.feature_index(feature_id);
    std::vector<double> probs(joint.features()[f]->size(), 0.0);
    for (std::size_t i = 0; i < joint.cells().size(); ++i) probs[joint.cells()[i].events[f]] += joint.mass()[i];
    return ProbabilityReport(joint.features()[f], std::move(probs));
}

double pearson_correlation(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ValidationError("correlation inputs differ in length");
    if (a.size() < 2) throw ValidationError("correlation needs at least two values");
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa <= 0.0 || sbb <= 0.0) throw DegenerateInputError("correlation input has zero variance");
    return sab / std::sqrt(saa * sbb);
}

CorrelationCoefficient estimate_rho(std::span<const double> a, std::span<const double> b) {
    return CorrelationCoefficient(std::clamp(std::abs(pearson_correlation(a, b)), 0.0, 1.0));
}

void write_joint_table(std::ostream& out, const JointDistribution& joint) {
    const auto& catalog = joint.features();
    for (const auto& set : catalog) out << set->feature_id() << '\t';
    out << "mass\n";
    std::ostringstream row;
    row.precision(17);
    for (std::size_t i = 0; i < joint.cells().size(); ++i) {
        row.str({});
        for (std::size_t f = 0; f < catalog.size(); ++f) row << (*catalog[f])[joint.cells()[i].events[f]].id << '\t';
        row << joint.mass()[i] << '\n';
        out << row.str();
    }
}

JointDistribution read_joint_table(std::istream& in, const Catalog& catalog) {
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("joint table is empty");
    std::vector<std::string> header;
    {
        std::istringstream hs(line);
        std::string tok;
        while (std::getline(hs, tok, '\t')) header.push_back(tok);
    }
    if (header.size() != catalog.size() + 1 || header.back() != "mass")
        throw ValidationError("joint table header does not match the catalog");
    for (std::size_t f = 0; f < catalog.size(); ++f)
        if (header[f] != catalog[f]->feature_id())
            throw ValidationError("joint table column '" + header[f] + "' does not match the catalog");

    const auto strides = strides_of(catalog);
    std::vector<double> mass(product_cardinality(catalog), 0.0);
    std::vector<bool> seen(mass.size(), false);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream rs(line);
        std::string tok;
        std::size_t cell = 0;
        for (std::size_t f = 0; f < catalog.size(); ++f) {
            if (!std::getline(rs, tok, '\t')) throw ValidationError("short row in joint table");
            const auto idx = catalog[f]->index_of(tok);
            if (!idx) throw ReferenceError("unknown event '" + tok + "' in joint table");
            cell += *idx * strides[f];
        }
        if (!std::getline(rs, tok, '\t')) throw ValidationError("row without mass in joint table");
        if (seen[cell]) throw ValidationError("duplicate cell in joint table");
        seen[cell] = true;
        mass[cell] = std::stod(tok);
    }
    return JointDistribution::from_mass(catalog, std::move(mass));
}

}  // namespace eventfuse
