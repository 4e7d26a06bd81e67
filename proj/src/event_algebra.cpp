#include "eventfuse/event_algebra.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "eventfuse/errors.hpp"
#include "eventfuse/joint_distribution.hpp"

namespace eventfuse {

bool EventSpec::contains(double value) const {
    if (value < lower) return false;
    return upper_open ? value < upper : value <= upper;
}

double EventSpec::center() const {
    if (std::isinf(upper)) return lower;
    if (std::isinf(lower)) return upper;
    return 0.5 * (lower + upper);
}

EventSet::EventSet(std::string feature_id, std::string sensor_id, std::vector<EventSpec> events)
    : feature_id_(std::move(feature_id)), sensor_id_(std::move(sensor_id)), events_(std::move(events)) {
    if (feature_id_.empty()) throw ValidationError("event set needs a feature id");
    if (events_.size() < 2)
        throw ValidationError("event set '" + feature_id_ + "' needs at least two events");
    std::unordered_set<std::string> seen;
    for (const auto& e : events_) {
        if (e.id.empty()) throw ValidationError("event in '" + feature_id_ + "' has an empty id");
        if (!(e.upper > e.lower))
            throw ValidationError("event '" + e.id + "' must have upper > lower");
        if (!seen.insert(e.id).second)
            throw ValidationError("duplicate event id '" + e.id + "' in '" + feature_id_ + "'");
    }
}

std::optional<std::size_t> EventSet::index_of(std::string_view event_id) const {
    for (std::size_t i = 0; i < events_.size(); ++i)
        if (events_[i].id == event_id) return i;
    return std::nullopt;
}

std::size_t EventSet::label_value(double value) const {
    std::vector<std::size_t> containing;
    for (std::size_t i = 0; i < events_.size(); ++i)
        if (events_[i].contains(value)) containing.push_back(i);
    if (containing.size() == 1) return containing.front();
    if (containing.empty()) {
        containing.resize(events_.size());
        std::iota(containing.begin(), containing.end(), std::size_t{0});
    }
    std::size_t best = containing.front();
    double best_dist = std::abs(value - events_[best].center());
    for (std::size_t i : containing) {
        const double dist = std::abs(value - events_[i].center());
        if (dist < best_dist) {
            best = i;
            best_dist = dist;
        }
    }
    return best;
}

EventSetPtr make_event_set(std::string feature_id, std::string sensor_id, std::vector<EventSpec> events) {
    return std::make_shared<const EventSet>(std::move(feature_id), std::move(sensor_id), std::move(events));
}

ProbabilityReport::ProbabilityReport(EventSetPtr events, std::vector<double> probs)
    : events_(std::move(events)), probs_(std::move(probs)) {
    if (!events_) throw ValidationError("probability report without an event set");
    if (probs_.size() != events_->size())
        throw ValidationError("report for '" + events_->feature_id() + "' has " +
                              std::to_string(probs_.size()) + " entries, expected " +
                              std::to_string(events_->size()));
    double total = 0.0;
    for (double p : probs_) {
        if (!(p >= 0.0 && p <= 1.0 + kProbabilityTolerance))
            throw ValidationError("report for '" + events_->feature_id() + "' has entry outside [0,1]");
        total += p;
    }
    if (std::abs(total - 1.0) > kProbabilityTolerance)
        throw ValidationError("report for '" + events_->feature_id() + "' sums to " + std::to_string(total));
}

Expr Expr::leaf(std::string feature_id, std::string event_id) {
    Expr e;
    e.op_ = Op::Leaf;
    e.feature_ = std::move(feature_id);
    e.event_ = std::move(event_id);
    return e;
}

Expr Expr::conj(Expr lhs, Expr rhs) {
    Expr e;
    e.op_ = Op::And;
    e.children_ = {std::move(lhs), std::move(rhs)};
    return e;
}

Expr Expr::disj(Expr lhs, Expr rhs) {
    Expr e;
    e.op_ = Op::Or;
    e.children_ = {std::move(lhs), std::move(rhs)};
    return e;
}

Expr Expr::negate(Expr operand) {
    Expr e;
    e.op_ = Op::Not;
    e.children_ = {std::move(operand)};
    return e;
}

namespace {

bool is_ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-';
}

class Parser {
public:
    Parser(std::string_view text, const Catalog& catalog) : text_(text), catalog_(catalog) {}

    Expr parse() {
        skip_space();
        if (pos_ >= text_.size()) throw ParseError("empty expression", pos_ + 1);
        Expr e = parse_or();
        skip_space();
        if (pos_ < text_.size())
            throw ParseError(std::string("unexpected '") + text_[pos_] + "'", pos_ + 1);
        return e;
    }

private:
    void skip_space() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip_space();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    Expr parse_or() {
        Expr lhs = parse_and();
        while (accept('|')) lhs = Expr::disj(std::move(lhs), parse_and());
        return lhs;
    }

    Expr parse_and() {
        Expr lhs = parse_unary();
        while (accept('&')) lhs = Expr::conj(std::move(lhs), parse_unary());
        return lhs;
    }

    Expr parse_unary() {
        if (accept('!')) return Expr::negate(parse_unary());
        return parse_primary();
    }

    Expr parse_primary() {
        skip_space();
        if (pos_ >= text_.size()) throw ParseError("unexpected end of expression", pos_ + 1);
        if (accept('(')) {
            Expr inner = parse_or();
            if (!accept(')')) {
                const std::size_t where = pos_ + 1;
                throw ParseError("expected ')'", where);
            }
            return inner;
        }
        const std::size_t start = pos_;
        while (pos_ < text_.size() && is_ident_char(text_[pos_])) ++pos_;
        if (pos_ == start) throw ParseError(std::string("unexpected '") + text_[pos_] + "'", pos_ + 1);
        return resolve(text_.substr(start, pos_ - start));
    }

    Expr resolve(std::string_view token) const {
        const EventSet* owner = nullptr;
        std::size_t matches = 0;
        for (const auto& set : catalog_) {
            if (set->index_of(token)) {
                owner = set.get();
                ++matches;
            }
        }
        if (matches == 1) return Expr::leaf(owner->feature_id(), std::string(token));
        if (matches > 1)
            throw ReferenceError("ambiguous event '" + std::string(token) +
                                 "'; qualify it as feature.event");
        const auto dot = token.find('.');
        if (dot != std::string_view::npos) {
            const auto feature = token.substr(0, dot);
            const auto event = token.substr(dot + 1);
            for (const auto& set : catalog_)
                if (set->feature_id() == feature && set->index_of(event))
                    return Expr::leaf(std::string(feature), std::string(event));
        }
        throw ReferenceError("unknown event '" + std::string(token) + "'");
    }

    std::string_view text_;
    const Catalog& catalog_;
    std::size_t pos_ = 0;
};

std::string leaf_name(const Expr& leaf, const Catalog& catalog) {
    std::size_t owners = 0;
    for (const auto& set : catalog)
        if (set->index_of(leaf.event_id())) ++owners;
    if (owners == 1) return leaf.event_id();
    return leaf.feature_id() + "." + leaf.event_id();
}

std::string render(const Expr& e, const Catalog& catalog) {
    using Op = Expr::Op;
    auto wrap = [&](const Expr& child, bool parens) {
        std::string s = render(child, catalog);
        return parens ? "(" + s + ")" : s;
    };
    switch (e.op()) {
        case Op::Leaf:
            return leaf_name(e, catalog);
        case Op::Not: {
            const auto& c = e.children()[0];
            return "!" + wrap(c, c.op() == Op::And || c.op() == Op::Or);
        }
        case Op::And: {
            const auto& l = e.children()[0];
            const auto& r = e.children()[1];
            return wrap(l, l.op() == Op::Or) + " & " + wrap(r, r.op() == Op::Or || r.op() == Op::And);
        }
        case Op::Or: {
            const auto& r = e.children()[1];
            return render(e.children()[0], catalog) + " | " + wrap(r, r.op() == Op::Or);
        }
    }
    return {};
}

// Expression with leaves resolved to (feature index, event index) of a catalog.
struct Compiled {
    Expr::Op op = Expr::Op::Leaf;
    std::uint32_t feature = 0;
    std::uint32_t event = 0;
    std::vector<Compiled> children;

    bool eval(const ProductCell& cell) const {
        switch (op) {
            case Expr::Op::Leaf: return cell.events[feature] == event;
            case Expr::Op::Not: return !children[0].eval(cell);
            case Expr::Op::And: return children[0].eval(cell) && children[1].eval(cell);
            case Expr::Op::Or: return children[0].eval(cell) || children[1].eval(cell);
        }
        return false;
    }
};

Compiled compile(const Expr& e, const Catalog& catalog) {
    Compiled c;
    c.op = e.op();
    if (e.op() == Expr::Op::Leaf) {
        auto it = std::find_if(catalog.begin(), catalog.end(),
                               [&](const EventSetPtr& s) { return s->feature_id() == e.feature_id(); });
        if (it == catalog.end())
            throw ReferenceError("feature '" + e.feature_id() + "' is not part of the joint distribution");
        const auto idx = (*it)->index_of(e.event_id());
        if (!idx)
            throw ReferenceError("event '" + e.event_id() + "' is not declared for feature '" +
                                 e.feature_id() + "'");
        c.feature = static_cast<std::uint32_t>(it - catalog.begin());
        c.event = static_cast<std::uint32_t>(*idx);
        return c;
    }
    if (e.children().empty()) throw ValidationError("empty expression node");
    for (const auto& child : e.children()) c.children.push_back(compile(child, catalog));
    return c;
}

}  // namespace

Expr parse_expression(std::string_view text, const Catalog& catalog) {
    return Parser(text, catalog).parse();
}

ObjectDefinition parse_object_expression(std::string_view text, const Catalog& catalog, std::string name) {
    return ObjectDefinition{std::move(name), parse_expression(text, catalog)};
}

std::string to_string(const Expr& expr, const Catalog& catalog) { return render(expr, catalog); }

std::size_t product_cardinality(const Catalog& catalog) {
    std::size_t total = 1;
    for (const auto& set : catalog) {
        const std::size_t n = set->size();
        if (total > std::numeric_limits<std::size_t>::max() / n) return std::numeric_limits<std::size_t>::max();
        total *= n;
    }
    return total;
}

std::vector<ProductCell> enumerate_product_space(const Catalog& catalog, std::size_t max_cells) {
    if (catalog.empty()) throw ValidationError("product space needs at least one event set");
    const std::size_t total = product_cardinality(catalog);
    if (total > max_cells)
        throw CapacityError("product space has " + std::to_string(total) + " cells, cap is " +
                            std::to_string(max_cells));
    std::vector<ProductCell> cells;
    cells.reserve(total);
    ProductCell cell{std::vector<std::uint32_t>(catalog.size(), 0)};
    for (std::size_t n = 0; n < total; ++n) {
        cells.push_back(cell);
        // Odometer increment, last feature fastest.
        for (std::size_t f = catalog.size(); f-- > 0;) {
            if (++cell.events[f] < catalog[f]->size()) break;
            cell.events[f] = 0;
        }
    }
    return cells;
}

bool satisfies(const Expr& expr, const Catalog& catalog, const ProductCell& cell) {
    return compile(expr, catalog).eval(cell);
}

std::vector<bool> satisfying_cells(const Expr& expr, const JointDistribution& joint) {
    const Compiled c = compile(expr, joint.features());
    std::vector<bool> mask;
    mask.reserve(joint.cells().size());
    for (const auto& cell : joint.cells()) mask.push_back(c.eval(cell));
    return mask;
}

double evaluate_expression(const Expr& expr, const JointDistribution& joint) {
    const Compiled c = compile(expr, joint.features());
    double total = 0.0;
    const auto& cells = joint.cells();
    const auto& mass = joint.mass();
    for (std::size_t i = 0; i < cells.size(); ++i)
        if (c.eval(cells[i])) total += mass[i];
    return std::clamp(total, 0.0, 1.0);
}

double evaluate_object_probability(const ObjectDefinition& object, const JointDistribution& joint) {
    return evaluate_expression(object.expr, joint);
}

std::vector<double> FusedReport::scores() const {
    std::vector<double> s = object_probs;
    s.push_back(complement);
    return s;
}

FusedReport fused_report(std::span<const ObjectDefinition> objects, const JointDistribution& joint) {
    if (objects.empty()) throw ValidationError("fused report needs at least one object");
    FusedReport report;
    std::optional<Expr> any;
    for (const auto& o : objects) {
        report.object_probs.push_back(evaluate_object_probability(o, joint));
        any = any ? Expr::disj(std::move(*any), o.expr) : o.expr;
    }
    report.complement = evaluate_expression(Expr::negate(std::move(*any)), joint);
    const auto scores = report.scores();
    report.label = static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
    return report;
}

}  // namespace eventfuse
