#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace eventfuse {

// A labelled interval [lower, upper) of one feature's value range.
struct EventSpec {
    std::string id;
    double lower = 0.0;
    double upper = std::numeric_limits<double>::infinity();
    bool upper_open = true;

    bool contains(double value) const;
    // Midpoint; for unbounded events the finite endpoint.
    double center() const;
};

// The mutually exclusive events a sensor reports over for one feature.
class EventSet {
public:
    EventSet(std::string feature_id, std::string sensor_id, std::vector<EventSpec> events);

    const std::string& feature_id() const noexcept { return feature_id_; }
    const std::string& sensor_id() const noexcept { return sensor_id_; }
    const std::vector<EventSpec>& events() const noexcept { return events_; }
    std::size_t size() const noexcept { return events_.size(); }
    const EventSpec& operator[](std::size_t i) const { return events_.at(i); }

    std::optional<std::size_t> index_of(std::string_view event_id) const;

    // Event index for a raw feature value. A value inside exactly one
    // interval takes that event; overlaps and gaps resolve to the nearest
    // event center, ties to the lower index.
    std::size_t label_value(double value) const;

private:
    std::string feature_id_;
    std::string sensor_id_;
    std::vector<EventSpec> events_;
};

using EventSetPtr = std::shared_ptr<const EventSet>;
using Catalog = std::vector<EventSetPtr>;

EventSetPtr make_event_set(std::string feature_id, std::string sensor_id,
                           std::vector<EventSpec> events);

inline constexpr double kProbabilityTolerance = 1e-9;

// P_k^l: one probability per event of an event set.
class ProbabilityReport {
public:
    ProbabilityReport(EventSetPtr events, std::vector<double> probs);

    const EventSetPtr& event_set() const noexcept { return events_; }
    const EventSet& events() const noexcept { return *events_; }
    const std::string& feature_id() const noexcept { return events_->feature_id(); }
    const std::vector<double>& probs() const noexcept { return probs_; }
    std::size_t size() const noexcept { return probs_.size(); }
    double operator[](std::size_t i) const { return probs_.at(i); }

private:
    EventSetPtr events_;
    std::vector<double> probs_;
};

// Boolean expression over (feature, event) leaves.
class Expr {
public:
    enum class Op { Leaf, And, Or, Not };

    static Expr leaf(std::string feature_id, std::string event_id);
    static Expr conj(Expr lhs, Expr rhs);
    static Expr disj(Expr lhs, Expr rhs);
    static Expr negate(Expr operand);

    Op op() const noexcept { return op_; }
    const std::vector<Expr>& children() const noexcept { return children_; }
    const std::string& feature_id() const noexcept { return feature_; }
    const std::string& event_id() const noexcept { return event_; }

    bool operator==(const Expr&) const = default;

private:
    Op op_ = Op::Leaf;
    std::string feature_;
    std::string event_;
    std::vector<Expr> children_;
};

struct ObjectDefinition {
    std::string name;
    Expr expr;
};

// Grammar: identifiers, '&', '|', '!', parentheses. '!' binds tightest,
// then '&', then '|'; binary operators are left-associative. An identifier
// is an event id that is unique across the catalog, or "feature.event".
Expr parse_expression(std::string_view text, const Catalog& catalog);
ObjectDefinition parse_object_expression(std::string_view text, const Catalog& catalog,
                                         std::string name = {});

// Minimal-parenthesis rendering; parse_expression(to_string(e)) == e.
std::string to_string(const Expr& expr, const Catalog& catalog);

// One event per feature, indices in catalog order.
struct ProductCell {
    std::vector<std::uint32_t> events;

    bool operator==(const ProductCell&) const = default;
};

inline constexpr std::size_t kDefaultCellCap = 1'000'000;

std::size_t product_cardinality(const Catalog& catalog);

// All cells, first feature most significant, events in declaration order.
std::vector<ProductCell> enumerate_product_space(const Catalog& catalog,
                                                 std::size_t max_cells = kDefaultCellCap);

// Truth value of expr on one cell of the given catalog.
bool satisfies(const Expr& expr, const Catalog& catalog, const ProductCell& cell);

class JointDistribution;

// Mass of the cells that satisfy the expression.
double evaluate_object_probability(const ObjectDefinition& object, const JointDistribution& joint);
double evaluate_expression(const Expr& expr, const JointDistribution& joint);

// Per-cell satisfaction mask over joint.cells().
std::vector<bool> satisfying_cells(const Expr& expr, const JointDistribution& joint);

struct FusedReport {
    std::vector<double> object_probs;
    // Mass of !(o_1 | ... | o_I).
    double complement = 0.0;
    // argmax over object_probs followed by complement; I means "neither".
    std::size_t label = 0;

    // object_probs with complement appended.
    std::vector<double> scores() const;
};

FusedReport fused_report(std::span<const ObjectDefinition> objects, const JointDistribution& joint);

}  // namespace eventfuse
