#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "eventfuse/errors.hpp"
#include "eventfuse/hidden_space.hpp"
#include "test_support.hpp"

using namespace eventfuse;
using eventfuse::testing::toy_modalities;

namespace {

HsProblem toy_problem(std::uint64_t seed, int n = 60) {
    std::mt19937_64 rng(seed);
    auto t = toy_modalities(rng, n);
    HsProblem p;
    p.sensors = {{"s1", t.x1}, {"s2", t.x2}};
    p.features = {{"f", "s1", 2, t.y}};
    return p;
}

HiddenSpaceObjective toy_objective(std::uint64_t seed, double c2, double c3) {
    auto p = toy_problem(seed, 30);
    auto u1 = RandomProjection::sample(2, 4, seed + 1);
    auto u2 = RandomProjection::sample(2, 3, seed + 2);
    return HiddenSpaceObjective({u1.matrix * p.sensors[0].samples.transpose(), u2.matrix * p.sensors[1].samples.transpose()},
                                {{p.features[0].labels, 2, {0, 1}}}, 1.0, c2, c3);
}

// Flattened view of the variables for finite differences.
std::vector<double*> slots(HsVariables& v) {
    std::vector<double*> out;
    for (auto& m : v.w)
        for (Eigen::Index i = 0; i < m.size(); ++i) out.push_back(m.data() + i);
    for (auto& m : v.z)
        for (Eigen::Index i = 0; i < m.size(); ++i) out.push_back(m.data() + i);
    return out;
}

}  // namespace

TEST(Commutator, Examples) {
    Eigen::Matrix2d a, b, expected;
    a << 0, 1, 0, 0;
    b << 0, 0, 1, 0;
    expected << 1, 0, 0, -1;
    EXPECT_TRUE(commutator(a, b).isApprox(expected));
    EXPECT_EQ(commutator(a, a).norm(), 0.0);
    Eigen::MatrixXd r = Eigen::MatrixXd::Random(3, 3);
    EXPECT_EQ(commutator(Eigen::MatrixXd::Identity(3, 3), r).norm(), 0.0);
    EXPECT_THROW(commutator(Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(3, 3)), ShapeError);
    EXPECT_THROW(commutator(Eigen::MatrixXd::Zero(2, 3), Eigen::MatrixXd::Zero(2, 3)), ShapeError);
}

TEST(Commutator, Antisymmetric) {
    std::srand(3);
    for (int i = 0; i < 50; ++i) {
        Eigen::MatrixXd a = Eigen::MatrixXd::Random(4, 4), b = Eigen::MatrixXd::Random(4, 4);
        EXPECT_TRUE((commutator(a, b) + commutator(b, a)).isZero(0.0));
    }
}

TEST(HingeSlack, Examples) {
    WeightMatrix w{Eigen::MatrixXd::Zero(3, 2)};
    EXPECT_EQ(hinge_slack(w, Eigen::Vector2d(1, 2), 0), 1.0);
    w.weights << 0, 0, 0.5, 0, 0.25, 0;
    EXPECT_DOUBLE_EQ(hinge_slack(w, Eigen::Vector2d(1, 7), 0), 1.5);
    w.weights << 2, 0, 0.5, 0, 0.25, 0;
    EXPECT_EQ(hinge_slack(w, Eigen::Vector2d(1, 0), 0), 0.0);
    EXPECT_THROW(hinge_slack(w, Eigen::Vector2d(1, 0), 3), IndexError);
    EXPECT_THROW(hinge_slack(w, Eigen::Vector2d(1, 0), -1), IndexError);
}

TEST(Projection, ScaledGaussianAndSeeded) {
    auto a = RandomProjection::sample(20, 400, 5);
    auto b = RandomProjection::sample(20, 400, 5);
    EXPECT_TRUE((a.matrix.array() == b.matrix.array()).all());
    // Entry variance 1 / d_l.
    EXPECT_NEAR(a.matrix.squaredNorm() / a.matrix.size(), 1.0 / 400.0, 0.1 / 400.0);
}

TEST(Config, DimensionBelowSensors) {
    HsConfig cfg;
    cfg.d = 3;
    EXPECT_THROW(cfg.validate(3), ValidationError);
    EXPECT_NO_THROW(cfg.validate(4));
    cfg.c1 = 0.0;
    EXPECT_THROW(cfg.validate(4), ValidationError);
}

TEST(Objective, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> g(0.0, 1.0);
    auto obj = toy_objective(4, 0.7, 0.3);
    int checked = 0;
    while (checked < 20) {
        HsVariables v = obj.initial();
        for (auto* p : slots(v)) *p += 0.5 * g(rng);
        if (obj.kink_distance(v) < 1e-3) continue;
        const auto grad = obj.gradient(v);
        HsVariables gcopy = grad;
        auto analytic = slots(gcopy);
        auto params = slots(v);
        double num = 0.0, den = 0.0;
        const double h = 1e-6;
        for (std::size_t i = 0; i < params.size(); ++i) {
            const double keep = *params[i];
            *params[i] = keep + h;
            const double up = obj.value(v);
            *params[i] = keep - h;
            const double down = obj.value(v);
            *params[i] = keep;
            const double fd = (up - down) / (2 * h);
            num += (fd - *analytic[i]) * (fd - *analytic[i]);
            den += fd * fd;
        }
        EXPECT_LT(std::sqrt(num / den), 1e-4);
        ++checked;
    }
}

TEST(Objective, SingleSlotHasNoPairTerms) {
    auto p = toy_problem(2, 20);
    auto u = RandomProjection::sample(2, 4, 1);
    HiddenSpaceObjective obj({u.matrix * p.sensors[0].samples.transpose()}, {{p.features[0].labels, 2, {0}}}, 1, 5, 5);
    HsVariables v = obj.initial();
    v.z[0] << 2, 1, 0, 1;
    v.w[0] << 1, 0, 0, 1;
    auto t = obj.terms(v);
    EXPECT_EQ(t.commutation, 0.0);
    EXPECT_EQ(t.alignment, 0.0);
    // Matches the SVM objective on the transformed samples.
    LabeledDataset d;
    d.samples = (v.z[0] * u.matrix * p.sensors[0].samples.transpose()).transpose();
    d.labels = p.features[0].labels;
    d.num_classes = 2;
    EXPECT_NEAR(t.total(), svm_objective(WeightMatrix{v.w[0]}, d, 1.0), 1e-9);
}

TEST(Training, ObjectiveNonIncreasingOnToy) {
    auto p = toy_problem(8);
    HsConfig cfg;
    cfg.learning_rate = 1e-3;
    cfg.epochs = 300;
    cfg.c1 = 0.1;
    auto m = train_independent_hidden_spaces(p, cfg);
    const auto& trace = m.traces.at("f").terms;
    for (std::size_t e = 1; e < trace.size(); ++e)
        EXPECT_LE(trace[e].total(), trace[e - 1].total() + 1e-9) << "epoch " << e;
}

TEST(Training, AlignmentShrinksWithLargeC3) {
    auto p = toy_problem(9);
    HsConfig cfg;
    cfg.c1 = 0.1;
    cfg.c2 = 0.1;
    cfg.c3 = 5.0;
    cfg.learning_rate = 1e-4;
    cfg.epochs = 200;
    auto m = train_independent_hidden_spaces(p, cfg);
    const auto& gap = m.traces.at("f").mean_gap;
    for (std::size_t e = 1; e < gap.size(); ++e) EXPECT_LE(gap[e], gap[e - 1] + 1e-12) << "epoch " << e;
    EXPECT_LT(gap.back(), 0.5 * gap.front());
}

TEST(Training, CommutationPenaltyShrinksCommutator) {
    auto p = toy_problem(10);
    HsConfig cfg;
    cfg.c1 = 1.0;
    cfg.c3 = 1.0;
    cfg.learning_rate = 2e-3;
    cfg.epochs = 400;
    cfg.c2 = 0.0;
    auto free = train_independent_hidden_spaces(p, cfg);
    cfg.c2 = 10.0;
    auto penalized = train_independent_hidden_spaces(p, cfg);
    auto comm = [](const HiddenSpaceModel& m) {
        return commutator(m.operators.find("f", "s1").z, m.operators.find("f", "s2").z).norm();
    };
    EXPECT_LE(comm(penalized), 0.5 * comm(free));
}

TEST(Training, Deterministic) {
    auto p = toy_problem(11);
    HsConfig cfg;
    cfg.epochs = 50;
    auto a = train_independent_hidden_spaces(p, cfg);
    auto b = train_independent_hidden_spaces(p, cfg);
    for (std::size_t i = 0; i < a.operators.entries().size(); ++i)
        EXPECT_TRUE((a.operators.entries()[i].z.array() == b.operators.entries()[i].z.array()).all());
}

TEST(Training, MisalignedSamplesRejected) {
    auto p = toy_problem(12);
    p.sensors[1].samples.conservativeResize(10, Eigen::NoChange);
    EXPECT_THROW(train_independent_hidden_spaces(p, HsConfig{}), ValidationError);
    EXPECT_THROW(train_global_hidden_space(p, HsConfig{}), ValidationError);
}

TEST(Training, GlobalIdenticalSensorsStaySymmetric) {
    auto p = toy_problem(13);
    p.sensors[1].samples = p.sensors[0].samples;
    p.features.push_back({"g", "s2", 2, p.features[0].labels});
    // Identical projections need identical seeds: build the objective directly.
    auto u = RandomProjection::sample(2, 4, 3);
    const Eigen::MatrixXd proj = u.matrix * p.sensors[0].samples.transpose();
    HiddenSpaceObjective obj({proj, proj}, {{p.features[0].labels, 2, {0}}, {p.features[0].labels, 2, {1}}}, 1, 1, 1);
    HsConfig cfg;
    cfg.epochs = 100;
    auto v = minimize_hidden_space(obj, cfg);
    EXPECT_TRUE((v.z[0].array() == v.z[1].array()).all());
    EXPECT_TRUE((v.w[0].array() == v.w[1].array()).all());
}

TEST(Training, GlobalModelShape) {
    auto p = toy_problem(14);
    p.features.push_back({"g", "s2", 2, p.features[0].labels});
    HsConfig cfg;
    cfg.epochs = 100;
    auto m = train_global_hidden_space(p, cfg);
    EXPECT_EQ(m.operators.kind(), HiddenSpaceKind::Global);
    EXPECT_EQ(m.operators.entries().size(), 2u);
    EXPECT_EQ(m.classifiers.at("g").weights.rows(), 2);
    EXPECT_EQ(m.classifiers.at("g").weights.cols(), 2);
    EXPECT_TRUE(m.operators.contains("anything", "s2"));
}

TEST(Recovery, AveragesAvailableTransforms) {
    auto p = toy_problem(15);
    HsConfig cfg;
    cfg.epochs = 100;
    auto m = train_independent_hidden_spaces(p, cfg);
    const auto& ops = m.operators;
    std::map<std::string, Eigen::MatrixXd> one{{"s2", p.sensors[1].samples}};
    auto h1 = recover_hidden_space(ops, "s1", "f", one);
    EXPECT_TRUE(h1.isApprox(ops.transform("f", "s2", p.sensors[1].samples)));
    std::map<std::string, Eigen::MatrixXd> both{{"s1", p.sensors[0].samples}, {"s2", p.sensors[1].samples}};
    auto h2 = recover_hidden_space(ops, "s1", "f", both);
    Eigen::MatrixXd mean =
        0.5 * (ops.transform("f", "s1", p.sensors[0].samples) + ops.transform("f", "s2", p.sensors[1].samples));
    EXPECT_TRUE(h2.isApprox(mean));
    EXPECT_THROW(recover_hidden_space(ops, "s1", "f", {}), NoSourceError);
    EXPECT_THROW(recover_hidden_space(ops, "s2", "f", one), ReferenceError);
}

TEST(Recovery, ExactWhenTransformsAgree) {
    auto u = RandomProjection::sample(2, 3, 1);
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(5, 3);
    Eigen::MatrixXd z = Eigen::MatrixXd::Random(2, 2);
    OperatorSet ops(HiddenSpaceKind::Independent, 2, 0,
                    {{"f", "m", "a", z, u}, {"f", "m", "b", z, u}, {"f", "m", "c", z, u}});
    std::map<std::string, Eigen::MatrixXd> avail{{"a", x}, {"b", x}, {"c", x}};
    auto h = recover_hidden_space(ops, "m", "f", avail);
    EXPECT_TRUE(h.isApprox(z * u.matrix * x.transpose(), 1e-12));
}

TEST(Recovery, RecoveredReportsBeatChance) {
    auto p = toy_problem(16, 200);
    HsConfig cfg;
    cfg.epochs = 400;
    cfg.learning_rate = 1e-4;
    auto m = train_independent_hidden_spaces(p, cfg);
    std::map<std::string, Eigen::MatrixXd> avail{{"s2", p.sensors[1].samples}};
    auto h = recover_hidden_space(m.operators, "s1", "f", avail);
    auto probs = hidden_space_probabilities(m.classifiers.at("f"), h);
    int correct = 0;
    for (std::size_t n = 0; n < probs.size(); ++n)
        correct += ((probs[n][1] > probs[n][0]) == (p.features[0].labels[n] == 1));
    EXPECT_GT(double(correct) / probs.size(), 0.6);
}

TEST(Diagnostics, EigenvectorCondition) {
    EXPECT_NEAR(eigenvector_condition_number(Eigen::MatrixXd::Identity(3, 3)), 1.0, 1e-12);
    Eigen::Matrix2d jordan;
    jordan << 1, 1, 0, 1;
    EXPECT_GT(eigenvector_condition_number(jordan), 1e6);
}

TEST(Persistence, RoundTrip) {
    auto p = toy_problem(18);
    HsConfig cfg;
    cfg.epochs = 20;
    for (auto kind : {HiddenSpaceKind::Independent, HiddenSpaceKind::Global}) {
        auto m = kind == HiddenSpaceKind::Independent ? train_independent_hidden_spaces(p, cfg)
                                                      : train_global_hidden_space(p, cfg);
        std::stringstream io;
        write_operator_set(io, m.operators);
        auto back = read_operator_set(io);
        EXPECT_EQ(back.kind(), kind);
        ASSERT_EQ(back.entries().size(), m.operators.entries().size());
        for (std::size_t i = 0; i < back.entries().size(); ++i) {
            const auto& a = back.entries()[i];
            const auto& b = m.operators.entries()[i];
            EXPECT_EQ(a.feature, b.feature);
            EXPECT_EQ(a.source, b.source);
            EXPECT_EQ(a.projection.seed, b.projection.seed);
            EXPECT_TRUE((a.z.array() == b.z.array()).all());
            EXPECT_TRUE((a.projection.matrix.array() == b.projection.matrix.array()).all());
        }
    }
}
