#include "causalkit/causal.hpp"

#include "causalkit/simulator.hpp"
#include "support/test_oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace causalkit;
using causalkit::testing::SemBuilder;
using causalkit::testing::confounded_triangle;

namespace {

// Two hyper-parameters confounding the gap -> attack edge.
Dag double_confounder_graph() {
    Dag g({"T", "Z", "X", "Y"});
    g.add_edge("T", "X");
    g.add_edge("Z", "X");
    g.add_edge("T", "Y");
    g.add_edge("Z", "Y");
    g.add_edge("X", "Y");
    return g;
}

// Separation score W with confounders T, Z; W drives both the gap X and the
// outcome Y, so X is a descendant collider that must stay out of the set.
Dag separation_score_graph() {
    Dag g({"T", "Z", "W", "X", "Y"});
    g.add_edge("T", "W");
    g.add_edge("Z", "W");
    g.add_edge("T", "Y");
    g.add_edge("Z", "Y");
    g.add_edge("W", "Y");
    g.add_edge("W", "X");
    g.add_edge("T", "X");
    return g;
}

}  // namespace

TEST(IdentifyBackdoor, DoubleConfounderNeedsBothHyperParameters) {
    const Estimand e = identify_backdoor(double_confounder_graph(), "X", "Y");
    EXPECT_TRUE(e.identifiable);
    EXPECT_FALSE(e.zero_effect);
    EXPECT_EQ(e.adjustment_set, (std::vector<std::string>{"T", "Z"}));
}

TEST(IdentifyBackdoor, CollidersAndDescendantsAreExcluded) {
    const Estimand e = identify_backdoor(separation_score_graph(), "W", "Y");
    EXPECT_TRUE(e.identifiable);
    EXPECT_EQ(e.adjustment_set, (std::vector<std::string>{"T", "Z"}));
    for (const auto& z : e.adjustment_set) EXPECT_NE(z, "X");
}

TEST(IdentifyBackdoor, MediatorIsNotControlled) {
    Dag g({"NumParams", "AccDiff", "MIAcc"});
    g.add_edge("NumParams", "AccDiff");
    g.add_edge("AccDiff", "MIAcc");
    g.add_edge("NumParams", "MIAcc");
    const Estimand e = identify_backdoor(g, "NumParams", "MIAcc");
    EXPECT_TRUE(e.identifiable);
    EXPECT_TRUE(e.adjustment_set.empty());
    // and the mediated treatment still needs its confounder controlled
    const Estimand e2 = identify_backdoor(g, "AccDiff", "MIAcc");
    EXPECT_EQ(e2.adjustment_set, (std::vector<std::string>{"NumParams"}));
}

TEST(IdentifyBackdoor, NoDirectedPathIsAStructuralZero) {
    Dag g({"A", "B", "C"});
    g.add_edge("A", "B");
    g.add_edge("C", "B");
    const Estimand e = identify_backdoor(g, "A", "C");
    EXPECT_TRUE(e.identifiable);
    EXPECT_TRUE(e.zero_effect);
    EXPECT_TRUE(e.adjustment_set.empty());
    EXPECT_THROW(identify_backdoor(g, "A", "A"), std::invalid_argument);
    EXPECT_THROW(identify_backdoor(g, "A", "Nope"), std::invalid_argument);
}

TEST(IdentifyBackdoor, MinimizationOffFallsBackToParents) {
    const Estimand e = identify_backdoor(double_confounder_graph(), "X", "Y", false);
    EXPECT_EQ(e.adjustment_set, (std::vector<std::string>{"T", "Z"}));  // parents of X
}

// Soundness: the returned set always d-separates treatment and outcome in the
// graph with the treatment's outgoing edges removed, and contains no
// descendant of the treatment.
TEST(IdentifyBackdoor, SoundnessOnRandomDags) {
    Rng rng(55);
    for (int trial = 0; trial < 30; ++trial) {
        const Dag g = causalkit::testing::random_test_dag(rng, 6, 0.4);
        const auto& nodes = g.nodes();
        for (const auto& t : nodes) {
            for (const auto& y : nodes) {
                if (t == y || !g.has_directed_path(t, y)) continue;
                const Estimand e = identify_backdoor(g, t, y);
                ASSERT_TRUE(e.identifiable);
                const auto desc = g.descendants(t);
                for (const auto& z : e.adjustment_set) EXPECT_FALSE(desc.count(z));
                const Dag cut = g.without_outgoing(t);
                const std::set<std::string> z(e.adjustment_set.begin(), e.adjustment_set.end());
                EXPECT_TRUE(d_separated(cut, t, y, z)) << t << " -> " << y;
            }
        }
    }
}

TEST(EstimateAte, ConfoundedTriangleRecoversTheDirectEffect) {
    const SemSpec sem = confounded_triangle();
    const Dataset d = sample(sem, 10000, 7);
    const Estimand e = identify_backdoor(sem.net.dag(), "X", "Y");
    EXPECT_EQ(e.adjustment_set, std::vector<std::string>{"Z"});
    const AteEstimate ate = estimate_ate(d, e, 1.0, 0.0);
    EXPECT_NEAR(ate.value, 2.0, 0.05);
    EXPECT_LE(ate.p_value, 0.05);
    EXPECT_GT(ate.std_error, 0.0);
}

TEST(EstimateAte, EqualEndpointsGiveExactZero) {
    const SemSpec sem = confounded_triangle();
    const Dataset d = sample(sem, 500, 8);
    const Estimand e = identify_backdoor(sem.net.dag(), "X", "Y");
    const AteEstimate ate = estimate_ate(d, e, 0.7, 0.7);
    EXPECT_EQ(ate.value, 0.0);
}

TEST(EstimateAte, StructuralZeroShortCircuits) {
    Dag g({"A", "B"});
    g.add_edge("B", "A");
    const Estimand e = identify_backdoor(g, "A", "B");
    ASSERT_TRUE(e.zero_effect);
    Eigen::MatrixXd values(20, 2);
    Rng rng(9);
    for (Eigen::Index r = 0; r < 20; ++r) {
        values(r, 1) = rng.normal();
        values(r, 0) = values(r, 1) + rng.normal();
    }
    const Dataset d({"A", "B"}, values);
    const AteEstimate ate = estimate_ate(d, e, 5.0, -5.0);
    EXPECT_EQ(ate.value, 0.0);
    EXPECT_EQ(ate.p_value, 1.0);
    EXPECT_EQ(classify_query(ate), QueryClass::Refuted);
}

TEST(EstimateAte, LinearityAndAntisymmetryAreExact) {
    const SemSpec sem = confounded_triangle();
    const Dataset d = sample(sem, 2000, 10);
    const Estimand e = identify_backdoor(sem.net.dag(), "X", "Y");
    const double a = 1.7, b = -0.4;
    const AteEstimate unit = estimate_ate(d, e, 1.0, 0.0);
    const AteEstimate wide = estimate_ate(d, e, a, b);
    const AteEstimate flipped = estimate_ate(d, e, b, a);
    EXPECT_DOUBLE_EQ(wide.value, (a - b) * unit.value);
    EXPECT_DOUBLE_EQ(wide.value, -flipped.value);
    EXPECT_DOUBLE_EQ(wide.std_error, flipped.std_error);
}

TEST(EstimateAte, NotIdentifiableIsRejected) {
    Estimand e;
    e.treatment = "A";
    e.outcome = "B";
    e.identifiable = false;
    Eigen::MatrixXd values(10, 2);
    values.setZero();
    for (Eigen::Index r = 0; r < 10; ++r) values(r, 0) = r;
    const Dataset d({"A", "B"}, values);
    EXPECT_THROW(estimate_ate(d, e, 1.0, 0.0), std::invalid_argument);
}

TEST(EstimateAte, BootstrapPValueIsDeterministic) {
    const SemSpec sem = confounded_triangle();
    const Dataset d = sample(sem, 400, 11);
    const Estimand e = identify_backdoor(sem.net.dag(), "X", "Y");
    AteOptions options;
    options.p_method = PValueMethod::Bootstrap;
    options.bootstrap_replicates = 99;
    options.seed = 12;
    const AteEstimate a1 = estimate_ate(d, e, 1.0, 0.0, options);
    const AteEstimate a2 = estimate_ate(d, e, 1.0, 0.0, options);
    EXPECT_DOUBLE_EQ(a1.p_value, a2.p_value);
    EXPECT_GE(a1.p_value, 0.0);
    EXPECT_LE(a1.p_value, 1.0);
    EXPECT_LE(a1.p_value, 0.05);  // the effect is strong
}

TEST(NaiveConditionalEffect, MatchesAdjustedWhenUnconfounded) {
    const SemSpec sem = SemBuilder{}
                            .node("X", 0.0, 1.0)
                            .node("Y", 0.0, 1.0)
                            .edge("X", "Y", 2.0)
                            .build();
    const Dataset d = sample(sem, 5000, 13);
    const Estimand e = identify_backdoor(sem.net.dag(), "X", "Y");
    const AteEstimate adjusted = estimate_ate(d, e, 1.0, 0.0);
    const double naive = naive_conditional_effect(d, "X", "Y", 1.0, 0.0);
    EXPECT_LT(std::abs(naive - adjusted.value), 4.0 * adjusted.std_error + 1e-9);
}

// Omitted-variable bias: the unadjusted slope overshoots by
// beta_ZX * beta_ZY * var(Z) / var(X) = 0.5 in the triangle.
TEST(NaiveConditionalEffect, ConfoundingInflatesTheNaiveContrast) {
    const SemSpec sem = confounded_triangle();
    const Dataset d = sample(sem, 10000, 14);
    const Estimand e = identify_backdoor(sem.net.dag(), "X", "Y");
    const AteEstimate adjusted = estimate_ate(d, e, 1.0, 0.0);
    const double naive = naive_conditional_effect(d, "X", "Y", 1.0, 0.0);
    EXPECT_NEAR(naive - adjusted.value, 0.5, 0.1);
}

TEST(ClassifyQuery, TableConventions) {
    AteEstimate confirmed;
    confirmed.value = 0.30;
    confirmed.p_value = 0.01;
    EXPECT_EQ(classify_query(confirmed), QueryClass::Confirmed);

    AteEstimate inconclusive;
    inconclusive.value = 1.47;
    inconclusive.p_value = 0.20;
    EXPECT_EQ(classify_query(inconclusive), QueryClass::Inconclusive);

    AteEstimate zero;
    zero.zero_effect = true;
    zero.p_value = 1.0;
    EXPECT_EQ(classify_query(zero), QueryClass::Refuted);

    AteEstimate tiny;
    tiny.value = 5e-4;
    tiny.p_value = 0.001;
    EXPECT_EQ(classify_query(tiny), QueryClass::Refuted);

    EXPECT_THROW(classify_query(confirmed, -1.0), std::invalid_argument);
    EXPECT_STREQ(query_class_mark(QueryClass::Confirmed), "✓");
    EXPECT_STREQ(query_class_mark(QueryClass::Refuted), "×");
    EXPECT_STREQ(query_class_mark(QueryClass::Inconclusive), "○");
}

TEST(RunQuerySuite, RowsComeBackInOrderWithErrorsRecorded) {
    const SemSpec sem = confounded_triangle();
    const Dataset d = sample(sem, 1000, 15);
    const std::vector<QueryRequest> suite = {
        {"X", "Y"}, {"Z", "Y"}, {"Ghost", "Y"}};
    const auto rows = run_query_suite(d, sem.net.dag(), suite);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_TRUE(rows[0].ok);
    EXPECT_TRUE(rows[1].ok);
    EXPECT_FALSE(rows[2].ok);
    EXPECT_FALSE(rows[2].error.empty());
    EXPECT_EQ(rows[0].query.treatment, "X");

    EXPECT_TRUE(run_query_suite(d, sem.net.dag(), {}).empty());
}

TEST(RunQuerySuite, EstimatesTrackTheAnalyticalOracle) {
    const SemSpec sem = random_sem(6, 0.4, 1.5, 0.2, 16);
    const Dataset d = sample(sem, 5000, 17);
    std::vector<QueryRequest> suite;
    const auto& nodes = sem.net.dag().nodes();
    for (const auto& t : nodes)
        for (const auto& y : nodes)
            if (t != y) suite.push_back({t, y});
    const auto rows = run_query_suite(d, sem.net.dag(), suite);
    for (const auto& row : rows) {
        ASSERT_TRUE(row.ok);
        const double truth = analytical_ate(sem, row.query.treatment, row.query.outcome);
        if (std::abs(truth) < 1e-9) {
            EXPECT_TRUE(row.estimate.zero_effect || std::abs(row.estimate.slope) < 0.1);
            continue;
        }
        EXPECT_NEAR(row.estimate.slope, truth, 0.05 * std::abs(truth) + 0.02)
            << row.query.treatment << " -> " << row.query.outcome;
    }
}

TEST(QuerySuiteFiles, ParseAndTableShape) {
    std::istringstream in(
        "# Q2\n"
        "TrainVar -> ShadowAcc\n"
        "TestVar -> ShadowAcc\n");
    const auto suite = parse_query_suite(in, "inline");
    ASSERT_EQ(suite.size(), 2u);
    EXPECT_EQ(suite[0].treatment, "TrainVar");
    EXPECT_EQ(suite[1].outcome, "ShadowAcc");

    std::istringstream bad("TrainVar ShadowAcc\n");
    EXPECT_THROW(parse_query_suite(bad, "inline"), std::runtime_error);

    const SemSpec sem = confounded_triangle();
    const Dataset d = sample(sem, 500, 18);
    const auto rows = run_query_suite(d, sem.net.dag(), {{"X", "Y"}, {"Nope", "Y"}});
    std::ostringstream out;
    write_query_table(rows, out);
    const std::string text = out.str();
    EXPECT_EQ(text.find("attack,feature,ate,std_error,p_value,a,b,n,adjustment_set,classification,mark"),
              0u);
    EXPECT_NE(text.find("Y,X,"), std::string::npos);
    EXPECT_NE(text.find("error: "), std::string::npos);
    // one header plus one line per row
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
}
