#include "causalkit/graph.hpp"

#include "causalkit/simulator.hpp"
#include "support/test_oracles.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace causalkit;
namespace testing_support = causalkit::testing;

TEST(IsAcyclic, Examples) {
    EXPECT_TRUE(is_acyclic(3, {{0, 1}, {1, 2}}));
    EXPECT_FALSE(is_acyclic(2, {{0, 1}, {1, 0}}));
    EXPECT_TRUE(is_acyclic(4, {}));
}

TEST(Dag, InvariantsEnforcedOnConstruction) {
    Dag g({"A", "B", "C"});
    g.add_edge("A", "B");
    g.add_edge("B", "C");
    EXPECT_THROW(g.add_edge("A", "A"), std::invalid_argument);   // self loop
    EXPECT_THROW(g.add_edge("A", "B"), std::invalid_argument);   // duplicate
    EXPECT_THROW(g.add_edge("C", "A"), std::invalid_argument);   // cycle
    EXPECT_THROW(g.add_edge("A", "D"), std::invalid_argument);   // unknown node
    EXPECT_THROW(Dag({"A", "A"}), std::invalid_argument);
    EXPECT_EQ(g.n_edges(), 2u);
    EXPECT_EQ(g.parents("C"), std::vector<std::string>{"B"});
    EXPECT_EQ(g.descendants("A"), (std::set<std::string>{"B", "C"}));
}

TEST(Dag, TopologicalOrderRespectsEdges) {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const Dag g = testing_support::random_test_dag(rng, 6, 0.4);
        const auto order = g.topological_order();
        ASSERT_EQ(order.size(), g.n_nodes());
        std::map<std::string, std::size_t> pos;
        for (std::size_t i = 0; i < order.size(); ++i) pos[order[i]] = i;
        for (const Edge& e : g.edges()) EXPECT_LT(pos[e.from], pos[e.to]);
    }
}

// The reduced two-path example: AccDiff <- NumParams -> MIAcc together with
// the direct AccDiff -> MIAcc edge.
TEST(UndirectedPaths, ConfoundedPairHasTwoPaths) {
    Dag g({"AccDiff", "NumParams", "MIAcc"});
    g.add_edge("NumParams", "AccDiff");
    g.add_edge("NumParams", "MIAcc");
    g.add_edge("AccDiff", "MIAcc");
    auto paths = undirected_paths(g, "AccDiff", "MIAcc");
    ASSERT_EQ(paths.size(), 2u);
    std::sort(paths.begin(), paths.end(),
              [](const Path& a, const Path& b) { return a.nodes.size() < b.nodes.size(); });
    // direct edge
    EXPECT_EQ(paths[0].nodes, (std::vector<std::string>{"AccDiff", "MIAcc"}));
    EXPECT_EQ(paths[0].forward, std::vector<bool>{true});
    // backdoor through the common cause
    EXPECT_EQ(paths[1].nodes, (std::vector<std::string>{"AccDiff", "NumParams", "MIAcc"}));
    EXPECT_EQ(paths[1].forward, (std::vector<bool>{false, true}));
}

TEST(UndirectedPaths, DisconnectedAndSingleEdge) {
    Dag g({"A", "B", "C"});
    g.add_edge("A", "B");
    EXPECT_TRUE(undirected_paths(g, "A", "C").empty());
    const auto paths = undirected_paths(g, "A", "B");
    ASSERT_EQ(paths.size(), 1u);
    EXPECT_EQ(paths[0].nodes.size(), 2u);
    EXPECT_THROW(undirected_paths(g, "A", "Z"), std::invalid_argument);
}

TEST(DSeparated, ChainAndCollider) {
    Dag chain({"NumParams", "AccDiff", "MIAcc"});
    chain.add_edge("NumParams", "AccDiff");
    chain.add_edge("AccDiff", "MIAcc");
    EXPECT_TRUE(d_separated(chain, "NumParams", "MIAcc", {"AccDiff"}));
    EXPECT_FALSE(d_separated(chain, "NumParams", "MIAcc", {}));

    Dag collider({"A", "B", "C"});
    collider.add_edge("A", "C");
    collider.add_edge("B", "C");
    EXPECT_TRUE(d_separated(collider, "A", "B", {}));
    EXPECT_FALSE(d_separated(collider, "A", "B", {"C"}));
}

TEST(DSeparated, ConditioningOnColliderDescendantOpensThePath) {
    Dag g({"A", "B", "C", "D"});
    g.add_edge("A", "C");
    g.add_edge("B", "C");
    g.add_edge("C", "D");
    EXPECT_TRUE(d_separated(g, "A", "B", {}));
    EXPECT_FALSE(d_separated(g, "A", "B", {"D"}));
}

TEST(DSeparated, RejectsBadArguments) {
    Dag g({"A", "B"});
    EXPECT_THROW(d_separated(g, "A", "A", {}), std::invalid_argument);
    EXPECT_THROW(d_separated(g, "A", "B", {"A"}), std::invalid_argument);
    EXPECT_THROW(d_separated(g, "A", "Z", {}), std::invalid_argument);
}

TEST(DSeparated, AgreesWithPathEnumerationOracle) {
    Rng rng(123);
    for (int trial = 0; trial < 25; ++trial) {
        const int n = 3 + static_cast<int>(rng.bounded(4));
        const Dag g = testing_support::random_test_dag(rng, n, 0.4);
        const auto& nodes = g.nodes();
        for (std::size_t xi = 0; xi < nodes.size(); ++xi) {
            for (std::size_t yi = xi + 1; yi < nodes.size(); ++yi) {
                std::vector<std::string> rest;
                for (std::size_t k = 0; k < nodes.size(); ++k)
                    if (k != xi && k != yi) rest.push_back(nodes[k]);
                for (std::size_t mask = 0; mask < (1u << rest.size()); ++mask) {
                    std::set<std::string> z;
                    for (std::size_t b = 0; b < rest.size(); ++b)
                        if (mask & (1u << b)) z.insert(rest[b]);
                    const bool fast = d_separated(g, nodes[xi], nodes[yi], z);
                    const bool slow = testing_support::d_separated_oracle(g, nodes[xi], nodes[yi], z);
                    ASSERT_EQ(fast, slow)
                        << "trial " << trial << " x=" << nodes[xi] << " y=" << nodes[yi];
                }
            }
        }
    }
}

// d-separation implies vanishing sample partial correlation on SEM data.
TEST(DSeparated, ImpliesZeroPartialCorrelationOnSemData) {
    const Eigen::Index n = 10000;
    int checked = 0;
    for (int trial = 0; trial < 3; ++trial) {
        const SemSpec sem = random_sem(5, 0.4, 1.5, 0.5, 500 + static_cast<std::uint64_t>(trial));
        const Dag& g = sem.net.dag();
        const Dataset d = sample(sem, n, 900 + static_cast<std::uint64_t>(trial));
        const auto& nodes = g.nodes();
        for (std::size_t xi = 0; xi < nodes.size(); ++xi) {
            for (std::size_t yi = xi + 1; yi < nodes.size(); ++yi) {
                std::vector<std::string> rest;
                for (std::size_t k = 0; k < nodes.size(); ++k)
                    if (k != xi && k != yi) rest.push_back(nodes[k]);
                for (std::size_t mask = 0; mask < (1u << rest.size()); ++mask) {
                    std::set<std::string> z;
                    for (std::size_t b = 0; b < rest.size(); ++b)
                        if (mask & (1u << b)) z.insert(rest[b]);
                    if (!d_separated(g, nodes[xi], nodes[yi], z)) continue;
                    const double rho =
                        testing_support::partial_correlation(d, nodes[xi], nodes[yi], z);
                    EXPECT_LT(std::abs(rho), 4.0 / std::sqrt(static_cast<double>(n)))
                        << nodes[xi] << " _||_ " << nodes[yi];
                    ++checked;
                }
            }
        }
    }
    EXPECT_GT(checked, 10);  // the property must actually have been exercised
}

TEST(CheckConstraints, Examples) {
    Dag g({"TrainAcc", "AccDiff", "Attack"});
    g.add_edge("TrainAcc", "AccDiff");
    g.add_edge("Attack", "TrainAcc");

    const ConstraintSet pass({{"TrainAcc", "AccDiff"}}, {});
    EXPECT_TRUE(check_constraints(g, pass).ok);

    const ConstraintSet fail({}, {{"Attack", "TrainAcc"}});
    const auto check = check_constraints(g, fail);
    EXPECT_FALSE(check.ok);
    ASSERT_EQ(check.violations.size(), 1u);
    EXPECT_EQ(check.violations[0].edge, (Edge{"Attack", "TrainAcc"}));

    EXPECT_TRUE(check_constraints(g, ConstraintSet()).ok);
}

TEST(CheckConstraints, AddingEdgesNeverFixesAForbidViolation) {
    Rng rng(77);
    for (int trial = 0; trial < 20; ++trial) {
        Dag g = testing_support::random_test_dag(rng, 5, 0.3);
        const auto edges = g.edges();
        if (edges.empty()) continue;
        const Edge bad = edges[rng.bounded(edges.size())];
        const ConstraintSet c({}, {bad});
        ASSERT_FALSE(check_constraints(g, c).ok);
        // add any legal edge; the violation must persist
        const auto& nodes = g.nodes();
        for (int attempt = 0; attempt < 10; ++attempt) {
            const auto& u = nodes[rng.bounded(nodes.size())];
            const auto& v = nodes[rng.bounded(nodes.size())];
            if (u == v || g.has_edge(u, v) || g.has_directed_path(v, u)) continue;
            g.add_edge(u, v);
            break;
        }
        EXPECT_FALSE(check_constraints(g, c).ok);
    }
}

TEST(ConstraintSet, RejectsContradictionsAndEnforceCycles) {
    EXPECT_THROW(ConstraintSet({{"A", "B"}}, {{"A", "B"}}), std::invalid_argument);
    EXPECT_THROW(ConstraintSet({{"A", "B"}, {"B", "A"}}, {}), std::invalid_argument);
    EXPECT_THROW(ConstraintSet({{"A", "A"}}, {}), std::invalid_argument);
}

TEST(BuiltinConstraints, TableOneVariableSet) {
    const std::vector<std::string> vars = {
        "TrainAcc", "TestAcc",  "AccDiff",  "TrainLoss", "TestLoss",     "LossDiff",
        "TrainVar", "TestVar",  "TrainBias", "TestBias",  "NumParams",    "TrainSize",
        "CentroidDist", "ShadowAcc"};
    const ConstraintSet c =
        builtin_constraints(vars, "ShadowAcc", {"TrainSize", "NumParams"});

    EXPECT_EQ(c.enforce(), (std::set<Edge>{{"TrainAcc", "AccDiff"},
                                           {"TestAcc", "AccDiff"},
                                           {"TrainLoss", "LossDiff"},
                                           {"TestLoss", "LossDiff"}}));

    for (const auto& v : vars) {
        if (v != "ShadowAcc") EXPECT_TRUE(c.forbids("ShadowAcc", v)) << v;
        if (v != "TrainSize") EXPECT_TRUE(c.forbids(v, "TrainSize")) << v;
        if (v != "NumParams") EXPECT_TRUE(c.forbids(v, "NumParams")) << v;
    }
    // variance receives only from the roots
    EXPECT_TRUE(c.forbids("TestAcc", "TrainVar"));
    EXPECT_FALSE(c.forbids("TrainSize", "TrainVar"));
    EXPECT_FALSE(c.forbids("NumParams", "TestVar"));
    // bias receives only from the roots and its defining loss/variance
    EXPECT_FALSE(c.forbids("TrainLoss", "TrainBias"));
    EXPECT_FALSE(c.forbids("TrainVar", "TrainBias"));
    EXPECT_TRUE(c.forbids("TestLoss", "TrainBias"));
    EXPECT_TRUE(c.forbids("TrainLoss", "TestBias"));
    // measured-direction rules
    EXPECT_TRUE(c.forbids("CentroidDist", "TestLoss"));
    EXPECT_TRUE(c.forbids("CentroidDist", "TestAcc"));
    EXPECT_TRUE(c.forbids("TestVar", "TestLoss"));

    EXPECT_THROW(builtin_constraints(vars, "NoSuchAttack", {}), std::invalid_argument);
    EXPECT_THROW(builtin_constraints(vars, "", {"NoSuchRoot"}), std::invalid_argument);
}

TEST(ConstraintFiles, ParseAndErrors) {
    std::istringstream in(
        "# domain knowledge\n"
        "enforce TrainAcc -> AccDiff\n"
        "forbid ShadowAcc -> TrainAcc  # attack is a sink\n"
        "\n");
    const ConstraintSet c = parse_constraints(in, "inline");
    EXPECT_TRUE(c.enforces("TrainAcc", "AccDiff"));
    EXPECT_TRUE(c.forbids("ShadowAcc", "TrainAcc"));

    std::istringstream bad1("enforce A B\n");
    EXPECT_THROW(parse_constraints(bad1, "inline"), std::runtime_error);
    std::istringstream bad2("require A -> B\n");
    EXPECT_THROW(parse_constraints(bad2, "inline"), std::runtime_error);
}

TEST(ConstraintSet, MergeLetsOverridesWin) {
    const ConstraintSet base({}, {{"A", "B"}, {"C", "D"}});
    const ConstraintSet user({{"A", "B"}}, {});
    const ConstraintSet merged = ConstraintSet::merged(base, user);
    EXPECT_TRUE(merged.enforces("A", "B"));
    EXPECT_FALSE(merged.forbids("A", "B"));
    EXPECT_TRUE(merged.forbids("C", "D"));
}

TEST(Dot, RoundTripIncludingIsolatedNodes) {
    Dag g({"TrainSize", "AccDiff", "ShadowAcc", "Lonely"});
    g.add_edge("TrainSize", "AccDiff");
    g.add_edge("AccDiff", "ShadowAcc");
    const std::string text = to_dot(g, "averaged");
    EXPECT_NE(text.find("AccDiff -> ShadowAcc;"), std::string::npos);
    const Dag back = parse_dot(text);
    EXPECT_EQ(back.nodes(), g.nodes());
    EXPECT_EQ(back.edges(), g.edges());
}

TEST(Dot, ParserAcceptsQuotedNamesAndComments) {
    const Dag g = parse_dot(
        "digraph G {\n"
        "  // a comment\n"
        "  \"A\" -> B;\n"
        "  C;\n"
        "}\n");
    EXPECT_TRUE(g.has_edge("A", "B"));
    EXPECT_TRUE(g.has_node("C"));
    EXPECT_THROW(parse_dot("graph G { A -- B; }"), std::runtime_error);
    EXPECT_THROW(parse_dot("digraph { A -> ; }"), std::runtime_error);
}
