#include "causalkit/simulator.hpp"

#include "support/test_oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace causalkit;
using causalkit::testing::SemBuilder;

TEST(Sample, NoiselessSemIsDeterministic) {
    const SemSpec sem = SemBuilder{}
                            .node("X", 1.0, 0.0)
                            .node("Y", 0.0, 0.0)
                            .edge("X", "Y", 2.0)
                            .build();
    const Dataset d = sample(sem, 5, 123);
    for (Eigen::Index r = 0; r < 5; ++r) {
        EXPECT_DOUBLE_EQ(d.values()(r, d.column_index("X")), 1.0);
        EXPECT_DOUBLE_EQ(d.values()(r, d.column_index("Y")), 2.0);
    }
}

TEST(Sample, SameSeedSameData) {
    const SemSpec sem = random_sem(5, 0.4, 1.5, 0.5, 1);
    const Dataset a = sample(sem, 200, 77);
    const Dataset b = sample(sem, 200, 77);
    EXPECT_TRUE(a.values() == b.values());
    const Dataset c = sample(sem, 200, 78);
    EXPECT_FALSE(c.values() == a.values());
}

TEST(Sample, MeansConvergeToClosedForm) {
    const SemSpec sem = random_sem(5, 0.5, 1.5, 0.5, 2);
    const Eigen::Index n = 100000;
    const Dataset d = sample(sem, n, 3);
    const JointGaussian joint = to_joint(sem.net);
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(joint.nodes.size()); ++i) {
        const int col = d.column_index(joint.nodes[static_cast<std::size_t>(i)]);
        const double se = std::sqrt(joint.covariance(i, i) / static_cast<double>(n));
        EXPECT_NEAR(d.values().col(col).mean(), joint.mean[i], 3.0 * se + 1e-12);
    }
}

TEST(AnalyticalAte, HandComputedExamples) {
    const SemSpec single = SemBuilder{}
                               .node("X", 0.0, 1.0)
                               .node("Y", 0.0, 1.0)
                               .edge("X", "Y", 2.0)
                               .build();
    EXPECT_DOUBLE_EQ(analytical_ate(single, "X", "Y"), 2.0);
    EXPECT_DOUBLE_EQ(analytical_ate(single, "Y", "X"), 0.0);

    // X -> M -> Y with 2 * 3 plus the direct X -> Y edge of 1: total 7.
    const SemSpec mediated = SemBuilder{}
                                 .node("X", 0.0, 1.0)
                                 .node("M", 0.0, 1.0)
                                 .node("Y", 0.0, 1.0)
                                 .edge("X", "M", 2.0)
                                 .edge("M", "Y", 3.0)
                                 .edge("X", "Y", 1.0)
                                 .build();
    EXPECT_DOUBLE_EQ(analytical_ate(mediated, "X", "Y"), 7.0);
    EXPECT_THROW(analytical_ate(mediated, "X", "Zeta"), std::invalid_argument);
    EXPECT_THROW(analytical_ate(mediated, "X", "X"), std::invalid_argument);
}

TEST(AnalyticalAte, DualRoutesAgreeOnRandomSems) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const SemSpec sem = random_sem(7, 0.4, 2.0, 0.5, seed);
        const auto& nodes = sem.net.dag().nodes();
        for (const auto& t : nodes)
            for (const auto& y : nodes)
                if (t != y) EXPECT_NO_THROW(analytical_ate(sem, t, y));
    }
}

TEST(RandomSem, DegenerateShapes) {
    const SemSpec edgeless = random_sem(4, 0.0, 1.5, 0.5, 5);
    EXPECT_EQ(edgeless.net.dag().n_edges(), 0u);
    const SemSpec single = random_sem(1, 0.5, 1.5, 0.5, 6);
    EXPECT_EQ(single.net.dag().n_nodes(), 1u);
    EXPECT_EQ(single.net.dag().n_edges(), 0u);
}

TEST(RandomSem, CoefficientMagnitudesRespectTheFloor) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const SemSpec sem = random_sem(6, 0.5, 1.5, 0.5, seed);
        for (const auto& name : sem.net.dag().nodes())
            for (const auto& [p, beta] : sem.net.node(name).coefficients) {
                EXPECT_GE(std::abs(beta), 0.5);
                EXPECT_LE(std::abs(beta), 1.5);
            }
    }
}

TEST(RandomSem, RejectsBadArguments) {
    EXPECT_THROW(random_sem(0, 0.5, 1.5, 0.5, 1), std::invalid_argument);
    EXPECT_THROW(random_sem(3, 1.5, 1.5, 0.5, 1), std::invalid_argument);
    EXPECT_THROW(random_sem(3, 0.5, 0.3, 0.5, 1), std::invalid_argument);
    EXPECT_THROW(random_sem(3, 0.5, 1.5, -0.1, 1), std::invalid_argument);
}

TEST(Sample, RejectsNonPositiveRowCount) {
    const SemSpec sem = random_sem(3, 0.5, 1.5, 0.5, 7);
    EXPECT_THROW(sample(sem, 0, 1), std::invalid_argument);
}
