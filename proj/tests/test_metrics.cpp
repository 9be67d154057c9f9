#include "oracles.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace nextnn;

TEST(Disagreement, Examples) {
    const std::vector<Vector> same(3, Vector{{1.0, 2.0}});
    EXPECT_EQ(disagreement(same), 0.0);
    const std::vector<Vector> two{Vector{{0.0}}, Vector{{2.0}}};
    EXPECT_EQ(disagreement(two), 1.0);
    const std::vector<Vector> one{Vector{{5.0, -3.0}}};
    EXPECT_EQ(disagreement(one), 0.0);
    EXPECT_THROW(disagreement(std::vector<Vector>{}), std::invalid_argument);
}

TEST(Disagreement, MatchesLoopOracle) {
    std::vector<Vector> ws;
    for (std::uint64_t s = 0; s < 5; ++s) ws.push_back(oracle::random_vector(7, s));
    double total = 0.0;
    for (const auto& w : ws) {
        double worst = 0.0;
        for (Eigen::Index k = 0; k < 7; ++k) {
            double mean = 0.0;
            for (const auto& v : ws) mean += v(k) / 5.0;
            worst = std::max(worst, std::abs(w(k) - mean));
        }
        total += worst;
    }
    EXPECT_NEAR(disagreement(ws), total / 5.0, 1e-14);
}

TEST(TestMetric, PerfectPredictorScoresZero) {
    const NetArch a{1, {}, Activation::identity};
    const Vector w{{2.0, 0.5}};
    Dataset ds;
    ds.inputs = Matrix{{0.0}, {1.0}, {0.25}};
    ds.targets = Vector{{0.5, 2.5, 1.0}};
    EXPECT_EQ(test_metric(a, w, ds, Task::regression), 0.0);

    const NetArch c{1, {}, Activation::sigmoid};
    Dataset cls;
    cls.task = Task::classification;
    cls.inputs = Matrix{{-1.0}, {1.0}};
    cls.targets = Vector{{0.0, 1.0}};
    EXPECT_EQ(test_metric(c, Vector{{10.0, 0.0}}, cls, Task::classification), 0.0);
}

TEST(TestMetric, ConstantOffsetGivesSquaredOffset) {
    const NetArch a{1, {}, Activation::identity};
    Dataset ds;
    ds.inputs = Matrix{{0.0}, {1.0}, {0.5}, {0.2}};
    ds.targets = Vector{{0.0, 1.0, 0.5, 0.2}};
    EXPECT_NEAR(test_metric(a, Vector{{1.0, 0.1}}, ds, Task::regression), 0.01, 1e-15);
}

TEST(TestMetric, HalfOutputTiesGoToClassOne) {
    const NetArch c{2, {3}, Activation::sigmoid};
    const auto ds = oracle::random_dataset(40, 2, Task::classification, 3);
    double ones = 0.0;
    for (Eigen::Index m = 0; m < 40; ++m) ones += ds.targets(m);
    EXPECT_DOUBLE_EQ(test_metric(c, Vector::Zero(static_cast<Eigen::Index>(c.num_params())), ds, Task::classification),
                     1.0 - ones / 40.0);
    Dataset empty;
    EXPECT_THROW(test_metric(c, Vector::Zero(13), empty, Task::classification), std::invalid_argument);
}

TEST(Comm, Examples) {
    EXPECT_EQ(comm_account(4, 10, Exchange::next), 80u);
    EXPECT_EQ(comm_account(4, 10, Exchange::distgrad), 40u);
    EXPECT_EQ(comm_account(0, 10, Exchange::next), 0u);
}

TEST(Comm, NextIsTwiceDistGradEveryRound) {
    const NetArch arch{2, {3}, Activation::tanh};
    std::vector<Dataset> locals;
    for (std::uint64_t i = 0; i < 4; ++i) locals.push_back(oracle::random_dataset(5, 2, Task::regression, i));
    const Problem p{arch, locals, LossKind::squared};
    const auto g = random_connected_graph(4, 0.4, 6);
    RunConfig nc;
    nc.surrogate.strategy = Strategy::pl;
    nc.surrogate.reg = Regularizer::l2(0.1);
    nc.topology = TopologySchedule::fixed_metropolis(g);
    nc.step = {0.1, 0.01};
    nc.max_epochs = 12;
    nc.tolerance = 0.0;
    DistGradConfig dc;
    dc.reg = nc.surrogate.reg;
    dc.topology = nc.topology;
    dc.step = {1e-3, 0.01};
    dc.max_epochs = 12;
    const auto w0 = agent_initial_weights(arch, 4, 1);
    const auto a = run_next(nc, p, locals[0], w0);
    const auto b = run_distgrad(dc, p, locals[0], w0);
    ASSERT_EQ(a.rows.size(), b.rows.size());
    for (std::size_t k = 0; k < a.rows.size(); ++k) EXPECT_EQ(a.rows[k].scalars_cum, 2 * b.rows[k].scalars_cum);
}

TEST(Trace, CostEqualsIndependentSummation) {
    const NetArch arch{2, {3}, Activation::tanh};
    std::vector<Dataset> locals;
    for (std::uint64_t i = 0; i < 3; ++i) locals.push_back(oracle::random_dataset(5, 2, Task::regression, i + 9));
    const Problem p{arch, locals, LossKind::squared};
    const auto w0 = agent_initial_weights(arch, 3, 1);
    const MetricContext ctx{&p, Regularizer::l2(0.3), &locals[0]};
    const auto row = ctx.row(0, 0.5, w0, 0, 0.0);
    const Vector mean = (w0[0] + w0[1] + w0[2]) / 3.0;
    double brute = 0.15 * mean.squaredNorm();
    for (const auto& d : locals) brute += oracle::naive_local_loss(arch, mean, d, LossKind::squared);
    EXPECT_NEAR(row.cost, brute, 1e-12);
}

TEST(Trace, CsvRoundTripAndOrdering) {
    TraceSet t;
    t.append({0, 0.5, 10.0, 0.3, 0.2, 0, 0.1});
    t.append({1, 0.49, 5.25, 0.1, 0.01, 40, 0.7});
    std::stringstream ss;
    t.write_csv(ss);
    EXPECT_EQ(ss.str().substr(0, ss.str().find('\n')), kTraceHeader);
    const auto back = TraceSet::read_csv(ss);
    ASSERT_EQ(back.rows.size(), 2u);
    EXPECT_EQ(back.rows[1].cost, 5.25);
    EXPECT_EQ(back.rows[1].scalars_cum, 40u);
    EXPECT_EQ(back.rows[1].alpha, 0.49);
    EXPECT_THROW(t.append({1, 0.4, 1.0, 0.0, 0.0, 50, 0.0}), std::logic_error);
    EXPECT_THROW(t.append({2, 0.4, 1.0, 0.0, 0.0, 10, 0.0}), std::logic_error);
    std::istringstream bad("n,cost\n");
    EXPECT_THROW(TraceSet::read_csv(bad), std::invalid_argument);
}
