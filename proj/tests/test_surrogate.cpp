#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace nextnn;

namespace {

Dataset linear_data() {
    Dataset ds;
    ds.inputs = Matrix(2, 1);
    ds.inputs << 1.0, 2.0;
    ds.targets = Vector{{2.0, 3.0}};
    return ds;
}

// f = w x + b; the weight coordinate carries the 1-weight algebra.
const NetArch kLinear{1, {}, Activation::identity};

struct Kind {
    const char* name;
    Strategy strategy;
    LossKind loss;
    RegKind reg;
    double tau;
};

const Kind kAllKinds[] = {
    {"fl-l2", Strategy::fl, LossKind::squared, RegKind::l2, 0.0},
    {"fl-l1", Strategy::fl, LossKind::squared, RegKind::l1, 1.5},
    {"fl-group", Strategy::fl, LossKind::squared, RegKind::group, 1.5},
    {"pl-l2", Strategy::pl, LossKind::squared, RegKind::l2, 0.0},
    {"pl-l1", Strategy::pl, LossKind::squared, RegKind::l1, 1.5},
    {"pl-ce", Strategy::pl, LossKind::cross_entropy, RegKind::l2, 1.5},
};

struct Instance {
    NetArch arch;
    Dataset data;
    Vector w_now;
    Vector grad;
    Vector pi;
    SurrogateSpec spec;
};

Instance make_instance(const Kind& k, std::uint64_t seed) {
    Instance in;
    const bool ce = k.loss == LossKind::cross_entropy;
    in.arch = {3, {4}, ce ? Activation::sigmoid : Activation::tanh};
    in.data = oracle::random_dataset(6, 3, ce ? Task::classification : Task::regression, seed);
    in.w_now = init_weights(in.arch, seed + 1);
    in.grad = local_gradient(in.arch, in.w_now, in.data, k.loss);
    in.pi = oracle::random_vector(in.w_now.size(), seed + 2, 0.3);
    in.spec.strategy = k.strategy;
    in.spec.loss = k.loss;
    in.spec.tau = k.tau;
    const double lambda = 0.2;
    in.spec.reg = k.reg == RegKind::l2   ? Regularizer::l2(lambda)
                  : k.reg == RegKind::l1 ? Regularizer::l1(lambda)
                                         : Regularizer::group(lambda, neuron_groups(in.arch));
    in.spec.adaptive = {5000, 1e-10, 0.1};
    return in;
}

}  // namespace

TEST(SoftThreshold, Examples) {
    EXPECT_NEAR(soft_threshold(Vector{{1.2}}, 0.5)(0), 0.7, 1e-15);
    EXPECT_EQ(soft_threshold(Vector{{-0.3}}, 0.5)(0), 0.0);
    const Vector z = oracle::random_vector(6, 1);
    EXPECT_EQ(soft_threshold(z, 0.0), z);
    EXPECT_THROW(soft_threshold(z, -1.0), std::invalid_argument);
}

TEST(FlDirection, Ridge) {
    const Vector w = fl_direction(Vector{{1.0, 0.0}}, Vector{{1.0, 2.0}}, Vector::Zero(2), Regularizer::l2(2.0), 0.0);
    EXPECT_EQ(w, (Vector{{-1.0, -1.0}}));
    EXPECT_THROW(fl_direction(Vector::Zero(2), Vector::Zero(2), Vector::Zero(2), Regularizer::l2(0.0), 0.0),
                 std::invalid_argument);
}

TEST(FlDirection, L1ReducesToSoftThreshold) {
    const Vector w = fl_direction(Vector::Zero(2), Vector::Zero(2), Vector{{1.2, 0.0}}, Regularizer::l1(0.5), 1.0);
    EXPECT_NEAR(w(0), 0.7, 1e-15);
    EXPECT_EQ(w(1), 0.0);
}

TEST(FlDirection, GroupSatisfiesSubgradientOptimality) {
    // One group of size 4 so rho = 2; lambda = 1.25 gives lambda * rho = 2.5.
    const Regularizer reg = Regularizer::group(1.25, {{0, 4}});
    const Vector a{{3.0, 4.0, 0.0, 0.0}};
    const Vector w = fl_direction(a, Vector::Zero(4), Vector::Zero(4), reg, 1.0);
    EXPECT_NEAR(w(0), -1.5, 1e-15);
    EXPECT_NEAR(w(1), -2.0, 1e-15);
    const Vector kkt = a + 1.0 * w + 2.5 * w / w.norm();
    EXPECT_LT(kkt.norm(), 1e-14);
    // Below the threshold the whole group vanishes.
    EXPECT_EQ(fl_direction(Vector{{1.0, 1.0, 0.0, 0.0}}, Vector::Zero(4), Vector::Zero(4), reg, 1.0), Vector::Zero(4));
}

TEST(FlDirection, GroupZeroesWholeNeurons) {
    const NetArch a{3, {4}, Activation::tanh};
    const auto groups = neuron_groups(a);
    const Vector lin = oracle::random_vector(static_cast<Eigen::Index>(a.num_params()), 3);
    const Vector w = fl_direction(lin, Vector::Zero(lin.size()), Vector::Zero(lin.size()), Regularizer::group(0.5, groups), 1.0);
    for (const auto& g : groups) {
        const auto seg = w.segment(static_cast<Eigen::Index>(g.offset), static_cast<Eigen::Index>(g.size));
        const double thresh = 0.5 * std::sqrt(static_cast<double>(g.size));
        const double norm_a = lin.segment(static_cast<Eigen::Index>(g.offset), static_cast<Eigen::Index>(g.size)).norm();
        if (norm_a <= thresh) EXPECT_EQ(seg.norm(), 0.0);
        else EXPECT_NEAR(seg.norm(), norm_a - thresh, 1e-12);
    }
}

TEST(QuadraticModel, LinearUnitWithoutBias) {
    const auto ds = linear_data();
    const auto m = pl_quadratic_model(kLinear, Vector::Zero(2), ds, Vector::Zero(2));
    EXPECT_DOUBLE_EQ(m.A(0, 0), 5.0);
    EXPECT_DOUBLE_EQ(m.b(0), 8.0);
    EXPECT_DOUBLE_EQ(m.A(1, 1), 2.0);  // bias coordinate
    const auto m2 = pl_quadratic_model(kLinear, Vector::Zero(2), ds, Vector{{2.0, 0.0}});
    EXPECT_DOUBLE_EQ(m2.b(0), 7.0);
}

TEST(QuadraticModel, EmptyDataset) {
    Dataset empty;
    empty.inputs.resize(0, 1);
    const auto m = pl_quadratic_model(kLinear, Vector::Zero(2), empty, Vector{{2.0, -4.0}});
    EXPECT_EQ(m.A, Matrix::Zero(2, 2));
    EXPECT_EQ(m.b, (Vector{{-1.0, 2.0}}));
}

TEST(QuadraticModel, MatchesDirectResummationAndIsPsd) {
    const NetArch a{3, {5}, Activation::tanh};
    const Vector w = init_weights(a, 4);
    const auto ds = oracle::random_dataset(12, 3, Task::regression, 5);
    const Vector pi = oracle::random_vector(w.size(), 6);
    const auto m = pl_quadratic_model(a, w, ds, pi);
    Matrix A = Matrix::Zero(w.size(), w.size());
    Vector b = -0.5 * pi;
    for (Eigen::Index k = 0; k < 12; ++k) {
        const Vector x = ds.inputs.row(k).transpose();
        const Vector j = oracle::fd_gradient([&](const Vector& v) { return oracle::naive_output(a, v, x); }, w);
        const double r = ds.targets(k) - oracle::naive_output(a, w, x) + j.dot(w);
        A += j * j.transpose();
        b += j * r;
    }
    EXPECT_LT((m.A - A).lpNorm<Eigen::Infinity>(), 1e-7);
    EXPECT_LT((m.b - b).lpNorm<Eigen::Infinity>(), 1e-7);
    EXPECT_EQ((m.A - m.A.transpose()).lpNorm<Eigen::Infinity>(), 0.0);
    Eigen::SelfAdjointEigenSolver<Matrix> es(m.A);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10);
}

TEST(RidgeSolve, ScalarCases) {
    QuadraticModel m{Matrix::Constant(1, 1, 5.0), Vector::Constant(1, 8.0)};
    EXPECT_NEAR(pl_solve_ridge(m, 2.0)(0), 4.0 / 3.0, 1e-15);
    const Vector b = oracle::random_vector(4, 2);
    EXPECT_LT((pl_solve_ridge({Matrix::Zero(4, 4), b}, 2.0) - b).norm(), 1e-15);
    EXPECT_THROW(pl_solve_ridge(m, 0.0), std::invalid_argument);
}

TEST(RidgeSolve, MatchesConjugateGradientOracle) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Matrix A = oracle::random_spd(40, seed, 0.0);
        const Vector b = oracle::random_vector(40, seed + 100);
        const double lambda = 0.7;
        const Vector w = pl_solve_ridge({A, b}, lambda);
        const Matrix M = A + 0.5 * lambda * Matrix::Identity(40, 40);
        EXPECT_LT((w - oracle::conjugate_gradient(M, b)).lpNorm<Eigen::Infinity>(), 1e-8);
        EXPECT_LT((M * w - b).norm(), 1e-8 * (1.0 + b.norm()));
    }
}

TEST(RidgeSolve, NonFiniteInputFails) {
    QuadraticModel m{Matrix::Identity(2, 2), Vector{{1.0, std::nan("")}}};
    EXPECT_THROW(pl_solve_ridge(m, 1.0), SolverError);
}

TEST(L1Solve, VanishingL1MatchesRidgeWithTau) {
    const Matrix A = oracle::random_spd(8, 3, 0.0);
    const Vector b = oracle::random_vector(8, 4);
    const double tau = 0.8;
    const auto r = pl_solve_l1({A, b}, tau, 1e-12, Vector::Zero(8));
    EXPECT_LT((r.w - pl_solve_ridge({A, b}, tau)).lpNorm<Eigen::Infinity>(), 1e-6);
}

TEST(L1Solve, OneDimensionalAgainstGrid) {
    const QuadraticModel m{Matrix::Constant(1, 1, 1.0), Vector::Constant(1, 3.0)};
    const auto r = pl_solve_l1(m, 0.0, 2.0, Vector::Zero(1));
    EXPECT_NEAR(r.w(0), 2.0, 1e-8);
    double best = 0.0, best_v = 1e300;
    for (int k = -50000; k <= 50000; ++k) {
        const double w = k * 1e-4;
        const double v = w * w - 6.0 * w + 2.0 * std::abs(w);
        if (v < best_v) {
            best_v = v;
            best = w;
        }
    }
    EXPECT_NEAR(r.w(0), best, 1e-4);
}

TEST(L1Solve, KktConditionsOnRandomInstances) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Eigen::Index q = 30;
        const Matrix A = oracle::random_spd(q, seed, 0.0) / 10.0;
        const Vector b = oracle::random_vector(q, seed + 50, 2.0);
        const Vector w_now = oracle::random_vector(q, seed + 70);
        const double tau = 0.5, lambda = 1.0;
        const auto r = pl_solve_l1({A, b}, tau, lambda, w_now);
        ASSERT_TRUE(r.converged);
        const Vector grad = 2.0 * ((A + 0.5 * tau * Matrix::Identity(q, q)) * r.w - b - 0.5 * tau * w_now);
        for (Eigen::Index k = 0; k < q; ++k) {
            if (r.w(k) == 0.0) {
                EXPECT_LE(std::abs(grad(k)), lambda + 1e-6);
            } else {
                EXPECT_NEAR(grad(k), -lambda * (r.w(k) > 0 ? 1.0 : -1.0), 1e-6);
            }
        }
    }
}

TEST(L1Solve, IterationCapReturnsBestIterate) {
    const Matrix A = oracle::random_spd(20, 1, 0.0);
    const Vector b = oracle::random_vector(20, 2, 5.0);
    const Vector w_now = Vector::Zero(20);
    const auto r = pl_solve_l1({A, b}, 0.1, 0.5, w_now, {3, 1e-14, 0.0});
    EXPECT_FALSE(r.converged);
    EXPECT_EQ(r.iterations, 3u);
    EXPECT_LE(pl_l1_objective({A, b}, 0.1, 0.5, w_now, r.w), pl_l1_objective({A, b}, 0.1, 0.5, w_now, w_now));
}

TEST(CrossEntropySolve, StationaryWarmStart) {
    // f = 0.5 on both samples, so the residuals 0.5 and -0.5 cancel.
    const NetArch a{1, {}, Activation::sigmoid};
    Dataset ds;
    ds.inputs = Matrix::Constant(2, 1, 0.0);
    ds.targets = Vector{{0.0, 1.0}};
    const Vector w_now = Vector::Zero(2);
    const CrossEntropySurrogate s(a, w_now, ds, Vector::Zero(2), 1e-300, 1.0);
    EXPECT_LT(s.gradient(w_now).norm(), 1e-12);
    const auto r = pl_solve_crossentropy(a, w_now, ds, Vector::Zero(2), Regularizer::l2(1e-300), 1.0);
    EXPECT_EQ(r.w, w_now);
    EXPECT_TRUE(r.converged);
}

TEST(CrossEntropySolve, DescentFromWarmStart) {
    const NetArch a{3, {4}, Activation::sigmoid};
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto ds = oracle::random_dataset(10, 3, Task::classification, seed);
        const Vector w_now = init_weights(a, seed);
        const Vector pi = oracle::random_vector(w_now.size(), seed + 9);
        const CrossEntropySurrogate s(a, w_now, ds, pi, 0.3, 1.0);
        const auto r = s.solve();
        EXPECT_LE(s.objective(r.w), s.objective(w_now));
    }
}

TEST(CrossEntropySolve, MatchesGridSearchOnTinyInstance) {
    const NetArch a{1, {}, Activation::sigmoid};  // Q = 2
    Dataset ds;
    ds.inputs = Matrix(4, 1);
    ds.inputs << 0.1, 0.4, 0.6, 0.9;
    ds.targets = Vector{{0.0, 1.0, 0.0, 1.0}};
    const Vector w_now{{0.3, -0.2}};
    const Vector pi{{0.2, -0.1}};
    const CrossEntropySurrogate s(a, w_now, ds, pi, 0.5, 1.0);
    const auto r = s.solve({20000, 1e-12, 0.1});

    // Coarse-to-fine grid search over the convex surrogate.
    Vector center = Vector::Zero(2);
    double half = 4.0;
    for (int level = 0; level < 6; ++level) {
        Vector best = center;
        double best_v = s.objective(center);
        const int n = 80;
        for (int i = -n; i <= n; ++i)
            for (int j = -n; j <= n; ++j) {
                const Vector w = center + Vector{{half * i / n, half * j / n}};
                const double v = s.objective(w);
                if (v < best_v) {
                    best_v = v;
                    best = w;
                }
            }
        center = best;
        half /= 10.0;
    }
    EXPECT_LT((r.w - center).lpNorm<Eigen::Infinity>(), 1e-3);
}

TEST(Surrogate, SmoothGradientMatchesLocalGradientForAllKinds) {
    for (const auto& k : kAllKinds) {
        const auto in = make_instance(k, 11);
        const LocalSurrogate s(in.spec, in.arch, in.data, in.w_now, in.grad, in.pi);
        const Vector fd = oracle::fd_gradient([&](const Vector& v) { return s.smooth_value(v); }, in.w_now, 1e-5);
        EXPECT_LT(oracle::rel_error(fd, in.grad), 1e-8) << k.name;
    }
}

TEST(Surrogate, StrictlyConvexAroundSolution) {
    for (const auto& k : kAllKinds) {
        const auto in = make_instance(k, 21);
        const LocalSurrogate s(in.spec, in.arch, in.data, in.w_now, in.grad, in.pi);
        const Vector w = s.solve().w;
        for (std::uint64_t d = 0; d < 10; ++d) {
            const Vector dir = oracle::random_vector(w.size(), 300 + d, 0.1);
            const double second = s.smooth_value(w + dir) - 2.0 * s.smooth_value(w) + s.smooth_value(w - dir);
            EXPECT_GT(second, 0.0) << k.name;
        }
    }
}

TEST(Surrogate, SolutionMinimisesObjective) {
    for (const auto& k : kAllKinds) {
        const auto in = make_instance(k, 31);
        const LocalSurrogate s(in.spec, in.arch, in.data, in.w_now, in.grad, in.pi);
        const Vector w = s.solve().w;
        const double at = s.objective(w);
        for (std::uint64_t d = 0; d < 20; ++d) {
            const Vector dir = oracle::random_vector(w.size(), 500 + d, 1e-3);
            EXPECT_LE(at, s.objective(w + dir) + 1e-9) << k.name;
        }
    }
}

TEST(SurrogateSpec, RejectsUnsupportedCombinations) {
    SurrogateSpec s;
    s.reg = Regularizer::l1(0.1);
    EXPECT_THROW(s.validate(), std::invalid_argument);  // FL l1 without tau
    s.tau = 1.0;
    EXPECT_NO_THROW(s.validate());
    s.strategy = Strategy::pl;
    s.reg = Regularizer::group(0.1, {{0, 1}});
    EXPECT_THROW(s.validate(), std::invalid_argument);
    s.reg = Regularizer::l2(0.1);
    s.loss = LossKind::cross_entropy;
    s.tau = 0.0;
    EXPECT_THROW(s.validate(), std::invalid_argument);
    s.reg = Regularizer::l2(0.0);
    EXPECT_THROW(s.validate(), std::invalid_argument);
}
