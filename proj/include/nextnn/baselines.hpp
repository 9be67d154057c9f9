#pragma once

// Reference optimisers: distributed gradient descent without gradient
// tracking, and centralised GD / AdaGrad / PL-SCA on the pooled data.

#include "nextnn/common.hpp"
#include "nextnn/engine.hpp"
#include "nextnn/metrics.hpp"
#include "nextnn/objectives.hpp"
#include "nextnn/quadratic.hpp"
#include "nextnn/surrogate.hpp"
#include "nextnn/topology.hpp"

#include <chrono>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nextnn {

/// Stacks datasets row-wise in the given order.
inline Dataset concat(std::span<const Dataset> parts) {
    Dataset out;
    std::size_t rows = 0;
    Eigen::Index dim = 0;
    for (const auto& p : parts) {
        rows += p.size();
        if (!p.empty()) dim = p.inputs.cols();
        out.task = p.task;
    }
    out.inputs.resize(static_cast<Eigen::Index>(rows), dim);
    out.targets.resize(static_cast<Eigen::Index>(rows));
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        if (p.empty()) continue;
        const auto n = static_cast<Eigen::Index>(p.size());
        out.inputs.middleRows(at, n) = p.inputs;
        out.targets.segment(at, n) = p.targets;
        at += n;
    }
    return out;
}

/// One DistGrad round: z_i = w_i - eta (grad g_i + (1/I) grad r(w_i)), then
/// w_i <- sum_j c_ij z_j.
inline void distgrad_round(std::vector<Vector>& ws, const MixingMatrix& C, double eta, const Problem& p,
                           const Regularizer& reg, std::size_t threads = 1) {
    if (!reg.differentiable()) throw std::invalid_argument("DistGrad needs a differentiable regulariser");
    const auto agents = ws.size();
    if (C.size() != agents || p.num_agents() != agents)
        throw std::invalid_argument("distgrad_round: agent count mismatch");
    std::vector<Vector> z(agents);
    parallel_for(agents, threads, [&](std::size_t i) {
        const Vector grad = local_gradient(p.arch, ws[i], p.locals[i], p.loss) +
                            reg.gradient(ws[i]) / static_cast<double>(agents);
        z[i] = ws[i] - eta * grad;
    });
    for (std::size_t i = 0; i < agents; ++i) {
        Vector w_new = Vector::Zero(ws[i].size());
        for (std::size_t j = 0; j < agents; ++j)
            if (C(i, j) != 0.0) w_new.noalias() += C(i, j) * z[j];
        ws[i] = std::move(w_new);
    }
}

struct DistGradConfig {
    Regularizer reg;
    TopologySchedule topology = TopologySchedule::fixed(Graph(1), MixingMatrix::identity(1));
    StepSizeSchedule step;  // eta[n], same decay rule as alpha[n]
    std::size_t max_epochs = 1000;
    std::size_t metric_every = 1;
    std::size_t threads = 1;
};

inline TraceSet run_distgrad(const DistGradConfig& cfg, const Problem& p, const Dataset& test, std::vector<Vector> w0) {
    cfg.step.validate();
    if (!cfg.reg.differentiable()) throw std::invalid_argument("DistGrad needs a differentiable regulariser");
    const auto q = p.arch.num_params();
    const auto start = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count(); };
    const MetricContext metrics{&p, cfg.reg, &test};
    TraceSet trace;
    double eta = cfg.step.alpha0;
    std::uint64_t scalars = 0;
    trace.append(metrics.row(0, eta, w0, scalars, elapsed()));
    for (std::size_t n = 0; n < cfg.max_epochs; ++n) {
        const auto round = cfg.topology.at(n);
        distgrad_round(w0, round.mixing, eta, p, cfg.reg, cfg.threads);
        scalars += comm_account(round.graph.edge_count(), q, Exchange::distgrad);
        eta = step_size_next(eta, cfg.step.eps);
        if ((n + 1) % cfg.metric_every == 0 || n + 1 == cfg.max_epochs)
            trace.append(metrics.row(n + 1, eta, w0, scalars, elapsed()));
    }
    return trace;
}

enum class CentralizedKind { gd, adagrad, pl_sca };

inline std::string_view to_string(CentralizedKind k) {
    switch (k) {
        case CentralizedKind::gd: return "gd";
        case CentralizedKind::adagrad: return "adagrad";
        default: return "pl-sca";
    }
}

struct CentralizedState {
    Vector w;
    Vector acc;  // AdaGrad running sum of squared gradients
};

/// One centralised iteration. `step` is the fixed rate eta for GD/AdaGrad and
/// alpha[n] for PL-SCA.
inline void centralized_step(CentralizedKind kind, CentralizedState& state, const NetArch& arch, const Dataset& data,
                             LossKind loss, const Regularizer& reg, double step) {
    if (kind == CentralizedKind::pl_sca) {
        if (loss != LossKind::squared || reg.kind != RegKind::l2)
            throw std::invalid_argument("PL-SCA supports squared loss with l2 regularisation only");
        const auto model = pl_quadratic_model(arch, state.w, data, Vector::Zero(state.w.size()));
        const Vector target = pl_solve_ridge(model, reg.lambda);
        state.w = state.w + step * (target - state.w);
        return;
    }
    const Vector grad = local_gradient(arch, state.w, data, loss) + reg.gradient(state.w);
    if (kind == CentralizedKind::gd) {
        state.w -= step * grad;
        return;
    }
    if (state.acc.size() != state.w.size()) state.acc = Vector::Zero(state.w.size());
    state.acc.array() += grad.array().square();
    state.w.array() -= step * grad.array() / (state.acc.array() + kAdaGradEpsilon).sqrt();
}

struct CentralizedConfig {
    CentralizedKind kind = CentralizedKind::gd;
    Regularizer reg;
    double eta = 0.01;      // GD / AdaGrad
    StepSizeSchedule step;  // PL-SCA
    std::size_t max_epochs = 1000;
    std::size_t metric_every = 1;
};

/// Runs a centralised solver on the pooled data; one epoch is one full-data iteration.
inline TraceSet run_centralized(const CentralizedConfig& cfg, const Problem& p, const Dataset& test, Vector w0) {
    if (cfg.kind == CentralizedKind::pl_sca) cfg.step.validate();
    else if (!cfg.reg.differentiable()) throw std::invalid_argument("GD/AdaGrad need a differentiable regulariser");
    const Dataset pooled = concat(p.locals);
    const Problem pooled_problem{p.arch, std::span<const Dataset>(&pooled, 1), p.loss};
    const MetricContext metrics{&pooled_problem, cfg.reg, &test};
    const auto start = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count(); };

    CentralizedState state{std::move(w0), {}};
    double alpha = cfg.kind == CentralizedKind::pl_sca ? cfg.step.alpha0 : cfg.eta;
    TraceSet trace;
    trace.append(metrics.row(0, alpha, std::span<const Vector>(&state.w, 1), 0, elapsed()));
    for (std::size_t n = 0; n < cfg.max_epochs; ++n) {
        centralized_step(cfg.kind, state, p.arch, pooled, p.loss, cfg.reg, alpha);
        if (!state.w.allFinite())
            throw SolverError("centralised " + std::string(to_string(cfg.kind)) + " diverged at epoch " +
                              std::to_string(n));
        if (cfg.kind == CentralizedKind::pl_sca) alpha = step_size_next(alpha, cfg.step.eps);
        if ((n + 1) % cfg.metric_every == 0 || n + 1 == cfg.max_epochs)
            trace.append(metrics.row(n + 1, alpha, std::span<const Vector>(&state.w, 1), 0, elapsed()));
    }
    return trace;
}

}  // namespace nextnn
