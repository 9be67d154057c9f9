#pragma once

// Synchronous-round simulator for in-network successive convex approximation:
// every round each agent solves its local surrogate, moves toward the
// solution, averages with its neighbours, and updates its gradient tracker.

#include "nextnn/common.hpp"
#include "nextnn/dataset.hpp"
#include "nextnn/metrics.hpp"
#include "nextnn/nn.hpp"
#include "nextnn/objectives.hpp"
#include "nextnn/surrogate.hpp"
#include "nextnn/topology.hpp"

#include <chrono>
#include <functional>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace nextnn {

/// alpha[n] = alpha[n-1] (1 - eps alpha[n-1]).
inline double step_size_next(double alpha_prev, double eps) {
    if (!(alpha_prev > 0.0 && alpha_prev <= 1.0)) throw std::invalid_argument("step size must lie in (0, 1]");
    if (!(eps > 0.0 && eps <= 1.0)) throw std::invalid_argument("step-size decay must lie in (0, 1]");
    if (alpha_prev * eps >= 1.0) throw std::invalid_argument("step-size rule needs alpha * eps < 1");
    return alpha_prev * (1.0 - eps * alpha_prev);
}

/// Diminishing step sizes alpha[0], alpha[1], ... following step_size_next.
struct StepSizeSchedule {
    double alpha0 = 1.0;
    double eps = 0.01;

    void validate() const {
        if (!(alpha0 > 0.0 && alpha0 <= 1.0)) throw std::invalid_argument("alpha0 must lie in (0, 1]");
        if (!(eps > 0.0 && eps <= 1.0)) throw std::invalid_argument("epsilon must lie in (0, 1]");
        if (alpha0 * eps >= 1.0) throw std::invalid_argument("alpha0 * epsilon must be < 1");
    }

    /// Materialises alpha[0 .. count).
    std::vector<double> sequence(std::size_t count) const {
        validate();
        std::vector<double> out;
        out.reserve(count);
        double a = alpha0;
        for (std::size_t n = 0; n < count; ++n) {
            out.push_back(a);
            a = step_size_next(a, eps);
        }
        return out;
    }
};

/// One agent's view: estimate w, gradient tracker y, estimate pi of the other
/// agents' summed gradients, staging value z, and the last local gradient.
struct AgentState {
    Vector w;
    Vector y;
    Vector pi;
    Vector z;
    Vector last_grad;
};

/// Inputs shared by every agent in a run.
struct Problem {
    NetArch arch;
    std::span<const Dataset> locals;
    LossKind loss = LossKind::squared;

    std::size_t num_agents() const { return locals.size(); }
};

/// y[0] = grad g_i(w[0]); pi[0] = I y[0] - grad g_i(w[0]).
inline std::vector<AgentState> init_agents(const Problem& p, std::vector<Vector> w0, std::size_t threads = 1) {
    const auto agents = p.num_agents();
    if (w0.size() != agents) throw std::invalid_argument("init_agents: one initial vector per agent required");
    std::vector<AgentState> states(agents);
    parallel_for(agents, threads, [&](std::size_t i) {
        auto& s = states[i];
        s.w = std::move(w0[i]);
        s.last_grad = local_gradient(p.arch, s.w, p.locals[i], p.loss);
        s.y = s.last_grad;
        s.pi = static_cast<double>(agents) * s.y - s.last_grad;
        s.z = s.w;
    });
    return states;
}

/// Independent Glorot initialisation per agent.
inline std::vector<Vector> agent_initial_weights(const NetArch& arch, std::size_t agents, std::uint64_t seed) {
    std::seed_seq seq{seed, std::uint64_t{0x5eed}};
    std::vector<std::uint64_t> seeds(agents);
    seq.generate(seeds.begin(), seeds.end());
    std::vector<Vector> out;
    out.reserve(agents);
    for (auto s : seeds) out.push_back(init_weights(arch, s));
    return out;
}

/// Solves the agent's surrogate at its current state and sets
/// z = w + alpha (w~ - w). Returns the solve details.
inline LocalSolve sca_local_update(AgentState& state, const SurrogateSpec& spec, double alpha, const NetArch& arch,
                                   const Dataset& data) {
    const LocalSurrogate surrogate(spec, arch, data, state.w, state.last_grad, state.pi);
    LocalSolve solve = surrogate.solve();
    if (!solve.w.allFinite()) throw SolverError("surrogate solution is not finite");
    state.z = state.w + alpha * (solve.w - state.w);
    return solve;
}

/// Consensus and gradient-tracking update from a snapshot of every agent's
/// (z, y):  w_i <- sum_j c_ij z_j,  y_i <- grad_new + (sum_j c_ij y_j - grad_old),
/// pi_i <- I y_i - grad_new. Mixing sums run in fixed j order; with a single
/// agent this grouping keeps y == grad and pi == 0 exactly.
inline void consensus_round(std::vector<AgentState>& states, const MixingMatrix& C, const Problem& p,
                            std::size_t threads = 1) {
    const auto agents = states.size();
    if (C.size() != agents) throw std::invalid_argument("consensus_round: mixing matrix size mismatch");
    std::vector<Vector> z(agents), y(agents);
    for (std::size_t j = 0; j < agents; ++j) {
        z[j] = states[j].z;
        y[j] = states[j].y;
    }
    parallel_for(agents, threads, [&](std::size_t i) {
        auto& s = states[i];
        Vector w_new = Vector::Zero(s.w.size());
        Vector y_mix = Vector::Zero(s.w.size());
        for (std::size_t j = 0; j < agents; ++j) {
            const double c = C(i, j);
            if (c == 0.0) continue;
            w_new.noalias() += c * z[j];
            y_mix.noalias() += c * y[j];
        }
        Vector g_new = local_gradient(p.arch, w_new, p.locals[i], p.loss);
        y_mix -= s.last_grad;
        s.y = g_new + y_mix;
        s.pi = static_cast<double>(agents) * s.y - g_new;
        s.last_grad = std::move(g_new);
        s.w = std::move(w_new);
    });
}

inline std::vector<Vector> weights_of(const std::vector<AgentState>& states) {
    std::vector<Vector> ws;
    ws.reserve(states.size());
    for (const auto& s : states) ws.push_back(s.w);
    return ws;
}

/// One CSV row per agent with its full weight vector.
inline void write_checkpoint(std::ostream& os, const std::vector<AgentState>& states) {
    for (const auto& s : states) write_weights_csv_row(os, s.w);
}

/// Everything needed to evaluate trace rows.
struct MetricContext {
    const Problem* problem = nullptr;
    Regularizer reg;
    const Dataset* test = nullptr;

    TraceRow row(std::size_t n, double alpha, std::span<const Vector> ws, std::uint64_t scalars, double ms) const {
        const Vector mean = average(ws);
        TraceRow r;
        r.n = n;
        r.alpha = alpha;
        r.cost = global_cost(problem->arch, mean, problem->locals, problem->loss, reg);
        r.test_metric = (test && !test->empty()) ? test_metric(problem->arch, mean, *test, test->task) : 0.0;
        r.disagreement = disagreement(ws);
        r.scalars_cum = scalars;
        r.ms = ms;
        return r;
    }
};

struct RunConfig {
    SurrogateSpec surrogate;
    TopologySchedule topology = TopologySchedule::fixed(Graph(1), MixingMatrix::identity(1));
    StepSizeSchedule step;
    std::size_t max_epochs = 1000;
    double tolerance = 1e-8;  // stop when max_i ||w_i[n+1] - w_i[n]||_inf falls below
    std::uint64_t seed = 0;
    std::size_t metric_every = 1;
    std::size_t threads = 1;

    void validate(std::size_t agents) const {
        surrogate.validate();
        step.validate();
        if (max_epochs > 0 && topology.num_agents() != agents)
            throw std::invalid_argument("topology size does not match the number of agents");
        if (metric_every == 0) throw std::invalid_argument("metric cadence must be positive");
    }
};

/// Optional per-round observer; receives the round index (after the update)
/// and the agent states. Used by tests and checkpointing.
using RoundObserver = std::function<void(std::size_t, const std::vector<AgentState>&)>;

/// Runs the distributed algorithm from explicit initial weights.
inline TraceSet run_next(const RunConfig& cfg, const Problem& p, const Dataset& test, std::vector<Vector> w0,
                         const RoundObserver& observer = {}) {
    cfg.validate(p.num_agents());
    const auto q = p.arch.num_params();
    const auto start = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count(); };

    auto states = init_agents(p, std::move(w0), cfg.threads);
    const MetricContext metrics{&p, cfg.surrogate.reg, &test};
    TraceSet trace;
    double alpha = cfg.step.alpha0;
    std::uint64_t scalars = 0;
    trace.append(metrics.row(0, alpha, weights_of(states), scalars, elapsed()));
    if (observer) observer(0, states);

    for (std::size_t n = 0; n < cfg.max_epochs; ++n) {
        const auto round = cfg.topology.at(n);
        std::vector<LocalSolve> solves(states.size());
        parallel_for(states.size(), cfg.threads, [&](std::size_t i) {
            try {
                solves[i] = sca_local_update(states[i], cfg.surrogate, alpha, p.arch, p.locals[i]);
            } catch (const std::exception& e) {
                throw SolverError("round " + std::to_string(n) + ", agent " + std::to_string(i) + ": " + e.what());
            }
        });
        std::vector<Vector> previous = weights_of(states);
        consensus_round(states, round.mixing, p, cfg.threads);
        scalars += comm_account(round.graph.edge_count(), q, Exchange::next);

        if (cfg.surrogate.cores > 1) {
            for (std::size_t c = 0; c < cfg.surrogate.cores; ++c) {
                double ms = 0.0;
                for (const auto& s : solves)
                    if (c < s.block_ms.size()) ms += s.block_ms[c];
                trace.block_timings.push_back({n + 1, c, ms});
            }
        }

        double movement = 0.0;
        for (std::size_t i = 0; i < states.size(); ++i)
            movement = std::max(movement, (states[i].w - previous[i]).lpNorm<Eigen::Infinity>());
        alpha = step_size_next(alpha, cfg.step.eps);
        const bool last = (n + 1 == cfg.max_epochs) || movement < cfg.tolerance;
        if ((n + 1) % cfg.metric_every == 0 || last)
            trace.append(metrics.row(n + 1, alpha, weights_of(states), scalars, elapsed()));
        if (observer) observer(n + 1, states);
        if (last) break;
    }
    return trace;
}

/// Runs the distributed algorithm with per-agent Glorot initialisation drawn from cfg.seed.
inline TraceSet run_next(const RunConfig& cfg, const Problem& p, const Dataset& test) {
    return run_next(cfg, p, test, agent_initial_weights(p.arch, p.num_agents(), cfg.seed));
}

}  // namespace nextnn
