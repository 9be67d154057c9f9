#pragma once

// Agent communication graphs, doubly stochastic mixing matrices and
// (possibly time-varying) topology schedules.

#include "nextnn/common.hpp"

#include <cmath>
#include <functional>
#include <istream>
#include <limits>
#include <ostream>
#include <queue>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace nextnn {

/// Directed communication graph. An edge (j, i) means agent j can send to
/// agent i. Self-loops are never stored; every agent implicitly hears itself.
class Graph {
public:
    using Edge = std::pair<std::size_t, std::size_t>;

    explicit Graph(std::size_t num_agents = 1) : num_agents_(num_agents) {
        if (num_agents == 0) throw std::invalid_argument("Graph: need at least one agent");
    }

    std::size_t num_agents() const { return num_agents_; }
    const std::set<Edge>& edges() const { return edges_; }
    std::size_t edge_count() const { return edges_.size(); }

    void add_edge(std::size_t from, std::size_t to) {
        check_vertex(from);
        check_vertex(to);
        if (from != to) edges_.emplace(from, to);
    }

    void add_undirected(std::size_t a, std::size_t b) {
        add_edge(a, b);
        add_edge(b, a);
    }

    bool has_edge(std::size_t from, std::size_t to) const { return edges_.count({from, to}) != 0; }

    bool is_symmetric() const {
        return std::all_of(edges_.begin(), edges_.end(),
                           [&](const Edge& e) { return has_edge(e.second, e.first); });
    }

    /// Number of in-neighbours of i, excluding i itself.
    std::size_t in_degree(std::size_t i) const {
        std::size_t d = 0;
        for (const auto& e : edges_) d += (e.second == i);
        return d;
    }

    std::vector<std::size_t> in_neighbors(std::size_t i) const {
        std::vector<std::size_t> out;
        for (const auto& e : edges_)
            if (e.second == i) out.push_back(e.first);
        return out;
    }

    /// Union of edge sets; both graphs must have the same vertex count.
    Graph& merge(const Graph& other) {
        if (other.num_agents_ != num_agents_) throw std::invalid_argument("Graph::merge: size mismatch");
        edges_.insert(other.edges_.begin(), other.edges_.end());
        return *this;
    }

    /// Every vertex reaches every other vertex along directed edges.
    bool strongly_connected() const {
        return reaches_all(false) && reaches_all(true);
    }

    /// Edge-list text: a "# agents N" line, then one "from to" pair per line.
    void write_edge_list(std::ostream& os) const {
        os << "# agents " << num_agents_ << '\n';
        for (const auto& [from, to] : edges_) os << from << ' ' << to << '\n';
    }

    static Graph read_edge_list(std::istream& is) {
        std::vector<Edge> pairs;
        std::size_t declared = 0;
        std::size_t max_vertex = 0;
        std::string line;
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            if (line[0] == '#') {
                std::istringstream hs(line.substr(1));
                std::string key;
                if (hs >> key && key == "agents") hs >> declared;
                continue;
            }
            std::istringstream ls(line);
            std::size_t a = 0, b = 0;
            if (!(ls >> a >> b)) throw std::invalid_argument("edge list: malformed line '" + line + "'");
            pairs.emplace_back(a, b);
            max_vertex = std::max({max_vertex, a, b});
        }
        const std::size_t n = declared != 0 ? declared : (pairs.empty() ? 1 : max_vertex + 1);
        Graph g(n);
        for (const auto& [a, b] : pairs) g.add_edge(a, b);
        return g;
    }

    friend bool operator==(const Graph& a, const Graph& b) {
        return a.num_agents_ == b.num_agents_ && a.edges_ == b.edges_;
    }

private:
    void check_vertex(std::size_t v) const {
        if (v >= num_agents_) throw std::out_of_range("Graph: vertex index out of range");
    }

    bool reaches_all(bool reverse) const {
        std::vector<std::vector<std::size_t>> adj(num_agents_);
        for (const auto& [from, to] : edges_) {
            if (reverse) adj[to].push_back(from);
            else adj[from].push_back(to);
        }
        std::vector<char> seen(num_agents_, 0);
        std::queue<std::size_t> frontier;
        frontier.push(0);
        seen[0] = 1;
        std::size_t visited = 1;
        while (!frontier.empty()) {
            const auto v = frontier.front();
            frontier.pop();
            for (auto u : adj[v]) {
                if (!seen[u]) {
                    seen[u] = 1;
                    ++visited;
                    frontier.push(u);
                }
            }
        }
        return visited == num_agents_;
    }

    std::size_t num_agents_;
    std::set<Edge> edges_;
};

/// I x I matrix of combination weights; entry (i, j) is the weight agent i
/// gives to information received from agent j.
struct MixingMatrix {
    Matrix weights;

    std::size_t size() const { return static_cast<std::size_t>(weights.rows()); }
    double operator()(std::size_t i, std::size_t j) const {
        return weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }

    double row_residual() const { return (weights.rowwise().sum().array() - 1.0).abs().maxCoeff(); }
    double col_residual() const { return (weights.colwise().sum().array() - 1.0).abs().maxCoeff(); }

    /// Smallest strictly positive entry (the empirical lower bound on nonzero weights).
    double min_positive() const {
        double m = std::numeric_limits<double>::infinity();
        for (Eigen::Index k = 0; k < weights.size(); ++k) {
            const double v = weights.data()[k];
            if (v > 0.0) m = std::min(m, v);
        }
        return m;
    }

    /// Nonzeros appear exactly on the diagonal and on graph edges, and are nonnegative.
    bool matches_pattern(const Graph& g) const {
        const auto n = size();
        if (n != g.num_agents()) return false;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                const double c = (*this)(i, j);
                if (c < 0.0) return false;
                const bool allowed = (i == j) || g.has_edge(j, i);
                if ((c > 0.0) != allowed) return false;
            }
        }
        return true;
    }

    static MixingMatrix identity(std::size_t n) {
        return {Matrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n))};
    }
};

/// Undirected Erdos-Renyi graph, resampled until connected. Deterministic in seed.
inline Graph random_connected_graph(std::size_t num_agents, double edge_prob, std::uint64_t seed,
                                    std::size_t max_attempts = 10000) {
    if (num_agents == 0) throw std::invalid_argument("random_connected_graph: need at least one agent");
    if (!(edge_prob > 0.0 && edge_prob <= 1.0))
        throw std::invalid_argument("random_connected_graph: edge probability must lie in (0, 1]");
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution coin(edge_prob);
    for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
        Graph g(num_agents);
        for (std::size_t i = 0; i < num_agents; ++i)
            for (std::size_t j = i + 1; j < num_agents; ++j)
                if (coin(rng)) g.add_undirected(i, j);
        if (g.strongly_connected()) return g;
    }
    throw std::runtime_error("random_connected_graph: no connected graph after " +
                             std::to_string(max_attempts) + " attempts; parameters look infeasible");
}

/// Metropolis-Hastings weights: 1/(max(deg_i, deg_j) + 1) on edges, the
/// remainder on the diagonal. Requires a symmetric graph.
inline MixingMatrix metropolis_mixing(const Graph& g) {
    if (!g.is_symmetric()) throw std::invalid_argument("metropolis_mixing: graph must be symmetric");
    const auto n = g.num_agents();
    std::vector<std::size_t> degree(n);
    for (std::size_t i = 0; i < n; ++i) degree[i] = g.in_degree(i);

    Matrix c = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (const auto& [j, i] : g.edges())
        c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            1.0 / static_cast<double>(std::max(degree[i], degree[j]) + 1);
    for (std::size_t i = 0; i < n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        double off = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) off += c(ii, static_cast<Eigen::Index>(j));
        c(ii, ii) = 1.0 - off;
    }
    return {std::move(c)};
}

/// Communication pattern active during one round.
struct TopologyRound {
    Graph graph;
    MixingMatrix mixing;
};

/// Maps a round index to the graph and mixing matrix used in that round.
/// `window` is the B in B-strong connectivity.
class TopologySchedule {
public:
    using Generator = std::function<TopologyRound(std::size_t)>;

    TopologySchedule(Generator gen, std::size_t num_agents, std::size_t window)
        : gen_(std::move(gen)), num_agents_(num_agents), window_(window) {
        if (window_ == 0) throw std::invalid_argument("TopologySchedule: window must be positive");
    }

    static TopologySchedule fixed(const Graph& g, MixingMatrix c, std::size_t window = 1) {
        TopologyRound r{g, std::move(c)};
        const auto n = g.num_agents();
        return TopologySchedule([r](std::size_t) { return r; }, n, window);
    }

    /// Static graph with Metropolis weights.
    static TopologySchedule fixed_metropolis(const Graph& g) { return fixed(g, metropolis_mixing(g)); }

    /// Rounds repeat the given patterns in order.
    static TopologySchedule cyclic(std::vector<TopologyRound> rounds, std::size_t window) {
        if (rounds.empty()) throw std::invalid_argument("TopologySchedule::cyclic: empty pattern list");
        const auto n = rounds.front().graph.num_agents();
        return TopologySchedule(
            [rs = std::move(rounds)](std::size_t k) { return rs[k % rs.size()]; }, n, window);
    }

    TopologyRound at(std::size_t round) const { return gen_(round); }
    std::size_t num_agents() const { return num_agents_; }
    std::size_t window() const { return window_; }

private:
    Generator gen_;
    std::size_t num_agents_;
    std::size_t window_;
};

struct RoundCheck {
    std::size_t round = 0;
    double row_residual = 0.0;
    double col_residual = 0.0;
    double min_positive = 0.0;
    bool pattern_ok = false;
};

struct WindowCheck {
    std::size_t first_round = 0;
    bool strongly_connected = false;
};

struct ScheduleReport {
    std::vector<RoundCheck> rounds;
    std::vector<WindowCheck> windows;
    bool passed = false;

    double max_residual() const {
        double m = 0.0;
        for (const auto& r : rounds) m = std::max({m, r.row_residual, r.col_residual});
        return m;
    }
};

inline constexpr double kStochasticityTolerance = 1e-12;
inline constexpr double kMinWeightFloor = 1e-6;

/// Checks rounds [0, horizon): double stochasticity, sparsity pattern, a
/// positive weight floor, and strong connectivity of each complete window
/// union [kB, (k+1)B). Failures are reported, not thrown.
inline ScheduleReport validate_schedule(const TopologySchedule& s, std::size_t horizon) {
    if (horizon < s.window()) throw std::invalid_argument("validate_schedule: horizon shorter than window");
    ScheduleReport report;
    bool ok = true;
    const auto B = s.window();
    Graph window_union(s.num_agents());
    for (std::size_t n = 0; n < horizon; ++n) {
        const auto r = s.at(n);
        RoundCheck rc;
        rc.round = n;
        rc.row_residual = r.mixing.row_residual();
        rc.col_residual = r.mixing.col_residual();
        rc.min_positive = r.mixing.min_positive();
        rc.pattern_ok = r.mixing.matches_pattern(r.graph);
        ok = ok && rc.row_residual < kStochasticityTolerance && rc.col_residual < kStochasticityTolerance &&
             rc.pattern_ok && rc.min_positive > kMinWeightFloor;
        report.rounds.push_back(rc);

        window_union.merge(r.graph);
        if ((n + 1) % B == 0) {
            WindowCheck wc{n + 1 - B, window_union.strongly_connected()};
            ok = ok && wc.strongly_connected;
            report.windows.push_back(wc);
            window_union = Graph(s.num_agents());
        }
    }
    report.passed = ok;
    return report;
}

}  // namespace nextnn
