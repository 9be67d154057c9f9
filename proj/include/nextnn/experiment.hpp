#pragma once

// Experiment orchestration: flat key = value configs, repeated runs with fresh
// partitions and initialisations, trace files and summary tables.

#include "nextnn/baselines.hpp"
#include "nextnn/common.hpp"
#include "nextnn/data_io.hpp"
#include "nextnn/engine.hpp"
#include "nextnn/metrics.hpp"
#include "nextnn/topology.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace nextnn {

enum class Algorithm { fl_next, pl_next, distgrad, gd, adagrad, pl_sca };

inline std::string_view to_string(Algorithm a) {
    switch (a) {
        case Algorithm::fl_next: return "fl-next";
        case Algorithm::pl_next: return "pl-next";
        case Algorithm::distgrad: return "distgrad";
        case Algorithm::gd: return "gd";
        case Algorithm::adagrad: return "adagrad";
        default: return "pl-sca";
    }
}

inline Algorithm parse_algorithm(std::string_view s) {
    for (auto a : {Algorithm::fl_next, Algorithm::pl_next, Algorithm::distgrad, Algorithm::gd, Algorithm::adagrad,
                   Algorithm::pl_sca})
        if (to_string(a) == s) return a;
    throw ConfigError("unknown algorithm '" + std::string(s) + "'");
}

struct ExperimentConfig {
    std::string dataset;  // CSV path, or "synthetic"
    std::string schema;   // schema path (ignored for synthetic data)
    std::string name;     // label used in file names and the summary; defaults to the dataset stem
    Algorithm algorithm = Algorithm::pl_next;
    LossKind loss = LossKind::squared;
    RegKind regularizer = RegKind::l2;
    double lambda = 0.1;
    std::optional<double> tau;  // default: 0 for ridge, 1 otherwise
    std::vector<std::size_t> hidden{10};
    std::optional<Activation> output_activation;  // default: sigmoid for cross-entropy, tanh otherwise
    std::size_t agents = 10;
    double edge_prob = 0.2;
    double alpha0 = 0.5;
    double epsilon = 0.01;
    double eta0 = 1e-3;  // DistGrad initial step
    double eta = 1e-3;   // GD / AdaGrad fixed step
    std::size_t max_epochs = 1000;
    std::size_t repeats = 1;
    std::size_t cores = 1;
    std::size_t block_workers = 1;
    std::uint64_t seed = 1;
    std::string out = "out";
    double test_frac = 0.2;
    double tolerance = 1e-8;
    std::size_t metric_every = 1;
    std::size_t threads = 1;
    std::optional<std::size_t> inner_max_iter;
    std::optional<double> inner_tol;
    std::optional<double> inner_step;
    std::size_t synthetic_samples = 400;
    std::size_t synthetic_inputs = 5;
    double synthetic_noise = 0.05;

    Activation activation() const {
        if (output_activation) return *output_activation;
        return loss == LossKind::cross_entropy ? Activation::sigmoid : Activation::tanh;
    }

    double effective_tau() const {
        if (tau) return *tau;
        const bool ridge = regularizer == RegKind::l2 && loss == LossKind::squared;
        return ridge || (algorithm == Algorithm::fl_next && regularizer == RegKind::l2) ? 0.0 : 1.0;
    }

    std::string label() const {
        if (!name.empty()) return name;
        if (dataset == "synthetic") return "synthetic";
        return std::filesystem::path(dataset).stem().string();
    }

    bool distributed() const {
        return algorithm == Algorithm::fl_next || algorithm == Algorithm::pl_next || algorithm == Algorithm::distgrad;
    }

    NetArch arch(std::size_t input_dim) const { return {input_dim, hidden, activation()}; }

    Regularizer regularizer_for(const NetArch& a) const {
        switch (regularizer) {
            case RegKind::l2: return Regularizer::l2(lambda);
            case RegKind::l1: return Regularizer::l1(lambda);
            default: return Regularizer::group(lambda, neuron_groups(a));
        }
    }

    SurrogateSpec surrogate(const NetArch& a) const {
        SurrogateSpec s;
        s.strategy = algorithm == Algorithm::pl_next ? Strategy::pl : Strategy::fl;
        s.loss = loss;
        s.reg = regularizer_for(a);
        s.tau = effective_tau();
        s.cores = cores;
        s.block_workers = block_workers;
        auto apply = [&](InnerSettings& in) {
            if (inner_max_iter) in.max_iterations = *inner_max_iter;
            if (inner_tol) in.gradient_tolerance = *inner_tol;
            if (inner_step) in.initial_step = *inner_step;
        };
        apply(s.prox);
        apply(s.adaptive);
        return s;
    }

    /// Throws ConfigError describing the first problem found.
    void validate(bool check_files = true) const {
        auto fail = [](const std::string& msg) { throw ConfigError(msg); };
        if (dataset.empty()) fail("dataset is required");
        if (check_files && dataset != "synthetic") {
            if (!std::filesystem::exists(dataset)) fail("dataset file not found: " + dataset);
            if (schema.empty()) fail("schema is required for CSV datasets");
            if (!std::filesystem::exists(schema)) fail("schema file not found: " + schema);
        }
        if (!(lambda > 0.0)) fail("lambda must be positive");
        if (loss == LossKind::cross_entropy && activation() != Activation::sigmoid)
            fail("cross-entropy loss requires a sigmoid output activation");
        for (auto h : hidden)
            if (h == 0) fail("hidden widths must be positive");
        if (agents == 0) fail("agents must be positive");
        if (!(edge_prob > 0.0 && edge_prob <= 1.0)) fail("edge_prob must lie in (0, 1]");
        if (!(test_frac > 0.0 && test_frac < 1.0)) fail("test_frac must lie in (0, 1)");
        if (repeats == 0) fail("repeats must be positive");
        if (metric_every == 0) fail("metric_every must be positive");
        if (threads == 0 || block_workers == 0) fail("thread counts must be positive");
        try {
            switch (algorithm) {
                case Algorithm::fl_next:
                case Algorithm::pl_next: {
                    StepSizeSchedule{alpha0, epsilon}.validate();
                    SurrogateSpec s = surrogate(arch(1));
                    s.validate();
                    break;
                }
                case Algorithm::distgrad:
                    StepSizeSchedule{eta0, epsilon}.validate();
                    if (regularizer != RegKind::l2) fail("distgrad needs the differentiable l2 regulariser");
                    break;
                case Algorithm::pl_sca:
                    StepSizeSchedule{alpha0, epsilon}.validate();
                    if (loss != LossKind::squared || regularizer != RegKind::l2)
                        fail("pl-sca supports squared loss with l2 regularisation only");
                    break;
                default:
                    if (!(eta > 0.0)) fail("eta must be positive");
                    if (regularizer != RegKind::l2) fail("gd/adagrad need the differentiable l2 regulariser");
            }
        } catch (const ConfigError&) {
            throw;
        } catch (const std::invalid_argument& e) {
            fail(e.what());
        }
        if (cores > 1 && !(algorithm == Algorithm::pl_next && regularizer == RegKind::l2 && loss == LossKind::squared))
            fail("cores > 1 is only supported for pl-next with squared loss and l2 regularisation");
    }

    /// Applies one key = value setting; relative paths resolve against `base_dir`.
    void set(const std::string& key, const std::string& value, const std::filesystem::path& base_dir = {}) {
        auto to_size = [&](const std::string& v) {
            std::size_t used = 0;
            long long x = 0;
            try {
                x = std::stoll(v, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != v.size() || x < 0) throw ConfigError("'" + key + "' expects a nonnegative integer, got '" + v + "'");
            return static_cast<std::size_t>(x);
        };
        auto to_double = [&](const std::string& v) {
            std::size_t used = 0;
            double x = 0.0;
            try {
                x = std::stod(v, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != v.size()) throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
            return x;
        };
        auto path = [&](const std::string& v) {
            if (v == "synthetic" || v.empty()) return v;
            std::filesystem::path p(v);
            return (p.is_relative() && !base_dir.empty() ? base_dir / p : p).lexically_normal().string();
        };
        try {
            if (key == "dataset") dataset = path(value);
            else if (key == "schema") schema = path(value);
            else if (key == "name") name = value;
            else if (key == "algorithm") algorithm = parse_algorithm(value);
            else if (key == "loss") loss = parse_loss(value);
            else if (key == "regularizer") regularizer = parse_reg(value);
            else if (key == "lambda") lambda = to_double(value);
            else if (key == "tau") tau = to_double(value);
            else if (key == "hidden") {
                hidden.clear();
                std::stringstream ss(value);
                std::string part;
                while (std::getline(ss, part, ','))
                    if (!detail::trim(part).empty()) hidden.push_back(to_size(detail::trim(part)));
            } else if (key == "output_activation") output_activation = parse_activation(value);
            else if (key == "agents") agents = to_size(value);
            else if (key == "edge_prob") edge_prob = to_double(value);
            else if (key == "alpha0") alpha0 = to_double(value);
            else if (key == "epsilon") epsilon = to_double(value);
            else if (key == "eta0") eta0 = to_double(value);
            else if (key == "eta") eta = to_double(value);
            else if (key == "max_epochs") max_epochs = to_size(value);
            else if (key == "repeats") repeats = to_size(value);
            else if (key == "cores") cores = to_size(value);
            else if (key == "block_workers") block_workers = to_size(value);
            else if (key == "seed") seed = to_size(value);
            else if (key == "out") out = path(value);
            else if (key == "test_frac") test_frac = to_double(value);
            else if (key == "tolerance") tolerance = to_double(value);
            else if (key == "metric_every") metric_every = to_size(value);
            else if (key == "threads") threads = to_size(value);
            else if (key == "inner_max_iter") inner_max_iter = to_size(value);
            else if (key == "inner_tol") inner_tol = to_double(value);
            else if (key == "inner_step") inner_step = to_double(value);
            else if (key == "synthetic_samples") synthetic_samples = to_size(value);
            else if (key == "synthetic_inputs") synthetic_inputs = to_size(value);
            else if (key == "synthetic_noise") synthetic_noise = to_double(value);
            else throw ConfigError("unknown config key '" + key + "'");
        } catch (const ConfigError&) {
            throw;
        } catch (const std::invalid_argument& e) {
            throw ConfigError(key + ": " + e.what());
        }
    }

    static ExperimentConfig parse(std::istream& is, const std::filesystem::path& base_dir = {}) {
        ExperimentConfig cfg;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(is, line)) {
            ++line_no;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            if (detail::trim(line).empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
            cfg.set(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)), base_dir);
        }
        return cfg;
    }

    static ExperimentConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config '" + path + "'");
        return parse(in, std::filesystem::path(path).parent_path());
    }
};

/// Derives an independent 64-bit seed from (base, repetition, purpose).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t rep, std::uint64_t purpose) {
    std::seed_seq seq{base, rep, purpose};
    std::uint64_t out = 0;
    seq.generate(&out, &out + 1);
    return out;
}

inline Dataset load_experiment_data(const ExperimentConfig& cfg) {
    if (cfg.dataset == "synthetic") {
        const NetArch teacher{cfg.synthetic_inputs, {5}, Activation::tanh};
        return synthetic_regression(teacher, cfg.synthetic_samples, cfg.synthetic_noise, derive_seed(cfg.seed, 0, 7));
    }
    return load_dataset(cfg.dataset, read_schema_file(cfg.schema));
}

/// Mean and sample standard deviation (0 for a single value).
inline std::pair<double, double> mean_std(const std::vector<double>& xs) {
    if (xs.empty()) return {0.0, 0.0};
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    if (xs.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

struct SummaryRow {
    std::string algo;
    std::string dataset;
    double mean = 0.0;
    double std = 0.0;
    std::size_t repeats = 0;
};

inline void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows) {
    os << "algo,dataset,mean,std,repeats\n" << std::setprecision(17);
    for (const auto& r : rows) os << r.algo << ',' << r.dataset << ',' << r.mean << ',' << r.std << ',' << r.repeats << '\n';
}

inline std::string trace_file_name(std::string_view algo, const std::string& dataset, std::size_t rep) {
    return "trace_" + std::string(algo) + "_" + dataset + "_rep" + std::to_string(rep) + ".csv";
}

struct ExperimentResult {
    std::vector<TraceSet> traces;
    SummaryRow summary;
};

/// Runs one repetition and returns its trace. Rep r uses fresh partition and
/// initialisation seeds; the communication graph depends only on cfg.seed.
inline TraceSet run_repetition(const ExperimentConfig& cfg, const Dataset& data, std::size_t rep,
                               Graph* graph_out = nullptr) {
    const auto parts = split_and_partition(data, cfg.test_frac, cfg.distributed() ? cfg.agents : 1,
                                           derive_seed(cfg.seed, rep, 1));
    const NetArch arch = cfg.arch(data.dim());
    const Problem problem{arch, parts.locals, cfg.loss};
    const auto init_seed = derive_seed(cfg.seed, rep, 2);

    if (!cfg.distributed()) {
        CentralizedConfig cc;
        cc.kind = cfg.algorithm == Algorithm::gd        ? CentralizedKind::gd
                  : cfg.algorithm == Algorithm::adagrad ? CentralizedKind::adagrad
                                                        : CentralizedKind::pl_sca;
        cc.reg = cfg.regularizer_for(arch);
        cc.eta = cfg.eta;
        cc.step = {cfg.alpha0, cfg.epsilon};
        cc.max_epochs = cfg.max_epochs;
        cc.metric_every = cfg.metric_every;
        return run_centralized(cc, problem, parts.test, agent_initial_weights(arch, 1, init_seed).front());
    }

    const Graph g = random_connected_graph(cfg.agents, cfg.edge_prob, derive_seed(cfg.seed, 0, 3));
    if (graph_out) *graph_out = g;
    auto schedule = TopologySchedule::fixed_metropolis(g);
    auto w0 = agent_initial_weights(arch, cfg.agents, init_seed);
    if (cfg.algorithm == Algorithm::distgrad) {
        DistGradConfig dc;
        dc.reg = cfg.regularizer_for(arch);
        dc.topology = schedule;
        dc.step = {cfg.eta0, cfg.epsilon};
        dc.max_epochs = cfg.max_epochs;
        dc.metric_every = cfg.metric_every;
        dc.threads = cfg.threads;
        return run_distgrad(dc, problem, parts.test, std::move(w0));
    }
    RunConfig rc;
    rc.surrogate = cfg.surrogate(arch);
    rc.topology = schedule;
    rc.step = {cfg.alpha0, cfg.epsilon};
    rc.max_epochs = cfg.max_epochs;
    rc.tolerance = cfg.tolerance;
    rc.seed = init_seed;
    rc.metric_every = cfg.metric_every;
    rc.threads = cfg.threads;
    return run_next(rc, problem, parts.test, std::move(w0));
}

/// Runs all repetitions, writing one trace CSV per repetition, block timings
/// when cores > 1, the graph edge list, and summary.csv into cfg.out.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const Dataset data = load_experiment_data(cfg);
    const auto label = cfg.label();
    const auto algo = to_string(cfg.algorithm);
    std::filesystem::create_directories(cfg.out);
    const std::filesystem::path out_dir(cfg.out);

    ExperimentResult result;
    std::vector<double> finals;
    for (std::size_t rep = 0; rep < cfg.repeats; ++rep) {
        Graph g(1);
        auto trace = run_repetition(cfg, data, rep, &g);
        {
            std::ofstream os(out_dir / trace_file_name(algo, label, rep));
            trace.write_csv(os);
        }
        if (!trace.block_timings.empty()) {
            std::ofstream os(out_dir / ("blocks_" + std::string(algo) + "_" + label + "_rep" + std::to_string(rep) + ".csv"));
            trace.write_block_csv(os);
        }
        if (rep == 0 && cfg.distributed()) {
            std::ofstream os(out_dir / ("graph_" + label + ".txt"));
            g.write_edge_list(os);
        }
        finals.push_back(trace.last().test_metric);
        result.traces.push_back(std::move(trace));
    }
    const auto [mean, sd] = mean_std(finals);
    result.summary = {std::string(algo), label, mean, sd, cfg.repeats};
    std::ofstream os(out_dir / "summary.csv");
    write_summary_csv(os, {result.summary});
    return result;
}

/// Rebuilds summary rows from the trace files in a directory.
inline std::vector<SummaryRow> summarize_directory(const std::string& dir) {
    std::map<std::pair<std::string, std::string>, std::vector<std::pair<std::size_t, double>>> groups;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const auto file = entry.path().filename().string();
        if (file.rfind("trace_", 0) != 0 || entry.path().extension() != ".csv") continue;
        const auto body = file.substr(6, file.size() - 6 - 4);
        const auto first = body.find('_');
        const auto rep_at = body.rfind("_rep");
        if (first == std::string::npos || rep_at == std::string::npos || rep_at <= first) continue;
        std::ifstream in(entry.path());
        const auto trace = TraceSet::read_csv(in);
        const auto rep = static_cast<std::size_t>(std::stoull(body.substr(rep_at + 4)));
        groups[{body.substr(0, first), body.substr(first + 1, rep_at - first - 1)}].emplace_back(
            rep, trace.last().test_metric);
    }
    std::vector<SummaryRow> rows;
    for (auto& [key, values] : groups) {
        std::sort(values.begin(), values.end());
        std::vector<double> xs;
        for (const auto& v : values) xs.push_back(v.second);
        const auto [mean, sd] = mean_std(xs);
        rows.push_back({key.first, key.second, mean, sd, xs.size()});
    }
    return rows;
}

}  // namespace nextnn
