#include "nextnn/nextnn.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

int guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const nextnn::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Distributed neural-network training by in-network successive convex approximation"};
    app.require_subcommand(1);

    std::string config_path;
    std::string algo;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> cores;
    std::string out;
    std::vector<std::string> overrides;

    auto* run = app.add_subcommand("run", "Run an experiment and write traces plus summary.csv");
    run->add_option("--config", config_path, "Key = value config file")->required();
    run->add_option("--algo", algo, "fl-next, pl-next, distgrad, gd, adagrad or pl-sca");
    run->add_option("--seed", seed, "Base seed");
    run->add_option("--cores", cores, "Blocks per agent for pl-next ridge");
    run->add_option("--out", out, "Output directory");
    run->add_option("--set", overrides, "Extra key=value override (repeatable)");

    auto* validate = app.add_subcommand("validate", "Check a config without running it");
    validate->add_option("--config", config_path, "Key = value config file")->required();

    std::string summary_dir;
    auto* summarize = app.add_subcommand("summarize", "Recompute the summary table from trace files");
    summarize->add_option("dir", summary_dir, "Directory with trace_*.csv files")->required();

    CLI11_PARSE(app, argc, argv);

    auto load = [&] {
        auto cfg = nextnn::ExperimentConfig::load(config_path);
        if (!algo.empty()) cfg.set("algorithm", algo);
        if (seed) cfg.seed = *seed;
        if (cores) cfg.cores = *cores;
        if (!out.empty()) cfg.out = out;
        for (const auto& kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw nextnn::ConfigError("--set expects key=value, got '" + kv + "'");
            cfg.set(nextnn::detail::trim(kv.substr(0, eq)), nextnn::detail::trim(kv.substr(eq + 1)));
        }
        return cfg;
    };

    if (*run) {
        return guarded([&] {
            const auto cfg = load();
            const auto result = nextnn::run_experiment(cfg);
            std::cout << result.summary.algo << ' ' << result.summary.dataset << ": " << result.summary.mean << " +- "
                      << result.summary.std << " over " << result.summary.repeats << " repetitions\n";
            return 0;
        });
    }
    if (*validate) {
        return guarded([&] {
            load().validate();
            std::cout << "ok\n";
            return 0;
        });
    }
    return guarded([&] {
        nextnn::write_summary_csv(std::cout, nextnn::summarize_directory(summary_dir));
        return 0;
    });
}
