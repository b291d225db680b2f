// Command-line driver: training runs, parameter sweeps, convergence
// diagnostics and the kernel self-test, with CSV/SVG outputs.
//
// Exit codes: 0 success, 1 divergence or failed checks, 2 invalid
// configuration or degenerate data.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "rkflow/rkflow.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailure = 1;
constexpr int kExitBadConfig = 2;

struct CommonOptions {
    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool emit_svg = false;
    int jobs = 1;
};

rkflow::ExperimentConfig resolve_config(const CommonOptions& options) {
    rkflow::ExperimentConfig config;
    if (!options.config_path.empty()) {
        config = rkflow::load_experiment_config(options.config_path);
    }
    if (options.seed_set) config.seed = options.seed;
    return config;
}

void add_common(CLI::App* cmd, CommonOptions& options) {
    cmd->add_option("--config", options.config_path,
                    "JSON config file (flat object of scalars and lists)");
    cmd->add_option("--out", options.out_dir, "output directory");
    cmd->add_option("--seed", options.seed, "override the config seed")
        ->each([&options](const std::string&) { options.seed_set = true; });
    cmd->add_flag("--emit-svg", options.emit_svg,
                  "also render loss curves as SVG");
    cmd->add_option("--jobs", options.jobs, "worker threads for sweep cells")
        ->check(CLI::PositiveNumber);
}

int do_train(const CommonOptions& options) {
    const auto config = resolve_config(options);
    const auto out = rkflow::run_train(config, options.out_dir);
    if (options.emit_svg) {
        std::vector<double> losses;
        for (const auto& s : out.log.steps) losses.push_back(s.loss);
        rkflow::write_loss_curves_svg(
            {losses}, {"loss"},
            std::filesystem::path(options.out_dir) / "train_loss.svg");
    }
    std::printf("status: %s\n", rkflow::to_string(out.log.status).c_str());
    std::printf("steps: %zu\n", out.log.steps.size());
    std::printf("final_loss: %s\n", rkflow::fmt17(out.log.final_loss()).c_str());
    if (out.report) {
        std::printf("init_condition: %s (lhs=%s R=%s, %s)\n",
                    out.report->init_satisfied ? "satisfied" : "not-satisfied",
                    rkflow::fmt17(out.report->init_lhs).c_str(),
                    rkflow::fmt17(out.report->R).c_str(),
                    out.report->certified ? "certified" : "empirical");
    } else {
        std::printf(
            "init_condition: unavailable (outside the certified regime and no "
            "trajectory lambda recorded)\n");
    }
    return out.log.status == rkflow::TrainStatus::diverged ? kExitCheckFailure
                                                           : kExitOk;
}

int do_sweep(const CommonOptions& options, rkflow::SweepParam param) {
    const auto config = resolve_config(options);
    const auto summary =
        rkflow::run_sweep(config, param, options.out_dir, options.jobs);
    const std::string name = param == rkflow::SweepParam::q ? "q" : "q_int";
    for (std::size_t p = 0; p < summary.param_values.size(); ++p) {
        std::printf("%s=%d mean_final_loss=%s\n", name.c_str(),
                    summary.param_values[p],
                    rkflow::fmt17(summary.mean_loss[p].back()).c_str());
    }
    if (options.emit_svg) {
        const auto svg = std::filesystem::path(options.out_dir) /
                         ("sweep_" + std::string(param == rkflow::SweepParam::q
                                                     ? "q"
                                                     : "qint") +
                          ".svg");
        rkflow::write_sweep_svg(summary, name, svg);
    }
    if (summary.divergences > 0) {
        std::printf("divergent cells: %d (see divergences.txt)\n",
                    summary.divergences);
        return kExitCheckFailure;
    }
    return kExitOk;
}

int do_diagnose(const CommonOptions& options) {
    const auto config = resolve_config(options);
    const auto out = rkflow::run_diagnose(config, options.out_dir);
    std::printf("kappa_hat = %s\n", rkflow::fmt17(out.kappa_hat).c_str());
    std::printf("trajectory_lambda_min = %s\n",
                rkflow::fmt17(out.trajectory_lambda_min).c_str());
    std::printf("init_condition %s (lhs=%s, R=%s, mu=%s, %s)\n",
                out.report.init_satisfied ? "PASS" : "FAIL",
                rkflow::fmt17(out.report.init_lhs).c_str(),
                rkflow::fmt17(out.report.R).c_str(),
                rkflow::fmt17(out.report.mu).c_str(),
                out.report.certified ? "certified" : "empirical");
    std::printf("trajectory_separation_bound %s (margin=%s)\n",
                out.bounds.separation_ok ? "PASS" : "FAIL",
                rkflow::fmt17(out.bounds.separation_margin).c_str());
    std::printf("adjoint_norm_bounds %s (low=%s, high=%s)\n",
                out.bounds.adjoint_ok ? "PASS" : "FAIL",
                rkflow::fmt17(out.bounds.adjoint_lower_margin).c_str(),
                rkflow::fmt17(out.bounds.adjoint_upper_margin).c_str());
    return out.all_ok ? kExitOk : kExitCheckFailure;
}

int do_kernel_selftest(const CommonOptions& options) {
    const auto config = resolve_config(options);
    const auto checks = rkflow::run_kernel_selftest(config);
    bool all_ok = true;
    for (const auto& check : checks) {
        std::printf("%s %s %s\n", check.name.c_str(),
                    check.passed ? "PASS" : "FAIL", check.detail.c_str());
        all_ok = all_ok && check.passed;
    }
    return all_ok ? kExitOk : kExitCheckFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"flow networks with random-feature kernel residuals"};
    app.require_subcommand(1);

    CommonOptions options;
    auto* train = app.add_subcommand("train", "single full-batch GD run");
    auto* sweep_q =
        app.add_subcommand("sweep-q", "sweep the embedding dimension q");
    auto* sweep_qint =
        app.add_subcommand("sweep-qint", "sweep the feature count q_int");
    auto* diagnose = app.add_subcommand(
        "diagnose", "convergence-condition and trajectory-bound report");
    auto* selftest = app.add_subcommand(
        "kernel-selftest", "kernel and feature-sampling consistency checks");
    for (auto* cmd : {train, sweep_q, sweep_qint, diagnose, selftest}) {
        add_common(cmd, options);
    }

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return do_train(options);
        if (sweep_q->parsed()) return do_sweep(options, rkflow::SweepParam::q);
        if (sweep_qint->parsed()) {
            return do_sweep(options, rkflow::SweepParam::q_int);
        }
        if (diagnose->parsed()) return do_diagnose(options);
        if (selftest->parsed()) return do_kernel_selftest(options);
    } catch (const rkflow::divergence_error& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return kExitCheckFailure;
    } catch (const rkflow::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitBadConfig;
    } catch (const rkflow::degenerate_data_error& e) {
        std::cerr << "degenerate data: " << e.what() << "\n";
        return kExitBadConfig;
    } catch (const rkflow::invalid_kernel_error& e) {
        std::cerr << "invalid kernel: " << e.what() << "\n";
        return kExitBadConfig;
    } catch (const rkflow::invalid_dimension_error& e) {
        std::cerr << "invalid dimensions: " << e.what() << "\n";
        return kExitBadConfig;
    } catch (const rkflow::io_error& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitBadConfig;
    } catch (const rkflow::error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitBadConfig;
    }
    return kExitBadConfig;
}
