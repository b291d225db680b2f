#pragma once

#include <json.hpp>

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "rkflow/diagnostics.hpp"
#include "rkflow/trainer.hpp"

namespace rkflow {

// Flat experiment configuration; every field has a default so a config file
// only lists overrides.  The effective (fully resolved) config is written
// into each output directory for provenance.
struct ExperimentConfig {
    int N = 10;
    int d = 2;
    int d_prime = 2;
    double noise = 0.2;
    std::string dataset_path;  // optional CSV; overrides synthesis

    double nu = 2.5;
    int q = 30;
    int q_int = 60;
    int L = 32;

    double eta = 1.0;
    int max_steps = 500;
    double target_loss = 1e-10;
    double init_scale = 0.0;

    std::uint64_t seed = 42;
    int replicates = 12;

    // empty = per-command default (train/sweep: inject_sum,
    // diagnose: scaled_replicate)
    std::string embedding;

    std::vector<int> q_values = {2, 8, 32};
    std::vector<int> q_int_values = {8, 30, 120};
    int q_int_factor = 2;  // sweep-q sets q_int = factor * q when > 0

    double R = 1.0;
    bool record_lambda_min = true;
    std::string checkpoint;  // diagnose: optional control path file
    bool negative_control = false;

    KernelSpec spec() const { return KernelSpec{nu}; }

    void validate() const {
        if (N < 1) throw config_error("N must be >= 1");
        if (d < 1 || d_prime < 1) throw config_error("d and d' must be >= 1");
        if (replicates < 1) throw config_error("replicates must be >= 1");
        if (q_values.empty() || q_int_values.empty()) {
            throw config_error("sweep lists must be nonempty");
        }
        if (R <= 0.0) throw config_error("R must be > 0");
        spec().require_valid();
        TrainConfig probe = train_config(EmbeddingVariant::InjectSum);
        probe.validate();
    }

    TrainConfig train_config(EmbeddingVariant variant) const {
        TrainConfig tc;
        tc.q = q;
        tc.q_int = q_int;
        tc.L = L;
        tc.spec = spec();
        tc.embedding = variant;
        tc.eta = eta;
        tc.max_steps = max_steps;
        tc.target_loss = target_loss;
        tc.seed = seed;
        tc.init_scale = init_scale;
        tc.record_lambda_min = record_lambda_min;
        return tc;
    }

    EmbeddingVariant embedding_for(EmbeddingVariant command_default) const {
        return embedding.empty() ? command_default
                                 : embedding_variant_from_string(embedding);
    }
};

namespace detail {

inline double nu_from_json(const nlohmann::json& value) {
    if (value.is_string()) {
        const std::string s = value.get<std::string>();
        if (s == "inf" || s == "infinity") {
            return std::numeric_limits<double>::infinity();
        }
        throw config_error("nu must be a number or \"inf\", got: " + s);
    }
    return value.get<double>();
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
    ExperimentConfig c;
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "N") c.N = value.get<int>();
            else if (key == "d") c.d = value.get<int>();
            else if (key == "d_prime") c.d_prime = value.get<int>();
            else if (key == "noise") c.noise = value.get<double>();
            else if (key == "dataset_path") c.dataset_path = value.get<std::string>();
            else if (key == "nu") c.nu = detail::nu_from_json(value);
            else if (key == "q") c.q = value.get<int>();
            else if (key == "q_int") c.q_int = value.get<int>();
            else if (key == "L") c.L = value.get<int>();
            else if (key == "eta") c.eta = value.get<double>();
            else if (key == "max_steps") c.max_steps = value.get<int>();
            else if (key == "target_loss") c.target_loss = value.get<double>();
            else if (key == "init_scale") c.init_scale = value.get<double>();
            else if (key == "seed") c.seed = value.get<std::uint64_t>();
            else if (key == "replicates") c.replicates = value.get<int>();
            else if (key == "embedding") c.embedding = value.get<std::string>();
            else if (key == "q_values") c.q_values = value.get<std::vector<int>>();
            else if (key == "q_int_values") c.q_int_values = value.get<std::vector<int>>();
            else if (key == "q_int_factor") c.q_int_factor = value.get<int>();
            else if (key == "R") c.R = value.get<double>();
            else if (key == "record_lambda_min") c.record_lambda_min = value.get<bool>();
            else if (key == "checkpoint") c.checkpoint = value.get<std::string>();
            else if (key == "negative_control") c.negative_control = value.get<bool>();
            else throw config_error("unknown config key: " + key);
        } catch (const nlohmann::json::exception& e) {
            throw config_error("bad value for config key '" + key + "': " + e.what());
        }
    }
    return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw config_error("cannot open config file: " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw config_error("config parse error in " + path + ": " + e.what());
    }
    if (!j.is_object()) throw config_error("config must be a JSON object");
    return parse_experiment_config(j);
}

inline nlohmann::json experiment_config_to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["N"] = c.N;
    j["d"] = c.d;
    j["d_prime"] = c.d_prime;
    j["noise"] = c.noise;
    j["dataset_path"] = c.dataset_path;
    if (std::isinf(c.nu)) j["nu"] = "inf"; else j["nu"] = c.nu;
    j["q"] = c.q;
    j["q_int"] = c.q_int;
    j["L"] = c.L;
    j["eta"] = c.eta;
    j["max_steps"] = c.max_steps;
    j["target_loss"] = c.target_loss;
    j["init_scale"] = c.init_scale;
    j["seed"] = c.seed;
    j["replicates"] = c.replicates;
    j["embedding"] = c.embedding;
    j["q_values"] = c.q_values;
    j["q_int_values"] = c.q_int_values;
    j["q_int_factor"] = c.q_int_factor;
    j["R"] = c.R;
    j["record_lambda_min"] = c.record_lambda_min;
    j["checkpoint"] = c.checkpoint;
    j["negative_control"] = c.negative_control;
    return j;
}

inline void write_effective_config(const ExperimentConfig& c,
                                   const std::filesystem::path& out_dir) {
    std::ofstream os(out_dir / "config.json");
    if (!os) throw io_error("cannot write config provenance");
    os << experiment_config_to_json(c).dump(2) << "\n";
}

// Synthetic regression batch: x ~ N(0, Id_d) and y = -x + noise * eps when
// the dimensions match, otherwise y = noise * eps (flagged to stderr).
// Resamples under a fresh sub-seed in the measure-zero event of coincident
// inputs.
inline Dataset synth_dataset(int n, int d, int d_prime, double noise,
                             std::uint64_t seed) {
    if (n < 1 || d < 1 || d_prime < 1) {
        throw invalid_dimension_error("synth_dataset: bad dimensions");
    }
    if (d != d_prime) {
        std::cerr << "synth_dataset: d != d', targets are pure noise\n";
    }
    for (std::uint64_t attempt = 0;; ++attempt) {
        SplitMix64 rng(derive_seed(seed, seed_stream::kDataset, attempt));
        Eigen::MatrixXd x(d, n), y(d_prime, n);
        for (int c = 0; c < n; ++c) {
            for (int r = 0; r < d; ++r) x(r, c) = rng.next_normal();
            for (int r = 0; r < d_prime; ++r) y(r, c) = noise * rng.next_normal();
            if (d == d_prime) y.col(c) -= x.col(c);
        }
        Dataset data = make_dataset(std::move(x), std::move(y));
        if (n == 1 || data.separation() > 0.0) return data;
        if (attempt > 100) {
            throw degenerate_data_error("synth_dataset: cannot separate inputs");
        }
    }
}

inline Dataset dataset_for(const ExperimentConfig& config) {
    if (!config.dataset_path.empty()) {
        return load_dataset_csv(config.dataset_path);
    }
    return synth_dataset(config.N, config.d, config.d_prime, config.noise,
                         config.seed);
}

// --- single training run -----------------------------------------------------

struct RunOutput {
    TrainLog log;
    std::optional<PLReport> report;
    ControlPath control;
};

namespace detail {

inline double run_lambda_min(const TrainLog& log) {
    double lambda = std::numeric_limits<double>::infinity();
    for (const auto& s : log.steps) {
        if (!std::isnan(s.lambda_min)) lambda = std::min(lambda, s.lambda_min);
    }
    return lambda;
}

// Builds the per-run report; absent when the instance sits outside the
// certified separation regime and no trajectory lambda was recorded.
inline std::optional<PLReport> report_for_run(const Dataset& data,
                                              const EmbeddingPair& pair,
                                              const KernelSpec& spec,
                                              const FeatureBank& bank,
                                              const TrainLog& log, double R) {
    const double kappa_hat = empirical_kappa_hat(bank);
    const double loss0 = log.steps.empty() ? 0.0 : log.steps.front().loss;
    const double r0 = log.steps.empty() ? 0.0 : log.steps.front().v_norm;
    const double lambda = run_lambda_min(log);
    std::optional<double> empirical;
    if (std::isfinite(lambda)) empirical = lambda;
    try {
        return init_condition(data, pair, spec, kappa_hat, R, r0, loss0,
                              empirical);
    } catch (const invalid_input_error&) {
        return std::nullopt;
    }
}

}  // namespace detail

inline RunOutput run_single_cell(const ExperimentConfig& config,
                                 const TrainConfig& tc, const Dataset& data,
                                 bool throw_on_divergence) {
    const FeatureBank bank =
        sample_features(tc.q, tc.q_int, tc.spec,
                        derive_seed(tc.seed, seed_stream::kBank));
    const EmbeddingPair pair =
        build_embedding(tc.q, data.d(), data.d_prime(), tc.embedding);
    ControlPath control = init_control(tc, bank);
    TrainResult trained = gd_train_from(tc, data, bank, pair,
                                        std::move(control), throw_on_divergence);
    RunOutput out;
    out.log = std::move(trained.log);
    out.control = std::move(trained.control);
    if (out.log.status != TrainStatus::diverged) {
        out.report = detail::report_for_run(data, pair, tc.spec, bank, out.log,
                                            config.R);
        if (out.report) out.log.report = *out.report;
    }
    return out;
}

inline RunOutput run_train(const ExperimentConfig& config,
                           const std::filesystem::path& out_dir) {
    config.validate();
    std::filesystem::create_directories(out_dir);
    write_effective_config(config, out_dir);

    const Dataset data = dataset_for(config);
    save_dataset_csv(data, (out_dir / "dataset.csv").string());
    const TrainConfig tc =
        config.train_config(config.embedding_for(EmbeddingVariant::InjectSum));
    RunOutput out = run_single_cell(config, tc, data, true);
    save_train_log_csv(out.log, (out_dir / "train_log.csv").string());
    if (out.report) {
        save_pl_report(*out.report, (out_dir / "pl_report.txt").string());
    }
    save_control_path(out.control, (out_dir / "control.rkcp").string());
    return out;
}

// --- sweeps -------------------------------------------------------------------

enum class SweepParam { q, q_int };

struct SweepCellResult {
    int param_value = 0;
    int replicate = 0;
    TrainStatus status = TrainStatus::max_steps;
    int diverged_at = -1;
    std::vector<double> losses;  // padded to max_steps + 1 entries
    std::optional<TrainLog> log;  // retained when keep_logs is requested
};

struct SweepSummary {
    std::vector<int> param_values;
    // mean/std loss curves indexed [param][step]
    std::vector<std::vector<double>> mean_loss;
    std::vector<std::vector<double>> std_loss;
    std::vector<SweepCellResult> cells;
    int divergences = 0;
};

namespace detail {

inline std::vector<double> padded_losses(const TrainLog& log, int max_steps) {
    std::vector<double> losses;
    losses.reserve(max_steps + 1);
    for (const auto& s : log.steps) losses.push_back(s.loss);
    while (static_cast<int>(losses.size()) < max_steps + 1) {
        losses.push_back(losses.empty() ? 0.0 : losses.back());
    }
    return losses;
}

}  // namespace detail

inline SweepSummary run_sweep(const ExperimentConfig& config, SweepParam param,
                              const std::filesystem::path& out_dir,
                              int jobs = 1, bool keep_logs = false) {
    config.validate();
    std::filesystem::create_directories(out_dir);
    write_effective_config(config, out_dir);

    const std::string param_name = param == SweepParam::q ? "q" : "q_int";
    const std::vector<int>& values =
        param == SweepParam::q ? config.q_values : config.q_int_values;
    const EmbeddingVariant variant =
        config.embedding_for(EmbeddingVariant::InjectSum);

    // one dataset per replicate, shared across parameter values
    std::vector<Dataset> datasets;
    for (int r = 0; r < config.replicates; ++r) {
        if (!config.dataset_path.empty()) {
            datasets.push_back(load_dataset_csv(config.dataset_path));
        } else {
            datasets.push_back(synth_dataset(
                config.N, config.d, config.d_prime, config.noise,
                derive_seed(config.seed, seed_stream::kDataset, r)));
        }
    }

    struct Cell {
        int param_index;
        int replicate;
        std::filesystem::path dir;
    };
    std::vector<Cell> cells;
    for (std::size_t p = 0; p < values.size(); ++p) {
        for (int r = 0; r < config.replicates; ++r) {
            const auto dir = out_dir / "cells" /
                             (param_name + "=" + std::to_string(values[p])) /
                             ("rep=" + std::to_string(r));
            std::filesystem::create_directories(dir);
            cells.push_back({static_cast<int>(p), r, dir});
        }
    }

    std::vector<SweepCellResult> results(cells.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr worker_error;
    std::mutex worker_error_mutex;
    auto worker = [&]() {
        for (;;) {
            const std::size_t idx = next.fetch_add(1);
            if (idx >= cells.size()) return;
            const Cell& cell = cells[idx];
            try {
                TrainConfig tc = config.train_config(variant);
                if (param == SweepParam::q) {
                    tc.q = values[cell.param_index];
                    if (config.q_int_factor > 0) {
                        tc.q_int = config.q_int_factor * tc.q;
                    }
                } else {
                    tc.q_int = values[cell.param_index];
                }
                tc.seed =
                    derive_seed(config.seed, 0x43454C4Cull, cell.replicate);

                SweepCellResult& out = results[idx];
                out.param_value = values[cell.param_index];
                out.replicate = cell.replicate;
                const RunOutput run =
                    run_single_cell(config, tc, datasets[cell.replicate], false);
                out.status = run.log.status;
                out.diverged_at = run.log.diverged_at;
                save_train_log_csv(run.log,
                                   (cell.dir / "train_log.csv").string());
                if (run.log.status != TrainStatus::diverged) {
                    out.losses =
                        detail::padded_losses(run.log, config.max_steps);
                    if (run.report) {
                        save_pl_report(*run.report,
                                       (cell.dir / "pl_report.txt").string());
                    }
                    save_control_path(run.control,
                                      (cell.dir / "control.rkcp").string());
                }
                if (keep_logs) out.log = run.log;
            } catch (...) {
                std::lock_guard<std::mutex> lock(worker_error_mutex);
                if (!worker_error) worker_error = std::current_exception();
                return;
            }
        }
    };
    {
        std::vector<std::thread> pool;
        const int n_workers = std::max(1, jobs);
        pool.reserve(n_workers);
        for (int t = 0; t < n_workers; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (worker_error) std::rethrow_exception(worker_error);

    SweepSummary summary;
    summary.param_values = values;
    summary.cells = results;
    summary.mean_loss.assign(values.size(),
                             std::vector<double>(config.max_steps + 1, 0.0));
    summary.std_loss = summary.mean_loss;

    std::ofstream divergences;
    for (std::size_t p = 0; p < values.size(); ++p) {
        std::vector<const SweepCellResult*> done;
        for (const auto& cell : results) {
            if (cell.param_value != values[p]) continue;
            if (cell.status == TrainStatus::diverged) {
                ++summary.divergences;
                if (!divergences.is_open()) {
                    divergences.open(out_dir / "divergences.txt");
                }
                divergences << param_name << "=" << cell.param_value
                            << " rep=" << cell.replicate << " step="
                            << cell.diverged_at << "\n";
                continue;
            }
            done.push_back(&cell);
        }
        if (done.empty()) continue;
        for (int k = 0; k <= config.max_steps; ++k) {
            double mean = 0.0;
            for (const auto* cell : done) mean += cell->losses[k];
            mean /= done.size();
            double var = 0.0;
            for (const auto* cell : done) {
                var += (cell->losses[k] - mean) * (cell->losses[k] - mean);
            }
            var = done.size() > 1 ? var / (done.size() - 1) : 0.0;
            summary.mean_loss[p][k] = mean;
            summary.std_loss[p][k] = std::sqrt(var);
        }
    }

    const std::string summary_name =
        param == SweepParam::q ? "sweep_q.csv" : "sweep_qint.csv";
    std::ofstream os(out_dir / summary_name);
    if (!os) throw io_error("cannot write sweep summary");
    os << "param,step,mean_loss,std_loss\n";
    for (std::size_t p = 0; p < values.size(); ++p) {
        for (int k = 0; k <= config.max_steps; ++k) {
            os << values[p] << ',' << k << ',' << fmt17(summary.mean_loss[p][k])
               << ',' << fmt17(summary.std_loss[p][k]) << "\n";
        }
    }
    return summary;
}

// --- simple SVG rendering of loss curves --------------------------------------

inline void write_loss_curves_svg(const std::vector<std::vector<double>>& curves,
                                  const std::vector<std::string>& labels,
                                  const std::filesystem::path& path) {
    const int width = 720, height = 480, margin = 60;
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    std::size_t steps = 0;
    for (const auto& curve : curves) {
        steps = std::max(steps, curve.size());
        for (double v : curve) {
            if (v > 0.0) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
    }
    if (!(hi > 0.0) || steps < 2) return;
    lo = std::max(lo, hi * 1e-16);
    const double log_lo = std::log10(lo), log_hi = std::log10(hi);
    const double span = std::max(log_hi - log_lo, 1e-3);

    std::ofstream os(path);
    if (!os) throw io_error("cannot write svg");
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
       << "\" height=\"" << height << "\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\">"
       << "empirical risk (log scale) vs GD step</text>\n";
    const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c",
                            "#9467bd", "#ff7f0e", "#8c564b"};
    for (std::size_t p = 0; p < curves.size(); ++p) {
        const auto& curve = curves[p];
        if (curve.size() < 2) continue;
        os << "<polyline fill=\"none\" stroke=\"" << colors[p % 6]
           << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t k = 0; k < curve.size(); ++k) {
            const double v = std::max(curve[k], lo);
            const double x =
                margin + (width - 2.0 * margin) * k / (curve.size() - 1);
            const double y =
                height - margin -
                (height - 2.0 * margin) * (std::log10(v) - log_lo) / span;
            os << x << ',' << y << ' ';
        }
        os << "\"/>\n";
        os << "<text x=\"" << width - margin + 5 << "\" y=\""
           << margin + 16 * p << "\" fill=\"" << colors[p % 6] << "\">"
           << labels[p] << "</text>\n";
    }
    os << "</svg>\n";
}

inline void write_sweep_svg(const SweepSummary& summary,
                            const std::string& param_name,
                            const std::filesystem::path& path) {
    std::vector<std::string> labels;
    for (int value : summary.param_values) {
        labels.push_back(param_name + "=" + std::to_string(value));
    }
    write_loss_curves_svg(summary.mean_loss, labels, path);
}

// --- diagnose ------------------------------------------------------------------

struct DiagnoseOutput {
    PLReport report;
    TrajectoryBoundsReport bounds;
    double kappa_hat = 0.0;
    double trajectory_lambda_min = 0.0;
    bool all_ok = false;
};

inline DiagnoseOutput run_diagnose(const ExperimentConfig& config,
                                   const std::filesystem::path& out_dir) {
    config.validate();
    std::filesystem::create_directories(out_dir);
    write_effective_config(config, out_dir);

    const Dataset data = dataset_for(config);
    if (data.n() >= 2 && data.separation() <= 0.0) {
        throw degenerate_data_error("diagnose: dataset has zero separation");
    }
    const EmbeddingVariant variant =
        config.embedding_for(EmbeddingVariant::ScaledReplicate);
    const KernelSpec spec = config.spec();
    const FeatureBank bank =
        sample_features(config.q, config.q_int, spec,
                        derive_seed(config.seed, seed_stream::kBank));
    const EmbeddingPair pair =
        build_embedding(config.q, data.d(), data.d_prime(), variant);
    const ControlPath control =
        config.checkpoint.empty()
            ? zero_control(config.L, config.q, bank.feature_dim())
            : load_control_path(config.checkpoint);

    DiagnoseOutput out;
    out.kappa_hat = empirical_kappa_hat(bank);
    const GradientResult at_control = gradient(control, bank, pair, data);
    out.trajectory_lambda_min = min_trajectory_lambda(at_control.bundle);
    out.report = init_condition(data, pair, spec, out.kappa_hat, config.R,
                                control_norm(control), at_control.loss,
                                out.trajectory_lambda_min);
    out.bounds =
        verify_trajectory_bounds(control, bank, pair, data, out.kappa_hat);
    out.all_ok = out.report.init_satisfied && out.bounds.separation_ok &&
                 out.bounds.adjoint_ok;

    save_pl_report(out.report, (out_dir / "pl_report.txt").string());
    return out;
}

// --- kernel self-test ------------------------------------------------------------

struct SelfTestCheck {
    std::string name;
    bool passed = false;
    std::string detail;
};

inline std::vector<SelfTestCheck> run_kernel_selftest(
    const ExperimentConfig& config) {
    config.spec().require_valid();
    std::vector<SelfTestCheck> checks;
    const auto add = [&](const std::string& name, bool ok,
                         const std::string& detail) {
        checks.push_back({name, ok, detail});
    };

    {
        const double value = kappa(KernelSpec::gaussian());
        const double expected = 2.0 + std::sqrt(3.0);
        add("kappa_gaussian_anchor", std::abs(value - expected) <= 1e-12,
            "kappa(inf) = " + fmt17(value));
    }
    {
        const double value = kappa(KernelSpec::matern(3.0));
        add("kappa_matern3_anchor",
            std::abs(value - 5.8989794855663562) <= 1e-10,
            "kappa(3) = " + fmt17(value));
    }
    {
        bool ok = true;
        for (double nu : {3.0, 4.0, 10.0}) {
            const auto d = derivatives_at_zero(KernelSpec::matern(nu));
            ok = ok && d.neg_k2 == nu / (nu - 1.0) &&
                 d.k4 == 3.0 * nu * nu / ((nu - 1.0) * (nu - 2.0));
        }
        add("derivative_formulas", ok, "nu in {3,4,10}");
    }
    {
        bool ok = true;
        for (double nu : {2.5, 3.0}) {
            ok = ok &&
                 std::abs(eval_kernel(KernelSpec::matern(nu), 0.0) - 1.0) <=
                     1e-12;
        }
        ok = ok &&
             std::abs(eval_kernel(KernelSpec::gaussian(), 1.0) -
                      std::exp(-0.5)) <= 1e-12;
        add("kernel_normalization_and_gaussian", ok, "k(0)=1, k_inf(1)=e^{-1/2}");
    }
    {
        const double value = eval_kernel(KernelSpec::matern(3.0), 1.0);
        add("kernel_matern3_quadrature_anchor",
            std::abs(value - 0.5359254662105768) <= 1e-10,
            "k_3(1) = " + fmt17(value));
    }
    {
        // frequency moments at q = 2, q_int = 1e5, three MC standard errors
        const int n = 100000;
        bool ok = true;
        std::string detail;
        {
            const auto bank =
                sample_features(2, n, KernelSpec::matern(3.0), config.seed);
            const double expected = config.negative_control ? 2.0 : 1.5;
            const double se = std::sqrt(11.25 / n);
            for (int c = 0; c < 2; ++c) {
                const double m2 = bank.omegas.col(c).squaredNorm() / double(n);
                ok = ok && std::abs(m2 - expected) <= 3.0 * se;
                detail += fmt17(m2) + " ";
            }
        }
        {
            const auto bank =
                sample_features(2, n, KernelSpec::gaussian(), config.seed);
            const double se = std::sqrt(2.0 / n);
            for (int c = 0; c < 2; ++c) {
                const double m2 = bank.omegas.col(c).squaredNorm() / double(n);
                ok = ok && std::abs(m2 - 1.0) <= 3.0 * se;
                detail += fmt17(m2) + " ";
            }
        }
        add("frequency_moments", ok, detail);
    }
    {
        bool ok = true;
        for (double nu : {3.0, std::numeric_limits<double>::infinity()}) {
            const KernelSpec spec{nu};
            for (int n_points : {2, 50}) {
                const double root = beta(spec, n_points);
                ok = ok && std::abs(eval_kernel(spec, root) -
                                    1.0 / (2.0 * n_points)) <= 1e-8;
            }
        }
        ok = ok && std::abs(beta(KernelSpec::gaussian(), 2) -
                            std::sqrt(2.0 * std::log(4.0))) <= 1e-6;
        add("beta_roots", ok, "nu in {3, inf}, N in {2, 50}");
    }
    {
        // quick concentration check: error must shrink with the bank size
        const auto spec = KernelSpec::matern(3.0);
        SplitMix64 rng(derive_seed(config.seed, 0x53454C46ull));
        std::vector<double> dists;
        std::vector<Eigen::VectorXd> zs, ws;
        for (int p = 0; p < 30; ++p) {
            Eigen::VectorXd z(2), dir(2);
            z << rng.next_normal(), rng.next_normal();
            dir << rng.next_normal(), rng.next_normal();
            dir.normalize();
            const double dist = 5.0 * rng.next_uniform();
            zs.push_back(z);
            ws.push_back(z + dist * dir);
            dists.push_back(dist);
        }
        auto median_err = [&](int q_int) {
            std::vector<double> errors;
            for (int b = 0; b < 8; ++b) {
                const auto bank = sample_features(2, q_int, spec, 900 + b);
                for (std::size_t p = 0; p < zs.size(); ++p) {
                    errors.push_back(std::abs(rff_kernel(bank, zs[p], ws[p]) -
                                              eval_kernel(spec, dists[p])));
                }
            }
            std::nth_element(errors.begin(), errors.begin() + errors.size() / 2,
                             errors.end());
            return errors[errors.size() / 2];
        };
        const double ratio = median_err(1024) / median_err(4096);
        add("rff_concentration", ratio > 1.2 && ratio < 3.4,
            "median error ratio 1024/4096 = " + fmt17(ratio));
    }
    {
        const auto bank = sample_features(2, 100000, KernelSpec::gaussian(),
                                          config.seed);
        const double kappa_hat = empirical_kappa_hat(bank);
        const double expected = 2.0 + std::sqrt(3.0);
        add("kappa_hat_convergence",
            std::abs(kappa_hat / expected - 1.0) <= 0.1,
            "kappa_hat = " + fmt17(kappa_hat));
    }
    return checks;
}

}  // namespace rkflow
