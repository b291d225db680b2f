#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "rkflow/diagnostics.hpp"
#include "rkflow/flow.hpp"

namespace rkflow {

namespace seed_stream {
constexpr std::uint64_t kBank = 0x42414E4Bull;     // feature banks
constexpr std::uint64_t kInit = 0x494E4954ull;     // weight initialization
constexpr std::uint64_t kDataset = 0x44415441ull;  // synthetic datasets
}  // namespace seed_stream

struct TrainConfig {
    int q = 30;
    int q_int = 60;
    int L = 32;
    KernelSpec spec = KernelSpec::matern(2.5);
    EmbeddingVariant embedding = EmbeddingVariant::InjectSum;
    double eta = 1.0;
    int max_steps = 500;
    double target_loss = 1e-10;
    std::uint64_t seed = 0;
    double init_scale = 0.0;
    bool record_lambda_min = false;
    // accept a step only on sufficient decrease (Armijo c = 1/2) instead of
    // any non-increase; turns the accepted steps into the premise of the
    // linear-rate certificate
    bool armijo_sufficient_decrease = false;

    void validate() const {
        if (eta <= 0.0) throw config_error("eta must be > 0");
        if (max_steps < 1) throw config_error("max_steps must be >= 1");
        if (L < 1) throw config_error("L must be >= 1");
        if (q < 1 || q_int < 1) throw config_error("q and q_int must be >= 1");
        if (target_loss < 0.0) throw config_error("target_loss must be >= 0");
        if (init_scale < 0.0) throw config_error("init_scale must be >= 0");
        spec.require_valid();
    }
};

struct TrainStep {
    int step = 0;
    double loss = 0.0;
    double grad_sq_norm = 0.0;  // squared L^2 norm of the loss gradient
    double v_norm = 0.0;
    double v_dist_init = 0.0;
    double eta = 0.0;  // step size accepted for the update leaving this state
    double wallclock = 0.0;
    double lambda_min = std::numeric_limits<double>::quiet_NaN();
};

enum class TrainStatus { converged, max_steps, diverged };

inline std::string to_string(TrainStatus s) {
    switch (s) {
        case TrainStatus::converged: return "converged";
        case TrainStatus::max_steps: return "max-steps";
        case TrainStatus::diverged: return "diverged";
    }
    return "unknown";
}

struct TrainLog {
    std::vector<TrainStep> steps;
    TrainStatus status = TrainStatus::max_steps;
    int diverged_at = -1;
    std::optional<PLReport> report;

    double final_loss() const {
        return steps.empty() ? std::numeric_limits<double>::quiet_NaN()
                             : steps.back().loss;
    }
};

// Zero weights for init_scale = 0, otherwise iid Gaussian entries with
// standard deviation init_scale * q^{-3/4} (so the control norm stays O(1)
// in expectation as q grows).
inline ControlPath init_control(const TrainConfig& config,
                                const FeatureBank& bank) {
    config.validate();
    ControlPath control =
        zero_control(config.L, bank.q, bank.feature_dim());
    if (config.init_scale > 0.0) {
        const double sd =
            config.init_scale * std::pow(static_cast<double>(bank.q), -0.75);
        SplitMix64 rng(derive_seed(config.seed, seed_stream::kInit));
        for (auto& w : control.weights) {
            for (int r = 0; r < w.rows(); ++r) {
                for (int c = 0; c < w.cols(); ++c) {
                    w(r, c) = sd * rng.next_normal();
                }
            }
        }
    }
    return control;
}

namespace detail {

inline double l2_distance(const ControlPath& a, const ControlPath& b) {
    const double dt = a.dt();
    double sum = 0.0;
    for (int l = 0; l < a.steps(); ++l) {
        sum += dt * (a.weights[l] - b.weights[l]).squaredNorm();
    }
    return std::sqrt(sum);
}

}  // namespace detail

struct TrainResult {
    TrainLog log;
    ControlPath control;  // final weights
};

// Full-batch gradient descent in the L^2 control metric:
//
//   v <- v - eta * grad,  grad_l = dL/dW_l / dt.
//
// Step sizes backtrack and never grow back: by default eta halves whenever
// the trial loss increases, so accepted steps never increase the loss; with
// armijo_sufficient_decrease the trial must satisfy
// loss' <= loss - (eta/2) ||grad||^2.
inline TrainResult gd_train_from(const TrainConfig& config, const Dataset& data,
                                 const FeatureBank& bank,
                                 const EmbeddingPair& pair, ControlPath control,
                                 bool throw_on_divergence = true) {
    config.validate();
    if (data.n() < 1) throw config_error("dataset is empty");
    const double dt = control.dt();
    const ControlPath initial = control;
    double eta = config.eta;

    TrainResult result;
    const auto start = std::chrono::steady_clock::now();
    auto elapsed = [&start]() {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                             start)
            .count();
    };

    try {
        for (int k = 0;; ++k) {
            const GradientResult step = gradient(control, bank, pair, data);
            const double grad_sq = gradient_l2_norm_sq(step.grad, dt);

            TrainStep row;
            row.step = k;
            row.loss = step.loss;
            row.grad_sq_norm = grad_sq;
            row.v_norm = control_norm(control);
            row.v_dist_init = detail::l2_distance(control, initial);
            row.eta = eta;
            row.wallclock = elapsed();
            if (config.record_lambda_min) {
                row.lambda_min = min_trajectory_lambda(step.bundle);
            }
            result.log.steps.push_back(row);

            if (step.loss <= config.target_loss) {
                result.log.status = TrainStatus::converged;
                break;
            }
            if (k >= config.max_steps) {
                result.log.status = TrainStatus::max_steps;
                break;
            }
            if (grad_sq == 0.0) {
                result.log.status = TrainStatus::max_steps;
                break;
            }

            ControlPath trial = control;
            for (;;) {
                for (int l = 0; l < control.steps(); ++l) {
                    trial.weights[l] =
                        control.weights[l] - (eta / dt) * step.grad[l];
                }
                const double trial_loss =
                    empirical_risk(trial, bank, pair, data);
                const double required = config.armijo_sufficient_decrease
                                            ? step.loss - 0.5 * eta * grad_sq
                                            : step.loss;
                if (trial_loss <= required) break;
                eta *= 0.5;
                if (eta < 1e-14) {
                    result.log.status = TrainStatus::max_steps;
                    result.control = std::move(control);
                    return result;
                }
            }
            result.log.steps.back().eta = eta;
            control = std::move(trial);
        }
    } catch (const divergence_error& e) {
        result.log.status = TrainStatus::diverged;
        result.log.diverged_at = e.step;
        if (throw_on_divergence) throw;
    }
    result.control = std::move(control);
    return result;
}

// Convenience entry point: samples the bank, builds the embedding for the
// dataset's dimensions and initializes the weights from the config seed.
inline TrainResult gd_train(const TrainConfig& config, const Dataset& data,
                            bool throw_on_divergence = true) {
    config.validate();
    const FeatureBank bank =
        sample_features(config.q, config.q_int, config.spec,
                        derive_seed(config.seed, seed_stream::kBank));
    const EmbeddingPair pair = build_embedding(config.q, data.d(),
                                               data.d_prime(), config.embedding);
    ControlPath control = init_control(config, bank);
    return gd_train_from(config, data, bank, pair, std::move(control),
                         throw_on_divergence);
}

// Convenience overload of the PL sandwich check over a finished log.
inline std::vector<PLStepCheck> verify_pl_along_run(const TrainLog& log,
                                                    const PLReport& report) {
    std::vector<double> loss, grad_sq, v_norm, lambda;
    bool have_lambda = true;
    for (const auto& s : log.steps) {
        loss.push_back(s.loss);
        grad_sq.push_back(s.grad_sq_norm);
        v_norm.push_back(s.v_norm);
        if (std::isnan(s.lambda_min)) have_lambda = false;
        lambda.push_back(s.lambda_min);
    }
    if (!have_lambda) lambda.clear();
    return verify_pl_steps(loss, grad_sq, v_norm, lambda, report);
}

// --- log persistence ---------------------------------------------------------

inline void save_train_log_csv(const TrainLog& log, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw io_error("cannot open " + path + " for writing");
    os << "step,loss,grad_sq_norm,v_norm,v_dist_init,eta\n";
    for (const auto& s : log.steps) {
        os << s.step << ',' << fmt17(s.loss) << ',' << fmt17(s.grad_sq_norm)
           << ',' << fmt17(s.v_norm) << ',' << fmt17(s.v_dist_init) << ','
           << fmt17(s.eta) << "\n";
    }
    if (!os) throw io_error("write failed: " + path);
}

inline TrainLog load_train_log_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open " + path);
    std::string line;
    if (!std::getline(is, line) ||
        line != "step,loss,grad_sq_norm,v_norm,v_dist_init,eta") {
        throw io_error("unexpected train log header in " + path);
    }
    TrainLog log;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        TrainStep s;
        std::stringstream ss(line);
        std::string cell;
        const auto next = [&]() {
            if (!std::getline(ss, cell, ',')) {
                throw io_error("short train log row in " + path);
            }
            return std::stod(cell);
        };
        s.step = static_cast<int>(next());
        s.loss = next();
        s.grad_sq_norm = next();
        s.v_norm = next();
        s.v_dist_init = next();
        s.eta = next();
        log.steps.push_back(s);
    }
    return log;
}

}  // namespace rkflow
