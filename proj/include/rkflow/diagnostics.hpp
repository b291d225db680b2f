#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rkflow/dataset.hpp"
#include "rkflow/embedding.hpp"
#include "rkflow/errors.hpp"
#include "rkflow/flow.hpp"
#include "rkflow/io.hpp"
#include "rkflow/kernels.hpp"
#include "rkflow/rff.hpp"

namespace rkflow {

// N x N scalar kernel matrix.  The vector-valued kernel is block-scalar
// (k * Id_q), so the block matrix spectrum equals this scalar spectrum with
// multiplicity q; only the scalar matrix is ever materialized.
inline Eigen::MatrixXd gram_matrix(const std::vector<Eigen::VectorXd>& points,
                                   const KernelSpec& spec) {
    const int n = static_cast<int>(points.size());
    if (n < 1) throw invalid_input_error("gram_matrix: need at least 1 point");
    Eigen::MatrixXd gram(n, n);
    for (int i = 0; i < n; ++i) {
        gram(i, i) = 1.0;
        for (int j = i + 1; j < n; ++j) {
            gram(i, j) = gram(j, i) =
                eval_kernel(spec, (points[i] - points[j]).norm());
        }
    }
    return gram;
}

inline Eigen::MatrixXd gram_matrix(const std::vector<Eigen::VectorXd>& points,
                                   const FeatureBank& bank) {
    const int n = static_cast<int>(points.size());
    if (n < 1) throw invalid_input_error("gram_matrix: need at least 1 point");
    Eigen::MatrixXd gram(n, n);
    for (int i = 0; i < n; ++i) {
        gram(i, i) = 1.0;
        for (int j = i + 1; j < n; ++j) {
            gram(i, j) = gram(j, i) = rff_kernel(bank, points[i], points[j]);
        }
    }
    return gram;
}

// Extreme eigenvalues of a symmetric matrix.
inline std::pair<double, double> lambda_bounds(const Eigen::MatrixXd& gram) {
    if (gram.rows() != gram.cols()) {
        throw invalid_input_error("lambda_bounds: matrix must be square");
    }
    if ((gram - gram.transpose()).cwiseAbs().maxCoeff() > 1e-8) {
        throw invalid_input_error("lambda_bounds: matrix is not symmetric");
    }
    const Eigen::MatrixXd sym = 0.5 * (gram + gram.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    if (es.info() != Eigen::Success) {
        throw invalid_input_error("lambda_bounds: eigensolver failed");
    }
    return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

// Smallest eigenvalue of the sampled-kernel Gram matrix over every time step
// of a trajectory bundle (the empirical surrogate for the universality
// constant along the training flow).
inline double min_trajectory_lambda(const TrajectoryBundle& bundle) {
    const int n = static_cast<int>(bundle.features.size());
    if (n < 1 || bundle.features[0].empty()) {
        throw invalid_input_error("min_trajectory_lambda: empty bundle");
    }
    const int steps = static_cast<int>(bundle.features[0].size());
    const int dim = static_cast<int>(bundle.features[0][0].size());
    double lambda_min = std::numeric_limits<double>::infinity();
    Eigen::MatrixXd phi(dim, n);
    for (int l = 0; l < steps; ++l) {
        for (int i = 0; i < n; ++i) phi.col(i) = bundle.features[i][l];
        const Eigen::MatrixXd gram = phi.transpose() * phi;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
        lambda_min = std::min(lambda_min, es.eigenvalues().minCoeff());
    }
    return lambda_min;
}

// PL sandwich constants m(R), M(R) with computable surrogates:
//   Lambda <- N               (Gershgorin, since |k| <= 1)
//   lambda <- 1/2             when sigma_min(A) delta e^{-kappa R} >= beta_{q,N}
//                             (diagonal dominance; this branch is certified)
//   lambda <- empirical       otherwise (trajectory Gram minimum, flagged)
struct PLConstants {
    double m = 0.0;
    double M = 0.0;
    double lambda_used = 0.0;
    double Lambda_used = 0.0;
    bool certified = false;
};

inline PLConstants pl_constants(
    const Dataset& data, const EmbeddingPair& pair, const KernelSpec& spec,
    double kappa_used, double R_total,
    std::optional<double> empirical_lambda_min = std::nullopt) {
    const double delta = data.separation();
    if (delta <= 0.0) {
        throw degenerate_data_error("pl_constants: dataset has zero separation");
    }
    if (R_total < 0.0) throw invalid_input_error("pl_constants: R_total < 0");
    const int n = data.n();

    PLConstants out;
    out.Lambda_used = static_cast<double>(n);
    const double decay_radius = beta(spec, std::max(2, n));
    const double trajectory_separation =
        pair.sigma_min_A * delta * std::exp(-kappa_used * R_total);
    if (trajectory_separation >= decay_radius) {
        out.lambda_used = 0.5;
        out.certified = true;
    } else if (empirical_lambda_min.has_value()) {
        out.lambda_used = *empirical_lambda_min;
        out.certified = false;
    } else {
        throw invalid_input_error(
            "pl_constants: outside the certified separation regime and no "
            "empirical lambda_min was provided");
    }
    const double s_min_bt = pair.sigma_min_B;
    const double s_max_bt = pair.sigma_max_B;
    out.M = (1.0 / n) * s_max_bt * s_max_bt * out.Lambda_used *
            std::exp(2.0 * kappa_used * R_total);
    out.m = (1.0 / n) * s_min_bt * s_min_bt * out.lambda_used *
            std::exp(-2.0 * kappa_used * R_total);
    return out;
}

// Initialization condition and rate constant of the convergence guarantee,
// evaluated with the surrogates above at radius R_total = R + R0.
struct PLReport {
    double R = 1.0;
    double R0 = 0.0;
    double kappa_used = 0.0;
    double lambda_lower = 0.0;   // lambda surrogate entering m
    double Lambda_upper = 0.0;   // Lambda surrogate entering M (= N)
    double m_R = 0.0;            // m(R + R0)
    double M_R = 0.0;            // M(R + R0)
    double mu = 0.0;             // rate constant, equals m_R
    double init_lhs = 0.0;
    bool init_satisfied = false;
    bool certified = false;
    double loss0 = 0.0;
    double separation = 0.0;
    double sigma_min_A = 0.0;
    double sigma_min_BT = 0.0;
    double sigma_max_BT = 0.0;
    int N = 0;
};

inline PLReport init_condition(
    const Dataset& data, const EmbeddingPair& pair, const KernelSpec& spec,
    double kappa_used, double R, double R0, double loss0,
    std::optional<double> empirical_lambda_min = std::nullopt) {
    if (R <= 0.0) throw invalid_input_error("init_condition: R must be > 0");
    if (R0 < 0.0 || loss0 < 0.0) {
        throw invalid_input_error("init_condition: R0 and loss0 must be >= 0");
    }
    const double R_total = R + R0;
    const PLConstants pl =
        pl_constants(data, pair, spec, kappa_used, R_total, empirical_lambda_min);

    PLReport report;
    report.R = R;
    report.R0 = R0;
    report.kappa_used = kappa_used;
    report.lambda_lower = pl.lambda_used;
    report.Lambda_upper = pl.Lambda_used;
    report.m_R = pl.m;
    report.M_R = pl.M;
    report.mu = pl.m;
    report.certified = pl.certified;
    report.loss0 = loss0;
    report.separation = data.separation();
    report.sigma_min_A = pair.sigma_min_A;
    report.sigma_min_BT = pair.sigma_min_B;
    report.sigma_max_BT = pair.sigma_max_B;
    report.N = data.n();

    const double n = static_cast<double>(data.n());
    report.init_lhs = std::sqrt(8.0) * pair.sigma_max_B *
                      std::sqrt(n * pl.Lambda_used * loss0) *
                      std::exp(3.0 * kappa_used * R_total) /
                      (pair.sigma_min_B * pair.sigma_min_B * pl.lambda_used);
    report.init_satisfied = report.init_lhs <= R;
    return report;
}

// Per-step check of 2 m(||v||) L <= ||grad||^2 <= 2 M(||v||) L.  The upper
// bound uses Lambda = N; the lower bound uses the supplied per-step
// empirical lambda (or the report's surrogate when absent).  On a lower
// failure, required_lambda is the value that would have made the step pass.
struct PLStepCheck {
    bool lower_ok = false;
    bool upper_ok = false;
    double required_lambda = 0.0;
};

inline std::vector<PLStepCheck> verify_pl_steps(
    const std::vector<double>& loss, const std::vector<double>& grad_sq_norm,
    const std::vector<double>& v_norm, const std::vector<double>& lambda_min,
    const PLReport& report) {
    const std::size_t n_steps = loss.size();
    if (grad_sq_norm.size() != n_steps || v_norm.size() != n_steps) {
        throw invalid_input_error("verify_pl_steps: column length mismatch");
    }
    if (!lambda_min.empty() && lambda_min.size() != n_steps) {
        throw invalid_input_error("verify_pl_steps: lambda column mismatch");
    }
    const double n = static_cast<double>(report.N);
    const double s_min2 = report.sigma_min_BT * report.sigma_min_BT;
    const double s_max2 = report.sigma_max_BT * report.sigma_max_BT;

    std::vector<PLStepCheck> checks(n_steps);
    for (std::size_t k = 0; k < n_steps; ++k) {
        const double lambda_k =
            lambda_min.empty() ? report.lambda_lower : lambda_min[k];
        const double decay = std::exp(-2.0 * report.kappa_used * v_norm[k]);
        const double growth = std::exp(2.0 * report.kappa_used * v_norm[k]);
        const double lower = 2.0 * (s_min2 / n) * lambda_k * decay * loss[k];
        const double upper =
            2.0 * (s_max2 / n) * report.Lambda_upper * growth * loss[k];
        auto& check = checks[k];
        check.lower_ok = lower <= grad_sq_norm[k] * (1.0 + 1e-9) + 1e-300;
        check.upper_ok = grad_sq_norm[k] <= upper * (1.0 + 1e-9) + 1e-300;
        check.required_lambda =
            loss[k] > 0.0
                ? grad_sq_norm[k] * n / (2.0 * s_min2 * decay * loss[k])
                : 0.0;
    }
    return checks;
}

// --- trajectory and adjoint estimates ---------------------------------------

// Discrete analogues of the flow separation and adjoint norm sandwich, with
// slack 5/L for the Euler error:
//   ||z^i_l - z^j_l||  >=  sigma_min(A) e^{-kh ||v||} ||x^i - x^j|| (1 - 5/L)
//   s_min(B^T)/N e^{-kh||v||} ||r^i|| (1-5/L)
//        <= ||a^i_l|| <= s_max(B^T)/N e^{+kh||v||} ||r^i|| (1+5/L)
// where kh is the empirical embedding constant and r^i the final residual.
struct TrajectoryBoundsReport {
    bool separation_ok = true;
    bool adjoint_ok = true;
    // smallest observed ratio of actual quantity to its required bound
    double separation_margin = std::numeric_limits<double>::infinity();
    double adjoint_lower_margin = std::numeric_limits<double>::infinity();
    double adjoint_upper_margin = std::numeric_limits<double>::infinity();
};

inline TrajectoryBoundsReport verify_trajectory_bounds(
    const ControlPath& control, const FeatureBank& bank,
    const EmbeddingPair& pair, const Dataset& data, double kappa_hat) {
    const GradientResult result = gradient(control, bank, pair, data);
    const int n = data.n();
    const int steps = control.steps();
    const double slack = 5.0 / steps;
    const double v_norm = control_norm(control);
    const double shrink = std::exp(-kappa_hat * v_norm);
    const double grow = std::exp(kappa_hat * v_norm);

    TrajectoryBoundsReport report;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double base = pair.sigma_min_A *
                                (data.inputs.col(i) - data.inputs.col(j)).norm() *
                                shrink * (1.0 - slack);
            if (base <= 0.0) continue;
            for (int l = 0; l <= steps; ++l) {
                const double dist =
                    (result.bundle.states[i][l] - result.bundle.states[j][l])
                        .norm();
                report.separation_margin =
                    std::min(report.separation_margin, dist / base);
                if (dist < base) report.separation_ok = false;
            }
        }
    }
    for (int i = 0; i < n; ++i) {
        const double residual =
            (pair.B * result.bundle.states[i][steps] - data.targets.col(i))
                .norm();
        const double low =
            pair.sigma_min_B / n * shrink * residual * (1.0 - slack);
        const double high =
            pair.sigma_max_B / n * grow * residual * (1.0 + slack);
        for (int l = 0; l <= steps; ++l) {
            const double norm = result.bundle.adjoints[i][l].norm();
            if (low > 0.0) {
                report.adjoint_lower_margin =
                    std::min(report.adjoint_lower_margin, norm / low);
                if (norm < low) report.adjoint_ok = false;
            }
            if (norm > 0.0) {
                report.adjoint_upper_margin =
                    std::min(report.adjoint_upper_margin, high / norm);
                if (norm > high) report.adjoint_ok = false;
            }
        }
    }
    return report;
}

// --- report persistence ------------------------------------------------------

inline void save_pl_report(const PLReport& report, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw io_error("cannot open " + path + " for writing");
    os << "R = " << fmt17(report.R) << "\n"
       << "R0 = " << fmt17(report.R0) << "\n"
       << "kappa_used = " << fmt17(report.kappa_used) << "\n"
       << "lambda_lower = " << fmt17(report.lambda_lower) << "\n"
       << "Lambda_upper = " << fmt17(report.Lambda_upper) << "\n"
       << "m_R = " << fmt17(report.m_R) << "\n"
       << "M_R = " << fmt17(report.M_R) << "\n"
       << "mu = " << fmt17(report.mu) << "\n"
       << "init_lhs = " << fmt17(report.init_lhs) << "\n"
       << "init_satisfied = " << (report.init_satisfied ? 1 : 0) << "\n"
       << "certified = " << (report.certified ? 1 : 0) << "\n"
       << "loss0 = " << fmt17(report.loss0) << "\n"
       << "separation = " << fmt17(report.separation) << "\n"
       << "sigma_min_A = " << fmt17(report.sigma_min_A) << "\n"
       << "sigma_min_BT = " << fmt17(report.sigma_min_BT) << "\n"
       << "sigma_max_BT = " << fmt17(report.sigma_max_BT) << "\n"
       << "N = " << report.N << "\n";
    if (!os) throw io_error("write failed: " + path);
}

inline PLReport load_pl_report(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open " + path);
    PLReport report;
    std::string line;
    while (std::getline(is, line)) {
        std::stringstream ss(line);
        std::string key, eq;
        double value;
        if (!(ss >> key >> eq >> value) || eq != "=") {
            throw io_error("malformed report line: " + line);
        }
        if (key == "R") report.R = value;
        else if (key == "R0") report.R0 = value;
        else if (key == "kappa_used") report.kappa_used = value;
        else if (key == "lambda_lower") report.lambda_lower = value;
        else if (key == "Lambda_upper") report.Lambda_upper = value;
        else if (key == "m_R") report.m_R = value;
        else if (key == "M_R") report.M_R = value;
        else if (key == "mu") report.mu = value;
        else if (key == "init_lhs") report.init_lhs = value;
        else if (key == "init_satisfied") report.init_satisfied = value != 0;
        else if (key == "certified") report.certified = value != 0;
        else if (key == "loss0") report.loss0 = value;
        else if (key == "separation") report.separation = value;
        else if (key == "sigma_min_A") report.sigma_min_A = value;
        else if (key == "sigma_min_BT") report.sigma_min_BT = value;
        else if (key == "sigma_max_BT") report.sigma_max_BT = value;
        else if (key == "N") report.N = static_cast<int>(value);
        else throw io_error("unknown report key: " + key);
    }
    return report;
}

}  // namespace rkflow
