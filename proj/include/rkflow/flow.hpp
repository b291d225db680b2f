#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "rkflow/dataset.hpp"
#include "rkflow/embedding.hpp"
#include "rkflow/errors.hpp"
#include "rkflow/io.hpp"
#include "rkflow/rff.hpp"

namespace rkflow {

// Piecewise-constant control: one weight matrix W_l in R^{q x 2 q_int} per
// time step, on L uniform steps of [0, 1].  The induced vector field at step
// l is z |-> W_l phi(z).
struct ControlPath {
    std::vector<Eigen::MatrixXd> weights;

    int steps() const { return static_cast<int>(weights.size()); }
    double dt() const { return 1.0 / static_cast<double>(weights.size()); }
};

inline ControlPath zero_control(int steps, int q, int feature_dim) {
    if (steps < 1) throw invalid_dimension_error("control needs L >= 1 steps");
    ControlPath control;
    control.weights.assign(steps, Eigen::MatrixXd::Zero(q, feature_dim));
    return control;
}

// L^2([0,1]) norm of the control under the Frobenius metric per step:
// sqrt(sum_l dt ||W_l||_F^2).  Invariant under splitting a step into two
// halves carrying the same matrix.
inline double control_norm(const ControlPath& control) {
    const double dt = control.dt();
    double sum = 0.0;
    for (const auto& w : control.weights) sum += dt * w.squaredNorm();
    return std::sqrt(sum);
}

namespace detail {

inline void check_flow_shapes(const ControlPath& control,
                              const FeatureBank& bank) {
    if (control.steps() < 1) {
        throw invalid_dimension_error("control has no steps");
    }
    for (const auto& w : control.weights) {
        if (w.rows() != bank.q || w.cols() != bank.feature_dim()) {
            throw invalid_dimension_error(
                "control weights must be q x 2*q_int matching the bank");
        }
    }
}

constexpr double kDivergenceRadius = 1e8;

inline void check_state(const Eigen::VectorXd& z, int step) {
    if (!z.allFinite() || z.norm() > kDivergenceRadius) {
        throw divergence_error(
            "forward state exploded at step " + std::to_string(step), step);
    }
}

}  // namespace detail

// Explicit Euler integration of z' = W_t phi(z), z_0 = A x.  Returns all
// L + 1 states; optionally fills the feature vectors phi(z_l) alongside.
inline std::vector<Eigen::VectorXd> forward(
    const ControlPath& control, const FeatureBank& bank,
    const Eigen::MatrixXd& A, const Eigen::VectorXd& x,
    std::vector<Eigen::VectorXd>* features_out = nullptr) {
    detail::check_flow_shapes(control, bank);
    if (A.rows() != bank.q || A.cols() != x.size()) {
        throw invalid_dimension_error("forward: embedding/input shape mismatch");
    }
    const int steps = control.steps();
    const double dt = control.dt();
    std::vector<Eigen::VectorXd> states(steps + 1);
    if (features_out) features_out->resize(steps + 1);

    states[0] = A * x;
    detail::check_state(states[0], 0);
    for (int l = 0; l < steps; ++l) {
        Eigen::VectorXd phi = feature_map(bank, states[l]);
        states[l + 1].noalias() = states[l] + dt * (control.weights[l] * phi);
        if (features_out) (*features_out)[l] = std::move(phi);
        detail::check_state(states[l + 1], l + 1);
    }
    if (features_out) (*features_out)[steps] = feature_map(bank, states[steps]);
    return states;
}

inline Eigen::VectorXd model_output(const ControlPath& control,
                                    const FeatureBank& bank,
                                    const EmbeddingPair& pair,
                                    const Eigen::VectorXd& x) {
    const auto states = forward(control, bank, pair.A, x);
    return pair.B * states.back();
}

inline double empirical_risk(const ControlPath& control, const FeatureBank& bank,
                             const EmbeddingPair& pair, const Dataset& data) {
    if (pair.d != data.d() || pair.d_prime != data.d_prime()) {
        throw invalid_dimension_error("empirical_risk: dataset/embedding mismatch");
    }
    const int n = data.n();
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto states = forward(control, bank, pair.A, data.inputs.col(i));
        sum += (pair.B * states.back() - data.targets.col(i)).squaredNorm();
    }
    return sum / (2.0 * n);
}

// Per-sample forward states z^i_l, their features phi(z^i_l), and the
// reverse-accumulated loss sensitivities a^i_l = dL/dz^i_l.
// Invariants: states[i][0] = A x^i and
// adjoints[i][L] = (1/N) B^T (B z^i_L - y^i), both exact.
struct TrajectoryBundle {
    std::vector<std::vector<Eigen::VectorXd>> states;
    std::vector<std::vector<Eigen::VectorXd>> features;
    std::vector<std::vector<Eigen::VectorXd>> adjoints;
};

struct GradientResult {
    std::vector<Eigen::MatrixXd> grad;  // dL/dW_l, exact to machine precision
    TrajectoryBundle bundle;
    double loss = 0.0;
};

// Reverse accumulation through the Euler scheme.  The returned matrices are
// the exact derivatives of empirical_risk with respect to the stored weights:
//
//   a^i_L = (1/N) B^T (B z^i_L - y^i)
//   a^i_l = a^i_{l+1} + dt (W_l D phi(z^i_l))^T a^i_{l+1}
//   dL/dW_l = dt sum_i a^i_{l+1} phi(z^i_l)^T
//
// where D phi stacks the rows (-sin<z,w^j> w^j; cos<z,w^j> w^j)/sqrt(q_int).
// Samples are accumulated in index order, so results are bit-reproducible.
inline GradientResult gradient(const ControlPath& control,
                               const FeatureBank& bank,
                               const EmbeddingPair& pair, const Dataset& data) {
    detail::check_flow_shapes(control, bank);
    if (pair.d != data.d() || pair.d_prime != data.d_prime()) {
        throw invalid_dimension_error("gradient: dataset/embedding mismatch");
    }
    const int n = data.n();
    const int steps = control.steps();
    const int q_int = bank.q_int;
    const double dt = control.dt();

    GradientResult result;
    result.grad.assign(steps,
                       Eigen::MatrixXd::Zero(bank.q, bank.feature_dim()));
    result.bundle.states.resize(n);
    result.bundle.features.resize(n);
    result.bundle.adjoints.resize(n);

    for (int i = 0; i < n; ++i) {
        auto& states = result.bundle.states[i];
        auto& features = result.bundle.features[i];
        states = forward(control, bank, pair.A, data.inputs.col(i), &features);

        const Eigen::VectorXd residual =
            pair.B * states[steps] - data.targets.col(i);
        result.loss += residual.squaredNorm();

        auto& adjoints = result.bundle.adjoints[i];
        adjoints.resize(steps + 1);
        adjoints[steps].noalias() = pair.B.transpose() * residual / double(n);
        for (int l = steps - 1; l >= 0; --l) {
            const Eigen::VectorXd& a_next = adjoints[l + 1];
            const Eigen::VectorXd& phi = features[l];
            result.grad[l].noalias() += dt * a_next * phi.transpose();

            // (W_l D phi)^T a = D phi^T (W_l^T a); the mixing weights reuse
            // the cached scaled cos/sin blocks of phi
            const Eigen::VectorXd u = control.weights[l].transpose() * a_next;
            const Eigen::VectorXd mix =
                phi.head(q_int).cwiseProduct(u.tail(q_int)) -
                phi.tail(q_int).cwiseProduct(u.head(q_int));
            adjoints[l].noalias() = a_next + dt * (bank.omegas.transpose() * mix);
        }
    }
    result.loss /= 2.0 * n;
    return result;
}

// Squared L^2([0,1]) norm of the loss gradient as an element of the control
// space: the per-step L^2 block is dL/dW_l / dt, so the squared norm is
// sum_l ||dL/dW_l||_F^2 / dt.
inline double gradient_l2_norm_sq(const std::vector<Eigen::MatrixXd>& grad,
                                  double dt) {
    double sum = 0.0;
    for (const auto& g : grad) sum += g.squaredNorm();
    return sum / dt;
}

// --- serialization ----------------------------------------------------------

inline void save_control_path(const ControlPath& control,
                              const std::string& path) {
    if (control.steps() < 1) throw invalid_input_error("empty control path");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot open " + path + " for writing");
    os.write("RKCP", 4);
    detail::write_u32(os, 1u);
    detail::write_u64(os, static_cast<std::uint64_t>(control.steps()));
    detail::write_u64(os, static_cast<std::uint64_t>(control.weights[0].rows()));
    detail::write_u64(os, static_cast<std::uint64_t>(control.weights[0].cols()));
    for (const auto& w : control.weights) {
        for (int r = 0; r < w.rows(); ++r) {
            for (int c = 0; c < w.cols(); ++c) {
                detail::write_f64(os, w(r, c));
            }
        }
    }
    if (!os) throw io_error("write failed: " + path);
}

inline ControlPath load_control_path(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open " + path);
    detail::check_magic(is, "RKCP", "control path");
    const std::uint32_t version = detail::read_u32(is);
    if (version != 1u) {
        throw io_error("unsupported control path version " +
                       std::to_string(version));
    }
    const auto steps = detail::read_u64(is);
    const auto rows = detail::read_u64(is);
    const auto cols = detail::read_u64(is);
    if (steps < 1 || rows < 1 || cols < 2 || steps > (1u << 20) ||
        rows > (1u << 24) || cols > (1u << 24)) {
        throw io_error("control path dimensions out of range");
    }
    ControlPath control;
    control.weights.assign(steps, Eigen::MatrixXd(rows, cols));
    for (auto& w : control.weights) {
        for (std::uint64_t r = 0; r < rows; ++r) {
            for (std::uint64_t c = 0; c < cols; ++c) {
                w(r, c) = detail::read_f64(is);
            }
        }
    }
    is.peek();
    if (!is.eof()) throw io_error("trailing bytes in control path file");
    return control;
}

}  // namespace rkflow
