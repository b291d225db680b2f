#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>

#include "rkflow/errors.hpp"
#include "rkflow/io.hpp"
#include "rkflow/kernels.hpp"
#include "rkflow/rng.hpp"

namespace rkflow {

// A sampled frequency matrix defining a random-feature approximation of the
// kernel in KernelSpec.  Row j is the frequency omega^j in R^q; the feature
// map is the real pair representation
//
//   phi(z) = (1/sqrt(q_int)) * [cos<z,omega^j>]_j ++ [sin<z,omega^j>]_j
//
// (cosine block first, then sine block), so ||phi(z)|| = 1 and
// <phi(z), phi(z')> = (1/q_int) sum_j cos<z - z', omega^j>.
//
// Banks are immutable after creation and bit-reproducible from
// (seed, q, q_int, nu): frequencies are drawn with the SplitMix64 stream as
// Y / sqrt(u / 2 nu) with Y ~ N(0, Id_q) and u ~ chi^2_{2 nu} (Y alone for
// the Gaussian kernel).
struct FeatureBank {
    Eigen::MatrixXd omegas;  // q_int x q, rows are frequency samples
    KernelSpec spec;
    std::uint64_t seed = 0;
    int q = 0;
    int q_int = 0;

    int feature_dim() const { return 2 * q_int; }
};

inline FeatureBank sample_features(int q, int q_int, const KernelSpec& spec,
                                   std::uint64_t seed) {
    spec.require_valid();
    if (q < 1 || q_int < 1) {
        throw invalid_dimension_error("sample_features: q and q_int must be >= 1");
    }
    FeatureBank bank;
    bank.spec = spec;
    bank.seed = seed;
    bank.q = q;
    bank.q_int = q_int;
    bank.omegas.resize(q_int, q);

    SplitMix64 rng(seed);
    const double dof = spec.is_gaussian() ? 0.0 : 2.0 * spec.nu;
    for (int j = 0; j < q_int; ++j) {
        for (int c = 0; c < q; ++c) {
            bank.omegas(j, c) = rng.next_normal();
        }
        if (!spec.is_gaussian()) {
            const double u = rng.next_chi_squared(dof);
            bank.omegas.row(j) /= std::sqrt(u / dof);
        }
    }
    return bank;
}

inline Eigen::VectorXd feature_map(const FeatureBank& bank,
                                   const Eigen::VectorXd& z) {
    if (z.size() != bank.q) {
        throw invalid_dimension_error("feature_map: input has dimension " +
                                      std::to_string(z.size()) + ", bank needs " +
                                      std::to_string(bank.q));
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(bank.q_int));
    const Eigen::VectorXd angles = bank.omegas * z;
    Eigen::VectorXd phi(2 * bank.q_int);
    phi.head(bank.q_int) = angles.array().cos() * scale;
    phi.tail(bank.q_int) = angles.array().sin() * scale;
    return phi;
}

// Monte-Carlo kernel estimate k_hat(z, z') = (1/q_int) sum_j cos<z-z', w^j>.
// Evaluated on |<d, w^j>| so that swapping the arguments returns bitwise
// identical results.
inline double rff_kernel(const FeatureBank& bank, const Eigen::VectorXd& z,
                         const Eigen::VectorXd& z_prime) {
    if (z.size() != bank.q || z_prime.size() != bank.q) {
        throw invalid_dimension_error("rff_kernel: dimension mismatch");
    }
    const Eigen::VectorXd angles = bank.omegas * (z - z_prime);
    double sum = 0.0;
    for (int j = 0; j < bank.q_int; ++j) {
        sum += std::cos(std::abs(angles[j]));
    }
    return sum / static_cast<double>(bank.q_int);
}

enum class FourthMomentBound {
    // max_theta (1/q_int) sum_j <w^j, theta>^4 by higher-order power
    // iteration; the quartic form is convex, so the iteration ascends to the
    // operator norm of the empirical fourth-moment tensor (multi-start).
    exact_operator_norm,
    // (1/q_int) sum_j ||w^j||^4, an upper bound on the operator norm by
    // Cauchy-Schwarz; cheap and never below the true value.
    coarse_norm4,
};

namespace detail {

inline double fourth_moment_operator_norm(const Eigen::MatrixXd& omegas,
                                          std::uint64_t seed) {
    const int q = static_cast<int>(omegas.cols());
    const int q_int = static_cast<int>(omegas.rows());
    const double inv_n = 1.0 / static_cast<double>(q_int);
    const auto quartic = [&](const Eigen::VectorXd& theta) {
        return (omegas * theta).array().pow(4).sum() * inv_n;
    };

    // starts: eigenvectors of the second-moment matrix plus a few fixed
    // pseudo-random directions
    const Eigen::MatrixXd m2 = omegas.transpose() * omegas * inv_n;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m2);
    std::vector<Eigen::VectorXd> starts;
    const int n_eig = std::min(q, 4);
    for (int i = 0; i < n_eig; ++i) {
        starts.push_back(es.eigenvectors().col(q - 1 - i));
    }
    SplitMix64 rng(derive_seed(seed, 0x4F4D4E34ull));
    for (int i = 0; i < 6; ++i) {
        Eigen::VectorXd dir(q);
        for (int c = 0; c < q; ++c) dir[c] = rng.next_normal();
        const double norm = dir.norm();
        if (norm > 0) starts.push_back(dir / norm);
    }

    double best = 0.0;
    for (auto theta : starts) {
        double value = quartic(theta);
        for (int iter = 0; iter < 300; ++iter) {
            const Eigen::VectorXd t = omegas * theta;
            const Eigen::VectorXd grad =
                omegas.transpose() * t.array().cube().matrix() * inv_n;
            const double gnorm = grad.norm();
            if (gnorm == 0.0) break;
            theta = grad / gnorm;
            const double next = quartic(theta);
            if (next <= value * (1.0 + 1e-13)) {
                value = std::max(value, next);
                break;
            }
            value = next;
        }
        best = std::max(best, value);
    }
    return best;
}

}  // namespace detail

// Empirical embedding constant of the sampled feature space:
//
//   kappa_hat = sup||phi|| + sqrt(lambda_max((1/q_int) sum w w^T)) + sqrt(T)
//
// where sup||phi|| = 1 by construction, the middle term bounds ||D phi||_2
// exactly (D phi^T D phi equals the second-moment matrix for every z), and T
// bounds the empirical fourth-moment form controlling ||D^2 phi||.  As
// q_int grows this converges to kappa(spec).
inline double empirical_kappa_hat(
    const FeatureBank& bank,
    FourthMomentBound bound = FourthMomentBound::exact_operator_norm) {
    const double inv_n = 1.0 / static_cast<double>(bank.q_int);
    const Eigen::MatrixXd m2 = bank.omegas.transpose() * bank.omegas * inv_n;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m2);
    const double lambda_max = std::max(0.0, es.eigenvalues().maxCoeff());

    double fourth = 0.0;
    switch (bound) {
        case FourthMomentBound::exact_operator_norm:
            fourth = detail::fourth_moment_operator_norm(bank.omegas, bank.seed);
            break;
        case FourthMomentBound::coarse_norm4:
            fourth = bank.omegas.rowwise().squaredNorm().array().square().sum() *
                     inv_n;
            break;
    }
    return 1.0 + std::sqrt(lambda_max) + std::sqrt(fourth);
}

// --- serialization (little-endian, 64-bit floats, versioned) ---------------

inline void save_feature_bank(const FeatureBank& bank, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot open " + path + " for writing");
    os.write("RKFB", 4);
    detail::write_u32(os, 1u);
    detail::write_f64(os, bank.spec.nu);
    detail::write_u64(os, static_cast<std::uint64_t>(bank.q));
    detail::write_u64(os, static_cast<std::uint64_t>(bank.q_int));
    detail::write_u64(os, bank.seed);
    for (int j = 0; j < bank.q_int; ++j) {
        for (int c = 0; c < bank.q; ++c) {
            detail::write_f64(os, bank.omegas(j, c));
        }
    }
    if (!os) throw io_error("write failed: " + path);
}

inline FeatureBank load_feature_bank(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open " + path);
    detail::check_magic(is, "RKFB", "feature bank");
    const std::uint32_t version = detail::read_u32(is);
    if (version != 1u) {
        throw io_error("unsupported feature bank version " +
                       std::to_string(version));
    }
    FeatureBank bank;
    bank.spec.nu = detail::read_f64(is);
    bank.spec.require_valid();
    const auto q = detail::read_u64(is);
    const auto q_int = detail::read_u64(is);
    if (q < 1 || q_int < 1 || q > (1u << 24) || q_int > (1u << 24)) {
        throw io_error("feature bank dimensions out of range");
    }
    bank.q = static_cast<int>(q);
    bank.q_int = static_cast<int>(q_int);
    bank.seed = detail::read_u64(is);
    bank.omegas.resize(bank.q_int, bank.q);
    for (int j = 0; j < bank.q_int; ++j) {
        for (int c = 0; c < bank.q; ++c) {
            bank.omegas(j, c) = detail::read_f64(is);
        }
    }
    is.peek();
    if (!is.eof()) throw io_error("trailing bytes in feature bank file");
    return bank;
}

}  // namespace rkflow
