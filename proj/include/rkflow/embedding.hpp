#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "rkflow/errors.hpp"

namespace rkflow {

// Input/output embeddings around the flow.  Two fixed constructions:
//
//  ScaledReplicate:  A = q^{-1/4} (Id_d, ..., Id_d, 0)^T with floor(q/d)
//                    identity blocks, B = q^{1/4} (Id_d', 0, ..., 0).
//                    Singular values have closed forms and B*A is the
//                    truncated identity, independent of q.
//  InjectSum:        A = (Id_d, 0, ..., 0)^T unscaled, B = (Id_d', ...,
//                    Id_d') with floor(q/d') blocks (trailing columns zero
//                    when q is not a multiple of d').  B*A = Id when
//                    d = d' <= q.
//
// ScaledReplicate is the construction the convergence certificates assume;
// InjectSum is the variant used by the synthetic-sweep experiments.
enum class EmbeddingVariant { ScaledReplicate, InjectSum };

inline std::string to_string(EmbeddingVariant v) {
    return v == EmbeddingVariant::ScaledReplicate ? "scaled_replicate"
                                                  : "inject_sum";
}

inline EmbeddingVariant embedding_variant_from_string(const std::string& s) {
    if (s == "scaled_replicate") return EmbeddingVariant::ScaledReplicate;
    if (s == "inject_sum") return EmbeddingVariant::InjectSum;
    throw config_error("unknown embedding variant: " + s);
}

struct EmbeddingPair {
    Eigen::MatrixXd A;  // q x d
    Eigen::MatrixXd B;  // d' x q
    int q = 0;
    int d = 0;
    int d_prime = 0;
    EmbeddingVariant variant = EmbeddingVariant::ScaledReplicate;
    // singular values of A and of B^T (the quantities entering the bounds)
    double sigma_min_A = 0.0;
    double sigma_min_B = 0.0;
    double sigma_max_B = 0.0;
};

inline EmbeddingPair build_embedding(
    int q, int d, int d_prime,
    EmbeddingVariant variant = EmbeddingVariant::ScaledReplicate) {
    if (d < 1 || d_prime < 1 || q < d || q < d_prime) {
        throw invalid_dimension_error(
            "build_embedding: need q >= max(d, d') >= 1");
    }
    EmbeddingPair pair;
    pair.q = q;
    pair.d = d;
    pair.d_prime = d_prime;
    pair.variant = variant;
    pair.A = Eigen::MatrixXd::Zero(q, d);
    pair.B = Eigen::MatrixXd::Zero(d_prime, q);

    if (variant == EmbeddingVariant::ScaledReplicate) {
        const double a_scale = std::pow(static_cast<double>(q), -0.25);
        const double b_scale = std::pow(static_cast<double>(q), 0.25);
        const int blocks = q / d;
        for (int b = 0; b < blocks; ++b) {
            pair.A.block(b * d, 0, d, d) =
                a_scale * Eigen::MatrixXd::Identity(d, d);
        }
        pair.B.leftCols(d_prime) =
            b_scale * Eigen::MatrixXd::Identity(d_prime, d_prime);
        pair.sigma_min_A = a_scale * std::sqrt(static_cast<double>(blocks));
        pair.sigma_min_B = b_scale;
        pair.sigma_max_B = b_scale;
    } else {
        pair.A.topRows(d) = Eigen::MatrixXd::Identity(d, d);
        const int blocks = q / d_prime;
        for (int b = 0; b < blocks; ++b) {
            pair.B.block(0, b * d_prime, d_prime, d_prime) =
                Eigen::MatrixXd::Identity(d_prime, d_prime);
        }
        pair.sigma_min_A = 1.0;
        const double s = std::sqrt(static_cast<double>(blocks));
        pair.sigma_min_B = s;
        pair.sigma_max_B = s;
    }
    return pair;
}

// Minimum pairwise Euclidean distance; points are the matrix columns.
// Zero exactly when duplicates exist.
inline double separation(const Eigen::MatrixXd& points) {
    const int n = static_cast<int>(points.cols());
    if (n < 2) throw invalid_input_error("separation: need at least 2 points");
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            best = std::min(best, (points.col(i) - points.col(j)).norm());
        }
    }
    return best;
}

}  // namespace rkflow
