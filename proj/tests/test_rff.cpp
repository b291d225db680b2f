#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>

#include "rkflow/rff.hpp"

using rkflow::FeatureBank;
using rkflow::KernelSpec;

TEST_CASE("sample_features rejects degenerate dimensions", "[rff]") {
    CHECK_THROWS_AS(rkflow::sample_features(0, 8, KernelSpec::gaussian(), 1),
                    rkflow::invalid_dimension_error);
    CHECK_THROWS_AS(rkflow::sample_features(2, 0, KernelSpec::gaussian(), 1),
                    rkflow::invalid_dimension_error);
    CHECK_THROWS_AS(rkflow::sample_features(2, 8, KernelSpec::matern(2.0), 1),
                    rkflow::invalid_kernel_error);
}

TEST_CASE("frequency samples have the advertised second moments", "[rff]") {
    const int n = 100000;

    SECTION("gaussian: empirical covariance close to identity") {
        const auto bank = rkflow::sample_features(2, n, KernelSpec::gaussian(), 0);
        const Eigen::Matrix2d cov =
            bank.omegas.transpose() * bank.omegas / double(n);
        const double se_diag = std::sqrt(2.0 / n);
        const double se_off = std::sqrt(1.0 / n);
        CHECK_THAT(cov(0, 0), Catch::Matchers::WithinAbs(1.0, 3 * se_diag));
        CHECK_THAT(cov(1, 1), Catch::Matchers::WithinAbs(1.0, 3 * se_diag));
        CHECK_THAT(cov(0, 1), Catch::Matchers::WithinAbs(0.0, 3 * se_off));
    }

    SECTION("matern nu=3: per-coordinate variance nu/(nu-1) = 1.5") {
        const auto bank = rkflow::sample_features(2, n, KernelSpec::matern(3.0), 0);
        // Var(s^2) = E s^4 - (E s^2)^2 = 13.5 - 2.25
        const double se = std::sqrt(11.25 / n);
        for (int c = 0; c < 2; ++c) {
            const double m2 = bank.omegas.col(c).squaredNorm() / double(n);
            CHECK_THAT(m2, Catch::Matchers::WithinAbs(1.5, 3 * se));
        }
    }

    SECTION("matern nu=2.5 uses the gamma sampler (odd dof)") {
        const auto bank =
            rkflow::sample_features(2, n, KernelSpec::matern(2.5), 0);
        const double se = std::sqrt((25.0 - 25.0 / 9.0) / n);
        for (int c = 0; c < 2; ++c) {
            const double m2 = bank.omegas.col(c).squaredNorm() / double(n);
            CHECK_THAT(m2, Catch::Matchers::WithinAbs(5.0 / 3.0, 3 * se));
        }
    }
}

TEST_CASE("banks are bit-reproducible from their inputs", "[rff]") {
    const auto a = rkflow::sample_features(3, 64, KernelSpec::matern(3.0), 42);
    const auto b = rkflow::sample_features(3, 64, KernelSpec::matern(3.0), 42);
    CHECK(a.omegas == b.omegas);
    const auto c = rkflow::sample_features(3, 64, KernelSpec::matern(3.0), 43);
    CHECK(a.omegas != c.omegas);
}

TEST_CASE("feature_map geometry", "[rff]") {
    const auto bank = rkflow::sample_features(3, 32, KernelSpec::matern(4.0), 7);
    const double scale = 1.0 / std::sqrt(32.0);

    SECTION("at the origin: cosine block constant, sine block zero") {
        const Eigen::VectorXd phi =
            rkflow::feature_map(bank, Eigen::VectorXd::Zero(3));
        for (int j = 0; j < 32; ++j) {
            CHECK(phi[j] == scale);
            CHECK(phi[32 + j] == 0.0);
        }
    }

    SECTION("unit norm everywhere") {
        rkflow::SplitMix64 rng(5);
        for (int rep = 0; rep < 20; ++rep) {
            Eigen::VectorXd z(3);
            for (int i = 0; i < 3; ++i) z[i] = 3.0 * rng.next_normal();
            const Eigen::VectorXd phi = rkflow::feature_map(bank, z);
            CHECK_THAT(phi.squaredNorm(), Catch::Matchers::WithinAbs(1.0, 1e-12));
        }
    }

    SECTION("dimension mismatch is a shape error") {
        CHECK_THROWS_AS(rkflow::feature_map(bank, Eigen::VectorXd::Zero(4)),
                        rkflow::invalid_dimension_error);
    }
}

TEST_CASE("rff_kernel agrees with the feature inner product", "[rff]") {
    const auto bank = rkflow::sample_features(2, 128, KernelSpec::matern(3.0), 11);
    rkflow::SplitMix64 rng(3);
    for (int rep = 0; rep < 20; ++rep) {
        Eigen::VectorXd z(2), w(2);
        for (int i = 0; i < 2; ++i) {
            z[i] = 2.0 * rng.next_normal();
            w[i] = 2.0 * rng.next_normal();
        }
        const double via_features =
            rkflow::feature_map(bank, z).dot(rkflow::feature_map(bank, w));
        const double direct = rkflow::rff_kernel(bank, z, w);
        CHECK_THAT(direct, Catch::Matchers::WithinAbs(via_features, 1e-12));
        // bitwise symmetry
        CHECK(rkflow::rff_kernel(bank, w, z) == direct);
        // self-similarity
        CHECK(rkflow::rff_kernel(bank, z, z) == 1.0);
        // translation invariance
        Eigen::VectorXd shift(2);
        shift << -1.25, 0.75;
        CHECK_THAT(rkflow::rff_kernel(bank, z + shift, w + shift),
                   Catch::Matchers::WithinAbs(direct, 1e-12));
    }
}

TEST_CASE("rff_kernel concentrates on the exact kernel", "[rff]") {
    const auto spec = KernelSpec::matern(3.0);
    const double exact = rkflow::eval_kernel(spec, 1.0);
    Eigen::VectorXd z(2), w(2);
    z << 0.3, -0.4;
    w << 0.3 - 0.6, -0.4 + 0.8;  // ||z - w|| = 1

    const int n_banks = 50;
    double mean = 0.0, mean_sq = 0.0;
    for (int b = 0; b < n_banks; ++b) {
        const auto bank = rkflow::sample_features(2, 4096, spec, 1000 + b);
        const double khat = rkflow::rff_kernel(bank, z, w);
        mean += khat;
        mean_sq += khat * khat;
    }
    mean /= n_banks;
    mean_sq /= n_banks;
    const double se = std::sqrt((mean_sq - mean * mean) / n_banks);
    CHECK_THAT(mean, Catch::Matchers::WithinAbs(exact, 3 * se));
}

TEST_CASE("error halves when the feature count quadruples", "[rff]") {
    // light version of the acceptance check: median |k_hat - k| scaling
    const auto spec = KernelSpec::matern(3.0);
    rkflow::SplitMix64 rng(17);
    const int n_pairs = 60, n_banks = 12;
    std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> pairs;
    std::vector<double> exact;
    for (int p = 0; p < n_pairs; ++p) {
        Eigen::VectorXd z(2), dir(2);
        z[0] = rng.next_normal();
        z[1] = rng.next_normal();
        dir[0] = rng.next_normal();
        dir[1] = rng.next_normal();
        dir.normalize();
        const double dist = 5.0 * rng.next_uniform();
        pairs.emplace_back(z, z + dist * dir);
        exact.push_back(rkflow::eval_kernel(spec, dist));
    }
    auto median_error = [&](int q_int) {
        std::vector<double> errors;
        for (int b = 0; b < n_banks; ++b) {
            const auto bank =
                rkflow::sample_features(2, q_int, spec, 100 * q_int + b);
            for (int p = 0; p < n_pairs; ++p) {
                errors.push_back(std::abs(
                    rkflow::rff_kernel(bank, pairs[p].first, pairs[p].second) -
                    exact[p]));
            }
        }
        std::nth_element(errors.begin(), errors.begin() + errors.size() / 2,
                         errors.end());
        return errors[errors.size() / 2];
    };
    const double ratio = median_error(1024) / median_error(4096);
    CHECK(ratio > 1.2);
    CHECK(ratio < 3.4);
}

TEST_CASE("feature gram matrices are positive semidefinite", "[rff]") {
    const auto bank = rkflow::sample_features(3, 64, KernelSpec::matern(3.0), 23);
    rkflow::SplitMix64 rng(29);
    const int n = 8;
    Eigen::MatrixXd gram(n, n);
    std::vector<Eigen::VectorXd> points;
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd z(3);
        for (int c = 0; c < 3; ++c) z[c] = 2.0 * rng.next_normal();
        points.push_back(z);
    }
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            gram(i, j) = rkflow::rff_kernel(bank, points[i], points[j]);
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10);
}

TEST_CASE("empirical_kappa_hat", "[rff]") {
    SECTION("zero-frequency bank collapses to 1") {
        FeatureBank bank;
        bank.spec = KernelSpec::gaussian();
        bank.q = 2;
        bank.q_int = 1;
        bank.omegas = Eigen::MatrixXd::Zero(1, 2);
        CHECK(rkflow::empirical_kappa_hat(bank) == 1.0);
    }

    SECTION("never below 1, and coarse bound dominates the exact one") {
        for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
            const auto bank =
                rkflow::sample_features(3, 256, KernelSpec::matern(5.0), seed);
            const double exact = rkflow::empirical_kappa_hat(
                bank, rkflow::FourthMomentBound::exact_operator_norm);
            const double coarse = rkflow::empirical_kappa_hat(
                bank, rkflow::FourthMomentBound::coarse_norm4);
            CHECK(exact >= 1.0);
            CHECK(coarse >= exact);
        }
    }

    SECTION("converges to kappa for the gaussian kernel") {
        const auto bank =
            rkflow::sample_features(2, 100000, KernelSpec::gaussian(), 0);
        const double kappa_hat = rkflow::empirical_kappa_hat(bank);
        CHECK_THAT(kappa_hat / rkflow::kappa(KernelSpec::gaussian()),
                   Catch::Matchers::WithinAbs(1.0, 0.1));
    }
}

TEST_CASE("feature bank round-trips through its file format", "[rff]") {
    const auto bank = rkflow::sample_features(3, 16, KernelSpec::matern(3.0), 99);
    const std::string path = "test_bank.rkfb";
    rkflow::save_feature_bank(bank, path);
    const auto loaded = rkflow::load_feature_bank(path);
    CHECK(loaded.q == bank.q);
    CHECK(loaded.q_int == bank.q_int);
    CHECK(loaded.seed == bank.seed);
    CHECK(loaded.spec.nu == bank.spec.nu);
    CHECK(loaded.omegas == bank.omegas);

    // corrupt the magic and expect rejection
    {
        std::ofstream os(path, std::ios::binary);
        os.write("XXXX", 4);
    }
    CHECK_THROWS_AS(rkflow::load_feature_bank(path), rkflow::io_error);
    std::remove(path.c_str());
}
