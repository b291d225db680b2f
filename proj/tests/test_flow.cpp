#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>

#include "rkflow/flow.hpp"

using rkflow::ControlPath;
using rkflow::Dataset;
using rkflow::EmbeddingVariant;
using rkflow::KernelSpec;

namespace {

Eigen::MatrixXd random_matrix(int rows, int cols, double scale,
                              rkflow::SplitMix64& rng) {
    Eigen::MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) m(r, c) = scale * rng.next_normal();
    }
    return m;
}

Dataset random_dataset(int n, int d, int d_prime, double scale,
                       std::uint64_t seed) {
    rkflow::SplitMix64 rng(seed);
    return rkflow::make_dataset(random_matrix(d, n, scale, rng),
                                random_matrix(d_prime, n, scale, rng));
}

ControlPath random_control(int steps, int q, int feature_dim, double scale,
                           std::uint64_t seed) {
    rkflow::SplitMix64 rng(seed);
    ControlPath control;
    for (int l = 0; l < steps; ++l) {
        control.weights.push_back(random_matrix(q, feature_dim, scale, rng));
    }
    return control;
}

// independent of the adjoint path: central differences of the risk over
// every weight entry
std::vector<Eigen::MatrixXd> finite_difference_gradient(
    const ControlPath& control, const rkflow::FeatureBank& bank,
    const rkflow::EmbeddingPair& pair, const Dataset& data, double h) {
    std::vector<Eigen::MatrixXd> fd;
    ControlPath probe = control;
    for (int l = 0; l < control.steps(); ++l) {
        Eigen::MatrixXd g(control.weights[l].rows(), control.weights[l].cols());
        for (int r = 0; r < g.rows(); ++r) {
            for (int c = 0; c < g.cols(); ++c) {
                const double saved = probe.weights[l](r, c);
                probe.weights[l](r, c) = saved + h;
                const double up = rkflow::empirical_risk(probe, bank, pair, data);
                probe.weights[l](r, c) = saved - h;
                const double down = rkflow::empirical_risk(probe, bank, pair, data);
                probe.weights[l](r, c) = saved;
                g(r, c) = (up - down) / (2.0 * h);
            }
        }
        fd.push_back(std::move(g));
    }
    return fd;
}

}  // namespace

TEST_CASE("zero control leaves the embedded state in place", "[flow]") {
    const auto bank = rkflow::sample_features(4, 8, KernelSpec::matern(3.0), 1);
    const auto pair = rkflow::build_embedding(4, 2, 2);
    const auto control = rkflow::zero_control(6, 4, bank.feature_dim());
    Eigen::VectorXd x(2);
    x << 0.7, -1.1;
    const auto states = rkflow::forward(control, bank, pair.A, x);
    REQUIRE(states.size() == 7);
    const Eigen::VectorXd z0 = pair.A * x;
    for (const auto& z : states) CHECK(z == z0);
    CHECK(rkflow::model_output(control, bank, pair, x) == pair.B * z0);
}

TEST_CASE("identity embeddings compose to the identity on zero control",
          "[flow]") {
    const auto bank = rkflow::sample_features(2, 8, KernelSpec::matern(3.0), 2);
    const auto pair =
        rkflow::build_embedding(2, 2, 2, EmbeddingVariant::InjectSum);
    const auto control = rkflow::zero_control(4, 2, bank.feature_dim());
    Eigen::VectorXd x(2);
    x << 0.3, 2.5;
    CHECK((rkflow::model_output(control, bank, pair, x) - x).norm() == 0.0);
}

TEST_CASE("single Euler step by construction", "[flow]") {
    const auto bank = rkflow::sample_features(3, 8, KernelSpec::matern(3.0), 3);
    const auto pair = rkflow::build_embedding(3, 2, 2);
    auto control = random_control(1, 3, bank.feature_dim(), 0.4, 5);
    Eigen::VectorXd x(2);
    x << -0.2, 0.9;
    const auto states = rkflow::forward(control, bank, pair.A, x);
    const Eigen::VectorXd z0 = pair.A * x;
    const Eigen::VectorXd expected =
        z0 + control.weights[0] * rkflow::feature_map(bank, z0);
    CHECK((states[1] - expected).norm() == 0.0);
}

TEST_CASE("displacement is bounded by kappa_hat times the control norm",
          "[flow]") {
    const auto bank = rkflow::sample_features(3, 16, KernelSpec::matern(3.0), 4);
    const auto pair = rkflow::build_embedding(3, 2, 2);
    const double kappa_hat = rkflow::empirical_kappa_hat(bank);
    for (std::uint64_t seed : {10ull, 11ull, 12ull, 13ull}) {
        const auto control = random_control(8, 3, bank.feature_dim(), 0.3, seed);
        rkflow::SplitMix64 rng(seed + 100);
        Eigen::VectorXd x(2);
        x << rng.next_normal(), rng.next_normal();
        const auto states = rkflow::forward(control, bank, pair.A, x);
        const double displacement = (states.back() - states.front()).norm();
        CHECK(displacement <= kappa_hat * rkflow::control_norm(control));
    }
}

TEST_CASE("control_norm basics", "[flow]") {
    CHECK(rkflow::control_norm(rkflow::zero_control(5, 3, 8)) == 0.0);

    ControlPath single = rkflow::zero_control(1, 2, 4);
    single.weights[0](1, 2) = 2.0;
    CHECK(rkflow::control_norm(single) == 2.0);

    // constant-in-time control: norm equals the per-step Frobenius norm
    ControlPath constant = rkflow::zero_control(4, 2, 4);
    rkflow::SplitMix64 rng(6);
    const Eigen::MatrixXd w = random_matrix(2, 4, 1.0, rng);
    for (auto& wl : constant.weights) wl = w;
    CHECK_THAT(rkflow::control_norm(constant),
               Catch::Matchers::WithinRel(w.norm(), 1e-14));

    // refinement invariance: splitting each step in two equal halves
    ControlPath refined = rkflow::zero_control(8, 2, 4);
    for (auto& wl : refined.weights) wl = w;
    CHECK_THAT(rkflow::control_norm(refined),
               Catch::Matchers::WithinRel(rkflow::control_norm(constant), 1e-14));
}

TEST_CASE("model output is linear in the readout matrix", "[flow]") {
    const auto bank = rkflow::sample_features(4, 8, KernelSpec::matern(3.0), 6);
    auto pair = rkflow::build_embedding(4, 2, 2);
    const auto control = random_control(3, 4, bank.feature_dim(), 0.4, 7);
    Eigen::VectorXd x(2);
    x << 1.1, -0.4;
    const Eigen::VectorXd base = rkflow::model_output(control, bank, pair, x);
    pair.B *= 2.0;
    const Eigen::VectorXd doubled = rkflow::model_output(control, bank, pair, x);
    CHECK((doubled - 2.0 * base).norm() < 1e-14);
}

TEST_CASE("empirical risk on hand-checkable configurations", "[flow]") {
    const auto bank = rkflow::sample_features(4, 8, KernelSpec::matern(3.0), 7);
    const auto pair =
        rkflow::build_embedding(4, 2, 2, EmbeddingVariant::InjectSum);
    const auto control = rkflow::zero_control(3, 4, bank.feature_dim());

    Eigen::MatrixXd x(2, 1), y(2, 1);
    x << 0.4, -0.6;
    y << 1.0, 0.2;
    const auto one = rkflow::make_dataset(x, y);
    // B A = Id here, so the residual is x - y
    CHECK_THAT(rkflow::empirical_risk(control, bank, pair, one),
               Catch::Matchers::WithinRel(0.5 * (x.col(0) - y.col(0)).squaredNorm(),
                                          1e-14));

    // duplicating the sample leaves the mean unchanged
    Eigen::MatrixXd x2(2, 2), y2(2, 2);
    x2 << x, x;
    y2 << y, y;
    const auto two = rkflow::make_dataset(x2, y2);
    CHECK_THAT(rkflow::empirical_risk(control, bank, pair, two),
               Catch::Matchers::WithinRel(
                   rkflow::empirical_risk(control, bank, pair, one), 1e-14));

    // perfect fit: targets equal the model outputs
    Eigen::MatrixXd y_fit(2, 1);
    y_fit = rkflow::model_output(control, bank, pair, x.col(0));
    const auto fit = rkflow::make_dataset(x, y_fit);
    CHECK(rkflow::empirical_risk(control, bank, pair, fit) == 0.0);
}

TEST_CASE("gradient vanishes exactly at zero loss", "[flow]") {
    const auto bank = rkflow::sample_features(3, 8, KernelSpec::matern(3.0), 8);
    const auto pair = rkflow::build_embedding(3, 2, 2);
    const auto control = random_control(4, 3, bank.feature_dim(), 0.3, 9);

    Eigen::MatrixXd x(2, 3);
    x << 0.1, 1.0, -0.7, 0.5, -0.3, 0.2;
    Eigen::MatrixXd y(2, 3);
    for (int i = 0; i < 3; ++i) {
        y.col(i) = rkflow::model_output(control, bank, pair, x.col(i));
    }
    const auto data = rkflow::make_dataset(x, y);
    const auto result = rkflow::gradient(control, bank, pair, data);
    CHECK(result.loss == 0.0);
    for (const auto& g : result.grad) CHECK(g.norm() == 0.0);
    for (const auto& a : result.bundle.adjoints) {
        CHECK(a.back().norm() == 0.0);
    }
}

TEST_CASE("one-step hand gradient", "[flow]") {
    // N=1, L=1, A = B = Id, W = 0: the chain rule collapses to
    // (x - y) phi(x)^T
    const auto bank = rkflow::sample_features(2, 8, KernelSpec::matern(3.0), 10);
    const auto pair =
        rkflow::build_embedding(2, 2, 2, EmbeddingVariant::InjectSum);
    const auto control = rkflow::zero_control(1, 2, bank.feature_dim());
    Eigen::MatrixXd x(2, 1), y(2, 1);
    x << 0.8, -0.1;
    y << -0.4, 0.5;
    const auto data = rkflow::make_dataset(x, y);
    const auto result = rkflow::gradient(control, bank, pair, data);
    const Eigen::MatrixXd expected =
        (x.col(0) - y.col(0)) * rkflow::feature_map(bank, x.col(0)).transpose();
    CHECK((result.grad[0] - expected).norm() < 1e-15);
}

TEST_CASE("adjoint gradient matches central finite differences", "[flow]") {
    const auto spec = KernelSpec::matern(3.0);
    for (std::uint64_t seed : {21ull, 22ull, 23ull}) {
        const auto bank = rkflow::sample_features(3, 8, spec, seed);
        const auto pair = rkflow::build_embedding(3, 2, 2);
        const auto control = random_control(5, 3, bank.feature_dim(), 0.5, seed + 50);
        const auto data = random_dataset(4, 2, 2, 1.0, seed + 99);

        const auto result = rkflow::gradient(control, bank, pair, data);
        const auto fd = finite_difference_gradient(control, bank, pair, data, 1e-5);

        double max_diff = 0.0, max_fd = 0.0;
        for (int l = 0; l < control.steps(); ++l) {
            max_diff = std::max(
                max_diff, (result.grad[l] - fd[l]).cwiseAbs().maxCoeff());
            max_fd = std::max(max_fd, fd[l].cwiseAbs().maxCoeff());
        }
        REQUIRE(max_fd > 0.0);
        CHECK(max_diff / max_fd <= 1e-5);
    }
}

TEST_CASE("trajectory bundle satisfies its boundary identities", "[flow]") {
    const auto bank = rkflow::sample_features(3, 8, KernelSpec::matern(3.0), 31);
    const auto pair = rkflow::build_embedding(3, 2, 2);
    const auto control = random_control(4, 3, bank.feature_dim(), 0.4, 32);
    const auto data = random_dataset(3, 2, 2, 1.0, 33);

    const auto result = rkflow::gradient(control, bank, pair, data);
    for (int i = 0; i < data.n(); ++i) {
        const auto& states = result.bundle.states[i];
        CHECK(states[0] == pair.A * data.inputs.col(i));
        const Eigen::VectorXd expected_al =
            pair.B.transpose() * (pair.B * states.back() - data.targets.col(i)) /
            double(data.n());
        CHECK((result.bundle.adjoints[i].back() - expected_al).norm() == 0.0);
    }
}

TEST_CASE("risk converges at first order in the step count", "[flow]") {
    // successive refinements must shrink by at least the Euler factor; the
    // instances are frozen because the second-order term can push the ratio
    // marginally past 2 on either side
    const std::pair<std::uint64_t, double> instances[] = {{42, 0.4}, {46, 0.25}};
    for (const auto& [seed, scale] : instances) {
        const auto bank = rkflow::sample_features(3, 8, KernelSpec::matern(3.0), seed);
        const auto pair = rkflow::build_embedding(3, 2, 2);
        rkflow::SplitMix64 rng(seed + 1);
        Eigen::MatrixXd x = random_matrix(2, 4, 1.0, rng);
        Eigen::MatrixXd y = random_matrix(2, 4, 1.0, rng);
        const Eigen::MatrixXd w = random_matrix(3, bank.feature_dim(), scale, rng);
        const auto data = rkflow::make_dataset(x, y);

        auto risk_at = [&](int steps) {
            ControlPath control =
                rkflow::zero_control(steps, 3, bank.feature_dim());
            for (auto& wl : control.weights) wl = w;
            return rkflow::empirical_risk(control, bank, pair, data);
        };
        const double r64 = risk_at(64), r128 = risk_at(128), r256 = risk_at(256);
        CHECK(std::abs(r64 - r128) <= 2.0 * std::abs(r128 - r256) + 1e-10);
    }
}

TEST_CASE("exploding states raise a divergence error with the step index",
          "[flow]") {
    const auto bank = rkflow::sample_features(2, 4, KernelSpec::matern(3.0), 51);
    const auto pair =
        rkflow::build_embedding(2, 2, 2, EmbeddingVariant::InjectSum);
    ControlPath control = rkflow::zero_control(3, 2, bank.feature_dim());
    control.weights[1].setConstant(1e10);
    Eigen::VectorXd x(2);
    x << 1.0, 1.0;
    try {
        rkflow::forward(control, bank, pair.A, x);
        FAIL("expected divergence");
    } catch (const rkflow::divergence_error& e) {
        CHECK(e.step == 2);
    }
}

TEST_CASE("control path round-trips through its file format", "[flow]") {
    const auto control = random_control(3, 4, 10, 0.7, 61);
    const std::string path = "test_control.rkcp";
    rkflow::save_control_path(control, path);
    const auto loaded = rkflow::load_control_path(path);
    REQUIRE(loaded.steps() == control.steps());
    for (int l = 0; l < control.steps(); ++l) {
        CHECK(loaded.weights[l] == control.weights[l]);
    }
    {
        std::ofstream os(path, std::ios::binary);
        os.write("RKCQ", 4);
    }
    CHECK_THROWS_AS(rkflow::load_control_path(path), rkflow::io_error);
    std::remove(path.c_str());
}
