// Minimal end-to-end usage: sample a feature bank, train a small flow
// network on a synthetic batch, and print the loss decay plus the
// convergence-condition report.

#include <cstdio>

#include "rkflow/rkflow.hpp"

int main() {
    using namespace rkflow;

    const auto data = synth_dataset(/*n=*/8, /*d=*/2, /*d_prime=*/2,
                                    /*noise=*/0.2, /*seed=*/1);

    TrainConfig config;
    config.q = 8;
    config.q_int = 32;
    config.L = 16;
    config.spec = KernelSpec::matern(3.0);
    config.embedding = EmbeddingVariant::InjectSum;
    config.max_steps = 200;
    config.seed = 1;
    config.record_lambda_min = true;

    const auto result = gd_train(config, data);
    std::printf("status: %s after %zu steps\n",
                to_string(result.log.status).c_str(),
                result.log.steps.size() - 1);
    for (std::size_t k = 0; k < result.log.steps.size(); k += 25) {
        const auto& s = result.log.steps[k];
        std::printf("  step %4d  loss %.3e  |grad|^2 %.3e  ||v|| %.3f\n",
                    s.step, s.loss, s.grad_sq_norm, s.v_norm);
    }
    std::printf("  final loss %.3e\n", result.log.final_loss());

    // certify what the run achieved against the convergence condition
    const auto bank =
        sample_features(config.q, config.q_int, config.spec,
                        derive_seed(config.seed, seed_stream::kBank));
    const auto pair =
        build_embedding(config.q, data.d(), data.d_prime(), config.embedding);
    const double kappa_hat = empirical_kappa_hat(bank);
    double lambda_min = std::numeric_limits<double>::infinity();
    for (const auto& s : result.log.steps) {
        lambda_min = std::min(lambda_min, s.lambda_min);
    }
    const auto report =
        init_condition(data, pair, config.spec, kappa_hat, /*R=*/1.0,
                       /*R0=*/0.0, result.log.steps.front().loss, lambda_min);
    std::printf("kappa_hat %.4f, trajectory lambda_min %.4f\n", kappa_hat,
                lambda_min);
    std::printf("init condition %s (lhs %.3e vs R %.2f)\n",
                report.init_satisfied ? "satisfied" : "not satisfied",
                report.init_lhs, report.R);

    const auto checks = verify_pl_along_run(result.log, report);
    int lower = 0, upper = 0;
    for (const auto& c : checks) {
        lower += c.lower_ok;
        upper += c.upper_ok;
    }
    std::printf("PL sandwich: %d/%zu lower, %d/%zu upper checks passed\n",
                lower, checks.size(), upper, checks.size());
    return 0;
}
