#include "mscal/dgm.hpp"
#include "mscal/error.hpp"
#include "mscal/truth.hpp"

#include <doctest.h>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <random>

using namespace mscal;

namespace {

DgmConfig chain(double a, double b)
{
    DgmConfig c;
    c.structure = TransitionStructure(3, {{1, 2}, {2, 3}});
    c.scales = {1.0 / a, 1.0 / b};
    c.beta_trans = {0.5, -0.5};
    c.beta_cens = {0.0, 0.0};
    return c;
}

// Transition matrix by matrix exponential of the generator.
Eigen::MatrixXd expm_oracle(const DgmConfig& cfg, const std::vector<double>& z, double t)
{
    const int K = cfg.structure.n_states();
    Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(K, K);
    for (const auto& tr : cfg.structure.transitions()) {
        const double r = cfg.rate(tr.from, tr.to, z);
        Q(tr.from - 1, tr.to - 1) += r;
        Q(tr.from - 1, tr.from - 1) -= r;
    }
    return (Q * t).exp();
}

}  // namespace

TEST_CASE("illness-death chain closed form")
{
    const auto cfg = chain(0.1, 0.2);
    const std::vector<double> z{0.0, 0.0};
    CHECK(std::abs(true_transition_prob(cfg, z, 2, 5.0) - 0.23865) < 1e-5);
    for (double t : {0.5, 5.0, 20.0}) {
        const double a = 0.1, b = 0.2;
        const double p12 = a / (b - a) * (std::exp(-a * t) - std::exp(-b * t));
        TransitionProbabilityEngine eng(cfg, z);
        const Eigen::VectorXd row = eng.row(1, t);
        CHECK(std::abs(row[0] - std::exp(-a * t)) < 1e-6);
        CHECK(std::abs(row[1] - p12) < 1e-6);
        CHECK(std::abs(row[2] - (1.0 - std::exp(-a * t) - p12)) < 1e-6);
    }
}

TEST_CASE("state survival")
{
    const auto cfg = DgmConfig::breast_cancer();
    const std::vector<double> z{0.0, 0.0};
    CHECK(state_survival(cfg, z, 1, 2557) == doctest::Approx(0.7128).epsilon(1e-4));
    CHECK(state_survival(cfg, z, 5, 2557) == 1.0);
    TransitionProbabilityEngine eng(cfg, z);
    CHECK(std::abs(eng.probability(1, 1, 2557) - state_survival(cfg, z, 1, 2557)) < 1e-12);
    CHECK(eng.row(1, 0.0)[0] == 1.0);
}

TEST_CASE("quadrature agrees with the matrix exponential")
{
    const auto cfg = DgmConfig::breast_cancer();
    std::mt19937_64 rng(2);
    std::normal_distribution<double> nd;
    for (int rep = 0; rep < 8; ++rep) {
        const std::vector<double> z{nd(rng), nd(rng)};
        const double t = rep == 0 ? 2557.0 : 500.0 + 700.0 * rep;
        const Eigen::MatrixXd P = expm_oracle(cfg, z, t);
        TransitionProbabilityEngine eng(cfg, z);
        for (StateId i = 1; i <= 5; ++i) {
            const Eigen::VectorXd row = eng.row(i, t);
            CHECK((row.transpose() - P.row(i - 1)).cwiseAbs().maxCoeff() < 1e-6);
            CHECK(std::abs(row.sum() - 1.0) < 1e-6);
        }
    }
}

TEST_CASE("route probabilities add up to the transition probability")
{
    const auto cfg = DgmConfig::breast_cancer();
    const std::vector<double> z{0.3, -1.1};
    TransitionProbabilityEngine eng(cfg, z);
    const double t = 2557;
    const std::vector<StateId> r124{1, 2, 4}, r134{1, 3, 4};
    CHECK(std::abs(eng.route_probability(r124, t) + eng.route_probability(r134, t) - eng.probability(1, 4, t)) <
          2e-6);
    const std::vector<std::vector<StateId>> to5{{1, 5}, {1, 2, 5}, {1, 3, 5}, {1, 2, 4, 5}, {1, 3, 4, 5}};
    double sum = 0.0;
    for (const auto& r : to5)
        sum += eng.route_probability(r, t);
    CHECK(std::abs(sum - eng.probability(1, 5, t)) < 2e-6);
    const std::vector<StateId> r11{1};
    CHECK(std::abs(eng.route_probability(r11, t) - eng.survival(1, t)) < 1e-12);
    const std::vector<StateId> illegal{1, 4};
    CHECK_THROWS_AS(eng.route_probability(illegal, t), Error);
}

TEST_CASE("rescaling time and scales together leaves probabilities unchanged")
{
    const auto cfg = DgmConfig::breast_cancer();
    auto fast = cfg;
    for (auto& s : fast.scales)
        s /= 100.0;
    const std::vector<double> z{-0.4, 0.9};
    TransitionProbabilityEngine a(cfg, z), b(fast, z);
    CHECK((a.row(1, 2557) - b.row(1, 25.57)).cwiseAbs().maxCoeff() < 2e-6);
}

TEST_CASE("cohort truths")
{
    const auto cfg = DgmConfig::breast_cancer();
    Eigen::MatrixXd Z(3, 2);
    Z << 0.2, 0.7, 0.2, 0.7, -1.0, 1.5;
    const auto p = true_probabilities(cfg, {10, 11, 12}, Z, 2557);
    CHECK(p.ids == std::vector<SubjectId>{10, 11, 12});
    CHECK(p.probs.row(0) == p.probs.row(1));
    for (Eigen::Index i = 0; i < 3; ++i)
        CHECK(std::abs(p.probs.row(i).sum() - 1.0) < 1e-6);
    // Covariates enter only through z1 - z2.
    Eigen::MatrixXd Z2(1, 2);
    Z2 << 1.0, 1.5;
    const auto q = true_probabilities(cfg, {1}, Z2, 2557);
    Eigen::MatrixXd Z3(1, 2);
    Z3 << 0.0, 0.5;
    const auto r = true_probabilities(cfg, {1}, Z3, 2557);
    CHECK((q.probs - r.probs).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("estimand and reference curve")
{
    PredictionMatrix preds, truths;
    preds.ids = truths.ids = {1, 2};
    preds.probs.resize(2, 2);
    preds.probs << 0.5, 0.5, 0.5, 0.5;
    truths.probs.resize(2, 2);
    truths.probs << 0.4, 0.6, 0.4, 0.6;
    const auto est = compute_estimand(preds, truths);
    CHECK(est.mean[0] == doctest::Approx(-0.1));
    CHECK(est.mean[1] == doctest::Approx(0.1));

    preds.probs.resize(3, 2);
    preds.probs << 0.1, 0.9, 0.1, 0.9, 0.3, 0.7;
    truths.probs.resize(3, 2);
    truths.probs << 0.2, 0.8, 0.4, 0.6, 0.5, 0.5;
    preds.ids = truths.ids = {1, 2, 3};
    const auto e = compute_estimand(preds, truths);
    const std::vector<double> query{0.0, 0.1, 0.2, 0.3, 0.5};
    const auto ref = true_curve_reference(e, query, 1);
    REQUIRE(ref.values.size() == 5);
    CHECK(ref.values[0] == doctest::Approx(0.3));
    CHECK(ref.values[1] == doctest::Approx(0.3));
    CHECK(ref.values[2] == doctest::Approx(0.4));
    CHECK(ref.values[3] == doctest::Approx(0.5));
    CHECK(ref.values[4] == doctest::Approx(0.5));
    CHECK(ref.n_clipped == 2);
}
