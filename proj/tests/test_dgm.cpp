#include "helpers.hpp"

#include "mscal/dgm.hpp"
#include "mscal/error.hpp"
#include "mscal/parallel.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

using namespace mscal;

TEST_CASE("baseline scales hit the per-transition survival targets")
{
    const auto cfg = DgmConfig::breast_cancer();
    const std::vector<std::pair<Transition, double>> targets{
        {{1, 2}, 0.9},  {{1, 3}, 0.8}, {{1, 5}, 0.99}, {{2, 4}, 0.55},
        {{2, 5}, 0.95}, {{3, 4}, 0.7}, {{3, 5}, 0.15}, {{4, 5}, 0.05}};
    for (const auto& [tr, s] : targets)
        CHECK(std::exp(-kSevenYears / cfg.scale(tr.from, tr.to)) == doctest::Approx(s).epsilon(0.005));
    const std::vector<double> z0{0.0, 0.0};
    CHECK(std::exp(-kSevenYears * cfg.censoring_rate(z0)) == doctest::Approx(0.5999).epsilon(1e-3));
}

TEST_CASE("rates and scenarios")
{
    const auto cfg = DgmConfig::breast_cancer(Scenario::SIC);
    const std::vector<double> z{1.0, -1.0};
    CHECK(cfg.hazard_multiplier(z) == doctest::Approx(std::exp(1.0)));
    CHECK(cfg.rate(1, 2, z) == doctest::Approx(std::exp(1.0) / 24267.0));
    CHECK(cfg.censoring_rate(z) == doctest::Approx(std::exp(2.0) / 5005.0));
    CHECK(censoring_coefficients(Scenario::NIC) == std::array<double, 2>{0.0, 0.0});
    CHECK(censoring_coefficients(Scenario::WIC) == std::array<double, 2>{0.25, -0.25});
    CHECK(censoring_coefficients(Scenario::SIC) == std::array<double, 2>{1.0, -1.0});
    CHECK(parse_scenario("Sic") == Scenario::SIC);
    CHECK_THROWS_AS(parse_scenario("moderate"), Error);
    CHECK(cfg.with_scenario(Scenario::NIC).beta_cens == std::vector<double>{0.0, 0.0});
    CHECK_THROWS_AS(cfg.rate(1, 4, z), Error);
}

TEST_CASE("configuration JSON round trip and validation")
{
    auto cfg = DgmConfig::breast_cancer(Scenario::WIC);
    const auto back = DgmConfig::from_json(cfg.to_json());
    CHECK(back.structure == cfg.structure);
    CHECK(back.scales == cfg.scales);
    CHECK(back.beta_trans == cfg.beta_trans);
    CHECK(back.beta_cens == cfg.beta_cens);
    CHECK(back.lambda_cens == cfg.lambda_cens);
    CHECK(back.horizon == cfg.horizon);

    const auto open = testing::uncensored(cfg);
    CHECK(std::isinf(DgmConfig::from_json(open.to_json()).lambda_cens));

    CHECK_THROWS_AS(DgmConfig::from_json("{\"n_states\": 2}"), Error);
    CHECK_THROWS_AS(DgmConfig::from_json("not json"), Error);
    auto bad = cfg;
    bad.scales.pop_back();
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = cfg;
    bad.scales[0] = -1.0;
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("simulation is deterministic and independent of the worker count")
{
    const auto cfg = DgmConfig::breast_cancer(Scenario::WIC);
    set_max_threads(1);
    const Cohort a = simulate_cohort(cfg, 500, 99);
    set_max_threads(4);
    const Cohort b = simulate_cohort(cfg, 500, 99);
    set_max_threads(0);
    CHECK(a == b);
    CHECK_FALSE(simulate_cohort(cfg, 500, 100) == a);
    CHECK(a[0].id == 1);
    CHECK(a[499].id == 500);
}

TEST_CASE("covariates depend only on seed and subject")
{
    const Cohort small = simulate_cohort(DgmConfig::breast_cancer(Scenario::NIC), 50, 4);
    const Cohort large = simulate_cohort(DgmConfig::breast_cancer(Scenario::SIC), 200, 4);
    for (std::size_t i = 0; i < small.size(); ++i)
        CHECK(small[i].covariates == large[i].covariates);
}

TEST_CASE("censoring truncates histories")
{
    const auto cfg = DgmConfig::breast_cancer(Scenario::SIC);
    const Cohort c = simulate_cohort(cfg, 2000, 5);
    std::size_t censored = 0;
    for (const auto& s : c.subjects()) {
        if (!s.censor_time)
            CHECK(c.structure().is_absorbing(s.last_state()));
        else {
            ++censored;
            CHECK(s.last_entry_time() < *s.censor_time);
            CHECK_FALSE(c.structure().is_absorbing(s.last_state()));
        }
    }
    CHECK(censored > 0);

    const Cohort open = simulate_cohort(testing::uncensored(cfg), 500, 5);
    for (const auto& s : open.subjects()) {
        CHECK_FALSE(s.censor_time.has_value());
        CHECK(open.structure().is_absorbing(s.last_state()));
    }
}

TEST_CASE("logit-shift miscalibration")
{
    PredictionMatrix p;
    p.ids = {1};
    p.probs = Eigen::RowVector2d(0.5, 0.2);
    const auto over = miscalibrate(p, 0.5);
    CHECK(over.probs(0, 0) == doctest::Approx(0.6225).epsilon(1e-4));
    CHECK(over.probs(0, 1) == doctest::Approx(0.2919).epsilon(1e-4));
    CHECK_FALSE(over.row_normalized);
    const auto same = miscalibrate(p, 0.0);
    CHECK(same.probs == p.probs);
    CHECK(same.row_normalized);
}

TEST_CASE("without-replacement subsampling")
{
    const auto rows = sample_rows(1000, 100, 7, 0);
    CHECK(rows.size() == 100);
    CHECK(std::set<std::size_t>(rows.begin(), rows.end()).size() == 100);
    CHECK(*std::max_element(rows.begin(), rows.end()) < 1000);
    CHECK(sample_rows(1000, 100, 7, 0) == rows);
    CHECK(sample_rows(1000, 100, 7, 1) != rows);

    auto all = sample_rows(50, 50, 3, 2);
    std::sort(all.begin(), all.end());
    CHECK(all == testing::iota(50));
    CHECK_THROWS_AS(sample_rows(10, 11, 1, 0), Error);

    const Cohort super = simulate_cohort(DgmConfig::breast_cancer(), 300, 1);
    const Cohort sub = superpopulation_sample(super, 30, 1, 4);
    const auto picked = sample_rows(300, 30, 1, 4);
    for (std::size_t i = 0; i < 30; ++i)
        CHECK(sub[i] == super[picked[i]]);
}
