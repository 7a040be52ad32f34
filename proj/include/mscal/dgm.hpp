#pragma once

// Simulation of progressive multistate cohorts with competing exponential
// transition times, proportional covariate effects and exponential censoring.

#include "mscal/data.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace mscal {

enum class Scenario { NIC, WIC, SIC };

std::string_view to_string(Scenario s);
/// Case-insensitive "nic", "wic", "sic". Throws InvalidArgument otherwise.
Scenario parse_scenario(std::string_view name);
/// Censoring coefficients (beta_cens,1, beta_cens,2).
std::array<double, 2> censoring_coefficients(Scenario s);

struct DgmConfig {
    TransitionStructure structure;
    std::vector<double> scales;     // mean sojourn scale per structure transition, days
    std::vector<double> beta_trans; // shared by all transitions
    std::vector<double> beta_cens;
    double lambda_cens = 5005.0;    // infinity disables censoring
    double horizon = kSevenYears;

    /// Throws InvalidArgument on any inconsistency.
    void validate() const;

    std::size_t n_covariates() const noexcept { return beta_trans.size(); }
    double scale(StateId from, StateId to) const;

    /// exp(beta_trans' z)
    double hazard_multiplier(std::span<const double> z) const;
    /// Hazard of from -> to for covariates z.
    double rate(StateId from, StateId to, std::span<const double> z) const;
    /// exp(beta_cens' z) / lambda_cens
    double censoring_rate(std::span<const double> z) const;

    /// Same configuration with beta_cens replaced by the scenario's values.
    DgmConfig with_scenario(Scenario s) const;

    /// The five-state structure with the standard baseline scales.
    static DgmConfig breast_cancer(Scenario s = Scenario::NIC);

    std::string to_json() const;
    static DgmConfig from_json(std::string_view text);
};

/// n subjects with ids 1..n. Subject i draws from its own random stream, so the
/// result does not depend on the number of workers.
Cohort simulate_cohort(const DgmConfig& config, std::size_t n, std::uint64_t seed);
Cohort simulate_cohort(const DgmConfig& config, Scenario scenario, std::size_t n, std::uint64_t seed);

/// Entrywise logit shift: sigma(logit(p) + delta). Rows are not renormalised.
PredictionMatrix miscalibrate(const PredictionMatrix& preds, double delta);

/// Positions of a without-replacement sample of n_sub out of n_super, a pure
/// function of (seed, iteration).
std::vector<std::size_t> sample_rows(std::size_t n_super, std::size_t n_sub, std::uint64_t seed,
                                     std::uint64_t iteration);

/// Subsample of a superpopulation cohort; ids are kept.
Cohort superpopulation_sample(const Cohort& superpopulation, std::size_t n_sub, std::uint64_t seed,
                              std::uint64_t iteration);

}  // namespace mscal
