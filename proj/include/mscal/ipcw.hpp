#pragma once

// Censoring model (Cox proportional hazards on the time to censoring) and
// inverse probability of censoring weights at a prediction horizon.

#include "mscal/data.hpp"
#include "mscal/dgm.hpp"

#include <Eigen/Core>

#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mscal {

struct CoxModel {
    Eigen::VectorXd coefficients;
    Eigen::VectorXd covariate_means;
    std::vector<double> times;  // distinct event times, ascending
    std::vector<double> cumhaz; // baseline cumulative hazard at times, centred covariates
    Eigen::MatrixXd information;
    Eigen::VectorXd score;      // at the returned coefficients
    int iterations = 0;

    /// Step function value at t (0 before the first event time).
    double baseline_cumhaz(double t) const;
    /// Lambda_0(t) * exp(beta'(z - zbar))
    double cumulative_hazard(std::span<const double> z, double t) const;
    Eigen::VectorXd standard_errors() const;
};

/// Breslow-tie partial likelihood maximised by Newton-Raphson from beta = 0
/// (max |score| < 1e-8 or 50 iterations), Breslow baseline at the covariate
/// means. With no events the model is null: beta = 0 and Lambda_0 = 0.
CoxModel fit_cox(std::span<const double> times, std::span<const int> status, const Eigen::MatrixXd& Z);

/// exp(-Lambda_0(t) exp(beta'(z - zbar)))
double censoring_survival(const CoxModel& model, std::span<const double> z, double t);

/// Time-to-censoring data: censored subjects have the event at their
/// censoring time; absorbed subjects and open follow-up are censored for it.
struct CensoringData {
    std::vector<double> time;
    std::vector<int> status;
};

CensoringData censoring_outcome(const Cohort& cohort);

/// Cox model for censoring adjusting for every baseline covariate.
CoxModel fit_censoring_model(const Cohort& cohort);

struct WeightVector {
    std::vector<std::optional<double>> weights; // absent when the horizon state is unknown
    double cap = std::numeric_limits<double>::infinity();
    std::size_t n_capped = 0;
    std::size_t n_zero_survival = 0; // censoring survival underflowed, weight set to cap

    std::size_t size() const noexcept { return weights.size(); }
};

/// weight_i = min(cap, 1 / S_c(tau_i | z_i)), tau_i = absorption time if
/// absorbed by t, else t. Subjects whose state at t is unknown get no weight.
WeightVector compute_ipcw(const Cohort& cohort, const CoxModel& model, double t, double cap = 10.0);

/// Same rule with the censoring survival of the generating mechanism.
WeightVector true_weights(const Cohort& cohort, const DgmConfig& config, double t, double cap = 10.0);

/// Covariate-free censoring model (Nelson-Aalen) followed by compute_ipcw.
WeightVector misspecified_weights(const Cohort& cohort, double t, double cap = 10.0);

/// Weight 1 for every subject whose state at t is known.
WeightVector unit_weights(const Cohort& cohort, double t);

/// `id,weight`, empty weight for absent entries.
std::string write_weights(const Cohort& cohort, const WeightVector& w);
/// Reads `id,weight` and aligns it with the cohort. Subjects missing from the
/// file or with an empty field get no weight.
WeightVector parse_weights(std::string_view text, const Cohort& cohort);

}  // namespace mscal
