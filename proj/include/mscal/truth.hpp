#pragma once

// True transition probabilities out of state 1 for a simulation configuration,
// computed by nested adaptive quadrature of the backward recursion
//   P_ij(u, t) = 1{i = j} S_i(t)/S_i(u) + sum_m int_u^t lambda_im S_i(r)/S_i(u) P_mj(r, t) dr,
// and the simulation estimands built from them.

#include "mscal/data.hpp"
#include "mscal/dgm.hpp"

#include <Eigen/Core>

#include <span>
#include <vector>

namespace mscal {

/// Probability of remaining in state j over [0, t]: exp(-t sum_k rate_jk(z)).
double state_survival(const DgmConfig& config, std::span<const double> z, StateId j, double t);

class TransitionProbabilityEngine {
public:
    /// `tolerance` bounds the absolute error of every returned probability.
    TransitionProbabilityEngine(const DgmConfig& config, std::span<const double> z, double tolerance = 1e-6);

    int n_states() const noexcept { return n_states_; }

    /// Row `from` of P(u, u + s); the hazards do not depend on time.
    Eigen::VectorXd row(StateId from, double s) const;

    /// P(0, s) for one pair.
    double probability(StateId from, StateId to, double s) const { return row(from, s)[to - 1]; }

    /// Probability of following exactly `route` (consecutive states, each
    /// transition allowed) over [0, s] and occupying its last state at s.
    double route_probability(std::span<const StateId> route, double s) const;

    double survival(StateId j, double s) const;

    /// Integrand evaluations used so far (for diagnostics).
    std::size_t evaluations() const noexcept { return evaluations_; }

private:
    using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 16, 1>;

    Vec row_vec(int i, double s) const;
    Vec integral(int i, double s, double a, double b, double tol, int depth) const;
    double route_integral(std::span<const StateId> route, double s, double a, double b, double tol,
                          int depth) const;

    int n_states_ = 0;
    double level_tol_ = 1e-9;
    std::vector<double> exit_rate_;                       // per state
    std::vector<std::vector<std::pair<int, double>>> out_; // per state: (target index, rate)
    mutable std::size_t evaluations_ = 0;
};

/// P_1k(0, t | z).
double true_transition_prob(const DgmConfig& config, std::span<const double> z, StateId k, double t);

/// Truths for every subject of a cohort (or covariate matrix), one row each.
PredictionMatrix true_probabilities(const DgmConfig& config, const Cohort& cohort, double t);
PredictionMatrix true_probabilities(const DgmConfig& config, const std::vector<SubjectId>& ids,
                                    const Eigen::MatrixXd& Z, double t);

struct Estimand {
    std::vector<std::vector<CalPoint>> moderate; // per state: (predicted, true), sorted by predicted
    Eigen::VectorXd mean;                        // per state: mean(p - p_hat)
};

Estimand compute_estimand(const PredictionMatrix& preds, const PredictionMatrix& truths);

struct ReferenceCurve {
    std::vector<double> values;
    std::size_t n_clipped = 0; // queries outside the estimand's predicted range
};

/// Piecewise-linear interpolation of the estimand points of `state` (ties in
/// the predicted value averaged), clamped to the end values outside the range.
ReferenceCurve true_curve_reference(const Estimand& estimand, std::span<const double> query, StateId state);

}  // namespace mscal
