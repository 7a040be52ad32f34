#pragma once

// Numerical substrate of the calibration regressions: weighted loess, natural
// cubic spline bases, and weighted binary / multinomial logistic solvers.

#include <Eigen/Core>

#include <span>
#include <vector>

namespace mscal {

struct LoessFit {
    double span = 0.75;
    int degree = 2;
    std::vector<double> x_sorted;
    std::vector<double> fitted;     // in input order
    std::vector<std::size_t> order; // x_sorted[r] == x[order[r]]
    std::size_t n_degenerate = 0;   // points that fell back to a local weighted mean

    bool degenerate() const noexcept { return n_degenerate > 0; }
};

/// Local polynomial regression evaluated at every x_i. The ceil(span * n)
/// nearest neighbours get weight tricube(distance / max distance) * w_j.
/// No robustness iterations.
LoessFit loess(std::span<const double> x, std::span<const double> y, std::span<const double> w,
               double span = 0.75, int degree = 2);

/// Natural cubic spline basis without intercept: df columns, interior knots at
/// the k/df quantiles of x, boundary knots at min/max, linear outside them.
struct SplineBasis {
    int df = 0;
    std::vector<double> knots; // interior, original scale
    double lower = 0.0;
    double upper = 1.0;
    Eigen::MatrixXd basis; // n x df at the construction points

    Eigen::MatrixXd evaluate(std::span<const double> x) const;
};

SplineBasis natural_spline_basis(std::span<const double> x, int df = 4);

// Weighted binary logistic regression -----------------------------------------------

struct LogisticFit {
    Eigen::VectorXd coef;
    Eigen::VectorXd gradient; // score of the weighted log-likelihood at coef
    double deviance = 0.0;
    int iterations = 0;
};

/// Maximises sum w_i [y_i log mu_i + (1 - y_i) log(1 - mu_i)] with
/// logit(mu) = X b + offset by Newton/IRLS with step halving. Converged when
/// the relative deviance change drops below 1e-10 (at most 100 iterations).
/// Throws DivergedToInfinity on separation and FitSingular on rank deficiency.
LogisticFit weighted_logistic(const Eigen::MatrixXd& X, std::span<const double> y,
                              std::span<const double> w, std::span<const double> offset = {});

double logistic_loglik(const Eigen::MatrixXd& X, std::span<const double> y, std::span<const double> w,
                       std::span<const double> offset, const Eigen::VectorXd& coef);
/// Gradient of logistic_loglik in coef.
Eigen::VectorXd logistic_score(const Eigen::MatrixXd& X, std::span<const double> y, std::span<const double> w,
                               std::span<const double> offset, const Eigen::VectorXd& coef);

// Weighted multinomial logistic regression ----------------------------------------------

/// Equation e (0-based) models log P(category e+2) / P(category 1).
struct MultinomialFit {
    std::vector<Eigen::VectorXd> coef;
    Eigen::VectorXd gradient; // stacked over equations
    Eigen::MatrixXd fitted;   // n x K category probabilities
    double deviance = 0.0;
    int iterations = 0;
    bool ridge_used = false;
};

/// Fisher scoring with the full block information matrix. `designs` holds one
/// n x p_e design per equation (K - 1 of them), `category` takes values
/// 1..K, `offsets` is empty or one n-vector per equation. A 1e-6 ridge is
/// added (and flagged) if the information matrix is not positive definite.
MultinomialFit weighted_multinomial(const std::vector<Eigen::MatrixXd>& designs,
                                    std::span<const int> category, std::span<const double> w,
                                    const std::vector<Eigen::VectorXd>& offsets = {});

double multinomial_loglik(const std::vector<Eigen::MatrixXd>& designs, std::span<const int> category,
                          std::span<const double> w, const std::vector<Eigen::VectorXd>& offsets,
                          const std::vector<Eigen::VectorXd>& coef);
/// Gradient of multinomial_loglik, stacked over equations.
Eigen::VectorXd multinomial_score(const std::vector<Eigen::MatrixXd>& designs, std::span<const int> category,
                                  std::span<const double> w, const std::vector<Eigen::VectorXd>& offsets,
                                  const std::vector<Eigen::VectorXd>& coef);

/// Columns of X (by index, ascending) that form a numerically full-rank subset,
/// chosen by column-pivoted QR.
std::vector<int> independent_columns(const Eigen::MatrixXd& X, double tolerance = 1e-9);

/// Type-7 quantile of an ascending sample, p in [0, 1].
double quantile7(std::span<const double> sorted, double p);

double logit(double p);
double expit(double x);

}  // namespace mscal
