#pragma once

#include "mscal/data.hpp"
#include "mscal/dgm.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

namespace testing {

inline mscal::SubjectHistory subject(mscal::SubjectId id, std::vector<mscal::PathEntry> path,
                                     std::optional<double> censor = std::nullopt, std::vector<double> z = {})
{
    mscal::SubjectHistory s;
    s.id = id;
    s.path = std::move(path);
    s.censor_time = censor;
    s.covariates = std::move(z);
    return s;
}

inline mscal::DgmConfig uncensored(mscal::DgmConfig c)
{
    c.lambda_cens = std::numeric_limits<double>::infinity();
    return c;
}

// Rows of preds restricted to the prefix [0, n).
inline std::vector<std::size_t> iota(std::size_t n)
{
    std::vector<std::size_t> r(n);
    for (std::size_t i = 0; i < n; ++i)
        r[i] = i;
    return r;
}

// Indicator matrix with every subject included; categories are 1-based.
inline mscal::IndicatorMatrix indicators_from(const std::vector<int>& category, int K)
{
    mscal::IndicatorMatrix ind;
    const auto n = static_cast<Eigen::Index>(category.size());
    ind.included.assign(category.size(), 1);
    ind.indicators = Eigen::MatrixXd::Zero(n, K);
    ind.category = category;
    for (Eigen::Index i = 0; i < n; ++i)
        ind.indicators(i, category[static_cast<std::size_t>(i)] - 1) = 1.0;
    return ind;
}

inline int draw_category(std::mt19937_64& rng, const Eigen::RowVectorXd& p)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double v = u(rng), acc = 0.0;
    for (Eigen::Index k = 0; k < p.size(); ++k) {
        acc += p[k];
        if (v < acc)
            return static_cast<int>(k) + 1;
    }
    return static_cast<int>(p.size());
}

// Illness-death cohort observed at t = 1 in which everyone has the same
// spread of predicted illness risk, but half the subjects (group A, even
// rows) share the remaining risk with 'healthy' and are over-predicted for
// illness by delta, while group B shares it with 'death' and is
// under-predicted by delta.
struct GroupExample {
    mscal::Cohort cohort;
    mscal::PredictionMatrix preds;
    std::vector<int> group; // 0 = A, 1 = B
};

inline GroupExample group_ab_example(std::size_t n, double delta, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> illness(0.3, 0.6);
    const double small = 0.02;
    GroupExample ex;
    ex.preds.horizon = 1.0;
    ex.preds.probs.resize(static_cast<Eigen::Index>(n), 3);
    std::vector<mscal::SubjectHistory> subjects;
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const double p2 = illness(rng);
        const int g = static_cast<int>(i % 2);
        Eigen::RowVector3d pred, truth;
        if (g == 0) {
            pred << 1.0 - p2 - small, p2, small;
            truth << pred[0] + delta, p2 - delta, small;
        }
        else {
            pred << small, p2, 1.0 - p2 - small;
            truth << small, p2 + delta, pred[2] - delta;
        }
        ex.preds.probs.row(r) = pred;
        ex.preds.ids.push_back(static_cast<mscal::SubjectId>(i + 1));
        ex.group.push_back(g);
        const int k = draw_category(rng, truth);
        const auto id = static_cast<mscal::SubjectId>(i + 1);
        if (k == 1)
            subjects.push_back(subject(id, {{1, 0.0}}, 2.0));
        else if (k == 2)
            subjects.push_back(subject(id, {{1, 0.0}, {2, 0.5}}, 2.0));
        else
            subjects.push_back(subject(id, {{1, 0.0}, {3, 0.5}}));
    }
    ex.cohort = mscal::Cohort(mscal::TransitionStructure::illness_death(), std::move(subjects));
    return ex;
}

}  // namespace testing
