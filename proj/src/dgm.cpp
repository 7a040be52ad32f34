#include "mscal/dgm.hpp"

#include "mscal/error.hpp"
#include "mscal/parallel.hpp"
#include "mscal/smoothers.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace mscal {

namespace {

constexpr std::uint64_t kSimulationSalt = 0x51u;
constexpr std::uint64_t kSamplingSalt = 0x5au;

std::string lower(std::string_view s)
{
    std::string out(s);
    for (auto& c : out)
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

double dot(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * b[i];
    return s;
}

}  // namespace

std::string_view to_string(Scenario s)
{
    switch (s) {
    case Scenario::NIC: return "nic";
    case Scenario::WIC: return "wic";
    case Scenario::SIC: return "sic";
    }
    return "?";
}

Scenario parse_scenario(std::string_view name)
{
    const auto n = lower(name);
    if (n == "nic")
        return Scenario::NIC;
    if (n == "wic")
        return Scenario::WIC;
    if (n == "sic")
        return Scenario::SIC;
    throw Error(ErrorCode::InvalidArgument, "unknown scenario '" + std::string(name) + "' (expected nic, wic or sic)");
}

std::array<double, 2> censoring_coefficients(Scenario s)
{
    switch (s) {
    case Scenario::NIC: return {0.0, 0.0};
    case Scenario::WIC: return {0.25, -0.25};
    case Scenario::SIC: return {1.0, -1.0};
    }
    return {0.0, 0.0};
}

void DgmConfig::validate() const
{
    const auto& tr = structure.transitions();
    if (structure.n_states() < 2)
        throw Error(ErrorCode::InvalidArgument, "structure needs at least two states");
    if (scales.size() != tr.size())
        throw Error(ErrorCode::InvalidArgument, "one scale per transition is required");
    for (double s : scales)
        if (!(s > 0.0) || std::isnan(s))
            throw Error(ErrorCode::InvalidArgument, "scales must be positive");
    if (beta_cens.size() != beta_trans.size())
        throw Error(ErrorCode::InvalidArgument, "beta_cens and beta_trans must have the same length");
    for (double b : beta_trans)
        if (!std::isfinite(b))
            throw Error(ErrorCode::InvalidArgument, "beta_trans must be finite");
    for (double b : beta_cens)
        if (!std::isfinite(b))
            throw Error(ErrorCode::InvalidArgument, "beta_cens must be finite");
    if (!(lambda_cens > 0.0))
        throw Error(ErrorCode::InvalidArgument, "lambda_cens must be positive");
    if (!(horizon > 0.0) || !std::isfinite(horizon))
        throw Error(ErrorCode::InvalidArgument, "horizon must be positive");
}

double DgmConfig::scale(StateId from, StateId to) const
{
    const int k = structure.transition_index(from, to);
    if (k < 0)
        throw Error(ErrorCode::IllegalTransition,
                    "no transition " + std::to_string(from) + " -> " + std::to_string(to));
    return scales[static_cast<std::size_t>(k)];
}

double DgmConfig::hazard_multiplier(std::span<const double> z) const
{
    if (z.size() != beta_trans.size())
        throw Error(ErrorCode::DimensionMismatch, "covariate vector has the wrong length");
    return std::exp(dot(beta_trans, z));
}

double DgmConfig::rate(StateId from, StateId to, std::span<const double> z) const
{
    return hazard_multiplier(z) / scale(from, to);
}

double DgmConfig::censoring_rate(std::span<const double> z) const
{
    if (z.size() != beta_cens.size())
        throw Error(ErrorCode::DimensionMismatch, "covariate vector has the wrong length");
    return std::exp(dot(beta_cens, z)) / lambda_cens;
}

DgmConfig DgmConfig::with_scenario(Scenario s) const
{
    if (beta_cens.size() != 2)
        throw Error(ErrorCode::InvalidArgument, "scenarios are defined for two covariates");
    DgmConfig c = *this;
    const auto b = censoring_coefficients(s);
    c.beta_cens = {b[0], b[1]};
    return c;
}

DgmConfig DgmConfig::breast_cancer(Scenario s)
{
    DgmConfig c;
    c.structure = TransitionStructure::breast_cancer();
    // Order of structure.transitions(): 1-2, 1-3, 1-5, 2-4, 2-5, 3-4, 3-5, 4-5.
    c.scales = {24267, 11458, 254394, 4277, 49856, 7168, 1348, 853};
    c.beta_trans = {0.5, -0.5};
    c.beta_cens = {0.0, 0.0};
    c.lambda_cens = 5005.0;
    c.horizon = kSevenYears;
    return c.with_scenario(s);
}

std::string DgmConfig::to_json() const
{
    nlohmann::ordered_json j;
    j["n_states"] = structure.n_states();
    auto tr = nlohmann::ordered_json::array();
    for (std::size_t k = 0; k < structure.transitions().size(); ++k) {
        const auto& t = structure.transitions()[k];
        tr.push_back({{"from", t.from}, {"to", t.to}, {"scale", scales[k]}});
    }
    j["transitions"] = tr;
    j["beta_trans"] = beta_trans;
    j["beta_cens"] = beta_cens;
    if (std::isinf(lambda_cens))
        j["lambda_cens"] = nullptr;
    else
        j["lambda_cens"] = lambda_cens;
    j["horizon"] = horizon;
    return j.dump(2) + "\n";
}

DgmConfig DgmConfig::from_json(std::string_view text)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
        DgmConfig c;
        const int n_states = j.at("n_states").get<int>();
        std::vector<std::pair<Transition, double>> entries;
        for (const auto& t : j.at("transitions"))
            entries.push_back({{t.at("from").get<int>(), t.at("to").get<int>()}, t.at("scale").get<double>()});
        std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        std::vector<Transition> transitions;
        for (const auto& e : entries) {
            transitions.push_back(e.first);
            c.scales.push_back(e.second);
        }
        c.structure = TransitionStructure(n_states, transitions);
        c.beta_trans = j.at("beta_trans").get<std::vector<double>>();
        c.beta_cens = j.value("beta_cens", std::vector<double>(c.beta_trans.size(), 0.0));
        if (j.contains("lambda_cens"))
            c.lambda_cens = j["lambda_cens"].is_null() ? std::numeric_limits<double>::infinity()
                                                       : j["lambda_cens"].get<double>();
        c.horizon = j.value("horizon", kSevenYears);
        c.validate();
        return c;
    }
    catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("bad configuration JSON: ") + e.what());
    }
}

Cohort simulate_cohort(const DgmConfig& config, std::size_t n, std::uint64_t seed)
{
    config.validate();
    const auto& structure = config.structure;
    const std::size_t p = config.n_covariates();
    std::vector<SubjectHistory> subjects(n);
    parallel_for(n, [&](std::size_t i) {
        Rng rng = stream_rng(seed, i, kSimulationSalt);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::exponential_distribution<double> unit_exp(1.0);

        SubjectHistory& s = subjects[i];
        s.id = static_cast<SubjectId>(i + 1);
        s.covariates.resize(p);
        for (auto& z : s.covariates)
            z = normal(rng);
        const double censor_rate = config.censoring_rate(s.covariates);
        const double censor = censor_rate > 0.0 ? unit_exp(rng) / censor_rate
                                                : std::numeric_limits<double>::infinity();
        const double mult = config.hazard_multiplier(s.covariates);

        s.path.push_back({1, 0.0});
        double now = 0.0;
        StateId state = 1;
        while (!structure.is_absorbing(state)) {
            double best = std::numeric_limits<double>::infinity();
            StateId next = 0;
            for (StateId to : structure.targets(state)) {
                const double dt = unit_exp(rng) * config.scale(state, to) / mult;
                if (dt < best) {
                    best = dt;
                    next = to;
                }
            }
            if (now + best > censor)
                break;
            now += best;
            state = next;
            s.path.push_back({state, now});
        }
        if (!structure.is_absorbing(state))
            s.censor_time = censor;
    });
    return Cohort(structure, std::move(subjects));
}

Cohort simulate_cohort(const DgmConfig& config, Scenario scenario, std::size_t n, std::uint64_t seed)
{
    return simulate_cohort(config.with_scenario(scenario), n, seed);
}

PredictionMatrix miscalibrate(const PredictionMatrix& preds, double delta)
{
    PredictionMatrix out = preds;
    if (delta == 0.0)
        return out;
    out.probs = preds.probs.unaryExpr([delta](double p) { return expit(logit(p) + delta); });
    out.row_normalized = false;
    return out;
}

std::vector<std::size_t> sample_rows(std::size_t n_super, std::size_t n_sub, std::uint64_t seed,
                                     std::uint64_t iteration)
{
    if (n_sub > n_super)
        throw Error(ErrorCode::InvalidArgument, "sample larger than the superpopulation");
    Rng rng = stream_rng(seed, iteration, kSamplingSalt);
    std::vector<std::size_t> rows(n_super);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    // Partial Fisher-Yates with an explicit bounded draw (portable across libraries).
    for (std::size_t i = 0; i < n_sub; ++i) {
        const std::uint64_t range = n_super - i;
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % range;
        std::uint64_t r;
        do
            r = rng();
        while (r >= limit);
        std::swap(rows[i], rows[i + static_cast<std::size_t>(r % range)]);
    }
    rows.resize(n_sub);
    return rows;
}

Cohort superpopulation_sample(const Cohort& superpopulation, std::size_t n_sub, std::uint64_t seed,
                              std::uint64_t iteration)
{
    const auto rows = sample_rows(superpopulation.size(), n_sub, seed, iteration);
    return superpopulation.subset(rows);
}

}  // namespace mscal
