#include "helpers.hpp"

#include "mscal/csv.hpp"
#include "mscal/data.hpp"
#include "mscal/dgm.hpp"
#include "mscal/error.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace mscal;
using testing::subject;

TEST_CASE("structure ordering and lookup")
{
    const auto s = TransitionStructure::breast_cancer();
    CHECK(s.n_states() == 5);
    CHECK(s.transitions().size() == 8);
    CHECK(s.allows(1, 5));
    CHECK_FALSE(s.allows(5, 1));
    CHECK(s.is_absorbing(5));
    CHECK(s.absorbing() == std::vector<StateId>{5});
    const auto& topo = s.topological_order();
    for (const auto& t : s.transitions()) {
        const auto a = std::find(topo.begin(), topo.end(), t.from);
        const auto b = std::find(topo.begin(), topo.end(), t.to);
        CHECK(a < b);
    }
}

TEST_CASE("cyclic or malformed structures are rejected")
{
    CHECK_THROWS_AS(TransitionStructure(3, {{1, 2}, {2, 3}, {3, 2}}), Error);
    CHECK_THROWS_AS(TransitionStructure(2, {{1, 1}}), Error);
    CHECK_THROWS_AS(TransitionStructure(2, {{1, 3}}), Error);
}

TEST_CASE("long format decoding")
{
    const auto structure = TransitionStructure::breast_cancer();
    const Cohort c = parse_long_format("id,from,to,tstart,tstop,status\n"
                                       "1,1,2,0,365,1\n"
                                       "1,2,5,365,900,0\n"
                                       "2,1,2,0,500,0\n",
                                       structure);
    REQUIRE(c.size() == 2);
    CHECK(c[0].path == std::vector<PathEntry>{{1, 0.0}, {2, 365.0}});
    CHECK(c[0].censor_time == 900.0);
    CHECK(c[1].path == std::vector<PathEntry>{{1, 0.0}});
    CHECK(c[1].censor_time == 500.0);

    try {
        parse_long_format("id,from,to,tstart,tstop,status\n1,1,2,10,5,1\n", structure);
        FAIL("expected MalformedHistory");
    }
    catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MalformedHistory);
    }
    try {
        parse_long_format("id,from,to,tstart,tstop,status\n1,1,4,0,5,1\n", structure);
        FAIL("expected IllegalTransition");
    }
    catch (const Error& e) {
        CHECK(e.code() == ErrorCode::IllegalTransition);
    }
}

TEST_CASE("mstate-style expanded rows merge into one interval")
{
    const auto structure = TransitionStructure::breast_cancer();
    const Cohort c = parse_long_format("id,from,to,tstart,tstop,status,z1\n"
                                       "7,1,2,0,100,0,0.5\n"
                                       "7,1,3,0,100,1,0.5\n"
                                       "7,1,5,0,100,0,0.5\n"
                                       "7,3,4,100,300,0,0.5\n"
                                       "7,3,5,100,300,0,0.5\n",
                                       structure);
    REQUIRE(c.size() == 1);
    CHECK(c[0].path == std::vector<PathEntry>{{1, 0.0}, {3, 100.0}});
    CHECK(c[0].censor_time == 300.0);
    CHECK(c[0].covariates == std::vector<double>{0.5});
}

TEST_CASE("long format round trip")
{
    const auto cfg = DgmConfig::breast_cancer(Scenario::WIC);
    const Cohort c = simulate_cohort(cfg, 300, 11);
    const Cohort back = parse_long_format(write_long_format(c), cfg.structure);
    CHECK(back == c);
    const Cohort inferred = parse_long_format(write_long_format(c));
    CHECK(inferred.subjects() == c.subjects());
}

TEST_CASE("horizon state resolution")
{
    const auto s = TransitionStructure::breast_cancer();
    CHECK(state_at(subject(1, {{1, 0}, {2, 365}}, 900.0), 400, s) == 2);
    CHECK_FALSE(state_at(subject(2, {{1, 0}}, 500.0), 2557, s).has_value());
    CHECK(state_at(subject(3, {{1, 0}, {5, 1000}}, 1200.0), 2557, s) == 5);
    CHECK(state_at(subject(4, {{1, 0}, {2, 400}}), 400, s) == 2);
    CHECK(weight_time(subject(3, {{1, 0}, {5, 1000}}), 2557, s) == 1000.0);
    CHECK(weight_time(subject(1, {{1, 0}, {2, 365}}, 9000.0), 2557, s) == 2557.0);
}

TEST_CASE("indicator matrix")
{
    const auto s = TransitionStructure::breast_cancer();
    const Cohort c(s, {subject(1, {{1, 0}}, 3000.0), subject(2, {{1, 0}}, 500.0),
                       subject(3, {{1, 0}, {5, 1000}}, 1200.0)});
    const auto ind = indicator_matrix(c, 2557);
    CHECK(ind.included == std::vector<std::uint8_t>{1, 0, 1});
    CHECK(ind.indicators(0, 0) == 1.0);
    CHECK(ind.indicators.row(1).sum() == 0.0);
    CHECK(ind.indicators(2, 4) == 1.0);
    CHECK(ind.category == std::vector<StateId>{1, 0, 5});
    CHECK(ind.n_included() == 2);
}

TEST_CASE("prediction clamping")
{
    PredictionMatrix m;
    m.ids = {1};
    m.probs = Eigen::RowVector3d(0.0, 0.5, 1.0);
    const auto c = clamp_predictions(m);
    CHECK(c.probs(0, 0) == 1e-10);
    CHECK(c.probs(0, 1) == 0.5);
    CHECK(c.probs(0, 2) == 1.0 - 1e-10);
    CHECK(c.clamped);
}

TEST_CASE("predictions align to cohort order and report offending ids")
{
    const auto s = TransitionStructure::two_state();
    const Cohort c(s, {subject(5, {{1, 0}}, 10.0), subject(3, {{1, 0}}, 10.0)});
    const auto p = parse_predictions("id,p1,p2\n3,0.2,0.8\n5,0.6,0.4\n", 5.0);
    const auto a = align_predictions(p, c);
    CHECK(a.ids == std::vector<SubjectId>{5, 3});
    CHECK(a.probs(0, 0) == 0.6);

    const auto bad = parse_predictions("id,p1,p2\n3,0.2,0.8\n9,0.6,0.4\n", 5.0);
    try {
        align_predictions(bad, c);
        FAIL("expected DimensionMismatch");
    }
    catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DimensionMismatch);
        CHECK(std::string(e.what()).find('9') != std::string::npos);
        CHECK(exit_code_for(e.code()) == 3);
    }
}

TEST_CASE("csv number formatting round-trips")
{
    for (double v : {0.1, 1.0 / 3.0, 2557.0, -1.25e-300, 6.02214076e23}) {
        const auto s = csv::format(v);
        CHECK(csv::to_double(s, 1) == v);
    }
}
