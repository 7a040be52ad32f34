#include "mscal/csv.hpp"

#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

namespace fs = std::filesystem;

namespace {

const fs::path& scratch()
{
    static const fs::path dir = [] {
        fs::path p = fs::temp_directory_path() / ("mscal_cli_test_" + std::to_string(::getpid()));
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

int run(const std::string& args, const std::string& log = "log.txt")
{
    const std::string cmd =
        std::string(MSCAL_CLI_PATH) + " " + args + " > " + (scratch() / log).string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

double num(std::string_view field) { return mscal::csv::to_double(field, 0); }

std::string dir(const std::string& name) { return (scratch() / name).string(); }

}  // namespace

TEST_CASE("simulate is byte-reproducible and writes a manifest")
{
    REQUIRE(run("simulate --scenario nic --n 100 --seed 1 --out " + dir("sim_a")) == 0);
    REQUIRE(run("simulate --scenario nic --n 100 --seed 1 --out " + dir("sim_b")) == 0);
    for (const char* f : {"cohort.csv", "covariates.csv", "config.json"})
        CHECK(slurp(scratch() / "sim_a" / f) == slurp(scratch() / "sim_b" / f));
    const std::string manifest = slurp(scratch() / "sim_a" / "manifest.json");
    CHECK(manifest.find("\"subcommand\": \"simulate\"") != std::string::npos);
    CHECK(manifest.find("cohort.csv") != std::string::npos);
    const std::string cov_text = slurp(scratch() / "sim_a" / "covariates.csv");
    const auto cov = mscal::csv::parse(cov_text);
    CHECK(cov.rows.size() == 100);
}

TEST_CASE("usage errors exit with 2")
{
    CHECK(run("simulate --scenario moderate --n 10 --out " + dir("bad"), "bad.txt") == 2);
    CHECK(slurp(scratch() / "bad.txt").find("scenario") != std::string::npos);
    REQUIRE(run("simulate --n 50 --seed 2 --out " + dir("sim_c")) == 0);
    REQUIRE(run("truth --covariates " + dir("sim_c") + "/covariates.csv --out " + dir("truth_c")) == 0);
    CHECK(run("calibrate --data " + dir("sim_c") + "/cohort.csv --pred " + dir("truth_c") +
              "/truth.csv --method blr --out " + dir("cal_c")) == 2);
    CHECK(run("frobnicate") == 2);
}

TEST_CASE("truth on three subjects")
{
    {
        std::ofstream f(scratch() / "three.csv");
        f << "id,z1,z2\n1,0,0\n2,1.5,-0.3\n3,-2,1\n";
    }
    REQUIRE(run("truth --covariates " + dir("three.csv") + " --out " + dir("truth3")) == 0);
    const std::string text = slurp(scratch() / "truth3" / "truth.csv");
    const auto t = mscal::csv::parse(text);
    REQUIRE(t.rows.size() == 3);
    CHECK(t.header.front() == "id");
    for (const auto& row : t.rows) {
        double sum = 0.0;
        for (std::size_t j = 1; j < row.size(); ++j)
            sum += num(row[j]);
        CHECK(std::abs(sum - 1.0) < 1e-6);
    }
}

TEST_CASE("id mismatch is a data error")
{
    REQUIRE(run("simulate --n 30 --seed 3 --out " + dir("sim_m")) == 0);
    std::ofstream f(scratch() / "pred_m.csv");
    f << "id,p1,p2,p3,p4,p5\n";
    for (int i = 101; i <= 130; ++i)
        f << i << ",0.6,0.1,0.1,0.1,0.1\n";
    f.close();
    CHECK(run("calibrate --data " + dir("sim_m") + "/cohort.csv --pred " + dir("pred_m.csv") +
                  " --horizon 2557 --method aj --out " + dir("cal_m"),
              "mismatch.txt") == 3);
    CHECK(slurp(scratch() / "mismatch.txt").find("ids not matched") != std::string::npos);
}

TEST_CASE("unit weights equal estimated weights without censoring")
{
    {
        std::ofstream f(scratch() / "open.json");
        f << R"({"n_states": 5,
  "transitions": [{"from": 1, "to": 2, "scale": 24267}, {"from": 1, "to": 3, "scale": 11458},
                  {"from": 1, "to": 5, "scale": 254394}, {"from": 2, "to": 4, "scale": 4277},
                  {"from": 2, "to": 5, "scale": 49856}, {"from": 3, "to": 4, "scale": 7168},
                  {"from": 3, "to": 5, "scale": 1348}, {"from": 4, "to": 5, "scale": 853}],
  "beta_trans": [0.5, -0.5], "beta_cens": [0, 0], "lambda_cens": null, "horizon": 2557})";
    }
    REQUIRE(run("simulate --config " + dir("open.json") + " --n 400 --seed 4 --out " + dir("sim_o")) == 0);
    REQUIRE(run("truth --config " + dir("open.json") + " --covariates " + dir("sim_o") + "/covariates.csv --out " +
                dir("truth_o")) == 0);
    const std::string common = "calibrate --data " + dir("sim_o") + "/cohort.csv --pred " + dir("truth_o") +
                               "/truth.csv --horizon 2557 --method blr --out ";
    REQUIRE(run(common + dir("cal_none") + " --weights none") == 0);
    REQUIRE(run(common + dir("cal_est") + " --weights estimated") == 0);
    const std::string ta = slurp(scratch() / "cal_none" / "curve_blr.csv");
    const std::string tb = slurp(scratch() / "cal_est" / "curve_blr.csv");
    const auto a = mscal::csv::parse(ta);
    const auto b = mscal::csv::parse(tb);
    REQUIRE(a.rows.size() == b.rows.size());
    REQUIRE(a.rows.size() == 5 * 400);
    for (std::size_t i = 0; i < a.rows.size(); ++i)
        for (std::size_t j = 1; j < a.rows[i].size(); ++j)
            CHECK(std::abs(num(a.rows[i][j]) - num(b.rows[i][j])) < 1e-9);
}

TEST_CASE("calibrate with every method")
{
    REQUIRE(run("simulate --scenario wic --n 3000 --seed 5 --out " + dir("sim_all")) == 0);
    REQUIRE(run("truth --covariates " + dir("sim_all") + "/covariates.csv --out " + dir("truth_all")) == 0);
    REQUIRE(run("calibrate --data " + dir("sim_all") + "/cohort.csv --pred " + dir("truth_all") +
                "/truth.csv --horizon 2557 --method all --svg --out " + dir("cal_all")) == 0);
    for (const char* m : {"aj", "pv", "blr", "mlr"})
        CHECK(fs::exists(scratch() / "cal_all" / (std::string("curve_") + m + ".csv")));
    CHECK(fs::exists(scratch() / "cal_all" / "curve_mlr_5.svg"));
    const std::string text = slurp(scratch() / "cal_all" / "summary.csv");
    const auto summary = mscal::csv::parse(text);
    CHECK(summary.rows.size() == 20);
}

TEST_CASE("experiment outputs")
{
    REQUIRE(run("experiment --scenario sic --small --n 200 --superpop 1000 --iterations 3 --methods aj,blr --out " +
                dir("exp_s")) == 0);
    const std::string report = slurp(scratch() / "exp_s" / "bias_report.csv");
    CHECK(report.rfind("method,state,bias,se,median,pct_2_5,pct_97_5,iterations,failures,error\n", 0) == 0);
    CHECK(mscal::csv::parse(report).rows.size() == 10);
    REQUIRE(run("experiment --scenario sic --small --n 200 --superpop 1000 --iterations 3 --methods aj,blr --out " +
                dir("exp_s2")) == 0);
    CHECK(slurp(scratch() / "exp_s2" / "bias_report.csv") == report);

    REQUIRE(run("experiment --paper-scale --n 300 --methods aj --out " + dir("exp_p"), "paper.txt") == 0);
    CHECK(slurp(scratch() / "paper.txt").find("warning: paper-scale") != std::string::npos);
    CHECK(fs::exists(scratch() / "exp_p" / "curve_aj_1.csv"));
    CHECK(fs::exists(scratch() / "exp_p" / "density_1.csv"));
    CHECK(run("experiment --iterations 5 --n 300 --out " + dir("exp_bad")) == 2);
}
