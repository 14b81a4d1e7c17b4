/// @file test_cli.cpp
/// @brief Config parsing, experiment runner exit codes, reports, determinism.
#include "nlcomp/cli/config.hpp"
#include "nlcomp/cli/experiments.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

using namespace nlcomp;
namespace fs = std::filesystem;

namespace {

const fs::path demo_dir{NLCOMP_DEMO_DIR};

/// Fresh scratch directory per test.
fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("nlcomp_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path write_file(const fs::path& dir, const std::string& name, const std::string& text) {
    const auto p = dir / name;
    std::ofstream(p) << text;
    return p;
}

struct Outcome {
    int code;
    std::string out, err;
};

Outcome run_config(const fs::path& config, const fs::path& out_dir,
                   std::optional<double> tol = std::nullopt) {
    std::ostringstream out, err;
    cli::RunOptions opts;
    opts.out_dir = out_dir;
    opts.tol_override = tol;
    const int code = cli::run(config, opts, out, err);
    return {code, out.str(), err.str()};
}

Outcome describe_config(const fs::path& config) {
    std::ostringstream out, err;
    const int code = cli::describe(config, out, err);
    return {code, out.str(), err.str()};
}

int run_binary(const std::string& args) {
    const std::string cmd = std::string(NLCOMP_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const char* solve_body = R"([experiment]
kind = solve

[grid]
lower = 0
upper = 1
h = 0.05

[measure]
kind = atomic
atoms = 0.25 4 | -0.25 4 | 1.5 0.5

[equation]
lambda = 1
diffusion = 1
source = quadratic:1,-1.5,-3.625

[data]
g = quadratic:1,0,0
exact = quadratic:1,0,0
)";

}  // namespace

TEST(Config, ParsesSectionsCommentsAndLists) {
    std::istringstream in("# top\n[a]\nx = 1.5 ; trailing\ny = 1, 2 ,3\n\n[b]\nname = hello world\n");
    const auto cfg = cli::Config::parse(in, "t.ini");
    EXPECT_TRUE(cfg.has_section("a"));
    EXPECT_EQ(cfg.number("a", "x"), 1.5);
    EXPECT_EQ(cfg.numbers("a", "y"), (std::vector<double>{1, 2, 3}));
    EXPECT_EQ(cfg.get("b", "name", ""), "hello world");
    EXPECT_EQ(cfg.number("b", "missing", 7.0), 7.0);
    EXPECT_EQ(cfg.integer("a", "z", 3), 3);
    EXPECT_NE(cfg.where("b", "name").find("t.ini:7"), std::string::npos);
}

TEST(Config, RejectsMalformedInputWithLineNumbers) {
    auto fails_at = [](const std::string& text, const std::string& needle) {
        std::istringstream in(text);
        try {
            cli::Config::parse(in, "bad.ini");
            ADD_FAILURE() << "accepted: " << text;
        } catch (const cli::ConfigError& e) {
            EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
        }
    };
    fails_at("[a]\nx = 1\nx = 2\n", "bad.ini:3");
    fails_at("[a]\n[a]\n", "bad.ini:2");
    fails_at("x = 1\n", "bad.ini:1");
    fails_at("[a]\njust words\n", "bad.ini:2");
    fails_at("[a\n", "bad.ini:1");

    std::istringstream in("[a]\nx = abc\nn = 1.5\n");
    const auto cfg = cli::Config::parse(in, "v.ini");
    EXPECT_THROW(cfg.number("a", "x"), cli::ConfigError);
    EXPECT_THROW(cfg.integer("a", "n"), cli::ConfigError);
    EXPECT_THROW(cfg.require("a", "nope"), cli::ConfigError);
}

TEST(Run, CompareDemoPasses) {
    const auto dir = scratch("compare");
    const auto r = run_config(demo_dir / "compare.ini", dir);
    EXPECT_EQ(r.code, 0) << r.err;
    const auto report = slurp(dir / "compare.report.txt");
    EXPECT_NE(report.find("violation: "), std::string::npos);
    EXPECT_NE(report.find("result: pass"), std::string::npos);
    EXPECT_TRUE(fs::exists(dir / "compare.u1.csv"));
    EXPECT_TRUE(fs::exists(dir / "compare.u2.csv"));
}

TEST(Run, DoublingDemoReportsMargin) {
    const auto dir = scratch("doubling");
    const auto r = run_config(demo_dir / "doubling.ini", dir);
    EXPECT_EQ(r.code, 0) << r.err;
    const auto report = slurp(dir / "doubling.report.txt");
    const auto at = report.find("\nmu: ");
    ASSERT_NE(at, std::string::npos) << report;
    EXPECT_NEAR(std::stod(report.substr(at + 5)), 1.5, 1e-9);
    EXPECT_NE(report.find("seed: 20240517"), std::string::npos);
}

TEST(Run, LambdaZeroIsAConfigError) {
    const auto r = run_config(demo_dir / "lambda_zero.ini", scratch("lambda"));
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("properness"), std::string::npos) << r.err;
}

TEST(Run, FailingCheckExitsOneNamingTheClause) {
    const auto dir = scratch("failing");
    const auto cfg = write_file(dir, "tight.ini", std::string(solve_body) + "\n[checks]\nmax_error = 1e-30\n");
    const auto r = run_config(cfg, dir);
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("check failed: error bound"), std::string::npos) << r.err;
    EXPECT_NE(slurp(dir / "tight.report.txt").find("result: fail"), std::string::npos);
}

TEST(Run, UnknownKeysAndKindsAreRejected) {
    const auto dir = scratch("unknown");
    const auto typo = write_file(dir, "typo.ini", std::string(solve_body) + "\n[solver]\ndampin = 0.5\n");
    auto r = run_config(typo, dir);
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("dampin"), std::string::npos) << r.err;

    std::string body = solve_body;
    body.replace(body.find("kind = solve"), 12, "kind = evolve");
    r = run_config(write_file(dir, "kind.ini", body), dir);
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("evolve"), std::string::npos) << r.err;

    r = run_config(dir / "does_not_exist.ini", dir);
    EXPECT_EQ(r.code, 2);
}

TEST(Run, DoublingRequiresSeed) {
    const auto dir = scratch("seed");
    std::string body = slurp(demo_dir / "doubling.ini");
    body.erase(body.find("seed = 20240517"), 15);
    const auto r = run_config(write_file(dir, "noseed.ini", body), dir);
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("seed"), std::string::npos) << r.err;
}

TEST(Run, TolOverrideReplacesCheckTolerance) {
    const auto dir = scratch("override");
    const auto cfg = write_file(dir, "flipped.ini",
                                slurp(demo_dir / "compare.ini") + "\n[solver]\nscheme = flipped_nonlocal\n");
    const auto strict = run_config(cfg, dir);
    EXPECT_EQ(strict.code, 1);
    EXPECT_NE(strict.err.find("check failed: comparison"), std::string::npos) << strict.err;
    const auto loose = run_config(cfg, dir, 100.0);
    EXPECT_EQ(loose.code, 0) << loose.err;
    EXPECT_NE(slurp(dir / "flipped.report.txt").find("tol: 100"), std::string::npos);
}

TEST(Describe, ListsAtomsWithFlagsAndMoments) {
    const auto r = describe_config(demo_dir / "solve.ini");
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("measure.atoms: 3"), std::string::npos);
    EXPECT_NE(r.out.find("measure.s2: 0.5"), std::string::npos);
    EXPECT_NE(r.out.find("measure.tmass: 0.5"), std::string::npos);
    EXPECT_NE(r.out.find("z=(0.25) w=4 small"), std::string::npos);
    EXPECT_NE(r.out.find("z=(-0.25) w=4 small"), std::string::npos);
    EXPECT_NE(r.out.find("z=(1.5) w=0.5 tail"), std::string::npos);
}

TEST(Describe, MomentsMatchTheQuadrature) {
    const auto r = describe_config(demo_dir / "compare.ini");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto q = LevyQuadrature<1>::from_atoms(
        {{{0.1}, 2}, {{-0.1}, 2}, {{0.5}, 0.5}, {{-0.5}, 0.5}, {{2.0}, 1}});
    EXPECT_NE(r.out.find("measure.s2: " + format_double(q.second_moment_small())), std::string::npos)
        << r.out;
    EXPECT_NE(r.out.find("measure.tmass: " + format_double(q.tail_mass())), std::string::npos);
}

TEST(Describe, MissingMeasureFileNamesThePath) {
    const auto dir = scratch("missing");
    std::string body = solve_body;
    body.replace(body.find("atoms = 0.25 4 | -0.25 4 | 1.5 0.5"), 34, "file = nowhere/atoms.txt");
    const auto cfg = write_file(dir, "missing.ini", body);
    const auto r = describe_config(cfg);
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("nowhere/atoms.txt"), std::string::npos) << r.err;
    EXPECT_EQ(run_config(cfg, dir).code, 2);
}

TEST(Determinism, RepeatedRunsAreByteIdentical) {
    for (const char* demo : {"doubling", "moreau", "compare", "neumann"}) {
        const auto a = scratch(std::string("det_a_") + demo);
        const auto b = scratch(std::string("det_b_") + demo);
        const auto cfg = demo_dir / (std::string(demo) + ".ini");
        ASSERT_EQ(run_config(cfg, a).code, 0) << demo;
        ASSERT_EQ(run_config(cfg, b).code, 0) << demo;
        std::size_t files = 0;
        for (const auto& entry : fs::directory_iterator(a)) {
            const auto name = entry.path().filename();
            ASSERT_TRUE(fs::exists(b / name)) << name;
            EXPECT_EQ(slurp(entry.path()), slurp(b / name)) << name;
            ++files;
        }
        EXPECT_GE(files, 2u) << demo;
    }
}

TEST(Binary, ExitCodes) {
    const auto dir = scratch("binary");
    const std::string out = " --out-dir " + dir.string();
    EXPECT_EQ(run_binary("run " + (demo_dir / "compare.ini").string() + out), 0);
    EXPECT_EQ(run_binary("run " + (demo_dir / "lambda_zero.ini").string() + out), 2);
    EXPECT_EQ(run_binary("describe " + (demo_dir / "solve.ini").string()), 0);
    EXPECT_EQ(run_binary(""), 2);
    EXPECT_EQ(run_binary("run"), 2);
    EXPECT_EQ(run_binary("--help"), 0);
    const auto cfg = write_file(dir, "flipped.ini",
                                slurp(demo_dir / "compare.ini") + "\n[solver]\nscheme = flipped_nonlocal\n");
    EXPECT_EQ(run_binary("run " + cfg.string() + out), 1);
    EXPECT_EQ(run_binary("run " + cfg.string() + out + " --tol-override 100"), 0);
}
