#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "stefan/config.hpp"

using namespace stefan;
namespace fs = std::filesystem;

namespace {

const std::string kMinimal = R"({
  "schema": "stefan.config",
  "version": 1,
  "domain": {"type": "box", "lower": [0.0], "upper": [1.0]},
  "T": 0.25,
  "phases": {"alpha": [1.0], "k": [1.0]},
  "grids": [{"h": 0.25, "tau": 0.0625}]
})";

std::string with(std::string text, const std::string& from, const std::string& to) {
    const auto at = text.find(from);
    if (at == std::string::npos) throw std::logic_error("fixture does not contain " + from);
    return text.replace(at, from.size(), to);
}

std::string where_of(const std::string& text) {
    try {
        parse_config(text);
    } catch (const ConfigError& e) {
        return e.where();
    }
    return "<accepted>";
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(STEFAN_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("stefan_config_test_" + name);
    fs::remove_all(p);
    return p;
}

std::string config_path(const std::string& name) { return std::string(STEFAN_CONFIG_DIR) + "/" + name; }

}  // namespace

TEST(ParseConfig, Minimal) {
    const auto c = parse_config(kMinimal);
    EXPECT_EQ(c.domain.dim(), 1);
    EXPECT_EQ(c.T, 0.25);
    ASSERT_EQ(c.grids.size(), 1u);
    EXPECT_EQ(c.grid(0)->levels(), 4);
    EXPECT_EQ(c.rho_for(0.25), 0.25);
    EXPECT_EQ(c.optimizer.max_evaluations, -1);
    EXPECT_EQ(c.output, "out");
    const std::vector<double> x = {0.3};
    EXPECT_EQ(c.phi(x), 0.0);
    EXPECT_EQ(c.f(x, 0.1), 0.0);
    EXPECT_EQ(c.sample_counts, std::vector<int>{33});
    EXPECT_EQ(c.sample_times, (std::vector<double>{0.0, 0.25}));
}

TEST(ParseConfig, SyntaxErrorReportsLineAndColumn) {
    const std::string bad = "{\n  \"T\": 0.25,\n  \"grids\": [}\n";
    try {
        parse_config(bad);
        FAIL() << "accepted malformed JSON";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.where(), "line 3, column 13");
    }
}

TEST(ParseConfig, FieldErrorsNameThePointer) {
    EXPECT_EQ(where_of(with(kMinimal, "\"T\": 0.25,", "")), "/T");
    EXPECT_EQ(where_of(with(kMinimal, "\"T\": 0.25", "\"T\": -1")), "/T");
    EXPECT_EQ(where_of(with(kMinimal, "\"T\": 0.25", "\"T\": \"soon\"")), "/T");
    EXPECT_EQ(where_of(with(kMinimal, "\"version\": 1", "\"version\": 2")), "/version");
    EXPECT_EQ(where_of(with(kMinimal, "\"k\": [1.0]", "\"k\": [-1.0]")), "/phases");
    EXPECT_EQ(where_of(with(kMinimal, "\"type\": \"box\"", "\"type\": \"sphere\"")), "/domain/type");
    EXPECT_EQ(where_of(with(kMinimal, "\"version\": 1", "\"version\": 1, \"data\": {\"phi\": \"sin(x\"}")),
              "/data/phi");
    EXPECT_EQ(where_of(with(kMinimal, "\"version\": 1", "\"version\": 1, \"data\": {\"f\": \"q*2\"}")), "/data/f");
    EXPECT_EQ(where_of(with(kMinimal, "\"version\": 1", "\"version\": 1, \"solver\": {\"sweep\": \"red_black\"}")),
              "/solver/sweep");
    EXPECT_EQ(where_of(with(kMinimal, "\"version\": 1", "\"version\": 1, \"optimizer\": {\"method\": \"anneal\"}")),
              "/optimizer/method");
    EXPECT_EQ(where_of(with(kMinimal, "\"version\": 1", "\"version\": 1, \"seed\": -3")), "/seed");
}

TEST(ParseConfig, RejectsStepsThatDoNotDivideT) {
    EXPECT_EQ(where_of(with(kMinimal, "\"tau\": 0.0625", "\"tau\": 0.07")), "/grids/0");
    EXPECT_EQ(where_of(with(kMinimal, "\"tau\": 0.0625", "\"tau\": 0.1")), "/grids/0");
}

TEST(ParseConfig, GridsMustRefine) {
    const auto two = with(kMinimal, "\"grids\": [{\"h\": 0.25, \"tau\": 0.0625}]",
                          "\"grids\": [{\"h\": 0.125, \"tau\": 0.015625}, {\"h\": 0.25, \"tau\": 0.0625}]");
    EXPECT_EQ(where_of(two), "/grids/1");
    const auto ok = with(kMinimal, "\"grids\": [{\"h\": 0.25, \"tau\": 0.0625}]",
                         "\"grids\": [{\"h\": 0.25, \"tau\": 0.0625}, {\"h\": 0.125, \"tau\": 0.015625}]");
    EXPECT_EQ(parse_config(ok).grids.size(), 2u);
}

TEST(ParseConfig, PhasesAndPieces) {
    const auto c = parse_config(with(kMinimal, "\"phases\": {\"alpha\": [1.0], \"k\": [1.0]}",
                                     R"("phases": {"temperatures": [0.5], "latent_heats": [2.0],
                                        "alpha": [{"constant": 3.0}, {"polynomial": [1.0, 0.0, 1.0]}],
                                        "k": ["2", {"linear": [1.0, 1.0]}], "beta_lower_bound": 0.5})"));
    ASSERT_EQ(c.phases.J(), 1);
    EXPECT_EQ(c.phases.u_js[0], 0.5);
    EXPECT_EQ(c.phases.b_js[0], 2.0);
    EXPECT_EQ(c.phases.alpha[0](7.0), 3.0);
    EXPECT_EQ(c.phases.alpha[1](2.0), 5.0);
    EXPECT_EQ(c.phases.k[0](-4.0), 2.0);
    EXPECT_EQ(c.phases.k[1](2.0), 3.0);
    EXPECT_EQ(c.phases.beta_lower_bound.value(), 0.5);
}

TEST(ParseConfig, ExpressionsSeeCoordinatesAndTime) {
    const auto c = parse_config(with(kMinimal, "\"version\": 1",
                                     R"("version": 1, "data": {"phi": "x0 + 2*x", "f": "x*t", "gamma": "-x",
                                        "phi_grad": ["3"], "R": 4})"));
    const std::vector<double> x = {0.5};
    EXPECT_EQ(c.phi(x), 1.5);
    EXPECT_EQ(c.f(x, 0.2), 0.1);
    EXPECT_EQ(c.gamma(x), -0.5);
    std::vector<double> g(1);
    c.phi_grad(x, g);
    EXPECT_EQ(g[0], 3.0);
    EXPECT_EQ(c.R, 4.0);
}

TEST(ParseConfig, NearestFaceExtension) {
    const auto c = parse_config(with(kMinimal, "\"version\": 1",
                                     R"("version": 1, "data": {"phi": "x", "phi_extension": "nearest_face"})"));
    EXPECT_EQ(c.phi(std::vector<double>{1.7}), 1.0);
    EXPECT_EQ(c.phi(std::vector<double>{-0.2}), 0.0);
    EXPECT_EQ(c.phi(std::vector<double>{0.4}), 0.4);
}

TEST(ParseConfig, MollificationRadius) {
    EXPECT_EQ(parse_config(with(kMinimal, "\"version\": 1", "\"version\": 1, \"mollification\": {\"n\": 8}"))
                  .rho_for(0.25),
              0.125);
    EXPECT_EQ(parse_config(with(kMinimal, "\"version\": 1", "\"version\": 1, \"mollification\": {\"rho_factor\": 2}"))
                  .rho_for(0.25),
              0.5);
    EXPECT_EQ(where_of(with(kMinimal, "\"version\": 1", "\"version\": 1, \"mollification\": {\"rho\": 0}")),
              "/mollification/rho");
}

TEST(ParseConfig, Benchmarks) {
    const auto m = parse_config(slurp(config_path("manufactured.json")));
    EXPECT_EQ(m.benchmark, ProblemConfig::Benchmark::manufactured);
    EXPECT_EQ(m.grids.size(), 3u);
    EXPECT_EQ(m.test_functions().size(), 3u);

    const auto n = parse_config(slurp(config_path("neumann.json")));
    EXPECT_EQ(n.benchmark, ProblemConfig::Benchmark::neumann);
    ASSERT_EQ(n.phases.J(), 1);
    EXPECT_EQ(n.phases.u_js[0], -1.0);
    EXPECT_EQ(n.phases.b_js[0], 5.0);
    EXPECT_EQ(n.phi(std::vector<double>{0.3}), -2.0);
    EXPECT_EQ(n.solver.tol_fp, 1e-14);

    EXPECT_EQ(where_of(with(slurp(config_path("neumann.json")), "\"u_wall\": 0.0", "\"u_wall\": 0.5")),
              "/benchmark/u_wall");
}

TEST(ParseConfig, WeakTestFunctionsAreBubbles) {
    const auto c = parse_config(with(kMinimal, "\"version\": 1",
                                     R"("version": 1, "weak_tests": [{"q": "1 + t", "q_t": "1", "q_grad": ["0"]}])"));
    const auto tf = c.test_functions();
    ASSERT_EQ(tf.size(), 1u);
    const std::vector<double> x = {0.5};
    // ψ = x(1−x)(T−t)(1+t) with T = 0.25.
    EXPECT_DOUBLE_EQ(tf[0].value(x, 0.05), 0.25 * 0.2 * 1.05);
    EXPECT_DOUBLE_EQ(tf[0].dt(x, 0.05), 0.25 * (-1.05 + 0.2));
    std::vector<double> g(1);
    tf[0].grad(std::vector<double>{0.25}, 0.05, g);
    EXPECT_DOUBLE_EQ(g[0], 0.5 * 0.2 * 1.05);
    EXPECT_EQ(where_of(with(kMinimal, "\"version\": 1",
                            R"("version": 1, "weak_tests": [{"q": "1", "q_t": "0", "q_grad": ["0", "0"]}])")),
              "/weak_tests/0/q_grad");
}

TEST(ParseConfig, IndicatorDomain) {
    const auto c = parse_config(slurp(config_path("disc_2d.json")));
    EXPECT_EQ(c.domain.kind, Domain::Kind::indicator);
    EXPECT_TRUE(c.domain.contains(std::vector<double>{0.1, 0.2}));
    EXPECT_FALSE(c.domain.contains(std::vector<double>{0.9, 0.9}));
}

TEST(Cli, ForwardOnZeroDataPassesAndIsReproducible) {
    const auto a = scratch("zero_a"), b = scratch("zero_b");
    ASSERT_EQ(run_cli("forward --config " + config_path("zero.json") + " --out " + a.string()), 0);
    ASSERT_EQ(run_cli("forward --config " + config_path("zero.json") + " --out " + b.string() + " --threads 3"), 0);
    for (const char* f : {"state.csv", "diagnostics.json", "verification.json", "field.csv", "free_boundary.csv"}) {
        ASSERT_TRUE(fs::exists(a / f)) << f;
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    }
    const auto state = slurp(a / "state.csv");
    EXPECT_EQ(state.rfind("k,g0,value\n", 0), 0u);
    EXPECT_NE(slurp(a / "verification.json").find("\"pass\": true"), std::string::npos);

    EXPECT_EQ(run_cli("verify --config " + config_path("zero.json") + " --out " + b.string() + " --state " +
                      (a / "state.csv").string()),
              0);
}

TEST(Cli, VerifyDetectsATamperedState) {
    const auto a = scratch("tamper");
    ASSERT_EQ(run_cli("forward --config " + config_path("zero.json") + " --out " + a.string()), 0);
    auto text = slurp(a / "state.csv");
    // Level 3 at lattice index 4 is an interior value of the 1D grid.
    const std::string row = "\n3,4,0\n";
    const auto at = text.find(row);
    ASSERT_NE(at, std::string::npos);
    text.replace(at, row.size(), "\n3,4,0.01\n");
    std::ofstream(a / "bad.csv") << text;
    EXPECT_EQ(run_cli("verify --config " + config_path("zero.json") + " --out " + a.string() + " --state " +
                      (a / "bad.csv").string()),
              1);
}

TEST(Cli, ManufacturedForwardAndRefine) {
    const auto a = scratch("manufactured");
    ASSERT_EQ(run_cli("forward --config " + config_path("manufactured.json") + " --out " + a.string()), 0);
    EXPECT_TRUE(fs::exists(a / "errors.csv"));
    ASSERT_EQ(run_cli("refine --config " + config_path("manufactured.json") + " --out " + a.string()), 0);
    const auto j = nlohmann::json::parse(slurp(a / "refinement.json"));
    EXPECT_TRUE(j["pass"].get<bool>());
    EXPECT_TRUE(j["trends"]["l2_error"]["nonincreasing"].get<bool>());
    const auto csv = slurp(a / "convergence.csv");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
}

TEST(Cli, InverseTwin) {
    const auto a = scratch("inverse"), b = scratch("inverse_b");
    ASSERT_EQ(run_cli("inverse --config " + config_path("inverse_twin.json") + " --out " + a.string()), 0);
    ASSERT_EQ(run_cli("inverse --config " + config_path("inverse_twin.json") + " --out " + b.string()), 0);
    for (const char* f : {"inverse.json", "grid0/control.csv", "grid0/history.csv", "grid1/control.csv"}) {
        ASSERT_TRUE(fs::exists(a / f)) << f;
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    }
    const auto j = nlohmann::json::parse(slurp(a / "inverse.json"));
    EXPECT_TRUE(j["pass"].get<bool>());
    EXPECT_EQ(j["grids"][0]["budget"].get<int>(), 5 * 16);
}

TEST(Cli, ExitCodes) {
    const auto a = scratch("codes");
    fs::create_directories(a);
    std::ofstream(a / "broken.json") << "{\"T\": }";
    EXPECT_EQ(run_cli("forward --config " + (a / "broken.json").string() + " --out " + a.string()), 3);
    EXPECT_NE(run_cli("forward"), 0);
    EXPECT_NE(run_cli("launch --config " + config_path("zero.json")), 0);
    // Refinement needs three grids; the zero config lists one.
    EXPECT_EQ(run_cli("refine --config " + config_path("zero.json") + " --out " + a.string()), 3);
    // The wall-heated Neumann data do not vanish on the boundary, so the energy check fails.
    EXPECT_EQ(run_cli("forward --config " + config_path("neumann.json") + " --out " + a.string()), 1);
}

TEST(Cli, SolverFailureWritesPartialReport) {
    const auto a = scratch("failure");
    fs::create_directories(a);
    std::ofstream(a / "tight.json") << with(kMinimal, "\"version\": 1",
                                            R"("version": 1, "data": {"f": "10"}, "solver": {"max_fp_iters": 1})");
    EXPECT_EQ(run_cli("forward --config " + (a / "tight.json").string() + " --out " + a.string()), 2);
    const auto j = nlohmann::json::parse(slurp(a / "failure.json"));
    EXPECT_TRUE(j["partial"].get<bool>());
    EXPECT_EQ(j["level"].get<int>(), 1);
}
