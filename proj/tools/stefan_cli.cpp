// Command-line driver: forward solves, refinement studies, inverse twin
// experiments and re-verification of stored states.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "stefan/config.hpp"

namespace fs = std::filesystem;
using namespace stefan;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitAssertion = 1;
constexpr int kExitSolver = 2;
constexpr int kExitConfig = 3;

struct RunOptions {
    std::string config;
    std::string out;
    std::string state;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = 1;
};

void write_json(const fs::path& p, const nlohmann::json& j) {
    std::ofstream os(p);
    os << j.dump(2) << '\n';
}

template <class F>
void write_file(const fs::path& p, F&& body) {
    std::ofstream os(p);
    body(os);
}

/// sqrt(Σ_{k≥1} τ Σ_interior h^d (v − v*)²) against the manufactured solution.
double manufactured_error(const StateVector& sv) {
    const Grid& g = *sv.grid;
    double s = 0.0;
    for (int k = 1; k <= sv.levels(); ++k)
        for (auto p : g.interior()) {
            const double e = sv(k, p) - bench::Manufactured::exact(g.coord(p, 0), g.disc().time(k));
            s += g.tau() * g.hd() * e * e;
        }
    return std::sqrt(s);
}

/// Leftmost crossing of the melting value at the final level, or NaN.
double front_position(const InterpolationBundle& b, double v_melt) {
    const auto pts = extract_free_boundary(b, v_melt, b.state().levels());
    double x = std::numeric_limits<double>::quiet_NaN();
    for (const auto& p : pts)
        if (!(p[0] >= x)) x = p[0];
    return x;
}

double v_melt(const ProblemConfig& c) { return Kirchhoff(c.phases).F(c.neumann.u_melt); }

struct Solved {
    GridPtr grid;
    std::shared_ptr<MollifiedEnthalpy> me;
    DiscreteControl ctrl;
    StateVector sv;
};

Solved solve_on(const ProblemConfig& c, std::size_t i) {
    Solved s;
    s.grid = c.grid(i);
    s.me = std::make_shared<MollifiedEnthalpy>(c.enthalpy(c.grids[i].h));
    s.ctrl = Q_map(c.f, s.grid);
    s.sv = solve_state(*s.me, s.grid, s.ctrl, steklov_average(*s.grid, c.phi), c.solver);
    return s;
}

VerificationReport full_report(const ProblemConfig& c, const Solved& s) {
    auto rep = verify_state(s.sv, s.ctrl, *s.me, w21_norm_squared(*s.grid, c.phi, c.phi_grad));
    InterpolationBundle b(s.sv);
    for (const auto& psi : c.test_functions()) rep.weak_residuals.push_back(weak_residual(b, *s.me, c.f, c.phi, psi));
    return rep;
}

int run_forward(const ProblemConfig& c, const fs::path& out) {
    const std::size_t gi = c.grids.size() - 1;
    Solved s;
    try {
        s = solve_on(c, gi);
    } catch (const SolverNonConvergence& e) {
        write_json(out / "failure.json", {{"schema", "stefan.failure"},
                                          {"version", 1},
                                          {"partial", true},
                                          {"level", e.level()},
                                          {"A", e.history()},
                                          {"message", e.what()}});
        std::cerr << e.what() << '\n';
        return kExitSolver;
    }
    InterpolationBundle b(s.sv);
    const auto rep = full_report(c, s);
    write_file(out / "state.csv", [&](std::ostream& os) { write_state_csv(os, s.sv); });
    write_json(out / "diagnostics.json", diagnostics_json(s.sv, *s.me));
    write_json(out / "verification.json", rep.to_json());
    write_file(out / "field.csv", [&](std::ostream& os) { write_sampled_field_csv(os, b, c.sample_counts, c.sample_times); });
    write_file(out / "free_boundary.csv", [&](std::ostream& os) { write_free_boundary_csv(os, b, *s.me); });
    if (c.benchmark == ProblemConfig::Benchmark::manufactured) {
        write_file(out / "errors.csv", [&](std::ostream& os) {
            os << "k,t,max_abs_error\n";
            for (int k = 0; k <= s.sv.levels(); ++k) {
                double e = 0.0;
                for (auto p : s.grid->interior())
                    e = std::max(e, std::abs(s.sv(k, p) - bench::Manufactured::exact(s.grid->coord(p, 0), s.grid->disc().time(k))));
                os << k << ',' << format_real(s.grid->disc().time(k)) << ',' << format_real(e) << '\n';
            }
        });
    }
    std::cout << "forward: grid " << gi << ", " << s.sv.levels() << " levels, verification "
              << (rep.pass() ? "passed" : "FAILED") << '\n';
    return rep.pass() ? kExitOk : kExitAssertion;
}

bool nonincreasing(const std::vector<double>& v, double slack) {
    for (std::size_t i = 1; i < v.size(); ++i)
        if (!(v[i] <= v[i - 1] * (1.0 + slack) || v[i] == 0.0)) return false;
    return true;
}

int run_refinement(const ProblemConfig& c, const fs::path& out) {
    if (c.grids.size() < 3) throw ConfigError("/grids", "refinement needs at least three grids");
    const auto tests = c.test_functions();
    std::vector<double> err, gap_v, gap_slice, gap_grad, hs, taus;
    std::vector<std::vector<double>> weak(tests.size());
    for (std::size_t i = 0; i < c.grids.size(); ++i) {
        const auto s = solve_on(c, i);
        InterpolationBundle b(s.sv);
        const auto gn = l2_gap_norms(b);
        hs.push_back(c.grids[i].h);
        taus.push_back(c.grids[i].tau);
        gap_v.push_back(gn.v_minus_vprime);
        gap_slice.push_back(gn.slice_minus_pwc);
        gap_grad.push_back(gn.grad_gap);
        if (c.benchmark == ProblemConfig::Benchmark::manufactured) err.push_back(manufactured_error(s.sv));
        if (c.benchmark == ProblemConfig::Benchmark::neumann)
            err.push_back(std::abs(front_position(b, v_melt(c)) - c.neumann.front(c.T)));
        for (std::size_t t = 0; t < tests.size(); ++t)
            weak[t].push_back(std::abs(weak_residual(b, *s.me, c.f, c.phi, tests[t])));
    }
    nlohmann::json trends = nlohmann::json::object();
    bool pass = true;
    auto trend = [&](const std::string& name, const std::vector<double>& v) {
        const bool ok = nonincreasing(v, c.trend_slack);
        std::vector<double> ratios;
        for (std::size_t i = 1; i < v.size(); ++i) ratios.push_back(v[i] > 0.0 ? v[i - 1] / v[i] : 0.0);
        trends[name] = {{"values", v}, {"ratios", ratios}, {"nonincreasing", ok}};
        pass = pass && ok;
    };
    if (!err.empty()) trend(c.benchmark == ProblemConfig::Benchmark::neumann ? "interface_error" : "l2_error", err);
    trend("v_minus_vprime", gap_v);
    trend("slice_minus_pwc", gap_slice);
    trend("grad_gap", gap_grad);
    for (std::size_t t = 0; t < tests.size(); ++t) trend("weak_residual_" + std::to_string(t), weak[t]);

    write_file(out / "convergence.csv", [&](std::ostream& os) {
        os << "grid,h,tau";
        if (!err.empty()) os << ",error";
        os << ",v_minus_vprime,slice_minus_pwc,grad_gap";
        for (std::size_t t = 0; t < tests.size(); ++t) os << ",weak_" << t;
        os << '\n';
        for (std::size_t i = 0; i < hs.size(); ++i) {
            os << i << ',' << format_real(hs[i]) << ',' << format_real(taus[i]);
            if (!err.empty()) os << ',' << format_real(err[i]);
            os << ',' << format_real(gap_v[i]) << ',' << format_real(gap_slice[i]) << ',' << format_real(gap_grad[i]);
            for (std::size_t t = 0; t < tests.size(); ++t) os << ',' << format_real(weak[t][i]);
            os << '\n';
        }
    });
    write_json(out / "refinement.json", {{"schema", "stefan.refinement"},
                                         {"version", 1},
                                         {"slack", c.trend_slack},
                                         {"trends", trends},
                                         {"pass", pass}});
    std::cout << "refine: " << hs.size() << " grids, trends " << (pass ? "monotone" : "NOT monotone") << '\n';
    return pass ? kExitOk : kExitAssertion;
}

int run_inverse(const ProblemConfig& c, const fs::path& out, const RunOptions& opts) {
    if (!c.f_true && !c.gamma) throw ConfigError("/data", "inverse runs need gamma or f_true");
    std::optional<StateVector> twin;
    GridPtr twin_grid;
    std::shared_ptr<MollifiedEnthalpy> twin_me;
    if (c.f_true) {
        const GridSpec fine = c.twin_grid.value_or(GridSpec{c.grids.back().tau / 4, c.grids.back().h / 2});
        twin_grid = build_grid(c.domain, Discretization::make(fine.tau, fine.h, c.T));
        twin_me = std::make_shared<MollifiedEnthalpy>(c.enthalpy(fine.h));
        twin = solve_state(*twin_me, twin_grid, Q_map(c.f_true, twin_grid), steklov_average(*twin_grid, c.phi), c.solver);
    }
    nlohmann::json grids = nlohmann::json::array();
    nlohmann::json assertions = nlohmann::json::array();
    bool pass = true;
    std::vector<double> found;
    for (std::size_t i = 0; i < c.grids.size(); ++i) {
        const auto g = c.grid(i);
        const auto me = c.enthalpy(c.grids[i].h);
        InverseProblem prob;
        prob.me = &me;
        prob.grid = g;
        prob.phi_vals = steklov_average(*g, c.phi);
        prob.gamma_vals = twin ? restrict_final_trace(*twin, *g) : steklov_average(*g, c.gamma);
        prob.R = c.R;
        prob.solver = c.solver;
        OptimizerParams o = c.optimizer;
        if (o.max_evaluations < 0) o.max_evaluations = 5 * static_cast<int>(g->cell_count());
        o.seed = opts.seed_set ? opts.seed : c.seed;
        const auto res = optimize(prob, o, DiscreteControl(g));
        found.push_back(res.cost);

        const fs::path dir = out / ("grid" + std::to_string(i));
        fs::create_directories(dir);
        write_file(dir / "control.csv", [&](std::ostream& os) { write_control_csv(os, res.control); });
        write_file(dir / "history.csv", [&](std::ostream& os) { write_history_csv(os, res); });
        nlohmann::json entry = {{"grid", i},
                                {"h", c.grids[i].h},
                                {"tau", c.grids[i].tau},
                                {"cells", g->cell_count()},
                                {"method", to_string(o.method)},
                                {"budget", o.max_evaluations},
                                {"evaluations", res.evaluations},
                                {"rejected_trials", res.rejected_trials},
                                {"stop_reason", res.stop_reason},
                                {"I_found", res.cost},
                                {"eps_hat_vs_zero", res.eps_hat(0.0)},
                                {"start_seeds", res.start_seeds}};
        if (c.f_true) {
            const auto truth = Q_map(c.f_true, g);
            const auto proj = project_control(truth, c.R);
            const double I_truth = prob.cost(proj);
            entry["I_projected_truth"] = I_truth;
            entry["eps_hat_vs_projected_truth"] = res.cost - I_truth;
            if (truth.linf() <= c.R) {
                const bool ok = res.cost <= I_truth;
                assertions.push_back({{"name", "I_found <= I(Q(f_true)) on grid " + std::to_string(i)}, {"pass", ok}});
                pass = pass && ok;
            }
        }
        grids.push_back(entry);
    }
    const bool mono = nonincreasing(found, c.trend_slack);
    assertions.push_back({{"name", "I_found nonincreasing along refinement"}, {"pass", mono}});
    pass = pass && mono;
    write_json(out / "inverse.json", {{"schema", "stefan.inverse"},
                                      {"version", 1},
                                      {"grids", grids},
                                      {"assertions", assertions},
                                      {"pass", pass}});
    std::cout << "inverse: " << found.size() << " grids, assertions " << (pass ? "passed" : "FAILED") << '\n';
    return pass ? kExitOk : kExitAssertion;
}

int run_verify(const ProblemConfig& c, const fs::path& out, const RunOptions& opts) {
    if (opts.state.empty()) throw ConfigError("--state", "verify needs a stored state CSV");
    const std::size_t gi = c.grids.size() - 1;
    const auto g = c.grid(gi);
    std::ifstream in(opts.state);
    if (!in) throw ConfigError(opts.state, "cannot open state file");
    Solved s;
    s.grid = g;
    s.me = std::make_shared<MollifiedEnthalpy>(c.enthalpy(c.grids[gi].h));
    s.ctrl = Q_map(c.f, g);
    s.sv = read_state_csv(in, g);
    const auto rep = full_report(c, s);
    write_json(out / "verification.json", rep.to_json());
    std::cout << "verify: " << (rep.pass() ? "passed" : "FAILED") << '\n';
    return rep.pass() ? kExitOk : kExitAssertion;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Enthalpy-method solver for multiphase Stefan problems"};
    app.require_subcommand(1);
    RunOptions opts;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opts.config, "problem configuration (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", opts.out, "output directory (overrides the config)");
        sub->add_option("--seed", opts.seed, "random seed (overrides the config)")->each([&](const std::string&) {
            opts.seed_set = true;
        });
        sub->add_option("--threads", opts.threads, "worker threads per sweep")->check(CLI::PositiveNumber);
    };
    auto* fwd = app.add_subcommand("forward", "solve once on the finest listed grid and verify");
    auto* ref = app.add_subcommand("refine", "convergence study over the listed grids");
    auto* inv = app.add_subcommand("inverse", "search for controls matching the measurement");
    auto* ver = app.add_subcommand("verify", "re-check a stored state");
    for (auto* s : {fwd, ref, inv, ver}) add_common(s);
    ver->add_option("--state", opts.state, "state CSV written by forward")->required();
    CLI11_PARSE(app, argc, argv);

    try {
        auto cfg = load_config(opts.config);
        cfg.solver.threads = opts.threads;
        if (opts.seed_set) cfg.seed = opts.seed;
        const fs::path out = opts.out.empty() ? fs::path(cfg.output) : fs::path(opts.out);
        fs::create_directories(out);
        if (fwd->parsed()) return run_forward(cfg, out);
        if (ref->parsed()) return run_refinement(cfg, out);
        if (inv->parsed()) return run_inverse(cfg, out, opts);
        return run_verify(cfg, out, opts);
    } catch (const ConfigError& e) {
        std::cerr << e.what() << '\n';
        return kExitConfig;
    } catch (const SolverNonConvergence& e) {
        std::cerr << e.what() << '\n';
        return kExitSolver;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitSolver;
    }
}
