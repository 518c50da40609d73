#pragma once

/// Declarative problem description read from a JSON file (schema
/// "stefan.config", version 1). See README.md for the field reference.

#include <cstdint>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "benchmarks.hpp"
#include "control.hpp"
#include "expression.hpp"
#include "verify.hpp"

namespace stefan {

/// Parse or validation failure. `where` is "line L, column C" for syntax errors
/// and a JSON pointer such as "/grids/1/tau" for field errors.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& where, const std::string& what)
        : std::runtime_error("config " + where + ": " + what), where_(where) {}
    const std::string& where() const { return where_; }

private:
    std::string where_;
};

struct GridSpec {
    double tau = 0.0, h = 0.0;
};

/// ψ = bubble · (T − t) · q(x, t); q, q_t and ∇q are expressions in x0.., t.
struct WeakTestSpec {
    SpaceTimeFunction q, q_t;
    std::vector<SpaceTimeFunction> q_grad;
};

struct ProblemConfig {
    Domain domain;
    double T = 1.0;
    PhaseCoefficients phases;
    /// Mollification radius: fixed, or a multiple of h (default ρ = h).
    std::optional<double> rho;
    double rho_factor = 1.0;

    SpaceFunction phi;
    GradientFunction phi_grad;
    SpaceFunction gamma;
    SpaceTimeFunction f;
    SpaceTimeFunction f_true;
    double R = 1.0;
    std::optional<GridSpec> twin_grid;

    std::vector<GridSpec> grids;
    SolverParams solver;
    OptimizerParams optimizer;
    std::string output = "out";
    std::uint64_t seed = 0;

    enum class Benchmark { none, manufactured, neumann } benchmark = Benchmark::none;
    bench::Neumann neumann;
    std::vector<WeakTestSpec> weak_tests;
    std::vector<int> sample_counts;
    std::vector<double> sample_times;
    double trend_slack = 0.0;

    nlohmann::json raw;

    double rho_for(double h) const { return rho ? *rho : rho_factor * h; }
    GridPtr grid(std::size_t i) const {
        return build_grid(domain, Discretization::make(grids.at(i).tau, grids.at(i).h, T));
    }
    MollifiedEnthalpy enthalpy(double h) const { return MollifiedEnthalpy(build_enthalpy(phases), rho_for(h)); }
    std::vector<TestFunction> test_functions() const {
        std::vector<TestFunction> out;
        for (const auto& w : weak_tests)
            out.push_back(TestFunction::bubble(domain, T, w.q, w.q_t,
                                               [g = w.q_grad](std::span<const double> x, double t, std::span<double> o) {
                                                   for (std::size_t i = 0; i < g.size(); ++i) o[i] = g[i](x, t);
                                               }));
        return out;
    }
};

namespace detail {

inline std::string line_col(const std::string& text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

class Reader {
public:
    explicit Reader(const nlohmann::json& root) : root_(root) {}

    const nlohmann::json* find(const std::string& ptr) const {
        const nlohmann::json::json_pointer p(ptr);
        return root_.contains(p) ? &root_.at(p) : nullptr;
    }
    const nlohmann::json& need(const std::string& ptr) const {
        if (const auto* j = find(ptr)) return *j;
        throw ConfigError(ptr, "missing required field");
    }
    double number(const std::string& ptr) const {
        const auto& j = need(ptr);
        if (!j.is_number()) throw ConfigError(ptr, "expected a number");
        return j.get<double>();
    }
    double number(const std::string& ptr, double fallback) const { return find(ptr) ? number(ptr) : fallback; }
    int integer(const std::string& ptr, int fallback) const {
        const auto* j = find(ptr);
        if (!j) return fallback;
        if (!j->is_number_integer()) throw ConfigError(ptr, "expected an integer");
        return j->get<int>();
    }
    std::string string(const std::string& ptr, const std::string& fallback) const {
        const auto* j = find(ptr);
        if (!j) return fallback;
        if (!j->is_string()) throw ConfigError(ptr, "expected a string");
        return j->get<std::string>();
    }
    std::vector<double> numbers(const std::string& ptr) const {
        const auto& j = need(ptr);
        if (!j.is_array()) throw ConfigError(ptr, "expected an array of numbers");
        std::vector<double> v;
        for (std::size_t i = 0; i < j.size(); ++i) v.push_back(number(ptr + "/" + std::to_string(i)));
        return v;
    }
    Expression expression(const std::string& ptr, const std::vector<std::string>& vars) const {
        const auto& j = need(ptr);
        if (j.is_number()) return Expression::compile(format_real(j.get<double>()), vars);
        if (!j.is_string()) throw ConfigError(ptr, "expected an expression string");
        try {
            return Expression::compile(j.get<std::string>(), vars);
        } catch (const ExpressionError& e) {
            throw ConfigError(ptr, e.what());
        }
    }

private:
    const nlohmann::json& root_;
};

inline std::vector<std::string> space_vars(int d, bool with_time) {
    std::vector<std::string> v;
    for (int i = 0; i < d; ++i) v.push_back("x" + std::to_string(i));
    if (with_time) v.push_back("t");
    const char* alias[] = {"x", "y", "z"};
    for (int i = 0; i < d && i < 3; ++i) v.push_back(alias[i]);
    return v;
}

inline SpaceFunction space_function(Expression e, int d) {
    return [e = std::move(e), d](std::span<const double> x) {
        double a[7] = {};
        for (int i = 0; i < d; ++i) a[i] = a[d + i] = x[i];
        return e(std::span<const double>(a, static_cast<std::size_t>(2 * d)));
    };
}

inline SpaceTimeFunction space_time_function(Expression e, int d) {
    return [e = std::move(e), d](std::span<const double> x, double t) {
        double a[7] = {};
        for (int i = 0; i < d; ++i) a[i] = a[d + 1 + i] = x[i];
        a[d] = t;
        return e(std::span<const double>(a, static_cast<std::size_t>(2 * d + 1)));
    };
}

inline Piece read_piece(const Reader& r, const std::string& ptr) {
    const auto& j = r.need(ptr);
    if (j.is_number()) return Piece::constant(j.get<double>());
    if (j.is_string()) {
        auto e = r.expression(ptr, {"u"});
        return Piece::function([e](double u) { return e({u}); }, e.text());
    }
    if (j.is_object()) {
        if (j.contains("constant")) return Piece::constant(r.number(ptr + "/constant"));
        if (j.contains("linear")) {
            const auto c = r.numbers(ptr + "/linear");
            if (c.size() != 2) throw ConfigError(ptr + "/linear", "expected [c0, c1]");
            return Piece::linear(c[0], c[1]);
        }
        if (j.contains("polynomial")) return Piece::polynomial(r.numbers(ptr + "/polynomial"));
    }
    throw ConfigError(ptr, "expected a number, an expression in u, or {constant|linear|polynomial}");
}

}  // namespace detail

inline ProblemConfig parse_config(const std::string& text) {
    ProblemConfig c;
    try {
        c.raw = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(detail::line_col(text, e.byte == 0 ? 0 : e.byte - 1), "syntax error");
    }
    const detail::Reader r(c.raw);
    if (r.string("/schema", "stefan.config") != "stefan.config") throw ConfigError("/schema", "expected \"stefan.config\"");
    if (r.integer("/version", 1) != 1) throw ConfigError("/version", "only version 1 is supported");

    const std::string bkind = r.string("/benchmark/type", "none");
    if (bkind == "manufactured") c.benchmark = ProblemConfig::Benchmark::manufactured;
    else if (bkind == "neumann") c.benchmark = ProblemConfig::Benchmark::neumann;
    else if (bkind != "none") throw ConfigError("/benchmark/type", "unknown benchmark '" + bkind + "'");

    // Domain.
    const std::string kind = r.string("/domain/type", "box");
    const auto lo = r.numbers("/domain/lower"), hi = r.numbers("/domain/upper");
    try {
        if (kind == "box") {
            c.domain = Domain::box(lo, hi);
        } else if (kind == "indicator") {
            const int d = static_cast<int>(lo.size());
            auto e = r.expression("/domain/inside", detail::space_vars(d, false));
            auto fn = detail::space_function(e, d);
            c.domain = Domain::indicator(lo, hi, [fn](std::span<const double> x) { return fn(x) != 0.0; });
        } else {
            throw ConfigError("/domain/type", "expected \"box\" or \"indicator\"");
        }
    } catch (const std::invalid_argument& e) {
        throw ConfigError("/domain", e.what());
    }
    const int d = c.domain.dim();
    c.T = r.number("/T");
    if (!(c.T > 0.0)) throw ConfigError("/T", "must be positive");

    // Phases.
    if (c.benchmark == ProblemConfig::Benchmark::neumann) {
        if (d != 1) throw ConfigError("/domain", "the similarity benchmark is one-dimensional");
        auto& nm = c.neumann;
        nm.alpha_l = r.number("/benchmark/alpha_l", nm.alpha_l);
        nm.alpha_s = r.number("/benchmark/alpha_s", nm.alpha_s);
        nm.L = r.number("/benchmark/L", nm.L);
        nm.u_wall = r.number("/benchmark/u_wall", nm.u_wall);
        nm.u_melt = r.number("/benchmark/u_melt", nm.u_melt);
        nm.u_inf = r.number("/benchmark/u_inf", nm.u_inf);
        if (nm.u_wall != 0.0) throw ConfigError("/benchmark/u_wall", "the wall must sit at u = 0 (v = 0 on the boundary)");
        if (!(nm.u_inf < nm.u_melt && nm.u_melt < nm.u_wall))
            throw ConfigError("/benchmark", "need u_inf < u_melt < u_wall");
        c.phases = nm.coefficients();
    } else if (r.find("/phases")) {
        auto& pc = c.phases;
        if (r.find("/phases/temperatures")) pc.u_js = r.numbers("/phases/temperatures");
        if (r.find("/phases/latent_heats")) pc.b_js = r.numbers("/phases/latent_heats");
        const auto& a = r.need("/phases/alpha");
        const auto& k = r.need("/phases/k");
        if (!a.is_array()) throw ConfigError("/phases/alpha", "expected an array of pieces");
        if (!k.is_array()) throw ConfigError("/phases/k", "expected an array of pieces");
        for (std::size_t i = 0; i < a.size(); ++i) pc.alpha.push_back(detail::read_piece(r, "/phases/alpha/" + std::to_string(i)));
        for (std::size_t i = 0; i < k.size(); ++i) pc.k.push_back(detail::read_piece(r, "/phases/k/" + std::to_string(i)));
        pc.a0_bound = r.number("/phases/a0", 1.0);
        if (r.find("/phases/beta_lower_bound")) pc.beta_lower_bound = r.number("/phases/beta_lower_bound");
    } else if (c.benchmark == ProblemConfig::Benchmark::manufactured) {
        c.phases = bench::Manufactured::coefficients();
    } else {
        throw ConfigError("/phases", "missing required field");
    }
    try {
        (void)build_enthalpy(c.phases);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("/phases", e.what());
    }
    if (r.find("/mollification/rho")) {
        c.rho = r.number("/mollification/rho");
        if (!(*c.rho > 0.0)) throw ConfigError("/mollification/rho", "must be positive");
    }
    if (r.find("/mollification/n")) {
        const int n = r.integer("/mollification/n", 1);
        if (n < 1) throw ConfigError("/mollification/n", "must be a positive integer");
        c.rho = 1.0 / n;
    }
    c.rho_factor = r.number("/mollification/rho_factor", 1.0);
    if (!(c.rho_factor > 0.0)) throw ConfigError("/mollification/rho_factor", "must be positive");

    // Data.
    const auto sv = detail::space_vars(d, false), stv = detail::space_vars(d, true);
    if (c.benchmark == ProblemConfig::Benchmark::manufactured) {
        bench::Manufactured m;
        if (d != 1) throw ConfigError("/domain", "the manufactured benchmark is one-dimensional");
        c.phi = m.phi;
        c.phi_grad = m.phi_grad;
        c.f = m.f;
    } else if (c.benchmark == ProblemConfig::Benchmark::neumann) {
        const double u_inf = c.neumann.u_inf;
        c.phi = [u_inf](std::span<const double>) { return u_inf; };
        c.phi_grad = [](std::span<const double>, std::span<double> g) { g[0] = 0.0; };
        c.f = [](std::span<const double>, double) { return 0.0; };
    }
    if (r.find("/data/phi")) c.phi = detail::space_function(r.expression("/data/phi", sv), d);
    if (!c.phi) c.phi = [](std::span<const double>) { return 0.0; };
    if (r.find("/data/phi_grad")) {
        const auto& arr = r.need("/data/phi_grad");
        if (!arr.is_array() || static_cast<int>(arr.size()) != d)
            throw ConfigError("/data/phi_grad", "expected one expression per axis");
        std::vector<SpaceFunction> comps;
        for (int i = 0; i < d; ++i)
            comps.push_back(detail::space_function(r.expression("/data/phi_grad/" + std::to_string(i), sv), d));
        c.phi_grad = [comps](std::span<const double> x, std::span<double> g) {
            for (std::size_t i = 0; i < comps.size(); ++i) g[i] = comps[i](x);
        };
    }
    const std::string ext = r.string("/data/phi_extension", "formula");
    if (ext == "nearest_face") {
        if (c.domain.kind != Domain::Kind::box) throw ConfigError("/data/phi_extension", "nearest_face needs a box domain");
        c.phi = nearest_face_extension(c.domain, c.phi);
    } else if (ext != "formula") {
        throw ConfigError("/data/phi_extension", "expected \"formula\" or \"nearest_face\"");
    }
    if (r.find("/data/gamma")) c.gamma = detail::space_function(r.expression("/data/gamma", sv), d);
    if (r.find("/data/f")) c.f = detail::space_time_function(r.expression("/data/f", stv), d);
    if (!c.f) c.f = [](std::span<const double>, double) { return 0.0; };
    if (r.find("/data/f_true")) c.f_true = detail::space_time_function(r.expression("/data/f_true", stv), d);
    c.R = r.number("/data/R", 1.0);
    if (!(c.R > 0.0)) throw ConfigError("/data/R", "must be positive");
    if (r.find("/data/twin_grid"))
        c.twin_grid = GridSpec{r.number("/data/twin_grid/tau"), r.number("/data/twin_grid/h")};

    // Grids.
    const auto& grids = r.need("/grids");
    if (!grids.is_array() || grids.empty()) throw ConfigError("/grids", "expected a non-empty array");
    for (std::size_t i = 0; i < grids.size(); ++i) {
        const std::string p = "/grids/" + std::to_string(i);
        GridSpec g{r.number(p + "/tau"), r.number(p + "/h")};
        try {
            const auto disc = Discretization::make(g.tau, g.h, c.T);
            (void)Grid(c.domain, disc);
            if (i > 0 && !disc.finer_or_equal(Discretization::make(c.grids.back().tau, c.grids.back().h, c.T)))
                throw ConfigError(p, "grids must be listed from coarse to fine");
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError(p, e.what());
        }
        c.grids.push_back(g);
    }

    // Solver and optimizer.
    auto& s = c.solver;
    s.tol_fp = r.number("/solver/tol_fp", s.tol_fp);
    s.max_fp_iters = r.integer("/solver/max_fp_iters", s.max_fp_iters);
    s.tol_scalar = r.number("/solver/tol_scalar", s.tol_scalar);
    s.max_scalar_iters = r.integer("/solver/max_scalar_iters", s.max_scalar_iters);
    const std::string sweep = r.string("/solver/sweep", "jacobi");
    if (sweep == "gauss_seidel") s.sweep = SolverParams::Sweep::gauss_seidel;
    else if (sweep != "jacobi") throw ConfigError("/solver/sweep", "expected \"jacobi\" or \"gauss_seidel\"");
    try {
        s.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("/solver", e.what());
    }
    auto& o = c.optimizer;
    const std::string method = r.string("/optimizer/method", "compass_search");
    if (method == "compass_search") o.method = OptimizerParams::Method::compass_search;
    else if (method == "fd_gradient_projected") o.method = OptimizerParams::Method::fd_gradient_projected;
    else if (method == "gauss_newton") o.method = OptimizerParams::Method::gauss_newton;
    else throw ConfigError("/optimizer/method", "unknown method '" + method + "'");
    o.initial_step = r.number("/optimizer/initial_step", o.initial_step);
    o.step_floor = r.number("/optimizer/step_floor", o.step_floor);
    o.fd_step = r.number("/optimizer/fd_step", o.fd_step);
    // -1 selects five evaluations per control cell of each grid.
    o.max_evaluations = r.integer("/optimizer/max_evaluations", -1);
    o.target_eps = r.number("/optimizer/target_eps", o.target_eps);
    o.multistart = r.integer("/optimizer/multistart", 0);
    if (o.max_evaluations < -1) throw ConfigError("/optimizer/max_evaluations", "must be non-negative");

    c.output = r.string("/output", c.output);
    if (const auto* j = r.find("/seed")) {
        if (!j->is_number_unsigned()) throw ConfigError("/seed", "expected a non-negative integer");
        c.seed = j->get<std::uint64_t>();
    }

    // Weak-residual test functions.
    if (const auto* w = r.find("/weak_tests")) {
        if (!w->is_array()) throw ConfigError("/weak_tests", "expected an array");
        for (std::size_t i = 0; i < w->size(); ++i) {
            const std::string p = "/weak_tests/" + std::to_string(i);
            WeakTestSpec ws;
            ws.q = detail::space_time_function(r.expression(p + "/q", stv), d);
            ws.q_t = detail::space_time_function(r.expression(p + "/q_t", stv), d);
            const auto& g = r.need(p + "/q_grad");
            if (!g.is_array() || static_cast<int>(g.size()) != d) throw ConfigError(p + "/q_grad", "expected one expression per axis");
            for (int a = 0; a < d; ++a) ws.q_grad.push_back(detail::space_time_function(r.expression(p + "/q_grad/" + std::to_string(a), stv), d));
            c.weak_tests.push_back(std::move(ws));
        }
    }
    if (r.find("/sampling/counts")) {
        for (double v : r.numbers("/sampling/counts")) c.sample_counts.push_back(static_cast<int>(v));
        if (static_cast<int>(c.sample_counts.size()) != d) throw ConfigError("/sampling/counts", "expected one count per axis");
    } else {
        c.sample_counts.assign(static_cast<std::size_t>(d), 33);
    }
    c.sample_times = r.find("/sampling/times") ? r.numbers("/sampling/times") : std::vector<double>{0.0, c.T};
    c.trend_slack = r.number("/trend_slack", 0.0);
    return c;
}

inline ProblemConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path, "cannot open file");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

}  // namespace stefan
