#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "stefan/control.hpp"

using namespace stefan;

namespace {

const double pi = std::numbers::pi;

MollifiedEnthalpy linear_enthalpy() {
    PhaseCoefficients pc;
    pc.alpha = {Piece::constant(1.0)};
    pc.k = {Piece::constant(1.0)};
    return mollify(build_enthalpy(pc), 0.1);
}

/// b(v) = v + v³/3 from α(u) = 1 + u², k = 1.
MollifiedEnthalpy cubic_enthalpy() {
    PhaseCoefficients pc;
    pc.alpha = {Piece::polynomial({1.0, 0.0, 1.0})};
    pc.k = {Piece::constant(1.0)};
    pc.beta_lower_bound = 1.0;
    return mollify(build_enthalpy(pc), 0.1);
}

MollifiedEnthalpy one_jump() {
    PhaseCoefficients pc;
    pc.u_js = {0.0};
    pc.b_js = {0.5};
    pc.alpha = {Piece::constant(1.0), Piece::constant(1.0)};
    pc.k = {Piece::constant(1.0), Piece::constant(1.0)};
    return mollify(build_enthalpy(pc), 0.2);
}

GridPtr interval(double h, double tau, double T) {
    return build_grid(Domain::box({0.0}, {1.0}), Discretization::make(tau, h, T));
}

/// Twin problem: Γ is the restricted final trace of a fine solve driven by f†.
InverseProblem twin(const MollifiedEnthalpy& me, GridPtr coarse, const SpaceTimeFunction& f_true, double R) {
    const auto& d = coarse->disc();
    auto fine = interval(d.h / 4, d.tau / 16, d.T);
    auto phi = [](std::span<const double>) { return 0.0; };
    const auto sv = solve_state(me, fine, Q_map(f_true, fine), steklov_average(*fine, phi));
    InverseProblem p;
    p.me = &me;
    p.grid = coarse;
    p.phi_vals = steklov_average(*coarse, phi);
    p.gamma_vals = restrict_final_trace(sv, *coarse);
    p.R = R;
    return p;
}

}  // namespace

TEST(DiscreteCost, Examples) {
    const auto me = linear_enthalpy();
    auto g = interval(0.25, 0.25, 0.5);
    const auto sv = solve_state(me, g, DiscreteControl(g, 1.0), PrismValues(g->prisms().size(), 0.0));
    PrismValues gam;
    for (auto p : g->prisms()) gam.push_back(sv(sv.levels(), p));
    EXPECT_EQ(discrete_cost(sv, gam).I, 0.0);
    gam[2] += 0.3;
    const auto r = discrete_cost(sv, gam);
    EXPECT_NEAR(r.I, 0.25 * 0.09, 1e-16);
    EXPECT_NEAR(r.deviations[2], r.I, 0.0);
    EXPECT_FALSE(r.J_approx.has_value());
    EXPECT_THROW(discrete_cost(sv, PrismValues(1, 0.0)), std::invalid_argument);
}

TEST(DiscreteCost, TraceApproximation) {
    const auto me = linear_enthalpy();
    auto g = interval(0.25, 0.25, 0.5);
    const auto sv = solve_state(me, g, DiscreteControl(g), PrismValues(g->prisms().size(), 0.0));
    // Zero state: J = ∫ Γ² exactly.
    const auto r = discrete_cost(sv, PrismValues(g->prisms().size(), 0.0), [](std::span<const double> x) { return x[0]; });
    EXPECT_NEAR(*r.J_approx, 1.0 / 3.0, 1e-14);
    EXPECT_NEAR(*r.gap, 1.0 / 3.0, 1e-14);
}

TEST(RestrictTrace, ExactForMultilinear) {
    const auto me = linear_enthalpy();
    auto fine = interval(1.0 / 16, 1.0 / 8, 0.25);
    auto coarse = interval(0.25, 0.125, 0.25);
    const auto sv = solve_state(me, fine, DiscreteControl(fine, 1.0), PrismValues(fine->prisms().size(), 0.0));
    const auto r = restrict_final_trace(sv, *coarse);
    InterpolationBundle b(sv);
    // Trapezoid per fine cell is exact for the piecewise-linear trace.
    for (std::size_t q = 0; q < r.size(); ++q) {
        const double x0 = coarse->coord(coarse->prisms()[q], 0);
        double s = 0.0;
        for (int i = 0; i < 4; ++i) {
            const double a = x0 + i / 16.0, c = a + 1.0 / 16;
            s += 0.5 * (b.multilinear(2, std::vector<double>{a}) + b.multilinear(2, std::vector<double>{c})) / 16.0;
        }
        EXPECT_NEAR(r[q], s / 0.25, 1e-15);
    }
}

TEST(FdGradient, ZeroProblemHasZeroGradient) {
    const auto me = one_jump();
    auto g = interval(0.25, 0.125, 0.25);
    const auto p = twin(me, g, [](std::span<const double>, double) { return 0.0; }, 1.0);
    for (double v : p.gamma_vals) EXPECT_EQ(v, 0.0);
    for (double v : fd_gradient(p, DiscreteControl(g), 1e-4)) EXPECT_LE(std::abs(v), 1e-8);
    EXPECT_THROW(fd_gradient(p, DiscreteControl(g), 0.0), std::invalid_argument);
}

TEST(FdGradient, OneSidedAtTheBox) {
    const auto me = linear_enthalpy();
    auto g = interval(0.5, 0.5, 1.0);
    InverseProblem p;
    p.me = &me;
    p.grid = g;
    p.phi_vals = PrismValues(2, 0.0);
    p.gamma_vals = {0.0, 0.05};
    p.R = 1.0;
    DiscreteControl c(g, 1.0);
    // Linear b: I is quadratic in f, so forward and central differences agree up to O(step).
    const auto a = fd_gradient(p, c, 1e-3);
    DiscreteControl inner(g, 1.0 - 1e-3);
    const auto b = fd_gradient(p, inner, 1e-5);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-3);
}

TEST(FdGradient, SymbolicChainRuleSingleUnknown) {
    // One interior point (h = 0.5), four levels, b(v) = v + v³/3 mollified.
    const auto me = cubic_enthalpy();
    auto g = interval(0.5, 0.25, 1.0);
    ASSERT_EQ(g->interior().size(), 1u);
    InverseProblem p;
    p.me = &me;
    p.grid = g;
    p.phi_vals = {0.0, 0.4};
    p.gamma_vals = {0.0, -0.2};
    p.R = 3.0;
    p.solver.tol_fp = 1e-15;
    DiscreteControl c(g);
    for (int k = 1; k <= 4; ++k) c.at(k, 1) = 0.5 * k - 1.0;

    const auto sv = p.forward(c);
    const auto ip = g->interior()[0];
    const double c1 = 1.0 / g->tau(), c2 = 2.0 / (g->h() * g->h());
    const int n = g->levels();
    std::vector<double> symbolic(c.cells(), 0.0);
    for (int j = 1; j <= n; ++j) {
        // dv_k/df_j: (c1 b'(v_k) + c2) dv_k = c1 b'(v_{k−1}) dv_{k−1} + [k = j].
        double dv = 0.0;
        for (int k = 1; k <= n; ++k) {
            const double rhs = c1 * me.derivative(sv(k - 1, ip)) * dv + (k == j ? 1.0 : 0.0);
            dv = rhs / (c1 * me.derivative(sv(k, ip)) + c2);
        }
        symbolic[c.index(j, 1)] = 2.0 * g->hd() * (sv(n, ip) - p.gamma_vals[1]) * dv;
    }

    std::vector<double> errs;
    for (double step : {0.1, 0.05, 0.025, 0.0125}) {
        const auto fd = fd_gradient(p, c, step);
        double e = 0.0;
        for (std::size_t i = 0; i < fd.size(); ++i) e = std::max(e, std::abs(fd[i] - symbolic[i]));
        errs.push_back(e);
    }
    for (std::size_t i = 1; i < errs.size(); ++i) EXPECT_GE(std::log2(errs[i - 1] / errs[i]), 1.9) << i;
    // Cells anchored at the boundary point do not influence the state.
    for (int k = 1; k <= n; ++k) EXPECT_EQ(fd_gradient(p, c, 0.1)[c.index(k, 0)], 0.0);
}

TEST(Optimize, AlreadyOptimal) {
    const auto me = one_jump();
    auto g = interval(0.25, 0.125, 0.25);
    const auto p = twin(me, g, [](std::span<const double>, double) { return 0.0; }, 1.0);
    for (auto m : {OptimizerParams::Method::compass_search, OptimizerParams::Method::fd_gradient_projected,
                   OptimizerParams::Method::gauss_newton}) {
        OptimizerParams o;
        o.method = m;
        const auto r = optimize(p, o, DiscreteControl(g));
        EXPECT_EQ(r.cost, 0.0);
        EXPECT_EQ(r.stop_reason, "target");
        ASSERT_EQ(r.history.size(), 1u);
        EXPECT_TRUE(r.history[0].accepted);
        for (double v : r.control.values) EXPECT_EQ(v, 0.0);
    }
}

TEST(Optimize, ZeroBudgetReturnsStart) {
    const auto me = one_jump();
    auto g = interval(0.25, 0.125, 0.25);
    const auto p = twin(me, g, [](std::span<const double> x, double) { return std::sin(pi * x[0]); }, 2.0);
    DiscreteControl start = Q_map([](std::span<const double> x, double) { return std::sin(pi * x[0]) + 0.1; }, g);
    OptimizerParams o;
    o.max_evaluations = 0;
    const auto r = optimize(p, o, start);
    EXPECT_EQ(r.control.values, start.values);
    EXPECT_EQ(r.evaluations, 0);
    EXPECT_EQ(r.stop_reason, "budget");
}

TEST(Optimize, TwinExperimentAllMethods) {
    const auto me = one_jump();
    auto g = interval(0.25, 0.125, 0.25);
    auto f_true = [](std::span<const double> x, double) { return std::sin(pi * x[0]); };
    const auto p = twin(me, g, f_true, 2.0);
    const double truth = p.cost(project_control(Q_map(f_true, g), p.R));
    for (auto m : {OptimizerParams::Method::compass_search, OptimizerParams::Method::fd_gradient_projected,
                   OptimizerParams::Method::gauss_newton}) {
        OptimizerParams o;
        o.method = m;
        o.max_evaluations = 400;
        const auto r = optimize(p, o, DiscreteControl(g));
        EXPECT_LE(r.cost, truth) << to_string(m);
        EXPECT_LE(r.control.linf(), p.R);
        EXPECT_LE(r.evaluations, o.max_evaluations);
        double last = std::numeric_limits<double>::infinity();
        for (const auto& h : r.history)
            if (h.accepted) {
                EXPECT_LE(h.cost, last);
                last = h.cost;
            }
        EXPECT_NEAR(last, r.cost, 0.0);
    }
}

TEST(Optimize, TightBoxStaysFeasible) {
    const auto me = one_jump();
    auto g = interval(0.25, 0.125, 0.25);
    auto f_true = [](std::span<const double> x, double) { return 3.0 * std::sin(pi * x[0]); };
    auto p = twin(me, g, f_true, 0.5);
    OptimizerParams o;
    o.method = OptimizerParams::Method::gauss_newton;
    o.max_evaluations = 200;
    const auto r = optimize(p, o, DiscreteControl(g, 0.4));
    EXPECT_LE(r.control.linf(), 0.5);
    EXPECT_GE(r.cost, 0.0);
}

TEST(Optimize, MultistartRecordsSeedsAndSplitsBudget) {
    const auto me = one_jump();
    auto g = interval(0.25, 0.125, 0.25);
    const auto p = twin(me, g, [](std::span<const double> x, double) { return std::sin(pi * x[0]); }, 2.0);
    OptimizerParams o;
    o.max_evaluations = 90;
    o.multistart = 2;
    o.seed = 42;
    const auto a = optimize(p, o, DiscreteControl(g));
    const auto b = optimize(p, o, DiscreteControl(g));
    EXPECT_EQ(a.start_seeds.size(), 2u);
    EXPECT_EQ(a.start_seeds, b.start_seeds);
    EXPECT_EQ(a.control.values, b.control.values);
    EXPECT_LE(a.evaluations, 90);
}

TEST(Optimize, HistoryCsv) {
    OptimizeResult r;
    r.history = {{0, 1, 0.5, 0.0, true}, {1, 2, 0.75, 0.25, false}};
    std::stringstream ss;
    write_history_csv(ss, r);
    EXPECT_EQ(ss.str(), "iteration,evaluations,cost,step,accepted\n0,1,0.5,0,1\n1,2,0.75,0.25,0\n");
}
