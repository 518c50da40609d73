#pragma once

/// The discrete cost 𝓘_Δ, its trace-based continuous counterpart, finite-difference
/// gradients, and box-constrained searches for low-cost controls.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "interp.hpp"

namespace stefan {

struct CostReport {
    double I = 0.0;                 ///< Σ_A h^d |v_γ(n) − Γ_γ|²
    std::vector<double> deviations; ///< h^d |v_γ(n) − Γ_γ|² per prism position
    std::optional<double> J_approx; ///< ∫_Ω (V'(x,T) − Γ(x))², when Γ is available as a function
    std::optional<double> gap;      ///< |J_approx − I|
};

namespace detail {
/// ∫ over the domain of g(x) by tensor Gauss-Legendre: full-box panels matching
/// the grid lattice for box domains, the prisms for indicator domains.
template <class G>
double integrate_over_domain(const Grid& g, G&& fn, int order) {
    const int d = g.dim();
    const auto& rule = quad::gauss_legendre(order);
    double total = 0.0;
    if (g.domain().kind == Domain::Kind::box) {
        std::vector<double> pw(static_cast<std::size_t>(d)), lo(static_cast<std::size_t>(d));
        std::vector<int> cnt(static_cast<std::size_t>(d)), idx(static_cast<std::size_t>(d), 0);
        for (int i = 0; i < d; ++i) {
            cnt[i] = g.extent()[i] - 1;
            pw[i] = (g.domain().upper[i] - g.domain().lower[i]) / cnt[i];
        }
        while (true) {
            for (int i = 0; i < d; ++i) lo[i] = g.domain().lower[i] + idx[i] * pw[i];
            total += quad::integrate_box(fn, lo, pw, rule);
            int i = 0;
            while (i < d && ++idx[i] == cnt[i]) idx[i++] = 0;
            if (i == d) break;
        }
        return total;
    }
    const std::vector<double> width(static_cast<std::size_t>(d), g.h());
    for (auto p : g.prisms()) total += quad::integrate_box(fn, g.coords(p), width, rule);
    return total;
}
}  // namespace detail

inline CostReport discrete_cost(const StateVector& sv, const PrismValues& gamma_vals, const SpaceFunction& gamma = {}) {
    const Grid& g = *sv.grid;
    if (gamma_vals.size() != g.prisms().size()) throw std::invalid_argument("measurement must be given per prism");
    CostReport r;
    r.deviations.resize(gamma_vals.size());
    const int n = sv.levels();
    for (std::size_t q = 0; q < gamma_vals.size(); ++q) {
        const double e = sv(n, g.prisms()[q]) - gamma_vals[q];
        r.deviations[q] = g.hd() * e * e;
        r.I += r.deviations[q];
    }
    if (gamma) {
        InterpolationBundle b(sv);
        r.J_approx = detail::integrate_over_domain(
            g,
            [&](const std::vector<double>& x) {
                const double e = b.multilinear(n, x) - gamma(x);
                return e * e;
            },
            6);
        r.gap = std::abs(*r.J_approx - r.I);
    }
    return r;
}

/// Steklov averages over the prisms of `coarse` of the final slice V^n of a state
/// on a finer grid. Coarse prisms are split into fine-width panels when the widths
/// are commensurate, which makes the quadrature exact for the multilinear trace.
inline PrismValues restrict_final_trace(const StateVector& fine, const Grid& coarse) {
    InterpolationBundle b(fine);
    const int n = fine.levels();
    const double ratio = coarse.h() / fine.grid->h();
    const int panels = std::abs(ratio - std::round(ratio)) < 1e-9 ? static_cast<int>(std::round(ratio)) : 8;
    const auto& rule = quad::gauss_legendre(4);
    const int d = coarse.dim();
    const double pw = coarse.h() / panels;
    PrismValues out;
    out.reserve(coarse.prisms().size());
    std::vector<double> lo(static_cast<std::size_t>(d)), width(static_cast<std::size_t>(d), pw);
    for (auto p : coarse.prisms()) {
        double s = 0.0;
        std::vector<int> idx(static_cast<std::size_t>(d), 0);
        while (true) {
            for (int i = 0; i < d; ++i) lo[i] = coarse.coord(p, i) + idx[i] * pw;
            s += quad::integrate_box([&](const std::vector<double>& x) { return b.multilinear(n, x); }, lo, width, rule);
            int i = 0;
            while (i < d && ++idx[i] == panels) idx[i++] = 0;
            if (i == d) break;
        }
        out.push_back(s / coarse.hd());
    }
    return out;
}

/// Everything needed to evaluate 𝓘_Δ for a control on one grid.
struct InverseProblem {
    const MollifiedEnthalpy* me = nullptr;
    GridPtr grid;
    PrismValues phi_vals;
    PrismValues gamma_vals;
    double R = 1.0;
    SolverParams solver;

    StateVector forward(const DiscreteControl& c) const { return solve_state(*me, grid, c, phi_vals, solver); }
    double cost(const DiscreteControl& c) const { return discrete_cost(forward(c), gamma_vals).I; }
    /// r_γ = h^{d/2} (v_γ(n) − Γ_γ), so that 𝓘_Δ = |r|².
    Eigen::VectorXd residual(const DiscreteControl& c) const {
        const auto sv = forward(c);
        const Grid& g = *grid;
        Eigen::VectorXd r(static_cast<Eigen::Index>(gamma_vals.size()));
        const double s = std::sqrt(g.hd());
        for (std::size_t q = 0; q < gamma_vals.size(); ++q)
            r[static_cast<Eigen::Index>(q)] = s * (sv(sv.levels(), g.prisms()[q]) - gamma_vals[q]);
        return r;
    }
};

/// Central differences of 𝓘_Δ per cell; one-sided (inward) where a central
/// stencil would leave [−R, R]. Cells are visited in storage order.
inline std::vector<double> fd_gradient(const InverseProblem& prob, const DiscreteControl& ctrl, double step) {
    if (!(step > 0.0)) throw std::invalid_argument("finite-difference step must be positive");
    std::vector<double> grad(ctrl.cells());
    DiscreteControl work = ctrl;
    std::optional<double> base;
    for (std::size_t i = 0; i < ctrl.cells(); ++i) {
        const double x = ctrl.values[i];
        const bool up = x + step <= prob.R, down = x - step >= -prob.R;
        if (up && down) {
            work.values[i] = x + step;
            const double fp = prob.cost(work);
            work.values[i] = x - step;
            const double fm = prob.cost(work);
            grad[i] = (fp - fm) / (2 * step);
        } else {
            if (!base) base = prob.cost(ctrl);
            const double s = up ? step : -step;
            work.values[i] = x + s;
            grad[i] = (prob.cost(work) - *base) / s;
        }
        work.values[i] = x;
    }
    return grad;
}

struct OptimizerParams {
    enum class Method { compass_search, fd_gradient_projected, gauss_newton } method = Method::compass_search;
    double initial_step = 0.5;   ///< compass step, gradient step length, as a fraction of R
    double step_floor = 1e-10;   ///< stop once the step (fraction of R) falls below this
    double fd_step = 1e-6;       ///< finite-difference step (absolute)
    int max_evaluations = 1000;  ///< state solves, including the starting point
    double target_eps = 1e-12;   ///< stop when cost ≤ best_known + target_eps
    double best_known = 0.0;
    int multistart = 0;          ///< additional random feasible starts
    std::uint64_t seed = 0;

    void validate() const {
        if (!(initial_step > 0.0) || !(step_floor > 0.0) || !(fd_step > 0.0) || max_evaluations < 0 ||
            !(target_eps > 0.0) || multistart < 0)
            throw std::invalid_argument("optimizer parameters must be positive");
    }
};

inline std::string to_string(OptimizerParams::Method m) {
    switch (m) {
        case OptimizerParams::Method::compass_search: return "compass_search";
        case OptimizerParams::Method::fd_gradient_projected: return "fd_gradient_projected";
        case OptimizerParams::Method::gauss_newton: return "gauss_newton";
    }
    return "unknown";
}

struct HistoryEntry {
    int iteration = 0;
    int evaluations = 0;
    double cost = 0.0;
    double step = 0.0;
    bool accepted = false;
};

struct OptimizeResult {
    DiscreteControl control;
    double cost = std::numeric_limits<double>::quiet_NaN();
    int evaluations = 0;
    int rejected_trials = 0;  ///< trials whose state solve failed
    std::string stop_reason;  ///< "budget", "step_floor" or "target"
    std::vector<HistoryEntry> history;
    std::vector<std::uint64_t> start_seeds;
    double eps_hat(double best_known = 0.0) const { return cost - best_known; }
};

namespace detail {

class Evaluator {
public:
    Evaluator(const InverseProblem& p, const OptimizerParams& o, OptimizeResult& r) : prob_(p), opt_(o), res_(r) {}

    bool exhausted() const { return res_.evaluations >= opt_.max_evaluations; }
    bool on_target(double c) const { return c <= opt_.best_known + opt_.target_eps; }

    /// Cost |r|² of a control after projection; +∞ (and a logged rejection) when the solve fails.
    double operator()(DiscreteControl& c) {
        const auto r = residual(c);
        return r ? r->squaredNorm() : std::numeric_limits<double>::infinity();
    }

    std::optional<Eigen::VectorXd> residual(DiscreteControl& c) {
        c = project_control(std::move(c), prob_.R);
        ++res_.evaluations;
        try {
            last_ = prob_.residual(c);
            return last_;
        } catch (const SolverNonConvergence&) {
        } catch (const roots::NonConvergence&) {
        }
        ++res_.rejected_trials;
        return std::nullopt;
    }

    /// Residual of the most recent successful evaluation.
    const Eigen::VectorXd& last_residual() const { return last_; }

    void log(int it, double cost, double step, bool accepted) {
        res_.history.push_back({it, res_.evaluations, cost, step, accepted});
    }

private:
    const InverseProblem& prob_;
    const OptimizerParams& opt_;
    OptimizeResult& res_;
    Eigen::VectorXd last_;
};

inline void compass_search(const InverseProblem& prob, const OptimizerParams& opt, Evaluator& eval,
                           DiscreteControl& x, double& fx, OptimizeResult& res) {
    double step = opt.initial_step * prob.R;
    int it = 0;
    while (true) {
        bool improved = false;
        for (std::size_t i = 0; i < x.cells(); ++i) {
            for (double dir : {1.0, -1.0}) {
                const double xi = x.values[i];
                const double target = std::clamp(xi + dir * step, -prob.R, prob.R);
                if (target == xi) continue;
                if (eval.exhausted()) {
                    res.stop_reason = "budget";
                    return;
                }
                DiscreteControl trial = x;
                trial.values[i] = target;
                const double ft = eval(trial);
                const bool accept = ft < fx;
                eval.log(++it, ft, step, accept);
                if (accept) {
                    x = std::move(trial);
                    fx = ft;
                    improved = true;
                    if (eval.on_target(fx)) {
                        res.stop_reason = "target";
                        return;
                    }
                    break;
                }
            }
        }
        if (!improved) step *= 0.5;
        if (step < opt.step_floor * prob.R) {
            res.stop_reason = "step_floor";
            return;
        }
    }
}

/// Gradient projection with a step that doubles after success and halves after failure.
inline void projected_gradient(const InverseProblem& prob, const OptimizerParams& opt, Evaluator& eval,
                               DiscreteControl& x, double& fx, OptimizeResult& res) {
    double step = opt.initial_step * prob.R;
    int it = 0;
    std::vector<double> g;
    bool fresh = false;
    while (true) {
        if (!fresh) {
            const int need = 2 * static_cast<int>(x.cells());
            if (res.evaluations + need > opt.max_evaluations) {
                res.stop_reason = "budget";
                return;
            }
            g.assign(x.cells(), 0.0);
            DiscreteControl work = x;
            for (std::size_t i = 0; i < x.cells(); ++i) {
                const double xi = x.values[i];
                const double hp = std::min(opt.fd_step, prob.R - xi), hm = std::min(opt.fd_step, prob.R + xi);
                work.values[i] = xi + hp;
                const double fp = hp > 0 ? eval(work) : fx;
                work.values[i] = xi - hm;
                const double fm = hm > 0 ? eval(work) : fx;
                work.values[i] = xi;
                g[i] = (hp + hm) > 0 ? (fp - fm) / (hp + hm) : 0.0;
            }
            fresh = true;
        }
        double gn = 0.0;
        for (double v : g) gn = std::max(gn, std::abs(v));
        if (gn == 0.0) {
            res.stop_reason = "step_floor";
            return;
        }
        if (eval.exhausted()) {
            res.stop_reason = "budget";
            return;
        }
        DiscreteControl trial = x;
        for (std::size_t i = 0; i < x.cells(); ++i) trial.values[i] -= step * g[i] / gn;
        const double ft = eval(trial);
        const bool accept = ft < fx;
        eval.log(++it, ft, step, accept);
        if (accept) {
            x = std::move(trial);
            fx = ft;
            step *= 2.0;
            fresh = false;
            if (eval.on_target(fx)) {
                res.stop_reason = "target";
                return;
            }
        } else {
            step *= 0.5;
            if (step < opt.step_floor * prob.R) {
                res.stop_reason = "step_floor";
                return;
            }
        }
    }
}

/// Projected Levenberg-Marquardt on r([f]) with a forward-difference Jacobian.
inline void gauss_newton(const InverseProblem& prob, const OptimizerParams& opt, Evaluator& eval, DiscreteControl& x,
                         double& fx, OptimizeResult& res) {
    const auto n = static_cast<Eigen::Index>(x.cells());
    if (!std::isfinite(fx)) {
        res.stop_reason = "step_floor";
        return;
    }
    int it = 0;
    double mu = 1e-6;
    Eigen::VectorXd r0 = eval.last_residual();
    while (true) {
        if (res.evaluations + n > opt.max_evaluations) {
            res.stop_reason = "budget";
            return;
        }
        Eigen::MatrixXd J(r0.size(), n);
        DiscreteControl work = x;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double xi = x.values[static_cast<std::size_t>(i)];
            const double s = xi + opt.fd_step <= prob.R ? opt.fd_step : -opt.fd_step;
            work.values[static_cast<std::size_t>(i)] = xi + s;
            const auto ri = eval.residual(work);
            work.values[static_cast<std::size_t>(i)] = xi;
            J.col(i) = ri ? Eigen::VectorXd((*ri - r0) / s) : Eigen::VectorXd::Zero(r0.size());
        }
        const Eigen::MatrixXd JtJ = J.transpose() * J;
        const Eigen::VectorXd Jtr = J.transpose() * r0;
        const double scale = std::max(JtJ.diagonal().maxCoeff(), 1e-300);
        bool accepted = false;
        while (!accepted) {
            if (eval.exhausted()) {
                res.stop_reason = "budget";
                return;
            }
            Eigen::MatrixXd A = JtJ;
            A.diagonal().array() += mu * scale;
            const Eigen::VectorXd p = A.ldlt().solve(-Jtr);
            DiscreteControl trial = x;
            for (Eigen::Index i = 0; i < n; ++i) trial.values[static_cast<std::size_t>(i)] += p[i];
            const auto rt = eval.residual(trial);
            const double ft = rt ? rt->squaredNorm() : std::numeric_limits<double>::infinity();
            accepted = ft < fx;
            eval.log(++it, ft, p.lpNorm<Eigen::Infinity>(), accepted);
            if (accepted) {
                x = std::move(trial);
                fx = ft;
                r0 = *rt;
                mu = std::max(mu / 10.0, 1e-12);
                if (eval.on_target(fx)) {
                    res.stop_reason = "target";
                    return;
                }
            } else {
                mu *= 10.0;
                if (mu > 1e12 || p.lpNorm<Eigen::Infinity>() < opt.step_floor * prob.R) {
                    res.stop_reason = "step_floor";
                    return;
                }
            }
        }
    }
}

inline OptimizeResult optimize_from(const InverseProblem& prob, const OptimizerParams& opt, DiscreteControl start) {
    OptimizeResult res;
    res.control = project_control(std::move(start), prob.R);
    if (opt.max_evaluations == 0) {
        res.stop_reason = "budget";
        return res;
    }
    Evaluator eval(prob, opt, res);
    DiscreteControl x = res.control;
    double fx = eval(x);
    eval.log(0, fx, 0.0, true);
    if (eval.on_target(fx)) {
        res.stop_reason = "target";
    } else {
        switch (opt.method) {
            case OptimizerParams::Method::compass_search: compass_search(prob, opt, eval, x, fx, res); break;
            case OptimizerParams::Method::fd_gradient_projected: projected_gradient(prob, opt, eval, x, fx, res); break;
            case OptimizerParams::Method::gauss_newton: gauss_newton(prob, opt, eval, x, fx, res); break;
        }
    }
    res.control = std::move(x);
    res.cost = fx;
    return res;
}

}  // namespace detail

/// Searches 𝓕_Δ^R for a control of low 𝓘_Δ. Every evaluated control is
/// projected onto the box; failed trial solves are rejected and counted. With
/// multistart > 0 the budget is split evenly between the given start and K random
/// feasible starts drawn from `seed`, and the best run is returned.
inline OptimizeResult optimize(const InverseProblem& prob, const OptimizerParams& opt, const DiscreteControl& start) {
    opt.validate();
    if (opt.multistart == 0) return detail::optimize_from(prob, opt, start);
    OptimizerParams each = opt;
    each.multistart = 0;
    each.max_evaluations = opt.max_evaluations / (opt.multistart + 1);
    OptimizeResult best = detail::optimize_from(prob, each, start);
    std::vector<std::uint64_t> seeds;
    std::mt19937_64 master(opt.seed);
    int total = best.evaluations, rejected = best.rejected_trials;
    for (int s = 0; s < opt.multistart; ++s) {
        const auto seed = master();
        seeds.push_back(seed);
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(-prob.R, prob.R);
        DiscreteControl c(prob.grid);
        for (double& v : c.values) v = u(rng);
        auto r = detail::optimize_from(prob, each, std::move(c));
        total += r.evaluations;
        rejected += r.rejected_trials;
        if (r.cost < best.cost) best = std::move(r);
    }
    best.evaluations = total;
    best.rejected_trials = rejected;
    best.start_seeds = std::move(seeds);
    return best;
}

/// Optimization history CSV (version 1): header `iteration,evaluations,cost,step,accepted`.
inline void write_history_csv(std::ostream& os, const OptimizeResult& r) {
    os << "iteration,evaluations,cost,step,accepted\n";
    for (const auto& h : r.history)
        os << h.iteration << ',' << h.evaluations << ',' << format_real(h.cost) << ',' << format_real(h.step) << ','
           << (h.accepted ? 1 : 0) << '\n';
}

}  // namespace stefan
