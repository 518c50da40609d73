#pragma once

/// Discrete state vector: time marching of the implicit scheme, each level solved
/// by Jacobi successive approximations with a monotone scalar solve per interior
/// lattice point.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "data.hpp"
#include "enthalpy.hpp"
#include "grid.hpp"
#include "roots.hpp"

namespace stefan {

struct SolverParams {
    double tol_fp = 1e-12;          ///< stop when A_N <= tol_fp · max(1, ‖prev‖∞)
    int max_fp_iters = 200000;
    double tol_scalar = 1e-14;      ///< relative residual of the scalar equation
    int max_scalar_iters = 200;
    int threads = 1;
    /// Jacobi uses only v^N on the right side; Gauss-Seidel (single-threaded,
    /// reverse flat order) reads already-updated neighbours and reaches the same solution.
    enum class Sweep { jacobi, gauss_seidel } sweep = Sweep::jacobi;

    void validate() const {
        if (!(tol_fp > 0.0) || max_fp_iters < 1 || !(tol_scalar > 0.0) || max_scalar_iters < 1 || threads < 1)
            throw std::invalid_argument("solver parameters must be positive");
    }
};

struct StepDiagnostics {
    int level = 0;
    int iterations = 0;              ///< Jacobi sweeps performed
    double delta = 0.0;              ///< contraction factor 2d / (2d + (h²/τ) b̄)
    double tolerance = 0.0;          ///< absolute stop threshold on A_N
    std::vector<double> A;           ///< A_N = max |v^{N+1} − v^N|, N = 0, 1, ...
    double max_scalar_residual = 0.0;
    /// Guaranteed distance to the exact level solution: A_last · δ / (1 − δ).
    double tail_bound() const { return A.empty() ? 0.0 : A.back() * delta / (1.0 - delta); }
};

class SolverNonConvergence : public std::runtime_error {
public:
    SolverNonConvergence(const std::string& what, int level, std::vector<double> history)
        : std::runtime_error(what), level_(level), history_(std::move(history)) {}
    int level() const { return level_; }
    const std::vector<double>& history() const { return history_; }

private:
    int level_;
    std::vector<double> history_;
};

struct StateVector {
    GridPtr grid;
    std::vector<LatticeField> slices;  ///< v(0), ..., v(n)
    std::vector<StepDiagnostics> diagnostics;  ///< levels 1..n

    int levels() const { return static_cast<int>(slices.size()) - 1; }
    double operator()(int k, std::size_t flat) const { return slices[static_cast<std::size_t>(k)][flat]; }
};

struct ScalarSolution {
    double x = 0.0;
    double residual = 0.0;  ///< |c1 b_n(x) + c2 x − r| relative to the equation scale
    int iterations = 0;
};

/// Unique root of c1·b_n(x) + c2·x = r: safeguarded Newton inside a bracket grown
/// geometrically from the initial guess (default r / (c1·b̄ + c2)).
inline ScalarSolution scalar_solve_detailed(const MollifiedEnthalpy& me, double c1, double c2, double r,
                                            const SolverParams& params = {}, std::optional<double> guess = {}) {
    if (!(c1 > 0.0) || !(c2 > 0.0)) throw std::invalid_argument("scalar_solve needs c1, c2 > 0");
    const double slope = c1 * me.bbar() + c2;
    const double x0 = guess ? *guess : r / slope;
    auto gd = [&](double x) {
        const auto [b, db] = me.evaluate(x);
        return std::pair{c1 * b + c2 * x - r, c1 * db + c2};
    };
    auto g = [&](double x) { return gd(x).first; };
    auto scale_of = [&](double x, double gx) { return std::abs(gx + r - c2 * x) + std::abs(c2 * x) + std::abs(r); };
    // Residual and slope divided by the equation scale at x; the Newton step is unchanged.
    auto gd_rel = [&](double x) {
        const auto [gx, dgx] = gd(x);
        const double s = std::max(scale_of(x, gx), 1e-300);
        return std::pair{gx / s, dgx / s};
    };
    const auto [g0, dg0] = gd(x0);
    const double rel0 = std::abs(g0) / std::max(scale_of(x0, g0), 1e-300);
    if (rel0 <= params.tol_scalar) return {x0, rel0, 0};
    // g' >= c1·b̄ + c2, so the root lies within |g(x0)| / slope of x0.
    const double step = (std::abs(g0) / slope) * (1.0 + 1e-9) + 1e-300;
    const auto br = roots::grow_bracket(g, x0, step, 1e9);
    const auto res = roots::newton_bisect(gd_rel, br, x0 - g0 / dg0, params.tol_scalar, params.max_scalar_iters);
    if (!res.converged) throw roots::NonConvergence("scalar solve did not converge for r = " + std::to_string(r));
    return {res.x, res.residual, res.iterations};
}

inline double scalar_solve(const MollifiedEnthalpy& me, double c1, double c2, double r, const SolverParams& params = {},
                           std::optional<double> guess = {}) {
    return scalar_solve_detailed(me, c1, c2, r, params, guess).x;
}

namespace detail {
template <class F>
void parallel_chunks(std::size_t n, int threads, F&& body) {
    if (threads <= 1 || n < 256) {
        body(std::size_t{0}, n, 0);
        return;
    }
    const auto t = static_cast<std::size_t>(threads);
    std::vector<std::thread> pool;
    pool.reserve(t);
    for (std::size_t w = 0; w < t; ++w) {
        const std::size_t lo = n * w / t, hi = n * (w + 1) / t;
        pool.emplace_back([&, lo, hi, w] { body(lo, hi, static_cast<int>(w)); });
    }
    for (auto& th : pool) th.join();
}
}  // namespace detail

/// One implicit level: Jacobi sweeps v^{N+1}_γ = S(c1 b_n(prev_γ) + h⁻² Σ_i (v^N_{γ+e_i} + v^N_{γ−e_i}) + f_γ)
/// with S the scalar resolvent, starting from v⁰ = prev.
inline std::pair<LatticeField, StepDiagnostics> time_step(const MollifiedEnthalpy& me, const Grid& grid,
                                                          const LatticeField& prev, std::span<const double> f_slice,
                                                          const SolverParams& params = {}) {
    params.validate();
    const int d = grid.dim();
    const double h = grid.h(), tau = grid.tau();
    const double c1 = 1.0 / tau, c2 = 2.0 * d / (h * h), ih2 = 1.0 / (h * h);
    const auto& interior = grid.interior();
    const std::size_t m = interior.size();

    StepDiagnostics diag;
    diag.level = prev.level + 1;
    diag.delta = 2.0 * d / (2.0 * d + (h * h / tau) * me.bbar());
    double prev_max = 0.0;
    for (auto p : interior) prev_max = std::max(prev_max, std::abs(prev[p]));
    diag.tolerance = params.tol_fp * std::max(1.0, prev_max);

    std::vector<double> base(m);
    for (std::size_t i = 0; i < m; ++i) {
        const auto p = interior[i];
        base[i] = c1 * me(prev[p]) + f_slice[static_cast<std::size_t>(grid.prism_position(p))];
    }
    std::vector<std::size_t> strides(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) strides[i] = grid.stride(i);

    LatticeField cur = prev, next = prev;
    cur.level = next.level = diag.level;
    for (auto p : grid.boundary()) cur[p] = next[p] = 0.0;

    const int workers = std::max(1, params.threads);
    std::vector<double> chunk_max(static_cast<std::size_t>(workers)), chunk_res(static_cast<std::size_t>(workers));
    for (int it = 0; it < params.max_fp_iters; ++it) {
        std::fill(chunk_max.begin(), chunk_max.end(), 0.0);
        std::fill(chunk_res.begin(), chunk_res.end(), 0.0);
        if (params.sweep == SolverParams::Sweep::gauss_seidel) {
            double amax = 0.0, rmax = 0.0;
            for (std::size_t i = m; i-- > 0;) {
                const auto p = interior[i];
                double nb = 0.0;
                for (int a = 0; a < d; ++a) nb += cur[p + strides[a]] + cur[p - strides[a]];
                const auto sol = scalar_solve_detailed(me, c1, c2, base[i] + ih2 * nb, params, cur[p]);
                amax = std::max(amax, std::abs(sol.x - cur[p]));
                rmax = std::max(rmax, sol.residual);
                cur[p] = sol.x;
            }
            diag.A.push_back(amax);
            diag.max_scalar_residual = rmax;
            diag.iterations = it + 1;
            if (amax <= diag.tolerance) return {std::move(cur), std::move(diag)};
            continue;
        }
        detail::parallel_chunks(m, workers, [&](std::size_t lo, std::size_t hi, int w) {
            double amax = 0.0, rmax = 0.0;
            for (std::size_t i = lo; i < hi; ++i) {
                const auto p = interior[i];
                double nb = 0.0;
                for (int a = 0; a < d; ++a) nb += cur[p + strides[a]] + cur[p - strides[a]];
                const auto sol = scalar_solve_detailed(me, c1, c2, base[i] + ih2 * nb, params, cur[p]);
                next[p] = sol.x;
                amax = std::max(amax, std::abs(sol.x - cur[p]));
                rmax = std::max(rmax, sol.residual);
            }
            chunk_max[static_cast<std::size_t>(w)] = amax;
            chunk_res[static_cast<std::size_t>(w)] = rmax;
        });
        const double A = *std::max_element(chunk_max.begin(), chunk_max.end());
        diag.A.push_back(A);
        diag.max_scalar_residual = *std::max_element(chunk_res.begin(), chunk_res.end());
        diag.iterations = it + 1;
        std::swap(cur.values, next.values);
        if (A <= diag.tolerance) return {std::move(cur), std::move(diag)};
    }
    throw SolverNonConvergence("fixed-point iteration did not converge at level " + std::to_string(diag.level), diag.level,
                               diag.A);
}

/// v(0) = Φ_γ on interior points (zero on the boundary), then levels 1..n.
inline StateVector solve_state(const MollifiedEnthalpy& me, GridPtr grid, const DiscreteControl& ctrl,
                               const PrismValues& phi_vals, const SolverParams& params = {}) {
    const Grid& g = *grid;
    if (ctrl.grid.get() != grid.get() && ctrl.cells() != g.cell_count())
        throw std::invalid_argument("control does not belong to this grid");
    if (phi_vals.size() != g.prisms().size()) throw std::invalid_argument("initial values must be given per prism");
    StateVector sv;
    sv.grid = grid;
    LatticeField v0(grid, 0);
    for (auto p : g.interior()) v0[p] = phi_vals[static_cast<std::size_t>(g.prism_position(p))];
    sv.slices.push_back(std::move(v0));
    for (int k = 1; k <= g.levels(); ++k) {
        auto [slice, diag] = time_step(me, g, sv.slices.back(), ctrl.level(k), params);
        sv.slices.push_back(std::move(slice));
        sv.diagnostics.push_back(std::move(diag));
    }
    return sv;
}

/// Σ_A h^d [ (b_n(v_γ(k)))_t̄ η_γ + Σ_i v_{γx_i}(k) η_{γx_i} − f_(γ,k) η_γ ] for an η vanishing on the boundary.
inline double residual_identity(const MollifiedEnthalpy& me, const StateVector& sv, const DiscreteControl& ctrl, int k,
                                const LatticeField& eta) {
    const Grid& g = *sv.grid;
    for (auto p : g.boundary())
        if (eta[p] != 0.0) throw std::invalid_argument("test collection must vanish on the lattice boundary");
    const auto& v = sv.slices[static_cast<std::size_t>(k)];
    const auto& vp = sv.slices[static_cast<std::size_t>(k - 1)];
    const double h = g.h(), tau = g.tau();
    double s = 0.0;
    for (std::size_t q = 0; q < g.prisms().size(); ++q) {
        const auto p = g.prisms()[q];
        double term = 0.0;
        if (eta[p] != 0.0) term += ((me(v[p]) - me(vp[p])) / tau - ctrl.at(k, q)) * eta[p];
        for (int i = 0; i < g.dim(); ++i) {
            const auto nb = p + g.stride(i);
            const double deta = (eta[nb] - eta[p]) / h;
            if (deta != 0.0) term += (v[nb] - v[p]) / h * deta;
        }
        s += term;
    }
    return s * g.hd();
}

/// State CSV (version 1): header `k,g0,..,g{d-1},value`, one row per lattice point
/// of Ω_Δ per level, level-major and flat-index ascending.
inline void write_state_csv(std::ostream& os, const StateVector& sv) {
    const Grid& g = *sv.grid;
    os << "k";
    for (int i = 0; i < g.dim(); ++i) os << ",g" << i;
    os << ",value\n";
    for (int k = 0; k <= sv.levels(); ++k)
        for (auto p : g.lattice_all()) {
            os << k;
            for (int m : g.multi_index(p)) os << ',' << m;
            os << ',' << format_real(sv(k, p)) << '\n';
        }
}

inline StateVector read_state_csv(std::istream& is, GridPtr grid) {
    const Grid& g = *grid;
    StateVector sv;
    sv.grid = grid;
    for (int k = 0; k <= g.levels(); ++k) sv.slices.emplace_back(grid, k);
    std::string line;
    if (!std::getline(is, line) || line.rfind("k,", 0) != 0) throw std::runtime_error("state CSV: missing header");
    std::size_t count = 0, row = 1;
    while (std::getline(is, line)) {
        ++row;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> parts;
        while (std::getline(ss, cell, ',')) parts.push_back(cell);
        if (parts.size() != static_cast<std::size_t>(g.dim() + 2))
            throw std::runtime_error("state CSV row " + std::to_string(row) + ": wrong column count");
        const int k = std::stoi(parts[0]);
        std::vector<int> m(static_cast<std::size_t>(g.dim()));
        for (int i = 0; i < g.dim(); ++i) m[i] = std::stoi(parts[i + 1]);
        const auto flat = g.flat_index(m);
        if (k < 0 || k > g.levels() || !g.in_lattice(flat))
            throw std::runtime_error("state CSV row " + std::to_string(row) + ": not a lattice point of this grid");
        sv.slices[static_cast<std::size_t>(k)][flat] = std::stod(parts.back());
        ++count;
    }
    if (count != g.lattice_all().size() * static_cast<std::size_t>(g.levels() + 1))
        throw std::runtime_error("state CSV does not cover every lattice point and level");
    return sv;
}

/// Diagnostics sidecar (version 1).
inline nlohmann::json diagnostics_json(const StateVector& sv, const MollifiedEnthalpy& me) {
    nlohmann::json levels = nlohmann::json::array();
    for (const auto& d : sv.diagnostics)
        levels.push_back({{"level", d.level},
                          {"iterations", d.iterations},
                          {"delta", d.delta},
                          {"tolerance", d.tolerance},
                          {"tail_bound", d.tail_bound()},
                          {"max_scalar_residual", d.max_scalar_residual},
                          {"A", d.A}});
    return {{"schema", "stefan.diagnostics"},
            {"version", 1},
            {"rho", me.rho()},
            {"bbar", me.bbar()},
            {"bbar_scan_range", {me.certified_range().first, me.certified_range().second}},
            {"levels", levels}};
}

}  // namespace stefan
