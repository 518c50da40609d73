#pragma once

/// Checks of the discrete a priori estimates on a computed state, plus the weak
/// residual of the continuous problem evaluated on the interpolant V'.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "interp.hpp"

namespace stefan {

struct MaxPrincipleRecord {
    double lhs = 0.0;  ///< max_k max_γ |v_γ(k)|
    double rhs = 0.0;  ///< e^T max{‖[f]‖∞ / b̄, ‖Φ‖∞}
    bool pass = false;
};

inline MaxPrincipleRecord check_max_principle(const StateVector& sv, const DiscreteControl& ctrl,
                                              const MollifiedEnthalpy& me, double phi_sup) {
    MaxPrincipleRecord r;
    r.lhs = discrete_norms(sv).linf;
    r.rhs = std::exp(sv.grid->disc().T) * std::max(ctrl.linf() / me.bbar(), phi_sup);
    r.pass = r.lhs <= r.rhs * (1 + 1e-9);
    return r;
}

/// 𝓔([f]) = 2 / (b̄ min{1, b̄}) ‖f^Δ‖²_{L₂(D)} + 4 ‖Φ‖²_{W₂¹(Ω)}.
inline double energy_bound(double f_l2_squared, double bbar, double phi_w21_squared) {
    return 2.0 / (bbar * std::min(1.0, bbar)) * f_l2_squared + 4.0 * phi_w21_squared;
}

struct EnergyRecord {
    double time_diff = 0.0, max_spatial = 0.0, cross = 0.0;
    double lhs = 0.0, rhs = 0.0;
    double slack = 0.0;          ///< lhs / rhs (0 when both vanish)
    bool near_equality = false;  ///< lhs within 1e-9 of rhs (relative)
    bool pass = false;
};

inline EnergyRecord check_energy(const StateVector& sv, const DiscreteControl& ctrl, const MollifiedEnthalpy& me,
                                 double phi_w21_squared) {
    const auto n = discrete_norms(sv);
    EnergyRecord r;
    r.time_diff = n.time_diff;
    r.max_spatial = n.max_spatial;
    r.cross = n.cross;
    r.lhs = n.energy();
    r.rhs = energy_bound(ctrl.l2_squared(), me.bbar(), phi_w21_squared);
    r.slack = r.rhs > 0.0 ? r.lhs / r.rhs : 0.0;
    r.near_equality = r.rhs > 0.0 && std::abs(r.rhs - r.lhs) <= 1e-9 * r.rhs;
    r.pass = r.lhs <= r.rhs * (1 + 1e-9);
    return r;
}

struct ContractionRecord {
    double worst_ratio = 0.0;  ///< max over levels and N of A_N / (δ^N A₀)
    bool pass = false;
};

inline ContractionRecord check_contraction(const StateVector& sv) {
    ContractionRecord r;
    for (const auto& d : sv.diagnostics) {
        if (d.A.empty() || d.A[0] == 0.0) continue;
        for (std::size_t N = 1; N < d.A.size(); ++N) {
            const double bound = std::pow(d.delta, static_cast<double>(N)) * d.A[0];
            if (bound > 0.0) r.worst_ratio = std::max(r.worst_ratio, d.A[N] / bound);
            else if (d.A[N] > 0.0) r.worst_ratio = std::numeric_limits<double>::infinity();
        }
    }
    r.pass = r.worst_ratio <= 1.0 + 1e-9;
    return r;
}

struct IdentityRecord {
    double max_residual = 0.0;  ///< max over levels and one-hot η of |residual_identity|
    double max_scaled = 0.0;    ///< max of |residual| / (h^d · local magnitude)
    double tolerance = 1e-8;
    std::size_t evaluated = 0;
    bool pass = false;
};

/// Residual of the summation identity for every one-hot η at every level. The
/// default fast form uses that a one-hot η at γ turns the sum into h^d times the
/// pointwise residual (b_t̄ − Δ_h v − f) at γ; `exhaustive` evaluates the full sum instead.
inline IdentityRecord check_identity_basis(const StateVector& sv, const DiscreteControl& ctrl,
                                           const MollifiedEnthalpy& me, bool exhaustive = false,
                                           double tolerance = 1e-8) {
    const Grid& g = *sv.grid;
    const double h2 = g.h() * g.h(), tau = g.tau();
    IdentityRecord r;
    r.tolerance = tolerance;
    LatticeField eta(sv.grid, 0);
    for (int k = 1; k <= sv.levels(); ++k) {
        const auto& v = sv.slices[static_cast<std::size_t>(k)];
        const auto& w = sv.slices[static_cast<std::size_t>(k - 1)];
        for (auto p : g.interior()) {
            const auto q = static_cast<std::size_t>(g.prism_position(p));
            const double bt = (me(v[p]) - me(w[p])) / tau;
            double lap = 0.0;
            for (int i = 0; i < g.dim(); ++i) lap += (v[p + g.stride(i)] - 2 * v[p] + v[p - g.stride(i)]) / h2;
            const double f = ctrl.at(k, q);
            double res;
            if (exhaustive) {
                eta[p] = 1.0;
                res = residual_identity(me, sv, ctrl, k, eta);
                eta[p] = 0.0;
            } else {
                res = g.hd() * (bt - lap - f);
            }
            const double mag = std::max({1.0, std::abs(bt), std::abs(lap), std::abs(f)});
            r.max_residual = std::max(r.max_residual, std::abs(res));
            r.max_scaled = std::max(r.max_scaled, std::abs(res) / (g.hd() * mag));
            ++r.evaluated;
        }
    }
    r.pass = r.max_scaled <= tolerance;
    return r;
}

class InvalidTestFunction : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A test function ψ(x,t) with its time derivative and spatial gradient.
struct TestFunction {
    std::function<double(std::span<const double>, double)> value;
    std::function<double(std::span<const double>, double)> dt;
    std::function<void(std::span<const double>, double, std::span<double>)> grad;

    /// ψ = Π_i (x_i − lo_i)(hi_i − x_i) · (T − t) · q(x, t) on a box; q and its
    /// derivatives are supplied by the caller (q ≡ 1 when all are empty).
    static TestFunction bubble(const Domain& box, double T, std::function<double(std::span<const double>, double)> q = {},
                               std::function<double(std::span<const double>, double)> q_t = {},
                               std::function<void(std::span<const double>, double, std::span<double>)> q_grad = {}) {
        if (!q) {
            q = [](std::span<const double>, double) { return 1.0; };
            q_t = [](std::span<const double>, double) { return 0.0; };
            q_grad = [](std::span<const double>, double, std::span<double> g) { std::fill(g.begin(), g.end(), 0.0); };
        }
        if (!q_t || !q_grad) throw InvalidTestFunction("free factor needs its time derivative and gradient");
        const auto lo = box.lower, hi = box.upper;
        auto profile = [lo, hi](std::span<const double> x, std::span<double> dprof) {
            const std::size_t d = lo.size();
            std::vector<double> f(d);
            double all = 1.0;
            for (std::size_t i = 0; i < d; ++i) {
                f[i] = (x[i] - lo[i]) * (hi[i] - x[i]);
                all *= f[i];
            }
            for (std::size_t i = 0; i < d; ++i) {
                double rest = 1.0;
                for (std::size_t j = 0; j < d; ++j)
                    if (j != i) rest *= f[j];
                dprof[i] = rest * (lo[i] + hi[i] - 2 * x[i]);
            }
            return all;
        };
        TestFunction tf;
        tf.value = [=](std::span<const double> x, double t) {
            std::vector<double> dp(x.size());
            return profile(x, dp) * (T - t) * q(x, t);
        };
        tf.dt = [=](std::span<const double> x, double t) {
            std::vector<double> dp(x.size());
            const double p = profile(x, dp);
            return p * (-q(x, t) + (T - t) * q_t(x, t));
        };
        tf.grad = [=](std::span<const double> x, double t, std::span<double> g) {
            std::vector<double> dp(x.size()), dq(x.size());
            const double p = profile(x, dp);
            const double qv = q(x, t);
            q_grad(x, t, dq);
            for (std::size_t i = 0; i < x.size(); ++i) g[i] = (T - t) * (dp[i] * qv + p * dq[i]);
        };
        return tf;
    }

    static TestFunction zero() {
        return {[](std::span<const double>, double) { return 0.0; }, [](std::span<const double>, double) { return 0.0; },
                [](std::span<const double>, double, std::span<double> g) { std::fill(g.begin(), g.end(), 0.0); }};
    }

    /// Samples ψ on the faces of the domain bounding box and at t = T.
    void validate(const Domain& dom, double T, int samples = 9) const {
        if (!value || !dt || !grad) throw InvalidTestFunction("test function needs value, time derivative and gradient");
        const int d = dom.dim();
        std::vector<double> x(static_cast<std::size_t>(d));
        double scale = 1e-300;
        std::vector<int> idx(static_cast<std::size_t>(d), 0);
        auto visit = [&](auto&& fn) {
            std::fill(idx.begin(), idx.end(), 0);
            while (true) {
                for (int i = 0; i < d; ++i) x[i] = dom.lower[i] + (dom.upper[i] - dom.lower[i]) * idx[i] / (samples - 1);
                fn();
                int i = 0;
                while (i < d && ++idx[i] == samples) idx[i++] = 0;
                if (i == d) break;
            }
        };
        for (int s = 0; s < samples; ++s) {
            const double t = T * s / (samples - 1);
            visit([&] { scale = std::max(scale, std::abs(value(x, t))); });
        }
        const double tol = 1e-12 * std::max(1.0, scale);
        visit([&] {
            if (std::abs(value(x, T)) > tol) throw InvalidTestFunction("test function does not vanish at t = T");
            bool on_face = false;
            for (int i = 0; i < d; ++i) on_face = on_face || idx[i] == 0 || idx[i] == samples - 1;
            if (!on_face) return;
            for (int s = 0; s < samples; ++s)
                if (std::abs(value(x, T * s / (samples - 1))) > tol)
                    throw InvalidTestFunction("test function does not vanish on the domain boundary");
        });
    }
};

/// ∫_{D_Δ} [−b_n(V') ψ_t + ∇V'·∇ψ − f ψ] − ∫_{Ω_Δ} b_n(Φ) ψ(·, 0), by tensor
/// Gauss-Legendre of the given order per prism and per time level.
inline double weak_residual(const InterpolationBundle& b, const MollifiedEnthalpy& me, const SpaceTimeFunction& f,
                            const SpaceFunction& phi, const TestFunction& psi, int order = 4) {
    const Grid& g = b.grid();
    psi.validate(g.domain(), g.disc().T);
    const auto& sv = b.state();
    const int d = g.dim();
    const auto& trule = quad::gauss_legendre(order);
    const auto& off = g.vertex_offsets();
    std::vector<double> x(static_cast<std::size_t>(d)), gp(static_cast<std::size_t>(d)),
        ga(static_cast<std::size_t>(d)), gb(static_cast<std::size_t>(d));
    double total = 0.0;
    detail::for_prism_nodes(g, order, [&](std::size_t p, double wt, std::span<const double> loc) {
        for (int i = 0; i < d; ++i) x[i] = g.coord(p, i) + loc[i] * g.h();
        const auto wl = b.weights_local(loc);
        auto value_at = [&](int k, std::span<double> grad) {
            const auto& v = sv.slices[static_cast<std::size_t>(k)];
            double s = 0.0;
            std::fill(grad.begin(), grad.end(), 0.0);
            for (std::size_t vert = 0; vert < off.size(); ++vert) {
                const double val = v[p + off[vert]];
                s += wl[vert] * val;
                for (int i = 0; i < d; ++i) {
                    double c = ((vert >> i) & 1) ? 1.0 / g.h() : -1.0 / g.h();
                    for (int j = 0; j < d; ++j)
                        if (j != i) c *= ((vert >> j) & 1) ? loc[j] : 1.0 - loc[j];
                    grad[i] += c * val;
                }
            }
            return s;
        };
        total -= wt * me(phi(x)) * psi.value(x, 0.0);
        double va = value_at(0, ga);
        for (int k = 1; k <= sv.levels(); ++k) {
            const double vb = value_at(k, gb);
            const double t0 = g.disc().time(k - 1), dt = g.disc().time(k) - t0;
            for (std::size_t j = 0; j < trule.size(); ++j) {
                const double th = 0.5 * (trule.nodes[j] + 1.0);
                const double t = t0 + th * dt;
                const double wq = wt * 0.5 * trule.weights[j] * dt;
                const double vp = va + (vb - va) * th;
                psi.grad(x, t, gp);
                double dot = 0.0;
                for (int i = 0; i < d; ++i) dot += (ga[i] + (gb[i] - ga[i]) * th) * gp[i];
                total += wq * (-me(vp) * psi.dt(x, t) + dot - f(x, t) * psi.value(x, t));
            }
            va = vb;
            std::swap(ga, gb);
        }
    });
    return total;
}

struct VerificationReport {
    MaxPrincipleRecord max_principle;
    EnergyRecord energy;
    ContractionRecord contraction;
    IdentityRecord identity;
    std::vector<double> weak_residuals;
    std::pair<double, double> bbar_range{};
    double bbar = 0.0;

    bool pass() const { return max_principle.pass && energy.pass && contraction.pass && identity.pass; }

    nlohmann::json to_json() const {
        return {{"schema", "stefan.verification"},
                {"version", 1},
                {"pass", pass()},
                {"bbar", bbar},
                {"bbar_scan_range", {bbar_range.first, bbar_range.second}},
                {"max_principle", {{"lhs", max_principle.lhs}, {"rhs", max_principle.rhs}, {"pass", max_principle.pass}}},
                {"energy",
                 {{"time_diff", energy.time_diff},
                  {"max_spatial", energy.max_spatial},
                  {"cross", energy.cross},
                  {"lhs", energy.lhs},
                  {"rhs", energy.rhs},
                  {"slack", energy.slack},
                  {"near_equality", energy.near_equality},
                  {"pass", energy.pass}}},
                {"contraction", {{"worst_ratio", contraction.worst_ratio}, {"pass", contraction.pass}}},
                {"identity_residuals",
                 {{"max_residual", identity.max_residual},
                  {"max_scaled", identity.max_scaled},
                  {"tolerance", identity.tolerance},
                  {"evaluated", identity.evaluated},
                  {"pass", identity.pass}}},
                {"weak_residual", weak_residuals}};
    }
};

/// Runs every discrete check on one solve. `phi_sup` is ‖Φ‖∞ of the initial
/// datum (the level-0 maximum is used when absent).
inline VerificationReport verify_state(const StateVector& sv, const DiscreteControl& ctrl, const MollifiedEnthalpy& me,
                                       double phi_w21_squared, std::optional<double> phi_sup = std::nullopt) {
    VerificationReport r;
    double sup0 = 0.0;
    for (auto p : sv.grid->lattice_all()) sup0 = std::max(sup0, std::abs(sv(0, p)));
    r.max_principle = check_max_principle(sv, ctrl, me, phi_sup.value_or(sup0));
    r.energy = check_energy(sv, ctrl, me, phi_w21_squared);
    r.contraction = check_contraction(sv);
    r.identity = check_identity_basis(sv, ctrl, me);
    r.bbar = me.bbar();
    r.bbar_range = me.certified_range();
    return r;
}

}  // namespace stefan
