#pragma once

/// Interpolants of a discrete state vector over D: the cell-constant Ṽ, the
/// difference step functions Ṽⁱ, the multilinear slices V^k, their piecewise
/// constant (V) and piecewise linear (V') continuations in time, discrete and L₂
/// norms, free-boundary extraction and sampled export.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <ostream>
#include <span>
#include <vector>

#include "data.hpp"
#include "quadrature.hpp"
#include "solver.hpp"

namespace stefan {

class InterpolationBundle {
public:
    /// The state must outlive the bundle.
    explicit InterpolationBundle(const StateVector& sv) : sv_(&sv), g_(sv.grid.get()) {}

    const StateVector& state() const { return *sv_; }
    const Grid& grid() const { return *g_; }

    /// Time level whose cell (t_{k−1}, t_k] contains t; t = 0 maps to level 1.
    int cell_level(double t) const {
        const int k = static_cast<int>(std::ceil(t / g_->tau() - 1e-10));
        return std::clamp(k, 1, g_->levels());
    }

    /// Ṽ: the natural-corner value of the containing cell, 0 outside D_Δ.
    double pwc(std::span<const double> x, double t) const {
        const auto p = corner_of(x);
        return p < 0 ? 0.0 : (*sv_)(cell_level(t), static_cast<std::size_t>(p));
    }

    /// Ṽⁱ: the forward difference along axis i at the natural corner of the containing cell.
    double pwc_diff(int axis, std::span<const double> x, double t) const {
        const auto p = corner_of(x);
        if (p < 0) return 0.0;
        const auto& v = sv_->slices[static_cast<std::size_t>(cell_level(t))];
        const auto f = static_cast<std::size_t>(p);
        return (v[f + g_->stride(axis)] - v[f]) / g_->h();
    }

    /// V^k(x): tensor-product multilinear interpolation inside the containing prism.
    double multilinear(int k, std::span<const double> x) const {
        std::vector<double> loc(static_cast<std::size_t>(g_->dim()));
        const auto p = g_->locate(x, loc);
        if (p < 0) return 0.0;
        return combine(sv_->slices[static_cast<std::size_t>(k)], static_cast<std::size_t>(p), loc);
    }

    /// ∇V^k(x) inside the containing prism (zero outside Ω_Δ).
    std::vector<double> multilinear_gradient(int k, std::span<const double> x) const {
        const int d = g_->dim();
        std::vector<double> loc(static_cast<std::size_t>(d)), grad(static_cast<std::size_t>(d), 0.0);
        const auto p = g_->locate(x, loc);
        if (p < 0) return grad;
        const auto& v = sv_->slices[static_cast<std::size_t>(k)];
        const auto& off = g_->vertex_offsets();
        for (std::size_t vert = 0; vert < off.size(); ++vert) {
            const double val = v[static_cast<std::size_t>(p) + off[vert]];
            for (int i = 0; i < d; ++i) {
                double w = ((vert >> i) & 1) ? 1.0 / g_->h() : -1.0 / g_->h();
                for (int j = 0; j < d; ++j)
                    if (j != i) w *= ((vert >> j) & 1) ? loc[j] : 1.0 - loc[j];
                grad[i] += w * val;
            }
        }
        return grad;
    }

    /// Multilinear weights w_{γ*}(x) of the prism containing x (empty outside Ω_Δ).
    std::vector<double> weights(std::span<const double> x) const {
        std::vector<double> loc(static_cast<std::size_t>(g_->dim()));
        if (g_->locate(x, loc) < 0) return {};
        return weights_local(loc);
    }

    /// V: V^k on (t_{k−1}, t_k], V^0 at t = 0.
    double pwconst_time(std::span<const double> x, double t) const {
        return t <= 0.0 ? multilinear(0, x) : multilinear(cell_level(t), x);
    }

    /// V': linear in time between V^{k−1} and V^k.
    double pwlinear_time(std::span<const double> x, double t) const {
        const int k = cell_level(t);
        const double t0 = g_->disc().time(k - 1);
        const double th = std::clamp((t - t0) / (g_->disc().time(k) - t0), 0.0, 1.0);
        const double a = multilinear(k - 1, x), b = multilinear(k, x);
        return a + (b - a) * th;
    }

    /// ∇V' at (x, t).
    std::vector<double> pwlinear_time_gradient(std::span<const double> x, double t) const {
        const int k = cell_level(t);
        const double t0 = g_->disc().time(k - 1);
        const double th = std::clamp((t - t0) / (g_->disc().time(k) - t0), 0.0, 1.0);
        auto a = multilinear_gradient(k - 1, x);
        const auto b = multilinear_gradient(k, x);
        for (std::size_t i = 0; i < a.size(); ++i) a[i] += (b[i] - a[i]) * th;
        return a;
    }

    /// ∂V'/∂t at (x, t): (V^k − V^{k−1}) / τ on the containing interval.
    double pwlinear_time_derivative(std::span<const double> x, double t) const {
        const int k = cell_level(t);
        return (multilinear(k, x) - multilinear(k - 1, x)) / (g_->disc().time(k) - g_->disc().time(k - 1));
    }

    std::vector<double> weights_local(std::span<const double> loc) const {
        const auto nv = g_->vertex_offsets().size();
        std::vector<double> w(nv, 1.0);
        for (std::size_t vert = 0; vert < nv; ++vert)
            for (int i = 0; i < g_->dim(); ++i) w[vert] *= ((vert >> i) & 1) ? loc[i] : 1.0 - loc[i];
        return w;
    }

    double combine(const LatticeField& v, std::size_t corner, std::span<const double> loc) const {
        const auto& off = g_->vertex_offsets();
        const auto w = weights_local(loc);
        double s = 0.0;
        for (std::size_t vert = 0; vert < off.size(); ++vert) s += w[vert] * v[corner + off[vert]];
        return s;
    }

private:
    std::ptrdiff_t corner_of(std::span<const double> x) const {
        std::size_t flat = 0;
        for (int i = 0; i < g_->dim(); ++i) {
            const double s = (x[i] - g_->domain().lower[i]) / g_->h();
            const double fl = std::floor(s + 1e-10);
            if (fl < 0.0 || fl > g_->extent()[i] - 2) return -1;
            flat += static_cast<std::size_t>(fl) * g_->stride(i);
        }
        return g_->is_prism(flat) ? static_cast<std::ptrdiff_t>(flat) : -1;
    }

    const StateVector* sv_;
    const Grid* g_;
};

struct DiscreteNorms {
    double linf = 0.0;         ///< max over levels 0..n and lattice points of |v|
    double time_diff = 0.0;    ///< Σ_k τ Σ_A h^d (v_t̄)²
    double max_spatial = 0.0;  ///< max_{1≤k≤n} Σ_A h^d Σ_i (v_{x_i})²
    double cross = 0.0;        ///< Σ_k τ² Σ_A h^d Σ_i (v_{x_i t̄})²
    double energy() const { return time_diff + max_spatial + cross; }
};

inline DiscreteNorms discrete_norms(const StateVector& sv) {
    const Grid& g = *sv.grid;
    const double h = g.h(), tau = g.tau(), hd = g.hd();
    DiscreteNorms n;
    for (int k = 0; k <= sv.levels(); ++k)
        for (auto p : g.lattice_all()) n.linf = std::max(n.linf, std::abs(sv(k, p)));
    for (int k = 1; k <= sv.levels(); ++k) {
        const auto& v = sv.slices[static_cast<std::size_t>(k)];
        const auto& w = sv.slices[static_cast<std::size_t>(k - 1)];
        double t = 0.0, s = 0.0, c = 0.0;
        for (auto p : g.prisms()) {
            const double vt = (v[p] - w[p]) / tau;
            t += vt * vt;
            for (int i = 0; i < g.dim(); ++i) {
                const auto nb = p + g.stride(i);
                const double vx = (v[nb] - v[p]) / h;
                const double wx = (w[nb] - w[p]) / h;
                const double vxt = (vx - wx) / tau;
                s += vx * vx;
                c += vxt * vxt;
            }
        }
        n.time_diff += tau * hd * t;
        n.max_spatial = std::max(n.max_spatial, hd * s);
        n.cross += tau * tau * hd * c;
    }
    return n;
}

/// Σ_A h^d (v_{x_i}(k))² for one axis.
inline double discrete_axis_energy(const StateVector& sv, int k, int axis) {
    const Grid& g = *sv.grid;
    const auto& v = sv.slices[static_cast<std::size_t>(k)];
    double s = 0.0;
    for (auto p : g.prisms()) {
        const double vx = (v[p + g.stride(axis)] - v[p]) / g.h();
        s += vx * vx;
    }
    return s * g.hd();
}

namespace detail {
/// Calls body(prism flat index, node weight, local coordinates) for a tensor Gauss
/// rule on every prism; weights include the prism volume.
template <class F>
void for_prism_nodes(const Grid& g, int order, F&& body) {
    const auto& rule = quad::gauss_legendre(order);
    const int d = g.dim();
    const std::size_t q = rule.size();
    std::size_t nodes = 1;
    for (int i = 0; i < d; ++i) nodes *= q;
    std::vector<std::vector<double>> locs(nodes, std::vector<double>(static_cast<std::size_t>(d)));
    std::vector<double> wts(nodes, g.hd());
    for (std::size_t n = 0; n < nodes; ++n) {
        std::size_t r = n;
        for (int i = 0; i < d; ++i) {
            const std::size_t j = r % q;
            r /= q;
            locs[n][i] = 0.5 * (rule.nodes[j] + 1.0);
            wts[n] *= 0.5 * rule.weights[j];
        }
    }
    for (auto p : g.prisms())
        for (std::size_t n = 0; n < nodes; ++n) body(p, wts[n], std::span<const double>(locs[n]));
}
}  // namespace detail

/// ∫_Ω |∂V^k/∂x_i|² (the integrand is polynomial per prism, integrated exactly).
inline double multilinear_axis_energy(const InterpolationBundle& b, int k, int axis) {
    const Grid& g = b.grid();
    const auto& v = b.state().slices[static_cast<std::size_t>(k)];
    const auto& off = g.vertex_offsets();
    double s = 0.0;
    detail::for_prism_nodes(g, 4, [&](std::size_t p, double w, std::span<const double> loc) {
        double dv = 0.0;
        for (std::size_t vert = 0; vert < off.size(); ++vert) {
            double c = ((vert >> axis) & 1) ? 1.0 / g.h() : -1.0 / g.h();
            for (int j = 0; j < g.dim(); ++j)
                if (j != axis) c *= ((vert >> j) & 1) ? loc[j] : 1.0 - loc[j];
            dv += c * v[p + off[vert]];
        }
        s += w * dv * dv;
    });
    return s;
}

struct GapNorms {
    double v_minus_vprime = 0.0;   ///< ‖V − V'‖_{L₂(D)}
    double slice_minus_pwc = 0.0;  ///< max_k ‖V^k − Ṽ(·, t_k)‖_{L₂(Ω)}
    double grad_gap = 0.0;         ///< ‖D_x V − D_x V'‖_{L₂(D)}
};

/// Gap norms by tensor Gauss-Legendre of order 4 per axis in space and time.
inline GapNorms l2_gap_norms(const InterpolationBundle& b) {
    const Grid& g = b.grid();
    const auto& sv = b.state();
    const int d = g.dim();
    const auto& off = g.vertex_offsets();
    const auto& trule = quad::gauss_legendre(4);
    double vv = 0.0, gg = 0.0, worst = 0.0;
    std::vector<double> dgrad(static_cast<std::size_t>(d));
    for (int k = 1; k <= sv.levels(); ++k) {
        const auto& v = sv.slices[static_cast<std::size_t>(k)];
        const auto& w = sv.slices[static_cast<std::size_t>(k - 1)];
        const double dt = g.disc().time(k) - g.disc().time(k - 1);
        // V − V' = (1 − θ)(V^k − V^{k−1}) on the level; the θ integral uses the time rule.
        double theta2 = 0.0;
        for (std::size_t j = 0; j < trule.size(); ++j) {
            const double th = 0.5 * (trule.nodes[j] + 1.0);
            theta2 += 0.5 * trule.weights[j] * (1.0 - th) * (1.0 - th);
        }
        double slice = 0.0;
        detail::for_prism_nodes(g, 4, [&](std::size_t p, double wt, std::span<const double> loc) {
            double diff = 0.0, vk = 0.0;
            std::fill(dgrad.begin(), dgrad.end(), 0.0);
            for (std::size_t vert = 0; vert < off.size(); ++vert) {
                double wl = 1.0;
                for (int i = 0; i < d; ++i) wl *= ((vert >> i) & 1) ? loc[i] : 1.0 - loc[i];
                const double dv = v[p + off[vert]] - w[p + off[vert]];
                diff += wl * dv;
                vk += wl * v[p + off[vert]];
                for (int i = 0; i < d; ++i) {
                    double c = ((vert >> i) & 1) ? 1.0 / g.h() : -1.0 / g.h();
                    for (int j = 0; j < d; ++j)
                        if (j != i) c *= ((vert >> j) & 1) ? loc[j] : 1.0 - loc[j];
                    dgrad[i] += c * dv;
                }
            }
            vv += dt * theta2 * wt * diff * diff;
            double g2 = 0.0;
            for (double x : dgrad) g2 += x * x;
            gg += dt * theta2 * wt * g2;
            const double e = vk - v[p];
            slice += wt * e * e;
        });
        worst = std::max(worst, slice);
    }
    return {std::sqrt(vv), std::sqrt(worst), std::sqrt(gg)};
}

/// ⟨Ṽⁱ − ∂V/∂x_i, s⟩_{L₂(D)} for a user-supplied test function s(x, t).
inline double derivative_step_pairing(const InterpolationBundle& b, int axis, const SpaceTimeFunction& s) {
    const Grid& g = b.grid();
    const auto& sv = b.state();
    const auto& trule = quad::gauss_legendre(4);
    std::vector<double> x(static_cast<std::size_t>(g.dim()));
    double total = 0.0;
    for (int k = 1; k <= sv.levels(); ++k) {
        const auto& v = sv.slices[static_cast<std::size_t>(k)];
        const double t0 = g.disc().time(k - 1), dt = g.disc().time(k) - t0;
        detail::for_prism_nodes(g, 4, [&](std::size_t p, double wt, std::span<const double> loc) {
            for (int i = 0; i < g.dim(); ++i) x[i] = g.coord(p, i) + loc[i] * g.h();
            const double step = (v[p + g.stride(axis)] - v[p]) / g.h();
            const double dvx = b.multilinear_gradient(k, x)[axis];
            for (std::size_t j = 0; j < trule.size(); ++j) {
                const double t = t0 + 0.5 * (trule.nodes[j] + 1.0) * dt;
                total += wt * 0.5 * trule.weights[j] * dt * (step - dvx) * s(x, t);
            }
        });
    }
    return total;
}

/// Points where V^k crosses `value` along lattice edges of qualifying prisms,
/// in edge order (flat index, then axis). Vertices equal to the value are reported once.
inline std::vector<std::vector<double>> extract_free_boundary(const InterpolationBundle& b, double value, int k) {
    const Grid& g = b.grid();
    const int d = g.dim();
    const auto& v = b.state().slices[static_cast<std::size_t>(k)];
    std::vector<std::vector<double>> pts;
    auto edge_in_prism = [&](std::size_t p, int axis) {
        // The edge (p, p + e_axis) lies in a prism with corner p − Σ_{j∈S} e_j, S ⊆ other axes.
        for (std::size_t sset = 0; sset < (std::size_t{1} << d); ++sset) {
            if ((sset >> axis) & 1) continue;
            std::size_t c = p;
            bool ok = true;
            for (int j = 0; j < d && ok; ++j) {
                if (!((sset >> j) & 1)) continue;
                if (g.index_along(p, j) == 0) ok = false;
                else c -= g.stride(j);
            }
            if (ok && g.is_prism(c)) return true;
        }
        return false;
    };
    for (auto p : g.lattice_all()) {
        const double a = v[p] - value;
        if (a == 0.0) pts.push_back(g.coords(p));
        for (int axis = 0; axis < d; ++axis) {
            const auto nb = g.neighbor(p, axis, +1);
            if (nb < 0 || !g.in_lattice(static_cast<std::size_t>(nb)) || !edge_in_prism(p, axis)) continue;
            const double c = v[static_cast<std::size_t>(nb)] - value;
            if (a == 0.0 || c == 0.0 || (a < 0.0) == (c < 0.0)) continue;
            auto x = g.coords(p);
            x[axis] += g.h() * a / (a - c);
            pts.push_back(std::move(x));
        }
    }
    return pts;
}

inline std::vector<std::vector<double>> extract_free_boundary(const InterpolationBundle& b,
                                                              const MollifiedEnthalpy& me, int j, int k) {
    return extract_free_boundary(b, me.base().v_js().at(static_cast<std::size_t>(j)), k);
}

/// Sampled V' CSV (version 1): header `t,x0..x{d-1},value`; `counts[i]` equally
/// spaced samples per axis over the domain bounding box at each requested time.
inline void write_sampled_field_csv(std::ostream& os, const InterpolationBundle& b, const std::vector<int>& counts,
                                    const std::vector<double>& times) {
    const Grid& g = b.grid();
    const int d = g.dim();
    os << "t";
    for (int i = 0; i < d; ++i) os << ",x" << i;
    os << ",value\n";
    std::vector<double> x(static_cast<std::size_t>(d));
    for (double t : times) {
        std::vector<int> idx(static_cast<std::size_t>(d), 0);
        while (true) {
            for (int i = 0; i < d; ++i) {
                const int c = std::max(counts[i], 2);
                x[i] = g.domain().lower[i] + (g.domain().upper[i] - g.domain().lower[i]) * idx[i] / (c - 1);
            }
            os << format_real(t);
            for (double xi : x) os << ',' << format_real(xi);
            os << ',' << format_real(b.pwlinear_time(x, t)) << '\n';
            int i = 0;
            while (i < d && ++idx[i] == std::max(counts[i], 2)) idx[i++] = 0;
            if (i == d) break;
        }
    }
}

/// Free-boundary CSV (version 1): header `phase,k,t,x0..x{d-1}`.
inline void write_free_boundary_csv(std::ostream& os, const InterpolationBundle& b, const MollifiedEnthalpy& me) {
    const Grid& g = b.grid();
    os << "phase,k,t";
    for (int i = 0; i < g.dim(); ++i) os << ",x" << i;
    os << '\n';
    for (std::size_t j = 0; j < me.base().v_js().size(); ++j)
        for (int k = 0; k <= b.state().levels(); ++k)
            for (const auto& x : extract_free_boundary(b, me, static_cast<int>(j), k)) {
                os << j << ',' << k << ',' << format_real(g.disc().time(k));
                for (double xi : x) os << ',' << format_real(xi);
                os << '\n';
            }
}

}  // namespace stefan
