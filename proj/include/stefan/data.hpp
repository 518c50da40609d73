#pragma once

/// Continuous data (Φ, Γ, f), their Steklov averages on a grid, discrete controls
/// [f]_Δ with the maps Q_Δ (cell averaging) and P_Δ (cell-constant extension),
/// box projection, and the control CSV layout.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "grid.hpp"
#include "quadrature.hpp"

namespace stefan {

using SpaceFunction = std::function<double(std::span<const double>)>;
using SpaceTimeFunction = std::function<double(std::span<const double>, double)>;
using GradientFunction = std::function<void(std::span<const double>, std::span<double>)>;

/// Values indexed by prism position (the order of Grid::prisms()).
using PrismValues = std::vector<double>;

struct ContinuousData {
    SpaceFunction phi;          ///< initial datum in the transformed variable
    GradientFunction phi_grad;  ///< optional; central differences are used when empty
    SpaceFunction gamma;        ///< final-time measurement in the transformed variable
    SpaceTimeFunction f;        ///< source
    double R = 1.0;             ///< control bound
};

/// Box-domain extension of a function by its value at the nearest point of the box.
inline SpaceFunction nearest_face_extension(const Domain& dom, SpaceFunction fn) {
    return [dom, fn = std::move(fn)](std::span<const double> x) {
        std::vector<double> y(x.begin(), x.end());
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::clamp(y[i], dom.lower[i], dom.upper[i]);
        return fn(y);
    };
}

/// h^{-d} ∫ over the prism with natural corner γ, for every γ in A, by tensor
/// Gauss-Legendre of the given order.
inline PrismValues steklov_average(const Grid& g, const SpaceFunction& fn, int order = 8) {
    if (!fn) throw std::invalid_argument("Steklov average of an empty function");
    const auto& rule = quad::gauss_legendre(order);
    const std::vector<double> width(static_cast<std::size_t>(g.dim()), g.h());
    PrismValues out;
    out.reserve(g.prisms().size());
    for (auto p : g.prisms()) {
        const auto lo = g.coords(p);
        out.push_back(quad::average_box(fn, lo, width, rule));
    }
    return out;
}

inline PrismValues steklov_phi(const ContinuousData& data, const Grid& g, int order = 8) {
    return steklov_average(g, data.phi, order);
}
inline PrismValues steklov_gamma(const ContinuousData& data, const Grid& g, int order = 8) {
    return steklov_average(g, data.gamma, order);
}

/// The collection [f]_Δ: one value per space-time cell (γ, k), γ ∈ A, k = 1..n.
struct DiscreteControl {
    GridPtr grid;
    std::vector<double> values;  ///< index (k−1)·|A| + prism position

    DiscreteControl() = default;
    explicit DiscreteControl(GridPtr g, double fill = 0.0) : grid(std::move(g)), values(grid->cell_count(), fill) {}

    std::size_t cells() const { return values.size(); }
    std::size_t index(int k, std::size_t prism_pos) const {
        return static_cast<std::size_t>(k - 1) * grid->prisms().size() + prism_pos;
    }
    double at(int k, std::size_t prism_pos) const { return values[index(k, prism_pos)]; }
    double& at(int k, std::size_t prism_pos) { return values[index(k, prism_pos)]; }
    std::span<const double> level(int k) const {
        return std::span<const double>(values).subspan(index(k, 0), grid->prisms().size());
    }

    double linf() const {
        double m = 0.0;
        for (double v : values) m = std::max(m, std::abs(v));
        return m;
    }
    /// ‖[f]‖²_{ℓ₂} = Σ τ h^d f_α², which equals ‖P_Δ[f]‖²_{L₂(D)}.
    double l2_squared() const {
        double s = 0.0;
        for (double v : values) s += v * v;
        return s * grid->tau() * grid->hd();
    }
    double l2() const { return std::sqrt(l2_squared()); }
};

/// Q_Δ(f): (τh^d)^{-1} ∫ over each cell C^(γ,k) = prism × [t_{k−1}, t_k].
inline DiscreteControl Q_map(const SpaceTimeFunction& f, GridPtr grid, int order = 8) {
    if (!f) throw std::invalid_argument("Q map of an empty function");
    const Grid& g = *grid;
    const auto& rule = quad::gauss_legendre(order);
    const int d = g.dim();
    DiscreteControl c(grid);
    std::vector<double> lo(static_cast<std::size_t>(d + 1)), width(static_cast<std::size_t>(d + 1), g.h());
    width[d] = g.tau();
    std::vector<double> x(static_cast<std::size_t>(d));
    auto integrand = [&](const std::vector<double>& y) {
        std::copy(y.begin(), y.begin() + d, x.begin());
        return f(x, y[d]);
    };
    for (int k = 1; k <= g.levels(); ++k) {
        for (std::size_t p = 0; p < g.prisms().size(); ++p) {
            for (int i = 0; i < d; ++i) lo[i] = g.coord(g.prisms()[p], i);
            lo[d] = g.disc().time(k - 1);
            width[d] = g.disc().time(k) - lo[d];
            c.at(k, p) = quad::average_box(integrand, lo, width, rule);
        }
    }
    return c;
}

/// P_Δ([f]): the cell-constant function, zero outside D_Δ. A point belongs to the
/// cell whose spatial box contains it lower-closed/upper-open and whose time
/// interval (t_{k−1}, t_k] contains t (t = 0 belongs to the first level).
class PiecewiseConstantControl {
public:
    explicit PiecewiseConstantControl(DiscreteControl c) : c_(std::move(c)) {}

    double operator()(std::span<const double> x, double t) const {
        const Grid& g = *c_.grid;
        if (t < 0.0 || t > g.disc().T * (1 + 1e-12)) return 0.0;
        int k = static_cast<int>(std::ceil(t / g.tau() - 1e-10));
        k = std::clamp(k, 1, g.levels());
        const auto p = locate_lower_closed(g, x);
        if (p < 0) return 0.0;
        return c_.at(k, static_cast<std::size_t>(g.prism_position(static_cast<std::size_t>(p))));
    }

    const DiscreteControl& control() const { return c_; }

private:
    static std::ptrdiff_t locate_lower_closed(const Grid& g, std::span<const double> x) {
        std::size_t flat = 0;
        for (int i = 0; i < g.dim(); ++i) {
            const double s = (x[i] - g.domain().lower[i]) / g.h();
            const double fl = std::floor(s + 1e-10);
            if (fl < 0.0 || fl > g.extent()[i] - 2) return -1;
            flat += static_cast<std::size_t>(fl) * g.stride(i);
        }
        return g.is_prism(flat) ? static_cast<std::ptrdiff_t>(flat) : -1;
    }

    DiscreteControl c_;
};

inline PiecewiseConstantControl P_map(const DiscreteControl& c) { return PiecewiseConstantControl(c); }

/// Clamps every value into [−R, R].
inline DiscreteControl project_control(DiscreteControl c, double R) {
    if (!(R > 0.0)) throw std::invalid_argument("control bound must be positive");
    for (double& v : c.values) v = std::clamp(v, -R, R);
    return c;
}

inline std::string format_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Control CSV (version 1): header `k,g0,..,g{d-1},value`, one row per cell in
/// level-major, prism-ascending order; g_i are integer lattice indices from the
/// lower corner of the domain bounding box.
inline void write_control_csv(std::ostream& os, const DiscreteControl& c) {
    const Grid& g = *c.grid;
    os << "k";
    for (int i = 0; i < g.dim(); ++i) os << ",g" << i;
    os << ",value\n";
    for (int k = 1; k <= g.levels(); ++k)
        for (std::size_t p = 0; p < g.prisms().size(); ++p) {
            os << k;
            for (int m : g.multi_index(g.prisms()[p])) os << ',' << m;
            os << ',' << format_real(c.at(k, p)) << '\n';
        }
}

inline DiscreteControl read_control_csv(std::istream& is, GridPtr grid) {
    const Grid& g = *grid;
    DiscreteControl c(grid);
    std::vector<bool> seen(c.cells(), false);
    std::string line;
    if (!std::getline(is, line) || line.rfind("k,", 0) != 0) throw std::runtime_error("control CSV: missing header");
    std::size_t row = 1;
    while (std::getline(is, line)) {
        ++row;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> parts;
        while (std::getline(ss, cell, ',')) parts.push_back(cell);
        if (parts.size() != static_cast<std::size_t>(g.dim() + 2))
            throw std::runtime_error("control CSV row " + std::to_string(row) + ": wrong column count");
        const int k = std::stoi(parts[0]);
        std::vector<int> m(static_cast<std::size_t>(g.dim()));
        for (int i = 0; i < g.dim(); ++i) m[i] = std::stoi(parts[i + 1]);
        const auto pos = g.prism_position(g.flat_index(m));
        if (k < 1 || k > g.levels() || pos < 0)
            throw std::runtime_error("control CSV row " + std::to_string(row) + ": not a cell of this grid");
        const auto idx = c.index(k, static_cast<std::size_t>(pos));
        c.values[idx] = std::stod(parts.back());
        seen[idx] = true;
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end())
        throw std::runtime_error("control CSV does not cover every cell");
    return c;
}

/// ‖Φ‖²_{W₂¹(Ω)} = ∫_Ω Φ² + |∇Φ|² by tensor Gauss-Legendre over the prisms of a
/// grid; box domains are covered in full, indicator domains through their prisms. Gradients fall back to central differences.
inline double w21_norm_squared(const Grid& g, const SpaceFunction& phi, const GradientFunction& grad = {},
                               int order = 8) {
    const int d = g.dim();
    const auto& rule = quad::gauss_legendre(order);
    const std::vector<double> width(static_cast<std::size_t>(d), g.h());
    std::vector<double> gr(static_cast<std::size_t>(d)), y(static_cast<std::size_t>(d));
    auto integrand = [&](const std::vector<double>& x) {
        const double v = phi(x);
        double s = v * v;
        if (grad) {
            grad(x, gr);
        } else {
            for (int i = 0; i < d; ++i) {
                const double e = 1e-5 * std::max(1.0, std::abs(x[i]));
                y = x;
                y[i] = x[i] + e;
                const double fp = phi(y);
                y[i] = x[i] - e;
                gr[i] = (fp - phi(y)) / (2 * e);
            }
        }
        for (int i = 0; i < d; ++i) s += gr[i] * gr[i];
        return s;
    };
    double total = 0.0;
    if (g.domain().kind == Domain::Kind::box) {
        // Equal panels spanning the whole box, so a strip not covered by prisms is still counted.
        std::vector<double> pw(static_cast<std::size_t>(d)), lo(static_cast<std::size_t>(d));
        std::vector<int> cnt(static_cast<std::size_t>(d)), idx(static_cast<std::size_t>(d), 0);
        for (int i = 0; i < d; ++i) {
            cnt[i] = g.extent()[i] - 1;
            pw[i] = (g.domain().upper[i] - g.domain().lower[i]) / cnt[i];
        }
        while (true) {
            for (int i = 0; i < d; ++i) lo[i] = g.domain().lower[i] + idx[i] * pw[i];
            total += quad::integrate_box(integrand, lo, pw, rule);
            int i = 0;
            while (i < d && ++idx[i] == cnt[i]) idx[i++] = 0;
            if (i == d) break;
        }
        return total;
    }
    for (auto p : g.prisms()) total += quad::integrate_box(integrand, g.coords(p), width, rule);
    return total;
}

}  // namespace stefan
