#pragma once

/// Space-time lattice: domain description, the discretization (tau, h), prism
/// (spatial cell) selection and interior/boundary classification of lattice points.
///
/// Points live on a dense bounding lattice anchored at the lower corner of the
/// domain's bounding box and are addressed by flat indices; integer multi-indices
/// are recovered on demand and coordinates are always derived from them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace stefan {

class InvalidDiscretization : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class DegenerateGrid : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class OutOfLattice : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

/// Spatial domain: an axis-aligned box, or an indicator predicate on a bounding box.
struct Domain {
    enum class Kind { box, indicator };
    using Predicate = std::function<bool(std::span<const double>)>;

    Kind kind = Kind::box;
    std::vector<double> lower;
    std::vector<double> upper;
    Predicate inside;  ///< closure membership test; used only for indicator domains

    static Domain box(std::vector<double> lo, std::vector<double> hi) {
        Domain d{Kind::box, std::move(lo), std::move(hi), {}};
        d.validate();
        return d;
    }
    static Domain indicator(std::vector<double> lo, std::vector<double> hi, Predicate p) {
        Domain d{Kind::indicator, std::move(lo), std::move(hi), std::move(p)};
        d.validate();
        return d;
    }

    int dim() const { return static_cast<int>(lower.size()); }

    void validate() const {
        if (lower.empty() || lower.size() != upper.size())
            throw std::invalid_argument("domain needs matching non-empty lower/upper bounds");
        for (std::size_t i = 0; i < lower.size(); ++i)
            if (!(lower[i] < upper[i])) throw std::invalid_argument("domain axis " + std::to_string(i) + ": lower >= upper");
        if (kind == Kind::indicator && !inside) throw std::invalid_argument("indicator domain without predicate");
    }

    /// Membership in the closure of the domain.
    bool contains(std::span<const double> x) const {
        for (std::size_t i = 0; i < lower.size(); ++i) {
            const double tol = 1e-12 * (upper[i] - lower[i]);
            if (x[i] < lower[i] - tol || x[i] > upper[i] + tol) return false;
        }
        return kind == Kind::box || inside(x);
    }
};

/// Uniform space-time steps with n = T / tau time levels.
struct Discretization {
    double tau = 0.0;
    double h = 0.0;
    double T = 0.0;
    int n = 0;

    /// Rejects tau that does not divide T into an integer number of levels.
    static Discretization make(double tau, double h, double T) {
        if (!(tau > 0.0) || !(h > 0.0) || !(T > 0.0))
            throw InvalidDiscretization("tau, h and T must be positive");
        const double ratio = T / tau;
        const double n = std::round(ratio);
        if (n < 1.0 || std::abs(ratio - n) > 1e-9 * std::max(1.0, n))
            throw InvalidDiscretization("T/tau = " + std::to_string(ratio) + " is not an integer");
        return {tau, h, T, static_cast<int>(n)};
    }

    double time(int k) const { return k == n ? T : tau * k; }

    /// Partial order: this <= other iff both steps are no larger.
    bool finer_or_equal(const Discretization& other) const { return tau <= other.tau && h <= other.h; }
};

class Grid {
public:
    Grid(Domain domain, Discretization disc) : domain_(std::move(domain)), disc_(disc) {
        domain_.validate();
        d_ = domain_.dim();
        const double h = disc_.h;
        extent_.resize(static_cast<std::size_t>(d_));
        stride_.resize(static_cast<std::size_t>(d_));
        std::size_t total = 1;
        for (int i = 0; i < d_; ++i) {
            const double len = domain_.upper[i] - domain_.lower[i];
            const auto cells = static_cast<long long>(std::floor(len / h + 1e-9));
            if (cells < 1) throw DegenerateGrid("h exceeds the domain extent on axis " + std::to_string(i));
            extent_[i] = static_cast<int>(cells + 1);
            stride_[i] = total;
            total *= static_cast<std::size_t>(extent_[i]);
        }
        size_ = total;
        classify();
    }

    const Domain& domain() const { return domain_; }
    const Discretization& disc() const { return disc_; }
    int dim() const { return d_; }
    double h() const { return disc_.h; }
    double tau() const { return disc_.tau; }
    int levels() const { return disc_.n; }
    double hd() const { return std::pow(disc_.h, d_); }

    /// Number of points of the bounding lattice (flat index range).
    std::size_t size() const { return size_; }
    const std::vector<int>& extent() const { return extent_; }
    std::size_t stride(int axis) const { return stride_[static_cast<std::size_t>(axis)]; }

    std::vector<int> multi_index(std::size_t flat) const {
        std::vector<int> m(static_cast<std::size_t>(d_));
        for (int i = d_ - 1; i >= 0; --i) {
            m[i] = static_cast<int>(flat / stride_[i]);
            flat %= stride_[i];
        }
        return m;
    }
    int index_along(std::size_t flat, int axis) const {
        return static_cast<int>((flat / stride_[axis]) % static_cast<std::size_t>(extent_[axis]));
    }
    std::size_t flat_index(std::span<const int> m) const {
        std::size_t f = 0;
        for (int i = 0; i < d_; ++i) {
            if (m[i] < 0 || m[i] >= extent_[i]) throw OutOfLattice("multi-index outside the bounding lattice");
            f += static_cast<std::size_t>(m[i]) * stride_[i];
        }
        return f;
    }
    double coord(std::size_t flat, int axis) const {
        return domain_.lower[axis] + index_along(flat, axis) * disc_.h;
    }
    std::vector<double> coords(std::size_t flat) const {
        std::vector<double> x(static_cast<std::size_t>(d_));
        for (int i = 0; i < d_; ++i) x[i] = coord(flat, i);
        return x;
    }

    /// Flat index of flat ± e_axis, or -1 when it leaves the bounding lattice.
    std::ptrdiff_t neighbor(std::size_t flat, int axis, int dir) const {
        const int m = index_along(flat, axis) + dir;
        if (m < 0 || m >= extent_[axis]) return -1;
        return static_cast<std::ptrdiff_t>(flat) + dir * static_cast<std::ptrdiff_t>(stride_[axis]);
    }

    bool in_lattice(std::size_t flat) const { return flags_[flat] & kLattice; }
    bool is_interior(std::size_t flat) const { return flags_[flat] & kInterior; }
    bool is_boundary(std::size_t flat) const { return in_lattice(flat) && !is_interior(flat); }
    bool is_prism(std::size_t flat) const { return flags_[flat] & kPrism; }

    /// Natural corners of the qualifying prisms (the index set A), ascending flat order.
    const std::vector<std::size_t>& prisms() const { return prisms_; }
    const std::vector<std::size_t>& lattice_all() const { return all_; }
    const std::vector<std::size_t>& interior() const { return interior_; }
    const std::vector<std::size_t>& boundary() const { return boundary_; }

    /// Position of flat in prisms(), or -1 if it is not a natural corner.
    std::ptrdiff_t prism_position(std::size_t flat) const { return prism_pos_[flat]; }

    /// Offsets from a natural corner to the 2^d prism vertices; bit i of the
    /// vertex number selects +e_i.
    const std::vector<std::size_t>& vertex_offsets() const { return vertex_offsets_; }

    /// Number of space-time cells, |A| · n.
    std::size_t cell_count() const { return prisms_.size() * static_cast<std::size_t>(disc_.n); }

    /// Locates the prism containing x (lower-closed, upper-open). Points on the
    /// upper face of the lattice fall back to the adjacent lower prism.
    /// Returns -1 when x is not in a qualifying prism; fills local coordinates in [0,1].
    std::ptrdiff_t locate(std::span<const double> x, std::span<double> local) const {
        std::size_t flat = 0;
        for (int i = 0; i < d_; ++i) {
            const double s = (x[i] - domain_.lower[i]) / disc_.h;
            double fl = std::floor(s + 1e-10);
            if (fl < 0.0) {
                if (s < -1e-10) return -1;
                fl = 0.0;
            }
            if (fl > extent_[i] - 2) {
                if (s > extent_[i] - 1 + 1e-10) return -1;
                fl = extent_[i] - 2;
            }
            local[i] = std::clamp(s - fl, 0.0, 1.0);
            flat += static_cast<std::size_t>(fl) * stride_[i];
        }
        if (is_prism(flat)) return static_cast<std::ptrdiff_t>(flat);
        // On a face shared with a non-qualifying prism: try the lower neighbours.
        for (std::size_t v = 1; v < (std::size_t{1} << d_); ++v) {
            std::size_t f = flat;
            bool ok = true;
            std::vector<double> loc(local.begin(), local.end());
            for (int i = 0; i < d_ && ok; ++i) {
                if (!(v >> i & 1)) continue;
                if (local[i] > 1e-10 || index_along(flat, i) == 0) ok = false;
                else {
                    f -= stride_[i];
                    loc[i] = 1.0;
                }
            }
            if (ok && is_prism(f)) {
                std::copy(loc.begin(), loc.end(), local.begin());
                return static_cast<std::ptrdiff_t>(f);
            }
        }
        return -1;
    }

private:
    static constexpr std::uint8_t kLattice = 1, kInterior = 2, kPrism = 4;

    void classify() {
        flags_.assign(size_, 0);
        prism_pos_.assign(size_, -1);
        const std::size_t nv = std::size_t{1} << d_;
        vertex_offsets_.resize(nv);
        for (std::size_t v = 0; v < nv; ++v) {
            std::size_t off = 0;
            for (int i = 0; i < d_; ++i)
                if (v >> i & 1) off += stride_[i];
            vertex_offsets_[v] = off;
        }
        std::vector<double> x(static_cast<std::size_t>(d_));
        for (std::size_t f = 0; f < size_; ++f) {
            bool corner = true;
            for (int i = 0; i < d_; ++i)
                if (index_along(f, i) >= extent_[i] - 1) corner = false;
            if (!corner) continue;
            bool ok = true;
            for (std::size_t v = 0; v < nv && ok; ++v) {
                for (int i = 0; i < d_; ++i) x[i] = coord(f, i) + ((v >> i & 1) ? disc_.h : 0.0);
                ok = domain_.contains(x);
            }
            if (ok && domain_.kind == Domain::Kind::indicator) {
                for (int i = 0; i < d_; ++i) x[i] = coord(f, i) + 0.5 * disc_.h;
                ok = domain_.contains(x);
            }
            if (!ok) continue;
            flags_[f] |= kPrism;
            for (std::size_t v = 0; v < nv; ++v) flags_[f + vertex_offsets_[v]] |= kLattice;
        }
        for (std::size_t f = 0; f < size_; ++f) {
            if (flags_[f] & kPrism) {
                prism_pos_[f] = static_cast<std::ptrdiff_t>(prisms_.size());
                prisms_.push_back(f);
            }
            if (!(flags_[f] & kLattice)) continue;
            all_.push_back(f);
            // Interior iff every one of the 2^d prisms incident to the point qualifies.
            bool interior = true;
            for (std::size_t v = 0; v < nv && interior; ++v) {
                for (int i = 0; i < d_ && interior; ++i)
                    if ((v >> i & 1) && index_along(f, i) == 0) interior = false;
                if (interior && !(flags_[f - vertex_offsets_[v]] & kPrism)) interior = false;
            }
            if (interior) {
                flags_[f] |= kInterior;
                interior_.push_back(f);
            } else {
                boundary_.push_back(f);
            }
        }
        if (prisms_.empty()) throw DegenerateGrid("no prism lies inside the domain");
        if (interior_.empty()) throw DegenerateGrid("grid has no interior lattice points");
    }

    Domain domain_;
    Discretization disc_;
    int d_ = 0;
    std::vector<int> extent_;
    std::vector<std::size_t> stride_;
    std::size_t size_ = 0;
    std::vector<std::uint8_t> flags_;
    std::vector<std::ptrdiff_t> prism_pos_;
    std::vector<std::size_t> prisms_, all_, interior_, boundary_;
    std::vector<std::size_t> vertex_offsets_;
};

using GridPtr = std::shared_ptr<const Grid>;

/// Builds an immutable grid; throws InvalidDiscretization or DegenerateGrid.
inline GridPtr build_grid(Domain domain, Discretization disc) {
    return std::make_shared<const Grid>(std::move(domain), disc);
}

/// One real per bounding-lattice point at time level `level`; zero off the lattice.
struct LatticeField {
    GridPtr grid;
    int level = 0;
    std::vector<double> values;

    LatticeField() = default;
    LatticeField(GridPtr g, int k) : grid(std::move(g)), level(k), values(grid->size(), 0.0) {}

    double operator[](std::size_t flat) const { return values[flat]; }
    double& operator[](std::size_t flat) { return values[flat]; }
};

/// (v(γ+e_i) − v(γ)) / h.
inline double forward_diff(const LatticeField& field, std::size_t flat, int axis) {
    const Grid& g = *field.grid;
    const auto nb = g.neighbor(flat, axis, +1);
    if (!g.in_lattice(flat) || nb < 0 || !g.in_lattice(static_cast<std::size_t>(nb)))
        throw OutOfLattice("forward difference leaves the lattice");
    return (field[static_cast<std::size_t>(nb)] - field[flat]) / g.h();
}

/// Σ_i (v(γ+e_i) − 2v(γ) + v(γ−e_i)) / h² at an interior point.
inline double discrete_laplacian(const LatticeField& field, std::size_t flat) {
    const Grid& g = *field.grid;
    if (!g.is_interior(flat)) throw std::invalid_argument("discrete Laplacian needs an interior lattice point");
    double s = 0.0;
    for (int i = 0; i < g.dim(); ++i) {
        const std::size_t st = g.stride(i);
        s += field[flat + st] - 2.0 * field[flat] + field[flat - st];
    }
    return s / (g.h() * g.h());
}

}  // namespace stefan
