#pragma once

/// Phase coefficients, the Kirchhoff transform F(u) = ∫₀ᵘ k, the enthalpy curve
/// b(v) in the transformed variable, and its mollification b_n = b ∗ ω_ρ.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "quadrature.hpp"
#include "roots.hpp"

namespace stefan {

class InvalidCoefficients : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class InvalidMollification : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A smooth function of temperature on one phase interval: a polynomial
/// (constant and linear are special cases) or an arbitrary callable.
class Piece {
public:
    static Piece constant(double c) { return polynomial({c}); }
    static Piece linear(double c0, double c1) { return polynomial({c0, c1}); }
    static Piece polynomial(std::vector<double> coeffs) {
        if (coeffs.empty()) coeffs.push_back(0.0);
        while (coeffs.size() > 1 && coeffs.back() == 0.0) coeffs.pop_back();
        Piece p;
        p.coeffs_ = std::move(coeffs);
        return p;
    }
    static Piece function(std::function<double(double)> fn, std::string label = "expression") {
        Piece p;
        p.fn_ = std::move(fn);
        p.label_ = std::move(label);
        return p;
    }

    double operator()(double u) const {
        if (fn_) return fn_(u);
        double s = 0.0;
        for (std::size_t i = coeffs_.size(); i-- > 0;) s = s * u + coeffs_[i];
        return s;
    }

    /// ∫_a^b of the piece; closed form for polynomials.
    double integral(double a, double b) const {
        if (a == b) return 0.0;
        if (fn_) return quad::integrate_adaptive(fn_, a, b);
        auto prim = [&](double u) {
            double s = 0.0;
            for (std::size_t i = coeffs_.size(); i-- > 0;) s = s * u + coeffs_[i] / static_cast<double>(i + 1);
            return s * u;
        };
        return prim(b) - prim(a);
    }

    bool is_polynomial() const { return !fn_; }
    bool is_constant() const { return !fn_ && coeffs_.size() == 1; }
    const std::vector<double>& coefficients() const { return coeffs_; }
    const std::string& label() const { return label_; }

private:
    std::vector<double> coeffs_;
    std::function<double(double)> fn_;
    std::string label_ = "polynomial";
};

/// Material data of the multiphase problem. Interval i of the temperature axis is
/// (−∞,u¹) for i = 0, [uⁱ,uⁱ⁺¹) in between and [u^J,∞) for i = J; alpha[i] and k[i]
/// are the coefficients on interval i.
struct PhaseCoefficients {
    std::vector<double> u_js;    ///< phase temperatures, strictly increasing
    std::vector<double> b_js;    ///< latent heats, positive
    std::vector<Piece> alpha;    ///< J+1 pieces
    std::vector<Piece> k;        ///< J+1 pieces
    double a0_bound = 1.0;       ///< lower bound of liminf α/k at ±∞
    std::optional<double> beta_lower_bound;  ///< uniform lower bound of α/k; required for non-constant pieces

    int J() const { return static_cast<int>(u_js.size()); }

    int interval_of(double u) const {
        return static_cast<int>(std::upper_bound(u_js.begin(), u_js.end(), u) - u_js.begin());
    }

    /// Sampling window used for positivity checks.
    std::pair<double, double> sample_window() const {
        if (u_js.empty()) return {-10.0, 10.0};
        const double span = std::max(1.0, u_js.back() - u_js.front());
        return {u_js.front() - 10.0 * span, u_js.back() + 10.0 * span};
    }

    void validate() const {
        if (b_js.size() != u_js.size()) throw InvalidCoefficients("need one latent heat per phase temperature");
        for (std::size_t j = 1; j < u_js.size(); ++j)
            if (!(u_js[j - 1] < u_js[j])) throw InvalidCoefficients("phase temperatures must increase strictly");
        for (double b : b_js)
            if (!(b > 0.0)) throw InvalidCoefficients("latent heats must be positive");
        if (alpha.size() != u_js.size() + 1 || k.size() != u_js.size() + 1)
            throw InvalidCoefficients("need J+1 pieces for alpha and k");
        if (!(a0_bound > 0.0)) throw InvalidCoefficients("a0 bound must be positive");
        if (beta_lower_bound && !(*beta_lower_bound > 0.0))
            throw InvalidCoefficients("beta lower bound must be positive");
        const auto [lo, hi] = sample_window();
        for (int i = 0; i <= J(); ++i) {
            const double a = i == 0 ? lo : u_js[i - 1];
            const double b = i == J() ? hi : u_js[i];
            for (int s = 0; s <= 400; ++s) {
                const double u = a + (b - a) * s / 400.0;
                const double av = alpha[i](u), kv = k[i](u);
                if (!(av > 0.0) || !(kv > 0.0) || !std::isfinite(av) || !std::isfinite(kv))
                    throw InvalidCoefficients("alpha and k must be positive; violated on interval " +
                                              std::to_string(i) + " at u = " + std::to_string(u));
            }
        }
    }
};

/// Kirchhoff transform F(u) = ∫₀ᵘ k with cached values at the phase temperatures.
class Kirchhoff {
public:
    explicit Kirchhoff(const PhaseCoefficients& pc) : pc_(&pc) {
        for (double u : pc.u_js) {
            F_at_.push_back(cumulative(pc.k, u));
            A_at_.push_back(cumulative(pc.alpha, u));
        }
    }

    double F(double u) const { return eval(pc_->k, F_at_, u); }
    /// ∫₀ᵘ α, the sensible-heat part of the enthalpy.
    double A(double u) const { return eval(pc_->alpha, A_at_, u); }

    const std::vector<double>& v_js() const { return F_at_; }

    int interval_of_v(double v) const {
        return static_cast<int>(std::upper_bound(F_at_.begin(), F_at_.end(), v) - F_at_.begin());
    }

    double inverse(double v) const { return inverse_in(interval_of_v(v), v); }

    /// F⁻¹ restricted to temperature interval i (v clamped to that interval's image).
    double inverse_in(int i, double v) const {
        const auto& u = pc_->u_js;
        const int J = pc_->J();
        const Piece& kp = pc_->k[i];
        const bool has_left = i > 0, has_right = i < J;
        if (has_left) v = std::max(v, F_at_[i - 1]);
        if (has_right) v = std::min(v, F_at_[i]);
        const double u_ref = has_left ? u[i - 1] : (has_right ? u[i] : 0.0);
        const double v_ref = has_left ? F_at_[i - 1] : (has_right ? F_at_[i] : 0.0);
        if (kp.is_constant()) return u_ref + (v - v_ref) / kp.coefficients()[0];
        auto g = [&](double x) { return v_ref + kp.integral(u_ref, x) - v; };
        auto gd = [&](double x) { return std::pair{g(x), kp(x)}; };
        roots::Bracket br{};
        if (has_left && has_right) br = {u[i - 1], u[i]};
        else br = roots::grow_bracket(g, u_ref, 1.0, 1e12);
        const double tol = 1e-15 * std::max(1.0, std::abs(v));
        const auto r = roots::newton_bisect(gd, br, u_ref + (v - v_ref) / kp(u_ref), tol, 200);
        return r.x;
    }

private:
    /// ∫₀ᵘ of the piecewise function.
    double cumulative(const std::vector<Piece>& pieces, double u) const {
        const double lo = std::min(0.0, u), hi = std::max(0.0, u);
        double s = 0.0;
        const auto& uj = pc_->u_js;
        for (int i = 0; i <= pc_->J(); ++i) {
            const double a = std::max(lo, i == 0 ? -std::numeric_limits<double>::infinity() : uj[i - 1]);
            const double b = std::min(hi, i == pc_->J() ? std::numeric_limits<double>::infinity() : uj[i]);
            if (a < b) s += pieces[i].integral(a, b);
        }
        return u >= 0.0 ? s : -s;
    }

    double eval(const std::vector<Piece>& pieces, const std::vector<double>& at, double u) const {
        const int i = pc_->interval_of(u);
        const auto& uj = pc_->u_js;
        if (i > 0) return at[i - 1] + pieces[i].integral(uj[i - 1], u);
        if (!uj.empty()) return at[0] - pieces[0].integral(u, uj[0]);
        return pieces[0].integral(0.0, u);
    }

    const PhaseCoefficients* pc_;
    std::vector<double> F_at_, A_at_;
};

/// F(u) for the given coefficients.
inline double kirchhoff_transform(const PhaseCoefficients& pc, double u) { return Kirchhoff(pc).F(u); }

/// The enthalpy b(v) = ∫₀^{F⁻¹(v)} α + (jumps b_j passed), anchored so b(0) = 0 on
/// the branch containing 0. Branch i covers the image of temperature interval i;
/// a phase value v^j itself belongs to the branch on its right.
class EnthalpyCurve {
public:
    explicit EnthalpyCurve(PhaseCoefficients pc) : pc_(std::move(pc)) {
        pc_.validate();
        kf_.emplace(pc_);
        const int J = pc_.J();
        const auto& vj = kf_->v_js();
        double below_zero = 0.0;
        for (int j = 0; j < J; ++j)
            if (vj[j] < 0.0) below_zero += pc_.b_js[j];
        offset_.resize(J + 1);
        double acc = -below_zero;
        for (int i = 0; i <= J; ++i) {
            offset_[i] = acc;
            if (i < J) acc += pc_.b_js[i];
        }
        affine_.resize(J + 1);
        slope_.resize(J + 1);
        intercept_.resize(J + 1);
        bool all_affine = true;
        double min_slope = std::numeric_limits<double>::infinity();
        for (int i = 0; i <= J; ++i) {
            affine_[i] = pc_.alpha[i].is_constant() && pc_.k[i].is_constant();
            all_affine = all_affine && affine_[i];
            if (!affine_[i]) continue;
            const double c1 = pc_.alpha[i].coefficients()[0] / pc_.k[i].coefficients()[0];
            const double u_ref = i > 0 ? pc_.u_js[i - 1] : (J > 0 ? pc_.u_js[0] : 0.0);
            slope_[i] = c1;
            intercept_[i] = kf_->A(u_ref) - c1 * kf_->F(u_ref) + offset_[i];
            min_slope = std::min(min_slope, c1);
        }
        if (all_affine) {
            bbar_raw_ = min_slope;
        } else {
            if (!pc_.beta_lower_bound)
                throw InvalidCoefficients("non-constant alpha/k pieces need an explicit beta lower bound");
            bbar_raw_ = *pc_.beta_lower_bound;
            const auto [lo, hi] = pc_.sample_window();
            for (int s = 0; s <= 10000; ++s) {
                const double u = lo + (hi - lo) * s / 10000.0;
                const int i = pc_.interval_of(u);
                const double beta = pc_.alpha[i](u) / pc_.k[i](u);
                if (beta < bbar_raw_ * (1.0 - 1e-12))
                    throw InvalidCoefficients("alpha/k = " + std::to_string(beta) + " at u = " + std::to_string(u) +
                                              " falls below the declared lower bound");
            }
        }
        if (!(bbar_raw_ > 0.0)) throw InvalidCoefficients("enthalpy slope must be positive");
    }

    EnthalpyCurve(const EnthalpyCurve& o) : pc_(o.pc_), offset_(o.offset_), affine_(o.affine_), slope_(o.slope_),
        intercept_(o.intercept_), bbar_raw_(o.bbar_raw_) { kf_.emplace(pc_); }
    EnthalpyCurve& operator=(const EnthalpyCurve& o) {
        if (this != &o) {
            pc_ = o.pc_;
            offset_ = o.offset_;
            affine_ = o.affine_;
            slope_ = o.slope_;
            intercept_ = o.intercept_;
            bbar_raw_ = o.bbar_raw_;
            kf_.emplace(pc_);
        }
        return *this;
    }

    const PhaseCoefficients& coefficients() const { return pc_; }
    const Kirchhoff& kirchhoff() const { return *kf_; }
    const std::vector<double>& v_js() const { return kf_->v_js(); }
    const std::vector<double>& jumps() const { return pc_.b_js; }
    int branches() const { return pc_.J() + 1; }
    int branch_of(double v) const { return kf_->interval_of_v(v); }
    bool affine(int i) const { return affine_[i]; }
    double slope(int i) const { return slope_[i]; }
    double intercept(int i) const { return intercept_[i]; }
    double bbar_raw() const { return bbar_raw_; }

    /// b(v); at a phase value the right branch is used.
    double operator()(double v) const { return branch(branch_of(v), v); }
    double beta(double v) const { return branch_beta(branch_of(v), v); }

    /// Smooth branch i evaluated at v (v is clamped into the branch's image).
    double branch(int i, double v) const {
        if (affine_[i]) return intercept_[i] + slope_[i] * v;
        return kf_->A(kf_->inverse_in(i, v)) + offset_[i];
    }
    double branch_beta(int i, double v) const {
        if (affine_[i]) return slope_[i];
        const double u = kf_->inverse_in(i, v);
        return pc_.alpha[i](u) / pc_.k[i](u);
    }
    /// (branch, branch_beta) sharing one inversion of F.
    std::pair<double, double> branch_with_beta(int i, double v) const {
        if (affine_[i]) return {intercept_[i] + slope_[i] * v, slope_[i]};
        const double u = kf_->inverse_in(i, v);
        return {kf_->A(u) + offset_[i], pc_.alpha[i](u) / pc_.k[i](u)};
    }

private:
    PhaseCoefficients pc_;
    std::optional<Kirchhoff> kf_;
    std::vector<double> offset_;
    std::vector<bool> affine_;
    std::vector<double> slope_, intercept_;
    double bbar_raw_ = 0.0;
};

inline EnthalpyCurve build_enthalpy(PhaseCoefficients pc) { return EnthalpyCurve(std::move(pc)); }

/// The normalized bump ω₁(s) = 𝓒 exp(−1/(1−s²)) on (−1,1) together with tabulated
/// cumulative moments M0(s) = ∫_{−1}^s ω₁ and M1(s) = ∫_{−1}^s tω₁(t)dt, interpolated by
/// cubic Hermite polynomials with exact derivatives. The tables are mirrored so that
/// M0(1) = 1 and M1(1) = 0 hold exactly.
class Kernel {
public:
    static const Kernel& instance() {
        static const Kernel k;
        return k;
    }

    double normalization() const { return C_; }
    double omega(double s) const {
        if (!(std::abs(s) < 1.0)) return 0.0;
        return C_ * std::exp(-1.0 / ((1.0 - s) * (1.0 + s)));
    }
    double M0(double s) const { return interp(m0_, s, 0); }
    double M1(double s) const { return interp(m1_, s, 1); }

private:
    static constexpr int N = 8192;

    Kernel() {
        const auto& rule = quad::gauss_legendre(16);
        const double hs = 2.0 / N;
        std::vector<long double> c0(N / 2 + 1, 0.0L), c1(N / 2 + 1, 0.0L);
        for (int i = 0; i < N / 2; ++i) {
            const long double a = -1.0L + static_cast<long double>(i) * hs;
            long double s0 = 0.0L, s1 = 0.0L;
            for (std::size_t q = 0; q < rule.size(); ++q) {
                const long double s = a + 0.5L * hs * (1.0L + rule.nodes[q]);
                const long double w = std::exp(-1.0L / ((1.0L - s) * (1.0L + s)));
                s0 += rule.weights[q] * w;
                s1 += rule.weights[q] * s * w;
            }
            c0[i + 1] = c0[i] + 0.5L * hs * s0;
            c1[i + 1] = c1[i] + 0.5L * hs * s1;
        }
        const long double mass = 2.0L * c0[N / 2];
        C_ = static_cast<double>(1.0L / mass);
        m0_.assign(N + 1, 0.0);
        m1_.assign(N + 1, 0.0);
        for (int i = 0; i <= N / 2; ++i) {
            m0_[i] = static_cast<double>(c0[i] / mass);
            m1_[i] = static_cast<double>(c1[i] / mass);
            m0_[N - i] = static_cast<double>(1.0L - c0[i] / mass);
            m1_[N - i] = m1_[i];
        }
        m0_[N / 2] = 0.5;
    }

    double interp(const std::vector<double>& y, double s, int moment) const {
        if (s <= -1.0) return 0.0;
        if (s >= 1.0) return moment == 0 ? 1.0 : 0.0;
        const double hs = 2.0 / N;
        const double t = (s + 1.0) / hs;
        int i = static_cast<int>(t);
        if (i >= N) i = N - 1;
        const double th = t - i;
        const double sa = -1.0 + i * hs, sb = sa + hs;
        const double da = moment == 0 ? omega(sa) : sa * omega(sa);
        const double db = moment == 0 ? omega(sb) : sb * omega(sb);
        const double om = 1.0 - th;
        const double h00 = (1.0 + 2.0 * th) * om * om, h10 = th * om * om;
        const double h01 = th * th * (3.0 - 2.0 * th), h11 = th * th * (th - 1.0);
        return h00 * y[i] + h10 * hs * da + h01 * y[i + 1] + h11 * hs * db;
    }

    double C_ = 0.0;
    std::vector<double> m0_, m1_;
};

/// ω_ρ(x) = ρ⁻¹ ω₁(x/ρ).
inline double mollifier(double x, double rho) { return Kernel::instance().omega(x / rho) / rho; }

/// b_n = b ∗ ω_ρ with derivative and certified lower bound b̄ on b_n′.
///
/// Affine branches and jump contributions are integrated exactly against the kernel
/// moments; non-affine branches use composite Gauss-Legendre of order q on every
/// smooth sub-window (split at the phase values inside [v−ρ, v+ρ]).
class MollifiedEnthalpy {
public:
    MollifiedEnthalpy(EnthalpyCurve curve, double rho, int order = 32,
                      std::optional<std::pair<double, double>> scan = std::nullopt)
        : base_(std::move(curve)), rho_(rho), order_(order), rule_(&quad::gauss_legendre(order)) {
        if (!(rho > 0.0) || !std::isfinite(rho)) throw InvalidMollification("mollification radius must be positive");
        const auto& vj = base_.v_js();
        if (scan) scan_ = *scan;
        else if (vj.empty()) scan_ = {-1.0, 1.0};
        else scan_ = {std::min(vj.front(), 0.0) - 1.0, std::max(vj.back(), 0.0) + 1.0};
        double m = std::numeric_limits<double>::infinity();
        for (int s = 0; s <= 10000; ++s) m = std::min(m, derivative(scan_.first + (scan_.second - scan_.first) * s / 10000.0));
        scan_min_ = m;
        bbar_ = std::min(base_.bbar_raw(), m);
        if (!(bbar_ > 0.0)) throw InvalidMollification("certified lower bound of b_n' is not positive");
    }

    double operator()(double v) const { return evaluate(v).first; }
    double derivative(double v) const { return evaluate(v).second; }

    /// (b_n(v), b_n′(v)).
    std::pair<double, double> evaluate(double v) const {
        const auto& vj = base_.v_js();
        const double lo = v - rho_, hi = v + rho_;
        const int top = base_.branch_of(hi);
        const int bottom = base_.branch_of(lo);
        if (top == bottom && base_.affine(top)) return {base_.intercept(top) + base_.slope(top) * v, base_.slope(top)};

        const Kernel& K = Kernel::instance();
        double val = 0.0, der = 0.0;
        // Walk the window in increasing s (decreasing argument w = v − ρs), branch by branch.
        double sa = -1.0;
        for (int i = top; i >= bottom; --i) {
            double sb = 1.0;
            if (i > bottom) {
                sb = (v - vj[i - 1]) / rho_;
                der += base_.jumps()[i - 1] * K.omega(sb) / rho_;
            }
            if (sb > sa) {
                if (base_.affine(i)) {
                    const double c1 = base_.slope(i), c0 = base_.intercept(i);
                    const double dm0 = K.M0(sb) - K.M0(sa), dm1 = K.M1(sb) - K.M1(sa);
                    val += (c0 + c1 * v) * dm0 - c1 * rho_ * dm1;
                    der += c1 * dm0;
                } else {
                    const double w = (sb - sa) / kPanels;
                    for (int p = 0; p < kPanels; ++p) {
                        const double mid = sa + (p + 0.5) * w, half = 0.5 * w;
                        for (std::size_t q = 0; q < rule_->size(); ++q) {
                            const double s = mid + half * rule_->nodes[q];
                            const double wt = half * rule_->weights[q] * K.omega(s);
                            const auto [bv, bd] = base_.branch_with_beta(i, v - rho_ * s);
                            val += bv * wt;
                            der += bd * wt;
                        }
                    }
                }
            }
            sa = sb;
        }
        return {val, der};
    }

    const EnthalpyCurve& base() const { return base_; }
    double rho() const { return rho_; }
    int order() const { return order_; }
    double bbar() const { return bbar_; }
    double scan_minimum() const { return scan_min_; }
    std::pair<double, double> certified_range() const { return scan_; }

private:
    static constexpr int kPanels = 4;

    EnthalpyCurve base_;
    double rho_;
    int order_;
    const quad::Rule* rule_;
    std::pair<double, double> scan_{};
    double scan_min_ = 0.0;
    double bbar_ = 0.0;
};

inline MollifiedEnthalpy mollify(EnthalpyCurve curve, double rho, int order = 32) {
    return MollifiedEnthalpy(std::move(curve), rho, order);
}

/// ζ(a,b) = ∫₀¹ b_n′(θa + (1−θ)b) dθ, i.e. the secant slope of b_n between a and b.
inline double zeta(const MollifiedEnthalpy& me, double a, double b) {
    const double scale = std::max({1.0, std::abs(a), std::abs(b)});
    if (std::abs(a - b) > 1e-6 * scale) return (me(a) - me(b)) / (a - b);
    const auto& rule = quad::gauss_legendre(8);
    return quad::integrate_fixed([&](double th) { return me.derivative(th * a + (1.0 - th) * b); }, 0.0, 1.0, rule);
}

}  // namespace stefan
