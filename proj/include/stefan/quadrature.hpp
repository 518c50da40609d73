#pragma once

/// Quadrature helpers: full Gauss-Legendre rules on [-1, 1], tensor-product
/// cell rules, and adaptive Simpson integration for smooth one-dimensional integrands.

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>

namespace stefan::quad {

/// Nodes and weights of an N-point Gauss-Legendre rule on [-1, 1], ascending.
struct Rule {
    std::vector<double> nodes;
    std::vector<double> weights;
    std::size_t size() const { return nodes.size(); }
};

namespace detail {
template <unsigned N>
Rule expand() {
    using G = boost::math::quadrature::gauss<double, N>;
    const auto& a = G::abscissa();
    const auto& w = G::weights();
    Rule r;
    r.nodes.reserve(N);
    r.weights.reserve(N);
    // boost stores the non-negative half; the zero node (odd N) comes first.
    for (std::size_t i = a.size(); i-- > 0;) {
        if (a[i] == 0.0) continue;
        r.nodes.push_back(-a[i]);
        r.weights.push_back(w[i]);
    }
    if (N % 2 == 1) {
        r.nodes.push_back(0.0);
        r.weights.push_back(w[0]);
    }
    for (std::size_t i = (N % 2 == 1 ? 1 : 0); i < a.size(); ++i) {
        r.nodes.push_back(a[i]);
        r.weights.push_back(w[i]);
    }
    return r;
}
}  // namespace detail

/// Gauss-Legendre rule of the given order. Supported orders: 1-8, 10, 12, 16, 20, 24, 32, 48, 64.
inline const Rule& gauss_legendre(int order) {
    static const std::array<Rule, 13> rules = {
        detail::expand<1>(),  detail::expand<2>(),  detail::expand<3>(),  detail::expand<4>(),
        detail::expand<5>(),  detail::expand<6>(),  detail::expand<8>(),  detail::expand<10>(),
        detail::expand<16>(), detail::expand<20>(), detail::expand<32>(), detail::expand<48>(),
        detail::expand<64>()};
    switch (order) {
        case 1: return rules[0];
        case 2: return rules[1];
        case 3: return rules[2];
        case 4: return rules[3];
        case 5: return rules[4];
        case 6: return rules[5];
        case 8: return rules[6];
        case 10: return rules[7];
        case 16: return rules[8];
        case 20: return rules[9];
        case 32: return rules[10];
        case 48: return rules[11];
        case 64: return rules[12];
        default: throw std::invalid_argument("unsupported Gauss-Legendre order " + std::to_string(order));
    }
}

/// Integral of f over [a, b] with a fixed Gauss-Legendre rule.
template <class F>
double integrate_fixed(F&& f, double a, double b, const Rule& rule) {
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    double s = 0.0;
    for (std::size_t i = 0; i < rule.size(); ++i) s += rule.weights[i] * f(mid + half * rule.nodes[i]);
    return s * half;
}

/// Composite Gauss-Legendre: `panels` equal sub-intervals, each with `rule`.
template <class F>
double integrate_composite(F&& f, double a, double b, int panels, const Rule& rule) {
    double s = 0.0;
    const double w = (b - a) / panels;
    for (int p = 0; p < panels; ++p) {
        const double lo = a + p * w;
        const double hi = (p + 1 == panels) ? b : lo + w;
        s += integrate_fixed(f, lo, hi, rule);
    }
    return s;
}

class IntegrationFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {
template <class F>
double simpson_step(F& f, double a, double b, double fa, double fm, double fb, double whole, double tol, int depth,
                    bool& ok) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (depth <= 0 || !std::isfinite(delta)) {
        ok = ok && std::isfinite(delta) && std::abs(delta) <= 15.0 * tol;
        return left + right + delta / 15.0;
    }
    if (std::abs(delta) <= 15.0 * tol || m <= a || m >= b) return left + right + delta / 15.0;
    return simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, ok) +
           simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, ok);
}
}  // namespace detail

/// Adaptive Simpson integration (with Richardson correction) of a smooth integrand.
/// The tolerance is relative to a 65-point composite estimate of the integral's
/// magnitude. Throws IntegrationFailure when the recursion limit is reached unconverged.
template <class F>
double integrate_adaptive(F&& f, double a, double b, double rel_tol = 1e-13) {
    if (a == b) return 0.0;
    double scale = 0.0;
    const int probe = 64;
    for (int i = 0; i <= probe; ++i) scale += std::abs(f(a + (b - a) * i / probe));
    scale *= std::abs(b - a) / (probe + 1);
    const double tol = rel_tol * scale + 1e-300;
    const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    bool ok = true;
    const double val = detail::simpson_step(f, a, b, fa, fm, fb, whole, tol, 48, ok);
    if (!ok || !std::isfinite(val))
        throw IntegrationFailure("adaptive quadrature did not converge on [" + std::to_string(a) + ", " +
                                 std::to_string(b) + "]");
    return val;
}

/// Tensor-product rule over an axis-aligned box of dimension dim with lower corner `lo`
/// and edge lengths `width`. Calls f(point) for each node and accumulates weight·f.
template <class F>
double integrate_box(F&& f, const std::vector<double>& lo, const std::vector<double>& width, const Rule& rule) {
    const std::size_t d = lo.size();
    const std::size_t q = rule.size();
    std::vector<std::size_t> idx(d, 0);
    std::vector<double> x(d);
    double vol = 1.0;
    for (double w : width) vol *= 0.5 * w;
    double s = 0.0;
    while (true) {
        double w = 1.0;
        for (std::size_t i = 0; i < d; ++i) {
            x[i] = lo[i] + 0.5 * width[i] * (rule.nodes[idx[i]] + 1.0);
            w *= rule.weights[idx[i]];
        }
        s += w * f(x);
        std::size_t i = 0;
        while (i < d && ++idx[i] == q) idx[i++] = 0;
        if (i == d) break;
    }
    return s * vol;
}

/// Mean value over the box: the tensor rule normalised by its own weight sum, so
/// constants are reproduced exactly.
template <class F>
double average_box(F&& f, const std::vector<double>& lo, const std::vector<double>& width, const Rule& rule) {
    double wsum = 0.0;
    for (double w : rule.weights) wsum += w;
    const std::size_t d = lo.size();
    const std::size_t q = rule.size();
    std::vector<std::size_t> idx(d, 0);
    std::vector<double> x(d);
    double s = 0.0;
    while (true) {
        double w = 1.0;
        for (std::size_t i = 0; i < d; ++i) {
            x[i] = lo[i] + 0.5 * width[i] * (rule.nodes[idx[i]] + 1.0);
            w *= rule.weights[idx[i]] / wsum;
        }
        s += w * f(x);
        std::size_t i = 0;
        while (i < d && ++idx[i] == q) idx[i++] = 0;
        if (i == d) break;
    }
    return s;
}

}  // namespace stefan::quad
