#pragma once

/// Root finding for strictly increasing scalar functions: bracket growth,
/// plain bisection, and Newton iteration safeguarded by a shrinking bracket.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

namespace stefan::roots {

class NonConvergence : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Bracket {
    double lo;
    double hi;
};

struct Result {
    double x = 0.0;
    double residual = 0.0;  ///< |g(x)| at the returned point
    int iterations = 0;
    bool converged = false;
};

/// Grows [x0 - step, x0 + step] geometrically (factor 2) until an increasing g changes sign.
/// Throws NonConvergence once the half-width passes `limit`.
template <class G>
Bracket grow_bracket(G&& g, double x0, double step, double limit = 1e9) {
    double gx = g(x0);
    if (gx == 0.0) return {x0, x0};
    // g increasing: a negative value means the root lies to the right.
    const double dir = gx < 0.0 ? 1.0 : -1.0;
    double near = x0;
    double w = step > 0.0 ? step : 1.0;
    while (w <= limit) {
        const double far = x0 + dir * w;
        const double gf = g(far);
        if ((gf < 0.0) != (gx < 0.0) || gf == 0.0) return dir > 0 ? Bracket{near, far} : Bracket{far, near};
        near = far;
        w *= 2.0;
    }
    throw NonConvergence("bracket growth exceeded " + std::to_string(limit) + " around " + std::to_string(x0));
}

/// Bisection for an increasing g on a sign-changing bracket; stops when the bracket
/// collapses to adjacent doubles or after max_iter halvings.
template <class G>
Result bisect(G&& g, Bracket br, int max_iter = 2000) {
    double lo = br.lo, hi = br.hi;
    Result r;
    for (r.iterations = 0; r.iterations < max_iter; ++r.iterations) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const double gm = g(mid);
        if (gm == 0.0) {
            lo = hi = mid;
            break;
        }
        (gm < 0.0 ? lo : hi) = mid;
    }
    r.x = 0.5 * (lo + hi);
    r.residual = std::abs(g(r.x));
    r.converged = true;
    return r;
}

/// Newton iteration for an increasing g with derivative, kept inside a bracket that
/// shrinks with every evaluation. A bisection step replaces Newton whenever the
/// Newton point leaves the bracket or the residual fails to halve.
/// `gd(x)` returns the pair (g(x), g'(x)). Converges when |g| <= abs_tol or the
/// bracket/step reaches roundoff size.
template <class GD>
Result newton_bisect(GD&& gd, Bracket br, double x0, double abs_tol, int max_iter = 200) {
    double lo = br.lo, hi = br.hi;
    double x = (x0 >= lo && x0 <= hi) ? x0 : 0.5 * (lo + hi);
    double prev_abs = std::numeric_limits<double>::infinity();
    Result r;
    constexpr double eps = std::numeric_limits<double>::epsilon();
    for (r.iterations = 1; r.iterations <= max_iter; ++r.iterations) {
        auto [g, dg] = gd(x);
        const double ag = std::abs(g);
        if (ag <= abs_tol || g == 0.0) {
            r.x = x;
            r.residual = ag;
            r.converged = true;
            return r;
        }
        (g < 0.0 ? lo : hi) = x;
        if (hi - lo <= 4.0 * eps * std::max({std::abs(lo), std::abs(hi), 1e-300})) {
            r.x = x;
            r.residual = ag;
            r.converged = true;
            return r;
        }
        double next = x - g / dg;
        const bool stalled = ag > 0.5 * prev_abs;
        if (!(next > lo && next < hi) || (stalled && r.iterations > 2)) next = 0.5 * (lo + hi);
        if (std::abs(next - x) <= 2.0 * eps * std::max(std::abs(x), 1e-300)) {
            r.x = next;
            r.residual = std::abs(gd(next).first);
            r.converged = true;
            return r;
        }
        prev_abs = ag;
        x = next;
    }
    r.x = x;
    r.residual = std::abs(gd(x).first);
    r.converged = false;
    return r;
}

}  // namespace stefan::roots
