#pragma once

// Reference problems with known solutions: a smooth single-phase manufactured
// solution and the classical two-phase similarity (Neumann) solution on a half-line.

#include <cmath>
#include <numbers>
#include <span>

#include "data.hpp"
#include "enthalpy.hpp"
#include "roots.hpp"

namespace stefan::bench {

/// v* = sin(πx)(1 + t) on [0,1] for b(v) = v, driven by f = sin(πx)(1 + π²(1 + t)).
struct Manufactured {
    static double exact(double x, double t) { return std::sin(std::numbers::pi * x) * (1.0 + t); }
    SpaceTimeFunction f = [](std::span<const double> x, double t) {
        constexpr double pi = std::numbers::pi;
        return std::sin(pi * x[0]) * (1.0 + pi * pi * (1.0 + t));
    };
    SpaceFunction phi = [](std::span<const double> x) { return std::sin(std::numbers::pi * x[0]); };
    GradientFunction phi_grad = [](std::span<const double> x, std::span<double> g) {
        g[0] = std::numbers::pi * std::cos(std::numbers::pi * x[0]);
    };
    static PhaseCoefficients coefficients() {
        PhaseCoefficients pc;
        pc.alpha = {Piece::constant(1.0)};
        pc.k = {Piece::constant(1.0)};
        return pc;
    }
};

/// Melting of a solid initially at u_inf by a wall held at u_wall > u_melt on x = 0,
/// with unit conductivity, heat capacities alpha_l (liquid) and alpha_s (solid) and
/// latent heat L. The interface is s(t) = 2λ√t where λ solves
///   Lλ = −(u_m − u_w) e^{−λ²/κ_l} / (erf(λ/√κ_l) √(πκ_l))
///        − (u_m − u_∞) e^{−λ²/κ_s} / (erfc(λ/√κ_s) √(πκ_s)),   κ = 1/α.
struct Neumann {
    double alpha_l = 10.0, alpha_s = 10.0, L = 5.0;
    double u_wall = 0.0, u_melt = -1.0, u_inf = -2.0;

    double kappa_l() const { return 1.0 / alpha_l; }
    double kappa_s() const { return 1.0 / alpha_s; }

    /// g(λ) = Lλ − right side; strictly increasing from −∞ on (0, ∞).
    double stefan_residual(double lam) const {
        const double kl = kappa_l(), ks = kappa_s();
        const double pi = std::numbers::pi;
        const double liquid = (u_melt - u_wall) * std::exp(-lam * lam / kl) / (std::erf(lam / std::sqrt(kl)) * std::sqrt(pi * kl));
        const double solid = (u_melt - u_inf) * std::exp(-lam * lam / ks) / (std::erfc(lam / std::sqrt(ks)) * std::sqrt(pi * ks));
        return L * lam + liquid + solid;
    }

    double lambda() const {
        roots::Bracket br{1e-12, 1.0};
        while (stefan_residual(br.hi) < 0.0) br.hi *= 2.0;
        return roots::bisect([this](double l) { return stefan_residual(l); }, br).x;
    }

    double front(double t) const { return 2.0 * lambda() * std::sqrt(t); }

    double temperature(double x, double t) const {
        const double lam = lambda();
        if (t <= 0.0) return x <= 0.0 ? u_wall : u_inf;
        const double kl = kappa_l(), ks = kappa_s();
        if (x < 2.0 * lam * std::sqrt(t))
            return u_wall + (u_melt - u_wall) * std::erf(x / (2.0 * std::sqrt(kl * t))) / std::erf(lam / std::sqrt(kl));
        return u_inf + (u_melt - u_inf) * std::erfc(x / (2.0 * std::sqrt(ks * t))) / std::erfc(lam / std::sqrt(ks));
    }

    PhaseCoefficients coefficients() const {
        PhaseCoefficients pc;
        pc.u_js = {u_melt};
        pc.b_js = {L};
        pc.alpha = {Piece::constant(alpha_s), Piece::constant(alpha_l)};
        pc.k = {Piece::constant(1.0), Piece::constant(1.0)};
        return pc;
    }
};

}  // namespace stefan::bench
