#pragma once

// Closed-form target eigenstates in units with hbar/m = 1:
//   HO1D(n):        psi_n(x) = (2^n n!)^{-1/2} pi^{-1/4} H_n(x) exp(-x^2/2),  E = n + 1/2
//   HydrogenGround: psi(r)   = exp(-|r|) / sqrt(pi),                          E = -1/2

#include "mpnn/errors.hpp"

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <string_view>

namespace mpnn {

/// A point in D-dimensional space. Length must match the spec dimension.
using Coordinate = std::span<const double>;

/// Points with |psi| below this are excluded from loss evaluation.
inline constexpr double psi_floor = 1e-8;
/// Hydrogen points with |r| below this are treated as singular.
inline constexpr double r_floor = 1e-6;

enum class StateKind { HO1D, HydrogenGround };

struct WavefunctionSpec {
    StateKind kind = StateKind::HO1D;
    int level = 0; // HO quantum number; ignored for hydrogen

    static WavefunctionSpec harmonic(int n) {
        if (n < 0 || n > 2) throw InputError("HO level must be 0, 1 or 2, got " + std::to_string(n));
        return {StateKind::HO1D, n};
    }
    static WavefunctionSpec hydrogen() { return {StateKind::HydrogenGround, 0}; }

    int dim() const noexcept { return kind == StateKind::HO1D ? 1 : 3; }

    double exact_energy() const noexcept {
        return kind == StateKind::HO1D ? level + 0.5 : -0.5;
    }

    /// Config name: "ho1d:0", "ho1d:1", "ho1d:2" or "hydrogen".
    std::string name() const {
        return kind == StateKind::HO1D ? "ho1d:" + std::to_string(level) : "hydrogen";
    }

    static WavefunctionSpec parse(std::string_view s) {
        if (s == "hydrogen") return hydrogen();
        if (s == "ho1d:0") return harmonic(0);
        if (s == "ho1d:1") return harmonic(1);
        if (s == "ho1d:2") return harmonic(2);
        throw InputError("unknown wavefunction '" + std::string(s) +
                         "' (expected ho1d:0, ho1d:1, ho1d:2 or hydrogen)");
    }

    friend bool operator==(const WavefunctionSpec&, const WavefunctionSpec&) = default;
};

namespace detail {

inline void check_dim(const WavefunctionSpec& spec, Coordinate r) {
    if (static_cast<int>(r.size()) != spec.dim())
        throw InputError("coordinate has dimension " + std::to_string(r.size()) + ", " +
                         spec.name() + " needs " + std::to_string(spec.dim()));
}

inline double radius(Coordinate r) {
    double s = 0.0;
    for (double x : r) s += x * x;
    return std::sqrt(s);
}

// Hermite polynomial H_n and its first two derivatives, n <= 2.
struct Hermite {
    double h, dh, d2h;
};

inline Hermite hermite(int n, double x) {
    switch (n) {
    case 0: return {1.0, 0.0, 0.0};
    case 1: return {2.0 * x, 2.0, 0.0};
    default: return {4.0 * x * x - 2.0, 8.0 * x, 8.0};
    }
}

inline double ho_norm(int n) {
    constexpr double factorial[] = {1.0, 1.0, 2.0};
    return 1.0 / std::sqrt(std::ldexp(factorial[n], n)) / std::pow(std::numbers::pi, 0.25);
}

} // namespace detail

inline double psi(const WavefunctionSpec& spec, Coordinate r) {
    detail::check_dim(spec, r);
    if (spec.kind == StateKind::HO1D) {
        const double x = r[0];
        return detail::ho_norm(spec.level) * detail::hermite(spec.level, x).h * std::exp(-0.5 * x * x);
    }
    return std::exp(-detail::radius(r)) / std::sqrt(std::numbers::pi);
}

/// Analytic Laplacian of psi. Hydrogen is singular at the origin.
inline double laplacian_psi(const WavefunctionSpec& spec, Coordinate r) {
    detail::check_dim(spec, r);
    if (spec.kind == StateKind::HO1D) {
        // d2/dx2 [H e^{-x^2/2}] = (H'' - 2x H' + (x^2 - 1) H) e^{-x^2/2}
        const double x = r[0];
        const auto [h, dh, d2h] = detail::hermite(spec.level, x);
        return detail::ho_norm(spec.level) * (d2h - 2.0 * x * dh + (x * x - 1.0) * h) *
               std::exp(-0.5 * x * x);
    }
    const double rho = detail::radius(r);
    if (rho < r_floor) throw SingularityError("hydrogen Laplacian is singular at |r| < r_floor");
    // psi'' + (2/rho) psi' with psi' = -psi
    return (1.0 - 2.0 / rho) * std::exp(-rho) / std::sqrt(std::numbers::pi);
}

inline double exact_potential(const WavefunctionSpec& spec, Coordinate r) {
    detail::check_dim(spec, r);
    if (spec.kind == StateKind::HO1D) return 0.5 * r[0] * r[0];
    const double rho = detail::radius(r);
    if (rho < r_floor) throw SingularityError("Coulomb potential is singular at |r| < r_floor");
    return -1.0 / rho;
}

inline double probability(const WavefunctionSpec& spec, Coordinate r) {
    const double p = psi(spec, r);
    return p * p;
}

/// True when r lies outside every node/singularity guard, i.e. the local
/// kinetic term and exact potential are both defined there.
inline bool is_valid_point(const WavefunctionSpec& spec, Coordinate r) {
    if (static_cast<int>(r.size()) != spec.dim()) return false;
    if (spec.kind == StateKind::HydrogenGround && detail::radius(r) < r_floor) return false;
    return std::abs(psi(spec, r)) >= psi_floor;
}

/// K(r) = -lap(psi) / (2 psi).
inline double local_kinetic(const WavefunctionSpec& spec, Coordinate r) {
    const double p = psi(spec, r);
    if (std::abs(p) < psi_floor) throw NodeProximityError("|psi| below psi_floor at " + spec.name() + " node");
    return -laplacian_psi(spec, r) / (2.0 * p);
}

/// K'(r) = -lap|psi| / (2 |psi|), using lap|psi| = sign(psi) lap(psi) away from nodes.
inline double local_kinetic_modulus(const WavefunctionSpec& spec, Coordinate r) {
    const double p = psi(spec, r);
    if (std::abs(p) < psi_floor) throw NodeProximityError("|psi| below psi_floor at " + spec.name() + " node");
    const double sign = p < 0.0 ? -1.0 : 1.0;
    return -(sign * laplacian_psi(spec, r)) / (2.0 * (sign * p));
}

} // namespace mpnn
