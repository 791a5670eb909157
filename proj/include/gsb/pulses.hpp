#pragma once

// Shortcut-to-adiabatic-passage drive synthesis: the Gaussian STIRAP pair,
// the mixing angle and its closed-form derivative, the counterdiabatic
// amplitude, and the blockade-condition diagnostic integral.

#include <cmath>
#include <complex>
#include <functional>
#include <utility>

#include "gsb/errors.hpp"
#include "gsb/models.hpp"

namespace gsb::pulses {

using models::DrivePair;

/// Amplitudes below this are clamped to zero to avoid underflow in the tails.
inline constexpr double kAmplitudeFloor = 1e-300;

struct StirapPlan {
    double peak_rabi = 1.0;   // Omega_0; cancels out of the counterdiabatic drive
    double total_time = 0.0;  // t_c
    double offset = 0.0;      // tau, pulse centre displacement from t_c/2
    double width = 0.0;       // T, Gaussian 1/e half-width
    int n_atoms = 2;

    void validate() const {
        if (total_time <= 0.0 || width <= 0.0)
            throw InvalidParameterError("StirapPlan: total_time and width must be positive");
        if (!(offset > 0.0 && offset < total_time / 2.0))
            throw InvalidParameterError("StirapPlan: offset must lie in (0, total_time/2)");
        if (n_atoms != 2 && n_atoms != 3)
            throw InvalidParameterError("StirapPlan: n_atoms must be 2 or 3");
    }
};

namespace detail {
inline void check_time(const StirapPlan& plan, double t) {
    if (t < 0.0 || t > plan.total_time)
        throw InvalidParameterError("pulse time " + std::to_string(t) +
                                    " outside [0, " + std::to_string(plan.total_time) + "]");
}
inline double clamp_underflow(double x) { return x < kAmplitudeFloor ? 0.0 : x; }
}  // namespace detail

/// The counterintuitively ordered Gaussian pair (Omega'_a leads on the late
/// side, Omega'_b on the early side).
inline std::pair<double, double> gaussian_pair(const StirapPlan& plan, double t) {
    plan.validate();
    detail::check_time(plan, t);
    double ua = (t - plan.total_time / 2.0 - plan.offset) / plan.width;
    double ub = (t - plan.total_time / 2.0 + plan.offset) / plan.width;
    return {detail::clamp_underflow(plan.peak_rabi * std::exp(-ua * ua)),
            detail::clamp_underflow(plan.peak_rabi * std::exp(-ub * ub))};
}

struct MixingAngle {
    double theta;      // arctan(sqrt(n) Omega'_a / Omega'_b), in [0, pi/2]
    double theta_dot;  // closed form (4 tau / T^2) sqrt(n) Omega'_a Omega'_b / Omega'^2
};

inline MixingAngle mixing_angle(const StirapPlan& plan, double t) {
    auto [oa, ob] = gaussian_pair(plan, t);
    if (oa == 0.0 && ob == 0.0)
        throw InvalidParameterError("mixing_angle: both pulse amplitudes underflowed");
    double n = static_cast<double>(plan.n_atoms);
    double sq = std::sqrt(n);
    double theta = std::atan2(sq * oa, ob);
    double norm2 = n * oa * oa + ob * ob;
    double theta_dot = (4.0 * plan.offset / (plan.width * plan.width)) * sq * oa * ob / norm2;
    return {theta, theta_dot};
}

/// Omega_cap = sqrt(Delta_p * theta_dot). Real for every t when offset > 0.
inline double cap_amplitude(const StirapPlan& plan, double delta_p, double t) {
    MixingAngle m = mixing_angle(plan, t);
    if (m.theta_dot < 0.0)
        throw InvalidParameterError("cap_amplitude: negative theta_dot (offset < 0?)");
    return std::sqrt(delta_p * m.theta_dot);
}

/// The physically realized drive pair: Omega_a = i Omega_cap / sqrt(n),
/// Omega_b = Omega_cap.
inline DrivePair sap_drives(const StirapPlan& plan, double delta_p) {
    plan.validate();
    double root_n = std::sqrt(static_cast<double>(plan.n_atoms));
    auto cap = [plan, delta_p](double t) { return cap_amplitude(plan, delta_p, t); };
    return DrivePair{
        [cap, root_n](double t) { return Complex(0.0, cap(t) / root_n); },
        [cap](double t) { return Complex(cap(t)); },
    };
}

// ---------------------------------------------------------------------------
// Adaptive Simpson quadrature (absolute tolerance per real/imaginary part).
// The integrands here are smooth with one known oscillation frequency.
// ---------------------------------------------------------------------------

namespace detail {

inline double simpson_step(const std::function<double(double)>& f, double a, double fa, double m,
                           double fm, double b, double fb, double whole, double tol, int depth) {
    double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = f(lm), frm = f(rm);
    if (!std::isfinite(flm) || !std::isfinite(frm))
        throw IntegrationError("non-finite integrand in adaptive Simpson rule");
    double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    double err = left + right - whole;
    if (depth <= 0) throw IntegrationError("adaptive Simpson rule: depth limit reached");
    if (std::abs(err) <= 15.0 * tol) return left + right + err / 15.0;
    return simpson_step(f, a, fa, lm, flm, m, fm, left, tol / 2.0, depth - 1) +
           simpson_step(f, m, fm, rm, frm, b, fb, right, tol / 2.0, depth - 1);
}

}  // namespace detail

inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double abs_tol = 1e-10, int max_depth = 48) {
    double m = 0.5 * (a + b);
    double fa = f(a), fm = f(m), fb = f(b);
    if (!std::isfinite(fa) || !std::isfinite(fm) || !std::isfinite(fb))
        throw IntegrationError("non-finite integrand at quadrature nodes");
    double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return detail::simpson_step(f, a, fa, m, fm, b, fb, whole, abs_tol, max_depth);
}

inline Complex adaptive_simpson_complex(const std::function<Complex(double)>& f, double a,
                                        double b, double abs_tol = 1e-10) {
    double re = adaptive_simpson([&f](double t) { return f(t).real(); }, a, b, abs_tol);
    double im = adaptive_simpson([&f](double t) { return f(t).imag(); }, a, b, abs_tol);
    return {re, im};
}

struct BlockadeIntegral {
    Complex s;          // S(t_c)
    double diagnostic;  // |S(t_c)/2|, must be << 1 for the blockade to hold
};

/// S(t_c) = i * integral over [0, t_c] of exp(-i lambda (t_c - t)) w(t) dt,
/// where w = Omega_a Omega_b / Delta_p for two atoms and carries an extra
/// sqrt(2) for three. With the counterdiabatic drive pair w reduces to
/// i theta_dot / sqrt(n) (Delta_p cancels).
inline BlockadeIntegral blockade_integral(const StirapPlan& plan, double delta_p, double lambda,
                                          double abs_tol = 1e-10) {
    plan.validate();
    if (lambda == 0.0)
        throw InvalidParameterError("blockade_integral: lambda must be nonzero");
    (void)delta_p;  // cancels against Omega_cap^2 = Delta_p theta_dot
    double n = static_cast<double>(plan.n_atoms);
    double prefactor = (plan.n_atoms == 3 ? std::sqrt(2.0) : 1.0) / std::sqrt(n);
    double tc = plan.total_time;
    auto integrand = [&plan, lambda, prefactor, tc](double t) {
        double theta_dot = mixing_angle(plan, t).theta_dot;
        Complex phase = std::exp(Complex(0.0, -lambda * (tc - t)));
        return phase * Complex(0.0, prefactor * theta_dot);
    };
    Complex s = Complex(0.0, 1.0) * adaptive_simpson_complex(integrand, 0.0, tc, abs_tol);
    return {s, 0.5 * std::abs(s)};
}

}  // namespace gsb::pulses
