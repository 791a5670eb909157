#pragma once

// Observable extraction: population and fidelity series, ratio surfaces,
// sustained-threshold convergence times, max-population summaries.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "gsb/dynamics.hpp"
#include "gsb/models.hpp"
#include "gsb/qspace.hpp"

namespace gsb::analysis {

struct ObservableSeries {
    std::string name;
    Eigen::VectorXd times;
    Eigen::VectorXd values;
    double max_value = 0.0;  // grid maximum with parabolic refinement
    double max_time = 0.0;
};

namespace detail {

/// Parabolic refinement of the maximum through the three samples around the
/// grid argmax; falls back to the raw sample at the boundary.
inline void refine_max(ObservableSeries& s) {
    Eigen::Index i;
    s.values.maxCoeff(&i);
    s.max_value = s.values[i];
    s.max_time = s.times[i];
    if (i == 0 || i + 1 >= s.values.size()) return;
    double t0 = s.times[i - 1], t1 = s.times[i], t2 = s.times[i + 1];
    double v0 = s.values[i - 1], v1 = s.values[i], v2 = s.values[i + 1];
    double denom = (t1 - t0) * (v1 - v2) - (t1 - t2) * (v1 - v0);
    if (denom == 0.0) return;
    double tv = t1 - 0.5 * ((t1 - t0) * (t1 - t0) * (v1 - v2) -
                            (t1 - t2) * (t1 - t2) * (v1 - v0)) / denom;
    tv = std::clamp(tv, t0, t2);
    // Lagrange value at the vertex
    double l0 = (tv - t1) * (tv - t2) / ((t0 - t1) * (t0 - t2));
    double l1 = (tv - t0) * (tv - t2) / ((t1 - t0) * (t1 - t2));
    double l2 = (tv - t0) * (tv - t1) / ((t2 - t0) * (t2 - t1));
    double vv = v0 * l0 + v1 * l1 + v2 * l2;
    if (vv > s.max_value) {
        s.max_value = vv;
        s.max_time = tv;
    }
}

inline void check_population_bounds(const ObservableSeries& s) {
    for (Eigen::Index i = 0; i < s.values.size(); ++i)
        if (s.values[i] < -1e-9 || s.values[i] > 1.0 + 1e-9)
            throw ValidationError("population series '" + s.name + "' leaves [0,1] at sample " +
                                  std::to_string(i) + " (value " +
                                  std::to_string(s.values[i]) + ")");
}

}  // namespace detail

/// <target| rho(t) |target> per sample.
inline ObservableSeries population_series(const dynamics::EvolutionResult& result,
                                          const QuantumState& target, std::string name = "P") {
    if (!target.is_pure())
        throw InvalidParameterError("population_series: target must be a pure state");
    if (result.states.empty())
        throw InvalidParameterError("population_series: run carries no stored states");
    require_same_space(result.states.front().space(), target.space(), "population_series");
    ObservableSeries s;
    s.name = std::move(name);
    s.times = result.times;
    s.values.resize(result.times.size());
    const Vector& tv = target.vector();
    for (std::size_t i = 0; i < result.states.size(); ++i) {
        const QuantumState& st = result.states[i];
        double p = st.is_pure() ? std::norm(tv.dot(st.vector()))
                                : tv.dot(st.density() * tv).real();
        s.values[static_cast<Eigen::Index>(i)] = p;
    }
    detail::check_population_bounds(s);
    detail::refine_max(s);
    return s;
}

/// F(t) = sqrt(<target|rho(t)|target>); the paper's pure-target fidelity.
inline ObservableSeries fidelity_series(const dynamics::EvolutionResult& result,
                                        const QuantumState& target, std::string name = "F") {
    ObservableSeries s = population_series(result, target, std::move(name));
    for (Eigen::Index i = 0; i < s.values.size(); ++i)
        s.values[i] = std::sqrt(std::max(0.0, s.values[i]));
    detail::refine_max(s);
    return s;
}

struct RatioSurface {
    Eigen::VectorXd delta_over_omega_eff;
    Eigen::VectorXd lambda_over_omega_eff;
    Eigen::MatrixXd r1;  // indexed (delta, lambda)
    Eigen::MatrixXd r2;
};

inline RatioSurface ratio_surface(const Eigen::VectorXd& deltas, const Eigen::VectorXd& lambdas,
                                  double omega_eff) {
    if (lambdas.size() == 0 || lambdas.minCoeff() <= 0.0)
        throw InvalidParameterError("ratio_surface: lambda range must be positive");
    RatioSurface s;
    s.delta_over_omega_eff = deltas / omega_eff;
    s.lambda_over_omega_eff = lambdas / omega_eff;
    s.r1.resize(deltas.size(), lambdas.size());
    s.r2.resize(deltas.size(), lambdas.size());
    for (Eigen::Index i = 0; i < deltas.size(); ++i)
        for (Eigen::Index j = 0; j < lambdas.size(); ++j) {
            auto spec = models::blockade_spectrum(lambdas[j], deltas[i], omega_eff);
            s.r1(i, j) = spec.r1;
            s.r2(i, j) = spec.r2;
        }
    return s;
}

/// First sampled time after which the series stays at or above the threshold
/// through t_end (sustained crossing, not first touch).
inline std::optional<double> convergence_time(const ObservableSeries& s, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw InvalidParameterError("convergence_time: threshold must lie in (0,1)");
    Eigen::Index first_ok = -1;
    for (Eigen::Index i = s.values.size() - 1; i >= 0; --i) {
        if (s.values[i] < threshold) break;
        first_ok = i;
    }
    if (first_ok < 0) return std::nullopt;
    return s.times[first_ok];
}

}  // namespace gsb::analysis
