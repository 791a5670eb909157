#pragma once

// Time-evolution engines: Schrodinger and Lindblad master equations driven by
// an adaptive embedded Runge-Kutta 5(4) pair (Dormand-Prince, FSAL), plus a
// vectorized-Liouvillian steady-state solver and trajectory comparison.
//
// Output sampling is decoupled from internal stepping: the integrator chooses
// its own steps and lands exactly on the requested sample times.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SVD>

#include "gsb/errors.hpp"
#include "gsb/models.hpp"
#include "gsb/qspace.hpp"

namespace gsb::dynamics {

struct TimeGrid {
    double t_start = 0.0;
    double t_end = 0.0;
    int n_samples = 201;
    double rtol = 1e-8;
    double atol = 1e-10;

    void validate() const {
        if (!(t_end > t_start)) throw InvalidParameterError("TimeGrid: t_end must exceed t_start");
        if (n_samples < 2) throw InvalidParameterError("TimeGrid: n_samples must be >= 2");
        if (rtol <= 0.0 || atol <= 0.0)
            throw InvalidParameterError("TimeGrid: tolerances must be positive");
    }

    Eigen::VectorXd times() const {
        validate();
        Eigen::VectorXd t(n_samples);
        double dt = (t_end - t_start) / (n_samples - 1);
        for (int i = 0; i < n_samples; ++i) t[i] = t_start + i * dt;
        t[n_samples - 1] = t_end;
        return t;
    }
};

struct LindbladProblem {
    OperatorSchedule hamiltonian;
    std::vector<OperatorSchedule> collapse_ops;
    std::optional<Operator> feedback_unitary;  // applied inside the jump term
    int feedback_channel = 0;
    QuantumState initial_state;

    static LindbladProblem from_bundle(const models::ModelBundle& bundle,
                                       QuantumState initial) {
        LindbladProblem p;
        p.hamiltonian = bundle.hamiltonian;
        p.collapse_ops = bundle.collapse_ops;
        p.feedback_unitary = bundle.feedback_unitary;
        p.feedback_channel = bundle.feedback_channel;
        p.initial_state = std::move(initial);
        return p;
    }

    void validate() const {
        const CompositeSpace& space = hamiltonian.space();
        require_same_space(space, initial_state.space(), "LindbladProblem initial state");
        for (const auto& c : collapse_ops)
            require_same_space(space, c.space(), "LindbladProblem collapse operator");
        if (feedback_unitary) {
            require_same_space(space, feedback_unitary->space(), "LindbladProblem feedback");
            const Matrix& u = feedback_unitary->matrix();
            double dev = (u.adjoint() * u - Matrix::Identity(u.rows(), u.cols())).norm();
            if (dev > 1e-10 * std::sqrt(static_cast<double>(u.rows())))
                throw InvalidParameterError("feedback operator is not unitary (deviation " +
                                            std::to_string(dev) + ")");
            if (feedback_channel < 0 ||
                feedback_channel >= static_cast<int>(collapse_ops.size()))
                throw InvalidParameterError("feedback_channel out of range");
        }
    }
};

struct IntegratorStats {
    long steps = 0;
    long rejected = 0;
    long rhs_evals = 0;
};

namespace detail {
inline std::string sci(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", x);
    return buf;
}
}  // namespace detail

struct EvolutionResult {
    Eigen::VectorXd times;
    std::vector<QuantumState> states;
    std::map<std::string, std::vector<double>> observables;
    // run diagnostics
    double max_norm_drift = 0.0;   // pure runs: | ||psi|| - 1 |
    double max_trace_drift = 0.0;  // mixed runs: | tr(rho) - 1 |
    double max_hermiticity_dev = 0.0;
    IntegratorStats stats;
};

// ---------------------------------------------------------------------------
// Dormand-Prince 5(4) with FSAL and step clipping onto sample times.
// ---------------------------------------------------------------------------

namespace detail {

struct Dp45Coefficients {
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                            a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                            a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                            b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    // b - bhat, the embedded error weights
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                            e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
};

inline double error_norm(const Vector& err, const Vector& y0, const Vector& y1, double rtol,
                         double atol) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < err.size(); ++i) {
        double scale = atol + rtol * std::max(std::abs(y0[i]), std::abs(y1[i]));
        double q = std::abs(err[i]) / scale;
        sum += q * q;
    }
    return std::sqrt(sum / static_cast<double>(err.size()));
}

/// Integrate dy/dt = rhs(t, y) from sample_times[0] to sample_times[last],
/// invoking on_sample(index, t, y) at every sample time (including the first).
template <class Rhs, class SampleCb>
IntegratorStats integrate_dp45(Rhs&& rhs, Vector y, const Eigen::VectorXd& sample_times,
                               double rtol, double atol, SampleCb&& on_sample,
                               long max_steps = 80'000'000) {
    using C = Dp45Coefficients;
    const double t0 = sample_times[0];
    const double t_end = sample_times[sample_times.size() - 1];
    const double span = t_end - t0;
    IntegratorStats stats;

    const Eigen::Index n = y.size();
    Vector k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), ytmp(n), y5(n), err(n);

    double t = t0;
    int next_sample = 0;
    on_sample(next_sample++, t, y);

    rhs(t, y, k1);
    ++stats.rhs_evals;

    // initial step from the scale of the first derivative
    double h;
    {
        double ny = y.norm(), nf = k1.norm();
        h = (nf > 0.0 && ny > 0.0) ? 0.01 * ny / nf : span / 1e4;
        h = std::min(h, span / 10.0);
    }

    while (t < t_end) {
        if (stats.steps >= max_steps)
            throw IntegratorError("step budget exhausted at t = " + std::to_string(t));
        double t_target = sample_times[next_sample];
        bool clipped = (t + h >= t_target - 1e-14 * span);
        double hs = clipped ? t_target - t : h;  // attempted step

        ytmp = y + hs * C::a21 * k1;
        rhs(t + C::c2 * hs, ytmp, k2);
        ytmp = y + hs * (C::a31 * k1 + C::a32 * k2);
        rhs(t + C::c3 * hs, ytmp, k3);
        ytmp = y + hs * (C::a41 * k1 + C::a42 * k2 + C::a43 * k3);
        rhs(t + C::c4 * hs, ytmp, k4);
        ytmp = y + hs * (C::a51 * k1 + C::a52 * k2 + C::a53 * k3 + C::a54 * k4);
        rhs(t + C::c5 * hs, ytmp, k5);
        ytmp = y + hs * (C::a61 * k1 + C::a62 * k2 + C::a63 * k3 + C::a64 * k4 + C::a65 * k5);
        rhs(t + hs, ytmp, k6);
        y5 = y + hs * (C::b1 * k1 + C::b3 * k3 + C::b4 * k4 + C::b5 * k5 + C::b6 * k6);
        rhs(t + hs, y5, k7);
        stats.rhs_evals += 6;

        err = hs * (C::e1 * k1 + C::e3 * k3 + C::e4 * k4 + C::e5 * k5 + C::e6 * k6 + C::e7 * k7);
        double e = error_norm(err, y, y5, rtol, atol);
        double factor = std::clamp((e > 0.0) ? 0.9 * std::pow(e, -0.2) : 5.0, 0.2, 5.0);

        if (e <= 1.0) {
            t = clipped ? t_target : t + hs;
            y.swap(y5);
            k1.swap(k7);  // FSAL
            ++stats.steps;
            if (clipped) {
                on_sample(next_sample, t, y);
                if (++next_sample >= sample_times.size()) break;
            }
            // a clipped step must not shrink the preferred step size
            h = clipped ? std::max(h, hs * factor) : hs * factor;
        } else {
            ++stats.rejected;
            h = hs * factor;
        }
        if (h < 1e-14 * span)
            throw IntegratorError("step size underflow at t = " + std::to_string(t) +
                                  " (h = " + std::to_string(h) +
                                  ", error = " + std::to_string(e) + ")");
    }
    return stats;
}

inline Eigen::SparseMatrix<Complex> sparsify(const Matrix& m) {
    return m.sparseView(0.0, 0.0);
}

/// Applies the Lindblad right-hand side. Static problems precompute the
/// drift G = -iH - (1/2) sum c^dag c and use sparse products above a size
/// threshold; time-dependent pieces are re-evaluated at every call.
class LindbladRhs {
public:
    LindbladRhs(const LindbladProblem& problem, bool allow_sparse = true) : n_(problem.hamiltonian.space().dim()) {
        const auto& h = problem.hamiltonian;
        h_static_ = h.is_static();
        Matrix k_static = Matrix::Zero(n_, n_);
        for (int i = 0; i < static_cast<int>(problem.collapse_ops.size()); ++i) {
            OperatorSchedule c = problem.collapse_ops[i];
            if (problem.feedback_unitary && i == problem.feedback_channel)
                c = compose_feedback(*problem.feedback_unitary, c);
            if (c.is_static()) {
                Matrix cm = c.constant_part();
                k_static += cm.adjoint() * cm;
                jumps_.push_back(std::move(cm));
            } else {
                td_jumps_.push_back(std::move(c));
            }
        }
        drift_static_ = Matrix::Zero(n_, n_);
        if (h_static_) drift_static_ = Complex(0, -1) * h.constant_part();
        drift_static_ -= 0.5 * k_static;
        if (!h_static_) h_sched_ = h;

        all_static_ = h_static_ && td_jumps_.empty();
        use_sparse_ = allow_sparse && all_static_ && n_ >= 24;
        if (use_sparse_) {
            drift_sparse_ = sparsify(drift_static_);
            for (const auto& j : jumps_) jumps_sparse_.push_back(sparsify(j));
        }
        ht_.resize(n_, n_);
        ct_.resize(n_, n_);
        tmp_.resize(n_, n_);
        tmp2_.resize(n_, n_);
    }

    int dim() const { return n_; }

    void operator()(double t, const Vector& y, Vector& dy) {
        Eigen::Map<const Matrix> rho(y.data(), n_, n_);
        dy.resize(y.size());
        Eigen::Map<Matrix> out(dy.data(), n_, n_);

        if (use_sparse_) {
            tmp_.noalias() = drift_sparse_ * rho;
            tmp2_.noalias() = drift_sparse_ * rho.adjoint();
            out = tmp_ + tmp2_.adjoint();
            for (const auto& j : jumps_sparse_) {
                tmp_.noalias() = j * rho;
                tmp2_.noalias() = tmp_ * j.adjoint();
                out += tmp2_;
            }
            return;
        }

        // drift part: G rho + rho G^dag with G = -iH(t) - K/2
        if (h_static_) {
            tmp_.noalias() = drift_static_ * rho;
        } else {
            h_sched_.eval_into(t, ht_);
            tmp_ = drift_static_;
            tmp_.noalias() += Complex(0, -1) * ht_;
            ht_ = tmp_;  // ht_ now holds G(t)
            tmp_.noalias() = ht_ * rho;
        }
        const Matrix& g = h_static_ ? drift_static_ : ht_;
        tmp2_.noalias() = g * rho.adjoint();
        out = tmp_ + tmp2_.adjoint();

        for (const auto& j : jumps_) {
            tmp_.noalias() = j * rho;
            tmp2_.noalias() = tmp_ * j.adjoint();
            out += tmp2_;
        }
        for (const auto& c : td_jumps_) {
            c.eval_into(t, ct_);
            tmp_.noalias() = ct_ * rho;
            tmp2_.noalias() = tmp_ * ct_.adjoint();
            out += tmp2_;
            // the anticommutator part of the time-dependent channel
            tmp_.noalias() = ct_.adjoint() * ct_;
            tmp2_.noalias() = tmp_ * rho;
            out -= 0.5 * tmp2_;
            tmp2_.noalias() = rho * tmp_;
            out -= 0.5 * tmp2_;
        }
    }

    static OperatorSchedule compose_feedback(const Operator& u, const OperatorSchedule& c) {
        OperatorSchedule out(c.space(), u.matrix() * c.constant_part(), c.unit());
        for (const auto& term : c.terms())
            out.add_term(term.coeff, Operator(c.space(), u.matrix() * term.matrix));
        return out;
    }

private:
    int n_;
    bool h_static_ = true, all_static_ = true, use_sparse_ = false;
    Matrix drift_static_;
    OperatorSchedule h_sched_;
    std::vector<Matrix> jumps_;
    std::vector<OperatorSchedule> td_jumps_;
    Eigen::SparseMatrix<Complex> drift_sparse_;
    std::vector<Eigen::SparseMatrix<Complex>> jumps_sparse_;
    Matrix ht_, ct_, tmp_, tmp2_;
};

}  // namespace detail

/// Closed-system evolution of a pure state.
inline EvolutionResult evolve_schrodinger(const OperatorSchedule& hamiltonian,
                                          const QuantumState& psi0, const TimeGrid& grid) {
    grid.validate();
    require_same_space(hamiltonian.space(), psi0.space(), "evolve_schrodinger");
    if (!psi0.is_pure())
        throw InvalidParameterError("evolve_schrodinger requires a pure initial state");

    const int n = hamiltonian.space().dim();
    EvolutionResult result;
    result.times = grid.times();
    result.states.reserve(grid.n_samples);

    const bool is_static = hamiltonian.is_static();
    Matrix h_static;
    if (is_static) h_static = hamiltonian.constant_part();
    Matrix ht(n, n);

    auto rhs = [&](double t, const Vector& y, Vector& dy) {
        dy.resize(n);
        if (is_static) {
            dy.noalias() = h_static * y;
        } else {
            hamiltonian.eval_into(t, ht);
            dy.noalias() = ht * y;
        }
        dy *= Complex(0, -1);
    };

    const CompositeSpace& space = hamiltonian.space();
    result.stats = detail::integrate_dp45(
        rhs, psi0.vector(), result.times, grid.rtol, grid.atol,
        [&](int, double, const Vector& y) {
            result.max_norm_drift = std::max(result.max_norm_drift, std::abs(y.norm() - 1.0));
            Vector copy = y;
            copy.normalize();  // stored states satisfy the state-norm contract
            result.states.push_back(QuantumState::pure(space, std::move(copy)));
        });
    if (result.max_norm_drift > 1e-8)
        throw IntegratorError("norm drift " + detail::sci(result.max_norm_drift) +
                              " exceeds 1e-8; tighten the grid tolerances");
    return result;
}

/// Master-equation evolution. The initial state is coerced to mixed form.
inline EvolutionResult evolve_lindblad(const LindbladProblem& problem, const TimeGrid& grid) {
    grid.validate();
    problem.validate();

    const CompositeSpace& space = problem.hamiltonian.space();
    const int n = space.dim();
    detail::LindbladRhs rhs(problem, true);

    Matrix rho0 = problem.initial_state.density();
    Vector y0 = Eigen::Map<const Vector>(rho0.data(), n * n);

    EvolutionResult result;
    result.times = grid.times();
    result.states.reserve(grid.n_samples);

    result.stats = detail::integrate_dp45(
        [&rhs](double t, const Vector& y, Vector& dy) { rhs(t, y, dy); }, std::move(y0),
        result.times, grid.rtol, grid.atol, [&](int, double, const Vector& y) {
            Eigen::Map<const Matrix> rho(y.data(), n, n);
            result.max_trace_drift =
                std::max(result.max_trace_drift, std::abs(rho.trace() - Complex(1.0)));
            result.max_hermiticity_dev =
                std::max(result.max_hermiticity_dev, (rho - rho.adjoint()).norm());
            result.states.push_back(QuantumState::mixed(space, rho, false));
        });

    double gross = std::max(1e-6, 1e3 * grid.rtol);
    if (result.max_trace_drift > gross)
        throw IntegratorError("trace drift " + detail::sci(result.max_trace_drift) +
                              " signals integrator failure");
    return result;
}

// ---------------------------------------------------------------------------
// Steady state via the vectorized Liouvillian (column-major vec convention).
// ---------------------------------------------------------------------------

namespace detail {

inline Matrix kron_dense(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

}  // namespace detail

/// Dense Liouvillian matrix L with d(vec rho)/dt = L vec(rho).
inline Matrix liouvillian_matrix(const LindbladProblem& problem) {
    problem.validate();
    const int n = problem.hamiltonian.space().dim();
    if (!problem.hamiltonian.is_static())
        throw InvalidParameterError("liouvillian_matrix requires a time-independent problem");
    const Matrix id = Matrix::Identity(n, n);
    const Matrix& h = problem.hamiltonian.constant_part();
    Matrix l = Complex(0, -1) *
               (detail::kron_dense(id, h) - detail::kron_dense(h.transpose(), id));
    for (int i = 0; i < static_cast<int>(problem.collapse_ops.size()); ++i) {
        if (!problem.collapse_ops[i].is_static())
            throw InvalidParameterError("liouvillian_matrix requires static collapse operators");
        Matrix c = problem.collapse_ops[i].constant_part();
        if (problem.feedback_unitary && i == problem.feedback_channel)
            c = problem.feedback_unitary->matrix() * c;
        Matrix cc = c.adjoint() * c;
        l += detail::kron_dense(c.conjugate(), c);
        l -= 0.5 * detail::kron_dense(id, cc);
        l -= 0.5 * detail::kron_dense(cc.transpose(), id);
    }
    return l;
}

struct SteadyState {
    QuantumState state;
    double residual = 0.0;  // ||L vec(rho)||
    bool unique = false;
    int kernel_dim = 0;
};

/// Null space of the vectorized Liouvillian. Singular values below 1e-10
/// relative to the largest are counted as kernel directions.
inline SteadyState steady_state(const LindbladProblem& problem,
                                double kernel_threshold = 1e-10) {
    Matrix l = liouvillian_matrix(problem);
    const int n = problem.hamiltonian.space().dim();
    Eigen::BDCSVD<Matrix> svd(l, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    double cutoff = kernel_threshold * sv[0];
    int kernel_dim = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv[i] < cutoff) ++kernel_dim;

    // pick the kernel direction with the largest trace component
    int best = static_cast<int>(sv.size()) - 1;
    double best_tr = -1.0;
    for (Eigen::Index i = sv.size() - kernel_dim; i < sv.size(); ++i) {
        Eigen::Map<const Matrix> cand(svd.matrixV().col(i).data(), n, n);
        double tr = std::abs(cand.trace());
        if (tr > best_tr) {
            best_tr = tr;
            best = static_cast<int>(i);
        }
    }
    Eigen::Map<const Matrix> raw(svd.matrixV().col(best).data(), n, n);
    Matrix rho = (raw + raw.adjoint()) / 2.0;
    Complex tr = rho.trace();
    if (std::abs(tr) > 1e-12) rho /= tr;

    SteadyState out;
    Vector vec_rho = Eigen::Map<const Vector>(rho.data(), n * n);
    out.residual = (l * vec_rho).norm();
    out.kernel_dim = kernel_dim;
    out.unique = (kernel_dim == 1);
    out.state = QuantumState::mixed(problem.hamiltonian.space(), std::move(rho), false);
    return out;
}

// ---------------------------------------------------------------------------
// Trajectory comparison
// ---------------------------------------------------------------------------

struct Discrepancy {
    double max_abs = 0.0;
    double integrated_abs = 0.0;  // trapezoidal integral of |difference| dt
};

inline Discrepancy compare_models(const EvolutionResult& a, const EvolutionResult& b,
                                  const std::string& observable) {
    if (a.times.size() != b.times.size())
        throw ValidationError("compare_models: time grids have different lengths");
    double span = a.times[a.times.size() - 1] - a.times[0];
    for (Eigen::Index i = 0; i < a.times.size(); ++i)
        if (std::abs(a.times[i] - b.times[i]) > 1e-12 * std::max(1.0, span))
            throw ValidationError("compare_models: time grids differ");
    auto ia = a.observables.find(observable);
    auto ib = b.observables.find(observable);
    if (ia == a.observables.end() || ib == b.observables.end())
        throw LookupError("compare_models: observable '" + observable + "' missing from a run");
    const auto& va = ia->second;
    const auto& vb = ib->second;
    Discrepancy d;
    for (std::size_t i = 0; i < va.size(); ++i) {
        double diff = std::abs(va[i] - vb[i]);
        d.max_abs = std::max(d.max_abs, diff);
        if (i + 1 < va.size()) {
            double next = std::abs(va[i + 1] - vb[i + 1]);
            d.integrated_abs += 0.5 * (diff + next) * (a.times[i + 1] - a.times[i]);
        }
    }
    return d;
}

}  // namespace gsb::dynamics
