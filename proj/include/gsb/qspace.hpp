#pragma once

// Composite Hilbert-space bookkeeping and dense complex operator algebra.
//
// Subsystem ordering is declaration order; a basis index is row-major over
// subsystem levels (first subsystem varies slowest). Dimensions here stay in
// the tens, so everything is dense.

#include <complex>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "gsb/errors.hpp"

namespace gsb {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

/// Numerical slack used by state/operator validation. The defaults are the
/// library-wide contract; experiment configs may override the global copy.
struct Tolerances {
    double algebra = 1e-12;      // operator identities, relative
    double state_norm = 1e-10;   // pure-state norm deviation
    double trace = 1e-9;         // density-matrix trace deviation
    double hermiticity = 1e-10;  // density-matrix Hermiticity
    double positivity = 1e-8;    // allowed negative-eigenvalue slack
};

inline Tolerances& tolerances() {
    static Tolerances t;
    return t;
}

struct Subsystem {
    std::string label;
    std::vector<std::string> levels;

    int dim() const { return static_cast<int>(levels.size()); }
};

class CompositeSpace {
public:
    CompositeSpace() = default;

    explicit CompositeSpace(std::vector<Subsystem> subsystems)
        : subs_(std::move(subsystems)) {
        dim_ = 1;
        for (const auto& s : subs_) {
            if (s.levels.empty())
                throw InvalidParameterError("subsystem '" + s.label + "' has no levels");
            for (std::size_t i = 0; i < s.levels.size(); ++i)
                for (std::size_t j = i + 1; j < s.levels.size(); ++j)
                    if (s.levels[i] == s.levels[j])
                        throw InvalidParameterError("duplicate level '" + s.levels[i] +
                                                    "' in subsystem '" + s.label + "'");
            dim_ *= s.dim();
        }
    }

    int dim() const { return dim_; }
    int subsystem_count() const { return static_cast<int>(subs_.size()); }
    const Subsystem& subsystem(int i) const { return subs_.at(i); }
    const std::vector<Subsystem>& subsystems() const { return subs_; }

    int subsystem_index(std::string_view label) const {
        for (int i = 0; i < subsystem_count(); ++i)
            if (subs_[i].label == label) return i;
        throw LookupError("unknown subsystem '" + std::string(label) + "'");
    }

    int level_index(int sub, std::string_view level) const {
        const auto& s = subs_.at(sub);
        for (int i = 0; i < s.dim(); ++i)
            if (s.levels[i] == level) return i;
        throw LookupError("unknown level '" + std::string(level) + "' in subsystem '" +
                          s.label + "'");
    }

    /// Row-major basis index from one level index per subsystem.
    int basis_index(std::span<const int> levels) const {
        if (static_cast<int>(levels.size()) != subsystem_count())
            throw DimensionError("expected one level per subsystem");
        int idx = 0;
        for (int i = 0; i < subsystem_count(); ++i) {
            if (levels[i] < 0 || levels[i] >= subs_[i].dim())
                throw DimensionError("level index out of range for subsystem '" +
                                     subs_[i].label + "'");
            idx = idx * subs_[i].dim() + levels[i];
        }
        return idx;
    }

    int basis_index(std::span<const std::string> labels) const {
        if (static_cast<int>(labels.size()) != subsystem_count())
            throw DimensionError("expected one level label per subsystem");
        std::vector<int> lv(labels.size());
        for (int i = 0; i < subsystem_count(); ++i) lv[i] = level_index(i, labels[i]);
        return basis_index(lv);
    }

    int basis_index(std::initializer_list<std::string> labels) const {
        std::vector<std::string> v(labels);
        return basis_index(std::span<const std::string>(v));
    }

    std::vector<int> basis_levels(int index) const {
        std::vector<int> lv(subsystem_count());
        for (int i = subsystem_count() - 1; i >= 0; --i) {
            lv[i] = index % subs_[i].dim();
            index /= subs_[i].dim();
        }
        return lv;
    }

    std::string basis_label(int index) const {
        auto lv = basis_levels(index);
        std::string out;
        for (int i = 0; i < subsystem_count(); ++i) {
            if (i) out += ",";
            out += subs_[i].levels[lv[i]];
        }
        return out;
    }

    bool operator==(const CompositeSpace& other) const {
        if (dim_ != other.dim_ || subs_.size() != other.subs_.size()) return false;
        for (std::size_t i = 0; i < subs_.size(); ++i)
            if (subs_[i].label != other.subs_[i].label || subs_[i].levels != other.subs_[i].levels)
                return false;
        return true;
    }
    bool operator!=(const CompositeSpace& other) const { return !(*this == other); }

private:
    std::vector<Subsystem> subs_;
    int dim_ = 1;
};

inline void require_same_space(const CompositeSpace& a, const CompositeSpace& b,
                               const char* what) {
    if (a != b) throw SpaceMismatchError(std::string(what) + ": operands live on different spaces");
}

/// Dense complex operator on a composite space. Hamiltonians are expressed in
/// angular-frequency units (hbar = 1); `unit` names the frequency scale.
class Operator {
public:
    Operator() = default;

    Operator(CompositeSpace space, Matrix m, std::string unit = {})
        : space_(std::move(space)), m_(std::move(m)), unit_(std::move(unit)) {
        if (m_.rows() != m_.cols() || m_.rows() != space_.dim())
            throw DimensionError("operator matrix is " + std::to_string(m_.rows()) + "x" +
                                 std::to_string(m_.cols()) + " but space dimension is " +
                                 std::to_string(space_.dim()));
    }

    const CompositeSpace& space() const { return space_; }
    const Matrix& matrix() const { return m_; }
    const std::string& unit() const { return unit_; }

    Operator dagger() const { return Operator(space_, m_.adjoint(), unit_); }

    bool is_hermitian(double rel_tol) const {
        double scale = m_.norm();
        if (scale == 0.0) return true;
        return (m_ - m_.adjoint()).norm() <= rel_tol * scale;
    }

    Operator operator+(const Operator& o) const {
        require_same_space(space_, o.space_, "operator sum");
        return Operator(space_, m_ + o.m_, unit_);
    }
    Operator operator-(const Operator& o) const {
        require_same_space(space_, o.space_, "operator difference");
        return Operator(space_, m_ - o.m_, unit_);
    }
    Operator operator*(const Operator& o) const {
        require_same_space(space_, o.space_, "operator product");
        return Operator(space_, m_ * o.m_, unit_);
    }
    friend Operator operator*(Complex c, const Operator& o) {
        return Operator(o.space_, c * o.m_, o.unit_);
    }
    friend Operator operator*(double c, const Operator& o) {
        return Operator(o.space_, c * o.m_, o.unit_);
    }

private:
    CompositeSpace space_;
    Matrix m_;
    std::string unit_;
};

inline Operator identity(const CompositeSpace& space) {
    return Operator(space, Matrix::Identity(space.dim(), space.dim()));
}

/// Kronecker-product extension of a local operator with identity elsewhere.
inline Operator embed(const CompositeSpace& space, std::string_view subsystem,
                      const Matrix& local) {
    int which = space.subsystem_index(subsystem);
    int d = space.subsystem(which).dim();
    if (local.rows() != d || local.cols() != d)
        throw DimensionError("local operator is " + std::to_string(local.rows()) + "x" +
                             std::to_string(local.cols()) + " but subsystem '" +
                             std::string(subsystem) + "' has dimension " + std::to_string(d));
    Matrix out = Matrix::Identity(1, 1);
    for (int i = 0; i < space.subsystem_count(); ++i) {
        const Matrix& factor = (i == which)
                                   ? local
                                   : static_cast<const Matrix&>(Matrix::Identity(
                                         space.subsystem(i).dim(), space.subsystem(i).dim()));
        Matrix next(out.rows() * factor.rows(), out.cols() * factor.cols());
        for (int r = 0; r < out.rows(); ++r)
            for (int c = 0; c < out.cols(); ++c)
                next.block(r * factor.rows(), c * factor.cols(), factor.rows(), factor.cols()) =
                    out(r, c) * factor;
        out = std::move(next);
    }
    return Operator(space, std::move(out));
}

/// |a><b| on one subsystem, extended by identity: the building block of every
/// model Hamiltonian and collapse operator.
inline Operator transition(const CompositeSpace& space, std::string_view subsystem,
                           std::string_view to_level, std::string_view from_level) {
    int which = space.subsystem_index(subsystem);
    int d = space.subsystem(which).dim();
    Matrix local = Matrix::Zero(d, d);
    local(space.level_index(which, to_level), space.level_index(which, from_level)) = 1.0;
    return embed(space, subsystem, local);
}

inline Operator level_projector(const CompositeSpace& space, std::string_view subsystem,
                                std::string_view level) {
    return transition(space, subsystem, level, level);
}

/// Pure (vector) or mixed (density matrix) state on a composite space.
class QuantumState {
public:
    QuantumState() = default;

    static QuantumState pure(CompositeSpace space, Vector amplitudes) {
        if (amplitudes.size() != space.dim())
            throw DimensionError("state vector length does not match space dimension");
        double n = amplitudes.norm();
        if (std::abs(n - 1.0) > tolerances().state_norm)
            throw InvalidParameterError("pure state norm deviates from 1 by " +
                                        std::to_string(std::abs(n - 1.0)));
        QuantumState s;
        s.space_ = std::move(space);
        s.data_ = std::move(amplitudes);
        return s;
    }

    static QuantumState mixed(CompositeSpace space, Matrix rho, bool validate = true) {
        if (rho.rows() != rho.cols() || rho.rows() != space.dim())
            throw DimensionError("density matrix does not match space dimension");
        if (validate) {
            double tr_dev = std::abs(rho.trace() - Complex(1.0));
            if (tr_dev > tolerances().trace)
                throw InvalidParameterError("density-matrix trace deviates from 1 by " +
                                            std::to_string(tr_dev));
            if ((rho - rho.adjoint()).norm() > tolerances().hermiticity * std::max(1.0, rho.norm()))
                throw InvalidParameterError("density matrix is not Hermitian");
            Eigen::SelfAdjointEigenSolver<Matrix> es((rho + rho.adjoint()) / 2.0,
                                                     Eigen::EigenvaluesOnly);
            if (es.eigenvalues().minCoeff() < -tolerances().positivity)
                throw InvalidParameterError("density matrix has eigenvalue " +
                                            std::to_string(es.eigenvalues().minCoeff()));
        }
        QuantumState s;
        s.space_ = std::move(space);
        s.data_ = std::move(rho);
        return s;
    }

    bool is_pure() const { return std::holds_alternative<Vector>(data_); }
    const CompositeSpace& space() const { return space_; }

    const Vector& vector() const {
        if (!is_pure()) throw InvalidParameterError("state is mixed, no amplitude vector");
        return std::get<Vector>(data_);
    }

    /// Density matrix view; materializes |psi><psi| for pure states.
    Matrix density() const {
        if (is_pure()) {
            const Vector& v = std::get<Vector>(data_);
            return v * v.adjoint();
        }
        return std::get<Matrix>(data_);
    }

    QuantumState to_mixed() const {
        if (!is_pure()) return *this;
        return mixed(space_, density(), false);
    }

private:
    CompositeSpace space_;
    std::variant<Vector, Matrix> data_;
};

/// Product basis state from one level label per subsystem.
inline QuantumState basis_ket(const CompositeSpace& space,
                              std::span<const std::string> labels) {
    int idx = space.basis_index(labels);
    Vector v = Vector::Zero(space.dim());
    v[idx] = 1.0;
    return QuantumState::pure(space, std::move(v));
}

inline QuantumState basis_ket(const CompositeSpace& space,
                              std::initializer_list<std::string> labels) {
    std::vector<std::string> v(labels);
    return basis_ket(space, std::span<const std::string>(v));
}

/// Normalized superposition of basis kets: sum_k amp_k |labels_k>.
inline QuantumState superposition(
    const CompositeSpace& space,
    std::span<const std::pair<Complex, std::vector<std::string>>> terms) {
    Vector v = Vector::Zero(space.dim());
    for (const auto& [amp, labels] : terms)
        v[space.basis_index(std::span<const std::string>(labels))] += amp;
    v.normalize();
    return QuantumState::pure(space, std::move(v));
}

/// <psi|A|psi> for pure states, Tr(rho A) for mixed ones.
inline Complex expectation(const QuantumState& state, const Operator& op) {
    require_same_space(state.space(), op.space(), "expectation");
    if (state.is_pure()) {
        const Vector& v = state.vector();
        return v.dot(op.matrix() * v);
    }
    return (state.density() * op.matrix()).trace();
}

/// Reduced density operator over the kept subsystems (in their original order).
inline QuantumState partial_trace(const QuantumState& state,
                                  std::span<const std::string> keep) {
    if (keep.empty()) throw InvalidParameterError("partial_trace: keep set is empty");
    const CompositeSpace& space = state.space();
    std::vector<bool> kept(space.subsystem_count(), false);
    for (const auto& label : keep) kept[space.subsystem_index(label)] = true;

    std::vector<Subsystem> keep_subs, trace_subs;
    std::vector<int> keep_idx, trace_idx;
    for (int i = 0; i < space.subsystem_count(); ++i) {
        if (kept[i]) {
            keep_subs.push_back(space.subsystem(i));
            keep_idx.push_back(i);
        } else {
            trace_subs.push_back(space.subsystem(i));
            trace_idx.push_back(i);
        }
    }
    CompositeSpace reduced_space(keep_subs);
    int dk = reduced_space.dim();
    int dt = space.dim() / dk;

    Matrix rho = state.density();
    Matrix out = Matrix::Zero(dk, dk);
    // Walk all (kept_i, kept_j, traced) multi-index combinations.
    std::vector<int> full_i(space.subsystem_count()), full_j(space.subsystem_count());
    for (int ki = 0; ki < dk; ++ki) {
        auto lv_i = reduced_space.basis_levels(ki);
        for (int kj = 0; kj < dk; ++kj) {
            auto lv_j = reduced_space.basis_levels(kj);
            Complex sum = 0.0;
            for (int tr = 0; tr < dt; ++tr) {
                int rem = tr;
                for (int s = static_cast<int>(trace_idx.size()) - 1; s >= 0; --s) {
                    full_i[trace_idx[s]] = rem % trace_subs[s].dim();
                    full_j[trace_idx[s]] = full_i[trace_idx[s]];
                    rem /= trace_subs[s].dim();
                }
                for (std::size_t s = 0; s < keep_idx.size(); ++s) {
                    full_i[keep_idx[s]] = lv_i[s];
                    full_j[keep_idx[s]] = lv_j[s];
                }
                sum += rho(space.basis_index(full_i), space.basis_index(full_j));
            }
            out(ki, kj) = sum;
        }
    }
    return QuantumState::mixed(std::move(reduced_space), std::move(out), false);
}

inline QuantumState partial_trace(const QuantumState& state,
                                  std::initializer_list<std::string> keep) {
    std::vector<std::string> v(keep);
    return partial_trace(state, std::span<const std::string>(v));
}

// ---------------------------------------------------------------------------
// Time-dependent operators: A(t) = constant + sum_j f_j(t) * M_j. Model
// builders return these; the integrator evaluates them at its own times.
// ---------------------------------------------------------------------------

class OperatorSchedule {
public:
    struct Term {
        std::function<Complex(double)> coeff;
        Matrix matrix;
    };

    OperatorSchedule() = default;

    explicit OperatorSchedule(Operator constant)
        : space_(constant.space()), constant_(constant.matrix()), unit_(constant.unit()) {}

    OperatorSchedule(CompositeSpace space, Matrix constant, std::string unit = {})
        : space_(std::move(space)), constant_(std::move(constant)), unit_(std::move(unit)) {
        if (constant_.rows() != space_.dim() || constant_.cols() != space_.dim())
            throw DimensionError("schedule constant part does not match space dimension");
    }

    static OperatorSchedule zero(const CompositeSpace& space) {
        return OperatorSchedule(space, Matrix::Zero(space.dim(), space.dim()));
    }

    void add_term(std::function<Complex(double)> coeff, const Operator& op) {
        require_same_space(space_, op.space(), "schedule term");
        terms_.push_back({std::move(coeff), op.matrix()});
    }

    bool is_static() const { return terms_.empty(); }
    const CompositeSpace& space() const { return space_; }
    const Matrix& constant_part() const { return constant_; }
    const std::vector<Term>& terms() const { return terms_; }
    const std::string& unit() const { return unit_; }

    Matrix at(double t) const {
        Matrix out = constant_;
        for (const auto& term : terms_) out += term.coeff(t) * term.matrix;
        return out;
    }

    void eval_into(double t, Matrix& out) const {
        out = constant_;
        for (const auto& term : terms_) out.noalias() += term.coeff(t) * term.matrix;
    }

    Operator as_operator() const {
        if (!is_static())
            throw InvalidParameterError("schedule is time-dependent, not a single operator");
        return Operator(space_, constant_, unit_);
    }

private:
    CompositeSpace space_;
    Matrix constant_;
    std::vector<Term> terms_;
    std::string unit_;
};

}  // namespace gsb
