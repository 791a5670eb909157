#pragma once

// Model builders: every Hamiltonian, collapse operator, collective operator
// and named state of the Rydberg ground-state-blockade scheme, plus derived
// parameters and the antiblockade spectrum.
//
// Conventions. All frequencies are angular (hbar = 1). Detunings enter with
// a negative sign on the shifted level: -Delta_p |p><p| and -Delta_r |r><r|
// per atom, with the bare two-atom interaction U |rr><rr| on top, so
// <rr|H|rr> = U - 2*Delta_r. Level ordering within an atom is g, e, p, r.

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gsb/qspace.hpp"

namespace gsb::models {

/// Every physical symbol of the two- and three-atom models in one record.
struct ModelParams {
    double rabi_a = 0.0;          // Omega_a, |g> <-> |p> drive
    double rabi_b = 0.0;          // Omega_b, |e> <-> |p> drive
    double rabi_c = 0.0;          // Omega_c, |e> <-> |r> drive
    double detuning_p = 0.0;      // Delta_p > 0 when the p-drives are active
    double detuning_r = 0.0;      // Delta_r > 0 when the r-drive is active
    double interaction_u = 0.0;   // U, Rydberg pair shift
    double gamma_p = 0.0;         // decay rate of |p>
    double gamma_r = 0.0;         // decay rate of |r>
    double cavity_g = 0.0;        // atom-cavity coupling g
    double cavity_kappa = 0.0;    // cavity decay kappa
    double microwave_omega = 0.0; // resonant |g> <-> |e> Rabi frequency
    double feedback_eta = 0.0;    // feedback phase eta (radians)
    int n_atoms = 2;
    int n_fock = 3;               // cavity truncation
    bool stark_compensation = true;
    std::string unit_label = "Omega_c";

    void validate() const {
        if (n_atoms != 2 && n_atoms != 3)
            throw InvalidParameterError("n_atoms must be 2 or 3");
        if (n_fock < 0) throw InvalidParameterError("n_fock must be non-negative");
        if ((rabi_a != 0.0 || rabi_b != 0.0 || cavity_g != 0.0) && detuning_p <= 0.0)
            throw InvalidParameterError("detuning_p must be positive while the p-drives are active");
        if (rabi_c != 0.0 && detuning_r <= 0.0)
            throw InvalidParameterError("detuning_r must be positive while the r-drive is active");
        if (cavity_g > 0.0 && n_fock < 1)
            throw InvalidParameterError("n_fock must be >= 1 when the cavity is coupled");
        for (double rate : {gamma_p, gamma_r, cavity_kappa})
            if (rate < 0.0) throw InvalidParameterError("decay rates must be non-negative");
    }
};

/// The composite quantities the adiabatic eliminations produce.
struct DerivedParams {
    double omega_eff = 0.0;        // Omega_a*Omega_b/Delta_p
    double lambda = 0.0;           // 2*Omega_c^2/Delta_r
    double delta = 0.0;            // U - 2*Delta_r + lambda
    double g_eff = 0.0;            // g*Omega_b/Delta_p
    double gamma_collective = 0.0; // 4*g_eff^2/kappa
    double gamma_eff = 0.0;        // gamma_p*Omega_a*Omega_b/(2*Delta_p^2)

    static DerivedParams from(const ModelParams& p) {
        DerivedParams d;
        if (p.detuning_p > 0.0) {
            d.omega_eff = p.rabi_a * p.rabi_b / p.detuning_p;
            d.g_eff = p.cavity_g * p.rabi_b / p.detuning_p;
            d.gamma_eff = p.gamma_p * p.rabi_a * p.rabi_b / (2.0 * p.detuning_p * p.detuning_p);
        }
        if (p.detuning_r > 0.0) d.lambda = 2.0 * p.rabi_c * p.rabi_c / p.detuning_r;
        d.delta = p.interaction_u - 2.0 * p.detuning_r + d.lambda;
        if (p.cavity_kappa > 0.0) d.gamma_collective = 4.0 * d.g_eff * d.g_eff / p.cavity_kappa;
        return d;
    }
};

/// Eigenstructure of the antiblockade block lambda|ee><rr| + delta|rr><rr|.
struct BlockadeSpectrum {
    double alpha;    // mixing angle, in [0, pi/2]
    double e_plus;   // (delta + sqrt(delta^2 + 4 lambda^2))/2
    double e_minus;  // (delta - sqrt(delta^2 + 4 lambda^2))/2
    double r1;       // |e_plus / (sqrt(2) omega_eff sin alpha)|
    double r2;       // |e_minus / (sqrt(2) omega_eff cos alpha)|
};

inline BlockadeSpectrum blockade_spectrum(double lambda, double delta, double omega_eff) {
    if (omega_eff == 0.0)
        throw InvalidParameterError("blockade_spectrum: omega_eff must be nonzero");
    BlockadeSpectrum s{};
    double root = std::sqrt(delta * delta + 4.0 * lambda * lambda);
    s.e_plus = 0.5 * (delta + root);
    s.e_minus = 0.5 * (delta - root);
    s.alpha = std::atan2(2.0 * lambda, delta + root);
    double sq2 = std::sqrt(2.0) * std::abs(omega_eff);
    s.r1 = std::abs(s.e_plus) / (sq2 * std::sin(s.alpha));
    s.r2 = std::abs(s.e_minus) / (sq2 * std::cos(s.alpha));
    return s;
}

// ---------------------------------------------------------------------------
// Spaces
// ---------------------------------------------------------------------------

inline std::string atom_label(int i) { return "atom" + std::to_string(i + 1); }

/// n atoms with the full level set {g,e,p,r} or the qubit set {g,e}.
inline CompositeSpace atom_space(int n_atoms, bool full_levels = true) {
    std::vector<std::string> levels =
        full_levels ? std::vector<std::string>{"g", "e", "p", "r"}
                    : std::vector<std::string>{"g", "e"};
    std::vector<Subsystem> subs;
    for (int i = 0; i < n_atoms; ++i) subs.push_back({atom_label(i), levels});
    return CompositeSpace(std::move(subs));
}

inline CompositeSpace two_atom_space() { return atom_space(2, true); }
inline CompositeSpace qubit_space(int n_atoms) { return atom_space(n_atoms, false); }

inline CompositeSpace single_atom_space(bool three_level) {
    std::vector<std::string> levels = three_level ? std::vector<std::string>{"g", "e", "p"}
                                                  : std::vector<std::string>{"g", "e"};
    return CompositeSpace({{"atom1", levels}});
}

/// Append a truncated Fock register (levels "0".."n_fock") to an atomic space.
inline CompositeSpace with_cavity(const CompositeSpace& atoms, int n_fock) {
    std::vector<Subsystem> subs = atoms.subsystems();
    std::vector<std::string> fock;
    for (int n = 0; n <= n_fock; ++n) fock.push_back(std::to_string(n));
    subs.push_back({"cavity", std::move(fock)});
    return CompositeSpace(std::move(subs));
}

/// Cavity annihilation operator on a space built by with_cavity().
inline Operator annihilation(const CompositeSpace& space) {
    int which = space.subsystem_index("cavity");
    int d = space.subsystem(which).dim();
    Matrix a = Matrix::Zero(d, d);
    for (int k = 1; k < d; ++k) a(k - 1, k) = std::sqrt(static_cast<double>(k));
    return embed(space, "cavity", a);
}

// ---------------------------------------------------------------------------
// Named states
// ---------------------------------------------------------------------------

namespace states {

using LabelTerm = std::pair<Complex, std::vector<std::string>>;

inline QuantumState make(const CompositeSpace& space, std::vector<LabelTerm> terms) {
    return superposition(space, std::span<const LabelTerm>(terms));
}

inline QuantumState gg(const CompositeSpace& s) { return make(s, {{1.0, {"g", "g"}}}); }
inline QuantumState ee(const CompositeSpace& s) { return make(s, {{1.0, {"e", "e"}}}); }
inline QuantumState rr(const CompositeSpace& s) { return make(s, {{1.0, {"r", "r"}}}); }

/// |T> = (|ge> + |eg>)/sqrt(2)
inline QuantumState triplet(const CompositeSpace& s) {
    return make(s, {{1.0, {"g", "e"}}, {1.0, {"e", "g"}}});
}

/// |S> = (|ge> - |eg>)/sqrt(2)
inline QuantumState singlet(const CompositeSpace& s) {
    return make(s, {{1.0, {"g", "e"}}, {-1.0, {"e", "g"}}});
}

/// |Phi> = (|gp> + |pg>)/sqrt(2)
inline QuantumState phi_gp(const CompositeSpace& s) {
    return make(s, {{1.0, {"g", "p"}}, {1.0, {"p", "g"}}});
}

/// |chi> = (|er> + |re>)/sqrt(2)
inline QuantumState chi_er(const CompositeSpace& s) {
    return make(s, {{1.0, {"e", "r"}}, {1.0, {"r", "e"}}});
}

/// |Psi+> = cos(alpha)|rr> + sin(alpha)|ee>
inline QuantumState psi_plus(const CompositeSpace& s, double alpha) {
    return make(s, {{std::cos(alpha), {"r", "r"}}, {std::sin(alpha), {"e", "e"}}});
}

/// |Psi-> = sin(alpha)|rr> - cos(alpha)|ee>
inline QuantumState psi_minus(const CompositeSpace& s, double alpha) {
    return make(s, {{std::sin(alpha), {"r", "r"}}, {-std::cos(alpha), {"e", "e"}}});
}

inline QuantumState ggg(const CompositeSpace& s) { return make(s, {{1.0, {"g", "g", "g"}}}); }

/// |W> = (|egg> + |geg> + |gge>)/sqrt(3)
inline QuantumState w_state(const CompositeSpace& s) {
    return make(s, {{1.0, {"e", "g", "g"}}, {1.0, {"g", "e", "g"}}, {1.0, {"g", "g", "e"}}});
}

/// |DFS> = (|gge> + |geg> - 2|egg>)/sqrt(6)
inline QuantumState dfs_state(const CompositeSpace& s) {
    return make(s, {{1.0, {"g", "g", "e"}}, {1.0, {"g", "e", "g"}}, {-2.0, {"e", "g", "g"}}});
}

}  // namespace states

// ---------------------------------------------------------------------------
// Model bundles
// ---------------------------------------------------------------------------

/// Time-dependent drive amplitudes replacing the constant Omega_a, Omega_b.
struct DrivePair {
    std::function<Complex(double)> omega_a;
    std::function<Complex(double)> omega_b;
};

enum class FeedbackForm {
    exact,        // exp(-i eta sigma_x^(1))
    conditioned,  // exp(-i eta sigma_x^(1) (x) |g...g><g...g| on the other atoms)
};

/// Hamiltonian + collapse channels + optional jump feedback, ready to evolve.
struct ModelBundle {
    OperatorSchedule hamiltonian;
    std::vector<OperatorSchedule> collapse_ops;
    std::optional<Operator> feedback_unitary;
    int feedback_channel = -1;  // index into collapse_ops the feedback wraps

    const CompositeSpace& space() const { return hamiltonian.space(); }

    /// Collapse operators with the feedback unitary composed in (static only).
    std::vector<Operator> effective_collapse_ops() const {
        std::vector<Operator> out;
        for (int i = 0; i < static_cast<int>(collapse_ops.size()); ++i) {
            Operator c = collapse_ops[i].as_operator();
            if (feedback_unitary && i == feedback_channel) c = *feedback_unitary * c;
            out.push_back(std::move(c));
        }
        return out;
    }
};

/// exp(-i eta X) with X = sigma_x on the {g,e} block of atom 1, optionally
/// conditioned on every other atom sitting in |g>. X^2 is a projector, so the
/// exponential has the closed form (I - P) + cos(eta) P - i sin(eta) X.
inline Operator feedback_unitary(const CompositeSpace& space, double eta, FeedbackForm form) {
    Operator x = transition(space, atom_label(0), "g", "e") +
                 transition(space, atom_label(0), "e", "g");
    Operator p = level_projector(space, atom_label(0), "g") +
                 level_projector(space, atom_label(0), "e");
    if (form == FeedbackForm::conditioned) {
        for (int i = 1; i < space.subsystem_count(); ++i) {
            const auto& label = space.subsystem(i).label;
            if (label == "cavity") continue;
            x = x * level_projector(space, label, "g");
            p = p * level_projector(space, label, "g");
        }
    }
    Operator id = identity(space);
    Matrix u = id.matrix() - p.matrix() + std::cos(eta) * p.matrix() -
               Complex(0, 1) * std::sin(eta) * x.matrix();
    return Operator(space, std::move(u));
}

namespace detail {

inline Operator sum_over_atoms(const CompositeSpace& space, int n_atoms,
                               std::string_view to, std::string_view from) {
    Operator out = transition(space, atom_label(0), to, from);
    for (int i = 1; i < n_atoms; ++i) out = out + transition(space, atom_label(i), to, from);
    return out;
}

inline void add_drive_terms(OperatorSchedule& h, const Operator& raise_op,
                            const std::function<Complex(double)>& amp) {
    h.add_term(amp, raise_op);
    h.add_term([amp](double t) { return std::conj(amp(t)); }, raise_op.dagger());
}

}  // namespace detail

/// Full two-atom Hamiltonian (16-dim): dispersive Raman drives, Rydberg
/// pumping, detunings and the Rydberg pair interaction. With
/// stark_compensation the second-order light shifts of |g> and |e> are
/// cancelled by an exact counter-term.
inline OperatorSchedule full_two_atom_hamiltonian(
    const ModelParams& p, const std::optional<DrivePair>& drive_overrides = {}) {
    p.validate();
    if (p.n_atoms != 2)
        throw InvalidParameterError("full_two_atom_hamiltonian requires n_atoms == 2");
    CompositeSpace space = two_atom_space();

    Operator sum_pg = detail::sum_over_atoms(space, 2, "p", "g");
    Operator sum_pe = detail::sum_over_atoms(space, 2, "p", "e");
    Operator sum_re = detail::sum_over_atoms(space, 2, "r", "e");
    Operator sum_pp = detail::sum_over_atoms(space, 2, "p", "p");
    Operator sum_rr1 = detail::sum_over_atoms(space, 2, "r", "r");
    Operator sum_gg = detail::sum_over_atoms(space, 2, "g", "g");
    Operator sum_ee = detail::sum_over_atoms(space, 2, "e", "e");
    Operator proj_rr = level_projector(space, atom_label(0), "r") *
                       level_projector(space, atom_label(1), "r");

    Matrix h = Matrix::Zero(space.dim(), space.dim());
    Matrix re = p.rabi_c * sum_re.matrix();
    h += re + re.adjoint();
    h -= p.detuning_p * sum_pp.matrix();
    h -= p.detuning_r * sum_rr1.matrix();
    h += p.interaction_u * proj_rr.matrix();
    if (p.stark_compensation && p.detuning_r > 0.0)
        h -= (p.rabi_c * p.rabi_c / p.detuning_r) * sum_ee.matrix();

    OperatorSchedule sched(space, std::move(h), p.unit_label);
    if (!drive_overrides) {
        Matrix drives = p.rabi_a * sum_pg.matrix() + p.rabi_b * sum_pe.matrix();
        Matrix add = drives + drives.adjoint();
        if (p.stark_compensation && p.detuning_p > 0.0) {
            add -= (p.rabi_a * p.rabi_a / p.detuning_p) * sum_gg.matrix();
            add -= (p.rabi_b * p.rabi_b / p.detuning_p) * sum_ee.matrix();
        }
        return OperatorSchedule(space, sched.constant_part() + add, p.unit_label);
    }
    detail::add_drive_terms(sched, sum_pg, drive_overrides->omega_a);
    detail::add_drive_terms(sched, sum_pe, drive_overrides->omega_b);
    if (p.stark_compensation && p.detuning_p > 0.0) {
        auto oa = drive_overrides->omega_a;
        auto ob = drive_overrides->omega_b;
        double dp = p.detuning_p;
        sched.add_term([oa, dp](double t) { return -std::norm(oa(t)) / dp; }, sum_gg);
        sched.add_term([ob, dp](double t) { return -std::norm(ob(t)) / dp; }, sum_ee);
    }
    return sched;
}

/// Effective two-atom Hamiltonian (Raman + antiblockade), hosted on the full
/// 16-dim space with the |p> sector left empty so states and observables are
/// shared with the full model.
inline OperatorSchedule effective_two_atom_hamiltonian(
    const ModelParams& p, const std::optional<DrivePair>& drive_overrides = {}) {
    p.validate();
    if (p.n_atoms != 2)
        throw InvalidParameterError("effective_two_atom_hamiltonian requires n_atoms == 2");
    DerivedParams d = DerivedParams::from(p);
    if (!std::isfinite(d.omega_eff) || !std::isfinite(d.lambda) || !std::isfinite(d.delta))
        throw InvalidParameterError("derived parameters are not finite");
    CompositeSpace space = two_atom_space();

    QuantumState ee = states::ee(space);
    QuantumState rr = states::rr(space);
    Matrix block = d.lambda * (ee.vector() * rr.vector().adjoint());
    Matrix h = block + block.adjoint();
    h += d.delta * (rr.vector() * rr.vector().adjoint());

    Operator sum_ge = detail::sum_over_atoms(space, 2, "g", "e");
    OperatorSchedule sched(space, std::move(h), p.unit_label);
    if (!drive_overrides) {
        Matrix raman = d.omega_eff * sum_ge.matrix();
        return OperatorSchedule(space, sched.constant_part() + raman + raman.adjoint(),
                                p.unit_label);
    }
    auto oa = drive_overrides->omega_a;
    auto ob = drive_overrides->omega_b;
    double dp = p.detuning_p;
    detail::add_drive_terms(sched, sum_ge, [oa, ob, dp](double t) { return oa(t) * ob(t) / dp; });
    return sched;
}

/// Ground-state-blockade Hamiltonian: sqrt(2) Omega_eff |gg><T| + H.c. on the
/// two-qubit {g,e} space. |ee> is fully decoupled.
inline Operator ground_blockade_hamiltonian(const ModelParams& p) {
    DerivedParams d = DerivedParams::from(p);
    CompositeSpace space = qubit_space(2);
    Vector gg = states::gg(space).vector();
    Vector t = states::triplet(space).vector();
    Matrix h = std::sqrt(2.0) * d.omega_eff * (gg * t.adjoint());
    h += h.adjoint().eval();
    return Operator(space, std::move(h), p.unit_label);
}

// ---------------------------------------------------------------------------
// Single atom (quantum state transfer benchmark)
// ---------------------------------------------------------------------------

enum class SingleAtomLevel { full, reduced };

/// Full: three-level {g,e,p} master-equation pieces with decay gamma_p/2 into
/// each ground state. Reduced: two-level Raman model with the effective decay
/// operators R_mp = sqrt(gamma_p/2) |m> (Omega_a/Delta_p <g| + Omega_b/Delta_p <e|).
inline ModelBundle single_atom_model(const ModelParams& p, SingleAtomLevel level) {
    p.validate();
    ModelBundle b;
    if (level == SingleAtomLevel::full) {
        CompositeSpace space = single_atom_space(true);
        Matrix h = Matrix::Zero(3, 3);
        Matrix up = p.rabi_a * transition(space, "atom1", "p", "g").matrix() +
                    p.rabi_b * transition(space, "atom1", "p", "e").matrix();
        h += up + up.adjoint();
        h -= p.detuning_p * level_projector(space, "atom1", "p").matrix();
        b.hamiltonian = OperatorSchedule(space, std::move(h), p.unit_label);
        if (p.gamma_p > 0.0) {
            double amp = std::sqrt(p.gamma_p / 2.0);
            b.collapse_ops.emplace_back(amp * transition(space, "atom1", "g", "p"));
            b.collapse_ops.emplace_back(amp * transition(space, "atom1", "e", "p"));
        }
        return b;
    }
    DerivedParams d = DerivedParams::from(p);
    CompositeSpace space = single_atom_space(false);
    Matrix raman = d.omega_eff * transition(space, "atom1", "g", "e").matrix();
    b.hamiltonian = OperatorSchedule(space, raman + raman.adjoint(), p.unit_label);
    if (p.gamma_p > 0.0) {
        double amp = std::sqrt(p.gamma_p / 2.0);
        for (const char* m : {"g", "e"}) {
            Matrix r = amp * (p.rabi_a / p.detuning_p) * transition(space, "atom1", m, "g").matrix() +
                       amp * (p.rabi_b / p.detuning_p) * transition(space, "atom1", m, "e").matrix();
            b.collapse_ops.emplace_back(Operator(space, std::move(r)));
        }
    }
    return b;
}

namespace detail {

/// Effective decay operator schedules R_mp(t) for each atom of a qubit-like
/// space, with time-dependent drive amplitudes.
inline void add_effective_decay(std::vector<OperatorSchedule>& out, const CompositeSpace& space,
                                int n_atoms, double gamma_p, double detuning_p,
                                const DrivePair& drives) {
    if (gamma_p <= 0.0) return;
    double amp = std::sqrt(gamma_p / 2.0);
    for (int i = 0; i < n_atoms; ++i) {
        for (const char* m : {"g", "e"}) {
            OperatorSchedule r = OperatorSchedule::zero(space);
            auto oa = drives.omega_a;
            auto ob = drives.omega_b;
            double dp = detuning_p;
            r.add_term([oa, amp, dp](double t) { return amp * oa(t) / dp; },
                       transition(space, atom_label(i), m, "g"));
            r.add_term([ob, amp, dp](double t) { return amp * ob(t) / dp; },
                       transition(space, atom_label(i), m, "e"));
            out.push_back(std::move(r));
        }
    }
}

}  // namespace detail

/// Dissipative two-atom SAP model: effective Hamiltonian with time-dependent
/// drives plus the per-atom effective decay operators, all on the 16-dim
/// space. Rydberg decay (gamma_r > 0) attaches as sqrt(gamma_r)|e><r| per atom.
inline ModelBundle two_atom_sap_model(const ModelParams& p, const DrivePair& drives) {
    ModelBundle b;
    b.hamiltonian = effective_two_atom_hamiltonian(p, drives);
    const CompositeSpace& space = b.hamiltonian.space();
    detail::add_effective_decay(b.collapse_ops, space, 2, p.gamma_p, p.detuning_p, drives);
    if (p.gamma_r > 0.0)
        for (int i = 0; i < 2; ++i)
            b.collapse_ops.emplace_back(std::sqrt(p.gamma_r) *
                                        transition(space, atom_label(i), "e", "r"));
    return b;
}

// ---------------------------------------------------------------------------
// Cavity + feedback models
// ---------------------------------------------------------------------------

enum class CavityLevel {
    full,              // four-level atoms x Fock, all decay channels
    blocked,           // ground-state-blockade Hamiltonian x Fock, cavity decay
    reduced,           // atoms only: H = w(J+ + J-), collapse sqrt(Gamma) J-
    reduced_feedback,  // reduced + feedback unitary inside the jump
};

/// Collective lowering operator |g..g>(sum_i <e_i|) restricted to the
/// single-excitation sector (the ground-state-blockade form).
inline Operator collective_lowering(const CompositeSpace& space, int n_atoms) {
    Matrix m = Matrix::Zero(space.dim(), space.dim());
    for (int i = 0; i < n_atoms; ++i) {
        Operator term = transition(space, atom_label(i), "g", "e");
        for (int j = 0; j < n_atoms; ++j) {
            if (j == i) continue;
            term = term * level_projector(space, atom_label(j), "g");
        }
        m += term.matrix();
    }
    return Operator(space, std::move(m));
}

/// Unrestricted collective lowering sum_i |g><e|_i (the lambda = 0 reading of
/// the no-blockade comparison).
inline Operator collective_lowering_full(const CompositeSpace& space, int n_atoms) {
    return detail::sum_over_atoms(space, n_atoms, "g", "e");
}

inline ModelBundle cavity_feedback_model(const ModelParams& p, CavityLevel level,
                                         FeedbackForm form = FeedbackForm::exact) {
    p.validate();
    DerivedParams d = DerivedParams::from(p);
    ModelBundle b;
    const int n = p.n_atoms;

    if (level == CavityLevel::reduced || level == CavityLevel::reduced_feedback) {
        CompositeSpace space = qubit_space(n);
        Operator jm = collective_lowering(space, n);
        Matrix h = p.microwave_omega * (jm.matrix() + jm.matrix().adjoint());
        b.hamiltonian = OperatorSchedule(space, std::move(h), p.unit_label);
        b.collapse_ops.emplace_back(std::sqrt(d.gamma_collective) * jm);
        if (level == CavityLevel::reduced_feedback) {
            b.feedback_unitary = feedback_unitary(space, p.feedback_eta, form);
            b.feedback_channel = 0;
        }
        return b;
    }

    if (p.n_fock < 1)
        throw InvalidParameterError("cavity levels require n_fock >= 1");

    if (level == CavityLevel::blocked) {
        CompositeSpace space = with_cavity(qubit_space(n), p.n_fock);
        Operator jm = collective_lowering(space, n);
        Operator a = annihilation(space);
        Matrix h = d.g_eff * (jm.matrix() * a.matrix().adjoint()) +
                   p.microwave_omega * jm.matrix();
        h += h.adjoint().eval();
        b.hamiltonian = OperatorSchedule(space, std::move(h), p.unit_label);
        if (p.cavity_kappa > 0.0) {
            b.collapse_ops.emplace_back(std::sqrt(p.cavity_kappa) * a);
            if (p.feedback_eta != 0.0) {
                b.feedback_unitary = feedback_unitary(space, p.feedback_eta, form);
                b.feedback_channel = 0;
            }
        }
        return b;
    }

    // full: Eq.-(19)-level model on four-level atoms x Fock
    CompositeSpace space = with_cavity(atom_space(n, true), p.n_fock);
    Operator a = annihilation(space);
    Matrix h = Matrix::Zero(space.dim(), space.dim());
    Matrix up = Matrix::Zero(space.dim(), space.dim());
    for (int i = 0; i < n; ++i) {
        up += p.cavity_g * (transition(space, atom_label(i), "p", "g").matrix() * a.matrix());
        up += p.rabi_b * transition(space, atom_label(i), "p", "e").matrix();
        up += p.rabi_c * transition(space, atom_label(i), "r", "e").matrix();
        up += p.microwave_omega * transition(space, atom_label(i), "g", "e").matrix();
    }
    h += up + up.adjoint();
    for (int i = 0; i < n; ++i) {
        h -= p.detuning_p * level_projector(space, atom_label(i), "p").matrix();
        h -= p.detuning_r * level_projector(space, atom_label(i), "r").matrix();
    }
    if (n == 2) {
        Operator proj_rr = level_projector(space, atom_label(0), "r") *
                           level_projector(space, atom_label(1), "r");
        h += p.interaction_u * proj_rr.matrix();
    }
    if (p.stark_compensation) {
        Matrix nph = a.matrix().adjoint() * a.matrix();
        for (int i = 0; i < n; ++i) {
            if (p.detuning_p > 0.0) {
                h -= (p.cavity_g * p.cavity_g / p.detuning_p) *
                     (level_projector(space, atom_label(i), "g").matrix() * nph);
                h -= (p.rabi_b * p.rabi_b / p.detuning_p) *
                     level_projector(space, atom_label(i), "e").matrix();
            }
            if (p.detuning_r > 0.0)
                h -= (p.rabi_c * p.rabi_c / p.detuning_r) *
                     level_projector(space, atom_label(i), "e").matrix();
        }
    }
    b.hamiltonian = OperatorSchedule(space, std::move(h), p.unit_label);
    if (p.gamma_p > 0.0) {
        double amp = std::sqrt(p.gamma_p / 2.0);
        for (int i = 0; i < n; ++i) {
            b.collapse_ops.emplace_back(amp * transition(space, atom_label(i), "g", "p"));
            b.collapse_ops.emplace_back(amp * transition(space, atom_label(i), "e", "p"));
        }
    }
    if (p.gamma_r > 0.0)
        for (int i = 0; i < n; ++i)
            b.collapse_ops.emplace_back(std::sqrt(p.gamma_r) *
                                        transition(space, atom_label(i), "e", "r"));
    if (p.cavity_kappa > 0.0) {
        b.collapse_ops.emplace_back(std::sqrt(p.cavity_kappa) * a);
        if (p.feedback_eta != 0.0) {
            b.feedback_unitary = feedback_unitary(space, p.feedback_eta, form);
            b.feedback_channel = static_cast<int>(b.collapse_ops.size()) - 1;
        }
    }
    return b;
}

/// Effective atomic decay operators of the feedback regime, one pair per
/// atom: R'_gp = (Omega_b/Delta_p) sqrt(gamma_p/2) |g><e| and
/// R'_ep = (Omega_b/Delta_p) sqrt(gamma_p/2) |e><e|.
inline std::vector<OperatorSchedule> effective_feedback_decay_ops(const ModelParams& p,
                                                                  const CompositeSpace& space) {
    std::vector<OperatorSchedule> out;
    if (p.gamma_p <= 0.0) return out;
    double c = (p.rabi_b / p.detuning_p) * std::sqrt(p.gamma_p / 2.0);
    for (int i = 0; i < p.n_atoms; ++i) {
        out.emplace_back(c * transition(space, atom_label(i), "g", "e"));
        out.emplace_back(c * transition(space, atom_label(i), "e", "e"));
    }
    return out;
}

/// The lambda = 0 reading of the no-blockade comparison: the reduced feedback
/// master equation built on the unrestricted collective lowering operator.
inline ModelBundle no_blockade_reduced_feedback(const ModelParams& p,
                                                FeedbackForm form = FeedbackForm::exact) {
    p.validate();
    DerivedParams d = DerivedParams::from(p);
    CompositeSpace space = qubit_space(p.n_atoms);
    Operator jm = collective_lowering_full(space, p.n_atoms);
    Matrix h = p.microwave_omega * (jm.matrix() + jm.matrix().adjoint());
    ModelBundle b;
    b.hamiltonian = OperatorSchedule(space, std::move(h), p.unit_label);
    b.collapse_ops.emplace_back(std::sqrt(d.gamma_collective) * jm);
    b.feedback_unitary = feedback_unitary(space, p.feedback_eta, form);
    b.feedback_channel = 0;
    return b;
}

/// The reduced feedback master equation restricted to its invariant blockade
/// sector {|gg>, |T>, |S>}. On the full two-qubit space |ee> is trivially dark
/// (never reached from the ground manifold), so kernel counting for the
/// uniqueness claim is done on this sector.
inline ModelBundle reduced_feedback_blockade_sector(const ModelParams& p) {
    DerivedParams d = DerivedParams::from(p);
    CompositeSpace space({{"pair", {"gg", "T", "S"}}});
    Matrix jm = Matrix::Zero(3, 3);
    jm(0, 1) = std::sqrt(2.0);  // J- = sqrt(2)|gg><T|
    Matrix h = p.microwave_omega * (jm + jm.adjoint());
    ModelBundle b;
    b.hamiltonian = OperatorSchedule(space, std::move(h), p.unit_label);
    // U_fb J- maps |T> to cos(eta)|gg> - i sin(eta)(|T> - |S>)/sqrt(2), which
    // stays inside the sector; exact and conditioned forms agree on range(J-).
    Matrix c = Matrix::Zero(3, 3);
    double eta = p.feedback_eta;
    c(0, 1) = std::sqrt(2.0) * std::cos(eta);
    c(1, 1) = Complex(0.0, -std::sin(eta));
    c(2, 1) = Complex(0.0, std::sin(eta));
    b.collapse_ops.emplace_back(Operator(space, std::sqrt(d.gamma_collective) * c));
    return b;
}

// ---------------------------------------------------------------------------
// Three-atom variants
// ---------------------------------------------------------------------------

enum class ThreeAtomVariant { sap_effective, feedback_reduced, feedback_blocked_cavity };

inline ModelBundle three_atom_models(const ModelParams& p, ThreeAtomVariant variant,
                                     const std::optional<DrivePair>& drives = {},
                                     FeedbackForm form = FeedbackForm::exact) {
    p.validate();
    if (p.n_atoms != 3)
        throw InvalidParameterError("three_atom_models requires n_atoms == 3");

    if (variant == ThreeAtomVariant::feedback_reduced)
        return cavity_feedback_model(p, CavityLevel::reduced_feedback, form);
    if (variant == ThreeAtomVariant::feedback_blocked_cavity)
        return cavity_feedback_model(p, CavityLevel::blocked, form);

    // sap_effective: sqrt(3) (Omega_a Omega_b / Delta_p) |ggg><W| + H.c.
    CompositeSpace space = qubit_space(3);
    Vector ggg = states::ggg(space).vector();
    Vector w = states::w_state(space).vector();
    Operator coupling(space, ggg * w.adjoint());
    ModelBundle b;
    if (drives) {
        OperatorSchedule h = OperatorSchedule::zero(space);
        auto oa = drives->omega_a;
        auto ob = drives->omega_b;
        double dp = p.detuning_p;
        detail::add_drive_terms(
            h, coupling, [oa, ob, dp](double t) { return std::sqrt(3.0) * oa(t) * ob(t) / dp; });
        b.hamiltonian = std::move(h);
        detail::add_effective_decay(b.collapse_ops, space, 3, p.gamma_p, p.detuning_p, *drives);
    } else {
        DerivedParams d = DerivedParams::from(p);
        Matrix h = std::sqrt(3.0) * d.omega_eff * coupling.matrix();
        h += h.adjoint().eval();
        b.hamiltonian = OperatorSchedule(space, std::move(h), p.unit_label);
        DrivePair constant{[oa = p.rabi_a](double) { return Complex(oa); },
                           [ob = p.rabi_b](double) { return Complex(ob); }};
        detail::add_effective_decay(b.collapse_ops, space, 3, p.gamma_p, p.detuning_p, constant);
    }
    return b;
}

}  // namespace gsb::models
