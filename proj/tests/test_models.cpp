#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <unsupported/Eigen/MatrixFunctions>

#include "gsb/analysis.hpp"
#include "gsb/dynamics.hpp"
#include "gsb/models.hpp"

using namespace gsb;
using namespace gsb::models;
using Catch::Approx;

namespace {

std::mt19937 rng(7041);

ModelParams generic_params() {
    ModelParams p;
    p.rabi_a = 0.3;
    p.rabi_b = 0.45;
    p.rabi_c = 1.0;
    p.detuning_p = 50.0;
    p.detuning_r = 20.0;
    p.interaction_u = 37.0;
    return p;
}

double rand_in(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace

TEST_CASE("full Hamiltonian with only U nonzero has a single matrix element") {
    ModelParams p;
    p.interaction_u = 1.0;
    Operator h = full_two_atom_hamiltonian(p).as_operator();
    CompositeSpace space = h.space();
    int rr = space.basis_index({"r", "r"});
    for (int i = 0; i < 16; ++i)
        for (int j = 0; j < 16; ++j) {
            if (i == rr && j == rr)
                REQUIRE(h.matrix()(i, j).real() == Approx(1.0));  // = U - 2*Delta_r at Delta_r = 0
            else
                REQUIRE(std::abs(h.matrix()(i, j)) == 0.0);
        }
}

TEST_CASE("full Hamiltonian matrix elements read off the level scheme") {
    ModelParams p = generic_params();
    p.stark_compensation = false;
    Operator h = full_two_atom_hamiltonian(p).as_operator();
    CompositeSpace space = h.space();
    int gg = space.basis_index({"g", "g"});
    int pg = space.basis_index({"p", "g"});
    int rr = space.basis_index({"r", "r"});
    REQUIRE(h.matrix()(pg, gg).real() == Approx(p.rabi_a));
    REQUIRE(h.matrix()(rr, rr).real() == Approx(p.interaction_u - 2 * p.detuning_r));

    p.stark_compensation = true;
    Operator hc = full_two_atom_hamiltonian(p).as_operator();
    REQUIRE(hc.matrix()(rr, rr).real() == Approx(p.interaction_u - 2 * p.detuning_r));
    REQUIRE(hc.matrix()(pg, gg).real() == Approx(p.rabi_a));
}

TEST_CASE("every constructed Hamiltonian is Hermitian") {
    ModelParams p = generic_params();
    p.gamma_p = 0.1;
    p.microwave_omega = 0.7;
    p.cavity_g = 0.5;
    p.cavity_kappa = 2.0;
    p.feedback_eta = -1.1;
    auto check = [](const OperatorSchedule& h) {
        Operator op(h.space(), h.at(0.37));
        REQUIRE(op.is_hermitian(1e-12));
    };
    check(full_two_atom_hamiltonian(p));
    check(effective_two_atom_hamiltonian(p));
    check(OperatorSchedule(ground_blockade_hamiltonian(p)));
    check(single_atom_model(p, SingleAtomLevel::full).hamiltonian);
    check(single_atom_model(p, SingleAtomLevel::reduced).hamiltonian);
    for (auto level : {CavityLevel::full, CavityLevel::blocked, CavityLevel::reduced,
                       CavityLevel::reduced_feedback})
        check(cavity_feedback_model(p, level).hamiltonian);
    ModelParams p3 = p;
    p3.n_atoms = 3;
    for (auto v : {ThreeAtomVariant::sap_effective, ThreeAtomVariant::feedback_reduced,
                   ThreeAtomVariant::feedback_blocked_cavity})
        check(three_atom_models(p3, v).hamiltonian);
}

TEST_CASE("effective Hamiltonian: antiblockade block diagonalizes to +-lambda at Delta=0") {
    ModelParams p;
    p.rabi_a = p.rabi_b = 1.0;
    p.detuning_p = 100.0;              // omega_eff = 0.01
    p.rabi_c = 1.0;
    p.detuning_r = 20.0;               // lambda = 0.1 = 10*omega_eff
    p.interaction_u = 2 * 20.0 - 0.1;  // Delta = 0
    DerivedParams d = DerivedParams::from(p);
    REQUIRE(d.lambda == Approx(10 * d.omega_eff));
    REQUIRE(d.delta == Approx(0.0).margin(1e-12));

    Operator h = effective_two_atom_hamiltonian(p).as_operator();
    CompositeSpace space = h.space();
    int ee = space.basis_index({"e", "e"});
    int rr = space.basis_index({"r", "r"});
    Matrix block(2, 2);
    block << h.matrix()(ee, ee), h.matrix()(ee, rr), h.matrix()(rr, ee), h.matrix()(rr, rr);
    Eigen::SelfAdjointEigenSolver<Matrix> es(block);
    REQUIRE(es.eigenvalues()[0] == Approx(-10 * d.omega_eff));
    REQUIRE(es.eigenvalues()[1] == Approx(+10 * d.omega_eff));
}

TEST_CASE("effective Hamiltonian couples |gg> to |T> with sqrt(2) omega_eff") {
    ModelParams p = generic_params();
    DerivedParams d = DerivedParams::from(p);
    Operator h = effective_two_atom_hamiltonian(p).as_operator();
    QuantumState gg = states::gg(h.space());
    QuantumState t = states::triplet(h.space());
    Complex amp = gg.vector().dot(h.matrix() * t.vector());
    REQUIRE(amp.real() == Approx(std::sqrt(2.0) * d.omega_eff));
    REQUIRE(amp.imag() == Approx(0.0).margin(1e-15));
}

TEST_CASE("effective Hamiltonian reduces to the antiblockade block as omega_eff -> 0") {
    ModelParams p = generic_params();
    p.rabi_a = 0.0;
    Operator h = effective_two_atom_hamiltonian(p).as_operator();
    CompositeSpace space = h.space();
    int ee = space.basis_index({"e", "e"});
    int rr = space.basis_index({"r", "r"});
    Matrix rest = h.matrix();
    rest(ee, rr) = rest(rr, ee) = rest(rr, rr) = 0.0;
    REQUIRE(rest.norm() == Approx(0.0));
}

TEST_CASE("ground-state blockade Hamiltonian: spectrum, transfer, and the blocked |ee>") {
    ModelParams p;
    p.rabi_a = p.rabi_b = 1.0;
    p.detuning_p = 100.0;
    DerivedParams d = DerivedParams::from(p);
    Operator h = ground_blockade_hamiltonian(p);
    REQUIRE(h.space().dim() == 4);

    Eigen::SelfAdjointEigenSolver<Matrix> es(h.matrix());
    double c = std::sqrt(2.0) * d.omega_eff;
    REQUIRE(es.eigenvalues()[0] == Approx(-c));
    REQUIRE(es.eigenvalues()[1] == Approx(0.0).margin(1e-14));
    REQUIRE(es.eigenvalues()[2] == Approx(0.0).margin(1e-14));
    REQUIRE(es.eigenvalues()[3] == Approx(+c));

    // Rabi half-period |gg> -> |T> up to phase (matrix-exponential oracle)
    double t_half = M_PI / (2.0 * c);
    Matrix u = (Complex(0, -1) * t_half * h.matrix()).exp();
    Vector evolved = u * states::gg(h.space()).vector();
    double overlap = std::abs(states::triplet(h.space()).vector().dot(evolved));
    REQUIRE(overlap == Approx(1.0).epsilon(1e-10));

    // <ee|H|psi> = 0 for every psi: the |ee> row vanishes identically
    int ee = h.space().basis_index({"e", "e"});
    REQUIRE(h.matrix().row(ee).norm() == 0.0);
    REQUIRE(h.matrix().col(ee).norm() == 0.0);
}

TEST_CASE("blockade spectrum closed-form examples") {
    SECTION("lambda = 10 omega_eff, Delta = 0") {
        auto s = blockade_spectrum(10.0, 0.0, 1.0);
        REQUIRE(s.alpha == Approx(M_PI / 4));
        REQUIRE(s.e_plus == Approx(10.0));
        REQUIRE(s.e_minus == Approx(-10.0));
        REQUIRE(s.r1 == Approx(10.0));
        REQUIRE(s.r2 == Approx(10.0));
    }
    SECTION("lambda = 20 omega_eff, Delta = 5 omega_eff reproduces the quoted ratios") {
        auto s = blockade_spectrum(20.0, 5.0, 1.0);
        REQUIRE(s.r1 == Approx(24.21).margin(0.01));
        REQUIRE(s.r2 == Approx(16.65).margin(0.01));
    }
    SECTION("lambda -> 0 with Delta > 0 decouples") {
        auto s = blockade_spectrum(1e-12, 3.0, 1.0);
        REQUIRE(s.alpha == Approx(0.0).margin(1e-12));
        REQUIRE(s.e_plus == Approx(3.0));
        REQUIRE(s.e_minus == Approx(0.0).margin(1e-12));
    }
    SECTION("omega_eff = 0 is an invalid-parameter error") {
        REQUIRE_THROWS_AS(blockade_spectrum(1.0, 0.0, 0.0), InvalidParameterError);
    }
}

TEST_CASE("blockade spectrum trace and determinant identities hold for all inputs") {
    for (int trial = 0; trial < 200; ++trial) {
        double lambda = rand_in(1e-3, 50.0);
        double delta = rand_in(-30.0, 30.0);
        auto s = blockade_spectrum(lambda, delta, rand_in(0.01, 2.0));
        REQUIRE(s.e_plus + s.e_minus == Approx(delta).margin(1e-10 * (std::abs(delta) + lambda)));
        REQUIRE(s.e_plus * s.e_minus == Approx(-lambda * lambda).epsilon(1e-10));
        REQUIRE(s.alpha >= 0.0);
        REQUIRE(s.alpha <= M_PI / 2);
    }
}

TEST_CASE("derived parameters reproduce their defining formulas") {
    for (int trial = 0; trial < 50; ++trial) {
        ModelParams p;
        p.rabi_a = rand_in(0.01, 2.0);
        p.rabi_b = rand_in(0.01, 2.0);
        p.rabi_c = rand_in(0.01, 2.0);
        p.detuning_p = rand_in(10.0, 300.0);
        p.detuning_r = rand_in(5.0, 100.0);
        p.interaction_u = rand_in(0.0, 200.0);
        p.gamma_p = rand_in(0.0, 2.0);
        p.cavity_g = rand_in(0.0, 2.0);
        p.cavity_kappa = rand_in(0.1, 20.0);
        DerivedParams d = DerivedParams::from(p);
        REQUIRE(d.omega_eff == Approx(p.rabi_a * p.rabi_b / p.detuning_p).epsilon(1e-12));
        REQUIRE(d.lambda == Approx(2 * p.rabi_c * p.rabi_c / p.detuning_r).epsilon(1e-12));
        REQUIRE(d.delta ==
                Approx(p.interaction_u - 2 * p.detuning_r + d.lambda).epsilon(1e-12).margin(1e-12));
        REQUIRE(d.g_eff == Approx(p.cavity_g * p.rabi_b / p.detuning_p).epsilon(1e-12).margin(0.0));
        REQUIRE(d.gamma_collective ==
                Approx(4 * d.g_eff * d.g_eff / p.cavity_kappa).epsilon(1e-12).margin(0.0));
        REQUIRE(d.gamma_eff ==
                Approx(p.gamma_p * p.rabi_a * p.rabi_b / (2 * p.detuning_p * p.detuning_p))
                    .epsilon(1e-12)
                    .margin(0.0));
    }
}

TEST_CASE("reduced single-atom model carries the effective decay operators") {
    ModelParams p;
    p.rabi_a = p.rabi_b = 0.8;  // Omega = sqrt(0.004 * 160)
    p.detuning_p = 160.0;
    p.gamma_p = 1.0;
    auto bundle = single_atom_model(p, SingleAtomLevel::reduced);
    REQUIRE(bundle.collapse_ops.size() == 2);

    // R_gp = sqrt(gamma_p/2) (Omega/Delta_p) |g>(<g| + <e|)
    Matrix r_gp = bundle.collapse_ops[0].as_operator().matrix();
    double c = std::sqrt(p.gamma_p / 2.0) * p.rabi_a / p.detuning_p;
    Matrix expected = Matrix::Zero(2, 2);
    expected(0, 0) = expected(0, 1) = c;
    REQUIRE((r_gp - expected).norm() == Approx(0.0).margin(1e-15));

    // total reduced decay rate gamma_eff = 1.25e-5 at these parameters
    DerivedParams d = DerivedParams::from(p);
    REQUIRE(d.omega_eff == Approx(0.004));
    REQUIRE(d.gamma_eff == Approx(1.25e-5).epsilon(1e-12));
}

TEST_CASE("collective lowering operators annihilate their dark states") {
    SECTION("two atoms: J-|S> = 0 and the microwave Hamiltonian leaves |S> dark") {
        CompositeSpace space = qubit_space(2);
        Operator jm = collective_lowering(space, 2);
        Vector s = states::singlet(space).vector();
        REQUIRE((jm.matrix() * s).norm() == Approx(0.0).margin(1e-15));
        Matrix h = jm.matrix() + jm.matrix().adjoint();
        REQUIRE((h * s).norm() == Approx(0.0).margin(1e-15));
    }
    SECTION("three atoms: J-|DFS> = 0") {
        CompositeSpace space = qubit_space(3);
        Operator jm = collective_lowering(space, 3);
        Vector dfs = states::dfs_state(space).vector();
        REQUIRE((jm.matrix() * dfs).norm() == Approx(0.0).margin(1e-15));
    }
}

TEST_CASE("feedback unitary at eta = -pi/2 equals i sigma_x on atom 1") {
    CompositeSpace space = qubit_space(2);
    Operator u = feedback_unitary(space, -M_PI / 2, FeedbackForm::exact);
    Operator sx = transition(space, "atom1", "g", "e") + transition(space, "atom1", "e", "g");
    REQUIRE((u.matrix() - Complex(0, 1) * sx.matrix()).norm() == Approx(0.0).margin(1e-14));

    // cross-check the closed form against a brute-force matrix exponential
    Matrix gen = Complex(0, 0.5 * M_PI) * sx.matrix();
    REQUIRE((u.matrix() - gen.exp()).norm() == Approx(0.0).margin(1e-13));
}

TEST_CASE("conditioned feedback unitary matches its matrix exponential") {
    CompositeSpace space = qubit_space(3);
    double eta = -0.77;
    Operator u = feedback_unitary(space, eta, FeedbackForm::conditioned);
    Operator x = (transition(space, "atom1", "g", "e") + transition(space, "atom1", "e", "g")) *
                 level_projector(space, "atom2", "g") * level_projector(space, "atom3", "g");
    Matrix gen = Complex(0, -eta) * x.matrix();
    REQUIRE((u.matrix() - gen.exp()).norm() == Approx(0.0).margin(1e-13));
    REQUIRE((u.matrix().adjoint() * u.matrix() - Matrix::Identity(8, 8)).norm() ==
            Approx(0.0).margin(1e-13));
}

TEST_CASE("feedback models expose the composed jump operator") {
    ModelParams p;
    p.rabi_b = 1.0;
    p.detuning_p = 100.0;
    p.cavity_g = 40.0;  // g_eff = 0.4
    p.cavity_kappa = 1.6;
    p.microwave_omega = 0.4;
    p.feedback_eta = -M_PI / 2;
    auto bundle = cavity_feedback_model(p, CavityLevel::reduced_feedback);
    REQUIRE(bundle.feedback_channel == 0);
    REQUIRE(bundle.feedback_unitary.has_value());
    auto ops = bundle.effective_collapse_ops();
    REQUIRE(ops.size() == 1);

    DerivedParams d = DerivedParams::from(p);
    Operator jm = collective_lowering(bundle.space(), 2);
    Matrix expected =
        bundle.feedback_unitary->matrix() * (std::sqrt(d.gamma_collective) * jm.matrix());
    REQUIRE((ops[0].matrix() - expected).norm() == Approx(0.0).margin(1e-14));
}

TEST_CASE("cavity levels require a Fock register") {
    ModelParams p;
    p.rabi_b = 1.0;
    p.detuning_p = 100.0;
    p.cavity_g = 40.0;
    p.cavity_kappa = 1.6;
    p.n_fock = 0;
    REQUIRE_THROWS_AS(cavity_feedback_model(p, CavityLevel::blocked), InvalidParameterError);
}

TEST_CASE("photon number decays at rate kappa in an empty full cavity model") {
    ModelParams p;
    p.cavity_kappa = 2.0;
    p.n_fock = 3;
    auto bundle = cavity_feedback_model(p, CavityLevel::full);
    const CompositeSpace& space = bundle.space();

    QuantumState initial = basis_ket(space, {"g", "g", "1"});
    auto problem = dynamics::LindbladProblem::from_bundle(bundle, initial);
    dynamics::TimeGrid grid{0.0, 1.0, 51, 1e-10, 1e-12};
    auto result = dynamics::evolve_lindblad(problem, grid);

    Operator a = annihilation(space);
    Operator n_op(space, a.matrix().adjoint() * a.matrix());
    for (int i = 0; i < grid.n_samples; ++i) {
        double expected = std::exp(-p.cavity_kappa * result.times[i]);
        double n_mean = expectation(result.states[i], n_op).real();
        REQUIRE(n_mean == Approx(expected).margin(1e-8));
    }
}

TEST_CASE("three-atom effective Hamiltonian couples |ggg> to |W>") {
    ModelParams p = generic_params();
    p.n_atoms = 3;
    auto bundle = three_atom_models(p, ThreeAtomVariant::sap_effective);
    const CompositeSpace& space = bundle.space();
    REQUIRE(space.dim() == 8);
    Vector ggg = states::ggg(space).vector();
    Vector w = states::w_state(space).vector();
    Complex amp = ggg.dot(bundle.hamiltonian.at(0.0) * w);
    REQUIRE(amp.real() ==
            Approx(std::sqrt(3.0) * p.rabi_a * p.rabi_b / p.detuning_p).epsilon(1e-12));

    // half-period transfer |ggg> -> |W> (matrix-exponential oracle)
    double coupling = std::sqrt(3.0) * p.rabi_a * p.rabi_b / p.detuning_p;
    double t_half = M_PI / (2.0 * coupling);
    Matrix u = (Complex(0, -1) * t_half * bundle.hamiltonian.at(0.0)).exp();
    REQUIRE(std::abs(w.dot(u * ggg)) == Approx(1.0).epsilon(1e-10));
}

TEST_CASE("three-atom models reject two-atom parameter records") {
    ModelParams p = generic_params();
    REQUIRE_THROWS_AS(three_atom_models(p, ThreeAtomVariant::sap_effective),
                      InvalidParameterError);
    ModelParams p3 = generic_params();
    p3.n_atoms = 3;
    REQUIRE_THROWS_AS(full_two_atom_hamiltonian(p3), InvalidParameterError);
}

TEST_CASE("named states are normalized and mutually orthogonal where required") {
    CompositeSpace full = two_atom_space();
    CompositeSpace three = qubit_space(3);
    auto t = states::triplet(full).vector();
    auto s = states::singlet(full).vector();
    auto w = states::w_state(three).vector();
    auto dfs = states::dfs_state(three).vector();
    double alpha = 0.613;
    auto plus = states::psi_plus(full, alpha).vector();
    auto minus = states::psi_minus(full, alpha).vector();

    for (const auto& v : {t, s, plus, minus}) REQUIRE(v.norm() == Approx(1.0));
    REQUIRE(w.norm() == Approx(1.0));
    REQUIRE(dfs.norm() == Approx(1.0));
    REQUIRE(std::abs(t.dot(s)) == Approx(0.0).margin(1e-15));
    REQUIRE(std::abs(w.dot(dfs)) == Approx(0.0).margin(1e-15));
    REQUIRE(std::abs(plus.dot(minus)) == Approx(0.0).margin(1e-15));
}

TEST_CASE("full-vs-effective two-atom trajectories agree at large detuning") {
    // Omega_eff = 0.004, Delta_p = 160, Delta_r = 20, Delta = 0
    ModelParams p;
    p.rabi_a = p.rabi_b = std::sqrt(0.004 * 160.0);
    p.rabi_c = 1.0;
    p.detuning_p = 160.0;
    p.detuning_r = 20.0;
    DerivedParams d0 = DerivedParams::from(p);
    p.interaction_u = 2 * p.detuning_r - d0.lambda;  // Delta = 0
    DerivedParams d = DerivedParams::from(p);
    REQUIRE(d.delta == Approx(0.0).margin(1e-12));

    double raman_period = 2 * M_PI / (std::sqrt(2.0) * d.omega_eff);
    dynamics::TimeGrid grid{0.0, raman_period, 401, 1e-10, 1e-12};

    auto full = full_two_atom_hamiltonian(p);
    auto eff = effective_two_atom_hamiltonian(p);
    CompositeSpace space = full.space();
    QuantumState gg = states::gg(space);

    auto run_full = dynamics::evolve_schrodinger(full, gg, grid);
    auto run_eff = dynamics::evolve_schrodinger(eff, gg, grid);

    double max_diff = 0.0;
    for (const auto& target :
         {states::gg(space), states::triplet(space), states::ee(space), states::rr(space)}) {
        auto pf = analysis::population_series(run_full, target);
        auto pe = analysis::population_series(run_eff, target);
        max_diff = std::max(max_diff, (pf.values - pe.values).cwiseAbs().maxCoeff());
    }
    INFO("max population discrepancy " << max_diff);
    REQUIRE(max_diff < 1e-2);
}

TEST_CASE("blockade limit: |ee> stays below 2e-4 for lambda = 20 omega_eff at Delta = 0") {
    ModelParams p;
    p.rabi_a = p.rabi_b = 1.0;
    p.detuning_p = 100.0;  // omega_eff = 0.01
    p.rabi_c = 1.0;
    p.detuning_r = 10.0;   // lambda = 0.2 = 20 omega_eff
    DerivedParams d0 = DerivedParams::from(p);
    p.interaction_u = 2 * p.detuning_r - d0.lambda;
    DerivedParams d = DerivedParams::from(p);
    REQUIRE(d.lambda == Approx(20 * d.omega_eff));

    double raman_period = 2 * M_PI / (std::sqrt(2.0) * d.omega_eff);
    dynamics::TimeGrid grid{0.0, raman_period, 801, 1e-10, 1e-12};
    auto eff = effective_two_atom_hamiltonian(p);
    QuantumState gg = states::gg(eff.space());
    auto run = dynamics::evolve_schrodinger(eff, gg, grid);
    auto pee = analysis::population_series(run, states::ee(eff.space()));
    INFO("max P_ee = " << pee.max_value);
    REQUIRE(pee.max_value < 2e-4);
}
