#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "gsb/pulses.hpp"

using namespace gsb;
using namespace gsb::pulses;
using Catch::Approx;

namespace {

// the operating point used for the passage figures: t_c = 300, tau = 0.2 t_c,
// T = 0.3 t_c (in units of 1/Omega_c)
StirapPlan figure_plan(int n_atoms = 2) {
    return StirapPlan{1.0, 300.0, 60.0, 90.0, n_atoms};
}

}  // namespace

TEST_CASE("gaussian pair: symmetry point, peak, and tail value") {
    StirapPlan plan = figure_plan();
    double tc = plan.total_time;

    auto [oa_mid, ob_mid] = gaussian_pair(plan, tc / 2);
    double expected_mid = std::exp(-(plan.offset * plan.offset) / (plan.width * plan.width));
    REQUIRE(oa_mid == Approx(expected_mid));
    REQUIRE(ob_mid == Approx(expected_mid));

    auto [oa_peak, ob_peak] = gaussian_pair(plan, tc / 2 + plan.offset);
    REQUIRE(oa_peak == Approx(plan.peak_rabi));

    auto [oa0, ob0] = gaussian_pair(plan, 0.0);
    REQUIRE(oa0 == Approx(std::exp(-49.0 / 9.0)));  // exp[-(0.7 t_c)^2/(0.3 t_c)^2]
}

TEST_CASE("pulse times outside [0, t_c] are range errors") {
    StirapPlan plan = figure_plan();
    REQUIRE_THROWS_AS(gaussian_pair(plan, -1.0), InvalidParameterError);
    REQUIRE_THROWS_AS(gaussian_pair(plan, plan.total_time + 1.0), InvalidParameterError);
}

TEST_CASE("plan validation rejects degenerate geometry") {
    REQUIRE_THROWS_AS((StirapPlan{1.0, -10.0, 2.0, 3.0, 2}).validate(), InvalidParameterError);
    REQUIRE_THROWS_AS((StirapPlan{1.0, 10.0, 0.0, 3.0, 2}).validate(), InvalidParameterError);
    REQUIRE_THROWS_AS((StirapPlan{1.0, 10.0, 6.0, 3.0, 2}).validate(), InvalidParameterError);
    REQUIRE_THROWS_AS((StirapPlan{1.0, 10.0, 2.0, 3.0, 4}).validate(), InvalidParameterError);
}

TEST_CASE("mixing angle at the symmetry point is arctan(sqrt(n))") {
    StirapPlan plan = figure_plan();
    auto m = mixing_angle(plan, plan.total_time / 2);
    REQUIRE(m.theta == Approx(std::atan(std::sqrt(2.0))));

    StirapPlan plan3 = figure_plan(3);
    auto m3 = mixing_angle(plan3, plan3.total_time / 2);
    REQUIRE(m3.theta == Approx(std::atan(std::sqrt(3.0))));
}

TEST_CASE("theta_dot is positive everywhere for a positive offset") {
    StirapPlan plan = figure_plan();
    for (int i = 0; i <= 200; ++i) {
        double t = plan.total_time * i / 200.0;
        REQUIRE(mixing_angle(plan, t).theta_dot > 0.0);
    }
}

TEST_CASE("analytic theta_dot matches a central finite difference to 1e-6 relative") {
    for (int n_atoms : {2, 3}) {
        StirapPlan plan = figure_plan(n_atoms);
        double dt = 1e-4;
        for (int k = 1; k <= 20; ++k) {
            double t = plan.total_time * k / 21.0;
            double analytic = mixing_angle(plan, t).theta_dot;
            double fd =
                (mixing_angle(plan, t + dt).theta - mixing_angle(plan, t - dt).theta) / (2 * dt);
            REQUIRE(fd == Approx(analytic).epsilon(1e-6));
        }
    }
}

TEST_CASE("cap amplitude vanishes as the pulse offset goes to zero") {
    StirapPlan plan = figure_plan();
    plan.offset = 1e-9 * plan.total_time;
    double worst = 0.0;
    for (int i = 0; i <= 50; ++i)
        worst = std::max(worst, cap_amplitude(plan, 160.0, plan.total_time * i / 50.0));
    REQUIRE(worst < 1e-3);  // theta_dot ~ offset, so Omega_cap ~ sqrt(offset)
}

TEST_CASE("pulse area equals the swept mixing angle (fundamental theorem of calculus)") {
    StirapPlan plan = figure_plan();
    double delta_p = 160.0;
    // integral of Omega_cap^2/Delta_p = integral of theta_dot
    double area = adaptive_simpson(
        [&](double t) {
            double cap = cap_amplitude(plan, delta_p, t);
            return cap * cap / delta_p;
        },
        0.0, plan.total_time, 1e-12);
    double swept = mixing_angle(plan, plan.total_time).theta - mixing_angle(plan, 0.0).theta;
    REQUIRE(area == Approx(swept).epsilon(1e-9));
}

TEST_CASE("cap amplitude scales as the square root of the detuning") {
    StirapPlan plan = figure_plan();
    double t = 137.0;
    double c1 = cap_amplitude(plan, 40.0, t);
    double c2 = cap_amplitude(plan, 160.0, t);
    REQUIRE(c2 == Approx(2.0 * c1));
}

TEST_CASE("cap amplitude is real (theta_dot >= 0) over the whole window") {
    StirapPlan plan = figure_plan();
    for (int i = 0; i <= 300; ++i) {
        double cap = cap_amplitude(plan, 160.0, plan.total_time * i / 300.0);
        REQUIRE(std::isfinite(cap));
        REQUIRE(cap >= 0.0);
    }
}

TEST_CASE("sap drive pair carries the i/sqrt(n) phase convention") {
    StirapPlan plan = figure_plan();
    auto drives = sap_drives(plan, 160.0);
    double t = 150.0;
    Complex oa = drives.omega_a(t);
    Complex ob = drives.omega_b(t);
    REQUIRE(ob.imag() == 0.0);
    REQUIRE(oa.real() == 0.0);
    REQUIRE(oa.imag() == Approx(ob.real() / std::sqrt(2.0)));
}

TEST_CASE("blockade integral of a constant coupling matches the closed form") {
    // |S/2| = (w/2 lambda)|exp(-i lambda t_c) - 1| for constant w = Omega_eff
    double w = 0.01, lambda = 0.25, tc = 300.0;
    auto integrand = [&](double t) {
        return std::exp(Complex(0, -lambda * (tc - t))) * Complex(w);
    };
    Complex s = Complex(0, 1) * adaptive_simpson_complex(integrand, 0.0, tc, 1e-12);
    double closed = (w / (2 * lambda)) * std::abs(std::exp(Complex(0, -lambda * tc)) - 1.0);
    REQUIRE(0.5 * std::abs(s) == Approx(closed).epsilon(1e-9));
    REQUIRE(0.5 * std::abs(s) <= w / lambda + 1e-12);
}

TEST_CASE("blockade integral vanishes for fast antiblockade coupling") {
    StirapPlan plan = figure_plan();
    double slow = blockade_integral(plan, 160.0, 0.1).diagnostic;
    double fast = blockade_integral(plan, 160.0, 50.0).diagnostic;
    REQUIRE(fast < 1e-3);
    REQUIRE(fast < slow);
}

TEST_CASE("figure-plan blockade diagnostic is deep in the valid regime") {
    // lambda = 2 Omega_c^2 / Delta_r with Delta_r = 20 Omega_c
    for (int n_atoms : {2, 3}) {
        auto b = blockade_integral(figure_plan(n_atoms), 160.0, 0.1);
        INFO("|S/2| = " << b.diagnostic << " for n = " << n_atoms);
        REQUIRE(b.diagnostic < 0.1);
    }
}

TEST_CASE("quadrature refinement leaves the blockade integral unchanged") {
    StirapPlan plan = figure_plan();
    // oracle: composite Simpson on a fine fixed grid
    double lambda = 0.1, tc = plan.total_time;
    auto integrand = [&](double t) {
        double theta_dot = mixing_angle(plan, t).theta_dot;
        return std::exp(Complex(0, -lambda * (tc - t))) * Complex(0.0, theta_dot / std::sqrt(2.0));
    };
    int n = 1 << 16;
    Complex acc = integrand(0.0) + integrand(tc);
    for (int k = 1; k < n; ++k)
        acc += (k % 2 ? 4.0 : 2.0) * integrand(tc * k / n);
    Complex fixed = Complex(0, 1) * (tc / (3.0 * n)) * acc;

    Complex adaptive = blockade_integral(plan, 160.0, lambda).s;
    REQUIRE(std::abs(adaptive - fixed) < 1e-8);
}

TEST_CASE("boundary behavior of the figure plan transfers |gg> fully") {
    StirapPlan plan = figure_plan();
    double theta0 = mixing_angle(plan, 0.0).theta;
    double theta1 = mixing_angle(plan, plan.total_time).theta;
    // theta(0) = arctan(sqrt(2) exp(-2 t_c tau / T^2)) = 0.0166 for this plan
    REQUIRE(theta0 < 0.02);
    REQUIRE(theta1 > 0.95 * M_PI / 2);
}

TEST_CASE("fully underflowed pulse tails raise the degenerate-angle error") {
    StirapPlan plan{1.0, 2000.0, 10.0, 1.0, 2};  // widths far narrower than the window
    REQUIRE_THROWS_AS(mixing_angle(plan, 0.0), InvalidParameterError);
}

TEST_CASE("non-finite integrands are integration errors") {
    REQUIRE_THROWS_AS(
        adaptive_simpson([](double t) { return 1.0 / t; }, 0.0, 1.0, 1e-10),
        IntegrationError);
}
