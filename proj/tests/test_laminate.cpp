#include "common.hpp"
#include "doctest.h"
#include "hp/errors.hpp"
#include "hp/laminate.hpp"

#include <random>

using namespace hp;
using namespace testing_support;

TEST_CASE("isotropic single ply integrates exactly") {
    const double E = 70e3, nu = 0.3, h = 0.5;
    Laminate lam;
    lam.plies.push_back(OrthotropicPly::isotropic(E, nu, 2 * h));
    const auto S = laminate_stiffness(lam);
    const auto ps = plane_stress_reduce(ply_stiffness(lam.plies[0]));
    CHECK((S.A - 2 * h * ps.H_ps).norm() < 1e-9 * ps.H_ps.norm());
    CHECK((S.D - std::pow(2 * h, 3) / 12 * ps.H_ps).norm() < 1e-9 * ps.H_ps.norm());
    CHECK(S.B.norm() < 1e-9 * ps.H_ps.norm());
    CHECK(S.kappa == doctest::Approx(5.0 / 6.0).epsilon(1e-6));
}

TEST_CASE("isotropic plane-stress reduction matches the closed form") {
    const double E = 200, nu = 0.25;
    const auto ps = plane_stress_reduce(ply_stiffness(OrthotropicPly::isotropic(E, nu, 1)));
    const double f = E / (1 - nu * nu);
    CHECK(ps.H_ps(0, 0) == doctest::Approx(f));
    CHECK(ps.H_ps(0, 1) == doctest::Approx(f * nu));
    CHECK(ps.H_ps(2, 2) == doctest::Approx(E / (2 * (1 + nu))));
    CHECK(ps.B(0, 0) == doctest::Approx(E / (2 * (1 + nu))));
    CHECK(std::abs(ps.B(0, 1)) < 1e-12);
}

TEST_CASE("ply stiffness is symmetric positive definite for admissible plies") {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> mod(0.5, 50), nu(0.0, 0.3), ang(-3.2, 3.2);
    for (int k = 0; k < 50; ++k) {
        OrthotropicPly p;
        p.E_L = mod(rng);
        p.E_T = mod(rng) / 10;
        p.E_N = p.E_T;
        p.G_LT = p.G_LN = mod(rng) / 20;
        p.G_TN = mod(rng) / 30;
        p.nu_LT = nu(rng) * std::sqrt(p.E_L / p.E_T) * 0.5;
        p.nu_TN = nu(rng);
        p.nu_LN = p.nu_LT;
        p.theta = ang(rng);
        Mat6 C;
        try {
            C = ply_stiffness(p);
        } catch (const AdmissibilityError&) {
            continue;
        }
        CHECK((C - C.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * C.cwiseAbs().maxCoeff());
        CHECK(Eigen::SelfAdjointEigenSolver<Mat6>(C).eigenvalues().minCoeff() > 0);
    }
}

TEST_CASE("inadmissible engineering constants are rejected") {
    auto p = study_ply();
    p.nu_LT = 6.0;  // nu_LT^2 > E_L / E_T
    CHECK_THROWS_AS(ply_stiffness(p), AdmissibilityError);
}

TEST_CASE("rotation by 90 degrees swaps the in-plane axes") {
    auto p = study_ply();
    const Mat6 C0 = ply_stiffness(p);
    p.theta = std::acos(0.0);
    const Mat6 C90 = ply_stiffness(p);
    CHECK(C90(voigt::XX, voigt::XX) == doctest::Approx(C0(voigt::YY, voigt::YY)));
    CHECK(C90(voigt::YY, voigt::YY) == doctest::Approx(C0(voigt::XX, voigt::XX)));
    CHECK(C90(voigt::XZ, voigt::XZ) == doctest::Approx(C0(voigt::YZ, voigt::YZ)));
}

TEST_CASE("symmetric angle-ply laminate has no membrane-bending coupling") {
    const auto lam = cross_ply();
    CHECK(lam.plies.size() == 4);
    CHECK(lam.half_thickness() == doctest::Approx(0.2));
    const auto S = laminate_stiffness(lam);
    CHECK(S.B.norm() < 1e-12 * S.A.norm());
    CHECK(S.kappa > 0.5);
    CHECK(S.kappa < 1.0);
    CHECK(S.kappa == doctest::Approx(std::min(S.kappa_x, S.kappa_y)));
    CHECK((S.Fs - S.kappa * S.Bsum).norm() < 1e-12 * S.Bsum.norm());
}

TEST_CASE("z interfaces and ply lookup") {
    const auto lam = cross_ply();
    const auto z = lam.z_interfaces();
    REQUIRE(z.size() == 5);
    CHECK(z.front() == doctest::Approx(-0.2));
    CHECK(z.back() == doctest::Approx(0.2));
    CHECK(lam.ply_at(-0.15) == 0);
    CHECK(lam.ply_at(0.0) == 2);
    CHECK(lam.ply_at(0.19) == 3);
    CHECK(lam.hash() != Laminate::symmetric(study_ply(), {45, -45}).hash());
}
