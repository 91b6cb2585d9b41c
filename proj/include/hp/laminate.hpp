/**
 * @file laminate.hpp
 * @brief Orthotropic plies, stacking, plane-stress reduction and plate stiffnesses.
 */
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace hp {

using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat3 = Eigen::Matrix3d;
using Mat2 = Eigen::Matrix2d;

// Voigt order used everywhere: xx, yy, zz, yz, xz, xy with engineering shear strains.
namespace voigt {
inline constexpr int XX = 0, YY = 1, ZZ = 2, YZ = 3, XZ = 4, XY = 5;
}

struct OrthotropicPly {
    double E_L = 1, E_T = 1, E_N = 1;
    double G_LT = 0.5, G_LN = 0.5, G_TN = 0.5;
    double nu_LT = 0, nu_TN = 0, nu_LN = 0;
    double theta = 0;      // radians, about z
    double thickness = 1;  // mm

    static OrthotropicPly isotropic(double E, double nu, double thickness, double theta = 0);
};

struct Laminate {
    std::vector<OrthotropicPly> plies;  // bottom to top

    double half_thickness() const;
    std::vector<double> z_interfaces() const;  // -h .. +h
    int ply_at(double z) const;                // ply index containing z (upper ply on ties)
    std::uint64_t hash() const;
    void validate() const;

    // Symmetric stack of `angles_deg` (bottom half), each ply of the given thickness.
    static Laminate symmetric(const OrthotropicPly& proto, const std::vector<double>& angles_deg);
};

struct PlateStiffness {
    Mat3 A = Mat3::Zero();  // <H_ps>
    Mat3 B = Mat3::Zero();  // <z H_ps>
    Mat3 D = Mat3::Zero();  // <z^2 H_ps>
    Mat2 Fs = Mat2::Zero(); // kappa <B>
    Mat2 Bsum = Mat2::Zero();  // <B>
    double kappa = 5.0 / 6.0;
    double kappa_x = 5.0 / 6.0, kappa_y = 5.0 / 6.0;
};

// 6x6 stiffness of the ply in laminate axes.
Mat6 ply_stiffness(const OrthotropicPly& ply);

struct PlaneStress {
    Mat3 H_ps;  // xx, yy, xy
    Mat2 B;     // xz, yz
};
PlaneStress plane_stress_reduce(const Mat6& H);

PlateStiffness laminate_stiffness(const Laminate& lam);

// Rotation of a 6x6 Voigt stiffness about z (used by ply_stiffness).
Mat6 rotate_about_z(const Mat6& C, double theta);

}  // namespace hp
