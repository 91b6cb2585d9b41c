#include "hp/laminate.hpp"

#include "hp/errors.hpp"

#include <cmath>
#include <cstring>
#include <numbers>
#include <sstream>

namespace hp {

OrthotropicPly OrthotropicPly::isotropic(double E, double nu, double thickness, double theta) {
    OrthotropicPly p;
    p.E_L = p.E_T = p.E_N = E;
    p.G_LT = p.G_LN = p.G_TN = E / (2 * (1 + nu));
    p.nu_LT = p.nu_TN = p.nu_LN = nu;
    p.thickness = thickness;
    p.theta = theta;
    return p;
}

double Laminate::half_thickness() const {
    double t = 0;
    for (const auto& p : plies) t += p.thickness;
    return 0.5 * t;
}

std::vector<double> Laminate::z_interfaces() const {
    std::vector<double> z{-half_thickness()};
    for (const auto& p : plies) z.push_back(z.back() + p.thickness);
    z.back() = half_thickness();
    return z;
}

int Laminate::ply_at(double z) const {
    auto zi = z_interfaces();
    const double tol = 1e-12 * (1 + half_thickness());
    for (int k = static_cast<int>(plies.size()) - 1; k >= 0; --k)
        if (z >= zi[k] - tol) return k;
    return 0;
}

std::uint64_t Laminate::hash() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&](double v) {
        unsigned char b[sizeof(double)];
        std::memcpy(b, &v, sizeof v);
        for (unsigned char c : b) {
            h ^= c;
            h *= 1099511628211ull;
        }
    };
    for (const auto& p : plies)
        for (double v : {p.E_L, p.E_T, p.E_N, p.G_LT, p.G_LN, p.G_TN, p.nu_LT, p.nu_TN, p.nu_LN,
                         p.theta, p.thickness})
            mix(v);
    return h;
}

void Laminate::validate() const {
    if (plies.empty()) throw AdmissibilityError("laminate has no plies");
    for (std::size_t k = 0; k < plies.size(); ++k) {
        const auto& p = plies[k];
        if (!(p.thickness > 0)) throw AdmissibilityError("ply " + std::to_string(k) + ": thickness must be > 0");
        for (double m : {p.E_L, p.E_T, p.E_N, p.G_LT, p.G_LN, p.G_TN})
            if (!(m > 0)) throw AdmissibilityError("ply " + std::to_string(k) + ": moduli must be > 0");
    }
}

Laminate Laminate::symmetric(const OrthotropicPly& proto, const std::vector<double>& angles_deg) {
    Laminate lam;
    for (double a : angles_deg) {
        auto p = proto;
        p.theta = a * std::numbers::pi / 180.0;
        lam.plies.push_back(p);
    }
    for (auto it = angles_deg.rbegin(); it != angles_deg.rend(); ++it) {
        auto p = proto;
        p.theta = *it * std::numbers::pi / 180.0;
        lam.plies.push_back(p);
    }
    return lam;
}

Mat6 rotate_about_z(const Mat6& C, double theta) {
    const double c = std::cos(theta), s = std::sin(theta);
    Eigen::Matrix3d R;
    R << c, -s, 0, s, c, 0, 0, 0, 1;
    // Bond stress matrix: sigma_global = M sigma_material.
    static const int I[6] = {0, 1, 2, 1, 0, 0};
    static const int J[6] = {0, 1, 2, 2, 2, 1};
    Mat6 M;
    for (int a = 0; a < 6; ++a) {
        const int i = I[a], j = J[a];
        for (int b = 0; b < 6; ++b) {
            const int k = I[b], l = J[b];
            M(a, b) = (b < 3) ? R(i, k) * R(j, l) : R(i, k) * R(j, l) + R(i, l) * R(j, k);
        }
    }
    return M * C * M.transpose();
}

Mat6 ply_stiffness(const OrthotropicPly& p) {
    Mat6 S = Mat6::Zero();
    S(0, 0) = 1 / p.E_L;
    S(1, 1) = 1 / p.E_T;
    S(2, 2) = 1 / p.E_N;
    S(0, 1) = S(1, 0) = -p.nu_LT / p.E_L;
    S(0, 2) = S(2, 0) = -p.nu_LN / p.E_L;
    S(1, 2) = S(2, 1) = -p.nu_TN / p.E_T;
    S(3, 3) = 1 / p.G_TN;
    S(4, 4) = 1 / p.G_LN;
    S(5, 5) = 1 / p.G_LT;
    for (int n = 1; n <= 6; ++n) {
        const double det = S.topLeftCorner(n, n).determinant();
        if (!(det > 0)) {
            std::ostringstream os;
            os << "compliance not positive definite: leading minor of order " << n << " = " << det;
            throw AdmissibilityError(os.str());
        }
    }
    Mat6 C = S.inverse();
    C = 0.5 * (C + C.transpose()).eval();
    Mat6 Cg = rotate_about_z(C, p.theta);
    return 0.5 * (Cg + Cg.transpose());
}

PlaneStress plane_stress_reduce(const Mat6& H) {
    using namespace voigt;
    const double czz = H(ZZ, ZZ);
    if (!(std::abs(czz) > 1e-300)) throw SingularityError("plane_stress_reduce: zero zz pivot");
    const int P[3] = {XX, YY, XY};
    PlaneStress r;
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) r.H_ps(a, b) = H(P[a], P[b]) - H(P[a], ZZ) * H(ZZ, P[b]) / czz;
    r.B << H(XZ, XZ), H(XZ, YZ), H(YZ, XZ), H(YZ, YZ);
    return r;
}

namespace {

// Energy-equivalence shear factor for a unit shear force along one direction.
double shear_factor(const Laminate& lam, const std::vector<PlaneStress>& ps,
                    const Eigen::Matrix<double, 6, 6>& abd_inv, int dir) {
    Eigen::Matrix<double, 6, 1> rate = Eigen::Matrix<double, 6, 1>::Zero();
    rate(3 + dir) = 1.0;  // dM_xx/dx = 1 or dM_yy/dy = 1
    const Eigen::Matrix<double, 6, 1> s = abd_inv * rate;
    const Eigen::Vector3d e = s.head<3>(), k = s.tail<3>();
    // Equilibrium: d(tau_dir)/dz = -sigma'_{dir,dir}, d(tau_other)/dz = -sigma'_xy.
    const int main = dir == 0 ? 0 : 1;
    auto zi = lam.z_interfaces();
    const double g[3] = {-std::sqrt(0.6), 0.0, std::sqrt(0.6)};
    const double w[3] = {5.0 / 9, 8.0 / 9, 5.0 / 9};
    Eigen::Vector2d tau0 = Eigen::Vector2d::Zero();
    Eigen::Matrix2d Bsum = Eigen::Matrix2d::Zero();
    double U = 0;
    for (std::size_t p = 0; p < lam.plies.size(); ++p) {
        const Mat3& H = ps[p].H_ps;
        const double z0 = zi[p], z1 = zi[p + 1];
        // sigma'(z) = H (e + z k); integral from z0 to z.
        const Eigen::Vector3d He = H * e, Hk = H * k;
        auto tau_at = [&](double z) {
            const Eigen::Vector3d I = He * (z - z0) + Hk * 0.5 * (z * z - z0 * z0);
            Eigen::Vector2d t = tau0;
            // components ordered (xz, yz)
            if (dir == 0) {
                t(0) -= I(main);
                t(1) -= I(2);
            } else {
                t(0) -= I(2);
                t(1) -= I(main);
            }
            return t;
        };
        const Eigen::Matrix2d Binv = ps[p].B.inverse();
        for (int q = 0; q < 3; ++q) {
            const double z = 0.5 * (z0 + z1) + 0.5 * (z1 - z0) * g[q];
            const Eigen::Vector2d t = tau_at(z);
            U += w[q] * 0.5 * (z1 - z0) * t.dot(Binv * t);
        }
        Bsum += ps[p].B * (z1 - z0);
        tau0 = tau_at(z1);
    }
    const double fsdt = Bsum.inverse()(dir, dir);
    return fsdt / U;
}

}  // namespace

PlateStiffness laminate_stiffness(const Laminate& lam) {
    lam.validate();
    PlateStiffness r;
    std::vector<PlaneStress> ps;
    auto zi = lam.z_interfaces();
    for (std::size_t p = 0; p < lam.plies.size(); ++p) {
        ps.push_back(plane_stress_reduce(ply_stiffness(lam.plies[p])));
        const double z0 = zi[p], z1 = zi[p + 1];
        r.A += ps.back().H_ps * (z1 - z0);
        r.B += ps.back().H_ps * (z1 * z1 - z0 * z0) / 2.0;
        r.D += ps.back().H_ps * (z1 * z1 * z1 - z0 * z0 * z0) / 3.0;
        r.Bsum += ps.back().B * (z1 - z0);
    }
    Eigen::Matrix<double, 6, 6> abd;
    abd << r.A, r.B, r.B, r.D;
    const Eigen::Matrix<double, 6, 6> abd_inv = abd.inverse();
    r.kappa_x = shear_factor(lam, ps, abd_inv, 0);
    r.kappa_y = shear_factor(lam, ps, abd_inv, 1);
    r.kappa = std::min(r.kappa_x, r.kappa_y);
    r.Fs = r.kappa * r.Bsum;
    return r;
}

}  // namespace hp
