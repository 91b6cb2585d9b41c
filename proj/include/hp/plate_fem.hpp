/**
 * @file plate_fem.hpp
 * @brief Reissner-Mindlin MITC4 plate kernel with a single factorization and RHS-only updates.
 */
#pragma once

#include "hp/laminate.hpp"
#include "hp/mesh.hpp"
#include "hp/sparse.hpp"

#include <iosfwd>
#include <map>
#include <vector>

namespace hp {

using Vec8 = Eigen::Matrix<double, 8, 1>;
using Vec5 = Eigen::Matrix<double, 5, 1>;

// Plate DOFs per node: v_x, v_y, theta_x, theta_y, v_z.
namespace pdof {
inline constexpr int VX = 0, VY = 1, TX = 2, TY = 3, VZ = 4;
}

// Row-major 20x20 MITC4 stiffness.
void mitc4_stiffness(const Vec2* X, const PlateStiffness& S, double* Ke);

// Generalized stresses (N_xx, N_yy, N_xy, M_xx, M_yy, M_xy, Q_x, Q_y) at natural point (xi, eta).
Eigen::Matrix<double, 8, 1> mitc4_resultants(const Vec2* X, const PlateStiffness& S, const double* Ue, double xi,
                                             double eta);

// Conversions between plate DOFs and the work-conjugate components (v_x, v_y, beta_x, beta_y, v_z)
// with beta = (theta_y, -theta_x).
Vec5 dofs_to_conjugate(const Vec5& d);
Vec5 conjugate_to_dofs(const Vec5& q);

struct TraceSample {
    double s = 0, phi = 0;
    int node = -1;
    Vec5 V = Vec5::Zero();  // plate DOFs at the node
    Vec8 F = Vec8::Zero();  // (N_nn, N_nt, M_nn, M_nt, Q_n, N_tt, M_tt, Q_t)
    Vec8 Fg = Vec8::Zero(); // same in x/y axes: (N_xx, N_xy, M_xx, M_xy, Q_x, N_yy, M_yy, Q_y)
};
using InterfaceTrace = std::vector<TraceSample>;

// Axis rotation of the 8 generalized forces to the (n, t) frame of angle phi.
Vec8 rotate_forces(const Vec8& Fxy, double phi);

class PlateSystem {
public:
    PlateSystem(const PlateMesh& mesh, const PlateStiffness& stiffness, bool parallel = true);

    const PlateMesh& mesh() const { return mesh_; }
    int ndof() const { return 5 * static_cast<int>(mesh_.nodes.size()); }
    const PlateStiffness& stiffness() const { return S_; }

    void set_dirichlet(const std::vector<int>& dofs, const Vec& values);
    void factorize();
    long factorizations() const { return chol_.factorizations(); }

    // Base load (fixed problem data) and corrective load (coupling accumulator).
    void set_base_load(const Vec& f) { base_ = f; }
    const Vec& base_load() const { return base_; }
    void set_corrective(const Vec& c) { corr_ = c; }
    void add_corrective(const Vec& dc) { corr_ += dc; }
    const Vec& corrective() const { return corr_; }

    Vec solve() const;                         // base + corrective with prescribed values
    Vec solve_homogeneous(const Vec& f) const; // load f, zero prescribed values

    Vec pressure_load(double p) const;
    // sum_e K_e U_e over elements whose region is listed.
    Vec internal_forces(const Vec& U, const std::vector<int>& regions) const;
    const double* element_K(int e) const { return Ke_.data() + static_cast<std::size_t>(e) * 400; }

    // Element-node generalized stresses averaged over the elements of the listed regions.
    InterfaceTrace trace(const Vec& U, const std::vector<int>& curve_nodes, bool closed,
                         const std::vector<int>& regions) const;

    double strain_energy(const Vec& U) const;

private:
    const PlateMesh& mesh_;
    PlateStiffness S_;
    std::vector<double> Ke_;
    DofMap dmap_;
    Vec ud_;
    SpMat Kff_, Kfd_;
    Cholesky chol_;
    Vec base_, corr_;
};

// Consistent nodal loads of a piecewise-linear per-length line load (conjugate components)
// sampled at the curve nodes.
Vec interface_load(const PlateMesh& mesh, const std::vector<int>& curve_nodes, bool closed,
                   const std::vector<Vec5>& L);

// Trace curve geometry: arclength s and outward normal angle phi per node (owning side on the left).
void curve_frame(const std::vector<Vec2>& pts, bool closed, std::vector<double>& s, std::vector<double>& phi);

void write_plate_csv(std::ostream& os, const PlateMesh& mesh, const Vec& U);

}  // namespace hp
