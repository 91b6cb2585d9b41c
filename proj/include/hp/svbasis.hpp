/**
 * @file svbasis.hpp
 * @brief Saint-Venant stress and warping bases recovered from eight cell problems.
 */
#pragma once

#include "hp/laminate.hpp"
#include "hp/mesh.hpp"
#include "hp/plate_fem.hpp"
#include "hp/solid_fem.hpp"

#include <array>
#include <iosfwd>
#include <memory>
#include <vector>

namespace hp {

using Mat8 = Eigen::Matrix<double, 8, 8>;
using StressProfile = Eigen::Matrix<double, Eigen::Dynamic, 6>;  // rows: z nodes, Voigt columns
using DispProfile = Eigen::Matrix<double, Eigen::Dynamic, 3>;

// Through-thickness nodes of a layered column: each layer owns (order + 1) nodes, interfaces
// appear twice. Integrals use the layerwise Lagrange interpolation.
struct ThicknessGrid {
    int order = 2;
    Eigen::VectorXd z;
    Eigen::MatrixXd M;  // consistent 1D mass matrix, block diagonal
    Eigen::VectorXd w;  // integration weights, M * 1

    static ThicknessGrid from_levels(const std::vector<double>& layer_bounds, int order);

    int size() const { return static_cast<int>(z.size()); }
    int layers() const { return size() / (order + 1); }
    double integral(const Eigen::VectorXd& f) const { return w.dot(f); }
    double inner(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const { return a.dot(M * b); }
    // Interpolated row of a profile at natural coordinate zeta of a layer.
    template <class P>
    Eigen::Matrix<double, 1, P::ColsAtCompileTime> at(const P& p, int layer, double zeta) const;
};

// (N_xx, N_xy, M_xx, M_xy, Q_x, N_yy, M_yy, Q_y) of a stress profile.
Vec8 generalized_forces(const ThicknessGrid& g, const StressProfile& s);

// Plate kinematic profiles (e_x, e_y, z e_x, z e_y, e_z) in the frame of angle phi.
DispProfile plate_mode(const ThicknessGrid& g, int k, double phi = 0);

struct SaintVenantBasis {
    ThicknessGrid grid;
    double h = 0;            // half thickness
    double cell_side = 0;
    std::uint64_t laminate_hash = 0;
    int refinement_level = 0;
    Mat8 F_matrix = Mat8::Identity();  // [F_j^i] of the last extraction
    std::array<StressProfile, 8> tau;
    std::array<DispProfile, 8> U;
    std::array<DispProfile, 8> warp;
    Eigen::Matrix<double, 8, 5> V = Eigen::Matrix<double, 8, 5>::Zero();  // plate content V_i^k
    std::vector<double> history;  // correction norm per refinement pass
};

// Basis in the (n, t) frame: components stay in global axes, indices follow
// (N_nn, N_nt, M_nn, M_nt, Q_n, N_tt, M_tt, Q_t).
struct RotatedBasis {
    double phi = 0;
    std::array<StressProfile, 8> tau;
    std::array<DispProfile, 8> warp;
};

RotatedBasis rotate_basis(const SaintVenantBasis& b, double phi);
// 8x8 weights w(i, j) with rotated_i = sum_j w(i, j) * original_j.
Mat8 rotation_weights(double phi);

struct CellOptions {
    double size_factor = 12;  // side / thickness
    Densities densities;
    AssemblyOptions assembly;
};

// Stress state applied as traction sigma . n on the four lateral faces of the cell.
using StressState = std::function<Vec6(double x, double y, double z, int layer, double zeta)>;

struct CellResponse {
    std::array<StressProfile, 8> sigma;
    std::array<DispProfile, 8> u;
    Mat8 F = Mat8::Zero();  // column j = generalized forces of sigma_j
};

// Square laminate cell with 3-2-1 pinning; a single factorization serves every load case.
class CellModel {
public:
    CellModel(const Laminate& lam, const CellOptions& opt = {});
    CellModel(const CellModel&) = delete;
    CellModel& operator=(const CellModel&) = delete;

    const Laminate& laminate() const { return lam_; }
    const SolidMesh& mesh() const { return mesh_; }
    const ThicknessGrid& grid() const { return grid_; }
    double side() const { return 2 * half_; }
    long factorizations() const { return sys_->factorizations(); }

    void solve(const std::array<StressState, 8>& loads, CellResponse& out);

private:
    Laminate lam_;
    CellOptions opt_;
    double half_ = 0;
    SolidMesh mesh_;
    std::unique_ptr<SolidSystem> sys_;
    ThicknessGrid grid_;
    int centre_ = -1;
};

// Table of the eight initial load cases.
std::array<StressState, 8> table_loads(double h);

// Throws CellSizeError unless every column of F is dominated by its diagonal entry.
void check_dominance(const Mat8& F);
CellResponse run_cell_problems(CellModel& cell);

// tau = sigma F^-1, U = u F^-1; warping left empty.
SaintVenantBasis decouple_basis(const ThicknessGrid& g, const CellResponse& r);
void extract_warping(SaintVenantBasis& b);

// Re-solves the cell with the current basis as boundary tractions; returns the new history entries.
std::vector<double> refine_basis(CellModel& cell, SaintVenantBasis& b, int passes);

SaintVenantBasis build_basis(CellModel& cell, int refine_passes = 0);

// 8x8 plate compliance in generalized-force ordering (membrane/bending block and shear block).
Mat8 plate_compliance(const PlateStiffness& S);

// Work defects of the rotated-frame relations. Rows pair the x-face traction of one state with the
// y-face traction of another carrying the same unit plate work: (tau1, tau2), (tau2, tau6),
// (tau3, tau4), (tau4, tau7), (tau5, tau8). The work scale of row r and state i is
// h * max_j sqrt(C_jj C_ii) over the force family of the row (membrane, bending or shear).
struct WorkDefects {
    Eigen::Matrix<double, 5, 8> defect = Eigen::Matrix<double, 5, 8>::Zero();
    Eigen::Matrix<double, 5, 8> scale = Eigen::Matrix<double, 5, 8>::Zero();
    double h_over_L = 0;

    double bound(int row) const { return row == 4 ? h_over_L : h_over_L * h_over_L; }
    double worst_ratio(int row) const;  // max_i |defect| / (bound * scale)
    bool within_bounds() const;
};
WorkDefects work_defects(const SaintVenantBasis& b, const PlateStiffness& S);

// max over k in 1..5 and all i of |<(tau_k^phi . n) . w_i^phi>| / (h sqrt(c_k c_i)), c being the
// compliance of the rotated unit states.
double warping_work_defect(const SaintVenantBasis& b, const PlateStiffness& S, double phi);

void save_basis(std::ostream& os, const SaintVenantBasis& b);
SaintVenantBasis load_basis(std::istream& is);
// Throws StaleBasisError when the basis was built for another laminate.
void check_basis(const SaintVenantBasis& b, const Laminate& lam);

// ---- template -----------------------------------------------------------------------

template <class P>
Eigen::Matrix<double, 1, P::ColsAtCompileTime> ThicknessGrid::at(const P& p, int layer, double zeta) const {
    const int base = layer * (order + 1);
    if (order == 2) {
        const double n0 = 0.5 * zeta * (zeta - 1), n1 = 1 - zeta * zeta, n2 = 0.5 * zeta * (zeta + 1);
        return n0 * p.row(base) + n1 * p.row(base + 1) + n2 * p.row(base + 2);
    }
    return 0.5 * (1 - zeta) * p.row(base) + 0.5 * (1 + zeta) * p.row(base + 1);
}

}  // namespace hp
