/**
 * @file solid_fem.hpp
 * @brief Linear-elastic hexahedral kernel: assembly, constrained solves, reactions, stresses.
 */
#pragma once

#include "hp/laminate.hpp"
#include "hp/mesh.hpp"
#include "hp/sparse.hpp"

#include <array>
#include <functional>
#include <map>
#include <vector>

namespace hp {

using Vec6 = Eigen::Matrix<double, 6, 1>;

// Row-major (3 npe) x (3 npe) stiffness of one hexahedron, full Gauss integration.
void hex_stiffness(int npe, const Vec3* X, const Mat6& C, double* Ke);

struct AssemblyOptions {
    bool parallel = true;
    bool cache = true;  // reuse stiffness of congruent elements
};

// Element stiffnesses, deduplicated by (ply, shape relative to the first node).
struct ElementMatrices {
    std::vector<int> slot;         // element -> unique matrix index
    std::vector<double> data;      // unique matrices, row-major, concatenated
    int size = 0;                  // 3 npe

    const double* K(int e) const { return data.data() + static_cast<std::size_t>(slot[e]) * size * size; }
};

ElementMatrices compute_element_matrices(const SolidMesh& m, const std::vector<Mat6>& ply_C,
                                         const AssemblyOptions& opt);

// Traction at a face point: (position, outward unit normal, layer index, natural z in [-1, 1]).
using TractionFn = std::function<Vec3(const Vec3& x, const Vec3& n, int layer, double zeta)>;

struct SolidSolution {
    Vec u;          // 3 per node
    Vec lambda;     // one per constraint row
    Vec reaction;   // 3 per node; nonzero on prescribed DOFs only
};

class SolidSystem {
public:
    SolidSystem(const SolidMesh& mesh, const Laminate& lam, AssemblyOptions opt = {});

    const SolidMesh& mesh() const { return mesh_; }
    int ndof() const { return 3 * static_cast<int>(mesh_.nodes.size()); }
    const Mat6& ply_C(int p) const { return ply_C_[p]; }
    const ElementMatrices& elements() const { return em_; }

    // Structure of the constrained problem; values are passed to solve().
    void set_dirichlet(const std::vector<int>& dofs);
    // Rows over all DOFs: B u = c. Multipliers satisfy K u + B^T lambda = f. With `augment`,
    // K + rho B^T B is factorized (needed when only B removes the rigid modes).
    void set_constraints(const SpMat& B, bool augment = false);
    // Refactorizes the operator only when the Dirichlet set or the augmentation changed.
    void factorize();

    SolidSolution solve(const Vec& f, const Vec& ud, const Vec& c = Vec()) const;

    const std::vector<int>& dirichlet_dofs() const { return dmap_.fixed_dofs; }
    long factorizations() const { return chol_.factorizations(); }
    int n_free() const { return dmap_.n_free(); }

    // Consistent nodal loads of a traction over a face set.
    Vec face_load(const std::vector<SolidFace>& faces, const TractionFn& t) const;
    // sum_e K_e u_e over the listed elements (all elements if empty).
    Vec internal_forces(const Vec& u, const std::vector<int>& elems = {}) const;

private:
    const SolidMesh& mesh_;
    std::vector<Mat6> ply_C_;
    ElementMatrices em_;
    std::vector<std::vector<int>> adj_;
    DofMap dmap_;
    SpMat B_;
    SpMat Kff_, Kfd_, Kdd_, Bf_, Bd_;
    Cholesky chol_;
    Eigen::MatrixXd Z_;  // K_ff^-1 B_f^T
    Eigen::LDLT<Eigen::MatrixXd> S_;
    double rho_ = 0;  // augmentation weight
    bool augment_ = false;
    bool dirichlet_set_ = false;
    bool factor_current_ = false;

    void factorize_operator();
};

// 3-2-1 pinning DOFs for a pure-Neumann problem: A fixes x,y,z; B fixes y,z; C fixes z.
std::vector<int> pin_321(int node_a, int node_b, int node_c);

// Throws EquilibriumError when the resultant force/moment of f is not negligible.
void check_self_equilibrium(const SolidMesh& m, const Vec& f, double rel_tol = 1e-8);
// Throws EquilibriumError when applied loads plus reactions/constraint forces do not balance.
void check_global_equilibrium(const SolidMesh& m, const Vec& f, const SolidSolution& s, const SpMat& B,
                              double rel_tol = 1e-8);

// Nodal stress field extrapolated from Gauss points, kept per element.
struct StressField {
    int npe = 0;
    std::vector<Vec6> nodal;  // npe per element

    const Vec6& at(int e, int a) const { return nodal[static_cast<std::size_t>(e) * npe + a]; }
};

StressField compute_stresses(const SolidSystem& sys, const Vec& u);

// Element containing a point, with natural coordinates.
struct PointLocation {
    int elem = -1;
    Vec3 xi = Vec3::Zero();
};

class PointLocator {
public:
    explicit PointLocator(const SolidMesh& m);
    PointLocation locate(const Vec3& p) const;  // throws GeometryError outside the mesh
    std::vector<PointLocation> locate_all(const Vec3& p) const;

private:
    const SolidMesh& m_;
    double cell_ = 1, x0_ = 0, y0_ = 0;
    int nx_ = 1, ny_ = 1;
    std::vector<std::vector<int>> grid_;  // bottom-layer element ids per bucket
    std::vector<std::vector<int>> stack_;  // 2D element -> elements by layer
};

Vec6 stress_at(const SolidMesh& m, const StressField& s, const PointLocation& loc);
// Average of the element-interpolated stress over the elements of the point's layer sharing it.
Vec6 stress_at(const SolidMesh& m, const StressField& s, const PointLocator& loc, const Vec3& p);

// Layered through-thickness samples at a node column: per layer, values at its (order + 1) nodes.
struct LayeredProfile {
    std::vector<double> z;    // nz * (order + 1)
    std::vector<Vec6> stress; // same size
};
LayeredProfile column_stress_profile(const SolidMesh& m, const StressField& s, int plane_node);
// Same layout, sampled at the in-plane Gauss abscissae nearest the column (superconvergent
// derivatives) and fitted per layer through the thickness Gauss points.
LayeredProfile column_stress_profile(const SolidSystem& sys, const Vec& u, int plane_node);

// Eight generalized forces in the column frame from nodal forces (already per unit length
// when divided by column.weight). Slots 6..8 are not available from a single column.
Eigen::Matrix<double, 8, 1> generalized_forces_from_reactions(const SolidMesh& m, const NodeColumn& col,
                                                              const Vec& nodal_forces, bool per_length = true);

}  // namespace hp
