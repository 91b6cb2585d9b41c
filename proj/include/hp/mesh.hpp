/**
 * @file mesh.hpp
 * @brief Structured block meshes: quadratic/linear 2D layouts, extruded hexahedral solids,
 *        quadrilateral plate meshes and interface node columns.
 */
#pragma once

#include "hp/laminate.hpp"

#include <Eigen/Dense>

#include <array>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace hp {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

enum Region : int { kZoneI = 0, kZoneB = 1, kZoneC = 2 };

struct EdgeSet {
    std::vector<int> nodes;  // ordered along s; owning side on the left
    bool closed = false;
};

// In-plane layout. order 2 stores 9-node quads (corners, mids 01/12/23/30, centre).
struct Mesh2D {
    int order = 2;
    std::vector<Vec2> nodes;
    std::vector<char> kind;  // 0 corner, 1 mid-edge, 2 centre
    std::vector<std::array<int, 9>> elems;
    std::vector<int> region;
    std::map<std::string, EdgeSet> edges;

    int nodes_per_elem() const { return order == 2 ? 9 : 4; }
};

struct BlockSpec {
    std::function<Vec2(double, double)> map;  // (u, v) in [0,1]^2
    std::vector<double> u, v;                 // element breakpoints, size n+1, from 0 to 1
    int region = kZoneI;
};

std::vector<double> uniform_breaks(int n);
// n elements, sizes in geometric progression; ratio > 1 grows toward u = 1.
std::vector<double> graded_breaks(int n, double ratio);

Mesh2D build_block_mesh(const std::vector<BlockSpec>& blocks, int order, double length_scale);

// Nodes lying on the boundary of an axis-aligned square, counter-clockwise from (cx-s, cy-s).
EdgeSet collect_square(const Mesh2D& m, double cx, double cy, double half, double tol);
// Nodes with coordinate[axis] == value, sorted by the other coordinate (ascending or descending).
EdgeSet collect_line(const Mesh2D& m, int axis, double value, bool ascending, double tol);
EdgeSet collect_circle(const Mesh2D& m, double cx, double cy, double r, double tol);

struct SolidFace {
    std::vector<int> nodes;  // Q4 or Q8 in (s, z) natural order
    Vec3 normal;             // outward for the owning side
    int elem = -1;
};

struct SolidMesh {
    int order = 2;  // 1: HEX8, 2: HEX20
    std::vector<Vec3> nodes;
    std::vector<int> conn;  // npe per element
    std::vector<int> ply, region, elem2d, layer;
    std::vector<double> z_levels;
    std::vector<std::vector<int>> column;  // per in-plane node id: 3D nodes by increasing z
    std::vector<Vec2> plane_nodes;         // in-plane coordinates, indexed like column
    std::vector<int> node2d;               // 3D node -> in-plane node
    std::map<std::string, std::vector<SolidFace>> face_sets;
    int layers_per_ply = 1;
    double h = 0;

    int npe() const { return order == 2 ? 20 : 8; }
    int num_elems() const { return static_cast<int>(conn.size()) / npe(); }
    const int* elem(int e) const { return conn.data() + static_cast<std::size_t>(e) * npe(); }
};

struct PlateMesh {
    std::vector<Vec2> nodes;
    std::vector<std::array<int, 4>> quads;
    std::vector<int> region;
    std::map<std::string, EdgeSet> edge_sets;
};

struct NodeColumn {
    double s = 0;
    double phi = 0;
    int plane_node = -1;
    std::vector<int> node_ids;
    std::vector<double> z_values;
    double weight = 0;     // tributary arclength for per-length normalisation
    bool corner = false;   // polygon corner of the curve
    bool full = true;      // carries every z level of the mesh
};

// Extrudes the elements of `layout` whose region is in `regions`.
SolidMesh extrude(const Mesh2D& layout, const Laminate& lam, int layers_per_ply,
                  const std::vector<int>& regions);

// Lateral faces of `solid` along an ordered in-plane edge set.
std::vector<SolidFace> faces_along(const SolidMesh& solid, const Mesh2D& layout, const EdgeSet& edge);

PlateMesh plate_from_layout(const Mesh2D& layout, const std::vector<int>& regions);

// One column per point of the curve (in-plane node ids of `layout`), ordered by s.
std::vector<NodeColumn> interface_columns(const SolidMesh& solid, const std::vector<Vec2>& curve,
                                          bool closed);
std::vector<Vec2> curve_points(const Mesh2D& layout, const EdgeSet& e);

// Minimum det(J) over all quadrature points of all elements.
double min_jacobian(const SolidMesh& m);
double min_jacobian(const PlateMesh& m);

// ---- scenario geometries -------------------------------------------------------------

struct Geometry {
    enum Kind { kCell, kCantilever, kHoled } kind = kCell;
    // cell: square [-c, c]^2
    double cell_half = 1;
    // cantilever: local zone x in [0, L], plate x in [0, 2L], width a
    double L = 5, a = 5;
    // holed plate: plate [0, Lp] x [-ap/2, ap/2], zone square of side `zone` centred at (xc, 0)
    double Lp = 60, ap = 60, xc = 30, zone = 20, r = 2;
    double buffer = 2;  // gamma_I -> gamma_C distance (both kinds)
};

struct Densities {
    int n_side = 24;        // elements along a zone side (cell: per side)
    int n_radial = 8;       // O-grid elements between hole and gamma_I
    int n_buffer = 2;       // elements across the buffer
    int n_outer = 6;        // graded elements in each outer band
    double outer_ratio = 1.3;
    int layers_per_ply = 4;
    int order = 2;
    int n_outside = 20;     // cantilever: elements along x in [L, 2L]
};

// In-plane layout for a scenario; `hole` removes the disc from the inner zone (holed kind).
Mesh2D make_layout(const Geometry& g, const Densities& d, bool hole);

SolidMesh generate_solid_mesh(const Geometry& g, const Laminate& lam, const Densities& d,
                              bool whole_domain);
PlateMesh generate_plate_mesh(const Geometry& g, const Densities& d, bool hole);

void write_hsm1(std::ostream& os, const SolidMesh& m);

}  // namespace hp
