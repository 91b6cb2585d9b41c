#include "common.hpp"
#include "doctest.h"
#include "hp/errors.hpp"
#include "hp/solid_fem.hpp"

#include <cmath>
#include <cstring>
#include <random>

using namespace hp;
using namespace testing_support;

namespace {

Mesh2D rect_layout(double x0, double x1, double y0, double y1, int nx, int ny, int order) {
    BlockSpec b;
    b.map = [=](double u, double v) { return Vec2(x0 + u * (x1 - x0), y0 + v * (y1 - y0)); };
    b.u = uniform_breaks(nx);
    b.v = uniform_breaks(ny);
    auto m = build_block_mesh({b}, order, std::max(x1 - x0, y1 - y0));
    const double t = 1e-9;
    m.edges["x0"] = collect_line(m, 0, x0, false, t);
    m.edges["xL"] = collect_line(m, 0, x1, true, t);
    return m;
}

std::vector<int> nodes_where(const SolidMesh& m, const std::function<bool(const Vec3&)>& pred) {
    std::vector<int> out;
    for (int i = 0; i < static_cast<int>(m.nodes.size()); ++i)
        if (pred(m.nodes[i])) out.push_back(i);
    return out;
}

std::vector<int> all_dofs(const std::vector<int>& nodes) {
    std::vector<int> d;
    for (int n : nodes)
        for (int i = 0; i < 3; ++i) d.push_back(3 * n + i);
    return d;
}

Vec prescribed(const SolidSystem& sys, const std::function<Vec3(const Vec3&)>& u) {
    const auto& d = sys.dirichlet_dofs();
    Vec ud(d.size());
    for (std::size_t k = 0; k < d.size(); ++k) ud[k] = u(sys.mesh().nodes[d[k] / 3])[d[k] % 3];
    return ud;
}

Mat6 iso_C(double E, double nu) { return ply_stiffness(OrthotropicPly::isotropic(E, nu, 1)); }

Vec6 voigt_strain(const Eigen::Matrix3d& G) {
    const Eigen::Matrix3d e = 0.5 * (G + G.transpose());
    Vec6 v;
    v << e(0, 0), e(1, 1), e(2, 2), 2 * e(1, 2), 2 * e(0, 2), 2 * e(0, 1);
    return v;
}

struct Block {
    Mesh2D layout;
    SolidMesh mesh;
};

// Beam block [0, len] x [-w/2, w/2], thickness 2 hh.
Block beam(double len, double w, double hh, int nx, int ny, int order, const Laminate& lam, int lpp) {
    Block b;
    b.layout = rect_layout(0, len, -w / 2, w / 2, nx, ny, order);
    b.mesh = extrude(b.layout, lam, lpp, {kZoneI});
    b.mesh.face_sets["xL"] = faces_along(b.mesh, b.layout, b.layout.edges["xL"]);
    (void)hh;
    return b;
}

}  // namespace

TEST_CASE("zero load gives zero displacement and reactions") {
    const auto lam = isotropic_plate(100, 0.3, 0.5, 2);
    auto b = beam(4, 1, 0.5, 4, 1, 2, lam, 1);
    SolidSystem sys(b.mesh, lam);
    sys.set_dirichlet(all_dofs(nodes_where(b.mesh, [](const Vec3& x) { return x.x() < 1e-12; })));
    sys.factorize();
    const auto s = sys.solve(Vec::Zero(sys.ndof()), Vec::Zero(sys.dirichlet_dofs().size()));
    CHECK(s.u.cwiseAbs().maxCoeff() == 0.0);
    CHECK(s.reaction.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single 8-node hexahedron uniaxial patch test") {
    const double E = 7, nu = 0.3, sxx = 2;
    const auto lam = isotropic_plate(E, nu, 0.5, 1);
    auto b = beam(1, 1, 0.5, 1, 1, 1, lam, 1);
    REQUIRE(b.mesh.num_elems() == 1);
    SolidSystem sys(b.mesh, lam);
    std::vector<int> fixed;
    for (int n = 0; n < 8; ++n) {
        const Vec3& x = b.mesh.nodes[n];
        if (x.x() < 1e-12) fixed.push_back(3 * n);
        if (x.y() < -0.5 + 1e-12) fixed.push_back(3 * n + 1);
        if (x.z() < -0.5 + 1e-12) fixed.push_back(3 * n + 2);
    }
    sys.set_dirichlet(fixed);
    sys.factorize();
    const Vec f = sys.face_load(b.mesh.face_sets["xL"], [&](const Vec3&, const Vec3& n, int, double) {
        return Vec3(sxx * n.x(), 0, 0);
    });
    const auto s = sys.solve(f, Vec::Zero(fixed.size()));
    for (int n = 0; n < 8; ++n) {
        const Vec3& x = b.mesh.nodes[n];
        CHECK(s.u[3 * n] == doctest::Approx(sxx / E * x.x()).epsilon(1e-12));
        CHECK(s.u[3 * n + 1] == doctest::Approx(-nu * sxx / E * (x.y() + 0.5)).epsilon(1e-12));
        CHECK(s.u[3 * n + 2] == doctest::Approx(-nu * sxx / E * (x.z() + 0.5)).epsilon(1e-12));
    }
    const auto st = compute_stresses(sys, s.u);
    for (int a = 0; a < 8; ++a) {
        CHECK(st.at(0, a)[0] == doctest::Approx(sxx).epsilon(1e-12));
        CHECK(std::abs(st.at(0, a)[1]) < 1e-12);
    }
}

TEST_CASE("distorted quadratic patch reproduces a linear field exactly") {
    const auto lam = isotropic_plate(1000, 0.3, 0.5, 2);
    auto layout = rect_layout(0, 1, 0, 1, 2, 2, 2);
    SolidMesh m = extrude(layout, lam, 1, {kZoneI});
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> jit(-0.04, 0.04);
    auto on_boundary = [](const Vec3& x) {
        return std::abs(x.x()) < 1e-12 || std::abs(x.x() - 1) < 1e-12 || std::abs(x.y()) < 1e-12 ||
               std::abs(x.y() - 1) < 1e-12 || std::abs(std::abs(x.z()) - 0.5) < 1e-12;
    };
    for (auto& x : m.nodes)
        if (!on_boundary(x)) x += Vec3(jit(rng), jit(rng), 0.5 * jit(rng));
    REQUIRE(min_jacobian(m) > 0);
    Eigen::Matrix3d G;
    G << 1e-3, 2e-4, -3e-4, 5e-4, -2e-3, 1e-4, 7e-4, 3e-4, 1.5e-3;
    const Vec3 a(0.01, -0.02, 0.005);
    auto field = [&](const Vec3& x) { return Vec3(a + G * x); };
    SolidSystem sys(m, lam);
    sys.set_dirichlet(all_dofs(nodes_where(m, on_boundary)));
    sys.factorize();
    const auto s = sys.solve(Vec::Zero(sys.ndof()), prescribed(sys, field));
    double err = 0;
    for (int n = 0; n < static_cast<int>(m.nodes.size()); ++n)
        err = std::max(err, (s.u.segment<3>(3 * n) - field(m.nodes[n])).cwiseAbs().maxCoeff());
    CHECK(err < 1e-10 * G.cwiseAbs().maxCoeff());

    const Vec6 sig = iso_C(1000, 0.3) * voigt_strain(G);
    const auto st = compute_stresses(sys, s.u);
    double serr = 0;
    for (const auto& v : st.nodal) serr = std::max(serr, (v - sig).cwiseAbs().maxCoeff());
    CHECK(serr < 1e-10 * sig.cwiseAbs().maxCoeff());

    SUBCASE("uniform state gives a constant through-thickness profile") {
        int centre = -1;
        for (int k = 0; k < static_cast<int>(m.plane_nodes.size()); ++k)
            if ((m.plane_nodes[k] - Vec2(0.5, 0.5)).norm() < 1e-12) centre = k;
        REQUIRE(centre >= 0);
        const auto p = column_stress_profile(m, st, centre);
        CHECK(p.z.size() == 2 * 3);
        for (const auto& v : p.stress) CHECK((v - sig).cwiseAbs().maxCoeff() < 1e-10 * sig.cwiseAbs().maxCoeff());
        PointLocator loc(m);
        const Vec6 q = stress_at(m, st, loc, Vec3(0.37, 0.61, 0.12));
        CHECK((q - sig).cwiseAbs().maxCoeff() < 1e-10 * sig.cwiseAbs().maxCoeff());
        CHECK_THROWS_AS(loc.locate(Vec3(2, 0.5, 0)), GeometryError);
    }
}

TEST_CASE("slender cantilever block matches the shear-corrected beam formula") {
    const double E = 1000, nu = 0.0, len = 10, w = 1, hh = 0.5, P = 0.1;
    const auto lam = isotropic_plate(E, nu, hh, 2);
    auto b = beam(len, w, hh, 20, 2, 2, lam, 2);
    SolidSystem sys(b.mesh, lam);
    sys.set_dirichlet(all_dofs(nodes_where(b.mesh, [](const Vec3& x) { return x.x() < 1e-12; })));
    sys.factorize();
    const Vec f = sys.face_load(b.mesh.face_sets["xL"], [&](const Vec3&, const Vec3&, int, double) {
        return Vec3(0, 0, P / (w * 2 * hh));
    });
    const auto s = sys.solve(f, Vec::Zero(sys.dirichlet_dofs().size()));
    const auto tip = nodes_where(b.mesh, [&](const Vec3& x) { return std::abs(x.x() - len) < 1e-12; });
    double uz = 0;
    for (int n : tip) uz += s.u[3 * n + 2];
    uz /= static_cast<double>(tip.size());
    const double I = w * std::pow(2 * hh, 3) / 12, A = w * 2 * hh, G = E / (2 * (1 + nu));
    const double ref = P * std::pow(len, 3) / (3 * E * I) + P * len / (5.0 / 6.0 * G * A);
    CHECK(std::abs(uz - ref) < 0.1 * ref);

    SUBCASE("global equilibrium and energy consistency") {
        Vec r = s.reaction;
        double fz = 0;
        for (int n = 0; n < static_cast<int>(b.mesh.nodes.size()); ++n) fz += r[3 * n + 2] + f[3 * n + 2];
        CHECK(std::abs(fz) < 1e-8 * P);
        CHECK_NOTHROW(check_global_equilibrium(b.mesh, f, s, SpMat(0, sys.ndof())));
        const Vec Ku = sys.internal_forces(s.u);
        CHECK(s.u.dot(Ku) == doctest::Approx(f.dot(s.u)).epsilon(1e-10));
    }
}

TEST_CASE("work constraint is satisfied and its multiplier is the generalized reaction") {
    const auto lam = isotropic_plate(1000, 0.25, 0.5, 2);
    auto b = beam(6, 1, 0.5, 6, 1, 2, lam, 1);
    SolidSystem sys(b.mesh, lam);
    sys.set_dirichlet(all_dofs(nodes_where(b.mesh, [](const Vec3& x) { return x.x() < 1e-12; })));
    const auto tip = nodes_where(b.mesh, [](const Vec3& x) { return std::abs(x.x() - 6) < 1e-12; });
    std::vector<Triplet> t;
    for (int n : tip) t.emplace_back(0, 3 * n + 2, 1.0 / static_cast<double>(tip.size()));
    SpMat B(1, sys.ndof());
    B.setFromTriplets(t.begin(), t.end());
    sys.set_constraints(B);
    sys.factorize();
    Vec c(1);
    c << 0.05;
    const Vec f = Vec::Zero(sys.ndof());
    const auto s = sys.solve(f, Vec::Zero(sys.dirichlet_dofs().size()), c);
    CHECK((B * s.u)[0] == doctest::Approx(0.05).epsilon(1e-10));
    const Vec Ku = sys.internal_forces(s.u);
    double Pz = 0;
    for (int n : tip) Pz += Ku[3 * n + 2];
    CHECK(Pz > 0);
    CHECK(-s.lambda[0] == doctest::Approx(Pz).epsilon(1e-9));
    CHECK_NOTHROW(check_global_equilibrium(b.mesh, f, s, B));
}

TEST_CASE("under-constrained and unbalanced problems are reported") {
    const auto lam = isotropic_plate(100, 0.3, 0.5, 1);
    auto b = beam(2, 1, 0.5, 2, 1, 1, lam, 1);
    SolidSystem sys(b.mesh, lam);
    sys.set_dirichlet({0, 1, 2});
    CHECK_THROWS_AS(sys.factorize(), UnderConstrainedError);
    try {
        sys.factorize();
    } catch (const UnderConstrainedError& e) {
        CHECK(std::string(e.what()).find("Rx") != std::string::npos);
    }
    Vec f = Vec::Zero(sys.ndof());
    f[5] = 1;
    CHECK_THROWS_AS(check_self_equilibrium(b.mesh, f), EquilibriumError);
    const Vec u = Vec::Random(sys.ndof());
    CHECK_NOTHROW(check_self_equilibrium(b.mesh, sys.internal_forces(u)));
}

TEST_CASE("parallel and serial element kernels agree bit for bit") {
    const auto lam = cross_ply();
    Geometry g;
    g.kind = Geometry::kCell;
    Densities d;
    d.n_side = 4;
    d.layers_per_ply = 1;
    const auto m = generate_solid_mesh(g, lam, d, true);
    std::vector<Mat6> C;
    for (const auto& p : lam.plies) C.push_back(ply_stiffness(p));
    const auto a = compute_element_matrices(m, C, {false, false});
    const auto b = compute_element_matrices(m, C, {true, false});
    const auto c = compute_element_matrices(m, C, {true, true});
    REQUIRE(a.data.size() == b.data.size());
    CHECK(std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0);
    double diff = 0;
    for (int e = 0; e < m.num_elems(); ++e)
        for (int k = 0; k < a.size * a.size; ++k) diff = std::max(diff, std::abs(a.K(e)[k] - c.K(e)[k]));
    CHECK(diff < 1e-12);
    CHECK(c.data.size() < a.data.size());
}

TEST_CASE("generalized forces from nodal forces") {
    SolidMesh m;
    m.nodes = {Vec3(0, 0, 0), Vec3(0, 0, 0.3), Vec3(0, 0, -0.3)};
    NodeColumn col;
    col.phi = 0;
    col.weight = 1;
    col.node_ids = {0};
    Vec f = Vec::Zero(9);
    f[0] = 1;
    auto F = generalized_forces_from_reactions(m, col, f, false);
    CHECK(F[0] == 1.0);
    CHECK(F.tail<7>().cwiseAbs().maxCoeff() == 0.0);

    col.node_ids = {1, 2};
    f.setZero();
    f[3] = 1;
    f[6] = -1;
    F = generalized_forces_from_reactions(m, col, f, false);
    CHECK(F[0] == 0.0);
    CHECK(F[2] == doctest::Approx(0.6));

    col.weight = 0.5;
    F = generalized_forces_from_reactions(m, col, f, true);
    CHECK(F[2] == doctest::Approx(1.2));
    CHECK_THROWS_AS(generalized_forces_from_reactions(m, col, Vec::Zero(3), true), Error);

    SUBCASE("consistent loads of a parabolic shear profile") {
        const auto lam = cross_ply();
        const double h = lam.half_thickness();
        Geometry g;
        Densities d;
        d.n_side = 4;
        const auto sm = generate_solid_mesh(g, lam, d, true);
        SolidSystem sys(sm, lam);
        const Vec fq = sys.face_load(sm.face_sets.at("x0"), [&](const Vec3& x, const Vec3& n, int, double) {
            return Vec3(0, 0, 3.0 / (4 * h) * (1 - x.z() * x.z() / (h * h)) * n.x());
        });
        const Mesh2D lay = make_layout(g, d, false);
        const auto cols = interface_columns(sm, curve_points(lay, lay.edges.at("x0")), false);
        for (const auto& cc : cols) {
            const auto Fq = generalized_forces_from_reactions(sm, cc, fq, true);
            CHECK(std::abs(std::abs(Fq[4]) - 1) < 1e-10);
        }
    }
}
