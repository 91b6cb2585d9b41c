#include "common.hpp"
#include "doctest.h"
#include "hp/errors.hpp"
#include "hp/plate_fem.hpp"

#include <cmath>
#include <sstream>

using namespace hp;
using namespace testing_support;

namespace {

// Structured grid on [0, lx] x [0, ly]; elements with x < split get region 0, others region 1.
PlateMesh grid(double lx, double ly, int nx, int ny, double split = 1e300) {
    PlateMesh m;
    for (int j = 0; j <= ny; ++j)
        for (int i = 0; i <= nx; ++i) m.nodes.emplace_back(lx * i / nx, ly * j / ny);
    auto id = [&](int i, int j) { return j * (nx + 1) + i; };
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            m.quads.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)});
            m.region.push_back(lx * (i + 0.5) / nx < split ? 0 : 1);
        }
    return m;
}

std::vector<int> nodes_where(const PlateMesh& m, const std::function<bool(const Vec2&)>& pred) {
    std::vector<int> out;
    for (int i = 0; i < static_cast<int>(m.nodes.size()); ++i)
        if (pred(m.nodes[i])) out.push_back(i);
    return out;
}

PlateStiffness iso(double E, double nu, double thickness) {
    return laminate_stiffness(isotropic_plate(E, nu, thickness / 2, 1));
}

// Kirchhoff centre deflection of a simply supported square plate under uniform pressure.
double navier_centre(double q, double a, double D) {
    const double pi = std::acos(-1.0);
    double w = 0;
    for (int m = 1; m < 400; m += 2)
        for (int n = 1; n < 400; n += 2) {
            const double s = std::sin(m * pi / 2) * std::sin(n * pi / 2);
            w += s / (m * n * std::pow(m * m + n * n, 2));
        }
    return 16 * q * std::pow(a, 4) / (std::pow(pi, 6) * D) * w;
}

double ss_plate_centre(double thickness, int n) {
    const double E = 1000, nu = 0.3, a = 1, q = 1e-3;
    const PlateMesh m = grid(a, a, n, n);
    PlateSystem sys(m, iso(E, nu, thickness));
    std::vector<int> dofs;
    for (int i = 0; i < static_cast<int>(m.nodes.size()); ++i) {
        const Vec2& x = m.nodes[i];
        const bool xe = x.x() < 1e-12 || x.x() > a - 1e-12, ye = x.y() < 1e-12 || x.y() > a - 1e-12;
        if (!xe && !ye) continue;
        dofs.insert(dofs.end(), {5 * i + pdof::VX, 5 * i + pdof::VY, 5 * i + pdof::VZ});
        if (xe) dofs.push_back(5 * i + pdof::TX);
        if (ye) dofs.push_back(5 * i + pdof::TY);
    }
    sys.set_dirichlet(dofs, Vec::Zero(dofs.size()));
    sys.factorize();
    sys.set_base_load(sys.pressure_load(q));
    const Vec U = sys.solve();
    const int c = nodes_where(m, [&](const Vec2& x) { return (x - Vec2(a / 2, a / 2)).norm() < 1e-12; })[0];
    const double D = E * std::pow(thickness, 3) / (12 * (1 - nu * nu));
    return U[5 * c + pdof::VZ] / navier_centre(q, a, D);
}

}  // namespace

TEST_CASE("rigid translation stores no strain energy") {
    const PlateMesh m = grid(2, 1, 6, 3);
    PlateSystem sys(m, laminate_stiffness(cross_ply()));
    const auto bnd = nodes_where(m, [](const Vec2& x) {
        return x.x() < 1e-12 || x.x() > 2 - 1e-12 || x.y() < 1e-12 || x.y() > 1 - 1e-12;
    });
    std::vector<int> dofs;
    std::vector<double> v;
    const double t[5] = {0.3, -0.2, 0, 0, 0.7};
    for (int n : bnd)
        for (int i = 0; i < 5; ++i) {
            dofs.push_back(5 * n + i);
            v.push_back(t[i]);
        }
    sys.set_dirichlet(dofs, Eigen::Map<Vec>(v.data(), v.size()));
    sys.factorize();
    const Vec U = sys.solve();
    CHECK(sys.strain_energy(U) < 1e-12);
    for (int n = 0; n < static_cast<int>(m.nodes.size()); ++n)
        CHECK(U[5 * n + pdof::VZ] == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("simply supported square plate matches the Navier series") {
    CHECK(std::abs(ss_plate_centre(0.01, 16) - 1) < 0.02);
}

TEST_CASE("no shear locking at slenderness 1e-3") {
    CHECK(std::abs(ss_plate_centre(1e-3, 16) - 1) < 0.05);
}

TEST_CASE("cantilever strip with prescribed tip deflection") {
    const double h = 0.2, L = 10;
    const PlateMesh m = grid(L, 5, 20, 10, 5);
    PlateSystem sys(m, laminate_stiffness(cross_ply()));
    std::vector<int> dofs;
    std::vector<double> v;
    for (int n : nodes_where(m, [](const Vec2& x) { return x.x() < 1e-12; }))
        for (int i = 0; i < 5; ++i) {
            dofs.push_back(5 * n + i);
            v.push_back(0);
        }
    const auto tip = nodes_where(m, [&](const Vec2& x) { return x.x() > L - 1e-12; });
    for (int n : tip) {
        dofs.push_back(5 * n + pdof::VZ);
        v.push_back(2 * h);
    }
    sys.set_dirichlet(dofs, Eigen::Map<Vec>(v.data(), v.size()));
    sys.factorize();
    const Vec U = sys.solve();
    const Vec r = sys.internal_forces(U, {0, 1});
    double P = 0;
    for (int n : tip) P += r[5 * n + pdof::VZ];
    CHECK(P > 0);
    auto line = [&](double x) {
        auto ids = nodes_where(m, [&](const Vec2& p) { return std::abs(p.x() - x) < 1e-12; });
        return ids;
    };
    const auto clamp = sys.trace(U, line(0), false, {0});
    const auto mid = sys.trace(U, line(5), false, {0});
    const double mc = std::abs(clamp[5].Fg[2]), mm = std::abs(mid[5].Fg[2]);
    CHECK(mc > mm);
    CHECK(sys.factorizations() == 1);
}

TEST_CASE("force rotation to the edge frame") {
    Vec8 F = Vec8::Zero();
    F[0] = 1;
    const Vec8 r = rotate_forces(F, std::acos(-1.0) / 4);
    CHECK(r[0] == doctest::Approx(0.5));
    CHECK(r[1] == doctest::Approx(-0.5));
    CHECK(r[5] == doctest::Approx(0.5));
    Vec8 G;
    G << 1, 2, 3, 4, 5, 6, 7, 8;
    CHECK((rotate_forces(G, 0) - G).cwiseAbs().maxCoeff() == 0.0);
    const Vec5 d = (Vec5() << 1, 2, 3, 4, 5).finished();
    CHECK((conjugate_to_dofs(dofs_to_conjugate(d)) - d).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("consistent interface loads") {
    const PlateMesh m = grid(2, 2, 2, 2);
    const auto edge = nodes_where(m, [](const Vec2& x) { return std::abs(x.x() - 1) < 1e-12; });
    REQUIRE(edge.size() == 3);
    const std::vector<Vec5> zero(3, Vec5::Zero());
    CHECK(interface_load(m, edge, false, zero).cwiseAbs().maxCoeff() == 0.0);

    std::vector<Vec5> L(3, Vec5::Zero());
    for (auto& l : L) l[4] = 2.0;
    Vec f = interface_load(m, edge, false, L);
    CHECK(f.sum() == doctest::Approx(2.0 * 2));
    CHECK(f[5 * edge[0] + pdof::VZ] == doctest::Approx(1.0));
    CHECK(f[5 * edge[1] + pdof::VZ] == doctest::Approx(2.0));

    std::vector<Vec5> hat(3, Vec5::Zero());
    hat[1][2] = 1;
    f = interface_load(m, edge, false, hat);
    CHECK(f[5 * edge[0] + pdof::TY] == doctest::Approx(1.0 / 6));
    CHECK(f[5 * edge[1] + pdof::TY] == doctest::Approx(2.0 / 3));
    CHECK(f[5 * edge[2] + pdof::TY] == doctest::Approx(1.0 / 6));
    hat[1][2] = 0;
    hat[1][3] = 1;
    f = interface_load(m, edge, false, hat);
    CHECK(f[5 * edge[1] + pdof::TX] == doctest::Approx(-2.0 / 3));
    CHECK_THROWS_AS(interface_load(m, edge, false, std::vector<Vec5>(2)), MeshMismatchError);
}

TEST_CASE("traces of a uniform membrane state and work duality") {
    const double L = 4, eps = 1e-3;
    const PlateMesh m = grid(L, 2, 8, 4, 2);
    const auto S = laminate_stiffness(cross_ply());
    PlateSystem sys(m, S);
    std::vector<int> dofs;
    std::vector<double> v;
    for (int n = 0; n < static_cast<int>(m.nodes.size()); ++n) {
        const Vec2& x = m.nodes[n];
        const bool edge = x.x() < 1e-12 || x.x() > L - 1e-12 || x.y() < 1e-12 || x.y() > 2 - 1e-12;
        if (!edge) continue;
        for (int i = 0; i < 5; ++i) {
            dofs.push_back(5 * n + i);
            v.push_back(i == pdof::VX ? eps * x.x() : 0.0);
        }
    }
    sys.set_dirichlet(dofs, Eigen::Map<Vec>(v.data(), v.size()));
    sys.factorize();
    const Vec U = sys.solve();
    const auto line = nodes_where(m, [](const Vec2& x) { return std::abs(x.x() - 2) < 1e-12; });
    const auto tr = sys.trace(U, line, false, {0});
    const double Nxx = S.A(0, 0) * eps;
    for (const auto& t : tr) {
        CHECK(t.phi == doctest::Approx(0.0));
        CHECK(t.F[0] == doctest::Approx(Nxx).epsilon(1e-10));
        CHECK(std::abs(t.F[2]) < 1e-10 * Nxx);
        CHECK(std::abs(t.F[3]) < 1e-10 * Nxx);
        CHECK((t.F - t.Fg).cwiseAbs().maxCoeff() < 1e-14 * Nxx);
    }

    std::vector<Vec5> Lc;
    for (const auto& t : tr) Lc.push_back(t.F.head<5>());
    const Vec fb = interface_load(m, line, false, Lc);
    const Vec fi = sys.internal_forces(U, {0});
    Vec vstar = Vec::Zero(sys.ndof());
    for (std::size_t q = 0; q < line.size(); ++q) {
        vstar[5 * line[q] + pdof::VX] = 1.0 + 0.3 * static_cast<double>(q);
        vstar[5 * line[q] + pdof::VY] = 0.5;
    }
    CHECK(vstar.dot(fb) == doctest::Approx(vstar.dot(fi)).epsilon(1e-8));

    const auto far = nodes_where(m, [](const Vec2& x) { return std::abs(x.x() - 4) < 1e-12; });
    CHECK_THROWS_AS(sys.trace(U, far, false, {0}), MeshMismatchError);
}

TEST_CASE("corrective updates reuse the single factorization") {
    const PlateMesh m = grid(2, 2, 4, 4);
    PlateSystem sys(m, laminate_stiffness(cross_ply()));
    std::vector<int> dofs;
    for (int n : nodes_where(m, [](const Vec2& x) { return x.x() < 1e-12; }))
        for (int i = 0; i < 5; ++i) dofs.push_back(5 * n + i);
    sys.set_dirichlet(dofs, Vec::Zero(dofs.size()));
    sys.factorize();
    sys.set_base_load(sys.pressure_load(1e-3));
    const Vec U0 = sys.solve();
    Vec dc = Vec::Zero(sys.ndof());
    dc[5 * 24 + pdof::VZ] = 1e-3;
    sys.add_corrective(dc);
    const Vec U1 = sys.solve();
    sys.add_corrective(-dc);
    const Vec U2 = sys.solve();
    CHECK((U1 - U0 - sys.solve_homogeneous(dc)).cwiseAbs().maxCoeff() < 1e-12 * U1.cwiseAbs().maxCoeff());
    CHECK((U2 - U0).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(sys.factorizations() == 1);
    std::ostringstream os;
    write_plate_csv(os, m, U0);
    CHECK(os.str().rfind("node,x,y,v_x,v_y,theta_x,theta_y,v_z", 0) == 0);
}
