#include "hp/plate_fem.hpp"

#include "hp/errors.hpp"
#include "hp/shape.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace hp {

namespace {

using Row20 = Eigen::Matrix<double, 1, 20>;
using B3 = Eigen::Matrix<double, 3, 20>;
using B2 = Eigen::Matrix<double, 2, 20>;

struct Kinematics {
    B3 Bm, Bb;
    B2 Bs;
    double det;
};

// Covariant transverse shear strain along natural direction d (0: xi, 1: eta) at (xi, eta).
Row20 covariant_shear(const Vec2* X, double xi, double eta, int d) {
    double N[4], dN[4][2];
    shape::quad(4, xi, eta, N, dN);
    Vec2 g = Vec2::Zero();
    for (int a = 0; a < 4; ++a) g += dN[a][d] * X[a];
    Row20 r = Row20::Zero();
    for (int a = 0; a < 4; ++a) {
        r(5 * a + pdof::VZ) = dN[a][d];
        r(5 * a + pdof::TY) = N[a] * g.x();   // beta_x = theta_y
        r(5 * a + pdof::TX) = -N[a] * g.y();  // beta_y = -theta_x
    }
    return r;
}

Kinematics kinematics(const Vec2* X, double xi, double eta) {
    double N[4], dN[4][2];
    shape::quad(4, xi, eta, N, dN);
    Eigen::Matrix2d J = Eigen::Matrix2d::Zero();
    for (int a = 0; a < 4; ++a) {
        J(0, 0) += dN[a][0] * X[a].x();
        J(0, 1) += dN[a][0] * X[a].y();
        J(1, 0) += dN[a][1] * X[a].x();
        J(1, 1) += dN[a][1] * X[a].y();
    }
    Kinematics k;
    k.det = J.determinant();
    const Eigen::Matrix2d Ji = J.inverse();
    k.Bm.setZero();
    k.Bb.setZero();
    for (int a = 0; a < 4; ++a) {
        const Vec2 g = Ji * Vec2(dN[a][0], dN[a][1]);
        const int c = 5 * a;
        k.Bm(0, c + pdof::VX) = g.x();
        k.Bm(1, c + pdof::VY) = g.y();
        k.Bm(2, c + pdof::VX) = g.y();
        k.Bm(2, c + pdof::VY) = g.x();
        k.Bb(0, c + pdof::TY) = g.x();
        k.Bb(1, c + pdof::TX) = -g.y();
        k.Bb(2, c + pdof::TY) = g.y();
        k.Bb(2, c + pdof::TX) = -g.x();
    }
    // MITC4 tying: gamma_xi at (0, -1), (0, 1); gamma_eta at (1, 0), (-1, 0).
    const Row20 gA = covariant_shear(X, 0, -1, 0), gC = covariant_shear(X, 0, 1, 0);
    const Row20 gB = covariant_shear(X, 1, 0, 1), gD = covariant_shear(X, -1, 0, 1);
    B2 nat;
    nat.row(0) = 0.5 * (1 - eta) * gA + 0.5 * (1 + eta) * gC;
    nat.row(1) = 0.5 * (1 + xi) * gB + 0.5 * (1 - xi) * gD;
    k.Bs = Ji * nat;
    return k;
}

void quad_coords(const PlateMesh& m, int e, Vec2* X) {
    for (int a = 0; a < 4; ++a) X[a] = m.nodes[m.quads[e][a]];
}

}  // namespace

void mitc4_stiffness(const Vec2* X, const PlateStiffness& S, double* Ke) {
    Eigen::Map<Eigen::Matrix<double, 20, 20, Eigen::RowMajor>> K(Ke);
    K.setZero();
    const double g = 1.0 / std::sqrt(3.0);
    for (double xi : {-g, g})
        for (double eta : {-g, g}) {
            const Kinematics k = kinematics(X, xi, eta);
            if (!(k.det > 0)) throw GeometryError("non-positive Jacobian in plate element");
            K.noalias() += k.det * (k.Bm.transpose() * (S.A * k.Bm + S.B * k.Bb) +
                                    k.Bb.transpose() * (S.B * k.Bm + S.D * k.Bb) +
                                    k.Bs.transpose() * S.Fs * k.Bs);
        }
    K = 0.5 * (K + K.transpose()).eval();
}

Eigen::Matrix<double, 8, 1> mitc4_resultants(const Vec2* X, const PlateStiffness& S, const double* Ue, double xi,
                                             double eta) {
    const Kinematics k = kinematics(X, xi, eta);
    const Eigen::Map<const Eigen::Matrix<double, 20, 1>> u(Ue);
    const Eigen::Vector3d e = k.Bm * u, kap = k.Bb * u;
    const Eigen::Vector2d gam = k.Bs * u;
    Eigen::Matrix<double, 8, 1> r;
    r.segment<3>(0) = S.A * e + S.B * kap;
    r.segment<3>(3) = S.B * e + S.D * kap;
    r.segment<2>(6) = S.Fs * gam;
    return r;
}

Vec5 dofs_to_conjugate(const Vec5& d) {
    Vec5 q;
    q << d[pdof::VX], d[pdof::VY], d[pdof::TY], -d[pdof::TX], d[pdof::VZ];
    return q;
}

Vec5 conjugate_to_dofs(const Vec5& q) {
    Vec5 d;
    d[pdof::VX] = q[0];
    d[pdof::VY] = q[1];
    d[pdof::TY] = q[2];
    d[pdof::TX] = -q[3];
    d[pdof::VZ] = q[4];
    return d;
}

Vec8 rotate_forces(const Vec8& F, double phi) {
    const double c = std::cos(phi), s = std::sin(phi);
    auto nn = [&](double xx, double xy, double yy) { return c * c * xx + 2 * c * s * xy + s * s * yy; };
    auto nt = [&](double xx, double xy, double yy) { return -c * s * xx + (c * c - s * s) * xy + c * s * yy; };
    auto tt = [&](double xx, double xy, double yy) { return s * s * xx - 2 * c * s * xy + c * c * yy; };
    Vec8 r;
    r[0] = nn(F[0], F[1], F[5]);
    r[1] = nt(F[0], F[1], F[5]);
    r[2] = nn(F[2], F[3], F[6]);
    r[3] = nt(F[2], F[3], F[6]);
    r[4] = c * F[4] + s * F[7];
    r[5] = tt(F[0], F[1], F[5]);
    r[6] = tt(F[2], F[3], F[6]);
    r[7] = -s * F[4] + c * F[7];
    return r;
}

PlateSystem::PlateSystem(const PlateMesh& mesh, const PlateStiffness& S, bool parallel) : mesh_(mesh), S_(S) {
    const int ne = static_cast<int>(mesh_.quads.size());
    Ke_.assign(static_cast<std::size_t>(ne) * 400, 0.0);
    bool bad = false;
#pragma omp parallel for schedule(static) if (parallel)
    for (int e = 0; e < ne; ++e) {
        Vec2 X[4];
        quad_coords(mesh_, e, X);
        try {
            mitc4_stiffness(X, S_, Ke_.data() + static_cast<std::size_t>(e) * 400);
        } catch (const GeometryError&) {
#pragma omp atomic write
            bad = true;
        }
    }
    if (bad) throw GeometryError("non-positive Jacobian in plate element");
    base_ = Vec::Zero(ndof());
    corr_ = Vec::Zero(ndof());
    dmap_ = DofMap::make(ndof(), {});
}

void PlateSystem::set_dirichlet(const std::vector<int>& dofs, const Vec& values) {
    if (static_cast<Eigen::Index>(dofs.size()) != values.size()) throw Error("Dirichlet size mismatch");
    std::vector<char> fixed(ndof(), 0);
    Vec v = Vec::Zero(ndof());
    for (std::size_t i = 0; i < dofs.size(); ++i) {
        fixed[dofs[i]] = 1;
        v[dofs[i]] = values[i];
    }
    dmap_ = DofMap::make(ndof(), fixed);
    ud_.resize(dmap_.n_fixed());
    for (int i = 0; i < dmap_.n_fixed(); ++i) ud_[i] = v[dmap_.fixed_dofs[i]];
}

void PlateSystem::factorize() {
    std::vector<int> conn;
    for (const auto& q : mesh_.quads) conn.insert(conn.end(), q.begin(), q.end());
    const auto adj = node_adjacency(static_cast<int>(mesh_.nodes.size()), conn, 4);
    SymAssembler as(dmap_, adj, 5);
    int dofs[20];
    for (std::size_t e = 0; e < mesh_.quads.size(); ++e) {
        for (int a = 0; a < 4; ++a)
            for (int i = 0; i < 5; ++i) dofs[5 * a + i] = 5 * mesh_.quads[e][a] + i;
        as.add(dofs, 20, element_K(static_cast<int>(e)));
    }
    as.finalize();
    Kff_ = std::move(as.Kff);
    Kfd_ = std::move(as.Kfd);
    try {
        chol_.factorize(Kff_);
    } catch (const SingularityError&) {
        throw UnderConstrainedError("plate system is singular: rigid modes not constrained");
    }
}

Vec PlateSystem::solve_homogeneous(const Vec& f) const {
    if (!chol_.ready()) throw SolverError("plate system not factorized");
    Vec ff(dmap_.n_free());
    for (int i = 0; i < dmap_.n_free(); ++i) ff[i] = f[dmap_.free_dofs[i]];
    const Vec uf = chol_.solve(ff);
    Vec U = Vec::Zero(ndof());
    for (int i = 0; i < dmap_.n_free(); ++i) U[dmap_.free_dofs[i]] = uf[i];
    return U;
}

Vec PlateSystem::solve() const {
    if (!chol_.ready()) throw SolverError("plate system not factorized");
    const Vec f = base_ + corr_;
    Vec ff(dmap_.n_free());
    for (int i = 0; i < dmap_.n_free(); ++i) ff[i] = f[dmap_.free_dofs[i]];
    if (dmap_.n_fixed() > 0) ff -= Kfd_ * ud_;
    const Vec uf = chol_.solve(ff);
    Vec U = Vec::Zero(ndof());
    for (int i = 0; i < dmap_.n_free(); ++i) U[dmap_.free_dofs[i]] = uf[i];
    for (int i = 0; i < dmap_.n_fixed(); ++i) U[dmap_.fixed_dofs[i]] = ud_[i];
    return U;
}

Vec PlateSystem::pressure_load(double p) const {
    Vec f = Vec::Zero(ndof());
    const double g = 1.0 / std::sqrt(3.0);
    double N[4], dN[4][2];
    for (std::size_t e = 0; e < mesh_.quads.size(); ++e) {
        Vec2 X[4];
        quad_coords(mesh_, static_cast<int>(e), X);
        for (double xi : {-g, g})
            for (double eta : {-g, g}) {
                shape::quad(4, xi, eta, N, dN);
                Eigen::Matrix2d J = Eigen::Matrix2d::Zero();
                for (int a = 0; a < 4; ++a) {
                    J.row(0) += dN[a][0] * X[a].transpose();
                    J.row(1) += dN[a][1] * X[a].transpose();
                }
                for (int a = 0; a < 4; ++a) f[5 * mesh_.quads[e][a] + pdof::VZ] += p * N[a] * J.determinant();
            }
    }
    return f;
}

Vec PlateSystem::internal_forces(const Vec& U, const std::vector<int>& regions) const {
    Vec f = Vec::Zero(ndof());
    Eigen::Matrix<double, 20, 1> ue;
    for (std::size_t e = 0; e < mesh_.quads.size(); ++e) {
        if (std::find(regions.begin(), regions.end(), mesh_.region[e]) == regions.end()) continue;
        for (int a = 0; a < 4; ++a) ue.segment<5>(5 * a) = U.segment<5>(5 * mesh_.quads[e][a]);
        const Eigen::Map<const Eigen::Matrix<double, 20, 20, Eigen::RowMajor>> K(element_K(static_cast<int>(e)));
        const Eigen::Matrix<double, 20, 1> fe = K * ue;
        for (int a = 0; a < 4; ++a) f.segment<5>(5 * mesh_.quads[e][a]) += fe.segment<5>(5 * a);
    }
    return f;
}

double PlateSystem::strain_energy(const Vec& U) const {
    const Vec f = internal_forces(U, {kZoneI, kZoneB, kZoneC});
    return 0.5 * U.dot(f);
}

void curve_frame(const std::vector<Vec2>& p, bool closed, std::vector<double>& s, std::vector<double>& phi) {
    const int n = static_cast<int>(p.size());
    s.assign(n, 0.0);
    phi.assign(n, 0.0);
    auto seg_normal = [&](int a, int b) {
        const Vec2 t = (p[b] - p[a]).normalized();
        return Vec2(t.y(), -t.x());
    };
    for (int q = 0; q < n; ++q) {
        if (q > 0) s[q] = s[q - 1] + (p[q] - p[q - 1]).norm();
        Vec2 nrm = Vec2::Zero();
        if (closed || q > 0) nrm += seg_normal((q - 1 + n) % n, q);
        if (closed || q < n - 1) nrm += seg_normal(q, (q + 1) % n);
        phi[q] = std::atan2(nrm.y(), nrm.x());
    }
}

InterfaceTrace PlateSystem::trace(const Vec& U, const std::vector<int>& curve, bool closed,
                                  const std::vector<int>& regions) const {
    const int n = static_cast<int>(curve.size());
    std::vector<Vec2> pts;
    for (int id : curve) pts.push_back(mesh_.nodes[id]);
    std::vector<double> s, phi;
    curve_frame(pts, closed, s, phi);
    std::vector<int> where(mesh_.nodes.size(), -1);
    for (int q = 0; q < n; ++q) where[curve[q]] = q;
    std::vector<Eigen::Matrix<double, 8, 1>> acc(n, Eigen::Matrix<double, 8, 1>::Zero());
    std::vector<int> cnt(n, 0);
    const double g = 1.0 / std::sqrt(3.0);
    const double gx[4] = {-g, g, g, -g}, gy[4] = {-g, -g, g, g};
    for (std::size_t e = 0; e < mesh_.quads.size(); ++e) {
        if (std::find(regions.begin(), regions.end(), mesh_.region[e]) == regions.end()) continue;
        const auto& qd = mesh_.quads[e];
        bool touches = false;
        for (int a = 0; a < 4; ++a) touches = touches || where[qd[a]] >= 0;
        if (!touches) continue;
        Vec2 X[4];
        quad_coords(mesh_, static_cast<int>(e), X);
        double ue[20];
        for (int a = 0; a < 4; ++a)
            for (int i = 0; i < 5; ++i) ue[5 * a + i] = U[5 * qd[a] + i];
        Eigen::Matrix<double, 8, 4> R;
        for (int k = 0; k < 4; ++k) R.col(k) = mitc4_resultants(X, S_, ue, gx[k], gy[k]);
        // Bilinear extrapolation from the 2x2 Gauss points to the corner nodes.
        const double r3 = std::sqrt(3.0);
        double N[4], dN[4][2];
        for (int a = 0; a < 4; ++a) {
            const int q = where[qd[a]];
            if (q < 0) continue;
            const auto& P = shape::quad_nodes();
            shape::quad(4, P[a][0] * r3, P[a][1] * r3, N, dN);
            Eigen::Matrix<double, 8, 1> v = Eigen::Matrix<double, 8, 1>::Zero();
            for (int k = 0; k < 4; ++k) v += N[k] * R.col(k);
            acc[q] += v;
            ++cnt[q];
        }
    }
    InterfaceTrace tr(n);
    for (int q = 0; q < n; ++q) {
        if (cnt[q] == 0) throw MeshMismatchError("trace curve is not adjacent to the requested side");
        const Eigen::Matrix<double, 8, 1> r = acc[q] / cnt[q];
        auto& t = tr[q];
        t.s = s[q];
        t.phi = phi[q];
        t.node = curve[q];
        t.V = U.segment<5>(5 * curve[q]);
        t.Fg << r[0], r[2], r[3], r[5], r[6], r[1], r[4], r[7];
        t.F = rotate_forces(t.Fg, phi[q]);
    }
    return tr;
}

Vec interface_load(const PlateMesh& mesh, const std::vector<int>& curve, bool closed, const std::vector<Vec5>& L) {
    const int n = static_cast<int>(curve.size());
    if (static_cast<int>(L.size()) != n) throw MeshMismatchError("line load samples do not match the curve");
    Vec f = Vec::Zero(5 * static_cast<Eigen::Index>(mesh.nodes.size()));
    const int nseg = closed ? n : n - 1;
    for (int q = 0; q < nseg; ++q) {
        const int a = q, b = (q + 1) % n;
        const double l = (mesh.nodes[curve[b]] - mesh.nodes[curve[a]]).norm();
        const Vec5 fa = l * (2 * L[a] + L[b]) / 6, fb = l * (L[a] + 2 * L[b]) / 6;
        f.segment<5>(5 * curve[a]) += conjugate_to_dofs(fa);
        f.segment<5>(5 * curve[b]) += conjugate_to_dofs(fb);
    }
    return f;
}

void write_plate_csv(std::ostream& os, const PlateMesh& mesh, const Vec& U) {
    os.precision(9);
    os << "node,x,y,v_x,v_y,theta_x,theta_y,v_z\n";
    for (std::size_t i = 0; i < mesh.nodes.size(); ++i) {
        os << i << ',' << mesh.nodes[i].x() << ',' << mesh.nodes[i].y();
        for (int k = 0; k < 5; ++k) os << ',' << U[5 * i + k];
        os << '\n';
    }
}

}  // namespace hp
