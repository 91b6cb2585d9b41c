#include "hp/solid_fem.hpp"

#include "hp/errors.hpp"
#include "hp/shape.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>

namespace hp {

namespace {

// B (6 x 3npe) in Voigt order xx, yy, zz, yz, xz, xy.
void fill_B(int npe, const double (*dNx)[3], Eigen::Matrix<double, 6, Eigen::Dynamic>& B) {
    B.setZero(6, 3 * npe);
    for (int a = 0; a < npe; ++a) {
        const double dx = dNx[a][0], dy = dNx[a][1], dz = dNx[a][2];
        const int c = 3 * a;
        B(0, c) = dx;
        B(1, c + 1) = dy;
        B(2, c + 2) = dz;
        B(3, c + 1) = dz;
        B(3, c + 2) = dy;
        B(4, c) = dz;
        B(4, c + 2) = dx;
        B(5, c) = dy;
        B(5, c + 1) = dx;
    }
}

// Physical derivatives; returns det J.
double physical_gradients(int npe, const Vec3* X, double x, double y, double z, double* N, double (*dNx)[3]) {
    double dN[20][3];
    shape::hex(npe, x, y, z, N, dN);
    Eigen::Matrix3d J = Eigen::Matrix3d::Zero();
    for (int a = 0; a < npe; ++a)
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) J(i, j) += dN[a][i] * X[a][j];
    const double det = J.determinant();
    const Eigen::Matrix3d Ji = J.inverse();
    for (int a = 0; a < npe; ++a) {
        const Eigen::Vector3d g = Ji * Eigen::Vector3d(dN[a][0], dN[a][1], dN[a][2]);
        dNx[a][0] = g[0];
        dNx[a][1] = g[1];
        dNx[a][2] = g[2];
    }
    return det;
}

struct GaussPoints {
    std::vector<Vec3> xi;
    std::vector<double> w;
};

GaussPoints hex_gauss(int npe) {
    const auto g = shape::gauss(npe == 20 ? 3 : 2);
    GaussPoints gp;
    for (std::size_t k = 0; k < g.x.size(); ++k)
        for (std::size_t j = 0; j < g.x.size(); ++j)
            for (std::size_t i = 0; i < g.x.size(); ++i) {
                gp.xi.emplace_back(g.x[i], g.x[j], g.x[k]);
                gp.w.push_back(g.w[i] * g.w[j] * g.w[k]);
            }
    return gp;
}

// Least-squares map from Gauss-point values to nodal values.
const Eigen::MatrixXd& extrapolation(int npe) {
    static const Eigen::MatrixXd P8 = [] {
        const auto gp = hex_gauss(8);
        Eigen::MatrixXd N(gp.xi.size(), 8);
        double n[20], dn[20][3];
        for (std::size_t q = 0; q < gp.xi.size(); ++q) {
            shape::hex(8, gp.xi[q][0], gp.xi[q][1], gp.xi[q][2], n, dn);
            for (int a = 0; a < 8; ++a) N(q, a) = n[a];
        }
        return Eigen::MatrixXd(N.completeOrthogonalDecomposition().pseudoInverse());
    }();
    static const Eigen::MatrixXd P20 = [] {
        const auto gp = hex_gauss(20);
        Eigen::MatrixXd N(gp.xi.size(), 20);
        double n[20], dn[20][3];
        for (std::size_t q = 0; q < gp.xi.size(); ++q) {
            shape::hex(20, gp.xi[q][0], gp.xi[q][1], gp.xi[q][2], n, dn);
            for (int a = 0; a < 20; ++a) N(q, a) = n[a];
        }
        return Eigen::MatrixXd(N.completeOrthogonalDecomposition().pseudoInverse());
    }();
    return npe == 20 ? P20 : P8;
}

void element_coords(const SolidMesh& m, int e, Vec3* X) {
    const int* c = m.elem(e);
    for (int a = 0; a < m.npe(); ++a) X[a] = m.nodes[c[a]];
}

}  // namespace

void hex_stiffness(int npe, const Vec3* X, const Mat6& C, double* Ke) {
    const int n = 3 * npe;
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> K(Ke, n, n);
    K.setZero();
    const auto gp = hex_gauss(npe);
    Eigen::Matrix<double, 6, Eigen::Dynamic> B(6, n);
    double N[20], dNx[20][3];
    for (std::size_t q = 0; q < gp.xi.size(); ++q) {
        const double det = physical_gradients(npe, X, gp.xi[q][0], gp.xi[q][1], gp.xi[q][2], N, dNx);
        if (!(det > 0)) throw GeometryError("non-positive Jacobian in hexahedron");
        fill_B(npe, dNx, B);
        const Eigen::Matrix<double, 6, Eigen::Dynamic> CB = C * B;
        K.noalias() += (gp.w[q] * det) * B.transpose() * CB;
    }
    K = 0.5 * (K + K.transpose()).eval();
}

ElementMatrices compute_element_matrices(const SolidMesh& m, const std::vector<Mat6>& ply_C,
                                         const AssemblyOptions& opt) {
    ElementMatrices em;
    const int npe = m.npe(), ne = m.num_elems();
    em.size = 3 * npe;
    em.slot.resize(ne);
    std::vector<int> reps;
    if (opt.cache) {
        double scale = 1e-300;
        for (const auto& p : m.nodes) scale = std::max(scale, p.cwiseAbs().maxCoeff());
        const double q = 1e-11 * std::max(scale, 1.0);
        std::map<std::vector<long long>, int> seen;
        std::vector<long long> key(1 + 3 * (npe - 1));
        for (int e = 0; e < ne; ++e) {
            const int* c = m.elem(e);
            key[0] = m.ply[e];
            for (int a = 1; a < npe; ++a)
                for (int i = 0; i < 3; ++i)
                    key[1 + 3 * (a - 1) + i] = std::llround((m.nodes[c[a]][i] - m.nodes[c[0]][i]) / q);
            auto [it, inserted] = seen.emplace(key, static_cast<int>(reps.size()));
            if (inserted) reps.push_back(e);
            em.slot[e] = it->second;
        }
    } else {
        reps.resize(ne);
        for (int e = 0; e < ne; ++e) reps[e] = em.slot[e] = e;
    }
    const std::size_t stride = static_cast<std::size_t>(em.size) * em.size;
    em.data.assign(stride * reps.size(), 0.0);
    const int nr = static_cast<int>(reps.size());
    bool bad = false;
#pragma omp parallel for schedule(dynamic, 16) if (opt.parallel)
    for (int r = 0; r < nr; ++r) {
        Vec3 X[20];
        element_coords(m, reps[r], X);
        try {
            hex_stiffness(npe, X, ply_C[m.ply[reps[r]]], em.data.data() + stride * r);
        } catch (const GeometryError&) {
#pragma omp atomic write
            bad = true;
        }
    }
    if (bad) throw GeometryError("non-positive Jacobian in hexahedron");
    return em;
}

SolidSystem::SolidSystem(const SolidMesh& mesh, const Laminate& lam, AssemblyOptions opt) : mesh_(mesh) {
    for (const auto& p : lam.plies) ply_C_.push_back(ply_stiffness(p));
    em_ = compute_element_matrices(mesh_, ply_C_, opt);
    adj_ = node_adjacency(static_cast<int>(mesh_.nodes.size()), mesh_.conn, mesh_.npe());
}

void SolidSystem::set_dirichlet(const std::vector<int>& dofs) {
    std::vector<char> fixed(ndof(), 0);
    for (int d : dofs) {
        if (d < 0 || d >= ndof()) throw Error("Dirichlet DOF out of range");
        fixed[d] = 1;
    }
    dmap_ = DofMap::make(ndof(), fixed);
    dirichlet_set_ = true;
    factor_current_ = false;
}

void SolidSystem::set_constraints(const SpMat& B, bool augment) {
    if (B.cols() != ndof()) throw Error("constraint matrix has wrong column count");
    if (augment || augment_) factor_current_ = false;
    B_ = B;
    augment_ = augment;
}

void SolidSystem::factorize() {
    if (!dirichlet_set_) set_dirichlet({});
    const int m = static_cast<int>(B_.rows());
    if (m > 0) {
        std::vector<Triplet> tf, td;
        for (int j = 0; j < B_.outerSize(); ++j)
            for (SpMat::InnerIterator it(B_, j); it; ++it) {
                const int id = dmap_.index[j];
                if (id >= 0) tf.emplace_back(it.row(), id, it.value());
                else td.emplace_back(it.row(), -id - 1, it.value());
            }
        Bf_.resize(m, dmap_.n_free());
        Bf_.setFromTriplets(tf.begin(), tf.end());
        Bd_.resize(m, dmap_.n_fixed());
        Bd_.setFromTriplets(td.begin(), td.end());
    }
    if (!factor_current_) factorize_operator();
    factor_current_ = true;
    if (m > 0) {
        const Eigen::MatrixXd BfT = Eigen::MatrixXd(Bf_.transpose());
        Z_ = chol_.solve_many(BfT);
        const Eigen::MatrixXd S = Bf_ * Z_;
        S_.compute(S);
        const double dmax = S.diagonal().cwiseAbs().maxCoeff();
        if (S_.info() != Eigen::Success || !(S_.vectorD().cwiseAbs().minCoeff() > 1e-13 * dmax))
            throw SingularityError("work constraints are linearly dependent");
    } else {
        Z_.resize(0, 0);
    }
}

void SolidSystem::factorize_operator() {
    SymAssembler as(dmap_, adj_, 3);
    const int npe = mesh_.npe();
    std::vector<int> dofs(3 * npe);
    for (int e = 0; e < mesh_.num_elems(); ++e) {
        const int* c = mesh_.elem(e);
        for (int a = 0; a < npe; ++a)
            for (int i = 0; i < 3; ++i) dofs[3 * a + i] = 3 * c[a] + i;
        as.add(dofs.data(), 3 * npe, em_.K(e));
    }
    as.finalize();
    Kff_ = std::move(as.Kff);
    Kfd_ = std::move(as.Kfd);
    Kdd_ = std::move(as.Kdd);
    const int m = static_cast<int>(B_.rows());
    rho_ = 0;
    try {
        if (m > 0 && augment_) {
            // Floating body held by the work constraints only: K + rho B^T B has the same saddle solution.
            const SpMat BtB = SpMat(Bf_.transpose() * Bf_);
            rho_ = Kff_.diagonal().cwiseAbs().mean() / std::max(1e-300, BtB.diagonal().mean());
            chol_.factorize(SpMat(Kff_ + rho_ * SpMat(BtB.triangularView<Eigen::Lower>())));
        } else {
            chol_.factorize(Kff_);
        }
    } catch (const SingularityError&) {
        const char* names[6] = {"Tx", "Ty", "Tz", "Rx", "Ry", "Rz"};
        // Rigid modes about the centroid, restricted to the prescribed DOFs; the null space is free.
        Vec3 xc = Vec3::Zero();
        for (const auto& x : mesh_.nodes) xc += x;
        xc /= static_cast<double>(mesh_.nodes.size());
        Eigen::MatrixXd R = Eigen::MatrixXd::Zero(std::max<int>(1, dmap_.n_fixed()), 6);
        for (int r = 0; r < dmap_.n_fixed(); ++r) {
            const int d = dmap_.fixed_dofs[r];
            const Vec3 x = mesh_.nodes[d / 3] - xc;
            for (int k = 0; k < 6; ++k) {
                const Vec3 m = k < 3 ? Vec3(Vec3::Unit(k)) : Vec3(Vec3::Unit(k - 3).cross(x));
                R(r, k) = m[d % 3];
            }
        }
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(R, Eigen::ComputeFullV);
        const auto sv = svd.singularValues();
        const double smax = std::max(sv.size() ? sv[0] : 0.0, 1e-300);
        std::ostringstream os;
        os << "solid system is under-constrained; estimated free rigid modes:";
        int nfree = 0;
        for (int k = 0; k < 6; ++k) {
            const double sk = k < sv.size() ? sv[k] : 0.0;
            if (sk > 1e-10 * smax && dmap_.n_fixed() > 0) continue;
            Eigen::Index i;
            svd.matrixV().col(k).cwiseAbs().maxCoeff(&i);
            os << ' ' << names[i];
            ++nfree;
        }
        if (nfree == 0) os << " none detected (mechanism in the mesh)";
        throw UnderConstrainedError(os.str());
    }
}

SolidSolution SolidSystem::solve(const Vec& f, const Vec& ud, const Vec& c) const {
    if (!chol_.ready()) throw SolverError("solid system not factorized");
    const int nf = dmap_.n_free(), nd = dmap_.n_fixed(), m = static_cast<int>(B_.rows());
    if (f.size() != ndof() || ud.size() != nd) throw Error("load or prescribed vector size mismatch");
    Vec ff(nf), fd(nd);
    for (int i = 0; i < nf; ++i) ff[i] = f[dmap_.free_dofs[i]];
    for (int i = 0; i < nd; ++i) fd[i] = f[dmap_.fixed_dofs[i]];
    Vec rhs = ff;
    if (nd > 0) rhs -= Kfd_ * ud;
    Vec cc;
    if (m > 0) {
        if (c.size() != m) throw Error("constraint value vector size mismatch");
        cc = c;
        if (nd > 0) cc -= Bd_ * ud;
        if (rho_ > 0) rhs += rho_ * (Bf_.transpose() * cc);
    }
    Vec uf = chol_.solve(rhs);
    SolidSolution s;
    s.lambda = Vec::Zero(m);
    if (m > 0) {
        s.lambda = S_.solve(Bf_ * uf - cc);
        uf -= Z_ * s.lambda;
    }
    s.u = Vec::Zero(ndof());
    for (int i = 0; i < nf; ++i) s.u[dmap_.free_dofs[i]] = uf[i];
    for (int i = 0; i < nd; ++i) s.u[dmap_.fixed_dofs[i]] = ud[i];
    s.reaction = Vec::Zero(ndof());
    if (nd > 0) {
        Vec r = Kfd_.transpose() * uf + sym_multiply(Kdd_, ud) - fd;
        if (m > 0) r += Bd_.transpose() * s.lambda;
        for (int i = 0; i < nd; ++i) s.reaction[dmap_.fixed_dofs[i]] = r[i];
    }
    return s;
}

Vec SolidSystem::face_load(const std::vector<SolidFace>& faces, const TractionFn& t) const {
    Vec f = Vec::Zero(ndof());
    const auto g = shape::gauss(mesh_.order == 2 ? 3 : 2);
    std::vector<double> zc;
    for (std::size_t l = 0; l < mesh_.z_levels.size(); l += (mesh_.order == 2 ? 2 : 1)) zc.push_back(mesh_.z_levels[l]);
    double N[8], dN[8][2];
    for (const auto& face : faces) {
        const int nn = static_cast<int>(face.nodes.size());
        const double z0 = mesh_.nodes[face.nodes[0]].z();
        const int layer = static_cast<int>(std::lower_bound(zc.begin(), zc.end(), z0 - 1e-12) - zc.begin());
        for (std::size_t i = 0; i < g.x.size(); ++i)
            for (std::size_t j = 0; j < g.x.size(); ++j) {
                const double xi = g.x[i], eta = g.x[j];
                shape::quad(nn, xi, eta, N, dN);
                Vec3 x = Vec3::Zero(), a = Vec3::Zero(), b = Vec3::Zero();
                for (int k = 0; k < nn; ++k) {
                    const Vec3& X = mesh_.nodes[face.nodes[k]];
                    x += N[k] * X;
                    a += dN[k][0] * X;
                    b += dN[k][1] * X;
                }
                Vec3 n = a.cross(b);
                const double dA = n.norm();
                n /= dA;
                if (n.dot(face.normal) < 0) n = -n;
                const Vec3 tr = t(x, n, layer, eta);
                const double w = g.w[i] * g.w[j] * dA;
                for (int k = 0; k < nn; ++k) f.segment<3>(3 * face.nodes[k]) += (w * N[k]) * tr;
            }
    }
    return f;
}

Vec SolidSystem::internal_forces(const Vec& u, const std::vector<int>& elems) const {
    Vec f = Vec::Zero(ndof());
    const int npe = mesh_.npe(), n = 3 * npe;
    Eigen::VectorXd ue(n);
    auto one = [&](int e) {
        const int* c = mesh_.elem(e);
        for (int a = 0; a < npe; ++a) ue.segment<3>(3 * a) = u.segment<3>(3 * c[a]);
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> K(em_.K(e), n, n);
        const Eigen::VectorXd fe = K * ue;
        for (int a = 0; a < npe; ++a) f.segment<3>(3 * c[a]) += fe.segment<3>(3 * a);
    };
    if (elems.empty())
        for (int e = 0; e < mesh_.num_elems(); ++e) one(e);
    else
        for (int e : elems) one(e);
    return f;
}

std::vector<int> pin_321(int a, int b, int c) {
    return {3 * a, 3 * a + 1, 3 * a + 2, 3 * b + 1, 3 * b + 2, 3 * c + 2};
}

namespace {

struct Resultant {
    Vec3 force = Vec3::Zero(), moment = Vec3::Zero();
    double fscale = 0, mscale = 0;
};

Resultant resultant(const SolidMesh& m, const Vec& f) {
    Vec3 xc = Vec3::Zero();
    for (const auto& p : m.nodes) xc += p;
    xc /= static_cast<double>(m.nodes.size());
    Resultant r;
    for (std::size_t n = 0; n < m.nodes.size(); ++n) {
        const Vec3 fn = f.segment<3>(3 * n);
        const Vec3 d = m.nodes[n] - xc;
        r.force += fn;
        r.moment += d.cross(fn);
        r.fscale += fn.norm();
        r.mscale += d.norm() * fn.norm();
    }
    return r;
}

void throw_if_unbalanced(const Resultant& r, double tol, const char* what) {
    const bool bad_f = r.force.norm() > tol * std::max(r.fscale, 1e-300);
    const bool bad_m = r.moment.norm() > tol * std::max(r.mscale, 1e-300);
    if ((bad_f || bad_m) && r.fscale > 0) {
        std::ostringstream os;
        os << what << ": force imbalance " << r.force.norm() << ", moment imbalance " << r.moment.norm();
        throw EquilibriumError(os.str());
    }
}

}  // namespace

void check_self_equilibrium(const SolidMesh& m, const Vec& f, double rel_tol) {
    throw_if_unbalanced(resultant(m, f), rel_tol, "pure-Neumann load is not equilibrated");
}

void check_global_equilibrium(const SolidMesh& m, const Vec& f, const SolidSolution& s, const SpMat& B,
                              double rel_tol) {
    Vec total = f + s.reaction;
    if (B.rows() > 0) total -= B.transpose() * s.lambda;
    throw_if_unbalanced(resultant(m, total), rel_tol, "global equilibrium violated");
}

StressField compute_stresses(const SolidSystem& sys, const Vec& u) {
    const SolidMesh& m = sys.mesh();
    const int npe = m.npe(), ne = m.num_elems();
    const auto gp = hex_gauss(npe);
    const Eigen::MatrixXd& P = extrapolation(npe);
    StressField s;
    s.npe = npe;
    s.nodal.assign(static_cast<std::size_t>(ne) * npe, Vec6::Zero());
#pragma omp parallel for schedule(static)
    for (int e = 0; e < ne; ++e) {
        Vec3 X[20];
        element_coords(m, e, X);
        const int* c = m.elem(e);
        Eigen::VectorXd ue(3 * npe);
        for (int a = 0; a < npe; ++a) ue.segment<3>(3 * a) = u.segment<3>(3 * c[a]);
        Eigen::Matrix<double, 6, Eigen::Dynamic> B(6, 3 * npe);
        Eigen::MatrixXd sg(gp.xi.size(), 6);
        double N[20], dNx[20][3];
        for (std::size_t q = 0; q < gp.xi.size(); ++q) {
            physical_gradients(npe, X, gp.xi[q][0], gp.xi[q][1], gp.xi[q][2], N, dNx);
            fill_B(npe, dNx, B);
            sg.row(q) = (sys.ply_C(m.ply[e]) * (B * ue)).transpose();
        }
        const Eigen::MatrixXd nodal = P * sg;
        for (int a = 0; a < npe; ++a) s.nodal[static_cast<std::size_t>(e) * npe + a] = nodal.row(a).transpose();
    }
    return s;
}

PointLocator::PointLocator(const SolidMesh& m) : m_(m) {
    int n2 = 0;
    for (int e2 : m.elem2d) n2 = std::max(n2, e2 + 1);
    const int nz = *std::max_element(m.layer.begin(), m.layer.end()) + 1;
    stack_.assign(n2, std::vector<int>(nz, -1));
    for (int e = 0; e < m.num_elems(); ++e) stack_[m.elem2d[e]][m.layer[e]] = e;
    double x1 = -1e300, y1 = -1e300;
    x0_ = y0_ = 1e300;
    for (const auto& p : m.nodes) {
        x0_ = std::min(x0_, p.x());
        y0_ = std::min(y0_, p.y());
        x1 = std::max(x1, p.x());
        y1 = std::max(y1, p.y());
    }
    const double area = std::max((x1 - x0_) * (y1 - y0_), 1e-30);
    const double target = std::max(1.0, static_cast<double>(n2) / 4.0);
    cell_ = std::sqrt(area / target);
    nx_ = std::max(1, static_cast<int>(std::ceil((x1 - x0_) / cell_)) + 1);
    ny_ = std::max(1, static_cast<int>(std::ceil((y1 - y0_) / cell_)) + 1);
    grid_.assign(static_cast<std::size_t>(nx_) * ny_, {});
    const int ncorner = 4;
    for (int e2 = 0; e2 < n2; ++e2) {
        const int e = stack_[e2][0];
        if (e < 0) continue;
        const int* c = m.elem(e);
        double bx0 = 1e300, by0 = 1e300, bx1 = -1e300, by1 = -1e300;
        for (int a = 0; a < (m.order == 2 ? 8 : ncorner); ++a) {
            const int id = c[a < 4 ? a : a + 4];
            bx0 = std::min(bx0, m.nodes[id].x());
            by0 = std::min(by0, m.nodes[id].y());
            bx1 = std::max(bx1, m.nodes[id].x());
            by1 = std::max(by1, m.nodes[id].y());
        }
        // Quadratic edges may bulge slightly beyond the node box.
        const double pad = 0.1 * std::max(bx1 - bx0, by1 - by0);
        const int i0 = std::clamp(static_cast<int>((bx0 - pad - x0_) / cell_), 0, nx_ - 1);
        const int i1 = std::clamp(static_cast<int>((bx1 + pad - x0_) / cell_), 0, nx_ - 1);
        const int j0 = std::clamp(static_cast<int>((by0 - pad - y0_) / cell_), 0, ny_ - 1);
        const int j1 = std::clamp(static_cast<int>((by1 + pad - y0_) / cell_), 0, ny_ - 1);
        for (int j = j0; j <= j1; ++j)
            for (int i = i0; i <= i1; ++i) grid_[static_cast<std::size_t>(j) * nx_ + i].push_back(e2);
    }
}

PointLocation PointLocator::locate(const Vec3& p) const {
    const auto all = locate_all(p);
    if (all.empty()) throw GeometryError("point outside the solid mesh");
    return all.front();
}

std::vector<PointLocation> PointLocator::locate_all(const Vec3& p) const {
    std::vector<PointLocation> out;
    const int i = static_cast<int>(std::floor((p.x() - x0_) / cell_));
    const int j = static_cast<int>(std::floor((p.y() - y0_) / cell_));
    if (i < 0 || j < 0 || i >= nx_ || j >= ny_) return out;
    const int nq = m_.order == 2 ? 8 : 4;
    const double ztol = 1e-9 * std::max(1.0, m_.h);
    for (int e2 : grid_[static_cast<std::size_t>(j) * nx_ + i]) {
        const int e0 = stack_[e2][0];
        const int* c = m_.elem(e0);
        Vec2 X[8];
        for (int a = 0; a < nq; ++a) {
            const int id = c[a < 4 ? a : a + 4];
            X[a] = m_.nodes[id].head<2>();
        }
        Vec2 xi = Vec2::Zero();
        double N[8], dN[8][2];
        bool ok = false;
        for (int it = 0; it < 30; ++it) {
            shape::quad(nq, xi[0], xi[1], N, dN);
            Vec2 x = Vec2::Zero();
            Eigen::Matrix2d J = Eigen::Matrix2d::Zero();
            for (int a = 0; a < nq; ++a) {
                x += N[a] * X[a];
                J.col(0) += dN[a][0] * X[a];
                J.col(1) += dN[a][1] * X[a];
            }
            const Vec2 d = J.inverse() * (p.head<2>() - x);
            xi += d;
            if (xi.cwiseAbs().maxCoeff() > 3) break;
            if (d.norm() < 1e-13) {
                ok = true;
                break;
            }
        }
        if (!ok || xi.cwiseAbs().maxCoeff() > 1 + 1e-8) continue;
        for (int e : stack_[e2]) {
            if (e < 0) continue;
            const int* ce = m_.elem(e);
            const double zb = m_.nodes[ce[0]].z(), zt = m_.nodes[ce[4]].z();
            if (p.z() < zb - ztol || p.z() > zt + ztol) continue;
            PointLocation loc;
            loc.elem = e;
            loc.xi = Vec3(std::clamp(xi[0], -1.0, 1.0), std::clamp(xi[1], -1.0, 1.0),
                          std::clamp(2 * (p.z() - zb) / (zt - zb) - 1, -1.0, 1.0));
            out.push_back(loc);
        }
    }
    return out;
}

Vec6 stress_at(const SolidMesh& m, const StressField& s, const PointLocation& loc) {
    double N[20], dN[20][3];
    shape::hex(m.npe(), loc.xi[0], loc.xi[1], loc.xi[2], N, dN);
    Vec6 v = Vec6::Zero();
    for (int a = 0; a < m.npe(); ++a) v += N[a] * s.at(loc.elem, a);
    return v;
}

Vec6 stress_at(const SolidMesh& m, const StressField& s, const PointLocator& loc, const Vec3& p) {
    const auto all = loc.locate_all(p);
    if (all.empty()) throw GeometryError("point outside the solid mesh");
    Vec6 v = Vec6::Zero();
    for (const auto& l : all) v += stress_at(m, s, l);
    return v / static_cast<double>(all.size());
}

LayeredProfile column_stress_profile(const SolidMesh& m, const StressField& s, int plane_node) {
    const int nz = static_cast<int>(m.order == 2 ? (m.z_levels.size() - 1) / 2 : m.z_levels.size() - 1);
    const int per = m.order + 1;
    LayeredProfile p;
    p.z.assign(static_cast<std::size_t>(nz) * per, 0.0);
    p.stress.assign(p.z.size(), Vec6::Zero());
    std::vector<int> count(nz, 0);
    const auto& nat = shape::hex_nodes();
    const double zeta2[2] = {-1, 1}, zeta3[3] = {-1, 0, 1};
    const double* zeta = m.order == 2 ? zeta3 : zeta2;
    double N[20], dN[20][3];
    for (int e = 0; e < m.num_elems(); ++e) {
        const int* c = m.elem(e);
        int a = -1;
        for (int k = 0; k < m.npe(); ++k)
            if (m.node2d[c[k]] == plane_node) {
                a = k;
                break;
            }
        if (a < 0) continue;
        const int l = m.layer[e];
        ++count[l];
        const double zb = m.nodes[c[0]].z(), zt = m.nodes[c[4]].z();
        for (int q = 0; q < per; ++q) {
            shape::hex(m.npe(), nat[a][0], nat[a][1], zeta[q], N, dN);
            Vec6 v = Vec6::Zero();
            for (int b = 0; b < m.npe(); ++b) v += N[b] * s.at(e, b);
            p.stress[l * per + q] += v;
            p.z[l * per + q] = zb + 0.5 * (zeta[q] + 1) * (zt - zb);
        }
    }
    for (int l = 0; l < nz; ++l) {
        if (count[l] == 0) throw MeshMismatchError("node column not found in solid mesh");
        for (int q = 0; q < per; ++q) p.stress[l * per + q] /= count[l];
    }
    return p;
}

LayeredProfile column_stress_profile(const SolidSystem& sys, const Vec& u, int plane_node) {
    const SolidMesh& m = sys.mesh();
    const int npe = m.npe(), per = m.order + 1;
    const int nz = static_cast<int>(m.order == 2 ? (m.z_levels.size() - 1) / 2 : m.z_levels.size() - 1);
    LayeredProfile p;
    p.z.assign(static_cast<std::size_t>(nz) * per, 0.0);
    p.stress.assign(p.z.size(), Vec6::Zero());
    std::vector<int> count(nz, 0);
    const auto& nat = shape::hex_nodes();
    const auto gz = shape::gauss(per);
    // Lagrange fit through the Gauss points of the layer, evaluated at the layer nodes.
    Eigen::MatrixXd V(per, per), T(per, per);
    for (int q = 0; q < per; ++q)
        for (int k = 0; k < per; ++k) {
            V(q, k) = std::pow(gz.x[q], k);
            T(q, k) = std::pow(per == 3 ? q - 1.0 : 2.0 * q - 1.0, k);
        }
    const Eigen::MatrixXd fit = T * V.inverse();
    const double r3 = 1.0 / std::sqrt(3.0);
    double N[20], dNx[20][3];
    Vec3 X[20];
    Eigen::VectorXd ue(3 * npe);
    Eigen::Matrix<double, 6, Eigen::Dynamic> B(6, 3 * npe);
    for (int e = 0; e < m.num_elems(); ++e) {
        const int* c = m.elem(e);
        int a = -1;
        for (int k = 0; k < npe; ++k)
            if (m.node2d[c[k]] == plane_node) {
                a = k;
                break;
            }
        if (a < 0) continue;
        const int l = m.layer[e];
        ++count[l];
        element_coords(m, e, X);
        for (int b = 0; b < npe; ++b) ue.segment<3>(3 * b) = u.segment<3>(3 * c[b]);
        Eigen::MatrixXd sg(per, 6);
        for (int q = 0; q < per; ++q) {
            physical_gradients(npe, X, nat[a][0] * r3, nat[a][1] * r3, gz.x[q], N, dNx);
            fill_B(npe, dNx, B);
            sg.row(q) = (sys.ply_C(m.ply[e]) * (B * ue)).transpose();
        }
        const Eigen::MatrixXd at_nodes = fit * sg;
        const double zb = m.nodes[c[0]].z(), zt = m.nodes[c[4]].z();
        for (int q = 0; q < per; ++q) {
            p.stress[l * per + q] += at_nodes.row(q).transpose();
            p.z[l * per + q] = zb + (zt - zb) * q / m.order;
        }
    }
    for (int l = 0; l < nz; ++l) {
        if (count[l] == 0) throw MeshMismatchError("node column not found in solid mesh");
        for (int q = 0; q < per; ++q) p.stress[l * per + q] /= count[l];
    }
    return p;
}

Eigen::Matrix<double, 8, 1> generalized_forces_from_reactions(const SolidMesh& m, const NodeColumn& col,
                                                              const Vec& f, bool per_length) {
    if (f.size() != 3 * static_cast<Eigen::Index>(m.nodes.size()))
        throw Error("incomplete trace: nodal force vector does not cover the mesh");
    const Vec2 n(std::cos(col.phi), std::sin(col.phi)), t(-n.y(), n.x());
    Eigen::Matrix<double, 8, 1> F = Eigen::Matrix<double, 8, 1>::Zero();
    for (int id : col.node_ids) {
        const Vec3 Fl = f.segment<3>(3 * id);
        const double z = m.nodes[id].z();
        const double fn = Fl.head<2>().dot(n), ft = Fl.head<2>().dot(t);
        F[0] += fn;
        F[1] += ft;
        F[2] += z * fn;
        F[3] += z * ft;
        F[4] += Fl.z();
    }
    if (per_length) {
        if (!(col.weight > 0)) throw Error("column has no tributary length");
        F /= col.weight;
    }
    return F;
}

}  // namespace hp
