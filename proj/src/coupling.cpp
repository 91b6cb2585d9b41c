#include "hp/coupling.hpp"

#include "hp/errors.hpp"
#include "hp/shape.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

namespace hp {

namespace {

Vec3 traction(const Eigen::Matrix<double, 1, 6>& s, const Vec3& n) {
    using namespace voigt;
    return {s[XX] * n.x() + s[XY] * n.y() + s[XZ] * n.z(),
            s[XY] * n.x() + s[YY] * n.y() + s[YZ] * n.z(),
            s[XZ] * n.x() + s[YZ] * n.y() + s[ZZ] * n.z()};
}

// Rotates the in-plane pairs of a conjugate vector to the (n, t) frame.
Vec5 to_frame(const Vec5& a, double phi) {
    const double c = std::cos(phi), s = std::sin(phi);
    Vec5 r;
    r << c * a[0] + s * a[1], -s * a[0] + c * a[1], c * a[2] + s * a[3], -s * a[2] + c * a[3], a[4];
    return r;
}

// Layer and natural coordinate of height z on a thickness grid.
std::pair<int, double> locate_z(const ThicknessGrid& g, double z) {
    const int o = g.order, nl = g.layers();
    for (int k = 0; k < nl; ++k) {
        const double zb = g.z[k * (o + 1)], zt = g.z[k * (o + 1) + o];
        const double tol = 1e-9 * (zt - zb);
        if (z >= zb - tol && z <= zt + tol) return {k, std::clamp(2 * (z - zb) / (zt - zb) - 1, -1.0, 1.0)};
    }
    throw GeometryError("height outside the laminate");
}

// Consistent mass of a piecewise-linear curve.
Eigen::MatrixXd line_mass(const std::vector<Vec2>& p, bool closed) {
    const int n = static_cast<int>(p.size());
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
    for (int q = 0; q < (closed ? n : n - 1); ++q) {
        const int a = q, b = (q + 1) % n;
        const double l = (p[b] - p[a]).norm();
        M(a, a) += l / 3;
        M(b, b) += l / 3;
        M(a, b) += l / 6;
        M(b, a) += l / 6;
    }
    return M;
}

std::vector<Vec2> points_of(const PlateMesh& m, const std::vector<int>& ids) {
    std::vector<Vec2> p;
    for (int i : ids) p.push_back(m.nodes[i]);
    return p;
}

}  // namespace

std::string to_string(DescentMode m) {
    switch (m) {
        case DescentMode::kTraction: return "traction";
        case DescentMode::kLagrangian: return "lagrangian";
        default: return "displacement";
    }
}

std::string to_string(Accelerator a) {
    return a == Accelerator::kFixedPoint ? "fixed_point" : "conjugate_gradient";
}

DescentMode parse_descent(const std::string& s) {
    if (s == "traction") return DescentMode::kTraction;
    if (s == "lagrangian") return DescentMode::kLagrangian;
    if (s == "displacement") return DescentMode::kDisplacement;
    throw ConfigError("unknown descent mode '" + s + "'");
}

Accelerator parse_accelerator(const std::string& s) {
    if (s == "fixed_point") return Accelerator::kFixedPoint;
    if (s == "conjugate_gradient") return Accelerator::kConjugateGradient;
    throw ConfigError("unknown accelerator '" + s + "'");
}

void CouplingConfig::validate() const {
    if (!(buffer_width >= 0)) throw ConfigError("buffer_width must be >= 0");
    if (!(relaxation > 0 && relaxation <= 1)) throw ConfigError("relaxation must lie in (0, 1]");
    if (max_iterations < 0) throw ConfigError("max_iterations must be >= 0");
    if (!(eta_tolerance > 0)) throw ConfigError("eta_tolerance must be > 0");
    if (descent == DescentMode::kTraction && buffer_width == 0)
        throw ConfigError("traction descent needs a nonzero buffer (buffer_width = 0)");
}

Vec3 eta_denominators(const InterfaceTrace& tr, double h, double degenerate) {
    Vec3 d = Vec3::Zero();
    for (const auto& t : tr) {
        d[0] = std::max(d[0], std::hypot(t.F[0], t.F[1]));
        d[1] = std::max(d[1], std::hypot(t.F[2], t.F[3]));
        d[2] = std::max(d[2], std::abs(t.F[4]));
    }
    const double ref = std::max({d[0], d[1] / h, d[2]});
    if (!(ref > 0)) throw DegenerateLoadError("initial plate trace vanishes on gamma_I");
    if (d[0] < degenerate * ref) d[0] = ref;
    if (d[1] < degenerate * ref * h) d[1] = ref * h;
    if (d[2] < degenerate * ref) d[2] = ref;
    return d;
}

double eta_norm(const Residual& r, const Vec3& den) {
    const auto& sm = r.samples;
    const int n = static_cast<int>(sm.size());
    auto f = [&](int q) {
        const Vec5& L = sm[q].L;
        return (L[0] * L[0] + L[1] * L[1]) / (den[0] * den[0]) + (L[2] * L[2] + L[3] * L[3]) / (den[1] * den[1]) +
               L[4] * L[4] / (den[2] * den[2]);
    };
    double acc = 0;
    for (int q = 0; q + 1 < n; ++q) acc += 0.5 * (sm[q + 1].s - sm[q].s) * (f(q) + f(q + 1));
    if (r.closed && n > 1) acc += 0.5 * (r.length - sm[n - 1].s) * (f(n - 1) + f(0));
    return std::sqrt(acc);
}

int drive_iteration(const InterfaceIteration& it, const CouplingConfig& cfg, Vec& f, Vec& r,
                    std::vector<double>& eta_history) {
    double eta = it.eta(r);
    if (eta_history.empty()) eta_history.push_back(eta);
    int n = 0, growth = 0;
    auto record = [&](double e, double omega) {
        ++n;
        eta_history.push_back(e);
        if (it.on_step) it.on_step(omega);
        if (e > eta) {
            if (++growth >= 3)
                throw DivergenceError("residual norm grew over 3 consecutive iterations; use a smaller relaxation");
        } else {
            growth = 0;
        }
        eta = e;
    };
    if (cfg.accelerator == Accelerator::kFixedPoint) {
        double omega = cfg.relaxation;
        while (eta > cfg.eta_tolerance && n < cfg.max_iterations) {
            f -= omega * r;
            r = it.evaluate(f);
            const double e = it.eta(r), used = omega;
            if (e > eta) omega *= 0.5;
            record(e, used);
        }
        return n;
    }
    Vec rho = -r;
    Vec z = it.precondition(rho);
    Vec P = rho, p = z;
    double rz = rho.dot(z);
    while (eta > cfg.eta_tolerance && n < cfg.max_iterations) {
        const Vec q = it.apply(P);
        const double pq = p.dot(q);
        if (!(pq > 0)) throw ConvergenceError("conjugate gradient breakdown: interface operator is not positive");
        const double alpha = rz / pq;
        f += alpha * P;
        it.accept(alpha);
        r += alpha * q;
        record(it.eta(r), 1.0);
        if (eta <= cfg.eta_tolerance || n >= cfg.max_iterations) break;
        rho = -r;
        z = it.precondition(rho);
        const double rz_new = rho.dot(z);
        const double beta = rz_new / rz;
        rz = rz_new;
        P = rho + beta * P;
        p = z + beta * p;
    }
    return n;
}

// ---- Coupler -------------------------------------------------------------------------

Coupler::Coupler(PlateSystem& plate, SolidSystem& local, const LocalProblem& bc, const SaintVenantBasis& basis,
                 const CouplingConfig& cfg)
    : plate_(plate), solid_(local), bc_(bc), basis_(basis), cfg_(cfg) {
    cfg_.validate();
    const PlateMesh& pm = plate_.mesh();
    const SolidMesh& sm = solid_.mesh();
    auto edge = [&](const char* name) -> const EdgeSet& {
        auto it = pm.edge_sets.find(name);
        if (it == pm.edge_sets.end()) throw MeshMismatchError(std::string("plate mesh has no edge set ") + name);
        return it->second;
    };
    curveC_ = edge("gamma_C").nodes;
    closedC_ = edge("gamma_C").closed;
    curveI_ = edge("gamma_I").nodes;
    closedI_ = edge("gamma_I").closed;
    const auto ptsC = points_of(pm, curveC_), ptsI = points_of(pm, curveI_);
    colsC_ = interface_columns(sm, ptsC, closedC_);
    colsI_ = interface_columns(sm, ptsI, closedI_);
    bufferless_ = ptsC.size() == ptsI.size();
    for (std::size_t q = 0; bufferless_ && q < ptsC.size(); ++q) bufferless_ = (ptsC[q] - ptsI[q]).norm() < 1e-9;
    if (bufferless_ && cfg_.descent == DescentMode::kTraction)
        throw ConfigError("traction descent needs a nonzero buffer (gamma_I coincides with gamma_C)");

    const int o = sm.order, nz = (static_cast<int>(sm.z_levels.size()) - 1) / o;
    if (basis_.grid.order != o || basis_.grid.layers() != nz || std::abs(basis_.h - sm.h) > 1e-9 * sm.h)
        throw MeshMismatchError("basis thickness grid does not match the local mesh");
    if (static_cast<int>(bc_.fixed_values.size()) != static_cast<int>(bc_.fixed_dofs.size()))
        throw Error("local Dirichlet values do not match the DOF list");

    for (int e = 0; e < sm.num_elems(); ++e)
        if (sm.region[e] == kZoneI) elemsI_.push_back(e);

    // Quadrature points on Gamma_C with their position along the plate curve.
    auto fs = sm.face_sets.find("gamma_C");
    if (fs == sm.face_sets.end()) throw MeshMismatchError("local mesh has no gamma_C faces");
    const auto g = shape::gauss(o == 2 ? 3 : 2);
    const int nC = static_cast<int>(ptsC.size()), nsegC = closedC_ ? nC : nC - 1;
    double N[8], dN[8][2];
    for (const auto& face : fs->second) {
        const int nn = static_cast<int>(face.nodes.size());
        const auto lz = locate_z(basis_.grid, 0.5 * (sm.nodes[face.nodes[0]].z() + sm.nodes[face.nodes[3]].z()));
        for (std::size_t j = 0; j < g.x.size(); ++j)
            for (std::size_t i = 0; i < g.x.size(); ++i) {
                const double xi = g.x[i], eta = g.x[j];
                shape::quad(nn, xi, eta, N, dN);
                FacePoint p;
                p.x.setZero();
                Vec3 a = Vec3::Zero(), b = Vec3::Zero();
                for (int k = 0; k < nn; ++k) {
                    const Vec3& X = sm.nodes[face.nodes[k]];
                    p.x += N[k] * X;
                    a += dN[k][0] * X;
                    b += dN[k][1] * X;
                    p.nodes[k] = face.nodes[k];
                    p.N[k] = N[k];
                }
                p.nn = nn;
                Vec3 nv = a.cross(b);
                const double dA = nv.norm();
                nv /= dA;
                if (nv.dot(face.normal) < 0) nv = -nv;
                p.n = nv;
                p.phi = std::atan2(nv.y(), nv.x());
                p.w = g.w[i] * g.w[j] * dA;
                p.layer = lz.first;
                p.zeta = eta;
                double best = 1e300;
                const Vec2 x2(p.x.x(), p.x.y());
                for (int q = 0; q < nsegC; ++q) {
                    const Vec2 A = ptsC[q], Bp = ptsC[(q + 1) % nC], d = Bp - A;
                    const double t = std::clamp((x2 - A).dot(d) / d.squaredNorm(), 0.0, 1.0);
                    const double dist = (A + t * d - x2).norm();
                    if (dist < best - 1e-12) {
                        best = dist;
                        p.seg = q;
                        p.t = t;
                    }
                }
                gp_.push_back(p);
            }
    }

    if (cfg_.descent == DescentMode::kLagrangian) {
        // HEX20: one constant multiplier per element band; HEX8: hat multipliers per plate node.
        const int nrow_sets = o == 2 ? nsegC / 2 : nC;
        std::vector<Triplet> tr;
        for (const auto& p : gp_) {
            const Mat8 W = rotation_weights(p.phi);
            std::array<std::pair<int, double>, 2> rows;
            int nr = 0;
            if (o == 2) {
                rows[nr++] = {p.seg / 2, 1.0};
            } else {
                rows[nr++] = {p.seg, 1 - p.t};
                rows[nr++] = {(p.seg + 1) % nC, p.t};
            }
            Eigen::Matrix<double, 8, 3> tj;
            for (int j = 0; j < 8; ++j) tj.row(j) = traction(basis_.grid.at(basis_.tau[j], p.layer, p.zeta), p.n);
            for (int k = 0; k < 5; ++k) {
                const Vec3 tk = (W.row(k) * tj).transpose();
                for (int r = 0; r < nr; ++r)
                    for (int a = 0; a < p.nn; ++a)
                        for (int d = 0; d < 3; ++d)
                            tr.emplace_back(5 * rows[r].first + k, 3 * p.nodes[a] + d,
                                            p.w * rows[r].second * p.N[a] * tk[d]);
            }
        }
        B_.resize(5 * nrow_sets, solid_.ndof());
        B_.setFromTriplets(tr.begin(), tr.end());
        B_.prune(0.0);
    } else {
        B_.resize(0, solid_.ndof());
    }

    line_mass_.compute(line_mass(ptsI, closedI_));
    line_mass_C_.compute(line_mass(ptsC, closedC_));

    prepare_local();
}

void Coupler::prepare_local() {
    fixed_ = bc_.fixed_dofs;
    if (cfg_.descent == DescentMode::kDisplacement)
        for (const auto& c : colsC_)
            for (int id : c.node_ids)
                for (int d = 0; d < 3; ++d) fixed_.push_back(3 * id + d);
    std::sort(fixed_.begin(), fixed_.end());
    fixed_.erase(std::unique(fixed_.begin(), fixed_.end()), fixed_.end());
    if (cfg_.descent == DescentMode::kTraction && bc_.fixed_dofs.empty())
        throw UnderConstrainedError("traction descent needs Dirichlet conditions owned by the local model");
    if (solid_.factorizations() == 0 || solid_.dirichlet_dofs() != fixed_) solid_.set_dirichlet(fixed_);
    solid_.set_constraints(B_, cfg_.descent == DescentMode::kLagrangian && bc_.fixed_dofs.empty());
    try {
        solid_.factorize();
    } catch (const SingularityError& e) {
        if (cfg_.descent == DescentMode::kLagrangian)
            throw SingularityError(std::string("Lagrangian descent is not LBB-stable: ") + e.what());
        throw;
    }
}

InterfaceTrace Coupler::trace_C(const Vec& U) const { return plate_.trace(U, curveC_, closedC_, {kZoneC}); }

InterfaceTrace Coupler::trace_I(const Vec& U) const {
    return plate_.trace(U, curveI_, closedI_, {kZoneB, kZoneC});
}

InterfaceTrace Coupler::transmitted_trace(const Vec& U) const {
    InterfaceTrace tr = trace_C(U);
    const Vec fc = plate_.internal_forces(U, {kZoneC});
    const int n = static_cast<int>(curveC_.size());
    Eigen::MatrixXd R(n, 5);
    for (int q = 0; q < n; ++q) R.row(q) = -dofs_to_conjugate(fc.segment<5>(5 * curveC_[q])).transpose();
    const Eigen::MatrixXd L = line_mass_C_.solve(R);
    for (int q = 0; q < n; ++q) {
        Vec8 F = rotate_forces(tr[q].Fg, tr[q].phi);
        F.head<5>() = to_frame(L.row(q).transpose(), tr[q].phi);
        tr[q].F = F;
        tr[q].Fg = rotation_weights(tr[q].phi).transpose() * F;
    }
    return tr;
}

Vec8 Coupler::force_at(const InterfaceTrace& tr, const FacePoint& p) const {
    const int n = static_cast<int>(tr.size());
    return (1 - p.t) * tr[p.seg].Fg + p.t * tr[(p.seg + 1) % n].Fg;
}

Vec5 Coupler::conj_at(const InterfaceTrace& tr, const FacePoint& p) const {
    const int n = static_cast<int>(tr.size());
    return (1 - p.t) * dofs_to_conjugate(tr[p.seg].V) + p.t * dofs_to_conjugate(tr[(p.seg + 1) % n].V);
}

Vec Coupler::traction_load(const InterfaceTrace& tr) const {
    Vec f = Vec::Zero(solid_.ndof());
    for (const auto& p : gp_) {
        const Vec8 F = force_at(tr, p);
        Vec3 t = Vec3::Zero();
        for (int j = 0; j < 8; ++j)
            if (F[j] != 0) t += F[j] * traction(basis_.grid.at(basis_.tau[j], p.layer, p.zeta), p.n);
        for (int a = 0; a < p.nn; ++a) f.segment<3>(3 * p.nodes[a]) += (p.w * p.N[a]) * t;
    }
    return f;
}

Vec Coupler::tangential_load(const InterfaceTrace& tr) const {
    Vec f = Vec::Zero(solid_.ndof());
    for (const auto& p : gp_) {
        const Vec8 Fr = rotate_forces(force_at(tr, p), p.phi);
        const Mat8 W = rotation_weights(p.phi);
        Vec8 a = Vec8::Zero();
        for (int i = 5; i < 8; ++i) a += Fr[i] * W.row(i).transpose();
        Vec3 t = Vec3::Zero();
        for (int j = 0; j < 8; ++j) t += a[j] * traction(basis_.grid.at(basis_.tau[j], p.layer, p.zeta), p.n);
        for (int k = 0; k < p.nn; ++k) f.segment<3>(3 * p.nodes[k]) += (p.w * p.N[k]) * t;
    }
    return f;
}

Vec Coupler::constraint_values(const InterfaceTrace& tr) const {
    Vec c = Vec::Zero(B_.rows());
    if (B_.rows() == 0) return c;
    const int nC = static_cast<int>(tr.size());
    const bool quad = solid_.mesh().order == 2;
    for (const auto& p : gp_) {
        const Vec5 v = conj_at(tr, p);
        const double z = p.x.z();
        const Vec3 vp(v[0] + z * v[2], v[1] + z * v[3], v[4]);
        const Mat8 W = rotation_weights(p.phi);
        Eigen::Matrix<double, 8, 1> tv;
        for (int j = 0; j < 8; ++j) tv[j] = traction(basis_.grid.at(basis_.tau[j], p.layer, p.zeta), p.n).dot(vp);
        for (int k = 0; k < 5; ++k) {
            const double wk = p.w * W.row(k).dot(tv);
            if (quad) {
                c[5 * (p.seg / 2) + k] += wk;
            } else {
                c[5 * p.seg + k] += (1 - p.t) * wk;
                c[5 * ((p.seg + 1) % nC) + k] += p.t * wk;
            }
        }
    }
    return c;
}

Vec Coupler::displacement_values(const InterfaceTrace& tr) const {
    const SolidMesh& sm = solid_.mesh();
    Vec u = Vec::Zero(solid_.ndof());
    for (std::size_t q = 0; q < colsC_.size(); ++q) {
        const Vec5 v = dofs_to_conjugate(tr[q].V);
        const Vec8& F = tr[q].Fg;
        for (int id : colsC_[q].node_ids) {
            const double z = sm.nodes[id].z();
            const auto [layer, zeta] = locate_z(basis_.grid, z);
            Vec3 w(v[0] + z * v[2], v[1] + z * v[3], v[4]);
            for (int j = 0; j < 8; ++j)
                if (F[j] != 0) w += F[j] * basis_.grid.at(basis_.warp[j], layer, zeta).transpose();
            u.segment<3>(3 * id) = w;
        }
    }
    return u;
}

Residual Coupler::residual(const Vec& U, const Vec& u) const {
    const SolidMesh& sm = solid_.mesh();
    const Vec fs = solid_.internal_forces(u, elemsI_);
    const int n = static_cast<int>(colsI_.size());
    std::vector<Vec5> L3(n);
    for (int q = 0; q < n; ++q) {
        Vec5 g = Vec5::Zero();
        for (int id : colsI_[q].node_ids) {
            const Vec3 f = fs.segment<3>(3 * id);
            const double z = sm.nodes[id].z();
            g += Vec5(f.x(), f.y(), z * f.x(), z * f.y(), f.z());
        }
        L3[q] = g / colsI_[q].weight;
    }
    const Vec fp = plate_.internal_forces(U, {kZoneB, kZoneC});
    Residual r;
    r.closed = closedI_;
    r.nodal = interface_load(plate_.mesh(), curveI_, closedI_, L3);
    for (int id : curveI_) r.nodal.segment<5>(5 * id) += fp.segment<5>(5 * id);

    Eigen::MatrixXd R(n, 5);
    for (int q = 0; q < n; ++q) R.row(q) = dofs_to_conjugate(r.nodal.segment<5>(5 * curveI_[q])).transpose();
    const Eigen::MatrixXd L = line_mass_.solve(R);
    std::vector<Vec2> pts = points_of(plate_.mesh(), curveI_);
    std::vector<double> s, phi;
    curve_frame(pts, closedI_, s, phi);
    r.samples.resize(n);
    for (int q = 0; q < n; ++q) {
        auto& smp = r.samples[q];
        smp.s = s[q];
        smp.phi = phi[q];
        smp.node = curveI_[q];
        smp.L = L.row(q).transpose();
        smp.Ln = to_frame(smp.L, phi[q]);
        smp.L3d = L3[q];
    }
    r.length = s.back() + (closedI_ ? (pts.front() - pts.back()).norm() : 0.0);
    return r;
}

Coupler::LocalFields Coupler::evaluate(const Vec& U, bool homogeneous) const {
    LocalFields out;
    out.U = U;
    const InterfaceTrace tr = trace_C(U);
    Vec f = Vec::Zero(solid_.ndof());
    if (!homogeneous && bc_.load.size() == solid_.ndof()) f = bc_.load;
    Vec full = Vec::Zero(solid_.ndof());
    if (!homogeneous)
        for (std::size_t i = 0; i < bc_.fixed_dofs.size(); ++i) full[bc_.fixed_dofs[i]] = bc_.fixed_values[i];
    Vec c;
    switch (cfg_.descent) {
        case DescentMode::kTraction: f += traction_load(transmitted_trace(U)); break;
        case DescentMode::kLagrangian:
            f += tangential_load(tr);
            c = constraint_values(tr);
            break;
        case DescentMode::kDisplacement: {
            const Vec d = displacement_values(tr);
            for (const auto& col : colsC_)
                for (int id : col.node_ids) full.segment<3>(3 * id) = d.segment<3>(3 * id);
            break;
        }
    }
    const auto& dd = solid_.dirichlet_dofs();
    Vec ud(dd.size());
    for (std::size_t i = 0; i < dd.size(); ++i) ud[i] = full[dd[i]];
    SolidSolution sol = solid_.solve(f, ud, c);
    out.u = std::move(sol.u);
    out.lambda = std::move(sol.lambda);
    out.res = residual(U, out.u);
    out.r = out.res.nodal;
    return out;
}

double Coupler::kinematic_defect(const Vec& U, const Vec& u) const {
    const InterfaceTrace tr = trace_C(U);
    const ThicknessGrid& g = basis_.grid;
    const int o = g.order;
    const double h = basis_.h;
    double num = 0, den = 0;
    for (std::size_t q = 0; q < colsC_.size(); ++q) {
        const auto& col = colsC_[q];
        if (!col.full || col.corner) continue;
        DispProfile up(g.size(), 3);
        for (int k = 0; k < g.layers(); ++k)
            for (int i = 0; i <= o; ++i) up.row(k * (o + 1) + i) = u.segment<3>(3 * col.node_ids[k * o + i]).transpose();
        const Mat8 W = rotation_weights(col.phi);
        const Vec3 n(std::cos(col.phi), std::sin(col.phi), 0);
        const Vec5 V = to_frame(dofs_to_conjugate(tr[q].V), col.phi);
        for (int k = 0; k < 5; ++k) {
            DispProfile t = DispProfile::Zero(g.size(), 3);
            for (int r = 0; r < g.size(); ++r) {
                Eigen::Matrix<double, 1, 6> s = Eigen::Matrix<double, 1, 6>::Zero();
                for (int j = 0; j < 8; ++j) s += W(k, j) * basis_.tau[j].row(r);
                t.row(r) = traction(s, n).transpose();
            }
            double work = 0;
            for (int d = 0; d < 3; ++d) work += g.inner(up.col(d), t.col(d));
            const double scale = (k == 2 || k == 3) ? h : 1.0;
            num = std::max(num, scale * std::abs(work - V[k]));
            den = std::max(den, scale * std::abs(V[k]));
        }
    }
    return den > 0 ? num / den : num;
}

HybridState Coupler::initial() {
    HybridState s;
    if (plate_.factorizations() == 0) plate_.factorize();
    plate_.set_corrective(Vec::Zero(plate_.ndof()));
    s.U0 = plate_.solve();
    den_ = eta_denominators(trace_I(s.U0), basis_.h);
    LocalFields ev = evaluate(s.U0, false);
    s.U = s.U0;
    s.u0 = ev.u;
    s.u = ev.u;
    s.lambda = ev.lambda;
    s.residual = std::move(ev.res);
    s.corrective = Vec::Zero(plate_.ndof());
    s.eta_history.push_back(eta_norm(s.residual, den_));
    s.kinematic_history.push_back(kinematic_defect(s.U, s.u));
    s.relaxation_history.push_back(0);
    s.converged = s.eta_history.back() <= cfg_.eta_tolerance;
    s.plate_factorizations = plate_.factorizations();
    return s;
}

void Coupler::iterate(HybridState& s) {
    InterfaceIteration it;
    it.evaluate = [&](const Vec& f) {
        plate_.set_corrective(f);
        LocalFields ev = evaluate(plate_.solve(), false);
        s.U = std::move(ev.U);
        s.u = std::move(ev.u);
        s.lambda = std::move(ev.lambda);
        s.residual = std::move(ev.res);
        return ev.r;
    };
    it.apply = [&](const Vec& P) {
        last_apply_ = evaluate(plate_.solve_homogeneous(P), true);
        return last_apply_.r;
    };
    it.accept = [&](double alpha) {
        s.U += alpha * last_apply_.U;
        s.u += alpha * last_apply_.u;
        if (s.lambda.size() == last_apply_.lambda.size()) s.lambda += alpha * last_apply_.lambda;
        s.residual = residual(s.U, s.u);
    };
    it.precondition = [&](const Vec& rho) {
        const Vec Uz = plate_.solve_homogeneous(rho);
        Vec z = Vec::Zero(Uz.size());
        for (int id : curveI_) z.segment<5>(5 * id) = Uz.segment<5>(5 * id);
        return z;
    };
    it.eta = [&](const Vec&) { return eta_norm(s.residual, den_); };
    it.on_step = [&](double omega) {
        s.kinematic_history.push_back(kinematic_defect(s.U, s.u));
        s.relaxation_history.push_back(omega);
    };
    Vec f = s.corrective;
    Vec r = s.residual.nodal;
    s.iteration += drive_iteration(it, cfg_, f, r, s.eta_history);
    s.corrective = f;
    plate_.set_corrective(f);
    s.converged = s.eta_history.back() <= cfg_.eta_tolerance;
    s.plate_factorizations = plate_.factorizations();
}

HybridState Coupler::run() {
    HybridState s = initial();
    iterate(s);
    return s;
}

LimitReport Coupler::limit_checks(const HybridState& s) const {
    LimitReport rep;
    rep.equilibrium = eta_norm(s.residual, den_);
    rep.kinematic = kinematic_defect(s.U, s.u);
    const PlateMesh& pm = plate_.mesh();
    const SolidMesh& sm = solid_.mesh();
    const StressField sf = compute_stresses(solid_, s.u);
    const PointLocator loc(sm);
    const auto g = shape::gauss(3);
    const ThicknessGrid& tg = basis_.grid;
    std::vector<Eigen::Matrix<double, 8, 1>> d3, dp;
    for (std::size_t e = 0; e < pm.quads.size(); ++e) {
        if (pm.region[e] != kZoneB) continue;
        Vec2 X[4];
        double ue[20];
        Vec2 c = Vec2::Zero();
        for (int a = 0; a < 4; ++a) {
            X[a] = pm.nodes[pm.quads[e][a]];
            c += 0.25 * X[a];
            for (int i = 0; i < 5; ++i) ue[5 * a + i] = s.U[5 * pm.quads[e][a] + i];
        }
        dp.push_back(mitc4_resultants(X, plate_.stiffness(), ue, 0, 0));
        Eigen::Matrix<double, 8, 1> r = Eigen::Matrix<double, 8, 1>::Zero();
        for (int k = 0; k < tg.layers(); ++k) {
            const double zb = tg.z[k * (tg.order + 1)], zt = tg.z[k * (tg.order + 1) + tg.order];
            for (std::size_t i = 0; i < g.x.size(); ++i) {
                const double z = 0.5 * (zb + zt) + 0.5 * (zt - zb) * g.x[i], w = 0.5 * (zt - zb) * g.w[i];
                const Vec6 sg = stress_at(sm, sf, loc, Vec3(c.x(), c.y(), z));
                using namespace voigt;
                const double v[8] = {sg[XX], sg[YY], sg[XY], z * sg[XX], z * sg[YY], z * sg[XY], sg[XZ], sg[YZ]};
                for (int m = 0; m < 8; ++m) r[m] += w * v[m];
            }
        }
        d3.push_back(r);
    }
    if (dp.empty()) return rep;
    rep.has_buffer = true;
    const int fam[4] = {0, 3, 6, 8};
    Vec3 err = Vec3::Zero(), ref = Vec3::Zero();
    for (int fi = 0; fi < 3; ++fi) {
        const int a = fam[fi], len = fam[fi + 1] - fam[fi];
        for (std::size_t i = 0; i < dp.size(); ++i) {
            err[fi] += (d3[i] - dp[i]).segment(a, len).squaredNorm();
            ref[fi] = std::max(ref[fi], dp[i].segment(a, len).norm());
        }
        err[fi] = std::sqrt(err[fi] / static_cast<double>(dp.size()));
    }
    // Unloaded families are measured against the dominant one, moments scaled by 1/h.
    const double h = basis_.h, top = std::max({ref[0], ref[1] / h, ref[2]});
    const Vec3 unit(1, h, 1);
    for (int fi = 0; fi < 3; ++fi) {
        const double r = ref[fi] < 1e-6 * top * unit[fi] ? top * unit[fi] : ref[fi];
        if (r > 0) rep.buffer = std::max(rep.buffer, err[fi] / r);
    }
    return rep;
}

void Coupler::write_log(std::ostream& os, const HybridState& s) {
    os << "iteration,eta,relaxation,gamma_C_kinematic_defect\n";
    os << std::scientific << std::setprecision(8);
    for (std::size_t i = 0; i < s.eta_history.size(); ++i) {
        os << i << ',' << s.eta_history[i] << ','
           << (i < s.relaxation_history.size() ? s.relaxation_history[i] : 0.0) << ','
           << (i < s.kinematic_history.size() ? s.kinematic_history[i] : 0.0) << '\n';
    }
}

}  // namespace hp
