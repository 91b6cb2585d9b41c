#include "hp/svbasis.hpp"

#include "hp/errors.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace hp {

using namespace voigt;

ThicknessGrid ThicknessGrid::from_levels(const std::vector<double>& zb, int order) {
    if (order != 1 && order != 2) throw Error("thickness grid order must be 1 or 2");
    if (zb.size() < 2) throw Error("thickness grid needs at least one layer");
    ThicknessGrid g;
    g.order = order;
    const int nl = static_cast<int>(zb.size()) - 1, per = order + 1, n = nl * per;
    g.z.resize(n);
    g.M = Eigen::MatrixXd::Zero(n, n);
    for (int l = 0; l < nl; ++l) {
        const double a = zb[l], b = zb[l + 1], t = b - a;
        for (int q = 0; q < per; ++q) g.z[l * per + q] = a + t * q / order;
        Eigen::MatrixXd m(per, per);
        if (order == 2) m << 4, 2, -1, 2, 16, 2, -1, 2, 4;
        else m << 2, 1, 1, 2;
        m *= t / (order == 2 ? 30.0 : 6.0);
        g.M.block(l * per, l * per, per, per) = m;
    }
    g.w = g.M * Eigen::VectorXd::Ones(n);
    return g;
}

Vec8 generalized_forces(const ThicknessGrid& g, const StressProfile& s) {
    if (s.rows() != g.size()) throw MeshMismatchError("stress profile does not match the thickness grid");
    Vec8 F;
    F << g.integral(s.col(XX)), g.integral(s.col(XY)), g.inner(g.z, s.col(XX)), g.inner(g.z, s.col(XY)),
        g.integral(s.col(XZ)), g.integral(s.col(YY)), g.inner(g.z, s.col(YY)), g.integral(s.col(YZ));
    return F;
}

DispProfile plate_mode(const ThicknessGrid& g, int k, double phi) {
    const Vec3 n(std::cos(phi), std::sin(phi), 0), t(-std::sin(phi), std::cos(phi), 0);
    DispProfile p(g.size(), 3);
    for (int r = 0; r < g.size(); ++r) {
        Vec3 v;
        switch (k) {
            case 0: v = n; break;
            case 1: v = t; break;
            case 2: v = g.z[r] * n; break;
            case 3: v = g.z[r] * t; break;
            case 4: v = Vec3::UnitZ(); break;
            default: throw Error("plate mode index out of range");
        }
        p.row(r) = v.transpose();
    }
    return p;
}

namespace {

// Traction profile tau . e on a face of normal e = (nx, ny, 0).
DispProfile traction(const StressProfile& s, double nx, double ny) {
    DispProfile t(s.rows(), 3);
    t.col(0) = nx * s.col(XX) + ny * s.col(XY);
    t.col(1) = nx * s.col(XY) + ny * s.col(YY);
    t.col(2) = nx * s.col(XZ) + ny * s.col(YZ);
    return t;
}

double work(const ThicknessGrid& g, const DispProfile& a, const DispProfile& b) {
    double s = 0;
    for (int c = 0; c < 3; ++c) s += g.inner(a.col(c), b.col(c));
    return s;
}

// Through-thickness integral of the pointwise Frobenius norm.
double mean_norm(const ThicknessGrid& g, const StressProfile& s) {
    Eigen::VectorXd n(s.rows());
    for (int r = 0; r < s.rows(); ++r) {
        const auto v = s.row(r);
        n[r] = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + 2 * (v[3] * v[3] + v[4] * v[4] + v[5] * v[5]));
    }
    return g.integral(n);
}

Vec3 apply(const Vec6& s, const Vec3& n) {
    return Vec3(s[XX] * n.x() + s[XY] * n.y() + s[XZ] * n.z(), s[XY] * n.x() + s[YY] * n.y() + s[YZ] * n.z(),
                s[XZ] * n.x() + s[YZ] * n.y() + s[ZZ] * n.z());
}

int find_plane_node(const SolidMesh& m, const Vec2& p, double tol) {
    for (int k = 0; k < static_cast<int>(m.plane_nodes.size()); ++k)
        if ((m.plane_nodes[k] - p).norm() < tol && !m.column[k].empty()) return k;
    throw MeshMismatchError("cell mesh has no node column at the requested point");
}

int find_node(const SolidMesh& m, const Vec3& p, double tol) {
    for (int k = 0; k < static_cast<int>(m.nodes.size()); ++k)
        if ((m.nodes[k] - p).norm() < tol) return k;
    throw MeshMismatchError("cell mesh has no node at the requested point");
}

}  // namespace

Mat8 rotation_weights(double phi) {
    const double c = std::cos(phi), s = std::sin(phi);
    Mat8 W = Mat8::Zero();
    for (int f = 0; f < 2; ++f) {
        const int xx = f == 0 ? 0 : 2, xy = f == 0 ? 1 : 3, yy = f == 0 ? 5 : 6;
        const int nn = xx, nt = xy, tt = yy;
        W(nn, xx) = c * c, W(nn, xy) = c * s, W(nn, yy) = s * s;
        W(nt, xx) = -2 * c * s, W(nt, xy) = c * c - s * s, W(nt, yy) = 2 * c * s;
        W(tt, xx) = s * s, W(tt, xy) = -c * s, W(tt, yy) = c * c;
    }
    W(4, 4) = c, W(4, 7) = s;
    W(7, 4) = -s, W(7, 7) = c;
    return W;
}

RotatedBasis rotate_basis(const SaintVenantBasis& b, double phi) {
    const Mat8 W = rotation_weights(phi);
    RotatedBasis r;
    r.phi = phi;
    for (int i = 0; i < 8; ++i) {
        r.tau[i] = StressProfile::Zero(b.grid.size(), 6);
        r.warp[i] = DispProfile::Zero(b.grid.size(), 3);
        for (int j = 0; j < 8; ++j) {
            if (W(i, j) == 0) continue;
            r.tau[i] += W(i, j) * b.tau[j];
            if (b.warp[j].rows() == b.grid.size()) r.warp[i] += W(i, j) * b.warp[j];
        }
    }
    return r;
}

// ---- cell problems ------------------------------------------------------------------

CellModel::CellModel(const Laminate& lam, const CellOptions& opt) : lam_(lam), opt_(opt) {
    lam_.validate();
    if (!(opt.size_factor > 0)) throw ConfigError("cell size factor must be > 0");
    const double h = lam_.half_thickness();
    half_ = opt.size_factor * h;
    Geometry g;
    g.kind = Geometry::kCell;
    g.cell_half = half_;
    Densities d = opt.densities;
    if (d.n_side % 2 != 0) throw ConfigError("cell needs an even number of elements per side");
    mesh_ = generate_solid_mesh(g, lam_, d, true);
    sys_ = std::make_unique<SolidSystem>(mesh_, lam_, opt.assembly);
    const double tol = 1e-9 * half_;
    const int a = find_node(mesh_, Vec3(-half_, -half_, 0), tol);
    const int b = find_node(mesh_, Vec3(half_, -half_, 0), tol);
    const int c = find_node(mesh_, Vec3(-half_, half_, 0), tol);
    sys_->set_dirichlet(pin_321(a, b, c));
    sys_->factorize();
    centre_ = find_plane_node(mesh_, Vec2(0, 0), tol);
    std::vector<double> zb;
    for (std::size_t l = 0; l < mesh_.z_levels.size(); l += mesh_.order) zb.push_back(mesh_.z_levels[l]);
    grid_ = ThicknessGrid::from_levels(zb, mesh_.order);
}

void CellModel::solve(const std::array<StressState, 8>& loads, CellResponse& out) {
    std::vector<SolidFace> faces;
    for (const char* name : {"x0", "xL", "y-a", "ya"}) {
        const auto& f = mesh_.face_sets.at(name);
        faces.insert(faces.end(), f.begin(), f.end());
    }
    const auto& col = mesh_.column[centre_];
    const int per = grid_.order + 1;
    for (int j = 0; j < 8; ++j) {
        const StressState& st = loads[j];
        const Vec f = sys_->face_load(faces, [&](const Vec3& x, const Vec3& n, int layer, double zeta) {
            return apply(st(x.x(), x.y(), x.z(), layer, zeta), n);
        });
        check_self_equilibrium(mesh_, f, 1e-6);
        const auto s = sys_->solve(f, Vec::Zero(6));
        const auto prof = column_stress_profile(*sys_, s.u, centre_);
        out.sigma[j].resize(grid_.size(), 6);
        for (int r = 0; r < grid_.size(); ++r) out.sigma[j].row(r) = prof.stress[r].transpose();
        out.u[j].resize(grid_.size(), 3);
        if (static_cast<int>(col.size()) != grid_.layers() * grid_.order + 1)
            throw MeshMismatchError("cell centre column does not carry every z level");
        for (int l = 0; l < grid_.layers(); ++l)
            for (int q = 0; q < per; ++q)
                out.u[j].row(l * per + q) = s.u.segment<3>(3 * col[l * grid_.order + q]).transpose();
        out.F.col(j) = generalized_forces(grid_, out.sigma[j]);
    }
}

std::array<StressState, 8> table_loads(double h) {
    auto state = [](int comp, bool linear) {
        return StressState([=](double, double, double z, int, double) {
            Vec6 s = Vec6::Zero();
            s[comp] = linear ? z : 1.0;
            return s;
        });
    };
    // Shear cells carry the moment gradient that keeps the load equilibrated and M = 0 at the centre.
    const StressState qx = [h](double x, double, double z, int, double) {
        Vec6 s = Vec6::Zero();
        s[XZ] = 1;
        s[XX] = 3 * x * z / (h * h);
        return s;
    };
    const StressState qy = [h](double, double y, double z, int, double) {
        Vec6 s = Vec6::Zero();
        s[YZ] = 1;
        s[YY] = 3 * y * z / (h * h);
        return s;
    };
    return {state(XX, false), state(XY, false), state(XX, true), state(XY, true), qx,
            state(YY, false), state(YY, true),  qy};
}

void check_dominance(const Mat8& F) {
    for (int j = 0; j < 8; ++j) {
        double off = 0;
        for (int i = 0; i < 8; ++i)
            if (i != j) off = std::max(off, std::abs(F(i, j)));
        if (!(std::abs(F(j, j)) > off)) {
            std::ostringstream os;
            os << "cell problem " << j + 1 << " does not isolate its generalized force (diagonal " << F(j, j)
               << ", largest off-diagonal " << off << "); use a larger cell";
            throw CellSizeError(os.str());
        }
    }
}

CellResponse run_cell_problems(CellModel& cell) {
    CellResponse r;
    cell.solve(table_loads(cell.laminate().half_thickness()), r);
    check_dominance(r.F);
    return r;
}

SaintVenantBasis decouple_basis(const ThicknessGrid& g, const CellResponse& r) {
    Eigen::JacobiSVD<Mat8> svd(r.F);
    const auto sv = svd.singularValues();
    const double cond = sv[7] > 0 ? sv[0] / sv[7] : INFINITY;
    if (!(cond < 1e8)) {
        std::ostringstream os;
        os << "generalized-force matrix is ill-conditioned (condition estimate " << cond << ")";
        throw ConditioningError(os.str());
    }
    const Mat8 Finv = r.F.inverse();
    SaintVenantBasis b;
    b.grid = g;
    b.F_matrix = r.F;
    for (int i = 0; i < 8; ++i) {
        b.tau[i] = StressProfile::Zero(g.size(), 6);
        b.U[i] = DispProfile::Zero(g.size(), 3);
        for (int j = 0; j < 8; ++j) {
            b.tau[i] += Finv(j, i) * r.sigma[j];
            b.U[i] += Finv(j, i) * r.u[j];
        }
    }
    return b;
}

void extract_warping(SaintVenantBasis& b) {
    const auto& g = b.grid;
    std::array<DispProfile, 5> tx, modes;
    for (int k = 0; k < 5; ++k) {
        if (b.tau[k].rows() != g.size()) throw MeshMismatchError("stress basis does not match the thickness grid");
        tx[k] = traction(b.tau[k], 1, 0);
        modes[k] = plate_mode(g, k);
    }
    for (int i = 0; i < 8; ++i) {
        if (b.U[i].rows() != g.size()) throw MeshMismatchError("displacement profile does not match the thickness grid");
        b.warp[i] = b.U[i];
        for (int k = 0; k < 5; ++k) {
            b.V(i, k) = work(g, tx[k], b.U[i]);
            b.warp[i] -= b.V(i, k) * modes[k];
        }
    }
}

std::vector<double> refine_basis(CellModel& cell, SaintVenantBasis& b, int passes) {
    std::vector<double> added;
    std::array<double, 8> ref{};
    for (int i = 0; i < 8; ++i) ref[i] = mean_norm(b.grid, b.tau[i]);
    for (int p = 0; p < passes; ++p) {
        const ThicknessGrid& g = b.grid;
        std::array<StressState, 8> loads;
        for (int i = 0; i < 8; ++i) {
            const StressProfile t = b.tau[i];
            const StressProfile grad = i == 4 ? b.tau[2] : i == 7 ? b.tau[6] : StressProfile();
            loads[i] = [t, grad, i, &g](double x, double y, double, int layer, double zeta) -> Vec6 {
                Vec6 s = g.at(t, layer, zeta).transpose();
                if (i == 4) s += x * g.at(grad, layer, zeta).transpose();
                if (i == 7) s += y * g.at(grad, layer, zeta).transpose();
                return s;
            };
        }
        CellResponse r;
        cell.solve(loads, r);
        SaintVenantBasis nb = decouple_basis(g, r);
        nb.h = b.h;
        nb.cell_side = b.cell_side;
        nb.laminate_hash = b.laminate_hash;
        nb.refinement_level = b.refinement_level + 1;
        nb.history = b.history;
        extract_warping(nb);
        double corr = 0;
        for (int i = 0; i < 8; ++i) corr = std::max(corr, mean_norm(g, nb.tau[i] - b.tau[i]) / ref[i]);
        const double prev = b.history.empty() ? 1.0 : b.history.back();
        if (corr > prev) {
            std::ostringstream os;
            os << "basis refinement diverges: correction " << corr << " after " << prev;
            throw DivergenceError(os.str());
        }
        nb.history.push_back(corr);
        added.push_back(corr);
        b = std::move(nb);
    }
    return added;
}

SaintVenantBasis build_basis(CellModel& cell, int refine_passes) {
    const CellResponse r = run_cell_problems(cell);
    SaintVenantBasis b = decouple_basis(cell.grid(), r);
    b.h = cell.laminate().half_thickness();
    b.cell_side = cell.side();
    b.laminate_hash = cell.laminate().hash();
    extract_warping(b);
    if (refine_passes > 0) refine_basis(cell, b, refine_passes);
    return b;
}

// ---- consistency measures -----------------------------------------------------------

double WorkDefects::worst_ratio(int row) const {
    double w = 0;
    for (int i = 0; i < 8; ++i)
        if (scale(row, i) > 0) w = std::max(w, std::abs(defect(row, i)) / (bound(row) * scale(row, i)));
    return w;
}

bool WorkDefects::within_bounds() const {
    for (int r = 0; r < 5; ++r)
        if (!(worst_ratio(r) <= 1)) return false;
    return true;
}

Mat8 plate_compliance(const PlateStiffness& S) {
    // Generalized strains (e_xx, e_yy, g_xy, k_xx, k_yy, k_xy) against (N, M) in Voigt order.
    Eigen::Matrix<double, 6, 6> abd;
    abd << S.A, S.B, S.B, S.D;
    const Eigen::Matrix<double, 6, 6> cb = abd.inverse();
    const Mat2 cs = S.Fs.inverse();
    // Slots of the generalized-force ordering in the (N, M) Voigt vector, and in (Q_x, Q_y).
    const int nm[8] = {0, 2, 3, 5, -1, 1, 4, -1};
    const int q[8] = {-1, -1, -1, -1, 0, -1, -1, 1};
    Mat8 C = Mat8::Zero();
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) {
            if (nm[i] >= 0 && nm[j] >= 0) C(i, j) = cb(nm[i], nm[j]);
            if (q[i] >= 0 && q[j] >= 0) C(i, j) = cs(q[i], q[j]);
        }
    return C;
}

WorkDefects work_defects(const SaintVenantBasis& b, const PlateStiffness& S) {
    const auto& g = b.grid;
    const int pair[5][2] = {{0, 1}, {1, 5}, {2, 3}, {3, 6}, {4, 7}};
    const std::vector<int> family[5] = {{0, 1, 5}, {0, 1, 5}, {2, 3, 6}, {2, 3, 6}, {4, 7}};
    const Mat8 C = plate_compliance(S);
    WorkDefects d;
    d.h_over_L = b.h / b.cell_side;
    for (int r = 0; r < 5; ++r) {
        const DispProfile ta = traction(b.tau[pair[r][0]], 1, 0), tb = traction(b.tau[pair[r][1]], 0, 1);
        for (int i = 0; i < 8; ++i) {
            d.defect(r, i) = work(g, ta - tb, b.U[i]);
            double s = 0;
            for (int j : family[r]) s = std::max(s, std::sqrt(std::abs(C(j, j) * C(i, i))));
            d.scale(r, i) = b.h * s;
        }
    }
    return d;
}

double warping_work_defect(const SaintVenantBasis& b, const PlateStiffness& S, double phi) {
    const RotatedBasis r = rotate_basis(b, phi);
    const Mat8 W = rotation_weights(phi);
    const Mat8 Cr = W * plate_compliance(S) * W.transpose();
    const double c = std::cos(phi), s = std::sin(phi);
    double worst = 0;
    for (int k = 0; k < 5; ++k) {
        const DispProfile t = traction(r.tau[k], c, s);
        for (int i = 0; i < 8; ++i) {
            const double sc = b.h * std::sqrt(std::abs(Cr(k, k) * Cr(i, i)));
            worst = std::max(worst, std::abs(work(b.grid, t, r.warp[i])) / sc);
        }
    }
    return worst;
}

// ---- persistence --------------------------------------------------------------------

namespace {

void put(std::ostream& os, double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, " %24.16e", v);
    os << buf;
}

template <class M>
void put_rows(std::ostream& os, const M& m) {
    for (int r = 0; r < m.rows(); ++r) {
        for (int c = 0; c < m.cols(); ++c) put(os, m(r, c));
        os << '\n';
    }
}

struct Reader {
    std::istream& is;

    std::string word() {
        std::string w;
        if (!(is >> w)) throw FormatError("basis file is truncated");
        return w;
    }
    void expect(const std::string& key) {
        const std::string w = word();
        if (w != key) throw FormatError("basis file: expected '" + key + "', found '" + w + "'");
    }
    double number() {
        const std::string w = word();
        char* end = nullptr;
        const double v = std::strtod(w.c_str(), &end);
        if (end == w.c_str() || *end != '\0') throw FormatError("basis file: bad number '" + w + "'");
        return v;
    }
    long integer() {
        const double v = number();
        if (v != std::floor(v)) throw FormatError("basis file: expected an integer");
        return static_cast<long>(v);
    }
    template <class M>
    void rows(M& m) {
        for (int r = 0; r < m.rows(); ++r)
            for (int c = 0; c < m.cols(); ++c) m(r, c) = number();
    }
};

}  // namespace

void save_basis(std::ostream& os, const SaintVenantBasis& b) {
    const int n = b.grid.size();
    os << "SVB1\n";
    os << "laminate_hash " << b.laminate_hash << '\n';
    os << "half_thickness";
    put(os, b.h);
    os << "\ncell_side";
    put(os, b.cell_side);
    os << "\norder " << b.grid.order << "\nnodes " << n << "\nrefinement_level " << b.refinement_level << '\n';
    os << "z\n";
    for (int r = 0; r < n; ++r) put(os, b.grid.z[r]);
    os << "\nF\n";
    put_rows(os, b.F_matrix);
    os << "history " << b.history.size() << '\n';
    for (double v : b.history) put(os, v);
    os << '\n';
    for (int i = 0; i < 8; ++i) {
        os << "tau " << i + 1 << '\n';
        put_rows(os, b.tau[i]);
    }
    for (int i = 0; i < 8; ++i) {
        os << "U " << i + 1 << '\n';
        put_rows(os, b.U[i]);
    }
    for (int i = 0; i < 8; ++i) {
        os << "warp " << i + 1 << '\n';
        put_rows(os, b.warp[i]);
    }
    os << "V\n";
    put_rows(os, b.V);
    os << "end\n";
}

SaintVenantBasis load_basis(std::istream& is) {
    Reader rd{is};
    const std::string tag = rd.word();
    if (tag != "SVB1") throw FormatError("not a basis file or unsupported version: '" + tag + "'");
    SaintVenantBasis b;
    rd.expect("laminate_hash");
    {
        const std::string w = rd.word();
        char* end = nullptr;
        b.laminate_hash = std::strtoull(w.c_str(), &end, 10);
        if (*end != '\0') throw FormatError("basis file: bad laminate hash");
    }
    rd.expect("half_thickness");
    b.h = rd.number();
    rd.expect("cell_side");
    b.cell_side = rd.number();
    rd.expect("order");
    const int order = static_cast<int>(rd.integer());
    rd.expect("nodes");
    const long n = rd.integer();
    if (order < 1 || order > 2 || n <= 0 || n % (order + 1) != 0) throw FormatError("basis file: bad grid size");
    rd.expect("refinement_level");
    b.refinement_level = static_cast<int>(rd.integer());
    rd.expect("z");
    Eigen::VectorXd z(n);
    for (long r = 0; r < n; ++r) z[r] = rd.number();
    std::vector<double> zb;
    for (long r = 0; r < n; r += order + 1) zb.push_back(z[r]);
    zb.push_back(z[n - 1]);
    b.grid = ThicknessGrid::from_levels(zb, order);
    b.grid.z = z;
    rd.expect("F");
    rd.rows(b.F_matrix);
    rd.expect("history");
    const long nh = rd.integer();
    if (nh < 0 || nh > 1000) throw FormatError("basis file: bad history length");
    for (long k = 0; k < nh; ++k) b.history.push_back(rd.number());
    const char* keys[3] = {"tau", "U", "warp"};
    for (int part = 0; part < 3; ++part)
        for (int i = 0; i < 8; ++i) {
            rd.expect(keys[part]);
            if (rd.integer() != i + 1) throw FormatError("basis file: profiles out of order");
            if (part == 0) {
                b.tau[i].resize(n, 6);
                rd.rows(b.tau[i]);
            } else {
                DispProfile& p = part == 1 ? b.U[i] : b.warp[i];
                p.resize(n, 3);
                rd.rows(p);
            }
        }
    rd.expect("V");
    rd.rows(b.V);
    rd.expect("end");
    return b;
}

void check_basis(const SaintVenantBasis& b, const Laminate& lam) {
    if (b.laminate_hash != lam.hash()) {
        std::ostringstream os;
        os << "basis was built for laminate " << b.laminate_hash << ", active laminate is " << lam.hash()
           << "; rebuild the basis";
        throw StaleBasisError(os.str());
    }
}

}  // namespace hp
