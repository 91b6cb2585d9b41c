#include "hp/mesh.hpp"

#include "hp/errors.hpp"
#include "hp/shape.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <unordered_map>

namespace hp {

namespace {

struct PointIndex {
    double cell, tol;
    std::unordered_map<long long, std::vector<int>> buckets;
    const std::vector<Vec2>* pts;

    long long key(long long i, long long j) const { return i * 1000003LL + j; }

    int find(const Vec2& p) const {
        const long long i = std::llround(p.x() / cell), j = std::llround(p.y() / cell);
        for (long long di = -1; di <= 1; ++di)
            for (long long dj = -1; dj <= 1; ++dj) {
                auto it = buckets.find(key(i + di, j + dj));
                if (it == buckets.end()) continue;
                for (int id : it->second)
                    if (((*pts)[id] - p).norm() <= tol) return id;
            }
        return -1;
    }
    void insert(const Vec2& p, int id) {
        buckets[key(std::llround(p.x() / cell), std::llround(p.y() / cell))].push_back(id);
    }
};

double signed_area(const std::vector<Vec2>& n, const int* c) {
    double a = 0;
    for (int k = 0; k < 4; ++k) {
        const Vec2& p = n[c[k]];
        const Vec2& q = n[c[(k + 1) % 4]];
        a += p.x() * q.y() - q.x() * p.y();
    }
    return 0.5 * a;
}

}  // namespace

std::vector<double> uniform_breaks(int n) {
    std::vector<double> b(n + 1);
    for (int i = 0; i <= n; ++i) b[i] = static_cast<double>(i) / n;
    return b;
}

std::vector<double> graded_breaks(int n, double ratio) {
    std::vector<double> b(n + 1, 0.0);
    double s = 1, total = 0;
    std::vector<double> sz(n);
    for (int i = 0; i < n; ++i) {
        sz[i] = s;
        total += s;
        s *= ratio;
    }
    for (int i = 0; i < n; ++i) b[i + 1] = b[i] + sz[i] / total;
    b[n] = 1.0;
    return b;
}

Mesh2D build_block_mesh(const std::vector<BlockSpec>& blocks, int order, double length_scale) {
    Mesh2D m;
    m.order = order;
    PointIndex idx{1e-6 * length_scale, 1e-8 * length_scale, {}, &m.nodes};
    for (const auto& b : blocks) {
        const int nu = static_cast<int>(b.u.size()) - 1, nv = static_cast<int>(b.v.size()) - 1;
        if (nu < 1 || nv < 1) throw GeometryError("block with no elements");
        auto lattice = [&](const std::vector<double>& br) {
            std::vector<double> l;
            for (std::size_t i = 0; i + 1 < br.size(); ++i) {
                l.push_back(br[i]);
                if (order == 2) l.push_back(0.5 * (br[i] + br[i + 1]));
            }
            l.push_back(br.back());
            return l;
        };
        const auto lu = lattice(b.u), lv = lattice(b.v);
        std::vector<int> ids(lu.size() * lv.size());
        for (std::size_t j = 0; j < lv.size(); ++j)
            for (std::size_t i = 0; i < lu.size(); ++i) {
                const Vec2 p = b.map(lu[i], lv[j]);
                int id = idx.find(p);
                if (id < 0) {
                    id = static_cast<int>(m.nodes.size());
                    m.nodes.push_back(p);
                    char k = 0;
                    if (order == 2) k = static_cast<char>((i % 2) + (j % 2));
                    m.kind.push_back(k);
                    idx.insert(p, id);
                }
                ids[j * lu.size() + i] = id;
            }
        const std::size_t W = lu.size();
        auto at = [&](int i, int j) { return ids[static_cast<std::size_t>(j) * W + i]; };
        for (int j = 0; j < nv; ++j)
            for (int i = 0; i < nu; ++i) {
                std::array<int, 9> e{};
                e.fill(-1);
                if (order == 2) {
                    const int I = 2 * i, J = 2 * j;
                    e = {at(I, J),         at(I + 2, J),     at(I + 2, J + 2), at(I, J + 2),
                         at(I + 1, J),     at(I + 2, J + 1), at(I + 1, J + 2), at(I, J + 1),
                         at(I + 1, J + 1)};
                } else {
                    e[0] = at(i, j);
                    e[1] = at(i + 1, j);
                    e[2] = at(i + 1, j + 1);
                    e[3] = at(i, j + 1);
                }
                const double area = signed_area(m.nodes, e.data());
                if (std::abs(area) < 1e-14 * length_scale * length_scale)
                    throw GeometryError("degenerate element in block mesh");
                if (area < 0) {
                    std::swap(e[1], e[3]);
                    if (order == 2) e = {e[0], e[1], e[2], e[3], e[7], e[6], e[5], e[4], e[8]};
                }
                m.elems.push_back(e);
                m.region.push_back(b.region);
            }
    }
    return m;
}

EdgeSet collect_square(const Mesh2D& m, double cx, double cy, double half, double tol) {
    const double xl = cx - half, xr = cx + half, yb = cy - half, yt = cy + half;
    std::vector<std::pair<double, int>> v;
    for (int i = 0; i < static_cast<int>(m.nodes.size()); ++i) {
        const Vec2& p = m.nodes[i];
        const double d = std::max(std::abs(p.x() - cx), std::abs(p.y() - cy));
        if (std::abs(d - half) > tol) continue;
        double t;
        if (std::abs(p.y() - yb) < tol && p.x() < xr - tol) t = p.x() - xl;
        else if (std::abs(p.x() - xr) < tol && p.y() < yt - tol) t = 2 * half + (p.y() - yb);
        else if (std::abs(p.y() - yt) < tol && p.x() > xl + tol) t = 4 * half + (xr - p.x());
        else t = 6 * half + (yt - p.y());
        v.emplace_back(t, i);
    }
    std::sort(v.begin(), v.end());
    EdgeSet e;
    e.closed = true;
    for (auto& [t, i] : v) e.nodes.push_back(i);
    return e;
}

EdgeSet collect_line(const Mesh2D& m, int axis, double value, bool ascending, double tol) {
    std::vector<std::pair<double, int>> v;
    for (int i = 0; i < static_cast<int>(m.nodes.size()); ++i)
        if (std::abs(m.nodes[i][axis] - value) < tol) v.emplace_back(m.nodes[i][1 - axis], i);
    std::sort(v.begin(), v.end());
    if (!ascending) std::reverse(v.begin(), v.end());
    EdgeSet e;
    for (auto& [t, i] : v) e.nodes.push_back(i);
    return e;
}

EdgeSet collect_circle(const Mesh2D& m, double cx, double cy, double r, double tol) {
    std::vector<std::pair<double, int>> v;
    for (int i = 0; i < static_cast<int>(m.nodes.size()); ++i) {
        const Vec2 d = m.nodes[i] - Vec2(cx, cy);
        if (std::abs(d.norm() - r) < tol) v.emplace_back(-std::atan2(d.y(), d.x()), i);
    }
    // Clockwise, so the material (outside the hole) is on the left.
    std::sort(v.begin(), v.end());
    EdgeSet e;
    e.closed = true;
    for (auto& [t, i] : v) e.nodes.push_back(i);
    return e;
}

std::vector<Vec2> curve_points(const Mesh2D& layout, const EdgeSet& e) {
    std::vector<Vec2> p;
    for (int i : e.nodes) p.push_back(layout.nodes[i]);
    return p;
}

SolidMesh extrude(const Mesh2D& layout, const Laminate& lam, int lpp, const std::vector<int>& regions) {
    lam.validate();
    if (lpp < 1) throw GeometryError("layers per ply must be >= 1");
    SolidMesh s;
    s.order = layout.order;
    s.layers_per_ply = lpp;
    s.h = lam.half_thickness();
    const auto zi = lam.z_interfaces();
    std::vector<double> zc;
    for (std::size_t p = 0; p < lam.plies.size(); ++p)
        for (int k = 0; k < lpp; ++k) zc.push_back(zi[p] + (zi[p + 1] - zi[p]) * k / lpp);
    zc.push_back(zi.back());
    const int nz = static_cast<int>(zc.size()) - 1;
    if (s.order == 2) {
        for (int k = 0; k < nz; ++k) {
            s.z_levels.push_back(zc[k]);
            s.z_levels.push_back(0.5 * (zc[k] + zc[k + 1]));
        }
        s.z_levels.push_back(zc.back());
    } else {
        s.z_levels = zc;
    }
    std::vector<char> used(layout.nodes.size(), 0);
    std::vector<int> sel;
    for (int e = 0; e < static_cast<int>(layout.elems.size()); ++e) {
        if (std::find(regions.begin(), regions.end(), layout.region[e]) == regions.end()) continue;
        sel.push_back(e);
        const int nn = s.order == 2 ? 8 : 4;
        for (int a = 0; a < nn; ++a) used[layout.elems[e][a]] = 1;
    }
    s.plane_nodes = layout.nodes;
    s.column.assign(layout.nodes.size(), {});
    for (int i = 0; i < static_cast<int>(layout.nodes.size()); ++i) {
        if (!used[i]) continue;
        const bool mid = s.order == 2 && layout.kind[i] == 1;
        for (int l = 0; l < static_cast<int>(s.z_levels.size()); ++l) {
            if (mid && (l % 2)) continue;
            s.column[i].push_back(static_cast<int>(s.nodes.size()));
            s.nodes.emplace_back(layout.nodes[i].x(), layout.nodes[i].y(), s.z_levels[l]);
            s.node2d.push_back(i);
        }
    }
    auto at = [&](int i2, int l) {
        const auto& c = s.column[i2];
        if (s.order == 2 && layout.kind[i2] == 1) return c[l / 2];
        return c[l];
    };
    for (int e : sel) {
        const auto& q = layout.elems[e];
        for (int k = 0; k < nz; ++k) {
            if (s.order == 2) {
                const int b = 2 * k, m = 2 * k + 1, t = 2 * k + 2;
                const int c[20] = {at(q[0], b), at(q[1], b), at(q[2], b), at(q[3], b),
                                   at(q[0], t), at(q[1], t), at(q[2], t), at(q[3], t),
                                   at(q[4], b), at(q[5], b), at(q[6], b), at(q[7], b),
                                   at(q[4], t), at(q[5], t), at(q[6], t), at(q[7], t),
                                   at(q[0], m), at(q[1], m), at(q[2], m), at(q[3], m)};
                s.conn.insert(s.conn.end(), c, c + 20);
            } else {
                const int c[8] = {at(q[0], k),     at(q[1], k),     at(q[2], k),     at(q[3], k),
                                  at(q[0], k + 1), at(q[1], k + 1), at(q[2], k + 1), at(q[3], k + 1)};
                s.conn.insert(s.conn.end(), c, c + 8);
            }
            s.ply.push_back(k / lpp);
            s.region.push_back(layout.region[e]);
            s.elem2d.push_back(e);
            s.layer.push_back(k);
        }
    }
    for (const auto& [name, es] : layout.edges) {
        bool ok = !es.nodes.empty();
        for (int i : es.nodes) ok = ok && !s.column[i].empty();
        if (ok) s.face_sets[name] = faces_along(s, layout, es);
    }
    return s;
}

std::vector<SolidFace> faces_along(const SolidMesh& s, const Mesh2D& layout, const EdgeSet& edge) {
    std::vector<SolidFace> out;
    const auto& nd = edge.nodes;
    const int n = static_cast<int>(nd.size());
    const int step = s.order == 2 ? 2 : 1;
    const int nseg = edge.closed ? n / step : (n - 1) / step;
    const int nlev = static_cast<int>(s.z_levels.size());
    const int nz = s.order == 2 ? (nlev - 1) / 2 : nlev - 1;
    auto col = [&](int i2, int l) {
        const auto& c = s.column[i2];
        if (c.empty()) throw MeshMismatchError("edge node without a solid column");
        if (s.order == 2 && layout.kind[i2] == 1) return c[l / 2];
        return c[l];
    };
    for (int q = 0; q < nseg; ++q) {
        const int a = nd[(q * step) % n], b = nd[(q * step + step) % n];
        const Vec2 t = (s.plane_nodes[b] - s.plane_nodes[a]).normalized();
        const Vec3 nrm(t.y(), -t.x(), 0.0);
        for (int k = 0; k < nz; ++k) {
            SolidFace f;
            f.normal = nrm;
            if (s.order == 2) {
                const int m = nd[(q * step + 1) % n];
                const int lb = 2 * k, lm = 2 * k + 1, lt = 2 * k + 2;
                f.nodes = {col(a, lb), col(b, lb), col(b, lt), col(a, lt),
                           col(m, lb), col(b, lm), col(m, lt), col(a, lm)};
            } else {
                f.nodes = {col(a, k), col(b, k), col(b, k + 1), col(a, k + 1)};
            }
            out.push_back(std::move(f));
        }
    }
    return out;
}

PlateMesh plate_from_layout(const Mesh2D& layout, const std::vector<int>& regions) {
    PlateMesh p;
    p.nodes = layout.nodes;
    for (int e = 0; e < static_cast<int>(layout.elems.size()); ++e) {
        if (std::find(regions.begin(), regions.end(), layout.region[e]) == regions.end()) continue;
        const auto& q = layout.elems[e];
        if (layout.order == 2) {
            const std::array<std::array<int, 4>, 4> sub = {{{q[0], q[4], q[8], q[7]},
                                                            {q[4], q[1], q[5], q[8]},
                                                            {q[8], q[5], q[2], q[6]},
                                                            {q[7], q[8], q[6], q[3]}}};
            for (const auto& sq : sub) {
                p.quads.push_back(sq);
                p.region.push_back(layout.region[e]);
            }
        } else {
            p.quads.push_back({q[0], q[1], q[2], q[3]});
            p.region.push_back(layout.region[e]);
        }
    }
    p.edge_sets = layout.edges;
    return p;
}

std::vector<NodeColumn> interface_columns(const SolidMesh& s, const std::vector<Vec2>& curve, bool closed) {
    double scale = 0;
    for (const auto& p : s.plane_nodes) scale = std::max(scale, p.cwiseAbs().maxCoeff());
    scale = std::max(scale, 1.0);
    PointIndex idx{1e-6 * scale, 1e-9 * scale, {}, &s.plane_nodes};
    for (int i = 0; i < static_cast<int>(s.plane_nodes.size()); ++i)
        if (!s.column[i].empty()) idx.insert(s.plane_nodes[i], i);
    const int n = static_cast<int>(curve.size());
    std::vector<NodeColumn> cols(n);
    auto seg_normal = [&](int a, int b) {
        const Vec2 t = (curve[b] - curve[a]).normalized();
        return Vec2(t.y(), -t.x());
    };
    double s_acc = 0;
    for (int q = 0; q < n; ++q) {
        const int id = idx.find(curve[q]);
        if (id < 0) throw MeshMismatchError("curve point does not match any solid column");
        auto& c = cols[q];
        c.plane_node = id;
        c.node_ids = s.column[id];
        for (int nid : c.node_ids) c.z_values.push_back(s.nodes[nid].z());
        c.full = c.node_ids.size() == s.z_levels.size();
        if (q > 0) s_acc += (curve[q] - curve[q - 1]).norm();
        c.s = s_acc;
        const bool has_prev = closed || q > 0, has_next = closed || q < n - 1;
        Vec2 nrm = Vec2::Zero();
        Vec2 np = Vec2::Zero(), nn = Vec2::Zero();
        if (has_prev) np = seg_normal((q - 1 + n) % n, q);
        if (has_next) nn = seg_normal(q, (q + 1) % n);
        nrm = np + nn;
        c.phi = std::atan2(nrm.y(), nrm.x());
        if (has_prev && has_next) c.corner = np.dot(nn) < std::cos(15.0 * std::numbers::pi / 180.0);
    }
    // Tributary weights: Simpson on quadratic element edges, half-sum on linear ones.
    const int step = s.order == 2 ? 2 : 1;
    auto len = [&](int a, int b) { return (curve[b % n] - curve[a % n]).norm(); };
    const int nseg = closed ? n / step : (n - 1) / step;
    for (int q = 0; q < nseg; ++q) {
        const int a = q * step;
        if (step == 2) {
            const double L = len(a, a + 1) + len(a + 1, a + 2);
            cols[a % n].weight += L / 6;
            cols[(a + 1) % n].weight += 4 * L / 6;
            cols[(a + 2) % n].weight += L / 6;
        } else {
            const double L = len(a, a + 1);
            cols[a % n].weight += L / 2;
            cols[(a + 1) % n].weight += L / 2;
        }
    }
    return cols;
}

double min_jacobian(const SolidMesh& m) {
    const int npe = m.npe();
    const auto g = shape::gauss(m.order == 2 ? 3 : 2);
    double mn = std::numeric_limits<double>::infinity();
    double N[20], dN[20][3];
    for (int e = 0; e < m.num_elems(); ++e) {
        const int* c = m.elem(e);
        for (double x : g.x)
            for (double y : g.x)
                for (double z : g.x) {
                    shape::hex(npe, x, y, z, N, dN);
                    Eigen::Matrix3d J = Eigen::Matrix3d::Zero();
                    for (int a = 0; a < npe; ++a)
                        for (int i = 0; i < 3; ++i)
                            for (int j = 0; j < 3; ++j) J(i, j) += dN[a][i] * m.nodes[c[a]][j];
                    mn = std::min(mn, J.determinant());
                }
    }
    return mn;
}

double min_jacobian(const PlateMesh& m) {
    const auto g = shape::gauss(2);
    double mn = std::numeric_limits<double>::infinity();
    double N[4], dN[4][2];
    for (const auto& q : m.quads)
        for (double x : g.x)
            for (double y : g.x) {
                shape::quad(4, x, y, N, dN);
                Eigen::Matrix2d J = Eigen::Matrix2d::Zero();
                for (int a = 0; a < 4; ++a)
                    for (int i = 0; i < 2; ++i)
                        for (int j = 0; j < 2; ++j) J(i, j) += dN[a][i] * m.nodes[q[a]][j];
                mn = std::min(mn, J.determinant());
            }
    return mn;
}

namespace {

BlockSpec rect_block(double x0, double x1, double y0, double y1, std::vector<double> u,
                     std::vector<double> v, int region) {
    BlockSpec b;
    b.map = [=](double s, double t) { return Vec2(x0 + s * (x1 - x0), y0 + t * (y1 - y0)); };
    b.u = std::move(u);
    b.v = std::move(v);
    b.region = region;
    return b;
}

// Ring block between two closed square-like curves, side k (0 bottom, 1 right, 2 top, 3 left).
BlockSpec ring_block(std::function<Vec2(int, double)> inner, std::function<Vec2(int, double)> outer,
                     int k, int n_side, std::vector<double> v, int region) {
    BlockSpec b;
    b.map = [=](double s, double t) {
        const Vec2 pi = inner(k, s), po = outer(k, s);
        return Vec2(pi + t * (po - pi));
    };
    b.u = uniform_breaks(n_side);
    b.v = std::move(v);
    b.region = region;
    return b;
}

std::function<Vec2(int, double)> square_side(double cx, double cy, double half) {
    return [=](int k, double s) {
        const Vec2 c[4] = {{cx - half, cy - half}, {cx + half, cy - half}, {cx + half, cy + half},
                           {cx - half, cy + half}};
        return Vec2(c[k] + s * (c[(k + 1) % 4] - c[k]));
    };
}

}  // namespace

Mesh2D make_layout(const Geometry& g, const Densities& d, bool hole) {
    if (d.n_side < 1 || d.layers_per_ply < 1 || d.n_radial < 1 || d.n_outer < 1)
        throw GeometryError("mesh densities must be >= 1");
    std::vector<BlockSpec> blocks;
    Mesh2D m;
    const double tol = 1e-7;
    switch (g.kind) {
        case Geometry::kCell: {
            const double c = g.cell_half;
            if (!(c > 0)) throw GeometryError("cell size must be > 0");
            blocks.push_back(rect_block(-c, c, -c, c, uniform_breaks(d.n_side), uniform_breaks(d.n_side), kZoneI));
            m = build_block_mesh(blocks, d.order, c);
            m.edges["x0"] = collect_line(m, 0, -c, false, tol * c);
            m.edges["xL"] = collect_line(m, 0, c, true, tol * c);
            m.edges["y-a"] = collect_line(m, 1, -c, true, tol * c);
            m.edges["ya"] = collect_line(m, 1, c, false, tol * c);
            break;
        }
        case Geometry::kCantilever: {
            if (!(g.L > 0 && g.a > 0)) throw GeometryError("cantilever L and a must be > 0");
            if (g.buffer < 0 || g.buffer >= g.L) throw GeometryError("buffer must lie in [0, L)");
            const double dx = g.L / d.n_side;
            const int nB = static_cast<int>(std::lround(g.buffer / dx));
            if (std::abs(nB * dx - g.buffer) > 1e-9 * g.L)
                throw GeometryError("buffer width must be a multiple of the element size");
            const int nI = d.n_side - nB;
            const double xi = g.L - g.buffer, y0 = -g.a / 2, y1 = g.a / 2;
            blocks.push_back(rect_block(0, xi, y0, y1, uniform_breaks(nI), uniform_breaks(d.n_side), kZoneI));
            if (nB > 0)
                blocks.push_back(rect_block(xi, g.L, y0, y1, uniform_breaks(nB), uniform_breaks(d.n_side), kZoneB));
            blocks.push_back(rect_block(g.L, 2 * g.L, y0, y1, uniform_breaks(d.n_outside),
                                        uniform_breaks(d.n_side), kZoneC));
            m = build_block_mesh(blocks, d.order, 2 * g.L);
            const double t = tol * g.L;
            m.edges["clamp"] = collect_line(m, 0, 0.0, false, t);
            m.edges["tip"] = collect_line(m, 0, 2 * g.L, true, t);
            m.edges["gamma_C"] = collect_line(m, 0, g.L, true, t);
            m.edges["gamma_I"] = collect_line(m, 0, xi, true, t);
            break;
        }
        case Geometry::kHoled: {
            const double sI = g.zone / 2, sC = sI + g.buffer;
            if (!(g.zone > 0)) throw GeometryError("zone side must be > 0");
            if (g.buffer < 0) throw GeometryError("buffer must be >= 0");
            if (hole && !(g.r > 0 && g.r < sI)) throw GeometryError("hole radius must lie in (0, zone/2)");
            const double x1 = g.xc - sC, x2 = g.xc + sC, y1 = -sC, y2 = sC;
            if (!(x1 > 0 && x2 < g.Lp && y2 < g.ap / 2)) throw GeometryError("zone does not fit in the plate");
            const auto inner_sq = square_side(g.xc, 0, sI), outer_sq = square_side(g.xc, 0, sC);
            // Outer 3x3 frame without the centre.
            const std::vector<double> xb[3] = {graded_breaks(d.n_outer, 1.0 / d.outer_ratio),
                                               uniform_breaks(d.n_side),
                                               graded_breaks(d.n_outer, d.outer_ratio)};
            const double xs[4] = {0, x1, x2, g.Lp}, ys[4] = {-g.ap / 2, y1, y2, g.ap / 2};
            for (int j = 0; j < 3; ++j)
                for (int i = 0; i < 3; ++i) {
                    if (i == 1 && j == 1) continue;
                    blocks.push_back(rect_block(xs[i], xs[i + 1], ys[j], ys[j + 1], xb[i], xb[j], kZoneC));
                }
            if (g.buffer > 0)
                for (int k = 0; k < 4; ++k)
                    blocks.push_back(ring_block(inner_sq, outer_sq, k, d.n_side, uniform_breaks(d.n_buffer), kZoneB));
            if (hole) {
                const double r = g.r, cx = g.xc;
                auto circle = [=](int k, double s) {
                    const double th = (-0.75 + 0.5 * k + 0.5 * s) * std::numbers::pi;
                    return Vec2(cx + r * std::cos(th), r * std::sin(th));
                };
                for (int k = 0; k < 4; ++k)
                    blocks.push_back(ring_block(circle, inner_sq, k, d.n_side, graded_breaks(d.n_radial, 1.2), kZoneI));
            } else {
                blocks.push_back(rect_block(g.xc - sI, g.xc + sI, -sI, sI, uniform_breaks(d.n_side),
                                            uniform_breaks(d.n_side), kZoneI));
            }
            m = build_block_mesh(blocks, d.order, std::max(g.Lp, g.ap));
            const double t = tol * std::max(g.Lp, g.ap);
            m.edges["gamma_C"] = collect_square(m, g.xc, 0, sC, t);
            m.edges["gamma_I"] = collect_square(m, g.xc, 0, sI, t);
            m.edges["clamp"] = collect_line(m, 0, 0.0, false, t);
            m.edges["load"] = collect_line(m, 0, g.Lp, true, t);
            if (hole) m.edges["hole"] = collect_circle(m, g.xc, 0, g.r, t);
            break;
        }
    }
    return m;
}

SolidMesh generate_solid_mesh(const Geometry& g, const Laminate& lam, const Densities& d, bool whole_domain) {
    const bool hole = g.kind == Geometry::kHoled && g.r > 0;
    const auto layout = make_layout(g, d, hole);
    std::vector<int> regions{kZoneI, kZoneB};
    if (whole_domain) regions.push_back(kZoneC);
    auto s = extrude(layout, lam, d.layers_per_ply, regions);
    if (!(min_jacobian(s) > 0)) throw GeometryError("solid mesh has a non-positive Jacobian");
    return s;
}

PlateMesh generate_plate_mesh(const Geometry& g, const Densities& d, bool hole) {
    const auto layout = make_layout(g, d, hole && g.kind == Geometry::kHoled && g.r > 0);
    auto p = plate_from_layout(layout, {kZoneI, kZoneB, kZoneC});
    if (!(min_jacobian(p) > 0)) throw GeometryError("plate mesh has a non-positive Jacobian");
    return p;
}

void write_hsm1(std::ostream& os, const SolidMesh& m) {
    os.precision(17);
    os << "HSM1 " << m.nodes.size() << ' ' << m.num_elems() << ' ' << m.npe() << ' '
       << m.face_sets.size() << '\n';
    for (std::size_t i = 0; i < m.nodes.size(); ++i)
        os << "N " << i << ' ' << m.nodes[i].x() << ' ' << m.nodes[i].y() << ' ' << m.nodes[i].z() << '\n';
    for (int e = 0; e < m.num_elems(); ++e) {
        os << "E " << e << ' ' << m.ply[e];
        for (int a = 0; a < m.npe(); ++a) os << ' ' << m.elem(e)[a];
        os << '\n';
    }
    for (const auto& [name, faces] : m.face_sets) {
        os << "S " << name << ' ' << faces.size() << '\n';
        for (const auto& f : faces) {
            os << "F";
            for (int n : f.nodes) os << ' ' << n;
            os << '\n';
        }
    }
}

}  // namespace hp
