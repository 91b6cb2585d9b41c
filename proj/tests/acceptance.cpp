// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit when any fails.
// Outputs of the scenario runs go under ./acceptance_out.

#include "hp/errors.hpp"
#include "hp/plate_fem.hpp"
#include "hp/runtime.hpp"
#include "hp/scenario.hpp"
#include "hp/solid_fem.hpp"
#include "hp/svbasis.hpp"

#include "common.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <string>

using namespace hp;
using namespace hp::voigt;
using namespace testing_support;

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

const fs::path kOut = "acceptance_out";
int failures = 0;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void report(int n, bool pass, const std::string& detail) {
    std::printf("criterion %d: %s  %s\n", n, pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
}

std::string num(double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.3g", v);
    return b;
}

// Runs a criterion body; exceptions count as failures.
void guarded(int n, const std::function<void()>& body) {
    try {
        body();
    } catch (const std::exception& e) {
        report(n, false, std::string("error: ") + e.what());
    }
}

// ---- basis ----------------------------------------------------------------------------

struct CellRun {
    Laminate lam;
    std::unique_ptr<CellModel> cell;
    SaintVenantBasis basis;
    double seconds = 0;
};

std::optional<CellRun> default_cell;

void criterion1() {
    const Scenario s = default_scenario("cell");
    CellRun c;
    c.lam = s.laminate;
    CellOptions co = s.cell;
    co.densities.layers_per_ply = s.mesh.layers_per_ply;
    co.densities.order = 2;
    const auto t0 = Clock::now();
    c.cell = std::make_unique<CellModel>(c.lam, co);
    c.basis = build_basis(*c.cell);
    c.seconds = since(t0);
    Mat8 G;
    for (int i = 0; i < 8; ++i) G.col(i) = generalized_forces(c.basis.grid, c.basis.tau[i]);
    const double dev = (G - Mat8::Identity()).cwiseAbs().maxCoeff();
    fs::create_directories(kOut);
    std::ofstream os(kOut / "cell.svb");
    save_basis(os, c.basis);
    const int layers = co.densities.layers_per_ply * static_cast<int>(c.lam.plies.size());
    report(1, dev < 1e-8 && c.seconds < 60,
           "max|G - I| = " + num(dev) + ", cell " + std::to_string(co.densities.n_side) + "x" +
               std::to_string(co.densities.n_side) + "x" + std::to_string(layers) + " in " + num(c.seconds) + " s");
    default_cell = std::move(c);
}

void criterion2() {
    const Laminate lam = isotropic_plate(1, 0.3, 0.2, 4);
    CellOptions co;
    co.densities.n_side = 12;
    co.densities.layers_per_ply = 2;
    co.densities.order = 2;
    CellModel cell(lam, co);
    const SaintVenantBasis b = build_basis(cell);
    const double h = b.h;
    auto rms = [&](int state, int comp, const std::function<double(double)>& exact) {
        double err = 0, ref = 0;
        for (int r = 0; r < b.grid.size(); ++r) {
            const double z = b.grid.z[r], e = exact(z);
            err += std::pow(b.tau[state](r, comp) - e, 2);
            ref += e * e;
        }
        return std::sqrt(err / ref);
    };
    const double m = rms(0, XX, [&](double) { return 1 / (2 * h); });
    const double k = rms(2, XX, [&](double z) { return 3 * z / (2 * h * h * h); });
    const double q = rms(4, XZ, [&](double z) { return 0.75 / h * (1 - z * z / (h * h)); });
    report(2, m < 0.02 && k < 0.02 && q < 0.02,
           "RMS membrane " + num(m) + ", bending " + num(k) + ", shear " + num(q) + " (8 quadratic layers)");
}

void criterion3() {
    if (!default_cell) throw Error("default cell unavailable");
    SaintVenantBasis b = default_cell->basis;
    const auto added = refine_basis(*default_cell->cell, b, 2);
    const bool ok = added.size() == 2 && added[0] <= 0.3 && added[1] <= 0.3 * added[0];
    report(3, ok, "corrections " + num(added.at(0)) + ", " + num(added.at(1)) + " (ratio " +
                      num(added.at(1) / added.at(0)) + ")");
}

void criterion9() {
    if (!default_cell) throw Error("default cell unavailable");
    const WorkDefects d = work_defects(default_cell->basis, laminate_stiffness(default_cell->lam));
    std::string detail = "h/L = " + num(d.h_over_L) + ", worst defect/bound per row:";
    for (int r = 0; r < 5; ++r) detail += " " + num(d.worst_ratio(r));
    report(9, d.within_bounds(), detail);
}

// ---- scenarios ------------------------------------------------------------------------

std::vector<long> factorizations;

void criterion4() {
    Scenario s = default_scenario("cantilever");
    s.output = (kOut / "cantilever").string();
    if (fs::exists(kOut / "cell.svb")) s.basis_file = (kOut / "cell.svb").string();
    const auto t0 = Clock::now();
    const ScenarioResult r = run_scenario(s);
    const double secs = since(t0);
    const double h = s.laminate.half_thickness(), L = s.geometry.L, lo = 2 * h, hi = L - 2 * h;

    auto ratios = [&](const StressLine& line, double& rxz, double& rzz) {
        double mxx = 0, mxz = 0, mzz = 0;
        for (const auto& p : line.samples) {
            if (p.r < lo || p.r > hi) continue;
            mxx = std::max(mxx, std::abs(p.sxx));
            mxz = std::max(mxz, std::abs(p.sxz));
            mzz = std::max(mzz, std::abs(p.szz));
        }
        rxz = mxz / (mxx * h / L);
        rzz = mzz / (mxx * h * h / (L * L));
    };
    auto in_band = [](double v) { return v >= 0.2 && v <= 5; };

    bool ok = r.has_reference && r.runs.size() == 3 && secs < 120;
    double rxz, rzz, worst = 0;
    ratios(r.reference, rxz, rzz);
    ok = ok && in_band(rxz) && in_band(rzz);
    std::string detail = "reference ratios " + num(rxz) + "/" + num(rzz);
    for (const auto& run : r.runs) {
        ratios(run.line, rxz, rzz);
        ok = ok && in_band(rxz) && in_band(rzz);
        double dev = 0;
        for (LineField f : {LineField::kSxx, LineField::kSxz, LineField::kSzz})
            dev = std::max(dev, max_deviation(r.reference, run.line, f, -1e300, hi));
        worst = std::max(worst, dev);
        detail += ", " + run.label + " " + num(rxz) + "/" + num(rzz) + " dev " + num(dev);
        factorizations.push_back(run.plate_factorizations);
    }
    ok = ok && worst < 0.05;
    report(4, ok, detail + ", " + num(secs) + " s");
}

std::optional<ScenarioResult> holed;
double holed_seconds = 0;

const RunSummary& need(const ScenarioResult& r, const std::string& label) {
    const RunSummary* p = r.find(label);
    if (!p) throw Error("run '" + label + "' missing");
    return *p;
}

double eta_at(const RunSummary& r, std::size_t i) { return i < r.eta.size() ? r.eta[i] : r.eta.back(); }

// First iteration reaching `tol`, or a large sentinel.
std::size_t first_below(const RunSummary& r, double tol) {
    for (std::size_t i = 0; i < r.eta.size(); ++i)
        if (r.eta[i] < tol) return i;
    return 1u << 20;
}

void run_holed() {
    Scenario s = default_scenario("holed_plate");
    s.output = (kOut / "holed_plate").string();
    const auto t0 = Clock::now();
    holed = run_scenario(s);
    holed_seconds = since(t0);
    for (const auto& run : holed->runs) factorizations.push_back(run.plate_factorizations);
}

void criterion5() {
    if (!holed) throw Error("holed-plate run unavailable");
    const auto& fp = need(*holed, "fp_hole");
    const auto& cg = need(*holed, "cg_hole");
    const auto& fpn = need(*holed, "fp_nohole");
    const auto& cgn = need(*holed, "cg_nohole");
    const double fp_ratio = eta_at(fp, 5) / fp.eta[0];
    double cg_best5 = 1e300;
    for (std::size_t i = 0; i <= 5 && i < cg.eta.size(); ++i) cg_best5 = std::min(cg_best5, cg.eta[i]);
    bool never_slower = true;
    for (auto [a, b] : {std::pair{&cg, &fp}, std::pair{&cgn, &fpn}})
        for (double tol : {1e-1, 3e-2, 1e-2, 3e-3, 1e-3})
            if (first_below(*b, tol) < (1u << 20) && first_below(*a, tol) > first_below(*b, tol)) never_slower = false;
    const bool imbalance = fpn.eta[0] > fp.eta[0];
    const bool ok = fp_ratio < 1e-2 && cg_best5 < 1e-3 && never_slower && imbalance && holed_seconds < 300;
    report(5, ok,
           "fixed point eta5/eta0 = " + num(fp_ratio) + ", CG min eta (<= 5 it.) = " + num(cg_best5) +
               ", CG never slower: " + (never_slower ? "yes" : "no") + ", eta0 no-hole/hole = " + num(fpn.eta[0]) +
               "/" + num(fp.eta[0]) + ", " + num(holed_seconds) + " s");
}

void criterion6() {
    if (!holed) throw Error("holed-plate run unavailable");
    const auto& hole = need(*holed, "cg_hole");
    const auto& nohole = need(*holed, "cg_nohole");
    auto pct = [](double a, double b) { return 100 * (b - a) / a; };
    const double q_hole = pct(hole.probe0.Qx, hole.probe.Qx);
    const double q_nohole = pct(nohole.probe0.Qx, nohole.probe.Qx);
    const double w_hole = pct(hole.probe0.w, hole.probe.w);
    const bool ok = std::abs(q_hole) > 5 && std::abs(hole.probe.Qx) > std::abs(hole.probe0.Qx) &&
                    std::abs(q_nohole) > 15 && std::abs(w_hole) < 1;
    report(6, ok,
           "Q_x correction with hole " + num(q_hole) + " %, without hole " + num(q_nohole) +
               " %, w correction with hole " + num(w_hole) + " %");
}

void criterion7() {
    if (!holed) throw Error("holed-plate run unavailable");
    if (!holed->has_reference) throw Error("no 3D reference");
    const auto& run = need(*holed, "cg_nohole");
    bool ok = true;
    std::string detail = "RMS final/iteration 0:";
    const char* names[3] = {"sxx", "sxz", "szz"};
    int k = 0;
    for (LineField f : {LineField::kSxx, LineField::kSxz, LineField::kSzz}) {
        const double e = rms_deviation(holed->reference, run.line, f);
        const double e0 = rms_deviation(holed->reference, run.line0, f);
        ok = ok && e < 0.05 && e0 > e;
        detail += std::string(" ") + names[k++] + " " + num(e) + "/" + num(e0);
    }
    report(7, ok, detail);
}

void criterion8() {
    bool ok = !factorizations.empty();
    std::string detail = "plate factorizations per run:";
    for (long f : factorizations) {
        ok = ok && f == 1;
        detail += " " + std::to_string(f);
    }
    report(8, ok, detail);
}

// ---- unit-level checks ----------------------------------------------------------------

Mesh2D rect_layout(double x1, double y1, int nx, int ny, int order) {
    BlockSpec b;
    b.map = [=](double u, double v) { return Vec2(u * x1, v * y1); };
    b.u = uniform_breaks(nx);
    b.v = uniform_breaks(ny);
    return build_block_mesh({b}, order, std::max(x1, y1));
}

// Distorted quadratic block under a prescribed linear field; max nodal error relative to |G|.
double patch_error() {
    const auto lam = isotropic_plate(1000, 0.3, 0.5, 2);
    SolidMesh m = extrude(rect_layout(1, 1, 2, 2, 2), lam, 1, {kZoneI});
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> jit(-0.04, 0.04);
    auto on_boundary = [](const Vec3& x) {
        return std::abs(x.x()) < 1e-12 || std::abs(x.x() - 1) < 1e-12 || std::abs(x.y()) < 1e-12 ||
               std::abs(x.y() - 1) < 1e-12 || std::abs(std::abs(x.z()) - 0.5) < 1e-12;
    };
    for (auto& x : m.nodes)
        if (!on_boundary(x)) x += Vec3(jit(rng), jit(rng), 0.5 * jit(rng));
    Eigen::Matrix3d G;
    G << 1e-3, 2e-4, -3e-4, 5e-4, -2e-3, 1e-4, 7e-4, 3e-4, 1.5e-3;
    const Vec3 a(0.01, -0.02, 0.005);
    std::vector<int> fixed;
    for (int n = 0; n < static_cast<int>(m.nodes.size()); ++n)
        if (on_boundary(m.nodes[n]))
            for (int i = 0; i < 3; ++i) fixed.push_back(3 * n + i);
    SolidSystem sys(m, lam);
    sys.set_dirichlet(fixed);
    sys.factorize();
    Vec ud(fixed.size());
    for (std::size_t k = 0; k < fixed.size(); ++k) ud[k] = (a + G * m.nodes[fixed[k] / 3])[fixed[k] % 3];
    const auto s = sys.solve(Vec::Zero(sys.ndof()), ud);
    double err = 0;
    for (int n = 0; n < static_cast<int>(m.nodes.size()); ++n)
        err = std::max(err, (s.u.segment<3>(3 * n) - (a + G * m.nodes[n])).cwiseAbs().maxCoeff());
    return err / G.cwiseAbs().maxCoeff();
}

double navier_centre(double q, double a, double D) {
    const double pi = std::acos(-1.0);
    double w = 0;
    for (int m = 1; m < 400; m += 2)
        for (int n = 1; n < 400; n += 2)
            w += std::sin(m * pi / 2) * std::sin(n * pi / 2) / (m * n * std::pow(m * m + n * n, 2));
    return 16 * q * std::pow(a, 4) / (std::pow(pi, 6) * D) * w;
}

// Simply supported unit square under uniform pressure; centre deflection over the Kirchhoff series.
double ss_plate_ratio(double thickness, int n) {
    const double E = 1000, nu = 0.3, a = 1, q = 1e-3;
    PlateMesh m;
    for (int j = 0; j <= n; ++j)
        for (int i = 0; i <= n; ++i) m.nodes.emplace_back(a * i / n, a * j / n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            const int p = j * (n + 1) + i;
            m.quads.push_back({p, p + 1, p + n + 2, p + n + 1});
            m.region.push_back(0);
        }
    PlateSystem sys(m, laminate_stiffness(isotropic_plate(E, nu, thickness / 2, 1)));
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
    const int c = (n / 2) * (n + 1) + n / 2;
    const double D = E * std::pow(thickness, 3) / (12 * (1 - nu * nu));
    return U[5 * c + pdof::VZ] / navier_centre(q, a, D);
}

void criterion10() {
    const auto t0 = Clock::now();
    const double patch = patch_error();
    const double navier = std::abs(ss_plate_ratio(0.01, 16) - 1);
    const double locking = std::abs(ss_plate_ratio(1e-3, 16) - 1);
    const double secs = since(t0);
    report(10, patch < 1e-10 && navier < 0.02 && locking < 0.05 && secs < 30,
           "patch error " + num(patch) + ", Navier deviation " + num(navier) + ", h/L = 1e-3 deviation " +
               num(locking) + ", " + num(secs) + " s");
}

}  // namespace

int main(int argc, char** argv) {
    (void)argc;
    hp::ensure_blas_kernel(argv);
    guarded(1, criterion1);
    guarded(2, criterion2);
    guarded(3, criterion3);
    guarded(4, criterion4);
    try {
        run_holed();
    } catch (const std::exception& e) {
        std::printf("holed-plate scenario failed: %s\n", e.what());
    }
    guarded(5, criterion5);
    guarded(6, criterion6);
    guarded(7, criterion7);
    guarded(8, criterion8);
    guarded(9, criterion9);
    guarded(10, criterion10);
    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
