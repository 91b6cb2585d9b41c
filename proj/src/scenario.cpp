#include "hp/scenario.hpp"

#include "hp/errors.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

namespace hp {

namespace fs = std::filesystem;
using namespace voigt;

namespace {

// ---- config text ------------------------------------------------------------------------

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::string fmt(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.8e", v);
    return buf;
}

struct Entry {
    std::string section, key, value;
    int line = 0;
};

struct Reader {
    const std::string& source;
    const Entry& e;

    [[noreturn]] void fail(const std::string& msg) const {
        throw ConfigError(source + ":" + std::to_string(e.line) + ": " + msg);
    }
    double real() const {
        double v = 0;
        const char* b = e.value.data();
        const auto res = std::from_chars(b, b + e.value.size(), v);
        if (res.ec != std::errc() || res.ptr != b + e.value.size() || !std::isfinite(v))
            fail("key '" + e.key + "' expects a number, got '" + e.value + "'");
        return v;
    }
    int integer() const {
        int v = 0;
        const char* b = e.value.data();
        const auto res = std::from_chars(b, b + e.value.size(), v);
        if (res.ec != std::errc() || res.ptr != b + e.value.size())
            fail("key '" + e.key + "' expects an integer, got '" + e.value + "'");
        return v;
    }
    bool boolean() const {
        if (e.value == "true" || e.value == "yes" || e.value == "1") return true;
        if (e.value == "false" || e.value == "no" || e.value == "0") return false;
        fail("key '" + e.key + "' expects true or false, got '" + e.value + "'");
    }
    template <class F>
    auto parsed(F&& f) const {
        try {
            return f(e.value);
        } catch (const ConfigError& err) {
            fail(err.what());
        }
    }
};

std::vector<DescentMode> parse_descents(const std::string& v) {
    std::vector<DescentMode> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_descent(trim(item)));
    if (out.empty()) throw ConfigError("descents must list at least one mode");
    return out;
}

OrthotropicPly study_ply(double thickness) {
    OrthotropicPly p;
    p.E_L = 25;
    p.E_T = p.E_N = 1;
    p.G_LT = p.G_LN = 0.5;
    p.G_TN = 0.2;
    p.nu_LT = p.nu_TN = p.nu_LN = 0.25;
    p.thickness = thickness;
    return p;
}

// ---- boundary conditions ----------------------------------------------------------------

std::set<int> face_nodes(const SolidMesh& m, const std::string& name) {
    const auto it = m.face_sets.find(name);
    if (it == m.face_sets.end()) throw MeshMismatchError("solid mesh has no face set '" + name + "'");
    std::set<int> out;
    for (const auto& f : it->second) out.insert(f.nodes.begin(), f.nodes.end());
    return out;
}

int load_component(const Scenario& s) { return s.load == "inplane" ? 0 : 2; }

std::string load_edge(const Scenario& s) { return s.geometry.kind == Geometry::kCantilever ? "tip" : "load"; }

void plate_dirichlet(PlateSystem& plate, const Scenario& s) {
    const PlateMesh& pm = plate.mesh();
    std::map<int, double> fixed;
    for (int n : pm.edge_sets.at("clamp").nodes)
        for (int k = 0; k < 5; ++k) fixed[5 * n + k] = 0;
    const int comp = load_component(s) == 0 ? pdof::VX : pdof::VZ;
    for (int n : pm.edge_sets.at(load_edge(s)).nodes) fixed[5 * n + comp] = s.u_d;
    std::vector<int> dofs;
    Vec vals(static_cast<Eigen::Index>(fixed.size()));
    for (const auto& [d, v] : fixed) {
        vals[static_cast<Eigen::Index>(dofs.size())] = v;
        dofs.push_back(d);
    }
    plate.set_dirichlet(dofs, vals);
}

Vec solve_reference(SolidSystem& sys, const Scenario& s) {
    const SolidMesh& m = sys.mesh();
    std::map<int, double> fixed;
    for (int n : face_nodes(m, "clamp"))
        for (int k = 0; k < 3; ++k) fixed[3 * n + k] = 0;
    for (int n : face_nodes(m, load_edge(s))) fixed[3 * n + load_component(s)] = s.u_d;
    std::vector<int> dofs;
    for (const auto& kv : fixed) dofs.push_back(kv.first);
    sys.set_dirichlet(dofs);
    sys.factorize();
    const auto& order = sys.dirichlet_dofs();
    Vec ud(static_cast<Eigen::Index>(order.size()));
    for (std::size_t i = 0; i < order.size(); ++i) ud[static_cast<Eigen::Index>(i)] = fixed.at(order[i]);
    return sys.solve(Vec::Zero(sys.ndof()), ud).u;
}

// ---- runs -------------------------------------------------------------------------------

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

class Output {
public:
    Output(const std::string& dir, std::vector<std::string>& files) : dir_(dir), files_(files) {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec) throw ConfigError("cannot create output directory '" + dir + "': " + ec.message());
    }
    void write(const std::string& name, const std::function<void(std::ostream&)>& f) {
        const fs::path p = dir_ / name;
        std::ofstream os(p);
        if (!os) throw ConfigError("cannot write '" + p.string() + "'");
        f(os);
        files_.push_back(p.string());
    }

private:
    fs::path dir_;
    std::vector<std::string>& files_;
};

int nearest_node(const PlateMesh& pm, const Vec2& p) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(pm.nodes.size()); ++i)
        if ((pm.nodes[i] - p).squaredNorm() < (pm.nodes[best] - p).squaredNorm()) best = i;
    return best;
}

PlateProbe probe(const Coupler& c, const Vec& U, int node) {
    PlateProbe p;
    if (node < 0) return p;
    p.w = U[5 * node + pdof::VZ];
    for (const auto& t : c.trace_I(U))
        if (t.node == node) {
            p.Qx = t.Fg[4];
            p.Mxx = t.Fg[2];
        }
    return p;
}

struct RunInputs {
    const Scenario& s;
    const PlateMesh& plate;
    SolidSystem& local;
    const LocalProblem& bc;
    const SaintVenantBasis& basis;
    const LineSpec& line;
    int probe_node = -1;
    Vec2 probe_at = Vec2::Zero();
};

RunSummary hybrid_run(const RunInputs& in, const CouplingConfig& cfg, const std::string& label, bool hole,
                      Output& out) {
    const auto t0 = Clock::now();
    RunSummary r;
    r.label = label;
    r.descent = cfg.descent;
    r.accelerator = cfg.accelerator;
    r.plate_hole = hole;
    PlateSystem plate(in.plate, laminate_stiffness(in.s.laminate));
    plate_dirichlet(plate, in.s);
    HybridState st;
    try {
        Coupler c(plate, in.local, in.bc, in.basis, cfg);
        st = c.initial();
        r.probe0 = probe(c, st.U0, in.probe_node);
        c.iterate(st);
        r.limits = c.limit_checks(st);
        r.probe = probe(c, st.U, in.probe_node);
        out.write("log_" + label + ".csv", [&](std::ostream& os) { Coupler::write_log(os, st); });
    } catch (const SolverError& e) {
        throw SolverError("run '" + label + "': " + e.what());
    }
    r.eta = st.eta_history;
    r.kinematic = st.kinematic_history;
    r.relaxation = st.relaxation_history;
    r.iterations = st.iteration;
    r.converged = st.converged;
    r.plate_factorizations = plate.factorizations();
    if (in.probe_node >= 0) {
        r.solid0 = solid_probe(in.local, st.u0, in.probe_at);
        r.solid = solid_probe(in.local, st.u, in.probe_at);
    }
    r.line0 = sample_line(in.local, st.u0, in.line);
    r.line = sample_line(in.local, st.u, in.line);
    out.write("line_" + label + "_iter0.csv", [&](std::ostream& os) { write_line_csv(os, r.line0); });
    out.write("line_" + label + ".csv", [&](std::ostream& os) { write_line_csv(os, r.line); });
    r.seconds = since(t0);
    return r;
}

void run_reference(const Scenario& s, const LineSpec& line, ScenarioResult& res, Output& out,
                   const Vec2* probe_at = nullptr) {
    if (!s.reference) return;
    const SolidMesh whole = generate_solid_mesh(s.geometry, s.laminate, s.mesh, true);
    SolidSystem sys(whole, s.laminate);
    const Vec u = solve_reference(sys, s);
    res.reference = sample_line(sys, u, line);
    if (probe_at) res.reference_probe = solid_probe(sys, u, *probe_at);
    res.has_reference = true;
    out.write("line_reference.csv", [&](std::ostream& os) { write_line_csv(os, res.reference); });
}

double max_abs(const StressLine& l, LineField f) {
    double m = 0;
    for (const auto& p : l.samples) m = std::max(m, std::abs(field_value(p, f)));
    return m;
}

// Columns of one stress along the cantilever midline, each model normalized by its own max |sigma_xx|.
void write_long(std::ostream& os, const ScenarioResult& res, LineField f, double scale, const std::string& what) {
    std::vector<const StressLine*> lines;
    std::vector<std::string> names;
    if (res.has_reference) {
        lines.push_back(&res.reference);
        names.push_back("reference");
    }
    for (const auto& r : res.runs) {
        lines.push_back(&r.line);
        names.push_back(r.label);
    }
    if (lines.empty()) return;
    os << "x_mm";
    for (const auto& n : names) os << ',' << n << '_' << what;
    os << '\n';
    for (std::size_t i = 0; i < lines[0]->samples.size(); ++i) {
        os << sci(lines[0]->samples[i].r);
        for (const StressLine* l : lines) {
            const double norm = scale > 0 ? max_abs(*l, LineField::kSxx) * scale : 1;
            os << ',' << sci(field_value(l->samples[i], f) / norm);
        }
        os << '\n';
    }
}

ScenarioResult run_cell(const Scenario& s) {
    ScenarioResult res;
    Output out(s.output, res.files);
    const SaintVenantBasis b = scenario_basis(s, &res.refinement);
    res.cell_forces = b.F_matrix;
    out.write("basis.svb", [&](std::ostream& os) { save_basis(os, b); });
    out.write("refinement.csv", [&](std::ostream& os) {
        os << "pass,correction_norm_relative\n";
        for (std::size_t i = 0; i < res.refinement.size(); ++i) os << i + 1 << ',' << sci(res.refinement[i]) << '\n';
    });
    out.write("generalized_forces.csv", [&](std::ostream& os) {
        os << "state";
        for (const char* n : {"N_xx", "N_xy", "M_xx", "M_xy", "Q_x", "N_yy", "M_yy", "Q_y"}) os << ',' << n;
        os << '\n';
        for (int j = 0; j < 8; ++j) {
            const Vec8 F = generalized_forces(b.grid, b.tau[j]);
            os << j + 1;
            for (int i = 0; i < 8; ++i) os << ',' << sci(F[i]);
            os << '\n';
        }
    });
    return res;
}

ScenarioResult run_cantilever(const Scenario& s, const std::vector<DescentMode>& descents) {
    ScenarioResult res;
    Output out(s.output, res.files);
    const SaintVenantBasis basis = scenario_basis(s, &res.refinement);
    const PlateMesh pm = generate_plate_mesh(s.geometry, s.mesh, false);
    const SolidMesh local = generate_solid_mesh(s.geometry, s.laminate, s.mesh, false);
    SolidSystem sys(local, s.laminate);
    LocalProblem bc;
    for (int n : face_nodes(local, "clamp"))
        for (int k = 0; k < 3; ++k) bc.fixed_dofs.push_back(3 * n + k);
    bc.fixed_values = Vec::Zero(static_cast<Eigen::Index>(bc.fixed_dofs.size()));
    const LineSpec line = cantilever_line(s);
    run_reference(s, line, res, out);
    const RunInputs in{s, pm, sys, bc, basis, line};
    for (DescentMode m : descents) {
        CouplingConfig cfg = s.coupling;
        cfg.descent = m;
        if (m == DescentMode::kTraction) cfg.accelerator = Accelerator::kFixedPoint;
        res.runs.push_back(hybrid_run(in, cfg, to_string(m), false, out));
    }
    const double h = s.laminate.half_thickness(), L = s.geometry.L;
    out.write("SIXX_long.csv", [&](std::ostream& os) { write_long(os, res, LineField::kSxx, 0, "sigma_xx_MPa"); });
    out.write("SIZZ_long.csv", [&](std::ostream& os) {
        write_long(os, res, LineField::kSzz, h * h / (L * L), "sigma_zz_over_sigma_xx_h2_L2");
    });
    out.write("SIXZ_long.csv", [&](std::ostream& os) {
        write_long(os, res, LineField::kSxz, h / L, "sigma_xz_over_sigma_xx_h_L");
    });
    return res;
}

ScenarioResult run_holed(const Scenario& s, const std::vector<bool>& holes, const std::vector<Accelerator>& accs) {
    ScenarioResult res;
    Output out(s.output, res.files);
    const SaintVenantBasis basis = scenario_basis(s, &res.refinement);
    const SolidMesh local = generate_solid_mesh(s.geometry, s.laminate, s.mesh, false);
    SolidSystem sys(local, s.laminate);
    const LocalProblem bc;
    const LineSpec line = diagonal_line(s);
    const Vec2 probe_at(s.geometry.xc - s.geometry.zone / 2, 0);
    run_reference(s, line, res, out, &probe_at);
    for (bool hole : holes) {
        const PlateMesh pm = generate_plate_mesh(s.geometry, s.mesh, hole);
        RunInputs in{s, pm, sys, bc, basis, line, nearest_node(pm, probe_at), probe_at};
        for (Accelerator a : accs) {
            CouplingConfig cfg = s.coupling;
            cfg.accelerator = a;
            const std::string label = std::string(a == Accelerator::kFixedPoint ? "fp" : "cg") + (hole ? "_hole" : "_nohole");
            res.runs.push_back(hybrid_run(in, cfg, label, hole, out));
        }
    }
    out.write("conv.csv", [&](std::ostream& os) {
        os << "iteration";
        std::size_t n = 0;
        for (const auto& r : res.runs) {
            os << ",eta_" << r.label;
            n = std::max(n, r.eta.size());
        }
        os << '\n';
        for (std::size_t i = 0; i < n; ++i) {
            os << i;
            for (const auto& r : res.runs) os << ',' << (i < r.eta.size() ? sci(r.eta[i]) : "");
            os << '\n';
        }
    });
    out.write("probe.csv", [&](std::ostream& os) {
        os << "model,w_initial_mm,w_final_mm,w_correction_percent,Q_x_initial_N_per_mm,Q_x_final_N_per_mm,"
              "Q_x_correction_percent,M_xx_initial_N,M_xx_final_N,M_xx_correction_percent\n";
        auto pct = [](double a, double b) { return a != 0 ? 100 * (b - a) / a : 0.0; };
        auto row = [&](const std::string& name, const PlateProbe& a, const PlateProbe& b) {
            os << name << ',' << sci(a.w) << ',' << sci(b.w) << ',' << sci(pct(a.w, b.w)) << ',' << sci(a.Qx) << ','
               << sci(b.Qx) << ',' << sci(pct(a.Qx, b.Qx)) << ',' << sci(a.Mxx) << ',' << sci(b.Mxx) << ','
               << sci(pct(a.Mxx, b.Mxx)) << '\n';
        };
        for (const auto& r : res.runs) row("plate_" + r.label, r.probe0, r.probe);
        for (const auto& r : res.runs) row("local_3d_" + r.label, r.solid0, r.solid);
        if (res.has_reference) row("reference_3d", res.reference_probe, res.reference_probe);
    });
    return res;
}

}  // namespace

// ---- config -----------------------------------------------------------------------------

void Scenario::validate() const {
    auto positive = [](double v, const char* key) {
        if (!(v > 0)) throw ConfigError(std::string("key '") + key + "' must be > 0");
    };
    if (name != "cell" && name != "cantilever" && name != "holed_plate" && name != "custom")
        throw ConfigError("unknown scenario '" + name + "'");
    if (kind != "cantilever" && kind != "holed_plate")
        throw ConfigError("key 'kind' must be cantilever or holed_plate");
    if (load != "transverse" && load != "inplane") throw ConfigError("key 'load' must be transverse or inplane");
    if (laminate.plies.empty()) throw ConfigError("the laminate needs at least one [ply.N] section");
    for (const auto& p : laminate.plies) {
        positive(p.thickness, "thickness");
        positive(p.E_L, "E_L");
        positive(p.E_T, "E_T");
        positive(p.E_N, "E_N");
        positive(p.G_LT, "G_LT");
        positive(p.G_LN, "G_LN");
        positive(p.G_TN, "G_TN");
    }
    try {
        laminate.validate();
    } catch (const Error& e) {
        throw ConfigError(std::string("laminate: ") + e.what());
    }
    positive(geometry.L, "L");
    positive(geometry.a, "a");
    positive(geometry.Lp, "Lp");
    positive(geometry.ap, "ap");
    positive(geometry.zone, "zone");
    positive(geometry.r, "r");
    positive(cell.size_factor, "size_factor");
    if (cell.densities.n_side < 1) throw ConfigError("key 'n_side' in [cell] must be >= 1");
    if (mesh.n_side < 1 || mesh.n_outside < 1 || mesh.n_radial < 1 || mesh.n_buffer < 1 || mesh.n_outer < 1 ||
        mesh.layers_per_ply < 1)
        throw ConfigError("mesh densities must be >= 1");
    if (mesh.order != 1 && mesh.order != 2) throw ConfigError("key 'order' must be 1 or 2");
    positive(mesh.outer_ratio, "outer_ratio");
    if (refine_passes < 0) throw ConfigError("key 'refine_passes' must be >= 0");
    if (name != "cell") coupling.validate();
    if (output.empty()) throw ConfigError("key 'output' must not be empty");
}

Scenario default_scenario(const std::string& name) {
    Scenario s;
    s.name = name;
    s.output = "out/" + name;
    s.cell.size_factor = 12;
    s.cell.densities.n_side = 24;
    s.mesh.order = 2;
    s.descents = {DescentMode::kTraction, DescentMode::kLagrangian, DescentMode::kDisplacement};
    if (name == "cell") {
        s.kind = "cantilever";
        s.laminate = Laminate::symmetric(study_ply(0.1), {-45, 45});
        s.mesh.layers_per_ply = 4;
        s.refine_passes = 2;
        s.reference = false;
    } else if (name == "cantilever") {
        s.kind = "cantilever";
        s.laminate = Laminate::symmetric(study_ply(0.1), {-45, 45});
        s.geometry.kind = Geometry::kCantilever;
        s.geometry.L = s.geometry.a = 5;
        s.mesh.n_side = 20;
        s.mesh.n_outside = 20;
        s.mesh.layers_per_ply = 4;
        s.coupling.buffer_width = 1;
        s.coupling.max_iterations = 20;
        s.coupling.eta_tolerance = 1e-3;
        s.coupling.accelerator = Accelerator::kConjugateGradient;
        s.u_d = 2 * s.laminate.half_thickness();
    } else if (name == "holed_plate" || name == "custom") {
        s.kind = "holed_plate";
        s.laminate = Laminate::symmetric(study_ply(0.5), {-45, 45});
        s.geometry.kind = Geometry::kHoled;
        s.geometry.Lp = s.geometry.ap = 60;
        s.geometry.xc = 30;
        s.geometry.zone = 20;
        s.geometry.r = 2;
        s.mesh.n_side = 24;
        s.mesh.n_radial = 8;
        s.mesh.n_buffer = 2;
        s.mesh.n_outer = 6;
        s.mesh.outer_ratio = 1.3;
        s.mesh.layers_per_ply = 2;
        s.coupling.buffer_width = 2;
        s.coupling.max_iterations = 8;
        s.coupling.eta_tolerance = 1e-6;
        s.u_d = 0.45;
    } else {
        throw ConfigError("unknown scenario '" + name + "' (cell, cantilever, holed_plate, custom)");
    }
    s.geometry.buffer = s.coupling.buffer_width;
    return s;
}

Scenario parse_scenario(std::istream& is, const std::string& source) {
    std::vector<Entry> entries;
    std::string raw, section;
    int line = 0;
    std::set<std::string> seen_sections;
    while (std::getline(is, raw)) {
        ++line;
        const std::string t = trim(raw.substr(0, raw.find_first_of("#;")));
        if (t.empty()) continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw ConfigError(source + ":" + std::to_string(line) + ": malformed section header");
            section = trim(t.substr(1, t.size() - 2));
            if (!seen_sections.insert(section).second)
                throw ConfigError(source + ":" + std::to_string(line) + ": duplicate section [" + section + "]");
            static const std::set<std::string> known{"scenario", "geometry", "mesh", "cell", "coupling"};
            if (!known.count(section) && section.rfind("ply.", 0) != 0)
                throw ConfigError(source + ":" + std::to_string(line) + ": unknown section [" + section + "]");
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(source + ":" + std::to_string(line) + ": expected 'key = value'");
        if (section.empty())
            throw ConfigError(source + ":" + std::to_string(line) + ": key outside of any section");
        entries.push_back({section, trim(t.substr(0, eq)), trim(t.substr(eq + 1)), line});
    }
    std::string name;
    for (const auto& e : entries)
        if (e.section == "scenario" && e.key == "name") {
            name = e.value;
            try {
                default_scenario(name);
            } catch (const ConfigError& err) {
                throw ConfigError(source + ":" + std::to_string(e.line) + ": " + err.what());
            }
        }
    if (name.empty()) throw ConfigError(source + ": missing key 'name' in [scenario]");
    Scenario s = default_scenario(name);

    std::map<int, OrthotropicPly> plies;
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& e : entries) {
        const Reader r{source, e};
        if (!seen.insert({e.section, e.key}).second) r.fail("duplicate key '" + e.key + "' in [" + e.section + "]");
        const std::string& k = e.key;
        bool known = true;
        if (e.section == "scenario") {
            if (k == "name") {
            } else if (k == "kind") {
                if (e.value != "cantilever" && e.value != "holed_plate") r.fail("key 'kind' must be cantilever or holed_plate");
                s.kind = e.value;
                s.geometry.kind = e.value == "cantilever" ? Geometry::kCantilever : Geometry::kHoled;
            } else if (k == "output") {
                s.output = e.value;
            } else if (k == "basis") {
                s.basis_file = e.value;
            } else if (k == "reference") {
                s.reference = r.boolean();
            } else if (k == "plate_hole") {
                s.plate_hole = r.boolean();
            } else if (k == "descents") {
                s.descents = r.parsed(parse_descents);
            } else {
                known = false;
            }
        } else if (e.section == "geometry") {
            std::map<std::string, double*> keys{{"L", &s.geometry.L},     {"a", &s.geometry.a},
                                                {"Lp", &s.geometry.Lp},   {"ap", &s.geometry.ap},
                                                {"xc", &s.geometry.xc},   {"zone", &s.geometry.zone},
                                                {"r", &s.geometry.r},     {"u_d", &s.u_d}};
            if (auto it = keys.find(k); it != keys.end()) {
                *it->second = r.real();
            } else if (k == "load") {
                if (e.value != "transverse" && e.value != "inplane") r.fail("key 'load' must be transverse or inplane");
                s.load = e.value;
            } else {
                known = false;
            }
        } else if (e.section == "mesh") {
            std::map<std::string, int*> keys{{"n_side", &s.mesh.n_side},       {"n_outside", &s.mesh.n_outside},
                                             {"n_radial", &s.mesh.n_radial},   {"n_buffer", &s.mesh.n_buffer},
                                             {"n_outer", &s.mesh.n_outer},     {"layers_per_ply", &s.mesh.layers_per_ply},
                                             {"order", &s.mesh.order}};
            if (auto it = keys.find(k); it != keys.end()) {
                *it->second = r.integer();
            } else if (k == "outer_ratio") {
                s.mesh.outer_ratio = r.real();
            } else {
                known = false;
            }
        } else if (e.section == "cell") {
            if (k == "size_factor") {
                s.cell.size_factor = r.real();
            } else if (k == "n_side") {
                s.cell.densities.n_side = r.integer();
            } else if (k == "refine_passes") {
                s.refine_passes = r.integer();
            } else {
                known = false;
            }
        } else if (e.section == "coupling") {
            if (k == "descent") {
                s.coupling.descent = r.parsed(parse_descent);
            } else if (k == "accelerator") {
                s.coupling.accelerator = r.parsed(parse_accelerator);
            } else if (k == "buffer_width") {
                s.coupling.buffer_width = r.real();
            } else if (k == "relaxation") {
                s.coupling.relaxation = r.real();
            } else if (k == "max_iterations") {
                s.coupling.max_iterations = r.integer();
            } else if (k == "eta_tolerance") {
                s.coupling.eta_tolerance = r.real();
            } else {
                known = false;
            }
        } else if (e.section.rfind("ply.", 0) == 0) {
            int idx = 0;
            const std::string num = e.section.substr(4);
            const auto res = std::from_chars(num.data(), num.data() + num.size(), idx);
            if (res.ec != std::errc() || res.ptr != num.data() + num.size() || idx < 1)
                r.fail("ply sections are named [ply.1], [ply.2], ...");
            OrthotropicPly& p = plies.try_emplace(idx, OrthotropicPly{}).first->second;
            std::map<std::string, double*> keys{{"E_L", &p.E_L},     {"E_T", &p.E_T},     {"E_N", &p.E_N},
                                                {"G_LT", &p.G_LT},   {"G_LN", &p.G_LN},   {"G_TN", &p.G_TN},
                                                {"nu_LT", &p.nu_LT}, {"nu_TN", &p.nu_TN}, {"nu_LN", &p.nu_LN},
                                                {"thickness", &p.thickness}};
            if (auto it = keys.find(k); it != keys.end()) {
                *it->second = r.real();
            } else if (k == "theta_deg") {
                p.theta = r.real() * std::numbers::pi / 180;
            } else {
                known = false;
            }
        } else {
            r.fail("unknown section [" + e.section + "]");
        }
        if (!known) r.fail("unknown key '" + k + "' in [" + e.section + "]");
    }
    if (!plies.empty()) {
        s.laminate.plies.clear();
        int expect = 1;
        for (const auto& [idx, p] : plies) {
            if (idx != expect) throw ConfigError(source + ": ply sections must be numbered 1.." + std::to_string(plies.size()));
            s.laminate.plies.push_back(p);
            ++expect;
        }
    }
    s.geometry.buffer = s.coupling.buffer_width;
    try {
        s.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(source + ": " + e.what());
    }
    return s;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config '" + path + "'");
    return parse_scenario(is, path);
}

void write_scenario(std::ostream& os, const Scenario& s) {
    os << "# " << s.name << " scenario; lengths in mm, moduli in MPa\n";
    os << "[scenario]\nname = " << s.name << '\n';
    if (s.name == "custom") os << "kind = " << s.kind << "  # cantilever or holed_plate\n";
    os << "output = " << s.output << '\n';
    if (!s.basis_file.empty()) os << "basis = " << s.basis_file << '\n';
    else os << "# basis = path/to/basis.svb  (built from [cell] when absent)\n";
    os << "reference = " << (s.reference ? "true" : "false") << "  # monolithic 3D model\n";
    if (s.name == "cantilever") {
        os << "descents = ";
        for (std::size_t i = 0; i < s.descents.size(); ++i) os << (i ? ", " : "") << to_string(s.descents[i]);
        os << '\n';
    }
    if (s.name == "custom") os << "plate_hole = " << (s.plate_hole ? "true" : "false") << '\n';
    if (s.name != "cell") {
        os << "\n[geometry]\n";
        if (s.geometry.kind == Geometry::kCantilever) {
            os << "L = " << fmt(s.geometry.L) << "  # zone of interest x in [0, L], plate x in [0, 2L]\n";
            os << "a = " << fmt(s.geometry.a) << "  # width\n";
        } else {
            os << "Lp = " << fmt(s.geometry.Lp) << "  # plate length\n";
            os << "ap = " << fmt(s.geometry.ap) << "  # plate width\n";
            os << "xc = " << fmt(s.geometry.xc) << "  # hole centre x\n";
            os << "zone = " << fmt(s.geometry.zone) << "  # side of the square zone of interest\n";
            os << "r = " << fmt(s.geometry.r) << "  # hole radius\n";
        }
        os << "u_d = " << fmt(s.u_d) << "  # prescribed displacement of the loaded edge\n";
        os << "load = " << s.load << "  # transverse (u_z) or inplane (u_x)\n";
        os << "\n[mesh]\n";
        os << "n_side = " << s.mesh.n_side << "  # elements along a zone side\n";
        if (s.geometry.kind == Geometry::kCantilever) {
            os << "n_outside = " << s.mesh.n_outside << "  # elements along x in [L, 2L]\n";
        } else {
            os << "n_radial = " << s.mesh.n_radial << "  # hole to gamma_I\n";
            os << "n_buffer = " << s.mesh.n_buffer << "  # across the buffer\n";
            os << "n_outer = " << s.mesh.n_outer << "  # graded, per outer band\n";
            os << "outer_ratio = " << fmt(s.mesh.outer_ratio) << '\n';
        }
    } else {
        os << "\n[mesh]\n";
    }
    os << "layers_per_ply = " << s.mesh.layers_per_ply << '\n';
    os << "order = " << s.mesh.order << "  # 2: HEX20, 1: HEX8\n";
    os << "\n[cell]\n";
    os << "size_factor = " << fmt(s.cell.size_factor) << "  # side / thickness\n";
    os << "n_side = " << s.cell.densities.n_side << '\n';
    os << "refine_passes = " << s.refine_passes << '\n';
    if (s.name != "cell") {
        os << "\n[coupling]\n";
        if (s.name != "cantilever") os << "descent = " << to_string(s.coupling.descent) << '\n';
        if (s.name == "custom") os << "accelerator = " << to_string(s.coupling.accelerator) << '\n';
        if (s.name == "cantilever")
            os << "accelerator = " << to_string(s.coupling.accelerator) << "  # traction runs use fixed_point\n";
        os << "buffer_width = " << fmt(s.coupling.buffer_width) << '\n';
        os << "relaxation = " << fmt(s.coupling.relaxation) << '\n';
        os << "max_iterations = " << s.coupling.max_iterations << '\n';
        os << "eta_tolerance = " << fmt(s.coupling.eta_tolerance) << '\n';
    }
    for (std::size_t i = 0; i < s.laminate.plies.size(); ++i) {
        const auto& p = s.laminate.plies[i];
        os << "\n[ply." << i + 1 << "]  # bottom to top\n";
        os << "E_L = " << fmt(p.E_L) << "\nE_T = " << fmt(p.E_T) << "\nE_N = " << fmt(p.E_N) << '\n';
        os << "G_LT = " << fmt(p.G_LT) << "\nG_LN = " << fmt(p.G_LN) << "\nG_TN = " << fmt(p.G_TN) << '\n';
        os << "nu_LT = " << fmt(p.nu_LT) << "\nnu_TN = " << fmt(p.nu_TN) << "\nnu_LN = " << fmt(p.nu_LN) << '\n';
        os << "theta_deg = " << fmt(p.theta * 180 / std::numbers::pi) << "\nthickness = " << fmt(p.thickness) << '\n';
    }
}

SaintVenantBasis scenario_basis(const Scenario& s, std::vector<double>* refinement) {
    SaintVenantBasis b;
    if (!s.basis_file.empty()) {
        std::ifstream is(s.basis_file);
        if (!is) throw ConfigError("basis file '" + s.basis_file + "' not found");
        b = load_basis(is);
        check_basis(b, s.laminate);
    } else {
        CellOptions co = s.cell;
        co.densities.layers_per_ply = s.mesh.layers_per_ply;
        co.densities.order = s.mesh.order;
        CellModel cell(s.laminate, co);
        b = build_basis(cell, s.refine_passes);
    }
    if (refinement) *refinement = b.history;
    return b;
}

// ---- lines ------------------------------------------------------------------------------

Vec8 section_forces(const SolidMesh& m, const StressField& s, const PointLocator& loc, double x, double y) {
    static const double g[3] = {-std::sqrt(0.6), 0, std::sqrt(0.6)}, w[3] = {5.0 / 9, 8.0 / 9, 5.0 / 9};
    const std::size_t step = m.order == 2 ? 2 : 1;
    Vec8 F = Vec8::Zero();
    for (std::size_t k = 0; k + step < m.z_levels.size(); k += step) {
        const double mid = 0.5 * (m.z_levels[k] + m.z_levels[k + step]);
        const double half = 0.5 * (m.z_levels[k + step] - m.z_levels[k]);
        for (int q = 0; q < 3; ++q) {
            const double z = mid + half * g[q], wt = w[q] * half;
            const Vec6 sg = stress_at(m, s, loc, Vec3(x, y, z));
            F[0] += wt * sg[XX];
            F[1] += wt * sg[YY];
            F[2] += wt * sg[XY];
            F[3] += wt * z * sg[XX];
            F[4] += wt * z * sg[YY];
            F[5] += wt * z * sg[XY];
            F[6] += wt * sg[XZ];
            F[7] += wt * sg[YZ];
        }
    }
    return F;
}

StressLine sample_line(const SolidSystem& sys, const Vec& u, const LineSpec& spec) {
    const SolidMesh& m = sys.mesh();
    const StressField sf = compute_stresses(sys, u);
    const PointLocator loc(m);
    StressLine out;
    out.spec = spec;
    for (std::size_t i = 0; i < spec.points.size(); ++i) {
        const Vec2& p = spec.points[i];
        LineSample q;
        q.r = spec.r[i];
        q.x = p.x();
        q.y = p.y();
        q.sxx = stress_at(m, sf, loc, Vec3(p.x(), p.y(), spec.z_xx))[XX];
        q.sxz = stress_at(m, sf, loc, Vec3(p.x(), p.y(), spec.z_xz))[XZ];
        q.szz = stress_at(m, sf, loc, Vec3(p.x(), p.y(), spec.z_zz))[ZZ];
        const Vec8 F = section_forces(m, sf, loc, p.x(), p.y());
        q.Mxx = F[3];
        q.Qx = F[6];
        out.samples.push_back(q);
    }
    return out;
}

PlateProbe solid_probe(const SolidSystem& sys, const Vec& u, const Vec2& p) {
    const SolidMesh& m = sys.mesh();
    PlateProbe out;
    int best = 0;
    for (int i = 1; i < static_cast<int>(m.nodes.size()); ++i)
        if ((m.nodes[i] - Vec3(p.x(), p.y(), 0)).squaredNorm() < (m.nodes[best] - Vec3(p.x(), p.y(), 0)).squaredNorm())
            best = i;
    out.w = u[3 * best + 2];
    const StressField sf = compute_stresses(sys, u);
    const Vec8 F = section_forces(m, sf, PointLocator(m), p.x(), p.y());
    out.Qx = F[6];
    out.Mxx = F[3];
    return out;
}

LineSpec cantilever_line(const Scenario& s) {
    LineSpec l;
    const int n = 4 * s.mesh.n_side;
    for (int i = 0; i <= n; ++i) {
        const double x = s.geometry.L * i / n;
        l.points.emplace_back(x, 0);
        l.r.push_back(x);
    }
    const double h = s.laminate.half_thickness();
    l.z_xx = h / 2;
    l.z_zz = h / 4;
    l.z_xz = 0;
    return l;
}

LineSpec diagonal_line(const Scenario& s) {
    LineSpec l;
    const int n = 4 * s.mesh.n_side;
    const double r0 = s.geometry.r, r1 = s.geometry.zone / 2 * std::numbers::sqrt2, c = std::numbers::sqrt2 / 2;
    for (int i = 0; i <= n; ++i) {
        const double r = r0 + (r1 - r0) * i / n;
        l.points.emplace_back(s.geometry.xc + c * r, c * r);
        l.r.push_back(r);
    }
    const double h = s.laminate.half_thickness();
    l.z_xx = h;
    l.z_zz = h / 2;
    l.z_xz = 0;
    return l;
}

void write_line_csv(std::ostream& os, const StressLine& line) {
    const auto& sp = line.spec;
    os << "r_mm,x_mm,y_mm,sigma_xx[z=" << fmt(sp.z_xx) << "]_MPa,sigma_xz[z=" << fmt(sp.z_xz)
       << "]_MPa,sigma_zz[z=" << fmt(sp.z_zz) << "]_MPa,M_xx_N,Q_x_N_per_mm\n";
    for (const auto& p : line.samples)
        os << sci(p.r) << ',' << sci(p.x) << ',' << sci(p.y) << ',' << sci(p.sxx) << ',' << sci(p.sxz) << ','
           << sci(p.szz) << ',' << sci(p.Mxx) << ',' << sci(p.Qx) << '\n';
}

StressLine read_line_csv(std::istream& is, const std::string& source) {
    std::string header;
    if (!std::getline(is, header)) throw FormatError(source + ": empty line file");
    std::vector<std::string> cols;
    {
        std::stringstream ss(header);
        std::string c;
        while (std::getline(ss, c, ',')) cols.push_back(trim(c));
    }
    if (cols.size() != 8 || cols[0] != "r_mm" || cols[6] != "M_xx_N" || cols[7] != "Q_x_N_per_mm")
        throw FormatError(source + ": not a stress-line file");
    StressLine out;
    auto zof = [&](const std::string& c, const std::string& prefix) {
        if (c.rfind(prefix + "[z=", 0) != 0) throw FormatError(source + ": unexpected column '" + c + "'");
        const auto b = prefix.size() + 3, e = c.find(']');
        return std::stod(c.substr(b, e - b));
    };
    out.spec.z_xx = zof(cols[3], "sigma_xx");
    out.spec.z_xz = zof(cols[4], "sigma_xz");
    out.spec.z_zz = zof(cols[5], "sigma_zz");
    std::string row;
    int line = 1;
    while (std::getline(is, row)) {
        ++line;
        if (trim(row).empty()) continue;
        std::stringstream ss(row);
        std::string c;
        double v[8];
        int k = 0;
        while (std::getline(ss, c, ',') && k < 8) {
            const std::string t = trim(c);
            const auto res = std::from_chars(t.data(), t.data() + t.size(), v[k]);
            if (res.ec != std::errc() || res.ptr != t.data() + t.size())
                throw FormatError(source + ":" + std::to_string(line) + ": bad number '" + t + "'");
            ++k;
        }
        if (k != 8) throw FormatError(source + ":" + std::to_string(line) + ": expected 8 columns");
        LineSample p{v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]};
        out.spec.points.emplace_back(p.x, p.y);
        out.spec.r.push_back(p.r);
        out.samples.push_back(p);
    }
    return out;
}

// ---- runner -----------------------------------------------------------------------------

const RunSummary* ScenarioResult::find(const std::string& label) const {
    for (const auto& r : runs)
        if (r.label == label) return &r;
    return nullptr;
}

ScenarioResult run_scenario(const Scenario& s) {
    s.validate();
    const auto t0 = Clock::now();
    ScenarioResult res;
    if (s.name == "cell") {
        res = run_cell(s);
    } else if (s.name == "cantilever") {
        res = run_cantilever(s, s.descents);
    } else if (s.name == "holed_plate") {
        res = run_holed(s, {true, false}, {Accelerator::kFixedPoint, Accelerator::kConjugateGradient});
    } else if (s.kind == "cantilever") {
        res = run_cantilever(s, {s.coupling.descent});
    } else {
        res = run_holed(s, {s.plate_hole}, {s.coupling.accelerator});
    }
    res.name = s.name;
    res.seconds = since(t0);
    std::ofstream os(fs::path(s.output) / "summary.txt");
    write_summary(os, res);
    res.files.push_back((fs::path(s.output) / "summary.txt").string());
    return res;
}

void write_summary(std::ostream& os, const ScenarioResult& r) {
    os << "scenario " << r.name << '\n';
    if (!r.refinement.empty()) {
        os << "refinement";
        for (double v : r.refinement) os << ' ' << sci(v);
        os << '\n';
    }
    for (const auto& run : r.runs) {
        os << "run " << run.label << " descent=" << to_string(run.descent)
           << " accelerator=" << to_string(run.accelerator) << " iterations=" << run.iterations
           << " converged=" << (run.converged ? "yes" : "no") << " plate_factorizations=" << run.plate_factorizations
           << '\n';
        os << "  eta";
        for (double e : run.eta) os << ' ' << sci(e);
        os << '\n';
        os << "  limits equilibrium=" << sci(run.limits.equilibrium) << " kinematic=" << sci(run.limits.kinematic);
        if (run.limits.has_buffer) os << " buffer=" << sci(run.limits.buffer);
        os << '\n';
        if (r.has_reference) {
            os << "  rms_vs_reference";
            for (LineField f : {LineField::kSxx, LineField::kSxz, LineField::kSzz})
                os << ' ' << field_name(f) << '=' << sci(rms_deviation(r.reference, run.line, f)) << "(iter0 "
                   << sci(rms_deviation(r.reference, run.line0, f)) << ')';
            os << '\n';
        }
    }
}

// ---- comparisons ------------------------------------------------------------------------

std::string field_name(LineField f) {
    switch (f) {
        case LineField::kSxx: return "sigma_xx";
        case LineField::kSxz: return "sigma_xz";
        case LineField::kSzz: return "sigma_zz";
        case LineField::kMxx: return "M_xx";
        case LineField::kQx: return "Q_x";
    }
    return "";
}

double field_value(const LineSample& p, LineField f) {
    switch (f) {
        case LineField::kSxx: return p.sxx;
        case LineField::kSxz: return p.sxz;
        case LineField::kSzz: return p.szz;
        case LineField::kMxx: return p.Mxx;
        case LineField::kQx: return p.Qx;
    }
    return 0;
}

LineSample interpolate(const StressLine& line, double r) {
    const auto& s = line.samples;
    if (s.empty()) throw GeometryError("empty stress line");
    const double lo = std::min(s.front().r, s.back().r), hi = std::max(s.front().r, s.back().r);
    const double tol = 1e-9 * std::max(1.0, hi - lo);
    if (r < lo - tol || r > hi + tol) throw GeometryError("abscissa outside the stress line");
    if (s.size() == 1) return s[0];
    std::size_t i = 0;
    while (i + 2 < s.size() && s[i + 1].r < r) ++i;
    const LineSample &a = s[i], &b = s[i + 1];
    const double t = b.r != a.r ? std::clamp((r - a.r) / (b.r - a.r), 0.0, 1.0) : 0.0;
    auto mix = [t](double u, double v) { return u + t * (v - u); };
    return {r, mix(a.x, b.x), mix(a.y, b.y), mix(a.sxx, b.sxx), mix(a.sxz, b.sxz), mix(a.szz, b.szz),
            mix(a.Mxx, b.Mxx), mix(a.Qx, b.Qx)};
}

double rms_deviation(const StressLine& ref, const StressLine& hyb, LineField f, double r0, double r1) {
    double num = 0, den = 0;
    for (const auto& p : ref.samples) {
        if (p.r < r0 || p.r > r1) continue;
        const double v = field_value(p, f);
        num += std::pow(field_value(interpolate(hyb, p.r), f) - v, 2);
        den += v * v;
    }
    return den > 0 ? std::sqrt(num / den) : std::sqrt(num);
}

double max_deviation(const StressLine& ref, const StressLine& hyb, LineField f, double r0, double r1) {
    double num = 0, den = 0;
    for (const auto& p : ref.samples) {
        if (p.r < r0 || p.r > r1) continue;
        const double v = field_value(p, f);
        num = std::max(num, std::abs(field_value(interpolate(hyb, p.r), f) - v));
        den = std::max(den, std::abs(v));
    }
    return den > 0 ? num / den : num;
}

bool CompareReport::pass() const {
    for (double v : rms)
        if (!(v <= tolerance)) return false;
    return true;
}

CompareReport compare_lines(const StressLine& ref, const StressLine& hyb, const StressLine* iter0, std::ostream& csv,
                            std::ostream& warn, double tolerance) {
    CompareReport rep;
    rep.tolerance = tolerance;
    if (ref.samples.empty() || hyb.samples.empty()) throw GeometryError("empty stress line");
    auto range = [](const StressLine& l) {
        double lo = 1e300, hi = -1e300;
        for (const auto& p : l.samples) {
            lo = std::min(lo, p.r);
            hi = std::max(hi, p.r);
        }
        return std::pair{lo, hi};
    };
    // Overlapping abscissae only; disjoint ranges cannot be compared.
    auto [a0, a1] = range(ref);
    for (const StressLine* l : {&hyb, iter0}) {
        if (!l) continue;
        const auto [b0, b1] = range(*l);
        a0 = std::max(a0, b0);
        a1 = std::min(a1, b1);
    }
    if (a0 > a1) throw GeometryError("the stress lines have disjoint ranges");
    bool same = ref.samples.size() == hyb.samples.size();
    for (std::size_t i = 0; same && i < ref.samples.size(); ++i)
        same = std::abs(ref.samples[i].r - hyb.samples[i].r) <= 1e-9 * std::max(1.0, std::abs(ref.samples[i].r));
    if (!same) {
        rep.resampled = true;
        warn << "warning: sampling differs, hybrid resampled by linear interpolation on [" << a0 << ", " << a1 << "]\n";
    }
    if (ref.spec.z_xx != hyb.spec.z_xx || ref.spec.z_xz != hyb.spec.z_xz || ref.spec.z_zz != hyb.spec.z_zz)
        warn << "warning: the lines were extracted at different heights\n";
    double scale[5];
    for (int k = 0; k < 5; ++k) {
        rep.rms[k] = rms_deviation(ref, hyb, kLineFields[k], a0, a1);
        if (iter0) rep.rms0[k] = rms_deviation(ref, *iter0, kLineFields[k], a0, a1);
        scale[k] = 0;
        for (const auto& p : ref.samples) scale[k] = std::max(scale[k], std::abs(field_value(p, kLineFields[k])));
        if (scale[k] == 0) scale[k] = 1;
    }
    rep.has_iter0 = iter0 != nullptr;
    csv << "r_mm";
    for (LineField f : kLineFields) {
        const std::string n = field_name(f);
        csv << ',' << n << "_reference," << n << "_hybrid," << n << "_deviation_over_max_reference";
        if (iter0) csv << ',' << n << "_iter0," << n << "_iter0_deviation_over_max_reference";
    }
    csv << '\n';
    for (const auto& p : ref.samples) {
        if (p.r < a0 || p.r > a1) continue;
        const LineSample q = interpolate(hyb, p.r);
        LineSample q0;
        if (iter0) q0 = interpolate(*iter0, p.r);
        csv << sci(p.r);
        for (int k = 0; k < 5; ++k) {
            const LineField f = kLineFields[k];
            const double v = field_value(p, f);
            csv << ',' << sci(v) << ',' << sci(field_value(q, f)) << ',' << sci((field_value(q, f) - v) / scale[k]);
            if (iter0)
                csv << ',' << sci(field_value(q0, f)) << ',' << sci((field_value(q0, f) - v) / scale[k]);
        }
        csv << '\n';
    }
    return rep;
}

void write_compare_summary(std::ostream& os, const CompareReport& r) {
    for (int k = 0; k < 5; ++k) {
        os << field_name(kLineFields[k]) << " rms_deviation=" << sci(r.rms[k]);
        if (r.has_iter0) os << " iter0=" << sci(r.rms0[k]);
        os << (r.rms[k] <= r.tolerance ? " PASS" : " FAIL") << '\n';
    }
    os << (r.pass() ? "PASS" : "FAIL") << " (relative RMS tolerance " << r.tolerance << ")\n";
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const SolverError*>(&e)) return 3;
    if (dynamic_cast<const Error*>(&e)) return 4;
    return 3;
}

}  // namespace hp
