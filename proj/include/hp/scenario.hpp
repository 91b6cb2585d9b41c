/**
 * @file scenario.hpp
 * @brief Scenario configs, runners for the cell, cantilever and holed-plate studies, stress-line
 *        extraction and line comparison reports.
 */
#pragma once

#include "hp/coupling.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace hp {

struct Scenario {
    std::string name = "cantilever";  // cell, cantilever, holed_plate, custom
    std::string kind = "cantilever";  // geometry pipeline of a custom scenario
    std::string output = "out";
    std::string basis_file;           // loaded when set, built otherwise
    bool reference = true;            // monolithic 3D solve
    bool plate_hole = true;           // custom holed runs only
    Geometry geometry;
    Densities mesh;
    CellOptions cell;
    int refine_passes = 0;
    Laminate laminate;
    CouplingConfig coupling;
    std::vector<DescentMode> descents;  // cantilever
    double u_d = 0.4;
    std::string load = "transverse";    // or inplane

    // Throws ConfigError naming the offending key.
    void validate() const;
};

Scenario default_scenario(const std::string& name);
// Sectioned key = value text; errors carry "<source>:<line>:".
Scenario parse_scenario(std::istream& is, const std::string& source = "<config>");
Scenario load_scenario(const std::string& path);
void write_scenario(std::ostream& os, const Scenario& s);

// Cell basis of the scenario laminate, layered like the scenario mesh.
SaintVenantBasis scenario_basis(const Scenario& s, std::vector<double>* refinement = nullptr);

// ---- stress lines ---------------------------------------------------------------------

struct LineSpec {
    std::vector<Vec2> points;
    std::vector<double> r;  // abscissa
    double z_xx = 0, z_xz = 0, z_zz = 0;
};

struct LineSample {
    double r = 0, x = 0, y = 0;
    double sxx = 0, sxz = 0, szz = 0;
    double Mxx = 0, Qx = 0;  // through-thickness integrals of the 3D stresses
};

struct PlateProbe {
    double w = 0, Qx = 0, Mxx = 0;
};

struct StressLine {
    LineSpec spec;
    std::vector<LineSample> samples;
};

// Through-thickness resultants (N_xx, N_yy, N_xy, M_xx, M_yy, M_xy, Q_x, Q_y) of the 3D stresses.
Vec8 section_forces(const SolidMesh& m, const StressField& s, const PointLocator& loc, double x, double y);
StressLine sample_line(const SolidSystem& sys, const Vec& u, const LineSpec& spec);
// Deflection at the column node nearest (p, 0) and the resultants Q_x, M_xx of the 3D stresses at p.
PlateProbe solid_probe(const SolidSystem& sys, const Vec& u, const Vec2& p);

LineSpec cantilever_line(const Scenario& s);  // y = 0, x in [0, L]
LineSpec diagonal_line(const Scenario& s);    // 45 degrees from the hole edge to the zone corner

void write_line_csv(std::ostream& os, const StressLine& line);
StressLine read_line_csv(std::istream& is, const std::string& source = "<csv>");

// ---- runs -----------------------------------------------------------------------------

struct RunSummary {
    std::string label;
    DescentMode descent = DescentMode::kDisplacement;
    Accelerator accelerator = Accelerator::kFixedPoint;
    bool plate_hole = false;
    std::vector<double> eta, kinematic, relaxation;
    int iterations = 0;
    bool converged = false;
    long plate_factorizations = 0;
    LimitReport limits;
    StressLine line0, line;  // submodeling and final local stresses
    PlateProbe probe0, probe;
    PlateProbe solid0, solid;  // 3D resultants and mid-surface deflection at the probe point
    double seconds = 0;
};

struct ScenarioResult {
    std::string name;
    std::vector<double> refinement;
    Mat8 cell_forces = Mat8::Zero();
    StressLine reference;
    PlateProbe reference_probe;
    bool has_reference = false;
    std::vector<RunSummary> runs;
    std::vector<std::string> files;
    double seconds = 0;

    const RunSummary* find(const std::string& label) const;
};

// Writes every output under s.output and returns the in-memory results.
ScenarioResult run_scenario(const Scenario& s);
void write_summary(std::ostream& os, const ScenarioResult& r);

// ---- comparisons ----------------------------------------------------------------------

enum class LineField { kSxx, kSxz, kSzz, kMxx, kQx };
inline constexpr LineField kLineFields[5] = {LineField::kSxx, LineField::kSxz, LineField::kSzz, LineField::kMxx,
                                             LineField::kQx};
std::string field_name(LineField f);
double field_value(const LineSample& p, LineField f);

// Linear interpolation of `line` at abscissa r; throws GeometryError outside its range.
LineSample interpolate(const StressLine& line, double r);
// RMS(hybrid - reference) / RMS(reference) on the reference abscissae within [r0, r1].
double rms_deviation(const StressLine& ref, const StressLine& hyb, LineField f, double r0 = -1e300,
                     double r1 = 1e300);
// max |hybrid - reference| / max |reference| on the reference abscissae within [r0, r1].
double max_deviation(const StressLine& ref, const StressLine& hyb, LineField f, double r0 = -1e300,
                     double r1 = 1e300);

struct CompareReport {
    double rms[5] = {0, 0, 0, 0, 0};
    double rms0[5] = {0, 0, 0, 0, 0};  // iteration 0, when given
    bool has_iter0 = false;
    bool resampled = false;
    double tolerance = 0.05;
    bool pass() const;
};
// Resamples the hybrid onto the reference abscissae (warning on `warn` when they differ) and
// writes per-point deviations relative to max |reference| of each field.
CompareReport compare_lines(const StressLine& ref, const StressLine& hyb, const StressLine* iter0,
                            std::ostream& csv, std::ostream& warn, double tolerance = 0.05);
void write_compare_summary(std::ostream& os, const CompareReport& r);

// CLI exit code of an exception: 3 solver, 4 config and input.
int exit_code_for(const std::exception& e);

}  // namespace hp
