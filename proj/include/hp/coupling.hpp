/**
 * @file coupling.hpp
 * @brief Nonintrusive plate/3D coupling: descents on gamma_C, plate-sense residual on gamma_I,
 *        fixed-point and preconditioned conjugate gradient corrections, limit checks.
 */
#pragma once

#include "hp/plate_fem.hpp"
#include "hp/solid_fem.hpp"
#include "hp/svbasis.hpp"

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace hp {

enum class DescentMode { kTraction, kLagrangian, kDisplacement };
enum class Accelerator { kFixedPoint, kConjugateGradient };

std::string to_string(DescentMode m);
std::string to_string(Accelerator a);
DescentMode parse_descent(const std::string& s);   // throws ConfigError
Accelerator parse_accelerator(const std::string& s);

struct CouplingConfig {
    DescentMode descent = DescentMode::kDisplacement;
    double buffer_width = 2;  // mm
    double relaxation = 1;
    int max_iterations = 10;
    double eta_tolerance = 1e-6;
    Accelerator accelerator = Accelerator::kFixedPoint;

    void validate() const;  // throws ConfigError
};

struct ResidualSample {
    double s = 0, phi = 0;
    int node = -1;           // plate node
    Vec5 L = Vec5::Zero();   // per unit length, conjugate components in x/y axes
    Vec5 Ln = Vec5::Zero();  // same in the (n, t) frame: (N_n, N_t, M_n, M_t, Q)
    Vec5 L3d = Vec5::Zero(); // local contribution alone
};

struct Residual {
    std::vector<ResidualSample> samples;
    bool closed = false;
    double length = 0;  // curve length, closing segment included
    Vec nodal;  // plate DOF loads on gamma_I
};

// Denominators (max |N.n|, max |M.n|, max |Q.n|) from a plate trace. A family below `degenerate`
// times the largest one (moments scaled by 1/h) takes that largest level instead, so an unloaded
// family (membrane forces of a symmetric laminate in bending) does not turn roundoff into a large
// norm. Throws DegenerateLoadError when the whole trace vanishes.
Vec3 eta_denominators(const InterfaceTrace& trace, double h, double degenerate = 1e-6);
// Relative residual norm; trapezoidal quadrature in s.
double eta_norm(const Residual& r, const Vec3& denominators);

struct LimitReport {
    double equilibrium = 0;  // eta on gamma_I
    double kinematic = 0;    // tau-weighted displacement defect on gamma_C, relative
    double buffer = 0;       // generalized-force mismatch at buffer centroids, relative
    bool has_buffer = false;
};

struct HybridState {
    Vec U, U0;          // plate solution, current and submodeling
    Vec u, u0;          // local solution, current and submodeling
    Vec lambda;         // work-constraint multipliers (K u + B^T lambda = f)
    Vec corrective;     // plate corrective load
    Residual residual;
    std::vector<double> eta_history;
    std::vector<double> kinematic_history;
    std::vector<double> relaxation_history;
    int iteration = 0;
    bool converged = false;
    long plate_factorizations = 0;
};

// Callbacks seen by the iteration drivers; the corrective load is the unknown.
struct InterfaceIteration {
    std::function<Vec(const Vec& f)> evaluate;        // residual at corrective load f
    std::function<Vec(const Vec& p)> apply;           // residual increment of a load increment
    std::function<void(double alpha)> accept;         // state += alpha * fields of the last apply
    std::function<Vec(const Vec& rho)> precondition;  // interface displacement of the plate under rho
    std::function<double(const Vec& r)> eta;
    std::function<void(double omega)> on_step;        // after each correction
};

// Updates f and r in place and appends one eta per correction. Returns the number of corrections.
int drive_iteration(const InterfaceIteration& it, const CouplingConfig& cfg, Vec& f, Vec& r,
                    std::vector<double>& eta_history);

// Local model data independent of the coupling.
struct LocalProblem {
    std::vector<int> fixed_dofs;  // own Dirichlet conditions
    Vec fixed_values;             // same order as fixed_dofs
    Vec load;                     // optional external nodal loads
};

class Coupler {
public:
    // Plate edge sets "gamma_C" and "gamma_I" locate the interfaces; the local mesh must
    // carry the face set "gamma_C". The plate is factorized here when needed.
    Coupler(PlateSystem& plate, SolidSystem& local, const LocalProblem& bc, const SaintVenantBasis& basis,
            const CouplingConfig& cfg);

    const CouplingConfig& config() const { return cfg_; }
    const std::vector<NodeColumn>& columns_C() const { return colsC_; }
    const std::vector<NodeColumn>& columns_I() const { return colsI_; }
    const std::vector<int>& plate_curve_C() const { return curveC_; }
    const std::vector<int>& plate_curve_I() const { return curveI_; }
    bool bufferless() const { return bufferless_; }

    InterfaceTrace trace_C(const Vec& U) const;  // from the outer side of gamma_C
    InterfaceTrace trace_I(const Vec& U) const;  // from the outer side of gamma_I
    // gamma_C trace whose components 1..5 are the nodal forces transmitted by the outer plate
    // region per unit length; the traction descent uses it so that it loads the local model with
    // the same resultants the residual measures.
    InterfaceTrace transmitted_trace(const Vec& U) const;

    // Descent data for a gamma_C trace.
    Vec traction_load(const InterfaceTrace& tr) const;
    Vec tangential_load(const InterfaceTrace& tr) const;    // components 6..8
    Vec constraint_values(const InterfaceTrace& tr) const;  // work of the plate kinematics
    Vec displacement_values(const InterfaceTrace& tr) const; // full DOF vector, set on Gamma_C
    const SpMat& constraints() const { return B_; }

    Residual residual(const Vec& U, const Vec& u) const;

    HybridState initial();
    void iterate(HybridState& s);
    HybridState run();

    double kinematic_defect(const Vec& U, const Vec& u) const;
    LimitReport limit_checks(const HybridState& s) const;
    const Vec3& denominators() const { return den_; }

    static void write_log(std::ostream& os, const HybridState& s);

private:
    struct FacePoint {
        Vec3 x, n;
        int layer = 0, seg = 0;
        double zeta = 0, t = 0, w = 0, phi = 0;
        int nodes[8];
        double N[8];
        int nn = 0;
    };
    struct LocalFields {
        Vec U, u, lambda, r;
        Residual res;
    };

    PlateSystem& plate_;
    SolidSystem& solid_;
    LocalProblem bc_;
    const SaintVenantBasis& basis_;
    CouplingConfig cfg_;
    std::vector<int> curveC_, curveI_;
    bool closedC_ = false, closedI_ = false, bufferless_ = false;
    std::vector<NodeColumn> colsC_, colsI_;
    std::vector<int> elemsI_;
    std::vector<FacePoint> gp_;
    std::vector<int> fixed_;  // Dirichlet DOFs of the local solve
    SpMat B_;
    Eigen::LDLT<Eigen::MatrixXd> line_mass_, line_mass_C_;
    Vec3 den_ = Vec3::Ones();
    LocalFields last_apply_;

    Vec8 force_at(const InterfaceTrace& tr, const FacePoint& p) const;
    Vec5 conj_at(const InterfaceTrace& tr, const FacePoint& p) const;
    void prepare_local();
    LocalFields evaluate(const Vec& U, bool homogeneous) const;
};

}  // namespace hp
