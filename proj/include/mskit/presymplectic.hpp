#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "mskit/common.hpp"

namespace mskit {

// Generic finite-dimensional pre-symplectic Hamiltonian system: a possibly
// degenerate antisymmetric form, a Hamiltonian, and whatever constraints the
// algorithm below accumulates. The palatini module has its own structured
// realization of the same algorithm; this one is dense and works on small
// systems.
struct PresymplecticSystem {
    int dim = 0;
    std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> omega;
    std::function<double(const Eigen::VectorXd&)> H;
    // optional closed-form gradient; central differences when empty
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradH;
};

Eigen::VectorXd system_gradient(const PresymplecticSystem& sys, const Eigen::VectorXd& x);

struct LabeledResidual {
    std::string label;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> r;
};

// Residual-function list plus the states known to satisfy it. Growing lists
// stand in for the constraint manifolds; no charts anywhere.
struct ConstraintSet {
    std::vector<LabeledResidual> residuals;
    std::vector<Eigen::VectorXd> witnesses;

    Eigen::VectorXd evaluate(const Eigen::VectorXd& x) const;
    double max_violation(const Eigen::VectorXd& x) const;
};

// Projector field selecting the vertical (kernel) directions; horizontal =
// complement. validate checks P^2 = P and range(P) inside ker Omega.
struct Connection {
    std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> P;
};

void validate_connection(const PresymplecticSystem& sys, const Connection& c,
                         const Eigen::VectorXd& x, double tol);

// Orthonormal basis (columns) of the null space of an antisymmetric matrix.
// Rank must come out even; a missing spectral gap at the cut is reported on
// stderr but not fatal.
Eigen::MatrixXd kernel(const Eigen::MatrixXd& omega, double tol);

// One step of the constraint algorithm: contract grad H with the kernel
// directions (ambient kernel on the first step, kernel relative to the
// tangent of the current set afterwards) at each probe and append the
// resulting residual functions. Directions are frozen at the probes where
// they were found; exact for state-independent forms.
ConstraintSet pca_step(const PresymplecticSystem& sys, const ConstraintSet& current,
                       const std::vector<Eigen::VectorXd>& probes, double tol);

struct PcaStepInfo {
    int step = 0;
    std::vector<int> kernel_dims;  // per probe
    std::vector<std::string> appended;
    double max_new_residual = 0.0;
};

struct PcaResult {
    ConstraintSet set;
    int steps = 0;
    bool stabilized = false;
    std::vector<PcaStepInfo> history;
};

// Iterate pca_step. The first step always defines the primary set; from the
// second step on, a step that appends nothing beyond tol at every probe
// stabilizes the algorithm.
PcaResult run_pca(const PresymplecticSystem& sys, const std::vector<Eigen::VectorXd>& probes,
                  int max_steps, double tol);

struct Functional {
    std::function<double(const Eigen::VectorXd&)> f;
    // optional closed form; central differences when empty
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> grad;
};

Eigen::VectorXd functional_gradient(const Functional& F, const Eigen::VectorXd& x);

struct BracketReport {
    double value = 0.0;
    double solve_defect = 0.0;  // residual of i_X Omega = dG relative to |dG|
    bool solvable = false;
};

// {F,G} = dF(X_G) where X_G solves i_{X_G} Omega = dG with the gauge fixed by
// horizontality P(X_G) = 0. The report variant uses the minimum-norm
// least-squares solve and never throws; the plain variant enforces the
// solvability precondition.
BracketReport covariant_bracket_report(const PresymplecticSystem& sys, const Connection& P,
                                       const Functional& F, const Functional& G,
                                       const Eigen::VectorXd& x, double tol);
double covariant_bracket(const PresymplecticSystem& sys, const Connection& P, const Functional& F,
                         const Functional& G, const Eigen::VectorXd& x, double tol);

// Loop-transport defect of the horizontal distribution at x in the plane of
// coordinate directions (i, j); a curvature diagnostic, asserted nowhere.
double connection_holonomy(const PresymplecticSystem& sys, const Connection& c,
                           const Eigen::VectorXd& x, int i, int j, double radius);

// --- toy builders --------------------------------------------------------

// Canonical symplectic system on n (q,p) pairs, interleaved layout.
PresymplecticSystem canonical_system(int pairs,
                                     std::function<double(const Eigen::VectorXd&)> H);

// (q, p, z) with the form supported on the (q,p) pair only and
// H = p^2/2 + V(q) + g(z); the standard degenerate example.
PresymplecticSystem toy_qpz(std::function<double(double)> V, std::function<double(double)> dV,
                            std::function<double(double)> g, std::function<double(double)> dg);

// Euclidean-orthogonal projector onto ker Omega(x), the default connection.
Connection orthogonal_connection(const PresymplecticSystem& sys, double tol);

}  // namespace mskit
