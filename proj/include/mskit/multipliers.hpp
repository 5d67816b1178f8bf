#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "mskit/algebra.hpp"
#include "mskit/common.hpp"

namespace mskit {

// Finite-dimensional constrained problem: objective F on R^dim_m, constraint
// surface the image of an embedding Phi: R^dim_n -> R^dim_m. Both callables
// supply their own first derivatives; the solver differentiates nothing but
// the stationarity system itself.
struct ConstrainedProblem {
    int dim_m = 0;
    int dim_n = 0;
    std::function<double(const Eigen::VectorXd&)> F;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradF;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> Phi;
    std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> JPhi;
    // fundamental domain for the parameters, used by the scan oracle
    Eigen::VectorXd n_lo, n_hi;
};

struct ExtendedPoint {
    Eigen::VectorXd m;    // point in the ambient space
    Eigen::VectorXd lam;  // multiplier, paired by the dot product
    Eigen::VectorXd n;    // parameter point
};

// F(m) + <lam, m - Phi(n)>
double extended_value(const ConstrainedProblem& p, const ExtendedPoint& x);

// (gradF(m) + lam, m - Phi(n), -JPhi(n)^T lam), flattened in that order.
Eigen::VectorXd extended_gradient(const ConstrainedProblem& p, const ExtendedPoint& x);

struct SolveReport {
    ExtendedPoint x;
    double residual = 0.0;
    int iterations = 0;
    bool converged = false;
    double sigma_min_jphi = 0.0;
};

// Damped Newton on the stationarity system, finite-difference Jacobian of the
// gradient. Throws NumericalError when the embedding Jacobian degenerates.
SolveReport solve_critical(const ConstrainedProblem& p, const ExtendedPoint& x0, double tol);

// Scan-and-zoom search for the constrained extrema of F along Phi; the
// independent route the solver is checked against.
struct ScanExtremum {
    Eigen::VectorXd n;
    Eigen::VectorXd m;
    double value = 0.0;
};
struct ScanResult {
    ScanExtremum minimum;
    ScanExtremum maximum;
};
ScanResult scan_extrema(const ConstrainedProblem& p, int samples_per_axis, int zoom_rounds);

// Built-in problems: "circle", "shifted-circle", "sphere", "ellipse",
// "identity". Each carries seed points that bracket its extrema.
struct CatalogEntry {
    std::string name;
    ConstrainedProblem problem;
    std::vector<ExtendedPoint> seeds;
};
CatalogEntry catalog_problem(const std::string& name);
std::vector<std::string> catalog_names();

// --- auxiliary-field action on a 4d lattice ----------------------------

// Connection plus an independent internal-pair momentum per coordinate pair,
// stored for mu < nu in the order (0,1),(0,2),(0,3),(1,2),(1,3),(2,3).
struct AuxFieldState {
    Grid g;  // rank 4
    std::array<Field<Alg>, 4> a;
    std::array<Field<Alg>, 6> P;

    explicit AuxFieldState(const Grid& grid) : g(grid) {
        for (auto& c : a) c = Field<Alg>(grid);
        for (auto& c : P) c = Field<Alg>(grid, Alg{});
    }
};

int coord_pair_index(int mu, int nu);

// S(chi; G) = -Integral[ P.F + (1/4G) P.P ]. The P.F contraction pairs the
// stored components directly (full coordinate-pair sum); P.P raises the
// coordinate pair with the flat metric eta and the internal pair with s_c.
double ym_action_with_G(const AuxFieldState& chi, double G);
// the G -> infinity value, -Integral[P.F]
double ym_action_limit(const AuxFieldState& chi);
// |S(chi;G) - S_limit(chi)|, computed from the two evaluations
double topological_limit_gap(const AuxFieldState& chi, double G);

AuxFieldState random_aux_state(const Grid& g, unsigned seed, double amplitude);

}  // namespace mskit
