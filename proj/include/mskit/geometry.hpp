#pragma once

#include <array>

#include "mskit/algebra.hpp"
#include "mskit/common.hpp"
#include "mskit/lattice.hpp"

namespace mskit {

// Symmetric coordinate 2-tensor, 10 independent components, (mu<=nu) order
// (0,0),(0,1),(0,2),(0,3),(1,1),(1,2),(1,3),(2,2),(2,3),(3,3).
using Sym4 = std::array<double, 10>;

int sym_index(int mu, int nu);
inline double s4(const Sym4& s, int mu, int nu) { return s[sym_index(mu, nu)]; }
inline void s4set(Sym4& s, int mu, int nu, double v) { s[sym_index(mu, nu)] = v; }

// Tetrad data at one site. `frame` holds e^mu_I at (mu,I), `coframe` its
// inverse e^I_mu at (I,mu), eps = |det coframe|.
struct TetradPoint {
    Mat4 frame;
    Mat4 coframe;
    double eps;
};

double det4(const Mat4& m);
Mat4 invert4(const Mat4& m);
// Build the derived pieces from a frame; throws NumericalError when singular.
TetradPoint tetrad_point(const Mat4& frame);

// g^{mu nu} = e^mu_I eta^{IJ} e^nu_J from the frame.
Sym4 metric_upper(const Mat4& frame);
// g_{mu nu} = e^I_mu eta_{IJ} e^J_nu from the coframe.
Sym4 metric_lower(const Mat4& coframe);

// Internal-pair projector of a tetrad along a coordinate pair:
//   W^{mu nu}_{IJ} = eps * e^mu_{[I} e^nu_{J]}, antisymmetrizer of weight 1/2.
// For the identity tetrad, W^{01}_{01} = 1/2.
Alg palatini_pair(const TetradPoint& t, int mu, int nu);

// Full 4d configuration: connection a_mu (indices up) and a frame field.
struct SpacetimeState {
    Grid g;  // rank 4
    std::array<Field<Alg>, 4> a;
    Field<Mat4> frame;

    explicit SpacetimeState(const Grid& grid) : g(grid), frame(grid) {
        for (auto& c : a) c = Field<Alg>(grid);
    }
};

// E^J_nu = e^mu_I F^{IJ}_{mu nu}, all six coordinate pairs of the curvature.
// Component (J, nu) of the returned Mat4.
Field<Mat4> einstein_residual(const SpacetimeState& s);

// T^nu_{IJ} = sum_mu [ d_mu W^{mu nu} + coad(a_mu, W^{mu nu}) ],
// the vanishing of which expresses compatibility of connection and tetrad.
std::array<Field<Alg>, 4> torsion_residual(const SpacetimeState& s);

// Curvature scalar R = - e^nu_K e^sigma_L F^{KL}_{nu sigma} (full sums).
Field<double> scalar_curvature(const SpacetimeState& s);

// Norms over an interior window, `margin` cells away from every face, so
// that periodic-wrap pollution of non-periodic samples stays outside.
double window_max(const Field<Mat4>& f, int margin);
double window_max(const Field<Alg>& f, int margin);
double window_max(const Field<double>& f, int margin);

// DeWitt-type divergence of a metric perturbation on a background metric:
//   R^mu = (g^{mu nu} g^{rho sigma} - 1/2 g^{mu rho} g^{nu sigma})
//          nabla_nu delta g_{rho sigma}
// with nabla the Levi-Civita covariant derivative of the background.
// Christoffels are built from central differences of the background metric.
Field<Vec4> dewitt_divergence(const Field<Sym4>& g_lower, const Field<Sym4>& dg);

// --- analytic families ------------------------------------------------

// Frame = identity, connection = 0 on a periodic box of extent n*h.
SpacetimeState minkowski_4d(const Grid& g);

// Exterior patch in (t, r, theta, phi); diagonal tetrad
// e^I_mu = diag(sqrt(f), 1/sqrt(f), r, r sin th), f = 1 - 2M/r, with its
// torsion-free connection. Not periodic: use interior windows.
SpacetimeState schwarzschild(const Grid& g, double M, const Vec4& origin);

// Conformal chart e^I_mu = delta / (H eta_c) on eta_c < 0, with the
// torsion-free connection; R = -12 H^2 under the conventions above.
// H == 0 degenerates; use wavy_flat for the flat member of the family.
SpacetimeState de_sitter(const Grid& g, double H, double eta0);

// Flat space in wavy periodic coordinates: coframe = Jacobian of a smooth
// periodic deformation of the identity chart, connection = 0. A genuine
// vacuum solution presented on a periodic box.
SpacetimeState wavy_flat(const Grid& g, double amplitude, unsigned seed);

// Either wavy_flat (H == 0) or de_sitter, as one named family.
SpacetimeState constant_curvature(const Grid& g, double H, double amplitude, unsigned seed);

}  // namespace mskit
