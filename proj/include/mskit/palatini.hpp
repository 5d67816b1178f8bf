#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "mskit/algebra.hpp"
#include "mskit/common.hpp"
#include "mskit/geometry.hpp"
#include "mskit/lattice.hpp"
#include "mskit/presymplectic.hpp"

namespace mskit {

// Spatial antisymmetric coordinate pairs (j,k), j < k, for the beta and
// lambda_jk blocks, in the order (0,1),(0,2),(1,2). Axes are the three
// slice directions; the corresponding frame rows are axis+1.
inline constexpr int SPAIR_J[3] = {0, 0, 1};
inline constexpr int SPAIR_K[3] = {1, 2, 2};

// Index for the unordered pair, -1 on the diagonal.
int spair_index(int j, int k);
// +1 for j<k, -1 for j>k, 0 on the diagonal.
double spair_sign(int j, int k);

// State of the constrained theory on one spatial slice. All algebra-valued
// blocks are stored with plain 6-component internal pairs; p and beta carry
// lowered internal pairs (they pair against connection-type objects), the
// rest carry raised ones. beta[s] and lam_jk[s] hold the (SPAIR_J[s],
// SPAIR_K[s]) component; the (k,j) component is minus it.
struct SliceState {
    Grid g;  // rank 3
    Field<Alg> a0;
    std::array<Field<Alg>, 3> a;
    std::array<Field<Alg>, 3> p;
    std::array<Field<Alg>, 3> beta;
    Field<Mat4> e;  // frame e^mu_I at m4(e[i], mu, I)
    std::array<Field<Alg>, 3> lam_k0;
    std::array<Field<Alg>, 3> lam_jk;

    explicit SliceState(const Grid& grid);
};

// Perturbation with the same block layout as SliceState.
struct SliceTangent {
    Grid g;
    Field<Alg> a0;
    std::array<Field<Alg>, 3> a;
    std::array<Field<Alg>, 3> p;
    std::array<Field<Alg>, 3> beta;
    Field<Mat4> e;
    std::array<Field<Alg>, 3> lam_k0;
    std::array<Field<Alg>, 3> lam_jk;

    explicit SliceTangent(const Grid& grid);
};

// Flat layout used by the packers, per site:
//   [ a0(6) | a_k(3*6) | p^k(3*6) | beta(3*6) | e(16) | lam_k0(3*6) | lam_jk(3*6) ]
inline constexpr int SLICE_COMPONENTS = 112;

Eigen::VectorXd pack_state(const SliceState& s);
SliceState unpack_state(const Grid& g, const Eigen::VectorXd& v);
Eigen::VectorXd pack_tangent(const SliceTangent& t);
SliceTangent unpack_tangent(const Grid& g, const Eigen::VectorXd& v);

double tangent_norm(const SliceTangent& t);
SliceTangent tangent_axpy(const SliceTangent& x, double c, const SliceTangent& y);  // x + c*y
double tangent_dot(const SliceTangent& x, const SliceTangent& y);

// Shift a state by t*X in every block (frame included; caller keeps t small
// enough that the frame stays invertible).
SliceState state_shift(const SliceState& s, const SliceTangent& X, double t);

// eps * e^mu_[I e^nu_J] as a lowered pair object; antisymmetrizer weight 1/2.
Alg frame_wedge(const TetradPoint& t, int mu, int nu);

// d(frame_wedge)/d(frame), 6 pair rows by 16 frame entries (mu*4+M columns).
Eigen::Matrix<double, 6, 16> wedge_jacobian(const TetradPoint& t, int mu, int nu);

// Per-site tetrad data for a whole slice; throws NumericalError when singular.
std::vector<TetradPoint> slice_tetrads(const SliceState& s);

// Spatial curvature fields F_{jk} of the slice connection, SPAIR order.
std::array<Field<Alg>, 3> curvature_spairs(const SliceState& s);

// --- Hamiltonian -------------------------------------------------------

// H = h^3 sum_x [ 2 sum_k <p^k, D_k a0 - 2 lam_k0>
//               + 4 sum_{j<k} <beta^{jk}, F_{jk} - lam_jk>
//               + 4 sum_k <lam_k0, eps e^0^e^k>
//               + 4 sum_{j<k} <lam_jk, eps e^j^e^k> ]
// with <,> the single-count pairing.
double extended_hamiltonian(const SliceState& s);

// |H| divided by the integral of absolute term values; the denominator is
// floored so the ratio is 0 for the zero state.
double hamiltonian_relative(const SliceState& s);

// Plain component derivative dH/d(block component), cell weight h^3 included.
SliceTangent hamiltonian_gradient(const SliceState& s);

// --- constraints ---------------------------------------------------------

struct ConstraintResiduals {
    Field<Alg> c1;                      // D_k^dual p^k
    std::array<Field<Alg>, 3> c2;       // F_{jk} - lam_jk   (SPAIR order)
    std::array<Field<Alg>, 3> c3;       // p^k - eps e^0^e^k
    std::array<Field<Alg>, 3> c4;       // beta^{jk} - eps e^j^e^k
    Field<Vec4> c5;                     // e^k_I lam^{IJ}_{k0}, J component
    std::array<Field<Vec4>, 3> c6;      // e^0_J lam^{IJ}_{k0} - e^j_J lam^{IJ}_{kj}, I component
    std::array<double, 6> family_max{}; // max |component| per family
    double max_all = 0.0;
};

ConstraintResiduals constraint_residuals(const SliceState& s);

// Sets p, beta from the frame and lam_jk from the curvature of a; the
// remaining blocks are copied. C2, C3, C4 vanish identically on the output.
SliceState solve_constraints(const Grid& g, const std::array<Field<Alg>, 3>& a,
                             const Field<Mat4>& e, const std::array<Field<Alg>, 3>& lam_k0,
                             const Field<Alg>& a0);
SliceState solve_constraints(const SliceState& s);

// --- pre-symplectic form --------------------------------------------------

// Omega(X,Y) = h^3 sum_x sum_k [ <X_p^k, Y_a_k> - <Y_p^k, X_a_k> ].
double omega_value(const SliceState& s, const SliceTangent& X, const SliceTangent& Y);

// Dense matrix of omega_value on the packed coordinate basis. Quadratic in
// the site count; guarded to tiny grids.
Eigen::MatrixXd build_omega_dense(const Grid& g);

// The slice theory as a generic finite-dimensional system on packed
// coordinates, dense-omega route; tiny grids only.
PresymplecticSystem palatini_system(const Grid& g);

// --- evolution -------------------------------------------------------------

// X_a_k = D_k a0 - 2 lam_k0;  X_p^k = -sum_j D_j^dual(eps e^j^e^k) - [p^k, a0].
SliceTangent evolution_vector(const SliceState& s);

// The pairing solution of the canonical equation: the tangent whose
// contraction with the two-form equals the differential of the scalar, so
// a-rows carry -dH/dp and p-rows carry +dH/da, both over the cell volume.
// Proportional to evolution_vector up to null directions of the restricted
// form wherever lam_k0 or the spatial curvature vanishes; at states carrying
// both at once it is the representative that annihilates the residual-set
// tangent space (see kernel_membership).
SliceTangent canonical_flow(const SliceState& s);

struct Trajectory {
    std::vector<SliceState> states;              // states[0] is the input; only the
                                                 // final state follows it unless
                                                 // keep_states was set
    std::vector<std::array<double, 3>> drift;    // max |C1|, |C5|, |C6| after each step
    std::vector<double> c3_recovery;             // frame-recovery residual per step
    int halted_step = -1;                        // -1 when all steps completed
};

// Classical one-step 4th order integration of (a_k, p^k). Around every stage
// pair the algebraic families are re-solved for the dependent blocks: the
// frame is re-fit to p in least squares (per-site Gauss-Newton, warm
// started, minimum-norm step), beta is reset to its spatial wedges and
// lam_jk to the curvature of the stage connection. The evolved momentum is
// kept; c3_recovery reports the relative wedge defect |p - e0^ek| per step,
// which is the distance of the momentum motion from the cone of frame
// wedges. lam_k0 and the a0 gauge stay frozen, so C5/C6 drift honestly.
// Integration halts, without throwing, at the first step whose C1/C5/C6
// drift exceeds drift_bound.
Trajectory evolve(const SliceState& s0, const Field<Alg>& a0_gauge, int steps, double ds,
                  double drift_bound, bool keep_states = true);

// --- generators and lifts ---------------------------------------------------

// Kernel generator on constraint-set coordinates: a-block D_k psi, e-block
// psi^K_I e^mu_K; other blocks zero.
SliceTangent gauge_generator(const Field<Alg>& psi, const SliceState& s);

// Transport generator: a-block xi^j D_k a_j, e-blocks -xi^j D_j e^mu_I with
// the frame covariant derivative d_j f - f M(a_j); other blocks zero.
SliceTangent diffeo_generator(const std::array<Field<double>, 3>& xi, const SliceState& s);

// Ambient completions of the kernel generators. The dependent lowered blocks
// (p, beta) follow the e-block through the wedge differential, which is the
// unique choice tangent to the algebraic families at every frame; lam_jk
// follows the a-block through the curvature linearization; lam_k0 and a0 are
// conjugated (gauge) or transported (diffeo). At the identity tetrad the
// p-block reduces to the rotation -[psi, p]^*.
SliceTangent lift_gauge(const Field<Alg>& psi, const SliceState& s);
SliceTangent lift_diffeo(const std::array<Field<double>, 3>& xi, const SliceState& s);

// Aliases kept for call sites that want the fully chain-ruled reading made
// explicit; identical to the lifts above.
SliceTangent lift_gauge_chain(const Field<Alg>& psi, const SliceState& s);
SliceTangent lift_diffeo_chain(const std::array<Field<double>, 3>& xi, const SliceState& s);

// Central-difference directional derivative of each residual family along X.
std::array<double, 6> lift_tangency(const SliceState& s, const SliceTangent& X, double t = 1e-4);
// Throws NumericalError naming the worst family when above tol.
void require_tangent(const SliceState& s, const SliceTangent& X, double tol);

// Relative defect || [X_psi, X_phi] - X_{[psi,phi]} || / ||X_{[psi,phi]}||,
// commutator taken by central directional differences of the generator map
// (exact for these affine maps up to roundoff).  Uniform parameter fields
// close to roundoff; varying ones leave the grid-Leibniz defect of the
// D_k[psi, phi] term, second order in the spacing.
double gauge_commutator_check(const Field<Alg>& psi, const Field<Alg>& phi, const SliceState& s);
// Same construction for the transport fields.  The transported blocks are
// horizontal for the slice connection, so the commutator closes on the
// transport of [xi, zeta] only up to a vertical piece: the target includes
// the rotation generated by the enclosed curvature, psi_c = -xi^j zeta^l F_jl.
// The match is exact over a vanishing connection (any pair) and for uniform
// pairs over a uniform connection; with a vanishing connection and varying
// pairs the defect is pure finite-difference truncation.  When connection
// and pair vary together the bracket carries vertical content beyond this
// two-parameter target and the defect does not decay under refinement.
double diffeo_commutator_check(const std::array<Field<double>, 3>& xi,
                               const std::array<Field<double>, 3>& zeta, const SliceState& s);

// exp of the mixed representation at every site.
Field<Mat4> group_field(const Field<Alg>& psi);

// Finite transformation: frame right-multiplied, raised blocks conjugated,
// lowered blocks transported contragrediently, a_k picking up the
// inhomogeneous L^{-1} d_k L term. lam_jk is recomputed as the curvature of
// the transformed connection so C2 keeps holding on transformed states.
SliceState gauge_transform(const Field<Mat4>& L, const SliceState& s);

// --- kernel membership -------------------------------------------------------

// Induced p-perturbation of a frame perturbation through the wedge map.
std::array<Field<Alg>, 3> induced_p(const SliceState& s, const Field<Mat4>& Xe);

// Least-squares norm of the one-form i_X Omega restricted to the constraint
// set, over the free coordinates (a_k, e, lam_k0): the covector
//   w = (h^3 Xp | -h^3 (Dp_e)^T Xa | 0)
// is decomposed against the conormal span of the residual families that cut
// the set out of those coordinates, and the residual of the decomposition is
// returned relative to h^3 |X|. Xp is the ambient p-block of the vector
// (use induced_p for vectors given on constraint-set coordinates).
double kernel_membership(const SliceState& s, const std::array<Field<Alg>, 3>& Xp,
                         const std::array<Field<Alg>, 3>& Xa);
double kernel_membership(const SliceState& s, const SliceTangent& X);

// Sparse Jacobian of the stacked (C1, C5, C6) residuals over the free
// coordinates, rows 22 per site, columns 52 per site in the order
// [a_k(18) | e(16) | lam_k0(18)]. Exposed for the finite-difference audit.
Eigen::SparseMatrix<double> free_constraint_jacobian(const SliceState& s);
Eigen::VectorXd free_constraint_values(const SliceState& s);

// --- structured constraint-algorithm run ------------------------------------

struct PalatiniPcaReport {
    std::array<double, 6> step1_constraint_max{};  // worst over probes, residual route
    std::array<double, 6> step1_gradient_max{};    // worst over probes, gradient-block route
    long step1_kernel_dim = 0;                     // coordinate null directions of the form
    std::vector<std::string> step2_labels;
    std::vector<double> step2_residual;            // |dH(X)| relative, aligned with labels
    std::vector<double> i1_hamiltonian;            // hamiltonian_relative per probe
    bool stabilized = false;
    int steps = 0;
};

// Mirrors the generic two-step algorithm with the coordinate structure of
// the slice form carried analytically, so full-size grids stay cheap. The
// dense generic route on a tiny grid is the agreement oracle for this.
PalatiniPcaReport run_pca_palatini(const std::vector<SliceState>& probes, double tol,
                                   unsigned seed = 1234, int directions_per_family = 5);

// --- initial data -------------------------------------------------------------

SliceState minkowski_slice(const Grid& g);
// Random constant invertible frame, constant a0; a = lam = 0; p, beta solved.
SliceState constant_tetrad_slice(const Grid& g, unsigned seed);
// Flat geometry in per-axis stretched coordinates: frame
// diag(1/N(x), 1/b_1(x_1), 1/b_2(x_2), 1/b_3(x_3)), a = lam = 0, constant a0.
SliceState curved_diag_slice(const Grid& g, double amplitude, unsigned seed);
// Constant curvature-carrying slice: constant frame diag(1, 1/s, 1/s, 1/s)
// and rotation-valued constant connection a_k = q_k J_k with the balance
// q1 q2 + q2 q3 + q3 q1 = 0 (q = strength*(1, 1, -1/2)), which is what lets
// every multiplier family close exactly: lam_jk = F is a constant rotation
// field and lam_k0 comes out boost-valued from the sitewise least-squares
// solve of the frame-multiplier families. All six residual families vanish
// to rounding and the density is pointwise zero.
SliceState constant_curvature_slice(const Grid& g, double strength, double scale);
// Random constant frame plus lam_k0 solved from the multiplier families.
SliceState multiplier_family_slice(const Grid& g, unsigned seed);
// Smooth random data in every free block, constraints NOT solved.
SliceState random_smooth_slice(const Grid& g, unsigned seed, double amplitude, int modes);
// solve_constraints applied to smooth random free data (C1/C5/C6 generally
// nonzero: generic data, not a probe).
SliceState random_solved_slice(const Grid& g, unsigned seed, double amplitude, int modes);
// Smooth invertible frame with a = lam = 0 and smooth or constant a0; p,
// beta solved. C2..C6 vanish sitewise; C1 does not (the wedge divergence of
// a nonconstant frame), so this is a membership probe, not an algorithm probe.
SliceState smooth_frame_slice(const Grid& g, unsigned seed, double amplitude, bool constant_a0);

}  // namespace mskit
