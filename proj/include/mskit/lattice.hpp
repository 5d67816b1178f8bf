#pragma once

#include <cmath>
#include <functional>

#include "mskit/algebra.hpp"
#include "mskit/common.hpp"

namespace mskit {

// All derivatives are periodic central differences,
//   (d_k f)(x) = (f(x + h e_k) - f(x - h e_k)) / (2h).
// They are skew-adjoint against the plain site sum and commute with each
// other exactly; the product (Leibniz) rule holds only to O(h^2).

template <class T>
using PointwiseMap = std::function<T(const T&)>;

Field<double> partial(const Field<double>& f, int axis);
Field<Alg> partial(const Field<Alg>& f, int axis);

// Covariant derivative of an adjoint-type (index-up) field:
//   (D_k psi) = d_k psi + [a_k, psi].
Field<Alg> covariant(const Field<Alg>& a_k, const Field<Alg>& psi, int axis);

// Covariant derivative of a coadjoint-type (index-down) field:
//   (D_k p) = d_k p + coad(a_k, p).
// Together with `covariant` it satisfies the exact discrete rule
//   sum_sites dot6(p, D_k psi) = - sum_sites dot6(D_k p, psi).
Field<Alg> covariant_dual(const Field<Alg>& a_k, const Field<Alg>& p, int axis);

// Lattice curvature without the 1/2 normalization:
//   F_{jk} = d_j a_k - d_k a_j + [a_j, a_k].
// Kept in a named constant so downstream factor audits have one place to look.
inline constexpr bool curvature_half_convention = false;
Field<Alg> field_strength(const Field<Alg>& a_j, const Field<Alg>& a_k, int jaxis, int kaxis);

// Plain cell-weighted sum, h^rank * sum over sites.
double integrate(const Field<double>& f);

// sqrt(h^rank * sum_sites sum_c v_c^2)
double l2_norm(const Field<Alg>& f);
double l2_norm(const Field<double>& f);
double max_abs(const Field<Alg>& f);
double max_abs(const Field<double>& f);

namespace serial {
// Straight-line single-thread versions built on the 4x4 matrix algebra.
// Kept as the reference route; the benchmark compares against them.
Field<Alg> field_strength(const Field<Alg>& a_j, const Field<Alg>& a_k, int jaxis, int kaxis);
Field<Alg> covariant(const Field<Alg>& a_k, const Field<Alg>& psi, int axis);
Field<Alg> covariant_dual(const Field<Alg>& a_k, const Field<Alg>& p, int axis);
}  // namespace serial

}  // namespace mskit
