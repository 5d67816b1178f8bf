#pragma once

#include <array>
#include <cmath>

#include "mskit/common.hpp"

namespace mskit {

// Internal metric eta = diag(-1,1,1,1), fixed once for the whole toolkit.
inline constexpr std::array<double, 4> ETA{-1.0, 1.0, 1.0, 1.0};

// Antisymmetric internal pairs in lexicographic order. An antisymmetric
// rank-2 internal object is stored as its 6 independent components in this
// order, in whatever index position (upper or lower) the object naturally
// carries. Raising or lowering both indices multiplies component c by
// PAIR_SIGN[c] = eta_II * eta_JJ, an exact involution.
inline constexpr int PAIR_I[6] = {0, 0, 0, 1, 1, 2};
inline constexpr int PAIR_J[6] = {1, 2, 3, 2, 3, 3};
inline constexpr double PAIR_SIGN[6] = {-1.0, -1.0, -1.0, 1.0, 1.0, 1.0};

// c for ordered pair (i,j), i < j.
inline int pair_index(int i, int j) {
    static constexpr int tab[4][4] = {{-1, 0, 1, 2}, {0, -1, 3, 4}, {1, 3, -1, 5}, {2, 4, 5, -1}};
    return tab[i][j];
}

// One o(1,3)-valued quantity: 6 components in PAIR order.
struct Alg {
    std::array<double, 6> c{};

    double& operator[](int k) { return c[static_cast<size_t>(k)]; }
    double operator[](int k) const { return c[static_cast<size_t>(k)]; }

    Alg& operator+=(const Alg& o) {
        for (int k = 0; k < 6; ++k) c[k] += o.c[k];
        return *this;
    }
    Alg& operator-=(const Alg& o) {
        for (int k = 0; k < 6; ++k) c[k] -= o.c[k];
        return *this;
    }
    Alg& operator*=(double s) {
        for (int k = 0; k < 6; ++k) c[k] *= s;
        return *this;
    }
    friend Alg operator+(Alg a, const Alg& b) { return a += b; }
    friend Alg operator-(Alg a, const Alg& b) { return a -= b; }
    friend Alg operator*(double s, Alg a) { return a *= s; }
    friend Alg operator*(Alg a, double s) { return a *= s; }
    friend Alg operator-(Alg a) {
        for (int k = 0; k < 6; ++k) a.c[k] = -a.c[k];
        return a;
    }

    // Full component with both indices in the stored position.
    double full(int i, int j) const {
        if (i == j) return 0.0;
        return i < j ? c[pair_index(i, j)] : -c[pair_index(j, i)];
    }
    void add_full(int i, int j, double x) {
        if (i < j)
            c[pair_index(i, j)] += x;
        else if (j < i)
            c[pair_index(j, i)] -= x;
    }
};

// Raise or lower both internal indices. Exact involution.
inline Alg flip_position(const Alg& a) {
    Alg r;
    for (int k = 0; k < 6; ++k) r.c[k] = PAIR_SIGN[k] * a.c[k];
    return r;
}

// Single-count pairing of a raised with a lowered object:
// sum_c u_c v_c = (1/2) sum over all I,J of u^{IJ} v_{IJ}.
inline double dot6(const Alg& u, const Alg& v) {
    double s = 0.0;
    for (int k = 0; k < 6; ++k) s += u.c[k] * v.c[k];
    return s;
}

// Invariant pairing of two objects stored in the SAME index position.
inline double dot6_metric(const Alg& u, const Alg& v) {
    double s = 0.0;
    for (int k = 0; k < 6; ++k) s += PAIR_SIGN[k] * u.c[k] * v.c[k];
    return s;
}

inline double norm6(const Alg& u) { return std::sqrt(dot6(u, u)); }

namespace detail {
// Structure table: [E_a, E_b] = SC_F[a][b] * E_{SC_C[a][b]}, at most one
// basis element per bracket. Generated once from the matrix representation.
struct StructureTable {
    int c[6][6];
    double f[6][6];
};
const StructureTable& structure_table();
}  // namespace detail

// Commutator of two algebra elements with both indices up:
// [x,y]^{IJ} = x^{IK} eta_{KL} y^{LJ} - y^{IK} eta_{KL} x^{LJ}.
inline Alg comm(const Alg& x, const Alg& y) {
    const auto& t = detail::structure_table();
    Alg r;
    for (int a = 0; a < 6; ++a) {
        if (x.c[a] == 0.0) continue;
        for (int b = 0; b < 6; ++b) {
            int cc = t.c[a][b];
            if (cc >= 0) r.c[cc] += t.f[a][b] * x.c[a] * y.c[b];
        }
    }
    return r;
}

// Coadjoint action on a lowered object: coad(x, p) = lower([x, raise(p)]).
// Satisfies dot6(p, comm(x, y)) == -dot6(coad(x, p), y) exactly.
inline Alg coad(const Alg& x, const Alg& p) {
    return flip_position(comm(x, flip_position(p)));
}

// Mixed representation M(x)^I_J = x^{IK} eta_{KJ}; a Lie algebra isomorphism:
// M(comm(x,y)) = M(x) M(y) - M(y) M(x).
Mat4 mixed_rep(const Alg& x);
Alg from_mixed(const Mat4& m);

// exp(M(psi)) by scaling and squaring; the result satisfies L^T eta L = eta
// to machine precision for moderate |psi|.
Mat4 exp_mixed(const Alg& psi);

Mat4 mat_mul(const Mat4& a, const Mat4& b);
Mat4 mat_transpose(const Mat4& a);
// Inverse of a Lorentz matrix via eta L^T eta; exact for exact Lorentz input.
Mat4 lorentz_inverse(const Mat4& L);
// max |(L^T eta L - eta)_{ij}|
double lorentz_defect(const Mat4& L);

}  // namespace mskit
