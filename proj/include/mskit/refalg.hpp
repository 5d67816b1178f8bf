#pragma once

// Reference route for the internal algebra: everything done with dense 4x4
// matrices and quadruple index loops, no component tables. Slow on purpose;
// the fast 6-component route is tested against this one and the benchmark
// compares them.

#include <array>

#include "mskit/algebra.hpp"
#include "mskit/common.hpp"

namespace mskit::ref {

// Full 4x4 antisymmetric matrix from 6 components (indices in stored position).
inline Mat4 expand(const Alg& a) {
    Mat4 m{};
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) m4(m, i, j) = a.full(i, j);
    return m;
}

inline Alg contract(const Mat4& m) {
    Alg a;
    for (int k = 0; k < 6; ++k) a.c[k] = 0.5 * (m4(m, PAIR_I[k], PAIR_J[k]) - m4(m, PAIR_J[k], PAIR_I[k]));
    return a;
}

inline Mat4 raise_both(const Mat4& low) {
    Mat4 up{};
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            for (int k = 0; k < 4; ++k)
                for (int l = 0; l < 4; ++l)
                    if (i == k && j == l) m4(up, i, j) += ETA[i] * ETA[j] * m4(low, k, l);
    return up;
}

inline Alg comm(const Alg& x, const Alg& y) {
    Mat4 xm = expand(x), ym = expand(y), r{};
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            double s = 0.0;
            for (int k = 0; k < 4; ++k)
                s += m4(xm, i, k) * ETA[k] * m4(ym, k, j) - m4(ym, i, k) * ETA[k] * m4(xm, k, j);
            m4(r, i, j) = s;
        }
    return contract(r);
}

inline Alg coad(const Alg& x, const Alg& p) {
    Alg praised = contract(raise_both(expand(p)));
    Alg c = mskit::ref::comm(x, praised);
    return contract(raise_both(expand(c)));  // lowering is the same involution
}

inline double pair_full(const Alg& u, const Alg& v) {
    double s = 0.0;
    Mat4 um = expand(u), vm = expand(v);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) s += m4(um, i, j) * m4(vm, i, j);
    return s;
}

}  // namespace mskit::ref
