#include "mskit/algebra.hpp"

#include <cmath>

#include "mskit/refalg.hpp"

namespace mskit {

namespace detail {

const StructureTable& structure_table() {
    static const StructureTable table = [] {
        StructureTable t{};
        for (int a = 0; a < 6; ++a)
            for (int b = 0; b < 6; ++b) {
                Alg ea, eb;
                ea.c[a] = 1.0;
                eb.c[b] = 1.0;
                Alg r = ref::comm(ea, eb);
                t.c[a][b] = -1;
                t.f[a][b] = 0.0;
                for (int k = 0; k < 6; ++k) {
                    if (r.c[k] != 0.0) {
                        // basis brackets land on at most one basis element
                        t.c[a][b] = k;
                        t.f[a][b] = r.c[k];
                    }
                }
            }
        return t;
    }();
    return table;
}

}  // namespace detail

Mat4 mixed_rep(const Alg& x) {
    Mat4 m{};
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) m4(m, i, j) = x.full(i, j) * ETA[j];
    return m;
}

Alg from_mixed(const Mat4& m) {
    Alg a;
    for (int k = 0; k < 6; ++k) {
        int i = PAIR_I[k], j = PAIR_J[k];
        a.c[k] = m4(m, i, j) * ETA[j];  // x^{IJ} = M^I_K eta^{KJ}, eta^{JJ} = eta_JJ
    }
    return a;
}

Mat4 mat_mul(const Mat4& a, const Mat4& b) {
    Mat4 r{};
    for (int i = 0; i < 4; ++i)
        for (int k = 0; k < 4; ++k) {
            double aik = m4(a, i, k);
            if (aik == 0.0) continue;
            for (int j = 0; j < 4; ++j) m4(r, i, j) += aik * m4(b, k, j);
        }
    return r;
}

Mat4 mat_transpose(const Mat4& a) {
    Mat4 r{};
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) m4(r, i, j) = m4(a, j, i);
    return r;
}

Mat4 exp_mixed(const Alg& psi) {
    Mat4 m = mixed_rep(psi);
    double nrm = 0.0;
    for (double x : m) nrm += std::abs(x);
    int squarings = 0;
    while (nrm > 0.5 && squarings < 40) {
        nrm *= 0.5;
        ++squarings;
    }
    double scale = std::ldexp(1.0, -squarings);
    for (double& x : m) x *= scale;

    Mat4 result{};
    for (int i = 0; i < 4; ++i) m4(result, i, i) = 1.0;
    Mat4 term = result;
    for (int n = 1; n <= 18; ++n) {
        term = mat_mul(term, m);
        for (double& x : term) x /= n;
        for (int k = 0; k < 16; ++k) result[k] += term[k];
    }
    for (int s = 0; s < squarings; ++s) result = mat_mul(result, result);
    return result;
}

Mat4 lorentz_inverse(const Mat4& L) {
    // L^{-1} = eta L^T eta for L^T eta L = eta
    Mat4 r{};
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) m4(r, i, j) = ETA[i] * m4(L, j, i) * ETA[j];
    return r;
}

double lorentz_defect(const Mat4& L) {
    double worst = 0.0;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            double s = 0.0;
            for (int k = 0; k < 4; ++k) s += m4(L, k, i) * ETA[k] * m4(L, k, j);
            double target = (i == j) ? ETA[i] : 0.0;
            worst = std::max(worst, std::abs(s - target));
        }
    return worst;
}

}  // namespace mskit
