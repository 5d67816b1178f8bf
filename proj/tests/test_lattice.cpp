#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mskit/lattice.hpp"
#include "testutil.hpp"

using namespace mskit;
using namespace mskit::testutil;

namespace {
Grid g3(int n, double L = 1.0) {
    Grid g;
    g.rank = 3;
    g.n = {n, n, n, 1};
    g.h = L / n;
    return g;
}
double field_diff(const Field<Alg>& a, const Field<Alg>& b) {
    double m = 0.0;
    for (long i = 0; i < a.size(); ++i)
        for (int c = 0; c < 6; ++c) m = std::max(m, std::abs(a[i].c[c] - b[i].c[c]));
    return m;
}
}  // namespace

TEST_CASE("central difference of a constant vanishes exactly") {
    Grid g = g3(6);
    Field<Alg> f(g, random_const_alg(3));
    for (int ax = 0; ax < 3; ++ax) CHECK(max_abs(partial(f, ax)) == 0.0);
}

TEST_CASE("central difference of a single mode has the discrete symbol") {
    Grid g = g3(8, 2.0);
    Field<double> f(g);
    int k = 2;
    double w = TWO_PI * k / (g.n[0] * g.h);
    for (long i = 0; i < f.size(); ++i) f[i] = std::sin(w * g.coords(i)[0] * g.h);
    Field<double> d = partial(f, 0);
    double symbol = std::sin(w * g.h) / g.h;  // discrete eigenvalue, not w
    for (long i = 0; i < f.size(); ++i) {
        double expect = symbol * std::cos(w * g.coords(i)[0] * g.h);
        CHECK(std::abs(d[i] - expect) < 1e-12);
    }
}

TEST_CASE("discrete partials commute exactly") {
    Grid g = g3(6);
    Field<Alg> f = smooth_alg(g, 21);
    for (int a = 0; a < 3; ++a)
        for (int b = a + 1; b < 3; ++b)
            CHECK(field_diff(partial(partial(f, a), b), partial(partial(f, b), a)) < 1e-13);
}

TEST_CASE("plain summation by parts is exact") {
    Grid g = g3(6);
    Field<Alg> u = smooth_alg(g, 22), v = smooth_alg(g, 23);
    for (int ax = 0; ax < 3; ++ax) {
        Field<Alg> du = partial(u, ax), dv = partial(v, ax);
        double lhs = 0.0, rhs = 0.0;
        for (long i = 0; i < u.size(); ++i) {
            lhs += dot6(u[i], dv[i]);
            rhs -= dot6(du[i], v[i]);
        }
        CHECK(std::abs(lhs - rhs) < 1e-12);
    }
}

TEST_CASE("covariant summation by parts including the connection term") {
    // sum dot6(p, D_k psi) = -sum dot6(D_k^dual p, psi), exactly (pointwise
    // coadjoint identity plus exact skewness of the central difference).
    Grid g = g3(6);
    Field<Alg> a = smooth_alg(g, 24), psi = smooth_alg(g, 25), p = smooth_alg(g, 26);
    for (int ax = 0; ax < 3; ++ax) {
        Field<Alg> Dpsi = covariant(a, psi, ax);
        Field<Alg> Dp = covariant_dual(a, p, ax);
        double lhs = 0.0, rhs = 0.0;
        for (long i = 0; i < g.size(); ++i) {
            lhs += dot6(p[i], Dpsi[i]);
            rhs -= dot6(Dp[i], psi[i]);
        }
        CHECK(std::abs(lhs - rhs) < 1e-12);
    }
}

TEST_CASE("Leibniz rule fails at second order, not better") {
    double defect_prev = 0.0;
    std::array<double, 2> defects{};
    int levels = 0;
    for (int n : {8, 16}) {
        Grid g = g3(n, 1.0);
        Field<double> f = smooth_scalar(g, 27), q = smooth_scalar(g, 28);
        Field<double> fq(g);
        for (long i = 0; i < g.size(); ++i) fq[i] = f[i] * q[i];
        Field<double> lhs = partial(fq, 0), df = partial(f, 0), dq = partial(q, 0);
        double worst = 0.0;
        for (long i = 0; i < g.size(); ++i)
            worst = std::max(worst, std::abs(lhs[i] - f[i] * dq[i] - q[i] * df[i]));
        defects[levels++] = worst;
        defect_prev = worst;
    }
    (void)defect_prev;
    CHECK(defects[0] > 1e-6);  // genuinely nonzero
    double order = std::log2(defects[0] / defects[1]);
    CHECK(order > 1.5);
    CHECK(order < 2.5);
}

TEST_CASE("curvature of a vanishing connection vanishes") {
    Grid g = g3(5);
    Field<Alg> zero(g);
    CHECK(max_abs(field_strength(zero, zero, 0, 1)) == 0.0);
}

TEST_CASE("curvature of constant connections is the bare commutator") {
    Grid g = g3(5);
    Field<Alg> aj(g, random_const_alg(31)), ak(g, random_const_alg(32));
    Field<Alg> F = field_strength(aj, ak, 0, 1);
    for (long i = 0; i < g.size(); ++i)
        CHECK(norm6(F[i] - comm(aj[i], ak[i])) < 1e-15);
}

TEST_CASE("curvature is antisymmetric in the coordinate pair") {
    Grid g = g3(6);
    Field<Alg> a0 = smooth_alg(g, 33), a1 = smooth_alg(g, 34);
    Field<Alg> Fjk = field_strength(a0, a1, 0, 1);
    Field<Alg> Fkj = field_strength(a1, a0, 1, 0);
    for (long i = 0; i < g.size(); ++i) CHECK(norm6(Fjk[i] + Fkj[i]) < 1e-14);
}

TEST_CASE("parallel kernels match the serial matrix-route reference") {
    Grid g = g3(6);
    Field<Alg> aj = smooth_alg(g, 35), ak = smooth_alg(g, 36), p = smooth_alg(g, 37);
    CHECK(field_diff(field_strength(aj, ak, 0, 2), serial::field_strength(aj, ak, 0, 2)) < 1e-13);
    CHECK(field_diff(covariant(aj, p, 1), serial::covariant(aj, p, 1)) < 1e-13);
    CHECK(field_diff(covariant_dual(aj, p, 1), serial::covariant_dual(aj, p, 1)) < 1e-13);
}

TEST_CASE("integrate and norms") {
    Grid g = g3(4, 2.0);
    Field<double> one(g, 1.0);
    CHECK(std::abs(integrate(one) - 8.0) < 1e-12);  // volume of the 2^3 box
    Field<Alg> f(g);
    Alg v;
    v.c[0] = 3.0;
    for (long i = 0; i < g.size(); ++i) f[i] = v;
    CHECK(std::abs(l2_norm(f) - 3.0 * std::sqrt(8.0)) < 1e-12);
    CHECK(max_abs(f) == 3.0);
}
