#include "mskit/lattice.hpp"

#include "mskit/refalg.hpp"

namespace mskit {

namespace {

template <class T, class Op>
Field<T> central_diff(const Field<T>& f, int axis, Op take) {
    Field<T> r(f.g);
    const double inv2h = 1.0 / (2.0 * f.g.h);
    const long n = f.size();
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) {
        long ip = f.g.shift(i, axis, +1);
        long im = f.g.shift(i, axis, -1);
        r[i] = take(f[ip], f[im], inv2h);
    }
    return r;
}

}  // namespace

Field<double> partial(const Field<double>& f, int axis) {
    return central_diff(f, axis, [](double p, double m, double s) { return (p - m) * s; });
}

Field<Alg> partial(const Field<Alg>& f, int axis) {
    return central_diff(f, axis, [](const Alg& p, const Alg& m, double s) { return (p - m) * s; });
}

Field<Alg> covariant(const Field<Alg>& a_k, const Field<Alg>& psi, int axis) {
    Field<Alg> r = partial(psi, axis);
    const long n = r.size();
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) r[i] += comm(a_k[i], psi[i]);
    return r;
}

Field<Alg> covariant_dual(const Field<Alg>& a_k, const Field<Alg>& p, int axis) {
    Field<Alg> r = partial(p, axis);
    const long n = r.size();
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) r[i] += coad(a_k[i], p[i]);
    return r;
}

Field<Alg> field_strength(const Field<Alg>& a_j, const Field<Alg>& a_k, int jaxis, int kaxis) {
    Field<Alg> r = partial(a_k, jaxis);
    Field<Alg> dk = partial(a_j, kaxis);
    const long n = r.size();
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) {
        r[i] -= dk[i];
        r[i] += comm(a_j[i], a_k[i]);
    }
    return r;
}

double integrate(const Field<double>& f) {
    double s = 0.0;
    const long n = f.size();
#pragma omp parallel for schedule(static) reduction(+ : s)
    for (long i = 0; i < n; ++i) s += f[i];
    return s * f.g.cell();
}

double l2_norm(const Field<Alg>& f) {
    double s = 0.0;
    const long n = f.size();
#pragma omp parallel for schedule(static) reduction(+ : s)
    for (long i = 0; i < n; ++i) s += dot6(f[i], f[i]);
    return std::sqrt(s * f.g.cell());
}

double l2_norm(const Field<double>& f) {
    double s = 0.0;
    const long n = f.size();
#pragma omp parallel for schedule(static) reduction(+ : s)
    for (long i = 0; i < n; ++i) s += f[i] * f[i];
    return std::sqrt(s * f.g.cell());
}

double max_abs(const Field<Alg>& f) {
    double m = 0.0;
    for (long i = 0; i < f.size(); ++i)
        for (int c = 0; c < 6; ++c) m = std::max(m, std::abs(f[i].c[c]));
    return m;
}

double max_abs(const Field<double>& f) {
    double m = 0.0;
    for (long i = 0; i < f.size(); ++i) m = std::max(m, std::abs(f[i]));
    return m;
}

namespace serial {

Field<Alg> field_strength(const Field<Alg>& a_j, const Field<Alg>& a_k, int jaxis, int kaxis) {
    Field<Alg> r(a_j.g);
    const double inv2h = 1.0 / (2.0 * a_j.g.h);
    for (long i = 0; i < r.size(); ++i) {
        Alg dj = (a_k[a_k.g.shift(i, jaxis, +1)] - a_k[a_k.g.shift(i, jaxis, -1)]) * inv2h;
        Alg dk = (a_j[a_j.g.shift(i, kaxis, +1)] - a_j[a_j.g.shift(i, kaxis, -1)]) * inv2h;
        r[i] = dj - dk + ref::comm(a_j[i], a_k[i]);
    }
    return r;
}

Field<Alg> covariant(const Field<Alg>& a_k, const Field<Alg>& psi, int axis) {
    Field<Alg> r(psi.g);
    const double inv2h = 1.0 / (2.0 * psi.g.h);
    for (long i = 0; i < r.size(); ++i) {
        Alg d = (psi[psi.g.shift(i, axis, +1)] - psi[psi.g.shift(i, axis, -1)]) * inv2h;
        r[i] = d + ref::comm(a_k[i], psi[i]);
    }
    return r;
}

Field<Alg> covariant_dual(const Field<Alg>& a_k, const Field<Alg>& p, int axis) {
    Field<Alg> r(p.g);
    const double inv2h = 1.0 / (2.0 * p.g.h);
    for (long i = 0; i < r.size(); ++i) {
        Alg d = (p[p.g.shift(i, axis, +1)] - p[p.g.shift(i, axis, -1)]) * inv2h;
        r[i] = d + ref::coad(a_k[i], p[i]);
    }
    return r;
}

}  // namespace serial

}  // namespace mskit
