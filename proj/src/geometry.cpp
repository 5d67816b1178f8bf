#include "mskit/geometry.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <vector>

namespace mskit {

namespace {
constexpr double TWO_PI = 6.283185307179586476925286766559;

Eigen::Map<const Eigen::Matrix<double, 4, 4, Eigen::RowMajor>> emap(const Mat4& m) {
    return Eigen::Map<const Eigen::Matrix<double, 4, 4, Eigen::RowMajor>>(m.data());
}
}  // namespace

int sym_index(int mu, int nu) {
    static constexpr int tab[4][4] = {
        {0, 1, 2, 3}, {1, 4, 5, 6}, {2, 5, 7, 8}, {3, 6, 8, 9}};
    return tab[mu][nu];
}

double det4(const Mat4& m) { return emap(m).determinant(); }

Mat4 invert4(const Mat4& m) {
    Eigen::Matrix<double, 4, 4, Eigen::RowMajor> inv = emap(m).inverse();
    Mat4 r;
    for (int i = 0; i < 16; ++i) r[i] = inv.data()[i];
    return r;
}

TetradPoint tetrad_point(const Mat4& frame) {
    double d = det4(frame);
    if (!(std::abs(d) > 1e-14)) throw NumericalError("tetrad frame is singular");
    TetradPoint t;
    t.frame = frame;
    t.coframe = invert4(frame);
    t.eps = std::abs(1.0 / d);
    return t;
}

Sym4 metric_upper(const Mat4& frame) {
    Sym4 s{};
    for (int mu = 0; mu < 4; ++mu)
        for (int nu = mu; nu < 4; ++nu) {
            double v = 0.0;
            for (int I = 0; I < 4; ++I) v += m4(frame, mu, I) * ETA[I] * m4(frame, nu, I);
            s4set(s, mu, nu, v);
        }
    return s;
}

Sym4 metric_lower(const Mat4& coframe) {
    Sym4 s{};
    for (int mu = 0; mu < 4; ++mu)
        for (int nu = mu; nu < 4; ++nu) {
            double v = 0.0;
            for (int I = 0; I < 4; ++I) v += m4(coframe, I, mu) * ETA[I] * m4(coframe, I, nu);
            s4set(s, mu, nu, v);
        }
    return s;
}

Alg palatini_pair(const TetradPoint& t, int mu, int nu) {
    Alg w;
    for (int c = 0; c < 6; ++c) {
        int I = PAIR_I[c], J = PAIR_J[c];
        w.c[c] = 0.5 * t.eps *
                 (m4(t.frame, mu, I) * m4(t.frame, nu, J) - m4(t.frame, mu, J) * m4(t.frame, nu, I));
    }
    return w;
}

Field<Mat4> einstein_residual(const SpacetimeState& s) {
    Field<Mat4> out(s.g, Mat4{});
    for (int mu = 0; mu < 4; ++mu)
        for (int nu = mu + 1; nu < 4; ++nu) {
            Field<Alg> F = field_strength(s.a[mu], s.a[nu], mu, nu);
            const long n = s.g.size();
#pragma omp parallel for schedule(static)
            for (long i = 0; i < n; ++i) {
                for (int J = 0; J < 4; ++J)
                    for (int I = 0; I < 4; ++I) {
                        double FIJ = F[i].full(I, J);
                        if (FIJ == 0.0) continue;
                        // contribution e^mu_I F^{IJ}_{mu nu} to column nu,
                        // and e^nu_I F^{IJ}_{nu mu} = -... to column mu
                        m4(out[i], J, nu) += m4(s.frame[i], mu, I) * FIJ;
                        m4(out[i], J, mu) -= m4(s.frame[i], nu, I) * FIJ;
                    }
            }
        }
    return out;
}

std::array<Field<Alg>, 4> torsion_residual(const SpacetimeState& s) {
    // W^{mu nu} fields for mu < nu
    Field<Alg> W[4][4];
    const long n = s.g.size();
    for (int mu = 0; mu < 4; ++mu)
        for (int nu = mu + 1; nu < 4; ++nu) {
            W[mu][nu] = Field<Alg>(s.g);
#pragma omp parallel for schedule(static)
            for (long i = 0; i < n; ++i)
                W[mu][nu][i] = palatini_pair(tetrad_point(s.frame[i]), mu, nu);
        }
    std::array<Field<Alg>, 4> T;
    for (int nu = 0; nu < 4; ++nu) {
        T[nu] = Field<Alg>(s.g);
        for (int mu = 0; mu < 4; ++mu) {
            if (mu == nu) continue;
            double sign = mu < nu ? 1.0 : -1.0;
            const Field<Alg>& Wmn = mu < nu ? W[mu][nu] : W[nu][mu];
            Field<Alg> D = covariant_dual(s.a[mu], Wmn, mu);
            for (long i = 0; i < n; ++i) T[nu][i] += sign * D[i];
        }
    }
    return T;
}

Field<double> scalar_curvature(const SpacetimeState& s) {
    Field<double> R(s.g, 0.0);
    for (int mu = 0; mu < 4; ++mu)
        for (int nu = mu + 1; nu < 4; ++nu) {
            Field<Alg> F = field_strength(s.a[mu], s.a[nu], mu, nu);
            const long n = s.g.size();
#pragma omp parallel for schedule(static)
            for (long i = 0; i < n; ++i) {
                double acc = 0.0;
                for (int K = 0; K < 4; ++K)
                    for (int L = 0; L < 4; ++L)
                        acc += m4(s.frame[i], mu, K) * m4(s.frame[i], nu, L) * F[i].full(K, L);
                R[i] -= 2.0 * acc;  // both coordinate orders of the pair
            }
        }
    return R;
}

namespace {
bool in_window(const Grid& g, long i, int margin) {
    auto x = g.coords(i);
    for (int a = 0; a < g.rank; ++a)
        if (x[a] < margin || x[a] > g.n[a] - 1 - margin) return false;
    return true;
}
}  // namespace

double window_max(const Field<Mat4>& f, int margin) {
    double m = 0.0;
    for (long i = 0; i < f.size(); ++i)
        if (in_window(f.g, i, margin))
            for (double v : f[i]) m = std::max(m, std::abs(v));
    return m;
}

double window_max(const Field<Alg>& f, int margin) {
    double m = 0.0;
    for (long i = 0; i < f.size(); ++i)
        if (in_window(f.g, i, margin))
            for (double v : f[i].c) m = std::max(m, std::abs(v));
    return m;
}

double window_max(const Field<double>& f, int margin) {
    double m = 0.0;
    for (long i = 0; i < f.size(); ++i)
        if (in_window(f.g, i, margin)) m = std::max(m, std::abs(f[i]));
    return m;
}

namespace {
Field<Sym4> partial_sym(const Field<Sym4>& f, int axis) {
    Field<Sym4> r(f.g, Sym4{});
    const double inv2h = 1.0 / (2.0 * f.g.h);
    const long n = f.size();
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) {
        long ip = f.g.shift(i, axis, +1), im = f.g.shift(i, axis, -1);
        for (int k = 0; k < 10; ++k) r[i][k] = (f[ip][k] - f[im][k]) * inv2h;
    }
    return r;
}

Mat4 sym_inverse(const Sym4& s) {
    Mat4 m{};
    for (int mu = 0; mu < 4; ++mu)
        for (int nu = 0; nu < 4; ++nu) m4(m, mu, nu) = s4(s, mu, nu);
    return invert4(m);
}
}  // namespace

Field<Vec4> dewitt_divergence(const Field<Sym4>& g_lower, const Field<Sym4>& dg) {
    const Grid& g = g_lower.g;
    std::array<Field<Sym4>, 4> dgl;
    std::array<Field<Sym4>, 4> ddg;
    for (int ax = 0; ax < 4; ++ax) {
        dgl[ax] = partial_sym(g_lower, ax);
        ddg[ax] = partial_sym(dg, ax);
    }
    Field<Vec4> out(g, Vec4{});
    const long n = g.size();
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) {
        Mat4 gu = sym_inverse(g_lower[i]);
        // Gamma^l_{mn} = 1/2 g^{lr} (d_m g_rn + d_n g_rm - d_r g_mn)
        double Gamma[4][4][4];
        for (int l = 0; l < 4; ++l)
            for (int m = 0; m < 4; ++m)
                for (int nn = 0; nn < 4; ++nn) {
                    double acc = 0.0;
                    for (int r = 0; r < 4; ++r)
                        acc += m4(gu, l, r) * (s4(dgl[m][i], r, nn) + s4(dgl[nn][i], r, m) -
                                               s4(dgl[r][i], m, nn));
                    Gamma[l][m][nn] = 0.5 * acc;
                }
        // nabla_n dg_{rs}
        double nd[4][4][4];
        for (int nn = 0; nn < 4; ++nn)
            for (int r = 0; r < 4; ++r)
                for (int ss = 0; ss < 4; ++ss) {
                    double acc = s4(ddg[nn][i], r, ss);
                    for (int l = 0; l < 4; ++l)
                        acc -= Gamma[l][nn][r] * s4(dg[i], l, ss) + Gamma[l][nn][ss] * s4(dg[i], r, l);
                    nd[nn][r][ss] = acc;
                }
        for (int mu = 0; mu < 4; ++mu) {
            double acc = 0.0;
            for (int nn = 0; nn < 4; ++nn)
                for (int r = 0; r < 4; ++r)
                    for (int ss = 0; ss < 4; ++ss)
                        acc += (m4(gu, mu, nn) * m4(gu, r, ss) -
                                0.5 * m4(gu, mu, r) * m4(gu, nn, ss)) *
                               nd[nn][r][ss];
            out[i][mu] = acc;
        }
    }
    return out;
}

// --- analytic families ------------------------------------------------

SpacetimeState minkowski_4d(const Grid& g) {
    SpacetimeState s(g);
    Mat4 id{};
    for (int i = 0; i < 4; ++i) m4(id, i, i) = 1.0;
    for (long i = 0; i < g.size(); ++i) s.frame[i] = id;
    return s;
}

SpacetimeState schwarzschild(const Grid& g, double M, const Vec4& origin) {
    SpacetimeState s(g);
    for (long i = 0; i < g.size(); ++i) {
        auto x = g.coords(i);
        double r = origin[1] + x[1] * g.h;
        double th = origin[2] + x[2] * g.h;
        double f = 1.0 - 2.0 * M / r;
        if (f <= 0.0) throw ConfigError("schwarzschild box crosses the horizon");
        double sf = std::sqrt(f), st = std::sin(th), ct = std::cos(th);
        Mat4 co{};
        m4(co, 0, 0) = sf;
        m4(co, 1, 1) = 1.0 / sf;
        m4(co, 2, 2) = r;
        m4(co, 3, 3) = r * st;
        s.frame[i] = invert4(co);
        s.a[0][i].add_full(0, 1, M / (r * r));
        s.a[2][i].add_full(1, 2, -sf);
        s.a[3][i].add_full(1, 3, -sf * st);
        s.a[3][i].add_full(2, 3, -ct);
    }
    return s;
}

SpacetimeState de_sitter(const Grid& g, double H, double eta0) {
    if (H == 0.0) throw ConfigError("de_sitter needs H != 0");
    SpacetimeState s(g);
    for (long i = 0; i < g.size(); ++i) {
        auto x = g.coords(i);
        double eta = eta0 + x[0] * g.h;
        if (std::abs(eta) < 1e-12) throw ConfigError("de_sitter chart crosses eta = 0");
        Mat4 co{};
        for (int k = 0; k < 4; ++k) m4(co, k, k) = 1.0 / (H * eta);
        s.frame[i] = invert4(co);
        for (int k = 1; k < 4; ++k) s.a[k][i].add_full(0, k, -1.0 / eta);
    }
    return s;
}

SpacetimeState wavy_flat(const Grid& g, double amplitude, unsigned seed) {
    SpacetimeState s(g);
    // periodic displacement phi^I(x) = x^I + sum of a few sine modes;
    // the coframe is its exact Jacobian, so the chart stays flat.
    std::mt19937 rng(seed);
    std::uniform_int_distribution<int> kd(-2, 2);
    std::uniform_real_distribution<double> ph(0.0, TWO_PI);
    struct Mode {
        int I;
        std::array<int, 4> k;
        double A, phase;
    };
    std::vector<Mode> modes;
    for (int I = 0; I < 4; ++I)
        for (int m = 0; m < 2; ++m) {
            Mode md;
            md.I = I;
            bool nonzero = false;
            for (int a = 0; a < 4; ++a) {
                md.k[a] = kd(rng);
                nonzero = nonzero || md.k[a] != 0;
            }
            if (!nonzero) md.k[I] = 1;
            md.A = amplitude / 2.0;
            md.phase = ph(rng);
            modes.push_back(md);
        }
    for (long i = 0; i < g.size(); ++i) {
        auto x = g.coords(i);
        Mat4 co{};
        for (int k = 0; k < 4; ++k) m4(co, k, k) = 1.0;
        for (const auto& md : modes) {
            double arg = md.phase;
            for (int a = 0; a < 4; ++a) arg += TWO_PI * md.k[a] * x[a] / g.n[a];
            for (int mu = 0; mu < 4; ++mu) {
                double dk = TWO_PI * md.k[mu] / (g.n[mu] * g.h);
                m4(co, md.I, mu) += md.A * dk * std::cos(arg);
            }
        }
        s.frame[i] = invert4(co);
    }
    return s;
}

SpacetimeState constant_curvature(const Grid& g, double H, double amplitude, unsigned seed) {
    if (H == 0.0) return wavy_flat(g, amplitude, seed);
    return de_sitter(g, H, 1.0);
}

}  // namespace mskit
