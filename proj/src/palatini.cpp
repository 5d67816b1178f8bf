#include "mskit/palatini.hpp"

#include <Eigen/SparseCore>
#include <Eigen/IterativeLinearSolvers>

#include <cmath>
#include <cstdio>
#include <memory>

namespace mskit {

int spair_index(int j, int k) {
    static constexpr int tab[3][3] = {{-1, 0, 1}, {0, -1, 2}, {1, 2, -1}};
    return tab[j][k];
}

double spair_sign(int j, int k) {
    if (j == k) return 0.0;
    return j < k ? 1.0 : -1.0;
}

SliceState::SliceState(const Grid& grid) : g(grid), a0(grid), e(grid) {
    for (int k = 0; k < 3; ++k) {
        a[k] = Field<Alg>(grid);
        p[k] = Field<Alg>(grid);
        beta[k] = Field<Alg>(grid);
        lam_k0[k] = Field<Alg>(grid);
        lam_jk[k] = Field<Alg>(grid);
    }
}

SliceTangent::SliceTangent(const Grid& grid) : g(grid), a0(grid), e(grid) {
    for (int k = 0; k < 3; ++k) {
        a[k] = Field<Alg>(grid);
        p[k] = Field<Alg>(grid);
        beta[k] = Field<Alg>(grid);
        lam_k0[k] = Field<Alg>(grid);
        lam_jk[k] = Field<Alg>(grid);
    }
    for (long i = 0; i < e.size(); ++i) e[i] = Mat4{};
}

// Per-site packing offsets into the 112-component layout.
namespace {
constexpr int OFF_A0 = 0;
constexpr int OFF_A = 6;
constexpr int OFF_P = 24;
constexpr int OFF_BETA = 42;
constexpr int OFF_E = 60;
constexpr int OFF_LK0 = 76;
constexpr int OFF_LJK = 94;

template <class S>
void pack_blocks(const S& s, Eigen::VectorXd& v) {
    const long n = s.g.size();
    v.resize(n * SLICE_COMPONENTS);
    for (long i = 0; i < n; ++i) {
        double* o = v.data() + i * SLICE_COMPONENTS;
        for (int c = 0; c < 6; ++c) o[OFF_A0 + c] = s.a0[i][c];
        for (int k = 0; k < 3; ++k)
            for (int c = 0; c < 6; ++c) {
                o[OFF_A + 6 * k + c] = s.a[k][i][c];
                o[OFF_P + 6 * k + c] = s.p[k][i][c];
                o[OFF_BETA + 6 * k + c] = s.beta[k][i][c];
                o[OFF_LK0 + 6 * k + c] = s.lam_k0[k][i][c];
                o[OFF_LJK + 6 * k + c] = s.lam_jk[k][i][c];
            }
        for (int m = 0; m < 16; ++m) o[OFF_E + m] = s.e[i][m];
    }
}

template <class S>
void unpack_blocks(S& s, const Eigen::VectorXd& v) {
    const long n = s.g.size();
    if (v.size() != n * SLICE_COMPONENTS) throw ConfigError("packed vector has the wrong length");
    for (long i = 0; i < n; ++i) {
        const double* o = v.data() + i * SLICE_COMPONENTS;
        for (int c = 0; c < 6; ++c) s.a0[i][c] = o[OFF_A0 + c];
        for (int k = 0; k < 3; ++k)
            for (int c = 0; c < 6; ++c) {
                s.a[k][i][c] = o[OFF_A + 6 * k + c];
                s.p[k][i][c] = o[OFF_P + 6 * k + c];
                s.beta[k][i][c] = o[OFF_BETA + 6 * k + c];
                s.lam_k0[k][i][c] = o[OFF_LK0 + 6 * k + c];
                s.lam_jk[k][i][c] = o[OFF_LJK + 6 * k + c];
            }
        for (int m = 0; m < 16; ++m) s.e[i][m] = o[OFF_E + m];
    }
}
}  // namespace

Eigen::VectorXd pack_state(const SliceState& s) {
    Eigen::VectorXd v;
    pack_blocks(s, v);
    return v;
}

SliceState unpack_state(const Grid& g, const Eigen::VectorXd& v) {
    SliceState s(g);
    unpack_blocks(s, v);
    return s;
}

Eigen::VectorXd pack_tangent(const SliceTangent& t) {
    Eigen::VectorXd v;
    pack_blocks(t, v);
    return v;
}

SliceTangent unpack_tangent(const Grid& g, const Eigen::VectorXd& v) {
    SliceTangent t(g);
    unpack_blocks(t, v);
    return t;
}

double tangent_norm(const SliceTangent& t) {
    double s = 0.0;
    for (long i = 0; i < t.g.size(); ++i) {
        s += dot6(t.a0[i], t.a0[i]);
        for (int k = 0; k < 3; ++k)
            s += dot6(t.a[k][i], t.a[k][i]) + dot6(t.p[k][i], t.p[k][i]) +
                 dot6(t.beta[k][i], t.beta[k][i]) + dot6(t.lam_k0[k][i], t.lam_k0[k][i]) +
                 dot6(t.lam_jk[k][i], t.lam_jk[k][i]);
        for (int m = 0; m < 16; ++m) s += t.e[i][m] * t.e[i][m];
    }
    return std::sqrt(s);
}

SliceTangent tangent_axpy(const SliceTangent& x, double c, const SliceTangent& y) {
    if (!(x.g == y.g)) throw ConfigError("tangent grids differ");
    SliceTangent r = x;
    for (long i = 0; i < r.g.size(); ++i) {
        r.a0[i] += c * y.a0[i];
        for (int k = 0; k < 3; ++k) {
            r.a[k][i] += c * y.a[k][i];
            r.p[k][i] += c * y.p[k][i];
            r.beta[k][i] += c * y.beta[k][i];
            r.lam_k0[k][i] += c * y.lam_k0[k][i];
            r.lam_jk[k][i] += c * y.lam_jk[k][i];
        }
        for (int m = 0; m < 16; ++m) r.e[i][m] += c * y.e[i][m];
    }
    return r;
}

double tangent_dot(const SliceTangent& x, const SliceTangent& y) {
    double s = 0.0;
    for (long i = 0; i < x.g.size(); ++i) {
        s += dot6(x.a0[i], y.a0[i]);
        for (int k = 0; k < 3; ++k)
            s += dot6(x.a[k][i], y.a[k][i]) + dot6(x.p[k][i], y.p[k][i]) +
                 dot6(x.beta[k][i], y.beta[k][i]) + dot6(x.lam_k0[k][i], y.lam_k0[k][i]) +
                 dot6(x.lam_jk[k][i], y.lam_jk[k][i]);
        for (int m = 0; m < 16; ++m) s += x.e[i][m] * y.e[i][m];
    }
    return s;
}

SliceState state_shift(const SliceState& s, const SliceTangent& X, double t) {
    if (!(s.g == X.g)) throw ConfigError("state and tangent grids differ");
    SliceState r = s;
    for (long i = 0; i < r.g.size(); ++i) {
        r.a0[i] += t * X.a0[i];
        for (int k = 0; k < 3; ++k) {
            r.a[k][i] += t * X.a[k][i];
            r.p[k][i] += t * X.p[k][i];
            r.beta[k][i] += t * X.beta[k][i];
            r.lam_k0[k][i] += t * X.lam_k0[k][i];
            r.lam_jk[k][i] += t * X.lam_jk[k][i];
        }
        for (int m = 0; m < 16; ++m) r.e[i][m] += t * X.e[i][m];
    }
    return r;
}

Alg frame_wedge(const TetradPoint& t, int mu, int nu) {
    Alg w;
    for (int c = 0; c < 6; ++c) {
        int I = PAIR_I[c], J = PAIR_J[c];
        w.c[c] = 0.5 * t.eps *
                 (m4(t.frame, mu, I) * m4(t.frame, nu, J) - m4(t.frame, mu, J) * m4(t.frame, nu, I));
    }
    return w;
}

Eigen::Matrix<double, 6, 16> wedge_jacobian(const TetradPoint& t, int mu, int nu) {
    Eigen::Matrix<double, 6, 16> D = Eigen::Matrix<double, 6, 16>::Zero();
    const Alg w = frame_wedge(t, mu, nu);
    for (int c = 0; c < 6; ++c) {
        int I = PAIR_I[c], J = PAIR_J[c];
        // product rule on the frame entries
        D(c, 4 * mu + I) += 0.5 * t.eps * m4(t.frame, nu, J);
        D(c, 4 * mu + J) -= 0.5 * t.eps * m4(t.frame, nu, I);
        D(c, 4 * nu + J) += 0.5 * t.eps * m4(t.frame, mu, I);
        D(c, 4 * nu + I) -= 0.5 * t.eps * m4(t.frame, mu, J);
        // eps = |det coframe| varies as -eps * coframe^M_rho per frame entry
        for (int rho = 0; rho < 4; ++rho)
            for (int M = 0; M < 4; ++M) D(c, 4 * rho + M) -= m4(t.coframe, M, rho) * w.c[c];
    }
    return D;
}

std::vector<TetradPoint> slice_tetrads(const SliceState& s) {
    const long n = s.g.size();
    std::vector<TetradPoint> t(static_cast<size_t>(n));
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) t[static_cast<size_t>(i)] = tetrad_point(s.e[i]);
    return t;
}

// The four density contributions at one site, in the order p-term, beta-term,
// lam_k0-term, lam_jk-term. `cov_a0[k]` and `F[s]` are evaluated fields.
namespace {
struct DensityTerms {
    double t1, t2, t3, t4;
};

DensityTerms density_at(const SliceState& s, const std::vector<TetradPoint>& tp,
                        const std::array<Field<Alg>, 3>& cov_a0, const std::array<Field<Alg>, 3>& F,
                        long i) {
    DensityTerms d{0, 0, 0, 0};
    const TetradPoint& t = tp[static_cast<size_t>(i)];
    for (int k = 0; k < 3; ++k) {
        d.t1 += 2.0 * dot6(s.p[k][i], cov_a0[k][i] - 2.0 * s.lam_k0[k][i]);
        d.t3 += 4.0 * dot6(s.lam_k0[k][i], frame_wedge(t, 0, k + 1));
    }
    for (int sp = 0; sp < 3; ++sp) {
        int j = SPAIR_J[sp], k = SPAIR_K[sp];
        d.t2 += 4.0 * dot6(s.beta[sp][i], F[sp][i] - s.lam_jk[sp][i]);
        d.t4 += 4.0 * dot6(s.lam_jk[sp][i], frame_wedge(t, j + 1, k + 1));
    }
    return d;
}

std::array<Field<Alg>, 3> covariant_a0(const SliceState& s) {
    std::array<Field<Alg>, 3> c;
    for (int k = 0; k < 3; ++k) c[k] = covariant(s.a[k], s.a0, k);
    return c;
}

}  // namespace

std::array<Field<Alg>, 3> curvature_spairs(const SliceState& s) {
    std::array<Field<Alg>, 3> F;
    for (int sp = 0; sp < 3; ++sp)
        F[sp] = field_strength(s.a[SPAIR_J[sp]], s.a[SPAIR_K[sp]], SPAIR_J[sp], SPAIR_K[sp]);
    return F;
}

double extended_hamiltonian(const SliceState& s) {
    const auto tp = slice_tetrads(s);
    const auto cov = covariant_a0(s);
    const auto F = curvature_spairs(s);
    double sum = 0.0;
#pragma omp parallel for reduction(+ : sum) schedule(static)
    for (long i = 0; i < s.g.size(); ++i) {
        DensityTerms d = density_at(s, tp, cov, F, i);
        sum += d.t1 + d.t2 + d.t3 + d.t4;
    }
    return s.g.cell() * sum;
}

double hamiltonian_relative(const SliceState& s) {
    const auto tp = slice_tetrads(s);
    const auto cov = covariant_a0(s);
    const auto F = curvature_spairs(s);
    double sum = 0.0, mag = 0.0;
#pragma omp parallel for reduction(+ : sum, mag) schedule(static)
    for (long i = 0; i < s.g.size(); ++i) {
        DensityTerms d = density_at(s, tp, cov, F, i);
        sum += d.t1 + d.t2 + d.t3 + d.t4;
        mag += std::fabs(d.t1) + std::fabs(d.t2) + std::fabs(d.t3) + std::fabs(d.t4);
    }
    if (mag < 1e-300) return 0.0;
    return std::fabs(sum) / mag;
}

SliceTangent hamiltonian_gradient(const SliceState& s) {
    const Grid& g = s.g;
    const double vol = g.cell();
    const auto tp = slice_tetrads(s);
    const auto cov = covariant_a0(s);
    const auto F = curvature_spairs(s);
    SliceTangent grad(g);

    // a0: the p-divergence, by the exact pairing transposition of D_k.
    Field<Alg> c1(g, Alg{});
    for (int k = 0; k < 3; ++k) {
        Field<Alg> d = covariant_dual(s.a[k], s.p[k], k);
        for (long i = 0; i < g.size(); ++i) c1[i] += d[i];
    }
#pragma omp parallel for schedule(static)
    for (long i = 0; i < g.size(); ++i) {
        grad.a0[i] = -2.0 * vol * c1[i];

        const TetradPoint& t = tp[static_cast<size_t>(i)];
        for (int k = 0; k < 3; ++k) {
            grad.p[k][i] = 2.0 * vol * (cov[k][i] - 2.0 * s.lam_k0[k][i]);
            grad.lam_k0[k][i] = 4.0 * vol * (frame_wedge(t, 0, k + 1) - s.p[k][i]);
        }
        for (int sp = 0; sp < 3; ++sp) {
            int j = SPAIR_J[sp], k = SPAIR_K[sp];
            grad.beta[sp][i] = 4.0 * vol * (F[sp][i] - s.lam_jk[sp][i]);
            grad.lam_jk[sp][i] = 4.0 * vol * (frame_wedge(t, j + 1, k + 1) - s.beta[sp][i]);
        }
    }

    // a_m: -4 sum_j D_j^dual beta^{jm} + 2 coad(a0, p^m).
    for (int m = 0; m < 3; ++m) {
        Field<Alg> acc(g, Alg{});
        for (int j = 0; j < 3; ++j) {
            if (j == m) continue;
            int sp = spair_index(j, m);
            double sg = spair_sign(j, m);
            Field<Alg> bjm(g);
            for (long i = 0; i < g.size(); ++i) bjm[i] = sg * s.beta[sp][i];
            Field<Alg> d = covariant_dual(s.a[j], bjm, j);
            for (long i = 0; i < g.size(); ++i) acc[i] += d[i];
        }
#pragma omp parallel for schedule(static)
        for (long i = 0; i < g.size(); ++i)
            grad.a[m][i] = vol * (-4.0 * acc[i] + 2.0 * coad(s.a0[i], s.p[m][i]));
    }

    // frame: 2 eps (lam-frame contractions) minus the coframe times the
    // e-carrying part of the density.
#pragma omp parallel for schedule(static)
    for (long i = 0; i < g.size(); ++i) {
        const TetradPoint& t = tp[static_cast<size_t>(i)];
        double E = 0.0;
        for (int k = 0; k < 3; ++k) E += 4.0 * dot6(s.lam_k0[k][i], frame_wedge(t, 0, k + 1));
        for (int sp = 0; sp < 3; ++sp)
            E += 4.0 * dot6(s.lam_jk[sp][i], frame_wedge(t, SPAIR_J[sp] + 1, SPAIR_K[sp] + 1));

        Mat4 G{};
        for (int M = 0; M < 4; ++M) {
            double g0 = 0.0;
            for (int k = 0; k < 3; ++k)
                for (int J = 0; J < 4; ++J)
                    g0 += s.lam_k0[k][i].full(M, J) * m4(t.frame, k + 1, J);
            m4(G, 0, M) = vol * (2.0 * t.eps * g0 - m4(t.coframe, M, 0) * E);
            for (int m = 0; m < 3; ++m) {
                double gm = 0.0;
                for (int k = 0; k < 3; ++k) {
                    if (k == m) continue;
                    double sg = spair_sign(m, k);
                    int sp = spair_index(m, k);
                    for (int J = 0; J < 4; ++J)
                        gm += sg * s.lam_jk[sp][i].full(M, J) * m4(t.frame, k + 1, J);
                }
                for (int J = 0; J < 4; ++J)
                    gm -= s.lam_k0[m][i].full(M, J) * m4(t.frame, 0, J);
                m4(G, m + 1, M) = vol * (2.0 * t.eps * gm - m4(t.coframe, M, m + 1) * E);
            }
        }
        grad.e[i] = G;
    }
    return grad;
}

ConstraintResiduals constraint_residuals(const SliceState& s) {
    const Grid& g = s.g;
    const auto tp = slice_tetrads(s);
    const auto F = curvature_spairs(s);
    ConstraintResiduals r{Field<Alg>(g, Alg{}),
                          {Field<Alg>(g), Field<Alg>(g), Field<Alg>(g)},
                          {Field<Alg>(g), Field<Alg>(g), Field<Alg>(g)},
                          {Field<Alg>(g), Field<Alg>(g), Field<Alg>(g)},
                          Field<Vec4>(g),
                          {Field<Vec4>(g), Field<Vec4>(g), Field<Vec4>(g)}};
    for (int k = 0; k < 3; ++k) {
        Field<Alg> d = covariant_dual(s.a[k], s.p[k], k);
        for (long i = 0; i < g.size(); ++i) r.c1[i] += d[i];
    }
#pragma omp parallel for schedule(static)
    for (long i = 0; i < g.size(); ++i) {
        const TetradPoint& t = tp[static_cast<size_t>(i)];
        for (int k = 0; k < 3; ++k) r.c3[k][i] = s.p[k][i] - frame_wedge(t, 0, k + 1);
        for (int sp = 0; sp < 3; ++sp) {
            r.c2[sp][i] = F[sp][i] - s.lam_jk[sp][i];
            r.c4[sp][i] = s.beta[sp][i] - frame_wedge(t, SPAIR_J[sp] + 1, SPAIR_K[sp] + 1);
        }
        Vec4 c5{0, 0, 0, 0};
        for (int J = 0; J < 4; ++J)
            for (int k = 0; k < 3; ++k)
                for (int I = 0; I < 4; ++I)
                    c5[J] += m4(t.frame, k + 1, I) * s.lam_k0[k][i].full(I, J);
        r.c5[i] = c5;
        for (int k = 0; k < 3; ++k) {
            Vec4 c6{0, 0, 0, 0};
            for (int I = 0; I < 4; ++I) {
                double v = 0.0;
                for (int J = 0; J < 4; ++J) v += m4(t.frame, 0, J) * s.lam_k0[k][i].full(I, J);
                for (int j = 0; j < 3; ++j) {
                    if (j == k) continue;
                    double sg = spair_sign(k, j);
                    int sp = spair_index(k, j);
                    for (int J = 0; J < 4; ++J)
                        v -= m4(t.frame, j + 1, J) * (sg * s.lam_jk[sp][i].full(I, J));
                }
                c6[I] = v;
            }
            r.c6[k][i] = c6;
        }
    }
    auto amax = [](double& m, double v) {
        v = std::fabs(v);
        if (v > m) m = v;
    };
    for (long i = 0; i < g.size(); ++i) {
        for (int c = 0; c < 6; ++c) amax(r.family_max[0], r.c1[i][c]);
        for (int k = 0; k < 3; ++k)
            for (int c = 0; c < 6; ++c) {
                amax(r.family_max[1], r.c2[k][i][c]);
                amax(r.family_max[2], r.c3[k][i][c]);
                amax(r.family_max[3], r.c4[k][i][c]);
            }
        for (int J = 0; J < 4; ++J) amax(r.family_max[4], r.c5[i][J]);
        for (int k = 0; k < 3; ++k)
            for (int I = 0; I < 4; ++I) amax(r.family_max[5], r.c6[k][i][I]);
    }
    r.max_all = 0.0;
    for (double v : r.family_max) r.max_all = std::max(r.max_all, v);
    return r;
}

SliceState solve_constraints(const Grid& g, const std::array<Field<Alg>, 3>& a,
                             const Field<Mat4>& e, const std::array<Field<Alg>, 3>& lam_k0,
                             const Field<Alg>& a0) {
    SliceState s(g);
    s.a = a;
    s.e = e;
    s.lam_k0 = lam_k0;
    s.a0 = a0;
    const auto tp = slice_tetrads(s);
    const auto F = curvature_spairs(s);
#pragma omp parallel for schedule(static)
    for (long i = 0; i < g.size(); ++i) {
        const TetradPoint& t = tp[static_cast<size_t>(i)];
        for (int k = 0; k < 3; ++k) s.p[k][i] = frame_wedge(t, 0, k + 1);
        for (int sp = 0; sp < 3; ++sp) {
            s.beta[sp][i] = frame_wedge(t, SPAIR_J[sp] + 1, SPAIR_K[sp] + 1);
            s.lam_jk[sp][i] = F[sp][i];
        }
    }
    return s;
}

SliceState solve_constraints(const SliceState& s) {
    return solve_constraints(s.g, s.a, s.e, s.lam_k0, s.a0);
}

double omega_value(const SliceState& s, const SliceTangent& X, const SliceTangent& Y) {
    if (!(s.g == X.g) || !(s.g == Y.g)) throw ConfigError("omega: grid mismatch");
    double sum = 0.0;
#pragma omp parallel for reduction(+ : sum) schedule(static)
    for (long i = 0; i < s.g.size(); ++i)
        for (int k = 0; k < 3; ++k)
            sum += dot6(X.p[k][i], Y.a[k][i]) - dot6(Y.p[k][i], X.a[k][i]);
    return s.g.cell() * sum;
}

Eigen::MatrixXd build_omega_dense(const Grid& g) {
    if (g.size() > 16) throw ConfigError("dense form matrix is restricted to tiny grids");
    const long dim = g.size() * SLICE_COMPONENTS;
    SliceState s(g);
    for (long i = 0; i < g.size(); ++i)
        for (int d = 0; d < 4; ++d) m4(s.e[i], d, d) = 1.0;
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(dim, dim);
    std::vector<SliceTangent> basis;
    basis.reserve(static_cast<size_t>(dim));
    for (long j = 0; j < dim; ++j) {
        Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
        v[j] = 1.0;
        basis.push_back(unpack_tangent(g, v));
    }
    for (long i = 0; i < dim; ++i)
        for (long j = i + 1; j < dim; ++j) {
            double w = omega_value(s, basis[static_cast<size_t>(i)], basis[static_cast<size_t>(j)]);
            W(i, j) = w;
            W(j, i) = -w;
        }
    return W;
}

PresymplecticSystem palatini_system(const Grid& g) {
    auto W = std::make_shared<Eigen::MatrixXd>(build_omega_dense(g));
    PresymplecticSystem sys;
    sys.dim = static_cast<int>(g.size() * SLICE_COMPONENTS);
    sys.omega = [W](const Eigen::VectorXd&) { return *W; };
    sys.H = [g](const Eigen::VectorXd& x) { return extended_hamiltonian(unpack_state(g, x)); };
    sys.gradH = [g](const Eigen::VectorXd& x) {
        return pack_tangent(hamiltonian_gradient(unpack_state(g, x)));
    };
    return sys;
}

SliceTangent evolution_vector(const SliceState& s) {
    const Grid& g = s.g;
    const auto tp = slice_tetrads(s);
    const auto cov = covariant_a0(s);
    SliceTangent X(g);
    for (int k = 0; k < 3; ++k) {
#pragma omp parallel for schedule(static)
        for (long i = 0; i < g.size(); ++i) X.a[k][i] = cov[k][i] - 2.0 * s.lam_k0[k][i];

        Field<Alg> acc(g, Alg{});
        for (int j = 0; j < 3; ++j) {
            if (j == k) continue;
            Field<Alg> wjk(g);
            for (long i = 0; i < g.size(); ++i)
                wjk[i] = frame_wedge(tp[static_cast<size_t>(i)], j + 1, k + 1);
            Field<Alg> d = covariant_dual(s.a[j], wjk, j);
            for (long i = 0; i < g.size(); ++i) acc[i] += d[i];
        }
#pragma omp parallel for schedule(static)
        for (long i = 0; i < g.size(); ++i)
            X.p[k][i] = -acc[i] - coad(s.a0[i], s.p[k][i]);
    }
    return X;
}

SliceTangent canonical_flow(const SliceState& s) {
    const Grid& g = s.g;
    SliceTangent G(g);
    SliceTangent gr = hamiltonian_gradient(s);
    const double inv = 1.0 / g.cell();
    for (int k = 0; k < 3; ++k) {
#pragma omp parallel for schedule(static)
        for (long i = 0; i < g.size(); ++i) {
            for (int c = 0; c < 6; ++c) {
                G.a[k][i].c[c] = -inv * gr.p[k][i].c[c];
                G.p[k][i].c[c] = inv * gr.a[k][i].c[c];
            }
        }
    }
    return G;
}

namespace {
// One Gauss-Newton frame recovery: fit the wedge images to the target p.
// Returns the final residual norm relative to the target scale.
double recover_frame_site(Mat4& frame, const std::array<Alg, 3>& ptarget) {
    double scale = 1.0;
    for (int k = 0; k < 3; ++k) scale = std::max(scale, norm6(ptarget[k]));
    for (int iter = 0; iter < 8; ++iter) {
        TetradPoint t = tetrad_point(frame);
        Eigen::VectorXd r(18);
        Eigen::MatrixXd J(18, 16);
        for (int k = 0; k < 3; ++k) {
            Alg w = frame_wedge(t, 0, k + 1);
            for (int c = 0; c < 6; ++c) r[6 * k + c] = w.c[c] - ptarget[k].c[c];
            J.block<6, 16>(6 * k, 0) = wedge_jacobian(t, 0, k + 1);
        }
        double rn = r.norm();
        if (rn <= 1e-14 * scale) return rn / scale;
        // Minimum-norm step: the wedge jacobian has a four dimensional kernel
        // (lapse rescale and shifts), so plain QR would pick an arbitrary
        // pivot-dependent representative that may jump between nearby sites.
        Eigen::VectorXd step = J.completeOrthogonalDecomposition().solve(-r);
        for (int m = 0; m < 16; ++m) frame[m] += step[m];
    }
    TetradPoint t = tetrad_point(frame);
    double rn = 0.0;
    for (int k = 0; k < 3; ++k) rn += dot6(frame_wedge(t, 0, k + 1) - ptarget[k],
                                           frame_wedge(t, 0, k + 1) - ptarget[k]);
    return std::sqrt(rn) / scale;
}
}  // namespace

Trajectory evolve(const SliceState& s0, const Field<Alg>& a0_gauge, int steps, double ds,
                  double drift_bound, bool keep_states) {
    Trajectory out;
    SliceState cur = s0;
    cur.a0 = a0_gauge;
    out.states.push_back(cur);
    const Grid& g = cur.g;

    // Re-solve the algebraic blocks around the evolved pair (a, p): the frame
    // is re-fit to p in least squares (warm start from the stored frame), the
    // spatial wedges and the curvature multipliers are recomputed from it and
    // from the connection.  The evolved momentum itself is kept; overwriting
    // it with the fitted wedge would feed the fit displacement back into the
    // divergence constraint.  Returns the relative wedge defect.
    auto complete = [&g](SliceState& st) {
        double recovery = 0.0;
#pragma omp parallel for reduction(max : recovery) schedule(static)
        for (long i = 0; i < g.size(); ++i) {
            std::array<Alg, 3> pt{st.p[0][i], st.p[1][i], st.p[2][i]};
            Mat4 f = st.e[i];
            double r = recover_frame_site(f, pt);
            st.e[i] = f;
            recovery = std::max(recovery, r);
        }
        const auto tp = slice_tetrads(st);
        const auto F = curvature_spairs(st);
#pragma omp parallel for schedule(static)
        for (long i = 0; i < g.size(); ++i)
            for (int sp = 0; sp < 3; ++sp) {
                st.beta[sp][i] =
                    frame_wedge(tp[static_cast<size_t>(i)], SPAIR_J[sp] + 1, SPAIR_K[sp] + 1);
                st.lam_jk[sp][i] = F[sp][i];
            }
        return recovery;
    };

    auto shift_ap = [&g](const SliceState& base, const SliceTangent& X, double c) {
        SliceState st = base;
        for (int k = 0; k < 3; ++k)
            for (long i = 0; i < g.size(); ++i) {
                st.a[k][i] += c * X.a[k][i];
                st.p[k][i] += c * X.p[k][i];
            }
        return st;
    };

    for (int step = 0; step < steps; ++step) {
        // classical four-stage step on (a, p); every stage is evaluated on a
        // state whose dependent blocks were re-solved around the stage pair
        SliceTangent k1 = evolution_vector(cur);
        SliceState s2 = shift_ap(cur, k1, 0.5 * ds);
        complete(s2);
        SliceTangent k2 = evolution_vector(s2);
        SliceState s3 = shift_ap(cur, k2, 0.5 * ds);
        complete(s3);
        SliceTangent k3 = evolution_vector(s3);
        SliceState s4 = shift_ap(cur, k3, ds);
        complete(s4);
        SliceTangent k4 = evolution_vector(s4);

        SliceState next = cur;
        for (int k = 0; k < 3; ++k)
            for (long i = 0; i < g.size(); ++i) {
                next.a[k][i] += (ds / 6.0) * (k1.a[k][i] + 2.0 * k2.a[k][i] + 2.0 * k3.a[k][i] + k4.a[k][i]);
                next.p[k][i] += (ds / 6.0) * (k1.p[k][i] + 2.0 * k2.p[k][i] + 2.0 * k3.p[k][i] + k4.p[k][i]);
            }
        double recovery = complete(next);

        ConstraintResiduals cr = constraint_residuals(next);
        out.drift.push_back({cr.family_max[0], cr.family_max[4], cr.family_max[5]});
        out.c3_recovery.push_back(recovery);
        cur = next;
        if (keep_states) out.states.push_back(cur);
        double worst = std::max({cr.family_max[0], cr.family_max[4], cr.family_max[5]});
        if (worst > drift_bound) {
            out.halted_step = step;
            break;
        }
    }
    if (!keep_states) out.states.push_back(cur);
    return out;
}

Field<Mat4> group_field(const Field<Alg>& psi) {
    Field<Mat4> L(psi.g);
#pragma omp parallel for schedule(static)
    for (long i = 0; i < psi.size(); ++i) L[i] = exp_mixed(psi[i]);
    return L;
}

namespace {
Mat4 partial_mat(const Field<Mat4>& f, int axis, long i) {
    const Grid& g = f.g;
    long ip = g.shift(i, axis, +1), im = g.shift(i, axis, -1);
    Mat4 d{};
    for (int m = 0; m < 16; ++m) d[m] = (f[ip][m] - f[im][m]) / (2.0 * g.h);
    return d;
}

// x'_{IJ} = L^K_I L^M_J x_{KM} for a lowered pair object.
Alg conj_lower(const Mat4& L, const Alg& x) {
    Mat4 X{};
    for (int c = 0; c < 6; ++c) {
        int I = PAIR_I[c], J = PAIR_J[c];
        m4(X, I, J) = x.c[c];
        m4(X, J, I) = -x.c[c];
    }
    Mat4 LX = mat_mul(mat_transpose(L), X);
    Mat4 R = mat_mul(LX, L);
    Alg r;
    for (int c = 0; c < 6; ++c) r.c[c] = 0.5 * (m4(R, PAIR_I[c], PAIR_J[c]) - m4(R, PAIR_J[c], PAIR_I[c]));
    return r;
}

// x' = L^{-1}-conjugation of a raised pair object through the mixed rep.
Alg conj_upper(const Mat4& Linv, const Mat4& L, const Alg& x) {
    Mat4 M = mixed_rep(x);
    return from_mixed(mat_mul(mat_mul(Linv, M), L));
}
}  // namespace

SliceState gauge_transform(const Field<Mat4>& L, const SliceState& s) {
    if (!(L.g == s.g)) throw ConfigError("gauge_transform: grid mismatch");
    for (long i = 0; i < L.size(); ++i)
        if (lorentz_defect(L[i]) > 1e-10)
            throw ConfigError("gauge_transform: matrix field is not orthogonal to tolerance");

    const Grid& g = s.g;
    SliceState r(g);
    Field<Mat4> Linv(g);
    for (long i = 0; i < g.size(); ++i) Linv[i] = lorentz_inverse(L[i]);

#pragma omp parallel for schedule(static)
    for (long i = 0; i < g.size(); ++i) {
        r.e[i] = mat_mul(s.e[i], L[i]);
        r.a0[i] = conj_upper(Linv[i], L[i], s.a0[i]);
        for (int k = 0; k < 3; ++k) {
            // connection rule: conjugation plus the inhomogeneous term
            Mat4 M = mixed_rep(s.a[k][i]);
            Mat4 hom = mat_mul(mat_mul(Linv[i], M), L[i]);
            Mat4 inh = mat_mul(Linv[i], partial_mat(L, k, i));
            Mat4 sum{};
            for (int m = 0; m < 16; ++m) sum[m] = hom[m] + inh[m];
            r.a[k][i] = from_mixed(sum);
            r.lam_k0[k][i] = conj_upper(Linv[i], L[i], s.lam_k0[k][i]);
            r.p[k][i] = conj_lower(L[i], s.p[k][i]);
        }
        for (int sp = 0; sp < 3; ++sp) r.beta[sp][i] = conj_lower(L[i], s.beta[sp][i]);
    }
    // keep C2 exact on the output: the jk multiplier follows the transformed
    // connection rather than the conjugation rule
    const auto F = curvature_spairs(r);
    for (int sp = 0; sp < 3; ++sp) r.lam_jk[sp] = F[sp];
    return r;
}

std::array<Field<Alg>, 3> induced_p(const SliceState& s, const Field<Mat4>& Xe) {
    const auto tp = slice_tetrads(s);
    std::array<Field<Alg>, 3> Xp{Field<Alg>(s.g), Field<Alg>(s.g), Field<Alg>(s.g)};
#pragma omp parallel for schedule(static)
    for (long i = 0; i < s.g.size(); ++i) {
        Eigen::Matrix<double, 16, 1> de;
        for (int m = 0; m < 16; ++m) de[m] = Xe[i][m];
        for (int k = 0; k < 3; ++k) {
            Eigen::Matrix<double, 6, 1> dp = wedge_jacobian(tp[static_cast<size_t>(i)], 0, k + 1) * de;
            for (int c = 0; c < 6; ++c) Xp[k][i][c] = dp[c];
        }
    }
    return Xp;
}

// Free coordinates per site: [a_k (18) | e (16) | lam_k0 (18)], 52 per site.
// Residual rows per site: [C1 (6) | C5 (4) | C6 (12, k-major)], 22 per site.
namespace {
constexpr int FREE_A = 0;
constexpr int FREE_E = 18;
constexpr int FREE_L = 34;
constexpr int FREE_PER_SITE = 52;
constexpr int ROW_C1 = 0;
constexpr int ROW_C5 = 6;
constexpr int ROW_C6 = 10;
constexpr int ROWS_PER_SITE = 22;

// Antisymmetric pair basis element c as a full matrix entry pair.
inline double pair_basis(int c, int I, int J) {
    if (I == PAIR_I[c] && J == PAIR_J[c]) return 1.0;
    if (I == PAIR_J[c] && J == PAIR_I[c]) return -1.0;
    return 0.0;
}
}  // namespace

Eigen::VectorXd free_constraint_values(const SliceState& s) {
    // C1 with p substituted by the wedge of the frame; C5, C6 with lam_jk
    // substituted by the curvature.
    const Grid& g = s.g;
    SliceState sub = solve_constraints(g, s.a, s.e, s.lam_k0, s.a0);
    ConstraintResiduals r = constraint_residuals(sub);
    Eigen::VectorXd v(g.size() * ROWS_PER_SITE);
    for (long i = 0; i < g.size(); ++i) {
        double* o = v.data() + i * ROWS_PER_SITE;
        for (int c = 0; c < 6; ++c) o[ROW_C1 + c] = r.c1[i][c];
        for (int J = 0; J < 4; ++J) o[ROW_C5 + J] = r.c5[i][J];
        for (int k = 0; k < 3; ++k)
            for (int I = 0; I < 4; ++I) o[ROW_C6 + 4 * k + I] = r.c6[k][i][I];
    }
    return v;
}

Eigen::SparseMatrix<double> free_constraint_jacobian(const SliceState& s) {
    const Grid& g = s.g;
    const long n = g.size();
    const double inv2h = 1.0 / (2.0 * g.h);
    const auto tp = slice_tetrads(s);
    const auto F = curvature_spairs(s);

    // wedge values and jacobians per site and spatial direction
    std::vector<std::array<Alg, 3>> pe(static_cast<size_t>(n));
    std::vector<std::array<Eigen::Matrix<double, 6, 16>, 3>> Dpe(static_cast<size_t>(n));
    for (long i = 0; i < n; ++i)
        for (int k = 0; k < 3; ++k) {
            pe[static_cast<size_t>(i)][k] = frame_wedge(tp[static_cast<size_t>(i)], 0, k + 1);
            Dpe[static_cast<size_t>(i)][k] = wedge_jacobian(tp[static_cast<size_t>(i)], 0, k + 1);
        }

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<size_t>(n) * 1400);
    auto col_a = [&](long site, int m, int c) { return site * FREE_PER_SITE + FREE_A + 6 * m + c; };
    auto col_e = [&](long site, int ent) { return site * FREE_PER_SITE + FREE_E + ent; };
    auto col_l = [&](long site, int m, int c) { return site * FREE_PER_SITE + FREE_L + 6 * m + c; };

    for (long x = 0; x < n; ++x) {
        const TetradPoint& t = tp[static_cast<size_t>(x)];
        // --- C1 rows -------------------------------------------------
        for (int k = 0; k < 3; ++k) {
            long xp = g.shift(x, k, +1), xm = g.shift(x, k, -1);
            // derivative part: wedge jacobians at the two neighbors
            for (int c = 0; c < 6; ++c)
                for (int ent = 0; ent < 16; ++ent) {
                    double dp = Dpe[static_cast<size_t>(xp)][k](c, ent);
                    double dm = Dpe[static_cast<size_t>(xm)][k](c, ent);
                    if (dp != 0.0) trip.emplace_back(x * ROWS_PER_SITE + ROW_C1 + c, col_e(xp, ent), dp * inv2h);
                    if (dm != 0.0) trip.emplace_back(x * ROWS_PER_SITE + ROW_C1 + c, col_e(xm, ent), -dm * inv2h);
                }
            // coad(a_k, pe^k): a-columns with the pair basis, e-columns chained
            for (int c = 0; c < 6; ++c) {
                Alg ec{};
                ec.c[c] = 1.0;
                Alg da = coad(ec, pe[static_cast<size_t>(x)][k]);
                for (int rr = 0; rr < 6; ++rr)
                    if (da.c[rr] != 0.0)
                        trip.emplace_back(x * ROWS_PER_SITE + ROW_C1 + rr, col_a(x, k, c), da.c[rr]);
            }
            // d coad(a_k, pe)/d e = coad(a_k, Dpe columns)
            for (int ent = 0; ent < 16; ++ent) {
                Alg dcol;
                for (int c = 0; c < 6; ++c) dcol.c[c] = Dpe[static_cast<size_t>(x)][k](c, ent);
                Alg chained = coad(s.a[k][x], dcol);
                for (int rr = 0; rr < 6; ++rr)
                    if (chained.c[rr] != 0.0)
                        trip.emplace_back(x * ROWS_PER_SITE + ROW_C1 + rr, col_e(x, ent), chained.c[rr]);
            }
        }
        // --- C5 rows -------------------------------------------------
        for (int J = 0; J < 4; ++J) {
            long row = x * ROWS_PER_SITE + ROW_C5 + J;
            for (int k = 0; k < 3; ++k) {
                for (int c = 0; c < 6; ++c) {
                    double v = 0.0;
                    for (int I = 0; I < 4; ++I) v += m4(t.frame, k + 1, I) * pair_basis(c, I, J);
                    if (v != 0.0) trip.emplace_back(row, col_l(x, k, c), v);
                }
                for (int M = 0; M < 4; ++M) {
                    double v = s.lam_k0[k][x].full(M, J);
                    if (v != 0.0) trip.emplace_back(row, col_e(x, 4 * (k + 1) + M), v);
                }
            }
        }
        // --- C6 rows -------------------------------------------------
        for (int k = 0; k < 3; ++k) {
            for (int I = 0; I < 4; ++I) {
                long row = x * ROWS_PER_SITE + ROW_C6 + 4 * k + I;
                // lam_k0 columns through e^0_J
                for (int c = 0; c < 6; ++c) {
                    double v = 0.0;
                    for (int J = 0; J < 4; ++J) v += m4(t.frame, 0, J) * pair_basis(c, I, J);
                    if (v != 0.0) trip.emplace_back(row, col_l(x, k, c), v);
                }
                // frame columns
                for (int M = 0; M < 4; ++M) {
                    double v0 = s.lam_k0[k][x].full(I, M);
                    if (v0 != 0.0) trip.emplace_back(row, col_e(x, 0 + M), v0);
                }
                for (int j = 0; j < 3; ++j) {
                    if (j == k) continue;
                    double sg = spair_sign(k, j);
                    int sp = spair_index(k, j);
                    for (int M = 0; M < 4; ++M) {
                        // F_{kj} = sg * F[sp], and the substituted C6 carries -e^j F_{kj}
                        double v = -sg * F[sp][x].full(I, M);
                        if (v != 0.0) trip.emplace_back(row, col_e(x, 4 * (j + 1) + M), v);
                    }
                }
                // connection columns through the curvature
                for (int j = 0; j < 3; ++j) {
                    if (j == k) continue;
                    // F_{kj}(x) = d_k a_j - d_j a_k + [a_k, a_j]
                    long xkp = g.shift(x, k, +1), xkm = g.shift(x, k, -1);
                    long xjp = g.shift(x, j, +1), xjm = g.shift(x, j, -1);
                    for (int c = 0; c < 6; ++c) {
                        // row value = - sum_J f(j+1,J) dF^{IJ}_{kj}
                        // basis perturbation of a_j at x +- e_k
                        double wj = 0.0;
                        for (int J = 0; J < 4; ++J) wj += m4(t.frame, j + 1, J) * pair_basis(c, I, J);
                        if (wj != 0.0) {
                            trip.emplace_back(row, col_a(xkp, j, c), -wj * inv2h);
                            trip.emplace_back(row, col_a(xkm, j, c), wj * inv2h);
                        }
                        // basis perturbation of a_k at x +- e_j
                        if (wj != 0.0) {
                            trip.emplace_back(row, col_a(xjp, k, c), wj * inv2h);
                            trip.emplace_back(row, col_a(xjm, k, c), -wj * inv2h);
                        }
                        // commutator part, on-site
                        Alg ec{};
                        ec.c[c] = 1.0;
                        Alg dk = comm(ec, s.a[j][x]);   // d/d a_k
                        Alg dj = comm(s.a[k][x], ec);   // d/d a_j
                        double vk = 0.0, vj = 0.0;
                        for (int J = 0; J < 4; ++J) {
                            vk += m4(t.frame, j + 1, J) * dk.full(I, J);
                            vj += m4(t.frame, j + 1, J) * dj.full(I, J);
                        }
                        if (vk != 0.0) trip.emplace_back(row, col_a(x, k, c), -vk);
                        if (vj != 0.0) trip.emplace_back(row, col_a(x, j, c), -vj);
                    }
                }
            }
        }
    }
    Eigen::SparseMatrix<double> DC(n * ROWS_PER_SITE, n * FREE_PER_SITE);
    DC.setFromTriplets(trip.begin(), trip.end());
    return DC;
}

double kernel_membership(const SliceState& s, const std::array<Field<Alg>, 3>& Xp,
                         const std::array<Field<Alg>, 3>& Xa) {
    const Grid& g = s.g;
    const long n = g.size();
    const double vol = g.cell();
    const auto tp = slice_tetrads(s);

    Eigen::VectorXd w = Eigen::VectorXd::Zero(n * FREE_PER_SITE);
    double xnorm2 = 0.0;
    for (long i = 0; i < n; ++i) {
        double* o = w.data() + i * FREE_PER_SITE;
        Eigen::Matrix<double, 16, 1> we = Eigen::Matrix<double, 16, 1>::Zero();
        for (int k = 0; k < 3; ++k) {
            for (int c = 0; c < 6; ++c) o[FREE_A + 6 * k + c] = vol * Xp[k][i].c[c];
            Eigen::Matrix<double, 6, 1> xa;
            for (int c = 0; c < 6; ++c) xa[c] = Xa[k][i].c[c];
            we -= wedge_jacobian(tp[static_cast<size_t>(i)], 0, k + 1).transpose() * xa;
            xnorm2 += dot6(Xp[k][i], Xp[k][i]) + dot6(Xa[k][i], Xa[k][i]);
        }
        for (int m = 0; m < 16; ++m) o[FREE_E + m] = vol * we[m];
    }
    double wnorm = w.norm();
    double denom = std::max(wnorm, vol * std::sqrt(xnorm2));
    if (denom < 1e-300) return 0.0;

    Eigen::SparseMatrix<double> DC = free_constraint_jacobian(s);
    Eigen::SparseMatrix<double> A = DC.transpose();
    Eigen::LeastSquaresConjugateGradient<Eigen::SparseMatrix<double>> solver;
    solver.setTolerance(1e-15);
    solver.setMaxIterations(40000);
    solver.compute(A);
    Eigen::VectorXd mu = solver.solve(w);
    double res = (A * mu - w).norm();
    return res / denom;
}

double kernel_membership(const SliceState& s, const SliceTangent& X) {
    // the ambient p-block when present, the induced one otherwise
    double pn = 0.0;
    for (int k = 0; k < 3; ++k)
        for (long i = 0; i < s.g.size(); ++i) pn += dot6(X.p[k][i], X.p[k][i]);
    std::array<Field<Alg>, 3> Xp;
    if (pn > 0.0)
        Xp = X.p;
    else
        Xp = induced_p(s, X.e);
    return kernel_membership(s, Xp, X.a);
}

}  // namespace mskit
