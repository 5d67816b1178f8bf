#include "mskit/palatini.hpp"

#include <cmath>
#include <random>

namespace mskit {
namespace {

constexpr double TWO_PI = 6.283185307179586476925286766559;

// Seeded smooth periodic scalar: a handful of low Fourier modes. The same
// recipe the test helpers use, kept separate so the library has no test
// dependency.
Field<double> smooth_scalar(const Grid& g, unsigned seed, double amplitude, int modes) {
    std::mt19937 rng(seed);
    std::uniform_int_distribution<int> kdist(-2, 2);
    std::uniform_real_distribution<double> ph(0.0, TWO_PI);
    std::uniform_real_distribution<double> amp(0.3, 1.0);
    Field<double> f(g, 0.0);
    for (int m = 0; m < modes; ++m) {
        std::array<int, 4> k{};
        for (int a = 0; a < g.rank; ++a) k[a] = kdist(rng);
        double phase = ph(rng), A = amplitude * amp(rng) / modes;
        for (long i = 0; i < f.size(); ++i) {
            auto x = g.coords(i);
            double arg = phase;
            for (int a = 0; a < g.rank; ++a) arg += TWO_PI * k[a] * x[a] / g.n[a];
            f[i] += A * std::cos(arg);
        }
    }
    return f;
}

Field<Alg> smooth_alg(const Grid& g, unsigned seed, double amplitude, int modes) {
    Field<Alg> f(g);
    for (int c = 0; c < 6; ++c) {
        Field<double> comp =
            smooth_scalar(g, seed * 97u + static_cast<unsigned>(c), amplitude, modes);
        for (long i = 0; i < f.size(); ++i) f[i].c[c] = comp[i];
    }
    return f;
}

Mat4 identity4() {
    Mat4 m{};
    for (int d = 0; d < 4; ++d) m4(m, d, d) = 1.0;
    return m;
}

// Frame-multiplier families at one site as a linear system on the 18
// lam_k0 components: rows 0..3 are the spatial-trace family, rows 4..15 the
// per-axis families; b carries the lam_jk source of the latter. Row and sign
// conventions match constraint_residuals exactly.
void multiplier_system(const Mat4& frame, const std::array<Alg, 3>& lam_jk,
                       Eigen::MatrixXd& A, Eigen::VectorXd& b) {
    A.setZero(16, 18);
    b.setZero(16);
    Alg basis[6];
    for (int c = 0; c < 6; ++c) basis[c].c[c] = 1.0;
    for (int J = 0; J < 4; ++J)
        for (int k = 0; k < 3; ++k)
            for (int I = 0; I < 4; ++I)
                for (int c = 0; c < 6; ++c)
                    A(J, 6 * k + c) += m4(frame, k + 1, I) * basis[c].full(I, J);
    for (int k = 0; k < 3; ++k)
        for (int I = 0; I < 4; ++I) {
            int row = 4 + 4 * k + I;
            for (int J = 0; J < 4; ++J)
                for (int c = 0; c < 6; ++c)
                    A(row, 6 * k + c) += m4(frame, 0, J) * basis[c].full(I, J);
            double src = 0.0;
            for (int j = 0; j < 3; ++j) {
                if (j == k) continue;
                double sg = spair_sign(k, j);
                int sp = spair_index(k, j);
                for (int J = 0; J < 4; ++J)
                    src += m4(frame, j + 1, J) * (sg * lam_jk[sp].full(I, J));
            }
            b(row) = src;
        }
}

std::array<Field<Alg>, 3> zero_triplet(const Grid& g) {
    return {Field<Alg>(g), Field<Alg>(g), Field<Alg>(g)};
}

}  // namespace

SliceState minkowski_slice(const Grid& g) {
    Field<Mat4> e(g, identity4());
    return solve_constraints(g, zero_triplet(g), e, zero_triplet(g), Field<Alg>(g));
}

SliceState constant_tetrad_slice(const Grid& g, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(-0.35, 0.35);
    Mat4 f = identity4();
    do {
        f = identity4();
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) m4(f, r, c) += u(rng);
    } while (std::fabs(det4(f)) < 0.2);
    Alg a0;
    for (int c = 0; c < 6; ++c) a0.c[c] = u(rng);
    return solve_constraints(g, zero_triplet(g), Field<Mat4>(g, f), zero_triplet(g),
                             Field<Alg>(g, a0));
}

SliceState curved_diag_slice(const Grid& g, double amplitude, unsigned seed) {
    // Diagonal frame diag(1/N, 1/b_1, 1/b_2, 1/b_3) with each b_k a function
    // of x_k alone. Then eps e^0^e^k depends only on the other two
    // coordinates (N cancels against eps), so the divergence family vanishes
    // site by site even though the frame varies.
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> ph(0.0, TWO_PI);
    std::uniform_int_distribution<int> kd(1, 2);
    std::array<double, 3> phase{ph(rng), ph(rng), ph(rng)};
    std::array<int, 3> mode{kd(rng), kd(rng), kd(rng)};
    Field<double> N = smooth_scalar(g, seed * 31u + 7u, amplitude, 3);
    Field<Mat4> e(g);
    for (long i = 0; i < g.size(); ++i) {
        auto x = g.coords(i);
        Mat4 f{};
        m4(f, 0, 0) = 1.0 / (1.0 + N[i]);
        for (int k = 0; k < 3; ++k) {
            double bk = 1.0 + amplitude * std::sin(TWO_PI * mode[k] * x[k] / g.n[k] + phase[k]);
            m4(f, k + 1, k + 1) = 1.0 / bk;
        }
        e[i] = f;
    }
    Alg a0;
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int c = 0; c < 6; ++c) a0.c[c] = u(rng);
    return solve_constraints(g, zero_triplet(g), e, zero_triplet(g), Field<Alg>(g, a0));
}

SliceState constant_curvature_slice(const Grid& g, double strength, double scale) {
    Mat4 f{};
    m4(f, 0, 0) = 1.0;
    for (int k = 0; k < 3; ++k) m4(f, k + 1, k + 1) = 1.0 / scale;
    // Rotation generator about axis k is the spatial pair of the other two
    // axes; the (1, 1, -1/2) weights cancel the pairwise products, which is
    // what closes the spatial-trace multiplier family.
    std::array<double, 3> q{strength, strength, -0.5 * strength};
    std::array<Field<Alg>, 3> a = zero_triplet(g);
    for (int k = 0; k < 3; ++k) {
        int j = (k + 1) % 3, l = (k + 2) % 3;
        Alg Jk;
        Jk.add_full(j + 1, l + 1, q[k]);
        a[k] = Field<Alg>(g, Jk);
    }
    SliceState s = solve_constraints(g, a, Field<Mat4>(g, f), zero_triplet(g), Field<Alg>(g));
    // The state is constant, so one least-squares solve of the sitewise
    // multiplier system serves every site; at this state it is consistent.
    Eigen::MatrixXd A;
    Eigen::VectorXd b;
    std::array<Alg, 3> lam{s.lam_jk[0][0], s.lam_jk[1][0], s.lam_jk[2][0]};
    multiplier_system(f, lam, A, b);
    Eigen::VectorXd x = A.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(b);
    std::array<Alg, 3> lk{};
    for (int k = 0; k < 3; ++k)
        for (int c = 0; c < 6; ++c) lk[k].c[c] = x(6 * k + c);
    for (int k = 0; k < 3; ++k) s.lam_k0[k] = Field<Alg>(g, lk[k]);
    return s;
}

SliceState multiplier_family_slice(const Grid& g, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(-0.35, 0.35);
    Mat4 f = identity4();
    do {
        f = identity4();
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) m4(f, r, c) += u(rng);
    } while (std::fabs(det4(f)) < 0.2);
    // With a = 0 the lam_jk source vanishes and the sitewise system is
    // homogeneous: 16 rows on 18 unknowns, so its null space is at least two
    // dimensional. A random combination gives a nontrivial constant lam_k0
    // with both multiplier families exactly zero.
    Eigen::MatrixXd A;
    Eigen::VectorXd b;
    std::array<Alg, 3> zero{};
    multiplier_system(f, zero, A, b);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
    const auto& sig = svd.singularValues();
    double cut = sig(0) * 1e-10;
    int rank = 0;
    for (int i = 0; i < sig.size(); ++i)
        if (sig(i) > cut) ++rank;
    Eigen::MatrixXd null = svd.matrixV().rightCols(18 - rank);
    Eigen::VectorXd coef(null.cols());
    std::uniform_real_distribution<double> w(-1.0, 1.0);
    for (int i = 0; i < coef.size(); ++i) coef(i) = w(rng);
    Eigen::VectorXd x = null * coef;
    double nx = x.norm();
    if (nx < 1e-12) throw NumericalError("multiplier_family_slice: degenerate null combination");
    x /= nx;
    SliceState s =
        solve_constraints(g, zero_triplet(g), Field<Mat4>(g, f), zero_triplet(g), Field<Alg>(g));
    for (int k = 0; k < 3; ++k) {
        Alg lk;
        for (int c = 0; c < 6; ++c) lk.c[c] = x(6 * k + c);
        s.lam_k0[k] = Field<Alg>(g, lk);
    }
    return s;
}

SliceState random_smooth_slice(const Grid& g, unsigned seed, double amplitude, int modes) {
    SliceState s(g);
    unsigned q = seed * 1013u;
    s.a0 = smooth_alg(g, q + 1, amplitude, modes);
    for (int k = 0; k < 3; ++k) {
        s.a[k] = smooth_alg(g, q + 10 + static_cast<unsigned>(k), amplitude, modes);
        s.p[k] = smooth_alg(g, q + 20 + static_cast<unsigned>(k), amplitude, modes);
        s.beta[k] = smooth_alg(g, q + 30 + static_cast<unsigned>(k), amplitude, modes);
        s.lam_k0[k] = smooth_alg(g, q + 40 + static_cast<unsigned>(k), amplitude, modes);
        s.lam_jk[k] = smooth_alg(g, q + 50 + static_cast<unsigned>(k), amplitude, modes);
    }
    double pert = 0.4 * amplitude;
    Field<Mat4> e(g, identity4());
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) {
            Field<double> d =
                smooth_scalar(g, q + 60 + static_cast<unsigned>(4 * r + c), pert, modes);
            for (long i = 0; i < g.size(); ++i) m4(e[i], r, c) += d[i];
        }
    s.e = e;
    return s;
}

SliceState random_solved_slice(const Grid& g, unsigned seed, double amplitude, int modes) {
    SliceState raw = random_smooth_slice(g, seed, amplitude, modes);
    return solve_constraints(g, raw.a, raw.e, raw.lam_k0, raw.a0);
}

SliceState smooth_frame_slice(const Grid& g, unsigned seed, double amplitude, bool constant_a0) {
    unsigned q = seed * 271u;
    double pert = amplitude;
    Field<Mat4> e(g);
    for (int attempt = 0; attempt < 8; ++attempt) {
        e = Field<Mat4>(g, identity4());
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) {
                Field<double> d =
                    smooth_scalar(g, q + 3 + static_cast<unsigned>(4 * r + c), pert, 3);
                for (long i = 0; i < g.size(); ++i) m4(e[i], r, c) += d[i];
            }
        double dmin = 1e30;
        for (long i = 0; i < g.size(); ++i) dmin = std::min(dmin, std::fabs(det4(e[i])));
        if (dmin > 0.1) break;
        pert *= 0.5;
    }
    Field<Alg> a0(g);
    if (constant_a0) {
        std::mt19937 rng(q + 99);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        Alg c0;
        for (int c = 0; c < 6; ++c) c0.c[c] = u(rng);
        a0 = Field<Alg>(g, c0);
    } else {
        a0 = smooth_alg(g, q + 99, 1.0, 3);
    }
    return solve_constraints(g, zero_triplet(g), e, zero_triplet(g), a0);
}

}  // namespace mskit
