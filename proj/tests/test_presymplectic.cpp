#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "doctest.h"
#include "mskit/presymplectic.hpp"

using namespace mskit;

namespace {

Eigen::MatrixXd canonical_block(int pairs) {
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(2 * pairs, 2 * pairs);
    for (int k = 0; k < pairs; ++k) {
        w(2 * k, 2 * k + 1) = 1.0;
        w(2 * k + 1, 2 * k) = -1.0;
    }
    return w;
}

// quadratic functional with closed-form gradient
Functional quadratic(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
    Functional F;
    Eigen::MatrixXd S = 0.5 * (A + A.transpose());
    F.f = [S, b](const Eigen::VectorXd& x) { return 0.5 * x.dot(S * x) + b.dot(x); };
    F.grad = [S, b](const Eigen::VectorXd& x) { return Eigen::VectorXd(S * x + b); };
    return F;
}

Functional coordinate(int k, int dim) {
    Functional F;
    F.f = [k](const Eigen::VectorXd& x) { return x[k]; };
    F.grad = [k, dim](const Eigen::VectorXd&) { return Eigen::VectorXd(Eigen::VectorXd::Unit(dim, k)); };
    return F;
}

PresymplecticSystem standard_toy() {
    // V(q) = q^2/2, g(z) = (z^2-1)^2/4 with isolated critical z in {-1,0,1}
    return toy_qpz([](double q) { return 0.5 * q * q; }, [](double q) { return q; },
                   [](double z) { return 0.25 * (z * z - 1.0) * (z * z - 1.0); },
                   [](double z) { return z * (z * z - 1.0); });
}

}  // namespace

TEST_CASE("kernel of nondegenerate and padded forms") {
    Eigen::MatrixXd w = canonical_block(3);
    CHECK(kernel(w, 1e-10).cols() == 0);

    // symplectic block plus a zero block: kernel is exactly the padding
    int m = 4;
    Eigen::MatrixXd big = Eigen::MatrixXd::Zero(6 + m, 6 + m);
    big.topLeftCorner(6, 6) = w;
    Eigen::MatrixXd K = kernel(big, 1e-10);
    CHECK(K.cols() == m);
    CHECK((K.transpose() * K - Eigen::MatrixXd::Identity(m, m)).norm() <= 1e-12);
    CHECK(K.topRows(6).norm() <= 1e-12);

    // odd dimension forces a nontrivial kernel (rank is even)
    std::mt19937 rng(2);
    std::normal_distribution<double> nd;
    Eigen::MatrixXd r = Eigen::MatrixXd::NullaryExpr(5, 5, [&] { return nd(rng); });
    Eigen::MatrixXd anti = r - r.transpose();
    Eigen::MatrixXd K5 = kernel(anti, 1e-10);
    CHECK(K5.cols() >= 1);
    CHECK((5 - K5.cols()) % 2 == 0);
    CHECK((anti * K5).norm() <= 1e-10 * anti.norm());

    Eigen::MatrixXd notanti = Eigen::MatrixXd::Identity(3, 3);
    CHECK_THROWS_AS(kernel(notanti, 1e-10), NumericalError);
}

TEST_CASE("pca leaves a nondegenerate system alone") {
    PresymplecticSystem sys = canonical_system(2, [](const Eigen::VectorXd& x) {
        return 0.5 * x.squaredNorm();
    });
    std::vector<Eigen::VectorXd> probes = {Eigen::VectorXd::Zero(4),
                                           Eigen::VectorXd::Constant(4, 0.3)};
    ConstraintSet empty;
    ConstraintSet after = pca_step(sys, empty, probes, 1e-10);
    CHECK(after.residuals.size() == 0);

    PcaResult res = run_pca(sys, probes, 5, 1e-10);
    CHECK(res.stabilized);
    CHECK(res.steps == 1);
    CHECK(res.set.residuals.empty());
}

TEST_CASE("toy degenerate system yields the hand-computed constraint") {
    PresymplecticSystem sys = standard_toy();
    Eigen::VectorXd probe(3);
    probe << 0.4, -0.2, 1.0;  // z = 1 is an isolated zero of g'
    std::vector<Eigen::VectorXd> probes = {probe};

    ConstraintSet empty;
    ConstraintSet after = pca_step(sys, empty, probes, 1e-10);
    REQUIRE(after.residuals.size() == 1);
    // the appended residual is +-g'(z); compare magnitudes at fresh states
    for (double z : {-0.7, 0.1, 2.3}) {
        Eigen::VectorXd y(3);
        y << 1.0, 2.0, z;
        double got = std::abs(after.residuals[0].r(y)[0]);
        double want = std::abs(z * (z * z - 1.0));
        CHECK(got == doctest::Approx(want).epsilon(1e-10));
    }

    PcaResult res = run_pca(sys, probes, 6, 1e-10);
    CHECK(res.stabilized);
    CHECK(res.steps == 2);
    CHECK(res.set.residuals.size() == 1);
    REQUIRE(res.history.size() == 2);
    CHECK(res.history[0].kernel_dims == std::vector<int>{1});
    CHECK(res.history[1].kernel_dims == std::vector<int>{0});
    CHECK(res.history[1].appended.empty());

    // constraint sets only grow, and witnesses satisfy the final set
    CHECK(res.set.max_violation(probe) <= 1e-10);

    // a probe off the first constraint set is rejected on the second step
    Eigen::VectorXd bad(3);
    bad << 0.0, 0.0, 0.5;
    CHECK_THROWS_AS(run_pca(sys, {bad}, 4, 1e-10), NumericalError);

    // stopping early reports non-stabilization
    PcaResult cut = run_pca(sys, probes, 1, 1e-10);
    CHECK(!cut.stabilized);
    CHECK(cut.steps == 1);
}

TEST_CASE("fully degenerate form stabilizes once the tangent pins it") {
    PresymplecticSystem sys;
    sys.dim = 2;
    sys.omega = [](const Eigen::VectorXd&) { return Eigen::MatrixXd::Zero(2, 2); };
    sys.H = [](const Eigen::VectorXd& x) { return x[0] * x[1]; };
    sys.gradH = [](const Eigen::VectorXd& x) {
        Eigen::VectorXd g(2);
        g << x[1], x[0];
        return g;
    };
    std::vector<Eigen::VectorXd> probes = {Eigen::VectorXd::Zero(2)};
    PcaResult res = run_pca(sys, probes, 5, 1e-10);
    CHECK(res.stabilized);
    CHECK(res.steps == 2);
    CHECK(res.set.residuals.size() == 2);
}

TEST_CASE("canonical bracket equals the inverse-form oracle") {
    PresymplecticSystem sys = canonical_system(2, [](const Eigen::VectorXd& x) {
        return 0.5 * x.squaredNorm();
    });
    Connection none;  // horizontality is vacuous without a kernel
    Eigen::MatrixXd w = canonical_block(2);
    Eigen::MatrixXd winv = w.inverse();

    // the canonical pair orientation
    Functional q = coordinate(0, 4), p = coordinate(1, 4);
    Eigen::VectorXd x0 = Eigen::VectorXd::Constant(4, 0.2);
    CHECK(covariant_bracket(sys, none, q, p, x0, 1e-10) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(covariant_bracket(sys, none, p, q, x0, 1e-10) == doctest::Approx(-1.0).epsilon(1e-12));

    std::mt19937 rng(7);
    std::normal_distribution<double> nd;
    for (int rep = 0; rep < 6; ++rep) {
        Eigen::MatrixXd A = Eigen::MatrixXd::NullaryExpr(4, 4, [&] { return nd(rng); });
        Eigen::MatrixXd B = Eigen::MatrixXd::NullaryExpr(4, 4, [&] { return nd(rng); });
        Eigen::VectorXd a = Eigen::VectorXd::NullaryExpr(4, [&] { return nd(rng); });
        Eigen::VectorXd b = Eigen::VectorXd::NullaryExpr(4, [&] { return nd(rng); });
        Functional F = quadratic(A, a), G = quadratic(B, b);
        Eigen::VectorXd x = Eigen::VectorXd::NullaryExpr(4, [&] { return nd(rng); });

        double got = covariant_bracket(sys, none, F, G, x, 1e-10);
        double oracle = -F.grad(x).dot(winv * G.grad(x));
        CHECK(std::abs(got - oracle) <= 1e-10 * std::max(1.0, std::abs(oracle)));

        // antisymmetry and {F,F} = 0
        double rev = covariant_bracket(sys, none, G, F, x, 1e-10);
        CHECK(std::abs(got + rev) <= 1e-10 * std::max(1.0, std::abs(got)));
        CHECK(std::abs(covariant_bracket(sys, none, F, F, x, 1e-10)) <= 1e-12);
    }
}

TEST_CASE("bracket satisfies Leibniz with finite-difference gradients") {
    PresymplecticSystem sys = canonical_system(2, [](const Eigen::VectorXd& x) {
        return 0.5 * x.squaredNorm();
    });
    Connection none;
    std::mt19937 rng(13);
    std::normal_distribution<double> nd;
    for (int rep = 0; rep < 4; ++rep) {
        Eigen::MatrixXd A = Eigen::MatrixXd::NullaryExpr(4, 4, [&] { return nd(rng); });
        Eigen::MatrixXd B = Eigen::MatrixXd::NullaryExpr(4, 4, [&] { return nd(rng); });
        Eigen::MatrixXd C = Eigen::MatrixXd::NullaryExpr(4, 4, [&] { return nd(rng); });
        Eigen::VectorXd a = Eigen::VectorXd::NullaryExpr(4, [&] { return nd(rng); });
        Functional F = quadratic(A, a), G = quadratic(B, a), H = quadratic(C, a);
        // product functional, gradient left to finite differences
        Functional FG;
        FG.f = [F, G](const Eigen::VectorXd& x) { return F.f(x) * G.f(x); };

        Eigen::VectorXd x = Eigen::VectorXd::NullaryExpr(4, [&] { return 0.5 * nd(rng); });
        double lhs = covariant_bracket(sys, none, FG, H, x, 1e-6);
        double rhs = F.f(x) * covariant_bracket(sys, none, G, H, x, 1e-10) +
                     G.f(x) * covariant_bracket(sys, none, F, H, x, 1e-10);
        CHECK(std::abs(lhs - rhs) <= 1e-8 * std::max(1.0, std::abs(rhs)));
    }
}

TEST_CASE("Jacobi identity holds in the symplectic case") {
    PresymplecticSystem sys = canonical_system(1, [](const Eigen::VectorXd& x) {
        return 0.5 * x.squaredNorm();
    });
    Connection none;
    // polynomial triple on (q,p)
    Functional F, G, H;
    F.f = [](const Eigen::VectorXd& x) { return x[0] * x[0] * x[1]; };
    G.f = [](const Eigen::VectorXd& x) { return x[1] * x[1] + 0.3 * x[0]; };
    H.f = [](const Eigen::VectorXd& x) { return std::sin(x[0]) + x[0] * x[1]; };

    auto bracket_fun = [&](const Functional& A, const Functional& B) {
        Functional r;
        r.f = [&sys, &none, A, B](const Eigen::VectorXd& y) {
            return covariant_bracket(sys, none, A, B, y, 1e-6);
        };
        return r;
    };
    Eigen::VectorXd x(2);
    x << 0.37, -0.61;
    double j = covariant_bracket(sys, none, F, bracket_fun(G, H), x, 1e-6) +
               covariant_bracket(sys, none, G, bracket_fun(H, F), x, 1e-6) +
               covariant_bracket(sys, none, H, bracket_fun(F, G), x, 1e-6);
    CHECK(std::abs(j) <= 1e-8);
}

TEST_CASE("toy bracket with horizontality") {
    PresymplecticSystem sys = standard_toy();
    Connection P = orthogonal_connection(sys, 1e-10);
    validate_connection(sys, P, Eigen::VectorXd::Zero(3), 1e-10);

    Functional q = coordinate(0, 3), p = coordinate(1, 3), z = coordinate(2, 3);
    Eigen::VectorXd x(3);
    x << 0.3, 0.8, -0.4;
    CHECK(covariant_bracket(sys, P, q, p, x, 1e-10) == doctest::Approx(1.0).epsilon(1e-12));

    // z direction lies in the kernel: strict solve refuses, the report
    // variant returns 0 with the defect flagged
    BracketReport rep = covariant_bracket_report(sys, P, q, z, x, 1e-10);
    CHECK(!rep.solvable);
    CHECK(rep.value == doctest::Approx(0.0).epsilon(1e-14));
    CHECK_THROWS_AS(covariant_bracket(sys, P, q, z, x, 1e-10), NumericalError);

    // kernel-direction perturbations of either functional do not move the
    // horizontality-fixed bracket
    std::mt19937 rng(5);
    std::normal_distribution<double> nd;
    for (int rep_i = 0; rep_i < 5; ++rep_i) {
        double c1 = nd(rng), c2 = nd(rng);
        Functional q_pert, p_pert;
        q_pert.f = [c1](const Eigen::VectorXd& y) { return y[0] + c1 * std::cos(y[2]); };
        q_pert.grad = [c1](const Eigen::VectorXd& y) {
            Eigen::VectorXd g(3);
            g << 1.0, 0.0, -c1 * std::sin(y[2]);
            return g;
        };
        p_pert.f = [c2](const Eigen::VectorXd& y) { return y[1] + c2 * y[2] * y[2]; };
        p_pert.grad = [c2](const Eigen::VectorXd& y) {
            Eigen::VectorXd g(3);
            g << 0.0, 1.0, 2.0 * c2 * y[2];
            return g;
        };
        double base = covariant_bracket(sys, P, q, p, x, 1e-10);
        double v1 = covariant_bracket_report(sys, P, q_pert, p, x, 1e-10).value;
        double v2 = covariant_bracket_report(sys, P, q, p_pert, x, 1e-10).value;
        double v3 = covariant_bracket_report(sys, P, q_pert, p_pert, x, 1e-10).value;
        CHECK(std::abs(v1 - base) <= 1e-10);
        CHECK(std::abs(v2 - base) <= 1e-10);
        CHECK(std::abs(v3 - base) <= 1e-10);
    }
}

TEST_CASE("connection validation catches broken projectors") {
    PresymplecticSystem sys = standard_toy();
    Connection half;
    half.P = [](const Eigen::VectorXd&) {
        return Eigen::MatrixXd(0.5 * Eigen::MatrixXd::Identity(3, 3));
    };
    CHECK_THROWS_AS(validate_connection(sys, half, Eigen::VectorXd::Zero(3), 1e-10),
                    NumericalError);

    Connection wrong_range;
    wrong_range.P = [](const Eigen::VectorXd&) {
        Eigen::MatrixXd P = Eigen::MatrixXd::Zero(3, 3);
        P(0, 0) = 1.0;  // projects onto q, which is not in the kernel
        return P;
    };
    CHECK_THROWS_AS(validate_connection(sys, wrong_range, Eigen::VectorXd::Zero(3), 1e-10),
                    NumericalError);
}

TEST_CASE("holonomy diagnostic: flat for constant projectors") {
    PresymplecticSystem sys = standard_toy();
    Connection P = orthogonal_connection(sys, 1e-10);
    Eigen::VectorXd x(3);
    x << 0.1, 0.2, 0.3;
    CHECK(connection_holonomy(sys, P, x, 0, 1, 1e-3) == 0.0);

    // a twisting projector field on a fully degenerate 3d system
    PresymplecticSystem flat;
    flat.dim = 3;
    flat.omega = [](const Eigen::VectorXd&) { return Eigen::MatrixXd::Zero(3, 3); };
    flat.H = [](const Eigen::VectorXd&) { return 0.0; };
    Connection twist;
    twist.P = [](const Eigen::VectorXd& y) {
        Eigen::VectorXd u(3);
        u << std::cos(y[0]), std::sin(y[0]), 0.0;
        return Eigen::MatrixXd(u * u.transpose());
    };
    CHECK(connection_holonomy(flat, twist, x, 0, 2, 1e-3) > 0.0);
    CHECK_THROWS_AS(connection_holonomy(flat, twist, x, 1, 1, 1e-3), ConfigError);
}

TEST_CASE("finite-difference gradients back up closed forms") {
    PresymplecticSystem sys = standard_toy();
    PresymplecticSystem fd_only = sys;
    fd_only.gradH = nullptr;
    std::mt19937 rng(31);
    std::normal_distribution<double> nd;
    for (int rep = 0; rep < 5; ++rep) {
        Eigen::VectorXd x = Eigen::VectorXd::NullaryExpr(3, [&] { return nd(rng); });
        Eigen::VectorXd g1 = system_gradient(sys, x);
        Eigen::VectorXd g2 = system_gradient(fd_only, x);
        CHECK((g1 - g2).norm() <= 1e-6 * std::max(1.0, g1.norm()));
    }
}
