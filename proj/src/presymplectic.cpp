#include "mskit/presymplectic.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdio>

namespace mskit {

namespace {
Eigen::VectorXd central_diff_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                      const Eigen::VectorXd& x) {
    Eigen::VectorXd g(x.size());
    for (int k = 0; k < x.size(); ++k) {
        double step = 1e-6 * std::max(1.0, std::abs(x[k]));
        Eigen::VectorXd xp = x, xm = x;
        xp[k] += step;
        xm[k] -= step;
        g[k] = (f(xp) - f(xm)) / (2.0 * step);
    }
    return g;
}

void check_antisymmetric(const Eigen::MatrixXd& w) {
    double scale = std::max(1.0, w.norm());
    if ((w + w.transpose()).norm() > 1e-12 * scale)
        throw NumericalError("form is not antisymmetric");
}
}  // namespace

Eigen::VectorXd system_gradient(const PresymplecticSystem& sys, const Eigen::VectorXd& x) {
    if (sys.gradH) return sys.gradH(x);
    return central_diff_gradient(sys.H, x);
}

Eigen::VectorXd ConstraintSet::evaluate(const Eigen::VectorXd& x) const {
    std::vector<Eigen::VectorXd> parts;
    long total = 0;
    for (const auto& lr : residuals) {
        parts.push_back(lr.r(x));
        total += parts.back().size();
    }
    Eigen::VectorXd out(total);
    long off = 0;
    for (const auto& p : parts) {
        out.segment(off, p.size()) = p;
        off += p.size();
    }
    return out;
}

double ConstraintSet::max_violation(const Eigen::VectorXd& x) const {
    if (residuals.empty()) return 0.0;
    Eigen::VectorXd v = evaluate(x);
    return v.size() ? v.cwiseAbs().maxCoeff() : 0.0;
}

Eigen::MatrixXd kernel(const Eigen::MatrixXd& omega, double tol) {
    check_antisymmetric(omega);
    const int n = static_cast<int>(omega.rows());
    if (n == 0) return Eigen::MatrixXd(0, 0);
    // divide-and-conquer beyond the size where the one-sided sweep crawls
    Eigen::VectorXd sig;
    Eigen::MatrixXd V;
    if (n > 200) {
        Eigen::BDCSVD<Eigen::MatrixXd> svd(omega, Eigen::ComputeFullV);
        sig = svd.singularValues();
        V = svd.matrixV();
    } else {
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(omega, Eigen::ComputeFullV);
        sig = svd.singularValues();
        V = svd.matrixV();
    }
    double scale = sig[0];
    if (scale == 0.0) return Eigen::MatrixXd::Identity(n, n);
    int kdim = 0;
    while (kdim < n && sig[n - 1 - kdim] <= tol * scale) ++kdim;
    int rank = n - kdim;
    if (rank % 2 != 0) throw NumericalError("antisymmetric rank came out odd");
    if (kdim > 0 && kdim < n) {
        double kept = sig[n - 1 - kdim];       // smallest retained
        double dropped = sig[n - kdim];        // largest discarded
        if (dropped > 0.0 && kept / dropped < 1e3)
            std::fprintf(stderr, "kernel: weak spectral gap at cut (%.3e vs %.3e, tol %.3e)\n",
                         dropped, kept, tol * scale);
    }
    return V.rightCols(kdim);
}

void validate_connection(const PresymplecticSystem& sys, const Connection& c,
                         const Eigen::VectorXd& x, double tol) {
    Eigen::MatrixXd P = c.P(x);
    if ((P * P - P).norm() > tol * std::max(1.0, P.norm()))
        throw NumericalError("connection projector is not idempotent");
    Eigen::MatrixXd w = sys.omega(x);
    if ((w * P).norm() > tol * std::max(1.0, w.norm()))
        throw NumericalError("connection range is not inside the kernel of the form");
}

namespace {
// Orthonormal basis of the null space of a (rows x dim) Jacobian.
Eigen::MatrixXd nullspace(const Eigen::MatrixXd& J, double tol) {
    if (J.rows() == 0) return Eigen::MatrixXd::Identity(J.cols(), J.cols());
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(J, Eigen::ComputeFullV);
    const auto& s = svd.singularValues();
    double scale = s.size() ? s[0] : 0.0;
    int rank = 0;
    for (int i = 0; i < s.size(); ++i)
        if (s[i] > tol * std::max(scale, 1.0)) ++rank;
    return svd.matrixV().rightCols(J.cols() - rank);
}

Eigen::MatrixXd constraint_jacobian(const ConstraintSet& cs, const Eigen::VectorXd& x) {
    Eigen::VectorXd r0 = cs.evaluate(x);
    Eigen::MatrixXd J(r0.size(), x.size());
    for (int k = 0; k < x.size(); ++k) {
        double step = 1e-6 * std::max(1.0, std::abs(x[k]));
        Eigen::VectorXd xp = x, xm = x;
        xp[k] += step;
        xm[k] -= step;
        J.col(k) = (cs.evaluate(xp) - cs.evaluate(xm)) / (2.0 * step);
    }
    return J;
}
}  // namespace

ConstraintSet pca_step(const PresymplecticSystem& sys, const ConstraintSet& current,
                       const std::vector<Eigen::VectorXd>& probes, double tol) {
    ConstraintSet next = current;
    next.witnesses = probes;
    int label_counter = static_cast<int>(current.residuals.size());
    for (size_t pi = 0; pi < probes.size(); ++pi) {
        const Eigen::VectorXd& x = probes[pi];
        double viol = current.max_violation(x);
        if (viol > tol)
            throw NumericalError("probe violates current constraints: " + std::to_string(viol));
        Eigen::MatrixXd w = sys.omega(x);
        Eigen::MatrixXd directions;
        if (current.residuals.empty()) {
            directions = kernel(w, tol);
        } else {
            Eigen::MatrixXd T = nullspace(constraint_jacobian(current, x), tol);
            Eigen::MatrixXd K = kernel(Eigen::MatrixXd(T.transpose() * w * T), tol);
            directions = T * K;
        }
        for (int c = 0; c < directions.cols(); ++c) {
            Eigen::VectorXd v = directions.col(c);
            std::string label = "step-residual " + std::to_string(label_counter++) + " (probe " +
                                std::to_string(pi) + ")";
            next.residuals.push_back(
                {label, [sys, v](const Eigen::VectorXd& y) {
                     Eigen::VectorXd out(1);
                     out[0] = system_gradient(sys, y).dot(v);
                     return out;
                 }});
        }
    }
    return next;
}

PcaResult run_pca(const PresymplecticSystem& sys, const std::vector<Eigen::VectorXd>& probes,
                  int max_steps, double tol) {
    if (max_steps < 1) throw ConfigError("run_pca needs max_steps >= 1");
    PcaResult res;
    for (int step = 1; step <= max_steps; ++step) {
        size_t before = res.set.residuals.size();
        ConstraintSet next = pca_step(sys, res.set, probes, tol);

        PcaStepInfo info;
        info.step = step;
        double worst = 0.0;
        for (size_t i = before; i < next.residuals.size(); ++i) {
            info.appended.push_back(next.residuals[i].label);
            for (const auto& x : probes)
                worst = std::max(worst, next.residuals[i].r(x).cwiseAbs().maxCoeff());
        }
        info.max_new_residual = worst;
        // kernel dimension seen at each probe this step
        for (const auto& x : probes) {
            Eigen::MatrixXd w = sys.omega(x);
            if (before == 0) {
                info.kernel_dims.push_back(static_cast<int>(kernel(w, tol).cols()));
            } else {
                Eigen::MatrixXd T = nullspace(constraint_jacobian(res.set, x), tol);
                info.kernel_dims.push_back(
                    static_cast<int>(kernel(Eigen::MatrixXd(T.transpose() * w * T), tol).cols()));
            }
        }
        res.history.push_back(info);
        res.steps = step;

        size_t appended = next.residuals.size() - before;
        bool nothing_new = appended == 0 || worst <= tol;
        res.set = next;
        if (nothing_new && (step >= 2 || appended == 0)) {
            res.stabilized = true;
            break;
        }
    }
    return res;
}

Eigen::VectorXd functional_gradient(const Functional& F, const Eigen::VectorXd& x) {
    if (F.grad) return F.grad(x);
    return central_diff_gradient(F.f, x);
}

BracketReport covariant_bracket_report(const PresymplecticSystem& sys, const Connection& P,
                                       const Functional& F, const Functional& G,
                                       const Eigen::VectorXd& x, double tol) {
    Eigen::MatrixXd w = sys.omega(x);
    check_antisymmetric(w);
    Eigen::VectorXd gG = functional_gradient(G, x);
    // i_X Omega = dG as a linear system: W X = -grad G
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(w);
    Eigen::VectorXd X = cod.solve(-gG);
    BracketReport rep;
    rep.solve_defect = (w * X + gG).norm() / std::max(1.0, gG.norm());
    rep.solvable = rep.solve_defect <= tol;
    if (P.P) {
        Eigen::MatrixXd proj = P.P(x);
        X = X - proj * X;  // horizontality
    }
    rep.value = functional_gradient(F, x).dot(X);
    return rep;
}

double covariant_bracket(const PresymplecticSystem& sys, const Connection& P, const Functional& F,
                         const Functional& G, const Eigen::VectorXd& x, double tol) {
    BracketReport rep = covariant_bracket_report(sys, P, F, G, x, tol);
    if (!rep.solvable)
        throw NumericalError("bracket right-hand side has a kernel component, defect " +
                             std::to_string(rep.solve_defect));
    return rep.value;
}

double connection_holonomy(const PresymplecticSystem& sys, const Connection& c,
                           const Eigen::VectorXd& x, int i, int j, double radius) {
    if (i < 0 || j < 0 || i >= sys.dim || j >= sys.dim || i == j)
        throw ConfigError("holonomy needs two distinct coordinate directions");
    // march a small square loop, keeping the step horizontal at each corner,
    // and measure how far the endpoint misses the start
    auto horiz = [&](const Eigen::VectorXd& y, const Eigen::VectorXd& d) {
        Eigen::MatrixXd proj = c.P(y);
        return Eigen::VectorXd(d - proj * d);
    };
    Eigen::VectorXd ei = Eigen::VectorXd::Unit(sys.dim, i);
    Eigen::VectorXd ej = Eigen::VectorXd::Unit(sys.dim, j);
    Eigen::VectorXd y = x;
    y += horiz(y, radius * ei);
    y += horiz(y, radius * ej);
    y += horiz(y, -radius * ei);
    y += horiz(y, -radius * ej);
    return (y - x).norm() / (radius * radius);
}

PresymplecticSystem canonical_system(int pairs, std::function<double(const Eigen::VectorXd&)> H) {
    PresymplecticSystem sys;
    sys.dim = 2 * pairs;
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(sys.dim, sys.dim);
    for (int k = 0; k < pairs; ++k) {
        w(2 * k, 2 * k + 1) = 1.0;
        w(2 * k + 1, 2 * k) = -1.0;
    }
    sys.omega = [w](const Eigen::VectorXd&) { return w; };
    sys.H = std::move(H);
    return sys;
}

PresymplecticSystem toy_qpz(std::function<double(double)> V, std::function<double(double)> dV,
                            std::function<double(double)> g, std::function<double(double)> dg) {
    PresymplecticSystem sys;
    sys.dim = 3;
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(3, 3);
    w(0, 1) = 1.0;
    w(1, 0) = -1.0;
    sys.omega = [w](const Eigen::VectorXd&) { return w; };
    sys.H = [V, g](const Eigen::VectorXd& x) { return 0.5 * x[1] * x[1] + V(x[0]) + g(x[2]); };
    sys.gradH = [dV, dg](const Eigen::VectorXd& x) {
        Eigen::VectorXd r(3);
        r << dV(x[0]), x[1], dg(x[2]);
        return r;
    };
    return sys;
}

Connection orthogonal_connection(const PresymplecticSystem& sys, double tol) {
    Connection c;
    auto omega = sys.omega;
    c.P = [omega, tol](const Eigen::VectorXd& x) {
        Eigen::MatrixXd K = kernel(omega(x), tol);
        return Eigen::MatrixXd(K * K.transpose());
    };
    return c;
}

}  // namespace mskit
