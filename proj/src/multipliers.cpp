#include "mskit/multipliers.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <random>

#include "mskit/lattice.hpp"

namespace mskit {

double extended_value(const ConstrainedProblem& p, const ExtendedPoint& x) {
    if (x.m.size() != p.dim_m || x.lam.size() != p.dim_m || x.n.size() != p.dim_n)
        throw ConfigError("extended point dimensions do not match the problem");
    return p.F(x.m) + x.lam.dot(x.m - p.Phi(x.n));
}

Eigen::VectorXd extended_gradient(const ConstrainedProblem& p, const ExtendedPoint& x) {
    if (x.m.size() != p.dim_m || x.lam.size() != p.dim_m || x.n.size() != p.dim_n)
        throw ConfigError("extended point dimensions do not match the problem");
    Eigen::VectorXd g(2 * p.dim_m + p.dim_n);
    g.segment(0, p.dim_m) = p.gradF(x.m) + x.lam;
    g.segment(p.dim_m, p.dim_m) = x.m - p.Phi(x.n);
    g.segment(2 * p.dim_m, p.dim_n) = -p.JPhi(x.n).transpose() * x.lam;
    return g;
}

namespace {
Eigen::VectorXd pack(const ExtendedPoint& x) {
    Eigen::VectorXd z(x.m.size() + x.lam.size() + x.n.size());
    z << x.m, x.lam, x.n;
    return z;
}
ExtendedPoint unpack(const ConstrainedProblem& p, const Eigen::VectorXd& z) {
    ExtendedPoint x;
    x.m = z.segment(0, p.dim_m);
    x.lam = z.segment(p.dim_m, p.dim_m);
    x.n = z.segment(2 * p.dim_m, p.dim_n);
    return x;
}
}  // namespace

SolveReport solve_critical(const ConstrainedProblem& p, const ExtendedPoint& x0, double tol) {
    const int dim = 2 * p.dim_m + p.dim_n;
    Eigen::VectorXd z = pack(x0);
    auto grad = [&](const Eigen::VectorXd& zz) { return extended_gradient(p, unpack(p, zz)); };

    SolveReport rep;
    Eigen::VectorXd g = grad(z);
    const int max_iter = 200;
    for (rep.iterations = 0; rep.iterations < max_iter; ++rep.iterations) {
        if (g.norm() <= tol) break;
        // finite-difference Jacobian of the stationarity system
        Eigen::MatrixXd J(dim, dim);
        const double fd = 1e-6;
        for (int k = 0; k < dim; ++k) {
            Eigen::VectorXd zp = z, zm = z;
            zp[k] += fd;
            zm[k] -= fd;
            J.col(k) = (grad(zp) - grad(zm)) / (2.0 * fd);
        }
        Eigen::VectorXd step = J.colPivHouseholderQr().solve(-g);
        if (!step.allFinite()) throw NumericalError("newton step is not finite");
        double t = 1.0;
        double g0 = g.squaredNorm();
        for (int ls = 0; ls < 30; ++ls) {
            Eigen::VectorXd cand = z + t * step;
            Eigen::VectorXd gc = grad(cand);
            if (gc.squaredNorm() < g0 || t < 1e-10) {
                z = cand;
                g = gc;
                break;
            }
            t *= 0.5;
        }
    }
    rep.x = unpack(p, z);
    rep.residual = g.norm();
    rep.converged = rep.residual <= tol;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(p.JPhi(rep.x.n));
    rep.sigma_min_jphi = svd.singularValues().minCoeff();
    if (rep.sigma_min_jphi <= 1e-8)
        throw NumericalError("embedding Jacobian is rank-deficient at the solution");
    return rep;
}

ScanResult scan_extrema(const ConstrainedProblem& p, int samples_per_axis, int zoom_rounds) {
    Eigen::VectorXd lo = p.n_lo, hi = p.n_hi;
    Eigen::VectorXd best_min_n, best_max_n;
    double best_min = 0.0, best_max = 0.0;

    auto value_at = [&](const Eigen::VectorXd& n) { return p.F(p.Phi(n)); };

    for (int round = 0; round <= zoom_rounds; ++round) {
        bool first = true;
        std::vector<int> idx(p.dim_n, 0);
        // dense scan of the current box (dim_n is 1 or 2 here)
        auto scan_rec = [&](auto&& self, int axis, Eigen::VectorXd& n) -> void {
            if (axis == p.dim_n) {
                double v = value_at(n);
                if (first || v < best_min) {
                    best_min = v;
                    best_min_n = n;
                }
                if (first || v > best_max) {
                    best_max = v;
                    best_max_n = n;
                }
                first = false;
                return;
            }
            for (int i = 0; i < samples_per_axis; ++i) {
                n[axis] = lo[axis] + (hi[axis] - lo[axis]) * i / (samples_per_axis - 1.0);
                self(self, axis + 1, n);
            }
        };
        Eigen::VectorXd n(p.dim_n);
        scan_rec(scan_rec, 0, n);
        if (round == zoom_rounds) break;
        // zoom both boxes jointly by scanning two separate refined boxes
        // around the incumbents; re-run with a shrunken box per extremum
        // (handled by scanning the union box spanned by both incumbents
        // padded with one grid cell)
        Eigen::VectorXd pad = (hi - lo) / (samples_per_axis - 1.0) * 2.0;
        Eigen::VectorXd nlo = best_min_n.cwiseMin(best_max_n) - pad;
        Eigen::VectorXd nhi = best_min_n.cwiseMax(best_max_n) + pad;
        // keep separate zooms honest: when incumbents are far apart the
        // union box stops shrinking, so zoom each one with its own scan
        if ((nhi - nlo).norm() > 0.5 * (hi - lo).norm()) {
            auto zoom_one = [&](Eigen::VectorXd center, bool minimize) {
                Eigen::VectorXd l = center - pad, u = center + pad;
                for (int rz = 0; rz < zoom_rounds; ++rz) {
                    bool f2 = true;
                    double best = 0.0;
                    Eigen::VectorXd bn;
                    std::vector<double> span(p.dim_n);
                    auto rec = [&](auto&& self, int axis, Eigen::VectorXd& nn) -> void {
                        if (axis == p.dim_n) {
                            double v = value_at(nn);
                            if (f2 || (minimize ? v < best : v > best)) {
                                best = v;
                                bn = nn;
                            }
                            f2 = false;
                            return;
                        }
                        for (int i = 0; i < samples_per_axis; ++i) {
                            nn[axis] = l[axis] + (u[axis] - l[axis]) * i / (samples_per_axis - 1.0);
                            self(self, axis + 1, nn);
                        }
                    };
                    Eigen::VectorXd nn(p.dim_n);
                    rec(rec, 0, nn);
                    Eigen::VectorXd cell = (u - l) / (samples_per_axis - 1.0) * 2.0;
                    l = bn - cell;
                    u = bn + cell;
                    if (minimize) {
                        best_min = best;
                        best_min_n = bn;
                    } else {
                        best_max = best;
                        best_max_n = bn;
                    }
                }
            };
            zoom_one(best_min_n, true);
            zoom_one(best_max_n, false);
            break;
        }
        lo = nlo;
        hi = nhi;
    }

    ScanResult r;
    r.minimum.n = best_min_n;
    r.minimum.m = p.Phi(best_min_n);
    r.minimum.value = best_min;
    r.maximum.n = best_max_n;
    r.maximum.m = p.Phi(best_max_n);
    r.maximum.value = best_max;
    return r;
}

namespace {
ConstrainedProblem circle_like(double cx, double cy, double rx, double ry, double fx, double fy) {
    // embedding t -> (cx + rx cos t, cy + ry sin t), objective dist^2 to (fx,fy)
    ConstrainedProblem p;
    p.dim_m = 2;
    p.dim_n = 1;
    p.F = [fx, fy](const Eigen::VectorXd& m) {
        return (m[0] - fx) * (m[0] - fx) + (m[1] - fy) * (m[1] - fy);
    };
    p.gradF = [fx, fy](const Eigen::VectorXd& m) {
        Eigen::VectorXd g(2);
        g << 2.0 * (m[0] - fx), 2.0 * (m[1] - fy);
        return g;
    };
    p.Phi = [cx, cy, rx, ry](const Eigen::VectorXd& n) {
        Eigen::VectorXd m(2);
        m << cx + rx * std::cos(n[0]), cy + ry * std::sin(n[0]);
        return m;
    };
    p.JPhi = [rx, ry](const Eigen::VectorXd& n) {
        Eigen::MatrixXd J(2, 1);
        J << -rx * std::sin(n[0]), ry * std::cos(n[0]);
        return J;
    };
    p.n_lo = Eigen::VectorXd::Constant(1, -0.5);
    p.n_hi = Eigen::VectorXd::Constant(1, 6.0);
    return p;
}

ExtendedPoint seed(std::initializer_list<double> mv, std::initializer_list<double> lv,
                   std::initializer_list<double> nv) {
    ExtendedPoint x;
    x.m = Eigen::VectorXd(static_cast<long>(mv.size()));
    int i = 0;
    for (double v : mv) x.m[i++] = v;
    x.lam = Eigen::VectorXd(static_cast<long>(lv.size()));
    i = 0;
    for (double v : lv) x.lam[i++] = v;
    x.n = Eigen::VectorXd(static_cast<long>(nv.size()));
    i = 0;
    for (double v : nv) x.n[i++] = v;
    return x;
}
}  // namespace

CatalogEntry catalog_problem(const std::string& name) {
    CatalogEntry e;
    e.name = name;
    if (name == "circle") {
        e.problem = circle_like(2.0, 0.0, 1.0, 1.0, 0.0, 0.0);
        e.seeds = {seed({1.1, 0.2}, {0, 0}, {3.0}), seed({2.9, 0.1}, {0, 0}, {0.2})};
    } else if (name == "shifted-circle") {
        e.problem = circle_like(2.0, 1.0, 1.0, 1.0, 0.0, 0.0);
        e.seeds = {seed({1.2, 0.6}, {0, 0}, {3.5}), seed({2.8, 1.4}, {0, 0}, {0.4})};
    } else if (name == "ellipse") {
        e.problem = circle_like(0.0, 0.0, 2.0, 1.0, 3.0, 0.0);
        e.seeds = {seed({1.9, 0.1}, {0, 0}, {0.1}), seed({-1.9, 0.1}, {0, 0}, {3.0})};
    } else if (name == "sphere") {
        ConstrainedProblem p;
        p.dim_m = 3;
        p.dim_n = 2;
        const Eigen::Vector3d c(0.3, -1.1, 0.7);
        p.F = [c](const Eigen::VectorXd& m) { return c.dot(m); };
        p.gradF = [c](const Eigen::VectorXd&) { return Eigen::VectorXd(c); };
        p.Phi = [](const Eigen::VectorXd& n) {
            Eigen::VectorXd m(3);
            m << std::sin(n[0]) * std::cos(n[1]), std::sin(n[0]) * std::sin(n[1]), std::cos(n[0]);
            return m;
        };
        p.JPhi = [](const Eigen::VectorXd& n) {
            Eigen::MatrixXd J(3, 2);
            double st = std::sin(n[0]), ct = std::cos(n[0]);
            double sp = std::sin(n[1]), cp = std::cos(n[1]);
            J << ct * cp, -st * sp, ct * sp, st * cp, -st, 0.0;
            return J;
        };
        p.n_lo = Eigen::VectorXd(2);
        p.n_lo << 0.05, -0.5;
        p.n_hi = Eigen::VectorXd(2);
        p.n_hi << 3.0915926535897932, 6.0;
        e.problem = p;
        Eigen::Vector3d u = c.normalized();
        // extrema at +-u; phases shifted into the fundamental box
        e.seeds = {seed({u[0], u[1], u[2]}, {0, 0, 0}, {1.2, 4.8}),
                   seed({-u[0], -u[1], -u[2]}, {0, 0, 0}, {2.0, 2.0})};
    } else if (name == "identity") {
        ConstrainedProblem p;
        p.dim_m = 2;
        p.dim_n = 2;
        p.F = [](const Eigen::VectorXd& m) {
            return (m[0] - 1.0) * (m[0] - 1.0) + (m[1] + 2.0) * (m[1] + 2.0);
        };
        p.gradF = [](const Eigen::VectorXd& m) {
            Eigen::VectorXd g(2);
            g << 2.0 * (m[0] - 1.0), 2.0 * (m[1] + 2.0);
            return g;
        };
        p.Phi = [](const Eigen::VectorXd& n) { return n; };
        p.JPhi = [](const Eigen::VectorXd&) { return Eigen::MatrixXd::Identity(2, 2); };
        p.n_lo = Eigen::VectorXd(2);
        p.n_lo << -1.0, -4.0;
        p.n_hi = Eigen::VectorXd(2);
        p.n_hi << 3.0, 0.0;
        e.problem = p;
        e.seeds = {seed({0.5, -1.5}, {0, 0}, {0.5, -1.5})};
    } else {
        throw ConfigError("unknown catalog problem: " + name);
    }
    return e;
}

std::vector<std::string> catalog_names() {
    return {"circle", "shifted-circle", "sphere", "ellipse", "identity"};
}

// --- auxiliary-field action --------------------------------------------

int coord_pair_index(int mu, int nu) {
    static constexpr int tab[4][4] = {{-1, 0, 1, 2}, {0, -1, 3, 4}, {1, 3, -1, 5}, {2, 4, 5, -1}};
    return tab[mu][nu];
}

namespace {
// Integral of P.F over the lattice, full coordinate-pair sum.
double pf_integral(const AuxFieldState& chi) {
    double pf = 0.0;
    for (int mu = 0; mu < 4; ++mu)
        for (int nu = mu + 1; nu < 4; ++nu) {
            int cp = coord_pair_index(mu, nu);
            Field<Alg> F = field_strength(chi.a[mu], chi.a[nu], mu, nu);
            const long n = chi.g.size();
            double lpf = 0.0;
#pragma omp parallel for schedule(static) reduction(+ : lpf)
            for (long i = 0; i < n; ++i) lpf += dot6(chi.P[cp][i], F[i]);
            pf += 2.0 * lpf;  // both coordinate orders of the pair
        }
    return pf * chi.g.cell();
}

// Integral of P.P, coordinate pair raised with eta, internal with s_c.
double pp_integral(const AuxFieldState& chi) {
    double pp = 0.0;
    for (int mu = 0; mu < 4; ++mu)
        for (int nu = mu + 1; nu < 4; ++nu) {
            int cp = coord_pair_index(mu, nu);
            const long n = chi.g.size();
            double lpp = 0.0;
#pragma omp parallel for schedule(static) reduction(+ : lpp)
            for (long i = 0; i < n; ++i)
                lpp += ETA[mu] * ETA[nu] * dot6_metric(chi.P[cp][i], chi.P[cp][i]);
            pp += 2.0 * lpp;
        }
    return pp * chi.g.cell();
}
}  // namespace

double ym_action_with_G(const AuxFieldState& chi, double G) {
    if (G <= 0.0) throw ConfigError("ym_action_with_G needs G > 0");
    return -(pf_integral(chi) + pp_integral(chi) / (4.0 * G));
}

double ym_action_limit(const AuxFieldState& chi) { return -pf_integral(chi); }

double topological_limit_gap(const AuxFieldState& chi, double G) {
    if (G <= 0.0) throw ConfigError("topological_limit_gap needs G > 0");
    return std::abs(pp_integral(chi)) / (4.0 * G);
}

AuxFieldState random_aux_state(const Grid& g, unsigned seed, double amplitude) {
    AuxFieldState chi(g);
    std::mt19937 rng(seed);
    std::uniform_int_distribution<int> kd(-2, 2);
    std::uniform_real_distribution<double> ph(0.0, 6.283185307179586);
    std::uniform_real_distribution<double> amp(0.3, 1.0);
    auto fill = [&](Field<Alg>& f) {
        for (int c = 0; c < 6; ++c) {
            std::array<int, 4> k{};
            for (int a = 0; a < 4; ++a) k[a] = kd(rng);
            double phase = ph(rng), A = amplitude * amp(rng);
            for (long i = 0; i < g.size(); ++i) {
                auto x = g.coords(i);
                double arg = phase;
                for (int a = 0; a < 4; ++a) arg += 6.283185307179586 * k[a] * x[a] / g.n[a];
                f[i].c[c] += A * std::cos(arg);
            }
        }
    };
    for (auto& c : chi.a) fill(c);
    for (auto& c : chi.P) fill(c);
    return chi;
}

}  // namespace mskit
