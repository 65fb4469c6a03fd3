#pragma once

#include <limits>
#include <random>

#include "dnet/koenigs.hpp"

namespace dnet {

inline constexpr double infinity = std::numeric_limits<double>::infinity();

// Null lifts mu satisfying the Moutard equation in the light cone of frame.space().
struct IsothermicNet {
    Grid grid;
    Frame frame;
    Mat mu;

    const Space& space() const { return frame.space(); }
    Form1 eta() const { return moutard_eta(grid, mu); }
};

// m = 1/(mu_i, mu_j); infinity when |(mu_i,mu_j)| <= inf_tol |mu_i||mu_j|
inline double edge_label(const Space& s, const Vec& a, const Vec& b, double inf_tol = 1e-10) {
    double c = s.ip(a, b);
    if (std::abs(c) <= inf_tol * a.norm() * b.norm()) return infinity;
    return 1.0 / c;
}

inline Vec edge_labels(const IsothermicNet& net) {
    Vec m(net.grid.num_edges());
    for (long e = 0; e < net.grid.num_edges(); ++e) {
        auto oe = net.grid.oriented(e);
        m[e] = edge_label(net.space(), net.mu.col(oe.tail), net.mu.col(oe.head));
    }
    return m;
}

// relative label mismatch; infinity matches only infinity
inline double label_gap(double a, double b) {
    if (std::isinf(a) || std::isinf(b)) return std::isinf(a) && std::isinf(b) ? 0.0 : infinity;
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

// Cross-ratio [a,b,c,d] = D_ab D_cd / (D_bc D_da) of four points on a conic in the light cone,
// computed in the pencil of lines through a; a itself goes to its tangent line.
inline double conic_cross_ratio(const Space& s, const Vec& a, const Vec& b, const Vec& c, const Vec& d) {
    Mat U(a.size(), 4);
    U << a, b, c, d;
    Mat B = Eigen::JacobiSVD<Mat>(U, Eigen::ComputeThinU).matrixU().leftCols(3);
    Eigen::Matrix3d Gu = B.transpose() * s.metric() * B;
    Eigen::Vector3d alpha = B.transpose() * a;
    // functionals vanishing on a
    Eigen::JacobiSVD<Eigen::Matrix<double, 1, 3>> ka(alpha.transpose(), Eigen::ComputeFullV);
    Eigen::Matrix<double, 2, 3> L = ka.matrixV().rightCols(2).transpose();
    // tangent direction at a: (t, a) = 0 and t not along a
    Eigen::Vector3d ga = Gu * alpha;
    Eigen::JacobiSVD<Eigen::Matrix<double, 1, 3>> kt(ga.transpose(), Eigen::ComputeFullV);
    Eigen::Matrix<double, 3, 2> T = kt.matrixV().rightCols(2);
    Eigen::Vector3d t = (T.col(0) - T.col(0).dot(alpha) / alpha.squaredNorm() * alpha).norm() >
                                (T.col(1) - T.col(1).dot(alpha) / alpha.squaredNorm() * alpha).norm()
                            ? T.col(0)
                            : T.col(1);
    auto P = [&](const Eigen::Vector3d& x) { return Eigen::Vector2d(L * x); };
    Eigen::Vector2d pa = P(t), pb = P(B.transpose() * b), pc = P(B.transpose() * c), pd = P(B.transpose() * d);
    auto D = [](const Eigen::Vector2d& p, const Eigen::Vector2d& q) { return p[0] * q[1] - p[1] * q[0]; };
    return D(pa, pb) * D(pc, pd) / (D(pb, pc) * D(pd, pa));
}

struct IsothermicReport {
    double nullity = 0;   // |(mu,mu)| / |mu|^2
    double moutard = 0;   // per-quad diagonal parallelism
    double labels = 0;    // opposite-edge label mismatch
    double cross_ratio = 0;
    double label_separation = infinity; // min |m_ij - m_il| relative, finite quads only
    double diagonal = infinity;         // min |(mu_i,mu_k)|, |(mu_j,mu_l)| relative
    long worst_quad = -1;
    long infinite_edges = 0;
};

inline IsothermicReport isothermic_report(const IsothermicNet& net) {
    const Grid& g = net.grid;
    const Space& s = net.space();
    IsothermicReport r;
    for (long v = 0; v < g.num_vertices(); ++v)
        r.nullity = std::max(r.nullity, std::abs(s.sq(net.mu.col(v))) / net.mu.col(v).squaredNorm());
    Vec mo = moutard_residuals(g, net.mu);
    Vec m = edge_labels(net);
    for (long e = 0; e < g.num_edges(); ++e) r.infinite_edges += std::isinf(m[e]);
    double worst = -1;
    for (long q = 0; q < g.num_quads(); ++q) {
        auto v = g.oriented_quad(q).v;
        auto e = g.quad_edges(q); // ji, kj, kl, li
        double gap = std::max(label_gap(m[e[0]], m[e[2]]), label_gap(m[e[1]], m[e[3]]));
        r.moutard = std::max(r.moutard, mo[q]);
        r.labels = std::max(r.labels, gap);
        if (std::isfinite(m[e[0]]) && std::isfinite(m[e[1]])) {
            r.label_separation = std::min(r.label_separation, label_gap(m[e[0]], m[e[3]]));
            double cr = conic_cross_ratio(s, net.mu.col(v[0]), net.mu.col(v[1]), net.mu.col(v[2]), net.mu.col(v[3]));
            double want = m[e[1]] / m[e[0]];
            r.cross_ratio = std::max(r.cross_ratio, std::abs(cr - want) / std::max(1.0, std::abs(want)));
        }
        auto rel = [&](long a, long b) { return std::abs(s.ip(net.mu.col(a), net.mu.col(b))) / (net.mu.col(a).norm() * net.mu.col(b).norm()); };
        r.diagonal = std::min({r.diagonal, rel(v[0], v[2]), rel(v[1], v[3])});
        double w = std::max(mo[q], gap);
        if (w > worst) worst = w, r.worst_quad = q;
    }
    return r;
}

inline bool passes(const IsothermicReport& r, double null_tol = 1e-10, double moutard_tol = 1e-10, double label_tol = 1e-9) {
    return r.nullity <= null_tol && r.moutard <= moutard_tol && r.labels <= label_tol;
}

// mu_k = mu_i + ((mu_i, mu_l - mu_j)/(mu_l, mu_j)) (mu_l - mu_j)
inline Vec moutard_step(const Space& s, const Vec& mi, const Vec& mj, const Vec& ml, long quad = -1, double tol = 1e-12) {
    Vec d = ml - mj;
    double den = s.ip(ml, mj);
    if (std::abs(den) <= tol * ml.norm() * mj.norm()) throw Error(Errc::degeneracy, "isotropic diagonal in Moutard evolution", quad);
    return mi + s.ip(mi, d) / den * d;
}

enum class FillOrder { row_major, column_major };

// Fill a grid from values on the coordinate lines through vertex 0.
inline IsothermicNet moutard_evolve(const Frame& frame, const Grid& g, const Mat& cauchy, FillOrder order = FillOrder::row_major) {
    IsothermicNet net{g, frame, cauchy};
    const int N = g.dim();
    std::vector<long> verts(g.num_vertices());
    for (long v = 0; v < g.num_vertices(); ++v) verts[v] = v;
    auto key = [&](long v) {
        std::vector<int> c = g.coord(v);
        int sum = 0;
        for (int x : c) sum += x;
        if (order == FillOrder::column_major) std::reverse(c.begin(), c.end());
        c.insert(c.begin(), sum);
        return c;
    };
    std::stable_sort(verts.begin(), verts.end(), [&](long a, long b) { return key(a) < key(b); });
    for (long v : verts) {
        std::vector<int> axes;
        for (int a = 0; a < N; ++a)
            if (g.coord(v, a) > 0) axes.push_back(a);
        if (axes.size() < 2) continue;
        int a = order == FillOrder::row_major ? axes[0] : axes[axes.size() - 2];
        int b = order == FillOrder::row_major ? axes[1] : axes[axes.size() - 1];
        long i = g.neighbor(g.neighbor(v, a, -1), b, -1);
        long j = g.neighbor(i, a), l = g.neighbor(i, b);
        net.mu.col(v) = frame.to_lightcone(moutard_step(frame.space(), net.mu.col(i), net.mu.col(j), net.mu.col(l), g.quad_id(i, a, b)));
    }
    return net;
}

struct CauchyOptions {
    double perturbation = 0.3;
    // axis-0 edges (by their coordinate along axis 0) that get label infinity; needs a frame with p
    std::vector<int> infinite_rows;
};

// Null values on the coordinate lines through vertex 0; every other column is left zero.
inline Mat cauchy_data(const Frame& frame, const Grid& g, std::mt19937_64& rng, const CauchyOptions& opt = {}) {
    std::normal_distribution<double> n;
    std::uniform_real_distribution<double> scale(0.8, 1.2);
    const int dv = frame.space().n();
    const int dx = static_cast<int>(frame.basis().cols());
    auto random_point = [&](double sd) {
        Vec c(dx);
        for (int a = 0; a < dx; ++a) c[a] = sd * n(rng);
        return frame.from_coords(c);
    };
    Mat mu = Mat::Zero(dv, g.num_vertices());
    mu.col(0) = scale(rng) * frame.stereo_lift(random_point(0.5));
    for (int a = 0; a < g.dim(); ++a) {
        long prev = 0;
        for (long v = g.neighbor(0, a); v >= 0; prev = v, v = g.neighbor(v, a)) {
            int row = g.coord(prev, a);
            bool inf = a == 0 && std::find(opt.infinite_rows.begin(), opt.infinite_rows.end(), row) != opt.infinite_rows.end();
            if (inf) {
                // phi(x + eps nu) with nu null is orthogonal to phi(x)
                Vec u = Vec::Zero(dv);
                for (int c = 0; c + 1 < dx; ++c) u += n(rng) * frame.basis().col(c);
                Vec nu = u / std::sqrt(frame.space().sq(u)) + frame.p();
                Vec x = frame.stereo_project(mu.col(prev));
                mu.col(v) = scale(rng) * frame.stereo_lift(x + opt.perturbation * nu);
            } else {
                // step inside the q-complement: mostly R^{p,q}, timelike part damped, plus a little o
                double rho = -frame.ip(mu.col(prev), frame.q());
                Vec step = Vec::Zero(dv);
                for (int c = 0; c < dx; ++c) {
                    const Vec b = frame.basis().col(c);
                    step += (frame.space().sq(b) < 0 ? 0.25 : 1.0) * n(rng) * b;
                }
                step *= opt.perturbation * (1 + 0.6 * a) * scale(rng) * rho / std::sqrt(std::max(frame.space().sq(step), 0.05 * step.squaredNorm()));
                step += 0.1 * opt.perturbation * rho * n(rng) * frame.o();
                mu.col(v) = frame.to_lightcone(mu.col(prev) + step);
            }
        }
    }
    return mu;
}

inline IsothermicNet random_isothermic(const Frame& frame, const Grid& g, std::mt19937_64& rng, const CauchyOptions& opt = {}) {
    return moutard_evolve(frame, g, cauchy_data(frame, g, rng, opt));
}

// Gamma(t) per canonical edge: lambda = 1 - t/m on s_j, 1/lambda on s_i; exp(t eta_ji) when m is infinite.
inline std::vector<Mat> flat_connection(const IsothermicNet& net, double t, double collision_tol = 1e-12) {
    const Grid& g = net.grid;
    const Space& s = net.space();
    std::vector<Mat> out(g.num_edges());
    for (long e = 0; e < g.num_edges(); ++e) {
        auto oe = g.oriented(e);
        const Vec mi = net.mu.col(oe.tail), mj = net.mu.col(oe.head);
        double m = edge_label(s, mi, mj);
        if (std::isinf(m)) {
            out[e] = isotropic_exp(s, mj, mi, t);
            continue;
        }
        double lam = 1.0 - t / m;
        if (std::abs(lam) <= collision_tol) throw Error(Errc::spectral_collision, "spectral parameter equals an edge label", e);
        out[e] = gamma_lambda(s, mi, mj, lam);
    }
    return out;
}

// (T.Gamma)_ji = T_j Gamma_ji T_i^{-1}
inline std::vector<Mat> gauge_action(const Grid& g, const std::vector<Mat>& T, const std::vector<Mat>& gamma) {
    std::vector<Mat> out(gamma.size());
    for (long e = 0; e < g.num_edges(); ++e) {
        auto oe = g.oriented(e);
        out[e] = T[oe.head] * gamma[e] * T[oe.tail].inverse();
    }
    return out;
}

inline void check_spectral(const IsothermicNet& net, double t, double tol = 1e-9) {
    Vec m = edge_labels(net);
    for (long e = 0; e < m.size(); ++e)
        if (std::isfinite(m[e]) && std::isfinite(t) && std::abs(m[e] - t) <= tol * std::max(1.0, std::abs(t)))
            throw Error(Errc::spectral_collision, "parameter collides with edge label " + std::to_string(m[e]), e);
}

// Darboux transform mu^ with (mu, mu^) = 1/m (0 for m = infinity), seeded at vertex base.
// Finite m: transport by Gamma(m), then rescale; infinite m: vertical Moutard equation.
inline IsothermicNet darboux_transform(const IsothermicNet& net, double m, const Vec& seed, long base = 0, double tol = 1e-10) {
    const Grid& g = net.grid;
    const Space& s = net.space();
    check_spectral(net, m);
    if (!s.is_null(seed, 1e-10)) throw Error(Errc::domain, "Darboux seed is not null");
    IsothermicNet out{g, net.frame, Mat(net.mu.rows(), g.num_vertices())};
    double c0 = s.ip(net.mu.col(base), seed);
    double scale = seed.norm() * net.mu.col(base).norm();
    if (std::isinf(m)) {
        if (std::abs(c0) > tol * scale) throw Error(Errc::domain, "infinite-label seed must be orthogonal to mu at the base");
        out.mu.col(base) = seed;
    } else {
        if (std::abs(c0) <= tol * scale) throw Error(Errc::orthogonal_lines, "finite-label seed is orthogonal to mu at the base");
        out.mu.col(base) = seed / (m * c0);
    }
    for (long v : g.tree_order(base)) {
        if (v == base) continue;
        long p = g.tree_parent(v, base);
        Vec mi = net.mu.col(p), mj = net.mu.col(v), hi = out.mu.col(p);
        Vec hj;
        if (std::isinf(m)) {
            Vec d = hi - mj;
            double den = s.ip(hi, mj);
            if (std::abs(den) <= 1e-12 * hi.norm() * mj.norm()) throw Error(Errc::degeneracy, "Darboux propagation degenerates", g.edge_between(p, v));
            hj = net.frame.to_lightcone(mi + s.ip(mi, d) / den * d);
        } else {
            double mij = edge_label(s, mi, mj);
            Mat G = std::isinf(mij) ? isotropic_exp(s, mj, mi, m) : gamma_lambda(s, mi, mj, 1.0 - m / mij);
            hj = G * hi;
            double c = s.ip(mj, hj);
            if (std::abs(c) <= 1e-12 * mj.norm() * hj.norm()) throw Error(Errc::degeneracy, "Darboux propagation degenerates", g.edge_between(p, v));
            hj /= m * c;
            hj = net.frame.to_lightcone(hj);
        }
        out.mu.col(v) = hj;
    }
    return out;
}

// The net over g.stack(): level 0 = a, level 1 = b.
inline IsothermicNet stack(const IsothermicNet& a, const IsothermicNet& b) {
    Grid s = a.grid.stack();
    IsothermicNet out{s, a.frame, Mat(a.mu.rows(), s.num_vertices())};
    out.mu << a.mu, b.mu;
    return out;
}

inline IsothermicNet level(const IsothermicNet& stacked, int lv) {
    if (!stacked.grid.stacked()) throw Error(Errc::domain, "net is not stacked");
    std::vector<int> d(stacked.grid.dims().begin() + 1, stacked.grid.dims().end());
    Grid g(d);
    return {g, stacked.frame, stacked.mu.middleCols(lv * g.num_vertices(), g.num_vertices())};
}

struct Calapso {
    IsothermicNet net;
    std::vector<Mat> T;
};

// s(t) = T(t)s where T trivializes Gamma(t) with T(base) = I.
inline Calapso calapso_transform(const IsothermicNet& net, double t, long base = 0) {
    auto gamma = flat_connection(net, t);
    Calapso out{net, trivialize_connection(net.grid, gamma, base, 1e-9)};
    for (long v = 0; v < net.grid.num_vertices(); ++v) out.net.mu.col(v) = out.T[v] * net.mu.col(v);
    return out;
}

// x = stereoprojection, xdual with dxdual = pi(eta q), zero at the base.
struct ChristoffelDual {
    Mat x, xdual;
    Vec r; // -(mu, q)
};

inline ChristoffelDual christoffel_dual(const IsothermicNet& net, long base = 0) {
    const Grid& g = net.grid;
    const Frame& f = net.frame;
    ChristoffelDual out;
    out.x.resize(net.mu.rows(), g.num_vertices());
    out.r.resize(g.num_vertices());
    for (long v = 0; v < g.num_vertices(); ++v) {
        out.r[v] = -f.ip(net.mu.col(v), f.q());
        out.x.col(v) = f.stereo_project(net.mu.col(v));
    }
    Mat d(net.mu.rows(), g.num_edges());
    for (long e = 0; e < g.num_edges(); ++e) {
        auto oe = g.oriented(e);
        const Vec mi = net.mu.col(oe.tail), mj = net.mu.col(oe.head);
        d.col(e) = f.pi(f.ip(mj, f.q()) * mi - f.ip(mi, f.q()) * mj);
    }
    out.xdual = integrate_one_form(g, d, base, Vec::Zero(net.mu.rows()), 1e-9);
    return out;
}

// Moutard lift phi(xdual)/r of the dual net; it carries the same labels.
inline IsothermicNet dual_net(const IsothermicNet& net, const ChristoffelDual& cd) {
    IsothermicNet out{net.grid, net.frame, Mat(net.mu.rows(), net.grid.num_vertices())};
    for (long v = 0; v < net.grid.num_vertices(); ++v) out.mu.col(v) = net.frame.stereo_lift(cd.xdual.col(v)) / cd.r[v];
    return out;
}

struct ChristoffelReport {
    double parallel = 0;   // |sin| between dx and dxdual
    double area = 0;       // |dx ^ dxdual curly| per quad
    double scalar_residual = 0;       // |(dx, dxdual) + 2/m| relative
    double ratio = 0;      // |dxdual - r_i r_j dx| relative
};

inline ChristoffelReport christoffel_report(const IsothermicNet& net, const ChristoffelDual& cd) {
    const Grid& g = net.grid;
    const Space& s = net.space();
    ChristoffelReport r;
    Vec m = edge_labels(net);
    for (long e = 0; e < g.num_edges(); ++e) {
        auto oe = g.oriented(e);
        Vec dx = cd.x.col(oe.head) - cd.x.col(oe.tail), dd = cd.xdual.col(oe.head) - cd.xdual.col(oe.tail);
        r.parallel = std::max(r.parallel, line_distance(dx, dd));
        double want = std::isinf(m[e]) ? 0.0 : -2.0 / m[e];
        r.scalar_residual = std::max(r.scalar_residual, std::abs(s.ip(dx, dd) - want) / std::max(1.0, std::abs(want)));
        Vec rd = cd.r[oe.tail] * cd.r[oe.head] * dx;
        r.ratio = std::max(r.ratio, (dd - rd).norm() / std::max(1.0, rd.norm()));
    }
    Form2 A = curly_wedge(exterior_derivative(Form0(g, cd.x)), exterior_derivative(Form0(g, cd.xdual)));
    if (A.size()) r.area = A.values().cwiseAbs().maxCoeff();
    return r;
}

// (xhat - x, xdualhat - xdual) = -2/m and pointwise parallelism on the vertical edges of a stacked pair
struct BianchiReport {
    Vec parallel, scalar;
    double worst_parallel = 0, worst_scalar = 0;
};

inline BianchiReport bianchi_check(const IsothermicNet& stacked, const ChristoffelDual& cd, double m) {
    const Grid& s = stacked.grid;
    const long nv = s.num_vertices() / 2;
    BianchiReport r{Vec(nv), Vec(nv)};
    double want = std::isinf(m) ? 0.0 : -2.0 / m;
    for (long v = 0; v < nv; ++v) {
        Vec a = cd.x.col(nv + v) - cd.x.col(v), b = cd.xdual.col(nv + v) - cd.xdual.col(v);
        r.parallel[v] = line_distance(a, b);
        r.scalar[v] = std::abs(stacked.space().ip(a, b) - want) / std::max(1.0, std::abs(want));
    }
    r.worst_parallel = r.parallel.maxCoeff();
    r.worst_scalar = r.scalar.maxCoeff();
    return r;
}

// p(t) = c + t xi with d xi = eta c and (xi, mu) = 0
struct ConservedQuantity {
    bool ok = false;
    Vec c;
    Mat xi;
    Vec orthogonality;         // |(xi, mu)| per vertex, relative
    double parallel = 0;       // worst |Gamma(t) p_i - p_j| over sampled t
    Eigen::Vector3d poly{0, 0, 0}; // (p,p) = poly[0] + poly[1] t + poly[2] t^2
    double poly_spread = 0;    // coefficient variation across vertices
    int degree() const { return xi.size() && xi.cwiseAbs().maxCoeff() > 0 ? 1 : 0; }
};

inline ConservedQuantity special_quantity_solve(const IsothermicNet& net, const Vec& c, const Vec& xi_seed, long base = 0, double tol = 1e-8) {
    const Grid& g = net.grid;
    const Space& s = net.space();
    ConservedQuantity out;
    out.c = c;
    Mat d(net.mu.rows(), g.num_edges());
    Form1 eta = net.eta();
    for (long e = 0; e < g.num_edges(); ++e) d.col(e) = s.act(eta[e], c);
    out.xi = integrate_one_form(g, d, base, xi_seed, 1e-8);
    out.orthogonality.resize(g.num_vertices());
    double scale = std::max(1.0, out.xi.colwise().norm().maxCoeff());
    for (long v = 0; v < g.num_vertices(); ++v)
        out.orthogonality[v] = std::abs(s.ip(out.xi.col(v), net.mu.col(v))) / (scale * net.mu.col(v).norm());
    out.ok = out.orthogonality.maxCoeff() <= tol;
    if (!out.ok) return out;
    for (double t : {-1.3, -0.4, 0.35, 0.9, 1.7}) {
        auto G = flat_connection(net, t);
        for (long e = 0; e < g.num_edges(); ++e) {
            auto oe = g.oriented(e);
            Vec pi = c + t * out.xi.col(oe.tail), pj = c + t * out.xi.col(oe.head);
            out.parallel = std::max(out.parallel, (G[e] * pi - pj).norm() / std::max(1.0, pj.norm()));
        }
    }
    out.poly = {s.sq(c), 2 * s.ip(c, out.xi.col(base)), s.sq(out.xi.col(base))};
    for (long v = 0; v < g.num_vertices(); ++v) {
        Eigen::Vector3d pv{s.sq(c), 2 * s.ip(c, out.xi.col(v)), s.sq(out.xi.col(v))};
        out.poly_spread = std::max(out.poly_spread, (pv - out.poly).cwiseAbs().maxCoeff());
    }
    return out;
}

// Least-squares choice of xi at the base making (xi, mu) vanish everywhere, then solve.
inline ConservedQuantity special_quantity_fit(const IsothermicNet& net, const Vec& c, long base = 0, double tol = 1e-8) {
    const Grid& g = net.grid;
    const Space& s = net.space();
    const int n = static_cast<int>(net.mu.rows());
    ConservedQuantity zero = special_quantity_solve(net, c, Vec::Zero(n), base, infinity);
    // (xi0 + xi_v, mu_v) = 0 for all v, linear in xi0
    Mat A(g.num_vertices(), n);
    Vec b(g.num_vertices());
    for (long v = 0; v < g.num_vertices(); ++v) {
        Vec mv = net.mu.col(v) / net.mu.col(v).norm();
        A.row(v) = (s.metric() * mv).transpose();
        b[v] = -s.ip(zero.xi.col(v), mv);
    }
    Vec xi0 = A.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(b);
    return special_quantity_solve(net, c, xi0, base, tol);
}

} // namespace dnet
