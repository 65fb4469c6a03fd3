#pragma once

#include <optional>

#include "dnet/isothermic.hpp"

namespace dnet {

// Lie sphere geometry in R^{4,2}: R^{3,1} = <o,q>^perp = R^3 + <p>.
inline Frame lie_frame() { return Frame::standard({4, 2}); }

inline Vec lie_embed(const Frame& f, const Vec& x3) { return f.basis().leftCols(3) * x3; }

// coordinates (x, c) of a point x + c p of R^{3,1}
inline Vec lie_coords(const Frame& f, const Vec& v) { return f.coords(f.pi(v)); }

inline Frame redraw_frame(const Frame& f, std::mt19937_64& rng) {
    return f.transformed(Frame::random_orthogonal(f.space(), rng));
}

// Contact element net: x in R^3 and unit normals n, edge-parallel with kappa dx + dn = 0.
struct PrincipalNet {
    Grid grid;
    Mat x, n;
};

inline Vec principal_curvatures(const PrincipalNet& pn) {
    const Grid& g = pn.grid;
    Vec k(g.num_edges());
    for (long e = 0; e < g.num_edges(); ++e) {
        auto oe = g.oriented(e);
        Vec dx = pn.x.col(oe.head) - pn.x.col(oe.tail), dn = pn.n.col(oe.head) - pn.n.col(oe.tail);
        k[e] = -dn.dot(dx) / dx.squaredNorm();
    }
    return k;
}

// sigma_4/sigma_1 of the rows (x, |x|^2, 1) of a quad: zero iff concyclic
inline double circularity(const Vec& a, const Vec& b, const Vec& c, const Vec& d) {
    Mat M(4, a.size() + 2);
    int r = 0;
    double s = std::max({a.norm(), b.norm(), c.norm(), d.norm(), 1e-300});
    for (const Vec* v : {&a, &b, &c, &d}) {
        Vec u = *v / s;
        M.row(r) << u.transpose(), u.squaredNorm(), 1.0;
        ++r;
    }
    Vec sv = Eigen::JacobiSVD<Mat>(M).singularValues();
    return sv[3] / sv[0];
}

struct PrincipalReport {
    double unit = 0;     // | |n| - 1 |
    double principal = 0; // |kappa dx + dn| relative
    double circular = 0;  // worst quad circularity
};

inline PrincipalReport principal_report(const PrincipalNet& pn) {
    const Grid& g = pn.grid;
    PrincipalReport r;
    for (long v = 0; v < g.num_vertices(); ++v) r.unit = std::max(r.unit, std::abs(pn.n.col(v).norm() - 1));
    Vec k = principal_curvatures(pn);
    for (long e = 0; e < g.num_edges(); ++e) {
        auto oe = g.oriented(e);
        Vec dx = pn.x.col(oe.head) - pn.x.col(oe.tail), dn = pn.n.col(oe.head) - pn.n.col(oe.tail);
        r.principal = std::max(r.principal, (k[e] * dx + dn).norm() / std::max({dn.norm(), std::abs(k[e]) * dx.norm(), 1e-300}));
    }
    for (long q = 0; q < g.num_quads(); ++q) {
        auto v = g.oriented_quad(q).v;
        r.circular = std::max(r.circular, circularity(pn.x.col(v[0]), pn.x.col(v[1]), pn.x.col(v[2]), pn.x.col(v[3])));
    }
    return r;
}

// A Legendre map f = <y, t> with (y,q) = -1, (y,p) = 0, (t,q) = 0, (t,p) = -1, and its applicable 1-form.
// mu_plus/mu_minus hold a spanning isotropic Darboux pair when one is known.
struct OmegaNet {
    Grid grid;
    Frame frame;
    Mat y, t;
    std::optional<Form1> eta;
    Mat mu_plus, mu_minus;

    LineCongruence congruence() const {
        if (!eta) throw Error(Errc::gauge, "net carries no applicable 1-form");
        return {grid, y, t, *eta};
    }
    IsothermicNet plus_net() const {
        if (!mu_plus.size()) throw Error(Errc::domain, "net carries no isothermic pair");
        return {grid, frame, mu_plus};
    }
    IsothermicNet minus_net() const {
        if (!mu_minus.size()) throw Error(Errc::domain, "net carries no isothermic pair");
        return {grid, frame, mu_minus};
    }
};

// The sections y, t of <a, b>; fails when f^perp meets <p, q>.
inline std::pair<Vec, Vec> legendre_spans(const Frame& f, const Vec& a, const Vec& b, double tol = 1e-9) {
    Eigen::Matrix2d M;
    M << f.ip(a, f.q()), f.ip(b, f.q()), f.ip(a, f.p()), f.ip(b, f.p());
    double scale = a.norm() * b.norm() * (f.q().norm() + f.p().norm()) * (f.q().norm() + f.p().norm());
    if (std::abs(M.determinant()) <= tol * scale) throw Error(Errc::frame, "f^perp meets <p,q>; redraw the frame");
    Eigen::Vector2d cy = M.inverse() * Eigen::Vector2d(-1, 0), ct = M.inverse() * Eigen::Vector2d(0, -1);
    return {cy[0] * a + cy[1] * b, ct[0] * a + ct[1] * b};
}

inline OmegaNet legendre_net(const Grid& g, const Frame& f, const Mat& a, const Mat& b) {
    OmegaNet out{g, f, Mat(a.rows(), g.num_vertices()), Mat(a.rows(), g.num_vertices()), std::nullopt, {}, {}};
    for (long v = 0; v < g.num_vertices(); ++v) {
        auto [y, t] = legendre_spans(f, a.col(v), b.col(v));
        out.y.col(v) = y;
        out.t.col(v) = t;
    }
    return out;
}

inline OmegaNet legendre_lift(const PrincipalNet& pn, const Frame& f) {
    const Grid& g = pn.grid;
    const int n = f.space().n();
    OmegaNet out{g, f, Mat(n, g.num_vertices()), Mat(n, g.num_vertices()), std::nullopt, {}, {}};
    for (long v = 0; v < g.num_vertices(); ++v) {
        out.y.col(v) = f.stereo_lift(lie_embed(f, pn.x.col(v)));
        out.t.col(v) = lie_embed(f, pn.n.col(v)) + f.p() + pn.x.col(v).dot(pn.n.col(v)) * f.q();
    }
    return out;
}

inline PrincipalNet principal_net(const OmegaNet& net) {
    const Grid& g = net.grid;
    PrincipalNet pn{g, Mat(3, g.num_vertices()), Mat(3, g.num_vertices())};
    for (long v = 0; v < g.num_vertices(); ++v) {
        pn.x.col(v) = lie_coords(net.frame, net.y.col(v)).head(3);
        pn.n.col(v) = lie_coords(net.frame, net.t.col(v)).head(3);
    }
    return pn;
}

// Conditions for the frame: f^perp misses <p,q> and no curvature sphere is orthogonal to p or q.
struct FrameConditions {
    double transversal = 1; // smallest |det| of the (q,p) Gram against f, relative
    double sphere_q = 1, sphere_p = 1; // smallest |(s_ij, q)|, |(s_ij, p)| relative
    long worst_edge = -1;
    bool ok(double tol = 1e-9) const { return transversal > tol && sphere_q > tol && sphere_p > tol; }
};

inline FrameConditions frame_conditions(const Grid& g, const Frame& f, const Mat& a, const Mat& b) {
    FrameConditions r;
    const Vec &q = f.q(), &p = f.p();
    for (long v = 0; v < g.num_vertices(); ++v) {
        Vec u = a.col(v).normalized(), w = b.col(v).normalized();
        double det = f.ip(u, q) * f.ip(w, p) - f.ip(w, q) * f.ip(u, p);
        r.transversal = std::min(r.transversal, std::abs(det) / (q.norm() * p.norm()));
    }
    LineCongruence lc{g, a, b, Form1(g, lambda2_dim(static_cast<int>(a.rows())))};
    for (long e = 0; e < g.num_edges(); ++e) {
        auto oe = g.oriented(e);
        Vec s = intersection(lc, oe.tail, oe.head).normalized();
        double sq = std::abs(f.ip(s, q)) / q.norm(), sp = std::abs(f.ip(s, p)) / p.norm();
        if (sq < r.sphere_q || sp < r.sphere_p) r.worst_edge = e;
        r.sphere_q = std::min(r.sphere_q, sq);
        r.sphere_p = std::min(r.sphere_p, sp);
    }
    return r;
}

// Redraw p, q (by a random orthogonal map of the frame) until the conditions hold.
inline Frame choose_frame(const Grid& g, const Frame& f, const Mat& a, const Mat& b, std::mt19937_64& rng, int attempts = 32) {
    if (frame_conditions(g, f, a, b).ok()) return f;
    for (int k = 0; k < attempts; ++k) {
        Frame h = redraw_frame(f, rng);
        if (frame_conditions(g, h, a, b).ok()) return h;
    }
    throw Error(Errc::frame, "no admissible point sphere complex after " + std::to_string(attempts) + " draws");
}

// (eta_ji q, p) per edge
inline Vec gauge_defect(const OmegaNet& net) {
    const Space& s = net.frame.space();
    const Form1& eta = *net.eta;
    Vec d(eta.size());
    for (long e = 0; e < eta.size(); ++e) d[e] = s.ip(s.act(eta[e], net.frame.q()), net.frame.p());
    return d;
}

// eta + d(lambda y^t) with (eta q, p) = 0; returns lambda. (y^t) q = -t so (d tau q, p) = d lambda.
inline Vec normalize_gauge(OmegaNet& net, long base = 0) {
    const Grid& g = net.grid;
    Vec d = gauge_defect(net);
    double scale = std::max(1.0, net.eta->values().cwiseAbs().maxCoeff());
    Mat a = -d.transpose();
    Mat lam;
    try {
        lam = integrate_one_form(g, a, base, Vec::Zero(1), 1e-9 * scale);
    } catch (const Error& e) {
        throw Error(Errc::gauge, std::string("gauge normalization is singular: ") + e.what(), e.where());
    }
    Mat tau(net.eta->dim(), g.num_vertices());
    for (long v = 0; v < g.num_vertices(); ++v) tau.col(v) = lam(0, v) * wedge(net.y.col(v), net.t.col(v));
    net.eta = gauge(*net.eta, tau);
    return lam.row(0).transpose();
}

// f = s+ + s- for s- the m = infinity Darboux transform of s+ through seed.
inline OmegaNet omega_from_darboux_pair(const IsothermicNet& plus, const Vec& seed, long base = 0) {
    if (!plus.frame.has_p()) throw Error(Errc::frame, "Omega-nets live in signature (4,2)");
    IsothermicNet minus = darboux_transform(plus, infinity, seed, base);
    OmegaNet out = legendre_net(plus.grid, plus.frame, plus.mu, minus.mu);
    out.eta = plus.eta();
    out.mu_plus = plus.mu;
    out.mu_minus = minus.mu;
    normalize_gauge(out, base);
    return out;
}

// A null seed orthogonal to mu at the base, built from a random direction.
inline Vec isotropic_seed(const Frame& f, const Vec& mu, std::mt19937_64& rng) {
    const Space& s = f.space();
    std::normal_distribution<double> n;
    for (int k = 0; k < 64; ++k) {
        Vec z(s.n()), w(s.n());
        for (int a = 0; a < s.n(); ++a) z[a] = n(rng), w[a] = n(rng);
        // z, w orthogonal to mu, then z + c w null
        Vec ref = f.q();
        double rm = s.ip(ref, mu);
        if (std::abs(rm) < 1e-12) ref = f.o(), rm = s.ip(ref, mu);
        z -= s.ip(z, mu) / rm * ref;
        w -= s.ip(w, mu) / rm * ref;
        double A = s.sq(w), B = 2 * s.ip(z, w), C = s.sq(z);
        double disc = B * B - 4 * A * C;
        if (disc < 0 || std::abs(A) < 1e-9) continue;
        double c = (-B + (B > 0 ? -1 : 1) * std::sqrt(disc)) / (2 * A);
        Vec x = z + c * w;
        if (line_distance(x, mu) < 0.1) continue;
        return x / x.norm() * mu.norm();
    }
    throw Error(Errc::generation, "no isotropic seed found");
}

struct Associates {
    Mat xdual, ndual;     // in R^3
    double p_drift = 0;   // p-components, which must stay zero
};

// dxdual = pi(eta q), dndual = pi(eta p), p-components fixed at zero.
inline Associates associates(const OmegaNet& net, long base = 0, const Vec& x0 = Vec::Zero(3), const Vec& n0 = Vec::Zero(3)) {
    const Grid& g = net.grid;
    const Frame& f = net.frame;
    const Space& s = f.space();
    if (!net.eta) throw Error(Errc::gauge, "net carries no applicable 1-form");
    Vec d = gauge_defect(net);
    double scale = std::max(1.0, net.eta->values().cwiseAbs().maxCoeff());
    if (d.size() && d.cwiseAbs().maxCoeff() > 1e-9 * scale) throw Error(Errc::gauge, "(eta q, p) does not vanish", -1);
    Mat ax(4, g.num_edges()), an(4, g.num_edges());
    for (long e = 0; e < g.num_edges(); ++e) {
        ax.col(e) = f.coords(f.pi(s.act((*net.eta)[e], f.q())));
        an.col(e) = f.coords(f.pi(s.act((*net.eta)[e], f.p())));
    }
    Vec sx(4), sn(4);
    sx << x0, 0;
    sn << n0, 0;
    Mat X = integrate_one_form(g, ax, base, sx, 1e-9 * scale), N = integrate_one_form(g, an, base, sn, 1e-9 * scale);
    Associates out{X.topRows(3), N.topRows(3), 0};
    out.p_drift = std::max(X.row(3).cwiseAbs().maxCoeff(), N.row(3).cwiseAbs().maxCoeff());
    return out;
}

// |eta - (eta q curly y + eta p curly t)| relative
inline double decomposition_residual(const OmegaNet& net) {
    const Grid& g = net.grid;
    const Space& s = net.frame.space();
    const Form1& eta = *net.eta;
    Mat aq(s.n(), g.num_edges()), ap(s.n(), g.num_edges());
    for (long e = 0; e < g.num_edges(); ++e) {
        aq.col(e) = s.act(eta[e], net.frame.q());
        ap.col(e) = s.act(eta[e], net.frame.p());
    }
    Form1 rebuilt = curly_wedge(Form1(g, aq), Form0(g, net.y)) + curly_wedge(Form1(g, ap), Form0(g, net.t));
    return (rebuilt.values() - eta.values()).cwiseAbs().maxCoeff() / std::max(eta.values().cwiseAbs().maxCoeff(), 1e-300);
}

// eta from associates: eta = alpha curly y + beta curly t with alpha = dxdual + (x ^ dxdual) q
inline OmegaNet omega_from_associates(const PrincipalNet& pn, const Mat& xdual, const Mat& ndual, const Frame& f) {
    const Grid& g = pn.grid;
    OmegaNet out = legendre_lift(pn, f);
    const int n = f.space().n();
    Mat a(n, g.num_edges()), b(n, g.num_edges());
    for (long e = 0; e < g.num_edges(); ++e) {
        auto oe = g.oriented(e);
        Vec xm = 0.5 * (pn.x.col(oe.tail) + pn.x.col(oe.head));
        Vec dxd = xdual.col(oe.head) - xdual.col(oe.tail), dnd = ndual.col(oe.head) - ndual.col(oe.tail);
        a.col(e) = lie_embed(f, dxd) + xm.dot(dxd) * f.q();
        b.col(e) = lie_embed(f, dnd) + xm.dot(dnd) * f.q();
    }
    out.eta = curly_wedge(Form1(g, a), Form0(g, out.y)) + curly_wedge(Form1(g, b), Form0(g, out.t));
    return out;
}

struct OmegaCheck {
    Vec associate_residual;            // per quad, relative
    Vec margin;          // per edge |dxdual - kappa dndual| relative
    double parallel = 0; // worst |sin| of dxdual, dndual against dx
    double worst_associate = 0, worst_margin = 1;
    long worst_quad = -1, worst_edge = -1;
    bool pass(double tol = 1e-9, double margin_tol = 1e-6) const { return parallel <= tol && worst_associate <= tol && worst_margin > margin_tol; }
};

inline OmegaCheck check_omega(const PrincipalNet& pn, const Mat& xdual, const Mat& ndual) {
    const Grid& g = pn.grid;
    OmegaCheck r{Vec::Zero(g.num_quads()), Vec::Ones(g.num_edges())};
    Vec k = principal_curvatures(pn);
    for (long e = 0; e < g.num_edges(); ++e) {
        auto oe = g.oriented(e);
        Vec dx = pn.x.col(oe.head) - pn.x.col(oe.tail);
        Vec a = xdual.col(oe.head) - xdual.col(oe.tail), b = ndual.col(oe.head) - ndual.col(oe.tail);
        if (a.norm() > 1e-12 * std::max(1.0, dx.norm())) r.parallel = std::max(r.parallel, line_distance(a, dx));
        if (b.norm() > 1e-12 * std::max(1.0, dx.norm())) r.parallel = std::max(r.parallel, line_distance(b, dx));
        r.margin[e] = (a - k[e] * b).norm() / std::max({a.norm(), std::abs(k[e]) * b.norm(), 1e-300});
        if (r.margin[e] < r.worst_margin) r.worst_margin = r.margin[e], r.worst_edge = e;
    }
    Form1 dx = exterior_derivative(Form0(g, pn.x)), dn = exterior_derivative(Form0(g, pn.n));
    Form1 da = exterior_derivative(Form0(g, xdual)), db = exterior_derivative(Form0(g, ndual));
    Form2 w = curly_wedge(da, dx) + curly_wedge(db, dn);
    for (long q = 0; q < g.num_quads(); ++q) {
        auto e = g.quad_edges(q);
        double s = 0;
        for (long c : e) s = std::max(s, std::max(da[c].norm() * dx[c].norm(), db[c].norm() * dn[c].norm()));
        r.associate_residual[q] = w[q].norm() / std::max(s, 1e-300);
        if (r.associate_residual[q] > r.worst_associate) r.worst_associate = r.associate_residual[q], r.worst_quad = q;
    }
    return r;
}

// m^eta = 1/(sigma_i, sigma_j) from eta_ji = sigma_j ^ sigma_i with sigma_i in f_i, sigma_j in f_j.
inline Vec omega_edge_labels(const OmegaNet& net, double inf_tol = 1e-10) {
    const Grid& g = net.grid;
    const Space& s = net.frame.space();
    const Form1& eta = *net.eta;
    Vec m(g.num_edges());
    for (long e = 0; e < g.num_edges(); ++e) {
        auto oe = g.oriented(e);
        Vec B = eta[e];
        Eigen::JacobiSVD<Mat> sa(bivector_to_antisymmetric(B), Eigen::ComputeThinU);
        Mat P = sa.matrixU().leftCols(2);
        Mat M(s.n(), 4);
        M << P, -net.y.col(oe.tail).normalized(), -net.t.col(oe.tail).normalized();
        Eigen::JacobiSVD<Mat> sv(M, Eigen::ComputeFullV);
        Vec c = sv.matrixV().col(3);
        Vec si = P * c.head(2);
        Mat W(B.size(), 2);
        W << wedge(net.y.col(oe.head), si), wedge(net.t.col(oe.head), si);
        Vec ab = W.colPivHouseholderQr().solve(B);
        if ((W * ab - B).norm() > 1e-8 * B.norm()) throw Error(Errc::consistency, "eta is not decomposable along f", e);
        Vec sj = ab[0] * net.y.col(oe.head) + ab[1] * net.t.col(oe.head);
        double ip = s.ip(si, sj);
        m[e] = std::abs(ip) <= inf_tol * si.norm() * sj.norm() ? infinity : 1.0 / ip;
    }
    return m;
}

// (dx, dxdual) + (dn, dndual) = -2/m per edge, relative
inline Vec eisenhart_general(const PrincipalNet& pn, const Mat& xdual, const Mat& ndual, const Vec& m) {
    const Grid& g = pn.grid;
    Vec r(g.num_edges());
    for (long e = 0; e < g.num_edges(); ++e) {
        auto oe = g.oriented(e);
        auto d = [&](const Mat& X) { return Vec(X.col(oe.head) - X.col(oe.tail)); };
        double lhs = d(pn.x).dot(d(xdual)) + d(pn.n).dot(d(ndual));
        double want = std::isinf(m[e]) ? 0.0 : -2.0 / m[e];
        r[e] = std::abs(lhs - want) / std::max(std::abs(want), 1e-300);
    }
    return r;
}

// A(xdual, x) + A(n, n) per quad, relative to the quad's area scale
inline Vec check_guichard(const PrincipalNet& pn, const Mat& xdual) {
    const Grid& g = pn.grid;
    Form2 w = mixed_area(Form0(g, xdual), Form0(g, pn.x)) + mixed_area(Form0(g, pn.n), Form0(g, pn.n));
    Form1 dx = exterior_derivative(Form0(g, pn.x)), dn = exterior_derivative(Form0(g, pn.n)), da = exterior_derivative(Form0(g, xdual));
    Vec r(g.num_quads());
    for (long q = 0; q < g.num_quads(); ++q) {
        double s = 0;
        for (long c : g.quad_edges(q)) s = std::max({s, da[c].norm() * dx[c].norm(), dn[c].squaredNorm()});
        r[q] = w[q].norm() / std::max(s, 1e-300);
    }
    return r;
}

// Eisenhart: d dd (1 + 1/(r rd)) = -2/m and d/r = dd/rd, lengths signed along dx.
struct EisenhartReport {
    Vec formula, ratio;
    std::vector<long> excluded;
    double worst_formula = 0, worst_ratio = 0;
};

inline EisenhartReport eisenhart_guichard(const PrincipalNet& pn, const Mat& xdual, const Vec& m, double radius_tol = 1e-9) {
    const Grid& g = pn.grid;
    EisenhartReport r{Vec::Zero(g.num_edges()), Vec::Zero(g.num_edges()), {}};
    for (long e = 0; e < g.num_edges(); ++e) {
        auto oe = g.oriented(e);
        Vec dx = pn.x.col(oe.head) - pn.x.col(oe.tail), dd = xdual.col(oe.head) - xdual.col(oe.tail);
        Vec dn = pn.n.col(oe.head) - pn.n.col(oe.tail);
        Vec u = dx.normalized();
        double d = dx.norm(), dv = dd.dot(u);
        double kn = dn.squaredNorm();
        if (kn <= radius_tol * radius_tol * d * d) {
            r.excluded.push_back(e);
            continue;
        }
        double rr = -dx.dot(dn) / kn, rd = -dd.dot(dn) / kn;
        if (std::abs(rr) <= radius_tol || std::abs(rd) <= radius_tol) {
            r.excluded.push_back(e);
            continue;
        }
        double want = std::isinf(m[e]) ? 0.0 : -2.0 / m[e];
        r.formula[e] = std::abs(d * dv * (1 + 1 / (rr * rd)) - want) / std::max(std::abs(want), 1e-300);
        r.ratio[e] = std::abs(d / rr - dv / rd) / std::max(std::abs(d / rr), 1e-300);
        r.worst_formula = std::max(r.worst_formula, r.formula[e]);
        r.worst_ratio = std::max(r.worst_ratio, r.ratio[e]);
    }
    return r;
}

// alpha A(n,n) - 2 beta A(x,n) + gamma A(x,x) per quad, relative
inline Vec linear_weingarten_check(const PrincipalNet& pn, double alpha, double beta, double gamma) {
    const Grid& g = pn.grid;
    Form0 X(g, pn.x), N(g, pn.n);
    Form2 nn = mixed_area(N, N), xn = mixed_area(X, N), xx = mixed_area(X, X);
    Vec r(g.num_quads());
    for (long q = 0; q < g.num_quads(); ++q) {
        Vec w = alpha * nn[q] - 2 * beta * xn[q] + gamma * xx[q];
        double s = std::abs(alpha) * nn[q].norm() + 2 * std::abs(beta) * std::sqrt(nn[q].norm() * xx[q].norm()) + std::abs(gamma) * xx[q].norm();
        r[q] = w.norm() / std::max(s, 1e-300);
    }
    return r;
}

// Demoulin: r^± rd^∓ = -1 with r = -1/(sigma, q), rd^± = -(xdual + pi tau^± q, p) and tau^- = tau^+ + sigma^+ ^ sigma^-.
// eta must be in the gauge where the associate has p-component zero.
struct DemoulinReport {
    Vec plus_minus, minus_plus; // |r+ rd- + 1|, |r- rd+ + 1|
    std::vector<long> excluded;
    double worst = 0;
};

inline DemoulinReport demoulin_radii(const OmegaNet& net, const Mat& sigma_plus, const Mat& sigma_minus, const Mat& tau_plus, double tol = 1e-9) {
    const Grid& g = net.grid;
    const Frame& f = net.frame;
    const Space& s = f.space();
    DemoulinReport r{Vec::Zero(g.num_vertices()), Vec::Zero(g.num_vertices()), {}};
    for (long v = 0; v < g.num_vertices(); ++v) {
        Vec sp = sigma_plus.col(v), sm = sigma_minus.col(v);
        Vec tp = tau_plus.col(v), tm = tp + wedge(sp, sm);
        double cp = f.ip(sp, f.q()), cm = f.ip(sm, f.q());
        if (std::abs(cp) <= tol * sp.norm() || std::abs(cm) <= tol * sm.norm()) {
            r.excluded.push_back(v);
            continue;
        }
        double rp = -1 / cp, rm = -1 / cm;
        double rdp = -f.ip(s.act(tp, f.q()), f.p()), rdm = -f.ip(s.act(tm, f.q()), f.p());
        r.plus_minus[v] = std::abs(rp * rdm + 1);
        r.minus_plus[v] = std::abs(rm * rdp + 1);
        r.worst = std::max({r.worst, r.plus_minus[v], r.minus_plus[v]});
    }
    return r;
}

enum class SpecialClass { guichard_r3, guichard_r21, isothermic, l_guichard, l_isothermic };

inline const char* special_class_name(SpecialClass c) {
    switch (c) {
    case SpecialClass::guichard_r3: return "guichard_r3";
    case SpecialClass::guichard_r21: return "guichard_r21";
    case SpecialClass::isothermic: return "isothermic";
    case SpecialClass::l_guichard: return "l_guichard";
    case SpecialClass::l_isothermic: return "l_isothermic";
    }
    return "?";
}

// (p(t),p(t)) = a + bt, normalized to a^2 in {0,1} and b in {0,-2}
inline SpecialClass classify_special(const Eigen::Vector3d& poly, double spread = 0, double tol = 1e-9) {
    double scale = std::max({std::abs(poly[0]), std::abs(poly[1]), 1e-300});
    if (std::abs(poly[2]) > tol * scale || spread > tol * scale) throw Error(Errc::not_type_one, "(p(t),p(t)) is not a constant linear polynomial");
    bool a0 = std::abs(poly[0]) <= tol * scale, b0 = std::abs(poly[1]) <= tol * scale;
    if (a0 && b0) return SpecialClass::l_isothermic;
    if (a0) return SpecialClass::l_guichard;
    if (b0) return SpecialClass::isothermic;
    return poly[0] < 0 ? SpecialClass::guichard_r3 : SpecialClass::guichard_r21;
}

inline SpecialClass classify_special(const ConservedQuantity& cq, double tol = 1e-9) {
    if (cq.degree() != 1) throw Error(Errc::not_type_one, "conserved quantity is not of degree 1");
    return classify_special(cq.poly, cq.poly_spread, tol);
}

struct GuichardOptions {
    long planted_fault = -1; // Cauchy vertex left unconstrained
    int attempts = 16;
    double tol = 1e-8;
};

struct GuichardData {
    bool ok = false;
    IsothermicNet plus;
    Mat xi;                  // sigma^-, with d xi = eta^+ p
    Vec orthogonality;       // |(xi, mu)| per vertex, relative
    long worst_vertex = -1;
    long first_failure = -1; // nearest failing vertex to the base
    ConservedQuantity quantity;
    OmegaNet omega;          // eta with eta p = dt
    PrincipalNet pn;
    Mat xdual;
    Mat sigma_plus, tau_plus;
    std::string diagnostic;
};

// xi null with (xi,p) = -1 and (xi,mu) = 0
inline Vec guichard_xi_seed(const Frame& f, const Vec& mu, std::mt19937_64& rng) {
    const Space& s = f.space();
    const Vec& p = f.p();
    std::normal_distribution<double> nd;
    double c = s.ip(p, mu);
    if (std::abs(c) < 1e-9 * mu.norm()) throw Error(Errc::generation, "mu is orthogonal to p");
    // x + a p + b mu with (.,mu) = 0, (.,p) = target
    auto fix = [&](Vec x, double target) {
        double a = -s.ip(x, mu) / c;
        double b = (target - s.ip(x, p) + a) / c;
        return Vec(x + a * p + b * mu);
    };
    Vec best;
    for (int k = 0; k < 256; ++k) {
        Vec z(s.n()), w(s.n());
        for (int a = 0; a < s.n(); ++a) z[a] = nd(rng), w[a] = nd(rng);
        z = fix(z, -1);
        w = fix(w, 0);
        double A = s.sq(w), B = 2 * s.ip(z, w), C = s.sq(z);
        double disc = B * B - 4 * A * C;
        if (disc < 0 || std::abs(A) < 1e-6) continue;
        double g = (-B + (B > 0 ? -1 : 1) * std::sqrt(disc)) / (2 * A);
        Vec xi = z + g * w;
        if (!best.size() || xi.norm() < best.norm()) best = xi;
    }
    if (best.size()) return best;
    throw Error(Errc::generation, "no admissible xi seed");
}

// Cauchy data for s+ constrained by (xi, mu) = 0 at each axis vertex, interior by Moutard evolution.
inline GuichardData guichard_generate(const Grid& g, std::mt19937_64& rng, const GuichardOptions& opt = {}) {
    if (g.dim() != 2) throw Error(Errc::domain, "Guichard generation needs a 2-d grid");
    const Frame f = lie_frame();
    const Space& s = f.space();
    const Vec& p = f.p();
    std::string last;
    for (int attempt = 0; attempt < opt.attempts; ++attempt) {
        Mat cauchy = cauchy_data(f, g, rng);
        const Mat raw = cauchy;
        Vec xi0;
        try {
            xi0 = guichard_xi_seed(f, cauchy.col(0), rng);
        } catch (const Error& e) {
            last = e.what();
            continue;
        }
        Mat xi(s.n(), g.num_vertices());
        xi.col(0) = xi0;
        bool bad = false;
        for (long v : g.tree_order(0)) {
            if (v == 0 || (g.coord(v, 0) > 0 && g.coord(v, 1) > 0)) continue;
            long i = g.tree_parent(v, 0);
            Vec mi = cauchy.col(i), xii = xi.col(i);
            Vec step = f.pi(raw.col(v) - raw.col(i));
            std::normal_distribution<double> nd;
            Vec w;
            auto nu = [&](double t) { return f.to_lightcone(mi + step + t * w); };
            // (xi_j, mu_j) = (xi_i, mu_j) + (mu_j, p)(mu_i, mu_j)
            auto F = [&](double t) {
                Vec mj = nu(t);
                return s.ip(xii, mj) + s.ip(mj, p) * s.ip(mi, mj);
            };
            // nearest sign change of F on [-4, 4], refined by bisection
            auto nearest_root = [&](double& root) {
                const int K = 160;
                bool found = false;
                double best = infinity, prev = F(-4.0);
                for (int k = 1; k <= K; ++k) {
                    double t0 = -4.0 + 8.0 * (k - 1) / K, t1 = -4.0 + 8.0 * k / K;
                    double cur = F(t1);
                    if ((prev <= 0) != (cur <= 0)) {
                        double a = t0, b = t1, fa = prev;
                        for (int it = 0; it < 200 && b - a > 1e-16 * (1 + std::abs(a)); ++it) {
                            double c = 0.5 * (a + b), fc = F(c);
                            if ((fa <= 0) == (fc <= 0)) a = c, fa = fc;
                            else b = c;
                        }
                        double r = 0.5 * (a + b);
                        if (std::abs(r) < std::abs(best)) best = r, found = true;
                    }
                    prev = cur;
                }
                root = best;
                return found;
            };
            double root = 0;
            w = Vec::Zero(s.n());
            if (v != opt.planted_fault) {
                bool found = false;
                // search along pi(xi_i) first, then perturbed directions
                for (int k = 0; k < 8 && !found; ++k) {
                    Vec c(f.basis().cols());
                    for (int a = 0; a < c.size(); ++a) c[a] = nd(rng);
                    // (xi, w) = |pi xi|^2 in the Euclidean coordinates
                    Vec cx = f.coords(xii);
                    cx[cx.size() - 1] = -cx[cx.size() - 1];
                    w = f.from_coords(cx).normalized() + (k == 0 ? 0.0 : 0.5) * f.from_coords(c).normalized();
                    w *= step.norm() / w.norm();
                    found = nearest_root(root);
                }
                if (!found) {
                    last = "no root for the constrained Cauchy step at (" + std::to_string(g.coord(v, 0)) + "," + std::to_string(g.coord(v, 1)) + ")";
                    bad = true;
                    break;
                }
            }
            Vec mj = nu(root);
            cauchy.col(v) = mj;
            xi.col(v) = xii + s.ip(mj, p) * mi - s.ip(mi, p) * mj;
        }
        if (bad) continue;
        GuichardData out;
        try {
            out.plus = moutard_evolve(f, g, cauchy);
            if (!passes(isothermic_report(out.plus))) { last = "evolved net fails isothermic checks"; continue; }
        } catch (const Error& e) {
            last = e.what();
            continue;
        }
        out.quantity = special_quantity_solve(out.plus, p, xi0, 0, opt.tol);
        out.xi = out.quantity.xi;
        out.orthogonality = out.quantity.orthogonality;
        out.orthogonality.maxCoeff(&out.worst_vertex);
        out.ok = out.quantity.ok;
        for (long v : g.tree_order(0))
            if (out.orthogonality[v] > opt.tol) {
                out.first_failure = v;
                break;
            }
        if (!out.ok) {
            auto c = g.coord(out.first_failure);
            out.diagnostic = "(xi, mu) = " + std::to_string(out.orthogonality[out.first_failure]) + " first fails at vertex " + std::to_string(out.first_failure) +
                             " (" + std::to_string(c[0]) + "," + std::to_string(c[1]) + ")";
            return out;
        }
        // Omega-net f = <sigma+, xi> in the gauge eta p = dt
        const long nv = g.num_vertices();
        out.sigma_plus.resize(s.n(), nv);
        for (long v = 0; v < nv; ++v) out.sigma_plus.col(v) = -out.plus.mu.col(v) / s.ip(out.plus.mu.col(v), p);
        out.omega = legendre_net(g, f, out.sigma_plus, out.xi);
        out.omega.mu_plus = out.plus.mu;
        out.tau_plus.resize(lambda2_dim(s.n()), nv);
        for (long v = 0; v < nv; ++v) out.tau_plus.col(v) = -f.ip(out.xi.col(v), f.q()) * wedge(out.omega.y.col(v), out.omega.t.col(v));
        out.omega.eta = out.plus.eta() - exterior_derivative(Form0(g, out.tau_plus));
        out.pn = principal_net(out.omega);
        out.xdual = associates(out.omega).xdual;
        return out;
    }
    throw Error(Errc::generation, "Guichard generation failed after " + std::to_string(opt.attempts) + " attempts: " + last);
}

// f^ = s^+ + (f cap (s^+)^perp) for s^+ the m-Darboux transform of the net's s+ through seed.
inline OmegaNet darboux_legendre(const OmegaNet& net, double m, const Vec& seed, long base = 0, bool use_minus = false) {
    const Grid& g = net.grid;
    const Space& s = net.frame.space();
    IsothermicNet src = use_minus ? net.minus_net() : net.plus_net();
    IsothermicNet hat = darboux_transform(src, m, seed, base);
    Mat other(s.n(), g.num_vertices());
    for (long v = 0; v < g.num_vertices(); ++v) {
        Vec a = net.y.col(v), b = net.t.col(v), h = hat.mu.col(v);
        Vec c = s.ip(h, b) * a - s.ip(h, a) * b;
        if (c.norm() <= 1e-9 * a.norm() * b.norm() * h.norm()) throw Error(Errc::transversality, "f lies in the orthogonal complement of the transform", v);
        other.col(v) = c;
    }
    // the m = infinity partner inside f^
    IsothermicNet minus = darboux_transform(hat, infinity, other.col(base) / other.col(base).norm() * hat.mu.col(base).norm(), base);
    // propagation drifts off the contact plane, which is known exactly at each vertex
    for (long v = 0; v < g.num_vertices(); ++v) {
        Mat basis(hat.mu.rows(), 2);
        basis << hat.mu.col(v), other.col(v);
        Vec c = basis.colPivHouseholderQr().solve(Vec(minus.mu.col(v)));
        minus.mu.col(v) = basis * c;
    }
    OmegaNet out = legendre_net(g, net.frame, hat.mu, minus.mu);
    out.eta = hat.eta();
    out.mu_plus = hat.mu;
    out.mu_minus = minus.mu;
    normalize_gauge(out, base);
    return out;
}

struct CalapsoLegendre {
    OmegaNet net;
    std::vector<Mat> T;
};

// f(t) = T+(t) f
inline CalapsoLegendre calapso_legendre(const OmegaNet& net, double t, long base = 0) {
    Calapso c = calapso_transform(net.plus_net(), t, base);
    const Grid& g = net.grid;
    Mat a(net.y.rows(), g.num_vertices()), b = a;
    for (long v = 0; v < g.num_vertices(); ++v) {
        a.col(v) = c.T[v] * net.mu_plus.col(v);
        b.col(v) = c.T[v] * net.mu_minus.col(v);
    }
    CalapsoLegendre out{legendre_net(g, net.frame, a, b), c.T};
    out.net.eta = moutard_eta(g, a);
    out.net.mu_plus = a;
    out.net.mu_minus = b;
    normalize_gauge(out.net, base);
    return out;
}

// max over edges of |exp(t tau_j) Gamma+_ji exp(-t tau_i) - Gamma-_ji|, tau = mu- ^ mu+
inline double gauge_identity_residual(const IsothermicNet& plus, const IsothermicNet& minus, double t) {
    const Grid& g = plus.grid;
    const Space& s = plus.space();
    std::vector<Mat> E(g.num_vertices());
    for (long v = 0; v < g.num_vertices(); ++v) E[v] = isotropic_exp(s, minus.mu.col(v), plus.mu.col(v), t);
    auto gp = gauge_action(g, E, flat_connection(plus, t));
    auto gm = flat_connection(minus, t);
    double r = 0;
    for (long e = 0; e < g.num_edges(); ++e) r = std::max(r, (gp[e] - gm[e]).cwiseAbs().maxCoeff() / std::max(1.0, gm[e].cwiseAbs().maxCoeff()));
    return r;
}

// Lines through xdual parallel to L: the principal net (xdual, n) with associates (x, ndual).
inline OmegaNet dual_legendre(const PrincipalNet& pn, const Associates& as, const Frame& f) {
    return omega_from_associates(PrincipalNet{pn.grid, as.xdual, pn.n}, pn.x, as.ndual, f);
}

// Isothermic net on the unit sphere: an isothermic net of R^2 moved by inversion in the sphere about (0,0,1) of radius sqrt 2.
inline IsothermicNet sphere_isothermic(const Grid& g, std::mt19937_64& rng) {
    Frame f2 = Frame::standard({3, 1});
    IsothermicNet planar = random_isothermic(f2, g, rng);
    Frame f3 = Frame::standard({4, 1});
    // R^{3,1} -> R^{4,1}: e0, e1, e2, e3 -> e0, e1, e3, e4
    Mat E = Mat::Zero(5, 4);
    E(0, 0) = E(1, 1) = E(3, 2) = E(4, 3) = 1;
    Vec N = Vec::Zero(3);
    N[2] = 1;
    Vec v = f3.stereo_lift(f3.from_coords(N)) - 1.0 * f3.q();
    const Space& s = f3.space();
    Mat R = Mat::Identity(5, 5) - 2.0 / s.sq(v) * v * (s.metric() * v).transpose();
    return {g, f3, R * E * planar.mu};
}

// Minimal net (xdual, n): n isothermic in S^2, xdual its Christoffel dual; parallel offset d gives
// a linear Weingarten net with (alpha, beta, gamma) = (d, 1/2, 0).
inline PrincipalNet minimal_generate(const Grid& g, std::mt19937_64& rng, double offset = 0) {
    IsothermicNet sph = sphere_isothermic(g, rng);
    ChristoffelDual cd = christoffel_dual(sph);
    PrincipalNet pn{g, Mat(3, g.num_vertices()), Mat(3, g.num_vertices())};
    for (long v = 0; v < g.num_vertices(); ++v) {
        pn.n.col(v) = sph.frame.coords(cd.x.col(v)).normalized();
        pn.x.col(v) = sph.frame.coords(cd.xdual.col(v)) + offset * pn.n.col(v);
    }
    return pn;
}

} // namespace dnet
