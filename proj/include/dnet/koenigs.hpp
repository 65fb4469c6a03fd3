#pragma once

#include <optional>
#include <random>

#include "dnet/pseudo_euclidean.hpp"

namespace dnet {

// Points of P(V) given by lifts, optionally with a closed Lambda^2 V-valued 1-form.
struct ProjectiveNet {
    Grid grid;
    Mat lift; // dim V x vertices
    std::optional<Form1> eta;

    int dim() const { return static_cast<int>(lift.rows()); }
};

// eta_ji = mu_j ^ mu_i
inline Form1 moutard_eta(const Grid& g, const Mat& mu) {
    Form1 eta(g, lambda2_dim(static_cast<int>(mu.rows())));
    for (long e = 0; e < g.num_edges(); ++e) {
        auto oe = g.oriented(e);
        eta[e] = wedge(mu.col(oe.head), mu.col(oe.tail));
    }
    return eta;
}

// |(mu_k - mu_i) ^ (mu_l - mu_j)| relative to the diagonal lengths, per quad
inline Vec moutard_residuals(const Grid& g, const Mat& mu) {
    Vec r(g.num_quads());
    for (long q = 0; q < g.num_quads(); ++q) {
        auto v = g.oriented_quad(q).v;
        Vec d1 = mu.col(v[2]) - mu.col(v[0]), d2 = mu.col(v[3]) - mu.col(v[1]);
        r[q] = wedge(d1, d2).norm() / std::max(d1.norm() * d2.norm(), 1e-300);
    }
    return r;
}

// Smallest ratio sigma_3/sigma_1 of the normalized four-point lift matrix over all quads,
// together with the smallest pairwise projective distance.
struct Regularity {
    double rank3 = 1, distinct = 1;
    long worst_quad = -1;
};

inline Regularity quad_regularity(const Grid& g, const Mat& lift) {
    Regularity out;
    for (long q = 0; q < g.num_quads(); ++q) {
        auto v = g.oriented_quad(q).v;
        Mat L(lift.rows(), 4);
        for (int c = 0; c < 4; ++c) L.col(c) = lift.col(v[c]).normalized();
        Vec sv = Eigen::JacobiSVD<Mat>(L).singularValues();
        double r3 = sv.size() >= 3 ? sv[2] / sv[0] : 0.0;
        double dist = 1;
        for (int a = 0; a < 4; ++a)
            for (int b = a + 1; b < 4; ++b) dist = std::min(dist, line_distance(L.col(a), L.col(b)));
        if (std::min(r3, dist) < std::min(out.rank3, out.distinct)) out.worst_quad = q;
        out.rank3 = std::min(out.rank3, r3);
        out.distinct = std::min(out.distinct, dist);
    }
    return out;
}

inline void check_regular(const Grid& g, const Mat& lift, double margin = 1e-8) {
    Regularity r = quad_regularity(g, lift);
    if (r.rank3 < margin || r.distinct < margin)
        throw Error(Errc::degeneracy, "quad points coincide or are collinear", r.worst_quad);
}

// Per edge: how far eta_ji is from s_j ^ s_i, measured by |eta ^ s| for both endpoints.
inline Vec eta_membership_residuals(const Grid& g, const Mat& lift, const Form1& eta) {
    Vec r(g.num_edges());
    for (long e = 0; e < g.num_edges(); ++e) {
        auto oe = g.oriented(e);
        double n = eta[e].norm();
        Vec a = lift.col(oe.tail).normalized(), b = lift.col(oe.head).normalized();
        r[e] = std::max(wedge3(eta[e], a).norm(), wedge3(eta[e], b).norm()) / std::max(n, 1e-300);
    }
    return r;
}

// mu with eta_ji = mu_j ^ mu_i, propagated along the staircase tree from a seed spanning s(base).
inline Mat moutard_lift_from_eta(const ProjectiveNet& net, long base, const Vec& seed, double tol = 1e-10) {
    if (!net.eta) throw Error(Errc::domain, "net carries no 1-form");
    const Grid& g = net.grid;
    const Form1& eta = *net.eta;
    if (!same_line(seed, net.lift.col(base), 1e-8)) throw Error(Errc::domain, "seed does not span s at the base");
    Mat mu(net.dim(), g.num_vertices());
    mu.col(base) = seed;
    for (long v : g.tree_order(base)) {
        if (v == base) continue;
        long p = g.tree_parent(v, base);
        Vec B = eta.on(p, v);
        Vec sv = net.lift.col(v);
        Vec w = wedge(sv, mu.col(p));
        mu.col(v) = w.dot(B) / w.squaredNorm() * sv;
    }
    double worst = 0;
    long at = -1;
    for (long e = 0; e < g.num_edges(); ++e) {
        auto oe = g.oriented(e);
        double r = (wedge(mu.col(oe.head), mu.col(oe.tail)) - eta[e]).norm() / std::max(eta[e].norm(), 1e-300);
        if (r > worst) worst = r, at = e;
    }
    if (worst > tol) throw Error(Errc::not_koenigs, "eta is not mu_j ^ mu_i, residual " + std::to_string(worst), at);
    return mu;
}

// i_alpha(x ^ y) = alpha(x) y - alpha(y) x
inline Vec interior(const Vec& alpha, const Vec& B) { return -bivector_to_antisymmetric(B) * alpha; }

struct KoenigsDual {
    Mat F;     // affine lift, alpha(F) = -1
    Mat Fdual; // dF^ = i_alpha eta, zero at the base
};

inline KoenigsDual koenigs_dual(const ProjectiveNet& net, const Vec& alpha, long base = 0, double margin = 1e-10) {
    if (!net.eta) throw Error(Errc::domain, "net carries no 1-form");
    const Grid& g = net.grid;
    KoenigsDual out;
    out.F.resize(net.dim(), g.num_vertices());
    for (long v = 0; v < g.num_vertices(); ++v) {
        double a = alpha.dot(net.lift.col(v));
        if (std::abs(a) <= margin * net.lift.col(v).norm() * alpha.norm()) throw Error(Errc::frame, "point lies on the chart hyperplane", v);
        out.F.col(v) = -net.lift.col(v) / a;
    }
    Mat d(net.dim(), g.num_edges());
    for (long e = 0; e < g.num_edges(); ++e) d.col(e) = interior(alpha, (*net.eta)[e]);
    out.Fdual = integrate_one_form(g, d, base, Vec::Zero(net.dim()), 1e-9);
    return out;
}

struct KMPair {
    bool is_pair = false;
    Mat tau;          // mu^- ^ mu^+ per vertex
    double moutard = 0; // worst vertical Moutard residual over edges
    long worst_edge = -1;
    double eta_gauge = 0; // |eta^- - eta^+ - d tau| relative
};

inline KMPair km_pair_check(const Grid& g, const Mat& plus, const Mat& minus, double tol = 1e-9) {
    KMPair out;
    for (long e = 0; e < g.num_edges(); ++e) {
        auto oe = g.oriented(e);
        long i = oe.tail, j = oe.head;
        Vec a = plus.col(j) - minus.col(i), b = plus.col(i) - minus.col(j);
        Mat F(plus.rows(), 4);
        F << plus.col(i), plus.col(j), minus.col(i), minus.col(j);
        Vec sv = Eigen::JacobiSVD<Mat>(F).singularValues();
        if (sv.size() < 3 || sv[2] < 1e-10 * sv[0]) throw Error(Errc::degeneracy, "vertical quad spans less than a 3-space", e);
        double r = wedge(a, b).norm() / std::max(a.norm() * b.norm(), 1e-300);
        if (r > out.moutard) out.moutard = r, out.worst_edge = e;
    }
    out.tau.resize(lambda2_dim(static_cast<int>(plus.rows())), g.num_vertices());
    for (long v = 0; v < g.num_vertices(); ++v) out.tau.col(v) = wedge(minus.col(v), plus.col(v));
    Form1 ep = moutard_eta(g, plus), em = moutard_eta(g, minus);
    Form1 dt = exterior_derivative(Form0(g, out.tau));
    Mat gap = em.values() - ep.values() - dt.values();
    out.eta_gauge = gap.cwiseAbs().maxCoeff() / std::max(1.0, em.values().cwiseAbs().maxCoeff());
    out.is_pair = out.moutard <= tol;
    return out;
}

// Spans of 2-planes f per vertex with an applicable 1-form eta, eta_ji in Lambda^2(f_i + f_j).
struct LineCongruence {
    Grid grid;
    Mat plus, minus; // spanning lifts of f
    Form1 eta;

    int dim() const { return static_cast<int>(plus.rows()); }
    Mat plane(long v) const {
        Mat P(dim(), 2);
        P << plus.col(v), minus.col(v);
        return P;
    }
    Vec omega(long v) const { return wedge(plus.col(v), minus.col(v)); }
};

// f_i cap f_j for adjacent vertices
inline Vec intersection(const LineCongruence& f, long i, long j) {
    Mat M(f.dim(), 4);
    M << f.plus.col(i), f.minus.col(i), -f.plus.col(j), -f.minus.col(j);
    Eigen::JacobiSVD<Mat> svd(M, Eigen::ComputeFullV);
    Vec c = svd.matrixV().col(3);
    return c[0] * f.plus.col(i) + c[1] * f.minus.col(i);
}

struct CongruenceReport {
    double line = 0;        // sigma_4/sigma_1 of [f_i f_j] per edge, worst
    double span3 = 1;       // sigma_3/sigma_1 per edge, smallest
    double closed = 0;      // d eta relative
    double in_fij = 0;      // eta_ji outside Lambda^2 f_ij
    double nondegenerate = 1; // |eta ^ s_ij| relative, smallest
    double second_order = 1;  // |s_ij ^ s_jk ^ s_kl ^ s_li|, smallest
};

inline CongruenceReport congruence_report(const LineCongruence& f) {
    const Grid& g = f.grid;
    CongruenceReport r;
    for (long e = 0; e < g.num_edges(); ++e) {
        auto oe = g.oriented(e);
        Mat M(f.dim(), 4);
        M << f.plus.col(oe.tail).normalized(), f.minus.col(oe.tail).normalized(), f.plus.col(oe.head).normalized(),
            f.minus.col(oe.head).normalized();
        Eigen::JacobiSVD<Mat> svd(M, Eigen::ComputeThinU);
        Vec sv = svd.singularValues();
        r.line = std::max(r.line, sv[3] / sv[0]);
        r.span3 = std::min(r.span3, sv[2] / sv[0]);
        Mat U = svd.matrixU().leftCols(3);
        // project eta onto Lambda^2 of the 3-space
        Mat W(lambda2_dim(f.dim()), 3);
        W << wedge(U.col(0), U.col(1)), wedge(U.col(0), U.col(2)), wedge(U.col(1), U.col(2));
        Vec B = f.eta[e];
        Vec c = W.colPivHouseholderQr().solve(B);
        double n = std::max(B.norm(), 1e-300);
        r.in_fij = std::max(r.in_fij, (W * c - B).norm() / n);
        Vec s = intersection(f, oe.tail, oe.head).normalized();
        r.nondegenerate = std::min(r.nondegenerate, wedge3(B, s).norm() / n);
    }
    if (g.num_quads() > 0)
        r.closed = closedness_residuals(g, f.eta.values()).maxCoeff();
    for (long q = 0; q < g.num_quads(); ++q) {
        auto v = g.oriented_quad(q).v;
        Mat S(f.dim(), 4);
        for (int c = 0; c < 4; ++c) S.col(c) = intersection(f, v[c], v[(c + 1) % 4]).normalized();
        Vec sv = Eigen::JacobiSVD<Mat>(S).singularValues();
        r.second_order = std::min(r.second_order, sv[3] / sv[0]);
    }
    return r;
}

// Coefficients of B in the basis u1^u2, u1^u3, u2^u3 of Lambda^2 <u1,u2,u3>.
inline Eigen::Vector3d plane_coefficients(const Vec& B, const Vec& u1, const Vec& u2, const Vec& u3, double tol) {
    Mat W(B.size(), 3);
    W << wedge(u1, u2), wedge(u1, u3), wedge(u2, u3);
    Eigen::Vector3d c = W.colPivHouseholderQr().solve(B);
    if ((W * c - B).norm() > tol * std::max(B.norm(), 1e-300))
        throw Error(Errc::consistency, "bivector does not lie in Lambda^2 f_ij; applicability is broken");
    return c;
}

// g_ij([tau_j, r]) = <r eta_ji + tau_j> cap P(f_i)
inline Vec g_map(const LineCongruence& f, long i, long j, const Vec& tau_j, double r, double tol = 1e-8) {
    Vec B = r * f.eta.on(i, j) + tau_j;
    Vec u1 = f.plus.col(i), u2 = f.minus.col(i);
    Mat Fi = f.plane(i);
    auto off = [&](const Vec& x) { return (x - Fi * Fi.colPivHouseholderQr().solve(x)).norm() / x.norm(); };
    Vec u3 = off(f.plus.col(j)) >= off(f.minus.col(j)) ? Vec(f.plus.col(j)) : Vec(f.minus.col(j));
    auto c = plane_coefficients(B, u1, u2, u3, tol);
    if (std::abs(c[1]) + std::abs(c[2]) <= 1e-12 * c.norm()) throw Error(Errc::consistency, "bivector spans f_i itself");
    return c[1] * u1 + c[2] * u2;
}

// tau_j in Lambda^2 f_j with g_ij([tau_j, 1]) = s_i. Throws if s_i is (close to) s_ij, where r vanishes.
inline Vec g_map_inverse(const LineCongruence& f, long i, long j, const Vec& s_i, double margin = 1e-6) {
    Vec c1 = wedge3(f.eta.on(i, j), s_i), c2 = wedge3(f.omega(j), s_i);
    double n1 = c1.norm(), n2 = c2.norm();
    // s_i in f_j means s_i is the edge intersection (r = 0)
    if (n2 <= margin * f.omega(j).norm() * s_i.norm()) throw Error(Errc::seed_degeneracy, "section meets the edge intersection", f.grid.edge_between(i, j));
    double k = -c1.dot(c2) / (n2 * n2);
    double scale = std::max({n1, std::abs(k) * n2, 1e-9 * f.eta.on(i, j).norm() * s_i.norm()});
    if ((c1 + k * c2).norm() > 1e-6 * scale) throw Error(Errc::connection, "eta does not meet s_i ^ V", f.grid.edge_between(i, j));
    return k * f.omega(j);
}

// One Koenigs section of f with its gauge tau, eta + d tau in s_j ^ s_i.
struct Section {
    Mat s, tau;
};

inline Section extract_section(const LineCongruence& f, long base, const Vec& base_seed, const Vec& neighbor_seed) {
    const Grid& g = f.grid;
    long w0 = -1;
    for (int a = 0; a < g.dim() && w0 < 0; ++a) w0 = g.neighbor(base, a);
    if (w0 < 0) throw Error(Errc::domain, "grid has no edge at the base");
    Section out{Mat(f.dim(), g.num_vertices()), Mat(lambda2_dim(f.dim()), g.num_vertices())};
    out.s.col(base) = base_seed;
    out.tau.col(base) = g_map_inverse(f, w0, base, neighbor_seed);
    for (long v : g.tree_order(base)) {
        if (v == base) continue;
        long p = g.tree_parent(v, base);
        out.s.col(v) = g_map(f, v, p, out.tau.col(p), 1.0).normalized();
        out.tau.col(v) = g_map_inverse(f, p, v, out.s.col(p));
    }
    // eta_ji + tau_j in s_i ^ V on every edge, both ways round
    for (long e = 0; e < g.num_edges(); ++e) {
        auto oe = g.oriented(e);
        for (auto [i, j] : {std::pair{oe.tail, oe.head}, std::pair{oe.head, oe.tail}}) {
            Vec B = f.eta.on(i, j) + out.tau.col(j);
            double r = wedge3(B, out.s.col(i).normalized()).norm() / std::max(B.norm(), 1e-300);
            if (r > 1e-7) throw Error(Errc::connection, "parallel section does not close up, residual " + std::to_string(r), e);
        }
    }
    return out;
}

struct PairSeeds {
    Vec plus_base, plus_neighbor, minus_base, minus_neighbor;
};

struct ExtractedPair {
    Mat mu_plus, mu_minus;
    Mat tau_plus, tau_minus;
    Mat tau; // tau^- - tau^+ = mu^- ^ mu^+
    Form1 eta_plus, eta_minus;
    double tau_residual = 0; // |mu^- ^ mu^+ - tau| relative
};

inline Form1 gauge(const Form1& eta, const Mat& tau) {
    return eta + exterior_derivative(Form0(eta.grid(), tau));
}

inline ExtractedPair extract_pair(const LineCongruence& f, const PairSeeds& seeds, long base = 0) {
    const Grid& g = f.grid;
    Section p = extract_section(f, base, seeds.plus_base, seeds.plus_neighbor);
    Section m = extract_section(f, base, seeds.minus_base, seeds.minus_neighbor);
    ExtractedPair out;
    out.tau_plus = p.tau;
    out.tau_minus = m.tau;
    out.tau = m.tau - p.tau;
    double tmax = out.tau.colwise().norm().maxCoeff();
    for (long v = 0; v < g.num_vertices(); ++v) {
        if (line_distance(p.s.col(v), m.s.col(v)) < 1e-8) throw Error(Errc::seed_degeneracy, "sections coincide", v);
        if (out.tau.col(v).norm() < 1e-8 * tmax) throw Error(Errc::seed_degeneracy, "tau vanishes", v);
    }
    out.eta_plus = gauge(f.eta, p.tau);
    out.eta_minus = gauge(f.eta, m.tau);
    out.mu_plus = moutard_lift_from_eta({g, p.s, out.eta_plus}, base, p.s.col(base), 1e-8);
    Vec sm = m.s.col(base), mp = out.mu_plus.col(base);
    Vec w = wedge(sm, mp);
    out.mu_minus = moutard_lift_from_eta({g, m.s, out.eta_minus}, base, w.dot(out.tau.col(base)) / w.squaredNorm() * sm, 1e-8);
    for (long v = 0; v < g.num_vertices(); ++v) {
        double r = (wedge(out.mu_minus.col(v), out.mu_plus.col(v)) - out.tau.col(v)).norm() / tmax;
        out.tau_residual = std::max(out.tau_residual, r);
    }
    return out;
}

// Random seeds in f, rejected near any incident s_ij (distance 1e-6), up to 16 attempts.
inline ExtractedPair extract_pair(const LineCongruence& f, std::mt19937_64& rng, long base = 0, int attempts = 16) {
    const Grid& g = f.grid;
    long w0 = -1;
    for (int a = 0; a < g.dim() && w0 < 0; ++a) w0 = g.neighbor(base, a);
    std::uniform_real_distribution<double> angle(0, M_PI);
    auto point = [&](long v) {
        double t = angle(rng);
        return Vec(std::cos(t) * f.plus.col(v).normalized() + std::sin(t) * f.minus.col(v).normalized());
    };
    auto clear = [&](long v, const Vec& x) {
        for (int a = 0; a < g.dim(); ++a)
            for (int d : {-1, 1}) {
                long u = g.neighbor(v, a, d);
                if (u >= 0 && line_distance(x, intersection(f, v, u)) < 1e-6) return false;
            }
        return true;
    };
    std::string last;
    for (int k = 0; k < attempts; ++k) {
        PairSeeds s{point(base), point(w0), point(base), point(w0)};
        if (!clear(base, s.plus_base) || !clear(base, s.minus_base) || !clear(w0, s.plus_neighbor) || !clear(w0, s.minus_neighbor)) continue;
        if (line_distance(s.plus_base, s.minus_base) < 0.05 || line_distance(s.plus_neighbor, s.minus_neighbor) < 0.05) continue;
        try {
            return extract_pair(f, s, base);
        } catch (const Error& e) {
            if (e.code() != Errc::seed_degeneracy && e.code() != Errc::connection) throw;
            last = e.what();
        }
    }
    throw Error(Errc::seed_degeneracy, "no admissible seeds after " + std::to_string(attempts) + " attempts" + (last.empty() ? "" : ": " + last));
}

// Ratios d sigma^- = lambda d sigma^+ factored as lambda_ij = r_i r_j; the bipartite scale
// freedom is fixed by equal geometric means on both colours.
struct ChristoffelRatio {
    Vec r;
    Vec lambda;           // per edge
    double parallel = 0;  // worst |sin| between d sigma^+ and d sigma^-
    double factor = 0;    // worst |r_i r_j / lambda_ij - 1|
    double b_product = 0; // worst |lambda_ij lambda_kl / (lambda_jk lambda_li) - 1|
};

inline ChristoffelRatio christoffel_ratio(const Grid& g, const Mat& sp, const Mat& sm, double tol = 1e-9, long base = 0) {
    ChristoffelRatio out;
    out.lambda.resize(g.num_edges());
    for (long e = 0; e < g.num_edges(); ++e) {
        auto oe = g.oriented(e);
        Vec a = sp.col(oe.head) - sp.col(oe.tail), b = sm.col(oe.head) - sm.col(oe.tail);
        out.parallel = std::max(out.parallel, line_distance(a, b));
        out.lambda[e] = a.dot(b) / a.squaredNorm();
    }
    if (out.parallel > tol) throw Error(Errc::not_dual, "sections are not edge-parallel");
    out.r.resize(g.num_vertices());
    out.r[base] = 1;
    for (long v : g.tree_order(base)) {
        if (v == base) continue;
        long p = g.tree_parent(v, base);
        out.r[v] = out.lambda[g.edge_between(p, v)] / out.r[p];
    }
    double lb = 0, lw = 0;
    long nb = 0, nw = 0;
    for (long v = 0; v < g.num_vertices(); ++v) (g.black(v) ? (lb += std::log(std::abs(out.r[v])), ++nb) : (lw += std::log(std::abs(out.r[v])), ++nw));
    if (nb && nw) {
        double s = std::exp(0.5 * (lw / nw - lb / nb));
        for (long v = 0; v < g.num_vertices(); ++v) out.r[v] *= g.black(v) ? s : 1 / s;
    }
    for (long e = 0; e < g.num_edges(); ++e) {
        auto oe = g.oriented(e);
        out.factor = std::max(out.factor, std::abs(out.r[oe.tail] * out.r[oe.head] / out.lambda[e] - 1));
    }
    for (long q = 0; q < g.num_quads(); ++q) {
        auto e = g.quad_edges(q);
        out.b_product = std::max(out.b_product, std::abs(out.lambda[e[0]] * out.lambda[e[2]] / (out.lambda[e[1]] * out.lambda[e[3]]) - 1));
    }
    if (out.factor > tol) throw Error(Errc::not_dual, "edge ratios do not factor as r_i r_j, residual " + std::to_string(out.factor));
    return out;
}

} // namespace dnet
