#pragma once

#include <vector>

#include "dnet/forms.hpp"
#include "dnet/pseudo_euclidean.hpp"

namespace dnet {

// Mutually edge-parallel maps x^a into R^{p,q}; Phi = sum x^a (x) w_a with Phi_v the n x N matrix [x^1_v ... x^N_v].
struct ParallelFamily {
    Grid grid;
    Space space;
    std::vector<Mat> x;

    int size() const { return static_cast<int>(x.size()); }
    int dim() const { return space.n(); }
    Mat phi(long v) const {
        Mat P(dim(), size());
        for (int a = 0; a < size(); ++a) P.col(a) = x[a].col(v);
        return P;
    }
    Mat dphi(long e) const {
        auto oe = grid.oriented(e);
        return phi(oe.head) - phi(oe.tail);
    }
};

struct EdgeDecomposition {
    Vec X, Y;              // dPhi_ji = X (x) Y, |X| = 1
    double rank_one = 0;   // sigma_2 / sigma_1
    bool vanishing = false;
};

inline EdgeDecomposition decompose_edge(const ParallelFamily& fam, long e, double vanish_tol = 1e-12) {
    Mat D = fam.dphi(e);
    Eigen::JacobiSVD<Mat> svd(D, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Vec s = svd.singularValues();
    EdgeDecomposition out;
    double scale = 0;
    for (const Mat& x : fam.x) scale = std::max(scale, x.cwiseAbs().maxCoeff());
    if (s[0] <= vanish_tol * std::max(1.0, scale)) {
        out.vanishing = true;
        out.X = Vec::Zero(fam.dim());
        out.Y = Vec::Zero(fam.size());
        return out;
    }
    out.X = svd.matrixU().col(0);
    out.Y = s[0] * svd.matrixV().col(0);
    out.rank_one = s.size() > 1 ? s[1] / s[0] : 0.0;
    return out;
}

struct ParallelReport {
    double worst = 0; // worst sigma_2 / sigma_1 of dPhi over non-vanishing edges
    long worst_edge = -1;
    std::vector<long> vanishing;
    bool ok(double tol = 1e-9) const { return worst <= tol; }
};

inline ParallelReport parallel_report(const ParallelFamily& fam) {
    ParallelReport r;
    for (long e = 0; e < fam.grid.num_edges(); ++e) {
        EdgeDecomposition d = decompose_edge(fam, e);
        if (d.vanishing) {
            r.vanishing.push_back(e);
            continue;
        }
        if (d.rank_one > r.worst) {
            r.worst = d.rank_one;
            r.worst_edge = e;
        }
    }
    return r;
}

struct WMetric {
    Mat g;

    explicit WMetric(Mat m) : g(std::move(m)) {
        if (g.rows() != g.cols()) throw Error(Errc::domain, "metric on W is not square");
        if ((g - g.transpose()).cwiseAbs().maxCoeff() > 1e-14 * std::max(1.0, g.cwiseAbs().maxCoeff())) throw Error(Errc::domain, "metric on W is not symmetric");
        if (!std::isfinite(condition()) || condition() > 1e12) throw Error(Errc::domain, "metric on W is degenerate");
    }
    Signature signature() const { return Space(g).signature(); }
    double condition() const {
        Vec ev = Eigen::SelfAdjointEigenSolver<Mat>(g).eigenvalues().cwiseAbs();
        return ev.maxCoeff() / ev.minCoeff();
    }
};

// Lifted-quad rank test (x, (x,x), 1) in R^{p,q}.
inline double circularity(const Space& s, const Vec& a, const Vec& b, const Vec& c, const Vec& d) {
    Mat M(4, a.size() + 2);
    double sc = std::max({a.norm(), b.norm(), c.norm(), d.norm(), 1e-300});
    int r = 0;
    for (const Vec* v : {&a, &b, &c, &d}) {
        Vec u = *v / sc;
        M.row(r++) << u.transpose(), s.sq(u), 1.0;
    }
    Vec sv = Eigen::JacobiSVD<Mat>(M).singularValues();
    return sv[3] / sv[0];
}

inline Vec circularity(const Space& s, const Grid& g, const Mat& x) {
    Vec out(g.num_quads());
    for (long q = 0; q < g.num_quads(); ++q) {
        auto v = g.oriented_quad(q).v;
        out[q] = circularity(s, x.col(v[0]), x.col(v[1]), x.col(v[2]), x.col(v[3]));
    }
    return out;
}

struct CombescureReport {
    Vec residual;             // |(dx ^ dx*)| per quad, relative to |dx||dx*|
    Vec circular, circular_star;
    double parallel = 0;      // worst sin angle between dx and dx*
    std::vector<long> vanishing;
    double worst() const { return residual.size() ? residual.maxCoeff() : 0.0; }
};

inline CombescureReport check_combescure(const Space& s, const Grid& g, const Mat& x, const Mat& xs) {
    ParallelFamily fam{g, s, {x, xs}};
    ParallelReport pr = parallel_report(fam);
    CombescureReport r;
    r.parallel = pr.worst;
    r.vanishing = pr.vanishing;
    Form1 dx = exterior_derivative(Form0(g, x)), dxs = exterior_derivative(Form0(g, xs));
    Form2 w = wedge(dx, dxs, inner_product_rule(s.metric()));
    r.residual.resize(g.num_quads());
    for (long q = 0; q < g.num_quads(); ++q) {
        double a = 0, b = 0;
        for (long e : g.quad_edges(q)) {
            a = std::max(a, dx[e].norm());
            b = std::max(b, dxs[e].norm());
        }
        r.residual[q] = std::abs(w[q][0]) / std::max(a * b, 1e-300);
    }
    r.circular = circularity(s, g, x);
    r.circular_star = circularity(s, g, xs);
    return r;
}

// y^m: Sigma -> W with Phi = sum e_m (x) y^m in the coordinate basis of R^{p,q}; returns N x V per m.
inline std::vector<Mat> dual_family(const ParallelFamily& fam) {
    std::vector<Mat> y(fam.dim(), Mat(fam.size(), fam.grid.num_vertices()));
    for (int m = 0; m < fam.dim(); ++m)
        for (int a = 0; a < fam.size(); ++a) y[m].row(a) = fam.x[a].row(m);
    return y;
}

inline ParallelFamily reassemble(const Grid& g, const Space& s, const std::vector<Mat>& y) {
    const int N = static_cast<int>(y.front().rows());
    ParallelFamily fam{g, s, std::vector<Mat>(N, Mat(s.n(), g.num_vertices()))};
    for (int a = 0; a < N; ++a)
        for (int m = 0; m < s.n(); ++m) fam.x[a].row(m) = y[m].row(a);
    return fam;
}

// The bracket on Lambda^2(R^{p,q} + W) = o(R^{p,q} + W): [A, B] as endomorphisms.
inline BilinearRule bracket_rule(const Space& u) {
    const int d = lambda2_dim(u.n());
    return {d, d, d, [u](const Vec& A, const Vec& B) {
                Mat a = u.bivector_matrix(A), b = u.bivector_matrix(B);
                return u.matrix_to_bivector(a * b - b * a);
            },
            BilinearRule::Symmetry::antisymmetric};
}

inline Space direct_sum(const Space& s, const WMetric& w) {
    const int n = s.n(), N = static_cast<int>(w.g.rows());
    Mat G = Mat::Zero(n + N, n + N);
    G.topLeftCorner(n, n) = s.metric();
    G.bottomRightCorner(N, N) = w.g;
    return Space(G);
}

// dPhi as a Lambda^2(R^{p,q} + W)-valued 1-form: sum dx^a ^ w_a.
inline Form1 dphi_bivector(const ParallelFamily& fam) {
    const int n = fam.dim(), N = fam.size();
    Form1 out(fam.grid, lambda2_dim(n + N));
    for (long e = 0; e < fam.grid.num_edges(); ++e) {
        Mat D = fam.dphi(e);
        Vec B = Vec::Zero(lambda2_dim(n + N));
        for (int a = 0; a < N; ++a)
            for (int m = 0; m < n; ++m) B[lambda2_index(m, n + a, n + N)] += D(m, a);
        out[e] = B;
    }
    return out;
}

struct OSystemReport {
    Vec weighted;     // |sum g_ab dx^a curly dx^b| per quad, relative
    Vec bracket;      // |[dPhi ^ dPhi]| per quad, relative
    Vec agreement;    // |Lambda^2 R^{p,q} part of the bracket - weighted sum|, relative
    Vec mixed;        // Lambda^2 W and mixed parts of the bracket, relative
    Vec dual;         // |sum g(dy^m ^ dy^n) e_m ^ e_n - weighted sum|, relative
    double combescure = 0; // worst mutual (dx^a ^ dx^b) relative
    ParallelReport parallel;
    double worst_weighted() const { return weighted.size() ? weighted.maxCoeff() : 0.0; }
    double worst_agreement() const { return agreement.size() ? std::max(agreement.maxCoeff(), dual.maxCoeff()) : 0.0; }
    bool pass(double agree_tol = 1e-11, double vanish_tol = 1e-9) const {
        return worst_agreement() <= agree_tol && worst_weighted() <= vanish_tol && bracket.maxCoeff() <= vanish_tol;
    }
};

inline OSystemReport check_osystem(const ParallelFamily& fam, const WMetric& w) {
    const Grid& g = fam.grid;
    const Space& s = fam.space;
    const int n = fam.dim(), N = fam.size();
    if (w.g.rows() != N) throw Error(Errc::domain, "metric size does not match the family");
    OSystemReport r;
    r.parallel = parallel_report(fam);

    std::vector<Form1> dx;
    for (const Mat& x : fam.x) dx.push_back(exterior_derivative(Form0(g, x)));
    // per-quad scale: sum |g_ab| |dx^a| |dx^b|
    Vec scale = Vec::Zero(g.num_quads());
    Form2 weighted(g, lambda2_dim(n));
    for (int a = 0; a < N; ++a)
        for (int b = 0; b < N; ++b) {
            if (w.g(a, b) != 0) weighted = weighted + w.g(a, b) * curly_wedge(dx[a], dx[b]);
            Form2 c = wedge(dx[a], dx[b], inner_product_rule(s.metric()));
            for (long q = 0; q < g.num_quads(); ++q) {
                double na = 0, nb = 0;
                for (long e : g.quad_edges(q)) {
                    na = std::max(na, dx[a][e].norm());
                    nb = std::max(nb, dx[b][e].norm());
                }
                scale[q] += std::abs(w.g(a, b)) * na * nb;
                if (a != b) r.combescure = std::max(r.combescure, std::abs(c[q][0]) / std::max(na * nb, 1e-300));
            }
        }

    Space u = direct_sum(s, w);
    Form1 dphi = dphi_bivector(fam);
    Form2 br = wedge(dphi, dphi, bracket_rule(u));

    std::vector<Mat> y = dual_family(fam);
    std::vector<Form1> dy;
    for (const Mat& ym : y) dy.push_back(exterior_derivative(Form0(g, ym)));
    Form2 dual(g, lambda2_dim(n));
    for (int m = 0; m < n; ++m)
        for (int k = m + 1; k < n; ++k) {
            Form2 c = wedge(dy[m], dy[k], inner_product_rule(w.g));
            for (long q = 0; q < g.num_quads(); ++q) dual[q][lambda2_index(m, k, n)] = 2 * c[q][0];
        }

    const long Q = g.num_quads();
    r.weighted.resize(Q);
    r.bracket.resize(Q);
    r.agreement.resize(Q);
    r.mixed.resize(Q);
    r.dual.resize(Q);
    for (long q = 0; q < Q; ++q) {
        double sc = std::max(scale[q], 1e-300);
        Vec top(lambda2_dim(n));
        double rest = 0;
        for (int a = 0; a < n + N; ++a)
            for (int b = a + 1; b < n + N; ++b) {
                double c = br[q][lambda2_index(a, b, n + N)];
                if (b < n) top[lambda2_index(a, b, n)] = c;
                else rest = std::max(rest, std::abs(c));
            }
        r.weighted[q] = weighted[q].norm() / sc;
        r.bracket[q] = br[q].norm() / sc;
        r.agreement[q] = (top - weighted[q]).norm() / sc;
        r.mixed[q] = rest / sc;
        r.dual[q] = (dual[q] - weighted[q]).norm() / sc;
    }
    return r;
}

} // namespace dnet
