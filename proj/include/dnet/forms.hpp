#pragma once

#include <functional>
#include <random>
#include <utility>

#include "dnet/grid.hpp"

namespace dnet {

// Exterior powers in lexicographic coordinates: e_a^e_b with a<b, e_a^e_b^e_c with a<b<c.
inline int lambda2_dim(int d) { return d * (d - 1) / 2; }
inline int lambda3_dim(int d) { return d * (d - 1) * (d - 2) / 6; }

inline int lambda2_index(int a, int b, int d) { return a * d - a * (a + 1) / 2 + (b - a - 1); }

// Recover d from the size of a Lambda^2 coefficient vector.
inline int lambda2_base_dim(long n) {
    int d = 1;
    while (lambda2_dim(d) < n) ++d;
    if (lambda2_dim(d) != n) throw Error(Errc::domain, "not a Lambda^2 coefficient size: " + std::to_string(n));
    return d;
}

inline Vec wedge(const Vec& v, const Vec& w) {
    const int d = static_cast<int>(v.size());
    if (w.size() != d) throw Error(Errc::domain, "wedge of vectors with different dimension");
    Vec out(lambda2_dim(d));
    int k = 0;
    for (int a = 0; a < d; ++a)
        for (int b = a + 1; b < d; ++b) out[k++] = v[a] * w[b] - v[b] * w[a];
    return out;
}

// B ^ v for a bivector B in Lambda^2 R^d; zero iff v lies in the plane of a decomposable B.
inline Vec wedge3(const Vec& B, const Vec& v) {
    const int d = static_cast<int>(v.size());
    Vec out(lambda3_dim(d));
    int k = 0;
    for (int a = 0; a < d; ++a)
        for (int b = a + 1; b < d; ++b)
            for (int c = b + 1; c < d; ++c)
                out[k++] = B[lambda2_index(a, b, d)] * v[c] - B[lambda2_index(a, c, d)] * v[b] + B[lambda2_index(b, c, d)] * v[a];
    return out;
}

// Quadratic Pluecker relations B^B (coefficients in Lambda^4); zero iff B decomposable.
inline double plucker_residual(const Vec& B) {
    const int d = lambda2_base_dim(B.size());
    auto c = [&](int a, int b) { return B[lambda2_index(a, b, d)]; };
    double worst = 0;
    for (int a = 0; a < d; ++a)
        for (int b = a + 1; b < d; ++b)
            for (int e = b + 1; e < d; ++e)
                for (int f = e + 1; f < d; ++f)
                    worst = std::max(worst, std::abs(c(a, b) * c(e, f) - c(a, e) * c(b, f) + c(a, f) * c(b, e)));
    return worst;
}

// Antisymmetric matrix with entries B_ab (Euclidean identification).
inline Mat bivector_to_antisymmetric(const Vec& B) {
    const int d = lambda2_base_dim(B.size());
    Mat M = Mat::Zero(d, d);
    for (int a = 0; a < d; ++a)
        for (int b = a + 1; b < d; ++b) {
            M(a, b) = B[lambda2_index(a, b, d)];
            M(b, a) = -M(a, b);
        }
    return M;
}

template <int K>
class Form {
    static_assert(K >= 0 && K <= 2, "forms of degree 0, 1, 2 only");

public:
    Form() = default;
    Form(const Grid& g, int d) : grid_(g), values_(Mat::Zero(d, cells(g))) {}
    Form(const Grid& g, Mat values) : grid_(g), values_(std::move(values)) {
        if (values_.cols() != cells(g)) throw Error(Errc::domain, "form size does not match carrier");
    }

    static long cells(const Grid& g) {
        if constexpr (K == 0) return g.num_vertices();
        else if constexpr (K == 1) return g.num_edges();
        else return g.num_quads();
    }

    const Grid& grid() const { return grid_; }
    int dim() const { return static_cast<int>(values_.rows()); }
    long size() const { return values_.cols(); }
    const Mat& values() const { return values_; }
    Mat& values() { return values_; }

    // canonical-orientation value
    auto operator[](long c) const { return values_.col(c); }
    auto operator[](long c) { return values_.col(c); }

    // value on the oriented edge tail->head
    Vec on(long tail, long head) const requires(K == 1) {
        int sign;
        long e = grid_.edge_between(tail, head, &sign);
        return sign * values_.col(e);
    }

    Vec on(const Grid::OrientedQuad& q) const requires(K == 2) {
        long lo = *std::min_element(q.v.begin(), q.v.end());
        long id = -1;
        for (int a = 0; a < grid_.dim() && id < 0; ++a)
            for (int b = a + 1; b < grid_.dim() && id < 0; ++b) {
                long cand = grid_.quad_id(lo, a, b);
                if (cand < 0) continue;
                auto c = grid_.oriented_quad(cand);
                if (c.same_orientation(q)) id = cand;
                else if (c.same_orientation(q.reversed())) id = -2 - cand;
            }
        if (id == -1) throw Error(Errc::domain, "vertices do not bound a quad");
        return id >= 0 ? Vec(values_.col(id)) : Vec(-values_.col(-2 - id));
    }

    Form& operator+=(const Form& o) { values_ += o.values_; return *this; }
    Form& operator-=(const Form& o) { values_ -= o.values_; return *this; }
    friend Form operator+(Form a, const Form& b) { return a += b; }
    friend Form operator-(Form a, const Form& b) { return a -= b; }
    friend Form operator*(double s, Form a) { a.values_ *= s; return a; }
    friend Form operator-(Form a) { a.values_ = -a.values_; return a; }

private:
    Grid grid_;
    Mat values_;
};

using Form0 = Form<0>;
using Form1 = Form<1>;
using Form2 = Form<2>;

struct BilinearRule {
    enum class Symmetry { symmetric, antisymmetric, none };

    int d1 = 0, d2 = 0, d3 = 0;
    std::function<Vec(const Vec&, const Vec&)> apply;
    Symmetry symmetry = Symmetry::none;

    Vec operator()(const Vec& v, const Vec& w) const { return apply(v, w); }

    // Does the symmetry tag match B on random probes?
    bool tag_consistent(int probes = 8, unsigned seed = 1) const {
        if (symmetry == Symmetry::none) return true;
        if (d1 != d2) return false;
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> n;
        for (int p = 0; p < probes; ++p) {
            Vec v(d1), w(d2);
            for (int i = 0; i < d1; ++i) v[i] = n(rng);
            for (int i = 0; i < d2; ++i) w[i] = n(rng);
            Vec a = apply(v, w), b = apply(w, v);
            double s = symmetry == Symmetry::symmetric ? (a - b).norm() : (a + b).norm();
            if (s > 1e-12 * (1 + a.norm())) return false;
        }
        return true;
    }
};

inline BilinearRule scalar_product_rule() {
    return {1, 1, 1, [](const Vec& v, const Vec& w) { return Vec(v.cwiseProduct(w)); }, BilinearRule::Symmetry::symmetric};
}

inline BilinearRule inner_product_rule(const Mat& G) {
    const int d = static_cast<int>(G.rows());
    return {d, d, 1, [G](const Vec& v, const Vec& w) { return Vec::Constant(1, v.dot(G * w)); }, BilinearRule::Symmetry::symmetric};
}

inline BilinearRule wedge_rule(int d) {
    return {d, d, lambda2_dim(d), [](const Vec& v, const Vec& w) { return wedge(v, w); }, BilinearRule::Symmetry::antisymmetric};
}

inline Form1 exterior_derivative(const Form0& f) {
    const Grid& g = f.grid();
    Form1 df(g, f.dim());
    for (long e = 0; e < g.num_edges(); ++e) {
        auto oe = g.oriented(e);
        df[e] = f[oe.head] - f[oe.tail];
    }
    return df;
}

inline Form2 exterior_derivative(const Form1& a) {
    const Grid& g = a.grid();
    Form2 da(g, a.dim());
    for (long q = 0; q < g.num_quads(); ++q) {
        auto e = g.quad_edges(q);
        da[q] = a[e[0]] + a[e[1]] - a[e[2]] - a[e[3]];
    }
    return da;
}

inline Form0 wedge(const Form0& f, const Form0& h, const BilinearRule& B) {
    const Grid& g = f.grid();
    Form0 out(g, B.d3);
    for (long v = 0; v < g.num_vertices(); ++v) out[v] = B(f[v], h[v]);
    return out;
}

inline Form1 wedge(const Form0& f, const Form1& a, const BilinearRule& B) {
    const Grid& g = f.grid();
    Form1 out(g, B.d3);
    for (long e = 0; e < g.num_edges(); ++e) {
        auto oe = g.oriented(e);
        out[e] = B(0.5 * (f[oe.tail] + f[oe.head]), a[e]);
    }
    return out;
}

inline Form1 wedge(const Form1& a, const Form0& f, const BilinearRule& B) {
    const Grid& g = f.grid();
    Form1 out(g, B.d3);
    for (long e = 0; e < g.num_edges(); ++e) {
        auto oe = g.oriented(e);
        out[e] = B(a[e], 0.5 * (f[oe.tail] + f[oe.head]));
    }
    return out;
}

inline Vec quad_mean(const Form0& f, long q) {
    auto v = f.grid().oriented_quad(q).v;
    return 0.25 * (f[v[0]] + f[v[1]] + f[v[2]] + f[v[3]]);
}

inline Form2 wedge(const Form0& f, const Form2& w, const BilinearRule& B) {
    Form2 out(f.grid(), B.d3);
    for (long q = 0; q < out.size(); ++q) out[q] = B(quad_mean(f, q), w[q]);
    return out;
}

inline Form2 wedge(const Form2& w, const Form0& f, const BilinearRule& B) {
    Form2 out(f.grid(), B.d3);
    for (long q = 0; q < out.size(); ++q) out[q] = B(w[q], quad_mean(f, q));
    return out;
}

// On lkji: 1/4((a_ji + a_kl) B (b_li + b_kj) - (a_li + a_kj) B (b_ji + b_kl)).
inline Form2 wedge(const Form1& a, const Form1& b, const BilinearRule& B) {
    const Grid& g = a.grid();
    Form2 out(g, B.d3);
    for (long q = 0; q < g.num_quads(); ++q) {
        auto e = g.quad_edges(q); // ji, kj, kl, li
        out[q] = 0.25 * (B(a[e[0]] + a[e[2]], b[e[3]] + b[e[1]]) - B(a[e[3]] + a[e[1]], b[e[0]] + b[e[2]]));
    }
    return out;
}

template <int K, int L>
auto curly_wedge(const Form<K>& a, const Form<L>& b) {
    if (a.dim() != b.dim()) throw Error(Errc::domain, "curly wedge needs equal value dimensions");
    return wedge(a, b, wedge_rule(a.dim()));
}

inline Form2 mixed_area(const Form0& x, const Form0& y) {
    return 0.5 * curly_wedge(exterior_derivative(x), exterior_derivative(y));
}

inline Form0 integrate(const Form1& a, long base, const Vec& seed, double tol = 1e-10) {
    return Form0(a.grid(), integrate_one_form(a.grid(), a.values(), base, seed, tol));
}

} // namespace dnet
