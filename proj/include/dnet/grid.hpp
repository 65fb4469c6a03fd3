#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <string>
#include <vector>

#include "dnet/error.hpp"

namespace dnet {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Box domain in Z^N. Vertices are row-major (last axis fastest), edges are keyed
// (vertex, axis) and quads (vertex, axis pair a<b). A stacked grid {0,1}xS keeps
// the stack direction on axis 0.
class Grid {
public:
    using Coord = std::vector<int>;

    struct Edge {
        long v;
        int axis;
    };

    // i = v, j = v+e_a, k = v+e_a+e_b, l = v+e_b
    struct Quad {
        long v;
        int a, b;
    };

    struct OrientedEdge {
        long tail, head;
        OrientedEdge reversed() const { return {head, tail}; }
        bool operator==(const OrientedEdge&) const = default;
    };

    struct OrientedQuad {
        std::array<long, 4> v; // i, j, k, l
        OrientedQuad reversed() const { return {{v[0], v[3], v[2], v[1]}}; }
        bool same_orientation(const OrientedQuad& o) const {
            for (int r = 0; r < 4; ++r) {
                bool eq = true;
                for (int s = 0; s < 4; ++s)
                    eq = eq && v[s] == o.v[(s + r) % 4];
                if (eq) return true;
            }
            return false;
        }
        bool operator==(const OrientedQuad&) const = default;
    };

    Grid() = default;

    explicit Grid(std::vector<int> dims, bool stacked = false) : dims_(std::move(dims)), stacked_(stacked) {
        if (dims_.empty()) throw Error(Errc::domain, "grid needs at least one axis");
        for (int d : dims_)
            if (d < 1) throw Error(Errc::domain, "grid extent must be positive, got " + std::to_string(d));
        if (stacked_ && dims_[0] != 2) throw Error(Errc::domain, "stack axis must have extent 2");
        const int n = dim();
        stride_.assign(n, 1);
        for (int a = n - 2; a >= 0; --a) stride_[a] = stride_[a + 1] * dims_[a + 1];
        nv_ = stride_[0] * dims_[0];

        edge_offset_.assign(n + 1, 0);
        for (int a = 0; a < n; ++a) edge_offset_[a + 1] = edge_offset_[a] + reduced_count({a});
        quad_offset_.clear();
        quad_offset_.push_back(0);
        for (int a = 0; a < n; ++a)
            for (int b = a + 1; b < n; ++b) {
                pairs_.push_back({a, b});
                quad_offset_.push_back(quad_offset_.back() + reduced_count({a, b}));
            }
    }

    const std::vector<int>& dims() const { return dims_; }
    bool stacked() const { return stacked_; }
    int dim() const { return static_cast<int>(dims_.size()); }
    long num_vertices() const { return nv_; }
    long num_edges() const { return edge_offset_.back(); }
    long num_quads() const { return quad_offset_.back(); }

    long vertex(const Coord& c) const {
        long v = 0;
        for (int a = 0; a < dim(); ++a) {
            if (c[a] < 0 || c[a] >= dims_[a]) return -1;
            v += c[a] * stride_[a];
        }
        return v;
    }

    Coord coord(long v) const {
        Coord c(dim());
        for (int a = 0; a < dim(); ++a) {
            c[a] = static_cast<int>(v / stride_[a]);
            v %= stride_[a];
        }
        return c;
    }

    int coord(long v, int axis) const { return static_cast<int>((v / stride_[axis]) % dims_[axis]); }

    long neighbor(long v, int axis, int dir = 1) const {
        int c = coord(v, axis) + dir;
        if (c < 0 || c >= dims_[axis]) return -1;
        return v + dir * stride_[axis];
    }

    // parity colouring: black = even coordinate sum
    bool black(long v) const {
        int s = 0;
        for (int a = 0; a < dim(); ++a) s += coord(v, a);
        return s % 2 == 0;
    }

    long edge_id(long v, int axis) const {
        if (neighbor(v, axis) < 0) return -1;
        return edge_offset_[axis] + reduced_index(v, {axis});
    }

    // id of the edge joining two adjacent vertices; sign is +1 if tail->head is canonical
    long edge_between(long tail, long head, int* sign = nullptr) const {
        for (int a = 0; a < dim(); ++a) {
            if (neighbor(tail, a) == head) {
                if (sign) *sign = 1;
                return edge_id(tail, a);
            }
            if (neighbor(head, a) == tail) {
                if (sign) *sign = -1;
                return edge_id(head, a);
            }
        }
        throw Error(Errc::domain, "vertices " + std::to_string(tail) + " and " + std::to_string(head) + " are not adjacent");
    }

    Edge edge(long id) const {
        int a = static_cast<int>(std::upper_bound(edge_offset_.begin(), edge_offset_.end(), id) - edge_offset_.begin()) - 1;
        return {reduced_vertex(id - edge_offset_[a], {a}), a};
    }

    OrientedEdge oriented(long id) const {
        Edge e = edge(id);
        return {e.v, neighbor(e.v, e.axis)};
    }

    long quad_id(long v, int a, int b) const {
        if (a > b) std::swap(a, b);
        if (a == b || neighbor(v, a) < 0 || neighbor(v, b) < 0) return -1;
        long p = pair_index(a, b);
        return quad_offset_[p] + reduced_index(v, {a, b});
    }

    Quad quad(long id) const {
        long p = std::upper_bound(quad_offset_.begin(), quad_offset_.end(), id) - quad_offset_.begin() - 1;
        auto [a, b] = pairs_[p];
        return {reduced_vertex(id - quad_offset_[p], {a, b}), a, b};
    }

    OrientedQuad oriented_quad(long id) const {
        Quad q = quad(id);
        long j = neighbor(q.v, q.a), l = neighbor(q.v, q.b);
        return {{q.v, j, neighbor(j, q.b), l}};
    }

    // canonical edge ids of a quad: ji, kj, kl, li (each stored tail->head along the axis)
    std::array<long, 4> quad_edges(long id) const {
        Quad q = quad(id);
        long j = neighbor(q.v, q.a), l = neighbor(q.v, q.b);
        return {edge_id(q.v, q.a), edge_id(j, q.b), edge_id(l, q.a), edge_id(q.v, q.b)};
    }

    std::vector<Edge> edges() const {
        std::vector<Edge> out;
        out.reserve(num_edges());
        for (long e = 0; e < num_edges(); ++e) out.push_back(edge(e));
        return out;
    }

    std::vector<Quad> quads() const {
        std::vector<Quad> out;
        out.reserve(num_quads());
        for (long q = 0; q < num_quads(); ++q) out.push_back(quad(q));
        return out;
    }

    Grid stack() const {
        if (stacked_) throw Error(Errc::domain, "grid is already stacked");
        std::vector<int> d{2};
        d.insert(d.end(), dims_.begin(), dims_.end());
        return Grid(d, true);
    }

    // vertex of the stacked grid over v at level 0 or 1
    long lift(long v, int level) const { return level * nv_ + v; }

    // Lexicographic staircase from base, axis 0 first: the last step to x is along
    // the highest axis in which x differs from base.
    long tree_parent(long v, long base) const {
        for (int a = dim() - 1; a >= 0; --a) {
            int c = coord(v, a), cb = coord(base, a);
            if (c != cb) return v + (c > cb ? -1 : 1) * stride_[a];
        }
        return -1;
    }

    std::vector<long> tree_order(long base) const {
        std::vector<long> order(nv_);
        for (long v = 0; v < nv_; ++v) order[v] = v;
        auto dist = [&](long v) {
            long s = 0;
            for (int a = 0; a < dim(); ++a) s += std::abs(coord(v, a) - coord(base, a));
            return s;
        };
        std::stable_sort(order.begin(), order.end(), [&](long x, long y) { return dist(x) < dist(y); });
        return order;
    }

private:
    long reduced_count(std::vector<int> axes) const {
        long n = 1;
        for (int a = 0; a < dim(); ++a) {
            bool r = std::find(axes.begin(), axes.end(), a) != axes.end();
            n *= r ? dims_[a] - 1 : dims_[a];
        }
        return n;
    }

    long reduced_index(long v, std::vector<int> axes) const {
        long idx = 0;
        for (int a = 0; a < dim(); ++a) {
            bool r = std::find(axes.begin(), axes.end(), a) != axes.end();
            idx = idx * (r ? dims_[a] - 1 : dims_[a]) + coord(v, a);
        }
        return idx;
    }

    long reduced_vertex(long idx, std::vector<int> axes) const {
        Coord c(dim());
        for (int a = dim() - 1; a >= 0; --a) {
            bool r = std::find(axes.begin(), axes.end(), a) != axes.end();
            int ext = r ? dims_[a] - 1 : dims_[a];
            c[a] = static_cast<int>(idx % ext);
            idx /= ext;
        }
        return vertex(c);
    }

    long pair_index(int a, int b) const {
        for (size_t p = 0; p < pairs_.size(); ++p)
            if (pairs_[p][0] == a && pairs_[p][1] == b) return static_cast<long>(p);
        return -1;
    }

    std::vector<int> dims_;
    bool stacked_ = false;
    std::vector<long> stride_;
    long nv_ = 0;
    std::vector<long> edge_offset_;
    std::vector<long> quad_offset_;
    std::vector<std::array<int, 2>> pairs_;
};

// Per-quad closedness residual of a 1-form given by canonical edge columns.
inline Vec closedness_residuals(const Grid& g, const Mat& alpha) {
    Vec r(g.num_quads());
    for (long q = 0; q < g.num_quads(); ++q) {
        auto e = g.quad_edges(q);
        // d alpha = a_ji + a_kj - a_kl - a_li
        Vec s = alpha.col(e[0]) + alpha.col(e[1]) - alpha.col(e[2]) - alpha.col(e[3]);
        double scale = alpha.col(e[0]).norm() + alpha.col(e[1]).norm() + alpha.col(e[2]).norm() + alpha.col(e[3]).norm();
        r[q] = s.norm() / std::max(scale, 1e-300);
    }
    return r;
}

// Integrate a closed 1-form (one column per canonical edge) along the staircase tree.
inline Mat integrate_one_form(const Grid& g, const Mat& alpha, long base, const Vec& seed, double tol = 1e-10) {
    if (alpha.cols() != g.num_edges()) throw Error(Errc::domain, "1-form size does not match grid");
    if (g.num_quads() > 0) {
        Vec r = closedness_residuals(g, alpha);
        Eigen::Index worst;
        double m = r.maxCoeff(&worst);
        if (m > tol) throw Error(Errc::integration, "1-form not closed, residual " + std::to_string(m) + " on quad " + std::to_string(worst), worst);
    }
    Mat f(alpha.rows(), g.num_vertices());
    f.col(base) = seed;
    for (long v : g.tree_order(base)) {
        if (v == base) continue;
        long p = g.tree_parent(v, base);
        int sign;
        long e = g.edge_between(p, v, &sign);
        f.col(v) = f.col(p) + sign * alpha.col(e);
    }
    return f;
}

// Flatness residual per quad for a connection given on canonical edges (Gamma_ji maps fibre i to j).
inline Vec flatness_residuals(const Grid& g, const std::vector<Mat>& gamma) {
    Vec r(g.num_quads());
    for (long q = 0; q < g.num_quads(); ++q) {
        auto e = g.quad_edges(q);
        Mat lhs = gamma[e[2]] * gamma[e[3]];
        Mat rhs = gamma[e[1]] * gamma[e[0]];
        r[q] = (lhs - rhs).norm() / std::max(1.0, std::max(lhs.norm(), rhs.norm()));
    }
    return r;
}

// T with T(base) = I and Gamma_ji = T_j^{-1} T_i.
inline std::vector<Mat> trivialize_connection(const Grid& g, const std::vector<Mat>& gamma, long base, double tol = 1e-9) {
    if (static_cast<long>(gamma.size()) != g.num_edges()) throw Error(Errc::domain, "connection size does not match grid");
    if (g.num_quads() > 0) {
        Vec r = flatness_residuals(g, gamma);
        Eigen::Index worst;
        double m = r.maxCoeff(&worst);
        if (m > tol) throw Error(Errc::connection, "connection not flat, residual " + std::to_string(m) + " on quad " + std::to_string(worst), worst);
    }
    const long n = gamma.empty() ? 1 : gamma.front().rows();
    std::vector<Mat> T(g.num_vertices());
    T[base] = Mat::Identity(n, n);
    for (long v : g.tree_order(base)) {
        if (v == base) continue;
        long p = g.tree_parent(v, base);
        int sign;
        long e = g.edge_between(p, v, &sign);
        T[v] = sign > 0 ? Mat(T[p] * gamma[e].inverse()) : Mat(T[p] * gamma[e]);
    }
    return T;
}

} // namespace dnet
