#include <gtest/gtest.h>

#include <random>
#include <set>

#include "dnet/grid.hpp"

using namespace dnet;

TEST(Grid, Counts) {
    Grid g({3, 4});
    EXPECT_EQ(g.num_vertices(), 12);
    EXPECT_EQ(g.num_edges(), 2 * 4 + 3 * 3);
    EXPECT_EQ(g.num_quads(), 6);

    Grid h({3, 4, 5});
    EXPECT_EQ(h.num_edges(), 2 * 4 * 5 + 3 * 3 * 5 + 3 * 4 * 4);
    EXPECT_EQ(h.num_quads(), 2 * 3 * 5 + 2 * 4 * 4 + 3 * 3 * 4);
}

TEST(Grid, RejectsBadExtents) {
    EXPECT_THROW(Grid({3, 0}), Error);
    EXPECT_THROW(Grid({3, 3}, true), Error);
    EXPECT_NO_THROW(Grid({2, 3}, true));
}

TEST(Grid, CoordRoundTrip) {
    Grid g({3, 4, 2});
    for (long v = 0; v < g.num_vertices(); ++v) EXPECT_EQ(g.vertex(g.coord(v)), v);
    EXPECT_EQ(g.coord(g.neighbor(0, 1), 1), 1);
    EXPECT_EQ(g.neighbor(0, 0, -1), -1);
}

TEST(Grid, EdgeIdsAreBijective) {
    Grid g({3, 4, 2});
    std::set<long> seen;
    for (long v = 0; v < g.num_vertices(); ++v)
        for (int a = 0; a < g.dim(); ++a) {
            long e = g.edge_id(v, a);
            if (e < 0) continue;
            EXPECT_TRUE(seen.insert(e).second);
            auto ed = g.edge(e);
            EXPECT_EQ(ed.v, v);
            EXPECT_EQ(ed.axis, a);
            int s;
            EXPECT_EQ(g.edge_between(g.neighbor(v, a), v, &s), e);
            EXPECT_EQ(s, -1);
        }
    EXPECT_EQ(static_cast<long>(seen.size()), g.num_edges());
}

TEST(Grid, QuadBoundary) {
    Grid g({3, 3, 3});
    for (long q = 0; q < g.num_quads(); ++q) {
        auto o = g.oriented_quad(q).v;
        auto e = g.quad_edges(q);
        EXPECT_EQ(g.edge_between(o[0], o[1]), e[0]);
        EXPECT_EQ(g.edge_between(o[1], o[2]), e[1]);
        EXPECT_EQ(g.edge_between(o[3], o[2]), e[2]);
        EXPECT_EQ(g.edge_between(o[0], o[3]), e[3]);
        auto qq = g.quad(q);
        EXPECT_EQ(g.quad_id(qq.v, qq.b, qq.a), q);
    }
}

TEST(Grid, OrientationEquivalence) {
    Grid::OrientedQuad q{{1, 2, 3, 4}};
    EXPECT_TRUE(q.same_orientation({{3, 4, 1, 2}}));
    EXPECT_FALSE(q.same_orientation(q.reversed()));
    EXPECT_TRUE(q.reversed().same_orientation({{2, 1, 4, 3}}));
}

TEST(Grid, StaircaseTree) {
    Grid g({4, 3, 3});
    long base = g.vertex({1, 2, 0});
    auto order = g.tree_order(base);
    std::vector<int> pos(g.num_vertices());
    for (size_t i = 0; i < order.size(); ++i) pos[order[i]] = static_cast<int>(i);
    EXPECT_EQ(order.front(), base);
    for (long v = 0; v < g.num_vertices(); ++v) {
        if (v == base) continue;
        long p = g.tree_parent(v, base);
        EXPECT_NO_THROW(g.edge_between(p, v));
        EXPECT_LT(pos[p], pos[v]);
    }
}

TEST(Grid, Stack) {
    Grid g({3, 4});
    Grid s = g.stack();
    EXPECT_TRUE(s.stacked());
    EXPECT_EQ(s.num_vertices(), 24);
    for (long v = 0; v < g.num_vertices(); ++v) {
        EXPECT_EQ(s.coord(g.lift(v, 1), 0), 1);
        EXPECT_EQ(s.neighbor(g.lift(v, 0), 0), g.lift(v, 1));
    }
}

TEST(Grid, IntegrateExactForm) {
    Grid g({4, 5, 3});
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n;
    Mat f(2, g.num_vertices());
    for (long v = 0; v < f.cols(); ++v) f.col(v) << n(rng), n(rng);
    Mat df(2, g.num_edges());
    for (long e = 0; e < g.num_edges(); ++e) {
        auto oe = g.oriented(e);
        df.col(e) = f.col(oe.head) - f.col(oe.tail);
    }
    EXPECT_LT(closedness_residuals(g, df).maxCoeff(), 1e-14);
    long base = 17;
    Mat F = integrate_one_form(g, df, base, f.col(base));
    EXPECT_LT((F - f).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Grid, IntegrateRejectsNonClosed) {
    Grid g({3, 3});
    Mat a = Mat::Ones(1, g.num_edges());
    a(0, g.quad_edges(2)[1]) = 2.0;
    try {
        integrate_one_form(g, a, 0, Vec::Zero(1));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::integration);
        EXPECT_GE(e.where(), 0);
    }
}

TEST(Grid, TrivializePureGauge) {
    Grid g({3, 4, 2});
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n;
    std::vector<Mat> h(g.num_vertices());
    for (auto& m : h) {
        m = Mat::Identity(3, 3);
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) m(r, c) += 0.3 * n(rng);
    }
    std::vector<Mat> gamma(g.num_edges());
    for (long e = 0; e < g.num_edges(); ++e) {
        auto oe = g.oriented(e);
        gamma[e] = h[oe.head].inverse() * h[oe.tail];
    }
    EXPECT_LT(flatness_residuals(g, gamma).maxCoeff(), 1e-12);
    long base = 7;
    auto T = trivialize_connection(g, gamma, base);
    EXPECT_LT((T[base] - Mat::Identity(3, 3)).norm(), 1e-15);
    for (long e = 0; e < g.num_edges(); ++e) {
        auto oe = g.oriented(e);
        EXPECT_LT((T[oe.head].inverse() * T[oe.tail] - gamma[e]).norm(), 1e-10);
    }
    // gauge freedom: T = h_base^{-1} h up to the base normalization
    for (long v = 0; v < g.num_vertices(); ++v) EXPECT_LT((T[v] - h[base].inverse() * h[v]).norm(), 1e-9);
}

TEST(Grid, TrivializeRejectsCurvature) {
    Grid g({2, 2});
    std::vector<Mat> gamma(g.num_edges(), Mat::Identity(2, 2));
    gamma[0] << 0, -1, 1, 0;
    try {
        trivialize_connection(g, gamma, 0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::connection);
        EXPECT_EQ(e.where(), 0);
    }
}
