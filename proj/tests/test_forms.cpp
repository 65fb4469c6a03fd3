#include <gtest/gtest.h>

#include <random>

#include "dnet/forms.hpp"

using namespace dnet;

namespace {

std::mt19937_64 rng(11);

Mat randn(int r, long c) {
    std::normal_distribution<double> n;
    Mat m(r, c);
    for (long j = 0; j < c; ++j)
        for (int i = 0; i < r; ++i) m(i, j) = n(rng);
    return m;
}

Form0 random0(const Grid& g, int d) { return Form0(g, randn(d, g.num_vertices())); }
Form1 random1(const Grid& g, int d) { return Form1(g, randn(d, g.num_edges())); }

// 2x2 cross product, the only coefficient of Lambda^2 R^2
double cross(const Vec& a, const Vec& b) { return a[0] * b[1] - a[1] * b[0]; }

double rel(const Mat& r, const Mat& s) { return r.cwiseAbs().maxCoeff() / std::max(1.0, s.cwiseAbs().maxCoeff()); }

} // namespace

TEST(Forms, ReversedOrientationNegates) {
    Grid g({3, 3});
    Form1 a = random1(g, 2);
    for (long e = 0; e < g.num_edges(); ++e) {
        auto oe = g.oriented(e);
        EXPECT_EQ(a.on(oe.head, oe.tail), Vec(-a[e]));
    }
    Form2 w(g, randn(1, g.num_quads()));
    for (long q = 0; q < g.num_quads(); ++q) {
        auto o = g.oriented_quad(q);
        EXPECT_EQ(w.on(o.reversed())[0], -w[q][0]);
        EXPECT_EQ(w.on({{o.v[2], o.v[3], o.v[0], o.v[1]}})[0], w[q][0]);
    }
}

TEST(Forms, ConstantAndLinear) {
    Grid g({3, 3});
    Form0 c(g, Mat::Constant(2, g.num_vertices(), 4.0));
    EXPECT_EQ(exterior_derivative(c).values().cwiseAbs().maxCoeff(), 0.0);
    Form0 f(g, 1);
    for (long v = 0; v < g.num_vertices(); ++v) f[v][0] = g.coord(v, 0) + g.coord(v, 1);
    EXPECT_TRUE((exterior_derivative(f).values().array() == 1.0).all());
}

TEST(Forms, DSquaredVanishes) {
    for (int trial = 0; trial < 100; ++trial) {
        Grid g({4, 4, trial % 2 ? 3 : 1});
        Form0 f = random0(g, 3);
        Form2 ddf = exterior_derivative(exterior_derivative(f));
        EXPECT_LE(ddf.values().cwiseAbs().maxCoeff(), 1e-13 * f.values().norm());
    }
}

TEST(Forms, DSquaredAgainstSymbolicSum) {
    Grid g({4, 4});
    Form0 f = random0(g, 1);
    Form1 df = exterior_derivative(f);
    for (long q = 0; q < g.num_quads(); ++q) {
        auto v = g.oriented_quad(q).v;
        // (f_j - f_i) + (f_k - f_j) + (f_l - f_k) + (f_i - f_l), term by term
        double s = df.on(v[0], v[1])[0] + df.on(v[1], v[2])[0] + df.on(v[2], v[3])[0] + df.on(v[3], v[0])[0];
        EXPECT_NEAR(s, 0.0, 1e-14);
        EXPECT_NEAR(exterior_derivative(df)[q][0], s, 1e-14);
    }
}

TEST(Forms, ScalarWedgeOfZeroForms) {
    Grid g({3, 4});
    Form0 f = random0(g, 1), h = random0(g, 1);
    Form0 fh = wedge(f, h, scalar_product_rule());
    for (long v = 0; v < g.num_vertices(); ++v) EXPECT_EQ(fh[v][0], f[v][0] * h[v][0]);
}

TEST(Forms, WedgeOfExactFormWithItselfVanishes) {
    Grid g({5, 5});
    Form1 a = exterior_derivative(random0(g, 1));
    EXPECT_LE(wedge(a, a, scalar_product_rule()).values().cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Forms, OneOneWedgeMatchesQuadFormula) {
    Grid g({3, 3});
    Form1 a = random1(g, 1), b = random1(g, 1);
    Form2 w = wedge(a, b, scalar_product_rule());
    for (long q = 0; q < g.num_quads(); ++q) {
        auto v = g.oriented_quad(q).v;
        auto A = [&](int s, int t) { return a.on(v[t], v[s])[0]; }; // value on the edge "st" = from t to s
        auto B = [&](int s, int t) { return b.on(v[t], v[s])[0]; };
        // indices 0=i 1=j 2=k 3=l
        double want = 0.25 * ((A(1, 0) + A(2, 3)) * (B(3, 0) + B(2, 1)) - (A(3, 0) + A(2, 1)) * (B(1, 0) + B(2, 3)));
        EXPECT_NEAR(w[q][0], want, 1e-14);
    }
}

TEST(Forms, GradedCommutativity) {
    Grid g({4, 3});
    Form1 a = random1(g, 3), b = random1(g, 3);
    Form0 f = random0(g, 3);
    auto ip = inner_product_rule(Mat::Identity(3, 3));
    EXPECT_EQ(wedge(a, b, ip).values(), (-wedge(b, a, ip)).values());
    EXPECT_EQ(wedge(f, a, ip).values(), wedge(a, f, ip).values());
    auto wr = wedge_rule(3);
    EXPECT_EQ(wedge(a, b, wr).values(), wedge(b, a, wr).values());
    EXPECT_EQ(wedge(f, a, wr).values(), (-wedge(a, f, wr)).values());
}

TEST(Forms, Leibniz) {
    auto ip = inner_product_rule(Vec::LinSpaced(3, 1.0, 3.0).asDiagonal().toDenseMatrix());
    auto wr = wedge_rule(3);
    double worst = 0;
    for (int trial = 0; trial < 100; ++trial) {
        Grid g({3 + trial % 3, 4});
        const BilinearRule& B = trial % 2 ? ip : wr;
        Form0 f = random0(g, 3), h = random0(g, 3);
        Form1 a = random1(g, 3);
        // (0,0): d(f^h) = df^h + f^dh
        Form1 l00 = exterior_derivative(wedge(f, h, B));
        Form1 r00 = wedge(exterior_derivative(f), h, B) + wedge(f, exterior_derivative(h), B);
        worst = std::max(worst, rel(l00.values() - r00.values(), l00.values()));
        // (0,1): d(f^a) = df^a + f^da
        Form2 l01 = exterior_derivative(wedge(f, a, B));
        Form2 r01 = wedge(exterior_derivative(f), a, B) + wedge(f, exterior_derivative(a), B);
        worst = std::max(worst, rel(l01.values() - r01.values(), l01.values()));
        // (1,0): d(a^f) = da^f - a^df
        Form2 l10 = exterior_derivative(wedge(a, f, B));
        Form2 r10 = wedge(exterior_derivative(a), f, B) - wedge(a, exterior_derivative(f), B);
        worst = std::max(worst, rel(l10.values() - r10.values(), l10.values()));
    }
    EXPECT_LE(worst, 1e-12);
}

TEST(Forms, LeibnizDirectQuadOracle) {
    // d(f^a) on a quad evaluated from the raw definitions, without the library wedge
    Grid g({4, 4});
    for (int trial = 0; trial < 20; ++trial) {
        Form0 f = random0(g, 1);
        Form1 a = random1(g, 1);
        Form2 lhs = exterior_derivative(wedge(f, a, scalar_product_rule()));
        for (long q = 0; q < g.num_quads(); ++q) {
            auto v = g.oriented_quad(q).v;
            double s = 0;
            for (int c = 0; c < 4; ++c) {
                long t = v[c], h = v[(c + 1) % 4];
                s += 0.5 * (f[t][0] + f[h][0]) * a.on(t, h)[0];
            }
            EXPECT_NEAR(lhs[q][0], s, 1e-12 * (1 + std::abs(s)));
        }
    }
}

TEST(Forms, CurlyWedgeSymmetricOnOneForms) {
    Grid g({2, 2});
    Form1 a = random1(g, 2), b = random1(g, 2);
    EXPECT_EQ(curly_wedge(a, b).values(), curly_wedge(b, a).values());
    Form0 c(g, Mat::Constant(2, 4, 1.5));
    EXPECT_EQ(curly_wedge(exterior_derivative(c), exterior_derivative(c)).values().cwiseAbs().maxCoeff(), 0.0);
    EXPECT_THROW(curly_wedge(a, random1(g, 3)), Error);
}

TEST(Forms, UnitSquareArea) {
    Grid g({2, 2});
    Form0 x(g, 2);
    for (long v = 0; v < 4; ++v) x[v] << g.coord(v, 0), g.coord(v, 1);
    // shoelace over i, j, k, l
    auto o = g.oriented_quad(0).v;
    double shoelace = 0;
    for (int c = 0; c < 4; ++c) shoelace += 0.5 * cross(x[o[c]], x[o[(c + 1) % 4]]);
    Form2 A = mixed_area(x, x);
    EXPECT_NEAR(A[0][0], shoelace, 1e-15);
    EXPECT_NEAR(A[0][0], 1.0, 1e-15);
}

TEST(Forms, MixedAreaPolarization) {
    Grid g({5, 4, 2});
    double worst = 0;
    for (int trial = 0; trial < 100; ++trial) {
        Form0 x = random0(g, 3), y = random0(g, 3);
        Form2 A = mixed_area(x, y);
        for (long q = 0; q < g.num_quads(); ++q) {
            auto v = g.oriented_quad(q).v;
            auto P = [&](const Form0& s, const Form0& t) {
                Vec r = Vec::Zero(3);
                for (int c = 0; c < 4; ++c) r += wedge(Vec(s[v[c]]), Vec(t[v[(c + 1) % 4]]));
                return r;
            };
            Vec want = 0.25 * (P(x, y) + P(y, x));
            worst = std::max(worst, (A[q] - want).norm() / std::max(1.0, want.norm()));
        }
    }
    EXPECT_LE(worst, 1e-12);
}

TEST(Forms, MixedAreaDiagonals) {
    Grid g({4, 4});
    Form0 x = random0(g, 3), y = random0(g, 3);
    Form0 yc = x;
    yc.values().colwise() += Vec::Constant(3, 2.5);
    Form2 Axx = mixed_area(x, x), Axy = mixed_area(x, y), Ayx = mixed_area(y, x);
    EXPECT_LE((Axy.values() - Ayx.values()).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LE((mixed_area(x, yc).values() - Axx.values()).cwiseAbs().maxCoeff(), 1e-14);
    for (long q = 0; q < g.num_quads(); ++q) {
        auto v = g.oriented_quad(q).v;
        Vec want = 0.5 * wedge(Vec(x[v[0]] - x[v[2]]), Vec(x[v[1]] - x[v[3]]));
        EXPECT_LE((Axx[q] - want).norm(), 1e-13);
    }
}

TEST(Forms, RuleTags) {
    EXPECT_TRUE(scalar_product_rule().tag_consistent());
    EXPECT_TRUE(wedge_rule(4).tag_consistent());
    BilinearRule bad = wedge_rule(3);
    bad.symmetry = BilinearRule::Symmetry::symmetric;
    EXPECT_FALSE(bad.tag_consistent());
}

TEST(Forms, Exterior) {
    Vec a(4), b(4), c(4);
    a << 1, 2, 0, -1;
    b << 0, 1, 3, 2;
    c << 2, -1, 1, 1;
    Vec B = wedge(a, b);
    EXPECT_LE(plucker_residual(B), 1e-14);
    EXPECT_LE(wedge3(B, Vec(2 * a - b)).norm(), 1e-14);
    EXPECT_GT(wedge3(B, c).norm(), 0.1);
    EXPECT_GT(plucker_residual(B + wedge(c, Vec::Unit(4, 0))), 0.1);
    Mat A = bivector_to_antisymmetric(B);
    EXPECT_LE((A - (a * b.transpose() - b * a.transpose())).norm(), 1e-14);
}
