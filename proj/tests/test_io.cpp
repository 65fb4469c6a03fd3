#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "dnet/io.hpp"

using namespace dnet;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    fs::path d = fs::temp_directory_path() / "dnet_test_io";
    fs::create_directories(d);
    return d / name;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

int run(const std::string& args) {
    int s = std::system((std::string(DNET_CLI) + " " + args + " >/dev/null 2>&1").c_str());
    return WEXITSTATUS(s);
}

bool identical(const Mat& a, const Mat& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    for (long i = 0; i < a.size(); ++i) {
        double x = a.data()[i], y = b.data()[i];
        if (!(x == y || (std::isnan(x) && std::isnan(y)))) return false;
        if (x == 0 && std::signbit(x) != std::signbit(y)) return false;
    }
    return true;
}

// max relative deviation of edge differences of a from a single multiple of those of b
double edge_proportionality(const Grid& g, const Mat& a, const Mat& b) {
    double num = 0, den = 0;
    for (long e = 0; e < g.num_edges(); ++e) {
        auto oe = g.oriented(e);
        Vec da = a.col(oe.head) - a.col(oe.tail), db = b.col(oe.head) - b.col(oe.tail);
        num += da.dot(db), den += db.squaredNorm();
    }
    double k = num / den, worst = 0;
    for (long e = 0; e < g.num_edges(); ++e) {
        auto oe = g.oriented(e);
        Vec da = a.col(oe.head) - a.col(oe.tail), db = b.col(oe.head) - b.col(oe.tail);
        worst = std::max(worst, (da - k * db).norm() / (std::abs(k) * db.norm()));
    }
    return worst;
}

} // namespace

TEST(NetFile, GenerationIsDeterministic) {
    for (auto& kind : io::kinds()) {
        std::string a = io::dump(io::generate(kind, {6, 6}, 7)), b = io::dump(io::generate(kind, {6, 6}, 7));
        EXPECT_EQ(a, b) << kind;
        EXPECT_NE(a, io::dump(io::generate(kind, {6, 6}, 8))) << kind;
    }
}

TEST(NetFile, RoundTripIsBitExact) {
    io::NetFile f = io::generate("isothermic", {5, 5}, 3, {{"infinite_row", "2"}});
    bool has_inf = false;
    for (long e = 0; e < f.edge["m"].size(); ++e) has_inf |= std::isinf(f.edge["m"][e]);
    EXPECT_TRUE(has_inf);
    f.vertex["odd"] = Mat(2, f.grid().num_vertices());
    f.vertex["odd"].setConstant(std::nan(""));
    f.vertex["odd"](0, 0) = -0.0;
    f.vertex["odd"](1, 1) = -infinity;
    f.vertex["odd"](0, 2) = 5e-324;
    f.vertex["odd"](1, 3) = 0.1 + 0.2;
    fs::path p = scratch("rt.json");
    io::save(f, p.string());
    io::NetFile g = io::load(p.string());
    EXPECT_EQ(g.signature, f.signature);
    EXPECT_EQ(g.dims, f.dims);
    for (auto& [k, m] : f.vertex) EXPECT_TRUE(identical(m, g.vertex.at(k))) << k;
    for (auto& [k, v] : f.edge) EXPECT_TRUE(identical(v, g.edge.at(k))) << k;
    EXPECT_TRUE(identical(f.lie().basis(), g.lie().basis()));
    EXPECT_TRUE(identical(f.lie().o(), g.lie().o()));
    EXPECT_EQ(io::dump(g), io::dump(f));
    EXPECT_FALSE(fs::exists(p.string() + ".tmp"));

    io::NetFile om = io::generate("omega", {4, 4}, 2);
    io::NetFile back = io::from_json(io::json::parse(io::dump(om)));
    for (auto& [k, m] : om.form) EXPECT_TRUE(identical(m, back.form.at(k))) << k;
}

TEST(NetFile, Schema) {
    io::NetFile om = io::generate("omega", {5, 5}, 4);
    for (auto k : {"y", "t", "mu_plus", "mu_minus", "x", "n", "xdual", "ndual"}) EXPECT_TRUE(om.vertex.count(k)) << k;
    EXPECT_TRUE(om.form.count("eta"));
    EXPECT_TRUE(om.edge.count("m") && om.edge.count("kappa"));
    EXPECT_EQ(om.form["eta"].rows(), lambda2_dim(6));
    EXPECT_EQ(om.meta["seed"], 4);
    io::NetFile gu = io::generate("guichard", {5, 5}, 4);
    EXPECT_TRUE(gu.vertex.count("xi"));
    io::NetFile wg = io::generate("weingarten", {5, 5}, 4, {{"d", "0.25"}});
    EXPECT_EQ(wg.meta["weingarten"][0], 0.25);
}

TEST(NetFile, LoadValidation) {
    io::NetFile f = io::generate("isothermic", {4, 4}, 1);
    io::json j = io::to_json(f);
    j["vertex"]["mu"]["cols"] = 15;
    EXPECT_THROW(io::from_json(j), Error);

    io::NetFile g = f;
    g.vertex["mu"].col(5) *= 1.0;
    g.vertex["mu"](0, 5) += 0.1;
    try {
        io::from_json(io::to_json(g));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::format);
        EXPECT_EQ(e.where(), 5);
    }
    EXPECT_NO_THROW(io::from_json(io::to_json(g), false));

    io::json bad = io::to_json(f);
    bad["version"] = 99;
    EXPECT_THROW(io::from_json(bad), Error);
    bad = io::to_json(f);
    bad["vertex"]["mu"]["data"][0] = "nope";
    EXPECT_THROW(io::from_json(bad), Error);
}

TEST(Verify, FreshFilesPass) {
    for (auto& kind : io::kinds()) {
        io::Report r = io::verify(io::generate(kind, {6, 6}, 11));
        EXPECT_TRUE(r.pass()) << kind << "\n" << r.to_json().dump(1);
        for (auto& c : r.checks) EXPECT_GT(c.tol, 0) << c.name;
    }
}

TEST(Verify, SkipsAreListed) {
    io::Report r = io::verify(io::generate("isothermic", {6, 6}, 2));
    EXPECT_TRUE(r.pass());
    auto skipped = [&](const std::string& n) {
        for (auto& s : r.skipped)
            if (s.first == n) return true;
        return false;
    };
    EXPECT_TRUE(skipped("omega"));
    EXPECT_TRUE(skipped("principal"));
    EXPECT_TRUE(skipped("darboux"));
    EXPECT_EQ(r.find("eta-closed"), nullptr);
    EXPECT_NE(r.find("flatness(t=0.3)"), nullptr);
}

TEST(Verify, CorruptionIsLocalized) {
    io::NetFile f = io::generate("isothermic", {6, 6}, 5);
    Grid g = f.grid();
    long v = g.vertex({3, 2});
    f.vertex["mu"].col(v) = f.lie().to_lightcone(f.vertex["mu"].col(v) + 1e-4 * f.vertex["mu"].col(v).norm() * f.lie().basis().col(0));
    io::Report r = io::verify(f);
    EXPECT_FALSE(r.pass());
    const io::Check* c = r.find("moutard");
    ASSERT_NE(c, nullptr);
    EXPECT_FALSE(c->pass());
    EXPECT_EQ(c->cell, "quad");
    auto q = g.oriented_quad(c->where).v;
    EXPECT_NE(std::find(q.begin(), q.end(), v), q.end());
    EXPECT_TRUE(r.find("nullity")->pass());
}

TEST(Verify, ToleranceOverrides) {
    io::NetFile f = io::generate("isothermic", {5, 5}, 5);
    io::Tolerances t;
    t.set("moutard", 0);
    io::Report r = io::verify(f, t);
    EXPECT_FALSE(r.find("moutard")->pass());
    EXPECT_EQ(r.to_json()["tolerances"]["overrides"]["moutard"], 0);
    t = {};
    t.set("identity", 1e-30);
    EXPECT_FALSE(io::verify(f, t).pass());
    EXPECT_THROW(t.set("closed", -1), Error);
}

TEST(Transform, CalapsoAtZeroIsIdentity) {
    io::NetFile f = io::generate("isothermic", {5, 5}, 6);
    io::NetFile c = io::transform(f, "calapso", {{"t", "0"}});
    for (long v = 0; v < f.grid().num_vertices(); ++v) EXPECT_LE(line_distance(c.v("mu").col(v), f.v("mu").col(v)), 1e-12);
    io::NetFile o = io::generate("omega", {5, 5}, 6);
    io::NetFile co = io::transform(o, "calapso", {{"t", "0"}});
    for (long v = 0; v < o.grid().num_vertices(); ++v) EXPECT_LE(line_distance(co.v("mu_plus").col(v), o.v("mu_plus").col(v)), 1e-12);
}

TEST(Transform, CalapsoShiftsLabels) {
    io::NetFile f = io::generate("isothermic", {5, 5}, 6);
    io::NetFile c = io::transform(f, "calapso", {{"t", "0.01"}});
    EXPECT_TRUE(io::verify(c).pass());
    for (long e = 0; e < f.grid().num_edges(); ++e) EXPECT_LE(label_gap(c.edge["m"][e], f.edge["m"][e] - 0.01), 1e-8);
}

TEST(Transform, DarbouxRecordsLabel) {
    io::NetFile f = io::generate("isothermic", {5, 5}, 9);
    io::NetFile d = io::transform(f, "darboux", {{"m", "0.5"}});
    EXPECT_EQ(io::decode(d.meta["vertical_label"]), 0.5);
    io::Report r = io::verify(d);
    EXPECT_TRUE(r.pass());
    EXPECT_LE(r.find("vertical-label")->residual, 1e-9);
    EXPECT_EQ(d.meta["history"].back()["op"], "darboux");
    EXPECT_EQ(io::dump(d), io::dump(io::transform(f, "darboux", {{"m", "0.5"}})));

    io::NetFile o = io::generate("omega", {5, 5}, 9);
    EXPECT_TRUE(io::verify(io::transform(o, "darboux", {{"m", "2"}})).pass());
}

TEST(Transform, ChristoffelTwice) {
    io::NetFile f = io::generate("isothermic", {6, 5}, 12);
    io::NetFile d1 = io::transform(f, "christoffel");
    io::NetFile d2 = io::transform(d1, "christoffel");
    EXPECT_TRUE(io::verify(d1).pass());
    EXPECT_TRUE(io::verify(d2).pass());
    EXPECT_LE(edge_proportionality(f.grid(), d2.v("x"), f.v("x")), 1e-8);
}

TEST(Transform, OmegaOperations) {
    io::NetFile o = io::generate("omega", {5, 5}, 13);
    io::NetFile dual = io::transform(o, "dual");
    io::NetFile as = io::transform(o, "associates");
    EXPECT_TRUE(io::verify(dual).pass());
    EXPECT_TRUE(io::verify(as).pass());
    EXPECT_THROW(io::transform(io::generate("isothermic", {4, 4}, 1), "dual"), Error);
    EXPECT_THROW(io::transform(o, "christoffel"), Error);
    EXPECT_THROW(io::transform(o, "nope"), Error);
}

TEST(Export, ObjCounts) {
    io::NetFile f = io::generate("minimal", {4, 4}, 3);
    std::string obj = io::to_obj(f, "x");
    std::istringstream in(obj);
    std::string line;
    int v = 0, fc = 0;
    while (std::getline(in, line)) {
        v += line.rfind("v ", 0) == 0;
        if (line.rfind("f ", 0) == 0) {
            ++fc;
            std::istringstream ls(line.substr(2));
            int idx, k = 0;
            while (ls >> idx) {
                EXPECT_TRUE(idx >= 1 && idx <= 16);
                ++k;
            }
            EXPECT_EQ(k, 4);
        }
    }
    EXPECT_EQ(v, 16);
    EXPECT_EQ(fc, 9);
    EXPECT_THROW(io::to_obj(io::generate("isothermic", {4, 4}, 3), "mu"), Error);
}

TEST(Export, NormalsAreUnit) {
    io::NetFile f = io::generate("omega", {5, 4}, 3);
    std::istringstream in(io::to_obj(f, "n"));
    std::string tag;
    double x, y, z;
    std::string line;
    int count = 0;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        if (!(ls >> tag) || tag != "v") continue;
        ls >> x >> y >> z;
        EXPECT_NEAR(std::sqrt(x * x + y * y + z * z), 1.0, 1e-12);
        ++count;
    }
    EXPECT_EQ(count, 20);
}

TEST(Export, CsvRoundTrip) {
    io::NetFile f = io::generate("omega", {5, 4}, 3);
    for (std::string field : {"x", "kappa", "eta"}) {
        fs::path p = scratch(field + ".csv");
        io::write_atomic(p.string(), io::to_csv(f, field));
        Mat back = io::load_csv(p.string());
        Mat want = f.vertex.count(field) ? f.vertex[field] : f.edge.count(field) ? Mat(f.edge[field].transpose()) : f.form[field];
        ASSERT_EQ(back.rows(), want.rows());
        ASSERT_EQ(back.cols(), want.cols());
        EXPECT_LE((back - want).cwiseAbs().maxCoeff(), 1e-15 * std::max(1.0, want.cwiseAbs().maxCoeff())) << field;
    }
}

TEST(Cli, ExitCodesAndDeterminism) {
    std::string a = scratch("a.json").string(), b = scratch("b.json").string(), rep = scratch("rep.json").string();
    ASSERT_EQ(run("gen isothermic --dims 6x6 --seed 7 -o " + a), 0);
    ASSERT_EQ(run("gen isothermic --dims 6x6 --seed 7 -o " + b), 0);
    EXPECT_EQ(slurp(a), slurp(b));
    EXPECT_EQ(run("verify -i " + a + " --report " + rep), 0);
    io::json r = io::json::parse(slurp(rep));
    EXPECT_TRUE(r["pass"].get<bool>());
    EXPECT_FALSE(r["skipped"].empty());

    EXPECT_EQ(run("verify -i " + a + " --tol moutard=0 --report " + rep), 1);
    EXPECT_EQ(run("gen isothermic --dims 6 -o " + a), 2);
    EXPECT_EQ(run("gen torus --dims 6x6 -o " + a), 2);
    EXPECT_EQ(run("verify -i " + scratch("missing.json").string()), 2);
    EXPECT_EQ(run("export -i " + b + " --field mu --format obj -o " + scratch("mu.obj").string()), 2);

    std::string g = scratch("g.json").string();
    fs::remove(g + ".failure.json");
    EXPECT_EQ(run("gen guichard --dims 6x6 --seed 2 --param fault=3,0 -o " + g), 3);
    ASSERT_TRUE(fs::exists(g + ".failure.json"));
    io::json fail = io::json::parse(slurp(g + ".failure.json"));
    EXPECT_EQ(fail["status"], "failed");
    EXPECT_TRUE(fail.contains("rng_state"));

    std::string o = scratch("o.json").string(), d = scratch("d.json").string();
    ASSERT_EQ(run("gen omega --dims 5x5 --seed 3 -o " + o), 0);
    EXPECT_EQ(run("transform darboux -i " + o + " --m 0.5 -o " + d), 0);
    EXPECT_EQ(run("verify -i " + d), 0);
    EXPECT_EQ(run("transform calapso -i " + o + " --t 0.01 -o " + d), 0);
    EXPECT_EQ(run("export -i " + d + " --field x --format obj -o " + scratch("x.obj").string()), 0);
    EXPECT_EQ(run("export -i " + d + " --field x --format csv -o " + scratch("x.csv").string()), 0);
}
