#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "dnet/lie_sphere.hpp"
#include "dnet/osystem.hpp"

namespace dnet::io {

using json = nlohmann::json;

inline constexpr int format_version = 1;
inline constexpr const char* float_encoding = "shortest round-trip decimal (at most 17 significant digits); non-finite values as the strings inf, -inf, nan";

// ---- numbers and matrices ----

inline json encode(double v) {
    if (std::isfinite(v)) return v;
    if (std::isnan(v)) return "nan";
    return v > 0 ? "inf" : "-inf";
}

inline double decode(const json& j) {
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) {
        auto s = j.get<std::string>();
        if (s == "inf") return infinity;
        if (s == "-inf") return -infinity;
        if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    }
    throw Error(Errc::format, "not a number: " + j.dump());
}

// column-major with explicit shape
inline json encode(const Mat& m) {
    json data = json::array();
    for (long c = 0; c < m.cols(); ++c)
        for (long r = 0; r < m.rows(); ++r) data.push_back(encode(m(r, c)));
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

inline Mat decode_mat(const json& j) {
    long r = j.at("rows").get<long>(), c = j.at("cols").get<long>();
    const json& d = j.at("data");
    if (!d.is_array() || static_cast<long>(d.size()) != r * c) throw Error(Errc::format, "matrix data does not match its shape");
    Mat m(r, c);
    long k = 0;
    for (long cc = 0; cc < c; ++cc)
        for (long rr = 0; rr < r; ++rr) m(rr, cc) = decode(d[k++]);
    return m;
}

inline json encode_vec(const Vec& v) {
    json a = json::array();
    for (long i = 0; i < v.size(); ++i) a.push_back(encode(v[i]));
    return a;
}

inline Vec decode_vec(const json& j) {
    if (!j.is_array()) throw Error(Errc::format, "expected an array");
    Vec v(j.size());
    for (size_t i = 0; i < j.size(); ++i) v[static_cast<long>(i)] = decode(j[i]);
    return v;
}

// ---- net files ----

struct NetFile {
    Signature signature{3, 0};
    std::vector<int> dims;
    std::optional<Frame> frame;
    std::map<std::string, Mat> vertex; // components x vertices
    std::map<std::string, Vec> edge;   // one value per canonical edge
    std::map<std::string, Mat> form;   // coefficients x edges
    json meta = json::object();

    Grid grid() const { return Grid(dims); }
    bool has(const std::string& name) const { return vertex.count(name) || edge.count(name) || form.count(name); }
    const Mat& v(const std::string& name) const {
        auto it = vertex.find(name);
        if (it == vertex.end()) throw Error(Errc::format, "missing vertex field " + name);
        return it->second;
    }
    const Frame& lie() const {
        if (!frame) throw Error(Errc::format, "file carries no frame");
        return *frame;
    }
};

inline json to_json(const NetFile& f) {
    json j;
    j["format"] = "dnet-net";
    j["version"] = format_version;
    j["float_encoding"] = float_encoding;
    j["signature"] = {f.signature.p, f.signature.q};
    j["dims"] = f.dims;
    if (f.frame) {
        j["frame"] = {{"o", encode_vec(f.frame->o())}, {"q", encode_vec(f.frame->q())}, {"basis", encode(f.frame->basis())}};
        if (f.frame->has_p()) j["frame"]["p"] = encode_vec(f.frame->p());
    }
    for (auto& [k, m] : f.vertex) j["vertex"][k] = encode(m);
    for (auto& [k, v] : f.edge) j["edge"][k] = encode_vec(v);
    for (auto& [k, m] : f.form) j["form"][k] = encode(m);
    j["meta"] = f.meta;
    return j;
}

// Sizes against dims; with `deep`, the geometric invariants of the fields present.
inline void validate(const NetFile& f, bool deep = true) {
    Grid g = f.grid();
    const int n = f.signature.n();
    for (auto& [k, m] : f.vertex) {
        if (m.cols() != g.num_vertices()) throw Error(Errc::format, "vertex field " + k + " has the wrong number of vertices");
        bool ambient = k == "mu" || k == "mu_hat" || k == "mu_plus" || k == "mu_minus" || k == "y" || k == "t" || k == "xi";
        if (ambient && m.rows() != n) throw Error(Errc::format, "vertex field " + k + " is not in the ambient space");
        if ((k == "n" || k == "ndual") && m.rows() != 3) throw Error(Errc::format, "vertex field " + k + " is not in R^3");
    }
    for (auto& [k, v] : f.edge)
        if (v.size() != g.num_edges()) throw Error(Errc::format, "edge field " + k + " has the wrong number of edges");
    for (auto& [k, m] : f.form) {
        if (m.cols() != g.num_edges()) throw Error(Errc::format, "form field " + k + " has the wrong number of edges");
        if (m.rows() != lambda2_dim(n)) throw Error(Errc::format, "form field " + k + " is not Lambda^2-valued");
    }
    bool needs_frame = f.vertex.count("mu") || f.vertex.count("y");
    if (needs_frame && !f.frame) throw Error(Errc::format, "light-cone fields need a frame");
    if (!deep || !f.frame) return;
    const Space& s = f.frame->space();
    for (const char* k : {"mu", "mu_hat", "mu_plus", "mu_minus", "y", "t"}) {
        auto it = f.vertex.find(k);
        if (it == f.vertex.end()) continue;
        for (long v = 0; v < it->second.cols(); ++v)
            if (!s.is_null(it->second.col(v), 1e-9)) throw Error(Errc::format, std::string("field ") + k + " leaves the light cone", v);
    }
    if (f.vertex.count("n"))
        for (long v = 0; v < g.num_vertices(); ++v)
            if (std::abs(f.v("n").col(v).norm() - 1) > 1e-9) throw Error(Errc::format, "field n is not unit", v);
}

inline NetFile from_json(const json& j, bool deep = true) {
    if (j.value("format", "") != "dnet-net") throw Error(Errc::format, "not a dnet net file");
    if (j.value("version", 0) != format_version) throw Error(Errc::format, "unsupported format version");
    NetFile f;
    f.signature = {j.at("signature")[0].get<int>(), j.at("signature")[1].get<int>()};
    f.dims = j.at("dims").get<std::vector<int>>();
    if (j.contains("frame")) {
        const json& fr = j["frame"];
        Vec p = fr.contains("p") ? decode_vec(fr["p"]) : Vec();
        f.frame = Frame::from_vectors(Space(f.signature), decode_vec(fr.at("o")), decode_vec(fr.at("q")), p, decode_mat(fr.at("basis")));
    }
    if (j.contains("vertex"))
        for (auto& [k, m] : j["vertex"].items()) f.vertex[k] = decode_mat(m);
    if (j.contains("edge"))
        for (auto& [k, v] : j["edge"].items()) f.edge[k] = decode_vec(v);
    if (j.contains("form"))
        for (auto& [k, m] : j["form"].items()) f.form[k] = decode_mat(m);
    f.meta = j.value("meta", json::object());
    validate(f, deep);
    return f;
}

// write-then-rename
inline void write_atomic(const std::string& path, const std::string& text) {
    std::filesystem::path target(path), tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(Errc::format, "cannot write " + tmp.string());
        out << text;
        if (!out.flush()) throw Error(Errc::format, "write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, target);
}

inline std::string dump(const NetFile& f) { return to_json(f).dump(1) + "\n"; }

inline void save(const NetFile& f, const std::string& path) { write_atomic(path, dump(f)); }

inline NetFile load(const std::string& path, bool deep = true) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::format, "cannot read " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(Errc::format, std::string("malformed file: ") + e.what());
    }
    return from_json(j, deep);
}

// ---- nets <-> files ----

inline Mat to_coords(const Frame& f, const Mat& x) {
    Mat out(f.basis().cols(), x.cols());
    for (long v = 0; v < x.cols(); ++v) out.col(v) = f.coords(x.col(v));
    return out;
}

inline NetFile isothermic_file(const IsothermicNet& net) {
    NetFile f;
    f.signature = net.space().signature();
    f.dims = net.grid.dims();
    f.frame = net.frame;
    f.vertex["mu"] = net.mu;
    f.edge["m"] = edge_labels(net);
    ChristoffelDual cd = christoffel_dual(net);
    f.vertex["x"] = to_coords(net.frame, cd.x);
    f.vertex["xdual"] = to_coords(net.frame, cd.xdual);
    return f;
}

inline IsothermicNet isothermic_net(const NetFile& f, const std::string& field = "mu") {
    return {f.grid(), f.lie(), f.v(field)};
}

inline NetFile omega_file(const OmegaNet& net) {
    NetFile f;
    f.signature = net.frame.space().signature();
    f.dims = net.grid.dims();
    f.frame = net.frame;
    f.vertex["y"] = net.y;
    f.vertex["t"] = net.t;
    if (net.mu_plus.size()) f.vertex["mu_plus"] = net.mu_plus;
    if (net.mu_minus.size()) f.vertex["mu_minus"] = net.mu_minus;
    if (net.eta) {
        f.form["eta"] = net.eta->values();
        f.edge["m"] = omega_edge_labels(net);
    }
    PrincipalNet pn = principal_net(net);
    f.vertex["x"] = pn.x;
    f.vertex["n"] = pn.n;
    f.edge["kappa"] = principal_curvatures(pn);
    if (net.eta) {
        Associates as = associates(net);
        f.vertex["xdual"] = as.xdual;
        f.vertex["ndual"] = as.ndual;
    }
    return f;
}

inline OmegaNet omega_net(const NetFile& f) {
    OmegaNet net{f.grid(), f.lie(), f.v("y"), f.v("t"), std::nullopt, Mat(), Mat()};
    if (f.form.count("eta")) net.eta = Form1(net.grid, f.form.at("eta"));
    if (f.vertex.count("mu_plus")) net.mu_plus = f.v("mu_plus");
    if (f.vertex.count("mu_minus")) net.mu_minus = f.v("mu_minus");
    return net;
}

inline NetFile principal_file(const PrincipalNet& pn) {
    NetFile f;
    f.signature = {3, 0};
    f.dims = pn.grid.dims();
    f.vertex["x"] = pn.x;
    f.vertex["n"] = pn.n;
    f.edge["kappa"] = principal_curvatures(pn);
    return f;
}

// ---- generation ----

using Params = std::map<std::string, std::string>;

inline double param(const Params& p, const std::string& k, double fallback) {
    auto it = p.find(k);
    if (it == p.end()) return fallback;
    if (it->second == "inf") return infinity;
    try {
        size_t used = 0;
        double v = std::stod(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument(k);
        return v;
    } catch (const std::exception&) {
        throw Error(Errc::domain, "parameter " + k + " is not a number: " + it->second);
    }
}

inline std::vector<int> parse_dims(const std::string& s) {
    std::vector<int> d;
    std::stringstream in(s);
    std::string part;
    while (std::getline(in, part, 'x')) {
        try {
            size_t used = 0;
            int v = std::stoi(part, &used);
            if (used != part.size() || v < 2) throw std::invalid_argument(part);
            d.push_back(v);
        } catch (const std::exception&) {
            throw Error(Errc::domain, "bad dims " + s + " (expected AxB with sides >= 2)");
        }
    }
    if (d.size() != 2) throw Error(Errc::domain, "bad dims " + s + " (expected AxB)");
    return d;
}

// A construction failure together with the report to write in place of the net.
struct GenerationFailure : Error {
    json report;
    GenerationFailure(const std::string& what, json r) : Error(Errc::generation, what), report(std::move(r)) {}
};

inline std::string rng_state(const std::mt19937_64& rng) {
    std::ostringstream s;
    s << rng;
    return s.str();
}

inline const std::vector<std::string>& kinds() {
    static const std::vector<std::string> k{"isothermic", "darboux-pair", "omega", "guichard", "minimal", "weingarten"};
    return k;
}

inline NetFile generate(const std::string& kind, const std::vector<int>& dims, std::uint64_t seed, const Params& params = {}, std::optional<Signature> sig = {}) {
    Grid g(dims);
    std::mt19937_64 rng(seed);
    json meta = {{"kind", kind}, {"seed", seed}};
    for (auto& [k, v] : params) meta["params"][k] = v;
    auto with_state = [&](const Error& e) { return Error(e.code(), std::string(e.what()) + " [seed " + std::to_string(seed) + ", rng state " + rng_state(rng) + "]", e.where()); };
    try {
        NetFile f;
        if (kind == "isothermic" || kind == "darboux-pair") {
            Frame fr = Frame::standard(sig.value_or(params.count("infinite_row") ? Signature{4, 2} : Signature{4, 1}));
            CauchyOptions opt;
            if (params.count("infinite_row")) opt.infinite_rows = {static_cast<int>(param(params, "infinite_row", -1))};
            IsothermicNet net = random_isothermic(fr, g, rng, opt);
            f = isothermic_file(net);
            if (kind == "darboux-pair") {
                double m = param(params, "m", 0.5);
                std::normal_distribution<double> nd;
                Vec r(fr.space().n());
                for (long a = 0; a < r.size(); ++a) r[a] = nd(rng);
                Vec seed_pt = std::isinf(m) ? isotropic_seed(fr, net.mu.col(0), rng) : fr.to_lightcone(net.mu.col(0) + 0.5 * r);
                f.vertex["mu_hat"] = darboux_transform(net, m, seed_pt).mu;
                meta["vertical_label"] = encode(m);
            }
        } else if (kind == "omega") {
            Frame fr = lie_frame();
            IsothermicNet sp = random_isothermic(fr, g, rng);
            f = omega_file(omega_from_darboux_pair(sp, isotropic_seed(fr, sp.mu.col(0), rng)));
        } else if (kind == "guichard") {
            GuichardOptions opt;
            if (params.count("fault")) {
                // a Cauchy vertex, i.e. on a coordinate line through vertex 0
                std::vector<int> c;
                std::stringstream in(params.at("fault"));
                std::string part;
                try {
                    while (std::getline(in, part, ',')) c.push_back(std::stoi(part));
                } catch (const std::exception&) {
                    c.clear();
                }
                if (c.size() != 2 || g.vertex(c) < 0 || (c[0] != 0 && c[1] != 0)) throw Error(Errc::domain, "fault expects a,b on a coordinate line through the origin");
                opt.planted_fault = g.vertex(c);
            }
            GuichardData gd = guichard_generate(g, rng, opt);
            if (!gd.ok) {
                json r = {{"status", "failed"}, {"kind", kind}, {"seed", seed}, {"diagnostic", gd.diagnostic}, {"first_failure", gd.first_failure},
                          {"worst_vertex", gd.worst_vertex}, {"orthogonality", encode_vec(gd.orthogonality)}, {"rng_state", rng_state(rng)}};
                throw GenerationFailure(gd.diagnostic, r);
            }
            f = omega_file(gd.omega);
            f.vertex["xi"] = gd.xi;
            f.vertex["xdual"] = gd.xdual;
            meta["quantity"] = {{"c", encode_vec(gd.quantity.c)}, {"poly", encode_vec(gd.quantity.poly)}};
        } else if (kind == "minimal" || kind == "weingarten") {
            double d = kind == "minimal" ? 0.0 : param(params, "d", 0.4);
            f = principal_file(minimal_generate(g, rng, d));
            meta["weingarten"] = kind == "minimal" ? json{0, 1, 0} : json{d, 0.5, 0};
        } else {
            throw Error(Errc::domain, "unknown kind " + kind);
        }
        f.meta = meta;
        validate(f);
        return f;
    } catch (const GenerationFailure&) {
        throw;
    } catch (const Error& e) {
        if (e.code() == Errc::domain && std::string(e.what()).find("unknown kind") != std::string::npos) throw;
        throw with_state(e);
    }
}

// ---- verification ----

struct Tolerances {
    double closed = 1e-10;   // closedness, nullity
    double identity = 1e-8;  // identity residuals
    double margin = 1e-6;    // regularity margins (lower bounds)
    std::map<std::string, double> named;
    double get(const std::string& name, double fallback) const {
        auto it = named.find(name);
        return it == named.end() ? fallback : it->second;
    }
    // class names set the defaults, anything else overrides one check
    void set(const std::string& name, double v) {
        if (!(v >= 0) || !std::isfinite(v)) throw Error(Errc::domain, "tolerance " + name + " must be finite and nonnegative");
        if (name == "closed") closed = v;
        else if (name == "identity") identity = v;
        else if (name == "margin") margin = v;
        else named[name] = v;
    }
    json to_json() const {
        json j = {{"closed", closed}, {"identity", identity}, {"margin", margin}};
        for (auto& [k, v] : named) j["overrides"][k] = v;
        return j;
    }
};

struct Check {
    std::string name, identity;
    double residual = 0, tol = 0;
    bool lower_bound = false; // passes when residual >= tol
    std::string cell;         // vertex, edge or quad
    long where = -1;
    bool pass() const { return std::isfinite(residual) && (lower_bound ? residual >= tol : residual <= tol); }
};

struct Report {
    std::vector<Check> checks;
    std::vector<std::pair<std::string, std::string>> skipped;
    Tolerances tolerances;
    bool pass() const {
        for (auto& c : checks)
            if (!c.pass()) return false;
        return true;
    }
    const Check* find(const std::string& name) const {
        for (auto& c : checks)
            if (c.name == name) return &c;
        return nullptr;
    }
    json to_json() const {
        json j = {{"format", "dnet-report"}, {"version", format_version}, {"pass", pass()}, {"tolerances", tolerances.to_json()}, {"checks", json::array()}, {"skipped", json::array()}};
        for (auto& c : checks)
            j["checks"].push_back({{"name", c.name}, {"identity", c.identity}, {"residual", encode(c.residual)}, {"tolerance", c.tol},
                                   {"bound", c.lower_bound ? "lower" : "upper"}, {"pass", c.pass()}, {"cell", c.cell}, {"index", c.where}});
        for (auto& [n, why] : skipped) j["skipped"].push_back({{"name", n}, {"reason", why}});
        return j;
    }
};

class Verifier {
public:
    Verifier(const Tolerances& t) : tol_(t) { report.tolerances = t; }
    Report report;

    // worst entry of a per-cell residual
    void upper(const std::string& name, const std::string& identity, const Vec& r, const std::string& cell, double fallback) {
        Check c{name, identity, 0, tol_.get(name, fallback), false, cell, -1};
        for (long i = 0; i < r.size(); ++i)
            if (!(r[i] <= c.residual)) c.residual = r[i], c.where = i;
        report.checks.push_back(c);
    }
    void upper(const std::string& name, const std::string& identity, double r, double fallback) {
        report.checks.push_back({name, identity, r, tol_.get(name, fallback), false, "", -1});
    }
    void lower(const std::string& name, const std::string& identity, double r, double fallback) {
        report.checks.push_back({name, identity, r, tol_.get(name, fallback), true, "", -1});
    }
    void skip(const std::string& name, const std::string& why) { report.skipped.emplace_back(name, why); }
    const Tolerances& tol() const { return tol_; }

private:
    Tolerances tol_;
};

inline Vec quad_label_gaps(const Grid& g, const Vec& m) {
    Vec r(g.num_quads());
    for (long q = 0; q < g.num_quads(); ++q) {
        auto e = g.quad_edges(q);
        r[q] = std::max(label_gap(m[e[0]], m[e[2]]), label_gap(m[e[1]], m[e[3]]));
    }
    return r;
}

inline Vec quad_circularity(const Grid& g, const Mat& x) {
    Vec r(g.num_quads());
    for (long q = 0; q < g.num_quads(); ++q) {
        auto v = g.oriented_quad(q).v;
        r[q] = circularity(x.col(v[0]), x.col(v[1]), x.col(v[2]), x.col(v[3]));
    }
    return r;
}

inline void verify_isothermic(Verifier& V, const NetFile& f) {
    const Tolerances& T = V.tol();
    Grid g = f.grid();
    IsothermicNet net = isothermic_net(f);
    const Space& s = net.space();
    Vec null(g.num_vertices());
    for (long v = 0; v < g.num_vertices(); ++v) null[v] = std::abs(s.sq(net.mu.col(v))) / net.mu.col(v).squaredNorm();
    V.upper("nullity", "(mu, mu) = 0", null, "vertex", T.closed);
    V.upper("moutard", "mu_k - mu_i parallel to mu_l - mu_j", moutard_residuals(g, net.mu), "quad", T.closed);
    Vec m = edge_labels(net);
    V.upper("labels", "m constant on opposite edges", quad_label_gaps(g, m), "quad", T.identity);
    if (f.edge.count("m")) {
        Vec gap(g.num_edges());
        for (long e = 0; e < g.num_edges(); ++e) gap[e] = label_gap(m[e], f.edge.at("m")[e]);
        V.upper("stored-labels", "m = 1/(mu_i, mu_j)", gap, "edge", T.identity);
    }
    IsothermicReport ir = isothermic_report(net);
    V.upper("cross-ratio", "cross-ratio = m_jk / m_ij", ir.cross_ratio, T.identity);
    for (double t : {-1.0, 0.3, 2.0}) {
        std::string name = "flatness(t=" + std::to_string(t).substr(0, std::to_string(t).find_last_not_of('0') + 1) + ")";
        try {
            V.upper(name, "Gamma(t) quad holonomy = 1", flatness_residuals(g, flat_connection(net, t)), "quad", T.identity);
        } catch (const Error& e) {
            V.skip(name, e.what());
        }
    }
    try {
        ChristoffelDual cd = christoffel_dual(net);
        ChristoffelReport cr = christoffel_report(net, cd);
        V.upper("christoffel-parallel", "dx parallel to dxdual", cr.parallel, T.identity);
        V.upper("christoffel-scalar", "(dx, dxdual) = -2/m", cr.scalar_residual, T.identity);
        V.upper("christoffel-area", "dx curly dxdual = 0", cr.area, T.identity);
        const Mat& B = net.frame.basis();
        Space flat(Mat(B.transpose() * s.metric() * B));
        Mat G(2, 2);
        G << 0, 1, 1, 0;
        OSystemReport os = check_osystem(ParallelFamily{g, flat, {to_coords(net.frame, cd.x), to_coords(net.frame, cd.xdual)}}, WMetric(G));
        V.upper("osystem-isothermic", "[dPhi ^ dPhi] = 0 for (x, xdual)", os.bracket, "quad", T.identity);
        V.upper("osystem-agreement-isothermic", "sum g dx curly dx equals the bracket", os.worst_agreement(), T.identity);
        if (f.vertex.count("xdual") && f.vertex.count("x")) {
            Mat x = to_coords(f.lie(), cd.x);
            Mat dd = to_coords(f.lie(), cd.xdual) - f.v("xdual"), dx = x - f.v("x");
            double drift = ((dd.colwise() - dd.col(0)).cwiseAbs().maxCoeff() + dx.cwiseAbs().maxCoeff()) / std::max(1.0, x.cwiseAbs().maxCoeff());
            V.upper("stored-christoffel", "stored x, xdual match the stereoprojection and its dual", drift, T.identity);
        }
    } catch (const Error& e) {
        V.skip("christoffel", e.what());
    }
}

inline void verify_darboux(Verifier& V, const NetFile& f) {
    const Tolerances& T = V.tol();
    Grid g = f.grid();
    IsothermicNet a = isothermic_net(f), b = isothermic_net(f, "mu_hat");
    const Space& s = a.space();
    double m = f.meta.contains("vertical_label") ? decode(f.meta["vertical_label"]) : std::numeric_limits<double>::quiet_NaN();
    Vec gap(g.num_vertices());
    for (long v = 0; v < g.num_vertices(); ++v) gap[v] = label_gap(edge_label(s, a.mu.col(v), b.mu.col(v)), m);
    V.upper("vertical-label", "(mu, mu^) = 1/m", gap, "vertex", T.identity);
    IsothermicNet st = stack(a, b);
    V.upper("stacked-moutard", "vertical quads satisfy the Moutard equation", moutard_residuals(st.grid, st.mu), "quad", T.closed);
    V.upper("stacked-labels", "m constant on opposite edges of the stacked net", quad_label_gaps(st.grid, edge_labels(st)), "quad", T.identity);
    try {
        BianchiReport br = bianchi_check(st, christoffel_dual(st), m);
        V.upper("bianchi", "(x^ - x, xdual^ - xdual) = -2/m", br.scalar, "vertex", T.identity);
    } catch (const Error& e) {
        V.skip("bianchi", e.what());
    }
}

inline void verify_omega(Verifier& V, const NetFile& f) {
    const Tolerances& T = V.tol();
    Grid g = f.grid();
    OmegaNet net = omega_net(f);
    const Space& s = net.frame.space();
    Vec leg(g.num_vertices());
    for (long v = 0; v < g.num_vertices(); ++v) {
        Vec y = net.y.col(v), t = net.t.col(v);
        leg[v] = (std::abs(s.sq(y)) + std::abs(s.sq(t)) + std::abs(s.ip(y, t))) / (y.squaredNorm() + t.squaredNorm());
    }
    V.upper("legendre", "<y, t> is a null plane", leg, "vertex", T.closed);
    if (!net.eta) {
        V.skip("applicability", "no eta field");
        return;
    }
    CongruenceReport cr = congruence_report(net.congruence());
    V.upper("eta-closed", "d eta = 0", cr.closed, T.closed);
    V.upper("eta-membership", "eta_ji in Lambda^2(f_i + f_j)", cr.in_fij, T.identity);
    V.lower("eta-nondegenerate", "eta never vanishes on the edge sphere", cr.nondegenerate, T.margin);
    V.upper("gauge", "(eta q, p) = 0", gauge_defect(net).cwiseAbs(), "edge", T.closed);
    if (net.mu_plus.size() && net.mu_minus.size()) {
        Vec o(g.num_vertices());
        for (long v = 0; v < g.num_vertices(); ++v)
            o[v] = std::abs(s.ip(net.mu_plus.col(v), net.mu_minus.col(v))) / (net.mu_plus.col(v).norm() * net.mu_minus.col(v).norm());
        V.upper("isotropic-pair", "(mu+, mu-) = 0", o, "vertex", T.closed);
        Vec m = omega_edge_labels(net), mp = edge_labels(net.plus_net());
        Vec gap(g.num_edges());
        for (long e = 0; e < g.num_edges(); ++e) gap[e] = label_gap(m[e], mp[e]);
        V.upper("omega-labels", "m^eta equals the labels of mu+", gap, "edge", T.identity);
    } else {
        V.skip("isotropic-pair", "no mu_plus / mu_minus fields");
    }
}

inline void verify_principal(Verifier& V, const NetFile& f) {
    const Tolerances& T = V.tol();
    Grid g = f.grid();
    PrincipalNet pn{g, f.v("x"), f.v("n")};
    Vec unit(g.num_vertices()), prin(g.num_edges());
    for (long v = 0; v < g.num_vertices(); ++v) unit[v] = std::abs(pn.n.col(v).norm() - 1);
    Vec k = principal_curvatures(pn);
    for (long e = 0; e < g.num_edges(); ++e) {
        auto oe = g.oriented(e);
        Vec dx = pn.x.col(oe.head) - pn.x.col(oe.tail), dn = pn.n.col(oe.head) - pn.n.col(oe.tail);
        prin[e] = (k[e] * dx + dn).norm() / std::max(dx.norm() * std::abs(k[e]) + dn.norm(), 1e-300);
    }
    V.upper("unit-normal", "|n| = 1", unit, "vertex", T.closed);
    V.upper("principal", "dn = -kappa dx", prin, "edge", T.identity);
    V.upper("circular", "quads are circular", quad_circularity(g, pn.x), "quad", T.identity);
    if (f.vertex.count("xdual") && f.vertex.count("ndual")) {
        OmegaCheck oc = check_omega(pn, f.v("xdual"), f.v("ndual"));
        V.upper("associates", "dx curly dxdual + dn curly dndual = 0", oc.associate_residual, "quad", T.identity);
        V.upper("associates-parallel", "dxdual, dndual parallel to dx", oc.parallel, T.identity);
        V.lower("associates-margin", "dxdual - kappa dndual does not vanish", oc.worst_margin, T.margin);
        Mat G(4, 4);
        G << 0, 1, 0, 0, 1, 0, 0, 0, 0, 0, 0, 1, 0, 0, 1, 0;
        OSystemReport os = check_osystem(ParallelFamily{g, Space(Signature{3, 0}), {pn.x, f.v("xdual"), pn.n, f.v("ndual")}}, WMetric(G));
        V.upper("osystem-omega", "[dPhi ^ dPhi] = 0 for (x, xdual, n, ndual)", os.bracket, "quad", T.identity);
        V.upper("osystem-agreement-omega", "sum g dx curly dx equals the bracket", os.worst_agreement(), T.identity);
    } else {
        V.skip("associates", "no xdual / ndual fields");
    }
    if (f.vertex.count("xi") && f.vertex.count("xdual")) {
        V.upper("guichard", "dxdual curly dx + dn curly dn = 0", check_guichard(pn, f.v("xdual")), "quad", T.identity);
        if (f.vertex.count("mu_plus")) {
            const Space& s = f.lie().space();
            Vec o(g.num_vertices());
            for (long v = 0; v < g.num_vertices(); ++v) o[v] = std::abs(s.ip(f.v("xi").col(v), f.v("mu_plus").col(v))) / (f.v("xi").col(v).norm() * f.v("mu_plus").col(v).norm());
            V.upper("guichard-type", "(xi, mu+) = 0", o, "vertex", T.identity);
        }
        Mat G(3, 3);
        G << 0, 0.5, 0, 0.5, 0, 0, 0, 0, 1;
        OSystemReport os = check_osystem(ParallelFamily{g, Space(Signature{3, 0}), {pn.x, f.v("xdual"), pn.n}}, WMetric(G));
        V.upper("osystem-guichard", "[dPhi ^ dPhi] = 0 for (x, xdual, n)", os.bracket, "quad", T.identity);
    } else {
        V.skip("guichard", "no xi field");
    }
    if (f.meta.contains("weingarten")) {
        double al = f.meta["weingarten"][0], be = f.meta["weingarten"][1], ga = f.meta["weingarten"][2];
        V.upper("weingarten", "alpha dn curly dn - 2 beta dn curly dx + gamma dx curly dx = 0", linear_weingarten_check(pn, al, be, ga), "quad", T.identity);
        Mat G(2, 2);
        G << ga, -be, -be, al;
        OSystemReport os = check_osystem(ParallelFamily{g, Space(Signature{3, 0}), {pn.x, pn.n}}, WMetric(G));
        V.upper("osystem-weingarten", "[dPhi ^ dPhi] = 0 for (x, n)", os.bracket, "quad", T.identity);
    } else {
        V.skip("weingarten", "no weingarten coefficients");
    }
}

inline Report verify(const NetFile& f, const Tolerances& tol = {}) {
    Verifier V(tol);
    auto guard = [&](const std::string& name, auto&& fn) {
        try {
            fn();
        } catch (const Error& e) {
            V.report.checks.push_back({name, "construction", infinity, 0, false, "", e.where()});
            V.skip(name + "-remaining", e.what());
        }
    };
    if (f.vertex.count("mu")) guard("isothermic", [&] { verify_isothermic(V, f); });
    else V.skip("isothermic", "no mu field");
    if (f.vertex.count("mu") && f.vertex.count("mu_hat")) guard("darboux", [&] { verify_darboux(V, f); });
    else V.skip("darboux", "no mu_hat field");
    if (f.vertex.count("y") && f.vertex.count("t")) guard("omega", [&] { verify_omega(V, f); });
    else V.skip("omega", "no y / t fields");
    if (f.vertex.count("x") && f.vertex.count("n")) guard("principal", [&] { verify_principal(V, f); });
    else V.skip("principal", "no x / n fields");
    return V.report;
}

// ---- transforms ----

inline NetFile transform(const NetFile& in, const std::string& op, const Params& params = {}, const Tolerances& tol = {}) {
    NetFile out;
    json meta = in.meta;
    json step = {{"op", op}};
    for (auto& [k, v] : params) step["params"][k] = v;
    bool omega = in.vertex.count("y") && in.vertex.count("t");
    if (op == "darboux") {
        // seeds are drawn until the output verifies; some seeds put the transform near infinity
        double m = param(params, "m", 0.5), c = param(params, "c", 1.0);
        int attempts = static_cast<int>(param(params, "attempts", 8));
        std::mt19937_64 rng(static_cast<std::uint64_t>(param(params, "seed", 1)));
        std::normal_distribution<double> nd;
        auto near = [&](const Frame& fr, const Vec& mu) {
            Vec r(mu.size());
            for (long a = 0; a < r.size(); ++a) r[a] = nd(rng);
            return fr.to_lightcone(mu + c * mu.norm() / r.norm() * r);
        };
        std::string last = "no attempts";
        for (int k = 0; k < attempts; ++k) {
            try {
                if (omega) {
                    OmegaNet net = omega_net(in);
                    if (!net.mu_plus.size()) throw Error(Errc::domain, "darboux of an Omega-net needs the mu_plus field");
                    out = omega_file(darboux_legendre(net, m, near(net.frame, net.mu_plus.col(0))));
                } else {
                    IsothermicNet net = isothermic_net(in);
                    Vec seed = std::isinf(m) ? isotropic_seed(net.frame, net.mu.col(0), rng) : near(net.frame, net.mu.col(0));
                    out = isothermic_file(net);
                    out.vertex["mu_hat"] = darboux_transform(net, m, seed).mu;
                }
                validate(out);
                if (!omega) out.meta["vertical_label"] = encode(m);
                Report r = verify(out, tol);
                if (r.pass()) {
                    step["attempts"] = k + 1;
                    break;
                }
                for (auto& ch : r.checks)
                    if (!ch.pass()) last = "check " + ch.name + " failed";
            } catch (const Error& e) {
                if (e.code() == Errc::domain || e.code() == Errc::spectral_collision) throw;
                last = e.what();
            }
            if (k + 1 == attempts) throw Error(Errc::seed_degeneracy, "no Darboux seed gave a verified transform in " + std::to_string(attempts) + " attempts; last: " + last);
        }
        if (!omega) meta["vertical_label"] = encode(m);
    } else if (op == "calapso") {
        double t = param(params, "t", 0);
        if (omega) {
            out = omega_file(calapso_legendre(omega_net(in), t).net);
        } else {
            out = isothermic_file(calapso_transform(isothermic_net(in), t).net);
        }
    } else if (op == "christoffel") {
        if (omega) throw Error(Errc::domain, "christoffel applies to isothermic files; use dual for Omega-nets");
        IsothermicNet net = isothermic_net(in);
        out = isothermic_file(dual_net(net, christoffel_dual(net)));
    } else if (op == "dual") {
        if (!omega) throw Error(Errc::domain, "dual applies to Omega-net files");
        OmegaNet net = omega_net(in);
        out = omega_file(dual_legendre(principal_net(net), associates(net), net.frame));
    } else if (op == "associates") {
        if (!omega) throw Error(Errc::domain, "associates applies to Omega-net files");
        out = omega_file(omega_net(in));
        for (const char* k : {"xi"})
            if (in.vertex.count(k)) out.vertex[k] = in.vertex.at(k);
    } else {
        throw Error(Errc::domain, "unknown transform " + op);
    }
    meta["history"].push_back(step);
    out.meta = meta;
    if (op != "darboux" || omega) out.meta.erase("vertical_label");
    if (op != "associates") out.meta.erase("quantity");
    validate(out);
    return out;
}

// ---- export ----

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string to_obj(const NetFile& f, const std::string& field) {
    const Mat& x = f.v(field);
    Grid g = f.grid();
    if (x.rows() != 3) throw Error(Errc::format, "obj export needs a 3-dimensional field, " + field + " has " + std::to_string(x.rows()));
    if (g.dim() != 2) throw Error(Errc::format, "obj export needs a 2-dimensional grid");
    std::string s = "# dnet " + field + "\n";
    for (long v = 0; v < x.cols(); ++v) s += "v " + fmt(x(0, v)) + " " + fmt(x(1, v)) + " " + fmt(x(2, v)) + "\n";
    for (long q = 0; q < g.num_quads(); ++q) {
        auto v = g.oriented_quad(q).v;
        s += "f " + std::to_string(v[0] + 1) + " " + std::to_string(v[1] + 1) + " " + std::to_string(v[2] + 1) + " " + std::to_string(v[3] + 1) + "\n";
    }
    return s;
}

inline std::string to_csv(const NetFile& f, const std::string& field) {
    Mat x;
    std::string cell = "vertex";
    if (f.vertex.count(field)) x = f.vertex.at(field);
    else if (f.edge.count(field)) x = f.edge.at(field).transpose(), cell = "edge";
    else if (f.form.count(field)) x = f.form.at(field), cell = "edge";
    else throw Error(Errc::format, "no field " + field);
    std::string s = cell;
    for (long r = 0; r < x.rows(); ++r) s += ",c" + std::to_string(r);
    s += "\n";
    for (long c = 0; c < x.cols(); ++c) {
        s += std::to_string(c);
        for (long r = 0; r < x.rows(); ++r) s += "," + (std::isfinite(x(r, c)) ? fmt(x(r, c)) : std::string(x(r, c) > 0 ? "inf" : x(r, c) < 0 ? "-inf" : "nan"));
        s += "\n";
    }
    return s;
}

// components x cells, as written by to_csv
inline Mat load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::format, "cannot read " + path);
    std::string line;
    std::getline(in, line);
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::string tok;
        std::getline(ls, tok, ',');
        std::vector<double> r;
        while (std::getline(ls, tok, ',')) r.push_back(tok == "inf" ? infinity : tok == "-inf" ? -infinity : std::strtod(tok.c_str(), nullptr));
        rows.push_back(std::move(r));
    }
    if (rows.empty()) return Mat();
    Mat m(rows.front().size(), rows.size());
    for (size_t c = 0; c < rows.size(); ++c) {
        if (rows[c].size() != rows.front().size()) throw Error(Errc::format, "ragged csv");
        for (size_t r = 0; r < rows[c].size(); ++r) m(r, c) = rows[c][r];
    }
    return m;
}

} // namespace dnet::io
