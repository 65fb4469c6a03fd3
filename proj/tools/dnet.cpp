#include <iostream>

#include <CLI11.hpp>

#include "dnet/io.hpp"

using namespace dnet;

namespace {

enum Exit { ok = 0, failed = 1, usage = 2, degenerate = 3 };

int exit_for(const Error& e) {
    std::cerr << "dnet: " << e.what();
    if (e.where() >= 0) std::cerr << " (at index " << e.where() << ")";
    std::cerr << "\n";
    return e.code() == Errc::domain || e.code() == Errc::format ? usage : degenerate;
}

std::pair<std::string, std::string> split_kv(const std::string& s) {
    auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw Error(Errc::domain, "expected name=value, got " + s);
    return {s.substr(0, eq), s.substr(eq + 1)};
}

Signature parse_signature(const std::string& s) {
    auto comma = s.find(',');
    try {
        if (comma == std::string::npos) throw std::invalid_argument(s);
        return {std::stoi(s.substr(0, comma)), std::stoi(s.substr(comma + 1))};
    } catch (const std::exception&) {
        throw Error(Errc::domain, "bad signature " + s + " (expected p,q)");
    }
}

void print_summary(const io::Report& r) {
    for (auto& c : r.checks)
        std::cout << (c.pass() ? "pass " : "FAIL ") << c.name << "  residual " << io::fmt(c.residual) << (c.lower_bound ? " >= " : " <= ") << c.tol
                  << (c.where >= 0 ? "  worst " + c.cell + " " + std::to_string(c.where) : std::string()) << "\n";
    for (auto& [n, why] : r.skipped) std::cout << "skip " << n << "  " << why << "\n";
    std::cout << (r.pass() ? "PASS" : "FAIL") << "\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Discrete nets: generate, verify, transform and export"};
    app.require_subcommand(1);

    std::string kind, dims = "6x6", signature, out, in, report, op, field, format;
    std::uint64_t seed = 1;
    std::vector<std::string> params, tols;
    std::optional<double> m, t, c;
    bool no_validate = false;

    auto* gen = app.add_subcommand("gen", "generate a net");
    gen->add_option("kind", kind, "net kind")->required()->check(CLI::IsMember(io::kinds()));
    gen->add_option("--dims", dims, "grid size AxB");
    gen->add_option("--seed", seed, "random seed");
    gen->add_option("--signature", signature, "ambient signature p,q");
    gen->add_option("--param", params, "generator parameter k=v");
    gen->add_option("-o,--output", out, "output file")->required();

    auto* ver = app.add_subcommand("verify", "run every applicable check");
    ver->add_option("-i,--input", in, "net file")->required();
    ver->add_option("--tol", tols, "tolerance override name=value (closed, identity, margin or a check name)");
    ver->add_option("--report", report, "report file");

    auto* tr = app.add_subcommand("transform", "transform a net");
    tr->add_option("op", op, "transformation")->required()->check(CLI::IsMember({"darboux", "calapso", "christoffel", "dual", "associates"}));
    tr->add_option("-i,--input", in, "net file")->required();
    tr->add_option("--m", m, "Darboux label");
    tr->add_option("--t", t, "Calapso parameter");
    tr->add_option("--c", c, "Darboux seed offset, relative to the base lift");
    tr->add_option("--seed", seed, "Darboux seed draw");
    tr->add_option("--tol", tols, "tolerance override for the output check");
    tr->add_flag("--no-validate", no_validate, "skip load-time invariant checks");
    tr->add_option("-o,--output", out, "output file")->required();

    auto* ex = app.add_subcommand("export", "write a field as a mesh or table");
    ex->add_option("-i,--input", in, "net file")->required();
    ex->add_option("--field", field, "field name")->required();
    ex->add_option("--format", format, "obj or csv")->required()->check(CLI::IsMember({"obj", "csv"}));
    ex->add_flag("--no-validate", no_validate, "skip load-time invariant checks");
    ex->add_option("-o,--output", out, "output file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return usage;
    }

    try {
        io::Tolerances tol;
        for (auto& s : tols) {
            auto [k, v] = split_kv(s);
            tol.set(k, io::param({{k, v}}, k, 0));
        }

        if (*gen) {
            io::Params p;
            for (auto& s : params) p.insert(split_kv(s));
            std::optional<Signature> sig;
            if (!signature.empty()) sig = parse_signature(signature);
            try {
                io::save(io::generate(kind, io::parse_dims(dims), seed, p, sig), out);
            } catch (const io::GenerationFailure& f) {
                std::string path = out + ".failure.json";
                io::write_atomic(path, f.report.dump(1) + "\n");
                std::cerr << "dnet: " << f.what() << "\ndnet: failure report written to " << path << "\n";
                return degenerate;
            }
            return ok;
        }

        if (*ver) {
            // invariants are reported by the checks, so load only checks shapes
            io::Report r = io::verify(io::load(in, false), tol);
            if (!report.empty()) io::write_atomic(report, r.to_json().dump(1) + "\n");
            print_summary(r);
            return r.pass() ? ok : failed;
        }

        if (*tr) {
            io::Params p{{"seed", std::to_string(seed)}};
            if (m) p["m"] = io::fmt(*m);
            if (t) p["t"] = io::fmt(*t);
            if (c) p["c"] = io::fmt(*c);
            io::NetFile result = io::transform(io::load(in, !no_validate), op, p, tol);
            io::Report r = io::verify(result, tol);
            if (!r.pass()) {
                print_summary(r);
                std::cerr << "dnet: transformed net fails verification; nothing written\n";
                return failed;
            }
            io::save(result, out);
            return ok;
        }

        if (*ex) {
            io::NetFile f = io::load(in, !no_validate);
            io::write_atomic(out, format == "obj" ? io::to_obj(f, field) : io::to_csv(f, field));
            return ok;
        }
    } catch (const Error& e) {
        return exit_for(e);
    } catch (const std::exception& e) {
        std::cerr << "dnet: " << e.what() << "\n";
        return degenerate;
    }
    return usage;
}
