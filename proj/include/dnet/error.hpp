#pragma once

#include <stdexcept>
#include <string>

namespace dnet {

enum class Errc {
    domain,
    integration,
    connection,
    degeneracy,
    orthogonal_lines,
    point_at_infinity,
    frame,
    not_koenigs,
    seed_degeneracy,
    spectral_collision,
    gauge,
    consistency,
    not_dual,
    not_type_one,
    transversality,
    generation,
    format,
};

inline const char* errc_name(Errc c) {
    switch (c) {
    case Errc::domain: return "domain";
    case Errc::integration: return "integration";
    case Errc::connection: return "connection";
    case Errc::degeneracy: return "degeneracy";
    case Errc::orthogonal_lines: return "orthogonal-lines";
    case Errc::point_at_infinity: return "point-at-infinity";
    case Errc::frame: return "frame";
    case Errc::not_koenigs: return "not-koenigs";
    case Errc::seed_degeneracy: return "seed-degeneracy";
    case Errc::spectral_collision: return "spectral-collision";
    case Errc::gauge: return "gauge";
    case Errc::consistency: return "consistency";
    case Errc::not_dual: return "not-dual";
    case Errc::not_type_one: return "not-type-1";
    case Errc::transversality: return "transversality";
    case Errc::generation: return "generation";
    case Errc::format: return "format";
    }
    return "unknown";
}

// `where` is a cell index (vertex, edge or quad, depending on the error); -1 if none.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what, long where = -1)
        : std::runtime_error(std::string(errc_name(code)) + " error: " + what), code_(code), where_(where) {}

    Errc code() const noexcept { return code_; }
    long where() const noexcept { return where_; }

private:
    Errc code_;
    long where_;
};

} // namespace dnet
