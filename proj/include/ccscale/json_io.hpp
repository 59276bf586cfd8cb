#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "ccscale/series.hpp"
#include "ccscale/series_matrix.hpp"
#include "ccscale/vector_field.hpp"

namespace ccscale {

using json = nlohmann::json;

struct ParseError : Error {
    using Error::Error;
};

struct PolyTerm {
    double coeff = 0.0;
    std::vector<int> exponents;  // global-coordinate monomial exponents

    bool operator==(const PolyTerm& o) const = default;
};

struct FieldEntry {
    std::string name;
    std::vector<int> degree;
    std::vector<std::vector<PolyTerm>> components;  // one term list per coordinate

    bool operator==(const FieldEntry& o) const = default;
};

/// The on-disk description of a field system: polynomial components in global
/// coordinates, formal degrees, a base point, truncation degree and radius.
struct FieldSpecDocument {
    int dimension = 0;
    int parameters = 1;
    std::vector<double> base_point;
    int truncation = 8;
    double radius = 1.0;
    std::vector<FieldEntry> fields;

    bool operator==(const FieldSpecDocument& o) const = default;

    /// Converts the polynomial terms to series around the base point, exactly.
    FieldSystem to_system() const {
        Point center(dimension);
        for (int i = 0; i < dimension; ++i)
            center(i) = base_point[static_cast<std::size_t>(i)];
        std::vector<WeightedField> wfs;
        for (const auto& fe : fields) {
            std::vector<TruncatedSeries> comps;
            for (const auto& terms : fe.components) {
                TruncatedSeries global(dimension, truncation, radius);
                for (const auto& t : terms) {
                    MultiIndex a(std::vector<int>(t.exponents));
                    if (a.degree() > truncation)
                        throw ParseError("field " + fe.name +
                                         ": monomial degree exceeds the truncation degree");
                    global.set_plain(a, global.plain(a) + t.coeff);
                }
                std::vector<double> shift(base_point);
                comps.push_back(recenter(global, shift));
            }
            wfs.push_back(WeightedField{make_field(dimension, center, comps, fe.name), fe.degree});
        }
        return make_system(wfs);
    }
};

namespace detail {

inline void require_keys(const json& j, const std::vector<std::string>& allowed,
                         const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const auto& k : allowed) ok = ok || it.key() == k;
        if (!ok) throw ParseError(where + ": unknown key '" + it.key() + "'");
    }
}

inline double finite_number(const json& j, const std::string& where) {
    if (!j.is_number()) throw ParseError(where + ": expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) throw ParseError(where + ": non-finite number");
    return v;
}

} // namespace detail

inline FieldSpecDocument parse_spec(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("spec is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError("spec: top level must be an object");
    detail::require_keys(
        j, {"dimension", "parameters", "base_point", "truncation", "radius", "fields"}, "spec");

    FieldSpecDocument doc;
    if (!j.contains("dimension")) throw ParseError("spec: missing 'dimension'");
    doc.dimension = j["dimension"].get<int>();
    if (doc.dimension < 1) throw ParseError("spec: dimension must be >= 1");
    doc.parameters = j.value("parameters", 1);
    if (doc.parameters < 1) throw ParseError("spec: parameters must be >= 1");
    doc.truncation = j.value("truncation", 8);
    if (doc.truncation < 0) throw ParseError("spec: truncation must be >= 0");
    doc.radius = j.contains("radius") ? detail::finite_number(j["radius"], "spec.radius") : 1.0;
    if (!(doc.radius > 0)) throw ParseError("spec.radius: must be positive");

    if (!j.contains("base_point")) throw ParseError("spec: missing 'base_point'");
    for (std::size_t i = 0; i < j["base_point"].size(); ++i)
        doc.base_point.push_back(
            detail::finite_number(j["base_point"][i], "spec.base_point[" + std::to_string(i) + "]"));
    if (static_cast<int>(doc.base_point.size()) != doc.dimension)
        throw ParseError("spec.base_point: length must equal dimension");

    if (!j.contains("fields") || !j["fields"].is_array() || j["fields"].empty())
        throw ParseError("spec.fields: need at least one field");
    for (std::size_t fi = 0; fi < j["fields"].size(); ++fi) {
        const json& jf = j["fields"][fi];
        const std::string where = "spec.fields[" + std::to_string(fi) + "]";
        detail::require_keys(jf, {"name", "degree", "components"}, where);
        FieldEntry fe;
        fe.name = jf.value("name", "X" + std::to_string(fi + 1));
        if (!jf.contains("degree")) throw ParseError(where + ": missing 'degree'");
        for (const auto& d : jf["degree"]) {
            if (!d.is_number_integer() || d.get<int>() < 0)
                throw ParseError(where + ".degree: entries must be non-negative integers");
            fe.degree.push_back(d.get<int>());
        }
        if (static_cast<int>(fe.degree.size()) != doc.parameters)
            throw ParseError(where + ".degree: length must equal parameters");
        if (!jf.contains("components") ||
            static_cast<int>(jf["components"].size()) != doc.dimension)
            throw ParseError(where + ".components: need one term list per coordinate");
        for (std::size_t ci = 0; ci < jf["components"].size(); ++ci) {
            std::vector<PolyTerm> terms;
            for (std::size_t ti = 0; ti < jf["components"][ci].size(); ++ti) {
                const json& jt = jf["components"][ci][ti];
                const std::string twhere =
                    where + ".components[" + std::to_string(ci) + "][" + std::to_string(ti) + "]";
                detail::require_keys(jt, {"coeff", "exponents"}, twhere);
                PolyTerm t;
                t.coeff = detail::finite_number(jt.at("coeff"), twhere + ".coeff");
                for (const auto& e : jt.at("exponents")) {
                    if (!e.is_number_integer() || e.get<int>() < 0)
                        throw ParseError(twhere + ".exponents: need non-negative integers");
                    t.exponents.push_back(e.get<int>());
                }
                if (static_cast<int>(t.exponents.size()) != doc.dimension)
                    throw ParseError(twhere + ".exponents: length must equal dimension");
                terms.push_back(std::move(t));
            }
            fe.components.push_back(std::move(terms));
        }
        doc.fields.push_back(std::move(fe));
    }
    return doc;
}

inline json emit_spec(const FieldSpecDocument& doc) {
    json j;
    j["dimension"] = doc.dimension;
    j["parameters"] = doc.parameters;
    j["base_point"] = doc.base_point;
    j["truncation"] = doc.truncation;
    j["radius"] = doc.radius;
    j["fields"] = json::array();
    for (const auto& fe : doc.fields) {
        json jf;
        jf["name"] = fe.name;
        jf["degree"] = fe.degree;
        jf["components"] = json::array();
        for (const auto& terms : fe.components) {
            json jc = json::array();
            for (const auto& t : terms) jc.push_back({{"coeff", t.coeff}, {"exponents", t.exponents}});
            jf["components"].push_back(jc);
        }
        j["fields"].push_back(jf);
    }
    return j;
}

inline json series_to_json(const TruncatedSeries& f) {
    json terms = json::array();
    for (const auto& [a, v] : f.coefficients())
        terms.push_back({{"exponents", a.exponents()}, {"coeff", v / a.factorial()}});
    return json{{"dim", f.dim()},
                {"max_degree", f.max_degree()},
                {"radius", f.radius()},
                {"terms", terms}};
}

inline json series_matrix_to_json(const SeriesMatrix& m) {
    json rows = json::array();
    for (int i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (int j = 0; j < m.cols(); ++j) row.push_back(series_to_json(m.at(i, j)));
        rows.push_back(row);
    }
    return rows;
}

/// FNV-1a over the canonical dump; good enough to tie a report to its inputs.
inline std::string digest(const std::string& payload) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : payload) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

} // namespace ccscale
