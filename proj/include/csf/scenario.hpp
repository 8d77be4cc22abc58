#pragma once

// Scenario documents: a JSON file with named charts, forms, maps,
// fibrations, families and sums, plus an ordered list of tasks. The runner
// executes the tasks and produces a report document.

#include <openssl/evp.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "csf/fiber_sum.hpp"
#include "csf/isotopy.hpp"
#include "csf/parse.hpp"

namespace csf {

using Json = nlohmann::json;

inline constexpr const char* kToolVersion = "1.0.0";

class ScenarioError : public Error {
public:
    using Error::Error;
};

struct FormEntry {
    std::string chart;
    DifferentialForm form;
};

struct FamilyEntry {
    ContactFamily family;
    std::optional<Expr> normalizer;
};

struct SumEntry {
    SumSpec spec;
};

struct ScenarioDocument {
    std::string name;
    std::string origin;
    std::string digest;  // SHA-256 of the canonical serialization
    std::map<std::string, double> constants;
    std::map<std::string, Chart> charts;
    std::map<std::string, FormEntry> forms;
    std::map<std::string, SmoothMap> maps;
    std::map<std::string, FibrationSpec> fibrations;
    std::map<std::string, FamilyEntry> families;
    std::map<std::string, SumEntry> sums;
    std::vector<Json> run;
};

// ---------------------------------------------------------------------------

inline std::string sha256_hex(std::string_view bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) throw Error("SHA-256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

/// Sorted keys, no whitespace.
inline std::string canonical_text(const Json& doc) { return doc.dump(); }

namespace detail {

inline void write_number(std::ostream& os, double v) {
    if (!std::isfinite(v)) {
        os << "null";
        return;
    }
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << buf;
}

inline void write_json(std::ostream& os, const Json& j, int indent, int depth) {
    const std::string pad(static_cast<std::size_t>(indent * (depth + 1)), ' ');
    const std::string close(static_cast<std::size_t>(indent * depth), ' ');
    switch (j.type()) {
        case Json::value_t::object: {
            if (j.empty()) {
                os << "{}";
                return;
            }
            os << "{\n";
            bool first = true;
            for (auto it = j.begin(); it != j.end(); ++it) {
                if (!first) os << ",\n";
                first = false;
                os << pad << Json(it.key()).dump() << ": ";
                write_json(os, it.value(), indent, depth + 1);
            }
            os << "\n" << close << "}";
            return;
        }
        case Json::value_t::array: {
            if (j.empty()) {
                os << "[]";
                return;
            }
            const bool flat = std::all_of(j.begin(), j.end(), [](const Json& e) { return e.is_primitive(); });
            if (flat) {
                os << "[";
                for (std::size_t i = 0; i < j.size(); ++i) {
                    if (i) os << ", ";
                    write_json(os, j[i], indent, depth + 1);
                }
                os << "]";
                return;
            }
            os << "[\n";
            for (std::size_t i = 0; i < j.size(); ++i) {
                if (i) os << ",\n";
                os << pad;
                write_json(os, j[i], indent, depth + 1);
            }
            os << "\n" << close << "]";
            return;
        }
        case Json::value_t::number_float:
            write_number(os, j.get<double>());
            return;
        default:
            os << j.dump();
    }
}

}  // namespace detail

/// Pretty-printed JSON with every floating-point number written with 17
/// significant digits; non-finite numbers become null.
inline std::string serialize_report(const Json& report) {
    std::ostringstream os;
    detail::write_json(os, report, 2, 0);
    os << "\n";
    return os.str();
}

// ---------------------------------------------------------------------------

namespace detail {

inline std::pair<std::size_t, std::size_t> line_column(std::string_view text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

/// JSON parse that rejects repeated keys inside one object.
inline Json parse_strict(std::string_view text, const std::string& origin) {
    std::vector<std::set<std::string>> seen;
    std::vector<std::string> keys;
    auto cb = [&](int, Json::parse_event_t ev, Json& parsed) {
        if (ev == Json::parse_event_t::object_start) {
            seen.emplace_back();
            keys.emplace_back();
        } else if (ev == Json::parse_event_t::object_end) {
            seen.pop_back();
            keys.pop_back();
        } else if (ev == Json::parse_event_t::key) {
            const std::string key = parsed.get<std::string>();
            if (!seen.back().insert(key).second) {
                std::string where;
                for (std::size_t i = 0; i + 1 < keys.size(); ++i) where += (where.empty() ? "" : ".") + keys[i];
                throw ScenarioError(origin + ": duplicate name '" + key + "'" + (where.empty() ? "" : " in " + where));
            }
            keys.back() = key;
        }
        return true;
    };
    try {
        return Json::parse(text.begin(), text.end(), cb);
    } catch (const Json::parse_error& e) {
        const auto [line, col] = line_column(text, e.byte == 0 ? 0 : e.byte - 1);
        std::string msg = e.what();
        if (auto p = msg.find("syntax error"); p != std::string::npos) msg = msg.substr(p);
        throw ScenarioError(origin + ": line " + std::to_string(line) + ", column " + std::to_string(col) + ": " + msg);
    }
}

class Loader {
public:
    Loader(const Json& root, std::string origin) : root_(root), origin_(std::move(origin)) {}

    ScenarioDocument load() {
        static const std::set<std::string> known{"name", "description", "constants", "charts", "forms", "maps",
                                                 "fibrations", "families", "sums", "run"};
        if (!root_.is_object()) fail("", "the document must be an object");
        for (auto it = root_.begin(); it != root_.end(); ++it)
            if (!known.count(it.key())) fail(it.key(), "unknown section");
        doc_.origin = origin_;
        doc_.name = root_.value("name", std::string("unnamed"));
        doc_.digest = sha256_hex(canonical_text(root_));
        claim_names();
        load_constants();
        each("charts", [&](const std::string& n, const Json& j, const std::string& w) { doc_.charts[n] = chart(n, j, w); });
        each("forms", [&](const std::string& n, const Json& j, const std::string& w) { doc_.forms[n] = form(j, w); });
        each("maps", [&](const std::string& n, const Json& j, const std::string& w) { doc_.maps[n] = map(n, j, w); });
        each("fibrations", [&](const std::string& n, const Json& j, const std::string& w) { doc_.fibrations[n] = fibration(n, j, w); });
        each("families", [&](const std::string& n, const Json& j, const std::string& w) { doc_.families[n] = family(n, j, w); });
        each("sums", [&](const std::string& n, const Json& j, const std::string& w) { doc_.sums[n] = sum(j, w); });
        if (root_.contains("run")) {
            if (!root_["run"].is_array()) fail("run", "must be a list of tasks");
            for (std::size_t i = 0; i < root_["run"].size(); ++i) {
                const Json& t = root_["run"][i];
                const std::string w = "run[" + std::to_string(i) + "]";
                if (!t.is_object() || !t.contains("task") || !t["task"].is_string()) fail(w, "task descriptor needs a \"task\" name");
                check_task(t, w);
                doc_.run.push_back(t);
            }
        }
        return std::move(doc_);
    }

private:
    [[noreturn]] void fail(const std::string& where, const std::string& msg) const {
        throw ScenarioError(origin_ + ": " + (where.empty() ? "" : where + ": ") + msg);
    }

    void claim_names() {
        for (const char* sec : {"charts", "forms", "maps", "fibrations", "families", "sums"}) {
            if (!root_.contains(sec)) continue;
            if (!root_[sec].is_object()) fail(sec, "must be an object of named entries");
            for (auto it = root_[sec].begin(); it != root_[sec].end(); ++it) {
                auto [pos, fresh] = owner_.emplace(it.key(), sec);
                if (!fresh) fail(std::string(sec) + "." + it.key(), "duplicate name (already declared in " + pos->second + ")");
            }
        }
    }

    void each(const char* sec, const std::function<void(const std::string&, const Json&, const std::string&)>& fn) {
        if (!root_.contains(sec)) return;
        for (auto it = root_[sec].begin(); it != root_[sec].end(); ++it) {
            const std::string w = std::string(sec) + "." + it.key();
            if (!it.value().is_object()) fail(w, "entry must be an object");
            try {
                fn(it.key(), it.value(), w);
            } catch (const ScenarioError&) {
                throw;
            } catch (const ParseError& e) {
                fail(w, e.what());
            } catch (const std::exception& e) {
                fail(w, e.what());
            }
        }
    }

    void load_constants() {
        if (!root_.contains("constants")) return;
        const Json& c = root_["constants"];
        if (!c.is_object()) fail("constants", "must be an object");
        std::map<std::string, Json> pending;
        for (auto it = c.begin(); it != c.end(); ++it) pending[it.key()] = it.value();
        while (!pending.empty()) {
            bool progress = false;
            for (auto it = pending.begin(); it != pending.end();) {
                try {
                    doc_.constants[it->first] = number(it->second, "constants." + it->first);
                    it = pending.erase(it);
                    progress = true;
                } catch (const ScenarioError&) {
                    ++it;
                }
            }
            if (!progress) fail("constants." + pending.begin()->first, "cannot be evaluated (unknown name or cycle)");
        }
    }

    double number(const Json& j, const std::string& where) const {
        if (j.is_number()) return j.get<double>();
        if (!j.is_string()) fail(where, "expected a number or a constant expression");
        try {
            const Expr e = parse_expression(j.get<std::string>(), {}, doc_.constants);
            if (!e.is_const()) fail(where, "not a constant expression");
            return e.value();
        } catch (const ParseError& e) {
            fail(where, e.what());
        }
    }

    const Json& field(const Json& j, const char* key, const std::string& where) const {
        if (!j.contains(key)) fail(where, std::string("missing \"") + key + "\"");
        return j.at(key);
    }

    std::string text(const Json& j, const char* key, const std::string& where) const {
        const Json& v = field(j, key, where);
        if (!v.is_string()) fail(where + "." + key, "expected a string");
        return v.get<std::string>();
    }

    template <class T>
    const T& ref(const std::map<std::string, T>& table, const std::string& name, const char* section, const std::string& where) const {
        auto it = table.find(name);
        if (it == table.end()) {
            auto o = owner_.find(name);
            if (o != owner_.end() && o->second == section) fail(where, "'" + name + "' is declared later in " + section);
            fail(where, "dangling reference to '" + name + "' (no such entry in " + section + ")");
        }
        return it->second;
    }

    Chart chart(const std::string& name, const Json& j, const std::string& w) const {
        const Json& coords = field(j, "coords", w);
        if (!coords.is_array()) fail(w + ".coords", "expected a list");
        std::vector<std::string> cs;
        for (const auto& c : coords) cs.push_back(c.get<std::string>());
        const Json& b = field(j, "bounds", w);
        if (!b.is_array() || b.size() != cs.size()) fail(w + ".bounds", "need one [lo, hi] pair per coordinate");
        std::vector<Interval> bounds;
        for (std::size_t i = 0; i < b.size(); ++i) {
            if (!b[i].is_array() || b[i].size() != 2) fail(w + ".bounds", "need [lo, hi] pairs");
            bounds.push_back({number(b[i][0], w + ".bounds"), number(b[i][1], w + ".bounds")});
        }
        std::vector<bool> periodic;
        if (j.contains("periodic")) {
            for (const auto& p : j["periodic"]) periodic.push_back(p.get<bool>());
            if (periodic.size() != cs.size()) fail(w + ".periodic", "need one flag per coordinate");
        }
        const int orientation = j.value("orientation", 1);
        return Chart(name, cs, bounds, periodic, orientation);
    }

    ParseContext context(const Chart& c, const std::set<std::string>& variables = {}) const {
        return ParseContext{c, doc_.constants, variables};
    }

    FormEntry form(const Json& j, const std::string& w) const {
        const std::string cn = text(j, "chart", w);
        const Chart& c = ref(doc_.charts, cn, "charts", w + ".chart");
        std::set<std::string> vars;
        if (j.contains("parameters"))
            for (const auto& p : j["parameters"]) vars.insert(p.get<std::string>());
        return FormEntry{cn, parse_form(text(j, "form", w), context(c, vars))};
    }

    Expr scalar(const std::string& src, const Chart& c, const std::string& w) const {
        try {
            const DifferentialForm f = parse_form(src, context(c));
            if (f.degree() != 0) fail(w, "expected a scalar expression");
            return f.coefficient(0u);
        } catch (const ParseError& e) {
            fail(w, e.what());
        }
    }

    SmoothMap map(const std::string&, const Json& j, const std::string& w) const {
        const Chart& s = ref(doc_.charts, text(j, "source", w), "charts", w + ".source");
        const Chart& t = ref(doc_.charts, text(j, "target", w), "charts", w + ".target");
        const Json& comps = field(j, "components", w);
        if (!comps.is_array() || comps.size() != t.dim()) fail(w + ".components", "need one expression per target coordinate");
        std::vector<Expr> es;
        for (std::size_t i = 0; i < comps.size(); ++i)
            es.push_back(scalar(comps[i].get<std::string>(), s, w + ".components[" + std::to_string(i) + "]"));
        return SmoothMap(s, t, std::move(es));
    }

    std::vector<Exclusion> exclusions(const Json& j, const Chart& c, const std::string& w) const {
        std::vector<Exclusion> out;
        if (!j.is_array()) fail(w, "expected a list of exclusions");
        for (std::size_t i = 0; i < j.size(); ++i) {
            const Json& e = j[i];
            const std::string wi = w + "[" + std::to_string(i) + "]";
            if (e.contains("negative")) {
                out.push_back(Exclusion::where_negative(scalar(e["negative"].get<std::string>(), c, wi)));
            } else if (e.contains("band")) {
                const std::string coord = e["band"].get<std::string>();
                if (!c.has(coord)) fail(wi, "unknown coordinate '" + coord + "'");
                out.push_back(Exclusion::band(coord, number(field(e, "lo", wi), wi), number(field(e, "hi", wi), wi)));
            } else {
                fail(wi, "exclusion needs \"negative\" or \"band\"");
            }
        }
        return out;
    }

    FibrationSpec fibration(const std::string& name, const Json& j, const std::string& w) const {
        FibrationSpec s;
        s.name = name;
        std::vector<std::string> base_names;
        for (const auto& b : field(j, "base", w)) base_names.push_back(b.get<std::string>());
        for (const auto& b : base_names) s.base_charts.push_back(ref(doc_.charts, b, "charts", w + ".base"));
        const Json& mus = field(j, "mu", w);
        if (!mus.is_array() || mus.size() != base_names.size()) fail(w + ".mu", "need one base form per base chart");
        for (std::size_t i = 0; i < mus.size(); ++i) {
            const FormEntry& f = ref(doc_.forms, mus[i].get<std::string>(), "forms", w + ".mu");
            if (f.chart != base_names[i]) fail(w + ".mu", "'" + mus[i].get<std::string>() + "' is not on chart '" + base_names[i] + "'");
            s.mu.push_back(f.form);
        }
        const std::string fiber = text(j, "fiber", w);
        s.fiber = ref(doc_.charts, fiber, "charts", w + ".fiber");
        const FormEntry& beta = ref(doc_.forms, text(j, "beta", w), "forms", w + ".beta");
        if (beta.chart != fiber) fail(w + ".beta", "beta must live on the fiber chart");
        s.beta = beta.form;
        if (j.contains("fiber_exclusions")) s.fiber_exclusions = exclusions(j["fiber_exclusions"], s.fiber, w + ".fiber_exclusions");
        if (j.contains("fiber_boundaries")) {
            for (const auto& b : j["fiber_boundaries"]) {
                const SmoothMap& param = ref(doc_.maps, text(b, "parametrization", w), "maps", w + ".fiber_boundaries");
                if (param.target() != s.fiber) fail(w + ".fiber_boundaries", "parametrization must land in the fiber chart");
                const int samples = b.value("samples", 64);
                s.fiber_boundaries.push_back(level_boundary(text(b, "label", w), scalar(text(b, "level", w), s.fiber, w),
                                                            param, SampleGrid(param.source(), std::vector<int>(param.source().dim(), samples))));
            }
        }
        auto base_index = [&](const Json& e, const std::string& wi) -> std::size_t {
            const std::string cn = e.value("chart", base_names.front());
            for (std::size_t i = 0; i < base_names.size(); ++i)
                if (base_names[i] == cn) return i;
            fail(wi, "'" + cn + "' is not a base chart of this fibration");
        };
        for (std::size_t i = 0; i < field(j, "pieces", w).size(); ++i) {
            const Json& p = j["pieces"][i];
            const std::string wi = w + ".pieces[" + std::to_string(i) + "]";
            BasePiece piece;
            piece.name = text(p, "name", wi);
            piece.chart = base_index(p, wi);
            const Chart& c = s.base_charts[piece.chart];
            piece.bounds = c.bounds();
            if (p.contains("bounds")) {
                if (p["bounds"].size() != c.dim()) fail(wi + ".bounds", "need one [lo, hi] pair per coordinate");
                for (std::size_t k = 0; k < c.dim(); ++k)
                    piece.bounds[k] = {number(p["bounds"][k][0], wi + ".bounds"), number(p["bounds"][k][1], wi + ".bounds")};
            }
            if (p.contains("exclusions")) piece.exclusions = exclusions(p["exclusions"], c, wi + ".exclusions");
            s.pieces.push_back(std::move(piece));
        }
        if (j.contains("collars")) {
            for (std::size_t i = 0; i < j["collars"].size(); ++i) {
                const Json& c = j["collars"][i];
                const std::string wi = w + ".collars[" + std::to_string(i) + "]";
                Collar col;
                col.name = text(c, "name", wi);
                col.index = c.value("index", 1);
                col.chart = base_index(c, wi);
                col.coord = text(c, "coord", wi);
                col.at = number(field(c, "at", wi), wi + ".at");
                col.direction = c.value("direction", 1);
                const Chart total = total_chart(s.base_charts[col.chart], s.fiber);
                col.psi = c.contains("psi") ? scalar(c["psi"].get<std::string>(), total, wi + ".psi") : Expr();
                s.collars.push_back(std::move(col));
            }
        }
        if (j.contains("seams")) {
            for (std::size_t i = 0; i < j["seams"].size(); ++i) {
                const Json& c = j["seams"][i];
                const std::string wi = w + ".seams[" + std::to_string(i) + "]";
                Seam seam;
                seam.name = text(c, "name", wi);
                seam.left = base_index(Json{{"chart", text(c, "left", wi)}}, wi);
                seam.right = base_index(Json{{"chart", text(c, "right", wi)}}, wi);
                seam.left_embedding = ref(doc_.maps, text(c, "left_embedding", wi), "maps", wi);
                seam.right_embedding = ref(doc_.maps, text(c, "right_embedding", wi), "maps", wi);
                s.seams.push_back(std::move(seam));
            }
        }
        if (j.contains("epsilon")) s.epsilon = number(j["epsilon"], w + ".epsilon");
        if (j.contains("delta")) s.delta = number(j["delta"], w + ".delta");
        s.horizontal_boundary_trivial = j.value("horizontal_boundary_trivial", false);
        if (j.contains("boundary_region")) s.boundary_region = scalar(j["boundary_region"].get<std::string>(), s.fiber, w + ".boundary_region");
        validate_spec(s);
        return s;
    }

    FamilyEntry family(const std::string& name, const Json& j, const std::string& w) const {
        const Chart& c = ref(doc_.charts, text(j, "chart", w), "charts", w + ".chart");
        const std::string param = j.value("parameter", std::string("t"));
        const DifferentialForm f = parse_form(text(j, "form", w), context(c, {param}));
        FamilyEntry e{family_from_expression(name, f, param), std::nullopt};
        if (j.contains("normalizer")) e.normalizer = scalar(j["normalizer"].get<std::string>(), c, w + ".normalizer");
        return e;
    }

    SumEntry sum(const Json& j, const std::string& w) const {
        SumEntry e;
        e.spec.left = ref(doc_.fibrations, text(j, "left", w), "fibrations", w + ".left");
        e.spec.right = ref(doc_.fibrations, text(j, "right", w), "fibrations", w + ".right");
        e.spec.n = j.value("n", 1);
        if (j.contains("epsilon")) e.spec.epsilon = number(j["epsilon"], w + ".epsilon");
        if (j.contains("fiber_identification"))
            e.spec.fiber_identification = ref(doc_.maps, j["fiber_identification"].get<std::string>(), "maps", w + ".fiber_identification");
        e.spec.same_total_space = j.value("same_total_space", false);
        auto point = [&](const char* key) {
            Point p;
            if (j.contains(key))
                for (const auto& v : j[key]) p.push_back(number(v, w + "." + key));
            return p;
        };
        e.spec.left_center = point("left_center");
        e.spec.right_center = point("right_center");
        validate_sum(e.spec);
        return e;
    }

    void check_task(const Json& t, const std::string& w) const {
        const std::string kind = t["task"].get<std::string>();
        auto need = [&](const char* key, const auto& table, const char* section) {
            if (!t.contains(key) || !t[key].is_string()) fail(w, kind + " needs \"" + key + "\"");
            ref(table, t[key].get<std::string>(), section, w + "." + key);
        };
        if (kind == "verify_contact") {
            need("form", doc_.forms, "forms");
        } else if (kind == "verify_exact_symplectic") {
            need("form", doc_.forms, "forms");
            if (t.contains("fibration")) need("fibration", doc_.fibrations, "fibrations");
        } else if (kind == "potential") {
            need("map", doc_.maps, "maps");
            need("form", doc_.forms, "forms");
        } else if (kind == "assemble") {
            need("fibration", doc_.fibrations, "fibrations");
            if (!t.contains("K")) fail(w, "assemble needs \"K\"");
        } else if (kind == "find_K") {
            need("fibration", doc_.fibrations, "fibrations");
        } else if (kind == "family") {
            need("fibration", doc_.fibrations, "fibrations");
            need("family", doc_.families, "families");
        } else if (kind == "fiber_sum") {
            need("sum", doc_.sums, "sums");
        } else {
            fail(w, "unknown task '" + kind + "'");
        }
        if (t.contains("expect") && t["expect"] != "pass" && t["expect"] != "fail") fail(w, "\"expect\" must be \"pass\" or \"fail\"");
    }

    const Json& root_;
    std::string origin_;
    ScenarioDocument doc_;
    std::map<std::string, std::string> owner_;  // name -> section
};

}  // namespace detail

inline ScenarioDocument load_scenario_text(std::string_view text, const std::string& origin = "<input>") {
    const Json root = detail::parse_strict(text, origin);
    return detail::Loader(root, origin).load();
}

inline ScenarioDocument load_scenario(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ScenarioError(path + ": cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return load_scenario_text(ss.str(), path);
}

// ---------------------------------------------------------------------------

/// Command-line overrides; unset fields fall back to the task, then to the
/// library defaults.
struct RunSettings {
    std::optional<int> grid;
    std::optional<double> threshold;
    std::optional<int> t_samples;
    std::uint64_t seed = 42;
};

enum class TaskStatus { Passed, Failed, Error };

inline const char* to_string(TaskStatus s) {
    switch (s) {
        case TaskStatus::Passed: return "passed";
        case TaskStatus::Failed: return "failed";
        case TaskStatus::Error: return "error";
    }
    return "error";
}

struct TaskOutcome {
    std::size_t index = 0;
    std::string task;
    std::string target;
    TaskStatus status = TaskStatus::Error;
    std::string message;
    double wall_time = 0.0;
    Json results = Json::object();
};

struct RunReport {
    std::string scenario;
    std::string origin;
    std::string digest;
    RunSettings settings;
    std::vector<TaskOutcome> tasks;
    double wall_time = 0.0;

    std::size_t count(TaskStatus s) const {
        return static_cast<std::size_t>(std::count_if(tasks.begin(), tasks.end(), [&](const TaskOutcome& t) { return t.status == s; }));
    }
    bool ok() const { return count(TaskStatus::Failed) == 0 && count(TaskStatus::Error) == 0; }
};

inline Json to_json(const PositivityReport& r) {
    Json j;
    j["label"] = r.label;
    j["passed"] = r.passed;
    j["min_value"] = r.min_value;
    j["max_value"] = r.max_value;
    j["raw_min"] = r.raw_min;
    j["normalization"] = r.normalization;
    j["threshold"] = r.threshold;
    j["argmin"] = r.argmin_point;
    j["grid"] = {{"chart", r.grid.chart}, {"resolution", r.grid.resolution}, {"points", r.grid.points}};
    if (r.t) j["t"] = *r.t;
    j["message"] = r.message;
    Json d = Json::object();
    for (const auto& [k, v] : r.details) d[k] = v;
    j["details"] = d;
    return j;
}

inline Json to_json(const BundleReport& r) {
    Json j;
    j["passed"] = r.passed;
    j["worst"] = to_json(r.worst);
    Json parts = Json::array();
    for (const auto& p : r.parts) parts.push_back(to_json(p));
    j["parts"] = parts;
    j["edge_residual"] = r.edge_residual;
    j["seam_residual"] = r.seam_residual;
    j["psi_overlap_residual"] = r.psi_overlap_residual;
    j["boundary_residual"] = r.boundary_residual;
    return j;
}

inline Json to_json(const PullbackReport& r) {
    return Json{{"label", r.label},
                {"passed", r.passed},
                {"max_residual", r.max_residual},
                {"worst_point", r.worst_point},
                {"worst_coefficient", r.worst_coefficient},
                {"tolerance", r.tolerance},
                {"grid", {{"chart", r.grid.chart}, {"resolution", r.grid.resolution}, {"points", r.grid.points}}}};
}

/// Report document; wall times are the only run-dependent fields.
inline Json to_json(const RunReport& r) {
    Json j;
    j["tool"] = "csfverify";
    j["version"] = kToolVersion;
    j["scenario"] = r.scenario;
    j["input"] = r.origin;
    j["input_digest"] = "sha256:" + r.digest;
    Json s;
    s["seed"] = r.settings.seed;
    s["grid"] = r.settings.grid ? Json(*r.settings.grid) : Json();
    s["threshold"] = r.settings.threshold ? Json(*r.settings.threshold) : Json();
    s["t_samples"] = r.settings.t_samples ? Json(*r.settings.t_samples) : Json();
    j["settings"] = s;
    Json tasks = Json::array();
    for (const auto& t : r.tasks) {
        tasks.push_back(Json{{"index", t.index},
                             {"task", t.task},
                             {"target", t.target},
                             {"status", to_string(t.status)},
                             {"message", t.message},
                             {"wall_time_s", t.wall_time},
                             {"results", t.results}});
    }
    j["tasks"] = tasks;
    j["summary"] = {{"tasks", r.tasks.size()},
                    {"passed", r.count(TaskStatus::Passed)},
                    {"failed", r.count(TaskStatus::Failed)},
                    {"errored", r.count(TaskStatus::Error)}};
    j["wall_time_s"] = r.wall_time;
    return j;
}

inline void emit_report(const RunReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(path + ": " + std::strerror(errno));
    out << serialize_report(to_json(report));
    if (!out) throw Error(path + ": " + std::strerror(errno));
}

// ---------------------------------------------------------------------------

namespace detail {

struct TaskContext {
    const ScenarioDocument& doc;
    const Json& task;
    const RunSettings& settings;

    int grid() const { return settings.grid.value_or(task.value("grid", kDefaultResolution)); }
    double threshold() const { return settings.threshold.value_or(task.value("threshold", kDefaultThreshold)); }
    int t_samples() const { return settings.t_samples.value_or(task.value("t_samples", kDefaultTSamples)); }
    CheckOptions check() const {
        CheckOptions o;
        o.resolution = grid();
        o.threshold = threshold();
        return o;
    }
    Json effective() const { return Json{{"grid", grid()}, {"threshold", threshold()}}; }
};

inline bool run_verify_contact(const TaskContext& c, Json& out) {
    const FormEntry& f = c.doc.forms.at(c.task["form"].get<std::string>());
    const PositivityReport r = verify_contact(f.form, SampleGrid::uniform(f.form.chart(), c.grid()), c.threshold());
    out["report"] = to_json(r);
    return r.passed;
}

inline bool run_verify_exact_symplectic(const TaskContext& c, Json& out) {
    const FormEntry& f = c.doc.forms.at(c.task["form"].get<std::string>());
    std::vector<Exclusion> ex;
    std::vector<Boundary> bounds;
    if (c.task.contains("fibration")) {
        const FibrationSpec& s = c.doc.fibrations.at(c.task["fibration"].get<std::string>());
        if (s.fiber != f.form.chart()) throw Error("form is not on the fiber chart of '" + s.name + "'");
        ex = s.fiber_exclusions;
        bounds = s.fiber_boundaries;
    }
    const bool outward = c.task.value("require_outward", !bounds.empty());
    const PositivityReport r =
        verify_exact_symplectic(f.form, SampleGrid::uniform(f.form.chart(), c.grid(), ex), bounds, c.threshold(), outward);
    out["report"] = to_json(r);
    return r.passed;
}

inline bool run_potential(const TaskContext& c, Json& out) {
    const SmoothMap& phi = c.doc.maps.at(c.task["map"].get<std::string>());
    const FormEntry& f = c.doc.forms.at(c.task["form"].get<std::string>());
    PotentialOptions o;
    o.resolution = c.grid();
    o.seed = c.settings.seed;
    const double tol = c.task.value("tolerance", 1e-8);
    if (c.task.contains("basepoint")) o.basepoint = c.task["basepoint"].get<Point>();
    const PotentialResult r = exact_symplectomorphism_potential(phi, f.form, o);
    out["closed_form"] = r.psi ? Json(to_string(*r.psi)) : Json();
    out["max_closedness_residual"] = r.max_closedness_residual;
    out["max_path_discrepancy"] = r.max_path_discrepancy;
    out["max_potential_residual"] = r.max_potential_residual;
    out["tolerance"] = tol;
    return r.max_closedness_residual < tol && r.max_path_discrepancy < tol && r.max_potential_residual < tol;
}

inline bool run_assemble(const TaskContext& c, Json& out) {
    const FibrationSpec& s = c.doc.fibrations.at(c.task["fibration"].get<std::string>());
    const double K = c.task["K"].get<double>();
    const BundleReport r = verify_bundle(assemble_sigma(s, K), s, c.check());
    out["K"] = K;
    out["bundle"] = to_json(r);
    return r.passed;
}

inline constexpr double kAgreementTolerance = 1e-12;

/// K search, contact check of sigma, compatibility on fiber slices and, for
/// bundles trivial near the horizontal boundary, the product-form check.
inline bool bundle_pipeline(const FibrationSpec& s, const CheckOptions& opt, std::size_t slices, Json& out) {
    const KSearchResult k = find_admissible_K(s, opt);
    const BundleContactForm sigma = assemble_sigma(s, k.K);
    const PositivityReport compat = verify_compatibility(sigma, s, opt, slices);
    out["K"] = k.K;
    Json trail = Json::array();
    for (const auto& [K, v] : k.trail) trail.push_back({K, v});
    out["K_trail"] = trail;
    out["bundle"] = to_json(k.report);
    out["compatibility"] = to_json(compat);
    bool ok = k.report.passed && compat.passed;
    if (s.horizontal_boundary_trivial) {
        out["boundary_product_residual"] = k.report.boundary_residual;
        ok = ok && k.report.boundary_residual <= kAgreementTolerance;
    }
    return ok;
}

inline bool run_find_K(const TaskContext& c, Json& out) {
    const FibrationSpec& s = c.doc.fibrations.at(c.task["fibration"].get<std::string>());
    return bundle_pipeline(s, c.check(), c.task.value("slices", 25), out);
}

inline bool run_family(const TaskContext& c, Json& out) {
    const FibrationSpec& s = c.doc.fibrations.at(c.task["fibration"].get<std::string>());
    const FamilyEntry& fam = c.doc.families.at(c.task["family"].get<std::string>());
    if (s.base_charts.size() != 1 || fam.family.chart != s.base_charts.front())
        throw Error("family '" + fam.family.label + "' is not on the base chart of '" + s.name + "'");
    const CheckOptions opt = c.check();
    const int ts = c.t_samples();
    const SampleGrid base_grid = SampleGrid::uniform(fam.family.chart, c.grid());
    const ContactFamily mu = fam.normalizer ? normalize_family(fam.family, *fam.normalizer, base_grid) : fam.family;
    const PositivityReport base = verify_family_contact(mu, base_grid, ts, c.threshold());
    out["base_family"] = to_json(base);
    if (!base.passed) return false;
    const LambdaFamily L = build_lambda_family(s, mu, opt, ts);
    const PositivityReport lam = verify_family_contact(L, opt, ts);
    out["lambda"] = to_json(lam);
    out["t_samples"] = ts;
    const double seam1 = bundle_distance(L.lambda1(1.0), L.lambda2(0.0), s, opt);
    const double seam2 = bundle_distance(L.lambda2(1.0), L.lambda3(0.0), s, opt);
    const double end0 = bundle_distance(L(0.0), assemble_sigma(s, L.K0(), {mu(0.0)}), s, opt);
    const double end1 = bundle_distance(L(1.0), assemble_sigma(s, L.K1(), {mu(1.0)}), s, opt);
    out["seam_residuals"] = {seam1, seam2};
    out["endpoint_residuals"] = {end0, end1};
    return lam.passed && std::max({seam1, seam2, end0, end1}) <= kAgreementTolerance;
}

inline bool run_fiber_sum(const TaskContext& c, Json& out) {
    const SumSpec& spec = c.doc.sums.at(c.task["sum"].get<std::string>()).spec;
    const CheckOptions opt = c.check();
    validate_sum(spec);
    const GluingMaps maps = build_phi(spec.n, spec.left.fiber, spec.fiber_identification, spec.epsilon);
    const GluingProperties props = gluing_properties(maps, spec.epsilon, 200, c.settings.seed);
    out["properties"] = {{"samples", props.samples},
                         {"norm_residual", props.norm_residual},
                         {"max_jacobian_determinant", props.max_determinant},
                         {"sphere_residual", props.sphere_residual},
                         {"involution_residual", props.involution_residual}};
    bool ok = props.norm_residual <= kAgreementTolerance && props.max_determinant < 0.0 &&
              props.sphere_residual <= kAgreementTolerance && props.involution_residual <= kAgreementTolerance;
    const BundleContactForm left = assemble_sigma(spec.left, 1.0), right = assemble_sigma(spec.right, 1.0);
    const PullbackReport pb = verify_gluing_pullback(spec, left.ambient[0], right.ambient[0], maps, opt);
    out["pullback"] = to_json(pb);
    if (!pb.passed) return false;
    const FibrationSpec summed = assemble_summed_fibration(spec, maps, opt);
    Json pipe;
    ok = bundle_pipeline(summed, opt, c.task.value("slices", 25), pipe) && ok;
    out["summed"] = pipe;
    // Each retained piece carries the original form at the chosen K.
    const double K = pipe["K"].get<double>();
    const BundleContactForm glued = assemble_sigma(summed, K);
    double restriction = 0.0;
    for (std::size_t side = 0; side < 2; ++side) {
        const FibrationSpec& orig = side == 0 ? spec.left : spec.right;
        const BundleContactForm o = assemble_sigma(orig, K);
        const SampleGrid g = piece_grid(summed, summed.pieces[side], opt);
        restriction = std::max(restriction, form_distance(rebind(glued.ambient[side], g.chart()), rebind(o.ambient[0], g.chart()), g));
    }
    out["restriction_residual"] = restriction;
    return ok && restriction <= 1e-10;
}

}  // namespace detail

inline std::vector<std::string> task_names() {
    return {"verify_contact", "verify_exact_symplectic", "potential", "assemble", "find_K", "family", "fiber_sum"};
}

/// What each task computes, for `csfverify explain`.
inline std::string explain_task(const std::string& task) {
    static const std::map<std::string, std::string> text{
        {"verify_contact",
         "verify_contact <form>\n"
         "  Checks that a 1-form alpha on a (2n+1)-chart is a contact form: the top\n"
         "  coefficient of alpha ^ (d alpha)^n, divided by the largest coefficient of\n"
         "  alpha to the power n+1, must exceed the threshold at every grid point."},
        {"verify_exact_symplectic",
         "verify_exact_symplectic <form> [fibration]\n"
         "  Checks that d beta is nondegenerate on the fiber chart and, when the\n"
         "  fibration declares fiber boundaries, that the Liouville field chi with\n"
         "  i_chi d beta = beta points strictly outward along them."},
        {"potential",
         "potential <map> <form>\n"
         "  For a map phi of the fiber, checks phi^* beta - beta is closed, then\n"
         "  integrates it along rays from a base point to a potential psi with\n"
         "  phi^* beta - beta = d psi, and checks exactness on random loops."},
        {"assemble",
         "assemble <fibration> K\n"
         "  Builds sigma = K mu + beta + f d Psi piece by piece, with the collar\n"
         "  cut-offs f interpolating the transition potentials, and checks the\n"
         "  result is contact on every piece and collar at the given K."},
        {"find_K",
         "find_K <fibration>\n"
         "  Searches for a K making K mu + beta + f d Psi contact (doubling, then\n"
         "  bisection), checks that sigma restricts to an exact symplectic form on\n"
         "  sampled fibers and, for bundles trivial near the fiber boundary, that\n"
         "  sigma equals K mu + beta there."},
        {"family",
         "family <fibration> <family>\n"
         "  Rescales a family of base contact forms so both ends match, then checks\n"
         "  the concatenated family Lambda_t (K0 -> K along mu_0, K mu_t, K -> K1\n"
         "  along mu_1) is contact at every t-sample and that the three branches\n"
         "  meet and end at the bundle forms of mu_0 and mu_1."},
        {"fiber_sum",
         "fiber_sum <sum>\n"
         "  Glues two bundles over Darboux balls along the annulus by\n"
         "  Upsilon(x) = sqrt(eps^2 - |x|^2)/|x| Phi_F(x), checks the gluing maps at\n"
         "  random points, checks Upsilon pulls sigma_2 back to sigma_1 on the\n"
         "  middle sphere, then runs the find_K pipeline on the summed bundle."},
    };
    auto it = text.find(task);
    if (it == text.end()) {
        std::string names;
        for (const auto& n : task_names()) names += " " + n;
        throw Error("unknown task '" + task + "'; known tasks:" + names);
    }
    return it->second;
}

/// Runs every task in order; a failure or error in one task does not stop
/// the others.
inline RunReport run_suite(const ScenarioDocument& doc, const RunSettings& settings = {}) {
    using Clock = std::chrono::steady_clock;
    const auto start = Clock::now();
    RunReport report;
    report.scenario = doc.name;
    report.origin = doc.origin;
    report.digest = doc.digest;
    report.settings = settings;
    static const std::map<std::string, std::function<bool(const detail::TaskContext&, Json&)>> runners{
        {"verify_contact", detail::run_verify_contact},
        {"verify_exact_symplectic", detail::run_verify_exact_symplectic},
        {"potential", detail::run_potential},
        {"assemble", detail::run_assemble},
        {"find_K", detail::run_find_K},
        {"family", detail::run_family},
        {"fiber_sum", detail::run_fiber_sum},
    };
    for (std::size_t i = 0; i < doc.run.size(); ++i) {
        const Json& t = doc.run[i];
        TaskOutcome o;
        o.index = i;
        o.task = t["task"].get<std::string>();
        for (const char* key : {"form", "fibration", "family", "sum", "map"})
            if (t.contains(key)) o.target += (o.target.empty() ? "" : ",") + t[key].get<std::string>();
        const detail::TaskContext ctx{doc, t, settings};
        const auto t0 = Clock::now();
        try {
            o.results["settings"] = ctx.effective();
            const bool ok = runners.at(o.task)(ctx, o.results);
            const bool expect_pass = t.value("expect", std::string("pass")) == "pass";
            o.results["expected"] = expect_pass ? "pass" : "fail";
            o.status = ok == expect_pass ? TaskStatus::Passed : TaskStatus::Failed;
            if (o.status == TaskStatus::Failed) o.message = expect_pass ? "check failed" : "check passed but was expected to fail";
        } catch (const std::exception& e) {
            // Under "expect": "fail" a refusal to certify is the expected outcome.
            const bool expect_fail = t.value("expect", std::string("pass")) == "fail";
            o.status = expect_fail && dynamic_cast<const Error*>(&e) ? TaskStatus::Passed : TaskStatus::Error;
            o.message = e.what();
            if (expect_fail) o.results["expected"] = "fail";
        }
        o.wall_time = std::chrono::duration<double>(Clock::now() - t0).count();
        report.tasks.push_back(std::move(o));
    }
    report.wall_time = std::chrono::duration<double>(Clock::now() - start).count();
    return report;
}

}  // namespace csf
