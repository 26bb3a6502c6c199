#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "characteristics.hpp"
#include "ergodics.hpp"
#include "errors.hpp"
#include "field.hpp"
#include "forcing.hpp"
#include "geometry.hpp"

namespace bsvar {

// 17 significant digits, enough to round-trip a double.
inline std::string format_double(double x)
{
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0.0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline std::uint64_t fnv1a64(const std::string& s)
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex16(std::uint64_t h)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------- CSV

class CsvWriter {
public:
    CsvWriter(std::ostream& os, const std::vector<std::string>& header) : os_(os), cols_(header.size())
    {
        row(header);
    }

    void row(const std::vector<std::string>& cells)
    {
        if (cells.size() != cols_) throw std::invalid_argument("csv: row width differs from header");
        for (std::size_t i = 0; i < cells.size(); ++i) os_ << (i ? "," : "") << cells[i];
        os_ << '\n';
    }

    void row(const std::vector<double>& cells)
    {
        std::vector<std::string> s;
        s.reserve(cells.size());
        for (double x : cells) s.push_back(format_double(x));
        row(s);
    }

private:
    std::ostream& os_;
    std::size_t cols_;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const
    {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw std::invalid_argument("csv: no column " + name);
    }
    std::vector<double> numbers(const std::string& name) const
    {
        std::size_t k = column(name);
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto& r : rows) out.push_back(std::stod(r[k]));
        return out;
    }
};

inline CsvTable read_csv(std::istream& is)
{
    CsvTable t;
    std::string line;
    auto split = [](const std::string& l) {
        std::vector<std::string> out;
        std::stringstream ss(l);
        std::string cell;
        while (std::getline(ss, cell, ',')) out.push_back(cell);
        if (!l.empty() && l.back() == ',') out.emplace_back();
        return out;
    };
    if (!std::getline(is, line)) throw std::invalid_argument("csv: missing header row");
    t.header = split(line);
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto r = split(line);
        if (r.size() != t.header.size())
            throw std::invalid_argument("csv: line " + std::to_string(lineno) + " has " + std::to_string(r.size()) +
                                        " cells, header has " + std::to_string(t.header.size()));
        t.rows.push_back(std::move(r));
    }
    return t;
}

// Flat fields use the columns x,u,v; relativistic ones r,u,v,c.
inline void write_field_csv(std::ostream& os, const PiecewiseField& f, bool relativistic)
{
    CsvWriter w(os, relativistic ? std::vector<std::string>{"r", "u", "v", "c"} : std::vector<std::string>{"x", "u", "v"});
    for (std::size_t i = 0; i < f.x.size(); ++i) {
        double v = i < f.v.size() ? f.v[i] : std::nan("");
        if (relativistic) w.row({f.x[i], f.u[i], v, i < f.c.size() ? f.c[i] : std::nan("")});
        else w.row({f.x[i], f.u[i], v});
    }
}

inline PiecewiseField read_field_csv(std::istream& is, double origin = 0.0)
{
    auto t = read_csv(is);
    bool rel = !t.header.empty() && t.header[0] == "r";
    PiecewiseField f;
    f.origin = origin;
    f.x = t.numbers(rel ? "r" : "x");
    f.u = t.numbers("u");
    f.v = t.numbers("v");
    if (rel) f.c = t.numbers("c");
    return f;
}

struct LabeledArc {
    CharArc arc;
    std::string label; // classification, or "light_cone"
};

inline void write_arcs_csv(std::ostream& os, const std::vector<LabeledArc>& arcs)
{
    CsvWriter w(os, {"arc", "t", "r", "u", "c", "classification"});
    for (std::size_t k = 0; k < arcs.size(); ++k)
        for (const auto& s : arcs[k].arc.states)
            w.row({std::to_string(k), format_double(s.t), format_double(s.r), format_double(s.u),
                   format_double(arcs[k].arc.c), arcs[k].label});
}

inline void write_rho_csv(std::ostream& os, const std::vector<RhoEstimate>& est)
{
    CsvWriter w(os, {"span", "action", "rate"});
    for (const auto& e : est) w.row({e.span, e.action, e.rate});
}

inline void write_attraction_csv(std::ostream& os, const std::vector<AttractionRecord>& rec)
{
    CsvWriter w(os, {"lookback", "d", "radius"});
    for (const auto& r : rec) w.row({r.lookback, r.d, r.radius});
}

inline void write_asymptotic_csv(std::ostream& os, const std::vector<AsymptoticRecord>& rec)
{
    CsvWriter w(os, {"r", "u", "deviation", "converged"});
    for (const auto& r : rec)
        w.row({format_double(r.r), format_double(r.u), format_double(r.deviation), r.converged ? "1" : "0"});
}

inline void write_trace_csv(std::ostream& os, const std::vector<ForcingPiece>& pieces)
{
    CsvWriter w(os, {"a", "b", "phi", "psi"});
    for (const auto& p : pieces) w.row({p.a, p.b, p.phi, p.psi});
}

// ---------------------------------------------------------------- JSON

// NaN and infinities have no JSON form; they become null.
inline nlohmann::json json_number(double x)
{
    return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr);
}

inline void to_json(nlohmann::json& j, const Background& bg)
{
    j = {{"mass", bg.mass}, {"r_star", bg.r_star}};
}

inline void from_json(const nlohmann::json& j, Background& bg)
{
    bg = make_background(j.at("mass").get<double>(), j.at("r_star").get<double>());
}

inline ProcessKind process_kind_from(const std::string& s)
{
    if (s == "iid_piecewise_constant") return ProcessKind::iid_piecewise_constant;
    if (s == "discrete_ou") return ProcessKind::discrete_ou;
    if (s == "periodic_deterministic") return ProcessKind::periodic_deterministic;
    throw config_error("unknown forcing kind '" + s + "'");
}

inline const char* to_string(Waveform w)
{
    return w == Waveform::constant ? "constant" : "square";
}

inline Waveform waveform_from(const std::string& s)
{
    if (s == "constant") return Waveform::constant;
    if (s == "square") return Waveform::square;
    throw config_error("unknown waveform '" + s + "'");
}

// Only the fields relevant to the kind are written.
inline void to_json(nlohmann::json& j, const ProcessSpec& s)
{
    j = {{"kind", to_string(s.kind)}, {"seed", s.seed}, {"offset", s.offset}, {"clip", s.clip}};
    switch (s.kind) {
    case ProcessKind::periodic_deterministic:
        j["waveform"] = to_string(s.waveform);
        j["level_hi"] = s.level_hi;
        j["psi_hi_level"] = s.psi_hi_level;
        if (s.waveform == Waveform::square) {
            j["level_lo"] = s.level_lo;
            j["psi_lo_level"] = s.psi_lo_level;
            j["period"] = s.period;
        }
        break;
    case ProcessKind::discrete_ou:
        j["ou_mean"] = s.ou_mean;
        j["ou_rate"] = s.ou_rate;
        j["ou_sigma"] = s.ou_sigma;
        [[fallthrough]];
    case ProcessKind::iid_piecewise_constant:
        j["cell"] = s.cell;
        if (s.kind == ProcessKind::iid_piecewise_constant) {
            j["phi_lo"] = s.phi_lo;
            j["phi_hi"] = s.phi_hi;
        }
        j["psi_lo"] = s.psi_lo;
        j["psi_hi"] = s.psi_hi;
        j["coupled_psi"] = s.coupled_psi;
        break;
    }
}

inline void from_json(const nlohmann::json& j, ProcessSpec& s)
{
    s = ProcessSpec{};
    s.kind = process_kind_from(j.at("kind").get<std::string>());
    auto num = [&](const char* k, double& dst) {
        if (j.contains(k)) dst = j.at(k).get<double>();
    };
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("waveform")) s.waveform = waveform_from(j.at("waveform").get<std::string>());
    if (j.contains("coupled_psi")) s.coupled_psi = j.at("coupled_psi").get<bool>();
    num("offset", s.offset);
    num("clip", s.clip);
    num("cell", s.cell);
    num("phi_lo", s.phi_lo);
    num("phi_hi", s.phi_hi);
    num("psi_lo", s.psi_lo);
    num("psi_hi", s.psi_hi);
    num("ou_mean", s.ou_mean);
    num("ou_rate", s.ou_rate);
    num("ou_sigma", s.ou_sigma);
    num("period", s.period);
    num("level_hi", s.level_hi);
    num("level_lo", s.level_lo);
    num("psi_hi_level", s.psi_hi_level);
    num("psi_lo_level", s.psi_lo_level);
    validate(s);
}

inline void to_json(nlohmann::json& j, const RhoEstimate& e)
{
    j = {{"span", e.span}, {"action", e.action}, {"rate", e.rate}};
}

inline void to_json(nlohmann::json& j, const AttractionRecord& r)
{
    j = {{"lookback", r.lookback}, {"d", r.d}, {"radius", r.radius}};
}

inline void to_json(nlohmann::json& j, const AsymptoticRecord& r)
{
    j = {{"r", r.r}, {"u", json_number(r.u)}, {"deviation", json_number(r.deviation)}, {"converged", r.converged}};
}

inline void to_json(nlohmann::json& j, const ErgodicReport& rep)
{
    j = {{"rho_estimates", rep.rho_estimates},
         {"rho_hat", rep.rho_hat},
         {"fit_slope", rep.fit_slope},
         {"fit_residual", rep.fit_residual},
         {"theta_hat", json_number(rep.theta_hat)},
         {"global_solution_guaranteed", rep.global_solution_guaranteed},
         {"attraction_records", rep.attraction_records},
         {"asymptotic_records", rep.asymptotic_records},
         {"warnings", rep.warnings}};
}

// ------------------------------------------------------- error locations

// 1-based line of the value addressed by a JSON pointer in the raw text, or 0 if not found.
inline int locate_line(const std::string& text, const nlohmann::json::json_pointer& target)
{
    struct Frame {
        bool object;
        std::string key;
        std::size_t index;
        bool expect_key;
    };
    std::vector<Frame> stack;
    std::vector<std::string> want;
    for (auto p = target; !p.empty(); p = p.parent_pointer()) want.insert(want.begin(), p.back());
    int line = 1;
    auto matches = [&]() {
        if (stack.size() != want.size()) return false;
        for (std::size_t i = 0; i < stack.size(); ++i) {
            std::string seg = stack[i].object ? stack[i].key : std::to_string(stack[i].index);
            if (seg != want[i]) return false;
        }
        return true;
    };
    if (want.empty()) return 1;
    bool value_start = false; // the next token begins a value in the current frame
    for (std::size_t i = 0; i < text.size(); ++i) {
        char ch = text[i];
        if (ch == '\n') {
            ++line;
            continue;
        }
        if (ch == ' ' || ch == '\t' || ch == '\r') continue;
        if (ch == '"') {
            std::string s;
            for (++i; i < text.size() && text[i] != '"'; ++i) {
                if (text[i] == '\\' && i + 1 < text.size()) ++i;
                s.push_back(text[i]);
            }
            if (!stack.empty() && stack.back().object && stack.back().expect_key) {
                stack.back().key = s;
                stack.back().expect_key = false;
                continue;
            }
            if (value_start && matches()) return line;
            value_start = false;
            continue;
        }
        if (ch == ':') {
            value_start = true;
            continue;
        }
        if (ch == ',') {
            if (!stack.empty()) {
                if (stack.back().object) stack.back().expect_key = true;
                else {
                    ++stack.back().index;
                    value_start = true;
                }
            }
            continue;
        }
        if (ch == '{' || ch == '[') {
            if (value_start && matches()) return line;
            stack.push_back({ch == '{', "", 0, ch == '{'});
            value_start = ch == '[';
            continue;
        }
        if (ch == '}' || ch == ']') {
            if (!stack.empty()) stack.pop_back();
            value_start = false;
            continue;
        }
        // scalar literal
        if (value_start && matches()) return line;
        value_start = false;
        while (i + 1 < text.size() && std::string(",}]\n \t\r").find(text[i + 1]) == std::string::npos) ++i;
    }
    return 0;
}

} // namespace bsvar
