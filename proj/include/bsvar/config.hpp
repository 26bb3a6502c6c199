#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "field.hpp"
#include "forcing.hpp"
#include "geometry.hpp"
#include "hlo_flat.hpp"
#include "hlo_schwarzschild.hpp"
#include "io.hpp"

namespace bsvar {

enum class Model { flat, schw, moving_boundary };

inline const char* to_string(Model m)
{
    switch (m) {
    case Model::flat: return "flat";
    case Model::schw: return "schw";
    case Model::moving_boundary: return "moving_boundary";
    }
    return "?";
}

// Initial velocity datum. Offsets y are measured from the boundary (y = r - r*).
struct InitialSpec {
    std::string kind = "piecewise_constant"; // piecewise_constant | linear | static_profile | boundary_only
    std::vector<double> knots{0.0};
    std::vector<double> values;
    double tail = 0.0;
    double slope = 0.0;  // linear: u0 = values[0] + slope y on [0, length]
    double length = 1.0;
    double p = 0.0;      // static_profile
    PotentialVariant variant = PotentialVariant::asymptotic;
};

struct DensitySpec {
    std::vector<double> breaks;
    std::vector<double> values{0.0};
};

struct GridSpec {
    double lo = 0.0; // offset from the boundary
    double hi = 10.0;
    std::size_t n = 1000;
};

struct CharacteristicsSpec {
    double r0 = 6.0;
    double t0 = 0.0;
    double duration = 20.0;
    double u_min = -0.9, u_max = 0.9, u_step = 0.1;
    double r_ceiling = 1e4;
};

struct ExperimentSpec {
    std::vector<double> spans{50.0, 100.0, 200.0};
    std::vector<double> lookbacks;
    std::vector<double> radii;
    std::optional<double> reference; // asymptotic velocity to compare with; default theta_hat
    double window = 10.0;            // attraction window length from the boundary
    std::size_t grid_points = 200;
    double t = 0.0;
};

struct RunConfig {
    Background background{};
    Model model = Model::flat;
    std::uint64_t seed = 0;
    ProcessSpec forcing{};
    InitialSpec initial{};
    DensitySpec density{};
    double t0 = 0.0, t1 = 1.0;
    GridSpec grid{};
    double node_spacing = 0.0;
    double tolerance = 1e-9;
    std::size_t oracle_cells = 2000;
    CharacteristicsSpec characteristics{};
    ExperimentSpec experiment{};
    std::string output_dir = "runs";
    nlohmann::json canonical; // parsed document with the seed applied; hashed for the run directory

    std::string hash() const { return hex16(fnv1a64(canonical.dump())); }
};

namespace detail {

inline const std::map<std::string, std::set<std::string>>& config_keys()
{
    static const std::map<std::string, std::set<std::string>> keys{
        {"", {"background", "model", "seed", "forcing", "initial", "density", "time", "grid", "solver",
              "characteristics", "experiment", "output_dir"}},
        {"background", {"mass", "r_star"}},
        {"forcing", {"kind", "offset", "clip", "cell", "phi_lo", "phi_hi", "psi_lo", "psi_hi", "coupled_psi", "ou_mean",
                     "ou_rate", "ou_sigma", "waveform", "period", "level_hi", "level_lo", "psi_hi_level",
                     "psi_lo_level"}},
        {"initial", {"kind", "knots", "values", "tail", "slope", "length", "p", "variant"}},
        {"density", {"breaks", "values"}},
        {"time", {"t0", "t1"}},
        {"grid", {"lo", "hi", "n"}},
        {"solver", {"node_spacing", "tolerance", "oracle_cells"}},
        {"characteristics", {"r0", "t0", "duration", "u_min", "u_max", "u_step", "r_ceiling"}},
        {"experiment", {"spans", "lookbacks", "radii", "reference", "window", "grid_points", "t"}},
    };
    return keys;
}

class ConfigReader {
public:
    explicit ConfigReader(const std::string& text) : text_(text) {}

    [[noreturn]] void fail(const nlohmann::json::json_pointer& where, const std::string& msg) const
    {
        int line = locate_line(text_, where);
        std::string loc = line > 0 ? "config:" + std::to_string(line) + ": " : "config: ";
        throw config_error(loc + where.to_string() + ": " + msg);
    }

    template <class F>
    auto guard(const nlohmann::json::json_pointer& where, F&& f) const -> decltype(f())
    {
        try {
            return f();
        } catch (const config_error& e) {
            std::string m = e.what();
            if (m.rfind("config:", 0) == 0) throw;
            fail(where, m);
        } catch (const nlohmann::json::exception& e) {
            fail(where, e.what());
        } catch (const std::domain_error& e) {
            fail(where, e.what());
        }
    }

    double number(const nlohmann::json& j, const nlohmann::json::json_pointer& p) const
    {
        if (!j.is_number()) fail(p, "expected a number");
        return j.get<double>();
    }

    std::size_t count(const nlohmann::json& j, const nlohmann::json::json_pointer& p) const
    {
        if (!j.is_number_unsigned() || j.get<std::uint64_t>() == 0) fail(p, "expected a positive integer");
        return j.get<std::size_t>();
    }

    std::vector<double> numbers(const nlohmann::json& j, const nlohmann::json::json_pointer& p) const
    {
        if (!j.is_array()) fail(p, "expected an array of numbers");
        std::vector<double> out;
        for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number(j[i], p / i));
        return out;
    }

    void check_keys(const nlohmann::json& j, const std::string& section, const nlohmann::json::json_pointer& p) const
    {
        if (!j.is_object()) fail(p, "expected an object");
        const auto& allowed = config_keys().at(section);
        for (auto it = j.begin(); it != j.end(); ++it)
            if (!allowed.count(it.key())) fail(p / it.key(), "unknown key");
    }

private:
    const std::string& text_;
};

inline PotentialVariant variant_from(const std::string& s)
{
    if (s == "integrable") return PotentialVariant::integrable;
    if (s == "asymptotic") return PotentialVariant::asymptotic;
    if (s == "from_boundary") return PotentialVariant::from_boundary;
    throw config_error("unknown potential variant '" + s + "'");
}

inline void check_increasing(const ConfigReader& rd, const std::vector<double>& v,
                             const nlohmann::json::json_pointer& p, bool positive)
{
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (positive && !(v[i] > 0.0)) rd.fail(p / i, "must be positive");
        if (i > 0 && !(v[i] > v[i - 1])) rd.fail(p / i, "must be strictly increasing");
    }
}

} // namespace detail

// Parses and validates a run configuration. Errors carry the line of the offending value.
inline RunConfig parse_run_config(const std::string& text, std::optional<std::uint64_t> seed_override = {})
{
    using ptr = nlohmann::json::json_pointer;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw config_error(std::string("config: ") + e.what());
    }
    detail::ConfigReader rd(text);
    RunConfig cfg;
    rd.check_keys(j, "", ptr(""));

    if (seed_override) j["seed"] = *seed_override;
    if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned()) rd.fail(ptr("/seed"), "expected a nonnegative integer");
        cfg.seed = j["seed"].get<std::uint64_t>();
    }
    if (j.contains("model")) {
        std::string m = j["model"].is_string() ? j["model"].get<std::string>() : "";
        if (m == "flat") cfg.model = Model::flat;
        else if (m == "schw") cfg.model = Model::schw;
        else if (m == "moving_boundary") cfg.model = Model::moving_boundary;
        else rd.fail(ptr("/model"), "expected flat, schw or moving_boundary");
    }
    if (j.contains("output_dir")) {
        if (!j["output_dir"].is_string()) rd.fail(ptr("/output_dir"), "expected a string");
        cfg.output_dir = j["output_dir"].get<std::string>();
    }

    if (!j.contains("background")) rd.fail(ptr(""), "missing key background");
    {
        const auto& b = j["background"];
        rd.check_keys(b, "background", ptr("/background"));
        if (!b.contains("mass") || !b.contains("r_star")) rd.fail(ptr("/background"), "needs mass and r_star");
        double m = rd.number(b["mass"], ptr("/background/mass"));
        double rs = rd.number(b["r_star"], ptr("/background/r_star"));
        if (!(m >= 0.0)) rd.fail(ptr("/background/mass"), "mass must be nonnegative");
        if (!(rs > 2.0 * m)) rd.fail(ptr("/background/r_star"), "r_star must exceed the horizon radius 2M");
        cfg.background = Background{m, rs};
    }
    if (cfg.model == Model::schw && cfg.background.mass == 0.0)
        rd.fail(ptr("/model"), "model schw needs a positive mass; use flat for M = 0");
    if (cfg.model != Model::schw && cfg.background.mass != 0.0)
        rd.fail(ptr("/model"), "a positive mass needs model schw");

    if (j.contains("forcing")) {
        const auto& f = j["forcing"];
        rd.check_keys(f, "forcing", ptr("/forcing"));
        if (!f.contains("kind")) rd.fail(ptr("/forcing"), "missing key kind");
        for (auto it = f.begin(); it != f.end(); ++it) {
            const auto& k = it.key();
            bool text_key = k == "kind" || k == "waveform", flag = k == "coupled_psi";
            if (text_key && !it->is_string()) rd.fail(ptr("/forcing") / k, "expected a string");
            if (flag && !it->is_boolean()) rd.fail(ptr("/forcing") / k, "expected true or false");
            if (!text_key && !flag) rd.number(*it, ptr("/forcing") / k);
        }
        nlohmann::json fj = f;
        fj["seed"] = cfg.seed;
        cfg.forcing = rd.guard(ptr("/forcing"), [&] { return fj.get<ProcessSpec>(); });
        if (cfg.forcing.kind == ProcessKind::iid_piecewise_constant) {
            for (const char* k : {"phi_lo", "phi_hi"})
                if (std::abs(f.value(k, 0.0)) >= 1.0) rd.fail(ptr("/forcing") / k, "|phi| must be < 1");
        }
    } else {
        cfg.forcing.seed = cfg.seed;
    }

    if (j.contains("initial")) {
        const auto& in = j["initial"];
        ptr p("/initial");
        rd.check_keys(in, "initial", p);
        auto& s = cfg.initial;
        if (in.contains("kind")) {
            if (!in["kind"].is_string()) rd.fail(p / "kind", "expected a string");
            s.kind = in["kind"].get<std::string>();
        }
        if (in.contains("knots")) s.knots = rd.numbers(in["knots"], p / "knots");
        if (in.contains("values")) s.values = rd.numbers(in["values"], p / "values");
        if (in.contains("tail")) s.tail = rd.number(in["tail"], p / "tail");
        if (in.contains("slope")) s.slope = rd.number(in["slope"], p / "slope");
        if (in.contains("length")) s.length = rd.number(in["length"], p / "length");
        if (in.contains("p")) s.p = rd.number(in["p"], p / "p");
        if (in.contains("variant")) {
            if (!in["variant"].is_string()) rd.fail(p / "variant", "expected a string");
            s.variant = rd.guard(p / "variant", [&] { return detail::variant_from(in["variant"].get<std::string>()); });
        }
        if (s.kind == "piecewise_constant") {
            if (s.knots.empty() || s.knots.front() != 0.0) rd.fail(p / "knots", "knots must start at 0");
            detail::check_increasing(rd, s.knots, p / "knots", false);
            if (s.values.size() + 1 != s.knots.size())
                rd.fail(p / "values", "need one value per interval between knots");
        } else if (s.kind == "linear") {
            if (s.values.size() != 1) rd.fail(p / "values", "linear data needs one start value");
            if (!(s.length > 0.0)) rd.fail(p / "length", "must be positive");
        } else if (s.kind == "static_profile") {
            if (cfg.model != Model::schw) rd.fail(p / "kind", "static_profile needs model schw");
            if (!(s.p >= 0.0 && s.p < 1.0)) rd.fail(p / "p", "must lie in [0,1)");
        } else if (s.kind == "boundary_only") {
            if (cfg.model != Model::schw) rd.fail(p / "kind", "boundary_only needs model schw");
        } else {
            rd.fail(p / "kind", "expected piecewise_constant, linear, static_profile or boundary_only");
        }
        if (std::abs(s.tail) >= 1.0) rd.fail(p / "tail", "|u| must be < 1");
        for (std::size_t i = 0; i < s.values.size(); ++i)
            if (std::abs(s.values[i]) >= 1.0 && cfg.model != Model::moving_boundary)
                rd.fail(p / "values" / i, "|u| must be < 1");
    }

    if (j.contains("density")) {
        const auto& d = j["density"];
        ptr p("/density");
        rd.check_keys(d, "density", p);
        if (d.contains("breaks")) cfg.density.breaks = rd.numbers(d["breaks"], p / "breaks");
        if (d.contains("values")) cfg.density.values = rd.numbers(d["values"], p / "values");
        detail::check_increasing(rd, cfg.density.breaks, p / "breaks", false);
        if (cfg.density.values.size() != cfg.density.breaks.size() + 1)
            rd.fail(p / "values", "need one more value than breaks");
    }

    if (j.contains("time")) {
        const auto& t = j["time"];
        rd.check_keys(t, "time", ptr("/time"));
        if (t.contains("t0")) cfg.t0 = rd.number(t["t0"], ptr("/time/t0"));
        if (t.contains("t1")) cfg.t1 = rd.number(t["t1"], ptr("/time/t1"));
        if (!(cfg.t1 > cfg.t0)) rd.fail(ptr("/time/t1"), "t1 must exceed t0");
    }

    if (j.contains("grid")) {
        const auto& g = j["grid"];
        rd.check_keys(g, "grid", ptr("/grid"));
        if (g.contains("lo")) cfg.grid.lo = rd.number(g["lo"], ptr("/grid/lo"));
        if (g.contains("hi")) cfg.grid.hi = rd.number(g["hi"], ptr("/grid/hi"));
        if (g.contains("n")) cfg.grid.n = rd.count(g["n"], ptr("/grid/n"));
        if (!(cfg.grid.lo >= 0.0) && cfg.model != Model::moving_boundary)
            rd.fail(ptr("/grid/lo"), "must be >= 0 (offset from the boundary)");
        if (!(cfg.grid.hi > cfg.grid.lo)) rd.fail(ptr("/grid/hi"), "must exceed lo");
    }

    if (j.contains("solver")) {
        const auto& s = j["solver"];
        rd.check_keys(s, "solver", ptr("/solver"));
        if (s.contains("node_spacing")) cfg.node_spacing = rd.number(s["node_spacing"], ptr("/solver/node_spacing"));
        if (s.contains("tolerance")) cfg.tolerance = rd.number(s["tolerance"], ptr("/solver/tolerance"));
        if (s.contains("oracle_cells")) cfg.oracle_cells = rd.count(s["oracle_cells"], ptr("/solver/oracle_cells"));
        if (!(cfg.node_spacing >= 0.0)) rd.fail(ptr("/solver/node_spacing"), "must be >= 0");
        if (!(cfg.tolerance > 0.0)) rd.fail(ptr("/solver/tolerance"), "must be positive");
    }

    if (j.contains("characteristics")) {
        const auto& c = j["characteristics"];
        ptr p("/characteristics");
        rd.check_keys(c, "characteristics", p);
        auto& s = cfg.characteristics;
        for (auto [k, dst] : {std::pair<const char*, double*>{"r0", &s.r0}, {"t0", &s.t0}, {"duration", &s.duration},
                              {"u_min", &s.u_min}, {"u_max", &s.u_max}, {"u_step", &s.u_step},
                              {"r_ceiling", &s.r_ceiling}})
            if (c.contains(k)) *dst = rd.number(c[k], p / k);
        if (!(s.r0 - 2.0 * cfg.background.mass > horizon_guard(cfg.background)))
            rd.fail(p / "r0", "base point must lie outside the horizon");
        if (!(s.duration > 0.0)) rd.fail(p / "duration", "must be positive");
        if (!(s.u_step > 0.0)) rd.fail(p / "u_step", "must be positive");
        if (!(s.u_min > -1.0)) rd.fail(p / "u_min", "must exceed -1");
        if (!(s.u_max < 1.0 && s.u_max >= s.u_min)) rd.fail(p / "u_max", "must lie in [u_min, 1)");
    }

    if (j.contains("experiment")) {
        const auto& e = j["experiment"];
        ptr p("/experiment");
        rd.check_keys(e, "experiment", p);
        auto& s = cfg.experiment;
        if (e.contains("spans")) s.spans = rd.numbers(e["spans"], p / "spans");
        if (e.contains("lookbacks")) s.lookbacks = rd.numbers(e["lookbacks"], p / "lookbacks");
        if (e.contains("radii")) s.radii = rd.numbers(e["radii"], p / "radii");
        if (e.contains("reference") && !e["reference"].is_null())
            s.reference = rd.number(e["reference"], p / "reference");
        if (e.contains("window")) s.window = rd.number(e["window"], p / "window");
        if (e.contains("grid_points")) s.grid_points = rd.count(e["grid_points"], p / "grid_points");
        if (e.contains("t")) s.t = rd.number(e["t"], p / "t");
        detail::check_increasing(rd, s.spans, p / "spans", true);
        detail::check_increasing(rd, s.lookbacks, p / "lookbacks", true);
        detail::check_increasing(rd, s.radii, p / "radii", true);
        if (!(s.window > 0.0)) rd.fail(p / "window", "must be positive");
        for (std::size_t i = 0; i < s.radii.size(); ++i)
            if (cfg.model == Model::schw && !(s.radii[i] > cfg.background.r_star))
                rd.fail(p / "radii" / i, "radii must exceed r_star");
    }

    cfg.canonical = j;
    return cfg;
}

// ------------------------------------------------------------ builders

inline Potential flat_potential(const InitialSpec& s)
{
    if (s.kind == "linear") return Potential::linear(s.values.at(0), s.slope, s.length, s.tail);
    if (s.kind == "piecewise_constant") return Potential::piecewise_constant(s.knots, s.values, s.tail);
    throw config_error("initial datum kind '" + s.kind + "' has no flat form");
}

inline SchwPotential schw_potential(const Background& bg, const InitialSpec& s)
{
    if (s.kind == "static_profile") return SchwPotential::static_profile(bg, s.p, s.variant);
    if (s.kind == "boundary_only") return SchwPotential::boundary_only(bg);
    return SchwPotential::piecewise(bg, flat_potential(s), s.variant);
}

inline StepFunction density_datum(const DensitySpec& d)
{
    return StepFunction{d.breaks, d.values};
}

// Cell-centred grid in absolute radius (flat: x; relativistic: r = r* + offset).
inline std::vector<double> radial_grid(const RunConfig& c)
{
    double origin = c.model == Model::schw ? c.background.r_star : 0.0;
    return uniform_grid(origin + c.grid.lo, origin + c.grid.hi, c.grid.n);
}

} // namespace bsvar
