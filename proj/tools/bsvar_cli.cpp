#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "bsvar/config.hpp"
#include "bsvar/ergodics.hpp"
#include "bsvar/io.hpp"
#include "bsvar/oracle_fv.hpp"
#include "bsvar/transport.hpp"
#include "bsvar_presets.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace bsvar;

namespace {

constexpr int exit_config = 2;
constexpr int exit_numerical = 3;
constexpr int schema_version = 1;

struct Flags {
    std::string config_path;
    std::string preset;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool oracle = false;
};

std::string read_text(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("cannot read config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RunConfig load(const Flags& f)
{
    if (f.preset.empty() == f.config_path.empty()) throw config_error("give exactly one of --config and --preset");
    std::string text;
    if (!f.preset.empty()) {
        auto it = presets().find(f.preset);
        if (it == presets().end()) {
            std::string names;
            for (const auto& [k, v] : presets()) names += " " + k;
            throw config_error("unknown preset '" + f.preset + "'; available:" + names);
        }
        text = it->second;
    } else {
        text = read_text(f.config_path);
    }
    return parse_run_config(text, f.seed);
}

class RunDir {
public:
    RunDir(const RunConfig& cfg, const Flags& f, const std::string& command)
    {
        std::string material = command + (f.oracle ? "\noracle\n" : "\n") + cfg.canonical.dump();
        hash_ = hex16(fnv1a64(material));
        path_ = fs::path(f.out.empty() ? cfg.output_dir : f.out) / hash_;
        fs::create_directories(path_);
        write("config.json", cfg.canonical.dump(2) + "\n");
    }

    const std::string& hash() const { return hash_; }
    const fs::path& path() const { return path_; }

    void write(const std::string& name, const std::string& content) const
    {
        std::ofstream out(path_ / name, std::ios::binary | std::ios::trunc);
        out << content;
        if (!out) throw std::runtime_error("cannot write " + (path_ / name).string());
    }

    template <class F>
    void csv(const std::string& name, F&& body) const
    {
        std::ostringstream ss;
        body(ss);
        write(name, ss.str());
    }

    void summary(const std::string& name, json j) const { write(name, j.dump(2) + "\n"); }

private:
    std::string hash_;
    fs::path path_;
};

json header(const RunDir& dir, const std::string& command, const RunConfig& cfg)
{
    return {{"schema_version", schema_version},
            {"command", command},
            {"config_hash", dir.hash()},
            {"model", to_string(cfg.model)},
            {"background", cfg.background},
            {"forcing", cfg.forcing}};
}

// ------------------------------------------------------------ characteristics

int cmd_characteristics(const RunConfig& cfg, const Flags& f)
{
    RunDir dir(cfg, f, "characteristics");
    const auto& c = cfg.characteristics;
    const Background& bg = cfg.background;
    double t_end = c.t0 + c.duration;
    auto n = static_cast<long>(std::floor((c.u_max - c.u_min) / c.u_step + 1e-9)) + 1;

    std::vector<LabeledArc> arcs;
    json list = json::array();
    for (long k = 0; k < n; ++k) {
        double u = c.u_min + static_cast<double>(k) * c.u_step;
        u = std::nearbyint(u * 1e12) / 1e12;
        auto arc = integrate_arc(bg, {c.t0, c.r0, u}, t_end, {}, c.r_ceiling);
        list.push_back({{"arc", arcs.size()},
                        {"u0", u},
                        {"c", arc.c},
                        {"classification", to_string(arc.classification)},
                        {"end", to_string(arc.end)},
                        {"max_c_drift", arc.max_c_drift}});
        std::string label = to_string(arc.classification);
        arcs.push_back({std::move(arc), label});
    }
    for (double s : {1.0, -1.0}) {
        auto lc = light_cone_curve(bg, c.t0, c.r0, t_end, s);
        list.push_back({{"arc", arcs.size()},
                        {"u0", s},
                        {"c", 1.0},
                        {"classification", "light_cone"},
                        {"end", to_string(lc.end)},
                        {"max_c_drift", 0.0}});
        arcs.push_back({std::move(lc), "light_cone"});
    }
    dir.csv("arcs.csv", [&](std::ostream& os) { write_arcs_csv(os, arcs); });

    json j = header(dir, "characteristics", cfg);
    j["r0"] = c.r0;
    j["t0"] = c.t0;
    j["t_end"] = t_end;
    j["escape_velocity"] = escape_velocity(bg, c.r0);
    j["arc_count"] = n;
    j["light_cone_count"] = 2;
    j["arcs"] = list;
    dir.summary("summary.json", j);
    std::cout << dir.path().string() << "\n";
    return 0;
}

// ------------------------------------------------------------ solve

double fv_at(const FvResult& fv, const FvGrid& g, double x)
{
    double dr = (g.r_max - g.r_min) / static_cast<double>(g.n_cells);
    auto i = static_cast<long>(std::floor((x - g.r_min) / dr));
    i = std::clamp(i, 0L, static_cast<long>(g.n_cells) - 1);
    return fv.field.u[static_cast<std::size_t>(i)];
}

int cmd_solve(const RunConfig& cfg, const Flags& f, const std::string& command)
{
    bool oracle = f.oracle || command == "oracle-diff";
    if (oracle && cfg.model == Model::moving_boundary)
        throw config_error("the finite-volume oracle has no moving-boundary mode");
    RunDir dir(cfg, f, command);
    const Background& bg = cfg.background;
    auto xs = radial_grid(cfg);
    auto v0 = density_datum(cfg.density);
    json j = header(dir, command, cfg);
    j["t0"] = cfg.t0;
    j["t1"] = cfg.t1;
    j["grid"] = {{"lo", xs.front()}, {"hi", xs.back()}, {"n", xs.size()}};

    PiecewiseField field;
    std::function<double(double)> u0;
    if (cfg.model == Model::flat) {
        auto pot = flat_potential(cfg.initial);
        field = solve_ivbp_flat(pot, v0, cfg.forcing, cfg.t0, cfg.t1, xs).field;
        u0 = [pot](double x) { return pot.velocity(x); };
    } else if (cfg.model == Model::schw) {
        auto pot = schw_potential(bg, cfg.initial);
        SchwOptions so;
        so.node_spacing = cfg.node_spacing;
        field = solve_ivbp_schw(bg, pot, v0, cfg.forcing, cfg.t0, cfg.t1, xs, so).field;
        u0 = [pot](double r) { return pot.velocity(r); };
    } else {
        auto mb = solve_moving_boundary(flat_potential(cfg.initial), v0, cfg.t1 - cfg.t0, xs);
        field = mb.field;
        j["edges"] = {mb.phi0, mb.phi1};
    }
    bool rel = cfg.model == Model::schw;
    dir.csv("field.csv", [&](std::ostream& os) { write_field_csv(os, field, rel); });

    if (cfg.model != Model::moving_boundary) {
        auto trace = pieces(cfg.forcing, cfg.t0, cfg.t1);
        dir.csv("trace.csv", [&](std::ostream& os) { write_trace_csv(os, trace); });
        json tj = json::array();
        for (const auto& p : trace) tj.push_back({{"a", p.a}, {"b", p.b}, {"phi", p.phi}, {"psi", p.psi}});
        j["boundary_trace"] = {{"pieces", tj},
                               {"u_at_first_point", field.u.empty() ? json(nullptr) : json(field.u.front())}};
    }
    j["shock_locations"] = shock_locations(field);
    j["bv_seminorm"] = total_variation(field.u);

    if (oracle) {
        double origin = rel ? bg.r_star : 0.0;
        FvGrid g{origin + cfg.grid.lo, origin + cfg.grid.hi, cfg.oracle_cells, 0.9};
        auto fv = fv_solve(bg, u0, cfg.forcing, cfg.t0, cfg.t1, g);
        dir.csv("oracle.csv", [&](std::ostream& os) { write_field_csv(os, fv.field, rel); });
        PiecewiseField sampled = field;
        for (std::size_t i = 0; i < xs.size(); ++i) sampled.u[i] = fv_at(fv, g, xs[i]);
        std::vector<double> data_u;
        for (double x : xs) data_u.push_back(u0(x));
        j["oracle"] = {{"cells", cfg.oracle_cells},
                       {"l1_diff", l1_distance(field, sampled)},
                       {"tv_initial", total_variation(data_u)},
                       {"mass_initial", fv.mass_initial},
                       {"mass_final", fv.mass_final},
                       {"flux_in", fv.flux_in},
                       {"flux_out", fv.flux_out}};
    }
    dir.summary("summary.json", j);
    std::cout << dir.path().string() << "\n";
    return 0;
}

// ------------------------------------------------------------ ergodic

int cmd_ergodic(const RunConfig& cfg, const Flags& f)
{
    RunDir dir(cfg, f, "ergodic");
    const Background& bg = cfg.background;
    const auto& e = cfg.experiment;
    ErgodicOptions eo;
    eo.t0 = e.t;
    if (cfg.node_spacing > 0.0) eo.node_spacing = cfg.node_spacing;
    auto rep = estimate_rho(bg, cfg.forcing, e.spans, eo);
    if (!e.radii.empty()) {
        double ref = e.reference.value_or(rep.theta_hat);
        AsymptoticOptions ao;
        ao.t = e.t;
        if (cfg.node_spacing > 0.0) ao.node_spacing = cfg.node_spacing;
        rep.asymptotic_records = asymptotic_velocity_experiment(bg, cfg.forcing, e.radii, ref, ao);
    }
    dir.csv("rho.csv", [&](std::ostream& os) { write_rho_csv(os, rep.rho_estimates); });
    dir.csv("asymptotic.csv", [&](std::ostream& os) { write_asymptotic_csv(os, rep.asymptotic_records); });

    json j = header(dir, "ergodic", cfg);
    j["report"] = rep;
    const auto& s = cfg.forcing;
    bool constant = s.kind == ProcessKind::periodic_deterministic && s.waveform == Waveform::constant;
    if (constant && bg.mass > 0.0 && sample(s, 0.0).phi > escape_velocity(bg, bg.r_star)) {
        double bound = constant_forcing_rho_bound(bg, sample(s, 0.0).phi);
        j["rho_bound"] = {{"value", bound},
                          {"satisfied", rep.rho_hat <= bound + 1e-9},
                          {"note", "constant forcing above the escape velocity at r*: rho <= -(q^2 - uE^2) / (2 (1 - uE^2)), "
                                   "so a stationary global solution exists"}};
    }
    dir.summary("report.json", j);
    std::cout << dir.path().string() << "\n";
    return 0;
}

// ------------------------------------------------------------ attract

int cmd_attract(const RunConfig& cfg, const Flags& f)
{
    RunDir dir(cfg, f, "attract");
    const Background& bg = cfg.background;
    const auto& e = cfg.experiment;
    if (e.lookbacks.empty()) throw config_error("config: /experiment/lookbacks: attract needs at least one lookback");
    PullbackOptions po;
    po.t = e.t;
    po.grid_points = e.grid_points;
    po.tol = cfg.tolerance;
    if (cfg.node_spacing > 0.0) po.node_spacing = cfg.node_spacing;
    PullbackResult res;
    bool rel = cfg.model == Model::schw;
    if (cfg.model == Model::flat) {
        res = pullback_experiment(cfg.forcing, flat_potential(cfg.initial), e.window, e.lookbacks, po);
    } else if (rel) {
        res = pullback_experiment(bg, cfg.forcing, schw_potential(bg, cfg.initial), bg.r_star + e.window, e.lookbacks,
                                  po);
    } else {
        throw config_error("config: /model: attract needs model flat or schw");
    }
    dir.csv("attraction.csv", [&](std::ostream& os) { write_attraction_csv(os, res.records); });
    dir.csv("reference.csv", [&](std::ostream& os) { write_field_csv(os, res.reference, rel); });
    json j = header(dir, "attract", cfg);
    j["window"] = e.window;
    j["records"] = res.records;
    j["warnings"] = res.warnings;
    dir.summary("report.json", j);
    std::cout << dir.path().string() << "\n";
    return 0;
}

void add_flags(CLI::App* sub, Flags& f)
{
    sub->add_option("--config", f.config_path, "run configuration (JSON)");
    sub->add_option("--preset", f.preset, "built-in configuration");
    sub->add_option("--seed", f.seed, "overrides the seed of the configuration");
    sub->add_option("--out", f.out, "output root; the run directory is named by the config hash");
    sub->add_flag("--oracle", f.oracle, "also run the finite-volume oracle and report the L1 difference");
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Variational solvers for Burgers-type flows on flat and Schwarzschild backgrounds"};
    app.require_subcommand(1);
    Flags flags;
    std::map<std::string, CLI::App*> subs;
    for (const char* name : {"characteristics", "solve", "ergodic", "attract", "oracle-diff"})
        add_flags(subs[name] = app.add_subcommand(name), flags);
    subs["characteristics"]->description("characteristic funnel from a base point, with light cones");
    subs["solve"]->description("variational solution at the final time");
    subs["ergodic"]->description("rate estimate and asymptotic velocities");
    subs["attract"]->description("pullback attraction records");
    subs["oracle-diff"]->description("variational solution against the finite-volume oracle");
    auto* list = app.add_subcommand("presets", "list the built-in configurations");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : exit_config;
    }

    try {
        if (list->parsed()) {
            for (const auto& [k, v] : presets()) std::cout << k << "\n";
            return 0;
        }
        RunConfig cfg = load(flags);
        if (subs["characteristics"]->parsed()) return cmd_characteristics(cfg, flags);
        if (subs["solve"]->parsed()) return cmd_solve(cfg, flags, "solve");
        if (subs["oracle-diff"]->parsed()) return cmd_solve(cfg, flags, "oracle-diff");
        if (subs["ergodic"]->parsed()) return cmd_ergodic(cfg, flags);
        if (subs["attract"]->parsed()) return cmd_attract(cfg, flags);
    } catch (const config_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_config;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_config;
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_config;
    } catch (const numerical_failure& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return exit_numerical;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return exit_numerical;
    }
    return 0;
}
