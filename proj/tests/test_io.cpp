#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "bsvar/config.hpp"
#include "bsvar/io.hpp"

using namespace bsvar;
using nlohmann::json;

TEST(Io, DoublesRoundTrip)
{
    for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, std::nextafter(1.0, 2.0)})
        EXPECT_EQ(std::stod(format_double(x)), x);
    EXPECT_EQ(format_double(std::nan("")), "nan");
    EXPECT_EQ(format_double(0.5), "0.5");
}

TEST(Io, FnvKnownValues)
{
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
    EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);
    EXPECT_EQ(hex16(fnv1a64("foobar")), "85944171f73967e8");
}

TEST(Io, FieldCsvRoundTrip)
{
    PiecewiseField f;
    f.origin = 4.0;
    f.x = {4.1, 4.2, 4.3};
    f.u = {0.1, 1.0 / 3.0, -0.7};
    f.v = {1.0, 2.0, 3.0};
    f.c = {0.01, 0.02, 0.03};
    std::stringstream ss;
    write_field_csv(ss, f, true);
    EXPECT_EQ(ss.str().substr(0, 8), "r,u,v,c\n");
    auto g = read_field_csv(ss, 4.0);
    EXPECT_EQ(g.x, f.x);
    EXPECT_EQ(g.u, f.u);
    EXPECT_EQ(g.v, f.v);
    EXPECT_EQ(g.c, f.c);

    std::stringstream flat;
    f.origin = 0.0;
    write_field_csv(flat, f, false);
    auto t = read_csv(flat);
    EXPECT_EQ(t.header, (std::vector<std::string>{"x", "u", "v"}));
    EXPECT_EQ(t.rows.size(), 3u);
}

TEST(Io, CsvRejectsRaggedRows)
{
    std::stringstream ss("a,b\n1,2\n3\n");
    EXPECT_THROW(read_csv(ss), std::invalid_argument);
    std::stringstream empty;
    EXPECT_THROW(read_csv(empty), std::invalid_argument);
}

TEST(Io, ArcsCsvHasOneRowPerSample)
{
    Background bg{1.0, 4.0};
    auto arc = integrate_arc(bg, {0.0, 8.0, 0.6}, 5.0);
    std::stringstream ss;
    write_arcs_csv(ss, {{arc, to_string(arc.classification)}, {arc, "light_cone"}});
    auto t = read_csv(ss);
    EXPECT_EQ(t.header, (std::vector<std::string>{"arc", "t", "r", "u", "c", "classification"}));
    EXPECT_EQ(t.rows.size(), 2 * arc.states.size());
    EXPECT_EQ(t.rows.front()[5], "escaping");
    EXPECT_EQ(t.rows.back()[0], "1");
}

TEST(Io, ProcessSpecJsonRoundTrip)
{
    std::vector<ProcessSpec> specs{constant_forcing(0.9), square_forcing(0.8, 0.0, 2.0), iid_forcing(0.0, 0.95, 0.5, 77)};
    ProcessSpec ou;
    ou.kind = ProcessKind::discrete_ou;
    ou.seed = 5;
    ou.ou_mean = 0.4;
    specs.push_back(ou);
    for (const auto& s : specs) {
        json j = s;
        auto back = j.get<ProcessSpec>();
        for (double t : {-3.7, 0.0, 0.25, 1.5, 12.0}) {
            EXPECT_EQ(sample(back, t).phi, sample(s, t).phi);
            EXPECT_EQ(sample(back, t).psi, sample(s, t).psi);
        }
        EXPECT_EQ(json(back), j);
    }
    EXPECT_THROW(json({{"kind", "brownian"}}).get<ProcessSpec>(), config_error);
}

TEST(Io, BackgroundJsonValidates)
{
    json j = Background{1.0, 4.0};
    EXPECT_EQ(j.get<Background>().r_star, 4.0);
    EXPECT_THROW((json{{"mass", 1.0}, {"r_star", 2.0}}).get<Background>(), config_error);
}

TEST(Io, ErgodicReportJson)
{
    ErgodicReport rep;
    rep.rho_estimates = {{50.0, -6.25, -0.125}};
    rep.rho_hat = -0.125;
    rep.theta_hat = 0.5;
    rep.attraction_records = {{4.0, std::exp(-1.0), 1.0}};
    json j = rep;
    EXPECT_EQ(j["rho_estimates"][0]["rate"], -0.125);
    EXPECT_EQ(j["attraction_records"][0]["radius"], 1.0);
    rep.theta_hat = std::nan("");
    EXPECT_TRUE(json(rep)["theta_hat"].is_null());
}

TEST(Io, LocateLine)
{
    std::string text = "{\n  \"a\": 1,\n  \"b\": {\n    \"c\": [1,\n      2, {\"d\": \"x\"}]\n  },\n  \"e\": true\n}\n";
    using ptr = json::json_pointer;
    EXPECT_EQ(locate_line(text, ptr("/a")), 2);
    EXPECT_EQ(locate_line(text, ptr("/b")), 3);
    EXPECT_EQ(locate_line(text, ptr("/b/c/0")), 4);
    EXPECT_EQ(locate_line(text, ptr("/b/c/1")), 5);
    EXPECT_EQ(locate_line(text, ptr("/b/c/2/d")), 5);
    EXPECT_EQ(locate_line(text, ptr("/e")), 7);
    EXPECT_EQ(locate_line(text, ptr("/zz")), 0);
}

namespace {
std::string error_of(const std::string& text)
{
    try {
        parse_run_config(text);
    } catch (const config_error& e) {
        return e.what();
    }
    return "";
}
} // namespace

TEST(Config, ParsesFullDocument)
{
    std::string text = R"({
  "model": "schw",
  "seed": 11,
  "background": {"mass": 1, "r_star": 4},
  "forcing": {"kind": "iid_piecewise_constant", "phi_lo": 0.0, "phi_hi": 0.95, "cell": 1.0},
  "initial": {"kind": "piecewise_constant", "knots": [0, 2], "values": [0.3], "tail": 0.1},
  "density": {"breaks": [1.0], "values": [0, 1]},
  "time": {"t0": 0, "t1": 3},
  "grid": {"lo": 0, "hi": 8, "n": 40},
  "solver": {"node_spacing": 0.03125},
  "experiment": {"spans": [10, 20], "radii": [10, 20]}
})";
    auto c = parse_run_config(text);
    EXPECT_EQ(c.model, Model::schw);
    EXPECT_EQ(c.forcing.seed, 11u);
    EXPECT_EQ(c.forcing.kind, ProcessKind::iid_piecewise_constant);
    EXPECT_EQ(c.grid.n, 40u);
    auto rs = radial_grid(c);
    EXPECT_DOUBLE_EQ(rs.front(), 4.1);
    auto w = schw_potential(c.background, c.initial);
    EXPECT_EQ(w.velocity(5.0), 0.3);
    EXPECT_EQ(w.velocity(7.0), 0.1);
    EXPECT_EQ(density_datum(c.density)(1.5), 1.0);

    auto again = parse_run_config(text);
    EXPECT_EQ(c.hash(), again.hash());
    auto reseeded = parse_run_config(text, 12);
    EXPECT_NE(c.hash(), reseeded.hash());
    EXPECT_EQ(reseeded.forcing.seed, 12u);
}

TEST(Config, ErrorsNameTheLine)
{
    std::string bad_rstar = "{\n  \"model\": \"schw\",\n  \"background\": {\n    \"mass\": 1,\n    \"r_star\": 1.5\n  }\n}";
    auto msg = error_of(bad_rstar);
    EXPECT_NE(msg.find("config:5:"), std::string::npos) << msg;
    EXPECT_NE(msg.find("/background/r_star"), std::string::npos) << msg;

    std::string unknown = "{\n  \"background\": {\"mass\": 0, \"r_star\": 1},\n  \"grdi\": {}\n}";
    msg = error_of(unknown);
    EXPECT_NE(msg.find("config:3:"), std::string::npos) << msg;
    EXPECT_NE(msg.find("unknown key"), std::string::npos) << msg;

    std::string syntax = "{\n  \"background\": {\"mass\": 0,, \"r_star\": 1}\n}";
    msg = error_of(syntax);
    EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;

    std::string forcing = "{\n  \"background\": {\"mass\": 0, \"r_star\": 1},\n  \"forcing\": {\n    \"kind\": "
                          "\"periodic_deterministic\",\n    \"waveform\": \"square\",\n    \"period\": -1\n  }\n}";
    msg = error_of(forcing);
    EXPECT_NE(msg.find("config:3:"), std::string::npos) << msg;
    EXPECT_NE(msg.find("period"), std::string::npos) << msg;

    std::string knots = "{\n  \"background\": {\"mass\": 0, \"r_star\": 1},\n  \"initial\": {\n    \"knots\": [0, 2, 1],"
                        "\n    \"values\": [0.1, 0.2]\n  }\n}";
    msg = error_of(knots);
    EXPECT_NE(msg.find("config:4:"), std::string::npos) << msg;
    EXPECT_NE(msg.find("/initial/knots/2"), std::string::npos) << msg;
}

TEST(Config, ModelMustMatchMass)
{
    EXPECT_FALSE(error_of(R"({"background": {"mass": 1, "r_star": 4}})").empty());
    EXPECT_FALSE(error_of(R"({"model": "schw", "background": {"mass": 0, "r_star": 4}})").empty());
    EXPECT_TRUE(error_of(R"({"model": "schw", "background": {"mass": 1, "r_star": 4}})").empty());
}
