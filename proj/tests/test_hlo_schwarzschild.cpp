#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "bsvar/hlo_flat.hpp"
#include "bsvar/hlo_schwarzschild.hpp"
#include "bsvar/oracle_fv.hpp"

using namespace bsvar;

namespace {

const Background bh{1.0, 4.0};

std::vector<double> radii(double lo, double hi, std::size_t n)
{
    return uniform_grid(lo, hi, n);
}

// antiderivative of r^2 / (r - 2M)^2 in z = r - 2M
double weight_primitive(double M, double r)
{
    double z = r - 2.0 * M;
    return z + 4.0 * M * std::log(z) - 4.0 * M * M / z;
}

} // namespace

TEST(HloSchw, SolverPotentialClosedForm)
{
    auto pl = Potential::piecewise_constant({0.0, 3.0}, {0.4}, -0.2);
    auto sp = SchwPotential::piecewise(bh, pl);
    EXPECT_DOUBLE_EQ(sp.solver_potential(4.0), 0.0);
    double w7 = 0.4 * (weight_primitive(1.0, 7.0) - weight_primitive(1.0, 4.0));
    EXPECT_NEAR(sp.solver_potential(7.0), w7, 1e-13);
    double w20 = w7 - 0.2 * (weight_primitive(1.0, 20.0) - weight_primitive(1.0, 7.0));
    EXPECT_NEAR(sp.solver_potential(20.0), w20, 1e-12);
    EXPECT_DOUBLE_EQ(sp.velocity(7.0), -0.2);
    EXPECT_DOUBLE_EQ(sp.left_velocity(7.0), 0.4);
}

TEST(HloSchw, PotentialVariants)
{
    auto pl = Potential::piecewise_constant({0.0, 3.0}, {0.4}, 0.0);
    auto integ = SchwPotential::piecewise(bh, pl, PotentialVariant::integrable);
    // -int_r^inf with u0 = 0 beyond r = 7
    EXPECT_NEAR(integ.value(5.0), -0.4 * (weight_primitive(1.0, 7.0) - weight_primitive(1.0, 5.0)), 1e-13);
    EXPECT_DOUBLE_EQ(integ.value(9.0), 0.0);
    auto bad = SchwPotential::piecewise(bh, Potential::constant(0.3), PotentialVariant::integrable);
    EXPECT_THROW(bad.value(5.0), config_error);
    auto st = SchwPotential::static_profile(bh, 0.5);
    EXPECT_NEAR(st.value(11.0), 0.0, 1e-13);
    EXPECT_NEAR(st.velocity(8.0), std::sqrt(0.25 + 0.75 * 0.25), 1e-15);
}

TEST(HloSchw, ActionBreakdownEscapeOrbit)
{
    // C = 0: u = u_E along the arc
    double v = escape_velocity(bh, 8.0);
    auto arc = integrate_arc(bh, {0.0, 8.0, v}, 5.0);
    SchwPath path;
    path.segments.push_back({false, 0.0, 0.0, arc});
    auto w = SchwPotential::piecewise(bh, Potential::constant(0.1));
    auto ab = action_of_path(bh, path, constant_forcing(0.0), w);
    EXPECT_NEAR(ab.k, 0.0, 1e-9);
    EXPECT_GT(ab.p, 0.0);
    EXPECT_NEAR(ab.total, ab.w + ab.p, 1e-15);
    EXPECT_NEAR(ab.w, w.value(8.0), 1e-15);
}

TEST(HloSchw, ActionBreakdownStationaryPath)
{
    SchwPath path;
    PathSegment s;
    s.on_boundary = true;
    s.t_a = 0.0;
    s.t_b = 3.0;
    path.segments.push_back(s);
    auto ab = action_of_path(bh, path, constant_forcing(0.9), SchwPotential::boundary_only(bh));
    EXPECT_NEAR(ab.total, -3.0 * (0.81 - 0.5) / (2.0 * 0.5), 1e-14);
}

TEST(HloSchw, FlatLimitMatchesFlatSolver)
{
    Background tiny{1e-8, 1.0};
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> U(-0.9, 0.9);
    for (int inst = 0; inst < 3; ++inst) {
        double a = U(rng), b = U(rng), c = U(rng), tail = U(rng);
        auto pl = Potential::piecewise_constant({0.0, 2.4, 5.1, 7.7}, {a, b, c}, tail);
        auto bc = iid_forcing(-0.9, 0.9, 0.5, 300 + inst);
        auto xs = uniform_grid(0.0, 10.0, 1000);
        std::vector<double> rs;
        for (double x : xs) rs.push_back(1.0 + x);
        auto flat = solve_ivbp_flat(pl, StepFunction::constant(0.0), bc, 0.0, 2.0, xs);
        auto schw = solve_ivbp_schw(tiny, SchwPotential::piecewise(tiny, pl), StepFunction::constant(0.0), bc, 0.0,
                                    2.0, rs);
        PiecewiseField s = schw.field;
        s.origin = 0.0;
        s.x = xs;
        EXPECT_LT(l1_distance(flat.field, s), 1e-6) << inst;
    }
}

TEST(HloSchw, SteadyStateIsPreserved)
{
    for (double p : {0.3, 0.6}) {
        double phi = static_velocity(bh, p, bh.r_star);
        auto sp = SchwPotential::static_profile(bh, p);
        auto rs = radii(4.0, 30.0, 300);
        auto sol = solve_ivbp_schw(bh, sp, StepFunction::constant(1.0), constant_forcing(phi, 1.0), 0.0, 6.0, rs);
        for (std::size_t i = 0; i < rs.size(); ++i)
            EXPECT_NEAR(sol.field.u[i], static_velocity(bh, p, rs[i]), 1e-10) << rs[i];
    }
}

TEST(HloSchw, InfallFollowsCharacteristics)
{
    auto sp = SchwPotential::piecewise(bh, Potential::constant(-0.9));
    auto rs = radii(4.0, 20.0, 200);
    double t = 3.0;
    auto sol = solve_ivbp_schw(bh, sp, StepFunction::constant(0.0), constant_forcing(-0.99), 0.0, t, rs);
    for (std::size_t i = 0; i < rs.size(); ++i) {
        const auto& m = sol.minimizers[i];
        EXPECT_FALSE(m.from_boundary);
        // oracle: integrate forward from the foot
        auto arc = integrate_arc(bh, {0.0, m.departure_r, -0.9}, t);
        EXPECT_NEAR(arc.states.back().r, rs[i], 1e-9);
        EXPECT_NEAR(arc.states.back().u, sol.field.u[i], 1e-9);
        // backward from (t, r) with the reported velocity lands on the initial line at the foot
        auto back = integrate_arc(bh, {t, rs[i], sol.field.u[i]}, 0.0);
        EXPECT_NEAR(back.states.back().r, m.departure_r, 1e-7);
    }
}

TEST(HloSchw, AgreesWithFiniteVolume)
{
    auto pl = Potential::piecewise_constant({0.0, 3.0, 6.5}, {0.6, -0.4}, 0.2);
    auto sp = SchwPotential::piecewise(bh, pl);
    auto bc = square_forcing(0.9, 0.1, 1.5);
    double d[2];
    int k = 0;
    for (std::size_t n : {3000u, 6000u}) {
        FvGrid g{4.0, 19.0, n, 0.9};
        auto fv = fv_solve(bh, [&](double r) { return sp.velocity(r); }, bc, 0.0, 3.0, g);
        std::vector<double> rs;
        for (double r : fv.field.x)
            if (r < 14.0) rs.push_back(r);
        auto hl = solve_ivbp_schw(bh, sp, StepFunction::constant(0.0), bc, 0.0, 3.0, rs);
        PiecewiseField f = fv.field;
        f.x.resize(rs.size());
        f.u.resize(rs.size());
        d[k++] = l1_distance(f, hl.field);
    }
    EXPECT_LT(d[0], 0.05);
    EXPECT_GT(d[0] / d[1], 1.4);
    EXPECT_LT(d[0] / d[1], 2.6);
}

TEST(HloSchw, MinimizersOrderedAndVelocitiesBounded)
{
    auto pl = Potential::piecewise_constant({0.0, 2.0, 5.0}, {-0.5, 0.7}, -0.1);
    auto bc = iid_forcing(-0.3, 0.95, 0.5, 8);
    auto rs = radii(4.0, 16.0, 600);
    auto sol = solve_ivbp_schw(bh, SchwPotential::piecewise(bh, pl), StepFunction::constant(0.0), bc, 0.0, 4.0, rs);
    auto rank = [](const SchwMinimizer& m) { return m.from_boundary ? -m.departure_time : 1e6 + m.departure_r; };
    for (std::size_t i = 0; i < rs.size(); ++i) {
        EXPECT_LT(std::abs(sol.field.u[i]), 1.0);
        if (i > 0) EXPECT_LE(rank(sol.minimizers[i - 1]), rank(sol.minimizers[i]) + 1e-9) << rs[i];
    }
}

TEST(HloSchw, DensityIsPsiOrFootValue)
{
    auto pl = Potential::piecewise_constant({0.0, 4.0}, {0.2}, 0.5);
    StepFunction v0{{1.0, 2.0}, {3.0, 4.0, 5.0}};
    auto bc = iid_forcing(0.3, 0.95, 0.7, 4);
    bc.psi_lo = 10.0;
    bc.psi_hi = 20.0;
    auto rs = radii(4.0, 12.0, 300);
    auto sol = solve_ivbp_schw(bh, SchwPotential::piecewise(bh, pl), v0, bc, 0.0, 3.0, rs);
    for (std::size_t i = 0; i < rs.size(); ++i) {
        const auto& m = sol.minimizers[i];
        double expect = m.from_boundary ? sample(bc, m.departure_time).psi : v0(m.departure_r - bh.r_star);
        EXPECT_EQ(sol.field.v[i], expect);
    }
}

TEST(HloSchw, RestartConsistency)
{
    auto pl = Potential::piecewise_constant({0.0, 3.0}, {0.5}, -0.3);
    auto sp = SchwPotential::piecewise(bh, pl);
    auto bc = square_forcing(0.95, 0.2, 1.0);
    auto fine = radii(4.0, 30.0, 26000);
    auto xs = radii(4.0, 12.0, 400);
    auto direct = solve_ivbp_schw(bh, sp, StepFunction::constant(0.0), bc, 0.0, 3.0, xs);
    auto half = solve_ivbp_schw(bh, sp, StepFunction::constant(0.0), bc, 0.0, 1.5, fine);
    auto again = solve_ivbp_schw(bh, SchwPotential::piecewise(bh, Potential::from_field(half.field)),
                                 StepFunction::constant(0.0), bc, 1.5, 3.0, xs);
    EXPECT_LT(l1_distance(direct.field, again.field), 5e-3);
}

TEST(HloSchw, RejectsGridInsideBoundary)
{
    auto sp = SchwPotential::boundary_only(bh);
    EXPECT_THROW(solve_ivbp_schw(bh, sp, StepFunction::constant(0.0), constant_forcing(0.5), 0.0, 1.0, {4.0, 5.0}),
                 config_error);
    EXPECT_THROW(solve_ivbp_schw(bh, sp, StepFunction::constant(0.0), constant_forcing(0.5), 1.0, 1.0, {5.0}),
                 config_error);
}

TEST(HloSchw, ExcursionTableMatchesDirectRoundTrip)
{
    const auto& tab = detail::ExcursionTable::get(bh, 64.0, {});
    ASSERT_FALSE(tab.empty());
    for (double v : {0.05, 0.2, 0.41, 0.6, 0.68}) {
        StopRules rules;
        rules.t_end = 1e3;
        rules.r_floor = bh.r_star;
        auto run = run_arc(bh, {0.0, bh.r_star, v, 0.0}, rules);
        ASSERT_EQ(run.reason, ArcEnd::floor);
        double c = conserved_c(bh, bh.r_star, v);
        if (run.end.t > tab.t_max()) continue;
        EXPECT_NEAR(tab(run.end.t), 0.5 * c * run.end.t + run.end.p, 1e-6 * (1.0 + run.end.t)) << v;
        EXPECT_GE(run.end.t, return_time_bound(bh, bh.r_star, v));
    }
}

TEST(HloSchw, BoundaryActionSupercriticalBound)
{
    double beta = (0.81 - 0.5) / (2.0 * 0.5);
    for (double span : {10.0, 50.0, 200.0}) EXPECT_LE(boundary_action(bh, constant_forcing(0.9), 0.0, span) / span, -beta + 1e-12);
}

TEST(HloSchw, BoundaryActionNoCreditIsNonnegativeAndSublinear)
{
    SchwOptions o;
    o.node_spacing = 1.0 / 16.0;
    auto bc = constant_forcing(-0.3);
    double prev_rate = 1e9;
    for (double span : {8.0, 32.0, 128.0}) {
        double S = boundary_action(bh, bc, 0.0, span, o);
        EXPECT_GE(S, 0.0);
        EXPECT_LT(S / span, prev_rate);
        // waiting alone costs u_E^2 / (2 (1 - u_E^2)) = 0.5 per unit time
        EXPECT_LT(S / span, 0.5);
        prev_rate = S / span;
    }
}

TEST(HloSchw, BoundaryActionSubadditive)
{
    SchwOptions o;
    o.node_spacing = 1.0 / 32.0;
    auto bc = iid_forcing(0.0, 0.9, 1.0, 99);
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<int> pick(0, 30 * 32);
    for (int k = 0; k < 15; ++k) {
        int a = pick(rng), b = pick(rng), c = pick(rng);
        int lo = std::min({a, b, c}), hi = std::max({a, b, c}), mid = a + b + c - lo - hi;
        if (lo == mid || mid == hi) continue;
        double t0 = lo / 32.0, t1 = mid / 32.0, t2 = hi / 32.0;
        double s02 = boundary_action(bh, bc, t0, t2, o);
        double s01 = boundary_action(bh, bc, t0, t1, o);
        double s12 = boundary_action(bh, bc, t1, t2, o);
        EXPECT_LE(s02, s01 + s12 + 1e-9) << t0 << " " << t1 << " " << t2;
    }
}

TEST(HloSchw, GlobalSolutionFlatLimit)
{
    Background tiny{1e-8, 1.0};
    auto g = global_solution_schw(tiny, constant_forcing(0.5), 0.0, 1.0 + 3.0, 64.0);
    EXPECT_TRUE(g.converged);
    EXPECT_NEAR(g.u, 0.5, 1e-6);
    EXPECT_NEAR(g.t_star, -3.0 / 0.5, 1e-5);
}

TEST(HloSchw, GlobalSolutionSupercritical)
{
    auto bc = constant_forcing(0.9, 2.0);
    double c = conserved_c(bh, bh.r_star, 0.9);
    for (double r : {6.0, 50.0, 500.0}) {
        auto g = global_solution_schw(bh, bc, 0.0, r, 1024.0);
        EXPECT_TRUE(g.converged);
        EXPECT_NEAR(g.u, std::sqrt(c + (1.0 - c) * 2.0 / r), 1e-9) << r;
        EXPECT_EQ(g.v, sample(bc, g.t_star).psi);
    }
}
