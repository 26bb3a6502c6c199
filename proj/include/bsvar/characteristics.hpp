#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "errors.hpp"
#include "geometry.hpp"

namespace bsvar {

struct CharState {
    double t = 0.0;
    double r = 0.0;
    double u = 0.0;
};

enum class Classification { bounded_infall, sub_escape_return, escaping, static_flat };

inline const char* to_string(Classification c)
{
    switch (c) {
    case Classification::bounded_infall: return "bounded_infall";
    case Classification::sub_escape_return: return "sub_escape_return";
    case Classification::escaping: return "escaping";
    case Classification::static_flat: return "static_flat";
    }
    return "?";
}

enum class ArcEnd { time_reached, absorbed, radius_target, floor, ceiling };

inline const char* to_string(ArcEnd e)
{
    switch (e) {
    case ArcEnd::time_reached: return "time_reached";
    case ArcEnd::absorbed: return "absorbed";
    case ArcEnd::radius_target: return "radius_target";
    case ArcEnd::floor: return "floor";
    case ArcEnd::ceiling: return "ceiling";
    }
    return "?";
}

struct IntegratorOptions {
    double rtol = 1e-10;
    double atol = 1e-12;
    double max_step = std::numeric_limits<double>::infinity();
    bool project = true;
    // absorption radius above the horizon; negative means 1e-8 * max(1, 2M)
    double absorb_guard = -1.0;
    long max_steps = 20'000'000;
};

inline double absorb_guard(const Background& bg, const IntegratorOptions& opt)
{
    return opt.absorb_guard > 0.0 ? opt.absorb_guard : 1e-8 * std::max(1.0, 2.0 * bg.mass);
}

// A sample on an arc. p is the running integral of 2M/(r - 2M) dt from the arc start
// (signed with the integration direction).
struct ArcPoint {
    double t = 0.0;
    double r = 0.0;
    double u = 0.0;
    double p = 0.0;
};

struct CharArc {
    std::vector<CharState> states;
    std::vector<double> p_integral;
    double c = 0.0;
    Classification classification = Classification::static_flat;
    ArcEnd end = ArcEnd::time_reached;
    double max_c_drift = 0.0;
};

// Stop rules for a single run. r_floor stops an inward crossing, r_target any crossing.
struct StopRules {
    double t_end = 0.0;
    double r_floor = -std::numeric_limits<double>::infinity();
    double r_target = std::numeric_limits<double>::quiet_NaN();
    double r_ceiling = std::numeric_limits<double>::infinity();
    // stop when u changes sign (turning point); used by return-time experiments
    bool stop_on_turn = false;
};

struct ArcRun {
    ArcPoint end;
    ArcEnd reason = ArcEnd::time_reached;
    bool turned = false;
    long steps = 0;
};

namespace detail {

struct Y {
    double z, u, p;
};

inline Y axpy(const Y& y, double h, const Y& k)
{
    return {y.z + h * k.z, y.u + h * k.u, y.p + h * k.p};
}

struct Rhs {
    double m;
    double dir;
    Y operator()(const Y& y) const
    {
        double r = y.z + 2.0 * m;
        double ur = std::clamp(y.u, -1.0, 1.0);
        return {dir * (y.z / r) * ur, dir * (m / (r * r)) * (ur * ur - 1.0), dir * (2.0 * m / y.z)};
    }
};

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

struct StepResult {
    Y y;
    Y k7;
    double err;
};

inline StepResult dp5_step(const Rhs& f, const Y& y, const Y& k1, double h, const IntegratorOptions& opt)
{
    Y k2 = f(axpy(y, h * a21, k1));
    Y s3{y.z + h * (a31 * k1.z + a32 * k2.z), y.u + h * (a31 * k1.u + a32 * k2.u),
         y.p + h * (a31 * k1.p + a32 * k2.p)};
    Y k3 = f(s3);
    Y s4{y.z + h * (a41 * k1.z + a42 * k2.z + a43 * k3.z), y.u + h * (a41 * k1.u + a42 * k2.u + a43 * k3.u),
         y.p + h * (a41 * k1.p + a42 * k2.p + a43 * k3.p)};
    Y k4 = f(s4);
    Y s5{y.z + h * (a51 * k1.z + a52 * k2.z + a53 * k3.z + a54 * k4.z),
         y.u + h * (a51 * k1.u + a52 * k2.u + a53 * k3.u + a54 * k4.u),
         y.p + h * (a51 * k1.p + a52 * k2.p + a53 * k3.p + a54 * k4.p)};
    Y k5 = f(s5);
    Y s6{y.z + h * (a61 * k1.z + a62 * k2.z + a63 * k3.z + a64 * k4.z + a65 * k5.z),
         y.u + h * (a61 * k1.u + a62 * k2.u + a63 * k3.u + a64 * k4.u + a65 * k5.u),
         y.p + h * (a61 * k1.p + a62 * k2.p + a63 * k3.p + a64 * k4.p + a65 * k5.p)};
    Y k6 = f(s6);
    Y yn{y.z + h * (b1 * k1.z + b3 * k3.z + b4 * k4.z + b5 * k5.z + b6 * k6.z),
         y.u + h * (b1 * k1.u + b3 * k3.u + b4 * k4.u + b5 * k5.u + b6 * k6.u),
         y.p + h * (b1 * k1.p + b3 * k3.p + b4 * k4.p + b5 * k5.p + b6 * k6.p)};
    if (!(yn.z > 0.0)) return {yn, k1, std::numeric_limits<double>::infinity()};
    Y k7 = f(yn);
    double ez = h * (e1 * k1.z + e3 * k3.z + e4 * k4.z + e5 * k5.z + e6 * k6.z + e7 * k7.z);
    double eu = h * (e1 * k1.u + e3 * k3.u + e4 * k4.u + e5 * k5.u + e6 * k6.u + e7 * k7.u);
    double ep = h * (e1 * k1.p + e3 * k3.p + e4 * k4.p + e5 * k5.p + e6 * k6.p + e7 * k7.p);
    double sz = opt.rtol * std::max(std::abs(y.z), std::abs(yn.z));
    double su = opt.atol + opt.rtol * std::max(std::abs(y.u), std::abs(yn.u));
    double sp = opt.atol + opt.rtol * std::max(std::abs(y.p), std::abs(yn.p));
    double err = std::max({std::abs(ez) / sz, std::abs(eu) / su, std::abs(ep) / sp});
    if (!std::isfinite(err)) err = std::numeric_limits<double>::infinity();
    return {yn, k7, err};
}

inline void project_u(double m, double c, Y& y)
{
    if (m == 0.0) return;
    double r = y.z + 2.0 * m;
    double s2 = c + (1.0 - c) * (2.0 * m / r);
    if (s2 > 0.0 && s2 < 1.0) y.u = std::copysign(std::sqrt(s2), y.u);
}

} // namespace detail

// Conserved quantity of a state, allowing the light-cone values |u| = 1 (C = 1).
inline double level_of(const Background& bg, double r, double u)
{
    if (std::abs(u) >= 1.0) return 1.0;
    return conserved_c(bg, r, u);
}

// Core integrator: advance from `start` toward rules.t_end (either direction), honouring the
// stop rules. Samples at accepted steps are appended to `samples` when non-null.
inline ArcRun run_arc(const Background& bg, const ArcPoint& start, const StopRules& rules,
                      const IntegratorOptions& opt = {}, std::vector<ArcPoint>* samples = nullptr)
{
    const double m = bg.mass;
    const double guard = absorb_guard(bg, opt);
    ArcRun run;
    run.end = start;
    if (samples) samples->push_back(start);
    if (!(start.r - 2.0 * m > 0.0)) throw std::domain_error("run_arc: start inside the horizon");
    if (start.r - 2.0 * m < guard) {
        run.reason = ArcEnd::absorbed;
        return run;
    }
    const double span = rules.t_end - start.t;
    if (span == 0.0) return run;
    const double dir = span > 0.0 ? 1.0 : -1.0;
    const bool has_target = std::isfinite(rules.r_target);
    // orientation of the motion in r seen in the integration direction
    auto inward = [&](double u) { return dir * u < 0.0; };
    if (start.r <= rules.r_floor && !(dir * start.u > 0.0)) {
        run.reason = ArcEnd::floor;
        return run;
    }

    if (m == 0.0) {
        // straight line, constant u; events solved in closed form
        double u = start.u;
        double v = dir * u; // dr/dtau
        double tau_end = std::abs(span);
        ArcEnd why = ArcEnd::time_reached;
        auto consider = [&](double tau, ArcEnd e) {
            if (tau >= 0.0 && tau < tau_end) {
                tau_end = tau;
                why = e;
            }
        };
        if (v < 0.0) {
            consider((start.r - guard) / (-v), ArcEnd::absorbed);
            if (std::isfinite(rules.r_floor) && start.r > rules.r_floor)
                consider((start.r - rules.r_floor) / (-v), ArcEnd::floor);
        }
        if (v > 0.0 && std::isfinite(rules.r_ceiling) && start.r < rules.r_ceiling)
            consider((rules.r_ceiling - start.r) / v, ArcEnd::ceiling);
        if (has_target && v != 0.0) {
            double tau = (rules.r_target - start.r) / v;
            if (tau > 0.0) consider(tau, ArcEnd::radius_target);
        }
        ArcPoint e{start.t + dir * tau_end, start.r + v * tau_end, u, 0.0};
        if (why == ArcEnd::time_reached) e.t = rules.t_end;
        if (why == ArcEnd::radius_target) e.r = rules.r_target;
        if (why == ArcEnd::floor) e.r = rules.r_floor;
        if (why == ArcEnd::ceiling) e.r = rules.r_ceiling;
        run.end = e;
        run.reason = why;
        run.steps = 1;
        if (samples) samples->push_back(e);
        return run;
    }

    const double c = level_of(bg, start.r, start.u);
    detail::Rhs f{m, dir};
    detail::Y y{start.r - 2.0 * m, start.u, 0.0};
    detail::Y k1 = f(y);
    double tau = 0.0;
    const double tau_end = std::abs(span);
    double h = std::min({opt.max_step, tau_end, 1e-2 * std::max(1.0, start.r)});
    {
        // crude first guess from the local rates
        double rate = std::max(std::abs(k1.z) / std::max(y.z, 1e-300), std::abs(k1.u) + 1e-300);
        h = std::min(h, 0.05 / rate);
        h = std::max(h, 1e-10);
    }

    auto event_value = [&](const detail::Y& s, ArcEnd e) -> double {
        double r = s.z + 2.0 * m;
        switch (e) {
        case ArcEnd::absorbed: return s.z - guard;
        case ArcEnd::floor: return r - rules.r_floor;
        case ArcEnd::radius_target: return r - rules.r_target;
        case ArcEnd::ceiling: return rules.r_ceiling - r;
        default: return 1.0;
        }
    };

    // Illinois iteration on the step length with true DP5 steps from y.
    auto locate = [&](const detail::Y& y0, const detail::Y& k0, double hfull, ArcEnd e, double g0,
                      double g1) -> std::pair<double, detail::Y> {
        double a = 0.0, b = hfull, ga = g0, gb = g1;
        detail::Y best = y0;
        double hb = 0.0;
        int side = 0;
        for (int it = 0; it < 80; ++it) {
            double x = (ga * b - gb * a) / (ga - gb);
            if (!(x > a && x < b)) x = 0.5 * (a + b);
            auto st = detail::dp5_step(f, y0, k0, x, opt);
            double gx = event_value(st.y, e);
            best = st.y;
            hb = x;
            if (std::abs(gx) <= 1e-14 * std::max(1.0, std::abs(st.y.z + 2.0 * m)) || (b - a) < 1e-15 * hfull)
                break;
            if ((gx > 0.0) == (ga > 0.0)) {
                a = x;
                ga = gx;
                if (side == -1) gb *= 0.5;
                side = -1;
            } else {
                b = x;
                gb = gx;
                if (side == 1) ga *= 0.5;
                side = 1;
            }
        }
        return {hb, best};
    };

    long steps = 0;
    int rejects = 0;
    while (tau < tau_end) {
        if (++steps > opt.max_steps) throw numerical_failure("run_arc: step budget exhausted");
        double hs = std::min({h, tau_end - tau, opt.max_step});
        bool last = hs >= tau_end - tau;
        auto st = detail::dp5_step(f, y, k1, hs, opt);
        if (!(st.err <= 1.0)) {
            double fac = std::isfinite(st.err) ? std::max(0.2, 0.9 * std::pow(st.err, -0.2)) : 0.1;
            h = hs * fac;
            if (++rejects > 200 || h < 1e-14 * std::max(1.0, std::abs(start.t) + tau))
                throw numerical_failure("run_arc: step size underflow above the horizon guard");
            continue;
        }
        rejects = 0;
        detail::Y yn = st.y;
        if (opt.project) detail::project_u(m, c, yn);

        // event detection on the accepted step
        struct Hit {
            ArcEnd e;
            double g0, g1;
        };
        std::optional<Hit> hit;
        double best_frac = 2.0;
        auto check = [&](ArcEnd e, bool active) {
            if (!active) return;
            double g0 = event_value(y, e), g1 = event_value(yn, e);
            // leaving the floor outward: a whole round trip may fit in one step
            if (e == ArcEnd::floor && g0 == 0.0 && dir * y.u > 0.0 && g1 < 0.0) g0 = -g1;
            if (g0 > 0.0 && g1 <= 0.0) {
                double frac = g0 / (g0 - g1);
                if (frac < best_frac) {
                    best_frac = frac;
                    hit = Hit{e, g0, g1};
                }
            }
        };
        check(ArcEnd::absorbed, true);
        check(ArcEnd::floor, std::isfinite(rules.r_floor));
        check(ArcEnd::ceiling, std::isfinite(rules.r_ceiling));
        if (has_target) {
            double g0 = event_value(y, ArcEnd::radius_target), g1 = event_value(yn, ArcEnd::radius_target);
            if ((g0 > 0.0 && g1 <= 0.0) || (g0 < 0.0 && g1 >= 0.0)) {
                double frac = g0 / (g0 - g1);
                if (frac < best_frac) {
                    best_frac = frac;
                    hit = Hit{ArcEnd::radius_target, g0, g1};
                }
            }
        }
        bool turned_now = rules.stop_on_turn && (y.u > 0.0) != (yn.u > 0.0) && y.u != 0.0;
        if (hit) {
            auto [hh, ye] = locate(y, k1, hs, hit->e, hit->g0, hit->g1);
            if (opt.project) detail::project_u(m, c, ye);
            tau += hh;
            y = ye;
            run.reason = hit->e;
            run.end = {start.t + dir * tau, y.z + 2.0 * m, y.u, y.p};
            if (hit->e == ArcEnd::radius_target) run.end.r = rules.r_target;
            if (hit->e == ArcEnd::floor) run.end.r = rules.r_floor;
            run.steps = steps;
            if (samples) samples->push_back(run.end);
            return run;
        }
        if (turned_now) {
            // bisection on the step length for u = 0
            double a = 0.0, b = hs;
            detail::Y yb = yn;
            for (int it = 0; it < 100 && b - a > 1e-15 * hs; ++it) {
                double x = 0.5 * (a + b);
                auto s2 = detail::dp5_step(f, y, k1, x, opt);
                if ((s2.y.u > 0.0) == (y.u > 0.0)) a = x;
                else {
                    b = x;
                    yb = s2.y;
                }
            }
            tau += b;
            y = yb;
            run.reason = ArcEnd::time_reached;
            run.turned = true;
            run.end = {start.t + dir * tau, y.z + 2.0 * m, y.u, y.p};
            run.steps = steps;
            if (samples) samples->push_back(run.end);
            return run;
        }
        tau = last ? tau_end : tau + hs;
        y = yn;
        k1 = opt.project ? f(y) : st.k7;
        if (samples) samples->push_back({last ? rules.t_end : start.t + dir * tau, y.z + 2.0 * m, y.u, y.p});
        double fac = st.err > 0.0 ? std::min(5.0, std::max(0.2, 0.9 * std::pow(st.err, -0.2))) : 5.0;
        h = hs * fac;
    }
    run.end = {rules.t_end, y.z + 2.0 * m, y.u, y.p};
    run.reason = ArcEnd::time_reached;
    run.steps = steps;
    return run;
}

inline Classification classify(const Background& bg, double r, double u)
{
    if (bg.mass == 0.0) return Classification::static_flat;
    double c = level_of(bg, r, u);
    if (c < 0.0) return u > 0.0 ? Classification::sub_escape_return : Classification::bounded_infall;
    return u >= 0.0 ? Classification::escaping : Classification::bounded_infall;
}

inline CharState step_characteristic(const Background& bg, const CharState& s, double dt,
                                     const IntegratorOptions& opt = {})
{
    if (!(std::abs(s.u) < 1.0)) throw std::domain_error("step_characteristic: |u| must be < 1");
    if (!(std::abs(dt) <= opt.max_step)) throw std::domain_error("step_characteristic: |dt| above max step");
    StopRules rules;
    rules.t_end = s.t + dt;
    auto run = run_arc(bg, {s.t, s.r, s.u, 0.0}, rules, opt);
    return {run.end.t, run.end.r, run.end.u};
}

inline CharArc arc_from_samples(const Background& bg, const std::vector<ArcPoint>& pts, double c, ArcEnd end)
{
    CharArc arc;
    arc.c = c;
    arc.end = end;
    arc.states.reserve(pts.size());
    arc.p_integral.reserve(pts.size());
    for (const auto& q : pts) {
        arc.states.push_back({q.t, q.r, q.u});
        arc.p_integral.push_back(q.p);
        if (std::abs(q.u) < 1.0 && q.r - 2.0 * bg.mass > horizon_guard(bg))
            arc.max_c_drift = std::max(arc.max_c_drift, std::abs(conserved_c(bg, q.r, q.u) - c));
    }
    if (!pts.empty()) arc.classification = classify(bg, pts.front().r, pts.front().u);
    return arc;
}

// Integrate from s0 to t_end (either direction). r_ceiling bounds the computational window;
// leaving it ends the arc with ArcEnd::ceiling (truncation notice).
inline CharArc integrate_arc(const Background& bg, const CharState& s0, double t_end, const IntegratorOptions& opt = {},
                             double r_ceiling = std::numeric_limits<double>::infinity())
{
    if (!(std::abs(s0.u) < 1.0)) throw std::domain_error("integrate_arc: |u| must be < 1");
    if (!(s0.r - 2.0 * bg.mass >= horizon_guard(bg))) throw std::domain_error("integrate_arc: start inside guard");
    std::vector<ArcPoint> pts;
    StopRules rules;
    rules.t_end = t_end;
    rules.r_ceiling = r_ceiling;
    auto run = run_arc(bg, {s0.t, s0.r, s0.u, 0.0}, rules, opt, &pts);
    return arc_from_samples(bg, pts, conserved_c(bg, s0.r, s0.u), run.reason);
}

struct Miss {
    double closest_r = 0.0;
    double closest_t = 0.0;
};

// Shoot from (t, r) with velocity u_init until r first reaches to_r or the time horizon passes.
inline std::variant<CharArc, Miss> shoot_to_radius(const Background& bg, double t, double r, double to_r,
                                                   double u_init, double t_horizon, const IntegratorOptions& opt = {})
{
    if (!(std::abs(u_init) <= 1.0)) throw std::domain_error("shoot_to_radius: |u_init| must be <= 1");
    std::vector<ArcPoint> pts;
    StopRules rules;
    rules.t_end = t_horizon;
    rules.r_target = to_r;
    auto run = run_arc(bg, {t, r, u_init, 0.0}, rules, opt, &pts);
    if (run.reason == ArcEnd::radius_target) return arc_from_samples(bg, pts, level_of(bg, r, u_init), run.reason);
    Miss miss{pts.front().r, pts.front().t};
    for (const auto& q : pts)
        if (std::abs(q.r - to_r) < std::abs(miss.closest_r - to_r)) miss = {q.r, q.t};
    return miss;
}

struct Unreachable {
    double r_min = 0.0; // arrival radius for the slowest admissible departure
    double r_max = 0.0; // arrival radius for the fastest admissible departure
};

struct ConnectOptions {
    double tol_r = 1e-10;
    IntegratorOptions integrator{};
};

// Arrival radius at t1 of the arc leaving (t0, r0) with velocity u, or -inf if the arc reaches
// the floor radius (or is absorbed) first.
inline double arrival_radius(const Background& bg, double t0, double r0, double u, double t1, double r_floor,
                             const IntegratorOptions& opt)
{
    StopRules rules;
    rules.t_end = t1;
    rules.r_floor = r_floor;
    auto run = run_arc(bg, {t0, r0, u, 0.0}, rules, opt);
    if (run.reason != ArcEnd::time_reached) return -std::numeric_limits<double>::infinity();
    return run.end.r;
}

// Characteristic from (t0, r0) to (t1, r1) staying at or above r_star in between, by bracketing
// the departure velocity. Unreachable outside the light cone.
inline std::variant<CharArc, Unreachable> connect(const Background& bg, double t0, double r0, double t1, double r1,
                                                  const ConnectOptions& copt = {})
{
    if (!(t1 > t0)) throw std::domain_error("connect: requires t0 < t1");
    if (!(r0 >= bg.r_star) || !(r1 >= bg.r_star)) throw std::domain_error("connect: radii must be >= r_star");
    const auto& opt = copt.integrator;
    const double floor = bg.r_star * (1.0 - 1e-15);
    // light-cone limits
    double ulo = -1.0, uhi = 1.0;
    double rlo = arrival_radius(bg, t0, r0, ulo, t1, floor, opt);
    double rhi = arrival_radius(bg, t0, r0, uhi, t1, floor, opt);
    if (!(r1 < rhi) || (std::isfinite(rlo) && !(r1 > rlo))) return Unreachable{rlo, rhi};
    if (!std::isfinite(rlo)) {
        // departures that dip below r_star: find the smallest admissible velocity
        double a = -1.0, b = 1.0;
        for (int it = 0; it < 200 && b - a > 1e-16; ++it) {
            double mid = 0.5 * (a + b);
            if (std::isfinite(arrival_radius(bg, t0, r0, mid, t1, floor, opt))) b = mid;
            else a = mid;
        }
        ulo = b;
        rlo = arrival_radius(bg, t0, r0, ulo, t1, floor, opt);
        if (!(r1 > rlo)) {
            if (std::abs(r1 - rlo) <= copt.tol_r) uhi = ulo;
            else return Unreachable{rlo, rhi};
        }
    }
    double u = ulo;
    if (uhi != ulo) {
        double a = ulo, b = uhi, fa = rlo - r1, fb = rhi - r1;
        int side = 0;
        bool ok = false;
        for (int it = 0; it < 300; ++it) {
            double x = (fa * b - fb * a) / (fa - fb);
            if (!(x > a && x < b)) x = 0.5 * (a + b);
            double fx = arrival_radius(bg, t0, r0, x, t1, floor, opt);
            if (!std::isfinite(fx)) {
                a = x;
                fa = -1.0;
                continue;
            }
            fx -= r1;
            u = x;
            if (std::abs(fx) <= copt.tol_r) {
                ok = true;
                break;
            }
            if (fx < 0.0) {
                a = x;
                fa = fx;
                if (side == -1) fb *= 0.5;
                side = -1;
            } else {
                b = x;
                fb = fx;
                if (side == 1) fa *= 0.5;
                side = 1;
            }
            if (b - a < 1e-16) break;
        }
        if (!ok) throw numerical_failure("connect: bisection did not reach the arrival tolerance");
    }
    std::vector<ArcPoint> pts;
    StopRules rules;
    rules.t_end = t1;
    auto run = run_arc(bg, {t0, r0, u, 0.0}, rules, opt, &pts);
    return arc_from_samples(bg, pts, level_of(bg, r0, u), run.reason);
}

inline double return_time_bound(const Background& bg, double r0, double u0)
{
    double ue = escape_velocity(bg, r0);
    if (!(u0 > 0.0) || !(u0 < ue)) throw std::domain_error("return_time_bound: requires 0 < u0 < u_E(r0)");
    return 4.0 * bg.mass * u0 * (1.0 - u0 * u0) / (ue * ue - u0 * u0);
}

// Duration of the round trip r0 -> turning radius -> r0 for 0 < u0 < u_E(r0).
inline double round_trip_time(const Background& bg, double r0, double u0, const IntegratorOptions& opt = {})
{
    StopRules rules;
    rules.t_end = std::numeric_limits<double>::max() / 4;
    rules.stop_on_turn = true;
    auto up = run_arc(bg, {0.0, r0, u0, 0.0}, rules, opt);
    if (!up.turned) throw numerical_failure("round_trip_time: no turning point");
    StopRules down;
    down.t_end = std::numeric_limits<double>::max() / 4;
    down.r_target = r0;
    auto back = run_arc(bg, up.end, down, opt);
    if (back.reason != ArcEnd::radius_target) throw numerical_failure("round_trip_time: arc did not return");
    return back.end.t;
}

// Residual of e^{r - r0} ((r - 2M)/(r0 - 2M))^{2M} = e^{s (t - t0)} in log form; s = +1 outgoing.
inline double light_cone_residual(const Background& bg, double t0, double r0, double t, double r, double s)
{
    double lhs = (r - r0);
    if (bg.mass > 0.0) lhs += 2.0 * bg.mass * std::log((r - 2.0 * bg.mass) / (r0 - 2.0 * bg.mass));
    return lhs - s * (t - t0);
}

// Null curve from (t0, r0), sampled at n + 1 equal time steps up to t_end. Stops at the absorption guard
// (ingoing) or at r = 0 in flat space. States carry u = s, and c = 1 as the limit of the conserved quantity.
inline CharArc light_cone_curve(const Background& bg, double t0, double r0, double t_end, double s, std::size_t n = 200,
                                const IntegratorOptions& opt = {})
{
    detail::require_outside(bg, r0, "light_cone_curve");
    const double floor = bg.mass > 0.0 ? 2.0 * bg.mass + absorb_guard(bg, opt) : 0.0;
    CharArc arc;
    arc.c = 1.0;
    arc.classification = s > 0.0 ? Classification::escaping : Classification::bounded_infall;
    for (std::size_t k = 0; k <= n; ++k) {
        double t = t0 + (t_end - t0) * static_cast<double>(k) / static_cast<double>(n);
        auto res = [&](double r) { return light_cone_residual(bg, t0, r0, t, r, s); };
        if (s < 0.0 && res(floor) >= 0.0) {
            arc.end = ArcEnd::absorbed;
            break;
        }
        // residual is increasing in r
        double lo = floor, hi = r0 + std::abs(t - t0) + 1.0;
        while (res(hi) < 0.0) hi = 2.0 * hi;
        for (int i = 0; i < 200; ++i) {
            double mid = 0.5 * (lo + hi);
            if (mid == lo || mid == hi) break;
            (res(mid) < 0.0 ? lo : hi) = mid;
        }
        arc.states.push_back({t, 0.5 * (lo + hi), s});
        arc.p_integral.push_back(0.0);
    }
    if (bg.mass == 0.0) arc.classification = Classification::static_flat;
    return arc;
}

} // namespace bsvar
