#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "errors.hpp"
#include "field.hpp"
#include "forcing.hpp"
#include "geometry.hpp"
#include "hlo_flat.hpp"
#include "hlo_schwarzschild.hpp"

namespace bsvar {

struct RhoEstimate {
    double span = 0.0;
    double action = 0.0; // S over [t0, t0 + span]
    double rate = 0.0;   // action / span
};

struct AttractionRecord {
    double lookback = 0.0;
    double d = 1.0;
    double radius = 0.0;
};

struct AsymptoticRecord {
    double r = 0.0;
    double u = 0.0;
    double deviation = 0.0;
    bool converged = false;
};

struct ErgodicReport {
    std::vector<RhoEstimate> rho_estimates;
    double rho_hat = 0.0;
    double fit_slope = 0.0;    // c in S/span = rho + c/span
    double fit_residual = 0.0; // rms over the fitted spans
    double theta_hat = std::numeric_limits<double>::quiet_NaN();
    bool global_solution_guaranteed = false;
    std::vector<AttractionRecord> attraction_records;
    std::vector<AsymptoticRecord> asymptotic_records;
    std::vector<std::string> warnings;
};

struct ErgodicOptions {
    double t0 = 0.0;
    double node_spacing = 1.0 / 32.0;
    SchwOptions solver{};
};

namespace detail {

// least squares of y = a + b x
inline void line_fit(const std::vector<double>& x, const std::vector<double>& y, double& a, double& b, double& rms)
{
    std::size_t n = x.size();
    if (n == 1) {
        a = y[0];
        b = 0.0;
        rms = 0.0;
        return;
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    double den = static_cast<double>(n) * sxx - sx * sx;
    b = (static_cast<double>(n) * sxy - sx * sy) / den;
    a = (sy - b * sx) / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += std::pow(y[i] - a - b * x[i], 2);
    rms = std::sqrt(ss / static_cast<double>(n));
}

} // namespace detail

// S^{t0, t0+span} for every span from one forward pass, then S/span = rho + c/span on the largest three.
inline ErgodicReport estimate_rho(const Background& bg, const ProcessSpec& spec, const std::vector<double>& spans,
                                  const ErgodicOptions& opt = {})
{
    if (spans.empty()) throw config_error("estimate_rho: no spans");
    for (std::size_t i = 0; i < spans.size(); ++i) {
        if (!(spans[i] > 0.0)) throw config_error("estimate_rho: spans must be positive");
        if (i > 0 && !(spans[i] > spans[i - 1])) throw config_error("estimate_rho: spans must be increasing");
    }
    validate(spec);
    ErgodicReport rep;
    if (bg.mass == 0.0) {
        for (double s : spans) {
            double S = boundary_action_flat(spec, opt.t0, opt.t0 + s);
            rep.rho_estimates.push_back({s, S, S / s});
        }
    } else {
        SchwOptions so = opt.solver;
        so.node_spacing = opt.node_spacing;
        auto prof = boundary_action_profile(bg, spec, opt.t0, opt.t0 + spans.back(), so);
        for (double s : spans) {
            double target = opt.t0 + s;
            auto it = std::upper_bound(prof.b.begin(), prof.b.end(), target + 1e-12 * (1.0 + std::abs(target)));
            std::size_t k = static_cast<std::size_t>(it - prof.b.begin()) - 1;
            double S = prof.V[k];
            rep.rho_estimates.push_back({s, S, S / s});
        }
    }
    std::size_t n = rep.rho_estimates.size(), first = n > 3 ? n - 3 : 0;
    std::vector<double> x, y;
    for (std::size_t i = first; i < n; ++i) {
        x.push_back(1.0 / rep.rho_estimates[i].span);
        y.push_back(rep.rho_estimates[i].rate);
    }
    detail::line_fit(x, y, rep.rho_hat, rep.fit_slope, rep.fit_residual);
    rep.global_solution_guaranteed = rep.rho_hat < 0.0;
    if (rep.rho_hat < 0.0) rep.theta_hat = std::sqrt(-2.0 * rep.rho_hat);
    else rep.warnings.push_back("rho_hat >= 0: no global solution guaranteed");
    return rep;
}

// Upper bound on rho for phi == q above the escape velocity at r*.
inline double constant_forcing_rho_bound(const Background& bg, double q)
{
    return -credit_rate(bg, q);
}

struct PullbackOptions {
    double t = 0.0;
    std::size_t grid_points = 2000;
    double tol = 1e-9;
    double node_spacing = 1.0 / 64.0;
    double reference_lookback = 0.0; // 0: doubling until the reference stops changing
};

struct PullbackResult {
    std::vector<AttractionRecord> records;
    std::vector<std::string> warnings;
    PiecewiseField reference;
};

inline PullbackResult pullback_experiment(const ProcessSpec& spec, const Potential& w, double x_window,
                                          const std::vector<double>& lookbacks, const PullbackOptions& opt = {})
{
    PullbackResult res;
    auto xs = uniform_grid(0.0, x_window, opt.grid_points);
    double q = empirical_q(spec, 1e4);
    if (!w.in_class(-q)) res.warnings.push_back("initial data outside the attraction class U_{-q}");
    res.reference = global_field_flat(spec, opt.t, xs);
    for (double T : lookbacks) {
        auto sol = solve_ivbp_flat(w, StepFunction::constant(0.0), spec, opt.t - T, opt.t, xs);
        auto ag = compare_fields(res.reference, sol.field, opt.tol);
        res.records.push_back({T, ag.d, ag.radius});
    }
    return res;
}

inline PiecewiseField reference_field_schw(const Background& bg, const ProcessSpec& spec, const std::vector<double>& rs,
                                           const PullbackOptions& opt)
{
    GlobalSchwOptions go;
    go.node_spacing = opt.node_spacing;
    go.tol = opt.tol;
    if (opt.reference_lookback > 0.0) return pullback_solve_schw(bg, spec, opt.t, opt.reference_lookback, rs, go).field;
    auto g = global_field_schw(bg, spec, opt.t, rs, go);
    if (!g.converged) throw numerical_failure("pullback_experiment: global solution did not settle within the look-back limit");
    return g.field;
}

inline PullbackResult pullback_experiment(const Background& bg, const ProcessSpec& spec, const SchwPotential& w,
                                          double r_window, const std::vector<double>& lookbacks,
                                          const PullbackOptions& opt = {})
{
    PullbackResult res;
    auto rs = uniform_grid(bg.r_star, r_window, opt.grid_points);
    double p = w.is_boundary_only() ? 0.0 : w.tail_velocity();
    if (!(p >= 0.0 && p < 1.0)) {
        auto rep = estimate_rho(bg, spec, {64.0, 128.0, 256.0});
        if (!(rep.rho_hat < -0.5 * p * p)) res.warnings.push_back("initial data outside the attraction class V_p");
    }
    res.reference = reference_field_schw(bg, spec, rs, opt);
    SchwOptions so;
    so.node_spacing = opt.node_spacing;
    for (double T : lookbacks) {
        auto sol = solve_ivbp_schw(bg, w, StepFunction::constant(0.0), spec, opt.t - T, opt.t, rs, so);
        auto ag = compare_fields(res.reference, sol.field, opt.tol);
        res.records.push_back({T, ag.d, ag.radius});
    }
    return res;
}

struct AsymptoticOptions {
    double t = 0.0;
    double node_spacing = 1.0 / 64.0;
    double lookback = 0.0; // 0: smallest power of two above 4 r + 16
};

// u(t, x) of the global solution against the reference velocity (q flat, theta relativistic).
inline std::vector<AsymptoticRecord> asymptotic_velocity_experiment(const Background& bg, const ProcessSpec& spec,
                                                                    const std::vector<double>& radii, double reference,
                                                                    const AsymptoticOptions& opt = {})
{
    std::vector<AsymptoticRecord> out;
    for (double r : radii) {
        AsymptoticRecord rec;
        rec.r = r;
        if (bg.mass == 0.0) {
            auto g = global_solution_flat(spec, opt.t, r);
            rec.u = g.u;
            rec.converged = g.converged;
        } else {
            GlobalSchwOptions go;
            go.node_spacing = opt.node_spacing;
            double L = opt.lookback > 0.0 ? opt.lookback : std::exp2(std::ceil(std::log2(4.0 * r + 16.0)));
            auto g = global_solution_schw(bg, spec, opt.t, r, L, go);
            rec.u = g.u;
            rec.converged = g.converged;
        }
        rec.deviation = rec.u - reference;
        out.push_back(rec);
    }
    return out;
}

struct CoincidenceReport {
    std::vector<double> pairwise_d;
    double max_d = 0.0;
    bool coincide = false;
};

inline CoincidenceReport coincidence_check(const ProcessSpec& spec, const std::vector<Potential>& ws, double t_deep,
                                           double x_window, std::size_t grid_points = 2000, double t = 0.0)
{
    auto xs = uniform_grid(0.0, x_window, grid_points);
    std::vector<PiecewiseField> fs;
    for (const auto& w : ws) fs.push_back(solve_ivbp_flat(w, StepFunction::constant(0.0), spec, t - t_deep, t, xs).field);
    CoincidenceReport rep;
    for (std::size_t i = 0; i < fs.size(); ++i)
        for (std::size_t j = i + 1; j < fs.size(); ++j) rep.pairwise_d.push_back(proximity_metric(fs[i], fs[j]));
    for (double d : rep.pairwise_d) rep.max_d = std::max(rep.max_d, d);
    rep.coincide = rep.max_d <= std::exp(-x_window);
    return rep;
}

inline CoincidenceReport coincidence_check(const Background& bg, const ProcessSpec& spec,
                                           const std::vector<SchwPotential>& ws, double t_deep, double r_window,
                                           std::size_t grid_points = 1000, double t = 0.0,
                                           double node_spacing = 1.0 / 64.0)
{
    auto rs = uniform_grid(bg.r_star, r_window, grid_points);
    SchwOptions so;
    so.node_spacing = node_spacing;
    std::vector<PiecewiseField> fs;
    for (const auto& w : ws)
        fs.push_back(solve_ivbp_schw(bg, w, StepFunction::constant(0.0), spec, t - t_deep, t, rs, so).field);
    CoincidenceReport rep;
    for (std::size_t i = 0; i < fs.size(); ++i)
        for (std::size_t j = i + 1; j < fs.size(); ++j) rep.pairwise_d.push_back(proximity_metric(fs[i], fs[j]));
    for (double d : rep.pairwise_d) rep.max_d = std::max(rep.max_d, d);
    rep.coincide = rep.max_d <= std::exp(-(r_window - bg.r_star));
    return rep;
}

} // namespace bsvar
