#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "errors.hpp"
#include "field.hpp"
#include "forcing.hpp"
#include "geometry.hpp"

namespace bsvar {

struct FvGrid {
    double r_min = 0.0;
    double r_max = 1.0;
    std::size_t n_cells = 1000;
    double cfl = 0.9;
};

struct FvResult {
    PiecewiseField field;       // cell centres, u only
    double mass_initial = 0.0;  // sum of m dr
    double mass_final = 0.0;
    double flux_in = 0.0;       // time integral of the flux through r_min
    double flux_out = 0.0;      // time integral of the flux through r_max
    std::size_t steps = 0;
};

namespace detail {

// Godunov flux for F(u) = ((u^2 - 1)/f + 1)/2, convex with its minimum at u = 0.
inline double godunov_flux(double ul, double ur, double f)
{
    auto F = [f](double u) { return 0.5 * ((u * u - 1.0) / f + 1.0); };
    if (ul <= ur) {
        if (ul >= 0.0) return F(ul);
        if (ur <= 0.0) return F(ur);
        return F(0.0);
    }
    return std::max(F(ul), F(ur));
}

} // namespace detail

// First-order Godunov scheme on m = u / f^2 for d_t m + d_r F = 0. The left ghost cell holds phi(t);
// the right ghost copies the last cell.
inline FvResult fv_solve(const Background& bg, const std::function<double(double)>& u0, const BoundaryTrace& bc,
                         double t0, double t_end, const FvGrid& grid)
{
    if (!(t_end > t0)) throw config_error("fv_solve: requires t_end > t0");
    if (!(grid.cfl > 0.0 && grid.cfl < 1.0)) throw config_error("fv_solve: cfl must lie in (0,1)");
    if (grid.n_cells < 2 || !(grid.r_max > grid.r_min)) throw config_error("fv_solve: bad grid");
    if (bg.mass > 0.0 && !(grid.r_min >= bg.r_star)) throw config_error("fv_solve: r_min below the boundary radius");

    const std::size_t n = grid.n_cells;
    const double dr = (grid.r_max - grid.r_min) / static_cast<double>(n);
    auto lap = [&](double r) { return bg.mass == 0.0 ? 1.0 : 1.0 - 2.0 * bg.mass / r; };

    std::vector<double> rc(n), fc(n), fface(n + 1), m(n), u(n);
    for (std::size_t i = 0; i <= n; ++i) fface[i] = lap(grid.r_min + dr * static_cast<double>(i));
    constexpr int sub = 8;
    for (std::size_t i = 0; i < n; ++i) {
        rc[i] = grid.r_min + dr * (static_cast<double>(i) + 0.5);
        fc[i] = lap(rc[i]);
        double acc = 0.0;
        for (int k = 0; k < sub; ++k) {
            double r = grid.r_min + dr * (static_cast<double>(i) + (k + 0.5) / sub);
            double val = u0(r);
            if (!(std::abs(val) < 1.0)) throw config_error("fv_solve: |u0| must be < 1");
            acc += val / (lap(r) * lap(r));
        }
        m[i] = acc / sub;
        u[i] = m[i] * fc[i] * fc[i];
    }

    FvResult res;
    for (double mi : m) res.mass_initial += mi * dr;

    auto bpieces = pieces(bc, t0, t_end);
    std::size_t pj = 0;
    std::vector<double> flux(n + 1);
    double t = t0;
    while (t < t_end) {
        while (pj + 1 < bpieces.size() && bpieces[pj].b <= t) ++pj;
        double phi = bpieces.empty() ? sample(bc, t).phi : bpieces[pj].phi;
        double smax = std::abs(phi) * fface[0];
        for (std::size_t i = 0; i < n; ++i) smax = std::max(smax, std::abs(u[i]) * fc[i]);
        double dt = grid.cfl * dr / std::max(smax, 1e-3);
        double t_next = std::min(t_end, bpieces.empty() ? t_end : bpieces[pj].b);
        if (t + dt >= t_next) dt = t_next - t;
        if (!(dt > 0.0)) {
            t = t_next;
            continue;
        }
        if (smax * dt > dr * (1.0 + 1e-12)) throw numerical_failure("fv_solve: CFL violation");

        flux[0] = detail::godunov_flux(phi, u[0], fface[0]);
        for (std::size_t i = 1; i < n; ++i) flux[i] = detail::godunov_flux(u[i - 1], u[i], fface[i]);
        flux[n] = detail::godunov_flux(u[n - 1], u[n - 1], fface[n]);
        for (std::size_t i = 0; i < n; ++i) {
            m[i] -= dt / dr * (flux[i + 1] - flux[i]);
            u[i] = m[i] * fc[i] * fc[i];
        }
        res.flux_in += dt * flux[0];
        res.flux_out += dt * flux[n];
        t = (t + dt >= t_next) ? t_next : t + dt;
        ++res.steps;
    }
    for (double mi : m) res.mass_final += mi * dr;
    res.field.origin = bg.mass > 0.0 ? bg.r_star : 0.0;
    res.field.x = rc;
    res.field.u = u;
    return res;
}

} // namespace bsvar
