#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "characteristics.hpp"
#include "errors.hpp"
#include "forcing.hpp"
#include "hlo_flat.hpp"
#include "hlo_schwarzschild.hpp"

namespace bsvar {

// Integrated density on a radial grid; cadlag like the velocity field it rides on.
struct DensityField {
    std::vector<double> grid;
    std::vector<double> values;
};

namespace detail {
inline void require_same_grid(const std::vector<double>& a, const std::vector<double>& b)
{
    if (a != b) throw std::invalid_argument("transport_density: minimizer map grid differs from the requested grid");
}
} // namespace detail

// v at each point is v0 at the foot of its minimizer, or psi at the exit time b (right-hand value).
inline DensityField transport_density(const StepFunction& v0, const BoundaryTrace& bc, const FlatSolution& map,
                                      const std::vector<double>& grid)
{
    detail::require_same_grid(map.field.x, grid);
    DensityField out;
    out.grid = grid;
    out.values.reserve(grid.size());
    for (const auto& m : map.minimizers)
        out.values.push_back(m.kind == MinimizerKind::boundary_path ? sample(bc, m.exit_time).psi : v0(m.departure_x));
    return out;
}

inline DensityField transport_density(const StepFunction& v0, const BoundaryTrace& bc, const SchwSolution& map,
                                      const std::vector<double>& grid, const Background& bg)
{
    detail::require_same_grid(map.field.x, grid);
    DensityField out;
    out.grid = grid;
    out.values.reserve(grid.size());
    for (const auto& m : map.minimizers)
        out.values.push_back(m.from_boundary ? sample(bc, m.departure_time).psi : v0(m.departure_r - bg.r_star));
    return out;
}

// The last characteristic segment of a flat minimizer, sampled at n interior times.
inline std::vector<CharState> minimizer_samples(const FlatMinimizer& m, double t, double x, std::size_t n)
{
    double s0 = m.kind == MinimizerKind::boundary_path ? m.exit_time : m.departure_t;
    double y0 = m.kind == MinimizerKind::boundary_path ? 0.0 : m.departure_x;
    std::vector<CharState> out;
    for (std::size_t k = 1; k <= n; ++k) {
        double s = s0 + (t - s0) * static_cast<double>(k) / static_cast<double>(n + 1);
        double w = (s - s0) / (t - s0);
        out.push_back({s, y0 + w * (x - y0), m.end_velocity});
    }
    return out;
}

// The last characteristic segment of a relativistic minimizer, re-integrated from its departure point.
inline CharArc minimizer_arc(const Background& bg, const SchwMinimizer& m, double t1, const IntegratorOptions& opt = {})
{
    return integrate_arc(bg, {m.departure_time, m.departure_r, m.departure_velocity}, t1, opt);
}

} // namespace bsvar
