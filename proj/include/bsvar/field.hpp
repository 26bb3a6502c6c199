#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

namespace bsvar {

// Sampled solution on a radial grid. Values at shocks are right limits.
struct PiecewiseField {
    double origin = 0.0; // 0 in the flat case, r* otherwise
    std::vector<double> x;
    std::vector<double> u;
    std::vector<double> v;
    std::vector<double> c; // conserved quantity of the arriving characteristic; may be empty

    std::size_t size() const { return x.size(); }
};

inline bool values_agree(double a, double b, double tol = 1e-9)
{
    return std::abs(a - b) <= tol * (1.0 + std::max(std::abs(a), std::abs(b)));
}

struct Agreement {
    double radius = 0.0;   // extent of the agreeing prefix, measured from origin
    bool identical = false;
    double d = 1.0;
};

inline Agreement compare_fields(const PiecewiseField& h1, const PiecewiseField& h2, double tol = 1e-9)
{
    if (h1.x.size() != h2.x.size() || h1.origin != h2.origin)
        throw std::invalid_argument("compare_fields: fields must share a grid");
    for (std::size_t i = 0; i < h1.x.size(); ++i)
        if (h1.x[i] != h2.x[i]) throw std::invalid_argument("compare_fields: fields must share a grid");
    Agreement out;
    std::size_t n = h1.x.size();
    std::size_t i = 0;
    while (i < n && values_agree(h1.u[i], h2.u[i], tol)) ++i;
    if (i == n) {
        out.identical = true;
        out.radius = n ? h1.x.back() - h1.origin : 0.0;
        out.d = 0.0;
        return out;
    }
    if (i == 0) {
        out.radius = 0.0;
        out.d = 1.0;
        return out;
    }
    out.radius = h1.x[i - 1] - h1.origin;
    out.d = std::exp(-out.radius);
    return out;
}

inline double proximity_metric(const PiecewiseField& h1, const PiecewiseField& h2, double tol = 1e-9)
{
    return compare_fields(h1, h2, tol).d;
}

// Trapezoid L1 distance of the u columns over [lo, hi].
inline double l1_distance(const PiecewiseField& a, const PiecewiseField& b,
                          double lo = -std::numeric_limits<double>::infinity(),
                          double hi = std::numeric_limits<double>::infinity())
{
    if (a.x.size() != b.x.size()) throw std::invalid_argument("l1_distance: grid mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < a.x.size(); ++i) {
        double l = std::max(a.x[i], lo), r = std::min(a.x[i + 1], hi);
        if (!(r > l)) continue;
        double e0 = std::abs(a.u[i] - b.u[i]), e1 = std::abs(a.u[i + 1] - b.u[i + 1]);
        sum += 0.5 * (e0 + e1) * (r - l);
    }
    return sum;
}

inline double total_variation(const std::vector<double>& u)
{
    double tv = 0.0;
    for (std::size_t i = 1; i < u.size(); ++i) tv += std::abs(u[i] - u[i - 1]);
    return tv;
}

// Grid positions (midpoints) where u drops by more than tol between neighbours and by more than
// four times the drop on either side; smooth compressions spread over several cells are skipped.
inline std::vector<double> shock_locations(const PiecewiseField& f, double tol = 1e-3)
{
    std::vector<double> out;
    std::size_t n = f.x.size();
    auto drop = [&](std::size_t i) { return i >= 1 && i < n ? std::max(0.0, f.u[i - 1] - f.u[i]) : 0.0; };
    for (std::size_t i = 1; i < n; ++i) {
        double d = drop(i);
        if (d > tol && d > 4.0 * drop(i - 1) && d > 4.0 * drop(i + 1)) out.push_back(0.5 * (f.x[i - 1] + f.x[i]));
    }
    return out;
}

inline std::vector<double> uniform_grid(double lo, double hi, std::size_t n)
{
    std::vector<double> xs(n);
    for (std::size_t i = 0; i < n; ++i) xs[i] = lo + (hi - lo) * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    return xs;
}

} // namespace bsvar
