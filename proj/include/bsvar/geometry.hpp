#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "errors.hpp"

namespace bsvar {

// Schwarzschild background in geometric units (c = 1). mass = 0 is flat space.
struct Background {
    double mass = 0.0;
    double r_star = 1.0;
};

inline double horizon_guard(const Background& bg)
{
    return 1e-12 * std::max(1.0, 2.0 * bg.mass);
}

inline Background make_background(double mass, double r_star)
{
    if (!(mass >= 0.0) || !std::isfinite(mass))
        throw config_error("background: mass must be a finite nonnegative number");
    if (!std::isfinite(r_star) || !(r_star > 2.0 * mass))
        throw config_error("background: r_star must exceed the horizon radius 2M");
    return Background{mass, r_star};
}

namespace detail {
inline void require_outside(const Background& bg, double r, const char* who)
{
    if (!(r - 2.0 * bg.mass >= horizon_guard(bg)))
        throw std::domain_error(std::string(who) + ": radius at or inside the horizon guard");
}
} // namespace detail

inline double lapse(const Background& bg, double r)
{
    detail::require_outside(bg, r, "lapse");
    if (bg.mass == 0.0) return 1.0;
    return 1.0 - 2.0 * bg.mass / r;
}

inline double escape_velocity(const Background& bg, double r)
{
    detail::require_outside(bg, r, "escape_velocity");
    return std::sqrt(2.0 * bg.mass / r);
}

// (u^2 - 2M/r) / (1 - 2M/r), written over r - 2M to keep the subtraction exact in M = 0.
inline double conserved_c(const Background& bg, double r, double u)
{
    detail::require_outside(bg, r, "conserved_c");
    if (!(std::abs(u) < 1.0)) throw std::domain_error("conserved_c: |u| must be < 1");
    if (bg.mass == 0.0) return u * u;
    return (u * u * r - 2.0 * bg.mass) / (r - 2.0 * bg.mass);
}

inline double asymptotic_velocity(double c)
{
    if (!(c >= 0.0) || !(c < 1.0))
        throw std::domain_error("asymptotic_velocity: c must lie in [0,1)");
    return std::sqrt(c);
}

// |u| on the level set C at radius r, u^2 = C + (1 - C) 2M/r. Negative when r is past the turning radius.
inline double speed_squared_on_level(const Background& bg, double c, double r)
{
    return c + (1.0 - c) * (2.0 * bg.mass / r);
}

// Static profile with asymptotic velocity p >= 0: the outgoing branch of the level set C = p^2.
inline double static_velocity(const Background& bg, double p, double r)
{
    detail::require_outside(bg, r, "static_velocity");
    if (!(p >= 0.0) || !(p < 1.0)) throw std::domain_error("static_velocity: p must lie in [0,1)");
    return std::sqrt(speed_squared_on_level(bg, p * p, r));
}

// Lower end of the range of C at radius r: -2M/(r - 2M).
inline double min_conserved_c(const Background& bg, double r)
{
    detail::require_outside(bg, r, "min_conserved_c");
    return -2.0 * bg.mass / (r - 2.0 * bg.mass);
}

} // namespace bsvar
