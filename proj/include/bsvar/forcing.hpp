#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "errors.hpp"

namespace bsvar {

enum class ProcessKind { iid_piecewise_constant, discrete_ou, periodic_deterministic };

enum class Waveform { constant, square };

struct ProcessSpec {
    ProcessKind kind = ProcessKind::periodic_deterministic;
    std::uint64_t seed = 0;
    // time shift theta^offset: the realised path is t -> base(t + offset)
    double offset = 0.0;

    // iid_piecewise_constant and discrete_ou: cell length
    double cell = 1.0;
    // iid: phi uniform on [phi_lo, phi_hi]; psi uniform on [psi_lo, psi_hi]
    double phi_lo = 0.0, phi_hi = 0.8;
    double psi_lo = 0.0, psi_hi = 1.0;
    // psi reuses phi's cell uniforms instead of an independent stream
    bool coupled_psi = false;

    // discrete_ou: AR(1) over cells with stationary N(mean, sigma^2) marginal
    double ou_mean = 0.3, ou_rate = 1.0, ou_sigma = 0.2;

    // periodic_deterministic
    Waveform waveform = Waveform::constant;
    double period = 2.0;
    double level_hi = 0.5, level_lo = 0.0; // square wave: hi on the first half period
    double psi_hi_level = 1.0, psi_lo_level = 0.0;

    double clip = 0.95;
};

struct BoundarySample {
    double phi = 0.0;
    double psi = 0.0;
};

// Constant piece [a, b) of the realised path.
struct ForcingPiece {
    double a = 0.0, b = 0.0;
    double phi = 0.0, psi = 0.0;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline std::uint64_t mix(std::uint64_t seed, std::uint64_t stream, std::int64_t k)
{
    return splitmix64(splitmix64(seed ^ (stream * 0xD1B54A32D192ED03ull)) ^ static_cast<std::uint64_t>(k));
}

// uniform in (0, 1)
inline double unit(std::uint64_t h)
{
    return (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53;
}

inline double normal(std::uint64_t seed, std::uint64_t stream, std::int64_t k)
{
    double u1 = unit(mix(seed, stream, 2 * k));
    double u2 = unit(mix(seed, stream, 2 * k + 1));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

constexpr std::uint64_t stream_phi = 1, stream_psi = 2, stream_phase = 3, stream_ou = 4;

inline double phase(const ProcessSpec& s)
{
    return s.cell * unit(mix(s.seed, stream_phase, 0));
}

inline double clip(const ProcessSpec& s, double v)
{
    return std::clamp(v, -s.clip, s.clip);
}

inline double ou_value(const ProcessSpec& s, std::int64_t k)
{
    double a = std::exp(-s.ou_rate * s.cell);
    double w = s.ou_sigma * std::sqrt(1.0 - a * a);
    // truncated moving-average representation of the stationary AR(1)
    int terms = a > 0.0 ? static_cast<int>(std::ceil(std::log(1e-17) / std::log(a))) : 1;
    terms = std::clamp(terms, 1, 4000);
    double x = 0.0, pw = 1.0;
    for (int j = 0; j < terms; ++j) {
        x += pw * normal(s.seed, stream_ou, k - j);
        pw *= a;
    }
    return s.ou_mean + w * x;
}

inline std::int64_t cell_index(const ProcessSpec& s, double tb)
{
    return static_cast<std::int64_t>(std::floor((tb + phase(s)) / s.cell));
}

inline BoundarySample cell_value(const ProcessSpec& s, std::int64_t k)
{
    BoundarySample out;
    if (s.kind == ProcessKind::iid_piecewise_constant) {
        double uphi = unit(mix(s.seed, stream_phi, k));
        double upsi = s.coupled_psi ? uphi : unit(mix(s.seed, stream_psi, k));
        out.phi = clip(s, s.phi_lo + (s.phi_hi - s.phi_lo) * uphi);
        out.psi = s.psi_lo + (s.psi_hi - s.psi_lo) * upsi;
    } else {
        out.phi = clip(s, ou_value(s, k));
        out.psi = s.coupled_psi ? out.phi : s.psi_lo + (s.psi_hi - s.psi_lo) * unit(mix(s.seed, stream_psi, k));
    }
    return out;
}

} // namespace detail

inline void validate(const ProcessSpec& s)
{
    if (!(s.clip > 0.0 && s.clip < 1.0)) throw config_error("forcing: clip must lie in (0,1)");
    if (s.kind != ProcessKind::periodic_deterministic && !(s.cell > 0.0))
        throw config_error("forcing: cell length must be positive");
    if (s.kind == ProcessKind::iid_piecewise_constant && !(s.phi_hi >= s.phi_lo))
        throw config_error("forcing: phi_hi must be >= phi_lo");
    if (s.kind == ProcessKind::discrete_ou && !(s.ou_rate > 0.0 && s.ou_sigma >= 0.0))
        throw config_error("forcing: OU rate must be positive and sigma nonnegative");
    if (s.kind == ProcessKind::periodic_deterministic && s.waveform == Waveform::square && !(s.period > 0.0))
        throw config_error("forcing: period must be positive");
}

inline ProcessSpec shift(const ProcessSpec& s, double dt)
{
    ProcessSpec out = s;
    out.offset += dt;
    return out;
}

inline BoundarySample sample(const ProcessSpec& s, double t)
{
    double tb = t + s.offset;
    switch (s.kind) {
    case ProcessKind::periodic_deterministic: {
        if (s.waveform == Waveform::constant) return {detail::clip(s, s.level_hi), s.psi_hi_level};
        double ph = tb - s.period * std::floor(tb / s.period);
        bool hi = ph < 0.5 * s.period;
        return {detail::clip(s, hi ? s.level_hi : s.level_lo), hi ? s.psi_hi_level : s.psi_lo_level};
    }
    default: return detail::cell_value(s, detail::cell_index(s, tb));
    }
}

// Constant pieces covering [a, b] in the caller's time; piece ends are exact breakpoints.
inline std::vector<ForcingPiece> pieces(const ProcessSpec& s, double a, double b)
{
    std::vector<ForcingPiece> out;
    if (!(b > a)) return out;
    if (s.kind == ProcessKind::periodic_deterministic && s.waveform == Waveform::constant) {
        auto v = sample(s, a);
        out.push_back({a, b, v.phi, v.psi});
        return out;
    }
    double width, base;
    if (s.kind == ProcessKind::periodic_deterministic) {
        width = 0.5 * s.period;
        base = -s.offset;
    } else {
        width = s.cell;
        base = -s.offset - detail::phase(s);
    }
    // breakpoints at base + k * width in caller time
    auto k0 = static_cast<std::int64_t>(std::floor((a - base) / width));
    for (std::int64_t k = k0;; ++k) {
        double lo = base + static_cast<double>(k) * width;
        double hi = base + static_cast<double>(k + 1) * width;
        if (hi <= a) continue;
        if (lo >= b) break;
        double pa = std::max(lo, a), pb = std::min(hi, b);
        if (pb > pa) {
            auto v = sample(s, 0.5 * (pa + pb));
            out.push_back({pa, pb, v.phi, v.psi});
        }
    }
    return out;
}

inline double integral_phi_plus_sq(const ProcessSpec& s, double a, double b)
{
    if (!(a <= b)) throw std::domain_error("integral_phi_plus_sq: requires a <= b");
    double sum = 0.0;
    for (const auto& p : pieces(s, a, b)) {
        double q = std::max(p.phi, 0.0);
        sum += q * q * (p.b - p.a);
    }
    return sum;
}

inline double empirical_q(const ProcessSpec& s, double horizon)
{
    if (!(horizon > 0.0)) throw std::domain_error("empirical_q: horizon must be positive");
    return std::sqrt(integral_phi_plus_sq(s, 0.0, horizon) / horizon);
}

inline const char* to_string(ProcessKind k)
{
    switch (k) {
    case ProcessKind::iid_piecewise_constant: return "iid_piecewise_constant";
    case ProcessKind::discrete_ou: return "discrete_ou";
    case ProcessKind::periodic_deterministic: return "periodic_deterministic";
    }
    return "?";
}

inline ProcessSpec constant_forcing(double q, double psi = 1.0)
{
    ProcessSpec s;
    s.kind = ProcessKind::periodic_deterministic;
    s.waveform = Waveform::constant;
    s.level_hi = q;
    s.psi_hi_level = psi;
    return s;
}

inline ProcessSpec square_forcing(double hi, double lo, double period)
{
    ProcessSpec s;
    s.kind = ProcessKind::periodic_deterministic;
    s.waveform = Waveform::square;
    s.level_hi = hi;
    s.level_lo = lo;
    s.period = period;
    s.psi_hi_level = 1.0;
    s.psi_lo_level = 0.0;
    return s;
}

inline ProcessSpec iid_forcing(double lo, double hi, double cell, std::uint64_t seed)
{
    ProcessSpec s;
    s.kind = ProcessKind::iid_piecewise_constant;
    s.phi_lo = lo;
    s.phi_hi = hi;
    s.cell = cell;
    s.seed = seed;
    return s;
}

} // namespace bsvar
