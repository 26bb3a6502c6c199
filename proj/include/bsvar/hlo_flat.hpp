#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include "errors.hpp"
#include "field.hpp"
#include "forcing.hpp"

namespace bsvar {

using BoundaryTrace = ProcessSpec;

// Initial potential U0(y) = int_0^y u0. u0 is piecewise linear on [knots[k], knots[k+1])
// (jumps allowed at knots) and equal to the constant `tail` beyond the last knot.
class Potential {
public:
    Potential() : Potential({0.0}, {}, {}, 0.0) {}

    Potential(std::vector<double> knots, std::vector<double> start_values, std::vector<double> slopes, double tail)
        : knots_(std::move(knots)), a_(std::move(start_values)), s_(std::move(slopes)), tail_(tail)
    {
        if (knots_.empty() || knots_.front() != 0.0) throw config_error("potential: knots must start at 0");
        if (a_.size() + 1 != knots_.size() || s_.size() != a_.size())
            throw config_error("potential: need one value and slope per piece");
        for (std::size_t k = 0; k + 1 < knots_.size(); ++k)
            if (!(knots_[k + 1] > knots_[k])) throw config_error("potential: knots must be strictly increasing");
        a_.push_back(tail_);
        s_.push_back(0.0);
        U_.assign(knots_.size(), 0.0);
        for (std::size_t k = 0; k + 1 < knots_.size(); ++k) {
            double d = knots_[k + 1] - knots_[k];
            U_[k + 1] = U_[k] + a_[k] * d + 0.5 * s_[k] * d * d;
        }
    }

    static Potential constant(double c) { return Potential({0.0}, {}, {}, c); }

    // u0 = values[k] on [knots[k], knots[k+1]), tail beyond.
    static Potential piecewise_constant(std::vector<double> knots, std::vector<double> values, double tail)
    {
        std::vector<double> s(values.size(), 0.0);
        return Potential(std::move(knots), std::move(values), std::move(s), tail);
    }

    // Piecewise-linear U0 through (knots, values) with U0(0) = 0 and slope `tail` after the last knot.
    static Potential from_values(const std::vector<double>& knots, const std::vector<double>& values, double tail)
    {
        if (knots.size() != values.size() || values.empty() || values.front() != 0.0)
            throw config_error("potential: values must match knots and start at 0");
        std::vector<double> u;
        for (std::size_t k = 0; k + 1 < knots.size(); ++k)
            u.push_back((values[k + 1] - values[k]) / (knots[k + 1] - knots[k]));
        return piecewise_constant(knots, std::move(u), tail);
    }

    // u0 = a + s y on [0, length], tail beyond.
    static Potential linear(double a, double s, double length, double tail)
    {
        return Potential({0.0, length}, {a}, {s}, tail);
    }

    // Cadlag samples u(x_i) become the constant u(x_i) on [x_i, x_{i+1}); the first value extends to 0.
    static Potential from_field(const PiecewiseField& f)
    {
        if (f.x.empty()) return constant(0.0);
        std::vector<double> knots{0.0}, vals{f.u[0]};
        for (std::size_t i = 1; i < f.x.size(); ++i) {
            double k = f.x[i] - f.origin;
            if (k <= knots.back()) continue;
            knots.push_back(k);
            vals.push_back(f.u[i]);
        }
        double tail = vals.back();
        vals.pop_back();
        return piecewise_constant(std::move(knots), std::move(vals), tail);
    }

    std::size_t pieces() const { return knots_.size(); } // last piece is the tail
    double knot(std::size_t k) const { return knots_[k]; }
    double piece_end(std::size_t k) const
    {
        return k + 1 < knots_.size() ? knots_[k + 1] : std::numeric_limits<double>::infinity();
    }
    double piece_start_value(std::size_t k) const { return a_[k]; }
    double piece_slope(std::size_t k) const { return s_[k]; }
    double knot_potential(std::size_t k) const { return U_[k]; }
    double tail() const { return tail_; }
    double domain_end() const { return knots_.back(); }

    std::size_t piece_of(double y) const
    {
        auto it = std::upper_bound(knots_.begin(), knots_.end(), y);
        return it == knots_.begin() ? 0 : static_cast<std::size_t>(it - knots_.begin()) - 1;
    }

    double value(double y) const
    {
        std::size_t k = piece_of(y);
        double d = y - knots_[k];
        return U_[k] + a_[k] * d + 0.5 * s_[k] * d * d;
    }

    // right limit u0(y+)
    double velocity(double y) const
    {
        std::size_t k = piece_of(y);
        return a_[k] + s_[k] * (y - knots_[k]);
    }

    // Membership in U_p is decided by the tail slope.
    bool in_class(double p) const { return tail_ > p; }

private:
    std::vector<double> knots_, a_, s_, U_;
    double tail_;
};

// Right-continuous step function, used for the density datum v0.
struct StepFunction {
    std::vector<double> breaks; // values[k] holds on [breaks[k-1], breaks[k]); values.size() == breaks.size() + 1
    std::vector<double> values{0.0};

    static StepFunction constant(double c) { return StepFunction{{}, {c}}; }

    double operator()(double y) const
    {
        auto it = std::upper_bound(breaks.begin(), breaks.end(), y);
        return values[static_cast<std::size_t>(it - breaks.begin())];
    }
};

enum class MinimizerKind { interior_segment, boundary_path };

struct FlatMinimizer {
    MinimizerKind kind = MinimizerKind::interior_segment;
    double departure_t = 0.0;   // time the path leaves the initial line
    double departure_x = 0.0;   // foot on the initial line
    double entry_time = 0.0;    // boundary_path: time the path reaches 0
    double exit_time = 0.0;     // boundary_path: b
    double action = 0.0;
    double end_velocity = 0.0;
};

struct FlatOptions {
    std::size_t boundary_nodes = 1024; // sampling of the entry-time axis before refinement
};

struct FlatSolution {
    PiecewiseField field;
    std::vector<FlatMinimizer> minimizers;
    double t0 = 0.0, t = 0.0;
};

namespace detail {

struct PieceMin {
    double value;
    double y;
};

// min over y in piece k of U0(y) + (x - y)^2 / (2 tau)
inline PieceMin piece_min(const Potential& pot, std::size_t k, double x, double tau)
{
    double lo = pot.knot(k), hi = pot.piece_end(k);
    double a = pot.piece_start_value(k), s = pot.piece_slope(k), U = pot.knot_potential(k);
    auto g = [&](double y) {
        double d = y - lo, e = x - y;
        return U + a * d + 0.5 * s * d * d + e * e / (2.0 * tau);
    };
    double kappa = s + 1.0 / tau;
    if (kappa > 0.0) {
        double y = lo + ((x - lo) / tau - a) / kappa;
        y = std::clamp(y, lo, hi);
        return {g(y), y};
    }
    double glo = g(lo), ghi = g(hi);
    return ghi <= glo ? PieceMin{ghi, hi} : PieceMin{glo, lo};
}

inline PieceMin potential_min(const Potential& pot, double x, double tau, std::size_t k_end)
{
    PieceMin best{std::numeric_limits<double>::infinity(), 0.0};
    for (std::size_t k = 0; k < k_end; ++k) {
        auto m = piece_min(pot, k, x, tau);
        if (m.value <= best.value) best = m;
    }
    return best;
}

// Right-most minimizers of U0(y) + (x - y)^2/(2 tau) for sorted xs. The minimizing
// piece is nondecreasing in x, so a divide-and-conquer sweep suffices.
inline void interior_minima(const Potential& pot, const std::vector<double>& xs, double tau, std::size_t k_end,
                            std::vector<PieceMin>& out)
{
    out.assign(xs.size(), PieceMin{0.0, 0.0});
    struct Frame {
        std::size_t lo, hi, klo, khi;
    };
    if (xs.empty() || k_end == 0) return;
    std::vector<Frame> stack{{0, xs.size(), 0, k_end - 1}};
    while (!stack.empty()) {
        Frame f = stack.back();
        stack.pop_back();
        if (f.lo >= f.hi) continue;
        std::size_t mid = f.lo + (f.hi - f.lo) / 2;
        PieceMin best{std::numeric_limits<double>::infinity(), 0.0};
        std::size_t kbest = f.klo;
        for (std::size_t k = f.klo; k <= f.khi; ++k) {
            auto m = piece_min(pot, k, xs[mid], tau);
            if (m.value <= best.value) {
                best = m;
                kbest = k;
            }
        }
        out[mid] = best;
        stack.push_back({f.lo, mid, f.klo, kbest});
        stack.push_back({mid + 1, f.hi, kbest, f.khi});
    }
}

// Value of the best path that ends waiting at the boundary: V(b) = base - q2 (b - l) / 2 on [l, r].
struct BoundarySegment {
    double l, r;
    double q2;
    double base;
    double entry_time;
    double entry_foot;
};

inline double phi_plus_sq(const ForcingPiece& p)
{
    double q = std::max(p.phi, 0.0);
    return q * q;
}

template <class F>
double golden_min(F&& f, double a, double b, double& fx, int iters = 80)
{
    const double g = 0.6180339887498949;
    double c = b - g * (b - a), d = a + g * (b - a);
    double fc = f(c), fd = f(d);
    for (int i = 0; i < iters && b - a > 1e-15 * (1.0 + std::abs(a)); ++i) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if (fc <= fd) {
        fx = fc;
        return c;
    }
    fx = fd;
    return d;
}

inline std::vector<BoundarySegment> flat_boundary_segments(const Potential& pot, const BoundaryTrace& bc, double t0,
                                                           double t, const FlatOptions& opt)
{
    auto ps = pieces(bc, t0, t);
    std::vector<double> nodes;
    std::size_t L = std::max<std::size_t>(opt.boundary_nodes, 2);
    for (std::size_t i = 0; i <= L; ++i) nodes.push_back(t0 + (t - t0) * static_cast<double>(i) / static_cast<double>(L));
    nodes.back() = t;
    for (const auto& p : ps) nodes.push_back(p.a);
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());

    // Phi(a) = 1/2 int_{t0}^a phi_+^2, exact from the pieces
    std::vector<double> piece_phi0(ps.size());
    double acc = 0.0;
    for (std::size_t j = 0; j < ps.size(); ++j) {
        piece_phi0[j] = acc;
        acc += 0.5 * phi_plus_sq(ps[j]) * (ps[j].b - ps[j].a);
    }
    auto piece_index = [&](double a) {
        auto it = std::upper_bound(ps.begin(), ps.end(), a, [](double v, const ForcingPiece& p) { return v < p.a; });
        return it == ps.begin() ? std::size_t{0} : static_cast<std::size_t>(it - ps.begin()) - 1;
    };
    auto Phi = [&](double a) {
        std::size_t j = piece_index(a);
        return piece_phi0[j] + 0.5 * phi_plus_sq(ps[j]) * (a - ps[j].a);
    };
    std::size_t kend = pot.pieces();
    auto G = [&](double a) -> PieceMin {
        if (a <= t0) return {0.0, 0.0};
        return potential_min(pot, 0.0, a - t0, kend);
    };
    auto H = [&](double a) { return G(a).value + Phi(a); };

    std::vector<double> Hn(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) Hn[i] = H(nodes[i]);
    std::vector<double> extra;
    for (std::size_t i = 1; i + 1 < nodes.size(); ++i) {
        if (Hn[i] <= Hn[i - 1] && Hn[i] <= Hn[i + 1] && (Hn[i] < Hn[i - 1] || Hn[i] < Hn[i + 1])) {
            double fx;
            double a = golden_min(H, nodes[i - 1], nodes[i + 1], fx);
            if (fx < Hn[i]) extra.push_back(a);
        }
    }
    if (!extra.empty()) {
        nodes.insert(nodes.end(), extra.begin(), extra.end());
        std::sort(nodes.begin(), nodes.end());
        nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
        Hn.resize(nodes.size());
        for (std::size_t i = 0; i < nodes.size(); ++i) Hn[i] = H(nodes[i]);
    }

    std::vector<BoundarySegment> segs;
    double M = std::numeric_limits<double>::infinity();
    double entry_t = t0, entry_y = 0.0;
    for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
        if (Hn[i] < M) {
            M = Hn[i];
            entry_t = nodes[i];
            entry_y = G(nodes[i]).y;
        }
        double l = nodes[i], r = nodes[i + 1];
        double q2 = phi_plus_sq(ps[piece_index(0.5 * (l + r))]);
        double base = M - Phi(l);
        if (!segs.empty()) {
            auto& s = segs.back();
            if (s.q2 == q2 && s.entry_time == entry_t && s.r == l) {
                s.r = r;
                continue;
            }
        }
        segs.push_back({l, r, q2, base, entry_t, entry_y});
    }
    return segs;
}

struct BoundaryChoice {
    double value = std::numeric_limits<double>::infinity();
    double b = 0.0;
    std::size_t seg = 0;
};

inline BoundaryChoice best_exit(const std::vector<BoundarySegment>& segs, double t, double x)
{
    BoundaryChoice best;
    for (std::size_t j = 0; j < segs.size(); ++j) {
        const auto& s = segs[j];
        double b = s.l;
        if (s.q2 > 0.0) b = std::clamp(t - x / std::sqrt(s.q2), s.l, s.r);
        if (!(t - b > 0.0)) continue;
        double val = s.base - 0.5 * s.q2 * (b - s.l) + x * x / (2.0 * (t - b));
        if (val < best.value) best = {val, b, j};
    }
    return best;
}

} // namespace detail

inline FlatSolution solve_ivbp_flat(const Potential& u0, const StepFunction& v0, const BoundaryTrace& bc, double t0,
                                    double t, const std::vector<double>& xs, const FlatOptions& opt = {})
{
    if (!(t > t0)) throw config_error("solve_ivbp_flat: requires t > t0");
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!(xs[i] > 0.0)) throw config_error("solve_ivbp_flat: grid must be positive");
        if (i > 0 && !(xs[i] > xs[i - 1])) throw config_error("solve_ivbp_flat: grid must be increasing");
    }
    validate(bc);
    double tau = t - t0;
    std::vector<detail::PieceMin> inner;
    detail::interior_minima(u0, xs, tau, u0.pieces(), inner);
    auto segs = detail::flat_boundary_segments(u0, bc, t0, t, opt);

    FlatSolution sol;
    sol.t0 = t0;
    sol.t = t;
    sol.field.origin = 0.0;
    sol.field.x = xs;
    sol.field.u.resize(xs.size());
    sol.field.v.resize(xs.size());
    sol.minimizers.resize(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double x = xs[i];
        auto bnd = detail::best_exit(segs, t, x);
        FlatMinimizer m;
        if (inner[i].value <= bnd.value) {
            m.kind = MinimizerKind::interior_segment;
            m.departure_t = t0;
            m.departure_x = inner[i].y;
            m.action = inner[i].value;
            m.end_velocity = (x - inner[i].y) / tau;
            sol.field.v[i] = v0(inner[i].y);
        } else {
            const auto& s = segs[bnd.seg];
            m.kind = MinimizerKind::boundary_path;
            m.departure_t = t0;
            m.departure_x = s.entry_foot;
            m.entry_time = s.entry_time;
            m.exit_time = bnd.b;
            m.action = bnd.value;
            m.end_velocity = x / (t - bnd.b);
            sol.field.v[i] = sample(bc, bnd.b).psi;
        }
        sol.field.u[i] = m.end_velocity;
        sol.minimizers[i] = m;
    }
    return sol;
}

// The boundary-to-boundary action: waiting at 0 throughout is optimal.
inline double boundary_action_flat(const BoundaryTrace& bc, double t0, double t1)
{
    if (!(t1 > t0)) throw config_error("boundary_action_flat: requires t0 < t1");
    return -0.5 * integral_phi_plus_sq(bc, t0, t1);
}

struct GlobalFlatOptions {
    double initial_lookback = 8.0;
    double max_lookback = 1048576.0;
};

struct GlobalPoint {
    double u = 0.0;
    double v = 0.0;
    double t_star = 0.0;
    double lookback = 0.0;
    bool converged = false;
};

namespace detail {

struct FlatGlobalMin {
    double value;
    double s;
};

// Smallest minimizer of F(t,x,s) = x^2/(2(t-s)) + 1/2 int_s^t phi_+^2 over s in [t - T, t).
inline FlatGlobalMin flat_global_window(const BoundaryTrace& bc, double t, double x, double T)
{
    auto ps = pieces(bc, t - T, t);
    FlatGlobalMin best{std::numeric_limits<double>::infinity(), t};
    double I = 0.0; // 1/2 int_{piece end}^t phi_+^2
    for (std::size_t j = ps.size(); j-- > 0;) {
        const auto& p = ps[j];
        double q2 = phi_plus_sq(p);
        double s = p.a;
        if (q2 > 0.0) s = std::clamp(t - x / std::sqrt(q2), p.a, p.b);
        if (t - s > 0.0) {
            double val = x * x / (2.0 * (t - s)) + I + 0.5 * q2 * (p.b - s);
            if (val <= best.value) best = {val, s};
        }
        I += 0.5 * q2 * (p.b - p.a);
    }
    return best;
}

} // namespace detail

inline GlobalPoint global_solution_flat(const BoundaryTrace& bc, double t, double x, const GlobalFlatOptions& opt = {})
{
    if (!(x > 0.0)) throw config_error("global_solution_flat: requires x > 0");
    validate(bc);
    double T = opt.initial_lookback;
    auto prev = detail::flat_global_window(bc, t, x, T);
    int stable = 0;
    while (T < opt.max_lookback) {
        T *= 2.0;
        auto cur = detail::flat_global_window(bc, t, x, T);
        stable = (cur.s == prev.s) ? stable + 1 : 0;
        prev = cur;
        if (stable >= 2) {
            GlobalPoint g;
            g.t_star = cur.s;
            g.u = x / (t - cur.s);
            g.v = sample(bc, cur.s).psi;
            g.lookback = T;
            g.converged = true;
            return g;
        }
    }
    throw numerical_failure("global_solution_flat: minimum not bracketed within the maximal look-back");
}

inline PiecewiseField global_field_flat(const BoundaryTrace& bc, double t, const std::vector<double>& xs,
                                        const GlobalFlatOptions& opt = {})
{
    PiecewiseField f;
    f.x = xs;
    for (double x : xs) {
        auto g = global_solution_flat(bc, t, x, opt);
        f.u.push_back(g.u);
        f.v.push_back(g.v);
    }
    return f;
}

struct MovingBoundaryResult {
    PiecewiseField field; // only the points of the grid inside [phi0, phi1]
    double phi0 = 0.0, phi1 = 0.0;
};

// Data on [0, L] (L = last knot of u0), no boundary condition: the occupied region moves.
inline MovingBoundaryResult solve_moving_boundary(const Potential& u0, const StepFunction& v0, double t,
                                                  const std::vector<double>& xs)
{
    if (!(t > 0.0)) throw config_error("solve_moving_boundary: requires t > 0");
    double L = u0.domain_end();
    if (!(L > 0.0)) throw config_error("solve_moving_boundary: data interval must have positive length");
    std::size_t kend = u0.pieces() - 1;
    auto foot = [&](double x) { return detail::potential_min(u0, x, t, kend).y; };

    double umax = 0.0;
    for (std::size_t k = 0; k < kend; ++k) {
        umax = std::max(umax, std::abs(u0.piece_start_value(k)));
        umax = std::max(umax, std::abs(u0.piece_start_value(k) + u0.piece_slope(k) * (u0.piece_end(k) - u0.knot(k))));
    }
    double reach = (umax + 1.0) * t + 1.0;
    auto edge = [&](auto pred, double lo, double hi) {
        // pred(lo) true, pred(hi) false
        for (int i = 0; i < 200 && hi - lo > 0.0; ++i) {
            double mid = 0.5 * (lo + hi);
            if (mid == lo || mid == hi) break;
            (pred(mid) ? lo : hi) = mid;
        }
        return lo;
    };
    MovingBoundaryResult res;
    res.phi0 = edge([&](double x) { return foot(x) == 0.0; }, -reach, L + reach);
    res.phi1 = edge([&](double x) { return foot(x) < L; }, -reach, L + reach);
    res.field.origin = 0.0;
    for (double x : xs) {
        if (x < res.phi0 || x > res.phi1) continue;
        double y = foot(x);
        res.field.x.push_back(x);
        res.field.u.push_back((x - y) / t);
        res.field.v.push_back(v0(y));
    }
    return res;
}

} // namespace bsvar
