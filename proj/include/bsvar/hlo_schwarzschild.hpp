#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "characteristics.hpp"
#include "errors.hpp"
#include "field.hpp"
#include "forcing.hpp"
#include "geometry.hpp"
#include "hlo_flat.hpp"

namespace bsvar {

enum class PotentialVariant { integrable, asymptotic, from_boundary };

inline const char* to_string(PotentialVariant v)
{
    switch (v) {
    case PotentialVariant::integrable: return "integrable";
    case PotentialVariant::asymptotic: return "asymptotic";
    case PotentialVariant::from_boundary: return "from_boundary";
    }
    return "?";
}

namespace detail {

// int_a^b g(r) (1 - 2M/r)^-2 dr by Gauss-Legendre on panels kept well away from r = 2M
template <class G>
double weighted_integral(const Background& bg, G&& g, double a, double b)
{
    static constexpr std::array<double, 8> xs{0.0950125098376374, 0.2816035507792589, 0.4580167776572274,
                                              0.6178762444026438, 0.7554044083550030, 0.8656312023878318,
                                              0.9445750230732326, 0.9894009349916499};
    static constexpr std::array<double, 8> ws{0.1894506104550685, 0.1826034150449236, 0.1691565193950025,
                                              0.1495959888165767, 0.1246289712555339, 0.0951585116824928,
                                              0.0622535239386479, 0.0271524594117541};
    if (b == a) return 0.0;
    double sign = 1.0;
    if (b < a) {
        std::swap(a, b);
        sign = -1.0;
    }
    double m2 = 2.0 * bg.mass;
    auto w = [&](double r) {
        double f = bg.mass == 0.0 ? 1.0 : 1.0 - m2 / r;
        return g(r) / (f * f);
    };
    double sum = 0.0, x = a;
    while (x < b) {
        double len = std::min(b - x, std::max(0.25 * (x - m2), 0.5));
        double c = x + 0.5 * len, h = 0.5 * len, s = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) s += ws[i] * (w(c - h * xs[i]) + w(c + h * xs[i]));
        sum += s * h;
        x += len;
    }
    return sign * sum;
}

} // namespace detail

// Initial data u0 on [r*, inf): smooth pieces with jumps allowed at piece ends.
class SchwPotential {
public:
    struct Piece {
        double lo, hi;
        std::function<double(double)> u;
    };

    static SchwPotential piecewise(const Background& bg, const Potential& pl,
                                   PotentialVariant variant = PotentialVariant::from_boundary)
    {
        SchwPotential sp(bg, variant);
        for (std::size_t k = 0; k < pl.pieces(); ++k) {
            double lo = bg.r_star + pl.knot(k);
            double hi = k + 1 < pl.pieces() ? bg.r_star + pl.piece_end(k) : std::numeric_limits<double>::infinity();
            double a = pl.piece_start_value(k), s = pl.piece_slope(k), y0 = pl.knot(k), rs = bg.r_star;
            sp.pieces_.push_back({lo, hi, [a, s, y0, rs](double r) { return a + s * ((r - rs) - y0); }});
        }
        sp.finish();
        return sp;
    }

    // The static solution with asymptotic velocity p, i.e. the outgoing branch of the level set C = p^2.
    static SchwPotential static_profile(const Background& bg, double p,
                                        PotentialVariant variant = PotentialVariant::asymptotic)
    {
        SchwPotential sp(bg, variant);
        sp.asym_ = p;
        Background b = bg;
        sp.pieces_.push_back({bg.r_star, std::numeric_limits<double>::infinity(),
                              [b, p](double r) { return static_velocity(b, p, r); }});
        sp.finish();
        return sp;
    }

    // No initial data: only paths issued from the corner (t0, r*) are admissible.
    static SchwPotential boundary_only(const Background& bg)
    {
        SchwPotential sp(bg, PotentialVariant::from_boundary);
        sp.boundary_only_ = true;
        sp.pieces_.push_back({bg.r_star, std::numeric_limits<double>::infinity(), [](double) { return 0.0; }});
        sp.finish();
        return sp;
    }

    SchwPotential& with_asymptotic_velocity(double p)
    {
        asym_ = p;
        return *this;
    }

    bool is_boundary_only() const { return boundary_only_; }
    PotentialVariant variant() const { return variant_; }
    double asymptotic_velocity() const { return asym_; }
    const std::vector<Piece>& pieces() const { return pieces_; }
    const Background& background() const { return bg_; }

    std::size_t piece_of(double r) const
    {
        std::size_t k = 0;
        while (k + 1 < pieces_.size() && r >= pieces_[k + 1].lo) ++k;
        return k;
    }

    double velocity(double r) const { return pieces_[piece_of(r)].u(r); }

    double left_velocity(double r) const
    {
        std::size_t k = piece_of(r);
        if (k > 0 && r == pieces_[k].lo) return pieces_[k - 1].u(r);
        return pieces_[k].u(r);
    }

    // W(r) = int_{r*}^r (1 - 2M/r')^-2 u0(r') dr', the gauge used by the solver
    double solver_potential(double r) const
    {
        std::size_t k = piece_of(r);
        return cum_[k] + detail::weighted_integral(bg_, pieces_[k].u, pieces_[k].lo, r);
    }

    // Reported potential. Integrals to infinity are truncated at the end of the data support.
    double value(double r) const
    {
        double ref = pieces_.back().lo;
        switch (variant_) {
        case PotentialVariant::from_boundary: return solver_potential(r);
        case PotentialVariant::integrable:
            if (pieces_.back().u(ref) != 0.0 || pieces_.back().u(ref + 1.0) != 0.0)
                throw config_error("potential: integrable variant needs u0 = 0 beyond the data support");
            return solver_potential(r) - solver_potential(ref);
        case PotentialVariant::asymptotic: {
            Background b = bg_;
            double p = asym_;
            auto sharp = [b, p](double x) { return static_velocity(b, std::abs(p), x) * (p < 0.0 ? -1.0 : 1.0); };
            return solver_potential(r) - solver_potential(ref) - detail::weighted_integral(bg_, sharp, ref, r);
        }
        }
        return 0.0;
    }

    // u0 in V_p-type classes is judged by the value on the tail piece.
    double tail_velocity() const { return pieces_.back().u(pieces_.back().lo + 1.0); }

private:
    SchwPotential(const Background& bg, PotentialVariant v) : bg_(bg), variant_(v) {}

    void finish()
    {
        cum_.assign(pieces_.size(), 0.0);
        for (std::size_t k = 0; k + 1 < pieces_.size(); ++k)
            cum_[k + 1] = cum_[k] + detail::weighted_integral(bg_, pieces_[k].u, pieces_[k].lo, pieces_[k].hi);
        for (const auto& p : pieces_) {
            double probe = p.lo;
            if (!(std::abs(p.u(probe)) < 1.0)) throw config_error("potential: |u0| must be < 1");
        }
    }

    Background bg_;
    PotentialVariant variant_;
    bool boundary_only_ = false;
    double asym_ = 0.0;
    std::vector<Piece> pieces_;
    std::vector<double> cum_;
};

struct ActionBreakdown {
    double w = 0.0;
    double k = 0.0;
    double p = 0.0;
    double b = 0.0;
    double total = 0.0;
};

struct PathSegment {
    bool on_boundary = false;
    double t_a = 0.0, t_b = 0.0; // boundary segments
    CharArc arc;                 // characteristic segments
};

struct SchwPath {
    std::vector<PathSegment> segments;
};

// (phi_+^2 - u_E^2) / (2 (1 - u_E^2)) at r*, the boundary credit rate
inline double credit_rate(const Background& bg, double phi)
{
    double q = std::max(phi, 0.0);
    double ue2 = bg.mass == 0.0 ? 0.0 : 2.0 * bg.mass / bg.r_star;
    return 0.5 * (q * q - ue2) / (1.0 - ue2);
}

inline double boundary_credit(const Background& bg, const BoundaryTrace& bc, double a, double b)
{
    double sum = 0.0;
    for (const auto& p : pieces(bc, a, b)) sum += credit_rate(bg, p.phi) * (p.b - p.a);
    return sum;
}

inline ActionBreakdown action_of_path(const Background& bg, const SchwPath& path, const BoundaryTrace& bc,
                                      const SchwPotential& w)
{
    ActionBreakdown out;
    if (path.segments.empty()) return out;
    const auto& first = path.segments.front();
    double r0 = first.on_boundary ? bg.r_star : first.arc.states.front().r;
    out.w = w.value(r0);
    for (const auto& s : path.segments) {
        if (s.on_boundary) {
            out.b += boundary_credit(bg, bc, s.t_a, s.t_b);
        } else {
            double tau = s.arc.states.back().t - s.arc.states.front().t;
            out.k += 0.5 * s.arc.c * tau;
            out.p += s.arc.p_integral.empty() ? 0.0 : s.arc.p_integral.back();
        }
    }
    out.total = out.w + out.k + out.p - out.b;
    return out;
}

struct SchwOptions {
    double node_spacing = 0.0;            // 0: largest power of two <= span / 2048
    std::size_t excursion_cap_nodes = 8192;
    std::size_t family_samples = 33;
    std::size_t max_family_evals = 2'000'000;
    IntegratorOptions integrator{};
};

struct SchwMinimizer {
    bool from_boundary = false;
    double departure_time = 0.0;
    double departure_r = 0.0;
    double departure_velocity = 0.0;
    double c = 0.0;
    double action = 0.0;
    double end_velocity = 0.0;
};

// Value function at r* on the node set: V[k] is the least action of paths that sit at r* at time b[k].
struct BoundaryValue {
    std::vector<double> b, V;
    std::vector<char> waited;  // interval (b[k-1], b[k]] attained by waiting; index 0 unused
    std::vector<double> v;     // departure velocity for exits inside interval k
    std::vector<double> c;     // conserved quantity of those exits
};

struct SchwSolution {
    PiecewiseField field;
    std::vector<SchwMinimizer> minimizers;
    BoundaryValue boundary;
    double t0 = 0.0, t1 = 0.0;
};

inline double lattice_spacing(double span)
{
    double h = std::exp2(std::floor(std::log2(span / 2048.0)));
    return std::clamp(h, std::exp2(-20.0), 64.0);
}

namespace detail {

inline std::vector<double> make_nodes(const BoundaryTrace& bc, double t0, double t1, double h)
{
    std::vector<double> nodes{t0};
    double k0 = std::floor(t0 / h) + 1.0;
    for (double k = k0;; k += 1.0) {
        double b = k * h;
        if (b >= t1) break;
        nodes.push_back(b);
    }
    auto ps = pieces(bc, t0, t1);
    for (std::size_t j = 1; j < ps.size(); ++j) nodes.push_back(ps[j].a);
    nodes.push_back(t1);
    std::sort(nodes.begin(), nodes.end());
    std::vector<double> out;
    double tol = 1e-9 * h;
    for (double b : nodes) {
        if (!out.empty() && b - out.back() <= tol) {
            // keep the lattice point or an endpoint
            bool keep_new = (b == t1) || (std::fmod(b, h) == 0.0);
            if (keep_new && out.size() > 1) out.back() = b;
            continue;
        }
        out.push_back(b);
    }
    return out;
}

// Least action of a single excursion from r* back to r* lasting tau.
class ExcursionTable {
public:
    ExcursionTable() = default;

    static const ExcursionTable& get(const Background& bg, double max_tau, const IntegratorOptions& opt)
    {
        static std::map<std::tuple<double, double, double, double>, ExcursionTable> cache;
        double cap = std::exp2(std::ceil(std::log2(std::max(max_tau, 1.0))));
        auto key = std::make_tuple(bg.mass, bg.r_star, cap, opt.rtol);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
        return cache.emplace(key, build(bg, cap, opt)).first->second;
    }

    bool empty() const { return T_.empty(); }
    double t_min() const { return T_.empty() ? 0.0 : T_.front(); }
    double t_max() const { return T_.empty() ? 0.0 : T_.back(); }

    double operator()(double tau) const
    {
        if (T_.empty() || tau < T_.front() || tau > T_.back()) return std::numeric_limits<double>::infinity();
        auto it = std::upper_bound(T_.begin(), T_.end(), tau);
        std::size_t i = it == T_.end() ? T_.size() - 2 : static_cast<std::size_t>(it - T_.begin()) - 1;
        double h = T_[i + 1] - T_[i];
        double s = (tau - T_[i]) / h;
        double h00 = (1 + 2 * s) * (1 - s) * (1 - s), h10 = s * (1 - s) * (1 - s);
        double h01 = s * s * (3 - 2 * s), h11 = s * s * (s - 1);
        return h00 * E_[i] + h10 * h * dE_[i] + h01 * E_[i + 1] + h11 * h * dE_[i + 1];
    }

private:
    static ExcursionTable build(const Background& bg, double cap, const IntegratorOptions& opt)
    {
        ExcursionTable tab;
        if (bg.mass == 0.0) return tab;
        double ue = escape_velocity(bg, bg.r_star);
        const int n = 3000;
        for (int i = 1; i < n; ++i) {
            double s = static_cast<double>(i) / n;
            double v = ue * std::sin(1.5707963267948966 * s);
            StopRules rules;
            rules.t_end = 2.0 * cap + 1.0;
            rules.r_floor = bg.r_star;
            auto run = run_arc(bg, {0.0, bg.r_star, v, 0.0}, rules, opt);
            if (run.reason != ArcEnd::floor) break;
            double T = run.end.t;
            double c = conserved_c(bg, bg.r_star, v);
            if (!tab.T_.empty() && !(T > tab.T_.back())) continue;
            tab.T_.push_back(T);
            tab.E_.push_back(0.5 * c * T + run.end.p);
            tab.dE_.push_back(-0.5 * c);
            if (T > cap) break;
        }
        if (tab.T_.size() < 2) tab.T_.clear();
        return tab;
    }

    std::vector<double> T_, E_, dE_;
};

struct Hit {
    double t;
    double action;
};

inline BoundaryValue boundary_dp(const Background& bg, const BoundaryTrace& bc, double t0, double t1, double h,
                                 double V0, std::vector<Hit> hits, const SchwOptions& opt)
{
    BoundaryValue bv;
    bv.b = make_nodes(bc, t0, t1, h);
    std::size_t K = bv.b.size();
    bv.V.assign(K, 0.0);
    bv.waited.assign(K, 0);
    bv.v.assign(K, 0.0);
    bv.c.assign(K, 0.0);
    std::vector<double> beta(K, 0.0), phi(K, 0.0);
    double ue = bg.mass == 0.0 ? 0.0 : escape_velocity(bg, bg.r_star);
    bool excursions_useful = false;
    for (std::size_t k = 1; k < K; ++k) {
        phi[k] = sample(bc, 0.5 * (bv.b[k - 1] + bv.b[k])).phi;
        beta[k] = credit_rate(bg, phi[k]);
        if (std::max(phi[k], 0.0) < ue) excursions_useful = true;
    }
    std::vector<double> G(K, std::numeric_limits<double>::infinity());
    std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) { return a.t < b.t; });
    {
        std::size_t k = 1;
        for (const auto& hit : hits) {
            if (hit.t < t0 || hit.t > t1) continue;
            while (k < K && bv.b[k] < hit.t) ++k;
            if (k >= K) break;
            double val = hit.action - beta[k] * (bv.b[k] - hit.t);
            G[k] = std::min(G[k], val);
        }
    }

    const ExcursionTable* tab = nullptr;
    if (excursions_useful && bg.mass > 0.0) {
        std::size_t cap = std::min(opt.excursion_cap_nodes, K);
        double max_tau = 0.0;
        for (std::size_t k = cap; k < K; ++k) max_tau = std::max(max_tau, bv.b[k] - bv.b[k - cap]);
        if (cap >= K) max_tau = t1 - t0;
        tab = &ExcursionTable::get(bg, max_tau, opt.integrator);
        if (tab->empty()) tab = nullptr;
    }

    bv.V[0] = V0;
    for (std::size_t k = 1; k < K; ++k) {
        double best = bv.V[k - 1] - beta[k] * (bv.b[k] - bv.b[k - 1]);
        char waited = 1;
        if (G[k] < best) {
            best = G[k];
            waited = 0;
        }
        if (tab) {
            std::size_t jmin = k > opt.excursion_cap_nodes ? k - opt.excursion_cap_nodes : 0;
            for (std::size_t j = k; j-- > jmin;) {
                double tau = bv.b[k] - bv.b[j];
                if (tau < tab->t_min()) continue;
                if (tau > tab->t_max()) break;
                double val = bv.V[j] + (*tab)(tau);
                if (val < best) {
                    best = val;
                    waited = 0;
                }
            }
        }
        bv.V[k] = best;
        bv.waited[k] = waited;
        double v;
        if (waited) {
            v = std::max(phi[k], 0.0);
        } else {
            double c = -2.0 * (bv.V[k] - bv.V[k - 1]) / (bv.b[k] - bv.b[k - 1]);
            double s2 = c * (1.0 - ue * ue) + ue * ue;
            v = std::sqrt(std::clamp(s2, 0.0, 1.0 - 1e-15));
        }
        bv.v[k] = v;
        bv.c[k] = conserved_c(bg, bg.r_star, v);
    }
    return bv;
}

// Outgoing characteristic from r* at time 0, recorded with the apex split out.
struct BaseArc {
    double v = 0.0, c = 0.0;
    std::vector<ArcPoint> pts;
    std::size_t apex = std::numeric_limits<std::size_t>::max(); // index of the turning point, if any
    ArcEnd end = ArcEnd::time_reached;
};

inline BaseArc make_base_arc(const Background& bg, double v, double tau_max, double r_ceiling,
                             const IntegratorOptions& opt)
{
    BaseArc a;
    a.v = v;
    a.c = conserved_c(bg, bg.r_star, v);
    if (!(v > 0.0)) {
        a.pts.push_back({0.0, bg.r_star, v, 0.0});
        a.end = ArcEnd::floor;
        return a;
    }
    StopRules rules;
    rules.t_end = tau_max;
    rules.r_floor = bg.r_star;
    rules.r_ceiling = r_ceiling;
    rules.stop_on_turn = bg.mass > 0.0 && a.c < 0.0;
    auto run = run_arc(bg, {0.0, bg.r_star, v, 0.0}, rules, opt, &a.pts);
    a.end = run.reason;
    if (run.turned && run.end.t < tau_max) {
        a.apex = a.pts.size() - 1;
        ArcPoint apex = a.pts.back();
        StopRules fall;
        fall.t_end = tau_max;
        fall.r_floor = bg.r_star;
        std::vector<ArcPoint> tail;
        // start just past the apex on the inward branch
        ArcPoint s = apex;
        s.u = -std::abs(s.u);
        auto run2 = run_arc(bg, s, fall, opt, &tail);
        for (std::size_t i = 1; i < tail.size(); ++i) {
            auto q = tail[i];
            q.p += apex.p;
            a.pts.push_back(q);
        }
        a.end = run2.reason;
    }
    return a;
}

// Time on the chosen branch of a base arc at which it passes radius r, with the P-integral there.
inline bool base_arc_time(const Background& bg, const BaseArc& a, double r, bool rising, const IntegratorOptions& opt,
                          double& tau, double& p)
{
    std::size_t n = a.pts.size();
    if (n < 2) return false;
    std::size_t lo = rising ? 0 : (a.apex == std::numeric_limits<std::size_t>::max() ? n : a.apex);
    std::size_t hi = rising ? (a.apex == std::numeric_limits<std::size_t>::max() ? n - 1 : a.apex) : n - 1;
    if (lo >= hi) return false;
    // samples are monotone in r on each branch
    auto rad = [&](std::size_t i) { return rising ? a.pts[i].r : -a.pts[i].r; };
    double target = rising ? r : -r;
    if (target < rad(lo) || target > rad(hi)) return false;
    std::size_t L = lo, H = hi;
    while (H - L > 1) {
        std::size_t mid = (L + H) / 2;
        (rad(mid) <= target ? L : H) = mid;
    }
    if (rad(L) == target) {
        tau = a.pts[L].t;
        p = a.pts[L].p;
        return true;
    }
    if (rad(H) == target) {
        tau = a.pts[H].t;
        p = a.pts[H].p;
        return true;
    }
    StopRules rules;
    rules.t_end = a.pts[H].t + 1e-9 * (1.0 + a.pts[H].t);
    rules.r_target = r;
    ArcPoint s = a.pts[L];
    auto run = run_arc(bg, s, rules, opt);
    if (run.reason != ArcEnd::radius_target) {
        // fall back on the bracketing samples
        double w = (target - rad(L)) / (rad(H) - rad(L));
        tau = a.pts[L].t + w * (a.pts[H].t - a.pts[L].t);
        p = a.pts[L].p + w * (a.pts[H].p - a.pts[L].p);
        return true;
    }
    tau = run.end.t;
    p = s.p + run.end.p;
    return true;
}

// approximate radius of a base arc at time tau (linear in the samples); NaN past the end
inline double base_arc_radius(const BaseArc& a, double tau)
{
    if (a.pts.empty() || tau > a.pts.back().t) return std::numeric_limits<double>::quiet_NaN();
    if (tau <= 0.0) return a.pts.front().r;
    auto it = std::upper_bound(a.pts.begin(), a.pts.end(), tau, [](double t, const ArcPoint& q) { return t < q.t; });
    std::size_t i = static_cast<std::size_t>(it - a.pts.begin());
    if (i >= a.pts.size()) return a.pts.back().r;
    const auto& q0 = a.pts[i - 1];
    const auto& q1 = a.pts[i];
    double w = (tau - q0.t) / (q1.t - q0.t);
    return q0.r + w * (q1.r - q0.r);
}

struct Candidate {
    double action = std::numeric_limits<double>::infinity();
    int tier = 2;       // 0: initial line, 1: boundary
    double key = 0.0;   // -foot radius on the initial line, departure time at the boundary
    SchwMinimizer m;
};

inline bool better(const Candidate& a, const Candidate& b)
{
    if (a.action != b.action) return a.action < b.action;
    if (a.tier != b.tier) return a.tier < b.tier;
    return a.key < b.key;
}

struct FamilyStart {
    double t, r, v, base;
    bool from_boundary;
};

struct FamilyEval {
    double param = 0.0;
    bool reached = false;   // arrived at t1 without touching r*
    bool hit = false;       // came back to r* before t1
    double t_end = 0.0, r_end = 0.0, u_end = 0.0, action = 0.0, c = 0.0;
};

class SheetSolver {
public:
    SheetSolver(const Background& bg, double t1, const std::vector<double>& rs, const SchwOptions& opt)
        : bg_(bg), t1_(t1), rs_(rs), opt_(opt), best_(rs.size())
    {
        r_ceiling_ = rs.empty() ? bg.r_star + 1.0 : rs.back() + 1.0;
        ue_star_ = bg.mass == 0.0 ? 0.0 : escape_velocity(bg, bg.r_star);
    }

    const std::vector<Candidate>& best() const { return best_; }

    double end_speed(double c, double r) const
    {
        double s2 = speed_squared_on_level(bg_, c, r);
        return std::sqrt(std::max(s2, 0.0));
    }

    void offer(std::size_t i, const Candidate& cand)
    {
        if (better(cand, best_[i])) best_[i] = cand;
    }

    FamilyEval eval(const std::function<FamilyStart(double)>& start, double param)
    {
        ++evals_;
        if (evals_ > opt_.max_family_evals)
            throw numerical_failure("solve_ivbp_schw: candidate family budget exhausted");
        FamilyStart s = start(param);
        FamilyEval e;
        e.param = param;
        e.c = level_of(bg_, s.r, s.v);
        StopRules rules;
        rules.t_end = t1_;
        rules.r_floor = bg_.r_star;
        auto run = run_arc(bg_, {s.t, s.r, s.v, 0.0}, rules, opt_.integrator);
        e.t_end = run.end.t;
        e.r_end = run.end.r;
        e.u_end = run.end.u;
        e.action = s.base + 0.5 * e.c * (run.end.t - s.t) + run.end.p;
        if (run.reason == ArcEnd::time_reached) e.reached = true;
        else if (run.reason == ArcEnd::floor || run.reason == ArcEnd::absorbed) e.hit = true;
        return e;
    }

    // Sample a one-parameter family, feed boundary hits, and resolve grid arrivals.
    void family(const std::function<FamilyStart(double)>& start, double lo, double hi, int tier,
                const std::function<double(double)>& key, std::vector<Hit>* hits, double hit_resolution,
                std::size_t n0 = 0)
    {
        if (!(hi >= lo)) return;
        if (n0 == 0) n0 = opt_.family_samples;
        std::vector<FamilyEval> ev;
        if (hi == lo) {
            ev.push_back(eval(start, lo));
        } else {
            for (std::size_t i = 0; i <= n0; ++i)
                ev.push_back(eval(start, lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n0)));
        }
        double grid_gap = 4.0 * typical_spacing();
        // refine
        for (int pass = 0; pass < 40; ++pass) {
            std::vector<FamilyEval> next;
            bool changed = false;
            for (std::size_t i = 0; i + 1 < ev.size(); ++i) {
                next.push_back(ev[i]);
                const auto& a = ev[i];
                const auto& b = ev[i + 1];
                double gap = b.param - a.param;
                if (!(gap > 1e-13 * (1.0 + std::abs(a.param)))) continue;
                bool split = false;
                if (a.reached && b.reached) {
                    bool in_window = std::min(a.r_end, b.r_end) <= r_ceiling_;
                    split = in_window && std::abs(a.r_end - b.r_end) > grid_gap;
                } else if (a.hit && b.hit) {
                    split = hits && std::abs(a.t_end - b.t_end) > hit_resolution;
                } else if (a.reached != b.reached) {
                    split = true;
                }
                if (split) {
                    next.push_back(eval(start, 0.5 * (a.param + b.param)));
                    changed = true;
                }
            }
            next.push_back(ev.back());
            ev.swap(next);
            if (!changed) break;
        }
        if (hits)
            for (const auto& e : ev)
                if (e.hit) hits->push_back({e.t_end, e.action});

        for (std::size_t i = 0; i < ev.size(); ++i) {
            const auto& a = ev[i];
            if (!a.reached) continue;
            if (ev.size() == 1 || (i + 1 < ev.size() && !ev[i + 1].reached) || i + 1 == ev.size()) {
                // isolated sample: exact hits only
                resolve_exact(a, start, tier, key);
                if (i + 1 == ev.size() || !ev[i + 1].reached) continue;
            }
            const auto& b = ev[i + 1];
            double rlo = std::min(a.r_end, b.r_end), rhi = std::max(a.r_end, b.r_end);
            auto first = std::lower_bound(rs_.begin(), rs_.end(), rlo);
            for (auto it = first; it != rs_.end() && *it <= rhi; ++it) {
                std::size_t gi = static_cast<std::size_t>(it - rs_.begin());
                root(a, b, gi, start, tier, key);
            }
        }
    }

    void boundary_sheets(const BoundaryValue& bv, const std::function<double(double)>& psi_key)
    {
        (void)psi_key;
        std::size_t K = bv.b.size();
        double tau_max = t1_ - bv.b.front();
        for (std::size_t k = 1; k < K; ++k) {
            double v = bv.v[k];
            if (!(v > 0.0)) continue;
            const BaseArc& arc = base_arc(v, tau_max);
            double tau_lo = t1_ - bv.b[k], tau_hi = t1_ - bv.b[k - 1];
            if (arc.pts.size() < 2 || tau_lo > arc.pts.back().t) continue;
            double slope = (bv.V[k] - bv.V[k - 1]) / (bv.b[k] - bv.b[k - 1]);
            for (int branch = 0; branch < 2; ++branch) {
                bool rising = branch == 0;
                auto [ilo, ihi] = sheet_range(arc, tau_lo, tau_hi, rising);
                for (std::size_t i = ilo; i < ihi; ++i) {
                    double tau, p;
                    if (!cached_time(arc, i, rising, tau, p)) continue;
                    if (tau < tau_lo || tau > tau_hi) continue;
                    double b = t1_ - tau;
                    double Vb = bv.waited[k] ? bv.V[k - 1] + slope_wait(bv, k) * (b - bv.b[k - 1])
                                             : bv.V[k - 1] + slope * (b - bv.b[k - 1]);
                    Candidate cand;
                    cand.action = Vb + 0.5 * arc.c * tau + p;
                    cand.tier = 1;
                    cand.key = b;
                    cand.m.from_boundary = true;
                    cand.m.departure_time = b;
                    cand.m.departure_r = bg_.r_star;
                    cand.m.departure_velocity = v;
                    cand.m.c = arc.c;
                    cand.m.action = cand.action;
                    cand.m.end_velocity = (rising ? 1.0 : -1.0) * end_speed(arc.c, rs_[i]);
                    offer(i, cand);
                }
            }
        }
    }

    // Fans at convex kinks of V and at the corner.
    void boundary_fans(const BoundaryValue& bv, double corner_top)
    {
        std::size_t K = bv.b.size();
        double tau_max = t1_ - bv.b.front();
        for (std::size_t k = 0; k + 1 < K; ++k) {
            double vlo = bv.v[k + 1];
            double vhi = k == 0 ? corner_top : bv.v[k];
            if (!(vhi > vlo)) continue;
            double tau = t1_ - bv.b[k];
            // quick reject through the bounding arcs
            const BaseArc& alo = base_arc(vlo, tau_max);
            double rlo = base_arc_radius(alo, tau);
            if (std::isnan(rlo)) rlo = alo.end == ArcEnd::ceiling ? r_ceiling_ : bg_.r_star;
            double rhi = r_ceiling_;
            if (k > 0 || corner_top < 1.0 - 1e-6) {
                const BaseArc& ahi = base_arc(vhi, tau_max);
                rhi = base_arc_radius(ahi, tau);
                if (std::isnan(rhi)) rhi = ahi.end == ArcEnd::floor ? bg_.r_star : r_ceiling_;
            }
            double margin = 2.0 * typical_spacing() + 1e-9 * (1.0 + rhi);
            double lo_r = std::min(rlo, rhi) - margin, hi_r = std::max(rlo, rhi) + margin;
            if (rs_.empty() || hi_r < rs_.front() || lo_r > rs_.back()) continue;
            if (bg_.mass > 0.0 && std::max(rlo, rhi) <= bg_.r_star + 1e-12 && rs_.front() > bg_.r_star + margin) continue;
            double bk = bv.b[k], Vk = bv.V[k];
            double rstar = bg_.r_star;
            auto start = [bk, Vk, rstar](double v) { return FamilyStart{bk, rstar, v, Vk, true}; };
            auto key = [bk](double) { return bk; };
            family(start, vlo, vhi, 1, key, nullptr, 0.0, 8);
        }
    }

    double typical_spacing() const
    {
        if (rs_.size() < 2) return 0.25;
        return (rs_.back() - rs_.front()) / static_cast<double>(rs_.size() - 1);
    }

private:
    static double slope_wait(const BoundaryValue& bv, std::size_t k)
    {
        return (bv.V[k] - bv.V[k - 1]) / (bv.b[k] - bv.b[k - 1]);
    }

    const BaseArc& base_arc(double v, double tau_max)
    {
        auto it = arcs_.find(v);
        if (it != arcs_.end()) return it->second;
        auto arc = make_base_arc(bg_, v, tau_max, r_ceiling_, opt_.integrator);
        arc_ids_[v] = arcs_.size();
        return arcs_.emplace(v, std::move(arc)).first->second;
    }

    // grid index range possibly reached by a sheet of departures on the given branch
    std::pair<std::size_t, std::size_t> sheet_range(const BaseArc& arc, double tau_lo, double tau_hi, bool rising)
    {
        std::size_t n = arc.pts.size();
        bool has_apex = arc.apex != std::numeric_limits<std::size_t>::max();
        double t_apex = has_apex ? arc.pts[arc.apex].t : arc.pts.back().t;
        double a, b;
        if (rising) {
            a = std::max(tau_lo, 0.0);
            b = std::min(tau_hi, t_apex);
        } else {
            if (!has_apex) return {0, 0};
            a = std::max(tau_lo, t_apex);
            b = std::min(tau_hi, arc.pts[n - 1].t);
        }
        if (!(b >= a)) return {0, 0};
        double ra = base_arc_radius(arc, a), rb = base_arc_radius(arc, b);
        if (std::isnan(rb)) rb = arc.pts.back().r;
        if (std::isnan(ra)) return {0, 0};
        double lo = std::min(ra, rb), hi = std::max(ra, rb);
        double margin = 2.0 * typical_spacing() + 1e-9 * (1.0 + hi);
        auto first = std::lower_bound(rs_.begin(), rs_.end(), lo - margin);
        auto last = std::upper_bound(rs_.begin(), rs_.end(), hi + margin);
        return {static_cast<std::size_t>(first - rs_.begin()), static_cast<std::size_t>(last - rs_.begin())};
    }

    bool cached_time(const BaseArc& arc, std::size_t i, bool rising, double& tau, double& p)
    {
        std::uint64_t id = arc_ids_.at(arc.v);
        std::uint64_t key = ((id * rs_.size() + i) << 1) | (rising ? 1u : 0u);
        auto it = times_.find(key);
        if (it != times_.end()) {
            tau = it->second.first;
            p = it->second.second;
            return std::isfinite(tau);
        }
        bool ok = base_arc_time(bg_, arc, rs_[i], rising, opt_.integrator, tau, p);
        if (!ok) tau = std::numeric_limits<double>::quiet_NaN();
        times_[key] = {tau, p};
        return ok;
    }

    void emit(const FamilyEval& e, const std::function<FamilyStart(double)>& start, std::size_t i, int tier,
              const std::function<double(double)>& key)
    {
        FamilyStart s = start(e.param);
        Candidate cand;
        cand.action = e.action;
        cand.tier = tier;
        cand.key = key(e.param);
        cand.m.from_boundary = s.from_boundary;
        cand.m.departure_time = s.t;
        cand.m.departure_r = s.r;
        cand.m.departure_velocity = s.v;
        cand.m.c = e.c;
        cand.m.action = e.action;
        double sp = end_speed(e.c, rs_[i]);
        cand.m.end_velocity = e.u_end < 0.0 ? -sp : sp;
        offer(i, cand);
    }

    void resolve_exact(const FamilyEval& a, const std::function<FamilyStart(double)>& start, int tier,
                       const std::function<double(double)>& key)
    {
        auto it = std::lower_bound(rs_.begin(), rs_.end(), a.r_end);
        if (it != rs_.end() && *it == a.r_end) emit(a, start, static_cast<std::size_t>(it - rs_.begin()), tier, key);
    }

    void root(const FamilyEval& a, const FamilyEval& b, std::size_t gi, const std::function<FamilyStart(double)>& start,
              int tier, const std::function<double(double)>& key)
    {
        double target = rs_[gi];
        double tol = 1e-13 * std::max(1.0, target);
        if (std::abs(a.r_end - target) <= tol) return emit(a, start, gi, tier, key);
        if (std::abs(b.r_end - target) <= tol) return emit(b, start, gi, tier, key);
        FamilyEval lo = a, hi = b;
        double glo = lo.r_end - target, ghi = hi.r_end - target;
        if ((glo > 0.0) == (ghi > 0.0)) return;
        int side = 0;
        FamilyEval cur = lo;
        for (int it = 0; it < 100; ++it) {
            double x = (glo * hi.param - ghi * lo.param) / (glo - ghi);
            if (!(x > lo.param && x < hi.param)) x = 0.5 * (lo.param + hi.param);
            if (x == lo.param || x == hi.param) break;
            cur = eval(start, x);
            if (!cur.reached) return;
            double g = cur.r_end - target;
            if (std::abs(g) <= tol) break;
            if ((g > 0.0) == (glo > 0.0)) {
                lo = cur;
                glo = g;
                if (side == -1) ghi *= 0.5;
                side = -1;
            } else {
                hi = cur;
                ghi = g;
                if (side == 1) glo *= 0.5;
                side = 1;
            }
        }
        emit(cur, start, gi, tier, key);
    }

    Background bg_;
    double t1_;
    const std::vector<double>& rs_;
    SchwOptions opt_;
    std::vector<Candidate> best_;
    double r_ceiling_ = 0.0;
    double ue_star_ = 0.0;
    std::size_t evals_ = 0;
    std::map<double, BaseArc> arcs_;
    std::map<double, std::uint64_t> arc_ids_;
    std::unordered_map<std::uint64_t, std::pair<double, double>> times_;
};

} // namespace detail

inline SchwSolution solve_ivbp_schw(const Background& bg, const SchwPotential& u0, const StepFunction& v0,
                                    const BoundaryTrace& bc, double t0, double t1, const std::vector<double>& rs,
                                    const SchwOptions& opt = {})
{
    if (!(t1 > t0)) throw config_error("solve_ivbp_schw: requires t1 > t0");
    for (std::size_t i = 0; i < rs.size(); ++i) {
        if (!(rs[i] > bg.r_star)) throw config_error("solve_ivbp_schw: grid radii must exceed r*");
        if (i > 0 && !(rs[i] > rs[i - 1])) throw config_error("solve_ivbp_schw: grid must be increasing");
    }
    validate(bc);
    double h = opt.node_spacing > 0.0 ? opt.node_spacing : lattice_spacing(t1 - t0);
    detail::SheetSolver solver(bg, t1, rs, opt);
    std::vector<detail::Hit> hits;
    double r_reach = (rs.empty() ? bg.r_star : rs.back()) + (t1 - t0) + 1.0;

    if (!u0.is_boundary_only()) {
        const auto& ps = u0.pieces();
        for (std::size_t k = 0; k < ps.size(); ++k) {
            double lo = ps[k].lo, hi = std::min(ps[k].hi, r_reach);
            if (!(hi > lo)) continue;
            const auto& piece = ps[k];
            double t0c = t0;
            const SchwPotential* pot = &u0;
            auto start = [&piece, t0c, pot](double rho) {
                return detail::FamilyStart{t0c, rho, piece.u(rho), pot->solver_potential(rho), false};
            };
            auto key = [](double rho) { return -rho; };
            std::size_t n0 = std::max<std::size_t>(opt.family_samples,
                                                   static_cast<std::size_t>(std::min(4096.0, (hi - lo) / std::max(solver.typical_spacing(), 1e-6))));
            solver.family(start, lo, hi, 0, key, &hits, h, n0);
            // rarefaction fan at an upward jump
            if (k > 0) {
                double um = ps[k - 1].u(lo), up = piece.u(lo);
                if (up > um) {
                    double rho = lo, W = u0.solver_potential(lo);
                    auto fs = [t0c, rho, W](double v) { return detail::FamilyStart{t0c, rho, v, W, false}; };
                    auto fk = [rho](double) { return -rho; };
                    solver.family(fs, um, up, 0, fk, &hits, h);
                }
            }
        }
    }

    auto bv = detail::boundary_dp(bg, bc, t0, t1, h, 0.0, hits, opt);
    solver.boundary_sheets(bv, nullptr);
    double corner_top = u0.is_boundary_only() ? 1.0 - 1e-9 : u0.velocity(bg.r_star);
    solver.boundary_fans(bv, corner_top);

    SchwSolution sol;
    sol.t0 = t0;
    sol.t1 = t1;
    sol.field.origin = bg.r_star;
    sol.field.x = rs;
    sol.field.u.resize(rs.size());
    sol.field.v.resize(rs.size());
    sol.field.c.resize(rs.size());
    sol.minimizers.resize(rs.size());
    const auto& best = solver.best();
    for (std::size_t i = 0; i < rs.size(); ++i) {
        if (!std::isfinite(best[i].action))
            throw numerical_failure("solve_ivbp_schw: no admissible path reaches r = " + std::to_string(rs[i]));
        const auto& m = best[i].m;
        sol.minimizers[i] = m;
        sol.field.u[i] = m.end_velocity;
        sol.field.c[i] = m.c;
        sol.field.v[i] = m.from_boundary ? sample(bc, m.departure_time).psi : v0(m.departure_r - bg.r_star);
    }
    sol.boundary = std::move(bv);
    return sol;
}

// S^{t0,t1}: least action of paths from (t0, r*) to (t1, r*).
inline double boundary_action(const Background& bg, const BoundaryTrace& bc, double t0, double t1,
                              const SchwOptions& opt = {})
{
    if (!(t1 > t0)) throw config_error("boundary_action: requires t0 < t1");
    double h = opt.node_spacing > 0.0 ? opt.node_spacing : lattice_spacing(t1 - t0);
    auto bv = detail::boundary_dp(bg, bc, t0, t1, h, 0.0, {}, opt);
    return bv.V.back();
}

// S^{t0,t} for every node t of one forward pass from t0.
inline BoundaryValue boundary_action_profile(const Background& bg, const BoundaryTrace& bc, double t0, double t1,
                                             const SchwOptions& opt = {})
{
    if (!(t1 > t0)) throw config_error("boundary_action_profile: requires t0 < t1");
    double h = opt.node_spacing > 0.0 ? opt.node_spacing : lattice_spacing(t1 - t0);
    return detail::boundary_dp(bg, bc, t0, t1, h, 0.0, {}, opt);
}

struct GlobalSchwOptions {
    double initial_lookback = 16.0;
    double max_lookback = 8192.0;
    double node_spacing = 1.0 / 64.0;
    double tol = 1e-9;
    SchwOptions solver{};
};

struct GlobalSchwField {
    PiecewiseField field;
    std::vector<double> t_star;
    double lookback = 0.0;
    bool converged = false;
};

inline SchwSolution pullback_solve_schw(const Background& bg, const BoundaryTrace& bc, double t, double lookback,
                                        const std::vector<double>& rs, const GlobalSchwOptions& opt = {})
{
    SchwOptions so = opt.solver;
    so.node_spacing = opt.node_spacing;
    return solve_ivbp_schw(bg, SchwPotential::boundary_only(bg), StepFunction::constant(0.0), bc, t - lookback, t, rs,
                           so);
}

namespace detail {
inline bool same_solution(const SchwSolution& a, const SchwSolution& b, double tol)
{
    for (std::size_t i = 0; i < a.field.u.size(); ++i) {
        if (!values_agree(a.field.u[i], b.field.u[i], tol)) return false;
        if (a.minimizers[i].from_boundary != b.minimizers[i].from_boundary) return false;
        if (!values_agree(a.minimizers[i].departure_time, b.minimizers[i].departure_time, tol)) return false;
    }
    return true;
}
} // namespace detail

inline GlobalSchwField global_field_schw(const Background& bg, const BoundaryTrace& bc, double t,
                                         const std::vector<double>& rs, const GlobalSchwOptions& opt = {})
{
    double T = opt.initial_lookback;
    auto prev = pullback_solve_schw(bg, bc, t, T, rs, opt);
    int stable = 0;
    GlobalSchwField out;
    while (true) {
        double T2 = 2.0 * T;
        if (T2 > opt.max_lookback) break;
        auto cur = pullback_solve_schw(bg, bc, t, T2, rs, opt);
        stable = detail::same_solution(prev, cur, opt.tol) ? stable + 1 : 0;
        prev = std::move(cur);
        T = T2;
        if (stable >= 2) {
            out.converged = true;
            break;
        }
    }
    out.field = prev.field;
    out.lookback = T;
    for (const auto& m : prev.minimizers) out.t_star.push_back(m.departure_time);
    return out;
}

struct GlobalSchwPoint {
    double u = 0.0;
    double v = 0.0;
    double t_star = 0.0;
    double c = 0.0;
    bool converged = false;
};

// Boundary-only solve over [t - lookback, t]; converged when doubling the look-back changes nothing.
inline GlobalSchwPoint global_solution_schw(const Background& bg, const BoundaryTrace& bc, double t, double r,
                                            double lookback, const GlobalSchwOptions& opt = {})
{
    std::vector<double> rs{r};
    auto a = pullback_solve_schw(bg, bc, t, lookback, rs, opt);
    auto b = pullback_solve_schw(bg, bc, t, 2.0 * lookback, rs, opt);
    GlobalSchwPoint g;
    g.u = a.field.u[0];
    g.v = a.field.v[0];
    g.t_star = a.minimizers[0].departure_time;
    g.c = a.field.c[0];
    g.converged = detail::same_solution(a, b, opt.tol);
    return g;
}

} // namespace bsvar
