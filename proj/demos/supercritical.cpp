// Constant forcing 0.9 at r* = 4 around a unit mass: rate estimate, its bound, and the stationary state far out.
#include <cmath>
#include <cstdio>

#include "bsvar/ergodics.hpp"

int main()
{
    using namespace bsvar;
    Background bg = make_background(1.0, 4.0);
    auto bc = constant_forcing(0.9);
    auto rep = estimate_rho(bg, bc, {50.0, 100.0, 200.0});
    for (const auto& e : rep.rho_estimates) std::printf("S/%g = %.6f\n", e.span, e.rate);
    std::printf("rho_hat = %.6f, bound %.6f, theta_hat = %.6f\n", rep.rho_hat, constant_forcing_rho_bound(bg, 0.9),
                rep.theta_hat);
    for (const auto& a : asymptotic_velocity_experiment(bg, bc, {10.0, 50.0, 200.0}, rep.theta_hat))
        std::printf("u(0, %g) = %.6f  (deviation %.2e)\n", a.r, a.u, a.deviation);
}
