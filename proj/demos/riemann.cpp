// Flat Riemann problem with a boundary at x = 0: variational solution against the Godunov oracle.
#include <cstdio>

#include "bsvar/hlo_flat.hpp"
#include "bsvar/oracle_fv.hpp"

int main()
{
    using namespace bsvar;
    auto u0 = Potential::piecewise_constant({0.0, 3.0}, {0.6}, 0.0);
    auto bc = constant_forcing(0.6);
    FvGrid grid{0.0, 8.0, 4000, 0.9};
    auto fv = fv_solve(Background{0.0, 1.0}, [&](double x) { return u0.velocity(x); }, bc, 0.0, 2.0, grid);
    auto hl = solve_ivbp_flat(u0, StepFunction::constant(0.0), bc, 0.0, 2.0, fv.field.x);
    std::printf("shock at");
    for (double x : shock_locations(hl.field)) std::printf(" %.4f", x);
    std::printf(" (exact 3.6)\nL1 distance to the finite-volume solution: %.3e\n", l1_distance(hl.field, fv.field));
    for (double x : {1.0, 3.5, 3.7, 6.0}) {
        auto one = solve_ivbp_flat(u0, StepFunction::constant(0.0), bc, 0.0, 2.0, {x});
        std::printf("u(2, %.1f) = %.6f\n", x, one.field.u[0]);
    }
}
