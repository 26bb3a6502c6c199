// Characteristics leaving r0 = 6 around a unit-mass hole: the escape split at u_E(6).
#include <cstdio>

#include "bsvar/characteristics.hpp"

int main()
{
    using namespace bsvar;
    Background bg = make_background(1.0, 4.0);
    const double r0 = 6.0;
    std::printf("u_E(%.0f) = %.6f\n", r0, escape_velocity(bg, r0));
    std::printf("%6s %10s %18s %12s %10s\n", "u0", "C", "class", "end", "r(30)");
    for (int k = -9; k <= 9; ++k) {
        double u0 = 0.1 * k;
        auto arc = integrate_arc(bg, {0.0, r0, u0}, 30.0);
        std::printf("%6.2f %10.5f %18s %12s %10.4f\n", u0, arc.c, to_string(arc.classification), to_string(arc.end),
                    arc.states.back().r);
    }
}
