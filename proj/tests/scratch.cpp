#include <cstdio>
#include "ionsim/crystal.hpp"
#include "ionsim/constants.hpp"
using namespace ionsim;

int main() {
    TrapConfig trap;
    trap.omega_z = constants::two_pi * 1e6;
    trap.omega_x = trap.omega_z * 1.43;
    trap.omega_y = trap.omega_z * 20.0;
    trap.mass = 40.0 * constants::atomic_mass_unit;

    // N=2 analytic check
    {
        TrapConfig t2 = trap;
        IonCrystal c = equilibrium_positions(t2, 2);
        std::printf("N=2: z = %.6f (expect %.6f), residual=%.3e\n", c.positions(1, 2),
                    std::cbrt(0.25), c.residual);
    }
    // Sec III N=3
    {
        IonCrystal c = equilibrium_positions(trap, 3);
        for (int i = 0; i < 3; ++i)
            std::printf("ion %d: % .4f % .4e % .4f\n", i, c.positions(i, 0), c.positions(i, 1),
                        c.positions(i, 2));
        std::printf("residual=%.3e energy=%.12f stable=%d\n", c.residual, c.energy,
                    (int)c.is_stable_minimum());
        auto s = classify_structure(c);
        std::printf("n_legs=%d planar=%d\n", s.n_legs, (int)s.planar);
    }
    return 0;
}
