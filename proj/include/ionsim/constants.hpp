#pragma once

namespace ionsim {

// SI values (CODATA 2018). The paper works in Gaussian units with hbar = 1;
// we keep SI throughout and carry hbar and the Coulomb constant explicitly.
namespace constants {
inline constexpr double pi = 3.14159265358979323846;
inline constexpr double two_pi = 2.0 * pi;
inline constexpr double hbar = 1.054571817e-34;          // J s
inline constexpr double coulomb_k = 8.9875517923e9;      // N m^2 / C^2, 1/(4 pi eps0)
inline constexpr double elementary_charge = 1.602176634e-19;  // C
inline constexpr double atomic_mass_unit = 1.66053906660e-27; // kg
inline constexpr double golden_ratio = 1.61803398874989484820;
}  // namespace constants

}  // namespace ionsim
