#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ionsim/constants.hpp"
#include "ionsim/errors.hpp"

namespace ionsim {

// Anisotropic harmonic trap in the ladder regime omega_y > omega_x >= omega_z.
// All frequencies are angular (rad/s); mass in kg, charge in C. The length
// unit l_z and the anisotropies kappa_alpha are always recomputed from the
// stored frequencies, never cached.
struct TrapConfig {
    double omega_x = 0.0;
    double omega_y = 0.0;
    double omega_z = 0.0;
    double mass = 0.0;
    double charge = constants::elementary_charge;

    double kappa_x() const { return (omega_z / omega_x) * (omega_z / omega_x); }
    double kappa_y() const { return (omega_z / omega_y) * (omega_z / omega_y); }

    double kappa(int axis) const {
        switch (axis) {
            case 0: return kappa_x();
            case 1: return kappa_y();
            default: return 1.0;
        }
    }

    double omega(int axis) const {
        switch (axis) {
            case 0: return omega_x;
            case 1: return omega_y;
            default: return omega_z;
        }
    }

    // l_z = (k e^2 / (m omega_z^2))^(1/3); the Coulomb energy scale e^2/l_z in
    // Gaussian units maps to k q^2 / l_z here.
    double length_unit() const {
        return std::cbrt(constants::coulomb_k * charge * charge / (mass * omega_z * omega_z));
    }

    // Validates the ladder-regime invariants. Hard violations throw
    // UnstableTrap; soft ones (kappa_y not << kappa_x) append a warning.
    void validate(std::vector<std::string>* warnings = nullptr) const {
        if (!(omega_z > 0.0) || !(omega_x > 0.0) || !(omega_y > 0.0))
            throw UnstableTrap("trap frequencies must be positive");
        if (!(mass > 0.0)) throw UnstableTrap("ion mass must be positive");
        if (charge == 0.0) throw UnstableTrap("ion charge must be nonzero");
        if (kappa_x() > 1.0 + 1e-12 || kappa_y() > 1.0 + 1e-12)
            throw UnstableTrap("ladder regime requires omega_y > omega_x >= omega_z "
                               "(kappa_alpha <= 1)");
        if (!(omega_y > omega_x))
            throw UnstableTrap("ladder regime requires omega_y > omega_x");
        if (warnings && kappa_y() > 0.1 * kappa_x())
            warnings->push_back("kappa_y is not << kappa_x; the crystal may not be pinned "
                                "to the xz-plane");
    }

    // New trap with kappa_x changed by adjusting omega_x (omega_y, omega_z fixed).
    TrapConfig with_kappa_x(double kx) const {
        TrapConfig t = *this;
        t.omega_x = omega_z / std::sqrt(kx);
        return t;
    }
};

}  // namespace ionsim
