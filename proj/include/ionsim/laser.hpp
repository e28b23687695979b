#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ionsim/constants.hpp"
#include "ionsim/errors.hpp"
#include "ionsim/trap.hpp"

namespace ionsim {

// Interfering laser pair driving the state-dependent dipole force. The
// effective wavevector k_L lies in the xy-plane at angle theta from the
// x-axis; omega_L is the beatnote and Omega_L the two-photon differential
// Rabi frequency (all angular).
struct LaserConfig {
    double Omega_L = 0.0;  // rad/s
    double omega_L = 0.0;  // rad/s
    double k_L = 0.0;      // 1/m
    double theta = constants::pi / 2.0;

    double lambda_L() const { return constants::two_pi / k_L; }
    double k_x() const { return k_L * std::cos(theta); }
    double k_y() const { return k_L * std::sin(theta); }
    double delta_y(const TrapConfig& trap) const { return trap.omega_y - omega_L; }

    // bare Lamb-Dicke parameters (ground-state wavepacket over effective wavelength)
    double eta_y(const TrapConfig& trap) const {
        return k_y() * std::sqrt(constants::hbar / (2.0 * trap.mass * trap.omega_y));
    }
    double eta_x(const TrapConfig& trap) const {
        return k_x() * std::sqrt(constants::hbar / (2.0 * trap.mass * trap.omega_x));
    }

    void validate(const TrapConfig& trap, std::vector<std::string>* warnings = nullptr) const {
        if (!(k_L > 0.0)) throw InvalidInput("laser k_L must be positive");
        if (!(omega_L > 0.0)) throw InvalidInput("laser beatnote omega_L must be positive");
        if (!warnings) return;
        if (std::abs(eta_y(trap)) > 0.3 || std::abs(eta_x(trap)) > 0.3)
            warnings->push_back("Lamb-Dicke parameter not << 1; the linear spin-phonon "
                                "expansion is unreliable");
        if (std::abs(Omega_L) > 0.1 * omega_L)
            warnings->push_back("|Omega_L| is not << omega_L; the first RWA condition is "
                                "marginal");
    }

    // Laser with eta_y, eta_x prescribed (eta_x may be signed or zero; theta is
    // recovered from the wavevector components).
    static LaserConfig from_lamb_dicke(const TrapConfig& trap, double eta_y, double eta_x,
                                       double omega_L, double Omega_L) {
        const double ky = eta_y / std::sqrt(constants::hbar / (2.0 * trap.mass * trap.omega_y));
        const double kx = eta_x / std::sqrt(constants::hbar / (2.0 * trap.mass * trap.omega_x));
        LaserConfig l;
        l.k_L = std::hypot(kx, ky);
        l.theta = std::atan2(ky, kx);
        l.omega_L = omega_L;
        l.Omega_L = Omega_L;
        return l;
    }

    // Laser with eta_y prescribed and the in-plane component chosen so that the
    // pair at dimensionless x-separation dx picks up the modulation phase phi.
    static LaserConfig for_phi(const TrapConfig& trap, double eta_y, double phi, double dx,
                               double omega_L, double Omega_L) {
        if (dx == 0.0) throw InvalidInput("for_phi requires a pair with nonzero x separation");
        const double ky = eta_y / std::sqrt(constants::hbar / (2.0 * trap.mass * trap.omega_y));
        const double kx = phi / (trap.length_unit() * dx);
        LaserConfig l;
        l.k_L = std::hypot(kx, ky);
        l.theta = std::atan2(ky, kx);
        l.omega_L = omega_L;
        l.Omega_L = Omega_L;
        return l;
    }
};

// theta that realizes modulation phase phi for a pair with dimensionless x
// separation dx at fixed |k_L|: cos(theta) = phi / (k_L l_z dx).
inline double theta_for_phi(const TrapConfig& trap, double k_L, double dx, double phi) {
    if (dx == 0.0) throw InvalidInput("theta_for_phi requires nonzero x separation");
    const double c = phi / (k_L * trap.length_unit() * dx);
    if (std::abs(c) > 1.0)
        throw InvalidInput("requested phi unreachable at this k_L: |cos(theta)| = " +
                           std::to_string(std::abs(c)) + " > 1");
    return std::acos(c);
}

}  // namespace ionsim
