#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ionsim/constants.hpp"
#include "ionsim/errors.hpp"
#include "ionsim/laser.hpp"
#include "ionsim/phonons.hpp"

namespace ionsim {

// ---------------------------------------------------------------------------
// Spin-spin couplings
//
// Convention: J is stored once per ordered pair with zero diagonal and the
// Ising energy is H = sum_i sum_{j != i} J_ij sz_i sz_j - h sum_i sx_i, i.e.
// each unordered pair contributes 2 J_ij sz sz. Exports to the single-sum
// bond convention of the ED module must multiply bonds by 2.
// ---------------------------------------------------------------------------

enum class CouplingProvenance { exact, dipolar };

struct SpinCouplings {
    Eigen::MatrixXd J;  // N x N symmetric, zero diagonal, rad/s
    CouplingProvenance provenance = CouplingProvenance::exact;
    double h = 0.0;      // transverse field, rad/s
    double J_eff = 0.0;  // dipolar scale of Eq. (19), for reference

    int n() const { return static_cast<int>(J.rows()); }
};

// J_eff = Omega_L^2 eta_y^2 / (8 delta_y^2) * kappa_y * omega_y
inline double dipolar_scale(const TrapConfig& trap, const LaserConfig& laser) {
    const double eta = laser.eta_y(trap);
    const double dy = laser.delta_y(trap);
    return laser.Omega_L * laser.Omega_L * eta * eta / (8.0 * dy * dy) * trap.kappa_y() *
           trap.omega_y;
}

// modulation phase phi_ij = k_L cos(theta) l_z (x~_i - x~_j)
inline double modulation_phase(const TrapConfig& trap, const LaserConfig& laser, double dx) {
    return laser.k_x() * trap.length_unit() * dx;
}

struct ExactCouplingOptions {
    bool allow_in_branch = false;   // permit omega_L inside/below the branch
    double resonance_floor = 1e-9;  // |delta_n| < floor * omega_L is resonant
};

// Exact phonon-mediated couplings,
//   J_ij = -sum_n [Omega_L^2 k_L^2 sin^2(theta) hbar / (8 m Omega_n delta_n)]
//          M_in M_jn cos(k_L . r_ij),
// with delta_n = Omega_n - omega_L over the transverse branch.
inline SpinCouplings effective_couplings_exact(const PhononModes& modes,
                                               const LaserConfig& laser,
                                               const ExactCouplingOptions& opts = {}) {
    if (modes.branch != Branch::transverse)
        throw InvalidInput("effective_couplings_exact requires the transverse branch");
    const IonCrystal& crystal = modes.crystal;
    const TrapConfig& trap = crystal.trap;
    const int n = crystal.n();

    Eigen::VectorXd delta(n);
    for (int m = 0; m < n; ++m) {
        delta[m] = modes.frequencies[m] - laser.omega_L;
        if (std::abs(delta[m]) < opts.resonance_floor * laser.omega_L)
            throw ResonantMode("mode " + std::to_string(m) + " within the resonance floor of "
                               "the beatnote; couplings diverge");
    }
    if (!opts.allow_in_branch && delta.maxCoeff() >= 0.0)
        throw InvalidInput("omega_L must be detuned above the transverse branch "
                           "(delta_n < 0 for all n); pass allow_in_branch to override");

    const double ky = laser.k_y();
    const double prefactor_num = laser.Omega_L * laser.Omega_L * ky * ky * constants::hbar / 8.0;
    const double lz = trap.length_unit();

    SpinCouplings out;
    out.provenance = CouplingProvenance::exact;
    out.J_eff = dipolar_scale(trap, laser);
    out.J.setZero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double dx = crystal.positions(i, 0) - crystal.positions(j, 0);
            const double phase = laser.k_x() * lz * dx;  // k_L . r_ij (y_ij = 0)
            double sum = 0.0;
            for (int m = 0; m < n; ++m)
                sum += modes.mode_matrix(i, m) * modes.mode_matrix(j, m) /
                       (modes.frequencies[m] * delta[m]);
            const double j_ij = -prefactor_num / trap.mass * sum * std::cos(phase);
            out.J(i, j) = j_ij;
            out.J(j, i) = j_ij;
        }
    }
    return out;
}

// Dipolar limit, Eqs. (17)-(19): J_ij = J_eff cos(phi_ij) / |r~_ij|^3.
// Couplings below the zero floor (1e-12 J_eff) are snapped to exactly zero.
inline SpinCouplings dipolar_couplings(const IonCrystal& crystal, const LaserConfig& laser) {
    const TrapConfig& trap = crystal.trap;
    const int n = crystal.n();
    SpinCouplings out;
    out.provenance = CouplingProvenance::dipolar;
    out.J_eff = dipolar_scale(trap, laser);
    out.J.setZero(n, n);
    const double floor = 1e-12 * std::abs(out.J_eff);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double dx = crystal.positions(i, 0) - crystal.positions(j, 0);
            const double phi = modulation_phase(trap, laser, dx);
            const double r = (crystal.positions.row(i) - crystal.positions.row(j)).norm();
            double j_ij = out.J_eff * std::cos(phi) / (r * r * r);
            if (std::abs(j_ij) < floor) j_ij = 0.0;
            out.J(i, j) = j_ij;
            out.J(j, i) = j_ij;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Frustration
// ---------------------------------------------------------------------------

// sign of prod_{(i,j) in P} (-J_ij) over a triangular plaquette; -1 means
// frustrated. Couplings below the zero floor make the sign meaningless.
inline int frustration_sign(const SpinCouplings& couplings, int i, int j, int k,
                            double floor_rel = 1e-12) {
    const double floor = floor_rel * std::max(std::abs(couplings.J_eff),
                                              couplings.J.cwiseAbs().maxCoeff());
    double product = 1.0;
    for (auto [a, b] : {std::pair{i, j}, std::pair{j, k}, std::pair{i, k}}) {
        const double jab = couplings.J(a, b);
        if (std::abs(jab) < floor)
            throw ZeroBond("bond (" + std::to_string(a) + "," + std::to_string(b) +
                           ") below the zero-coupling floor; frustration undefined");
        product *= -jab;
    }
    return product < 0.0 ? -1 : +1;
}

// ---------------------------------------------------------------------------
// Ion hideout
// ---------------------------------------------------------------------------

struct ReducedCouplings {
    SpinCouplings couplings;
    std::vector<int> kept;  // original indices of the surviving ions
};

// Removes the masked ions from the spin model. The surviving couplings are
// unchanged: hidden ions keep their mechanical role, which the phonon modes
// already include.
inline ReducedCouplings hide_ions(const SpinCouplings& couplings,
                                  const std::vector<int>& mask) {
    const int n = couplings.n();
    std::vector<bool> hidden(n, false);
    for (int m : mask) {
        if (m < 0 || m >= n) throw InvalidInput("mask index out of range");
        hidden[m] = true;
    }
    ReducedCouplings out;
    for (int i = 0; i < n; ++i)
        if (!hidden[i]) out.kept.push_back(i);
    if (out.kept.empty()) throw EmptyModel("all ions masked");
    const int k = static_cast<int>(out.kept.size());
    out.couplings = couplings;
    out.couplings.J.resize(k, k);
    for (int a = 0; a < k; ++a)
        for (int b = 0; b < k; ++b) out.couplings.J(a, b) = couplings.J(out.kept[a], out.kept[b]);
    return out;
}

// ---------------------------------------------------------------------------
// Leg / rung decomposition (Eqs. 22-23)
// ---------------------------------------------------------------------------

struct LadderModel {
    LadderStructure structure;
    double h = 0.0;
    std::vector<std::vector<int>> leg_ions;  // per leg, ordered by z
    std::vector<Eigen::MatrixXd> leg;        // J^gamma, one L_g x L_g matrix per leg
    std::map<std::pair<int, int>, Eigen::MatrixXd> rung;  // J~^{gamma mu}, gamma < mu

    // Lossless by construction: scatter the blocks back into an N x N matrix.
    Eigen::MatrixXd reassemble(int n_total) const {
        Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n_total, n_total);
        const int nl = static_cast<int>(leg_ions.size());
        for (int g = 0; g < nl; ++g)
            for (size_t a = 0; a < leg_ions[g].size(); ++a)
                for (size_t b = 0; b < leg_ions[g].size(); ++b)
                    j(leg_ions[g][a], leg_ions[g][b]) = leg[g](a, b);
        for (const auto& [gm, block] : rung)
            for (size_t a = 0; a < leg_ions[gm.first].size(); ++a)
                for (size_t b = 0; b < leg_ions[gm.second].size(); ++b) {
                    j(leg_ions[gm.first][a], leg_ions[gm.second][b]) = block(a, b);
                    j(leg_ions[gm.second][b], leg_ions[gm.first][a]) = block(a, b);
                }
        return j;
    }
};

inline LadderModel ladder_form(const SpinCouplings& couplings, const LadderStructure& structure,
                               const IonCrystal& crystal) {
    const int n = couplings.n();
    if (static_cast<int>(structure.leg_of.size()) != n)
        throw InvalidInput("structure does not match the coupling matrix dimension");
    LadderModel m;
    m.structure = structure;
    m.h = couplings.h;
    m.leg_ions.assign(structure.n_legs, {});
    for (int i = 0; i < n; ++i) m.leg_ions[structure.leg_of[i]].push_back(i);
    for (auto& ions : m.leg_ions)
        std::sort(ions.begin(), ions.end(), [&](int a, int b) {
            return crystal.positions(a, 2) < crystal.positions(b, 2);
        });
    for (int g = 0; g < structure.n_legs; ++g) {
        const auto& ions = m.leg_ions[g];
        Eigen::MatrixXd block(ions.size(), ions.size());
        for (size_t a = 0; a < ions.size(); ++a)
            for (size_t b = 0; b < ions.size(); ++b) block(a, b) = couplings.J(ions[a], ions[b]);
        m.leg.push_back(std::move(block));
    }
    for (int g = 0; g < structure.n_legs; ++g)
        for (int mu = g + 1; mu < structure.n_legs; ++mu) {
            Eigen::MatrixXd block(m.leg_ions[g].size(), m.leg_ions[mu].size());
            for (size_t a = 0; a < m.leg_ions[g].size(); ++a)
                for (size_t b = 0; b < m.leg_ions[mu].size(); ++b)
                    block(a, b) = couplings.J(m.leg_ions[g][a], m.leg_ions[mu][b]);
            m.rung[{g, mu}] = std::move(block);
        }
    return m;
}

// ---------------------------------------------------------------------------
// RWA audit (second condition of Eq. 14)
// ---------------------------------------------------------------------------

struct RwaCouplingAudit {
    double planar_ratio = 0.0;      // max_n eta_{n par} / |Omega_n^par - omega_L|
    double transverse_ratio = 0.0;  // min_n eta_{n perp} / |Omega_n^perp - omega_L|
    double margin = 0.0;            // planar_ratio / transverse_ratio
    bool warn = false;              // margin >= 1: dipole force leaks into planar modes
};

inline RwaCouplingAudit rwa_coupling_audit(const PhononModes& tm, const PhononModes& pm,
                                           const LaserConfig& laser) {
    const TrapConfig& trap = tm.crystal.trap;
    auto eta = [&](double k_component, double freq) {
        return std::abs(k_component) * std::sqrt(constants::hbar / (2.0 * trap.mass * freq));
    };
    RwaCouplingAudit a;
    a.planar_ratio = 0.0;
    for (int n = 0; n < pm.n_modes(); ++n)
        a.planar_ratio = std::max(a.planar_ratio, eta(laser.k_x(), pm.frequencies[n]) /
                                                      std::abs(pm.frequencies[n] - laser.omega_L));
    a.transverse_ratio = std::numeric_limits<double>::infinity();
    for (int n = 0; n < tm.n_modes(); ++n)
        a.transverse_ratio =
            std::min(a.transverse_ratio, eta(laser.k_y(), tm.frequencies[n]) /
                                             std::abs(tm.frequencies[n] - laser.omega_L));
    a.margin = a.planar_ratio / a.transverse_ratio;
    a.warn = a.margin >= 1.0;
    return a;
}

}  // namespace ionsim
