#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "ionsim/couplings.hpp"
#include "ionsim/crystal.hpp"
#include "ionsim/errors.hpp"
#include "ionsim/integrate.hpp"
#include "ionsim/laser.hpp"
#include "ionsim/ou_noise.hpp"
#include "ionsim/phonons.hpp"

namespace ionsim {

using complexd = std::complex<double>;

// ---------------------------------------------------------------------------
// RWA spin-phonon Hamiltonian in the local-oscillator basis (Eq. 30 layout):
//   H = sum_{i,a} delta_a n_{ia}
//     + (omega_z/2) sum_{ab,ij} (kappa_a kappa_b)^{1/4} V~_ij^{ab} a+_{ia} a_{jb}
//     + sum_i sum_{a=x,y} (F_{ia} sz_i a+_{ia} + h.c.),
// with F_{ia} = i (Omega_L/2) e^{i k_L . r_i^0} eta_a. Modes are indexed
// axis-major (m = a N + i), matching the coupling tensor.
// ---------------------------------------------------------------------------

struct RwaHamiltonian {
    IonCrystal crystal;
    LaserConfig laser;
    int fock_cutoff = 1;
    Eigen::MatrixXd hop;      // 3N x 3N, includes the per-axis detunings on the diagonal
    Eigen::VectorXcd force;   // 3N, coefficient of sz_i a+_{ia}
    double rwa_margin = 0.0;  // max LHS/RHS of Eq. (29)
    std::vector<std::string> warnings;

    int n_ions() const { return crystal.n(); }
    int n_modes() const { return 3 * crystal.n(); }
    std::size_t dim() const {
        std::size_t d = std::size_t(1) << n_ions();
        for (int m = 0; m < n_modes(); ++m) d *= std::size_t(fock_cutoff + 1);
        return d;
    }
};

inline RwaHamiltonian build_rwa_hamiltonian(const IonCrystal& crystal, const LaserConfig& laser,
                                            int fock_cutoff, std::size_t dim_budget = (1u << 27)) {
    const int n = crystal.n();
    RwaHamiltonian h;
    h.crystal = crystal;
    h.laser = laser;
    h.fock_cutoff = fock_cutoff;
    if (h.dim() > dim_budget)
        throw DimensionOverflow("state dimension " + std::to_string(h.dim()) +
                                " exceeds the budget " + std::to_string(dim_budget));

    const TrapConfig& trap = crystal.trap;
    const Eigen::MatrixXd v = coulomb_coupling_tensor(crystal.positions);
    const double kappa[3] = {trap.kappa_x(), trap.kappa_y(), 1.0};
    const double omega[3] = {trap.omega_x, trap.omega_y, trap.omega_z};

    h.hop.setZero(3 * n, 3 * n);
    h.rwa_margin = 0.0;
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) {
            const double scale = 0.5 * trap.omega_z * std::pow(kappa[a] * kappa[b], 0.25);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) {
                    const double vij = v(a * n + i, b * n + j);
                    h.hop(a * n + i, b * n + j) += scale * vij;
                    // Eq. (29): the dropped counter-rotating term must be small
                    const double ratio = 0.5 * scale * std::abs(vij) / (omega[a] + omega[b]);
                    h.rwa_margin = std::max(h.rwa_margin, ratio);
                }
        }
    for (int a = 0; a < 3; ++a)
        for (int i = 0; i < n; ++i) h.hop(a * n + i, a * n + i) += omega[a] - laser.omega_L;
    if (h.rwa_margin >= 0.1)
        h.warnings.push_back("Eq.-of-motion RWA margin " + std::to_string(h.rwa_margin) +
                             " is not << 1");

    h.force.setZero(3 * n);
    const double lz = trap.length_unit();
    const double eta[2] = {laser.eta_x(trap), laser.eta_y(trap)};
    for (int a = 0; a < 2; ++a)  // the dipole force acts along x and y only
        for (int i = 0; i < n; ++i) {
            const double phase = laser.k_x() * lz * crystal.positions(i, 0) +
                                 laser.k_y() * lz * crystal.positions(i, 1);
            h.force[a * n + i] = complexd(0.0, 0.5 * laser.Omega_L) *
                                 std::exp(complexd(0.0, phase)) * eta[a];
        }
    return h;
}

// ---------------------------------------------------------------------------
// Exact propagation
//
// Every term of the Hamiltonian couples to the spins through sz only, so H is
// block diagonal over the 2^N spin sectors, and the OU dephasing term
// (1/2) de(t) sum_i sz_i commutes with H: each noise trajectory is the
// noiseless evolution followed by a rotation of the observables,
//   <sx_j>_traj(t) = cos(Phi) <sx_j>_0(t) - sin(Phi) <sy_j>_0(t),
// with Phi(t) the accumulated OU phase. Within a sector the mode space splits
// into connected components (y decouples from xz for planar crystals), and
// each component is diagonalized exactly in its truncated Fock space.
// ---------------------------------------------------------------------------

namespace detail {

struct ModeComponent {
    std::vector<int> modes;
    int local_dim = 1;
};

inline std::vector<ModeComponent> connected_components(const Eigen::MatrixXd& hop,
                                                       int fock_cutoff) {
    const int n_modes = static_cast<int>(hop.rows());
    const double tol = 1e-14 * hop.cwiseAbs().maxCoeff();
    std::vector<int> comp(n_modes, -1);
    std::vector<ModeComponent> out;
    for (int seed = 0; seed < n_modes; ++seed) {
        if (comp[seed] >= 0) continue;
        std::vector<int> stack{seed};
        comp[seed] = static_cast<int>(out.size());
        ModeComponent mc;
        while (!stack.empty()) {
            const int m = stack.back();
            stack.pop_back();
            mc.modes.push_back(m);
            for (int m2 = 0; m2 < n_modes; ++m2)
                if (comp[m2] < 0 && m2 != m && std::abs(hop(m, m2)) > tol) {
                    comp[m2] = comp[seed];
                    stack.push_back(m2);
                }
        }
        std::sort(mc.modes.begin(), mc.modes.end());
        mc.local_dim = 1;
        for (size_t k = 0; k < mc.modes.size(); ++k) mc.local_dim *= (fock_cutoff + 1);
        out.push_back(std::move(mc));
    }
    return out;
}

}  // namespace detail

// Product initial state: arbitrary spin amplitudes tensored with a Fock
// product state over the 3N local modes (vacuum by default).
struct SpinPhononInitialState {
    Eigen::VectorXcd spin;       // 2^N amplitudes; bit i set = ion i up
    Eigen::VectorXi occupation;  // 3N local-mode occupation numbers

    static SpinPhononInitialState spin_with_vacuum(const Eigen::VectorXcd& spin, int n_modes) {
        return {spin, Eigen::VectorXi::Zero(n_modes)};
    }
};

// Spin product-state helper: characters from {'u','d','+','-'}.
inline Eigen::VectorXcd spin_product_state(const std::string& spins) {
    const int n = static_cast<int>(spins.size());
    Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(std::size_t(1) << n);
    psi[0] = 1.0;
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXcd next = Eigen::VectorXcd::Zero(psi.size());
        const char c = spins[i];
        for (std::size_t b = 0; b < (std::size_t(1) << i); ++b) {
            if (psi[b] == complexd(0.0)) continue;
            switch (c) {
                case 'u': next[b | (std::size_t(1) << i)] += psi[b]; break;
                case 'd': next[b] += psi[b]; break;
                case '+':
                    next[b] += psi[b] / std::sqrt(2.0);
                    next[b | (std::size_t(1) << i)] += psi[b] / std::sqrt(2.0);
                    break;
                case '-':
                    next[b] -= psi[b] / std::sqrt(2.0);
                    next[b | (std::size_t(1) << i)] += psi[b] / std::sqrt(2.0);
                    break;
                default: throw InvalidInput("spin characters must be one of u d + -");
            }
        }
        psi = next;
    }
    return psi;
}

struct DynamicsResult {
    std::vector<double> times;
    Eigen::MatrixXd mean_sx;    // n_times x N, trajectory averaged
    Eigen::MatrixXd stderr_sx;  // sampling error of the mean
    Eigen::MatrixXd noiseless_sx;
    Eigen::MatrixXd noiseless_sy;
    double max_norm_drift = 0.0;
    double max_energy_drift = 0.0;  // relative, noiseless
};

class SpinPhononEvolver {
public:
    explicit SpinPhononEvolver(const RwaHamiltonian& h) : h_(h) {
        const int n = h.n_ions();
        components_ = detail::connected_components(h.hop, h.fock_cutoff);
        const std::size_t n_sectors = std::size_t(1) << n;
        eigs_.resize(n_sectors);
        for (std::size_t s = 0; s < n_sectors; ++s) {
            eigs_[s].reserve(components_.size());
            for (const auto& mc : components_) eigs_[s].push_back(diagonalize(mc, s));
        }
    }

    const RwaHamiltonian& hamiltonian() const { return h_; }

    // <sx_j>, <sy_j> and norm of the noiseless state at time t
    void observe(const SpinPhononInitialState& psi0, double t, Eigen::VectorXd& sx,
                 Eigen::VectorXd& sy, double* norm = nullptr,
                 double* energy = nullptr) const {
        const int n = h_.n_ions();
        const std::size_t n_sectors = std::size_t(1) << n;
        // evolved per-component vectors, only for populated sectors
        std::vector<std::vector<Eigen::VectorXcd>> psi(n_sectors);
        for (std::size_t s = 0; s < n_sectors; ++s) {
            if (std::abs(psi0.spin[s]) == 0.0) continue;
            psi[s].resize(components_.size());
            for (size_t c = 0; c < components_.size(); ++c)
                psi[s][c] = evolve_component(s, c, psi0, t);
        }
        sx.setZero(n);
        sy.setZero(n);
        if (norm) *norm = 0.0;
        if (energy) *energy = 0.0;
        for (std::size_t s = 0; s < n_sectors; ++s) {
            const complexd cs = psi0.spin[s];
            if (std::abs(cs) == 0.0) continue;
            if (norm || energy) {
                double w = std::norm(cs);
                {
                    double nn = 1.0, ee = 0.0;
                    for (size_t c = 0; c < components_.size(); ++c) {
                        nn *= psi[s][c].squaredNorm();
                        ee += psi[s][c].dot(eigs_[s][c].h * psi[s][c]).real();
                    }
                    if (norm) *norm += w * nn;
                    if (energy) *energy += w * ee;
                }
            }
            for (int j = 0; j < n; ++j) {
                const std::size_t sp = s ^ (std::size_t(1) << j);
                const complexd csp = psi0.spin[sp];
                if (std::abs(csp) == 0.0) continue;
                complexd overlap = std::conj(csp) * cs;
                for (size_t c = 0; c < components_.size(); ++c)
                    overlap *= psi[sp][c].dot(psi[s][c]);  // <psi_sp | psi_s>
                sx[j] += overlap.real();
                const double szj = (s >> j) & 1 ? 1.0 : -1.0;
                sy[j] += (complexd(0.0, -szj) * overlap).real();
            }
        }
    }

    // Trajectory-averaged dephased dynamics (exact factorization of the
    // commuting OU term).
    DynamicsResult run(const SpinPhononInitialState& psi0, const std::vector<double>& times,
                       const NoiseConfig& noise, bool noise_on = true) const {
        const int n = h_.n_ions();
        DynamicsResult r;
        r.times = times;
        const int nt = static_cast<int>(times.size());
        r.noiseless_sx.resize(nt, n);
        r.noiseless_sy.resize(nt, n);
        double e0 = 0.0, norm0 = 1.0;
        for (int k = 0; k < nt; ++k) {
            Eigen::VectorXd sx(n), sy(n);
            double nrm = 0.0, en = 0.0;
            observe(psi0, times[k], sx, sy, &nrm, &en);
            r.noiseless_sx.row(k) = sx;
            r.noiseless_sy.row(k) = sy;
            if (k == 0) {
                e0 = en;
                norm0 = nrm;
            }
            r.max_norm_drift = std::max(r.max_norm_drift, std::abs(nrm - norm0));
            const double scale = std::max(std::abs(e0), 1e-300);
            r.max_energy_drift = std::max(r.max_energy_drift, std::abs(en - e0) / scale);
        }
        if (!noise_on || noise.c == 0.0) {
            r.mean_sx = r.noiseless_sx;
            r.stderr_sx = Eigen::MatrixXd::Zero(nt, n);
            return r;
        }
        noise.validate();
        const std::vector<double> grid = ou_grid(times, noise.tau);
        Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(nt, n);
        Eigen::MatrixXd sum2 = Eigen::MatrixXd::Zero(nt, n);
        for (int traj = 0; traj < noise.n_traj; ++traj) {
            Rng rng(derive_seed(noise.rng_seed, traj));
            std::vector<double> eps = ou_path(grid, noise, rng);
            // piecewise-constant phase accumulation, sampled at output times
            double phi = 0.0;
            size_t g = 0;
            for (int k = 0; k < nt; ++k) {
                while (g + 1 < grid.size() && grid[g + 1] <= times[k] + 1e-30) {
                    phi += eps[g] * (grid[g + 1] - grid[g]);
                    ++g;
                }
                const double cph = std::cos(phi), sph = std::sin(phi);
                for (int j = 0; j < n; ++j) {
                    const double v = cph * r.noiseless_sx(k, j) - sph * r.noiseless_sy(k, j);
                    sum(k, j) += v;
                    sum2(k, j) += v * v;
                }
            }
        }
        r.mean_sx = sum / noise.n_traj;
        r.stderr_sx.resize(nt, n);
        for (int k = 0; k < nt; ++k)
            for (int j = 0; j < n; ++j) {
                const double var =
                    std::max(0.0, sum2(k, j) / noise.n_traj - r.mean_sx(k, j) * r.mean_sx(k, j));
                r.stderr_sx(k, j) = std::sqrt(var / noise.n_traj);
            }
        return r;
    }

    // Single-excitation spectrum of the phonon block (eigenvalues of hop);
    // used by cross-module consistency checks against the phonons module.
    Eigen::VectorXd phonon_block_spectrum() const {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h_.hop, Eigen::EigenvaluesOnly);
        return es.eigenvalues();
    }

private:
    struct ComponentEig {
        Eigen::MatrixXcd h;      // component Hamiltonian (kept for <H>)
        Eigen::VectorXd evals;
        Eigen::MatrixXcd evecs;
    };

    ComponentEig diagonalize(const detail::ModeComponent& mc, std::size_t sector) const {
        const int n = h_.n_ions();
        const int ntr = h_.fock_cutoff;
        const int k = static_cast<int>(mc.modes.size());
        std::vector<int> stride(k);
        int dim = 1;
        for (int j = 0; j < k; ++j) {
            stride[j] = dim;
            dim *= (ntr + 1);
        }
        Eigen::MatrixXcd hm = Eigen::MatrixXcd::Zero(dim, dim);
        std::vector<int> occ(k);
        for (int f = 0; f < dim; ++f) {
            int rest = f;
            for (int j = 0; j < k; ++j) {
                occ[j] = rest % (ntr + 1);
                rest /= (ntr + 1);
            }
            double diag = 0.0;
            for (int j = 0; j < k; ++j) diag += occ[j] * h_.hop(mc.modes[j], mc.modes[j]);
            hm(f, f) += diag;
            for (int j = 0; j < k; ++j)
                for (int j2 = 0; j2 < k; ++j2) {
                    if (j == j2) continue;
                    const double hop = h_.hop(mc.modes[j], mc.modes[j2]);
                    if (hop == 0.0) continue;
                    if (occ[j2] >= 1 && occ[j] + 1 <= ntr) {
                        const int f2 = f + stride[j] - stride[j2];
                        hm(f2, f) += hop * std::sqrt(double((occ[j] + 1) * occ[j2]));
                    }
                }
            for (int j = 0; j < k; ++j) {
                const int ion = mc.modes[j] % n;
                const double sz = (sector >> ion) & 1 ? 1.0 : -1.0;
                const complexd fc = h_.force[mc.modes[j]] * sz;
                if (fc == complexd(0.0)) continue;
                if (occ[j] + 1 <= ntr)
                    hm(f + stride[j], f) += fc * std::sqrt(double(occ[j] + 1));
                if (occ[j] >= 1) hm(f - stride[j], f) += std::conj(fc) * std::sqrt(double(occ[j]));
            }
        }
        ComponentEig ce;
        ce.h = hm;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(hm);
        ce.evals = es.eigenvalues();
        ce.evecs = es.eigenvectors();
        return ce;
    }

    Eigen::VectorXcd evolve_component(std::size_t sector, size_t c,
                                      const SpinPhononInitialState& psi0, double t) const {
        const detail::ModeComponent& mc = components_[c];
        const ComponentEig& ce = eigs_[sector][c];
        const int ntr = h_.fock_cutoff;
        int f0 = 0, stride = 1;
        for (int m : mc.modes) {
            const int o = psi0.occupation[m];
            if (o > ntr) throw InvalidInput("initial occupation exceeds the Fock cutoff");
            f0 += o * stride;
            stride *= (ntr + 1);
        }
        Eigen::VectorXcd w = ce.evecs.row(f0).adjoint();  // V^+ |f0>
        for (int e = 0; e < w.size(); ++e)
            w[e] *= std::exp(complexd(0.0, -ce.evals[e] * t));
        return ce.evecs * w;
    }

    RwaHamiltonian h_;
    std::vector<detail::ModeComponent> components_;
    std::vector<std::vector<ComponentEig>> eigs_;  // [sector][component]
};

// Dense assembly of the full Hamiltonian (tests and small systems only).
// Basis index = spin * (n_t+1)^{3N} + fock, fock digits axis-major.
inline Eigen::MatrixXcd dense_rwa_matrix(const RwaHamiltonian& h, std::size_t max_dim = 1u << 14) {
    const std::size_t dim = h.dim();
    if (dim > max_dim)
        throw DimensionOverflow("dense assembly refused above " + std::to_string(max_dim));
    const int n = h.n_ions();
    const int nm = h.n_modes();
    const int ntr = h.fock_cutoff;
    std::size_t fock_dim = 1;
    for (int m = 0; m < nm; ++m) fock_dim *= (ntr + 1);
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(dim, dim);
    std::vector<int> occ(nm), stride(nm);
    int st = 1;
    for (int m = 0; m < nm; ++m) {
        stride[m] = st;
        st *= (ntr + 1);
    }
    for (std::size_t s = 0; s < (std::size_t(1) << n); ++s) {
        for (std::size_t f = 0; f < fock_dim; ++f) {
            std::size_t rest = f;
            for (int m = 0; m < nm; ++m) {
                occ[m] = rest % (ntr + 1);
                rest /= (ntr + 1);
            }
            const std::size_t row0 = s * fock_dim;
            double diag = 0.0;
            for (int m = 0; m < nm; ++m) diag += occ[m] * h.hop(m, m);
            out(row0 + f, row0 + f) += diag;
            for (int m = 0; m < nm; ++m)
                for (int m2 = 0; m2 < nm; ++m2) {
                    if (m == m2 || h.hop(m, m2) == 0.0) continue;
                    if (occ[m2] >= 1 && occ[m] + 1 <= ntr)
                        out(row0 + f + stride[m] - stride[m2], row0 + f) +=
                            h.hop(m, m2) * std::sqrt(double((occ[m] + 1) * occ[m2]));
                }
            for (int m = 0; m < nm; ++m) {
                const int ion = m % n;
                const double sz = (s >> ion) & 1 ? 1.0 : -1.0;
                const complexd fc = h.force[m] * sz;
                if (fc == complexd(0.0)) continue;
                if (occ[m] + 1 <= ntr)
                    out(row0 + f + stride[m], row0 + f) += fc * std::sqrt(double(occ[m] + 1));
                if (occ[m] >= 1)
                    out(row0 + f - stride[m], row0 + f) += std::conj(fc) * std::sqrt(double(occ[m]));
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Effective Ising dynamics (Eq. 21 convention: H = sum_{i<j} 2 J_ij sz sz
// - h sum_i sx + (de(t)/2) sum_i sz), integrated per OU interval with the
// adaptive scheme. Exact in the 2^N spin space for N <= 12.
// ---------------------------------------------------------------------------

struct EffectiveDynamicsResult {
    std::vector<double> times;
    Eigen::MatrixXd mean_sx;
    Eigen::MatrixXd stderr_sx;
    Eigen::MatrixXd mean_sz;
    double max_norm_drift = 0.0;
};

namespace detail {

class EffectiveModel {
public:
    EffectiveModel(const Eigen::MatrixXd& j, double h_field) : h_(h_field) {
        n_ = static_cast<int>(j.rows());
        if (n_ > 12) throw DimensionOverflow("effective dynamics is dense; N must be <= 12");
        const std::size_t dim = std::size_t(1) << n_;
        zz_.resize(dim);
        mag_.resize(dim);
        for (std::size_t b = 0; b < dim; ++b) {
            double e = 0.0;
            int mag = 0;
            for (int i = 0; i < n_; ++i) {
                const double szi = (b >> i) & 1 ? 1.0 : -1.0;
                mag += (b >> i) & 1 ? 1 : -1;
                for (int jx = i + 1; jx < n_; ++jx) {
                    const double szj = (b >> jx) & 1 ? 1.0 : -1.0;
                    e += 2.0 * j(i, jx) * szi * szj;
                }
            }
            zz_[b] = e;
            mag_[b] = mag;
        }
    }

    int n() const { return n_; }

    void rhs(double eps, const Eigen::VectorXcd& psi, Eigen::VectorXcd& out) const {
        const std::size_t dim = psi.size();
        for (std::size_t b = 0; b < dim; ++b) {
            complexd acc = (zz_[b] + 0.5 * eps * mag_[b]) * psi[b];
            for (int i = 0; i < n_; ++i) acc -= h_ * psi[b ^ (std::size_t(1) << i)];
            out[b] = complexd(0.0, -1.0) * acc;
        }
    }

    void observables(const Eigen::VectorXcd& psi, Eigen::VectorXd& sx, Eigen::VectorXd& sz) const {
        sx.setZero(n_);
        sz.setZero(n_);
        const std::size_t dim = psi.size();
        for (std::size_t b = 0; b < dim; ++b) {
            const double p = std::norm(psi[b]);
            for (int i = 0; i < n_; ++i) {
                sz[i] += ((b >> i) & 1 ? 1.0 : -1.0) * p;
                if ((b >> i) & 1) {
                    const std::size_t b2 = b ^ (std::size_t(1) << i);
                    sx[i] += 2.0 * (std::conj(psi[b2]) * psi[b]).real();
                }
            }
        }
    }

private:
    int n_ = 0;
    double h_ = 0.0;
    std::vector<double> zz_;
    std::vector<int> mag_;
};

}  // namespace detail

inline EffectiveDynamicsResult evolve_effective(const SpinCouplings& couplings, double h_field,
                                                const Eigen::VectorXcd& psi0_spin,
                                                const std::vector<double>& times,
                                                const NoiseConfig& noise, bool noise_on = true,
                                                const IntegratorOptions& iopts = {}) {
    detail::EffectiveModel model(couplings.J, h_field);
    const int n = model.n();
    const int nt = static_cast<int>(times.size());
    EffectiveDynamicsResult r;
    r.times = times;
    const int n_traj = (noise_on && noise.c > 0.0) ? noise.n_traj : 1;
    const std::vector<double> grid =
        (noise_on && noise.c > 0.0) ? ou_grid(times, noise.tau) : [&] {
            std::vector<double> g{0.0};
            for (double t : times)
                if (t > g.back()) g.push_back(t);
            return g;
        }();

    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(nt, n);
    Eigen::MatrixXd sum2 = Eigen::MatrixXd::Zero(nt, n);
    Eigen::MatrixXd sumz = Eigen::MatrixXd::Zero(nt, n);
    for (int traj = 0; traj < n_traj; ++traj) {
        Rng rng(derive_seed(noise.rng_seed, traj));
        std::vector<double> eps;
        if (noise_on && noise.c > 0.0)
            eps = ou_path(grid, noise, rng);
        else
            eps.assign(grid.size(), 0.0);
        Eigen::VectorXcd psi = psi0_spin;
        Eigen::VectorXd sx(n), sz(n);
        size_t out_k = 0;
        // initial samples at t = 0 (and any duplicates)
        while (out_k < times.size() && times[out_k] <= grid.front() + 1e-30) {
            model.observables(psi, sx, sz);
            sum.row(out_k) += sx.transpose();
            sumz.row(out_k) += sz.transpose();
            for (int j = 0; j < n; ++j) sum2(out_k, j) += sx[j] * sx[j];
            ++out_k;
        }
        for (size_t g = 0; g + 1 < grid.size(); ++g) {
            const double e = eps[g];
            auto rhs = [&](double, const Eigen::VectorXcd& y, Eigen::VectorXcd& dy) {
                model.rhs(e, y, dy);
            };
            integrate_adaptive(rhs, psi, grid[g], grid[g + 1], iopts);
            while (out_k < times.size() && times[out_k] <= grid[g + 1] + 1e-30) {
                model.observables(psi, sx, sz);
                sum.row(out_k) += sx.transpose();
                sumz.row(out_k) += sz.transpose();
                for (int j = 0; j < n; ++j) sum2(out_k, j) += sx[j] * sx[j];
                ++out_k;
            }
        }
        r.max_norm_drift = std::max(r.max_norm_drift, std::abs(psi.squaredNorm() - 1.0));
    }
    r.mean_sx = sum / n_traj;
    r.mean_sz = sumz / n_traj;
    r.stderr_sx.resize(nt, n);
    for (int k = 0; k < nt; ++k)
        for (int j = 0; j < n; ++j) {
            const double var =
                std::max(0.0, sum2(k, j) / n_traj - r.mean_sx(k, j) * r.mean_sx(k, j));
            r.stderr_sx(k, j) = n_traj > 1 ? std::sqrt(var / n_traj) : 0.0;
        }
    return r;
}

// ---------------------------------------------------------------------------
// Deviation report between two trajectories on a common time grid
// ---------------------------------------------------------------------------

struct DeviationReport {
    double max_abs = 0.0;
    double rms = 0.0;
};

inline DeviationReport dynamics_deviation(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                          const std::vector<double>& times, double t_max = -1.0) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw InvalidInput("dynamics_deviation requires a common time grid");
    DeviationReport r;
    double acc = 0.0;
    int count = 0;
    for (int k = 0; k < a.rows(); ++k) {
        if (t_max >= 0.0 && times[static_cast<size_t>(k)] > t_max) break;
        for (int j = 0; j < a.cols(); ++j) {
            const double d = std::abs(a(k, j) - b(k, j));
            r.max_abs = std::max(r.max_abs, d);
            acc += d * d;
            ++count;
        }
    }
    r.rms = count ? std::sqrt(acc / count) : 0.0;
    return r;
}

}  // namespace ionsim
