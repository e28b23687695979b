#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "ionsim/errors.hpp"
#include "ionsim/minimize.hpp"
#include "ionsim/rng.hpp"
#include "ionsim/trap.hpp"

namespace ionsim {

// ---------------------------------------------------------------------------
// Dimensionless crystal potential
//
// In units of l_z the potential is
//   E(r) = sum_i sum_a r_ia^2 / (2 kappa_a) + sum_{i<j} 1/|r_i - r_j|,
// and the equilibrium condition reads
//   r_ia - kappa_a sum_{j != i} (r_ia - r_ja)/|r_i - r_j|^3 = 0,
// which is kappa_a times the gradient of E. Convergence is measured on the
// latter form (the "force residual").
// ---------------------------------------------------------------------------

namespace detail {

inline double crystal_energy_gradient(const TrapConfig& trap, const Eigen::VectorXd& x,
                                      Eigen::VectorXd& grad) {
    const int n = static_cast<int>(x.size()) / 3;
    const double inv_kappa[3] = {1.0 / trap.kappa_x(), 1.0 / trap.kappa_y(), 1.0};
    grad.setZero(3 * n);
    double energy = 0.0;
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < 3; ++a) {
            const double v = x[3 * i + a];
            energy += 0.5 * inv_kappa[a] * v * v;
            grad[3 * i + a] += inv_kappa[a] * v;
        }
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double dx = x[3 * i] - x[3 * j];
            const double dy = x[3 * i + 1] - x[3 * j + 1];
            const double dz = x[3 * i + 2] - x[3 * j + 2];
            const double r2 = dx * dx + dy * dy + dz * dz;
            if (r2 <= 0.0) return std::numeric_limits<double>::infinity();
            const double r = std::sqrt(r2);
            energy += 1.0 / r;
            const double ir3 = 1.0 / (r2 * r);
            grad[3 * i] -= dx * ir3;
            grad[3 * i + 1] -= dy * ir3;
            grad[3 * i + 2] -= dz * ir3;
            grad[3 * j] += dx * ir3;
            grad[3 * j + 1] += dy * ir3;
            grad[3 * j + 2] += dz * ir3;
        }
    }
    return energy;
}

// Force residual of the equilibrium system (gradient scaled by kappa_a).
inline double force_residual(const TrapConfig& trap, const Eigen::VectorXd& grad) {
    const double kappa[3] = {trap.kappa_x(), trap.kappa_y(), 1.0};
    double worst = 0.0;
    for (int m = 0; m < grad.size(); ++m)
        worst = std::max(worst, std::abs(kappa[m % 3] * grad[m]));
    return worst;
}

}  // namespace detail

// 3N x 3N dimensionless Coulomb coupling tensor V~_ij^{ab} evaluated at the
// given positions (N x 3, units of l_z). Index layout is axis-major: row
// a*N + i. Off-diagonal blocks carry -[3 d_a d_b - delta_ab d^2]/d^5 per pair;
// the per-ion diagonal carries minus the row sum (the Einstein-frequency
// renormalization of Eqs. of motion).
inline Eigen::MatrixXd coulomb_coupling_tensor(const Eigen::MatrixXd& positions) {
    const int n = static_cast<int>(positions.rows());
    Eigen::MatrixXd v = Eigen::MatrixXd::Zero(3 * n, 3 * n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            const Eigen::Vector3d d = positions.row(i) - positions.row(j);
            const double r2 = d.squaredNorm();
            const double ir5 = 1.0 / (r2 * r2 * std::sqrt(r2));
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) {
                    const double q = -(3.0 * d[a] * d[b] - (a == b ? r2 : 0.0)) * ir5;
                    v(a * n + i, b * n + j) = q;
                    v(a * n + i, b * n + i) -= q;
                }
        }
    }
    return v;
}

// ---------------------------------------------------------------------------
// IonCrystal
// ---------------------------------------------------------------------------

struct IonCrystal {
    TrapConfig trap;
    Eigen::MatrixXd positions;  // N x 3, dimensionless (units of l_z)
    double residual = 0.0;      // inf-norm of the equilibrium force
    double energy = 0.0;        // dimensionless potential energy

    int n() const { return static_cast<int>(positions.rows()); }

    Eigen::VectorXd flat() const {
        Eigen::VectorXd x(3 * n());
        for (int i = 0; i < n(); ++i)
            for (int a = 0; a < 3; ++a) x[3 * i + a] = positions(i, a);
        return x;
    }

    // Hessian of the dimensionless potential at the current positions:
    // diag(1/kappa_a) + V~. Positive semidefinite at a true minimum.
    Eigen::MatrixXd hessian() const {
        const int nn = n();
        Eigen::MatrixXd h = coulomb_coupling_tensor(positions);
        const double inv_kappa[3] = {1.0 / trap.kappa_x(), 1.0 / trap.kappa_y(), 1.0};
        for (int a = 0; a < 3; ++a)
            for (int i = 0; i < nn; ++i) h(a * nn + i, a * nn + i) += inv_kappa[a];
        return h;
    }

    bool is_stable_minimum(double tol = 1e-8) const {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hessian(), Eigen::EigenvaluesOnly);
        return es.eigenvalues().minCoeff() > -tol;
    }

    double min_pair_distance() const {
        double best = std::numeric_limits<double>::infinity();
        for (int i = 0; i < n(); ++i)
            for (int j = i + 1; j < n(); ++j)
                best = std::min(best, (positions.row(i) - positions.row(j)).norm());
        return best;
    }
};

// ---------------------------------------------------------------------------
// Multi-start equilibrium solver
// ---------------------------------------------------------------------------

struct SeedStrategy {
    bool perturbed_chain = true;
    bool perturbed_zigzag = true;
    int random_clouds = 8;
    double perturbation = 0.05;  // transverse noise on structured seeds
    std::uint64_t rng_seed = 0x10e5ceed;
};

struct EquilibriumOptions {
    double tol = 1e-10;  // inf-norm of the equilibrium force
    int max_iter = 4000;
    SeedStrategy seeds;
};

namespace detail {

inline Eigen::MatrixXd to_matrix(const Eigen::VectorXd& x) {
    const int n = static_cast<int>(x.size()) / 3;
    Eigen::MatrixXd p(n, 3);
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < 3; ++a) p(i, a) = x[3 * i + a];
    return p;
}

// Newton polish with Levenberg damping; quadratic convergence to the stated
// residual once L-BFGS has delivered a nearby point.
inline bool newton_polish(const TrapConfig& trap, Eigen::VectorXd& x, double tol, int max_iter) {
    const int n3 = static_cast<int>(x.size());
    Eigen::VectorXd grad(n3), step(n3), x_new(n3), grad_new(n3);
    double f = crystal_energy_gradient(trap, x, grad);
    for (int iter = 0; iter < max_iter; ++iter) {
        if (force_residual(trap, grad) < tol) return true;
        Eigen::MatrixXd h = coulomb_coupling_tensor(to_matrix(x));
        const int n = n3 / 3;
        const double inv_kappa[3] = {1.0 / trap.kappa_x(), 1.0 / trap.kappa_y(), 1.0};
        for (int a = 0; a < 3; ++a)
            for (int i = 0; i < n; ++i) h(a * n + i, a * n + i) += inv_kappa[a];
        // The tensor uses axis-major indexing; the flat state is ion-major.
        Eigen::VectorXd g_axis(n3);
        for (int i = 0; i < n; ++i)
            for (int a = 0; a < 3; ++a) g_axis[a * n + i] = grad[3 * i + a];
        double lambda = 0.0;
        for (int attempt = 0; attempt < 12; ++attempt) {
            Eigen::MatrixXd hd = h;
            if (lambda > 0.0) hd.diagonal().array() += lambda;
            Eigen::LDLT<Eigen::MatrixXd> ldlt(hd);
            bool ok = (ldlt.info() == Eigen::Success);
            if (ok) {
                Eigen::VectorXd s_axis = ldlt.solve(-g_axis);
                for (int i = 0; i < n; ++i)
                    for (int a = 0; a < 3; ++a) step[3 * i + a] = s_axis[a * n + i];
                x_new = x + step;
                const double f_new = crystal_energy_gradient(trap, x_new, grad_new);
                if (std::isfinite(f_new) && f_new <= f + 1e-12 * std::abs(f)) {
                    x = x_new;
                    f = f_new;
                    grad = grad_new;
                    ok = true;
                    break;
                }
                ok = false;
            }
            lambda = (lambda == 0.0) ? 1e-6 : lambda * 10.0;
            if (attempt == 11) return false;
        }
    }
    return force_residual(trap, grad) < tol;
}

// Canonical representative among mirror-degenerate minima: ions sorted by
// (z, x, y); z-mirror resolved lexicographically, then x of ion 1 made <= 0,
// then y likewise.
inline void canonicalize(Eigen::MatrixXd& p) {
    const int n = static_cast<int>(p.rows());
    auto sort_rows = [n](Eigen::MatrixXd& m) {
        std::vector<int> idx(n);
        for (int i = 0; i < n; ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&m](int a, int b) {
            if (m(a, 2) != m(b, 2)) return m(a, 2) < m(b, 2);
            if (m(a, 0) != m(b, 0)) return m(a, 0) < m(b, 0);
            return m(a, 1) < m(b, 1);
        });
        Eigen::MatrixXd out(n, 3);
        for (int i = 0; i < n; ++i) out.row(i) = m.row(idx[i]);
        m = out;
    };
    sort_rows(p);
    Eigen::MatrixXd zflip = p;
    zflip.col(2) *= -1.0;
    sort_rows(zflip);
    for (int i = 0; i < n * 3; ++i) {
        const double a = p(i / 3, i % 3), b = zflip(i / 3, i % 3);
        if (b < a - 1e-12) {
            p = zflip;
            break;
        }
        if (a < b - 1e-12) break;
    }
    if (p(0, 0) > 1e-12) {
        p.col(0) *= -1.0;
        sort_rows(p);
    }
    if (p(0, 1) > 1e-12) {
        p.col(1) *= -1.0;
        sort_rows(p);
    }
}

}  // namespace detail

// Solves the equilibrium system by multi-start relaxation (perturbed chain,
// perturbed zigzag, K random clouds), L-BFGS followed by a Newton polish, and
// returns the lowest-energy converged configuration in canonical order.
inline IonCrystal equilibrium_positions(const TrapConfig& trap, int n_ions,
                                        const EquilibriumOptions& opts = {},
                                        std::vector<std::string>* warnings = nullptr) {
    if (n_ions < 1) throw NonConvergence("n_ions must be >= 1");
    trap.validate(warnings);

    if (n_ions == 1) {
        IonCrystal c{trap, Eigen::MatrixXd::Zero(1, 3), 0.0, 0.0};
        return c;
    }

    // structured seeds: chain spacing scaled to the known N-ion chain extent
    const double spacing = 3.0 * std::pow(static_cast<double>(n_ions), -0.559);
    std::vector<Eigen::VectorXd> seeds;
    Rng rng(opts.seeds.rng_seed);
    auto chain = [&](double zig_amplitude, double noise) {
        Eigen::VectorXd x = Eigen::VectorXd::Zero(3 * n_ions);
        for (int i = 0; i < n_ions; ++i) {
            x[3 * i + 2] = spacing * (i - 0.5 * (n_ions - 1));
            x[3 * i] = zig_amplitude * (i % 2 == 0 ? 1.0 : -1.0) + noise * rng.normal();
            x[3 * i + 1] = 0.2 * noise * rng.normal();
        }
        return x;
    };
    if (opts.seeds.perturbed_chain) seeds.push_back(chain(0.0, opts.seeds.perturbation));
    if (opts.seeds.perturbed_zigzag) seeds.push_back(chain(0.4, opts.seeds.perturbation));
    const double extent = spacing * n_ions * 0.5;
    for (int k = 0; k < opts.seeds.random_clouds; ++k) {
        Eigen::VectorXd x(3 * n_ions);
        for (int i = 0; i < n_ions; ++i) {
            x[3 * i] = 0.7 * rng.normal();
            x[3 * i + 1] = 0.05 * rng.normal();
            x[3 * i + 2] = 0.7 * extent * rng.normal();
        }
        seeds.push_back(x);
    }

    auto objective = [&trap](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
        return detail::crystal_energy_gradient(trap, x, g);
    };

    bool any = false;
    double best_energy = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best;
    for (auto& seed : seeds) {
        MinimizeOptions mo;
        mo.grad_tol = 1e-6;
        mo.max_iter = opts.max_iter;
        MinimizeResult r = lbfgs_minimize(objective, seed, mo);
        if (!std::isfinite(r.f)) continue;
        Eigen::VectorXd x = r.x;
        if (!detail::newton_polish(trap, x, opts.tol, 60)) continue;
        Eigen::VectorXd g(x.size());
        const double e = detail::crystal_energy_gradient(trap, x, g);
        any = true;
        if (e < best_energy - 1e-12 ||
            (std::abs(e - best_energy) <= 1e-12 && !best.size())) {
            best_energy = e;
            best = x;
        }
    }
    if (!any)
        throw NonConvergence("no seed reached the force tolerance within the iteration budget");

    Eigen::MatrixXd p = detail::to_matrix(best);
    detail::canonicalize(p);
    Eigen::VectorXd g(3 * n_ions);
    Eigen::VectorXd flat(3 * n_ions);
    for (int i = 0; i < n_ions; ++i)
        for (int a = 0; a < 3; ++a) flat[3 * i + a] = p(i, a);
    const double e = detail::crystal_energy_gradient(trap, flat, g);
    IonCrystal c{trap, p, detail::force_residual(trap, g), e};
    return c;
}

// ---------------------------------------------------------------------------
// Ladder classification
// ---------------------------------------------------------------------------

struct LadderStructure {
    int n_legs = 1;
    std::vector<int> leg_of;      // per-ion leg index, 0-based, ordered by mean x
    bool planar = true;           // max |y| below the planarity tolerance
    std::vector<double> leg_x;    // mean bulk x per leg
    Eigen::MatrixXd leg_spacings; // d_{gamma mu} = |leg_x[g] - leg_x[m]|
};

struct ClassifyOptions {
    double x_cluster_tol = 0.1;     // gap threshold on sorted bulk x
    double planarity_tol = 1e-6;    // |y| below this means planar
    // Leg counting uses the central part of the chain. The transverse
    // displacement carries an axial envelope: the outermost ions pinch back
    // toward the trap axis and their x values fill the space between the
    // legs, so clustering all N ions never separates at any tolerance.
    double bulk_fraction = 1.0 / 3.0;
    int min_bulk_ions = 12;
};

inline LadderStructure classify_structure(const IonCrystal& crystal,
                                          const ClassifyOptions& opts = {}) {
    const int n = crystal.n();
    const double tol = opts.x_cluster_tol;
    LadderStructure s;
    s.leg_of.assign(n, 0);
    s.planar = crystal.positions.col(1).cwiseAbs().maxCoeff() < opts.planarity_tol;

    // most-central ions by |z|
    const int n_bulk = std::min(n, std::max(opts.min_bulk_ions,
                                            static_cast<int>(std::ceil(opts.bulk_fraction * n))));
    std::vector<int> by_z(n);
    for (int i = 0; i < n; ++i) by_z[i] = i;
    std::sort(by_z.begin(), by_z.end(), [&](int a, int b) {
        return std::abs(crystal.positions(a, 2)) < std::abs(crystal.positions(b, 2));
    });
    std::vector<double> xs(n_bulk);
    for (int k = 0; k < n_bulk; ++k) xs[k] = crystal.positions(by_z[k], 0);
    std::sort(xs.begin(), xs.end());

    const double spread = xs.back() - xs.front();
    if (spread >= 0.5 * tol) {
        // A gap comparable to the threshold cannot be attributed confidently to
        // either side; the caller must refine the tolerance.
        for (int k = 0; k + 1 < n_bulk; ++k) {
            const double gap = xs[k + 1] - xs[k];
            if (gap >= 0.5 * tol && gap <= 2.0 * tol)
                throw AmbiguousStructure(
                    "cluster gap " + std::to_string(gap) + " within a factor 2 of the "
                    "tolerance " + std::to_string(tol));
        }
    }

    std::vector<double> centers;
    double acc = xs[0];
    int count = 1;
    for (int k = 1; k < n_bulk; ++k) {
        if (xs[k] - xs[k - 1] > tol) {
            centers.push_back(acc / count);
            acc = 0.0;
            count = 0;
        }
        acc += xs[k];
        ++count;
    }
    centers.push_back(acc / count);
    s.n_legs = static_cast<int>(centers.size());
    s.leg_x = centers;

    for (int i = 0; i < n; ++i) {
        int best = 0;
        double best_d = std::abs(crystal.positions(i, 0) - centers[0]);
        for (int g = 1; g < s.n_legs; ++g) {
            const double d = std::abs(crystal.positions(i, 0) - centers[g]);
            if (d < best_d) {
                best_d = d;
                best = g;
            }
        }
        s.leg_of[i] = best;
    }

    s.leg_spacings.resize(s.n_legs, s.n_legs);
    for (int g = 0; g < s.n_legs; ++g)
        for (int m = 0; m < s.n_legs; ++m) s.leg_spacings(g, m) = std::abs(s.leg_x[g] - s.leg_x[m]);
    return s;
}

// ---------------------------------------------------------------------------
// Structural transitions
// ---------------------------------------------------------------------------

struct CriticalScanOptions {
    double bracket_lo = 1e-4;
    double bracket_hi = 0.2;
    double resolution = 1e-5;
    double x_cluster_tol = 1e-3;  // transitions are soft; a tight tolerance is needed
    EquilibriumOptions equilibrium;
};

namespace detail {

inline int legs_at_kappa(const TrapConfig& trap_template, int n_ions, double kappa_x,
                         const CriticalScanOptions& opts) {
    TrapConfig t = trap_template.with_kappa_x(kappa_x);
    IonCrystal c = equilibrium_positions(t, n_ions, opts.equilibrium);
    for (double tol : {opts.x_cluster_tol, opts.x_cluster_tol / 3.0, opts.x_cluster_tol * 3.0}) {
        try {
            ClassifyOptions co;
            co.x_cluster_tol = tol;
            return classify_structure(c, co).n_legs;
        } catch (const AmbiguousStructure&) {
            continue;
        }
    }
    // fall back to spread-based counting between ambiguous tolerances
    ClassifyOptions co;
    co.x_cluster_tol = opts.x_cluster_tol * 9.0;
    return classify_structure(c, co).n_legs;
}

}  // namespace detail

// kappa_c for the transition to `target_legs` legs: bisection on kappa_x at
// fixed omega_y, omega_z until the classification flips at the requested
// resolution. The bracket is auto-expanded if both ends classify alike.
inline double critical_anisotropy(const TrapConfig& trap_template, int n_ions, int target_legs,
                                  const CriticalScanOptions& opts = {}) {
    if (target_legs < 2) throw BracketFailure("target_legs must be >= 2");
    double lo = opts.bracket_lo, hi = opts.bracket_hi;
    auto below = [&](double k) {
        return detail::legs_at_kappa(trap_template, n_ions, k, opts) < target_legs;
    };
    bool lo_below = below(lo), hi_below = below(hi);
    for (int grow = 0; grow < 12 && lo_below == hi_below; ++grow) {
        if (lo_below) {
            hi = std::min(0.999, hi * 2.0);
            hi_below = below(hi);
        } else {
            lo = std::max(1e-7, lo * 0.5);
            lo_below = below(lo);
        }
        if ((lo <= 1e-7 && !lo_below) || (hi >= 0.999 && hi_below)) break;
    }
    if (lo_below == hi_below)
        throw BracketFailure("both bracket endpoints classify with the same leg count");
    while (hi - lo > opts.resolution) {
        const double mid = 0.5 * (lo + hi);
        if (below(mid) == lo_below)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace ionsim
