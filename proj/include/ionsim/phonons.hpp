#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "ionsim/crystal.hpp"
#include "ionsim/errors.hpp"

namespace ionsim {

// ---------------------------------------------------------------------------
// Coulomb coupling tensor
// ---------------------------------------------------------------------------

// Dimensionless second-order Coulomb couplings V~_ij^{ab} (units of e^2/l_z^3
// removed), stored axis-major as one 3N x 3N symmetric matrix.
struct CouplingTensor {
    Eigen::MatrixXd v;
    int n_ions = 0;

    Eigen::Block<const Eigen::MatrixXd> block(int axis_a, int axis_b) const {
        return v.block(axis_a * n_ions, axis_b * n_ions, n_ions, n_ions);
    }
    Eigen::Block<const Eigen::MatrixXd> xx() const { return block(0, 0); }
    Eigen::Block<const Eigen::MatrixXd> yy() const { return block(1, 1); }
    Eigen::Block<const Eigen::MatrixXd> zz() const { return block(2, 2); }
    Eigen::Block<const Eigen::MatrixXd> xz() const { return block(0, 2); }
    Eigen::Block<const Eigen::MatrixXd> zx() const { return block(2, 0); }
};

inline CouplingTensor coulomb_hessian(const IonCrystal& crystal) {
    return CouplingTensor{coulomb_coupling_tensor(crystal.positions), crystal.n()};
}

// ---------------------------------------------------------------------------
// Normal modes
// ---------------------------------------------------------------------------

enum class Branch { transverse, planar };

struct PhononModes {
    Branch branch = Branch::transverse;
    Eigen::VectorXd frequencies;   // rad/s, ascending
    Eigen::MatrixXd mode_matrix;   // orthogonal; column n is mode n
    IonCrystal crystal;

    int n_modes() const { return static_cast<int>(frequencies.size()); }
};

namespace detail {

// Deterministic eigenbasis: within numerically degenerate groups, replace the
// solver's arbitrary basis by ordered Gram-Schmidt of canonical-axis
// projections; then fix each eigenvector's sign so its largest-magnitude
// component is positive.
inline void canonicalize_eigenbasis(const Eigen::VectorXd& evals, Eigen::MatrixXd& evecs) {
    const int n = static_cast<int>(evals.size());
    const double scale = std::max(1.0, evals.cwiseAbs().maxCoeff());
    int start = 0;
    while (start < n) {
        int end = start + 1;
        while (end < n && std::abs(evals[end] - evals[end - 1]) <= 1e-12 * scale) ++end;
        const int dim = end - start;
        if (dim > 1) {
            Eigen::MatrixXd sub = evecs.middleCols(start, dim);
            Eigen::MatrixXd basis(n, dim);
            int found = 0;
            for (int axis = 0; axis < n && found < dim; ++axis) {
                Eigen::VectorXd candidate = sub * (sub.row(axis).transpose());
                for (int k = 0; k < found; ++k)
                    candidate -= basis.col(k).dot(candidate) * basis.col(k);
                const double norm = candidate.norm();
                if (norm > 1e-8) {
                    basis.col(found++) = candidate / norm;
                }
            }
            if (found == dim) evecs.middleCols(start, dim) = basis;
        }
        start = end;
    }
    for (int c = 0; c < evecs.cols(); ++c) {
        int imax = 0;
        evecs.col(c).cwiseAbs().maxCoeff(&imax);
        if (evecs(imax, c) < 0.0) evecs.col(c) *= -1.0;
    }
}

inline void require_planar(const IonCrystal& crystal, const char* who) {
    if (crystal.positions.col(1).cwiseAbs().maxCoeff() >= 1e-6)
        throw InvalidInput(std::string(who) + " requires a planar (xz-plane) crystal");
}

}  // namespace detail

// Transverse branch: eigenpairs of (I + kappa_y V~^yy); Omega_n = omega_y
// sqrt(lambda_n). The uniform vector is an exact eigenvector with eigenvalue 1
// (center-of-mass mode at exactly omega_y).
inline PhononModes transverse_modes(const IonCrystal& crystal) {
    detail::require_planar(crystal, "transverse_modes");
    const int n = crystal.n();
    const CouplingTensor t = coulomb_hessian(crystal);
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) + crystal.trap.kappa_y() * t.yy();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    Eigen::VectorXd evals = es.eigenvalues();
    Eigen::MatrixXd evecs = es.eigenvectors();
    if (evals.minCoeff() <= 0.0)
        throw ImaginaryFrequency("transverse eigenvalue <= 0: structural instability (min " +
                                 std::to_string(evals.minCoeff()) + ")");
    detail::canonicalize_eigenbasis(evals, evecs);
    PhononModes m;
    m.branch = Branch::transverse;
    m.frequencies = crystal.trap.omega_y * evals.cwiseSqrt();
    m.mode_matrix = std::move(evecs);
    m.crystal = crystal;
    return m;
}

// Planar branch: eigenpairs of the 2N x 2N block matrix
//   [ I + kappa_x V~^xx      kappa_x V~^xz      ]
//   [ kappa_x V~^zx          kappa_x (I + V~^zz)]
// with Omega_n = omega_x sqrt(lambda_n). Rows 0..N-1 of the mode matrix are x
// components, rows N..2N-1 are z components. A uniform z displacement is an
// exact eigenvector with eigenvalue kappa_x (axial COM mode at omega_z).
inline PhononModes planar_modes(const IonCrystal& crystal) {
    detail::require_planar(crystal, "planar_modes");
    const int n = crystal.n();
    const CouplingTensor t = coulomb_hessian(crystal);
    const double kx = crystal.trap.kappa_x();
    Eigen::MatrixXd a(2 * n, 2 * n);
    a.topLeftCorner(n, n) = Eigen::MatrixXd::Identity(n, n) + kx * t.xx();
    a.topRightCorner(n, n) = kx * t.xz();
    a.bottomLeftCorner(n, n) = kx * t.zx();
    a.bottomRightCorner(n, n) = kx * (Eigen::MatrixXd::Identity(n, n) + t.zz());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    Eigen::VectorXd evals = es.eigenvalues();
    Eigen::MatrixXd evecs = es.eigenvectors();
    if (evals.minCoeff() <= 0.0)
        throw ImaginaryFrequency("planar eigenvalue <= 0: soft mode at a structural "
                                 "transition (min " + std::to_string(evals.minCoeff()) + ")");
    detail::canonicalize_eigenbasis(evals, evecs);
    PhononModes m;
    m.branch = Branch::planar;
    m.frequencies = crystal.trap.omega_x * evals.cwiseSqrt();
    m.mode_matrix = std::move(evecs);
    m.crystal = crystal;
    return m;
}

// ---------------------------------------------------------------------------
// Branch gap
// ---------------------------------------------------------------------------

struct BranchGapReport {
    double min_transverse = 0.0;  // Omega_1^perp
    double max_planar = 0.0;      // Omega_2N^par
    double gap = 0.0;             // min_transverse - max_planar
    bool overlap = false;
};

inline BranchGapReport branch_gap(const PhononModes& tm, const PhononModes& pm) {
    if (tm.branch != Branch::transverse || pm.branch != Branch::planar)
        throw InvalidInput("branch_gap expects (transverse, planar) in that order");
    BranchGapReport r;
    r.min_transverse = tm.frequencies.minCoeff();
    r.max_planar = pm.frequencies.maxCoeff();
    r.gap = r.min_transverse - r.max_planar;
    r.overlap = r.gap <= 0.0;
    return r;
}

}  // namespace ionsim
