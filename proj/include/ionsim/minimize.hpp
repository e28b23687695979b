#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace ionsim {

struct MinimizeResult {
    Eigen::VectorXd x;
    double f = std::numeric_limits<double>::infinity();
    double grad_inf_norm = std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
};

struct MinimizeOptions {
    double grad_tol = 1e-8;   // inf-norm of the gradient
    int max_iter = 5000;
    int history = 8;          // L-BFGS memory
};

// Limited-memory BFGS with Armijo backtracking. The objective callback returns
// f(x) and fills grad; it may return +inf for invalid points (overlapping
// ions), which the line search treats as a rejection.
template <class F>
MinimizeResult lbfgs_minimize(F&& fg, Eigen::VectorXd x0, const MinimizeOptions& opts = {}) {
    using Eigen::VectorXd;
    const int n = static_cast<int>(x0.size());
    MinimizeResult res;
    res.x = std::move(x0);

    VectorXd g(n);
    double f = fg(res.x, g);
    if (!std::isfinite(f)) {
        res.f = f;
        return res;
    }

    std::vector<VectorXd> s_hist, y_hist;
    std::vector<double> rho_hist;

    VectorXd q(n), direction(n), x_new(n), g_new(n);
    for (int iter = 0; iter < opts.max_iter; ++iter) {
        res.iterations = iter;
        if (g.lpNorm<Eigen::Infinity>() < opts.grad_tol) {
            res.converged = true;
            break;
        }

        // two-loop recursion
        q = g;
        const int m = static_cast<int>(s_hist.size());
        std::vector<double> alpha(m);
        for (int i = m - 1; i >= 0; --i) {
            alpha[i] = rho_hist[i] * s_hist[i].dot(q);
            q -= alpha[i] * y_hist[i];
        }
        double gamma = 1.0;
        if (m > 0) {
            const double yy = y_hist.back().squaredNorm();
            if (yy > 0.0) gamma = s_hist.back().dot(y_hist.back()) / yy;
        }
        q *= gamma;
        for (int i = 0; i < m; ++i) {
            const double beta = rho_hist[i] * y_hist[i].dot(q);
            q += (alpha[i] - beta) * s_hist[i];
        }
        direction = -q;

        double dg = direction.dot(g);
        if (dg >= 0.0) {  // not a descent direction; fall back to steepest descent
            direction = -g;
            dg = -g.squaredNorm();
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
        }

        // Armijo backtracking
        double step = 1.0;
        double f_new = std::numeric_limits<double>::infinity();
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            x_new = res.x + step * direction;
            f_new = fg(x_new, g_new);
            if (std::isfinite(f_new) && f_new <= f + 1e-4 * step * dg) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;

        VectorXd s = x_new - res.x;
        VectorXd y = g_new - g;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(y));
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > opts.history) {
                s_hist.erase(s_hist.begin());
                y_hist.erase(y_hist.begin());
                rho_hist.erase(rho_hist.begin());
            }
        }
        res.x = x_new;
        f = f_new;
        g = g_new;
    }

    res.f = f;
    res.grad_inf_norm = g.lpNorm<Eigen::Infinity>();
    res.converged = res.grad_inf_norm < opts.grad_tol;
    return res;
}

}  // namespace ionsim
