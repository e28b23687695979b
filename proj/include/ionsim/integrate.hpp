#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "ionsim/errors.hpp"

namespace ionsim {

struct IntegratorOptions {
    double rtol = 1e-9;
    double atol = 1e-12;
    double first_step = 0.0;   // 0 = auto
    double min_step_rel = 1e-14;  // relative to the span; below this -> StepRejection
};

// Dormand-Prince 5(4) adaptive step. State is any Eigen-like vector/matrix of
// complex<double>; rhs(t, y, dydt) fills the derivative. Integrates from t0 to
// t1 and leaves y at t1. Used for the effective spin model, the Lindblad
// propagations of the error-budget module, and anything else with smooth
// coefficients.
template <class State, class Rhs>
void integrate_adaptive(Rhs&& rhs, State& y, double t0, double t1,
                        const IntegratorOptions& opts = {}) {
    if (t1 <= t0) return;
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                            a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                            a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                            b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                            e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

    const double span = t1 - t0;
    double h = opts.first_step > 0.0 ? opts.first_step : span / 100.0;
    double t = t0;
    State k1 = y, k2 = y, k3 = y, k4 = y, k5 = y, k6 = y, k7 = y, ytmp = y, ynew = y;
    rhs(t, y, k1);
    while (t < t1) {
        h = std::min(h, t1 - t);
        ytmp = y + h * a21 * k1;
        rhs(t + c2 * h, ytmp, k2);
        ytmp = y + h * (a31 * k1 + a32 * k2);
        rhs(t + c3 * h, ytmp, k3);
        ytmp = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
        rhs(t + c4 * h, ytmp, k4);
        ytmp = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
        rhs(t + c5 * h, ytmp, k5);
        ytmp = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
        rhs(t + h, ytmp, k6);
        ynew = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
        rhs(t + h, ynew, k7);

        // scaled error estimate
        const double err_abs =
            (h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7)).matrix().norm();
        const double scale =
            opts.atol + opts.rtol * std::max(y.matrix().norm(), ynew.matrix().norm());
        const double err = err_abs / scale;

        if (err <= 1.0) {
            t += h;
            y.swap(ynew);
            k1.swap(k7);  // FSAL
        }  // on rejection y and k1 are untouched
        const double factor = err > 0.0 ? 0.9 * std::pow(err, -0.2) : 5.0;
        h *= std::clamp(factor, 0.2, 5.0);
        if (h < opts.min_step_rel * span)
            throw StepRejection("adaptive integrator cannot meet the tolerance at t = " +
                                std::to_string(t));
    }
}

}  // namespace ionsim
