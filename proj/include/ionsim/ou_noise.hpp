#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "ionsim/errors.hpp"
#include "ionsim/rng.hpp"

namespace ionsim {

// Ornstein-Uhlenbeck dephasing noise: stationary, Markovian, Gaussian, with
// diffusion constant c ((rad/s)^2/s) and correlation time tau (s). For short
// correlation times the coherences damp with T2 = 2/(c tau^2).
struct NoiseConfig {
    double c = 0.0;
    double tau = 1e-3;
    int n_traj = 1000;
    std::uint64_t rng_seed = 0xabcd5eedull;

    double T2() const { return 2.0 / (c * tau * tau); }
    double stationary_variance() const { return 0.5 * c * tau; }

    static NoiseConfig from_T2(double T2, double tau, int n_traj, std::uint64_t seed) {
        NoiseConfig n;
        n.c = 2.0 / (T2 * tau * tau);
        n.tau = tau;
        n.n_traj = n_traj;
        n.rng_seed = seed;
        return n;
    }

    void validate() const {
        if (!(tau > 0.0)) throw InvalidInput("OU correlation time tau must be positive");
        if (c < 0.0) throw InvalidInput("OU diffusion constant c must be >= 0");
    }
};

// Exact OU transition over a step of any length dt (not an Euler update):
//   eps' = eps e^{-dt/tau} + sqrt[(c tau / 2)(1 - e^{-2 dt/tau})] n_g.
inline double ou_step(double eps, double dt, const NoiseConfig& noise, Rng& rng) {
    if (!(dt > 0.0)) throw InvalidInput("ou_step requires dt > 0");
    const double decay = std::exp(-dt / noise.tau);
    const double sigma = std::sqrt(0.5 * noise.c * noise.tau * (1.0 - decay * decay));
    return eps * decay + sigma * rng.normal();
}

// Piecewise-constant realization of the OU process on a grid: eps[k] holds on
// [t_k, t_{k+1}). eps[0] is drawn from the stationary distribution.
inline std::vector<double> ou_path(const std::vector<double>& times, const NoiseConfig& noise,
                                   Rng& rng) {
    std::vector<double> eps(times.size());
    if (times.empty()) return eps;
    eps[0] = std::sqrt(noise.stationary_variance()) * rng.normal();
    for (size_t k = 1; k < times.size(); ++k)
        eps[k] = ou_step(eps[k - 1], times[k] - times[k - 1], noise, rng);
    return eps;
}

// Sub-grid refinement of [0, t_final] such that every output time is a grid
// point and no step exceeds tau/20 (the noise must be resolved below tau).
inline std::vector<double> ou_grid(const std::vector<double>& output_times, double tau) {
    std::vector<double> grid;
    grid.push_back(0.0);
    const double dt_max = tau / 20.0;
    for (double t : output_times) {
        double prev = grid.back();
        if (t <= prev) continue;
        const int nsub = std::max(1, static_cast<int>(std::ceil((t - prev) / dt_max)));
        for (int k = 1; k <= nsub; ++k) grid.push_back(prev + (t - prev) * k / nsub);
    }
    return grid;
}

}  // namespace ionsim
