#pragma once

#include <vector>

#include "mtabgen/common.hpp"

namespace mtabgen {

enum class ScheduleKind { linear };

// Per-timestep noise schedule shared by the Gaussian and multinomial chains.
// Index convention: arrays are 0-based with entry [t-1] for timestep t; the
// alpha_bar(0) = 1 boundary makes the posterior well defined at t = 1.
struct NoiseSchedule {
    size_t timesteps = 0;
    std::vector<double> betas;
    std::vector<double> alphas;
    std::vector<double> alpha_bars;
    std::vector<double> sigmas;  // posterior std dev, sigma_1 = 0

    double beta(size_t t) const { return betas.at(t - 1); }
    double alpha(size_t t) const { return alphas.at(t - 1); }
    double alpha_bar(size_t t) const { return t == 0 ? 1.0 : alpha_bars.at(t - 1); }
    double sigma(size_t t) const { return sigmas.at(t - 1); }
};

NoiseSchedule build_schedule(size_t timesteps, ScheduleKind kind = ScheduleKind::linear,
                             double beta_min = 1e-4, double beta_max = 0.02);

// Linear schedule with the 1000-step reference bounds rescaled by 1000/T and
// capped below 1.
NoiseSchedule default_schedule(size_t timesteps);

}  // namespace mtabgen
