#include "mtabgen/schedule.hpp"

#include <algorithm>
#include <cmath>

namespace mtabgen {

NoiseSchedule build_schedule(size_t timesteps, ScheduleKind kind, double beta_min,
                             double beta_max) {
    if (timesteps < 1) throw ConfigError("build_schedule: need timesteps >= 1");
    if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0)) {
        throw ConfigError("build_schedule: require 0 < beta_min <= beta_max < 1");
    }
    require(kind == ScheduleKind::linear, "build_schedule: unknown schedule kind");

    NoiseSchedule s;
    s.timesteps = timesteps;
    s.betas.resize(timesteps);
    if (timesteps == 1) {
        s.betas[0] = beta_min;
    } else {
        const double step = (beta_max - beta_min) / static_cast<double>(timesteps - 1);
        for (size_t i = 0; i < timesteps; ++i) {
            s.betas[i] = beta_min + step * static_cast<double>(i);
        }
    }
    s.alphas.resize(timesteps);
    s.alpha_bars.resize(timesteps);
    s.sigmas.resize(timesteps);
    double bar = 1.0;
    for (size_t i = 0; i < timesteps; ++i) {
        s.alphas[i] = 1.0 - s.betas[i];
        const double bar_prev = bar;
        bar *= s.alphas[i];
        s.alpha_bars[i] = bar;
        // posterior variance beta_tilde = (1 - abar_{t-1}) / (1 - abar_t) * beta_t
        const double var = (1.0 - bar_prev) / (1.0 - bar) * s.betas[i];
        s.sigmas[i] = std::sqrt(std::max(0.0, var));
    }
    return s;
}

NoiseSchedule default_schedule(size_t timesteps) {
    const double scale = 1000.0 / static_cast<double>(timesteps);
    const double beta_min = std::min(0.999, 1e-4 * scale);
    const double beta_max = std::min(0.999, 0.02 * scale);
    return build_schedule(timesteps, ScheduleKind::linear, beta_min, beta_max);
}

}  // namespace mtabgen
