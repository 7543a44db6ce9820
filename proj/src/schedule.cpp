#include "schedule.hpp"

#include <cmath>
#include <string>

#include "error.hpp"

namespace gridpure {

double NoiseSchedule::ab(int t) const {
  if (t < 0 || t > t_total) fail(ErrorKind::invalid_argument, "timestep out of schedule range");
  return alpha_bar[t];
}

double NoiseSchedule::sqrt_ab(int t) const { return std::sqrt(ab(t)); }

double NoiseSchedule::sqrt_one_minus_ab(int t) const { return std::sqrt(1.0 - ab(t)); }

void NoiseSchedule::require_step(int t) const {
  if (t < 1 || t > t_total)
    fail(ErrorKind::invalid_argument, "timestep " + std::to_string(t) + " out of schedule range [1," +
                                          std::to_string(t_total) + "]");
}

NoiseSchedule build_schedule(int t_total, double beta_start, double beta_end) {
  if (t_total < 1) fail(ErrorKind::invalid_argument, "build_schedule: t_total must be >= 1");
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
    fail(ErrorKind::invalid_argument, "build_schedule: need 0 < beta_start <= beta_end < 1");

  NoiseSchedule s;
  s.t_total = t_total;
  s.beta.assign(t_total + 1, 0.0);
  s.alpha_bar.assign(t_total + 1, 1.0);
  for (int t = 1; t <= t_total; ++t) {
    const double frac = t_total == 1 ? 0.0 : static_cast<double>(t - 1) / (t_total - 1);
    s.beta[t] = beta_start + frac * (beta_end - beta_start);
    s.alpha_bar[t] = s.alpha_bar[t - 1] * (1.0 - s.beta[t]);
  }
  return s;
}

}  // namespace gridpure
