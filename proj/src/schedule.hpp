#pragma once

#include <vector>

namespace gridpure {

// Variance schedule of the forward diffusion process. beta is indexed 1..T;
// alpha_bar[t] = prod_{s<=t} (1 - beta[s]) with alpha_bar[0] = 1.
struct NoiseSchedule {
  int t_total = 0;
  std::vector<double> beta;       // size t_total + 1, beta[0] unused
  std::vector<double> alpha_bar;  // size t_total + 1

  double ab(int t) const;         // alpha_bar with range check
  double sqrt_ab(int t) const;
  double sqrt_one_minus_ab(int t) const;
  void require_step(int t) const;  // 1 <= t <= t_total
};

// Linear beta ramp from beta_start (t=1) to beta_end (t=T).
NoiseSchedule build_schedule(int t_total = 1000, double beta_start = 1e-4, double beta_end = 0.02);

}  // namespace gridpure
