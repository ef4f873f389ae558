/*
 Copyright 2026 The cft authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#include "cft/sim.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace cft {

TrackingLog simulate_tracking(const std::vector<FlatReference>& refs,
                              ControllerVariant variant, const ResidualParams& xi,
                              const DfbcGains& gains, const VehicleParams& params,
                              const SimOptions& opts, const Vec15& x0) {
  if (refs.empty()) throw std::invalid_argument("simulate_tracking: empty reference");
  if (opts.substeps < 1) throw std::invalid_argument("simulate_tracking: substeps < 1");

  const ResidualField disturbance =
      opts.drag ? residual_from_drag(*opts.drag) : ResidualField(nullptr);
  const double h = opts.dt / opts.substeps;

  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  auto ff = [&](const Vec15& x) -> Vec3 {
    if (variant != ControllerVariant::kNeuralFeedforward) return Vec3::Zero();
    Eigen::Matrix<double, 6, 1> f;
    f << x.segment<3>(3), x.segment<3>(6);
    return mlp_forward(f, xi);
  };
  auto field = [&](const Vec15& x, const FlatReference& ref) -> Vec15 {
    return closed_loop(AugmentedState::FromVec(x), ref, gains, params, disturbance, ff(x));
  };

  TrackingLog log;
  log.dt = opts.dt;
  const int n = static_cast<int>(refs.size());
  log.states.resize(n);
  log.refs = refs;
  log.inputs.resize(n);
  log.saturated.resize(n);

  Vec15 x = x0;
  for (int k = 0; k < n; ++k) {
    log.states[k] = x;
    const DfbcResult res =
        dfbc(AugmentedState::FromVec(x), refs[k], gains, params, ff(x));
    log.inputs[k] = res.u;
    log.saturated[k] = res.saturated;
    if (k + 1 == n) break;
    for (int s = 0; s < opts.substeps; ++s) {
      const Vec15 k1 = field(x, refs[k]);
      const Vec15 k2 = field(x + 0.5 * h * k1, refs[k]);
      const Vec15 k3 = field(x + 0.5 * h * k2, refs[k]);
      const Vec15 k4 = field(x + h * k3, refs[k]);
      x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      if (opts.noise_std > 0.0)
        for (int i = 0; i < 15; ++i) x(i) += opts.noise_std * gauss(rng);
      if (!x.allFinite())
        throw RolloutFault("simulate_tracking: plant state diverged", k);
    }
  }
  return log;
}

Trajectory to_trajectory(const TrackingLog& log) {
  Trajectory traj;
  traj.states = log.states;
  traj.refs = log.refs;
  traj.h = log.dt;
  return traj;
}

double mean_position_error(const TrackingLog& log) {
  if (log.states.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t k = 0; k < log.states.size(); ++k)
    sum += (log.states[k].head<3>() - log.refs[k].p).norm();
  return sum / static_cast<double>(log.states.size());
}

double max_position_error(const TrackingLog& log) {
  double mx = 0.0;
  for (std::size_t k = 0; k < log.states.size(); ++k)
    mx = std::max(mx, (log.states[k].head<3>() - log.refs[k].p).norm());
  return mx;
}

}  // namespace cft
