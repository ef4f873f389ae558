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

#ifndef CFT_SIM_HPP
#define CFT_SIM_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include "cft/learn.hpp"

namespace cft {

enum class ControllerVariant {
  kBaseline,            // DFBC with zero feedforward
  kNeuralFeedforward,   // DFBC with the learned residual as feedforward
};

// Closed-loop recording sampled at the reference rate.
struct TrackingLog {
  std::vector<Vec15> states;        // true augmented state at each sample
  std::vector<FlatReference> refs;
  std::vector<Vec4> inputs;         // commanded motor thrusts at each sample
  std::vector<bool> saturated;
  double dt = 0.02;
};

struct SimOptions {
  double dt = 0.02;        // recording / reference step
  int substeps = 10;       // plant RK4 substeps per recording step
  std::optional<DragModel> drag;  // truth-plant disturbance; nullopt = nominal plant
  double noise_std = 0.0;  // optional zero-mean Gaussian state noise per substep
  std::uint64_t seed = 0;  // noise stream
};

// Simulate the true plant (nominal rigid body plus optional drag) under the
// chosen DFBC variant. The reference is held constant over each recording
// step; the plant integrates with RK4 at dt/substeps. xi is only consulted
// by the neural-feedforward variant.
TrackingLog simulate_tracking(const std::vector<FlatReference>& refs,
                              ControllerVariant variant, const ResidualParams& xi,
                              const DfbcGains& gains, const VehicleParams& params,
                              const SimOptions& opts,
                              const Vec15& x0 = Vec15::Zero());

// View a recording as a learning trajectory (states + active references).
Trajectory to_trajectory(const TrackingLog& log);

double mean_position_error(const TrackingLog& log);
double max_position_error(const TrackingLog& log);

}  // namespace cft

#endif  // CFT_SIM_HPP
