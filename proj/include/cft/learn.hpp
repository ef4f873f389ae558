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

#ifndef CFT_LEARN_HPP
#define CFT_LEARN_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "cft/control.hpp"

namespace cft {

struct RolloutFault : std::runtime_error {
  int step = -1;
  RolloutFault(const std::string& msg, int step_index)
      : std::runtime_error(msg), step(step_index) {}
};

// A recorded closed-loop trajectory: augmented states and the references
// that were active, sampled at a fixed step h.
struct Trajectory {
  std::vector<Vec15> states;
  std::vector<FlatReference> refs;
  double h = 0.02;
};

// Contiguous slice of a trajectory used as one training unit.
struct TrajectorySegment {
  std::vector<Vec15> x_r;
  std::vector<FlatReference> refs;
  double h = 0.02;
};

struct LossWeights {
  Vec15 l = Vec15::Ones();     // diagonal state weights
  double terminal = 1.0;       // extra factor on the last node

  static LossWeights identity_over_rigid_body() {
    LossWeights w;
    w.l.tail<3>().setZero();  // integrator rows carry no loss
    return w;
  }
};

struct TrainConfig {
  int segment_size = 50;
  int batch_size = 10;
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int max_epochs = 150;
  std::uint64_t seed = 0;
  int threads = 1;
  int checkpoint_every = 0;        // 0 disables checkpoints
  std::string checkpoint_dir;
};

// Forward rollout of the discrete hybrid closed loop: n states starting at
// x0, stepping with RK4 at fixed h, reference held constant over each step.
std::vector<Vec15> forward_rollout(const Vec15& x0, const std::vector<FlatReference>& refs,
                                   const ResidualParams& xi, const DfbcGains& gains,
                                   const VehicleParams& params, double h, int n);

double segment_loss(const std::vector<Vec15>& states, const TrajectorySegment& seg,
                    const LossWeights& weights);

struct GradientResult {
  double loss = 0.0;
  Eigen::VectorXd grad;
};

// Rolled-out loss and its exact parameter gradient via one forward rollout
// and one backward adjoint pass; cost linear in segment length.
GradientResult adjoint_gradient(const TrajectorySegment& seg, const ResidualParams& xi,
                                const DfbcGains& gains, const VehicleParams& params,
                                const LossWeights& weights);

// Cut trajectories into contiguous non-overlapping length-n segments
// (remainder dropped), shuffle with the seed, group s per batch.
std::vector<std::vector<TrajectorySegment>> minibatch_split(
    const std::vector<Trajectory>& dataset, int n, int s, std::uint64_t seed);

struct AdamMoments {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
};

// Standard Adam with bias correction; t is the 1-based step counter.
void adam_step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad, AdamMoments& moments,
               int t, const TrainConfig& cfg);

struct TrainResult {
  ResidualParams xi;
  std::vector<double> loss_history;  // mean per-epoch loss over evaluable segments
  int faults = 0;                    // segment rollouts that diverged and were skipped
};

TrainResult train(const std::vector<Trajectory>& dataset, const TrainConfig& cfg,
                  const LossWeights& weights, const ResidualParams& init_xi,
                  const DfbcGains& gains, const VehicleParams& params);

}  // namespace cft

#endif  // CFT_LEARN_HPP
