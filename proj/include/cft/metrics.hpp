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

#ifndef CFT_METRICS_HPP
#define CFT_METRICS_HPP

#include "cft/dataset.hpp"
#include "cft/trajopt.hpp"

namespace cft {

struct PredictionReport {
  double acc_rmse = 0.0;   // one-step vdot prediction vs differenced recordings
  double pos_rmse = 0.0;   // rollout position error at the horizon
  double vel_rmse = 0.0;   // rollout velocity error at the horizon
  int segments = 0;
  int faults = 0;          // diverged rollouts, excluded from the aggregates
};

// Evaluate a model (xi = nullptr for the nominal closed loop) against
// recordings: acceleration by comparing the model's vdot at each recorded
// state with central differences of the recorded velocity; position and
// velocity by rolling the model out over `horizon` steps from each segment
// start. step_override > 0 re-rolls with that step while still comparing at
// matching times (must be a multiple of the recording step).
PredictionReport prediction_rmse(const std::vector<Trajectory>& data,
                                 const ResidualParams* xi, const DfbcGains& gains,
                                 const VehicleParams& params, int horizon = 25,
                                 double step_override = 0.0);

// Reference-trajectory statistics (for the comparison tables).
struct ReferenceStats {
  double mean_acc = 0.0;
  double max_acc = 0.0;
  double mean_jerk = 0.0;
  double max_jerk = 0.0;
};
ReferenceStats reference_stats(const std::vector<FlatReference>& refs);

// Rigid-body state implied by a flat reference sample with zero tracking
// error: position/velocity from the reference, attitude from the thrust
// direction, angular rate left zero. Used to evaluate residual magnitude
// along a reference path.
Vec12 flat_state(const FlatReference& ref, const VehicleParams& params);

// Mean m*||d_xi|| along a reference path, using flat states.
double mean_residual_force_along(const std::vector<FlatReference>& refs,
                                 const ResidualParams& xi, const VehicleParams& params);

// Head-to-head comparison of the minimum-snap baseline and the
// minimum-residual trajectory over one waypoint course with matched total
// time, each flown by both controller variants on the drag-corrupted plant.
struct CourseComparison {
  double total_time = 0.0;
  double residual_force_minsnap = 0.0;    // mean N along each reference
  double residual_force_minres = 0.0;
  double err_baseline_minsnap = 0.0;      // mean positional error, m
  double err_baseline_minres = 0.0;
  double err_neural_minsnap = 0.0;
  double err_neural_minres = 0.0;
  ReferenceStats stats_minsnap;
  ReferenceStats stats_minres;
  bool solver_converged = false;
};

struct CompareConfig {
  int N = 100;               // optimizer nodes
  double lambda_r = 0.1;
  double waypoint_radius = 0.10;
  double dt = 0.02;
  int substeps = 10;
  SolveOptions solve;
};

CourseComparison compare_trajectories(const WaypointSet& course, const ResidualParams& xi,
                                      const DfbcGains& gains, const VehicleParams& params,
                                      const DragModel& drag, const CompareConfig& cfg);

// Solver timing sweep across node counts and dynamics modes.
struct BenchRecord {
  int N = 0;
  DynamicsMode mode = DynamicsMode::kNominal;
  double wall_time_s = 0.0;
  int iterations = 0;
  double per_iteration_s = 0.0;
  double objective = 0.0;
  bool converged = false;
};

std::vector<BenchRecord> bench_solvers(const std::vector<int>& sizes,
                                       const std::vector<DynamicsMode>& modes,
                                       const ResidualParams& xi, const VehicleParams& params,
                                       std::uint64_t seed, const SolveOptions& opts);

}  // namespace cft

#endif  // CFT_METRICS_HPP
