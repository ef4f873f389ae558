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

#include "cft/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace cft {

namespace {

Vec15 model_field(const Vec15& x, const FlatReference& ref, const ResidualParams* xi,
                  const DfbcGains& gains, const VehicleParams& params) {
  const AugmentedState xa = AugmentedState::FromVec(x);
  return xi ? hybrid_closed_loop(xa, ref, *xi, gains, params)
            : nominal_closed_loop(xa, ref, gains, params);
}

}  // namespace

PredictionReport prediction_rmse(const std::vector<Trajectory>& data,
                                 const ResidualParams* xi, const DfbcGains& gains,
                                 const VehicleParams& params, int horizon,
                                 double step_override) {
  PredictionReport rep;
  double acc_sq = 0.0;
  std::size_t acc_n = 0;
  double pos_sq = 0.0, vel_sq = 0.0;
  std::size_t roll_n = 0;

  for (const auto& traj : data) {
    const int n = static_cast<int>(traj.states.size());
    const double h = traj.h;

    // One-step acceleration prediction against central differences of the
    // recorded velocity.
    for (int k = 1; k + 1 < n; ++k) {
      const Vec3 a_rec =
          (traj.states[k + 1].segment<3>(3) - traj.states[k - 1].segment<3>(3)) / (2.0 * h);
      const Vec3 a_mod =
          model_field(traj.states[k], traj.refs[k], xi, gains, params).segment<3>(3);
      acc_sq += (a_mod - a_rec).squaredNorm();
      acc_n += 3;
    }

    // Multi-step rollouts from non-overlapping segment starts.
    const double step = step_override > 0.0 ? step_override : h;
    const int ratio = std::max(1, static_cast<int>(std::lround(step / h)));
    if (std::abs(ratio * h - step) > 1e-12)
      throw std::invalid_argument("prediction_rmse: step must be a multiple of the data step");
    const int steps = horizon / ratio;
    if (steps < 1) throw std::invalid_argument("prediction_rmse: horizon shorter than step");

    for (int start = 0; start + horizon < n; start += horizon) {
      ++rep.segments;
      try {
        Vec15 x = traj.states[start];
        for (int s = 0; s < steps; ++s) {
          const FlatReference& ref = traj.refs[start + s * ratio];
          const Vec15 k1 = model_field(x, ref, xi, gains, params);
          const Vec15 k2 = model_field(x + 0.5 * step * k1, ref, xi, gains, params);
          const Vec15 k3 = model_field(x + 0.5 * step * k2, ref, xi, gains, params);
          const Vec15 k4 = model_field(x + step * k3, ref, xi, gains, params);
          x += (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
          if (!x.allFinite()) throw RolloutFault("prediction_rmse: rollout diverged", s);
        }
        const Vec15& truth = traj.states[start + steps * ratio];
        pos_sq += (x.head<3>() - truth.head<3>()).squaredNorm();
        vel_sq += (x.segment<3>(3) - truth.segment<3>(3)).squaredNorm();
        roll_n += 3;
      } catch (const RolloutFault&) {
        ++rep.faults;
      } catch (const SingularEulerError&) {
        ++rep.faults;
      }
    }
  }

  rep.acc_rmse = acc_n ? std::sqrt(acc_sq / static_cast<double>(acc_n)) : 0.0;
  rep.pos_rmse = roll_n ? std::sqrt(pos_sq / static_cast<double>(roll_n)) : 0.0;
  rep.vel_rmse = roll_n ? std::sqrt(vel_sq / static_cast<double>(roll_n)) : 0.0;
  return rep;
}

ReferenceStats reference_stats(const std::vector<FlatReference>& refs) {
  ReferenceStats st;
  if (refs.empty()) return st;
  for (const auto& r : refs) {
    const double a = r.a.norm();
    const double j = r.j.norm();
    st.mean_acc += a;
    st.mean_jerk += j;
    st.max_acc = std::max(st.max_acc, a);
    st.max_jerk = std::max(st.max_jerk, j);
  }
  st.mean_acc /= static_cast<double>(refs.size());
  st.mean_jerk /= static_cast<double>(refs.size());
  return st;
}

Vec12 flat_state(const FlatReference& ref, const VehicleParams& params) {
  Vec12 x = Vec12::Zero();
  x.head<3>() = ref.p;
  x.segment<3>(3) = ref.v;
  // Thrust direction for zero tracking error and zero yaw.
  Vec3 zb = Vec3(0, 0, params.g) - ref.a;
  const double n = zb.norm();
  if (n > 1e-6) {
    zb /= n;
    x(6) = std::asin(std::min(std::max(-zb(1), -1.0), 1.0));  // roll
    x(7) = std::atan2(zb(0), zb(2));                          // pitch
  }
  return x;
}

double mean_residual_force_along(const std::vector<FlatReference>& refs,
                                 const ResidualParams& xi, const VehicleParams& params) {
  std::vector<Vec12> states;
  states.reserve(refs.size());
  for (const auto& r : refs) states.push_back(flat_state(r, params));
  return mean_residual_magnitude(states, xi, params.m);
}

CourseComparison compare_trajectories(const WaypointSet& course, const ResidualParams& xi,
                                      const DfbcGains& gains, const VehicleParams& params,
                                      const DragModel& drag, const CompareConfig& cfg) {
  CourseComparison out;
  out.total_time = course.total_time();

  const PiecewisePoly poly = solve_min_snap(course);
  const auto refs_ms = sample_references(poly, cfg.dt);

  NlpProblem problem =
      build_problem(course, cfg.N, DynamicsMode::kAugmented, xi, cfg.lambda_r, params,
                    out.total_time, cfg.waypoint_radius);
  const NlpSolution sol = solve(problem, warm_start(problem), cfg.solve);
  out.solver_converged = sol.converged;
  if (!sol.converged)
    throw std::runtime_error("compare_trajectories: minimum-residual solve did not converge");
  const auto refs_mr = export_reference(sol, params, cfg.dt);

  out.residual_force_minsnap = mean_residual_force_along(refs_ms, xi, params);
  out.residual_force_minres = mean_residual_force_along(refs_mr, xi, params);
  out.stats_minsnap = reference_stats(refs_ms);
  out.stats_minres = reference_stats(refs_mr);

  SimOptions sim_opts;
  sim_opts.dt = cfg.dt;
  sim_opts.substeps = cfg.substeps;
  sim_opts.drag = drag;
  auto track = [&](const std::vector<FlatReference>& refs, ControllerVariant variant) {
    Vec15 x0 = Vec15::Zero();
    x0.head<3>() = refs.front().p;
    return mean_position_error(
        simulate_tracking(refs, variant, xi, gains, params, sim_opts, x0));
  };
  out.err_baseline_minsnap = track(refs_ms, ControllerVariant::kBaseline);
  out.err_baseline_minres = track(refs_mr, ControllerVariant::kBaseline);
  out.err_neural_minsnap = track(refs_ms, ControllerVariant::kNeuralFeedforward);
  out.err_neural_minres = track(refs_mr, ControllerVariant::kNeuralFeedforward);
  return out;
}

std::vector<BenchRecord> bench_solvers(const std::vector<int>& sizes,
                                       const std::vector<DynamicsMode>& modes,
                                       const ResidualParams& xi, const VehicleParams& params,
                                       std::uint64_t seed, const SolveOptions& opts) {
  std::vector<BenchRecord> records;
  for (int N : sizes) {
    const WaypointSet course = random_waypoints(Box{}, 5, seed);
    for (DynamicsMode mode : modes) {
      NlpProblem problem = build_problem(course, N, mode, xi, 0.1, params);
      const NlpSolution sol = solve(problem, warm_start(problem), opts);
      BenchRecord rec;
      rec.N = N;
      rec.mode = mode;
      rec.wall_time_s = sol.wall_time_s;
      rec.iterations = sol.iterations;
      rec.per_iteration_s = sol.wall_time_s / std::max(1, sol.iterations);
      rec.objective = sol.objective;
      rec.converged = sol.converged;
      records.push_back(rec);
    }
  }
  return records;
}

}  // namespace cft
