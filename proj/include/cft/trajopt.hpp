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

#ifndef CFT_TRAJOPT_HPP
#define CFT_TRAJOPT_HPP

#include <optional>
#include <vector>

#include "cft/control.hpp"
#include "cft/minsnap.hpp"

namespace cft {

enum class DynamicsMode { kNominal, kAugmented };

using Vec12 = Eigen::Matrix<double, 12, 1>;

struct WaypointConstraint {
  int node = 0;       // strictly interior node index
  Vec3 center{Vec3::Zero()};
  double radius = 0.10;
};

// Direct multiple-shooting transcription: nodes 0..N-1 with N-1 intervals,
// decision variables are interior states, per-interval inputs, and per-
// interval step sizes. Boundary states are fixed rest states.
struct NlpProblem {
  int N = 100;
  DynamicsMode mode = DynamicsMode::kAugmented;
  ResidualParams xi;            // residual model; objective uses it in both modes
  double lambda_r = 0.1;
  Vec12 x0 = Vec12::Zero();
  Vec12 xN = Vec12::Zero();
  std::vector<WaypointConstraint> waypoints;
  double u_lb = 0.0;
  double u_ub = 8.0;
  double h_lb = 0.005;
  double h_ub = 0.05;
  std::optional<double> total_time;  // equality sum(h) = T when set
  VehicleParams vp;

  int free_state_count() const { return N - 2; }
  int interval_count() const { return N - 1; }
  int decision_dim() const { return 12 * (N - 2) + 5 * (N - 1); }
};

struct NlpSolution {
  std::vector<Vec12> states;   // N
  std::vector<Vec4> inputs;    // N-1
  std::vector<double> steps;   // N-1
  double objective = 0.0;
  double max_violation = 0.0;
  int iterations = 0;          // total inner (projected Newton) iterations
  int outer_iterations = 0;
  bool converged = false;
  double kkt_residual = 0.0;
  double wall_time_s = 0.0;
};

struct SolveOptions {
  double tol_feas = 1e-6;
  // Stationarity gate on the projected augmented-Lagrangian gradient. The
  // objective is nearly flat along many control directions (its curvature
  // there is 2*lambda_r*h, about 1e-3 at the defaults), so gradient scales
  // below ~1e-4 buy no solution quality on generic courses. The reported
  // kkt_residual additionally uses least-squares multiplier estimates;
  // problems with an analytically known optimum (hover) reach 1e-9 via the
  // terminal polish and tests pin them tighter.
  double tol_stat = 1e-4;
  int max_outer = 40;
  int max_inner = 3000;
  double rho0 = 10.0;
  bool verbose = false;
};

// Build the minimum-residual NLP over a waypoint course. Interior waypoint
// nodes are assigned by their arc-length share of the waypoint polyline.
NlpProblem build_problem(const WaypointSet& course, int N, DynamicsMode mode,
                         const ResidualParams& xi, double lambda_r,
                         const VehicleParams& vp,
                         std::optional<double> total_time = std::nullopt,
                         double waypoint_radius = 0.10);

// Structured initial guess: positions linearly interpolated along the
// waypoint polyline, all other state entries zero, hover thrusts, constant
// step size clamped into bounds.
Eigen::VectorXd warm_start(const NlpProblem& problem);

// Augmented-Lagrangian solve with bound-projected Newton inner iterations on
// a block-sparse Gauss-Newton model, followed by a KKT polish for terminal
// accuracy. The reported KKT residual uses least-squares multiplier
// estimates. Always returns the best iterate with diagnostics, even on
// non-convergence.
NlpSolution solve(const NlpProblem& problem, const Eigen::VectorXd& guess,
                  const SolveOptions& opts = SolveOptions());

// Objective helpers (also used by evaluation code).
double residual_cost(const std::vector<Vec12>& states, const ResidualParams& xi);
double mean_residual_magnitude(const std::vector<Vec12>& states, const ResidualParams& xi,
                               double mass);

// NLP objective and gradient at a packed decision vector (exposed for
// finite-difference checks of the analytic derivatives).
double nlp_objective(const NlpProblem& problem, const Eigen::VectorXd& w);
Eigen::VectorXd nlp_objective_gradient(const NlpProblem& problem, const Eigen::VectorXd& w);
// Shooting defects stacked per interval (12 each), plus the optional
// total-time equality appended at the end.
Eigen::VectorXd nlp_constraints(const NlpProblem& problem, const Eigen::VectorXd& w);

// Pack/unpack between the solution layout and the decision vector.
Eigen::VectorXd pack_decision(const NlpProblem& problem, const std::vector<Vec12>& states,
                              const std::vector<Vec4>& inputs, const std::vector<double>& steps);
void unpack_decision(const NlpProblem& problem, const Eigen::VectorXd& w,
                     std::vector<Vec12>& states, std::vector<Vec4>& inputs,
                     std::vector<double>& steps);

// Open-loop dynamics used inside the shooting constraints (nominal or
// residual-augmented), with analytic Jacobians.
Vec12 open_loop_field(const NlpProblem& problem, const Vec12& x, const Vec4& u);
void open_loop_jacobians(const NlpProblem& problem, const Vec12& x, const Vec4& u,
                         Eigen::Matrix<double, 12, 12>& A, Eigen::Matrix<double, 12, 4>& B);

// One RK4 interval of the open-loop dynamics with sensitivities to the
// node state, input, and step size.
Vec12 shoot_interval(const NlpProblem& problem, const Vec12& x, const Vec4& u, double h,
                     Eigen::Matrix<double, 12, 12>* Jx = nullptr,
                     Eigen::Matrix<double, 12, 4>* Ju = nullptr,
                     Eigen::Matrix<double, 12, 1>* Jh = nullptr);

// Resample a converged solution onto a uniform grid as DFBC references.
// Acceleration comes from the nominal dynamics (never the augmented model),
// jerk from smoothed differencing of the acceleration samples.
std::vector<FlatReference> export_reference(const NlpSolution& solution,
                                            const VehicleParams& vp, double dt);

}  // namespace cft

#endif  // CFT_TRAJOPT_HPP
