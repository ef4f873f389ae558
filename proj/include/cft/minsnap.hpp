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

#ifndef CFT_MINSNAP_HPP
#define CFT_MINSNAP_HPP

#include <cstdint>
#include <vector>

#include "cft/control.hpp"

namespace cft {

struct Box {
  Vec3 lo{-2.0, -2.0, -1.0};
  Vec3 hi{2.0, 2.0, 1.0};
};

struct WaypointSet {
  std::vector<Vec3> points;
  std::vector<double> times;  // per-segment durations, size points-1

  double total_time() const;
  // Scale all segment durations so the trajectory lasts exactly t seconds.
  void rescale_total_time(double t);
};

// Piecewise degree-7 polynomial in local segment time.
struct PiecewisePoly {
  // coeffs[s] is 3x8: rows are axes, columns are powers t^0..t^7.
  std::vector<Eigen::Matrix<double, 3, 8>> coeffs;
  std::vector<double> durations;

  double total_time() const;
  // Analytic evaluation of the deriv-th time derivative at global time t.
  Vec3 eval(double t, int deriv = 0) const;
  // Integral of squared snap over the full trajectory.
  double snap_objective() const;
};

// Minimum-snap interpolation through the waypoints, rest-to-rest boundary,
// C4 continuity at interior knots, solved via the equality-constrained QP
// KKT system per axis.
PiecewisePoly solve_min_snap(const WaypointSet& wps);

// Sample flat-output references at a uniform step; derivatives come from
// the polynomial coefficients, not numeric differencing.
std::vector<FlatReference> sample_references(const PiecewisePoly& poly, double dt);

// Uniformly sampled waypoints with distance-proportional time allocation:
// segment time = decay * distance / nominal_speed. decay > 1 slows the
// trajectory down, < 1 makes it more aggressive.
WaypointSet random_waypoints(const Box& bounds, int n, std::uint64_t seed,
                             double nominal_speed = 2.0, double decay = 1.0);

}  // namespace cft

#endif  // CFT_MINSNAP_HPP
