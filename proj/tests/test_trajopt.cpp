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

#include <doctest.h>

#include <cmath>
#include <random>

#include "cft/trajopt.hpp"

using namespace cft;

namespace {

ResidualParams zero_residual(const std::vector<int>& layout = {6, 8, 3}) {
  ResidualParams xi = init_params(layout, 0, 0.1);
  xi.theta.setZero();
  return xi;
}

WaypointSet two_point_course() {
  WaypointSet wps;
  wps.points = {Vec3(0, 0, 0), Vec3(1.5, 0.5, -0.5)};
  wps.times = {1.0};
  return wps;
}

WaypointSet hover_course() {
  WaypointSet wps;
  wps.points = {Vec3(0.3, -0.2, -0.5), Vec3(0.3, -0.2, -0.5)};
  wps.times = {1.0};
  return wps;
}

Eigen::VectorXd perturbed_warm_start(const NlpProblem& p, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  auto uniform = [&]() { return (rng() >> 11) * (1.0 / 9007199254740992.0) * 2.0 - 1.0; };
  Eigen::VectorXd w = warm_start(p);
  for (int i = 0; i < w.size(); ++i) w(i) += scale * uniform();
  // Keep the step sizes valid.
  const int h_off = 12 * (p.N - 2) + 4 * (p.N - 1);
  for (int k = 0; k < p.N - 1; ++k)
    w(h_off + k) = std::min(std::max(w(h_off + k), p.h_lb), p.h_ub);
  return w;
}

}  // namespace

TEST_CASE("decision vector dimensions follow the transcription layout") {
  const ResidualParams xi = zero_residual();
  NlpProblem p = build_problem(two_point_course(), 20, DynamicsMode::kNominal, xi, 0.1,
                               VehicleParams{});
  CHECK(p.decision_dim() == 12 * 18 + 5 * 19);
  CHECK(p.free_state_count() == 18);
  CHECK(p.interval_count() == 19);
}

TEST_CASE("warm start respects all box constraints and round-trips packing") {
  const ResidualParams xi = zero_residual();
  const VehicleParams vp;
  NlpProblem p = build_problem(two_point_course(), 15, DynamicsMode::kNominal, xi, 0.1, vp);
  const Eigen::VectorXd w = warm_start(p);

  std::vector<Vec12> states;
  std::vector<Vec4> inputs;
  std::vector<double> steps;
  unpack_decision(p, w, states, inputs, steps);
  for (const auto& u : inputs) {
    for (int i = 0; i < 4; ++i) {
      CHECK(u(i) >= p.u_lb);
      CHECK(u(i) <= p.u_ub);
      CHECK(u(i) == doctest::Approx(vp.hover_thrust_per_motor()));
    }
  }
  for (double h : steps) {
    CHECK(h >= p.h_lb);
    CHECK(h <= p.h_ub);
  }
  // Positions interpolate the straight segment; velocities stay zero.
  for (int k = 0; k < p.N; ++k) {
    const double s = static_cast<double>(k) / (p.N - 1);
    const Vec3 expect = (1 - s) * p.x0.head<3>() + s * p.xN.head<3>();
    CHECK((states[k].head<3>() - expect).norm() < 1e-9);
    CHECK(states[k].tail<9>().norm() == 0.0);
  }
  CHECK((pack_decision(p, states, inputs, steps) - w).norm() == 0.0);
}

TEST_CASE("hover warm start objective is the pure control regularization") {
  const ResidualParams xi = zero_residual();
  const VehicleParams vp;
  NlpProblem p = build_problem(hover_course(), 12, DynamicsMode::kAugmented, xi, 0.1, vp);
  const Eigen::VectorXd w = warm_start(p);
  const double hover = vp.hover_thrust_per_motor();
  // Each interval contributes h * lambda_r * ||u||^2 with h = 0.01 at the
  // warm start; the zero residual adds nothing.
  const double expect = 0.01 * 0.1 * (p.N - 1) * 4.0 * hover * hover;
  CHECK(nlp_objective(p, w) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("objective gradient matches finite differences") {
  const ResidualParams xi = init_params({6, 8, 3}, 21, 1.0);
  NlpProblem p = build_problem(two_point_course(), 8, DynamicsMode::kAugmented, xi, 0.1,
                               VehicleParams{});
  const Eigen::VectorXd w = perturbed_warm_start(p, 3, 0.05);
  const Eigen::VectorXd g = nlp_objective_gradient(p, w);
  const double eps = 1e-6;
  for (int i = 0; i < w.size(); i += 4) {
    Eigen::VectorXd wp = w, wm = w;
    wp(i) += eps;
    wm(i) -= eps;
    const double fd = (nlp_objective(p, wp) - nlp_objective(p, wm)) / (2 * eps);
    CHECK(std::abs(g(i) - fd) < 1e-5 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("shooting sensitivities match finite differences") {
  const ResidualParams xi = init_params({6, 8, 3}, 33, 1.0);
  NlpProblem p = build_problem(two_point_course(), 8, DynamicsMode::kAugmented, xi, 0.1,
                               VehicleParams{});
  Vec12 x = Vec12::Zero();
  x << 0.2, -0.1, -0.4, 0.5, 0.3, -0.2, 0.1, -0.15, 0.2, 0.4, -0.3, 0.2;
  Vec4 u(2.1, 2.6, 2.4, 2.2);
  const double h = 0.02;

  Eigen::Matrix<double, 12, 12> Jx;
  Eigen::Matrix<double, 12, 4> Ju;
  Eigen::Matrix<double, 12, 1> Jh;
  const Vec12 F = shoot_interval(p, x, u, h, &Jx, &Ju, &Jh);
  CHECK((F - shoot_interval(p, x, u, h)).norm() == 0.0);

  const double eps = 1e-6;
  for (int i = 0; i < 12; ++i) {
    Vec12 xp = x, xm = x;
    xp(i) += eps;
    xm(i) -= eps;
    const Vec12 fd = (shoot_interval(p, xp, u, h) - shoot_interval(p, xm, u, h)) / (2 * eps);
    CHECK((Jx.col(i) - fd).norm() < 1e-7);
  }
  for (int i = 0; i < 4; ++i) {
    Vec4 up = u, um = u;
    up(i) += eps;
    um(i) -= eps;
    const Vec12 fd = (shoot_interval(p, x, up, h) - shoot_interval(p, x, um, h)) / (2 * eps);
    CHECK((Ju.col(i) - fd).norm() < 1e-7);
  }
  const Vec12 fdh =
      (shoot_interval(p, x, u, h + eps) - shoot_interval(p, x, u, h - eps)) / (2 * eps);
  CHECK((Jh - fdh).norm() < 1e-7);
}

TEST_CASE("hover-to-hover converges to the analytic fixed point") {
  const ResidualParams xi = zero_residual();
  const VehicleParams vp;
  NlpProblem p = build_problem(hover_course(), 10, DynamicsMode::kNominal, xi, 0.1, vp);
  const NlpSolution sol = solve(p, warm_start(p));
  REQUIRE(sol.converged);
  CHECK(sol.max_violation <= 1e-6);
  const double hover = vp.hover_thrust_per_motor();
  for (const auto& u : sol.inputs)
    for (int i = 0; i < 4; ++i) CHECK(std::abs(u(i) - hover) <= 1e-6);
  for (const auto& x : sol.states) {
    CHECK((x.head<3>() - p.x0.head<3>()).norm() < 1e-6);
    CHECK(x.tail<9>().norm() < 1e-6);
  }
}

TEST_CASE("zero residual makes nominal and augmented modes coincide") {
  const ResidualParams xi = zero_residual();
  const VehicleParams vp;
  const WaypointSet course = two_point_course();
  // N = 24 gives the 1.66 m dash a generous time budget (T up to 1.15 s);
  // tighter budgets push the course toward its minimum-time boundary where
  // the solve is legitimately hard.
  NlpProblem pn = build_problem(course, 24, DynamicsMode::kNominal, xi, 0.1, vp);
  NlpProblem pa = build_problem(course, 24, DynamicsMode::kAugmented, xi, 0.1, vp);
  const Eigen::VectorXd w = perturbed_warm_start(pn, 5, 0.02);
  CHECK(nlp_objective(pn, w) == nlp_objective(pa, w));
  CHECK((nlp_constraints(pn, w) - nlp_constraints(pa, w)).norm() == 0.0);
  const NlpSolution sn = solve(pn, warm_start(pn));
  const NlpSolution sa = solve(pa, warm_start(pa));
  REQUIRE(sn.converged);
  REQUIRE(sa.converged);
  CHECK(std::abs(sn.objective - sa.objective) < 1e-12);
  for (std::size_t k = 0; k < sn.states.size(); ++k)
    CHECK((sn.states[k] - sa.states[k]).norm() < 1e-12);
}

TEST_CASE("converged solutions are feasible, in bounds, and time-matched") {
  const ResidualParams xi = init_params({6, 8, 3}, 44, 0.5);
  const VehicleParams vp;
  WaypointSet course;
  course.points = {Vec3(0, 0, 0), Vec3(1.0, 0.4, -0.3), Vec3(1.8, -0.4, -0.6)};
  course.times = {1.0, 1.0};
  const double T = 2.0;
  NlpProblem p = build_problem(course, 60, DynamicsMode::kAugmented, xi, 0.1, vp, T);
  const NlpSolution sol = solve(p, warm_start(p));
  REQUIRE(sol.converged);
  CHECK(sol.max_violation <= 1e-6);
  double sum_h = 0.0;
  for (double h : sol.steps) {
    sum_h += h;
    CHECK(h >= p.h_lb - 1e-12);
    CHECK(h <= p.h_ub + 1e-12);
  }
  CHECK(std::abs(sum_h - T) <= 1e-6);
  for (const auto& u : sol.inputs)
    for (int i = 0; i < 4; ++i) {
      CHECK(u(i) >= p.u_lb - 1e-12);
      CHECK(u(i) <= p.u_ub + 1e-12);
    }
  // Interior waypoint ball.
  REQUIRE(p.waypoints.size() == 1);
  const auto& wp = p.waypoints[0];
  CHECK((sol.states[wp.node].head<3>() - wp.center).norm() <= wp.radius + 1e-6);
}

TEST_CASE("residual cost helpers match naive recomputation") {
  const ResidualParams xi = init_params({6, 8, 3}, 55, 1.0);
  std::vector<Vec12> states;
  std::mt19937_64 rng(9);
  for (int k = 0; k < 30; ++k) {
    Vec12 x;
    for (int i = 0; i < 12; ++i) x(i) = ((rng() >> 11) * (1.0 / 9007199254740992.0)) * 2 - 1;
    states.push_back(x);
  }
  double cost = 0.0, mean = 0.0;
  for (const auto& x : states) {
    Eigen::Matrix<double, 6, 1> f;
    f << x.segment<3>(3), x.segment<3>(6);
    const Vec3 d = mlp_forward(f, xi);
    cost += d.squaredNorm();
    mean += 1.0 * d.norm();
  }
  mean /= 30.0;
  CHECK(std::abs(residual_cost(states, xi) - cost) < 1e-12 * std::max(1.0, cost));
  CHECK(std::abs(mean_residual_magnitude(states, xi, 1.0) - mean) < 1e-12);
  CHECK(residual_cost(states, zero_residual()) == 0.0);
}

TEST_CASE("exported reference of the hover solution is constant at the hover point") {
  const ResidualParams xi = zero_residual();
  const VehicleParams vp;
  NlpProblem p = build_problem(hover_course(), 10, DynamicsMode::kNominal, xi, 0.1, vp);
  const NlpSolution sol = solve(p, warm_start(p));
  REQUIRE(sol.converged);
  const auto refs = export_reference(sol, vp, 0.01);
  CHECK(refs.size() >= 2);
  for (const auto& r : refs) {
    CHECK((r.p - p.x0.head<3>()).norm() < 1e-6);
    CHECK(r.v.norm() < 1e-6);
    CHECK(r.a.norm() < 1e-5);
  }
  NlpSolution bad = sol;
  bad.converged = false;
  CHECK_THROWS(export_reference(bad, vp, 0.01));
}

TEST_CASE("exported reference interpolates the solution node positions") {
  const ResidualParams xi = zero_residual();
  const VehicleParams vp;
  NlpProblem p = build_problem(two_point_course(), 40, DynamicsMode::kNominal, xi, 0.1, vp);
  const NlpSolution sol = solve(p, warm_start(p));
  REQUIRE(sol.converged);
  const double dt = 0.005;
  const auto refs = export_reference(sol, vp, dt);
  double t = 0.0;
  for (std::size_t k = 0; k < sol.states.size(); ++k) {
    const int idx = static_cast<int>(std::round(t / dt));
    if (idx < static_cast<int>(refs.size()) && std::abs(idx * dt - t) < 1e-9)
      CHECK((refs[idx].p - sol.states[k].head<3>()).norm() < 1e-9);
    if (k < sol.steps.size()) t += sol.steps[k];
  }
}

TEST_CASE("invalid problems are rejected at construction") {
  const ResidualParams xi = zero_residual();
  CHECK_THROWS(build_problem(two_point_course(), 2, DynamicsMode::kNominal, xi, 0.1,
                             VehicleParams{}));
  WaypointSet one;
  one.points = {Vec3::Zero()};
  CHECK_THROWS(build_problem(one, 10, DynamicsMode::kNominal, xi, 0.1, VehicleParams{}));
  // Unrepresentable matched time.
  CHECK_THROWS(build_problem(two_point_course(), 10, DynamicsMode::kNominal, xi, 0.1,
                             VehicleParams{}, 100.0));
}
