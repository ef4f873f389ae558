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

#include <random>

#include "cft/control.hpp"

using namespace cft;

namespace {

std::mt19937_64 rng(7);

double uniform(double lo, double hi) {
  return lo + (hi - lo) * ((rng() >> 11) * (1.0 / 9007199254740992.0));
}

AugmentedState random_aug_state(double scale = 1.0) {
  AugmentedState xa;
  for (int i = 0; i < 3; ++i) {
    xa.x.p(i) = scale * uniform(-1, 1);
    xa.x.v(i) = scale * uniform(-1, 1);
    xa.x.theta(i) = 0.5 * scale * uniform(-1, 1);
    xa.x.omega(i) = scale * uniform(-1, 1);
    xa.z(i) = 0.3 * scale * uniform(-1, 1);
  }
  return xa;
}

FlatReference random_reference(double scale = 1.0) {
  FlatReference ref;
  for (int i = 0; i < 3; ++i) {
    ref.p(i) = scale * uniform(-1, 1);
    ref.v(i) = scale * uniform(-1, 1);
    ref.a(i) = scale * uniform(-1, 1);
    ref.j(i) = scale * uniform(-1, 1);
  }
  return ref;
}

// Keeps only trials where the controller stays clear of thrust saturation,
// so the Jacobian has no clamped (zeroed) rows.
bool unsaturated_trial(const AugmentedState& xa, const FlatReference& ref,
                       const DfbcGains& gains, const VehicleParams& vp) {
  const DfbcResult r = dfbc(xa, ref, gains, vp);
  if (r.saturated || r.degenerate) return false;
  for (int i = 0; i < 4; ++i)
    if (r.u(i) < vp.u_min + 0.05 || r.u(i) > vp.u_max - 0.05) return false;
  return true;
}

}  // namespace

TEST_CASE("hover is an equilibrium of the nominal closed loop") {
  VehicleParams vp;
  DfbcGains gains;
  AugmentedState xa;  // all zeros: level hover at the origin
  FlatReference ref;  // hover reference at the origin
  const DfbcResult res = dfbc(xa, ref, gains, vp);
  CHECK(!res.saturated);
  for (int i = 0; i < 4; ++i)
    CHECK(res.u(i) == doctest::Approx(vp.hover_thrust_per_motor()).epsilon(1e-12));
  const Vec15 xdot = nominal_closed_loop(xa, ref, gains, vp);
  CHECK(xdot.norm() < 1e-12);
}

TEST_CASE("position error raises thrust demand in the right direction") {
  VehicleParams vp;
  DfbcGains gains;
  AugmentedState xa;
  xa.x.p = Vec3(0, 0, 0.5);  // below the reference (z is down)
  FlatReference ref;
  const DfbcResult res = dfbc(xa, ref, gains, vp);
  // Climbing back up needs more total thrust than hover.
  CHECK(res.u.sum() > 4.0 * vp.hover_thrust_per_motor());
}

TEST_CASE("degenerate thrust direction takes the fallback instead of crashing") {
  VehicleParams vp;
  DfbcGains gains;
  AugmentedState xa;
  FlatReference ref;
  ref.a = Vec3(0, 0, vp.g);  // free-fall demand: zero desired thrust vector
  const DfbcResult res = dfbc(xa, ref, gains, vp);
  CHECK(res.degenerate);
  CHECK(res.u.allFinite());
}

TEST_CASE("controller jacobians match finite differences away from clamps") {
  VehicleParams vp;
  DfbcGains gains;
  const double eps = 1e-6;
  int tested = 0;
  for (int trial = 0; trial < 60 && tested < 15; ++trial) {
    const AugmentedState xa = random_aug_state(0.4);
    const FlatReference ref = random_reference(0.4);
    if (!unsaturated_trial(xa, ref, gains, vp)) continue;
    ++tested;

    const DfbcResult res = dfbc(xa, ref, gains, vp, Vec3::Zero(), true);
    const Vec15 xv = xa.vec();
    for (int i = 0; i < 15; ++i) {
      Vec15 xp = xv, xm = xv;
      xp(i) += eps;
      xm(i) -= eps;
      const DfbcResult rp = dfbc(AugmentedState::FromVec(xp), ref, gains, vp);
      const DfbcResult rm = dfbc(AugmentedState::FromVec(xm), ref, gains, vp);
      const Vec4 fd_u = (rp.u - rm.u) / (2 * eps);
      const Vec3 fd_z = (rp.z_dot - rm.z_dot) / (2 * eps);
      CHECK((res.du.col(i) - fd_u).norm() < 2e-4 * std::max(1.0, fd_u.norm()));
      CHECK((res.dz_dot.col(i) - fd_z).norm() < 2e-4 * std::max(1.0, fd_z.norm()));
    }
  }
  CHECK(tested >= 10);
}

TEST_CASE("hybrid closed-loop state jacobian matches finite differences") {
  VehicleParams vp;
  DfbcGains gains;
  const ResidualParams xi = init_params({6, 8, 3}, 3, 1.0);
  const double eps = 1e-6;
  int tested = 0;
  for (int trial = 0; trial < 40 && tested < 8; ++trial) {
    const AugmentedState xa = random_aug_state(0.4);
    const FlatReference ref = random_reference(0.4);
    if (!unsaturated_trial(xa, ref, gains, vp)) continue;
    ++tested;

    Mat15 A;
    const Vec15 f0 = hybrid_closed_loop_jacobian(xa, ref, &xi, gains, vp, A);
    CHECK((f0 - hybrid_closed_loop(xa, ref, xi, gains, vp)).norm() < 1e-12);

    const Vec15 xv = xa.vec();
    for (int i = 0; i < 15; ++i) {
      Vec15 xp = xv, xm = xv;
      xp(i) += eps;
      xm(i) -= eps;
      const Vec15 fd = (hybrid_closed_loop(AugmentedState::FromVec(xp), ref, xi, gains, vp) -
                        hybrid_closed_loop(AugmentedState::FromVec(xm), ref, xi, gains, vp)) /
                       (2 * eps);
      CHECK((A.col(i) - fd).norm() < 2e-4 * std::max(1.0, fd.norm()));
    }
  }
  CHECK(tested >= 5);
}

TEST_CASE("nominal closed loop equals hybrid with a zero residual") {
  VehicleParams vp;
  DfbcGains gains;
  ResidualParams xi = init_params({6, 8, 3}, 5, 0.1);
  xi.theta.setZero();
  for (int trial = 0; trial < 10; ++trial) {
    const AugmentedState xa = random_aug_state(0.5);
    const FlatReference ref = random_reference(0.5);
    const Vec15 a = nominal_closed_loop(xa, ref, gains, vp);
    const Vec15 b = hybrid_closed_loop(xa, ref, xi, gains, vp);
    CHECK((a - b).norm() < 1e-14);
  }
}

TEST_CASE("residual field from drag matches the vehicle-module drag") {
  DragModel drag;
  drag.d = Vec3(0.3, 0.3, 0.15);
  const ResidualField field = residual_from_drag(drag);
  const AugmentedState xa = random_aug_state(1.0);
  State s;
  s.v = xa.x.v;
  s.theta = xa.x.theta;
  Mat3 dv, dtheta;
  const Vec3 d = field(xa.x.v, xa.x.theta, &dv, &dtheta);
  CHECK((d - drag_acceleration(s, drag)).norm() < 1e-14);
  Mat3 dv2, dtheta2;
  drag_jacobians(s, drag, dv2, dtheta2);
  CHECK((dv - dv2).norm() < 1e-14);
  CHECK((dtheta - dtheta2).norm() < 1e-14);
}

TEST_CASE("parameter jacobian and vjp agree and match finite differences") {
  VehicleParams vp;
  DfbcGains gains;
  const ResidualParams xi = init_params({6, 8, 3}, 11, 1.0);
  const AugmentedState xa = random_aug_state(0.5);
  const FlatReference ref = random_reference(0.5);

  Eigen::MatrixXd P;
  hybrid_closed_loop_param_jacobian(xa, xi, P);
  REQUIRE(P.rows() == 15);
  REQUIRE(P.cols() == xi.theta.size());

  // Only the velocity-derivative rows depend on the parameters.
  CHECK(P.topRows(3).norm() == 0.0);
  CHECK(P.middleRows(6, 9).norm() == 0.0);

  const double eps = 1e-6;
  for (int i = 0; i < xi.theta.size(); i += 5) {
    ResidualParams xp = xi, xm = xi;
    xp.theta(i) += eps;
    xm.theta(i) -= eps;
    const Vec15 fd = (hybrid_closed_loop(xa, ref, xp, gains, vp) -
                      hybrid_closed_loop(xa, ref, xm, gains, vp)) /
                     (2 * eps);
    CHECK((P.col(i) - fd).norm() < 1e-7);
  }

  Vec15 cot;
  for (int i = 0; i < 15; ++i) cot(i) = uniform(-1, 1);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(xi.theta.size());
  hybrid_closed_loop_param_vjp(xa, xi, cot, grad);
  CHECK((grad.transpose() - cot.transpose() * P).norm() < 1e-12);
}

TEST_CASE("integrator anti-windup freezes the integrator at its limit") {
  VehicleParams vp;
  DfbcGains gains;
  AugmentedState xa;
  xa.z = Vec3::Constant(gains.integrator_limit);  // saturated integrator
  FlatReference ref;
  // A positive rate error would push the integrator further out; the
  // anti-windup gate must zero its derivative.
  xa.x.omega = Vec3(-5.0, -5.0, -5.0);
  const DfbcResult res = dfbc(xa, ref, gains, vp);
  for (int i = 0; i < 3; ++i) CHECK(res.z_dot(i) == 0.0);
  // Pulled back toward the interior the integrator must move again.
  xa.x.omega = Vec3(5.0, 5.0, 5.0);
  const DfbcResult res2 = dfbc(xa, ref, gains, vp);
  for (int i = 0; i < 3; ++i) CHECK(res2.z_dot(i) < 0.0);
}
