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

#include "cft/vehicle.hpp"

#include <cmath>

namespace cft {

namespace {
constexpr double kHalfPi = 1.5707963267948966;
}

Mat3 rotation_matrix(const Vec3& theta) {
  const double cr = std::cos(theta.x()), sr = std::sin(theta.x());
  const double cp = std::cos(theta.y()), sp = std::sin(theta.y());
  const double cy = std::cos(theta.z()), sy = std::sin(theta.z());
  Mat3 R;
  // Rz(yaw) * Ry(pitch) * Rx(roll)
  R << cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr,
       sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr,
       -sp,     cp * sr,               cp * cr;
  return R;
}

void rotation_matrix_derivatives(const Vec3& theta, Mat3 dR[3]) {
  const double cr = std::cos(theta.x()), sr = std::sin(theta.x());
  const double cp = std::cos(theta.y()), sp = std::sin(theta.y());
  const double cy = std::cos(theta.z()), sy = std::sin(theta.z());
  dR[0] << 0, cy * sp * cr + sy * sr, -cy * sp * sr + sy * cr,
           0, sy * sp * cr - cy * sr, -sy * sp * sr - cy * cr,
           0, cp * cr,                -cp * sr;
  dR[1] << -cy * sp, cy * cp * sr, cy * cp * cr,
           -sy * sp, sy * cp * sr, sy * cp * cr,
           -cp,      -sp * sr,     -sp * cr;
  dR[2] << -sy * cp, -sy * sp * sr - cy * cr, -sy * sp * cr + cy * sr,
           cy * cp,  cy * sp * sr - sy * cr,  cy * sp * cr + sy * sr,
           0,        0,                       0;
}

Vec3 body_z_axis(const Vec3& theta) {
  const double cr = std::cos(theta.x()), sr = std::sin(theta.x());
  const double cp = std::cos(theta.y()), sp = std::sin(theta.y());
  const double cy = std::cos(theta.z()), sy = std::sin(theta.z());
  return Vec3(cy * sp * cr + sy * sr, sy * sp * cr - cy * sr, cp * cr);
}

Mat3 body_z_axis_jacobian(const Vec3& theta) {
  const double cr = std::cos(theta.x()), sr = std::sin(theta.x());
  const double cp = std::cos(theta.y()), sp = std::sin(theta.y());
  const double cy = std::cos(theta.z()), sy = std::sin(theta.z());
  Mat3 Jz;
  Jz.col(0) = Vec3(-cy * sp * sr + sy * cr, -sy * sp * sr - cy * cr, -cp * sr);
  Jz.col(1) = Vec3(cy * cp * cr, sy * cp * cr, -sp * cr);
  Jz.col(2) = Vec3(-sy * sp * cr + cy * sr, cy * sp * cr + sy * sr, 0.0);
  return Jz;
}

Mat3 euler_rate_matrix(const Vec3& theta) {
  const double cr = std::cos(theta.x()), sr = std::sin(theta.x());
  const double cp = std::cos(theta.y());
  if (std::abs(theta.y()) >= kHalfPi || std::abs(cp) < 1e-9)
    throw SingularEulerError("euler mapping singular: |pitch| >= pi/2");
  const double tp = std::tan(theta.y());
  Mat3 W;
  W << 1, sr * tp, cr * tp,
       0, cr, -sr,
       0, sr / cp, cr / cp;
  return W;
}

Mat3 euler_rate_product_jacobian(const Vec3& theta, const Vec3& omega) {
  const double cr = std::cos(theta.x()), sr = std::sin(theta.x());
  const double cp = std::cos(theta.y()), sp = std::sin(theta.y());
  if (std::abs(theta.y()) >= kHalfPi || std::abs(cp) < 1e-9)
    throw SingularEulerError("euler mapping singular: |pitch| >= pi/2");
  const double tp = sp / cp;
  Mat3 J = Mat3::Zero();
  // dW/droll * omega
  J.col(0) = Vec3(cr * tp * omega.y() - sr * tp * omega.z(),
                  -sr * omega.y() - cr * omega.z(),
                  cr / cp * omega.y() - sr / cp * omega.z());
  // dW/dpitch * omega
  const double sec2 = 1.0 / (cp * cp);
  J.col(1) = Vec3(sr * sec2 * omega.y() + cr * sec2 * omega.z(),
                  0.0,
                  sr * sp * sec2 * omega.y() + cr * sp * sec2 * omega.z());
  return J;
}

Eigen::Matrix<double, 12, 1> nominal_derivative(const State& x, const MotorInput& u,
                                                const VehicleParams& params) {
  const Mat4 C = params.allocation();
  const Vec4 wrench = C * u.thrusts;
  const double T = wrench(0);
  const Vec3 tau = wrench.tail<3>();

  Eigen::Matrix<double, 12, 1> dx;
  dx.segment<3>(0) = x.v;
  dx.segment<3>(3) = -(T / params.m) * body_z_axis(x.theta) + Vec3(0, 0, params.g);
  dx.segment<3>(6) = euler_rate_matrix(x.theta) * x.omega;
  const Vec3 Jw = params.J.cwiseProduct(x.omega);
  dx.segment<3>(9) = (-x.omega.cross(Jw) + tau).cwiseQuotient(params.J);
  return dx;
}

void nominal_jacobians(const State& x, const MotorInput& u, const VehicleParams& params,
                       Eigen::Matrix<double, 12, 12>& A, Eigen::Matrix<double, 12, 4>& B) {
  const Mat4 C = params.allocation();
  const Vec4 wrench = C * u.thrusts;
  const double T = wrench(0);

  A.setZero();
  B.setZero();
  // pdot = v
  A.block<3, 3>(0, 3).setIdentity();
  // vdot = -(T/m) R e3 + g e3
  A.block<3, 3>(3, 6) = -(T / params.m) * body_z_axis_jacobian(x.theta);
  B.block<3, 4>(3, 0) = -(1.0 / params.m) * body_z_axis(x.theta) * C.row(0);
  // thetadot = W omega
  A.block<3, 3>(6, 6) = euler_rate_product_jacobian(x.theta, x.omega);
  A.block<3, 3>(6, 9) = euler_rate_matrix(x.theta);
  // omegadot = J^-1 (-omega x J omega + tau)
  const Vec3 Jw = params.J.cwiseProduct(x.omega);
  const Mat3 Jinv = params.J.cwiseInverse().asDiagonal();
  A.block<3, 3>(9, 9) = Jinv * (skew(Jw) - skew(x.omega) * Mat3(params.J.asDiagonal()));
  B.block<3, 4>(9, 0) = Jinv * C.bottomRows<3>();
}

Vec3 drag_acceleration(const State& x, const DragModel& drag) {
  const Mat3 R = rotation_matrix(x.theta);
  return -R * drag.d.asDiagonal() * R.transpose() * x.v;
}

void drag_jacobians(const State& x, const DragModel& drag, Mat3& dv, Mat3& dtheta) {
  const Mat3 R = rotation_matrix(x.theta);
  const Mat3 D = drag.d.asDiagonal();
  dv = -R * D * R.transpose();
  Mat3 dR[3];
  rotation_matrix_derivatives(x.theta, dR);
  for (int i = 0; i < 3; ++i) {
    dtheta.col(i) = -(dR[i] * D * R.transpose() + R * D * dR[i].transpose()) * x.v;
  }
}

AllocationResult allocate(const MotorInput& u, const VehicleParams& params) {
  const Vec4 wrench = params.allocation() * u.thrusts;
  AllocationResult r;
  r.T = wrench(0);
  r.tau = wrench.tail<3>();
  return r;
}

InverseAllocationResult inverse_allocate(double T, const Vec3& tau, const VehicleParams& params) {
  Vec4 wrench;
  wrench << T, tau;
  Vec4 u = params.allocation().inverse() * wrench;
  InverseAllocationResult r;
  for (int i = 0; i < 4; ++i) {
    double clamped = std::min(std::max(u(i), params.u_min), params.u_max);
    if (clamped != u(i)) r.saturated = true;
    r.u.thrusts(i) = clamped;
  }
  return r;
}

}  // namespace cft
