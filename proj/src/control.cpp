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

#include "cft/control.hpp"

#include <cmath>

namespace cft {

namespace {
constexpr double kThrustDirEps = 1e-6;
}

DfbcResult dfbc(const AugmentedState& xa, const FlatReference& ref, const DfbcGains& gains,
                const VehicleParams& params, const Vec3& ff_accel, bool with_jacobians) {
  const Vec3& p = xa.x.p;
  const Vec3& v = xa.x.v;
  const Vec3& theta = xa.x.theta;
  const Vec3& omega = xa.x.omega;

  DfbcResult out;
  if (with_jacobians) {
    out.du.setZero();
    out.dz_dot.setZero();
  }

  // Desired specific force (acceleration units, earth frame, Z down).
  const Vec3 a_des = ref.a + gains.kp_pos.cwiseProduct(ref.p - p) +
                     gains.kd_pos.cwiseProduct(ref.v - v) - ff_accel -
                     Vec3(0, 0, params.g);
  Eigen::Matrix<double, 3, 15> Da = Eigen::Matrix<double, 3, 15>::Zero();
  Da.block<3, 3>(0, 0) = (-gains.kp_pos).asDiagonal();
  Da.block<3, 3>(0, 3) = (-gains.kd_pos).asDiagonal();

  const double n = a_des.norm();
  double T;
  Vec3 zb, theta_des;
  Eigen::Matrix<double, 1, 15> DT = Eigen::Matrix<double, 1, 15>::Zero();
  Eigen::Matrix<double, 3, 15> Dtheta_des = Eigen::Matrix<double, 3, 15>::Zero();

  if (n < kThrustDirEps) {
    // Thrust direction undefined; hold the current attitude with zero thrust.
    out.degenerate = true;
    T = 0.0;
    theta_des = theta;
    if (with_jacobians) Dtheta_des.block<3, 3>(0, 6).setIdentity();
  } else {
    T = params.m * n;
    zb = -a_des / n;
    Eigen::Matrix<double, 3, 15> Dzb;
    if (with_jacobians) {
      DT = -params.m * zb.transpose() * Da;
      Dzb = ((zb * zb.transpose() - Mat3::Identity()) / n) * Da;
    }
    // Rotate the desired body z into the reference-yaw frame, then read off
    // roll/pitch for the ZYX convention.
    Mat3 Rz = Mat3::Identity();
    if (ref.yaw != 0.0) {
      const double cy = std::cos(ref.yaw), sy = std::sin(ref.yaw);
      Rz << cy, -sy, 0, sy, cy, 0, 0, 0, 1;
    }
    const Vec3 zy = Rz.transpose() * zb;
    const double s = std::min(std::max(-zy(1), -0.999999), 0.999999);
    const double roll_des = std::asin(s);
    const double denom = std::max(zy(0) * zy(0) + zy(2) * zy(2), 1e-12);
    const double pitch_des = std::atan2(zy(0), zy(2));
    theta_des = Vec3(roll_des, pitch_des, ref.yaw);
    if (with_jacobians) {
      Eigen::Matrix<double, 3, 15> Dzy = Rz.transpose() * Dzb;
      const double clamped = (s == -zy(1)) ? 1.0 : 0.0;
      Dtheta_des.row(0) = (-clamped / std::sqrt(1.0 - s * s)) * Dzy.row(1);
      Dtheta_des.row(1) = (zy(2) / denom) * Dzy.row(0) - (zy(0) / denom) * Dzy.row(2);
    }
  }

  // Attitude P loop to a body-rate command.
  const Vec3 omega_cmd = gains.kp_att.cwiseProduct(theta_des - theta);
  const Vec3 e_rate = omega_cmd - omega;
  Eigen::Matrix<double, 3, 15> De;
  if (with_jacobians) {
    De = gains.kp_att.asDiagonal() * Dtheta_des;
    De.block<3, 3>(0, 6) -= Mat3(gains.kp_att.asDiagonal());
    De.block<3, 3>(0, 9) -= Mat3::Identity();
  }

  // Integrator with anti-windup: freeze when at the limit and pushing out.
  const double zl = gains.integrator_limit;
  Vec3 z_eff;
  Vec3 z_gate;  // d(z_eff)/dz diagonal
  for (int i = 0; i < 3; ++i) {
    z_eff(i) = std::min(std::max(xa.z(i), -zl), zl);
    z_gate(i) = (z_eff(i) == xa.z(i)) ? 1.0 : 0.0;
    const bool freeze = (xa.z(i) >= zl && e_rate(i) > 0) || (xa.z(i) <= -zl && e_rate(i) < 0);
    out.z_dot(i) = freeze ? 0.0 : e_rate(i);
    if (with_jacobians && !freeze) out.dz_dot.row(i) = De.row(i);
  }

  // Rate PID; the D term acts on the gyroscopic angular acceleration so the
  // law stays a pure state function.
  const Vec3 Jw = params.J.cwiseProduct(omega);
  const Vec3 wdot_gyro = (-omega.cross(Jw)).cwiseQuotient(params.J);
  const Vec3 alpha = gains.kp_rate.cwiseProduct(e_rate) + gains.ki_rate.cwiseProduct(z_eff) -
                     gains.kd_rate.cwiseProduct(wdot_gyro);
  const Vec3 tau = params.J.cwiseProduct(alpha) + omega.cross(Jw);

  Eigen::Matrix<double, 3, 15> Dtau;
  if (with_jacobians) {
    const Mat3 Jinv = params.J.cwiseInverse().asDiagonal();
    const Mat3 Jdiag = params.J.asDiagonal();
    const Mat3 Dgyro_omega = Jinv * (skew(Jw) - skew(omega) * Jdiag);
    Eigen::Matrix<double, 3, 15> Dalpha = gains.kp_rate.asDiagonal() * De;
    Dalpha.block<3, 3>(0, 12) += Mat3((gains.ki_rate.cwiseProduct(z_gate)).asDiagonal());
    Dalpha.block<3, 3>(0, 9) -= gains.kd_rate.asDiagonal() * Dgyro_omega;
    Dtau = Jdiag * Dalpha;
    Dtau.block<3, 3>(0, 9) += -skew(Jw) + skew(omega) * Jdiag;
  }

  // Inverse allocation and per-motor clamping.
  const Mat4 Cinv = params.allocation().inverse();
  Vec4 wrench;
  wrench << T, tau;
  const Vec4 u_raw = Cinv * wrench;
  Eigen::Matrix<double, 4, 15> Du_raw;
  if (with_jacobians) {
    Eigen::Matrix<double, 4, 15> Dwrench;
    Dwrench.row(0) = DT;
    Dwrench.bottomRows<3>() = Dtau;
    Du_raw = Cinv * Dwrench;
  }
  for (int i = 0; i < 4; ++i) {
    const double c = std::min(std::max(u_raw(i), params.u_min), params.u_max);
    if (c != u_raw(i)) out.saturated = true;
    out.u(i) = c;
    if (with_jacobians && c == u_raw(i)) out.du.row(i) = Du_raw.row(i);
  }
  return out;
}

ResidualField residual_from_mlp(const ResidualParams& xi) {
  return [xi](const Vec3& v, const Vec3& theta, Mat3* dv, Mat3* dtheta) -> Vec3 {
    Eigen::Matrix<double, 6, 1> feat;
    feat << v, theta;
    if (dv != nullptr || dtheta != nullptr) {
      const Eigen::Matrix<double, 3, 6> J = mlp_input_jacobian(feat, xi);
      if (dv) *dv = J.leftCols<3>();
      if (dtheta) *dtheta = J.rightCols<3>();
    }
    return mlp_forward(feat, xi);
  };
}

ResidualField residual_from_drag(const DragModel& drag) {
  return [drag](const Vec3& v, const Vec3& theta, Mat3* dv, Mat3* dtheta) -> Vec3 {
    State s;
    s.v = v;
    s.theta = theta;
    if (dv != nullptr || dtheta != nullptr) {
      Mat3 jv, jt;
      drag_jacobians(s, drag, jv, jt);
      if (dv) *dv = jv;
      if (dtheta) *dtheta = jt;
    }
    return drag_acceleration(s, drag);
  };
}

Vec15 closed_loop(const AugmentedState& xa, const FlatReference& ref, const DfbcGains& gains,
                  const VehicleParams& params, const ResidualField& residual,
                  const Vec3& ff_accel) {
  const DfbcResult c = dfbc(xa, ref, gains, params, ff_accel, false);
  MotorInput u;
  u.thrusts = c.u;
  Vec15 dx;
  dx.head<12>() = nominal_derivative(xa.x, u, params);
  if (residual) dx.segment<3>(3) += residual(xa.x.v, xa.x.theta, nullptr, nullptr);
  dx.tail<3>() = c.z_dot;
  return dx;
}

Vec15 nominal_closed_loop(const AugmentedState& xa, const FlatReference& ref,
                          const DfbcGains& gains, const VehicleParams& params) {
  return closed_loop(xa, ref, gains, params, nullptr, Vec3::Zero());
}

Vec15 hybrid_closed_loop(const AugmentedState& xa, const FlatReference& ref,
                         const ResidualParams& xi, const DfbcGains& gains,
                         const VehicleParams& params) {
  Vec15 dx = nominal_closed_loop(xa, ref, gains, params);
  dx.segment<3>(3) += mlp_forward(residual_features(xa), xi);
  return dx;
}

Vec15 hybrid_closed_loop_jacobian(const AugmentedState& xa, const FlatReference& ref,
                                  const ResidualParams* xi, const DfbcGains& gains,
                                  const VehicleParams& params, Mat15& A) {
  const DfbcResult c = dfbc(xa, ref, gains, params, Vec3::Zero(), true);
  MotorInput u;
  u.thrusts = c.u;
  Eigen::Matrix<double, 12, 12> Ax;
  Eigen::Matrix<double, 12, 4> Bx;
  nominal_jacobians(xa.x, u, params, Ax, Bx);

  A.setZero();
  A.topLeftCorner<12, 12>() = Ax;
  A.topRows<12>() += Bx * c.du;  // controller feedback path
  A.bottomRows<3>() = c.dz_dot;

  Vec15 dx;
  dx.head<12>() = nominal_derivative(xa.x, u, params);
  dx.tail<3>() = c.z_dot;
  if (xi != nullptr) {
    const Eigen::Matrix<double, 3, 6> Jd = mlp_input_jacobian(residual_features(xa), *xi);
    A.block<3, 3>(3, 3) += Jd.leftCols<3>();
    A.block<3, 3>(3, 6) += Jd.rightCols<3>();
    dx.segment<3>(3) += mlp_forward(residual_features(xa), *xi);
  }
  return dx;
}

void hybrid_closed_loop_param_jacobian(const AugmentedState& xa, const ResidualParams& xi,
                                       Eigen::MatrixXd& P) {
  Eigen::Matrix<double, 3, 6> d_feat;
  Eigen::MatrixXd d_theta;
  mlp_jacobians(residual_features(xa), xi, d_feat, d_theta);
  P.setZero(15, xi.theta.size());
  P.middleRows<3>(3) = d_theta;
}

void hybrid_closed_loop_param_vjp(const AugmentedState& xa, const ResidualParams& xi,
                                  const Vec15& cot, Eigen::VectorXd& grad) {
  mlp_param_vjp(residual_features(xa), xi, cot.segment<3>(3), grad);
}

}  // namespace cft
