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

#ifndef CFT_VEHICLE_HPP
#define CFT_VEHICLE_HPP

#include <Eigen/Dense>
#include <stdexcept>

namespace cft {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

// Rigid-body state layout used everywhere: [p(3), v(3), Theta(3), omega(3)].
// Frames are NED: the earth z-axis points to the ground, so gravity is +g*e_z
// and rotor thrust acts along -z_B.
inline constexpr int kStateDim = 12;
// Augmented closed-loop state appends the rate-loop integrator z(3).
inline constexpr int kAugDim = 15;

struct SingularEulerError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct State {
  Vec3 p{Vec3::Zero()};
  Vec3 v{Vec3::Zero()};
  Vec3 theta{Vec3::Zero()};  // roll, pitch, yaw (ZYX convention)
  Vec3 omega{Vec3::Zero()};

  Eigen::Matrix<double, 12, 1> vec() const {
    Eigen::Matrix<double, 12, 1> x;
    x << p, v, theta, omega;
    return x;
  }
  static State FromVec(const Eigen::Ref<const Eigen::VectorXd>& x) {
    State s;
    s.p = x.segment<3>(0);
    s.v = x.segment<3>(3);
    s.theta = x.segment<3>(6);
    s.omega = x.segment<3>(9);
    return s;
  }
};

struct MotorInput {
  Vec4 thrusts{Vec4::Zero()};
};

struct VehicleParams {
  double m = 1.0;                    // kg
  Vec3 J{0.01, 0.01, 0.02};          // diagonal inertia, kg m^2
  double g = 9.81;                   // m/s^2
  double arm = 0.17;                 // m
  double c_tau = 0.016;              // rotor drag torque coefficient, m
  double u_min = 0.0;                // per-motor thrust bound, N
  double u_max = 8.0;

  // Plus-configuration allocation [T, tau_x, tau_y, tau_z] = C * u.
  Mat4 allocation() const {
    Mat4 C;
    C << 1, 1, 1, 1,
         0, -arm, 0, arm,
         arm, 0, -arm, 0,
         c_tau, -c_tau, c_tau, -c_tau;
    return C;
  }
  double hover_thrust_per_motor() const { return m * g / 4.0; }
};

struct DragModel {
  Vec3 d{Vec3::Zero()};  // diagonal of D, acceleration per unit velocity (1/s)
};

// --- rotations (ZYX yaw-pitch-roll) ---

Mat3 rotation_matrix(const Vec3& theta);
// dR/dtheta_i, i in {roll, pitch, yaw}
void rotation_matrix_derivatives(const Vec3& theta, Mat3 dR[3]);
// Third body axis expressed in the earth frame, R*e3, plus its Jacobian.
Vec3 body_z_axis(const Vec3& theta);
Mat3 body_z_axis_jacobian(const Vec3& theta);
// Body-rate to Euler-rate map; throws SingularEulerError at |pitch| >= pi/2.
Mat3 euler_rate_matrix(const Vec3& theta);
// d(W(theta)*omega)/dtheta, 3x3
Mat3 euler_rate_product_jacobian(const Vec3& theta, const Vec3& omega);

inline Mat3 skew(const Vec3& a) {
  Mat3 s;
  s << 0, -a.z(), a.y(),
       a.z(), 0, -a.x(),
       -a.y(), a.x(), 0;
  return s;
}

// --- dynamics ---

// Open-loop rigid-body derivative, Z-down frame:
//   pdot = v
//   vdot = -(T/m) R e3 + g e3
//   thetadot = W(theta) omega
//   omegadot = J^-1 (-omega x J omega + tau),   [T, tau] = C u
Eigen::Matrix<double, 12, 1> nominal_derivative(const State& x, const MotorInput& u,
                                                const VehicleParams& params);

// Analytic A = df/dx (12x12) and B = df/du (12x4) of nominal_derivative.
void nominal_jacobians(const State& x, const MotorInput& u, const VehicleParams& params,
                       Eigen::Matrix<double, 12, 12>& A, Eigen::Matrix<double, 12, 4>& B);

// Aerodynamic drag acceleration -R D R^T v and its Jacobians w.r.t. v and theta.
Vec3 drag_acceleration(const State& x, const DragModel& drag);
void drag_jacobians(const State& x, const DragModel& drag, Mat3& dv, Mat3& dtheta);

struct AllocationResult {
  double T = 0.0;
  Vec3 tau{Vec3::Zero()};
};
AllocationResult allocate(const MotorInput& u, const VehicleParams& params);

struct InverseAllocationResult {
  MotorInput u;
  bool saturated = false;
};
InverseAllocationResult inverse_allocate(double T, const Vec3& tau, const VehicleParams& params);

// --- generic fixed-step RK4 ---

struct IntegrationFault : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Classical RK4 update for xdot = f(x). Throws IntegrationFault on a
// non-finite stage.
template <typename Field>
Eigen::VectorXd rk4_step(const Field& f, const Eigen::VectorXd& x, double h) {
  if (!(h > 0)) throw IntegrationFault("rk4_step: step size must be positive");
  Eigen::VectorXd k1 = f(x);
  Eigen::VectorXd k2 = f(x + 0.5 * h * k1);
  Eigen::VectorXd k3 = f(x + 0.5 * h * k2);
  Eigen::VectorXd k4 = f(x + h * k3);
  Eigen::VectorXd out = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!out.allFinite()) throw IntegrationFault("rk4_step: non-finite stage");
  return out;
}

// One RK4 step with exact chain-rule sensitivities through the four stages.
// `f(x)` returns the derivative; `fjac(x, A, P)` fills df/dx (n x n) and
// df/dtheta (n x m). Outputs dx_next/dx and dx_next/dtheta.
template <typename Field, typename FieldJac>
Eigen::VectorXd rk4_step_with_sensitivities(const Field& f, const FieldJac& fjac,
                                            const Eigen::VectorXd& x, double h,
                                            Eigen::MatrixXd& dx_dx,
                                            Eigen::MatrixXd& dx_dtheta) {
  if (!(h > 0)) throw IntegrationFault("rk4_step: step size must be positive");
  const int n = static_cast<int>(x.size());
  Eigen::MatrixXd A(n, n), P;

  Eigen::VectorXd k1 = f(x);
  fjac(x, A, P);
  if (P.rows() != n || A.rows() != n || A.cols() != n)
    throw std::invalid_argument("rk4_step_with_sensitivities: jacobian shape mismatch");
  const int m = static_cast<int>(P.cols());
  Eigen::MatrixXd D = A;                      // dk/dx
  Eigen::MatrixXd G = P;                      // dk/dtheta
  Eigen::MatrixXd Dsum = D, Gsum = G;

  Eigen::VectorXd xs = x + 0.5 * h * k1;
  Eigen::VectorXd k2 = f(xs);
  fjac(xs, A, P);
  D = A * (Eigen::MatrixXd::Identity(n, n) + 0.5 * h * D);
  G = P + 0.5 * h * (A * G);
  Dsum += 2.0 * D;
  Gsum += 2.0 * G;

  xs = x + 0.5 * h * k2;
  Eigen::VectorXd k3 = f(xs);
  fjac(xs, A, P);
  D = A * (Eigen::MatrixXd::Identity(n, n) + 0.5 * h * D);
  G = P + 0.5 * h * (A * G);
  Dsum += 2.0 * D;
  Gsum += 2.0 * G;

  xs = x + h * k3;
  Eigen::VectorXd k4 = f(xs);
  fjac(xs, A, P);
  D = A * (Eigen::MatrixXd::Identity(n, n) + h * D);
  G = P + h * (A * G);
  Dsum += D;
  Gsum += G;

  dx_dx = Eigen::MatrixXd::Identity(n, n) + (h / 6.0) * Dsum;
  dx_dtheta.resize(n, m);
  dx_dtheta = (h / 6.0) * Gsum;
  Eigen::VectorXd out = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!out.allFinite()) throw IntegrationFault("rk4_step: non-finite stage");
  return out;
}

}  // namespace cft

#endif  // CFT_VEHICLE_HPP
