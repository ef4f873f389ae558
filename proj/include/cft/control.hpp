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

#ifndef CFT_CONTROL_HPP
#define CFT_CONTROL_HPP

#include <functional>

#include "cft/residual.hpp"
#include "cft/vehicle.hpp"

namespace cft {

using Vec15 = Eigen::Matrix<double, 15, 1>;
using Mat15 = Eigen::Matrix<double, 15, 15>;

// Flat-output sample [p, v, a, j] consumed by the DFBC. Yaw is held at zero
// by default; the controller tracks position only.
struct FlatReference {
  Vec3 p{Vec3::Zero()};
  Vec3 v{Vec3::Zero()};
  Vec3 a{Vec3::Zero()};
  Vec3 j{Vec3::Zero()};
  double yaw = 0.0;
};

struct DfbcGains {
  Vec3 kp_pos{6.0, 6.0, 6.0};
  Vec3 kd_pos{4.0, 4.0, 4.0};
  Vec3 kp_att{8.0, 8.0, 8.0};
  Vec3 kp_rate{20.0, 20.0, 10.0};
  Vec3 ki_rate{5.0, 5.0, 2.5};
  Vec3 kd_rate{0.02, 0.02, 0.01};
  double integrator_limit = 1.0;
};

// Rigid-body state plus the rate-loop integrator z. The integrator is part
// of the learning state (the closed loop is only Markov in [x, z]).
struct AugmentedState {
  State x;
  Vec3 z{Vec3::Zero()};

  Vec15 vec() const {
    Vec15 out;
    out << x.vec(), z;
    return out;
  }
  static AugmentedState FromVec(const Eigen::Ref<const Eigen::VectorXd>& v) {
    AugmentedState a;
    a.x = State::FromVec(v.head<12>());
    a.z = v.segment<3>(12);
    return a;
  }
};

struct DfbcResult {
  Vec4 u{Vec4::Zero()};          // per-motor thrust, already clamped
  Vec3 z_dot{Vec3::Zero()};      // integrator derivative (anti-windup applied)
  bool saturated = false;
  bool degenerate = false;       // thrust-direction fallback was taken
  // Jacobians w.r.t. the 15-dim augmented state; filled when requested.
  Eigen::Matrix<double, 4, 15> du;
  Eigen::Matrix<double, 3, 15> dz_dot;
};

// Flatness-based controller: PD position loop to a desired acceleration,
// thrust/attitude extraction, proportional attitude loop, PID rate loop,
// inverse allocation. ff_accel is an acceleration-space disturbance estimate
// subtracted from the demand (zero for the baseline variant). Jacobians
// treat ff_accel as constant.
DfbcResult dfbc(const AugmentedState& xa, const FlatReference& ref, const DfbcGains& gains,
                const VehicleParams& params, const Vec3& ff_accel = Vec3::Zero(),
                bool with_jacobians = false);

// Optional state-dependent residual injected into the velocity-derivative
// rows (value, plus input Jacobians w.r.t. v and theta when requested).
using ResidualField =
    std::function<Vec3(const Vec3& v, const Vec3& theta, Mat3* dv, Mat3* dtheta)>;

ResidualField residual_from_mlp(const ResidualParams& xi);
ResidualField residual_from_drag(const DragModel& drag);

// Closed-loop derivative of the augmented state under the DFBC, with an
// arbitrary residual field added to vdot: dot(xa) = phi(xa, ref) + [0;d;0;0].
Vec15 closed_loop(const AugmentedState& xa, const FlatReference& ref, const DfbcGains& gains,
                  const VehicleParams& params, const ResidualField& residual = nullptr,
                  const Vec3& ff_accel = Vec3::Zero());

Vec15 nominal_closed_loop(const AugmentedState& xa, const FlatReference& ref,
                          const DfbcGains& gains, const VehicleParams& params);

Vec15 hybrid_closed_loop(const AugmentedState& xa, const FlatReference& ref,
                         const ResidualParams& xi, const DfbcGains& gains,
                         const VehicleParams& params);

// Derivative plus the full 15x15 state Jacobian of the hybrid closed loop.
// Pass xi = nullptr for the nominal loop.
Vec15 hybrid_closed_loop_jacobian(const AugmentedState& xa, const FlatReference& ref,
                                  const ResidualParams* xi, const DfbcGains& gains,
                                  const VehicleParams& params, Mat15& A);

// Parameter Jacobian d(phi)/d(xi), nonzero only in the vdot rows (15 x m).
void hybrid_closed_loop_param_jacobian(const AugmentedState& xa, const ResidualParams& xi,
                                       Eigen::MatrixXd& P);

// VJP cot^T d(phi)/d(xi) accumulated into grad — the adjoint workhorse.
void hybrid_closed_loop_param_vjp(const AugmentedState& xa, const ResidualParams& xi,
                                  const Vec15& cot, Eigen::VectorXd& grad);

inline Eigen::Matrix<double, 6, 1> residual_features(const AugmentedState& xa) {
  Eigen::Matrix<double, 6, 1> f;
  f << xa.x.v, xa.x.theta;
  return f;
}

}  // namespace cft

#endif  // CFT_CONTROL_HPP
