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

#ifndef CFT_RESIDUAL_HPP
#define CFT_RESIDUAL_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace cft {

// The learnable residual d(x, xi): a small MLP mapping the six nominal
// states [v, Theta] to a 3-dim acceleration correction. Hidden layers use a
// smooth activation so both the adjoint pass and the NLP see twice
// differentiable residuals.
enum class Activation { kTanh, kSoftplus, kLinear };

Activation activation_from_string(const std::string& name);
std::string activation_to_string(Activation a);

struct ResidualParams {
  std::vector<int> layout;  // e.g. {6, 32, 32, 3}
  Activation activation = Activation::kTanh;
  Eigen::VectorXd theta;    // flat [W0, b0, W1, b1, ...], W row-major

  int param_count() const;
  bool consistent() const;
};

// Number of parameters implied by a layer layout.
int mlp_param_count(const std::vector<int>& layout);

// Deterministic near-zero initialization: weights uniform in
// +- scale/sqrt(fan_in), biases zero.
ResidualParams init_params(const std::vector<int>& layout, std::uint64_t seed,
                           double scale, Activation act = Activation::kTanh);

Eigen::Vector3d mlp_forward(const Eigen::Matrix<double, 6, 1>& feat,
                            const ResidualParams& xi);

// Exact backpropagation Jacobians of mlp_forward: d out/d feat (3x6) and
// d out/d theta (3xm).
void mlp_jacobians(const Eigen::Matrix<double, 6, 1>& feat, const ResidualParams& xi,
                   Eigen::Matrix<double, 3, 6>& d_feat, Eigen::MatrixXd& d_theta);

// Input Jacobian only (3x6), cheaper than the full parameter Jacobian.
Eigen::Matrix<double, 3, 6> mlp_input_jacobian(const Eigen::Matrix<double, 6, 1>& feat,
                                               const ResidualParams& xi);

// Vector-Jacobian product cot^T * d out/d theta, the workhorse of the
// adjoint pass. Accumulates into grad (size m).
void mlp_param_vjp(const Eigen::Matrix<double, 6, 1>& feat, const ResidualParams& xi,
                   const Eigen::Vector3d& cot, Eigen::VectorXd& grad);

// JSON serialization with layout header; round-trips bit-exactly.
std::string serialize_params(const ResidualParams& xi);
ResidualParams deserialize_params(const std::string& json_text);
void save_params(const ResidualParams& xi, const std::string& path);
ResidualParams load_params(const std::string& path);

}  // namespace cft

#endif  // CFT_RESIDUAL_HPP
