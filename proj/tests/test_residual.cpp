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
#include <cstdio>
#include <filesystem>

#include "cft/residual.hpp"

using namespace cft;

namespace {

Eigen::Matrix<double, 6, 1> test_features() {
  Eigen::Matrix<double, 6, 1> f;
  f << 0.5, -1.2, 0.3, 0.1, -0.4, 0.7;
  return f;
}

}  // namespace

TEST_CASE("parameter count follows the layer layout") {
  CHECK(mlp_param_count({6, 32, 32, 3}) == 6 * 32 + 32 + 32 * 32 + 32 + 32 * 3 + 3);
  CHECK(mlp_param_count({6, 8, 3}) == 6 * 8 + 8 + 8 * 3 + 3);
  CHECK(mlp_param_count({6, 3}) == 6 * 3 + 3);
}

TEST_CASE("initialization is deterministic, near zero, with zero biases") {
  const auto a = init_params({6, 8, 3}, 5, 0.1);
  const auto b = init_params({6, 8, 3}, 5, 0.1);
  CHECK(a.theta == b.theta);
  const auto c = init_params({6, 8, 3}, 6, 0.1);
  CHECK(a.theta != c.theta);
  CHECK(a.theta.lpNorm<Eigen::Infinity>() <= 0.1 / std::sqrt(6.0) + 1e-15);
  // Bias block of the first layer sits right after the 6x8 weight block.
  CHECK(a.theta.segment(6 * 8, 8).norm() == 0.0);
}

TEST_CASE("single linear layer reproduces the affine map") {
  ResidualParams xi;
  xi.layout = {6, 3};
  xi.activation = Activation::kLinear;
  xi.theta.resize(mlp_param_count(xi.layout));
  Eigen::Matrix<double, 3, 6> W;
  W.setRandom();
  Eigen::Vector3d b(0.1, -0.2, 0.3);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 6; ++c) xi.theta(r * 6 + c) = W(r, c);
  xi.theta.segment(18, 3) = b;
  const auto f = test_features();
  CHECK((mlp_forward(f, xi) - (W * f + b)).norm() < 1e-14);
  CHECK((mlp_input_jacobian(f, xi) - W).norm() < 1e-14);
}

TEST_CASE("two-layer tanh network matches a hand-rolled oracle") {
  const auto xi = init_params({6, 8, 3}, 17, 0.9);
  const auto f = test_features();

  // Naive recomputation straight from the flat layout.
  Eigen::MatrixXd W0(8, 6), W1(3, 8);
  Eigen::VectorXd b0(8), b1(3);
  int off = 0;
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 6; ++c) W0(r, c) = xi.theta(off++);
  for (int r = 0; r < 8; ++r) b0(r) = xi.theta(off++);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 8; ++c) W1(r, c) = xi.theta(off++);
  for (int r = 0; r < 3; ++r) b1(r) = xi.theta(off++);
  const Eigen::VectorXd hidden = (W0 * f + b0).array().tanh();
  const Eigen::Vector3d expect = W1 * hidden + b1;
  CHECK((mlp_forward(f, xi) - expect).norm() < 1e-14);
}

TEST_CASE("jacobians match finite differences for every activation") {
  for (Activation act : {Activation::kTanh, Activation::kSoftplus, Activation::kLinear}) {
    ResidualParams xi = init_params({6, 8, 8, 3}, 23, 1.0, act);
    const auto f = test_features();
    Eigen::Matrix<double, 3, 6> d_feat;
    Eigen::MatrixXd d_theta;
    mlp_jacobians(f, xi, d_feat, d_theta);

    const double eps = 1e-6;
    for (int i = 0; i < 6; ++i) {
      auto fp = f, fm = f;
      fp(i) += eps;
      fm(i) -= eps;
      const Eigen::Vector3d fd = (mlp_forward(fp, xi) - mlp_forward(fm, xi)) / (2 * eps);
      CHECK((d_feat.col(i) - fd).norm() < 1e-7);
    }
    for (int i = 0; i < xi.theta.size(); i += 7) {  // sample the columns
      ResidualParams xp = xi, xm = xi;
      xp.theta(i) += eps;
      xm.theta(i) -= eps;
      const Eigen::Vector3d fd = (mlp_forward(f, xp) - mlp_forward(f, xm)) / (2 * eps);
      CHECK((d_theta.col(i) - fd).norm() < 1e-7);
    }
  }
}

TEST_CASE("parameter vjp equals cotangent times the full jacobian") {
  const auto xi = init_params({6, 8, 3}, 31, 1.0);
  const auto f = test_features();
  Eigen::Matrix<double, 3, 6> d_feat;
  Eigen::MatrixXd d_theta;
  mlp_jacobians(f, xi, d_feat, d_theta);

  const Eigen::Vector3d cot(0.7, -1.3, 0.2);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(xi.theta.size());
  mlp_param_vjp(f, xi, cot, grad);
  CHECK((grad.transpose() - cot.transpose() * d_theta).norm() < 1e-12);

  // Accumulation semantics: a second call doubles the result.
  mlp_param_vjp(f, xi, cot, grad);
  CHECK((grad.transpose() - 2.0 * cot.transpose() * d_theta).norm() < 1e-12);
}

TEST_CASE("serialization round-trips bit-exactly") {
  const auto xi = init_params({6, 32, 32, 3}, 77, 0.1, Activation::kSoftplus);
  const auto back = deserialize_params(serialize_params(xi));
  CHECK(back.layout == xi.layout);
  CHECK(back.activation == xi.activation);
  REQUIRE(back.theta.size() == xi.theta.size());
  for (int i = 0; i < xi.theta.size(); ++i) CHECK(back.theta(i) == xi.theta(i));

  const std::string path = (std::filesystem::temp_directory_path() / "xi_rt.json").string();
  save_params(xi, path);
  const auto loaded = load_params(path);
  for (int i = 0; i < xi.theta.size(); ++i) CHECK(loaded.theta(i) == xi.theta(i));
  std::filesystem::remove(path);
}

TEST_CASE("deserialization rejects inconsistent payloads") {
  auto xi = init_params({6, 8, 3}, 1, 0.1);
  std::string text = serialize_params(xi);
  // Truncate the parameter vector.
  xi.theta.conservativeResize(xi.theta.size() - 1);
  CHECK(!xi.consistent());
  CHECK_THROWS(deserialize_params("{\"layout\":[6,8,3],\"activation\":\"tanh\",\"theta\":[1.0]}"));
  CHECK_THROWS(deserialize_params("not json"));
}
