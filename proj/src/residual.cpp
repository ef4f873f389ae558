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

#include "cft/residual.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace cft {

namespace {

double activate(Activation a, double z) {
  switch (a) {
    case Activation::kTanh: return std::tanh(z);
    case Activation::kSoftplus: return z > 30.0 ? z : std::log1p(std::exp(z));
    case Activation::kLinear: return z;
  }
  return z;
}

// Derivative expressed through the activation value where possible.
double activate_deriv(Activation a, double z, double y) {
  switch (a) {
    case Activation::kTanh: return 1.0 - y * y;
    case Activation::kSoftplus: return 1.0 / (1.0 + std::exp(-z));
    case Activation::kLinear: return 1.0;
  }
  return 1.0;
}

struct ForwardTrace {
  std::vector<Eigen::VectorXd> act;   // activations per layer, act[0] = input
  std::vector<Eigen::VectorXd> pre;   // pre-activations per layer (1..L)
};

ForwardTrace forward_trace(const Eigen::Matrix<double, 6, 1>& feat, const ResidualParams& xi) {
  if (!xi.consistent())
    throw std::invalid_argument("residual: parameter vector inconsistent with layout");
  const int layers = static_cast<int>(xi.layout.size()) - 1;
  ForwardTrace t;
  t.act.resize(layers + 1);
  t.pre.resize(layers + 1);
  t.act[0] = feat;
  int off = 0;
  for (int l = 0; l < layers; ++l) {
    const int rows = xi.layout[l + 1];
    const int cols = xi.layout[l];
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> W(
        xi.theta.data() + off, rows, cols);
    off += rows * cols;
    Eigen::Map<const Eigen::VectorXd> b(xi.theta.data() + off, rows);
    off += rows;
    Eigen::VectorXd z = W * t.act[l] + b;
    t.pre[l + 1] = z;
    if (l + 1 == layers) {
      t.act[l + 1] = z;  // linear output layer
    } else {
      t.act[l + 1].resize(rows);
      for (int i = 0; i < rows; ++i) t.act[l + 1](i) = activate(xi.activation, z(i));
    }
  }
  return t;
}

}  // namespace

Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "softplus") return Activation::kSoftplus;
  if (name == "linear") return Activation::kLinear;
  throw std::invalid_argument("unknown activation: " + name);
}

std::string activation_to_string(Activation a) {
  switch (a) {
    case Activation::kTanh: return "tanh";
    case Activation::kSoftplus: return "softplus";
    case Activation::kLinear: return "linear";
  }
  return "tanh";
}

int mlp_param_count(const std::vector<int>& layout) {
  if (layout.size() < 2) throw std::invalid_argument("mlp layout needs >= 2 layers");
  int m = 0;
  for (std::size_t l = 0; l + 1 < layout.size(); ++l)
    m += layout[l + 1] * layout[l] + layout[l + 1];
  return m;
}

int ResidualParams::param_count() const { return mlp_param_count(layout); }

bool ResidualParams::consistent() const {
  return layout.size() >= 2 && theta.size() == param_count() && theta.allFinite();
}

ResidualParams init_params(const std::vector<int>& layout, std::uint64_t seed,
                           double scale, Activation act) {
  if (scale < 0) throw std::invalid_argument("init_params: scale must be >= 0");
  ResidualParams xi;
  xi.layout = layout;
  xi.activation = act;
  xi.theta = Eigen::VectorXd::Zero(mlp_param_count(layout));
  std::mt19937_64 rng(seed);
  auto uniform01 = [&rng]() { return (rng() >> 11) * (1.0 / 9007199254740992.0); };
  int off = 0;
  for (std::size_t l = 0; l + 1 < layout.size(); ++l) {
    const int rows = layout[l + 1], cols = layout[l];
    const double bound = scale / std::sqrt(static_cast<double>(cols));
    for (int i = 0; i < rows * cols; ++i)
      xi.theta(off + i) = bound * (2.0 * uniform01() - 1.0);
    off += rows * cols + rows;  // biases stay zero
  }
  return xi;
}

Eigen::Vector3d mlp_forward(const Eigen::Matrix<double, 6, 1>& feat, const ResidualParams& xi) {
  ForwardTrace t = forward_trace(feat, xi);
  return t.act.back();
}

Eigen::Matrix<double, 3, 6> mlp_input_jacobian(const Eigen::Matrix<double, 6, 1>& feat,
                                               const ResidualParams& xi) {
  ForwardTrace t = forward_trace(feat, xi);
  const int layers = static_cast<int>(xi.layout.size()) - 1;
  Eigen::MatrixXd J = Eigen::MatrixXd::Identity(6, 6);
  int off = 0;
  for (int l = 0; l < layers; ++l) {
    const int rows = xi.layout[l + 1], cols = xi.layout[l];
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> W(
        xi.theta.data() + off, rows, cols);
    off += rows * cols + rows;
    J = (W * J).eval();
    if (l + 1 < layers) {
      for (int i = 0; i < rows; ++i)
        J.row(i) *= activate_deriv(xi.activation, t.pre[l + 1](i), t.act[l + 1](i));
    }
  }
  return J;
}

void mlp_param_vjp(const Eigen::Matrix<double, 6, 1>& feat, const ResidualParams& xi,
                   const Eigen::Vector3d& cot, Eigen::VectorXd& grad) {
  ForwardTrace t = forward_trace(feat, xi);
  const int layers = static_cast<int>(xi.layout.size()) - 1;
  if (grad.size() != xi.theta.size()) {
    grad.resize(xi.theta.size());
    grad.setZero();
  }
  // layer offsets
  std::vector<int> offs(layers);
  int off = 0;
  for (int l = 0; l < layers; ++l) {
    offs[l] = off;
    off += xi.layout[l + 1] * xi.layout[l] + xi.layout[l + 1];
  }
  Eigen::VectorXd delta = cot;  // cotangent at layer output
  for (int l = layers - 1; l >= 0; --l) {
    const int rows = xi.layout[l + 1], cols = xi.layout[l];
    if (l != layers - 1) {
      for (int i = 0; i < rows; ++i)
        delta(i) *= activate_deriv(xi.activation, t.pre[l + 1](i), t.act[l + 1](i));
    }
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gW(
        grad.data() + offs[l], rows, cols);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + offs[l] + rows * cols, rows);
    gW += delta * t.act[l].transpose();
    gb += delta;
    if (l > 0) {
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> W(
          xi.theta.data() + offs[l], rows, cols);
      delta = (W.transpose() * delta).eval();
    }
  }
}

void mlp_jacobians(const Eigen::Matrix<double, 6, 1>& feat, const ResidualParams& xi,
                   Eigen::Matrix<double, 3, 6>& d_feat, Eigen::MatrixXd& d_theta) {
  d_feat = mlp_input_jacobian(feat, xi);
  d_theta.resize(3, xi.theta.size());
  Eigen::VectorXd row(xi.theta.size());
  for (int i = 0; i < 3; ++i) {
    row.setZero();
    mlp_param_vjp(feat, xi, Eigen::Vector3d::Unit(i), row);
    d_theta.row(i) = row.transpose();
  }
}

std::string serialize_params(const ResidualParams& xi) {
  nlohmann::json j;
  j["layout"] = xi.layout;
  j["activation"] = activation_to_string(xi.activation);
  j["theta"] = std::vector<double>(xi.theta.data(), xi.theta.data() + xi.theta.size());
  return j.dump();
}

ResidualParams deserialize_params(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  ResidualParams xi;
  xi.layout = j.at("layout").get<std::vector<int>>();
  xi.activation = activation_from_string(j.at("activation").get<std::string>());
  auto t = j.at("theta").get<std::vector<double>>();
  xi.theta = Eigen::Map<const Eigen::VectorXd>(t.data(), static_cast<int>(t.size()));
  if (!xi.consistent())
    throw std::runtime_error("deserialize_params: inconsistent parameter file");
  return xi;
}

void save_params(const ResidualParams& xi, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << serialize_params(xi);
}

ResidualParams load_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_params(text);
}

}  // namespace cft
