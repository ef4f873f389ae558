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

#include "cft/learn.hpp"

#include <atomic>
#include <cmath>
#include <filesystem>
#include <future>
#include <random>

#include "cft/residual.hpp"

namespace cft {

namespace {

Vec15 hybrid_field(const Vec15& x, const FlatReference& ref, const ResidualParams& xi,
                   const DfbcGains& gains, const VehicleParams& params) {
  return hybrid_closed_loop(AugmentedState::FromVec(x), ref, xi, gains, params);
}

Vec15 rk4_hybrid(const Vec15& x, const FlatReference& ref, const ResidualParams& xi,
                 const DfbcGains& gains, const VehicleParams& params, double h) {
  const Vec15 k1 = hybrid_field(x, ref, xi, gains, params);
  const Vec15 k2 = hybrid_field(x + 0.5 * h * k1, ref, xi, gains, params);
  const Vec15 k3 = hybrid_field(x + 0.5 * h * k2, ref, xi, gains, params);
  const Vec15 k4 = hybrid_field(x + h * k3, ref, xi, gains, params);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Vec15 node_loss_gradient(const Vec15& x, const Vec15& x_r, const LossWeights& w, double factor) {
  return 2.0 * factor * w.l.cwiseProduct(x - x_r);
}

}  // namespace

std::vector<Vec15> forward_rollout(const Vec15& x0, const std::vector<FlatReference>& refs,
                                   const ResidualParams& xi, const DfbcGains& gains,
                                   const VehicleParams& params, double h, int n) {
  if (n < 1 || static_cast<int>(refs.size()) < n - 1)
    throw std::invalid_argument("forward_rollout: need n >= 1 and n-1 references");
  std::vector<Vec15> states(n);
  states[0] = x0;
  for (int k = 0; k + 1 < n; ++k) {
    states[k + 1] = rk4_hybrid(states[k], refs[k], xi, gains, params, h);
    if (!states[k + 1].allFinite())
      throw RolloutFault("forward_rollout: non-finite state", k + 1);
  }
  return states;
}

double segment_loss(const std::vector<Vec15>& states, const TrajectorySegment& seg,
                    const LossWeights& weights) {
  const int n = static_cast<int>(seg.x_r.size());
  double loss = 0.0;
  for (int k = 1; k < n; ++k) {
    const double factor = (k == n - 1) ? weights.terminal : 1.0;
    const Vec15 e = seg.x_r[k] - states[k];
    loss += factor * e.dot(weights.l.cwiseProduct(e));
  }
  return loss;
}

GradientResult adjoint_gradient(const TrajectorySegment& seg, const ResidualParams& xi,
                                const DfbcGains& gains, const VehicleParams& params,
                                const LossWeights& weights) {
  const int n = static_cast<int>(seg.x_r.size());
  if (n < 2) throw std::invalid_argument("adjoint_gradient: segment needs >= 2 samples");

  const std::vector<Vec15> x =
      forward_rollout(seg.x_r[0], seg.refs, xi, gains, params, seg.h, n);

  GradientResult out;
  out.loss = segment_loss(x, seg, weights);
  out.grad = Eigen::VectorXd::Zero(xi.theta.size());

  const double h = seg.h;
  // Costate at the terminal node.
  Vec15 lam = node_loss_gradient(x[n - 1], seg.x_r[n - 1], weights, weights.terminal);

  Mat15 A1, A2, A3, A4;
  for (int k = n - 2; k >= 0; --k) {
    // Recompute the four RK stages from the stored node state.
    const AugmentedState s1 = AugmentedState::FromVec(x[k]);
    const Vec15 f1 = hybrid_closed_loop_jacobian(s1, seg.refs[k], &xi, gains, params, A1);
    const AugmentedState s2 = AugmentedState::FromVec(Vec15(x[k] + 0.5 * h * f1));
    const Vec15 f2 = hybrid_closed_loop_jacobian(s2, seg.refs[k], &xi, gains, params, A2);
    const AugmentedState s3 = AugmentedState::FromVec(Vec15(x[k] + 0.5 * h * f2));
    const Vec15 f3 = hybrid_closed_loop_jacobian(s3, seg.refs[k], &xi, gains, params, A3);
    const AugmentedState s4 = AugmentedState::FromVec(Vec15(x[k] + h * f3));
    hybrid_closed_loop_jacobian(s4, seg.refs[k], &xi, gains, params, A4);

    // Reverse-mode pass through the RK4 stage composition: u_i carries the
    // cotangent arriving at stage i.
    const Vec15 u4 = (h / 6.0) * lam;
    const Vec15 u3 = (2.0 * h / 6.0) * lam + h * (A4.transpose() * u4);
    const Vec15 u2 = (2.0 * h / 6.0) * lam + 0.5 * h * (A3.transpose() * u3);
    const Vec15 u1 = (h / 6.0) * lam + 0.5 * h * (A2.transpose() * u2);

    hybrid_closed_loop_param_vjp(s1, xi, u1, out.grad);
    hybrid_closed_loop_param_vjp(s2, xi, u2, out.grad);
    hybrid_closed_loop_param_vjp(s3, xi, u3, out.grad);
    hybrid_closed_loop_param_vjp(s4, xi, u4, out.grad);

    // lam_k = M_k^T lam_{k+1} + grad of the node-k loss term.
    lam += A1.transpose() * u1 + A2.transpose() * u2 + A3.transpose() * u3 +
           A4.transpose() * u4;
    if (k >= 1) lam += node_loss_gradient(x[k], seg.x_r[k], weights, 1.0);
  }
  if (!out.grad.allFinite())
    throw RolloutFault("adjoint_gradient: non-finite gradient", 0);
  return out;
}

std::vector<std::vector<TrajectorySegment>> minibatch_split(
    const std::vector<Trajectory>& dataset, int n, int s, std::uint64_t seed) {
  if (dataset.empty()) throw std::invalid_argument("minibatch_split: empty dataset");
  if (n < 2 || s < 1) throw std::invalid_argument("minibatch_split: need n >= 2, s >= 1");
  std::vector<TrajectorySegment> segments;
  for (const auto& traj : dataset) {
    const int total = static_cast<int>(traj.states.size());
    for (int start = 0; start + n <= total; start += n) {
      TrajectorySegment seg;
      seg.h = traj.h;
      seg.x_r.assign(traj.states.begin() + start, traj.states.begin() + start + n);
      seg.refs.assign(traj.refs.begin() + start, traj.refs.begin() + start + n);
      segments.push_back(std::move(seg));
    }
  }
  // Fisher-Yates with an explicit draw so shuffles are reproducible across
  // standard library implementations.
  std::mt19937_64 rng(seed);
  for (int i = static_cast<int>(segments.size()) - 1; i > 0; --i) {
    const int j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(segments[i], segments[j]);
  }
  std::vector<std::vector<TrajectorySegment>> batches;
  for (std::size_t i = 0; i < segments.size(); i += s) {
    const std::size_t end = std::min(segments.size(), i + s);
    batches.emplace_back(segments.begin() + i, segments.begin() + end);
  }
  return batches;
}

void adam_step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad, AdamMoments& moments,
               int t, const TrainConfig& cfg) {
  if (moments.m.size() != theta.size()) {
    moments.m = Eigen::VectorXd::Zero(theta.size());
    moments.v = Eigen::VectorXd::Zero(theta.size());
  }
  moments.m = cfg.beta1 * moments.m + (1.0 - cfg.beta1) * grad;
  moments.v = cfg.beta2 * moments.v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  theta -= cfg.lr * (moments.m / bc1).cwiseQuotient(
               ((moments.v / bc2).cwiseSqrt().array() + cfg.eps).matrix());
}

TrainResult train(const std::vector<Trajectory>& dataset, const TrainConfig& cfg,
                  const LossWeights& weights, const ResidualParams& init_xi,
                  const DfbcGains& gains, const VehicleParams& params) {
  auto batches = minibatch_split(dataset, cfg.segment_size, cfg.batch_size, cfg.seed);

  TrainResult result;
  result.xi = init_xi;
  AdamMoments moments;
  int t = 0;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    double epoch_loss = 0.0;
    std::size_t epoch_evaluated = 0;
    for (const auto& batch : batches) {
      std::vector<GradientResult> per_segment(batch.size());
      // A segment whose rollout diverges or crosses the Euler singularity
      // contributes nothing to the update instead of aborting the run.
      auto safe_gradient = [&](const TrajectorySegment& seg, GradientResult& out) {
        try {
          out = adjoint_gradient(seg, result.xi, gains, params, weights);
          return;
        } catch (const RolloutFault&) {
        } catch (const SingularEulerError&) {
        }
        out.loss = -1.0;  // fault marker, resolved in the reduction below
        out.grad = Eigen::VectorXd::Zero(result.xi.theta.size());
      };
      const int workers = std::max(1, std::min<int>(cfg.threads, static_cast<int>(batch.size())));
      if (workers == 1) {
        for (std::size_t i = 0; i < batch.size(); ++i)
          safe_gradient(batch[i], per_segment[i]);
      } else {
        std::vector<std::future<void>> futs;
        std::atomic<std::size_t> next{0};
        for (int w = 0; w < workers; ++w) {
          futs.push_back(std::async(std::launch::async, [&]() {
            for (std::size_t i = next.fetch_add(1); i < batch.size(); i = next.fetch_add(1))
              safe_gradient(batch[i], per_segment[i]);
          }));
        }
        for (auto& f : futs) f.get();
      }
      // Fixed-order reduction keeps the run reproducible for any worker count.
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(result.xi.theta.size());
      for (const auto& g : per_segment) {
        if (g.loss < 0.0) {
          ++result.faults;
          continue;
        }
        grad += g.grad;
        epoch_loss += g.loss;
        ++epoch_evaluated;
      }
      adam_step(result.xi.theta, grad, moments, ++t, cfg);
    }
    result.loss_history.push_back(epoch_loss /
                                  static_cast<double>(std::max<std::size_t>(1, epoch_evaluated)));
    if (cfg.checkpoint_every > 0 && !cfg.checkpoint_dir.empty() &&
        (epoch + 1) % cfg.checkpoint_every == 0) {
      std::filesystem::create_directories(cfg.checkpoint_dir);
      save_params(result.xi,
                  cfg.checkpoint_dir + "/xi_epoch_" + std::to_string(epoch + 1) + ".json");
    }
  }
  return result;
}

}  // namespace cft
