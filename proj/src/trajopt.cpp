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

#include "cft/trajopt.hpp"

#include <Eigen/Sparse>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <stdexcept>

namespace cft {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

int offset_x(const NlpProblem& p, int k) { return 12 * (k - 1); }
int offset_u(const NlpProblem& p, int k) { return 12 * (p.N - 2) + 4 * k; }
int offset_h(const NlpProblem& p, int k) { return 12 * (p.N - 2) + 4 * (p.N - 1) + k; }

Vec12 node_state(const NlpProblem& p, const Eigen::VectorXd& w, int k) {
  if (k == 0) return p.x0;
  if (k == p.N - 1) return p.xN;
  return w.segment<12>(offset_x(p, k));
}

Eigen::Matrix<double, 6, 1> state_features(const Vec12& x) {
  Eigen::Matrix<double, 6, 1> f;
  f << x.segment<3>(3), x.segment<3>(6);
  return f;
}

struct AlMultipliers {
  Eigen::VectorXd eq;      // shooting defects, 12 per interval
  double time_eq = 0.0;
  Eigen::VectorXd ineq;    // waypoint balls
};

// Augmented-Lagrangian value; fills the gradient and feasibility measures
// when requested. Everything is assembled interval by interval, so cost is
// linear in N.
double al_eval(const NlpProblem& p, const Eigen::VectorXd& w, const AlMultipliers& mult,
               double rho, Eigen::VectorXd* grad, double* feas_inf = nullptr,
               double* objective = nullptr) {
  const int intervals = p.interval_count();
  if (grad) grad->setZero(w.size());

  double L = 0.0;
  double obj = 0.0;
  double feas = 0.0;

  Eigen::Matrix<double, 12, 12> Jx;
  Eigen::Matrix<double, 12, 4> Ju;
  Eigen::Matrix<double, 12, 1> Jh;

  for (int k = 0; k < intervals; ++k) {
    const Vec12 xk = node_state(p, w, k);
    const Vec4 uk = w.segment<4>(offset_u(p, k));
    const double hk = w(offset_h(p, k));

    const Vec12 F = grad ? shoot_interval(p, xk, uk, hk, &Jx, &Ju, &Jh)
                         : shoot_interval(p, xk, uk, hk);
    const Vec12 c = F - node_state(p, w, k + 1);
    const Eigen::VectorXd lam = mult.eq.segment<12>(12 * k);
    const Vec12 y = lam + rho * c;
    L += lam.dot(c) + 0.5 * rho * c.squaredNorm();
    feas = std::max(feas, c.cwiseAbs().maxCoeff());

    // Left-endpoint Riemann sum of the running cost. Without the h_k weight
    // the sum is not a time discretization and the optimizer exploits it:
    // near-zero thrust over shrunken intervals plus a few long high-thrust
    // ones beats steady flight, which is never what the continuous problem
    // wants.
    const auto feat = state_features(xk);
    const Vec3 d = mlp_forward(feat, p.xi);
    const double running = d.squaredNorm() + p.lambda_r * uk.squaredNorm();
    obj += hk * running;

    if (grad) {
      if (k >= 1) grad->segment<12>(offset_x(p, k)) += Jx.transpose() * y;
      grad->segment<4>(offset_u(p, k)) +=
          Ju.transpose() * y + 2.0 * p.lambda_r * hk * uk;
      (*grad)(offset_h(p, k)) += Jh.dot(y) + running;
      if (k + 1 <= p.N - 2) grad->segment<12>(offset_x(p, k + 1)) -= y;
      if (k >= 1) {
        const Eigen::Matrix<double, 3, 6> Jd = mlp_input_jacobian(feat, p.xi);
        const Eigen::Matrix<double, 6, 1> gx = 2.0 * hk * Jd.transpose() * d;
        grad->segment<3>(offset_x(p, k) + 3) += gx.head<3>();
        grad->segment<3>(offset_x(p, k) + 6) += gx.tail<3>();
      }
    }
  }

  if (p.total_time) {
    double sum_h = 0.0;
    for (int k = 0; k < intervals; ++k) sum_h += w(offset_h(p, k));
    const double ct = sum_h - *p.total_time;
    const double yt = mult.time_eq + rho * ct;
    L += mult.time_eq * ct + 0.5 * rho * ct * ct;
    feas = std::max(feas, std::abs(ct));
    if (grad)
      for (int k = 0; k < intervals; ++k) (*grad)(offset_h(p, k)) += yt;
  }

  for (std::size_t i = 0; i < p.waypoints.size(); ++i) {
    const auto& wp = p.waypoints[i];
    const Vec3 pos = w.segment<3>(offset_x(p, wp.node));
    const double gi = (pos - wp.center).squaredNorm() - wp.radius * wp.radius;
    const double a = std::max(0.0, mult.ineq(static_cast<int>(i)) + rho * gi);
    L += (a * a - mult.ineq(static_cast<int>(i)) * mult.ineq(static_cast<int>(i))) / (2.0 * rho);
    feas = std::max(feas, std::max(0.0, gi));
    if (grad && a > 0.0)
      grad->segment<3>(offset_x(p, wp.node)) += 2.0 * a * (pos - wp.center);
  }

  if (feas_inf) *feas_inf = feas;
  if (objective) *objective = obj;
  return L + obj;
}

void decision_bounds(const NlpProblem& p, Eigen::VectorXd& lb, Eigen::VectorXd& ub) {
  lb.setConstant(p.decision_dim(), -kInf);
  ub.setConstant(p.decision_dim(), kInf);
  for (int k = 0; k < p.interval_count(); ++k) {
    lb.segment<4>(offset_u(p, k)).setConstant(p.u_lb);
    ub.segment<4>(offset_u(p, k)).setConstant(p.u_ub);
    lb(offset_h(p, k)) = p.h_lb;
    ub(offset_h(p, k)) = p.h_ub;
  }
}

Eigen::VectorXd project(const Eigen::VectorXd& w, const Eigen::VectorXd& lb,
                        const Eigen::VectorXd& ub) {
  return w.cwiseMax(lb).cwiseMin(ub);
}

// Gauss-Newton Hessian of the augmented Lagrangian restricted to the free
// variables, as sparse triplets. Second derivatives of the shooting map are
// omitted (the lambda'c and rho*c terms keep only their J'J curvature);
// everything else is exact. Throws if a shooting interval is not evaluable.
void al_gn_triplets(const NlpProblem& p, const Eigen::VectorXd& w,
                    const AlMultipliers& mult, double rho, const std::vector<int>& free_of,
                    std::vector<Eigen::Triplet<double>>& trips) {
  const int intervals = p.interval_count();
  Eigen::Matrix<double, 12, 12> Jx;
  Eigen::Matrix<double, 12, 4> Ju;
  Eigen::Matrix<double, 12, 1> Jh;

  auto add = [&](int gi, int gj, double v) {
    if (gi < 0 || gj < 0 || v == 0.0) return;
    if (free_of[gi] < 0 || free_of[gj] < 0) return;
    trips.emplace_back(free_of[gi], free_of[gj], v);
  };

  for (int k = 0; k < intervals; ++k) {
    const Vec12 xk = node_state(p, w, k);
    const Vec4 uk = w.segment<4>(offset_u(p, k));
    const double hk = w(offset_h(p, k));
    shoot_interval(p, xk, uk, hk, &Jx, &Ju, &Jh);

    // Columns of the defect jacobian touched by this interval: x_k, u_k, h_k
    // (x_{k+1} enters as the -I block and is handled separately).
    int gcol[17];
    for (int j = 0; j < 12; ++j) gcol[j] = k >= 1 ? offset_x(p, k) + j : -1;
    for (int j = 0; j < 4; ++j) gcol[12 + j] = offset_u(p, k) + j;
    gcol[16] = offset_h(p, k);
    Eigen::Matrix<double, 12, 17> J;
    J.block<12, 12>(0, 0) = Jx;
    J.block<12, 4>(0, 12) = Ju;
    J.col(16) = Jh;

    const Eigen::Matrix<double, 17, 17> JtJ = rho * (J.transpose() * J);
    for (int a = 0; a < 17; ++a)
      for (int b = 0; b < 17; ++b) add(gcol[a], gcol[b], JtJ(a, b));
    if (k + 1 <= p.N - 2) {
      for (int i = 0; i < 12; ++i) {
        for (int a = 0; a < 17; ++a) {
          add(gcol[a], offset_x(p, k + 1) + i, -rho * J(i, a));
          add(offset_x(p, k + 1) + i, gcol[a], -rho * J(i, a));
        }
        add(offset_x(p, k + 1) + i, offset_x(p, k + 1) + i, rho);
      }
    }

    // Exact Hessian of the running cost h*(d'd + lambda_r u'u); the residual
    // part keeps its Gauss-Newton approximation.
    for (int i = 0; i < 4; ++i) {
      add(offset_u(p, k) + i, offset_u(p, k) + i, 2.0 * p.lambda_r * hk);
      add(offset_u(p, k) + i, offset_h(p, k), 2.0 * p.lambda_r * uk(i));
      add(offset_h(p, k), offset_u(p, k) + i, 2.0 * p.lambda_r * uk(i));
    }
    if (k >= 1) {
      const auto feat = state_features(xk);
      const Vec3 d = mlp_forward(feat, p.xi);
      const Eigen::Matrix<double, 3, 6> Jd = mlp_input_jacobian(feat, p.xi);
      const Eigen::Matrix<double, 6, 6> Hxx = 2.0 * hk * Jd.transpose() * Jd;
      const Eigen::Matrix<double, 6, 1> cross = 2.0 * Jd.transpose() * d;
      for (int i = 0; i < 6; ++i) {
        for (int j = 0; j < 6; ++j)
          add(offset_x(p, k) + 3 + i, offset_x(p, k) + 3 + j, Hxx(i, j));
        add(offset_x(p, k) + 3 + i, offset_h(p, k), cross(i));
        add(offset_h(p, k), offset_x(p, k) + 3 + i, cross(i));
      }
    }
  }

  if (p.total_time)
    for (int a = 0; a < intervals; ++a)
      for (int b = 0; b < intervals; ++b) add(offset_h(p, a), offset_h(p, b), rho);

  for (std::size_t i = 0; i < p.waypoints.size(); ++i) {
    const auto& wp = p.waypoints[i];
    const Vec3 pos = w.segment<3>(offset_x(p, wp.node));
    const double gi = (pos - wp.center).squaredNorm() - wp.radius * wp.radius;
    const double a = std::max(0.0, mult.ineq(static_cast<int>(i)) + rho * gi);
    if (a <= 0.0) continue;
    const Vec3 r = pos - wp.center;
    for (int ii = 0; ii < 3; ++ii) {
      for (int jj = 0; jj < 3; ++jj)
        add(offset_x(p, wp.node) + ii, offset_x(p, wp.node) + jj, 4.0 * rho * r(ii) * r(jj));
      add(offset_x(p, wp.node) + ii, offset_x(p, wp.node) + ii, 2.0 * a);
    }
  }
}

// First-order KKT residual with least-squares multiplier estimates. The
// augmented-Lagrangian gradient at a large penalty is dominated by rounding
// noise, so optimality is certified against the plain Lagrangian instead:
// fit the multipliers that best explain the objective gradient on the free
// variables, then measure what is left over, projecting onto the feasible
// cone at bound-active components.
double ls_kkt_residual(const NlpProblem& p, const Eigen::VectorXd& w,
                       const Eigen::VectorXd& lb, const Eigen::VectorXd& ub) {
  const int n = static_cast<int>(w.size());
  const int intervals = p.interval_count();

  AlMultipliers zero;
  zero.eq = Eigen::VectorXd::Zero(12 * intervals);
  zero.time_eq = 0.0;
  zero.ineq = Eigen::VectorXd::Zero(static_cast<int>(p.waypoints.size()));
  Eigen::VectorXd g(n);
  al_eval(p, w, zero, 0.0, &g);  // rho = 0: plain objective gradient

  std::vector<int> act;
  for (std::size_t i = 0; i < p.waypoints.size(); ++i) {
    const auto& wp = p.waypoints[i];
    const Vec3 pos = w.segment<3>(offset_x(p, wp.node));
    if ((pos - wp.center).squaredNorm() - wp.radius * wp.radius >= -1e-6)
      act.push_back(static_cast<int>(i));
  }
  const int n_time = p.total_time ? 1 : 0;
  const int m = 12 * intervals + n_time + static_cast<int>(act.size());

  std::vector<bool> is_free(n);
  for (int i = 0; i < n; ++i) is_free[i] = w(i) > lb(i) + 1e-9 && w(i) < ub(i) - 1e-9;

  // Full constraint jacobian and its restriction to the free columns.
  std::vector<Eigen::Triplet<double>> at, af;
  auto add = [&](int row, int col, double v) {
    if (v == 0.0) return;
    at.emplace_back(row, col, v);
    if (is_free[col]) af.emplace_back(row, col, v);
  };
  Eigen::Matrix<double, 12, 12> Jx;
  Eigen::Matrix<double, 12, 4> Ju;
  Eigen::Matrix<double, 12, 1> Jh;
  for (int k = 0; k < intervals; ++k) {
    const Vec12 xk = node_state(p, w, k);
    const Vec4 uk = w.segment<4>(offset_u(p, k));
    const double hk = w(offset_h(p, k));
    shoot_interval(p, xk, uk, hk, &Jx, &Ju, &Jh);
    for (int i = 0; i < 12; ++i) {
      if (k >= 1)
        for (int j = 0; j < 12; ++j) add(12 * k + i, offset_x(p, k) + j, Jx(i, j));
      for (int j = 0; j < 4; ++j) add(12 * k + i, offset_u(p, k) + j, Ju(i, j));
      add(12 * k + i, offset_h(p, k), Jh(i));
      if (k + 1 <= p.N - 2) add(12 * k + i, offset_x(p, k + 1) + i, -1.0);
    }
  }
  if (p.total_time)
    for (int k = 0; k < intervals; ++k) add(12 * intervals, offset_h(p, k), 1.0);
  for (std::size_t a = 0; a < act.size(); ++a) {
    const auto& wp = p.waypoints[static_cast<std::size_t>(act[a])];
    const Vec3 pos = w.segment<3>(offset_x(p, wp.node));
    for (int j = 0; j < 3; ++j)
      add(12 * intervals + n_time + static_cast<int>(a), offset_x(p, wp.node) + j,
          2.0 * (pos(j) - wp.center(j)));
  }

  Eigen::SparseMatrix<double> A(m, n), Af(m, n);
  A.setFromTriplets(at.begin(), at.end());
  Af.setFromTriplets(af.begin(), af.end());
  Eigen::VectorXd gf = g;
  for (int i = 0; i < n; ++i)
    if (!is_free[i]) gf(i) = 0.0;

  Eigen::SparseMatrix<double> M = (Af * Eigen::SparseMatrix<double>(Af.transpose())).pruned();
  Eigen::SparseMatrix<double> reg(m, m);
  reg.setIdentity();
  const double eps = 1e-12 * (1.0 + M.diagonal().maxCoeff());
  M = (M + eps * reg).eval();
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(M);
  if (ldlt.info() != Eigen::Success) return kInf;
  Eigen::VectorXd lam = ldlt.solve(-(Af * gf));
  if (!lam.allFinite()) return kInf;
  // Waypoint multipliers must be nonnegative for the certificate to count.
  for (std::size_t a = 0; a < act.size(); ++a) {
    double& l = lam(12 * intervals + n_time + static_cast<int>(a));
    l = std::max(0.0, l);
  }

  const Eigen::VectorXd r = g + A.transpose() * lam;
  double stat = 0.0;
  for (int i = 0; i < n; ++i) {
    if (is_free[i])
      stat = std::max(stat, std::abs(r(i)));
    else if (w(i) <= lb(i) + 1e-9)
      stat = std::max(stat, std::max(0.0, -r(i)));
    else
      stat = std::max(stat, std::max(0.0, r(i)));
  }
  return stat;
}

// Newton-KKT polish of a near-converged iterate. First-order multiplier
// updates cap the accuracy of the augmented-Lagrangian loop: the running
// cost's curvature in u is only 2*lambda_r*h_k against unit-scale dynamics
// constraints, so small multiplier errors shift the inputs by orders of
// magnitude more than the stationarity test can see. A few Gauss-Newton KKT
// solves with the bound active set frozen recover feasibility, stationarity
// and the exact multipliers to near machine precision.
bool kkt_polish(const NlpProblem& p, Eigen::VectorXd& w, const Eigen::VectorXd& lb,
                const Eigen::VectorXd& ub, AlMultipliers& mult, int sweeps,
                bool verbose = false) {
  const int n = static_cast<int>(w.size());
  const int intervals = p.interval_count();

  std::vector<int> free_of(n, -1);
  int nfree = 0;
  for (int i = 0; i < n; ++i)
    if (w(i) > lb(i) + 1e-9 && w(i) < ub(i) - 1e-9) free_of[i] = nfree++;

  std::vector<int> active_wp;
  for (std::size_t i = 0; i < p.waypoints.size(); ++i) {
    const auto& wp = p.waypoints[i];
    const Vec3 pos = w.segment<3>(offset_x(p, wp.node));
    const double gi = (pos - wp.center).squaredNorm() - wp.radius * wp.radius;
    if (gi > -1e-8 || mult.ineq(static_cast<int>(i)) > 0.0)
      active_wp.push_back(static_cast<int>(i));
  }

  const int n_time = p.total_time ? 1 : 0;
  const int neq = 12 * intervals + n_time + static_cast<int>(active_wp.size());
  const int dim = nfree + neq;

  AlMultipliers zero;
  zero.eq = Eigen::VectorXd::Zero(12 * intervals);
  zero.ineq = Eigen::VectorXd::Zero(static_cast<int>(p.waypoints.size()));

  Eigen::Matrix<double, 12, 12> Jx;
  Eigen::Matrix<double, 12, 4> Ju;
  Eigen::Matrix<double, 12, 1> Jh;

  // Levenberg parameter on the primal block. The objective is almost flat
  // along many feasible directions, so the unregularized Newton step can be
  // huge; mu adapts like a trust region and shrinks as sweeps succeed.
  double mu = 1e-6;
  // Penalty weight of the L1 merit function used for step acceptance. Grows
  // with the multiplier estimates so that feasibility always dominates.
  double nu = 1.0;

  const auto merit = [&](const Eigen::VectorXd& x, double* feas_out) {
    double feas_m = kInf, obj_m = kInf;
    al_eval(p, x, zero, 0.0, nullptr, &feas_m, &obj_m);
    if (feas_out) *feas_out = feas_m;
    return obj_m + nu * feas_m;
  };

  int small_steps = 0;  // consecutive heavily damped sweeps; bail when stuck
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    Eigen::VectorXd g;
    al_eval(p, w, zero, 0.0, &g);

    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(200 * intervals));
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
    for (int i = 0; i < n; ++i)
      if (free_of[i] >= 0) rhs(free_of[i]) = -g(i);

    auto add_A = [&](int row, int col_global, double v) {
      if (free_of[col_global] < 0 || v == 0.0) return;
      trips.emplace_back(nfree + row, free_of[col_global], v);
      trips.emplace_back(free_of[col_global], nfree + row, v);
    };
    auto add_H = [&](int i_global, int j_global, double v) {
      if (free_of[i_global] < 0 || free_of[j_global] < 0 || v == 0.0) return;
      trips.emplace_back(free_of[i_global], free_of[j_global], v);
    };

    for (int k = 0; k < intervals; ++k) {
      const Vec12 xk = node_state(p, w, k);
      const Vec4 uk = w.segment<4>(offset_u(p, k));
      const double hk = w(offset_h(p, k));
      const Vec12 F = shoot_interval(p, xk, uk, hk, &Jx, &Ju, &Jh);
      const Vec12 c = F - node_state(p, w, k + 1);
      rhs.segment<12>(nfree + 12 * k) = -c;

      for (int i = 0; i < 12; ++i) {
        if (k >= 1)
          for (int j = 0; j < 12; ++j) add_A(12 * k + i, offset_x(p, k) + j, Jx(i, j));
        for (int j = 0; j < 4; ++j) add_A(12 * k + i, offset_u(p, k) + j, Ju(i, j));
        add_A(12 * k + i, offset_h(p, k), Jh(i));
        if (k + 1 <= p.N - 2) add_A(12 * k + i, offset_x(p, k + 1) + i, -1.0);
      }

      // Exact Hessian of h*(d'd + lambda_r u'u); the residual part uses the
      // Gauss-Newton approximation J'J.
      for (int i = 0; i < 4; ++i) {
        add_H(offset_u(p, k) + i, offset_u(p, k) + i, 2.0 * p.lambda_r * hk);
        add_H(offset_u(p, k) + i, offset_h(p, k), 2.0 * p.lambda_r * uk(i));
        add_H(offset_h(p, k), offset_u(p, k) + i, 2.0 * p.lambda_r * uk(i));
      }
      if (k >= 1) {
        const auto feat = state_features(xk);
        const Vec3 d = mlp_forward(feat, p.xi);
        const Eigen::Matrix<double, 3, 6> Jd = mlp_input_jacobian(feat, p.xi);
        const Eigen::Matrix<double, 6, 6> Hxx = 2.0 * hk * Jd.transpose() * Jd;
        const Eigen::Matrix<double, 6, 1> cross = 2.0 * Jd.transpose() * d;
        for (int i = 0; i < 6; ++i) {
          for (int j = 0; j < 6; ++j)
            add_H(offset_x(p, k) + 3 + i, offset_x(p, k) + 3 + j, Hxx(i, j));
          add_H(offset_x(p, k) + 3 + i, offset_h(p, k), cross(i));
          add_H(offset_h(p, k), offset_x(p, k) + 3 + i, cross(i));
        }
      }
    }

    if (p.total_time) {
      double sum_h = 0.0;
      for (int k = 0; k < intervals; ++k) {
        sum_h += w(offset_h(p, k));
        add_A(12 * intervals, offset_h(p, k), 1.0);
      }
      rhs(nfree + 12 * intervals) = -(sum_h - *p.total_time);
    }

    for (std::size_t a = 0; a < active_wp.size(); ++a) {
      const auto& wp = p.waypoints[static_cast<std::size_t>(active_wp[a])];
      const Vec3 pos = w.segment<3>(offset_x(p, wp.node));
      const int row = 12 * intervals + n_time + static_cast<int>(a);
      for (int j = 0; j < 3; ++j) {
        add_A(row, offset_x(p, wp.node) + j, 2.0 * (pos(j) - wp.center(j)));
        add_H(offset_x(p, wp.node) + j, offset_x(p, wp.node) + j,
              2.0 * std::max(0.0, mult.ineq(active_wp[a])));
      }
      rhs(nfree + row) = -((pos - wp.center).squaredNorm() - wp.radius * wp.radius);
    }

    const double feas0 = rhs.tail(neq).lpNorm<Eigen::Infinity>();
    Eigen::VectorXd sol;
    double alpha = 1.0;
    bool accepted = false;
    for (int trial = 0; trial < 10 && !accepted; ++trial) {
      auto trips_mu = trips;
      for (int i = 0; i < nfree; ++i) trips_mu.emplace_back(i, i, mu);
      Eigen::SparseMatrix<double> kkt(dim, dim);
      kkt.setFromTriplets(trips_mu.begin(), trips_mu.end());
      Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(kkt);
      if (lu.info() == Eigen::Success) {
        sol = lu.solve(rhs);
        if (sol.allFinite()) {
          // Merit-based backtracking: progress is measured as objective plus
          // a feasibility penalty so that tangential (objective-improving)
          // steps are not blocked once the defects are already tiny, while a
          // full step that overshoots past the Euler singularity or grows
          // the defects is still rejected.
          nu = std::max(nu, 2.0 * sol.tail(neq).lpNorm<Eigen::Infinity>() + 1.0);
          const double phi0 = merit(w, nullptr);
          alpha = 1.0;
          for (int bt = 0; bt < 8 && !accepted; ++bt) {
            Eigen::VectorXd w_new = w;
            for (int i = 0; i < n; ++i)
              if (free_of[i] >= 0)
                w_new(i) = std::clamp(w(i) + alpha * sol(free_of[i]), lb(i), ub(i));
            try {
              if (merit(w_new, nullptr) <= phi0 + 1e-12) {
                w = w_new;
                accepted = true;
                break;
              }
            } catch (const std::exception&) {
            }
            alpha *= 0.5;
          }
        }
      }
      if (!accepted) mu = std::min(mu * 10.0, 1e6);
    }
    if (!accepted) {
      if (verbose) std::printf("  polish sweep %d: no acceptable step\n", sweep);
      return sweep > 0;
    }
    if (verbose)
      std::printf("  polish sweep %d: alpha %.4f mu %.1e feas0 %.3e\n", sweep, alpha, mu,
                  feas0);
    mu = std::max(mu * 0.2, 1e-10);

    // Outside its basin the damped Newton step makes negligible progress;
    // hand control back to the outer loop instead of grinding.
    if (alpha < 0.05) {
      if (++small_steps >= 3) return true;
    } else {
      small_steps = 0;
    }

    const bool done = alpha == 1.0 &&
                      sol.head(nfree).lpNorm<Eigen::Infinity>() < 1e-11 &&
                      feas0 < 1e-11;
    const Eigen::VectorXd lam = sol.tail(neq);
    mult.eq = (1.0 - alpha) * mult.eq + alpha * lam.head(12 * intervals);
    if (p.total_time)
      mult.time_eq = (1.0 - alpha) * mult.time_eq + alpha * lam(12 * intervals);
    for (std::size_t a = 0; a < active_wp.size(); ++a)
      mult.ineq(active_wp[a]) =
          std::max(0.0, (1.0 - alpha) * mult.ineq(active_wp[a]) +
                            alpha * lam(12 * intervals + n_time + static_cast<int>(a)));
    if (done) break;
  }
  return true;
}

// Bound-projected Newton method on the augmented Lagrangian with the sparse
// Gauss-Newton Hessian from al_gn_triplets. Bound-active components with an
// outward gradient are frozen per iteration; a Levenberg shift handles
// indefinite or rank-deficient reduced systems. Returns the number of
// iterations taken; `w` is updated in place.
int projected_newton(const NlpProblem& p, const AlMultipliers& mult, double rho,
                     Eigen::VectorXd& w, const Eigen::VectorXd& lb,
                     const Eigen::VectorXd& ub, double tol, int max_iter,
                     double* final_pg = nullptr) {
  const int n = static_cast<int>(w.size());
  const double inf = std::numeric_limits<double>::infinity();
  auto eval = [&](const Eigen::VectorXd& x, Eigen::VectorXd* gr) -> double {
    try {
      return al_eval(p, x, mult, rho, gr);
    } catch (const std::exception&) {
      if (gr) gr->setZero();
      return inf;
    }
  };

  Eigen::VectorXd g(n);
  double f = eval(w, &g);
  double mu = 1e-8;
  int it = 0;
  for (; it < max_iter; ++it) {
    const Eigen::VectorXd pg = w - project(w - g, lb, ub);
    const double pgn = pg.lpNorm<Eigen::Infinity>();
    if (final_pg) *final_pg = pgn;
    if (pgn <= tol) break;

    std::vector<int> free_of(n, -1);
    int nfree = 0;
    for (int i = 0; i < n; ++i) {
      const bool at_lo = w(i) - lb(i) <= 1e-11;
      const bool at_hi = ub(i) - w(i) <= 1e-11;
      if ((at_lo && g(i) > 0.0) || (at_hi && g(i) < 0.0)) continue;
      free_of[i] = nfree++;
    }
    if (nfree == 0) break;

    std::vector<Eigen::Triplet<double>> trips;
    try {
      al_gn_triplets(p, w, mult, rho, free_of, trips);
    } catch (const std::exception&) {
      break;
    }
    Eigen::VectorXd gf(nfree);
    for (int i = 0; i < n; ++i)
      if (free_of[i] >= 0) gf(free_of[i]) = g(i);

    bool accepted = false;
    Eigen::VectorXd w_new, g_new(n);
    double f_new = f;
    for (int trial = 0; trial < 12 && !accepted; ++trial) {
      auto shifted = trips;
      shifted.reserve(shifted.size() + nfree);
      for (int i = 0; i < nfree; ++i) shifted.emplace_back(i, i, mu);
      Eigen::SparseMatrix<double> H(nfree, nfree);
      H.setFromTriplets(shifted.begin(), shifted.end());
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(H);
      if (ldlt.info() == Eigen::Success) {
        const Eigen::VectorXd df = ldlt.solve(-gf);
        if (df.allFinite() && gf.dot(df) < 0.0) {
          Eigen::VectorXd dir = Eigen::VectorXd::Zero(n);
          for (int i = 0; i < n; ++i)
            if (free_of[i] >= 0) dir(i) = df(free_of[i]);
          double step = 1.0;
          for (int bt = 0; bt < 30; ++bt) {
            w_new = project(w + step * dir, lb, ub);
            const Eigen::VectorXd dw = w_new - w;
            if (dw.lpNorm<Eigen::Infinity>() < 1e-16) break;
            f_new = eval(w_new, &g_new);
            if (f_new <= f + 1e-4 * g.dot(dw)) {
              accepted = true;
              break;
            }
            step *= 0.5;
          }
          if (accepted) {
            // Levenberg update from the agreement between the quadratic
            // model and the actual decrease along the accepted step. The
            // shift matters: the objective curvature is ~1e-3 in the flat
            // control directions, so a stale large mu turns Newton into a
            // slow gradient crawl there.
            Eigen::VectorXd dwf(nfree);
            for (int i = 0; i < n; ++i)
              if (free_of[i] >= 0) dwf(free_of[i]) = w_new(i) - w(i);
            const double pred = -(gf.dot(dwf) + 0.5 * dwf.dot(H * dwf));
            const double ratio = pred > 0.0 ? (f - f_new) / pred : 0.0;
            if (step == 1.0 && ratio > 0.75)
              mu = std::max(mu * 0.1, 1e-10);
            else if (step < 0.25 || ratio < 0.25)
              mu = std::min(mu * 5.0, 1e12);
          }
        }
      }
      if (!accepted) mu = std::min(mu * 100.0, 1e12);
    }
    if (!accepted) break;  // stalled even with a heavily damped step
    w = w_new;
    g = g_new;
    f = f_new;
  }
  return it;
}

}  // namespace

Vec12 open_loop_field(const NlpProblem& problem, const Vec12& x, const Vec4& u) {
  MotorInput mi;
  mi.thrusts = u;
  Vec12 f = nominal_derivative(State::FromVec(x), mi, problem.vp);
  if (problem.mode == DynamicsMode::kAugmented)
    f.segment<3>(3) += mlp_forward(state_features(x), problem.xi);
  return f;
}

void open_loop_jacobians(const NlpProblem& problem, const Vec12& x, const Vec4& u,
                         Eigen::Matrix<double, 12, 12>& A, Eigen::Matrix<double, 12, 4>& B) {
  MotorInput mi;
  mi.thrusts = u;
  nominal_jacobians(State::FromVec(x), mi, problem.vp, A, B);
  if (problem.mode == DynamicsMode::kAugmented) {
    const Eigen::Matrix<double, 3, 6> Jd = mlp_input_jacobian(state_features(x), problem.xi);
    A.block<3, 3>(3, 3) += Jd.leftCols<3>();
    A.block<3, 3>(3, 6) += Jd.rightCols<3>();
  }
}

Vec12 shoot_interval(const NlpProblem& problem, const Vec12& x, const Vec4& u, double h,
                     Eigen::Matrix<double, 12, 12>* Jx, Eigen::Matrix<double, 12, 4>* Ju,
                     Eigen::Matrix<double, 12, 1>* Jh) {
  if (!(h > 0)) throw IntegrationFault("shoot_interval: nonpositive step");
  using M12 = Eigen::Matrix<double, 12, 12>;
  using M124 = Eigen::Matrix<double, 12, 4>;

  if (Jx == nullptr) {
    const Vec12 k1 = open_loop_field(problem, x, u);
    const Vec12 k2 = open_loop_field(problem, x + 0.5 * h * k1, u);
    const Vec12 k3 = open_loop_field(problem, x + 0.5 * h * k2, u);
    const Vec12 k4 = open_loop_field(problem, x + h * k3, u);
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }

  M12 A;
  M124 B;
  const Vec12 k1 = open_loop_field(problem, x, u);
  open_loop_jacobians(problem, x, u, A, B);
  M12 D = A;
  M124 E = B;
  Vec12 C = Vec12::Zero();  // dk/dh
  M12 Dsum = D;
  M124 Esum = E;
  Vec12 Csum = C;
  Vec12 ksum = k1;

  Vec12 xs = x + 0.5 * h * k1;
  const Vec12 k2 = open_loop_field(problem, xs, u);
  open_loop_jacobians(problem, xs, u, A, B);
  Vec12 prev_k = k1;
  C = A * (0.5 * prev_k + 0.5 * h * C);
  E = B + 0.5 * h * (A * E);
  D = A * (M12::Identity() + 0.5 * h * D);
  Dsum += 2.0 * D;
  Esum += 2.0 * E;
  Csum += 2.0 * C;
  ksum += 2.0 * k2;

  xs = x + 0.5 * h * k2;
  const Vec12 k3 = open_loop_field(problem, xs, u);
  open_loop_jacobians(problem, xs, u, A, B);
  prev_k = k2;
  C = A * (0.5 * prev_k + 0.5 * h * C);
  E = B + 0.5 * h * (A * E);
  D = A * (M12::Identity() + 0.5 * h * D);
  Dsum += 2.0 * D;
  Esum += 2.0 * E;
  Csum += 2.0 * C;
  ksum += 2.0 * k3;

  xs = x + h * k3;
  const Vec12 k4 = open_loop_field(problem, xs, u);
  open_loop_jacobians(problem, xs, u, A, B);
  prev_k = k3;
  C = A * (prev_k + h * C);
  E = B + h * (A * E);
  D = A * (M12::Identity() + h * D);
  Dsum += D;
  Esum += E;
  Csum += C;
  ksum += k4;

  *Jx = M12::Identity() + (h / 6.0) * Dsum;
  if (Ju) *Ju = (h / 6.0) * Esum;
  if (Jh) *Jh = ksum / 6.0 + (h / 6.0) * Csum;
  return x + (h / 6.0) * ksum;
}

NlpProblem build_problem(const WaypointSet& course, int N, DynamicsMode mode,
                         const ResidualParams& xi, double lambda_r, const VehicleParams& vp,
                         std::optional<double> total_time, double waypoint_radius) {
  if (N < 3) throw std::invalid_argument("build_problem: need N >= 3 nodes");
  if (course.points.size() < 2)
    throw std::invalid_argument("build_problem: need >= 2 waypoints");
  if (static_cast<int>(course.points.size()) - 2 > N - 2)
    throw std::invalid_argument("build_problem: more interior waypoints than interior nodes");
  if (!xi.consistent()) throw std::invalid_argument("build_problem: residual params inconsistent");

  NlpProblem p;
  p.N = N;
  p.mode = mode;
  p.xi = xi;
  p.lambda_r = lambda_r;
  p.vp = vp;
  p.u_lb = vp.u_min;
  p.u_ub = vp.u_max;
  p.total_time = total_time;
  if (total_time) {
    // Keep the matched duration representable by N-1 steps.
    const double mean_h = *total_time / (N - 1);
    if (mean_h < p.h_lb || mean_h > p.h_ub)
      throw std::invalid_argument("build_problem: total_time not representable within step bounds");
  }

  p.x0.setZero();
  p.x0.segment<3>(0) = course.points.front();
  p.xN.setZero();
  p.xN.segment<3>(0) = course.points.back();

  // Arc-length share of each interior waypoint along the polyline.
  const int m = static_cast<int>(course.points.size());
  std::vector<double> cum(m, 0.0);
  for (int i = 1; i < m; ++i)
    cum[i] = cum[i - 1] + (course.points[i] - course.points[i - 1]).norm();
  const double total_len = cum.back();
  int prev_node = 0;
  for (int i = 1; i + 1 < m; ++i) {
    const double frac = total_len > 0 ? cum[i] / total_len
                                      : static_cast<double>(i) / (m - 1);
    int node = static_cast<int>(std::lround(frac * (N - 1)));
    node = std::max(node, prev_node + 1);
    node = std::min(node, N - 2 - ((m - 2) - i));  // leave room for the rest
    prev_node = node;
    p.waypoints.push_back({node, course.points[i], waypoint_radius});
  }
  return p;
}

Eigen::VectorXd warm_start(const NlpProblem& problem) {
  const NlpProblem& p = problem;
  Eigen::VectorXd w = Eigen::VectorXd::Zero(p.decision_dim());

  // Piecewise-linear positions along the boundary-to-boundary polyline
  // through the waypoint centers, parameterized by arc length.
  std::vector<Vec3> pts;
  pts.push_back(p.x0.segment<3>(0));
  for (const auto& wp : p.waypoints) pts.push_back(wp.center);
  pts.push_back(p.xN.segment<3>(0));
  std::vector<double> cum(pts.size(), 0.0);
  for (std::size_t i = 1; i < pts.size(); ++i)
    cum[i] = cum[i - 1] + (pts[i] - pts[i - 1]).norm();
  const double total = cum.back();

  for (int k = 1; k <= p.N - 2; ++k) {
    Vec3 pos;
    if (total <= 0) {
      pos = pts.front();
    } else {
      const double s = total * static_cast<double>(k) / (p.N - 1);
      std::size_t seg = 0;
      while (seg + 2 < pts.size() && s > cum[seg + 1]) ++seg;
      const double span = std::max(cum[seg + 1] - cum[seg], 1e-12);
      const double a = (s - cum[seg]) / span;
      pos = (1.0 - a) * pts[seg] + a * pts[seg + 1];
    }
    w.segment<3>(offset_x(p, k)) = pos;
  }

  const double hover = p.vp.hover_thrust_per_motor();
  double h0 = p.total_time ? *p.total_time / (p.N - 1) : 0.01;
  h0 = std::min(std::max(h0, p.h_lb), p.h_ub);
  for (int k = 0; k < p.interval_count(); ++k) {
    w.segment<4>(offset_u(p, k)).setConstant(
        std::min(std::max(hover, p.u_lb), p.u_ub));
    w(offset_h(p, k)) = h0;
  }
  return w;
}

double nlp_objective(const NlpProblem& problem, const Eigen::VectorXd& w) {
  AlMultipliers mult;
  mult.eq = Eigen::VectorXd::Zero(12 * problem.interval_count());
  mult.ineq = Eigen::VectorXd::Zero(static_cast<int>(problem.waypoints.size()));
  double obj = 0.0;
  al_eval(problem, w, mult, 0.0, nullptr, nullptr, &obj);
  return obj;
}

Eigen::VectorXd nlp_objective_gradient(const NlpProblem& problem, const Eigen::VectorXd& w) {
  // With zero multipliers and zero penalty the AL gradient reduces to the
  // plain objective gradient.
  AlMultipliers mult;
  mult.eq = Eigen::VectorXd::Zero(12 * problem.interval_count());
  mult.ineq = Eigen::VectorXd::Zero(static_cast<int>(problem.waypoints.size()));
  Eigen::VectorXd grad;
  al_eval(problem, w, mult, 0.0, &grad);
  return grad;
}

Eigen::VectorXd nlp_constraints(const NlpProblem& problem, const Eigen::VectorXd& w) {
  const NlpProblem& p = problem;
  const int intervals = p.interval_count();
  const int extra = p.total_time ? 1 : 0;
  Eigen::VectorXd c(12 * intervals + extra);
  for (int k = 0; k < intervals; ++k) {
    const Vec12 xk = node_state(p, w, k);
    const Vec4 uk = w.segment<4>(offset_u(p, k));
    const double hk = w(offset_h(p, k));
    c.segment<12>(12 * k) = shoot_interval(p, xk, uk, hk) - node_state(p, w, k + 1);
  }
  if (p.total_time) {
    double sum_h = 0.0;
    for (int k = 0; k < intervals; ++k) sum_h += w(offset_h(p, k));
    c(12 * intervals) = sum_h - *p.total_time;
  }
  return c;
}

Eigen::VectorXd pack_decision(const NlpProblem& problem, const std::vector<Vec12>& states,
                              const std::vector<Vec4>& inputs,
                              const std::vector<double>& steps) {
  const NlpProblem& p = problem;
  Eigen::VectorXd w(p.decision_dim());
  for (int k = 1; k <= p.N - 2; ++k) w.segment<12>(offset_x(p, k)) = states[k];
  for (int k = 0; k < p.interval_count(); ++k) {
    w.segment<4>(offset_u(p, k)) = inputs[k];
    w(offset_h(p, k)) = steps[k];
  }
  return w;
}

void unpack_decision(const NlpProblem& problem, const Eigen::VectorXd& w,
                     std::vector<Vec12>& states, std::vector<Vec4>& inputs,
                     std::vector<double>& steps) {
  const NlpProblem& p = problem;
  states.resize(p.N);
  inputs.resize(p.interval_count());
  steps.resize(p.interval_count());
  for (int k = 0; k < p.N; ++k) states[k] = node_state(p, w, k);
  for (int k = 0; k < p.interval_count(); ++k) {
    inputs[k] = w.segment<4>(offset_u(p, k));
    steps[k] = w(offset_h(p, k));
  }
}

NlpSolution solve(const NlpProblem& problem, const Eigen::VectorXd& guess,
                  const SolveOptions& opts) {
  const NlpProblem& p = problem;
  if (guess.size() != p.decision_dim())
    throw std::invalid_argument("solve: guess dimension mismatch");

  const auto t_start = std::chrono::steady_clock::now();

  Eigen::VectorXd lb, ub;
  decision_bounds(p, lb, ub);
  Eigen::VectorXd w = project(guess, lb, ub);

  AlMultipliers mult;
  mult.eq = Eigen::VectorXd::Zero(12 * p.interval_count());
  mult.ineq = Eigen::VectorXd::Zero(static_cast<int>(p.waypoints.size()));

  // Penalty cap: beyond this, rho * defect products are dominated by
  // floating-point rounding and the inner gradients turn into noise.
  constexpr double kRhoMax = 1e10;
  double rho = opts.rho0;
  double omega = 1.0 / rho;                 // inner stationarity target
  double eta = 1.0 / std::pow(rho, 0.1);    // feasibility target for multiplier updates

  NlpSolution sol;
  double feas = kInf, pgn = kInf;
  double feas_prev = kInf;
  int total_inner = 0;
  int outer = 0;

  // Stationarity is certified with least-squares multiplier estimates; the
  // AL projected gradient is only used to steer the inner solver, since at
  // a large penalty it is dominated by rounding noise.
  auto ls_stat = [&](const Eigen::VectorXd& x) -> double {
    try {
      return ls_kkt_residual(p, x, lb, ub);
    } catch (const std::exception&) {
      return kInf;
    }
  };

  // Best-so-far iterate; a later outer iteration can be worse than an
  // earlier one once the penalty is in the noise regime.
  Eigen::VectorXd w_best = w;
  double feas_best = kInf, pgn_best = kInf, score_best = kInf;
  int stagnant = 0;

  for (; outer < opts.max_outer; ++outer) {
    const double inner_tol = std::max(omega, opts.tol_stat);
    total_inner +=
        projected_newton(p, mult, rho, w, lb, ub, inner_tol, opts.max_inner, &pgn);

    al_eval(p, w, mult, rho, nullptr, &feas);
    if (opts.verbose)
      std::printf("outer %2d  rho %.1e  feas %.3e  pg %.3e\n", outer, rho, feas, pgn);

    const double score = std::max(feas / opts.tol_feas, pgn / opts.tol_stat);
    if (score < score_best) {
      if (score < 0.97 * score_best)
        stagnant = 0;
      else
        ++stagnant;
      score_best = score;
      w_best = w;
      feas_best = feas;
      pgn_best = pgn;
    } else {
      ++stagnant;
    }
    if (feas <= opts.tol_feas && pgn <= opts.tol_stat) {
      ++outer;
      break;
    }
    // No meaningful progress over several penalty updates: further outer
    // iterations only burn time in the rounding-noise regime.
    if (stagnant >= 8) {
      ++outer;
      break;
    }

    // Once the iterate is in the Newton basin, a KKT polish usually finishes
    // the job outright and is far cheaper than driving the penalty up.
    if (feas <= 1e-3) {
      Eigen::VectorXd w_try = w;
      AlMultipliers mult_try = mult;
      bool ok = false;
      try {
        ok = kkt_polish(p, w_try, lb, ub, mult_try, 60, opts.verbose);
        if (ok) {
          double feas_try = kInf;
          Eigen::VectorXd g_try(w_try.size());
          al_eval(p, w_try, mult_try, opts.rho0, &g_try, &feas_try);
          const double pgn_try =
              (w_try - project(w_try - g_try, lb, ub)).lpNorm<Eigen::Infinity>();
          if (opts.verbose)
            std::printf("  polish: feas %.3e  pg %.3e\n", feas_try, pgn_try);
          if (feas_try <= opts.tol_feas && pgn_try <= opts.tol_stat) {
            w = w_try;
            mult = mult_try;
            feas = feas_try;
            pgn = pgn_try;
            const double s = std::max(feas / opts.tol_feas, pgn / opts.tol_stat);
            if (s < score_best) {
              score_best = s;
              w_best = w;
              feas_best = feas;
              pgn_best = pgn;
            }
            ++outer;
            break;
          }
        } else if (opts.verbose) {
          std::printf("  polish: factorization failed\n");
        }
      } catch (const std::exception& e) {
        if (opts.verbose) std::printf("  polish: threw (%s)\n", e.what());
      }
    }

    if (feas <= eta) {
      // First-order multiplier update.
      const Eigen::VectorXd c = nlp_constraints(p, w);
      mult.eq += rho * c.head(12 * p.interval_count());
      if (p.total_time) mult.time_eq += rho * c(12 * p.interval_count());
      for (std::size_t i = 0; i < p.waypoints.size(); ++i) {
        const auto& wp = p.waypoints[i];
        const Vec3 pos = w.segment<3>(offset_x(p, wp.node));
        const double gi = (pos - wp.center).squaredNorm() - wp.radius * wp.radius;
        mult.ineq(static_cast<int>(i)) =
            std::max(0.0, mult.ineq(static_cast<int>(i)) + rho * gi);
      }
      eta = std::max(eta / std::pow(rho, 0.5), opts.tol_feas * 0.1);
      omega = std::max(omega / rho, opts.tol_stat);
      // Multiplier updates alone stall when the problem is ill conditioned;
      // escalate the penalty if feasibility is not contracting fast enough.
      if (feas > 0.25 * feas_prev) rho = std::min(rho * 10.0, kRhoMax);
    } else {
      rho = std::min(rho * 10.0, kRhoMax);
      eta = std::max(1.0 / std::pow(rho, 0.1), opts.tol_feas * 0.1);
      omega = std::max(1.0 / rho, opts.tol_stat);
    }
    feas_prev = feas;
  }

  if (score_best < std::max(feas / opts.tol_feas, pgn / opts.tol_stat)) {
    w = w_best;
    feas = feas_best;
    pgn = pgn_best;
  }

  // Newton polish once the AL loop is in the basin; keep it only if it
  // improves the convergence score.
  if (feas <= 1e-3) {
    Eigen::VectorXd w_try = w;
    AlMultipliers mult_try = mult;
    bool ok = false;
    try {
      ok = kkt_polish(p, w_try, lb, ub, mult_try, 60, opts.verbose);
    } catch (const std::exception&) {
      ok = false;
    }
    if (ok) {
      try {
        double feas_try = kInf;
        Eigen::VectorXd g_try(w_try.size());
        al_eval(p, w_try, mult_try, opts.rho0, &g_try, &feas_try);
        const double pgn_try =
            (w_try - project(w_try - g_try, lb, ub)).lpNorm<Eigen::Infinity>();
        if (std::max(feas_try / opts.tol_feas, pgn_try / opts.tol_stat) <
            std::max(feas / opts.tol_feas, pgn / opts.tol_stat)) {
          w = w_try;
          feas = feas_try;
          pgn = pgn_try;
        }
      } catch (const std::exception&) {
      }
    }
  }
  unpack_decision(p, w, sol.states, sol.inputs, sol.steps);
  sol.objective = nlp_objective(p, w);
  sol.max_violation = feas;
  sol.iterations = total_inner;
  sol.outer_iterations = outer;
  // Report the honest first-order certificate: the projected Lagrangian
  // gradient with least-squares multiplier estimates at the final point.
  sol.kkt_residual = std::min(pgn, ls_stat(w));
  sol.converged = feas <= opts.tol_feas && pgn <= opts.tol_stat;
  sol.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return sol;
}

double residual_cost(const std::vector<Vec12>& states, const ResidualParams& xi) {
  double cost = 0.0;
  for (const auto& x : states) cost += mlp_forward(state_features(x), xi).squaredNorm();
  return cost;
}

double mean_residual_magnitude(const std::vector<Vec12>& states, const ResidualParams& xi,
                               double mass) {
  if (states.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& x : states) sum += mass * mlp_forward(state_features(x), xi).norm();
  return sum / static_cast<double>(states.size());
}

std::vector<FlatReference> export_reference(const NlpSolution& solution,
                                            const VehicleParams& vp, double dt) {
  if (!solution.converged)
    throw std::runtime_error("export_reference: refusing to export a non-converged solution");
  const int n = static_cast<int>(solution.states.size());

  // Per-node acceleration from the nominal translational dynamics; the
  // exported reference must stay differentially flat, so the residual model
  // is deliberately not applied here.
  std::vector<Vec3> acc(n);
  for (int k = 0; k < n; ++k) {
    const Vec4 u = solution.inputs[std::min(k, n - 2)];
    const double T = u.sum();
    const Vec3 theta = solution.states[k].segment<3>(6);
    acc[k] = -(T / vp.m) * body_z_axis(theta) + Vec3(0, 0, vp.g);
  }

  std::vector<double> t_node(n, 0.0);
  for (int k = 1; k < n; ++k) t_node[k] = t_node[k - 1] + solution.steps[k - 1];
  const double total = t_node.back();
  const int count = static_cast<int>(std::floor(total / dt + 1e-9)) + 1;

  std::vector<FlatReference> refs(count);
  int seg = 0;
  for (int i = 0; i < count; ++i) {
    const double t = std::min(i * dt, total);
    while (seg + 2 < n && t > t_node[seg + 1]) ++seg;
    const double h = std::max(t_node[seg + 1] - t_node[seg], 1e-12);
    const double s = std::min(std::max((t - t_node[seg]) / h, 0.0), 1.0);
    const Vec3 p0 = solution.states[seg].segment<3>(0);
    const Vec3 p1 = solution.states[seg + 1].segment<3>(0);
    const Vec3 v0 = solution.states[seg].segment<3>(3);
    const Vec3 v1 = solution.states[seg + 1].segment<3>(3);
    // Cubic Hermite on position (slopes = node velocities), Hermite on
    // velocity (slopes = node accelerations), linear on acceleration.
    const double s2 = s * s, s3 = s2 * s;
    const double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s;
    const double h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
    refs[i].p = h00 * p0 + h10 * h * v0 + h01 * p1 + h11 * h * v1;
    refs[i].v = h00 * v0 + h10 * h * acc[seg] + h01 * v1 + h11 * h * acc[seg + 1];
    refs[i].a = (1.0 - s) * acc[seg] + s * acc[seg + 1];
    refs[i].yaw = 0.0;
  }

  // Jerk by central differencing of the resampled acceleration, then a
  // short moving average to suppress node-rate ripple.
  std::vector<Vec3> jerk(count, Vec3::Zero());
  for (int i = 1; i + 1 < count; ++i) jerk[i] = (refs[i + 1].a - refs[i - 1].a) / (2.0 * dt);
  if (count >= 2) {
    jerk[0] = (refs[1].a - refs[0].a) / dt;
    jerk[count - 1] = (refs[count - 1].a - refs[count - 2].a) / dt;
  }
  for (int i = 0; i < count; ++i) {
    Vec3 sum = Vec3::Zero();
    int cnt = 0;
    for (int o = -2; o <= 2; ++o) {
      const int idx = i + o;
      if (idx >= 0 && idx < count) {
        sum += jerk[idx];
        ++cnt;
      }
    }
    refs[i].j = sum / cnt;
  }
  return refs;
}

}  // namespace cft
