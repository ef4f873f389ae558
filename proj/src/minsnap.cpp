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

#include "cft/minsnap.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace cft {

namespace {

constexpr int kCoeffs = 8;  // degree 7

// Row of the derivative basis: d^order/dt^order [1, t, ..., t^7].
Eigen::Matrix<double, 1, kCoeffs> basis_row(double t, int order) {
  Eigen::Matrix<double, 1, kCoeffs> row = Eigen::Matrix<double, 1, kCoeffs>::Zero();
  for (int i = order; i < kCoeffs; ++i) {
    double c = 1.0;
    for (int d = 0; d < order; ++d) c *= static_cast<double>(i - d);
    row(i) = c * std::pow(t, i - order);
  }
  return row;
}

// Gram matrix of the squared-snap integral over [0, tau].
Eigen::Matrix<double, kCoeffs, kCoeffs> snap_gram(double tau) {
  Eigen::Matrix<double, kCoeffs, kCoeffs> Q =
      Eigen::Matrix<double, kCoeffs, kCoeffs>::Zero();
  for (int i = 4; i < kCoeffs; ++i) {
    double ci = 1.0;
    for (int d = 0; d < 4; ++d) ci *= static_cast<double>(i - d);
    for (int j = 4; j < kCoeffs; ++j) {
      double cj = 1.0;
      for (int d = 0; d < 4; ++d) cj *= static_cast<double>(j - d);
      const int pw = i + j - 7;
      Q(i, j) = ci * cj * std::pow(tau, pw) / static_cast<double>(pw);
    }
  }
  return Q;
}

}  // namespace

double WaypointSet::total_time() const {
  double t = 0.0;
  for (double h : times) t += h;
  return t;
}

void WaypointSet::rescale_total_time(double t) {
  const double cur = total_time();
  if (cur <= 0.0) throw std::invalid_argument("rescale_total_time: empty schedule");
  for (double& h : times) h *= t / cur;
}

double PiecewisePoly::total_time() const {
  double t = 0.0;
  for (double h : durations) t += h;
  return t;
}

Vec3 PiecewisePoly::eval(double t, int deriv) const {
  if (coeffs.empty()) throw std::invalid_argument("PiecewisePoly::eval: empty");
  std::size_t s = 0;
  double local = t;
  while (s + 1 < coeffs.size() && local > durations[s]) {
    local -= durations[s];
    ++s;
  }
  local = std::min(std::max(local, 0.0), durations[s]);
  return coeffs[s] * basis_row(local, deriv).transpose();
}

double PiecewisePoly::snap_objective() const {
  double obj = 0.0;
  for (std::size_t s = 0; s < coeffs.size(); ++s) {
    const auto Q = snap_gram(durations[s]);
    for (int axis = 0; axis < 3; ++axis) {
      const Eigen::Matrix<double, kCoeffs, 1> c = coeffs[s].row(axis).transpose();
      obj += c.dot(Q * c);
    }
  }
  return obj;
}

PiecewisePoly solve_min_snap(const WaypointSet& wps) {
  const int m = static_cast<int>(wps.points.size());
  if (m < 2) throw std::invalid_argument("solve_min_snap: need >= 2 waypoints");
  if (static_cast<int>(wps.times.size()) != m - 1)
    throw std::invalid_argument("solve_min_snap: need one duration per segment");
  for (double t : wps.times)
    if (!(t > 1e-9)) throw std::invalid_argument("solve_min_snap: non-positive segment time");

  const int segs = m - 1;
  const int nvar = kCoeffs * segs;
  // Constraints: waypoint interpolation at both segment ends (2*segs),
  // rest-to-rest boundary derivatives 1..3 (6), C1..C4 at interior knots.
  const int ncon = 2 * segs + 6 + 4 * (segs - 1);

  // The QP is assembled in per-segment normalized time tau = t / h_s. The
  // raw monomial basis in seconds loses rank numerically once segments get
  // short (columns span h^0..h^7); in normalized time all interpolation
  // rows are O(1) and a derivative of order d just picks up h^-d.
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(nvar, nvar);
  for (int s = 0; s < segs; ++s)
    Q.block<kCoeffs, kCoeffs>(kCoeffs * s, kCoeffs * s) =
        snap_gram(1.0) / std::pow(wps.times[s], 7);

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(ncon, nvar);
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(ncon, 3);
  int row = 0;
  for (int s = 0; s < segs; ++s) {
    A.block<1, kCoeffs>(row, kCoeffs * s) = basis_row(0.0, 0);
    b.row(row++) = wps.points[s].transpose();
    A.block<1, kCoeffs>(row, kCoeffs * s) = basis_row(1.0, 0);
    b.row(row++) = wps.points[s + 1].transpose();
  }
  for (int d = 1; d <= 3; ++d) {
    A.block<1, kCoeffs>(row++, 0) = basis_row(0.0, d) / std::pow(wps.times.front(), d);
    A.block<1, kCoeffs>(row++, kCoeffs * (segs - 1)) =
        basis_row(1.0, d) / std::pow(wps.times.back(), d);
  }
  for (int s = 0; s + 1 < segs; ++s) {
    for (int d = 1; d <= 4; ++d) {
      A.block<1, kCoeffs>(row, kCoeffs * s) =
          basis_row(1.0, d) / std::pow(wps.times[s], d);
      A.block<1, kCoeffs>(row, kCoeffs * (s + 1)) -=
          basis_row(0.0, d) / std::pow(wps.times[s + 1], d);
      ++row;
    }
  }

  // Equilibration: scaling the objective by a constant and the constraint
  // rows to unit norm changes only the multipliers, never the minimizer,
  // but keeps the KKT pivots on comparable scales for the rank test.
  Q /= Q.cwiseAbs().maxCoeff();
  for (int r = 0; r < ncon; ++r) {
    const double nrm = A.row(r).norm();
    if (nrm > 0.0) {
      A.row(r) /= nrm;
      b.row(r) /= nrm;
    }
  }

  // KKT system of the equality-constrained QP, shared across axes.
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(nvar + ncon, nvar + ncon);
  kkt.topLeftCorner(nvar, nvar) = 2.0 * Q;
  kkt.topRightCorner(nvar, ncon) = A.transpose();
  kkt.bottomLeftCorner(ncon, nvar) = A;
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(nvar + ncon, 3);
  rhs.bottomRows(ncon) = b;

  Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
  if (!lu.isInvertible())
    throw std::runtime_error("solve_min_snap: singular KKT system (degenerate segment times?)");
  const Eigen::MatrixXd sol = lu.solve(rhs);

  PiecewisePoly poly;
  poly.durations = wps.times;
  poly.coeffs.resize(segs);
  for (int s = 0; s < segs; ++s) {
    poly.coeffs[s] = sol.block<kCoeffs, 3>(kCoeffs * s, 0).transpose();
    // Back to the seconds basis used by eval: c_i / h^i.
    for (int i = 1; i < kCoeffs; ++i)
      poly.coeffs[s].col(i) /= std::pow(wps.times[s], i);
  }
  return poly;
}

std::vector<FlatReference> sample_references(const PiecewisePoly& poly, double dt) {
  if (!(dt > 0)) throw std::invalid_argument("sample_references: dt must be positive");
  const double total = poly.total_time();
  const int count = static_cast<int>(std::floor(total / dt + 1e-9)) + 1;
  std::vector<FlatReference> refs(count);
  for (int i = 0; i < count; ++i) {
    const double t = std::min(i * dt, total);
    refs[i].p = poly.eval(t, 0);
    refs[i].v = poly.eval(t, 1);
    refs[i].a = poly.eval(t, 2);
    refs[i].j = poly.eval(t, 3);
    refs[i].yaw = 0.0;
  }
  return refs;
}

WaypointSet random_waypoints(const Box& bounds, int n, std::uint64_t seed,
                             double nominal_speed, double decay) {
  if (n < 2) throw std::invalid_argument("random_waypoints: need n >= 2");
  std::mt19937_64 rng(seed);
  auto uniform01 = [&rng]() { return (rng() >> 11) * (1.0 / 9007199254740992.0); };
  WaypointSet wps;
  wps.points.resize(n);
  for (int i = 0; i < n; ++i)
    for (int axis = 0; axis < 3; ++axis)
      wps.points[i](axis) =
          bounds.lo(axis) + (bounds.hi(axis) - bounds.lo(axis)) * uniform01();
  wps.times.resize(n - 1);
  for (int i = 0; i + 1 < n; ++i) {
    const double dist = (wps.points[i + 1] - wps.points[i]).norm();
    wps.times[i] = std::max(decay * dist / nominal_speed, 0.2);
  }
  return wps;
}

}  // namespace cft
