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

#include "cft/dataset.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace cft {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_row(const double* vals, int count) {
  std::string row;
  char buf[32];
  for (int i = 0; i < count; ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", vals[i]);
    if (i) row += ',';
    row += buf;
  }
  return row;
}

}  // namespace

void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_trajectory_csv: cannot open " + path);
  out << "t,px,py,pz,vx,vy,vz,roll,pitch,yaw,wx,wy,wz,zx,zy,zz,"
         "ref_px,ref_py,ref_pz,ref_vx,ref_vy,ref_vz,ref_ax,ref_ay,ref_az,"
         "ref_jx,ref_jy,ref_jz,ref_yaw\n";
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    double vals[29];
    vals[0] = traj.h * static_cast<double>(k);
    for (int i = 0; i < 15; ++i) vals[1 + i] = traj.states[k](i);
    const FlatReference& r = traj.refs[k];
    for (int i = 0; i < 3; ++i) {
      vals[16 + i] = r.p(i);
      vals[19 + i] = r.v(i);
      vals[22 + i] = r.a(i);
      vals[25 + i] = r.j(i);
    }
    vals[28] = r.yaw;
    out << format_row(vals, 29) << '\n';
  }
  if (!out) throw std::runtime_error("write_trajectory_csv: write failed for " + path);
}

Trajectory read_trajectory_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_trajectory_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("read_trajectory_csv: empty file " + path);

  Trajectory traj;
  double t0 = 0.0, t1 = 0.0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    double vals[29];
    std::string cell;
    for (int i = 0; i < 29; ++i) {
      if (!std::getline(ss, cell, ','))
        throw std::runtime_error("read_trajectory_csv: short row in " + path);
      vals[i] = std::stod(cell);
    }
    if (traj.states.empty())
      t0 = vals[0];
    else if (traj.states.size() == 1)
      t1 = vals[0];
    Vec15 x;
    for (int i = 0; i < 15; ++i) x(i) = vals[1 + i];
    FlatReference r;
    for (int i = 0; i < 3; ++i) {
      r.p(i) = vals[16 + i];
      r.v(i) = vals[19 + i];
      r.a(i) = vals[22 + i];
      r.j(i) = vals[25 + i];
    }
    r.yaw = vals[28];
    traj.states.push_back(x);
    traj.refs.push_back(r);
  }
  if (traj.states.size() >= 2) traj.h = t1 - t0;
  return traj;
}

std::string recipe_hash(const DatasetRecipe& r) {
  json j;
  j["n_train"] = r.n_train;
  j["n_validation"] = r.n_validation;
  j["n_waypoints"] = r.n_waypoints;
  j["bounds_lo"] = {r.bounds.lo(0), r.bounds.lo(1), r.bounds.lo(2)};
  j["bounds_hi"] = {r.bounds.hi(0), r.bounds.hi(1), r.bounds.hi(2)};
  j["total_time"] = r.total_time;
  j["dt"] = r.dt;
  j["substeps"] = r.substeps;
  j["nominal_speed"] = r.nominal_speed;
  j["decay"] = r.decay;
  j["drag"] = {r.drag.d(0), r.drag.d(1), r.drag.d(2)};
  j["seed"] = r.seed;
  j["max_mean_error"] = r.max_mean_error;
  const std::string s = j.dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

DatasetManifest generate_dataset(const DatasetRecipe& recipe, const DfbcGains& gains,
                                 const VehicleParams& params, const std::string& out_dir) {
  fs::create_directories(out_dir);

  SimOptions sim_opts;
  sim_opts.dt = recipe.dt;
  sim_opts.substeps = recipe.substeps;
  sim_opts.drag = recipe.drag;

  ResidualParams unused;  // baseline variant never evaluates the residual

  // Rejection sampling over course seeds: random 4 s courses through the box
  // are frequently beyond the closed loop's actuation envelope, and only
  // successful flights become recordings (as with a real vehicle). The seed
  // cursor makes the surviving sequence deterministic for a fixed recipe.
  std::uint64_t cursor = recipe.seed;
  auto next_flight = [&]() -> Trajectory {
    for (int attempts = 0; attempts < 1000; ++attempts) {
      const std::uint64_t seed = cursor++;
      WaypointSet wps = random_waypoints(recipe.bounds, recipe.n_waypoints, seed,
                                         recipe.nominal_speed, recipe.decay);
      wps.rescale_total_time(recipe.total_time);
      try {
        const PiecewisePoly poly = solve_min_snap(wps);
        const auto refs = sample_references(poly, recipe.dt);
        // Start at rest on the first reference point.
        Vec15 x0 = Vec15::Zero();
        x0.head<3>() = refs.front().p;
        const TrackingLog log = simulate_tracking(refs, ControllerVariant::kBaseline, unused,
                                                  gains, params, sim_opts, x0);
        if (mean_position_error(log) <= recipe.max_mean_error) return to_trajectory(log);
      } catch (const std::exception&) {
        // Diverged or singular flight: drop the course and move on.
      }
    }
    throw std::runtime_error(
        "generate_dataset: no trackable course within 1000 candidate seeds");
  };

  DatasetManifest manifest;
  manifest.recipe_hash = recipe_hash(recipe);
  const int n_test = recipe.n_train / 5;  // 8:2 split over the learning set
  for (int i = 0; i < recipe.n_train; ++i) {
    const Trajectory traj = next_flight();
    char name[64];
    std::snprintf(name, sizeof(name), "traj_%03d.csv", i);
    write_trajectory_csv((fs::path(out_dir) / name).string(), traj);
    if (i < recipe.n_train - n_test)
      manifest.train_files.push_back(name);
    else
      manifest.test_files.push_back(name);
  }
  for (int i = 0; i < recipe.n_validation; ++i) {
    const Trajectory traj = next_flight();
    char name[64];
    std::snprintf(name, sizeof(name), "val_%03d.csv", i);
    write_trajectory_csv((fs::path(out_dir) / name).string(), traj);
    manifest.validation_files.push_back(name);
  }
  write_manifest(manifest, (fs::path(out_dir) / "manifest.json").string());
  return manifest;
}

void write_manifest(const DatasetManifest& manifest, const std::string& path) {
  json j;
  j["train"] = manifest.train_files;
  j["test"] = manifest.test_files;
  j["validation"] = manifest.validation_files;
  j["recipe_hash"] = manifest.recipe_hash;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_manifest: cannot open " + path);
  out << j.dump(2) << '\n';
}

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_manifest: cannot open " + path);
  json j;
  in >> j;
  DatasetManifest m;
  m.train_files = j.at("train").get<std::vector<std::string>>();
  m.test_files = j.at("test").get<std::vector<std::string>>();
  m.validation_files = j.at("validation").get<std::vector<std::string>>();
  m.recipe_hash = j.at("recipe_hash").get<std::string>();
  return m;
}

std::vector<Trajectory> load_split(const std::string& manifest_path, const std::string& split) {
  const DatasetManifest m = read_manifest(manifest_path);
  const fs::path dir = fs::path(manifest_path).parent_path();
  const std::vector<std::string>* files = nullptr;
  if (split == "train")
    files = &m.train_files;
  else if (split == "test")
    files = &m.test_files;
  else if (split == "validation")
    files = &m.validation_files;
  else
    throw std::invalid_argument("load_split: unknown split '" + split + "'");
  std::vector<Trajectory> out;
  out.reserve(files->size());
  for (const auto& f : *files) out.push_back(read_trajectory_csv((dir / f).string()));
  return out;
}

}  // namespace cft
