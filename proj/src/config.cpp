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

#include "cft/config.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace cft {

namespace {

using nlohmann::json;

json vec3_to_json(const Vec3& v) { return json::array({v(0), v(1), v(2)}); }

Vec3 vec3_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3)
    throw std::invalid_argument("config: expected a 3-element array");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void maybe_vec3(const json& j, const char* key, Vec3& out) {
  if (j.contains(key)) out = vec3_from_json(j.at(key));
}

}  // namespace

Config default_config() { return Config{}; }

std::string config_to_json(const Config& cfg) {
  json j;
  json& veh = j["vehicle"];
  veh["m"] = cfg.vehicle.m;
  veh["J"] = vec3_to_json(cfg.vehicle.J);
  veh["g"] = cfg.vehicle.g;
  veh["arm"] = cfg.vehicle.arm;
  veh["c_tau"] = cfg.vehicle.c_tau;
  veh["u_min"] = cfg.vehicle.u_min;
  veh["u_max"] = cfg.vehicle.u_max;

  j["drag"] = vec3_to_json(cfg.drag.d);

  json& g = j["gains"];
  g["kp_pos"] = vec3_to_json(cfg.gains.kp_pos);
  g["kd_pos"] = vec3_to_json(cfg.gains.kd_pos);
  g["kp_att"] = vec3_to_json(cfg.gains.kp_att);
  g["kp_rate"] = vec3_to_json(cfg.gains.kp_rate);
  g["ki_rate"] = vec3_to_json(cfg.gains.ki_rate);
  g["kd_rate"] = vec3_to_json(cfg.gains.kd_rate);
  g["integrator_limit"] = cfg.gains.integrator_limit;

  json& r = j["residual"];
  r["layout"] = cfg.residual_layout;
  r["activation"] = activation_to_string(cfg.residual_activation);
  r["init_scale"] = cfg.residual_init_scale;

  json& t = j["train"];
  t["segment_size"] = cfg.train.segment_size;
  t["batch_size"] = cfg.train.batch_size;
  t["lr"] = cfg.train.lr;
  t["beta1"] = cfg.train.beta1;
  t["beta2"] = cfg.train.beta2;
  t["eps"] = cfg.train.eps;
  t["max_epochs"] = cfg.train.max_epochs;
  t["seed"] = cfg.train.seed;
  t["threads"] = cfg.train.threads;
  t["checkpoint_every"] = cfg.train.checkpoint_every;
  t["checkpoint_dir"] = cfg.train.checkpoint_dir;

  json& d = j["dataset"];
  d["n_train"] = cfg.dataset.n_train;
  d["n_validation"] = cfg.dataset.n_validation;
  d["n_waypoints"] = cfg.dataset.n_waypoints;
  d["bounds_lo"] = vec3_to_json(cfg.dataset.bounds.lo);
  d["bounds_hi"] = vec3_to_json(cfg.dataset.bounds.hi);
  d["total_time"] = cfg.dataset.total_time;
  d["dt"] = cfg.dataset.dt;
  d["substeps"] = cfg.dataset.substeps;
  d["nominal_speed"] = cfg.dataset.nominal_speed;
  d["decay"] = cfg.dataset.decay;
  d["seed"] = cfg.dataset.seed;
  d["max_mean_error"] = cfg.dataset.max_mean_error;

  json& o = j["optimize"];
  o["nodes"] = cfg.opt_nodes;
  o["lambda_r"] = cfg.lambda_r;
  o["waypoint_radius"] = cfg.waypoint_radius;
  o["h_lb"] = cfg.h_lb;
  o["h_ub"] = cfg.h_ub;
  o["tol_feas"] = cfg.solve.tol_feas;
  o["tol_stat"] = cfg.solve.tol_stat;
  o["max_outer"] = cfg.solve.max_outer;
  o["max_inner"] = cfg.solve.max_inner;
  o["rho0"] = cfg.solve.rho0;

  json& s = j["sim"];
  s["dt"] = cfg.sim_dt;
  s["substeps"] = cfg.sim_substeps;
  return j.dump(2);
}

Config config_from_json(const std::string& text) {
  const json j = json::parse(text);
  Config cfg;
  if (j.contains("vehicle")) {
    const json& veh = j.at("vehicle");
    maybe(veh, "m", cfg.vehicle.m);
    maybe_vec3(veh, "J", cfg.vehicle.J);
    maybe(veh, "g", cfg.vehicle.g);
    maybe(veh, "arm", cfg.vehicle.arm);
    maybe(veh, "c_tau", cfg.vehicle.c_tau);
    maybe(veh, "u_min", cfg.vehicle.u_min);
    maybe(veh, "u_max", cfg.vehicle.u_max);
  }
  if (j.contains("drag")) cfg.drag.d = vec3_from_json(j.at("drag"));
  if (j.contains("gains")) {
    const json& g = j.at("gains");
    maybe_vec3(g, "kp_pos", cfg.gains.kp_pos);
    maybe_vec3(g, "kd_pos", cfg.gains.kd_pos);
    maybe_vec3(g, "kp_att", cfg.gains.kp_att);
    maybe_vec3(g, "kp_rate", cfg.gains.kp_rate);
    maybe_vec3(g, "ki_rate", cfg.gains.ki_rate);
    maybe_vec3(g, "kd_rate", cfg.gains.kd_rate);
    maybe(g, "integrator_limit", cfg.gains.integrator_limit);
  }
  if (j.contains("residual")) {
    const json& r = j.at("residual");
    maybe(r, "layout", cfg.residual_layout);
    if (r.contains("activation"))
      cfg.residual_activation = activation_from_string(r.at("activation").get<std::string>());
    maybe(r, "init_scale", cfg.residual_init_scale);
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    maybe(t, "segment_size", cfg.train.segment_size);
    maybe(t, "batch_size", cfg.train.batch_size);
    maybe(t, "lr", cfg.train.lr);
    maybe(t, "beta1", cfg.train.beta1);
    maybe(t, "beta2", cfg.train.beta2);
    maybe(t, "eps", cfg.train.eps);
    maybe(t, "max_epochs", cfg.train.max_epochs);
    maybe(t, "seed", cfg.train.seed);
    maybe(t, "threads", cfg.train.threads);
    maybe(t, "checkpoint_every", cfg.train.checkpoint_every);
    maybe(t, "checkpoint_dir", cfg.train.checkpoint_dir);
  }
  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    maybe(d, "n_train", cfg.dataset.n_train);
    maybe(d, "n_validation", cfg.dataset.n_validation);
    maybe(d, "n_waypoints", cfg.dataset.n_waypoints);
    maybe_vec3(d, "bounds_lo", cfg.dataset.bounds.lo);
    maybe_vec3(d, "bounds_hi", cfg.dataset.bounds.hi);
    maybe(d, "total_time", cfg.dataset.total_time);
    maybe(d, "dt", cfg.dataset.dt);
    maybe(d, "substeps", cfg.dataset.substeps);
    maybe(d, "nominal_speed", cfg.dataset.nominal_speed);
    maybe(d, "decay", cfg.dataset.decay);
    maybe(d, "seed", cfg.dataset.seed);
    maybe(d, "max_mean_error", cfg.dataset.max_mean_error);
  }
  cfg.dataset.drag = cfg.drag;
  if (j.contains("optimize")) {
    const json& o = j.at("optimize");
    maybe(o, "nodes", cfg.opt_nodes);
    maybe(o, "lambda_r", cfg.lambda_r);
    maybe(o, "waypoint_radius", cfg.waypoint_radius);
    maybe(o, "h_lb", cfg.h_lb);
    maybe(o, "h_ub", cfg.h_ub);
    maybe(o, "tol_feas", cfg.solve.tol_feas);
    maybe(o, "tol_stat", cfg.solve.tol_stat);
    maybe(o, "max_outer", cfg.solve.max_outer);
    maybe(o, "max_inner", cfg.solve.max_inner);
    maybe(o, "rho0", cfg.solve.rho0);
  }
  if (j.contains("sim")) {
    const json& s = j.at("sim");
    maybe(s, "dt", cfg.sim_dt);
    maybe(s, "substeps", cfg.sim_substeps);
  }
  return cfg;
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_config: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return config_from_json(text);
}

void save_config(const Config& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_config: cannot open " + path);
  out << config_to_json(cfg) << '\n';
}

}  // namespace cft
