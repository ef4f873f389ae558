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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cft/config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cft;

namespace {

WaypointSet load_waypoints(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open waypoint file " + path);
  json j;
  in >> j;
  WaypointSet wps;
  for (const auto& p : j.at("points"))
    wps.points.emplace_back(p[0].get<double>(), p[1].get<double>(), p[2].get<double>());
  if (j.contains("times")) wps.times = j.at("times").get<std::vector<double>>();
  if (wps.times.size() + 1 != wps.points.size())
    throw std::runtime_error("waypoint file needs one segment time per pair of points");
  return wps;
}

void write_json(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << j.dump(2) << '\n';
}

void write_solution_csv(const NlpSolution& sol, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "k,px,py,pz,vx,vy,vz,roll,pitch,yaw,wx,wy,wz,u1,u2,u3,u4,h\n";
  char buf[32];
  for (std::size_t k = 0; k < sol.states.size(); ++k) {
    out << k;
    for (int i = 0; i < 12; ++i) {
      std::snprintf(buf, sizeof(buf), ",%.17g", sol.states[k](i));
      out << buf;
    }
    const bool last = k + 1 == sol.states.size();
    const Vec4 u = last ? Vec4::Zero() : sol.inputs[k];
    for (int i = 0; i < 4; ++i) {
      std::snprintf(buf, sizeof(buf), ",%.17g", u(i));
      out << buf;
    }
    std::snprintf(buf, sizeof(buf), ",%.17g", last ? 0.0 : sol.steps[k]);
    out << buf << '\n';
  }
}

void write_reference_csv(const std::vector<FlatReference>& refs, double dt,
                         const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "t,px,py,pz,vx,vy,vz,ax,ay,az,jx,jy,jz,yaw\n";
  char buf[32];
  for (std::size_t k = 0; k < refs.size(); ++k) {
    std::snprintf(buf, sizeof(buf), "%.17g", dt * static_cast<double>(k));
    out << buf;
    const double vals[13] = {refs[k].p(0), refs[k].p(1), refs[k].p(2), refs[k].v(0),
                             refs[k].v(1), refs[k].v(2), refs[k].a(0), refs[k].a(1),
                             refs[k].a(2), refs[k].j(0), refs[k].j(1), refs[k].j(2),
                             refs[k].yaw};
    for (double v : vals) {
      std::snprintf(buf, sizeof(buf), ",%.17g", v);
      out << buf;
    }
    out << '\n';
  }
}

json comparison_to_json(const CourseComparison& c) {
  json j;
  j["total_time"] = c.total_time;
  j["residual_force_minsnap"] = c.residual_force_minsnap;
  j["residual_force_minres"] = c.residual_force_minres;
  j["err_baseline_minsnap"] = c.err_baseline_minsnap;
  j["err_baseline_minres"] = c.err_baseline_minres;
  j["err_neural_minsnap"] = c.err_neural_minsnap;
  j["err_neural_minres"] = c.err_neural_minres;
  j["minsnap"] = {{"mean_acc", c.stats_minsnap.mean_acc},
                  {"max_acc", c.stats_minsnap.max_acc},
                  {"mean_jerk", c.stats_minsnap.mean_jerk},
                  {"max_jerk", c.stats_minsnap.max_jerk}};
  j["minres"] = {{"mean_acc", c.stats_minres.mean_acc},
                 {"max_acc", c.stats_minres.max_acc},
                 {"mean_jerk", c.stats_minres.mean_jerk},
                 {"max_jerk", c.stats_minres.max_jerk}};
  j["solver_converged"] = c.solver_converged;
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"control-friendly trajectory toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".";
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--seed", seed, "override the config seeds")->each([&](const std::string&) {
    seed_set = true;
  });
  app.add_option("--out-dir", out_dir, "output directory");
  app.add_option("--threads", threads, "worker threads (0 = config value)");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate the closed-loop dataset");

  // train
  auto* train_cmd = app.add_subcommand("train", "train the residual model on a dataset");
  std::string train_manifest, train_out = "xi.json";
  int train_epochs = 0;
  train_cmd->add_option("--data", train_manifest, "dataset manifest.json")->required();
  train_cmd->add_option("--out", train_out, "output parameter file");
  train_cmd->add_option("--epochs", train_epochs, "override epoch count");

  // eval-model
  auto* eval_cmd = app.add_subcommand("eval-model", "prediction RMSE on a dataset split");
  std::string eval_manifest, eval_split = "test", eval_xi;
  int eval_horizon = 25;
  double eval_step = 0.0;
  eval_cmd->add_option("--data", eval_manifest, "dataset manifest.json")->required();
  eval_cmd->add_option("--split", eval_split, "train | test | validation");
  eval_cmd->add_option("--xi", eval_xi, "parameter file (omit for the nominal model)");
  eval_cmd->add_option("--horizon", eval_horizon, "rollout horizon in recording steps");
  eval_cmd->add_option("--step", eval_step, "rollout step override, s");

  // optimize
  auto* opt_cmd = app.add_subcommand("optimize", "minimum-residual trajectory optimization");
  std::string opt_waypoints, opt_xi, opt_mode = "augmented";
  int opt_nodes = 0;
  double opt_lambda = -1.0;
  bool opt_match_time = false;
  opt_cmd->add_option("--waypoints", opt_waypoints, "waypoint JSON file")->required();
  opt_cmd->add_option("--xi", opt_xi, "residual parameter file");
  opt_cmd->add_option("--mode", opt_mode, "nominal | augmented");
  opt_cmd->add_option("--nodes", opt_nodes, "node count N");
  opt_cmd->add_option("--lambda-r", opt_lambda, "control regularization weight");
  opt_cmd->add_flag("--match-time", opt_match_time, "constrain total time to the course time");

  // track
  auto* track_cmd = app.add_subcommand("track", "closed-loop tracking of a reference");
  std::string track_waypoints, track_xi, track_variant = "baseline";
  track_cmd->add_option("--waypoints", track_waypoints, "waypoint JSON file")->required();
  track_cmd->add_option("--xi", track_xi, "residual parameter file (neural variant)");
  track_cmd->add_option("--variant", track_variant, "baseline | neural");

  // compare
  auto* cmp_cmd = app.add_subcommand("compare", "min-snap vs min-residual head-to-head");
  std::string cmp_xi;
  std::vector<std::uint64_t> cmp_seeds{11, 12, 13};
  cmp_cmd->add_option("--xi", cmp_xi, "residual parameter file")->required();
  cmp_cmd->add_option("--course-seeds", cmp_seeds, "seeds of the random courses");

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "solver timing sweep");
  std::vector<int> bench_sizes{50, 100, 200, 400};
  std::string bench_xi;
  bench_cmd->add_option("--sizes", bench_sizes, "node counts");
  bench_cmd->add_option("--xi", bench_xi, "residual parameter file (augmented mode)");

  CLI11_PARSE(app, argc, argv);

  try {
    Config cfg = config_path.empty() ? default_config() : load_config(config_path);
    if (seed_set) {
      cfg.dataset.seed = seed;
      cfg.train.seed = seed;
    }
    if (threads > 0) cfg.train.threads = threads;
    fs::create_directories(out_dir);

    auto load_xi_or = [&](const std::string& path) {
      return path.empty()
                 ? init_params(cfg.residual_layout, cfg.train.seed, cfg.residual_init_scale,
                               cfg.residual_activation)
                 : load_params(path);
    };
    auto solve_opts_from = [&](void) { return cfg.solve; };

    if (*gen) {
      const DatasetManifest m = generate_dataset(cfg.dataset, cfg.gains, cfg.vehicle, out_dir);
      json j;
      j["manifest"] = (fs::path(out_dir) / "manifest.json").string();
      j["train"] = m.train_files.size();
      j["test"] = m.test_files.size();
      j["validation"] = m.validation_files.size();
      j["recipe_hash"] = m.recipe_hash;
      std::cout << j.dump(2) << std::endl;
    } else if (*train_cmd) {
      if (train_epochs > 0) cfg.train.max_epochs = train_epochs;
      const auto data = load_split(train_manifest, "train");
      const ResidualParams init = init_params(cfg.residual_layout, cfg.train.seed,
                                              cfg.residual_init_scale, cfg.residual_activation);
      const TrainResult result = train(data, cfg.train, LossWeights::identity_over_rigid_body(),
                                       init, cfg.gains, cfg.vehicle);
      const std::string xi_path = (fs::path(out_dir) / train_out).string();
      save_params(result.xi, xi_path);
      json j;
      j["xi"] = xi_path;
      j["epochs"] = result.loss_history.size();
      j["loss_history"] = result.loss_history;
      write_json(j, (fs::path(out_dir) / "train_report.json").string());
      std::cout << j.dump(2) << std::endl;
    } else if (*eval_cmd) {
      const auto data = load_split(eval_manifest, eval_split);
      ResidualParams xi;
      const ResidualParams* xi_ptr = nullptr;
      if (!eval_xi.empty()) {
        xi = load_params(eval_xi);
        xi_ptr = &xi;
      }
      const PredictionReport rep =
          prediction_rmse(data, xi_ptr, cfg.gains, cfg.vehicle, eval_horizon, eval_step);
      json j;
      j["model"] = xi_ptr ? "hybrid" : "nominal";
      j["split"] = eval_split;
      j["acc_rmse"] = rep.acc_rmse;
      j["pos_rmse"] = rep.pos_rmse;
      j["vel_rmse"] = rep.vel_rmse;
      j["segments"] = rep.segments;
      j["faults"] = rep.faults;
      std::cout << j.dump(2) << std::endl;
    } else if (*opt_cmd) {
      if (opt_nodes > 0) cfg.opt_nodes = opt_nodes;
      if (opt_lambda >= 0) cfg.lambda_r = opt_lambda;
      if (cfg.lambda_r < 0.01)
        std::cerr << "warning: small lambda_r (" << cfg.lambda_r
                  << ") can make the optimization ill-conditioned\n";
      const WaypointSet course = load_waypoints(opt_waypoints);
      const DynamicsMode mode =
          opt_mode == "nominal" ? DynamicsMode::kNominal : DynamicsMode::kAugmented;
      const ResidualParams xi = load_xi_or(opt_xi);
      std::optional<double> total_time;
      if (opt_match_time) total_time = course.total_time();
      NlpProblem problem = build_problem(course, cfg.opt_nodes, mode, xi, cfg.lambda_r,
                                         cfg.vehicle, total_time, cfg.waypoint_radius);
      problem.h_lb = cfg.h_lb;
      problem.h_ub = cfg.h_ub;
      const NlpSolution sol = solve(problem, warm_start(problem), solve_opts_from());
      write_solution_csv(sol, (fs::path(out_dir) / "solution.csv").string());
      json j;
      j["objective"] = sol.objective;
      j["max_violation"] = sol.max_violation;
      j["iterations"] = sol.iterations;
      j["outer_iterations"] = sol.outer_iterations;
      j["kkt_residual"] = sol.kkt_residual;
      j["converged"] = sol.converged;
      j["wall_time_s"] = sol.wall_time_s;
      j["mean_residual_force"] = mean_residual_magnitude(sol.states, xi, cfg.vehicle.m);
      if (sol.converged) {
        const auto refs = export_reference(sol, cfg.vehicle, cfg.sim_dt);
        write_reference_csv(refs, cfg.sim_dt, (fs::path(out_dir) / "reference.csv").string());
        j["reference"] = (fs::path(out_dir) / "reference.csv").string();
      }
      write_json(j, (fs::path(out_dir) / "diagnostics.json").string());
      std::cout << j.dump(2) << std::endl;
      if (!sol.converged) return 2;
    } else if (*track_cmd) {
      const WaypointSet course = load_waypoints(track_waypoints);
      const PiecewisePoly poly = solve_min_snap(course);
      const auto refs = sample_references(poly, cfg.sim_dt);
      const ResidualParams xi = load_xi_or(track_xi);
      SimOptions sim_opts;
      sim_opts.dt = cfg.sim_dt;
      sim_opts.substeps = cfg.sim_substeps;
      sim_opts.drag = cfg.drag;
      Vec15 x0 = Vec15::Zero();
      x0.head<3>() = refs.front().p;
      const ControllerVariant variant = track_variant == "neural"
                                            ? ControllerVariant::kNeuralFeedforward
                                            : ControllerVariant::kBaseline;
      const TrackingLog log =
          simulate_tracking(refs, variant, xi, cfg.gains, cfg.vehicle, sim_opts, x0);
      write_trajectory_csv((fs::path(out_dir) / "tracking.csv").string(), to_trajectory(log));
      json j;
      j["variant"] = track_variant;
      j["mean_pos_error"] = mean_position_error(log);
      j["max_pos_error"] = max_position_error(log);
      std::cout << j.dump(2) << std::endl;
    } else if (*cmp_cmd) {
      const ResidualParams xi = load_params(cmp_xi);
      CompareConfig ccfg;
      ccfg.N = cfg.opt_nodes;
      ccfg.lambda_r = cfg.lambda_r;
      ccfg.waypoint_radius = cfg.waypoint_radius;
      ccfg.dt = cfg.sim_dt;
      ccfg.substeps = cfg.sim_substeps;
      ccfg.solve = cfg.solve;
      json j = json::array();
      for (std::uint64_t s : cmp_seeds) {
        WaypointSet course = random_waypoints(cfg.dataset.bounds, cfg.dataset.n_waypoints, s,
                                              cfg.dataset.nominal_speed, cfg.dataset.decay);
        course.rescale_total_time(cfg.dataset.total_time);
        json entry = comparison_to_json(
            compare_trajectories(course, xi, cfg.gains, cfg.vehicle, cfg.drag, ccfg));
        entry["course_seed"] = s;
        j.push_back(entry);
      }
      write_json(j, (fs::path(out_dir) / "comparison.json").string());
      std::cout << j.dump(2) << std::endl;
    } else if (*bench_cmd) {
      const ResidualParams xi = load_xi_or(bench_xi);
      const auto records =
          bench_solvers(bench_sizes, {DynamicsMode::kNominal, DynamicsMode::kAugmented}, xi,
                        cfg.vehicle, seed_set ? seed : 7, solve_opts_from());
      json j = json::array();
      for (const auto& r : records) {
        j.push_back({{"N", r.N},
                     {"mode", r.mode == DynamicsMode::kNominal ? "nominal" : "augmented"},
                     {"wall_time_s", r.wall_time_s},
                     {"iterations", r.iterations},
                     {"per_iteration_s", r.per_iteration_s},
                     {"objective", r.objective},
                     {"converged", r.converged}});
      }
      write_json(j, (fs::path(out_dir) / "bench.json").string());
      std::cout << j.dump(2) << std::endl;
    }
  } catch (const std::exception& e) {
    json err;
    err["error"] = e.what();
    std::cout << err.dump() << std::endl;
    return 1;
  }
  return 0;
}
