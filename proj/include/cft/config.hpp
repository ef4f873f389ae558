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

#ifndef CFT_CONFIG_HPP
#define CFT_CONFIG_HPP

#include <string>
#include <vector>

#include "cft/metrics.hpp"

namespace cft {

// Everything tunable in one place, loadable from JSON. Missing keys keep
// their defaults, so a config file only needs to spell out overrides.
struct Config {
  VehicleParams vehicle;
  DragModel drag{Vec3{0.3, 0.3, 0.15}};
  DfbcGains gains;

  std::vector<int> residual_layout{6, 32, 32, 3};
  Activation residual_activation = Activation::kTanh;
  double residual_init_scale = 0.1;

  TrainConfig train;
  DatasetRecipe dataset;

  // Optimizer defaults shared by the optimize/compare/bench subcommands.
  int opt_nodes = 100;
  double lambda_r = 0.1;
  double waypoint_radius = 0.10;
  double h_lb = 0.005;
  double h_ub = 0.05;
  SolveOptions solve;

  double sim_dt = 0.02;
  int sim_substeps = 10;
};

Config default_config();
Config load_config(const std::string& path);
void save_config(const Config& cfg, const std::string& path);
std::string config_to_json(const Config& cfg);
Config config_from_json(const std::string& text);

}  // namespace cft

#endif  // CFT_CONFIG_HPP
