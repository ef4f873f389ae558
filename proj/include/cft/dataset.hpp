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

#ifndef CFT_DATASET_HPP
#define CFT_DATASET_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "cft/minsnap.hpp"
#include "cft/sim.hpp"

namespace cft {

// Closed-loop data-generation recipe: minimum-snap references through random
// waypoints, flown by the baseline DFBC on the drag-corrupted plant.
struct DatasetRecipe {
  int n_train = 40;           // trajectories later split 8:2 into train/test
  int n_validation = 3;
  int n_waypoints = 5;
  Box bounds;                 // 4 x 4 x 2 m box by default
  double total_time = 4.0;    // every trajectory rescaled to this duration, s
  double dt = 0.02;
  int substeps = 10;
  double nominal_speed = 2.0;
  double decay = 1.0;
  DragModel drag{Vec3{0.3, 0.3, 0.15}};
  std::uint64_t seed = 1;
  // Only trackable flights are recorded: a candidate course whose baseline
  // flight diverges (or hits the Euler singularity) is discarded and the
  // course seed advances. Mean positional error threshold in meters;
  // infinity keeps every flight.
  double max_mean_error = 1.0;
};

struct DatasetManifest {
  std::vector<std::string> train_files;
  std::vector<std::string> test_files;
  std::vector<std::string> validation_files;
  std::string recipe_hash;
};

// CSV schema, one row per sample:
//   t, px,py,pz, vx,vy,vz, roll,pitch,yaw, wx,wy,wz, zx,zy,zz,
//   ref_px..pz, ref_vx..vz, ref_ax..az, ref_jx..jz, ref_yaw
// Values are printed with %.17g so a reread reproduces them bit-exactly.
void write_trajectory_csv(const std::string& path, const Trajectory& traj);
Trajectory read_trajectory_csv(const std::string& path);

// Generate the full dataset under out_dir and write manifest.json next to
// the CSVs. Deterministic for a fixed recipe (including its seed).
DatasetManifest generate_dataset(const DatasetRecipe& recipe, const DfbcGains& gains,
                                 const VehicleParams& params, const std::string& out_dir);

DatasetManifest read_manifest(const std::string& path);
void write_manifest(const DatasetManifest& manifest, const std::string& path);

// Load one manifest split ("train", "test", "validation"); file paths are
// resolved relative to the manifest's directory.
std::vector<Trajectory> load_split(const std::string& manifest_path, const std::string& split);

// Stable FNV-1a hex digest used to stamp manifests with their recipe.
std::string recipe_hash(const DatasetRecipe& recipe);

}  // namespace cft

#endif  // CFT_DATASET_HPP
