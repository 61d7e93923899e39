#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "kinegen/config.hpp"
#include "kinegen/kpam.hpp"
#include "kinegen/pointcloud.hpp"
#include "kinegen/scene.hpp"
#include "kinegen/trajectory.hpp"

namespace kinegen::data {

struct RandomizationSpec {
  double xy_range = 0.10;                  // meters, uniform offset per axis
  double yaw_range = 0.5235987755982988;   // 30 degrees
  double joint_noise = 0.15;               // fraction of joint range
  std::vector<std::string> instance_pool;  // empty = all instances of the class
  bool hard = false;                       // halves xy and yaw ranges

  double effective_xy() const { return hard ? xy_range * 0.5 : xy_range; }
  double effective_yaw() const { return hard ? yaw_range * 0.5 : yaw_range; }
};

// One recorded observation/action pair. Values are quantized to f32 when
// recorded so dataset round-trips are lossless.
struct EpisodeStep {
  pc::PointCloud cloud;
  std::uint64_t cloud_seed = 0;
  std::array<float, 8> proprio{};  // ee pose 7 + gripper width
  std::array<float, 8> action{};   // target ee pose 7 + gripper command

  bool operator==(const EpisodeStep& o) const;
};

// Gripper command encoding inside actions.
inline constexpr float kActionGripperClose = 0.0f;
inline constexpr float kActionGripperHold = 0.5f;
inline constexpr float kActionGripperOpen = 1.0f;

struct Episode {
  std::string task_name;
  std::uint64_t seed = 0;
  std::vector<EpisodeStep> steps;
  std::string language;  // task description
  bool success = false;
  bool infeasible = false;  // solver found no actuation pose

  bool operator==(const Episode& o) const;
};

struct CollectionReport {
  std::string task_name;
  int runs = 0;
  int episodes_per_run = 0;
  double success_rate_mean = 0.0;
  double success_rate_std = 0.0;  // population std over runs
  std::vector<double> per_run_rates;

  std::string to_yaml() const;  // canonical, byte-stable
};

struct CollectParams {
  int runs = 5;
  int episodes_per_run = 50;
  std::uint64_t seed = 0;
  int jobs = 1;  // 0 = all hardware threads
  int obs_every = 10;
  int steps_per_segment = traj::kDefaultStepsPerSegment;
  std::size_t observation_points = 1024;
  std::size_t surface_samples = 2048;
  kpam::SolveOptions solve;
};

// Nominal scene for a task: assets placed at their canonical desk spots,
// joints at the fraction implied by the task goal (open goals start nearly
// closed and vice versa), end effector at home.
scene::SceneState build_nominal_scene(const config::TaskSpec& task,
                                      const scene::AssetLibrary& lib);

// Nominal scene plus the per-episode randomization: seeded instance pick,
// uniform xy / yaw offsets and joint noise.
scene::SceneState randomize_scene(const config::TaskSpec& task, const scene::AssetLibrary& lib,
                                  const RandomizationSpec& spec, std::uint64_t seed);

// Re-randomizes an existing scene around its current poses (used by the
// agent's verification episodes, which have no asset library at hand).
scene::SceneState perturb_scene(const scene::SceneState& scn, const RandomizationSpec& spec,
                                std::uint64_t seed);

// Solve + expand + execute one episode, recording an observation/action pair
// every `obs_every` interpolation steps. Solver failure yields a well-formed
// single-step episode with success=false and the infeasible flag set.
Episode collect_episode(const config::TaskSpec& task, const config::SolverConfig& cfg,
                        const scene::SceneState& scn, const CollectParams& params,
                        std::uint64_t episode_seed);

struct CollectResult {
  CollectionReport report;
  std::vector<Episode> successes;  // only successful episodes persist
};

// runs x episodes_per_run seeded episodes; episode seeds derive from
// (seed, run, index) so any `jobs` count produces identical output.
CollectResult collect(const config::TaskSpec& task, const config::SolverConfig& cfg,
                      const scene::AssetLibrary& lib, const RandomizationSpec& spec,
                      const CollectParams& params);

// Dataset layout: <dir>/manifest.yaml plus <dir>/<task>/<seed>.episode
// binary records (versioned header; clouds in the pointcloud wire format;
// poses as 7 little-endian f32).
std::string write_dataset(const std::vector<Episode>& episodes, const std::string& dir);
std::vector<Episode> read_dataset(const std::string& dir);

std::vector<std::uint8_t> encode_episode(const Episode& episode);
Episode decode_episode(const std::uint8_t* data, std::size_t size);

}  // namespace kinegen::data
