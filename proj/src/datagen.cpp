#include "kinegen/datagen.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "kinegen/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace kinegen::data {

namespace fs = std::filesystem;

namespace {

const Vec3 kArticulatedNominal{0.55, 0.0, 0.0};
const Vec3 kRigidNominal{0.30, -0.25, 0.0};
const Vec3 kHomePosition{0.25, 0.25, 0.40};

Pose home_ee_pose() {
  // Fingers down: the tool axis (tail -> head, local +z) points at the table.
  Pose p;
  p.rotation = UnitQuat(0.0, 1.0, 0.0, 0.0);
  p.translation = kHomePosition;
  return p;
}

std::string fmt_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

// Joint fraction the task starts from: closing tasks begin open, opening
// tasks begin nearly closed, everything else rests.
double nominal_joint_fraction(const config::TaskSpec& task, const scene::Joint& joint) {
  for (scene::SuccessCriterion c : task.success_criteria) {
    if (c == scene::SuccessCriterion::articulated_closed) return 0.85;
    if (c == scene::SuccessCriterion::articulated_open) return 0.15;
  }
  return joint.fraction(joint.rest_value);
}

double rigid_rest_height(const scene::RigidObject& body) {
  double top = 0.0;
  for (const scene::Shape& s : body.shapes) {
    const double reach = s.kind == scene::ShapeKind::box ? s.half_extents.z : s.half_height;
    top = std::max(top, reach + s.local_pose.translation.z);
  }
  return top;
}

}  // namespace

scene::SceneState build_nominal_scene(const config::TaskSpec& task,
                                      const scene::AssetLibrary& lib) {
  scene::SceneState scn;
  scn.end_effector.pose = home_ee_pose();
  int articulated_ix = 0;
  int rigid_ix = 0;
  for (const std::string& asset : task.assets_used) {
    if (lib.has_class(asset)) {
      scene::PlacedObject placed;
      placed.object = lib.instantiate(asset, lib.asset_class(asset).instances.front().id);
      placed.base_pose =
          Pose::from_translation(kArticulatedNominal + Vec3{0.0, 0.5 * articulated_ix, 0.0});
      const scene::Joint& joint = placed.object->joint;
      placed.joint_value =
          joint.lower + nominal_joint_fraction(task, joint) * joint.range();
      scn.objects[asset] = std::move(placed);
      ++articulated_ix;
      continue;
    }
    if (lib.has_rigid(asset)) {
      scene::PlacedBody placed;
      placed.object = lib.instantiate_rigid(asset);
      placed.pose = Pose::from_translation(kRigidNominal + Vec3{0.0, -0.2 * rigid_ix,
                                                                rigid_rest_height(*placed.object)});
      scn.rigid_bodies[asset] = std::move(placed);
      ++rigid_ix;
      continue;
    }
    throw UnknownReferenceError("task uses unknown asset: " + asset);
  }
  return scn;
}

scene::SceneState randomize_scene(const config::TaskSpec& task, const scene::AssetLibrary& lib,
                                  const RandomizationSpec& spec, std::uint64_t seed) {
  scene::SceneState scn = build_nominal_scene(task, lib);
  rng::Stream stream(seed);

  for (auto& [name, placed] : scn.objects) {
    // Instance pick first, then pose noise, then joint noise; the draw order
    // is part of the determinism contract.
    const scene::AssetClass& cls = lib.asset_class(placed.object->class_name);
    std::vector<std::string> pool;
    for (const scene::AssetInstance& inst : cls.instances) {
      if (spec.instance_pool.empty() ||
          std::find(spec.instance_pool.begin(), spec.instance_pool.end(), inst.id) !=
              spec.instance_pool.end())
        pool.push_back(inst.id);
    }
    if (pool.empty()) throw UnknownReferenceError("instance pool empty for " + name);
    const std::string id = pool[stream.next_below(pool.size())];

    const double fraction = placed.object->joint.fraction(placed.joint_value);
    placed.object = lib.instantiate(placed.object->class_name, id);

    const double dx = stream.next_in(-spec.effective_xy(), spec.effective_xy());
    const double dy = stream.next_in(-spec.effective_xy(), spec.effective_xy());
    const double yaw = stream.next_in(-spec.effective_yaw(), spec.effective_yaw());
    placed.base_pose.translation += Vec3{dx, dy, 0.0};
    placed.base_pose.rotation = UnitQuat::from_axis_angle({0, 0, 1}, yaw);

    const scene::Joint& joint = placed.object->joint;
    const double jitter = stream.next_in(-spec.joint_noise, spec.joint_noise) * joint.range();
    placed.joint_value =
        std::clamp(joint.lower + fraction * joint.range() + jitter, joint.lower, joint.upper);
  }
  for (auto& [name, placed] : scn.rigid_bodies) {
    const double dx = stream.next_in(-spec.effective_xy(), spec.effective_xy());
    const double dy = stream.next_in(-spec.effective_xy(), spec.effective_xy());
    placed.pose.translation += Vec3{dx, dy, 0.0};
  }
  return scn;
}

scene::SceneState perturb_scene(const scene::SceneState& scn, const RandomizationSpec& spec,
                                std::uint64_t seed) {
  scene::SceneState out = scn;
  rng::Stream stream(seed);
  for (auto& [name, placed] : out.objects) {
    const double dx = stream.next_in(-spec.effective_xy(), spec.effective_xy());
    const double dy = stream.next_in(-spec.effective_xy(), spec.effective_xy());
    const double yaw = stream.next_in(-spec.effective_yaw(), spec.effective_yaw());
    placed.base_pose.translation += Vec3{dx, dy, 0.0};
    placed.base_pose.rotation =
        UnitQuat::from_axis_angle({0, 0, 1}, yaw) * placed.base_pose.rotation;
    const scene::Joint& joint = placed.object->joint;
    const double jitter = stream.next_in(-spec.joint_noise, spec.joint_noise) * joint.range();
    placed.joint_value = std::clamp(placed.joint_value + jitter, joint.lower, joint.upper);
  }
  for (auto& [name, placed] : out.rigid_bodies) {
    const double dx = stream.next_in(-spec.effective_xy(), spec.effective_xy());
    const double dy = stream.next_in(-spec.effective_xy(), spec.effective_xy());
    placed.pose.translation += Vec3{dx, dy, 0.0};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Episode recording

namespace {

float quantize(double v) { return static_cast<float>(v); }

std::array<float, 8> pack_pose(const Pose& pose, double extra) {
  const std::array<double, 7> a = pose.to_array();
  std::array<float, 8> out;
  for (int i = 0; i < 7; ++i) out[i] = quantize(a[i]);
  out[7] = quantize(extra);
  return out;
}

pc::PointCloud quantized(pc::PointCloud cloud) {
  for (Vec3& p : cloud.points) {
    p.x = static_cast<double>(static_cast<float>(p.x));
    p.y = static_cast<double>(static_cast<float>(p.y));
    p.z = static_cast<double>(static_cast<float>(p.z));
  }
  return cloud;
}

float gripper_command_value(traj::GripperCommand cmd) {
  switch (cmd) {
    case traj::GripperCommand::close: return kActionGripperClose;
    case traj::GripperCommand::open: return kActionGripperOpen;
    case traj::GripperCommand::hold: return kActionGripperHold;
  }
  return kActionGripperHold;
}

EpisodeStep make_step(const scene::SceneState& state, const Pose& action_pose,
                      float gripper_command, const CollectParams& params,
                      std::uint64_t obs_seed) {
  EpisodeStep step;
  pc::PointCloud full = pc::sample_scene(state, params.surface_samples, obs_seed);
  step.cloud = quantized(
      pc::farthest_point_sample(full, std::min(params.observation_points, full.size()), obs_seed));
  step.cloud_seed = obs_seed;
  step.proprio = pack_pose(state.end_effector.pose, state.end_effector.width);
  step.action = pack_pose(action_pose, gripper_command);
  return step;
}

}  // namespace

bool EpisodeStep::operator==(const EpisodeStep& o) const {
  if (cloud_seed != o.cloud_seed || proprio != o.proprio || action != o.action) return false;
  if (cloud.seed != o.cloud.seed || cloud.points.size() != o.cloud.points.size()) return false;
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const Vec3& a = cloud.points[i];
    const Vec3& b = o.cloud.points[i];
    if (a.x != b.x || a.y != b.y || a.z != b.z) return false;
  }
  return true;
}

bool Episode::operator==(const Episode& o) const {
  return task_name == o.task_name && seed == o.seed && language == o.language &&
         success == o.success && infeasible == o.infeasible && steps == o.steps;
}

Episode collect_episode(const config::TaskSpec& task, const config::SolverConfig& cfg,
                        const scene::SceneState& scn, const CollectParams& params,
                        std::uint64_t episode_seed) {
  Episode episode;
  episode.task_name = task.task_name;
  episode.seed = episode_seed;
  episode.language = task.task_description;

  kpam::SolveOptions solve = params.solve;
  solve.seed = rng::derive(episode_seed, 0xA0);

  kpam::ActuationSolution sol;
  try {
    sol = kpam::solve_actuation_pose(cfg, scn, solve);
  } catch (const Error&) {
    episode.infeasible = true;
    episode.success = false;
    episode.steps.push_back(make_step(scn, scn.end_effector.pose, kActionGripperHold, params,
                                      rng::derive(episode_seed, 0)));
    return episode;
  }

  const traj::MotionPlan plan = traj::expand_motions(cfg, sol.pose, scn);
  const traj::ExecutionTrace trace =
      traj::execute(plan, scn, params.steps_per_segment, task.success_criteria);

  // Observation every obs_every steps plus the final step; the action is the
  // next recorded target pose with the gripper command at its arrival.
  std::vector<std::size_t> recorded;
  for (std::size_t i = 0; i < trace.steps.size(); i += params.obs_every) recorded.push_back(i);
  if (recorded.empty() || recorded.back() != trace.steps.size() - 1)
    recorded.push_back(trace.steps.size() - 1);

  for (std::size_t r = 0; r < recorded.size(); ++r) {
    const traj::TraceStep& now = trace.steps[recorded[r]];
    Pose target = now.state.end_effector.pose;
    float command = kActionGripperHold;
    if (r + 1 < recorded.size()) {
      const traj::TraceStep& next = trace.steps[recorded[r + 1]];
      target = next.state.end_effector.pose;
      const traj::Waypoint& wp = plan.waypoints[std::min(next.waypoint_index,
                                                         plan.waypoints.size() - 1)];
      if (next.fraction >= 1.0) command = gripper_command_value(wp.gripper);
    }
    episode.steps.push_back(
        make_step(now.state, target, command, params, rng::derive(episode_seed, recorded[r] + 1)));
  }
  episode.success = trace.all_passed();
  return episode;
}

CollectResult collect(const config::TaskSpec& task, const config::SolverConfig& cfg,
                      const scene::AssetLibrary& lib, const RandomizationSpec& spec,
                      const CollectParams& params) {
  const int total = params.runs * params.episodes_per_run;
  std::vector<Episode> episodes(total);

  auto one = [&](int i) {
    const int run = i / params.episodes_per_run;
    const int index = i % params.episodes_per_run;
    const std::uint64_t episode_seed = rng::derive(params.seed, run, index);
    const scene::SceneState scn = randomize_scene(task, lib, spec, episode_seed);
    episodes[i] = collect_episode(task, cfg, scn, params, episode_seed);
  };

#ifdef _OPENMP
  if (params.jobs != 1) {
    const int threads = params.jobs > 0 ? params.jobs : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(threads)
    for (int i = 0; i < total; ++i) one(i);
  } else {
    for (int i = 0; i < total; ++i) one(i);
  }
#else
  for (int i = 0; i < total; ++i) one(i);
#endif

  CollectResult result;
  result.report.task_name = task.task_name;
  result.report.runs = params.runs;
  result.report.episodes_per_run = params.episodes_per_run;
  for (int run = 0; run < params.runs; ++run) {
    int ok = 0;
    for (int index = 0; index < params.episodes_per_run; ++index) {
      const Episode& e = episodes[run * params.episodes_per_run + index];
      if (e.success) {
        ++ok;
        result.successes.push_back(e);
      }
    }
    result.report.per_run_rates.push_back(static_cast<double>(ok) /
                                          static_cast<double>(params.episodes_per_run));
  }
  double mean = 0.0;
  for (double r : result.report.per_run_rates) mean += r;
  mean /= static_cast<double>(params.runs);
  double var = 0.0;
  for (double r : result.report.per_run_rates) var += (r - mean) * (r - mean);
  result.report.success_rate_mean = mean;
  result.report.success_rate_std = std::sqrt(var / static_cast<double>(params.runs));
  return result;
}

std::string CollectionReport::to_yaml() const {
  std::ostringstream os;
  os << "task_name: " << task_name << "\n";
  os << "runs: " << runs << "\n";
  os << "episodes_per_run: " << episodes_per_run << "\n";
  os << "success_rate_mean: " << fmt_double(success_rate_mean) << "\n";
  os << "success_rate_std: " << fmt_double(success_rate_std) << "\n";
  os << "per_run_rates: [";
  for (std::size_t i = 0; i < per_run_rates.size(); ++i) {
    if (i) os << ", ";
    os << fmt_double(per_run_rates[i]);
  }
  os << "]\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Dataset persistence

namespace {

constexpr char kMagic[4] = {'K', 'G', 'E', 'P'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}
void put_f32(std::vector<std::uint8_t>& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}
void put_str(std::vector<std::uint8_t>& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

struct Reader {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > size) throw ParseError("episode blob truncated", pos);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(data + pos), n);
    pos += n;
    return s;
  }
};

}  // namespace

std::vector<std::uint8_t> encode_episode(const Episode& episode) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, kVersion);
  put_u64(out, episode.seed);
  out.push_back(episode.success ? 1 : 0);
  out.push_back(episode.infeasible ? 1 : 0);
  put_str(out, episode.task_name);
  put_str(out, episode.language);
  put_u64(out, episode.steps.size());
  for (const EpisodeStep& step : episode.steps) {
    const std::vector<std::uint8_t> cloud = pc::encode_cloud(step.cloud);
    out.insert(out.end(), cloud.begin(), cloud.end());
    put_u64(out, step.cloud_seed);
    for (float f : step.proprio) put_f32(out, f);
    for (float f : step.action) put_f32(out, f);
  }
  return out;
}

Episode decode_episode(const std::uint8_t* data, std::size_t size) {
  Reader r{data, size};
  r.need(4);
  if (std::memcmp(data, kMagic, 4) != 0) throw ParseError("not an episode record");
  r.pos = 4;
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    throw FormatVersionMismatch("episode format version " + std::to_string(version) +
                                ", expected " + std::to_string(kVersion));
  Episode e;
  e.seed = r.u64();
  r.need(2);
  e.success = data[r.pos++] != 0;
  e.infeasible = data[r.pos++] != 0;
  e.task_name = r.str();
  e.language = r.str();
  const std::uint64_t steps = r.u64();
  for (std::uint64_t i = 0; i < steps; ++i) {
    EpisodeStep step;
    std::size_t consumed = 0;
    step.cloud = pc::decode_cloud(data + r.pos, size - r.pos, &consumed);
    r.pos += consumed;
    step.cloud_seed = r.u64();
    step.cloud.seed = step.cloud_seed;
    for (float& f : step.proprio) f = r.f32();
    for (float& f : step.action) f = r.f32();
    e.steps.push_back(std::move(step));
  }
  return e;
}

std::string write_dataset(const std::vector<Episode>& episodes, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create dataset dir " + dir + ": " + ec.message());

  std::map<std::string, std::vector<const Episode*>> by_task;
  for (const Episode& e : episodes) by_task[e.task_name].push_back(&e);

  for (const auto& [task, list] : by_task) {
    fs::create_directories(fs::path(dir) / task, ec);
    if (ec) throw IoError("cannot create task dir: " + ec.message());
    for (const Episode* e : list) {
      const fs::path path = fs::path(dir) / task / (std::to_string(e->seed) + ".episode");
      const std::vector<std::uint8_t> blob = encode_episode(*e);
      std::ofstream out(path, std::ios::binary);
      if (!out) throw IoError("cannot write " + path.string());
      out.write(reinterpret_cast<const char*>(blob.data()), blob.size());
    }
  }

  std::ostringstream manifest;
  manifest << "version: 1\n";
  manifest << "tasks:\n";
  for (const auto& [task, list] : by_task) {
    manifest << "- name: " << task << "\n";
    manifest << "  episodes: " << list.size() << "\n";
    manifest << "  seeds: [";
    for (std::size_t i = 0; i < list.size(); ++i) {
      if (i) manifest << ", ";
      manifest << list[i]->seed;
    }
    manifest << "]\n";
  }
  const fs::path manifest_path = fs::path(dir) / "manifest.yaml";
  std::ofstream out(manifest_path);
  if (!out) throw IoError("cannot write " + manifest_path.string());
  out << manifest.str();
  return manifest_path.string();
}

std::vector<Episode> read_dataset(const std::string& dir) {
  const fs::path manifest_path = fs::path(dir) / "manifest.yaml";
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open " + manifest_path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  YAML::Node root;
  try {
    root = YAML::Load(ss.str());
  } catch (const YAML::Exception& e) {
    throw ParseError(std::string("dataset manifest: ") + e.what());
  }
  if (root["version"].as<int>(0) != 1)
    throw FormatVersionMismatch("dataset manifest version " +
                                root["version"].as<std::string>("?"));
  std::vector<Episode> episodes;
  for (const YAML::Node& task : root["tasks"]) {
    const std::string name = task["name"].as<std::string>();
    for (const YAML::Node& seed : task["seeds"]) {
      const fs::path path = fs::path(dir) / name / (seed.as<std::string>() + ".episode");
      std::ifstream ep(path, std::ios::binary);
      if (!ep) throw IoError("missing episode file " + path.string());
      std::vector<std::uint8_t> blob((std::istreambuf_iterator<char>(ep)),
                                     std::istreambuf_iterator<char>());
      episodes.push_back(decode_episode(blob.data(), blob.size()));
    }
  }
  return episodes;
}

}  // namespace kinegen::data
