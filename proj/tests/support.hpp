#pragma once

// Shared helpers for the test suites: bundled asset paths, file loading,
// seeded random poses and the independent grid-search oracle used to pin the
// pose solver down.

#include <fstream>
#include <sstream>
#include <string>

#include "kinegen/config.hpp"
#include "kinegen/geometry.hpp"
#include "kinegen/rng.hpp"
#include "kinegen/scene.hpp"

namespace testsupport {

inline std::string asset_dir() { return KINEGEN_ASSET_DIR; }
inline std::string fixture_dir() { return KINEGEN_FIXTURE_DIR; }

inline std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("test support: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline kinegen::scene::AssetLibrary bundled_library() {
  return kinegen::scene::load_asset_library(asset_dir() + "/manifest.yaml");
}

inline kinegen::scene::SceneState bundled_scene(const std::string& name) {
  static kinegen::scene::AssetLibrary lib = bundled_library();
  return kinegen::scene::load_scene(asset_dir() + "/scenes/" + name, lib);
}

inline kinegen::config::SolverConfig bundled_config(const std::string& name) {
  return kinegen::config::parse_solver_config(read_file(asset_dir() + "/configs/" + name));
}

inline kinegen::config::TaskSpec bundled_task(const std::string& name) {
  return kinegen::config::parse_task_spec(read_file(asset_dir() + "/tasks/" + name));
}

inline kinegen::UnitQuat random_quat(kinegen::rng::Stream& stream) {
  return kinegen::UnitQuat(stream.next_gaussian(), stream.next_gaussian(),
                           stream.next_gaussian(), stream.next_gaussian());
}

inline kinegen::Pose random_pose(kinegen::rng::Stream& stream, double span = 1.0) {
  kinegen::Pose p;
  p.rotation = random_quat(stream);
  p.translation = {stream.next_in(-span, span), stream.next_in(-span, span),
                   stream.next_in(-span, span)};
  return p;
}

// ---------------------------------------------------------------------------
// Brute-force oracle: dense Euler-angle grid with contact-anchored
// translations, one refinement pass around the best coarse pose. Residual
// math is written out here, independent of the solver implementation.

struct OracleResult {
  bool feasible = false;
  double best_cost = 0.0;
  kinegen::Pose best_pose;
};

namespace detail {

struct OraclePrep {
  struct Axis {
    kinegen::Vec3 tool_dir_local;
    kinegen::Vec3 target_dir_world;
    double inner = 0.0;
    double tol = 0.0;
  };
  kinegen::Vec3 contact_local;
  kinegen::Vec3 contact_world;
  double contact_tol = 0.0;
  std::vector<Axis> axes;
};

inline OraclePrep oracle_prepare(const kinegen::config::SolverConfig& cfg,
                                 const kinegen::scene::SceneState& scn) {
  using namespace kinegen;
  OraclePrep prep;
  for (const config::Constraint& c : cfg.constraint_list) {
    if (c.type == config::ConstraintType::point2point_constraint) {
      prep.contact_local = scn.end_effector.local_keypoint(c.keypoint_name);
      prep.contact_world =
          scene::keypoint_world(scn, scene::KeypointRef{"", c.target_keypoint_name});
      prep.contact_tol = c.tolerance;
      continue;
    }
    OraclePrep::Axis axis;
    const Vec3 a = scn.end_effector.local_keypoint(c.axis_from_keypoint_name);
    const Vec3 b = scn.end_effector.local_keypoint(c.axis_to_keypoint_name);
    axis.tool_dir_local = (b - a).normalized();
    if (config::is_frame_constraint(c.type)) {
      const Vec3 t = c.target_axis.normalized();
      axis.target_dir_world = c.target_axis_frame == config::AxisFrame::world
                                  ? t
                                  : scn.first_articulated()->base_pose.rotation.rotate(t);
    } else {
      const Vec3 from =
          scene::keypoint_world(scn, scene::KeypointRef{"", c.target_axis_from_keypoint_name});
      const Vec3 to =
          scene::keypoint_world(scn, scene::KeypointRef{"", c.target_axis_to_keypoint_name});
      axis.target_dir_world = (to - from).normalized();
    }
    axis.inner = c.target_inner_product;
    axis.tol = c.tolerance;
    prep.axes.push_back(axis);
  }
  return prep;
}

inline void oracle_try(const OraclePrep& prep, const kinegen::UnitQuat& rot,
                       const kinegen::Vec3& offset, OracleResult& out) {
  using namespace kinegen;
  Pose pose;
  pose.rotation = rot;
  pose.translation = prep.contact_world + offset - rot.rotate(prep.contact_local);
  const Vec3 contact_res = pose.apply(prep.contact_local) - prep.contact_world;
  double cost = contact_res.squared_norm() / (prep.contact_tol * prep.contact_tol);
  bool ok = contact_res.norm() <= prep.contact_tol;
  for (const OraclePrep::Axis& axis : prep.axes) {
    const double r = rot.rotate(axis.tool_dir_local).dot(axis.target_dir_world) - axis.inner;
    cost += (r * r) / (axis.tol * axis.tol);
    ok = ok && std::abs(r) <= axis.tol;
  }
  if (cost < out.best_cost) {
    out.best_cost = cost;
    out.best_pose = pose;
  }
  out.feasible = out.feasible || ok;
}

}  // namespace detail

inline OracleResult grid_oracle(const kinegen::config::SolverConfig& cfg,
                                const kinegen::scene::SceneState& scn) {
  using namespace kinegen;
  const detail::OraclePrep prep = detail::oracle_prepare(cfg, scn);
  constexpr double kDeg = 3.14159265358979323846 / 180.0;

  OracleResult best;
  best.best_cost = std::numeric_limits<double>::infinity();
  double best_yaw = 0.0, best_pitch = 0.0, best_roll = 0.0;

  auto orientation = [](double yaw, double pitch, double roll) {
    return UnitQuat::from_axis_angle({0, 0, 1}, yaw) *
           UnitQuat::from_axis_angle({0, 1, 0}, pitch) *
           UnitQuat::from_axis_angle({1, 0, 0}, roll);
  };

  const double coarse = 5.0 * kDeg;
  const double t_step = 0.005;
  for (double yaw = -180.0 * kDeg; yaw < 180.0 * kDeg; yaw += coarse)
    for (double pitch = -90.0 * kDeg; pitch <= 90.0 * kDeg; pitch += coarse)
      for (double roll = -180.0 * kDeg; roll < 180.0 * kDeg; roll += coarse) {
        const UnitQuat rot = orientation(yaw, pitch, roll);
        const double before = best.best_cost;
        for (int ox = -1; ox <= 1; ++ox)
          for (int oy = -1; oy <= 1; ++oy)
            for (int oz = -1; oz <= 1; ++oz)
              detail::oracle_try(prep, rot, {ox * t_step, oy * t_step, oz * t_step}, best);
        if (best.best_cost < before) {
          best_yaw = yaw;
          best_pitch = pitch;
          best_roll = roll;
        }
      }

  // One refinement pass around the best coarse orientation.
  const double fine = coarse / 8.0;
  for (double yaw = best_yaw - coarse; yaw <= best_yaw + coarse; yaw += fine)
    for (double pitch = best_pitch - coarse; pitch <= best_pitch + coarse; pitch += fine)
      for (double roll = best_roll - coarse; roll <= best_roll + coarse; roll += fine) {
        const UnitQuat rot = orientation(yaw, pitch, roll);
        for (int ox = -1; ox <= 1; ++ox)
          for (int oy = -1; oy <= 1; ++oy)
            for (int oz = -1; oz <= 1; ++oz)
              detail::oracle_try(prep, rot,
                                 {ox * 0.00125, oy * 0.00125, oz * 0.00125}, best);
      }
  return best;
}

}  // namespace testsupport
