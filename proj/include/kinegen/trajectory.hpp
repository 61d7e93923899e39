#pragma once

#include <string>
#include <variant>
#include <vector>

#include "kinegen/config.hpp"
#include "kinegen/kpam.hpp"
#include "kinegen/scene.hpp"

namespace kinegen::traj {

inline constexpr double kBindDistance = 0.02;    // max gripper-target gap for grasping
inline constexpr double kFollowDistance = 0.03;  // attachment break distance
inline constexpr int kDefaultStepsPerSegment = 10;
inline constexpr double kMaxRotateStep = 0.2;  // rad per expanded waypoint of a rotate motion
inline constexpr double kOpenWidth = 0.04;

enum class GripperCommand { open, close, hold };
enum class WaypointTag { pre, actuation, post };

struct Waypoint {
  Pose pose;
  GripperCommand gripper = GripperCommand::hold;
  WaypointTag tag = WaypointTag::pre;
};

struct MotionPlan {
  std::vector<Waypoint> waypoints;
  config::SolverConfig source_config;

  std::size_t actuation_index() const;
};

enum class Outcome { completed, clamped, detached_early };

struct TraceStep {
  scene::SceneState state;
  std::size_t waypoint_index = 0;  // segment end waypoint being approached
  double fraction = 0.0;           // 0 at segment start, 1 on arrival
};

struct CriterionResult {
  scene::SuccessCriterion criterion;
  bool passed = false;
  double metric = 0.0;
};

struct ExecutionTrace {
  std::vector<TraceStep> steps;
  Outcome outcome = Outcome::completed;
  std::vector<CriterionResult> criteria_results;

  bool all_passed() const;
  const scene::SceneState& final_state() const;
};

class NoBindError : public Error {
public:
  explicit NoBindError(double distance)
      : Error("grasp target beyond bind distance: " + std::to_string(distance)),
        distance_(distance) {}
  double distance() const { return distance_; }

private:
  double distance_;
};

class AlreadyAttachedError : public Error {
public:
  AlreadyAttachedError() : Error("gripper already holds an attachment") {}
};

class NoAttachmentError : public Error {
public:
  NoAttachmentError() : Error("nothing attached") {}
};

class ChainBreakError : public Error {
public:
  ChainBreakError(std::size_t step, const std::string& cause)
      : Error("chain broke at step " + std::to_string(step) + ": " + cause), step_(step) {}
  std::size_t step() const { return step_; }

private:
  std::size_t step_;
};

// Pre motions walk outward from the actuation pose (the last listed pre
// motion is adjacent to it); post motions walk forward. translate_* moves
// along the manipulator-base axes, rotate revolves about the target object's
// joint axis and is subdivided so linear interpolation stays near the arc.
MotionPlan expand_motions(const config::SolverConfig& cfg, const Pose& actuation,
                          const scene::SceneState& scn);

// Dense waypoints: linear translation, slerp rotation, endpoints exact.
std::vector<Waypoint> interpolate(const MotionPlan& plan, int steps_per_segment);

// Kinematic rollout. The end effector teleports through the interpolated
// waypoints; an attached articulated keypoint drags its joint to the
// limit-clamped closest value, an attached rigid body follows the gripper.
// `criteria` are evaluated on the final state.
ExecutionTrace execute(const MotionPlan& plan, const scene::SceneState& scn,
                       int steps_per_segment = kDefaultStepsPerSegment,
                       const std::vector<scene::SuccessCriterion>& criteria = {});

using GraspTarget = std::variant<scene::KeypointRef, std::string>;

// Attach (grasp) / detach (ungrasp) without moving the end effector.
scene::SceneState grasp(const scene::SceneState& scn, const GraspTarget& target);
scene::SceneState ungrasp(const scene::SceneState& scn);

// One planned sub-task of a long-horizon chain; solved lazily against the
// scene state its predecessors leave behind.
struct SubTaskItem {
  config::TaskSpec spec;
  config::SolverConfig solver;
  kpam::SolveOptions solve_options;
};
struct GraspItem {
  GraspTarget target;
};
struct UngraspItem {};

using ChainStep = std::variant<SubTaskItem, GraspItem, UngraspItem>;

// Executes the chain on the evolving scene. Sentinel grasp steps move the
// gripper straight to the target before binding. Structural failures
// (infeasible solve, failed bind) raise ChainBreakError; criterion failures
// are reported in the trace instead.
ExecutionTrace chain_subtasks(const std::vector<ChainStep>& steps, const scene::SceneState& scn,
                              int steps_per_segment = kDefaultStepsPerSegment);

}  // namespace kinegen::traj
