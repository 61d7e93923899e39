#include "kinegen/trajectory.hpp"

#include <algorithm>
#include <cmath>

namespace kinegen::traj {

using config::Motion;
using config::MotionMode;
using config::SolverConfig;
using scene::KeypointRef;
using scene::SceneState;

std::size_t MotionPlan::actuation_index() const {
  for (std::size_t i = 0; i < waypoints.size(); ++i)
    if (waypoints[i].tag == WaypointTag::actuation) return i;
  throw Error("plan has no actuation waypoint");
}

bool ExecutionTrace::all_passed() const {
  for (const CriterionResult& c : criteria_results)
    if (!c.passed) return false;
  return true;
}

const SceneState& ExecutionTrace::final_state() const {
  if (steps.empty()) throw Error("empty trace has no final state");
  return steps.back().state;
}

namespace {

struct JointAxisWorld {
  Vec3 direction;  // unit
  Vec3 anchor;
};

JointAxisWorld joint_axis_world(const scene::PlacedObject& placed) {
  const scene::Joint& j = placed.object->joint;
  return {placed.base_pose.rotation.rotate(j.axis), placed.base_pose.apply(j.origin.translation)};
}

// Poses produced by one motion, in travel order away from `from`. rotate
// motions are subdivided so chords stay close to the arc.
std::vector<Pose> motion_poses(const Motion& motion, const Pose& from, const SceneState& scn) {
  const Motion::Structured s = motion.resolved();
  if (s.mode != MotionMode::rotate) {
    Vec3 axis;
    switch (s.mode) {
      case MotionMode::translate_x: axis = {1, 0, 0}; break;
      case MotionMode::translate_y: axis = {0, 1, 0}; break;
      default: axis = {0, 0, 1}; break;
    }
    Pose p = from;
    p.translation += axis * s.value;
    return {p};
  }
  const scene::PlacedObject* obj = scn.first_articulated();
  if (!obj) throw config::MotionGrammarError("rotate motion needs an articulated object");
  const JointAxisWorld axis = joint_axis_world(*obj);
  const int pieces = std::max(1, static_cast<int>(std::ceil(std::abs(s.value) / kMaxRotateStep)));
  std::vector<Pose> out;
  out.reserve(pieces);
  for (int i = 1; i <= pieces; ++i) {
    const double angle = s.value * static_cast<double>(i) / pieces;
    out.push_back(compose(rotate_about_axis(axis.direction, axis.anchor, angle), from));
  }
  return out;
}

// Where the gripper should attach when it closes: the contact constraint
// target if it resolves to an articulated keypoint or a rigid body.
std::optional<std::variant<KeypointRef, std::string>> resolve_attach_target(
    const SceneState& scn, const std::string& keypoint_name) {
  for (const auto& [name, placed] : scn.objects)
    if (placed.object->keypoints.count(keypoint_name))
      return std::variant<KeypointRef, std::string>(KeypointRef{name, keypoint_name});
  for (const auto& [name, placed] : scn.rigid_bodies)
    if (placed.object->keypoints.count(keypoint_name))
      return std::variant<KeypointRef, std::string>(name);
  return std::nullopt;
}

Vec3 grasp_target_world(const SceneState& scn, const GraspTarget& target) {
  if (std::holds_alternative<KeypointRef>(target))
    return keypoint_world(scn, std::get<KeypointRef>(target));
  const std::string& name = std::get<std::string>(target);
  auto it = scn.rigid_bodies.find(name);
  if (it == scn.rigid_bodies.end()) throw UnknownReferenceError("unknown rigid body: " + name);
  auto kp = it->second.object->keypoints.find("center");
  if (kp != it->second.object->keypoints.end()) return it->second.pose.apply(kp->second);
  return it->second.pose.translation;
}

SceneState attach(const SceneState& scn, const GraspTarget& target) {
  if (scn.attachment) throw AlreadyAttachedError();
  SceneState out = scn;
  const Vec3 target_world = grasp_target_world(scn, target);
  const Vec3 head = scn.end_effector.world_keypoint("tool_head");
  const double distance = (head - target_world).norm();
  if (distance > kBindDistance) throw NoBindError(distance);

  scene::Attachment att;
  if (std::holds_alternative<KeypointRef>(target)) {
    att.target = std::get<KeypointRef>(target);
    att.grasp_offset = Pose::from_translation(inverse(scn.end_effector.pose).apply(target_world));
  } else {
    const std::string& name = std::get<std::string>(target);
    att.target = name;
    att.grasp_offset = compose(inverse(scn.end_effector.pose), scn.rigid_bodies.at(name).pose);
  }
  out.attachment = att;
  out.end_effector.width = 0.0;
  return out;
}

// Joint value whose keypoint is closest to the grasp point g, before
// clamping. Analytic for both joint kinds.
double tracking_joint_value(const scene::PlacedObject& placed, const scene::Keypoint& kp,
                            const Vec3& g) {
  const scene::Joint& joint = placed.object->joint;
  const scene::LinkPoses rest_fk =
      scene::forward_kinematics(*placed.object, placed.base_pose, joint.rest_value);
  const Vec3 kp_rest = rest_fk.of(kp.link).apply(kp.local);
  const JointAxisWorld axis = joint_axis_world(placed);
  if (joint.kind == scene::JointKind::prismatic)
    return joint.rest_value + (g - kp_rest).dot(axis.direction);
  const Vec3 center =
      axis.anchor + axis.direction * (kp_rest - axis.anchor).dot(axis.direction);
  Vec3 e1 = kp_rest - center;
  const double radius = e1.norm();
  if (radius < 1e-9) return placed.joint_value;  // keypoint on the axis; nothing to track
  e1 = e1 * (1.0 / radius);
  const Vec3 e2 = axis.direction.cross(e1);
  const Vec3 rel = g - center;
  return joint.rest_value + std::atan2(rel.dot(e2), rel.dot(e1));
}

struct Follower {
  Outcome outcome = Outcome::completed;

  void raise(Outcome o) {
    if (static_cast<int>(o) > static_cast<int>(outcome)) outcome = o;
  }

  // Updates attachment-coupled state after an end-effector move.
  void update(SceneState& state) {
    if (!state.attachment) return;
    const Pose grasp_frame = compose(state.end_effector.pose, state.attachment->grasp_offset);
    if (std::holds_alternative<std::string>(state.attachment->target)) {
      state.rigid_bodies.at(std::get<std::string>(state.attachment->target)).pose = grasp_frame;
      return;
    }
    const KeypointRef ref = std::get<KeypointRef>(state.attachment->target);
    auto it = state.objects.find(ref.object);
    if (it == state.objects.end()) throw UnknownReferenceError("attached object vanished");
    scene::PlacedObject& placed = it->second;
    const scene::Keypoint& kp = placed.object->keypoints.at(ref.keypoint);
    const Vec3 g = grasp_frame.translation;
    const double wanted = tracking_joint_value(placed, kp, g);
    const double clamped =
        std::clamp(wanted, placed.object->joint.lower, placed.object->joint.upper);
    if (std::abs(clamped - wanted) > 1e-9) raise(Outcome::clamped);
    placed.joint_value = clamped;
    const Vec3 kp_now = keypoint_world(state, ref);
    if ((kp_now - g).norm() > kFollowDistance) {
      raise(Outcome::detached_early);
      state.attachment.reset();
      state.end_effector.width = kOpenWidth;
    }
  }
};

void apply_gripper(SceneState& state, GripperCommand cmd, const SolverConfig& cfg) {
  switch (cmd) {
    case GripperCommand::hold:
      return;
    case GripperCommand::open:
      state.attachment.reset();
      state.end_effector.width = kOpenWidth;
      return;
    case GripperCommand::close: {
      state.end_effector.width = 0.0;
      if (state.attachment) return;
      const auto target = resolve_attach_target(state, cfg.contact_constraint().target_keypoint_name);
      if (!target) return;
      const Vec3 tw = std::holds_alternative<KeypointRef>(*target)
                          ? keypoint_world(state, std::get<KeypointRef>(*target))
                          : grasp_target_world(state, std::get<std::string>(*target));
      if ((state.end_effector.world_keypoint("tool_head") - tw).norm() > kBindDistance) return;
      try {
        if (std::holds_alternative<KeypointRef>(*target))
          state = attach(state, std::get<KeypointRef>(*target));
        else
          state = attach(state, std::get<std::string>(*target));
      } catch (const NoBindError&) {
        // contact not close enough; push-style execution continues unattached
      }
      return;
    }
  }
}

}  // namespace

MotionPlan expand_motions(const SolverConfig& cfg, const Pose& actuation, const SceneState& scn) {
  MotionPlan plan;
  plan.source_config = cfg;
  const bool carrying = scn.attachment.has_value();

  // Outward walk for the approach; built back-to-front.
  std::vector<Pose> pre;
  Pose cursor = actuation;
  for (auto it = cfg.pre_actuation_motions.rbegin(); it != cfg.pre_actuation_motions.rend();
       ++it) {
    const std::vector<Pose> poses = motion_poses(*it, cursor, scn);
    for (const Pose& p : poses) pre.push_back(p);
    cursor = poses.back();
  }
  std::reverse(pre.begin(), pre.end());
  for (const Pose& p : pre)
    plan.waypoints.push_back({p, carrying ? GripperCommand::hold : GripperCommand::open,
                              WaypointTag::pre});

  plan.waypoints.push_back(
      {actuation, carrying ? GripperCommand::hold : GripperCommand::close, WaypointTag::actuation});

  cursor = actuation;
  for (const Motion& m : cfg.post_actuation_motions) {
    for (const Pose& p : motion_poses(m, cursor, scn)) {
      plan.waypoints.push_back({p, GripperCommand::hold, WaypointTag::post});
      cursor = p;
    }
  }
  if (!carrying && plan.waypoints.back().tag == WaypointTag::post)
    plan.waypoints.back().gripper = GripperCommand::open;
  return plan;
}

std::vector<Waypoint> interpolate(const MotionPlan& plan, int steps_per_segment) {
  if (steps_per_segment < 1) throw Error("steps_per_segment must be >= 1");
  std::vector<Waypoint> out;
  if (plan.waypoints.empty()) return out;
  out.push_back(plan.waypoints.front());
  for (std::size_t seg = 1; seg < plan.waypoints.size(); ++seg) {
    const Waypoint& a = plan.waypoints[seg - 1];
    const Waypoint& b = plan.waypoints[seg];
    for (int s = 1; s <= steps_per_segment; ++s) {
      const double t = static_cast<double>(s) / steps_per_segment;
      Waypoint w = b;
      if (s < steps_per_segment) {
        w.pose.translation = a.pose.translation + (b.pose.translation - a.pose.translation) * t;
        w.pose.rotation = slerp(a.pose.rotation, b.pose.rotation, t);
        w.gripper = GripperCommand::hold;  // commands fire on arrival
      }
      out.push_back(w);
    }
  }
  return out;
}

ExecutionTrace execute(const MotionPlan& plan, const SceneState& scn, int steps_per_segment,
                       const std::vector<scene::SuccessCriterion>& criteria) {
  if (steps_per_segment < 1) throw Error("steps_per_segment must be >= 1");
  ExecutionTrace trace;
  SceneState state = scn;
  Follower follower;

  auto record = [&](std::size_t wp_index, double fraction) {
    trace.steps.push_back({state, wp_index, fraction});
  };

  if (plan.waypoints.empty()) return trace;

  state.end_effector.pose = plan.waypoints.front().pose;
  follower.update(state);
  apply_gripper(state, plan.waypoints.front().gripper, plan.source_config);
  record(0, 1.0);

  for (std::size_t seg = 1; seg < plan.waypoints.size(); ++seg) {
    const Waypoint& a = plan.waypoints[seg - 1];
    const Waypoint& b = plan.waypoints[seg];
    for (int s = 1; s <= steps_per_segment; ++s) {
      const double t = static_cast<double>(s) / steps_per_segment;
      Pose pose = b.pose;
      if (s < steps_per_segment) {
        pose.translation = a.pose.translation + (b.pose.translation - a.pose.translation) * t;
        pose.rotation = slerp(a.pose.rotation, b.pose.rotation, t);
      }
      state.end_effector.pose = pose;
      follower.update(state);
      if (s == steps_per_segment) apply_gripper(state, b.gripper, plan.source_config);
      record(seg, t);
    }
  }

  trace.outcome = follower.outcome;
  for (scene::SuccessCriterion c : criteria) {
    const scene::SuccessResult r = scene::evaluate_success(state, c);
    trace.criteria_results.push_back({c, r.passed, r.metric});
  }
  return trace;
}

SceneState grasp(const SceneState& scn, const GraspTarget& target) { return attach(scn, target); }

SceneState ungrasp(const SceneState& scn) {
  if (!scn.attachment) throw NoAttachmentError();
  SceneState out = scn;
  out.attachment.reset();
  out.end_effector.width = kOpenWidth;
  return out;
}

namespace {

scene::SuccessCriterion sentinel_criterion(const SceneState& state, const GraspTarget& target) {
  if (std::holds_alternative<std::string>(target))
    return scene::SuccessCriterion::distance_gripper_rigidbody;
  (void)state;
  return scene::SuccessCriterion::distance_gripper_articulated;
}

}  // namespace

ExecutionTrace chain_subtasks(const std::vector<ChainStep>& steps, const SceneState& scn,
                              int steps_per_segment) {
  ExecutionTrace trace;
  SceneState state = scn;

  for (std::size_t index = 0; index < steps.size(); ++index) {
    const ChainStep& step = steps[index];
    if (std::holds_alternative<SubTaskItem>(step)) {
      const SubTaskItem& item = std::get<SubTaskItem>(step);
      kpam::ActuationSolution sol;
      try {
        sol = kpam::solve_actuation_pose(item.solver, state, item.solve_options);
      } catch (const Error& e) {
        throw ChainBreakError(index, e.what());
      }
      const MotionPlan plan = expand_motions(item.solver, sol.pose, state);
      ExecutionTrace sub = execute(plan, state, steps_per_segment, item.spec.success_criteria);
      state = sub.final_state();
      for (TraceStep& s : sub.steps) trace.steps.push_back(std::move(s));
      for (const CriterionResult& c : sub.criteria_results) trace.criteria_results.push_back(c);
      if (static_cast<int>(sub.outcome) > static_cast<int>(trace.outcome))
        trace.outcome = sub.outcome;
      continue;
    }
    if (std::holds_alternative<GraspItem>(step)) {
      const GraspTarget& target = std::get<GraspItem>(step).target;
      Vec3 target_world;
      try {
        target_world = grasp_target_world(state, target);
      } catch (const Error& e) {
        throw ChainBreakError(index, e.what());
      }
      // Move the gripper straight to the bind pose, then close on it.
      const Vec3 head_local = state.end_effector.local_keypoint("tool_head");
      Pose goal = state.end_effector.pose;
      goal.translation = target_world - goal.rotation.rotate(head_local);
      const Pose start = state.end_effector.pose;
      for (int s = 1; s <= steps_per_segment; ++s) {
        const double t = static_cast<double>(s) / steps_per_segment;
        state.end_effector.pose.translation =
            start.translation + (goal.translation - start.translation) * t;
        trace.steps.push_back({state, trace.steps.size(), t});
      }
      try {
        state = grasp(state, target);
      } catch (const Error& e) {
        throw ChainBreakError(index, e.what());
      }
      const scene::SuccessCriterion crit = sentinel_criterion(state, target);
      const scene::SuccessResult r = scene::evaluate_success(state, crit);
      trace.criteria_results.push_back({crit, r.passed, r.metric});
      continue;
    }
    // ungrasp
    if (!state.attachment) throw ChainBreakError(index, "nothing attached");
    const GraspTarget released = state.attachment->target;
    state = ungrasp(state);
    const scene::SuccessCriterion crit = sentinel_criterion(state, released);
    const scene::SuccessResult r = scene::evaluate_success(state, crit);
    trace.criteria_results.push_back({crit, r.passed, r.metric});
  }
  return trace;
}

}  // namespace kinegen::traj
