#include <doctest.h>

#include <cmath>

#include "kinegen/trajectory.hpp"
#include "support.hpp"

using namespace kinegen;
using namespace kinegen::traj;
using kinegen::config::SolverConfig;

namespace {

scene::SceneState drawer_scene() { return testsupport::bundled_scene("drawer_scene.yaml"); }

kpam::ActuationSolution solve_fixture(const SolverConfig& cfg, const scene::SceneState& scn) {
  kpam::SolveOptions opts;
  opts.seed = 7;
  return kpam::solve_actuation_pose(cfg, scn, opts);
}

}  // namespace

TEST_CASE("pre motions expand outward from the actuation pose") {
  const scene::SceneState scn = drawer_scene();
  const SolverConfig cfg = testsupport::bundled_config("close_drawer.yaml");
  const kpam::ActuationSolution sol = solve_fixture(cfg, scn);
  const MotionPlan plan = expand_motions(cfg, sol.pose, scn);

  REQUIRE(plan.waypoints.size() == 4);  // two pre, actuation, one post
  CHECK(plan.actuation_index() == 2);
  CHECK(approx_equal(plan.waypoints.front().pose.translation,
                     sol.pose.translation + Vec3{-0.1, 0, -0.15}, 1e-12));
  CHECK(approx_equal(plan.waypoints[1].pose.translation,
                     sol.pose.translation + Vec3{0, 0, -0.15}, 1e-12));
  CHECK(approx_equal(plan.waypoints[3].pose.translation,
                     sol.pose.translation + Vec3{0.1, 0, 0}, 1e-12));
  CHECK(plan.waypoints[0].gripper == GripperCommand::open);
  CHECK(plan.waypoints[2].gripper == GripperCommand::close);
  CHECK(plan.waypoints[3].gripper == GripperCommand::open);  // plan end releases
}

TEST_CASE("no motions means a single actuation waypoint") {
  const scene::SceneState scn = drawer_scene();
  SolverConfig cfg = testsupport::bundled_config("close_drawer.yaml");
  cfg.pre_actuation_motions.clear();
  cfg.post_actuation_motions.clear();
  const kpam::ActuationSolution sol = solve_fixture(cfg, scn);
  const MotionPlan plan = expand_motions(cfg, sol.pose, scn);
  REQUIRE(plan.waypoints.size() == 1);
  CHECK(plan.waypoints[0].tag == WaypointTag::actuation);
}

TEST_CASE("named post motions use the alias table") {
  const scene::SceneState scn = drawer_scene();
  SolverConfig cfg = testsupport::bundled_config("close_drawer.yaml");
  cfg.post_actuation_motions = {config::Motion::named("move-forward")};
  const kpam::ActuationSolution sol = solve_fixture(cfg, scn);
  const MotionPlan plan = expand_motions(cfg, sol.pose, scn);
  CHECK(approx_equal(plan.waypoints.back().pose.translation,
                     sol.pose.translation + Vec3{0.15, 0, 0}, 1e-12));
}

TEST_CASE("rotate motions subdivide along the joint arc") {
  const scene::SceneState scn = testsupport::bundled_scene("box_scene.yaml");
  const SolverConfig cfg = testsupport::bundled_config("open_box.yaml");
  const kpam::ActuationSolution sol = solve_fixture(cfg, scn);
  const MotionPlan plan = expand_motions(cfg, sol.pose, scn);

  const std::size_t act = plan.actuation_index();
  const std::size_t post_count = plan.waypoints.size() - act - 1;
  CHECK(post_count == std::ceil(1.9 / kMaxRotateStep));

  // Every post waypoint keeps the actuation pose's distance to the hinge.
  const auto& placed = scn.objects.begin()->second;
  const Vec3 axis_w = placed.base_pose.rotation.rotate(placed.object->joint.axis);
  const Vec3 anchor = placed.base_pose.apply(placed.object->joint.origin.translation);
  auto axis_distance = [&](const Vec3& p) {
    const Vec3 rel = p - anchor;
    return (rel - axis_w * rel.dot(axis_w)).norm();
  };
  const double d0 = axis_distance(sol.pose.translation);
  for (std::size_t i = act + 1; i < plan.waypoints.size(); ++i)
    CHECK(axis_distance(plan.waypoints[i].pose.translation) == doctest::Approx(d0).epsilon(1e-9));
}

TEST_CASE("interpolation spacing and endpoints") {
  MotionPlan plan;
  plan.source_config = testsupport::bundled_config("close_drawer.yaml");
  Waypoint a;
  a.pose = Pose::from_translation({0, 0, 0});
  a.tag = WaypointTag::pre;
  Waypoint b;
  b.pose = Pose::from_translation({0.2, 0, 0});
  b.tag = WaypointTag::actuation;
  plan.waypoints = {a, b};

  const auto dense1 = interpolate(plan, 1);
  REQUIRE(dense1.size() == 2);
  CHECK(approx_equal(dense1[0].pose.translation, a.pose.translation));
  CHECK(approx_equal(dense1[1].pose.translation, b.pose.translation));

  const auto dense4 = interpolate(plan, 4);
  REQUIRE(dense4.size() == 5);
  for (int i = 0; i < 5; ++i)
    CHECK(approx_equal(dense4[i].pose.translation, Vec3{0.05 * i, 0, 0}, 1e-12));

  // Rotation-only segment: slerp midpoint halves the angle.
  plan.waypoints[1].pose =
      Pose{UnitQuat::from_axis_angle({0, 0, 1}, M_PI / 2), {0, 0, 0}};
  const auto dense2 = interpolate(plan, 2);
  REQUIRE(dense2.size() == 3);
  CHECK(UnitQuat::angle_between(dense2[1].pose.rotation,
                                UnitQuat::from_axis_angle({0, 0, 1}, M_PI / 4)) <= 1e-9);
}

TEST_CASE("executing the drawer push drags the joint by the motion length") {
  const scene::SceneState scn = drawer_scene();
  SolverConfig cfg = testsupport::bundled_config("close_drawer.yaml");
  cfg.post_actuation_motions = {config::Motion::structured(config::MotionMode::translate_x, 0.06)};
  // +x push on a drawer whose axis is -x: the joint value must drop by 0.06.
  const kpam::ActuationSolution sol = solve_fixture(cfg, scn);
  const MotionPlan plan = expand_motions(cfg, sol.pose, scn);
  const ExecutionTrace trace = execute(plan, scn);

  const double q0 = scn.objects.at("drawer").joint_value;
  const double q1 = trace.final_state().objects.at("drawer").joint_value;
  CHECK(q1 == doctest::Approx(q0 - 0.06).epsilon(0.005 / 0.06));
  CHECK(trace.outcome == Outcome::completed);
  CHECK(trace.steps.size() == (plan.waypoints.size() - 1) * kDefaultStepsPerSegment + 1);
}

TEST_CASE("motion beyond the joint limit clamps") {
  const scene::SceneState scn = drawer_scene();
  SolverConfig cfg = testsupport::bundled_config("close_drawer.yaml");
  cfg.post_actuation_motions = {
      config::Motion::structured(config::MotionMode::translate_x, -0.2)};  // pulls open too far
  const kpam::ActuationSolution sol = solve_fixture(cfg, scn);
  const MotionPlan plan = expand_motions(cfg, sol.pose, scn);
  const ExecutionTrace trace = execute(plan, scn);
  CHECK(trace.final_state().objects.at("drawer").joint_value ==
        doctest::Approx(scn.objects.at("drawer").object->joint.upper));
  CHECK(trace.outcome != Outcome::completed);
}

TEST_CASE("grasp binds close targets and rejects far ones") {
  scene::SceneState scn = drawer_scene();
  const Vec3 handle = scene::keypoint_world(scn, {"", "articulated_object_head"});

  // tool_head one centimeter from the handle: binds.
  scn.end_effector.pose = Pose::from_translation(
      handle + Vec3{0.01, 0, 0} - scn.end_effector.pose.rotation.rotate(scn.end_effector.tool_head));
  scn.end_effector.pose.rotation = UnitQuat::identity();
  scn.end_effector.pose.translation = handle + Vec3{0.01, 0, 0} - scn.end_effector.tool_head;
  const scene::SceneState held = grasp(scn, scene::KeypointRef{"", "articulated_object_head"});
  CHECK(held.attachment.has_value());
  CHECK(held.end_effector.width == doctest::Approx(0.0));

  CHECK_THROWS_AS(grasp(held, scene::KeypointRef{"", "articulated_object_head"}),
                  AlreadyAttachedError);

  scn.end_effector.pose.translation = handle + Vec3{0.10, 0, 0} - scn.end_effector.tool_head;
  try {
    (void)grasp(scn, scene::KeypointRef{"", "articulated_object_head"});
    CHECK(false);
  } catch (const NoBindError& e) {
    CHECK(e.distance() == doctest::Approx(0.10).epsilon(1e-9));
  }

  CHECK_THROWS_AS(ungrasp(scn), NoAttachmentError);
}

TEST_CASE("ungrasp freezes the joint for the rest of the motion") {
  const scene::SceneState scn = drawer_scene();
  const SolverConfig cfg = testsupport::bundled_config("close_drawer.yaml");
  const kpam::ActuationSolution sol = solve_fixture(cfg, scn);
  const MotionPlan plan = expand_motions(cfg, sol.pose, scn);
  const ExecutionTrace trace = execute(plan, scn);

  // After the final open, more translation must not move the joint.
  scene::SceneState after = trace.final_state();
  REQUIRE(!after.attachment.has_value());
  const double q_end = after.objects.at("drawer").joint_value;
  after.end_effector.pose.translation += Vec3{0.05, 0, 0};
  CHECK(after.objects.at("drawer").joint_value == q_end);
}

TEST_CASE("rigid attachments keep a constant grasp offset") {
  scene::SceneState scn = testsupport::bundled_scene("longhorizon_scene.yaml");
  const Vec3 ball = scn.rigid_bodies.at("golf_ball").pose.translation;
  scn.end_effector.pose.translation =
      ball - scn.end_effector.pose.rotation.rotate(scn.end_effector.tool_head);
  scene::SceneState held = grasp(scn, std::string("golf_ball"));

  SolverConfig cfg = testsupport::bundled_config("place_golf_ball_into_box.yaml");
  const kpam::ActuationSolution sol = solve_fixture(cfg, held);
  const MotionPlan plan = expand_motions(cfg, sol.pose, held);
  for (const Waypoint& w : plan.waypoints) CHECK(w.gripper == GripperCommand::hold);

  const ExecutionTrace trace = execute(plan, held, 10, {});
  const Pose offset0 = compose(inverse(held.end_effector.pose),
                               held.rigid_bodies.at("golf_ball").pose);
  for (const TraceStep& step : trace.steps) {
    const Pose offset = compose(inverse(step.state.end_effector.pose),
                                step.state.rigid_bodies.at("golf_ball").pose);
    CHECK(approx_equal(offset, offset0, 1e-9));
  }
}

TEST_CASE("re-solving at the actuation state stays satisfied") {
  const scene::SceneState scn = drawer_scene();
  const SolverConfig cfg = testsupport::bundled_config("close_drawer.yaml");
  const kpam::ActuationSolution sol = solve_fixture(cfg, scn);
  const MotionPlan plan = expand_motions(cfg, sol.pose, scn);
  const ExecutionTrace trace = execute(plan, scn);

  const std::size_t act = plan.actuation_index();
  for (const TraceStep& step : trace.steps) {
    if (step.waypoint_index == act && step.fraction >= 1.0) {
      const kpam::ResidualVector rv = kpam::residuals(cfg, sol.pose, step.state);
      CHECK(kpam::check_satisfied(rv, cfg));
      break;
    }
  }
}

TEST_CASE("traces are bit-identical across runs") {
  const scene::SceneState scn = drawer_scene();
  const SolverConfig cfg = testsupport::bundled_config("close_drawer.yaml");
  const kpam::ActuationSolution sol = solve_fixture(cfg, scn);
  const MotionPlan plan = expand_motions(cfg, sol.pose, scn);
  const ExecutionTrace a = execute(plan, scn, 10, {scene::SuccessCriterion::articulated_closed});
  const ExecutionTrace b = execute(plan, scn, 10, {scene::SuccessCriterion::articulated_closed});
  REQUIRE(a.steps.size() == b.steps.size());
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    const auto pa = a.steps[i].state.end_effector.pose.to_array();
    const auto pb = b.steps[i].state.end_effector.pose.to_array();
    for (int k = 0; k < 7; ++k) CHECK(pa[k] == pb[k]);
    CHECK(a.steps[i].state.objects.at("drawer").joint_value ==
          b.steps[i].state.objects.at("drawer").joint_value);
  }
  REQUIRE(a.criteria_results.size() == 1);
  CHECK(a.criteria_results[0].passed == b.criteria_results[0].passed);
  CHECK(a.criteria_results[0].metric == b.criteria_results[0].metric);
}

TEST_CASE("empty chains succeed vacuously") {
  const ExecutionTrace trace = chain_subtasks({}, drawer_scene());
  CHECK(trace.steps.empty());
  CHECK(trace.criteria_results.empty());
  CHECK(trace.all_passed());
}

TEST_CASE("a chain breaks when a sub-solver is infeasible") {
  const scene::SceneState scn = testsupport::bundled_scene("longhorizon_scene.yaml");
  SubTaskItem open_box;
  open_box.spec = testsupport::bundled_task("open-box.txt");
  open_box.solver = testsupport::bundled_config("open_box.yaml");
  open_box.solve_options.seed = 3;

  SubTaskItem broken = open_box;
  config::Constraint contradiction = broken.solver.constraint_list[1];
  contradiction.target_inner_product = -1.0;
  broken.solver.constraint_list.push_back(contradiction);
  broken.spec.task_name = "broken-step";

  try {
    chain_subtasks({ChainStep{open_box}, ChainStep{broken}}, scn);
    CHECK(false);
  } catch (const ChainBreakError& e) {
    CHECK(e.step() == 1);
  }
}

TEST_CASE("the five-step box chain passes every sub-task criterion") {
  const scene::SceneState scn = testsupport::bundled_scene("longhorizon_scene.yaml");

  SubTaskItem open_box;
  open_box.spec = testsupport::bundled_task("open-box.txt");
  open_box.solver = testsupport::bundled_config("open_box.yaml");
  open_box.solve_options.seed = 11;

  SubTaskItem place;
  place.spec = testsupport::bundled_task("place-golf-ball-into-box.txt");
  place.solver = testsupport::bundled_config("place_golf_ball_into_box.yaml");
  place.solve_options.seed = 12;

  SubTaskItem close_box;
  close_box.spec = testsupport::bundled_task("close-box.txt");
  close_box.solver = testsupport::bundled_config("close_box.yaml");
  close_box.solve_options.seed = 13;

  const std::vector<ChainStep> chain = {
      ChainStep{open_box}, ChainStep{GraspItem{std::string("golf_ball")}}, ChainStep{place},
      ChainStep{UngraspItem{}}, ChainStep{close_box}};
  const ExecutionTrace trace = chain_subtasks(chain, scn);
  REQUIRE(trace.criteria_results.size() == 5);
  for (const CriterionResult& c : trace.criteria_results) {
    INFO(scene::to_string(c.criterion), " metric ", c.metric);
    CHECK(c.passed);
  }
  // The ball ends inside the box and the lid ends closed.
  const scene::SceneState& final = trace.final_state();
  CHECK(final.objects.at("box_rotate").joint_value <=
        0.10 * final.objects.at("box_rotate").object->joint.range());
}
