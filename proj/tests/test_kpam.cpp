#include <doctest.h>

#include <cmath>

#include "kinegen/kpam.hpp"
#include "kinegen/rng.hpp"
#include "support.hpp"

using namespace kinegen;
using namespace kinegen::kpam;
using kinegen::config::Constraint;
using kinegen::config::ConstraintType;
using kinegen::config::SolverConfig;

namespace {

scene::SceneState drawer_scene() { return testsupport::bundled_scene("drawer_scene.yaml"); }

bool pose_bits_equal(const Pose& a, const Pose& b) {
  const auto aa = a.to_array();
  const auto bb = b.to_array();
  for (int i = 0; i < 7; ++i)
    if (aa[i] != bb[i]) return false;
  return true;
}

}  // namespace

TEST_CASE("point2point residual vanishes at exact contact") {
  const scene::SceneState scn = drawer_scene();
  const SolverConfig cfg = testsupport::bundled_config("close_drawer.yaml");
  const Constraint& contact = cfg.constraint_list[0];

  const Vec3 target = scene::keypoint_world(scn, {"", "articulated_object_head"});
  Pose candidate;  // identity rotation; translation puts tool_head on target
  candidate.translation = target - scn.end_effector.tool_head;
  const ConstraintResidual r = residual(contact, candidate, scn);
  CHECK(r.magnitude <= 1e-12);
  REQUIRE(r.values.size() == 3);
}

TEST_CASE("axis residuals measure inner-product deviation") {
  const scene::SceneState scn = drawer_scene();
  Constraint parallel;
  parallel.type = ConstraintType::frame_axis_parallel;
  parallel.axis_from_keypoint_name = "tool_head";
  parallel.axis_to_keypoint_name = "tool_side";
  parallel.target_axis = {1, 0, 0};
  parallel.target_axis_frame = config::AxisFrame::object;
  parallel.tolerance = 0.01;
  parallel.target_inner_product = 1.0;

  // head->side is +x in the gripper frame, so identity rotation aligns it
  // with the object x axis exactly.
  const ConstraintResidual aligned = residual(parallel, Pose::identity(), scn);
  CHECK(aligned.magnitude <= 1e-12);

  Constraint ortho = parallel;
  ortho.type = ConstraintType::frame_axis_orthogonal;
  ortho.target_axis = {0, 0, 1};
  ortho.target_inner_product = 0.0;
  const ConstraintResidual perp = residual(ortho, Pose::identity(), scn);
  CHECK(perp.magnitude <= 1e-12);
}

TEST_CASE("check_satisfied is inclusive at the tolerance boundary") {
  SolverConfig cfg = testsupport::bundled_config("close_drawer.yaml");
  ResidualVector rv;
  for (const Constraint& c : cfg.constraint_list) {
    ConstraintResidual r;
    r.type = c.type;
    r.tolerance = c.tolerance;
    r.values = c.type == ConstraintType::point2point_constraint
                   ? std::vector<double>{0.0, 0.0, 0.0}
                   : std::vector<double>{0.0};
    rv.constraints.push_back(r);
  }
  CHECK(check_satisfied(rv, cfg));

  rv.constraints[1].values = {cfg.constraint_list[1].tolerance};  // exactly at tolerance
  rv.constraints[1].magnitude = cfg.constraint_list[1].tolerance;
  CHECK(check_satisfied(rv, cfg));

  rv.constraints[0].values = {2e-4, 0, 0};
  rv.constraints[0].magnitude = 2e-4;
  CHECK(!check_satisfied(rv, cfg));  // 2e-4 point residual vs 1e-4 tolerance
}

TEST_CASE("solving a lone contact constraint pins the translation") {
  const scene::SceneState scn = drawer_scene();
  SolverConfig cfg = testsupport::bundled_config("close_drawer.yaml");
  cfg.constraint_list.resize(1);

  SolveOptions opts;
  opts.seed = 9;
  const ActuationSolution sol = solve_actuation_pose(cfg, scn, opts);
  CHECK(sol.satisfied);
  const Vec3 target = scene::keypoint_world(scn, {"", "articulated_object_head"});
  const Vec3 expected =
      target - sol.pose.rotation.rotate(scn.end_effector.tool_head);
  CHECK(approx_equal(sol.pose.translation, expected, 1e-6));
}

TEST_CASE("the CloseDrawer fixture solves within its tolerances") {
  const scene::SceneState scn = drawer_scene();
  const SolverConfig cfg = testsupport::bundled_config("close_drawer.yaml");
  const ActuationSolution sol = solve_actuation_pose(cfg, scn, {});
  CHECK(sol.satisfied);
  REQUIRE(sol.residuals.constraints.size() == 3);
  CHECK(sol.residuals.constraints[0].magnitude <= 1e-4);
  CHECK(sol.residuals.constraints[1].magnitude <= 1e-2);
  CHECK(sol.residuals.constraints[2].magnitude <= 1e-2);
  CHECK(check_satisfied(sol.residuals, cfg));
}

TEST_CASE("contradictory axis targets are infeasible") {
  const scene::SceneState scn = drawer_scene();
  SolverConfig cfg = testsupport::bundled_config("close_drawer.yaml");
  Constraint flipped = cfg.constraint_list[1];
  flipped.target_inner_product = -1.0;
  cfg.constraint_list.push_back(flipped);

  CHECK_THROWS_AS(solve_actuation_pose(cfg, scn, {}), InfeasibleError);
  try {
    solve_actuation_pose(cfg, scn, {});
  } catch (const InfeasibleError& e) {
    CHECK(!e.best().satisfied);
    CHECK(e.best().cost > 1.0);
  }
}

TEST_CASE("identical inputs give bit-identical solutions") {
  const scene::SceneState scn = drawer_scene();
  const SolverConfig cfg = testsupport::bundled_config("close_drawer.yaml");
  SolveOptions opts;
  opts.seed = 1234;
  const ActuationSolution a = solve_actuation_pose(cfg, scn, opts);
  const ActuationSolution b = solve_actuation_pose(cfg, scn, opts);
  CHECK(pose_bits_equal(a.pose, b.pose));
  CHECK(a.cost == b.cost);
  for (std::size_t i = 0; i < a.residuals.constraints.size(); ++i)
    CHECK(a.residuals.constraints[i].magnitude == b.residuals.constraints[i].magnitude);

  SolveOptions other = opts;
  other.seed = 99;
  const ActuationSolution c = solve_actuation_pose(cfg, scn, other);
  CHECK(c.satisfied);  // different seed still solves
}

TEST_CASE("analytic jacobians match central finite differences") {
  const scene::SceneState scn = testsupport::bundled_scene("faucet_scene.yaml");
  const SolverConfig cfg = testsupport::bundled_config("turn_on_faucet.yaml");

  rng::Stream stream(2024);
  const double h = 1e-6;
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Pose pose = testsupport::random_pose(stream, 0.5);
    for (const Constraint& c : cfg.constraint_list) {
      const auto rows = residual_jacobian(c, pose, scn);
      for (int k = 0; k < 6; ++k) {
        std::array<double, 6> plus{}, minus{};
        plus[k] = h;
        minus[k] = -h;
        const auto rp = residual(c, apply_increment(pose, plus), scn).values;
        const auto rm = residual(c, apply_increment(pose, minus), scn).values;
        for (std::size_t i = 0; i < rows.size(); ++i) {
          const double fd = (rp[i] - rm[i]) / (2.0 * h);
          const double an = rows[i][k];
          const double scale = std::max({1.0, std::abs(fd), std::abs(an)});
          CHECK(std::abs(fd - an) / scale <= 1e-4);
          ++checked;
        }
      }
    }
  }
  CHECK(checked > 0);
}

TEST_CASE("object-frame residuals are invariant under rigid scene motion") {
  const scene::SceneState scn = drawer_scene();
  const SolverConfig cfg = testsupport::bundled_config("close_drawer.yaml");

  rng::Stream stream(55);
  for (int trial = 0; trial < 20; ++trial) {
    const Pose g = testsupport::random_pose(stream, 0.5);
    const Pose candidate = testsupport::random_pose(stream, 0.5);

    scene::SceneState moved = scn;
    for (auto& [name, placed] : moved.objects)
      placed.base_pose = compose(g, placed.base_pose);
    for (auto& [name, placed] : moved.rigid_bodies) placed.pose = compose(g, placed.pose);

    const ResidualVector before = residuals(cfg, candidate, scn);
    const ResidualVector after = residuals(cfg, compose(g, candidate), moved);
    for (std::size_t i = 0; i < before.constraints.size(); ++i)
      CHECK(std::abs(before.constraints[i].magnitude - after.constraints[i].magnitude) <= 1e-9);
  }
}

TEST_CASE("keypoint-pair residuals are invariant under rigid scene motion") {
  const scene::SceneState scn = testsupport::bundled_scene("faucet_scene.yaml");
  Constraint pair;
  pair.type = ConstraintType::keypoint_axis_orthogonal;
  pair.axis_from_keypoint_name = "tool_tail";
  pair.axis_to_keypoint_name = "tool_head";
  pair.target_axis_from_keypoint_name = "articulated_object_inside_base";
  pair.target_axis_to_keypoint_name = "articulated_object_head";
  pair.tolerance = 0.01;
  pair.target_inner_product = 0.0;

  rng::Stream stream(56);
  for (int trial = 0; trial < 20; ++trial) {
    const Pose g = testsupport::random_pose(stream, 0.5);
    const Pose candidate = testsupport::random_pose(stream, 0.5);
    scene::SceneState moved = scn;
    for (auto& [name, placed] : moved.objects)
      placed.base_pose = compose(g, placed.base_pose);
    const double before = residual(pair, candidate, scn).magnitude;
    const double after = residual(pair, compose(g, candidate), moved).magnitude;
    CHECK(std::abs(before - after) <= 1e-9);
  }
}

TEST_CASE("solver agrees with the grid oracle on the drawer fixture") {
  const scene::SceneState scn = drawer_scene();
  const SolverConfig cfg = testsupport::bundled_config("close_drawer.yaml");

  const testsupport::OracleResult oracle = testsupport::grid_oracle(cfg, scn);
  CHECK(oracle.feasible);

  const ActuationSolution sol = solve_actuation_pose(cfg, scn, {});
  CHECK(sol.satisfied == oracle.feasible);
  CHECK(sol.cost <= oracle.best_cost + 1e-6);
}

TEST_CASE("validation failures surface as ValidationError") {
  const scene::SceneState scn = drawer_scene();
  SolverConfig cfg = testsupport::bundled_config("close_drawer.yaml");
  cfg.constraint_list[0].tolerance = -1.0;
  CHECK_THROWS_AS(solve_actuation_pose(cfg, scn, {}), ValidationError);
}
