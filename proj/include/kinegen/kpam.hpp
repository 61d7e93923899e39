#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "kinegen/config.hpp"
#include "kinegen/scene.hpp"

namespace kinegen::kpam {

// Residual of one constraint at a candidate end-effector pose. point2point
// constraints produce 3 values (meters); axis constraints one value (inner
// product deviation). `magnitude` is the Euclidean norm of the values and is
// what tolerances are compared against.
struct ConstraintResidual {
  config::ConstraintType type;
  std::vector<double> values;
  double magnitude = 0.0;
  double tolerance = 0.0;

  bool satisfied() const { return magnitude <= tolerance; }
};

struct ResidualVector {
  std::vector<ConstraintResidual> constraints;

  // Sum over all scalar residuals of (value / tolerance)^2.
  double cost() const;
};

struct SolveOptions {
  int restarts = 16;
  int max_iterations = 100;
  double damping = 1e-3;  // initial Levenberg-Marquardt damping, adapted per step
  std::uint64_t seed = 0;
  double convergence_tol = 1e-10;  // absolute cost decrease
};

struct ActuationSolution {
  Pose pose;
  ResidualVector residuals;
  bool satisfied = false;
  double cost = 0.0;
  int restarts_used = 0;
  double wall_time = 0.0;  // seconds; excluded from determinism guarantees
};

class ValidationError : public Error {
public:
  ValidationError(std::vector<config::Violation> violations);
  const std::vector<config::Violation>& violations() const { return violations_; }

private:
  std::vector<config::Violation> violations_;
};

class InfeasibleError : public Error {
public:
  explicit InfeasibleError(ActuationSolution best);
  const ActuationSolution& best() const { return best_; }

private:
  ActuationSolution best_;
};

// Residual of a single constraint with the end effector placed at
// `candidate`; objects keep their scene state. Throws UnknownKeypointError.
ConstraintResidual residual(const config::Constraint& constraint, const Pose& candidate,
                            const scene::SceneState& scn);

ResidualVector residuals(const config::SolverConfig& cfg, const Pose& candidate,
                         const scene::SceneState& scn);

// Analytic Jacobian of a constraint's residual values with respect to the
// local pose increment [dtx, dty, dtz, wx, wy, wz] (rotation applied about
// the end-effector origin). One row of 6 per residual value.
std::vector<std::array<double, 6>> residual_jacobian(const config::Constraint& constraint,
                                                     const Pose& candidate,
                                                     const scene::SceneState& scn);

bool check_satisfied(const ResidualVector& residuals, const config::SolverConfig& cfg);

// Damped least-squares descent from `restarts` seeded initial poses around
// the contact keypoint; the minimum-cost restart wins, ties broken by
// restart index, so parallel and serial runs agree. Throws InfeasibleError
// when no restart meets every tolerance, ValidationError on a config that
// fails validate().
ActuationSolution solve_actuation_pose(const config::SolverConfig& cfg,
                                       const scene::SceneState& scn,
                                       const SolveOptions& opts = {});

}  // namespace kinegen::kpam
