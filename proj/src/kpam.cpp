#include "kinegen/kpam.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <sstream>

#include "kinegen/rng.hpp"

namespace kinegen::kpam {

using config::AxisFrame;
using config::Constraint;
using config::ConstraintType;
using config::SolverConfig;
using scene::SceneState;

double ResidualVector::cost() const {
  double sum = 0.0;
  for (const ConstraintResidual& c : constraints)
    for (double v : c.values) {
      const double n = v / c.tolerance;
      sum += n * n;
    }
  return sum;
}

ValidationError::ValidationError(std::vector<config::Violation> violations)
    : Error([&violations] {
        std::ostringstream os;
        os << "config failed validation:";
        for (const auto& v : violations) os << " [" << to_string(v.code) << "] " << v.message;
        return os.str();
      }()),
      violations_(std::move(violations)) {}

InfeasibleError::InfeasibleError(ActuationSolution best)
    : Error("no restart satisfied all constraint tolerances (best cost " +
            std::to_string(best.cost) + ")"),
      best_(std::move(best)) {}

namespace {

// Constraint with every scene-dependent quantity resolved once; only the
// candidate pose varies during iteration.
struct Prepared {
  ConstraintType type;
  double tolerance = 0.0;
  // point2point
  Vec3 tool_point_local;
  Vec3 target_world;
  // axis constraints
  Vec3 tool_axis_local;    // unit
  Vec3 target_axis_world;  // unit
  double target_inner_product = 0.0;
};

Vec3 object_keypoint_world(const SceneState& scn, const std::string& name) {
  return scene::keypoint_world(scn, scene::KeypointRef{"", name});
}

Prepared prepare(const Constraint& c, const SceneState& scn) {
  Prepared p;
  p.type = c.type;
  p.tolerance = c.tolerance;
  if (c.type == ConstraintType::point2point_constraint) {
    p.tool_point_local = scn.end_effector.local_keypoint(c.keypoint_name);
    p.target_world = object_keypoint_world(scn, c.target_keypoint_name);
    return p;
  }
  const Vec3 from = scn.end_effector.local_keypoint(c.axis_from_keypoint_name);
  const Vec3 to = scn.end_effector.local_keypoint(c.axis_to_keypoint_name);
  p.tool_axis_local = (to - from).normalized();
  if (config::is_frame_constraint(c.type)) {
    const Vec3 axis = c.target_axis.normalized();
    if (c.target_axis_frame == AxisFrame::world) {
      p.target_axis_world = axis;
    } else {
      const scene::PlacedObject* obj = scn.first_articulated();
      if (!obj) throw UnknownReferenceError("object-frame axis needs an articulated object");
      p.target_axis_world = obj->base_pose.rotation.rotate(axis);
    }
  } else {
    const Vec3 a = object_keypoint_world(scn, c.target_axis_from_keypoint_name);
    const Vec3 b = object_keypoint_world(scn, c.target_axis_to_keypoint_name);
    p.target_axis_world = (b - a).normalized();
  }
  p.target_inner_product = c.target_inner_product;
  return p;
}

ConstraintResidual evaluate(const Prepared& p, const Pose& candidate) {
  ConstraintResidual out;
  out.type = p.type;
  out.tolerance = p.tolerance;
  if (p.type == ConstraintType::point2point_constraint) {
    const Vec3 r = candidate.apply(p.tool_point_local) - p.target_world;
    out.values = {r.x, r.y, r.z};
    out.magnitude = r.norm();
    return out;
  }
  const Vec3 u = candidate.rotation.rotate(p.tool_axis_local);
  const double r = u.dot(p.target_axis_world) - p.target_inner_product;
  out.values = {r};
  out.magnitude = std::abs(r);
  return out;
}

std::vector<std::array<double, 6>> jacobian(const Prepared& p, const Pose& candidate) {
  std::vector<std::array<double, 6>> rows;
  if (p.type == ConstraintType::point2point_constraint) {
    // r = exp(w) R p + t + dt - q  =>  dr/ddt = I, dr/dw = -[R p]x
    const Vec3 v = candidate.rotation.rotate(p.tool_point_local);
    rows.push_back({1, 0, 0, 0.0, v.z, -v.y});
    rows.push_back({0, 1, 0, -v.z, 0.0, v.x});
    rows.push_back({0, 0, 1, v.y, -v.x, 0.0});
    return rows;
  }
  // r = u_t . exp(w) R d  =>  dr/dw = (R d) x u_t, dr/ddt = 0
  const Vec3 u = candidate.rotation.rotate(p.tool_axis_local);
  const Vec3 g = u.cross(p.target_axis_world);
  rows.push_back({0, 0, 0, g.x, g.y, g.z});
  return rows;
}

std::vector<Prepared> prepare_all(const SolverConfig& cfg, const SceneState& scn) {
  std::vector<Prepared> out;
  out.reserve(cfg.constraint_list.size());
  for (const Constraint& c : cfg.constraint_list) out.push_back(prepare(c, scn));
  return out;
}

ResidualVector evaluate_all(const std::vector<Prepared>& prepared, const Pose& candidate) {
  ResidualVector rv;
  rv.constraints.reserve(prepared.size());
  for (const Prepared& p : prepared) rv.constraints.push_back(evaluate(p, candidate));
  return rv;
}

struct RestartResult {
  Pose pose;
  double cost = 0.0;
  bool satisfied = false;
};

int total_residual_dim(const std::vector<Prepared>& prepared) {
  int m = 0;
  for (const Prepared& p : prepared)
    m += p.type == ConstraintType::point2point_constraint ? 3 : 1;
  return m;
}

// One damped least-squares descent from `init`.
RestartResult descend(const std::vector<Prepared>& prepared, const Pose& init,
                      const SolveOptions& opts) {
  const int m = total_residual_dim(prepared);
  Eigen::MatrixXd J(m, 6);
  Eigen::VectorXd r(m);

  auto fill = [&](const Pose& pose) -> double {
    int row = 0;
    double cost = 0.0;
    for (const Prepared& p : prepared) {
      const ConstraintResidual res = evaluate(p, pose);
      const auto rows = jacobian(p, pose);
      const double w = 1.0 / p.tolerance;
      for (std::size_t i = 0; i < res.values.size(); ++i) {
        const double nv = res.values[i] * w;
        r(row) = nv;
        for (int k = 0; k < 6; ++k) J(row, k) = rows[i][k] * w;
        cost += nv * nv;
        ++row;
      }
    }
    return cost;
  };
  auto cost_only = [&](const Pose& pose) -> double {
    double cost = 0.0;
    for (const Prepared& p : prepared) {
      const ConstraintResidual res = evaluate(p, pose);
      for (double v : res.values) {
        const double nv = v / p.tolerance;
        cost += nv * nv;
      }
    }
    return cost;
  };

  Pose pose = init;
  double cost = fill(pose);
  double lambda = opts.damping;
  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    const Eigen::Matrix<double, 6, 6> H = J.transpose() * J;
    const Eigen::Matrix<double, 6, 1> g = J.transpose() * r;
    bool stepped = false;
    double decrease = 0.0;
    for (int attempt = 0; attempt < 8; ++attempt) {
      Eigen::Matrix<double, 6, 6> damped = H;
      for (int k = 0; k < 6; ++k) damped(k, k) += lambda;
      const Eigen::Matrix<double, 6, 1> delta = damped.ldlt().solve(-g);
      const Pose trial = apply_increment(
          pose, {delta(0), delta(1), delta(2), delta(3), delta(4), delta(5)});
      const double trial_cost = cost_only(trial);
      if (trial_cost < cost) {
        decrease = cost - trial_cost;
        pose = trial;
        cost = fill(pose);
        lambda = std::max(lambda / 3.0, 1e-10);
        stepped = true;
        break;
      }
      lambda *= 10.0;
    }
    if (!stepped || cost <= 0.0) break;
    if (decrease < opts.convergence_tol) break;
  }

  RestartResult out;
  out.pose = pose;
  out.cost = cost;
  out.satisfied = true;
  for (const Prepared& p : prepared)
    if (!evaluate(p, pose).satisfied()) {
      out.satisfied = false;
      break;
    }
  return out;
}

Pose initial_pose(const Vec3& center, std::uint64_t restart_seed) {
  rng::Stream stream(restart_seed);
  // Uniform in a 0.3 m ball around the contact target.
  const double gx = stream.next_gaussian();
  const double gy = stream.next_gaussian();
  const double gz = stream.next_gaussian();
  const double gn = std::sqrt(gx * gx + gy * gy + gz * gz);
  const double radius = 0.3 * std::cbrt(stream.next_unit());
  Vec3 offset{0, 0, 0};
  if (gn > 1e-12) offset = Vec3{gx / gn, gy / gn, gz / gn} * radius;
  // Uniform orientation from four normals.
  const double qw = stream.next_gaussian();
  const double qx = stream.next_gaussian();
  const double qy = stream.next_gaussian();
  const double qz = stream.next_gaussian();
  Pose pose;
  pose.rotation = UnitQuat(qw, qx, qy, qz);
  pose.translation = center + offset;
  return pose;
}

}  // namespace

ConstraintResidual residual(const Constraint& constraint, const Pose& candidate,
                            const SceneState& scn) {
  return evaluate(prepare(constraint, scn), candidate);
}

ResidualVector residuals(const SolverConfig& cfg, const Pose& candidate, const SceneState& scn) {
  return evaluate_all(prepare_all(cfg, scn), candidate);
}

std::vector<std::array<double, 6>> residual_jacobian(const Constraint& constraint,
                                                     const Pose& candidate,
                                                     const SceneState& scn) {
  return jacobian(prepare(constraint, scn), candidate);
}

bool check_satisfied(const ResidualVector& residuals, const SolverConfig& cfg) {
  if (residuals.constraints.size() != cfg.constraint_list.size())
    throw Error("residual vector does not match config constraint list");
  for (std::size_t i = 0; i < residuals.constraints.size(); ++i) {
    ConstraintResidual r = residuals.constraints[i];
    r.tolerance = cfg.constraint_list[i].tolerance;
    if (!r.satisfied()) return false;
  }
  return true;
}

ActuationSolution solve_actuation_pose(const SolverConfig& cfg, const SceneState& scn,
                                       const SolveOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  if (opts.restarts < 1) throw Error("restarts must be >= 1");

  if (const scene::PlacedObject* obj = scn.first_articulated()) {
    auto violations = config::validate(cfg, *obj->object, scn.end_effector);
    if (!violations.empty()) throw ValidationError(std::move(violations));
  }

  const std::vector<Prepared> prepared = prepare_all(cfg, scn);
  const Vec3 center = object_keypoint_world(scn, cfg.contact_constraint().target_keypoint_name);

  std::vector<RestartResult> results(opts.restarts);
#pragma omp parallel for schedule(static)
  for (int rix = 0; rix < opts.restarts; ++rix) {
    const Pose init = initial_pose(center, rng::derive(opts.seed, rix));
    results[rix] = descend(prepared, init, opts);
  }

  // Minimum cost among satisfying restarts; when none satisfies, the best
  // overall is reported through InfeasibleError. Ties break by restart
  // index so parallel runs match serial ones.
  int best = 0;
  for (int rix = 1; rix < opts.restarts; ++rix) {
    if (results[rix].satisfied != results[best].satisfied) {
      if (results[rix].satisfied) best = rix;
      continue;
    }
    if (results[rix].cost < results[best].cost) best = rix;
  }

  ActuationSolution sol;
  sol.pose = results[best].pose;
  sol.residuals = evaluate_all(prepared, sol.pose);
  sol.cost = results[best].cost;
  sol.satisfied = results[best].satisfied;
  sol.restarts_used = opts.restarts;
  sol.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!sol.satisfied) throw InfeasibleError(std::move(sol));
  return sol;
}

}  // namespace kinegen::kpam
