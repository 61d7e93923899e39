#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "kinegen/geometry.hpp"
#include "kinegen/scene.hpp"

namespace kinegen::config {

class ConfigParseError : public ParseError {
public:
  using ParseError::ParseError;
};
class UnknownConstraintType : public ConfigParseError {
public:
  explicit UnknownConstraintType(const std::string& type)
      : ConfigParseError("unknown constraint type: " + type) {}
};
class MotionGrammarError : public ConfigParseError {
public:
  using ConfigParseError::ConfigParseError;
};
class SpecParseError : public ParseError {
public:
  using ParseError::ParseError;
};
class TooManySubtasksError : public SpecParseError {
public:
  using SpecParseError::SpecParseError;
};
class SentinelFormatError : public SpecParseError {
public:
  using SpecParseError::SpecParseError;
};

struct TaskSpec {
  std::string task_name;         // lower-case, hyphen-separated
  std::string task_description;
  std::vector<std::string> assets_used;
  std::vector<scene::SuccessCriterion> success_criteria;
};

enum class SentinelKind { grasp, ungrasp };

struct Sentinel {
  SentinelKind kind = SentinelKind::grasp;
};

struct SubTaskPlan {
  TaskSpec parent;
  using Step = std::variant<TaskSpec, Sentinel>;
  std::vector<Step> steps;  // 2..5 for generated plans
};

enum class ConstraintType {
  point2point_constraint,
  frame_axis_parallel,
  frame_axis_orthogonal,
  keypoint_axis_parallel,
  keypoint_axis_orthogonal,
};

const char* to_string(ConstraintType t);
std::optional<ConstraintType> constraint_type_from_string(const std::string& name);
inline bool is_axis_constraint(ConstraintType t) {
  return t != ConstraintType::point2point_constraint;
}
inline bool is_frame_constraint(ConstraintType t) {
  return t == ConstraintType::frame_axis_parallel || t == ConstraintType::frame_axis_orthogonal;
}

enum class AxisFrame { world, object };

struct Constraint {
  ConstraintType type = ConstraintType::point2point_constraint;
  // point2point
  std::string keypoint_name;
  std::string target_keypoint_name;
  // axis variants: tool-side axis
  std::string axis_from_keypoint_name;
  std::string axis_to_keypoint_name;
  // frame_axis_* target
  Vec3 target_axis;
  AxisFrame target_axis_frame = AxisFrame::object;
  // keypoint_axis_* target
  std::string target_axis_from_keypoint_name;
  std::string target_axis_to_keypoint_name;

  double tolerance = 0.0;
  double target_inner_product = 0.0;
};

enum class MotionMode { translate_x, translate_y, translate_z, rotate };

const char* to_string(MotionMode m);

// A pre/post-actuation step, either structured `[mode, value]` or one of the
// documented named motions (move-forward, move-up, ...), which alias to
// fixed 0.15 m translations.
struct Motion {
  struct Structured {
    MotionMode mode = MotionMode::translate_x;
    double value = 0.0;  // meters, or radians for rotate
  };
  std::variant<Structured, std::string> value;

  bool is_named() const { return std::holds_alternative<std::string>(value); }
  const std::string& name() const { return std::get<std::string>(value); }
  // Named motions resolved through the alias table.
  Structured resolved() const;

  static Motion structured(MotionMode mode, double v) { return {Structured{mode, v}}; }
  static Motion named(std::string n) { return {std::move(n)}; }
};

// name -> structured translation; empty optional for unknown names.
std::optional<Motion::Structured> named_motion_alias(const std::string& name);

struct SolverConfig {
  std::string task_name;
  std::string category_name;
  std::vector<std::string> tool_keypoint_name_list;
  std::vector<std::string> object_keypoint_name_list;
  std::vector<Constraint> constraint_list;
  std::vector<Motion> pre_actuation_motions;
  std::vector<Motion> post_actuation_motions;

  const Constraint& contact_constraint() const;  // the point2point entry
};

// --- parsing / serialization ------------------------------------------------

// Tolerant extraction of the `{"task-name": ...}` block from LLM output
// (code fences and surrounding prose are stripped), then a strict parse.
TaskSpec parse_task_spec(const std::string& text);

// All dictionary blocks in order, with grasp/ungrasp sentinel handling and
// the <=5 step rule for generated plans.
SubTaskPlan parse_sub_task_plan(const TaskSpec& parent, const std::string& text);

SolverConfig parse_solver_config(const std::string& text);

// Stage-2 responses carry only the motion lists; parsed with the same
// two-grammar motion rules.
std::pair<std::vector<Motion>, std::vector<Motion>> parse_motion_lists(const std::string& text);

// Contents of ``` fences spliced into the surrounding text.
std::string strip_code_fences(const std::string& text);

// Dictionary blocks of a response, fence-stripped, in order of appearance.
std::vector<std::string> extract_dict_blocks(const std::string& text);

// The "task-name" value when the block holds exactly that one key (the
// sentinel / library-reference form); nullopt otherwise.
std::optional<std::string> parse_name_only_block(const std::string& block);

std::string serialize_solver_config(const SolverConfig& config);
std::string serialize_task_spec(const TaskSpec& spec);

// --- validation ---------------------------------------------------------

enum class ViolationCode {
  EmptyConstraintList,
  MissingContactConstraint,
  MultipleContactConstraints,
  UnknownKeypoint,
  UndeclaredKeypoint,
  NonPositiveTolerance,
  InnerProductOutOfRange,
  MotionOutOfRange,
  UnknownMotion,
};

struct Violation {
  ViolationCode code;
  std::string message;
};

const char* to_string(ViolationCode code);

// Structural + referential checks of a config against the asset it should
// manipulate and the end effector. Violations are data, not exceptions.
std::vector<Violation> validate(const SolverConfig& config, const scene::ArticulatedObject& asset,
                                const scene::EndEffector& ee);

bool valid_task_name(const std::string& name);

}  // namespace kinegen::config
