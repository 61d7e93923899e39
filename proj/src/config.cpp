#include "kinegen/config.hpp"

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <cmath>
#include <nlohmann/json.hpp>
#include <regex>
#include <sstream>

namespace kinegen::config {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kMaxTranslation = 1.0;   // meters
constexpr double kNamedStep = 0.15;       // meters, alias-table translation

std::string fmt_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace

const char* to_string(ConstraintType t) {
  switch (t) {
    case ConstraintType::point2point_constraint: return "point2point_constraint";
    case ConstraintType::frame_axis_parallel: return "frame_axis_parallel";
    case ConstraintType::frame_axis_orthogonal: return "frame_axis_orthogonal";
    case ConstraintType::keypoint_axis_parallel: return "keypoint_axis_parallel";
    case ConstraintType::keypoint_axis_orthogonal: return "keypoint_axis_orthogonal";
  }
  return "?";
}

std::optional<ConstraintType> constraint_type_from_string(const std::string& name) {
  for (ConstraintType t :
       {ConstraintType::point2point_constraint, ConstraintType::frame_axis_parallel,
        ConstraintType::frame_axis_orthogonal, ConstraintType::keypoint_axis_parallel,
        ConstraintType::keypoint_axis_orthogonal})
    if (name == to_string(t)) return t;
  return std::nullopt;
}

const char* to_string(MotionMode m) {
  switch (m) {
    case MotionMode::translate_x: return "translate_x";
    case MotionMode::translate_y: return "translate_y";
    case MotionMode::translate_z: return "translate_z";
    case MotionMode::rotate: return "rotate";
  }
  return "?";
}

std::optional<Motion::Structured> named_motion_alias(const std::string& name) {
  if (name == "move-forward") return Motion::Structured{MotionMode::translate_x, kNamedStep};
  if (name == "move-backward") return Motion::Structured{MotionMode::translate_x, -kNamedStep};
  if (name == "move-left") return Motion::Structured{MotionMode::translate_y, kNamedStep};
  if (name == "move-right") return Motion::Structured{MotionMode::translate_y, -kNamedStep};
  if (name == "move-up") return Motion::Structured{MotionMode::translate_z, kNamedStep};
  if (name == "move-down") return Motion::Structured{MotionMode::translate_z, -kNamedStep};
  return std::nullopt;
}

Motion::Structured Motion::resolved() const {
  if (!is_named()) return std::get<Structured>(value);
  auto alias = named_motion_alias(name());
  if (!alias) throw MotionGrammarError("unknown named motion: " + name());
  return *alias;
}

const Constraint& SolverConfig::contact_constraint() const {
  for (const Constraint& c : constraint_list)
    if (c.type == ConstraintType::point2point_constraint) return c;
  throw Error("config has no point2point constraint");
}

bool valid_task_name(const std::string& name) {
  static const std::regex re("[a-z0-9]+(-[a-z0-9]+)*");
  return std::regex_match(name, re);
}

// ---------------------------------------------------------------------------
// Task spec parsing (Python-dict style blocks)

namespace {

// Returns [start, end) of the first balanced brace block at or after `from`,
// or npos if none; ignores braces inside quoted strings.
std::pair<std::size_t, std::size_t> find_brace_block(const std::string& text, std::size_t from) {
  std::size_t start = std::string::npos;
  int depth = 0;
  char quote = 0;
  for (std::size_t i = from; i < text.size(); ++i) {
    const char c = text[i];
    if (quote) {
      if (c == '\\')
        ++i;
      else if (c == quote)
        quote = 0;
      continue;
    }
    if (c == '"' || c == '\'') {
      quote = c;
      continue;
    }
    if (c == '{') {
      if (depth == 0) start = i;
      ++depth;
    } else if (c == '}') {
      if (depth > 0 && --depth == 0) return {start, i + 1};
    }
  }
  return {std::string::npos, std::string::npos};
}

}  // namespace

// Code fences stripped to their contents so a fenced dict still parses.
std::string strip_code_fences(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t fence = text.find("```", i);
    if (fence == std::string::npos) {
      out.append(text, i, text.size() - i);
      break;
    }
    out.append(text, i, fence - i);
    std::size_t body = text.find('\n', fence);
    if (body == std::string::npos) break;
    const std::size_t close = text.find("```", body);
    if (close == std::string::npos) {
      out.append(text, body, text.size() - body);
      break;
    }
    out.append(text, body, close - body);
    i = close + 3;
  }
  return out;
}

namespace {

nlohmann::json parse_dict_block(const std::string& block, std::size_t offset) {
  try {
    return nlohmann::json::parse(block);
  } catch (const nlohmann::json::exception&) {
    // Python dicts with single quotes: retry with quotes swapped when the
    // block contains no double quotes of its own.
    if (block.find('"') == std::string::npos) {
      std::string swapped = block;
      for (char& c : swapped)
        if (c == '\'') c = '"';
      try {
        return nlohmann::json::parse(swapped);
      } catch (const nlohmann::json::exception& e2) {
        throw SpecParseError(std::string("bad dictionary block: ") + e2.what(), offset);
      }
    }
    throw SpecParseError("bad dictionary block", offset);
  }
}

TaskSpec task_spec_from_json(const nlohmann::json& j, std::size_t offset) {
  if (!j.is_object()) throw SpecParseError("expected a dictionary", offset);
  TaskSpec spec;
  if (!j.contains("task-name") || !j["task-name"].is_string())
    throw SpecParseError("missing task-name", offset);
  spec.task_name = j["task-name"].get<std::string>();
  if (!valid_task_name(spec.task_name))
    throw SpecParseError("task-name must be lower-case hyphen-separated: " + spec.task_name,
                         offset);
  if (!j.contains("task-description") || !j["task-description"].is_string())
    throw SpecParseError("missing task-description", offset);
  spec.task_description = j["task-description"].get<std::string>();
  if (!j.contains("assets-used") || !j["assets-used"].is_array())
    throw SpecParseError("missing assets-used", offset);
  for (const auto& a : j["assets-used"]) {
    if (!a.is_string()) throw SpecParseError("assets-used entries must be strings", offset);
    spec.assets_used.push_back(a.get<std::string>());
  }
  if (!j.contains("success-criteria") || !j["success-criteria"].is_array() ||
      j["success-criteria"].empty())
    throw SpecParseError("missing success-criteria", offset);
  for (const auto& c : j["success-criteria"]) {
    if (!c.is_string()) throw SpecParseError("success-criteria entries must be strings", offset);
    auto crit = scene::criterion_from_string(c.get<std::string>());
    if (!crit) throw VocabularyError("unknown success criterion: " + c.get<std::string>(), offset);
    spec.success_criteria.push_back(*crit);
  }
  return spec;
}

}  // namespace

TaskSpec parse_task_spec(const std::string& text) {
  const std::string body = strip_code_fences(text);
  auto [start, end] = find_brace_block(body, 0);
  if (start == std::string::npos) throw SpecParseError("no dictionary block found", 0);
  const nlohmann::json j = parse_dict_block(body.substr(start, end - start), start);
  return task_spec_from_json(j, start);
}

std::vector<std::string> extract_dict_blocks(const std::string& text) {
  const std::string body = strip_code_fences(text);
  std::vector<std::string> out;
  std::size_t cursor = 0;
  while (true) {
    auto [start, end] = find_brace_block(body, cursor);
    if (start == std::string::npos) break;
    out.push_back(body.substr(start, end - start));
    cursor = end;
  }
  return out;
}

std::optional<std::string> parse_name_only_block(const std::string& block) {
  const nlohmann::json j = parse_dict_block(block, 0);
  if (!j.is_object() || j.size() != 1 || !j.contains("task-name") ||
      !j["task-name"].is_string())
    return std::nullopt;
  return j["task-name"].get<std::string>();
}

SubTaskPlan parse_sub_task_plan(const TaskSpec& parent, const std::string& text) {
  const std::string body = strip_code_fences(text);
  SubTaskPlan plan;
  plan.parent = parent;
  std::size_t cursor = 0;
  while (true) {
    auto [start, end] = find_brace_block(body, cursor);
    if (start == std::string::npos) break;
    cursor = end;
    const nlohmann::json j = parse_dict_block(body.substr(start, end - start), start);
    if (!j.is_object()) throw SpecParseError("expected a dictionary", start);
    const std::string name =
        j.contains("task-name") && j["task-name"].is_string() ? j["task-name"].get<std::string>()
                                                              : "";
    if (name == "grasp" || name == "ungrasp") {
      if (j.size() != 1)
        throw SentinelFormatError("sentinel " + name + " must have task-name as its only key",
                                  start);
      plan.steps.emplace_back(
          Sentinel{name == "grasp" ? SentinelKind::grasp : SentinelKind::ungrasp});
    } else {
      plan.steps.emplace_back(task_spec_from_json(j, start));
    }
  }
  if (plan.steps.size() < 2) throw SpecParseError("a plan needs at least 2 sub-tasks", 0);
  if (plan.steps.size() > 5)
    throw TooManySubtasksError("plan has " + std::to_string(plan.steps.size()) +
                                   " sub-tasks, limit is 5",
                               0);
  return plan;
}

// ---------------------------------------------------------------------------
// Solver config parsing (YAML grammar)

namespace {

Vec3 parse_axis(const YAML::Node& n) {
  if (!n || !n.IsSequence() || n.size() != 3)
    throw ConfigParseError("target_axis must be a 3-element list");
  return {n[0].as<double>(), n[1].as<double>(), n[2].as<double>()};
}

std::string require_str(const YAML::Node& n, const char* key) {
  if (!n[key]) throw ConfigParseError(std::string("constraint missing ") + key);
  return n[key].as<std::string>();
}

double require_num(const YAML::Node& n, const char* key) {
  if (!n[key]) throw ConfigParseError(std::string("constraint missing ") + key);
  const double v = n[key].as<double>();
  if (!std::isfinite(v)) throw ConfigParseError(std::string(key) + " must be finite");
  return v;
}

Constraint parse_constraint(const YAML::Node& n) {
  Constraint c;
  const std::string type_name = require_str(n, "type");
  auto type = constraint_type_from_string(type_name);
  if (!type) throw UnknownConstraintType(type_name);
  c.type = *type;
  c.tolerance = require_num(n, "tolerance");
  if (c.type == ConstraintType::point2point_constraint) {
    c.keypoint_name = require_str(n, "keypoint_name");
    c.target_keypoint_name = require_str(n, "target_keypoint_name");
    return c;
  }
  c.axis_from_keypoint_name = require_str(n, "axis_from_keypoint_name");
  c.axis_to_keypoint_name = require_str(n, "axis_to_keypoint_name");
  c.target_inner_product = require_num(n, "target_inner_product");
  if (is_frame_constraint(c.type)) {
    c.target_axis = parse_axis(n["target_axis"]);
    const std::string frame = require_str(n, "target_axis_frame");
    if (frame == "world")
      c.target_axis_frame = AxisFrame::world;
    else if (frame == "object")
      c.target_axis_frame = AxisFrame::object;
    else
      throw ConfigParseError("target_axis_frame must be world or object, got " + frame);
  } else {
    c.target_axis_from_keypoint_name = require_str(n, "target_axis_from_keypoint_name");
    c.target_axis_to_keypoint_name = require_str(n, "target_axis_to_keypoint_name");
  }
  return c;
}

Motion parse_motion(const YAML::Node& n) {
  if (n.IsScalar()) {
    const std::string name = n.as<std::string>();
    if (!named_motion_alias(name)) throw MotionGrammarError("unknown named motion: " + name);
    return Motion::named(name);
  }
  if (n.IsSequence() && n.size() == 2) {
    const std::string mode_name = n[0].as<std::string>();
    MotionMode mode;
    if (mode_name == "translate_x")
      mode = MotionMode::translate_x;
    else if (mode_name == "translate_y")
      mode = MotionMode::translate_y;
    else if (mode_name == "translate_z")
      mode = MotionMode::translate_z;
    else if (mode_name == "rotate")
      mode = MotionMode::rotate;
    else
      throw MotionGrammarError("unknown motion mode: " + mode_name);
    const double value = n[1].as<double>();
    if (!std::isfinite(value)) throw MotionGrammarError("motion value must be finite");
    return Motion::structured(mode, value);
  }
  throw MotionGrammarError("motion must be [mode, value] or a named motion string");
}

std::vector<Motion> parse_motions(const YAML::Node& n) {
  std::vector<Motion> out;
  if (!n || n.IsNull()) return out;
  if (!n.IsSequence()) throw MotionGrammarError("motions must be a list");
  for (const YAML::Node& m : n) out.push_back(parse_motion(m));
  return out;
}

std::vector<std::string> parse_name_list(const YAML::Node& n, const char* key) {
  std::vector<std::string> out;
  if (!n) throw ConfigParseError(std::string("missing ") + key);
  for (const YAML::Node& e : n) out.push_back(e.as<std::string>());
  return out;
}

}  // namespace

SolverConfig parse_solver_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigParseError(std::string("yaml: ") + e.what());
  }
  if (!root.IsMap()) throw ConfigParseError("solver config must be a mapping");
  SolverConfig c;
  if (!root["task_name"]) throw ConfigParseError("missing task_name");
  c.task_name = root["task_name"].as<std::string>();
  c.category_name = root["category_name"] ? root["category_name"].as<std::string>() : "";
  c.tool_keypoint_name_list = parse_name_list(root["tool_keypoint_name_list"],
                                              "tool_keypoint_name_list");
  c.object_keypoint_name_list = parse_name_list(root["object_keypoint_name_list"],
                                                "object_keypoint_name_list");
  if (!root["constraint_list"] || !root["constraint_list"].IsSequence())
    throw ConfigParseError("missing constraint_list");
  for (const YAML::Node& n : root["constraint_list"]) c.constraint_list.push_back(parse_constraint(n));
  c.pre_actuation_motions = parse_motions(root["pre_actuation_motions"]);
  c.post_actuation_motions = parse_motions(root["post_actuation_motions"]);
  return c;
}

std::pair<std::vector<Motion>, std::vector<Motion>> parse_motion_lists(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigParseError(std::string("yaml: ") + e.what());
  }
  if (!root.IsMap()) throw ConfigParseError("motion block must be a mapping");
  return {parse_motions(root["pre_actuation_motions"]),
          parse_motions(root["post_actuation_motions"])};
}

// ---------------------------------------------------------------------------
// Serialization (canonical field order, byte-stable)

namespace {

void emit_name_list(std::ostream& os, const char* key, const std::vector<std::string>& names) {
  os << key << ": [";
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i) os << ", ";
    os << names[i];
  }
  os << "]\n";
}

void emit_motions(std::ostream& os, const char* key, const std::vector<Motion>& motions) {
  if (motions.empty()) {
    os << key << ": []\n";
    return;
  }
  os << key << ":\n";
  for (const Motion& m : motions) {
    if (m.is_named()) {
      os << "- " << m.name() << "\n";
    } else {
      const auto& s = std::get<Motion::Structured>(m.value);
      os << "- [" << to_string(s.mode) << ", " << fmt_double(s.value) << "]\n";
    }
  }
}

}  // namespace

std::string serialize_solver_config(const SolverConfig& c) {
  std::ostringstream os;
  os << "task_name: " << c.task_name << "\n";
  os << "category_name: " << c.category_name << "\n";
  emit_name_list(os, "tool_keypoint_name_list", c.tool_keypoint_name_list);
  emit_name_list(os, "object_keypoint_name_list", c.object_keypoint_name_list);
  os << "constraint_list:\n";
  for (const Constraint& k : c.constraint_list) {
    if (k.type == ConstraintType::point2point_constraint) {
      os << "- keypoint_name: " << k.keypoint_name << "\n";
      os << "  target_keypoint_name: " << k.target_keypoint_name << "\n";
      os << "  tolerance: " << fmt_double(k.tolerance) << "\n";
      os << "  type: " << to_string(k.type) << "\n";
      continue;
    }
    os << "- axis_from_keypoint_name: " << k.axis_from_keypoint_name << "\n";
    os << "  axis_to_keypoint_name: " << k.axis_to_keypoint_name << "\n";
    if (is_frame_constraint(k.type)) {
      os << "  target_axis: [" << fmt_double(k.target_axis.x) << ", "
         << fmt_double(k.target_axis.y) << ", " << fmt_double(k.target_axis.z) << "]\n";
      os << "  target_axis_frame: " << (k.target_axis_frame == AxisFrame::world ? "world" : "object")
         << "\n";
    } else {
      os << "  target_axis_from_keypoint_name: " << k.target_axis_from_keypoint_name << "\n";
      os << "  target_axis_to_keypoint_name: " << k.target_axis_to_keypoint_name << "\n";
    }
    os << "  tolerance: " << fmt_double(k.tolerance) << "\n";
    os << "  target_inner_product: " << fmt_double(k.target_inner_product) << "\n";
    os << "  type: " << to_string(k.type) << "\n";
  }
  emit_motions(os, "pre_actuation_motions", c.pre_actuation_motions);
  emit_motions(os, "post_actuation_motions", c.post_actuation_motions);
  return os.str();
}

std::string serialize_task_spec(const TaskSpec& spec) {
  nlohmann::json j;
  j["task-name"] = spec.task_name;
  j["task-description"] = spec.task_description;
  j["assets-used"] = spec.assets_used;
  std::vector<std::string> crits;
  for (auto c : spec.success_criteria) crits.emplace_back(scene::to_string(c));
  j["success-criteria"] = crits;
  return j.dump(4);
}

// ---------------------------------------------------------------------------
// Validation

const char* to_string(ViolationCode code) {
  switch (code) {
    case ViolationCode::EmptyConstraintList: return "EmptyConstraintList";
    case ViolationCode::MissingContactConstraint: return "MissingContactConstraint";
    case ViolationCode::MultipleContactConstraints: return "MultipleContactConstraints";
    case ViolationCode::UnknownKeypoint: return "UnknownKeypoint";
    case ViolationCode::UndeclaredKeypoint: return "UndeclaredKeypoint";
    case ViolationCode::NonPositiveTolerance: return "NonPositiveTolerance";
    case ViolationCode::InnerProductOutOfRange: return "InnerProductOutOfRange";
    case ViolationCode::MotionOutOfRange: return "MotionOutOfRange";
    case ViolationCode::UnknownMotion: return "UnknownMotion";
  }
  return "?";
}

namespace {

bool contains(const std::vector<std::string>& v, const std::string& s) {
  for (const std::string& e : v)
    if (e == s) return true;
  return false;
}

}  // namespace

std::vector<Violation> validate(const SolverConfig& config,
                                const scene::ArticulatedObject& asset,
                                const scene::EndEffector& ee) {
  std::vector<Violation> out;
  auto flag = [&](ViolationCode code, std::string msg) {
    out.push_back({code, std::move(msg)});
  };

  if (config.constraint_list.empty())
    flag(ViolationCode::EmptyConstraintList, "constraint_list is empty");

  int contacts = 0;
  auto check_keypoint = [&](const std::string& name, const char* field) {
    const bool on_tool = ee.has_keypoint(name);
    const bool on_object = asset.keypoints.count(name) > 0;
    if (!on_tool && !on_object) {
      flag(ViolationCode::UnknownKeypoint,
           std::string(field) + " does not resolve on asset or end effector: " + name);
      return;
    }
    const auto& declared =
        on_tool ? config.tool_keypoint_name_list : config.object_keypoint_name_list;
    if (!contains(declared, name))
      flag(ViolationCode::UndeclaredKeypoint,
           name + " used by " + field + " but missing from its declared name list");
  };

  for (const Constraint& c : config.constraint_list) {
    if (c.tolerance <= 0.0)
      flag(ViolationCode::NonPositiveTolerance,
           std::string(to_string(c.type)) + " tolerance must be > 0");
    if (c.type == ConstraintType::point2point_constraint) {
      ++contacts;
      check_keypoint(c.keypoint_name, "keypoint_name");
      check_keypoint(c.target_keypoint_name, "target_keypoint_name");
      continue;
    }
    check_keypoint(c.axis_from_keypoint_name, "axis_from_keypoint_name");
    check_keypoint(c.axis_to_keypoint_name, "axis_to_keypoint_name");
    if (!is_frame_constraint(c.type)) {
      check_keypoint(c.target_axis_from_keypoint_name, "target_axis_from_keypoint_name");
      check_keypoint(c.target_axis_to_keypoint_name, "target_axis_to_keypoint_name");
    } else if (c.target_axis.norm() < 1e-9) {
      flag(ViolationCode::UnknownKeypoint, "target_axis must be nonzero");
    }
    if (c.target_inner_product < -1.0 || c.target_inner_product > 1.0)
      flag(ViolationCode::InnerProductOutOfRange,
           "target_inner_product outside [-1, 1]: " + fmt_double(c.target_inner_product));
  }
  if (contacts == 0 && !config.constraint_list.empty())
    flag(ViolationCode::MissingContactConstraint, "exactly one point2point_constraint required");
  if (contacts > 1)
    flag(ViolationCode::MultipleContactConstraints,
         "exactly one point2point_constraint required, found " + std::to_string(contacts));

  auto check_motions = [&](const std::vector<Motion>& motions, const char* which) {
    for (const Motion& m : motions) {
      if (m.is_named() && !named_motion_alias(m.name())) {
        flag(ViolationCode::UnknownMotion,
             std::string(which) + " uses unknown named motion " + m.name());
        continue;
      }
      const Motion::Structured s = m.resolved();
      const double bound = s.mode == MotionMode::rotate ? kPi : kMaxTranslation;
      if (std::abs(s.value) > bound + 1e-12)
        flag(ViolationCode::MotionOutOfRange,
             std::string(which) + " " + to_string(s.mode) + " value " + fmt_double(s.value) +
                 " exceeds bound " + fmt_double(bound));
    }
  };
  check_motions(config.pre_actuation_motions, "pre_actuation_motions");
  check_motions(config.post_actuation_motions, "post_actuation_motions");
  return out;
}

}  // namespace kinegen::config
