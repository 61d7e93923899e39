#include "kinegen/scene.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <fstream>
#include <sstream>

namespace kinegen::scene {

namespace {

constexpr double kPi = 3.14159265358979323846;

const std::map<std::string, int>& articulated_keypoint_vocabulary() {
  static const std::map<std::string, int> vocab = {
      {"articulated_object_head", 0},
      {"articulated_object_inside_base", 1},
  };
  return vocab;
}

}  // namespace

double Shape::surface_area() const {
  if (kind == ShapeKind::box) {
    const Vec3& h = half_extents;
    return 8.0 * (h.x * h.y + h.y * h.z + h.z * h.x);
  }
  return 2.0 * kPi * radius * (2.0 * half_height) + 2.0 * kPi * radius * radius;
}

bool EndEffector::has_keypoint(const std::string& name) const {
  return name == "tool_head" || name == "tool_tail" || name == "tool_side";
}

Vec3 EndEffector::local_keypoint(const std::string& name) const {
  if (name == "tool_head") return tool_head;
  if (name == "tool_tail") return tool_tail;
  if (name == "tool_side") return tool_side;
  throw UnknownKeypointError(name);
}

LinkPoses forward_kinematics(const ArticulatedObject& obj, const Pose& base_pose,
                             double joint_value) {
  const Joint& j = obj.joint;
  if (joint_value < j.lower - 1e-9 || joint_value > j.upper + 1e-9)
    throw JointLimitError(obj.class_name + ": joint value " + std::to_string(joint_value) +
                          " outside [" + std::to_string(j.lower) + ", " +
                          std::to_string(j.upper) + "]");
  const double delta = joint_value - j.rest_value;
  Pose motion;
  if (j.kind == JointKind::prismatic) {
    motion = Pose::from_translation(j.axis * delta);
  } else {
    motion = rotate_about_axis(j.axis, j.origin.translation, delta);
  }
  LinkPoses out;
  out.base = base_pose;
  out.child = compose(base_pose, compose(motion, j.origin));
  return out;
}

const PlacedObject* SceneState::first_articulated() const {
  if (objects.empty()) return nullptr;
  return &objects.begin()->second;
}

const PlacedBody* SceneState::first_rigid() const {
  if (rigid_bodies.empty()) return nullptr;
  return &rigid_bodies.begin()->second;
}

Vec3 keypoint_world(const SceneState& scene, const KeypointRef& ref) {
  if (ref.object.empty() && scene.end_effector.has_keypoint(ref.keypoint))
    return scene.end_effector.world_keypoint(ref.keypoint);

  auto lookup_articulated = [&](const PlacedObject& placed) -> std::optional<Vec3> {
    auto it = placed.object->keypoints.find(ref.keypoint);
    if (it == placed.object->keypoints.end()) return std::nullopt;
    const LinkPoses fk = forward_kinematics(*placed.object, placed.base_pose, placed.joint_value);
    return fk.of(it->second.link).apply(it->second.local);
  };
  auto lookup_rigid = [&](const PlacedBody& placed) -> std::optional<Vec3> {
    auto it = placed.object->keypoints.find(ref.keypoint);
    if (it == placed.object->keypoints.end()) return std::nullopt;
    return placed.pose.apply(it->second);
  };

  if (!ref.object.empty()) {
    if (auto it = scene.objects.find(ref.object); it != scene.objects.end()) {
      if (auto p = lookup_articulated(it->second)) return *p;
      throw UnknownKeypointError(ref.object + "." + ref.keypoint);
    }
    if (auto it = scene.rigid_bodies.find(ref.object); it != scene.rigid_bodies.end()) {
      if (auto p = lookup_rigid(it->second)) return *p;
      throw UnknownKeypointError(ref.object + "." + ref.keypoint);
    }
    throw UnknownKeypointError(ref.object + "." + ref.keypoint);
  }
  for (const auto& [name, placed] : scene.objects)
    if (auto p = lookup_articulated(placed)) return *p;
  for (const auto& [name, placed] : scene.rigid_bodies)
    if (auto p = lookup_rigid(placed)) return *p;
  throw UnknownKeypointError(ref.keypoint);
}

const char* to_string(SuccessCriterion c) {
  switch (c) {
    case SuccessCriterion::articulated_open: return "articulated_open";
    case SuccessCriterion::articulated_closed: return "articulated_closed";
    case SuccessCriterion::distance_articulated_rigidbody:
      return "distance_articulated_rigidbody";
    case SuccessCriterion::distance_gripper_rigidbody: return "distance_gripper_rigidbody";
    case SuccessCriterion::distance_gripper_articulated: return "distance_gripper_articulated";
  }
  return "?";
}

std::optional<SuccessCriterion> criterion_from_string(const std::string& name) {
  for (SuccessCriterion c :
       {SuccessCriterion::articulated_open, SuccessCriterion::articulated_closed,
        SuccessCriterion::distance_articulated_rigidbody,
        SuccessCriterion::distance_gripper_rigidbody,
        SuccessCriterion::distance_gripper_articulated})
    if (name == to_string(c)) return c;
  return std::nullopt;
}

namespace {

Vec3 rigid_anchor(const PlacedBody& body) {
  auto it = body.object->keypoints.find("center");
  if (it != body.object->keypoints.end()) return body.pose.apply(it->second);
  return body.pose.translation;
}

Vec3 articulated_anchor(const SceneState& scene, const PlacedObject& placed) {
  // The drop point when the asset has one, the handle otherwise.
  const char* names[] = {"articulated_object_inside_base", "articulated_object_head"};
  for (const char* n : names)
    if (placed.object->keypoints.count(n))
      return keypoint_world(scene, KeypointRef{"", n});
  throw UnknownReferenceError(placed.object->class_name + " has no reference keypoint");
}

}  // namespace

SuccessResult evaluate_success(const SceneState& scene, SuccessCriterion criterion,
                               const SuccessThresholds& thresholds) {
  auto require_articulated = [&]() -> const PlacedObject& {
    const PlacedObject* p = scene.first_articulated();
    if (!p) throw UnknownReferenceError("criterion needs an articulated object");
    return *p;
  };
  auto require_rigid = [&]() -> const PlacedBody& {
    const PlacedBody* p = scene.first_rigid();
    if (!p) throw UnknownReferenceError("criterion needs a rigid body");
    return *p;
  };

  switch (criterion) {
    case SuccessCriterion::articulated_open: {
      const PlacedObject& obj = require_articulated();
      const double f = obj.object->joint.fraction(obj.joint_value);
      return {f >= thresholds.open_fraction, f};
    }
    case SuccessCriterion::articulated_closed: {
      const PlacedObject& obj = require_articulated();
      const double f = obj.object->joint.fraction(obj.joint_value);
      return {f <= thresholds.closed_fraction, f};
    }
    case SuccessCriterion::distance_articulated_rigidbody: {
      const PlacedObject& obj = require_articulated();
      const double d = (articulated_anchor(scene, obj) - rigid_anchor(require_rigid())).norm();
      return {d <= thresholds.distance, d};
    }
    case SuccessCriterion::distance_gripper_rigidbody: {
      const double d =
          (scene.end_effector.world_keypoint("tool_head") - rigid_anchor(require_rigid())).norm();
      return {d <= thresholds.distance, d};
    }
    case SuccessCriterion::distance_gripper_articulated: {
      const PlacedObject& obj = require_articulated();
      (void)obj;
      const Vec3 head = keypoint_world(scene, KeypointRef{"", "articulated_object_head"});
      const double d = (scene.end_effector.world_keypoint("tool_head") - head).norm();
      return {d <= thresholds.distance, d};
    }
  }
  throw Error("unreachable criterion");
}

// ---------------------------------------------------------------------------
// Asset library

const AssetClass& AssetLibrary::asset_class(const std::string& class_name) const {
  auto it = classes_.find(class_name);
  if (it == classes_.end()) throw UnknownReferenceError("unknown asset class: " + class_name);
  return it->second;
}

const RigidObject& AssetLibrary::rigid(const std::string& name) const {
  auto it = rigid_.find(name);
  if (it == rigid_.end()) throw UnknownReferenceError("unknown rigid body: " + name);
  return it->second;
}

void AssetLibrary::add_class(AssetClass cls) {
  classes_[cls.prototype.class_name] = std::move(cls);
}

void AssetLibrary::add_rigid(RigidObject body) { rigid_[body.name] = std::move(body); }

namespace {

Shape scaled(const Shape& s, double k) {
  Shape out = s;
  out.half_extents = s.half_extents * k;
  out.radius = s.radius * k;
  out.half_height = s.half_height * k;
  out.local_pose.translation = s.local_pose.translation * k;
  return out;
}

}  // namespace

std::shared_ptr<const ArticulatedObject> AssetLibrary::instantiate(
    const std::string& class_name, const std::string& instance_id) const {
  const AssetClass& cls = asset_class(class_name);
  double scale = 1.0;
  bool found = false;
  for (const AssetInstance& inst : cls.instances)
    if (inst.id == instance_id) {
      scale = inst.scale;
      found = true;
      break;
    }
  if (!found)
    throw UnknownReferenceError("unknown instance " + instance_id + " of " + class_name);

  auto obj = std::make_shared<ArticulatedObject>(cls.prototype);
  obj->instance_id = instance_id;
  for (Shape& s : obj->base_link) s = scaled(s, scale);
  for (Shape& s : obj->child_link) s = scaled(s, scale);
  obj->joint.origin.translation = obj->joint.origin.translation * scale;
  if (obj->joint.kind == JointKind::prismatic) {
    obj->joint.lower *= scale;
    obj->joint.upper *= scale;
    obj->joint.rest_value *= scale;
  }
  for (auto& [name, kp] : obj->keypoints) kp.local = kp.local * scale;
  return obj;
}

std::shared_ptr<const RigidObject> AssetLibrary::instantiate_rigid(const std::string& name) const {
  return std::make_shared<RigidObject>(rigid(name));
}

// ---------------------------------------------------------------------------
// Manifest parsing

namespace {

Vec3 parse_vec3(const YAML::Node& n, const char* what) {
  if (!n || !n.IsSequence() || n.size() != 3)
    throw ParseError(std::string(what) + " must be a 3-element list");
  return {n[0].as<double>(), n[1].as<double>(), n[2].as<double>()};
}

Pose parse_pose7(const YAML::Node& n, const char* what) {
  if (!n) return Pose::identity();
  if (!n.IsSequence() || n.size() != 7)
    throw ParseError(std::string(what) + " must be [tx, ty, tz, qw, qx, qy, qz]");
  std::array<double, 7> a;
  for (std::size_t i = 0; i < 7; ++i) a[i] = n[i].as<double>();
  return Pose::from_array(a);
}

Shape parse_shape(const YAML::Node& n) {
  Shape s;
  const std::string kind = n["kind"].as<std::string>();
  if (kind == "box") {
    s.kind = ShapeKind::box;
    s.half_extents = parse_vec3(n["half_extents"], "half_extents");
    if (s.half_extents.x <= 0 || s.half_extents.y <= 0 || s.half_extents.z <= 0)
      throw InvariantViolation("shape", "box half extents must be positive");
  } else if (kind == "cylinder") {
    s.kind = ShapeKind::cylinder;
    s.radius = n["radius"].as<double>();
    s.half_height = n["half_height"].as<double>();
    if (s.radius <= 0 || s.half_height <= 0)
      throw InvariantViolation("shape", "cylinder dimensions must be positive");
  } else {
    throw ParseError("unknown shape kind: " + kind);
  }
  s.local_pose = parse_pose7(n["pose"], "shape pose");
  return s;
}

std::vector<Shape> parse_shapes(const YAML::Node& n, const std::string& subject) {
  std::vector<Shape> out;
  if (!n || !n.IsSequence()) throw ParseError(subject + ": shapes must be a list");
  for (const YAML::Node& s : n) out.push_back(parse_shape(s));
  return out;
}

Joint parse_joint(const YAML::Node& n, const std::string& subject) {
  Joint j;
  const std::string kind = n["kind"].as<std::string>();
  if (kind == "prismatic")
    j.kind = JointKind::prismatic;
  else if (kind == "revolute")
    j.kind = JointKind::revolute;
  else
    throw InvariantViolation(subject, "joint kind must be prismatic or revolute, got " + kind);
  j.axis = parse_vec3(n["axis"], "joint axis");
  if (std::abs(j.axis.norm() - 1.0) > 1e-9)
    throw InvariantViolation(subject, "joint axis must be unit length");
  j.origin = parse_pose7(n["origin"], "joint origin");
  const YAML::Node limits = n["limits"];
  if (!limits || !limits.IsSequence() || limits.size() != 2)
    throw ParseError(subject + ": joint limits must be [lo, hi]");
  j.lower = limits[0].as<double>();
  j.upper = limits[1].as<double>();
  if (!(j.lower < j.upper)) throw InvariantViolation(subject, "joint limits require lo < hi");
  j.rest_value = n["rest"] ? n["rest"].as<double>() : j.lower;
  if (j.rest_value < j.lower || j.rest_value > j.upper)
    throw InvariantViolation(subject, "rest value outside joint limits");
  return j;
}

}  // namespace

AssetLibrary parse_asset_manifest(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ParseError(std::string("manifest: ") + e.what());
  }
  AssetLibrary lib;
  if (!root.IsMap()) {
    if (root.IsNull() || !root.IsDefined()) return lib;
    throw ParseError("manifest root must be a mapping");
  }

  for (const YAML::Node& node : root["assets"]) {
    AssetClass cls;
    ArticulatedObject& obj = cls.prototype;
    obj.class_name = node["class"].as<std::string>();
    obj.description = node["description"] ? node["description"].as<std::string>() : "";

    // Exactly one unfixed joint per asset. `joints:` lists are accepted so
    // the rule is checkable; `joint:` is the single-entry shorthand.
    std::vector<YAML::Node> joint_nodes;
    if (node["joint"]) joint_nodes.push_back(node["joint"]);
    if (node["joints"])
      for (const YAML::Node& j : node["joints"]) joint_nodes.push_back(j);
    if (joint_nodes.size() != 1)
      throw InvariantViolation(obj.class_name,
                               "exactly one unfixed joint required, found " +
                                   std::to_string(joint_nodes.size()));
    obj.joint = parse_joint(joint_nodes[0], obj.class_name);

    const YAML::Node links = node["links"];
    if (!links || !links["base"] || !links["child"])
      throw ParseError(obj.class_name + ": links must declare base and child");
    obj.base_link = parse_shapes(links["base"]["shapes"], obj.class_name);
    obj.child_link = parse_shapes(links["child"]["shapes"], obj.class_name);

    for (const auto& kv : node["keypoints"]) {
      const std::string name = kv.first.as<std::string>();
      if (!articulated_keypoint_vocabulary().count(name))
        throw InvariantViolation(obj.class_name, "keypoint name outside vocabulary: " + name);
      Keypoint kp;
      const std::string link = kv.second["link"].as<std::string>();
      if (link == "base")
        kp.link = LinkId::base;
      else if (link == "child")
        kp.link = LinkId::child;
      else
        throw InvariantViolation(obj.class_name, "keypoint link must be base or child");
      kp.local = parse_vec3(kv.second["at"], "keypoint position");
      obj.keypoints[name] = kp;
    }

    if (node["instances"]) {
      for (const YAML::Node& inst : node["instances"]) {
        AssetInstance ai;
        if (inst.IsScalar()) {
          ai.id = inst.as<std::string>();
        } else {
          ai.id = inst["id"].as<std::string>();
          ai.scale = inst["scale"] ? inst["scale"].as<double>() : 1.0;
        }
        if (ai.scale <= 0) throw InvariantViolation(obj.class_name, "instance scale must be > 0");
        cls.instances.push_back(ai);
      }
    } else {
      cls.instances.push_back({obj.class_name + "_0", 1.0});
    }
    lib.add_class(std::move(cls));
  }

  for (const YAML::Node& node : root["rigid_bodies"]) {
    RigidObject body;
    body.name = node["name"].as<std::string>();
    body.shapes = parse_shapes(node["shapes"], body.name);
    if (body.shapes.empty()) throw InvariantViolation(body.name, "rigid body needs a shape");
    for (const auto& kv : node["keypoints"])
      body.keypoints[kv.first.as<std::string>()] = parse_vec3(kv.second, "keypoint");
    lib.add_rigid(std::move(body));
  }
  return lib;
}

AssetLibrary load_asset_library(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest: " + manifest_path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_asset_manifest(ss.str());
}

SceneState parse_scene(const std::string& yaml_text, const AssetLibrary& lib) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ParseError(std::string("scene: ") + e.what());
  }
  SceneState scene;
  for (const YAML::Node& node : root["objects"]) {
    const std::string cls = node["class"].as<std::string>();
    const std::string instance =
        node["instance"] ? node["instance"].as<std::string>() : lib.asset_class(cls).instances.front().id;
    PlacedObject placed;
    placed.object = lib.instantiate(cls, instance);
    placed.base_pose = parse_pose7(node["base_pose"], "base_pose");
    placed.joint_value =
        node["joint_value"] ? node["joint_value"].as<double>() : placed.object->joint.rest_value;
    const std::string name = node["name"] ? node["name"].as<std::string>() : cls;
    scene.objects[name] = std::move(placed);
  }
  for (const YAML::Node& node : root["rigid_bodies"]) {
    PlacedBody placed;
    const std::string name = node["name"].as<std::string>();
    placed.object = lib.instantiate_rigid(name);
    placed.pose = parse_pose7(node["pose"], "pose");
    scene.rigid_bodies[name] = std::move(placed);
  }
  if (root["end_effector"]) {
    scene.end_effector.pose = parse_pose7(root["end_effector"]["pose"], "end effector pose");
    if (root["end_effector"]["width"])
      scene.end_effector.width = root["end_effector"]["width"].as<double>();
    if (scene.end_effector.width < 0 || scene.end_effector.width > kGripperMaxWidth)
      throw InvariantViolation("end_effector", "width outside [0, max]");
  }
  for (const auto& [name, placed] : scene.objects)
    (void)forward_kinematics(*placed.object, placed.base_pose, placed.joint_value);
  return scene;
}

SceneState load_scene(const std::string& scene_path, const AssetLibrary& lib) {
  std::ifstream in(scene_path);
  if (!in) throw IoError("cannot open scene: " + scene_path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scene(ss.str(), lib);
}

}  // namespace kinegen::scene
