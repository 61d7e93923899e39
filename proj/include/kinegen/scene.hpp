#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "kinegen/geometry.hpp"

namespace kinegen::scene {

enum class ShapeKind { box, cylinder };

// Primitive stand-in for a mesh. Boxes store half-extents, cylinders radius
// and half-height (axis along local z).
struct Shape {
  ShapeKind kind = ShapeKind::box;
  Vec3 half_extents;           // box
  double radius = 0.0;         // cylinder
  double half_height = 0.0;    // cylinder
  Pose local_pose;             // relative to the owning link

  double surface_area() const;
};

enum class JointKind { prismatic, revolute };

struct Joint {
  JointKind kind = JointKind::revolute;
  Vec3 axis{0.0, 0.0, 1.0};  // unit, in the parent-link frame
  Pose origin;               // child-link frame in the parent-link frame at rest
  double lower = 0.0;
  double upper = 1.0;
  double rest_value = 0.0;

  double range() const { return upper - lower; }
  double fraction(double value) const { return (value - lower) / range(); }
};

enum class LinkId { base, child };

struct Keypoint {
  LinkId link = LinkId::base;
  Vec3 local;
};

struct ArticulatedObject {
  std::string class_name;
  std::string instance_id;
  std::vector<Shape> base_link;
  std::vector<Shape> child_link;
  Joint joint;
  std::map<std::string, Keypoint> keypoints;
  std::string description;
};

struct RigidObject {
  std::string name;
  std::vector<Shape> shapes;
  std::map<std::string, Vec3> keypoints;
};

inline constexpr double kGripperMaxWidth = 0.08;

struct EndEffector {
  Pose pose;
  double width = 0.04;
  Vec3 tool_head{0.0, 0.0, 0.10};
  Vec3 tool_tail{0.0, 0.0, 0.0};
  Vec3 tool_side{0.04, 0.0, 0.10};

  bool has_keypoint(const std::string& name) const;
  Vec3 local_keypoint(const std::string& name) const;  // throws UnknownKeypointError
  Vec3 world_keypoint(const std::string& name) const { return pose.apply(local_keypoint(name)); }
};

struct LinkPoses {
  Pose base;
  Pose child;
  const Pose& of(LinkId id) const { return id == LinkId::base ? base : child; }
};

// World poses of both links; throws JointLimitError when joint_value is
// outside the joint limits.
LinkPoses forward_kinematics(const ArticulatedObject& obj, const Pose& base_pose,
                             double joint_value);

// Reference to a named keypoint. An empty object name means "search the
// scene": tool_* resolves on the end effector, anything else on the (single)
// articulated object, then the rigid bodies.
struct KeypointRef {
  std::string object;
  std::string keypoint;
};

struct PlacedObject {
  std::shared_ptr<const ArticulatedObject> object;
  Pose base_pose;
  double joint_value = 0.0;
};

struct PlacedBody {
  std::shared_ptr<const RigidObject> object;
  Pose pose;
};

struct Attachment {
  // Either a keypoint on an articulated object or a whole rigid body.
  std::variant<KeypointRef, std::string> target;
  Pose grasp_offset;  // gripper frame -> grasp frame
};

struct SceneState {
  std::map<std::string, PlacedObject> objects;
  std::map<std::string, PlacedBody> rigid_bodies;
  EndEffector end_effector;
  std::optional<Attachment> attachment;

  const PlacedObject* first_articulated() const;
  const PlacedBody* first_rigid() const;
};

Vec3 keypoint_world(const SceneState& scene, const KeypointRef& ref);

enum class SuccessCriterion {
  articulated_open,
  articulated_closed,
  distance_articulated_rigidbody,
  distance_gripper_rigidbody,
  distance_gripper_articulated,
};

const char* to_string(SuccessCriterion c);
std::optional<SuccessCriterion> criterion_from_string(const std::string& name);

struct SuccessThresholds {
  double open_fraction = 0.85;
  double closed_fraction = 0.10;
  double distance = 0.05;  // meters
};

struct SuccessResult {
  bool passed = false;
  double metric = 0.0;
};

SuccessResult evaluate_success(const SceneState& scene, SuccessCriterion criterion,
                               const SuccessThresholds& thresholds = {});

// ---------------------------------------------------------------------------
// Asset library

struct AssetInstance {
  std::string id;
  double scale = 1.0;
};

struct AssetClass {
  ArticulatedObject prototype;  // instance_id empty; scale 1
  std::vector<AssetInstance> instances;
};

class AssetLibrary {
public:
  bool has_class(const std::string& class_name) const { return classes_.count(class_name) > 0; }
  const AssetClass& asset_class(const std::string& class_name) const;
  const std::map<std::string, AssetClass>& classes() const { return classes_; }

  bool has_rigid(const std::string& name) const { return rigid_.count(name) > 0; }
  const RigidObject& rigid(const std::string& name) const;
  const std::map<std::string, RigidObject>& rigid_bodies() const { return rigid_; }

  // Instantiates `class_name` / `instance_id` with the instance scale applied.
  std::shared_ptr<const ArticulatedObject> instantiate(const std::string& class_name,
                                                       const std::string& instance_id) const;
  std::shared_ptr<const RigidObject> instantiate_rigid(const std::string& name) const;

  void add_class(AssetClass cls);
  void add_rigid(RigidObject body);
  std::size_t size() const { return classes_.size(); }

private:
  std::map<std::string, AssetClass> classes_;
  std::map<std::string, RigidObject> rigid_;
};

// Parses the YAML manifest and enforces the one-unfixed-joint rule plus the
// keypoint vocabulary. Throws ParseError / InvariantViolation.
AssetLibrary load_asset_library(const std::string& manifest_path);
AssetLibrary parse_asset_manifest(const std::string& yaml_text);

// Scene files used by the CLI (`solve`, fixtures): objects with poses and
// joint values, rigid bodies, and the end effector.
SceneState load_scene(const std::string& scene_path, const AssetLibrary& lib);
SceneState parse_scene(const std::string& yaml_text, const AssetLibrary& lib);

}  // namespace kinegen::scene
