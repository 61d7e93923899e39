#include "kinegen/agent.hpp"

#include <yaml-cpp/yaml.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <regex>
#include <semaphore>
#include <sstream>
#include <thread>

#include "kinegen/rng.hpp"
#include "kinegen/trajectory.hpp"

#include <httplib.h>

namespace kinegen::agent {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Backends

FixtureBackend::FixtureBackend(std::string dir) : dir_(std::move(dir)) {
  if (!fs::is_directory(dir_)) throw IoError("fixture backend dir not found: " + dir_);
}

std::string FixtureBackend::complete(const CompletionRequest& request) {
  const fs::path path = fs::path(dir_) / ("stage" + std::to_string(static_cast<int>(request.stage)) +
                                          "_attempt" + std::to_string(request.attempt) + ".txt");
  std::ifstream in(path);
  if (!in) throw ParseFailure("fixture has no scripted response: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : fallback;
}

struct ParsedUrl {
  bool https = true;
  std::string host_port;
  std::string base_path;
};

ParsedUrl parse_url(const std::string& url) {
  ParsedUrl out;
  std::string rest = url;
  if (rest.rfind("https://", 0) == 0) {
    rest = rest.substr(8);
    out.https = true;
  } else if (rest.rfind("http://", 0) == 0) {
    rest = rest.substr(7);
    out.https = false;
  } else {
    throw Error("backend url must start with http:// or https://: " + url);
  }
  const std::size_t slash = rest.find('/');
  out.host_port = slash == std::string::npos ? rest : rest.substr(0, slash);
  out.base_path = slash == std::string::npos ? "/v1/chat/completions" : rest.substr(slash);
  return out;
}

std::counting_semaphore<256>& request_slots() {
  static std::counting_semaphore<256> sem(
      std::max(1L, std::min(256L, std::strtol(env_or("KINEGEN_LLM_CONCURRENCY", "4").c_str(),
                                              nullptr, 10))));
  return sem;
}

}  // namespace

HttpBackend::HttpBackend()
    : HttpBackend(env_or("KINEGEN_LLM_URL", ""), env_or("KINEGEN_LLM_MODEL", ""),
                  env_or("KINEGEN_LLM_KEY", "")) {}

HttpBackend::HttpBackend(std::string url, std::string model, std::string key)
    : url_(std::move(url)), model_(std::move(model)), key_(std::move(key)) {
  if (url_.empty() || model_.empty())
    throw Error("http backend needs KINEGEN_LLM_URL and KINEGEN_LLM_MODEL");
}

std::string HttpBackend::complete(const CompletionRequest& request) {
  const ParsedUrl url = parse_url(url_);

  nlohmann::json body;
  body["model"] = model_;
  if (request.images.empty()) {
    body["messages"] = {{{"role", "user"}, {"content", request.prompt}}};
  } else {
    nlohmann::json content = nlohmann::json::array();
    content.push_back({{"type", "text"}, {"text", request.prompt}});
    for (const std::string& img : request.images)
      content.push_back({{"type", "image_url"}, {"image_url", {{"url", img}}}});
    body["messages"] = {{{"role", "user"}, {"content", content}}};
  }
  const std::string payload = body.dump();

  httplib::Headers headers;
  if (!key_.empty()) headers.emplace("Authorization", "Bearer " + key_);

  request_slots().acquire();
  struct Release {
    ~Release() { request_slots().release(); }
  } release;

  std::string last_error;
  for (int attempt = 0; attempt < 3; ++attempt) {
    if (attempt > 0)
      std::this_thread::sleep_for(std::chrono::milliseconds(500 << (attempt - 1)));
    httplib::Result res;
    if (url.https) {
#ifdef CPPHTTPLIB_OPENSSL_SUPPORT
      httplib::SSLClient client(url.host_port);
      client.set_read_timeout(120, 0);
      res = client.Post(url.base_path, headers, payload, "application/json");
#else
      throw Error("https backend requires an OpenSSL build");
#endif
    } else {
      httplib::Client client(url.host_port);
      client.set_read_timeout(120, 0);
      res = client.Post(url.base_path, headers, payload, "application/json");
    }
    if (!res) {
      last_error = "transport error " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "server status " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200)
      throw Error("backend status " + std::to_string(res->status) + ": " + res->body);
    try {
      const nlohmann::json reply = nlohmann::json::parse(res->body);
      return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseFailure(std::string("malformed backend reply: ") + e.what());
    }
  }
  throw Error("backend unreachable after 3 tries: " + last_error);
}

// ---------------------------------------------------------------------------
// Prompts

namespace {

const char* kProposePrompt = R"(You design desk-scale manipulation tasks for a two-finger gripper.
Every scene holds a single articulated object; each object exposes exactly one prismatic or revolute joint.

Available assets:
{assets}

Existing tasks (do not repeat any of them, and do not reuse their assets-used sets for a near-identical goal):
{examples}

Describe ONE new task. Answer with a single Python dictionary using the keys
"task-name" (lower-case words separated by hyphens), "task-description" (one short sentence),
"assets-used" (list of asset class names), and "success-criteria" (list drawn from
"articulated_open", "articulated_closed", "distance_articulated_rigidbody",
"distance_gripper_rigidbody", "distance_gripper_articulated").
No extra commentary inside the dictionary.)";

const char* kDecomposePrompt = R"(You break a long-horizon manipulation task into sub-tasks for a two-finger gripper.
Rules:
1. Use at most 5 sub-tasks; 3-4 are usually enough.
2. Each sub-task is one simple motion.
3. Each sub-task (except "grasp"/"ungrasp") is a Python dictionary with keys "task-name",
   "task-description", "assets-used", and "success-criteria" (same vocabulary as task proposal).
4. Finger open/close steps are their own sub-tasks whose dictionaries hold exactly one key,
   "task-name", valued "grasp" or "ungrasp".

Decompose this task, emitting the sub-task dictionaries in execution order:
{task})";

const char* kConstraintsPrompt = R"(You write solver configs that place a gripper for a manipulation task.
A config defines an actuation pose through keypoint constraints.

Task:
{task}

Keypoints available:
{keypoints}

Constraint types:
- point2point_constraint: keypoint_name (tool) touches target_keypoint_name (object).
- frame_axis_parallel / frame_axis_orthogonal: the tool axis from axis_from_keypoint_name to
  axis_to_keypoint_name is compared against target_axis ([1,0,0], [0,1,0] or [0,0,1]) expressed in
  target_axis_frame (world or object); target_inner_product sets the desired dot product
  (1 parallel, -1 anti-parallel, 0 orthogonal).
- keypoint_axis_parallel / keypoint_axis_orthogonal: the object axis comes from
  target_axis_from_keypoint_name to target_axis_to_keypoint_name instead.
Every constraint carries a tolerance. Define exactly one point2point_constraint for contact plus
axis constraints to fix the orientation.
{feedback}

Emit YAML only, with fields task_name, category_name, tool_keypoint_name_list,
object_keypoint_name_list, constraint_list.)";

const char* kMotionsPrompt = R"(You extend a solver config with approach and completion motions.
Pre-actuation motions walk the gripper to the actuation pose; post-actuation motions finish the task.
Each motion is [mode, value] with mode translate_x / translate_y / translate_z (meters, manipulator
base frame) or rotate (radians about the object joint axis); named motions such as "move-forward"
are also accepted.

Task:
{task}

Keypoints available:
{keypoints}

Accepted constraint block:
{constraints}
{feedback}

Emit YAML only, with fields task_name, pre_actuation_motions, post_actuation_motions.)";

const char* kComposePrompt = R"(You compose a new long-horizon task from an existing task library.
Emit one Python dictionary for the new task (keys "task-name", "task-description", "assets-used",
"success-criteria"), then one dictionary per step in execution order. Steps reference library tasks
by their exact "task-name", or are the sentinels "grasp"/"ungrasp" (dictionaries whose only key is
"task-name"). Use at most 5 steps.

Library tasks:
{library})";

}  // namespace

PromptSet PromptSet::defaults() {
  PromptSet p;
  p.set_template(Stage::propose, kProposePrompt);
  p.set_template(Stage::decompose, kDecomposePrompt);
  p.set_template(Stage::solver_constraints, kConstraintsPrompt);
  p.set_template(Stage::solver_motions, kMotionsPrompt);
  p.set_template(Stage::compose, kComposePrompt);
  return p;
}

const std::string& PromptSet::prompt_template(Stage stage) const {
  auto it = templates_.find(static_cast<int>(stage));
  if (it == templates_.end()) throw Error("no template for stage");
  return it->second;
}

void PromptSet::set_template(Stage stage, std::string text) {
  templates_[static_cast<int>(stage)] = std::move(text);
}

std::string PromptSet::render(Stage stage, const std::map<std::string, std::string>& slots) const {
  std::string out = prompt_template(stage);
  for (const auto& [key, value] : slots) {
    const std::string marker = "{" + key + "}";
    std::size_t pos = 0;
    while ((pos = out.find(marker, pos)) != std::string::npos) {
      out.replace(pos, marker.size(), value);
      pos += value.size();
    }
  }
  static const std::regex unfilled("\\{[a-z_]+\\}");
  std::smatch m;
  if (std::regex_search(out, m, unfilled))
    throw Error("prompt template slot left unfilled: " + m.str());
  return out;
}

// ---------------------------------------------------------------------------
// Task library / rates

void TaskLibrary::add(config::TaskSpec spec, config::SolverConfig solver) {
  if (entries_.count(spec.task_name)) throw DuplicateTaskError(spec.task_name);
  entries_[spec.task_name] = {std::move(spec), std::move(solver)};
}

bool TaskLibrary::contains(const std::string& task_name) const {
  return entries_.count(task_name) > 0;
}

const std::pair<config::TaskSpec, config::SolverConfig>& TaskLibrary::get(
    const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw UnknownLibraryTaskError(name);
  return it->second;
}

RateStats::RateStats(int attempts_, int executed_, int solved_)
    : attempts(attempts_), executed(executed_), solved(solved_) {
  if (solved > executed || executed > attempts || solved < 0)
    throw InvariantViolation("RateStats", "requires solved <= executed <= attempts");
}

RateStats compute_rates(const std::vector<AttemptRecord>& records) {
  int executed = 0;
  int solved = 0;
  for (const AttemptRecord& r : records) {
    executed += r.executed ? 1 : 0;
    solved += r.solved ? 1 : 0;
  }
  return RateStats(static_cast<int>(records.size()), executed, solved);
}

std::vector<AttemptRecord> parse_records_yaml(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ParseError(std::string("records: ") + e.what());
  }
  const YAML::Node list = root.IsSequence() ? root : root["records"];
  if (!list || !list.IsSequence()) throw ParseError("records file must hold a list");
  std::vector<AttemptRecord> out;
  int index = 1;
  for (const YAML::Node& n : list) {
    AttemptRecord r;
    r.attempt = n["attempt"] ? n["attempt"].as<int>() : index;
    r.executed = n["executed"] ? n["executed"].as<bool>() : false;
    r.solved = n["solved"] ? n["solved"].as<bool>() : false;
    r.failure = n["failure"] ? n["failure"].as<std::string>() : "";
    if (r.solved && !r.executed)
      throw InvariantViolation("records", "solved attempt marked unexecuted");
    out.push_back(std::move(r));
    ++index;
  }
  return out;
}

std::string serialize_records_yaml(const std::vector<AttemptRecord>& records) {
  std::ostringstream os;
  os << "records:\n";
  for (const AttemptRecord& r : records) {
    os << "- attempt: " << r.attempt << "\n";
    os << "  executed: " << (r.executed ? "true" : "false") << "\n";
    os << "  solved: " << (r.solved ? "true" : "false") << "\n";
    if (!r.failure.empty()) os << "  failure: \"" << r.failure << "\"\n";
  }
  return os.str();
}

Stage1InvalidError::Stage1InvalidError(const std::vector<config::Violation>& violations)
    : Error([&violations] {
        std::ostringstream os;
        os << "stage 1 constraints invalid:";
        for (const auto& v : violations) os << " [" << to_string(v.code) << "] " << v.message;
        return os.str();
      }()),
      violations_(violations) {}

ExhaustedError::ExhaustedError(std::vector<AttemptRecord> records)
    : Error("rejection sampling exhausted after " + std::to_string(records.size()) + " attempts"),
      records_(std::move(records)) {}

// ---------------------------------------------------------------------------
// Pipeline operations

namespace {

std::string describe_assets(const scene::AssetLibrary& assets) {
  std::ostringstream os;
  for (const auto& [name, cls] : assets.classes())
    os << "- " << name << ": " << cls.prototype.description << "\n";
  for (const auto& [name, body] : assets.rigid_bodies()) os << "- " << name << " (rigid body)\n";
  return os.str();
}

std::string describe_examples(const TaskLibrary& lib) {
  std::ostringstream os;
  for (const auto& [name, entry] : lib.entries())
    os << config::serialize_task_spec(entry.first) << "\n";
  return os.str();
}

std::string describe_keypoints(const scene::SceneState& scn) {
  std::ostringstream os;
  os << "- tool_head: middle point between the two finger tips\n";
  os << "- tool_tail: middle point between the two finger bases\n";
  os << "- tool_side: tip of the right finger\n";
  for (const auto& [name, placed] : scn.objects)
    for (const auto& [kp, entry] : placed.object->keypoints)
      os << "- " << kp << " (on " << name << ")\n";
  for (const auto& [name, placed] : scn.rigid_bodies)
    for (const auto& [kp, entry] : placed.object->keypoints)
      os << "- " << kp << " (on " << name << ")\n";
  return os.str();
}

}  // namespace

config::TaskSpec propose_task(const TaskLibrary& lib, const scene::AssetLibrary& assets,
                              Backend& backend, const PromptSet& prompts) {
  CompletionRequest request;
  request.stage = Stage::propose;
  request.prompt = prompts.render(Stage::propose, {{"assets", describe_assets(assets)},
                                                   {"examples", describe_examples(lib)}});
  const std::string response = backend.complete(request);
  config::TaskSpec spec;
  try {
    spec = config::parse_task_spec(response);
  } catch (const config::SpecParseError& e) {
    throw ParseFailure(e.what());
  }
  if (lib.contains(spec.task_name)) throw DuplicateTaskError(spec.task_name);
  return spec;
}

config::SubTaskPlan decompose_task(const config::TaskSpec& spec, Backend& backend,
                                   const PromptSet& prompts) {
  CompletionRequest request;
  request.stage = Stage::decompose;
  request.prompt = prompts.render(Stage::decompose, {{"task", config::serialize_task_spec(spec)}});
  const std::string response = backend.complete(request);
  try {
    return config::parse_sub_task_plan(spec, response);
  } catch (const config::TooManySubtasksError&) {
    throw;
  } catch (const config::SentinelFormatError&) {
    throw;
  } catch (const config::SpecParseError& e) {
    throw ParseFailure(e.what());
  }
}

config::SolverConfig generate_solver(const config::TaskSpec& spec, const scene::SceneState& scn,
                                     Backend& backend, const PromptSet& prompts, int attempt,
                                     const std::string& feedback) {
  const std::string task_block = config::serialize_task_spec(spec);
  const std::string keypoints = describe_keypoints(scn);
  const std::string feedback_block =
      feedback.empty() ? "" : "\nPrior attempt feedback:\n" + feedback + "\n";

  CompletionRequest stage1;
  stage1.stage = Stage::solver_constraints;
  stage1.attempt = attempt;
  stage1.prompt = prompts.render(Stage::solver_constraints, {{"task", task_block},
                                                             {"keypoints", keypoints},
                                                             {"feedback", feedback_block}});
  const std::string constraints_text = config::strip_code_fences(backend.complete(stage1));

  config::SolverConfig cfg;
  try {
    cfg = config::parse_solver_config(constraints_text);
  } catch (const config::ConfigParseError& e) {
    throw ParseFailure(std::string("stage 1: ") + e.what());
  }
  const scene::PlacedObject* obj = scn.first_articulated();
  if (obj) {
    auto violations = config::validate(cfg, *obj->object, scn.end_effector);
    if (!violations.empty()) throw Stage1InvalidError(violations);
  }

  CompletionRequest stage2;
  stage2.stage = Stage::solver_motions;
  stage2.attempt = attempt;
  stage2.prompt = prompts.render(Stage::solver_motions, {{"task", task_block},
                                                         {"keypoints", keypoints},
                                                         {"constraints", constraints_text},
                                                         {"feedback", feedback_block}});
  const std::string motions_text = config::strip_code_fences(backend.complete(stage2));
  try {
    auto [pre, post] = config::parse_motion_lists(motions_text);
    cfg.pre_actuation_motions = std::move(pre);
    cfg.post_actuation_motions = std::move(post);
  } catch (const config::ConfigParseError& e) {
    throw Stage2InvalidError(std::string("stage 2: ") + e.what());
  }
  if (obj) {
    auto violations = config::validate(cfg, *obj->object, scn.end_effector);
    if (!violations.empty()) {
      std::ostringstream os;
      os << "stage 2 motions invalid:";
      for (const auto& v : violations) os << " [" << to_string(v.code) << "] " << v.message;
      throw Stage2InvalidError(os.str());
    }
  }
  return cfg;
}

RejectSampleResult reject_sample(const config::TaskSpec& spec, const scene::SceneState& scn,
                                 Backend& backend, const PromptSet& prompts,
                                 const PipelineConfig& cfg) {
  if (cfg.max_reject_iterations < 1)
    throw InvariantViolation("PipelineConfig", "max_reject_iterations must be >= 1");

  std::vector<AttemptRecord> records;
  std::string feedback;
  const data::RandomizationSpec randomization;

  for (int attempt = 1; attempt <= cfg.max_reject_iterations; ++attempt) {
    AttemptRecord record;
    record.attempt = attempt;

    config::SolverConfig solver;
    try {
      solver = generate_solver(spec, scn, backend, prompts, attempt, feedback);
    } catch (const Error& e) {
      record.executed = false;
      record.failure = e.what();
      feedback = e.what();
      records.push_back(record);
      continue;
    }
    record.executed = true;

    // Verification: randomized rollouts accepted at a 0.5 success rate.
    int ok = 0;
    std::ostringstream failures;
    for (int i = 0; i < cfg.verify_episodes; ++i) {
      const std::uint64_t ep_seed = rng::derive(cfg.seed, attempt, i);
      const scene::SceneState verify_scene = data::perturb_scene(scn, randomization, ep_seed);
      try {
        kpam::SolveOptions opts;
        opts.seed = ep_seed;
        const kpam::ActuationSolution sol = kpam::solve_actuation_pose(solver, verify_scene, opts);
        const traj::MotionPlan plan = traj::expand_motions(solver, sol.pose, verify_scene);
        const traj::ExecutionTrace trace =
            traj::execute(plan, verify_scene, traj::kDefaultStepsPerSegment, spec.success_criteria);
        if (trace.all_passed()) {
          ++ok;
        } else {
          for (const traj::CriterionResult& c : trace.criteria_results)
            if (!c.passed)
              failures << " episode " << i << ": " << scene::to_string(c.criterion)
                       << " metric " << c.metric << ";";
        }
      } catch (const Error& e) {
        failures << " episode " << i << ": " << e.what() << ";";
      }
    }
    const double rate = static_cast<double>(ok) / cfg.verify_episodes;
    if (rate >= 0.5) {
      record.solved = true;
      records.push_back(record);
      return {std::move(solver), attempt, std::move(records)};
    }
    record.failure = "verified success " + std::to_string(ok) + "/" +
                     std::to_string(cfg.verify_episodes) + ":" + failures.str();
    feedback = record.failure;
    records.push_back(record);
  }
  throw ExhaustedError(std::move(records));
}

config::SubTaskPlan compose_bottom_up(const TaskLibrary& lib, const scene::AssetLibrary& assets,
                                      Backend& backend, const PromptSet& prompts,
                                      std::uint64_t seed) {
  if (lib.entries().empty()) throw Error("task library is empty");

  std::ostringstream library_block;
  for (const auto& [name, entry] : lib.entries())
    library_block << "- " << name << ": " << entry.first.task_description << "\n";

  CompletionRequest request;
  request.stage = Stage::compose;
  request.prompt = prompts.render(Stage::compose, {{"library", library_block.str()}});
  const std::string response = backend.complete(request);

  // First block is the composed parent; remaining blocks are steps, either
  // sentinels or library references (name-only or full dictionaries).
  const std::vector<std::string> blocks = config::extract_dict_blocks(response);
  if (blocks.size() < 2) throw ParseFailure("composition needs a parent block plus steps");
  config::TaskSpec parent;
  try {
    parent = config::parse_task_spec(blocks.front());
  } catch (const config::SpecParseError& e) {
    throw ParseFailure(e.what());
  }

  config::SubTaskPlan plan;
  plan.parent = parent;
  for (std::size_t i = 1; i < blocks.size(); ++i) {
    std::optional<std::string> name;
    try {
      name = config::parse_name_only_block(blocks[i]);
    } catch (const config::SpecParseError& e) {
      throw ParseFailure(e.what());
    }
    if (name) {
      if (*name == "grasp" || *name == "ungrasp") {
        plan.steps.emplace_back(config::Sentinel{*name == "grasp" ? config::SentinelKind::grasp
                                                                  : config::SentinelKind::ungrasp});
        continue;
      }
      if (!lib.contains(*name)) throw UnknownLibraryTaskError(*name);
      plan.steps.emplace_back(lib.get(*name).first);
      continue;
    }
    config::TaskSpec spec;
    try {
      spec = config::parse_task_spec(blocks[i]);
    } catch (const config::SpecParseError& e) {
      throw ParseFailure(e.what());
    }
    if (!lib.contains(spec.task_name)) throw UnknownLibraryTaskError(spec.task_name);
    plan.steps.emplace_back(lib.get(spec.task_name).first);
  }
  if (plan.steps.size() < 2) throw ParseFailure("composition needs at least 2 steps");
  if (plan.steps.size() > 5)
    throw config::TooManySubtasksError("composition has too many steps", 0);

  // Verification: chain the library solvers on a nominal scene built from
  // the union of step assets; the first step decides the starting joint
  // fraction.
  config::TaskSpec scene_spec = parent;
  scene_spec.assets_used.clear();
  scene_spec.success_criteria.clear();
  for (const config::SubTaskPlan::Step& step : plan.steps) {
    if (!std::holds_alternative<config::TaskSpec>(step)) continue;
    const config::TaskSpec& s = std::get<config::TaskSpec>(step);
    if (scene_spec.success_criteria.empty()) scene_spec.success_criteria = s.success_criteria;
    for (const std::string& a : s.assets_used)
      if (std::find(scene_spec.assets_used.begin(), scene_spec.assets_used.end(), a) ==
          scene_spec.assets_used.end())
        scene_spec.assets_used.push_back(a);
  }
  const scene::SceneState scn = data::build_nominal_scene(scene_spec, assets);

  std::vector<traj::ChainStep> chain;
  std::vector<std::size_t> criteria_per_step;
  for (const config::SubTaskPlan::Step& step : plan.steps) {
    if (std::holds_alternative<config::TaskSpec>(step)) {
      const config::TaskSpec& s = std::get<config::TaskSpec>(step);
      traj::SubTaskItem item;
      item.spec = s;
      item.solver = lib.get(s.task_name).second;
      item.solve_options.seed = rng::derive(seed, chain.size());
      criteria_per_step.push_back(s.success_criteria.size());
      chain.emplace_back(std::move(item));
    } else if (std::get<config::Sentinel>(step).kind == config::SentinelKind::grasp) {
      traj::GraspItem item;
      if (!scn.rigid_bodies.empty())
        item.target = scn.rigid_bodies.begin()->first;
      else
        item.target = scene::KeypointRef{"", "articulated_object_head"};
      criteria_per_step.push_back(1);
      chain.emplace_back(std::move(item));
    } else {
      criteria_per_step.push_back(1);
      chain.emplace_back(traj::UngraspItem{});
    }
  }

  const traj::ExecutionTrace trace = traj::chain_subtasks(chain, scn);
  std::size_t cursor = 0;
  for (std::size_t step_ix = 0; step_ix < criteria_per_step.size(); ++step_ix) {
    for (std::size_t k = 0; k < criteria_per_step[step_ix]; ++k, ++cursor) {
      const traj::CriterionResult& c = trace.criteria_results.at(cursor);
      if (!c.passed)
        throw traj::ChainBreakError(step_ix, std::string("criterion ") +
                                                 scene::to_string(c.criterion) + " failed (" +
                                                 std::to_string(c.metric) + ")");
    }
  }
  return plan;
}

}  // namespace kinegen::agent
