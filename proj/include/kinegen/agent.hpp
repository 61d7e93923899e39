#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kinegen/config.hpp"
#include "kinegen/datagen.hpp"
#include "kinegen/scene.hpp"

namespace kinegen::agent {

// Pipeline stages, also the fixture file key (stage<N>_attempt<M>.txt).
enum class Stage : int {
  propose = 1,
  decompose = 2,
  solver_constraints = 3,
  solver_motions = 4,
  compose = 5,
};

struct CompletionRequest {
  std::string prompt;
  std::vector<std::string> images;  // opaque, already-encoded payloads
  Stage stage = Stage::propose;
  int attempt = 1;
};

class Backend {
public:
  virtual ~Backend() = default;
  virtual std::string complete(const CompletionRequest& request) = 0;
  virtual std::string identity() const = 0;
};

// Scripted backend: responses live in <dir>/stage<N>_attempt<M>.txt.
class FixtureBackend : public Backend {
public:
  explicit FixtureBackend(std::string dir);
  std::string complete(const CompletionRequest& request) override;
  std::string identity() const override { return "fixture:" + dir_; }

private:
  std::string dir_;
};

// Chat-completion HTTPS backend configured from KINEGEN_LLM_URL,
// KINEGEN_LLM_MODEL and KINEGEN_LLM_KEY; 3 tries with exponential backoff,
// concurrent requests bounded by KINEGEN_LLM_CONCURRENCY (default 4).
class HttpBackend : public Backend {
public:
  HttpBackend();  // throws Error when the environment is not configured
  HttpBackend(std::string url, std::string model, std::string key);
  std::string complete(const CompletionRequest& request) override;
  std::string identity() const override { return model_ + "@" + url_; }

private:
  std::string url_;
  std::string model_;
  std::string key_;
};

class PromptSet {
public:
  // Functional default templates for all five stages.
  static PromptSet defaults();

  const std::string& prompt_template(Stage stage) const;
  void set_template(Stage stage, std::string text);

  // Replaces {slot} markers; throws Error if any marker is left unfilled.
  std::string render(Stage stage, const std::map<std::string, std::string>& slots) const;

private:
  std::map<int, std::string> templates_;
};

struct PipelineConfig {
  int max_reject_iterations = 3;
  enum class Mode { top_down, bottom_up } mode = Mode::top_down;
  int verify_episodes = 10;
  std::uint64_t seed = 0;
};

class TaskLibrary {
public:
  void add(config::TaskSpec spec, config::SolverConfig solver);
  bool contains(const std::string& task_name) const;
  const std::pair<config::TaskSpec, config::SolverConfig>& get(const std::string& name) const;
  const std::map<std::string, std::pair<config::TaskSpec, config::SolverConfig>>& entries() const {
    return entries_;
  }

private:
  std::map<std::string, std::pair<config::TaskSpec, config::SolverConfig>> entries_;
};

struct RateStats {
  int attempts = 0;
  int executed = 0;
  int solved = 0;

  RateStats() = default;
  RateStats(int attempts, int executed, int solved);  // enforces solved <= executed <= attempts
  double execution_rate() const { return attempts ? static_cast<double>(executed) / attempts : 0.0; }
  double solution_rate() const { return attempts ? static_cast<double>(solved) / attempts : 0.0; }
};

struct AttemptRecord {
  int attempt = 1;
  bool executed = false;  // parse + validation + solve completed
  bool solved = false;    // verification episodes passed
  std::string failure;    // feedback fed into the next prompt rendering
};

RateStats compute_rates(const std::vector<AttemptRecord>& records);
std::vector<AttemptRecord> parse_records_yaml(const std::string& text);
std::string serialize_records_yaml(const std::vector<AttemptRecord>& records);

class ParseFailure : public Error {
public:
  using Error::Error;
};
class DuplicateTaskError : public Error {
public:
  explicit DuplicateTaskError(const std::string& name) : Error("duplicate task: " + name) {}
};
class Stage1InvalidError : public Error {
public:
  explicit Stage1InvalidError(const std::vector<config::Violation>& violations);
  const std::vector<config::Violation>& violations() const { return violations_; }

private:
  std::vector<config::Violation> violations_;
};
class Stage2InvalidError : public Error {
public:
  using Error::Error;
};
class ExhaustedError : public Error {
public:
  explicit ExhaustedError(std::vector<AttemptRecord> records);
  const std::vector<AttemptRecord>& records() const { return records_; }

private:
  std::vector<AttemptRecord> records_;
};
class UnknownLibraryTaskError : public Error {
public:
  explicit UnknownLibraryTaskError(const std::string& name)
      : Error("composition references unknown library task: " + name) {}
};

// Renders the proposal prompt with asset descriptions and in-context
// examples from the library, then parses the response and rejects
// duplicates.
config::TaskSpec propose_task(const TaskLibrary& lib, const scene::AssetLibrary& assets,
                              Backend& backend, const PromptSet& prompts);

config::SubTaskPlan decompose_task(const config::TaskSpec& spec, Backend& backend,
                                   const PromptSet& prompts);

// Two-stage generation: constraints first, then motions rendered with the
// accepted stage-1 output. `attempt` keys the fixture backend, `feedback`
// carries prior-attempt diagnostics.
config::SolverConfig generate_solver(const config::TaskSpec& spec, const scene::SceneState& scn,
                                     Backend& backend, const PromptSet& prompts, int attempt = 1,
                                     const std::string& feedback = "");

struct RejectSampleResult {
  config::SolverConfig config;
  int attempts = 0;
  std::vector<AttemptRecord> records;
};

// Generate -> validate -> solve -> verify over randomized episodes; accepts
// when mean verified success >= 0.5; failure summaries feed the next prompt.
// Throws ExhaustedError after max_reject_iterations.
RejectSampleResult reject_sample(const config::TaskSpec& spec, const scene::SceneState& scn,
                                 Backend& backend, const PromptSet& prompts,
                                 const PipelineConfig& cfg);

// Bottom-up composition: the response lists a parent task block followed by
// library task names and grasp/ungrasp sentinels; the chain is verified on a
// nominal scene built from the referenced assets.
config::SubTaskPlan compose_bottom_up(const TaskLibrary& lib, const scene::AssetLibrary& assets,
                                      Backend& backend, const PromptSet& prompts,
                                      std::uint64_t seed = 0);

}  // namespace kinegen::agent
