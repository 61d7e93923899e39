// kinegen command line: asset validation, task proposal/decomposition,
// solver generation, constraint solving, demonstration collection, replay,
// and rate statistics. Exit codes: 0 success, 1 domain failure, 2 usage.

#include <CLI11.hpp>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "kinegen/agent.hpp"
#include "kinegen/config.hpp"
#include "kinegen/datagen.hpp"
#include "kinegen/kpam.hpp"
#include "kinegen/rng.hpp"
#include "kinegen/scene.hpp"
#include "kinegen/trajectory.hpp"

namespace fs = std::filesystem;
using namespace kinegen;

namespace {

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// The assets root is the manifest's parent directory; bundled tasks and
// configs live under tasks/ and configs/ next to it.
struct AssetPaths {
  std::string manifest = "assets/manifest.yaml";

  fs::path root() const { return fs::path(manifest).parent_path(); }
  fs::path task_file(const std::string& task_name) const {
    return root() / "tasks" / (task_name + ".txt");
  }
  fs::path config_file(const std::string& task_name) const {
    std::string base = task_name;
    for (char& c : base)
      if (c == '-') c = '_';
    return root() / "configs" / (base + ".yaml");
  }
};

config::TaskSpec load_task(const AssetPaths& paths, const std::string& task_arg) {
  const std::string path = fs::exists(task_arg) ? task_arg : paths.task_file(task_arg).string();
  return config::parse_task_spec(read_file(path));
}

config::SolverConfig load_config_for(const AssetPaths& paths, const std::string& task_name,
                                     const std::string& config_arg) {
  const std::string path =
      config_arg.empty() ? paths.config_file(task_name).string() : config_arg;
  return config::parse_solver_config(read_file(path));
}

agent::TaskLibrary load_task_library(const AssetPaths& paths) {
  agent::TaskLibrary lib;
  const fs::path dir = paths.root() / "tasks";
  if (!fs::is_directory(dir)) return lib;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".txt") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const fs::path& f : files) {
    config::TaskSpec spec = config::parse_task_spec(read_file(f.string()));
    config::SolverConfig solver;
    const fs::path cfg = paths.config_file(spec.task_name);
    if (fs::exists(cfg)) solver = config::parse_solver_config(read_file(cfg.string()));
    lib.add(std::move(spec), std::move(solver));
  }
  return lib;
}

std::unique_ptr<agent::Backend> make_backend(const std::string& spec) {
  if (spec.rfind("fixture:", 0) == 0)
    return std::make_unique<agent::FixtureBackend>(spec.substr(8));
  if (spec == "http") return std::make_unique<agent::HttpBackend>();
  throw Error("--backend must be fixture:<dir> or http");
}

void print_solution(std::ostream& os, const kpam::ActuationSolution& sol) {
  const auto a = sol.pose.to_array();
  os << "pose: [";
  for (int i = 0; i < 7; ++i) os << (i ? ", " : "") << fmt(a[i]);
  os << "]\n";
  os << "satisfied: " << (sol.satisfied ? "true" : "false") << "\n";
  os << "cost: " << fmt(sol.cost) << "\n";
  os << "restarts_used: " << sol.restarts_used << "\n";
  os << "wall_time: " << fmt(sol.wall_time) << "\n";
  os << "residuals:\n";
  for (const kpam::ConstraintResidual& r : sol.residuals.constraints) {
    os << "- {type: " << config::to_string(r.type) << ", magnitude: " << fmt(r.magnitude)
       << ", tolerance: " << fmt(r.tolerance)
       << ", satisfied: " << (r.satisfied() ? "true" : "false") << "}\n";
  }
}

void write_trace_csv(std::ostream& os, const traj::ExecutionTrace& trace) {
  os << "step,tx,ty,tz,qw,qx,qy,qz,width";
  std::vector<std::string> object_names;
  if (!trace.steps.empty())
    for (const auto& [name, placed] : trace.steps.front().state.objects) {
      os << "," << name;
      object_names.push_back(name);
    }
  os << "\n";
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const scene::SceneState& s = trace.steps[i].state;
    const auto a = s.end_effector.pose.to_array();
    os << i;
    for (int k = 0; k < 7; ++k) os << "," << fmt(a[k]);
    os << "," << fmt(s.end_effector.width);
    for (const std::string& name : object_names) os << "," << fmt(s.objects.at(name).joint_value);
    os << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kinegen: keypoint-constraint task and demonstration generation"};
  app.require_subcommand(1);

  AssetPaths paths;
  app.add_option("--assets", paths.manifest, "asset manifest path")->capture_default_str();

  // assets validate
  auto* assets_cmd = app.add_subcommand("assets", "asset library commands");
  assets_cmd->require_subcommand(1);
  auto* assets_validate = assets_cmd->add_subcommand("validate", "validate a manifest");
  std::string validate_path;
  assets_validate->add_option("manifest", validate_path, "manifest to validate")->required();

  // task propose / task decompose
  auto* task_cmd = app.add_subcommand("task", "task proposal and decomposition");
  task_cmd->require_subcommand(1);
  auto* propose = task_cmd->add_subcommand("propose", "propose a new task via the agent backend");
  std::string backend_spec = "http";
  propose->add_option("--backend", backend_spec, "fixture:<dir> or http");
  auto* decompose = task_cmd->add_subcommand("decompose", "decompose a long-horizon task");
  std::string decompose_spec_path;
  decompose->add_option("spec", decompose_spec_path, "task spec file")->required();
  decompose->add_option("--backend", backend_spec, "fixture:<dir> or http");

  // solver gen
  auto* solver_cmd = app.add_subcommand("solver", "solver config generation");
  solver_cmd->require_subcommand(1);
  auto* solver_gen = solver_cmd->add_subcommand("gen", "generate a solver config via the backend");
  std::string gen_spec_path, gen_scene_path, gen_records_out;
  int gen_max_iterations = 3;
  int gen_verify_episodes = 10;
  std::uint64_t seed = 0;
  solver_gen->add_option("spec", gen_spec_path, "task spec file")->required();
  solver_gen->add_option("--backend", backend_spec, "fixture:<dir> or http");
  solver_gen->add_option("--scene", gen_scene_path, "scene file (default: nominal scene)");
  solver_gen->add_option("--max-iterations", gen_max_iterations, "rejection sampling budget");
  solver_gen->add_option("--verify-episodes", gen_verify_episodes, "episodes per verification");
  solver_gen->add_option("--records-out", gen_records_out, "write attempt records YAML here");
  solver_gen->add_option("--seed", seed, "master seed");

  // solve
  auto* solve_cmd = app.add_subcommand("solve", "solve an actuation pose");
  std::string solve_config_path, solve_scene_path;
  int restarts = 16;
  solve_cmd->add_option("config", solve_config_path, "solver config YAML")->required();
  solve_cmd->add_option("scene", solve_scene_path, "scene YAML")->required();
  solve_cmd->add_option("--restarts", restarts, "solver restarts");
  solve_cmd->add_option("--seed", seed, "solver seed");

  // collect
  auto* collect_cmd = app.add_subcommand("collect", "collect demonstration episodes");
  std::string collect_task, collect_config_path, collect_out;
  int runs = 5, episodes = 50, jobs = 1, obs_every = 10;
  bool hard = false;
  std::string format = "yaml";
  collect_cmd->add_option("task", collect_task, "task name or spec file")->required();
  collect_cmd->add_option("--config", collect_config_path, "solver config (default: bundled)");
  collect_cmd->add_option("--runs", runs, "independent runs")->capture_default_str();
  collect_cmd->add_option("--episodes", episodes, "episodes per run")->capture_default_str();
  collect_cmd->add_option("--seed", seed, "master seed");
  collect_cmd->add_option("--out", collect_out, "dataset output directory");
  collect_cmd->add_option("--jobs", jobs, "parallel episode workers (0 = all cores)");
  collect_cmd->add_option("--obs-every", obs_every, "record an observation every N steps");
  collect_cmd->add_flag("--hard", hard, "halve randomization ranges");
  collect_cmd->add_option("--format", format, "report format: yaml or csv");

  // replay
  auto* replay_cmd = app.add_subcommand("replay", "re-execute an episode and emit its trace");
  std::string replay_episode, replay_out;
  bool replay_csv = true;
  replay_cmd->add_option("episode", replay_episode, ".episode file")->required();
  replay_cmd->add_flag("--csv", replay_csv, "emit CSV (default)");
  replay_cmd->add_option("--out", replay_out, "output file (default: stdout)");
  replay_cmd->add_flag("--hard", hard, "episode was collected with --hard");

  // stats
  auto* stats_cmd = app.add_subcommand("stats", "execution/solution rates from attempt records");
  std::string stats_path;
  stats_cmd->add_option("records", stats_path, "records YAML")->required();
  stats_cmd->add_option("--format", format, "yaml or csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (*assets_validate) {
      const scene::AssetLibrary lib = scene::load_asset_library(validate_path);
      std::cout << "ok: " << lib.classes().size() << " asset classes, "
                << lib.rigid_bodies().size() << " rigid bodies\n";
      return 0;
    }

    if (*propose) {
      const scene::AssetLibrary assets = scene::load_asset_library(paths.manifest);
      const agent::TaskLibrary lib = load_task_library(paths);
      auto backend = make_backend(backend_spec);
      const config::TaskSpec spec =
          agent::propose_task(lib, assets, *backend, agent::PromptSet::defaults());
      std::cout << config::serialize_task_spec(spec) << "\n";
      return 0;
    }

    if (*decompose) {
      const config::TaskSpec spec = config::parse_task_spec(read_file(decompose_spec_path));
      auto backend = make_backend(backend_spec);
      const config::SubTaskPlan plan =
          agent::decompose_task(spec, *backend, agent::PromptSet::defaults());
      for (const config::SubTaskPlan::Step& step : plan.steps) {
        if (std::holds_alternative<config::TaskSpec>(step))
          std::cout << config::serialize_task_spec(std::get<config::TaskSpec>(step)) << "\n";
        else
          std::cout << "{\"task-name\": \""
                    << (std::get<config::Sentinel>(step).kind == config::SentinelKind::grasp
                            ? "grasp"
                            : "ungrasp")
                    << "\"}\n";
      }
      return 0;
    }

    if (*solver_gen) {
      const scene::AssetLibrary assets = scene::load_asset_library(paths.manifest);
      const config::TaskSpec spec = config::parse_task_spec(read_file(gen_spec_path));
      const scene::SceneState scn = gen_scene_path.empty()
                                        ? data::build_nominal_scene(spec, assets)
                                        : scene::load_scene(gen_scene_path, assets);
      auto backend = make_backend(backend_spec);
      agent::PipelineConfig pipeline;
      pipeline.max_reject_iterations = gen_max_iterations;
      pipeline.verify_episodes = gen_verify_episodes;
      pipeline.seed = seed;
      agent::RejectSampleResult result;
      try {
        result = agent::reject_sample(spec, scn, *backend, agent::PromptSet::defaults(), pipeline);
      } catch (const agent::ExhaustedError& e) {
        if (!gen_records_out.empty()) {
          std::ofstream out(gen_records_out);
          out << agent::serialize_records_yaml(e.records());
        }
        throw;
      }
      if (!gen_records_out.empty()) {
        std::ofstream out(gen_records_out);
        out << agent::serialize_records_yaml(result.records);
      }
      std::cerr << "accepted after " << result.attempts << " attempt(s)\n";
      std::cout << config::serialize_solver_config(result.config);
      return 0;
    }

    if (*solve_cmd) {
      const scene::AssetLibrary assets = scene::load_asset_library(paths.manifest);
      const config::SolverConfig cfg = config::parse_solver_config(read_file(solve_config_path));
      const scene::SceneState scn = scene::load_scene(solve_scene_path, assets);
      kpam::SolveOptions opts;
      opts.restarts = restarts;
      opts.seed = seed;
      const kpam::ActuationSolution sol = kpam::solve_actuation_pose(cfg, scn, opts);
      print_solution(std::cout, sol);
      return 0;
    }

    if (*collect_cmd) {
      const scene::AssetLibrary assets = scene::load_asset_library(paths.manifest);
      const config::TaskSpec task = load_task(paths, collect_task);
      const config::SolverConfig cfg = load_config_for(paths, task.task_name, collect_config_path);
      data::RandomizationSpec spec;
      spec.hard = hard;
      data::CollectParams params;
      params.runs = runs;
      params.episodes_per_run = episodes;
      params.seed = seed;
      params.jobs = jobs;
      params.obs_every = obs_every;
      const data::CollectResult result = data::collect(task, cfg, assets, spec, params);
      if (!collect_out.empty()) data::write_dataset(result.successes, collect_out);
      if (format == "csv") {
        std::cout << "task,run,rate\n";
        for (std::size_t i = 0; i < result.report.per_run_rates.size(); ++i)
          std::cout << result.report.task_name << "," << i << ","
                    << fmt(result.report.per_run_rates[i]) << "\n";
      } else {
        std::cout << result.report.to_yaml();
      }
      return 0;
    }

    if (*replay_cmd) {
      std::ifstream in(replay_episode, std::ios::binary);
      if (!in) throw IoError("cannot open " + replay_episode);
      std::vector<std::uint8_t> blob((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
      const data::Episode episode = data::decode_episode(blob.data(), blob.size());
      if (episode.infeasible) throw Error("episode recorded as infeasible; nothing to replay");
      const scene::AssetLibrary assets = scene::load_asset_library(paths.manifest);
      const config::TaskSpec task = load_task(paths, episode.task_name);
      const config::SolverConfig cfg = load_config_for(paths, task.task_name, "");
      data::RandomizationSpec spec;
      spec.hard = hard;
      const scene::SceneState scn = data::randomize_scene(task, assets, spec, episode.seed);
      kpam::SolveOptions opts;
      opts.seed = rng::derive(episode.seed, 0xA0);
      const kpam::ActuationSolution sol = kpam::solve_actuation_pose(cfg, scn, opts);
      const traj::MotionPlan plan = traj::expand_motions(cfg, sol.pose, scn);
      const traj::ExecutionTrace trace =
          traj::execute(plan, scn, traj::kDefaultStepsPerSegment, task.success_criteria);
      if (!replay_out.empty()) {
        std::ofstream out(replay_out);
        write_trace_csv(out, trace);
      } else {
        write_trace_csv(std::cout, trace);
      }
      return 0;
    }

    if (*stats_cmd) {
      const auto records = agent::parse_records_yaml(read_file(stats_path));
      const agent::RateStats stats = agent::compute_rates(records);
      if (format == "csv") {
        std::cout << "attempts,executed,solved,execution_rate,solution_rate\n";
        std::cout << stats.attempts << "," << stats.executed << "," << stats.solved << ","
                  << fmt(stats.execution_rate()) << "," << fmt(stats.solution_rate()) << "\n";
      } else {
        std::cout << "attempts: " << stats.attempts << "\n";
        std::cout << "executed: " << stats.executed << "\n";
        std::cout << "solved: " << stats.solved << "\n";
        std::cout << "execution_rate: " << fmt(stats.execution_rate()) << "\n";
        std::cout << "solution_rate: " << fmt(stats.solution_rate()) << "\n";
      }
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
