#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "amorph/env.hpp"
#include "amorph/graph.hpp"
#include "amorph/policies.hpp"
#include "amorph/td3.hpp"

namespace amorph {

struct TrainConfig {
  std::vector<EnvSpec> tasks{make_env(Archetype::chain_walker, 2)};
  PolicyConfig policy;
  TopologyScheme topology = TopologyScheme::morphology;
  Td3Config td3;
  std::size_t batch_size = 64;            // per task
  std::size_t total_steps = 200000;       // environment steps per task
  std::size_t warmup_steps = 1000;        // per task, uniform random actions, no updates
  std::size_t buffer_capacity = 100000;   // per task
  std::size_t eval_every = 10000;
  std::size_t eval_rollouts = 10;         // periodic evaluations during training
  std::size_t final_eval_rollouts = 100;
  std::vector<std::uint64_t> seeds{0, 1, 2};
};

/// Parses "key = value" lines ('#' starts a comment). Unknown keys and bad
/// values raise ParseError with the line number. Unlisted keys keep defaults.
TrainConfig parse_config(const std::string& text, TrainConfig base = {});
TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {});

/// Applies one setting; throws ConfigError on an unknown key or bad value.
void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value);

/// Checks values and the architecture / topology combination. Throws
/// ConfigError for bad values or (smp, full), CapacityError when an SMP
/// model would meet a node with more than max_children children.
void validate_config(const TrainConfig& cfg);

/// True when every pair of tasks shares state and action sizes, i.e. a
/// fixed-size network could serve all of them.
bool all_compatible(const std::vector<EnvSpec>& tasks);

/// Topology graph the policy sees for a task.
MorphGraph task_graph(const EnvSpec& task, TopologyScheme scheme);

struct EvalResult {
  std::vector<std::string> tasks;
  std::vector<ReturnStats> per_task;
  double mtrl_return = 0.0;
};

/// Unweighted mean of per-task average returns.
double mtrl_return(const std::vector<ReturnStats>& per_task);

/// Deterministic rollouts of `actor` (no exploration noise). Rollouts of a
/// task run in lockstep as one batch of graphs. When `dump_dir` is set, each
/// rollout is written to "<task>_rollout<k>.csv" there.
EvalResult evaluate_policy(const GraphNet<float>& actor, TopologyScheme scheme, const std::vector<EnvSpec>& tasks,
                           std::size_t rollouts, std::uint64_t seed,
                           const std::optional<std::filesystem::path>& dump_dir = std::nullopt);

struct LoadedPolicy {
  std::unique_ptr<GraphNet<float>> actor;
  PolicyConfig policy;
  TopologyScheme topology = TopologyScheme::morphology;
  std::map<std::string, std::string> meta;
};

void save_policy(const std::filesystem::path& path, const GraphNet<float>& actor, TopologyScheme scheme,
                 std::map<std::string, std::string> meta);
LoadedPolicy load_policy(const std::filesystem::path& path);

/// Loads a checkpoint and evaluates it. Tasks absent from training are fine
/// (zero-shot). Throws CapacityError / ConfigError when the checkpoint's
/// architecture cannot run a task's graph.
EvalResult evaluate(const std::filesystem::path& checkpoint, const std::vector<EnvSpec>& tasks,
                    std::size_t rollouts = 100, std::uint64_t seed = 0,
                    const std::optional<std::filesystem::path>& dump_dir = std::nullopt);

struct EvalPoint {
  std::size_t step = 0;
  EvalResult result;
};

struct TrainResult {
  std::filesystem::path run_dir;
  std::filesystem::path metrics;          // metrics.csv
  std::filesystem::path final_checkpoint;  // final.ckpt
  std::vector<EvalPoint> curve;           // periodic evaluations, step 0 first
  EvalResult final_eval;                  // final_eval_rollouts per task
  double seconds = 0.0;
};

/// Round-robin multitask TD3 for one seed, writing into `run_dir`:
/// metrics.csv, checkpoints/step_<N>.ckpt at every evaluation, final.ckpt.
/// Progress lines go to `log` when given.
TrainResult mtrl_train(const TrainConfig& cfg, std::uint64_t seed, const std::filesystem::path& run_dir,
                       std::ostream* log = nullptr);

/// Trains every seed of `cfg.seeds` into out_dir/seed_<s>, up to `jobs` at a
/// time. Results come back in seed order.
std::vector<TrainResult> train_seeds(const TrainConfig& cfg, const std::filesystem::path& out_dir,
                                     std::size_t jobs = 1, std::ostream* log = nullptr);

/// Seed of one random stream of a training run: 1 agent init, 2 environment
/// resets and exploration, 3 periodic evaluation, 4 final evaluation.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace amorph
