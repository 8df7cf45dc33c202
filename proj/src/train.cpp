#include "amorph/train.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#include "amorph/checkpoint.hpp"
#include "amorph/errors.hpp"
#include "amorph/replay.hpp"

namespace amorph {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::mutex log_mutex;

void log_line(std::ostream* log, const std::string& line) {
  if (!log) return;
  std::lock_guard<std::mutex> lock(log_mutex);
  *log << line << '\n' << std::flush;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::size_t to_count(const std::string& key, const std::string& value) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || p != value.data() + value.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + value + "'");
  }
  return out;
}

double to_real(const std::string& key, const std::string& value) {
  double out = 0;
  auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || p != value.data() + value.size() || !std::isfinite(out)) {
    throw ConfigError(key + ": expected a number, got '" + value + "'");
  }
  return out;
}

bool to_flag(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "off" || value == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + value + "'");
}

std::string join_tasks(const std::vector<EnvSpec>& tasks) {
  std::string out;
  for (const auto& t : tasks) out += (out.empty() ? "" : ",") + t.name();
  return out;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  std::mt19937_64 rng(seq);
  return rng();
}

void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value) {
  try {
    if (key == "tasks") {
      cfg.tasks = parse_task_list(value);
    } else if (key == "arch") {
      cfg.policy.arch = parse_arch(value);
    } else if (key == "topology") {
      cfg.topology = parse_topology(value);
    } else if (key == "residual") {
      cfg.policy.residual = to_flag(key, value);
    } else if (key == "steps") {
      cfg.total_steps = to_count(key, value);
    } else if (key == "warmup") {
      cfg.warmup_steps = to_count(key, value);
    } else if (key == "batch_size") {
      cfg.batch_size = to_count(key, value);
    } else if (key == "buffer_capacity") {
      cfg.buffer_capacity = to_count(key, value);
    } else if (key == "eval_every") {
      cfg.eval_every = to_count(key, value);
    } else if (key == "eval_rollouts") {
      cfg.eval_rollouts = to_count(key, value);
    } else if (key == "final_eval_rollouts") {
      cfg.final_eval_rollouts = to_count(key, value);
    } else if (key == "seeds") {
      cfg.seeds.clear();
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ',')) cfg.seeds.push_back(to_count(key, trim(item)));
    } else if (key == "learning_rate") {
      cfg.td3.learning_rate = to_real(key, value);
    } else if (key == "grad_clip") {
      cfg.td3.grad_clip = to_real(key, value);
    } else if (key == "gamma") {
      cfg.td3.gamma = to_real(key, value);
    } else if (key == "tau") {
      cfg.td3.tau = to_real(key, value);
    } else if (key == "policy_delay") {
      cfg.td3.policy_delay = to_count(key, value);
    } else if (key == "target_noise") {
      cfg.td3.target_noise = to_real(key, value);
    } else if (key == "noise_clip") {
      cfg.td3.noise_clip = to_real(key, value);
    } else if (key == "exploration_noise") {
      cfg.td3.exploration_noise = to_real(key, value);
    } else if (key == "model_width") {
      cfg.policy.model_width = to_count(key, value);
    } else if (key == "heads") {
      cfg.policy.heads = to_count(key, value);
    } else if (key == "layers") {
      cfg.policy.layers = to_count(key, value);
    } else if (key == "ff_hidden") {
      cfg.policy.ff_hidden = to_count(key, value);
    } else if (key == "gnn_hidden") {
      cfg.policy.gnn_hidden = to_count(key, value);
    } else if (key == "message_passes") {
      cfg.policy.message_passes = to_count(key, value);
    } else if (key == "smp_hidden") {
      cfg.policy.smp_hidden = to_count(key, value);
    } else if (key == "smp_message") {
      cfg.policy.smp_message = to_count(key, value);
    } else if (key == "max_children") {
      cfg.policy.max_children = to_count(key, value);
    } else if (key == "episode_length") {
      const std::size_t len = to_count(key, value);
      for (auto& t : cfg.tasks) t.episode_length = len;
    } else {
      throw ConfigError("unknown setting '" + key + "'");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

TrainConfig parse_config(const std::string& text, TrainConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  // episode_length must follow tasks, whatever the file order.
  std::optional<std::pair<std::string, std::size_t>> episode_length;
  while (std::getline(in, line)) {
    ++number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value', got '" + line + "'", number);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "episode_length") {
      episode_length = {value, number};
      continue;
    }
    try {
      apply_setting(base, key, value);
    } catch (const ConfigError& e) {
      throw ParseError(e.what(), number);
    }
  }
  if (episode_length) {
    try {
      apply_setting(base, "episode_length", episode_length->first);
    } catch (const ConfigError& e) {
      throw ParseError(e.what(), episode_length->second);
    }
  }
  return base;
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

bool all_compatible(const std::vector<EnvSpec>& tasks) {
  for (std::size_t i = 1; i < tasks.size(); ++i) {
    if (incompatible(tasks[0], tasks[i])) return false;
  }
  return true;
}

MorphGraph task_graph(const EnvSpec& task, TopologyScheme scheme) {
  return make_topology(task.morphology(), scheme);
}

namespace {

void check_arch_can_run(const PolicyConfig& policy, TopologyScheme scheme, const std::vector<EnvSpec>& tasks) {
  if (!accepts_topology(policy.arch, scheme)) {
    throw ConfigError(std::string(to_string(policy.arch)) + " cannot run on the " + std::string(to_string(scheme)) +
                      " topology (not a tree)");
  }
  if (policy.arch != Arch::smp) return;
  for (const auto& t : tasks) {
    const MorphGraph g = task_graph(t, scheme);
    const std::size_t fan_out = max_fan_out(validate_tree(g));
    if (fan_out > policy.max_children) {
      throw CapacityError("smp built for " + std::to_string(policy.max_children) + " children per node, task " +
                          t.name() + " under " + std::string(to_string(scheme)) + " has a node with " +
                          std::to_string(fan_out));
    }
  }
}

}  // namespace

void validate_config(const TrainConfig& cfg) {
  if (cfg.tasks.empty()) throw ConfigError("no tasks");
  if (cfg.seeds.empty()) throw ConfigError("at least one seed is required");
  if (cfg.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (cfg.buffer_capacity == 0) throw ConfigError("buffer_capacity must be positive");
  if (cfg.td3.policy_delay == 0) throw ConfigError("policy_delay must be positive");
  if (cfg.td3.learning_rate < 0) throw ConfigError("learning_rate must not be negative");
  if (cfg.td3.grad_clip <= 0) throw ConfigError("grad_clip must be positive");
  if (cfg.td3.tau <= 0 || cfg.td3.tau > 1) throw ConfigError("tau must be in (0, 1]");
  if (cfg.td3.gamma < 0 || cfg.td3.gamma > 1) throw ConfigError("gamma must be in [0, 1]");
  if (cfg.td3.target_noise < 0 || cfg.td3.noise_clip < 0 || cfg.td3.exploration_noise < 0) {
    throw ConfigError("noise scales must not be negative");
  }
  if (cfg.eval_rollouts == 0) throw ConfigError("eval_rollouts must be positive");
  for (const auto& t : cfg.tasks) {
    if (t.dim_state() / t.node_count() != cfg.policy.obs_width) {
      throw ConfigError("task " + t.name() + " does not share the per-node observation width");
    }
  }
  check_arch_can_run(cfg.policy, cfg.topology, cfg.tasks);
}

double mtrl_return(const std::vector<ReturnStats>& per_task) {
  if (per_task.empty()) throw std::invalid_argument("MTRL return of an empty task set");
  if (per_task.size() == 1) return per_task.front().mean;
  double total = 0;
  for (const auto& s : per_task) total += s.mean;
  return total / static_cast<double>(per_task.size());
}

EvalResult evaluate_policy(const GraphNet<float>& actor, TopologyScheme scheme, const std::vector<EnvSpec>& tasks,
                           std::size_t rollouts, std::uint64_t seed,
                           const std::optional<std::filesystem::path>& dump_dir) {
  if (rollouts == 0) throw std::invalid_argument("evaluation needs at least one rollout");
  EvalResult result;
  for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
    const EnvSpec& task = tasks[ti];
    const MorphGraph graph = task_graph(task, scheme);
    const std::size_t n = task.node_count();
    std::mt19937_64 rng(derive_seed(seed, ti));

    std::vector<EnvState> states(rollouts);
    std::vector<NodeFeatureMatrix> obs(rollouts);
    std::vector<double> returns(rollouts, 0.0);
    std::vector<bool> active(rollouts, true);
    std::vector<std::unique_ptr<TrajectoryWriter>> writers(rollouts);
    for (std::size_t r = 0; r < rollouts; ++r) {
      auto [s, o] = reset(task, rng());
      states[r] = std::move(s);
      obs[r] = std::move(o);
      if (dump_dir) {
        std::string name = task.name();
        std::replace(name.begin(), name.end(), ':', '_');
        writers[r] = std::make_unique<TrajectoryWriter>(*dump_dir / (name + "_rollout" + std::to_string(r) + ".csv"));
      }
    }

    std::vector<std::size_t> live;
    std::vector<float> flat;
    for (;;) {
      live.clear();
      flat.clear();
      for (std::size_t r = 0; r < rollouts; ++r) {
        if (!active[r]) continue;
        live.push_back(r);
        flat.insert(flat.end(), obs[r].data.begin(), obs[r].data.end());
      }
      if (live.empty()) break;
      const std::vector<float> actions = act(actor, graph, live.size(), flat);
      for (std::size_t k = 0; k < live.size(); ++k) {
        const std::size_t r = live[k];
        std::vector<double> a(actions.begin() + k * n, actions.begin() + (k + 1) * n);
        StepResult out = step(task, states[r], a);
        if (writers[r]) writers[r]->write(states[r].step, obs[r], a, out.reward, out.done);
        returns[r] += out.reward;
        states[r] = std::move(out.state);
        obs[r] = std::move(out.obs);
        if (out.done) active[r] = false;
      }
    }
    result.tasks.push_back(task.name());
    result.per_task.push_back(summarize_returns(std::move(returns)));
  }
  result.mtrl_return = mtrl_return(result.per_task);
  return result;
}

void save_policy(const std::filesystem::path& path, const GraphNet<float>& actor, TopologyScheme scheme,
                 std::map<std::string, std::string> meta) {
  const PolicyConfig& p = actor.config();
  meta["arch"] = std::string(to_string(p.arch));
  meta["topology"] = std::string(to_string(scheme));
  meta["residual"] = p.residual ? "true" : "false";
  meta["obs_width"] = std::to_string(p.obs_width);
  meta["model_width"] = std::to_string(p.model_width);
  meta["heads"] = std::to_string(p.heads);
  meta["layers"] = std::to_string(p.layers);
  meta["ff_hidden"] = std::to_string(p.ff_hidden);
  meta["gnn_hidden"] = std::to_string(p.gnn_hidden);
  meta["message_passes"] = std::to_string(p.message_passes);
  meta["smp_hidden"] = std::to_string(p.smp_hidden);
  meta["smp_message"] = std::to_string(p.smp_message);
  meta["max_children"] = std::to_string(p.max_children);
  std::vector<NamedTensor<float>> tensors;
  actor.collect("actor", tensors);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  save_checkpoint(path, meta, tensors);
}

LoadedPolicy load_policy(const std::filesystem::path& path) {
  Checkpoint ckpt = load_checkpoint(path);
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = ckpt.meta.find(key);
    if (it == ckpt.meta.end()) throw ParseError("checkpoint " + path.string() + " lacks meta '" + key + "'");
    return it->second;
  };
  LoadedPolicy out;
  TrainConfig scratch;
  for (const char* key : {"residual", "model_width", "heads", "layers", "ff_hidden", "gnn_hidden", "message_passes",
                          "smp_hidden", "smp_message", "max_children"}) {
    apply_setting(scratch, key, get(key));
  }
  out.policy = scratch.policy;
  out.policy.arch = parse_arch(get("arch"));
  out.policy.obs_width = to_count("obs_width", get("obs_width"));
  out.topology = parse_topology(get("topology"));
  out.actor = init_policy<float>(out.policy, NetRole::actor, 0);
  std::vector<NamedTensor<float>> tensors;
  out.actor->collect("actor", tensors);
  restore_tensors(ckpt, tensors);
  out.meta = std::move(ckpt.meta);
  return out;
}

EvalResult evaluate(const std::filesystem::path& checkpoint, const std::vector<EnvSpec>& tasks, std::size_t rollouts,
                    std::uint64_t seed, const std::optional<std::filesystem::path>& dump_dir) {
  LoadedPolicy policy = load_policy(checkpoint);
  check_arch_can_run(policy.policy, policy.topology, tasks);
  return evaluate_policy(*policy.actor, policy.topology, tasks, rollouts, seed, dump_dir);
}

namespace {

struct TaskRun {
  EnvSpec spec;
  MorphGraph graph;
  ReplayBuffer buffer;
  EnvState state;
  NodeFeatureMatrix obs;
};

void write_metrics(std::ostream& out, std::size_t step, const EvalResult& r) {
  for (std::size_t t = 0; t < r.tasks.size(); ++t) {
    out << step << ',' << r.tasks[t] << ',' << format_double(r.per_task[t].mean) << ','
        << format_double(r.per_task[t].std_error) << ',' << format_double(r.mtrl_return) << '\n';
  }
  out.flush();
}

std::string describe(const TrainConfig& cfg, std::uint64_t seed) {
  std::ostringstream o;
  const auto& p = cfg.policy;
  o << "tasks = " << join_tasks(cfg.tasks) << "\narch = " << to_string(p.arch) << "\ntopology = "
    << to_string(cfg.topology) << "\nresidual = " << (p.residual ? "true" : "false") << "\nseed = " << seed
    << "\nsteps = " << cfg.total_steps << "\nwarmup = " << cfg.warmup_steps << "\nbatch_size = " << cfg.batch_size
    << "\nbuffer_capacity = " << cfg.buffer_capacity << "\neval_every = " << cfg.eval_every
    << "\neval_rollouts = " << cfg.eval_rollouts << "\nfinal_eval_rollouts = " << cfg.final_eval_rollouts
    << "\nlearning_rate = " << format_double(cfg.td3.learning_rate) << "\ngrad_clip = "
    << format_double(cfg.td3.grad_clip) << "\ngamma = " << format_double(cfg.td3.gamma)
    << "\ntau = " << format_double(cfg.td3.tau) << "\npolicy_delay = " << cfg.td3.policy_delay
    << "\ntarget_noise = " << format_double(cfg.td3.target_noise) << "\nnoise_clip = "
    << format_double(cfg.td3.noise_clip) << "\nexploration_noise = " << format_double(cfg.td3.exploration_noise)
    << "\nmodel_width = " << p.model_width << "\nheads = " << p.heads << "\nlayers = " << p.layers
    << "\nff_hidden = " << p.ff_hidden << "\ngnn_hidden = " << p.gnn_hidden << "\nmessage_passes = "
    << p.message_passes << "\nsmp_hidden = " << p.smp_hidden << "\nsmp_message = " << p.smp_message
    << "\nmax_children = " << p.max_children << "\nepisode_length = " << cfg.tasks.front().episode_length << "\n";
  return o.str();
}

}  // namespace

TrainResult mtrl_train(const TrainConfig& cfg, std::uint64_t seed, const std::filesystem::path& run_dir,
                       std::ostream* log) {
  validate_config(cfg);
  const auto started = std::chrono::steady_clock::now();
  std::filesystem::create_directories(run_dir / "checkpoints");
  {
    std::ofstream conf(run_dir / "config.txt");
    conf << describe(cfg, seed);
  }

  TrainResult result;
  result.run_dir = run_dir;
  result.metrics = run_dir / "metrics.csv";
  result.final_checkpoint = run_dir / "final.ckpt";
  std::ofstream metrics(result.metrics);
  if (!metrics) throw std::runtime_error("cannot write " + result.metrics.string());
  metrics << "step,task,return_mean,return_stderr,mtrl_return\n";

  Agent agent = make_agent(cfg.policy, cfg.td3, derive_seed(seed, 1));
  std::mt19937_64 rng(derive_seed(seed, 2));
  const std::uint64_t eval_seed = derive_seed(seed, 3);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  std::normal_distribution<double> explore(0.0, cfg.td3.exploration_noise);

  std::vector<TaskRun> runs;
  for (std::size_t t = 0; t < cfg.tasks.size(); ++t) {
    const EnvSpec& spec = cfg.tasks[t];
    auto [state, obs] = reset(spec, rng());
    runs.push_back({spec, task_graph(spec, cfg.topology), ReplayBuffer(t, spec.node_count(), cfg.buffer_capacity),
                    std::move(state), std::move(obs)});
  }

  const std::map<std::string, std::string> base_meta{
      {"seed", std::to_string(seed)}, {"tasks", join_tasks(cfg.tasks)}};
  auto checkpoint_and_log = [&](std::size_t step) {
    EvalResult r = evaluate_policy(*agent.actor, cfg.topology, cfg.tasks, cfg.eval_rollouts, eval_seed);
    write_metrics(metrics, step, r);
    auto meta = base_meta;
    meta["step"] = std::to_string(step);
    std::ostringstream name;
    name << "step_" << std::setw(8) << std::setfill('0') << step << ".ckpt";
    save_policy(run_dir / "checkpoints" / name.str(), *agent.actor, cfg.topology, meta);
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    std::ostringstream line;
    line << "[seed " << seed << "] step " << step << " mtrl_return " << std::fixed << std::setprecision(2)
         << r.mtrl_return << " (" << std::setprecision(0) << elapsed << " s)";
    log_line(log, line.str());
    result.curve.push_back({step, std::move(r)});
  };

  if (cfg.eval_every > 0) checkpoint_and_log(0);
  std::vector<float> flat;
  for (std::size_t step = 0; step < cfg.total_steps; ++step) {
    const bool warm = step < cfg.warmup_steps;
    for (TaskRun& run : runs) {
      const std::size_t n = run.spec.node_count();
      std::vector<double> actions(n, 0.0);
      if (warm) {
        for (std::size_t i = 0; i < n; ++i) actions[i] = uniform(rng);
      } else {
        flat.assign(run.obs.data.begin(), run.obs.data.end());
        const std::vector<float> mean = act(*agent.actor, run.graph, 1, flat);
        for (std::size_t i = 0; i < n; ++i) actions[i] = std::clamp(mean[i] + explore(rng), -1.0, 1.0);
      }
      actions[run.graph.root()] = 0.0;
      StepResult out = amorph::step(run.spec, run.state, actions);
      // Only falls are terminal; hitting the episode length is a truncation.
      run.buffer.push({run.obs, actions, out.reward, out.obs, out.fell, run.buffer.task()});
      if (out.done) {
        auto [state, obs] = reset(run.spec, rng());
        run.state = std::move(state);
        run.obs = std::move(obs);
      } else {
        run.state = std::move(out.state);
        run.obs = std::move(out.obs);
      }
    }
    if (!warm) {
      for (TaskRun& run : runs) td3_update(agent, run.graph, run.buffer.sample(cfg.batch_size, rng));
    }
    const std::size_t done_steps = step + 1;
    if (cfg.eval_every > 0 && (done_steps % cfg.eval_every == 0 || done_steps == cfg.total_steps)) {
      checkpoint_and_log(done_steps);
    }
  }

  auto meta = base_meta;
  meta["step"] = std::to_string(cfg.total_steps);
  save_policy(result.final_checkpoint, *agent.actor, cfg.topology, meta);
  if (cfg.final_eval_rollouts > 0) {
    result.final_eval =
        evaluate_policy(*agent.actor, cfg.topology, cfg.tasks, cfg.final_eval_rollouts, derive_seed(seed, 4));
    std::ofstream fin(run_dir / "final_eval.csv");
    fin << "task,return_mean,return_stderr,mtrl_return\n";
    for (std::size_t t = 0; t < result.final_eval.tasks.size(); ++t) {
      fin << result.final_eval.tasks[t] << ',' << format_double(result.final_eval.per_task[t].mean) << ','
          << format_double(result.final_eval.per_task[t].std_error) << ','
          << format_double(result.final_eval.mtrl_return) << '\n';
    }
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

std::vector<TrainResult> train_seeds(const TrainConfig& cfg, const std::filesystem::path& out_dir, std::size_t jobs,
                                     std::ostream* log) {
  validate_config(cfg);
  const std::size_t count = cfg.seeds.size();
  std::vector<TrainResult> results(count);
  std::vector<std::exception_ptr> errors(count);
  std::size_t next = 0;
  std::mutex next_mutex;
  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard<std::mutex> lock(next_mutex);
        if (next == count) return;
        i = next++;
      }
      try {
        const std::uint64_t s = cfg.seeds[i];
        results[i] = mtrl_train(cfg, s, out_dir / ("seed_" + std::to_string(s)), log);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t j = 1; j < std::min(std::max<std::size_t>(jobs, 1), count); ++j) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

}  // namespace amorph
