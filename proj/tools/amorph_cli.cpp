// Command-line front end: training, evaluation, topology ablations and
// attention-mask analysis.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "amorph/ablation.hpp"
#include "amorph/analysis.hpp"
#include "amorph/errors.hpp"
#include "amorph/graph.hpp"
#include "amorph/train.hpp"

using namespace amorph;

namespace {

std::vector<std::size_t> parse_steps(const std::string& list) {
  std::vector<std::size_t> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoul(item));
  }
  return out;
}

void print_eval(std::ostream& out, const EvalResult& r) {
  out << "task,return_mean,return_stderr,mtrl_return\n";
  for (std::size_t t = 0; t < r.tasks.size(); ++t) {
    out << r.tasks[t] << ',' << format_double(r.per_task[t].mean) << ',' << format_double(r.per_task[t].std_error)
        << ',' << format_double(r.mtrl_return) << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph policies and multitask TD3 on planar chain tasks"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "train one or more seeds");
  std::string config_file, arch, topology, tasks, out_dir = "runs/train";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  std::optional<bool> residual;
  std::size_t jobs = 1;
  std::vector<std::string> overrides;
  train->add_option("--config", config_file, "key = value config file");
  train->add_option("--arch", arch, "amorpheus | nervenet | smp");
  train->add_option("--topology", topology, "morphology | star | line | full");
  train->add_option("--tasks", tasks, "comma separated, e.g. chain-walker:2,chain-walker:3");
  train->add_option("--seed", seed, "train this seed only (default: the config's seed list)");
  train->add_option("--steps", steps, "environment steps per task");
  train->add_option("--residual", residual, "residual connection into the decoder (amorpheus)");
  train->add_option("--set", overrides, "extra key=value settings")->take_all();
  train->add_option("--jobs", jobs, "seeds trained in parallel");
  train->add_option("--out", out_dir, "run directory");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint, including held-out tasks");
  std::string checkpoint, eval_tasks, dump_dir, eval_out;
  std::size_t rollouts = 100;
  std::uint64_t eval_seed = 0;
  eval->add_option("--checkpoint", checkpoint, "checkpoint manifest")->required();
  eval->add_option("--tasks", eval_tasks, "comma separated task list")->required();
  eval->add_option("--rollouts", rollouts, "rollouts per task");
  eval->add_option("--seed", eval_seed, "evaluation seed");
  eval->add_option("--dump-trajectories", dump_dir, "write one CSV per rollout into this directory");
  eval->add_option("--out", eval_out, "also write the summary CSV here");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "run an (arch x topology x seed) grid");
  std::string grid_file, ablate_out = "runs/ablation";
  std::size_t ablate_jobs = 1;
  ablate->add_option("--grid", grid_file, "grid file")->required();
  ablate->add_option("--out", ablate_out, "output directory");
  ablate->add_option("--jobs", ablate_jobs, "seeds trained in parallel");

  // baseline
  auto* baseline = app.add_subcommand("baseline", "uniform random policy returns");
  std::string baseline_task = "chain-walker:2";
  std::size_t baseline_episodes = 100;
  std::uint64_t baseline_seed = 0;
  baseline->add_option("--task", baseline_task, "task name");
  baseline->add_option("--episodes", baseline_episodes, "episodes");
  baseline->add_option("--seed", baseline_seed, "seed");

  // graph
  auto* graph_cmd = app.add_subcommand("graph", "build a topology and check it");
  std::string graph_file, graph_topology = "morphology";
  std::size_t chain_links = 0;
  graph_cmd->add_option("--graph-file", graph_file, "graph fixture file");
  graph_cmd->add_option("--chain", chain_links, "use an n-link chain instead of a file");
  graph_cmd->add_option("--topology", graph_topology, "morphology | star | line | full");

  // analyze
  auto* analyze = app.add_subcommand("analyze", "attention mask analysis");
  analyze->require_subcommand(1);
  auto* record = analyze->add_subcommand("record", "capture masks from an amorpheus checkpoint");
  std::string rec_checkpoint, rec_task = "chain-walker:6", rec_out = "masks";
  std::size_t rec_episodes = 1;
  std::uint64_t rec_seed = 0;
  std::optional<std::size_t> rec_length;
  record->add_option("--checkpoint", rec_checkpoint, "checkpoint manifest")->required();
  record->add_option("--task", rec_task, "task name");
  record->add_option("--episodes", rec_episodes, "episodes");
  record->add_option("--seed", rec_seed, "seed");
  record->add_option("--episode-length", rec_length, "override the episode length");
  record->add_option("--out", rec_out, "output directory");

  auto* colsum = analyze->add_subcommand("colsum", "column sums of every mask in a series");
  std::string colsum_series;
  std::optional<std::size_t> colsum_step;
  colsum->add_option("--series", colsum_series, "masks_L*_H*.csv file")->required();
  colsum->add_option("--step", colsum_step, "only this step");

  auto* cumchange = analyze->add_subcommand("cumchange", "cumulative absolute change of a series");
  std::string cum_series;
  cumchange->add_option("--series", cum_series, "masks_L*_H*.csv file")->required();

  auto* report = analyze->add_subcommand("report", "export CSV and SVG artifacts");
  std::string report_dir, report_out = "report", snapshot_list;
  bool report_colsum = false, report_cum = false;
  report->add_option("--series-dir", report_dir, "directory written by 'analyze record'")->required();
  report->add_option("--out", report_out, "output directory");
  report->add_option("--snapshot-steps", snapshot_list, "comma separated steps for heatmaps");
  report->add_flag("--colsum", report_colsum, "column sums vs joint angles, periodicity");
  report->add_flag("--cumchange", report_cum, "cumulative change curves");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      TrainConfig cfg = config_file.empty() ? TrainConfig{} : load_config(config_file);
      if (!tasks.empty()) apply_setting(cfg, "tasks", tasks);
      if (!arch.empty()) apply_setting(cfg, "arch", arch);
      if (!topology.empty()) apply_setting(cfg, "topology", topology);
      if (steps) cfg.total_steps = *steps;
      if (residual) cfg.policy.residual = *residual;
      for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
      }
      if (seed) {
        TrainResult r = mtrl_train(cfg, *seed, out_dir, &std::cerr);
        print_eval(std::cout, r.final_eval);
        std::cerr << "finished in " << r.seconds << " s, checkpoint " << r.final_checkpoint.string() << '\n';
      } else {
        for (const TrainResult& r : train_seeds(cfg, out_dir, jobs, &std::cerr)) {
          std::cout << "# " << r.run_dir.string() << '\n';
          print_eval(std::cout, r.final_eval);
        }
      }
    } else if (eval->parsed()) {
      std::optional<std::filesystem::path> dump;
      if (!dump_dir.empty()) dump = dump_dir;
      EvalResult r = evaluate(checkpoint, parse_task_list(eval_tasks), rollouts, eval_seed, dump);
      print_eval(std::cout, r);
      if (!eval_out.empty()) {
        std::ofstream out(eval_out);
        print_eval(out, r);
      }
    } else if (ablate->parsed()) {
      AblationResult r = ablation_harness(load_grid(grid_file), ablate_out, ablate_jobs, &std::cerr);
      std::ifstream summary(r.summary_csv);
      std::cout << summary.rdbuf();
    } else if (baseline->parsed()) {
      ReturnStats s = random_policy_baseline(parse_task(baseline_task), baseline_episodes, baseline_seed);
      std::cout << baseline_task << " random policy: " << format_double(s.mean) << " +- "
                << format_double(s.std_error) << '\n';
    } else if (graph_cmd->parsed()) {
      if (graph_file.empty() == (chain_links == 0)) throw ConfigError("give exactly one of --graph-file and --chain");
      MorphGraph g = graph_file.empty() ? build_chain_morphology(chain_links) : load_graph_file(graph_file);
      MorphGraph t = make_topology(g, parse_topology(graph_topology));
      write_graph(std::cout, t);
      try {
        const ParentArray parents = validate_tree(t);
        std::cout << "# tree, max fan-out " << max_fan_out(parents) << '\n';
      } catch (const StructuralError& e) {
        std::cout << "# not a tree: " << e.what() << '\n';
      }
    } else if (record->parsed()) {
      EnvSpec task = parse_task(rec_task);
      if (rec_length) task.episode_length = *rec_length;
      RecordResult r = record_masks(rec_checkpoint, task, rec_episodes, rec_seed, rec_out);
      for (const auto& f : r.files) std::cout << f.string() << '\n';
    } else if (colsum->parsed()) {
      MaskSeries s = load_mask_series(colsum_series);
      std::cout << "step,node,colsum\n";
      for (const MaskRecord& r : s.records) {
        if (colsum_step && r.step != *colsum_step) continue;
        const auto sums = columnwise_sum(r.weights, r.nodes);
        for (std::size_t j = 0; j < sums.size(); ++j) {
          std::cout << r.step << ',' << j << ',' << format_double(sums[j]) << '\n';
        }
      }
    } else if (cumchange->parsed()) {
      MaskSeries s = load_mask_series(cum_series);
      const auto c = cumulative_change(s);
      const auto norm = normalize_by_final(c);
      std::cout << "step,cumulative,normalized\n";
      for (std::size_t t = 0; t < c.size(); ++t) {
        std::cout << s.records[t].step << ',' << format_double(c[t]) << ',' << format_double(norm[t]) << '\n';
      }
    } else if (report->parsed()) {
      ReportRequest req;
      req.snapshot_steps = parse_steps(snapshot_list);
      req.column_sums = report_colsum;
      req.cumulative = report_cum;
      for (const auto& f : export_report(report_dir, report_out, req)) std::cout << f.string() << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
