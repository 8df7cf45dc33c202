#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "amorph/graph.hpp"
#include "amorph/policies.hpp"
#include "amorph/train.hpp"

namespace amorph {

/// Grid of (arch, topology) cells, each trained once per seed with `base`.
struct AblationGrid {
  std::vector<Arch> archs{Arch::nervenet};
  std::vector<TopologyScheme> topologies{TopologyScheme::morphology, TopologyScheme::star, TopologyScheme::line,
                                         TopologyScheme::full};
  TrainConfig base;  // seeds come from base.seeds
};

/// Grid file: "archs = a,b", "topologies = x,y" plus any training setting
/// ("seeds", "tasks", "steps", ...), one "key = value" per line.
AblationGrid parse_grid(const std::string& text);
AblationGrid load_grid(const std::filesystem::path& path);

enum class CellStatus { ok, skipped, failed };
std::string_view to_string(CellStatus s);

struct CellSeedRun {
  std::uint64_t seed = 0;
  std::vector<std::size_t> steps;
  std::vector<double> mtrl;  // MTRL return at each step
};

struct CellOutcome {
  Arch arch = Arch::nervenet;
  TopologyScheme topology = TopologyScheme::morphology;
  CellStatus status = CellStatus::ok;
  std::string message;
  std::vector<CellSeedRun> runs;
  // Across seeds, per evaluation step (empty unless ok).
  std::vector<std::size_t> steps;
  std::vector<double> mean, std_error;
  double final_mean = 0.0, final_std_error = 0.0;
};

struct AblationResult {
  std::vector<CellOutcome> cells;
  std::filesystem::path curves_csv, summary_csv, summary_curves_csv, plot_svg;
};

/// Runs every cell, seeds up to `jobs` at a time, into out_dir/runs/<arch>_<topology>.
/// Cells the configuration check rejects are recorded as skipped; cells that
/// throw during training are recorded as failed; the rest still run. Writes
///   curves.csv          arch,topology,seed,step,mtrl_return
///   summary.csv         arch,topology,status,seeds,final_mean,final_stderr,message
///   summary_curves.csv  arch,topology,step,mean,stderr
///   curves.svg          mean curve with a +-stderr band per cell
AblationResult ablation_harness(const AblationGrid& grid, const std::filesystem::path& out_dir, std::size_t jobs = 1,
                                std::ostream* log = nullptr);

}  // namespace amorph
