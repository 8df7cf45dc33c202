#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "amorph/env.hpp"

namespace amorph {

/// One captured mask, row-major n x n, rows summing to 1.
struct MaskRecord {
  std::size_t step = 0;
  std::size_t nodes = 0;
  std::vector<double> weights;
};

/// Masks of one (layer, head) over a rollout, in step order.
struct MaskSeries {
  std::size_t layer = 0;
  std::size_t head = 0;
  std::vector<MaskRecord> records;
};

/// Per-step, per-node auxiliary signals aligned with the masks.
struct SignalRecord {
  std::size_t step = 0;
  std::size_t episode = 0;
  std::size_t node = 0;
  double joint_angle = 0.0;  // rad, 0 for the torso
  double angle_unit = 0.0;   // angle scaled to [0, 1]
  double action = 0.0;
};

struct RecordResult {
  std::vector<MaskSeries> series;  // layer-major, then head
  std::vector<SignalRecord> signals;
  std::vector<std::filesystem::path> files;
};

/// Deterministic rollouts of an Amorpheus checkpoint on `task`, capturing the
/// attention masks of every layer and head at every step. Writes
/// masks_L<l>_H<h>.csv ("step,layer,head,i,j,weight") and signals.csv into
/// out_dir. Steps count up across episodes. Throws UnsupportedArchError for
/// other architectures.
RecordResult record_masks(const std::filesystem::path& checkpoint, const EnvSpec& task, std::size_t episodes,
                          std::uint64_t seed, const std::filesystem::path& out_dir);

void write_mask_series(const std::filesystem::path& path, const MaskSeries& series);
/// Strict loader: ParseError (with line number) for malformed rows, missing
/// entries, mixed layer/head or non-increasing steps.
MaskSeries load_mask_series(const std::filesystem::path& path);

void write_signals(const std::filesystem::path& path, const std::vector<SignalRecord>& signals);
std::vector<SignalRecord> load_signals(const std::filesystem::path& path);

/// Column sums of a row-stochastic n x n mask: how much attention each node receives.
std::vector<double> columnwise_sum(const std::vector<double>& mask, std::size_t nodes);

/// c(0) = 0, c(t) = c(t-1) + sum |M_t - M_{t-1}| (entrywise). Throws
/// InconsistencyError when the node count changes within the series.
std::vector<double> cumulative_change(const MaskSeries& series);

/// c(t) / c(last); all zeros when nothing changes.
std::vector<double> normalize_by_final(const std::vector<double>& cumulative);

struct Periodicity {
  std::size_t period = 0;  // 0 when no positive autocorrelation peak exists
  double peak = 0.0;       // normalized autocorrelation at that lag
};

/// Lag of the highest local maximum of the normalized autocorrelation over
/// lags 2 .. len/2.
Periodicity autocorrelation_period(const std::vector<double>& trace);

struct ReportRequest {
  std::vector<std::size_t> snapshot_steps;  // heatmaps of every layer/head at these steps
  bool column_sums = false;                 // column sums vs joint angles + periodicity
  bool cumulative = false;                  // cumulative change curves
  bool empty() const { return snapshot_steps.empty() && !column_sums && !cumulative; }
};

/// Reads the masks_L*_H*.csv files (and signals.csv when present) of
/// `series_dir` and writes the requested CSV and SVG artifacts plus
/// manifest.txt into out_dir. Returns the files written, manifest last.
std::vector<std::filesystem::path> export_report(const std::filesystem::path& series_dir,
                                                 const std::filesystem::path& out_dir, const ReportRequest& request);

/// Mask series files in a directory, sorted by layer then head.
std::vector<std::filesystem::path> find_series_files(const std::filesystem::path& dir);

}  // namespace amorph
