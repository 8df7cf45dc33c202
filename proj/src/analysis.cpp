#include "amorph/analysis.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>

#include "amorph/errors.hpp"
#include "amorph/policies.hpp"
#include "amorph/svg.hpp"
#include "amorph/train.hpp"

namespace amorph {

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(line);
  while (std::getline(ss, item, sep)) out.push_back(item);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

template <typename N>
N parse_field(const std::string& s, const char* what, std::size_t line) {
  N out{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ParseError(std::string("bad ") + what + " '" + s + "'", line);
  }
  return out;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::string series_stem(std::size_t layer, std::size_t head) {
  return "L" + std::to_string(layer) + "_H" + std::to_string(head);
}

// Finalises the rows gathered for one step into a record.
MaskRecord close_record(std::size_t step, std::vector<std::tuple<std::size_t, std::size_t, double>>& rows,
                        std::size_t line) {
  const auto n = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(rows.size()))));
  if (n == 0 || n * n != rows.size()) {
    throw ParseError("step " + std::to_string(step) + " has " + std::to_string(rows.size()) +
                         " entries, not a square mask",
                     line);
  }
  MaskRecord r{step, n, std::vector<double>(n * n, std::nan(""))};
  for (auto& [i, j, w] : rows) {
    if (i >= n || j >= n) throw ParseError("entry (" + std::to_string(i) + "," + std::to_string(j) +
                                               ") outside the " + std::to_string(n) + "-node mask of step " +
                                               std::to_string(step),
                                           line);
    if (!std::isnan(r.weights[i * n + j])) {
      throw ParseError("duplicate entry (" + std::to_string(i) + "," + std::to_string(j) + ") at step " +
                           std::to_string(step),
                       line);
    }
    r.weights[i * n + j] = w;
  }
  rows.clear();
  return r;
}

}  // namespace

RecordResult record_masks(const std::filesystem::path& checkpoint, const EnvSpec& task, std::size_t episodes,
                          std::uint64_t seed, const std::filesystem::path& out_dir) {
  if (episodes == 0) throw std::invalid_argument("record_masks needs at least one episode");
  LoadedPolicy policy = load_policy(checkpoint);
  const auto* net = dynamic_cast<const AmorpheusNet<float>*>(policy.actor.get());
  if (policy.policy.arch != Arch::amorpheus || net == nullptr) {
    throw UnsupportedArchError("attention masks exist only for amorpheus checkpoints, got " +
                               std::string(to_string(policy.policy.arch)));
  }
  const std::size_t heads = policy.policy.heads, layers = policy.policy.layers;
  RecordResult result;
  for (std::size_t l = 0; l < layers; ++l) {
    for (std::size_t h = 0; h < heads; ++h) result.series.push_back({l, h, {}});
  }

  std::mt19937_64 rng(seed);
  std::size_t global_step = 0;
  const std::size_t n = task.node_count();
  for (std::size_t ep = 0; ep < episodes; ++ep) {
    auto [state, obs] = reset(task, rng());
    for (;;) {
      ActorOutput<float> out = amorpheus_actor_forward(*net, obs.as_tensor<float>());
      for (std::size_t k = 0; k < out.masks.size(); ++k) {
        auto v = out.masks[k].values();
        result.series[k].records.push_back({global_step, n, std::vector<double>(v.begin(), v.end())});
      }
      std::vector<double> actions(out.actions.begin(), out.actions.end());
      actions[0] = 0.0;
      for (std::size_t node = 0; node < n; ++node) {
        const double angle = node == 0 ? 0.0 : state.joint_angle[joint_of_node(task, node)];
        result.signals.push_back({global_step, ep, node, angle, obs(node, feature::angle_unit), actions[node]});
      }
      StepResult s = step(task, state, actions);
      ++global_step;
      state = std::move(s.state);
      obs = std::move(s.obs);
      if (s.done) break;
    }
  }

  for (const MaskSeries& s : result.series) {
    auto path = out_dir / ("masks_" + series_stem(s.layer, s.head) + ".csv");
    write_mask_series(path, s);
    result.files.push_back(path);
  }
  auto signals = out_dir / "signals.csv";
  write_signals(signals, result.signals);
  result.files.push_back(signals);
  return result;
}

void write_mask_series(const std::filesystem::path& path, const MaskSeries& series) {
  auto out = open_out(path);
  out << "step,layer,head,i,j,weight\n";
  for (const MaskRecord& r : series.records) {
    for (std::size_t i = 0; i < r.nodes; ++i) {
      for (std::size_t j = 0; j < r.nodes; ++j) {
        out << r.step << ',' << series.layer << ',' << series.head << ',' << i << ',' << j << ','
            << format_double(r.weights[i * r.nodes + j]) << '\n';
      }
    }
  }
}

MaskSeries load_mask_series(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot read mask series " + path.string());
  std::string line;
  std::size_t number = 1;
  if (!std::getline(in, line)) throw ParseError("empty mask series file " + path.string(), 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "step,layer,head,i,j,weight") throw ParseError("unexpected header '" + line + "'", 1);

  MaskSeries series;
  bool first = true;
  std::size_t current = 0;
  std::vector<std::tuple<std::size_t, std::size_t, double>> rows;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 6) throw ParseError("expected 6 fields, got " + std::to_string(f.size()), number);
    const auto step = parse_field<std::size_t>(f[0], "step", number);
    const auto layer = parse_field<std::size_t>(f[1], "layer", number);
    const auto head = parse_field<std::size_t>(f[2], "head", number);
    const auto i = parse_field<std::size_t>(f[3], "row index", number);
    const auto j = parse_field<std::size_t>(f[4], "column index", number);
    const auto w = parse_field<double>(f[5], "weight", number);
    if (!std::isfinite(w)) throw ParseError("non-finite weight", number);
    if (first) {
      series.layer = layer;
      series.head = head;
      current = step;
      first = false;
    } else if (layer != series.layer || head != series.head) {
      throw ParseError("file mixes layer/head " + series_stem(series.layer, series.head) + " and " +
                           series_stem(layer, head),
                       number);
    }
    if (step != current) {
      if (step < current) throw ParseError("step " + std::to_string(step) + " after step " + std::to_string(current), number);
      series.records.push_back(close_record(current, rows, number - 1));
      current = step;
    }
    rows.emplace_back(i, j, w);
  }
  if (!rows.empty()) series.records.push_back(close_record(current, rows, number));
  return series;
}

void write_signals(const std::filesystem::path& path, const std::vector<SignalRecord>& signals) {
  auto out = open_out(path);
  out << "step,episode,node,joint_angle,angle_unit,action\n";
  for (const auto& s : signals) {
    out << s.step << ',' << s.episode << ',' << s.node << ',' << format_double(s.joint_angle) << ','
        << format_double(s.angle_unit) << ',' << format_double(s.action) << '\n';
  }
}

std::vector<SignalRecord> load_signals(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot read signals " + path.string());
  std::string line;
  std::size_t number = 1;
  std::getline(in, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "step,episode,node,joint_angle,angle_unit,action") {
    throw ParseError("unexpected header '" + line + "'", 1);
  }
  std::vector<SignalRecord> out;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 6) throw ParseError("expected 6 fields, got " + std::to_string(f.size()), number);
    out.push_back({parse_field<std::size_t>(f[0], "step", number), parse_field<std::size_t>(f[1], "episode", number),
                   parse_field<std::size_t>(f[2], "node", number), parse_field<double>(f[3], "angle", number),
                   parse_field<double>(f[4], "angle", number), parse_field<double>(f[5], "action", number)});
  }
  return out;
}

std::vector<double> columnwise_sum(const std::vector<double>& mask, std::size_t nodes) {
  if (mask.size() != nodes * nodes) {
    throw DimensionError("columnwise_sum: " + std::to_string(mask.size()) + " entries for " + std::to_string(nodes) +
                         " nodes");
  }
  std::vector<double> sums(nodes, 0.0);
  for (std::size_t i = 0; i < nodes; ++i) {
    for (std::size_t j = 0; j < nodes; ++j) sums[j] += mask[i * nodes + j];
  }
  return sums;
}

std::vector<double> cumulative_change(const MaskSeries& series) {
  if (series.records.empty()) throw std::invalid_argument("cumulative_change of an empty series");
  std::vector<double> c{0.0};
  for (std::size_t t = 1; t < series.records.size(); ++t) {
    const MaskRecord& a = series.records[t - 1];
    const MaskRecord& b = series.records[t];
    if (a.nodes != b.nodes) {
      throw InconsistencyError("node count changes from " + std::to_string(a.nodes) + " to " +
                               std::to_string(b.nodes) + " at step " + std::to_string(b.step));
    }
    double d = 0.0;
    for (std::size_t k = 0; k < a.weights.size(); ++k) d += std::fabs(b.weights[k] - a.weights[k]);
    c.push_back(c.back() + d);
  }
  return c;
}

std::vector<double> normalize_by_final(const std::vector<double>& cumulative) {
  std::vector<double> out(cumulative.size(), 0.0);
  if (cumulative.empty() || cumulative.back() <= 0.0) return out;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = cumulative[i] / cumulative.back();
  return out;
}

Periodicity autocorrelation_period(const std::vector<double>& trace) {
  const std::size_t len = trace.size();
  Periodicity best;
  if (len < 4) return best;
  double mean = 0;
  for (double v : trace) mean += v;
  mean /= static_cast<double>(len);
  double var = 0;
  for (double v : trace) var += (v - mean) * (v - mean);
  if (var <= 0) return best;
  std::vector<double> r(len / 2 + 2, 0.0);
  for (std::size_t lag = 0; lag < r.size() && lag < len; ++lag) {
    double s = 0;
    for (std::size_t t = 0; t + lag < len; ++t) s += (trace[t] - mean) * (trace[t + lag] - mean);
    r[lag] = s / var;
  }
  for (std::size_t lag = 2; lag + 1 < r.size(); ++lag) {
    if (r[lag] > 0 && r[lag] >= r[lag - 1] && r[lag] >= r[lag + 1] && r[lag] > best.peak) {
      best = {lag, r[lag]};
    }
  }
  return best;
}

std::vector<std::filesystem::path> find_series_files(const std::filesystem::path& dir) {
  static const std::regex name(R"(masks_L(\d+)_H(\d+)\.csv)");
  std::vector<std::pair<std::pair<std::size_t, std::size_t>, std::filesystem::path>> found;
  if (!std::filesystem::is_directory(dir)) throw ParseError("series directory " + dir.string() + " does not exist");
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    std::smatch m;
    const std::string file = entry.path().filename().string();
    if (std::regex_match(file, m, name)) {
      found.push_back({{std::stoul(m[1]), std::stoul(m[2])}, entry.path()});
    }
  }
  std::sort(found.begin(), found.end());
  std::vector<std::filesystem::path> out;
  for (auto& f : found) out.push_back(f.second);
  return out;
}

std::vector<std::filesystem::path> export_report(const std::filesystem::path& series_dir,
                                                 const std::filesystem::path& out_dir, const ReportRequest& request) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  std::vector<MaskSeries> all;
  std::vector<SignalRecord> signals;
  if (!request.empty()) {
    for (const auto& f : find_series_files(series_dir)) all.push_back(load_mask_series(f));
    if (all.empty()) throw ParseError("no masks_L*_H*.csv files in " + series_dir.string());
    if (std::filesystem::exists(series_dir / "signals.csv")) signals = load_signals(series_dir / "signals.csv");
  }

  for (std::size_t step : request.snapshot_steps) {
    for (const MaskSeries& s : all) {
      auto it = std::find_if(s.records.begin(), s.records.end(), [&](const MaskRecord& r) { return r.step == step; });
      if (it == s.records.end()) {
        throw std::invalid_argument("step " + std::to_string(step) + " is not in series " +
                                    series_stem(s.layer, s.head));
      }
      const std::string stem = "heatmap_" + series_stem(s.layer, s.head) + "_step" + std::to_string(step);
      auto csv = open_out(out_dir / (stem + ".csv"));
      csv << "i,j,weight\n";
      for (std::size_t i = 0; i < it->nodes; ++i) {
        for (std::size_t j = 0; j < it->nodes; ++j) {
          csv << i << ',' << j << ',' << format_double(it->weights[i * it->nodes + j]) << '\n';
        }
      }
      written.push_back(out_dir / (stem + ".csv"));
      svg::write_heatmap(out_dir / (stem + ".svg"),
                         "layer " + std::to_string(s.layer) + ", head " + std::to_string(s.head) + ", step " +
                             std::to_string(step),
                         it->nodes, it->nodes, it->weights);
      written.push_back(out_dir / (stem + ".svg"));
    }
  }

  if (request.column_sums) {
    // angle_unit per (step, node) for the aligned traces
    std::map<std::pair<std::size_t, std::size_t>, double> angle;
    for (const auto& s : signals) angle[{s.step, s.node}] = s.angle_unit;
    auto period_csv = open_out(out_dir / "periodicity.csv");
    period_csv << "layer,head,node,signal,period,peak\n";
    for (const MaskSeries& s : all) {
      const std::string stem = "colsum_" + series_stem(s.layer, s.head);
      auto csv = open_out(out_dir / (stem + ".csv"));
      csv << "step,node,colsum,angle_unit\n";
      const std::size_t n = s.records.empty() ? 0 : s.records.front().nodes;
      std::vector<std::vector<double>> traces(n), angles(n);
      std::vector<double> xs;
      for (const MaskRecord& r : s.records) {
        if (r.nodes != n) throw InconsistencyError("node count changes within series " + series_stem(s.layer, s.head));
        const auto sums = columnwise_sum(r.weights, r.nodes);
        xs.push_back(static_cast<double>(r.step));
        for (std::size_t j = 0; j < n; ++j) {
          auto a = angle.find({r.step, j});
          csv << r.step << ',' << j << ',' << format_double(sums[j]) << ',';
          if (a != angle.end()) {
            csv << format_double(a->second);
            angles[j].push_back(a->second);
          }
          csv << '\n';
          traces[j].push_back(sums[j]);
        }
      }
      written.push_back(out_dir / (stem + ".csv"));
      svg::LinePlot plot;
      plot.title = "column sums, layer " + std::to_string(s.layer) + " head " + std::to_string(s.head);
      plot.x_label = "step";
      plot.y_label = "column sum / normalized angle";
      for (std::size_t j = 0; j < n; ++j) {
        plot.series.push_back({"colsum node " + std::to_string(j), xs, traces[j], {}, {}});
        const Periodicity p = autocorrelation_period(traces[j]);
        period_csv << s.layer << ',' << s.head << ',' << j << ",colsum," << p.period << ',' << format_double(p.peak)
                   << '\n';
        if (angles[j].size() == xs.size() && j > 0) {
          plot.series.push_back({"angle node " + std::to_string(j), xs, angles[j], {}, {}});
          const Periodicity q = autocorrelation_period(angles[j]);
          period_csv << s.layer << ',' << s.head << ',' << j << ",angle_unit," << q.period << ','
                     << format_double(q.peak) << '\n';
        }
      }
      svg::write_line_plot(out_dir / (stem + ".svg"), plot);
      written.push_back(out_dir / (stem + ".svg"));
    }
    written.push_back(out_dir / "periodicity.csv");
  }

  if (request.cumulative) {
    auto csv = open_out(out_dir / "cumchange.csv");
    csv << "layer,head,step,cumulative,normalized\n";
    svg::LinePlot plot;
    plot.title = "cumulative absolute change of attention masks";
    plot.x_label = "step";
    plot.y_label = "cumulative L1 change";
    for (const MaskSeries& s : all) {
      const auto c = cumulative_change(s);
      const auto norm = normalize_by_final(c);
      svg::Series line;
      line.label = "layer " + std::to_string(s.layer) + " head " + std::to_string(s.head);
      for (std::size_t t = 0; t < c.size(); ++t) {
        csv << s.layer << ',' << s.head << ',' << s.records[t].step << ',' << format_double(c[t]) << ','
            << format_double(norm[t]) << '\n';
        line.x.push_back(static_cast<double>(s.records[t].step));
        line.y.push_back(c[t]);
      }
      plot.series.push_back(std::move(line));
    }
    written.push_back(out_dir / "cumchange.csv");
    svg::write_line_plot(out_dir / "cumchange.svg", plot);
    written.push_back(out_dir / "cumchange.svg");
  }

  auto manifest = open_out(out_dir / "manifest.txt");
  manifest << "# report of " << series_dir.string() << '\n';
  for (const auto& p : written) manifest << p.filename().string() << '\n';
  written.push_back(out_dir / "manifest.txt");
  return written;
}

}  // namespace amorph
