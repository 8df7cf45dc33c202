#include "amorph/ablation.hpp"

#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "amorph/errors.hpp"
#include "amorph/svg.hpp"

namespace amorph {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <typename Parse>
auto parse_list(const std::string& value, Parse parse) {
  std::vector<decltype(parse(std::string_view{}))> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse(item));
  }
  return out;
}

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

}  // namespace

std::string_view to_string(CellStatus s) {
  switch (s) {
    case CellStatus::ok: return "ok";
    case CellStatus::skipped: return "skipped";
    case CellStatus::failed: return "failed";
  }
  return "?";
}

AblationGrid parse_grid(const std::string& text) {
  AblationGrid grid;
  std::istringstream in(text);
  std::ostringstream rest;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    std::string body = line.substr(0, line.find('#'));
    const auto eq = body.find('=');
    const std::string key = eq == std::string::npos ? "" : trim(body.substr(0, eq));
    const std::string value = eq == std::string::npos ? "" : trim(body.substr(eq + 1));
    try {
      if (key == "archs") {
        grid.archs = parse_list(value, parse_arch);
        rest << '\n';
        continue;
      }
      if (key == "topologies") {
        grid.topologies = parse_list(value, parse_topology);
        rest << '\n';
        continue;
      }
    } catch (const std::exception& e) {
      throw ParseError(key + ": " + e.what(), number);
    }
    rest << line << '\n';  // blank placeholders keep line numbers aligned
  }
  grid.base = parse_config(rest.str());
  if (grid.archs.empty() || grid.topologies.empty()) throw ParseError("grid needs at least one arch and topology");
  return grid;
}

AblationGrid load_grid(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read grid file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_grid(ss.str());
}

AblationResult ablation_harness(const AblationGrid& grid, const std::filesystem::path& out_dir, std::size_t jobs,
                                std::ostream* log) {
  if (grid.archs.empty() || grid.topologies.empty() || grid.base.seeds.empty()) {
    throw ConfigError("ablation grid is empty");
  }
  std::filesystem::create_directories(out_dir);
  AblationResult result;
  result.curves_csv = out_dir / "curves.csv";
  result.summary_csv = out_dir / "summary.csv";
  result.summary_curves_csv = out_dir / "summary_curves.csv";
  result.plot_svg = out_dir / "curves.svg";

  for (Arch arch : grid.archs) {
    for (TopologyScheme topo : grid.topologies) {
      CellOutcome cell;
      cell.arch = arch;
      cell.topology = topo;
      TrainConfig cfg = grid.base;
      cfg.policy.arch = arch;
      cfg.topology = topo;
      const std::string name = std::string(to_string(arch)) + "_" + std::string(to_string(topo));
      try {
        validate_config(cfg);
      } catch (const std::exception& e) {
        cell.status = CellStatus::skipped;
        cell.message = e.what();
        if (log) *log << "[ablate] " << name << " skipped: " << e.what() << '\n';
        result.cells.push_back(std::move(cell));
        continue;
      }
      try {
        if (log) *log << "[ablate] " << name << " running " << cfg.seeds.size() << " seed(s)\n";
        for (const TrainResult& run : train_seeds(cfg, out_dir / "runs" / name, jobs, log)) {
          CellSeedRun sr;
          sr.seed = cfg.seeds[cell.runs.size()];
          for (const EvalPoint& p : run.curve) {
            sr.steps.push_back(p.step);
            sr.mtrl.push_back(p.result.mtrl_return);
          }
          cell.runs.push_back(std::move(sr));
        }
      } catch (const std::exception& e) {
        cell.status = CellStatus::failed;
        cell.message = e.what();
        cell.runs.clear();
        if (log) *log << "[ablate] " << name << " failed: " << e.what() << '\n';
      }
      if (cell.status == CellStatus::ok && !cell.runs.empty()) {
        cell.steps = cell.runs.front().steps;
        for (std::size_t i = 0; i < cell.steps.size(); ++i) {
          std::vector<double> values;
          for (const auto& r : cell.runs) values.push_back(r.mtrl.at(i));
          ReturnStats s = summarize_returns(values);
          cell.mean.push_back(s.mean);
          cell.std_error.push_back(s.std_error);
        }
        if (!cell.mean.empty()) {
          cell.final_mean = cell.mean.back();
          cell.final_std_error = cell.std_error.back();
        }
      }
      result.cells.push_back(std::move(cell));
    }
  }

  std::ofstream curves(result.curves_csv);
  curves << "arch,topology,seed,step,mtrl_return\n";
  std::ofstream summary(result.summary_csv);
  summary << "arch,topology,status,seeds,final_mean,final_stderr,message\n";
  std::ofstream mean_curves(result.summary_curves_csv);
  mean_curves << "arch,topology,step,mean,stderr\n";
  svg::LinePlot plot;
  plot.title = "MTRL return by topology (mean +- stderr over seeds)";
  plot.x_label = "environment steps per task";
  plot.y_label = "MTRL return";
  for (const CellOutcome& c : result.cells) {
    const std::string a(to_string(c.arch)), t(to_string(c.topology));
    for (const auto& r : c.runs) {
      for (std::size_t i = 0; i < r.steps.size(); ++i) {
        curves << a << ',' << t << ',' << r.seed << ',' << r.steps[i] << ',' << format_double(r.mtrl[i]) << '\n';
      }
    }
    summary << a << ',' << t << ',' << to_string(c.status) << ',' << c.runs.size() << ',';
    if (c.status == CellStatus::ok) {
      summary << format_double(c.final_mean) << ',' << format_double(c.final_std_error);
    } else {
      summary << ',';
    }
    summary << ',' << csv_quote(c.message) << '\n';
    if (c.status != CellStatus::ok) continue;
    svg::Series s;
    s.label = a + "/" + t;
    for (std::size_t i = 0; i < c.steps.size(); ++i) {
      mean_curves << a << ',' << t << ',' << c.steps[i] << ',' << format_double(c.mean[i]) << ','
                  << format_double(c.std_error[i]) << '\n';
      s.x.push_back(static_cast<double>(c.steps[i]));
      s.y.push_back(c.mean[i]);
      s.lower.push_back(c.mean[i] - c.std_error[i]);
      s.upper.push_back(c.mean[i] + c.std_error[i]);
    }
    plot.series.push_back(std::move(s));
  }
  svg::write_line_plot(result.plot_svg, plot);
  return result;
}

}  // namespace amorph
