#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "advbench/bench.hpp"
#include "advbench/errors.hpp"
#include "advbench/svg.hpp"
#include "advbench/training.hpp"

namespace fs = std::filesystem;
using namespace advbench;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "benchmark config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "override the config seed");
  cmd->add_option("--out", c.out, "override the output directory");
}

std::pair<BenchConfig, fs::path> load(const Common& c) {
  BenchConfig cfg = load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.out = fs::absolute(c.out).string();
  return {cfg, fs::absolute(c.config).parent_path()};
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("missing result " + p.string() + "; run the attack verb first");
  return json::parse(in);
}

std::vector<json> records_of(const BenchConfig& cfg, const fs::path& base) {
  std::vector<json> out;
  for (const auto& cell : config_cells(cfg)) {
    const fs::path p = base / cfg.out / record_file_name(cell);
    if (fs::exists(p)) out.push_back(read_json(p));
  }
  return out;
}

int cmd_train(const Common& c) {
  auto [cfg, base] = load(c);
  const Workspace ws = prepare(cfg, base);
  std::printf("train %zu / eval %zu examples\n", ws.train.size(), ws.eval.size());
  for (const auto& m : cfg.models)
    std::printf("model   %-20s clean accuracy %.4f\n", m.name.c_str(), clean_accuracy(*ws.models.at(m.name), ws.eval, cfg.seed));
  for (const auto& d : cfg.defenses)
    std::printf("defense %-20s clean accuracy %.4f\n", d.name.c_str(),
                clean_accuracy(*ws.defended.at(d.name), ws.eval, cfg.seed));
  return 0;
}

int cmd_attack(const Common& c, const std::string& cell, bool fresh) {
  auto [cfg, base] = load(c);
  RunOptions opt;
  opt.base_dir = base;
  opt.resume = !fresh;
  if (!cell.empty()) opt.only = parse_cell(cell);
  const BenchmarkResult r = run_benchmark(cfg, opt);
  for (const auto& [name, acc] : r.clean_accuracy) std::printf("clean %-20s %.4f\n", name.c_str(), acc);
  for (std::size_t k = 0; k < r.records.size(); ++k) {
    const auto& rec = r.records[k];
    const RobustnessCurve curve = curve_from_json(rec["curves"][0]);
    std::printf("%-50s area %.4f  -> %s\n", r.files[k].filename().string().c_str(), curve_area(curve),
                r.files[k].string().c_str());
  }
  return 0;
}

int cmd_curve(const Common& c, const std::string& cell_text, const std::string& kind, const std::string& format) {
  auto [cfg, base] = load(c);
  const Cell cell = parse_cell(cell_text);
  const json rec = read_json(base / cfg.out / record_file_name(cell));
  for (const auto& cj : rec["curves"]) {
    if (cj["kind"] != kind) continue;
    if (format == "json") std::cout << cj.dump(2) << "\n";
    else std::cout << curve_to_csv(curve_from_json(cj));
    return 0;
  }
  std::fprintf(stderr, "no %s curve in %s\n", kind.c_str(), record_file_name(cell).c_str());
  return 1;
}

int cmd_plot(const Common& c) {
  auto [cfg, base] = load(c);
  std::map<std::string, std::vector<RobustnessCurve>> groups;
  for (const auto& rec : records_of(cfg, base))
    for (const auto& cj : rec["curves"]) {
      const RobustnessCurve curve = curve_from_json(cj);
      groups[curve.attack + "_" + to_string(curve.norm) + "_" + to_string(curve.goal) + "_" + to_string(curve.kind)]
          .push_back(curve);
    }
  if (groups.empty()) throw ConfigError("no results to plot; run the attack verb first");
  const fs::path dir = base / cfg.out / "plots";
  fs::create_directories(dir);
  for (const auto& [key, curves] : groups) {
    for (PlotMetric m : {PlotMetric::accuracy, PlotMetric::asr}) {
      const fs::path p = dir / (key + (m == PlotMetric::accuracy ? "_acc.svg" : "_asr.svg"));
      std::ofstream(p) << plot_curves(curves, m, key);
      std::printf("%s\n", p.string().c_str());
    }
  }
  return 0;
}

int cmd_report(const Common& c) {
  auto [cfg, base] = load(c);
  const fs::path dir = base / cfg.out;
  std::ostringstream md;
  md << "# Robustness report\n\nseed " << cfg.seed << "\n\n";
  if (fs::exists(dir / "summary.json")) {
    const json s = read_json(dir / "summary.json");
    md << "| defense | clean accuracy |\n|---|---|\n";
    for (const auto& [name, acc] : s["clean_accuracy"].items()) md << "| " << name << " | " << acc.get<double>() << " |\n";
    md << "\n";
  }
  md << "| attack | defense | norm | goal | curve | area | median eps* |\n|---|---|---|---|---|---|---|\n";
  for (const auto& rec : records_of(cfg, base)) {
    std::vector<std::optional<double>> stars;
    for (const auto& o : rec["outcomes"])
      if (o["clean_correct"].get<bool>())
        stars.push_back(o["eps_star"].is_null() ? std::nullopt : std::optional<double>(o["eps_star"].get<double>()));
    std::string med = "-";
    if (!stars.empty()) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.4g", median_min_perturbation(stars));
      med = buf;
    }
    for (const auto& cj : rec["curves"]) {
      const RobustnessCurve curve = curve_from_json(cj);
      char area[32];
      std::snprintf(area, sizeof area, "%.4f", curve_area(curve));
      md << "| " << curve.attack << " | " << curve.defense << " | " << to_string(curve.norm) << " | "
         << to_string(curve.goal) << " | " << to_string(curve.kind) << " | " << area << " | "
         << (curve.kind == CurveKind::budget ? med : "-") << " |\n";
    }
  }
  fs::create_directories(dir);
  std::ofstream(dir / "report.md") << md.str();
  std::cout << md.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adversarial robustness benchmark"};
  app.require_subcommand(1);

  Common train_c, attack_c, curve_c, plot_c, report_c;
  std::string attack_cell, curve_cell, curve_kind = "budget", curve_format = "csv";
  bool fresh = false;

  auto* train = app.add_subcommand("train", "train or load every model and print clean accuracy");
  add_common(train, train_c);
  auto* attack = app.add_subcommand("attack", "run benchmark cells and write result records");
  add_common(attack, attack_c);
  attack->add_option("--cell", attack_cell, "single cell attack:defense:norm:goal");
  attack->add_flag("--fresh", fresh, "ignore existing cell records");
  auto* curve = app.add_subcommand("curve", "print one cell's curve");
  add_common(curve, curve_c);
  curve->add_option("--cell", curve_cell, "attack:defense:norm:goal")->required();
  curve->add_option("--kind", curve_kind, "budget or strength")->check(CLI::IsMember({"budget", "strength"}));
  curve->add_option("--format", curve_format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  auto* plot = app.add_subcommand("plot", "render SVG curve panels from results");
  add_common(plot, plot_c);
  auto* report = app.add_subcommand("report", "write a markdown summary of results");
  add_common(report, report_c);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return cmd_train(train_c);
    if (*attack) return cmd_attack(attack_c, attack_cell, fresh);
    if (*curve) return cmd_curve(curve_c, curve_cell, curve_kind, curve_format);
    if (*plot) return cmd_plot(plot_c);
    if (*report) return cmd_report(report_c);
  } catch (const advbench::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
