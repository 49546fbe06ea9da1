#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "advbench/attack_family.hpp"
#include "advbench/data.hpp"
#include "advbench/defenses.hpp"
#include "advbench/eval.hpp"

namespace advbench {

struct DatasetConfig {
  std::string kind = "synthetic";  // idx | csv | synthetic
  std::string images, labels;      // idx
  std::string path;                // csv
  std::string synthetic = "two_gaussians";
  std::size_t n = 400;             // synthetic size
  std::size_t limit = 0;           // 0 keeps every example
  std::size_t train = 0;           // 0 selects 80%
  bool operator==(const DatasetConfig&) const = default;
};

struct AdvTrainSpec {
  Norm norm = Norm::linf;
  double eps = 0.0;
  std::size_t iters = 7;
  double alpha = 0.0;
  bool operator==(const AdvTrainSpec&) const = default;
};

struct ModelConfig {
  std::string name;
  std::string arch = "mlp:64";
  std::size_t epochs = 5;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double noise = 0.0;
  std::optional<AdvTrainSpec> adversarial;
  bool operator==(const ModelConfig&) const = default;
};

struct TransformConfig {
  std::string name;  // bit_depth | jpeg | resize_pad
  int bits = 4;
  int quality = 75;
  bool operator==(const TransformConfig&) const = default;
};

struct DefenseConfig {
  std::string name;
  std::string model;                  // base model, unless ensemble is set
  std::vector<std::string> ensemble;  // member model names
  std::vector<TransformConfig> transforms;
  double noise_sigma = 0.0;
  std::size_t noise_k = 10;
  /// White-box attacks see BPDA/EOT gradients when set.
  bool adaptive = true;
  bool operator==(const DefenseConfig&) const = default;
};

struct AttackConfig {
  std::string name;
  nlohmann::json params = nlohmann::json::object();
  Knowledge knowledge = Knowledge::white;
  std::vector<Norm> norms;  // empty: the global list
  std::vector<Goal> goals;
  std::string substitute;   // transfer only; empty selects automatically
  bool operator==(const AttackConfig&) const = default;
};

struct StrengthConfig {
  bool enabled = false;
  double eps_linf = 0.1;
  double eps_l2 = 1.0;
  std::vector<double> iterations = {0, 1, 2, 5, 10, 20};
  std::vector<double> queries = {0, 1000, 2000, 5000, 10000, 20000};
  bool operator==(const StrengthConfig&) const = default;
};

struct BenchConfig {
  std::uint64_t seed = 0;
  DatasetConfig dataset;
  std::vector<ModelConfig> models;
  std::vector<DefenseConfig> defenses;
  std::vector<AttackConfig> attacks;
  std::vector<Norm> norms = {Norm::linf};
  std::vector<Goal> goals = {Goal::untargeted};
  std::vector<double> eps_grid_linf;
  std::vector<double> eps_grid_l2;
  std::string method = "auto";  // auto | counting | binary_search | per_grid
  StrengthConfig strength;
  std::size_t eot_samples = 10;
  std::size_t query_cap = kDefaultQueryCap;
  std::size_t eval_examples = 100;
  std::string out = "results";
  std::size_t workers = 1;
  bool operator==(const BenchConfig&) const = default;

  const std::vector<double>& eps_grid(Norm n) const { return n == Norm::linf ? eps_grid_linf : eps_grid_l2; }
};

/// Parses and validates; unknown keys and incompatible cells are ConfigError.
BenchConfig parse_config(const nlohmann::json& j);
BenchConfig load_config(const std::filesystem::path& path);
/// Normalized form with every default filled in; parse_config inverts it.
nlohmann::json config_to_json(const BenchConfig& c);

struct Cell {
  std::string attack;
  std::string defense;
  Norm norm = Norm::linf;
  Goal goal = Goal::untargeted;
  bool operator==(const Cell&) const = default;
};

std::string cell_id(const Cell& c);
/// "attack:defense:norm:goal"
Cell parse_cell(const std::string& text);
/// Every attack x defense x norm x goal cell of the config, in config order.
std::vector<Cell> config_cells(const BenchConfig& c);
/// Throws ConfigError when the attack cannot run in this cell.
void check_compatible(const std::string& attack, Knowledge knowledge, Norm norm, Goal goal);

/// Data, trained models and defenses of one config.
struct Workspace {
  Dataset train;
  Dataset eval;
  std::map<std::string, std::shared_ptr<const Classifier>> models;
  std::map<std::string, ModelPtr> defended;
  std::map<std::string, ModelPtr> gradient_view;
};

Dataset load_dataset(const DatasetConfig& dc, std::uint64_t seed, const std::filesystem::path& base_dir);
/// Loads the dataset, trains (or loads cached) models and builds defenses.
Workspace prepare(const BenchConfig& c, const std::filesystem::path& base_dir, bool use_cache = true);

struct RunOptions {
  std::optional<Cell> only;
  bool resume = true;
  std::filesystem::path base_dir = ".";
};

struct BenchmarkResult {
  std::map<std::string, double> clean_accuracy;  // per defense
  std::vector<nlohmann::json> records;           // one per cell, in cell order
  std::vector<std::filesystem::path> files;
};

/// Runs every cell (or one) and writes cell records under c.out. Wall-clock
/// times go to timing.json, never into records.
BenchmarkResult run_benchmark(const BenchConfig& c, const RunOptions& opt = {});

/// Record of one cell: version, cell, config, seed, outcomes, curves.
nlohmann::json run_cell(const BenchConfig& c, const Workspace& ws, const Cell& cell, std::size_t workers);

std::string record_file_name(const Cell& cell);

}  // namespace advbench
