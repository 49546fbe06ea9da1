#pragma once

#include <map>
#include <string>
#include <vector>

#include "advbench/eval.hpp"

namespace advbench {

struct NamedModel {
  std::string name;
  ModelPtr model;
};

/// Budget curves of every target against examples crafted on `substitute`.
/// Each (example, eps) adversarial input is generated once and reused for
/// all targets. Supports binary_search and per_grid construction.
std::vector<RobustnessCurve> transfer_eval(const ModelPtr& substitute, const std::vector<NamedModel>& targets,
                                           const AttackFamily& attack, const Dataset& ds,
                                           const ThreatSpec& spec, const std::vector<double>& eps_grid,
                                           const CurveOptions& opt = {});

struct RobustnessScore {
  std::string name;
  double area = 0.0;  // white-box curve area
  double clean_accuracy = 0.0;
};

/// Most robust model (area, then clean accuracy) attacks every other model;
/// the runner-up attacks it. Returns target -> substitute. Needs >= 2 models.
std::map<std::string, std::string> select_substitutes(const std::vector<RobustnessScore>& scores);

}  // namespace advbench
