#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "advbench/attack.hpp"
#include "advbench/blackbox.hpp"

namespace advbench {

enum class Knowledge { white, transfer, score, decision };
/// constrained: maximize loss inside the eps-ball. optimized: minimize the
/// perturbation needed for success; eps is ignored while attacking.
enum class Capability { constrained, optimized };

std::string to_string(Knowledge k);
std::string to_string(Capability c);

/// One row of the attack compatibility table.
struct AttackInfo {
  std::string name;
  std::vector<Knowledge> knowledge;
  bool untargeted = true;
  bool targeted = true;
  Capability capability = Capability::constrained;
  bool linf = true;
  bool l2 = true;

  bool supports(Norm n) const { return n == Norm::linf ? linf : l2; }
  bool supports(Goal g) const { return g == Goal::untargeted ? untargeted : targeted; }
  bool has(Knowledge k) const;
};

const std::vector<AttackInfo>& attack_table();
/// Throws ConfigError for unknown names.
const AttackInfo& attack_info(const std::string& name);

struct AttackRequest {
  Tensor x;
  std::size_t goal_label = 0;
  ThreatSpec spec;
  std::uint64_t seed = 0;
  /// Adversarial starting point for decision-based targeted runs.
  std::optional<Tensor> start;
};

class AttackFamily {
 public:
  virtual ~AttackFamily() = default;
  virtual std::string name() const = 0;
  virtual Capability capability() const = 0;
  /// True if targeted runs need a start point classified as the target.
  virtual bool needs_start() const { return false; }
  virtual AttackOutcome run(const ModelPtr& model, const AttackRequest& req) const = 0;
};

using AttackPtr = std::shared_ptr<const AttackFamily>;

/// Builds a registered attack with parameter overrides, e.g.
/// {"iters": 10, "alpha": 0.01}. Black-box attacks get their own oracle
/// with `query_cap` per run. Unknown keys are a ConfigError.
AttackPtr make_attack(const std::string& name, const nlohmann::json& params = nlohmann::json::object(),
                      std::size_t query_cap = kDefaultQueryCap);

/// Adapter for ad-hoc attacks (tests, fixtures).
class FunctionAttack final : public AttackFamily {
 public:
  using Fn = std::function<AttackOutcome(const ModelPtr&, const AttackRequest&)>;
  FunctionAttack(std::string name, Capability cap, Fn fn)
      : name_(std::move(name)), cap_(cap), fn_(std::move(fn)) {}
  std::string name() const override { return name_; }
  Capability capability() const override { return cap_; }
  AttackOutcome run(const ModelPtr& model, const AttackRequest& req) const override {
    return fn_(model, req);
  }

 private:
  std::string name_;
  Capability cap_;
  Fn fn_;
};

/// Returns x unchanged.
AttackPtr identity_attack();

}  // namespace advbench
