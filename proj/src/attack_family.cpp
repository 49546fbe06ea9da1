#include "advbench/attack_family.hpp"

#include <algorithm>
#include <set>

#include "advbench/errors.hpp"
#include "advbench/whitebox.hpp"

namespace advbench {

using nlohmann::json;

std::string to_string(Knowledge k) {
  switch (k) {
    case Knowledge::white: return "white";
    case Knowledge::transfer: return "transfer";
    case Knowledge::score: return "score";
    case Knowledge::decision: return "decision";
  }
  return "?";
}

std::string to_string(Capability c) {
  return c == Capability::constrained ? "constrained" : "optimized";
}

bool AttackInfo::has(Knowledge k) const {
  return std::find(knowledge.begin(), knowledge.end(), k) != knowledge.end();
}

const std::vector<AttackInfo>& attack_table() {
  using K = Knowledge;
  using C = Capability;
  static const std::vector<AttackInfo> table = {
      {"fgsm", {K::white, K::transfer}, true, true, C::constrained, true, true},
      {"bim", {K::white, K::transfer}, true, true, C::constrained, true, true},
      {"mim", {K::white, K::transfer}, true, true, C::constrained, true, true},
      {"deepfool", {K::white}, true, false, C::optimized, true, true},
      {"cw", {K::white}, true, true, C::optimized, false, true},
      {"dim", {K::transfer}, true, true, C::constrained, true, true},
      {"zoo", {K::score}, true, true, C::optimized, false, true},
      {"nes", {K::score}, true, true, C::constrained, true, true},
      {"spsa", {K::score}, true, true, C::constrained, true, true},
      {"nattack", {K::score}, true, true, C::constrained, true, true},
      {"boundary", {K::decision}, true, true, C::optimized, false, true},
      {"evolutionary", {K::decision}, true, true, C::optimized, false, true},
  };
  return table;
}

const AttackInfo& attack_info(const std::string& name) {
  for (const auto& row : attack_table())
    if (row.name == name) return row;
  throw ConfigError("unknown attack '" + name + "'");
}

namespace {

// Reads overrides into a parameter struct, rejecting unknown keys.
class ParamReader {
 public:
  ParamReader(const std::string& attack, const json& j) : attack_(attack), j_(j) {
    if (!j_.is_object()) throw ConfigError("parameters of '" + attack + "' must be an object");
  }
  template <class T>
  void get(const char* key, T& field) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      field = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("bad value for " + attack_ + "." + key + ": " + e.what());
    }
  }
  void get_loss(LossKind& field) {
    std::string s = to_string(field);
    get("loss", s);
    field = loss_kind_from_string(s);
  }
  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("unknown parameter '" + k + "' for attack '" + attack_ + "'");
  }

 private:
  std::string attack_;
  const json& j_;
  std::set<std::string> seen_;
};

template <class Params, class Fn>
class WhiteFamily final : public AttackFamily {
 public:
  WhiteFamily(std::string name, Capability cap, Params p, Fn fn)
      : name_(std::move(name)), cap_(cap), params_(p), fn_(fn) {}
  std::string name() const override { return name_; }
  Capability capability() const override { return cap_; }
  AttackOutcome run(const ModelPtr& model, const AttackRequest& req) const override {
    Params p = params_;
    p.seed = req.seed;
    return fn_(*model, req.x, req.spec, req.goal_label, p);
  }

 private:
  std::string name_;
  Capability cap_;
  Params params_;
  Fn fn_;
};

template <class Params, class Fn>
class QueryFamily final : public AttackFamily {
 public:
  QueryFamily(std::string name, Capability cap, QueryMode mode, std::size_t query_cap, Params p, Fn fn,
              bool needs_start)
      : name_(std::move(name)), cap_(cap), mode_(mode), query_cap_(query_cap), params_(p), fn_(fn),
        needs_start_(needs_start) {}
  std::string name() const override { return name_; }
  Capability capability() const override { return cap_; }
  bool needs_start() const override { return needs_start_; }
  AttackOutcome run(const ModelPtr& model, const AttackRequest& req) const override {
    Params p = params_;
    p.seed = req.seed;
    if constexpr (requires { p.start; }) {
      if (req.start) p.start = req.start;
    }
    QueryOracle oracle(model, mode_, query_cap_, derive_seed(req.seed, 0x6f7261636c65ULL));
    return fn_(oracle, req.x, req.spec, req.goal_label, p);
  }

 private:
  std::string name_;
  Capability cap_;
  QueryMode mode_;
  std::size_t query_cap_;
  Params params_;
  Fn fn_;
  bool needs_start_;
};

template <class Params, class Fn>
AttackPtr white(const std::string& name, Capability cap, Params p, Fn fn) {
  return std::make_shared<WhiteFamily<Params, Fn>>(name, cap, p, fn);
}

template <class Params, class Fn>
AttackPtr query(const std::string& name, Capability cap, QueryMode mode, std::size_t query_cap, Params p,
                Fn fn, bool needs_start = false) {
  return std::make_shared<QueryFamily<Params, Fn>>(name, cap, mode, query_cap, p, fn, needs_start);
}

}  // namespace

AttackPtr make_attack(const std::string& name, const json& params, std::size_t query_cap) {
  const AttackInfo& info = attack_info(name);
  const json overrides = params.is_null() ? json::object() : params;
  ParamReader r(name, overrides);
  AttackPtr out;
  if (name == "fgsm") {
    FgsmParams p;
    r.get_loss(p.loss);
    out = white(name, info.capability, p, fgsm);
  } else if (name == "bim") {
    BimParams p;
    r.get("iters", p.iters);
    r.get("alpha", p.alpha);
    r.get("early_stop", p.early_stop);
    r.get_loss(p.loss);
    out = white(name, info.capability, p, bim);
  } else if (name == "mim") {
    MimParams p;
    r.get("iters", p.iters);
    r.get("alpha", p.alpha);
    r.get("mu", p.mu);
    r.get("early_stop", p.early_stop);
    r.get_loss(p.loss);
    out = white(name, info.capability, p, mim);
  } else if (name == "dim") {
    DimParams p;
    r.get("iters", p.iters);
    r.get("alpha", p.alpha);
    r.get("mu", p.mu);
    r.get("transform_prob", p.transform_prob);
    r.get_loss(p.loss);
    out = white(name, info.capability, p, dim);
  } else if (name == "deepfool") {
    DeepFoolParams p;
    r.get("max_iters", p.max_iters);
    r.get("overshoot", p.overshoot);
    out = white(name, info.capability, p, deepfool);
  } else if (name == "cw") {
    CwParams p;
    r.get("opt_iters", p.opt_iters);
    r.get("c_search_steps", p.c_search_steps);
    r.get("c_init", p.c_init);
    r.get("learning_rate", p.learning_rate);
    out = white(name, info.capability, p, cw);
  } else if (name == "nes" || name == "spsa") {
    ScoreAttackParams p;
    p.estimator = name == "nes" ? Estimator::nes : Estimator::spsa;
    r.get("iters", p.iters);
    r.get("alpha", p.alpha);
    r.get("sigma", p.sigma);
    r.get("q", p.q);
    out = query(name, info.capability, QueryMode::scores, query_cap, p, score_attack);
  } else if (name == "zoo") {
    ZooParams p;
    r.get("iters", p.iters);
    r.get("sigma", p.sigma);
    r.get("step", p.step);
    r.get("c", p.c);
    out = query(name, info.capability, QueryMode::scores, query_cap, p, zoo);
  } else if (name == "nattack") {
    NattackParams p;
    r.get("iters", p.iters);
    r.get("sigma", p.sigma);
    r.get("lr", p.lr);
    r.get("samples", p.samples);
    out = query(name, info.capability, QueryMode::scores, query_cap, p, nattack);
  } else if (name == "boundary") {
    BoundaryParams p;
    r.get("iters", p.iters);
    r.get("spherical_step", p.spherical_step);
    r.get("source_step", p.source_step);
    r.get("step_adaptation", p.step_adaptation);
    r.get("init_draws", p.init_draws);
    out = query(name, info.capability, QueryMode::labels, query_cap, p, boundary, true);
  } else if (name == "evolutionary") {
    EvolutionaryParams p;
    r.get("iters", p.iters);
    r.get("mu", p.mu);
    r.get("sigma_scale", p.sigma_scale);
    r.get("c_c", p.c_c);
    r.get("c_cov", p.c_cov);
    r.get("select_fraction", p.select_fraction);
    r.get("downscale", p.downscale);
    r.get("init_draws", p.init_draws);
    out = query(name, info.capability, QueryMode::labels, query_cap, p, evolutionary, true);
  }
  r.finish();
  return out;
}

AttackPtr identity_attack() {
  return std::make_shared<FunctionAttack>(
      "identity", Capability::constrained, [](const ModelPtr& model, const AttackRequest& req) {
        Rng rng(req.seed);
        return make_outcome(*model, req.x, req.x, req.spec.norm, req.spec.goal, req.goal_label, rng);
      });
}

}  // namespace advbench
