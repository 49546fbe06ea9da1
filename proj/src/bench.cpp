#include "advbench/bench.hpp"

#include <chrono>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

#include "advbench/errors.hpp"
#include "advbench/model_io.hpp"
#include "advbench/training.hpp"
#include "advbench/transfer.hpp"

namespace advbench {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Strict object reader: every key must be consumed.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + " must be an object");
  }
  bool has(const char* key) const { return j_.contains(key); }
  template <class T>
  void opt(const char* key, T& field) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      field = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }
  const json& req(const char* key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw ConfigError(where_ + " is missing '" + key + "'");
    return j_.at(key);
  }
  const json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }
  void done() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("unknown key '" + k + "' in " + where_);
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

std::vector<Norm> norms_of(const json& j, const std::string& where) {
  std::vector<Norm> out;
  if (!j.is_array()) throw ConfigError(where + " must be a list");
  for (const auto& v : j) {
    try {
      out.push_back(norm_from_string(v.get<std::string>()));
    } catch (const std::exception& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
  return out;
}

std::vector<Goal> goals_of(const json& j, const std::string& where) {
  std::vector<Goal> out;
  if (!j.is_array()) throw ConfigError(where + " must be a list");
  for (const auto& v : j) {
    try {
      out.push_back(goal_from_string(v.get<std::string>()));
    } catch (const std::exception& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
  return out;
}

Knowledge knowledge_from_string(const std::string& s) {
  if (s == "white") return Knowledge::white;
  if (s == "transfer") return Knowledge::transfer;
  if (s == "score") return Knowledge::score;
  if (s == "decision") return Knowledge::decision;
  throw ConfigError("unknown knowledge '" + s + "'");
}

// 0, 1/d, 2/d, ... n/d
std::vector<double> grid_over(std::size_t n, double d) {
  std::vector<double> v(n + 1);
  for (std::size_t i = 0; i <= n; ++i) v[i] = static_cast<double>(i) / d;
  return v;
}

json norms_json(const std::vector<Norm>& v) {
  json a = json::array();
  for (Norm n : v) a.push_back(to_string(n));
  return a;
}

json goals_json(const std::vector<Goal>& v) {
  json a = json::array();
  for (Goal g : v) a.push_back(to_string(g));
  return a;
}

}  // namespace

void check_compatible(const std::string& attack, Knowledge knowledge, Norm norm, Goal goal) {
  const AttackInfo& info = attack_info(attack);
  if (!info.has(knowledge))
    throw ConfigError("attack '" + attack + "' does not support " + to_string(knowledge) +
                      " knowledge (attack compatibility table)");
  if (!info.supports(norm))
    throw ConfigError("attack '" + attack + "' does not support the " + to_string(norm) +
                      " distance (attack compatibility table)");
  if (!info.supports(goal))
    throw ConfigError("attack '" + attack + "' does not support " + to_string(goal) +
                      " goals (attack compatibility table)");
}

BenchConfig parse_config(const json& j) {
  BenchConfig c;
  Reader r(j, "config");
  r.opt("seed", c.seed);
  if (const json* d = r.sub("dataset")) {
    Reader rd(*d, "dataset");
    rd.opt("kind", c.dataset.kind);
    rd.opt("images", c.dataset.images);
    rd.opt("labels", c.dataset.labels);
    rd.opt("path", c.dataset.path);
    rd.opt("synthetic", c.dataset.synthetic);
    rd.opt("n", c.dataset.n);
    rd.opt("limit", c.dataset.limit);
    rd.opt("train", c.dataset.train);
    rd.done();
    if (c.dataset.kind != "idx" && c.dataset.kind != "csv" && c.dataset.kind != "synthetic")
      throw ConfigError("dataset.kind must be idx, csv or synthetic");
    if (c.dataset.kind == "idx" && (c.dataset.images.empty() || c.dataset.labels.empty()))
      throw ConfigError("idx datasets need 'images' and 'labels'");
    if (c.dataset.kind == "csv" && c.dataset.path.empty()) throw ConfigError("csv datasets need 'path'");
    if (c.dataset.kind == "synthetic") {
      try {
        synthetic_kind_from_string(c.dataset.synthetic);
      } catch (const std::exception& e) {
        throw ConfigError(e.what());
      }
    }
  }

  std::set<std::string> model_names;
  if (const json* ms = r.sub("models")) {
    if (!ms->is_array()) throw ConfigError("models must be a list");
    for (const auto& mj : *ms) {
      ModelConfig m;
      Reader rm(mj, "model");
      m.name = rm.req("name").get<std::string>();
      rm.opt("arch", m.arch);
      rm.opt("epochs", m.epochs);
      rm.opt("batch_size", m.batch_size);
      rm.opt("learning_rate", m.learning_rate);
      rm.opt("noise", m.noise);
      if (const json* aj = rm.sub("adversarial")) {
        AdvTrainSpec a;
        Reader ra(*aj, "model " + m.name + ".adversarial");
        std::string norm = to_string(a.norm);
        ra.opt("norm", norm);
        a.norm = norm_from_string(norm);
        ra.opt("eps", a.eps);
        ra.opt("iters", a.iters);
        ra.opt("alpha", a.alpha);
        ra.done();
        if (a.eps < 0.0) throw ConfigError("adversarial eps must be nonnegative");
        m.adversarial = a;
      }
      rm.done();
      if (!model_names.insert(m.name).second) throw ConfigError("duplicate model '" + m.name + "'");
      c.models.push_back(std::move(m));
    }
  }

  std::set<std::string> defense_names;
  auto require_model = [&](const std::string& name, const std::string& where) {
    if (!model_names.count(name)) throw ConfigError(where + " refers to unknown model '" + name + "'");
  };
  if (const json* ds = r.sub("defenses")) {
    if (!ds->is_array()) throw ConfigError("defenses must be a list");
    for (const auto& dj : *ds) {
      DefenseConfig d;
      Reader rd(dj, "defense");
      d.name = rd.req("name").get<std::string>();
      rd.opt("model", d.model);
      rd.opt("ensemble", d.ensemble);
      rd.opt("adaptive", d.adaptive);
      if (const json* ts = rd.sub("transforms")) {
        if (!ts->is_array()) throw ConfigError("transforms must be a list");
        for (const auto& tj : *ts) {
          TransformConfig t;
          Reader rt(tj, "transform");
          t.name = rt.req("name").get<std::string>();
          rt.opt("bits", t.bits);
          rt.opt("quality", t.quality);
          rt.done();
          if (t.name != "bit_depth" && t.name != "jpeg" && t.name != "resize_pad")
            throw ConfigError("unknown transform '" + t.name + "'");
          if (t.bits < 1 || t.bits > 8) throw ConfigError("bit_depth bits must lie in [1,8]");
          if (t.quality < 1 || t.quality > 100) throw ConfigError("jpeg quality must lie in [1,100]");
          d.transforms.push_back(t);
        }
      }
      if (const json* nj = rd.sub("noise")) {
        Reader rn(*nj, "defense " + d.name + ".noise");
        rn.opt("sigma", d.noise_sigma);
        rn.opt("k", d.noise_k);
        rn.done();
        if (d.noise_sigma < 0.0 || d.noise_k < 1) throw ConfigError("noise needs sigma >= 0 and k >= 1");
      }
      rd.done();
      if (d.model.empty() == d.ensemble.empty())
        throw ConfigError("defense '" + d.name + "' needs exactly one of 'model' or 'ensemble'");
      if (!d.model.empty()) require_model(d.model, "defense '" + d.name + "'");
      for (const auto& m : d.ensemble) require_model(m, "defense '" + d.name + "'");
      if (!defense_names.insert(d.name).second) throw ConfigError("duplicate defense '" + d.name + "'");
      c.defenses.push_back(std::move(d));
    }
  }

  if (const json* ns = r.sub("norms")) c.norms = norms_of(*ns, "norms");
  if (const json* gs = r.sub("goals")) c.goals = goals_of(*gs, "goals");

  if (const json* as = r.sub("attacks")) {
    if (!as->is_array()) throw ConfigError("attacks must be a list");
    for (const auto& aj : *as) {
      AttackConfig a;
      Reader ra(aj, "attack");
      a.name = ra.req("name").get<std::string>();
      const AttackInfo& info = attack_info(a.name);
      a.knowledge = info.knowledge.front();
      std::string k = to_string(a.knowledge);
      ra.opt("knowledge", k);
      a.knowledge = knowledge_from_string(k);
      if (const json* p = ra.sub("params")) a.params = *p;
      // transfer runs of the iterative attacks default to 10 iterations
      if (a.knowledge == Knowledge::transfer && (a.name == "bim" || a.name == "mim" || a.name == "dim") &&
          a.params.is_object() && !a.params.contains("iters"))
        a.params["iters"] = 10;
      if (const json* ns = ra.sub("norms")) a.norms = norms_of(*ns, "attack norms");
      if (const json* gs = ra.sub("goals")) a.goals = goals_of(*gs, "attack goals");
      ra.opt("substitute", a.substitute);
      ra.done();
      if (!a.substitute.empty() && a.knowledge != Knowledge::transfer)
        throw ConfigError("attack '" + a.name + "' sets a substitute but is not a transfer attack");
      if (!a.substitute.empty() && !defense_names.count(a.substitute))
        throw ConfigError("unknown substitute defense '" + a.substitute + "'");
      make_attack(a.name, a.params);  // rejects bad parameters early
      for (Norm n : a.norms.empty() ? c.norms : a.norms)
        for (Goal g : a.goals.empty() ? c.goals : a.goals) check_compatible(a.name, a.knowledge, n, g);
      for (const auto& prev : c.attacks)
        if (prev.name == a.name) throw ConfigError("attack '" + a.name + "' listed twice; cells are keyed by name");
      c.attacks.push_back(std::move(a));
    }
  }

  c.eps_grid_linf = grid_over(12, 40.0);
  c.eps_grid_l2 = grid_over(16, 4.0);
  if (const json* g = r.sub("eps_grid")) {
    Reader rg(*g, "eps_grid");
    rg.opt("linf", c.eps_grid_linf);
    rg.opt("l2", c.eps_grid_l2);
    rg.done();
  }
  try {
    validate_grid(c.eps_grid_linf, "linf eps");
    validate_grid(c.eps_grid_l2, "l2 eps");
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  r.opt("method", c.method);
  if (c.method != "auto") budget_method_from_string(c.method);

  if (const json* s = r.sub("strength")) {
    Reader rs(*s, "strength");
    c.strength.enabled = true;
    rs.opt("enabled", c.strength.enabled);
    rs.opt("eps_linf", c.strength.eps_linf);
    rs.opt("eps_l2", c.strength.eps_l2);
    rs.opt("iterations", c.strength.iterations);
    rs.opt("queries", c.strength.queries);
    rs.done();
    try {
      validate_grid(c.strength.iterations, "strength iterations");
      validate_grid(c.strength.queries, "strength queries");
    } catch (const InvalidInput& e) {
      throw ConfigError(e.what());
    }
  }
  r.opt("eot_samples", c.eot_samples);
  r.opt("query_cap", c.query_cap);
  r.opt("eval_examples", c.eval_examples);
  r.opt("out", c.out);
  r.opt("workers", c.workers);
  r.done();
  if (c.eot_samples < 1) throw ConfigError("eot_samples must be >= 1");
  if (c.query_cap < 1) throw ConfigError("query_cap must be >= 1");
  if (c.eval_examples < 1) throw ConfigError("eval_examples must be >= 1");
  if (c.workers < 1) throw ConfigError("workers must be >= 1");
  if (!c.attacks.empty() && c.defenses.empty()) throw ConfigError("attacks need at least one defense");
  return c;
}

BenchConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

json config_to_json(const BenchConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["dataset"] = {{"kind", c.dataset.kind},   {"images", c.dataset.images}, {"labels", c.dataset.labels},
                  {"path", c.dataset.path},   {"synthetic", c.dataset.synthetic},
                  {"n", c.dataset.n},         {"limit", c.dataset.limit},   {"train", c.dataset.train}};
  j["models"] = json::array();
  for (const auto& m : c.models) {
    json mj = {{"name", m.name},         {"arch", m.arch},
               {"epochs", m.epochs},     {"batch_size", m.batch_size},
               {"learning_rate", m.learning_rate}, {"noise", m.noise}};
    if (m.adversarial)
      mj["adversarial"] = {{"norm", to_string(m.adversarial->norm)},
                           {"eps", m.adversarial->eps},
                           {"iters", m.adversarial->iters},
                           {"alpha", m.adversarial->alpha}};
    j["models"].push_back(mj);
  }
  j["defenses"] = json::array();
  for (const auto& d : c.defenses) {
    json dj = {{"name", d.name}, {"adaptive", d.adaptive}, {"noise", {{"sigma", d.noise_sigma}, {"k", d.noise_k}}}};
    if (!d.model.empty()) dj["model"] = d.model;
    if (!d.ensemble.empty()) dj["ensemble"] = d.ensemble;
    dj["transforms"] = json::array();
    for (const auto& t : d.transforms)
      dj["transforms"].push_back({{"name", t.name}, {"bits", t.bits}, {"quality", t.quality}});
    j["defenses"].push_back(dj);
  }
  j["attacks"] = json::array();
  for (const auto& a : c.attacks) {
    json aj = {{"name", a.name}, {"params", a.params}, {"knowledge", to_string(a.knowledge)}};
    if (!a.norms.empty()) aj["norms"] = norms_json(a.norms);
    if (!a.goals.empty()) aj["goals"] = goals_json(a.goals);
    if (!a.substitute.empty()) aj["substitute"] = a.substitute;
    j["attacks"].push_back(aj);
  }
  j["norms"] = norms_json(c.norms);
  j["goals"] = goals_json(c.goals);
  j["eps_grid"] = {{"linf", c.eps_grid_linf}, {"l2", c.eps_grid_l2}};
  j["method"] = c.method;
  j["strength"] = {{"enabled", c.strength.enabled},       {"eps_linf", c.strength.eps_linf},
                   {"eps_l2", c.strength.eps_l2},         {"iterations", c.strength.iterations},
                   {"queries", c.strength.queries}};
  j["eot_samples"] = c.eot_samples;
  j["query_cap"] = c.query_cap;
  j["eval_examples"] = c.eval_examples;
  j["out"] = c.out;
  j["workers"] = c.workers;
  return j;
}

// ---------------------------------------------------------------------------

std::string cell_id(const Cell& c) {
  return c.attack + ":" + c.defense + ":" + to_string(c.norm) + ":" + to_string(c.goal);
}

Cell parse_cell(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string p;
  while (std::getline(ss, p, ':')) parts.push_back(p);
  if (parts.size() != 4) throw ConfigError("cell must look like attack:defense:norm:goal, got '" + text + "'");
  try {
    return {parts[0], parts[1], norm_from_string(parts[2]), goal_from_string(parts[3])};
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("bad cell '") + text + "': " + e.what());
  }
}

std::vector<Cell> config_cells(const BenchConfig& c) {
  std::vector<Cell> cells;
  for (const auto& a : c.attacks)
    for (const auto& d : c.defenses)
      for (Norm n : a.norms.empty() ? c.norms : a.norms)
        for (Goal g : a.goals.empty() ? c.goals : a.goals) cells.push_back({a.name, d.name, n, g});
  return cells;
}

std::string record_file_name(const Cell& c) {
  return "cell-" + c.attack + "_" + c.defense + "_" + to_string(c.norm) + "_" + to_string(c.goal) + ".json";
}

// ---------------------------------------------------------------------------

Dataset load_dataset(const DatasetConfig& dc, std::uint64_t seed, const fs::path& base_dir) {
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base_dir / p; };
  Dataset ds;
  if (dc.kind == "idx") ds = load_idx(resolve(dc.images), resolve(dc.labels));
  else if (dc.kind == "csv") ds = load_csv(resolve(dc.path));
  else ds = gen_synthetic(synthetic_kind_from_string(dc.synthetic), dc.n, derive_seed(seed, 0x64617461ULL));
  if (dc.limit > 0) ds = head(ds, dc.limit);
  return ds;
}

namespace {

json model_cache_key(const BenchConfig& c, const ModelConfig& m) {
  const json full = config_to_json(c);
  json key = {{"dataset", full["dataset"]}, {"seed", c.seed}};
  for (const auto& mj : full["models"])
    if (mj["name"] == m.name) key["model"] = mj;
  return key;
}

Classifier train_model(const ModelConfig& m, const Dataset& train, std::uint64_t seed) {
  const std::uint64_t s = derive_seed(seed, name_stream(m.name));
  Classifier init = make_classifier(m.arch, train.input_shape, train.num_classes, derive_seed(s, 1));
  TrainConfig tc;
  tc.epochs = m.epochs;
  tc.batch_size = m.batch_size;
  tc.learning_rate = m.learning_rate;
  tc.input_noise = m.noise;
  tc.seed = s;
  if (m.adversarial) {
    AdvTrainConfig adv;
    adv.spec = {m.adversarial->norm, Goal::untargeted, m.adversarial->eps};
    adv.attack_iters = m.adversarial->iters;
    adv.alpha = m.adversarial->alpha;
    return adversarial_train(std::move(init), train, tc, adv).model;
  }
  return train_classifier(std::move(init), train, tc).model;
}

TransformPtr make_transform(const TransformConfig& t) {
  if (t.name == "bit_depth") return std::make_shared<BitDepthTransform>(t.bits);
  if (t.name == "jpeg") return std::make_shared<JpegTransform>(t.quality);
  return std::make_shared<ResizePadTransform>();
}

}  // namespace

Workspace prepare(const BenchConfig& c, const fs::path& base_dir, bool use_cache) {
  Workspace ws;
  Dataset all = load_dataset(c.dataset, c.seed, base_dir);
  if (all.size() < 2) throw ConfigError("dataset needs at least two examples");
  const std::size_t n_train = c.dataset.train > 0 ? c.dataset.train : all.size() * 4 / 5;
  if (n_train >= all.size()) throw ConfigError("train split leaves no evaluation examples");
  auto [train, rest] = split_dataset(all, n_train, derive_seed(c.seed, 0x73706c6974ULL));
  ws.train = std::move(train);
  ws.eval = assign_targets(head(rest, c.eval_examples), derive_seed(c.seed, 0x74677473ULL));

  const fs::path model_dir = base_dir / c.out / "models";
  for (const auto& m : c.models) {
    const fs::path bin = model_dir / (m.name + ".advb");
    const fs::path key_path = model_dir / (m.name + ".key.json");
    const std::string key = model_cache_key(c, m).dump();
    std::shared_ptr<const Classifier> model;
    if (use_cache && fs::exists(bin) && fs::exists(key_path)) {
      const auto bytes = read_file_bytes(key_path);
      if (std::string(bytes.begin(), bytes.end()) == key) model = std::make_shared<Classifier>(load_model(bin));
    }
    if (!model) {
      model = std::make_shared<Classifier>(train_model(m, ws.train, c.seed));
      if (use_cache) {
        fs::create_directories(model_dir);
        save_model(*model, bin);
        write_file_bytes(key_path, std::vector<std::uint8_t>(key.begin(), key.end()));
      }
    }
    ws.models[m.name] = model;
  }

  for (const auto& d : c.defenses) {
    ModelPtr base;
    if (!d.ensemble.empty()) {
      std::vector<ModelPtr> members;
      for (const auto& name : d.ensemble) members.push_back(ws.models.at(name));
      base = std::make_shared<EnsembleModel>(members);
    } else {
      base = ws.models.at(d.model);
    }
    if (d.noise_sigma > 0.0) base = std::make_shared<NoiseEnsembleModel>(base, d.noise_sigma, d.noise_k);
    ModelPtr defended = base;
    ModelPtr view = base;
    if (!d.transforms.empty()) {
      std::vector<TransformPtr> pipeline;
      for (const auto& t : d.transforms) pipeline.push_back(make_transform(t));
      auto tm = std::make_shared<TransformedModel>(base, pipeline);
      defended = tm;
      view = tm;
      const bool shattered =
          std::any_of(pipeline.begin(), pipeline.end(), [](const auto& t) { return !t->differentiable(); });
      if (d.adaptive && shattered) view = wrap_bpda(tm);
    }
    if (d.adaptive && defended->stochastic())
      view = wrap_eot(view, c.eot_samples, derive_seed(c.seed, 0x656f74ULL));
    ws.defended[d.name] = defended;
    ws.gradient_view[d.name] = view;
  }
  return ws;
}

// ---------------------------------------------------------------------------

namespace {

const AttackConfig& attack_config(const BenchConfig& c, const std::string& name) {
  for (const auto& a : c.attacks)
    if (a.name == name) return a;
  throw ConfigError("attack '" + name + "' is not in the config");
}

json outcome_json(std::size_t i, const LabeledExample& ex, const ExampleResult& r) {
  json o = {{"index", i},
            {"label", ex.label},
            {"target", ex.target ? json(*ex.target) : json(nullptr)},
            {"clean_correct", r.clean_correct},
            {"eps_star", r.eps_star ? json(*r.eps_star) : json(nullptr)},
            {"success", r.outcome.success},
            {"pert_norm", r.outcome.pert_norm},
            {"iterations", r.outcome.iterations_used},
            {"queries", r.outcome.queries_used},
            {"termination", to_string(r.outcome.termination)}};
  return o;
}

std::string choose_substitute(const BenchConfig& c, const Workspace& ws, const AttackConfig& a, const Cell& cell) {
  if (!a.substitute.empty()) {
    if (a.substitute == cell.defense) throw ConfigError("a transfer target cannot be its own substitute");
    return a.substitute;
  }
  if (c.defenses.size() < 2) throw ConfigError("transfer cells need at least two defenses");
  const AttackPtr probe = make_attack("bim");
  const ThreatSpec spec{cell.norm, cell.goal, 0.0};
  std::vector<RobustnessScore> scores;
  for (const auto& d : c.defenses) {
    CurveOptions opt;
    opt.seed = c.seed;
    const auto curve = curve_budget(ws.gradient_view.at(d.name), *probe, ws.eval, spec, c.eps_grid(cell.norm), opt);
    scores.push_back({d.name, curve_area(curve), curve.points.front().acc});
  }
  return select_substitutes(scores).at(cell.defense);
}

}  // namespace

json run_cell(const BenchConfig& c, const Workspace& ws, const Cell& cell, std::size_t workers) {
  const AttackConfig& a = attack_config(c, cell.attack);
  check_compatible(a.name, a.knowledge, cell.norm, cell.goal);
  if (!ws.defended.count(cell.defense)) throw ConfigError("unknown defense '" + cell.defense + "'");
  const AttackPtr attack = make_attack(a.name, a.params, c.query_cap);
  const ThreatSpec spec{cell.norm, cell.goal, 0.0};
  const auto& grid = c.eps_grid(cell.norm);

  CurveOptions opt;
  opt.seed = c.seed;
  opt.workers = workers;
  opt.defense = cell.defense;
  if (c.method != "auto") opt.method = budget_method_from_string(c.method);
  else opt.method = attack->capability() == Capability::optimized ? BudgetMethod::counting
                                                                   : BudgetMethod::binary_search;
  if (opt.method == BudgetMethod::counting && attack->capability() != Capability::optimized)
    opt.method = BudgetMethod::binary_search;

  json rec;
  rec["version"] = 1;
  rec["cell"] = {{"attack", cell.attack},
                 {"defense", cell.defense},
                 {"norm", to_string(cell.norm)},
                 {"goal", to_string(cell.goal)},
                 {"knowledge", to_string(a.knowledge)},
                 {"method", to_string(opt.method)}};
  rec["config"] = config_to_json(c);
  rec["seed"] = c.seed;
  rec["approximate"] = ws.defended.at(cell.defense)->stochastic();
  rec["curves"] = json::array();
  rec["outcomes"] = json::array();

  if (a.knowledge == Knowledge::transfer) {
    const std::string sub = choose_substitute(c, ws, a, cell);
    if (opt.method == BudgetMethod::counting) opt.method = BudgetMethod::binary_search;
    const auto curves = transfer_eval(ws.gradient_view.at(sub), {{cell.defense, ws.defended.at(cell.defense)}},
                                      *attack, ws.eval, spec, grid, opt);
    rec["cell"]["substitute"] = sub;
    rec["curves"].push_back(curve_to_json(curves.front()));
    return rec;
  }

  const ModelPtr model = a.knowledge == Knowledge::white ? ws.gradient_view.at(cell.defense)
                                                         : ws.defended.at(cell.defense);
  std::vector<ExampleResult> details;
  rec["curves"].push_back(curve_to_json(curve_budget(model, *attack, ws.eval, spec, grid, opt, &details)));
  for (std::size_t i = 0; i < details.size(); ++i)
    rec["outcomes"].push_back(outcome_json(i, ws.eval.examples[i], details[i]));

  if (c.strength.enabled) {
    const double eps = cell.norm == Norm::linf ? c.strength.eps_linf : c.strength.eps_l2;
    const auto& sgrid = a.knowledge == Knowledge::white ? c.strength.iterations : c.strength.queries;
    rec["curves"].push_back(curve_to_json(curve_strength(model, *attack, ws.eval, spec.with_eps(eps), sgrid, opt)));
  }
  return rec;
}

BenchmarkResult run_benchmark(const BenchConfig& c, const RunOptions& opt) {
  BenchmarkResult result;
  std::vector<Cell> cells = config_cells(c);
  if (opt.only) {
    const auto it = std::find(cells.begin(), cells.end(), *opt.only);
    if (it == cells.end()) throw ConfigError("cell " + cell_id(*opt.only) + " is not part of the config");
    cells = {*opt.only};
  }
  const Workspace ws = prepare(c, opt.base_dir);
  for (const auto& d : c.defenses) result.clean_accuracy[d.name] = clean_accuracy(*ws.defended.at(d.name), ws.eval, c.seed);

  const fs::path out_dir = opt.base_dir / c.out;
  fs::create_directories(out_dir);
  const json snapshot = config_to_json(c);

  result.records.resize(cells.size());
  result.files.resize(cells.size());
  std::vector<double> seconds(cells.size(), 0.0);
  std::mutex io;
  const std::size_t cell_workers = std::min(c.workers, cells.size());
  const std::size_t example_workers = cell_workers > 1 ? 1 : c.workers;
  parallel_for(cells.size(), cell_workers, [&](std::size_t k) {
    const Cell& cell = cells[k];
    const fs::path file = out_dir / record_file_name(cell);
    if (opt.resume && fs::exists(file)) {
      std::ifstream in(file);
      json prev = json::parse(in, nullptr, false);
      if (!prev.is_discarded() && prev.value("config", json()) == snapshot) {
        result.records[k] = std::move(prev);
        result.files[k] = file;
        return;
      }
    }
    const auto t0 = std::chrono::steady_clock::now();
    json rec = run_cell(c, ws, cell, example_workers);
    seconds[k] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::lock_guard lock(io);
    std::ofstream(file) << rec.dump(2) << "\n";
    for (const auto& cj : rec["curves"]) {
      const RobustnessCurve curve = curve_from_json(cj);
      std::ofstream(out_dir / (file.stem().string() + "_" + to_string(curve.kind) + ".csv")) << curve_to_csv(curve);
    }
    result.records[k] = std::move(rec);
    result.files[k] = file;
  });

  json summary = {{"seed", c.seed}, {"clean_accuracy", result.clean_accuracy}, {"cells", json::array()}};
  for (const auto& cell : cells) summary["cells"].push_back(record_file_name(cell));
  std::ofstream(out_dir / "summary.json") << summary.dump(2) << "\n";
  json timing = json::object();
  for (std::size_t k = 0; k < cells.size(); ++k)
    if (seconds[k] > 0.0) timing[cell_id(cells[k])] = seconds[k];
  std::ofstream(out_dir / "timing.json") << timing.dump(2) << "\n";
  return result;
}

}  // namespace advbench
