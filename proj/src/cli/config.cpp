#include "cbo/cli/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "cbo/errors.hpp"

namespace cbo::cli {

using nlohmann::json;

namespace {

constexpr std::pair<Command, std::string_view> kCommands[] = {
    {Command::kRunQuadratic, "run-quadratic"},
    {Command::kRunDone, "run-done"},
    {Command::kAuditGradients, "audit-gradients"},
    {Command::kScalingStudy, "scaling-study"},
    {Command::kEvaluate, "evaluate"},
};

}  // namespace

std::optional<Command> parse_command(std::string_view name) {
  for (const auto& [cmd, text] : kCommands) {
    if (text == name) return cmd;
  }
  return std::nullopt;
}

std::string_view command_name(Command command) {
  for (const auto& [cmd, text] : kCommands) {
    if (cmd == command) return text;
  }
  return "unknown";
}

const std::vector<KeySpec>& config_keys() {
  using K = KeyType;
  static const std::vector<KeySpec> keys = {
      {"seed", K::kInteger, 0, "master seed; CBO_SEED overrides the file value"},
      {"output_dir", K::kString, "", "output directory (same as --out)"},
      {"emit", K::kString, "csv", "per-step metrics format: csv | json"},
      {"emit.timing", K::kBool, false,
       "record wall_ms; off by default so reruns are byte-identical"},

      {"solver.T", K::kInteger, 100, "outer iterations"},
      {"solver.K", K::kInteger, 10, "inner iterations per outer step"},
      {"solver.batch_size", K::kInteger, nullptr, "instances per step; default min(M, 64)"},
      {"solver.full_batch", K::kBool, false, "use every instance each step"},
      {"solver.alpha", K::kNumber, nullptr,
       "inner stepsize; default 2/(L+mu) for quadratics, 0.01 for run-done"},
      {"solver.beta", K::kNumber, nullptr, "outer stepsize base; default 1/sqrt(T)"},
      {"solver.beta_schedule", K::kString, "constant", "constant | cosine | step"},
      {"solver.beta_decay", K::kNumber, 0.1, "step schedule multiplier"},
      {"solver.beta_period", K::kNumber, 0.5, "step schedule period as a fraction of T"},
      {"solver.eta", K::kNumber, 0.5, "running-average weight, in (0, 1]"},
      {"solver.r_values", K::kNumberList, json::array({10.0, 1.0, 0.1}),
       "temperatures of the staged r schedule (run-done)"},
      {"solver.r_fractions", K::kNumberList, json::array({0.0, 2.0 / 3.0, 5.0 / 6.0}),
       "fractions of T at which each r starts"},
      {"solver.c", K::kNumber, 1e-3, "barrier coefficient"},
      {"solver.inner_mode", K::kString, "barrier", "barrier | projected"},
      {"solver.inner_rule", K::kString, "gradient",
       "gradient | sign | adam (sign and adam are heuristic)"},
      {"solver.warm_start", K::kBool, true, "start each inner solve from the last one"},

      {"hypergrad.solver", K::kString, "cg", "cg | exact-diagonal"},
      {"hypergrad.cg_tol", K::kNumber, 1e-10, "relative CG residual"},
      {"hypergrad.cg_max_iters", K::kInteger, 500, "CG iteration cap"},
      {"hypergrad.neglect_inner_hessian", K::kBool, nullptr,
       "drop the attack-loss Hessian; default true for classifiers, false for quadratics"},

      {"problem.d", K::kInteger, 3, "quadratic: theta dimension"},
      {"problem.p", K::kInteger, 2, "quadratic: delta dimension"},
      {"problem.m", K::kInteger, 1, "quadratic: outputs of g"},
      {"problem.M", K::kInteger, 5, "quadratic: instances"},
      {"problem.outer", K::kString, "log", "quadratic: log | linear"},
      {"problem.mu", K::kNumber, 1.0, "quadratic: smallest eigenvalue of D_i"},
      {"problem.L", K::kNumber, 4.0, "quadratic: largest eigenvalue of D_i"},
      {"problem.isotropic", K::kBool, false, "quadratic: D_i = mu I"},
      {"problem.delta_curvature", K::kNumber, 1.0, "quadratic: gamma"},
      {"problem.theta_curvature", K::kNumber, 0.5, "quadratic: lambda"},
      {"problem.coupling_scale", K::kNumber, 0.5, "quadratic: scale of P_i"},
      {"problem.box_half_width", K::kNumber, 50.0, "quadratic: inner box half width"},
      {"problem.value_floor", K::kNumber, 1.0, "quadratic: min over theta of mean g_j"},
      {"problem.epsilon", K::kNumber, 0.05, "attack radius (l_inf)"},
      {"problem.attack_loss", K::kString, "cross-entropy", "cross-entropy | margin"},

      {"data.N", K::kInteger, 1000, "training examples"},
      {"data.C", K::kInteger, 5, "classes"},
      {"data.p", K::kInteger, 8, "features"},
      {"data.imbalance_ratio", K::kNumber, 0.2, "smallest / largest class count"},
      {"data.separation", K::kNumber, 1.5, "cluster-center spread"},
      {"data.test_N", K::kInteger, 1000, "balanced test examples"},
      {"data.train_csv", K::kString, "", "read training data from CSV instead"},
      {"data.test_csv", K::kString, "", "read test data from CSV instead"},

      {"model.kind", K::kString, "softmax", "softmax | mlp"},
      {"model.hidden", K::kInteger, 16, "MLP hidden width"},
      {"model.path", K::kString, "", "evaluate: model.json written by run-done"},

      {"eval.pgd_steps", K::kInteger, 20, "PGD steps at evaluation"},
      {"eval.tail_fraction", K::kNumber, 0.3, "fraction of classes in RA-Tail"},

      {"baseline.uniform_at", K::kBool, false, "run-done: also train uniform AT"},
      {"baseline.attack_steps", K::kInteger, 10, "uniform AT: PGD steps"},

      {"scaling.T_list", K::kIntegerList, json::array({100, 400, 1600}), "scaling grid T"},
      {"scaling.K_list", K::kIntegerList, json::array({10}), "scaling grid K"},

      {"audit.points", K::kInteger, 10, "random points per oracle"},
      {"audit.step", K::kNumber, 1e-5, "finite-difference step"},
      {"audit.rel_tol", K::kNumber, 1e-5, "relative tolerance"},
      {"audit.abs_tol", K::kNumber, 1e-7, "absolute tolerance near zero"},
  };
  return keys;
}

namespace {

const KeySpec* find_key(const std::string& key) {
  for (const KeySpec& spec : config_keys()) {
    if (spec.key == key) return &spec;
  }
  return nullptr;
}

std::string type_name(KeyType type) {
  switch (type) {
    case KeyType::kInteger: return "a non-negative integer";
    case KeyType::kNumber: return "a number";
    case KeyType::kBool: return "true or false";
    case KeyType::kString: return "a string";
    case KeyType::kNumberList: return "a list of numbers";
    case KeyType::kIntegerList: return "a list of non-negative integers";
  }
  return "?";
}

std::uint64_t as_count(const json& v) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer()) return static_cast<std::uint64_t>(v.get<long long>());
  return as_count(v);
}

bool is_count(const json& v) {
  if (v.is_number_unsigned()) return true;
  if (v.is_number_integer()) return v.get<long long>() >= 0;
  if (v.is_number_float()) {
    const double d = v.get<double>();
    return d >= 0.0 && std::floor(d) == d && d < 9.007199254740992e15;
  }
  return false;
}

json coerce(const KeySpec& spec, const json& v) {
  const auto fail = [&] {
    throw ConfigError(spec.key + " must be " + type_name(spec.type) + ", got " + v.dump());
  };
  if (v.is_null() && spec.default_value.is_null()) return v;
  switch (spec.type) {
    case KeyType::kInteger:
      if (!is_count(v)) fail();
      return as_count(v);
    case KeyType::kNumber:
      if (!v.is_number() || !std::isfinite(v.get<double>())) fail();
      return v.get<double>();
    case KeyType::kBool:
      if (!v.is_boolean()) fail();
      return v;
    case KeyType::kString:
      if (!v.is_string()) fail();
      return v;
    case KeyType::kNumberList:
    case KeyType::kIntegerList: {
      if (!v.is_array() || v.empty()) fail();
      json out = json::array();
      for (const json& e : v) {
        if (spec.type == KeyType::kIntegerList) {
          if (!is_count(e)) fail();
          out.push_back(as_count(e));
        } else {
          if (!e.is_number() || !std::isfinite(e.get<double>())) fail();
          out.push_back(e.get<double>());
        }
      }
      return out;
    }
  }
  return v;
}

void set_value(json& values, const std::string& key, const json& v, std::string_view source) {
  const KeySpec* spec = find_key(key);
  if (!spec) {
    throw ConfigError("unknown config key '" + key + "' (from " + std::string(source) +
                      "); run `cbo --list-keys` for the accepted keys");
  }
  values[key] = coerce(*spec, v);
}

void flatten(const json& obj, const std::string& prefix, json& out) {
  for (const auto& [k, v] : obj.items()) {
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    if (v.is_object()) {
      flatten(v, key, out);
    } else {
      out[key] = v;
    }
  }
}

// A flag value: JSON when it parses as such, otherwise the raw text.
json parse_flag_value(const KeySpec& spec, const std::string& text) {
  if (spec.type == KeyType::kString) return text;
  json parsed = json::parse(text, nullptr, false);
  if (parsed.is_discarded()) {
    throw ConfigError(spec.key + " must be " + type_name(spec.type) + ", got '" + text + "'");
  }
  return parsed;
}

std::string choice(const RunConfig& cfg, const std::string& key,
                   std::initializer_list<std::string_view> allowed) {
  const std::string v = cfg.get<std::string>(key);
  for (std::string_view a : allowed) {
    if (v == a) return v;
  }
  std::string list;
  for (std::string_view a : allowed) list += (list.empty() ? "" : " | ") + std::string(a);
  throw ConfigError(key + " = '" + v + "' must be one of: " + list);
}

void require_positive(const RunConfig& cfg, const std::string& key) {
  if (!(cfg.get<double>(key) > 0.0)) throw ConfigError(key + " must be > 0");
}

void require_count(const RunConfig& cfg, const std::string& key, std::size_t min) {
  if (cfg.get<std::size_t>(key) < min) {
    throw ConfigError(key + " must be >= " + std::to_string(min));
  }
}

}  // namespace

std::uint64_t RunConfig::seed() const { return get<std::uint64_t>("seed"); }

EmitFormat RunConfig::emit() const {
  return choice(*this, "emit", {"csv", "json"}) == "json" ? EmitFormat::kJson : EmitFormat::kCsv;
}

bool RunConfig::emit_timing() const { return get<bool>("emit.timing"); }

cid::SolverConfig RunConfig::solver() const {
  cid::SolverConfig s;
  s.T = get<std::size_t>("solver.T");
  s.K = get<std::size_t>("solver.K");
  if (is_set("solver.batch_size")) {
    s.batch_size = get<std::size_t>("solver.batch_size");
  } else if (command == Command::kRunDone || command == Command::kEvaluate) {
    s.batch_size = get<std::string>("data.train_csv").empty()
                       ? std::min<std::size_t>(64, get<std::size_t>("data.N"))
                       : 64;
  } else {
    s.batch_size = std::min<std::size_t>(64, get<std::size_t>("problem.M"));
  }
  s.full_batch = get<bool>("solver.full_batch");
  if (is_set("solver.alpha")) {
    s.alpha = get<double>("solver.alpha");
  } else if (command == Command::kRunDone) {
    s.alpha = 0.01;
  }
  if (is_set("solver.beta")) s.beta.base = get<double>("solver.beta");
  const std::string kind = choice(*this, "solver.beta_schedule", {"constant", "cosine", "step"});
  s.beta.kind = kind == "cosine" ? cid::BetaSchedule::Kind::kCosine
                : kind == "step" ? cid::BetaSchedule::Kind::kStep
                                 : cid::BetaSchedule::Kind::kConstant;
  s.beta.decay = get<double>("solver.beta_decay");
  s.beta.period_fraction = get<double>("solver.beta_period");
  s.eta = get<double>("solver.eta");
  s.r_schedule.values = get<std::vector<double>>("solver.r_values");
  s.r_schedule.fractions = get<std::vector<double>>("solver.r_fractions");
  s.c = get<double>("solver.c");
  s.inner_mode = choice(*this, "solver.inner_mode", {"barrier", "projected"}) == "projected"
                     ? cid::InnerMode::kProjected
                     : cid::InnerMode::kBarrier;
  const std::string rule = choice(*this, "solver.inner_rule", {"gradient", "sign", "adam"});
  s.inner_rule = rule == "sign"   ? InnerStepRule::kSign
                 : rule == "adam" ? InnerStepRule::kAdam
                                  : InnerStepRule::kGradient;
  s.seed = seed();
  s.warm_start = get<bool>("solver.warm_start");
  s.hypergrad.linear_solver =
      choice(*this, "hypergrad.solver", {"cg", "exact-diagonal"}) == "exact-diagonal"
          ? LinearSolver::kExactDiagonal
          : LinearSolver::kConjugateGradient;
  s.hypergrad.cg_tol = get<double>("hypergrad.cg_tol");
  s.hypergrad.cg_max_iters = get<std::size_t>("hypergrad.cg_max_iters");
  const bool classifier = command == Command::kRunDone || command == Command::kEvaluate;
  s.hypergrad.neglect_inner_hessian = is_set("hypergrad.neglect_inner_hessian")
                                          ? get<bool>("hypergrad.neglect_inner_hessian")
                                          : classifier;
  try {
    s.r_schedule.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("solver.r_values / solver.r_fractions: ") + e.what());
  }
  return s;
}

testbed::QuadraticOptions RunConfig::quadratic() const {
  testbed::QuadraticOptions q;
  q.d = get<std::size_t>("problem.d");
  q.p = get<std::size_t>("problem.p");
  q.m = get<std::size_t>("problem.m");
  q.M = get<std::size_t>("problem.M");
  for (const char* key : {"problem.d", "problem.p", "problem.m", "problem.M"}) {
    require_count(*this, key, 1);
  }
  q.outer = choice(*this, "problem.outer", {"log", "linear"}) == "linear"
                ? testbed::OuterKind::kLinear
                : testbed::OuterKind::kLog;
  q.mu = get<double>("problem.mu");
  q.L = get<double>("problem.L");
  require_positive(*this, "problem.mu");
  if (q.L < q.mu) throw ConfigError("problem.L must be >= problem.mu");
  q.isotropic = get<bool>("problem.isotropic");
  q.delta_curvature = get<double>("problem.delta_curvature");
  q.theta_curvature = get<double>("problem.theta_curvature");
  if (q.delta_curvature < 0.0) throw ConfigError("problem.delta_curvature must be >= 0");
  if (q.theta_curvature < 0.0) throw ConfigError("problem.theta_curvature must be >= 0");
  q.coupling_scale = get<double>("problem.coupling_scale");
  q.box_half_width = get<double>("problem.box_half_width");
  require_positive(*this, "problem.box_half_width");
  q.value_floor = get<double>("problem.value_floor");
  return q;
}

testbed::BlobOptions RunConfig::train_data() const {
  testbed::BlobOptions b;
  b.N = get<std::size_t>("data.N");
  b.C = get<std::size_t>("data.C");
  b.p = get<std::size_t>("data.p");
  require_count(*this, "data.C", 2);
  require_count(*this, "data.p", 1);
  if (b.N < b.C) throw ConfigError("data.N must be >= data.C");
  b.imbalance_ratio = get<double>("data.imbalance_ratio");
  if (!(b.imbalance_ratio > 0.0 && b.imbalance_ratio <= 1.0)) {
    throw ConfigError("data.imbalance_ratio must lie in (0, 1]");
  }
  b.separation = get<double>("data.separation");
  require_positive(*this, "data.separation");
  return b;
}

testbed::BlobOptions RunConfig::test_data() const {
  testbed::BlobOptions b = train_data();
  b.N = get<std::size_t>("data.test_N");
  if (b.N < b.C) throw ConfigError("data.test_N must be >= data.C");
  b.imbalance_ratio = 1.0;
  b.stream = 1;
  return b;
}

testbed::LogitLossKind RunConfig::attack_loss() const {
  return choice(*this, "problem.attack_loss", {"cross-entropy", "margin"}) == "margin"
             ? testbed::LogitLossKind::kMargin
             : testbed::LogitLossKind::kCrossEntropy;
}

double RunConfig::epsilon() const {
  require_positive(*this, "problem.epsilon");
  const double eps = get<double>("problem.epsilon");
  if (eps >= 0.5) throw ConfigError("problem.epsilon must be < 0.5");
  return eps;
}

testbed::EvalOptions RunConfig::eval() const {
  testbed::EvalOptions e;
  e.epsilon = epsilon();
  e.pgd_steps = get<std::size_t>("eval.pgd_steps");
  e.tail_fraction = get<double>("eval.tail_fraction");
  if (!(e.tail_fraction > 0.0 && e.tail_fraction <= 1.0)) {
    throw ConfigError("eval.tail_fraction must lie in (0, 1]");
  }
  return e;
}

testbed::UniformAtOptions RunConfig::uniform_at() const {
  const cid::SolverConfig s = solver();
  testbed::UniformAtOptions u;
  u.T = s.T;
  u.batch_size = s.full_batch ? get<std::size_t>("data.N") : s.batch_size;
  u.beta = s.beta;
  u.epsilon = epsilon();
  u.attack_steps = get<std::size_t>("baseline.attack_steps");
  u.seed = s.seed;
  return u;
}

std::vector<std::size_t> RunConfig::scaling_T() const {
  return get<std::vector<std::size_t>>("scaling.T_list");
}

std::vector<std::size_t> RunConfig::scaling_K() const {
  return get<std::vector<std::size_t>>("scaling.K_list");
}

void RunConfig::validate() const {
  emit();
  const cid::SolverConfig s = solver();
  switch (command) {
    case Command::kRunQuadratic:
    case Command::kScalingStudy:
    case Command::kAuditGradients: {
      const testbed::QuadraticOptions q = quadratic();
      s.validate(q.M);
      if (command == Command::kScalingStudy) {
        for (std::size_t t : scaling_T()) {
          if (t < 1) throw ConfigError("scaling.T_list entries must be >= 1");
        }
        scaling_K();
      }
      if (command == Command::kAuditGradients) {
        require_count(*this, "audit.points", 1);
        require_positive(*this, "audit.step");
        require_positive(*this, "audit.rel_tol");
        require_positive(*this, "audit.abs_tol");
        train_data();
        choice(*this, "model.kind", {"softmax", "mlp"});
        epsilon();
      }
      break;
    }
    case Command::kRunDone: {
      const testbed::BlobOptions b = train_data();
      test_data();
      epsilon();
      eval();
      attack_loss();
      choice(*this, "model.kind", {"softmax", "mlp"});
      require_count(*this, "model.hidden", 1);
      s.validate(get<std::string>("data.train_csv").empty() ? b.N : 0);
      break;
    }
    case Command::kEvaluate:
      if (get<std::string>("model.path").empty()) {
        throw ConfigError("model.path is required for evaluate");
      }
      test_data();
      eval();
      break;
  }
}

json load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  json parsed = json::parse(in, nullptr, false);
  if (parsed.is_discarded()) throw ConfigError(path.string() + " is not valid JSON");
  if (!parsed.is_object()) throw ConfigError(path.string() + " must hold a JSON object");
  json flat = json::object();
  flatten(parsed, "", flat);
  return flat;
}

RunConfig build_config(Command command, const json& file_values,
                       const std::vector<Override>& overrides,
                       const std::optional<std::string>& env_seed) {
  RunConfig cfg;
  cfg.command = command;
  cfg.values = json::object();
  for (const KeySpec& spec : config_keys()) cfg.values[spec.key] = spec.default_value;
  for (const auto& [key, v] : file_values.items()) set_value(cfg.values, key, v, "config file");
  if (env_seed && !env_seed->empty()) {
    set_value(cfg.values, "seed", parse_flag_value(*find_key("seed"), *env_seed), "CBO_SEED");
  }
  for (const auto& [key, text] : overrides) {
    const KeySpec* spec = find_key(key);
    if (!spec) {
      throw ConfigError("unknown flag --" + key + "; run `cbo --list-keys` for the accepted keys");
    }
    set_value(cfg.values, key, parse_flag_value(*spec, text), "--" + key);
  }
  cfg.output_dir = cfg.get<std::string>("output_dir");
  cfg.validate();
  return cfg;
}

std::vector<Override> parse_overrides(const std::vector<std::string>& tokens) {
  static const std::map<std::string, std::string, std::less<>> aliases = {
      {"T", "solver.T"},         {"K", "solver.K"},        {"eta", "solver.eta"},
      {"alpha", "solver.alpha"}, {"beta", "solver.beta"},  {"c", "solver.c"},
      {"batch-size", "solver.batch_size"},                 {"batch_size", "solver.batch_size"},
      {"epsilon", "problem.epsilon"},                      {"out", "output_dir"},
  };
  std::vector<Override> out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::string& tok = tokens[i];
    if (tok.rfind("--", 0) != 0 || tok.size() == 2) {
      throw ConfigError("unexpected argument '" + tok + "'; overrides look like --key value");
    }
    std::string key = tok.substr(2);
    std::string value;
    if (const auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key.resize(eq);
    } else {
      if (i + 1 >= tokens.size()) throw ConfigError("flag --" + key + " is missing a value");
      value = tokens[++i];
    }
    if (const auto it = aliases.find(key); it != aliases.end()) key = it->second;
    out.emplace_back(key, value);
  }
  return out;
}

}  // namespace cbo::cli
