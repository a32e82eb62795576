#include "cbo/cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>

#include <CLI11.hpp>

#include "cbo/barrier.hpp"
#include "cbo/cli/emit.hpp"
#include "cbo/errors.hpp"
#include "cbo/testbed/adversarial.hpp"

namespace cbo::cli {

using nlohmann::json;

QuadraticTrace run_quadratic_trace(const testbed::QuadraticCbo& problem,
                                   const cid::SolverConfig& config) {
  QuadraticTrace trace;
  trace.sq_grad.reserve(config.T);
  if (config.T > 0) {
    const Vector g0 = problem.gradient(problem.theta0());
    trace.sq_grad.push_back(dot(g0, g0));
  }
  trace.result = cid::run(problem.problem(), problem.theta0(), config,
                          [&](const cid::CidState& state, const cid::StepRecord& rec) {
                            if (rec.step + 1 < config.T) {
                              const Vector g = problem.gradient(state.theta);
                              trace.sq_grad.push_back(dot(g, g));
                            }
                          });
  return trace;
}

double tail_mean(std::span<const double> values, double fraction) {
  if (values.empty()) return 0.0;
  const auto n = values.size();
  const std::size_t k = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n))), 1, n);
  double sum = 0.0;
  for (std::size_t i = n - k; i < n; ++i) sum += values[i];
  return sum / static_cast<double>(k);
}

std::vector<ScalingCell> scaling_study(const testbed::QuadraticCbo& problem,
                                       const cid::SolverConfig& base,
                                       std::span<const std::size_t> T_list,
                                       std::span<const std::size_t> K_list) {
  std::vector<ScalingCell> cells;
  for (std::size_t K : K_list) {
    for (std::size_t T : T_list) {
      ScalingCell cell;
      cell.T = T;
      cell.K = K;
      cid::SolverConfig cfg = base;
      cfg.T = T;
      cfg.K = K;
      try {
        const QuadraticTrace trace = run_quadratic_trace(problem, cfg);
        double sum = 0.0;
        for (double v : trace.sq_grad) sum += v;
        cell.mean_sq_grad = trace.sq_grad.empty() ? 0.0 : sum / static_cast<double>(T);
        cell.tail_sq_grad = tail_mean(trace.sq_grad);
        cell.final_grad_norm = norm(problem.gradient(trace.result.state.theta));
      } catch (const Error& e) {
        cell.status = e.what();
        cell.mean_sq_grad = cell.tail_sq_grad = cell.final_grad_norm =
            std::numeric_limits<double>::quiet_NaN();
      }
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

std::string scaling_csv(const std::vector<ScalingCell>& cells) {
  std::string out = "T,K,mean_sq_grad,tail_sq_grad,final_grad_norm,status\n";
  for (const ScalingCell& c : cells) {
    std::string status = c.status;
    std::replace(status.begin(), status.end(), '"', '\'');
    out += std::to_string(c.T) + "," + std::to_string(c.K) + "," + format_double(c.mean_sq_grad) +
           "," + format_double(c.tail_sq_grad) + "," + format_double(c.final_grad_norm) + ",\"" +
           status + "\"\n";
  }
  return out;
}

namespace {

json config_echo(const RunConfig& cfg) {
  json echo = cfg.values;
  echo["output_dir"] = cfg.output_dir.string();
  return echo;
}

json summary_base(const RunConfig& cfg) {
  return {{"command", std::string(command_name(cfg.command))},
          {"seed", cfg.seed()},
          {"config", config_echo(cfg)}};
}

void emit_metrics(const RunConfig& cfg, const cid::RunMetrics& metrics) {
  if (cfg.emit() == EmitFormat::kJson) {
    write_json(cfg.output_dir / "metrics.json", metrics_json(metrics, cfg.emit_timing()));
  } else {
    write_atomic(cfg.output_dir / "metrics.csv", metrics_csv(metrics, cfg.emit_timing()));
  }
}

json robustness_json(const testbed::RobustnessReport& r) {
  return {{"SA", r.clean_accuracy},
          {"RA_PGD", r.robust_accuracy},
          {"per_class_SA", r.per_class_clean},
          {"per_class_RA", r.per_class_robust},
          {"tail_fraction", r.tail_fraction},
          {"RA_tail", r.ra_tail}};
}

testbed::ToyClassifier make_model(const RunConfig& cfg, std::size_t p, std::size_t C) {
  const std::string kind = cfg.get<std::string>("model.kind");
  if (kind == "mlp") {
    return testbed::ToyClassifier::relu_mlp(p, cfg.get<std::size_t>("model.hidden"), C);
  }
  return testbed::ToyClassifier::softmax_regression(p, C);
}

testbed::SyntheticDataset load_or_make(const RunConfig& cfg, const std::string& csv_key,
                                       const testbed::BlobOptions& blobs) {
  const std::string path = cfg.get<std::string>(csv_key);
  if (!path.empty()) return testbed::read_dataset_csv(path);
  return testbed::make_gaussian_blobs(cfg.seed(), blobs);
}

void run_quadratic(const RunConfig& cfg, std::ostream& log) {
  const testbed::QuadraticCbo problem = testbed::make_quadratic_cbo(cfg.seed(), cfg.quadratic());
  const QuadraticTrace trace = run_quadratic_trace(problem, cfg.solver());
  const Vector& theta = trace.result.state.theta;
  double sum = 0.0;
  for (double v : trace.sq_grad) sum += v;
  json summary = summary_base(cfg);
  summary["final_objective"] = problem.objective(theta);
  summary["final_grad_norm"] = norm(problem.gradient(theta));
  summary["mean_sq_grad"] = trace.sq_grad.empty() ? 0.0 : sum / static_cast<double>(trace.sq_grad.size());
  summary["clamp_activations"] = trace.result.state.clamp_activations;
  summary["theta"] = theta;
  emit_metrics(cfg, trace.result.metrics);
  write_json(cfg.output_dir / "summary.json", summary);
  log << "run-quadratic: T=" << trace.result.metrics.records.size()
      << " final ||grad F|| = " << summary["final_grad_norm"].get<double>() << "\n";
}

void run_done(const RunConfig& cfg, std::ostream& log) {
  const testbed::SyntheticDataset train = load_or_make(cfg, "data.train_csv", cfg.train_data());
  const testbed::SyntheticDataset test = load_or_make(cfg, "data.test_csv", cfg.test_data());
  if (train.dim() != test.dim()) throw ConfigError("train and test feature counts differ");
  const std::size_t C = std::max(train.num_classes, test.num_classes);
  auto model = std::make_shared<const testbed::ToyClassifier>(make_model(cfg, train.dim(), C));
  const Vector theta0 = model->init_params(cfg.seed());
  cid::SolverConfig solver = cfg.solver();
  if (!cfg.is_set("solver.batch_size")) solver.batch_size = std::min<std::size_t>(64, train.size());
  solver.validate(train.size());

  const cid::RunResult result = testbed::train_done(train, model, theta0, cfg.epsilon(), solver,
                                                    cfg.attack_loss());
  const testbed::RobustnessReport done = evaluate_robustness(*model, result.state.theta, test,
                                                             cfg.eval());
  json summary = summary_base(cfg);
  summary["done"] = robustness_json(done);
  summary["clamp_activations"] = result.state.clamp_activations;
  summary["train_class_counts"] = train.class_counts();
  if (cfg.get<bool>("baseline.uniform_at")) {
    const Vector theta_u = testbed::train_uniform_at(*model, theta0, train, cfg.uniform_at());
    summary["uniform_at"] = robustness_json(evaluate_robustness(*model, theta_u, test, cfg.eval()));
  }
  const json model_doc = {{"kind", cfg.get<std::string>("model.kind")},
                          {"input_dim", model->input_dim()},
                          {"hidden", model->hidden_width()},
                          {"num_classes", model->num_classes()},
                          {"theta", result.state.theta}};
  emit_metrics(cfg, result.metrics);
  write_json(cfg.output_dir / "model.json", model_doc);
  write_json(cfg.output_dir / "summary.json", summary);
  log << "run-done: SA " << done.clean_accuracy << "  RA-PGD " << done.robust_accuracy
      << "  RA-Tail " << done.ra_tail << "\n";
}

Vector gaussian_vector(std::size_t n, double sd, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, sd);
  Vector v(n);
  for (double& x : v) x = normal(rng);
  return v;
}

Vector interior_sample(const BoxConstraint& box, double shrink, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vector delta(box.dim());
  for (std::size_t k = 0; k < box.dim(); ++k) {
    const double lo = -box.lower()[k];
    const double hi = box.upper()[k];
    const double mid = 0.5 * (lo + hi);
    delta[k] = mid + shrink * (hi - lo) * (unif(rng) - 0.5);
  }
  return delta;
}

void audit_gradients(const RunConfig& cfg, std::ostream& log) {
  const std::size_t points = cfg.get<std::size_t>("audit.points");
  const double step = cfg.get<double>("audit.step");
  const double rel = cfg.get<double>("audit.rel_tol");
  const double abs = cfg.get<double>("audit.abs_tol");
  std::mt19937_64 rng(cfg.seed());
  std::string csv = "target,oracle,point,discrepancy,passed\n";
  std::size_t checks = 0;
  std::size_t failures = 0;
  const auto record = [&](const std::string& target, std::size_t point,
                          const std::vector<OracleAudit>& audits) {
    for (const OracleAudit& a : audits) {
      csv += target + "," + a.oracle + "," + std::to_string(point) + "," +
             format_double(a.discrepancy) + "," + (a.passed ? "1" : "0") + "\n";
      ++checks;
      if (!a.passed) ++failures;
    }
  };

  const testbed::QuadraticCbo quad = testbed::make_quadratic_cbo(cfg.seed(), cfg.quadratic());
  const double c = cfg.get<double>("solver.c");
  for (std::size_t i = 0; i < quad.num_instances(); ++i) {
    const auto& inst = quad.instance(i);
    for (std::size_t k = 0; k < points; ++k) {
      const Vector theta = gaussian_vector(inst.theta_dim(), 1.0, rng);
      const Vector delta = interior_sample(inst.constraint(), 0.5, rng);
      const Vector dir = gaussian_vector(inst.delta_dim(), 1.0, rng);
      std::vector<OracleAudit> audits = audit_instance(inst, theta, delta, dir, step, rel, abs);
      const BarrierObjective bar(inst, c);
      const Vector numeric = finite_difference_gradient(
          [&](std::span<const double> d) { return barrier_value(bar, theta, d); }, delta, step);
      const double disc = gradient_discrepancy(barrier_gradient(bar, theta, delta), numeric, rel, abs);
      audits.push_back({"barrier_gradient", disc, disc <= rel});
      record("quadratic_" + std::to_string(i), k, audits);
    }
  }

  testbed::BlobOptions blobs = cfg.train_data();
  blobs.N = std::max(blobs.C, points);
  const testbed::SyntheticDataset data =
      testbed::clip_features(testbed::make_gaussian_blobs(cfg.seed(), blobs),
                             testbed::kFeatureClipMargin);
  auto model = std::make_shared<const testbed::ToyClassifier>(make_model(cfg, data.dim(), data.num_classes));
  const double eps = cfg.epsilon();
  for (std::size_t k = 0; k < points; ++k) {
    const std::size_t i = k % data.size();
    Vector x(data.x(i).begin(), data.x(i).end());
    const testbed::AdversarialInstance inst(model, x, data.labels[i],
                                            build_box_constraints(x, eps), cfg.attack_loss());
    Vector theta = model->init_params(cfg.seed() + 1 + k);
    for (double& v : theta) v *= 5.0;
    const Vector delta = interior_sample(inst.constraint(), 0.9, rng);
    const Vector dir = gaussian_vector(inst.delta_dim(), 1.0, rng);
    record("classifier", k, audit_loss(inst, theta, delta, dir, step, rel, abs));
  }

  write_atomic(cfg.output_dir / "audit.csv", csv);
  json summary = summary_base(cfg);
  summary["checks"] = checks;
  summary["failures"] = failures;
  write_json(cfg.output_dir / "summary.json", summary);
  log << "audit-gradients: " << checks << " checks, " << failures << " failures\n";
  if (failures > 0) {
    throw NumericError(std::to_string(failures) + " oracle checks disagree with finite "
                       "differences; see audit.csv");
  }
}

void scaling_study_command(const RunConfig& cfg, std::ostream& log) {
  const testbed::QuadraticCbo problem = testbed::make_quadratic_cbo(cfg.seed(), cfg.quadratic());
  const std::vector<std::size_t> Ts = cfg.scaling_T();
  const std::vector<std::size_t> Ks = cfg.scaling_K();
  const std::vector<ScalingCell> cells = scaling_study(problem, cfg.solver(), Ts, Ks);
  write_atomic(cfg.output_dir / "scaling.csv", scaling_csv(cells));
  json summary = summary_base(cfg);
  std::size_t failed = 0;
  for (const ScalingCell& c : cells) failed += c.status != "ok";
  summary["cells"] = cells.size();
  summary["failed_cells"] = failed;
  write_json(cfg.output_dir / "summary.json", summary);
  log << "scaling-study: " << cells.size() << " cells, " << failed << " failed\n";
}

void evaluate_command(const RunConfig& cfg, std::ostream& log) {
  const std::string path = cfg.get<std::string>("model.path");
  std::ifstream in(path);
  if (!in) throw IoError("cannot read model file " + path);
  const json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw IoError(path + " is not a model file");
  testbed::ToyClassifier model = testbed::ToyClassifier::softmax_regression(1, 2);
  Vector theta;
  try {
    const std::string kind = doc.at("kind").get<std::string>();
    const auto p = doc.at("input_dim").get<std::size_t>();
    const auto C = doc.at("num_classes").get<std::size_t>();
    model = kind == "mlp" ? testbed::ToyClassifier::relu_mlp(p, doc.at("hidden").get<std::size_t>(), C)
                          : testbed::ToyClassifier::softmax_regression(p, C);
    theta = doc.at("theta").get<Vector>();
  } catch (const json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
  if (theta.size() != model.param_dim()) throw IoError(path + ": theta has the wrong size");
  const testbed::SyntheticDataset test = load_or_make(cfg, "data.test_csv", cfg.test_data());
  if (test.dim() != model.input_dim()) {
    throw ConfigError("test data has " + std::to_string(test.dim()) + " features, the model " +
                      std::to_string(model.input_dim()));
  }
  const testbed::RobustnessReport report = evaluate_robustness(model, theta, test, cfg.eval());
  json summary = summary_base(cfg);
  summary["evaluation"] = robustness_json(report);
  write_json(cfg.output_dir / "summary.json", summary);
  log << "evaluate: SA " << report.clean_accuracy << "  RA-PGD " << report.robust_accuracy
      << "  RA-Tail " << report.ra_tail << "\n";
}

const char* command_help(Command cmd) {
  switch (cmd) {
    case Command::kRunQuadratic: return "run the solver on a synthetic quadratic problem";
    case Command::kRunDone: return "train a toy classifier with reweighted adversarial training";
    case Command::kAuditGradients: return "check every analytic derivative against finite differences";
    case Command::kScalingStudy: return "sweep T and K on a quadratic problem";
    case Command::kEvaluate: return "clean and PGD accuracy of a saved model";
  }
  return "";
}

}  // namespace

void execute(const RunConfig& cfg, std::ostream& log) {
  ensure_writable_dir(cfg.output_dir);
  switch (cfg.command) {
    case Command::kRunQuadratic: return run_quadratic(cfg, log);
    case Command::kRunDone: return run_done(cfg, log);
    case Command::kAuditGradients: return audit_gradients(cfg, log);
    case Command::kScalingStudy: return scaling_study_command(cfg, log);
    case Command::kEvaluate: return evaluate_command(cfg, log);
  }
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Compositional bilevel optimization solver"};
  app.require_subcommand(0, 1);
  bool list_keys = false;
  app.add_flag("--list-keys", list_keys, "print every config key with its default");
  std::string config_path;
  std::string out_dir;
  std::vector<CLI::App*> subs;
  for (Command cmd : {Command::kRunQuadratic, Command::kRunDone, Command::kAuditGradients,
                      Command::kScalingStudy, Command::kEvaluate}) {
    CLI::App* sub = app.add_subcommand(std::string(command_name(cmd)), command_help(cmd));
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--out", out_dir, "output directory");
    sub->allow_extras();
    subs.push_back(sub);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  if (list_keys) {
    for (const KeySpec& k : config_keys()) {
      out << k.key << " = " << k.default_value.dump() << "    " << k.help << "\n";
    }
    return 0;
  }
  CLI::App* chosen = nullptr;
  for (CLI::App* sub : subs) {
    if (sub->parsed()) chosen = sub;
  }
  if (!chosen) {
    err << app.help();
    return 2;
  }

  try {
    RunConfig cfg;
    try {
      const Command command = *parse_command(chosen->get_name());
      const json file = config_path.empty() ? json::object() : load_config_file(config_path);
      std::vector<Override> overrides = parse_overrides(chosen->remaining());
      if (!out_dir.empty()) overrides.emplace_back("output_dir", out_dir);
      const char* env_seed = std::getenv("CBO_SEED");
      cfg = build_config(command, file, overrides,
                         env_seed ? std::optional<std::string>(env_seed) : std::nullopt);
    } catch (const IoError&) {
      throw;
    } catch (const Error& e) {
      // Everything else before the run proper is configuration.
      throw ConfigError(e.what());
    }
    execute(cfg, out);
    return 0;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DegenerateBoxError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return 4;
  } catch (const Error& e) {
    err << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "I/O error: " << e.what() << "\n";
    return 4;
  }
}

}  // namespace cbo::cli
