// viewex command-line tool.
//
// Every run writes <out>/manifest.json (command, resolved inputs, full
// configuration) and <out>/timing.json. `viewex replay --manifest M --out D`
// re-executes M into D; report files come out byte-identical.
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime failure.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "viewex/viewex.hpp"

namespace fs = std::filesystem;
using namespace viewex;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitRuntime = 4;

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::ConfigError: return kExitConfig;
    case ErrorKind::NotFound:
    case ErrorKind::ParseError:
    case ErrorKind::SchemaViolation:
    case ErrorKind::InsufficientData:
    case ErrorKind::InsufficientClassMembers: return kExitData;
    default: return kExitRuntime;
  }
}

struct Args {
  std::string command;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::string config;
  std::string schema, data, model, explanation, truth;
  std::string method, language;
  std::optional<std::size_t> k;
  std::string manifest;
};

std::string absolute_or_empty(const std::string& p) { return p.empty() ? p : fs::absolute(p).lexically_normal().string(); }

Json args_to_json(const Args& a) {
  Json j;
  auto put = [&](const char* key, const std::string& v) {
    if (!v.empty()) j[key] = v;
  };
  put("schema", a.schema);
  put("data", a.data);
  put("model", a.model);
  put("explanation", a.explanation);
  put("truth", a.truth);
  put("method", a.method);
  put("language", a.language);
  if (a.k) j["k"] = *a.k;
  return j;
}

void args_from_json(const Json& j, Args& a) {
  auto get = [&](const char* key, std::string& v) {
    if (j.contains(key)) v = j.at(key).get<std::string>();
  };
  get("schema", a.schema);
  get("data", a.data);
  get("model", a.model);
  get("explanation", a.explanation);
  get("truth", a.truth);
  get("method", a.method);
  get("language", a.language);
  if (j.contains("k")) a.k = j.at("k").get<std::size_t>();
}

void require(const std::string& v, const char* flag) {
  if (v.empty()) fail(ErrorKind::ConfigError, std::string("missing required option ") + flag);
}

/// Defaults, then --config overrides, then --seed, then per-flag overrides.
RunConfig resolve_config(const Args& a) {
  RunConfig c;
  if (!a.config.empty()) {
    Json j;
    try {
      j = read_json_file(a.config);
    } catch (const Error& e) {
      fail(ErrorKind::ConfigError, e.what());
    }
    c = run_config_from_json(j, c);
  }
  if (a.seed) c.set_seed(*a.seed);
  if (!a.method.empty()) c.experiment.method = a.method;
  if (!a.language.empty()) {
    try {
      c.experiment.language = parse_language(a.language);
    } catch (const Error& e) {
      fail(ErrorKind::ConfigError, e.what());
    }
  }
  if (a.k) c.experiment.k = a.k;
  return c;
}

struct Loaded {
  DatabaseSchema schema;
  Database db;
};

Loaded load_data(const Args& a) {
  require(a.schema, "--schema");
  require(a.data, "--data");
  auto [s, d] = load_csv_database(a.schema, a.data);
  return {std::move(s), std::move(d)};
}

GnnModel load_model(const Args& a, const DatabaseSchema& schema) {
  require(a.model, "--model");
  auto m = load_checkpoint(fs::path(a.model));
  if (schema_to_json(m.schema()) != schema_to_json(schema))
    fail(ErrorKind::ConfigError, "model " + a.model + " was trained on a different schema");
  return m;
}

Explanation load_explanation(const Args& a, const DatabaseSchema& schema) {
  require(a.explanation, "--explanation");
  return explanation_from_json(schema, read_json_file(a.explanation));
}

std::optional<GroundTruth> load_truth(const Args& a, const DatabaseSchema& schema) {
  if (a.truth.empty()) return std::nullopt;
  const auto j = read_json_file(a.truth);
  return ground_truth_from_json(schema, j.contains("ground_truth") ? j.at("ground_truth") : j);
}

template <class F>
void write_stream(const fs::path& p, F&& f) {
  std::ofstream out(p, std::ios::binary);
  if (!out) fail(ErrorKind::NotFound, "cannot write " + p.string());
  f(out);
}

using Clock = std::chrono::steady_clock;

struct Outputs {
  std::vector<std::string> files;
  Json timing = Json::object();
};

// ---------------------------------------------------------------------------
// Subcommands

void cmd_gen(const Args&, const RunConfig& cfg, const fs::path& out, Outputs& o) {
  const auto t0 = Clock::now();
  const auto d = generate_planted(cfg.planted);
  write_planted(d, cfg.planted, out);
  o.timing["generate_seconds"] = std::chrono::duration<double>(Clock::now() - t0).count();
  o.files = {"schema.json", "data/", "truth.json"};
}

void cmd_train(const Args& a, const RunConfig& cfg, const fs::path& out, Outputs& o) {
  const auto L = load_data(a);
  const auto t0 = Clock::now();
  const auto res = train(L.schema, L.db, cfg.train);
  o.timing["train_seconds"] = std::chrono::duration<double>(Clock::now() - t0).count();
  save_checkpoint(res.model, out / "model.ckpt");
  Json r;
  r["task"] = to_string(L.schema.task());
  r["metric"] = L.schema.task() == Task::BinaryClassification ? "roc_auc" : "mae";
  r["split"] = {{"train", res.split.train.size()}, {"validation", res.split.validation.size()}, {"test", res.split.test.size()}};
  r["best_epoch"] = res.best_epoch;
  r["best_validation"] = res.best_validation;
  r["test_metric"] = res.test_metric;
  r["epochs_run"] = res.train_loss.size();
  r["parameter_hash"] = res.model.params().hash();
  write_json_file(out / "train_report.json", r);
  write_stream(out / "train_report.csv", [&](std::ostream& s) {
    csv::write_record(s, {"epoch", "train_loss", "validation_metric"});
    for (std::size_t e = 0; e < res.train_loss.size(); ++e)
      csv::write_record(s, {std::to_string(e), format_number(res.train_loss[e]), format_number(res.validation_metric[e])});
  });
  write_stream(out / "predictions.csv", [&](std::ostream& s) {
    csv::write_record(s, {"key", "prediction"});
    for (const auto& p : predict_all(res.model, L.db)) csv::write_record(s, {p.key, format_number(p.prediction)});
  });
  o.files = {"model.ckpt", "train_report.json", "train_report.csv", "predictions.csv"};
}

void cmd_explain(const Args& a, const RunConfig& cfg, const fs::path& out, Outputs& o) {
  const auto L = load_data(a);
  const auto model = load_model(a, L.schema);
  const auto truth = load_truth(a, L.schema);
  const auto res = run_experiment(model, L.db, cfg.experiment, truth ? &*truth : nullptr);
  o.timing["explain_seconds"] = res.seconds;
  write_json_file(out / "explanation.json", explanation_to_json(L.schema, res.explanation));
  write_text_file(out / "explanation.sql", explanation_sql(L.schema, res.explanation));
  write_json_file(out / "report.json", experiment_to_json(L.schema, L.db, res));
  write_stream(out / "report.csv", [&](std::ostream& s) { write_experiment_csv(s, res); });
  write_stream(out / "dev.csv", [&](std::ostream& s) { write_dev_csv(s, L.schema, L.db, res.dev); });
  o.files = {"explanation.json", "explanation.sql", "report.json", "report.csv", "dev.csv"};
}

void cmd_evaluate(const Args& a, const RunConfig& cfg, const fs::path& out, Outputs& o) {
  const auto L = load_data(a);
  const auto model = load_model(a, L.schema);
  const auto e = load_explanation(a, L.schema);
  const auto truth = load_truth(a, L.schema);
  const auto& ec = cfg.experiment;
  const auto spec = ec.spec_for(e.language);
  check_compatible(e.language, spec);
  const auto t0 = Clock::now();
  const auto inst = sample_instances(L.schema, L.db, ec.eval_instances, ec.balanced, derive_seed(ec.seed, 0xe7a1));
  const auto rep = estimate_dev(model, L.db, e, spec, inst, ec.dev_samples, ec.hard_label);
  o.timing["evaluate_seconds"] = std::chrono::duration<double>(Clock::now() - t0).count();
  Json j;
  j["language"] = to_string(e.language);
  j["cost"] = cost(e);
  j["dev"] = {{"mean", rep.mean}, {"sd", rep.sd}};
  j["objective"] = objective(rep.mean, cost(e), ec.mask.lambda);
  if (truth) {
    Json r;
    if (has_projection(e.language)) r["attributes"] = recovery_to_json(recovery(explained_attrs(e), truth->attrs));
    if (has_join(e.language)) r["fks"] = recovery_to_json(recovery(explained_fks(e), truth->fks));
    if (has_selection(e.language)) r["predicates"] = recovery_to_json(recovery(explained_predicates(e), truth->predicates));
    j["recovery"] = std::move(r);
  }
  j["dev_report"] = dev_report_to_json(L.schema, L.db, rep);
  write_json_file(out / "evaluation.json", j);
  write_stream(out / "evaluation.csv", [&](std::ostream& s) { write_dev_csv(s, L.schema, L.db, rep); });
  o.files = {"evaluation.json", "evaluation.csv"};
}

void cmd_retrain(const Args& a, const RunConfig& cfg, const fs::path& out, Outputs& o) {
  const auto L = load_data(a);
  const auto e = load_explanation(a, L.schema);
  const auto t0 = Clock::now();
  const auto rep = retrain_reduced(L.schema, L.db, e, cfg.train);
  o.timing["retrain_seconds"] = std::chrono::duration<double>(Clock::now() - t0).count();
  auto j = retrain_report_to_json(rep);
  j["metric"] = L.schema.task() == Task::BinaryClassification ? "roc_auc" : "mae";
  j["language"] = to_string(e.language);
  write_json_file(out / "retrain.json", j);
  write_stream(out / "retrain.csv", [&](std::ostream& s) {
    csv::write_record(s, {"perf", "masked_perf", "diff", "size_reduction"});
    csv::write_record(s, {format_number(rep.perf), format_number(rep.masked_perf), format_number(rep.diff),
                          format_number(rep.size_reduction)});
  });
  o.files = {"retrain.json", "retrain.csv"};
}

void cmd_emit_sql(const Args& a, const RunConfig&, const fs::path& out, Outputs& o) {
  require(a.schema, "--schema");
  const auto schema = load_schema(a.schema);
  const auto e = load_explanation(a, schema);
  write_text_file(out / "explanation.sql", explanation_sql(schema, e));
  o.files = {"explanation.sql"};
}

using Handler = void (*)(const Args&, const RunConfig&, const fs::path&, Outputs&);

Handler handler_for(const std::string& command) {
  if (command == "gen") return cmd_gen;
  if (command == "train") return cmd_train;
  if (command == "explain" || command == "oracle") return cmd_explain;
  if (command == "evaluate") return cmd_evaluate;
  if (command == "retrain") return cmd_retrain;
  if (command == "emit-sql") return cmd_emit_sql;
  fail(ErrorKind::ConfigError, "unknown command '" + command + "'");
}

void execute(const Args& a, const RunConfig& cfg) {
  const fs::path out = a.out;
  fs::create_directories(out);
  Json manifest;
  manifest["tool"] = "viewex";
  manifest["format"] = 1;
  manifest["command"] = a.command;
  manifest["args"] = args_to_json(a);
  manifest["config"] = run_config_to_json(cfg);
  Outputs o;
  const auto t0 = Clock::now();
  handler_for(a.command)(a, cfg, out, o);
  o.timing["total_seconds"] = std::chrono::duration<double>(Clock::now() - t0).count();
  manifest["outputs"] = o.files;
  write_json_file(out / "manifest.json", manifest);
  write_json_file(out / "timing.json", o.timing);
}

int run(Args a) {
  if (a.command == "replay") {
    require(a.manifest, "--manifest");
    Json m;
    try {
      m = read_json_file(a.manifest);
    } catch (const Error& e) {
      fail(ErrorKind::ConfigError, e.what());
    }
    Args r;
    try {
      r.command = m.at("command").get<std::string>();
      args_from_json(m.at("args"), r);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::ConfigError, std::string("manifest: ") + e.what());
    }
    r.out = a.out;
    const auto cfg = run_config_from_json(m.at("config"));
    execute(r, cfg);
    return 0;
  }
  if (a.command == "config") {
    std::cout << run_config_to_json(resolve_config(a)).dump(2) << "\n";
    return 0;
  }
  for (auto* p : {&a.schema, &a.data, &a.model, &a.explanation, &a.truth}) *p = absolute_or_empty(*p);
  if (a.command == "oracle" && a.method.empty()) a.method = "oracle";
  auto cfg = resolve_config(a);
  if (a.command == "oracle" && cfg.experiment.method != "oracle")
    fail(ErrorKind::ConfigError, "the oracle command runs method 'oracle' only");
  execute(a, cfg);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Explain relational GNN predictions with database views"};
  app.require_subcommand(1);
  Args a;
  auto add_common = [&](CLI::App* s) {
    s->add_option("--seed", a.seed, "Seed for every stage (overrides the configuration)");
    s->add_option("--out", a.out, "Output directory")->capture_default_str();
    s->add_option("--config", a.config, "JSON file overriding config/defaults.json values");
  };
  auto add_data = [&](CLI::App* s) {
    s->add_option("--schema", a.schema, "Schema JSON file");
    s->add_option("--data", a.data, "Directory with one <relation>.csv per relation");
  };
  auto* gen = app.add_subcommand("gen", "Generate a planted-signal database");
  add_common(gen);
  auto* tr = app.add_subcommand("train", "Train a GNN on a database");
  add_common(tr);
  add_data(tr);
  auto* ex = app.add_subcommand("explain", "Find an explanation with one method");
  auto* orc = app.add_subcommand("oracle", "Exhaustive search for the best explanation of size <= k");
  for (auto* s : {ex, orc}) {
    add_common(s);
    add_data(s);
    s->add_option("--model", a.model, "Model checkpoint");
    s->add_option("--truth", a.truth, "Planted ground truth (truth.json) for recovery scoring");
    s->add_option("--language", a.language, "Explanation language (empty/full/oracle methods)");
    s->add_option("--k", a.k, "Explanation size for baselines");
  }
  ex->add_option("--method", a.method, "Method")->check(CLI::IsMember(experiment_methods()));
  auto* ev = app.add_subcommand("evaluate", "Estimate dev for a given explanation");
  add_common(ev);
  add_data(ev);
  ev->add_option("--model", a.model, "Model checkpoint");
  ev->add_option("--explanation", a.explanation, "Explanation JSON file");
  ev->add_option("--truth", a.truth, "Planted ground truth for recovery scoring");
  auto* rt = app.add_subcommand("retrain", "Retrain on the data an explanation keeps");
  add_common(rt);
  add_data(rt);
  rt->add_option("--explanation", a.explanation, "Explanation JSON file");
  auto* sq = app.add_subcommand("emit-sql", "Render an explanation as SQL views");
  add_common(sq);
  sq->add_option("--schema", a.schema, "Schema JSON file");
  sq->add_option("--explanation", a.explanation, "Explanation JSON file");
  auto* pc = app.add_subcommand("config", "Print the resolved configuration");
  pc->add_option("--seed", a.seed, "Seed for every stage");
  pc->add_option("--config", a.config, "JSON file overriding default values");
  auto* rp = app.add_subcommand("replay", "Re-run a recorded manifest");
  rp->add_option("--manifest", a.manifest, "manifest.json of an earlier run")->required();
  rp->add_option("--out", a.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }
  a.command = app.get_subcommands().front()->get_name();
  try {
    return run(std::move(a));
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
