#include "commands.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include "moef/moef.hpp"
#include "oracle_suites.hpp"

namespace moef::cli {

namespace {

// Failure that maps directly onto an exit code.
struct Exit {
  int code;
  std::string message;
};

std::shared_ptr<spdlog::logger> logger() {
  static auto log = [] {
    if (auto l = spdlog::get("moef")) return l;
    auto l = spdlog::stderr_color_mt("moef");
    l->set_level(spdlog::level::warn);
    return l;
  }();
  return log;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Exit{kExitBadFile, "cannot open " + path};
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Exit{kExitBadFile, "cannot write " + path};
  return out;
}

template <typename F>
auto read_file(const std::string& path, F&& reader) {
  auto in = open_in(path);
  try {
    return reader(in);
  } catch (const io::ParseError& e) {
    throw Exit{kExitBadFile, path + ": " + e.what()};
  }
}

std::string fixed4(double x) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << x;
  return s.str();
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

struct RunArgs {
  std::string experts, out, config, loss, q_diag;
  std::optional<double> lambda, alpha, delta, dt;
  bool parallel = true;
};

FusionConfig resolve_config(const RunArgs& a) {
  FusionConfig cfg;
  std::set<std::string> have;
  if (!a.config.empty()) {
    const auto file = read_file(a.config, io::read_config);
    cfg = file.fusion;
    have = file.fusion_keys;
  }
  if (!a.loss.empty()) {
    cfg.loss = a.loss == "bce" ? Loss::BCE : Loss::MSE;
    have.insert("loss");
  }
  if (!a.q_diag.empty()) cfg.q_diag = a.q_diag == "column" ? QDiagonal::Column : QDiagonal::Row;
  if (a.lambda) cfg.lambda = *a.lambda, have.insert("lambda");
  if (a.alpha) cfg.alpha = *a.alpha, have.insert("alpha");
  if (a.delta) cfg.delta = *a.delta;
  if (a.dt) cfg.dt = *a.dt;
  for (const char* key : {"loss", "lambda", "alpha"})
    if (!have.count(key)) throw Exit{kExitUsage, std::string("--") + key + " is required (flag or --config)"};
  try {
    cfg.validate();
  } catch (const DomainError& e) {
    throw Exit{kExitUsage, std::string("invalid configuration: ") + e.what()};
  }
  return cfg;
}

bool is_label_stream(const std::vector<ObservationRecord>& obs) {
  return std::all_of(obs.begin(), obs.end(), [](const auto& r) { return r.y == 0.0 || r.y == 1.0; });
}

double binary_f1(const std::vector<ObservationRecord>& obs, const std::function<double(std::size_t)>& prob) {
  std::vector<int> truth, pred;
  for (std::size_t k = 0; k < obs.size(); ++k) {
    truth.push_back(obs[k].y == 1.0 ? 1 : 0);
    pred.push_back(prob(k) >= 0.5 ? 1 : 0);
  }
  return weighted_classification_report(truth, pred, std::vector<int>{0, 1},
                                        [](int c) { return std::to_string(c); })
      .f1;
}

int cmd_run(const RunArgs& a, std::ostream& out) {
  const FusionConfig cfg = resolve_config(a);
  const auto obs = read_file(a.experts, io::read_observations);
  auto sink = open_out(a.out);
  if (obs.empty()) {
    out << "ticks 0\n";
    return kExitOk;
  }
  const std::size_t n = obs.front().predictions.size();
  logger()->info("run: {} experts, {} ticks, loss={}, parallel={}", n, obs.size(), to_string(cfg.loss), a.parallel);

  MoefEngine engine(n, cfg);
  engine.set_parallel(a.parallel);
  std::vector<TickOutput> ticks;
  try {
    ticks = run_stream(engine, obs);
  } catch (const std::exception& e) {
    throw Exit{kExitBadFile, a.experts + ": " + e.what()};
  }
  io::write_diagnostics(sink, ticks);

  out << "ticks " << ticks.size() << '\n';
  if (cfg.loss == Loss::BCE && is_label_stream(obs)) {
    out << "weighted_f1 fused " << fixed4(binary_f1(obs, [&](std::size_t k) { return ticks[k].fused; })) << '\n';
    for (std::size_t i = 0; i < n; ++i)
      out << "weighted_f1 expert_" << i << ' '
          << fixed4(binary_f1(obs, [&](std::size_t k) { return obs[k].predictions[i]; })) << '\n';
  } else {
    double fused = 0.0;
    std::vector<double> experts(n, 0.0);
    for (std::size_t k = 0; k < obs.size(); ++k) {
      fused += (obs[k].y - ticks[k].fused) * (obs[k].y - ticks[k].fused);
      for (std::size_t i = 0; i < n; ++i)
        experts[i] += (obs[k].y - obs[k].predictions[i]) * (obs[k].y - obs[k].predictions[i]);
    }
    out << "cumulative_mse fused " << io::format_double(fused) << '\n';
    for (std::size_t i = 0; i < n; ++i) out << "cumulative_mse expert_" << i << ' ' << io::format_double(experts[i]) << '\n';
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string scenario, out, truth;
  std::optional<std::uint64_t> seed;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  const auto file = read_file(a.scenario, io::read_config);
  if (!file.scenario) throw Exit{kExitBadFile, a.scenario + ": no scenario.* keys"};
  Scenario sc = *file.scenario;
  if (a.seed) sc.seed = *a.seed;
  SimulatedPath path;
  try {
    path = synthesize(sc);
  } catch (const std::exception& e) {
    throw Exit{kExitBadFile, a.scenario + ": " + e.what()};
  }
  logger()->info("simulate: {} experts, {} records, seed {}, rng {}", sc.experts.size(), sc.t_max, sc.seed, Rng::kId);
  auto sink = open_out(a.out);
  io::write_observations(sink, path.observations, sc.experts.size());
  if (!a.truth.empty()) {
    auto t = open_out(a.truth);
    io::write_truth(t, path.observations, path.hidden, sc.seed);
  }
  out << "records " << path.observations.size() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct Series {
  std::string path;
  std::vector<std::int64_t> t;
  std::vector<std::size_t> lines;
  std::vector<double> values;               // price-like column
  std::optional<std::vector<MovementLabel>> labels;
};

std::optional<MovementLabel> parse_label(const std::string& s) {
  if (s == "Fall" || s == "-1") return MovementLabel::Fall;
  if (s == "Neutral" || s == "0") return MovementLabel::Neutral;
  if (s == "Rise" || s == "1") return MovementLabel::Rise;
  return std::nullopt;
}

Series load_series(const std::string& path, std::initializer_list<const char*> value_columns) {
  Series s;
  s.path = path;
  auto in = open_in(path);
  const int first = in.peek();
  try {
    if (first == '{') {
      for (const auto& o : io::read_diagnostics(in)) {
        s.t.push_back(o.t);
        s.values.push_back(o.fused);
        s.lines.push_back(s.t.size());
      }
      return s;
    }
    const auto table = io::read_csv(in);
    const auto tcol = table.column("t");
    if (!tcol) throw Exit{kExitBadFile, path + ": line 1: missing t column"};
    const auto lcol = table.column("label");
    std::optional<std::size_t> vcol;
    for (const char* name : value_columns)
      if (!vcol) vcol = table.column(name);
    if (!lcol && !vcol) throw Exit{kExitBadFile, path + ": line 1: no label or value column"};
    if (lcol) s.labels.emplace();
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      const auto& row = table.rows[r];
      const std::size_t line = table.line_numbers[r];
      const auto t = io::parse_int(row[*tcol]);
      if (!t) throw io::ParseError(line, "t must be an integer");
      s.t.push_back(*t);
      s.lines.push_back(line);
      if (lcol) {
        const auto l = parse_label(row[*lcol]);
        if (!l) throw io::ParseError(line, "unknown label '" + row[*lcol] + "'");
        s.labels->push_back(*l);
      } else {
        const auto v = io::parse_double(row[*vcol]);
        if (!v) throw io::ParseError(line, "not a finite number: '" + row[*vcol] + "'");
        s.values.push_back(*v);
      }
    }
  } catch (const io::ParseError& e) {
    throw Exit{kExitBadFile, path + ": " + e.what()};
  }
  return s;
}

void check_aligned(const Series& pred, const Series& truth) {
  const std::size_t n = std::min(pred.t.size(), truth.t.size());
  for (std::size_t k = 0; k < n; ++k)
    if (pred.t[k] != truth.t[k])
      throw Exit{kExitBadFile, "misaligned at " + pred.path + " line " + std::to_string(pred.lines[k]) + " / " +
                                   truth.path + " line " + std::to_string(truth.lines[k]) + ": t=" +
                                   std::to_string(pred.t[k]) + " vs t=" + std::to_string(truth.t[k])};
  if (pred.t.size() != truth.t.size())
    throw Exit{kExitBadFile, "misaligned: " + std::to_string(pred.t.size()) + " prediction rows vs " +
                                 std::to_string(truth.t.size()) + " truth rows"};
  if (pred.t.empty()) throw Exit{kExitBadFile, "nothing to evaluate"};
}

int cmd_evaluate(const std::string& pred_path, const std::string& truth_path, const std::string& task,
                 const std::string& out_path, std::ostream& out) {
  const Series pred = load_series(pred_path, {"fused", "y"});
  const Series truth = load_series(truth_path, {"y"});
  check_aligned(pred, truth);

  io::Json report;
  report["task"] = task;
  if (task == "mse") {
    if (pred.labels || truth.labels) throw Exit{kExitBadFile, "mse task needs numeric columns"};
    std::vector<std::vector<double>> tr, pr;
    for (std::size_t k = 0; k < truth.values.size(); ++k) {
      tr.push_back({truth.values[k]});
      pr.push_back({pred.values[k]});
    }
    const double total = horizon_mse(tr, pr);
    const double mean = total / static_cast<double>(tr.size());
    report["rows"] = tr.size();
    report["horizon_mse"] = round4(total);
    report["mse"] = round4(mean);
    out << "mse " << fixed4(mean) << "\nhorizon_mse " << fixed4(total) << '\n';
  } else {
    std::vector<MovementLabel> t_labels, p_labels;
    if (pred.labels && truth.labels) {
      t_labels = *truth.labels;
      p_labels = *pred.labels;
    } else if (!pred.labels && !truth.labels) {
      try {
        for (std::size_t k = 1; k < truth.values.size(); ++k) {
          t_labels.push_back(label_from_pct(pct_change(truth.values[k], truth.values[k - 1])));
          p_labels.push_back(label_from_pct(pct_change(pred.values[k], truth.values[k - 1])));
        }
      } catch (const DomainError& e) {
        throw Exit{kExitBadFile, truth_path + ": " + e.what()};
      }
      if (t_labels.empty()) throw Exit{kExitBadFile, "movement task needs at least two price rows"};
    } else {
      throw Exit{kExitBadFile, "movement task needs label columns in both files or prices in both"};
    }
    const auto rep = weighted_classification_report(t_labels, p_labels);
    report["rows"] = t_labels.size();
    report["f1"] = round4(rep.f1);
    report["accuracy"] = round4(rep.accuracy);
    report["precision"] = round4(rep.precision);
    report["recall"] = round4(rep.recall);
    io::Json per = io::Json::array();
    for (const auto& c : rep.per_class)
      per.push_back({{"class", c.name},
                     {"precision", round4(c.precision)},
                     {"recall", round4(c.recall)},
                     {"f1", round4(c.f1)},
                     {"support", c.support}});
    report["per_class"] = per;
    report["confusion"] = {{"classes", rep.confusion.class_names}, {"counts", rep.confusion.counts}};
    out << "f1 " << fixed4(rep.f1) << "\naccuracy " << fixed4(rep.accuracy) << "\nprecision "
        << fixed4(rep.precision) << "\nrecall " << fixed4(rep.recall) << '\n';
  }
  auto sink = open_out(out_path);
  sink << report.dump(2) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// oracle-check
// ---------------------------------------------------------------------------

int cmd_oracle_check(std::int64_t trials, std::uint64_t seed, std::ostream& out) {
  if (trials < 1) throw Exit{kExitUsage, "--trials must be >= 1"};
  const std::vector<SuiteResult> results{
      matrix_log_roundtrip_suite(trials, seed),
      softmin_grid_suite(trials, seed),
      kl_bound_suite(trials, seed),
      variance_suite(10000, seed),
  };
  bool all = true;
  for (const auto& r : results) {
    out << (r.passed ? "PASS " : "FAIL ") << r.name << " worst=" << io::format_double(r.worst)
        << " threshold=" << io::format_double(r.threshold) << '\n';
    if (!r.passed) {
      out << "  worst case: " << r.worst_case.dump() << '\n';
      all = false;
    }
  }
  return all ? kExitOk : kExitOracleFailure;
}

}  // namespace

void configure_logging() {
  const char* env = std::getenv("MOEF_LOG");
  const std::string level = env ? env : "warn";
  auto log = logger();
  if (level == "debug")
    log->set_level(spdlog::level::debug);
  else if (level == "info")
    log->set_level(spdlog::level::info);
  else if (level == "error")
    log->set_level(spdlog::level::err);
  else
    log->set_level(spdlog::level::warn);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Online mixture-of-experts fusion with parallel regime filters"};
  app.name(args.empty() ? "moef" : args.front());
  app.require_subcommand(1);

  RunArgs ra;
  auto* run_cmd = app.add_subcommand("run", "Fuse an observations file and write per-tick diagnostics");
  run_cmd->add_option("--experts", ra.experts, "Observations CSV (t,y,expert_0,...)")->required();
  run_cmd->add_option("--out", ra.out, "Diagnostics JSONL output")->required();
  run_cmd->add_option("--config", ra.config, "key = value config file; flags override it");
  run_cmd->add_option("--loss", ra.loss)->check(CLI::IsMember({"bce", "mse"}));
  run_cmd->add_option("--lambda", ra.lambda, "Gibbs temperature (> 0)");
  run_cmd->add_option("--alpha", ra.alpha, "Perturbation weight in (0,1)");
  run_cmd->add_option("--delta", ra.delta, "Noise decay in (0,1]");
  run_cmd->add_option("--dt", ra.dt, "Filter step size");
  run_cmd->add_option("--q-diag", ra.q_diag)->check(CLI::IsMember({"row", "column"}));
  run_cmd->add_flag("--parallel,!--no-parallel", ra.parallel, "Update the expert filters concurrently");

  SimulateArgs sa;
  auto* sim_cmd = app.add_subcommand("simulate", "Synthesize a regime-switching observations file");
  sim_cmd->add_option("--scenario", sa.scenario, "Scenario config file")->required();
  sim_cmd->add_option("--seed", sa.seed, "Overrides scenario.seed");
  sim_cmd->add_option("--out", sa.out, "Observations CSV output")->required();
  sim_cmd->add_option("--truth", sa.truth, "Hidden-state CSV output (t,active_expert)");

  std::string pred, truth, task, eval_out;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score predictions against the truth");
  eval_cmd->add_option("--pred", pred, "Diagnostics JSONL or CSV with t and fused/y/label")->required();
  eval_cmd->add_option("--truth", truth, "CSV with t and y or label")->required();
  eval_cmd->add_option("--task", task)->required()->check(CLI::IsMember({"movement", "mse"}));
  eval_cmd->add_option("--out", eval_out, "JSON report output")->required();

  std::int64_t trials = 100;
  std::uint64_t seed = 0;
  auto* oracle_cmd = app.add_subcommand("oracle-check", "Run the numerical oracle suites");
  oracle_cmd->add_option("--trials", trials, "Random instances per suite");
  oracle_cmd->add_option("--seed", seed);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*run_cmd) return cmd_run(ra, out);
    if (*sim_cmd) return cmd_simulate(sa, out);
    if (*eval_cmd) return cmd_evaluate(pred, truth, task, eval_out, out);
    return cmd_oracle_check(trials, seed, out);
  } catch (const Exit& e) {
    err << "error: " << e.message << '\n';
    return e.code;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitBadFile;
  }
}

}  // namespace moef::cli
