#include "cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>

#include "prerankcal/csv.hpp"
#include "prerankcal/data.hpp"
#include "prerankcal/evaluation.hpp"
#include "prerankcal/model.hpp"
#include "prerankcal/parallel.hpp"
#include "prerankcal/random.hpp"
#include "prerankcal/training.hpp"
#include "prerankcal/version.hpp"

namespace prerankcal {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

/// Bad flag values detected after parsing.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataFlags {
  std::string data;
  std::string synth;
  std::uint64_t seed = 0;
  std::size_t run_index = 1;
  std::string split = "0.8,0.1,0.1";
};

struct ModelFlags {
  std::string prerank = "location";
  std::string compose = "plain";
  double lambda = 0.0;
  std::size_t epochs = 200;
  std::size_t batch = 256;
  double learning_rate = 1e-4;
  std::size_t patience = 20;
  std::size_t components = 5;
  std::string hidden = "100,100,100";
  std::string score = "nll";
  std::size_t samples = 100;
  double tau = 100.0;
  std::size_t grid_size = 100;
  double p = 1.0;
  double pca_threshold = 0.8;
  bool fixed_noise = false;
};

struct EvalFlags {
  std::string checkpoint;
  bool oracle = false;
  std::string preranks;
  std::size_t samples = 100;
  std::size_t n_sims = 50000;
};

struct NullFlags {
  std::string pit_file;
  std::size_t n_sims = 50000;
  std::size_t runs = 0;
};

struct LoadedData {
  DataSplits splits;
  std::optional<SynthDataset> synth;
  json echo;
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  for (auto field : csv::split_fields(text)) {
    if (!field.empty()) out.emplace_back(field);
  }
  return out;
}

std::vector<double> parse_doubles(const std::string& text, const std::string& flag) {
  std::vector<double> out;
  for (const auto& item : split_list(text)) {
    const auto v = csv::parse_cell(item);
    if (!v) throw UsageError(flag + ": '" + item + "' is not a number");
    out.push_back(*v);
  }
  return out;
}

std::vector<std::size_t> parse_sizes(const std::string& text, const std::string& flag) {
  std::vector<std::size_t> out;
  for (double v : parse_doubles(text, flag)) {
    if (v < 1.0 || v != std::floor(v)) throw UsageError(flag + ": expected positive integers");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

PreRankSpec parse_prerank(const std::string& text) {
  const auto spec = parse_label(text);
  if (!spec) {
    throw UsageError("--prerank: unknown pre-rank '" + text +
                     "' (expected marginal[_d], location, scale, dependency[_hH], pca[_d], hdr or copula)");
  }
  return *spec;
}

LoadedData load_data(const DataFlags& flags) {
  if (flags.data.empty() == flags.synth.empty()) throw UsageError("exactly one of --data or --synth is required");
  LoadedData out;
  Dataset raw;
  if (!flags.synth.empty()) {
    const auto colon = flags.synth.find(':');
    if (colon == std::string::npos) throw UsageError("--synth expects <kind>:<n>");
    const auto kind = parse_synth_kind(flags.synth.substr(0, colon));
    if (!kind) {
      throw UsageError("--synth: unknown kind '" + flags.synth.substr(0, colon) +
                       "' (expected linear_gaussian, bimodal, hetero_corr or lowrank)");
    }
    const auto n = csv::parse_cell(flags.synth.substr(colon + 1));
    if (!n || *n < 0.0 || *n != std::floor(*n)) throw UsageError("--synth: n must be a non-negative integer");
    out.synth = synth(*kind, static_cast<std::size_t>(*n), flags.seed);
    raw = out.synth->data;
    out.echo["synth"] = flags.synth;
  } else {
    LoadReport report;
    raw = load_csv(flags.data, "x_", "y_", &report);
    out.echo["data"] = flags.data;
    out.echo["rows_read"] = report.rows_read;
    out.echo["rows_rejected"] = report.rows_rejected;
  }
  const auto fractions = parse_doubles(flags.split, "--split");
  if (fractions.size() != 3) throw UsageError("--split expects three fractions train,val,test");
  SplitSpec spec{fractions[0], fractions[1], fractions[2], flags.seed, flags.run_index};
  out.splits = split(raw, spec);
  out.echo["seed"] = flags.seed;
  out.echo["run_index"] = flags.run_index;
  out.echo["split"] = fractions;
  out.echo["sizes"] = {out.splits.train.size(), out.splits.val.size(), out.splits.test.size()};
  return out;
}

RegularizerConfig make_regularizer(const ModelFlags& flags, std::size_t dim) {
  RegularizerConfig reg;
  reg.lambda = flags.lambda;
  reg.prerank = parse_prerank(flags.prerank);
  const auto composition = parse_composition(flags.compose);
  if (!composition) throw UsageError("--compose must be plain, marginal or pca");
  reg.composition = *composition;
  reg.samples = flags.samples;
  reg.tau = flags.tau;
  reg.grid_size = flags.grid_size;
  reg.p = flags.p;
  reg.pca_threshold = flags.pca_threshold;
  reg.prerank.explained_variance_threshold = flags.pca_threshold;
  reg.fixed_noise = flags.fixed_noise;
  reg.validate(dim);
  return reg;
}

NetworkConfig make_network(const ModelFlags& flags, const Dataset& data) {
  NetworkConfig config;
  config.input_dim = data.input_dim();
  config.output_dim = data.output_dim();
  config.components = flags.components;
  config.hidden = parse_sizes(flags.hidden, "--hidden");
  config.validate();
  return config;
}

TrainConfig make_train_config(const ModelFlags& flags, const DataFlags& data, std::size_t threads) {
  TrainConfig tc;
  tc.learning_rate = flags.learning_rate;
  tc.batch_size = flags.batch;
  tc.max_epochs = flags.epochs;
  tc.patience = flags.patience;
  tc.seed = split_seed(data.seed, data.run_index);
  if (flags.score == "nll") {
    tc.score = ScoreKind::Nll;
  } else if (flags.score == "energy") {
    tc.score = ScoreKind::Energy;
  } else {
    throw UsageError("--score must be nll or energy");
  }
  tc.threads = threads;
  tc.validate();
  return tc;
}

json echo_model(const ModelFlags& f) {
  return {{"prerank", f.prerank},   {"compose", f.compose},     {"lambda", f.lambda},
          {"epochs", f.epochs},     {"batch", f.batch},         {"learning_rate", f.learning_rate},
          {"patience", f.patience}, {"components", f.components}, {"hidden", f.hidden},
          {"score", f.score},       {"samples", f.samples},     {"tau", f.tau},
          {"grid_size", f.grid_size}, {"p", f.p},               {"pca_threshold", f.pca_threshold},
          {"fixed_noise", f.fixed_noise}};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
}

/// Collects what the command did; written to manifest.json on exit.
struct Manifest {
  std::string command;
  json config = json::object();
  json artifacts = json::object();
  fs::path dir;

  void write(int code, const std::string& error, double seconds) const {
    if (dir.empty()) return;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) return;
    json j;
    j["command"] = command;
    j["version"] = kVersion;
    j["config"] = config;
    j["artifacts"] = artifacts;
    j["exit_code"] = code;
    j["status"] = code == 0 ? "ok" : "failed";
    if (!error.empty()) j["error"] = error;
    j["wall_clock_seconds"] = seconds;
    std::ofstream out(dir / "manifest.json");
    if (out) out << j.dump(2) << '\n';
  }
};

int cmd_train(const DataFlags& df, const ModelFlags& mf, std::size_t threads, Manifest& manifest,
              std::ostream& out) {
  const auto data = load_data(df);
  manifest.config["data"] = data.echo;
  manifest.config["model"] = echo_model(mf);
  const NetworkConfig config = make_network(mf, data.splits.train);
  const RegularizerConfig reg = make_regularizer(mf, config.output_dim);
  const TrainConfig tc = make_train_config(mf, df, threads);
  manifest.config["train_seed"] = tc.seed;
  fs::create_directories(manifest.dir);
  write_text(manifest.dir / "config.json", manifest.config.dump(2) + "\n");
  manifest.artifacts["config"] = "config.json";

  const auto result = train(config, tc, reg, data.splits.train, data.splits.val);
  write_text(manifest.dir / "history.csv", result.history.to_csv());
  save_checkpoint(manifest.dir / "checkpoint.json", config, result.weights);
  manifest.artifacts["history"] = "history.csv";
  manifest.artifacts["checkpoint"] = "checkpoint.json";
  const auto& best = result.history.epochs[result.history.best_epoch];
  out << "trained " << result.history.epochs.size() << " epochs; best epoch " << best.epoch
      << " val_objective " << best.val_objective << '\n';
  out << "run directory: " << manifest.dir.string() << '\n';
  return kExitOk;
}

int cmd_evaluate(const DataFlags& df, const EvalFlags& ef, std::size_t threads, Manifest& manifest,
                 std::ostream& out) {
  if (ef.oracle == !ef.checkpoint.empty()) throw UsageError("exactly one of --checkpoint or --oracle is required");
  const auto data = load_data(df);
  manifest.config["data"] = data.echo;
  Predictor model;
  if (ef.oracle) {
    if (!data.synth) throw UsageError("--oracle requires --synth");
    model = standardized_truth(data.synth->truth, data.splits.standardization);
    manifest.config["model"] = "oracle";
  } else {
    fs::path path = ef.checkpoint;
    if (fs::is_directory(path)) path /= "checkpoint.json";
    const Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.config.input_dim != data.splits.test.input_dim() ||
        ckpt.config.output_dim != data.splits.test.output_dim()) {
      throw FormatError("checkpoint dimensions do not match the data");
    }
    model = make_predictor(ckpt.config, ckpt.weights);
    manifest.config["model"] = path.string();
  }
  EvaluationOptions options;
  for (const auto& token : split_list(ef.preranks)) {
    const auto kind = parse_kind(token);
    if (!kind) throw UsageError("--preranks: unknown pre-rank family '" + token + "'");
    options.kinds.push_back(*kind);
  }
  if (ef.n_sims == 0) throw UsageError("--n-sims must be at least 1");
  options.samples = ef.samples;
  options.n_sims = ef.n_sims;
  options.seed = split_seed(df.seed, df.run_index);
  options.threads = threads;
  manifest.config["preranks"] = ef.preranks.empty() ? "all" : ef.preranks;
  manifest.config["samples"] = ef.samples;
  manifest.config["n_sims"] = ef.n_sims;

  const CalibrationReport report = evaluate(model, data.splits.test, options);
  fs::create_directories(manifest.dir);
  write_text(manifest.dir / "report.json", report.to_json() + "\n");
  manifest.artifacts["report"] = "report.json";
  json curves = json::array();
  for (const auto& p : report.preranks) {
    const std::string name = "reliability_" + p.prerank + ".csv";
    write_reliability_csv(manifest.dir / name, p.reliability);
    curves.push_back(name);
  }
  manifest.artifacts["reliability"] = curves;
  write_pit_file(manifest.dir / "pits.csv", report.pits);
  manifest.artifacts["pits"] = "pits.csv";

  out << "n_test " << report.n_test << "  nll " << report.nll << "  energy " << report.energy << '\n';
  for (const auto& p : report.preranks) {
    out << p.prerank << "  pce " << p.pce << "  p " << p.p_value << "  holm_p " << p.holm_p << '\n';
  }
  return kExitOk;
}

int cmd_nulltest(const DataFlags& df, const NullFlags& nf, std::size_t threads, Manifest& manifest,
                 std::ostream& out) {
  if (nf.pit_file.empty()) throw UsageError("--pit-file is required");
  if (nf.n_sims == 0) throw UsageError("--n-sims must be at least 1");
  auto columns = load_pit_file(nf.pit_file);
  if (nf.runs > 1) {
    for (auto& col : columns) {
      if (col.runs.size() == nf.runs) continue;
      if (col.runs.size() != 1) throw UsageError("--runs does not match the run labels in the PIT file");
      const auto& all = col.runs.front();
      if (all.size() % nf.runs != 0) throw UsageError("--runs must divide the number of PIT rows");
      const std::size_t n = all.size() / nf.runs;
      std::vector<std::vector<double>> runs;
      for (std::size_t k = 0; k < nf.runs; ++k) runs.emplace_back(all.begin() + k * n, all.begin() + (k + 1) * n);
      col.runs = std::move(runs);
    }
  }
  manifest.config = {{"pit_file", nf.pit_file}, {"n_sims", nf.n_sims}, {"runs", nf.runs}, {"seed", df.seed}};
  const auto rows = significance_table(columns, QuantileGrid::uniform(100), nf.n_sims, df.seed, threads);
  std::ostringstream table;
  table << "prerank,pce,p_value,holm_p\n";
  for (const auto& r : rows) {
    table << r.name << ',' << csv::format_double(r.pce) << ',' << csv::format_double(r.p_value) << ','
          << csv::format_double(r.holm_p) << '\n';
  }
  fs::create_directories(manifest.dir);
  write_text(manifest.dir / "significance.csv", table.str());
  manifest.artifacts["significance"] = "significance.csv";
  out << table.str();
  return kExitOk;
}

int cmd_tune(const DataFlags& df, const ModelFlags& mf, const std::string& grid_text, std::size_t threads,
             Manifest& manifest, std::ostream& out) {
  const auto grid = parse_doubles(grid_text, "--grid");
  if (std::find(grid.begin(), grid.end(), 0.0) == grid.end()) throw UsageError("--grid must contain 0");
  const auto data = load_data(df);
  manifest.config["data"] = data.echo;
  manifest.config["model"] = echo_model(mf);
  manifest.config["grid"] = grid;
  const NetworkConfig config = make_network(mf, data.splits.train);
  const RegularizerConfig reg = make_regularizer(mf, config.output_dim);
  const TrainConfig tc = make_train_config(mf, df, threads);
  const TuneResult result = tune_lambda(grid, config, tc, reg, data.splits.train, data.splits.val);

  json j;
  j["selected_lambda"] = result.selected;
  j["reference_es"] = result.reference_es;
  j["es_budget"] = result.budget;
  if (grid.size() == 1) j["note"] = "degenerate grid: only lambda = 0 was evaluated";
  json trials = json::array();
  for (const auto& t : result.trials) {
    trials.push_back({{"lambda", t.lambda},
                      {"val_pce", t.val_pce},
                      {"val_es", t.val_es},
                      {"es_budget", result.budget},
                      {"within_budget", t.within_budget}});
  }
  j["trials"] = trials;
  fs::create_directories(manifest.dir);
  write_text(manifest.dir / "tune.json", j.dump(2) + "\n");
  manifest.artifacts["tune"] = "tune.json";
  out << "lambda,val_pce,val_es,es_budget,within_budget\n";
  for (const auto& t : result.trials) {
    out << t.lambda << ',' << t.val_pce << ',' << t.val_es << ',' << result.budget << ','
        << (t.within_budget ? "yes" : "no") << '\n';
  }
  out << "selected lambda " << result.selected << '\n';
  return kExitOk;
}

void add_data_flags(CLI::App* cmd, DataFlags& f) {
  auto* data = cmd->add_option("--data", f.data, "CSV with x_* feature and y_* target columns");
  auto* synth = cmd->add_option("--synth", f.synth, "Synthetic data <kind>:<n>");
  data->excludes(synth);
  synth->excludes(data);
  cmd->add_option("--seed", f.seed, "Seed for data generation, splitting and training");
  cmd->add_option("--run-index", f.run_index, "Split index in [1, 5]")->check(CLI::Range(1, 5));
  cmd->add_option("--split", f.split, "Train,val,test fractions");
}

void add_model_flags(CLI::App* cmd, ModelFlags& f) {
  cmd->add_option("--prerank", f.prerank, "Regularized pre-rank, e.g. location, marginal_2, pca_1");
  cmd->add_option("--compose", f.compose, "Combination with other terms: plain, marginal or pca");
  cmd->add_option("--lambda", f.lambda, "Regularization strength");
  cmd->add_option("--epochs", f.epochs, "Maximum number of epochs");
  cmd->add_option("--batch", f.batch, "Mini-batch size");
  cmd->add_option("--lr", f.learning_rate, "Adam learning rate");
  cmd->add_option("--patience", f.patience, "Early-stopping patience in epochs");
  cmd->add_option("--components", f.components, "Mixture components K");
  cmd->add_option("--hidden", f.hidden, "Hidden layer widths, comma separated");
  cmd->add_option("--score", f.score, "Training score: nll or energy");
  cmd->add_option("--samples", f.samples, "Predictive samples S per row for the regularizer");
  cmd->add_option("--tau", f.tau, "Sigmoid sharpness");
  cmd->add_option("--grid-size", f.grid_size, "Number of quantile levels M");
  cmd->add_option("--p", f.p, "Exponent of the PCE-KDE penalty");
  cmd->add_option("--pca-threshold", f.pca_threshold, "Explained variance threshold for d*");
  cmd->add_flag("--fixed-noise", f.fixed_noise, "Reuse the same Gaussian draws at every step");
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Pre-rank calibration for multivariate probabilistic regression"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  std::size_t threads = 0;
  std::string out_dir;
  DataFlags data_flags;
  ModelFlags model_flags;
  EvalFlags eval_flags;
  NullFlags null_flags;
  std::string grid = "0,0.01,0.1,1,5,10";

  auto common = [&](CLI::App* cmd) {
    cmd->add_option("--threads", threads, "Worker threads (default: PRERANKCAL_THREADS or all cores)");
    cmd->add_option("--out", out_dir, "Output directory");
  };
  auto* train_cmd = app.add_subcommand("train", "Train a mixture network");
  add_data_flags(train_cmd, data_flags);
  add_model_flags(train_cmd, model_flags);
  common(train_cmd);

  auto* eval_cmd = app.add_subcommand("evaluate", "Calibration report on the test split");
  add_data_flags(eval_cmd, data_flags);
  eval_cmd->add_option("--checkpoint", eval_flags.checkpoint, "Checkpoint file or training run directory");
  eval_cmd->add_flag("--oracle", eval_flags.oracle, "Use the true generator of --synth data");
  eval_cmd->add_option("--preranks", eval_flags.preranks, "Comma-separated pre-rank families (default: all)");
  eval_cmd->add_option("--samples", eval_flags.samples, "Predictive samples per row");
  eval_cmd->add_option("--n-sims", eval_flags.n_sims, "Null distribution replicates");
  common(eval_cmd);

  auto* null_cmd = app.add_subcommand("nulltest", "Significance of PCE values from a PIT file");
  null_cmd->add_option("--pit-file", null_flags.pit_file, "CSV of PIT values, one column per pre-rank");
  null_cmd->add_option("--n-sims", null_flags.n_sims, "Null distribution replicates");
  null_cmd->add_option("--runs", null_flags.runs, "Runs per statistic (k-run mean)");
  null_cmd->add_option("--seed", data_flags.seed, "Seed for the null simulation");
  common(null_cmd);

  auto* tune_cmd = app.add_subcommand("tune", "Select lambda under the energy-score budget");
  add_data_flags(tune_cmd, data_flags);
  add_model_flags(tune_cmd, model_flags);
  tune_cmd->add_option("--grid", grid, "Comma-separated lambda values (must contain 0)");
  common(tune_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  CLI::App* chosen = app.get_subcommands().front();
  Manifest manifest;
  manifest.command = chosen->get_name();
  manifest.dir = out_dir.empty() ? fs::path("prerankcal-" + manifest.command) : fs::path(out_dir);
  if (threads == 0) threads = default_thread_count();
  const auto start = std::chrono::steady_clock::now();
  int code = kExitOk;
  std::string error;
  try {
    if (chosen == train_cmd) {
      code = cmd_train(data_flags, model_flags, threads, manifest, out);
    } else if (chosen == eval_cmd) {
      code = cmd_evaluate(data_flags, eval_flags, threads, manifest, out);
    } else if (chosen == null_cmd) {
      code = cmd_nulltest(data_flags, null_flags, threads, manifest, out);
    } else {
      code = cmd_tune(data_flags, model_flags, grid, threads, manifest, out);
    }
  } catch (const UsageError& e) {
    code = kExitUsage;
    error = e.what();
  } catch (const ContractViolation& e) {
    code = kExitUsage;
    error = e.what();
  } catch (const NumericFailure& e) {
    code = kExitNumeric;
    error = e.what();
  } catch (const UndefinedMetric& e) {
    code = kExitData;
    error = e.what();
  } catch (const InsufficientSamples& e) {
    code = kExitData;
    error = e.what();
  } catch (const FormatError& e) {
    code = kExitData;
    error = e.what();
  } catch (const std::filesystem::filesystem_error& e) {
    code = kExitData;
    error = e.what();
  }
  if (!error.empty()) err << "error: " << error << '\n';
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  manifest.write(code, error, seconds);
  return code;
}

}  // namespace prerankcal
