#include "prerankcal/evaluation.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <map>
#include <numeric>

#include "prerankcal/csv.hpp"
#include "prerankcal/parallel.hpp"
#include "prerankcal/random.hpp"
#include "prerankcal/scoring.hpp"

namespace prerankcal {

namespace {

constexpr std::uint64_t kNullStream = 0x6e756c6c;  // "null"

const std::vector<PreRankKind> kAllKinds = {PreRankKind::Marginal, PreRankKind::Location, PreRankKind::Scale,
                                            PreRankKind::Dependency, PreRankKind::Pca, PreRankKind::Hdr,
                                            PreRankKind::Copula};

std::vector<PreRankSpec> expand(PreRankKind kind, std::size_t dim) {
  switch (kind) {
    case PreRankKind::Marginal:
    case PreRankKind::Pca: {
      std::vector<PreRankSpec> out;
      for (std::size_t d = 1; d <= dim; ++d) {
        out.push_back(kind == PreRankKind::Marginal ? PreRankSpec::marginal(d) : PreRankSpec::pca(d));
      }
      return out;
    }
    case PreRankKind::Location:
      return {PreRankSpec::location()};
    case PreRankKind::Scale:
      return {PreRankSpec::scale()};
    case PreRankKind::Dependency:
      return {PreRankSpec::dependency()};
    case PreRankKind::Hdr:
      return {PreRankSpec::hdr()};
    case PreRankKind::Copula:
      return {PreRankSpec::copula()};
  }
  return {};
}

}  // namespace

std::vector<SignificanceRow> significance_table(std::span<const PitColumn> columns, const QuantileGrid& grid,
                                                std::size_t n_sims, std::uint64_t seed, std::size_t threads) {
  require(n_sims >= 1, "significance: n_sims must be at least 1");
  // Columns sharing (N, runs) share one simulated null.
  std::map<std::pair<std::size_t, std::size_t>, NullDistribution> nulls;
  std::vector<SignificanceRow> rows;
  std::vector<double> raw;
  for (const auto& col : columns) {
    if (col.runs.empty() || col.runs.front().empty()) {
      throw UndefinedMetric("significance: pre-rank '" + col.name + "' has no PIT values");
    }
    const std::size_t n = col.runs.front().size();
    for (const auto& run : col.runs) {
      require(run.size() == n, "significance: runs of '" + col.name + "' differ in size");
    }
    const auto key = std::make_pair(n, col.runs.size());
    auto it = nulls.find(key);
    if (it == nulls.end()) {
      it = nulls.emplace(key, null_pce_distribution(n, grid, n_sims, seed, col.runs.size(), threads)).first;
    }
    double observed = 0.0;
    for (const auto& run : col.runs) observed += pce(run, grid);
    observed /= static_cast<double>(col.runs.size());
    SignificanceRow row;
    row.name = col.name;
    row.pce = observed;
    row.p_value = p_value(observed, it->second);
    rows.push_back(row);
    raw.push_back(row.p_value);
  }
  const auto adjusted = holm_correct(raw);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].holm_p = adjusted[i];
  return rows;
}

std::vector<PitColumn> load_pit_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": missing header row");
  const auto header = csv::split_fields(line);
  std::optional<std::size_t> run_col;
  std::vector<std::size_t> value_cols;
  std::vector<PitColumn> columns;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == "run") {
      run_col = c;
    } else {
      value_cols.push_back(c);
      columns.push_back({std::string(header[c]), {}});
    }
  }
  if (columns.empty()) throw FormatError(path.string() + ": no PIT columns");
  std::map<long long, std::size_t> run_slot;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto fields = csv::split_fields(line);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (fields.size() != header.size()) throw FormatError(where + ": wrong number of fields");
    std::size_t slot = 0;
    if (run_col) {
      const auto r = csv::parse_cell(fields[*run_col]);
      if (!r || *r != std::floor(*r)) throw FormatError(where + ": run label must be an integer");
      slot = run_slot.emplace(static_cast<long long>(*r), run_slot.size()).first->second;
    }
    for (std::size_t j = 0; j < value_cols.size(); ++j) {
      const auto v = csv::parse_cell(fields[value_cols[j]]);
      if (!v || *v < 0.0 || *v > 1.0) throw FormatError(where + ": PIT values must be numbers in [0, 1]");
      auto& runs = columns[j].runs;
      if (runs.size() <= slot) runs.resize(slot + 1);
      runs[slot].push_back(*v);
    }
  }
  return columns;
}

void write_pit_file(const std::filesystem::path& path, std::span<const PitColumn> columns) {
  require(!columns.empty(), "write_pit_file: no columns");
  const std::size_t n = columns.front().runs.at(0).size();
  for (const auto& c : columns) {
    require(c.runs.size() == 1 && c.runs[0].size() == n, "write_pit_file: columns must be single equal-length runs");
  }
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  for (std::size_t j = 0; j < columns.size(); ++j) out << (j ? "," : "") << columns[j].name;
  out << '\n';
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < columns.size(); ++j) out << (j ? "," : "") << csv::format_double(columns[j].runs[0][i]);
    out << '\n';
  }
}

void write_reliability_csv(const std::filesystem::path& path, const ReliabilityCurve& curve) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "alpha,empirical_cdf\n";
  for (const auto& [alpha, cdf] : curve) out << csv::format_double(alpha) << ',' << csv::format_double(cdf) << '\n';
}

CalibrationReport evaluate(const Predictor& model, const Dataset& test, const EvaluationOptions& options) {
  const std::size_t n = test.size();
  if (n == 0) throw UndefinedMetric("evaluate: the test split has no rows");
  const std::size_t dim = test.output_dim();
  require(options.n_sims >= 1, "evaluate: n_sims must be at least 1");

  std::vector<PreRankKind> kinds = options.kinds;
  if (kinds.empty()) {
    for (auto k : kAllKinds) {
      if (k == PreRankKind::Dependency && dim < 2) continue;
      kinds.push_back(k);
    }
  }
  std::vector<PreRankSpec> specs;
  std::vector<std::pair<std::size_t, std::size_t>> family_range;
  for (auto k : kinds) {
    const auto family = expand(k, dim);
    for (const auto& s : family) validate(s, dim);
    family_range.emplace_back(specs.size(), specs.size() + family.size());
    specs.insert(specs.end(), family.begin(), family.end());
  }

  PitOptions pit_options;
  pit_options.samples = options.samples;
  pit_options.tau = options.tau;
  pit_options.mode = PitMode::Hard;
  pit_options.seed = options.seed;
  pit_options.threads = options.threads;
  const auto batches = pit_batches(specs, model, test.features, test.targets, pit_options);

  std::vector<double> nlls(n), energies(n);
  parallel_for(n, options.threads, [&](std::size_t i) {
    const MixtureParams mixture = model(test.features.row(i));
    const SampleSet s = sample(mixture, split_seed(options.seed, i), kEnergySamples);
    nlls[i] = nll(mixture, test.targets.row(i));
    energies[i] = energy_score(s, test.targets.row(i));
  });

  CalibrationReport report;
  report.n_test = n;
  report.samples = options.samples;
  report.n_sims = options.n_sims;
  report.standardized = test.standardized;
  report.nll = std::accumulate(nlls.begin(), nlls.end(), 0.0) / static_cast<double>(n);
  report.energy = std::accumulate(energies.begin(), energies.end(), 0.0) / static_cast<double>(n);
  for (std::size_t j = 0; j < specs.size(); ++j) report.pits.push_back({label(specs[j]), {batches[j].pit_values}});

  const QuantileGrid grid = QuantileGrid::uniform(options.grid_size);
  const NullDistribution null =
      null_pce_distribution(n, grid, options.n_sims, split_seed(options.seed, kNullStream), 1, options.threads);
  const double q95 = null_quantile(null, 0.95);
  std::vector<double> raw;
  for (std::size_t f = 0; f < kinds.size(); ++f) {
    const auto [lo, hi] = family_range[f];
    PreRankReport entry;
    entry.prerank = std::string(kind_token(kinds[f]));
    entry.null_q95 = q95;
    entry.reliability.assign(grid.size(), {0.0, 0.0});
    const double width = static_cast<double>(hi - lo);
    for (std::size_t j = lo; j < hi; ++j) {
      const auto curve = reliability_curve(batches[j].pit_values, grid);
      const double value = pce_from_curve(curve);
      entry.pce += value / width;
      for (std::size_t m = 0; m < curve.size(); ++m) {
        entry.reliability[m].first = curve[m].first;
        entry.reliability[m].second += curve[m].second / width;
      }
      if (hi - lo > 1) entry.components.emplace_back(label(specs[j]), value);
    }
    entry.p_value = p_value(entry.pce, null);
    raw.push_back(entry.p_value);
    report.preranks.push_back(std::move(entry));
  }
  const auto adjusted = holm_correct(raw);
  for (std::size_t f = 0; f < report.preranks.size(); ++f) report.preranks[f].holm_p = adjusted[f];
  return report;
}

std::string CalibrationReport::to_json() const {
  nlohmann::ordered_json j;
  j["format"] = "prerankcal-calibration-report";
  j["version"] = 1;
  j["n_test"] = n_test;
  j["samples"] = samples;
  j["n_sims"] = n_sims;
  j["units"] = standardized ? "standardized" : "original";
  j["nll"] = nll;
  j["energy_score"] = energy;
  auto list = nlohmann::ordered_json::array();
  for (const auto& p : preranks) {
    nlohmann::ordered_json e;
    e["prerank"] = p.prerank;
    e["pce"] = p.pce;
    e["p_value"] = p.p_value;
    e["holm_p"] = p.holm_p;
    e["null_q95"] = p.null_q95;
    auto curve = nlohmann::ordered_json::array();
    for (const auto& [alpha, cdf] : p.reliability) curve.push_back({alpha, cdf});
    e["reliability"] = std::move(curve);
    auto comps = nlohmann::ordered_json::array();
    for (const auto& [name, value] : p.components) comps.push_back({{"prerank", name}, {"pce", value}});
    e["components"] = std::move(comps);
    list.push_back(std::move(e));
  }
  j["preranks"] = std::move(list);
  return j.dump(2);
}

}  // namespace prerankcal
