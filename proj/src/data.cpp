#include "prerankcal/data.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include "prerankcal/csv.hpp"
#include "prerankcal/random.hpp"

namespace prerankcal {

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.features = features.select(rows);
  out.targets = targets.select(rows);
  out.feature_names = feature_names;
  out.target_names = target_names;
  out.standardized = standardized;
  return out;
}

using csv::format_double;
using csv::parse_cell;
using csv::split_fields;
using csv::trim;

Dataset load_csv(const std::filesystem::path& path, std::string_view feature_prefix,
                 std::string_view target_prefix, LoadReport* report) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": missing header row");
  const auto header = split_fields(line);
  std::vector<std::size_t> feature_cols, target_cols;
  Dataset ds;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c].starts_with(target_prefix)) {
      target_cols.push_back(c);
      ds.target_names.emplace_back(header[c]);
    } else if (header[c].starts_with(feature_prefix)) {
      feature_cols.push_back(c);
      ds.feature_names.emplace_back(header[c]);
    }
  }
  if (target_cols.empty()) {
    throw FormatError(path.string() + ": no target columns with prefix '" + std::string(target_prefix) + "'");
  }
  if (feature_cols.empty()) {
    throw FormatError(path.string() + ": no feature columns with prefix '" + std::string(feature_prefix) + "'");
  }
  ds.features = RowMatrix(0, feature_cols.size());
  ds.targets = RowMatrix(0, target_cols.size());

  LoadReport local;
  std::vector<double> xs(feature_cols.size()), ys(target_cols.size());
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++local.rows_read;
    const auto fields = split_fields(line);
    bool ok = fields.size() == header.size();
    for (std::size_t i = 0; ok && i < feature_cols.size(); ++i) {
      const auto v = parse_cell(fields[feature_cols[i]]);
      ok = v.has_value();
      if (ok) xs[i] = *v;
    }
    for (std::size_t i = 0; ok && i < target_cols.size(); ++i) {
      const auto v = parse_cell(fields[target_cols[i]]);
      ok = v.has_value();
      if (ok) ys[i] = *v;
    }
    if (!ok) {
      ++local.rows_rejected;
      continue;
    }
    ds.features.append_row(xs);
    ds.targets.append_row(ys);
  }
  if (local.rows_rejected > 0) {
    std::clog << "warning: " << path.string() << ": rejected " << local.rows_rejected << " of "
              << local.rows_read << " rows with missing or non-numeric cells\n";
  }
  if (local.rows_read > 0 && 2 * local.rows_rejected > local.rows_read) {
    throw FormatError(path.string() + ": more than half of the rows were rejected");
  }
  if (report) *report = local;
  return ds;
}

void write_csv(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  std::vector<std::string> names = dataset.feature_names;
  for (std::size_t i = names.size(); i < dataset.input_dim(); ++i) names.push_back("x_" + std::to_string(i));
  std::vector<std::string> targets = dataset.target_names;
  for (std::size_t i = targets.size(); i < dataset.output_dim(); ++i) targets.push_back("y_" + std::to_string(i));
  names.insert(names.end(), targets.begin(), targets.end());
  for (std::size_t c = 0; c < names.size(); ++c) out << (c ? "," : "") << names[c];
  out << '\n';
  for (std::size_t r = 0; r < dataset.size(); ++r) {
    bool first = true;
    for (double v : dataset.features.row(r)) {
      out << (first ? "" : ",") << format_double(v);
      first = false;
    }
    for (double v : dataset.targets.row(r)) {
      out << (first ? "" : ",") << format_double(v);
      first = false;
    }
    out << '\n';
  }
}

void SplitSpec::validate() const {
  require(train > 0.0 && val > 0.0 && test > 0.0, "split: every fraction must be positive");
  require(std::abs(train + val + test - 1.0) <= 1e-9, "split: fractions must sum to 1");
  require(run_index >= 1 && run_index <= 5, "split: run index must be in [1, 5]");
}

namespace {

void column_stats(const RowMatrix& m, std::vector<double>& mean, std::vector<double>& sd) {
  mean.assign(m.cols, 0.0);
  sd.assign(m.cols, 1.0);
  if (m.rows == 0) return;
  const double n = static_cast<double>(m.rows);
  for (std::size_t c = 0; c < m.cols; ++c) {
    double acc = 0.0;
    for (std::size_t r = 0; r < m.rows; ++r) acc += m(r, c);
    mean[c] = acc / n;
    double sq = 0.0;
    for (std::size_t r = 0; r < m.rows; ++r) sq += (m(r, c) - mean[c]) * (m(r, c) - mean[c]);
    const double s = std::sqrt(sq / n);
    sd[c] = s > 0.0 ? s : 1.0;
  }
}

void apply_stats(RowMatrix& m, const std::vector<double>& mean, const std::vector<double>& sd) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) m(r, c) = (m(r, c) - mean[c]) / sd[c];
  }
}

}  // namespace

Standardization fit_standardization(const Dataset& dataset) {
  Standardization s;
  column_stats(dataset.features, s.feature_mean, s.feature_sd);
  column_stats(dataset.targets, s.target_mean, s.target_sd);
  return s;
}

Dataset apply_standardization(const Dataset& dataset, const Standardization& stats) {
  require(stats.feature_mean.size() == dataset.input_dim() && stats.target_mean.size() == dataset.output_dim(),
          "standardization: column counts do not match");
  Dataset out = dataset;
  apply_stats(out.features, stats.feature_mean, stats.feature_sd);
  apply_stats(out.targets, stats.target_mean, stats.target_sd);
  out.standardized = true;
  return out;
}

DataSplits split(const Dataset& dataset, const SplitSpec& spec) {
  spec.validate();
  const std::size_t n = dataset.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng = make_rng(split_seed(spec.seed, spec.run_index));
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto n_train = std::min(n, static_cast<std::size_t>(std::llround(spec.train * static_cast<double>(n))));
  const auto n_val =
      std::min(n - n_train, static_cast<std::size_t>(std::llround(spec.val * static_cast<double>(n))));
  DataSplits out;
  out.train_index.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.val_index.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
                       perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  out.test_index.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), perm.end());
  const Dataset train_raw = dataset.subset(out.train_index);
  out.standardization = fit_standardization(train_raw);
  out.train = apply_standardization(train_raw, out.standardization);
  out.val = apply_standardization(dataset.subset(out.val_index), out.standardization);
  out.test = apply_standardization(dataset.subset(out.test_index), out.standardization);
  return out;
}

std::string_view synth_token(SynthKind kind) {
  switch (kind) {
    case SynthKind::LinearGaussian:
      return "linear_gaussian";
    case SynthKind::Bimodal:
      return "bimodal";
    case SynthKind::HeteroCorr:
      return "hetero_corr";
    case SynthKind::LowRank:
      return "lowrank";
  }
  return "unknown";
}

std::optional<SynthKind> parse_synth_kind(std::string_view token) {
  for (auto kind : {SynthKind::LinearGaussian, SynthKind::Bimodal, SynthKind::HeteroCorr, SynthKind::LowRank}) {
    if (synth_token(kind) == token) return kind;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// generators

namespace {

constexpr std::size_t kLinearInputs = 4;
constexpr std::size_t kLinearOutputs = 3;
constexpr double kLinearA[kLinearOutputs][kLinearInputs] = {
    {1.0, -0.5, 0.0, 0.3},
    {0.2, 0.8, -0.6, 0.0},
    {-0.4, 0.0, 0.5, 0.9},
};
// lower Cholesky factor of the noise covariance
constexpr double kLinearChol[kLinearOutputs * kLinearOutputs] = {
    0.6, 0.0, 0.0,  //
    0.3, 0.5, 0.0,  //
    -0.2, 0.25, 0.4,
};

MixtureParams bimodal_truth(std::span<const double> x) {
  // modes at m(x) +- c (1, 1), isotropic spread
  constexpr double kOffset = 1.2;
  constexpr double kSpread = 0.5;
  MixtureParams p(2, 2);
  const double w = sigmoid(0.5 * x[0]);
  p.weights = {w, 1.0 - w};
  const double m0 = 0.6 * x[1];
  const double m1 = -0.4 * x[1] + 0.3 * x[0];
  for (std::size_t k = 0; k < 2; ++k) {
    const double sign = k == 0 ? 1.0 : -1.0;
    p.means[k * 2 + 0] = m0 + sign * kOffset;
    p.means[k * 2 + 1] = m1 + sign * kOffset;
    p.chol_at(k, 0, 0) = kSpread;
    p.chol_at(k, 1, 1) = kSpread;
  }
  return p;
}

void set_correlated_chol(MixtureParams& p, std::size_t k, double sd0, double sd1, double rho) {
  p.chol_at(k, 0, 0) = sd0;
  p.chol_at(k, 1, 0) = rho * sd1;
  p.chol_at(k, 1, 1) = std::sqrt(1.0 - rho * rho) * sd1;
}

MixtureParams hetero_corr_truth(std::span<const double> x) {
  MixtureParams p(2, 2);
  const double w = sigmoid(0.5 * x[0]);
  p.weights = {w, 1.0 - w};
  const double m0 = 0.5 * x[1];
  const double m1 = -0.3 * x[1] + 0.2 * x[0];
  // tight positively correlated component above a wide negatively correlated one
  constexpr double kShift[2] = {0.6, -0.6};
  for (std::size_t k = 0; k < 2; ++k) {
    p.means[k * 2 + 0] = m0 + kShift[k];
    p.means[k * 2 + 1] = m1 + kShift[k];
  }
  set_correlated_chol(p, 0, 0.4, 0.4, 0.8);
  set_correlated_chol(p, 1, 1.4, 1.4, -0.8);
  return p;
}

constexpr std::size_t kLowRankInputs = 3;
constexpr std::size_t kLowRankOutputs = 8;
constexpr double kLowRankLoadings[kLowRankOutputs][3] = {
    {1.0, 0.6, 0.3},  {0.9, -0.5, 0.4}, {1.1, 0.4, -0.5}, {0.8, -0.7, -0.2},
    {1.0, 0.5, 0.6},  {0.9, -0.6, 0.1}, {1.2, 0.3, -0.4}, {0.7, -0.4, 0.5},
};
constexpr double kLowRankNoise = 0.45;

MixtureParams lowrank_truth(std::span<const double> x) {
  // latent f = (f1, f2, f3): f1 bimodal at +-1.2 (sd 0.3) with weight from x,
  // f2 ~ N(0.5 x2, 0.8^2), f3 ~ N(0, 0.6^2); y = B f + noise
  constexpr double kLatentSd[3] = {0.3, 0.8, 0.6};
  const double w = sigmoid(2.0 * x[1]);
  const double latent_mean_shift[3] = {0.5 * x[0], 0.5 * x[2], 0.0};
  MixtureParams p(2, kLowRankOutputs);
  p.weights = {w, 1.0 - w};
  Eigen::MatrixXd loadings(kLowRankOutputs, 3);
  for (std::size_t i = 0; i < kLowRankOutputs; ++i) {
    for (std::size_t j = 0; j < 3; ++j) loadings(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = kLowRankLoadings[i][j];
  }
  Eigen::Vector3d sd(kLatentSd[0], kLatentSd[1], kLatentSd[2]);
  Eigen::MatrixXd cov = loadings * sd.cwiseAbs2().asDiagonal() * loadings.transpose();
  cov.diagonal().array() += kLowRankNoise * kLowRankNoise;
  Eigen::MatrixXd chol = cov.llt().matrixL();
  for (std::size_t k = 0; k < 2; ++k) {
    const double sign = k == 0 ? 1.0 : -1.0;
    Eigen::Vector3d latent(latent_mean_shift[0] + sign * 1.2, latent_mean_shift[1], latent_mean_shift[2]);
    Eigen::VectorXd mu = loadings * latent;
    for (std::size_t i = 0; i < kLowRankOutputs; ++i) {
      p.means[k * kLowRankOutputs + i] = mu(static_cast<Eigen::Index>(i));
      for (std::size_t j = 0; j <= i; ++j) {
        p.chol_at(k, i, j) = chol(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      }
    }
  }
  return p;
}

}  // namespace

std::vector<double> linear_gaussian_chol() { return {std::begin(kLinearChol), std::end(kLinearChol)}; }

MixtureParams linear_gaussian_truth(std::span<const double> x, std::span<const double> noise_chol) {
  require(x.size() == kLinearInputs, "linear_gaussian: expects 4 inputs");
  std::vector<double> mean(kLinearOutputs, 0.0);
  for (std::size_t i = 0; i < kLinearOutputs; ++i) {
    for (std::size_t j = 0; j < kLinearInputs; ++j) mean[i] += kLinearA[i][j] * x[j];
  }
  return make_gaussian(mean, noise_chol);
}

SynthDataset synth(SynthKind kind, std::size_t n, std::uint64_t seed) {
  SynthDataset out;
  out.kind = kind;
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  switch (kind) {
    case SynthKind::LinearGaussian: {
      inputs = kLinearInputs;
      outputs = kLinearOutputs;
      const auto chol = linear_gaussian_chol();
      out.truth = [chol](std::span<const double> x) { return linear_gaussian_truth(x, chol); };
      break;
    }
    case SynthKind::Bimodal:
      inputs = 2;
      outputs = 2;
      out.truth = [](std::span<const double> x) { return bimodal_truth(x); };
      break;
    case SynthKind::HeteroCorr:
      inputs = 2;
      outputs = 2;
      out.truth = [](std::span<const double> x) { return hetero_corr_truth(x); };
      break;
    case SynthKind::LowRank:
      inputs = kLowRankInputs;
      outputs = kLowRankOutputs;
      out.truth = [](std::span<const double> x) { return lowrank_truth(x); };
      break;
  }
  out.data.features = RowMatrix(n, inputs);
  out.data.targets = RowMatrix(n, outputs);
  for (std::size_t i = 0; i < inputs; ++i) out.data.feature_names.push_back("x_" + std::to_string(i));
  for (std::size_t i = 0; i < outputs; ++i) out.data.target_names.push_back("y_" + std::to_string(i));
  Rng rng = make_rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t r = 0; r < n; ++r) {
    auto x = out.data.features.row(r);
    for (double& v : x) v = normal(rng);
    const MixtureParams cond = out.truth(x);
    const SampleSet draw = sample(cond, rng(), 1);
    std::copy(draw.values.begin(), draw.values.end(), out.data.targets.row(r).begin());
  }
  return out;
}

Predictor standardized_truth(Predictor truth, const Standardization& stats) {
  return [truth = std::move(truth), stats](std::span<const double> x_std) {
    std::vector<double> x(x_std.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = x_std[i] * stats.feature_sd[i] + stats.feature_mean[i];
    return rescale(truth(x), stats.target_mean, stats.target_sd);
  };
}

}  // namespace prerankcal
