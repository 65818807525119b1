#include "prerankcal/training.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>

#include "prerankcal/csv.hpp"
#include "prerankcal/parallel.hpp"
#include "prerankcal/random.hpp"
#include "prerankcal/scoring.hpp"

namespace prerankcal {

namespace {

// Sub-streams of the training seed.
constexpr std::uint64_t kShuffleStream = 1;
constexpr std::uint64_t kNoiseStream = 2;
constexpr std::uint64_t kValidationStream = 3;

SampleSet values_of(const VarSampleSet& samples) {
  SampleSet out;
  out.dim = samples.dim;
  out.source_seed = samples.source_seed;
  out.component_indices = samples.component_indices;
  out.values.reserve(samples.values.size());
  for (const auto& v : samples.values) out.values.push_back(v.value());
  return out;
}

bool terms_need_pca(const RegularizerConfig& reg) {
  return reg.composition == Composition::PcaPlus || needs_pca(reg.prerank.kind);
}

struct Adam {
  double lr;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::vector<double> m, v;

  Adam(double learning_rate, std::size_t n) : lr(learning_rate), m(n, 0.0), v(n, 0.0) {}

  void apply(std::vector<double>& params, const std::vector<double>& grad) {
    ++step;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
      params[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
};

}  // namespace

std::string_view composition_token(Composition c) {
  switch (c) {
    case Composition::Plain:
      return "plain";
    case Composition::MarginalPlus:
      return "marginal";
    case Composition::PcaPlus:
      return "pca";
  }
  return "plain";
}

std::optional<Composition> parse_composition(std::string_view token) {
  if (token == "plain") return Composition::Plain;
  if (token == "marginal" || token == "marginal_plus") return Composition::MarginalPlus;
  if (token == "pca" || token == "pca_plus") return Composition::PcaPlus;
  return std::nullopt;
}

void RegularizerConfig::validate(std::size_t dim) const {
  require(std::isfinite(lambda) && lambda >= 0.0, "regularizer: lambda must be finite and >= 0");
  require(samples >= 1, "regularizer: S must be at least 1");
  require(tau > 0.0, "regularizer: tau must be positive");
  require(grid_size >= 1, "regularizer: M must be at least 1");
  require(p >= 1.0, "regularizer: p must be >= 1");
  require(pca_threshold > 0.0 && pca_threshold <= 1.0, "regularizer: pca_threshold must lie in (0, 1]");
  if (terms_need_pca(*this)) require(samples >= 2, "regularizer: PCA terms need S >= 2");
  prerankcal::validate(prerank, dim);
}

void TrainConfig::validate() const {
  require(learning_rate > 0.0, "train: learning rate must be positive");
  require(batch_size >= 1, "train: batch size must be positive");
  require(max_epochs >= 1, "train: max epochs must be positive");
  require(patience >= 1, "train: patience must be at least 1");
  require(eval_samples >= 2, "train: validation needs at least 2 samples per row");
}

std::vector<RegularizerTerm> regularizer_terms(const RegularizerConfig& reg, std::size_t dim,
                                               std::size_t d_star) {
  std::vector<RegularizerTerm> terms;
  switch (reg.composition) {
    case Composition::Plain:
      break;
    case Composition::MarginalPlus:
      for (std::size_t d = 1; d <= dim; ++d) {
        terms.push_back({PreRankSpec::marginal(d), 1.0 / static_cast<double>(dim)});
      }
      break;
    case Composition::PcaPlus:
      require(d_star >= 1 && d_star <= dim, "regularizer: d* must lie in [1, D]");
      for (std::size_t d = 1; d <= d_star; ++d) {
        terms.push_back({PreRankSpec::pca(d), 1.0 / static_cast<double>(d_star)});
      }
      break;
  }
  terms.push_back({reg.prerank, 1.0});
  return terms;
}

std::size_t pooled_top_components(std::span<const SampleSet> samples, double threshold) {
  require(!samples.empty(), "pooled_top_components: no sample sets");
  const std::size_t dim = samples.front().dim;
  std::vector<double> pooled(dim * dim, 0.0);
  for (const auto& s : samples) {
    const auto cov = sample_covariance(s);
    for (std::size_t i = 0; i < cov.size(); ++i) pooled[i] += cov[i];
  }
  for (double& v : pooled) v /= static_cast<double>(samples.size());
  return top_components(pca_of_covariance(pooled, dim), threshold);
}

LossParts build_loss(std::span<const VarMixture> mixtures, const RowMatrix& targets,
                     const RegularizerConfig& reg, ScoreKind score, std::uint64_t noise_seed,
                     bool with_regularizer, FrozenState* frozen) {
  const std::size_t n = mixtures.size();
  require(n >= 1, "objective: batch must be nonempty");
  require(targets.rows == n, "objective: batch size mismatch");
  const std::size_t dim = targets.cols;
  const bool reuse = frozen != nullptr && frozen->filled;

  std::vector<std::vector<ad::Var>> ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    require(mixtures[i].dim == dim, "objective: mixture dimension does not match targets");
    ys[i].assign(targets.row(i).begin(), targets.row(i).end());
  }

  const bool need_samples = score == ScoreKind::Energy || with_regularizer;
  if (reuse && need_samples) require(frozen->noise.size() == n, "objective: frozen state does not match the batch");
  std::vector<VarSampleSet> samples(need_samples ? n : 0);
  if (need_samples) {
    if (frozen != nullptr && !reuse) frozen->noise.clear();
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t count = with_regularizer ? reg.samples : kEnergySamples;
      if (reuse) {
        samples[i] = materialize(mixtures[i], frozen->noise[i]);
      } else {
        std::vector<double> w(mixtures[i].weights.size());
        for (std::size_t k = 0; k < w.size(); ++k) w[k] = mixtures[i].weights[k].value();
        SampleNoise noise = draw_noise(w, dim, split_seed(noise_seed, i), count);
        samples[i] = materialize(mixtures[i], noise);
        if (frozen != nullptr) frozen->noise.push_back(std::move(noise));
      }
    }
  }

  std::vector<ad::Var> per_row(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::span<const ad::Var> y(ys[i]);
    per_row[i] = score == ScoreKind::Nll ? -log_density(mixtures[i], y) : energy_score(samples[i], y);
  }
  LossParts parts;
  parts.score = sum(std::span<const ad::Var>(per_row)) * (1.0 / static_cast<double>(n));
  parts.regularizer = ad::Var(0.0);
  if (!with_regularizer) {
    if (frozen != nullptr) frozen->filled = true;
    return parts;
  }

  std::vector<PcaBasis> bases;
  if (terms_need_pca(reg)) {
    if (reuse) {
      bases = frozen->bases;
      parts.d_star = frozen->d_star;
    } else {
      std::vector<SampleSet> plain(n);
      for (std::size_t i = 0; i < n; ++i) plain[i] = values_of(samples[i]);
      for (const auto& s : plain) bases.push_back(pca_of_samples(s));
      if (reg.composition == Composition::PcaPlus) parts.d_star = pooled_top_components(plain, reg.pca_threshold);
      if (frozen != nullptr) {
        frozen->bases = bases;
        frozen->d_star = parts.d_star;
      }
    }
  }
  if (frozen != nullptr) frozen->filled = true;

  const QuantileGrid grid = QuantileGrid::uniform(reg.grid_size);
  const auto terms = regularizer_terms(reg, dim, parts.d_star);
  std::vector<std::vector<ad::Var>> pits(terms.size(), std::vector<ad::Var>(n));
  for (std::size_t i = 0; i < n; ++i) {
    VarProjectionContext ctx{&mixtures[i], &samples[i], bases.empty() ? nullptr : &bases[i], reg.tau};
    for (std::size_t t = 0; t < terms.size(); ++t) {
      const auto [obs, projected] = pit_projections(terms[t].spec, ctx, std::span<const ad::Var>(ys[i]));
      pits[t][i] = smooth_ecdf(std::span<const ad::Var>(projected), obs, reg.tau);
    }
  }
  std::vector<ad::Var> weighted;
  for (std::size_t t = 0; t < terms.size(); ++t) {
    weighted.push_back(pce_kde(std::span<const ad::Var>(pits[t]), grid, reg.tau, reg.p) * terms[t].weight);
  }
  parts.regularizer = sum(std::span<const ad::Var>(weighted));
  return parts;
}

ObjectiveValue objective(const NetworkConfig& config, const ModelWeights& weights, const RowMatrix& features,
                         const RowMatrix& targets, const RegularizerConfig& reg, ScoreKind score,
                         std::uint64_t noise_seed, bool with_gradient, bool force_regularizer,
                         FrozenState* frozen) {
  require(features.rows == targets.rows, "objective: feature and target row counts differ");
  require(features.rows >= 1, "objective: batch must be nonempty");
  require(targets.cols == config.output_dim, "objective: target dimension does not match the network");
  BatchNetwork net(config, weights);
  const Eigen::MatrixXd& heads = net.forward(features);
  const std::size_t n = features.rows;
  const std::size_t h = config.head_size();

  ad::Tape tape;
  std::vector<ad::Var> leaves;
  leaves.reserve(n * h);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < h; ++j) {
      leaves.push_back(tape.variable(heads(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
    }
  }
  std::vector<VarMixture> mixtures;
  mixtures.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    mixtures.push_back(head_to_mixture<ad::Var>(std::span<const ad::Var>(leaves.data() + i * h, h),
                                                config.components, config.output_dim, config.chol_floor));
  }
  const bool with_reg = reg.lambda > 0.0 || force_regularizer;
  const LossParts parts = build_loss(mixtures, targets, reg, score, noise_seed, with_reg, frozen);
  const ad::Var total = reg.lambda > 0.0 ? parts.score + parts.regularizer * reg.lambda : parts.score;

  ObjectiveValue out;
  out.score = parts.score.value();
  out.regularizer = parts.regularizer.value();
  out.total = total.value();
  out.d_star = parts.d_star;
  if (!with_gradient) return out;
  const auto adj = tape.adjoints(total);
  Eigen::MatrixXd head_grad(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(h));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < h; ++j) {
      head_grad(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = adj[i * h + j];
    }
  }
  out.gradient = net.backward(head_grad);
  return out;
}

std::string TrainHistory::to_csv() const {
  std::ostringstream os;
  os << "epoch,train_loss,val_score,val_objective,val_pce";
  if (!epochs.empty()) {
    for (const auto& [name, value] : epochs.front().val_pce_terms) os << ",val_pce_" << name;
  }
  os << '\n';
  for (const auto& e : epochs) {
    os << e.epoch << ',' << csv::format_double(e.train_loss) << ',' << csv::format_double(e.val_score) << ','
       << csv::format_double(e.val_objective) << ',' << csv::format_double(e.val_pce);
    for (const auto& [name, value] : e.val_pce_terms) os << ',' << csv::format_double(value);
    os << '\n';
  }
  return os.str();
}

ValidationMetrics validation_metrics(const Predictor& model, const Dataset& data, const RegularizerConfig& reg,
                                     ScoreKind score, std::size_t samples, std::uint64_t seed,
                                     std::size_t threads) {
  const std::size_t n = data.size();
  if (n == 0) throw UndefinedMetric("validation set is empty");
  require(samples >= 2, "validation: need at least 2 samples per row");
  const std::size_t dim = data.output_dim();
  // Candidate specs: every term that could appear once d* is known.
  std::vector<PreRankSpec> candidates;
  if (reg.composition == Composition::MarginalPlus) {
    for (std::size_t d = 1; d <= dim; ++d) candidates.push_back(PreRankSpec::marginal(d));
  } else if (reg.composition == Composition::PcaPlus) {
    for (std::size_t d = 1; d <= dim; ++d) candidates.push_back(PreRankSpec::pca(d));
  }
  candidates.push_back(reg.prerank);
  const bool want_pca = terms_need_pca(reg);

  std::vector<std::vector<double>> row_pits(n);
  std::vector<double> nlls(n), energies(n);
  std::vector<std::vector<double>> covariances(reg.composition == Composition::PcaPlus ? n : 0);
  parallel_for(n, threads, [&](std::size_t i) {
    const MixtureParams mixture = model(data.features.row(i));
    const SampleSet s = sample(mixture, split_seed(seed, i), samples);
    const auto y = data.targets.row(i);
    nlls[i] = nll(mixture, y);
    energies[i] = energy_score(s, y);
    std::optional<PcaBasis> basis;
    if (want_pca) basis = pca_of_samples(s);
    if (!covariances.empty()) covariances[i] = sample_covariance(s);
    ProjectionContext ctx{&mixture, &s, basis ? &*basis : nullptr, reg.tau};
    for (const auto& spec : candidates) row_pits[i].push_back(projected_pit(spec, ctx, y, PitMode::Hard, reg.tau));
  });

  ValidationMetrics out;
  out.nll = std::accumulate(nlls.begin(), nlls.end(), 0.0) / static_cast<double>(n);
  out.energy = std::accumulate(energies.begin(), energies.end(), 0.0) / static_cast<double>(n);
  out.score = score == ScoreKind::Nll ? out.nll : out.energy;
  if (!covariances.empty()) {
    std::vector<double> pooled(dim * dim, 0.0);
    for (const auto& c : covariances) {
      for (std::size_t j = 0; j < c.size(); ++j) pooled[j] += c[j] / static_cast<double>(n);
    }
    out.d_star = top_components(pca_of_covariance(pooled, dim), reg.pca_threshold);
  }
  const QuantileGrid grid = QuantileGrid::uniform(reg.grid_size);
  const auto terms = regularizer_terms(reg, dim, out.d_star);
  std::vector<double> column(n);
  for (const auto& term : terms) {
    const auto pos = static_cast<std::size_t>(
        std::find(candidates.begin(), candidates.end(), term.spec) - candidates.begin());
    for (std::size_t i = 0; i < n; ++i) column[i] = row_pits[i][pos];
    const double value = pce(column, grid);
    out.term_pce.emplace_back(label(term.spec), value);
    out.composed_pce += term.weight * value;
  }
  return out;
}

TrainResult train(const NetworkConfig& config, const TrainConfig& train_config, const RegularizerConfig& reg,
                   const Dataset& train_set, const Dataset& val_set) {
  config.validate();
  train_config.validate();
  reg.validate(config.output_dim);
  require(train_set.size() >= 1, "train: training split is empty");
  require(train_set.input_dim() == config.input_dim && train_set.output_dim() == config.output_dim,
          "train: training data dimensions do not match the network");
  require(val_set.input_dim() == config.input_dim && val_set.output_dim() == config.output_dim,
          "train: validation data dimensions do not match the network");
  if (val_set.size() == 0) throw UndefinedMetric("train: validation split is empty");

  const std::uint64_t seed = train_config.seed;
  ModelWeights weights = init_weights(config, seed);
  Adam adam(train_config.learning_rate, weights.params.size());
  Rng shuffle_rng = make_rng(split_seed(seed, kShuffleStream));
  const std::uint64_t noise_base = split_seed(seed, kNoiseStream);
  const std::uint64_t val_seed = split_seed(seed, kValidationStream);

  // Equal-sized batches so the batch-level PIT CDF never sees a tiny remainder.
  const std::size_t n = train_set.size();
  const std::size_t batch_count = (n + train_config.batch_size - 1) / train_config.batch_size;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  result.weights = weights;
  double best = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= train_config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t start = 0;
    for (std::size_t b = 0; b < batch_count; ++b) {
      const std::size_t stop = n * (b + 1) / batch_count;
      const std::span<const std::size_t> idx(order.data() + start, stop - start);
      start = stop;
      const RowMatrix x = train_set.features.select(idx);
      const RowMatrix y = train_set.targets.select(idx);
      const std::uint64_t noise_seed = split_seed(noise_base, reg.fixed_noise ? 0 : step);
      ++step;
      const auto value = objective(config, weights, x, y, reg, train_config.score, noise_seed);
      const bool finite = std::isfinite(value.total) &&
                          std::all_of(value.gradient.begin(), value.gradient.end(),
                                      [](double g) { return std::isfinite(g); });
      if (!finite) {
        throw NumericFailure("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(b));
      }
      loss_sum += value.total;
      adam.apply(weights.params, value.gradient);
    }

    const auto metrics = validation_metrics(make_predictor(config, weights), val_set, reg, train_config.score,
                                            train_config.eval_samples, val_seed, train_config.threads);
    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(batch_count);
    record.val_score = metrics.score;
    record.val_pce = metrics.composed_pce;
    record.val_objective = metrics.score + reg.lambda * metrics.composed_pce;
    record.val_pce_terms = metrics.term_pce;
    if (!std::isfinite(record.val_objective)) {
      throw NumericFailure("non-finite validation objective at epoch " + std::to_string(epoch));
    }
    result.history.epochs.push_back(record);
    if (record.val_objective < best) {
      best = record.val_objective;
      result.history.best_epoch = result.history.epochs.size() - 1;
      result.weights = weights;
      since_best = 0;
    } else if (++since_best >= train_config.patience) {
      break;
    }
  }
  return result;
}

TuneResult select_lambda(std::vector<LambdaTrial> trials, double reference_es) {
  std::sort(trials.begin(), trials.end(), [](const auto& a, const auto& b) { return a.lambda < b.lambda; });
  TuneResult out;
  out.reference_es = reference_es;
  out.budget = kEnergyBudget * reference_es;
  std::optional<std::size_t> pick;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    auto& t = trials[i];
    t.within_budget = t.lambda == 0.0 || t.val_es <= out.budget;
    if (!t.within_budget) continue;
    if (!pick || t.val_pce < trials[*pick].val_pce) pick = i;
  }
  out.selected = pick ? trials[*pick].lambda : 0.0;
  out.trials = std::move(trials);
  return out;
}

TuneResult tune_lambda(std::span<const double> grid, const NetworkConfig& config, const TrainConfig& train_config,
                       const RegularizerConfig& reg_template, const Dataset& train_set, const Dataset& val_set) {
  require(std::find(grid.begin(), grid.end(), 0.0) != grid.end(), "tune: lambda grid must contain 0");
  for (double l : grid) require(std::isfinite(l) && l >= 0.0, "tune: lambda values must be finite and >= 0");
  std::vector<LambdaTrial> trials;
  double reference_es = 0.0;
  const std::uint64_t val_seed = split_seed(train_config.seed, kValidationStream);
  for (double lambda : grid) {
    RegularizerConfig reg = reg_template;
    reg.lambda = lambda;
    const auto result = train(config, train_config, reg, train_set, val_set);
    const auto metrics = validation_metrics(make_predictor(config, result.weights), val_set, reg,
                                            train_config.score, train_config.eval_samples, val_seed,
                                            train_config.threads);
    trials.push_back({lambda, metrics.composed_pce, metrics.energy, false});
    if (lambda == 0.0) reference_es = metrics.energy;
  }
  return select_lambda(std::move(trials), reference_es);
}

}  // namespace prerankcal
