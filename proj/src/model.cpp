#include "prerankcal/model.hpp"

#include <fstream>
#include <json.hpp>
#include <random>

#include "prerankcal/random.hpp"

namespace prerankcal {

namespace {

using RowMajorMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

std::vector<std::size_t> layer_sizes(const NetworkConfig& config) {
  std::vector<std::size_t> sizes;
  sizes.push_back(config.input_dim);
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(config.head_size());
  return sizes;
}

constexpr const char* kCheckpointFormat = "prerankcal-checkpoint";
constexpr int kCheckpointVersion = 1;

}  // namespace

std::size_t NetworkConfig::head_size() const {
  return components * (1 + output_dim + output_dim * (output_dim + 1) / 2);
}

std::size_t NetworkConfig::parameter_count() const {
  const auto sizes = layer_sizes(*this);
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) total += sizes[l + 1] * (sizes[l] + 1);
  return total;
}

void NetworkConfig::validate() const {
  require(input_dim >= 1, "network: input dimension L must be at least 1");
  require(output_dim >= 1, "network: output dimension D must be at least 1");
  require(components >= 1, "network: K must be at least 1");
  require(!hidden.empty(), "network: at least one hidden layer is required");
  for (std::size_t w : hidden) require(w >= 1, "network: hidden widths must be positive");
  require(chol_floor > 0.0, "network: Cholesky floor must be positive");
}

ModelWeights init_weights(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  ModelWeights weights;
  weights.seed = seed;
  weights.params.resize(config.parameter_count(), 0.0);
  Rng rng = make_rng(seed);
  const auto sizes = layer_sizes(config);
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const std::size_t fan_in = sizes[l];
    const std::size_t fan_out = sizes[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> unif(-bound, bound);
    for (std::size_t i = 0; i < fan_in * fan_out; ++i) weights.params[offset + i] = unif(rng);
    offset += fan_in * fan_out + fan_out;  // biases stay zero
  }
  return weights;
}

std::vector<double> mixture_to_head(const MixtureParams& params, double chol_floor) {
  const std::size_t k_count = params.components;
  const std::size_t d = params.dim;
  std::vector<double> raw;
  raw.reserve(k_count * (1 + d + d * (d + 1) / 2));
  for (double w : params.weights) raw.push_back(std::log(w));
  raw.insert(raw.end(), params.means.begin(), params.means.end());
  for (std::size_t k = 0; k < k_count; ++k) {
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        const double v = params.chol_at(k, i, j);
        if (i == j) {
          require(v > chol_floor, "mixture_to_head: diagonal must exceed the floor");
          raw.push_back(softplus_inverse(v - chol_floor));
        } else {
          raw.push_back(v);
        }
      }
    }
  }
  return raw;
}

std::vector<double> raw_head(const ModelWeights& weights, const NetworkConfig& config,
                             std::span<const double> x) {
  require(x.size() == config.input_dim, "forward: input dimension mismatch");
  for (double v : x) require(std::isfinite(v), "forward: non-finite input");
  const auto sizes = layer_sizes(config);
  require(weights.params.size() == config.parameter_count(), "forward: weight vector does not match config");
  Eigen::VectorXd a = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const auto n_in = static_cast<Eigen::Index>(sizes[l]);
    const auto n_out = static_cast<Eigen::Index>(sizes[l + 1]);
    RowMajorMap w(weights.params.data() + offset, n_out, n_in);
    Eigen::Map<const Eigen::VectorXd> b(weights.params.data() + offset + n_out * n_in, n_out);
    Eigen::VectorXd z = w * a + b;
    if (l + 2 < sizes.size()) z = z.cwiseMax(0.0);
    a = std::move(z);
    offset += static_cast<std::size_t>(n_out * (n_in + 1));
  }
  return {a.data(), a.data() + a.size()};
}

MixtureParams forward(const ModelWeights& weights, const NetworkConfig& config, std::span<const double> x) {
  const auto raw = raw_head(weights, config, x);
  return head_to_mixture<double>(raw, config.components, config.output_dim, config.chol_floor);
}

Predictor make_predictor(const NetworkConfig& config, const ModelWeights& weights) {
  return [config, weights](std::span<const double> x) { return forward(weights, config, x); };
}

BatchNetwork::BatchNetwork(const NetworkConfig& config, const ModelWeights& weights)
    : config_(config), weights_(weights) {}

const Eigen::MatrixXd& BatchNetwork::forward(const RowMatrix& inputs) {
  require(inputs.cols == config_.input_dim, "forward: input dimension mismatch");
  const auto sizes = layer_sizes(config_);
  activations_.clear();
  preactivations_.clear();
  activations_.push_back(
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          inputs.data.data(), static_cast<Eigen::Index>(inputs.rows), static_cast<Eigen::Index>(inputs.cols)));
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const auto n_in = static_cast<Eigen::Index>(sizes[l]);
    const auto n_out = static_cast<Eigen::Index>(sizes[l + 1]);
    RowMajorMap w(weights_.params.data() + offset, n_out, n_in);
    Eigen::Map<const Eigen::RowVectorXd> b(weights_.params.data() + offset + n_out * n_in, n_out);
    Eigen::MatrixXd z = activations_.back() * w.transpose();
    z.rowwise() += b;
    if (l + 2 < sizes.size()) {
      preactivations_.push_back(z);
      activations_.push_back(z.cwiseMax(0.0));
    } else {
      activations_.push_back(std::move(z));
    }
    offset += static_cast<std::size_t>(n_out * (n_in + 1));
  }
  return activations_.back();
}

std::vector<double> BatchNetwork::backward(const Eigen::MatrixXd& head_grad) const {
  const auto sizes = layer_sizes(config_);
  const std::size_t layers = sizes.size() - 1;
  std::vector<std::size_t> offsets(layers);
  std::size_t offset = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    offsets[l] = offset;
    offset += sizes[l + 1] * (sizes[l] + 1);
  }
  std::vector<double> grad(config_.parameter_count(), 0.0);
  Eigen::MatrixXd delta = head_grad;
  for (std::size_t l = layers; l-- > 0;) {
    const auto n_in = static_cast<Eigen::Index>(sizes[l]);
    const auto n_out = static_cast<Eigen::Index>(sizes[l + 1]);
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> dw(
        grad.data() + offsets[l], n_out, n_in);
    Eigen::Map<Eigen::RowVectorXd> db(grad.data() + offsets[l] + n_out * n_in, n_out);
    dw = delta.transpose() * activations_[l];
    db = delta.colwise().sum();
    if (l == 0) break;
    RowMajorMap w(weights_.params.data() + offsets[l], n_out, n_in);
    Eigen::MatrixXd upstream = delta * w;
    const Eigen::MatrixXd& pre = preactivations_[l - 1];
    delta = (pre.array() > 0.0).select(upstream, 0.0);
  }
  return grad;
}

void save_checkpoint(const std::filesystem::path& path, const NetworkConfig& config,
                     const ModelWeights& weights) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["config"] = {{"input_dim", config.input_dim},   {"output_dim", config.output_dim},
                 {"components", config.components}, {"hidden", config.hidden},
                 {"chol_floor", config.chol_floor}};
  j["seed"] = weights.seed;
  j["parameters"] = weights.params;
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write checkpoint " + path.string());
  out << j.dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint " + path.string() + " is not valid JSON: " + e.what());
  }
  if (j.value("format", std::string{}) != kCheckpointFormat) {
    throw FormatError("checkpoint " + path.string() + " has an unknown format tag");
  }
  if (j.value("version", 0) != kCheckpointVersion) {
    throw FormatError("checkpoint " + path.string() + " has an unsupported version");
  }
  Checkpoint ckpt;
  try {
    const auto& c = j.at("config");
    ckpt.config.input_dim = c.at("input_dim").get<std::size_t>();
    ckpt.config.output_dim = c.at("output_dim").get<std::size_t>();
    ckpt.config.components = c.at("components").get<std::size_t>();
    ckpt.config.hidden = c.at("hidden").get<std::vector<std::size_t>>();
    ckpt.config.chol_floor = c.at("chol_floor").get<double>();
    ckpt.weights.seed = j.at("seed").get<std::uint64_t>();
    ckpt.weights.params = j.at("parameters").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint " + path.string() + " is missing fields: " + e.what());
  }
  ckpt.config.validate();
  if (ckpt.weights.params.size() != ckpt.config.parameter_count()) {
    throw FormatError("checkpoint " + path.string() + " parameter count does not match its config");
  }
  return ckpt;
}

}  // namespace prerankcal
