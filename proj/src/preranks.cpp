#include "prerankcal/preranks.hpp"

#include <array>
#include <charconv>

namespace prerankcal {

namespace {
constexpr std::array<std::pair<PreRankKind, std::string_view>, 7> kTokens{{
    {PreRankKind::Marginal, "marginal"},
    {PreRankKind::Location, "location"},
    {PreRankKind::Scale, "scale"},
    {PreRankKind::Dependency, "dependency"},
    {PreRankKind::Pca, "pca"},
    {PreRankKind::Hdr, "hdr"},
    {PreRankKind::Copula, "copula"},
}};
}  // namespace

std::string_view kind_token(PreRankKind kind) {
  for (const auto& [k, token] : kTokens) {
    if (k == kind) return token;
  }
  return "unknown";
}

std::optional<PreRankKind> parse_kind(std::string_view token) {
  for (const auto& [k, t] : kTokens) {
    if (t == token) return k;
  }
  return std::nullopt;
}

std::string label(const PreRankSpec& spec) {
  std::string out(kind_token(spec.kind));
  if (spec.kind == PreRankKind::Marginal || spec.kind == PreRankKind::Pca) {
    out += "_" + std::to_string(spec.index);
  } else if (spec.kind == PreRankKind::Dependency && spec.lag != 1) {
    out += "_h" + std::to_string(spec.lag);
  }
  return out;
}

std::optional<PreRankSpec> parse_label(std::string_view text) {
  const auto sep = text.find('_');
  const auto kind = parse_kind(text.substr(0, sep));
  if (!kind) return std::nullopt;
  PreRankSpec spec{*kind};
  if (sep == std::string_view::npos) return spec;
  std::string_view rest = text.substr(sep + 1);
  std::size_t* target = nullptr;
  if (*kind == PreRankKind::Marginal || *kind == PreRankKind::Pca) {
    target = &spec.index;
  } else if (*kind == PreRankKind::Dependency && rest.starts_with("h")) {
    target = &spec.lag;
    rest.remove_prefix(1);
  } else {
    return std::nullopt;
  }
  const auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), *target);
  if (ec != std::errc() || ptr != rest.data() + rest.size() || rest.empty()) return std::nullopt;
  return spec;
}

void validate(const PreRankSpec& spec, std::size_t dim) {
  require(dim >= 1, "pre-rank: target dimension must be at least 1");
  switch (spec.kind) {
    case PreRankKind::Marginal:
      require(spec.index >= 1 && spec.index <= dim,
              "marginal pre-rank: index d must satisfy 1 <= d <= D=" + std::to_string(dim));
      break;
    case PreRankKind::Pca:
      require(spec.index >= 1 && spec.index <= dim,
              "pca pre-rank: component d must satisfy 1 <= d <= D=" + std::to_string(dim));
      require(spec.explained_variance_threshold > 0.0 && spec.explained_variance_threshold <= 1.0,
              "pca pre-rank: explained variance threshold must lie in (0, 1]");
      break;
    case PreRankKind::Dependency:
      require(dim >= 2, "dependency pre-rank requires D >= 2 (got D=" + std::to_string(dim) + ")");
      require(spec.lag >= 1 && spec.lag <= dim - 1,
              "dependency pre-rank: lag h must satisfy 1 <= h <= D-1=" + std::to_string(dim - 1));
      break;
    default:
      break;
  }
}

bool needs_mixture(PreRankKind kind) { return kind == PreRankKind::Hdr; }
bool needs_pca(PreRankKind kind) { return kind == PreRankKind::Pca; }

void check_context(const PreRankSpec& spec, bool has_mixture, bool has_samples, bool has_pca) {
  switch (spec.kind) {
    case PreRankKind::Hdr:
      require(has_mixture, "hdr pre-rank: context requires the mixture");
      break;
    case PreRankKind::Copula:
      require(has_samples, "copula pre-rank: context requires samples");
      break;
    case PreRankKind::Pca:
      require(has_pca, "pca pre-rank: context requires a PCA basis");
      break;
    default:
      break;
  }
}

double project(const PreRankSpec& spec, const ProjectionContext& ctx, std::span<const double> y) {
  return project<double>(spec, ctx, y);
}

std::size_t top_components(const PcaBasis& basis, double threshold) {
  double cumulative = 0.0;
  for (std::size_t c = 0; c < basis.dim; ++c) {
    cumulative += basis.explained_variance_ratio[c];
    // ratios sum to 1 only up to rounding
    if (cumulative >= threshold - 1e-12) return c + 1;
  }
  return basis.dim;
}

}  // namespace prerankcal
