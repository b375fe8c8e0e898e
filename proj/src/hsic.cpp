#include "emm/hsic.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "emm/errors.hpp"
#include "emm/simd.hpp"

namespace emm {

void KernelSpec::validate() const {
  if (kind == KernelKind::rbf && bandwidth && !(std::isfinite(*bandwidth) && *bandwidth > 0.0))
    throw InputError("rbf bandwidth must be positive and finite");
}

std::string_view kernel_kind_name(KernelKind k) {
  return k == KernelKind::rbf ? "rbf" : "linear";
}

KernelKind parse_kernel_kind(std::string_view name) {
  if (name == "rbf") return KernelKind::rbf;
  if (name == "linear") return KernelKind::linear;
  throw ConfigError("unknown kernel '" + std::string(name) + "'");
}

std::string_view coupling_name(Coupling c) {
  return c == Coupling::independent ? "independent" : "two_sample";
}

Coupling parse_coupling(std::string_view name) {
  if (name == "independent") return Coupling::independent;
  if (name == "two_sample") return Coupling::two_sample;
  throw ConfigError("unknown coupling '" + std::string(name) + "'");
}

double median_heuristic(const Matrix& samples) {
  const std::size_t n = samples.rows();
  if (n < 2) throw InputError("median heuristic needs at least two rows");
  const auto& k = simd::active();
  std::vector<double> d;
  d.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      d.push_back(std::sqrt(k.squared_distance(samples.row(i).data(), samples.row(j).data(),
                                               samples.cols())));
  const std::size_t mid = d.size() / 2;
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid), d.end());
  double median = d[mid];
  if (d.size() % 2 == 0) {
    const double lower = *std::max_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid));
    median = 0.5 * (median + lower);
  }
  return median > 0.0 ? median : 1.0;
}

GramMatrix gram(const Matrix& samples, const KernelSpec& spec) {
  spec.validate();
  if (!samples.all_finite()) throw InputError("non-finite sample passed to a kernel");
  const std::size_t n = samples.rows();
  const std::size_t d = samples.cols();
  GramMatrix g{Matrix(n, n)};
  const auto& k = simd::active();
  if (spec.kind == KernelKind::linear) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i; j < n; ++j)
        g.entries(i, j) = g.entries(j, i) = k.dot(samples.row(i).data(), samples.row(j).data(), d);
    return g;
  }
  const double sigma = spec.bandwidth ? *spec.bandwidth : median_heuristic(samples);
  const double scale = -1.0 / (2.0 * sigma * sigma);
  for (std::size_t i = 0; i < n; ++i) {
    g.entries(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double sq = k.squared_distance(samples.row(i).data(), samples.row(j).data(), d);
      g.entries(i, j) = g.entries(j, i) = std::exp(sq * scale);
    }
  }
  return g;
}

namespace {

// H A H for square A.
Matrix double_center(const Matrix& a) {
  const std::size_t m = a.rows();
  std::vector<double> row_mean(m, 0.0);
  std::vector<double> col_mean(m, 0.0);
  double grand = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      row_mean[i] += a(i, j);
      col_mean[j] += a(i, j);
    }
  }
  const double inv = 1.0 / static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i) {
    grand += row_mean[i];
    row_mean[i] *= inv;
    col_mean[i] *= inv;
  }
  grand *= inv * inv;
  Matrix out(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) out(i, j) = a(i, j) - row_mean[i] - col_mean[j] + grand;
  return out;
}

}  // namespace

double hsic_biased(const GramMatrix& k, const GramMatrix& l) {
  const std::size_t m = k.m();
  if (k.entries.cols() != m || l.m() != m || l.entries.cols() != m)
    throw InputError("HSIC needs two square Gram matrices of equal size");
  if (m < 2) throw InputError("HSIC needs at least two pairs");
  const Matrix kc = double_center(k.entries);
  const Matrix lc = double_center(l.entries);
  // tr(Kc Lc) = sum_ij Kc(i,j) Lc(j,i)
  double trace = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) trace += kc(i, j) * lc(j, i);
  const double denom = static_cast<double>(m - 1);
  return trace / (denom * denom);
}

double hsic_paired(const PairedSampleSet& pairs, const KernelSpec& kspec,
                   const KernelSpec& lspec) {
  if (pairs.left.rows() != pairs.right.rows())
    throw InputError("paired sets must have equal row counts");
  return hsic_biased(gram(pairs.left, kspec), gram(pairs.right, lspec));
}

PairedSampleSet expert_memory_pairs(const Expert& expert, const Matrix& buffer_samples,
                                    std::size_t m, Coupling coupling, Rng& rng) {
  if (m < 2) throw InputError("HSIC needs m >= 2");
  if (buffer_samples.rows() < m)
    throw InputError("memory holds " + std::to_string(buffer_samples.rows()) +
                     " samples, HSIC needs " + std::to_string(m));
  const Matrix replay_latents = infer_latents(expert, generate_replay(expert, m, rng));
  const auto picked = rng.sample_without_replacement(buffer_samples.rows(), m);
  const Matrix memory_latents = infer_latents(expert, gather_rows(buffer_samples, picked));
  if (coupling == Coupling::independent) return {replay_latents, memory_latents};
  Matrix indicator(2 * m, 1, 1.0);
  for (std::size_t i = m; i < 2 * m; ++i) indicator(i, 0) = -1.0;
  return {vstack(replay_latents, memory_latents), std::move(indicator)};
}

double expert_memory_hsic(const Expert& expert, const Matrix& buffer_samples,
                          const HsicConfig& cfg, Rng& rng) {
  const auto pairs = expert_memory_pairs(expert, buffer_samples, cfg.m, cfg.coupling, rng);
  if (cfg.coupling == Coupling::independent)
    return hsic_paired(pairs, cfg.left_kernel, cfg.right_kernel);
  return hsic_paired(pairs, cfg.left_kernel, KernelSpec::linear());
}

}  // namespace emm
