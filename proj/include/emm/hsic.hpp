#pragma once

// Kernel Gram matrices and the biased HSIC estimator tr(K H L H) / (m - 1)^2.

#include <cstddef>
#include <optional>
#include <string_view>

#include "emm/expert.hpp"
#include "emm/matrix.hpp"
#include "emm/rng.hpp"

namespace emm {

enum class KernelKind { rbf, linear };

struct KernelSpec {
  KernelKind kind = KernelKind::rbf;
  // rbf width sigma; empty selects the median heuristic at evaluation time.
  std::optional<double> bandwidth;

  static KernelSpec rbf_median() { return {}; }
  static KernelSpec rbf(double sigma) { return {KernelKind::rbf, sigma}; }
  static KernelSpec linear() { return {KernelKind::linear, std::nullopt}; }

  // Throws InputError for a non-positive or non-finite explicit bandwidth.
  void validate() const;

  friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

std::string_view kernel_kind_name(KernelKind k);
KernelKind parse_kernel_kind(std::string_view name);

struct GramMatrix {
  Matrix entries;
  std::size_t m() const noexcept { return entries.rows(); }
};

// Median Euclidean distance over distinct row pairs; 1.0 when that median is 0.
double median_heuristic(const Matrix& samples);

GramMatrix gram(const Matrix& samples, const KernelSpec& spec);

double hsic_biased(const GramMatrix& k, const GramMatrix& l);

struct PairedSampleSet {
  Matrix left;
  Matrix right;
  std::size_t m() const noexcept { return left.rows(); }
};

// hsic_biased over the Gram matrices of both sides.
double hsic_paired(const PairedSampleSet& pairs, const KernelSpec& kspec,
                   const KernelSpec& lspec);

// How replay latents and memory latents are turned into a paired set.
//  independent: row i of the replay latents is paired with row i of the
//               memory latents; both sides use their own kernels.
//  two_sample:  both latent sets are pooled into 2m rows, paired with a +1/-1
//               source indicator under a linear kernel. The statistic is then
//               a scaled kernel two-sample discrepancy (MMD^2 / 4 for large m):
//               small when the expert's replay matches the memory.
enum class Coupling { independent, two_sample };

std::string_view coupling_name(Coupling c);
Coupling parse_coupling(std::string_view name);

struct HsicConfig {
  std::size_t m = 256;
  Coupling coupling = Coupling::two_sample;
  KernelSpec left_kernel = KernelSpec::rbf_median();
  KernelSpec right_kernel = KernelSpec::rbf_median();  // ignored by two_sample

  friend bool operator==(const HsicConfig&, const HsicConfig&) = default;
};

// Draws m replay samples from the expert and m memory rows without
// replacement, maps both through the expert's encoder means, and couples them.
PairedSampleSet expert_memory_pairs(const Expert& expert, const Matrix& buffer_samples,
                                    std::size_t m, Coupling coupling, Rng& rng);

// Throws InputError when m < 2 or the buffer holds fewer than m rows.
double expert_memory_hsic(const Expert& expert, const Matrix& buffer_samples,
                          const HsicConfig& cfg, Rng& rng);

}  // namespace emm
