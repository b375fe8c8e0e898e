#pragma once

// One mixture component: a VAE with a diagonal-Gaussian encoder q(z|x), a
// fixed-variance Gaussian decoder p(x|z) (unit variance unless configured) and
// a standard-normal prior p(z), plus a classifier head trained with
// cross-entropy.

#include <cstddef>
#include <span>
#include <vector>

#include "emm/matrix.hpp"
#include "emm/nn.hpp"
#include "emm/rng.hpp"
#include "emm/sample.hpp"

namespace emm {

struct ExpertArchitecture {
  std::size_t input_dim = 784;
  std::size_t latent_dim = 32;
  std::size_t class_count = 10;
  std::vector<std::size_t> vae_hidden{200};
  std::vector<std::size_t> classifier_hidden{400, 400};
  double decoder_variance = 1.0;  // fixed per-pixel variance of p(x|z)

  friend bool operator==(const ExpertArchitecture&, const ExpertArchitecture&) = default;
};

struct ExpertOptimizers {
  nn::AdamState encoder;
  nn::AdamState decoder;
  nn::AdamState classifier;

  friend bool operator==(const ExpertOptimizers&, const ExpertOptimizers&) = default;
};

struct Expert {
  nn::Mlp encoder;     // x -> [mu | logvar], width 2 * latent_dim
  nn::Mlp decoder;     // z -> reconstruction mean
  nn::Mlp classifier;  // x -> class logits
  std::size_t latent_dim = 0;
  double decoder_variance = 1.0;
  bool frozen = false;
  std::size_t id = 0;
  ExpertOptimizers optim;

  std::size_t input_dim() const { return encoder.input_dim(); }
  std::size_t class_count() const { return classifier.output_dim(); }

  // Throws ShapeError if the three networks do not fit together.
  void validate() const;

  friend bool operator==(const Expert&, const Expert&) = default;
};

Expert make_expert(const ExpertArchitecture& arch, std::size_t id, Rng& rng,
                   nn::AdamConfig adam = {});

struct ElboResult {
  double loss = 0.0;            // mean over rows of -(log p(x|z) - KL)
  double reconstruction = 0.0;  // mean negative log-likelihood term
  double kl = 0.0;              // mean KL(q(z|x) || p(z))
  nn::MlpGradients encoder;
  nn::MlpGradients decoder;
};

// Negated ELBO for `batch` with reparameterization noise `noise`
// (batch.rows() x latent_dim), plus gradients for both VAE networks.
ElboResult elbo_loss(const Expert& expert, const Matrix& batch, const Matrix& noise);

// Closed-form KL of N(mu, exp(logvar)) against N(0, I), summed over dims.
double gaussian_kl(std::span<const double> mu, std::span<const double> logvar);

struct ClassifierResult {
  double loss = 0.0;  // mean cross-entropy
  nn::MlpGradients grads;
};

ClassifierResult classifier_loss(const Expert& expert, const Matrix& features,
                                 std::span<const int> labels);

// Every sample must carry a label (InputError otherwise).
ClassifierResult classifier_loss(const Expert& expert, std::span<const Sample> samples);

// n decoder means for z ~ N(0, I); n must be positive.
Matrix generate_replay(const Expert& expert, std::size_t n, Rng& rng);

// Posterior means mu(x); consumes no randomness.
Matrix infer_latents(const Expert& expert, const Matrix& samples);

// ELBO estimate of log p(x) averaged over n_draws reparameterized draws.
double loglik_score(const Expert& expert, std::span<const double> sample, std::size_t n_draws,
                    Rng& rng);

// Row-wise loglik_score for a batch; draws noise row-major per draw.
std::vector<double> loglik_scores(const Expert& expert, const Matrix& samples,
                                  std::size_t n_draws, Rng& rng);

struct TrainLosses {
  double elbo = 0.0;
  double classifier = 0.0;
};

// One optimizer step of the VAE and one of the classifier on a minibatch.
// Throws std::logic_error on a frozen expert and TrainingError on non-finite
// losses or gradients.
TrainLosses train_minibatch(Expert& expert, const Matrix& features, std::span<const int> labels,
                            Rng& rng);

}  // namespace emm
