#include "emm/expert.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "emm/errors.hpp"

namespace emm {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * ln(2 pi)

std::vector<std::size_t> chain(std::size_t in, const std::vector<std::size_t>& hidden,
                               std::size_t out) {
  std::vector<std::size_t> dims{in};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out);
  return dims;
}

void check_width(const Expert& e, const Matrix& x) {
  if (x.cols() != e.input_dim())
    throw ShapeError("expert expects width " + std::to_string(e.input_dim()) + ", got " +
                     std::to_string(x.cols()));
}

// Per-row negated ELBO pieces for a given encoder output and decoder output.
struct RowTerms {
  std::vector<double> reconstruction;
  std::vector<double> kl;
};

RowTerms row_terms(const Matrix& x, const Matrix& recon, const Matrix& enc_out,
                   std::size_t latent, double variance) {
  RowTerms t;
  t.reconstruction.resize(x.rows());
  t.kl.resize(x.rows());
  const double log_norm = (kHalfLog2Pi + 0.5 * std::log(variance)) * static_cast<double>(x.cols());
  const double inv_var = 1.0 / variance;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double sq = 0.0;
    const auto xr = x.row(r);
    const auto rr = recon.row(r);
    for (std::size_t c = 0; c < xr.size(); ++c) {
      const double d = xr[c] - rr[c];
      sq += d * d;
    }
    t.reconstruction[r] = 0.5 * sq * inv_var + log_norm;
    const auto e = enc_out.row(r);
    t.kl[r] = gaussian_kl(e.subspan(0, latent), e.subspan(latent, latent));
  }
  return t;
}

// z = mu + exp(logvar / 2) * noise
Matrix reparameterize(const Matrix& enc_out, const Matrix& noise, std::size_t latent) {
  Matrix z(enc_out.rows(), latent);
  for (std::size_t r = 0; r < z.rows(); ++r) {
    const auto e = enc_out.row(r);
    const auto n = noise.row(r);
    auto zr = z.row(r);
    for (std::size_t j = 0; j < latent; ++j) zr[j] = e[j] + std::exp(0.5 * e[latent + j]) * n[j];
  }
  return z;
}

}  // namespace

void Expert::validate() const {
  encoder.validate();
  decoder.validate();
  classifier.validate();
  if (encoder.output_dim() != 2 * latent_dim)
    throw ShapeError("encoder output must be twice the latent width");
  if (decoder.input_dim() != latent_dim) throw ShapeError("decoder input must be the latent width");
  if (decoder.output_dim() != encoder.input_dim())
    throw ShapeError("decoder output must match the encoder input");
  if (!(decoder_variance > 0.0) || !std::isfinite(decoder_variance))
    throw InputError("decoder variance must be positive and finite");
  if (classifier.input_dim() != encoder.input_dim())
    throw ShapeError("classifier input must match the encoder input");
}

Expert make_expert(const ExpertArchitecture& arch, std::size_t id, Rng& rng,
                   nn::AdamConfig adam) {
  if (arch.input_dim == 0 || arch.latent_dim == 0 || arch.class_count < 2)
    throw InputError("expert needs positive widths and at least two classes");
  if (!(arch.decoder_variance > 0.0) || !std::isfinite(arch.decoder_variance))
    throw InputError("decoder variance must be positive and finite");
  using nn::Activation;
  Expert e;
  e.latent_dim = arch.latent_dim;
  e.decoder_variance = arch.decoder_variance;
  e.id = id;
  const auto enc = chain(arch.input_dim, arch.vae_hidden, 2 * arch.latent_dim);
  const auto dec = chain(arch.latent_dim, arch.vae_hidden, arch.input_dim);
  const auto cls = chain(arch.input_dim, arch.classifier_hidden, arch.class_count);
  e.encoder = nn::make_mlp(enc, Activation::relu, Activation::identity, rng);
  e.decoder = nn::make_mlp(dec, Activation::relu, Activation::identity, rng);
  e.classifier = nn::make_mlp(cls, Activation::relu, Activation::identity, rng);
  e.optim.encoder = nn::AdamState::for_params(e.encoder, adam);
  e.optim.decoder = nn::AdamState::for_params(e.decoder, adam);
  e.optim.classifier = nn::AdamState::for_params(e.classifier, adam);
  return e;
}

double gaussian_kl(std::span<const double> mu, std::span<const double> logvar) {
  if (mu.size() != logvar.size()) throw ShapeError("mean and log-variance widths differ");
  double kl = 0.0;
  for (std::size_t j = 0; j < mu.size(); ++j)
    kl += mu[j] * mu[j] + std::exp(logvar[j]) - logvar[j] - 1.0;
  return 0.5 * kl;
}

ElboResult elbo_loss(const Expert& expert, const Matrix& batch, const Matrix& noise) {
  check_width(expert, batch);
  const std::size_t latent = expert.latent_dim;
  if (noise.rows() != batch.rows() || noise.cols() != latent)
    throw ShapeError("noise must be batch rows x latent width");
  if (batch.rows() == 0) throw InputError("ELBO of an empty batch");

  auto enc = nn::mlp_forward(expert.encoder, batch);
  const Matrix z = reparameterize(enc.output, noise, latent);
  auto dec = nn::mlp_forward(expert.decoder, z);
  const RowTerms terms = row_terms(batch, dec.output, enc.output, latent, expert.decoder_variance);

  ElboResult result;
  const double inv_n = 1.0 / static_cast<double>(batch.rows());
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    result.reconstruction += terms.reconstruction[r] * inv_n;
    result.kl += terms.kl[r] * inv_n;
  }
  result.loss = result.reconstruction + result.kl;
  if (!std::isfinite(result.loss)) throw TrainingError("non-finite ELBO");

  Matrix d_recon(batch.rows(), batch.cols());
  const double scale = inv_n / expert.decoder_variance;
  for (std::size_t i = 0; i < d_recon.size(); ++i)
    d_recon.data()[i] = (dec.output.data()[i] - batch.data()[i]) * scale;
  auto dec_back = nn::mlp_backward(expert.decoder, dec.tape, d_recon);

  Matrix d_enc(batch.rows(), 2 * latent);
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    const auto e = enc.output.row(r);
    const auto dz = dec_back.input_grad.row(r);
    const auto n = noise.row(r);
    auto g = d_enc.row(r);
    for (std::size_t j = 0; j < latent; ++j) {
      const double sd = std::exp(0.5 * e[latent + j]);
      g[j] = dz[j] + e[j] * inv_n;
      g[latent + j] = dz[j] * n[j] * 0.5 * sd + 0.5 * (sd * sd - 1.0) * inv_n;
    }
  }
  auto enc_back = nn::mlp_backward(expert.encoder, enc.tape, d_enc, false);
  result.encoder = std::move(enc_back.params);
  result.decoder = std::move(dec_back.params);
  return result;
}

ClassifierResult classifier_loss(const Expert& expert, const Matrix& features,
                                 std::span<const int> labels) {
  check_width(expert, features);
  if (features.rows() == 0) throw InputError("classifier loss of an empty set");
  auto fwd = nn::mlp_forward(expert.classifier, features);
  auto ce = nn::softmax_cross_entropy(fwd.output, labels);
  if (!std::isfinite(ce.loss)) throw TrainingError("non-finite classifier loss");
  ClassifierResult result;
  result.loss = ce.loss;
  result.grads = nn::mlp_backward(expert.classifier, fwd.tape, ce.grad, false).params;
  return result;
}

ClassifierResult classifier_loss(const Expert& expert, std::span<const Sample> samples) {
  std::vector<int> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) {
    if (!s.label) throw InputError("classifier loss needs labelled samples");
    labels.push_back(*s.label);
  }
  return classifier_loss(expert, feature_matrix(samples), labels);
}

Matrix generate_replay(const Expert& expert, std::size_t n, Rng& rng) {
  if (n == 0) throw InputError("replay count must be positive");
  return nn::mlp_predict(expert.decoder, rng.normal_matrix(n, expert.latent_dim));
}

Matrix infer_latents(const Expert& expert, const Matrix& samples) {
  check_width(expert, samples);
  return column_slice(nn::mlp_predict(expert.encoder, samples), 0, expert.latent_dim);
}

std::vector<double> loglik_scores(const Expert& expert, const Matrix& samples,
                                  std::size_t n_draws, Rng& rng) {
  check_width(expert, samples);
  if (n_draws == 0) throw InputError("n_draws must be positive");
  const std::size_t latent = expert.latent_dim;
  std::vector<double> scores(samples.rows(), 0.0);
  if (samples.rows() == 0) return scores;
  const Matrix enc = nn::mlp_predict(expert.encoder, samples);
  const double inv = 1.0 / static_cast<double>(n_draws);
  for (std::size_t d = 0; d < n_draws; ++d) {
    const Matrix noise = rng.normal_matrix(samples.rows(), latent);
    const Matrix recon = nn::mlp_predict(expert.decoder, reparameterize(enc, noise, latent));
    const RowTerms t = row_terms(samples, recon, enc, latent, expert.decoder_variance);
    for (std::size_t r = 0; r < scores.size(); ++r)
      scores[r] -= (t.reconstruction[r] + t.kl[r]) * inv;
  }
  return scores;
}

double loglik_score(const Expert& expert, std::span<const double> sample, std::size_t n_draws,
                    Rng& rng) {
  const Matrix x(1, sample.size(), std::vector<double>(sample.begin(), sample.end()));
  return loglik_scores(expert, x, n_draws, rng).front();
}

TrainLosses train_minibatch(Expert& expert, const Matrix& features, std::span<const int> labels,
                            Rng& rng) {
  if (expert.frozen) throw std::logic_error("attempted to train a frozen expert");
  const Matrix noise = rng.normal_matrix(features.rows(), expert.latent_dim);
  auto elbo = elbo_loss(expert, features, noise);
  if (!elbo.encoder.all_finite() || !elbo.decoder.all_finite())
    throw TrainingError("non-finite ELBO gradient");
  TrainLosses losses;
  losses.elbo = elbo.loss;
  nn::adam_step(expert.encoder, elbo.encoder, expert.optim.encoder);
  nn::adam_step(expert.decoder, elbo.decoder, expert.optim.decoder);
  if (!labels.empty()) {
    auto cls = classifier_loss(expert, features, labels);
    losses.classifier = cls.loss;
    nn::adam_step(expert.classifier, cls.grads, expert.optim.classifier);
  }
  return losses;
}

}  // namespace emm
