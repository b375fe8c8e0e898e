#include "emm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "emm/errors.hpp"

namespace emm {

namespace {

constexpr char kMagic[8] = {'E', 'M', 'M', 'C', 'K', 'P', 'T', '2'};
constexpr std::uint64_t kSanityLimit = std::uint64_t{1} << 34;

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

class Writer {
 public:
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void flag(bool v) { u64(v ? 1 : 0); }
  void text(const std::string& s) {
    u64(s.size());
    raw(s.data(), s.size());
  }
  void reals(std::span<const double> v) {
    u64(v.size());
    raw(v.data(), v.size() * sizeof(double));
  }
  void tag(const char (&t)[5]) { raw(t, 4); }
  std::string take() { return std::move(out_); }

 private:
  void raw(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, sizeof v);
    return v;
  }
  double f64() {
    double v;
    raw(&v, sizeof v);
    return v;
  }
  bool flag() {
    const auto at = pos_;
    const auto v = u64();
    if (v > 1) throw FormatError("checkpoint: bad boolean", at);
    return v == 1;
  }
  std::size_t count() {
    const auto at = pos_;
    const auto v = u64();
    if (v > kSanityLimit) throw FormatError("checkpoint: implausible length", at);
    return static_cast<std::size_t>(v);
  }
  std::string text() {
    std::string s(count(), '\0');
    raw(s.data(), s.size());
    return s;
  }
  std::vector<double> reals() {
    std::vector<double> v(count());
    raw(v.data(), v.size() * sizeof(double));
    return v;
  }
  void expect(const char (&t)[5]) {
    const auto at = pos_;
    char got[4];
    raw(got, 4);
    if (std::memcmp(got, t, 4) != 0)
      throw FormatError(std::string("checkpoint: expected section '") + t + "'", at);
  }
  void expect_magic() {
    char got[8];
    raw(got, 8);
    if (std::memcmp(got, kMagic, 8) != 0) throw FormatError("checkpoint: bad magic", 0);
  }
  std::size_t position() const noexcept { return pos_; }
  bool done() const noexcept { return pos_ == bytes_.size(); }

 private:
  void raw(void* p, std::size_t n) {
    if (n > bytes_.size() - pos_) throw FormatError("checkpoint: truncated", pos_);
    std::memcpy(p, bytes_.data() + pos_, n);
    pos_ += n;
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

void put_counts(Writer& w, const std::vector<std::size_t>& v) {
  w.u64(v.size());
  for (auto x : v) w.u64(x);
}

std::vector<std::size_t> get_counts(Reader& r) {
  std::vector<std::size_t> v(r.count());
  for (auto& x : v) x = r.count();
  return v;
}

void put_matrix(Writer& w, const Matrix& m) {
  w.u64(m.rows());
  w.u64(m.cols());
  w.reals(m.values());
}

Matrix get_matrix(Reader& r) {
  const auto at = r.position();
  const auto rows = r.count();
  const auto cols = r.count();
  auto values = r.reals();
  if (values.size() != rows * cols) throw FormatError("checkpoint: matrix size mismatch", at);
  return Matrix(rows, cols, std::move(values));
}

void put_grads(Writer& w, const nn::MlpGradients& g) {
  w.u64(g.layers.size());
  for (const auto& l : g.layers) {
    put_matrix(w, l.weight);
    w.reals(l.bias);
  }
}

nn::MlpGradients get_grads(Reader& r) {
  nn::MlpGradients g;
  g.layers.resize(r.count());
  for (auto& l : g.layers) {
    l.weight = get_matrix(r);
    l.bias = r.reals();
  }
  return g;
}

void put_mlp(Writer& w, const nn::Mlp& net) {
  w.u64(net.layers.size());
  for (const auto& l : net.layers) {
    put_matrix(w, l.weight);
    w.reals(l.bias);
    w.text(std::string(nn::activation_name(l.activation)));
  }
}

nn::Mlp get_mlp(Reader& r) {
  nn::Mlp net;
  net.layers.resize(r.count());
  for (auto& l : net.layers) {
    l.weight = get_matrix(r);
    l.bias = r.reals();
    const auto at = r.position();
    try {
      l.activation = nn::parse_activation(r.text());
    } catch (const InputError&) {
      throw FormatError("checkpoint: unknown activation", at);
    }
  }
  return net;
}

void put_adam(Writer& w, const nn::AdamState& s) {
  w.f64(s.config.learning_rate);
  w.f64(s.config.beta1);
  w.f64(s.config.beta2);
  w.f64(s.config.epsilon);
  w.u64(s.step);
  put_grads(w, s.first);
  put_grads(w, s.second);
}

nn::AdamState get_adam(Reader& r) {
  nn::AdamState s;
  s.config.learning_rate = r.f64();
  s.config.beta1 = r.f64();
  s.config.beta2 = r.f64();
  s.config.epsilon = r.f64();
  s.step = r.u64();
  s.first = get_grads(r);
  s.second = get_grads(r);
  return s;
}

void put_kernel(Writer& w, const KernelSpec& k) {
  w.u64(k.kind == KernelKind::rbf ? 0 : 1);
  w.flag(k.bandwidth.has_value());
  w.f64(k.bandwidth.value_or(0.0));
}

KernelSpec get_kernel(Reader& r) {
  KernelSpec k;
  k.kind = r.u64() == 0 ? KernelKind::rbf : KernelKind::linear;
  const bool has = r.flag();
  const double b = r.f64();
  if (has) k.bandwidth = b;
  return k;
}

void put_config(Writer& w, const MixtureConfig& c) {
  w.tag("CONF");
  w.u64(c.arch.input_dim);
  w.u64(c.arch.latent_dim);
  w.u64(c.arch.class_count);
  put_counts(w, c.arch.vae_hidden);
  put_counts(w, c.arch.classifier_hidden);
  w.f64(c.arch.decoder_variance);
  w.f64(c.lambda);
  w.u64(c.direction == Direction::below ? 0 : 1);
  w.u64(c.hsic.m);
  w.u64(c.hsic.coupling == Coupling::independent ? 0 : 1);
  put_kernel(w, c.hsic.left_kernel);
  put_kernel(w, c.hsic.right_kernel);
  w.u64(c.train.epochs_per_step);
  w.u64(c.train.max_updates_per_step);
  w.u64(c.train.batch_size);
  w.f64(c.train.adam.learning_rate);
  w.f64(c.train.adam.beta1);
  w.f64(c.train.adam.beta2);
  w.f64(c.train.adam.epsilon);
  w.u64(c.n_draws);
  w.u64(c.warmup_updates);
}

MixtureConfig get_config(Reader& r) {
  r.expect("CONF");
  MixtureConfig c;
  c.arch.input_dim = r.count();
  c.arch.latent_dim = r.count();
  c.arch.class_count = r.count();
  c.arch.vae_hidden = get_counts(r);
  c.arch.classifier_hidden = get_counts(r);
  c.arch.decoder_variance = r.f64();
  c.lambda = r.f64();
  c.direction = r.u64() == 0 ? Direction::below : Direction::above;
  c.hsic.m = r.count();
  c.hsic.coupling = r.u64() == 0 ? Coupling::independent : Coupling::two_sample;
  c.hsic.left_kernel = get_kernel(r);
  c.hsic.right_kernel = get_kernel(r);
  c.train.epochs_per_step = r.count();
  c.train.max_updates_per_step = r.count();
  c.train.batch_size = r.count();
  c.train.adam.learning_rate = r.f64();
  c.train.adam.beta1 = r.f64();
  c.train.adam.beta2 = r.f64();
  c.train.adam.epsilon = r.f64();
  c.n_draws = r.count();
  c.warmup_updates = r.count();
  return c;
}

}  // namespace

std::string encode_checkpoint(const MixtureModel& model, const MemoryBuffer& buffer,
                              const Rng& rng) {
  std::string header(kMagic, kMagic + 8);
  Writer body;
  put_config(body, model.config());
  body.tag("EXPS");
  body.u64(model.step());
  body.u64(model.size());
  for (const Expert& e : model.experts()) {
    body.u64(e.id);
    body.u64(e.latent_dim);
    body.f64(e.decoder_variance);
    body.flag(e.frozen);
    put_mlp(body, e.encoder);
    put_mlp(body, e.decoder);
    put_mlp(body, e.classifier);
    put_adam(body, e.optim.encoder);
    put_adam(body, e.optim.decoder);
    put_adam(body, e.optim.classifier);
  }
  body.tag("BUFF");
  body.u64(buffer.capacity());
  body.u64(buffer.policy() == DropPolicy::sliding_window ? 0 : 1);
  body.u64(buffer.drop_count());
  body.u64(buffer.size());
  for (const Sample& s : buffer.items()) {
    body.reals(s.features);
    body.flag(s.label.has_value());
    body.u64(static_cast<std::uint64_t>(s.label.value_or(0)));
    body.u64(s.arrival_step);
  }
  body.tag("RNGS");
  body.text(rng.serialize());
  body.tag("END.");
  return header + body.take();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  r.expect_magic();
  MixtureConfig config = get_config(r);
  r.expect("EXPS");
  const std::uint64_t step = r.u64();
  std::vector<Expert> experts(r.count());
  for (Expert& e : experts) {
    e.id = r.count();
    e.latent_dim = r.count();
    e.decoder_variance = r.f64();
    e.frozen = r.flag();
    e.encoder = get_mlp(r);
    e.decoder = get_mlp(r);
    e.classifier = get_mlp(r);
    e.optim.encoder = get_adam(r);
    e.optim.decoder = get_adam(r);
    e.optim.classifier = get_adam(r);
  }
  r.expect("BUFF");
  const auto capacity = r.count();
  const auto policy = r.u64() == 0 ? DropPolicy::sliding_window : DropPolicy::random;
  const auto drop_count = r.count();
  std::vector<Sample> items(r.count());
  for (Sample& s : items) {
    s.features = r.reals();
    const bool labelled = r.flag();
    const auto label = r.u64();
    if (labelled) s.label = static_cast<int>(label);
    s.arrival_step = r.u64();
  }
  r.expect("RNGS");
  const auto rng_at = r.position();
  const std::string rng_state = r.text();
  r.expect("END.");
  if (!r.done()) throw FormatError("checkpoint: trailing bytes", r.position());

  Rng rng;
  try {
    rng = Rng::deserialize(rng_state);
  } catch (const Error& e) {
    throw FormatError(std::string("checkpoint: ") + e.what(), rng_at);
  }
  try {
    MemoryBuffer buffer(capacity, policy, drop_count);
    buffer.assign(std::move(items));
    return Checkpoint{MixtureModel(std::move(config), std::move(experts), step),
                      std::move(buffer), std::move(rng)};
  } catch (const FormatError&) {
    throw;
  } catch (const Error& e) {
    throw FormatError(std::string("checkpoint: inconsistent contents: ") + e.what(), 0);
  }
}

void save_checkpoint(const std::filesystem::path& path, const MixtureModel& model,
                     const MemoryBuffer& buffer, const Rng& rng) {
  const std::string bytes = encode_checkpoint(model, buffer, rng);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return decode_checkpoint(ss.str());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.detail(), e.offset());
  }
}

}  // namespace emm
