#pragma once

// Desk-scale binary-bottleneck autoencoder:
//   z  = H(BN(head(mix_in(enc(x) [+ e_mu]))))
//   x^ = dec(mix_out(proj(z) [+ e_mu]))
// trained on feature frames with an MSE reconstruction loss plus an optional
// event-count penalty. The scalar type is a template parameter so gradient
// checks can run in double while training runs in float.

#include <Eigen/Dense>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "spikecodec/codec.hpp"
#include "spikecodec/error.hpp"
#include "spikecodec/event_matrix.hpp"
#include "spikecodec/nn.hpp"

namespace spikecodec {

using nn::Index;

inline constexpr int kMuLevels = 32;

enum class Variant : std::uint32_t { Free = 0, Sparse = 1, MuSparse = 2 };

// Where the rate embedding is added when the model is rate-conditioned.
enum class MuPlacement : std::uint32_t { Both = 0, Encoder = 1, Decoder = 2 };

inline std::string variant_name(Variant v) {
  switch (v) {
    case Variant::Free: return "free";
    case Variant::Sparse: return "sparse";
    case Variant::MuSparse: return "mu";
  }
  return "?";
}

inline Variant parse_variant(std::string_view s) {
  if (s == "free") return Variant::Free;
  if (s == "sparse") return Variant::Sparse;
  if (s == "mu" || s == "mu_sparse" || s == "mu-sparse") return Variant::MuSparse;
  throw DomainError("unknown variant '" + std::string(s) + "' (free|sparse|mu)");
}

inline std::string placement_name(MuPlacement p) {
  switch (p) {
    case MuPlacement::Both: return "both";
    case MuPlacement::Encoder: return "encoder";
    case MuPlacement::Decoder: return "decoder";
  }
  return "?";
}

inline MuPlacement parse_placement(std::string_view s) {
  if (s == "both") return MuPlacement::Both;
  if (s == "encoder") return MuPlacement::Encoder;
  if (s == "decoder") return MuPlacement::Decoder;
  throw DomainError("unknown mu placement '" + std::string(s) + "' (both|encoder|decoder)");
}

struct ModelConfig {
  std::uint32_t n_features = 64;
  std::uint32_t hidden = 48;
  std::uint32_t n_units = 32;
  std::uint32_t kernel = 5;
  // Causal temporal convolutions on both sides: an event can neither precede
  // the evidence for it nor follow the frame it must reconstruct.
  bool causal = true;
  bool use_mu = false;
  MuPlacement mu_placement = MuPlacement::Both;

  void validate() const {
    if (n_features == 0 || hidden == 0 || n_units == 0) {
      throw DomainError("model widths must be positive");
    }
    if (kernel == 0 || kernel % 2 == 0) throw DomainError("kernel must be odd");
  }
};

inline void check_mu(int mu) {
  if (mu < 0 || mu >= kMuLevels) {
    throw DomainError("mu " + std::to_string(mu) + " outside 0.." +
                      std::to_string(kMuLevels - 1));
  }
}

template <typename Real>
class ToyAutoencoder {
public:
  using Mat = nn::Matrix<Real>;

  struct Output {
    Mat logits;  // N x (batch * steps)
    Mat z;       // binary, same shape
    Mat x_hat;   // F x (batch * steps)
  };

  ToyAutoencoder(const ModelConfig& cfg, std::uint64_t seed)
      : cfg_((cfg.validate(), cfg)),
        enc1_("enc1", cfg.n_features, cfg.hidden, cfg.kernel, 1, padding(cfg)),
        enc2_("enc2", cfg.hidden, cfg.hidden, cfg.kernel, 2, padding(cfg)),
        mix_in_("mix_in", cfg.hidden),
        head_("head", cfg.hidden, cfg.n_units, 1),
        bn_("bn", cfg.n_units),
        proj_("proj", cfg.n_units, cfg.hidden, 1),
        mix_out_("mix_out", cfg.hidden),
        dec1_("dec1", cfg.hidden, cfg.hidden, cfg.kernel, 1, padding(cfg)),
        dec2_("dec2", cfg.hidden, cfg.hidden, cfg.kernel, 2, padding(cfg)),
        dec3_("dec3", cfg.hidden, cfg.n_features, cfg.kernel, 4, padding(cfg)),
        mu_emb_("mu", cfg.hidden, kMuLevels) {
    std::mt19937_64 rng(seed);
    enc1_.init(rng);
    enc2_.init(rng);
    mix_in_.init(rng);
    head_.init(rng);
    proj_.init(rng);
    mix_out_.init(rng);
    dec1_.init(rng);
    dec2_.init(rng);
    dec3_.init(rng);
    mu_emb_.init(rng, 1.0);
  }

  const ModelConfig& config() const noexcept { return cfg_; }

  // Every trainable tensor in checkpoint order.
  nn::ParamList<Real> params() {
    nn::ParamList<Real> out;
    auto add = [&](nn::ParamList<Real> ps) { out.insert(out.end(), ps.begin(), ps.end()); };
    add(enc1_.params());
    add(enc2_.params());
    add(mix_in_.params());
    add(head_.params());
    add(bn_.params());
    add(proj_.params());
    add(mix_out_.params());
    add(dec1_.params());
    add(dec2_.params());
    add(dec3_.params());
    add(mu_emb_.params());
    return out;
  }

  nn::Conv1d<Real>& head() { return head_; }
  nn::BatchNorm<Real>& batch_norm() { return bn_; }

  // x: F x (batch * steps) -> logits N x (batch * steps).
  Mat encode_logits(const Mat& x, Index steps, std::span<const int> mu, bool training) {
    check_input(x, cfg_.n_features, steps, mu);
    Mat h = act1_.forward(enc1_.forward(x, steps));
    h = act2_.forward(enc2_.forward(h, steps));
    if (embed_encoder()) mu_emb_.add_to(h, mu, steps);
    h = mix_in_.forward(h, steps);
    return bn_.forward(head_.forward(h, steps), training);
  }

  // dlogits -> accumulates encoder-side parameter gradients; returns dx.
  Mat encode_backward(const Mat& dlogits, std::span<const int> mu, Index steps) {
    Mat g = head_.backward(bn_.backward(dlogits));
    g = mix_in_.backward(g);
    if (embed_encoder()) mu_emb_.backward(g, mu, steps);
    g = enc2_.backward(act2_.backward(g));
    return enc1_.backward(act1_.backward(g));
  }

  // z (any real values): N x (batch * steps) -> x_hat F x (batch * steps).
  Mat decode(const Mat& z, Index steps, std::span<const int> mu) {
    check_input(z, cfg_.n_units, steps, mu);
    Mat h = proj_.forward(z, steps);
    if (embed_decoder()) mu_emb_.add_to(h, mu, steps);
    h = mix_out_.forward(h, steps);
    h = act3_.forward(dec1_.forward(h, steps));
    h = act4_.forward(dec2_.forward(h, steps));
    return dec3_.forward(h, steps);
  }

  Mat decode_backward(const Mat& dx_hat, std::span<const int> mu, Index steps) {
    Mat g = dec3_.backward(dx_hat);
    g = dec2_.backward(act4_.backward(g));
    g = dec1_.backward(act3_.backward(g));
    g = mix_out_.backward(g);
    if (embed_decoder()) mu_emb_.backward(g, mu, steps);
    return proj_.backward(g);
  }

  Output forward(const Mat& x, Index steps, std::span<const int> mu, bool training) {
    Output out;
    out.logits = encode_logits(x, steps, mu, training);
    out.z = nn::heaviside_forward(out.logits);
    out.x_hat = decode(out.z, steps, mu);
    return out;
  }

  // Full backward through the binarizer. dz_extra is added to the gradient
  // reaching z from the decoder (the event-count penalty enters here).
  void backward(const Output& out, const Mat& dx_hat, const Mat* dz_extra,
                std::span<const int> mu, Index steps) {
    Mat dz = decode_backward(dx_hat, mu, steps);
    if (dz_extra != nullptr) dz += *dz_extra;
    encode_backward(nn::heaviside_backward(out.logits, dz), mu, steps);
  }

private:
  static nn::Padding padding(const ModelConfig& c) {
    return c.causal ? nn::Padding::Causal : nn::Padding::Same;
  }

  bool embed_encoder() const {
    return cfg_.use_mu && cfg_.mu_placement != MuPlacement::Decoder;
  }
  bool embed_decoder() const {
    return cfg_.use_mu && cfg_.mu_placement != MuPlacement::Encoder;
  }

  void check_input(const Mat& x, Index rows, Index steps, std::span<const int> mu) const {
    if (steps <= 0 || x.cols() == 0 || x.cols() % steps != 0) {
      throw ShapeError("input columns must be a positive multiple of the step count");
    }
    if (x.rows() != rows) {
      throw ShapeError("input has " + std::to_string(x.rows()) + " rows, expected " +
                       std::to_string(rows));
    }
    if (!x.allFinite()) throw NumericalError("non-finite model input");
    if (cfg_.use_mu) {
      if (static_cast<Index>(mu.size()) != x.cols() / steps) {
        throw DomainError("rate-conditioned model needs one mu per sample");
      }
      for (int m : mu) check_mu(m);
    } else if (!mu.empty()) {
      throw DomainError("mu given to a model without rate conditioning");
    }
  }

  ModelConfig cfg_;
  nn::Conv1d<Real> enc1_, enc2_;
  nn::Silu<Real> act1_, act2_;
  nn::ContextMixer<Real> mix_in_;
  nn::Conv1d<Real> head_;
  nn::BatchNorm<Real> bn_;
  nn::Conv1d<Real> proj_;
  nn::ContextMixer<Real> mix_out_;
  nn::Conv1d<Real> dec1_, dec2_, dec3_;
  nn::Silu<Real> act3_, act4_;
  nn::Embedding<Real> mu_emb_;
};

// ---------------------------------------------------------------------------
// Losses

template <typename Real>
double loss_reconstruction(const nn::Matrix<Real>& x, const nn::Matrix<Real>& x_hat) {
  if (x.rows() != x_hat.rows() || x.cols() != x_hat.cols()) {
    throw ShapeError("reconstruction shapes differ");
  }
  return (x_hat - x).template cast<double>().squaredNorm() / static_cast<double>(x.size());
}

template <typename Real>
nn::Matrix<Real> loss_reconstruction_grad(const nn::Matrix<Real>& x,
                                          const nn::Matrix<Real>& x_hat) {
  return (x_hat - x) * static_cast<Real>(2.0 / static_cast<double>(x.size()));
}

// max(0, cost_time(exact) - b0)
inline double loss_sparsity(std::uint64_t n, std::uint64_t t, std::uint64_t s, double b0) {
  if (!(b0 >= 0.0)) throw DomainError("b0 must be non-negative");
  const auto bits = static_cast<double>(cost_time(n, t, s, CostMode::Exact));
  return std::max(0.0, bits - b0);
}

// dL/dz for every entry of the sample: width(T) while over budget, else 0.
inline double loss_sparsity_slope(std::uint64_t n, std::uint64_t t, std::uint64_t s, double b0) {
  return loss_sparsity(n, t, s, b0) > 0.0 ? static_cast<double>(width(t)) : 0.0;
}

// N * T * 2^(-mu / 4)
inline double target_events(std::uint64_t n, std::uint64_t t, int mu) {
  check_mu(mu);
  return static_cast<double>(n) * static_cast<double>(t) * std::exp2(-mu / 4.0);
}

inline double loss_sparsity_mu(std::uint64_t n, std::uint64_t t, std::uint64_t s, int mu) {
  return std::abs(static_cast<double>(s) - target_events(n, t, mu));
}

inline double loss_sparsity_mu_slope(std::uint64_t n, std::uint64_t t, std::uint64_t s, int mu) {
  const double d = static_cast<double>(s) - target_events(n, t, mu);
  return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  Variant variant = Variant::Sparse;
  double b0 = 6000.0;
  double gamma_inf = 1e-5;
  std::array<std::uint64_t, 3> phase_steps = {8000, 6000, 6000};
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
  std::uint32_t batch_size = 4;
  std::uint32_t n_units = 32;
  std::uint32_t n_steps = 256;
  std::uint32_t n_features = 64;
  std::uint32_t hidden = 48;
  MuPlacement mu_placement = MuPlacement::Both;
  bool causal = true;

  std::uint64_t total_steps() const {
    return phase_steps[0] + phase_steps[1] + phase_steps[2];
  }

  ModelConfig model() const {
    ModelConfig m;
    m.n_features = n_features;
    m.hidden = hidden;
    m.n_units = n_units;
    m.use_mu = variant == Variant::MuSparse;
    m.mu_placement = mu_placement;
    m.causal = causal;
    return m;
  }

  void validate() const {
    if (total_steps() == 0) throw DomainError("training needs at least one step");
    if (!(gamma_inf >= 0.0) || !std::isfinite(gamma_inf)) {
      throw DomainError("gamma_inf must be finite and >= 0");
    }
    if (!(b0 >= 0.0)) throw DomainError("b0 must be >= 0");
    if (!(learning_rate > 0.0)) throw DomainError("learning rate must be positive");
    if (batch_size == 0 || n_steps == 0) throw DomainError("batch size and steps must be positive");
    model().validate();
  }
};

// Per-variant defaults. The rate-prompted penalty has slope 1 per event
// rather than width(T), so it gets a larger weight.
inline TrainConfig default_train_config(Variant v) {
  TrainConfig cfg;
  cfg.variant = v;
  if (v == Variant::Free) cfg.gamma_inf = 0.0;
  if (v == Variant::MuSparse) cfg.gamma_inf = 1e-4;
  return cfg;
}

// 0 in phase 1, cosine ramp to gamma_inf over phase 2, gamma_inf in phase 3.
// Free training is pinned at 0.
inline double gamma_schedule(std::uint64_t step, const TrainConfig& cfg) {
  if (cfg.variant == Variant::Free) return 0.0;
  const auto [p1, p2, p3] = cfg.phase_steps;
  (void)p3;
  if (step < p1) return 0.0;
  if (step >= p1 + p2) return cfg.gamma_inf;
  const double u = static_cast<double>(step - p1 + 1) / static_cast<double>(p2);
  return cfg.gamma_inf * 0.5 * (1.0 - std::cos(std::numbers::pi * u));
}

struct MetricsRow {
  std::uint64_t step = 0;
  double loss_x = 0;
  double loss_z = 0;
  double gamma = 0;
  double mean_s = 0;
  double density = 0;
  double bits_exact = 0;  // mean best-format exact cost over the batch

  bool operator==(const MetricsRow&) const = default;
};

inline constexpr std::string_view kMetricsCsvHeader =
    "step,loss_x,loss_z,gamma,mean_S,density,bits_exact";

inline void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows) {
  out << kMetricsCsvHeader << '\n';
  out << std::setprecision(9);
  for (const auto& r : rows) {
    out << r.step << ',' << r.loss_x << ',' << r.loss_z << ',' << r.gamma << ','
        << r.mean_s << ',' << r.density << ',' << r.bits_exact << '\n';
  }
}

template <typename Real>
struct TrainResult {
  ToyAutoencoder<Real> model;
  std::vector<MetricsRow> log;
  std::uint64_t sparsity_evaluations = 0;  // loss-path reads of the event-count penalty
};

// Per-sample event counts of a binary N x (batch * steps) matrix.
template <typename Real>
std::vector<std::uint64_t> event_counts(const nn::Matrix<Real>& z, Index steps) {
  std::vector<std::uint64_t> s(static_cast<std::size_t>(z.cols() / steps));
  for (std::size_t b = 0; b < s.size(); ++b) {
    s[b] = static_cast<std::uint64_t>(
        z.middleCols(static_cast<Index>(b) * steps, steps).template cast<double>().sum());
  }
  return s;
}

// Gradient descent on L_x + gamma * L_z over random mini-batches of `frames`.
// `on_step` (if set) sees each metrics row as it is produced.
template <typename Real = float, typename Callback = std::nullptr_t>
TrainResult<Real> train(const TrainConfig& cfg, std::span<const Eigen::MatrixXd> frames,
                        Callback on_step = nullptr) {
  cfg.validate();
  if (frames.empty()) throw DomainError("training set is empty");
  for (const auto& f : frames) {
    if (f.rows() != cfg.n_features || f.cols() != cfg.n_steps) {
      throw ShapeError("training clip is " + std::to_string(f.rows()) + "x" +
                       std::to_string(f.cols()) + ", expected " +
                       std::to_string(cfg.n_features) + "x" + std::to_string(cfg.n_steps));
    }
  }
  using Mat = nn::Matrix<Real>;
  std::mt19937_64 rng(cfg.seed);
  TrainResult<Real> result{ToyAutoencoder<Real>(cfg.model(), rng()), {}, 0};
  auto& model = result.model;
  const auto params = model.params();
  nn::Adam<Real> adam({cfg.learning_rate});

  const Index steps = cfg.n_steps;
  const Index batch = cfg.batch_size;
  const std::uint64_t n = cfg.n_units;
  const std::uint64_t t = cfg.n_steps;
  std::uniform_int_distribution<std::size_t> pick(0, frames.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<std::vector<Real>> clips;
  clips.reserve(frames.size());
  for (const auto& f : frames) {
    const Mat cast = f.cast<Real>();
    clips.emplace_back(cast.data(), cast.data() + cast.size());
  }

  Mat x(cfg.n_features, batch * steps);
  std::vector<int> mu;
  result.log.reserve(cfg.total_steps());
  for (std::uint64_t step = 0; step < cfg.total_steps(); ++step) {
    for (Index b = 0; b < batch; ++b) {
      const auto& src = clips[pick(rng)];
      std::memcpy(x.data() + b * steps * x.rows(), src.data(), src.size() * sizeof(Real));
    }
    mu.clear();
    if (cfg.variant == Variant::MuSparse) {
      // One draw per stratum of 0..31: the marginal stays uniform while every
      // batch spans the whole rate range, so batch-norm statistics do not
      // depend on which rates happened to be drawn together.
      for (Index b = 0; b < batch; ++b) {
        const double u = (static_cast<double>(b) + unit(rng)) / static_cast<double>(batch);
        mu.push_back(std::min(kMuLevels - 1, static_cast<int>(u * kMuLevels)));
      }
    }

    nn::Adam<Real>::zero_grad(params);
    const auto out = model.forward(x, steps, mu, true);
    const double gamma = gamma_schedule(step, cfg);
    const auto counts = event_counts(out.z, steps);

    MetricsRow row;
    row.step = step;
    row.gamma = gamma;
    row.loss_x = loss_reconstruction(x, out.x_hat);
    Mat dz_extra;
    if (cfg.variant != Variant::Free) {
      dz_extra.setZero(out.z.rows(), out.z.cols());
      for (std::size_t b = 0; b < counts.size(); ++b) {
        double lz = 0;
        double slope = 0;
        if (cfg.variant == Variant::Sparse) {
          lz = loss_sparsity(n, t, counts[b], cfg.b0);
          slope = loss_sparsity_slope(n, t, counts[b], cfg.b0);
        } else {
          lz = loss_sparsity_mu(n, t, counts[b], mu[b]);
          slope = loss_sparsity_mu_slope(n, t, counts[b], mu[b]);
        }
        ++result.sparsity_evaluations;
        row.loss_z += lz / static_cast<double>(batch);
        dz_extra.middleCols(static_cast<Index>(b) * steps, steps)
            .setConstant(static_cast<Real>(gamma * slope / static_cast<double>(batch)));
      }
    }
    for (auto s : counts) {
      row.mean_s += static_cast<double>(s) / static_cast<double>(batch);
      row.bits_exact += static_cast<double>(cost_report(n, t, s, CostMode::Exact).best_bits()) /
                        static_cast<double>(batch);
    }
    row.density = row.mean_s / static_cast<double>(n * t);

    const double total = row.loss_x + gamma * row.loss_z;
    if (!std::isfinite(total)) {
      throw NumericalError("non-finite loss at step " + std::to_string(step) +
                           " (loss_x=" + std::to_string(row.loss_x) +
                           ", loss_z=" + std::to_string(row.loss_z) + ")");
    }
    model.backward(out, loss_reconstruction_grad(x, out.x_hat),
                   cfg.variant == Variant::Free ? nullptr : &dz_extra, mu, steps);
    adam.step(params);
    result.log.push_back(row);
    if constexpr (!std::is_same_v<Callback, std::nullptr_t>) on_step(row);
  }
  for (auto* p : params) {
    if (!p->value.allFinite()) throw NumericalError("parameter " + p->name + " diverged");
  }
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation helpers (single clip, evaluation-mode batch norm)

struct Evaluation {
  Eigen::MatrixXd logits;
  EventMatrix z;
  Eigen::MatrixXd x_hat;
};

inline std::vector<int> mu_list(const ModelConfig& cfg, std::optional<int> mu) {
  if (cfg.use_mu != mu.has_value()) {
    throw DomainError(cfg.use_mu ? "rate-conditioned model needs a mu value"
                                 : "mu given to a model without rate conditioning");
  }
  if (mu) return {*mu};
  return {};
}

template <typename Real>
EventMatrix to_event_matrix(const nn::Matrix<Real>& z) {
  std::vector<Event> events;
  for (Index i = 0; i < z.rows(); ++i) {
    for (Index t = 0; t < z.cols(); ++t) {
      if (z(i, t) != Real(0)) {
        events.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(t)});
      }
    }
  }
  return EventMatrix(static_cast<std::uint64_t>(z.rows()), static_cast<std::uint64_t>(z.cols()),
                     std::move(events));
}

template <typename Real>
Evaluation evaluate(ToyAutoencoder<Real>& model, const Eigen::MatrixXd& frames,
                    std::optional<int> mu = std::nullopt) {
  const auto mus = mu_list(model.config(), mu);
  const auto out = model.forward(frames.cast<Real>(), frames.cols(), mus, false);
  return {out.logits.template cast<double>(), to_event_matrix(out.z),
          out.x_hat.template cast<double>()};
}

template <typename Real>
EventMatrix encode_to_matrix(ToyAutoencoder<Real>& model, const Eigen::MatrixXd& frames,
                             std::optional<int> mu = std::nullopt) {
  const auto mus = mu_list(model.config(), mu);
  const auto logits = model.encode_logits(frames.cast<Real>(), frames.cols(), mus, false);
  return to_event_matrix(nn::heaviside_forward(logits));
}

template <typename Real>
Eigen::MatrixXd decode_matrix(ToyAutoencoder<Real>& model, const EventMatrix& z,
                              std::optional<int> mu = std::nullopt) {
  if (z.n_units() != model.config().n_units) {
    throw ShapeError("event matrix has " + std::to_string(z.n_units()) + " units, model has " +
                     std::to_string(model.config().n_units));
  }
  const auto mus = mu_list(model.config(), mu);
  nn::Matrix<Real> dense = nn::Matrix<Real>::Zero(z.n_units(), z.n_steps());
  for (const auto& e : z.events()) dense(e.unit, e.step) = Real(1);
  return model.decode(dense, static_cast<Index>(z.n_steps()), mus).template cast<double>();
}

// ---------------------------------------------------------------------------
// Checkpoint, little-endian throughout:
//   "SPKN"  u32 version  u32 n_features  u32 hidden  u32 n_units  u32 kernel
//   u32 causal  u32 use_mu  u32 mu_placement  u32 tensor_count
//   per tensor (params() order, then BN running mean and variance as Nx1):
//     u32 rows  u32 cols  f64[rows * cols] column-major

inline constexpr std::array<char, 4> kCheckpointMagic = {'S', 'P', 'K', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.put(static_cast<char>((v >> (8 * k)) & 0xFF));
}

inline void put_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int k = 0; k < 8; ++k) out.put(static_cast<char>((bits >> (8 * k)) & 0xFF));
}

inline std::uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) throw TruncatedStream("checkpoint truncated");
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline double get_f64(std::istream& in) {
  std::array<unsigned char, 8> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 8)) throw TruncatedStream("checkpoint truncated");
  std::uint64_t bits = 0;
  for (int k = 7; k >= 0; --k) bits = (bits << 8) | b[k];
  return std::bit_cast<double>(bits);
}

template <typename Derived>
void put_tensor(std::ostream& out, const Eigen::MatrixBase<Derived>& m) {
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (Index c = 0; c < m.cols(); ++c)
    for (Index r = 0; r < m.rows(); ++r) put_f64(out, static_cast<double>(m(r, c)));
}

template <typename Derived>
void get_tensor(std::istream& in, Eigen::MatrixBase<Derived>& m, const std::string& name) {
  const auto rows = get_u32(in);
  const auto cols = get_u32(in);
  if (rows != m.rows() || cols != m.cols()) {
    throw CorruptStream("checkpoint tensor " + name + " has shape " + std::to_string(rows) + "x" +
                        std::to_string(cols) + ", expected " + std::to_string(m.rows()) + "x" +
                        std::to_string(m.cols()));
  }
  for (Index c = 0; c < m.cols(); ++c) {
    for (Index r = 0; r < m.rows(); ++r) {
      const double v = get_f64(in);
      if (!std::isfinite(v)) throw CorruptStream("checkpoint tensor " + name + " is not finite");
      m(r, c) = static_cast<typename Derived::Scalar>(v);
    }
  }
}

}  // namespace detail

template <typename Real>
void save_checkpoint(std::ostream& out, ToyAutoencoder<Real>& model) {
  const auto& c = model.config();
  out.write(kCheckpointMagic.data(), 4);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, c.n_features);
  detail::put_u32(out, c.hidden);
  detail::put_u32(out, c.n_units);
  detail::put_u32(out, c.kernel);
  detail::put_u32(out, c.causal ? 1 : 0);
  detail::put_u32(out, c.use_mu ? 1 : 0);
  detail::put_u32(out, static_cast<std::uint32_t>(c.mu_placement));
  const auto params = model.params();
  detail::put_u32(out, static_cast<std::uint32_t>(params.size() + 2));
  for (auto* p : params) detail::put_tensor(out, p->value);
  detail::put_tensor(out, model.batch_norm().running_mean());
  detail::put_tensor(out, model.batch_norm().running_var());
}

template <typename Real = float>
ToyAutoencoder<Real> load_checkpoint(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), 4)) throw TruncatedStream("checkpoint truncated");
  if (magic != kCheckpointMagic) throw CorruptStream("not a checkpoint (bad magic)");
  const auto version = detail::get_u32(in);
  if (version != kCheckpointVersion) {
    throw CorruptStream("unsupported checkpoint version " + std::to_string(version));
  }
  ModelConfig c;
  c.n_features = detail::get_u32(in);
  c.hidden = detail::get_u32(in);
  c.n_units = detail::get_u32(in);
  c.kernel = detail::get_u32(in);
  const auto causal = detail::get_u32(in);
  const auto use_mu = detail::get_u32(in);
  const auto placement = detail::get_u32(in);
  if (causal > 1 || use_mu > 1 || placement > 2) throw CorruptStream("bad checkpoint flags");
  c.causal = causal == 1;
  c.use_mu = use_mu == 1;
  c.mu_placement = static_cast<MuPlacement>(placement);
  try {
    c.validate();
  } catch (const DomainError& e) {
    throw CorruptStream(std::string("checkpoint shape: ") + e.what());
  }
  ToyAutoencoder<Real> model(c, 0);
  auto params = model.params();
  const auto count = detail::get_u32(in);
  if (count != params.size() + 2) throw CorruptStream("checkpoint tensor count mismatch");
  for (auto* p : params) detail::get_tensor(in, p->value, p->name);
  detail::get_tensor(in, model.batch_norm().running_mean(), "bn.running_mean");
  detail::get_tensor(in, model.batch_norm().running_var(), "bn.running_var");
  if (in.peek() != std::char_traits<char>::eof()) {
    throw CorruptStream("trailing bytes after checkpoint");
  }
  return model;
}

template <typename Real>
void save_checkpoint(const std::string& path, ToyAutoencoder<Real>& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  save_checkpoint(out, model);
  if (!out) throw Error("write to " + path + " failed");
}

template <typename Real = float>
ToyAutoencoder<Real> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return load_checkpoint<Real>(in);
}

// ---------------------------------------------------------------------------
// Flat key=value configuration ('#' starts a comment).

using KeyValues = std::map<std::string, std::string>;

inline KeyValues parse_key_values(std::istream& in) {
  KeyValues out;
  std::string line;
  std::size_t line_no = 0;
  std::size_t offset = 0;  // byte offset of the current line
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t line_offset = offset;
    offset += line.size() + 1;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("config line " + std::to_string(line_no) + ": expected key=value",
                       line_offset);
    }
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    if (key.empty()) {
      throw ParseError("config line " + std::to_string(line_no) + ": empty key", line_offset);
    }
    out[key] = value;
  }
  return out;
}

// Applies recognised keys; unknown keys are an error.
inline void apply_key_values(TrainConfig& cfg, const KeyValues& kv) {
  auto as_u64 = [](const std::string& k, const std::string& v) {
    std::size_t used = 0;
    unsigned long long out = 0;
    try {
      out = std::stoull(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != v.size() || v.empty() || v[0] == '-') {
      throw DomainError("config key " + k + ": expected a non-negative integer, got '" + v + "'");
    }
    return static_cast<std::uint64_t>(out);
  };
  auto as_u32 = [&](const std::string& k, const std::string& v) {
    const auto x = as_u64(k, v);
    if (x > 0xFFFFFFFFull) throw DomainError("config key " + k + ": value too large");
    return static_cast<std::uint32_t>(x);
  };
  auto as_f64 = [](const std::string& k, const std::string& v) {
    std::size_t used = 0;
    double out = 0;
    try {
      out = std::stod(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != v.size() || v.empty() || !std::isfinite(out)) {
      throw DomainError("config key " + k + ": expected a number, got '" + v + "'");
    }
    return out;
  };
  for (const auto& [k, v] : kv) {
    if (k == "variant") cfg.variant = parse_variant(v);
    else if (k == "b0") cfg.b0 = as_f64(k, v);
    else if (k == "gamma_inf") cfg.gamma_inf = as_f64(k, v);
    else if (k == "phase1") cfg.phase_steps[0] = as_u64(k, v);
    else if (k == "phase2") cfg.phase_steps[1] = as_u64(k, v);
    else if (k == "phase3") cfg.phase_steps[2] = as_u64(k, v);
    else if (k == "learning_rate") cfg.learning_rate = as_f64(k, v);
    else if (k == "seed") cfg.seed = as_u64(k, v);
    else if (k == "batch_size") cfg.batch_size = as_u32(k, v);
    else if (k == "n_units") cfg.n_units = as_u32(k, v);
    else if (k == "n_steps") cfg.n_steps = as_u32(k, v);
    else if (k == "n_features") cfg.n_features = as_u32(k, v);
    else if (k == "hidden") cfg.hidden = as_u32(k, v);
    else if (k == "mu_placement") cfg.mu_placement = parse_placement(v);
    else if (k == "causal") {
      if (v != "0" && v != "1") throw DomainError("config key causal: expected 0 or 1");
      cfg.causal = v == "1";
    }
    else throw DomainError("unknown config key '" + k + "'");
  }
}

}  // namespace spikecodec
