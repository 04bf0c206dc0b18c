#pragma once

// Edge-probing classifier over frozen span representations.
//
//   layer pooling   Mix:       x_t = gamma * sum_l softmax(s)_l * v_{l,t}
//                   Single(l): x_t = v_{l,t}
//   projection      z_t = W_p x_t + b_p                  (H -> P)
//   span pooling    z   = mean_t z_t
//   MLP head        o   = W_2 relu(W_1 z + b_1) + b_2    (P -> M -> K)
//   output          softmax(o), loss in bits = -log2 p[label]
//
// Layer mixing and projection are affine, so the token mean is taken before
// projecting; this is algebraically identical to projecting every token.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "spanprobe/activation_store.hpp"
#include "spanprobe/errors.hpp"
#include "spanprobe/rng.hpp"

namespace spanprobe {

enum class LayerMode { Mix, Single };

struct LayerSelect {
  LayerMode mode = LayerMode::Mix;
  std::uint32_t layer = 0;  // only meaningful for Single

  static LayerSelect mix() { return {LayerMode::Mix, 0}; }
  static LayerSelect single(std::uint32_t l) { return {LayerMode::Single, l}; }
  bool operator==(const LayerSelect&) const = default;

  std::string to_string() const { return mode == LayerMode::Mix ? "mix" : std::to_string(layer); }
};

enum class SpanPooling { Mean };

struct ProbeConfig {
  std::size_t projection_dim = 256;
  std::size_t mlp_hidden_dim = 256;
  LayerSelect layers = LayerSelect::mix();
  SpanPooling pooling = SpanPooling::Mean;
  double learning_rate = 5e-5;
  std::size_t batch_size = 32;
  std::size_t epochs = 5;  // 0 leaves the probe at its initialization
  std::uint32_t num_classes = 2;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  void validate(const Dims& dims) const {
    if (projection_dim < 1 || mlp_hidden_dim < 1) throw ConfigError("probe dims must be >= 1");
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate > 0)) throw ConfigError("learning_rate must be > 0");
    if (dims.num_layers < 1 || dims.hidden_dim < 1) throw ConfigError("input dims must be >= 1");
    if (layers.mode == LayerMode::Single && layers.layer >= dims.num_layers) {
      throw ConfigError("single layer " + std::to_string(layers.layer) + " >= num_layers " +
                        std::to_string(dims.num_layers));
    }
  }
};

/// Sizes and offsets of the parameter groups inside the flat vector.
struct ProbeShape {
  std::size_t layers = 0, input = 0, projection = 0, hidden = 0, classes = 0;

  static ProbeShape of(const Dims& d, const ProbeConfig& c) {
    return {d.num_layers, d.hidden_dim, c.projection_dim, c.mlp_hidden_dim, c.num_classes};
  }

  std::size_t mix_offset() const { return 0; }
  std::size_t gamma_offset() const { return layers; }
  std::size_t proj_w_offset() const { return layers + 1; }
  std::size_t proj_b_offset() const { return proj_w_offset() + projection * input; }
  std::size_t hid_w_offset() const { return proj_b_offset() + projection; }
  std::size_t hid_b_offset() const { return hid_w_offset() + hidden * projection; }
  std::size_t out_w_offset() const { return hid_b_offset() + hidden; }
  std::size_t out_b_offset() const { return out_w_offset() + classes * hidden; }
  std::size_t total() const { return out_b_offset() + classes; }

  bool operator==(const ProbeShape&) const = default;
};

enum class ParamGroup { MixLogits, Gamma, ProjectionWeight, ProjectionBias, HiddenWeight, HiddenBias, OutputWeight, OutputBias };

inline constexpr ParamGroup kAllParamGroups[] = {ParamGroup::MixLogits,        ParamGroup::Gamma,
                                                 ParamGroup::ProjectionWeight, ParamGroup::ProjectionBias,
                                                 ParamGroup::HiddenWeight,     ParamGroup::HiddenBias,
                                                 ParamGroup::OutputWeight,     ParamGroup::OutputBias};

inline const char* to_string(ParamGroup g) {
  switch (g) {
    case ParamGroup::MixLogits: return "mix_logits";
    case ParamGroup::Gamma: return "gamma";
    case ParamGroup::ProjectionWeight: return "projection_weight";
    case ParamGroup::ProjectionBias: return "projection_bias";
    case ParamGroup::HiddenWeight: return "hidden_weight";
    case ParamGroup::HiddenBias: return "hidden_bias";
    case ParamGroup::OutputWeight: return "output_weight";
    case ParamGroup::OutputBias: return "output_bias";
  }
  return "?";
}

/// [begin, end) of a group inside the flat parameter vector.
inline std::pair<std::size_t, std::size_t> group_range(const ProbeShape& s, ParamGroup g) {
  switch (g) {
    case ParamGroup::MixLogits: return {s.mix_offset(), s.gamma_offset()};
    case ParamGroup::Gamma: return {s.gamma_offset(), s.proj_w_offset()};
    case ParamGroup::ProjectionWeight: return {s.proj_w_offset(), s.proj_b_offset()};
    case ParamGroup::ProjectionBias: return {s.proj_b_offset(), s.hid_w_offset()};
    case ParamGroup::HiddenWeight: return {s.hid_w_offset(), s.hid_b_offset()};
    case ParamGroup::HiddenBias: return {s.hid_b_offset(), s.out_w_offset()};
    case ParamGroup::OutputWeight: return {s.out_w_offset(), s.out_b_offset()};
    case ParamGroup::OutputBias: return {s.out_b_offset(), s.total()};
  }
  return {0, 0};
}

/// All trainable weights in one flat vector; weight matrices are row-major
/// [out][in].
template <class Real = double>
struct ProbeParams {
  ProbeShape shape;
  LayerSelect layers;
  std::vector<Real> data;

  std::span<Real> group(ParamGroup g) {
    auto [b, e] = group_range(shape, g);
    return {data.data() + b, e - b};
  }
  std::span<const Real> group(ParamGroup g) const {
    auto [b, e] = group_range(shape, g);
    return {data.data() + b, e - b};
  }
  Real& gamma() { return data[shape.gamma_offset()]; }
  Real gamma() const { return data[shape.gamma_offset()]; }

  bool operator==(const ProbeParams&) const = default;
};

/// Mix logits 0, gamma 1, projection and hidden layers uniform in
/// +-1/sqrt(fan_in), output layer zero (so every initial prediction is uniform).
template <class Real = double>
ProbeParams<Real> init_params(const Dims& dims, const ProbeConfig& config, std::uint64_t seed) {
  config.validate(dims);
  ProbeParams<Real> p{ProbeShape::of(dims, config), config.layers, {}};
  p.data.assign(p.shape.total(), Real{0});
  p.gamma() = Real{1};
  Rng rng(seed);
  auto fill = [&](ParamGroup g, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& w : p.group(g)) w = static_cast<Real>(rng.uniform(-bound, bound));
  };
  fill(ParamGroup::ProjectionWeight, p.shape.input);
  fill(ParamGroup::ProjectionBias, p.shape.input);
  fill(ParamGroup::HiddenWeight, p.shape.projection);
  fill(ParamGroup::HiddenBias, p.shape.projection);
  return p;
}

template <class Real>
std::vector<Real> softmax(std::span<const Real> logits) {
  std::vector<Real> out(logits.size());
  const Real mx = *std::max_element(logits.begin(), logits.end());
  Real sum = 0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out[k] = std::exp(logits[k] - mx);
    sum += out[k];
  }
  for (auto& v : out) v /= sum;
  return out;
}

inline constexpr double kProbabilityFloor = 0x1.0p-60;

/// Cross-entropy in bits with the probability floored at 2^-60.
template <class Real>
double loss_bits(std::span<const Real> probs, std::uint32_t label) {
  const double p = std::max(static_cast<double>(probs[label]), kProbabilityFloor);
  return -std::log2(p);
}

/// Per-example activations kept for the backward pass.
template <class Real>
struct ForwardCache {
  std::vector<Real> mix_weights;  // softmax(s), Mix mode only
  std::vector<Real> x, z, a, h, o, p;

  explicit ForwardCache(const ProbeShape& s = {})
      : mix_weights(s.layers), x(s.input), z(s.projection), a(s.hidden), h(s.hidden), o(s.classes), p(s.classes) {}
};

namespace detail {

inline void check_record(const ProbeShape& s, const Dims& dims, const ActivationRecord& r) {
  if (dims.num_layers != s.layers || dims.hidden_dim != s.input) {
    throw ConfigError("record dims (L=" + std::to_string(dims.num_layers) + ", H=" + std::to_string(dims.hidden_dim) +
                      ") do not match probe (L=" + std::to_string(s.layers) + ", H=" + std::to_string(s.input) + ")");
  }
  if (r.span_len < 1 || r.values.size() != std::size_t{r.span_len} * s.layers * s.input) {
    throw DimensionError(0, "record " + std::to_string(r.example_id) + " tensor size inconsistent with dims");
  }
  if (r.label >= s.classes) {
    throw ConfigError("record " + std::to_string(r.example_id) + " label " + std::to_string(r.label) +
                      " >= num_classes " + std::to_string(s.classes));
  }
}

/// Mean over the span of one layer, accumulated into `out` scaled by `weight`.
template <class Real>
void add_layer_mean(const ActivationRecord& r, const Dims& dims, std::size_t layer, Real weight, std::span<Real> out) {
  const std::size_t H = dims.hidden_dim;
  const Real inv_t = Real{1} / static_cast<Real>(r.span_len);
  for (std::size_t d = 0; d < H; ++d) {
    Real acc = 0;
    for (std::size_t t = 0; t < r.span_len; ++t) acc += static_cast<Real>(r.values[(layer * r.span_len + t) * H + d]);
    out[d] += weight * (acc * inv_t);
  }
}

}  // namespace detail

template <class Real>
void forward_into(const ProbeParams<Real>& params, const Dims& dims, const ActivationRecord& r, ForwardCache<Real>& c) {
  const ProbeShape& s = params.shape;
  detail::check_record(s, dims, r);
  const Real* W = params.data.data();

  std::fill(c.x.begin(), c.x.end(), Real{0});
  if (params.layers.mode == LayerMode::Single) {
    detail::add_layer_mean<Real>(r, dims, params.layers.layer, Real{1}, c.x);
  } else {
    c.mix_weights = softmax<Real>(params.group(ParamGroup::MixLogits));
    const Real gamma = params.gamma();
    std::vector<Real> mixed(s.input, Real{0});
    for (std::size_t l = 0; l < s.layers; ++l) detail::add_layer_mean<Real>(r, dims, l, c.mix_weights[l], mixed);
    for (std::size_t d = 0; d < s.input; ++d) c.x[d] = gamma * mixed[d];
  }

  const Real* Wp = W + s.proj_w_offset();
  const Real* bp = W + s.proj_b_offset();
  for (std::size_t i = 0; i < s.projection; ++i) {
    Real acc = bp[i];
    const Real* row = Wp + i * s.input;
    for (std::size_t d = 0; d < s.input; ++d) acc += row[d] * c.x[d];
    c.z[i] = acc;
  }
  const Real* W1 = W + s.hid_w_offset();
  const Real* b1 = W + s.hid_b_offset();
  for (std::size_t j = 0; j < s.hidden; ++j) {
    Real acc = b1[j];
    const Real* row = W1 + j * s.projection;
    for (std::size_t i = 0; i < s.projection; ++i) acc += row[i] * c.z[i];
    c.a[j] = acc;
    c.h[j] = acc < Real{0} ? Real{0} : acc;  // NaN passes through
  }
  const Real* W2 = W + s.out_w_offset();
  const Real* b2 = W + s.out_b_offset();
  for (std::size_t k = 0; k < s.classes; ++k) {
    Real acc = b2[k];
    const Real* row = W2 + k * s.hidden;
    for (std::size_t j = 0; j < s.hidden; ++j) acc += row[j] * c.h[j];
    c.o[k] = acc;
  }
  c.p = softmax<Real>(c.o);
}

/// Probability vector over the K classes.
template <class Real>
std::vector<Real> forward(const ProbeParams<Real>& params, const Dims& dims, const ActivationRecord& r) {
  ForwardCache<Real> c(params.shape);
  forward_into(params, dims, r, c);
  return c.p;
}

/// Adds scale * d(loss_bits)/d(params) for one example to `grad`.
template <class Real>
void backward_accumulate(const ProbeParams<Real>& params, const Dims& dims, const ActivationRecord& r,
                         const ForwardCache<Real>& c, std::uint32_t label, Real scale, std::span<Real> grad) {
  const ProbeShape& s = params.shape;
  const Real* W = params.data.data();
  Real* G = grad.data();

  // Inside the floor the loss is constant.
  if (static_cast<double>(c.p[label]) <= kProbabilityFloor) return;
  const Real inv_ln2 = Real{1} / std::log(Real{2});
  std::vector<Real> d_o(s.classes);
  for (std::size_t k = 0; k < s.classes; ++k) d_o[k] = scale * (c.p[k] - (k == label ? Real{1} : Real{0})) * inv_ln2;

  const Real* W2 = W + s.out_w_offset();
  Real* gW2 = G + s.out_w_offset();
  Real* gb2 = G + s.out_b_offset();
  std::vector<Real> d_a(s.hidden, Real{0});
  for (std::size_t k = 0; k < s.classes; ++k) {
    gb2[k] += d_o[k];
    Real* grow = gW2 + k * s.hidden;
    const Real* row = W2 + k * s.hidden;
    for (std::size_t j = 0; j < s.hidden; ++j) {
      grow[j] += d_o[k] * c.h[j];
      d_a[j] += row[j] * d_o[k];
    }
  }
  for (std::size_t j = 0; j < s.hidden; ++j)
    if (!(c.a[j] > Real{0})) d_a[j] = Real{0};

  const Real* W1 = W + s.hid_w_offset();
  Real* gW1 = G + s.hid_w_offset();
  Real* gb1 = G + s.hid_b_offset();
  std::vector<Real> d_z(s.projection, Real{0});
  for (std::size_t j = 0; j < s.hidden; ++j) {
    const Real dj = d_a[j];
    if (dj == Real{0}) continue;
    gb1[j] += dj;
    Real* grow = gW1 + j * s.projection;
    const Real* row = W1 + j * s.projection;
    for (std::size_t i = 0; i < s.projection; ++i) {
      grow[i] += dj * c.z[i];
      d_z[i] += row[i] * dj;
    }
  }

  const Real* Wp = W + s.proj_w_offset();
  Real* gWp = G + s.proj_w_offset();
  Real* gbp = G + s.proj_b_offset();
  const bool mix = params.layers.mode == LayerMode::Mix;
  std::vector<Real> d_x(mix ? s.input : 0, Real{0});
  for (std::size_t i = 0; i < s.projection; ++i) {
    const Real di = d_z[i];
    gbp[i] += di;
    Real* grow = gWp + i * s.input;
    const Real* row = Wp + i * s.input;
    for (std::size_t d = 0; d < s.input; ++d) grow[d] += di * c.x[d];
    if (mix)
      for (std::size_t d = 0; d < s.input; ++d) d_x[d] += row[d] * di;
  }
  if (!mix) return;

  // x = gamma * sum_l w_l m_l  =>  dgamma = sum_l w_l <dx, m_l>,
  // ds_l = w_l (g_l - sum_k w_k g_k) with g_l = gamma <dx, m_l>.
  std::vector<Real> dots(s.layers, Real{0});
  std::vector<Real> m(s.input);
  for (std::size_t l = 0; l < s.layers; ++l) {
    std::fill(m.begin(), m.end(), Real{0});
    detail::add_layer_mean<Real>(r, dims, l, Real{1}, m);
    Real acc = 0;
    for (std::size_t d = 0; d < s.input; ++d) acc += d_x[d] * m[d];
    dots[l] = acc;
  }
  const Real gamma = params.gamma();
  Real d_gamma = 0, weighted = 0;
  for (std::size_t l = 0; l < s.layers; ++l) {
    d_gamma += c.mix_weights[l] * dots[l];
    weighted += c.mix_weights[l] * gamma * dots[l];
  }
  G[s.gamma_offset()] += d_gamma;
  for (std::size_t l = 0; l < s.layers; ++l) G[s.mix_offset() + l] += c.mix_weights[l] * (gamma * dots[l] - weighted);
}

/// Mean loss (bits) over `batch` and its gradient with respect to every parameter.
template <class Real>
double batch_loss_and_gradient(const ProbeParams<Real>& params, const RecordView& batch, std::vector<Real>& grad) {
  grad.assign(params.data.size(), Real{0});
  ForwardCache<Real> cache(params.shape);
  const Real scale = Real{1} / static_cast<Real>(batch.size());
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    forward_into(params, batch.dims, batch[i], cache);
    total += loss_bits<Real>(cache.p, batch[i].label);
    backward_accumulate(params, batch.dims, batch[i], cache, batch[i].label, scale, std::span<Real>(grad));
  }
  return total / static_cast<double>(batch.size());
}

template <class Real>
double batch_loss(const ProbeParams<Real>& params, const RecordView& batch) {
  ForwardCache<Real> cache(params.shape);
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    forward_into(params, batch.dims, batch[i], cache);
    total += loss_bits<Real>(cache.p, batch[i].label);
  }
  return total / static_cast<double>(batch.size());
}

/// Adaptive-moment optimizer with bias correction.
template <class Real>
class Adam {
public:
  Adam(std::size_t n, double lr, double beta1, double beta2, double eps)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, Real{0}), v_(n, Real{0}) {}

  void step(std::span<Real> params, std::span<const Real> grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const Real b1 = static_cast<Real>(beta1_), b2 = static_cast<Real>(beta2_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = b1 * m_[i] + (Real{1} - b1) * grad[i];
      v_[i] = b2 * v_[i] + (Real{1} - b2) * grad[i] * grad[i];
      const Real m_hat = m_[i] / static_cast<Real>(c1);
      const Real v_hat = v_[i] / static_cast<Real>(c2);
      params[i] -= static_cast<Real>(lr_) * m_hat / (std::sqrt(v_hat) + static_cast<Real>(eps_));
    }
  }

  std::size_t steps() const { return t_; }

private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<Real> m_, v_;
};

struct TrainReport {
  std::vector<double> epoch_loss_bits;  // mean training loss per epoch
  std::optional<double> dev_accuracy;
  std::optional<double> test_accuracy;
  std::uint64_t seed = 0;
  std::size_t steps = 0;
  double wall_seconds = 0.0;
};

template <class Real = double>
struct TrainResult {
  ProbeParams<Real> params;
  TrainReport report;
};

/// Seeded mini-batch training for exactly config.epochs epochs.
template <class Real = double>
TrainResult<Real> train_probe(const RecordView& train, const ProbeConfig& config, std::uint64_t seed) {
  if (train.empty()) throw ConfigError("train_probe needs at least one record");
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult<Real> out{init_params<Real>(train.dims, config, derive_seed(seed, "init")), {}};
  out.report.seed = seed;

  Adam<Real> opt(out.params.data.size(), config.learning_rate, config.adam_beta1, config.adam_beta2,
                 config.adam_epsilon);
  Rng shuffle_rng(derive_seed(seed, "shuffle"));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Real> grad;
  RecordView batch{train.dims, {}};

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(std::span(order));
    double epoch_total = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      batch.records.clear();
      for (std::size_t i = begin; i < end; ++i) batch.records.push_back(train.records[order[i]]);
      const double loss = batch_loss_and_gradient(out.params, batch, grad);
      if (!std::isfinite(loss)) throw TrainingError(epoch, batch_index, "non-finite training loss");
      epoch_total += loss * static_cast<double>(end - begin);
      opt.step(out.params.data, grad);
    }
    out.report.epoch_loss_bits.push_back(epoch_total / static_cast<double>(order.size()));
  }
  out.report.steps = opt.steps();
  out.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

/// Index of the largest probability; ties go to the lowest index.
template <class Real>
std::uint32_t predict(std::span<const Real> probs) {
  std::uint32_t best = 0;
  for (std::uint32_t k = 1; k < probs.size(); ++k)
    if (probs[k] > probs[best]) best = k;
  return best;
}

template <class Real>
double evaluate_accuracy(const ProbeParams<Real>& params, const RecordView& records) {
  if (records.empty()) throw ConfigError("evaluate_accuracy needs at least one record");
  ForwardCache<Real> cache(params.shape);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    forward_into(params, records.dims, records[i], cache);
    correct += predict<Real>(cache.p) == records[i].label;
  }
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

}  // namespace spanprobe
