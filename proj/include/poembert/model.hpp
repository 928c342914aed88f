#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "poembert/error.hpp"
#include "poembert/rng.hpp"
#include "poembert/tensor.hpp"
#include "poembert/tokenizer.hpp"

namespace poembert {

enum class PositionalMode { Sinusoidal, Learned, None };

constexpr std::string_view positional_mode_name(PositionalMode m) {
  switch (m) {
    case PositionalMode::Sinusoidal: return "sinusoidal";
    case PositionalMode::Learned: return "learned";
    case PositionalMode::None: return "none";
  }
  return "";
}

inline PositionalMode parse_positional_mode(std::string_view s) {
  if (s == "sinusoidal") return PositionalMode::Sinusoidal;
  if (s == "learned") return PositionalMode::Learned;
  if (s == "none") return PositionalMode::None;
  throw Error(Errc::InvalidConfig, "positional_mode '" + std::string(s) + "'");
}

/// Encoder hyperparameters. Defaults are the full-size model: 10 layers,
/// 12 heads, 768 hidden units, 50k vocabulary, 32-token sequences.
///
/// Assumptions where the architecture description is silent: the FFN is 4x
/// the hidden size, positions are sinusoidal (a learned table is optional),
/// and the MLM projection is not tied to the token embedding.
struct ModelConfig {
  std::size_t num_layers = 10;
  std::size_t num_heads = 12;
  std::size_t hidden = 768;
  std::size_t ffn_dim = 3072;
  std::size_t vocab_size = 50000;
  std::size_t max_len = 32;
  double dropout = 0.1;
  PositionalMode positional_mode = PositionalMode::Sinusoidal;
  bool tie_mlm_weights = false;

  std::size_t head_dim() const { return hidden / num_heads; }

  void validate() const {
    if (num_heads == 0 || hidden % num_heads != 0) {
      throw Error(Errc::InvalidConfig, "hidden must be divisible by num_heads");
    }
    if (max_len < 2) throw Error(Errc::InvalidConfig, "max_len must be >= 2");
    if (vocab_size <= static_cast<std::size_t>(Vocab::kNumReserved)) {
      throw Error(Errc::InvalidConfig, "vocab_size too small");
    }
    if (num_layers == 0 || ffn_dim == 0) {
      throw Error(Errc::InvalidConfig, "num_layers and ffn_dim must be positive");
    }
    if (dropout < 0.0 || dropout >= 1.0) {
      throw Error(Errc::InvalidConfig, "dropout must be in [0, 1)");
    }
  }

  static ModelConfig paper() { return {}; }

  /// Desk-scale preset. Uses a learned position table: at d=32 the unit-
  /// amplitude sinusoids swamp the 0.02-scale token embeddings and slow
  /// training several-fold.
  static ModelConfig tiny() {
    ModelConfig c;
    c.positional_mode = PositionalMode::Learned;
    c.num_layers = 2;
    c.num_heads = 2;
    c.hidden = 32;
    c.ffn_dim = 128;
    c.vocab_size = 512;
    c.max_len = 32;
    return c;
  }

  bool operator==(const ModelConfig&) const = default;
};

/// Sinusoidal position code: sin(p / 10000^(i/d)) for even i and
/// cos(p / 10000^((i-1)/d)) for odd i.
inline double positional_encoding(std::size_t p, std::size_t i, std::size_t d) {
  const std::size_t even = i - (i % 2);
  const double angle =
      static_cast<double>(p) / std::pow(10000.0, static_cast<double>(even) / static_cast<double>(d));
  return i % 2 == 0 ? std::sin(angle) : std::cos(angle);
}

inline Tensor positional_table(std::size_t max_len, std::size_t d) {
  Tensor t = Tensor::zeros({max_len, d});
  auto v = t.data();
  for (std::size_t p = 0; p < max_len; ++p) {
    for (std::size_t i = 0; i < d; ++i) v[p * d + i] = positional_encoding(p, i, d);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Parameters

struct LayerParams {
  std::vector<Tensor> w_q, w_k, w_v;  // one [d, d_k] matrix per head
  Tensor w_o;                         // [d, d]
  Tensor ffn_w1, ffn_b1;              // [d, ffn], [ffn]
  Tensor ffn_w2, ffn_b2;              // [ffn, d], [d]
  Tensor ln1_gain, ln1_bias;          // after attention
  Tensor ln2_gain, ln2_bias;          // after FFN
};

struct ClassifierHead {
  std::string task;
  std::vector<std::string> labels;
  Tensor weight;  // [d, num_labels]
  Tensor bias;    // [num_labels]
};

using NamedTensor = std::pair<std::string, Tensor>;

struct ModelParams {
  Tensor token_embedding;     // [vocab, d]
  Tensor position_embedding;  // [max_len, d], learned mode only
  std::vector<LayerParams> layers;
  Tensor mlm_weight;  // [d, vocab], absent when tied
  Tensor mlm_bias;    // [vocab]
  std::optional<ClassifierHead> head;

  /// Encoder and MLM tensors in a fixed order with stable names.
  std::vector<NamedTensor> encoder_named() const {
    std::vector<NamedTensor> out;
    out.emplace_back("embeddings.token", token_embedding);
    if (position_embedding.defined()) out.emplace_back("embeddings.position", position_embedding);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& L = layers[l];
      const std::string p = "layers." + std::to_string(l) + ".";
      for (std::size_t h = 0; h < L.w_q.size(); ++h) {
        out.emplace_back(p + "attn.q." + std::to_string(h), L.w_q[h]);
        out.emplace_back(p + "attn.k." + std::to_string(h), L.w_k[h]);
        out.emplace_back(p + "attn.v." + std::to_string(h), L.w_v[h]);
      }
      out.emplace_back(p + "attn.o", L.w_o);
      out.emplace_back(p + "ln1.gain", L.ln1_gain);
      out.emplace_back(p + "ln1.bias", L.ln1_bias);
      out.emplace_back(p + "ffn.w1", L.ffn_w1);
      out.emplace_back(p + "ffn.b1", L.ffn_b1);
      out.emplace_back(p + "ffn.w2", L.ffn_w2);
      out.emplace_back(p + "ffn.b2", L.ffn_b2);
      out.emplace_back(p + "ln2.gain", L.ln2_gain);
      out.emplace_back(p + "ln2.bias", L.ln2_bias);
    }
    return out;
  }

  std::vector<NamedTensor> mlm_named() const {
    std::vector<NamedTensor> out;
    if (mlm_weight.defined()) out.emplace_back("mlm.weight", mlm_weight);
    out.emplace_back("mlm.bias", mlm_bias);
    return out;
  }

  std::vector<NamedTensor> head_named() const {
    if (!head) return {};
    return {{"head.weight", head->weight}, {"head.bias", head->bias}};
  }

  std::vector<NamedTensor> named() const {
    auto out = encoder_named();
    for (auto& t : mlm_named()) out.push_back(std::move(t));
    for (auto& t : head_named()) out.push_back(std::move(t));
    return out;
  }

  /// Deep copy: the result shares no storage with `*this`.
  ModelParams clone() const {
    ModelParams c = *this;
    auto cp = [](Tensor& t) {
      if (t.defined()) t = t.clone();
    };
    cp(c.token_embedding);
    cp(c.position_embedding);
    for (auto& L : c.layers) {
      for (auto* v : {&L.w_q, &L.w_k, &L.w_v}) {
        for (auto& t : *v) cp(t);
      }
      for (Tensor* t : {&L.w_o, &L.ffn_w1, &L.ffn_b1, &L.ffn_w2, &L.ffn_b2, &L.ln1_gain,
                        &L.ln1_bias, &L.ln2_gain, &L.ln2_bias}) {
        cp(*t);
      }
    }
    cp(c.mlm_weight);
    cp(c.mlm_bias);
    if (c.head) {
      cp(c.head->weight);
      cp(c.head->bias);
    }
    return c;
  }
};

namespace detail {

inline Tensor init_normal(Shape shape, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (auto& v : t.data()) v = truncated_normal(rng, 0.02);
  return t;
}

}  // namespace detail

/// Weights ~ N(0, 0.02) truncated at 2 sigma, biases 0, layer-norm gains 1.
/// Tensors are drawn in `encoder_named()` order, then the MLM projection.
inline ModelParams init_params(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t d = cfg.hidden, dk = cfg.head_dim();
  ModelParams p;
  p.token_embedding = detail::init_normal({cfg.vocab_size, d}, rng);
  if (cfg.positional_mode == PositionalMode::Learned) {
    p.position_embedding = detail::init_normal({cfg.max_len, d}, rng);
  }
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    LayerParams L;
    for (std::size_t h = 0; h < cfg.num_heads; ++h) {
      L.w_q.push_back(detail::init_normal({d, dk}, rng));
      L.w_k.push_back(detail::init_normal({d, dk}, rng));
      L.w_v.push_back(detail::init_normal({d, dk}, rng));
    }
    L.w_o = detail::init_normal({d, d}, rng);
    L.ln1_gain = Tensor::full({d}, 1.0, true);
    L.ln1_bias = Tensor::zeros({d}, true);
    L.ffn_w1 = detail::init_normal({d, cfg.ffn_dim}, rng);
    L.ffn_b1 = Tensor::zeros({cfg.ffn_dim}, true);
    L.ffn_w2 = detail::init_normal({cfg.ffn_dim, d}, rng);
    L.ffn_b2 = Tensor::zeros({d}, true);
    L.ln2_gain = Tensor::full({d}, 1.0, true);
    L.ln2_bias = Tensor::zeros({d}, true);
    p.layers.push_back(std::move(L));
  }
  if (!cfg.tie_mlm_weights) p.mlm_weight = detail::init_normal({d, cfg.vocab_size}, rng);
  p.mlm_bias = Tensor::zeros({cfg.vocab_size}, true);
  return p;
}

inline ClassifierHead init_head(const ModelConfig& cfg, std::string task,
                                std::vector<std::string> labels, Rng& rng) {
  if (labels.empty()) throw Error(Errc::InvalidConfig, "classifier needs labels");
  ClassifierHead h;
  h.task = std::move(task);
  h.weight = detail::init_normal({cfg.hidden, labels.size()}, rng);
  h.bias = Tensor::zeros({labels.size()}, true);
  h.labels = std::move(labels);
  return h;
}

// ---------------------------------------------------------------------------
// Attention

inline constexpr double kMaskedScore = -1e9;

/// softmax(Q K^T / sqrt(d_k) + mask_bias) V.
///
/// Works on [n, d_k] matrices or [B, n, d_k] batches. `mask_bias` is added
/// to the score matrix and must have its shape or a trailing sub-shape of it
/// (e.g. a single [m] row). When `weights` is given it receives the
/// attention probabilities.
inline Tensor scaled_dot_attention(Tape& tape, const Tensor& q, const Tensor& k,
                                   const Tensor& v, const Tensor& mask_bias,
                                   Tensor* weights = nullptr) {
  if (q.rank() != k.rank() || k.rank() != v.rank() || q.last_dim() != k.last_dim() ||
      k.dim(k.rank() - 2) != v.dim(v.rank() - 2)) {
    throw Error(Errc::ShapeMismatch, "attention Q" + shape_str(q.shape()) + " K" +
                                         shape_str(k.shape()) + " V" + shape_str(v.shape()));
  }
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(q.last_dim()));
  Tensor scores = tape.scale(tape.matmul(q, tape.transpose(k)), inv_sqrt_dk);
  if (mask_bias.defined()) scores = tape.add(scores, mask_bias);
  Tensor probs = tape.softmax_rows(scores);
  if (weights) *weights = probs;
  return tape.matmul(probs, v);
}

/// Single-sequence form with a 0/1 key mask of length m.
inline Tensor scaled_dot_attention(Tape& tape, const Tensor& q, const Tensor& k,
                                   const Tensor& v, std::span<const int> key_mask,
                                   Tensor* weights = nullptr) {
  if (q.rank() != 2 || k.rank() != 2 || key_mask.size() != k.dim(0)) {
    throw Error(Errc::ShapeMismatch, "attention mask length " +
                                         std::to_string(key_mask.size()) + " for K" +
                                         shape_str(k.shape()));
  }
  std::vector<double> bias(key_mask.size());
  bool any = false;
  for (std::size_t j = 0; j < key_mask.size(); ++j) {
    bias[j] = key_mask[j] ? 0.0 : kMaskedScore;
    any = any || key_mask[j];
  }
  if (!any) throw Error(Errc::AllMasked, "every key is masked");
  return scaled_dot_attention(tape, q, k, v, Tensor({key_mask.size()}, std::move(bias)),
                              weights);
}

/// [B, T, T] additive bias from per-sequence 0/1 key masks.
inline Tensor attention_mask_bias(const std::vector<TokenSequence>& batch) {
  const std::size_t b = batch.size(), t = batch.at(0).max_len();
  Tensor out = Tensor::zeros({b, t, t});
  auto v = out.data();
  for (std::size_t s = 0; s < b; ++s) {
    const auto& m = batch[s].attention_mask;
    if (std::find(m.begin(), m.end(), 1) == m.end()) {
      throw Error(Errc::AllMasked, "sequence " + std::to_string(s) + " has no real tokens");
    }
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t j = 0; j < t; ++j) v[(s * t + i) * t + j] = m[j] ? 0.0 : kMaskedScore;
    }
  }
  return out;
}

/// Concat(head_1..head_h) W_O with head_i = Attention(X W_Qi, X W_Ki, X W_Vi).
inline Tensor multi_head_attention(Tape& tape, const Tensor& x, const LayerParams& layer,
                                   const Tensor& mask_bias) {
  const std::size_t heads = layer.w_q.size();
  if (heads == 0 || layer.w_k.size() != heads || layer.w_v.size() != heads) {
    throw Error(Errc::ShapeMismatch, "inconsistent head count");
  }
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    outs.push_back(scaled_dot_attention(tape, tape.matmul(x, layer.w_q[h]),
                                        tape.matmul(x, layer.w_k[h]),
                                        tape.matmul(x, layer.w_v[h]), mask_bias));
  }
  Tensor concat = heads == 1 ? outs[0] : tape.concat_last(outs);
  if (concat.last_dim() != layer.w_o.dim(0)) {
    throw Error(Errc::ShapeMismatch, "W_O " + shape_str(layer.w_o.shape()) +
                                         " for concatenated heads " +
                                         shape_str(concat.shape()));
  }
  return tape.matmul(concat, layer.w_o);
}

// ---------------------------------------------------------------------------
// Encoder

/// Post-LN encoder over a batch of equal-length sequences -> [B, T, d].
/// `dropout_rng` is only consulted when `train` is true.
inline Tensor encoder_forward(Tape& tape, const std::vector<TokenSequence>& batch,
                              const ModelConfig& cfg, const ModelParams& params,
                              bool train = false, Rng* dropout_rng = nullptr) {
  if (batch.empty()) throw Error(Errc::ShapeMismatch, "empty batch");
  const std::size_t b = batch.size(), t = batch[0].max_len(), d = cfg.hidden;
  if (t > cfg.max_len) {
    throw Error(Errc::ShapeMismatch, "sequence length " + std::to_string(t) +
                                         " exceeds max_len " + std::to_string(cfg.max_len));
  }
  if (params.layers.size() != cfg.num_layers || params.token_embedding.dim(1) != d) {
    throw Error(Errc::ShapeMismatch, "parameters do not match the model config");
  }
  std::vector<int> ids;
  ids.reserve(b * t);
  for (const auto& s : batch) {
    if (s.max_len() != t || s.attention_mask.size() != t) {
      throw Error(Errc::ShapeMismatch, "sequences in a batch must share max_len");
    }
    ids.insert(ids.end(), s.ids.begin(), s.ids.end());
  }
  const bool use_dropout = train && cfg.dropout > 0.0;
  if (use_dropout && !dropout_rng) {
    throw Error(Errc::InvalidConfig, "training forward needs a dropout generator");
  }
  auto drop = [&](const Tensor& x) {
    return use_dropout ? tape.dropout(x, cfg.dropout, true, *dropout_rng) : x;
  };

  Tensor x = tape.reshape(tape.embedding_lookup(params.token_embedding, ids), {b, t, d});
  switch (cfg.positional_mode) {
    case PositionalMode::Sinusoidal:
      x = tape.add(x, positional_table(t, d));
      break;
    case PositionalMode::Learned: {
      std::vector<std::size_t> rows(t);
      for (std::size_t i = 0; i < t; ++i) rows[i] = i;
      x = tape.add(x, tape.gather_rows(params.position_embedding, rows));
      break;
    }
    case PositionalMode::None:
      break;
  }

  const Tensor bias = attention_mask_bias(batch);
  for (const auto& layer : params.layers) {
    Tensor attn = drop(multi_head_attention(tape, x, layer, bias));
    x = tape.layer_norm(tape.add(x, attn), layer.ln1_gain, layer.ln1_bias);
    Tensor ff = tape.gelu(tape.add(tape.matmul(x, layer.ffn_w1), layer.ffn_b1));
    ff = drop(tape.add(tape.matmul(ff, layer.ffn_w2), layer.ffn_b2));
    x = tape.layer_norm(tape.add(x, ff), layer.ln2_gain, layer.ln2_bias);
  }
  return x;
}

/// Vocabulary logits at every row of `hidden` ([..., d] -> [..., vocab]).
inline Tensor mlm_logits(Tape& tape, const Tensor& hidden, const ModelParams& params) {
  const Tensor weight = params.mlm_weight.defined()
                            ? params.mlm_weight
                            : tape.transpose(params.token_embedding);
  if (hidden.last_dim() != weight.dim(0)) {
    throw Error(Errc::ShapeMismatch, "mlm head " + shape_str(weight.shape()) +
                                         " for hidden " + shape_str(hidden.shape()));
  }
  return tape.add(tape.matmul(hidden, weight), params.mlm_bias);
}

/// Class logits from the [CLS] row of each sequence: [B, T, d] -> [B, C].
inline Tensor classify(Tape& tape, const Tensor& hidden, const ClassifierHead& head) {
  if (hidden.rank() != 3 || hidden.dim(2) != head.weight.dim(0)) {
    throw Error(Errc::ShapeMismatch, "classifier " + shape_str(head.weight.shape()) +
                                         " for hidden " + shape_str(hidden.shape()));
  }
  const std::size_t b = hidden.dim(0), t = hidden.dim(1);
  std::vector<std::size_t> cls_rows(b);
  for (std::size_t i = 0; i < b; ++i) cls_rows[i] = i * t;
  return tape.add(tape.matmul(tape.gather_rows(hidden, cls_rows), head.weight), head.bias);
}

/// Index of the largest value; ties go to the lowest index.
inline std::size_t argmax(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < row.size(); ++i) {
    if (row[i] > row[best]) best = i;
  }
  return best;
}

}  // namespace poembert
