#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "poembert/checkpoint.hpp"
#include "poembert/error.hpp"
#include "poembert/model.hpp"
#include "poembert/optim.hpp"
#include "poembert/rng.hpp"
#include "poembert/taxonomy.hpp"
#include "poembert/tensor.hpp"
#include "poembert/tokenizer.hpp"

namespace poembert {

/// Optimisation and masking settings. Defaults follow the published
/// pretraining run; `tiny()` is a desk-scale preset.
struct TrainConfig {
  std::size_t batch_size = 256;
  double lr = 5e-5;
  double weight_decay = 0.0;
  double dropout = 0.1;
  double mask_ratio = 0.15;
  double mask_prob = 0.8;
  double random_prob = 0.1;
  double keep_prob = 0.1;
  std::int64_t max_steps = 800000;
  std::uint64_t seed = 42;
  std::int64_t eval_every = 1000;  // log interval; also the checkpoint interval
  std::string checkpoint_path;     // empty: no periodic checkpoints
  bool head_only = false;          // fine-tuning: freeze the encoder

  void validate() const {
    if (batch_size < 1) throw Error(Errc::InvalidConfig, "batch_size must be >= 1");
    if (!(mask_ratio >= 0.0 && mask_ratio <= 1.0)) {
      throw Error(Errc::InvalidConfig, "mask_ratio must be in [0, 1]");
    }
    if (mask_prob < 0.0 || random_prob < 0.0 || keep_prob < 0.0 ||
        std::abs(mask_prob + random_prob + keep_prob - 1.0) > 1e-9) {
      throw Error(Errc::InvalidConfig, "mask_prob + random_prob + keep_prob must be 1");
    }
    if (!(lr > 0.0) || weight_decay < 0.0) throw Error(Errc::InvalidConfig, "bad lr or weight_decay");
    if (dropout < 0.0 || dropout >= 1.0) throw Error(Errc::InvalidConfig, "dropout must be in [0, 1)");
    if (max_steps < 0) throw Error(Errc::InvalidConfig, "max_steps must be >= 0");
  }

  static TrainConfig paper() { return {}; }

  static TrainConfig tiny() {
    TrainConfig c;
    c.batch_size = 32;
    c.lr = 4e-3;
    c.dropout = 0.0;
    c.max_steps = 500;
    c.eval_every = 50;
    return c;
  }

  bool operator==(const TrainConfig&) const = default;
};

inline json to_json(const TrainConfig& c) {
  return json{{"batch_size", c.batch_size},   {"lr", c.lr},
              {"weight_decay", c.weight_decay}, {"dropout", c.dropout},
              {"mask_ratio", c.mask_ratio},   {"mask_prob", c.mask_prob},
              {"random_prob", c.random_prob}, {"keep_prob", c.keep_prob},
              {"max_steps", c.max_steps},     {"seed", c.seed},
              {"eval_every", c.eval_every},   {"checkpoint_path", c.checkpoint_path},
              {"head_only", c.head_only}};
}

/// Overlays the keys of `j` onto `base`. Unknown keys are rejected, except
/// "model", which belongs to the model config.
inline TrainConfig train_config_from_json(const json& j, TrainConfig base = {}) {
  if (!j.is_object()) throw Error(Errc::InvalidConfig, "config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "batch_size") base.batch_size = v.get<std::size_t>();
      else if (key == "lr") base.lr = v.get<double>();
      else if (key == "weight_decay") base.weight_decay = v.get<double>();
      else if (key == "dropout") base.dropout = v.get<double>();
      else if (key == "mask_ratio") base.mask_ratio = v.get<double>();
      else if (key == "mask_prob") base.mask_prob = v.get<double>();
      else if (key == "random_prob") base.random_prob = v.get<double>();
      else if (key == "keep_prob") base.keep_prob = v.get<double>();
      else if (key == "max_steps") base.max_steps = v.get<std::int64_t>();
      else if (key == "seed") base.seed = v.get<std::uint64_t>();
      else if (key == "eval_every") base.eval_every = v.get<std::int64_t>();
      else if (key == "checkpoint_path") base.checkpoint_path = v.get<std::string>();
      else if (key == "head_only") base.head_only = v.get<bool>();
      else if (key != "model") throw Error(Errc::InvalidConfig, "unknown config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string("train config: ") + e.what());
  }
  return base;
}

// ---------------------------------------------------------------------------
// Masking

struct MaskedSequence {
  TokenSequence seq;
  std::vector<int> targets;  // original id at selected positions, kIgnoreIndex elsewhere
};

/// Selects each real, non-reserved position with probability mask_ratio,
/// then replaces it by [MASK], by a random non-reserved id, or keeps it.
/// Draws are made position by position: selection, then the fate and, for
/// the random fate, the replacement id.
inline MaskedSequence apply_mlm_masking(const TokenSequence& seq, const TrainConfig& cfg,
                                        std::size_t vocab_size, Rng& rng) {
  MaskedSequence out{seq, std::vector<int>(seq.ids.size(), kIgnoreIndex)};
  const std::size_t num_regular =
      vocab_size > static_cast<std::size_t>(Vocab::kNumReserved) ? vocab_size - Vocab::kNumReserved : 0;
  for (std::size_t i = 0; i < seq.ids.size(); ++i) {
    if (!seq.attention_mask[i] || Vocab::is_special(seq.ids[i])) continue;
    if (!(uniform01(rng) < cfg.mask_ratio)) continue;
    out.targets[i] = seq.ids[i];
    const double fate = uniform01(rng);
    if (fate < cfg.mask_prob) {
      out.seq.ids[i] = Vocab::kMask;
    } else if (fate < cfg.mask_prob + cfg.random_prob && num_regular > 0) {
      out.seq.ids[i] = Vocab::kNumReserved + static_cast<int>(uniform_index(rng, num_regular));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shared loop plumbing

namespace detail {

/// Cuts trailing columns that are padding in every sequence. Padded keys get
/// exactly zero attention weight, so real positions are unaffected.
inline std::vector<TokenSequence> trim_padding(std::vector<TokenSequence> batch) {
  std::size_t keep = 1;
  for (const auto& s : batch) keep = std::max(keep, s.length());
  for (auto& s : batch) {
    s.ids.resize(std::min(keep, s.ids.size()));
    s.attention_mask.resize(s.ids.size());
  }
  return batch;
}

/// Epoch-based batch order: a fresh shuffle of all indices per epoch, cut
/// into consecutive batches; the final batch of an epoch may be short.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::size_t batch_size, Rng rng)
      : order_(n), batch_size_(batch_size), rng_(std::move(rng)), pos_(n) {}

  std::vector<std::size_t> next() {
    if (pos_ >= order_.size()) {
      std::iota(order_.begin(), order_.end(), std::size_t{0});
      shuffle(std::span<std::size_t>(order_), rng_);
      pos_ = 0;
    }
    const std::size_t end = std::min(order_.size(), pos_ + batch_size_);
    std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                 order_.begin() + static_cast<std::ptrdiff_t>(end));
    pos_ = end;
    return out;
  }

 private:
  std::vector<std::size_t> order_;
  std::size_t batch_size_;
  Rng rng_;
  std::size_t pos_;
};

inline std::vector<Tensor> tensors_of(const std::vector<NamedTensor>& named) {
  std::vector<Tensor> out;
  out.reserve(named.size());
  for (const auto& [n, t] : named) out.push_back(t);
  return out;
}

inline std::vector<std::string> names_of(const std::vector<NamedTensor>& named) {
  std::vector<std::string> out;
  out.reserve(named.size());
  for (const auto& [n, t] : named) out.push_back(n);
  return out;
}

inline void check_finite(double loss, std::int64_t step) {
  if (!std::isfinite(loss)) {
    throw Error(Errc::NonFiniteLoss, "loss " + std::to_string(loss) + " at step " +
                                         std::to_string(step));
  }
}

}  // namespace detail

/// Called every `eval_every` steps with the step number and the mean loss
/// since the previous call.
using LossLogger = std::function<void(std::int64_t step, double loss)>;

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<double> losses;  // one entry per step that had a loss
};

/// Masked-LM loss of one batch: hidden rows at masked positions are projected
/// to the vocabulary and scored against the original ids.
inline Tensor mlm_loss(Tape& tape, const std::vector<MaskedSequence>& batch,
                       const ModelConfig& cfg, const ModelParams& params, bool train,
                       Rng* dropout_rng) {
  std::vector<TokenSequence> seqs;
  seqs.reserve(batch.size());
  for (const auto& m : batch) seqs.push_back(m.seq);
  seqs = detail::trim_padding(std::move(seqs));
  const std::size_t t = seqs[0].max_len();
  std::vector<std::size_t> rows;
  std::vector<int> targets;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    for (std::size_t i = 0; i < t; ++i) {
      if (batch[b].targets[i] != kIgnoreIndex) {
        rows.push_back(b * t + i);
        targets.push_back(batch[b].targets[i]);
      }
    }
  }
  if (rows.empty()) throw Error(Errc::EmptyReduction, "no masked positions in batch");
  Tensor hidden = encoder_forward(tape, seqs, cfg, params, train, dropout_rng);
  Tensor logits = mlm_logits(tape, tape.gather_rows(hidden, rows), params);
  return tape.cross_entropy(logits, targets);
}

/// MLM pretraining from a fresh initialisation. Random streams: Init for the
/// weights, Data for epoch shuffles, Masking, Dropout.
inline TrainResult pretrain(const std::vector<std::string>& lines, const Vocab& vocab,
                            ModelConfig model_cfg, const TrainConfig& cfg,
                            const LossLogger& log = {}) {
  cfg.validate();
  model_cfg.vocab_size = vocab.size();
  model_cfg.dropout = cfg.dropout;
  model_cfg.validate();
  if (lines.empty()) throw Error(Errc::EmptyCorpus, "no lines to pretrain on");

  std::vector<TokenSequence> encoded;
  encoded.reserve(lines.size());
  for (const auto& l : lines) encoded.push_back(encode(l, vocab, model_cfg.max_len));

  Rng init_rng = make_rng(cfg.seed, Stream::Init);
  Rng mask_rng = make_rng(cfg.seed, Stream::Masking);
  Rng drop_rng = make_rng(cfg.seed, Stream::Dropout);
  detail::BatchSampler sampler(encoded.size(), cfg.batch_size, make_rng(cfg.seed, Stream::Data));

  TrainResult res;
  Checkpoint& ck = res.checkpoint;
  ck.config = model_cfg;
  ck.params = init_params(model_cfg, init_rng);
  ck.vocab_tokens = vocab.tokens();
  ck.vocab_digest = vocab.digest();
  ck.metadata = {{"stage", "pretrain"}, {"train", to_json(cfg)}};
  const auto named = [&] {
    auto n = ck.params.encoder_named();
    for (auto& t : ck.params.mlm_named()) n.push_back(std::move(t));
    return n;
  }();
  std::vector<Tensor> params = detail::tensors_of(named);
  ck.optimizer_params = detail::names_of(named);
  AdamWState opt;
  opt.lr = cfg.lr;
  opt.weight_decay = cfg.weight_decay;

  double window_sum = 0.0;
  std::size_t window_n = 0;
  for (std::int64_t step = 1; step <= cfg.max_steps; ++step) {
    std::vector<MaskedSequence> batch;
    for (std::size_t i : sampler.next()) {
      batch.push_back(apply_mlm_masking(encoded[i], cfg, vocab.size(), mask_rng));
    }
    const bool any = std::any_of(batch.begin(), batch.end(), [](const MaskedSequence& m) {
      return std::any_of(m.targets.begin(), m.targets.end(),
                         [](int t) { return t != kIgnoreIndex; });
    });
    if (any) {
      Tape tape;
      Tensor loss = mlm_loss(tape, batch, model_cfg, ck.params, true, &drop_rng);
      detail::check_finite(loss.item(), step);
      for (auto& p : params) p.zero_grad();
      tape.backward(loss);
      adamw_step(params, opt);
      res.losses.push_back(loss.item());
      window_sum += loss.item();
      ++window_n;
    }
    ck.global_step = step;
    if (cfg.eval_every > 0 && step % cfg.eval_every == 0) {
      if (log && window_n > 0) log(step, window_sum / static_cast<double>(window_n));
      window_sum = 0.0;
      window_n = 0;
      if (!cfg.checkpoint_path.empty()) {
        ck.optimizer = opt;
        save_checkpoint(ck, cfg.checkpoint_path);
      }
    }
  }
  ck.optimizer = std::move(opt);
  return res;
}

// ---------------------------------------------------------------------------
// Fine-tuning

struct LabeledLine {
  std::string line;   // preprocessed verse
  std::size_t label;  // index into the task taxonomy
};

/// Cross-entropy on [CLS] logits for a labelled batch.
inline Tensor classification_loss(Tape& tape, const std::vector<TokenSequence>& seqs,
                                  const std::vector<int>& labels, const ModelConfig& cfg,
                                  const ModelParams& params, bool train, Rng* dropout_rng) {
  if (!params.head) throw Error(Errc::MissingHead, "model has no classification head");
  Tensor hidden =
      encoder_forward(tape, detail::trim_padding(seqs), cfg, params, train, dropout_rng);
  return tape.cross_entropy(classify(tape, hidden, *params.head), labels);
}

/// Attaches a fresh head for `tax` to a copy of `base` and trains it on
/// `data`. The MLM projection is carried over untouched.
inline TrainResult finetune(const Checkpoint& base, const std::vector<LabeledLine>& data,
                            const LabelTaxonomy& tax, const TrainConfig& cfg,
                            const Vocab& vocab, const LossLogger& log = {}) {
  cfg.validate();
  base.require_vocab(vocab);
  if (data.empty()) throw Error(Errc::EmptyCorpus, "no fine-tuning examples");
  for (const auto& d : data) {
    if (d.label >= tax.size()) {
      throw Error(Errc::LabelOutOfRange, "label " + std::to_string(d.label) + " for " +
                                             std::to_string(tax.size()) + " classes");
    }
  }

  TrainResult res;
  Checkpoint& ck = res.checkpoint;
  ck.config = base.config;
  ck.config.dropout = cfg.dropout;
  ck.params = base.params.clone();
  ck.vocab_tokens = base.vocab_tokens;
  ck.vocab_digest = base.vocab_digest;
  ck.global_step = 0;
  ck.metadata = {{"stage", "finetune"},
                 {"task", std::string(task_name(tax.task()))},
                 {"base_step", base.global_step},
                 {"train", to_json(cfg)}};

  std::vector<TokenSequence> encoded;
  std::vector<int> labels;
  encoded.reserve(data.size());
  for (const auto& d : data) {
    encoded.push_back(encode(d.line, vocab, ck.config.max_len));
    labels.push_back(static_cast<int>(d.label));
  }

  Rng init_rng = make_rng(cfg.seed, Stream::Init);
  Rng drop_rng = make_rng(cfg.seed, Stream::Dropout);
  detail::BatchSampler sampler(encoded.size(), cfg.batch_size, make_rng(cfg.seed, Stream::Data));
  ck.params.head = init_head(ck.config, std::string(task_name(tax.task())), tax.labels(), init_rng);

  std::vector<NamedTensor> named = ck.params.head_named();
  if (!cfg.head_only) {
    auto enc = ck.params.encoder_named();
    enc.insert(enc.end(), named.begin(), named.end());
    named = std::move(enc);
  }
  std::vector<Tensor> params = detail::tensors_of(named);
  ck.optimizer_params = detail::names_of(named);
  if (cfg.head_only) {
    for (auto& [n, t] : ck.params.encoder_named()) t.set_requires_grad(false);
  }
  AdamWState opt;
  opt.lr = cfg.lr;
  opt.weight_decay = cfg.weight_decay;

  double window_sum = 0.0;
  std::size_t window_n = 0;
  for (std::int64_t step = 1; step <= cfg.max_steps; ++step) {
    std::vector<TokenSequence> seqs;
    std::vector<int> ys;
    for (std::size_t i : sampler.next()) {
      seqs.push_back(encoded[i]);
      ys.push_back(labels[i]);
    }
    Tape tape;
    Tensor loss = classification_loss(tape, seqs, ys, ck.config, ck.params, true, &drop_rng);
    detail::check_finite(loss.item(), step);
    for (auto& p : params) p.zero_grad();
    tape.backward(loss);
    adamw_step(params, opt);
    res.losses.push_back(loss.item());
    window_sum += loss.item();
    ++window_n;
    ck.global_step = step;
    if (cfg.eval_every > 0 && step % cfg.eval_every == 0) {
      if (log) log(step, window_sum / static_cast<double>(window_n));
      window_sum = 0.0;
      window_n = 0;
      if (!cfg.checkpoint_path.empty()) {
        ck.optimizer = opt;
        save_checkpoint(ck, cfg.checkpoint_path);
      }
    }
  }
  if (cfg.head_only) {
    for (auto& [n, t] : ck.params.encoder_named()) t.set_requires_grad(true);
  }
  ck.optimizer = std::move(opt);
  return res;
}

}  // namespace poembert
