#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "poembert/error.hpp"
#include "poembert/io.hpp"
#include "poembert/model.hpp"
#include "poembert/optim.hpp"
#include "poembert/tokenizer.hpp"

namespace poembert {

static_assert(std::endian::native == std::endian::little,
              "checkpoint arrays are stored as host-order little-endian doubles");

using json = nlohmann::ordered_json;

inline json to_json(const ModelConfig& c) {
  return json{{"num_layers", c.num_layers},
              {"num_heads", c.num_heads},
              {"hidden", c.hidden},
              {"ffn_dim", c.ffn_dim},
              {"vocab_size", c.vocab_size},
              {"max_len", c.max_len},
              {"dropout", c.dropout},
              {"positional_mode", positional_mode_name(c.positional_mode)},
              {"tie_mlm_weights", c.tie_mlm_weights}};
}

/// Overlays the keys present in `j` onto `base`.
inline ModelConfig model_config_from_json(const json& j, ModelConfig base = {}) {
  static const std::set<std::string> known = {"num_layers", "num_heads", "hidden", "ffn_dim",
                                              "vocab_size", "max_len", "dropout",
                                              "positional_mode", "tie_mlm_weights"};
  if (!j.is_object()) throw Error(Errc::InvalidConfig, "model config must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw Error(Errc::InvalidConfig, "unknown model config key: " + key);
  }
  try {
    if (j.contains("num_layers")) base.num_layers = j.at("num_layers").get<std::size_t>();
    if (j.contains("num_heads")) base.num_heads = j.at("num_heads").get<std::size_t>();
    if (j.contains("hidden")) base.hidden = j.at("hidden").get<std::size_t>();
    if (j.contains("ffn_dim")) base.ffn_dim = j.at("ffn_dim").get<std::size_t>();
    if (j.contains("vocab_size")) base.vocab_size = j.at("vocab_size").get<std::size_t>();
    if (j.contains("max_len")) base.max_len = j.at("max_len").get<std::size_t>();
    if (j.contains("dropout")) base.dropout = j.at("dropout").get<double>();
    if (j.contains("positional_mode")) {
      base.positional_mode = parse_positional_mode(j.at("positional_mode").get<std::string>());
    }
    if (j.contains("tie_mlm_weights")) base.tie_mlm_weights = j.at("tie_mlm_weights").get<bool>();
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string("model config: ") + e.what());
  }
  return base;
}

/// Everything needed to resume or reuse a model. The vocabulary is embedded
/// so downstream commands can encode text without a separate vocab file;
/// `vocab_digest` identifies it.
struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  std::uint32_t format_version = kFormatVersion;
  ModelConfig config;
  ModelParams params;
  std::vector<std::string> vocab_tokens;
  std::string vocab_digest;
  std::optional<AdamWState> optimizer;
  std::vector<std::string> optimizer_params;  // parameter names, moment order
  std::int64_t global_step = 0;
  json metadata = json::object();

  Vocab vocab() const { return Vocab(vocab_tokens); }

  /// Throws DigestMismatch unless `v` is the vocabulary this model was built on.
  void require_vocab(const Vocab& v) const {
    if (v.digest() != vocab_digest) {
      throw Error(Errc::DigestMismatch,
                  "checkpoint vocab " + vocab_digest + " vs " + v.digest());
    }
  }
};

// File layout:
//   8 bytes   magic "PBRTCKPT"
//   u32       format version
//   u64       header length H
//   H bytes   JSON header: config, metadata, vocabulary, array manifest
//             (name, shape, byte offset into the data section, count)
//   ...       raw float64 arrays, concatenated in manifest order

inline constexpr std::string_view kCheckpointMagic = "PBRTCKPT";

namespace detail {

template <typename T>
void put_le(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get_le(std::string_view in, std::size_t off) {
  T v;
  std::memcpy(&v, in.data() + off, sizeof(T));
  return v;
}

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ck) {
  std::vector<std::pair<std::string, std::span<const double>>> arrays;
  json manifest = json::array();
  std::uint64_t offset = 0;
  auto add = [&](const std::string& name, const Shape& shape, std::span<const double> data) {
    manifest.push_back(
        {{"name", name}, {"shape", shape}, {"offset", offset}, {"count", data.size()}});
    offset += data.size() * sizeof(double);
    arrays.emplace_back(name, data);
  };
  for (const auto& [name, t] : ck.params.named()) add(name, t.shape(), t.data());
  if (ck.optimizer) {
    for (std::size_t i = 0; i < ck.optimizer_params.size(); ++i) {
      const auto& m = ck.optimizer->m.at(i);
      const auto& v = ck.optimizer->v.at(i);
      add("adam.m/" + ck.optimizer_params[i], {m.size()}, m);
      add("adam.v/" + ck.optimizer_params[i], {v.size()}, v);
    }
  }

  json header{{"config", to_json(ck.config)},
              {"global_step", ck.global_step},
              {"vocab_digest", ck.vocab_digest},
              {"vocab", ck.vocab_tokens},
              {"metadata", ck.metadata},
              {"arrays", manifest}};
  if (ck.params.head) {
    header["head"] = {{"task", ck.params.head->task}, {"labels", ck.params.head->labels}};
  }
  if (ck.optimizer) {
    const auto& o = *ck.optimizer;
    header["optimizer"] = {{"step", o.step},   {"lr", o.lr},   {"beta1", o.beta1},
                           {"beta2", o.beta2}, {"eps", o.eps}, {"weight_decay", o.weight_decay},
                           {"params", ck.optimizer_params}};
  }
  const std::string hdr = header.dump();

  std::string out;
  out.reserve(kCheckpointMagic.size() + 12 + hdr.size() + offset);
  out.append(kCheckpointMagic);
  detail::put_le<std::uint32_t>(out, ck.format_version);
  detail::put_le<std::uint64_t>(out, hdr.size());
  out += hdr;
  for (const auto& [name, data] : arrays) {
    out.append(reinterpret_cast<const char*>(data.data()), data.size() * sizeof(double));
  }
  return out;
}

inline Checkpoint parse_checkpoint(std::string_view bytes) {
  const std::size_t fixed = kCheckpointMagic.size() + 4 + 8;
  if (bytes.size() < fixed || bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic) {
    throw Error(Errc::CorruptFile, "not a checkpoint (bad magic or too short)");
  }
  Checkpoint ck;
  ck.format_version = detail::get_le<std::uint32_t>(bytes, kCheckpointMagic.size());
  if (ck.format_version != Checkpoint::kFormatVersion) {
    throw Error(Errc::VersionMismatch,
                "checkpoint format " + std::to_string(ck.format_version) +
                    ", reader supports " + std::to_string(Checkpoint::kFormatVersion));
  }
  const auto hdr_len = detail::get_le<std::uint64_t>(bytes, kCheckpointMagic.size() + 4);
  if (hdr_len > bytes.size() - fixed) throw Error(Errc::CorruptFile, "truncated header");
  const std::string_view data = bytes.substr(fixed + hdr_len);

  json header;
  try {
    header = json::parse(bytes.substr(fixed, hdr_len));
  } catch (const json::exception& e) {
    throw Error(Errc::CorruptFile, std::string("header: ") + e.what());
  }

  std::map<std::string, Tensor> arrays;
  try {
    std::uint64_t expected = 0;
    for (const auto& a : header.at("arrays")) {
      const auto off = a.at("offset").get<std::uint64_t>();
      const auto count = a.at("count").get<std::uint64_t>();
      const auto shape = a.at("shape").get<Shape>();
      if (off != expected || shape_numel(shape) != count ||
          off + count * sizeof(double) > data.size()) {
        throw Error(Errc::CorruptFile, "array " + a.at("name").get<std::string>() +
                                           " outside the data section");
      }
      std::vector<double> values(count);
      std::memcpy(values.data(), data.data() + off, count * sizeof(double));
      arrays.emplace(a.at("name").get<std::string>(),
                     Tensor(shape, std::move(values), true));
      expected = off + count * sizeof(double);
    }
    if (expected != data.size()) throw Error(Errc::CorruptFile, "trailing or missing data");

    ck.config = model_config_from_json(header.at("config"));
    ck.global_step = header.at("global_step").get<std::int64_t>();
    ck.vocab_digest = header.at("vocab_digest").get<std::string>();
    ck.vocab_tokens = header.at("vocab").get<std::vector<std::string>>();
    ck.metadata = header.at("metadata");
  } catch (const json::exception& e) {
    throw Error(Errc::CorruptFile, std::string("header: ") + e.what());
  }

  auto take = [&](const std::string& name) {
    auto it = arrays.find(name);
    if (it == arrays.end()) throw Error(Errc::CorruptFile, "missing array " + name);
    Tensor t = it->second;
    arrays.erase(it);
    return t;
  };

  const ModelConfig& cfg = ck.config;
  ModelParams& p = ck.params;
  p.token_embedding = take("embeddings.token");
  if (cfg.positional_mode == PositionalMode::Learned) p.position_embedding = take("embeddings.position");
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    LayerParams L;
    const std::string pre = "layers." + std::to_string(l) + ".";
    for (std::size_t h = 0; h < cfg.num_heads; ++h) {
      L.w_q.push_back(take(pre + "attn.q." + std::to_string(h)));
      L.w_k.push_back(take(pre + "attn.k." + std::to_string(h)));
      L.w_v.push_back(take(pre + "attn.v." + std::to_string(h)));
    }
    L.w_o = take(pre + "attn.o");
    L.ln1_gain = take(pre + "ln1.gain");
    L.ln1_bias = take(pre + "ln1.bias");
    L.ffn_w1 = take(pre + "ffn.w1");
    L.ffn_b1 = take(pre + "ffn.b1");
    L.ffn_w2 = take(pre + "ffn.w2");
    L.ffn_b2 = take(pre + "ffn.b2");
    L.ln2_gain = take(pre + "ln2.gain");
    L.ln2_bias = take(pre + "ln2.bias");
    p.layers.push_back(std::move(L));
  }
  if (!cfg.tie_mlm_weights) p.mlm_weight = take("mlm.weight");
  p.mlm_bias = take("mlm.bias");
  if (header.contains("head")) {
    ClassifierHead h;
    h.task = header["head"].at("task").get<std::string>();
    h.labels = header["head"].at("labels").get<std::vector<std::string>>();
    h.weight = take("head.weight");
    h.bias = take("head.bias");
    p.head = std::move(h);
  }
  if (header.contains("optimizer")) {
    const auto& o = header["optimizer"];
    AdamWState st;
    st.step = o.at("step").get<std::int64_t>();
    st.lr = o.at("lr").get<double>();
    st.beta1 = o.at("beta1").get<double>();
    st.beta2 = o.at("beta2").get<double>();
    st.eps = o.at("eps").get<double>();
    st.weight_decay = o.at("weight_decay").get<double>();
    ck.optimizer_params = o.at("params").get<std::vector<std::string>>();
    for (const auto& name : ck.optimizer_params) {
      st.m.push_back(take("adam.m/" + name).values());
      st.v.push_back(take("adam.v/" + name).values());
    }
    ck.optimizer = std::move(st);
  }
  if (!arrays.empty()) throw Error(Errc::CorruptFile, "unexpected array " + arrays.begin()->first);
  if (ck.vocab_tokens.size() != cfg.vocab_size ||
      p.token_embedding.shape() != Shape{cfg.vocab_size, cfg.hidden}) {
    throw Error(Errc::CorruptFile, "vocabulary and embedding sizes disagree");
  }
  if (Vocab(ck.vocab_tokens).digest() != ck.vocab_digest) {
    throw Error(Errc::CorruptFile, "embedded vocabulary does not match its digest");
  }
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  write_file(path, serialize_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  return parse_checkpoint(read_file(path));
}

}  // namespace poembert
