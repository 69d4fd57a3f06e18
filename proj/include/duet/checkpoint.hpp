#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "duet/config.hpp"
#include "duet/errors.hpp"
#include "duet/model.hpp"
#include "duet/tokenizer.hpp"

namespace duet {

// Versioned binary container: magic, version, the model configuration as a
// key=value text block, then every parameter tensor in declaration order as
// name, shape, and little-endian float32 data.

namespace detail {

constexpr char kCheckpointMagic[8] = {'D', 'U', 'E', 'T', 'M', 'D', 'L', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xFF);
}
inline void put_f32(std::vector<std::uint8_t>& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

class CheckpointReader {
 public:
  explicit CheckpointReader(std::vector<std::uint8_t> data)
      : data_(std::move(data)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= std::uint32_t(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::uint32_t len) {
    need(len);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), len);
    pos_ += len;
    return s;
  }
  bool at_end() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n)
      throw Error("checkpoint file truncated at byte " + std::to_string(pos_));
  }
  std::vector<std::uint8_t> data_;
  std::size_t pos_ = 0;
};

inline KeyValues config_to_kv(const ModelConfig& cfg, Variant variant) {
  KeyValues kv;
  kv.set("d_model", std::int64_t(cfg.d_model));
  kv.set("n_heads", std::int64_t(cfg.n_heads));
  kv.set("d_ff", std::int64_t(cfg.d_ff));
  kv.set("n_layers_enc", std::int64_t(cfg.n_layers_enc));
  kv.set("n_layers_dec", std::int64_t(cfg.n_layers_dec));
  kv.set("vocab_size_src", std::int64_t(cfg.vocab_size_src));
  kv.set("vocab_size_tgt", std::int64_t(cfg.vocab_size_tgt));
  kv.set("max_len", std::int64_t(cfg.max_len));
  kv.set("dropout_rate", cfg.dropout_rate);
  kv.set("seed", std::int64_t(cfg.seed));
  kv.set("positional_encoding", cfg.positional_encoding);
  kv.set("variant", variant_name(variant));
  return kv;
}

inline ModelConfig config_from_kv(const KeyValues& kv) {
  ModelConfig cfg;
  cfg.d_model = int(kv.get_int("d_model", cfg.d_model));
  cfg.n_heads = int(kv.get_int("n_heads", cfg.n_heads));
  cfg.d_ff = int(kv.get_int("d_ff", cfg.d_ff));
  cfg.n_layers_enc = int(kv.get_int("n_layers_enc", cfg.n_layers_enc));
  cfg.n_layers_dec = int(kv.get_int("n_layers_dec", cfg.n_layers_dec));
  cfg.vocab_size_src = int(kv.get_int("vocab_size_src", 0));
  cfg.vocab_size_tgt = int(kv.get_int("vocab_size_tgt", 0));
  cfg.max_len = int(kv.get_int("max_len", cfg.max_len));
  cfg.dropout_rate = kv.get_double("dropout_rate", cfg.dropout_rate);
  cfg.seed = std::uint64_t(kv.get_int("seed", 1));
  cfg.positional_encoding = kv.get_bool("positional_encoding", true);
  return cfg;
}

}  // namespace detail

template <class Scalar>
std::vector<std::uint8_t> serialize_checkpoint(const ModelParams<Scalar>& params,
                                               Variant variant) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), detail::kCheckpointMagic,
             detail::kCheckpointMagic + 8);
  detail::put_u32(out, detail::kCheckpointVersion);

  const std::string cfg_text =
      detail::config_to_kv(params.config, variant).to_text();
  detail::put_u32(out, std::uint32_t(cfg_text.size()));
  out.insert(out.end(), cfg_text.begin(), cfg_text.end());

  detail::put_u32(out, std::uint32_t(params.tensors().size()));
  for (const auto& t : params.tensors()) {
    detail::put_u32(out, std::uint32_t(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    detail::put_u32(out, std::uint32_t(t.value.rows()));
    detail::put_u32(out, std::uint32_t(t.value.cols()));
    for (Eigen::Index i = 0; i < t.value.rows(); ++i)
      for (Eigen::Index j = 0; j < t.value.cols(); ++j)
        detail::put_f32(out, static_cast<float>(t.value(i, j)));
  }
  return out;
}

template <class Scalar>
void save_checkpoint(const std::string& path, const ModelParams<Scalar>& params,
                     Variant variant) {
  auto bytes = serialize_checkpoint(params, variant);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

template <class Scalar>
struct Checkpoint {
  ModelParams<Scalar> params;
  Variant variant = Variant::kNone;
};

template <class Scalar>
Checkpoint<Scalar> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path + "'");
  std::vector<std::uint8_t> bytes(
      (std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  detail::CheckpointReader r(std::move(bytes));

  const std::string magic = r.str(8);
  if (magic != std::string(detail::kCheckpointMagic, 8))
    throw Error("not a model checkpoint: '" + path + "'");
  const std::uint32_t version = r.u32();
  if (version != detail::kCheckpointVersion)
    throw Error("unsupported checkpoint version " + std::to_string(version));

  const KeyValues kv = KeyValues::parse(r.str(r.u32()));
  Checkpoint<Scalar> ckpt;
  const ModelConfig cfg = detail::config_from_kv(kv);
  auto variant = parse_variant(kv.get_string("variant", "none"));
  if (!variant) throw Error("checkpoint has unknown tokenizer variant");
  ckpt.variant = *variant;
  ckpt.params = ModelParams<Scalar>::init(cfg);

  const std::uint32_t count = r.u32();
  if (count != ckpt.params.tensors().size())
    throw Error("checkpoint tensor count does not match configuration");
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::string name = r.str(r.u32());
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    auto& tensor = ckpt.params.at(name);
    if (tensor.value.rows() != Eigen::Index(rows) ||
        tensor.value.cols() != Eigen::Index(cols))
      throw Error("checkpoint tensor '" + name + "' has unexpected shape");
    for (Eigen::Index i = 0; i < tensor.value.rows(); ++i)
      for (Eigen::Index j = 0; j < tensor.value.cols(); ++j)
        tensor.value(i, j) = static_cast<Scalar>(r.f32());
  }
  return ckpt;
}

}  // namespace duet
