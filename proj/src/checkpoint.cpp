#include "xlrec/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

#include "xlrec/errors.hpp"

namespace xlrec {

namespace {

constexpr char kMagic[9] = "XLRECKPT";

void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw ParseError("checkpoint truncated");
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  const std::uint64_t n = read_u64(in);
  if (n > (1ull << 30)) throw ParseError("checkpoint string too large");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw ParseError("checkpoint truncated");
  return s;
}

nlohmann::json model_config_json(const ModelConfig& cfg) {
  return {{"vocab_size", cfg.vocab_size},
          {"embedding_dim", cfg.embedding_dim},
          {"heads", cfg.heads},
          {"attn_hidden", cfg.attn_hidden},
          {"align_classes", cfg.align_classes},
          {"user_self_attention", cfg.user_self_attention},
          {"dropout", cfg.dropout}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.vocab_size = j.at("vocab_size").get<std::size_t>();
  cfg.embedding_dim = j.at("embedding_dim").get<std::size_t>();
  cfg.heads = j.at("heads").get<std::size_t>();
  cfg.attn_hidden = j.at("attn_hidden").get<std::size_t>();
  cfg.align_classes = j.at("align_classes").get<std::size_t>();
  cfg.user_self_attention = j.at("user_self_attention").get<bool>();
  cfg.dropout = j.at("dropout").get<double>();
  return cfg;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params,
                     std::uint64_t vocab_hash, const std::string& config_echo) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write checkpoint: " + path);
  out.write(kMagic, 8);
  write_string(out, model_config_json(params.cfg).dump());
  write_u64(out, vocab_hash);
  write_string(out, config_echo);

  const auto named = params.named_tensors();
  write_u64(out, named.size());
  for (const auto& [name, t] : named) {
    write_string(out, name);
    write_u64(out, t->shape.size());
    for (std::size_t d : t->shape) write_u64(out, d);
    out.write(reinterpret_cast<const char*>(t->data.data()),
              static_cast<std::streamsize>(t->data.size() * sizeof(double)));
  }
  if (!out) throw ConfigError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path,
                           std::uint64_t expected_vocab_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != kMagic)
    throw ParseError("not a checkpoint file: " + path);

  Checkpoint ckpt;
  ModelConfig cfg;
  try {
    cfg = model_config_from_json(nlohmann::json::parse(read_string(in)));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad checkpoint config: ") + e.what());
  }
  ckpt.vocab_hash = read_u64(in);
  ckpt.config_echo = read_string(in);
  if (expected_vocab_hash != 0 && ckpt.vocab_hash != expected_vocab_hash)
    throw ConfigError("checkpoint vocabulary hash mismatch: model was trained "
                      "against a different vocabulary");

  // Materialize parameters with the stored config, then overwrite every
  // tensor; names and shapes must match exactly.
  ckpt.params = ModelParams::init(cfg, 0);
  auto named = ckpt.params.named_tensors();
  const std::uint64_t count = read_u64(in);
  if (count != named.size())
    throw ParseError("checkpoint holds " + std::to_string(count) +
                     " tensors, expected " + std::to_string(named.size()));
  for (auto& [name, t] : named) {
    const std::string stored = read_string(in);
    if (stored != name)
      throw ParseError("checkpoint tensor order mismatch: " + stored +
                       " where " + name + " expected");
    const std::uint64_t rank = read_u64(in);
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = read_u64(in);
    if (shape != t->shape)
      throw ParseError("checkpoint tensor " + name + " has wrong shape");
    in.read(reinterpret_cast<char*>(t->data.data()),
            static_cast<std::streamsize>(t->data.size() * sizeof(double)));
    if (!in) throw ParseError("checkpoint truncated in tensor " + name);
  }
  return ckpt;
}

}  // namespace xlrec
