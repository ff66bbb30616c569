#pragma once

#include <openssl/sha.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "modelizer/errors.hpp"
#include "modelizer/tokenizer.hpp"
#include "modelizer/trainer.hpp"
#include "modelizer/transformer.hpp"
#include "modelizer/vocabulary.hpp"

namespace modelizer {

struct Checkpoint {
  Model model;
  Vocabulary source;
  Vocabulary target;
  std::uint64_t seed = 0;
  LossHistory history;
  Format source_format = Format::markdown;
  Format target_format = Format::html;
};

inline nlohmann::ordered_json model_config_to_json(const ModelConfig& c) {
  return nlohmann::ordered_json{{"encoder_layers", c.encoder_layers},   {"decoder_layers", c.decoder_layers},
                                {"embedding_size", c.embedding_size},   {"feedforward_size", c.feedforward_size},
                                {"attention_heads", c.attention_heads}, {"dropout", c.dropout},
                                {"context_window", c.context_window}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.encoder_layers = j.at("encoder_layers").get<std::size_t>();
  c.decoder_layers = j.at("decoder_layers").get<std::size_t>();
  c.embedding_size = j.at("embedding_size").get<std::size_t>();
  c.feedforward_size = j.at("feedforward_size").get<std::size_t>();
  c.attention_heads = j.at("attention_heads").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.context_window = j.at("context_window").get<std::size_t>();
  return c;
}

// Container layout, all integers little-endian:
//   magic "MDLZCKPT" | u32 version | block config (JSON) | block source vocab |
//   block target vocab | block weights (float32) | block meta (JSON) | SHA-256
// where a block is a u64 byte length followed by the bytes.
inline constexpr char checkpoint_magic[8] = {'M', 'D', 'L', 'Z', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t checkpoint_version = 1;

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline void put_u64(std::string& out, std::uint64_t v) { out.append(reinterpret_cast<const char*>(&v), 8); }

inline void put_block(std::string& out, const std::string& bytes) {
  put_u64(out, bytes.size());
  out += bytes;
}

inline std::string vocab_block(const Vocabulary& v) {
  std::string s;
  for (const auto& t : v.tokens()) {
    s += escape_token(t);
    s += '\n';
  }
  return s;
}

inline Vocabulary vocab_from_block(const std::string& s) {
  std::vector<std::string> tokens;
  std::istringstream in(s);
  std::string line;
  while (std::getline(in, line)) tokens.push_back(unescape_token(line));
  return Vocabulary(std::move(tokens));
}

inline std::string sha256(const char* data, std::size_t n) {
  std::string md(SHA256_DIGEST_LENGTH, '\0');
  SHA256(reinterpret_cast<const unsigned char*>(data), n, reinterpret_cast<unsigned char*>(md.data()));
  return md;
}

class Reader {
 public:
  Reader(const std::string& buf, std::size_t end) : buf_(buf), end_(end) {}
  std::uint64_t u64() {
    need(8);
    std::uint64_t v;
    std::memcpy(&v, buf_.data() + pos_, 8);
    pos_ += 8;
    return v;
  }
  std::string block() {
    const std::uint64_t n = u64();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void seek(std::size_t p) { pos_ = p; }

 private:
  void need(std::uint64_t n) const {
    if (n > end_ - pos_) throw ChecksumMismatch("block runs past the end of the payload");
  }
  const std::string& buf_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::string out(checkpoint_magic, sizeof checkpoint_magic);
  const std::uint32_t version = checkpoint_version;
  out.append(reinterpret_cast<const char*>(&version), 4);
  nlohmann::ordered_json cfg = model_config_to_json(ck.model.config());
  detail::put_block(out, cfg.dump());
  detail::put_block(out, detail::vocab_block(ck.source));
  detail::put_block(out, detail::vocab_block(ck.target));
  const auto& w = ck.model.params();
  detail::put_block(out, std::string(reinterpret_cast<const char*>(w.data()), w.size() * sizeof(float)));
  nlohmann::ordered_json meta{{"seed", ck.seed},
                              {"initial_validation_loss", ck.history.initial_validation},
                              {"train_loss", ck.history.train},
                              {"validation_loss", ck.history.validation},
                              {"source_format", to_string(ck.source_format)},
                              {"target_format", to_string(ck.target_format)}};
  detail::put_block(out, meta.dump());
  out += detail::sha256(out.data(), out.size());

  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write checkpoint " + tmp);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw Error("short write to " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw Error("cannot move checkpoint into place at " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open checkpoint " + path);
  const std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  constexpr std::size_t header = sizeof checkpoint_magic + 4;
  const std::size_t probe = std::min(buf.size(), sizeof checkpoint_magic);
  if (buf.empty() || buf.compare(0, probe, checkpoint_magic, probe) != 0) throw Error("not a checkpoint file: " + path);
  if (buf.size() < header) throw ChecksumMismatch("file ends inside the header");
  std::uint32_t version;
  std::memcpy(&version, buf.data() + sizeof checkpoint_magic, 4);
  if (version != checkpoint_version) throw VersionMismatch(version, checkpoint_version);
  if (buf.size() < header + SHA256_DIGEST_LENGTH) throw ChecksumMismatch("file too short for a digest");
  const std::size_t end = buf.size() - SHA256_DIGEST_LENGTH;
  if (detail::sha256(buf.data(), end) != buf.substr(end)) throw ChecksumMismatch(path);

  detail::Reader r(buf, end);
  r.seek(header);
  const auto cfg = model_config_from_json(nlohmann::json::parse(r.block()));
  Vocabulary src = detail::vocab_from_block(r.block());
  Vocabulary tgt = detail::vocab_from_block(r.block());
  const std::string weights = r.block();
  const auto meta = nlohmann::json::parse(r.block());

  Model model(cfg, src.size(), tgt.size());
  if (weights.size() != model.param_count() * sizeof(float))
    throw Error("checkpoint weight blob holds " + std::to_string(weights.size() / sizeof(float)) +
                " values, config implies " + std::to_string(model.param_count()));
  std::memcpy(model.params().data(), weights.data(), weights.size());
  LossHistory h;
  h.initial_validation = meta.at("initial_validation_loss").get<double>();
  h.train = meta.at("train_loss").get<std::vector<double>>();
  h.validation = meta.at("validation_loss").get<std::vector<double>>();
  return {std::move(model),
          std::move(src),
          std::move(tgt),
          meta.at("seed").get<std::uint64_t>(),
          std::move(h),
          parse_format(meta.at("source_format").get<std::string>()),
          parse_format(meta.at("target_format").get<std::string>())};
}

}  // namespace modelizer
