#pragma once

#include <openssl/evp.h>
#include <openssl/hmac.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "modelizer/errors.hpp"

namespace modelizer {

// 32-byte default key for sample digests. Set MODELIZER_HMAC_KEY to use a
// different key (its raw bytes are used as-is), e.g. to keep stores disjoint.
inline constexpr std::string_view default_hmac_key = "modelizer.sample-digest.key.0001";
inline constexpr const char* hmac_key_env = "MODELIZER_HMAC_KEY";

inline std::string hmac_key_from_env() {
  if (const char* k = std::getenv(hmac_key_env); k != nullptr && *k != '\0') return k;
  return std::string(default_hmac_key);
}

inline std::string to_hex(const unsigned char* data, std::size_t n) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(2 * n, '0');
  for (std::size_t i = 0; i < n; ++i) {
    out[2 * i] = digits[data[i] >> 4];
    out[2 * i + 1] = digits[data[i] & 0xf];
  }
  return out;
}

// HMAC-SHA-384 as 96 lowercase hex characters.
inline std::string hmac_sha384_hex(std::string_view data, std::string_view key) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (HMAC(EVP_sha384(), key.data(), static_cast<int>(key.size()), reinterpret_cast<const unsigned char*>(data.data()),
           data.size(), md, &len) == nullptr) {
    throw Error("HMAC-SHA-384 computation failed");
  }
  return to_hex(md, len);
}

class Hasher {
 public:
  Hasher() : key_(hmac_key_from_env()) {}
  explicit Hasher(std::string key) : key_(std::move(key)) {}
  std::string operator()(std::string_view text) const { return hmac_sha384_hex(text, key_); }

 private:
  std::string key_;
};

// Set of digests with an optional backing file (one hex digest per line,
// sorted). insert() is an atomic insert-if-absent.
class HashStore {
 public:
  HashStore() = default;
  explicit HashStore(std::string path) : path_(std::move(path)) {
    std::ifstream in(path_);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty()) digests_.insert(line);
    }
  }

  bool insert(const std::string& digest) {
    std::lock_guard lock(mu_);
    return digests_.insert(digest).second;
  }

  bool contains(const std::string& digest) const {
    std::lock_guard lock(mu_);
    return digests_.count(digest) != 0;
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return digests_.size();
  }

  const std::string& path() const { return path_; }

  void save() const { save(path_); }

  void save(const std::string& path) const {
    if (path.empty()) return;
    std::lock_guard lock(mu_);
    const std::string tmp = path + ".tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      if (!out) throw Error("cannot write hash store " + path);
      for (const auto& d : digests_) out << d << '\n';
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw Error("cannot replace hash store " + path);
  }

 private:
  std::string path_;
  mutable std::mutex mu_;
  std::set<std::string> digests_;
};

}  // namespace modelizer
