#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>

#include "mkdm/data.hpp"
#include "mkdm/encoder.hpp"
#include "mkdm/rng.hpp"
#include "mkdm/tensor.hpp"

namespace mkdm::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string pattern = (std::filesystem::temp_directory_path() / "mkdm-test-XXXXXX").string();
    if (!mkdtemp(pattern.data())) throw std::runtime_error("mkdtemp failed");
    path_ = pattern;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

template <typename T = double>
BasicTensor<T> random_tensor(const Shape& shape, Rng& rng, double stddev = 1.0) {
  BasicTensor<T> t(shape);
  for (auto& v : t.values()) v = static_cast<T>(rng.normal(0.0, stddev));
  return t;
}

inline EncoderConfig tiny_encoder(std::int32_t vocab_size, std::int32_t layers = 1) {
  EncoderConfig c;
  c.layers = layers;
  c.hidden = 8;
  c.heads = 2;
  c.ffn = 16;
  c.dropout = 0.0;
  c.max_len = 16;
  c.vocab_size = vocab_size;
  return c;
}

/// A few hundred short pairs: fast enough to train on inside a unit test.
inline SyntheticSpec small_spec(std::int64_t size = 240, std::uint64_t seed = 1) {
  SyntheticSpec s;
  s.vocab_size = 120;
  s.topics = 4;
  s.passage_min = 6;
  s.passage_max = 10;
  s.size = size;
  s.seed = seed;
  return s;
}

}  // namespace mkdm::test
