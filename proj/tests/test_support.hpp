#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>

#include "eetr/eetr.hpp"

namespace eetr::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("eetr_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }

  std::string write(const std::string& name, const std::string& content) const {
    std::ofstream(file(name)) << content;
    return file(name);
  }

 private:
  std::filesystem::path path_;
};

inline Dataset synthetic_dataset(std::size_t queries, std::uint64_t seed, std::size_t max_len = 64) {
  SyntheticConfig sc;
  sc.queries = queries;
  sc.seed = seed;
  auto syn = generate_synthetic_corpus(sc);
  const EntityTypeSet types;
  const Annotator annotator(Recognizer(types, syn.make_gazetteer(types)));
  return prepare_dataset(std::move(syn.corpus), annotator, max_len);
}

/// Small encoder whose activations sit at unit scale, so finite differences are well conditioned.
inline RetrieverConfig small_retriever(std::size_t vocab_size, RetrieverMode mode, std::uint64_t seed = 5) {
  RetrieverConfig rc;
  rc.encoder.hidden_dim = 8;
  rc.encoder.num_layers = 1;
  rc.encoder.num_heads = 2;
  rc.encoder.max_len = 64;
  rc.encoder.vocab_size = vocab_size;
  rc.encoder.init_stddev = 1.0;
  rc.encoder.seed = seed;
  rc.mode = mode;
  return rc;
}

inline void randomize_gate(Retriever& model, std::uint64_t seed, double stddev = 0.3) {
  Rng rng(seed);
  for (double& v : model.params().query_encoder.gate_weight.values()) v = rng.normal(0.0, stddev);
  for (double& v : model.params().query_encoder.gate_bias.values()) v = rng.normal(0.0, stddev);
}

}  // namespace eetr::testing
