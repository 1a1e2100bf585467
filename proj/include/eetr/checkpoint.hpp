#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "eetr/config.hpp"
#include "eetr/corpus.hpp"
#include "eetr/error.hpp"
#include "eetr/model.hpp"

namespace eetr {

inline constexpr int kCheckpointVersion = 1;

struct CheckpointMeta {
  std::size_t epochs = 0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
};

struct Checkpoint {
  RunConfig config;
  Vocabulary vocab;
  Retriever model;
  CheckpointMeta meta;
};

/// FNV-1a over the model keys and their values.
inline std::uint64_t config_hash(const RunConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= 0xff;
    h *= 0x100000001b3ULL;
  };
  for (const auto& key : config_keys(true)) {
    feed(key);
    feed(get_config_value(cfg, key));
  }
  return h;
}

namespace detail {

inline std::string hex_double(double d) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%a", d);
  return buf;
}

inline double parse_hex_double(const std::string& s, const std::string& where) {
  char* end = nullptr;
  const double d = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0') throw InputError(where + ": malformed number '" + s + "'");
  return d;
}

}  // namespace detail

/// Text checkpoint: header, model config, vocabulary, then every tensor as hex floats so a
/// reload reproduces the parameters bit for bit.
inline void save_checkpoint(const std::string& path, const RunConfig& cfg, const Vocabulary& vocab,
                            const Retriever& model, std::size_t epochs) {
  auto out = detail::open_output(path);
  out << "eetr-checkpoint " << kCheckpointVersion << '\n';
  for (const auto& key : config_keys(true)) out << "config " << key << ' ' << get_config_value(cfg, key) << '\n';
  out << "meta epochs " << epochs << '\n';
  out << "meta seed " << cfg.train.seed << '\n';
  out << "meta config_hash " << config_hash(cfg) << '\n';
  out << "vocab " << vocab.size() << '\n';
  for (const auto& tok : vocab.tokens()) out << tok << '\n';
  model.params().for_each([&](const std::string& name, const Matrix& m) {
    out << "tensor " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (std::size_t r = 0; r < m.rows(); ++r) {
      for (std::size_t c = 0; c < m.cols(); ++c) out << (c ? " " : "") << detail::hex_double(m(r, c));
      out << '\n';
    }
  });
  out << "end\n";
  if (!out) throw Error("failed writing checkpoint '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  auto in = detail::open_input(path);
  std::string line;
  std::size_t line_no = 0;
  auto where = [&] { return path + ":" + std::to_string(line_no); };
  auto next = [&]() -> std::string& {
    if (!std::getline(in, line)) throw InputError(path + ": truncated checkpoint");
    ++line_no;
    return line;
  };

  {
    std::istringstream head(next());
    std::string magic;
    int version = 0;
    if (!(head >> magic >> version) || magic != "eetr-checkpoint") throw InputError(path + ": not a checkpoint");
    if (version != kCheckpointVersion) throw InputError(path + ": unsupported checkpoint version");
  }

  RunConfig cfg;
  CheckpointMeta meta;
  std::vector<std::string> tokens;
  for (;;) {
    std::istringstream fields(next());
    std::string kind;
    fields >> kind;
    if (kind == "config") {
      std::string key, value;
      fields >> key;
      std::getline(fields >> std::ws, value);
      set_config_value(cfg, key, value);
    } else if (kind == "meta") {
      std::string key;
      std::uint64_t value = 0;
      if (!(fields >> key >> value)) throw InputError(where() + ": malformed meta line");
      if (key == "epochs") meta.epochs = value;
      else if (key == "seed") meta.seed = value;
      else if (key == "config_hash") meta.config_hash = value;
    } else if (kind == "vocab") {
      std::size_t n = 0;
      if (!(fields >> n)) throw InputError(where() + ": malformed vocab line");
      for (std::size_t i = 0; i < n; ++i) tokens.push_back(next());
      break;
    } else {
      throw InputError(where() + ": unexpected line");
    }
  }
  if (meta.config_hash != config_hash(cfg)) throw InputError(path + ": config hash mismatch");
  Vocabulary vocab = Vocabulary::from_tokens(tokens);

  RetrieverConfig rc = cfg.retriever;
  rc.encoder.vocab_size = vocab.size();
  Retriever model = Retriever::create(rc);
  std::map<std::string, Matrix*> slots;
  model.params().for_each([&](const std::string& name, Matrix& m) { slots[name] = &m; });
  for (;;) {
    std::istringstream fields(next());
    std::string kind, name;
    std::size_t rows = 0, cols = 0;
    fields >> kind;
    if (kind == "end") break;
    if (kind != "tensor" || !(fields >> name >> rows >> cols)) throw InputError(where() + ": expected tensor");
    auto it = slots.find(name);
    if (it == slots.end()) throw InputError(where() + ": unknown tensor '" + name + "'");
    Matrix& m = *it->second;
    if (m.rows() != rows || m.cols() != cols) {
      throw InputError(where() + ": shape mismatch for '" + name + "': file " + std::to_string(rows) + "x" +
                       std::to_string(cols) + ", model " + m.shape_string());
    }
    for (std::size_t r = 0; r < rows; ++r) {
      std::istringstream values(next());
      std::string v;
      for (std::size_t c = 0; c < cols; ++c) {
        if (!(values >> v)) throw InputError(where() + ": short tensor row");
        m(r, c) = detail::parse_hex_double(v, where());
      }
    }
    slots.erase(it);
  }
  if (!slots.empty()) throw InputError(path + ": missing tensor '" + slots.begin()->first + "'");
  return {cfg, std::move(vocab), std::move(model), meta};
}

}  // namespace eetr
