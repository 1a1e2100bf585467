#pragma once

#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "eetr/corpus.hpp"
#include "eetr/error.hpp"
#include "eetr/pipeline.hpp"
#include "eetr/synthetic.hpp"

namespace eetr {

/// Everything a CLI run needs. Precedence: defaults, config file, EETR_* environment, flags.
struct RunConfig {
  RetrieverConfig retriever;
  TrainConfig train;
  InferenceTypes inference;

  std::string tables, queries, qrels, annotations, gazetteer;
  std::string checkpoint, index, run, output;
  std::string run_tag = "eetr";
  std::size_t k = 100;
  std::size_t min_freq = 1;
  double test_fraction = 0.3;
  std::uint64_t split_seed = 0;
  std::size_t seeds = 5;
  std::string sweep_weight = "table_entity";
  std::vector<double> sweep_grid = {0.0, 0.1, 0.3, 0.5, 1.0};
  SyntheticConfig synthetic;

  RunConfig() {
    retriever.encoder.hidden_dim = 64;
    retriever.encoder.num_layers = 1;
    retriever.encoder.num_heads = 2;
    retriever.encoder.max_len = 64;
    retriever.encoder.position_embeddings = false;
    retriever.encoder.init_stddev = 1.0;
    train.learning_rate = 3e-4;
    synthetic.queries = 200;
  }

  /// Sets the sub-config fields that mirror the shared ones.
  void sync() {
    retriever.mode = train.mode;
    retriever.encoder.seed = train.seed;
  }

  ExperimentSpec experiment() const {
    ExperimentSpec s;
    s.label = "full";
    s.retriever = retriever;
    s.train = train;
    s.inference = inference;
    s.k = k;
    return s;
  }
};

namespace config_detail {

[[noreturn]] inline void bad_value(const std::string& key, const std::string& value) {
  throw ConfigError("config key '" + key + "': invalid value '" + value + "'");
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v);
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  if (v.empty() || v[0] == '-') bad_value(key, v);
  errno = 0;
  char* end = nullptr;
  const unsigned long long n = std::strtoull(v.c_str(), &end, 0);
  if (errno != 0 || *end != '\0') bad_value(key, v);
  return n;
}

inline std::size_t parse_size(const std::string& key, const std::string& v) {
  return static_cast<std::size_t>(parse_u64(key, v));
}

inline double parse_double(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || errno != 0 || *end != '\0' || !std::isfinite(d)) bad_value(key, v);
  return d;
}

inline std::string format_double(double d) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", d);
  return buf;
}

inline std::string format_bool(bool b) { return b ? "true" : "false"; }

struct Key {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
  bool model = false;  // stored in checkpoints
};

using KeyTable = std::map<std::string, Key>;

#define EETR_SIZE_KEY(name, field, model) \
  t[name] = {[](RunConfig& c, const std::string& v) { c.field = parse_size(name, v); }, \
             [](const RunConfig& c) { return std::to_string(c.field); }, model}
#define EETR_DOUBLE_KEY(name, field, model) \
  t[name] = {[](RunConfig& c, const std::string& v) { c.field = parse_double(name, v); }, \
             [](const RunConfig& c) { return format_double(c.field); }, model}
#define EETR_BOOL_KEY(name, field, model) \
  t[name] = {[](RunConfig& c, const std::string& v) { c.field = parse_bool(name, v); }, \
             [](const RunConfig& c) { return format_bool(c.field); }, model}
#define EETR_STRING_KEY(name, field) \
  t[name] = {[](RunConfig& c, const std::string& v) { c.field = v; }, \
             [](const RunConfig& c) { return c.field; }, false}

inline const KeyTable& keys() {
  static const KeyTable table = [] {
    KeyTable t;
    EETR_SIZE_KEY("hidden_dim", retriever.encoder.hidden_dim, true);
    EETR_SIZE_KEY("num_layers", retriever.encoder.num_layers, true);
    EETR_SIZE_KEY("num_heads", retriever.encoder.num_heads, true);
    EETR_SIZE_KEY("ffn_dim", retriever.encoder.ffn_dim, true);
    EETR_SIZE_KEY("max_len", retriever.encoder.max_len, true);
    EETR_BOOL_KEY("entity_types", retriever.encoder.entity_types, true);
    EETR_BOOL_KEY("position_embeddings", retriever.encoder.position_embeddings, true);
    EETR_DOUBLE_KEY("init_stddev", retriever.encoder.init_stddev, true);
    EETR_BOOL_KEY("tie_encoders", retriever.tie_encoders, true);
    EETR_BOOL_KEY("sparse_entity_relu", retriever.sparse_entity_relu, true);
    t["similarity"] = {[](RunConfig& c, const std::string& v) {
                         if (v == "dot" || v == "inner_product") c.retriever.similarity = Similarity::inner_product;
                         else if (v == "cosine") c.retriever.similarity = Similarity::cosine;
                         else bad_value("similarity", v);
                       },
                       [](const RunConfig& c) { return to_string(c.retriever.similarity); }, true};
    t["pooling"] = {[](RunConfig& c, const std::string& v) {
                      if (v == "max") c.retriever.pooling = Pooling::max;
                      else if (v == "mean") c.retriever.pooling = Pooling::mean;
                      else bad_value("pooling", v);
                    },
                    [](const RunConfig& c) { return to_string(c.retriever.pooling); }, true};
    t["mode"] = {[](RunConfig& c, const std::string& v) {
                   if (v == "dense") c.train.mode = RetrieverMode::dense;
                   else if (v == "sparse") c.train.mode = RetrieverMode::sparse;
                   else bad_value("mode", v);
                 },
                 [](const RunConfig& c) { return to_string(c.train.mode); }, true};
    t["seed"] = {[](RunConfig& c, const std::string& v) { c.train.seed = parse_u64("seed", v); },
                 [](const RunConfig& c) { return std::to_string(c.train.seed); }, true};
    EETR_SIZE_KEY("batch_size", train.batch_size, true);
    EETR_SIZE_KEY("epochs", train.epochs, true);
    EETR_DOUBLE_KEY("learning_rate", train.learning_rate, true);
    EETR_DOUBLE_KEY("lambda_query_entity", train.weights.query_entity, true);
    EETR_DOUBLE_KEY("lambda_table_entity", train.weights.table_entity, true);
    EETR_DOUBLE_KEY("lambda_sparse_entity", train.weights.sparse_entity, true);
    EETR_DOUBLE_KEY("lambda_flops", train.weights.flops, true);
    EETR_SIZE_KEY("flops_warmup_steps", train.flops_warmup_steps, true);
    EETR_BOOL_KEY("use_type_embedding_query", train.flags.type_embedding_query, true);
    EETR_BOOL_KEY("use_type_embedding_table", train.flags.type_embedding_table, true);
    EETR_BOOL_KEY("use_score_query_entity", train.flags.score_query_entity, true);
    EETR_BOOL_KEY("use_score_table_entity", train.flags.score_table_entity, true);
    EETR_BOOL_KEY("use_score_sparse_entity", train.flags.score_sparse_entity, true);
    EETR_BOOL_KEY("inference_query_types", inference.query, true);
    EETR_BOOL_KEY("inference_table_types", inference.table, true);
    // Preset: `vanilla = true` drops type embeddings and every interaction term.
    t["vanilla"] = {[](RunConfig& c, const std::string& v) {
                      if (!parse_bool("vanilla", v)) return;
                      c.retriever.encoder.entity_types = false;
                      c.train.flags = TrainFlags::vanilla();
                      c.inference = {false, false};
                    },
                    [](const RunConfig& c) {
                      const auto& f = c.train.flags;
                      return format_bool(!c.retriever.encoder.entity_types && !f.type_embedding_query &&
                                         !f.type_embedding_table && !f.score_query_entity &&
                                         !f.score_table_entity && !f.score_sparse_entity);
                    },
                    false};

    EETR_STRING_KEY("tables", tables);
    EETR_STRING_KEY("queries", queries);
    EETR_STRING_KEY("qrels", qrels);
    EETR_STRING_KEY("annotations", annotations);
    EETR_STRING_KEY("gazetteer", gazetteer);
    EETR_STRING_KEY("checkpoint", checkpoint);
    EETR_STRING_KEY("index", index);
    EETR_STRING_KEY("run", run);
    EETR_STRING_KEY("output", output);
    EETR_STRING_KEY("run_tag", run_tag);
    EETR_STRING_KEY("sweep_weight", sweep_weight);
    EETR_SIZE_KEY("k", k, false);
    EETR_SIZE_KEY("min_freq", min_freq, false);
    EETR_DOUBLE_KEY("test_fraction", test_fraction, false);
    t["split_seed"] = {[](RunConfig& c, const std::string& v) { c.split_seed = parse_u64("split_seed", v); },
                       [](const RunConfig& c) { return std::to_string(c.split_seed); }, false};
    EETR_SIZE_KEY("seeds", seeds, false);
    t["sweep_grid"] = {[](RunConfig& c, const std::string& v) {
                         c.sweep_grid.clear();
                         std::stringstream ss(v);
                         std::string item;
                         while (std::getline(ss, item, ',')) c.sweep_grid.push_back(parse_double("sweep_grid", trim(item)));
                         if (c.sweep_grid.empty()) bad_value("sweep_grid", v);
                       },
                       [](const RunConfig& c) {
                         std::string out;
                         for (double d : c.sweep_grid) out += (out.empty() ? "" : ",") + format_double(d);
                         return out;
                       },
                       false};
    EETR_SIZE_KEY("synthetic_queries", synthetic.queries, false);
    EETR_SIZE_KEY("synthetic_topics", synthetic.topics, false);
    EETR_SIZE_KEY("synthetic_filler_rows", synthetic.filler_rows, false);
    t["synthetic_seed"] = {[](RunConfig& c, const std::string& v) { c.synthetic.seed = parse_u64("synthetic_seed", v); },
                           [](const RunConfig& c) { return std::to_string(c.synthetic.seed); }, false};
    return t;
  }();
  return table;
}

#undef EETR_SIZE_KEY
#undef EETR_DOUBLE_KEY
#undef EETR_BOOL_KEY
#undef EETR_STRING_KEY

}  // namespace config_detail

inline void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  const auto& table = config_detail::keys();
  auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second.set(cfg, value);
  cfg.sync();
}

inline std::string get_config_value(const RunConfig& cfg, const std::string& key) {
  const auto& table = config_detail::keys();
  auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second.get(cfg);
}

inline std::vector<std::string> config_keys(bool model_only = false) {
  std::vector<std::string> out;
  for (const auto& [name, key] : config_detail::keys()) {
    if (!model_only || key.model) out.push_back(name);
  }
  return out;
}

/// `key = value` lines; `#` starts a comment.
inline void apply_config_text(RunConfig& cfg, std::istream& in, const std::string& origin) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
    }
    try {
      set_config_value(cfg, trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

inline void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  apply_config_text(cfg, in, path);
}

/// Applies EETR_<KEY> variables (key upper-cased) for every known key.
inline void apply_environment(RunConfig& cfg,
                              const std::function<const char*(const char*)>& lookup = [](const char* n) {
                                return std::getenv(n);
                              }) {
  for (const auto& name : config_keys()) {
    std::string var = "EETR_";
    for (char c : name) var += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (const char* v = lookup(var.c_str())) set_config_value(cfg, name, v);
  }
}

/// Checks values that are independent of the corpus.
inline void validate_config(const RunConfig& cfg) {
  EncoderConfig enc = cfg.retriever.encoder;
  enc.vocab_size = 1;
  enc.validate();
  cfg.train.validate();
  if (cfg.k < 1) throw ConfigError("k must be >= 1");
  if (cfg.seeds < 1) throw ConfigError("seeds must be >= 1");
  if (cfg.min_freq < 1) throw ConfigError("min_freq must be >= 1");
  if (!(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0)) throw ConfigError("test_fraction must be in (0, 1)");
  parse_swept_weight(cfg.sweep_weight);
}

/// Fails with a config error naming the first required path that is unset.
inline void require_paths(const RunConfig& cfg, const std::vector<std::string>& names) {
  for (const auto& name : names) {
    if (get_config_value(cfg, name).empty()) throw ConfigError("missing required setting '" + name + "'");
  }
}

}  // namespace eetr
