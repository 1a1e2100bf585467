// eetr: corpus statistics, training, indexing, search and evaluation for entity-aware table retrieval.
#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>

#include "eetr/eetr.hpp"

using namespace eetr;

namespace {

/// Options shared by every subcommand; all of them map onto config keys.
struct Options {
  std::string config;
  std::map<std::string, std::string> flags;  // key -> value, for flags given on the command line
  std::vector<std::string> sets;             // key=value
};

void add_common(CLI::App& cmd, Options& opts) {
  cmd.add_option("--config", opts.config, "key = value configuration file");
  for (const char* key : {"tables", "queries", "qrels", "annotations", "gazetteer", "checkpoint", "index", "run",
                          "output", "k", "seed", "mode"}) {
    std::string help = std::string("sets config key '") + key + "'";
    cmd.add_option_function<std::string>(std::string("--") + key,
                                         [&opts, key](const std::string& v) { opts.flags[key] = v; }, help);
  }
  cmd.add_option("--set", opts.sets, "override any config key, as key=value (repeatable)");
}

/// Defaults, then the config file, then EETR_* variables, then flags.
RunConfig resolve(const Options& opts) {
  RunConfig cfg;
  if (!opts.config.empty()) apply_config_file(cfg, opts.config);
  apply_environment(cfg);
  for (const auto& [key, value] : opts.flags) set_config_value(cfg, key, value);
  for (const auto& kv : opts.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  validate_config(cfg);
  return cfg;
}

/// Fails before any work when a required path is unset or missing on disk.
void require_files(const RunConfig& cfg, const std::vector<std::string>& keys) {
  require_paths(cfg, keys);
  for (const auto& key : keys) {
    const std::string path = get_config_value(cfg, key);
    if (!std::ifstream(path)) throw InputError("cannot open " + key + " file '" + path + "'");
  }
}

void check_optional_files(const RunConfig& cfg) {
  for (const char* key : {"annotations", "gazetteer"}) {
    const std::string path = get_config_value(cfg, key);
    if (!path.empty() && !std::ifstream(path)) throw InputError("cannot open " + std::string(key) + " file '" + path + "'");
  }
}

Annotator make_annotator(const RunConfig& cfg) {
  check_optional_files(cfg);
  const EntityTypeSet types;
  Gazetteer gazetteer = cfg.gazetteer.empty() ? Gazetteer() : Gazetteer::load(cfg.gazetteer, types);
  Recognizer recognizer(types, std::move(gazetteer));
  if (cfg.annotations.empty()) return Annotator(std::move(recognizer));
  return Annotator(std::move(recognizer), AnnotationStore::load(cfg.annotations, types));
}

/// Writes to the `output` path when set, otherwise to stdout.
class Sink {
 public:
  explicit Sink(const std::string& path) {
    if (!path.empty()) file_ = std::make_unique<std::ofstream>(detail::open_output(path));
  }
  std::ostream& out() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

Dataset load_dataset(const RunConfig& cfg) {
  require_files(cfg, {"tables", "queries", "qrels"});
  const Annotator annotator = make_annotator(cfg);
  return prepare_dataset(load_corpus(cfg.tables, cfg.queries, cfg.qrels), annotator, cfg.retriever.encoder.max_len,
                         std::nullopt, cfg.min_freq);
}

std::vector<std::uint64_t> seed_list(const RunConfig& cfg) {
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < cfg.seeds; ++i) seeds.push_back(cfg.train.seed + i);
  return seeds;
}

// ---------------------------------------------------------------- commands

void cmd_generate(const RunConfig& cfg) {
  require_paths(cfg, {"output"});
  std::filesystem::create_directories(cfg.output);
  const auto syn = generate_synthetic_corpus(cfg.synthetic);
  const std::filesystem::path dir(cfg.output);
  write_corpus(syn.corpus, (dir / "tables.jsonl").string(), (dir / "queries.jsonl").string(),
               (dir / "qrels.txt").string());
  auto gaz = detail::open_output((dir / "gazetteer.tsv").string());
  for (const auto& [type, phrase] : syn.gazetteer) gaz << type << '\t' << phrase << '\n';
  std::cerr << "wrote " << syn.corpus.tables.size() << " tables and " << syn.corpus.queries.size() << " queries to "
            << cfg.output << '\n';
}

void cmd_stats(const RunConfig& cfg) {
  require_files(cfg, {"tables", "queries", "qrels"});
  const Annotator annotator = make_annotator(cfg);
  const Corpus corpus = load_corpus(cfg.tables, cfg.queries, cfg.qrels);
  std::vector<AnnotatedText> queries, tables;
  std::map<std::string, std::string> table_texts;
  for (const auto& q : corpus.queries) {
    queries.push_back({q.id, q.text, annotator.spans(TextKind::query, q.id, q.text)});
  }
  for (const auto& t : corpus.tables) {
    const std::string text = serialize_table(t);
    tables.push_back({t.id, text, annotator.spans(TextKind::table, t.id, text)});
    table_texts[t.id] = text;
  }
  Sink sink(cfg.output);
  std::ostream& out = sink.out();
  write_coverage(out, "query", coverage_stats(queries));
  write_coverage(out, "table", coverage_stats(tables));
  const Bm25Index bm25 = build_bm25(corpus.tables);
  MatchStudyConfig study;
  study.seed = cfg.train.seed;
  write_match_rates(out, match_rate_study(queries, table_texts, corpus.qrels, bm25_pool(bm25), study));
  const EntityTypeSet types;
  for (const auto& [label, texts] : {std::pair{"query", &queries}, std::pair{"table", &tables}}) {
    bool any = false;
    for (const auto& t : *texts) any = any || !t.spans.empty();
    if (any) write_type_distribution(out, label, type_distribution(*texts), types);
  }
}

void cmd_train(const RunConfig& cfg) {
  require_paths(cfg, {"checkpoint"});
  const Dataset d = load_dataset(cfg);
  RetrieverConfig rc = cfg.retriever;
  rc.encoder.vocab_size = d.vocab.size();
  Retriever model = Retriever::create(rc);
  std::size_t skipped = 0;
  const auto pairs = training_pairs(d.queries, d.tables, d.corpus.qrels, &skipped);
  if (skipped) std::cerr << "skipped " << skipped << " queries without a relevant table\n";
  const TrainResult result = train(model, d.queries, d.tables, pairs, cfg.train, &std::cerr);
  save_checkpoint(cfg.checkpoint, cfg, d.vocab, model, cfg.train.epochs);
  auto trace = detail::open_output(cfg.checkpoint + ".trace");
  char buf[40];
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%.17g", result.epoch_loss[e]);
    trace << "epoch=" << e + 1 << " loss=" << buf << '\n';
  }
}

Checkpoint load_model(const RunConfig& cfg) {
  require_files(cfg, {"checkpoint"});
  return load_checkpoint(cfg.checkpoint);
}

void cmd_index(const RunConfig& cfg) {
  require_paths(cfg, {"index"});
  const Checkpoint ckpt = load_model(cfg);
  require_files(cfg, {"tables"});
  Corpus corpus;
  corpus.tables = load_tables(cfg.tables);
  const Dataset d = prepare_dataset(std::move(corpus), make_annotator(cfg), ckpt.config.retriever.encoder.max_len,
                                    ckpt.vocab);
  write_index(cfg.index, TableIndex(ckpt.model, d.tables, ckpt.config.inference.table));
  std::cerr << "indexed " << d.tables.size() << " tables (" << to_string(ckpt.model.config().mode) << ")\n";
}

void cmd_search(const RunConfig& cfg) {
  require_paths(cfg, {"run"});
  const Checkpoint ckpt = load_model(cfg);
  require_files(cfg, {"index", "queries"});
  const TableIndex index = read_index(cfg.index);
  if (index.mode() != ckpt.model.config().mode) {
    throw ConfigError("index mode " + to_string(index.mode()) + " does not match checkpoint mode " +
                      to_string(ckpt.model.config().mode));
  }
  Corpus corpus;
  corpus.queries = load_queries(cfg.queries);
  const Dataset d = prepare_dataset(std::move(corpus), make_annotator(cfg), ckpt.config.retriever.encoder.max_len,
                                    ckpt.vocab);
  auto out = detail::open_output(cfg.run);
  write_run(out, run_queries(ckpt.model, index, d.queries, ckpt.config.inference.query, cfg.k), cfg.run_tag);
}

void cmd_eval(const RunConfig& cfg) {
  require_files(cfg, {"qrels", "run"});
  Sink sink(cfg.output);
  write_metrics(sink.out(), evaluate_run(read_run(cfg.run), load_qrels(cfg.qrels)), cfg.run_tag);
}

void cmd_ablate(const RunConfig& cfg) {
  const Dataset d = load_dataset(cfg);
  const Split split = split_queries(d, cfg.test_fraction, cfg.split_seed);
  const auto rows = ablate(d, split, cfg.experiment(), seed_list(cfg), &std::cerr);
  Sink sink(cfg.output);
  write_ablation(sink.out(), rows);
}

void cmd_sweep(const RunConfig& cfg) {
  const Dataset d = load_dataset(cfg);
  const Split split = split_queries(d, cfg.test_fraction, cfg.split_seed);
  const auto points =
      sweep_lambda(d, split, cfg.experiment(), parse_swept_weight(cfg.sweep_weight), cfg.sweep_grid, &std::cerr);
  Sink sink(cfg.output);
  write_sweep(sink.out(), points);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Entity-aware table retrieval: stats, train, index, search, eval, ablate, sweep"};
  app.require_subcommand(1);
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"generate", "write a synthetic corpus and its gazetteer to the --output directory"},
      {"stats", "entity coverage, match-rate study and type distribution"},
      {"train", "train a retriever and write a checkpoint plus a loss trace"},
      {"index", "encode all tables with a checkpoint and write an index file"},
      {"search", "rank tables for every query and write a TREC-style run"},
      {"eval", "Recall@{1,10,50} and NDCG@{3,5} of a run"},
      {"ablate", "component ablation over several seeds"},
      {"sweep", "retrain while varying one interaction weight"}};
  std::map<std::string, Options> options;
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    subs[name] = app.add_subcommand(name, help);
    add_common(*subs[name], options[name]);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    for (const auto& [name, sub] : subs) {
      if (!sub->parsed()) continue;
      const RunConfig cfg = resolve(options[name]);
      if (name == "generate") cmd_generate(cfg);
      else if (name == "stats") cmd_stats(cfg);
      else if (name == "train") cmd_train(cfg);
      else if (name == "index") cmd_index(cfg);
      else if (name == "search") cmd_search(cfg);
      else if (name == "eval") cmd_eval(cfg);
      else if (name == "ablate") cmd_ablate(cfg);
      else if (name == "sweep") cmd_sweep(cfg);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
