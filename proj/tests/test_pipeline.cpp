#include <gtest/gtest.h>

#include <sstream>

#include "test_support.hpp"

using namespace eetr;
using eetr::testing::synthetic_dataset;

namespace {

ExperimentSpec tiny_spec(RetrieverMode mode) {
  ExperimentSpec s;
  s.label = "full";
  s.retriever.encoder.hidden_dim = 16;
  s.retriever.encoder.num_layers = 1;
  s.retriever.encoder.num_heads = 2;
  s.retriever.encoder.max_len = 48;
  s.retriever.encoder.position_embeddings = false;
  s.retriever.encoder.init_stddev = 1.0;
  s.train.mode = mode;
  s.train.batch_size = 8;
  s.train.epochs = 2;
  s.train.learning_rate = 1e-3;
  s.train.seed = 3;
  s.retriever.encoder.seed = 3;
  return s;
}

class PipelineTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    data_ = new Dataset(synthetic_dataset(40, 12, 48));
    split_ = new Split(split_queries(*data_, 0.3, 1));
  }
  static void TearDownTestSuite() {
    delete data_;
    delete split_;
  }
  static const Dataset& data() { return *data_; }
  static const Split& split() { return *split_; }

 private:
  static Dataset* data_;
  static Split* split_;
};

Dataset* PipelineTest::data_ = nullptr;
Split* PipelineTest::split_ = nullptr;

}  // namespace

TEST_F(PipelineTest, DatasetIsTokenizedAndAnnotated) {
  EXPECT_EQ(data().queries.size(), 40u);
  EXPECT_EQ(data().tables.size(), 40u);
  std::size_t typed_queries = 0;
  for (const auto& q : data().queries) {
    EXPECT_EQ(q.position_types.size(), q.seq.size());
    EXPECT_LE(q.seq.size(), 48u);
    bool any = false;
    for (auto t : q.position_types) any = any || t != kNoType;
    typed_queries += any ? 1 : 0;
  }
  EXPECT_EQ(typed_queries, 40u);  // every query names a person and a year
}

TEST_F(PipelineTest, SplitIsDisjointSeededAndSized) {
  const Split& s = split();
  EXPECT_EQ(s.test.size(), 12u);
  EXPECT_EQ(s.train.size(), 28u);
  for (const auto& id : s.test) EXPECT_EQ(s.train.count(id), 0u);
  const Split again = split_queries(data(), 0.3, 1);
  EXPECT_EQ(again.test, s.test);
  EXPECT_NE(split_queries(data(), 0.3, 2).test, s.test);
  EXPECT_THROW(split_queries(data(), 0.0, 1), ConfigError);
}

TEST_F(PipelineTest, ExperimentRunsAndIsDeterministic) {
  for (RetrieverMode mode : {RetrieverMode::dense, RetrieverMode::sparse}) {
    const auto a = run_experiment(data(), split(), tiny_spec(mode));
    const auto b = run_experiment(data(), split(), tiny_spec(mode));
    EXPECT_EQ(a.metrics.mean, b.metrics.mean);
    EXPECT_EQ(a.training.epoch_loss, b.training.epoch_loss);
    EXPECT_EQ(a.metrics.per_query.at("recall@1").size(), split().test.size());
    for (const auto& [name, v] : a.metrics.mean) {
      EXPECT_GE(v, 0.0) << name;
      EXPECT_LE(v, 1.0) << name;
    }
    EXPECT_LE(a.metrics["recall@1"], a.metrics["recall@10"]);
    EXPECT_LE(a.metrics["recall@10"], a.metrics["recall@50"]);
    if (mode == RetrieverMode::sparse) {
      EXPECT_GT(a.density, 0.0);
      EXPECT_LE(a.density, 1.0);
    }
  }
}

TEST_F(PipelineTest, ZeroWeightsWithoutTypesMatchVanilla) {
  for (RetrieverMode mode : {RetrieverMode::dense, RetrieverMode::sparse}) {
    ExperimentSpec zeroed = tiny_spec(mode);
    zeroed.train.weights.query_entity = zeroed.train.weights.table_entity = zeroed.train.weights.sparse_entity = 0.0;
    zeroed.train.flags.type_embedding_query = zeroed.train.flags.type_embedding_table = false;
    zeroed.inference = {false, false};
    const auto a = run_experiment(data(), split(), zeroed);
    const auto b = run_experiment(data(), split(), vanilla_of(tiny_spec(mode)));
    EXPECT_EQ(a.metrics.mean, b.metrics.mean) << to_string(mode);
    EXPECT_EQ(a.training.epoch_loss, b.training.epoch_loss) << to_string(mode);
  }
}

TEST_F(PipelineTest, AblationRowsInOrder) {
  std::ostringstream log;
  const auto rows = ablate(data(), split(), tiny_spec(RetrieverMode::dense), {1}, &log);
  std::vector<std::string> labels;
  for (const auto& r : rows) labels.push_back(r.label);
  EXPECT_EQ(labels, (std::vector<std::string>{"full", "w/o score_q_e", "w/o score_t_e", "w/o type emb",
                                              "vanilla", "inference: with type emb",
                                              "inference: w/o query type emb", "inference: w/o both"}));
  // The full model evaluated with types on both sides is the full row.
  EXPECT_EQ(rows[0].mean, rows[5].mean);
  std::ostringstream table;
  write_ablation(table, rows);
  EXPECT_NE(table.str().find("vanilla"), std::string::npos);

  const auto sparse = ablation_variants(tiny_spec(RetrieverMode::sparse));
  ASSERT_EQ(sparse.size(), 4u);
  EXPECT_EQ(sparse[1].label, "w/o score_sps_e");
}

TEST_F(PipelineTest, SweepPointsMatchStandaloneRuns) {
  const ExperimentSpec base = tiny_spec(RetrieverMode::dense);
  const auto points = sweep_lambda(data(), split(), base, SweptWeight::table_entity, {0.0, 0.5});
  ASSERT_EQ(points.size(), 2u);
  ExperimentSpec half = base;
  half.train.weights.table_entity = 0.5;
  EXPECT_EQ(points[1].metrics.mean, run_experiment(data(), split(), half).metrics.mean);
  EXPECT_EQ(points[0].lambda, 0.0);
  std::ostringstream out;
  write_sweep(out, points);
  EXPECT_FALSE(out.str().empty());
  EXPECT_THROW(parse_swept_weight("flops"), ConfigError);
}

TEST_F(PipelineTest, SparseCosineIndexMatchesPairwiseScores) {
  ExperimentSpec s = tiny_spec(RetrieverMode::sparse);
  s.retriever.similarity = Similarity::cosine;
  const Retriever model = train_model(data(), split(), s);
  const TableIndex index(model, data().tables, true);
  const auto& q = data().queries[0];
  const auto hits = index.search(model, q, true, data().tables.size());
  for (const auto& h : hits) {
    const auto& t = *std::find_if(data().tables.begin(), data().tables.end(),
                                  [&](const auto& x) { return x.id == h.table_id; });
    EXPECT_NEAR(h.score, model.inference_score(q, t), 1e-12);
  }
}

TEST_F(PipelineTest, Bm25FindsTheTwinTable) {
  const auto index = build_bm25(data().corpus.tables);
  RunResult run;
  for (const auto& q : data().corpus.queries) run[q.id] = index.search(bm25_terms(q.text), 100);
  EXPECT_GT(evaluate_run(run, data().corpus.qrels)["recall@10"], 0.9);
}
