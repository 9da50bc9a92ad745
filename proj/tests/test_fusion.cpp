#include <doctest.h>

#include <cmath>

#include "tram/common.hpp"
#include "tram/corpus.hpp"
#include "tram/datastore.hpp"
#include "tram/fusion.hpp"
#include "tram/rng.hpp"
#include "tram/training.hpp"

using namespace tram;

namespace {

RetrievalTriple triple(int value, double sim) { return {0, value, sim, {}}; }

std::vector<double> random_distribution(Rng& rng, std::size_t n) {
  std::vector<double> p(n);
  double sum = 0;
  for (auto& x : p) {
    x = rng.uniform() + 1e-6;
    sum += x;
  }
  for (auto& x : p) x /= sum;
  return p;
}

}  // namespace

TEST_CASE("retrieval_distribution single and collapsed cases") {
  auto p = retrieval_distribution({triple(4, 0.9)}, 10.0, 8);
  CHECK(p[4] == 1.0);
  for (std::size_t v = 0; v < 8; ++v)
    if (v != 4) CHECK(p[v] == 0.0);

  // all triples share one value: indicator collapse
  auto q = retrieval_distribution({triple(5, 0.9), triple(5, 0.2), triple(5, -0.5)}, 3.0, 8);
  CHECK(q[5] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("retrieval_distribution three-triple oracle") {
  // independent oracle: direct exponential arithmetic
  const double t = 10.0;
  auto p = retrieval_distribution({triple(4, 0.9), triple(5, 0.8), triple(4, 0.7)}, t, 8);
  const double e9 = std::exp(0.9 * t), e8 = std::exp(0.8 * t), e7 = std::exp(0.7 * t);
  CHECK(p[4] == doctest::Approx((e9 + e7) / (e9 + e8 + e7)).epsilon(1e-9));
  CHECK(p[5] == doctest::Approx(e8 / (e9 + e8 + e7)).epsilon(1e-9));
  CHECK(p[4] == doctest::Approx(0.7553).epsilon(1e-3));
  CHECK(p[5] == doctest::Approx(0.2447).epsilon(1e-3));
  CHECK_THROWS_AS(retrieval_distribution({}, 10.0, 8), TramError);
}

TEST_CASE("retrieval_distribution depends only on the triple multiset") {
  std::vector<RetrievalTriple> a{triple(4, 0.9), triple(5, 0.8), triple(6, 0.1), triple(4, 0.3)};
  std::vector<RetrievalTriple> b{a[2], a[0], a[3], a[1]};
  auto pa = retrieval_distribution(a, 7.0, 10);
  auto pb = retrieval_distribution(b, 7.0, 10);
  for (std::size_t v = 0; v < 10; ++v) CHECK(pa[v] == doctest::Approx(pb[v]).epsilon(1e-12));
}

TEST_CASE("temperature limits") {
  std::vector<RetrievalTriple> triples{triple(4, 0.9), triple(5, 0.5), triple(5, 0.4)};
  // T -> 0: frequency-weighted proportions (counts of each value)
  auto low = retrieval_distribution(triples, 1e-9, 8);
  CHECK(low[4] == doctest::Approx(1.0 / 3).epsilon(1e-6));
  CHECK(low[5] == doctest::Approx(2.0 / 3).epsilon(1e-6));
  // T -> inf: all mass on the max-alpha value
  auto high = retrieval_distribution(triples, 1e4, 8);
  CHECK(high[4] == doctest::Approx(1.0).epsilon(1e-9));
  // monotone in between
  double prev = low[4];
  for (double t : {1.0, 5.0, 20.0, 100.0}) {
    double cur = retrieval_distribution(triples, t, 8)[4];
    CHECK(cur >= prev - 1e-12);
    prev = cur;
  }
}

TEST_CASE("fuse_two endpoints are exact") {
  Rng rng(5);
  auto pm = random_distribution(rng, 12);
  auto pr = random_distribution(rng, 12);
  CHECK(fuse_two(pm, pr, 0.0) == pm);  // bitwise
  CHECK(fuse_two(pm, pr, 1.0) == pr);
  auto mid = fuse_two({0.8, 0.2}, {0.0, 1.0}, 0.5);
  CHECK(mid[0] == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(mid[1] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK_THROWS_AS(fuse_two(pm, pr, 1.5), TramError);
  CHECK_THROWS_AS(fuse_two(pm, pr, -0.1), TramError);
}

TEST_CASE("fuse_three examples and reduction") {
  std::vector<double> pm{1, 0}, pr{0, 1}, ps{0, 1};
  CHECK(fuse_three(pm, pr, ps, 0.7, 0.0, 0.0) == pm);
  auto only_s = fuse_three(pm, pr, ps, 1.0, 0.0, 1.0);
  CHECK(only_s[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(only_s[1] == doctest::Approx(1.0).epsilon(1e-12));

  auto hand = fuse_three(pm, pr, ps, 0.5, 0.4, 0.2);
  CHECK(hand[0] == doctest::Approx(4.0 / 9).epsilon(1e-12));
  CHECK(hand[1] == doctest::Approx(5.0 / 9).epsilon(1e-12));

  CHECK_THROWS_AS(fuse_three(pm, pr, ps, 0.5, 0.7, 0.6), TramError);
  CHECK_THROWS_AS(fuse_three(pm, pr, ps, 0.0, 0.0, 1.0), TramError);  // zero total mass

  // Sim = 0 reduces to fuse_two with lambda = l1 / (1 - l2)
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    auto a = random_distribution(rng, 9);
    auto b = random_distribution(rng, 9);
    auto c = random_distribution(rng, 9);
    double l2 = rng.uniform() * 0.8;
    double l1 = rng.uniform() * (1.0 - l2);
    auto three = fuse_three(a, b, c, 0.0, l1, l2);
    auto two = fuse_two(a, b, l1 / (1.0 - l2));
    for (std::size_t v = 0; v < 9; ++v) CHECK(std::abs(three[v] - two[v]) <= 1e-12);
  }
}

TEST_CASE("fused outputs are valid distributions") {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    auto pm = random_distribution(rng, 11);
    auto pr = random_distribution(rng, 11);
    auto ps = random_distribution(rng, 11);
    double l = rng.uniform();
    auto two = fuse_two(pm, pr, l);
    double sum2 = 0;
    for (double v : two) {
      CHECK(v >= 0.0);
      sum2 += v;
    }
    CHECK(sum2 == doctest::Approx(1.0).epsilon(1e-6));
    double l2 = rng.uniform() * 0.9;
    double l1 = rng.uniform() * (1.0 - l2);
    auto three = fuse_three(pm, pr, ps, rng.uniform(), l1, l2);
    double sum3 = 0;
    for (double v : three) {
      CHECK(v >= 0.0);
      sum3 += v;
    }
    CHECK(sum3 == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("retrieve_most_similar boundary behavior") {
  std::vector<std::vector<double>> embeddings{{1, 0}, {0, 1}, {-1, 0}};
  std::vector<std::string> ids{"a", "b", "c"};

  auto dup = retrieve_most_similar(embeddings, ids, {1, 0}, "query");
  CHECK(dup.id == "a");
  CHECK(dup.similarity == doctest::Approx(1.0));

  // self excluded
  auto excl = retrieve_most_similar(embeddings, ids, {1, 0}, "a");
  CHECK(excl.id == "b");

  // negative best similarity clamps to zero weight
  std::vector<std::vector<double>> neg{{-1, 0}, {-0.9, -0.1}};
  auto clamped = retrieve_most_similar(neg, {"x", "y"}, {1, 0}, "none");
  CHECK(clamped.similarity < 0.0);
  CHECK(clamped.clamped_similarity == 0.0);
}

TEST_CASE("retrieve_most_similar rejects self-only corpus") {
  std::vector<std::vector<double>> one{{1, 0}};
  CHECK_THROWS_AS(retrieve_most_similar(one, {"self"}, {1, 0}, "self"), TramError);
}

TEST_CASE("code_embedding properties") {
  Tensor states = Tensor::matrix(3, 4, {1, 2, 0, 1, 3, 0, 1, 1, 2, 1, 2, 0});
  auto emb = code_embedding_from_states(states);
  CHECK(norm2(emb) == doctest::Approx(1.0).epsilon(1e-12));
  auto again = code_embedding_from_states(states);
  CHECK(emb == again);

  // p = 1 degenerates to the normalized single state
  Tensor single = Tensor::matrix(1, 4, {3, 0, 4, 0});
  auto one = code_embedding_from_states(single);
  CHECK(one[0] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(one[2] == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("generate_tram lambda zero matches base decoding") {
  auto corpus = gen_toy_samples(13, 30, 6, 6);
  ModelConfig cfg;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.n_enc_layers = 1;
  cfg.n_dec_layers = 1;
  cfg.n_gat_layers = 1;
  cfg.ffn_dim = 32;
  cfg.k_clip = 4;
  cfg.dropout = 0.0;
  TrainConfig tc;
  tc.max_epochs = 2;
  tc.batch_size = 8;
  tc.lr = 1e-3;
  ModelBundle bundle = train_model(corpus.train, corpus.val, cfg, tc);
  Datastore ds = build_datastore(bundle, corpus.train);

  FusionConfig fusion;
  fusion.lambda = 0.0;
  for (int beam : {1, 3}) {
    DecodeOptions decode{beam, 16, true};
    for (const auto& sample : corpus.test) {
      auto fused = generate_tram(bundle, sample, ds, fusion, decode);
      auto base = generate_base(bundle, sample, decode);
      CHECK(fused.token_ids == base.token_ids);
      // trace still carries retrieval info with probabilities summing to 1
      for (const auto& step : fused.trace) {
        double sum = 0;
        for (const auto& [tok, p] : step.retrieved) sum += p;
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(step.retrieval_mass == 0.0);
      }
    }
  }
}

TEST_CASE("generate_tram dimension mismatch rejected") {
  auto corpus = gen_toy_samples(14, 10, 2, 2);
  ModelConfig cfg;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.n_enc_layers = 1;
  cfg.n_dec_layers = 1;
  cfg.n_gat_layers = 1;
  cfg.ffn_dim = 32;
  cfg.dropout = 0.0;
  TrainConfig tc;
  tc.max_epochs = 1;
  tc.batch_size = 8;
  ModelBundle bundle = train_model(corpus.train, corpus.val, cfg, tc);
  Datastore wrong(7);
  Rng rng(3);
  std::vector<double> v(7);
  for (auto& x : v) x = rng.normal();
  auto u = l2_normalize(v);
  wrong.add(std::vector<float>(u.begin(), u.end()), 4, "x", 0);
  FusionConfig fusion;
  DecodeOptions decode{1, 8, false};
  CHECK_THROWS_AS(generate_tram(bundle, corpus.test[0], wrong, fusion, decode), TramError);
}

TEST_CASE("trace jsonl format") {
  Vocabulary v;
  int hello = v.add("hello");
  int world = v.add("world");
  StepTrace t;
  t.chosen = hello;
  t.retrieved = {{hello, 0.9}, {world, 0.1}};
  t.model_mass = 0.25;
  t.retrieval_mass = 0.45;
  std::ostringstream out;
  append_trace(out, {t}, v);
  CHECK(out.str() ==
        "{\"chosen\":\"hello\",\"model_mass\":0.25,\"retrieval_mass\":0.45,"
        "\"retrieved\":[[\"hello\",0.9],[\"world\",0.1]],\"step\":1}\n");
}

TEST_CASE("sentence retrieval equals an independent full scan") {
  Rng rng(404);
  std::vector<std::vector<double>> embeddings;
  std::vector<std::string> ids;
  for (int i = 0; i < 60; ++i) {
    std::vector<double> v(8);
    for (auto& x : v) x = rng.normal();
    embeddings.push_back(l2_normalize(v));
    ids.push_back("s" + std::to_string(i));
  }
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<double> q(8);
    for (auto& x : q) x = rng.normal();
    q = l2_normalize(q);
    std::string exclude = "s" + std::to_string(trial);
    auto got = retrieve_most_similar(embeddings, ids, q, exclude);
    // independent scan
    double best = -2.0;
    std::size_t best_i = 0;
    for (std::size_t i = 0; i < embeddings.size(); ++i) {
      if (ids[i] == exclude) continue;
      double s = dot(q, embeddings[i]);
      if (s > best) {
        best = s;
        best_i = i;
      }
    }
    CHECK(got.corpus_index == best_i);
    CHECK(got.similarity == best);
  }
}
