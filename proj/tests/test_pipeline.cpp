#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "tram/checkpoint.hpp"
#include "tram/common.hpp"
#include "tram/corpus.hpp"
#include "tram/datastore.hpp"
#include "tram/experiments.hpp"
#include "tram/fusion.hpp"
#include "tram/training.hpp"

using namespace tram;
namespace fs = std::filesystem;

namespace {

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.d_model = 32;
  cfg.n_heads = 2;
  cfg.n_enc_layers = 1;
  cfg.n_dec_layers = 1;
  cfg.n_gat_layers = 1;
  cfg.ffn_dim = 64;
  cfg.k_clip = 8;
  cfg.dropout = 0.0;
  cfg.max_summary_len = 24;
  return cfg;
}

TrainConfig fast_train(int epochs) {
  TrainConfig tc;
  tc.batch_size = 16;
  tc.lr = 2e-3;
  tc.max_epochs = epochs;
  tc.patience = epochs;
  tc.seed = 5;
  return tc;
}

struct Fixture {
  ToyCorpus corpus;
  ModelBundle bundle;
  Datastore ds;
  Fixture() : corpus(gen_toy_samples(42, 24, 8, 8)) {
    bundle = train_model(corpus.train, corpus.val, small_config(), fast_train(25));
    ds = build_datastore(bundle, corpus.train);
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

fs::path temp_file(const char* name) {
  fs::path dir = fs::temp_directory_path() / "tram_tests";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("training determinism and early-stop bookkeeping") {
  auto corpus = gen_toy_samples(9, 12, 4, 4);
  TrainLog log_a, log_b;
  ModelConfig cfg = small_config();
  TrainConfig tc = fast_train(6);
  ModelBundle a = train_model(corpus.train, corpus.val, cfg, tc, &log_a);
  ModelBundle b = train_model(corpus.train, corpus.val, cfg, tc, &log_b);
  REQUIRE(log_a.epochs.size() == log_b.epochs.size());
  CHECK(log_a.epochs.back().train_loss == log_b.epochs.back().train_loss);
  for (std::size_t i = 0; i < a.model->params().size(); ++i)
    CHECK(a.model->params().at(i).value.data() == b.model->params().at(i).value.data());
  CHECK(a.model->is_trained());

  // patience exhaustion: best epoch strictly before the last
  TrainConfig stopper = fast_train(40);
  stopper.patience = 3;
  TrainLog log_c;
  train_model(corpus.train, corpus.val, cfg, stopper, &log_c);
  if (log_c.stopped_early) CHECK(log_c.best_epoch < log_c.epochs.back().epoch);
}

TEST_CASE("loss best-so-far is non-increasing across epochs") {
  auto corpus = gen_toy_samples(10, 16, 4, 4);
  TrainLog log;
  train_model(corpus.train, corpus.val, small_config(), fast_train(15), &log);
  double best = log.epochs.front().train_loss;
  for (const auto& e : log.epochs) {
    best = std::min(best, e.train_loss);
    CHECK(best <= log.epochs.front().train_loss + 1e-12);
  }
  // and the overall trend reaches a lower loss than it started with
  CHECK(best < log.epochs.front().train_loss);
}

TEST_CASE("checkpoint round trip is exact") {
  Fixture& f = fixture();
  fs::path path = temp_file("model.ckpt");
  save_checkpoint(f.bundle, path);
  ModelBundle loaded = load_checkpoint(path);
  CHECK(loaded.config.d_model == f.bundle.config.d_model);
  CHECK(loaded.code_vocab == f.bundle.code_vocab);
  CHECK(loaded.node_vocab == f.bundle.node_vocab);
  CHECK(loaded.summary_vocab == f.bundle.summary_vocab);
  CHECK(loaded.model->is_trained());
  ParameterSet& pa = f.bundle.model->params();
  ParameterSet& pb = loaded.model->params();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa.at(i).name == pb.at(i).name);
    CHECK(pa.at(i).value.data() == pb.at(i).value.data());  // bit exact
  }
  // identical decodes through the loaded model
  EncodedSample enc_sample = encode_sample(f.bundle, f.corpus.test[0]);
  EncoderOutputs enc_a = f.bundle.model->encode(enc_sample);
  EncoderOutputs enc_b = loaded.model->encode(enc_sample);
  CHECK(enc_a.code_states.data() == enc_b.code_states.data());

  // corrupted magic rejected
  {
    std::fstream file(path, std::ios::in | std::ios::out | std::ios::binary);
    file.write("XXXXXXXX", 8);
  }
  CHECK_THROWS_AS(static_cast<void>(load_checkpoint(path)), TramError);
}

TEST_CASE("datastore counts, determinism, ordering") {
  Fixture& f = fixture();
  std::size_t expected = 0;
  for (const auto& s : f.corpus.train) expected += s.summary_tokens.size() + 1;  // EOS included
  CHECK(f.ds.size() == expected);
  CHECK(f.ds.key_dim() == 3 * f.bundle.config.d_model);

  // rebuild gives identical bytes
  Datastore again = build_datastore(f.bundle, f.corpus.train);
  fs::path pa = temp_file("ds_a.bin"), pb = temp_file("ds_b.bin");
  save_datastore(f.ds, pa);
  save_datastore(again, pb);
  std::ifstream ia(pa, std::ios::binary), ib(pb, std::ios::binary);
  std::string ba((std::istreambuf_iterator<char>(ia)), std::istreambuf_iterator<char>());
  std::string bb((std::istreambuf_iterator<char>(ib)), std::istreambuf_iterator<char>());
  CHECK(ba == bb);

  // entries ordered by (sample id, step)
  for (std::size_t i = 1; i < f.ds.size(); ++i) {
    auto key_prev = std::make_pair(f.ds.sample_id(i - 1), f.ds.step(i - 1));
    auto key_cur = std::make_pair(f.ds.sample_id(i), f.ds.step(i));
    CHECK(key_prev < key_cur);
  }

  // untrained model rejected
  ModelBundle fresh;
  fresh.config = f.bundle.config;
  fresh.code_vocab = f.bundle.code_vocab;
  fresh.node_vocab = f.bundle.node_vocab;
  fresh.summary_vocab = f.bundle.summary_vocab;
  fresh.model = std::make_unique<TramModel>(fresh.config, fresh.code_vocab.size(),
                                            fresh.node_vocab.size(),
                                            fresh.summary_vocab.size(), 1);
  CHECK_THROWS_AS(build_datastore(fresh, f.corpus.train), TramError);
}

TEST_CASE("every stored key has unit norm and retrieves itself at rank 1") {
  Fixture& f = fixture();
  for (std::size_t i = 0; i < f.ds.size(); i += 7) {
    auto key = f.ds.key(i);
    double norm_sq = 0;
    for (float v : key) norm_sq += static_cast<double>(v) * static_cast<double>(v);
    CHECK(std::abs(std::sqrt(norm_sq) - 1.0) <= 1e-6);
    std::vector<double> query(key.begin(), key.end());
    auto top = f.ds.query_topk(query, 1);
    CHECK(top[0].entry_index == i);
    CHECK(top[0].similarity == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("teacher-forced self-retrieval hits the stored entry") {
  // the query built at a training position must be the stored key
  Fixture& f = fixture();
  const CodeSample& sample = f.corpus.train[3];
  EncodedSample enc = encode_sample(f.bundle, sample);
  ForcedPass pass = f.bundle.model->forced_pass(enc);
  for (std::size_t t = 0; t < enc.summary_ids.size() + 1; ++t) {
    auto h = weighted_context(pass.attn_code.row(t), pass.code_states);
    auto r = weighted_context(pass.attn_node.row(t), pass.ast_states);
    auto query = make_key(h, r, pass.states.row(t));
    auto top = f.ds.query_topk(query, 1);
    CHECK(f.ds.sample_id(top[0].entry_index) == sample.id);
    CHECK(f.ds.step(top[0].entry_index) == static_cast<int>(t));
    CHECK(top[0].similarity == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("sweep lambda zero row reproduces base scores bit-exactly") {
  Fixture& f = fixture();
  EvalOptions base;
  base.beam = 1;
  base.max_len = 20;
  EvalResult base_result = evaluate_split(f.bundle, f.corpus.test, base);

  auto rows = run_sweep(f.bundle, f.ds, f.corpus.test, {0.0, 0.5}, {10.0}, base);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].lambda == 0.0);
  CHECK(rows[0].bleu == base_result.metrics.bleu);
  CHECK(rows[0].rouge_l == base_result.metrics.rouge_l);
  CHECK(rows[0].meteor_s == base_result.metrics.meteor_s);

  // singleton grid gives a single row
  auto single = run_sweep(f.bundle, f.ds, f.corpus.test, {0.25}, {5.0}, base);
  CHECK(single.size() == 1);
}

TEST_CASE("noise experiment fraction zero is the unperturbed evaluation") {
  Fixture& f = fixture();
  EvalOptions opts;
  opts.beam = 1;
  opts.max_len = 20;
  opts.use_fusion = true;
  opts.datastore = &f.ds;
  opts.fusion.lambda = 0.5;
  EvalResult plain = evaluate_split(f.bundle, f.corpus.test, opts);

  auto rows = run_noise_experiment(f.bundle, f.ds, f.corpus.test, {0.0, 0.2}, {1, 2, 3}, opts);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].fraction == 0.0);
  CHECK(rows[0].bleu == doctest::Approx(plain.metrics.bleu).epsilon(1e-12));
  CHECK(rows[1].fraction == 0.2);
}

TEST_CASE("csv and json writers produce parseable artifacts") {
  fs::path sweep_path = temp_file("sweep.csv");
  write_sweep_csv({{0.5, 10, 0.81, 0.9, 0.75}}, sweep_path);
  std::ifstream in(sweep_path);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header == "lambda,temperature,bleu,rouge_l,meteor_s");
  CHECK(row == "0.5,10,0.81,0.9,0.75");

  fs::path noise_path = temp_file("noise.csv");
  write_noise_csv({{0.05, 0.8, 0.85, 0.7}}, noise_path);
  std::ifstream nin(noise_path);
  std::getline(nin, header);
  CHECK(header == "fraction,bleu,rouge_l,meteor_s");

  MetricReport rep;
  rep.bleu = 0.5;
  rep.rouge_l = 0.6;
  rep.meteor_s = 0.4;
  rep.sample_count = 1;
  rep.per_sample.push_back({0.5, 0.6, 0.4});
  fs::path json_path = temp_file("metrics.json");
  write_metric_report_json(rep, json_path);
  std::ifstream jin(json_path);
  std::string text((std::istreambuf_iterator<char>(jin)), std::istreambuf_iterator<char>());
  CHECK(text.find("\"bleu\": 0.5") != std::string::npos);
}

TEST_CASE("three-way fusion runs end to end with a sentence index") {
  Fixture& f = fixture();
  SentenceIndex sidx(f.bundle, f.corpus.train);
  CHECK(sidx.size() == f.corpus.train.size());
  FusionConfig fusion;
  fusion.mode = FusionConfig::Mode::kTokenSentence;
  fusion.lambda1 = 0.4;
  fusion.lambda2 = 0.2;
  DecodeOptions decode{1, 16, true};
  GenerationResult gen = generate_tram(f.bundle, f.corpus.test[0], f.ds, fusion, decode, &sidx);
  REQUIRE(gen.sentence.has_value());
  CHECK(gen.sentence->id != f.corpus.test[0].id);
  CHECK(gen.sentence->clamped_similarity >= 0.0);
  CHECK(!gen.trace.empty());
  // missing index rejected
  CHECK_THROWS_AS(generate_tram(f.bundle, f.corpus.test[0], f.ds, fusion, decode, nullptr),
                  TramError);
}

TEST_CASE("without-HR ablation keys on the decoder state alone") {
  Fixture& f = fixture();
  Datastore ds_hr = build_datastore(f.bundle, f.corpus.train, /*without_hr=*/true);
  CHECK(ds_hr.key_dim() == f.bundle.config.d_model);
  CHECK(ds_hr.size() == f.ds.size());

  FusionConfig fusion;
  fusion.lambda = 0.5;
  fusion.without_hr = true;
  DecodeOptions decode{1, 20, true};
  GenerationResult gen = generate_tram(f.bundle, f.corpus.train[0], ds_hr, fusion, decode);
  CHECK(!gen.trace.empty());
  // the full-key datastore is rejected in ablation mode and vice versa
  CHECK_THROWS_AS(generate_tram(f.bundle, f.corpus.train[0], f.ds, fusion, decode), TramError);
  fusion.without_hr = false;
  CHECK_THROWS_AS(generate_tram(f.bundle, f.corpus.train[0], ds_hr, fusion, decode), TramError);
}

TEST_CASE("training with dropout enabled stays deterministic per seed") {
  auto corpus = gen_toy_samples(15, 10, 4, 4);
  ModelConfig cfg = small_config();
  cfg.dropout = 0.1;
  TrainConfig tc = fast_train(3);
  TrainLog la, lb;
  ModelBundle a = train_model(corpus.train, corpus.val, cfg, tc, &la);
  ModelBundle b = train_model(corpus.train, corpus.val, cfg, tc, &lb);
  CHECK(la.epochs.back().train_loss == lb.epochs.back().train_loss);
  CHECK(std::isfinite(la.epochs.back().train_loss));
  for (std::size_t i = 0; i < a.model->params().size(); ++i)
    CHECK(a.model->params().at(i).value.data() == b.model->params().at(i).value.data());
}

TEST_CASE("squared-L2 retrieval metric decodes end to end") {
  Fixture& f = fixture();
  FusionConfig fusion;
  fusion.lambda = 0.5;
  fusion.metric = RetrievalMetric::kSquaredL2;
  DecodeOptions decode{1, 20, true};
  GenerationResult gen = generate_tram(f.bundle, f.corpus.test[0], f.ds, fusion, decode);
  CHECK(!gen.trace.empty());
  for (const auto& step : gen.trace) {
    double sum = 0;
    for (const auto& [tok, p] : step.retrieved) sum += p;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
}
