// Acceptance suite: one test case per criterion, each printing a
// [PASS]/[FAIL] line with the measured quantity and its runtime.

#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "grad_check.hpp"
#include "tram/corpus.hpp"
#include "tram/datastore.hpp"
#include "tram/experiments.hpp"
#include "tram/fusion.hpp"
#include "tram/metrics.hpp"
#include "tram/training.hpp"

using namespace tram;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Timer {
  Clock::time_point start = Clock::now();
  double seconds() const { return std::chrono::duration<double>(Clock::now() - start).count(); }
};

void report(int criterion, const std::string& what, bool pass, const std::string& detail,
            double seconds) {
  std::ostringstream line;
  line << (pass ? "[PASS]" : "[FAIL]") << " criterion " << criterion << ": " << what << " — "
       << detail << " (" << static_cast<int>(seconds + 0.5) << "s)";
  std::cout << line.str() << std::endl;
  CHECK_MESSAGE(pass, line.str());
}

ModelConfig desk_config() {
  ModelConfig cfg;
  cfg.d_model = 64;
  cfg.n_heads = 4;
  cfg.n_enc_layers = 2;
  cfg.n_dec_layers = 2;
  cfg.n_gat_layers = 2;
  cfg.ffn_dim = 128;
  cfg.k_clip = 8;
  cfg.dropout = 0.0;
  cfg.max_summary_len = 32;
  return cfg;
}

// shared overfit artifacts for criteria 1, 5 and 7
struct OverfitArtifacts {
  ToyCorpus corpus;
  ModelBundle bundle;
  Datastore datastore;
  double accuracy = 0.0;
  double train_seconds = 0.0;

  OverfitArtifacts() : corpus(gen_toy_samples(202, 50, 20, 100)) {
    Timer t;
    TrainConfig tc;
    tc.batch_size = 32;
    tc.lr = 1e-3;
    tc.max_epochs = 120;
    tc.patience = 120;
    tc.seed = 7;
    bundle = train_model(corpus.train, corpus.val, desk_config(), tc);
    datastore = build_datastore(bundle, corpus.train);
    accuracy = teacher_forced_accuracy(bundle, corpus.train);
    train_seconds = t.seconds();
  }
};

OverfitArtifacts& overfit() {
  static OverfitArtifacts artifacts;
  return artifacts;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("criterion 1: fusion identity at lambda zero") {
  OverfitArtifacts& art = overfit();
  Timer t;
  FusionConfig fusion;
  fusion.lambda = 0.0;
  DecodeOptions decode{4, 24, false};
  std::size_t mismatches = 0;
  for (const auto& sample : art.corpus.test) {
    GenerationResult fused = generate_tram(art.bundle, sample, art.datastore, fusion, decode);
    GenerationResult base = generate_base(art.bundle, sample, decode);
    if (fused.token_ids != base.token_ids) ++mismatches;
  }
  const double secs = t.seconds();
  report(1, "lambda=0 decoding identical to base decoding on 100 test samples",
         mismatches == 0 && secs < 60.0,
         std::to_string(mismatches) + " mismatches of " + std::to_string(art.corpus.test.size()) +
             " samples, runtime " + std::to_string(secs) + "s (budget 60s)",
         secs);
}

TEST_CASE("criterion 2: exact retrieval equals brute-force scan") {
  Timer t;
  const int dim = 192;
  Rng rng(4242);
  auto random_unit = [&]() {
    std::vector<double> v(dim);
    for (auto& x : v) x = rng.normal();
    return l2_normalize(v);
  };
  Datastore ds(dim);
  std::vector<float> fkey(dim);
  for (int i = 0; i < 10000; ++i) {
    auto u = random_unit();
    fkey.assign(u.begin(), u.end());
    ds.add(fkey, 4 + (i % 211), "k", i);
  }
  std::size_t bad = 0;
  for (int q = 0; q < 1000; ++q) {
    auto query = random_unit();
    auto got = ds.query_topk(query, 16);
    // independent oracle: full scan with its own accumulation and ordering
    std::vector<std::pair<double, std::size_t>> scored(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
      auto key = ds.key(i);
      double s = 0.0;
      for (int j = 0; j < dim; ++j)
        s += query[static_cast<std::size_t>(j)] *
             static_cast<double>(key[static_cast<std::size_t>(j)]);
      scored[i] = {s, i};
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (std::size_t i = 0; i < 16; ++i)
      if (got[i].entry_index != scored[i].second || got[i].similarity != scored[i].first) ++bad;
  }
  const double secs = t.seconds();
  report(2, "query_topk(K=16) matches brute force on 10^4 keys x 10^3 queries",
         bad == 0 && secs < 60.0,
         std::to_string(bad) + " member/order mismatches, runtime " + std::to_string(secs) +
             "s (budget 60s)",
         secs);
}

TEST_CASE("criterion 3: retrieval-distribution arithmetic") {
  Timer t;
  const double temp = 10.0;
  std::vector<RetrievalTriple> triples{{0, 4, 0.9, {}}, {1, 5, 0.8, {}}, {2, 4, 0.7, {}}};
  auto p = retrieval_distribution(triples, temp, 8);
  // independent oracle in long double
  const long double e9 = expl(9.0L), e8 = expl(8.0L), e7 = expl(7.0L);
  const double expected = static_cast<double>((e9 + e7) / (e9 + e8 + e7));
  const double err = std::abs(p[4] - expected);
  report(3, "3-triple P_r(cos) within 1e-9 of the exponential oracle", err <= 1e-9,
         "P_r=" + std::to_string(p[4]) + " expected=" + std::to_string(expected) +
             " |err|=" + std::to_string(err),
         t.seconds());
}

TEST_CASE("criterion 4: full-model gradient check") {
  Timer t;
  ModelConfig cfg;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.n_enc_layers = 2;
  cfg.n_dec_layers = 2;
  cfg.n_gat_layers = 2;
  cfg.ffn_dim = 32;
  cfg.k_clip = 4;
  cfg.dropout = 0.0;
  TramModel model(cfg, 12, 12, 14, 99);
  EncodedSample s;
  s.id = "gc";
  s.code_ids = {4, 5, 6, 7, 5};
  s.node_ids = {4, 5, 6, 7};
  s.edges = {{0, 1}, {0, 2}, {2, 3}};
  s.summary_ids = {4, 6, 5, 7};
  {
    Tape tape;
    tape.backward(model.training_loss(tape, s, nullptr));
  }
  auto res = testing::finite_diff_check(
      model.params(),
      [&]() {
        Tape tape(false);
        return tape.value_of(model.training_loss(tape, s, nullptr))[0];
      },
      32, 1e-4, 555);
  const double secs = t.seconds();
  report(4, "autodiff vs central differences, 32 probes per tensor, d_model=16",
         res.max_rel_err <= 1e-4 && secs < 300.0,
         "max rel err " + std::to_string(res.max_rel_err) + " over " +
             std::to_string(res.probes) + " probes at " + res.worst + ", runtime " +
             std::to_string(secs) + "s (budget 300s)",
         secs);
}

TEST_CASE("criterion 5: overfit training and rank-1 self-retrieval") {
  OverfitArtifacts& art = overfit();
  Timer t;
  FusionConfig fusion;
  fusion.lambda = 0.5;
  DecodeOptions decode{1, 24, true};
  long hits = 0, steps = 0;
  for (const auto& sample : art.corpus.train) {
    auto refs = normalize_summary_tokens(sample.summary_tokens);
    std::vector<int> ref_ids = encode(refs, art.bundle.summary_vocab);
    ref_ids.push_back(Vocabulary::kEos);
    GenerationResult gen = generate_tram(art.bundle, sample, art.datastore, fusion, decode);
    for (std::size_t i = 0; i < gen.trace.size() && i < ref_ids.size(); ++i) {
      ++steps;
      if (!gen.trace[i].retrieved.empty() && gen.trace[i].retrieved[0].first == ref_ids[i])
        ++hits;
    }
  }
  const double rate = static_cast<double>(hits) / static_cast<double>(steps);
  const double secs = art.train_seconds + t.seconds();
  report(5, "teacher-forced accuracy >= 0.95 and rank-1 retrieval >= 0.90",
         art.accuracy >= 0.95 && rate >= 0.90 && secs < 900.0,
         "accuracy " + std::to_string(art.accuracy) + ", rank-1 rate " + std::to_string(rate) +
             " (" + std::to_string(hits) + "/" + std::to_string(steps) + "), runtime " +
             std::to_string(secs) + "s (budget 900s)",
         secs);
}

TEST_CASE("criterion 6: datastore noise robustness trend") {
  Timer t;
  auto corpus = gen_toy_samples(303, 500, 100, 150);
  TrainConfig tc;
  tc.batch_size = 32;
  tc.lr = 1e-3;
  // deliberately short of convergence: a fully memorized toy model pins
  // P_m so hard that value shuffles never flip an argmax, which is not
  // the regime the robustness analysis probes
  tc.max_epochs = 12;
  tc.patience = 12;
  tc.seed = 11;
  ModelBundle bundle = train_model(corpus.train, corpus.val, desk_config(), tc);
  Datastore ds = build_datastore(bundle, corpus.train);

  EvalOptions opts;
  opts.beam = 1;
  opts.max_len = 24;
  opts.use_fusion = true;
  opts.datastore = &ds;
  opts.fusion.lambda = 0.5;
  // near-duplicate toy contexts leave cosine gaps tiny, so the sharper
  // temperature is what lets the retrieval distribution distinguish
  // neighbors at all; T=10 collapses it toward uniform-over-K here
  opts.fusion.temperature = 50.0;
  auto rows = run_noise_experiment(bundle, ds, corpus.test, {0.0, 0.05, 0.10, 0.20},
                                   {1, 2, 3, 4, 5}, opts);
  bool non_increasing = true;
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].bleu > rows[i - 1].bleu + 1e-12) non_increasing = false;
  const double drop05 = rows[0].bleu - rows[1].bleu;
  const double drop20 = rows[0].bleu - rows[3].bleu;
  const double secs = t.seconds();
  std::ostringstream detail;
  detail << "mean BLEU";
  for (const auto& r : rows) detail << " " << r.fraction << ":" << r.bleu;
  detail << "; drop(5%)=" << drop05 << " drop(20%)=" << drop20 << ", runtime " << secs
         << "s (budget 1800s)";
  // the paper-scale observation (about 0.3 BLEU points at 10% noise on the
  // real corpora) is reported, not asserted: corpora differ
  std::cout << "  [report] paper-scale note: 10% noise drop here = "
            << 100.0 * (rows[0].bleu - rows[2].bleu) << " BLEU points" << std::endl;
  report(6, "mean BLEU non-increasing over noise fractions; 20% drop > 5% drop",
         non_increasing && drop20 > drop05 && secs < 1800.0, detail.str(), secs);
}

TEST_CASE("criterion 7: low-frequency token bins") {
  OverfitArtifacts& art = overfit();
  Timer t;
  FusionConfig fusion;
  fusion.lambda = 0.5;
  DecodeOptions decode{1, 24, false};
  std::map<std::string, std::vector<TokenSeq>> systems;
  std::vector<TokenSeq> refs;
  for (const auto& sample : art.corpus.train) {
    refs.push_back(normalize_summary_tokens(sample.summary_tokens));
    systems["tram"].push_back(
        generate_tram(art.bundle, sample, art.datastore, fusion, decode).tokens);
    systems["base"].push_back(generate_base(art.bundle, sample, decode).tokens);
  }
  FreqBinReport rep = token_freq_analysis(systems, refs, art.corpus.train);
  const bool bins_ok = kFreqBins == std::array<std::size_t, 6>{1, 2, 5, 10, 50, 100};
  const long tram1 = rep.counts.at("tram")[0];
  const long base1 = rep.counts.at("base")[0];
  std::ostringstream detail;
  detail << "bins {1,2,5,10,50,100}; tram bin-1=" << tram1 << " base bin-1=" << base1;
  detail << "; tram:";
  for (long v : rep.counts.at("tram")) detail << " " << v;
  detail << " base:";
  for (long v : rep.counts.at("base")) detail << " " << v;
  report(7, "Table-4-format bins emitted and tram bin-1 >= base bin-1",
         bins_ok && tram1 >= base1, detail.str(), t.seconds());
}

TEST_CASE("criterion 8: metric sanity") {
  Timer t;
  auto words = [](const char* s) {
    TokenSeq out;
    std::istringstream in(s);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
  };
  TokenSeq ref = words("remove soft interface specific sysfs entries .");
  const bool identity_ok = bleu({ref}, {ref}).corpus == 1.0 && rouge_l(ref, ref) == 1.0 &&
                           meteor_simplified(ref, ref) ==
                               1.0 - 0.5 / std::pow(static_cast<double>(ref.size()), 3);

  const double rouge_hand = rouge_l(words("a b c"), words("a c"));
  const bool rouge_ok = std::abs(rouge_hand - 0.8) <= 1e-9;

  TokenSeq quoted_ref = words("start a source file within a compilation unit .");
  const double retrieval_style =
      bleu({words("start file within a compilation unit unit .")}, {quoted_ref}).corpus;
  const double model_style =
      bleu({words("start the source file within the unit .")}, {quoted_ref}).corpus;
  const bool ordering_ok = retrieval_style > model_style;

  report(8, "identity values, ROUGE-L hand case, quoted BLEU ordering",
         identity_ok && rouge_ok && ordering_ok,
         "rouge([a,b,c],[a,c])=" + std::to_string(rouge_hand) + ", retrieval-style BLEU " +
             std::to_string(retrieval_style) + " > model-style " + std::to_string(model_style),
         t.seconds());
}

TEST_CASE("criterion 9: full-recipe determinism") {
  Timer t;
  fs::path base = fs::temp_directory_path() / "tram_acceptance_recipe";
  fs::remove_all(base);
  auto run_recipe = [&](const char* tag) {
    fs::path root = base / tag;
    fs::path data = root / "data";
    fs::path run = root / "run";
    std::string cli = TRAM_CLI_PATH;
    auto sh = [&](const std::string& args) {
      std::string cmd = cli + " " + args + " >" + (root / "log.txt").string() + " 2>&1";
      REQUIRE(std::system(cmd.c_str()) == 0);
    };
    fs::create_directories(root);
    sh("gen-corpus --seed 5 --train 30 --val 8 --test 8 --out " + data.string());
    sh("train --corpus " + data.string() +
       " --d-model 16 --heads 2 --layers 1 --ffn 32 --dropout 0 --batch 8 --lr 2e-3"
       " --max-epochs 4 --patience 4 --seed 5 --out " +
       run.string());
    sh("build-datastore --corpus " + data.string() + " --checkpoint " +
       (run / "model.ckpt").string() + " --out " + run.string());
    sh("evaluate --corpus " + data.string() + " --checkpoint " + (run / "model.ckpt").string() +
       " --datastore " + (run / "datastore.bin").string() +
       " --lambda 0.5 --temp 10 --topk 16 --beam 2 --max-len 12 --out " +
       (run / "eval").string());
    return run;
  };
  fs::path a = run_recipe("a");
  fs::path b = run_recipe("b");
  const bool ds_same = slurp(a / "datastore.bin") == slurp(b / "datastore.bin");
  const bool metrics_same = slurp(a / "eval" / "metrics.json") == slurp(b / "eval" / "metrics.json");
  const bool ckpt_same = slurp(a / "model.ckpt") == slurp(b / "model.ckpt");
  report(9, "gen-corpus -> train -> build-datastore -> evaluate twice, byte-identical",
         ds_same && metrics_same && ckpt_same,
         std::string("datastore ") + (ds_same ? "identical" : "DIFFERS") + ", metrics " +
             (metrics_same ? "identical" : "DIFFERS") + ", checkpoint " +
             (ckpt_same ? "identical" : "DIFFERS"),
         t.seconds());
}

TEST_CASE("criterion 10: three-way fusion reduction at Sim=0") {
  Timer t;
  Rng rng(1010);
  auto random_distribution = [&](std::size_t n) {
    std::vector<double> p(n);
    double sum = 0;
    for (auto& x : p) {
      x = rng.uniform() + 1e-9;
      sum += x;
    }
    for (auto& x : p) x /= sum;
    return p;
  };
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    auto pm = random_distribution(23);
    auto pr = random_distribution(23);
    auto ps = random_distribution(23);
    double l2 = rng.uniform() * 0.9;
    double l1 = rng.uniform() * (1.0 - l2);
    auto three = fuse_three(pm, pr, ps, 0.0, l1, l2);
    auto two = fuse_two(pm, pr, l1 / (1.0 - l2));
    for (std::size_t v = 0; v < pm.size(); ++v)
      worst = std::max(worst, std::abs(three[v] - two[v]));
  }
  report(10, "fuse_three(Sim=0) equals fuse_two(lambda1/(1-lambda2)) on 100 random pairs",
         worst <= 1e-12, "max abs deviation " + std::to_string(worst), t.seconds());
}
