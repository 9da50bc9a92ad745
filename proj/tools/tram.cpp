#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tram/checkpoint.hpp"
#include "tram/common.hpp"
#include "tram/corpus.hpp"
#include "tram/datastore.hpp"
#include "tram/experiments.hpp"
#include "tram/fusion.hpp"
#include "tram/metrics.hpp"
#include "tram/runconfig.hpp"
#include "tram/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct MissingArtifact : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_artifact(const fs::path& path, const std::string& what) {
  if (!fs::exists(path))
    throw MissingArtifact(what + " not found: " + path.string());
}

fs::path split_path(const tram::RunConfig& cfg, const std::string& split) {
  tram::check(!cfg.corpus.empty(), "missing --corpus");
  tram::check(split == "train" || split == "val" || split == "test",
              "split must be train, val or test, got '" + split + "'");
  return fs::path(cfg.corpus) / (split + ".jsonl");
}

std::vector<tram::CodeSample> load_split(const tram::RunConfig& cfg, const std::string& split) {
  fs::path p = split_path(cfg, split);
  require_artifact(p, "corpus split '" + split + "'");
  return tram::load_dataset(p);
}

void dump_effective_config(const tram::RunConfig& cfg, const std::string& command) {
  fs::create_directories(cfg.out);
  tram::atomic_write_text(fs::path(cfg.out) / (command + ".config"), cfg.dump());
}

// artifacts land under a temp name first so interrupted runs leave nothing
// half-written behind
template <class WriteFn>
void atomic_artifact(const fs::path& path, WriteFn&& write) {
  fs::path tmp = path;
  tmp += ".tmp";
  write(tmp);
  fs::rename(tmp, path);
}

tram::ModelBundle load_checkpoint_artifact(const tram::RunConfig& cfg) {
  tram::check(!cfg.checkpoint.empty(), "missing --checkpoint");
  require_artifact(cfg.checkpoint, "checkpoint");
  return tram::load_checkpoint(cfg.checkpoint);
}

tram::Datastore load_datastore_artifact(const tram::RunConfig& cfg) {
  tram::check(!cfg.datastore.empty(), "missing --datastore");
  require_artifact(cfg.datastore, "datastore");
  return tram::load_datastore(cfg.datastore);
}

void write_summaries(const fs::path& path, const std::vector<std::string>& ids,
                     const std::vector<std::vector<std::string>>& summaries) {
  std::ostringstream out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    json j;
    j["id"] = ids[i];
    j["summary"] = summaries[i];
    out << j.dump() << '\n';
  }
  tram::atomic_write_text(path, out.str());
}

int cmd_gen_corpus(const tram::RunConfig& cfg) {
  dump_effective_config(cfg, "gen-corpus");
  tram::ToyCorpus corpus = tram::gen_toy_samples(cfg.seed, cfg.train_size, cfg.val_size,
                                                 cfg.test_size);
  fs::create_directories(cfg.out);
  for (const auto& [name, samples] :
       std::vector<std::pair<std::string, const std::vector<tram::CodeSample>*>>{
           {"train", &corpus.train}, {"val", &corpus.val}, {"test", &corpus.test}}) {
    atomic_artifact(fs::path(cfg.out) / (name + ".jsonl"),
                    [&](const fs::path& tmp) { tram::save_dataset(*samples, tmp); });
    std::cout << name << ": " << samples->size() << " samples\n";
  }
  return 0;
}

int cmd_train(const tram::RunConfig& cfg) {
  dump_effective_config(cfg, "train");
  auto train_set = load_split(cfg, "train");
  auto val_set = load_split(cfg, "val");
  tram::TrainLog log;
  tram::ModelBundle bundle = tram::train_model(
      train_set, val_set, cfg.model_config(), cfg.train_config(), &log,
      [](const tram::EpochLog& e) {
        std::cout << "epoch " << e.epoch << " loss " << e.train_loss << " val_bleu "
                  << e.val_bleu << std::endl;
      });
  fs::path ck = fs::path(cfg.out) / "model.ckpt";
  atomic_artifact(ck, [&](const fs::path& tmp) { tram::save_checkpoint(bundle, tmp); });

  json jl;
  jl["best_epoch"] = log.best_epoch;
  jl["best_val_bleu"] = log.best_val_bleu;
  jl["stopped_early"] = log.stopped_early;
  json epochs = json::array();
  for (const auto& e : log.epochs)
    epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_bleu", e.val_bleu}});
  jl["epochs"] = epochs;
  tram::atomic_write_text(fs::path(cfg.out) / "train_log.json", jl.dump(2) + "\n");
  std::cout << "best epoch " << log.best_epoch << " val_bleu " << log.best_val_bleu
            << "; checkpoint: " << ck.string() << std::endl;
  return 0;
}

int cmd_build_datastore(const tram::RunConfig& cfg) {
  dump_effective_config(cfg, "build-datastore");
  tram::ModelBundle bundle = load_checkpoint_artifact(cfg);
  auto train_set = load_split(cfg, "train");
  tram::Datastore ds = tram::build_datastore(bundle, train_set, cfg.no_hr);
  fs::path path = fs::path(cfg.out) / "datastore.bin";
  atomic_artifact(path, [&](const fs::path& tmp) { tram::save_datastore(ds, tmp); });
  std::cout << "datastore: " << ds.size() << " entries, key dim " << ds.key_dim() << ", "
            << path.string() << std::endl;
  return 0;
}

struct DecodedSplit {
  std::vector<std::string> ids;
  std::vector<std::vector<std::string>> hyps;
  std::vector<std::vector<std::string>> refs;
};

DecodedSplit decode_split(const tram::RunConfig& cfg, tram::ModelBundle& bundle,
                          const tram::Datastore* ds, const tram::SentenceIndex* sidx,
                          const std::vector<tram::CodeSample>& samples,
                          std::ostream* trace_out) {
  tram::DecodeOptions decode{cfg.beam, cfg.max_len, trace_out != nullptr};
  tram::FusionConfig fusion = cfg.fusion_config();
  DecodedSplit out;
  for (const auto& sample : samples) {
    tram::GenerationResult gen =
        ds != nullptr ? tram::generate_tram(bundle, sample, *ds, fusion, decode, sidx)
                      : tram::generate_base(bundle, sample, decode);
    if (trace_out) tram::append_trace(*trace_out, gen.trace, bundle.summary_vocab);
    out.ids.push_back(sample.id);
    out.hyps.push_back(std::move(gen.tokens));
    out.refs.push_back(tram::normalize_summary_tokens(sample.summary_tokens));
  }
  return out;
}

int cmd_summarize(const tram::RunConfig& cfg, bool with_metrics, const char* command) {
  dump_effective_config(cfg, command);
  tram::ModelBundle bundle = load_checkpoint_artifact(cfg);
  auto samples = load_split(cfg, cfg.split);

  tram::Datastore ds;
  const tram::Datastore* ds_ptr = nullptr;
  if (!cfg.datastore.empty()) {
    ds = load_datastore_artifact(cfg);
    ds_ptr = &ds;
  }
  std::unique_ptr<tram::SentenceIndex> sidx;
  std::vector<tram::CodeSample> retrieval_corpus;
  if (ds_ptr != nullptr && cfg.mode == "token+sentence") {
    retrieval_corpus = load_split(cfg, "train");
    sidx = std::make_unique<tram::SentenceIndex>(bundle, retrieval_corpus);
  }

  std::ostringstream trace_buf;
  std::ostream* trace_out = cfg.trace.empty() ? nullptr : &trace_buf;
  DecodedSplit decoded = decode_split(cfg, bundle, ds_ptr, sidx.get(), samples, trace_out);

  fs::create_directories(cfg.out);
  write_summaries(fs::path(cfg.out) / "summaries.jsonl", decoded.ids, decoded.hyps);
  if (!cfg.trace.empty()) tram::atomic_write_text(cfg.trace, trace_buf.str());
  if (with_metrics) {
    tram::MetricReport report = tram::evaluate_pairs(decoded.hyps, decoded.refs);
    atomic_artifact(fs::path(cfg.out) / "metrics.json", [&](const fs::path& tmp) {
      tram::write_metric_report_json(report, tmp);
    });
    std::cout << "bleu " << 100.0 * report.bleu << " rouge_l " << 100.0 * report.rouge_l
              << " meteor_s " << 100.0 * report.meteor_s << " on " << report.sample_count
              << " samples" << std::endl;
  } else {
    std::cout << "wrote " << decoded.ids.size() << " summaries" << std::endl;
  }
  return 0;
}

int cmd_sweep(const tram::RunConfig& cfg) {
  dump_effective_config(cfg, "sweep");
  tram::ModelBundle bundle = load_checkpoint_artifact(cfg);
  tram::Datastore ds = load_datastore_artifact(cfg);
  auto samples = load_split(cfg, cfg.split);
  tram::EvalOptions opts;
  opts.beam = cfg.beam;
  opts.max_len = cfg.max_len;
  opts.fusion = cfg.fusion_config();
  auto rows = tram::run_sweep(bundle, ds, samples, tram::parse_double_list(cfg.lambdas),
                              tram::parse_double_list(cfg.temps), opts);
  fs::path path = fs::path(cfg.out) / "sweep.csv";
  atomic_artifact(path, [&](const fs::path& tmp) { tram::write_sweep_csv(rows, tmp); });
  std::cout << "sweep: " << rows.size() << " rows, " << path.string() << std::endl;
  return 0;
}

int cmd_perturb(const tram::RunConfig& cfg) {
  dump_effective_config(cfg, "perturb");
  tram::ModelBundle bundle = load_checkpoint_artifact(cfg);
  tram::Datastore ds = load_datastore_artifact(cfg);
  auto samples = load_split(cfg, cfg.split);
  tram::EvalOptions opts;
  opts.beam = cfg.beam;
  opts.max_len = cfg.max_len;
  opts.fusion = cfg.fusion_config();
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < cfg.noise_seeds; ++i) seeds.push_back(cfg.seed + static_cast<std::uint64_t>(i));
  auto rows = tram::run_noise_experiment(bundle, ds, samples,
                                         tram::parse_double_list(cfg.fractions), seeds, opts);
  fs::path path = fs::path(cfg.out) / "noise.csv";
  atomic_artifact(path, [&](const fs::path& tmp) { tram::write_noise_csv(rows, tmp); });
  std::cout << "noise experiment: " << rows.size() << " rows, " << path.string() << std::endl;
  return 0;
}

int cmd_analyze_freq(const tram::RunConfig& cfg, const std::vector<std::string>& systems) {
  dump_effective_config(cfg, "analyze-freq");
  tram::check(!systems.empty(), "analyze-freq needs at least one --system name=path");
  auto train_set = load_split(cfg, "train");
  auto refs_split = load_split(cfg, cfg.split);

  std::map<std::string, std::vector<std::vector<std::string>>> outputs;
  std::vector<std::vector<std::string>> refs;
  for (const auto& s : refs_split) refs.push_back(tram::normalize_summary_tokens(s.summary_tokens));

  for (const auto& spec : systems) {
    auto eq = spec.find('=');
    tram::check(eq != std::string::npos, "--system expects name=path, got '" + spec + "'");
    std::string name = spec.substr(0, eq);
    fs::path path = spec.substr(eq + 1);
    require_artifact(path, "system output '" + name + "'");
    std::map<std::string, std::vector<std::string>> by_id;
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json j = json::parse(line);
      by_id[j.at("id").get<std::string>()] = j.at("summary").get<std::vector<std::string>>();
    }
    std::vector<std::vector<std::string>> aligned;
    for (const auto& s : refs_split) {
      auto it = by_id.find(s.id);
      tram::check(it != by_id.end(), "system '" + name + "' missing output for sample " + s.id);
      aligned.push_back(it->second);
    }
    outputs[name] = std::move(aligned);
  }
  tram::FreqBinReport report = tram::token_freq_analysis(outputs, refs, train_set);
  fs::path path = fs::path(cfg.out) / "freq_bins.csv";
  atomic_artifact(path, [&](const fs::path& tmp) { tram::write_freq_report_csv(report, tmp); });
  for (const auto& [system, bins] : report.counts) {
    std::cout << system << ":";
    for (std::size_t b = 0; b < tram::kFreqBins.size(); ++b)
      std::cout << " f" << tram::kFreqBins[b] << "=" << bins[b];
    std::cout << std::endl;
  }
  std::cout << "bins: " << path.string() << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  tram::RunConfig cfg;

  // --config loads first; explicit flags then win
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--config") {
      try {
        cfg.load_file(argv[i + 1]);
      } catch (const std::exception& e) {
        std::cerr << "error: code=config msg=\"" << e.what() << "\"\n";
        return 2;
      }
    }
  }

  CLI::App app{"token-level retrieval-augmented code summarization"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  app.add_option("--config", config_path, "flat key = value config file");
  app.add_option("--seed", cfg.seed, "random seed");
  app.add_option("--out", cfg.out, "output directory");

  int layers_all = 0;

  auto add_model_flags = [&](CLI::App* cmd) {
    cmd->add_option("--d-model", cfg.d_model);
    cmd->add_option("--heads", cfg.n_heads);
    cmd->add_option("--layers", layers_all, "set encoder, decoder and GAT layer counts at once");
    cmd->add_option("--enc-layers", cfg.n_enc_layers);
    cmd->add_option("--dec-layers", cfg.n_dec_layers);
    cmd->add_option("--gat-layers", cfg.n_gat_layers);
    cmd->add_option("--ffn", cfg.ffn_dim);
    cmd->add_option("--k-clip", cfg.k_clip);
    cmd->add_option("--dropout", cfg.dropout);
    cmd->add_option("--max-code-len", cfg.max_code_len);
    cmd->add_option("--max-summary-len", cfg.max_summary_len);
  };
  auto add_fusion_flags = [&](CLI::App* cmd) {
    cmd->add_option("--lambda", cfg.lambda);
    cmd->add_option("--temp", cfg.temp);
    cmd->add_option("--topk", cfg.topk);
    cmd->add_option("--mode", cfg.mode)->check(CLI::IsMember({"token", "token+sentence"}));
    cmd->add_option("--lambda1", cfg.lambda1);
    cmd->add_option("--lambda2", cfg.lambda2);
    cmd->add_flag("--no-hr", cfg.no_hr, "key on the decoder state alone");
    cmd->add_option("--metric", cfg.metric)->check(CLI::IsMember({"cosine", "l2"}));
  };
  auto add_decode_flags = [&](CLI::App* cmd) {
    cmd->add_option("--beam", cfg.beam);
    cmd->add_option("--max-len", cfg.max_len);
    cmd->add_option("--split", cfg.split)->check(CLI::IsMember({"train", "val", "test"}));
  };

  CLI::App* gen = app.add_subcommand("gen-corpus", "generate the bundled toy corpus");
  gen->add_option("--train", cfg.train_size)->check(CLI::PositiveNumber);
  gen->add_option("--val", cfg.val_size)->check(CLI::PositiveNumber);
  gen->add_option("--test", cfg.test_size)->check(CLI::PositiveNumber);

  CLI::App* train = app.add_subcommand("train", "train the base model");
  train->add_option("--corpus", cfg.corpus);
  add_model_flags(train);
  train->add_option("--lr", cfg.lr);
  train->add_option("--batch", cfg.batch);
  train->add_option("--patience", cfg.patience);
  train->add_option("--max-epochs", cfg.max_epochs);
  train->add_option("--min-freq", cfg.min_freq);
  train->add_option("--max-vocab", cfg.max_vocab);
  train->add_option("--max-len", cfg.max_len, "greedy validation decode cap");

  CLI::App* build = app.add_subcommand("build-datastore", "teacher-forced datastore build");
  build->add_option("--corpus", cfg.corpus);
  build->add_option("--checkpoint", cfg.checkpoint);
  build->add_flag("--no-hr", cfg.no_hr);

  CLI::App* summarize = app.add_subcommand("summarize", "decode summaries, optional retrieval");
  summarize->add_option("--corpus", cfg.corpus);
  summarize->add_option("--checkpoint", cfg.checkpoint);
  summarize->add_option("--datastore", cfg.datastore);
  summarize->add_option("--trace", cfg.trace, "per-step retrieval trace JSONL");
  add_fusion_flags(summarize);
  add_decode_flags(summarize);

  CLI::App* evaluate = app.add_subcommand("evaluate", "decode and score a split");
  evaluate->add_option("--corpus", cfg.corpus);
  evaluate->add_option("--checkpoint", cfg.checkpoint);
  evaluate->add_option("--datastore", cfg.datastore);
  add_fusion_flags(evaluate);
  add_decode_flags(evaluate);

  CLI::App* sweep = app.add_subcommand("sweep", "lambda x temperature grid evaluation");
  sweep->add_option("--corpus", cfg.corpus);
  sweep->add_option("--checkpoint", cfg.checkpoint);
  sweep->add_option("--datastore", cfg.datastore);
  sweep->add_option("--lambdas", cfg.lambdas, "comma-separated lambda grid");
  sweep->add_option("--temps", cfg.temps, "comma-separated temperature grid");
  add_fusion_flags(sweep);
  add_decode_flags(sweep);

  CLI::App* perturb = app.add_subcommand("perturb", "datastore noise robustness runs");
  perturb->add_option("--corpus", cfg.corpus);
  perturb->add_option("--checkpoint", cfg.checkpoint);
  perturb->add_option("--datastore", cfg.datastore);
  perturb->add_option("--fractions,--fraction", cfg.fractions, "comma-separated noise fractions");
  perturb->add_option("--noise-seeds", cfg.noise_seeds, "number of seeds to average over");
  add_fusion_flags(perturb);
  add_decode_flags(perturb);

  CLI::App* analyze = app.add_subcommand("analyze-freq", "low-frequency token analysis");
  analyze->add_option("--corpus", cfg.corpus);
  std::vector<std::string> systems;
  analyze->add_option("--system", systems, "name=summaries.jsonl, repeatable");
  analyze->add_option("--split", cfg.split)->check(CLI::IsMember({"train", "val", "test"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: code=usage msg=\"" << e.what() << "\"\n";
    return 2;
  }

  if (layers_all > 0) {
    if (train->count("--enc-layers") == 0) cfg.n_enc_layers = layers_all;
    if (train->count("--dec-layers") == 0) cfg.n_dec_layers = layers_all;
    if (train->count("--gat-layers") == 0) cfg.n_gat_layers = layers_all;
  }

  try {
    if (gen->parsed()) return cmd_gen_corpus(cfg);
    if (train->parsed()) return cmd_train(cfg);
    if (build->parsed()) return cmd_build_datastore(cfg);
    if (summarize->parsed()) return cmd_summarize(cfg, false, "summarize");
    if (evaluate->parsed()) return cmd_summarize(cfg, true, "evaluate");
    if (sweep->parsed()) return cmd_sweep(cfg);
    if (perturb->parsed()) return cmd_perturb(cfg);
    if (analyze->parsed()) return cmd_analyze_freq(cfg, systems);
  } catch (const MissingArtifact& e) {
    std::cerr << "error: code=missing_artifact msg=\"" << e.what() << "\"\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: code=internal msg=\"" << e.what() << "\"\n";
    return 1;
  }
  return 2;
}
