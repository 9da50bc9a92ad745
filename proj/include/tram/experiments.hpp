#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tram/datastore.hpp"
#include "tram/fusion.hpp"
#include "tram/metrics.hpp"
#include "tram/model.hpp"

namespace tram {

struct EvalOptions {
  int beam = 4;
  int max_len = 48;
  bool use_fusion = false;
  FusionConfig fusion;
  const Datastore* datastore = nullptr;
  const SentenceIndex* sentence_index = nullptr;
};

struct EvalResult {
  MetricReport metrics;
  std::vector<TokenSeq> hypotheses;
};

EvalResult evaluate_split(ModelBundle& bundle, const std::vector<CodeSample>& samples,
                          const EvalOptions& options);

struct SweepRow {
  double lambda = 0.0;
  double temperature = 0.0;
  double bleu = 0.0;
  double rouge_l = 0.0;
  double meteor_s = 0.0;
};

// One evaluation per (lambda, T) grid point.
std::vector<SweepRow> run_sweep(ModelBundle& bundle, const Datastore& datastore,
                                const std::vector<CodeSample>& samples,
                                const std::vector<double>& lambdas,
                                const std::vector<double>& temperatures,
                                const EvalOptions& base_options);

struct NoiseRow {
  double fraction = 0.0;
  double bleu = 0.0;      // means over seeds
  double rouge_l = 0.0;
  double meteor_s = 0.0;
};

// For each fraction: perturb the datastore with each seed, evaluate, average.
std::vector<NoiseRow> run_noise_experiment(ModelBundle& bundle, const Datastore& datastore,
                                           const std::vector<CodeSample>& samples,
                                           const std::vector<double>& fractions,
                                           const std::vector<std::uint64_t>& seeds,
                                           const EvalOptions& base_options);

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path);
void write_noise_csv(const std::vector<NoiseRow>& rows, const std::filesystem::path& path);
void write_metric_report_json(const MetricReport& report, const std::filesystem::path& path);
void write_freq_report_csv(const FreqBinReport& report, const std::filesystem::path& path);

std::string format_double(double v);  // shortest round-trip text

}  // namespace tram
