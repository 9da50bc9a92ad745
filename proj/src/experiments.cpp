#include "tram/experiments.hpp"

#include <charconv>
#include <fstream>

#include <json.hpp>

#include "tram/common.hpp"

namespace tram {

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  check(ec == std::errc{}, "format_double failed");
  return std::string(buf, ptr);
}

EvalResult evaluate_split(ModelBundle& bundle, const std::vector<CodeSample>& samples,
                          const EvalOptions& options) {
  check(!samples.empty(), "evaluate: empty split");
  DecodeOptions decode{options.beam, options.max_len, false};
  EvalResult result;
  std::vector<TokenSeq> refs;
  refs.reserve(samples.size());
  for (const auto& sample : samples) {
    GenerationResult gen =
        options.use_fusion
            ? generate_tram(bundle, sample, *options.datastore, options.fusion, decode,
                            options.sentence_index)
            : generate_base(bundle, sample, decode);
    result.hypotheses.push_back(std::move(gen.tokens));
    refs.push_back(normalize_summary_tokens(sample.summary_tokens));
  }
  result.metrics = evaluate_pairs(result.hypotheses, refs);
  return result;
}

std::vector<SweepRow> run_sweep(ModelBundle& bundle, const Datastore& datastore,
                                const std::vector<CodeSample>& samples,
                                const std::vector<double>& lambdas,
                                const std::vector<double>& temperatures,
                                const EvalOptions& base_options) {
  check(!lambdas.empty() && !temperatures.empty(), "sweep: empty grid");
  std::vector<SweepRow> rows;
  for (double lambda : lambdas) {
    for (double temperature : temperatures) {
      EvalOptions opts = base_options;
      opts.use_fusion = true;
      opts.datastore = &datastore;
      opts.fusion.lambda = lambda;
      opts.fusion.temperature = temperature;
      EvalResult r = evaluate_split(bundle, samples, opts);
      rows.push_back({lambda, temperature, r.metrics.bleu, r.metrics.rouge_l,
                      r.metrics.meteor_s});
    }
  }
  return rows;
}

std::vector<NoiseRow> run_noise_experiment(ModelBundle& bundle, const Datastore& datastore,
                                           const std::vector<CodeSample>& samples,
                                           const std::vector<double>& fractions,
                                           const std::vector<std::uint64_t>& seeds,
                                           const EvalOptions& base_options) {
  check(!fractions.empty() && !seeds.empty(), "noise experiment: empty grid");
  std::vector<NoiseRow> rows;
  for (double fraction : fractions) {
    NoiseRow row;
    row.fraction = fraction;
    for (std::uint64_t seed : seeds) {
      Datastore noisy = inject_noise(datastore, fraction, seed);
      EvalOptions opts = base_options;
      opts.use_fusion = true;
      opts.datastore = &noisy;
      EvalResult r = evaluate_split(bundle, samples, opts);
      row.bleu += r.metrics.bleu;
      row.rouge_l += r.metrics.rouge_l;
      row.meteor_s += r.metrics.meteor_s;
    }
    const double n = static_cast<double>(seeds.size());
    row.bleu /= n;
    row.rouge_l /= n;
    row.meteor_s /= n;
    rows.push_back(row);
  }
  return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  check(out.good(), "write_sweep_csv: cannot open " + path.string());
  out << "lambda,temperature,bleu,rouge_l,meteor_s\n";
  for (const auto& r : rows)
    out << format_double(r.lambda) << ',' << format_double(r.temperature) << ','
        << format_double(r.bleu) << ',' << format_double(r.rouge_l) << ','
        << format_double(r.meteor_s) << '\n';
}

void write_noise_csv(const std::vector<NoiseRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  check(out.good(), "write_noise_csv: cannot open " + path.string());
  out << "fraction,bleu,rouge_l,meteor_s\n";
  for (const auto& r : rows)
    out << format_double(r.fraction) << ',' << format_double(r.bleu) << ','
        << format_double(r.rouge_l) << ',' << format_double(r.meteor_s) << '\n';
}

void write_metric_report_json(const MetricReport& report, const std::filesystem::path& path) {
  using nlohmann::json;
  json j;
  j["bleu"] = report.bleu;
  j["rouge_l"] = report.rouge_l;
  j["meteor_s"] = report.meteor_s;
  j["samples"] = report.sample_count;
  json per = json::array();
  for (const auto& s : report.per_sample)
    per.push_back({{"bleu", s.bleu}, {"rouge_l", s.rouge_l}, {"meteor_s", s.meteor_s}});
  j["per_sample"] = per;
  std::ofstream out(path);
  check(out.good(), "write_metric_report_json: cannot open " + path.string());
  out << j.dump(2) << '\n';
}

void write_freq_report_csv(const FreqBinReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  check(out.good(), "write_freq_report_csv: cannot open " + path.string());
  out << "system";
  for (std::size_t bin : kFreqBins) out << ",freq_" << bin;
  out << '\n';
  for (const auto& [system, bins] : report.counts) {
    out << system;
    for (long v : bins) out << ',' << v;
    out << '\n';
  }
}

}  // namespace tram
