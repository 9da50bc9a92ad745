#include "tram/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "tram/common.hpp"

namespace tram {

namespace {

constexpr int kMaxOrder = 4;

std::map<std::vector<std::string>, long> ngram_counts(const TokenSeq& seq, int n) {
  std::map<std::vector<std::string>, long> counts;
  if (static_cast<int>(seq.size()) < n) return counts;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= seq.size(); ++i)
    ++counts[std::vector<std::string>(seq.begin() + static_cast<std::ptrdiff_t>(i),
                                      seq.begin() + static_cast<std::ptrdiff_t>(i) + n)];
  return counts;
}

struct BleuStats {
  std::array<long, kMaxOrder> matches{};
  std::array<long, kMaxOrder> possible{};
  long hyp_len = 0;
  long ref_len = 0;

  void accumulate(const TokenSeq& hyp, const TokenSeq& ref) {
    hyp_len += static_cast<long>(hyp.size());
    ref_len += static_cast<long>(ref.size());
    for (int n = 1; n <= kMaxOrder; ++n) {
      auto hyp_ngrams = ngram_counts(hyp, n);
      auto ref_ngrams = ngram_counts(ref, n);
      long m = 0, total = 0;
      for (const auto& [gram, count] : hyp_ngrams) {
        total += count;
        auto it = ref_ngrams.find(gram);
        if (it != ref_ngrams.end()) m += std::min(count, it->second);
      }
      matches[static_cast<std::size_t>(n - 1)] += m;
      possible[static_cast<std::size_t>(n - 1)] += total;
    }
  }

  double score() const {
    double log_precision = 0.0;
    for (int n = 1; n <= kMaxOrder; ++n) {
      long m = matches[static_cast<std::size_t>(n - 1)];
      long t = possible[static_cast<std::size_t>(n - 1)];
      double p;
      if (n == 1) {
        if (m == 0 || t == 0) return 0.0;
        p = static_cast<double>(m) / static_cast<double>(t);
      } else if (m == 0) {
        p = (static_cast<double>(m) + 1.0) / (static_cast<double>(t) + 1.0);
      } else {
        p = static_cast<double>(m) / static_cast<double>(t);
      }
      log_precision += std::log(p);
    }
    double bp = 1.0;
    if (hyp_len < ref_len && hyp_len > 0)
      bp = std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
    if (hyp_len == 0) return 0.0;
    return bp * std::exp(log_precision / kMaxOrder);
  }
};

}  // namespace

BleuResult bleu(const std::vector<TokenSeq>& hypotheses,
                const std::vector<TokenSeq>& references) {
  check(hypotheses.size() == references.size(), "bleu: hypothesis/reference count mismatch");
  check(!hypotheses.empty(), "bleu: empty input");
  BleuStats corpus;
  BleuResult result;
  result.per_sentence.reserve(hypotheses.size());
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    check(!references[i].empty(), "bleu: empty reference at index " + std::to_string(i));
    corpus.accumulate(hypotheses[i], references[i]);
    BleuStats single;
    single.accumulate(hypotheses[i], references[i]);
    result.per_sentence.push_back(single.score());
  }
  result.corpus = corpus.score();
  return result;
}

double rouge_l(const TokenSeq& hypothesis, const TokenSeq& reference) {
  check(!reference.empty(), "rouge_l: empty reference");
  if (hypothesis.empty()) return 0.0;
  const std::size_t m = hypothesis.size(), n = reference.size();
  std::vector<std::vector<long>> dp(m + 1, std::vector<long>(n + 1, 0));
  for (std::size_t i = 1; i <= m; ++i)
    for (std::size_t j = 1; j <= n; ++j)
      dp[i][j] = hypothesis[i - 1] == reference[j - 1] ? dp[i - 1][j - 1] + 1
                                                       : std::max(dp[i - 1][j], dp[i][j - 1]);
  const double lcs = static_cast<double>(dp[m][n]);
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(m);
  const double r = lcs / static_cast<double>(n);
  return 2.0 * p * r / (p + r);
}

namespace {

bool stem_match(const std::string& a, const std::string& b) {
  std::size_t lcp = 0;
  while (lcp < a.size() && lcp < b.size() && a[lcp] == b[lcp]) ++lcp;
  return lcp >= 4;
}

}  // namespace

double meteor_simplified(const TokenSeq& hypothesis, const TokenSeq& reference) {
  check(!reference.empty(), "meteor: empty reference");
  if (hypothesis.empty()) return 0.0;
  const std::size_t m = hypothesis.size(), n = reference.size();
  std::vector<int> hyp_to_ref(m, -1);
  std::vector<char> ref_used(n, 0);
  // stage 1: exact matches, leftmost available reference position
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (!ref_used[j] && hypothesis[i] == reference[j]) {
        hyp_to_ref[i] = static_cast<int>(j);
        ref_used[j] = 1;
        break;
      }
  // stage 2: common-prefix stems over what remains
  for (std::size_t i = 0; i < m; ++i) {
    if (hyp_to_ref[i] != -1) continue;
    for (std::size_t j = 0; j < n; ++j)
      if (!ref_used[j] && stem_match(hypothesis[i], reference[j])) {
        hyp_to_ref[i] = static_cast<int>(j);
        ref_used[j] = 1;
        break;
      }
  }
  long matches = 0;
  for (std::size_t i = 0; i < m; ++i)
    if (hyp_to_ref[i] != -1) ++matches;
  if (matches == 0) return 0.0;
  // chunks: maximal runs contiguous in both sequences
  long chunks = 0;
  int prev_ref = -2;
  bool in_chunk = false;
  for (std::size_t i = 0; i < m; ++i) {
    if (hyp_to_ref[i] == -1) {
      in_chunk = false;
      prev_ref = -2;
      continue;
    }
    if (!in_chunk || hyp_to_ref[i] != prev_ref + 1) ++chunks;
    in_chunk = true;
    prev_ref = hyp_to_ref[i];
  }
  const double p = static_cast<double>(matches) / static_cast<double>(m);
  const double r = static_cast<double>(matches) / static_cast<double>(n);
  const double f_mean = 10.0 * p * r / (r + 9.0 * p);
  const double ratio = static_cast<double>(chunks) / static_cast<double>(matches);
  const double penalty = 0.5 * ratio * ratio * ratio;
  return f_mean * (1.0 - penalty);
}

MetricReport evaluate_pairs(const std::vector<TokenSeq>& hypotheses,
                            const std::vector<TokenSeq>& references) {
  check(hypotheses.size() == references.size(), "evaluate: count mismatch");
  check(!hypotheses.empty(), "evaluate: empty input");
  MetricReport report;
  report.sample_count = hypotheses.size();
  BleuResult b = bleu(hypotheses, references);
  report.bleu = b.corpus;
  double rouge_sum = 0.0, meteor_sum = 0.0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    PerSampleScores s;
    s.bleu = b.per_sentence[i];
    s.rouge_l = rouge_l(hypotheses[i], references[i]);
    s.meteor_s = meteor_simplified(hypotheses[i], references[i]);
    rouge_sum += s.rouge_l;
    meteor_sum += s.meteor_s;
    report.per_sample.push_back(s);
  }
  report.rouge_l = rouge_sum / static_cast<double>(hypotheses.size());
  report.meteor_s = meteor_sum / static_cast<double>(hypotheses.size());
  return report;
}

FreqBinReport token_freq_analysis(
    const std::map<std::string, std::vector<TokenSeq>>& system_outputs,
    const std::vector<TokenSeq>& references, const std::vector<CodeSample>& training_corpus) {
  std::map<std::string, long> train_freq;
  for (const auto& sample : training_corpus)
    for (const auto& tok : normalize_summary_tokens(sample.summary_tokens)) ++train_freq[tok];

  FreqBinReport report;
  for (const auto& [system, outputs] : system_outputs) {
    check(outputs.size() == references.size(),
          "token_freq_analysis: misaligned outputs for system " + system);
    auto& bins = report.counts[system];
    bins.fill(0);
    for (std::size_t i = 0; i < outputs.size(); ++i) {
      // multiset intersection: a repeated output token is credited at most
      // as often as the reference carries it
      std::map<std::string, long> ref_counts;
      for (const auto& tok : references[i]) ++ref_counts[tok];
      for (const auto& tok : outputs[i]) {
        auto it = ref_counts.find(tok);
        if (it == ref_counts.end() || it->second == 0) continue;
        --it->second;
        auto fit = train_freq.find(tok);
        if (fit == train_freq.end()) continue;
        for (std::size_t b = 0; b < kFreqBins.size(); ++b)
          if (static_cast<std::size_t>(fit->second) == kFreqBins[b]) ++bins[b];
      }
    }
  }
  return report;
}

}  // namespace tram
