#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "tram/corpus.hpp"

namespace tram {

using TokenSeq = std::vector<std::string>;

struct BleuResult {
  double corpus = 0.0;
  std::vector<double> per_sentence;
};

// Corpus-level smoothed 4-gram BLEU with brevity penalty. Precision counts
// get add-one smoothing only when an order above unigram has zero matches;
// zero unigram overlap scores 0.
BleuResult bleu(const std::vector<TokenSeq>& hypotheses, const std::vector<TokenSeq>& references);

// LCS-based F1.
double rouge_l(const TokenSeq& hypothesis, const TokenSeq& reference);

// Exact plus common-prefix-stem alignment (min stem 4), F_mean = 10PR/(R+9P),
// chunk penalty 0.5*(chunks/matches)^3. Reported as METEOR-s: no synonym
// resources.
double meteor_simplified(const TokenSeq& hypothesis, const TokenSeq& reference);

struct PerSampleScores {
  double bleu = 0.0;
  double rouge_l = 0.0;
  double meteor_s = 0.0;
};

struct MetricReport {
  double bleu = 0.0;      // corpus-level
  double rouge_l = 0.0;   // mean over samples
  double meteor_s = 0.0;  // mean over samples
  std::size_t sample_count = 0;
  std::vector<PerSampleScores> per_sample;
};

MetricReport evaluate_pairs(const std::vector<TokenSeq>& hypotheses,
                            const std::vector<TokenSeq>& references);

constexpr std::array<std::size_t, 6> kFreqBins = {1, 2, 5, 10, 50, 100};

struct FreqBinReport {
  // system name -> count of correctly generated tokens per frequency bin
  std::map<std::string, std::array<long, kFreqBins.size()>> counts;
};

// A generated token instance is correct when it matches the reference with
// multiset multiplicity; correct instances are binned by their exact token
// frequency in the training corpus summaries.
FreqBinReport token_freq_analysis(
    const std::map<std::string, std::vector<TokenSeq>>& system_outputs,
    const std::vector<TokenSeq>& references, const std::vector<CodeSample>& training_corpus);

}  // namespace tram
