#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tram/datastore.hpp"
#include "tram/decoding.hpp"
#include "tram/model.hpp"

namespace tram {

struct FusionConfig {
  double lambda = 0.5;       // retrieval weight, token-only mode
  double temperature = 10.0; // kernel g(k, alpha) = alpha * T
  int top_k = 16;
  enum class Mode { kTokenOnly, kTokenSentence } mode = Mode::kTokenOnly;
  double lambda1 = 0.4;  // token-retrieval weight, three-way mode
  double lambda2 = 0.2;  // sentence weight, three-way mode
  bool without_hr = false;
  RetrievalMetric metric = RetrievalMetric::kCosine;

  void validate() const;
};

// P_r(v) proportional to sum over triples with value v of exp(alpha_i * T);
// zero on non-retrieved tokens.
std::vector<double> retrieval_distribution(const std::vector<RetrievalTriple>& triples,
                                           double temperature, std::size_t vocab);

// lambda * P_r + (1 - lambda) * P_m
std::vector<double> fuse_two(const std::vector<double>& p_m, const std::vector<double>& p_r,
                             double lambda);

// lambda1 * P_r + lambda2 * Sim * P_s + (1 - lambda1 - lambda2) * P_m,
// renormalized to a proper distribution (raw mass is 1 - lambda2*(1-Sim)).
std::vector<double> fuse_three(const std::vector<double>& p_m, const std::vector<double>& p_r,
                               const std::vector<double>& p_s, double sim, double lambda1,
                               double lambda2);

// Mean of the final code-encoder states, L2 normalized.
std::vector<double> code_embedding(TramModel& model, const EncodedSample& sample);
std::vector<double> code_embedding_from_states(const Tensor& code_states);

struct SentenceRetrievalResult {
  std::size_t corpus_index;
  std::string id;
  double similarity;          // raw cosine
  double clamped_similarity;  // max(similarity, 0), the P_s weight
};

// Argmax cosine over unit embeddings, skipping entries that carry the
// query's own id; earlier index wins ties.
SentenceRetrievalResult retrieve_most_similar(const std::vector<std::vector<double>>& embeddings,
                                              const std::vector<std::string>& ids,
                                              const std::vector<double>& query_embedding,
                                              const std::string& exclude_id);

// Pooled-embedding index over a retrieval corpus for sentence-level lookup.
// Holds a reference to the corpus; the caller keeps it alive.
class SentenceIndex {
 public:
  SentenceIndex(ModelBundle& bundle, const std::vector<CodeSample>& corpus);

  // Most similar entry, excluding any with the query's own id.
  SentenceRetrievalResult retrieve(const std::vector<double>& query_embedding,
                                   const std::string& exclude_id) const;
  const CodeSample& sample(std::size_t corpus_index) const { return (*corpus_)[corpus_index]; }
  std::size_t size() const { return embeddings_.size(); }

 private:
  const std::vector<CodeSample>* corpus_;
  std::vector<std::string> ids_;
  std::vector<std::vector<double>> embeddings_;
};

struct DecodeOptions {
  int beam = 4;       // 1 selects the greedy path
  int max_len = 48;
  bool want_trace = false;
};

struct GenerationResult {
  std::vector<int> token_ids;
  std::vector<std::string> tokens;
  double score = 0.0;
  std::vector<StepTrace> trace;
  std::optional<SentenceRetrievalResult> sentence;  // three-way mode only
};

// Full Tram decoding: per step build the fused query key, retrieve top-K,
// expand to P_r, fuse with the model distribution (and the synchronized
// second decoder's P_s in three-way mode), then pick via greedy or beam.
GenerationResult generate_tram(ModelBundle& bundle, const CodeSample& sample,
                               const Datastore& datastore, const FusionConfig& fusion,
                               const DecodeOptions& decode,
                               const SentenceIndex* sentence_index = nullptr);

// Base-model decoding without retrieval, same output conventions.
GenerationResult generate_base(ModelBundle& bundle, const CodeSample& sample,
                               const DecodeOptions& decode);

// One JSONL object per step: {"step", "chosen", "retrieved", "model_mass",
// "retrieval_mass"}; step restarts at 1 for each new sample.
void append_trace(std::ostream& out, const std::vector<StepTrace>& trace,
                  const Vocabulary& summary_vocab);

}  // namespace tram
