#include "tram/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>

#include <json.hpp>

#include "tram/common.hpp"

namespace tram {

void FusionConfig::validate() const {
  check(lambda >= 0.0 && lambda <= 1.0, "fusion: lambda must be in [0, 1]");
  check(temperature > 0.0, "fusion: temperature must be positive");
  check(top_k >= 1, "fusion: top_k must be >= 1");
  check(lambda1 >= 0.0 && lambda2 >= 0.0, "fusion: lambda1/lambda2 must be nonnegative");
  check(lambda1 + lambda2 <= 1.0, "fusion: lambda1 + lambda2 must be <= 1");
}

std::vector<double> retrieval_distribution(const std::vector<RetrievalTriple>& triples,
                                           double temperature, std::size_t vocab) {
  check(!triples.empty(), "retrieval_distribution: empty triple set");
  check(temperature > 0.0, "retrieval_distribution: temperature must be positive");
  // max-subtracted for stability at large T
  double mx = triples[0].similarity * temperature;
  for (const auto& t : triples) mx = std::max(mx, t.similarity * temperature);
  std::vector<double> p(vocab, 0.0);
  double total = 0.0;
  for (const auto& t : triples) {
    check(t.value >= 0 && static_cast<std::size_t>(t.value) < vocab,
          "retrieval_distribution: value id out of range");
    double w = std::exp(t.similarity * temperature - mx);
    p[static_cast<std::size_t>(t.value)] += w;
    total += w;
  }
  for (double& v : p) v /= total;
  return p;
}

std::vector<double> fuse_two(const std::vector<double>& p_m, const std::vector<double>& p_r,
                             double lambda) {
  check(lambda >= 0.0 && lambda <= 1.0, "fuse_two: lambda outside [0, 1]");
  check(p_m.size() == p_r.size(), "fuse_two: distribution size mismatch");
  std::vector<double> out(p_m.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = lambda * p_r[i] + (1.0 - lambda) * p_m[i];
  return out;
}

std::vector<double> fuse_three(const std::vector<double>& p_m, const std::vector<double>& p_r,
                               const std::vector<double>& p_s, double sim, double lambda1,
                               double lambda2) {
  check(lambda1 >= 0.0 && lambda2 >= 0.0 && lambda1 + lambda2 <= 1.0,
        "fuse_three: weight constraint violated");
  check(p_m.size() == p_r.size() && p_m.size() == p_s.size(),
        "fuse_three: distribution size mismatch");
  const double z = 1.0 - lambda2 * (1.0 - sim);
  check(z > 0.0, "fuse_three: degenerate weights (zero total mass)");
  std::vector<double> out(p_m.size());
  const double wm = 1.0 - lambda1 - lambda2;
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = (lambda1 * p_r[i] + lambda2 * sim * p_s[i] + wm * p_m[i]) / z;
  return out;
}

std::vector<double> code_embedding_from_states(const Tensor& code_states) {
  check(code_states.ndim() == 2, "code_embedding: states must be rank 2");
  std::vector<double> mean(code_states.cols(), 0.0);
  for (std::size_t i = 0; i < code_states.rows(); ++i) {
    auto row = code_states.row(i);
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += row[j];
  }
  for (double& v : mean) v /= static_cast<double>(code_states.rows());
  return l2_normalize(mean);
}

std::vector<double> code_embedding(TramModel& model, const EncodedSample& sample) {
  return code_embedding_from_states(model.sc_encode(sample.code_ids));
}

SentenceIndex::SentenceIndex(ModelBundle& bundle, const std::vector<CodeSample>& corpus)
    : corpus_(&corpus) {
  check(!corpus.empty(), "sentence index: empty corpus");
  ids_.reserve(corpus.size());
  embeddings_.reserve(corpus.size());
  for (const auto& s : corpus) {
    ids_.push_back(s.id);
    embeddings_.push_back(code_embedding(*bundle.model, encode_sample(bundle, s)));
  }
}

SentenceRetrievalResult retrieve_most_similar(const std::vector<std::vector<double>>& embeddings,
                                              const std::vector<std::string>& ids,
                                              const std::vector<double>& query_embedding,
                                              const std::string& exclude_id) {
  check(embeddings.size() == ids.size(), "sentence retrieval: id/embedding count mismatch");
  bool found = false;
  SentenceRetrievalResult best{0, "", -2.0, 0.0};
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    if (ids[i] == exclude_id) continue;
    double sim = dot(query_embedding, embeddings[i]);
    if (!found || sim > best.similarity) {
      found = true;
      best = {i, ids[i], sim, std::max(sim, 0.0)};
    }
  }
  check(found, "sentence retrieval: corpus holds only the query itself");
  return best;
}

SentenceRetrievalResult SentenceIndex::retrieve(const std::vector<double>& query_embedding,
                                                const std::string& exclude_id) const {
  return retrieve_most_similar(embeddings_, ids_, query_embedding, exclude_id);
}

namespace {

std::vector<std::pair<int, double>> retrieved_pairs(const std::vector<RetrievalTriple>& triples,
                                                    const std::vector<double>& p_r) {
  // unique retrieved tokens with their post-normalization probabilities,
  // sorted by probability descending, id ascending on ties
  std::map<int, double> uniq;
  for (const auto& t : triples) uniq[t.value] = p_r[static_cast<std::size_t>(t.value)];
  std::vector<std::pair<int, double>> out(uniq.begin(), uniq.end());
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return out;
}

GenerationResult finish_result(Hypothesis&& hyp, const Vocabulary& vocab) {
  GenerationResult r;
  r.token_ids = std::move(hyp.tokens);
  r.tokens.reserve(r.token_ids.size());
  for (int id : r.token_ids) r.tokens.push_back(vocab.token(id));
  r.score = hyp.normalized_score;
  r.trace = std::move(hyp.trace);
  return r;
}

}  // namespace

GenerationResult generate_tram(ModelBundle& bundle, const CodeSample& sample,
                               const Datastore& datastore, const FusionConfig& fusion,
                               const DecodeOptions& decode, const SentenceIndex* sentence_index) {
  fusion.validate();
  check(bundle.model != nullptr, "generate_tram: empty bundle");
  const int expected_dim = fusion.without_hr ? bundle.config.d_model : 3 * bundle.config.d_model;
  check(datastore.key_dim() == expected_dim,
        "generate_tram: datastore key dimension " + std::to_string(datastore.key_dim()) +
            " does not match model (" + std::to_string(expected_dim) + ")");

  TramModel& model = *bundle.model;
  EncodedSample enc_sample = encode_sample(bundle, sample);
  EncoderOutputs enc = model.encode(enc_sample);

  // three-way mode: resolve the most similar snippet once, encode it once,
  // then run its decoder in lockstep on the shared prefix
  std::optional<SentenceRetrievalResult> sentence;
  EncoderOutputs similar_enc;
  if (fusion.mode == FusionConfig::Mode::kTokenSentence) {
    check(sentence_index != nullptr, "generate_tram: three-way mode needs a sentence index");
    auto query = code_embedding_from_states(enc.code_states);
    sentence = sentence_index->retrieve(query, sample.id);
    similar_enc = model.encode(encode_sample(bundle, sentence_index->sample(sentence->corpus_index)));
  }

  FusionHook hook = [&](const StepContext& ctx, StepResult& res) {
    auto h = weighted_context(ctx.step.attend_code, ctx.enc.code_states);
    auto r = weighted_context(ctx.step.attend_node, ctx.enc.ast_states);
    auto query = make_key(h, r, ctx.step.d_prev, fusion.without_hr);
    auto triples = datastore.query_topk(query, fusion.top_k, fusion.metric);
    auto p_r = retrieval_distribution(triples, fusion.temperature, res.model_probs.size());
    res.retrieved = retrieved_pairs(triples, p_r);
    if (fusion.mode == FusionConfig::Mode::kTokenOnly) {
      res.probs = fuse_two(res.model_probs, p_r, fusion.lambda);
      res.model_weight = 1.0 - fusion.lambda;
      res.retrieval_weight = fusion.lambda;
    } else {
      DecodeStepOutput similar_step = model.decode_step(ctx.prefix_with_bos, similar_enc);
      auto p_s = softmax(Tensor::row_vector(similar_step.logits), 0).data();
      const double sim = sentence->clamped_similarity;
      res.probs = fuse_three(res.model_probs, p_r, p_s, sim, fusion.lambda1, fusion.lambda2);
      const double z = 1.0 - fusion.lambda2 * (1.0 - sim);
      res.model_weight = (1.0 - fusion.lambda1 - fusion.lambda2) / z;
      res.retrieval_weight = fusion.lambda1 / z;
    }
  };

  Hypothesis hyp = decode.beam <= 1
                       ? greedy_decode(model, enc, decode.max_len, hook, decode.want_trace)
                       : beam_search(model, enc, decode.beam, decode.max_len, hook,
                                     decode.want_trace);
  GenerationResult result = finish_result(std::move(hyp), bundle.summary_vocab);
  result.sentence = sentence;
  return result;
}

GenerationResult generate_base(ModelBundle& bundle, const CodeSample& sample,
                               const DecodeOptions& decode) {
  check(bundle.model != nullptr, "generate_base: empty bundle");
  TramModel& model = *bundle.model;
  EncodedSample enc_sample = encode_sample(bundle, sample);
  EncoderOutputs enc = model.encode(enc_sample);
  Hypothesis hyp = decode.beam <= 1
                       ? greedy_decode(model, enc, decode.max_len, {}, decode.want_trace)
                       : beam_search(model, enc, decode.beam, decode.max_len, {},
                                     decode.want_trace);
  return finish_result(std::move(hyp), bundle.summary_vocab);
}

void append_trace(std::ostream& out, const std::vector<StepTrace>& trace,
                  const Vocabulary& summary_vocab) {
  using nlohmann::json;
  int step = 0;
  for (const auto& t : trace) {
    ++step;
    json j;
    j["step"] = step;
    j["chosen"] = summary_vocab.token(t.chosen);
    json retrieved = json::array();
    for (const auto& [tok, p] : t.retrieved)
      retrieved.push_back(json::array({summary_vocab.token(tok), p}));
    j["retrieved"] = retrieved;
    j["model_mass"] = t.model_mass;
    j["retrieval_mass"] = t.retrieval_mass;
    out << j.dump() << '\n';
  }
}

}  // namespace tram
