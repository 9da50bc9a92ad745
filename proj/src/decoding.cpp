#include "tram/decoding.hpp"

#include <algorithm>
#include <cmath>

#include "tram/common.hpp"

namespace tram {

namespace {

StepTrace make_trace_entry(const StepResult& res, int chosen) {
  StepTrace t;
  t.chosen = chosen;
  t.retrieved = res.retrieved;
  t.model_mass = res.model_weight *
                 (chosen < static_cast<int>(res.model_probs.size())
                      ? res.model_probs[static_cast<std::size_t>(chosen)]
                      : 0.0);
  double pr = 0.0;
  for (const auto& [tok, p] : res.retrieved)
    if (tok == chosen) pr += p;
  t.retrieval_mass = res.retrieval_weight * pr;
  return t;
}

// lexicographic over token ids, shorter sequence first on ties
bool tokens_less(const std::vector<int>& a, const std::vector<int>& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

}  // namespace

Hypothesis greedy_decode_core(const StepFn& step_fn, std::size_t vocab, int max_len,
                              bool want_trace) {
  check(max_len >= 1, "greedy: max_len must be >= 1");
  Hypothesis hyp;
  std::vector<int> prefix{Vocabulary::kBos};
  for (int step = 0; step < max_len; ++step) {
    StepResult res = step_fn(prefix);
    check(res.probs.size() == vocab, "greedy: step distribution size mismatch");
    std::size_t best = 0;
    for (std::size_t v = 1; v < vocab; ++v)
      if (res.probs[v] > res.probs[best]) best = v;
    int chosen = static_cast<int>(best);
    hyp.log_prob += std::log(res.probs[best]);
    if (want_trace) hyp.trace.push_back(make_trace_entry(res, chosen));
    if (chosen == Vocabulary::kEos) {
      hyp.ended_with_eos = true;
      break;
    }
    hyp.tokens.push_back(chosen);
    prefix.push_back(chosen);
  }
  const double len =
      static_cast<double>(hyp.tokens.size() + (hyp.ended_with_eos ? 1 : 0));
  hyp.normalized_score = hyp.log_prob / std::max(1.0, len);
  return hyp;
}

Hypothesis beam_search_core(const StepFn& step_fn, std::size_t vocab, int beam, int max_len,
                            bool want_trace) {
  check(beam >= 1, "beam: beam size must be >= 1");
  check(max_len >= 1, "beam: max_len must be >= 1");

  struct Partial {
    std::vector<int> tokens;
    double log_prob = 0.0;
    std::vector<StepTrace> trace;
  };
  std::vector<Partial> live{Partial{}};
  std::vector<Hypothesis> finished;

  auto close = [&](Partial&& p, bool eos) {
    Hypothesis h;
    h.tokens = std::move(p.tokens);
    h.log_prob = p.log_prob;
    h.ended_with_eos = eos;
    h.trace = std::move(p.trace);
    const double len = static_cast<double>(h.tokens.size() + (eos ? 1 : 0));
    h.normalized_score = h.log_prob / std::max(1.0, len);
    finished.push_back(std::move(h));
  };

  for (int step = 0; step < max_len && !live.empty(); ++step) {
    struct Candidate {
      double log_prob;
      std::size_t parent;
      int token;
    };
    std::vector<Candidate> candidates;
    std::vector<StepResult> results(live.size());
    for (std::size_t b = 0; b < live.size(); ++b) {
      std::vector<int> prefix;
      prefix.reserve(live[b].tokens.size() + 1);
      prefix.push_back(Vocabulary::kBos);
      prefix.insert(prefix.end(), live[b].tokens.begin(), live[b].tokens.end());
      results[b] = step_fn(prefix);
      check(results[b].probs.size() == vocab, "beam: step distribution size mismatch");
      for (std::size_t v = 0; v < vocab; ++v) {
        double lp = live[b].log_prob + std::log(results[b].probs[v]);
        if (std::isnan(lp)) continue;
        candidates.push_back({lp, b, static_cast<int>(v)});
      }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
      if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
      if (a.parent != b.parent) return a.parent < b.parent;
      return a.token < b.token;
    });
    // the step keeps the top `beam` expansions; EOS expansions finish
    std::vector<Partial> next;
    const std::size_t width = static_cast<std::size_t>(beam);
    std::size_t taken = 0;
    for (const auto& c : candidates) {
      if (taken >= width) break;
      ++taken;
      Partial p;
      p.tokens = live[c.parent].tokens;
      p.log_prob = c.log_prob;
      p.trace = live[c.parent].trace;
      if (want_trace) p.trace.push_back(make_trace_entry(results[c.parent], c.token));
      if (c.token == Vocabulary::kEos) {
        close(std::move(p), true);
      } else {
        p.tokens.push_back(c.token);
        next.push_back(std::move(p));
      }
    }
    live = std::move(next);
  }
  for (auto& p : live) close(std::move(p), false);

  check(!finished.empty(), "beam: no hypotheses produced");
  std::size_t best = 0;
  for (std::size_t i = 1; i < finished.size(); ++i) {
    const auto& a = finished[i];
    const auto& b = finished[best];
    if (a.normalized_score > b.normalized_score ||
        (a.normalized_score == b.normalized_score && tokens_less(a.tokens, b.tokens)))
      best = i;
  }
  return std::move(finished[best]);
}

StepFn make_model_step_fn(TramModel& model, const EncoderOutputs& enc, const FusionHook& hook) {
  return [&model, &enc, hook](const std::vector<int>& prefix_with_bos) {
    DecodeStepOutput step = model.decode_step(prefix_with_bos, enc);
    StepResult res;
    Tensor logits = Tensor::row_vector(step.logits);
    res.model_probs = softmax(logits, 0).data();
    res.probs = res.model_probs;
    if (hook) {
      StepContext ctx{step, enc, prefix_with_bos};
      hook(ctx, res);
    }
    return res;
  };
}

Hypothesis greedy_decode(TramModel& model, const EncoderOutputs& enc, int max_len,
                         const FusionHook& hook, bool want_trace) {
  max_len = std::min(max_len, model.config().max_summary_len);
  return greedy_decode_core(make_model_step_fn(model, enc, hook), model.summary_vocab_size(),
                            max_len, want_trace);
}

Hypothesis beam_search(TramModel& model, const EncoderOutputs& enc, int beam, int max_len,
                       const FusionHook& hook, bool want_trace) {
  max_len = std::min(max_len, model.config().max_summary_len);
  return beam_search_core(make_model_step_fn(model, enc, hook), model.summary_vocab_size(), beam,
                          max_len, want_trace);
}

}  // namespace tram
