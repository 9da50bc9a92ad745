#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "tram/model.hpp"

namespace tram {

// One generation step of a hypothesis trace: the chosen token, the tokens
// retrieved at that step with their retrieval-distribution probabilities,
// and the weighted model/retrieval mass behind the choice.
struct StepTrace {
  int chosen = -1;
  std::vector<std::pair<int, double>> retrieved;  // (token id, P_r) desc
  double model_mass = 0.0;
  double retrieval_mass = 0.0;
};

// Everything a step function must hand back: the distribution that drives
// token selection plus the bookkeeping needed to fill a StepTrace once the
// chosen token is known.
struct StepResult {
  std::vector<double> probs;                      // selection distribution
  std::vector<double> model_probs;                // P_m, for provenance
  std::vector<std::pair<int, double>> retrieved;  // (token id, P_r), desc
  double model_weight = 1.0;                      // chosen-token P_m multiplier
  double retrieval_weight = 0.0;                  // chosen-token P_r multiplier
};

using StepFn = std::function<StepResult(const std::vector<int>& prefix_with_bos)>;

// Per-step transform from the model distribution to the selection
// distribution; identity when absent.
struct StepContext {
  const DecodeStepOutput& step;
  const EncoderOutputs& enc;
  const std::vector<int>& prefix_with_bos;
};
using FusionHook = std::function<void(const StepContext&, StepResult&)>;

struct Hypothesis {
  std::vector<int> tokens;  // generated summary ids, EOS not included
  double log_prob = 0.0;
  double normalized_score = 0.0;  // log_prob / generated length (EOS counted)
  bool ended_with_eos = false;
  std::vector<StepTrace> trace;
};

// Argmax per step until EOS or max_len; ties break toward the lowest id.
Hypothesis greedy_decode_core(const StepFn& step_fn, std::size_t vocab, int max_len,
                              bool want_trace);

// Length-normalized beam search over a step function. With beam == 1 the
// result matches greedy_decode_core token for token.
Hypothesis beam_search_core(const StepFn& step_fn, std::size_t vocab, int beam, int max_len,
                            bool want_trace);

// Model-backed wrappers; the hook injects retrieval fusion per step.
StepFn make_model_step_fn(TramModel& model, const EncoderOutputs& enc,
                          const FusionHook& hook = {});
Hypothesis greedy_decode(TramModel& model, const EncoderOutputs& enc, int max_len,
                         const FusionHook& hook = {}, bool want_trace = false);
Hypothesis beam_search(TramModel& model, const EncoderOutputs& enc, int beam, int max_len,
                       const FusionHook& hook = {}, bool want_trace = false);

}  // namespace tram
