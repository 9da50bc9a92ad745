#include "tram/training.hpp"

#include <cmath>
#include <numeric>

#include "tram/common.hpp"
#include "tram/decoding.hpp"

namespace tram {

namespace {

std::vector<TokenSeq> greedy_validation(ModelBundle& bundle,
                                        const std::vector<EncodedSample>& samples, int max_len) {
  std::vector<TokenSeq> out;
  out.reserve(samples.size());
  for (const auto& enc_sample : samples) {
    EncoderOutputs enc = bundle.model->encode(enc_sample);
    Hypothesis hyp = greedy_decode(*bundle.model, enc, max_len);
    TokenSeq tokens;
    tokens.reserve(hyp.tokens.size());
    for (int id : hyp.tokens) tokens.push_back(bundle.summary_vocab.token(id));
    out.push_back(std::move(tokens));
  }
  return out;
}

}  // namespace

ModelBundle train_model(const std::vector<CodeSample>& train_set,
                        const std::vector<CodeSample>& val_set, const ModelConfig& model_cfg,
                        const TrainConfig& train_cfg, TrainLog* log,
                        const std::function<void(const EpochLog&)>& on_epoch) {
  check(!train_set.empty() && !val_set.empty(), "train: empty split");
  check(train_cfg.batch_size >= 1, "train: batch size must be >= 1");
  check(train_cfg.max_epochs >= 1, "train: max_epochs must be >= 1");

  ModelBundle bundle;
  bundle.config = model_cfg;
  auto [code_vocab, summary_vocab] = build_vocab(train_set, train_cfg.vocab);
  bundle.code_vocab = std::move(code_vocab);
  bundle.summary_vocab = std::move(summary_vocab);
  bundle.node_vocab = build_node_vocab(train_set, train_cfg.vocab);
  bundle.model = std::make_unique<TramModel>(model_cfg, bundle.code_vocab.size(),
                                             bundle.node_vocab.size(),
                                             bundle.summary_vocab.size(), train_cfg.seed);

  std::vector<EncodedSample> train_enc, val_enc;
  train_enc.reserve(train_set.size());
  for (const auto& s : train_set) train_enc.push_back(encode_sample(bundle, s));
  val_enc.reserve(val_set.size());
  for (const auto& s : val_set) val_enc.push_back(encode_sample(bundle, s));
  std::vector<TokenSeq> val_refs;
  val_refs.reserve(val_set.size());
  for (const auto& s : val_set) val_refs.push_back(normalize_summary_tokens(s.summary_tokens));

  Adam optimizer({train_cfg.lr, train_cfg.beta1, train_cfg.beta2, train_cfg.adam_eps});
  Rng shuffle_rng(train_cfg.seed * 7919 + 1);
  Rng dropout_rng(train_cfg.seed * 104729 + 2);

  TrainLog local_log;
  TrainLog& tlog = log ? *log : local_log;
  std::vector<Tensor> best_params;
  int epochs_since_best = 0;

  std::vector<std::size_t> order(train_enc.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= train_cfg.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(train_cfg.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(train_cfg.batch_size));
      bundle.model->params().zero_grad_all();
      double batch_loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        Tape tape;
        Value loss = bundle.model->training_loss(tape, train_enc[order[i]], &dropout_rng);
        // batch objective is the mean of per-sample mean NLLs
        Value scaled = tape.mul_scalar(loss, 1.0 / static_cast<double>(end - start));
        batch_loss += tape.value_of(loss)[0];
        tape.backward(scaled);
      }
      batch_loss /= static_cast<double>(end - start);
      check(std::isfinite(batch_loss),
            "train: loss diverged (non-finite) at epoch " + std::to_string(epoch));
      optimizer.step(bundle.model->params());
      loss_sum += batch_loss * static_cast<double>(end - start);
      loss_count += end - start;
    }
    const double train_loss = loss_sum / static_cast<double>(loss_count);

    auto val_hyps = greedy_validation(bundle, val_enc, train_cfg.val_max_len);
    const double val_bleu = bleu(val_hyps, val_refs).corpus;
    tlog.epochs.push_back({epoch, train_loss, val_bleu});
    if (on_epoch) on_epoch(tlog.epochs.back());

    if (val_bleu > tlog.best_val_bleu) {
      tlog.best_val_bleu = val_bleu;
      tlog.best_epoch = epoch;
      epochs_since_best = 0;
      best_params.clear();
      ParameterSet& params = bundle.model->params();
      for (std::size_t i = 0; i < params.size(); ++i) best_params.push_back(params.at(i).value);
    } else {
      ++epochs_since_best;
      if (epochs_since_best >= train_cfg.patience) {
        tlog.stopped_early = true;
        break;
      }
    }
  }

  if (!best_params.empty()) {
    ParameterSet& params = bundle.model->params();
    for (std::size_t i = 0; i < params.size(); ++i) params.at(i).value = best_params[i];
  }
  bundle.model->mark_trained();
  return bundle;
}

double teacher_forced_accuracy(ModelBundle& bundle, const std::vector<CodeSample>& samples) {
  check(!samples.empty(), "accuracy: empty sample set");
  long hits = 0, total = 0;
  for (const auto& sample : samples) {
    EncodedSample enc = encode_sample(bundle, sample);
    ForcedPass pass = bundle.model->forced_pass(enc);
    std::vector<int> targets(enc.summary_ids);
    targets.push_back(Vocabulary::kEos);
    for (std::size_t t = 0; t < targets.size(); ++t) {
      auto row = pass.logits.row(t);
      std::size_t best = 0;
      for (std::size_t v = 1; v < row.size(); ++v)
        if (row[v] > row[best]) best = v;
      if (static_cast<int>(best) == targets[t]) ++hits;
      ++total;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace tram
