#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "tram/corpus.hpp"
#include "tram/metrics.hpp"
#include "tram/model.hpp"
#include "tram/optimizer.hpp"

namespace tram {

struct TrainConfig {
  int batch_size = 32;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int patience = 15;
  int max_epochs = 200;
  std::uint64_t seed = 1;
  VocabOptions vocab;
  int val_max_len = 48;  // greedy-search validation decode cap
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_bleu = 0.0;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  int best_epoch = -1;
  double best_val_bleu = -1.0;
  bool stopped_early = false;
};

// Teacher-forced cross-entropy with Adam; after each epoch the validation
// split is decoded greedily and scored with BLEU. Stops once the best score
// has not improved for `patience` epochs and restores the best parameters.
ModelBundle train_model(const std::vector<CodeSample>& train_set,
                        const std::vector<CodeSample>& val_set, const ModelConfig& model_cfg,
                        const TrainConfig& train_cfg, TrainLog* log = nullptr,
                        const std::function<void(const EpochLog&)>& on_epoch = {});

// Fraction of teacher-forced positions whose argmax logit hits the target.
double teacher_forced_accuracy(ModelBundle& bundle, const std::vector<CodeSample>& samples);

}  // namespace tram
