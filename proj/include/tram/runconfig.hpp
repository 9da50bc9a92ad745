#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tram/fusion.hpp"
#include "tram/model.hpp"
#include "tram/training.hpp"

namespace tram {

// Flat hyperparameter surface shared by every CLI subcommand. Config files
// are `key = value` lines with `#` comments; unknown keys are rejected and
// command-line flags win over file values.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string out = "out";
  std::string corpus;
  std::string checkpoint;
  std::string datastore;
  std::string trace;
  std::string split = "test";

  int d_model = 128;
  int n_heads = 4;
  int n_enc_layers = 2;
  int n_dec_layers = 2;
  int n_gat_layers = 2;
  int ffn_dim = 256;
  int k_clip = 16;
  double dropout = 0.1;
  int max_code_len = 512;
  int max_summary_len = 64;

  double lr = 1e-4;
  int batch = 32;
  int patience = 15;
  int max_epochs = 200;
  int min_freq = 1;
  int max_vocab = 50000;

  double lambda = 0.5;
  double temp = 10.0;
  int topk = 16;
  std::string mode = "token";  // token | token+sentence
  double lambda1 = 0.4;
  double lambda2 = 0.2;
  bool no_hr = false;
  std::string metric = "cosine";  // cosine | l2

  int beam = 4;
  int max_len = 48;

  std::uint64_t train_size = 500;
  std::uint64_t val_size = 100;
  std::uint64_t test_size = 100;

  std::string fractions = "0,0.05,0.1,0.2";
  int noise_seeds = 5;
  std::string lambdas = "0,0.25,0.5,0.75,1";
  std::string temps = "10";

  void load_file(const std::filesystem::path& path);
  void set(const std::string& key, const std::string& value);
  std::string dump() const;  // sorted `key = value` lines

  ModelConfig model_config() const;
  TrainConfig train_config() const;
  FusionConfig fusion_config() const;
};

std::vector<double> parse_double_list(const std::string& csv);

// temp file + rename so readers never observe a partial artifact
void atomic_write_text(const std::filesystem::path& path, const std::string& content);

}  // namespace tram
