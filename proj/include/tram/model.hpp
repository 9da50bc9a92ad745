#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "tram/autodiff.hpp"
#include "tram/corpus.hpp"
#include "tram/rng.hpp"
#include "tram/tensor.hpp"

namespace tram {

struct ModelConfig {
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

  void validate() const;
  int head_dim() const { return d_model / n_heads; }
};

struct EncodedSample {
  std::string id;
  std::vector<int> code_ids;
  std::vector<int> node_ids;
  std::vector<std::pair<int, int>> edges;
  std::vector<int> summary_ids;  // without BOS/EOS
};

struct EncoderOutputs {
  Tensor code_states;  // [p x d_model]
  Tensor ast_states;   // [q x d_model]
};

struct DecodeStepOutput {
  std::vector<double> d_prev;       // final decoder state at the last prefix position
  std::vector<double> attend_code;  // alpha over p code tokens
  std::vector<double> attend_node;  // beta over q AST nodes
  std::vector<double> logits;       // over summary vocabulary
};

// Whole-sequence teacher-forced pass; row t corresponds to input position t.
struct ForcedPass {
  Tensor states;       // [T x d_model]
  Tensor attn_code;    // [T x p]
  Tensor attn_node;    // [T x q]
  Tensor logits;       // [T x V_summary]
  Tensor code_states;  // [p x d_model]
  Tensor ast_states;   // [q x d_model]
};

// Relative-position transformer over code subtokens, graph-attention encoder
// over AST nodes, and a decoder with masked self-attention plus two staged
// cross-attention modules (code first, AST second). Pre-LN throughout the
// transformer blocks; attend-code/attend-node are the head-averaged final
// decoder layer cross-attention rows.
class TramModel {
 public:
  TramModel(const ModelConfig& cfg, std::size_t code_vocab, std::size_t node_vocab,
            std::size_t summary_vocab, std::uint64_t seed);

  struct DecoderGraph {
    Value states;
    Value logits;
    Value attn_code;  // invalid unless want_attention
    Value attn_node;
  };

  Value build_code_encoder(Tape& tape, const std::vector<int>& code_ids, Rng* dropout_rng);
  Value build_ast_encoder(Tape& tape, const std::vector<int>& node_ids,
                          const std::vector<std::pair<int, int>>& edges, Rng* dropout_rng);
  DecoderGraph build_decoder(Tape& tape, const std::vector<int>& input_ids, Value code_states,
                             Value ast_states, Rng* dropout_rng, bool want_attention);

  // inference entry points (dropout off, no gradients)
  Tensor sc_encode(const std::vector<int>& code_ids);
  Tensor ast_encode(const std::vector<int>& node_ids,
                    const std::vector<std::pair<int, int>>& edges);
  EncoderOutputs encode(const EncodedSample& sample);
  DecodeStepOutput decode_step(const std::vector<int>& prefix_with_bos,
                               const EncoderOutputs& enc);
  ForcedPass forced_pass(const EncodedSample& sample);

  // mean NLL over the teacher-forced targets (summary tokens plus EOS)
  Value training_loss(Tape& tape, const EncodedSample& sample, Rng* dropout_rng,
                      std::size_t* token_count = nullptr);

  ParameterSet& params() { return params_; }
  const ModelConfig& config() const { return cfg_; }
  std::size_t code_vocab_size() const { return code_vocab_size_; }
  std::size_t node_vocab_size() const { return node_vocab_size_; }
  std::size_t summary_vocab_size() const { return summary_vocab_size_; }

  bool is_trained() const { return trained_; }
  void mark_trained() { trained_ = true; }

 private:
  struct AttnParams {
    Parameter *wq, *bq, *wk, *bk, *wv, *bv, *wo, *bo;
    Parameter* rel = nullptr;  // relative-position key table, self-attention only
  };
  struct LnParams {
    Parameter *g, *b;
  };
  struct FfnParams {
    Parameter *w1, *b1, *w2, *b2;
  };
  struct EncLayer {
    LnParams ln1, ln2;
    AttnParams self;
    FfnParams ffn;
  };
  struct GatLayer {
    Parameter *w, *a_src, *a_dst;
    LnParams ln;
  };
  struct DecLayer {
    LnParams ln1, ln2, ln3, ln4;
    AttnParams self, cross_code, cross_ast;
    FfnParams ffn;
  };

  struct MhaResult {
    Value out;
    std::vector<Value> head_attn;
  };

  AttnParams create_attention(const std::string& prefix, bool relative, Rng& rng);
  LnParams create_layer_norm(const std::string& prefix);
  FfnParams create_ffn(const std::string& prefix, Rng& rng);
  Parameter& create_matrix(const std::string& name, std::size_t rows, std::size_t cols, Rng& rng);
  Parameter& create_bias(const std::string& name, std::size_t n);

  MhaResult multi_head_attention(Tape& tape, Value queries_in, Value memory_in,
                                 const AttnParams& p, const Tensor* mask, bool relative,
                                 bool want_attention);
  Value ffn_block(Tape& tape, Value x, const FfnParams& p);
  Value layer_norm_block(Tape& tape, Value x, const LnParams& p);
  Value maybe_dropout(Tape& tape, Value x, Rng* rng);

  ModelConfig cfg_;
  std::size_t code_vocab_size_, node_vocab_size_, summary_vocab_size_;
  ParameterSet params_;

  Parameter *code_embed_, *node_embed_, *summary_embed_;
  std::vector<EncLayer> enc_layers_;
  LnParams enc_final_ln_;
  std::vector<GatLayer> gat_layers_;
  std::vector<DecLayer> dec_layers_;
  LnParams dec_final_ln_;
  Parameter *out_w_, *out_b_;

  bool trained_ = false;

  static constexpr double kMaskOff = -1e30;
  static constexpr double kLayerNormEps = 1e-6;
  static constexpr double kLeakySlope = 0.2;
};

struct ModelBundle {
  ModelConfig config;
  Vocabulary code_vocab;
  Vocabulary node_vocab;
  Vocabulary summary_vocab;
  std::unique_ptr<TramModel> model;
};

EncodedSample encode_sample(const ModelBundle& bundle, const CodeSample& sample);

}  // namespace tram
