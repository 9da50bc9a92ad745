#include "tram/model.hpp"

#include <cmath>

#include "tram/common.hpp"

namespace tram {

void ModelConfig::validate() const {
  check(d_model > 0 && n_heads > 0, "config: d_model and n_heads must be positive");
  check(d_model % n_heads == 0, "config: d_model must be divisible by n_heads");
  check(n_enc_layers > 0 && n_dec_layers > 0 && n_gat_layers > 0,
        "config: layer counts must be positive");
  check(ffn_dim > 0, "config: ffn_dim must be positive");
  check(k_clip >= 1, "config: k_clip must be >= 1");
  check(dropout >= 0.0 && dropout < 1.0, "config: dropout must be in [0, 1)");
  check(max_code_len > 0 && max_summary_len > 0, "config: max lengths must be positive");
}

TramModel::TramModel(const ModelConfig& cfg, std::size_t code_vocab, std::size_t node_vocab,
                     std::size_t summary_vocab, std::uint64_t seed)
    : cfg_(cfg),
      code_vocab_size_(code_vocab),
      node_vocab_size_(node_vocab),
      summary_vocab_size_(summary_vocab) {
  cfg_.validate();
  check(code_vocab >= 5 && node_vocab >= 5 && summary_vocab >= 5,
        "model: vocabularies must contain at least one real token");
  Rng rng(seed);
  const auto d = static_cast<std::size_t>(cfg_.d_model);
  const auto dh = static_cast<std::size_t>(cfg_.head_dim());
  const auto heads = static_cast<std::size_t>(cfg_.n_heads);

  code_embed_ = &create_matrix("code_embed", code_vocab, d, rng);
  node_embed_ = &create_matrix("node_embed", node_vocab, d, rng);
  summary_embed_ = &create_matrix("summary_embed", summary_vocab, d, rng);

  for (int l = 0; l < cfg_.n_enc_layers; ++l) {
    std::string p = "enc." + std::to_string(l) + ".";
    EncLayer layer;
    layer.ln1 = create_layer_norm(p + "ln1");
    layer.self = create_attention(p + "self", true, rng);
    layer.ln2 = create_layer_norm(p + "ln2");
    layer.ffn = create_ffn(p + "ffn", rng);
    enc_layers_.push_back(layer);
  }
  enc_final_ln_ = create_layer_norm("enc.final_ln");

  for (int l = 0; l < cfg_.n_gat_layers; ++l) {
    std::string p = "gat." + std::to_string(l) + ".";
    GatLayer layer;
    layer.w = &create_matrix(p + "w", d, d, rng);
    layer.a_src = &create_matrix(p + "a_src", dh, heads, rng);
    layer.a_dst = &create_matrix(p + "a_dst", dh, heads, rng);
    layer.ln = create_layer_norm(p + "ln");
    gat_layers_.push_back(layer);
  }

  for (int l = 0; l < cfg_.n_dec_layers; ++l) {
    std::string p = "dec." + std::to_string(l) + ".";
    DecLayer layer;
    layer.ln1 = create_layer_norm(p + "ln1");
    layer.self = create_attention(p + "self", true, rng);
    layer.ln2 = create_layer_norm(p + "ln2");
    layer.cross_code = create_attention(p + "cross_code", false, rng);
    layer.ln3 = create_layer_norm(p + "ln3");
    layer.cross_ast = create_attention(p + "cross_ast", false, rng);
    layer.ln4 = create_layer_norm(p + "ln4");
    layer.ffn = create_ffn(p + "ffn", rng);
    dec_layers_.push_back(layer);
  }
  dec_final_ln_ = create_layer_norm("dec.final_ln");
  out_w_ = &create_matrix("out.w", d, summary_vocab, rng);
  out_b_ = &create_bias("out.b", summary_vocab);
}

Parameter& TramModel::create_matrix(const std::string& name, std::size_t rows, std::size_t cols,
                                    Rng& rng) {
  Tensor t({rows, cols});
  double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-a, a);
  return params_.create(name, std::move(t));
}

Parameter& TramModel::create_bias(const std::string& name, std::size_t n) {
  return params_.create(name, Tensor::zeros({n}));
}

TramModel::AttnParams TramModel::create_attention(const std::string& prefix, bool relative,
                                                  Rng& rng) {
  const auto d = static_cast<std::size_t>(cfg_.d_model);
  AttnParams p;
  p.wq = &create_matrix(prefix + ".wq", d, d, rng);
  p.bq = &create_bias(prefix + ".bq", d);
  p.wk = &create_matrix(prefix + ".wk", d, d, rng);
  p.bk = &create_bias(prefix + ".bk", d);
  p.wv = &create_matrix(prefix + ".wv", d, d, rng);
  p.bv = &create_bias(prefix + ".bv", d);
  p.wo = &create_matrix(prefix + ".wo", d, d, rng);
  p.bo = &create_bias(prefix + ".bo", d);
  if (relative) {
    auto rows = static_cast<std::size_t>(2 * cfg_.k_clip + 1);
    auto dh = static_cast<std::size_t>(cfg_.head_dim());
    Tensor t({rows, dh});
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.normal() * 0.02;
    p.rel = &params_.create(prefix + ".rel", std::move(t));
  }
  return p;
}

TramModel::LnParams TramModel::create_layer_norm(const std::string& prefix) {
  const auto d = static_cast<std::size_t>(cfg_.d_model);
  LnParams p;
  p.g = &params_.create(prefix + ".g", Tensor::filled({d}, 1.0));
  p.b = &params_.create(prefix + ".b", Tensor::zeros({d}));
  return p;
}

TramModel::FfnParams TramModel::create_ffn(const std::string& prefix, Rng& rng) {
  const auto d = static_cast<std::size_t>(cfg_.d_model);
  const auto f = static_cast<std::size_t>(cfg_.ffn_dim);
  FfnParams p;
  p.w1 = &create_matrix(prefix + ".w1", d, f, rng);
  p.b1 = &create_bias(prefix + ".b1", f);
  p.w2 = &create_matrix(prefix + ".w2", f, d, rng);
  p.b2 = &create_bias(prefix + ".b2", d);
  return p;
}

Value TramModel::maybe_dropout(Tape& tape, Value x, Rng* rng) {
  if (rng == nullptr || cfg_.dropout <= 0.0) return x;
  return tape.dropout(x, cfg_.dropout, *rng);
}

Value TramModel::layer_norm_block(Tape& tape, Value x, const LnParams& p) {
  return tape.layer_norm_rows(x, tape.leaf(*p.g), tape.leaf(*p.b), kLayerNormEps);
}

Value TramModel::ffn_block(Tape& tape, Value x, const FfnParams& p) {
  Value h = tape.add_row_broadcast(tape.matmul(x, tape.leaf(*p.w1)), tape.leaf(*p.b1));
  h = tape.relu(h);
  return tape.add_row_broadcast(tape.matmul(h, tape.leaf(*p.w2)), tape.leaf(*p.b2));
}

TramModel::MhaResult TramModel::multi_head_attention(Tape& tape, Value queries_in,
                                                     Value memory_in, const AttnParams& p,
                                                     const Tensor* mask, bool relative,
                                                     bool want_attention) {
  const auto dh = static_cast<std::size_t>(cfg_.head_dim());
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg_.head_dim()));
  Value q = tape.add_row_broadcast(tape.matmul(queries_in, tape.leaf(*p.wq)), tape.leaf(*p.bq));
  Value k = tape.add_row_broadcast(tape.matmul(memory_in, tape.leaf(*p.wk)), tape.leaf(*p.bk));
  Value v = tape.add_row_broadcast(tape.matmul(memory_in, tape.leaf(*p.wv)), tape.leaf(*p.bv));
  Value rel;
  if (relative) rel = tape.leaf(*p.rel);
  std::vector<Value> head_outs, head_attn;
  for (int h = 0; h < cfg_.n_heads; ++h) {
    std::size_t off = static_cast<std::size_t>(h) * dh;
    Value qh = tape.slice_cols(q, off, dh);
    Value kh = tape.slice_cols(k, off, dh);
    Value vh = tape.slice_cols(v, off, dh);
    Value scores;
    if (relative) {
      scores = tape.relative_attention_scores(qh, kh, rel, cfg_.k_clip, scale);
    } else {
      scores = tape.mul_scalar(tape.matmul(qh, tape.transpose(kh)), scale);
    }
    if (mask != nullptr) scores = tape.add_constant(scores, *mask);
    Value attn = tape.softmax_rows(scores);
    if (want_attention) head_attn.push_back(attn);
    head_outs.push_back(tape.matmul(attn, vh));
  }
  Value concat = tape.concat_cols(head_outs);
  Value out = tape.add_row_broadcast(tape.matmul(concat, tape.leaf(*p.wo)), tape.leaf(*p.bo));
  return {out, std::move(head_attn)};
}

Value TramModel::build_code_encoder(Tape& tape, const std::vector<int>& code_ids,
                                    Rng* dropout_rng) {
  check(!code_ids.empty(), "sc_encode: empty code sequence");
  check(code_ids.size() <= static_cast<std::size_t>(cfg_.max_code_len),
        "sc_encode: length overflow (" + std::to_string(code_ids.size()) + " > " +
            std::to_string(cfg_.max_code_len) + ")");
  Value x = tape.gather_rows(*code_embed_, code_ids);
  x = maybe_dropout(tape, x, dropout_rng);
  for (const auto& layer : enc_layers_) {
    Value h = layer_norm_block(tape, x, layer.ln1);
    MhaResult attn = multi_head_attention(tape, h, h, layer.self, nullptr, true, false);
    x = tape.add(x, maybe_dropout(tape, attn.out, dropout_rng));
    Value h2 = layer_norm_block(tape, x, layer.ln2);
    Value f = ffn_block(tape, h2, layer.ffn);
    x = tape.add(x, maybe_dropout(tape, f, dropout_rng));
  }
  return layer_norm_block(tape, x, enc_final_ln_);
}

Value TramModel::build_ast_encoder(Tape& tape, const std::vector<int>& node_ids,
                                   const std::vector<std::pair<int, int>>& edges,
                                   Rng* dropout_rng) {
  check(!node_ids.empty(), "ast_encode: empty graph");
  const std::size_t q = node_ids.size();
  // undirected closure plus self-loops as an additive softmax mask
  Tensor mask = Tensor::filled({q, q}, kMaskOff);
  for (std::size_t i = 0; i < q; ++i) mask.at(i, i) = 0.0;
  for (const auto& [p, c] : edges) {
    check(p >= 0 && c >= 0 && static_cast<std::size_t>(p) < q &&
              static_cast<std::size_t>(c) < q,
          "ast_encode: edge endpoint out of range");
    mask.at(static_cast<std::size_t>(p), static_cast<std::size_t>(c)) = 0.0;
    mask.at(static_cast<std::size_t>(c), static_cast<std::size_t>(p)) = 0.0;
  }
  const auto dh = static_cast<std::size_t>(cfg_.head_dim());
  Value x = tape.gather_rows(*node_embed_, node_ids);
  x = maybe_dropout(tape, x, dropout_rng);
  Value ones_col = tape.constant(Tensor::filled({q, 1}, 1.0));
  Value ones_row = tape.constant(Tensor::filled({1, q}, 1.0));
  for (const auto& layer : gat_layers_) {
    Value z = tape.matmul(x, tape.leaf(*layer.w));
    Value a_src = tape.leaf(*layer.a_src);
    Value a_dst = tape.leaf(*layer.a_dst);
    std::vector<Value> head_outs;
    for (int h = 0; h < cfg_.n_heads; ++h) {
      std::size_t off = static_cast<std::size_t>(h) * dh;
      Value zh = tape.slice_cols(z, off, dh);
      Value s = tape.matmul(zh, tape.slice_cols(a_src, static_cast<std::size_t>(h), 1));
      Value t = tape.matmul(zh, tape.slice_cols(a_dst, static_cast<std::size_t>(h), 1));
      Value e = tape.add(tape.matmul(s, ones_row), tape.matmul(ones_col, tape.transpose(t)));
      e = tape.leaky_relu(e, kLeakySlope);
      e = tape.add_constant(e, mask);
      Value attn = tape.softmax_rows(e);
      head_outs.push_back(tape.matmul(attn, zh));
    }
    Value agg = tape.relu(tape.concat_cols(head_outs));
    x = tape.add(x, maybe_dropout(tape, agg, dropout_rng));
    x = layer_norm_block(tape, x, layer.ln);
  }
  return x;
}

TramModel::DecoderGraph TramModel::build_decoder(Tape& tape, const std::vector<int>& input_ids,
                                                 Value code_states, Value ast_states,
                                                 Rng* dropout_rng, bool want_attention) {
  check(!input_ids.empty(), "decoder: empty input");
  check(input_ids.size() <= static_cast<std::size_t>(cfg_.max_summary_len) + 1,
        "decoder: prefix exceeds max summary length");
  const std::size_t t_len = input_ids.size();
  Tensor causal = Tensor::zeros({t_len, t_len});
  for (std::size_t i = 0; i < t_len; ++i)
    for (std::size_t j = i + 1; j < t_len; ++j) causal.at(i, j) = kMaskOff;

  Value x = tape.gather_rows(*summary_embed_, input_ids);
  x = maybe_dropout(tape, x, dropout_rng);
  Value attn_code, attn_node;
  for (std::size_t l = 0; l < dec_layers_.size(); ++l) {
    const auto& layer = dec_layers_[l];
    const bool last = l + 1 == dec_layers_.size();
    Value h = layer_norm_block(tape, x, layer.ln1);
    MhaResult self_attn = multi_head_attention(tape, h, h, layer.self, &causal, true, false);
    x = tape.add(x, maybe_dropout(tape, self_attn.out, dropout_rng));

    h = layer_norm_block(tape, x, layer.ln2);
    MhaResult cross1 = multi_head_attention(tape, h, code_states, layer.cross_code, nullptr,
                                            false, want_attention && last);
    x = tape.add(x, maybe_dropout(tape, cross1.out, dropout_rng));

    h = layer_norm_block(tape, x, layer.ln3);
    MhaResult cross2 = multi_head_attention(tape, h, ast_states, layer.cross_ast, nullptr,
                                            false, want_attention && last);
    x = tape.add(x, maybe_dropout(tape, cross2.out, dropout_rng));

    h = layer_norm_block(tape, x, layer.ln4);
    Value f = ffn_block(tape, h, layer.ffn);
    x = tape.add(x, maybe_dropout(tape, f, dropout_rng));

    if (want_attention && last) {
      auto average_heads = [&](const std::vector<Value>& heads) {
        Value acc = heads[0];
        for (std::size_t i = 1; i < heads.size(); ++i) acc = tape.add(acc, heads[i]);
        return tape.mul_scalar(acc, 1.0 / static_cast<double>(heads.size()));
      };
      attn_code = average_heads(cross1.head_attn);
      attn_node = average_heads(cross2.head_attn);
    }
  }
  Value states = layer_norm_block(tape, x, dec_final_ln_);
  Value logits = tape.add_row_broadcast(tape.matmul(states, tape.leaf(*out_w_)),
                                        tape.leaf(*out_b_));
  return {states, logits, attn_code, attn_node};
}

Tensor TramModel::sc_encode(const std::vector<int>& code_ids) {
  Tape tape(false);
  return tape.value_of(build_code_encoder(tape, code_ids, nullptr));
}

Tensor TramModel::ast_encode(const std::vector<int>& node_ids,
                             const std::vector<std::pair<int, int>>& edges) {
  Tape tape(false);
  return tape.value_of(build_ast_encoder(tape, node_ids, edges, nullptr));
}

EncoderOutputs TramModel::encode(const EncodedSample& sample) {
  return {sc_encode(sample.code_ids), ast_encode(sample.node_ids, sample.edges)};
}

namespace {

std::vector<double> row_copy(const Tensor& m, std::size_t r) {
  auto row = m.row(r);
  return std::vector<double>(row.begin(), row.end());
}

}  // namespace

DecodeStepOutput TramModel::decode_step(const std::vector<int>& prefix_with_bos,
                                        const EncoderOutputs& enc) {
  check(!prefix_with_bos.empty() && prefix_with_bos.front() == Vocabulary::kBos,
        "decode_step: prefix must begin with BOS");
  Tape tape(false);
  Value code_states = tape.constant(enc.code_states);
  Value ast_states = tape.constant(enc.ast_states);
  DecoderGraph g = build_decoder(tape, prefix_with_bos, code_states, ast_states, nullptr, true);
  const std::size_t last = prefix_with_bos.size() - 1;
  DecodeStepOutput out;
  out.d_prev = row_copy(tape.value_of(g.states), last);
  out.attend_code = row_copy(tape.value_of(g.attn_code), last);
  out.attend_node = row_copy(tape.value_of(g.attn_node), last);
  out.logits = row_copy(tape.value_of(g.logits), last);
  return out;
}

ForcedPass TramModel::forced_pass(const EncodedSample& sample) {
  std::vector<int> input;
  input.reserve(sample.summary_ids.size() + 1);
  input.push_back(Vocabulary::kBos);
  input.insert(input.end(), sample.summary_ids.begin(), sample.summary_ids.end());
  Tape tape(false);
  Value code_states = build_code_encoder(tape, sample.code_ids, nullptr);
  Value ast_states = build_ast_encoder(tape, sample.node_ids, sample.edges, nullptr);
  DecoderGraph g = build_decoder(tape, input, code_states, ast_states, nullptr, true);
  return {tape.value_of(g.states),      tape.value_of(g.attn_code),
          tape.value_of(g.attn_node),   tape.value_of(g.logits),
          tape.value_of(code_states),   tape.value_of(ast_states)};
}

Value TramModel::training_loss(Tape& tape, const EncodedSample& sample, Rng* dropout_rng,
                               std::size_t* token_count) {
  check(!sample.summary_ids.empty(), "training_loss: empty summary");
  std::vector<int> input;
  input.reserve(sample.summary_ids.size() + 1);
  input.push_back(Vocabulary::kBos);
  input.insert(input.end(), sample.summary_ids.begin(), sample.summary_ids.end());
  std::vector<int> targets(sample.summary_ids);
  targets.push_back(Vocabulary::kEos);

  Value code_states = build_code_encoder(tape, sample.code_ids, dropout_rng);
  Value ast_states = build_ast_encoder(tape, sample.node_ids, sample.edges, dropout_rng);
  DecoderGraph g = build_decoder(tape, input, code_states, ast_states, dropout_rng, false);
  std::size_t count = 0;
  Value ce = tape.cross_entropy_sum(g.logits, targets, Vocabulary::kPad, &count);
  if (token_count) *token_count = count;
  return tape.mul_scalar(ce, 1.0 / static_cast<double>(count));
}

EncodedSample encode_sample(const ModelBundle& bundle, const CodeSample& sample) {
  EncodedSample enc;
  enc.id = sample.id;
  enc.code_ids = encode(normalize_code_tokens(sample.code_tokens), bundle.code_vocab);
  enc.node_ids = encode(sample.ast.node_labels, bundle.node_vocab);
  enc.edges = sample.ast.edges;
  enc.summary_ids = encode(normalize_summary_tokens(sample.summary_tokens), bundle.summary_vocab);
  return enc;
}

}  // namespace tram
