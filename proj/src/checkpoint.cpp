#include "tram/checkpoint.hpp"

#include <fstream>

#include "binio.hpp"
#include "tram/common.hpp"

namespace tram {

namespace {

constexpr char kMagic[8] = {'T', 'R', 'A', 'M', 'C', 'K', '0', '1'};

void write_vocab(std::ostream& out, const Vocabulary& v) {
  binio::write_u64(out, v.size());
  for (const auto& tok : v.tokens()) binio::write_string(out, tok);
}

Vocabulary read_vocab(std::istream& in) {
  std::uint64_t n = binio::read_u64(in);
  check(n >= 4, "checkpoint: vocabulary too small");
  Vocabulary v;
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string tok = binio::read_string(in);
    if (i < 4) {
      check(tok == v.token(static_cast<int>(i)), "checkpoint: reserved token mismatch");
    } else {
      v.add(tok);
    }
  }
  return v;
}

}  // namespace

void save_checkpoint(const ModelBundle& bundle, const std::filesystem::path& path) {
  check(bundle.model != nullptr, "save_checkpoint: empty bundle");
  std::ofstream out(path, std::ios::binary);
  check(out.good(), "save_checkpoint: cannot open " + path.string());
  out.write(kMagic, 8);
  binio::write_u32(out, 1);  // version

  const ModelConfig& c = bundle.config;
  binio::write_u32(out, static_cast<std::uint32_t>(c.d_model));
  binio::write_u32(out, static_cast<std::uint32_t>(c.n_heads));
  binio::write_u32(out, static_cast<std::uint32_t>(c.n_enc_layers));
  binio::write_u32(out, static_cast<std::uint32_t>(c.n_dec_layers));
  binio::write_u32(out, static_cast<std::uint32_t>(c.n_gat_layers));
  binio::write_u32(out, static_cast<std::uint32_t>(c.ffn_dim));
  binio::write_u32(out, static_cast<std::uint32_t>(c.k_clip));
  binio::write_f64(out, c.dropout);
  binio::write_u32(out, static_cast<std::uint32_t>(c.max_code_len));
  binio::write_u32(out, static_cast<std::uint32_t>(c.max_summary_len));
  binio::write_u32(out, bundle.model->is_trained() ? 1 : 0);

  write_vocab(out, bundle.code_vocab);
  write_vocab(out, bundle.node_vocab);
  write_vocab(out, bundle.summary_vocab);

  ParameterSet& params = bundle.model->params();
  binio::write_u64(out, params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = params.at(i);
    binio::write_string(out, p.name);
    binio::write_u32(out, static_cast<std::uint32_t>(p.value.ndim()));
    for (std::size_t d : p.value.shape()) binio::write_u64(out, d);
    for (double v : p.value.data()) binio::write_f64(out, v);
  }
  out.write("END!", 4);
  check(out.good(), "save_checkpoint: write failed for " + path.string());
}

ModelBundle load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), "load_checkpoint: cannot open " + path.string());
  char magic[8];
  in.read(magic, 8);
  check(in.gcount() == 8 && std::equal(magic, magic + 8, kMagic),
        "load_checkpoint: bad magic in " + path.string());
  std::uint32_t version = binio::read_u32(in);
  check(version == 1, "load_checkpoint: unsupported version " + std::to_string(version));

  ModelBundle bundle;
  ModelConfig& c = bundle.config;
  c.d_model = static_cast<int>(binio::read_u32(in));
  c.n_heads = static_cast<int>(binio::read_u32(in));
  c.n_enc_layers = static_cast<int>(binio::read_u32(in));
  c.n_dec_layers = static_cast<int>(binio::read_u32(in));
  c.n_gat_layers = static_cast<int>(binio::read_u32(in));
  c.ffn_dim = static_cast<int>(binio::read_u32(in));
  c.k_clip = static_cast<int>(binio::read_u32(in));
  c.dropout = binio::read_f64(in);
  c.max_code_len = static_cast<int>(binio::read_u32(in));
  c.max_summary_len = static_cast<int>(binio::read_u32(in));
  bool trained = binio::read_u32(in) != 0;

  bundle.code_vocab = read_vocab(in);
  bundle.node_vocab = read_vocab(in);
  bundle.summary_vocab = read_vocab(in);

  bundle.model = std::make_unique<TramModel>(c, bundle.code_vocab.size(),
                                             bundle.node_vocab.size(),
                                             bundle.summary_vocab.size(), /*seed=*/0);
  ParameterSet& params = bundle.model->params();
  std::uint64_t n_params = binio::read_u64(in);
  check(n_params == params.size(), "load_checkpoint: parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params.at(i);
    std::string name = binio::read_string(in);
    check(name == p.name, "load_checkpoint: parameter order mismatch at " + name);
    std::uint32_t ndim = binio::read_u32(in);
    check(ndim == p.value.ndim(), "load_checkpoint: rank mismatch for " + name);
    for (std::size_t d = 0; d < ndim; ++d)
      check(binio::read_u64(in) == p.value.shape()[d], "load_checkpoint: shape mismatch for " + name);
    for (std::size_t j = 0; j < p.value.numel(); ++j) p.value[j] = binio::read_f64(in);
  }
  char tail[4];
  in.read(tail, 4);
  check(in.gcount() == 4 && std::equal(tail, tail + 4, "END!"),
        "load_checkpoint: truncated file " + path.string());
  if (trained) bundle.model->mark_trained();
  return bundle;
}

}  // namespace tram
