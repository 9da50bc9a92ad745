#include "tram/datastore.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "binio.hpp"
#include "tram/common.hpp"
#include "tram/rng.hpp"

namespace tram {

Datastore::Datastore(int key_dim) : key_dim_(key_dim) {
  check(key_dim > 0, "datastore: key dimension must be positive");
}

void Datastore::add(std::span<const float> key, int value, std::string sample_id, int step) {
  check(key_dim_ > 0, "datastore: uninitialized");
  check(key.size() == static_cast<std::size_t>(key_dim_), "datastore: key dimension mismatch");
  check(value != Vocabulary::kPad && value != Vocabulary::kBos,
        "datastore: PAD/BOS are not storable values");
  keys_.insert(keys_.end(), key.begin(), key.end());
  values_.push_back(value);
  sample_ids_.push_back(std::move(sample_id));
  steps_.push_back(step);
}

std::span<const float> Datastore::key(std::size_t i) const {
  return std::span<const float>(keys_.data() + i * static_cast<std::size_t>(key_dim_),
                                static_cast<std::size_t>(key_dim_));
}

std::vector<RetrievalTriple> Datastore::query_topk(std::span<const double> query, int k,
                                                   RetrievalMetric metric) const {
  check(k >= 1, "query_topk: K must be >= 1");
  check(size() > 0, "query_topk: empty datastore");
  check(query.size() == static_cast<std::size_t>(key_dim_), "query_topk: dimension mismatch");
  const std::size_t n = size();
  std::vector<std::pair<double, std::size_t>> scored(n);
  const std::size_t dim = static_cast<std::size_t>(key_dim_);
  for (std::size_t i = 0; i < n; ++i) {
    const float* kp = keys_.data() + i * dim;
    double s = 0.0;
    if (metric == RetrievalMetric::kCosine) {
      for (std::size_t j = 0; j < dim; ++j) s += query[j] * static_cast<double>(kp[j]);
    } else {
      for (std::size_t j = 0; j < dim; ++j) {
        double d = query[j] - static_cast<double>(kp[j]);
        s -= d * d;
      }
    }
    scored[i] = {s, i};
  }
  const std::size_t take = std::min(static_cast<std::size_t>(k), n);
  auto better = [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  };
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take),
                    scored.end(), better);
  std::vector<RetrievalTriple> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    auto [sim, idx] = scored[i];
    auto kspan = key(idx);
    out.push_back({idx, values_[idx], sim, std::vector<float>(kspan.begin(), kspan.end())});
  }
  return out;
}

std::vector<double> make_key(std::span<const double> h, std::span<const double> r,
                             std::span<const double> d_prev, bool without_hr) {
  std::vector<double> concat;
  if (without_hr) {
    concat.assign(d_prev.begin(), d_prev.end());
  } else {
    concat.reserve(h.size() + r.size() + d_prev.size());
    concat.insert(concat.end(), h.begin(), h.end());
    concat.insert(concat.end(), r.begin(), r.end());
    concat.insert(concat.end(), d_prev.begin(), d_prev.end());
  }
  check(norm2(concat) > 0.0, "make_key: all-zero concatenation");
  return l2_normalize(concat);
}

std::vector<double> weighted_context(std::span<const double> attn, const Tensor& states) {
  check(states.ndim() == 2, "weighted_context: states must be rank 2");
  check(attn.size() == states.rows(), "weighted_context: length mismatch");
  std::vector<double> out(states.cols(), 0.0);
  for (std::size_t i = 0; i < attn.size(); ++i) {
    auto row = states.row(i);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += attn[i] * row[j];
  }
  return out;
}

Datastore build_datastore(ModelBundle& bundle, const std::vector<CodeSample>& training,
                          bool without_hr) {
  check(bundle.model != nullptr, "build_datastore: empty bundle");
  check(bundle.model->is_trained(), "build_datastore: model parameters are untrained");
  check(!training.empty(), "build_datastore: empty training set");
  const int d = bundle.config.d_model;
  Datastore ds(without_hr ? d : 3 * d);

  std::vector<std::size_t> order(training.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return training[a].id < training[b].id;
  });

  std::vector<float> fkey;
  for (std::size_t oi : order) {
    const CodeSample& sample = training[oi];
    EncodedSample enc = encode_sample(bundle, sample);
    ForcedPass pass = bundle.model->forced_pass(enc);
    std::vector<int> targets(enc.summary_ids);
    targets.push_back(Vocabulary::kEos);
    for (std::size_t t = 0; t < targets.size(); ++t) {
      if (targets[t] == Vocabulary::kPad) continue;
      auto state = pass.states.row(t);
      std::vector<double> key;
      if (without_hr) {
        key = make_key({}, {}, state, true);
      } else {
        auto h = weighted_context(pass.attn_code.row(t), pass.code_states);
        auto r = weighted_context(pass.attn_node.row(t), pass.ast_states);
        key = make_key(h, r, state, false);
      }
      fkey.assign(key.begin(), key.end());
      ds.add(fkey, targets[t], sample.id, static_cast<int>(t));
    }
  }
  return ds;
}

Datastore inject_noise(const Datastore& ds, double fraction, std::uint64_t seed) {
  check(fraction >= 0.0 && fraction <= 1.0, "inject_noise: fraction must be in [0, 1]");
  Datastore out = ds;
  const std::size_t n = ds.size();
  const std::size_t m = static_cast<std::size_t>(fraction * static_cast<double>(n));
  if (m < 2) return out;  // a single selected entry cannot be misaligned
  Rng rng(seed);
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  rng.shuffle(all);
  std::vector<std::size_t> selected(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(m));
  std::sort(selected.begin(), selected.end());
  const std::size_t shift = 1 + static_cast<std::size_t>(rng.uniform_int(static_cast<int>(m - 1)));
  for (std::size_t j = 0; j < m; ++j)
    out.set_value(selected[j], ds.value(selected[(j + shift) % m]));
  return out;
}

namespace {
constexpr char kMagic[8] = {'T', 'R', 'A', 'M', 'D', 'S', '0', '1'};
}

void save_datastore(const Datastore& ds, const std::filesystem::path& path) {
  check(ds.key_dim() > 0, "save_datastore: uninitialized datastore");
  // payload built in memory so the checksum covers exactly the entry bytes
  std::ostringstream payload(std::ios::binary);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (float f : ds.key(i)) binio::write_f32(payload, f);
    binio::write_u32(payload, static_cast<std::uint32_t>(ds.value(i)));
  }
  const std::string bytes = payload.str();
  std::ofstream out(path, std::ios::binary);
  check(out.good(), "save_datastore: cannot open " + path.string());
  out.write(kMagic, 8);
  binio::write_u32(out, static_cast<std::uint32_t>(ds.key_dim()));
  binio::write_u64(out, ds.size());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  binio::write_u64(out, binio::fnv1a64(reinterpret_cast<const unsigned char*>(bytes.data()),
                                       bytes.size()));
  check(out.good(), "save_datastore: write failed for " + path.string());
}

Datastore load_datastore(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), "load_datastore: cannot open " + path.string());
  char magic[8];
  in.read(magic, 8);
  check(in.gcount() == 8 && std::equal(magic, magic + 8, kMagic),
        "load_datastore: magic/version mismatch in " + path.string());
  const int dim = static_cast<int>(binio::read_u32(in));
  check(dim > 0, "load_datastore: bad key dimension");
  const std::uint64_t count = binio::read_u64(in);
  const std::size_t entry_bytes = 4 * static_cast<std::size_t>(dim) + 4;
  std::string bytes(static_cast<std::size_t>(count) * entry_bytes, '\0');
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  check(static_cast<std::size_t>(in.gcount()) == bytes.size(),
        "load_datastore: truncated file " + path.string());
  const std::uint64_t stored = binio::read_u64(in);
  const std::uint64_t computed =
      binio::fnv1a64(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size());
  check(stored == computed, "load_datastore: checksum mismatch in " + path.string());

  Datastore ds(dim);
  std::istringstream pin(bytes, std::ios::binary);
  std::vector<float> key(static_cast<std::size_t>(dim));
  for (std::uint64_t i = 0; i < count; ++i) {
    for (auto& f : key) f = binio::read_f32(pin);
    int value = static_cast<int>(binio::read_u32(pin));
    ds.add(key, value, "", 0);
  }
  return ds;
}

}  // namespace tram
