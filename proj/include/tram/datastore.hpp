#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tram/model.hpp"
#include "tram/tensor.hpp"

namespace tram {

struct RetrievalTriple {
  std::size_t entry_index;
  int value;           // summary-token id
  double similarity;   // cosine (or negative squared L2 in that mode)
  std::vector<float> key;
};

enum class RetrievalMetric { kCosine, kSquaredL2 };

// Flat store of (unit-norm f32 key, summary-token id) pairs with exact
// top-K inner-product search. Sample ids and step indices are in-memory
// provenance only; the serialized format carries keys and values.
class Datastore {
 public:
  Datastore() = default;
  explicit Datastore(int key_dim);

  int key_dim() const { return key_dim_; }
  std::size_t size() const { return values_.size(); }

  void add(std::span<const float> key, int value, std::string sample_id, int step);

  std::span<const float> key(std::size_t i) const;
  int value(std::size_t i) const { return values_[i]; }
  const std::string& sample_id(std::size_t i) const { return sample_ids_[i]; }
  int step(std::size_t i) const { return steps_[i]; }
  void set_value(std::size_t i, int v) { values_[i] = v; }

  // Exact full scan; ties break by insertion order. K larger than the
  // store returns everything.
  std::vector<RetrievalTriple> query_topk(std::span<const double> query, int k = 16,
                                          RetrievalMetric metric = RetrievalMetric::kCosine) const;

  bool operator==(const Datastore& other) const {
    return key_dim_ == other.key_dim_ && keys_ == other.keys_ && values_ == other.values_;
  }

 private:
  int key_dim_ = 0;
  std::vector<float> keys_;  // size() * key_dim_, row major
  std::vector<int> values_;
  std::vector<std::string> sample_ids_;
  std::vector<int> steps_;
};

// Concat(H, R, d_prev) then L2 normalization; the w/o-HR ablation keys on
// the decoder state alone.
std::vector<double> make_key(std::span<const double> h, std::span<const double> r,
                             std::span<const double> d_prev, bool without_hr = false);

// Convex combination sum_i attn[i] * states.row(i).
std::vector<double> weighted_context(std::span<const double> attn, const Tensor& states);

// Teacher-forced offline pass over the training set; one entry per target
// position (summary tokens then EOS), ordered by (sample id, step).
Datastore build_datastore(ModelBundle& bundle, const std::vector<CodeSample>& training,
                          bool without_hr = false);

// Uniformly selects floor(fraction*N) entries and applies a random cyclic
// shift to their values, misaligning every selected pair when values are
// distinct. Keys untouched.
Datastore inject_noise(const Datastore& ds, double fraction, std::uint64_t seed);

void save_datastore(const Datastore& ds, const std::filesystem::path& path);
Datastore load_datastore(const std::filesystem::path& path);

}  // namespace tram
