#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace tram {

struct AstGraph {
  std::vector<std::string> node_labels;
  std::vector<std::pair<int, int>> edges;  // parent -> child indices

  // Endpoints in range, no self-loops, each node has at most one parent,
  // no cycles (rooted tree or forest).
  void validate() const;
  bool is_single_tree() const;
};

struct CodeSample {
  std::string id;
  std::vector<std::string> code_tokens;
  AstGraph ast;
  std::vector<std::string> summary_tokens;

  void validate() const;
};

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;

  Vocabulary();

  int add(const std::string& token);          // returns existing id if present
  int id(const std::string& token) const;     // kUnk if absent
  bool contains(const std::string& token) const;
  const std::string& token(int id) const;     // throws if out of range
  std::size_t size() const { return id_to_token_.size(); }

  const std::vector<std::string>& tokens() const { return id_to_token_; }
  bool operator==(const Vocabulary& other) const { return id_to_token_ == other.id_to_token_; }

 private:
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

// CamelCase / snake_case / digit-boundary splitter, lowercased output.
// Digits stay attached to the preceding alphanumeric run as their own
// subtoken only when the case rules force a break; a pure-symbol input
// falls back to the lowercased input itself.
std::vector<std::string> split_identifier(std::string_view raw);

struct VocabOptions {
  std::size_t min_freq = 1;
  std::size_t max_size = 50000;  // excludes the four reserved entries
};

// Code vocabulary counts split_identifier output; summary vocabulary counts
// lowercased summary tokens. Frequency ties break lexicographically.
std::pair<Vocabulary, Vocabulary> build_vocab(const std::vector<CodeSample>& samples,
                                              const VocabOptions& options);

// AST node labels are a third token stream with its own vocabulary.
Vocabulary build_node_vocab(const std::vector<CodeSample>& samples, const VocabOptions& options);

std::vector<int> encode(const std::vector<std::string>& tokens, const Vocabulary& vocab);
std::vector<std::string> decode(const std::vector<int>& ids, const Vocabulary& vocab);

// Model-side token streams: code tokens re-split through split_identifier,
// summary tokens lowercased.
std::vector<std::string> normalize_code_tokens(const std::vector<std::string>& code_tokens);
std::vector<std::string> normalize_summary_tokens(const std::vector<std::string>& summary_tokens);

std::vector<CodeSample> load_dataset(const std::filesystem::path& path);
void save_dataset(const std::vector<CodeSample>& samples, const std::filesystem::path& path);

struct ParseError : std::runtime_error {
  std::size_t offset;
  ParseError(const std::string& msg, std::size_t off)
      : std::runtime_error(msg), offset(off) {}
};

// Grammar: def NAME ( [NAME {, NAME}] ) : return EXPR
// EXPR folds left over + - * / with atoms NAME | NUM | NAME(args) | (EXPR).
std::pair<std::vector<std::string>, AstGraph> parse_toy(std::string_view source);

struct ToySplitFiles {
  std::filesystem::path train;
  std::filesystem::path val;
  std::filesystem::path test;
};

struct ToyCorpus {
  std::vector<CodeSample> train;
  std::vector<CodeSample> val;
  std::vector<CodeSample> test;
};

// Deterministic templated corpus; train carries a rare-operation tail so
// some summary tokens appear with training frequency exactly 1, 2, 5, 10.
// Splits are disjoint by template instance.
std::vector<CodeSample> gen_toy_split(std::uint64_t seed, const std::string& split_name,
                                      std::size_t n);
ToyCorpus gen_toy_samples(std::uint64_t seed, std::size_t n_train, std::size_t n_val,
                          std::size_t n_test);
ToySplitFiles gen_toy_corpus(std::uint64_t seed, std::size_t n_train, std::size_t n_val,
                             std::size_t n_test, const std::filesystem::path& out_dir);

}  // namespace tram
