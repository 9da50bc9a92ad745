#include "tram/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "tram/common.hpp"
#include "tram/rng.hpp"

namespace tram {

using nlohmann::json;

void AstGraph::validate() const {
  const int q = static_cast<int>(node_labels.size());
  check(q >= 1, "ast: graph must have at least one node");
  std::vector<int> parent(node_labels.size(), -1);
  for (const auto& [p, c] : edges) {
    check(p >= 0 && p < q && c >= 0 && c < q, "ast: edge endpoint out of range");
    check(p != c, "ast: self-loop");
    check(parent[static_cast<std::size_t>(c)] == -1, "ast: node has two parents");
    parent[static_cast<std::size_t>(c)] = p;
  }
  // with at most one parent per node, a cycle shows up as a parent walk
  // that revisits a node
  std::vector<char> done(node_labels.size(), 0);
  for (std::size_t i = 0; i < node_labels.size(); ++i) {
    std::vector<char> seen(node_labels.size(), 0);
    int v = static_cast<int>(i);
    while (v != -1 && !done[static_cast<std::size_t>(v)]) {
      check(!seen[static_cast<std::size_t>(v)], "ast: cycle detected");
      seen[static_cast<std::size_t>(v)] = 1;
      v = parent[static_cast<std::size_t>(v)];
    }
    for (std::size_t j = 0; j < seen.size(); ++j)
      if (seen[j]) done[j] = 1;
  }
}

bool AstGraph::is_single_tree() const {
  if (edges.size() + 1 != node_labels.size()) return false;
  validate();
  std::vector<char> has_parent(node_labels.size(), 0);
  for (const auto& [p, c] : edges) {
    (void)p;
    has_parent[static_cast<std::size_t>(c)] = 1;
  }
  return std::count(has_parent.begin(), has_parent.end(), 0) == 1;
}

void CodeSample::validate() const {
  check(!id.empty(), "sample: empty id");
  check(!code_tokens.empty(), "sample " + id + ": no code tokens");
  check(!summary_tokens.empty(), "sample " + id + ": no summary tokens");
  try {
    ast.validate();
  } catch (const TramError& e) {
    throw TramError("sample " + id + ": " + e.what());
  }
}

Vocabulary::Vocabulary() {
  for (const char* tok : {"<pad>", "<unk>", "<bos>", "<eos>"}) {
    token_to_id_.emplace(tok, static_cast<int>(id_to_token_.size()));
    id_to_token_.emplace_back(tok);
  }
}

int Vocabulary::add(const std::string& token) {
  auto it = token_to_id_.find(token);
  if (it != token_to_id_.end()) return it->second;
  int id = static_cast<int>(id_to_token_.size());
  token_to_id_.emplace(token, id);
  id_to_token_.push_back(token);
  return id;
}

int Vocabulary::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(const std::string& token) const {
  return token_to_id_.count(token) > 0;
}

const std::string& Vocabulary::token(int id) const {
  check(id >= 0 && static_cast<std::size_t>(id) < id_to_token_.size(),
        "vocab: id out of range");
  return id_to_token_[static_cast<std::size_t>(id)];
}

namespace {

bool is_lower_c(char c) { return c >= 'a' && c <= 'z'; }
bool is_upper_c(char c) { return c >= 'A' && c <= 'Z'; }
bool is_digit_c(char c) { return c >= '0' && c <= '9'; }
bool is_alnum_c(char c) { return is_lower_c(c) || is_upper_c(c) || is_digit_c(c); }

std::string lower_copy(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    if (is_upper_c(c)) c = static_cast<char>(c - 'A' + 'a');
  return out;
}

}  // namespace

std::vector<std::string> split_identifier(std::string_view raw) {
  check(!raw.empty(), "split_identifier: empty input");
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&]() {
    if (!cur.empty()) {
      out.push_back(lower_copy(cur));
      cur.clear();
    }
  };
  for (std::size_t i = 0; i < raw.size(); ++i) {
    char c = raw[i];
    if (!is_alnum_c(c)) {
      flush();
      continue;
    }
    if (!cur.empty()) {
      char prev = cur.back();
      bool boundary = false;
      if (is_lower_c(prev) && is_upper_c(c)) boundary = true;          // maxV|alue
      if (is_digit_c(prev) != is_digit_c(c)) boundary = true;          // server|2, 2|nd
      if (is_upper_c(prev) && is_upper_c(c) && i + 1 < raw.size() &&
          is_lower_c(raw[i + 1]))
        boundary = true;                                               // HTTP|Server
      if (boundary) flush();
    }
    cur.push_back(c);
  }
  flush();
  if (out.empty()) out.push_back(lower_copy(raw));
  return out;
}

std::vector<std::string> normalize_code_tokens(const std::vector<std::string>& code_tokens) {
  std::vector<std::string> out;
  for (const auto& tok : code_tokens) {
    if (tok.empty()) continue;
    auto parts = split_identifier(tok);
    out.insert(out.end(), parts.begin(), parts.end());
  }
  return out;
}

std::vector<std::string> normalize_summary_tokens(const std::vector<std::string>& summary_tokens) {
  std::vector<std::string> out;
  out.reserve(summary_tokens.size());
  for (const auto& tok : summary_tokens)
    if (!tok.empty()) out.push_back(lower_copy(tok));
  return out;
}

namespace {

Vocabulary vocab_from_counts(const std::map<std::string, std::size_t>& counts,
                             const VocabOptions& options) {
  // sort by (frequency desc, token asc); std::map iteration already gives
  // the lexicographic tiebreak a stable base
  std::vector<std::pair<std::size_t, std::string>> ranked;
  ranked.reserve(counts.size());
  for (const auto& [tok, n] : counts)
    if (n >= options.min_freq) ranked.emplace_back(n, tok);
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  Vocabulary v;
  for (const auto& [n, tok] : ranked) {
    (void)n;
    if (v.size() - 4 >= options.max_size) break;
    v.add(tok);
  }
  return v;
}

}  // namespace

std::pair<Vocabulary, Vocabulary> build_vocab(const std::vector<CodeSample>& samples,
                                              const VocabOptions& options) {
  check(!samples.empty(), "build_vocab: empty corpus");
  std::map<std::string, std::size_t> code_counts, summary_counts;
  for (const auto& s : samples) {
    for (const auto& tok : normalize_code_tokens(s.code_tokens)) ++code_counts[tok];
    for (const auto& tok : normalize_summary_tokens(s.summary_tokens)) ++summary_counts[tok];
  }
  return {vocab_from_counts(code_counts, options), vocab_from_counts(summary_counts, options)};
}

Vocabulary build_node_vocab(const std::vector<CodeSample>& samples, const VocabOptions& options) {
  check(!samples.empty(), "build_node_vocab: empty corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& s : samples)
    for (const auto& label : s.ast.node_labels) ++counts[label];
  return vocab_from_counts(counts, options);
}

std::vector<int> encode(const std::vector<std::string>& tokens, const Vocabulary& vocab) {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& tok : tokens) ids.push_back(vocab.id(tok));
  return ids;
}

std::vector<std::string> decode(const std::vector<int>& ids, const Vocabulary& vocab) {
  std::vector<std::string> tokens;
  tokens.reserve(ids.size());
  for (int id : ids) tokens.push_back(vocab.token(id));
  return tokens;
}

std::vector<CodeSample> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  check(in.good(), "load_dataset: cannot open " + path.string());
  std::vector<CodeSample> samples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw TramError("load_dataset: " + path.string() + " line " + std::to_string(line_no) +
                      ": malformed JSON: " + e.what());
    }
    auto require = [&](const char* key) -> const json& {
      if (!j.contains(key))
        throw TramError("load_dataset: " + path.string() + " line " + std::to_string(line_no) +
                        ": missing field \"" + key + "\"");
      return j.at(key);
    };
    CodeSample s;
    try {
      s.id = require("id").get<std::string>();
      s.code_tokens = require("code_tokens").get<std::vector<std::string>>();
      s.ast.node_labels = require("ast_nodes").get<std::vector<std::string>>();
      s.ast.edges = require("ast_edges").get<std::vector<std::pair<int, int>>>();
      s.summary_tokens = require("summary_tokens").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
      throw TramError("load_dataset: " + path.string() + " line " + std::to_string(line_no) +
                      ": bad field type: " + e.what());
    }
    try {
      s.validate();
    } catch (const TramError& e) {
      throw TramError("load_dataset: " + path.string() + " line " + std::to_string(line_no) +
                      ": " + e.what());
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

void save_dataset(const std::vector<CodeSample>& samples, const std::filesystem::path& path) {
  std::ofstream out(path);
  check(out.good(), "save_dataset: cannot open " + path.string());
  for (const auto& s : samples) {
    json j;
    j["id"] = s.id;
    j["code_tokens"] = s.code_tokens;
    j["ast_nodes"] = s.ast.node_labels;
    j["ast_edges"] = s.ast.edges;
    j["summary_tokens"] = s.summary_tokens;
    out << j.dump() << '\n';
  }
  check(out.good(), "save_dataset: write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// toy language parser
// ---------------------------------------------------------------------------

namespace {

struct Token {
  enum Kind { kIdent, kNumber, kSymbol, kEnd } kind;
  std::string text;
  std::size_t offset;
};

std::vector<Token> lex_toy(std::string_view src) {
  std::vector<Token> toks;
  std::size_t i = 0;
  while (i < src.size()) {
    char c = src[i];
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      ++i;
      continue;
    }
    if (is_lower_c(c) || is_upper_c(c) || c == '_') {
      std::size_t start = i;
      while (i < src.size() &&
             (is_alnum_c(src[i]) || src[i] == '_'))
        ++i;
      toks.push_back({Token::kIdent, std::string(src.substr(start, i - start)), start});
      continue;
    }
    if (is_digit_c(c)) {
      std::size_t start = i;
      while (i < src.size() && is_digit_c(src[i])) ++i;
      toks.push_back({Token::kNumber, std::string(src.substr(start, i - start)), start});
      continue;
    }
    if (c == '(' || c == ')' || c == ',' || c == ':' || c == '+' || c == '-' || c == '*' ||
        c == '/') {
      toks.push_back({Token::kSymbol, std::string(1, c), i});
      ++i;
      continue;
    }
    throw ParseError("unexpected character '" + std::string(1, c) + "'", i);
  }
  toks.push_back({Token::kEnd, "", src.size()});
  return toks;
}

class ToyParser {
 public:
  explicit ToyParser(std::string_view src) : toks_(lex_toy(src)) {}

  AstGraph parse_function() {
    AstGraph g;
    int func = add_node(g, "Func", -1);
    expect_ident("def");
    const Token& name = expect_kind(Token::kIdent, "function name");
    add_node(g, "Name:" + name.text, func);
    int params = add_node(g, "Params", func);
    std::size_t lparen = peek().offset;
    expect_symbol("(");
    if (!at_symbol(")")) {
      while (true) {
        if (peek().kind != Token::kIdent) {
          if (at_symbol(":") || peek().kind == Token::kEnd)
            throw ParseError("unterminated parameter list", lparen);
          throw ParseError("expected parameter name", peek().offset);
        }
        add_node(g, "Name:" + next().text, params);
        if (at_symbol(",")) {
          next();
          continue;
        }
        break;
      }
    }
    if (!at_symbol(")")) {
      if (at_symbol(":") || peek().kind == Token::kEnd)
        throw ParseError("unterminated parameter list", lparen);
      throw ParseError("expected ')' or ','", peek().offset);
    }
    next();
    expect_symbol(":");
    int body = add_node(g, "Body", func);
    expect_ident("return");
    int ret = add_node(g, "Return", body);
    parse_expr(g, ret);
    if (peek().kind != Token::kEnd)
      throw ParseError("trailing input after expression", peek().offset);
    return g;
  }

  const std::vector<Token>& tokens() const { return toks_; }

 private:
  int add_node(AstGraph& g, std::string label, int parent) {
    int id = static_cast<int>(g.node_labels.size());
    g.node_labels.push_back(std::move(label));
    if (parent >= 0) g.edges.emplace_back(parent, id);
    return id;
  }

  // expr := atom ((+|-|*|/) atom)* folded left
  void parse_expr(AstGraph& g, int parent) {
    int lhs = parse_atom(g);
    while (peek().kind == Token::kSymbol &&
           (peek().text == "+" || peek().text == "-" || peek().text == "*" ||
            peek().text == "/")) {
      std::string op = next().text;
      int node = add_node(g, "BinOp:" + op, -1);
      attach(g, node, lhs);
      int rhs = parse_atom(g);
      attach(g, node, rhs);
      lhs = node;
    }
    attach(g, parent, lhs);
  }

  // Subtrees are built with preorder node numbering; detached roots are
  // attached to their parent once known.
  void attach(AstGraph& g, int parent, int child) { g.edges.emplace_back(parent, child); }

  int parse_atom(AstGraph& g) {
    const Token& t = peek();
    if (t.kind == Token::kNumber) {
      next();
      return add_node(g, "Num:" + t.text, -1);
    }
    if (t.kind == Token::kIdent) {
      next();
      if (at_symbol("(")) {
        std::size_t lparen = peek().offset;
        next();
        int call = add_node(g, "Call:" + t.text, -1);
        if (!at_symbol(")")) {
          while (true) {
            if (peek().kind == Token::kEnd)
              throw ParseError("unterminated call argument list", lparen);
            parse_expr_into(g, call);
            if (at_symbol(",")) {
              next();
              continue;
            }
            break;
          }
        }
        if (!at_symbol(")")) throw ParseError("expected ')' or ','", peek().offset);
        next();
        return call;
      }
      return add_node(g, "Name:" + t.text, -1);
    }
    if (t.kind == Token::kSymbol && t.text == "(") {
      std::size_t lparen = t.offset;
      next();
      int root = parse_detached_expr(g);
      if (!at_symbol(")")) throw ParseError("unterminated parenthesis", lparen);
      next();
      return root;
    }
    throw ParseError("expected name, number, call or '('", t.offset);
  }

  void parse_expr_into(AstGraph& g, int parent) { parse_expr(g, parent); }

  int parse_detached_expr(AstGraph& g) {
    int lhs = parse_atom(g);
    while (peek().kind == Token::kSymbol &&
           (peek().text == "+" || peek().text == "-" || peek().text == "*" ||
            peek().text == "/")) {
      std::string op = next().text;
      int node = add_node(g, "BinOp:" + op, -1);
      attach(g, node, lhs);
      attach(g, node, parse_atom(g));
      lhs = node;
    }
    return lhs;
  }

  const Token& peek() const { return toks_[pos_]; }
  const Token& next() { return toks_[pos_++]; }
  bool at_symbol(const char* s) const {
    return peek().kind == Token::kSymbol && peek().text == s;
  }
  void expect_symbol(const char* s) {
    if (!at_symbol(s))
      throw ParseError(std::string("expected '") + s + "'", peek().offset);
    next();
  }
  void expect_ident(const char* word) {
    if (peek().kind != Token::kIdent || peek().text != word)
      throw ParseError(std::string("expected '") + word + "'", peek().offset);
    next();
  }
  const Token& expect_kind(Token::Kind k, const char* what) {
    if (peek().kind != k)
      throw ParseError(std::string("expected ") + what, peek().offset);
    return next();
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

}  // namespace

std::pair<std::vector<std::string>, AstGraph> parse_toy(std::string_view source) {
  ToyParser parser(source);
  AstGraph ast = parser.parse_function();
  std::vector<std::string> code_tokens;
  for (const auto& tok : parser.tokens()) {
    if (tok.kind == Token::kEnd) break;
    if (tok.kind == Token::kIdent) {
      auto parts = split_identifier(tok.text);
      code_tokens.insert(code_tokens.end(), parts.begin(), parts.end());
    } else {
      code_tokens.push_back(tok.text);
    }
  }
  return {std::move(code_tokens), std::move(ast)};
}

// ---------------------------------------------------------------------------
// toy corpus generator
// ---------------------------------------------------------------------------

namespace {

struct ToyOp {
  const char* key;
  int arity;          // 1 or 2
  const char* expr;   // %a %b %n placeholders
  const char* summary;
};

const ToyOp kCommonOps[] = {
    {"add", 2, "%a + %b", "add %a and %b ."},
    {"subtract", 2, "%a - %b", "subtract %b from %a ."},
    {"multiply", 2, "%a * %b", "multiply %a by %b ."},
    {"divide", 2, "%a / %b", "divide %a by %b ."},
    {"maximum", 2, "max(%a, %b)", "return the maximum of %a and %b ."},
    {"minimum", 2, "min(%a, %b)", "return the minimum of %a and %b ."},
    {"average", 2, "(%a + %b) / 2", "compute the average of %a and %b ."},
    {"power", 2, "pow(%a, %b)", "raise %a to the power %b ."},
    {"distance", 2, "abs(%a - %b)", "compute the distance between %a and %b ."},
    {"equals", 2, "eq(%a, %b)", "check whether %a equals %b ."},
    {"join", 2, "concat(%a, %b)", "join %a and %b into one string ."},
    {"remainder", 2, "mod(%a, %b)", "compute the remainder of %a divided by %b ."},
    {"shift", 2, "%a * pow(2, %b)", "shift %a left by %b bits ."},
    {"ratio", 2, "%a / (%a + %b)", "compute the ratio of %a to the total ."},
    {"double", 1, "%a * 2", "double the %a ."},
    {"triple", 1, "%a * 3", "triple the %a ."},
    {"halve", 1, "%a / 2", "halve the %a ."},
    {"square", 1, "%a * %a", "square the %a ."},
    {"cube", 1, "%a * %a * %a", "cube the %a ."},
    {"increment", 1, "%a + 1", "increment the %a by one ."},
    {"decrement", 1, "%a - 1", "decrement the %a by one ."},
    {"negate", 1, "0 - %a", "negate the %a ."},
    {"absolute", 1, "abs(%a)", "return the absolute value of %a ."},
    {"floor", 1, "floor(%a)", "round the %a down ."},
    {"ceiling", 1, "ceil(%a)", "round the %a up ."},
    {"reverse", 1, "reverse(%a)", "reverse the %a string ."},
    {"upper", 1, "upper(%a)", "convert the %a to upper case ."},
    {"lower", 1, "lower(%a)", "convert the %a to lower case ."},
    {"trim", 1, "trim(%a)", "strip whitespace from the %a ."},
    {"length", 1, "len(%a)", "return the length of %a ."},
    {"stringify", 1, "str(%a)", "convert the %a to a string ."},
    {"parse", 1, "int(%a)", "parse the %a as an integer ."},
    {"sign", 1, "sign(%a)", "return the sign of %a ."},
    {"iszero", 1, "eq(%a, 0)", "check whether %a is zero ."},
    {"scale", 1, "%a * %n", "scale the %a by %n ."},
    {"offset", 1, "%a + %n", "offset the %a by %n ."},
};

struct RareOp {
  ToyOp op;
  std::size_t train_count;
};

const RareOp kRareOps[] = {
    {{"hypotenuse", 2, "sqrt(%a * %a + %b * %b)", "compute the hypotenuse from %a and %b ."}, 1},
    {{"factorial", 1, "factorial(%a)", "compute the factorial of the %a ."}, 2},
    {{"logarithm", 1, "log(%a)", "take the logarithm of the %a ."}, 5},
    {{"median", 2, "median(%a, %b)", "find the median of %a and %b ."}, 10},
};

const char* kNouns[] = {"value", "total", "count",  "number", "size",  "score",
                        "item",  "rate",  "depth",  "width",  "level", "index"};
const char* kArgs[] = {"a",    "b",     "x",     "y",    "num",   "val",  "left",
                       "right", "size",  "count", "base", "limit", "amount", "delta"};
const int kLits[] = {2, 3, 4, 5, 6, 7, 8, 9};

constexpr std::size_t kNumNouns = std::size(kNouns);
constexpr std::size_t kNumArgs = std::size(kArgs);
constexpr std::size_t kNumLits = std::size(kLits);

struct OpInstance {
  std::string fname;
  std::string arg1, arg2;
  int literal;
};

bool op_uses_literal(const ToyOp& op) {
  return std::string_view(op.expr).find("%n") != std::string_view::npos ||
         std::string_view(op.summary).find("%n") != std::string_view::npos;
}

std::size_t op_capacity(const ToyOp& op) {
  std::size_t cap = kNumArgs * kNumNouns;
  if (op.arity == 2) cap *= kNumArgs - 1;
  if (op_uses_literal(op)) cap *= kNumLits;
  return cap;
}

OpInstance decode_instance(const ToyOp& op, std::size_t idx) {
  OpInstance inst;
  std::size_t series = idx / op_capacity(op);
  std::size_t u = idx % op_capacity(op);
  if (op_uses_literal(op)) {
    inst.literal = kLits[u % kNumLits];
    u /= kNumLits;
  } else {
    inst.literal = kLits[0];
  }
  std::size_t a1 = u % kNumArgs;
  u /= kNumArgs;
  inst.arg1 = kArgs[a1];
  if (op.arity == 2) {
    std::size_t a2 = u % (kNumArgs - 1);
    u /= kNumArgs - 1;
    if (a2 >= a1) ++a2;
    inst.arg2 = kArgs[a2];
  }
  std::size_t noun = u % kNumNouns;
  inst.fname = std::string(op.key) + "_" + kNouns[noun];
  if (series > 0) inst.fname += std::to_string(series + 1);
  return inst;
}

std::string expand(const char* tmpl, const OpInstance& inst) {
  std::string out;
  for (const char* p = tmpl; *p; ++p) {
    if (*p == '%' && p[1]) {
      ++p;
      switch (*p) {
        case 'a': out += inst.arg1; break;
        case 'b': out += inst.arg2; break;
        case 'n': out += std::to_string(inst.literal); break;
        default: out.push_back(*p);
      }
    } else {
      out.push_back(*p);
    }
  }
  return out;
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

class InstanceStreams {
 public:
  explicit InstanceStreams(Rng& rng) {
    auto prep = [&](const ToyOp& op) {
      std::vector<std::size_t> order(op_capacity(op));
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      rng.shuffle(order);
      orders_.emplace(op.key, std::move(order));
      cursors_.emplace(op.key, 0);
    };
    for (const auto& op : kCommonOps) prep(op);
    for (const auto& r : kRareOps) prep(r.op);
  }

  OpInstance take(const ToyOp& op) {
    std::size_t& cur = cursors_.at(op.key);
    const auto& order = orders_.at(op.key);
    std::size_t idx = cur < order.size() ? order[cur] : cur;
    ++cur;
    return decode_instance(op, idx);
  }

 private:
  std::map<std::string, std::vector<std::size_t>> orders_;
  std::map<std::string, std::size_t> cursors_;
};

CodeSample build_sample(const ToyOp& op, const OpInstance& inst, const std::string& id) {
  std::string args = inst.arg1;
  if (op.arity == 2) args += ", " + inst.arg2;
  std::string source = "def " + inst.fname + "(" + args + "): return " + expand(op.expr, inst);
  CodeSample s;
  s.id = id;
  auto [code_tokens, ast] = parse_toy(source);
  s.code_tokens = std::move(code_tokens);
  s.ast = std::move(ast);
  s.summary_tokens = split_ws(expand(op.summary, inst));
  return s;
}

std::string pad_index(std::size_t i) {
  std::string s = std::to_string(i);
  while (s.size() < 6) s.insert(s.begin(), '0');
  return s;
}

}  // namespace

std::vector<CodeSample> gen_toy_split(std::uint64_t seed, const std::string& split_name,
                                      std::size_t n) {
  // standalone single-split generation; shares no instances with other
  // calls only by seed discipline, the full generator below is the one
  // that guarantees disjoint splits
  Rng rng(seed);
  InstanceStreams streams(rng);
  std::vector<CodeSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const ToyOp& op = kCommonOps[i % std::size(kCommonOps)];
    out.push_back(build_sample(op, streams.take(op),
                               "toy-" + split_name + "-" + pad_index(i)));
  }
  return out;
}

namespace {

std::vector<CodeSample> make_split(const std::string& split_name,
                                   const std::vector<const ToyOp*>& schedule,
                                   InstanceStreams& streams) {
  std::vector<CodeSample> out;
  out.reserve(schedule.size());
  for (std::size_t i = 0; i < schedule.size(); ++i)
    out.push_back(build_sample(*schedule[i], streams.take(*schedule[i]),
                               "toy-" + split_name + "-" + pad_index(i)));
  return out;
}

}  // namespace

ToyCorpus gen_toy_samples(std::uint64_t seed, std::size_t n_train, std::size_t n_val,
                          std::size_t n_test) {
  check(n_train >= 1 && n_val >= 1 && n_test >= 1, "gen_toy_corpus: sizes must be >= 1");
  Rng rng(seed);
  InstanceStreams streams(rng);

  // rare tail first: ops whose train frequency is pinned (1, 2, 5, 10)
  std::vector<const ToyOp*> train_ops;
  std::size_t rare_budget = n_train / 2;
  for (const auto& r : kRareOps) {
    if (train_ops.size() + r.train_count > rare_budget) break;
    for (std::size_t i = 0; i < r.train_count; ++i) train_ops.push_back(&r.op);
  }
  for (std::size_t i = 0; train_ops.size() < n_train; ++i)
    train_ops.push_back(&kCommonOps[i % std::size(kCommonOps)]);
  rng.shuffle(train_ops);

  std::vector<const ToyOp*> val_ops, test_ops;
  for (std::size_t i = 0; i < n_val; ++i) val_ops.push_back(&kCommonOps[i % std::size(kCommonOps)]);
  for (std::size_t i = 0; i < n_test; ++i)
    test_ops.push_back(&kCommonOps[i % std::size(kCommonOps)]);
  rng.shuffle(val_ops);
  rng.shuffle(test_ops);

  ToyCorpus corpus;
  corpus.train = make_split("train", train_ops, streams);
  corpus.val = make_split("val", val_ops, streams);
  corpus.test = make_split("test", test_ops, streams);
  return corpus;
}

ToySplitFiles gen_toy_corpus(std::uint64_t seed, std::size_t n_train, std::size_t n_val,
                             std::size_t n_test, const std::filesystem::path& out_dir) {
  ToyCorpus corpus = gen_toy_samples(seed, n_train, n_val, n_test);
  std::filesystem::create_directories(out_dir);
  ToySplitFiles files{out_dir / "train.jsonl", out_dir / "val.jsonl", out_dir / "test.jsonl"};
  save_dataset(corpus.train, files.train);
  save_dataset(corpus.val, files.val);
  save_dataset(corpus.test, files.test);
  return files;
}

}  // namespace tram
