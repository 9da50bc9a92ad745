#include "tram/runconfig.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "tram/common.hpp"
#include "tram/experiments.hpp"

namespace tram {

namespace {

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::uint64_t to_u64(const std::string& v) {
  std::size_t pos = 0;
  auto out = std::stoull(v, &pos);
  check(pos == v.size(), "config: bad unsigned integer '" + v + "'");
  return out;
}

int to_int(const std::string& v) {
  std::size_t pos = 0;
  int out = std::stoi(v, &pos);
  check(pos == v.size(), "config: bad integer '" + v + "'");
  return out;
}

double to_double(const std::string& v) {
  std::size_t pos = 0;
  double out = std::stod(v, &pos);
  check(pos == v.size(), "config: bad number '" + v + "'");
  return out;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw TramError("config: bad boolean '" + v + "'");
}

const std::map<std::string, Field>& field_table() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t;
    auto add_str = [&t](const char* key, std::string RunConfig::* mem) {
      t[key] = {[mem](RunConfig& c, const std::string& v) { c.*mem = v; },
                [mem](const RunConfig& c) { return c.*mem; }};
    };
    auto add_int = [&t](const char* key, int RunConfig::* mem) {
      t[key] = {[mem](RunConfig& c, const std::string& v) { c.*mem = to_int(v); },
                [mem](const RunConfig& c) { return std::to_string(c.*mem); }};
    };
    auto add_u64 = [&t](const char* key, std::uint64_t RunConfig::* mem) {
      t[key] = {[mem](RunConfig& c, const std::string& v) { c.*mem = to_u64(v); },
                [mem](const RunConfig& c) { return std::to_string(c.*mem); }};
    };
    auto add_double = [&t](const char* key, double RunConfig::* mem) {
      t[key] = {[mem](RunConfig& c, const std::string& v) { c.*mem = to_double(v); },
                [mem](const RunConfig& c) { return format_double(c.*mem); }};
    };
    auto add_bool = [&t](const char* key, bool RunConfig::* mem) {
      t[key] = {[mem](RunConfig& c, const std::string& v) { c.*mem = to_bool(v); },
                [mem](const RunConfig& c) { return c.*mem ? "true" : "false"; }};
    };
    add_u64("seed", &RunConfig::seed);
    add_str("out", &RunConfig::out);
    add_str("corpus", &RunConfig::corpus);
    add_str("checkpoint", &RunConfig::checkpoint);
    add_str("datastore", &RunConfig::datastore);
    add_str("trace", &RunConfig::trace);
    add_str("split", &RunConfig::split);
    add_int("d_model", &RunConfig::d_model);
    add_int("n_heads", &RunConfig::n_heads);
    add_int("n_enc_layers", &RunConfig::n_enc_layers);
    add_int("n_dec_layers", &RunConfig::n_dec_layers);
    add_int("n_gat_layers", &RunConfig::n_gat_layers);
    add_int("ffn_dim", &RunConfig::ffn_dim);
    add_int("k_clip", &RunConfig::k_clip);
    add_double("dropout", &RunConfig::dropout);
    add_int("max_code_len", &RunConfig::max_code_len);
    add_int("max_summary_len", &RunConfig::max_summary_len);
    add_double("lr", &RunConfig::lr);
    add_int("batch", &RunConfig::batch);
    add_int("patience", &RunConfig::patience);
    add_int("max_epochs", &RunConfig::max_epochs);
    add_int("min_freq", &RunConfig::min_freq);
    add_int("max_vocab", &RunConfig::max_vocab);
    add_double("lambda", &RunConfig::lambda);
    add_double("temp", &RunConfig::temp);
    add_int("topk", &RunConfig::topk);
    add_str("mode", &RunConfig::mode);
    add_double("lambda1", &RunConfig::lambda1);
    add_double("lambda2", &RunConfig::lambda2);
    add_bool("no_hr", &RunConfig::no_hr);
    add_str("metric", &RunConfig::metric);
    add_int("beam", &RunConfig::beam);
    add_int("max_len", &RunConfig::max_len);
    add_u64("train_size", &RunConfig::train_size);
    add_u64("val_size", &RunConfig::val_size);
    add_u64("test_size", &RunConfig::test_size);
    add_str("fractions", &RunConfig::fractions);
    add_int("noise_seeds", &RunConfig::noise_seeds);
    add_str("lambdas", &RunConfig::lambdas);
    add_str("temps", &RunConfig::temps);
    return t;
  }();
  return table;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = field_table().find(key);
  check(it != field_table().end(), "config: unknown key '" + key + "'");
  it->second.set(*this, value);
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  check(in.good(), "config: cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    check(eq != std::string::npos,
          "config: " + path.string() + " line " + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    try {
      set(key, value);
    } catch (const TramError& e) {
      throw TramError(path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

std::string RunConfig::dump() const {
  std::ostringstream out;
  for (const auto& [key, field] : field_table()) out << key << " = " << field.get(*this) << '\n';
  return out.str();
}

ModelConfig RunConfig::model_config() const {
  ModelConfig c;
  c.d_model = d_model;
  c.n_heads = n_heads;
  c.n_enc_layers = n_enc_layers;
  c.n_dec_layers = n_dec_layers;
  c.n_gat_layers = n_gat_layers;
  c.ffn_dim = ffn_dim;
  c.k_clip = k_clip;
  c.dropout = dropout;
  c.max_code_len = max_code_len;
  c.max_summary_len = max_summary_len;
  c.validate();
  return c;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig c;
  c.batch_size = batch;
  c.lr = lr;
  c.patience = patience;
  c.max_epochs = max_epochs;
  c.seed = seed;
  c.vocab.min_freq = static_cast<std::size_t>(min_freq);
  c.vocab.max_size = static_cast<std::size_t>(max_vocab);
  c.val_max_len = max_len;
  return c;
}

FusionConfig RunConfig::fusion_config() const {
  FusionConfig c;
  c.lambda = lambda;
  c.temperature = temp;
  c.top_k = topk;
  if (mode == "token") {
    c.mode = FusionConfig::Mode::kTokenOnly;
  } else if (mode == "token+sentence") {
    c.mode = FusionConfig::Mode::kTokenSentence;
  } else {
    throw TramError("config: mode must be 'token' or 'token+sentence', got '" + mode + "'");
  }
  c.lambda1 = lambda1;
  c.lambda2 = lambda2;
  c.without_hr = no_hr;
  if (metric == "cosine") {
    c.metric = RetrievalMetric::kCosine;
  } else if (metric == "l2") {
    c.metric = RetrievalMetric::kSquaredL2;
  } else {
    throw TramError("config: metric must be 'cosine' or 'l2', got '" + metric + "'");
  }
  c.validate();
  return c;
}

std::vector<double> parse_double_list(const std::string& csv) {
  std::vector<double> out;
  std::string item;
  std::istringstream in(csv);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(to_double(item));
  }
  check(!out.empty(), "config: empty list '" + csv + "'");
  return out;
}

void atomic_write_text(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    check(out.good(), "atomic_write: cannot open " + tmp.string());
    out << content;
    check(out.good(), "atomic_write: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace tram
