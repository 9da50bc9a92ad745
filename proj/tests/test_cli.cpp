#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code;
  std::string output;
};

fs::path work_dir() {
  static fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "tram_cli_tests";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

RunResult run_cli(const std::string& args) {
  static int counter = 0;
  fs::path log = work_dir() / ("cli_log_" + std::to_string(counter++) + ".txt");
  std::string cmd = std::string(TRAM_CLI_PATH) + " " + args + " >" + log.string() + " 2>&1";
  int status = std::system(cmd.c_str());
  int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::string output((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return {code, output};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

const std::string kTinyModel =
    " --d-model 16 --heads 2 --layers 1 --ffn 32 --dropout 0 --batch 8 --lr 2e-3 "
    "--max-epochs 4 --patience 4";

}  // namespace

TEST_CASE("cli gen-corpus is deterministic and sized") {
  fs::path a = work_dir() / "corpus_a";
  fs::path b = work_dir() / "corpus_b";
  auto ra = run_cli("gen-corpus --seed 7 --train 12 --val 4 --test 4 --out " + a.string());
  REQUIRE(ra.exit_code == 0);
  auto rb = run_cli("gen-corpus --seed 7 --train 12 --val 4 --test 4 --out " + b.string());
  REQUIRE(rb.exit_code == 0);
  for (const char* f : {"train.jsonl", "val.jsonl", "test.jsonl"})
    CHECK(slurp(a / f) == slurp(b / f));
  // 12 lines in train
  std::ifstream in(a / "train.jsonl");
  int lines = 0;
  std::string line;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 12);
  // effective config dumped alongside the artifact
  CHECK(fs::exists(a / "gen-corpus.config"));
  CHECK(slurp(a / "gen-corpus.config").find("seed = 7") != std::string::npos);
}

TEST_CASE("cli usage errors exit 2, missing artifacts exit 3") {
  auto bad_flag = run_cli("train --no-such-flag 3");
  CHECK(bad_flag.exit_code == 2);
  CHECK(bad_flag.output.find("error: code=usage") != std::string::npos);

  auto no_sub = run_cli("");
  CHECK(no_sub.exit_code == 2);

  auto missing = run_cli("train --corpus /nonexistent/dir --out " +
                         (work_dir() / "nothing").string());
  CHECK(missing.exit_code == 3);
  CHECK(missing.output.find("error: code=missing_artifact") != std::string::npos);
  CHECK(missing.output.find("/nonexistent/dir") != std::string::npos);

  auto missing_ck = run_cli("build-datastore --corpus " + (work_dir() / "corpus_a").string() +
                            " --checkpoint /nonexistent.ckpt --out " +
                            (work_dir() / "nothing").string());
  CHECK(missing_ck.exit_code == 3);
}

TEST_CASE("cli end-to-end recipe with fusion identity at lambda zero") {
  fs::path corpus = work_dir() / "corpus_a";
  fs::path run = work_dir() / "run";
  auto train = run_cli("train --corpus " + corpus.string() + kTinyModel + " --seed 3 --out " +
                       run.string());
  REQUIRE(train.exit_code == 0);
  REQUIRE(fs::exists(run / "model.ckpt"));
  CHECK(fs::exists(run / "train_log.json"));
  CHECK(fs::exists(run / "train.config"));

  auto build = run_cli("build-datastore --corpus " + corpus.string() + " --checkpoint " +
                       (run / "model.ckpt").string() + " --out " + run.string());
  REQUIRE(build.exit_code == 0);
  REQUIRE(fs::exists(run / "datastore.bin"));

  // summarize with retrieval disabled vs lambda 0
  fs::path bare = work_dir() / "sum_bare";
  fs::path fused = work_dir() / "sum_l0";
  auto sb = run_cli("summarize --corpus " + corpus.string() + " --checkpoint " +
                    (run / "model.ckpt").string() + " --beam 2 --max-len 12 --out " +
                    bare.string());
  REQUIRE(sb.exit_code == 0);
  auto sf = run_cli("summarize --corpus " + corpus.string() + " --checkpoint " +
                    (run / "model.ckpt").string() + " --datastore " +
                    (run / "datastore.bin").string() + " --lambda 0 --beam 2 --max-len 12 " +
                    "--trace " + (fused / "trace.jsonl").string() + " --out " + fused.string());
  REQUIRE(sf.exit_code == 0);
  CHECK(slurp(bare / "summaries.jsonl") == slurp(fused / "summaries.jsonl"));

  // trace schema: step/chosen/retrieved/model_mass/retrieval_mass
  std::ifstream tin(fused / "trace.jsonl");
  std::string line;
  int steps = 0;
  while (std::getline(tin, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    CHECK(j.contains("step"));
    CHECK(j.contains("chosen"));
    CHECK(j.contains("retrieved"));
    CHECK(j.contains("model_mass"));
    CHECK(j.contains("retrieval_mass"));
    CHECK(j.size() == 5);
    double sum = 0.0;
    for (const auto& pair : j["retrieved"]) sum += pair[1].get<double>();
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    ++steps;
  }
  CHECK(steps > 0);

  // evaluate writes a metric report
  fs::path eval = work_dir() / "eval";
  auto ev = run_cli("evaluate --corpus " + corpus.string() + " --checkpoint " +
                    (run / "model.ckpt").string() + " --datastore " +
                    (run / "datastore.bin").string() + " --lambda 0.5 --beam 1 --max-len 12 " +
                    "--out " + eval.string());
  REQUIRE(ev.exit_code == 0);
  json metrics = json::parse(slurp(eval / "metrics.json"));
  CHECK(metrics.contains("bleu"));
  CHECK(metrics.contains("rouge_l"));
  CHECK(metrics.contains("meteor_s"));
  CHECK(metrics["samples"].get<int>() == 4);

  // analyze-freq over two systems
  fs::path freq = work_dir() / "freq";
  auto af = run_cli("analyze-freq --corpus " + corpus.string() + " --split test" +
                    " --system base=" + (bare / "summaries.jsonl").string() +
                    " --system tram=" + (fused / "summaries.jsonl").string() + " --out " +
                    freq.string());
  REQUIRE(af.exit_code == 0);
  std::string csv = slurp(freq / "freq_bins.csv");
  CHECK(csv.find("system,freq_1,freq_2,freq_5,freq_10,freq_50,freq_100") != std::string::npos);
  CHECK(csv.find("base,") != std::string::npos);
  CHECK(csv.find("tram,") != std::string::npos);

  // sweep and perturb produce grid-shaped CSVs
  fs::path sweep = work_dir() / "sweep";
  auto sw = run_cli("sweep --corpus " + corpus.string() + " --checkpoint " +
                    (run / "model.ckpt").string() + " --datastore " +
                    (run / "datastore.bin").string() +
                    " --lambdas 0,1 --temps 5,10 --beam 1 --max-len 10 --out " + sweep.string());
  REQUIRE(sw.exit_code == 0);
  std::string sweep_csv = slurp(sweep / "sweep.csv");
  CHECK(std::count(sweep_csv.begin(), sweep_csv.end(), '\n') == 5);  // header + 4 rows

  fs::path noise = work_dir() / "noise";
  auto pr = run_cli("perturb --corpus " + corpus.string() + " --checkpoint " +
                    (run / "model.ckpt").string() + " --datastore " +
                    (run / "datastore.bin").string() +
                    " --fractions 0,0.2 --noise-seeds 2 --beam 1 --max-len 10 --out " +
                    noise.string());
  REQUIRE(pr.exit_code == 0);
  std::string noise_csv = slurp(noise / "noise.csv");
  CHECK(std::count(noise_csv.begin(), noise_csv.end(), '\n') == 3);  // header + 2 rows
}

TEST_CASE("cli three-way fusion mode") {
  fs::path corpus = work_dir() / "corpus_a";
  fs::path run = work_dir() / "run";
  fs::path out = work_dir() / "sum_senre";
  auto r = run_cli("summarize --corpus " + corpus.string() + " --checkpoint " +
                   (run / "model.ckpt").string() + " --datastore " +
                   (run / "datastore.bin").string() +
                   " --mode token+sentence --lambda1 0.4 --lambda2 0.2 --beam 1 --max-len 10" +
                   " --out " + out.string());
  REQUIRE(r.exit_code == 0);
  CHECK(fs::exists(out / "summaries.jsonl"));
  std::ifstream in(out / "summaries.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    json j = json::parse(line);
    CHECK(j.contains("id"));
    CHECK(j.contains("summary"));
    ++lines;
  }
  CHECK(lines == 4);
}

TEST_CASE("cli config file loads and flags override") {
  fs::path cfg_file = work_dir() / "run.cfg";
  {
    std::ofstream out(cfg_file);
    out << "# comment line\n";
    out << "seed = 9\n";
    out << "train_size = 6\n";
    out << "val_size = 2\n";
    out << "test_size = 2\n";
  }
  fs::path out_a = work_dir() / "cfg_a";
  auto ra = run_cli("gen-corpus --config " + cfg_file.string() + " --out " + out_a.string());
  REQUIRE(ra.exit_code == 0);
  std::string dumped = slurp(out_a / "gen-corpus.config");
  CHECK(dumped.find("seed = 9") != std::string::npos);
  CHECK(dumped.find("train_size = 6") != std::string::npos);

  // flag wins over file
  fs::path out_b = work_dir() / "cfg_b";
  auto rb = run_cli("gen-corpus --config " + cfg_file.string() + " --seed 12 --out " +
                    out_b.string());
  REQUIRE(rb.exit_code == 0);
  CHECK(slurp(out_b / "gen-corpus.config").find("seed = 12") != std::string::npos);

  // unknown key rejected
  {
    std::ofstream out(cfg_file, std::ios::app);
    out << "not_a_real_key = 1\n";
  }
  auto bad = run_cli("gen-corpus --config " + cfg_file.string() + " --out " + out_a.string());
  CHECK(bad.exit_code == 2);
  CHECK(bad.output.find("unknown key") != std::string::npos);
}
