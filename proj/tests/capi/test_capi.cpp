#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <eemp/eemp.h>
#include <json.hpp>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path fixture(const std::string& name) { return fs::path(EEMP_FIXTURES_DIR) / name; }

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() / ("eemp-capi-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string take(char* s) {
  std::string out = s ? s : "";
  eemp_string_free(s);
  return out;
}

struct CliResult {
  int exit_code;
  std::string out;
  std::string err;
};

CliResult cli(const TempDir& dir, const std::string& args) {
  const auto out = dir / "cli.out", err = dir / "cli.err";
  const std::string cmd = std::string(EEMP_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

struct Config {
  eemp_config* raw = nullptr;
  Config() { REQUIRE(eemp_config_new(&raw) == EEMP_OK); }
  ~Config() { eemp_config_free(raw); }
  void set(const char* k, const std::string& v) { REQUIRE(eemp_config_set(raw, k, v.c_str()) == EEMP_OK); }
};

void small_model(Config& c) {
  c.set("synth_copy", "10");
  c.set("synth_reverse", "10");
  c.set("synth_noise", "4");
  c.set("synth_test_fraction", "0.2");
  c.set("scorer_endpoint", "synthetic://");
  c.set("model_d_model", "8");
  c.set("model_n_heads", "2");
  c.set("model_d_ff", "12");
  c.set("model_max_seq", "16");
  c.set("train_epochs", "1");
  c.set("router_epochs", "1");
  c.set("max_tokens", "4");
}

}  // namespace

TEST_CASE("version and key listing") {
  CHECK(std::string(eemp_version()).size() > 0);
  char* keys = nullptr;
  REQUIRE(eemp_config_keys(&keys) == EEMP_OK);
  const std::string text = take(keys);
  CHECK(text.find("threshold\t5\t") != std::string::npos);
  char* names = nullptr;
  REQUIRE(eemp_command_names(&names) == EEMP_OK);
  CHECK(take(names).find("train-router") != std::string::npos);
}

TEST_CASE("config handles and status codes") {
  Config c;
  char* v = nullptr;
  REQUIRE(eemp_config_get(c.raw, "threshold", &v) == EEMP_OK);
  CHECK(take(v) == "5");
  REQUIRE(eemp_config_get(c.raw, "subset", &v) == EEMP_OK);
  CHECK(v == nullptr);
  CHECK(eemp_config_set(c.raw, "bogus", "1") == EEMP_ERR_CONFIG);
  CHECK(std::string(eemp_last_error()).find("bogus") != std::string::npos);
  CHECK(eemp_config_set(nullptr, "threshold", "1") == EEMP_ERR_INVALID_ARGUMENT);
  CHECK(eemp_config_get(c.raw, nullptr, &v) == EEMP_ERR_INVALID_ARGUMENT);
  eemp_config* loaded = nullptr;
  CHECK(eemp_config_load("/nonexistent.conf", &loaded) == EEMP_ERR_CONFIG);
  CHECK(loaded == nullptr);

  TempDir dir;
  c.set("workspace", dir.path().string());
  char* report = nullptr;
  CHECK(eemp_select(c.raw, &report) == EEMP_ERR_UPSTREAM_MISSING);
  CHECK(std::string(eemp_last_error()).find("eemp ingest") != std::string::npos);
  CHECK(eemp_run("nope", c.raw, nullptr, nullptr, &report) == EEMP_ERR_CONFIG);
  c.set("threshold", "12");
  std::ofstream(dir / "corpus.jsonl") << slurp(fixture("corpus_small.jsonl"));
  std::ofstream(dir / "scored.jsonl") << slurp(fixture("mock_scores_seed7.jsonl"));
  CHECK(eemp_select(c.raw, &report) == EEMP_ERR_CONFIG);
  c.set("threshold", "5");
  std::ofstream(dir / "scored.jsonl") << "{not json\n";
  CHECK(eemp_select(c.raw, &report) == EEMP_ERR_DATA);
  c.set("scorer_endpoint", "http://127.0.0.1:1/v1/chat/completions");
  c.set("scorer_max_retries", "0");
  c.set("scorer_timeout", "2");
  CHECK(eemp_score(c.raw, &report) == EEMP_ERR_SCORER);
}

TEST_CASE("building blocks") {
  int s = -1, r = -1, subset = -1;
  REQUIRE(eemp_parse_scores("Sensibility: 7.6\nRationalality: 3", &s, &r) == EEMP_OK);
  CHECK(s == 8);
  CHECK(r == 3);
  CHECK(eemp_parse_scores("nothing", &s, &r) == EEMP_ERR_SCORER);
  CHECK(eemp_parse_scores(nullptr, &s, &r) == EEMP_ERR_INVALID_ARGUMENT);
  REQUIRE(eemp_classify(8, 2, 5, &subset) == EEMP_OK);
  CHECK(subset == 0);
  REQUIRE(eemp_classify(2, 8, 5, &subset) == EEMP_OK);
  CHECK(subset == 1);
  REQUIRE(eemp_classify(5, 5, 5, &subset) == EEMP_OK);
  CHECK(subset == 2);
  CHECK(eemp_classify(11, 0, 5, &subset) == EEMP_ERR_INVALID_ARGUMENT);
}

TEST_CASE("model handles") {
  eemp_model* m = nullptr;
  CHECK(eemp_model_load("/nonexistent.ckpt", &m) != EEMP_OK);
  REQUIRE(eemp_model_load(fixture("tiny_model.ckpt").c_str(), &m) == EEMP_OK);
  int moe = -1;
  REQUIRE(eemp_model_is_moe(m, &moe) == EEMP_OK);
  CHECK(moe == 0);
  char* a = nullptr;
  char* b = nullptr;
  const char* ctx = R"([{"role":"speaker","text":"Hi"}])";
  REQUIRE(eemp_model_generate(m, ctx, 3, &a) == EEMP_OK);
  REQUIRE(eemp_model_generate(m, ctx, 3, &b) == EEMP_OK);
  CHECK(take(a) == take(b));
  CHECK(eemp_model_generate(m, "not json", 3, &a) == EEMP_ERR_DATA);
  CHECK(eemp_model_generate(m, ctx, -1, &a) == EEMP_ERR_INVALID_ARGUMENT);
  CHECK(eemp_model_generate(m, R"([{"role":"speaker","text":"far too long for this window"}])", 3, &a) != EEMP_OK);
  eemp_model_free(m);
}

TEST_CASE("full synthetic pipeline through the C API") {
  TempDir dir;
  Config c;
  small_model(c);
  c.set("workspace", dir.path().string());
  std::vector<std::string> lines;
  auto progress = [](const char* line, void* user) { static_cast<std::vector<std::string>*>(user)->push_back(line); };
  auto run = [&](const char* cmd) {
    char* report = nullptr;
    const auto st = eemp_run(cmd, c.raw, progress, &lines, &report);
    INFO(cmd << ": " << eemp_last_error());
    REQUIRE(st == EEMP_OK);
    return take(report);
  };
  run("synth");
  run("score");
  CHECK(run("select").find("sensibility") != std::string::npos);
  run("init-base");
  for (const char* s : {"sensibility", "rationality", "discard"}) {
    c.set("subset", s);
    run("train-expert");
  }
  run("compose-moe");
  run("train-router");
  c.set("model", "moe_routed");
  run("generate");
  c.set("models", "base,moe_routed");
  const auto eval = run("evaluate");
  CHECK(eval.find("moe_routed") != std::string::npos);
  CHECK_FALSE(lines.empty());

  eemp_model* m = nullptr;
  REQUIRE(eemp_model_load((dir / "checkpoints/moe_routed.ckpt").c_str(), &m) == EEMP_OK);
  int moe = 0;
  eemp_model_is_moe(m, &moe);
  CHECK(moe == 1);
  double nll = 0.0;
  REQUIRE(eemp_model_nll(m, (dir / "test_instances.jsonl").c_str(), &nll) == EEMP_OK);
  const auto report = json::parse(slurp(dir / "reports/evaluate.json"));
  CHECK(nll == doctest::Approx(report["nll"]["moe_routed"].get<double>()));
  eemp_model_free(m);
}

TEST_CASE("cli: select writes three partitions and a manifest") {
  TempDir dir;
  const std::string ws = "--workspace " + dir.path().string();
  auto r = cli(dir, "ingest " + ws + " --input " + fixture("corpus_small.jsonl").string());
  REQUIRE(r.exit_code == 0);
  r = cli(dir, "score " + ws + " --scorer-endpoint mock://7");
  REQUIRE(r.exit_code == 0);
  r = cli(dir, "select " + ws + " --threshold 5");
  CHECK(r.exit_code == 0);
  for (const char* f : {"sensibility.jsonl", "rationality.jsonl", "discard.jsonl"}) CHECK(fs::exists(dir / "partitions" / f));
  CHECK(fs::exists(dir / "manifests/select.json"));
  CHECK(r.out.find("discard") != std::string::npos);

  std::ofstream(dir / "eemp.conf") << "workspace = " << dir.path().string() << "\nthreshold = 4\n";
  r = cli(dir, "select -c " + (dir / "eemp.conf").string() + " --threshold 6");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("threshold 6") != std::string::npos);
}

TEST_CASE("cli: exit codes") {
  TempDir dir;
  const std::string ws = "--workspace " + dir.path().string();
  CHECK(cli(dir, "--version").exit_code == 0);
  CHECK(cli(dir, "frobnicate").exit_code == 2);
  CHECK(cli(dir, "select " + ws + " --no-such-flag 1").exit_code == 2);
  auto r = cli(dir, "compose-moe " + ws);
  CHECK(r.exit_code == 3);
  CHECK(r.err.find("train-expert") != std::string::npos);
  std::ofstream(dir / "corpus.jsonl") << slurp(fixture("corpus_small.jsonl"));
  std::ofstream(dir / "scored.jsonl") << slurp(fixture("mock_scores_seed7.jsonl"));
  CHECK(cli(dir, "select " + ws + " --threshold 11").exit_code == 2);
  std::ofstream(dir / "bad.jsonl") << "{\"id\": 1}\n";
  CHECK(cli(dir, "ingest " + ws + " --input " + (dir / "bad.jsonl").string()).exit_code == 4);
  r = cli(dir, "score " + ws + " --scorer-endpoint http://127.0.0.1:1/x --scorer-max-retries 0 --scorer-timeout 2");
  CHECK(r.exit_code == 5);
  CHECK(cli(dir, "train-expert " + ws + " --subset bogus").exit_code == 2);
}

TEST_CASE("cli: evaluate with mismatched ids names them") {
  TempDir dir;
  std::ofstream(dir / "h.jsonl") << R"({"id":"a1","hypothesis":"x y"})" << "\n" << R"({"id":"b2","hypothesis":"y"})" << "\n";
  std::ofstream(dir / "r.jsonl") << R"({"id":"a1","reference":"x y"})" << "\n" << R"({"id":"c3","reference":"z"})" << "\n";
  auto r = cli(dir, "evaluate --workspace " + dir.path().string() + " --hypotheses " + (dir / "h.jsonl").string() +
                        " --references " + (dir / "r.jsonl").string());
  CHECK(r.exit_code == 4);
  CHECK(r.err.find("b2") != std::string::npos);
  CHECK(r.err.find("c3") != std::string::npos);

  std::ofstream(dir / "r.jsonl") << R"({"id":"a1","reference":"x y"})" << "\n" << R"({"id":"b2","reference":"z"})" << "\n";
  r = cli(dir, "evaluate --workspace " + dir.path().string() + " --hypotheses " + (dir / "h.jsonl").string() +
                   " --references " + (dir / "r.jsonl").string());
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("B-1") != std::string::npos);
}

TEST_CASE("cli: abtest build and report") {
  TempDir dir;
  const std::string ws = "--workspace " + dir.path().string();
  fs::create_directories(dir / "outputs");
  {
    std::ofstream ours(dir / "outputs/ours.jsonl"), base(dir / "outputs/base.jsonl");
    for (int i = 0; i < 6; ++i) {
      ours << json{{"id", "d" + std::to_string(i)}, {"hypothesis", "ours " + std::to_string(i)}}.dump() << "\n";
      base << json{{"id", "d" + std::to_string(i)}, {"hypothesis", "base " + std::to_string(i)}}.dump() << "\n";
    }
  }
  auto r = cli(dir, "abtest build " + ws + " --abtest-ours ours --abtest-baseline base --abtest-n 4");
  INFO(r.err);
  REQUIRE(r.exit_code == 0);
  CHECK(fs::exists(dir / "abtest/tasks.jsonl"));
  r = cli(dir, "abtest report " + ws);
  CHECK(r.exit_code == 0);
  CHECK(fs::exists(dir / "reports/abtest_report.json"));
  CHECK(cli(dir, "abtest bogus " + ws).exit_code == 2);
}
