#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dualmatch/cli.hpp"
#include "dualmatch/csv.hpp"
#include "dualmatch/model.hpp"
#include "helpers.hpp"

using namespace dualmatch;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "dualmatch");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::size_t data_lines(const std::filesystem::path& p) {
  const std::string s = test::read_text(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')) - 1;
}

const std::string kFixture = std::string(DUALMATCH_SOURCE_DIR) + "/data/fixture";

}  // namespace

TEST_CASE("synth writes balanced, reproducible files") {
  test::TempDir dir("cli_synth");
  const auto a = (dir / "a").string(), b = (dir / "b").string();
  REQUIRE(cli({"synth", "--n", "5", "--seed", "7", "--tau", "0.05", "--out", a}).code == 0);
  REQUIRE(cli({"synth", "--n", "5", "--seed", "7", "--tau", "0.05", "--out", b}).code == 0);
  CHECK(data_lines(dir / "a/X.csv") == 5);
  for (const char* f : {"X.csv", "Y.csv", "gt_pairs.csv", "meta.json"}) {
    CHECK(test::read_text(dir / ("a/" + std::string(f))) == test::read_text(dir / ("b/" + std::string(f))));
  }
  CHECK(std::filesystem::exists(dir / "a/resolved_config.ini"));
  const auto x = csv::read_file(dir / "a/X.csv");
  std::set<std::string> cats;
  for (std::size_t r = 1; r < x.size(); ++r) cats.insert(x[r][0]);
  CHECK(cats.size() == 5);
}

TEST_CASE("train, eval and score on synthetic data") {
  test::TempDir dir("cli_train");
  const auto syn = (dir / "syn").string(), run = (dir / "run").string();
  REQUIRE(cli({"synth", "--n", "200", "--seed", "3", "--out", syn}).code == 0);

  const auto t = cli({"train", "--data", syn, "--seed", "3", "--epochs", "0", "--clusters", "3000", "--out", run});
  REQUIRE(t.code == 0);
  CHECK(std::filesystem::exists(dir / "run/model.ckpt"));
  CHECK(std::filesystem::exists(dir / "run/train_log.csv"));
  CHECK_NOTHROW(load_checkpoint(dir / "run/model.ckpt"));
  const std::string resolved = test::read_text(dir / "run/resolved_config.ini");
  CHECK(resolved.find("k = 3000") != std::string::npos);
  CHECK_FALSE(std::filesystem::exists(dir / "run/.dualmatch.lock"));

  const auto cfg = (dir / "run/resolved_config.ini").string();
  const auto e1 = cli({"eval", "--config", cfg, "--out", (dir / "ev").string()});
  REQUIRE(e1.code == 0);
  const auto report = nlohmann::json::parse(test::read_text(dir / "ev/report.json"));
  CHECK(report.contains("ap"));
  CHECK(report.contains("ndcg"));
  CHECK(report.at("provenance").at("config_hash") == config_hash(load_checkpoint(dir / "run/model.ckpt").config));
  CHECK(std::filesystem::exists(dir / "ev/pr_curve.csv"));
  CHECK(std::filesystem::exists(dir / "ev/resolved_config.ini"));

  CHECK(cli({"eval", "--config", cfg, "--checkpoint", (dir / "none.ckpt").string(), "--out", (dir / "ev2").string()})
            .code == kExitData);
}

TEST_CASE("tabular train, eval negatives and scoring modes") {
  test::TempDir dir("cli_tab");
  const auto run = (dir / "run").string();
  const std::vector<std::string> data{"--schema", kFixture + "/pums_schema.ini", "--households",
                                      kFixture + "/households.csv", "--units", kFixture + "/units.csv"};
  std::vector<std::string> args{"train"};
  args.insert(args.end(), data.begin(), data.end());
  for (const char* a : {"--epochs", "1", "--clusters", "200", "--out"}) args.push_back(a);
  args.push_back(run);
  REQUIRE(cli(args).code == 0);

  const auto cfg = (dir / "run/resolved_config.ini").string();
  REQUIRE(cli({"eval", "--config", cfg, "--negatives-per-positive", "1", "--out", (dir / "e1").string()}).code == 0);
  REQUIRE(cli({"eval", "--config", cfg, "--negatives-per-positive", "10", "--out", (dir / "e10").string()}).code == 0);
  const auto r1 = nlohmann::json::parse(test::read_text(dir / "e1/report.json"));
  const auto r10 = nlohmann::json::parse(test::read_text(dir / "e10/report.json"));
  CHECK(r10.at("negatives").get<std::size_t>() == 10 * r1.at("negatives").get<std::size_t>());

  test::write_text(dir / "h.csv", test::read_text(kFixture + "/households.csv").substr(0, 0));
  {
    const auto hh = csv::read_file(kFixture + "/households.csv");
    const auto hu = csv::read_file(kFixture + "/units.csv");
    std::ofstream h(dir / "h.csv"), u(dir / "u.csv");
    for (std::size_t r = 0; r < 4; ++r) {
      csv::write_row(h, hh[r]);
      csv::write_row(u, hu[r]);
    }
  }
  const auto ckpt = (dir / "run/model.ckpt").string();
  const auto h = (dir / "h.csv").string(), u = (dir / "u.csv").string();
  REQUIRE(cli({"score", "--checkpoint", ckpt, "--households", h, "--units", u, "--out", (dir / "s").string()}).code == 0);
  const auto scores = csv::read_file(dir / "s/scores.csv");
  REQUIRE(scores.size() == 10);
  CHECK(scores[0] == std::vector<std::string>{"row_a", "row_b", "logit", "probability"});
  for (std::size_t r = 1; r < scores.size(); ++r) {
    const double p = *csv::parse_double(scores[r][3]);
    CHECK((p > 0.0 && p < 1.0));
  }
  REQUIRE(cli({"score", "--checkpoint", ckpt, "--households", h, "--units", u, "--top", "1", "--out",
               (dir / "s1").string()})
              .code == 0);
  const auto top = csv::read_file(dir / "s1/scores.csv");
  REQUIRE(top.size() == 4);
  CHECK(top[1][0] == "0");
  CHECK(top[2][0] == "1");
  CHECK(top[3][0] == "2");

  test::write_text(dir / "pairs.csv", "row_a,row_b\n0,0\n2,1\n");
  REQUIRE(cli({"score", "--checkpoint", ckpt, "--households", h, "--units", u, "--pairs", (dir / "pairs.csv").string(),
               "--out", (dir / "sp").string()})
              .code == 0);
  const auto sp = csv::read_file(dir / "sp/scores.csv");
  REQUIRE(sp.size() == 3);
  CHECK(sp[2][2] == scores[1 + 2 * 3 + 1][2]);
}

TEST_CASE("exit codes and locking") {
  test::TempDir dir("cli_codes");
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"bogus"}).code == kExitUsage);
  CHECK(cli({"synth", "--n", "abc", "--out", (dir / "x").string()}).code == kExitUsage);
  CHECK(cli({"synth", "--n", "5"}).code == kExitUsage);
  const auto bad = cli({"train", "--schema", (dir / "missing.ini").string(), "--households", "h", "--units", "u",
                        "--out", (dir / "t").string()});
  CHECK(bad.code == kExitData);
  CHECK(bad.err.find("stage") != std::string::npos);

  std::filesystem::create_directories(dir / "locked");
  test::write_text(dir / "locked/.dualmatch.lock", "1\n");
  CHECK(cli({"synth", "--n", "5", "--out", (dir / "locked").string()}).code == kExitData);
  CHECK(cli({"--help"}).code == kExitOk);
}

TEST_CASE("sweep and importance tables") {
  test::TempDir dir("cli_sweep");
  const auto syn = (dir / "syn").string();
  REQUIRE(cli({"synth", "--n", "200", "--seed", "5", "--out", syn}).code == 0);
  REQUIRE(cli({"sweep", "--data", syn, "--seed", "5", "--epochs", "1", "--clusters-a", "0", "--k", "10,50,160", "--out",
               (dir / "sw").string()})
              .code == 0);
  const auto sw = csv::read_file(dir / "sw/sweep.csv");
  REQUIRE(sw.size() == 4);
  CHECK(sw[0] == std::vector<std::string>{"k", "median_cluster_size", "AP", "NDCG", "positives", "runtime_s", "seed", "label"});
  for (std::size_t r = 1; r < 4; ++r) CHECK(sw[r][6] == "5");
  CHECK(sw[3][7] == "Singleton");

  REQUIRE(cli({"train", "--data", syn, "--seed", "5", "--epochs", "1", "--out", (dir / "run").string()}).code == 0);
  REQUIRE(cli({"importance", "--config", (dir / "run/resolved_config.ini").string(), "--repeats", "2", "--out",
               (dir / "imp").string()})
              .code == 0);
  const auto imp = csv::read_file(dir / "imp/importance.csv");
  REQUIRE(imp.size() == 7);  // c, n1, n2, y1, y2, y3
  for (std::size_t r = 2; r < imp.size(); ++r) CHECK(*csv::parse_double(imp[r - 1][4]) >= *csv::parse_double(imp[r][4]));
}
