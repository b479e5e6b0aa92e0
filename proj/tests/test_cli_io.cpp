#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "dhr/cli.hpp"
#include "dhr/dataset_io.hpp"
#include "dhr/error.hpp"
#include "support.hpp"

using namespace dhr;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("dhr_cli_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

void check_error_line(const std::string& text, std::size_t line, const std::string& fragment) {
  std::istringstream in(text);
  try {
    read_dataset(in);
    FAIL("expected a data-format error");
  } catch (const Error& ex) {
    CHECK(ex.kind() == ErrorKind::kDataFormat);
    const std::string msg = ex.what();
    CHECK(msg.find("line " + std::to_string(line)) != std::string::npos);
    CHECK(msg.find(fragment) != std::string::npos);
  }
}

}  // namespace

TEST_CASE("dataset round trip") {
  Rng rng(1);
  auto ds = dhr::testing::random_dataset(9, 40, 5, 3, rng);
  ds.edges[3].timestamp = "2021-05-06T07:08:09Z";
  ds.edges[7].ranking.clear();
  ds.edges[0].covariates[0] = 0.1 + 0.2;
  ds.edges[1].covariates[0] = 1e-300;
  std::stringstream buf;
  write_dataset(buf, ds);
  const auto back = read_dataset(buf);
  CHECK(back.n == ds.n);
  CHECK(back.d == ds.d);
  REQUIRE(back.edges.size() == ds.edges.size());
  for (std::size_t i = 0; i < ds.edges.size(); ++i) {
    CHECK(back.edges[i].vertices == ds.edges[i].vertices);
    CHECK(back.edges[i].ranking == ds.edges[i].ranking);
    CHECK(back.edges[i].covariates == ds.edges[i].covariates);
    CHECK(back.edges[i].covariate_dim == ds.edges[i].covariate_dim);
    CHECK(back.edges[i].timestamp == ds.edges[i].timestamp);
  }
}

TEST_CASE("loader errors name the line") {
  const std::string header = "{\"n\":3,\"d\":0}\n";
  check_error_line(header + "{\"vertices\":[0,1],\"ranking\":[1,1]}\n", 2, "permutation");
  check_error_line("{\"n\":3,\"d\":2}\n{\"vertices\":[0,5]}\n", 2, "vertex id 5");
  check_error_line(header + "{\"vertices\":[0,1]}\n{\"vertices\":[0,\n", 3, "malformed JSON");
  check_error_line("{\"n\":3,\"d\":2}\n{\"vertices\":[0,1],\"covariates\":{\"0\":[1],\"1\":[1,2]}}\n",
                   2, "dimension 1");
  check_error_line(header + "\n{\"vertices\":[1,0]}\n", 3, "ascending");
  check_error_line(header + "{\"vertices\":[0,1],\"winner\":0}\n", 2, "unknown field");
  check_error_line("{\"vertices\":[0,1]}\n", 1, "header");
  std::istringstream empty("");
  CHECK_THROWS_AS(read_dataset(empty), Error);
}

TEST_CASE("network checkpoint round trip") {
  Rng rng(2);
  const auto params = init_network({3, {7, 5}}, 2.5, 4.0, rng);
  const auto back = network_from_json(json::parse(network_to_json(params).dump()));
  CHECK(back.arch == params.arch);
  CHECK(back.phi == params.phi);
  CHECK(back.box_radius == params.box_radius);
  CHECK(back.sup_bound == params.sup_bound);
  json broken = network_to_json(params);
  broken["phi"].erase(0);
  CHECK_THROWS_AS(network_from_json(broken), Error);
}

TEST_CASE("fit record round trip") {
  TempDir dir;
  Rng rng(3);
  const auto ds = dhr::testing::random_dataset(6, 120, 4, 2, rng);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.existence_policy = ExistencePolicy::kWarn;
  for (ModelTag tag : {ModelTag::kDhr, ModelTag::kPlusDc, ModelTag::kBt}) {
    const auto fitted = fit(ds, ModelSpec::for_tag(tag, {2, {6}}, 3.0), cfg);
    save_fit(dir.path / "fit.json", dir.path / "ckpt.json", fitted, json{{"k", 1}});
    const auto back = load_fit(dir.path / "fit.json");
    CHECK(back.tag == tag);
    for (const auto& e : ds.edges)
      for (ObjectId j : e.vertices) CHECK(back.fitted_score(e, j) == fitted.fitted_score(e, j));
    CHECK(back.train_curve == fitted.train_curve);
    CHECK(json::parse(slurp(dir.path / "fit.json"))["checkpoint"] == "ckpt.json");
  }
}

TEST_CASE("training config files") {
  std::istringstream in("# comment\neta_u = 0.5\n  epochs=7   # trailing\n\noptimizer = sgd\n");
  const auto kv = parse_key_values(in);
  CHECK(kv.at("eta_u") == "0.5");
  CHECK(kv.at("epochs") == "7");
  TrainConfig cfg;
  apply_train_overrides(kv, cfg);
  CHECK(cfg.eta_u == 0.5);
  CHECK(cfg.epochs == 7);
  CHECK(cfg.optimizer == OptimizerKind::kSgd);
  CHECK_THROWS_AS(apply_train_overrides({{"learning_rate", "1"}}, cfg), Error);
  CHECK_THROWS_AS(apply_train_overrides({{"epochs", "seven"}}, cfg), Error);
  std::istringstream bad("just words\n");
  CHECK_THROWS_AS(parse_key_values(bad), Error);
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
}

TEST_CASE("command line") {
  TempDir dir;
  const std::string d = dir.path.string();

  SUBCASE("usage errors") {
    CHECK(run_cli({}).code == cli::kUsage);
    CHECK(run_cli({"fit", "--train", d + "/missing.jsonl"}).code == cli::kUsage);
    CHECK(run_cli({"fit"}).code == cli::kUsage);
    CHECK(run_cli({"frobnicate"}).code == cli::kUsage);
    CHECK(run_cli({"--help"}).code == cli::kOk);
  }

  SUBCASE("existence check") {
    spit(dir.path / "ab.jsonl", "{\"n\":2,\"d\":0}\n{\"vertices\":[0,1],\"ranking\":[0,1]}\n");
    const auto res = run_cli({"check-existence", "--data", d + "/ab.jsonl", "-o", d + "/ex"});
    CHECK(res.code == cli::kNotEstimable);
    CHECK(res.out.find("dominated: 1") != std::string::npos);
    const auto report = json::parse(slurp(dir.path / "ex" / "existence.json"));
    CHECK(report["exists"] == false);
    CHECK(report["dominated"] == json::array({1}));

    spit(dir.path / "cyc.jsonl",
         "{\"n\":3,\"d\":0}\n{\"vertices\":[0,1],\"ranking\":[0,1]}\n"
         "{\"vertices\":[1,2],\"ranking\":[1,2]}\n{\"vertices\":[0,2],\"ranking\":[2,0]}\n");
    CHECK(run_cli({"check-existence", "--data", d + "/cyc.jsonl", "-o", d + "/ex2"}).code ==
          cli::kOk);

    spit(dir.path / "bad.jsonl", "{\"n\":3,\"d\":0}\n{\"vertices\":[0,1],\"ranking\":[1,1]}\n");
    const auto bad = run_cli({"check-existence", "--data", d + "/bad.jsonl", "-o", d + "/ex3"});
    CHECK(bad.code == cli::kDataFormat);
    CHECK(bad.err.find("line 2") != std::string::npos);
  }

  SUBCASE("binary exit code") {
    spit(dir.path / "ab.jsonl", "{\"n\":2,\"d\":0}\n{\"vertices\":[0,1],\"ranking\":[0,1]}\n");
    const std::string cmd = std::string(DHR_CLI_PATH) + " check-existence --data " + d +
                            "/ab.jsonl -o " + d + "/bin > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(WIFEXITED(status));
    CHECK(WEXITSTATUS(status) == cli::kNotEstimable);
  }

  SUBCASE("pipeline") {
    const auto started = std::chrono::steady_clock::now();
    REQUIRE(run_cli({"simulate", "--n", "50", "--seed", "4", "-o", d + "/sim"}).code == cli::kOk);
    const std::string train = d + "/sim/train.jsonl";
    const std::string val = d + "/sim/val.jsonl";
    const std::string train_before = slurp(train);
    const std::string val_before = slurp(val);

    auto fit_res = run_cli({"fit", "--train", train, "--val", val, "--seed", "9", "-o", d + "/fit"});
    REQUIRE(fit_res.code == cli::kOk);
    const auto again =
        run_cli({"fit", "--train", train, "--val", val, "--seed", "9", "-o", d + "/fit2"});
    REQUIRE(again.code == cli::kOk);
    CHECK(slurp(dir.path / "fit" / "fit.json") == slurp(dir.path / "fit2" / "fit.json"));
    CHECK(slurp(dir.path / "fit" / "checkpoint.json") ==
          slurp(dir.path / "fit2" / "checkpoint.json"));

    const auto ev = run_cli({"evaluate", "--fit", d + "/fit/fit.json", "--test", val, "-o", d + "/ev"});
    REQUIRE(ev.code == cli::kOk);
    CHECK(ev.out.find("DHR") != std::string::npos);
    CHECK(fs::exists(dir.path / "ev" / "metrics.csv"));
    CHECK(fs::exists(dir.path / "ev" / "fitted_scores.csv"));

    const auto pr = run_cli({"predict", "--fit", d + "/fit/fit.json", "--data", val, "-o", d + "/pr"});
    REQUIRE(pr.code == cli::kOk);
    std::istringstream preds(slurp(dir.path / "pr" / "predictions.csv"));
    std::string line;
    std::getline(preds, line);
    CHECK(line == "edge,winner,probability");
    int rows = 0;
    while (std::getline(preds, line)) ++rows;
    CHECK(rows == 133);

    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    CHECK(seconds < 300.0);
    CHECK(slurp(train) == train_before);
    CHECK(slurp(val) == val_before);

    const auto manifest = json::parse(slurp(dir.path / "fit" / "manifest.json"));
    CHECK(manifest["subcommand"] == "fit");
    CHECK(manifest["artifacts"] == json::array({"fit.json", "checkpoint.json"}));
    CHECK(manifest["config_hash"].get<std::string>().size() == 16);
    CHECK(manifest["config_hash"] ==
          json::parse(slurp(dir.path / "fit2" / "manifest.json"))["config_hash"]);
  }

  SUBCASE("config precedence") {
    REQUIRE(run_cli({"simulate", "--n", "20", "--seed", "5", "-o", d + "/sim"}).code == cli::kOk);
    spit(dir.path / "train.cfg", "epochs = 3\npatience = 0\n");
    const std::string train = d + "/sim/train.jsonl";
    REQUIRE(run_cli({"fit", "--train", train, "--config", d + "/train.cfg", "--existence-policy",
                     "warn", "-o", d + "/a"})
                .code == cli::kOk);
    CHECK(json::parse(slurp(dir.path / "a" / "fit.json"))["epochs_run"] == 3);
    REQUIRE(run_cli({"fit", "--train", train, "--config", d + "/train.cfg", "--epochs", "4",
                     "--existence-policy", "warn", "-o", d + "/b"})
                .code == cli::kOk);
    CHECK(json::parse(slurp(dir.path / "b" / "fit.json"))["epochs_run"] == 4);
    REQUIRE(run_cli({"fit", "--train", train, "--existence-policy", "warn", "--epochs", "2", "-o",
                     d + "/c"})
                .code == cli::kOk);
    CHECK(json::parse(slurp(dir.path / "c" / "fit.json"))["epochs_run"] == 2);
    spit(dir.path / "typo.cfg", "epoch = 3\n");
    CHECK(run_cli({"fit", "--train", train, "--config", d + "/typo.cfg", "-o", d + "/e"}).code ==
          cli::kUsage);
  }
}
