#include <doctest.h>

#include "agvp/pipeline.hpp"
#include "support/testing.hpp"

#include <nlohmann/json.hpp>

#include <fstream>

using namespace agvp;
using namespace agvp::pipeline;

namespace {

const fs::path kTiny = fs::path(AGVP_TEST_DATA) / "data" / "tiny_run.json";

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return nlohmann::json::parse(in);
}

}  // namespace

TEST_CASE("run config json round trip and defaults") {
  const RunConfig d = default_run_config();
  CHECK(run_config_from_json(run_config_to_json(d)) == d);
  CHECK(run_config_from_json(nlohmann::json::object()) == d);
  const RunConfig tiny = load_run_config(&kTiny, {});
  CHECK(tiny.seed == 3);
  CHECK(tiny.gen.seed == 3);
  CHECK(tiny.stream(train::StreamKind::Fusion).epochs == 2);
  CHECK(tiny.stream(train::StreamKind::MultiScale).msa.train_encoder);
  CHECK(tiny.stream(train::StreamKind::Temporal).ats.encoder.height == 32);
  CHECK(run_config_from_json(run_config_to_json(tiny)) == tiny);
}

TEST_CASE("unknown keys are rejected by name") {
  auto expect_key = [](const nlohmann::json& j, const std::string& key) {
    try {
      run_config_from_json(j);
      FAIL("expected ConfigError for " << key);
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find(key) != std::string::npos);
    }
  };
  expect_key({{"sede", 1}}, "sede");
  expect_key({{"gen", {{"identities", 3}}}}, "identities");
  expect_key({{"protocol", {{"dir", "a2g"}}}}, "protocol.dir");
  expect_key({{"streams", {{"4", nlohmann::json::object()}}}}, "streams.4");
  CHECK_THROWS_AS(run_config_from_json({{"split", {{"train_fraction", 1.0}}}}), ConfigError);
  CHECK_THROWS_AS(run_config_from_json({{"protocol", {{"altitude", "high"}}}}), ConfigError);
}

TEST_CASE("environment overrides address config leaves") {
  const auto rc = load_run_config(&kTiny, {{"AGVP_SEED", "11"}, {"AGVP_GEN_NUM_IDENTITIES", "5"},
                                           {"AGVP_PROTOCOL_DIRECTION", "g2a"}});
  CHECK(rc.seed == 11);
  CHECK(rc.gen.seed == 11);
  CHECK(rc.gen.num_identities == 5);
  CHECK(rc.protocol.direction == eval::Direction::G2A);
  try {
    load_run_config(&kTiny, {{"AGVP_GEN_COLOURS", "3"}});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("AGVP_GEN_COLOURS") != std::string::npos);
  }
  const fs::path missing = "/nonexistent/agvp.json";
  CHECK_THROWS_AS(load_run_config(&missing, {}), IoError);
}

TEST_CASE("sha256 and provenance records") {
  const auto dir = agvp::testing::scratch_dir("provenance");
  std::ofstream(dir / "abc.txt", std::ios::binary) << "abc";
  CHECK(sha256_file(dir / "abc.txt") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  fs::create_directories(dir / "sub");
  std::ofstream(dir / "sub" / "x", std::ios::binary) << "x";
  const auto rc = default_run_config();
  write_provenance(dir / "out", rc, {dir / "abc.txt", dir / "sub"});
  CHECK(run_config_from_json(read_json(dir / "out" / "run_config.json")) == rc);
  const auto inputs = read_json(dir / "out" / "inputs.json");
  CHECK(inputs.size() == 2);
  CHECK(inputs.at((dir / "abc.txt").generic_string()) == sha256_file(dir / "abc.txt"));
  CHECK_THROWS_AS(write_provenance(dir / "out", rc, {dir / "missing"}), IoError);
}

TEST_CASE("tiny benchmark writes every stage and a full ablation") {
  const auto rc = load_run_config(&kTiny, {});
  const auto dir = agvp::testing::scratch_dir("tiny_bench");
  const auto res = run_benchmark(rc, dir);
  for (const char* f : {"corpus/manifest.jsonl", "train/stream1.ckpt", "train/stream2.ckpt", "train/stream3.ckpt",
                        "train/fusion.ckpt", "train/fusion_log.jsonl", "embed/stream1.emb", "embed/fusion.emb",
                        "report/ablation.csv", "run_config.json", "inputs.json"})
    CHECK_MESSAGE(fs::exists(dir / f), f);
  for (auto d : {eval::Direction::A2G, eval::Direction::G2A}) {
    int rows = 0;
    for (const auto& r : res.ablation) rows += r.direction == d && r.bucket == "all";
    CHECK(rows == 7);
  }
  CHECK(res.reports.contains("rrf_a2g"));
  CHECK(res.reports.contains("fusion_g2a"));
  for (const auto& t : res.streams) CHECK(t.rows.allFinite());
  const double w = res.weights.weights()[0] + res.weights.weights()[1] + res.weights.weights()[2];
  CHECK(w == doctest::Approx(1.0));
  CHECK(ablation_rank1(res.ablation, "St-1", eval::Direction::A2G) >= 0.0);
  CHECK_THROWS_AS(ablation_rank1(res.ablation, "St-9", eval::Direction::A2G), ValidationError);
  CHECK(stream_file_stem(train::StreamKind::MultiScale) == "stream3");
}
