#pragma once

// Run configuration shared by the CLI stages, provenance records, and the
// end-to-end synthetic benchmark (generate, train, embed, fuse, evaluate).

#include "agvp/datagen.hpp"
#include "agvp/trainer.hpp"

#include <nlohmann/json_fwd.hpp>

#include <array>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace agvp::pipeline {

struct Paths {
  std::filesystem::path corpus = "corpus";
  std::filesystem::path work = "work";
  bool operator==(const Paths&) const = default;
};

enum class FuseMode { Rrf, FeatureRrf };

struct RunConfig {
  /// Copied into the generator and every training config.
  std::uint64_t seed = 7;
  datagen::GenConfig gen;
  train::TrainConfig train;
  /// Effective per-stream configs (base `train` plus the stream's overrides),
  /// indexed 1, 2, 3, fusion = 0..3.
  std::array<train::TrainConfig, 4> streams;
  double train_fraction = 0.5;
  eval::ProtocolSpec protocol;
  bool per_altitude = true;
  FuseMode fuse_mode = FuseMode::Rrf;
  int figure_queries = 4;
  int figure_top = 5;
  Paths paths;

  const train::TrainConfig& stream(train::StreamKind k) const;
  bool operator==(const RunConfig&) const = default;
};

/// Desk-scale defaults used by the benchmark.
RunConfig default_run_config();

nlohmann::json run_config_to_json(const RunConfig& rc);
/// Missing keys keep defaults; unknown keys raise ConfigError naming the key.
RunConfig run_config_from_json(const nlohmann::json& j);

/// AGVP_* variables from the process environment.
std::map<std::string, std::string> agvp_environment();

/// Reads the config file (when given) and applies AGVP_<SECTION>_<KEY>
/// overrides. Every override must name a leaf of the effective config.
RunConfig load_run_config(const std::filesystem::path* file, const std::map<std::string, std::string>& env);

std::string sha256_file(const std::filesystem::path& path);
/// Writes run_config.json (effective config) and inputs.json (SHA-256 of every
/// input file; directories are hashed file by file) into `out_dir`.
void write_provenance(const std::filesystem::path& out_dir, const RunConfig& rc,
                      const std::vector<std::filesystem::path>& inputs);

struct Corpus {
  std::filesystem::path root;
  datagen::Manifest manifest;
  std::vector<Tracklet> train;
  std::vector<Tracklet> test;
};

Corpus open_corpus(const RunConfig& rc, const std::filesystem::path& root);

/// Ground-truth UV extractor for a synthetic corpus, cached under `cache_dir`.
std::shared_ptr<const na::UvExtractor> corpus_extractor(const std::filesystem::path& corpus_root,
                                                        const std::filesystem::path& cache_dir);

train::DataNeeds needs_for(train::StreamKind k);

/// Embedding file name used by every stage: stream1.emb, ..., fusion.emb.
std::string stream_file_stem(train::StreamKind k);

struct BenchmarkResult {
  std::array<eval::EmbeddingTable, 3> streams;
  eval::EmbeddingTable fused;
  fusion::StreamWeights weights;
  std::array<train::TrainResult, 4> logs;
  std::vector<eval::AblationRow> ablation;
  /// "stream1_a2g", ..., "fusion_g2a", "rrf_a2g", "rrf_g2a".
  std::map<std::string, eval::MetricsReport> reports;
  std::array<double, 4> train_seconds{};
};

/// Full run into `out`: corpus/, train/, embed/, rank/, metrics/, report/.
BenchmarkResult run_benchmark(const RunConfig& rc, const std::filesystem::path& out, std::ostream* progress = nullptr);

/// Rank-1 of one stream at one altitude bucket in the A2G ablation block.
double ablation_rank1(const std::vector<eval::AblationRow>& rows, const std::string& name, eval::Direction d,
                      const std::string& bucket = "all");

// ---- figures ----
/// Query strip plus the top gallery strips per row, with a green border on
/// correct matches and a red one on incorrect matches.
void ranking_figure(const std::filesystem::path& png, const std::vector<fusion::RankedList>& lists,
                    const std::vector<Tracklet>& tracklets, const std::filesystem::path& corpus_root, int queries,
                    int top);

}  // namespace agvp::pipeline
