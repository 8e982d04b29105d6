#pragma once

// Distances, deterministic ranking, CMC/mAP, protocol partitions (A2G/G2A,
// altitude buckets, distractors, clothing), the stream ablation table and the
// embedding / report file formats.

#include "agvp/core.hpp"
#include "agvp/fusion.hpp"

#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace agvp::eval {

using fusion::RankedEntry;
using fusion::RankedList;
using nn::Mat;

enum class Metric { Cosine, Euclidean };

/// Q x G distances; cosine distance is 1 - <q/|q|, g/|g|>.
Mat distances(const Mat& queries, const Mat& gallery, Metric metric = Metric::Cosine);

/// Ascending distance, ties by ascending gallery id. Scores are -distance.
std::vector<RankedList> rank(const Mat& dist, const std::vector<std::string>& query_ids,
                             const std::vector<std::string>& gallery_ids);

/// Relevance flags of each list in rank order.
using Relevance = std::vector<std::vector<bool>>;
Relevance relevance(const std::vector<RankedList>& lists, const std::map<std::string, std::string>& query_labels,
                    const std::map<std::string, std::string>& gallery_labels);

/// Fraction of valid queries (those with any relevant item) whose first hit is
/// within the top k. 0 when there are no valid queries.
double cmc(const Relevance& rel, int k);
double cmc(const std::vector<RankedList>& lists, const std::map<std::string, std::string>& query_labels,
           const std::map<std::string, std::string>& gallery_labels, int k);
/// Mean over valid queries of (1/R) sum of precision at each relevant position.
double map_metric(const Relevance& rel);
double map_metric(const std::vector<RankedList>& lists, const std::map<std::string, std::string>& query_labels,
                  const std::map<std::string, std::string>& gallery_labels);
std::size_t valid_queries(const Relevance& rel);

enum class Direction { A2G, G2A };
enum class ClothingMode { All, Same, Different };

std::string_view to_string(Direction d);
Direction direction_from_string(std::string_view s);
std::string_view to_string(ClothingMode c);
ClothingMode clothing_from_string(std::string_view s);

struct ProtocolSpec {
  Direction direction = Direction::A2G;
  std::optional<int> altitude;  // metres; unset = all
  bool include_distractors = true;
  ClothingMode clothing = ClothingMode::All;

  std::string name() const;
  bool operator==(const ProtocolSpec&) const = default;
};

/// Query/gallery split of a manifest under a protocol. Each query keeps the
/// indices (into `gallery`) it is ranked against.
struct Partition {
  std::vector<const Tracklet*> queries;
  std::vector<const Tracklet*> gallery;
  std::vector<std::vector<std::size_t>> gallery_for;
};

/// Distractor identities have tracklets on the aerial side only.
std::vector<std::string> distractor_identities(const std::vector<Tracklet>& tracklets);

/// A2G: aerial queries (altitude filtered) against every ground tracklet.
/// G2A: ground queries against aerial tracklets (altitude filtered), with
/// aerial-only identities kept in the gallery only when distractors are on.
/// Throws EmptyPartitionError when either side is empty.
Partition partition(const ProtocolSpec& protocol, const std::vector<Tracklet>& tracklets);

/// Embeddings keyed by tracklet id.
struct EmbeddingTable {
  std::vector<std::string> ids;
  Mat rows;

  std::size_t index_of(const std::string& id) const;
  void validate() const;
  bool operator==(const EmbeddingTable&) const = default;
};

std::vector<RankedList> rank_partition(const Partition& p, const EmbeddingTable& emb, Metric metric = Metric::Cosine);
/// Restricts externally produced lists to each query's protocol gallery, keeping their order.
std::vector<RankedList> restrict_to_partition(const Partition& p, const std::vector<RankedList>& lists);

struct BucketMetrics {
  std::string bucket;
  double rank1 = 0.0, rank5 = 0.0, rank10 = 0.0, mAP = 0.0;
  std::size_t queries = 0;
  std::size_t valid_queries = 0;
  std::size_t gallery = 0;
  std::vector<std::string> excluded;  // queries with no true match in their gallery
};

struct MetricsReport {
  ProtocolSpec protocol;
  std::vector<BucketMetrics> buckets;  // "all" first, then per altitude
};

BucketMetrics bucket_metrics(const std::string& name, const Partition& p, const std::vector<RankedList>& lists);

/// Metrics for the protocol; with no altitude filter, adds one bucket per
/// aerial altitude present (A2G: query altitude, G2A: gallery altitude).
MetricsReport evaluate(const ProtocolSpec& protocol, const std::vector<Tracklet>& tracklets, const EmbeddingTable& emb,
                       Metric metric = Metric::Cosine);
/// Same, from precomputed rank lists covering the protocol's queries.
MetricsReport evaluate_lists(const ProtocolSpec& protocol, const std::vector<Tracklet>& tracklets,
                             const std::vector<RankedList>& lists);

struct AblationRow {
  std::string name;  // St-1 ... St-123
  Direction direction = Direction::A2G;
  std::string bucket = "all";
  double rank1 = 0.0, rank5 = 0.0, rank10 = 0.0, mAP = 0.0;
};

/// Member streams (1-based) of the seven ablation rows.
const std::vector<std::pair<std::string, std::vector<int>>>& ablation_rows();

/// Seven rows per direction; multi-stream rows fuse per-stream rankings with
/// RRF. With `per_altitude`, also one block of rows per altitude bucket.
std::vector<AblationRow> ablate(const std::vector<Tracklet>& tracklets, const std::array<EmbeddingTable, 3>& streams,
                                bool include_distractors = true, bool per_altitude = false);

// ---- files ----
/// Text header "AGVPEMB 1 <dim> <count>\n" then float32 little-endian rows;
/// ids go to "<path>.ids", one per line.
void write_embeddings(const std::filesystem::path& path, const EmbeddingTable& emb);
EmbeddingTable read_embeddings(const std::filesystem::path& path);

nlohmann::json report_to_json(const MetricsReport& r);
MetricsReport report_from_json(const nlohmann::json& j);
std::string report_to_text(const MetricsReport& r);
std::string ablation_to_csv(const std::vector<AblationRow>& rows);
std::string ablation_to_text(const std::vector<AblationRow>& rows);
nlohmann::json ablation_to_json(const std::vector<AblationRow>& rows);

}  // namespace agvp::eval
