#include "agvp/evalkit.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

namespace agvp::eval {

std::string_view to_string(Direction d) { return d == Direction::A2G ? "a2g" : "g2a"; }

Direction direction_from_string(std::string_view s) {
  if (s == "a2g" || s == "A2G") return Direction::A2G;
  if (s == "g2a" || s == "G2A") return Direction::G2A;
  throw ConfigError("unknown protocol direction '" + std::string(s) + "' (expected a2g or g2a)");
}

std::string_view to_string(ClothingMode c) {
  switch (c) {
    case ClothingMode::Same: return "same";
    case ClothingMode::Different: return "different";
    case ClothingMode::All: break;
  }
  return "all";
}

ClothingMode clothing_from_string(std::string_view s) {
  if (s == "all") return ClothingMode::All;
  if (s == "same") return ClothingMode::Same;
  if (s == "different") return ClothingMode::Different;
  throw ConfigError("unknown clothing mode '" + std::string(s) + "' (expected all, same or different)");
}

std::string ProtocolSpec::name() const {
  std::string n(to_string(direction));
  n += altitude ? "_" + std::to_string(*altitude) + "m" : "_all";
  if (!include_distractors) n += "_nodistract";
  if (clothing != ClothingMode::All) n += "_" + std::string(to_string(clothing));
  return n;
}

std::vector<std::string> distractor_identities(const std::vector<Tracklet>& tracklets) {
  std::set<std::string> ground;
  std::set<std::string> aerial;
  for (const auto& t : tracklets) (is_ground(t.platform) ? ground : aerial).insert(t.person_id.str());
  std::vector<std::string> out;
  for (const auto& p : aerial)
    if (!ground.contains(p)) out.push_back(p);
  return out;
}

Partition partition(const ProtocolSpec& protocol, const std::vector<Tracklet>& tracklets) {
  if (protocol.altitude) altitude_from_meters(*protocol.altitude);
  const auto d = distractor_identities(tracklets);
  const std::set<std::string> distractors(d.begin(), d.end());
  auto aerial_ok = [&](const Tracklet& t) {
    return t.platform == Platform::Aerial && (!protocol.altitude || meters(t.altitude) == *protocol.altitude);
  };

  Partition p;
  for (const auto& t : tracklets) {
    const bool distractor = distractors.contains(t.person_id.str());
    if (protocol.direction == Direction::A2G) {
      if (aerial_ok(t) && !distractor) p.queries.push_back(&t);
      if (is_ground(t.platform)) p.gallery.push_back(&t);
    } else {
      if (is_ground(t.platform)) p.queries.push_back(&t);
      if (aerial_ok(t) && (!distractor || protocol.include_distractors)) p.gallery.push_back(&t);
    }
  }
  if (p.queries.empty()) throw EmptyPartitionError("protocol " + protocol.name() + " has no query tracklets");
  if (p.gallery.empty()) throw EmptyPartitionError("protocol " + protocol.name() + " has no gallery tracklets");

  for (const Tracklet* q : p.queries) {
    std::vector<std::size_t> keep;
    for (std::size_t g = 0; g < p.gallery.size(); ++g) {
      const Tracklet* t = p.gallery[g];
      if (protocol.clothing != ClothingMode::All && t->person_id == q->person_id) {
        const bool same = t->clothing_id == q->clothing_id;
        if (same != (protocol.clothing == ClothingMode::Same)) continue;
      }
      keep.push_back(g);
    }
    p.gallery_for.push_back(std::move(keep));
  }
  return p;
}

std::size_t EmbeddingTable::index_of(const std::string& id) const {
  const auto it = std::find(ids.begin(), ids.end(), id);
  if (it == ids.end()) throw ValidationError("no embedding for tracklet " + id);
  return static_cast<std::size_t>(it - ids.begin());
}

void EmbeddingTable::validate() const {
  if (rows.rows() != static_cast<Eigen::Index>(ids.size())) throw ShapeError("embedding table: id count != row count");
  if (!rows.allFinite()) throw ValidationError("embedding table has non-finite entries");
  std::set<std::string> seen;
  for (const auto& id : ids)
    if (!seen.insert(id).second) throw ValidationError("embedding table repeats id " + id);
}

namespace {

std::map<std::string, std::size_t> index_map(const EmbeddingTable& emb) {
  std::map<std::string, std::size_t> m;
  for (std::size_t i = 0; i < emb.ids.size(); ++i) m.emplace(emb.ids[i], i);
  return m;
}

std::map<std::string, std::string> labels_of(const std::vector<const Tracklet*>& ts) {
  std::map<std::string, std::string> m;
  for (const Tracklet* t : ts) m.emplace(t->tracklet_id.str(), t->person_id.str());
  return m;
}

}  // namespace

std::vector<RankedList> rank_partition(const Partition& p, const EmbeddingTable& emb, Metric metric) {
  const auto index = index_map(emb);
  auto row_of = [&](const Tracklet* t) {
    const auto it = index.find(t->tracklet_id.str());
    if (it == index.end()) throw ValidationError("no embedding for tracklet " + t->tracklet_id.str());
    return static_cast<Eigen::Index>(it->second);
  };
  Mat g(static_cast<Eigen::Index>(p.gallery.size()), emb.rows.cols());
  std::vector<std::string> gids;
  for (std::size_t i = 0; i < p.gallery.size(); ++i) {
    g.row(static_cast<Eigen::Index>(i)) = emb.rows.row(row_of(p.gallery[i]));
    gids.push_back(p.gallery[i]->tracklet_id.str());
  }
  std::vector<RankedList> out;
  for (std::size_t qi = 0; qi < p.queries.size(); ++qi) {
    const auto& keep = p.gallery_for[qi];
    if (keep.empty()) throw EmptyPartitionError("query " + p.queries[qi]->tracklet_id.str() + " has an empty gallery");
    Mat sub(static_cast<Eigen::Index>(keep.size()), g.cols());
    std::vector<std::string> sub_ids;
    for (std::size_t j = 0; j < keep.size(); ++j) {
      sub.row(static_cast<Eigen::Index>(j)) = g.row(static_cast<Eigen::Index>(keep[j]));
      sub_ids.push_back(gids[keep[j]]);
    }
    const Mat q = emb.rows.row(row_of(p.queries[qi]));
    out.push_back(rank(distances(q, sub, metric), {p.queries[qi]->tracklet_id.str()}, sub_ids).front());
  }
  return out;
}

std::vector<RankedList> restrict_to_partition(const Partition& p, const std::vector<RankedList>& lists) {
  std::map<std::string, const RankedList*> by_query;
  for (const auto& l : lists) by_query.emplace(l.query_id, &l);
  std::vector<RankedList> out;
  for (std::size_t qi = 0; qi < p.queries.size(); ++qi) {
    const std::string qid = p.queries[qi]->tracklet_id.str();
    const auto it = by_query.find(qid);
    if (it == by_query.end()) throw ValidationError("rank lists have no entry for query " + qid);
    std::set<std::string> allowed;
    for (std::size_t g : p.gallery_for[qi]) allowed.insert(p.gallery[g]->tracklet_id.str());
    RankedList l{qid, {}};
    for (const auto& e : it->second->entries)
      if (allowed.contains(e.gallery_id)) l.entries.push_back(e);
    if (l.entries.size() != allowed.size()) {
      throw ValidationError("rank list of query " + qid + " does not cover its protocol gallery");
    }
    out.push_back(std::move(l));
  }
  return out;
}

BucketMetrics bucket_metrics(const std::string& name, const Partition& p, const std::vector<RankedList>& lists) {
  const Relevance rel = relevance(lists, labels_of(p.queries), labels_of(p.gallery));
  BucketMetrics b;
  b.bucket = name;
  b.rank1 = cmc(rel, 1);
  b.rank5 = cmc(rel, 5);
  b.rank10 = cmc(rel, 10);
  b.mAP = map_metric(rel);
  b.queries = p.queries.size();
  b.valid_queries = valid_queries(rel);
  b.gallery = p.gallery.size();
  for (std::size_t i = 0; i < rel.size(); ++i) {
    if (std::find(rel[i].begin(), rel[i].end(), true) == rel[i].end()) b.excluded.push_back(lists[i].query_id);
  }
  return b;
}

namespace {

std::vector<int> aerial_altitudes(const std::vector<Tracklet>& tracklets) {
  std::set<int> alts;
  for (const auto& t : tracklets)
    if (t.platform == Platform::Aerial) alts.insert(meters(t.altitude));
  return {alts.begin(), alts.end()};
}

template <class Ranker>
MetricsReport evaluate_with(const ProtocolSpec& protocol, const std::vector<Tracklet>& tracklets, Ranker ranker) {
  MetricsReport r;
  r.protocol = protocol;
  const Partition p = partition(protocol, tracklets);
  r.buckets.push_back(bucket_metrics(protocol.altitude ? std::to_string(*protocol.altitude) + "m" : "all", p, ranker(p)));
  if (!protocol.altitude) {
    for (int a : aerial_altitudes(tracklets)) {
      ProtocolSpec sub = protocol;
      sub.altitude = a;
      try {
        const Partition pa = partition(sub, tracklets);
        r.buckets.push_back(bucket_metrics(std::to_string(a) + "m", pa, ranker(pa)));
      } catch (const EmptyPartitionError&) {
        // An altitude holding only distractors has no queries; skip the bucket.
      }
    }
  }
  return r;
}

}  // namespace

MetricsReport evaluate(const ProtocolSpec& protocol, const std::vector<Tracklet>& tracklets, const EmbeddingTable& emb,
                       Metric metric) {
  emb.validate();
  return evaluate_with(protocol, tracklets, [&](const Partition& p) { return rank_partition(p, emb, metric); });
}

MetricsReport evaluate_lists(const ProtocolSpec& protocol, const std::vector<Tracklet>& tracklets,
                             const std::vector<RankedList>& lists) {
  return evaluate_with(protocol, tracklets, [&](const Partition& p) { return restrict_to_partition(p, lists); });
}

const std::vector<std::pair<std::string, std::vector<int>>>& ablation_rows() {
  static const std::vector<std::pair<std::string, std::vector<int>>> rows{
      {"St-1", {1}},        {"St-2", {2}},        {"St-3", {3}},          {"St-12", {1, 2}},
      {"St-13", {1, 3}},    {"St-23", {2, 3}},    {"St-123", {1, 2, 3}}};
  return rows;
}

std::vector<AblationRow> ablate(const std::vector<Tracklet>& tracklets, const std::array<EmbeddingTable, 3>& streams,
                                bool include_distractors, bool per_altitude) {
  for (const auto& s : streams) s.validate();
  std::vector<std::optional<int>> buckets{std::nullopt};
  if (per_altitude)
    for (int a : aerial_altitudes(tracklets)) buckets.emplace_back(a);

  std::vector<AblationRow> out;
  for (Direction dir : {Direction::A2G, Direction::G2A}) {
    for (const auto& alt : buckets) {
      ProtocolSpec protocol{dir, alt, include_distractors, ClothingMode::All};
      Partition p;
      try {
        p = partition(protocol, tracklets);
      } catch (const EmptyPartitionError&) {
        if (alt) continue;
        throw;
      }
      std::array<std::vector<RankedList>, 3> per_stream;
      for (std::size_t s = 0; s < 3; ++s) per_stream[s] = rank_partition(p, streams[s]);

      for (const auto& [name, members] : ablation_rows()) {
        std::vector<RankedList> lists;
        for (std::size_t q = 0; q < p.queries.size(); ++q) {
          if (members.size() == 1) {
            lists.push_back(per_stream[static_cast<std::size_t>(members[0] - 1)][q]);
            continue;
          }
          std::vector<RankedList> parts;
          for (int m : members) parts.push_back(per_stream[static_cast<std::size_t>(m - 1)][q]);
          lists.push_back(fusion::rrf(parts));
        }
        const BucketMetrics b = bucket_metrics(alt ? std::to_string(*alt) + "m" : "all", p, lists);
        out.push_back({name, dir, b.bucket, b.rank1, b.rank5, b.rank10, b.mAP});
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

nlohmann::json report_to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["protocol"] = {{"direction", std::string(to_string(r.protocol.direction))},
                   {"altitude", r.protocol.altitude ? nlohmann::json(*r.protocol.altitude) : nlohmann::json("all")},
                   {"distractors", r.protocol.include_distractors},
                   {"clothing", std::string(to_string(r.protocol.clothing))}};
  nlohmann::json buckets = nlohmann::json::array();
  for (const auto& b : r.buckets) {
    buckets.push_back({{"bucket", b.bucket},
                       {"rank1", b.rank1},
                       {"rank5", b.rank5},
                       {"rank10", b.rank10},
                       {"mAP", b.mAP},
                       {"queries", b.queries},
                       {"valid_queries", b.valid_queries},
                       {"gallery", b.gallery},
                       {"excluded_queries", b.excluded}});
  }
  j["buckets"] = buckets;
  return j;
}

MetricsReport report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  try {
    const auto& p = j.at("protocol");
    r.protocol.direction = direction_from_string(p.at("direction").get<std::string>());
    if (p.at("altitude").is_number()) r.protocol.altitude = p.at("altitude").get<int>();
    r.protocol.include_distractors = p.at("distractors").get<bool>();
    r.protocol.clothing = clothing_from_string(p.at("clothing").get<std::string>());
    for (const auto& b : j.at("buckets")) {
      BucketMetrics m;
      m.bucket = b.at("bucket").get<std::string>();
      m.rank1 = b.at("rank1").get<double>();
      m.rank5 = b.at("rank5").get<double>();
      m.rank10 = b.at("rank10").get<double>();
      m.mAP = b.at("mAP").get<double>();
      m.queries = b.at("queries").get<std::size_t>();
      m.valid_queries = b.at("valid_queries").get<std::size_t>();
      m.gallery = b.at("gallery").get<std::size_t>();
      m.excluded = b.at("excluded_queries").get<std::vector<std::string>>();
      r.buckets.push_back(std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(1, std::string("metrics report: ") + e.what());
  }
  return r;
}

namespace {

std::string pct(double v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%6.1f", 100.0 * v);
  return buf;
}

std::string padded(const std::string& s, std::size_t w) { return s.size() >= w ? s : s + std::string(w - s.size(), ' '); }

}  // namespace

std::string report_to_text(const MetricsReport& r) {
  std::ostringstream out;
  out << "protocol " << r.protocol.name() << '\n';
  out << padded("bucket", 8) << "  rank1  rank5 rank10    mAP  queries  valid  gallery\n";
  for (const auto& b : r.buckets) {
    char counts[64];
    std::snprintf(counts, sizeof counts, "  %7zu  %5zu  %7zu", b.queries, b.valid_queries, b.gallery);
    out << padded(b.bucket, 8) << ' ' << pct(b.rank1) << ' ' << pct(b.rank5) << ' ' << pct(b.rank10) << ' '
        << pct(b.mAP) << counts << '\n';
  }
  for (const auto& b : r.buckets)
    if (!b.excluded.empty())
      out << "note: " << b.excluded.size() << " quer" << (b.excluded.size() == 1 ? "y" : "ies") << " in bucket "
          << b.bucket << " had no true match and were excluded\n";
  return out.str();
}

std::string ablation_to_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "direction,bucket,streams,rank1,rank5,rank10,mAP\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%s,%s,%.6f,%.6f,%.6f,%.6f\n", std::string(to_string(r.direction)).c_str(),
                  r.bucket.c_str(), r.name.c_str(), r.rank1, r.rank5, r.rank10, r.mAP);
    out << buf;
  }
  return out.str();
}

std::string ablation_to_text(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  std::string current;
  for (const auto& r : rows) {
    const std::string block = std::string(to_string(r.direction)) + " / " + r.bucket;
    if (block != current) {
      current = block;
      out << (out.tellp() > 0 ? "\n" : "") << block << '\n'
          << padded("streams", 8) << "  rank1  rank5 rank10    mAP\n";
    }
    out << padded(r.name, 8) << ' ' << pct(r.rank1) << ' ' << pct(r.rank5) << ' ' << pct(r.rank10) << ' ' << pct(r.mAP)
        << '\n';
  }
  return out.str();
}

nlohmann::json ablation_to_json(const std::vector<AblationRow>& rows) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows) {
    j.push_back({{"direction", std::string(to_string(r.direction))},
                 {"bucket", r.bucket},
                 {"streams", r.name},
                 {"rank1", r.rank1},
                 {"rank5", r.rank5},
                 {"rank10", r.rank10},
                 {"mAP", r.mAP}});
  }
  return j;
}

}  // namespace agvp::eval
