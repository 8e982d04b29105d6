#include "agvp/evalkit.hpp"

#include <algorithm>
#include <numeric>

namespace agvp::eval {

Mat distances(const Mat& queries, const Mat& gallery, Metric metric) {
  if (queries.cols() != gallery.cols()) {
    throw ShapeError("query dim " + std::to_string(queries.cols()) + " != gallery dim " + std::to_string(gallery.cols()));
  }
  if (metric == Metric::Cosine) {
    auto unit = [](const Mat& m) {
      Mat out = m;
      for (Eigen::Index r = 0; r < out.rows(); ++r) {
        const double n = out.row(r).norm();
        if (n > 0.0) out.row(r) /= n;
      }
      return out;
    };
    Mat d = -(unit(queries) * unit(gallery).transpose());
    d.array() += 1.0;
    return d;
  }
  Mat d(queries.rows(), gallery.rows());
  for (Eigen::Index i = 0; i < queries.rows(); ++i)
    for (Eigen::Index j = 0; j < gallery.rows(); ++j) d(i, j) = (queries.row(i) - gallery.row(j)).norm();
  return d;
}

std::vector<RankedList> rank(const Mat& dist, const std::vector<std::string>& query_ids,
                             const std::vector<std::string>& gallery_ids) {
  if (gallery_ids.empty()) throw EmptyPartitionError("cannot rank against an empty gallery");
  if (dist.rows() != static_cast<Eigen::Index>(query_ids.size()) ||
      dist.cols() != static_cast<Eigen::Index>(gallery_ids.size())) {
    throw ShapeError("distance matrix does not match the id lists");
  }
  std::vector<RankedList> out;
  out.reserve(query_ids.size());
  std::vector<std::size_t> order(gallery_ids.size());
  for (std::size_t q = 0; q < query_ids.size(); ++q) {
    std::iota(order.begin(), order.end(), 0);
    const auto row = dist.row(static_cast<Eigen::Index>(q));
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double da = row(static_cast<Eigen::Index>(a));
      const double db = row(static_cast<Eigen::Index>(b));
      if (da != db) return da < db;
      return gallery_ids[a] < gallery_ids[b];
    });
    RankedList l;
    l.query_id = query_ids[q];
    for (std::size_t g : order) l.entries.push_back({gallery_ids[g], -row(static_cast<Eigen::Index>(g))});
    out.push_back(std::move(l));
  }
  return out;
}

Relevance relevance(const std::vector<RankedList>& lists, const std::map<std::string, std::string>& query_labels,
                    const std::map<std::string, std::string>& gallery_labels) {
  Relevance rel;
  rel.reserve(lists.size());
  for (const auto& l : lists) {
    const auto q = query_labels.find(l.query_id);
    if (q == query_labels.end()) throw ValidationError("no label for query " + l.query_id);
    std::vector<bool> flags;
    flags.reserve(l.entries.size());
    for (const auto& e : l.entries) {
      const auto g = gallery_labels.find(e.gallery_id);
      if (g == gallery_labels.end()) throw ValidationError("no label for gallery item " + e.gallery_id);
      flags.push_back(g->second == q->second);
    }
    rel.push_back(std::move(flags));
  }
  return rel;
}

std::size_t valid_queries(const Relevance& rel) {
  return static_cast<std::size_t>(
      std::count_if(rel.begin(), rel.end(), [](const auto& f) { return std::find(f.begin(), f.end(), true) != f.end(); }));
}

double cmc(const Relevance& rel, int k) {
  if (k < 1) throw ValidationError("cmc needs k >= 1");
  std::size_t valid = 0;
  std::size_t hits = 0;
  for (const auto& flags : rel) {
    const auto first = std::find(flags.begin(), flags.end(), true);
    if (first == flags.end()) continue;
    ++valid;
    if (first - flags.begin() < k) ++hits;
  }
  return valid == 0 ? 0.0 : double(hits) / double(valid);
}

double map_metric(const Relevance& rel) {
  std::size_t valid = 0;
  double total = 0.0;
  for (const auto& flags : rel) {
    std::size_t found = 0;
    double ap = 0.0;
    for (std::size_t i = 0; i < flags.size(); ++i) {
      if (!flags[i]) continue;
      ++found;
      ap += double(found) / double(i + 1);
    }
    if (found == 0) continue;
    ++valid;
    total += ap / double(found);
  }
  return valid == 0 ? 0.0 : total / double(valid);
}

double cmc(const std::vector<RankedList>& lists, const std::map<std::string, std::string>& query_labels,
           const std::map<std::string, std::string>& gallery_labels, int k) {
  return cmc(relevance(lists, query_labels, gallery_labels), k);
}

double map_metric(const std::vector<RankedList>& lists, const std::map<std::string, std::string>& query_labels,
                  const std::map<std::string, std::string>& gallery_labels) {
  return map_metric(relevance(lists, query_labels, gallery_labels));
}

}  // namespace agvp::eval
