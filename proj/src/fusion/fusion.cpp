#include "agvp/fusion.hpp"
#include "agvp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace agvp::fusion {

std::array<double, 3> softmax3(const std::array<double, 3>& logits) {
  const double mx = std::max({logits[0], logits[1], logits[2]});
  std::array<double, 3> w{};
  double z = 0.0;
  for (int i = 0; i < 3; ++i) z += (w[static_cast<std::size_t>(i)] = std::exp(logits[static_cast<std::size_t>(i)] - mx));
  for (double& v : w) v /= z;
  return w;
}

std::array<double, 3> StreamWeights::weights() const { return softmax3(logits); }

FusionModel::FusionModel(std::array<Eigen::Index, 3> dims, Eigen::Index fused_dim, nn::Rng& rng)
    : heads{nn::Linear(params_, "fusion.temporal", dims[0], fused_dim, rng),
            nn::Linear(params_, "fusion.appearance", dims[1], fused_dim, rng),
            nn::Linear(params_, "fusion.multiscale", dims[2], fused_dim, rng)},
      logits(params_.add("fusion.logits", Mat::Zero(1, 3))),
      input_dims(dims) {}

StreamWeights FusionModel::weights() const {
  return StreamWeights{{logits->value(0, 0), logits->value(0, 1), logits->value(0, 2)}};
}

Var FusionModel::operator()(const Var& temporal, const Var& appearance, const Var& multiscale) const {
  const std::array<Var, 3> in{temporal, appearance, multiscale};
  std::array<Var, 3> projected;
  for (std::size_t i = 0; i < 3; ++i) {
    if (in[i]->cols() != input_dims[i]) {
      throw ShapeError("fusion: stream " + std::to_string(i + 1) + " has width " + std::to_string(in[i]->cols()) +
                       ", expected " + std::to_string(input_dims[i]));
    }
    projected[i] = nn::l2_normalize_rows(heads[i](in[i]));
  }
  return fuse_features(projected[0], projected[1], projected[2], logits);
}

Var fuse_features(const Var& temporal, const Var& appearance, const Var& multiscale, const Var& logits) {
  if (temporal->rows() != appearance->rows() || temporal->rows() != multiscale->rows() ||
      temporal->cols() != appearance->cols() || temporal->cols() != multiscale->cols()) {
    throw ShapeError("fusion: projected stream embeddings differ in shape");
  }
  if (logits->rows() != 1 || logits->cols() != 3) throw ShapeError("fusion: logits must be 1x3");
  const Var w = nn::softmax_rows(logits);
  const std::array<Var, 3> streams{temporal, appearance, multiscale};
  Var out;
  for (Eigen::Index i = 0; i < 3; ++i) {
    const std::array<std::pair<Eigen::Index, Eigen::Index>, 1> at{{{0, i}}};
    const Var wi = nn::repeat_rows(nn::pick(w, at), temporal->rows());  // B x 1
    const Var term = nn::mul(streams[static_cast<std::size_t>(i)],
                             nn::matmul(wi, nn::constant(Mat::Ones(1, temporal->cols()))));
    out = out ? nn::add(out, term) : term;
  }
  return out;
}

Mat fuse_features(const Mat& temporal, const Mat& appearance, const Mat& multiscale, const StreamWeights& sw) {
  if (temporal.rows() != appearance.rows() || temporal.rows() != multiscale.rows() ||
      temporal.cols() != appearance.cols() || temporal.cols() != multiscale.cols()) {
    throw ShapeError("fusion: projected stream embeddings differ in shape");
  }
  const auto w = sw.weights();
  return w[0] * temporal + w[1] * appearance + w[2] * multiscale;
}

double rrf_score(std::span<const int> ranks, int k) {
  double s = 0.0;
  for (int r : ranks) s += 1.0 / double(k + r);
  return s;
}

RankedList rrf(const std::vector<RankedList>& lists, int k) {
  if (lists.empty()) throw ValidationError("rrf needs at least one rank list");
  if (k < 0) throw ValidationError("rrf constant k must be >= 0");
  const std::string& query = lists.front().query_id;
  std::map<std::string, std::vector<int>> ranks;
  for (std::size_t i = 0; i < lists.size(); ++i) {
    if (lists[i].query_id != query) throw ValidationError("rrf: lists belong to different queries");
    std::set<std::string> seen;
    for (std::size_t r = 0; r < lists[i].entries.size(); ++r) {
      const auto& id = lists[i].entries[r].gallery_id;
      if (!seen.insert(id).second) throw ValidationError("rrf: gallery id " + id + " repeated in one list");
      ranks[id].push_back(static_cast<int>(r) + 1);
    }
  }
  for (const auto& [id, r] : ranks) {
    if (r.size() != lists.size()) throw ValidationError("rrf: gallery sets differ (id " + id + ")");
  }
  RankedList out;
  out.query_id = query;
  for (const auto& [id, r] : ranks) out.entries.push_back({id, rrf_score(r, k)});
  std::stable_sort(out.entries.begin(), out.entries.end(), [](const RankedEntry& a, const RankedEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.gallery_id < b.gallery_id;
  });
  return out;
}

void write_rank_csv(const std::filesystem::path& path, const std::vector<RankedList>& lists) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "query_id,gallery_id,rank,score\n";
  char buf[64];
  for (const auto& l : lists) {
    for (std::size_t r = 0; r < l.entries.size(); ++r) {
      std::snprintf(buf, sizeof buf, "%.17g", l.entries[r].score);
      out << l.query_id << ',' << l.entries[r].gallery_id << ',' << r + 1 << ',' << buf << '\n';
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<RankedList> read_rank_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t n = 1;
  if (!std::getline(in, line) || line != "query_id,gallery_id,rank,score") {
    throw ParseError(1, "expected header query_id,gallery_id,rank,score");
  }
  std::vector<RankedList> lists;
  std::map<std::string, std::size_t> index;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string q, g, rank, score;
    if (!std::getline(ss, q, ',') || !std::getline(ss, g, ',') || !std::getline(ss, rank, ',') ||
        !std::getline(ss, score) || q.empty() || g.empty()) {
      throw ParseError(n, "expected four comma-separated fields");
    }
    auto [it, fresh] = index.emplace(q, lists.size());
    if (fresh) lists.push_back({q, {}});
    auto& l = lists[it->second];
    try {
      std::size_t used = 0;
      const long r = std::stol(rank, &used);
      if (used != rank.size() || r != static_cast<long>(l.entries.size()) + 1) {
        throw ParseError(n, "ranks of query " + q + " must be consecutive from 1");
      }
      l.entries.push_back({g, std::stod(score)});
    } catch (const std::logic_error&) {
      throw ParseError(n, "rank or score is not a number");
    }
  }
  return lists;
}

}  // namespace agvp::fusion
