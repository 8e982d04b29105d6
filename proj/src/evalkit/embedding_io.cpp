#include "agvp/evalkit.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace agvp::eval {

namespace {

constexpr const char* kMagic = "AGVPEMB";
constexpr int kVersion = 1;

std::filesystem::path ids_path(const std::filesystem::path& p) {
  auto s = p;
  s += ".ids";
  return s;
}

void put_f32(std::string& out, float f) {
  std::uint32_t u = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xFFu));
}

float get_f32(const unsigned char* p) {
  std::uint32_t u = 0;
  for (int i = 0; i < 4; ++i) u |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(u);
}

}  // namespace

void write_embeddings(const std::filesystem::path& path, const EmbeddingTable& emb) {
  emb.validate();
  std::string body;
  body.reserve(static_cast<std::size_t>(emb.rows.size()) * 4);
  for (Eigen::Index r = 0; r < emb.rows.rows(); ++r)
    for (Eigen::Index c = 0; c < emb.rows.cols(); ++c) put_f32(body, static_cast<float>(emb.rows(r, c)));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << kMagic << ' ' << kVersion << ' ' << emb.rows.cols() << ' ' << emb.rows.rows() << '\n';
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!out) throw IoError("write failed: " + path.string());

  std::ofstream ids(ids_path(path), std::ios::binary);
  for (const auto& id : emb.ids) {
    if (id.find('\n') != std::string::npos) throw ValidationError("tracklet id contains a newline");
    ids << id << '\n';
  }
  if (!ids) throw IoError("cannot write " + ids_path(path).string());
}

EmbeddingTable read_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string header;
  if (!std::getline(in, header)) throw ParseError(1, path.string() + ": missing header");
  std::istringstream hs(header);
  std::string magic;
  int version = 0;
  long dim = -1;
  long count = -1;
  hs >> magic >> version >> dim >> count;
  if (!hs || magic != kMagic) throw ParseError(1, path.string() + ": not an embedding file");
  if (version != kVersion) {
    throw ParseError(1, path.string() + ": format version " + std::to_string(version) + " is not supported (expected " +
                            std::to_string(kVersion) + ")");
  }
  if (dim <= 0 || count < 0) throw ParseError(1, path.string() + ": bad dim/count");

  const std::size_t bytes = static_cast<std::size_t>(dim) * static_cast<std::size_t>(count) * 4;
  std::string body(bytes, '\0');
  in.read(body.data(), static_cast<std::streamsize>(bytes));
  if (static_cast<std::size_t>(in.gcount()) != bytes) throw IoError(path.string() + ": truncated embedding data");
  if (in.peek() != std::char_traits<char>::eof()) throw IoError(path.string() + ": trailing bytes after embedding data");

  EmbeddingTable t;
  t.rows.resize(count, dim);
  const auto* p = reinterpret_cast<const unsigned char*>(body.data());
  for (long r = 0; r < count; ++r)
    for (long c = 0; c < dim; ++c) t.rows(r, c) = get_f32(p + (static_cast<std::size_t>(r) * static_cast<std::size_t>(dim) + static_cast<std::size_t>(c)) * 4);

  std::ifstream ids(ids_path(path), std::ios::binary);
  if (!ids) throw IoError("missing id sidecar " + ids_path(path).string());
  std::string id;
  while (std::getline(ids, id)) t.ids.push_back(id);
  if (static_cast<long>(t.ids.size()) != count) {
    throw ValidationError(ids_path(path).string() + " lists " + std::to_string(t.ids.size()) + " ids for " +
                          std::to_string(count) + " rows");
  }
  t.validate();
  return t;
}

}  // namespace agvp::eval
