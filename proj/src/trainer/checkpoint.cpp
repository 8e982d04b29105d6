#include "agvp/trainer.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <fstream>
#include <map>
#include <sstream>

namespace agvp::train {

namespace {

constexpr const char* kMagic = "AGVPCKPT";

void put_f64(std::string& out, double d) {
  const auto u = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xFFu));
}

double get_f64(const unsigned char* p) {
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(u);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, StreamKind stream, const TrainConfig& cfg,
                     const std::vector<const nn::ParamStore*>& stores) {
  nlohmann::ordered_json header;
  header["version"] = kCheckpointVersion;
  header["stream"] = std::string(to_string(stream));
  header["config"] = train_config_to_json(cfg);
  header["arrays"] = nlohmann::json::array();
  std::string body;
  for (const auto* store : stores) {
    for (const auto& e : store->entries()) {
      const Mat& v = e.var->value;
      header["arrays"].push_back({{"name", e.name},
                                  {"shape", {v.rows(), v.cols()}},
                                  {"dtype", "f64le"},
                                  {"offset", body.size()}});
      for (Eigen::Index i = 0; i < v.size(); ++i) put_f64(body, v.data()[i]);
    }
  }
  const std::string h = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << kMagic << ' ' << kCheckpointVersion << '\n' << h.size() << '\n' << h;
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto nl1 = data.find('\n');
  if (nl1 == std::string::npos) throw CheckpointError(path.string() + ": truncated (no header)");
  std::istringstream magic_line(data.substr(0, nl1));
  std::string magic;
  int version = -1;
  magic_line >> magic >> version;
  if (magic != kMagic) throw CheckpointError(path.string() + ": not a checkpoint file");
  if (version != kCheckpointVersion) {
    throw CheckpointError(path.string() + ": checkpoint format version " + std::to_string(version) +
                          " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const auto nl2 = data.find('\n', nl1 + 1);
  if (nl2 == std::string::npos) throw CheckpointError(path.string() + ": truncated (no header length)");
  std::size_t hlen = 0;
  try {
    hlen = std::stoul(data.substr(nl1 + 1, nl2 - nl1 - 1));
  } catch (const std::exception&) {
    throw CheckpointError(path.string() + ": bad header length");
  }
  if (data.size() < nl2 + 1 + hlen) throw CheckpointError(path.string() + ": truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(data.substr(nl2 + 1, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": corrupt header: " + e.what());
  }
  const std::size_t base = nl2 + 1 + hlen;

  Checkpoint ck;
  try {
    ck.version = header.at("version").get<int>();
    ck.stream = stream_from_string(header.at("stream").get<std::string>());
    ck.config = train_config_from_json(header.at("config"));
    std::size_t expected_end = 0;
    for (const auto& a : header.at("arrays")) {
      const auto name = a.at("name").get<std::string>();
      const auto shape = a.at("shape").get<std::vector<Eigen::Index>>();
      if (a.at("dtype").get<std::string>() != "f64le") throw CheckpointError(name + ": unsupported dtype");
      if (shape.size() != 2 || shape[0] < 0 || shape[1] < 0) throw CheckpointError(name + ": bad shape");
      const auto offset = a.at("offset").get<std::size_t>();
      const std::size_t count = static_cast<std::size_t>(shape[0] * shape[1]);
      if (base + offset + count * 8 > data.size())
        throw CheckpointError(path.string() + ": truncated data for array '" + name + "'");
      Mat m(shape[0], shape[1]);
      const auto* p = reinterpret_cast<const unsigned char*>(data.data() + base + offset);
      for (std::size_t i = 0; i < count; ++i) m.data()[i] = get_f64(p + i * 8);
      expected_end = std::max(expected_end, offset + count * 8);
      ck.arrays.emplace_back(name, std::move(m));
    }
    if (base + expected_end != data.size()) throw CheckpointError(path.string() + ": trailing bytes after array data");
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": corrupt header: " + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(path.string() + ": stored config is invalid: " + e.what());
  }
  return ck;
}

void apply_checkpoint(const Checkpoint& ckpt, const std::vector<nn::ParamStore*>& stores) {
  std::map<std::string, const Mat*> stored;
  for (const auto& [name, m] : ckpt.arrays) stored[name] = &m;
  std::vector<std::string> problems;
  std::map<std::string, bool> seen;
  for (auto* s : stores) {
    for (const auto& e : s->entries()) {
      seen[e.name] = true;
      auto it = stored.find(e.name);
      if (it == stored.end()) {
        problems.push_back("missing '" + e.name + "'");
      } else if (it->second->rows() != e.var->rows() || it->second->cols() != e.var->cols()) {
        problems.push_back("'" + e.name + "' has shape " + std::to_string(it->second->rows()) + "x" +
                           std::to_string(it->second->cols()) + ", expected " + std::to_string(e.var->rows()) + "x" +
                           std::to_string(e.var->cols()));
      }
    }
  }
  for (const auto& [name, m] : stored)
    if (!seen.contains(name)) problems.push_back("unexpected '" + name + "'");
  if (!problems.empty()) {
    std::string msg = "checkpoint does not match the model:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw CheckpointError(msg);
  }
  for (auto* s : stores)
    for (const auto& e : s->entries()) e.var->value = *stored.at(e.name);
}

}  // namespace agvp::train
