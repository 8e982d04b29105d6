#include "agvp/datagen.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace agvp::datagen {

namespace {

using ordered_json = nlohmann::ordered_json;

const std::set<std::string> kRecordKeys{"tracklet_id", "person_id", "camera_id", "platform",
                                        "altitude_m", "session",   "clothing_id", "frames"};

ordered_json record_to_json(const Tracklet& t) {
  ordered_json j;
  j["tracklet_id"] = t.tracklet_id.str();
  j["person_id"] = t.person_id.str();
  j["camera_id"] = t.camera_id.str();
  j["platform"] = std::string(to_string(t.platform));
  j["altitude_m"] = meters(t.altitude);
  j["session"] = t.session.str();
  j["clothing_id"] = t.clothing_id.str();
  j["frames"] = t.frames;
  return j;
}

template <class T>
T field(const nlohmann::json& j, const char* key, std::size_t line) {
  const auto it = j.find(key);
  if (it == j.end()) throw ParseError(line, std::string("missing key '") + key + "'");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ParseError(line, std::string("key '") + key + "' has the wrong type");
  }
}

Tracklet record_from_json(const nlohmann::json& j, std::size_t line) {
  if (!j.is_object()) throw ParseError(line, "record is not a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!kRecordKeys.contains(key)) throw ParseError(line, "unknown key '" + key + "'");
  }
  Tracklet t;
  try {
    t.tracklet_id = TrackletId(field<std::string>(j, "tracklet_id", line));
    t.person_id = PersonId(field<std::string>(j, "person_id", line));
    t.camera_id = CameraId(field<std::string>(j, "camera_id", line));
    t.platform = platform_from_string(field<std::string>(j, "platform", line));
    t.altitude = altitude_from_meters(field<int>(j, "altitude_m", line));
    t.session = SessionId(field<std::string>(j, "session", line));
    t.clothing_id = ClothingId(field<std::string>(j, "clothing_id", line));
    t.frames = field<std::vector<std::string>>(j, "frames", line);
    t.validate();
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(line, e.what());
  }
  return t;
}

}  // namespace

void write_manifest(const Manifest& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& t : m.tracklets) out << record_to_json(t).dump() << '\n';
  if (!out) throw IoError("write failed: " + path.string());

  const auto attr_path = path.parent_path() / "attributes.json";
  if (!m.attributes.empty()) {
    std::ofstream a(attr_path, std::ios::binary);
    a << nlohmann::json(m.attributes).dump(2) << '\n';
    if (!a) throw IoError("cannot write " + attr_path.string());
  }
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest " + path.string());
  Manifest m;
  std::set<std::string> ids;
  std::set<std::string> frames;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(line, std::string("malformed JSON: ") + e.what());
    }
    Tracklet t = record_from_json(j, line);
    if (!ids.insert(t.tracklet_id.str()).second) throw ParseError(line, "duplicate tracklet_id " + t.tracklet_id.str());
    for (const auto& f : t.frames) {
      if (!frames.insert(f).second) throw ParseError(line, "frame path listed twice: " + f);
    }
    m.tracklets.push_back(std::move(t));
  }

  const auto attr_path = path.parent_path() / "attributes.json";
  if (std::filesystem::exists(attr_path)) {
    std::ifstream a(attr_path, std::ios::binary);
    try {
      m.attributes = nlohmann::json::parse(a).get<decltype(m.attributes)>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(1, "attributes.json: " + std::string(e.what()));
    }
  }
  return m;
}

std::string gen_config_to_json(const GenConfig& cfg) {
  ordered_json j;
  j["seed"] = cfg.seed;
  j["num_identities"] = cfg.num_identities;
  j["tracklets_per_identity_per_platform"] = cfg.tracklets_per_identity_per_platform;
  std::vector<std::string> ground;
  for (Platform p : cfg.ground_platforms) ground.emplace_back(to_string(p));
  j["ground_platforms"] = ground;
  j["altitudes"] = cfg.altitudes;
  j["frames_per_tracklet"] = cfg.frames_per_tracklet;
  j["base_image_side"] = cfg.base_image_side;
  ordered_json noise = ordered_json::object();
  for (const auto& [alt, d] : cfg.altitude_noise) {
    noise[std::to_string(alt)] = {{"downscale", d.downscale}, {"blur_radius", d.blur_radius}, {"noise_sigma", d.noise_sigma}};
  }
  j["altitude_noise"] = noise;
  j["ground_noise"] = {{"downscale", cfg.ground_noise.downscale},
                       {"blur_radius", cfg.ground_noise.blur_radius},
                       {"noise_sigma", cfg.ground_noise.noise_sigma}};
  j["clothing_change_prob"] = cfg.clothing_change_prob;
  j["sessions"] = cfg.sessions;
  j["num_distractors"] = cfg.num_distractors;
  j["uv_size"] = cfg.uv_size;
  return j.dump(2);
}

namespace {

Degradation degradation_from(const nlohmann::json& j, const std::string& where) {
  static const std::set<std::string> keys{"downscale", "blur_radius", "noise_sigma"};
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, v] : j.items())
    if (!keys.contains(k)) throw ConfigError("unknown key '" + where + "." + k + "'");
  Degradation d;
  d.downscale = j.value("downscale", d.downscale);
  d.blur_radius = j.value("blur_radius", d.blur_radius);
  d.noise_sigma = j.value("noise_sigma", d.noise_sigma);
  return d;
}

}  // namespace

GenConfig gen_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("malformed generator config: ") + e.what());
  }
  return gen_config_from_json(j);
}

GenConfig gen_config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> keys{"seed", "num_identities", "tracklets_per_identity_per_platform",
                                          "ground_platforms", "altitudes", "frames_per_tracklet",
                                          "base_image_side", "altitude_noise", "ground_noise",
                                          "clothing_change_prob", "sessions", "num_distractors", "uv_size"};
  if (!j.is_object()) throw ConfigError("generator config must be an object");
  for (const auto& [k, v] : j.items())
    if (!keys.contains(k)) throw ConfigError("unknown key 'gen." + k + "'");
  GenConfig cfg;
  try {
    cfg.seed = j.value("seed", cfg.seed);
    cfg.num_identities = j.value("num_identities", cfg.num_identities);
    cfg.tracklets_per_identity_per_platform =
        j.value("tracklets_per_identity_per_platform", cfg.tracklets_per_identity_per_platform);
    if (j.contains("ground_platforms")) {
      cfg.ground_platforms.clear();
      for (const auto& p : j.at("ground_platforms")) cfg.ground_platforms.push_back(platform_from_string(p.get<std::string>()));
    }
    cfg.altitudes = j.value("altitudes", cfg.altitudes);
    cfg.frames_per_tracklet = j.value("frames_per_tracklet", cfg.frames_per_tracklet);
    cfg.base_image_side = j.value("base_image_side", cfg.base_image_side);
    if (j.contains("altitude_noise")) {
      cfg.altitude_noise.clear();
      for (const auto& [alt, d] : j.at("altitude_noise").items()) {
        cfg.altitude_noise[std::stoi(alt)] = degradation_from(d, "gen.altitude_noise." + alt);
      }
    }
    if (j.contains("ground_noise")) cfg.ground_noise = degradation_from(j.at("ground_noise"), "gen.ground_noise");
    cfg.clothing_change_prob = j.value("clothing_change_prob", cfg.clothing_change_prob);
    cfg.sessions = j.value("sessions", cfg.sessions);
    cfg.num_distractors = j.value("num_distractors", cfg.num_distractors);
    cfg.uv_size = j.value("uv_size", cfg.uv_size);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("generator config: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw ConfigError("generator config: altitude keys must be integers");
  }
  cfg.validate();
  return cfg;
}

std::vector<std::string> missing_frames(const Manifest& m, const std::filesystem::path& root) {
  std::vector<std::string> out;
  for (const auto& t : m.tracklets)
    for (const auto& f : t.frames)
      if (!std::filesystem::exists(root / f)) out.push_back(f);
  return out;
}

}  // namespace agvp::datagen
