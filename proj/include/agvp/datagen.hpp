#pragma once

// Synthetic aerial/ground tracklet corpus: procedural articulated figures,
// per-altitude degradation, a ground-truth UV oracle and manifest I/O.

#include "agvp/core.hpp"
#include "agvp/stream_na.hpp"

#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace agvp::datagen {

struct Degradation {
  double downscale = 1.0;  // multiplicative resolution factor, (0, 1]
  int blur_radius = 0;     // box blur radius in pixels
  double noise_sigma = 0.0;
  bool operator==(const Degradation&) const = default;
};

struct GenConfig {
  std::uint64_t seed = 7;
  int num_identities = 5;
  int tracklets_per_identity_per_platform = 2;
  std::vector<Platform> ground_platforms{Platform::CCTV};
  std::vector<int> altitudes{15, 120};
  int frames_per_tracklet = 8;
  int base_image_side = 128;  // subject height in pixels before degradation
  std::map<int, Degradation> altitude_noise = default_altitude_noise();
  Degradation ground_noise{1.0, 0, 0.01};
  double clothing_change_prob = 0.0;
  int sessions = 2;
  /// Identities that only appear on the aerial platform (G2A distractors).
  int num_distractors = 0;
  int uv_size = 64;

  static std::map<int, Degradation> default_altitude_noise();
  /// Throws ConfigError on invalid counts or a downscale factor that grows with altitude.
  void validate() const;
  bool operator==(const GenConfig&) const = default;
};

/// Rest-pose body surface attached to the UV grid.
struct BodyPose {
  double left_leg = 0.0, right_leg = 0.0, left_arm = 0.0, right_arm = 0.0;  // swing angles (rad)
};

class BodyModel {
 public:
  explicit BodyModel(int uv_size);
  int uv_size() const { return uv_size_; }

  /// Position and outward normal for continuous UV coordinates (row, col),
  /// posed and scaled by the subject height.
  void surface(double row, double col, const BodyPose& pose, double height, na::Vec3& pos, na::Vec3& normal) const;
  std::vector<na::Vec3> texel_normals(const BodyPose& pose) const;
  std::vector<na::Vec3> texel_coords(double height) const;

 private:
  int uv_size_;
};

struct SyntheticIdentity {
  PersonId person_id;
  na::UvTexture texture;  // base clothing
  double gait_frequency = 1.0;
  double height_scale = 1.0;
  std::map<std::string, std::string> attributes;
};

struct Manifest {
  std::vector<Tracklet> tracklets;
  /// Optional per-identity metadata, stored beside the manifest.
  std::map<std::string, std::map<std::string, std::string>> attributes;
  bool operator==(const Manifest&) const = default;
};

/// Deterministic description of one tracklet, shared by the renderer and the oracle.
struct TrackletPlan {
  Tracklet tracklet;
  std::size_t identity_index = 0;
  int clothing_variant = 0;
  double yaw = 0.0;        // rad
  double yaw_drift = 0.0;  // rad per frame
  double elevation = 0.0;  // rad
  double gait_phase = 0.0;
  double background = 0.5;
  Degradation degradation;
};

class Generator {
 public:
  explicit Generator(GenConfig cfg);

  const GenConfig& config() const { return cfg_; }
  const BodyModel& body() const { return body_; }
  const std::vector<SyntheticIdentity>& identities() const { return identities_; }
  const std::vector<TrackletPlan>& plans() const { return plans_; }

  na::UvTexture texture_for(const TrackletPlan& plan) const;
  BodyPose pose_at(const TrackletPlan& plan, std::size_t frame) const;
  na::Vec3 view_at(const TrackletPlan& plan, std::size_t frame) const;
  FrameImage render(const TrackletPlan& plan, std::size_t frame) const;

  /// Writes frames, manifest.jsonl, attributes.json and corpus.json under out_dir.
  Manifest write_corpus(const std::filesystem::path& out_dir) const;
  Manifest manifest() const;

 private:
  GenConfig cfg_;
  BodyModel body_;
  std::vector<SyntheticIdentity> identities_;
  std::vector<std::vector<na::UvTexture>> clothing_;  // per identity, per variant
  std::vector<TrackletPlan> plans_;
};

Manifest generate_corpus(const GenConfig& cfg, const std::filesystem::path& out_dir);

struct OracleUv {
  na::UvTexture texture;
  na::UvMask visibility;
};

/// Ground-truth UV texture and visibility for frames of a synthetic corpus.
class UvOracle {
 public:
  explicit UvOracle(GenConfig cfg);
  static UvOracle from_corpus(const std::filesystem::path& root);

  /// Throws UnsupportedInputError for tracklets/frames the generator never produced.
  OracleUv uv(const Tracklet& tracklet, std::size_t frame) const;
  /// Canonical 3-D texel positions for the tracklet's identity.
  std::vector<na::Vec3> texel_coords(const Tracklet& tracklet) const;
  const Generator& generator() const { return gen_; }

 private:
  const TrackletPlan& plan_for(const Tracklet& tracklet) const;
  Generator gen_;
  std::map<std::string, std::size_t> by_id_;
};

void write_manifest(const Manifest& m, const std::filesystem::path& path);
/// Reads manifest.jsonl (and attributes.json beside it when present).
Manifest load_manifest(const std::filesystem::path& path);

std::string gen_config_to_json(const GenConfig& cfg);
GenConfig gen_config_from_json(const std::string& text);
/// Rejects unknown keys; missing keys keep their defaults.
GenConfig gen_config_from_json(const nlohmann::json& j);

/// Frame paths of `m` that do not exist under `root`.
std::vector<std::string> missing_frames(const Manifest& m, const std::filesystem::path& root);

/// Stable 64-bit FNV-1a, used to derive per-tracklet RNG streams.
std::uint64_t fnv1a(std::string_view s, std::uint64_t basis = 14695981039346656037ULL);
std::mt19937_64 stream_rng(std::uint64_t seed, std::string_view key);

}  // namespace agvp::datagen
