#include "agvp/pipeline.hpp"

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

extern char** environ;

namespace agvp::pipeline {

using json = nlohmann::json;
using train::StreamKind;

namespace {

constexpr std::array<StreamKind, 4> kKinds{StreamKind::Temporal, StreamKind::Appearance, StreamKind::MultiScale,
                                           StreamKind::Fusion};

std::size_t slot(StreamKind k) {
  switch (k) {
    case StreamKind::Temporal: return 0;
    case StreamKind::Appearance: return 1;
    case StreamKind::MultiScale: return 2;
    case StreamKind::Fusion: return 3;
  }
  return 0;
}

void check_keys(const json& j, const std::set<std::string>& keys, const std::string& where) {
  if (!j.is_object()) throw ConfigError((where.empty() ? std::string("config") : where) + " must be an object");
  for (const auto& [k, v] : j.items())
    if (!keys.contains(k)) throw ConfigError("unknown key '" + (where.empty() ? k : where + "." + k) + "'");
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
  if (!out) throw IoError("write failed: " + p.string());
}

void apply_seed(RunConfig& rc) {
  rc.gen.seed = rc.seed;
  rc.train.seed = rc.seed;
  for (auto& s : rc.streams) s.seed = rc.seed;
}

/// Per-stream settings layered over the shared train section.
json stream_defaults(StreamKind k) {
  switch (k) {
    case StreamKind::Temporal: return {{"epochs", 60}, {"decay_epochs", {45}}};
    // No pretrained weights exist at this scale, so the stream-3 encoder learns too.
    case StreamKind::MultiScale: return {{"epochs", 60}, {"decay_epochs", {45}}, {"msa", {{"train_encoder", true}}}};
    case StreamKind::Fusion: return {{"epochs", 20}, {"lr", 5e-3}, {"decay_epochs", {15}}};
    default: return json::object();
  }
}

}  // namespace

const train::TrainConfig& RunConfig::stream(StreamKind k) const { return streams[slot(k)]; }

std::string stream_file_stem(StreamKind k) {
  return k == StreamKind::Fusion ? "fusion" : "stream" + std::string(train::to_string(k));
}

train::DataNeeds needs_for(StreamKind k) {
  switch (k) {
    case StreamKind::Temporal:
    case StreamKind::MultiScale: return {true, false};
    case StreamKind::Appearance: return {false, true};
    case StreamKind::Fusion: return {true, true};
  }
  return {};
}

RunConfig default_run_config() {
  RunConfig rc;
  rc.gen.num_identities = 30;
  rc.gen.tracklets_per_identity_per_platform = 4;
  rc.gen.altitudes = {15, 120};
  rc.gen.frames_per_tracklet = 8;

  auto& t = rc.train;
  t.clip_length = 4;
  t.epochs = 30;
  t.warmup_epochs = 2;
  t.decay_epochs = {22};
  t.eval_every = 0;
  t.lr = 2e-3;
  t.texel_count = 256;
  t.ats.encoder = {64, 32, 8, 48, 2, 4, 2};
  t.frame_height = 64;
  t.frame_width = 32;
  t.ats.gru_hidden = 32;
  t.omni.channels = {32, 64, 96, 128};
  t.omni.pooled_rows = 48;
  t.omni.out_dim = 512;
  t.msa.encoder = {48, 48, 8, 48, 4, 4, 2};
  t.msa.embed_dim = 96;
  t.fused_dim = 128;

  for (StreamKind k : kKinds) rc.streams[slot(k)] = train::train_config_from_json(stream_defaults(k), t);
  apply_seed(rc);
  return rc;
}

// ---------------------------------------------------------------------------

json run_config_to_json(const RunConfig& rc) {
  nlohmann::ordered_json j;
  j["seed"] = rc.seed;
  j["gen"] = json::parse(datagen::gen_config_to_json(rc.gen));
  j["train"] = train::train_config_to_json(rc.train);
  for (StreamKind k : kKinds) j["streams"][std::string(train::to_string(k))] = train::train_config_to_json(rc.stream(k));
  j["split"] = {{"train_fraction", rc.train_fraction}};
  j["protocol"] = {{"direction", std::string(eval::to_string(rc.protocol.direction))},
                   {"altitude", rc.protocol.altitude ? json(*rc.protocol.altitude) : json("all")},
                   {"distractors", rc.protocol.include_distractors},
                   {"clothing", std::string(eval::to_string(rc.protocol.clothing))}};
  j["ablate"] = {{"per_altitude", rc.per_altitude}};
  j["fuse"] = {{"mode", rc.fuse_mode == FuseMode::Rrf ? "rrf" : "feature_rrf"}};
  j["report"] = {{"figure_queries", rc.figure_queries}, {"figure_top", rc.figure_top}};
  j["paths"] = {{"corpus", rc.paths.corpus.generic_string()}, {"work", rc.paths.work.generic_string()}};
  return json::parse(j.dump());
}

RunConfig run_config_from_json(const json& j) {
  RunConfig rc = default_run_config();
  check_keys(j, {"seed", "gen", "train", "streams", "split", "protocol", "ablate", "fuse", "report", "paths"}, "");
  try {
    if (j.contains("seed")) rc.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("gen")) {
      if (!j.at("gen").is_object()) throw ConfigError("gen must be an object");
      json g = json::parse(datagen::gen_config_to_json(rc.gen));
      for (const auto& [k, v] : j.at("gen").items()) g[k] = v;
      rc.gen = datagen::gen_config_from_json(g);
    }
    if (j.contains("train")) rc.train = train::train_config_from_json(j.at("train"), rc.train);
    if (j.contains("streams")) check_keys(j.at("streams"), {"1", "2", "3", "fusion"}, "streams");
    for (StreamKind k : kKinds) {
      json patch = stream_defaults(k);
      const std::string key(train::to_string(k));
      if (j.contains("streams") && j.at("streams").contains(key)) patch.merge_patch(j.at("streams").at(key));
      rc.streams[slot(k)] = train::train_config_from_json(patch, rc.train);
    }
    if (j.contains("split")) {
      const auto& s = j.at("split");
      check_keys(s, {"train_fraction"}, "split");
      if (s.contains("train_fraction")) rc.train_fraction = s.at("train_fraction").get<double>();
      if (!(rc.train_fraction > 0.0 && rc.train_fraction < 1.0))
        throw ConfigError("split.train_fraction must lie in (0,1)");
    }
    if (j.contains("protocol")) {
      const auto& p = j.at("protocol");
      check_keys(p, {"direction", "altitude", "distractors", "clothing"}, "protocol");
      if (p.contains("direction")) rc.protocol.direction = eval::direction_from_string(p.at("direction").get<std::string>());
      if (p.contains("altitude")) {
        const auto& a = p.at("altitude");
        if (a.is_string() && a.get<std::string>() == "all") rc.protocol.altitude.reset();
        else if (a.is_number_integer()) rc.protocol.altitude = a.get<int>();
        else throw ConfigError("protocol.altitude must be \"all\" or an altitude in metres");
      }
      if (p.contains("distractors")) rc.protocol.include_distractors = p.at("distractors").get<bool>();
      if (p.contains("clothing")) rc.protocol.clothing = eval::clothing_from_string(p.at("clothing").get<std::string>());
    }
    if (j.contains("ablate")) {
      check_keys(j.at("ablate"), {"per_altitude"}, "ablate");
      if (j.at("ablate").contains("per_altitude")) rc.per_altitude = j.at("ablate").at("per_altitude").get<bool>();
    }
    if (j.contains("fuse")) {
      check_keys(j.at("fuse"), {"mode"}, "fuse");
      if (j.at("fuse").contains("mode")) {
        const auto m = j.at("fuse").at("mode").get<std::string>();
        if (m == "rrf") rc.fuse_mode = FuseMode::Rrf;
        else if (m == "feature_rrf") rc.fuse_mode = FuseMode::FeatureRrf;
        else throw ConfigError("fuse.mode must be rrf or feature_rrf");
      }
    }
    if (j.contains("report")) {
      const auto& r = j.at("report");
      check_keys(r, {"figure_queries", "figure_top"}, "report");
      if (r.contains("figure_queries")) rc.figure_queries = r.at("figure_queries").get<int>();
      if (r.contains("figure_top")) rc.figure_top = r.at("figure_top").get<int>();
      if (rc.figure_queries < 1 || rc.figure_top < 1) throw ConfigError("report figure sizes must be >= 1");
    }
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      check_keys(p, {"corpus", "work"}, "paths");
      if (p.contains("corpus")) rc.paths.corpus = p.at("corpus").get<std::string>();
      if (p.contains("work")) rc.paths.work = p.at("work").get<std::string>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  apply_seed(rc);
  rc.gen.validate();
  for (const auto& s : rc.streams) s.validate();
  return rc;
}

std::map<std::string, std::string> agvp_environment() {
  std::map<std::string, std::string> out;
  for (char** e = environ; e && *e; ++e) {
    const std::string kv(*e);
    if (!kv.starts_with("AGVP_")) continue;
    const auto eq = kv.find('=');
    if (eq == std::string::npos) continue;
    out[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  return out;
}

namespace {

void leaves(const json& j, const json::json_pointer& at, std::map<std::string, json::json_pointer>& out) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) leaves(v, at / k, out);
    return;
  }
  std::string key = "AGVP";
  for (char c : at.to_string()) key += c == '/' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  out[key] = at;
}

}  // namespace

RunConfig load_run_config(const std::filesystem::path* file, const std::map<std::string, std::string>& env) {
  json doc = json::object();
  if (file) {
    std::ifstream in(*file, std::ios::binary);
    if (!in) throw IoError("cannot open config " + file->string());
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError(file->string() + ": " + e.what());
    }
  }
  if (env.empty()) return run_config_from_json(doc);

  std::map<std::string, json::json_pointer> known;
  leaves(run_config_to_json(run_config_from_json(doc)), json::json_pointer(), known);
  for (const auto& [name, value] : env) {
    auto it = known.find(name);
    if (it == known.end()) throw ConfigError("unknown key in environment override '" + name + "'");
    json v;
    try {
      v = json::parse(value);
    } catch (const json::exception&) {
      v = value;
    }
    doc[it->second] = v;
  }
  return run_config_from_json(doc);
}

// ---------------------------------------------------------------------------

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw IoError("sha256 unavailable");
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> md;
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return hex.str();
}

void write_provenance(const std::filesystem::path& out_dir, const RunConfig& rc,
                      const std::vector<std::filesystem::path>& inputs) {
  std::filesystem::create_directories(out_dir);
  write_text(out_dir / "run_config.json", run_config_to_json(rc).dump(2) + "\n");
  json files = json::object();
  for (const auto& in : inputs) {
    if (std::filesystem::is_directory(in)) {
      std::vector<std::filesystem::path> all;
      for (const auto& e : std::filesystem::recursive_directory_iterator(in))
        if (e.is_regular_file()) all.push_back(e.path());
      std::sort(all.begin(), all.end());
      for (const auto& p : all) files[p.generic_string()] = sha256_file(p);
    } else if (std::filesystem::exists(in)) {
      files[in.generic_string()] = sha256_file(in);
    } else {
      throw IoError("missing input " + in.string());
    }
  }
  write_text(out_dir / "inputs.json", files.dump(2) + "\n");
}

// ---------------------------------------------------------------------------

Corpus open_corpus(const RunConfig& rc, const std::filesystem::path& root) {
  Corpus c;
  c.root = root;
  c.manifest = datagen::load_manifest(root / "manifest.jsonl");
  const auto missing = datagen::missing_frames(c.manifest, root);
  if (!missing.empty()) {
    throw IoError("corpus " + root.string() + " is missing " + std::to_string(missing.size()) + " frame(s), first: " +
                  missing.front());
  }
  std::tie(c.train, c.test) = train::split_by_identity(c.manifest.tracklets, rc.train_fraction);
  if (c.train.empty() || c.test.empty()) throw EmptyPartitionError("identity split left one side empty");
  return c;
}

std::shared_ptr<const na::UvExtractor> corpus_extractor(const std::filesystem::path& corpus_root,
                                                        const std::filesystem::path& cache_dir) {
  auto oracle = std::make_shared<na::OracleExtractor>(datagen::UvOracle::from_corpus(corpus_root));
  return std::make_shared<na::CachedExtractor>(oracle, cache_dir);
}

double ablation_rank1(const std::vector<eval::AblationRow>& rows, const std::string& name, eval::Direction d,
                      const std::string& bucket) {
  for (const auto& r : rows)
    if (r.name == name && r.direction == d && r.bucket == bucket) return r.rank1;
  throw ValidationError("no ablation row " + name + " / " + std::string(eval::to_string(d)) + " / " + bucket);
}

// ---------------------------------------------------------------------------

namespace {

class Progress {
 public:
  explicit Progress(std::ostream* os) : os_(os) {}
  template <class... A>
  void operator()(const A&... a) {
    if (!os_) return;
    ((*os_) << ... << a) << std::endl;
  }

 private:
  std::ostream* os_;
};

void write_lines(const std::filesystem::path& p, const std::vector<std::string>& lines) {
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  write_text(p, text);
}

}  // namespace

BenchmarkResult run_benchmark(const RunConfig& rc, const std::filesystem::path& out, std::ostream* progress) {
  Progress say(progress);
  namespace fs = std::filesystem;
  const fs::path corpus_dir = out / "corpus";
  for (const char* d : {"train", "embed", "rank", "metrics", "report"}) fs::create_directories(out / d);
  say("generating corpus -> ", corpus_dir.string());
  datagen::generate_corpus(rc.gen, corpus_dir);
  write_provenance(out, rc, {corpus_dir / "manifest.jsonl", corpus_dir / "corpus.json"});

  const Corpus corpus = open_corpus(rc, corpus_dir);
  const auto extractor = corpus_extractor(corpus_dir, out / "uv_cache");
  BenchmarkResult res;

  std::array<std::unique_ptr<train::StreamRunner>, 3> runners;
  std::array<train::Dataset, 3> train_sets, test_sets;
  for (std::size_t s = 0; s < 3; ++s) {
    const StreamKind kind = kKinds[s];
    const auto& cfg = rc.stream(kind);
    const auto t0 = std::chrono::steady_clock::now();
    train_sets[s] = train::load_dataset(corpus.train, corpus_dir, cfg, needs_for(kind), extractor.get());
    test_sets[s] = train::load_dataset(corpus.test, corpus_dir, cfg, needs_for(kind), extractor.get());
    runners[s] = train::make_runner(kind, cfg);
    train::Heldout held;
    held.data = &test_sets[s];
    held.tracklets = &corpus.test;
    std::vector<std::string> log_lines;
    res.logs[s] = train::train_stream(*runners[s], train_sets[s], cfg, &held, [&](const train::EpochLog& e) {
      log_lines.push_back(train::epoch_log_json(e));
      say(stream_file_stem(kind), " ", log_lines.back());
    });
    write_lines(out / "train" / (stream_file_stem(kind) + "_log.jsonl"), log_lines);
    train::save_checkpoint(out / "train" / (stream_file_stem(kind) + ".ckpt"), kind, cfg, runners[s]->all_params());
    res.streams[s] = train::to_table(test_sets[s], runners[s]->embed(test_sets[s]));
    eval::write_embeddings(out / "embed" / (stream_file_stem(kind) + ".emb"), res.streams[s]);
    res.train_seconds[s] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    say(stream_file_stem(kind), " trained in ", res.train_seconds[s], " s");
  }

  {
    const auto& cfg = rc.stream(StreamKind::Fusion);
    const auto t0 = std::chrono::steady_clock::now();
    train::FusionInputs train_in, test_in;
    std::array<Eigen::Index, 3> dims{};
    for (std::size_t s = 0; s < 3; ++s) {
      train_in.streams[s] = runners[s]->embed(train_sets[s]);
      test_in.streams[s] = res.streams[s].rows;
      dims[s] = runners[s]->embed_dim();
    }
    auto fusion = train::make_fusion_runner(cfg, train_in, dims);
    train::Dataset fusion_train{train_sets[0].items, train_sets[0].classes};
    train::Dataset fusion_test{test_sets[0].items, test_sets[0].classes};
    std::vector<std::string> log_lines;
    res.logs[3] = train::train_stream(*fusion, fusion_train, cfg, nullptr, [&](const train::EpochLog& e) {
      log_lines.push_back(train::epoch_log_json(e));
    });
    write_lines(out / "train" / "fusion_log.jsonl", log_lines);
    train::save_checkpoint(out / "train" / "fusion.ckpt", StreamKind::Fusion, cfg, fusion->all_params());
    train::set_fusion_inputs(*fusion, test_in);
    res.weights = train::fusion_model(*fusion).weights();
    res.fused = train::to_table(fusion_test, fusion->embed(fusion_test));
    eval::write_embeddings(out / "embed" / "fusion.emb", res.fused);
    res.train_seconds[3] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto w = res.weights.weights();
    say("fusion weights ", w[0], " ", w[1], " ", w[2]);
  }

  // Per-stream reports and rank lists in both directions.
  for (eval::Direction dir : {eval::Direction::A2G, eval::Direction::G2A}) {
    eval::ProtocolSpec proto = rc.protocol;
    proto.direction = dir;
    proto.altitude.reset();
    const auto part = eval::partition(proto, corpus.test);
    const std::string tag(eval::to_string(dir));
    std::array<std::vector<fusion::RankedList>, 3> lists;
    for (std::size_t s = 0; s < 4; ++s) {
      const auto& table = s < 3 ? res.streams[s] : res.fused;
      const std::string name = stream_file_stem(kKinds[s]) + "_" + tag;
      res.reports[name] = eval::evaluate(proto, corpus.test, table);
      auto ranked = eval::rank_partition(part, table);
      fusion::write_rank_csv(out / "rank" / (name + ".csv"), ranked);
      if (s < 3) lists[s] = std::move(ranked);
    }
    std::vector<fusion::RankedList> fused;
    for (std::size_t q = 0; q < part.queries.size(); ++q) fused.push_back(fusion::rrf({lists[0][q], lists[1][q], lists[2][q]}));
    fusion::write_rank_csv(out / "rank" / ("rrf_" + tag + ".csv"), fused);
    res.reports["rrf_" + tag] = eval::evaluate_lists(proto, corpus.test, fused);
    ranking_figure(out / "report" / ("ranking_rrf_" + tag + ".png"), fused, corpus.test, corpus_dir, rc.figure_queries,
                   rc.figure_top);
  }
  for (const auto& [name, report] : res.reports) {
    write_text(out / "metrics" / (name + ".json"), eval::report_to_json(report).dump(2) + "\n");
    write_text(out / "metrics" / (name + ".txt"), eval::report_to_text(report));
  }

  res.ablation = eval::ablate(corpus.test, res.streams, rc.protocol.include_distractors, rc.per_altitude);
  write_text(out / "report" / "ablation.csv", eval::ablation_to_csv(res.ablation));
  write_text(out / "report" / "ablation.txt", eval::ablation_to_text(res.ablation));
  write_text(out / "report" / "ablation.json", eval::ablation_to_json(res.ablation).dump(2) + "\n");
  say(eval::ablation_to_text(res.ablation));
  return res;
}

}  // namespace agvp::pipeline
