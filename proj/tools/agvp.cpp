// agvp: synthetic corpus generation, per-stream training, embedding,
// ranking, fusion, evaluation, ablation and reporting.

#include "agvp/pipeline.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace agvp;
using pipeline::RunConfig;
using train::StreamKind;

namespace {

struct Options {
  std::string command;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string stream;
  std::string protocol;
  std::string altitude;
  std::string distractors;
  std::string input;
};

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
}

RunConfig resolve(const Options& o) {
  const fs::path cfg_path(o.config);
  RunConfig rc = pipeline::load_run_config(o.config.empty() ? nullptr : &cfg_path, pipeline::agvp_environment());
  nlohmann::json j = pipeline::run_config_to_json(rc);
  if (o.seed) j["seed"] = *o.seed;
  if (!o.protocol.empty()) j["protocol"]["direction"] = o.protocol;
  if (!o.altitude.empty()) {
    if (o.altitude == "all") j["protocol"]["altitude"] = "all";
    else j["protocol"]["altitude"] = std::stoi(o.altitude);
  }
  if (!o.distractors.empty()) j["protocol"]["distractors"] = o.distractors == "on";
  return pipeline::run_config_from_json(j);
}

fs::path out_dir(const Options& o, const fs::path& fallback) {
  const fs::path p = o.out.empty() ? fallback : fs::path(o.out);
  fs::create_directories(p);
  return p;
}

std::vector<fs::path> with_config(const Options& o, std::vector<fs::path> inputs) {
  if (!o.config.empty()) inputs.insert(inputs.begin(), o.config);
  return inputs;
}

StreamKind required_stream(const Options& o) {
  if (o.stream.empty()) throw ConfigError("--stream is required for " + o.command);
  return train::stream_from_string(o.stream);
}

fs::path train_dir(const RunConfig& rc) { return rc.paths.work / "train"; }
fs::path embed_dir(const RunConfig& rc) { return rc.paths.work / "embed"; }
fs::path rank_dir(const RunConfig& rc) { return rc.paths.work / "rank"; }
fs::path metrics_dir(const RunConfig& rc) { return rc.paths.work / "metrics"; }
fs::path ckpt_path(const RunConfig& rc, StreamKind k) { return train_dir(rc) / (pipeline::stream_file_stem(k) + ".ckpt"); }
fs::path emb_path(const RunConfig& rc, StreamKind k) { return embed_dir(rc) / (pipeline::stream_file_stem(k) + ".emb"); }

constexpr std::array<StreamKind, 3> kStreams{StreamKind::Temporal, StreamKind::Appearance, StreamKind::MultiScale};

std::unique_ptr<train::StreamRunner> restore(const fs::path& ckpt_file, StreamKind kind) {
  const auto ck = train::load_checkpoint(ckpt_file);
  if (ck.stream != kind) throw CheckpointError(ckpt_file.string() + " holds stream " + std::string(train::to_string(ck.stream)));
  auto runner = train::make_runner(kind, ck.config);
  train::apply_checkpoint(ck, runner->stores());
  return runner;
}

void jsonl(const fs::path& p, const std::vector<std::string>& lines) {
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  write_text(p, text);
}

int cmd_gen(const Options& o, const RunConfig& rc) {
  const fs::path out = out_dir(o, rc.paths.corpus);
  datagen::generate_corpus(rc.gen, out);
  pipeline::write_provenance(out, rc, with_config(o, {}));
  std::cout << "corpus written to " << out.string() << "\n";
  return 0;
}

int cmd_train(const Options& o, const RunConfig& rc) {
  const StreamKind kind = required_stream(o);
  const fs::path out = out_dir(o, train_dir(rc));
  const auto corpus = pipeline::open_corpus(rc, rc.paths.corpus);
  const auto extractor = pipeline::corpus_extractor(rc.paths.corpus, rc.paths.work / "uv_cache");
  const auto& cfg = rc.stream(kind);
  std::vector<std::string> log;
  auto on_epoch = [&](const train::EpochLog& e) {
    log.push_back(train::epoch_log_json(e));
    std::cout << log.back() << "\n" << std::flush;
  };
  std::vector<fs::path> inputs{rc.paths.corpus / "manifest.jsonl"};

  if (kind != StreamKind::Fusion) {
    const auto train_set = train::load_dataset(corpus.train, corpus.root, cfg, pipeline::needs_for(kind), extractor.get());
    const auto test_set = train::load_dataset(corpus.test, corpus.root, cfg, pipeline::needs_for(kind), extractor.get());
    auto runner = train::make_runner(kind, cfg);
    train::Heldout held;
    held.data = &test_set;
    held.tracklets = &corpus.test;
    held.protocol = rc.protocol;
    held.protocol.altitude.reset();
    train::train_stream(*runner, train_set, cfg, &held, on_epoch);
    train::save_checkpoint(out / (pipeline::stream_file_stem(kind) + ".ckpt"), kind, cfg, runner->all_params());
  } else {
    train::FusionInputs in;
    std::array<Eigen::Index, 3> dims{};
    train::Dataset base;
    for (std::size_t s = 0; s < 3; ++s) {
      inputs.push_back(ckpt_path(rc, kStreams[s]));
      auto runner = restore(ckpt_path(rc, kStreams[s]), kStreams[s]);
      const auto& scfg = rc.stream(kStreams[s]);
      const auto data = train::load_dataset(corpus.train, corpus.root, scfg, pipeline::needs_for(kStreams[s]), extractor.get());
      in.streams[s] = runner->embed(data);
      dims[s] = runner->embed_dim();
      if (s == 0) base.classes = data.classes;
      if (s == 0)
        for (const auto& it : data.items) base.items.push_back(train::Item{it.tracklet, it.label, {}, std::nullopt});
    }
    auto fusion = train::make_fusion_runner(cfg, in, dims);
    train::train_stream(*fusion, base, cfg, nullptr, on_epoch);
    train::save_checkpoint(out / "fusion.ckpt", kind, cfg, fusion->all_params());
    const auto w = train::fusion_model(*fusion).weights().weights();
    std::cout << "fusion weights " << w[0] << " " << w[1] << " " << w[2] << "\n";
  }
  jsonl(out / (pipeline::stream_file_stem(kind) + "_log.jsonl"), log);
  pipeline::write_provenance(out, rc, with_config(o, inputs));
  return 0;
}

int cmd_embed(const Options& o, const RunConfig& rc) {
  const StreamKind kind = required_stream(o);
  const fs::path out = out_dir(o, embed_dir(rc));
  const auto corpus = pipeline::open_corpus(rc, rc.paths.corpus);
  std::vector<fs::path> inputs{rc.paths.corpus / "manifest.jsonl", ckpt_path(rc, kind)};
  eval::EmbeddingTable table;
  if (kind != StreamKind::Fusion) {
    auto runner = restore(ckpt_path(rc, kind), kind);
    const auto extractor = pipeline::corpus_extractor(rc.paths.corpus, rc.paths.work / "uv_cache");
    const auto data =
        train::load_dataset(corpus.test, corpus.root, rc.stream(kind), pipeline::needs_for(kind), extractor.get());
    table = train::to_table(data, runner->embed(data));
  } else {
    const auto ck = train::load_checkpoint(ckpt_path(rc, kind));
    train::FusionInputs in;
    std::array<Eigen::Index, 3> dims{};
    std::vector<std::string> ids;
    for (std::size_t s = 0; s < 3; ++s) {
      inputs.push_back(emb_path(rc, kStreams[s]));
      const auto t = eval::read_embeddings(emb_path(rc, kStreams[s]));
      if (s == 0) ids = t.ids;
      else if (t.ids != ids) throw ValidationError("stream embedding files list different tracklets");
      in.streams[s] = t.rows;
      dims[s] = t.rows.cols();
    }
    auto fusion = train::make_fusion_runner(ck.config, in, dims);
    train::apply_checkpoint(ck, fusion->stores());
    train::Dataset d;
    for (const auto& id : ids) {
      auto it = std::find_if(corpus.manifest.tracklets.begin(), corpus.manifest.tracklets.end(),
                             [&](const Tracklet& t) { return t.tracklet_id.str() == id; });
      if (it == corpus.manifest.tracklets.end()) throw ValidationError("embedding id " + id + " is not in the manifest");
      d.items.push_back(train::Item{&*it, 0, {}, std::nullopt});
    }
    table = train::to_table(d, fusion->embed(d));
  }
  eval::write_embeddings(out / (pipeline::stream_file_stem(kind) + ".emb"), table);
  pipeline::write_provenance(out, rc, with_config(o, inputs));
  return 0;
}

std::vector<StreamKind> requested_or_all(const Options& o) {
  if (!o.stream.empty()) return {train::stream_from_string(o.stream)};
  return {StreamKind::Temporal, StreamKind::Appearance, StreamKind::MultiScale, StreamKind::Fusion};
}

int cmd_rank(const Options& o, const RunConfig& rc) {
  const fs::path out = out_dir(o, rank_dir(rc));
  const auto corpus = pipeline::open_corpus(rc, rc.paths.corpus);
  const auto part = eval::partition(rc.protocol, corpus.test);
  std::vector<fs::path> inputs{rc.paths.corpus / "manifest.jsonl"};
  for (StreamKind k : requested_or_all(o)) {
    if (o.stream.empty() && !fs::exists(emb_path(rc, k))) continue;
    inputs.push_back(emb_path(rc, k));
    const auto table = eval::read_embeddings(emb_path(rc, k));
    fusion::write_rank_csv(out / (pipeline::stream_file_stem(k) + "_" + rc.protocol.name() + ".csv"),
                           eval::rank_partition(part, table));
  }
  pipeline::write_provenance(out, rc, with_config(o, inputs));
  return 0;
}

int cmd_fuse(const Options& o, const RunConfig& rc) {
  const fs::path out = out_dir(o, rank_dir(rc));
  std::vector<StreamKind> members(kStreams.begin(), kStreams.end());
  if (rc.fuse_mode == pipeline::FuseMode::FeatureRrf) members.push_back(StreamKind::Fusion);
  std::vector<std::vector<fusion::RankedList>> per;
  std::vector<fs::path> inputs;
  for (StreamKind k : members) {
    const fs::path p = rank_dir(rc) / (pipeline::stream_file_stem(k) + "_" + rc.protocol.name() + ".csv");
    inputs.push_back(p);
    per.push_back(fusion::read_rank_csv(p));
    if (per.back().size() != per.front().size()) throw ValidationError(p.string() + " ranks a different query set");
  }
  std::vector<fusion::RankedList> fused;
  for (std::size_t q = 0; q < per.front().size(); ++q) {
    std::vector<fusion::RankedList> parts;
    for (const auto& lists : per) {
      if (lists[q].query_id != per.front()[q].query_id) throw ValidationError("rank files list queries in different orders");
      parts.push_back(lists[q]);
    }
    fused.push_back(fusion::rrf(parts));
  }
  const std::string stem = rc.fuse_mode == pipeline::FuseMode::Rrf ? "rrf" : "feature_rrf";
  fusion::write_rank_csv(out / (stem + "_" + rc.protocol.name() + ".csv"), fused);
  pipeline::write_provenance(out, rc, with_config(o, inputs));
  return 0;
}

int cmd_eval(const Options& o, const RunConfig& rc) {
  const fs::path out = out_dir(o, metrics_dir(rc));
  const auto corpus = pipeline::open_corpus(rc, rc.paths.corpus);
  fs::path input;
  std::string label;
  if (!o.input.empty()) {
    input = o.input;
    label = input.stem().string();
  } else {
    const StreamKind k = required_stream(o);
    input = emb_path(rc, k);
    label = pipeline::stream_file_stem(k);
  }
  eval::MetricsReport report;
  if (input.extension() == ".csv") report = eval::evaluate_lists(rc.protocol, corpus.test, fusion::read_rank_csv(input));
  else report = eval::evaluate(rc.protocol, corpus.test, eval::read_embeddings(input));
  const std::string stem = "metrics_" + label + "_" + rc.protocol.name();
  write_text(out / (stem + ".json"), eval::report_to_json(report).dump(2) + "\n");
  write_text(out / (stem + ".txt"), eval::report_to_text(report));
  std::cout << eval::report_to_text(report);
  pipeline::write_provenance(out, rc, with_config(o, {rc.paths.corpus / "manifest.jsonl", input}));
  return 0;
}

int cmd_ablate(const Options& o, const RunConfig& rc) {
  const fs::path out = out_dir(o, rc.paths.work / "report");
  const auto corpus = pipeline::open_corpus(rc, rc.paths.corpus);
  std::array<eval::EmbeddingTable, 3> tables;
  std::vector<fs::path> inputs{rc.paths.corpus / "manifest.jsonl"};
  for (std::size_t s = 0; s < 3; ++s) {
    inputs.push_back(emb_path(rc, kStreams[s]));
    tables[s] = eval::read_embeddings(emb_path(rc, kStreams[s]));
  }
  const auto rows = eval::ablate(corpus.test, tables, rc.protocol.include_distractors, rc.per_altitude);
  write_text(out / "ablation.csv", eval::ablation_to_csv(rows));
  write_text(out / "ablation.txt", eval::ablation_to_text(rows));
  write_text(out / "ablation.json", eval::ablation_to_json(rows).dump(2) + "\n");
  std::cout << eval::ablation_to_text(rows);
  pipeline::write_provenance(out, rc, with_config(o, inputs));
  return 0;
}

int cmd_report(const Options& o, const RunConfig& rc) {
  const fs::path out = out_dir(o, rc.paths.work / "report");
  std::vector<fs::path> metric_files;
  if (fs::exists(metrics_dir(rc)))
    for (const auto& e : fs::directory_iterator(metrics_dir(rc)))
      if (e.path().extension() == ".json" && e.path().filename() != "run_config.json" &&
          e.path().filename() != "inputs.json")
        metric_files.push_back(e.path());
  std::sort(metric_files.begin(), metric_files.end());
  if (metric_files.empty()) throw IoError("no metrics files under " + metrics_dir(rc).string());

  std::string text, csv = "report,bucket,rank1,rank5,rank10,mAP,queries,valid_queries,gallery\n";
  nlohmann::json summary = nlohmann::json::object();
  for (const auto& p : metric_files) {
    std::ifstream in(p, std::ios::binary);
    const auto report = eval::report_from_json(nlohmann::json::parse(in));
    const std::string name = p.stem().string();
    text += "== " + name + " ==\n" + eval::report_to_text(report) + "\n";
    for (const auto& b : report.buckets) {
      std::ostringstream row;
      row << name << ',' << b.bucket << ',' << b.rank1 << ',' << b.rank5 << ',' << b.rank10 << ',' << b.mAP << ','
          << b.queries << ',' << b.valid_queries << ',' << b.gallery << '\n';
      csv += row.str();
    }
    summary[name] = eval::report_to_json(report);
  }
  const fs::path ablation = rc.paths.work / "report" / "ablation.txt";
  if (fs::exists(ablation) && fs::absolute(ablation) != fs::absolute(out / "ablation.txt")) {
    std::ifstream in(ablation, std::ios::binary);
    text += "== ablation ==\n" + std::string(std::istreambuf_iterator<char>(in), {});
    metric_files.push_back(ablation);
  }
  write_text(out / "summary.txt", text);
  write_text(out / "summary.csv", csv);
  write_text(out / "summary.json", summary.dump(2) + "\n");

  const auto corpus = pipeline::open_corpus(rc, rc.paths.corpus);
  if (fs::exists(rank_dir(rc))) {
    std::vector<fs::path> ranks;
    for (const auto& e : fs::directory_iterator(rank_dir(rc)))
      if (e.path().extension() == ".csv") ranks.push_back(e.path());
    std::sort(ranks.begin(), ranks.end());
    for (const auto& r : ranks) {
      pipeline::ranking_figure(out / ("ranking_" + r.stem().string() + ".png"), fusion::read_rank_csv(r), corpus.test,
                               corpus.root, rc.figure_queries, rc.figure_top);
      metric_files.push_back(r);
    }
  }
  std::cout << text;
  pipeline::write_provenance(out, rc, with_config(o, metric_files));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Aerial-ground video person re-identification toolkit"};
  app.require_subcommand(1);
  Options o;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"gen", "write a synthetic tracklet corpus"},
      {"train", "train one stream (1, 2, 3) or the fusion head"},
      {"embed", "write embeddings of the held-out split"},
      {"rank", "write per-stream rank lists"},
      {"fuse", "reciprocal rank fusion of stream rank lists"},
      {"eval", "CMC / mAP for embeddings or rank lists"},
      {"ablate", "St-1 ... St-123 table in both directions"},
      {"report", "summary tables and ranking figures"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", o.config, "run config (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "seed for generation and training");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--stream", o.stream, "stream")->check(CLI::IsMember({"1", "2", "3", "fusion"}));
    sub->add_option("--protocol", o.protocol, "evaluation direction")->check(CLI::IsMember({"a2g", "g2a"}));
    sub->add_option("--altitude", o.altitude, "altitude bucket")->check(CLI::IsMember({"all", "15", "30", "80", "120"}));
    sub->add_option("--distractors", o.distractors, "G2A distractor identities")->check(CLI::IsMember({"on", "off"}));
    if (name == "eval") sub->add_option("--input", o.input, "embedding (.emb) or rank list (.csv) to evaluate");
    sub->callback([&o, n = name] { o.command = n; });
  }
  CLI11_PARSE(app, argc, argv);

  try {
    const RunConfig rc = resolve(o);
    if (o.command == "gen") return cmd_gen(o, rc);
    if (o.command == "train") return cmd_train(o, rc);
    if (o.command == "embed") return cmd_embed(o, rc);
    if (o.command == "rank") return cmd_rank(o, rc);
    if (o.command == "fuse") return cmd_fuse(o, rc);
    if (o.command == "eval") return cmd_eval(o, rc);
    if (o.command == "ablate") return cmd_ablate(o, rc);
    if (o.command == "report") return cmd_report(o, rc);
  } catch (const agvp::Error& e) {
    std::cerr << nlohmann::json{{"error", e.kind()}, {"message", e.what()}}.dump() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", "internal"}, {"message", e.what()}}.dump() << "\n";
    return 3;
  }
  return 1;
}
