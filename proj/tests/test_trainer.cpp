#include <doctest.h>

#include "agvp/trainer.hpp"
#include "support/testing.hpp"

#include <nlohmann/json.hpp>

#include <fstream>

using namespace agvp;
using namespace agvp::train;
using agvp::testing::Gen;

namespace {

/// Linear embedding of fixed per-item features.
class ToyRunner final : public StreamRunner {
 public:
  ToyRunner(Mat features, Eigen::Index out, std::uint64_t seed) : x_(std::move(features)) {
    nn::Rng rng(seed);
    proj_ = nn::Linear(store_, "proj", x_.cols(), out, rng);
  }
  StreamKind kind() const override { return StreamKind::Temporal; }
  std::vector<nn::ParamStore*> trainable() override { return {&store_}; }
  std::vector<const nn::ParamStore*> all_params() const override { return {&store_}; }
  std::vector<nn::ParamStore*> stores() override { return {&store_}; }
  Eigen::Index embed_dim() const override { return proj_.weight->cols(); }
  Var forward_train(const Dataset&, const std::vector<std::size_t>& batch, nn::Rng&) override {
    std::vector<Eigen::Index> idx(batch.begin(), batch.end());
    return proj_(nn::gather_rows(nn::constant(x_), idx));
  }
  Mat embed(const Dataset&) const override {
    nn::NoGradGuard ng;
    return proj_(nn::constant(x_))->value;
  }

 private:
  Mat x_;
  nn::ParamStore store_;
  nn::Linear proj_;
};

/// `ids` identities with `per` items each; features are a class centre plus noise.
std::pair<Dataset, Mat> toy_data(int ids, int per, Eigen::Index dim, double noise, std::uint64_t seed) {
  Gen g(seed);
  const Mat centres = g.matrix(ids, dim);
  Dataset d;
  Mat x(ids * per, dim);
  for (int i = 0; i < ids; ++i) {
    d.classes.push_back("P" + std::to_string(i));
    for (int k = 0; k < per; ++k) {
      Item it;
      it.label = i;
      d.items.push_back(std::move(it));
      x.row(i * per + k) = centres.row(i) + noise * g.matrix(1, dim);
    }
  }
  return {std::move(d), x};
}

TrainConfig toy_config() {
  TrainConfig c;
  c.lr = 0.02;
  c.weight_decay = 0.0;
  c.batch_identities = 4;
  c.batch_instances = 2;
  return c;
}

}  // namespace

TEST_CASE("learning rate schedules") {
  TrainConfig c;
  c.lr = 1.0;
  c.warmup_epochs = 3;
  c.decay_epochs = {20};
  c.decay_factor = 0.1;
  CHECK(learning_rate(c, 0) == 0.25);
  CHECK(learning_rate(c, 2.5) == 3.5 / 4);
  CHECK(learning_rate(c, 3) == 1.0);
  CHECK(learning_rate(c, 19.9) == 1.0);
  CHECK(learning_rate(c, 20) == doctest::Approx(0.1).epsilon(1e-15));
  c.schedule = Schedule::Cosine;
  c.warmup_epochs = 0;
  c.epochs = 10;
  CHECK(learning_rate(c, 0) == 1.0);
  CHECK(learning_rate(c, 5) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(learning_rate(c, 10) == doctest::Approx(0.0));
}

TEST_CASE("adamw") {
  Gen g(1);
  SUBCASE("zero learning rate leaves parameters unchanged") {
    auto p = nn::parameter(g.matrix(3, 2));
    const Mat before = p->value;
    p->grad = g.matrix(3, 2);
    AdamW opt({p});
    opt.step(0.0, 0.5);
    CHECK(p->value == before);
  }
  SUBCASE("zero gradient with decay scales by exactly 1 - lr*wd") {
    auto p = nn::parameter(g.matrix(3, 2));
    const Mat before = p->value;
    p->grad = Mat::Zero(3, 2);
    AdamW opt({p});
    opt.step(0.1, 0.25);
    CHECK(p->value == before * (1.0 - 0.1 * 0.25));
  }
  SUBCASE("first step moves each coordinate by about lr against the gradient sign") {
    auto p = nn::parameter(Mat::Zero(1, 3));
    p->grad = (Mat(1, 3) << 2.0, -0.5, 1e-3).finished();
    AdamW opt({p});
    opt.step(0.01, 0.0);
    CHECK(p->value(0, 0) == doctest::Approx(-0.01).epsilon(1e-6));
    CHECK(p->value(0, 1) == doctest::Approx(0.01).epsilon(1e-6));
    CHECK(p->value(0, 2) == doctest::Approx(-0.01).epsilon(1e-4));
    CHECK(opt.steps() == 1);
  }
}

TEST_CASE("pk sampler") {
  CHECK_THROWS_AS(PkSampler({0, 0, 1, 1}, 1, 2), SamplerError);
  CHECK_THROWS_AS(PkSampler({0, 0, 1, 2, 3}, 2, 2), SamplerError);
  const PkSampler s({0, 0, 0, 1, 1, 2, 2, 2, 2, 3}, 2, 3);
  nn::Rng rng(3);
  const auto batches = s.epoch(rng);
  REQUIRE(!batches.empty());
  std::vector<int> labels{0, 0, 0, 1, 1, 2, 2, 2, 2, 3};
  for (const auto& b : batches) {
    CHECK(b.size() % 3 == 0);
    std::map<int, int> count;
    for (auto i : b) ++count[labels[i]];
    CHECK(count.size() >= 2);
    CHECK_FALSE(count.contains(3));  // single-item identity never sampled
    for (auto [l, c] : count) CHECK(c == 3);
  }
}

TEST_CASE("batch-hard triplet values") {
  const Var e = nn::constant((Mat(4, 1) << 0, 1, 3, 5).finished());
  const std::vector<int> labels{0, 0, 1, 1};
  // Per anchor: (1-3+3), (1-2+3), (2-2+3), (2-4+3).
  CHECK(batch_hard_triplet(e, labels, 3.0)->value(0, 0) == doctest::Approx(7.0 / 4).epsilon(1e-9));
  CHECK(batch_hard_triplet(e, labels, 0.0)->value(0, 0) == doctest::Approx(0.0).epsilon(1e-9));
  const std::vector<int> one{0, 0, 0, 0};
  CHECK(batch_hard_triplet(e, one, 1.0)->value(0, 0) == 0.0);
  CHECK_THROWS_AS(batch_hard_triplet(e, std::vector<int>{0, 1}, 1.0), ShapeError);
}

TEST_CASE("toy training lowers the loss and is deterministic") {
  auto [data, x] = toy_data(8, 4, 6, 0.3, 4);
  const auto cfg = toy_config();
  ToyRunner a(x, 4, 5), b(x, 4, 5);
  const auto ra = train_steps(a, data, cfg, 50);
  const auto rb = train_steps(b, data, cfg, 50);
  CHECK(ra.final_loss < ra.initial_loss);
  double head = 0, tail = 0;
  for (int i = 0; i < 10; ++i) {
    head += ra.log[static_cast<std::size_t>(i)].total;
    tail += ra.log[static_cast<std::size_t>(40 + i)].total;
  }
  CHECK(tail < head);
  CHECK(ra.final_loss == rb.final_loss);
  CHECK(a.embed(data) == b.embed(data));
  CHECK_THROWS_AS(train_steps(a, data, cfg, -1), ValidationError);
}

TEST_CASE("fusion training down-weights a pure-noise stream") {
  auto [data, clean] = toy_data(10, 4, 8, 0.2, 6);
  Gen g(7);
  FusionInputs in;
  in.streams[0] = clean;
  in.streams[1] = g.matrix(clean.rows(), 8);
  in.streams[2] = clean + 0.2 * g.matrix(clean.rows(), 8);
  auto cfg = toy_config();
  cfg.fused_dim = 8;
  cfg.lr = 0.05;
  auto runner = make_fusion_runner(cfg, in, {8, 8, 8});
  train_steps(*runner, data, cfg, 150);
  const auto w = fusion_model(*runner).weights().weights();
  INFO(w[0] << " " << w[1] << " " << w[2]);
  CHECK(w[1] < w[0]);
  CHECK(w[1] < w[2]);
  CHECK_THROWS_AS(fusion_model(*std::make_unique<ToyRunner>(clean, 2, 1)), ValidationError);
}

TEST_CASE("checkpoint round trip and failure modes") {
  Gen g(8);
  const auto dir = agvp::testing::scratch_dir("ckpt");
  nn::ParamStore s;
  s.add("a", g.matrix(3, 4));
  s.add("b", g.matrix(1, 5));
  const TrainConfig cfg;
  save_checkpoint(dir / "m.ckpt", StreamKind::Appearance, cfg, {&s});

  const auto ck = load_checkpoint(dir / "m.ckpt");
  CHECK(ck.version == kCheckpointVersion);
  CHECK(ck.stream == StreamKind::Appearance);
  CHECK(ck.config == cfg);
  nn::ParamStore t;
  t.add("a", Mat::Zero(3, 4));
  t.add("b", Mat::Zero(1, 5));
  apply_checkpoint(ck, {&t});
  CHECK(t.find("a")->value == s.find("a")->value);
  CHECK(t.find("b")->value == s.find("b")->value);

  SUBCASE("mismatch lists every problem") {
    nn::ParamStore u;
    u.add("a", Mat::Zero(4, 3));
    u.add("c", Mat::Zero(1, 1));
    try {
      apply_checkpoint(ck, {&u});
      FAIL("expected CheckpointError");
    } catch (const CheckpointError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("'a' has shape 3x4, expected 4x3") != std::string::npos);
      CHECK(msg.find("missing 'c'") != std::string::npos);
      CHECK(msg.find("unexpected 'b'") != std::string::npos);
    }
  }
  SUBCASE("truncated file") {
    fs::copy_file(dir / "m.ckpt", dir / "t.ckpt", fs::copy_options::overwrite_existing);
    fs::resize_file(dir / "t.ckpt", fs::file_size(dir / "t.ckpt") - 8);
    CHECK_THROWS_AS(load_checkpoint(dir / "t.ckpt"), CheckpointError);
  }
  SUBCASE("unsupported version") {
    std::ifstream in(dir / "m.ckpt", std::ios::binary);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    data.replace(0, data.find('\n'), "AGVPCKPT 2");
    std::ofstream(dir / "v.ckpt", std::ios::binary) << data;
    try {
      load_checkpoint(dir / "v.ckpt");
      FAIL("expected CheckpointError");
    } catch (const CheckpointError& e) {
      CHECK(std::string(e.what()).find("version 2") != std::string::npos);
    }
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "absent.ckpt"), IoError);
}

TEST_CASE("train config json") {
  TrainConfig c;
  c.lr = 0.125;
  c.schedule = Schedule::Cosine;
  c.msa.blocks = 3;
  CHECK(train_config_from_json(train_config_to_json(c)) == c);
  try {
    train_config_from_json(nlohmann::json{{"learning_rate", 0.1}});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("learning_rate") != std::string::npos);
  }
  CHECK_THROWS_AS(train_config_from_json(nlohmann::json{{"msa", {{"depth", 2}}}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json(nlohmann::json{{"batch_instances", 1}}), ConfigError);
  CHECK(stream_from_string("fusion") == StreamKind::Fusion);
  CHECK_THROWS_AS(stream_from_string("4"), ConfigError);
}

TEST_CASE("identity split keeps aerial-only identities in test") {
  std::vector<Tracklet> ts;
  auto add = [&](const std::string& id, const std::string& person, Platform p) {
    Tracklet t;
    t.tracklet_id = TrackletId(id);
    t.person_id = PersonId(person);
    t.camera_id = CameraId("c");
    t.platform = p;
    t.altitude = p == Platform::Aerial ? AltitudeBucket::A30 : AltitudeBucket::Ground;
    t.session = SessionId("s");
    t.clothing_id = ClothingId("k");
    t.frames = {"f.png"};
    ts.push_back(t);
  };
  for (int i = 0; i < 6; ++i) {
    const std::string p = "P" + std::to_string(i);
    add(p + "g", p, Platform::CCTV);
    add(p + "a", p, Platform::Aerial);
  }
  add("Da", "D", Platform::Aerial);
  const auto [train_set, test_set] = split_by_identity(ts, 0.5);
  std::set<std::string> tr, te;
  for (const auto& t : train_set) tr.insert(t.person_id.str());
  for (const auto& t : test_set) te.insert(t.person_id.str());
  CHECK(!tr.empty());
  CHECK(!te.empty());
  for (const auto& p : tr) CHECK_FALSE(te.contains(p));
  CHECK(te.contains("D"));
  CHECK(train_set.size() + test_set.size() == ts.size());
}
