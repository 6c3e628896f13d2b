#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <sstream>

#include "simspoof/checkpoint.hpp"
#include "simspoof/config.hpp"
#include "simspoof/trainer.hpp"

using namespace simspoof;
namespace fs = std::filesystem;

namespace {

const char* kTiny = R"(
segment_length = 400
sinc.filters = 8
sinc.kernel = 33
encoder.blocks = 2
encoder.filters = 2, 4
encoder.gru_hidden = 4
encoder.embed_dim = 6
relation.hidden = 8
episode.n_types = 3
episode.k_shot = 2
batch_size = 10
lr = 0.003
epochs = 2
synth.train_attacks = 3
synth.eval_attacks = 1
synth.samples_per_class = 6
synth.dev_samples_per_class = 4
)";

TrainConfig tiny(const std::string& extra = "") {
  return TrainConfig::from_key_values(KeyValues::parse_text(std::string(kTiny) + extra));
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("simspoof_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string score_text(const ScoreSet& s) {
  std::ostringstream os;
  write_scores(os, s);
  return os.str();
}

}  // namespace

TEST_CASE("config parsing") {
  const KeyValues kv = KeyValues::parse_text("a = 1\n# comment\nb = x y  # trailing\na = 2\n");
  KeyValues copy = kv;
  CHECK(copy.get("a", std::size_t{0}) == 2);
  CHECK(copy.get("b", std::string()) == "x y");
  CHECK_NOTHROW(copy.reject_unused());
  KeyValues unused = kv;
  unused.get("a", std::size_t{0});
  CHECK_THROWS_WITH(unused.reject_unused(), doctest::Contains("b"));
  CHECK_THROWS(KeyValues::parse_text("novalue\n"));
  KeyValues typed = KeyValues::parse_text("n = abc\n");
  CHECK_THROWS(typed.get("n", 1.0));
}

TEST_CASE("train config validation and round trip") {
  const TrainConfig cfg = tiny();
  CHECK(cfg.episodic());
  CHECK(cfg.encoder.filters_per_block == std::vector<std::size_t>{2, 4});
  const TrainConfig again = TrainConfig::from_key_values(KeyValues::parse_text(cfg.to_text()));
  CHECK(again.to_text() == cfg.to_text());

  CHECK_THROWS_WITH(tiny("batch_size = 12\n"), doctest::Contains("N*K + 2K"));
  CHECK_THROWS_WITH(tiny("encoder.blockz = 3\n"), doctest::Contains("encoder.blockz"));
  CHECK_THROWS(tiny("loss = focal\n"));
  CHECK_THROWS(tiny("loss = aam+mse\nsampler = shuffled\n"));
  CHECK_NOTHROW(tiny("loss = wce\nbatch_size = 7\n"));

  const TrainConfig defaults;
  CHECK(defaults.lambda_balance == 1.0);
  CHECK(defaults.lr_floor == 0.0);
  CHECK(defaults.n_types == 6);
  CHECK(defaults.k_shot == 2);
}

TEST_CASE("step losses with lambda 0 equal the aam mode under the same sampler") {
  const TrainConfig joint = tiny("lambda_balance = 0\nepochs = 1\n");
  const TrainConfig plain = tiny("loss = aam\nsampler = episodic\nepochs = 1\n");
  const Corpus corpus = load_data(joint.data);
  Model a(joint, 5), b(plain, 5);
  const TrainResult ra = train(a, corpus), rb = train(b, corpus);
  REQUIRE(ra.steps.size() == rb.steps.size());
  for (std::size_t i = 0; i < ra.steps.size(); ++i) {
    CHECK(ra.steps[i].aam == rb.steps[i].aam);
    CHECK(ra.steps[i].total == rb.steps[i].total);
  }
}

TEST_CASE("single-threaded training is bitwise reproducible") {
  const TrainConfig cfg = tiny("epochs = 1\n");
  const Corpus c1 = load_data(cfg.data), c2 = load_data(cfg.data);
  std::vector<std::vector<std::size_t>> s1, s2;
  TrainHooks h1, h2;
  h1.on_batch = [&](const std::vector<std::size_t>& r) { s1.push_back(r); };
  h2.on_batch = [&](const std::vector<std::size_t>& r) { s2.push_back(r); };
  Model a(cfg, 3), b(cfg, 3);
  const TrainResult ra = train(a, c1, h1), rb = train(b, c2, h2);
  CHECK(s1 == s2);
  REQUIRE(ra.steps.size() == rb.steps.size());
  CHECK(std::memcmp(ra.steps.data(), rb.steps.data(), ra.steps.size() * sizeof(StepLosses)) == 0);
  CHECK(ra.log[0].loss.total == rb.log[0].loss.total);
}

TEST_CASE("parallel kernels leave training bitwise unchanged") {
  const TrainConfig serial = tiny("epochs = 1\n");
  const TrainConfig parallel = tiny("epochs = 1\nparallel = true\n");
  const Corpus corpus = load_data(serial.data);
  Model a(serial, 4), b(parallel, 4);
  const TrainResult ra = train(a, corpus), rb = train(b, corpus);
  REQUIRE(ra.steps.size() == rb.steps.size());
  for (std::size_t i = 0; i < ra.steps.size(); ++i) CHECK(ra.steps[i].total == rb.steps[i].total);
}

TEST_CASE("checkpoint round trip reproduces score bytes") {
  const TrainConfig cfg = tiny("epochs = 1\n");
  const Corpus corpus = load_data(cfg.data);
  Model model(cfg, 2);
  train(model, corpus);
  const auto eval = corpus.indices(Partition::eval);
  const std::string before = score_text(score_records(model, corpus, eval));
  CHECK(std::count(before.begin(), before.end(), '\n') == static_cast<long>(eval.size()));
  CHECK(score_text(score_records(model, corpus, eval)) == before);

  const fs::path dir = scratch("ckpt");
  save_model((dir / "m.ckpt").string(), model);
  auto loaded = load_model((dir / "m.ckpt").string());
  TrainConfig expect = cfg;
  expect.seed = 2;
  CHECK(loaded->config().to_text() == expect.to_text());
  CHECK(score_text(score_records(*loaded, corpus, eval)) == before);
}

TEST_CASE("checkpoint shape mismatches are named") {
  const TrainConfig cfg = tiny();
  Model model(cfg, 1);
  std::stringstream io;
  save_checkpoint(io, cfg.to_text(), model.params);
  const CheckpointData data = read_checkpoint(io);

  Model wider(tiny("encoder.embed_dim = 7\n"), 1);
  CHECK_THROWS_WITH(restore_parameters(data, wider.params), doctest::Contains("fc.weight"));
  std::istringstream junk("NOTACKPT");
  CHECK_THROWS(read_checkpoint(junk));
}

TEST_CASE("overfit tiny model separates its own training data") {
  const TrainConfig cfg =
      tiny("epochs = 20\nloss = wce\nbatch_size = 8\nlr = 0.01\nsinc.filters = 16\nencoder.filters = 4, 8\nencoder.gru_hidden = 8\n");
  const Corpus corpus = load_data(cfg.data);
  Model model(cfg, 1);
  train(model, corpus);
  CHECK(compute_eer(score_records(model, corpus, corpus.indices(Partition::train))).eer <= 0.05);
}

TEST_CASE("non-finite loss aborts with step diagnostics") {
  const TrainConfig cfg = tiny("lr = 1e300\nepochs = 1\n");
  const Corpus corpus = load_data(cfg.data);
  Model model(cfg, 1);
  CHECK_THROWS_WITH(train(model, corpus), doctest::Contains("non-finite value at epoch 0 step"));
}

TEST_CASE("too little data is an error") {
  const TrainConfig cfg = tiny("synth.samples_per_class = 1\n");
  const Corpus corpus = load_data(cfg.data);
  Model model(cfg, 1);
  CHECK_THROWS_AS(train(model, corpus), std::invalid_argument);
}

TEST_CASE("tiny pipeline loss falls over the first epochs for most seeds") {
  const TrainConfig cfg = tiny(
      "epochs = 15\nsegment_length = 800\nsynth.samples_per_class = 15\nsynth.dev_samples_per_class = 5\n");
  const Corpus corpus = load_data(cfg.data);
  REQUIRE(corpus.indices(Partition::train).size() == 60);
  int good = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Model model(cfg, seed);
    const TrainResult r = train(model, corpus);
    bool falling = true;
    for (std::size_t e = 1; e < 5; ++e) falling = falling && r.log[e].loss.total < r.log[e - 1].loss.total;
    good += falling;
  }
  CHECK(good >= 4);
}
