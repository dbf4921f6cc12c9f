#include "spsel/commands.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <unistd.h>

#include "spsel/error.hpp"
#include "spsel/log.hpp"
#include "test_util.hpp"

namespace {

namespace cli = spsel::cli;
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using spsel::EmbeddingFile;
using spsel::Matrix;
using spsel::RunConfig;

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() / ("spsel_cmd_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& name) const { return path_ / name; }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

// Silences expected warnings for the duration of a test.
class QuietWarnings {
 public:
  QuietWarnings() { prev_ = spsel::set_warning_sink([this](const std::string& m) { messages.push_back(m); }); }
  ~QuietWarnings() { spsel::set_warning_sink(prev_); }
  std::vector<std::string> messages;

 private:
  spsel::WarningSink prev_;
};

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::vector<spsel::ManifestEntry> random_images(const TempDir& dir, std::size_t count, std::size_t n, std::size_t d,
                                                std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<spsel::ManifestEntry> out;
  for (std::size_t i = 0; i < count; ++i) {
    EmbeddingFile f;
    f.values = spsel::testing::random_matrix(n, d, rng);
    const std::string id = "img" + std::to_string(i);
    spsel::save_esf(dir / (id + ".esf"), f);
    out.push_back({id, dir / (id + ".esf")});
  }
  return out;
}

RunConfig rate_config(double rate) {
  RunConfig cfg;
  cfg.rate = rate;
  cfg.selector.h = 2;
  return cfg;
}

TEST(Sample, ErpPlan) {
  TempDir dir;
  cli::SampleRequest req;
  req.method = spsel::SamplingMethod::erp;
  req.width = 512;
  req.height = 256;
  req.plan_out = dir / "plan.json";
  const auto plan = cli::run_sample(req, RunConfig{});
  EXPECT_EQ(plan.locations.size(), 8u);
  const auto j = json::parse(spsel::read_file(req.plan_out));
  EXPECT_EQ(j["method"], "ERP");
  EXPECT_EQ(j["locations"].size(), 8u);
}

TEST(Sample, LatitudePlanEchoesLevels) {
  TempDir dir;
  cli::SampleRequest req;
  req.method = spsel::SamplingMethod::lat;
  req.plan_out = dir / "plan.json";
  cli::run_sample(req, RunConfig{});
  const auto j = json::parse(spsel::read_file(req.plan_out));
  EXPECT_EQ(j["params"]["levels"], 2);
  EXPECT_EQ(j["params"]["polar_latitude"], 10.0);

  RunConfig bad;
  bad.alpha0 = 15.0;
  EXPECT_THROW(cli::run_sample(req, bad), spsel::ConstraintError);
}

TEST(Sample, ScanpathsWithImageArchive) {
  TempDir dir;
  std::string csv = "image_id,scanpath_id,fixation_index,t,lat_deg,lon_deg\n";
  for (int s = 0; s < 3; ++s)
    for (int f = 0; f < 5; ++f) csv += "a," + std::to_string(s) + "," + std::to_string(f) + ",0.0,10,20\n";
  csv += "b,0,0,0.0,0,0\n";
  write_text(dir / "sp.csv", csv);

  spsel::ErpImage img(64, 32, 128.0);
  {
    std::ofstream out(dir / "img.ppm", std::ios::binary);
    spsel::write_ppm(out, img);
  }
  cli::SampleRequest req;
  req.method = spsel::SamplingMethod::sp;
  req.scanpaths = dir / "sp.csv";
  req.image_id = "a";
  req.image = dir / "img.ppm";
  req.plan_out = dir / "plan.json";
  req.patches_out = dir / "p.bin";
  RunConfig cfg;
  cfg.patch_size = 8;
  const auto plan = cli::run_sample(req, cfg);
  EXPECT_EQ(plan.locations.size(), 15u);
  const std::string archive = spsel::read_file(dir / "p.bin");
  EXPECT_EQ(archive.size(), 16u + 15 * 8 * 8 * 3);
  EXPECT_EQ(archive.substr(0, 4), "PAT1");
  EXPECT_EQ(static_cast<unsigned char>(archive[16]), 128);
  EXPECT_TRUE(fs::exists(dir / "p.bin.index.csv"));
}

TEST(Select, RateKeepsFourOfTen) {
  TempDir dir;
  const auto inputs = random_images(dir, 3, 10, 6, 1);
  const auto out = cli::run_select({inputs, dir / "out"}, rate_config(0.4));
  EXPECT_EQ(out.failures, 0u);
  for (const auto& img : out.report["images"]) {
    EXPECT_EQ(img["k"], 4);
    EXPECT_EQ(img["kept"].size(), 4u);
    EXPECT_EQ(img["scores"].size(), 10u);
  }
  const auto filtered = spsel::load_embeddings(dir / "out" / "img1.esf");
  const auto original = spsel::load_embeddings(inputs[1].path);
  ASSERT_EQ(filtered.values.rows(), 4u);
  const auto kept = out.report["images"][1]["kept"].get<std::vector<std::size_t>>();
  for (std::size_t r = 0; r < 4; ++r) {
    EXPECT_EQ(filtered.patch_ids[r], kept[r]);
    for (std::size_t c = 0; c < 6; ++c) EXPECT_EQ(filtered.values(r, c), original.values(kept[r], c));
  }
  EXPECT_EQ(spsel::read_manifest(dir / "out" / "manifest.csv").size(), 3u);
}

TEST(Select, HugeBetaKeepsFirstK) {
  TempDir dir;
  const auto inputs = random_images(dir, 1, 10, 6, 2);
  RunConfig cfg = rate_config(0.5);
  cfg.selector.beta = 1e9;
  const auto out = cli::run_select({inputs, dir / "out"}, cfg);
  const auto& img = out.report["images"][0];
  for (const auto& s : img["scores"]) EXPECT_EQ(s.get<double>(), 0.0);
  EXPECT_EQ(img["kept"].get<std::vector<std::size_t>>(), (std::vector<std::size_t>{0, 1, 2, 3, 4}));
}

TEST(Select, ReportIsIdenticalAcrossJobCounts) {
  TempDir dir;
  const auto inputs = random_images(dir, 8, 24, 8, 3);
  RunConfig cfg = rate_config(0.5);
  cfg.seed = 5;
  cfg.jobs = 1;
  cli::run_select({inputs, dir / "a"}, cfg);
  cfg.jobs = 8;
  cli::run_select({inputs, dir / "b"}, cfg);
  EXPECT_EQ(spsel::read_file(dir / "a" / "report.json"), spsel::read_file(dir / "b" / "report.json"));
  for (const auto& in : inputs) {
    EXPECT_EQ(spsel::read_file(dir / "a" / (in.image_id + ".esf")),
              spsel::read_file(dir / "b" / (in.image_id + ".esf")));
  }
}

TEST(Select, PerImageErrorsDoNotStopTheRun) {
  TempDir dir;
  QuietWarnings quiet;
  auto inputs = random_images(dir, 2, 10, 6, 4);
  write_text(dir / "broken.esf", "ESF2garbage");
  inputs.insert(inputs.begin() + 1, {"broken", dir / "broken.esf"});
  TempDir other;
  const auto small = random_images(other, 1, 1, 6, 5);
  inputs.push_back({"tiny", small[0].path});
  const auto out = cli::run_select({inputs, dir / "out"}, rate_config(0.4));
  EXPECT_EQ(out.failures, 2u);
  const auto& imgs = out.report["images"];
  ASSERT_EQ(imgs.size(), 4u);
  EXPECT_EQ(imgs[1]["image_id"], "broken");
  EXPECT_NE(imgs[1]["error"].get<std::string>().find("byte offset 0"), std::string::npos);
  EXPECT_TRUE(imgs[0]["error"].is_null());
  EXPECT_TRUE(imgs[2]["error"].is_null());
  EXPECT_NE(imgs[3]["error"].get<std::string>().find("h = 2"), std::string::npos);
  EXPECT_EQ(spsel::read_manifest(dir / "out" / "manifest.csv").size(), 2u);
}

TEST(Select, ReportRoundTripsThroughJson) {
  TempDir dir;
  const auto inputs = random_images(dir, 2, 12, 5, 6);
  const auto out = cli::run_select({inputs, dir / "out"}, rate_config(0.5));
  const auto back = json::parse(spsel::read_file(dir / "out" / "report.json"));
  EXPECT_EQ(back, out.report);
  EXPECT_EQ(back.dump(2) + "\n", spsel::read_file(dir / "out" / "report.json"));
  const auto scores = back["images"][0]["scores"].get<std::vector<double>>();
  EXPECT_EQ(scores, out.report["images"][0]["scores"].get<std::vector<double>>());
}

// Eight images, each a cloud of patches around its own centre; MOS tracks the centre.
struct QualityFixture {
  TempDir dir;
  std::vector<spsel::ManifestEntry> inputs;
  std::vector<double> mos;
  QualityFixture() {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> nd(0.0, 0.05);
    std::string mos_csv = "image_id,mos\n";
    for (std::size_t i = 0; i < 8; ++i) {
      const double m = 1.0 + 0.5 * static_cast<double>(i);
      EmbeddingFile f;
      f.values = Matrix(6, 3);
      for (std::size_t r = 0; r < 6; ++r) {
        f.values(r, 0) = m + nd(rng);
        f.values(r, 1) = -m + nd(rng);
        f.values(r, 2) = 1.0 + nd(rng);
      }
      const std::string id = "q" + std::to_string(i);
      spsel::save_esf(dir / (id + ".esf"), f);
      inputs.push_back({id, dir / (id + ".esf")});
      mos.push_back(m);
      mos_csv += id + "," + spsel::format_double(m) + "\n";
    }
    write_text(dir / "mos.csv", mos_csv);
  }
};

TEST(Quality, TrainPredictEvaluateOnTrainingSet) {
  QualityFixture fx;
  RunConfig cfg;
  cfg.train.learning_rate = 1e-3;
  cfg.train.epochs = 400;
  cfg.train.batch_size = 8;
  cfg.seed = 3;
  const auto trained = cli::run_train({fx.inputs, fx.dir / "mos.csv", fx.dir / "model.ckpt", fx.dir / "loss.csv"}, cfg);
  EXPECT_FALSE(trained.loss_curve.empty());

  cli::PredictRequest pr{fx.inputs, fx.dir / "model.ckpt", fx.dir / "pred.csv", fx.dir / "pooled.csv", fx.dir / "mos.csv"};
  const auto pooled = cli::run_predict(pr);
  ASSERT_EQ(pooled.size(), 8u);

  const auto metrics = cli::run_evaluate({fx.dir / "pooled.csv", std::nullopt, fx.dir / "metrics.json"});
  EXPECT_DOUBLE_EQ(metrics["srcc"].get<double>(), 1.0);
  EXPECT_EQ(metrics["n_images"], 8);
  EXPECT_TRUE(metrics.contains("plcc_raw"));
  EXPECT_GE(metrics["plcc_mapped"].get<double>(), metrics["plcc_raw"].get<double>() - 1e-9);
  EXPECT_TRUE(fs::exists(fx.dir / "metrics.json"));
}

TEST(Quality, EvaluateCopyAndTooFewImages) {
  TempDir dir;
  write_text(dir / "pooled.csv", "image_id,pmos,mos\na,1,1\nb,2,2\nc,3.5,3.5\nd,4,4\ne,2.5,2.5\nf,5,5\n");
  const auto m = cli::run_evaluate({dir / "pooled.csv", std::nullopt, std::nullopt});
  EXPECT_NEAR(m["plcc_mapped"].get<double>(), 1.0, 1e-9);

  write_text(dir / "two.csv", "image_id,pmos,mos\na,1,1\nb,2,2\n");
  EXPECT_THROW(cli::run_evaluate({dir / "two.csv", std::nullopt, std::nullopt}), spsel::InputError);
}

TEST(Quality, JoinErrorsListIds) {
  QualityFixture fx;
  write_text(fx.dir / "partial.csv", "image_id,mos\nq0,1\nq1,2\n");
  try {
    cli::run_train({fx.inputs, fx.dir / "partial.csv", fx.dir / "m.ckpt", std::nullopt}, RunConfig{});
    FAIL();
  } catch (const spsel::JoinError& e) {
    EXPECT_EQ(e.unmatched().size(), 6u);
    EXPECT_EQ(e.unmatched().front(), "q2");
  }
  write_text(fx.dir / "pooled.csv", "image_id,pmos,mos\na,1,\nb,2,2\n");
  write_text(fx.dir / "mos2.csv", "image_id,mos\nb,2\n");
  try {
    cli::run_evaluate({fx.dir / "pooled.csv", fx.dir / "mos2.csv", std::nullopt});
    FAIL();
  } catch (const spsel::JoinError& e) {
    EXPECT_EQ(e.unmatched(), (std::vector<std::string>{"a"}));
  }
}

TEST(Synth, DeterministicBytesAndTruth) {
  TempDir dir;
  RunConfig cfg;
  cfg.seed = 7;
  cli::SynthRequest req;
  req.out = dir / "a.esf";
  req.truth_out = dir / "a.json";
  const auto set = cli::run_synth(req, cfg);
  req.out = dir / "b.esf";
  req.truth_out = dir / "b.json";
  cli::run_synth(req, cfg);
  EXPECT_EQ(spsel::read_file(dir / "a.esf"), spsel::read_file(dir / "b.esf"));
  EXPECT_EQ(set.outliers.size(), 6u);
  const auto truth = json::parse(spsel::read_file(dir / "a.json"));
  EXPECT_EQ(truth["outliers"].get<std::vector<std::size_t>>(), set.outliers);
  EXPECT_FALSE(truth["trivial"].get<bool>());

  cfg.seed = 8;
  req.out = dir / "c.esf";
  cli::run_synth(req, cfg);
  EXPECT_NE(spsel::read_file(dir / "a.esf"), spsel::read_file(dir / "c.esf"));
}

TEST(Synth, NoOutliersIsTrivial) {
  TempDir dir;
  cli::SynthRequest req;
  req.outliers = 0;
  req.out = dir / "a.esf";
  req.truth_out = dir / "a.json";
  cli::run_synth(req, RunConfig{});
  const auto truth = json::parse(spsel::read_file(dir / "a.json"));
  EXPECT_TRUE(truth["trivial"].get<bool>());
  EXPECT_TRUE(truth.contains("note"));
  EXPECT_THROW(cli::generate_synthetic(5, 3, 5, 1), spsel::InputError);
}

TEST(Config, KeyValuesAndOverrides) {
  std::istringstream in(
      "# selection\n"
      "metric = man   # trailing comment\n"
      "alpha = 0.5\n"
      "h = 3\n"
      "rate = 0.4\n"
      "k = 7\n"
      "bandwidth = 2.5\n"
      "r_update = lagged\n"
      "polar_caps = false\n");
  RunConfig cfg;
  spsel::apply_key_values(cfg, spsel::parse_key_values(in));
  EXPECT_EQ(cfg.metric.kind, spsel::MetricKind::manhattan);
  EXPECT_EQ(cfg.selector.alpha, 0.5);
  EXPECT_EQ(cfg.selector.h, 3u);
  // Keys apply in sorted order; the later of rate/k wins.
  EXPECT_EQ(cfg.rate, 0.4);
  EXPECT_FALSE(cfg.k.has_value());
  EXPECT_EQ(cfg.bandwidth, 2.5);
  EXPECT_EQ(cfg.selector.r_update_mode, spsel::RUpdateMode::lagged_fixed_point);
  EXPECT_FALSE(cfg.polar_caps);

  RunConfig bad;
  EXPECT_THROW(spsel::apply_key_values(bad, {{"colour", "red"}}), spsel::InputError);
  EXPECT_THROW(spsel::apply_key_values(bad, {{"alpha", "abc"}}), spsel::InputError);
  std::istringstream noeq("just words\n");
  EXPECT_THROW(spsel::parse_key_values(noeq), spsel::InputError);
  RunConfig neither;
  EXPECT_THROW(neither.validate_selection(), spsel::InputError);
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(SPSEL_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, EndToEnd) {
  TempDir dir;
  const auto d = dir.path().string();
  EXPECT_EQ(run_cli("sample --lat --alpha0 10 --out " + d + "/plan.json", dir / "log1"), 0);
  EXPECT_NE(spsel::read_file(dir / "log1").find("N = 2, L_P = 10"), std::string::npos);
  EXPECT_EQ(json::parse(spsel::read_file(dir / "plan.json"))["locations"].size(), 200u);

  EXPECT_NE(run_cli("sample --lat --alpha0 7 --out " + d + "/bad.json", dir / "log2"), 0);
  EXPECT_NE(spsel::read_file(dir / "log2").find("360"), std::string::npos);

  EXPECT_EQ(run_cli("--seed 7 synth --out " + d + "/s.esf --truth " + d + "/t.json", dir / "log3"), 0);
  write_text(dir / "run.cfg", "h = 3\nbeta = 1e9\n");
  EXPECT_EQ(run_cli("--config " + d + "/run.cfg select --k 58 --beta 2 --out-dir " + d + "/sel " + d + "/s.esf",
                    dir / "log4"),
            0)
      << spsel::read_file(dir / "log4");
  const auto report = json::parse(spsel::read_file(dir / "sel" / "report.json"));
  EXPECT_EQ(report["params"]["h"], 3);
  EXPECT_EQ(report["params"]["beta"], 2.0);  // flag overrides config
  EXPECT_EQ(report["images"][0]["image_id"], "s");
  EXPECT_EQ(report["images"][0]["kept"].size(), 58u);

  EXPECT_NE(run_cli("select --rate 0.5 --k 3 " + d + "/s.esf", dir / "log5"), 0);
}

}  // namespace
