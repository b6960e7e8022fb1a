#include <algorithm>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"

#include "cfpn/cli.hpp"
#include "cfpn/dataset.hpp"
#include "cfpn/error.hpp"
#include "cfpn/netpbm.hpp"
#include "test_util.hpp"

using namespace cfpn;
using cfpn::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "cfpn");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

// A 32x32 dataset of two samples, plus the train arguments for a short run.
struct Workspace {
  TempDir dir{"cli"};
  Workspace() { REQUIRE(cli({"synth", "--count", "2", "--size", "32", "--seed", "3", "--out", (dir / "data").string()}).code == 0); }
  fs::path manifest() const { return dir / "data/train.json"; }
  std::vector<std::string> train_args(const std::string& out) const {
    return {"train",  "--manifest", manifest().string(), "--input-size", "32", "--steps", "2",
            "--batch-size", "1", "--out", (dir / out).string()};
  }
};

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("usage errors exit 2") {
    CHECK(cli({}).code == kExitUsage);
    CHECK(cli({"bogus"}).code == kExitUsage);
    CHECK(cli({"train", "--steps", "x"}).code == kExitUsage);
    CHECK(cli({"infer"}).code == kExitUsage);
    CHECK(cli({"train", "--config", "/nonexistent/config.json"}).code == kExitUsage);
    CHECK(cli({"--help"}).code == kExitOk);
  }

  TEST_CASE("missing manifest exits 2 with a message") {
    TempDir dir("cli_nomanifest");
    const CliRun r = cli({"train", "--out", dir.path().string()});
    CHECK(r.code == kExitUsage);
    CHECK(r.err.find("manifest") != std::string::npos);
    const CliRun r2 = cli({"train", "--manifest", (dir / "absent.json").string(), "--out", dir.path().string()});
    CHECK(r2.code == kExitUsage);
  }

  TEST_CASE("config validation names the offending field") {
    TempDir dir("cli_config");
    write(dir / "unknown.json", R"({"seed": 1, "learning_rate": 0.1})");
    CliRun r = cli({"train", "--config", (dir / "unknown.json").string()});
    CHECK(r.code == kExitUsage);
    CHECK(r.err.find("unknown field 'learning_rate'") != std::string::npos);

    write(dir / "variant.json", R"({"cfa_variant": "E"})");
    r = cli({"train", "--config", (dir / "variant.json").string()});
    CHECK(r.code == kExitUsage);
    CHECK(r.err.find("config field 'cfa_variant'") != std::string::npos);

    write(dir / "levels.json", R"({"cfd_levels": "3,1"})");
    r = cli({"train", "--config", (dir / "levels.json").string()});
    CHECK(r.code == kExitUsage);
    CHECK(r.err.find("config field 'cfd_levels'") != std::string::npos);

    write(dir / "lr.json", R"({"lr": -1})");
    r = cli({"train", "--config", (dir / "lr.json").string()});
    CHECK(r.code == kExitUsage);
    CHECK(r.err.find("lr") != std::string::npos);

    write(dir / "type.json", R"({"steps": "many"})");
    r = cli({"train", "--config", (dir / "type.json").string()});
    CHECK(r.code == kExitUsage);
    CHECK(r.err.find("config field 'steps'") != std::string::npos);

    CHECK(cli({"train", "--cfa-variant", "Z"}).code == kExitUsage);
  }

  TEST_CASE("config files, flags and defaults") {
    const RunConfig d;
    CHECK(d.input_size == 96);
    CHECK(d.batch_size == 2);
    CHECK(d.steps == 2000);
    CHECK(d.adam.lr == 1e-3);

    TempDir dir("cli_cfg");
    write(dir / "c.json", R"({"seed": 7, "cfa_variant": "B", "cfd_levels": "none", "manifest": "m.json", "out": "o"})");
    const RunConfig c = load_config_file(dir / "c.json");
    CHECK(c.seed == 7);
    CHECK(c.cfa == CfaVariant::kNonLearnable);
    CHECK_FALSE(c.cfd.has_value());
    CHECK(c.manifest == dir / "m.json");
    CHECK(c.out == dir / "o");
    CHECK(c.model_config().describe() == "B/none");

    // Serialised configs load back unchanged.
    const RunConfig round = apply_config_json(to_json(c));
    CHECK(to_json(round) == to_json(c));

    CHECK(parse_cfd_levels("0,2")->active_levels == std::vector<int>{0, 2});
    CHECK_FALSE(parse_cfd_levels("none").has_value());
    CHECK_THROWS_AS(parse_cfd_levels("7"), ConfigError);
    RunConfig zero;
    zero.steps = 0;
    CHECK_THROWS_AS(zero.train_config(), ConfigError);
  }

  TEST_CASE("synth writes a manifest and rejects bad sizes") {
    TempDir dir("cli_synth");
    CHECK(cli({"synth", "--count", "2", "--size", "32", "--split", "test", "--out", dir.path().string()}).code == 0);
    CHECK(read_manifest(dir / "test.json").entries.size() == 2);
    const CliRun r = cli({"synth", "--count", "1", "--size", "48", "--out", dir.path().string()});
    CHECK(r.code == kExitUsage);
    CHECK(r.err.find("32") != std::string::npos);
  }

  TEST_CASE("train, infer and eval pipeline") {
    Workspace ws;
    const CliRun t = cli(ws.train_args("run"));
    REQUIRE(t.code == kExitOk);
    const std::string csv = slurp(ws.dir / "run/loss.csv");
    CHECK(csv.rfind("step,joint_loss,global_loss,local_loss\n1,", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
    CHECK(fs::exists(ws.dir / "run/checkpoint.bin"));
    const auto summary = nlohmann::json::parse(slurp(ws.dir / "run/summary.json"));
    CHECK(summary.at("steps") == 2);
    CHECK(summary.at("model") == "D/0,1,2,3,4");
    CHECK(summary.at("config").at("input_size") == 32);

    // Same seed twice: byte-identical outputs.
    REQUIRE(cli(ws.train_args("run2")).code == kExitOk);
    CHECK(slurp(ws.dir / "run2/loss.csv") == csv);
    CHECK(slurp(ws.dir / "run2/checkpoint.bin") == slurp(ws.dir / "run/checkpoint.bin"));

    const std::string ckpt = (ws.dir / "run/checkpoint.bin").string();
    const std::string img0 = (ws.dir / "data/images/train_0000.ppm").string();
    const std::string img1 = (ws.dir / "data/images/train_0001.ppm").string();
    const CliRun inf = cli({"infer", "--checkpoint", ckpt, "--emit-global", "--out", (ws.dir / "pred").string(), img0, img1});
    REQUIRE(inf.code == kExitOk);
    CHECK(fs::exists(ws.dir / "pred/train_0000.pgm"));
    CHECK(fs::exists(ws.dir / "pred/train_0001_global.pgm"));
    const Raster r = read_raster(ws.dir / "pred/train_0000.pgm");
    CHECK(r.width == 32);
    CHECK(r.height == 32);
    CHECK(r.channels == 1);
    REQUIRE(cli({"infer", "--checkpoint", ckpt, "--out", (ws.dir / "pred2").string(), img0}).code == kExitOk);
    CHECK(slurp(ws.dir / "pred2/train_0000.pgm") == slurp(ws.dir / "pred/train_0000.pgm"));
    CHECK_FALSE(fs::exists(ws.dir / "pred2/train_0000_global.pgm"));

    // Manifest-driven inference.
    REQUIRE(cli({"infer", "--checkpoint", ckpt, "--manifest", ws.manifest().string(), "--out", (ws.dir / "pred3").string()})
                .code == kExitOk);
    CHECK(fs::exists(ws.dir / "pred3/train_0001.pgm"));

    // Eval skips the *_global maps and writes both reports.
    const CliRun ev = cli({"eval", "--pred-dir", (ws.dir / "pred").string(), "--gt-dir", (ws.dir / "data/masks").string(),
                           "--out", (ws.dir / "eval").string()});
    REQUIRE(ev.code == kExitOk);
    const auto report = nlohmann::json::parse(slurp(ws.dir / "eval/report.json"));
    CHECK(report.at("num_images") == 2);
    CHECK(report.at("mae").get<double>() >= 0.0);
    CHECK(std::count(std::istreambuf_iterator<char>(std::ifstream(ws.dir / "eval/pr.csv").rdbuf()), {}, '\n') == 257);

    // The variant flags reach the model.
    auto a_args = ws.train_args("run_a");
    a_args.insert(a_args.end(), {"--cfa-variant", "A", "--cfd-levels", "none"});
    REQUIRE(cli(a_args).code == kExitOk);
    CHECK(nlohmann::json::parse(slurp(ws.dir / "run_a/summary.json")).at("model") == "A/none");
  }

  TEST_CASE("eval against the masks themselves and their inverses") {
    TempDir dir("cli_eval");
    REQUIRE(cli({"synth", "--count", "3", "--size", "32", "--out", dir.path().string()}).code == 0);
    fs::create_directories(dir / "inv");
    for (const auto& e : fs::directory_iterator(dir / "masks")) {
      Raster r = read_raster(e.path());
      for (auto& p : r.pixels) p = p >= 128 ? 0 : 255;
      write_raster(dir / "inv" / e.path().filename(), r);
    }
    REQUIRE(cli({"eval", "--pred-dir", (dir / "masks").string(), "--gt-dir", (dir / "masks").string(), "--out",
                 (dir / "same").string()})
                .code == 0);
    auto j = nlohmann::json::parse(slurp(dir / "same/report.json"));
    CHECK(j.at("max_f").get<double>() == 1.0);
    CHECK(j.at("mae").get<double>() == 0.0);
    REQUIRE(cli({"eval", "--pred-dir", (dir / "inv").string(), "--gt-dir", (dir / "masks").string(), "--out",
                 (dir / "inverse").string(), "--aggregation", "dataset"})
                .code == 0);
    j = nlohmann::json::parse(slurp(dir / "inverse/report.json"));
    CHECK(j.at("mae").get<double>() == 1.0);
    CHECK(j.at("aggregation") == "dataset");
  }

  TEST_CASE("eval reports unmatched file names") {
    TempDir dir("cli_mismatch");
    fs::create_directories(dir / "p");
    fs::create_directories(dir / "g");
    write_saliency(dir / "p/a.pgm", Tensor({1, 2, 2}));
    write_saliency(dir / "p/b.pgm", Tensor({1, 2, 2}));
    write_saliency(dir / "g/a.pgm", Tensor({1, 2, 2}));
    write_saliency(dir / "g/c.pgm", Tensor({1, 2, 2}));
    const CliRun r = cli({"eval", "--pred-dir", (dir / "p").string(), "--gt-dir", (dir / "g").string(), "--out",
                          (dir / "o").string()});
    CHECK(r.code == kExitUsage);
    CHECK(r.err.find("b.pgm") != std::string::npos);
    CHECK(r.err.find("c.pgm") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "o/report.json"));
  }

  TEST_CASE("inference rejects sizes outside the backbone contract") {
    Workspace ws;
    REQUIRE(cli(ws.train_args("run")).code == kExitOk);
    write_image(ws.dir / "odd.ppm", Tensor({3, 40, 32}, 0.5));
    const CliRun r = cli({"infer", "--checkpoint", (ws.dir / "run/checkpoint.bin").string(), "--out",
                          (ws.dir / "p").string(), (ws.dir / "odd.ppm").string()});
    CHECK(r.code == kExitUsage);
    CHECK(r.err.find("multiple") != std::string::npos);

    // A constant grey image of a valid size gives a valid map of equal size.
    write_image(ws.dir / "grey.ppm", Tensor({3, 64, 32}, 0.5));
    REQUIRE(cli({"infer", "--checkpoint", (ws.dir / "run/checkpoint.bin").string(), "--out", (ws.dir / "p").string(),
                 (ws.dir / "grey.ppm").string()})
                .code == kExitOk);
    const Raster g = read_raster(ws.dir / "p/grey.pgm");
    CHECK(g.height == 64);
    CHECK(g.width == 32);

    // Training samples must match input_size.
    auto args = ws.train_args("wrong");
    args[4] = "64";
    CHECK(cli(args).code == kExitUsage);

    // Corrupt images are decode errors.
    write(ws.dir / "broken.ppm", "P6\n32 32\n255\n");
    const CliRun b = cli({"infer", "--checkpoint", (ws.dir / "run/checkpoint.bin").string(), "--out",
                          (ws.dir / "p").string(), (ws.dir / "broken.ppm").string()});
    CHECK(b.code == kExitUsage);
    CHECK(b.err.find("at byte") != std::string::npos);
  }

  TEST_CASE("a diverging run exits 3") {
    Workspace ws;
    auto args = ws.train_args("diverge");
    args.insert(args.end(), {"--lr", "1e300", "--no-augment"});
    args[6] = "3";
    const CliRun r = cli(args);
    CHECK(r.code == kExitNumeric);
    CHECK(r.err.find("non-finite") != std::string::npos);
  }

  TEST_CASE("gradcheck subcommand") {
    TempDir dir("cli_gc");
    const CliRun r = cli({"gradcheck", "--ops-only", "--out", dir.path().string()});
    CHECK(r.code == kExitOk);
    CHECK(r.out.find("PASS") != std::string::npos);
    CHECK(r.out.find("conv2d_3x3_bias") != std::string::npos);
    const auto j = nlohmann::json::parse(slurp(dir / "gradcheck.json"));
    CHECK(j.at("passed") == true);
    const CliRun strict = cli({"gradcheck", "--ops-only", "--tolerance", "1e-30"});
    CHECK(strict.code == kExitCheckFailed);
    CHECK(strict.err.find("worst offender") != std::string::npos);
  }
}
