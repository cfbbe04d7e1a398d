#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "domainbank/checkpoint.hpp"
#include "domainbank/data.hpp"
#include "domainbank/png_io.hpp"

using namespace domainbank;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string root() {
  static std::string r = [] {
    auto d = fs::temp_directory_path() / ("dbcli_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d.string();
  }();
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

struct CliResult {
  int code = -1;
  std::string out;
};

CliResult run_cli(const std::string& args) {
  static int counter = 0;
  const std::string cap = root() + "/out_" + std::to_string(counter++) + ".txt";
  const std::string cmd =
      std::string(DOMAINBANK_BIN) + " " + args + " > " + cap + " 2>&1";
  const int rc = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  r.out = slurp(cap);
  return r;
}

json tiny_config() {
  return json{
      {"domains", {"a", "b"}},
      {"seed", 11},
      {"arch",
       {{"in_channels", 1}, {"channels", {2, 2, 2}}, {"enc_front_blocks", 1},
        {"shared_blocks", 1}, {"dec_back_blocks", 1}}},
      {"train", {{"steps", 6}, {"batch_size", 4}, {"checkpoint_every", 3}}},
      {"data", {{"kind", "synthetic-shapes"}, {"n_per_domain", 8}, {"size", 16}}},
  };
}

/// Shared 2-domain toy run; trained once, reused by translate/fuse cases.
const std::string& base_run() {
  static std::string dir = [] {
    const std::string d = root() + "/base";
    json cfg = tiny_config();
    cfg["out_dir"] = d;
    spit(root() + "/base.json", cfg.dump());
    auto r = run_cli("train " + root() + "/base.json");
    REQUIRE(r.code == 0);
    return d;
  }();
  return dir;
}

std::string probe_png() {
  static std::string path = [] {
    auto sets = synthetic_shapes(2, 3, 16, 99);
    const std::string p = root() + "/probe.png";
    write_png(p, sets[0].images[1].data(), 1, 16, 16);
    return p;
  }();
  return path;
}

int count_lines(const std::string& s) {
  return static_cast<int>(std::count(s.begin(), s.end(), '\n'));
}

}  // namespace

TEST_CASE("bad invocations exit 2, help exits 0") {
  CHECK(run_cli("").code == 2);
  CHECK(run_cli("--help").code == 0);
  CHECK(run_cli("frobnicate").code == 2);
  auto r = run_cli("train " + root() + "/missing.json");
  CHECK(r.code == 2);
  CHECK(r.out.find("missing.json") != std::string::npos);

  // config with an unknown key is a validation failure
  spit(root() + "/typo.json", R"({"domains": ["a","b"], "sped": 1})");
  r = run_cli("train " + root() + "/typo.json");
  CHECK(r.code == 2);
  CHECK(r.out.find("sped") != std::string::npos);
}

TEST_CASE("train writes history, checkpoints, and sample sheets") {
  const std::string& dir = base_run();
  const auto csv = slurp(dir + "/history.csv");
  CHECK(count_lines(csv) == 7);  // header + one row per step
  CHECK(csv.rfind("step,", 0) == 0);
  CHECK(fs::exists(dir + "/ck_3.ck"));
  CHECK(fs::exists(dir + "/ck_6.ck"));
  CHECK(fs::exists(dir + "/final.ck"));
  CHECK(fs::exists(dir + "/recon_a_step3.png"));
  CHECK(fs::exists(dir + "/recon_b_step6.png"));
  CHECK(fs::exists(dir + "/translate_step6.png"));

  auto ck = load_checkpoint(dir + "/final.ck");
  CHECK(ck.meta.step == 6);
  CHECK(ck.meta.kind == "joint");
  CHECK(ck.model.domain_names() == std::vector<std::string>{"a", "b"});
}

TEST_CASE("identical config and seed reproduce the checkpoint byte for byte") {
  json cfg = tiny_config();
  cfg["out_dir"] = root() + "/rerun";
  spit(root() + "/rerun.json", cfg.dump());
  REQUIRE(run_cli("train " + root() + "/rerun.json").code == 0);
  CHECK(slurp(root() + "/rerun/final.ck") == slurp(base_run() + "/final.ck"));

  // a --seed override changes the outcome
  json cfg2 = tiny_config();
  cfg2["out_dir"] = root() + "/reseed";
  spit(root() + "/reseed.json", cfg2.dump());
  REQUIRE(run_cli("--seed 12 train " + root() + "/reseed.json").code == 0);
  CHECK(slurp(root() + "/reseed/final.ck") != slurp(base_run() + "/final.ck"));
}

TEST_CASE("translate maps domains, reconstructs on from==to, and is idempotent") {
  const std::string ck = base_run() + "/final.ck";
  const std::string out1 = root() + "/t1.png";
  auto r = run_cli("translate " + ck + " " + probe_png() + " a b " + out1);
  REQUIRE(r.code == 0);
  auto img = read_png(out1);
  CHECK(img.h == 16);
  CHECK(img.w == 16);
  CHECK(img.c == 1);

  const std::string out2 = root() + "/t2.png";
  REQUIRE(run_cli("translate " + ck + " " + probe_png() + " a b " + out2).code == 0);
  CHECK(slurp(out1) == slurp(out2));

  REQUIRE(run_cli("translate " + ck + " " + probe_png() + " a a " + root() + "/r.png")
              .code == 0);

  r = run_cli("translate " + ck + " " + probe_png() + " a zebra " + root() + "/z.png");
  CHECK(r.code == 2);
  CHECK(r.out.find("zebra") != std::string::npos);
  CHECK(r.out.find("a, b") != std::string::npos);  // lists what the bank has
}

TEST_CASE("fuse sweeps between two target decoders with exact endpoints") {
  const std::string ck = base_run() + "/final.ck";
  auto dup = run_cli("fuse " + ck + " " + probe_png() + " a b b --out-dir " + root());
  CHECK(dup.code == 2);

  const std::string fdir = root() + "/fuse";
  auto r = run_cli("fuse " + ck + " " + probe_png() + " b a a --steps 3 --out-dir " +
                   fdir);
  // two distinct targets are required; b->(a,a) is rejected before that
  CHECK(r.code == 2);

  // a 2-domain bank can still sweep a->(b,a)? no: ends must differ, use b,a
  r = run_cli("fuse " + ck + " " + probe_png() + " a b a --steps 3 --out-dir " + fdir);
  REQUIRE(r.code == 0);
  const std::string strip_path = fdir + "/fuse_a_to_b-a_3.png";
  CHECK(r.out.find(strip_path) != std::string::npos);
  auto strip = read_png(strip_path);
  CHECK(strip.w == 3 * 16);
  CHECK(strip.h == 16);

  // the pure-b end of the sweep equals the translate output exactly
  REQUIRE(run_cli("translate " + ck + " " + probe_png() + " a b " + root() + "/ab.png")
              .code == 0);
  auto ab = read_png(root() + "/ab.png");
  for (std::int64_t i = 0; i < 16 * 16; ++i) {
    const std::int64_t y = i / 16, x = i % 16;
    CHECK(strip.pixels[y * 48 + 2 * 16 + x] == ab.pixels[i]);  // last panel is b
  }
}

TEST_CASE("incr-add grows the bank without touching frozen parameters") {
  json cfg = tiny_config();
  cfg["mode"] = "incremental";
  cfg["domains"] = {"a", "b", "c"};
  cfg["new_domain"] = "c";
  cfg["train"] = {{"steps", 4}, {"batch_size", 4}, {"checkpoint_every", 0}};
  cfg["out_dir"] = root() + "/incr";
  spit(root() + "/incr.json", cfg.dump());

  const std::string base_ck = base_run() + "/final.ck";
  const auto base_bytes = slurp(base_ck);
  const std::string new_ck = root() + "/grown.ck";
  auto r = run_cli("incr-add " + base_ck + " " + root() + "/incr.json " + new_ck);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("frozen parameters: unchanged") != std::string::npos);
  CHECK(slurp(base_ck) == base_bytes);  // source untouched

  auto before = load_checkpoint(base_ck);
  auto after = load_checkpoint(new_ck);
  CHECK(after.model.num_domains() == 3);
  CHECK(after.model.param_count_total() ==
        before.model.param_count_total() + after.model.param_count_per_domain());

  // pre-existing translation paths are bit-identical through the grown bank
  REQUIRE(run_cli("translate " + base_ck + " " + probe_png() + " a b " + root() +
                  "/old_ab.png")
              .code == 0);
  REQUIRE(run_cli("translate " + new_ck + " " + probe_png() + " a b " + root() +
                  "/new_ab.png")
              .code == 0);
  CHECK(slurp(root() + "/old_ab.png") == slurp(root() + "/new_ab.png"));

  // duplicate domain name is rejected
  json dup = cfg;
  dup["domains"] = {"a", "b2", "b"};
  dup["new_domain"] = "b";
  dup["out_dir"] = root() + "/incr_dup";
  spit(root() + "/incr_dup.json", dup.dump());
  r = run_cli("incr-add " + base_ck + " " + root() + "/incr_dup.json " + root() +
              "/dup.ck");
  CHECK(r.code == 2);
  CHECK(r.out.find("already has domain") != std::string::npos);
}

TEST_CASE("params tabulates counts from a config or a checkpoint") {
  base_run();  // guarantees base.json and final.ck exist
  auto r = run_cli("params " + root() + "/base.json --n 2,3,4");
  REQUIRE(r.code == 0);
  CHECK(count_lines(r.out) == 5);  // header + 3 rows + footer
  CHECK(r.out.find("pairwise") != std::string::npos);

  r = run_cli("params " + base_run() + "/final.ck --n 5");
  REQUIRE(r.code == 0);
  CHECK(count_lines(r.out) == 3);

  spit(root() + "/garbage.bin", "PK\x03\x04 woo");
  CHECK(run_cli("params " + root() + "/garbage.bin").code == 2);
}

TEST_CASE("adaptation runs train, evaluate, and reject label-free misuse") {
  json cfg{{"mode", "adaptation"},
           {"domains", {"s", "t"}},
           {"seed", 21},
           {"out_dir", root() + "/ada"},
           {"arch",
            {{"in_channels", 1}, {"channels", {2, 2, 2}}, {"enc_front_blocks", 1},
             {"shared_blocks", 1}, {"dec_back_blocks", 1}, {"clf_hidden", 4}}},
           {"train", {{"steps", 4}, {"batch_size", 4}, {"checkpoint_every", 0}}},
           {"data", {{"kind", "synthetic-glyphs"}, {"n_per_class", 8}, {"size", 16}}},
           {"adaptation",
            {{"source", "s"}, {"target", "t"}, {"augment_after", 100}}}};
  spit(root() + "/ada.json", cfg.dump());
  auto r = run_cli("train " + root() + "/ada.json");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("task s->t") != std::string::npos);
  CHECK(r.out.find("accuracy") != std::string::npos);
  const auto csv = slurp(root() + "/ada/history.csv");
  CHECK(csv.rfind("step,pair,vae_kl,vae_recon,gan_d,gan_g,clf,total", 0) == 0);
  CHECK(count_lines(csv) == 5);

  auto ck = load_checkpoint(root() + "/ada/final.ck");
  CHECK(ck.meta.kind == "adaptation");
  CHECK(ck.meta.da_source == 0);
  CHECK(ck.meta.da_target == 1);

  // evaluation test set: class-index directories of PNGs
  auto gd = synthetic_glyphs(8, 16, 5);
  const std::string tdir = root() + "/testset";
  for (std::size_t i = 0; i < gd.target_test.set.images.size(); ++i) {
    const int cls = gd.target_test.labels[i];
    fs::create_directories(tdir + "/" + std::to_string(cls));
    write_png(tdir + "/" + std::to_string(cls) + "/img" + std::to_string(i) + ".png",
              gd.target_test.set.images[i].data(), 1, 16, 16);
  }
  r = run_cli("eval-da " + root() + "/ada/final.ck " + tdir);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("task s->t, accuracy ") != std::string::npos);
  CHECK(r.out.find("n_test " + std::to_string(gd.target_test.set.size())) !=
        std::string::npos);
  auto again = run_cli("eval-da " + root() + "/ada/final.ck " + tdir);
  CHECK(again.out == r.out);

  // joint checkpoints cannot be evaluated as adaptation runs
  r = run_cli("eval-da " + base_run() + "/final.ck " + tdir);
  CHECK(r.code == 2);
  CHECK(r.out.find("joint") != std::string::npos);

  // an empty test tree is a user error
  fs::create_directories(root() + "/emptyset");
  CHECK(run_cli("eval-da " + root() + "/ada/final.ck " + root() + "/emptyset").code == 2);
}
