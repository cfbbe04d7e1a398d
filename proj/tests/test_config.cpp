#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <cstdint>
#include <filesystem>
#include <fstream>

#include "domainbank/config.hpp"

using namespace domainbank;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string temp_dir() {
  static int counter = 0;
  auto d = fs::temp_directory_path() /
           ("dbcfg_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  fs::create_directories(d);
  return d.string();
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

json minimal() {
  return json{{"domains", {"a", "b"}}};
}

void be32(std::string& s, std::uint32_t v) {
  s.push_back(static_cast<char>(v >> 24));
  s.push_back(static_cast<char>((v >> 16) & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
  s.push_back(static_cast<char>(v & 0xff));
}

// 8x8 single-image IDX file, optional matching single-label file
void write_idx_pair(const std::string& img_path, const std::string& lab_path,
                    std::int64_t n) {
  std::string img;
  be32(img, 0x803);
  be32(img, static_cast<std::uint32_t>(n));
  be32(img, 8);
  be32(img, 8);
  for (std::int64_t i = 0; i < n * 64; ++i)
    img.push_back(static_cast<char>((i * 37) & 0xff));
  spit(img_path, img);
  if (!lab_path.empty()) {
    std::string lab;
    be32(lab, 0x801);
    be32(lab, static_cast<std::uint32_t>(n));
    for (std::int64_t i = 0; i < n; ++i) lab.push_back(static_cast<char>(i % 3));
    spit(lab_path, lab);
  }
}

}  // namespace

TEST_CASE("defaults fill every field the document omits") {
  auto c = parse_run_config(minimal());
  CHECK(c.mode == "joint");
  CHECK(c.seed == 0);
  CHECK(c.out_dir == "run");
  CHECK(c.domains == std::vector<std::string>{"a", "b"});
  CHECK(c.data.kind == "synthetic-shapes");
  CHECK(c.arch == ArchConfig{});
  CHECK(c.train.steps == 500);
  CHECK(c.train.weights.vae_recon == 100.0);
  c.arch.in_channels = 1;
  c.validate();  // minimal config is runnable
}

TEST_CASE("unknown keys are rejected at every level") {
  auto with = [](json j, const char* key) {
    j[key] = 1;
    return j;
  };
  CHECK_THROWS_WITH_AS(parse_run_config(with(minimal(), "speed")),
                       doctest::Contains("unknown key \"speed\""), config_error);
  json j = minimal();
  j["arch"] = {{"chanels", {8, 16}}};
  CHECK_THROWS_WITH_AS(parse_run_config(j), doctest::Contains("chanels"), config_error);
  j = minimal();
  j["train"] = {{"step", 4}};
  CHECK_THROWS_AS(parse_run_config(j), config_error);
  j = minimal();
  j["train"] = {{"adam", {{"learning_rate", 0.1}}}};
  CHECK_THROWS_AS(parse_run_config(j), config_error);
  j = minimal();
  j["train"] = {{"weights", {{"gan2", 0.1}}}};
  CHECK_THROWS_AS(parse_run_config(j), config_error);
  j = minimal();
  j["data"] = {{"kind", "synthetic-shapes"}, {"entries", json::array()}};
  CHECK_THROWS_AS(parse_run_config(j), config_error);
  j = minimal();
  j["adaptation"] = {{"source", "a"}, {"target", "b"}};
  CHECK_THROWS_WITH_AS(parse_run_config(j), doctest::Contains("adaptation"), config_error);
}

TEST_CASE("wrong value types are named") {
  json j = minimal();
  j["seed"] = "lots";
  CHECK_THROWS_WITH_AS(parse_run_config(j), doctest::Contains("seed"), config_error);
  j = minimal();
  j["train"] = {{"steps", "many"}};
  CHECK_THROWS_WITH_AS(parse_run_config(j), doctest::Contains("train.steps"),
                       config_error);
  j = minimal();
  j["data"] = {{"kind", "mnist"}};
  CHECK_THROWS_WITH_AS(parse_run_config(j), doctest::Contains("mnist"), config_error);
}

TEST_CASE("partial arch blocks override only what they mention") {
  json j = minimal();
  j["arch"] = {{"channels", {8, 16, 24}}, {"in_channels", 1}};
  auto c = parse_run_config(j);
  CHECK(c.arch.channels == std::vector<std::int64_t>{8, 16, 24});
  CHECK(c.arch.in_channels == 1);
  CHECK(c.arch.shared_blocks == ArchConfig{}.shared_blocks);
}

TEST_CASE("adaptation blocks resolve domain names to indices") {
  json j{{"mode", "adaptation"},
         {"domains", {"real", "sketch"}},
         {"data", {{"kind", "synthetic-glyphs"}}},
         {"adaptation", {{"source", "real"}, {"target", "sketch"}}}};
  auto c = parse_run_config(j);
  CHECK(c.adaptation.source == 0);
  CHECK(c.adaptation.target == 1);
  CHECK(c.adaptation.num_classes == 3);

  j["adaptation"]["source"] = "oil";
  CHECK_THROWS_WITH_AS(parse_run_config(j), doctest::Contains("oil"), config_error);
  j.erase("adaptation");
  CHECK_THROWS_WITH_AS(parse_run_config(j), doctest::Contains("requires an"),
                       config_error);
}

TEST_CASE("file kinds derive domains from entries") {
  const auto dir = temp_dir();
  write_idx_pair(dir + "/a.idx", "", 4);
  write_idx_pair(dir + "/b.idx", "", 4);
  json j{{"data",
          {{"kind", "idx"},
           {"entries",
            {{{"name", "mn"}, {"path", dir + "/a.idx"}},
             {{"name", "us"}, {"path", dir + "/b.idx"}}}}}}};
  auto c = parse_run_config(j);
  CHECK(c.domains == std::vector<std::string>{"mn", "us"});

  j["domains"] = {"x", "y"};
  CHECK_THROWS_WITH_AS(parse_run_config(j), doctest::Contains("derived"), config_error);

  json bare{{"data", {{"kind", "png-dir"}}}};
  CHECK_THROWS_WITH_AS(parse_run_config(bare), doctest::Contains("entries"),
                       config_error);
}

TEST_CASE("validation enforces the domain list and synthetic limits") {
  auto valid = [](json j) {
    auto c = parse_run_config(j);
    c.arch.in_channels = 1;
    c.validate();
  };
  CHECK_THROWS_WITH_AS(valid(json{{"domains", {"a"}}}), doctest::Contains("at least two"),
                       config_error);
  CHECK_THROWS_WITH_AS(valid(json{{"domains", {"a", "a"}}}),
                       doctest::Contains("duplicate"), config_error);
  CHECK_THROWS_WITH_AS(valid(json{{"domains", {"a", "b", "c", "d"}}}),
                       doctest::Contains("at most 3"), config_error);
  CHECK_THROWS_WITH_AS(valid(json{{"mode", "flying"}, {"domains", {"a", "b"}}}),
                       doctest::Contains("flying"), config_error);
  json j = minimal();
  j["data"] = {{"kind", "synthetic-shapes"}, {"size", 30}};
  CHECK_THROWS_WITH_AS(valid(j), doctest::Contains("divisible by 8"), config_error);
  j = minimal();  // default arch is 3-channel, shapes are grayscale
  CHECK_THROWS_WITH_AS(
      [&] {
        auto c = parse_run_config(j);
        c.validate();
      }(),
      doctest::Contains("1 channel"), config_error);
}

TEST_CASE("labels are only accepted where adaptation consumes them") {
  const auto dir = temp_dir();
  write_idx_pair(dir + "/s.idx", dir + "/s.lab", 6);
  write_idx_pair(dir + "/t.idx", dir + "/t.lab", 6);

  json base{{"mode", "adaptation"},
            {"arch", {{"in_channels", 1}}},
            {"train", {{"steps", 2}, {"batch_size", 2}}},
            {"data",
             {{"kind", "idx"},
              {"entries",
               {{{"name", "s"}, {"path", dir + "/s.idx"}, {"labels", dir + "/s.lab"}},
                {{"name", "t"}, {"path", dir + "/t.idx"}}}}}},
            {"adaptation", {{"source", "s"}, {"target", "t"}}}};
  parse_run_config(base).validate();

  json no_labels = base;
  no_labels["data"]["entries"][0].erase("labels");
  CHECK_THROWS_WITH_AS(parse_run_config(no_labels).validate(),
                       doctest::Contains("needs a labels file"), config_error);

  json target_labeled = base;
  target_labeled["data"]["entries"][1]["labels"] = dir + "/t.lab";
  CHECK_THROWS_WITH_AS(parse_run_config(target_labeled).validate(),
                       doctest::Contains("only the adaptation source"), config_error);

  json joint = base;
  joint["mode"] = "joint";
  joint.erase("adaptation");
  CHECK_THROWS_WITH_AS(parse_run_config(joint).validate(),
                       doctest::Contains("only consumed in adaptation"), config_error);

  json missing = base;
  missing["data"]["entries"][0]["path"] = dir + "/absent.idx";
  CHECK_THROWS_WITH_AS(parse_run_config(missing).validate(),
                       doctest::Contains("absent.idx"), config_error);
}

TEST_CASE("incremental mode names the added domain") {
  json j{{"mode", "incremental"},
         {"arch", {{"in_channels", 1}}},
         {"domains", {"a", "b", "c"}},
         {"new_domain", "c"}};
  parse_run_config(j).validate();

  json no_new = j;
  no_new.erase("new_domain");
  CHECK_THROWS_WITH_AS(parse_run_config(no_new).validate(),
                       doctest::Contains("new_domain"), config_error);

  json not_listed = j;
  not_listed["new_domain"] = "d";
  CHECK_THROWS_WITH_AS(parse_run_config(not_listed).validate(),
                       doctest::Contains("unknown domain"), config_error);

  json joint = j;
  joint["mode"] = "joint";
  CHECK_THROWS_WITH_AS(parse_run_config(joint).validate(),
                       doctest::Contains("requires incremental"), config_error);

  json glyphs{{"mode", "incremental"},
              {"arch", {{"in_channels", 1}}},
              {"domains", {"a", "b"}},
              {"new_domain", "b"},
              {"data", {{"kind", "synthetic-glyphs"}}}};
  CHECK_THROWS_AS(parse_run_config(glyphs).validate(), config_error);
}

TEST_CASE("config files load with io and format errors split") {
  const auto dir = temp_dir();
  CHECK_THROWS_AS(load_run_config(dir + "/none.json"), io_error);
  spit(dir + "/bad.json", "{ not json");
  CHECK_THROWS_AS(load_run_config(dir + "/bad.json"), format_error);
  spit(dir + "/ok.json", minimal().dump());
  CHECK(load_run_config(dir + "/ok.json").domains.size() == 2);
}

TEST_CASE("build_data materializes each kind") {
  json j = minimal();
  j["arch"] = {{"in_channels", 1}};
  j["data"] = {{"kind", "synthetic-shapes"}, {"n_per_domain", 8}, {"size", 16}};
  j["train"] = {{"batch_size", 4}};
  auto c = parse_run_config(j);
  c.validate();
  auto d = build_data(c);
  REQUIRE(d.domains.size() == 2);
  CHECK(d.domains[0].shape == Shape{1, 16, 16});
  CHECK(d.source_labeled.set.size() == 0);

  json g{{"mode", "adaptation"},
         {"domains", {"s", "t"}},
         {"arch", {{"in_channels", 1}}},
         {"train", {{"batch_size", 4}}},
         {"data", {{"kind", "synthetic-glyphs"}, {"n_per_class", 6}, {"size", 16}}},
         {"adaptation", {{"source", "s"}, {"target", "t"}}}};
  auto cg = parse_run_config(g);
  cg.validate();
  auto dg = build_data(cg);
  REQUIRE(dg.domains.size() == 2);
  CHECK(dg.source_labeled.set.size() == 18);
  CHECK(dg.source_labeled.labels.size() == 18);
  CHECK(dg.target_test.set.size() > 0);

  // same seed, same bytes
  auto dg2 = build_data(cg);
  CHECK(dg2.domains[0].images == dg.domains[0].images);

  json small = j;
  small["train"] = {{"batch_size", 64}};
  auto cs = parse_run_config(small);
  cs.validate();
  CHECK_THROWS_WITH_AS(build_data(cs), doctest::Contains("batch size"), config_error);
}

TEST_CASE("build_data loads idx adaptation sources with their labels") {
  const auto dir = temp_dir();
  write_idx_pair(dir + "/s.idx", dir + "/s.lab", 6);
  write_idx_pair(dir + "/t.idx", "", 6);
  json j{{"mode", "adaptation"},
         {"arch", {{"in_channels", 1}}},
         {"train", {{"steps", 2}, {"batch_size", 2}}},
         {"data",
          {{"kind", "idx"},
           {"entries",
            {{{"name", "s"}, {"path", dir + "/s.idx"}, {"labels", dir + "/s.lab"}},
             {{"name", "t"}, {"path", dir + "/t.idx"}}}}}},
         {"adaptation", {{"source", "s"}, {"target", "t"}}}};
  auto c = parse_run_config(j);
  c.validate();
  auto d = build_data(c);
  REQUIRE(d.domains.size() == 2);
  CHECK(d.domains[0].shape == Shape{1, 8, 8});  // idx pads 8x8 to itself
  CHECK(d.source_labeled.labels == std::vector<int>{0, 1, 2, 0, 1, 2});
  CHECK(d.target_test.set.size() == 0);  // idx runs evaluate via a separate test dir

  // channel mismatch with the arch is caught at materialization
  auto c3 = c;
  c3.arch.in_channels = 3;
  CHECK_THROWS_WITH_AS(build_data(c3), doctest::Contains("channels"), config_error);
}
