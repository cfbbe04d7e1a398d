#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "domainbank/data.hpp"
#include "domainbank/fusion.hpp"
#include "domainbank/png_io.hpp"

using namespace domainbank;
namespace fs = std::filesystem;

namespace {

ArchConfig micro_arch() {
  ArchConfig a;
  a.in_channels = 1;
  a.channels = {2, 2, 2};
  a.enc_front_blocks = 1;
  a.shared_blocks = 1;
  a.dec_back_blocks = 1;
  return a;
}

NamedParams dec_params(const DomainBankModel& m, int d) {
  NamedParams out;
  m.bank(d).dec_back.collect("f", out);
  return out;
}

NamedParams fused_params(FusedDecoder& f) {
  NamedParams out;
  f.back.collect("f", out);
  return out;
}

TensorT<float> probe_image(std::uint64_t seed) {
  auto x = TensorT<float>::zeros({1, 1, 16, 16});
  Rng rng(seed);
  for (auto& v : x.vec()) v = static_cast<float>(rng.uniform() * 2 - 1);
  return x;
}

std::vector<float> snapshot(const DomainBankModel& m) {
  std::vector<float> out;
  for (const auto& [name, p] : m.parameters()) out.insert(out.end(), p.vec().begin(), p.vec().end());
  return out;
}

}  // namespace

TEST_CASE("endpoints reproduce the constituent decoders bit-exactly") {
  DomainBankModel m(micro_arch(), {"a", "b", "c"}, 42);

  auto f1 = fuse_decoders(m, 1, 2, 1.0);
  auto f0 = fuse_decoders(m, 1, 2, 0.0);
  auto p1 = dec_params(m, 1), p2 = dec_params(m, 2);
  auto q1 = fused_params(f1), q0 = fused_params(f0);
  REQUIRE(q1.size() == p1.size());
  for (std::size_t i = 0; i < q1.size(); ++i) {
    CHECK(q1[i].second.vec() == p1[i].second.vec());
    CHECK(q0[i].second.vec() == p2[i].second.vec());
  }

  auto x = probe_image(3);
  TapeT<float> t1, t2, t3, t4;
  auto via_fused1 = translate_fused(t1, m, 0, f1, x);
  auto direct1 = m.translate(t2, 0, 1, x);
  CHECK(via_fused1.vec() == direct1.vec());
  auto via_fused0 = translate_fused(t3, m, 0, f0, x);
  auto direct2 = m.translate(t4, 0, 2, x);
  CHECK(via_fused0.vec() == direct2.vec());
}

TEST_CASE("blends are convex combinations, computed without touching the model") {
  DomainBankModel m(micro_arch(), {"a", "b"}, 7);
  const auto before = snapshot(m);

  auto f = fuse_decoders(m, 0, 1, 0.25);
  auto p1 = dec_params(m, 0), p2 = dec_params(m, 1);
  auto pf = fused_params(f);
  for (std::size_t i = 0; i < pf.size(); ++i) {
    const auto& a = p1[i].second.vec();
    const auto& b = p2[i].second.vec();
    const auto& q = pf[i].second.vec();
    for (std::size_t k = 0; k < q.size(); ++k) {
      CHECK(q[k] >= std::min(a[k], b[k]));
      CHECK(q[k] <= std::max(a[k], b[k]));
      CHECK(q[k] == doctest::Approx(0.25 * a[k] + 0.75 * b[k]).epsilon(1e-6));
    }
  }

  // parameter distance to the lambda=1 endpoint shrinks linearly
  auto l1_to_p1 = [&](double lambda) {
    auto g = fuse_decoders(m, 0, 1, lambda);
    auto pg = fused_params(g);
    double d = 0;
    for (std::size_t i = 0; i < pg.size(); ++i)
      for (std::size_t k = 0; k < pg[i].second.vec().size(); ++k)
        d += std::abs(static_cast<double>(pg[i].second.vec()[k]) - p1[i].second.vec()[k]);
    return d;
  };
  const double full = l1_to_p1(0.0);
  CHECK(l1_to_p1(1.0) == 0.0);
  CHECK(l1_to_p1(0.5) == doctest::Approx(0.5 * full).epsilon(1e-5));
  CHECK(l1_to_p1(0.75) == doctest::Approx(0.25 * full).epsilon(1e-5));

  // mutating the fused copy leaves the model alone
  pf[0].second.vec()[0] += 5.0f;
  CHECK(snapshot(m) == before);
}

TEST_CASE("invalid fusions are rejected") {
  DomainBankModel m(micro_arch(), {"a", "b"}, 7);
  CHECK_THROWS_AS(fuse_decoders(m, 0, 0, 0.5), config_error);
  CHECK_THROWS_AS(fuse_decoders(m, 0, 1, -0.1), config_error);
  CHECK_THROWS_AS(fuse_decoders(m, 0, 1, 1.1), config_error);
  CHECK_THROWS_AS(fuse_decoders(m, 0, 1, std::nan("")), config_error);
  CHECK_THROWS_AS(fuse_decoders(m, 0, 5, 0.5), config_error);

  auto x = probe_image(4);
  CHECK_THROWS_AS(fusion_sweep(m, x, 0, 0, 1, 1, "/tmp"), config_error);
  auto batch2 = TensorT<float>::zeros({2, 1, 16, 16});
  CHECK_THROWS_AS(fusion_sweep(m, batch2, 0, 0, 1, 3, "/tmp"), contract_error);
}

TEST_CASE("the sweep writes one strip per run with quantized endpoint panels") {
  auto dir = fs::temp_directory_path() / ("domainbank_fuse_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);

  DomainBankModel m(micro_arch(), {"src", "one", "two"}, 9);
  auto x = probe_image(6);

  const auto path = fusion_sweep(m, x, 0, 1, 2, 5, dir.string());
  CHECK(fs::path(path).filename().string() == "fuse_src_to_one-two_5.png");
  auto strip = read_png(path);
  CHECK(strip.h == 16);
  CHECK(strip.w == 5 * 16);

  TapeT<float> ta, tb;
  auto lo = m.translate(ta, 0, 2, x);   // lambda = 0 panel
  auto hi = m.translate(tb, 0, 1, x);   // lambda = 1 panel
  for (std::int64_t y = 0; y < 16; ++y)
    for (std::int64_t xx = 0; xx < 16; ++xx) {
      const float want_lo = byte_to_unit(unit_to_byte(lo.data()[y * 16 + xx]));
      const float want_hi = byte_to_unit(unit_to_byte(hi.data()[y * 16 + xx]));
      CHECK(strip.pixels[y * 80 + xx] == want_lo);
      CHECK(strip.pixels[y * 80 + 4 * 16 + xx] == want_hi);
    }

  // two-step sweep is exactly the pair of endpoints
  const auto two = fusion_sweep(m, x, 0, 1, 2, 2, dir.string());
  auto strip2 = read_png(two);
  CHECK(strip2.w == 2 * 16);
  for (std::int64_t y = 0; y < 16; ++y)
    for (std::int64_t xx = 0; xx < 16; ++xx) {
      CHECK(strip2.pixels[y * 32 + xx] ==
            byte_to_unit(unit_to_byte(lo.data()[y * 16 + xx])));
      CHECK(strip2.pixels[y * 32 + 16 + xx] ==
            byte_to_unit(unit_to_byte(hi.data()[y * 16 + xx])));
    }

  // deterministic: rerun produces identical bytes
  std::ifstream f1(path, std::ios::binary), f2(fusion_sweep(m, x, 0, 1, 2, 5, dir.string()),
                                               std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(b1 == b2);
  fs::remove_all(dir);
}
