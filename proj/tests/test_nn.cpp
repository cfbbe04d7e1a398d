#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "domainbank/gradcheck.hpp"
#include "domainbank/model.hpp"

using namespace domainbank;

namespace {

template <class S>
TensorT<S> rand_tensor(const Shape& shape, std::uint64_t seed, double lo = -1.0,
                       double hi = 1.0) {
  Rng rng(seed);
  auto t = TensorT<S>::zeros(shape);
  for (std::int64_t i = 0; i < t.numel(); ++i)
    t.data()[i] = static_cast<S>(lo + (hi - lo) * rng.uniform());
  return t;
}

ArchConfig micro_arch(std::int64_t num_classes = 0, bool tie_top = false) {
  ArchConfig a;
  a.in_channels = 1;
  a.channels = {2, 3, 4};
  a.enc_front_blocks = 1;
  a.shared_blocks = 1;
  a.dec_back_blocks = 1;
  a.tie_discriminator_top = tie_top;
  a.num_classes = num_classes;
  a.clf_hidden = 5;
  return a;
}

}  // namespace

TEST_CASE("instance norm standardizes each channel of each sample") {
  Rng rng(1);
  InstanceNormT<double> norm(3);
  auto x = rand_tensor<double>({2, 3, 4, 5}, 2, -3.0, 5.0);
  TapeT<double> tape;
  auto y = norm.forward(tape, x);
  REQUIRE(y.shape() == x.shape());
  for (std::int64_t n = 0; n < 2; ++n)
    for (std::int64_t c = 0; c < 3; ++c) {
      double m = 0.0, v = 0.0;
      const double* p = y.data() + (n * 3 + c) * 20;
      for (int i = 0; i < 20; ++i) m += p[i];
      m /= 20;
      for (int i = 0; i < 20; ++i) v += (p[i] - m) * (p[i] - m);
      v /= 20;
      CHECK(std::abs(m) < 1e-9);
      CHECK(v == doctest::Approx(1.0).epsilon(1e-3));  // eps in the denominator
    }
  CHECK_THROWS_AS(norm.forward(tape, rand_tensor<double>({2, 4, 4, 5}, 3)), dim_error);
  CHECK_THROWS_AS(norm.forward(tape, rand_tensor<double>({2, 3, 4}, 3)), dim_error);
}

TEST_CASE("instance norm gradients match central differences") {
  InstanceNormT<double> norm(2);
  auto x = rand_tensor<double>({2, 2, 3, 3}, 5);
  NamedParamsT<double> params;
  norm.collect("norm", params);
  params.emplace_back("x", x);
  auto res = gradient_check<double>(
      [&](TapeT<double>& t) {
        auto y = norm.forward(t, x);
        return ops::mean(t, ops::square(t, y));
      },
      params, 1e-5, 1e-6);
  INFO("worst: " << res.worst_param << " rel " << res.max_rel_err);
  CHECK(res.pass);
}

TEST_CASE("res block with all-zero parameters is an exact identity") {
  ResBlockT<double> block;
  Rng rng(7);
  block = ResBlockT<double>(3, 3, 0.2, rng);
  NamedParamsT<double> ps;
  block.collect("b", ps);
  for (auto& [name, p] : ps) std::fill(p.vec().begin(), p.vec().end(), 0.0);
  auto x = rand_tensor<double>({2, 3, 4, 4}, 8);
  TapeT<double> tape;
  auto y = block.forward(tape, x);
  for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("res block gradients match central differences") {
  Rng rng(9);
  ResBlockT<double> block(2, 3, 0.2, rng);
  auto x = rand_tensor<double>({1, 2, 4, 4}, 10);
  NamedParamsT<double> params;
  block.collect("rb", params);
  params.emplace_back("x", x);
  auto res = gradient_check<double>(
      [&](TapeT<double>& t) {
        auto y = block.forward(t, x);
        return ops::mean(t, ops::square(t, y));
      },
      params, 1e-5, 1e-6);
  INFO("worst: " << res.worst_param << " rel " << res.max_rel_err);
  CHECK(res.pass);
}

TEST_CASE("dense layer computes x*W + b and gradient checks") {
  Rng rng(11);
  DenseT<double> fc(3, 2, rng);
  auto x = rand_tensor<double>({4, 3}, 12);
  TapeT<double> tape;
  auto y = fc.forward(tape, x);
  REQUIRE(y.shape() == Shape{4, 2});
  for (std::int64_t r = 0; r < 4; ++r)
    for (std::int64_t c = 0; c < 2; ++c) {
      double want = fc.b.data()[c];
      for (std::int64_t i = 0; i < 3; ++i)
        want += x.data()[r * 3 + i] * fc.w.data()[i * 2 + c];
      CHECK(y.data()[r * 2 + c] == doctest::Approx(want));
    }

  NamedParamsT<double> params;
  fc.collect("fc", params);
  params.emplace_back("x", x);
  auto res = gradient_check<double>(
      [&](TapeT<double>& t) { return ops::mean(t, ops::square(t, fc.forward(t, x))); }, params,
      1e-6, 1e-7);
  CHECK(res.pass);
}

TEST_CASE("he init scales with fan-in and is seed-deterministic") {
  Rng r1(42), r2(42), r3(43);
  auto w1 = TensorT<float>::zeros({64, 16, 3, 3});
  auto w2 = TensorT<float>::zeros({64, 16, 3, 3});
  auto w3 = TensorT<float>::zeros({64, 16, 3, 3});
  he_normal_init(w1, 16 * 9, r1);
  he_normal_init(w2, 16 * 9, r2);
  he_normal_init(w3, 16 * 9, r3);
  for (std::int64_t i = 0; i < w1.numel(); ++i) CHECK(w1.data()[i] == w2.data()[i]);
  bool any_diff = false;
  for (std::int64_t i = 0; i < w1.numel(); ++i) any_diff |= (w1.data()[i] != w3.data()[i]);
  CHECK(any_diff);
  double var = 0.0;
  for (std::int64_t i = 0; i < w1.numel(); ++i) var += w1.data()[i] * w1.data()[i];
  var /= static_cast<double>(w1.numel());
  CHECK(var == doctest::Approx(2.0 / 144.0).epsilon(0.05));
}

TEST_CASE("arch config validates, round-trips through json, and hashes") {
  ArchConfig a = micro_arch();
  a.validate();
  auto j = a.to_json();
  auto b = ArchConfig::from_json(j);
  CHECK(a == b);
  CHECK(a.hash() == b.hash());
  b.channels = {2, 3, 5};
  CHECK(a.hash() != b.hash());

  ArchConfig bad = micro_arch();
  bad.channels = {2, 3};
  CHECK_THROWS_AS(bad.validate(), config_error);
  bad = micro_arch();
  bad.res_kernel = 4;
  CHECK_THROWS_AS(bad.validate(), config_error);
  bad = micro_arch();
  bad.lrelu_slope = 1.5;
  CHECK_THROWS_AS(bad.validate(), config_error);
  bad = micro_arch();
  bad.shared_blocks = 0;
  CHECK_THROWS_AS(bad.validate(), config_error);
}

TEST_CASE("model forward shapes and domain checks") {
  DomainBankModel m(micro_arch(), {"a", "b"}, 123);
  CHECK(m.num_domains() == 2);
  CHECK(m.domain_index("b") == 1);
  CHECK_THROWS_AS(m.domain_index("zzz"), config_error);

  auto x = rand_tensor<float>({2, 1, 8, 8}, 1);
  Tape tape;
  tape.set_recording(false);
  auto mu = m.encode_mu(tape, 0, x);
  CHECK(mu.shape() == Shape{2, 4, 2, 2});
  auto rec = m.reconstruct(tape, 0, x);
  CHECK(rec.shape() == x.shape());
  for (std::int64_t i = 0; i < rec.numel(); ++i) {
    CHECK(rec.data()[i] <= 1.0f);  // tanh output range
    CHECK(rec.data()[i] >= -1.0f);
  }
  auto tr = m.translate(tape, 0, 1, x);
  CHECK(tr.shape() == x.shape());
  auto cyc = m.cycle(tape, 0, 1, x);
  CHECK(cyc.shape() == x.shape());
  auto d = m.discriminate(tape, 1, x);
  CHECK(d.shape() == Shape{2, 1, 1, 1});
  for (std::int64_t i = 0; i < d.numel(); ++i) {
    CHECK(d.data()[i] > 0.0f);
    CHECK(d.data()[i] < 1.0f);
  }

  CHECK_THROWS_AS(m.translate(tape, 1, 1, x), contract_error);
  CHECK_THROWS_AS(m.encode_mu(tape, 5, x), config_error);
  CHECK_THROWS_AS(m.encode_mu(tape, 0, rand_tensor<float>({2, 3, 8, 8}, 2)), dim_error);
  CHECK_THROWS_AS(m.encode_mu(tape, 0, rand_tensor<float>({2, 1, 6, 8}, 3)), dim_error);
  CHECK_THROWS_AS(m.classify(tape, 0, x), contract_error);  // no head
}

TEST_CASE("parameter names are unique and stable") {
  DomainBankModel m(micro_arch(), {"a", "b"}, 9);
  auto ps = m.parameters();
  std::set<std::string> names;
  for (const auto& [name, p] : ps) {
    CHECK(names.insert(name).second);
    CHECK(p.requires_grad());
  }
  CHECK(names.count("shared.enc_top.res0.conv1.w") == 1);
  CHECK(names.count("dom0.enc_front.conv_in.w") == 1);
  CHECK(names.count("dom1.disc.score.b") == 1);
}

TEST_CASE("total parameter count is affine in the number of domains") {
  std::vector<std::string> names{"a", "b", "c", "d", "e"};
  std::vector<std::int64_t> totals;
  std::int64_t shared = -1, per_dom = -1;
  for (int n = 1; n <= 5; ++n) {
    DomainBankModel m(micro_arch(), {names.begin(), names.begin() + n}, 7);
    totals.push_back(m.param_count_total());
    shared = m.param_count_shared();
    per_dom = m.param_count_per_domain();
  }
  for (int n = 1; n <= 5; ++n)
    CHECK(totals[static_cast<std::size_t>(n - 1)] == shared + n * per_dom);
}

TEST_CASE("micro model stays under five thousand parameters") {
  DomainBankModel m(micro_arch(), {"a", "b"}, 7);
  CHECK(m.param_count_total() <= 5000);
}

TEST_CASE("grow_domain leaves existing parameters bit-identical") {
  DomainBankModel m(micro_arch(), {"a", "b"}, 31);
  auto before = m.parameters();
  std::vector<std::vector<float>> snap;
  for (auto& [name, p] : before) snap.push_back(p.vec());

  const int idx = m.grow_domain("c");
  CHECK(idx == 2);
  CHECK(m.num_domains() == 3);
  auto after = m.parameters();
  CHECK(after.size() > before.size());

  for (std::size_t i = 0; i < before.size(); ++i) {
    auto& old_vals = snap[i];
    // Same handle, so same storage; values must be untouched.
    for (std::size_t j = 0; j < old_vals.size(); ++j)
      CHECK(before[i].second.data()[j] == old_vals[j]);
  }
  CHECK_THROWS_AS(m.grow_domain("b"), config_error);

  // The grown bank works immediately.
  Tape tape;
  tape.set_recording(false);
  auto x = rand_tensor<float>({1, 1, 8, 8}, 4);
  CHECK(m.translate(tape, 2, 0, x).shape() == x.shape());
}

TEST_CASE("same seed reproduces the model exactly; different seed does not") {
  DomainBankModel m1(micro_arch(), {"a", "b"}, 55);
  DomainBankModel m2(micro_arch(), {"a", "b"}, 55);
  DomainBankModel m3(micro_arch(), {"a", "b"}, 56);
  auto p1 = m1.parameters();
  auto p2 = m2.parameters();
  auto p3 = m3.parameters();
  REQUIRE(p1.size() == p2.size());
  bool all_same = true, any_diff3 = false;
  for (std::size_t i = 0; i < p1.size(); ++i) {
    for (std::int64_t j = 0; j < p1[i].second.numel(); ++j) {
      all_same &= (p1[i].second.data()[j] == p2[i].second.data()[j]);
      any_diff3 |= (p1[i].second.data()[j] != p3[i].second.data()[j]);
    }
  }
  CHECK(all_same);
  CHECK(any_diff3);
}

TEST_CASE("tied discriminator top moves its parameters into the shared set") {
  DomainBankModel tied(micro_arch(0, true), {"a", "b"}, 5);
  DomainBankModel own(micro_arch(0, false), {"a", "b"}, 5);
  CHECK(tied.param_count_shared() > own.param_count_shared());
  CHECK(tied.param_count_per_domain() < own.param_count_per_domain());

  bool found = false;
  for (const auto& [name, p] : tied.shared_parameters())
    if (name.rfind("shared.disc_top", 0) == 0) found = true;
  CHECK(found);
  for (const auto& [name, p] : tied.discriminator_parameters(0))
    CHECK(name.find(".top.") == std::string::npos);

  // Both discriminators run through the same tied top.
  Tape tape;
  tape.set_recording(false);
  auto x = rand_tensor<float>({2, 1, 8, 8}, 6);
  CHECK(tied.discriminate(tape, 0, x).shape() == Shape{2, 1, 1, 1});
  CHECK(tied.discriminate(tape, 1, x).shape() == Shape{2, 1, 1, 1});
}

TEST_CASE("classification head produces logits over the configured classes") {
  DomainBankModel m(micro_arch(3, true), {"src", "tgt"}, 5);
  Tape tape;
  tape.set_recording(false);
  auto x = rand_tensor<float>({4, 1, 8, 8}, 7);
  auto logits = m.classify(tape, 1, x);
  CHECK(logits.shape() == Shape{4, 3});
  bool found = false;
  for (const auto& [name, p] : m.shared_parameters())
    if (name.rfind("shared.clf", 0) == 0) found = true;
  CHECK(found);
}

TEST_CASE("end-to-end reconstruction gradcheck through the micro model") {
  ArchConfig a;
  a.in_channels = 1;
  a.channels = {2, 2, 2};
  a.enc_front_blocks = 0;
  a.shared_blocks = 1;
  a.dec_back_blocks = 0;
  DomainBankModelT<double> m(a, {"a", "b"}, 77);
  auto x = rand_tensor<double>({1, 1, 8, 8}, 78);
  NamedParamsT<double> params = m.parameters();
  auto res = gradient_check<double>(
      [&](TapeT<double>& t) {
        auto rec = m.reconstruct(t, 0, x);
        auto diff = ops::sub(t, rec, x);
        return ops::mean(t, ops::square(t, diff));
      },
      params, 1e-5, 1e-6);
  INFO("worst: " << res.worst_param << " rel " << res.max_rel_err);
  CHECK(res.pass);
}
