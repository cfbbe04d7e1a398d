#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "domainbank/adaptation.hpp"
#include "domainbank/losses.hpp"

using namespace domainbank;

namespace {

ArchConfig micro_arch() {
  ArchConfig a;
  a.in_channels = 1;
  a.channels = {2, 2, 2};
  a.enc_front_blocks = 1;
  a.shared_blocks = 1;
  a.dec_back_blocks = 1;
  a.clf_hidden = 4;
  return a;
}

AdaptationConfig micro_acfg() {
  AdaptationConfig c;
  c.num_classes = 3;
  c.augment_after = 0;
  return c;
}

TensorT<float> probe_image(std::uint64_t seed, std::int64_t n = 1) {
  auto x = TensorT<float>::zeros({n, 1, 16, 16});
  Rng rng(seed);
  for (auto& v : x.vec()) v = static_cast<float>(rng.uniform() * 2 - 1);
  return x;
}

std::vector<float> snapshot(const DomainBankModel& m) {
  std::vector<float> out;
  for (const auto& [name, p] : m.parameters())
    out.insert(out.end(), p.vec().begin(), p.vec().end());
  return out;
}

// deterministic glyph-flavored batch streams over a fixed dataset
struct GlyphStreams {
  GlyphData data;
  BatchIter src_iter, tgt_iter;

  GlyphStreams(std::int64_t n_per_class, std::int64_t bs, std::uint64_t seed)
      : data(synthetic_glyphs(n_per_class, 16, seed)),
        src_iter(data.source.set.size(), bs, mix_seed(seed, "src")),
        tgt_iter(data.target.size(), bs, mix_seed(seed, "tgt")) {}

  LabeledBatchFn source_fn() {
    return [this](std::int64_t) { return make_labeled_batch(data.source, src_iter.next(), 0); };
  }
  UnlabeledBatchFn target_fn() {
    return [this](std::int64_t) { return make_batch(data.target, tgt_iter.next(), 1); };
  }
};

}  // namespace

TEST_CASE("adaptation models tie the discriminator top and attach a head") {
  auto m = build_adaptation_model(micro_arch(), {"s", "t"}, micro_acfg(), 5);
  CHECK(m.arch().tie_discriminator_top);
  CHECK(m.arch().num_classes == 3);
  CHECK_FALSE(m.shared_discriminator_parameters().empty());
  CHECK_FALSE(m.classifier_parameters().empty());
  for (const auto& [name, p] : m.discriminator_parameters(0))
    CHECK(name.find(".top") == std::string::npos);  // no duplicated per-domain top

  // head outputs normalize to a distribution
  auto x = probe_image(1, 2);
  TapeT<float> tape;
  auto probs = ops::softmax(tape, m.classify(tape, 0, x));
  for (std::int64_t r = 0; r < 2; ++r) {
    float s = 0;
    for (std::int64_t j = 0; j < 3; ++j) s += probs.data()[r * 3 + j];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }

  // the tied top is one storage: nudging it moves both domains' features
  std::vector<float> before;
  for (int d = 0; d < 2; ++d) {
    TapeT<float> t;
    before.push_back(m.discriminator_pooled_features(t, d, x).vec()[0]);
  }
  auto sd = m.shared_discriminator_parameters();
  sd[0].second.vec()[0] += 0.5f;
  for (int d = 0; d < 2; ++d) {
    TapeT<float> t;
    CHECK(m.discriminator_pooled_features(t, d, x).vec()[0] !=
          before[static_cast<std::size_t>(d)]);
  }
}

TEST_CASE("configuration is validated") {
  AdaptationConfig c = micro_acfg();
  c.target = 0;
  CHECK_THROWS_AS(c.validate(), config_error);
  c = micro_acfg();
  c.num_classes = 1;
  CHECK_THROWS_AS(c.validate(), config_error);
  c = micro_acfg();
  c.clf_weight = -1;
  CHECK_THROWS_AS(c.validate(), config_error);

  auto m = build_adaptation_model(micro_arch(), {"s", "t"}, micro_acfg(), 5);
  TrainConfig tc;
  tc.batch_size = 3;
  AdaptationConfig bad = micro_acfg();
  bad.num_classes = 4;  // model was built for 3
  CHECK_THROWS_AS(AdaptationTrainer(m, tc, bad, 1), config_error);
  bad = micro_acfg();
  bad.target = 7;
  CHECK_THROWS_AS(AdaptationTrainer(m, tc, bad, 1), config_error);
}

TEST_CASE("one step trains translation and classification together") {
  auto m = build_adaptation_model(micro_arch(), {"s", "t"}, micro_acfg(), 5);
  TrainConfig tc;
  tc.batch_size = 3;
  AdaptationTrainer tr(m, tc, micro_acfg(), 77);
  CHECK(tr.config().weights.cyc_kl == 0.0);
  CHECK(tr.config().weights.cyc_recon == 0.0);

  GlyphStreams gs(4, 3, 9);
  const auto before = snapshot(m);
  auto rec = tr.step(gs.source_fn(), gs.target_fn());
  CHECK(rec.step == 0);
  CHECK(rec.report.gan_d > 0);
  CHECK(rec.report.vae_recon > 0);
  CHECK(rec.clf > 0);
  CHECK(std::isfinite(rec.total));
  CHECK(snapshot(m) != before);

  // every parameter family moves: generators, discriminators, head
  bool clf_moved = false;
  auto now = m.classifier_parameters();
  DomainBankModel fresh = build_adaptation_model(micro_arch(), {"s", "t"}, micro_acfg(), 5);
  auto was = fresh.classifier_parameters();
  for (std::size_t i = 0; i < now.size(); ++i)
    if (now[i].second.vec() != was[i].second.vec()) clf_moved = true;
  CHECK(clf_moved);

  std::ostringstream csv;
  AdaptationTrainer tr2(fresh, tc, micro_acfg(), 77);
  tr2.run(2, gs.source_fn(), gs.target_fn(), &csv);
  std::istringstream lines(csv.str());
  std::string line;
  std::getline(lines, line);
  CHECK(line == "step,pair,vae_kl,vae_recon,gan_d,gan_g,clf,total");
  std::getline(lines, line);
  CHECK(line.substr(0, 6) == "0,s-t,");
}

TEST_CASE("zero classifier weight reduces to pure translation training") {
  TrainConfig tc;
  tc.batch_size = 3;
  tc.weights.cyc_kl = 0.0;
  tc.weights.cyc_recon = 0.0;

  auto ma = build_adaptation_model(micro_arch(), {"s", "t"}, micro_acfg(), 5);
  AdaptationConfig acfg = micro_acfg();
  acfg.clf_weight = 0.0;
  AdaptationTrainer ta(ma, tc, acfg, 77);
  GlyphStreams ga(4, 3, 9);
  auto sfn = ga.source_fn();
  auto tfn = ga.target_fn();
  for (int i = 0; i < 3; ++i) ta.step(sfn, tfn);

  auto mb = build_adaptation_model(micro_arch(), {"s", "t"}, micro_acfg(), 5);
  Trainer tb(mb, tc, 77);
  GlyphStreams gb(4, 3, 9);
  auto next = [&](int domain, std::int64_t) {
    if (domain == 0) return make_batch(gb.data.source.set, gb.src_iter.next(), 0);
    return make_batch(gb.data.target, gb.tgt_iter.next(), 1);
  };
  for (int i = 0; i < 3; ++i) tb.step(next);

  CHECK(snapshot(ma) == snapshot(mb));
}

TEST_CASE("translated-sample augmentation starts exactly at the warmup step") {
  TrainConfig tc;
  tc.batch_size = 3;

  auto run_two = [&](AdaptationConfig acfg) {
    auto m = build_adaptation_model(micro_arch(), {"s", "t"}, acfg, 5);
    AdaptationTrainer tr(m, tc, acfg, 77);
    GlyphStreams gs(4, 3, 9);
    auto sfn = gs.source_fn();
    auto tfn = gs.target_fn();
    tr.step(sfn, tfn);
    auto after_one = snapshot(m);
    tr.step(sfn, tfn);
    return std::make_pair(after_one, snapshot(m));
  };

  AdaptationConfig gated = micro_acfg();
  gated.augment_after = 1;  // step 0 plain, step 1 augmented
  AdaptationConfig plain = micro_acfg();
  plain.augment_translated = false;

  auto [gated_1, gated_2] = run_two(gated);
  auto [plain_1, plain_2] = run_two(plain);
  CHECK(gated_1 == plain_1);
  CHECK(gated_2 != plain_2);
}

TEST_CASE("evaluation scores at chance before training and stays deterministic") {
  auto m = build_adaptation_model(micro_arch(), {"s", "t"}, micro_acfg(), 5);
  auto gd = synthetic_glyphs(60, 16, 3);  // 45 test samples, 15 per class
  const double acc = evaluate_adaptation(m, 1, gd.target_test);
  const double sigma = std::sqrt((1.0 / 3) * (2.0 / 3) / 45.0);
  CHECK(acc > 1.0 / 3 - 3 * sigma);
  CHECK(acc < 1.0 / 3 + 3 * sigma);
  CHECK(evaluate_adaptation(m, 1, gd.target_test) == acc);
  CHECK(evaluate_adaptation(m, 1, gd.target_test, 7) == acc);  // batch split irrelevant

  LabeledImageSet empty;
  empty.set.shape = {1, 16, 16};
  empty.num_classes = 3;
  CHECK_THROWS_AS(evaluate_adaptation(m, 1, empty), config_error);

  auto bad = gd.target_test;
  bad.num_classes = 4;
  CHECK_THROWS_AS(evaluate_adaptation(m, 1, bad), config_error);
}

TEST_CASE("parameter accounting is affine for the bank, quadratic pairwise") {
  auto rep = complexity_report(micro_arch(), {2, 3, 4, 5, 6});
  REQUIRE(rep.n.size() == 5);

  const auto d1 = rep.bank[1] - rep.bank[0];
  for (std::size_t i = 2; i < rep.bank.size(); ++i)
    CHECK(rep.bank[i] - rep.bank[i - 1] == d1);
  CHECK(d1 == rep.per_domain);

  std::vector<std::int64_t> first;
  for (std::size_t i = 1; i < rep.pairwise.size(); ++i)
    first.push_back(rep.pairwise[i] - rep.pairwise[i - 1]);
  const auto d2 = first[1] - first[0];
  CHECK(d2 > 0);
  for (std::size_t i = 2; i < first.size(); ++i) CHECK(first[i] - first[i - 1] == d2);
  CHECK(d2 == 2 * rep.single_translator);

  CHECK(rep.pairwise[0] == 2 * rep.single_translator);
  for (std::size_t i = 1; i < rep.ratio.size(); ++i)
    if (rep.n[i] >= 3) CHECK(rep.ratio[i] > rep.ratio[i - 1]);

  auto lines = rep.table();
  CHECK(lines.find("pairwise") != std::string::npos);
  CHECK(std::count(lines.begin(), lines.end(), '\n') == 7);  // header + 5 rows + footer
  auto csv = rep.csv();
  CHECK(csv.rfind("n,bank_params,pairwise_params,ratio\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);

  CHECK_THROWS_AS(complexity_report(micro_arch(), {}), config_error);
  CHECK_THROWS_AS(complexity_report(micro_arch(), {1}), config_error);

  // default (untied, headless) arch: a single translator is the shared
  // stacks plus one bank
  auto def = complexity_report(ArchConfig{}, {5});
  CHECK(def.single_translator == def.shared + def.per_domain);
  CHECK(def.ratio[0] > 2.0);
}
