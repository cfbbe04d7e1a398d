// Command-line front end. One process, one command; every run is
// reproducible from its config document and seed.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <zlib.h>

#include "domainbank/adaptation.hpp"
#include "domainbank/checkpoint.hpp"
#include "domainbank/config.hpp"
#include "domainbank/fusion.hpp"
#include "domainbank/kernels.hpp"
#include "domainbank/png_io.hpp"

namespace fs = std::filesystem;
using namespace domainbank;

namespace {

int resolve_domain(const DomainBankModel& model, const std::string& name) {
  for (int d = 0; d < model.num_domains(); ++d)
    if (model.domain_name(d) == name) return d;
  std::string known;
  for (int d = 0; d < model.num_domains(); ++d) {
    if (d) known += ", ";
    known += model.domain_name(d);
  }
  throw config_error("unknown domain \"" + name + "\" (checkpoint has: " + known + ")");
}

TensorT<float> image_as_batch(const PngImage& img) {
  auto x = TensorT<float>::zeros({1, img.c, img.h, img.w});
  std::copy(img.pixels.begin(), img.pixels.end(), x.vec().begin());
  return x;
}

/// CRC over every frozen parameter's bytes, in model parameter order.
std::uint32_t frozen_hash(const DomainBankModel& model, const FreezeMask& mask) {
  uLong crc = ::crc32(0L, nullptr, 0);
  for (const auto& [name, p] : model.parameters())
    if (mask.frozen.count(name))
      crc = ::crc32(crc, reinterpret_cast<const Bytef*>(p.vec().data()),
                    static_cast<uInt>(p.vec().size() * sizeof(float)));
  return static_cast<std::uint32_t>(crc);
}

/// Deterministic-mode sample sheets: one reconstruction grid per domain
/// (inputs above, reconstructions below) and one all-pairs sheet whose
/// (row, col) panel translates row's representative into col's domain.
void write_samples(const DomainBankModel& model, const std::vector<ImageSet>& sets,
                   const std::string& dir, std::int64_t step) {
  const auto& shp = sets[0].shape;
  const int n = model.num_domains();
  TapeT<float> tape;
  tape.set_recording(false);

  for (int d = 0; d < n; ++d) {
    const std::int64_t k = std::min<std::int64_t>(8, sets[d].size());
    std::vector<std::int64_t> idx(static_cast<std::size_t>(k));
    for (std::int64_t i = 0; i < k; ++i) idx[static_cast<std::size_t>(i)] = i;
    auto batch = make_batch(sets[d], idx, d);
    auto recon = model.reconstruct(tape, d, batch.pixels);
    auto sheet = TensorT<float>::zeros({2 * k, shp[0], shp[1], shp[2]});
    auto* dst = sheet.vec().data();
    std::copy(batch.pixels.vec().begin(), batch.pixels.vec().end(), dst);
    std::copy(recon.vec().begin(), recon.vec().end(), dst + batch.pixels.numel());
    write_grid_png(dir + "/recon_" + model.domain_name(d) + "_step" +
                       std::to_string(step) + ".png",
                   sheet, k);
  }

  auto pairs = TensorT<float>::zeros({static_cast<std::int64_t>(n) * n, shp[0], shp[1], shp[2]});
  const std::int64_t panel = shp[0] * shp[1] * shp[2];
  for (int i = 0; i < n; ++i) {
    auto x = make_batch(sets[i], {0}, i).pixels;
    for (int j = 0; j < n; ++j) {
      auto y = i == j ? model.reconstruct(tape, i, x) : model.translate(tape, i, j, x);
      std::copy(y.vec().begin(), y.vec().end(),
                pairs.vec().data() + (static_cast<std::int64_t>(i) * n + j) * panel);
    }
  }
  write_grid_png(dir + "/translate_step" + std::to_string(step) + ".png", pairs, n);
}

TrainMeta make_meta(const std::string& kind, std::int64_t step, std::uint64_t trainer_seed,
                    const std::string& sched, const std::string& data_state) {
  TrainMeta m;
  m.kind = kind;
  m.step = step;
  m.trainer_seed = trainer_seed;
  m.scheduler_state = sched;
  m.data_state = data_state;
  return m;
}

int cmd_train(const std::string& config_path, bool has_seed, std::uint64_t seed,
              const std::string& out_dir) {
  RunConfig cfg = load_run_config(config_path);
  if (has_seed) cfg.seed = seed;
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  cfg.validate();
  if (cfg.mode == "incremental")
    throw config_error("incremental runs are driven by the incr-add command");

  LoadedData data = build_data(cfg);
  fs::create_directories(cfg.out_dir);
  const auto model_seed = mix_seed(cfg.seed, "model");
  const auto trainer_seed = mix_seed(cfg.seed, "trainer");
  DataSource src(data.domains, cfg.train.batch_size, mix_seed(cfg.seed, "data"));
  std::ofstream csv(cfg.out_dir + "/history.csv", std::ios::binary);
  if (!csv) throw io_error("cannot write " + cfg.out_dir + "/history.csv");

  if (cfg.mode == "joint") {
    DomainBankModel model(cfg.arch, cfg.domains, model_seed);
    Trainer trainer(model, cfg.train, trainer_seed);
    auto checkpoint_hook = [&](std::int64_t step) {
      auto meta = make_meta("joint", step, trainer_seed, trainer.scheduler_state(),
                            src.state());
      save_checkpoint(model, trainer.optimizer(), meta,
                      cfg.out_dir + "/ck_" + std::to_string(step) + ".ck");
      write_samples(model, data.domains, cfg.out_dir, step);
    };
    trainer.run(cfg.train.steps, batch_fn(src), &csv, checkpoint_hook);
    auto meta = make_meta("joint", trainer.step_count(), trainer_seed,
                          trainer.scheduler_state(), src.state());
    save_checkpoint(model, trainer.optimizer(), meta, cfg.out_dir + "/final.ck");
    write_samples(model, data.domains, cfg.out_dir, trainer.step_count());
    std::cout << "trained " << trainer.step_count() << " steps, checkpoint "
              << cfg.out_dir << "/final.ck\n";
    return 0;
  }

  // adaptation: labeled source batches, unlabeled target batches
  DomainBankModel model =
      build_adaptation_model(cfg.arch, cfg.domains, cfg.adaptation, model_seed);
  AdaptationTrainer trainer(model, cfg.train, cfg.adaptation, trainer_seed);
  BatchIter src_iter(data.source_labeled.set.size(), cfg.train.batch_size,
                     mix_seed(cfg.seed, "data.labeled"));
  LabeledBatchFn source_fn = [&](std::int64_t) {
    return make_labeled_batch(data.source_labeled, src_iter.next(), cfg.adaptation.source);
  };
  UnlabeledBatchFn target_fn = [&](std::int64_t) {
    return src.batch(cfg.adaptation.target);
  };
  auto checkpoint_hook = [&](std::int64_t step) {
    auto meta = make_meta("adaptation", step, trainer_seed, "", src.state());
    meta.da_source = cfg.adaptation.source;
    meta.da_target = cfg.adaptation.target;
    save_checkpoint(model, trainer.optimizer(), meta,
                    cfg.out_dir + "/ck_" + std::to_string(step) + ".ck");
    write_samples(model, data.domains, cfg.out_dir, step);
  };
  trainer.run(cfg.train.steps, source_fn, target_fn, &csv, checkpoint_hook);
  auto meta = make_meta("adaptation", trainer.step_count(), trainer_seed, "", src.state());
  meta.da_source = cfg.adaptation.source;
  meta.da_target = cfg.adaptation.target;
  save_checkpoint(model, trainer.optimizer(), meta, cfg.out_dir + "/final.ck");
  write_samples(model, data.domains, cfg.out_dir, trainer.step_count());
  std::cout << "trained " << trainer.step_count() << " steps, checkpoint " << cfg.out_dir
            << "/final.ck\n";
  if (data.target_test.set.size() > 0) {
    const double acc =
        evaluate_adaptation(model, cfg.adaptation.target, data.target_test);
    std::cout << "task " << cfg.domains[cfg.adaptation.source] << "->"
              << cfg.domains[cfg.adaptation.target] << ", accuracy " << acc << ", n_test "
              << data.target_test.set.size() << "\n";
  }
  return 0;
}

int cmd_translate(const std::string& ck_path, const std::string& input,
                  const std::string& from, const std::string& to,
                  const std::string& output) {
  Checkpoint ck = load_checkpoint(ck_path);
  const int a = resolve_domain(ck.model, from);
  const int b = resolve_domain(ck.model, to);
  auto x = image_as_batch(read_png(input));
  TapeT<float> tape;
  tape.set_recording(false);
  auto y = a == b ? ck.model.reconstruct(tape, a, x) : ck.model.translate(tape, a, b, x);
  write_png(output, y.data(), y.shape()[1], y.shape()[2], y.shape()[3]);
  std::cout << from << " -> " << to << ": " << output << "\n";
  return 0;
}

int cmd_fuse(const std::string& ck_path, const std::string& input, const std::string& from,
             const std::string& to1, const std::string& to2, int steps,
             const std::string& out_dir) {
  Checkpoint ck = load_checkpoint(ck_path);
  const int a = resolve_domain(ck.model, from);
  const int b1 = resolve_domain(ck.model, to1);
  const int b2 = resolve_domain(ck.model, to2);
  auto x = image_as_batch(read_png(input));
  fs::create_directories(out_dir);
  std::cout << fusion_sweep(ck.model, x, a, b1, b2, steps, out_dir) << "\n";
  return 0;
}

int cmd_incr_add(const std::string& base_path, const std::string& config_path,
                 const std::string& out_path, bool has_seed, std::uint64_t seed,
                 const std::string& out_dir) {
  Checkpoint ck = load_checkpoint(base_path);
  RunConfig cfg = load_run_config(config_path);
  if (has_seed) cfg.seed = seed;
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  cfg.validate();
  if (cfg.mode != "incremental")
    throw config_error("incr-add needs a config with mode \"incremental\"");
  if (!(cfg.arch == ck.model.arch()))
    throw config_error("config arch differs from the checkpoint's");

  const auto& old_names = ck.model.domain_names();
  for (const auto& n : old_names)
    if (n == cfg.new_domain)
      throw config_error("checkpoint already has domain \"" + cfg.new_domain + "\"");
  if (cfg.domains.size() != old_names.size() + 1)
    throw config_error("config must list the checkpoint's domains plus the new one");
  for (std::size_t i = 0; i < old_names.size(); ++i)
    if (cfg.domains[i] != old_names[i])
      throw config_error("config domains must list the checkpoint's domains in order (" +
                         cfg.domains[i] + " != " + old_names[i] + ")");
  if (cfg.domains.back() != cfg.new_domain)
    throw config_error("the new domain must be listed last");

  LoadedData data = build_data(cfg);
  fs::create_directories(cfg.out_dir);

  DomainBankModel& model = ck.model;
  const int new_idx = model.num_domains();
  model.grow_domain(cfg.new_domain);
  FreezeMask mask = incremental_mask(model, new_idx, cfg.train.unfreeze_shared);
  const std::uint32_t before = frozen_hash(model, mask);

  const auto trainer_seed = mix_seed(cfg.seed, "trainer");
  Trainer trainer(model, cfg.train, trainer_seed, new_idx, mask);
  DataSource src(data.domains, cfg.train.batch_size, mix_seed(cfg.seed, "data"));
  std::ofstream csv(cfg.out_dir + "/history.csv", std::ios::binary);
  if (!csv) throw io_error("cannot write " + cfg.out_dir + "/history.csv");
  trainer.run(cfg.train.steps, batch_fn(src), &csv);

  const std::uint32_t after = frozen_hash(model, mask);
  if (after != before) {
    std::cerr << "frozen parameters: CHANGED (this is a bug)\n";
    return 1;
  }
  std::cout << "frozen parameters: unchanged (crc32 " << before << ")\n";

  auto meta = make_meta("incremental", trainer.step_count(), trainer_seed,
                        trainer.scheduler_state(), src.state());
  save_checkpoint(model, trainer.optimizer(), meta, out_path);
  std::cout << "added domain \"" << cfg.new_domain << "\": " << out_path << " ("
            << model.param_count_total() << " parameters, was "
            << model.param_count_shared() +
                   static_cast<std::int64_t>(old_names.size()) *
                       model.param_count_per_domain()
            << ")\n";
  return 0;
}

int cmd_params(const std::string& source, const std::vector<std::int64_t>& n_list) {
  ArchConfig arch;
  std::ifstream probe(source, std::ios::binary);
  if (!probe) throw io_error("cannot open " + source);
  char magic[4] = {};
  probe.read(magic, 4);
  if (probe.gcount() == 4 && std::string(magic, 4) == "DBNK") {
    arch = load_checkpoint(source).model.arch();
  } else {
    arch = load_run_config(source).arch;
    arch.validate();
  }
  std::cout << complexity_report(arch, n_list).table();
  return 0;
}

int cmd_eval_da(const std::string& ck_path, const std::string& testset) {
  Checkpoint ck = load_checkpoint(ck_path);
  if (ck.meta.kind != "adaptation")
    throw config_error("checkpoint " + ck_path + " is a \"" + ck.meta.kind +
                       "\" run, not an adaptation run");
  const int classes = ck.model.arch().num_classes;

  // test layout: one subdirectory per class index, PNGs inside
  if (!fs::is_directory(testset)) throw io_error("test set directory not found: " + testset);
  LabeledImageSet test;
  test.num_classes = classes;
  bool first = true;
  for (int c = 0; c < classes; ++c) {
    const std::string dir = testset + "/" + std::to_string(c);
    if (!fs::is_directory(dir)) continue;
    bool any = false;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.path().extension() == ".png") {
        any = true;
        break;
      }
    if (!any) continue;
    ImageSet clsset;
    if (first) {
      // native dimensions of the first class decide the evaluation size
      std::vector<std::string> files;
      for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".png") files.push_back(e.path().string());
      std::sort(files.begin(), files.end());
      auto img = read_png(files.front());
      if (img.h % 8 != 0 || img.w % 8 != 0)
        throw config_error("test images must have sides divisible by 8, got " +
                           std::to_string(img.h) + "x" + std::to_string(img.w));
      test.set.shape = {img.c, img.h, img.w};
      first = false;
    }
    clsset = load_png_dir(dir, test.set.shape[1], test.set.shape[2]);
    if (clsset.shape[0] != test.set.shape[0])
      throw config_error("class " + std::to_string(c) +
                         " channel count differs from class 0");
    test.set.images.insert(test.set.images.end(), clsset.images.begin(),
                           clsset.images.end());
    test.labels.insert(test.labels.end(), static_cast<std::size_t>(clsset.size()), c);
  }
  if (test.labels.empty())
    throw config_error("test set " + testset +
                       " is empty (expected class-index subdirectories of PNGs)");

  const double acc = evaluate_adaptation(ck.model, ck.meta.da_target, test);
  std::cout << "task " << ck.model.domain_name(ck.meta.da_source) << "->"
            << ck.model.domain_name(ck.meta.da_target) << ", accuracy " << acc
            << ", n_test " << test.set.size() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-domain image translation bank"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  bool has_seed = false;
  std::string out_dir;
  app.add_option("--seed", seed, "Override the config seed")
      ->each([&](const std::string&) { has_seed = true; });
  app.add_option("--out-dir", out_dir, "Override the config output directory");

  std::string config_path, ck_path, input, output, from, to, to1, to2, testset;
  int steps = 5;
  std::vector<std::int64_t> n_list{2, 3, 4, 5, 6};

  auto* train = app.add_subcommand("train", "Train from a config document");
  train->add_option("config", config_path, "JSON run config")->required();

  auto* translate = app.add_subcommand("translate", "Translate one image");
  translate->add_option("checkpoint", ck_path)->required();
  translate->add_option("input", input, "Input PNG")->required();
  translate->add_option("from", from, "Source domain name")->required();
  translate->add_option("to", to, "Target domain name")->required();
  translate->add_option("output", output, "Output PNG")->required();

  auto* fuse = app.add_subcommand("fuse", "Sweep a fused decoder between two domains");
  fuse->add_option("checkpoint", ck_path)->required();
  fuse->add_option("input", input, "Input PNG")->required();
  fuse->add_option("from", from, "Source domain name")->required();
  fuse->add_option("to1", to1, "First target domain")->required();
  fuse->add_option("to2", to2, "Second target domain")->required();
  fuse->add_option("--steps", steps, "Number of panels")->capture_default_str();
  fuse->add_option("--out-dir", out_dir, "Output directory (default: current)");

  auto* incr = app.add_subcommand("incr-add", "Add one domain to a trained bank");
  incr->add_option("checkpoint", ck_path, "Base checkpoint")->required();
  incr->add_option("config", config_path, "Incremental-mode run config")->required();
  incr->add_option("output", output, "Extended checkpoint path")->required();

  auto* params = app.add_subcommand("params", "Report bank vs pairwise parameter counts");
  params->add_option("source", config_path, "Run config or checkpoint")->required();
  params->add_option("--n", n_list, "Domain counts to tabulate (default 2..6)")
      ->delimiter(',');

  auto* eval = app.add_subcommand("eval-da", "Evaluate an adaptation checkpoint");
  eval->add_option("checkpoint", ck_path)->required();
  eval->add_option("testset", testset, "Directory of class-index PNG folders")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (train->parsed()) return cmd_train(config_path, has_seed, seed, out_dir);
    if (translate->parsed()) return cmd_translate(ck_path, input, from, to, output);
    if (fuse->parsed())
      return cmd_fuse(ck_path, input, from, to1, to2, steps,
                      out_dir.empty() ? "." : out_dir);
    if (incr->parsed())
      return cmd_incr_add(ck_path, config_path, output, has_seed, seed, out_dir);
    if (params->parsed()) return cmd_params(config_path, n_list);
    if (eval->parsed()) return cmd_eval_da(ck_path, testset);
  } catch (const divergence_error& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return 3;
  } catch (const error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
