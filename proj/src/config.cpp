#include "domainbank/config.hpp"

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

#include "domainbank/png_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace domainbank {

namespace {

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
  const std::string label = where.empty() ? "document root" : "\"" + where + "\"";
  if (!j.is_object()) throw config_error("config: " + label + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw config_error("config: unknown key \"" + it.key() + "\" in " + label);
  }
}

template <class T>
T field(const json& j, const std::string& where, const char* key, T dflt) {
  if (!j.contains(key)) return dflt;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw config_error("config: bad value for \"" + where + key + "\"");
  }
}

std::string req_string(const json& j, const std::string& where, const char* key) {
  if (!j.contains(key))
    throw config_error("config: missing required key \"" + where + key + "\"");
  return field<std::string>(j, where, key, "");
}

ArchConfig parse_arch(const json& j) {
  check_keys(j, "arch",
             {"in_channels", "channels", "enc_front_blocks", "shared_blocks",
              "dec_back_blocks", "down_kernel", "res_kernel", "lrelu_slope",
              "clf_hidden"});
  ArchConfig a;
  a.in_channels = field(j, "arch.", "in_channels", a.in_channels);
  a.channels = field(j, "arch.", "channels", a.channels);
  a.enc_front_blocks = field(j, "arch.", "enc_front_blocks", a.enc_front_blocks);
  a.shared_blocks = field(j, "arch.", "shared_blocks", a.shared_blocks);
  a.dec_back_blocks = field(j, "arch.", "dec_back_blocks", a.dec_back_blocks);
  a.down_kernel = field(j, "arch.", "down_kernel", a.down_kernel);
  a.res_kernel = field(j, "arch.", "res_kernel", a.res_kernel);
  a.lrelu_slope = field(j, "arch.", "lrelu_slope", a.lrelu_slope);
  a.clf_hidden = field(j, "arch.", "clf_hidden", a.clf_hidden);
  return a;
}

TrainConfig parse_train(const json& j) {
  check_keys(j, "train",
             {"steps", "batch_size", "random_pairs", "saturating_gan",
              "incremental_cycle_gan", "unfreeze_shared", "checkpoint_every", "adam",
              "weights"});
  TrainConfig t;
  t.steps = field(j, "train.", "steps", t.steps);
  t.batch_size = field(j, "train.", "batch_size", t.batch_size);
  t.random_pairs = field(j, "train.", "random_pairs", t.random_pairs);
  t.saturating_gan = field(j, "train.", "saturating_gan", t.saturating_gan);
  t.incremental_cycle_gan =
      field(j, "train.", "incremental_cycle_gan", t.incremental_cycle_gan);
  t.unfreeze_shared = field(j, "train.", "unfreeze_shared", t.unfreeze_shared);
  t.checkpoint_every = field(j, "train.", "checkpoint_every", t.checkpoint_every);
  if (j.contains("adam")) {
    const json& a = j.at("adam");
    check_keys(a, "train.adam", {"lr", "beta1", "beta2", "eps"});
    t.adam.lr = field(a, "train.adam.", "lr", t.adam.lr);
    t.adam.beta1 = field(a, "train.adam.", "beta1", t.adam.beta1);
    t.adam.beta2 = field(a, "train.adam.", "beta2", t.adam.beta2);
    t.adam.eps = field(a, "train.adam.", "eps", t.adam.eps);
  }
  if (j.contains("weights")) {
    const json& w = j.at("weights");
    check_keys(w, "train.weights", {"gan", "vae_kl", "vae_recon", "cyc_kl", "cyc_recon"});
    t.weights.gan = field(w, "train.weights.", "gan", t.weights.gan);
    t.weights.vae_kl = field(w, "train.weights.", "vae_kl", t.weights.vae_kl);
    t.weights.vae_recon = field(w, "train.weights.", "vae_recon", t.weights.vae_recon);
    t.weights.cyc_kl = field(w, "train.weights.", "cyc_kl", t.weights.cyc_kl);
    t.weights.cyc_recon = field(w, "train.weights.", "cyc_recon", t.weights.cyc_recon);
  }
  return t;
}

DataConfig parse_data(const json& j) {
  DataConfig d;
  d.kind = field(j, "data.", "kind", d.kind);
  if (d.kind == "synthetic-shapes") {
    check_keys(j, "data", {"kind", "n_per_domain", "size"});
    d.n_per_domain = field(j, "data.", "n_per_domain", d.n_per_domain);
    d.size = field(j, "data.", "size", d.size);
  } else if (d.kind == "synthetic-glyphs") {
    check_keys(j, "data", {"kind", "n_per_class", "size"});
    d.n_per_class = field(j, "data.", "n_per_class", d.n_per_class);
    d.size = field(j, "data.", "size", d.size);
  } else if (d.kind == "png-dir") {
    check_keys(j, "data", {"kind", "height", "width", "entries"});
    d.height = field(j, "data.", "height", d.height);
    d.width = field(j, "data.", "width", d.width);
  } else if (d.kind == "idx") {
    check_keys(j, "data", {"kind", "entries"});
  } else {
    throw config_error("config: unknown data kind \"" + d.kind +
                       "\" (expected synthetic-shapes, synthetic-glyphs, png-dir, or idx)");
  }
  if (j.contains("entries")) {
    const json& es = j.at("entries");
    if (!es.is_array()) throw config_error("config: \"data.entries\" must be an array");
    for (const json& e : es) {
      check_keys(e, "data.entries[]", {"name", "path", "labels"});
      DomainDataEntry de;
      de.name = req_string(e, "data.entries[].", "name");
      de.path = req_string(e, "data.entries[].", "path");
      de.labels = field<std::string>(e, "data.entries[].", "labels", "");
      d.entries.push_back(std::move(de));
    }
  }
  return d;
}

int domain_index_of(const std::vector<std::string>& domains, const std::string& name,
                    const std::string& where) {
  for (std::size_t i = 0; i < domains.size(); ++i)
    if (domains[i] == name) return static_cast<int>(i);
  throw config_error("config: " + where + " names unknown domain \"" + name + "\"");
}

}  // namespace

RunConfig parse_run_config(const json& j) {
  check_keys(j, "",
             {"mode", "seed", "out_dir", "domains", "new_domain", "arch", "train", "data",
              "adaptation"});
  RunConfig c;
  c.mode = field<std::string>(j, "", "mode", c.mode);
  c.seed = field<std::uint64_t>(j, "", "seed", c.seed);
  c.out_dir = field<std::string>(j, "", "out_dir", c.out_dir);
  if (j.contains("arch")) c.arch = parse_arch(j.at("arch"));
  if (j.contains("train")) c.train = parse_train(j.at("train"));
  if (j.contains("data")) c.data = parse_data(j.at("data"));

  const bool file_kind = c.data.kind == "png-dir" || c.data.kind == "idx";
  if (file_kind) {
    if (j.contains("domains"))
      throw config_error(
          "config: \"domains\" is derived from data.entries for file-backed kinds");
    if (c.data.entries.empty())
      throw config_error("config: data kind \"" + c.data.kind +
                         "\" requires data.entries");
    for (const auto& e : c.data.entries) c.domains.push_back(e.name);
  } else {
    if (!c.data.entries.empty())
      throw config_error("config: data.entries is only valid for png-dir and idx kinds");
    if (!j.contains("domains"))
      throw config_error("config: synthetic kinds require a \"domains\" name list");
    c.domains = field(j, "", "domains", std::vector<std::string>{});
  }

  c.new_domain = field<std::string>(j, "", "new_domain", "");

  if (j.contains("adaptation")) {
    if (c.mode != "adaptation")
      throw config_error("config: \"adaptation\" block requires mode \"adaptation\"");
    const json& a = j.at("adaptation");
    check_keys(a, "adaptation",
               {"source", "target", "num_classes", "clf_weight", "augment_translated",
                "augment_after"});
    c.adaptation.source = domain_index_of(
        c.domains, req_string(a, "adaptation.", "source"), "adaptation.source");
    c.adaptation.target = domain_index_of(
        c.domains, req_string(a, "adaptation.", "target"), "adaptation.target");
    c.adaptation.num_classes =
        field(a, "adaptation.", "num_classes", c.adaptation.num_classes);
    c.adaptation.clf_weight = field(a, "adaptation.", "clf_weight", c.adaptation.clf_weight);
    c.adaptation.augment_translated =
        field(a, "adaptation.", "augment_translated", c.adaptation.augment_translated);
    c.adaptation.augment_after =
        field(a, "adaptation.", "augment_after", c.adaptation.augment_after);
  } else if (c.mode == "adaptation") {
    throw config_error("config: mode \"adaptation\" requires an \"adaptation\" block");
  }
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw format_error("config file " + path + " is not valid JSON: " + e.what());
  }
  return parse_run_config(j);
}

void RunConfig::validate() const {
  if (mode != "joint" && mode != "adaptation" && mode != "incremental")
    throw config_error("config: unknown mode \"" + mode +
                       "\" (expected joint, adaptation, or incremental)");
  if (domains.size() < 2) throw config_error("config: at least two domains required");
  std::set<std::string> seen;
  for (const auto& d : domains) {
    if (d.empty()) throw config_error("config: empty domain name");
    if (!seen.insert(d).second)
      throw config_error("config: duplicate domain name \"" + d + "\"");
  }
  arch.validate();
  train.validate();

  if (data.kind == "synthetic-shapes") {
    if (domains.size() > 3)
      throw config_error("config: synthetic-shapes provides at most 3 domains");
    if (data.n_per_domain < 1) throw config_error("config: n_per_domain must be >= 1");
    if (data.size < 8 || data.size % 8 != 0)
      throw config_error("config: synthetic size must be >= 8 and divisible by 8");
    if (arch.in_channels != 1)
      throw config_error("config: synthetic-shapes images have 1 channel");
  } else if (data.kind == "synthetic-glyphs") {
    if (domains.size() != 2)
      throw config_error("config: synthetic-glyphs provides exactly 2 domains");
    if (data.n_per_class < 1) throw config_error("config: n_per_class must be >= 1");
    if (data.size < 8 || data.size % 8 != 0)
      throw config_error("config: synthetic size must be >= 8 and divisible by 8");
    if (arch.in_channels != 1)
      throw config_error("config: synthetic-glyphs images have 1 channel");
  } else if (data.kind == "png-dir") {
    if (data.height < 8 || data.height % 8 != 0 || data.width < 8 || data.width % 8 != 0)
      throw config_error("config: png-dir height/width must be >= 8 and divisible by 8");
  }

  for (const auto& e : data.entries) {
    if (!fs::exists(e.path))
      throw config_error("config: data path does not exist: " + e.path);
    if (!e.labels.empty() && !fs::exists(e.labels))
      throw config_error("config: label path does not exist: " + e.labels);
    if (data.kind == "png-dir" && !e.labels.empty())
      throw config_error("config: png-dir entries cannot carry labels");
  }

  if (mode == "adaptation") {
    adaptation.validate();
    if (adaptation.source >= static_cast<int>(domains.size()) ||
        adaptation.target >= static_cast<int>(domains.size()))
      throw config_error("config: adaptation source/target out of range");
    if (data.kind == "synthetic-shapes")
      throw config_error("config: synthetic-shapes carries no labels; use "
                         "synthetic-glyphs or idx for adaptation");
    if (data.kind == "png-dir")
      throw config_error("config: png-dir carries no labels; use synthetic-glyphs or "
                         "idx for adaptation");
    if (data.kind == "synthetic-glyphs") {
      if (adaptation.source != 0 || adaptation.target != 1)
        throw config_error(
            "config: the glyph generator labels the first domain; adaptation.source "
            "must name it and adaptation.target the second");
      if (adaptation.num_classes != 3)
        throw config_error("config: synthetic glyphs are a 3-class task");
    }
    if (data.kind == "idx") {
      for (std::size_t i = 0; i < data.entries.size(); ++i) {
        const bool is_source = static_cast<int>(i) == adaptation.source;
        if (is_source && data.entries[i].labels.empty())
          throw config_error("config: adaptation source \"" + data.entries[i].name +
                             "\" needs a labels file");
        if (!is_source && !data.entries[i].labels.empty())
          throw config_error("config: only the adaptation source may carry labels; "
                             "evaluation uses its own test set");
      }
    }
  } else {
    for (const auto& e : data.entries)
      if (!e.labels.empty())
        throw config_error("config: labels are only consumed in adaptation mode");
  }

  if (mode == "incremental") {
    if (new_domain.empty())
      throw config_error("config: incremental mode requires \"new_domain\"");
    domain_index_of(domains, new_domain, "new_domain");
    if (data.kind == "synthetic-glyphs")
      throw config_error("config: synthetic-glyphs is fixed at 2 domains and cannot "
                         "host an incremental addition");
  } else if (!new_domain.empty()) {
    throw config_error("config: \"new_domain\" requires incremental mode");
  }
}

LoadedData build_data(const RunConfig& cfg) {
  LoadedData out;
  const auto gen_seed = mix_seed(cfg.seed, "data.gen");
  if (cfg.data.kind == "synthetic-shapes") {
    out.domains = synthetic_shapes(static_cast<int>(cfg.domains.size()),
                                   cfg.data.n_per_domain, cfg.data.size, gen_seed);
  } else if (cfg.data.kind == "synthetic-glyphs") {
    GlyphData g = synthetic_glyphs(cfg.data.n_per_class, cfg.data.size, gen_seed);
    out.source_labeled = g.source;
    out.target_test = g.target_test;
    out.domains.push_back(std::move(g.source.set));
    out.domains.push_back(std::move(g.target));
  } else if (cfg.data.kind == "png-dir") {
    for (const auto& e : cfg.data.entries)
      out.domains.push_back(load_png_dir(e.path, cfg.data.height, cfg.data.width));
  } else if (cfg.data.kind == "idx") {
    for (std::size_t i = 0; i < cfg.data.entries.size(); ++i) {
      const auto& e = cfg.data.entries[i];
      if (cfg.mode == "adaptation" && static_cast<int>(i) == cfg.adaptation.source) {
        out.source_labeled = load_idx_pair(e.path, e.labels, cfg.adaptation.num_classes);
        out.domains.push_back(out.source_labeled.set);
      } else {
        out.domains.push_back(idx_to_image_set(load_idx_images(e.path)));
      }
    }
  } else {
    throw config_error("config: unknown data kind \"" + cfg.data.kind + "\"");
  }

  for (std::size_t i = 0; i < out.domains.size(); ++i) {
    const auto& s = out.domains[i].shape;
    if (s[0] != cfg.arch.in_channels)
      throw config_error("config: domain \"" + cfg.domains[i] + "\" has " +
                         std::to_string(s[0]) + " channels, arch expects " +
                         std::to_string(cfg.arch.in_channels));
    if (s[1] != out.domains[0].shape[1] || s[2] != out.domains[0].shape[2])
      throw config_error("config: domain \"" + cfg.domains[i] +
                         "\" image size differs from domain \"" + cfg.domains[0] + "\"");
    if (out.domains[i].size() < cfg.train.batch_size)
      throw config_error("config: domain \"" + cfg.domains[i] + "\" has only " +
                         std::to_string(out.domains[i].size()) +
                         " images for batch size " +
                         std::to_string(cfg.train.batch_size));
  }
  return out;
}

}  // namespace domainbank
