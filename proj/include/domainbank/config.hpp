#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "domainbank/adaptation.hpp"
#include "domainbank/data.hpp"
#include "domainbank/model.hpp"
#include "domainbank/trainer.hpp"

// Declarative run configuration. One JSON document drives a whole run so
// experiments are reproducible from a single artifact. Parsing is strict:
// unknown keys anywhere are an error, as is a key of the wrong type.

namespace domainbank {

struct DomainDataEntry {
  std::string name;
  std::string path;    // PNG directory or IDX image file
  std::string labels;  // IDX label file; adaptation source only
};

struct DataConfig {
  std::string kind = "synthetic-shapes";  // synthetic-shapes | synthetic-glyphs
                                          // | png-dir | idx
  std::int64_t n_per_domain = 256;        // synthetic-shapes
  std::int64_t n_per_class = 120;         // synthetic-glyphs
  std::int64_t size = 32;                 // synthetic image side
  std::int64_t height = 64, width = 64;   // png-dir resize target
  int num_classes = 3;                    // glyphs / labeled idx
  std::vector<DomainDataEntry> entries;   // png-dir / idx, one per domain
};

struct RunConfig {
  std::string mode = "joint";  // joint | adaptation | incremental
  std::uint64_t seed = 0;
  std::string out_dir = "run";
  std::vector<std::string> domains;
  std::string new_domain;  // incremental mode: which name is being added
  ArchConfig arch;
  TrainConfig train;
  DataConfig data;
  AdaptationConfig adaptation;  // consulted only in adaptation mode

  /// Structural checks plus existence of every referenced path.
  void validate() const;
};

/// Strict parse. Missing keys fall back to defaults; unknown keys, wrong
/// types, and name-resolution failures throw config_error.
RunConfig parse_run_config(const nlohmann::json& j);

/// Reads and parses a JSON config file.
RunConfig load_run_config(const std::string& path);

/// Materialized datasets for a run. `domains` always carries one ImageSet
/// per configured domain; the labeled members are filled in adaptation
/// mode only (target labels are never loaded for training — evaluation
/// gets its own test set).
struct LoadedData {
  std::vector<ImageSet> domains;
  LabeledImageSet source_labeled;
  LabeledImageSet target_test;  // empty unless the kind provides a split
};

LoadedData build_data(const RunConfig& cfg);

}  // namespace domainbank
