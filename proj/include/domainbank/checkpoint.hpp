#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "domainbank/adam.hpp"
#include "domainbank/model.hpp"

// Binary checkpoint: a length-prefixed header, a JSON metadata record, and a
// sequence of named float blobs, each CRC32-guarded. Shared stacks appear as
// single "shared.*" blobs no matter how many domains reference them, so the
// file size stays affine in the domain count. Writes go through a temp file
// and a rename, so a crash never leaves a half-written checkpoint behind.

namespace domainbank {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Training-run state that rides along with the weights.
struct TrainMeta {
  std::string kind = "joint";  // joint | incremental | adaptation
  std::int64_t step = 0;
  std::uint64_t trainer_seed = 0;
  std::string scheduler_state;
  std::string data_state;
  int da_source = -1;  // adaptation checkpoints name their domain roles
  int da_target = -1;
};

struct Checkpoint {
  DomainBankModel model;
  Adam optimizer;
  TrainMeta meta;
};

/// Serializes model weights, optimizer slots, and run metadata. Atomic:
/// the target path either keeps its old content or holds the full new file.
void save_checkpoint(const DomainBankModel& model, const Adam& optimizer,
                     const TrainMeta& meta, const std::string& path);

/// Rebuilds the model (shared stacks stay aliased across domains, exactly as
/// in a freshly constructed model) and overwrites every parameter from the
/// stored blobs. Rejects wrong magic/version, architecture-hash mismatch,
/// truncation, and payloads whose CRC32 does not match.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace domainbank
