#pragma once

#include <string>

#include "domainbank/model.hpp"

// Decoder fusion: a convex parameter-space blend of two domains' decoder
// backs, usable as a synthetic output port. Only the domain-specific back is
// blended; the shared decoder head is common to both sources, so blending it
// would be the identity. Building a fused decoder never mutates the model.

namespace domainbank {

struct FusedDecoder {
  int b1 = -1, b2 = -1;
  double lambda = 0.0;  // weight on b1; 1 - lambda goes to b2
  DecoderBackT<float> back;
};

/// Blends every parameter as lambda*p1 + (1-lambda)*p2. The endpoints copy
/// the source decoder outright, so lambda = 1 reproduces b1 and lambda = 0
/// reproduces b2 bit-exactly.
FusedDecoder fuse_decoders(const DomainBankModel& model, int b1, int b2, double lambda);

/// Deterministic translation from `from` through the fused port.
TensorT<float> translate_fused(TapeT<float>& tape, const DomainBankModel& model, int from,
                               const FusedDecoder& fused, const TensorT<float>& x);

/// Translates one image through lambda = 0, 1/(steps-1), ..., 1 and writes
/// the panels as one horizontal strip named
/// fuse_<from>_to_<b1>-<b2>_<steps>.png under out_dir. Returns the path.
std::string fusion_sweep(const DomainBankModel& model, const TensorT<float>& x, int from,
                         int b1, int b2, int steps, const std::string& out_dir);

}  // namespace domainbank
