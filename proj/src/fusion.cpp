#include "domainbank/fusion.hpp"

#include <filesystem>

#include "domainbank/png_io.hpp"

namespace domainbank {

FusedDecoder fuse_decoders(const DomainBankModel& model, int b1, int b2, double lambda) {
  if (b1 == b2) throw config_error("fuse: the two source decoders must differ");
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw config_error("fuse: lambda must lie in [0,1], got " + std::to_string(lambda));
  const auto& d1 = model.bank(b1).dec_back;  // also validates the indices
  const auto& d2 = model.bank(b2).dec_back;

  FusedDecoder out;
  out.b1 = b1;
  out.b2 = b2;
  out.lambda = lambda;
  // Fresh construction gives an independent parameter store with the same
  // structure; every value is overwritten below.
  Rng scratch(0);
  out.back = DecoderBackT<float>(model.arch(), scratch);

  NamedParams pf, p1, p2;
  out.back.collect("f", pf);
  d1.collect("f", p1);
  d2.collect("f", p2);
  for (std::size_t i = 0; i < pf.size(); ++i) {
    auto& dst = pf[i].second.vec();
    const auto& a = p1[i].second.vec();
    const auto& b = p2[i].second.vec();
    if (lambda == 1.0) {
      dst = a;  // endpoint copies keep the constituent bits exactly
    } else if (lambda == 0.0) {
      dst = b;
    } else {
      for (std::size_t k = 0; k < dst.size(); ++k)
        dst[k] = static_cast<float>(lambda * a[k] + (1.0 - lambda) * b[k]);
    }
  }
  return out;
}

TensorT<float> translate_fused(TapeT<float>& tape, const DomainBankModel& model, int from,
                               const FusedDecoder& fused, const TensorT<float>& x) {
  return model.decode_with(tape, fused.back, model.encode_mu(tape, from, x));
}

std::string fusion_sweep(const DomainBankModel& model, const TensorT<float>& x, int from,
                         int b1, int b2, int steps, const std::string& out_dir) {
  if (steps < 2) throw config_error("fuse: sweep needs at least 2 steps");
  if (x.rank() != 4 || x.dim(0) != 1)
    throw contract_error("fuse: sweep expects a single image, shape (1,C,H,W)");

  TensorT<float> strip = TensorT<float>::zeros(
      {static_cast<std::int64_t>(steps), x.dim(1), x.dim(2), x.dim(3)});
  const std::int64_t panel = x.numel();
  for (int i = 0; i < steps; ++i) {
    const double lambda = static_cast<double>(i) / (steps - 1);
    const FusedDecoder fused = fuse_decoders(model, b1, b2, lambda);
    TapeT<float> tape;
    auto out = translate_fused(tape, model, from, fused, x);
    std::copy(out.data(), out.data() + panel, strip.data() + i * panel);
  }

  const std::string name = "fuse_" + model.domain_name(from) + "_to_" + model.domain_name(b1) +
                           "-" + model.domain_name(b2) + "_" + std::to_string(steps) + ".png";
  const auto path = (std::filesystem::path(out_dir) / name).string();
  write_strip_png(path, strip);
  return path;
}

}  // namespace domainbank
