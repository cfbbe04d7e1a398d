#include "domainbank/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

// Layout (all integers little-endian):
//   "DBNK"  u32 version  u64 total_length
//   u64 meta_length  meta JSON bytes  u32 crc32(meta)
//   u32 blob_count
//   per blob: u16 name_length, name, u8 ndim, u32 dims[ndim],
//             u64 payload_bytes, f32 payload, u32 crc32(payload)
// Blob payloads are the in-memory float representation, so the format is
// only defined on little-endian hosts.
static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");
static_assert(sizeof(float) == 4);

namespace domainbank {
namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'D', 'B', 'N', 'K'};

template <class T>
void put(std::string& out, T v) {
  char raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  out.append(raw, sizeof(T));
}

std::uint32_t crc_of(const void* data, std::size_t n) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, static_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& path) : b_(bytes), path_(path) {}

  template <class T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string take(std::size_t n, const char* what) {
    need(n, what);
    std::string out = b_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  void take_floats(std::vector<float>& dst, std::size_t nbytes, const char* what) {
    need(nbytes, what);
    dst.resize(nbytes / sizeof(float));
    std::memcpy(dst.data(), b_.data() + pos_, nbytes);
    pos_ += nbytes;
  }

  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n, const char* what) const {
    if (n > b_.size() - pos_)  // pos_ <= size always holds, so no overflow
      throw format_error(path_ + ": truncated reading " + what + " at offset " +
                         std::to_string(pos_));
  }

  const std::string& b_;
  std::string path_;
  std::size_t pos_ = 0;
};

void append_blob(std::string& out, const std::string& name, const Shape& shape,
                 const std::vector<float>& data) {
  if (name.size() > 0xffff) throw contract_error("checkpoint: blob name too long");
  put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
  out.append(name);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(shape.size()));
  for (auto d : shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  const std::uint64_t nbytes = data.size() * sizeof(float);
  put<std::uint64_t>(out, nbytes);
  const std::size_t payload_at = out.size();
  out.append(reinterpret_cast<const char*>(data.data()), nbytes);
  put<std::uint32_t>(out, crc_of(out.data() + payload_at, nbytes));
}

struct RawBlob {
  Shape shape;
  std::vector<float> data;
};

json meta_to_json(const DomainBankModel& model, const Adam& optimizer, const TrainMeta& meta) {
  json adam_t = json::object();
  for (const auto& [name, slot] : optimizer.slots()) adam_t[name] = slot.t;
  return json{{"arch", model.arch().to_json()},
              {"arch_hash", model.arch().hash()},
              {"domain_names", model.domain_names()},
              {"model_seed", model.seed()},
              {"kind", meta.kind},
              {"step", meta.step},
              {"trainer_seed", meta.trainer_seed},
              {"scheduler_state", meta.scheduler_state},
              {"data_state", meta.data_state},
              {"da_source", meta.da_source},
              {"da_target", meta.da_target},
              {"adam",
               {{"lr", optimizer.hp().lr},
                {"beta1", optimizer.hp().beta1},
                {"beta2", optimizer.hp().beta2},
                {"eps", optimizer.hp().eps}}},
              {"adam_t", adam_t}};
}

}  // namespace

void save_checkpoint(const DomainBankModel& model, const Adam& optimizer,
                     const TrainMeta& meta, const std::string& path) {
  std::string out;
  out.append(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  const std::size_t length_at = out.size();
  put<std::uint64_t>(out, 0);  // patched below

  const std::string meta_bytes = meta_to_json(model, optimizer, meta).dump();
  put<std::uint64_t>(out, meta_bytes.size());
  out.append(meta_bytes);
  put<std::uint32_t>(out, crc_of(meta_bytes.data(), meta_bytes.size()));

  const auto params = model.parameters();
  std::uint32_t blob_count = static_cast<std::uint32_t>(params.size());
  for (const auto& [name, slot] : optimizer.slots()) {
    (void)name;
    blob_count += 2;
  }
  put<std::uint32_t>(out, blob_count);
  for (const auto& [name, p] : params) append_blob(out, name, p.shape(), p.vec());
  for (const auto& [name, slot] : optimizer.slots()) {
    const Shape s = {static_cast<std::int64_t>(slot.m.size())};
    append_blob(out, "adam.m." + name, s, slot.m);
    append_blob(out, "adam.v." + name, s, slot.v);
  }

  const std::uint64_t total = out.size();
  std::memcpy(out.data() + length_at, &total, sizeof(total));

  namespace fs = std::filesystem;
  const fs::path target(path);
  const fs::path tmp = target.parent_path().empty()
                           ? fs::path(path + ".tmp")
                           : target.parent_path() / (target.filename().string() + ".tmp");
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw io_error("checkpoint: cannot open '" + tmp.string() + "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw io_error("checkpoint: write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw io_error("checkpoint: rename to '" + path + "' failed: " + ec.message());
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  std::string bytes;
  {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("checkpoint: cannot open '" + path + "'");
    bytes.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  }

  Reader r(bytes, path);
  const std::string magic = r.take(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0)
    throw format_error(path + ": not a checkpoint (bad magic)");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion)
    throw format_error(path + ": unsupported checkpoint version " + std::to_string(version) +
                       " (expected " + std::to_string(kCheckpointVersion) + ")");
  const auto total = r.get<std::uint64_t>("total length");
  if (total != bytes.size())
    throw format_error(path + ": length header says " + std::to_string(total) +
                       " bytes, file has " + std::to_string(bytes.size()));

  const auto meta_len = r.get<std::uint64_t>("metadata length");
  const std::string meta_bytes = r.take(meta_len, "metadata");
  if (r.get<std::uint32_t>("metadata checksum") != crc_of(meta_bytes.data(), meta_bytes.size()))
    throw format_error(path + ": metadata checksum mismatch");

  json meta_json;
  try {
    meta_json = json::parse(meta_bytes);
  } catch (const json::exception& e) {
    throw format_error(path + ": metadata is not valid JSON: " + e.what());
  }

  Checkpoint ck;
  try {
    const ArchConfig arch = ArchConfig::from_json(meta_json.at("arch"));
    if (meta_json.at("arch_hash").get<std::uint64_t>() != arch.hash())
      throw format_error(path + ": architecture hash mismatch");
    const auto names = meta_json.at("domain_names").get<std::vector<std::string>>();
    const auto model_seed = meta_json.at("model_seed").get<std::uint64_t>();
    ck.model = DomainBankModel(arch, names, model_seed);

    ck.meta.kind = meta_json.at("kind").get<std::string>();
    ck.meta.step = meta_json.at("step").get<std::int64_t>();
    ck.meta.trainer_seed = meta_json.at("trainer_seed").get<std::uint64_t>();
    ck.meta.scheduler_state = meta_json.at("scheduler_state").get<std::string>();
    ck.meta.data_state = meta_json.at("data_state").get<std::string>();
    ck.meta.da_source = meta_json.at("da_source").get<int>();
    ck.meta.da_target = meta_json.at("da_target").get<int>();

    AdamHp hp;
    hp.lr = meta_json.at("adam").at("lr").get<double>();
    hp.beta1 = meta_json.at("adam").at("beta1").get<double>();
    hp.beta2 = meta_json.at("adam").at("beta2").get<double>();
    hp.eps = meta_json.at("adam").at("eps").get<double>();
    ck.optimizer.set_hp(hp);
    for (const auto& [name, t] : meta_json.at("adam_t").items())
      ck.optimizer.slots()[name].t = t.get<std::int64_t>();
  } catch (const json::exception& e) {
    throw format_error(path + ": bad metadata: " + std::string(e.what()));
  }

  const auto blob_count = r.get<std::uint32_t>("blob count");
  std::map<std::string, RawBlob> blobs;
  for (std::uint32_t i = 0; i < blob_count; ++i) {
    const auto name_len = r.get<std::uint16_t>("blob name length");
    const std::string name = r.take(name_len, "blob name");
    const auto ndim = r.get<std::uint8_t>("blob rank");
    RawBlob blob;
    for (std::uint8_t d = 0; d < ndim; ++d)
      blob.shape.push_back(r.get<std::uint32_t>("blob dims"));
    const auto nbytes = r.get<std::uint64_t>("blob payload length");
    std::uint64_t numel = 1;
    for (auto d : blob.shape) {
      numel *= static_cast<std::uint64_t>(d);
      if (numel > (std::uint64_t{1} << 40))
        throw format_error(path + ": blob '" + name + "' dims are implausibly large");
    }
    if (nbytes != numel * sizeof(float))
      throw format_error(path + ": blob '" + name + "' payload length disagrees with dims");
    r.take_floats(blob.data, nbytes, "blob payload");
    const auto stored_crc = r.get<std::uint32_t>("blob checksum");
    if (stored_crc != crc_of(blob.data.data(), nbytes))
      throw format_error(path + ": blob '" + name + "' checksum mismatch");
    if (!blobs.emplace(name, std::move(blob)).second)
      throw format_error(path + ": duplicate blob '" + name + "'");
  }
  if (!r.done())
    throw format_error(path + ": " + std::to_string(bytes.size() - r.pos()) +
                       " trailing bytes after last blob");

  auto params = ck.model.parameters();
  for (auto& [name, p] : params) {
    auto it = blobs.find(name);
    if (it == blobs.end()) throw format_error(path + ": missing parameter blob '" + name + "'");
    if (it->second.shape != p.shape())
      throw format_error(path + ": blob '" + name + "' has shape " + shape_str(it->second.shape) +
                         ", model expects " + shape_str(p.shape()));
    p.vec() = std::move(it->second.data);
    blobs.erase(it);
  }
  for (auto& [name, blob] : blobs) {
    const bool is_m = name.rfind("adam.m.", 0) == 0;
    const bool is_v = name.rfind("adam.v.", 0) == 0;
    if (!is_m && !is_v) throw format_error(path + ": unexpected blob '" + name + "'");
    auto& slot = ck.optimizer.slots()[name.substr(7)];
    (is_m ? slot.m : slot.v) = std::move(blob.data);
  }
  for (const auto& [name, slot] : ck.optimizer.slots())
    if (slot.m.size() != slot.v.size())
      throw format_error(path + ": optimizer slot '" + name + "' has mismatched moments");
  return ck;
}

}  // namespace domainbank
