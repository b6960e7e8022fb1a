#include "cfpn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "cfpn/error.hpp"

namespace cfpn {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'C', 'F', 'P', 'N'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t offset() const { return pos_; }

  std::uint32_t u32() {
    need(4, "u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  void raw(void* dst, std::size_t n, const char* what) {
    need(n, what);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) throw DecodeError(std::string("checkpoint truncated while reading ") + what, pos_);
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

NamedTensors model_records(const CfpnModel& model) {
  NamedTensors records;
  const ModelConfig& cfg = model.config();
  const auto& bb = cfg.backbone;
  records.emplace_back("meta.backbone", Tensor({6}, {static_cast<double>(bb.stem_channels),
                                                     static_cast<double>(bb.block_channels[0]),
                                                     static_cast<double>(bb.block_channels[1]),
                                                     static_cast<double>(bb.block_channels[2]),
                                                     static_cast<double>(bb.block_channels[3]),
                                                     static_cast<double>(bb.input_height)}));
  records.emplace_back("meta.input_width", Tensor::scalar(static_cast<double>(bb.input_width)));
  records.emplace_back("meta.cfa_variant", Tensor::scalar(static_cast<double>(cfg.cfa)));
  if (cfg.cfd) {
    std::vector<double> levels(cfg.cfd->active_levels.begin(), cfg.cfd->active_levels.end());
    records.emplace_back("meta.cfd_levels", Tensor({levels.size()}, levels));
  }
  const ParamStore& p = model.params();
  for (const auto& name : p.names()) records.emplace_back(name, p.at(name));
  for (const auto& name : p.buffer_names()) records.emplace_back(name, p.at(name));
  return records;
}

std::size_t as_count(double v, const std::string& field) {
  if (!(v >= 0.0) || v != static_cast<double>(static_cast<std::size_t>(v))) {
    throw ConfigError("checkpoint field " + field + " holds a non-integer value");
  }
  return static_cast<std::size_t>(v);
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const NamedTensors& records) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, kCheckpointVersion);
  for (const auto& [name, t] : records) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    const auto* bytes = reinterpret_cast<const std::uint8_t*>(t.data());
    out.insert(out.end(), bytes, bytes + t.numel() * sizeof(double));
  }
  return out;
}

NamedTensors decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw DecodeError("checkpoint magic is not CFPN", 0);
  }
  Reader r(bytes);
  char magic[4];
  r.raw(magic, 4, "magic");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw DecodeError("unsupported checkpoint version " + std::to_string(version), 4);
  }
  NamedTensors records;
  while (!r.done()) {
    const std::uint32_t len = r.u32();
    std::string name(len, '\0');
    r.raw(name.data(), len, "record name");
    const std::uint32_t rank = r.u32();
    Shape shape(rank);
    for (auto& d : shape) d = r.u32();
    if (shape_numel(shape) > r.remaining() / sizeof(double)) {
      throw DecodeError("checkpoint record '" + name + "' payload exceeds file size", r.offset());
    }
    Tensor t(shape);
    r.raw(t.data(), t.numel() * sizeof(double), "payload");
    records.emplace_back(std::move(name), std::move(t));
  }
  return records;
}

void save_checkpoint(const std::filesystem::path& path, const CfpnModel& model) {
  const auto bytes = encode_checkpoint(model_records(model));
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ConfigError("cannot open checkpoint for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw ConfigError("failed writing checkpoint: " + path.string());
}

CfpnModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open checkpoint: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  NamedTensors records = decode_checkpoint(bytes);

  ModelConfig cfg;
  cfg.cfd.reset();
  bool have_backbone = false, have_variant = false;
  std::map<std::string, Tensor> values;
  for (auto& [name, t] : records) {
    if (name == "meta.backbone") {
      if (t.numel() != 6) throw ConfigError("checkpoint meta.backbone must hold 6 values");
      cfg.backbone.stem_channels = as_count(t[0], name);
      for (int b = 0; b < 4; ++b) cfg.backbone.block_channels[b] = as_count(t[b + 1], name);
      cfg.backbone.input_height = as_count(t[5], name);
      have_backbone = true;
    } else if (name == "meta.input_width") {
      cfg.backbone.input_width = as_count(t[0], name);
    } else if (name == "meta.cfa_variant") {
      const std::size_t v = as_count(t[0], name);
      if (v > 3) throw ConfigError("checkpoint holds unknown CFA variant");
      cfg.cfa = static_cast<CfaVariant>(v);
      have_variant = true;
    } else if (name == "meta.cfd_levels") {
      CfdConfig cfd;
      cfd.active_levels.clear();
      for (double v : t.values()) cfd.active_levels.push_back(static_cast<int>(as_count(v, name)));
      cfg.cfd = cfd;
    } else {
      values.emplace(name, std::move(t));
    }
  }
  if (!have_backbone || !have_variant) throw ConfigError("checkpoint lacks model metadata: " + path.string());

  // Rebuild in canonical registration order, then overwrite with stored values.
  ParamStore params = init_model_params(cfg, 0);
  std::size_t used = 0;
  auto adopt = [&](const std::vector<std::string>& names) {
    for (const auto& name : names) {
      auto it = values.find(name);
      if (it == values.end()) throw ConfigError("checkpoint lacks '" + name + "'");
      if (it->second.shape() != params.at(name).shape()) {
        throw ConfigError("checkpoint entry '" + name + "' has shape " + to_string(it->second.shape()) +
                          ", expected " + to_string(params.at(name).shape()));
      }
      params.at(name) = it->second;
      ++used;
    }
  };
  adopt(params.names());
  adopt(params.buffer_names());
  if (used != values.size()) throw ConfigError("checkpoint holds entries unknown to " + cfg.describe());
  return CfpnModel(cfg, std::move(params));
}

}  // namespace cfpn
