#include "tinyformer/checkpoint.hpp"

#include <bit>
#include <cstring>

namespace eemp {
namespace {

constexpr std::string_view kMagic = "EEMP";

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError(CheckpointError::Reason::truncated,
                            std::string("truncated checkpoint while reading ") + what);
    }
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::uint32_t u32(const char* what) {
    auto s = take(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[i])) << (8 * i);
    return v;
  }

  std::uint64_t u64(const char* what) {
    auto s = take(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[i])) << (8 * i);
    return v;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const Checkpoint& ck) {
  std::string out(kMagic);
  put_u32(out, kCheckpointVersion);
  const std::string header = ck.header.dump();
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  put_u32(out, static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& [name, t] : ck.tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) put_u64(out, static_cast<std::uint64_t>(d));
    for (double v : t.data) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  using R = CheckpointError::Reason;
  Reader in(bytes);
  if (bytes.size() < kMagic.size() || bytes.substr(0, kMagic.size()) != kMagic) {
    throw CheckpointError(R::bad_magic, "bad magic: not an EEMP checkpoint");
  }
  in.take(kMagic.size(), "magic");
  const auto version = in.u32("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(R::version_mismatch, "checkpoint version " + std::to_string(version) +
                                                   " is not supported (expected " +
                                                   std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ck;
  const auto header_len = in.u32("header length");
  const auto header = in.take(header_len, "header");
  try {
    ck.header = json::parse(header);
  } catch (const json::parse_error& e) {
    throw CheckpointError(R::malformed, std::string("malformed checkpoint header: ") + e.what());
  }
  const auto count = in.u32("tensor count");
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto name_len = in.u32("tensor name length");
    std::string name(in.take(name_len, "tensor name"));
    const auto rank = in.u32("tensor rank");
    if (rank > 8) throw CheckpointError(R::malformed, "tensor '" + name + "' has implausible rank");
    Tensor t;
    std::uint64_t elements = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      const auto d = in.u64("tensor dims");
      if (d > (std::uint64_t{1} << 40)) throw CheckpointError(R::malformed, "tensor '" + name + "' dim too large");
      t.shape.push_back(static_cast<std::int64_t>(d));
      elements *= d;
    }
    if (elements * 4 > in.remaining()) {
      throw CheckpointError(R::truncated, "truncated checkpoint: tensor '" + name + "' declares shape " +
                                              shape_string(t.shape) + " but the payload is shorter");
    }
    auto payload = in.take(static_cast<std::size_t>(elements * 4), "tensor payload");
    t.data.resize(static_cast<std::size_t>(elements));
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) {
        bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(payload[i * 4 + b])) << (8 * b);
      }
      t.data[i] = static_cast<double>(std::bit_cast<float>(bits));
    }
    if (!ck.tensors.emplace(std::move(name), std::move(t)).second) {
      throw CheckpointError(R::malformed, "duplicate tensor name in checkpoint");
    }
  }
  if (in.remaining() != 0) {
    throw CheckpointError(R::malformed, "checkpoint has " + std::to_string(in.remaining()) + " trailing bytes");
  }
  return ck;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  write_text_file(path, encode_checkpoint(checkpoint));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_text_file(path));
}

void save_checkpoint(const Parameters& params, const std::filesystem::path& path, const json& metadata) {
  Checkpoint ck;
  ck.header = {{"kind", "model"}, {"config", model_config_to_json(params.config)}};
  if (!metadata.is_null()) ck.header["metadata"] = metadata;
  ck.tensors = params.tensors;
  write_checkpoint(path, ck);
}

Parameters load_checkpoint(const std::filesystem::path& path) {
  Checkpoint ck = read_checkpoint(path);
  if (ck.header.value("kind", std::string{}) != "model") {
    throw CheckpointError(CheckpointError::Reason::malformed,
                          path.string() + " is not a single-model checkpoint");
  }
  Parameters p;
  p.config = model_config_from_json(ck.header.at("config"));
  p.tensors = std::move(ck.tensors);
  try {
    validate_parameters(p);
  } catch (const Error& e) {
    throw CheckpointError(CheckpointError::Reason::shape_mismatch,
                          "shape mismatch against header config: " + std::string(e.what()));
  }
  return p;
}

void round_to_f32(TensorMap& tensors) {
  for (auto& [name, t] : tensors) {
    for (auto& v : t.data) v = static_cast<double>(static_cast<float>(v));
  }
}

}  // namespace eemp
