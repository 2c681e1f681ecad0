#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "jepagrasp/tensor.hpp"

namespace jepagrasp::tc {

namespace {

constexpr char kMagic[8] = {'J', 'G', 'C', 'K', 'P', 'T', '\0', '\0'};

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename U>
void put(std::vector<char>& out, U value) {
  char bytes[sizeof(U)];
  std::memcpy(bytes, &value, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(std::begin(bytes), std::end(bytes));
  out.insert(out.end(), std::begin(bytes), std::end(bytes));
}

class Reader {
 public:
  Reader(std::span<const char> bytes, const std::string& origin) : bytes_(bytes), origin_(origin) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    char bytes[sizeof(U)];
    std::memcpy(bytes, bytes_.data() + pos_, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(std::begin(bytes), std::end(bytes));
    pos_ += sizeof(U);
    U value;
    std::memcpy(&value, bytes, sizeof(U));
    return value;
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw IoError("checkpoint " + origin_ + " is truncated");
  }

  std::span<const char> bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<char> checkpoint_bytes(const ParameterSet<float>& params) {
  std::vector<char> out(std::begin(kMagic), std::end(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, std::uint32_t(params.size()));
  for (const auto& p : params) {
    put<std::uint32_t>(out, std::uint32_t(p.name.size()));
    out.insert(out.end(), p.name.begin(), p.name.end());
    put<std::uint32_t>(out, std::uint32_t(p.value.shape().size()));
    for (std::size_t d : p.value.shape()) put<std::uint32_t>(out, std::uint32_t(d));
    for (float v : p.value.values()) put<float>(out, v);
  }
  return out;
}

ParameterSet<float> checkpoint_from_bytes(std::span<const char> bytes, const std::string& origin) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("checkpoint " + origin + " has no JGCKPT header");
  }
  Reader in(bytes.subspan(sizeof(kMagic)), origin);
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint " + origin + " has unsupported version " + std::to_string(version));
  }
  const auto count = in.get<std::uint32_t>();
  ParameterSet<float> params;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name = in.get_string(in.get<std::uint32_t>());
    const auto rank = in.get<std::uint32_t>();
    Shape shape(rank);
    for (auto& d : shape) d = in.get<std::uint32_t>();
    std::vector<float> values(shape_numel(shape));
    for (auto& v : values) v = in.get<float>();
    params.add(name, Tensor<float>(shape, std::move(values)));
  }
  if (!in.done()) throw FormatError("checkpoint " + origin + " has trailing bytes");
  return params;
}

void save_checkpoint(const std::string& path, const ParameterSet<float>& params) {
  const auto bytes = checkpoint_bytes(params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw IoError("failed writing " + path);
}

ParameterSet<float> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return checkpoint_from_bytes(bytes, path);
}

}  // namespace jepagrasp::tc
