#include "ediv/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>

namespace ediv {
namespace {

constexpr char kMagic[4] = {'E', 'D', 'I', 'V'};
constexpr std::uint8_t kVersion = 1;

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}
  std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  double f64() { return std::bit_cast<double>(le(8)); }
  const std::uint8_t* take(std::size_t n) {
    need(n);
    const std::uint8_t* p = in_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw std::runtime_error("checkpoint: truncated file");
  }
  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Network& net) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u8(kVersion);
  for (std::size_t d : net.input_shape()) w.u32(static_cast<std::uint32_t>(d));
  w.u32(static_cast<std::uint32_t>(net.layers().size()));
  for (const LayerSpec& L : net.layers()) {
    w.u8(static_cast<std::uint8_t>(L.kind));
    w.u32(L.in);
    w.u32(L.out);
    w.u32(L.kernel);
    w.u32(L.pad);
  }
  w.u32(static_cast<std::uint32_t>(net.params().size()));
  for (const Parameter& p : net.params()) {
    w.u16(static_cast<std::uint16_t>(p.name.size()));
    w.bytes(p.name.data(), p.name.size());
    w.u8(static_cast<std::uint8_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (double v : p.value.values()) w.f64(v);
    w.u8(p.mask ? 1 : 0);
    if (p.mask) {
      std::vector<std::uint8_t> packed((p.mask->size() + 7) / 8, 0);
      for (std::size_t i = 0; i < p.mask->size(); ++i)
        if ((*p.mask)[i] != 0.0) packed[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
      w.bytes(packed.data(), packed.size());
    }
  }
  return w.take();
}

Network decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (std::memcmp(r.take(4), kMagic, 4) != 0) throw std::runtime_error("checkpoint: bad magic");
  const std::uint8_t version = r.u8();
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  Shape input{r.u32(), r.u32(), r.u32()};
  const std::uint32_t nlayers = r.u32();
  std::vector<LayerSpec> layers;
  for (std::uint32_t i = 0; i < nlayers; ++i) {
    LayerSpec L;
    const std::uint8_t kind = r.u8();
    if (kind < 1 || kind > 6) throw std::runtime_error("checkpoint: unknown layer kind");
    L.kind = static_cast<LayerKind>(kind);
    L.in = r.u32();
    L.out = r.u32();
    L.kernel = r.u32();
    L.pad = r.u32();
    layers.push_back(L);
  }
  Network net(input, layers);
  const std::uint32_t nparams = r.u32();
  if (nparams != net.params().size())
    throw std::runtime_error("checkpoint: parameter table does not match the layer table");
  for (Parameter& p : net.params()) {
    const std::uint16_t len = r.u16();
    const auto* name = r.take(len);
    if (std::string(reinterpret_cast<const char*>(name), len) != p.name)
      throw std::runtime_error("checkpoint: expected parameter '" + p.name + "'");
    const std::uint8_t rank = r.u8();
    Shape shape;
    for (std::uint8_t k = 0; k < rank; ++k) shape.push_back(r.u32());
    if (shape != p.value.shape())
      throw std::runtime_error("checkpoint: parameter '" + p.name + "' has shape " +
                               shape_str(shape) + ", expected " + shape_str(p.value.shape()));
    for (double& v : p.value.values()) v = r.f64();
    if (r.u8()) {
      const std::size_t n = p.value.size();
      const std::uint8_t* packed = r.take((n + 7) / 8);
      Tensor mask(p.value.shape());
      for (std::size_t i = 0; i < n; ++i) mask[i] = (packed[i / 8] >> (i % 8)) & 1u ? 1.0 : 0.0;
      p.mask = std::move(mask);
    }
  }
  if (!r.done()) throw std::runtime_error("checkpoint: trailing bytes after parameter table");
  return net;
}

void save_checkpoint(const Network& net, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(net);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

Network load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace ediv
