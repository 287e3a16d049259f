#include <bit>
#include <cstring>
#include <fstream>
#include <type_traits>

#include "d2a2/model.hpp"

namespace d2a2 {

namespace {

constexpr char kMagic[8] = {'D', '2', 'A', '2', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary), path_(path) {
    if (!out_) throw CheckpointError("cannot open " + path + " for writing");
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u32(std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    bytes(b, 4);
  }
  void text(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  template <typename F>
  void reals(const F* data, std::size_t n) {
    using Bits = std::conditional_t<sizeof(F) == 4, std::uint32_t, std::uint64_t>;
    std::vector<unsigned char> buf(n * sizeof(F));
    for (std::size_t i = 0; i < n; ++i) {
      const Bits bits = std::bit_cast<Bits>(data[i]);
      for (std::size_t k = 0; k < sizeof(F); ++k) buf[i * sizeof(F) + k] = static_cast<unsigned char>(bits >> (8 * k));
    }
    bytes(buf.data(), buf.size());
  }
  void finish() {
    out_.flush();
    if (!out_) throw CheckpointError("write to " + path_ + " failed");
  }

 private:
  std::ofstream out_;
  std::string path_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw CheckpointError("cannot open checkpoint " + path);
  }
  void bytes(void* p, std::size_t n, const std::string& what) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw CheckpointError("checkpoint " + path_ + " is truncated while reading " + what);
    }
  }
  std::uint8_t u8(const std::string& what) {
    std::uint8_t v = 0;
    bytes(&v, 1, what);
    return v;
  }
  std::uint32_t u32(const std::string& what) {
    unsigned char b[4];
    bytes(b, 4, what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }
  std::string text(const std::string& what, std::uint32_t limit = 1u << 24) {
    const std::uint32_t n = u32(what + " length");
    if (n > limit) throw CheckpointError("checkpoint " + path_ + ": implausible length for " + what);
    std::string s(n, '\0');
    bytes(s.data(), n, what);
    return s;
  }
  template <typename F>
  void reals(std::uint8_t width, F* out, std::size_t n, const std::string& what) {
    std::vector<unsigned char> buf(n * width);
    bytes(buf.data(), buf.size(), what);
    for (std::size_t i = 0; i < n; ++i) {
      const unsigned char* b = buf.data() + i * width;
      if (width == 4) {
        std::uint32_t bits = 0;
        for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(b[k]) << (8 * k);
        out[i] = static_cast<F>(std::bit_cast<float>(bits));
      } else {
        std::uint64_t bits = 0;
        for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(b[k]) << (8 * k);
        out[i] = static_cast<F>(std::bit_cast<double>(bits));
      }
    }
  }
  const std::string& path() const { return path_; }

 private:
  std::ifstream in_;
  std::string path_;
};

struct Entry {
  std::string name;
  Shape shape;
};

struct Header {
  std::uint8_t width = 0;
  ModelConfig config;
  std::vector<Entry> entries;
};

Header read_header(Reader& r) {
  char magic[8];
  r.bytes(magic, 8, "magic");
  if (std::memcmp(magic, kMagic, 8) != 0) throw CheckpointError(r.path() + " is not a d2a2 checkpoint (bad magic)");
  const std::uint8_t version = r.u8("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint " + r.path() + " has format version " + std::to_string(version) +
                          ", expected " + std::to_string(kCheckpointVersion));
  }
  Header h;
  h.width = r.u8("element width");
  if (h.width != 4 && h.width != 8) {
    throw CheckpointError("checkpoint " + r.path() + " has unsupported element width " + std::to_string(h.width));
  }
  try {
    h.config = ModelConfig::from_text(r.text("config"));
  } catch (const ConfigError& e) {
    throw CheckpointError("checkpoint " + r.path() + " has an invalid config: " + e.what());
  }
  const std::uint32_t count = r.u32("entry count");
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    e.name = r.text("name of entry " + std::to_string(i), 4096);
    e.shape.n = r.u32("shape of " + e.name);
    e.shape.c = r.u32("shape of " + e.name);
    e.shape.h = r.u32("shape of " + e.name);
    e.shape.w = r.u32("shape of " + e.name);
    h.entries.push_back(std::move(e));
  }
  return h;
}

template <typename T>
void fill_parameters(Reader& r, const Header& h, D2A2Model<T>& model) {
  auto& params = model.parameters();
  if (h.entries.size() != params.size()) {
    throw CheckpointError("checkpoint " + r.path() + " holds " + std::to_string(h.entries.size()) +
                          " parameters, model expects " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < h.entries.size(); ++i) {
    const Entry& e = h.entries[i];
    if (e.name != params[i].name) {
      throw CheckpointError("checkpoint parameter " + std::to_string(i) + " is '" + e.name + "', model expects '" +
                            params[i].name + "'");
    }
    if (!(e.shape == params[i].value.shape())) {
      throw CheckpointError("checkpoint parameter '" + e.name + "' has shape " + e.shape.str() + ", model expects " +
                            params[i].value.shape().str());
    }
  }
  for (std::size_t i = 0; i < h.entries.size(); ++i) {
    auto& p = params[i];
    r.reals(h.width, p.value.data(), p.value.size(), "values of parameter '" + p.name + "'");
  }
}

}  // namespace

template <typename T>
void save_checkpoint(const D2A2Model<T>& model, const std::string& path) {
  Writer w(path);
  w.bytes(kMagic, 8);
  w.u8(kCheckpointVersion);
  w.u8(static_cast<std::uint8_t>(sizeof(T)));
  w.text(model.config().to_text());
  const auto& params = model.parameters();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    w.text(p.name);
    const Shape& s = p.value.shape();
    for (std::size_t d : {s.n, s.c, s.h, s.w}) w.u32(static_cast<std::uint32_t>(d));
  }
  for (std::size_t i = 0; i < params.size(); ++i) w.reals(params[i].value.data(), params[i].value.size());
  w.finish();
}

template <typename T>
D2A2Model<T> load_checkpoint(const std::string& path) {
  Reader r(path);
  const Header h = read_header(r);
  D2A2Model<T> model(h.config);
  fill_parameters(r, h, model);
  return model;
}

template <typename T>
void load_checkpoint_into(D2A2Model<T>& model, const std::string& path) {
  Reader r(path);
  const Header h = read_header(r);
  if (!(h.config == model.config())) {
    throw CheckpointError("checkpoint " + path + " was written for a different model config:\n" + h.config.to_text());
  }
  fill_parameters(r, h, model);
}

ModelConfig read_checkpoint_config(const std::string& path) {
  Reader r(path);
  return read_header(r).config;
}

template void save_checkpoint(const D2A2Model<float>&, const std::string&);
template void save_checkpoint(const D2A2Model<double>&, const std::string&);
template D2A2Model<float> load_checkpoint(const std::string&);
template D2A2Model<double> load_checkpoint(const std::string&);
template void load_checkpoint_into(D2A2Model<float>&, const std::string&);
template void load_checkpoint_into(D2A2Model<double>&, const std::string&);

}  // namespace d2a2
