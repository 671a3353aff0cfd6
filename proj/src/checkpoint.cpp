#include "tsembed/sae.hpp"

#include <bit>
#include <cstring>
#include <stdexcept>

namespace tsembed {

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'T', 'S', 'E', 'S', 'A', 'E', '\0', '\1'};
constexpr std::uint32_t kVersion = 1;

class Writer {
public:
  template <class T> void put(T v) {
    char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    out.append(b, sizeof(T));
  }
  void put_bytes(std::string_view s) { out.append(s); }
  void put_tensor(const std::string &name, std::size_t rows, std::size_t cols,
                  std::span<const double> data) {
    put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    put_bytes(name);
    put<std::uint64_t>(rows);
    put<std::uint64_t>(cols);
    out.append(reinterpret_cast<const char *>(data.data()), data.size() * sizeof(double));
  }
  std::string out;
};

class Reader {
public:
  explicit Reader(std::string_view b) : bytes(b) {}
  template <class T> T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
  std::string_view get_bytes(std::size_t n) {
    need(n);
    auto s = bytes.substr(pos, n);
    pos += n;
    return s;
  }
  void get_tensor(const std::string &name, std::size_t rows, std::size_t cols,
                  std::span<double> dst) {
    auto len = get<std::uint32_t>();
    auto got = get_bytes(len);
    if (got != name)
      throw ParseError("checkpoint: expected tensor '" + name + "', found '" + std::string(got) +
                       "'");
    auto r = get<std::uint64_t>();
    auto c = get<std::uint64_t>();
    if (r != rows || c != cols)
      throw ParseError("checkpoint: tensor '" + name + "' has shape " + std::to_string(r) + "x" +
                       std::to_string(c) + ", architecture needs " + std::to_string(rows) + "x" +
                       std::to_string(cols));
    auto raw = get_bytes(dst.size() * sizeof(double));
    std::memcpy(dst.data(), raw.data(), raw.size());
  }
  std::size_t remaining() const { return bytes.size() - pos; }

private:
  void need(std::size_t n) const {
    if (bytes.size() - pos < n)
      throw ParseError("checkpoint truncated");
  }
  std::string_view bytes;
  std::size_t pos = 0;
};

template <class Fn> void visit_named(const SaeModel &m, Fn &&fn) {
  auto stack = [&](const char *prefix, const std::vector<GruLayerParams> &layers) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      auto &p = layers[l];
      auto base = std::string(prefix) + "." + std::to_string(l + 1) + ".";
      fn(base + "w_r", p.w_r.rows, p.w_r.cols);
      fn(base + "w_u", p.w_u.rows, p.w_u.cols);
      fn(base + "w_p", p.w_p.rows, p.w_p.cols);
      if (p.has_bias()) {
        fn(base + "b_r", p.units, std::size_t{1});
        fn(base + "b_u", p.units, std::size_t{1});
        fn(base + "b_p", p.units, std::size_t{1});
      }
    }
  };
  stack("encoder", m.encoder);
  stack("decoder", m.decoder);
  fn(std::string("head.w"), std::size_t{1}, m.head_w.size());
  fn(std::string("head.b"), std::size_t{1}, std::size_t{1});
}

} // namespace

std::string serialize_checkpoint(const SaeModel &model) {
  Writer w;
  w.put_bytes(std::string_view(kMagic, sizeof kMagic));
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.arch.num_layers()));
  w.put<std::uint32_t>(model.arch.use_bias ? 1u : 0u);
  for (auto u : model.arch.units)
    w.put<std::uint32_t>(static_cast<std::uint32_t>(u));

  auto data = tensors(model);
  std::size_t k = 0;
  w.put<std::uint32_t>(static_cast<std::uint32_t>(data.size()));
  visit_named(model, [&](const std::string &name, std::size_t r, std::size_t c) {
    w.put_tensor(name, r, c, data[k++]);
  });
  w.put<std::uint64_t>(fnv1a(w.out));
  return std::move(w.out);
}

SaeModel deserialize_checkpoint(std::string_view bytes, const std::optional<Architecture> &expected) {
  if (bytes.size() < sizeof kMagic + sizeof(std::uint64_t))
    throw ParseError("checkpoint truncated");
  if (bytes.substr(0, sizeof kMagic) != std::string_view(kMagic, sizeof kMagic))
    throw ParseError("not a checkpoint file (bad magic)");
  const auto body = bytes.substr(0, bytes.size() - sizeof(std::uint64_t));
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + body.size(), sizeof stored);

  Reader r(body);
  r.get_bytes(sizeof kMagic);
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion)
    throw ParseError("unsupported checkpoint version " + std::to_string(version));
  if (stored != fnv1a(body))
    throw ParseError("checkpoint checksum mismatch (truncated or corrupt file)");

  Architecture arch;
  const auto layers = r.get<std::uint32_t>();
  arch.use_bias = r.get<std::uint32_t>() != 0;
  if (layers == 0 || layers > 1024)
    throw ParseError("checkpoint: implausible layer count");
  for (std::uint32_t l = 0; l < layers; ++l)
    arch.units.push_back(r.get<std::uint32_t>());
  arch.validate();
  if (expected && !(*expected == arch))
    throw ParseError("checkpoint architecture does not match the requested one");

  SaeModel model = zeros_like(make_sae(arch, 0));
  auto data = tensors(model);
  if (r.get<std::uint32_t>() != data.size())
    throw ParseError("checkpoint: tensor count does not match architecture");
  std::size_t k = 0;
  visit_named(model, [&](const std::string &name, std::size_t rows, std::size_t cols) {
    r.get_tensor(name, rows, cols, data[k++]);
  });
  if (r.remaining() != 0)
    throw ParseError("checkpoint: trailing bytes");
  return model;
}

void save_checkpoint(const SaeModel &model, const std::string &path) {
  write_file(path, serialize_checkpoint(model));
}

SaeModel load_checkpoint(const std::string &path, const std::optional<Architecture> &expected) {
  return deserialize_checkpoint(read_file(path), expected);
}

} // namespace tsembed
