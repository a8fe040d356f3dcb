#include "msdc/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "msdc/pfm.hpp"

namespace msdc {
namespace {

const char* code_name(CheckpointErrorCode c) {
  switch (c) {
    case CheckpointErrorCode::bad_magic: return "bad magic";
    case CheckpointErrorCode::unsupported_version: return "unsupported version";
    case CheckpointErrorCode::corrupt_length: return "corrupt length";
    case CheckpointErrorCode::mismatch: return "checkpoint/model mismatch";
  }
  return "checkpoint error";
}

class Writer {
 public:
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void i64(std::int64_t v) { le(static_cast<std::uint64_t>(v), 8); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
  }
  void tensor(const std::string& name, const Tensor<float>& t) {
    str(name);
    u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) i64(d);
    for (float x : t.values()) u32(std::bit_cast<std::uint32_t>(x));
  }
  std::vector<std::uint8_t> out;

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : bytes_(b) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  std::int64_t i64() { return static_cast<std::int64_t>(le(8)); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n, "name");
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  std::pair<std::string, Tensor<float>> tensor() {
    std::string name = str();
    const std::uint32_t rank = u32();
    if (rank == 0 || rank > 8) fail("record '" + name + "' has rank " + std::to_string(rank));
    Shape shape(rank);
    std::uint64_t count = 1;
    for (auto& d : shape) {
      d = i64();
      if (d <= 0 || d > (std::int64_t{1} << 32)) fail("record '" + name + "' has extent " + std::to_string(d));
      count *= static_cast<std::uint64_t>(d);
      if (count > remaining()) fail("record '" + name + "' is longer than the file");
    }
    need(count * 4, "payload of '" + name + "'");
    Tensor<float> t(shape);
    for (auto& x : t.values()) x = std::bit_cast<float>(u32());
    return {std::move(name), std::move(t)};
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t position() const { return pos_; }

  [[noreturn]] static void fail(const std::string& m) { throw CheckpointError(CheckpointErrorCode::corrupt_length, m); }

 private:
  void need(std::uint64_t n, const std::string& what) {
    if (n > remaining()) fail("truncated " + what);
  }
  std::uint64_t le(int n) {
    need(static_cast<std::uint64_t>(n), "header field");
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

constexpr char kMagic[4] = {'M', 'S', 'D', 'C'};

}  // namespace

CheckpointError::CheckpointError(CheckpointErrorCode code, const std::string& detail)
    : std::runtime_error(std::string(code_name(code)) + (detail.empty() ? "" : ": " + detail)), code_(code) {}

std::vector<std::uint8_t> save_checkpoint(const Checkpoint& ck) {
  const auto& ps = ck.params.params();
  if (ck.adam.m.size() != ps.size() || ck.adam.v.size() != ps.size()) {
    throw CheckpointError(CheckpointErrorCode::mismatch, "optimizer moments do not cover every parameter");
  }
  Writer w;
  w.out.insert(w.out.end(), kMagic, kMagic + 4);
  w.u32(Checkpoint::kVersion);
  const ModelConfig& c = ck.config;
  for (int v : {c.base_channels, c.max_disparity, c.dense_block_depth, c.dense_groups, c.fusion_channels, c.levels_3d,
                static_cast<int>(c.variant)}) {
    w.u32(static_cast<std::uint32_t>(v));
  }
  w.i64(ck.step);
  w.u64(ck.rng_seed);
  w.i64(ck.adam.t);
  w.f64(ck.adam.lr);
  w.f64(ck.adam.beta1);
  w.f64(ck.adam.beta2);
  w.f64(ck.adam.eps);

  const auto& bufs = ck.params.buffers();
  w.u32(static_cast<std::uint32_t>(3 * ps.size() + bufs.size()));
  for (const auto& p : ps) w.tensor("param/" + p.name, p.value());
  for (const auto& [name, t] : bufs) w.tensor("buffer/" + name, t);
  for (std::size_t i = 0; i < ps.size(); ++i) w.tensor("adam.m/" + ps[i].name, ck.adam.m[i]);
  for (std::size_t i = 0; i < ps.size(); ++i) w.tensor("adam.v/" + ps[i].name, ck.adam.v[i]);
  return std::move(w.out);
}

Checkpoint load_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CheckpointError(CheckpointErrorCode::bad_magic, "file does not start with MSDC");
  }
  Reader r(bytes);
  r.u32();  // magic, already checked
  const std::uint32_t version = r.u32();
  if (version != Checkpoint::kVersion) {
    throw CheckpointError(CheckpointErrorCode::unsupported_version,
                          "version " + std::to_string(version) + ", expected " + std::to_string(Checkpoint::kVersion));
  }
  Checkpoint ck;
  ModelConfig& c = ck.config;
  for (int* f : {&c.base_channels, &c.max_disparity, &c.dense_block_depth, &c.dense_groups, &c.fusion_channels,
                 &c.levels_3d}) {
    *f = static_cast<int>(r.u32());
  }
  const std::uint32_t variant = r.u32();
  if (variant > static_cast<std::uint32_t>(Variant::single_scale_both)) {
    throw CheckpointError(CheckpointErrorCode::mismatch, "unknown variant " + std::to_string(variant));
  }
  c.variant = static_cast<Variant>(variant);
  try {
    c.validate();
  } catch (const std::exception& e) {
    throw CheckpointError(CheckpointErrorCode::mismatch, e.what());
  }
  ck.step = r.i64();
  ck.rng_seed = r.u64();
  ck.adam.t = r.i64();
  ck.adam.lr = r.f64();
  ck.adam.beta1 = r.f64();
  ck.adam.beta2 = r.f64();
  ck.adam.eps = r.f64();
  if (ck.step < 0 || ck.adam.t < 0) Reader::fail("negative step counter");

  // The plan fixes names, order and shapes; records only supply values.
  ck.params = init_params<float>(c, 0);
  auto& ps = ck.params.params();
  auto& bufs = ck.params.buffers();
  const std::uint32_t records = r.u32();
  if (records != 3 * ps.size() + bufs.size()) {
    throw CheckpointError(CheckpointErrorCode::mismatch, std::to_string(records) + " records for a model with " +
                                                             std::to_string(3 * ps.size() + bufs.size()));
  }
  auto expect = [&](const std::string& name, Tensor<float>& slot) {
    auto [got, t] = r.tensor();
    if (got != name) throw CheckpointError(CheckpointErrorCode::mismatch, "expected record '" + name + "', found '" + got + "'");
    if (t.shape() != slot.shape()) {
      throw CheckpointError(CheckpointErrorCode::mismatch,
                            "'" + name + "' has shape " + shape_str(t.shape()) + ", model needs " + shape_str(slot.shape()));
    }
    slot = std::move(t);
  };
  for (auto& p : ps) expect("param/" + p.name, p.mutable_value());
  for (auto& [name, t] : bufs) expect("buffer/" + name, t);
  ck.adam.m.resize(ps.size());
  ck.adam.v.resize(ps.size());
  for (std::size_t i = 0; i < ps.size(); ++i) {
    ck.adam.m[i] = Tensor<float>::zeros(ps[i].value().shape());
    expect("adam.m/" + ps[i].name, ck.adam.m[i]);
  }
  for (std::size_t i = 0; i < ps.size(); ++i) {
    ck.adam.v[i] = Tensor<float>::zeros(ps[i].value().shape());
    expect("adam.v/" + ps[i].name, ck.adam.v[i]);
  }
  if (r.remaining() != 0) Reader::fail(std::to_string(r.remaining()) + " trailing bytes");
  return ck;
}

void save_checkpoint_file(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  write_bytes(path, save_checkpoint(checkpoint));
}

Checkpoint load_checkpoint_file(const std::filesystem::path& path) { return load_checkpoint(read_bytes(path)); }

}  // namespace msdc
