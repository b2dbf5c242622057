#include "mixreg/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "mixreg/errors.hpp"

namespace mixreg {

namespace {

std::uint64_t fnv1a(const unsigned char* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    out_.insert(out_.end(), c, c + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  std::vector<unsigned char>& buffer() { return out_; }

 private:
  std::vector<unsigned char> out_;
};

class Reader {
 public:
  Reader(const unsigned char* data, std::size_t n) : data_(data), n_(n) {}

  void need(std::size_t k) const {
    if (pos_ + k > n_) {
      throw FormatError("checkpoint is truncated: expected " + std::to_string(pos_ + k) + " bytes, got " +
                        std::to_string(n_));
    }
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{data_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{data_[pos_ + i]} << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  void expect(const void* p, std::size_t k, const char* what) {
    need(k);
    if (std::memcmp(data_ + pos_, p, k) != 0) throw FormatError(std::string("bad ") + what);
    pos_ += k;
  }
  std::size_t count(std::size_t elem_size) {
    const std::uint64_t v = u64();
    if (v > (n_ - pos_) / elem_size) throw FormatError("checkpoint length field exceeds file size");
    return static_cast<std::size_t>(v);
  }
  std::size_t pos() const { return pos_; }

 private:
  const unsigned char* data_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt) {
  const NetworkSpec& spec = ckpt.spec;
  Writer w;
  w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u64(spec.input_dim);
  w.u32(static_cast<std::uint32_t>(spec.head));
  w.u64(spec.output_dim);
  w.u64(spec.hidden.size());
  for (const HiddenLayer& h : spec.hidden) {
    w.u64(h.width);
    w.u32(static_cast<std::uint32_t>(h.activation));
    w.u32(h.layer_norm ? 1 : 0);
  }
  w.f64(ckpt.source_val_accuracy);
  w.u64(ckpt.params.size());
  for (double v : ckpt.params.values()) w.f64(v);

  const LabeledData& val = ckpt.source_validation;
  w.u64(static_cast<std::uint64_t>(val.inputs.rows()));
  w.u64(static_cast<std::uint64_t>(val.inputs.cols()));
  for (Eigen::Index i = 0; i < val.inputs.size(); ++i) w.f64(val.inputs.data()[i]);
  w.u64(val.num_classes);
  for (int y : val.labels) w.u32(static_cast<std::uint32_t>(y));

  auto& buf = w.buffer();
  const std::uint64_t sum = fnv1a(buf.data(), buf.size());
  w.u64(sum);
  return std::move(buf);
}

Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < sizeof kCheckpointMagic + 12) throw FormatError("checkpoint is truncated");
  const std::size_t body = bytes.size() - 8;
  Reader tail(bytes.data() + body, 8);
  if (tail.u64() != fnv1a(bytes.data(), body)) throw FormatError("checkpoint checksum mismatch");

  Reader r(bytes.data(), body);
  r.expect(kCheckpointMagic, sizeof kCheckpointMagic, "checkpoint magic");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.spec.input_dim = r.u64();
  const std::uint32_t head = r.u32();
  if (head > 1) throw FormatError("unknown head kind in checkpoint");
  ckpt.spec.head = static_cast<HeadKind>(head);
  ckpt.spec.output_dim = r.u64();
  const std::size_t n_hidden = r.count(16);
  for (std::size_t k = 0; k < n_hidden; ++k) {
    HiddenLayer h;
    h.width = r.u64();
    const std::uint32_t act = r.u32();
    if (act > 1) throw FormatError("unknown activation in checkpoint");
    h.activation = static_cast<Activation>(act);
    h.layer_norm = r.u32() != 0;
    ckpt.spec.hidden.push_back(h);
  }
  try {
    ckpt.spec.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("invalid network spec in checkpoint: ") + e.what());
  }
  ckpt.source_val_accuracy = r.f64();
  const std::size_t n = r.count(8);
  std::vector<double> values(n);
  for (double& v : values) v = r.f64();
  ckpt.params = ParamVector(ckpt.spec.make_layout(), std::move(values));

  const std::size_t rows = r.count(1);
  const std::size_t cols = r.count(1);
  if (rows != 0 && cols > (body - r.pos()) / 8 / rows) throw FormatError("checkpoint length field exceeds file size");
  ckpt.source_validation.inputs = Matrix(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows * cols; ++i) ckpt.source_validation.inputs.data()[i] = r.f64();
  ckpt.source_validation.num_classes = r.u64();
  ckpt.source_validation.labels.resize(rows);
  for (int& y : ckpt.source_validation.labels) y = static_cast<int>(r.u32());
  if (r.pos() != body) throw FormatError("trailing bytes in checkpoint");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace mixreg
