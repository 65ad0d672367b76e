#include "bft/params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace bft {

template <typename T>
std::size_t ParamStore<T>::add(std::string name, Tensor<T> value, ParamKind kind) {
  if (find(name)) throw ContractError("duplicate parameter name '" + name + "'");
  Tensor<T> grad(value.shape());
  entries_.push_back(ParamEntry<T>{std::move(name), std::move(value), std::move(grad), kind});
  return entries_.size() - 1;
}

template <typename T>
std::optional<std::size_t> ParamStore<T>::find(const std::string& name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  return std::nullopt;
}

template <typename T>
std::size_t ParamStore<T>::index_of(const std::string& name) const {
  auto idx = find(name);
  if (!idx) throw ContractError("unknown parameter '" + name + "'");
  return *idx;
}

template <typename T>
std::size_t ParamStore<T>::total_values() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& e : entries_) e.grad.fill(T(0));
}

template class ParamStore<float>;
template class ParamStore<double>;

namespace {

std::pair<double, double> fans(const Shape& shape) {
  if (shape.size() == 4) {
    const double rf = static_cast<double>(shape[2]) * shape[3];
    return {shape[1] * rf, shape[0] * rf};
  }
  if (shape.size() == 2) return {static_cast<double>(shape[1]), static_cast<double>(shape[0])};
  return {static_cast<double>(numel(shape)), static_cast<double>(numel(shape))};
}

}  // namespace

template <typename T>
std::size_t ParamBuilder<T>::require(const std::string& name, const Shape& shape, Init init,
                                     ParamKind kind, double constant) {
  if (auto idx = store_.find(name)) {
    auto& e = store_[*idx];
    if (e.value.shape() != shape) {
      throw DimensionError("parameter '" + name + "' has shape " + shape_str(e.value.shape()) +
                           ", model expects " + shape_str(shape));
    }
    e.kind = kind;
    return *idx;
  }
  if (rng_ == nullptr) throw ContractError("checkpoint is missing parameter '" + name + "'");

  Tensor<T> value(shape);
  const auto [fan_in, fan_out] = fans(shape);
  double stddev = 0.0;
  switch (init) {
    case Init::kHeNormal:
      stddev = std::sqrt(2.0 / fan_in);
      break;
    case Init::kXavierNormal:
      stddev = std::sqrt(2.0 / (fan_in + fan_out));
      break;
    case Init::kZero:
      break;
    case Init::kConstant:
      value.fill(static_cast<T>(constant));
      break;
  }
  if (stddev > 0.0) {
    for (auto& v : value.data()) v = static_cast<T>(stddev * rng_->normal());
  }
  return store_.add(name, std::move(value), kind);
}

template class ParamBuilder<float>;
template class ParamBuilder<double>;

namespace {

constexpr char kMagic[4] = {'B', 'F', 'T', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw IoError("truncated checkpoint");
  }
  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    const auto v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ParamStore<float>& store) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u32(out, static_cast<std::uint32_t>(store.size()));
  for (const auto& e : store) {
    if (e.name.size() > 0xffff) throw ContractError("parameter name too long: " + e.name);
    put_u16(out, static_cast<std::uint16_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    out.push_back(static_cast<std::uint8_t>(e.value.rank()));
    for (int extent : e.value.shape()) put_u32(out, static_cast<std::uint32_t>(extent));
    for (float v : e.value.data()) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      put_u32(out, bits);
    }
  }
  return out;
}

ParamStore<float> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.str(4) != std::string(kMagic, 4)) throw IoError("not a BFT1 checkpoint (bad magic)");
  const std::uint32_t count = r.u32();
  ParamStore<float> store;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str(r.u16());
    const int rank = r.u8();
    Shape shape(rank);
    for (int& extent : shape) {
      const std::uint32_t e = r.u32();
      if (e == 0 || e > 0x7fffffffu) throw IoError("invalid extent in checkpoint entry " + name);
      extent = static_cast<int>(e);
    }
    std::vector<float> data(numel(shape));
    for (float& v : data) {
      const std::uint32_t bits = r.u32();
      std::memcpy(&v, &bits, sizeof v);
    }
    store.add(std::move(name), Tensor<float>(std::move(shape), std::move(data)));
  }
  if (!r.done()) throw IoError("trailing bytes after checkpoint payload");
  return store;
}

void save_checkpoint(const ParamStore<float>& store, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(store);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("failed writing checkpoint: " + path.string());
}

ParamStore<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

void assign_values(ParamStore<float>& dst, const ParamStore<float>& src) {
  if (dst.size() != src.size()) throw ContractError("parameter stores differ in entry count");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].name != src[i].name || dst[i].value.shape() != src[i].value.shape()) {
      throw ContractError("parameter mismatch at entry " + std::to_string(i));
    }
    dst[i].value = src[i].value;
  }
}

}  // namespace bft
