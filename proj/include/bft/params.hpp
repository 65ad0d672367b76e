#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bft/rng.hpp"
#include "bft/tensor.hpp"

namespace bft {

/// How a parameter participates in optimization. Biases and gains are
/// excluded from weight decay.
enum class ParamKind : std::uint8_t { kWeight, kBias, kGain };

enum class Init : std::uint8_t {
  kHeNormal,      // std = sqrt(2 / fan_in)
  kXavierNormal,  // std = sqrt(2 / (fan_in + fan_out))
  kZero,
  kConstant,
};

template <typename T>
struct ParamEntry {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  ParamKind kind = ParamKind::kWeight;
};

/// Named, ordered collection of trainable tensors and their gradients.
template <typename T>
class ParamStore {
 public:
  std::size_t add(std::string name, Tensor<T> value, ParamKind kind = ParamKind::kWeight);

  std::size_t size() const { return entries_.size(); }
  ParamEntry<T>& operator[](std::size_t i) { return entries_[i]; }
  const ParamEntry<T>& operator[](std::size_t i) const { return entries_[i]; }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  std::optional<std::size_t> find(const std::string& name) const;
  std::size_t index_of(const std::string& name) const;
  std::size_t total_values() const;

  void zero_grad();

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& e : entries_) out.add(e.name, e.value.template cast<U>(), e.kind);
    return out;
  }

 private:
  std::vector<ParamEntry<T>> entries_;
};

extern template class ParamStore<float>;
extern template class ParamStore<double>;

/// Declares-or-binds parameters. With an Rng the builder creates missing
/// entries using the requested initializer; without one every requested
/// name must already exist with the requested shape.
template <typename T>
class ParamBuilder {
 public:
  ParamBuilder(ParamStore<T>& store, Rng* rng) : store_(store), rng_(rng) {}

  std::size_t require(const std::string& name, const Shape& shape, Init init,
                      ParamKind kind = ParamKind::kWeight, double constant = 0.0);

  const ParamStore<T>& store() const { return store_; }

 private:
  ParamStore<T>& store_;
  Rng* rng_;
};

extern template class ParamBuilder<float>;
extern template class ParamBuilder<double>;

// Checkpoint ("BFT1"): magic, u32 LE entry count, then per entry
// u16 name length, UTF-8 name, u8 rank, rank x u32 extents, f32 LE payload.
std::vector<std::uint8_t> encode_checkpoint(const ParamStore<float>& store);
ParamStore<float> decode_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const ParamStore<float>& store, const std::filesystem::path& path);
ParamStore<float> load_checkpoint(const std::filesystem::path& path);

/// Copies values of `src` into `dst` entry by entry; names and shapes must agree.
void assign_values(ParamStore<float>& dst, const ParamStore<float>& src);

}  // namespace bft
