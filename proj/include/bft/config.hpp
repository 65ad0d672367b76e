#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "bft/model.hpp"
#include "bft/synth.hpp"
#include "bft/tracker.hpp"
#include "bft/train.hpp"

namespace bft {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  std::string preset = "desk";
  std::uint64_t seed = 1;
  ModelConfig model;
  TrainConfig train;
  TrackerOptions tracker;
  SynthConfig synth;
};

/// INI text: `[section]` headers, `key = value` lines, `#`/`;` comments.
/// `section.key = value` is accepted anywhere. Unknown sections or keys are
/// rejected with the offending line number.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
RunConfig preset_config(const std::string& name);

/// Every accepted key with its default.
std::string config_reference();

}  // namespace bft
