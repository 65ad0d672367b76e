#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bft/bbox.hpp"
#include "bft/image.hpp"

namespace bft {

enum class Motion { kLinear, kSinusoidal, kRandomWalk };
enum class ObjectShape { kRect, kEllipse };

std::string motion_name(Motion m);
Motion parse_motion(const std::string& s);

struct SynthConfig {
  std::string name = "seq";
  int width = 192;
  int height = 192;
  int frames = 100;
  ObjectShape shape = ObjectShape::kRect;
  double object_w = 28;
  double object_h = 22;
  Motion motion = Motion::kLinear;
  double speed = 1.5;       // px/frame for linear and random-walk paths
  double amplitude = 40;    // sinusoidal: cx = cx0 + A sin(2 pi t/T), cy = cy0 + A/2 sin(4 pi t/T)
  double period = 50;
  double scale_drift = 0;   // per-frame log-scale change
  double deform = 0;        // aspect oscillation amplitude
  bool occluder = false;
  int distractors = 0;
  double illumination = 0;  // brightness oscillation amplitude
  std::uint64_t seed = 1;

  /// Attribute tags implied by the settings, in FM, BC, DEF, OCC, SV, IV order.
  std::vector<std::string> tags() const;
  void validate() const;
};

struct RenderedSequence {
  std::string name;
  std::vector<Image> frames;
  std::vector<BBox> gt;
  std::vector<std::string> tags;
};

/// Object path for `cfg` (ground truth), independent of rendering.
std::vector<BBox> object_path(const SynthConfig& cfg);
RenderedSequence render(const SynthConfig& cfg);

/// Writes `<out>/img/%06d.ppm`, `<out>/groundtruth.csv`, `<out>/attributes.txt`.
void write_sequence(const RenderedSequence& seq, const std::filesystem::path& out);
void generate(const SynthConfig& cfg, const std::filesystem::path& out);

/// Twelve training sequences covering every attribute tag.
std::vector<SynthConfig> standard_suite(std::uint64_t seed);
/// Three evaluation sequences never used for training.
std::vector<SynthConfig> heldout_suite(std::uint64_t seed);

}  // namespace bft
