#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "bft/bbox.hpp"
#include "bft/heads.hpp"
#include "bft/image.hpp"
#include "bft/rng.hpp"

namespace bft {

struct SequenceDataset {
  std::string name;
  std::filesystem::path dir;
  std::vector<std::filesystem::path> frames;
  std::vector<BBox> gt;
  std::vector<std::string> tags;
};

/// Reads `<dir>/img/*.ppm` (sorted), `groundtruth.csv` and, if present,
/// `attributes.txt`.
SequenceDataset load_sequence(const std::filesystem::path& dir);
/// `dir` is either a single sequence or a directory of sequences.
std::vector<SequenceDataset> load_sequences(const std::filesystem::path& dir);
std::vector<std::string> read_tags(const std::filesystem::path& file);

/// Sequence with decoded frames, ready for sampling.
struct LoadedSequence {
  std::string name;
  std::vector<Image> frames;
  std::vector<BBox> gt;
  std::vector<std::string> tags;
};

LoadedSequence load_frames(const SequenceDataset& ds);

struct CropGeometry {
  int template_size = 64;
  int search_size = 128;
  int stride = 8;
};

/// s_z = sqrt((w + p)(h + p)) with context p = (w + h)/2.
double template_side(const BBox& box);

struct PairSampling {
  int max_gap = 20;
  double shift = 0.2;   // max center jitter, fraction of the search side
  double scale = 0.15;  // max log-scale jitter of the search side
  bool flip = true;
};

struct TrainingPair {
  Tensor<float> template_image;  // [3,Tz,Tz]
  Tensor<float> search_image;    // [3,S,S]
  BBox search_box;               // target in search-crop pixels
  TrainTarget target;
};

/// Deterministic pair: the search window is centered at the target center
/// displaced by (shift_x, shift_y) * search side, scaled by exp(log_scale).
TrainingPair make_pair_at(const LoadedSequence& seq, int template_frame, int search_frame,
                          const CropGeometry& geo, double shift_x, double shift_y, double log_scale,
                          bool flip);

TrainingPair make_training_pair(const std::vector<LoadedSequence>& data, Rng& rng,
                                const CropGeometry& geo, const PairSampling& sampling);

}  // namespace bft
