#include "bft/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace bft {

namespace fs = std::filesystem;

std::vector<std::string> read_tags(const fs::path& file) {
  std::vector<std::string> tags;
  std::ifstream in(file);
  if (!in) return tags;
  std::string line, all;
  while (std::getline(in, line)) all += line + ",";
  std::string tok;
  for (char ch : all) {
    if (ch == ',' || ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n') {
      if (!tok.empty()) tags.push_back(tok);
      tok.clear();
    } else {
      tok += ch;
    }
  }
  if (!tok.empty()) tags.push_back(tok);
  return tags;
}

SequenceDataset load_sequence(const fs::path& dir) {
  SequenceDataset ds;
  ds.dir = dir;
  ds.name = dir.filename().string();
  if (ds.name.empty()) ds.name = dir.parent_path().filename().string();
  const fs::path img = dir / "img";
  if (!fs::is_directory(img)) throw IoError("sequence " + dir.string() + " has no img/ directory");
  for (const auto& e : fs::directory_iterator(img)) {
    if (e.is_regular_file() && e.path().extension() == ".ppm") ds.frames.push_back(e.path());
  }
  std::sort(ds.frames.begin(), ds.frames.end());
  if (ds.frames.empty()) throw IoError("sequence " + dir.string() + " has no frames");
  ds.gt = read_boxes((dir / "groundtruth.csv").string());
  if (ds.gt.size() != ds.frames.size()) {
    throw IoError("sequence " + dir.string() + ": " + std::to_string(ds.gt.size()) +
                  " ground-truth lines for " + std::to_string(ds.frames.size()) + " frames");
  }
  ds.tags = read_tags(dir / "attributes.txt");
  return ds;
}

std::vector<SequenceDataset> load_sequences(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  if (fs::is_directory(dir / "img")) return {load_sequence(dir)};
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory() && fs::is_directory(e.path() / "img")) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw IoError("no sequences under " + dir.string());
  std::vector<SequenceDataset> out;
  for (const auto& d : dirs) out.push_back(load_sequence(d));
  return out;
}

LoadedSequence load_frames(const SequenceDataset& ds) {
  LoadedSequence s;
  s.name = ds.name;
  s.gt = ds.gt;
  s.tags = ds.tags;
  for (const auto& f : ds.frames) s.frames.push_back(read_ppm(f));
  return s;
}

double template_side(const BBox& box) {
  const double p = 0.5 * (box.w + box.h);
  return std::sqrt((box.w + p) * (box.h + p));
}

TrainingPair make_pair_at(const LoadedSequence& seq, int template_frame, int search_frame,
                          const CropGeometry& geo, double shift_x, double shift_y, double log_scale,
                          bool flip) {
  const int n = static_cast<int>(seq.frames.size());
  if (template_frame < 0 || template_frame >= n || search_frame < 0 || search_frame >= n) {
    throw ContractError("pair: frame index out of range");
  }
  TrainingPair pair;
  const BBox& zb = seq.gt[template_frame];
  const double sz = template_side(zb);
  pair.template_image =
      crop_resize(seq.frames[template_frame], zb.cx(), zb.cy(), sz, geo.template_size, flip).pixels;

  const BBox& xb = seq.gt[search_frame];
  const double side =
      template_side(xb) * geo.search_size / geo.template_size * std::exp(log_scale);
  const double cx = xb.cx() + shift_x * side, cy = xb.cy() + shift_y * side;
  pair.search_image = crop_resize(seq.frames[search_frame], cx, cy, side, geo.search_size, flip).pixels;

  const double k = geo.search_size / side;
  double bx = (xb.cx() - cx) * k + 0.5 * geo.search_size;
  const double by = (xb.cy() - cy) * k + 0.5 * geo.search_size;
  if (flip) bx = geo.search_size - bx;
  pair.search_box = BBox::from_center(bx, by, xb.w * k, xb.h * k);
  pair.target = make_target(pair.search_box, geo.search_size, geo.stride);
  return pair;
}

TrainingPair make_training_pair(const std::vector<LoadedSequence>& data, Rng& rng,
                                const CropGeometry& geo, const PairSampling& sampling) {
  if (data.empty()) throw ContractError("pair: empty dataset");
  const auto& seq = data[rng.below(data.size())];
  const int n = static_cast<int>(seq.frames.size());
  if (n < 2) throw ContractError("pair: sequence " + seq.name + " has fewer than 2 frames");
  const int a = static_cast<int>(rng.below(n));
  const int lo = std::max(0, a - sampling.max_gap), hi = std::min(n - 1, a + sampling.max_gap);
  const int b = rng.range(lo, hi);
  const double sx = rng.uniform(-sampling.shift, sampling.shift);
  const double sy = rng.uniform(-sampling.shift, sampling.shift);
  const double ls = rng.uniform(-sampling.scale, sampling.scale);
  const bool flip = sampling.flip && rng.uniform() < 0.5;
  return make_pair_at(seq, a, b, geo, sx, sy, ls, flip);
}

}  // namespace bft
