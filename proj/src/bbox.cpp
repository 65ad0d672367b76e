#include "bft/bbox.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "bft/tensor.hpp"

namespace bft {

namespace {
constexpr double kMinArea = 1e-9;

// extents from edges, so identical boxes overlap exactly
double edge_area(const BBox& b) { return std::max(((b.x + b.w) - b.x) * ((b.y + b.h) - b.y), kMinArea); }
}  // namespace

double area(const BBox& b) { return std::max(b.w * b.h, kMinArea); }

double intersection(const BBox& a, const BBox& b) {
  const double iw = std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x);
  const double ih = std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y);
  return std::max(iw, 0.0) * std::max(ih, 0.0);
}

double iou(const BBox& a, const BBox& b) {
  const double inter = intersection(a, b);
  const double uni = std::max(edge_area(a) + edge_area(b) - inter, kMinArea);
  return std::clamp(inter / uni, 0.0, 1.0);
}

double giou(const BBox& a, const BBox& b) {
  const double inter = intersection(a, b);
  const double uni = std::max(edge_area(a) + edge_area(b) - inter, kMinArea);
  const double cw = std::max(a.x + a.w, b.x + b.w) - std::min(a.x, b.x);
  const double ch = std::max(a.y + a.h, b.y + b.h) - std::min(a.y, b.y);
  const double enclosing = std::max(cw * ch, kMinArea);
  return inter / uni - (enclosing - uni) / enclosing;
}

double giou_loss(const BBox& a, const BBox& b) { return 1.0 - giou(a, b); }

double center_distance(const BBox& a, const BBox& b) {
  return std::hypot(a.cx() - b.cx(), a.cy() - b.cy());
}

std::string format_box(const BBox& b) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%.3f,%.3f,%.3f,%.3f", b.x, b.y, b.w, b.h);
  return buf;
}

BBox parse_box(const std::string& line) {
  BBox b;
  std::string s = line;
  std::replace(s.begin(), s.end(), '\t', ',');
  std::replace(s.begin(), s.end(), ' ', ',');
  std::istringstream in(s);
  double* fields[] = {&b.x, &b.y, &b.w, &b.h};
  for (double* f : fields) {
    std::string tok;
    do {
      if (!std::getline(in, tok, ',')) throw IoError("malformed box line '" + line + "'");
    } while (tok.empty());
    try {
      std::size_t used = 0;
      *f = std::stod(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw IoError("malformed box line '" + line + "'");
    }
  }
  return b;
}

std::vector<BBox> read_boxes(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<BBox> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    out.push_back(parse_box(line));
  }
  return out;
}

void write_boxes(const std::string& path, const std::vector<BBox>& boxes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& b : boxes) out << format_box(b) << '\n';
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace bft
