#pragma once

#include <string>
#include <vector>

namespace bft {

/// Axis-aligned box, top-left corner plus extents, in pixels.
struct BBox {
  double x = 0, y = 0, w = 0, h = 0;

  double cx() const { return x + 0.5 * w; }
  double cy() const { return y + 0.5 * h; }
  static BBox from_center(double cx, double cy, double w, double h) {
    return {cx - 0.5 * w, cy - 0.5 * h, w, h};
  }
  bool operator==(const BBox&) const = default;
};

double area(const BBox& b);
double intersection(const BBox& a, const BBox& b);
double iou(const BBox& a, const BBox& b);
/// IoU minus the share of the enclosing box not covered by the union.
double giou(const BBox& a, const BBox& b);
double giou_loss(const BBox& a, const BBox& b);
double center_distance(const BBox& a, const BBox& b);

/// "x,y,w,h" per line.
std::vector<BBox> read_boxes(const std::string& path);
void write_boxes(const std::string& path, const std::vector<BBox>& boxes);
std::string format_box(const BBox& b);
BBox parse_box(const std::string& line);

}  // namespace bft
