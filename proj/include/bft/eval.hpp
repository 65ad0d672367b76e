#pragma once

#include <map>
#include <string>
#include <vector>

#include "bft/bbox.hpp"

namespace bft {

struct EvalCurve {
  std::vector<double> thresholds;
  std::vector<double> values;
  double auc = 0;  // mean of values
  double p20 = 0;  // precision curves only
};

/// Fraction of frames with IoU >= t for t = 0, 0.05, ..., 1.
EvalCurve success_curve(const std::vector<BBox>& pred, const std::vector<BBox>& gt);
/// Fraction of frames with center distance <= t for t = 0, 1, ..., 50 px.
EvalCurve precision_curve(const std::vector<BBox>& pred, const std::vector<BBox>& gt);

struct SequenceScore {
  std::string name;
  std::vector<std::string> tags;
  EvalCurve success;
  EvalCurve precision;
};

SequenceScore score_sequence(const std::string& name, const std::vector<std::string>& tags,
                             const std::vector<BBox>& pred, const std::vector<BBox>& gt);

const std::vector<std::string>& known_attributes();

struct AttributeRow {
  std::string attribute;
  int sequences = 0;
  double success = 0;  // mean AUC
  double precision = 0;  // mean P@20
};

/// Per-attribute means over the sequences carrying each tag, in
/// FM, BC, DEF, OCC, SV, IV order; unknown tags are pooled under "other".
std::vector<AttributeRow> attribute_report(const std::vector<SequenceScore>& scores);

/// Mean AUC and P@20 over sequences.
std::pair<double, double> overall(const std::vector<SequenceScore>& scores);

std::string success_precision_svg(const EvalCurve& success, const EvalCurve& precision,
                                  const std::string& title);

}  // namespace bft
