#include "bft/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

#include "bft/tensor.hpp"

namespace bft {

namespace {

void require_lengths(const std::vector<BBox>& pred, const std::vector<BBox>& gt) {
  if (pred.size() != gt.size()) {
    throw ContractError("eval: " + std::to_string(pred.size()) + " predictions for " +
                        std::to_string(gt.size()) + " ground-truth boxes");
  }
  if (pred.empty()) throw ContractError("eval: empty sequence");
}

EvalCurve curve(const std::vector<double>& per_frame, std::vector<double> thresholds,
                bool at_least) {
  EvalCurve c;
  c.thresholds = std::move(thresholds);
  for (double t : c.thresholds) {
    std::size_t pass = 0;
    for (double v : per_frame) pass += at_least ? (v >= t) : (v <= t);
    c.values.push_back(static_cast<double>(pass) / per_frame.size());
  }
  double s = 0;
  for (double v : c.values) s += v;
  c.auc = s / c.values.size();
  return c;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

}  // namespace

EvalCurve success_curve(const std::vector<BBox>& pred, const std::vector<BBox>& gt) {
  require_lengths(pred, gt);
  std::vector<double> overlaps;
  for (std::size_t i = 0; i < pred.size(); ++i) overlaps.push_back(iou(pred[i], gt[i]));
  std::vector<double> t;
  for (int i = 0; i <= 20; ++i) t.push_back(i / 20.0);
  return curve(overlaps, std::move(t), true);
}

EvalCurve precision_curve(const std::vector<BBox>& pred, const std::vector<BBox>& gt) {
  require_lengths(pred, gt);
  std::vector<double> dist;
  for (std::size_t i = 0; i < pred.size(); ++i) dist.push_back(center_distance(pred[i], gt[i]));
  std::vector<double> t;
  for (int i = 0; i <= 50; ++i) t.push_back(i);
  EvalCurve c = curve(dist, std::move(t), false);
  c.p20 = c.values[20];
  return c;
}

SequenceScore score_sequence(const std::string& name, const std::vector<std::string>& tags,
                             const std::vector<BBox>& pred, const std::vector<BBox>& gt) {
  return {name, tags, success_curve(pred, gt), precision_curve(pred, gt)};
}

const std::vector<std::string>& known_attributes() {
  static const std::vector<std::string> a = {"FM", "BC", "DEF", "OCC", "SV", "IV"};
  return a;
}

std::vector<AttributeRow> attribute_report(const std::vector<SequenceScore>& scores) {
  std::vector<std::string> order = known_attributes();
  order.push_back("other");
  std::map<std::string, AttributeRow> rows;
  for (const auto& s : scores) {
    std::vector<std::string> keys;
    for (const auto& t : s.tags) {
      const bool known = std::find(known_attributes().begin(), known_attributes().end(), t) !=
                         known_attributes().end();
      const std::string key = known ? t : "other";
      if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
    }
    for (const auto& k : keys) {
      auto& r = rows[k];
      r.attribute = k;
      r.sequences += 1;
      r.success += s.success.auc;
      r.precision += s.precision.p20;
    }
  }
  std::vector<AttributeRow> out;
  for (const auto& k : order) {
    auto it = rows.find(k);
    if (it == rows.end()) continue;
    AttributeRow r = it->second;
    r.success /= r.sequences;
    r.precision /= r.sequences;
    out.push_back(r);
  }
  return out;
}

std::pair<double, double> overall(const std::vector<SequenceScore>& scores) {
  if (scores.empty()) return {0.0, 0.0};
  double s = 0, p = 0;
  for (const auto& x : scores) {
    s += x.success.auc;
    p += x.precision.p20;
  }
  return {s / scores.size(), p / scores.size()};
}

std::string success_precision_svg(const EvalCurve& success, const EvalCurve& precision,
                                  const std::string& title) {
  const int pw = 300, ph = 220, margin = 40;
  std::string svg;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" "
                "font-family=\"sans-serif\" font-size=\"11\">\n",
                2 * (pw + 2 * margin), ph + 2 * margin);
  svg += buf;
  auto panel = [&](int ox, const EvalCurve& c, double xmax, const char* xlabel, const std::string& label) {
    std::snprintf(buf, sizeof buf,
                  "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" fill=\"none\" stroke=\"#444\"/>\n",
                  ox + margin, margin, pw, ph);
    svg += buf;
    svg += "<polyline fill=\"none\" stroke=\"#c0392b\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < c.values.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", ox + margin + c.thresholds[i] / xmax * pw,
                    margin + (1.0 - c.values[i]) * ph);
      svg += buf;
    }
    svg += "\"/>\n";
    std::snprintf(buf, sizeof buf, "<text x=\"%d\" y=\"%d\" text-anchor=\"middle\">%s</text>\n",
                  ox + margin + pw / 2, ph + margin + 28, xlabel);
    svg += buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%d\" y=\"%d\" text-anchor=\"middle\">",
                  ox + margin + pw / 2, margin - 12);
    svg += buf + label + "</text>\n";
  };
  const std::string name = xml_escape(title);
  std::snprintf(buf, sizeof buf, " success [%.3f]", success.auc);
  panel(0, success, 1.0, "overlap threshold", name + buf);
  std::snprintf(buf, sizeof buf, " precision [%.3f]", precision.p20);
  panel(pw + 2 * margin, precision, 50.0, "location error threshold (px)", name + buf);
  svg += "</svg>\n";
  return svg;
}

}  // namespace bft
