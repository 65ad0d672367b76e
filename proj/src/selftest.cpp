#include <chrono>
#include <cmath>
#include <functional>

#include "bft/checks.hpp"
#include "bft/eval.hpp"
#include "bft/image.hpp"
#include "bft/model.hpp"
#include "bft/synth.hpp"

namespace bft {

namespace {

using Check = std::function<std::string()>;

Tensor<double> random_tensor(const Shape& s, Rng& rng) {
  Tensor<double> t(s);
  for (auto& v : t.data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

std::string check_conv_oracle(Rng& rng) {
  for (int trial = 0; trial < 10; ++trial) {
    const int c = rng.range(1, 3), h = rng.range(3, 8), w = rng.range(3, 8), o = rng.range(1, 3);
    const int k = 2 * rng.range(0, 1) + 1, stride = rng.range(1, 2), pad = rng.range(0, k / 2);
    Graph<double> g;
    auto x = g.constant(random_tensor({c, h, w}, rng));
    auto wt = g.constant(random_tensor({o, c, k, k}, rng));
    auto y = conv2d(x, wt, std::nullopt, stride, pad).value();
    for (int oc = 0; oc < o; ++oc)
      for (int i = 0; i < y.dim(1); ++i)
        for (int j = 0; j < y.dim(2); ++j) {
          double acc = 0;
          for (int ic = 0; ic < c; ++ic)
            for (int u = 0; u < k; ++u)
              for (int v = 0; v < k; ++v) {
                const int yy = i * stride - pad + u, xx = j * stride - pad + v;
                if (yy >= 0 && yy < h && xx >= 0 && xx < w)
                  acc += x.value().at(ic, yy, xx) * wt.value()[((oc * c + ic) * k + u) * k + v];
              }
          if (std::abs(acc - y.at(oc, i, j)) > 1e-9) return "conv2d differs from loop oracle";
        }
  }
  return "";
}

std::string check_softmax(Rng& rng) {
  for (int trial = 0; trial < 20; ++trial) {
    Graph<float> g;
    Tensor<float> t(Shape{1, rng.range(1, 40)});
    for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-8, 8));
    double s = 0;
    for (float v : softmax(g.constant(t), 1).value().data()) s += v;
    if (std::abs(s - 1.0) > 1e-6) return "softmax sum " + std::to_string(s);
  }
  return "";
}

std::string check_tape_identity(Rng& rng) {
  ParamStore<float> store;
  ParamBuilder<float> pb(store, &rng);
  TapeLayout t = declare_tape(pb, "tape", 8, TapeConfig{});
  Graph<float> g(&store);
  Tensor<float> f(Shape{8, 5, 5});
  for (auto& v : f.data()) v = static_cast<float>(rng.normal());
  auto out = encode(g, t, g.constant(f)).value();
  if (out.storage() != f.storage()) return "alpha = 0 changed the features";
  for (auto& e : store) e.value.fill(0.0f);
  Graph<float> g2(&store);
  auto fv = g2.constant(f);
  for (float v : channel_weights(g2, t, fv).value().data())
    if (v != 0.5f) return "zero-parameter W_c != 0.5";
  for (float v : spatial_weights(g2, t, fv).value().data())
    if (v != 0.5f) return "zero-parameter W_s != 0.5";
  return "";
}

std::string check_giou() {
  if (std::abs(giou_loss(BBox{0, 0, 1, 1}, BBox{0, 0, 1, 1})) > 1e-12) return "identical boxes";
  if (std::abs(giou_loss(BBox{0, 0, 1, 1}, BBox{2, 0, 1, 1}) - 4.0 / 3.0) > 1e-12) return "separated boxes";
  return "";
}

std::string check_metrics() {
  std::vector<BBox> gt, off;
  for (int i = 0; i < 30; ++i) {
    gt.push_back({10.0 + i, 20.0, 30, 20});
    off.push_back({35.0 + i, 20.0, 30, 20});
  }
  if (success_curve(gt, gt).auc != 1.0) return "perfect tracker AUC != 1";
  if (precision_curve(gt, gt).p20 != 1.0) return "perfect tracker P@20 != 1";
  if (precision_curve(off, gt).p20 != 0.0) return "25 px offset P@20 != 0";
  return "";
}

std::string check_checkpoint(Rng& rng) {
  ModelLayout layout;
  ParamStore<float> a = init_params(ModelConfig::gradcheck_tiny(), rng(), &layout);
  ParamStore<float> b = decode_checkpoint(encode_checkpoint(a));
  if (encode_checkpoint(b) != encode_checkpoint(a)) return "checkpoint round trip differs";
  bind_params(ModelConfig::gradcheck_tiny(), b);
  return "";
}

std::string check_ppm(Rng& rng) {
  Image img(7, 5);
  for (auto& v : img.rgb) v = static_cast<std::uint8_t>(rng.below(256));
  if (decode_ppm(encode_ppm(img)) != img) return "PPM round trip differs";
  return "";
}

std::string check_synth() {
  SynthConfig c;
  c.frames = 4;
  c.occluder = true;
  const auto a = render(c), b = render(c);
  if (a.frames != b.frames || a.gt != b.gt) return "rendering is not deterministic";
  if (std::find(a.tags.begin(), a.tags.end(), "OCC") == a.tags.end()) return "occluder not tagged";
  return "";
}

std::string check_decode_target() {
  const BBox box{41.3, 52.8, 30.5, 22.0};
  const TrainTarget t = make_target(box, 128, 8);
  PredictionValues p{Tensor<float>(Shape{1, 16, 16}, -5.0f), t.offset, Tensor<float>(Shape{2, 16, 16})};
  p.cls.at(0, t.row, t.col) = 5.0f;
  for (int k = 0; k < 2; ++k) {
    const double s = t.size.at(k, t.row, t.col);
    p.size.at(k, t.row, t.col) = static_cast<float>(std::log(s / (1 - s)));
  }
  const BBox d = decode(p, 128, 8);
  if (std::abs(d.cx() - box.cx()) > 4 || std::abs(d.cy() - box.cy()) > 4) return "center drift";
  if (std::abs(d.w - box.w) > 1 || std::abs(d.h - box.h) > 1) return "extent drift";
  return "";
}

std::string check_gradients(std::uint64_t seed) {
  const GradcheckReport r = gradcheck_scope("all", seed, 1e-4);
  if (!r.passed) return r.failure;
  return "";
}

}  // namespace

std::vector<SelftestLine> run_selftest(std::uint64_t seed) {
  Rng rng(seed);
  const std::vector<std::pair<std::string, Check>> checks = {
      {"conv2d_oracle", [&] { return check_conv_oracle(rng); }},
      {"softmax_normalized", [&] { return check_softmax(rng); }},
      {"tape_identity", [&] { return check_tape_identity(rng); }},
      {"giou_examples", [] { return check_giou(); }},
      {"metric_golden_values", [] { return check_metrics(); }},
      {"checkpoint_round_trip", [&] { return check_checkpoint(rng); }},
      {"ppm_round_trip", [&] { return check_ppm(rng); }},
      {"synth_determinism", [] { return check_synth(); }},
      {"target_decode_consistency", [] { return check_decode_target(); }},
      {"gradcheck_all", [seed] { return check_gradients(seed); }},
  };
  std::vector<SelftestLine> out;
  for (const auto& [name, fn] : checks) {
    SelftestLine line{name, false, ""};
    try {
      line.detail = fn();
      line.passed = line.detail.empty();
    } catch (const std::exception& e) {
      line.detail = e.what();
    }
    out.push_back(line);
  }
  return out;
}

}  // namespace bft
