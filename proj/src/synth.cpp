#include "bft/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "bft/rng.hpp"

namespace bft {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kMinExtent = 8.0;
constexpr double kFastMotion = 4.0;

struct Rgb {
  double r, g, b;
};

Rgb random_color(Rng& rng) { return {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)}; }

Rgb contrasting(const Rgb& c, Rng& rng) {
  Rgb o = random_color(rng);
  if (std::abs(o.r - c.r) + std::abs(o.g - c.g) + std::abs(o.b - c.b) < 0.6) {
    o = {1.0 - c.r, 1.0 - c.g, 1.0 - c.b};
  }
  return o;
}

double reflect(double v, double lo, double hi, double& vel) {
  if (hi <= lo) return 0.5 * (lo + hi);
  while (v < lo || v > hi) {
    if (v < lo) {
      v = 2 * lo - v;
      vel = std::abs(vel);
    }
    if (v > hi) {
      v = 2 * hi - v;
      vel = -std::abs(vel);
    }
  }
  return v;
}

struct Background {
  struct Wave {
    double kx, ky, phase, amp;
    Rgb tint;
  };
  Rgb base;
  std::vector<Wave> waves;
  std::vector<std::pair<BBox, Rgb>> patches;

  Rgb at(double x, double y) const {
    Rgb c = base;
    for (const auto& w : waves) {
      const double s = w.amp * std::sin(w.kx * x + w.ky * y + w.phase);
      c.r += s * w.tint.r;
      c.g += s * w.tint.g;
      c.b += s * w.tint.b;
    }
    for (const auto& [b, col] : patches) {
      if (x >= b.x && x < b.x + b.w && y >= b.y && y < b.y + b.h) c = col;
    }
    return c;
  }
};

Background make_background(const SynthConfig& cfg, Rng& rng) {
  Background bg;
  bg.base = {rng.uniform(0.25, 0.6), rng.uniform(0.25, 0.6), rng.uniform(0.25, 0.6)};
  for (int i = 0; i < 4; ++i) {
    const double freq = rng.uniform(0.02, 0.12);
    const double ang = rng.uniform(0.0, kTwoPi);
    bg.waves.push_back({freq * std::cos(ang), freq * std::sin(ang), rng.uniform(0.0, kTwoPi),
                        rng.uniform(0.04, 0.12), random_color(rng)});
  }
  const int patches = 6;
  for (int i = 0; i < patches; ++i) {
    const double w = rng.uniform(8, 30), h = rng.uniform(8, 30);
    bg.patches.push_back({BBox{rng.uniform(0, cfg.width - w), rng.uniform(0, cfg.height - h), w, h},
                          {rng.uniform(0.2, 0.7), rng.uniform(0.2, 0.7), rng.uniform(0.2, 0.7)}});
  }
  return bg;
}

struct Appearance {
  Rgb fill, pattern;
  int style;  // 0 stripes, 1 checker, 2 ring
  double period;
};

Appearance make_appearance(Rng& rng) {
  Appearance a;
  a.fill = random_color(rng);
  a.pattern = contrasting(a.fill, rng);
  a.style = static_cast<int>(rng.below(3));
  a.period = rng.uniform(0.25, 0.5);
  return a;
}

// (u, v) in [0,1]^2 object-local coordinates
bool inside(ObjectShape shape, double u, double v) {
  if (u < 0 || u >= 1 || v < 0 || v >= 1) return false;
  if (shape == ObjectShape::kRect) return true;
  const double du = u - 0.5, dv = v - 0.5;
  return du * du + dv * dv <= 0.25;
}

Rgb shade(const Appearance& a, double u, double v) {
  bool on = false;
  switch (a.style) {
    case 0: on = std::fmod(u / a.period, 1.0) < 0.5; break;
    case 1: on = (std::fmod(u / a.period, 1.0) < 0.5) != (std::fmod(v / a.period, 1.0) < 0.5); break;
    default: {
      const double r = std::hypot(u - 0.5, v - 0.5);
      on = r > 0.18 && r < 0.32;
    }
  }
  return on ? a.pattern : a.fill;
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

std::string motion_name(Motion m) {
  switch (m) {
    case Motion::kLinear: return "linear";
    case Motion::kSinusoidal: return "sinusoidal";
    case Motion::kRandomWalk: return "random-walk";
  }
  return "?";
}

Motion parse_motion(const std::string& s) {
  if (s == "linear") return Motion::kLinear;
  if (s == "sinusoidal") return Motion::kSinusoidal;
  if (s == "random-walk") return Motion::kRandomWalk;
  throw std::invalid_argument("unknown motion '" + s + "' (expected linear|sinusoidal|random-walk)");
}

std::vector<std::string> SynthConfig::tags() const {
  std::vector<std::string> t;
  const double peak_speed =
      motion == Motion::kSinusoidal ? amplitude * kTwoPi / period * std::sqrt(2.0) : speed;
  if (peak_speed >= kFastMotion) t.push_back("FM");
  if (distractors > 0) t.push_back("BC");
  if (deform > 0) t.push_back("DEF");
  if (occluder) t.push_back("OCC");
  if (scale_drift != 0) t.push_back("SV");
  if (illumination > 0) t.push_back("IV");
  return t;
}

void SynthConfig::validate() const {
  if (width < 32 || height < 32) throw std::invalid_argument("synth: frame must be at least 32x32");
  if (frames < 2) throw std::invalid_argument("synth: need at least 2 frames");
  if (object_w < kMinExtent || object_h < kMinExtent) {
    throw std::invalid_argument("synth: object extents must be at least 8 px");
  }
  if (object_w > 0.5 * width || object_h > 0.5 * height) {
    throw std::invalid_argument("synth: object larger than half the frame");
  }
  if (period <= 0) throw std::invalid_argument("synth: period must be positive");
  if (deform < 0 || deform >= 0.5) throw std::invalid_argument("synth: deform must lie in [0,0.5)");
  if (illumination < 0 || illumination >= 1) {
    throw std::invalid_argument("synth: illumination must lie in [0,1)");
  }
  if (distractors < 0) throw std::invalid_argument("synth: distractors must be non-negative");
}

std::vector<BBox> object_path(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed * 0x9e3779b97f4a7c15ULL + 17);
  std::vector<BBox> path;
  path.reserve(cfg.frames);
  const double max_w = 0.4 * cfg.width, max_h = 0.4 * cfg.height;
  double cx = rng.uniform(0.35, 0.65) * cfg.width;
  double cy = rng.uniform(0.35, 0.65) * cfg.height;
  const double heading = rng.uniform(0.0, kTwoPi);
  double vx = cfg.speed * std::cos(heading), vy = cfg.speed * std::sin(heading);
  const double cx0 = 0.5 * cfg.width, cy0 = 0.5 * cfg.height;
  for (int t = 0; t < cfg.frames; ++t) {
    const double s = std::exp(cfg.scale_drift * t);
    const double wob = cfg.deform * std::sin(kTwoPi * t / 20.0);
    const double w = std::clamp(cfg.object_w * s * (1.0 + wob), kMinExtent, max_w);
    const double h = std::clamp(cfg.object_h * s * (1.0 - wob), kMinExtent, max_h);
    if (cfg.motion == Motion::kSinusoidal) {
      cx = cx0 + cfg.amplitude * std::sin(kTwoPi * t / cfg.period);
      cy = cy0 + 0.5 * cfg.amplitude * std::sin(2.0 * kTwoPi * t / cfg.period);
    } else if (t > 0) {
      if (cfg.motion == Motion::kRandomWalk) {
        vx += 0.35 * cfg.speed * rng.normal();
        vy += 0.35 * cfg.speed * rng.normal();
        const double v = std::hypot(vx, vy), vmax = 1.5 * cfg.speed;
        if (v > vmax) {
          vx *= vmax / v;
          vy *= vmax / v;
        }
      }
      cx = reflect(cx + vx, 0.5 * w + 2, cfg.width - 0.5 * w - 2, vx);
      cy = reflect(cy + vy, 0.5 * h + 2, cfg.height - 0.5 * h - 2, vy);
    }
    path.push_back(BBox::from_center(cx, cy, w, h));
  }
  return path;
}

RenderedSequence render(const SynthConfig& cfg) {
  RenderedSequence seq;
  seq.name = cfg.name;
  seq.gt = object_path(cfg);
  seq.tags = cfg.tags();

  Rng rng(cfg.seed);
  const Background bg = make_background(cfg, rng);
  const Appearance look = make_appearance(rng);
  struct Distractor {
    double cx, cy, vx, vy;
    Appearance look;
  };
  std::vector<Distractor> distractors;
  for (int i = 0; i < cfg.distractors; ++i) {
    Appearance a = look;
    a.style = (look.style + 1 + i) % 3;
    distractors.push_back({rng.uniform(0.15, 0.85) * cfg.width, rng.uniform(0.15, 0.85) * cfg.height,
                           rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8), a});
  }
  const double occ_speed = 3.0;
  const int occ_mid = cfg.frames / 2;
  const double occ_x = seq.gt[occ_mid].cx();
  const double occ_w = 0.8 * cfg.object_w;
  const Rgb occ_col{0.5, 0.5, 0.5};

  std::vector<Rgb> bg_plane(static_cast<std::size_t>(cfg.width) * cfg.height);
  for (int y = 0; y < cfg.height; ++y)
    for (int x = 0; x < cfg.width; ++x) bg_plane[static_cast<std::size_t>(y) * cfg.width + x] = bg.at(x + 0.5, y + 0.5);

  for (int t = 0; t < cfg.frames; ++t) {
    std::vector<Rgb> frame = bg_plane;
    auto paint = [&](const BBox& b, const Appearance& a) {
      const int x0 = std::max(0, static_cast<int>(std::floor(b.x)));
      const int x1 = std::min(cfg.width, static_cast<int>(std::ceil(b.x + b.w)));
      const int y0 = std::max(0, static_cast<int>(std::floor(b.y)));
      const int y1 = std::min(cfg.height, static_cast<int>(std::ceil(b.y + b.h)));
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          const double u = (x + 0.5 - b.x) / b.w, v = (y + 0.5 - b.y) / b.h;
          if (inside(cfg.shape, u, v)) frame[static_cast<std::size_t>(y) * cfg.width + x] = shade(a, u, v);
        }
      }
    };
    for (auto& d : distractors) {
      double vx = d.vx, vy = d.vy;
      d.cx = reflect(d.cx + vx, 0.0, cfg.width, vx);
      d.cy = reflect(d.cy + vy, 0.0, cfg.height, vy);
      d.vx = vx;
      d.vy = vy;
      paint(BBox::from_center(d.cx, d.cy, cfg.object_w, cfg.object_h), d.look);
    }
    paint(seq.gt[t], look);
    if (cfg.occluder) {
      const double ox = occ_x + (t - occ_mid) * occ_speed - 0.5 * occ_w;
      const int x0 = std::max(0, static_cast<int>(std::floor(ox)));
      const int x1 = std::min(cfg.width, static_cast<int>(std::ceil(ox + occ_w)));
      for (int y = 0; y < cfg.height; ++y)
        for (int x = x0; x < x1; ++x) frame[static_cast<std::size_t>(y) * cfg.width + x] = occ_col;
    }
    const double gain = 1.0 + cfg.illumination * std::sin(kTwoPi * t / 40.0);
    Rng noise(cfg.seed ^ (0xabcdef12345ULL + static_cast<std::uint64_t>(t) * 0x100000001b3ULL));
    Image img(cfg.width, cfg.height);
    for (std::size_t i = 0; i < frame.size(); ++i) {
      const double n = (noise.uniform() - 0.5) * 0.03;
      img.rgb[3 * i + 0] = to_byte(frame[i].r * gain + n);
      img.rgb[3 * i + 1] = to_byte(frame[i].g * gain + n);
      img.rgb[3 * i + 2] = to_byte(frame[i].b * gain + n);
    }
    seq.frames.push_back(std::move(img));
  }
  return seq;
}

void write_sequence(const RenderedSequence& seq, const std::filesystem::path& out) {
  std::error_code ec;
  std::filesystem::create_directories(out / "img", ec);
  if (ec) throw IoError("cannot create " + (out / "img").string() + ": " + ec.message());
  for (std::size_t t = 0; t < seq.frames.size(); ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.ppm", t + 1);
    write_ppm(out / "img" / name, seq.frames[t]);
  }
  write_boxes((out / "groundtruth.csv").string(), seq.gt);
  std::ofstream tags(out / "attributes.txt", std::ios::binary);
  if (!tags) throw IoError("cannot write " + (out / "attributes.txt").string());
  for (std::size_t i = 0; i < seq.tags.size(); ++i) tags << (i ? "," : "") << seq.tags[i];
  tags << '\n';
}

void generate(const SynthConfig& cfg, const std::filesystem::path& out) {
  write_sequence(render(cfg), out);
}

namespace {

SynthConfig suite_entry(const std::string& name, Motion motion, ObjectShape shape, std::uint64_t seed,
                        Rng& rng) {
  SynthConfig c;
  c.name = name;
  c.motion = motion;
  c.shape = shape;
  c.seed = seed;
  c.object_w = std::round(rng.uniform(20, 32));
  c.object_h = std::round(rng.uniform(18, 30));
  c.speed = rng.uniform(1.0, 2.0);
  c.amplitude = rng.uniform(30, 45);
  c.period = c.amplitude * rng.uniform(3.2, 4.0);
  return c;
}

void apply_tag(SynthConfig& c, const std::string& tag) {
  if (tag == "FM") {
    c.speed = 4.5;
    c.period = std::min(c.period, 2.0 * std::numbers::pi * c.amplitude * std::sqrt(2.0) / 4.5);
  } else if (tag == "BC") {
    c.distractors = 3;
  } else if (tag == "DEF") {
    c.deform = 0.3;
  } else if (tag == "OCC") {
    c.occluder = true;
  } else if (tag == "SV") {
    c.scale_drift = 0.006;
  } else if (tag == "IV") {
    c.illumination = 0.35;
  }
}

}  // namespace

std::vector<SynthConfig> standard_suite(std::uint64_t seed) {
  struct Row {
    Motion motion;
    ObjectShape shape;
    std::vector<std::string> tags;
  };
  const std::vector<Row> rows = {
      {Motion::kLinear, ObjectShape::kRect, {"FM"}},
      {Motion::kSinusoidal, ObjectShape::kRect, {"BC"}},
      {Motion::kRandomWalk, ObjectShape::kEllipse, {"DEF"}},
      {Motion::kLinear, ObjectShape::kRect, {"OCC"}},
      {Motion::kSinusoidal, ObjectShape::kEllipse, {"SV"}},
      {Motion::kRandomWalk, ObjectShape::kRect, {"IV"}},
      {Motion::kLinear, ObjectShape::kEllipse, {"FM", "BC"}},
      {Motion::kSinusoidal, ObjectShape::kRect, {"DEF", "SV"}},
      {Motion::kRandomWalk, ObjectShape::kRect, {"OCC", "IV"}},
      {Motion::kLinear, ObjectShape::kEllipse, {"SV", "IV"}},
      {Motion::kSinusoidal, ObjectShape::kRect, {"FM", "OCC"}},
      {Motion::kRandomWalk, ObjectShape::kEllipse, {"BC", "DEF"}},
  };
  Rng rng(seed);
  std::vector<SynthConfig> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "seq%02zu", i + 1);
    SynthConfig c = suite_entry(name, rows[i].motion, rows[i].shape, seed * 1000 + i + 1, rng);
    for (const auto& t : rows[i].tags) apply_tag(c, t);
    if (rows[i].tags.size() == 1 && rows[i].tags[0] == "SV") c.scale_drift = -0.004;
    out.push_back(c);
  }
  return out;
}

std::vector<SynthConfig> heldout_suite(std::uint64_t seed) {
  Rng rng(seed ^ 0x5a5a5a5aULL);
  std::vector<SynthConfig> out;
  out.push_back(suite_entry("held01", Motion::kLinear, ObjectShape::kRect, seed * 1000 + 501, rng));
  apply_tag(out.back(), "SV");
  out.push_back(suite_entry("held02", Motion::kSinusoidal, ObjectShape::kEllipse, seed * 1000 + 502, rng));
  apply_tag(out.back(), "DEF");
  out.push_back(suite_entry("held03", Motion::kRandomWalk, ObjectShape::kRect, seed * 1000 + 503, rng));
  apply_tag(out.back(), "IV");
  return out;
}

}  // namespace bft
