#include "bft/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

namespace bft {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

long to_int(const std::string& v) {
  std::size_t used = 0;
  long out = 0;
  try {
    out = std::stol(v, &used);
  } catch (const std::exception&) {
    throw ConfigError("expected an integer, got '" + v + "'");
  }
  if (used != v.size()) throw ConfigError("expected an integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    throw ConfigError("expected a number, got '" + v + "'");
  }
  if (used != v.size()) throw ConfigError("expected a number, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("expected a boolean, got '" + v + "'");
}

std::vector<int> to_int_list(const std::string& v) {
  std::vector<int> out;
  std::stringstream in(v);
  std::string tok;
  while (std::getline(in, tok, ',')) out.push_back(static_cast<int>(to_int(trim(tok))));
  if (out.empty()) throw ConfigError("expected a comma-separated list");
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

struct Key {
  const char* name;
  const char* fallback;
  Setter set;
};

const std::vector<Key>& keys() {
  static const std::vector<Key> k = {
      {"run.seed", "1", [](RunConfig& c, const std::string& v) { c.seed = static_cast<std::uint64_t>(to_int(v)); c.train.seed = c.seed; }},
      {"run.preset", "desk", [](RunConfig&, const std::string&) {}},
      {"run.variant", "full", [](RunConfig& c, const std::string& v) { c.model.variant = parse_variant(v); }},
      {"backbone.d", "32", [](RunConfig& c, const std::string& v) { c.model.backbone.d = static_cast<int>(to_int(v)); }},
      {"backbone.stage_channels", "8,16,32,32", [](RunConfig& c, const std::string& v) { c.model.backbone.stage_channels = to_int_list(v); }},
      {"backbone.strides", "2,2,1,2", [](RunConfig& c, const std::string& v) { c.model.backbone.strides = to_int_list(v); }},
      {"backbone.template_size", "64", [](RunConfig& c, const std::string& v) { c.model.backbone.template_size = static_cast<int>(to_int(v)); }},
      {"backbone.search_size", "128", [](RunConfig& c, const std::string& v) { c.model.backbone.search_size = static_cast<int>(to_int(v)); }},
      {"backbone.corr", "depthwise", [](RunConfig& c, const std::string& v) {
         if (v == "depthwise") c.model.backbone.corr = CorrMode::kDepthwise;
         else if (v == "grouped") c.model.backbone.corr = CorrMode::kGrouped;
         else throw ConfigError("expected depthwise|grouped, got '" + v + "'");
       }},
      {"backbone.corr_groups", "8", [](RunConfig& c, const std::string& v) { c.model.backbone.corr_groups = static_cast<int>(to_int(v)); }},
      {"tape.enabled", "true", [](RunConfig& c, const std::string& v) { c.model.tape.enabled = to_bool(v); }},
      {"tape.ratio", "4", [](RunConfig& c, const std::string& v) { c.model.tape.ratio = static_cast<int>(to_int(v)); }},
      {"tape.kernel", "7", [](RunConfig& c, const std::string& v) { c.model.tape.kernel = static_cast<int>(to_int(v)); }},
      {"tape.multiplicative", "false", [](RunConfig& c, const std::string& v) { c.model.tape.multiplicative = to_bool(v); }},
      {"tape.alpha_init", "0", [](RunConfig& c, const std::string& v) { c.model.tape.alpha_init = to_double(v); }},
      {"tape.in_self", "false", [](RunConfig& c, const std::string& v) { c.model.tape.in_self = to_bool(v); }},
      {"fusion.depth", "1", [](RunConfig& c, const std::string& v) { c.model.fusion.depth = static_cast<int>(to_int(v)); }},
      {"fusion.ffn_expansion", "2", [](RunConfig& c, const std::string& v) { c.model.fusion.ffn_expansion = static_cast<int>(to_int(v)); }},
      {"fusion.share_streams", "false", [](RunConfig& c, const std::string& v) { c.model.fusion.share_streams = to_bool(v); }},
      {"fusion.share_self", "false", [](RunConfig& c, const std::string& v) { c.model.fusion.share_self = to_bool(v); }},
      {"heads.depth", "3", [](RunConfig& c, const std::string& v) { c.model.heads.depth = static_cast<int>(to_int(v)); }},
      {"heads.hidden", "16", [](RunConfig& c, const std::string& v) { c.model.heads.hidden = static_cast<int>(to_int(v)); }},
      {"heads.window_gamma", "0.3", [](RunConfig& c, const std::string& v) { c.model.heads.window_gamma = to_double(v); c.tracker.window_gamma = c.model.heads.window_gamma; }},
      {"loss.lambda1", "2", [](RunConfig& c, const std::string& v) { c.model.loss.lambda1 = to_double(v); }},
      {"loss.lambda2", "5", [](RunConfig& c, const std::string& v) { c.model.loss.lambda2 = to_double(v); }},
      {"train.epochs", "30", [](RunConfig& c, const std::string& v) { c.train.epochs = static_cast<int>(to_int(v)); }},
      {"train.pairs_per_epoch", "500", [](RunConfig& c, const std::string& v) { c.train.pairs_per_epoch = static_cast<int>(to_int(v)); }},
      {"train.batch", "8", [](RunConfig& c, const std::string& v) { c.train.batch = static_cast<int>(to_int(v)); }},
      {"train.lr", "4e-4", [](RunConfig& c, const std::string& v) { c.train.lr = to_double(v); }},
      {"train.lr_backbone", "4e-5", [](RunConfig& c, const std::string& v) { c.train.lr_backbone = to_double(v); }},
      {"train.weight_decay", "1e-4", [](RunConfig& c, const std::string& v) { c.train.weight_decay = to_double(v); }},
      {"train.decay_at", "0.8", [](RunConfig& c, const std::string& v) { c.train.decay_at = to_double(v); }},
      {"train.decay_factor", "0.1", [](RunConfig& c, const std::string& v) { c.train.decay_factor = to_double(v); }},
      {"train.clip", "10", [](RunConfig& c, const std::string& v) { c.train.clip = to_double(v); }},
      {"train.max_gap", "20", [](RunConfig& c, const std::string& v) { c.train.sampling.max_gap = static_cast<int>(to_int(v)); }},
      {"train.shift_jitter", "0.2", [](RunConfig& c, const std::string& v) { c.train.sampling.shift = to_double(v); }},
      {"train.scale_jitter", "0.15", [](RunConfig& c, const std::string& v) { c.train.sampling.scale = to_double(v); }},
      {"train.flip", "true", [](RunConfig& c, const std::string& v) { c.train.sampling.flip = to_bool(v); }},
      {"train.threads", "0", [](RunConfig& c, const std::string& v) { c.train.threads = static_cast<int>(to_int(v)); }},
      {"track.window", "true", [](RunConfig& c, const std::string& v) { c.tracker.use_window = to_bool(v); }},
      {"track.size_lr", "0.05", [](RunConfig& c, const std::string& v) { c.tracker.size_lr = to_double(v); }},
      {"synth.name", "seq", [](RunConfig& c, const std::string& v) { c.synth.name = v; }},
      {"synth.width", "192", [](RunConfig& c, const std::string& v) { c.synth.width = static_cast<int>(to_int(v)); }},
      {"synth.height", "192", [](RunConfig& c, const std::string& v) { c.synth.height = static_cast<int>(to_int(v)); }},
      {"synth.frames", "100", [](RunConfig& c, const std::string& v) { c.synth.frames = static_cast<int>(to_int(v)); }},
      {"synth.shape", "rect", [](RunConfig& c, const std::string& v) {
         if (v == "rect") c.synth.shape = ObjectShape::kRect;
         else if (v == "ellipse") c.synth.shape = ObjectShape::kEllipse;
         else throw ConfigError("expected rect|ellipse, got '" + v + "'");
       }},
      {"synth.object_w", "28", [](RunConfig& c, const std::string& v) { c.synth.object_w = to_double(v); }},
      {"synth.object_h", "22", [](RunConfig& c, const std::string& v) { c.synth.object_h = to_double(v); }},
      {"synth.motion", "linear", [](RunConfig& c, const std::string& v) { c.synth.motion = parse_motion(v); }},
      {"synth.speed", "1.5", [](RunConfig& c, const std::string& v) { c.synth.speed = to_double(v); }},
      {"synth.amplitude", "40", [](RunConfig& c, const std::string& v) { c.synth.amplitude = to_double(v); }},
      {"synth.period", "50", [](RunConfig& c, const std::string& v) { c.synth.period = to_double(v); }},
      {"synth.scale_drift", "0", [](RunConfig& c, const std::string& v) { c.synth.scale_drift = to_double(v); }},
      {"synth.deform", "0", [](RunConfig& c, const std::string& v) { c.synth.deform = to_double(v); }},
      {"synth.occluder", "false", [](RunConfig& c, const std::string& v) { c.synth.occluder = to_bool(v); }},
      {"synth.distractors", "0", [](RunConfig& c, const std::string& v) { c.synth.distractors = static_cast<int>(to_int(v)); }},
      {"synth.illumination", "0", [](RunConfig& c, const std::string& v) { c.synth.illumination = to_double(v); }},
      {"synth.seed", "1", [](RunConfig& c, const std::string& v) { c.synth.seed = static_cast<std::uint64_t>(to_int(v)); }},
  };
  return k;
}

const Key* find_key(const std::string& name) {
  for (const auto& k : keys())
    if (name == k.name) return &k;
  return nullptr;
}

struct Entry {
  int line;
  std::string key, value;
};

std::vector<Entry> tokenize(const std::string& text) {
  std::vector<Entry> out;
  std::istringstream in(text);
  std::string raw, section;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto fail = [&](const std::string& msg) {
      return ConfigError("config line " + std::to_string(line_no) + ": " + msg);
    };
    if (line.front() == '[') {
      if (line.back() != ']') throw fail("malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      bool known = false;
      for (const auto& k : keys())
        if (std::string(k.name).rfind(section + ".", 0) == 0) known = true;
      if (!known) throw fail("unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw fail("expected key = value");
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.find('.') == std::string::npos) key = (section.empty() ? "run" : section) + "." + key;
    if (!find_key(key)) throw fail("unknown key '" + key + "'");
    if (value.empty()) throw fail("empty value for '" + key + "'");
    out.push_back({line_no, key, value});
  }
  return out;
}

}  // namespace

RunConfig preset_config(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "desk") return c;
  if (name == "paper") {
    c.model = ModelConfig::paper();
    c.train = TrainConfig::paper();
    return c;
  }
  throw ConfigError("unknown preset '" + name + "' (expected desk|paper)");
}

RunConfig parse_config(const std::string& text) {
  const auto entries = tokenize(text);
  std::string preset = "desk";
  for (const auto& e : entries)
    if (e.key == "run.preset") preset = e.value;
  RunConfig c = preset_config(preset);
  for (const auto& e : entries) {
    try {
      find_key(e.key)->set(c, e.value);
    } catch (const std::invalid_argument& ex) {
      throw ConfigError("config line " + std::to_string(e.line) + ": " + e.key + ": " + ex.what());
    }
  }
  try {
    c.model.validate();
    c.train.validate();
  } catch (const std::exception& ex) {
    throw ConfigError(std::string("config: ") + ex.what());
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_reference() {
  std::string out;
  std::string section;
  for (const auto& k : keys()) {
    const std::string name = k.name;
    const auto dot = name.find('.');
    const std::string sec = name.substr(0, dot);
    if (sec != section) {
      out += (section.empty() ? "" : "\n") + std::string("[") + sec + "]\n";
      section = sec;
    }
    out += name.substr(dot + 1) + " = " + k.fallback + "\n";
  }
  return out;
}

}  // namespace bft
