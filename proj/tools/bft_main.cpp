#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "bft/ablate.hpp"
#include "bft/checks.hpp"
#include "bft/config.hpp"
#include "bft/eval.hpp"
#include "bft/parallel.hpp"
#include "bft/synth.hpp"

namespace fs = std::filesystem;
using namespace bft;

namespace {

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

RunConfig config_or_default(const std::string& path) {
  return path.empty() ? preset_config("desk") : load_config(path);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<LoadedSequence> load_all(const fs::path& dir) {
  std::vector<LoadedSequence> out;
  for (const auto& s : load_sequences(dir)) out.push_back(load_frames(s));
  return out;
}

ParamStore<float> load_model(const std::string& ckpt, const ModelConfig& cfg, ModelLayout& layout) {
  ParamStore<float> params = load_checkpoint(ckpt);
  layout = bind_params(cfg, params);
  return params;
}

int cmd_synth(const std::string& config, const std::string& out, bool suite, bool heldout,
              long seed) {
  RunConfig cfg = config_or_default(config);
  const std::uint64_t s = seed >= 0 ? static_cast<std::uint64_t>(seed) : cfg.seed;
  if (!suite && !heldout) {
    if (seed >= 0) cfg.synth.seed = s;
    generate(cfg.synth, out);
    std::printf("wrote %s (%d frames)\n", out.c_str(), cfg.synth.frames);
    return 0;
  }
  std::vector<SynthConfig> list;
  if (suite) list = standard_suite(s);
  if (heldout) {
    auto h = heldout_suite(s);
    list.insert(list.end(), h.begin(), h.end());
  }
  for (const auto& c : list) generate(c, fs::path(out) / c.name);
  std::printf("wrote %zu sequences to %s\n", list.size(), out.c_str());
  return 0;
}

int cmd_init(const std::string& config, const std::string& out, bool zero, long seed) {
  RunConfig cfg = config_or_default(config);
  ParamStore<float> params = init_params(cfg.model, seed >= 0 ? seed : cfg.seed, nullptr);
  if (zero)
    for (auto& e : params) e.value.fill(0.0f);
  save_checkpoint(params, out);
  std::printf("wrote %s (%zu tensors, %zu values)\n", out.c_str(), params.size(), params.total_values());
  return 0;
}

int cmd_train(const std::string& config, const std::string& data, const std::string& out,
              std::string log_path, const std::string& init, long seed) {
  RunConfig cfg = config_or_default(config);
  if (seed >= 0) {
    cfg.seed = static_cast<std::uint64_t>(seed);
    cfg.train.seed = cfg.seed;
  }
  if (log_path.empty()) log_path = out + ".loss.csv";
  ModelLayout layout;
  ParamStore<float> params;
  if (init.empty()) {
    params = init_params(cfg.model, cfg.seed, &layout);
  } else {
    params = load_model(init, cfg.model, layout);
  }
  const auto sequences = load_all(data);
  const long per_epoch = (cfg.train.pairs_per_epoch + cfg.train.batch - 1) / cfg.train.batch;
  const auto start = std::chrono::steady_clock::now();
  double epoch_loss = 0;
  std::vector<LossRecord> log;
  try {
    log = train(layout, params, sequences, cfg.train, [&](const LossRecord& r) {
      epoch_loss += r.loss;
      if ((r.iter + 1) % per_epoch == 0) {
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::fprintf(stderr, "epoch %ld loss %.4f (%.0f s)\n", (r.iter + 1) / per_epoch, epoch_loss / per_epoch, secs);
        epoch_loss = 0;
      }
    });
  } catch (const TrainingAborted& e) {
    save_checkpoint(e.last_good, out);
    throw;
  }
  save_checkpoint(params, out);
  write_loss_log(log_path, log);
  std::printf("wrote %s and %s (%zu iterations)\n", out.c_str(), log_path.c_str(), log.size());
  return 0;
}

int cmd_track(const std::string& model, const std::string& seq, const std::string& out,
              const std::string& variant, const std::string& config) {
  RunConfig cfg = config_or_default(config);
  if (!variant.empty()) cfg.model.variant = parse_variant(variant);
  ModelLayout layout;
  ParamStore<float> params = load_model(model, cfg.model, layout);
  const SequenceDataset ds = load_sequence(seq);
  const auto boxes = track_sequence(layout, params, ds, cfg.tracker);
  write_boxes(out, boxes);
  const auto s = success_curve(boxes, ds.gt);
  const auto p = precision_curve(boxes, ds.gt);
  std::printf("%s frames=%zu success_auc=%.4f precision_p20=%.4f\n", ds.name.c_str(), boxes.size(), s.auc, p.p20);
  return 0;
}

std::vector<std::string> split_tags(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string t;
  while (std::getline(in, t, ','))
    if (!t.empty()) out.push_back(t);
  return out;
}

int cmd_eval(const std::string& results, const std::string& gt, const std::string& attr,
             const std::string& plot, const std::string& report) {
  std::vector<SequenceScore> scores;
  if (fs::is_directory(results)) {
    for (const auto& seq : load_sequences(gt)) {
      const fs::path r = fs::path(results) / (seq.name + ".csv");
      if (!fs::exists(r)) throw IoError("missing result file " + r.string());
      scores.push_back(score_sequence(seq.name, seq.tags, read_boxes(r.string()), seq.gt));
    }
  } else {
    std::vector<BBox> truth;
    std::vector<std::string> tags = split_tags(attr);
    std::string name = fs::path(results).stem().string();
    if (fs::is_directory(gt)) {
      const auto ds = load_sequence(gt);
      truth = ds.gt;
      name = ds.name;
      if (tags.empty()) tags = ds.tags;
    } else {
      truth = read_boxes(gt);
    }
    scores.push_back(score_sequence(name, tags, read_boxes(results), truth));
  }
  std::string csv = "sequence,tags,success_auc,precision_p20\n";
  char buf[256];
  for (const auto& s : scores) {
    std::string tags;
    for (const auto& t : s.tags) tags += (tags.empty() ? "" : " ") + t;
    std::snprintf(buf, sizeof buf, "%s,%s,%.4f,%.4f\n", s.name.c_str(), tags.c_str(), s.success.auc, s.precision.p20);
    csv += buf;
  }
  const auto [succ, prec] = overall(scores);
  std::snprintf(buf, sizeof buf, "overall,,%.4f,%.4f\n", succ, prec);
  csv += buf;
  const auto wanted = split_tags(attr);
  for (const auto& row : attribute_report(scores)) {
    if (fs::is_directory(results) && !wanted.empty() &&
        std::find(wanted.begin(), wanted.end(), row.attribute) == wanted.end()) {
      continue;
    }
    std::snprintf(buf, sizeof buf, "attr:%s,%d,%.4f,%.4f\n", row.attribute.c_str(), row.sequences, row.success, row.precision);
    csv += buf;
  }
  if (!report.empty()) write_text(report, csv);
  std::fputs(csv.c_str(), stdout);
  if (!plot.empty()) {
    // pooled curves: mean over sequences per threshold
    auto pooled = [&](auto pick) {
      EvalCurve c = pick(scores.front());
      for (std::size_t k = 1; k < scores.size(); ++k)
        for (std::size_t i = 0; i < c.values.size(); ++i) c.values[i] += pick(scores[k]).values[i];
      for (auto& v : c.values) v /= scores.size();
      return c;
    };
    EvalCurve s = pooled([](const SequenceScore& x) { return x.success; });
    EvalCurve p = pooled([](const SequenceScore& x) { return x.precision; });
    s.auc = succ;
    p.p20 = prec;
    write_text(plot, success_precision_svg(s, p, "OPE"));
  }
  return 0;
}

int cmd_ablate(const std::string& data, const std::string& out, const std::string& config,
               const std::string& eval_dir, long seed) {
  RunConfig cfg = config_or_default(config);
  if (seed >= 0) {
    cfg.seed = static_cast<std::uint64_t>(seed);
    cfg.train.seed = cfg.seed;
  }
  const auto train_data = load_all(data);
  const auto eval = eval_dir.empty() ? heldout_sequences(cfg.seed) : load_all(eval_dir);
  const auto rows = run_ablation(cfg, train_data, eval, worker_count());
  const std::string table = format_ablation(rows);
  write_text(out, table);
  std::fputs(table.c_str(), stdout);
  return 0;
}

int cmd_gradcheck(long seed, double tol, const std::string& scope, int seeds) {
  double worst = 0;
  for (int k = 0; k < seeds; ++k) {
    const GradcheckReport r = gradcheck_scope(scope, static_cast<std::uint64_t>(seed + k), tol);
    if (!r.passed) {
      std::printf("FAIL seed=%ld reason=%s\n", seed + k, one_line(r.failure).c_str());
      return 1;
    }
    worst = std::max(worst, r.max_rel_err);
  }
  std::printf("PASS max_rel_err=%.3e\n", worst);
  return 0;
}

int cmd_selftest(long seed) {
  const auto lines = run_selftest(static_cast<std::uint64_t>(seed));
  int failed = 0;
  for (const auto& l : lines) {
    if (l.passed) {
      std::printf("ok   %s\n", l.name.c_str());
    } else {
      ++failed;
      std::printf("FAIL %s: %s\n", l.name.c_str(), one_line(l.detail).c_str());
    }
  }
  std::printf("%s %zu/%zu checks passed\n", failed ? "FAIL" : "PASS", lines.size() - failed, lines.size());
  return failed ? 1 : 0;
}

int fail(const char* kind, const std::string& what, int code) {
  std::fprintf(stderr, "error kind=%s reason=%s\n", kind, one_line(what).c_str());
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BFTrans desk-scale tracker"};
  app.require_subcommand(1);
  app.footer("Environment: BFT_THREADS caps the worker count; BFT_ISA=scalar disables SIMD kernels.\n\nConfig keys:\n" + config_reference());

  std::string config, out, data, model, seq, variant, results, gt, attr, plot, report, log_path, init, eval_dir;
  std::string scope = "all";
  bool suite = false, heldout = false, zero = false;
  long seed = -1;
  double tol = 1e-4;
  int seeds = 1;

  auto* synth = app.add_subcommand("synth", "generate a synthetic sequence or the standard suite");
  synth->add_option("--config", config, "run config (INI)");
  synth->add_option("--out", out, "output directory")->required();
  synth->add_flag("--suite", suite, "write the 12-sequence attribute suite");
  synth->add_flag("--heldout", heldout, "write the 3 held-out evaluation sequences");
  synth->add_option("--seed", seed, "override the seed");

  auto* init_cmd = app.add_subcommand("init", "write a freshly initialized checkpoint");
  init_cmd->add_option("--config", config, "run config (INI)");
  init_cmd->add_option("--out", out, "checkpoint path")->required();
  init_cmd->add_flag("--zero", zero, "zero every parameter");
  init_cmd->add_option("--seed", seed, "override the seed");

  auto* train_cmd = app.add_subcommand("train", "train a model on a directory of sequences");
  train_cmd->add_option("--config", config, "run config (INI)");
  train_cmd->add_option("--data", data, "sequence directory")->required();
  train_cmd->add_option("--out", out, "checkpoint path")->required();
  train_cmd->add_option("--log", log_path, "loss log CSV (default <out>.loss.csv)");
  train_cmd->add_option("--init", init, "start from this checkpoint");
  train_cmd->add_option("--seed", seed, "override the seed");

  auto* track = app.add_subcommand("track", "run the tracker over one sequence");
  track->add_option("--model", model, "checkpoint")->required();
  track->add_option("--seq", seq, "sequence directory")->required();
  track->add_option("--out", out, "result CSV")->required();
  track->add_option("--variant", variant, "baseline|ffm|bfm|bidir|full");
  track->add_option("--config", config, "run config (INI)");

  auto* eval = app.add_subcommand("eval", "success and precision metrics");
  eval->add_option("--results", results, "result CSV, or a directory of <seq>.csv")->required();
  eval->add_option("--gt", gt, "groundtruth CSV, a sequence directory, or a suite directory")->required();
  eval->add_option("--attr", attr, "comma-separated attribute tags");
  eval->add_option("--plot", plot, "write an SVG success/precision plot");
  eval->add_option("--out", report, "write the report CSV");

  auto* ablate = app.add_subcommand("ablate", "train, track and evaluate every variant");
  ablate->add_option("--data", data, "training sequence directory")->required();
  ablate->add_option("--out", out, "table CSV")->required();
  ablate->add_option("--config", config, "run config (INI)");
  ablate->add_option("--eval", eval_dir, "evaluation sequences (default: rendered held-out set)");
  ablate->add_option("--seed", seed, "override the seed");

  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  grad->add_option("--seed", seed, "first seed (default 1)");
  grad->add_option("--tol", tol, "relative error tolerance");
  grad->add_option("--scope", scope, "tensor|tape|fusion|heads|model|all")
      ->check(CLI::IsMember(gradcheck_scopes()));
  grad->add_option("--seeds", seeds, "number of consecutive seeds")->check(CLI::PositiveNumber);

  auto* self = app.add_subcommand("selftest", "dataset-free invariant suite");
  self->add_option("--seed", seed, "seed (default 1)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    if (*synth) return cmd_synth(config, out, suite, heldout, seed);
    if (*init_cmd) return cmd_init(config, out, zero, seed);
    if (*train_cmd) return cmd_train(config, data, out, log_path, init, seed);
    if (*track) return cmd_track(model, seq, out, variant, config);
    if (*eval) return cmd_eval(results, gt, attr, plot, report);
    if (*ablate) return cmd_ablate(data, out, config, eval_dir, seed);
    if (*grad) return cmd_gradcheck(seed >= 0 ? seed : 1, tol, scope, seeds);
    if (*self) return cmd_selftest(seed >= 0 ? seed : 1);
  } catch (const TrainingAborted& e) {
    return fail("nan", std::string(e.what()) + " (last good checkpoint written)", 4);
  } catch (const ConfigError& e) {
    return fail("config", e.what(), 2);
  } catch (const IoError& e) {
    return fail("io", e.what(), 3);
  } catch (const NumericError& e) {
    return fail("numeric", e.what(), 4);
  } catch (const DimensionError& e) {
    return fail("dimension", e.what(), 5);
  } catch (const std::filesystem::filesystem_error& e) {
    return fail("io", e.what(), 3);
  } catch (const std::exception& e) {
    return fail("invalid", e.what(), 1);
  }
  return fail("usage", "no subcommand", 2);
}
