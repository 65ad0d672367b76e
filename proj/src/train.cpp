#include "bft/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "bft/parallel.hpp"

namespace bft {

TrainConfig TrainConfig::paper() {
  TrainConfig c;
  c.epochs = 300;
  c.pairs_per_epoch = 60000;
  c.batch = 128;
  return c;
}

int TrainConfig::decay_epoch() const { return static_cast<int>(std::floor(decay_at * epochs)); }

void TrainConfig::validate() const {
  if (epochs < 1 || pairs_per_epoch < 1 || batch < 1) {
    throw std::invalid_argument("train: epochs, pairs_per_epoch and batch must be positive");
  }
  if (lr < 0 || lr_backbone < 0 || lr_backbone > lr) {
    throw std::invalid_argument("train: need 0 <= lr_backbone <= lr");
  }
  if (!(decay_factor > 0 && decay_factor < 1)) throw std::invalid_argument("train: decay_factor must lie in (0,1)");
  if (decay_at < 0 || decay_at > 1) throw std::invalid_argument("train: decay_at must lie in [0,1]");
  if (weight_decay < 0 || clip < 0) throw std::invalid_argument("train: negative weight_decay or clip");
  if (sampling.max_gap < 0) throw std::invalid_argument("train: negative max_gap");
}

bool is_backbone_param(const std::string& name) { return name.rfind("backbone.", 0) == 0; }

AdamW::AdamW(const ParamStore<float>& params, const TrainConfig& cfg) : cfg_(cfg) {
  for (const auto& e : params) {
    m_.emplace_back(e.value.size(), 0.0f);
    v_.emplace_back(e.value.size(), 0.0f);
    backbone_.push_back(is_backbone_param(e.name));
  }
}

void AdamW::step(ParamStore<float>& params, double lr_scale) {
  if (params.size() != m_.size()) throw ContractError("adamw: parameter set changed");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& e = params[p];
    const double lr = (backbone_[p] ? cfg_.lr_backbone : cfg_.lr) * lr_scale;
    const double wd = e.kind == ParamKind::kWeight ? cfg_.weight_decay : 0.0;
    auto& m = m_[p];
    auto& v = v_[p];
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const double g = e.grad[i];
      m[i] = static_cast<float>(cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g);
      v[i] = static_cast<float>(cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g);
      const double update = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps) + wd * e.value[i];
      e.value[i] = static_cast<float>(e.value[i] - lr * update);
    }
  }
}

double clip_grad_norm(ParamStore<float>& params, double max_norm) {
  double sq = 0;
  for (const auto& e : params)
    for (float g : e.grad.data()) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const float s = static_cast<float>(max_norm / norm);
    for (auto& e : params)
      for (float& g : e.grad.data()) g *= s;
  }
  return norm;
}

namespace {

std::uint64_t sample_seed(std::uint64_t seed, long index) {
  std::uint64_t z = seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(index) + 1;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct SampleResult {
  std::vector<Tensor<float>> grads;
  double loss = 0, focal = 0, l1 = 0, giou = 0;
  std::string error;
};

}  // namespace

std::vector<LossRecord> train(const ModelLayout& model, ParamStore<float>& params,
                              const std::vector<LoadedSequence>& data, const TrainConfig& cfg,
                              const std::function<void(const LossRecord&)>& on_iter) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  const CropGeometry geo{model.cfg.backbone.template_size, model.cfg.backbone.search_size,
                         model.cfg.stride()};
  const int workers = cfg.threads > 0 ? cfg.threads : worker_count();
  const long iters_per_epoch = (cfg.pairs_per_epoch + cfg.batch - 1) / cfg.batch;
  AdamW opt(params, cfg);
  std::vector<LossRecord> log;
  long iter = 0;
  long sample = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr_scale = epoch >= cfg.decay_epoch() ? cfg.decay_factor : 1.0;
    for (long it = 0; it < iters_per_epoch; ++it, ++iter) {
      const int batch =
          static_cast<int>(std::min<long>(cfg.batch, cfg.pairs_per_epoch - it * cfg.batch));
      std::vector<SampleResult> results(batch);
      const long first = sample;
      sample += batch;
      parallel_for(batch, workers, [&](int k) {
        SampleResult& r = results[k];
        Rng rng(sample_seed(cfg.seed, first + k));
        TrainingPair pair = make_training_pair(data, rng, geo, cfg.sampling);
        try {
          Graph<float> g(&params);
          ModelOutput<float> out = forward(g, model, g.constant(std::move(pair.template_image)),
                                           g.constant(std::move(pair.search_image)));
          LossTerms<float> l = total_loss(g, out.pred, pair.target, model.cfg.loss);
          r.loss = l.total.value()[0];
          r.focal = l.focal.value()[0];
          r.l1 = l.l1.value()[0];
          r.giou = l.giou.value()[0];
          g.backward(l.total);
          r.grads.reserve(params.size());
          for (const auto& e : params) r.grads.emplace_back(e.value.shape());
          g.accumulate_param_grads(r.grads);
        } catch (const NumericError& e) {
          r.error = e.what();
        }
      });

      LossRecord rec;
      rec.iter = iter;
      params.zero_grad();
      std::string error;
      for (auto& r : results) {
        if (!r.error.empty()) {
          error = r.error;
          break;
        }
        rec.loss += r.loss / batch;
        rec.focal += r.focal / batch;
        rec.l1 += r.l1 / batch;
        rec.giou += r.giou / batch;
        for (std::size_t p = 0; p < params.size(); ++p) {
          auto& dst = params[p].grad;
          const auto& src = r.grads[p];
          for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i] / batch;
        }
      }
      if (error.empty() && !std::isfinite(rec.loss)) error = "non-finite loss";
      const double norm = error.empty() ? clip_grad_norm(params, cfg.clip) : 0.0;
      if (error.empty() && !std::isfinite(norm)) error = "non-finite gradient";
      if (!error.empty()) {
        ParamStore<float> last_good;
        for (const auto& e : params) last_good.add(e.name, e.value, e.kind);
        throw TrainingAborted(iter, std::move(last_good),
                              "training diverged at iteration " + std::to_string(iter) + ": " + error);
      }
      opt.step(params, lr_scale);
      log.push_back(rec);
      if (on_iter) on_iter(rec);
    }
  }
  return log;
}

void write_loss_log(const std::filesystem::path& path, const std::vector<LossRecord>& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "iter,loss,l_focal,l_l1,l_giou\n";
  char buf[160];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof buf, "%ld,%.9g,%.9g,%.9g,%.9g\n", r.iter, r.loss, r.focal, r.l1, r.giou);
    out << buf;
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace bft
