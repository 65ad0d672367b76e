#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "bft/dataset.hpp"
#include "bft/model.hpp"

namespace bft {

struct TrainConfig {
  int epochs = 30;
  int pairs_per_epoch = 500;
  int batch = 8;
  double lr = 4e-4;           // non-backbone parameters
  double lr_backbone = 4e-5;  // parameters named "backbone.*"
  double weight_decay = 1e-4;
  double decay_at = 0.8;      // fraction of epochs after which lr is multiplied by decay_factor
  double decay_factor = 0.1;
  double clip = 10.0;         // global gradient-norm cap; 0 disables
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  PairSampling sampling;
  std::uint64_t seed = 1;
  int threads = 0;            // 0: worker_count()

  static TrainConfig desk() { return {}; }
  /// 300 epochs x 60000 pairs, batch 128.
  static TrainConfig paper();
  int decay_epoch() const;
  void validate() const;
};

struct LossRecord {
  long iter = 0;
  double loss = 0, focal = 0, l1 = 0, giou = 0;
};

/// Decoupled weight decay Adam over two learning-rate groups.
class AdamW {
 public:
  AdamW(const ParamStore<float>& params, const TrainConfig& cfg);
  /// Applies one step using the gradients stored in `params`.
  void step(ParamStore<float>& params, double lr_scale);
  long steps() const { return t_; }

 private:
  TrainConfig cfg_;
  std::vector<std::vector<float>> m_, v_;
  std::vector<bool> backbone_;
  long t_ = 0;
};

bool is_backbone_param(const std::string& name);
/// Scales every gradient so the global L2 norm is at most `max_norm`; returns the norm before.
double clip_grad_norm(ParamStore<float>& params, double max_norm);

class TrainingAborted : public NumericError {
 public:
  TrainingAborted(long iter, ParamStore<float> last_good, const std::string& what)
      : NumericError(what), iter(iter), last_good(std::move(last_good)) {}
  long iter;
  ParamStore<float> last_good;
};

/// Trains `params` in place. Throws TrainingAborted on a non-finite loss or
/// gradient; `last_good` then holds the parameters before the failing step.
std::vector<LossRecord> train(const ModelLayout& model, ParamStore<float>& params,
                              const std::vector<LoadedSequence>& data, const TrainConfig& cfg,
                              const std::function<void(const LossRecord&)>& on_iter = {});

void write_loss_log(const std::filesystem::path& path, const std::vector<LossRecord>& log);

}  // namespace bft
