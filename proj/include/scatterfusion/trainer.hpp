#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scatterfusion/checkpoint.hpp"
#include "scatterfusion/dataio.hpp"
#include "scatterfusion/model.hpp"
#include "scatterfusion/tsr.hpp"

namespace scatterfusion {

struct TrainConfig {
  double lr_max = 1e-3;
  double lr_min = 1e-5;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long epochs = 10;
  long batch_size = 32;
  long patience = 5;
  double clip_norm = 5.0;
  LossWeights loss;
  std::uint64_t seed = 1;
  long threads = 1;
};

// lr_max = 0 (with lr_min = 0) is the explicit dry-run schedule; otherwise
// 0 < lr_min <= lr_max.
void validate_train_config(const TrainConfig& cfg);

double cosine_lr(long step, long total_steps, double lr_max, double lr_min);

struct AdamState {
  long step = 0;
  std::vector<Tensor> m;  // first moments, registry order
  std::vector<Tensor> v;  // second moments
};

AdamState make_adam_state(const std::vector<NamedParam>& params);

struct StepOutcome {
  bool applied = true;     // false when a non-finite gradient rejected the step
  double grad_norm = 0.0;  // global norm of the gradients as received
};

// Scales grads in place to the max norm when exceeded; returns the pre-clip
// global norm.
double clip_gradients(std::vector<Tensor>& grads, double max_norm);

StepOutcome adamw_step(const std::vector<NamedParam>& params,
                       const std::vector<Tensor>& grads, AdamState& state, double lr,
                       const TrainConfig& cfg);

void save_optimizer_state(const AdamState& state, const std::string& path);
AdamState load_optimizer_state(const std::string& path);

struct StepRecord {
  long step = 0;
  double lr = 0.0;
  double loss_final = 0.0;  // batch mean of the trained loss
  double loss_mse = 0.0;    // batch mean of its squared-error term
  double grad_norm = 0.0;
  bool clipped = false;
  bool applied = true;
};

struct HorizonMetrics {
  long horizon = 0;
  double mse = 0.0;
  double mae = 0.0;
};

struct MetricsReport {
  std::vector<HorizonMetrics> metrics;   // per requested horizon
  std::vector<double> alpha;             // mean learned scale weights
  std::vector<double> epoch_train_loss;  // filled by train()
  std::vector<double> epoch_val_mse;
  std::vector<StepRecord> steps;
  long best_epoch = -1;
  long rejected_steps = 0;
  long clip_events = 0;
};

// MSE/MAE on de-normalized values over all windows and channels; horizon h
// scores the first h forecast steps. Empty horizons means the full T_p.
MetricsReport evaluate(const Forecaster& m, const WindowSet& split,
                       const std::vector<long>& horizons = {}, long threads = 1,
                       std::vector<Tensor>* predictions = nullptr);

MetricsReport metrics_for(const std::vector<Tensor>& predictions,
                          const WindowSet& split, const std::vector<long>& horizons);

// Reference forecasts computed directly from the input window.
Tensor persistence_forecast(const Tensor& x, long t_p);
Tensor ols_forecast(const Tensor& x, long t_p);
MetricsReport evaluate_baseline(const std::string& kind, const WindowSet& split,
                                const std::vector<long>& horizons = {});

struct TrainResult {
  Checkpoint best;       // lowest-validation-MSE parameters
  MetricsReport report;  // curves plus validation metrics at the best epoch
  long loss_period = 0;  // seasonal period the loss decomposed at
};

// Splits the series chronologically, trains on stride-1 windows with the
// model's loss on the normalized scale, and leaves the best parameters in
// the model.
TrainResult train(Forecaster& model, const Dataset& data, const TrainConfig& cfg);

}  // namespace scatterfusion
