#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridmp/acopf.hpp"
#include "gridmp/checkpoint.hpp"
#include "gridmp/hetero_graph.hpp"
#include "gridmp/model.hpp"
#include "gridmp/resistance.hpp"
#include "gridmp/sample.hpp"

namespace gridmp {

struct TrainConfig {
  double learning_rate = 1e-5;
  double weight_decay = 5e-8;
  int epochs = 100;
  int batch_size = 32;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  /// Throws ValidationError.
  void validate() const;
};

nlohmann::json train_config_to_json(const TrainConfig& cfg);

/// Samples of one base grid.
struct GridData {
  const PowerGrid* grid = nullptr;
  std::vector<Sample> samples;
};

/// A sample turned into network inputs and loss targets.
struct PreparedSample {
  std::size_t id = 0;  // position in the source sample list
  PowerGrid grid;      // outage applied, loads substituted
  HeteroGraph graph;
  OperatingPoint label;
  nn::LossTargets targets;
  double label_cost = 0.0;
};

/// Throws whatever apply_outage throws for inadmissible outages.
PreparedSample prepare_sample(const PowerGrid& base, const Sample& sample, std::size_t id, PeCache& cache);
std::vector<PreparedSample> prepare_samples(const GridData& data, PeCache& cache);

/// Adam with decoupled weight decay: p -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * p).
class Adam {
 public:
  Adam(const TrainConfig& cfg, const nn::ModelState& state);
  Adam(const TrainConfig& cfg, OptimizerState state);

  void step(nn::ModelState& model, const std::vector<Matrix>& grads);
  const OptimizerState& state() const { return state_; }

 private:
  TrainConfig cfg_;
  OptimizerState state_;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double wall_seconds = 0.0;
};

struct TrainResult {
  nn::ModelState best;
  nn::ModelState last;
  OptimizerState optimizer;
  std::vector<EpochRecord> history;
  double best_val_loss = 0.0;
  int epochs_completed = 0;
};

struct TrainOptions {
  std::optional<OptimizerState> resume;  // continue from a saved optimizer
  int start_epoch = 0;                   // epochs already completed (shuffle seeds continue)
  std::optional<double> best_val_loss;   // carried over on resume
  std::optional<nn::ModelState> best;    // state that achieved best_val_loss
  std::function<void(const EpochRecord&)> on_epoch;
  /// Called after each epoch with the run so far (optimizer and epochs_completed current).
  std::function<void(const TrainResult&)> on_progress;
};

/// Mini-batch training. Each grid's samples are shuffled per epoch
/// (seed + epoch) and cut into homogeneous batches; batches of different grids
/// are interleaved round-robin. Batch loss is the mean of per-sample loss_mse.
/// Throws EmptyInputError or NonFiniteLossError (with sample ids and the parameter norm).
TrainResult train(const nn::ModelState& init, const std::vector<GridData>& train_sets,
                  const std::vector<GridData>& val_sets, const TrainConfig& cfg, PeCache& cache,
                  const TrainOptions& options = {});

/// train() starting from `pretrained`. Throws ConfigMismatchError when the
/// hidden width, depth, head count, or mode differ from `expected`.
TrainResult fine_tune(const nn::ModelState& pretrained, const nn::ModelConfig& expected,
                      const std::vector<GridData>& train_sets, const std::vector<GridData>& val_sets,
                      const TrainConfig& cfg, PeCache& cache, const TrainOptions& options = {});

/// Mean loss_mse over prepared samples (batched, no gradients).
double mean_loss(const nn::ModelState& state, const std::vector<PreparedSample>& data, int batch_size);

struct EvalSummary {
  nn::GroupMse mse;
  double gap_percent = 0.0;
  ViolationReport violations;
  std::size_t count = 0;
  std::size_t skipped = 0;
  std::size_t below_label_cost = 0;   // predictions cheaper than their label
  std::size_t pf_not_converged = 0;   // only for power-flow corrected summaries
  std::optional<double> inference_seconds;
};

using Predictor = std::function<OperatingPoint(const PreparedSample&)>;

struct EvalOptions {
  bool skip_inadmissible = false;  // skip + count outages that cannot be applied
  bool pf_correct = false;
  int threads = 1;
};

struct EvalReport {
  EvalSummary before;
  std::optional<EvalSummary> after;  // power-flow corrected
};

/// Per-sample metrics aggregated with sorted summation (order-invariant).
EvalReport evaluate_with(const Predictor& predictor, const PowerGrid& base, const std::vector<Sample>& samples,
                         PeCache& cache, const EvalOptions& options = {});
EvalReport evaluate(const nn::ModelState& state, const PowerGrid& base, const std::vector<Sample>& samples,
                    PeCache& cache, const EvalOptions& options = {});

/// evaluate() with topology-specific encodings; inadmissible outages are skipped and counted.
EvalReport evaluate_zero_shot(const nn::ModelState& state, const PowerGrid& base, const std::vector<Sample>& samples,
                              PeCache& cache, EvalOptions options = {});

/// Naive baseline: the model sees the outage-free topology (loads substituted),
/// metrics are taken on the true outage grid. Outaged generators are dropped
/// from the prediction.
EvalReport evaluate_naive(const nn::ModelState& state, const PowerGrid& base, const std::vector<Sample>& samples,
                          PeCache& cache, EvalOptions options = {});

/// Mean wall-clock seconds of a single-sample forward after warmup calls.
double time_inference(const nn::ModelState& state, const HeteroGraph& graph, int warmup = 10, int reps = 100);

/// The k costliest samples, descending; ties keep index order. Throws KTooLargeError.
std::vector<Sample> select_high_impact(const std::vector<Sample>& data, std::size_t k);

/// 100 * (mean subset cost - mean train cost) / mean train cost. Throws EmptyInputError.
double mean_cost_increase(const std::vector<Sample>& train, const std::vector<Sample>& subset);

nlohmann::json summary_to_json(const EvalSummary& s);

}  // namespace gridmp
