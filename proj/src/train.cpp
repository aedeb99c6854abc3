#include "gridmp/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "gridmp/errors.hpp"
#include "gridmp/power_flow.hpp"

namespace gridmp {


namespace {

double sorted_sum(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

double sorted_mean(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const double n = static_cast<double>(v.size());
  return sorted_sum(std::move(v)) / n;
}

double parameter_norm(const nn::ModelState& s) {
  double sq = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) sq += s.param(i).squaredNorm();
  return std::sqrt(sq);
}

HeteroGraph batch_of(const std::vector<PreparedSample>& data, std::span<const std::size_t> members,
                     nn::LossTargets& targets) {
  std::vector<const HeteroGraph*> graphs;
  std::vector<nn::LossTargets> parts;
  for (std::size_t i : members) {
    graphs.push_back(&data[i].graph);
    parts.push_back(data[i].targets);
  }
  targets = nn::batch_targets(parts);
  if (graphs.size() == 1) return *graphs[0];
  return batch_graphs(graphs);
}

struct Batch {
  std::size_t set = 0;
  std::vector<std::size_t> members;
};

std::vector<Batch> epoch_batches(const std::vector<std::vector<PreparedSample>>& sets, int batch_size,
                                 std::uint64_t seed, int epoch) {
  std::vector<std::vector<Batch>> per_set(sets.size());
  for (std::size_t s = 0; s < sets.size(); ++s) {
    std::vector<std::size_t> order(sets[s].size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed + static_cast<std::uint64_t>(epoch) + 0x100000000ULL * s);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch_size)) {
      Batch b;
      b.set = s;
      b.members.assign(order.begin() + static_cast<std::ptrdiff_t>(i),
                       order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch_size)));
      per_set[s].push_back(std::move(b));
    }
  }
  std::vector<Batch> out;
  for (std::size_t round = 0;; ++round) {
    bool any = false;
    for (auto& list : per_set)
      if (round < list.size()) {
        out.push_back(std::move(list[round]));
        any = true;
      }
    if (!any) break;
  }
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw ValidationError("learning_rate: must be non-negative");
  if (!(weight_decay >= 0.0)) throw ValidationError("weight_decay: must be non-negative");
  if (epochs < 0) throw ValidationError("epochs: must be non-negative");
  if (batch_size < 1) throw ValidationError("batch_size: must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ValidationError("adam_beta1: must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ValidationError("adam_beta2: must be in [0, 1)");
  if (!(eps > 0.0)) throw ValidationError("adam_eps: must be positive");
}

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
  return {{"learning_rate", cfg.learning_rate}, {"weight_decay", cfg.weight_decay}, {"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},       {"seed", cfg.seed},                 {"adam_beta1", cfg.beta1},
          {"adam_beta2", cfg.beta2},            {"adam_eps", cfg.eps}};
}

PreparedSample prepare_sample(const PowerGrid& base, const Sample& sample, std::size_t id, PeCache& cache) {
  PreparedSample p;
  p.id = id;
  p.grid = grid_for_sample(base, sample);
  p.graph = to_hetero_graph(base, sample, *cache.get(p.grid));
  p.label = label_point(p.grid, sample);
  p.targets = nn::targets_for(p.graph, p.label);
  p.label_cost = sample.label_cost;
  return p;
}

std::vector<PreparedSample> prepare_samples(const GridData& data, PeCache& cache) {
  if (!data.grid) throw EmptyInputError("prepare_samples: no grid");
  std::vector<PreparedSample> out;
  out.reserve(data.samples.size());
  for (std::size_t i = 0; i < data.samples.size(); ++i)
    out.push_back(prepare_sample(*data.grid, data.samples[i], i, cache));
  return out;
}

Adam::Adam(const TrainConfig& cfg, const nn::ModelState& state) : cfg_(cfg) {
  for (std::size_t i = 0; i < state.size(); ++i) {
    state_.m.push_back(Matrix::Zero(state.param(i).rows(), state.param(i).cols()));
    state_.v.push_back(Matrix::Zero(state.param(i).rows(), state.param(i).cols()));
  }
}

Adam::Adam(const TrainConfig& cfg, OptimizerState state) : cfg_(cfg), state_(std::move(state)) {}

void Adam::step(nn::ModelState& model, const std::vector<Matrix>& grads) {
  if (grads.size() != model.size() || state_.m.size() != model.size())
    throw ShapeError("Adam: gradient count does not match the parameters");
  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const double c1 = 1.0 - std::pow(cfg_.beta1, t);
  const double c2 = 1.0 - std::pow(cfg_.beta2, t);
  for (std::size_t i = 0; i < model.size(); ++i) {
    Matrix& p = model.param(i);
    Matrix& m = state_.m[i];
    Matrix& v = state_.v[i];
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * grads[i];
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * grads[i].cwiseAbs2();
    const auto update = (m.array() / c1) / ((v.array() / c2).sqrt() + cfg_.eps) + cfg_.weight_decay * p.array();
    p.array() -= cfg_.learning_rate * update;
  }
}

double mean_loss(const nn::ModelState& state, const std::vector<PreparedSample>& data, int batch_size) {
  if (data.empty()) return 0.0;
  double total = 0.0;
  std::vector<std::size_t> members;
  for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(batch_size)) {
    members.clear();
    for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) members.push_back(i);
    nn::LossTargets t;
    const HeteroGraph g = batch_of(data, members, t);
    nn::Tape tape(false);
    nn::ParamBinder p(tape, state, false);
    total += nn::loss_node(nn::forward(p, g), t).value()(0, 0) * static_cast<double>(members.size());
  }
  return total / static_cast<double>(data.size());
}

TrainResult train(const nn::ModelState& init, const std::vector<GridData>& train_sets,
                  const std::vector<GridData>& val_sets, const TrainConfig& cfg, PeCache& cache,
                  const TrainOptions& options) {
  cfg.validate();
  std::vector<std::vector<PreparedSample>> train_data, val_data;
  std::size_t n_train = 0;
  for (const GridData& d : train_sets) {
    train_data.push_back(prepare_samples(d, cache));
    n_train += d.samples.size();
  }
  if (n_train == 0) throw EmptyInputError("train: empty training set");
  for (const GridData& d : val_sets) val_data.push_back(prepare_samples(d, cache));

  auto validation_loss = [&](const nn::ModelState& s) {
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& set : val_data) {
      total += mean_loss(s, set, cfg.batch_size) * static_cast<double>(set.size());
      n += set.size();
    }
    return n ? total / static_cast<double>(n) : 0.0;
  };
  const bool has_val = std::any_of(val_data.begin(), val_data.end(), [](const auto& v) { return !v.empty(); });

  TrainResult result;
  result.last = init;
  result.best = options.best ? *options.best : init;
  Adam adam = options.resume ? Adam(cfg, *options.resume) : Adam(cfg, init);
  result.best_val_loss = options.best_val_loss ? *options.best_val_loss
                                               : (has_val ? validation_loss(init) : std::numeric_limits<double>::infinity());

  for (int e = 0; e < cfg.epochs; ++e) {
    const int epoch = options.start_epoch + e;
    const auto t0 = std::chrono::steady_clock::now();
    double loss_sum = 0.0;
    for (const Batch& b : epoch_batches(train_data, cfg.batch_size, cfg.seed, epoch)) {
      const auto& data = train_data[b.set];
      nn::LossTargets t;
      const HeteroGraph g = batch_of(data, b.members, t);
      nn::LossAndGrads lg;
      bool finite = true;
      try {
        lg = nn::gradients(result.last, g, t);
        for (const Matrix& m : lg.grads) finite = finite && m.allFinite();
      } catch (const NonFiniteLossError&) {
        finite = false;
      }
      if (!finite) {
        std::ostringstream msg;
        msg << "train: non-finite loss at epoch " << epoch + 1 << "; samples";
        for (std::size_t i : b.members) {
          const double l = nn::loss_mse(nn::predict(result.last, data[i].graph), data[i].label);
          if (!std::isfinite(l)) msg << ' ' << data[i].id;
        }
        msg << " (grid " << b.set << "); parameter norm " << parameter_norm(result.last);
        throw NonFiniteLossError(msg.str());
      }
      loss_sum += lg.loss * static_cast<double>(b.members.size());
      adam.step(result.last, lg.grads);
    }
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.train_loss = loss_sum / static_cast<double>(n_train);
    rec.val_loss = has_val ? validation_loss(result.last) : rec.train_loss;
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!has_val || rec.val_loss < result.best_val_loss) {
      result.best_val_loss = rec.val_loss;
      result.best = result.last;
    }
    result.history.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);
    if (options.on_progress) {
      result.optimizer = adam.state();
      result.epochs_completed = epoch + 1;
      options.on_progress(result);
    }
  }
  result.optimizer = adam.state();
  result.epochs_completed = options.start_epoch + cfg.epochs;
  return result;
}

TrainResult fine_tune(const nn::ModelState& pretrained, const nn::ModelConfig& expected,
                      const std::vector<GridData>& train_sets, const std::vector<GridData>& val_sets,
                      const TrainConfig& cfg, PeCache& cache, const TrainOptions& options) {
  const nn::ModelConfig& have = pretrained.config;
  if (have.hidden_dim != expected.hidden_dim || have.layers != expected.layers || have.heads != expected.heads ||
      have.mode != expected.mode || have.random_features != expected.random_features)
    throw ConfigMismatchError("fine_tune: checkpoint has hidden_dim " + std::to_string(have.hidden_dim) + ", layers " +
                              std::to_string(have.layers) + ", mode " + nn::to_string(have.mode) +
                              "; configuration asks for hidden_dim " + std::to_string(expected.hidden_dim) +
                              ", layers " + std::to_string(expected.layers) + ", mode " +
                              nn::to_string(expected.mode));
  return train(pretrained, train_sets, val_sets, cfg, cache, options);
}

namespace {

struct SampleMetrics {
  bool skipped = false;
  nn::GroupMse mse;
  double gap = 0.0;
  bool below = false;
  ViolationReport viol;
  bool pf_converged = true;
};

SampleMetrics point_metrics(const PreparedSample& p, const OperatingPoint& pred) {
  SampleMetrics m;
  m.mse = nn::group_mse(pred, p.label);
  const double cost = objective_cost(p.grid, pred.pg);
  m.gap = optimality_gap(cost, p.label_cost);
  m.below = cost < p.label_cost;
  m.viol = violation_report(p.grid, pred);
  return m;
}

EvalSummary aggregate(const std::vector<SampleMetrics>& items) {
  EvalSummary s;
  std::vector<double> f[13];
  for (const SampleMetrics& m : items) {
    if (m.skipped) {
      ++s.skipped;
      continue;
    }
    ++s.count;
    if (m.below) ++s.below_label_cost;
    if (!m.pf_converged) ++s.pf_not_converged;
    const double vals[13] = {m.mse.theta,      m.mse.vm,          m.mse.pg,       m.mse.qg,
                             m.gap,            m.viol.angle_diff, m.viol.flow_fwd, m.viol.flow_rev,
                             m.viol.p_balance, m.viol.q_balance,  m.viol.pg_bound, m.viol.qg_bound,
                             m.viol.v_bound};
    for (int k = 0; k < 13; ++k) f[k].push_back(vals[k]);
  }
  s.mse = {sorted_mean(f[0]), sorted_mean(f[1]), sorted_mean(f[2]), sorted_mean(f[3])};
  s.gap_percent = sorted_mean(f[4]);
  s.violations = {sorted_mean(f[5]), sorted_mean(f[6]),  sorted_mean(f[7]),  sorted_mean(f[8]),
                  sorted_mean(f[9]), sorted_mean(f[10]), sorted_mean(f[11]), sorted_mean(f[12])};
  return s;
}

bool inadmissible(const Error& e) {
  switch (e.code()) {
    case ErrorCode::Disconnected:
    case ErrorCode::AlreadyDisabled:
    case ErrorCode::LastGenerator:
    case ErrorCode::Validation: return true;
    default: return false;
  }
}

}  // namespace

EvalReport evaluate_with(const Predictor& predictor, const PowerGrid& base, const std::vector<Sample>& samples,
                         PeCache& cache, const EvalOptions& options) {
  if (samples.empty()) throw EmptyInputError("evaluate: no samples");
  const std::size_t n = samples.size();
  std::vector<SampleMetrics> before(n), after(n);
  std::vector<std::exception_ptr> errors(n);

  auto work = [&](std::size_t i) {
    try {
      PreparedSample p;
      try {
        p = prepare_sample(base, samples[i], i, cache);
      } catch (const Error& e) {
        if (!options.skip_inadmissible || !inadmissible(e)) throw;
        before[i].skipped = after[i].skipped = true;
        return;
      }
      const OperatingPoint pred = predictor(p);
      before[i] = point_metrics(p, pred);
      if (options.pf_correct) {
        const auto [pf, report] = pf_postprocess(p.grid, pred);
        after[i] = point_metrics(p, pf.point);
        after[i].viol = report;
        after[i].pf_converged = pf.converged;
      }
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };

  const int threads = std::max(1, std::min<int>(options.threads, static_cast<int>(n)));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) work(i);
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t i = static_cast<std::size_t>(t); i < n; i += static_cast<std::size_t>(threads)) work(i);
      });
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  EvalReport report;
  report.before = aggregate(before);
  if (options.pf_correct) report.after = aggregate(after);
  return report;
}

EvalReport evaluate(const nn::ModelState& state, const PowerGrid& base, const std::vector<Sample>& samples,
                    PeCache& cache, const EvalOptions& options) {
  return evaluate_with([&](const PreparedSample& p) { return nn::predict(state, p.graph); }, base, samples, cache,
                       options);
}

EvalReport evaluate_zero_shot(const nn::ModelState& state, const PowerGrid& base, const std::vector<Sample>& samples,
                              PeCache& cache, EvalOptions options) {
  options.skip_inadmissible = true;
  return evaluate(state, base, samples, cache, options);
}

EvalReport evaluate_naive(const nn::ModelState& state, const PowerGrid& base, const std::vector<Sample>& samples,
                          PeCache& cache, EvalOptions options) {
  options.skip_inadmissible = true;
  const std::vector<int> base_gens = base.enabled_generators();
  auto predictor = [&](const PreparedSample& p) {
    Sample intact = samples[p.id];
    intact.outage = Outage::none();
    const PowerGrid grid = grid_for_sample(base, intact);
    const OperatingPoint full = nn::predict(state, to_hetero_graph(base, intact, *cache.get(grid)));
    const std::vector<int> kept = p.grid.enabled_generators();
    OperatingPoint out{full.theta, full.vm, {}, {}};
    for (std::size_t j = 0; j < base_gens.size(); ++j)
      if (std::find(kept.begin(), kept.end(), base_gens[j]) != kept.end()) {
        out.pg.push_back(full.pg[j]);
        out.qg.push_back(full.qg[j]);
      }
    return out;
  };
  return evaluate_with(predictor, base, samples, cache, options);
}

double time_inference(const nn::ModelState& state, const HeteroGraph& graph, int warmup, int reps) {
  double sink = 0.0;
  for (int i = 0; i < warmup; ++i) sink += nn::predict(state, graph).vm[0];
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) sink += nn::predict(state, graph).vm[0];
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!std::isfinite(sink)) throw NonFiniteLossError("time_inference: non-finite prediction");
  return secs / std::max(1, reps);
}

std::vector<Sample> select_high_impact(const std::vector<Sample>& data, std::size_t k) {
  if (k > data.size())
    throw KTooLargeError("select_high_impact: k = " + std::to_string(k) + " exceeds " + std::to_string(data.size()) +
                         " samples");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return data[a].label_cost > data[b].label_cost; });
  std::vector<Sample> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(data[order[i]]);
  return out;
}

double mean_cost_increase(const std::vector<Sample>& train, const std::vector<Sample>& subset) {
  if (train.empty() || subset.empty()) throw EmptyInputError("mean_cost_increase: empty input");
  auto mean = [](const std::vector<Sample>& v) {
    std::vector<double> c;
    for (const Sample& s : v) c.push_back(s.label_cost);
    return sorted_mean(c);
  };
  const double base = mean(train);
  if (!(base > 0.0)) throw ZeroLabelCostError("mean_cost_increase: training mean cost must be positive");
  return 100.0 * (mean(subset) - base) / base;
}

nlohmann::json summary_to_json(const EvalSummary& s) {
  nlohmann::json j;
  j["count"] = s.count;
  j["skipped"] = s.skipped;
  j["mse"] = {{"theta", s.mse.theta}, {"vm", s.mse.vm}, {"pg", s.mse.pg}, {"qg", s.mse.qg}};
  j["optimality_gap_percent"] = s.gap_percent;
  j["below_label_cost"] = s.below_label_cost;
  j["violations"] = {{"angle_diff", s.violations.angle_diff}, {"flow_fwd", s.violations.flow_fwd},
                     {"flow_rev", s.violations.flow_rev},     {"p_balance", s.violations.p_balance},
                     {"q_balance", s.violations.q_balance},   {"pg_bound", s.violations.pg_bound},
                     {"qg_bound", s.violations.qg_bound},     {"v_bound", s.violations.v_bound}};
  if (s.pf_not_converged) j["pf_not_converged"] = s.pf_not_converged;
  if (s.inference_seconds) j["inference_seconds"] = *s.inference_seconds;
  return j;
}

}  // namespace gridmp
