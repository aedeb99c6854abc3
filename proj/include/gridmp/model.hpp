#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "gridmp/acopf.hpp"
#include "gridmp/autodiff.hpp"
#include "gridmp/hetero_graph.hpp"

namespace gridmp::nn {

enum class ModelMode { Hybrid, MpnnOnly, ExactAttention };

std::string to_string(ModelMode mode);
/// Accepts "hybrid", "mpnn_only", "exact_attention". Throws ValidationError.
ModelMode mode_from_string(const std::string& name);

struct ModelConfig {
  int hidden_dim = 256;
  int layers = 5;
  int heads = 4;
  int random_features = 64;
  ModelMode mode = ModelMode::Hybrid;
  std::uint64_t seed = 0;

  /// Throws ValidationError.
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

nlohmann::json config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const nlohmann::json& doc);

/// Named parameters in a fixed order plus non-trainable buffers (random features).
class ModelState {
 public:
  ModelConfig config;

  void add_param(std::string name, Matrix value);
  void add_buffer(std::string name, Matrix value);

  std::size_t size() const { return params_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const Matrix& param(std::size_t i) const { return params_[i]; }
  Matrix& param(std::size_t i) { return params_[i]; }
  /// Throws ShapeError on unknown names.
  std::size_t index(const std::string& name) const;
  const Matrix& param(const std::string& name) const { return params_[index(name)]; }
  Matrix& param(const std::string& name) { return params_[index(name)]; }
  bool contains(const std::string& name) const { return lookup_.count(name) > 0; }

  std::size_t buffer_count() const { return buffers_.size(); }
  const std::string& buffer_name(std::size_t i) const { return buffer_names_[i]; }
  const Matrix& buffer(std::size_t i) const { return buffers_[i]; }
  Matrix& buffer(std::size_t i) { return buffers_[i]; }
  const Matrix& buffer(const std::string& name) const;

  /// Total scalar parameters (buffers excluded).
  std::size_t parameter_count() const;
  bool all_finite() const;

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> params_;
  std::unordered_map<std::string, std::size_t> lookup_;
  std::vector<std::string> buffer_names_;
  std::vector<Matrix> buffers_;
};

/// Kaiming-uniform weights, zero biases, orthogonal random features; all drawn from cfg.seed.
ModelState init_model(const ModelConfig& cfg);

enum class Activation { Relu, Identity };

/// Binds ModelState parameters to tape leaves on first use.
class ParamBinder {
 public:
  ParamBinder(Tape& tape, const ModelState& state, bool requires_grad = true);

  Var operator()(const std::string& name);
  /// Tape node of parameter i, or -1 if never bound.
  int node_of(std::size_t i) const { return ids_[i]; }
  Tape& tape() { return tape_; }
  const ModelState& state() const { return state_; }

 private:
  Tape& tape_;
  const ModelState& state_;
  bool requires_grad_;
  std::vector<int> ids_;
};

/// Two-layer MLP `prefix` (w1, b1, w2, b2) with the hidden activation `act`.
Var mlp(ParamBinder& p, const std::string& prefix, Var x, Activation act = Activation::Relu);
/// x w + b for `prefix` (w, b).
Var linear(ParamBinder& p, const std::string& prefix, Var x);

struct Embeddings {
  std::array<Var, kNodeTypes> nodes;
  std::array<Var, kEdgeTypes> edges;  // invalid for connector types until the first layer
};

Embeddings encode(ParamBinder& p, const HeteroGraph& g);
Embeddings mpnn_layer(ParamBinder& p, const Embeddings& emb, const HeteroGraph& g, int k);

/// Node rows of all types in graph-major order (per graph: bus, gen, load, shunt).
struct NodeLayout {
  std::vector<int> gather;   // graph-major row -> type-major row
  std::vector<int> scatter;  // type-major row -> graph-major row
  std::vector<int> segments; // graph boundaries in graph-major order
  std::array<int, kNodeTypes + 1> type_start{};
  bool identity = true;
};
NodeLayout node_layout(const HeteroGraph& g);
Var aggregate_nodes(const Embeddings& emb, const NodeLayout& layout);
std::array<Var, kNodeTypes> disaggregate_nodes(Var x, const NodeLayout& layout);

/// Projected multi-head attention over each graph's nodes (output projection included).
Var attention_mixer(ParamBinder& p, Var x, const NodeLayout& layout, int k, ModelMode mode);
/// T(x_t + x_m); with x_t invalid, T(x_m).
Var hybrid_combine(ParamBinder& p, Var x_t, Var x_m, int k, Activation act = Activation::Relu);

struct Decoded {
  Var theta;  // bus rows x 1, reference bus pinned to 0
  Var vm;     // bus rows x 1
  Var pg;     // generator rows x 1
  Var qg;     // generator rows x 1
};

/// Bounds are read from node features (bus v_min/v_max, generator pg/qg limits).
Decoded decode(ParamBinder& p, const Embeddings& emb, const HeteroGraph& g);

Decoded forward(ParamBinder& p, const HeteroGraph& g);

/// Inference on a single graph.
OperatingPoint predict(const ModelState& state, const HeteroGraph& g);

/// Per-group mean squared errors (theta, vm, pg, qg) summed. Throws DimensionError.
double loss_mse(const OperatingPoint& pred, const OperatingPoint& label);

struct GroupMse {
  double theta = 0.0, vm = 0.0, pg = 0.0, qg = 0.0;
};
GroupMse group_mse(const OperatingPoint& pred, const OperatingPoint& label);

/// Column targets aligned with graph rows and per-row loss weights.
struct LossTargets {
  Matrix theta, vm, pg, qg;
  Matrix bus_weight, gen_weight;
};

/// Targets for a single graph; weights 1/n per group so the weighted SSE equals loss_mse.
LossTargets targets_for(const HeteroGraph& g, const OperatingPoint& label);
/// Row-concatenation with weights divided by the batch size.
LossTargets batch_targets(std::span<const LossTargets> parts);

Var loss_node(const Decoded& d, const LossTargets& t);

struct LossAndGrads {
  double loss = 0.0;
  std::vector<Matrix> grads;  // aligned with ModelState parameter order
};

/// Reverse-mode gradients of the weighted loss. Throws NonFiniteLossError.
LossAndGrads gradients(const ModelState& state, const HeteroGraph& g, const LossTargets& targets);

}  // namespace gridmp::nn
