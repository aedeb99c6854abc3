#include "gridmp/model.hpp"

#include <cmath>
#include <random>

#include "gridmp/attention.hpp"
#include "gridmp/errors.hpp"

namespace gridmp::nn {

namespace {

std::string layer_prefix(int k) { return "layer" + std::to_string(k); }

std::string node_name(int t) { return std::string(node_type_name(static_cast<NodeType>(t))); }
std::string edge_name(int t) { return std::string(edge_type_info(static_cast<EdgeType>(t)).name); }

void add_linear(ModelState& s, std::mt19937_64& rng, const std::string& prefix, int in, int out, double gain) {
  const double bound = std::sqrt(gain / static_cast<double>(in));
  std::uniform_real_distribution<double> u(-bound, bound);
  Matrix w(in, out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
  s.add_param(prefix + ".w", std::move(w));
  s.add_param(prefix + ".b", Matrix::Zero(1, out));
}

constexpr double kResidualGain = 1.0;
constexpr double kDecoderGain = 0.03;

void add_mlp(ModelState& s, std::mt19937_64& rng, const std::string& prefix, int in, int hidden, int out,
             double out_gain = 3.0) {
  const double bound1 = std::sqrt(6.0 / static_cast<double>(in));
  const double bound2 = std::sqrt(out_gain / static_cast<double>(hidden));
  std::uniform_real_distribution<double> u1(-bound1, bound1), u2(-bound2, bound2);
  Matrix w1(in, hidden), w2(hidden, out);
  for (Eigen::Index i = 0; i < w1.size(); ++i) w1.data()[i] = u1(rng);
  for (Eigen::Index i = 0; i < w2.size(); ++i) w2.data()[i] = u2(rng);
  s.add_param(prefix + ".w1", std::move(w1));
  s.add_param(prefix + ".b1", Matrix::Zero(1, hidden));
  s.add_param(prefix + ".w2", std::move(w2));
  s.add_param(prefix + ".b2", Matrix::Zero(1, out));
}

Vector feature_col(const HeteroGraph& g, NodeType t, int c) { return g.features[idx(t)].col(c); }

}  // namespace

std::string to_string(ModelMode mode) {
  switch (mode) {
    case ModelMode::Hybrid: return "hybrid";
    case ModelMode::MpnnOnly: return "mpnn_only";
    case ModelMode::ExactAttention: return "exact_attention";
  }
  return "?";
}

ModelMode mode_from_string(const std::string& name) {
  if (name == "hybrid") return ModelMode::Hybrid;
  if (name == "mpnn_only") return ModelMode::MpnnOnly;
  if (name == "exact_attention") return ModelMode::ExactAttention;
  throw ValidationError("mode: expected hybrid, mpnn_only or exact_attention, got '" + name + "'");
}

void ModelConfig::validate() const {
  if (hidden_dim <= kPeDim) throw ValidationError("hidden_dim: must exceed the positional encoding width 5");
  if (heads < 1) throw ValidationError("attention_heads: must be >= 1");
  if (hidden_dim % heads != 0) throw ValidationError("hidden_dim: must be divisible by attention_heads");
  if (layers < 1) throw ValidationError("layers: must be >= 1");
  if (random_features < 1) throw ValidationError("random_features: must be >= 1");
}

nlohmann::json config_to_json(const ModelConfig& cfg) {
  return {{"hidden_dim", cfg.hidden_dim}, {"layers", cfg.layers},   {"attention_heads", cfg.heads},
          {"random_features", cfg.random_features}, {"mode", to_string(cfg.mode)}, {"seed", cfg.seed},
          {"pe_dim", kPeDim}};
}

ModelConfig config_from_json(const nlohmann::json& doc) {
  ModelConfig cfg;
  cfg.hidden_dim = doc.at("hidden_dim").get<int>();
  cfg.layers = doc.at("layers").get<int>();
  cfg.heads = doc.at("attention_heads").get<int>();
  cfg.random_features = doc.at("random_features").get<int>();
  cfg.mode = mode_from_string(doc.at("mode").get<std::string>());
  cfg.seed = doc.at("seed").get<std::uint64_t>();
  cfg.validate();
  return cfg;
}

void ModelState::add_param(std::string name, Matrix value) {
  if (lookup_.count(name)) throw ShapeError("duplicate parameter " + name);
  lookup_.emplace(name, params_.size());
  names_.push_back(std::move(name));
  params_.push_back(std::move(value));
}

void ModelState::add_buffer(std::string name, Matrix value) {
  buffer_names_.push_back(std::move(name));
  buffers_.push_back(std::move(value));
}

std::size_t ModelState::index(const std::string& name) const {
  auto it = lookup_.find(name);
  if (it == lookup_.end()) throw ShapeError("unknown parameter " + name);
  return it->second;
}

const Matrix& ModelState::buffer(const std::string& name) const {
  for (std::size_t i = 0; i < buffer_names_.size(); ++i)
    if (buffer_names_[i] == name) return buffers_[i];
  throw ShapeError("unknown buffer " + name);
}

std::size_t ModelState::parameter_count() const {
  std::size_t n = 0;
  for (const Matrix& m : params_) n += static_cast<std::size_t>(m.size());
  return n;
}

bool ModelState::all_finite() const {
  for (const Matrix& m : params_)
    if (!m.allFinite()) return false;
  return true;
}

ModelState init_model(const ModelConfig& cfg) {
  cfg.validate();
  ModelState s;
  s.config = cfg;
  std::mt19937_64 rng(cfg.seed);
  const int h = cfg.hidden_dim;

  for (int t = 0; t < kNodeTypes; ++t)
    add_mlp(s, rng, "enc.node." + node_name(t), node_feature_dim(static_cast<NodeType>(t)), h, h - kPeDim);
  for (int t = 0; t < kEdgeTypes; ++t)
    if (edge_type_info(static_cast<EdgeType>(t)).has_features)
      add_mlp(s, rng, "enc.edge." + edge_name(t), kBranchFeatures, h, h);

  for (int k = 0; k < cfg.layers; ++k) {
    const std::string lp = layer_prefix(k);
    for (int t = 0; t < kEdgeTypes; ++t) {
      const bool feat = edge_type_info(static_cast<EdgeType>(t)).has_features;
      add_mlp(s, rng, lp + (feat ? ".edge." : ".conn.") + edge_name(t), feat ? 3 * h : 2 * h, h, h, kResidualGain);
    }
    for (int t = 0; t < kNodeTypes; ++t) add_mlp(s, rng, lp + ".node." + node_name(t), 2 * h, h, h, kResidualGain);
    for (const char* proj : {"query", "key", "value", "out"}) add_linear(s, rng, lp + ".attn." + proj, h, h, 3.0);
    add_mlp(s, rng, lp + ".combine", h, h, h, kResidualGain);
  }
  add_mlp(s, rng, "dec.bus", h, h, 2, kDecoderGain);
  add_mlp(s, rng, "dec.gen", h, h, 2, kDecoderGain);

  std::mt19937_64 feature_rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
  for (int k = 0; k < cfg.layers; ++k)
    s.add_buffer(layer_prefix(k) + ".attn.features",
                 orthogonal_random_features(cfg.random_features, h / cfg.heads, feature_rng));
  return s;
}

ParamBinder::ParamBinder(Tape& tape, const ModelState& state, bool requires_grad)
    : tape_(tape), state_(state), requires_grad_(requires_grad), ids_(state.size(), -1) {}

Var ParamBinder::operator()(const std::string& name) {
  const std::size_t i = state_.index(name);
  if (ids_[i] < 0) ids_[i] = tape_.leaf(state_.param(i), requires_grad_).id;
  return {&tape_, ids_[i]};
}

Var mlp(ParamBinder& p, const std::string& prefix, Var x, Activation act) {
  Var h = add_row(matmul(x, p(prefix + ".w1")), p(prefix + ".b1"));
  if (act == Activation::Relu) h = relu(h);
  return add_row(matmul(h, p(prefix + ".w2")), p(prefix + ".b2"));
}

Var linear(ParamBinder& p, const std::string& prefix, Var x) {
  return add_row(matmul(x, p(prefix + ".w")), p(prefix + ".b"));
}

Embeddings encode(ParamBinder& p, const HeteroGraph& g) {
  Tape& tape = p.tape();
  const int h = p.state().config.hidden_dim;
  Embeddings emb;
  for (int t = 0; t < kNodeTypes; ++t) {
    const Matrix& x = g.features[t];
    if (x.cols() != node_feature_dim(static_cast<NodeType>(t)) || g.pe[t].rows() != x.rows() ||
        g.pe[t].cols() != kPeDim)
      throw ShapeError("encode: " + node_name(t) + " features do not match the model");
    const Var parts[2] = {mlp(p, "enc.node." + node_name(t), tape.constant(x)), tape.constant(g.pe[t])};
    emb.nodes[t] = concat_cols(parts);
  }
  for (int t = 0; t < kEdgeTypes; ++t) {
    const EdgeSet& es = g.edges[t];
    if (edge_type_info(static_cast<EdgeType>(t)).has_features) {
      if (es.features.cols() != kBranchFeatures || es.features.rows() != es.size())
        throw ShapeError("encode: " + edge_name(t) + " edge features do not match the model");
      emb.edges[t] = mlp(p, "enc.edge." + edge_name(t), tape.constant(es.features));
    } else {
      emb.edges[t] = tape.constant(Matrix::Zero(es.size(), h));
    }
  }
  return emb;
}

Embeddings mpnn_layer(ParamBinder& p, const Embeddings& emb, const HeteroGraph& g, int k) {
  Tape& tape = p.tape();
  const int h = p.state().config.hidden_dim;
  const std::string lp = layer_prefix(k);
  Embeddings out;
  std::array<Var, kNodeTypes> message;
  for (int t = 0; t < kEdgeTypes; ++t) {
    const EdgeSet& es = g.edges[t];
    const EdgeTypeInfo info = edge_type_info(static_cast<EdgeType>(t));
    const Var hs = gather_rows(emb.nodes[idx(info.src)], es.src);
    const Var hd = gather_rows(emb.nodes[idx(info.dst)], es.dst);
    if (info.has_features) {
      const Var parts[3] = {hs, hd, emb.edges[t]};
      out.edges[t] = add(emb.edges[t], mlp(p, lp + ".edge." + edge_name(t), concat_cols(parts)));
    } else {
      const Var parts[2] = {hs, hd};
      out.edges[t] = mlp(p, lp + ".conn." + edge_name(t), concat_cols(parts));
    }
    const int dst = idx(info.dst);
    const Var m = scatter_add_rows(out.edges[t], es.dst, g.count(info.dst));
    message[dst] = message[dst].valid() ? add(message[dst], m) : m;
  }
  for (int t = 0; t < kNodeTypes; ++t) {
    if (!message[t].valid()) message[t] = tape.constant(Matrix::Zero(g.count(static_cast<NodeType>(t)), h));
    const Var parts[2] = {emb.nodes[t], message[t]};
    out.nodes[t] = add(emb.nodes[t], mlp(p, lp + ".node." + node_name(t), concat_cols(parts)));
  }
  return out;
}

NodeLayout node_layout(const HeteroGraph& g) {
  NodeLayout layout;
  for (int t = 0; t < kNodeTypes; ++t) layout.type_start[t + 1] = layout.type_start[t] + g.count(static_cast<NodeType>(t));
  const int total = layout.type_start[kNodeTypes];
  layout.scatter.resize(static_cast<std::size_t>(total));
  layout.segments = {0};
  for (int gi = 0; gi < g.num_graphs(); ++gi) {
    for (int t = 0; t < kNodeTypes; ++t)
      for (int i = g.offsets[t][gi]; i < g.offsets[t][gi + 1]; ++i) {
        layout.scatter[layout.type_start[t] + i] = static_cast<int>(layout.gather.size());
        layout.gather.push_back(layout.type_start[t] + i);
      }
    layout.segments.push_back(static_cast<int>(layout.gather.size()));
  }
  if (static_cast<int>(layout.gather.size()) != total) throw ShapeError("node_layout: offsets do not cover all nodes");
  for (int r = 0; r < total; ++r)
    if (layout.gather[r] != r) layout.identity = false;
  return layout;
}

Var aggregate_nodes(const Embeddings& emb, const NodeLayout& layout) {
  const Var x = concat_rows(emb.nodes);
  return layout.identity ? x : gather_rows(x, layout.gather);
}

std::array<Var, kNodeTypes> disaggregate_nodes(Var x, const NodeLayout& layout) {
  const Var typed = layout.identity ? x : gather_rows(x, layout.scatter);
  std::array<Var, kNodeTypes> out;
  for (int t = 0; t < kNodeTypes; ++t)
    out[t] = slice_rows(typed, layout.type_start[t], layout.type_start[t + 1] - layout.type_start[t]);
  return out;
}

Var attention_mixer(ParamBinder& p, Var x, const NodeLayout& layout, int k, ModelMode mode) {
  const ModelConfig& cfg = p.state().config;
  if (x.cols() != cfg.hidden_dim) throw ShapeError("attention_mixer: embedding width mismatch");
  const std::string lp = layer_prefix(k) + ".attn.";
  const Var q = linear(p, lp + "query", x);
  const Var kk = linear(p, lp + "key", x);
  const Var v = linear(p, lp + "value", x);
  const Matrix& features = p.state().buffer(lp + "features");
  const Var a = multihead_attention(q, kk, v, layout.segments, cfg.heads,
                                    mode == ModelMode::ExactAttention ? AttentionKind::Softmax
                                                                      : AttentionKind::Performer,
                                    &features);
  return linear(p, lp + "out", a);
}

Var hybrid_combine(ParamBinder& p, Var x_t, Var x_m, int k, Activation act) {
  Var sum = x_m;
  if (x_t.valid()) {
    if (x_t.rows() != x_m.rows() || x_t.cols() != x_m.cols()) throw ShapeError("hybrid_combine: stream shapes differ");
    sum = add(x_t, x_m);
  }
  return mlp(p, layer_prefix(k) + ".combine", sum, act);
}

Decoded decode(ParamBinder& p, const Embeddings& emb, const HeteroGraph& g) {
  const Var bus = mlp(p, "dec.bus", emb.nodes[idx(NodeType::Bus)]);
  const Var gen = mlp(p, "dec.gen", emb.nodes[idx(NodeType::Generator)]);

  std::vector<int> ref(static_cast<std::size_t>(g.count(NodeType::Bus)));
  const std::vector<int> owner = g.graph_of(NodeType::Bus);
  for (std::size_t i = 0; i < ref.size(); ++i) ref[i] = g.reference_bus[owner[i]];

  Decoded d;
  const Var theta_raw = slice_cols(bus, 0, 1);
  d.theta = sub(theta_raw, gather_rows(theta_raw, ref));
  d.vm = bounded_sigmoid(slice_cols(bus, 1, 1), feature_col(g, NodeType::Bus, 0), feature_col(g, NodeType::Bus, 1));
  d.pg = bounded_sigmoid(slice_cols(gen, 0, 1), feature_col(g, NodeType::Generator, 0),
                         feature_col(g, NodeType::Generator, 1));
  d.qg = bounded_sigmoid(slice_cols(gen, 1, 1), feature_col(g, NodeType::Generator, 2),
                         feature_col(g, NodeType::Generator, 3));
  return d;
}

Decoded forward(ParamBinder& p, const HeteroGraph& g) {
  const ModelConfig& cfg = p.state().config;
  Embeddings emb = encode(p, g);
  const NodeLayout layout = node_layout(g);
  Var x = aggregate_nodes(emb, layout);
  Var x_t = x;
  for (int k = 0; k < cfg.layers; ++k) {
    const Embeddings local = mpnn_layer(p, emb, g, k);
    const Var x_m = aggregate_nodes(local, layout);
    if (cfg.mode == ModelMode::MpnnOnly) {
      x = hybrid_combine(p, Var{}, x_m, k);
    } else {
      x_t = add(x_t, attention_mixer(p, x, layout, k, cfg.mode));
      x = hybrid_combine(p, x_t, x_m, k);
    }
    emb.nodes = disaggregate_nodes(x, layout);
    emb.edges = local.edges;
  }
  return decode(p, emb, g);
}

OperatingPoint predict(const ModelState& state, const HeteroGraph& g) {
  Tape tape(false);
  ParamBinder p(tape, state, false);
  const Decoded d = forward(p, g);
  auto col = [](Var v) {
    const Matrix& m = v.value();
    return std::vector<double>(m.data(), m.data() + m.size());
  };
  return {col(d.theta), col(d.vm), col(d.pg), col(d.qg)};
}

GroupMse group_mse(const OperatingPoint& pred, const OperatingPoint& label) {
  auto mse = [](const std::vector<double>& a, const std::vector<double>& b, const char* what) {
    if (a.size() != b.size())
      throw DimensionError(std::string("loss_mse: ") + what + " has " + std::to_string(a.size()) + " entries, label " +
                           std::to_string(b.size()));
    if (a.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s / static_cast<double>(a.size());
  };
  return {mse(pred.theta, label.theta, "theta"), mse(pred.vm, label.vm, "vm"), mse(pred.pg, label.pg, "pg"),
          mse(pred.qg, label.qg, "qg")};
}

double loss_mse(const OperatingPoint& pred, const OperatingPoint& label) {
  const GroupMse g = group_mse(pred, label);
  return g.theta + g.vm + g.pg + g.qg;
}

LossTargets targets_for(const HeteroGraph& g, const OperatingPoint& label) {
  const int nb = g.count(NodeType::Bus);
  const int ng = g.count(NodeType::Generator);
  if (static_cast<int>(label.theta.size()) != nb || static_cast<int>(label.vm.size()) != nb ||
      static_cast<int>(label.pg.size()) != ng || static_cast<int>(label.qg.size()) != ng)
    throw DimensionError("targets_for: label does not match graph node counts");
  auto col = [](const std::vector<double>& v) {
    return Matrix(Eigen::Map<const Matrix>(v.data(), static_cast<Eigen::Index>(v.size()), 1));
  };
  LossTargets t{col(label.theta), col(label.vm), col(label.pg), col(label.qg),
                Matrix::Constant(nb, 1, nb ? 1.0 / nb : 0.0), Matrix::Constant(ng, 1, ng ? 1.0 / ng : 0.0)};
  return t;
}

LossTargets batch_targets(std::span<const LossTargets> parts) {
  if (parts.empty()) throw EmptyInputError("batch_targets: empty batch");
  Eigen::Index nb = 0, ng = 0;
  for (const LossTargets& t : parts) {
    nb += t.theta.rows();
    ng += t.pg.rows();
  }
  LossTargets out{Matrix(nb, 1), Matrix(nb, 1), Matrix(ng, 1), Matrix(ng, 1), Matrix(nb, 1), Matrix(ng, 1)};
  const double inv = 1.0 / static_cast<double>(parts.size());
  Eigen::Index rb = 0, rg = 0;
  for (const LossTargets& t : parts) {
    const auto b = t.theta.rows(), g = t.pg.rows();
    out.theta.middleRows(rb, b) = t.theta;
    out.vm.middleRows(rb, b) = t.vm;
    out.bus_weight.middleRows(rb, b) = t.bus_weight * inv;
    out.pg.middleRows(rg, g) = t.pg;
    out.qg.middleRows(rg, g) = t.qg;
    out.gen_weight.middleRows(rg, g) = t.gen_weight * inv;
    rb += b;
    rg += g;
  }
  return out;
}

Var loss_node(const Decoded& d, const LossTargets& t) {
  const Var parts[4] = {weighted_sse(d.theta, t.theta, t.bus_weight), weighted_sse(d.vm, t.vm, t.bus_weight),
                        weighted_sse(d.pg, t.pg, t.gen_weight), weighted_sse(d.qg, t.qg, t.gen_weight)};
  return sum_scalars(parts);
}

LossAndGrads gradients(const ModelState& state, const HeteroGraph& g, const LossTargets& targets) {
  Tape tape(true);
  ParamBinder p(tape, state, true);
  const Var loss = loss_node(forward(p, g), targets);
  LossAndGrads out;
  out.loss = loss.value()(0, 0);
  if (!std::isfinite(out.loss)) throw NonFiniteLossError("gradients: loss is not finite");
  tape.backward(loss);
  out.grads.reserve(state.size());
  for (std::size_t i = 0; i < state.size(); ++i) {
    const int id = p.node_of(i);
    if (id >= 0 && tape.has_grad(id))
      out.grads.push_back(tape.grad(id));
    else
      out.grads.push_back(Matrix::Zero(state.param(i).rows(), state.param(i).cols()));
  }
  return out;
}

}  // namespace gridmp::nn
