#include "glitchsim/trace.hpp"

#include <algorithm>
#include <ostream>
#include <string>

#include "glitchsim/errors.hpp"

namespace glitchsim {

namespace {

constexpr std::array<std::string_view, kNumOpKinds> kOpNames = {"MAC", "BIAS_ADD", "RELU_ELEM",
                                                                 "EXP_ELEM", "NORM_ELEM"};
constexpr std::array<std::string_view, kNumLayers> kLayerNames = {"Dense1", "ReLU1", "Dense2",
                                                                  "ReLU2", "Output"};

class TraceBuilder {
 public:
  TraceBuilder(const CostModel& cost) : cost_(cost), next_(cost.prologue_cycles) {}

  void emit(OpKind kind, Layer layer, std::size_t neuron, std::size_t operand) {
    const std::int64_t c = cost_.cost(kind);
    ops_.push_back(MicroOp{kind, layer, static_cast<std::uint32_t>(neuron),
                           static_cast<std::uint32_t>(operand), next_, next_ + c - 1});
    next_ += c;
  }

  void close_layer(Layer layer) {
    const std::int64_t extra = cost_.layer_overhead[index_of(layer)];
    ops_.back().cycle_end += extra;
    next_ += extra;
  }

  std::vector<MicroOp> take() { return std::move(ops_); }

 private:
  const CostModel& cost_;
  std::int64_t next_;
  std::vector<MicroOp> ops_;
};

void emit_dense(TraceBuilder& b, Layer layer, std::size_t n_out, std::size_t n_in) {
  for (std::size_t j = 0; j < n_out; ++j) {
    for (std::size_t i = 0; i < n_in; ++i) b.emit(OpKind::Mac, layer, j, i);
    b.emit(OpKind::BiasAdd, layer, j, 0);
  }
}

}  // namespace

std::string_view to_string(OpKind kind) { return kOpNames[index_of(kind)]; }
std::string_view to_string(Layer layer) { return kLayerNames[index_of(layer)]; }

OpKind parse_op_kind(std::string_view name) {
  for (OpKind k : kAllOpKinds) {
    if (to_string(k) == name) return k;
  }
  throw InputError("unknown micro-op kind: " + std::string(name));
}

Layer parse_layer(std::string_view name) {
  for (Layer l : kAllLayers) {
    if (to_string(l) == name) return l;
  }
  throw InputError("unknown layer: " + std::string(name));
}

void CostModel::validate() const {
  for (std::int64_t c : cycles_per) {
    if (c < 1) throw InputError("micro-op costs must be at least one cycle");
  }
  if (prologue_cycles < 0) throw InputError("prologue cycles must be non-negative");
  for (std::int64_t c : layer_overhead) {
    if (c < 0) throw InputError("layer overhead cycles must be non-negative");
  }
}

TracePreset calibrated_preset() {
  TracePreset p;
  p.dims = Dims{10, 9, 16};
  p.cost.cycles_per = {130, 184, 172, 150, 34};
  p.cost.prologue_cycles = 687;
  p.cost.layer_overhead = {5, 7, 3, 238, 7};
  return p;
}

MicroOpTrace MicroOpTrace::from_ops(std::vector<MicroOp> ops) {
  if (ops.empty()) throw InputError("trace must contain at least one micro-op");
  for (std::size_t n = 0; n < ops.size(); ++n) {
    const MicroOp& op = ops[n];
    if (op.cycle_start > op.cycle_end) throw InputError("micro-op ends before it starts");
    if (n > 0) {
      const MicroOp& prev = ops[n - 1];
      if (op.cycle_start != prev.cycle_end + 1) throw InputError("micro-ops are not contiguous");
      if (index_of(op.layer) < index_of(prev.layer)) throw InputError("micro-ops out of layer order");
    }
    if (op.kind == OpKind::ReluElem && op.layer != Layer::Relu1 && op.layer != Layer::Relu2) {
      throw InputError("RELU_ELEM outside a ReLU layer");
    }
  }
  MicroOpTrace t;
  t.ops_ = std::move(ops);
  for (const MicroOp& op : t.ops_) {
    auto [it, inserted] = t.windows_.try_emplace(op.layer, CycleWindow{op.cycle_start, op.cycle_end});
    if (!inserted) it->second.end = op.cycle_end;
  }
  return t;
}

std::size_t MicroOpTrace::locate_index(std::int64_t cycle) const {
  if (!covers(cycle)) {
    throw OutOfTraceError("cycle " + std::to_string(cycle) + " is outside the trace span");
  }
  auto it = std::upper_bound(ops_.begin(), ops_.end(), cycle,
                             [](std::int64_t c, const MicroOp& op) { return c < op.cycle_start; });
  return static_cast<std::size_t>(std::distance(ops_.begin(), it)) - 1;
}

MicroOpTrace compile_trace(const Dims& dims, const CostModel& cost) {
  dims.validate();
  cost.validate();
  TraceBuilder b(cost);

  emit_dense(b, Layer::Dense1, dims.h1, dims.d);
  b.close_layer(Layer::Dense1);

  for (std::size_t j = 0; j < dims.h1; ++j) b.emit(OpKind::ReluElem, Layer::Relu1, j, 0);
  b.close_layer(Layer::Relu1);

  emit_dense(b, Layer::Dense2, dims.h2, dims.h1);
  b.close_layer(Layer::Dense2);

  for (std::size_t j = 0; j < dims.h2; ++j) b.emit(OpKind::ReluElem, Layer::Relu2, j, 0);
  b.close_layer(Layer::Relu2);

  emit_dense(b, Layer::Output, Dims::c, dims.h2);
  for (std::size_t k = 0; k < Dims::c; ++k) b.emit(OpKind::ExpElem, Layer::Output, k, 0);
  for (std::size_t k = 0; k < Dims::c; ++k) b.emit(OpKind::NormElem, Layer::Output, k, 0);
  b.close_layer(Layer::Output);

  return MicroOpTrace::from_ops(b.take());
}

LayerWindows layer_windows(const MicroOpTrace& trace) {
  if (trace.empty()) throw InputError("layer windows of an empty trace");
  return trace.windows();
}

std::int64_t dense_window_length(std::size_t n_out, std::size_t n_in, const CostModel& cost,
                                 Layer layer) {
  const auto out = static_cast<std::int64_t>(n_out);
  const auto in = static_cast<std::int64_t>(n_in);
  std::int64_t len = out * in * cost.cost(OpKind::Mac) + out * cost.cost(OpKind::BiasAdd);
  if (layer == Layer::Output) {
    len += out * (cost.cost(OpKind::ExpElem) + cost.cost(OpKind::NormElem));
  }
  return len + cost.layer_overhead[index_of(layer)];
}

void write_trace_csv(std::ostream& out, const MicroOpTrace& trace) {
  out << "kind,layer,neuron,operand,cycle_start,cycle_end\n";
  for (const MicroOp& op : trace.ops()) {
    out << to_string(op.kind) << ',' << to_string(op.layer) << ',' << op.neuron << ',' << op.operand
        << ',' << op.cycle_start << ',' << op.cycle_end << '\n';
  }
}

}  // namespace glitchsim
