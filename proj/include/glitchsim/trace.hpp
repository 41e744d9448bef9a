#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string_view>
#include <vector>

#include "glitchsim/model.hpp"

namespace glitchsim {

enum class OpKind : std::uint8_t { Mac, BiasAdd, ReluElem, ExpElem, NormElem };
enum class Layer : std::uint8_t { Dense1, Relu1, Dense2, Relu2, Output };

inline constexpr std::size_t kNumOpKinds = 5;
inline constexpr std::size_t kNumLayers = 5;
inline constexpr std::array<OpKind, kNumOpKinds> kAllOpKinds = {
    OpKind::Mac, OpKind::BiasAdd, OpKind::ReluElem, OpKind::ExpElem, OpKind::NormElem};
inline constexpr std::array<Layer, kNumLayers> kAllLayers = {Layer::Dense1, Layer::Relu1, Layer::Dense2,
                                                             Layer::Relu2, Layer::Output};

std::string_view to_string(OpKind kind);
std::string_view to_string(Layer layer);
// Accepts the names produced by to_string (MAC, BIAS_ADD, ...; Dense1, ReLU1, ...).
OpKind parse_op_kind(std::string_view name);
Layer parse_layer(std::string_view name);

constexpr std::size_t index_of(OpKind k) { return static_cast<std::size_t>(k); }
constexpr std::size_t index_of(Layer l) { return static_cast<std::size_t>(l); }

struct MicroOp {
  OpKind kind = OpKind::Mac;
  Layer layer = Layer::Dense1;
  std::uint32_t neuron = 0;
  std::uint32_t operand = 0;  // input index for MAC, 0 otherwise
  std::int64_t cycle_start = 0;
  std::int64_t cycle_end = 0;  // inclusive

  bool operator==(const MicroOp&) const = default;
};

struct CycleWindow {
  std::int64_t start = 0;
  std::int64_t end = 0;  // inclusive

  bool contains(std::int64_t cycle) const { return cycle >= start && cycle <= end; }
  std::int64_t length() const { return end - start + 1; }
  bool operator==(const CycleWindow&) const = default;
};

using LayerWindows = std::map<Layer, CycleWindow>;

/// Per-kind cycle costs. `layer_overhead` models call/loop-exit cycles of each
/// layer function; they are charged to the last micro-op of that layer so the
/// trace stays gap-free.
struct CostModel {
  std::array<std::int64_t, kNumOpKinds> cycles_per{1, 1, 1, 1, 1};
  std::int64_t prologue_cycles = 0;
  std::array<std::int64_t, kNumLayers> layer_overhead{0, 0, 0, 0, 0};

  std::int64_t cost(OpKind k) const { return cycles_per[index_of(k)]; }
  void validate() const;

  static CostModel unit() { return {}; }
};

// Model dimensions plus cost model that reproduce a measured set of layer windows.
struct TracePreset {
  Dims dims;
  CostModel cost;
};

/// Dims 10/9/16 with MAC=130, BIAS_ADD=184, RELU_ELEM=172, EXP_ELEM=150,
/// NORM_ELEM=34, prologue 687 and per-layer overheads {5, 7, 3, 238, 7}.
/// Compiles to Dense1 [687,14047], ReLU1 [14048,15602], Dense2 [15603,37269],
/// ReLU2 [37270,40259], Output [40260,118602]. Derivation in docs/calibration.md.
TracePreset calibrated_preset();

class MicroOpTrace {
 public:
  MicroOpTrace() = default;

  // Validates contiguity (each op starts one cycle after the previous ends),
  // cycle_start <= cycle_end and non-decreasing layer order.
  static MicroOpTrace from_ops(std::vector<MicroOp> ops);

  const std::vector<MicroOp>& ops() const { return ops_; }
  std::int64_t trigger_cycle() const { return ops_.empty() ? 0 : ops_.front().cycle_start; }
  std::int64_t total_cycles() const { return ops_.empty() ? 0 : ops_.back().cycle_end; }
  const LayerWindows& windows() const { return windows_; }
  bool empty() const { return ops_.empty(); }
  bool covers(std::int64_t cycle) const {
    return !ops_.empty() && cycle >= trigger_cycle() && cycle <= total_cycles();
  }

  // Index of the op whose cycle range contains `cycle`. Throws OutOfTraceError.
  std::size_t locate_index(std::int64_t cycle) const;
  const MicroOp& locate(std::int64_t cycle) const { return ops_[locate_index(cycle)]; }

 private:
  std::vector<MicroOp> ops_;
  LayerWindows windows_;
};

/// Emits Dense layers as per-(neuron, input) MACs followed by the neuron's
/// BIAS_ADD, ReLU layers as per-element RELU_ELEM, and the Output layer as
/// MACs + BIAS_ADD per class followed by 32 EXP_ELEM then 32 NORM_ELEM.
MicroOpTrace compile_trace(const Dims& dims, const CostModel& cost);

LayerWindows layer_windows(const MicroOpTrace& trace);

// Closed-form window lengths for a compiled trace (used as an independent check).
std::int64_t dense_window_length(std::size_t n_out, std::size_t n_in, const CostModel& cost,
                                 Layer layer);

// Columns: kind,layer,neuron,operand,cycle_start,cycle_end
void write_trace_csv(std::ostream& out, const MicroOpTrace& trace);

}  // namespace glitchsim
