#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "glitchsim/model.hpp"
#include "glitchsim/trace.hpp"

namespace glitchsim {

inline constexpr int kGlitchUnitMax = 4000;
inline constexpr int kGlitchUnitStep = 100;
inline constexpr int kRepeatMax = 5;

/// The four knobs of a voltage glitch. width and offset are in abstract
/// generator units (0..4000, step 100); external_offset counts cycles after
/// the trigger; repeat is the number of consecutive glitched cycles.
struct GlitchConfig {
  int width = 0;
  int offset = 0;
  std::int64_t external_offset = 0;
  int repeat = 1;

  void validate() const;
  bool operator==(const GlitchConfig&) const = default;
  auto operator<=>(const GlitchConfig&) const = default;
};

// Inclusive; lo > hi denotes the empty band.
struct Band {
  int lo = 0;
  int hi = -1;

  bool contains(int v) const { return v >= lo && v <= hi; }
  bool empty() const { return lo > hi; }
  bool operator==(const Band&) const = default;
};

enum class CorruptionKind : std::uint8_t { BitFlipAcc, SkipOp, ZeroOperand, ReluPassthrough };
inline constexpr std::size_t kNumCorruptionKinds = 4;
inline constexpr std::array<CorruptionKind, kNumCorruptionKinds> kAllCorruptionKinds = {
    CorruptionKind::BitFlipAcc, CorruptionKind::SkipOp, CorruptionKind::ZeroOperand,
    CorruptionKind::ReluPassthrough};

std::string_view to_string(CorruptionKind kind);
CorruptionKind parse_corruption_kind(std::string_view name);
constexpr std::size_t index_of(CorruptionKind k) { return static_cast<std::size_t>(k); }

/// Stand-in for device glitch physics. A glitch only acts when both width and
/// offset sit inside their bands; then it may reset the target, otherwise each
/// glitched cycle corrupts the micro-op it lands on with probability
/// corrupt_prob[kind] * layer_scale[layer].
struct SusceptibilityProfile {
  Band width_band{2400, 2800};
  Band offset_band{2400, 2800};
  std::array<double, kNumOpKinds> corrupt_prob{0.5, 0.5, 0.5, 0.5, 0.5};
  double reset_coeff = 0.1;
  // corruption_mix[op kind][corruption kind]: relative weights.
  // Defaults: BIT_FLIP_ACC and SKIP_OP for MAC/BIAS_ADD, RELU_PASSTHROUGH and
  // SKIP_OP for RELU_ELEM, BIT_FLIP_ACC for EXP_ELEM/NORM_ELEM.
  std::array<std::array<double, kNumCorruptionKinds>, kNumOpKinds> corruption_mix{{
      {1.0, 1.0, 0.0, 0.0},
      {1.0, 1.0, 0.0, 0.0},
      {0.0, 1.0, 0.0, 1.0},
      {1.0, 0.0, 0.0, 0.0},
      {1.0, 0.0, 0.0, 0.0},
  }};
  std::array<double, kNumLayers> layer_scale{1.0, 1.0, 1.0, 1.0, 1.0};

  static SusceptibilityProfile defaults();
  void validate() const;
  bool operator==(const SusceptibilityProfile&) const = default;
};

/// Key-value profile text (`key = value`, `#` comments). Keys: width_band,
/// offset_band (`lo,hi`), corrupt_prob.<OP>, reset_coeff,
/// corruption_mix.<CORRUPTION> (all op kinds where it applies) or
/// corruption_mix.<OP>.<CORRUPTION>, layer_scale.<Layer>.
SusceptibilityProfile parse_profile(const std::map<std::string, std::string>& kv,
                                    SusceptibilityProfile base = SusceptibilityProfile::defaults());
void write_profile(std::ostream& out, const SusceptibilityProfile& profile);

struct Corruption {
  CorruptionKind kind = CorruptionKind::SkipOp;
  std::size_t op_index = 0;  // into MicroOpTrace::ops()
  int bit = 0;               // BitFlipAcc only, 0..63

  bool operator==(const Corruption&) const = default;
};

struct FaultPlan {
  enum class Verdict : std::uint8_t { NoEffect, Corruptions, Reset };

  Verdict verdict = Verdict::NoEffect;
  std::vector<Corruption> corruptions;  // sorted by op_index

  static FaultPlan no_effect() { return {}; }
  static FaultPlan reset() { return {Verdict::Reset, {}}; }
};

/// Seed of the draw stream for one (trial seed, glitch) pair.
std::uint64_t plan_seed(std::uint64_t seed, const GlitchConfig& glitch);

FaultPlan resolve_glitch(const GlitchConfig& glitch, const SusceptibilityProfile& profile,
                         const MicroOpTrace& trace, std::uint64_t seed);

/// Per-layer share of the trace's corruption exposure: the sum over the layer's
/// cycles of corrupt_prob[kind] * layer_scale[layer], divided by the same sum
/// over the whole trace. All zeros when nothing in the trace can be corrupted.
std::map<Layer, double> faultable_cycle_fraction(const MicroOpTrace& trace, const SusceptibilityProfile& profile);

enum class ExecStatus : std::uint8_t { Completed, Reset };

struct FaultedRun {
  ExecStatus status = ExecStatus::Completed;
  std::optional<ForwardResult> result;  // empty iff Reset
};

/// Runs the forward pass applying the plan's corruptions as their target ops
/// execute. Any non-finite intermediate turns the run into a Reset.
FaultedRun execute_plan(const ModelParams& params, std::span<const double> x,
                        const MicroOpTrace& trace, const FaultPlan& plan);

FaultedRun faulted_forward(const ModelParams& params, std::span<const double> x,
                           const MicroOpTrace& trace, const GlitchConfig& glitch,
                           const SusceptibilityProfile& profile, std::uint64_t seed);

}  // namespace glitchsim
