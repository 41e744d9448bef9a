#include "glitchsim/fault.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <ostream>

#include "glitchsim/errors.hpp"
#include "glitchsim/rng.hpp"
#include "glitchsim/text.hpp"

namespace glitchsim {

namespace {

constexpr std::array<std::string_view, kNumCorruptionKinds> kCorruptionNames = {
    "BIT_FLIP_ACC", "SKIP_OP", "ZERO_OPERAND", "RELU_PASSTHROUGH"};

bool applicable(OpKind op, CorruptionKind c) {
  return c != CorruptionKind::ReluPassthrough || op == OpKind::ReluElem;
}

double flip_bits(double v, std::uint64_t mask) {
  if (mask == 0) return v;
  return std::bit_cast<double>(std::bit_cast<std::uint64_t>(v) ^ mask);
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

struct OpEffects {
  bool skip = false;
  bool zero_operand = false;
  bool passthrough = false;
  std::uint64_t flip_mask = 0;
};

// Walks the plan's corruptions in op order alongside execution.
class PlanCursor {
 public:
  PlanCursor(std::span<const Corruption> corruptions, const MicroOpTrace& trace)
      : corruptions_(corruptions), trace_(trace) {}

  OpEffects next(OpKind kind, Layer layer, std::size_t neuron, std::size_t operand) {
    const std::size_t idx = index_++;
    OpEffects e;
    while (pos_ < corruptions_.size() && corruptions_[pos_].op_index == idx) {
      const Corruption& c = corruptions_[pos_++];
      const MicroOp& op = trace_.ops()[idx];
      if (op.kind != kind || op.layer != layer || op.neuron != neuron || op.operand != operand) {
        throw InputError("trace does not match the model being executed");
      }
      switch (c.kind) {
        case CorruptionKind::BitFlipAcc: e.flip_mask ^= std::uint64_t{1} << c.bit; break;
        case CorruptionKind::SkipOp: e.skip = true; break;
        case CorruptionKind::ZeroOperand: e.zero_operand = true; break;
        case CorruptionKind::ReluPassthrough: e.passthrough = true; break;
      }
    }
    return e;
  }

 private:
  std::span<const Corruption> corruptions_;
  const MicroOpTrace& trace_;
  std::size_t index_ = 0;
  std::size_t pos_ = 0;
};

std::size_t expected_op_count(const Dims& d) {
  return d.h1 * (d.d + 1) + d.h1 + d.h2 * (d.h1 + 1) + d.h2 + Dims::c * (d.h2 + 1) + 2 * Dims::c;
}

void run_dense(PlanCursor& cur, Layer layer, const Matrix& w, const Vector& b,
               std::span<const double> in, Vector& z) {
  z.assign(w.rows(), 0.0);
  for (std::size_t j = 0; j < w.rows(); ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < w.cols(); ++i) {
      const OpEffects e = cur.next(OpKind::Mac, layer, j, i);
      if (!e.skip) acc += w(j, i) * (e.zero_operand ? 0.0 : in[i]);
      acc = flip_bits(acc, e.flip_mask);
    }
    const OpEffects e = cur.next(OpKind::BiasAdd, layer, j, 0);
    if (!e.skip) acc += e.zero_operand ? 0.0 : b[j];
    acc = flip_bits(acc, e.flip_mask);
    z[j] = acc;
  }
}

// Activation buffers start zeroed, so a skipped element reads as 0.
void run_relu(PlanCursor& cur, Layer layer, const Vector& z, Vector& a) {
  a.assign(z.size(), 0.0);
  for (std::size_t j = 0; j < z.size(); ++j) {
    const OpEffects e = cur.next(OpKind::ReluElem, layer, j, 0);
    if (!e.skip) {
      if (e.passthrough) {
        a[j] = z[j];
      } else {
        a[j] = std::max(0.0, e.zero_operand ? 0.0 : z[j]);
      }
    }
    a[j] = flip_bits(a[j], e.flip_mask);
  }
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n\"");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n\"");
  return std::string(s.substr(b, e - b + 1));
}

double parse_real(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  double v = 0.0;
  auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || end != t.data() + t.size()) {
    throw InputError("profile key " + key + ": expected a number, got '" + text + "'");
  }
  return v;
}

Band parse_band(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "empty" || t == "none") return Band{};
  const auto comma = t.find(',');
  if (comma == std::string::npos) throw InputError("profile key " + key + ": expected `lo,hi`");
  const double lo = parse_real(key, t.substr(0, comma));
  const double hi = parse_real(key, t.substr(comma + 1));
  if (lo != std::floor(lo) || hi != std::floor(hi)) {
    throw InputError("profile key " + key + ": band bounds must be integers");
  }
  return Band{static_cast<int>(lo), static_cast<int>(hi)};
}

}  // namespace

std::string_view to_string(CorruptionKind kind) { return kCorruptionNames[index_of(kind)]; }

CorruptionKind parse_corruption_kind(std::string_view name) {
  for (CorruptionKind k : kAllCorruptionKinds) {
    if (to_string(k) == name) return k;
  }
  throw InputError("unknown corruption kind: " + std::string(name));
}

void GlitchConfig::validate() const {
  auto unit_ok = [](int v) { return v >= 0 && v <= kGlitchUnitMax && v % kGlitchUnitStep == 0; };
  if (!unit_ok(width)) throw InputError("glitch width must be a multiple of 100 in [0,4000]");
  if (!unit_ok(offset)) throw InputError("glitch offset must be a multiple of 100 in [0,4000]");
  if (external_offset < 0) throw InputError("external offset must be non-negative");
  if (repeat < 1 || repeat > kRepeatMax) throw InputError("glitch repeat must be in [1,5]");
}

SusceptibilityProfile SusceptibilityProfile::defaults() { return {}; }

void SusceptibilityProfile::validate() const {
  auto band_ok = [](const Band& b) {
    return b.empty() || (b.lo >= 0 && b.hi <= kGlitchUnitMax);
  };
  if (!band_ok(width_band) || !band_ok(offset_band)) {
    throw InputError("profile bands must lie inside [0,4000]");
  }
  for (double p : corrupt_prob) {
    if (!(p >= 0.0 && p <= 1.0)) throw InputError("corrupt_prob entries must be in [0,1]");
  }
  for (double s : layer_scale) {
    if (!(s >= 0.0 && s <= 1.0)) throw InputError("layer_scale entries must be in [0,1]");
  }
  if (!(reset_coeff >= 0.0) || !std::isfinite(reset_coeff)) {
    throw InputError("reset_coeff must be finite and non-negative");
  }
  double total = 0.0;
  for (OpKind op : kAllOpKinds) {
    for (CorruptionKind c : kAllCorruptionKinds) {
      const double w = corruption_mix[index_of(op)][index_of(c)];
      if (!(w >= 0.0) || !std::isfinite(w)) throw InputError("corruption_mix weights must be >= 0");
      if (w > 0.0 && !applicable(op, c)) {
        throw InputError("RELU_PASSTHROUGH may only target RELU_ELEM ops");
      }
      total += w;
    }
  }
  if (total <= 0.0) throw InputError("corruption_mix weights are all zero");
}

SusceptibilityProfile parse_profile(const std::map<std::string, std::string>& kv,
                                    SusceptibilityProfile base) {
  SusceptibilityProfile p = std::move(base);
  for (const auto& [key, value] : kv) {
    const auto dot = key.find('.');
    const std::string head = key.substr(0, dot);
    const std::string rest = dot == std::string::npos ? std::string{} : key.substr(dot + 1);
    if (key == "width_band") {
      p.width_band = parse_band(key, value);
    } else if (key == "offset_band") {
      p.offset_band = parse_band(key, value);
    } else if (key == "reset_coeff") {
      p.reset_coeff = parse_real(key, value);
    } else if (head == "corrupt_prob" && !rest.empty()) {
      p.corrupt_prob[index_of(parse_op_kind(rest))] = parse_real(key, value);
    } else if (head == "layer_scale" && !rest.empty()) {
      p.layer_scale[index_of(parse_layer(rest))] = parse_real(key, value);
    } else if (head == "corruption_mix" && !rest.empty()) {
      const double w = parse_real(key, value);
      const auto dot2 = rest.find('.');
      if (dot2 == std::string::npos) {
        const CorruptionKind c = parse_corruption_kind(rest);
        for (OpKind op : kAllOpKinds) {
          if (applicable(op, c)) p.corruption_mix[index_of(op)][index_of(c)] = w;
        }
      } else {
        const OpKind op = parse_op_kind(rest.substr(0, dot2));
        const CorruptionKind c = parse_corruption_kind(rest.substr(dot2 + 1));
        p.corruption_mix[index_of(op)][index_of(c)] = w;
      }
    } else {
      throw InputError("unknown profile key: " + key);
    }
  }
  p.validate();
  return p;
}

void write_profile(std::ostream& out, const SusceptibilityProfile& p) {
  auto band = [](const Band& b) {
    return b.empty() ? std::string("empty") : std::to_string(b.lo) + "," + std::to_string(b.hi);
  };
  out << "width_band = " << band(p.width_band) << '\n';
  out << "offset_band = " << band(p.offset_band) << '\n';
  out << "reset_coeff = " << format_double(p.reset_coeff) << '\n';
  for (OpKind op : kAllOpKinds) {
    out << "corrupt_prob." << to_string(op) << " = " << format_double(p.corrupt_prob[index_of(op)])
        << '\n';
  }
  for (OpKind op : kAllOpKinds) {
    for (CorruptionKind c : kAllCorruptionKinds) {
      if (!applicable(op, c)) continue;
      out << "corruption_mix." << to_string(op) << '.' << to_string(c) << " = "
          << format_double(p.corruption_mix[index_of(op)][index_of(c)]) << '\n';
    }
  }
  for (Layer l : kAllLayers) {
    out << "layer_scale." << to_string(l) << " = " << format_double(p.layer_scale[index_of(l)])
        << '\n';
  }
}

std::uint64_t plan_seed(std::uint64_t seed, const GlitchConfig& g) {
  return hash_words({seed, static_cast<std::uint64_t>(g.width), static_cast<std::uint64_t>(g.offset),
                     static_cast<std::uint64_t>(g.external_offset),
                     static_cast<std::uint64_t>(g.repeat)});
}

// Draw layout: one uniform for the reset decision, then exactly three uniforms
// per glitched cycle (corrupt?, which corruption, which bit) whether or not
// they are used, so streams stay aligned when profile values change.
FaultPlan resolve_glitch(const GlitchConfig& glitch, const SusceptibilityProfile& profile,
                         const MicroOpTrace& trace, std::uint64_t seed) {
  glitch.validate();
  if (trace.empty()) return FaultPlan::no_effect();

  const std::int64_t first = std::max(glitch.external_offset, trace.trigger_cycle());
  const std::int64_t last = std::min(glitch.external_offset + glitch.repeat - 1, trace.total_cycles());
  if (first > last) return FaultPlan::no_effect();
  if (!profile.width_band.contains(glitch.width) || !profile.offset_band.contains(glitch.offset)) {
    return FaultPlan::no_effect();
  }

  Rng rng(plan_seed(seed, glitch));
  const double p_reset =
      std::min(1.0, profile.reset_coeff * (static_cast<double>(glitch.width) / kGlitchUnitMax) *
                        static_cast<double>(glitch.repeat));
  if (rng.uniform() < p_reset) return FaultPlan::reset();

  FaultPlan plan;
  for (std::int64_t cycle = first; cycle <= last; ++cycle) {
    const double u_hit = rng.uniform();
    const double u_kind = rng.uniform();
    const double u_bit = rng.uniform();

    const std::size_t idx = trace.locate_index(cycle);
    const MicroOp& op = trace.ops()[idx];
    const double p_hit = profile.corrupt_prob[index_of(op.kind)] * profile.layer_scale[index_of(op.layer)];
    if (!(u_hit < p_hit)) continue;

    const auto& mix = profile.corruption_mix[index_of(op.kind)];
    double total = 0.0;
    for (CorruptionKind c : kAllCorruptionKinds) {
      if (applicable(op.kind, c)) total += mix[index_of(c)];
    }
    if (total <= 0.0) continue;

    double target = u_kind * total;
    CorruptionKind chosen = CorruptionKind::SkipOp;
    bool found = false;
    for (CorruptionKind c : kAllCorruptionKinds) {
      if (!applicable(op.kind, c) || mix[index_of(c)] <= 0.0) continue;
      chosen = c;
      found = true;
      if (target < mix[index_of(c)]) break;
      target -= mix[index_of(c)];
    }
    if (!found) continue;

    Corruption corruption{chosen, idx, 0};
    if (chosen == CorruptionKind::BitFlipAcc) {
      corruption.bit = std::min(63, static_cast<int>(u_bit * 64.0));
    }
    plan.corruptions.push_back(corruption);
  }
  if (plan.corruptions.empty()) return FaultPlan::no_effect();
  plan.verdict = FaultPlan::Verdict::Corruptions;
  return plan;
}

FaultedRun execute_plan(const ModelParams& params, std::span<const double> x,
                        const MicroOpTrace& trace, const FaultPlan& plan) {
  if (plan.verdict == FaultPlan::Verdict::Reset) return FaultedRun{ExecStatus::Reset, std::nullopt};
  if (plan.verdict == FaultPlan::Verdict::NoEffect) {
    return FaultedRun{ExecStatus::Completed, forward(params, x)};
  }
  if (plan.corruptions.empty()) throw InputError("corruption plan without corruptions");
  if (x.size() != params.dims.d) throw InputError("input length does not match model");
  if (trace.ops().size() != expected_op_count(params.dims)) {
    throw InputError("trace was compiled for different model dimensions");
  }
  for (std::size_t n = 0; n < plan.corruptions.size(); ++n) {
    const Corruption& c = plan.corruptions[n];
    if (c.op_index >= trace.ops().size()) throw InputError("corruption targets a missing op");
    if (n > 0 && c.op_index < plan.corruptions[n - 1].op_index) {
      throw InputError("corruptions must be sorted by op index");
    }
    if (c.kind == CorruptionKind::BitFlipAcc && (c.bit < 0 || c.bit > 63)) {
      throw InputError("bit index must be in [0,63]");
    }
    if (!applicable(trace.ops()[c.op_index].kind, c.kind)) {
      throw InputError("RELU_PASSTHROUGH may only target RELU_ELEM ops");
    }
  }

  PlanCursor cur(plan.corruptions, trace);
  ForwardResult r;
  run_dense(cur, Layer::Dense1, params.w1, params.b1, x, r.z1);
  run_relu(cur, Layer::Relu1, r.z1, r.a1);
  run_dense(cur, Layer::Dense2, params.w2, params.b2, r.a1, r.z2);
  run_relu(cur, Layer::Relu2, r.z2, r.a2);
  run_dense(cur, Layer::Output, params.wo, params.bo, r.a2, r.zo);

  if (!all_finite(r.z1) || !all_finite(r.a1) || !all_finite(r.z2) || !all_finite(r.a2) ||
      !all_finite(r.zo)) {
    return FaultedRun{ExecStatus::Reset, std::nullopt};
  }

  const double m = *std::max_element(r.zo.begin(), r.zo.end());
  Vector e(Dims::c, 0.0);
  double sum = 0.0;
  for (std::size_t k = 0; k < Dims::c; ++k) {
    const OpEffects fx = cur.next(OpKind::ExpElem, Layer::Output, k, 0);
    if (!fx.skip) {
      e[k] = std::exp((fx.zero_operand ? 0.0 : r.zo[k]) - m);
      sum += e[k];
    }
    sum = flip_bits(sum, fx.flip_mask);
  }
  r.probs.assign(Dims::c, 0.0);
  for (std::size_t k = 0; k < Dims::c; ++k) {
    const OpEffects fx = cur.next(OpKind::NormElem, Layer::Output, k, 0);
    if (!fx.skip) r.probs[k] = (fx.zero_operand ? 0.0 : e[k]) / sum;
    r.probs[k] = flip_bits(r.probs[k], fx.flip_mask);
  }
  if (!std::isfinite(sum) || !all_finite(r.probs)) return FaultedRun{ExecStatus::Reset, std::nullopt};

  r.predicted_class = argmax(r.probs);
  r.predicted_bits = predict_bits(r.predicted_class);
  return FaultedRun{ExecStatus::Completed, std::move(r)};
}

FaultedRun faulted_forward(const ModelParams& params, std::span<const double> x,
                           const MicroOpTrace& trace, const GlitchConfig& glitch,
                           const SusceptibilityProfile& profile, std::uint64_t seed) {
  return execute_plan(params, x, trace, resolve_glitch(glitch, profile, trace, seed));
}

std::map<Layer, double> faultable_cycle_fraction(const MicroOpTrace& trace, const SusceptibilityProfile& profile) {
  std::map<Layer, double> mass;
  for (Layer l : kAllLayers) mass[l] = 0.0;
  double total = 0.0;
  for (const MicroOp& op : trace.ops()) {
    const double m = static_cast<double>(op.cycle_end - op.cycle_start + 1) * profile.corrupt_prob[index_of(op.kind)] *
                     profile.layer_scale[index_of(op.layer)];
    mass[op.layer] += m;
    total += m;
  }
  if (total > 0.0) {
    for (auto& [layer, m] : mass) m /= total;
  }
  return mass;
}

}  // namespace glitchsim
