#include "glitchsim/defense.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <ostream>

#include "glitchsim/errors.hpp"
#include "glitchsim/rng.hpp"
#include "glitchsim/text.hpp"

namespace glitchsim {

namespace {

const Vector& layer_output(const ForwardResult& r, Layer layer) {
  switch (layer) {
    case Layer::Dense1: return r.z1;
    case Layer::Relu1: return r.a1;
    case Layer::Dense2: return r.z2;
    case Layer::Relu2: return r.a2;
    case Layer::Output: return r.zo;
  }
  return r.zo;
}

std::int64_t inference_cycles(const MicroOpTrace& trace) {
  return trace.total_cycles() - trace.trigger_cycle() + 1;
}

// Extra work of the check itself, in cost-model cycles.
std::int64_t check_cycles(const DefensePolicy& policy, const ModelParams& params, const CostModel& cost) {
  const auto classes = static_cast<std::int64_t>(Dims::c);
  switch (policy.kind) {
    case DefenseKind::EntropyCheck: return classes * cost.cost(OpKind::ExpElem);
    case DefenseKind::ActivationRangeCheck: {
      std::int64_t n = 0;
      for (const auto& [layer, b] : policy.bounds) {
        switch (layer) {
          case Layer::Dense1:
          case Layer::Relu1: n += static_cast<std::int64_t>(params.dims.h1); break;
          case Layer::Dense2:
          case Layer::Relu2: n += static_cast<std::int64_t>(params.dims.h2); break;
          case Layer::Output: n += classes; break;
        }
      }
      return n * cost.cost(OpKind::ReluElem);
    }
    case DefenseKind::CrossCheck:
      return classes * static_cast<std::int64_t>(policy.reference.d) * cost.cost(OpKind::Mac);
    default: return 0;
  }
}

// Costs are not stored in the trace; recover them from the first op of each kind.
CostModel observed_costs(const MicroOpTrace& trace) {
  CostModel c;
  std::array<bool, kNumOpKinds> seen{};
  for (std::size_t i = 0; i < trace.ops().size(); ++i) {
    const MicroOp& op = trace.ops()[i];
    const bool layer_last = i + 1 == trace.ops().size() || trace.ops()[i + 1].layer != op.layer;
    if (!seen[index_of(op.kind)] && !layer_last) {
      c.cycles_per[index_of(op.kind)] = op.cycle_end - op.cycle_start + 1;
      seen[index_of(op.kind)] = true;
    }
  }
  return c;
}

struct Shot {
  std::optional<ForwardResult> result;  // empty on reset
};

Shot run_shot(const ModelParams& params, std::span<const double> x, const MicroOpTrace& trace,
              const Attack& attack, std::uint64_t seed, std::int64_t delay) {
  if (!attack.armed) return Shot{forward(params, x)};
  GlitchConfig g = attack.glitch;
  g.external_offset -= delay;
  if (g.external_offset < 0) return Shot{forward(params, x)};
  FaultedRun run = faulted_forward(params, x, trace, g, attack.profile, seed);
  return Shot{std::move(run.result)};
}

std::uint64_t shot_seed(std::uint64_t seed, int attempt, int shot) {
  if (attempt == 0 && shot == 0) return seed;
  return hash_words({seed, static_cast<std::uint64_t>(attempt), static_cast<std::uint64_t>(shot), 0xd5ULL});
}

DefendedOutcome single_attempt(const DefensePolicy& policy, const ModelParams& params,
                               std::span<const double> x, const MicroOpTrace& trace, const Attack& attack,
                               std::uint64_t seed, int attempt, std::int64_t extra_cycles) {
  using Status = DefendedOutcome::Status;
  DefendedOutcome out;
  const std::int64_t per_inference = inference_cycles(trace);

  if (policy.kind == DefenseKind::MajorityVote) {
    // A reset is one more outcome in the vote, next to the 32 classes.
    std::array<int, kNumClasses + 1> votes{};
    for (int s = 0; s < policy.shots; ++s) {
      const Shot shot = run_shot(params, x, trace, attack, shot_seed(seed, attempt, s), 0);
      ++out.inferences;
      out.cost_cycles += per_inference;
      ++votes[shot.result ? static_cast<std::size_t>(shot.result->predicted_class) : kNumClasses];
    }
    const int top = *std::max_element(votes.begin(), votes.end());
    const auto winner = static_cast<std::size_t>(std::find(votes.begin(), votes.end(), top) - votes.begin());
    if (std::count(votes.begin(), votes.end(), top) > 1) {
      out.status = Status::Rejected;
    } else if (winner == kNumClasses) {
      out.status = Status::ResetOrHang;
    } else {
      out.status = Status::Accepted;
      out.predicted = static_cast<int>(winner);
    }
    return out;
  }

  std::int64_t delay = 0;
  if (policy.kind == DefenseKind::TimingJitter) {
    Rng rng(hash_words({seed, static_cast<std::uint64_t>(attempt), 0x717e4ULL}));
    delay = rng.uniform_int(0, policy.max_jitter);
  }
  const Shot shot = run_shot(params, x, trace, attack, shot_seed(seed, attempt, 0), delay);
  out.inferences = 1;
  out.cost_cycles = per_inference + delay + extra_cycles;

  if (!shot.result) {
    out.status = Status::ResetOrHang;
    if (policy.kind == DefenseKind::GlitchMonitor) {
      Rng rng(hash_words({seed, static_cast<std::uint64_t>(attempt), 0x3017ULL}));
      if (rng.uniform() < policy.detection_prob) out.status = Status::Rejected;
    }
    return out;
  }

  const ForwardResult& r = *shot.result;
  bool flagged = false;
  switch (policy.kind) {
    case DefenseKind::EntropyCheck: {
      const auto h = output_entropy(r.probs);
      flagged = !h || *h > policy.entropy_threshold;
      break;
    }
    case DefenseKind::ActivationRangeCheck:
      for (const auto& [layer, b] : policy.bounds) {
        for (double v : layer_output(r, layer)) {
          if (v < b.first || v > b.second) flagged = true;
        }
      }
      break;
    case DefenseKind::CrossCheck:
      flagged = nearest_centroid(x, policy.reference) != r.predicted_class;
      break;
    default: break;
  }
  if (flagged) {
    out.status = Status::Rejected;
  } else {
    out.status = Status::Accepted;
    out.predicted = r.predicted_class;
  }
  return out;
}

}  // namespace

DefensePolicy DefensePolicy::majority_vote(int shots) {
  DefensePolicy p;
  p.kind = DefenseKind::MajorityVote;
  p.shots = shots;
  return p;
}

DefensePolicy DefensePolicy::entropy_check(double threshold) {
  DefensePolicy p;
  p.kind = DefenseKind::EntropyCheck;
  p.entropy_threshold = threshold;
  return p;
}

DefensePolicy DefensePolicy::activation_range(ActivationBounds bounds) {
  DefensePolicy p;
  p.kind = DefenseKind::ActivationRangeCheck;
  p.bounds = std::move(bounds);
  return p;
}

DefensePolicy DefensePolicy::timing_jitter(std::int64_t max_jitter) {
  DefensePolicy p;
  p.kind = DefenseKind::TimingJitter;
  p.max_jitter = max_jitter;
  return p;
}

DefensePolicy DefensePolicy::cross_check(const GenConfig& reference) {
  DefensePolicy p;
  p.kind = DefenseKind::CrossCheck;
  p.reference = reference;
  return p;
}

DefensePolicy DefensePolicy::glitch_monitor(double detection_prob) {
  DefensePolicy p;
  p.kind = DefenseKind::GlitchMonitor;
  p.detection_prob = detection_prob;
  return p;
}

void DefensePolicy::validate() const {
  switch (kind) {
    case DefenseKind::MajorityVote:
      if (shots < 3 || shots % 2 == 0) throw InputError("majority vote needs an odd number of shots >= 3");
      break;
    case DefenseKind::EntropyCheck:
      if (!(entropy_threshold >= 0.0)) throw InputError("entropy threshold must be >= 0");
      break;
    case DefenseKind::ActivationRangeCheck:
      if (bounds.empty()) throw InputError("activation range check needs at least one layer bound");
      for (const auto& [layer, b] : bounds) {
        if (!(b.first <= b.second)) throw InputError("activation bounds must satisfy lo <= hi");
      }
      break;
    case DefenseKind::TimingJitter:
      if (max_jitter < 0) throw InputError("max_jitter must be >= 0");
      break;
    case DefenseKind::CrossCheck: reference.validate(); break;
    case DefenseKind::GlitchMonitor:
      if (!(detection_prob >= 0.0 && detection_prob <= 1.0)) {
        throw InputError("detection probability must be in [0,1]");
      }
      break;
  }
  if (max_retries < 0) throw InputError("max_retries must be >= 0");
}

std::string DefensePolicy::name() const {
  std::string n;
  switch (kind) {
    case DefenseKind::MajorityVote: n = "majority_vote(" + std::to_string(shots) + ")"; break;
    case DefenseKind::EntropyCheck: n = "entropy_check(" + format_double(entropy_threshold) + ")"; break;
    case DefenseKind::ActivationRangeCheck: n = "activation_range"; break;
    case DefenseKind::TimingJitter: n = "timing_jitter(" + std::to_string(max_jitter) + ")"; break;
    case DefenseKind::CrossCheck: n = "cross_check"; break;
    case DefenseKind::GlitchMonitor: n = "glitch_monitor(" + format_double(detection_prob) + ")"; break;
  }
  if (action == FlagAction::Retry) n += "+retry";
  return n;
}

ActivationBounds calibrate_activation_bounds(const ModelParams& params, std::span<const Sample> samples,
                                             double margin) {
  if (samples.empty()) throw InputError("activation calibration needs samples");
  if (!(margin >= 0.0)) throw InputError("calibration margin must be >= 0");
  ActivationBounds b;
  for (Layer l : kAllLayers) {
    b[l] = {std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  }
  for (const Sample& s : samples) {
    const ForwardResult r = forward(params, s.features);
    for (Layer l : kAllLayers) {
      for (double v : layer_output(r, l)) {
        b[l].first = std::min(b[l].first, v);
        b[l].second = std::max(b[l].second, v);
      }
    }
  }
  for (auto& [layer, range] : b) {
    const double pad = margin * (range.second - range.first);
    range.first -= pad;
    range.second += pad;
  }
  return b;
}

std::optional<double> output_entropy(std::span<const double> probs) {
  double sum = 0.0;
  for (double p : probs) {
    if (!std::isfinite(p) || p < 0.0) return std::nullopt;
    sum += p;
  }
  if (!(sum > 0.0)) return std::nullopt;
  double h = 0.0;
  for (double p : probs) {
    const double q = p / sum;
    if (q > 0.0) h -= q * std::log(q);
  }
  return std::clamp(h, 0.0, std::log(static_cast<double>(probs.size())));
}

DefendedOutcome defended_predict(const DefensePolicy& policy, const ModelParams& params,
                                 std::span<const double> x, const MicroOpTrace& trace,
                                 const Attack& attack, std::uint64_t seed) {
  policy.validate();
  const std::int64_t extra = check_cycles(policy, params, observed_costs(trace));
  const int attempts = policy.action == FlagAction::Retry ? policy.max_retries + 1 : 1;
  DefendedOutcome total;
  for (int a = 0; a < attempts; ++a) {
    DefendedOutcome o = single_attempt(policy, params, x, trace, attack, seed, a, extra);
    total.inferences += o.inferences;
    total.cost_cycles += o.cost_cycles;
    total.status = o.status;
    total.predicted = o.predicted;
    if (o.status != DefendedOutcome::Status::Rejected) break;
  }
  return total;
}

DefenseReport evaluate_defense(const DefensePolicy& policy, const Attack& attack,
                               const CampaignContext& ctx, std::uint64_t seed) {
  policy.validate();
  // Reuse the campaign's ordering and protocol checks for the baseline arm.
  CampaignContext base_ctx{ctx.params, ctx.trace, attack.profile, ctx.inputs, seed, ctx.options};
  base_ctx.options.armed = attack.armed;
  const ConfigResult baseline = run_config(base_ctx, attack.glitch);

  std::vector<const CampaignInput*> by_id;
  for (const CampaignInput& in : ctx.inputs) by_id.push_back(&in);

  DefenseReport rep;
  rep.policy = policy.name();
  rep.trials = baseline.trials.size();
  std::size_t defended_faults = 0, flagged = 0, defended_resets = 0;
  std::int64_t defended_cost = 0;
  const std::int64_t base_cost = inference_cycles(ctx.trace);
  for (const TrialRecord& t : baseline.trials) {
    const auto it = std::find_if(by_id.begin(), by_id.end(), [&t](const CampaignInput* in) {
      return in->input_id == t.input_id && in->true_class == t.true_class;
    });
    const DefendedOutcome o = defended_predict(policy, ctx.params, (*it)->features, ctx.trace, attack, t.seed);
    defended_cost += o.cost_cycles;
    switch (o.status) {
      case DefendedOutcome::Status::Accepted:
        if (o.predicted != t.true_class) ++defended_faults;
        break;
      case DefendedOutcome::Status::Rejected: ++flagged; break;
      case DefendedOutcome::Status::ResetOrHang: ++defended_resets; break;
    }
  }
  const auto n = static_cast<double>(rep.trials);
  rep.baseline_fault_rate = static_cast<double>(baseline.fault_count) / n;
  rep.baseline_reset_rate = static_cast<double>(baseline.reset_count) / n;
  rep.defended_fault_rate = static_cast<double>(defended_faults) / n;
  rep.flagged_rate = static_cast<double>(flagged) / n;
  rep.defended_reset_rate = static_cast<double>(defended_resets) / n;
  rep.overhead_factor = static_cast<double>(defended_cost) / (static_cast<double>(base_cost) * n);
  return rep;
}

void write_defense_csv(std::ostream& out, std::span<const DefenseReport> reports) {
  out << "policy,baseline_rate,defended_rate,flagged_rate,overhead\n";
  for (const DefenseReport& r : reports) {
    out << r.policy << ',' << format_fixed(r.baseline_fault_rate, 6) << ','
        << format_fixed(r.defended_fault_rate, 6) << ',' << format_fixed(r.flagged_rate, 6) << ','
        << format_fixed(r.overhead_factor, 6) << '\n';
  }
}

}  // namespace glitchsim
