#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>

#include "glitchsim/campaign.hpp"
#include "glitchsim/dataset.hpp"
#include "glitchsim/fault.hpp"
#include "glitchsim/model.hpp"
#include "glitchsim/trace.hpp"

namespace glitchsim {

enum class DefenseKind : std::uint8_t {
  MajorityVote,          // redundant inference over `shots` runs
  EntropyCheck,          // reject high-entropy or malformed outputs
  ActivationRangeCheck,  // reject intermediates outside calibrated bounds
  TimingJitter,          // random start delay in [0, max_jitter] cycles
  CrossCheck,            // reject disagreement with a nearest-centroid discriminator
  GlitchMonitor,         // brown-out style detector that flags resets
};

enum class FlagAction : std::uint8_t { Reject, Retry };

using ActivationBounds = std::map<Layer, std::pair<double, double>>;

struct DefensePolicy {
  DefenseKind kind = DefenseKind::MajorityVote;
  int shots = 3;
  double entropy_threshold = 1.0;  // nats
  ActivationBounds bounds;
  std::int64_t max_jitter = 0;
  GenConfig reference{};
  double detection_prob = 1.0;
  FlagAction action = FlagAction::Reject;
  int max_retries = 1;

  static DefensePolicy majority_vote(int shots);
  static DefensePolicy entropy_check(double threshold);
  static DefensePolicy activation_range(ActivationBounds bounds);
  static DefensePolicy timing_jitter(std::int64_t max_jitter);
  static DefensePolicy cross_check(const GenConfig& reference);
  static DefensePolicy glitch_monitor(double detection_prob);

  void validate() const;
  std::string name() const;
};

/// Per-layer [min, max] of each layer's output vector over `samples`, widened
/// on both sides by margin * (max - min).
ActivationBounds calibrate_activation_bounds(const ModelParams& params, std::span<const Sample> samples,
                                             double margin);

/// Entropy (nats) of the output after normalisation; empty when the vector has
/// negative or non-finite entries or sums to zero. Clamped to log(n).
std::optional<double> output_entropy(std::span<const double> probs);

struct Attack {
  GlitchConfig glitch;
  SusceptibilityProfile profile;
  bool armed = true;
};

struct DefendedOutcome {
  enum class Status : std::uint8_t { Accepted, Rejected, ResetOrHang };

  Status status = Status::Accepted;
  int predicted = -1;  // valid when Accepted
  std::size_t inferences = 0;
  std::int64_t cost_cycles = 0;
};

/// The first shot of the first attempt reuses `seed`, so a defended trial sees
/// the same fault as an undefended trial with that seed.
DefendedOutcome defended_predict(const DefensePolicy& policy, const ModelParams& params,
                                 std::span<const double> x, const MicroOpTrace& trace,
                                 const Attack& attack, std::uint64_t seed);

struct DefenseReport {
  std::string policy;
  std::size_t trials = 0;
  double baseline_fault_rate = 0.0;
  double defended_fault_rate = 0.0;
  double flagged_rate = 0.0;
  double baseline_reset_rate = 0.0;
  double defended_reset_rate = 0.0;
  double overhead_factor = 1.0;
};

/// Paired campaign: trial t of both arms uses trial_seed(seed, t). Inputs,
/// reps, model and trace come from `ctx`; the profile comes from `attack`.
DefenseReport evaluate_defense(const DefensePolicy& policy, const Attack& attack,
                               const CampaignContext& ctx, std::uint64_t seed);

// policy,baseline_rate,defended_rate,flagged_rate,overhead
void write_defense_csv(std::ostream& out, std::span<const DefenseReport> reports);

}  // namespace glitchsim
