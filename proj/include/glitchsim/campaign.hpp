#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "glitchsim/dataset.hpp"
#include "glitchsim/fault.hpp"
#include "glitchsim/model.hpp"
#include "glitchsim/trace.hpp"

namespace glitchsim {

enum class TrialStatus : std::uint8_t { Correct, Misprediction, ResetOrHang };

std::string_view to_string(TrialStatus status);

using BitFlips = std::array<bool, kNumQubits>;  // left to right, as in predict_bits

struct TrialRecord {
  std::uint64_t trial_index = 0;
  std::int64_t input_id = 0;
  int true_class = 0;
  GlitchConfig glitch;
  TrialStatus status = TrialStatus::Correct;
  int predicted = -1;  // -1 iff ResetOrHang
  std::optional<int> hamming;
  std::optional<BitFlips> bit_flips;
  std::uint64_t seed = 0;

  bool operator==(const TrialRecord&) const = default;
};

struct ConfigResult {
  GlitchConfig glitch;
  std::vector<TrialRecord> trials;
  std::size_t fault_count = 0;
  std::size_t reset_count = 0;

  std::size_t correct_count() const { return trials.size() - fault_count - reset_count; }
};

struct CampaignInput {
  std::int64_t input_id = 0;
  int true_class = 0;
  Vector features;
};

struct CampaignOptions {
  int reps = 3;
  // Per-class protocol: exactly one input per class, trials ordered by (class, rep).
  bool per_class_protocol = true;
  // A disarmed campaign logs the configured glitch but never fires it.
  bool armed = true;
  unsigned jobs = 1;
};

/// Everything a campaign needs besides the glitch. Non-owning.
struct CampaignContext {
  const ModelParams& params;
  const MicroOpTrace& trace;
  const SusceptibilityProfile& profile;
  std::span<const CampaignInput> inputs;
  std::uint64_t campaign_seed = 0;
  CampaignOptions options{};
};

/// trial seed = hash_words({campaign_seed, trial_index}) (SplitMix64 chain, see rng.hpp).
std::uint64_t trial_seed(std::uint64_t campaign_seed, std::uint64_t trial_index);

TrialRecord run_trial(const ModelParams& params, const CampaignInput& input, const MicroOpTrace& trace,
                      const GlitchConfig& glitch, const SusceptibilityProfile& profile,
                      std::uint64_t seed, bool armed = true);

// Fills status, predicted, hamming and bit_flips from a completed/reset run.
void classify_outcome(TrialRecord& record, const std::optional<int>& predicted);

ConfigResult run_config(const CampaignContext& ctx, const GlitchConfig& glitch);

/// One randomly chosen input per class from `samples` (seeded), ids are the
/// sample positions.
std::vector<CampaignInput> select_protocol_inputs(std::span<const Sample> samples, std::uint64_t seed);

std::vector<CampaignInput> as_inputs(std::span<const Sample> samples);

// JSON lines: one TrialRecord per line, then a summary object line.
void write_campaign_log(std::ostream& out, const ConfigResult& result);
std::vector<TrialRecord> read_campaign_log(std::istream& in);

}  // namespace glitchsim
