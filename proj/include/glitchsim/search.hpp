#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "glitchsim/campaign.hpp"
#include "glitchsim/fault.hpp"
#include "glitchsim/trace.hpp"

namespace glitchsim {

struct Range {
  std::int64_t min = 0;
  std::int64_t max = 0;
  std::int64_t step = 1;

  std::uint64_t count() const { return static_cast<std::uint64_t>((max - min) / step) + 1; }
  std::int64_t value(std::uint64_t index) const { return min + static_cast<std::int64_t>(index) * step; }
  std::uint64_t index(std::int64_t value) const { return static_cast<std::uint64_t>((value - min) / step); }
  bool operator==(const Range&) const = default;
};

/// Quantized glitch parameter space. Defaults are the full published
/// search space (external offset up to 118179).
struct SearchSpace {
  Range width{0, kGlitchUnitMax, kGlitchUnitStep};
  Range offset{0, kGlitchUnitMax, kGlitchUnitStep};
  Range external_offset{0, 118179, 1};
  Range repeat{1, kRepeatMax, 1};

  static SearchSpace for_window(const CycleWindow& window);
  static SearchSpace for_trace(const MicroOpTrace& trace);

  void validate() const;
  bool contains(const GlitchConfig& g) const;
  std::uint64_t size() const;
};

struct RawPoint {
  std::int64_t width = 0;
  std::int64_t offset = 0;
  std::int64_t external_offset = 0;
  std::int64_t repeat = 1;
};

struct Quantized {
  GlitchConfig config;
  std::vector<std::string> warnings;  // one per clamped coordinate
};

/// Snaps each coordinate to the nearest step (ties toward the lower value);
/// out-of-range coordinates are clamped and reported in `warnings`.
Quantized quantize(const RawPoint& point, const SearchSpace& space);

struct ObjectiveSpec {
  enum class Mode : std::uint8_t { Untargeted, Targeted };

  Mode mode = Mode::Untargeted;
  int target_class = 0;
  double reset_penalty = 5.0;

  static ObjectiveSpec untargeted(double lambda = 5.0) { return {Mode::Untargeted, 0, lambda}; }
  static ObjectiveSpec targeted(int target, double lambda = 5.0) { return {Mode::Targeted, target, lambda}; }
  void validate() const;
};

/// Untargeted: (sum of Hamming distances over completed trials - lambda * resets) / trials.
/// Targeted(t): (trials steered to t from another class - lambda * resets) / trials.
double score(const ConfigResult& result, const ObjectiveSpec& objective);

enum class Strategy : std::uint8_t { Random, Grid, Adaptive };
std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view name);

struct Evaluation {
  GlitchConfig glitch;
  double score = 0.0;
  std::size_t fault_count = 0;
  std::size_t reset_count = 0;
  std::size_t order = 0;  // 0-based evaluation index

  bool operator==(const Evaluation&) const = default;
};

struct SearchReport {
  std::vector<Evaluation> evaluated;  // in evaluation order
  std::vector<Evaluation> top_k;      // all evaluations, best first

  // 1-based index of the first evaluation with at least one misprediction.
  std::optional<std::size_t> evaluations_to_first_fault() const;
};

/// Density-ratio sampler settings. Past evaluations are split at the score
/// median into good and bad sets; each dimension gets a discretized Parzen
/// density over both; candidates drawn from the good density are ranked by
/// good/bad ratio. With probability epsilon a uniform point is taken instead.
struct AdaptiveSettings {
  std::size_t n_startup = 10;
  std::size_t n_candidates = 24;
  double epsilon = 0.1;
  double prior_weight = 1.0;
  double bandwidth_fraction = 0.1;
};

using ConfigEvaluator = std::function<ConfigResult(const GlitchConfig&)>;

SearchReport search(const SearchSpace& space, const ObjectiveSpec& objective, std::size_t budget,
                    Strategy strategy, const ConfigEvaluator& evaluate, std::uint64_t seed,
                    const AdaptiveSettings& adaptive = {});

SearchReport search(const SearchSpace& space, const ObjectiveSpec& objective, std::size_t budget,
                    Strategy strategy, const CampaignContext& ctx, std::uint64_t seed,
                    const AdaptiveSettings& adaptive = {});

}  // namespace glitchsim
