#include "glitchsim/search.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <limits>
#include <set>

#include "glitchsim/errors.hpp"
#include "glitchsim/rng.hpp"

namespace glitchsim {

namespace {

constexpr std::size_t kDims = 4;
using IndexPoint = std::array<std::uint64_t, kDims>;

std::array<const Range*, kDims> ranges_of(const SearchSpace& s) {
  return {&s.width, &s.offset, &s.external_offset, &s.repeat};
}

GlitchConfig to_config(const SearchSpace& s, const IndexPoint& p) {
  GlitchConfig g;
  g.width = static_cast<int>(s.width.value(p[0]));
  g.offset = static_cast<int>(s.offset.value(p[1]));
  g.external_offset = s.external_offset.value(p[2]);
  g.repeat = static_cast<int>(s.repeat.value(p[3]));
  return g;
}

IndexPoint to_index(const SearchSpace& s, const GlitchConfig& g) {
  return {s.width.index(g.width), s.offset.index(g.offset), s.external_offset.index(g.external_offset),
          s.repeat.index(g.repeat)};
}

std::int64_t snap(const Range& r, std::int64_t v) {
  const std::int64_t rel = v - r.min;
  std::int64_t q = rel / r.step;
  if (2 * (rel % r.step) > r.step) ++q;
  return std::min(r.max, r.min + q * r.step);
}

void check_range(const Range& r, std::string_view name, std::int64_t lo, std::int64_t hi) {
  if (r.step <= 0) throw InputError(std::string(name) + ": step must be positive");
  if (r.min > r.max) throw InputError(std::string(name) + ": empty range (min > max)");
  if (r.min < lo || r.max > hi) throw InputError(std::string(name) + ": range outside legal bounds");
  if ((r.min - lo) % r.step != 0 && r.step > 1) {
    throw InputError(std::string(name) + ": min is not on the step lattice");
  }
}

bool better(const Evaluation& a, const Evaluation& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.reset_count != b.reset_count) return a.reset_count < b.reset_count;
  if (a.glitch.external_offset != b.glitch.external_offset) {
    return a.glitch.external_offset < b.glitch.external_offset;
  }
  return a.order < b.order;
}

// Discretized Gaussian Parzen density over one index dimension, mixed with a
// uniform prior.
class ParzenDim {
 public:
  ParzenDim(std::vector<double> centers, std::uint64_t count, double bandwidth, double prior_weight)
      : centers_(std::move(centers)), count_(count), h_(bandwidth), prior_(prior_weight) {}

  double density(double x) const {
    double sum = prior_ / static_cast<double>(count_);
    for (double c : centers_) {
      const double z = (x - c) / h_;
      sum += std::exp(-0.5 * z * z) / (h_ * std::sqrt(2.0 * std::numbers::pi));
    }
    return sum / (prior_ + static_cast<double>(centers_.size()));
  }

  std::uint64_t sample(Rng& rng) const {
    const double total = prior_ + static_cast<double>(centers_.size());
    if (centers_.empty() || rng.uniform() * total < prior_) {
      return static_cast<std::uint64_t>(rng.uniform_int(0, static_cast<std::int64_t>(count_) - 1));
    }
    const auto pick = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(centers_.size()) - 1));
    const double x = std::round(centers_[pick] + rng.normal(0.0, h_));
    return static_cast<std::uint64_t>(std::clamp(x, 0.0, static_cast<double>(count_ - 1)));
  }

 private:
  std::vector<double> centers_;
  std::uint64_t count_;
  double h_;
  double prior_;
};

class Sampler {
 public:
  Sampler(const SearchSpace& space, Strategy strategy, std::size_t budget, std::uint64_t seed,
          const AdaptiveSettings& settings)
      : space_(space), strategy_(strategy), budget_(budget), settings_(settings),
        rng_(hash_words({seed, static_cast<std::uint64_t>(strategy), 0x5ea4c4ULL})) {}

  // Next unseen point, or nullopt when the strategy cannot produce one.
  std::optional<IndexPoint> next(const std::vector<Evaluation>& history) {
    switch (strategy_) {
      case Strategy::Grid: return next_grid();
      case Strategy::Random: return next_unseen([this] { return uniform_point(); });
      case Strategy::Adaptive: return next_adaptive(history);
    }
    return std::nullopt;
  }

  void mark(const IndexPoint& p) { seen_.insert(p); }

 private:
  IndexPoint uniform_point() {
    IndexPoint p{};
    const auto rs = ranges_of(space_);
    for (std::size_t d = 0; d < kDims; ++d) {
      p[d] = static_cast<std::uint64_t>(rng_.uniform_int(0, static_cast<std::int64_t>(rs[d]->count()) - 1));
    }
    return p;
  }

  template <typename Gen>
  std::optional<IndexPoint> next_unseen(Gen gen) {
    for (int attempt = 0; attempt < 256; ++attempt) {
      const IndexPoint p = gen();
      if (!seen_.contains(p)) return p;
    }
    return std::nullopt;
  }

  // Lexicographic enumeration (width outermost, repeat innermost); evenly
  // strided when the grid is larger than the budget.
  std::optional<IndexPoint> next_grid() {
    const std::uint64_t total = space_.size();
    const std::uint64_t n = std::min<std::uint64_t>(total, budget_);
    if (grid_pos_ >= n) return std::nullopt;
    std::uint64_t flat = static_cast<std::uint64_t>(
        (static_cast<long double>(grid_pos_) * static_cast<long double>(total)) / n);
    ++grid_pos_;
    IndexPoint p{};
    const auto rs = ranges_of(space_);
    for (std::size_t d = kDims; d-- > 0;) {
      p[d] = flat % rs[d]->count();
      flat /= rs[d]->count();
    }
    return p;
  }

  std::optional<IndexPoint> next_adaptive(const std::vector<Evaluation>& history) {
    const bool explore = rng_.uniform() < settings_.epsilon;
    if (history.size() < settings_.n_startup || explore) {
      return next_unseen([this] { return uniform_point(); });
    }

    std::vector<double> scores;
    for (const Evaluation& e : history) scores.push_back(e.score);
    std::vector<double> sorted = scores;
    std::sort(sorted.begin(), sorted.end());
    const double lo = sorted.front();
    const double hi = sorted.back();
    if (lo == hi) return next_unseen([this] { return uniform_point(); });
    const std::size_t m = sorted.size();
    const double median = m % 2 == 1 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);

    std::vector<const Evaluation*> good, bad;
    for (const Evaluation& e : history) (e.score > median ? good : bad).push_back(&e);
    if (good.empty()) {
      good.clear();
      bad.clear();
      for (const Evaluation& e : history) (e.score == hi ? good : bad).push_back(&e);
    }

    const auto rs = ranges_of(space_);
    std::vector<ParzenDim> l_dims, g_dims;
    for (std::size_t d = 0; d < kDims; ++d) {
      auto centers = [&](const std::vector<const Evaluation*>& set) {
        std::vector<double> c;
        for (const Evaluation* e : set) c.push_back(static_cast<double>(to_index(space_, e->glitch)[d]));
        return c;
      };
      const double count = static_cast<double>(rs[d]->count());
      auto bandwidth = [&](std::size_t n) {
        return std::max(1.0, settings_.bandwidth_fraction * count /
                                 std::pow(static_cast<double>(std::max<std::size_t>(1, n)), 0.2));
      };
      l_dims.emplace_back(centers(good), rs[d]->count(), bandwidth(good.size()), settings_.prior_weight);
      g_dims.emplace_back(centers(bad), rs[d]->count(), bandwidth(bad.size()), settings_.prior_weight);
    }

    std::optional<IndexPoint> best;
    double best_ratio = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < settings_.n_candidates; ++c) {
      IndexPoint p{};
      for (std::size_t d = 0; d < kDims; ++d) p[d] = l_dims[d].sample(rng_);
      if (seen_.contains(p)) continue;
      double ratio = 0.0;
      for (std::size_t d = 0; d < kDims; ++d) {
        const double x = static_cast<double>(p[d]);
        ratio += std::log(l_dims[d].density(x)) - std::log(g_dims[d].density(x));
      }
      if (ratio > best_ratio) {
        best_ratio = ratio;
        best = p;
      }
    }
    if (best) return best;
    return next_unseen([this] { return uniform_point(); });
  }

  const SearchSpace& space_;
  Strategy strategy_;
  std::size_t budget_;
  AdaptiveSettings settings_;
  Rng rng_;
  std::set<IndexPoint> seen_;
  std::uint64_t grid_pos_ = 0;
};

}  // namespace

SearchSpace SearchSpace::for_window(const CycleWindow& window) {
  SearchSpace s;
  s.external_offset = Range{window.start, window.end, 1};
  return s;
}

SearchSpace SearchSpace::for_trace(const MicroOpTrace& trace) {
  SearchSpace s;
  s.external_offset = Range{0, trace.total_cycles(), 1};
  return s;
}

void SearchSpace::validate() const {
  check_range(width, "width", 0, kGlitchUnitMax);
  check_range(offset, "offset", 0, kGlitchUnitMax);
  if (width.step % kGlitchUnitStep != 0 || offset.step % kGlitchUnitStep != 0 ||
      width.min % kGlitchUnitStep != 0 || offset.min % kGlitchUnitStep != 0) {
    throw InputError("width/offset must stay on the 100-unit lattice");
  }
  check_range(external_offset, "external_offset", 0, std::numeric_limits<std::int64_t>::max() / 2);
  check_range(repeat, "repeat", 1, kRepeatMax);
}

bool SearchSpace::contains(const GlitchConfig& g) const {
  auto in = [](const Range& r, std::int64_t v) {
    return v >= r.min && v <= r.max && (v - r.min) % r.step == 0;
  };
  return in(width, g.width) && in(offset, g.offset) && in(external_offset, g.external_offset) &&
         in(repeat, g.repeat);
}

std::uint64_t SearchSpace::size() const {
  return width.count() * offset.count() * external_offset.count() * repeat.count();
}

Quantized quantize(const RawPoint& point, const SearchSpace& space) {
  space.validate();
  Quantized q;
  auto one = [&q](const Range& r, std::int64_t v, std::string_view name) {
    if (v < r.min || v > r.max) {
      const std::int64_t c = std::clamp(v, r.min, r.max);
      q.warnings.push_back(std::string(name) + " " + std::to_string(v) + " clamped to " + std::to_string(c));
      v = c;
    }
    return snap(r, v);
  };
  q.config.width = static_cast<int>(one(space.width, point.width, "width"));
  q.config.offset = static_cast<int>(one(space.offset, point.offset, "offset"));
  q.config.external_offset = one(space.external_offset, point.external_offset, "external_offset");
  q.config.repeat = static_cast<int>(one(space.repeat, point.repeat, "repeat"));
  return q;
}

void ObjectiveSpec::validate() const {
  if (!std::isfinite(reset_penalty) || reset_penalty < 0.0) {
    throw InputError("reset penalty must be finite and non-negative");
  }
  if (mode == Mode::Targeted && (target_class < 0 || target_class >= static_cast<int>(kNumClasses))) {
    throw InputError("target class out of range");
  }
}

double score(const ConfigResult& result, const ObjectiveSpec& objective) {
  objective.validate();
  if (result.trials.empty()) throw InputError("cannot score an empty campaign");
  double gain = 0.0;
  std::size_t resets = 0;
  for (const TrialRecord& t : result.trials) {
    if (t.status == TrialStatus::ResetOrHang) {
      ++resets;
      continue;
    }
    if (objective.mode == ObjectiveSpec::Mode::Untargeted) {
      gain += static_cast<double>(t.hamming.value_or(0));
    } else if (t.predicted == objective.target_class && t.true_class != objective.target_class) {
      gain += 1.0;
    }
  }
  // split form: all-reset logs score exactly -lambda
  const auto n = static_cast<double>(result.trials.size());
  return gain / n - objective.reset_penalty * (static_cast<double>(resets) / n);
}

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::Random: return "random";
    case Strategy::Grid: return "grid";
    case Strategy::Adaptive: return "adaptive";
  }
  return "?";
}

Strategy parse_strategy(std::string_view name) {
  for (Strategy s : {Strategy::Random, Strategy::Grid, Strategy::Adaptive}) {
    if (to_string(s) == name) return s;
  }
  throw InputError("unknown search strategy: " + std::string(name));
}

std::optional<std::size_t> SearchReport::evaluations_to_first_fault() const {
  for (std::size_t i = 0; i < evaluated.size(); ++i) {
    if (evaluated[i].fault_count > 0) return i + 1;
  }
  return std::nullopt;
}

SearchReport search(const SearchSpace& space, const ObjectiveSpec& objective, std::size_t budget,
                    Strategy strategy, const ConfigEvaluator& evaluate, std::uint64_t seed,
                    const AdaptiveSettings& adaptive) {
  space.validate();
  objective.validate();
  if (budget < 1) throw InputError("search budget must be at least 1");

  Sampler sampler(space, strategy, budget, seed, adaptive);
  SearchReport report;
  while (report.evaluated.size() < budget) {
    const auto point = sampler.next(report.evaluated);
    if (!point) break;
    sampler.mark(*point);
    const GlitchConfig g = to_config(space, *point);
    const ConfigResult r = evaluate(g);
    report.evaluated.push_back(
        Evaluation{g, score(r, objective), r.fault_count, r.reset_count, report.evaluated.size()});
  }
  report.top_k = report.evaluated;
  std::sort(report.top_k.begin(), report.top_k.end(), better);
  return report;
}

SearchReport search(const SearchSpace& space, const ObjectiveSpec& objective, std::size_t budget,
                    Strategy strategy, const CampaignContext& ctx, std::uint64_t seed,
                    const AdaptiveSettings& adaptive) {
  return search(space, objective, budget, strategy,
                [&ctx](const GlitchConfig& g) { return run_config(ctx, g); }, seed, adaptive);
}

}  // namespace glitchsim
