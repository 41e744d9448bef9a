#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "glitchsim/campaign.hpp"
#include "glitchsim/search.hpp"

namespace glitchsim {

/// Number of differing positions between two 5-bit strings.
int hamming(std::string_view a, std::string_view b);

struct BitFlipStats {
  // Left-to-right bit order; empty when every trial reset.
  std::optional<std::array<double, kNumQubits>> per_bit_flip_rate;
  std::array<std::size_t, kNumQubits> flip_counts{};
  std::optional<double> mean_hamming;
  std::array<std::size_t, kNumQubits + 1> hamming_histogram{};
  std::size_t n_reset = 0;
  std::size_t n_trials = 0;
};

BitFlipStats bit_flip_stats(std::span<const TrialRecord> log);

struct ChiSquare {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
};

/// Pearson test of the per-bit flip counts against a uniform split across
/// the five bit positions. Empty when no bit flipped.
std::optional<ChiSquare> flip_uniformity_test(const BitFlipStats& stats);

struct ClassHistogram {
  std::array<std::size_t, kNumClasses> counts{};
  std::size_t counted = 0;   // classified trials (sum of counts)
  std::size_t resets = 0;
  std::size_t n_trials = 0;  // counted + resets
};

ClassHistogram class_histogram(std::span<const TrialRecord> log, std::optional<int> true_class_filter);

struct TableRow {
  std::size_t rank = 0;
  int width = 0;
  int offset = 0;
  std::int64_t external_offset = 0;
  int repeats = 0;
  std::size_t faults = 0;
  std::size_t resets = 0;
  double score = 0.0;
};

std::vector<TableRow> top_k_table(const SearchReport& report, std::size_t k);

// configuration,width,offset,external_offset,repeats,faults
void write_table_csv(std::ostream& out, std::span<const TableRow> rows);
// rank,width,offset,external_offset,repeats,faults,resets,score
void write_ranking_csv(std::ostream& out, std::span<const TableRow> rows);
// class,count
void write_histogram_csv(std::ostream& out, const ClassHistogram& hist);
// bit,rate (rates empty when every trial reset)
void write_bitflips_csv(std::ostream& out, const BitFlipStats& stats);

}  // namespace glitchsim
