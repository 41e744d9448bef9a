#include "glitchsim/analysis.hpp"

#include <ostream>

#include <boost/math/distributions/chi_squared.hpp>

#include "glitchsim/errors.hpp"
#include "glitchsim/text.hpp"

namespace glitchsim {

int hamming(std::string_view a, std::string_view b) {
  // bits_to_class validates length and alphabet.
  const int x = bits_to_class(a) ^ bits_to_class(b);
  int h = 0;
  for (std::size_t q = 0; q < kNumQubits; ++q) h += (x >> q) & 1;
  return h;
}

BitFlipStats bit_flip_stats(std::span<const TrialRecord> log) {
  if (log.empty()) throw InputError("bit flip statistics of an empty log");
  BitFlipStats s;
  s.n_trials = log.size();
  std::size_t hamming_sum = 0;
  for (const TrialRecord& t : log) {
    if (t.status == TrialStatus::ResetOrHang) {
      ++s.n_reset;
      continue;
    }
    const int h = t.hamming.value_or(0);
    ++s.hamming_histogram[static_cast<std::size_t>(h)];
    hamming_sum += static_cast<std::size_t>(h);
    if (t.bit_flips) {
      for (std::size_t b = 0; b < kNumQubits; ++b) s.flip_counts[b] += (*t.bit_flips)[b] ? 1 : 0;
    }
  }
  const std::size_t completed = s.n_trials - s.n_reset;
  if (completed > 0) {
    std::array<double, kNumQubits> rates{};
    for (std::size_t b = 0; b < kNumQubits; ++b) {
      rates[b] = static_cast<double>(s.flip_counts[b]) / static_cast<double>(completed);
    }
    s.per_bit_flip_rate = rates;
    s.mean_hamming = static_cast<double>(hamming_sum) / static_cast<double>(completed);
  }
  return s;
}

std::optional<ChiSquare> flip_uniformity_test(const BitFlipStats& stats) {
  std::size_t total = 0;
  for (std::size_t c : stats.flip_counts) total += c;
  if (total == 0) return std::nullopt;
  const double expected = static_cast<double>(total) / static_cast<double>(kNumQubits);
  ChiSquare r;
  r.dof = static_cast<int>(kNumQubits) - 1;
  for (std::size_t c : stats.flip_counts) {
    const double diff = static_cast<double>(c) - expected;
    r.statistic += diff * diff / expected;
  }
  const boost::math::chi_squared dist(r.dof);
  r.p_value = boost::math::cdf(boost::math::complement(dist, r.statistic));
  return r;
}

ClassHistogram class_histogram(std::span<const TrialRecord> log, std::optional<int> true_class_filter) {
  ClassHistogram h;
  for (const TrialRecord& t : log) {
    if (true_class_filter && t.true_class != *true_class_filter) continue;
    ++h.n_trials;
    if (t.status == TrialStatus::ResetOrHang) {
      ++h.resets;
    } else {
      ++h.counts[static_cast<std::size_t>(t.predicted)];
      ++h.counted;
    }
  }
  return h;
}

std::vector<TableRow> top_k_table(const SearchReport& report, std::size_t k) {
  if (k < 1) throw InputError("k must be at least 1");
  std::vector<TableRow> rows;
  for (std::size_t i = 0; i < std::min(k, report.top_k.size()); ++i) {
    const Evaluation& e = report.top_k[i];
    rows.push_back(TableRow{i + 1, e.glitch.width, e.glitch.offset, e.glitch.external_offset,
                            e.glitch.repeat, e.fault_count, e.reset_count, e.score});
  }
  return rows;
}

void write_table_csv(std::ostream& out, std::span<const TableRow> rows) {
  out << "configuration,width,offset,external_offset,repeats,faults\n";
  for (const TableRow& r : rows) {
    out << r.rank << ',' << r.width << ',' << r.offset << ',' << r.external_offset << ',' << r.repeats
        << ',' << r.faults << '\n';
  }
}

void write_ranking_csv(std::ostream& out, std::span<const TableRow> rows) {
  out << "rank,width,offset,external_offset,repeats,faults,resets,score\n";
  for (const TableRow& r : rows) {
    out << r.rank << ',' << r.width << ',' << r.offset << ',' << r.external_offset << ',' << r.repeats
        << ',' << r.faults << ',' << r.resets << ',' << format_fixed(r.score, 6) << '\n';
  }
}

void write_histogram_csv(std::ostream& out, const ClassHistogram& hist) {
  out << "class,count\n";
  for (std::size_t k = 0; k < kNumClasses; ++k) out << k << ',' << hist.counts[k] << '\n';
}

void write_bitflips_csv(std::ostream& out, const BitFlipStats& stats) {
  out << "bit,rate\n";
  for (std::size_t b = 0; b < kNumQubits; ++b) {
    out << b << ',';
    if (stats.per_bit_flip_rate) out << format_double((*stats.per_bit_flip_rate)[b]);
    out << '\n';
  }
}

}  // namespace glitchsim
