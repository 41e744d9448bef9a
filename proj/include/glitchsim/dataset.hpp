#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "glitchsim/model.hpp"

namespace glitchsim {

/// Synthetic integrated-IQ readout data. Each qubit owns d/5 consecutive
/// features (I then Q for d = 10) placed at +centroid_scale for bit 1 and
/// -centroid_scale for bit 0, plus isotropic Gaussian noise.
struct GenConfig {
  std::size_t d = 10;
  double centroid_scale = 1.0;
  double noise_sigma = 0.4;
  // Probability that qubit 1's features come from the opposite bit's centroid
  // while the label keeps the true class.
  double bit1_flip_prob = 0.0;
  std::size_t samples_per_class = 200;
  double test_fraction = 0.25;

  // Readout with the noisy bit-1 channel switched on.
  static GenConfig noisy_bit1() {
    GenConfig c;
    c.bit1_flip_prob = 0.25;
    return c;
  }

  void validate() const;
};

enum class Split : std::uint8_t { Train, Test };

struct Record {
  int true_class = 0;
  Vector features;
  Split split = Split::Train;
};

struct Dataset {
  std::vector<Record> records;

  std::vector<Sample> samples(Split split) const;
};

/// Class-major, stratified: every class gets samples_per_class records, the
/// last round(test_fraction * n) of which (at least one, at most n - 1) are test.
Dataset generate(const GenConfig& config, std::uint64_t seed);

Vector centroid(int class_index, const GenConfig& config);

/// Class whose centroid is nearest in Euclidean distance; ties go to the lower class.
int nearest_centroid(std::span<const double> x, const GenConfig& config);

// Header `class,f0,...,f{d-1}`, one row per sample.
void write_samples_csv(std::ostream& out, std::span<const Sample> samples);
std::vector<Sample> read_samples_csv(std::istream& in);

}  // namespace glitchsim
