#include "glitchsim/dataset.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include "glitchsim/errors.hpp"
#include "glitchsim/rng.hpp"
#include "glitchsim/text.hpp"

namespace glitchsim {

namespace {

std::size_t features_per_qubit(const GenConfig& c) { return c.d / kNumQubits; }

std::size_t test_count(const GenConfig& c) {
  const auto n = c.samples_per_class;
  auto t = static_cast<std::size_t>(std::llround(c.test_fraction * static_cast<double>(n)));
  if (t < 1) t = 1;
  if (t > n - 1) t = n - 1;
  return t;
}

}  // namespace

void GenConfig::validate() const {
  if (d == 0 || d % kNumQubits != 0) throw InputError("feature dimension must be a positive multiple of 5");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw InputError("noise_sigma must be >= 0");
  if (!(bit1_flip_prob >= 0.0 && bit1_flip_prob <= 1.0)) throw InputError("bit1_flip_prob must be in [0,1]");
  if (!std::isfinite(centroid_scale)) throw InputError("centroid_scale must be finite");
  if (samples_per_class < 2) throw InputError("samples_per_class must be at least 2 for a train/test split");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw InputError("test_fraction must be in (0,1)");
}

Vector centroid(int class_index, const GenConfig& config) {
  if (class_index < 0 || class_index >= static_cast<int>(kNumClasses)) {
    throw InputError("class index out of range: " + std::to_string(class_index));
  }
  config.validate();
  const std::size_t per = features_per_qubit(config);
  Vector x(config.d);
  for (std::size_t q = 0; q < kNumQubits; ++q) {
    const double v = ((class_index >> q) & 1) ? config.centroid_scale : -config.centroid_scale;
    for (std::size_t f = 0; f < per; ++f) x[q * per + f] = v;
  }
  return x;
}

Dataset generate(const GenConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(hash_words({seed, 0xda7aULL}));
  const std::size_t per = features_per_qubit(config);
  const std::size_t n_test = test_count(config);
  Dataset ds;
  ds.records.reserve(kNumClasses * config.samples_per_class);
  for (int k = 0; k < static_cast<int>(kNumClasses); ++k) {
    const Vector base = centroid(k, config);
    for (std::size_t n = 0; n < config.samples_per_class; ++n) {
      Record r;
      r.true_class = k;
      r.features = base;
      // Draw the flip decision unconditionally to keep the stream layout fixed.
      const bool flip_bit1 = rng.uniform() < config.bit1_flip_prob;
      if (flip_bit1) {
        for (std::size_t f = 0; f < per; ++f) r.features[per + f] = -r.features[per + f];
      }
      if (config.noise_sigma > 0.0) {
        for (double& v : r.features) v += rng.normal(0.0, config.noise_sigma);
      }
      r.split = n + n_test >= config.samples_per_class ? Split::Test : Split::Train;
      ds.records.push_back(std::move(r));
    }
  }
  return ds;
}

std::vector<Sample> Dataset::samples(Split split) const {
  std::vector<Sample> out;
  for (const Record& r : records) {
    if (r.split == split) out.push_back(Sample{r.true_class, r.features});
  }
  return out;
}

int nearest_centroid(std::span<const double> x, const GenConfig& config) {
  if (x.size() != config.d) throw InputError("input length does not match generator dimension");
  int best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (int k = 0; k < static_cast<int>(kNumClasses); ++k) {
    const Vector c = centroid(k, config);
    double dist = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) dist += (x[i] - c[i]) * (x[i] - c[i]);
    if (dist < best_dist) {
      best_dist = dist;
      best = k;
    }
  }
  return best;
}

void write_samples_csv(std::ostream& out, std::span<const Sample> samples) {
  if (samples.empty()) throw InputError("no samples to write");
  const std::size_t d = samples.front().features.size();
  out << "class";
  for (std::size_t i = 0; i < d; ++i) out << ",f" << i;
  out << '\n';
  for (const Sample& s : samples) {
    out << s.true_class;
    for (double v : s.features) out << ',' << format_double(v);
    out << '\n';
  }
}

std::vector<Sample> read_samples_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InputError("dataset CSV is empty");
  std::size_t d = 0;
  {
    std::istringstream hs(line);
    std::string cell;
    std::getline(hs, cell, ',');
    if (cell != "class") throw InputError("dataset CSV header must start with `class`");
    while (std::getline(hs, cell, ',')) {
      if (cell != "f" + std::to_string(d)) throw InputError("dataset CSV header column " + cell);
      ++d;
    }
  }
  if (d == 0) throw InputError("dataset CSV has no feature columns");
  std::vector<Sample> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> cells;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      const auto next = std::min(line.find(',', pos), line.size());
      double v = 0.0;
      auto [end, ec] = std::from_chars(line.data() + pos, line.data() + next, v);
      if (ec != std::errc{} || end != line.data() + next) {
        throw InputError("dataset CSV line " + std::to_string(line_no) + ": bad number");
      }
      cells.push_back(v);
      pos = next + 1;
    }
    if (cells.size() != d + 1) {
      throw InputError("dataset CSV line " + std::to_string(line_no) + ": wrong column count");
    }
    const double label = cells.front();
    if (label != std::floor(label) || label < 0 || label >= static_cast<double>(kNumClasses)) {
      throw InputError("dataset CSV line " + std::to_string(line_no) + ": class out of range");
    }
    out.push_back(Sample{static_cast<int>(label), Vector(cells.begin() + 1, cells.end())});
  }
  return out;
}

}  // namespace glitchsim
