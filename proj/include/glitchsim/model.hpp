#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace glitchsim {

inline constexpr std::size_t kNumQubits = 5;
inline constexpr std::size_t kNumClasses = 32;

using Vector = std::vector<double>;

// Row-major dense matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct Dims {
  std::size_t d = 10;
  std::size_t h1 = 16;
  std::size_t h2 = 32;
  static constexpr std::size_t c = kNumClasses;

  void validate() const;
  bool operator==(const Dims&) const = default;
};

/// Weights and biases of the five-layer readout network
/// Dense1 -> ReLU1 -> Dense2 -> ReLU2 -> Output(softmax).
struct ModelParams {
  Dims dims;
  Matrix w1;  // h1 x d
  Vector b1;
  Matrix w2;  // h2 x h1
  Vector b2;
  Matrix wo;  // 32 x h2
  Vector bo;

  static ModelParams zeros(const Dims& dims);

  // Throws InputError on inconsistent shapes or non-finite entries.
  void validate() const;
  bool operator==(const ModelParams&) const = default;
};

struct ForwardResult {
  Vector z1, a1, z2, a2, zo;
  Vector probs;
  int predicted_class = 0;
  std::string predicted_bits;
};

ForwardResult forward(const ModelParams& params, std::span<const double> x);

/// Max-subtracted softmax. Rejects non-finite entries.
Vector softmax(std::span<const double> z);

/// Index of the largest entry; ties go to the lowest index.
int argmax(std::span<const double> v);

/// Big-endian 5-bit rendering: qubit 4 is the leftmost character.
std::string predict_bits(int class_index);
int bits_to_class(std::string_view bits);

struct Sample {
  int true_class = 0;
  Vector features;
};

struct TrainSettings {
  std::size_t h1 = 16;
  std::size_t h2 = 32;
  double learning_rate = 0.05;
  int epochs = 40;
  std::size_t batch_size = 32;
};

/// He-normal weights, zero biases; deterministic in seed.
ModelParams init_params(const Dims& dims, std::uint64_t seed);

/// Mini-batch SGD on softmax cross-entropy. Deterministic in (data, settings, seed).
ModelParams train(std::span<const Sample> data, const TrainSettings& settings, std::uint64_t seed);

double accuracy(const ModelParams& params, std::span<const Sample> data);

// "MLPv1" text weights: header `MLPv1 d h1 h2 32`, then w1 b1 w2 b2 wo bo row-major.
void save_weights(std::ostream& out, const ModelParams& params);
ModelParams load_weights(std::istream& in);

}  // namespace glitchsim
