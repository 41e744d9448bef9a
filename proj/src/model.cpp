#include "glitchsim/model.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "glitchsim/errors.hpp"
#include "glitchsim/rng.hpp"
#include "glitchsim/text.hpp"

namespace glitchsim {

namespace {

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// acc = 0; acc += w[i] * x[i] for each i; acc += b. The fault engine replays
// exactly this order, so clean and NoEffect runs agree bitwise.
Vector dense(const Matrix& w, const Vector& b, std::span<const double> x) {
  Vector z(w.rows());
  for (std::size_t j = 0; j < w.rows(); ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < w.cols(); ++i) acc += w(j, i) * x[i];
    acc += b[j];
    z[j] = acc;
  }
  return z;
}

Vector relu(const Vector& z) {
  Vector a(z.size());
  for (std::size_t j = 0; j < z.size(); ++j) a[j] = std::max(0.0, z[j]);
  return a;
}

}  // namespace

void Dims::validate() const {
  if (d == 0 || h1 == 0 || h2 == 0) throw InputError("model dimensions must be positive");
}

ModelParams ModelParams::zeros(const Dims& dims) {
  dims.validate();
  ModelParams p;
  p.dims = dims;
  p.w1 = Matrix(dims.h1, dims.d);
  p.b1.assign(dims.h1, 0.0);
  p.w2 = Matrix(dims.h2, dims.h1);
  p.b2.assign(dims.h2, 0.0);
  p.wo = Matrix(Dims::c, dims.h2);
  p.bo.assign(Dims::c, 0.0);
  return p;
}

void ModelParams::validate() const {
  dims.validate();
  const bool shapes_ok = w1.rows() == dims.h1 && w1.cols() == dims.d && b1.size() == dims.h1 &&
                         w2.rows() == dims.h2 && w2.cols() == dims.h1 && b2.size() == dims.h2 &&
                         wo.rows() == Dims::c && wo.cols() == dims.h2 && bo.size() == Dims::c;
  if (!shapes_ok) throw InputError("model parameter shapes are inconsistent with dims");
  if (!all_finite(w1.data()) || !all_finite(b1) || !all_finite(w2.data()) || !all_finite(b2) ||
      !all_finite(wo.data()) || !all_finite(bo)) {
    throw InputError("model parameters contain non-finite values");
  }
}

Vector softmax(std::span<const double> z) {
  if (z.empty()) throw InputError("softmax of an empty vector");
  if (!all_finite(z)) throw InputError("softmax input contains non-finite values");
  const double m = *std::max_element(z.begin(), z.end());
  Vector p(z.size());
  double sum = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    p[j] = std::exp(z[j] - m);
    sum += p[j];
  }
  for (double& v : p) v = v / sum;
  return p;
}

int argmax(std::span<const double> v) {
  int best = 0;
  for (std::size_t j = 1; j < v.size(); ++j) {
    if (v[j] > v[static_cast<std::size_t>(best)]) best = static_cast<int>(j);
  }
  return best;
}

std::string predict_bits(int class_index) {
  if (class_index < 0 || class_index >= static_cast<int>(kNumClasses)) {
    throw InputError("class index out of range: " + std::to_string(class_index));
  }
  std::string bits(kNumQubits, '0');
  for (std::size_t q = 0; q < kNumQubits; ++q) {
    if ((class_index >> q) & 1) bits[kNumQubits - 1 - q] = '1';
  }
  return bits;
}

int bits_to_class(std::string_view bits) {
  if (bits.size() != kNumQubits) throw InputError("bitstring must have 5 characters");
  int k = 0;
  for (char ch : bits) {
    if (ch != '0' && ch != '1') throw InputError("bitstring must contain only 0 and 1");
    k = (k << 1) | (ch == '1' ? 1 : 0);
  }
  return k;
}

ForwardResult forward(const ModelParams& params, std::span<const double> x) {
  if (x.size() != params.dims.d) {
    throw InputError("input length " + std::to_string(x.size()) + " does not match d=" +
                     std::to_string(params.dims.d));
  }
  ForwardResult r;
  r.z1 = dense(params.w1, params.b1, x);
  r.a1 = relu(r.z1);
  r.z2 = dense(params.w2, params.b2, r.a1);
  r.a2 = relu(r.z2);
  r.zo = dense(params.wo, params.bo, r.a2);
  r.probs = softmax(r.zo);
  r.predicted_class = argmax(r.probs);
  r.predicted_bits = predict_bits(r.predicted_class);
  return r;
}

ModelParams init_params(const Dims& dims, std::uint64_t seed) {
  ModelParams p = ModelParams::zeros(dims);
  Rng rng(hash_words({seed, 0x1a17ULL}));
  auto fill = [&rng](Matrix& w) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(w.cols()));
    for (double& v : w.data()) v = rng.normal(0.0, stddev);
  };
  fill(p.w1);
  fill(p.w2);
  fill(p.wo);
  return p;
}

ModelParams train(std::span<const Sample> data, const TrainSettings& settings, std::uint64_t seed) {
  if (data.empty()) throw TrainingError("training set is empty");
  const std::size_t d = data.front().features.size();
  std::array<bool, kNumClasses> seen{};
  for (const Sample& s : data) {
    if (s.features.size() != d) throw TrainingError("inconsistent feature lengths in training set");
    if (s.true_class < 0 || s.true_class >= static_cast<int>(kNumClasses)) {
      throw TrainingError("label out of range: " + std::to_string(s.true_class));
    }
    seen[static_cast<std::size_t>(s.true_class)] = true;
  }
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    if (!seen[k]) throw TrainingError("training set is missing class " + std::to_string(k));
  }
  if (settings.batch_size == 0 || settings.learning_rate <= 0.0 || settings.epochs < 0) {
    throw TrainingError("invalid training settings");
  }

  const Dims dims{d, settings.h1, settings.h2};
  ModelParams p = init_params(dims, seed);
  Rng rng(hash_words({seed, 0x5f1eULL}));

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  ModelParams grad = ModelParams::zeros(dims);
  Vector dzo(Dims::c), da2(dims.h2), dz2(dims.h2), da1(dims.h1), dz1(dims.h1);

  for (int epoch = 0; epoch < settings.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (std::size_t start = 0; start < order.size(); start += settings.batch_size) {
      const std::size_t stop = std::min(order.size(), start + settings.batch_size);
      grad = ModelParams::zeros(dims);
      for (std::size_t n = start; n < stop; ++n) {
        const Sample& s = data[order[n]];
        const ForwardResult f = forward(p, s.features);

        for (std::size_t k = 0; k < Dims::c; ++k) dzo[k] = f.probs[k];
        dzo[static_cast<std::size_t>(s.true_class)] -= 1.0;

        std::fill(da2.begin(), da2.end(), 0.0);
        for (std::size_t k = 0; k < Dims::c; ++k) {
          for (std::size_t j = 0; j < dims.h2; ++j) {
            grad.wo(k, j) += dzo[k] * f.a2[j];
            da2[j] += p.wo(k, j) * dzo[k];
          }
          grad.bo[k] += dzo[k];
        }
        for (std::size_t j = 0; j < dims.h2; ++j) dz2[j] = f.z2[j] > 0.0 ? da2[j] : 0.0;

        std::fill(da1.begin(), da1.end(), 0.0);
        for (std::size_t j = 0; j < dims.h2; ++j) {
          for (std::size_t i = 0; i < dims.h1; ++i) {
            grad.w2(j, i) += dz2[j] * f.a1[i];
            da1[i] += p.w2(j, i) * dz2[j];
          }
          grad.b2[j] += dz2[j];
        }
        for (std::size_t i = 0; i < dims.h1; ++i) dz1[i] = f.z1[i] > 0.0 ? da1[i] : 0.0;

        for (std::size_t i = 0; i < dims.h1; ++i) {
          for (std::size_t c = 0; c < d; ++c) grad.w1(i, c) += dz1[i] * s.features[c];
          grad.b1[i] += dz1[i];
        }
      }

      const double step = settings.learning_rate / static_cast<double>(stop - start);
      auto apply = [step](std::span<double> w, std::span<const double> g) {
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= step * g[i];
      };
      apply(p.w1.data(), grad.w1.data());
      apply(p.b1, grad.b1);
      apply(p.w2.data(), grad.w2.data());
      apply(p.b2, grad.b2);
      apply(p.wo.data(), grad.wo.data());
      apply(p.bo, grad.bo);
    }
  }
  p.validate();
  return p;
}

double accuracy(const ModelParams& params, std::span<const Sample> data) {
  if (data.empty()) return 0.0;
  std::size_t correct = 0;
  for (const Sample& s : data) {
    if (forward(params, s.features).predicted_class == s.true_class) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

void save_weights(std::ostream& out, const ModelParams& params) {
  params.validate();
  const Dims& d = params.dims;
  out << "MLPv1 " << d.d << ' ' << d.h1 << ' ' << d.h2 << ' ' << Dims::c << '\n';
  auto emit = [&out](std::span<const double> values, std::size_t per_line) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      out << format_double(values[i]) << ((i + 1) % per_line == 0 ? '\n' : ' ');
    }
    if (values.size() % per_line != 0) out << '\n';
  };
  emit(params.w1.data(), d.d);
  emit(params.b1, params.b1.size());
  emit(params.w2.data(), d.h1);
  emit(params.b2, params.b2.size());
  emit(params.wo.data(), d.h2);
  emit(params.bo, params.bo.size());
}

ModelParams load_weights(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw InputError("weights file is empty");
  std::istringstream hs(header);
  std::string magic;
  long long d = 0, h1 = 0, h2 = 0, c = 0;
  if (!(hs >> magic >> d >> h1 >> h2 >> c) || magic != "MLPv1") {
    throw InputError("weights header must be `MLPv1 d h1 h2 32`");
  }
  std::string extra;
  if (hs >> extra) throw InputError("unexpected trailing tokens in weights header");
  if (c != static_cast<long long>(Dims::c)) throw InputError("weights must have 32 output classes");
  if (d <= 0 || h1 <= 0 || h2 <= 0) throw InputError("weights dimensions must be positive");

  ModelParams p = ModelParams::zeros(Dims{static_cast<std::size_t>(d), static_cast<std::size_t>(h1),
                                          static_cast<std::size_t>(h2)});
  std::vector<double> values;
  std::string token;
  while (in >> token) {
    double v = 0.0;
    auto [end, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
    if (ec != std::errc{} || end != token.data() + token.size()) {
      throw InputError("weights file contains a non-numeric token: " + token);
    }
    values.push_back(v);
  }
  const std::size_t expected = p.w1.data().size() + p.b1.size() + p.w2.data().size() + p.b2.size() +
                               p.wo.data().size() + p.bo.size();
  if (values.size() != expected) {
    throw InputError("weights file has " + std::to_string(values.size()) + " values, expected " +
                     std::to_string(expected));
  }
  auto it = values.begin();
  auto take = [&it](std::span<double> dst) {
    std::copy(it, it + static_cast<std::ptrdiff_t>(dst.size()), dst.begin());
    it += static_cast<std::ptrdiff_t>(dst.size());
  };
  take(p.w1.data());
  take(p.b1);
  take(p.w2.data());
  take(p.b2);
  take(p.wo.data());
  take(p.bo);
  p.validate();
  return p;
}

}  // namespace glitchsim
