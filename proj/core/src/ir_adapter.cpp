#include "cdupatch/ir_adapter.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <Eigen/Core>

#include "binary_io.hpp"
#include "cdupatch/adam.hpp"
#include "cdupatch/errors.hpp"
#include "cdupatch/hashing.hpp"

namespace cdupatch {
namespace {

// Flat layout: W1 (64x3) | b1 (64) | W2 (64x64) | b2 (64) | W3 (1x64) | b3 (1), row-major.
constexpr int kIn = AdapterModel::kLayerSizes[0];
constexpr int kH1 = AdapterModel::kLayerSizes[1];
constexpr int kH2 = AdapterModel::kLayerSizes[2];
constexpr int kOut = AdapterModel::kLayerSizes[3];
constexpr std::size_t kW1 = 0;
constexpr std::size_t kB1 = kW1 + kH1 * kIn;
constexpr std::size_t kW2 = kB1 + kH1;
constexpr std::size_t kB2 = kW2 + kH2 * kH1;
constexpr std::size_t kW3 = kB2 + kH2;
constexpr std::size_t kB3 = kW3 + kOut * kH2;
constexpr std::size_t kParamCount = kB3 + kOut;

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const Matrix>;
using MutMap = Eigen::Map<Matrix>;
using ConstVec = Eigen::Map<const Eigen::VectorXd>;
using MutVec = Eigen::Map<Eigen::VectorXd>;

struct Weights {
  ConstMap w1, w2, w3;
  ConstVec b1, b2, b3;
  explicit Weights(std::span<const double> p)
      : w1(p.data() + kW1, kH1, kIn), w2(p.data() + kW2, kH2, kH1), w3(p.data() + kW3, kOut, kH2),
        b1(p.data() + kB1, kH1), b2(p.data() + kB2, kH2), b3(p.data() + kB3, kOut) {}
};

struct BatchForward {
  Matrix z1, a1, z2, a2, out;  // columns are samples
};

BatchForward forward_batch(const Weights& w, const Matrix& x) {
  BatchForward f;
  f.z1 = (w.w1 * x).colwise() + w.b1;
  f.a1 = f.z1.cwiseMax(0.0);
  f.z2 = (w.w2 * f.a1).colwise() + w.b2;
  f.a2 = f.z2.cwiseMax(0.0);
  const Matrix z3 = (w.w3 * f.a2).colwise() + w.b3;
  f.out = z3.unaryExpr([](double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); });
  return f;
}

// Backpropagates d(loss)/d(out) (1 x B). Fills parameter gradients when `grads` is non-empty
// and returns d(loss)/d(x) (3 x B) when `want_input` is set.
Matrix backward_batch(const Weights& w, const Matrix& x, const BatchForward& f, const Matrix& d_out,
                      std::span<double> grads, bool want_input) {
  const Matrix dz3 = d_out.cwiseProduct(f.out.cwiseProduct((1.0 - f.out.array()).matrix()));
  const Matrix dz2 = (w.w3.transpose() * dz3).cwiseProduct((f.z2.array() > 0).cast<double>().matrix());
  const Matrix dz1 = (w.w2.transpose() * dz2).cwiseProduct((f.z1.array() > 0).cast<double>().matrix());
  if (!grads.empty()) {
    MutMap(grads.data() + kW3, kOut, kH2) = dz3 * f.a2.transpose();
    MutVec(grads.data() + kB3, kOut) = dz3.rowwise().sum();
    MutMap(grads.data() + kW2, kH2, kH1) = dz2 * f.a1.transpose();
    MutVec(grads.data() + kB2, kH2) = dz2.rowwise().sum();
    MutMap(grads.data() + kW1, kH1, kIn) = dz1 * x.transpose();
    MutVec(grads.data() + kB1, kH1) = dz1.rowwise().sum();
  }
  if (!want_input) return {};
  return w.w1.transpose() * dz1;
}

Matrix pixels_to_matrix(const Image& rgb) {
  const int n = rgb.height * rgb.width;
  Matrix x(kIn, n);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < kIn; ++c) x(c, i) = rgb.data[std::size_t(i) * 3 + c];
  return x;
}

}  // namespace

void PixelPairSet::validate() const {
  if (inputs.empty()) throw ParameterError("pixel pair set is empty");
  if (inputs.size() != targets.size()) throw ShapeError("pixel pair inputs/targets length mismatch");
}

AdapterModel AdapterModel::initialized(std::uint64_t seed) {
  AdapterModel m;
  m.params_.assign(kParamCount, 0.0);
  std::mt19937_64 rng(seed);
  auto fill = [&](std::size_t offset, int fan_out, int fan_in) {
    const double bound = std::sqrt(6.0 / fan_in);
    std::uniform_real_distribution<double> u(-bound, bound);
    for (int i = 0; i < fan_out * fan_in; ++i) m.params_[offset + i] = u(rng);
  };
  fill(kW1, kH1, kIn);
  fill(kW2, kH2, kH1);
  fill(kW3, kOut, kH2);
  return m;
}

AdapterModel AdapterModel::from_parameters(std::vector<double> params) {
  if (params.size() != kParamCount) throw ShapeError("adapter parameter count mismatch");
  AdapterModel m;
  m.params_ = std::move(params);
  return m;
}

std::size_t AdapterModel::parameter_count() { return kParamCount; }

double AdapterModel::predict(const Rgb& rgb) const {
  Rgb unused;
  return predict_with_gradient(rgb, unused);
}

double AdapterModel::predict_with_gradient(const Rgb& rgb, Rgb& grad) const {
  const Weights w(params_);
  Matrix x(kIn, 1);
  for (int c = 0; c < kIn; ++c) x(c, 0) = rgb[c];
  const BatchForward f = forward_batch(w, x);
  const Matrix g = backward_batch(w, x, f, Matrix::Ones(1, 1), {}, true);
  for (int c = 0; c < kIn; ++c) grad[c] = g(c, 0);
  return f.out(0, 0);
}

std::uint64_t AdapterModel::checksum() const { return fnv1a_values(std::span<const double>(params_)); }

PixelPairSet sample_pixel_pairs(std::span<const ImagePair> pairs, int n, std::uint64_t seed) {
  if (pairs.empty()) throw ParameterError("sample_pixel_pairs: no image pairs given");
  if (n <= 0) throw ParameterError("sample_pixel_pairs: n must be positive");
  std::vector<std::size_t> offsets{0};
  for (const auto& p : pairs) {
    if (!p.visible.same_extent(p.infrared) || p.visible.channels != 3 || p.infrared.channels != 1) {
      throw ShapeError("sample_pixel_pairs: pair '" + p.id + "' is not aligned");
    }
    offsets.push_back(offsets.back() + std::size_t(p.height()) * p.width());
  }
  const std::size_t total = offsets.back();
  if (total == 0) throw ParameterError("sample_pixel_pairs: images have no pixels");

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  PixelPairSet out;
  out.inputs.reserve(n);
  out.targets.reserve(n);
  for (int i = 0; i < n; ++i) {
    const std::size_t flat = pick(rng);
    const auto it = std::upper_bound(offsets.begin(), offsets.end(), flat) - 1;
    const auto& p = pairs[static_cast<std::size_t>(it - offsets.begin())];
    const std::size_t local = flat - *it;
    out.inputs.push_back({p.visible.data[local * 3], p.visible.data[local * 3 + 1],
                          p.visible.data[local * 3 + 2]});
    out.targets.push_back(p.infrared.data[local]);
  }
  return out;
}

double adapter_mse(const AdapterModel& model, const PixelPairSet& pairs) {
  pairs.validate();
  const Weights w(model.parameters());
  const std::size_t n = pairs.size();
  Matrix x(kIn, n);
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < kIn; ++c) x(c, i) = pairs.inputs[i][c];
  const BatchForward f = forward_batch(w, x);
  double sse = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = f.out(0, i) - pairs.targets[i];
    sse += d * d;
  }
  return sse / static_cast<double>(n);
}

AdapterTrainingResult train_adapter(const PixelPairSet& pairs, const AdapterTrainingConfig& cfg) {
  pairs.validate();
  if (cfg.epochs <= 0 || cfg.batch_size <= 0) throw ParameterError("adapter training needs positive epochs and batch size");
  AdapterTrainingResult result{AdapterModel::initialized(cfg.seed), {}};
  Adam adam(kParamCount, {.learning_rate = cfg.learning_rate});
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> grads(kParamCount);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t b = std::min<std::size_t>(cfg.batch_size, order.size() - start);
      Matrix x(kIn, b), y(1, b);
      for (std::size_t i = 0; i < b; ++i) {
        const std::size_t k = order[start + i];
        for (int c = 0; c < kIn; ++c) x(c, i) = pairs.inputs[k][c];
        y(0, i) = pairs.targets[k];
      }
      const Weights w(result.model.parameters());
      const BatchForward f = forward_batch(w, x);
      const Matrix d_out = (2.0 / static_cast<double>(b)) * (f.out - y);
      backward_batch(w, x, f, d_out, grads, false);
      adam.step(result.model.mutable_parameters(), grads);
    }
    const double mse = adapter_mse(result.model, pairs);
    if (!std::isfinite(mse)) {
      throw TrainingError("adapter training diverged at epoch " + std::to_string(epoch), epoch);
    }
    result.loss_history.push_back(mse);
  }
  return result;
}

Image predict_ir(const AdapterModel& model, const Image& rgb) {
  if (rgb.channels != 3) throw ShapeError("predict_ir expects an H x W x 3 image");
  const Weights w(model.parameters());
  const BatchForward f = forward_batch(w, pixels_to_matrix(rgb));
  Image out(rgb.height, rgb.width, 1);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = f.out(0, static_cast<Eigen::Index>(i));
  return out;
}

Image predict_ir_backward(const AdapterModel& model, const Image& rgb, const Image& grad_output) {
  if (rgb.channels != 3) throw ShapeError("predict_ir_backward expects an H x W x 3 image");
  if (grad_output.channels != 1 || !grad_output.same_extent(rgb)) {
    throw ShapeError("predict_ir_backward: gradient shape does not match the output");
  }
  const Weights w(model.parameters());
  const Matrix x = pixels_to_matrix(rgb);
  const BatchForward f = forward_batch(w, x);
  const Matrix d_out = Eigen::Map<const Matrix>(grad_output.data.data(), 1, x.cols());
  const Matrix dx = backward_batch(w, x, f, d_out, {}, true);
  Image grad(rgb.height, rgb.width, 3);
  for (Eigen::Index i = 0; i < x.cols(); ++i)
    for (int c = 0; c < kIn; ++c) grad.data[std::size_t(i) * 3 + c] = dx(c, i);
  return grad;
}

namespace {
constexpr char kMagic[4] = {'C', 'D', 'U', 'A'};
}

void save_adapter(const AdapterModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write adapter file " + path.string());
  out.write(kMagic, 4);
  binary::put<std::uint32_t>(out, AdapterModel::kFileVersion);
  binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(AdapterModel::kLayerSizes.size()));
  for (int s : AdapterModel::kLayerSizes) binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(s));
  const auto p = model.parameters();
  binary::put_doubles(out, std::vector<double>(p.begin(), p.end()));
  if (!out) throw IoError("failed writing adapter file " + path.string());
}

AdapterModel load_adapter(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open adapter file " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMagic)) {
    throw FormatError(path.string() + ": not an adapter file (bad magic)");
  }
  const auto version = binary::get<std::uint32_t>(in, "adapter version");
  if (version != AdapterModel::kFileVersion) {
    throw FormatError(path.string() + ": unsupported adapter version " + std::to_string(version));
  }
  const auto n_layers = binary::get<std::uint32_t>(in, "adapter layer count");
  if (n_layers != AdapterModel::kLayerSizes.size()) {
    throw FormatError(path.string() + ": expected 4 layer sizes, found " + std::to_string(n_layers));
  }
  for (std::size_t i = 0; i < n_layers; ++i) {
    const auto s = binary::get<std::uint32_t>(in, "adapter layer size");
    if (static_cast<int>(s) != AdapterModel::kLayerSizes[i]) {
      throw FormatError(path.string() + ": layer " + std::to_string(i) + " has size " +
                        std::to_string(s) + ", expected " + std::to_string(AdapterModel::kLayerSizes[i]));
    }
  }
  auto params = binary::get_doubles(in, kParamCount, path.string());
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError(path.string() + ": trailing bytes");
  return AdapterModel::from_parameters(std::move(params));
}

}  // namespace cdupatch
