#include "cdupatch/toy_detector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "binary_io.hpp"
#include "cdupatch/adam.hpp"
#include "cdupatch/compositor.hpp"
#include "cdupatch/errors.hpp"
#include "cdupatch/hashing.hpp"

namespace cdupatch {
namespace {

constexpr int kStride = 4;
constexpr double kMaxLogSize = 4.0;
constexpr char kMagic[4] = {'C', 'D', 'U', 'D'};
constexpr std::uint32_t kFileVersion = 1;

std::array<nn::ConvSpec, ToyDetector::kLayers> layer_specs(const ToyDetectorConfig& cfg) {
  const auto& w = cfg.widths;
  return {{
      {cfg.in_channels, w[0], 3, 2, 1, 1},
      {w[0], w[1], 3, 2, 1, 1},
      {w[1], w[2], 3, 1, 2, 2},
      {w[2], w[2], 3, 1, 4, 4},
      {w[2], ToyDetector::kHeadChannels, 1, 1, 0, 1},
  }};
}

void validate_config(const ToyDetectorConfig& cfg) {
  if (cfg.in_channels != 1 && cfg.in_channels != 3) throw ParameterError("toy detector input must have 1 or 3 channels");
  for (int w : cfg.widths)
    if (w < 1) throw ParameterError("toy detector widths must be positive");
  if (!(cfg.leaky_slope >= 0.0 && cfg.leaky_slope < 1.0)) throw ParameterError("leaky slope must lie in [0,1)");
  if (!(cfg.size_reference > 0.0)) throw ParameterError("size reference must be positive");
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double smooth_l1(double d, double* grad) {
  const double a = std::abs(d);
  if (a < 1.0) {
    *grad = d;
    return 0.5 * d * d;
  }
  *grad = d > 0 ? 1.0 : -1.0;
  return a - 0.5;
}

const Image& branch_image(const ImagePair& p, Modality m) { return m == Modality::kVisible ? p.visible : p.infrared; }

// Pastes a random occluder over the placement square of every box, independently per modality:
// either i.i.d. pixel noise or one solid value.
void occlude(ImagePair& pair, double coverage, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (const auto& labeled : pair.boxes) {
    const Box& box = labeled.box;
    const double cap = coverage * (0.5 + 0.5 * unit(rng));
    if (box.width() < 1 || box.height() < 1 || std::floor(std::sqrt(cap * box.area())) < 1) continue;
    const Placement pl = placement_from_bbox(box, cap);
    const bool noise = rng() % 2 == 0;
    for (Image* img : {&pair.visible, &pair.infrared}) {
      std::vector<double> solid(img->channels);
      for (double& v : solid) v = unit(rng);
      for (int y = std::max(0, pl.top); y < std::min(img->height, pl.top + pl.patch_side); ++y)
        for (int x = std::max(0, pl.left); x < std::min(img->width, pl.left + pl.patch_side); ++x)
          for (int ch = 0; ch < img->channels; ++ch) img->at(y, x, ch) = noise ? unit(rng) : solid[ch];
    }
  }
}

}  // namespace

ToyDetector::ToyDetector(const ToyDetectorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  validate_config(cfg_);
  build_layers();
  std::mt19937_64 rng(seed);
  for (const auto& layer : layers_) layer.init(params_, rng);
}

ToyDetector::ToyDetector(const ToyDetectorConfig& cfg, std::vector<double> params) : cfg_(cfg) {
  validate_config(cfg_);
  build_layers();
  if (params.size() != params_.size()) {
    throw ShapeError("toy detector expects " + std::to_string(params_.size()) + " parameters, got " +
                     std::to_string(params.size()));
  }
  params_ = std::move(params);
}

void ToyDetector::build_layers() {
  layers_.clear();
  std::size_t offset = 0;
  for (const auto& spec : layer_specs(cfg_)) {
    layers_.emplace_back(spec, offset);
    offset += spec.param_count();
  }
  params_.assign(offset, 0.0);
}

ToyDetector::Forward ToyDetector::forward(const Image& image) const {
  if (image.channels != cfg_.in_channels) throw ShapeError("toy detector input has the wrong channel count");
  if (image.height < kStride || image.width < kStride) throw ShapeError("toy detector input is too small");
  Forward f;
  f.image_h = image.height;
  f.image_w = image.width;
  f.act[0] = nn::to_feature_map(image);
  for (int i = 0; i < kLayers; ++i) {
    nn::FeatureMap out = layers_[i].forward(params_, f.act[i], f.cols[i]);
    f.pre[i] = out.values;
    if (i + 1 < kLayers) nn::leaky_relu(f.pre[i], out.values, cfg_.leaky_slope);
    f.act[i + 1] = std::move(out);
  }
  return f;
}

RawCandidates ToyDetector::decode(const Forward& f) const {
  const auto& h = f.head();
  const int gh = f.grid_h(), gw = f.grid_w();
  RawCandidates raw;
  raw.boxes.reserve(std::size_t(gh) * gw);
  for (int gy = 0; gy < gh; ++gy) {
    for (int gx = 0; gx < gw; ++gx) {
      const Eigen::Index k = Eigen::Index(gy) * gw + gx;
      const double cx = (gx + 0.5 + h(1, k)) * kStride;
      const double cy = (gy + 0.5 + h(2, k)) * kStride;
      const double w = std::exp(std::clamp(h(3, k), -kMaxLogSize, kMaxLogSize)) * cfg_.size_reference;
      const double hh = std::exp(std::clamp(h(4, k), -kMaxLogSize, kMaxLogSize)) * cfg_.size_reference;
      raw.boxes.push_back({cx - w / 2, cy - hh / 2, cx + w / 2, cy + hh / 2});
      raw.scores.push_back(nn::sigmoid(h(0, k)));
      raw.class_ids.push_back(0);
    }
  }
  return raw;
}

void ToyDetector::backward(const Forward& f, const nn::RowMatrix& grad_head, std::span<double> grad_params,
                           Image* grad_input) const {
  nn::RowMatrix g = grad_head;
  for (int i = kLayers - 1; i >= 0; --i) {
    if (i + 1 < kLayers) nn::leaky_relu_backward(f.pre[i], g, cfg_.leaky_slope);
    const bool need_input = i > 0 || grad_input != nullptr;
    nn::FeatureMap gin;
    layers_[i].backward(params_, f.act[i], f.cols[i], g, grad_params, need_input ? &gin : nullptr);
    if (i == 0) {
      if (grad_input) *grad_input = nn::to_image(gin);
    } else {
      g = std::move(gin.values);
    }
  }
}

Image ToyDetector::score_input_gradient(const Forward& f, std::span<const std::size_t> cells,
                                        std::span<const double> weights) const {
  if (cells.size() != weights.size()) throw ShapeError("score_input_gradient: cells and weights differ in length");
  const auto& h = f.head();
  nn::RowMatrix g = nn::RowMatrix::Zero(kHeadChannels, h.cols());
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const auto c = static_cast<Eigen::Index>(cells[k]);
    if (c >= h.cols()) throw ParameterError("score_input_gradient: cell index out of range");
    const double s = nn::sigmoid(h(0, c));
    g(0, c) += weights[k] * s * (1.0 - s);
  }
  Image grad;
  backward(f, g, {}, &grad);
  return grad;
}

std::uint64_t ToyDetector::checksum() const {
  std::uint64_t hsh = fnv1a_values(std::span<const int>(cfg_.widths));
  const std::array<double, 3> extras{double(cfg_.in_channels), cfg_.leaky_slope, cfg_.size_reference};
  hsh = fnv1a_values(std::span<const double>(extras), hsh);
  return fnv1a_values(std::span<const double>(params_), hsh);
}

RawCandidates DualToyDetector::raw_candidates(const Image& image, Modality branch) const {
  return this->branch(branch).raw_candidates(image);
}

std::uint64_t DualToyDetector::weights_checksum() const {
  const std::array<std::uint64_t, 2> parts{visible_.checksum(), infrared_.checksum()};
  return fnv1a_values(std::span<const std::uint64_t>(parts));
}

const ToyDetector& DualToyDetector::branch(Modality m) const {
  if (m == Modality::kVisible) return visible_;
  if (m == Modality::kInfrared) return infrared_;
  throw ParameterError("a single branch must be visible or infrared");
}

ToyDetector& DualToyDetector::mutable_branch(Modality m) {
  return const_cast<ToyDetector&>(static_cast<const DualToyDetector&>(*this).branch(m));
}

double detector_loss(const ToyDetector& det, const ToyDetector::Forward& f, std::span<const LabeledBox> gt,
                     double box_weight, double positive_target, nn::RowMatrix* grad_head) {
  if (!(positive_target > 0 && positive_target <= 1)) throw ParameterError("positive_target must lie in (0,1]");
  const auto& h = f.head();
  const int gh = f.grid_h(), gw = f.grid_w();
  const std::size_t n = std::size_t(gh) * gw;
  std::vector<int> label(n, 0);  // 0 negative, 1 positive, -1 ignored
  struct Target {
    std::size_t cell;
    std::array<double, 4> t;
  };
  std::vector<Target> targets;
  const double ref = det.config().size_reference;

  auto cell_of = [&](const Box& b) {
    const double cx = 0.5 * (b.x1 + b.x2), cy = 0.5 * (b.y1 + b.y2);
    const int gx = std::clamp(static_cast<int>(std::floor(cx / kStride)), 0, gw - 1);
    const int gy = std::clamp(static_cast<int>(std::floor(cy / kStride)), 0, gh - 1);
    return std::pair{gx, gy};
  };
  for (const auto& lb : gt) {
    const auto [gx, gy] = cell_of(lb.box);
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int x = gx + dx, y = gy + dy;
        if (x < 0 || y < 0 || x >= gw || y >= gh) continue;
        const double ccx = (x + 0.5) * kStride, ccy = (y + 0.5) * kStride;
        if (ccx > lb.box.x1 && ccx < lb.box.x2 && ccy > lb.box.y1 && ccy < lb.box.y2) label[std::size_t(y) * gw + x] = -1;
      }
  }
  for (const auto& lb : gt) {
    const auto [gx, gy] = cell_of(lb.box);
    const std::size_t cell = std::size_t(gy) * gw + gx;
    label[cell] = 1;
    const double cx = 0.5 * (lb.box.x1 + lb.box.x2), cy = 0.5 * (lb.box.y1 + lb.box.y2);
    targets.push_back({cell,
                       {cx / kStride - gx - 0.5, cy / kStride - gy - 0.5, std::log(lb.box.width() / ref),
                        std::log(lb.box.height() / ref)}});
  }
  std::size_t n_pos = 0, n_neg = 0;
  for (int l : label) {
    n_pos += l == 1;
    n_neg += l == 0;
  }
  if (grad_head) grad_head->setZero(ToyDetector::kHeadChannels, Eigen::Index(n));

  double loss = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (label[k] < 0) continue;
    const double z = h(0, Eigen::Index(k));
    if (label[k] == 1) {
      const double y = positive_target;
      loss += (y * softplus(-z) + (1.0 - y) * softplus(z)) / double(n_pos);
      if (grad_head) (*grad_head)(0, Eigen::Index(k)) = (nn::sigmoid(z) - y) / double(n_pos);
    } else {
      loss += softplus(z) / double(n_neg);
      if (grad_head) (*grad_head)(0, Eigen::Index(k)) = nn::sigmoid(z) / double(n_neg);
    }
  }
  // Later boxes win a shared cell, matching the label assignment above.
  std::vector<bool> seen(n, false);
  for (auto it = targets.rbegin(); it != targets.rend(); ++it) {
    if (seen[it->cell]) continue;
    seen[it->cell] = true;
    for (int j = 0; j < 4; ++j) {
      double g = 0.0;
      loss += box_weight * smooth_l1(h(1 + j, Eigen::Index(it->cell)) - it->t[j], &g) / double(n_pos);
      if (grad_head) (*grad_head)(1 + j, Eigen::Index(it->cell)) = box_weight * g / double(n_pos);
    }
  }
  return loss;
}

DetectorHandle make_toy_handle(std::string id, ToyDetector visible, ToyDetector infrared) {
  if (visible.config().in_channels != 3 || infrared.config().in_channels != 1) {
    throw ParameterError("toy handle needs a 3-channel visible branch and a 1-channel infrared branch");
  }
  DetectorHandle h;
  h.id = std::move(id);
  h.differentiable = true;
  h.modality = Modality::kDual;
  h.backend = std::make_shared<DualToyDetector>(std::move(visible), std::move(infrared));
  return h;
}

DetectorTrainingResult train_toy_detector(std::span<const ImagePair> train, std::span<const ImagePair> val,
                                          const DetectorTrainingConfig& cfg) {
  if (cfg.epochs < 1 || cfg.max_epochs < cfg.epochs || cfg.batch_size < 1 || !(cfg.learning_rate > 0)) {
    throw ParameterError("invalid detector training schedule");
  }
  if (!(cfg.positive_target > 0 && cfg.positive_target <= 1)) throw ParameterError("positive_target must lie in (0,1]");
  if (!(cfg.occlusion_probability >= 0 && cfg.occlusion_probability <= 1) ||
      !(cfg.occlusion_coverage > 0 && cfg.occlusion_coverage <= 1)) {
    throw ParameterError("occlusion probability must lie in [0,1] and coverage in (0,1]");
  }
  if (static_cast<int>(train.size()) < cfg.min_train_images) {
    throw ParameterError("detector training needs at least " + std::to_string(cfg.min_train_images) +
                         " images, got " + std::to_string(train.size()));
  }
  if (val.empty()) throw ParameterError("detector training needs a validation split");
  for (const auto& p : train) validate_pair(p);

  ToyDetectorConfig vis_cfg = cfg.architecture, ir_cfg = cfg.architecture;
  vis_cfg.in_channels = 3;
  ir_cfg.in_channels = 1;
  std::array<ToyDetector, 2> nets{ToyDetector(vis_cfg, cfg.variant_seed * 2 + 11),
                                  ToyDetector(ir_cfg, cfg.variant_seed * 2 + 12)};
  const std::array<Modality, 2> mods{Modality::kVisible, Modality::kInfrared};
  std::vector<Adam> opts;
  for (const auto& net : nets) opts.emplace_back(net.parameters().size(), AdamOptions{.learning_rate = cfg.learning_rate});

  std::mt19937_64 rng(cfg.variant_seed ^ 0x5bd1e995ull);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  DetectorTrainingReport report;
  auto make_handle = [&] { return make_toy_handle(cfg.id, nets[0], nets[1]); };

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t b = std::min<std::size_t>(cfg.batch_size, order.size() - start);
      std::vector<ImagePair> batch;
      batch.reserve(b);
      for (std::size_t i = 0; i < b; ++i) {
        const ImagePair& src = train[order[start + i]];
        if (cfg.augmentation_probability > 0 && unit(rng) < cfg.augmentation_probability) {
          batch.push_back(random_multiscale_crop(src, cfg.augmentation, rng()));
        } else {
          batch.push_back(src);
        }
        if (cfg.occlusion_probability > 0 && unit(rng) < cfg.occlusion_probability) {
          occlude(batch.back(), cfg.occlusion_coverage, rng);
        }
      }
      for (int k = 0; k < 2; ++k) {
        std::vector<double> grads(nets[k].parameters().size(), 0.0);
        nn::RowMatrix gh;
        for (const auto& sample : batch) {
          const auto f = nets[k].forward(branch_image(sample, mods[k]));
          const double l = detector_loss(nets[k], f, sample.boxes, cfg.box_weight, cfg.positive_target, &gh);
          if (!std::isfinite(l)) throw TrainingError("detector loss is not finite at epoch " + std::to_string(epoch), epoch);
          epoch_loss += l;
          nets[k].backward(f, gh, grads, nullptr);
        }
        for (double& g : grads) g /= double(b);
        opts[k].step(nets[k].mutable_parameters(), grads);
      }
    }
    report.loss_history.push_back(epoch_loss / double(order.size()));
    report.epochs_run = epoch + 1;
    if (epoch + 1 < cfg.epochs) continue;

    const DetectorHandle handle = make_handle();
    report.recall_visible = detection_recall(handle, val, Modality::kVisible);
    report.recall_infrared = detection_recall(handle, val, Modality::kInfrared);
    if (report.recall_visible >= cfg.recall_target && report.recall_infrared >= cfg.recall_target) {
      report.target_met = true;
      return {handle, report};
    }
  }
  throw TrainingError("detector '" + cfg.id + "' missed the recall target after " + std::to_string(cfg.max_epochs) +
                          " epochs (visible " + std::to_string(report.recall_visible) + ", infrared " +
                          std::to_string(report.recall_infrared) + ")",
                      cfg.max_epochs);
}

void save_detector(const DetectorHandle& handle, const std::filesystem::path& path) {
  const auto dual = std::dynamic_pointer_cast<const DualToyDetector>(handle.backend);
  if (!dual) throw CapabilityError("only toy detectors can be saved");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write detector file " + path.string());
  out.write(kMagic, 4);
  binary::put<std::uint32_t>(out, kFileVersion);
  binary::put_string(out, handle.id);
  for (Modality m : {Modality::kVisible, Modality::kInfrared}) {
    const ToyDetector& det = dual->branch(m);
    const auto& c = det.config();
    binary::put<std::int32_t>(out, c.in_channels);
    for (int w : c.widths) binary::put<std::int32_t>(out, w);
    binary::put<double>(out, c.leaky_slope);
    binary::put<double>(out, c.size_reference);
    const auto p = det.parameters();
    binary::put<std::uint64_t>(out, p.size());
    binary::put_doubles(out, std::vector<double>(p.begin(), p.end()));
  }
  if (!out) throw IoError("failed writing detector file " + path.string());
}

DetectorHandle load_detector(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open detector file " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMagic)) {
    throw FormatError(path.string() + ": not a detector file (bad magic)");
  }
  const auto version = binary::get<std::uint32_t>(in, "detector version");
  if (version != kFileVersion) throw FormatError(path.string() + ": unsupported detector version " + std::to_string(version));
  std::string id = binary::get_string(in, "detector id");
  std::vector<ToyDetector> branches;
  for (int b = 0; b < 2; ++b) {
    ToyDetectorConfig c;
    c.in_channels = binary::get<std::int32_t>(in, "in_channels");
    for (int& w : c.widths) w = binary::get<std::int32_t>(in, "width");
    c.leaky_slope = binary::get<double>(in, "leaky slope");
    c.size_reference = binary::get<double>(in, "size reference");
    const auto n = binary::get<std::uint64_t>(in, "parameter count");
    if (n > (1u << 24)) throw FormatError(path.string() + ": implausible parameter count");
    try {
      branches.emplace_back(c, binary::get_doubles(in, n, path.string()));
    } catch (const ParameterError& e) {
      throw FormatError(path.string() + ": " + e.what());
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError(path.string() + ": trailing bytes");
  try {
    return make_toy_handle(std::move(id), std::move(branches[0]), std::move(branches[1]));
  } catch (const ParameterError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace cdupatch
