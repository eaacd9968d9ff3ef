#include "cdupatch/data_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "cdupatch/errors.hpp"
#include "cdupatch/png_io.hpp"

namespace fs = std::filesystem;

namespace cdupatch {
namespace {

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint32_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a),    static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b),    static_cast<std::uint32_t>(b >> 32), tag};
  return std::mt19937_64(seq);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * std::generate_canonical<double, 53>(rng);
}

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  h = std::fmod(h, 1.0) * 6.0;
  const int i = static_cast<int>(std::floor(h)) % 6;
  const double f = h - std::floor(h);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

double absorptivity(const std::array<double, 3>& c) { return color_to_absorptivity(c[0], c[1], c[2]); }

std::string format_label_line(const LabeledBox& lb, int w, int h) {
  const auto l = box_to_label(lb.box, w, h);
  char buf[128];
  std::snprintf(buf, sizeof buf, "%d %.9f %.9f %.9f %.9f\n", lb.class_id, l[0], l[1], l[2], l[3]);
  return buf;
}

LabeledBox parse_label_line(const std::string& line, const std::string& file, int line_no, int w, int h) {
  std::istringstream in(line);
  in.imbue(std::locale::classic());
  int cls = 0;
  double cx = 0, cy = 0, bw = 0, bh = 0;
  if (!(in >> cls >> cx >> cy >> bw >> bh)) throw ParseError(file, line_no, "expected 'class cx cy w h'");
  std::string extra;
  if (in >> extra) throw ParseError(file, line_no, "unexpected trailing token '" + extra + "'");
  if (cls < 0) throw ParseError(file, line_no, "negative class id");
  for (double v : {cx, cy, bw, bh})
    if (!(v >= 0.0 && v <= 1.0)) throw ParseError(file, line_no, "normalised value outside [0,1]");
  if (bw <= 0 || bh <= 0) throw ParseError(file, line_no, "box has zero size");
  Box b = label_to_box(cx, cy, bw, bh, w, h);
  b.x1 = std::max(b.x1, 0.0);
  b.y1 = std::max(b.y1, 0.0);
  b.x2 = std::min(b.x2, double(w));
  b.y2 = std::min(b.y2, double(h));
  if (!b.well_ordered()) throw ParseError(file, line_no, "box lies outside the image");
  return {cls, b};
}

// The box a label file write followed by a read would produce.
Box roundtrip_box(const LabeledBox& lb, int w, int h) {
  return parse_label_line(format_label_line(lb, w, h), "<memory>", 1, w, h).box;
}

}  // namespace

// ---------------------------------------------------------------------------------- disk I/O

Box label_to_box(double cx, double cy, double w, double h, int image_w, int image_h) {
  return {(cx - w / 2) * image_w, (cy - h / 2) * image_h, (cx + w / 2) * image_w, (cy + h / 2) * image_h};
}

std::array<double, 4> box_to_label(const Box& box, int image_w, int image_h) {
  return {(box.x1 + box.x2) / 2 / image_w, (box.y1 + box.y2) / 2 / image_h, box.width() / image_w,
          box.height() / image_h};
}

DatasetManifest scan_dataset(const fs::path& root, const std::string& split) {
  const fs::path dir = root / split;
  if (!fs::is_directory(dir)) throw IoError("dataset split directory not found: " + dir.string());
  const std::array<std::pair<const char*, const char*>, 3> parts{
      {{"visible", ".png"}, {"infrared", ".png"}, {"labels", ".txt"}}};
  std::set<std::string> ids;
  for (const auto& [sub, ext] : parts) {
    if (!fs::is_directory(dir / sub)) continue;
    for (const auto& e : fs::directory_iterator(dir / sub))
      if (e.is_regular_file() && e.path().extension() == ext) ids.insert(e.path().stem().string());
  }
  DatasetManifest m{root, split, {ids.begin(), ids.end()}};
  for (const auto& id : m.ids) {
    for (const auto& [sub, ext] : parts) {
      if (!fs::is_regular_file(dir / sub / (id + ext))) {
        throw PairingError(id, std::string("missing ") + sub + " file");
      }
    }
  }
  return m;
}

ImagePair load_pair(const DatasetManifest& manifest, const std::string& id) {
  const fs::path dir = manifest.root / manifest.split;
  ImagePair p;
  p.id = id;
  const fs::path vis = dir / "visible" / (id + ".png"), ir = dir / "infrared" / (id + ".png");
  const fs::path lab = dir / "labels" / (id + ".txt");
  if (!fs::exists(vis)) throw PairingError(id, "missing visible file");
  if (!fs::exists(ir)) throw PairingError(id, "missing infrared file");
  if (!fs::exists(lab)) throw PairingError(id, "missing labels file");
  p.visible = read_png(vis);
  if (p.visible.channels != 3) throw FormatError(vis.string() + ": visible image must be RGB");
  Image raw_ir = read_png(ir);
  if (raw_ir.channels == 3) {
    // Three-channel thermal exports carry the same value in every channel; average them.
    Image one(raw_ir.height, raw_ir.width, 1);
    for (std::size_t i = 0; i < one.size(); ++i)
      one.data[i] = (raw_ir.data[3 * i] + raw_ir.data[3 * i + 1] + raw_ir.data[3 * i + 2]) / 3.0;
    raw_ir = std::move(one);
  }
  p.infrared = std::move(raw_ir);
  if (!p.visible.same_extent(p.infrared)) throw PairingError(id, "visible and infrared sizes differ");

  std::ifstream in(lab);
  if (!in) throw IoError("cannot read " + lab.string());
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    p.boxes.push_back(parse_label_line(line, lab.string(), line_no, p.width(), p.height()));
  }
  return p;
}

Dataset load_dataset(const fs::path& root, const std::string& split) {
  Dataset d{scan_dataset(root, split), {}};
  d.pairs.reserve(d.manifest.ids.size());
  for (const auto& id : d.manifest.ids) d.pairs.push_back(load_pair(d.manifest, id));
  return d;
}

void write_pair(const ImagePair& pair, const fs::path& root, const std::string& split) {
  validate_pair(pair);
  const fs::path dir = root / split;
  std::error_code ec;
  for (const char* sub : {"visible", "infrared", "labels"}) {
    fs::create_directories(dir / sub, ec);
    if (ec) throw IoError("cannot create " + (dir / sub).string() + ": " + ec.message());
  }
  write_png(pair.visible, dir / "visible" / (pair.id + ".png"));
  write_png(pair.infrared, dir / "infrared" / (pair.id + ".png"));
  const fs::path lab = dir / "labels" / (pair.id + ".txt");
  std::ofstream out(lab, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + lab.string());
  for (const auto& lb : pair.boxes) out << format_label_line(lb, pair.width(), pair.height());
  if (!out) throw IoError("failed writing " + lab.string());
}

// ---------------------------------------------------------------------------- multi-scale

namespace {

void validate_multiscale(const MultiscaleConfig& cfg) {
  if (cfg.dilation_factors.empty()) throw ParameterError("at least one dilation factor is required");
  for (double f : cfg.dilation_factors)
    if (!(f >= 1.0)) throw ParameterError("dilation factors must be >= 1");
  if (cfg.output_height < 0 || cfg.output_width < 0) throw ParameterError("output resolution must be non-negative");
  if (!(cfg.min_visible_fraction > 0 && cfg.min_visible_fraction <= 1)) {
    throw ParameterError("min_visible_fraction must lie in (0,1]");
  }
}

ImagePair crop_one(const ImagePair& pair, std::size_t box_index, double factor, const MultiscaleConfig& cfg,
                   std::mt19937_64& rng) {
  const int W = pair.width(), H = pair.height();
  const Box& b = pair.boxes[box_index].box;
  const double ww = std::min(factor * b.width(), double(W));
  const double wh = std::min(factor * b.height(), double(H));
  const double x_lo = std::max(0.0, b.x2 - ww), x_hi = std::min(b.x1, W - ww);
  const double y_lo = std::max(0.0, b.y2 - wh), y_hi = std::min(b.y1, H - wh);
  const double x0 = x_hi > x_lo ? uniform(rng, x_lo, x_hi) : std::clamp(b.x1, 0.0, W - ww);
  const double y0 = y_hi > y_lo ? uniform(rng, y_lo, y_hi) : std::clamp(b.y1, 0.0, H - wh);
  const int oh = cfg.output_height > 0 ? cfg.output_height : H;
  const int ow = cfg.output_width > 0 ? cfg.output_width : W;
  const double kx = ow / ww, ky = oh / wh;

  ImagePair out;
  char suffix[64];
  std::snprintf(suffix, sizeof suffix, "_b%zu_f%g", box_index, factor);
  out.id = pair.id + suffix;
  out.visible = resample_window(pair.visible, x0, y0, ww, wh, oh, ow);
  out.infrared = resample_window(pair.infrared, x0, y0, ww, wh, oh, ow);
  for (std::size_t k = 0; k < pair.boxes.size(); ++k) {
    const Box& s = pair.boxes[k].box;
    Box c{std::max(s.x1, x0), std::max(s.y1, y0), std::min(s.x2, x0 + ww), std::min(s.y2, y0 + wh)};
    if (k != box_index) {
      if (!c.well_ordered() || c.area() < cfg.min_visible_fraction * s.area()) continue;
    }
    Box r{(c.x1 - x0) * kx, (c.y1 - y0) * ky, (c.x2 - x0) * kx, (c.y2 - y0) * ky};
    r.x1 = std::clamp(r.x1, 0.0, double(ow));
    r.x2 = std::clamp(r.x2, 0.0, double(ow));
    r.y1 = std::clamp(r.y1, 0.0, double(oh));
    r.y2 = std::clamp(r.y2, 0.0, double(oh));
    if (r.well_ordered()) out.boxes.push_back({pair.boxes[k].class_id, r});
  }
  return out;
}

}  // namespace

std::vector<ImagePair> multiscale_clip(const ImagePair& pair, const MultiscaleConfig& cfg, std::uint64_t seed) {
  validate_multiscale(cfg);
  validate_pair(pair);
  if (pair.boxes.empty()) throw ParameterError("multiscale_clip needs at least one box");
  std::vector<ImagePair> crops;
  for (std::size_t b = 0; b < pair.boxes.size(); ++b) {
    for (std::size_t f = 0; f < cfg.dilation_factors.size(); ++f) {
      auto rng = stream_rng(seed, b, f, 3);
      crops.push_back(crop_one(pair, b, cfg.dilation_factors[f], cfg, rng));
    }
  }
  return crops;
}

ImagePair random_multiscale_crop(const ImagePair& pair, const MultiscaleConfig& cfg, std::uint64_t seed) {
  validate_multiscale(cfg);
  if (pair.boxes.empty()) return pair;
  auto rng = stream_rng(seed, 0, 0, 4);
  const std::size_t b = rng() % pair.boxes.size();
  const std::size_t f = rng() % cfg.dilation_factors.size();
  return crop_one(pair, b, cfg.dilation_factors[f], cfg, rng);
}

std::vector<ImagePair> make_multiscale_split(std::span<const ImagePair> pairs, const MultiscaleConfig& cfg,
                                             std::uint64_t seed) {
  std::vector<ImagePair> out(pairs.begin(), pairs.end());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].boxes.empty()) continue;
    auto crops = multiscale_clip(pairs[i], cfg, seed + 0x9e3779b97f4a7c15ull * (i + 1));
    std::move(crops.begin(), crops.end(), std::back_inserter(out));
  }
  return out;
}

// ------------------------------------------------------------------------------ synthesis

void SyntheticConfig::validate() const {
  if (image_size < 16) throw ParameterError("synthetic image size must be at least 16");
  if (min_vehicles < 1 || max_vehicles < min_vehicles) throw ParameterError("invalid vehicle count range");
  if (!(min_size_fraction > 0 && min_size_fraction <= max_size_fraction && max_size_fraction <= 0.9)) {
    throw ParameterError("invalid vehicle size range");
  }
  if (!(val_fraction >= 0 && val_fraction < 1)) throw ParameterError("val_fraction must lie in [0,1)");
  if (!(min_absorptivity_contrast >= 0 && min_absorptivity_contrast < 0.5)) {
    throw ParameterError("min_absorptivity_contrast must lie in [0,0.5)");
  }
  if (!(achromatic_probability >= 0 && achromatic_probability <= 1)) {
    throw ParameterError("achromatic_probability must lie in [0,1]");
  }
  if (board_count < 0) throw ParameterError("board_count must be non-negative");
  if (max_distractors < 0) throw ParameterError("max_distractors must be non-negative");
  scene.validate();
  camera.validate();
}

ImagePair synthesize_scene(const SyntheticConfig& cfg, std::uint64_t seed, std::uint64_t index) {
  cfg.validate();
  auto rng = stream_rng(seed, index, 0, 7);
  const int S = cfg.image_size;
  Image rgb(S, S, 3);

  // Muted background: low saturation, mid value, smooth sinusoidal texture plus grain.
  const auto base = hsv_to_rgb(uniform(rng, 0, 1), uniform(rng, 0.05, 0.3), uniform(rng, 0.35, 0.65));
  const double bg_alpha = absorptivity(base);
  struct Wave {
    double kx, ky, phase, amp;
  };
  std::array<Wave, 3> waves;
  for (auto& w : waves) {
    const double ang = uniform(rng, 0, 2 * std::numbers::pi), freq = uniform(rng, 0.05, 0.3);
    w = {freq * std::cos(ang), freq * std::sin(ang), uniform(rng, 0, 2 * std::numbers::pi), uniform(rng, 0.01, 0.04)};
  }
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x) {
      double t = 0;
      for (const auto& w : waves) t += w.amp * std::sin(w.kx * x + w.ky * y + w.phase);
      for (int c = 0; c < 3; ++c) rgb.at(y, x, c) = std::clamp(base[c] + t + uniform(rng, -0.02, 0.02), 0.0, 1.0);
    }

  ImagePair pair;
  char id[32];
  std::snprintf(id, sizeof id, "%06llu", static_cast<unsigned long long>(index));
  pair.id = id;
  const int n = cfg.min_vehicles + static_cast<int>(rng() % std::uint64_t(cfg.max_vehicles - cfg.min_vehicles + 1));
  for (int v = 0; v < n; ++v) {
    const double long_side = std::max(3.0, std::round(uniform(rng, cfg.min_size_fraction, cfg.max_size_fraction) * S));
    const double short_side = std::max(3.0, std::round(long_side * uniform(rng, 0.5, 0.75)));
    const bool horizontal = (rng() & 1u) != 0;
    const int bw = static_cast<int>(horizontal ? long_side : short_side);
    const int bh = static_cast<int>(horizontal ? short_side : long_side);
    bool placed = false;
    Box box;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      const int x1 = static_cast<int>(rng() % std::uint64_t(S - bw + 1));
      const int y1 = static_cast<int>(rng() % std::uint64_t(S - bh + 1));
      box = {double(x1), double(y1), double(x1 + bw), double(y1 + bh)};
      placed = std::none_of(pair.boxes.begin(), pair.boxes.end(), [&](const LabeledBox& o) {
        return box.x1 < o.box.x2 + 1 && o.box.x1 < box.x2 + 1 && box.y1 < o.box.y2 + 1 && o.box.y1 < box.y2 + 1;
      });
    }
    if (!placed) continue;

    std::array<double, 3> color{};
    bool ok = false;
    for (int attempt = 0; attempt < 64 && !ok; ++attempt) {
      if (uniform(rng, 0, 1) < cfg.achromatic_probability) {
        const double g = (rng() & 1u) ? uniform(rng, 0.0, 0.08) : uniform(rng, 0.92, 1.0);
        color = {g, g, g};
      } else {
        color = hsv_to_rgb(uniform(rng, 0, 1), uniform(rng, 0.7, 1.0), uniform(rng, 0.6, 1.0));
      }
      ok = std::abs(absorptivity(color) - bg_alpha) >= cfg.min_absorptivity_contrast;
    }
    if (!ok) {
      // Fall back to whichever extreme contrasts most with the background.
      color = bg_alpha > 0.55 ? std::array<double, 3>{1, 1, 1} : std::array<double, 3>{0, 0, 0};
    }
    for (int y = int(box.y1); y < int(box.y2); ++y)
      for (int x = int(box.x1); x < int(box.x2); ++x)
        for (int c = 0; c < 3; ++c) rgb.at(y, x, c) = std::clamp(color[c] + uniform(rng, -0.015, 0.015), 0.0, 1.0);
    pair.boxes.push_back({0, box});
  }

  // Unlabelled clutter: striped or checkered rectangles the detector has to learn to reject.
  auto clutter_rng = stream_rng(seed, index, 0, 8);
  const int n_clutter = static_cast<int>(clutter_rng() % std::uint64_t(cfg.max_distractors + 1));
  std::vector<Box> occupied;
  for (const auto& lb : pair.boxes) occupied.push_back(lb.box);
  for (int d = 0; d < n_clutter; ++d) {
    const int bw = static_cast<int>(std::max(3.0, std::round(uniform(clutter_rng, cfg.min_size_fraction, cfg.max_size_fraction) * S)));
    const int bh = static_cast<int>(std::max(3.0, std::round(uniform(clutter_rng, cfg.min_size_fraction, cfg.max_size_fraction) * S)));
    Box box;
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      const int x1 = static_cast<int>(clutter_rng() % std::uint64_t(S - bw + 1));
      const int y1 = static_cast<int>(clutter_rng() % std::uint64_t(S - bh + 1));
      box = {double(x1), double(y1), double(x1 + bw), double(y1 + bh)};
      placed = std::none_of(occupied.begin(), occupied.end(), [&](const Box& o) {
        return box.x1 < o.x2 + 1 && o.x1 < box.x2 + 1 && box.y1 < o.y2 + 1 && o.y1 < box.y2 + 1;
      });
    }
    if (!placed) continue;
    occupied.push_back(box);
    const auto a = hsv_to_rgb(uniform(clutter_rng, 0, 1), uniform(clutter_rng, 0.5, 1.0), uniform(clutter_rng, 0.6, 1.0));
    const auto b = hsv_to_rgb(uniform(clutter_rng, 0, 1), uniform(clutter_rng, 0.0, 1.0), uniform(clutter_rng, 0.0, 0.4));
    const int period = 2 + static_cast<int>(clutter_rng() % 3);
    const int kind = static_cast<int>(clutter_rng() % 4);  // 0 rows, 1 columns, 2 diagonal, 3 checker
    for (int y = int(box.y1); y < int(box.y2); ++y)
      for (int x = int(box.x1); x < int(box.x2); ++x) {
        const int u = kind == 0 ? y : kind == 1 ? x : x + y;
        const bool first = kind == 3 ? (x / period + y / period) % 2 == 0 : (u / period) % 2 == 0;
        const auto& c = first ? a : b;
        for (int ch = 0; ch < 3; ++ch) rgb.at(y, x, ch) = c[ch];
      }
  }
  pair.infrared = render_synthetic_ir(rgb, cfg.scene, cfg.camera);
  pair.visible = std::move(rgb);
  return pair;
}

ImagePair synthesize_color_board(const SyntheticConfig& cfg, std::uint64_t seed, std::uint64_t index) {
  cfg.validate();
  auto rng = stream_rng(seed, index, 0, 9);
  const int S = cfg.image_size;
  const int n = std::max(cfg.board_count, 1);
  // Board k is the slice b = k/(n-1) of the RGB cube, with a random channel permutation so
  // every axis is swept across boards.
  const double third = n > 1 ? double(index % std::uint64_t(n)) / (n - 1) : 0.5;
  std::array<int, 3> perm{0, 1, 2};
  std::shuffle(perm.begin(), perm.end(), rng);
  Image rgb(S, S, 3);
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x) {
      const std::array<double, 3> v{double(x) / (S - 1), double(y) / (S - 1), third};
      for (int c = 0; c < 3; ++c) rgb.at(y, x, perm[c]) = v[c];
    }
  ImagePair pair;
  char id[32];
  std::snprintf(id, sizeof id, "board_%03llu", static_cast<unsigned long long>(index));
  pair.id = id;
  pair.infrared = render_synthetic_ir(rgb, cfg.scene, cfg.camera);
  pair.visible = std::move(rgb);
  return pair;
}

namespace {
void quantize_pair(ImagePair& p) {
  for (double& v : p.visible.data) v = quantize_8bit(v);
  for (double& v : p.infrared.data) v = quantize_8bit(v);
  for (auto& lb : p.boxes) lb.box = roundtrip_box(lb, p.width(), p.height());
}
}  // namespace

std::vector<ImagePair> synthesize_scenes(int n_images, const SyntheticConfig& cfg, std::uint64_t seed,
                                         std::uint64_t first_index) {
  if (n_images < 1) throw ParameterError("n_images must be at least 1");
  std::vector<ImagePair> out;
  out.reserve(std::size_t(n_images));
  for (int i = 0; i < n_images; ++i) {
    out.push_back(synthesize_scene(cfg, seed, first_index + std::uint64_t(i)));
    quantize_pair(out.back());
  }
  return out;
}

std::vector<DatasetManifest> gen_synthetic_dataset(int n_images, const SyntheticConfig& cfg, std::uint64_t seed,
                                                   const fs::path& out_root) {
  if (n_images < 1) throw ParameterError("n_images must be at least 1");
  cfg.validate();
  std::error_code ec;
  fs::create_directories(out_root, ec);
  if (ec || !fs::is_directory(out_root)) throw IoError("cannot create dataset root " + out_root.string());
  int n_val = static_cast<int>(std::floor(n_images * cfg.val_fraction + 0.5));
  n_val = std::min(n_val, n_images - 1);
  const int n_train = n_images - n_val;

  std::vector<DatasetManifest> manifests{{out_root, "train", {}}, {out_root, "val", {}}, {out_root, "boards", {}}};
  for (int i = 0; i < n_images; ++i) {
    ImagePair p = synthesize_scene(cfg, seed, std::uint64_t(i));
    auto& m = manifests[i < n_train ? 0 : 1];
    write_pair(p, out_root, m.split);
    m.ids.push_back(p.id);
  }
  for (int k = 0; k < cfg.board_count; ++k) {
    ImagePair b = synthesize_color_board(cfg, seed, std::uint64_t(k));
    write_pair(b, out_root, "boards");
    manifests[2].ids.push_back(b.id);
  }
  // An empty split still gets its directory so that scan_dataset succeeds.
  for (const auto& m : manifests)
    for (const char* sub : {"visible", "infrared", "labels"}) fs::create_directories(out_root / m.split / sub, ec);
  return manifests;
}

}  // namespace cdupatch
