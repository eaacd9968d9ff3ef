#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cdupatch/image.hpp"
#include "cdupatch/thermal_model.hpp"

namespace cdupatch {

/// Samples of one split on disk:
///   root/split/visible/<id>.png, root/split/infrared/<id>.png, root/split/labels/<id>.txt
struct DatasetManifest {
  std::filesystem::path root;
  std::string split;
  std::vector<std::string> ids;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<ImagePair> pairs;
};

/// Lists the ids of a split (sorted) and checks that every id has all three files.
/// Throws IoError if the split directory is missing, PairingError for an incomplete sample.
DatasetManifest scan_dataset(const std::filesystem::path& root, const std::string& split);

/// Loads one sample. Labels are "class cx cy w h" normalised to [0,1] per line.
ImagePair load_pair(const DatasetManifest& manifest, const std::string& id);

/// scan_dataset followed by load_pair for every id, in manifest order.
Dataset load_dataset(const std::filesystem::path& root, const std::string& split);

/// Normalised centre-format label -> pixel corners (x1 = (cx - w/2) * W, ...).
Box label_to_box(double cx, double cy, double w, double h, int image_w, int image_h);
/// Inverse of label_to_box.
std::array<double, 4> box_to_label(const Box& box, int image_w, int image_h);

/// Writes the three files of one sample into root/split/...
void write_pair(const ImagePair& pair, const std::filesystem::path& root, const std::string& split);

struct MultiscaleConfig {
  std::vector<double> dilation_factors{2.0, 4.0, 8.0};
  int output_height = 0;  // 0 = keep the source height
  int output_width = 0;   // 0 = keep the source width
  /// Other boxes are kept when at least this fraction of their area lies in the window.
  double min_visible_fraction = 0.5;
};

/// For every box and every factor f: a window of f x the box size (capped at the frame),
/// jittered uniformly so the box stays inside, cut identically from both modalities and
/// resized to the output resolution. Boxes are remapped into the crop frame.
std::vector<ImagePair> multiscale_clip(const ImagePair& pair, const MultiscaleConfig& cfg,
                                       std::uint64_t seed);

/// A single random (box, factor) crop, as used for on-the-fly augmentation.
ImagePair random_multiscale_crop(const ImagePair& pair, const MultiscaleConfig& cfg,
                                 std::uint64_t seed);

/// Originals followed by all their multi-scale crops.
std::vector<ImagePair> make_multiscale_split(std::span<const ImagePair> pairs,
                                             const MultiscaleConfig& cfg, std::uint64_t seed);

struct SyntheticConfig {
  int image_size = 96;
  int min_vehicles = 1;
  int max_vehicles = 4;
  double min_size_fraction = 0.08;  // vehicle long side, fraction of the image side
  double max_size_fraction = 0.40;
  double val_fraction = 0.2;
  /// Minimum |alpha(vehicle) - alpha(background)| so every vehicle shows in infrared.
  double min_absorptivity_contrast = 0.15;
  /// Probability that a vehicle is painted black or white instead of a saturated hue.
  double achromatic_probability = 0.2;
  int board_count = 8;  // colour-gradient boards written to the "boards" split
  /// Up to this many unlabelled striped or checkered rectangles per scene.
  int max_distractors = 3;
  ThermalParams scene;
  ThermalCameraConfig camera;

  void validate() const;
};

/// One synthetic scene: textured muted background, 1-4 non-overlapping vehicles and some
/// unlabelled patterned clutter, the infrared side rendered by render_synthetic_ir. Pure
/// function of (cfg, seed, index).
ImagePair synthesize_scene(const SyntheticConfig& cfg, std::uint64_t seed, std::uint64_t index);

/// A colour-gradient board spanning the RGB cube and its rendered infrared image, the
/// desk-scale stand-in for photographed printed boards.
ImagePair synthesize_color_board(const SyntheticConfig& cfg, std::uint64_t seed,
                                 std::uint64_t index);

/// Writes n scenes split into train/val plus cfg.board_count boards into out_root, and
/// returns the manifests in the order train, val, boards. Byte-identical per seed.
std::vector<DatasetManifest> gen_synthetic_dataset(int n_images, const SyntheticConfig& cfg,
                                                   std::uint64_t seed,
                                                   const std::filesystem::path& out_root);

/// In-memory variant of gen_synthetic_dataset's scene generation (no boards, no files);
/// returns pairs quantised to 8 bits exactly as a disk round-trip would.
std::vector<ImagePair> synthesize_scenes(int n_images, const SyntheticConfig& cfg,
                                         std::uint64_t seed, std::uint64_t first_index = 0);

}  // namespace cdupatch
