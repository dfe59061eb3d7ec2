#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

// Synthetic domain-shift benchmark, dataset IO and segmentation metrics.
// On-disk layout: <dir>/images/<id>.png|pgm plus optional
// <dir>/masks/<id>.png|pgm (8-bit grayscale; 0 = background, 255 = class 1;
// multi-class masks store raw class values 0..K-1).

namespace aif {

struct Sample {
  std::string id;
  int channels = 1;
  int height = 0;
  int width = 0;
  std::vector<float> image;         // [C,H,W] in [0,1]
  std::vector<std::uint8_t> mask;   // [H,W] class map; empty if unlabeled
  bool has_mask() const { return !mask.empty(); }
};

// Photometric shift applied after geometry is fixed; label-preserving by
// construction. Pipeline order: contrast/gamma -> brightness -> blur ->
// additive Gaussian noise -> clamp to [0,1].
struct DomainShiftSpec {
  double brightness_delta = 0.0;
  double contrast_gain = 1.0;
  double gamma = 1.0;
  double gaussian_noise_sigma = 0.0;
  double blur_radius = 0.0;
  std::uint64_t seed = 0;

  bool is_identity() const {
    return brightness_delta == 0.0 && contrast_gain == 1.0 && gamma == 1.0 && gaussian_noise_sigma == 0.0 &&
           blur_radius == 0.0;
  }

  std::string to_json() const;
  static DomainShiftSpec from_json(const std::string& text);
};

std::vector<float> apply_shift(const std::vector<float>& image, int height, int width, const DomainShiftSpec& spec);

// n curvilinear-stroke samples of size x size; geometry depends only on
// (seed, index), the shift only restyles the image. size must be divisible
// by 4.
std::vector<Sample> synth_generate(int n, const DomainShiftSpec& spec, std::uint64_t seed, int size);

std::vector<Sample> load_dataset(const std::filesystem::path& dir);
void save_dataset(const std::vector<Sample>& samples, const std::filesystem::path& dir,
                  const std::string& extension = ".png");

// Dice and Jaccard for one class id; both-empty convention = 1.0.
double dsc(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& gt, int class_id);
double iou(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& gt, int class_id);

struct MetricsRow {
  std::string id;
  double dsc = 0.0;
  double iou = 0.0;
};

// CSV with header `id,dsc,iou`, one row per sample plus a trailing mean row.
void write_metrics_csv(const std::filesystem::path& file, const std::vector<MetricsRow>& rows);

}  // namespace aif
