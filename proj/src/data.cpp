#include "aif/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include "json.hpp"

#include "aif/common.hpp"
#include "aif/image_io.hpp"
#include "aif/rng.hpp"

namespace aif {

using nlohmann::json;

// ---------------------------------------------------------------------------
// shift spec
// ---------------------------------------------------------------------------

std::string DomainShiftSpec::to_json() const {
  json j;
  j["brightness_delta"] = brightness_delta;
  j["contrast_gain"] = contrast_gain;
  j["gamma"] = gamma;
  j["gaussian_noise_sigma"] = gaussian_noise_sigma;
  j["blur_radius"] = blur_radius;
  j["seed"] = seed;
  return j.dump(2);
}

DomainShiftSpec DomainShiftSpec::from_json(const std::string& text) {
  const json j = json::parse(text);
  DomainShiftSpec s;
  s.brightness_delta = j.value("brightness_delta", 0.0);
  s.contrast_gain = j.value("contrast_gain", 1.0);
  s.gamma = j.value("gamma", 1.0);
  s.gaussian_noise_sigma = j.value("gaussian_noise_sigma", 0.0);
  s.blur_radius = j.value("blur_radius", 0.0);
  s.seed = j.value("seed", std::uint64_t{0});
  check(s.contrast_gain >= 0.0, "shift spec: contrast_gain must be >= 0");
  check(s.gamma > 0.0, "shift spec: gamma must be > 0");
  check(s.gaussian_noise_sigma >= 0.0, "shift spec: gaussian_noise_sigma must be >= 0");
  check(s.blur_radius >= 0.0, "shift spec: blur_radius must be >= 0");
  return s;
}

// ---------------------------------------------------------------------------
// photometric shift
// ---------------------------------------------------------------------------

namespace {

void gaussian_blur_inplace(std::vector<float>& img, int h, int w, double sigma) {
  const int half = static_cast<int>(std::ceil(3.0 * sigma));
  if (half < 1) return;
  std::vector<double> kernel(static_cast<std::size_t>(2 * half + 1));
  double norm = 0.0;
  for (int i = -half; i <= half; ++i) {
    kernel[static_cast<std::size_t>(i + half)] = std::exp(-0.5 * (i / sigma) * (i / sigma));
    norm += kernel[static_cast<std::size_t>(i + half)];
  }
  for (auto& k : kernel) k /= norm;
  std::vector<float> tmp(img.size());
  // horizontal, edge replicate
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -half; i <= half; ++i) {
        const int xi = std::clamp(x + i, 0, w - 1);
        acc += kernel[static_cast<std::size_t>(i + half)] * img[static_cast<std::size_t>(y) * w + xi];
      }
      tmp[static_cast<std::size_t>(y) * w + x] = static_cast<float>(acc);
    }
  // vertical
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -half; i <= half; ++i) {
        const int yi = std::clamp(y + i, 0, h - 1);
        acc += kernel[static_cast<std::size_t>(i + half)] * tmp[static_cast<std::size_t>(yi) * w + x];
      }
      img[static_cast<std::size_t>(y) * w + x] = static_cast<float>(acc);
    }
}

}  // namespace

std::vector<float> apply_shift(const std::vector<float>& image, int height, int width, const DomainShiftSpec& spec) {
  check(static_cast<std::size_t>(height) * width == image.size(), "apply_shift: image buffer does not match dims");
  std::vector<float> out = image;
  for (auto& v : out) {
    double x = v;
    x = (x - 0.5) * spec.contrast_gain + 0.5;  // contrast about mid-gray
    if (spec.gamma != 1.0) x = std::pow(std::max(x, 0.0), spec.gamma);
    x += spec.brightness_delta;
    v = static_cast<float>(x);
  }
  if (spec.blur_radius > 0.0) gaussian_blur_inplace(out, height, width, spec.blur_radius);
  if (spec.gaussian_noise_sigma > 0.0) {
    Rng rng(Rng::derive(spec.seed, 0x6e6f6973ull));
    for (auto& v : out) v = static_cast<float>(v + rng.normal(0.0, spec.gaussian_noise_sigma));
  }
  for (auto& v : out) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

// ---------------------------------------------------------------------------
// synthetic benchmark
// ---------------------------------------------------------------------------

namespace {

// one sample's geometry: low-frequency textured background + dark
// curvilinear strokes whose exact painted support is the mask
void paint_geometry(Rng& rng, int size, std::vector<float>& img, std::vector<std::uint8_t>& mask) {
  const double two_pi = 6.283185307179586;
  // Background carries the nuisance content: a wide per-image base level and
  // several low-frequency gratings, so images differ strongly in bands the
  // strokes do not occupy.
  const double base = rng.uniform(0.35, 0.75);
  struct Wave {
    double fx, fy, phase, amp;
  };
  Wave waves[4];
  for (auto& wv : waves)
    wv = {rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0), rng.uniform(0.0, two_pi), rng.uniform(0.03, 0.09)};
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double v = base;
      for (const auto& wv : waves) v += wv.amp * std::cos(two_pi * (wv.fx * x + wv.fy * y) / size + wv.phase);
      img[static_cast<std::size_t>(y) * size + x] = static_cast<float>(v);
    }

  // budget keeps the foreground fraction inside [0.02, 0.20]
  const double budget = rng.uniform(0.10, 0.15) * size * size;
  const double floor_px = 0.025 * size * size;
  int painted = 0;

  auto draw_stroke = [&](int width_px, double len, double contrast) {
    double x = rng.uniform(0.15, 0.85) * size;
    double y = rng.uniform(0.15, 0.85) * size;
    double angle = rng.uniform(0.0, two_pi);
    const double radius = (width_px - 1) * 0.5 + 0.25;
    for (int step = 0; step < static_cast<int>(len); ++step) {
      angle += rng.normal(0.0, 0.18);
      double nx = x + std::cos(angle), ny = y + std::sin(angle);
      // reflect at the borders so strokes keep their length
      if (nx < 2 || nx > size - 3) {
        angle = two_pi / 2 - angle;
        nx = x + std::cos(angle);
      }
      if (ny < 2 || ny > size - 3) {
        angle = -angle;
        ny = y + std::sin(angle);
      }
      x = std::clamp(nx, 1.0, size - 2.0);
      y = std::clamp(ny, 1.0, size - 2.0);
      const int lo = static_cast<int>(std::floor(-radius)), hi = static_cast<int>(std::ceil(radius));
      for (int dy = lo; dy <= hi; ++dy)
        for (int dx = lo; dx <= hi; ++dx) {
          if (dx * dx + dy * dy > radius * radius + 0.26) continue;
          const int px = static_cast<int>(std::lround(x)) + dx;
          const int py = static_cast<int>(std::lround(y)) + dy;
          if (px < 0 || py < 0 || px >= size || py >= size) continue;
          const std::size_t idx = static_cast<std::size_t>(py) * size + px;
          if (mask[idx] == 0) {
            mask[idx] = 1;
            ++painted;
          }
          img[idx] = static_cast<float>(img[idx] - contrast);
        }
    }
  };

  const int n_strokes = rng.uniform_int(3, 8);
  for (int s = 0; s < n_strokes; ++s) {
    const bool over_budget = painted >= static_cast<int>(budget);
    const int width_px = over_budget ? 1 : rng.uniform_int(1, 3);
    const double len = size * (over_budget ? rng.uniform(0.15, 0.3) : rng.uniform(0.5, 0.9));
    draw_stroke(width_px, len, rng.uniform(0.30, 0.38));
  }
  // overlap between strokes can leave the support too sparse
  for (int extra = 0; painted < static_cast<int>(floor_px) && extra < 6; ++extra)
    draw_stroke(1, size * 0.4, rng.uniform(0.30, 0.38));
}

std::string sample_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "sample_%05d", index);
  return buf;
}

}  // namespace

std::vector<Sample> synth_generate(int n, const DomainShiftSpec& spec, std::uint64_t seed, int size) {
  check(n >= 1, "synth_generate: n must be >= 1");
  check(size >= 8 && size % 4 == 0, "synth_generate: size must be >= 8 and divisible by 4");
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(i)));
    Sample s;
    s.id = sample_id(i);
    s.channels = 1;
    s.height = s.width = size;
    s.image.assign(static_cast<std::size_t>(size) * size, 0.f);
    s.mask.assign(static_cast<std::size_t>(size) * size, 0);
    paint_geometry(rng, size, s.image, s.mask);
    DomainShiftSpec per_sample = spec;
    per_sample.seed = Rng::derive(spec.seed, static_cast<std::uint64_t>(i));
    s.image = apply_shift(s.image, size, size, per_sample);
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// dataset IO
// ---------------------------------------------------------------------------

namespace {

bool known_image_ext(const std::filesystem::path& p) {
  auto e = p.extension().string();
  for (auto& c : e) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return e == ".png" || e == ".pgm";
}

}  // namespace

std::vector<Sample> load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const fs::path images = dir / "images";
  const fs::path masks = dir / "masks";
  std::vector<Sample> out;
  if (!fs::exists(images)) return out;

  std::map<std::string, fs::path> image_files;
  for (const auto& e : fs::directory_iterator(images))
    if (e.is_regular_file() && known_image_ext(e.path())) image_files.emplace(e.path().stem().string(), e.path());

  std::map<std::string, fs::path> mask_files;
  if (fs::exists(masks))
    for (const auto& e : fs::directory_iterator(masks))
      if (e.is_regular_file() && known_image_ext(e.path())) mask_files.emplace(e.path().stem().string(), e.path());

  for (const auto& [id, path] : image_files) {  // std::map iterates lexicographically
    Gray8 img = read_gray8(path);
    Sample s;
    s.id = id;
    s.channels = 1;
    s.height = img.height;
    s.width = img.width;
    s.image.resize(img.pixels.size());
    for (std::size_t i = 0; i < img.pixels.size(); ++i) s.image[i] = static_cast<float>(img.pixels[i]) / 255.f;
    auto mit = mask_files.find(id);
    if (mit != mask_files.end()) {
      Gray8 m = read_gray8(mit->second);
      if (m.width != img.width || m.height != img.height)
        throw std::runtime_error("dataset: mask '" + mit->second.string() + "' size " + std::to_string(m.width) +
                                 "x" + std::to_string(m.height) + " does not match image '" + path.string() + "' " +
                                 std::to_string(img.width) + "x" + std::to_string(img.height));
      s.mask.resize(m.pixels.size());
      for (std::size_t i = 0; i < m.pixels.size(); ++i)
        s.mask[i] = m.pixels[i] == 255 ? std::uint8_t{1} : m.pixels[i];
    }
    out.push_back(std::move(s));
  }
  return out;
}

void save_dataset(const std::vector<Sample>& samples, const std::filesystem::path& dir, const std::string& extension) {
  namespace fs = std::filesystem;
  check(extension == ".png" || extension == ".pgm", "save_dataset: extension must be .png or .pgm");
  fs::create_directories(dir / "images");
  bool any_mask = false;
  for (const auto& s : samples) any_mask = any_mask || s.has_mask();
  if (any_mask) fs::create_directories(dir / "masks");
  for (const auto& s : samples) {
    check(s.channels == 1, "save_dataset: only single-channel samples are stored");
    Gray8 img;
    img.width = s.width;
    img.height = s.height;
    img.pixels.resize(s.image.size());
    for (std::size_t i = 0; i < s.image.size(); ++i)
      img.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(s.image[i], 0.f, 1.f) * 255.f));
    write_gray8(dir / "images" / (s.id + extension), img);
    if (s.has_mask()) {
      Gray8 m;
      m.width = s.width;
      m.height = s.height;
      m.pixels.resize(s.mask.size());
      // binary masks go to {0,255}; multi-class masks store raw class values
      std::uint8_t max_cls = 0;
      for (auto v : s.mask) max_cls = std::max(max_cls, v);
      for (std::size_t i = 0; i < s.mask.size(); ++i)
        m.pixels[i] = (max_cls <= 1) ? static_cast<std::uint8_t>(s.mask[i] ? 255 : 0) : s.mask[i];
      write_gray8(dir / "masks" / (s.id + extension), m);
    }
  }
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

namespace {

void count_sets(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& gt, int class_id,
                std::int64_t& np, std::int64_t& ng, std::int64_t& ni) {
  check(pred.size() == gt.size(), "metrics: mask sizes differ (" + std::to_string(pred.size()) + " vs " +
                                      std::to_string(gt.size()) + ")");
  np = ng = ni = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] == class_id, g = gt[i] == class_id;
    np += p;
    ng += g;
    ni += p && g;
  }
}

}  // namespace

double dsc(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& gt, int class_id) {
  std::int64_t np, ng, ni;
  count_sets(pred, gt, class_id, np, ng, ni);
  if (np + ng == 0) return 1.0;  // both empty
  return 2.0 * static_cast<double>(ni) / static_cast<double>(np + ng);
}

double iou(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& gt, int class_id) {
  std::int64_t np, ng, ni;
  count_sets(pred, gt, class_id, np, ng, ni);
  const std::int64_t nu = np + ng - ni;
  if (nu == 0) return 1.0;  // both empty
  return static_cast<double>(ni) / static_cast<double>(nu);
}

void write_metrics_csv(const std::filesystem::path& file, const std::vector<MetricsRow>& rows) {
  std::ofstream os(file);
  check(os.good(), "metrics: cannot open '" + file.string() + "' for writing");
  os << "id,dsc,iou\n";
  double sd = 0, si = 0;
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.9f,%.9f\n", r.id.c_str(), r.dsc, r.iou);
    os << buf;
    sd += r.dsc;
    si += r.iou;
  }
  const double n = rows.empty() ? 1.0 : static_cast<double>(rows.size());
  std::snprintf(buf, sizeof(buf), "mean,%.9f,%.9f\n", sd / n, si / n);
  os << buf;
}

}  // namespace aif
