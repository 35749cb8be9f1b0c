#include "sps/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "sps/error.hpp"
#include "sps/instrument.hpp"
#include "sps/util.hpp"

namespace fs = std::filesystem;

namespace sps {

// ---- enums -------------------------------------------------------------------

std::string to_string(Split s) { return s == Split::kTrain ? "train" : "test"; }
std::string to_string(Domain d) { return d == Domain::kSource ? "source" : "target"; }
std::string to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::kEllipse: return "ellipse";
    case ShapeKind::kPolygon: return "polygon";
    case ShapeKind::kBlob: return "blob";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  throw ConfigError("unknown split '" + s + "'");
}

Domain parse_domain(const std::string& s) {
  if (s == "source") return Domain::kSource;
  if (s == "target") return Domain::kTarget;
  throw ConfigError("unknown domain '" + s + "'");
}

ShapeKind parse_shape(const std::string& s) {
  if (s == "ellipse") return ShapeKind::kEllipse;
  if (s == "polygon") return ShapeKind::kPolygon;
  if (s == "blob") return ShapeKind::kBlob;
  throw ConfigError("unknown shape '" + s + "'");
}

// ---- corpus ----------------------------------------------------------------

namespace {

// Largest blob radius relative to its base radius: three harmonics of
// amplitude at most 0.15 each.
constexpr double kMaxExtent = 1.45;

}  // namespace

void CorpusSpec::validate() const {
  if (n_train <= 0 || n_test <= 0) throw ConfigError("corpus counts must be positive");
  if (image_size <= 0) throw ConfigError("image_size must be positive");
  if (shapes.empty()) throw ConfigError("at least one shape kind is required");
  if (max_shapes <= 0) throw ConfigError("max_shapes must be positive");
  if (!(target_noise_std >= 0)) throw ConfigError("target_noise_std must be >= 0");
  if (blur_radius < 0) throw ConfigError("blur_radius must be >= 0");
  for (double c : {source_contrast, target_contrast}) {
    if (!(c >= 0 && c <= 1)) throw ConfigError("contrasts must lie in [0, 1]");
  }
  if (target_contrast > source_contrast) throw ConfigError("target_contrast must not exceed source_contrast");
  if (!(min_radius >= 1.0) || !(max_radius >= min_radius)) throw GenerationError("need 1 <= min_radius <= max_radius");
  if (2.0 * (kMaxExtent * max_radius + 1.0) >= image_size) {
    throw GenerationError("shapes of radius " + format_double(max_radius) + " do not fit a " +
                          std::to_string(image_size) + " px image");
  }
}

std::string CorpusSpec::to_text() const {
  std::ostringstream os;
  std::string kinds;
  for (ShapeKind k : shapes) kinds += (kinds.empty() ? "" : ",") + to_string(k);
  os << "n_train=" << n_train << "\n"
     << "n_test=" << n_test << "\n"
     << "image_size=" << image_size << "\n"
     << "shapes=" << kinds << "\n"
     << "source_contrast=" << format_double(source_contrast) << "\n"
     << "target_contrast=" << format_double(target_contrast) << "\n"
     << "target_noise_std=" << format_double(target_noise_std) << "\n"
     << "blur_radius=" << blur_radius << "\n"
     << "min_radius=" << format_double(min_radius) << "\n"
     << "max_radius=" << format_double(max_radius) << "\n"
     << "max_shapes=" << max_shapes << "\n"
     << "seed=" << seed << "\n";
  return os.str();
}

CorpusSpec CorpusSpec::from_key_values(const std::vector<std::pair<std::string, std::string>>& kv) {
  CorpusSpec s;
  for (const auto& [k, v] : kv) {
    if (k == "n_train") s.n_train = parse_int(v, k);
    else if (k == "n_test") s.n_test = parse_int(v, k);
    else if (k == "image_size") s.image_size = parse_int(v, k);
    else if (k == "shapes") {
      s.shapes.clear();
      for (const auto& part : split(v, ',')) s.shapes.push_back(parse_shape(trim(part)));
    } else if (k == "source_contrast") s.source_contrast = parse_double(v, k);
    else if (k == "target_contrast") s.target_contrast = parse_double(v, k);
    else if (k == "target_noise_std") s.target_noise_std = parse_double(v, k);
    else if (k == "blur_radius") s.blur_radius = parse_int(v, k);
    else if (k == "min_radius") s.min_radius = parse_double(v, k);
    else if (k == "max_radius") s.max_radius = parse_double(v, k);
    else if (k == "max_shapes") s.max_shapes = parse_int(v, k);
    else if (k == "seed") s.seed = static_cast<std::uint64_t>(parse_int(v, k));
    else throw ConfigError("unknown corpus key '" + k + "'");
  }
  return s;
}

// ---- geometry ----------------------------------------------------------------

bool Shape::contains(double row, double col) const {
  const double dr = row - center_row;
  const double dc = col - center_col;
  switch (kind) {
    case ShapeKind::kEllipse: {
      const double u = dr * std::cos(angle) + dc * std::sin(angle);
      const double v = -dr * std::sin(angle) + dc * std::cos(angle);
      const double a = radius;
      const double b = radius * aspect;
      return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
    }
    case ShapeKind::kPolygon: {
      const std::size_t n = vertex_angles.size();
      bool inside = false;
      for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const double ri = center_row + radius * vertex_radii[i] * std::sin(vertex_angles[i]);
        const double ci = center_col + radius * vertex_radii[i] * std::cos(vertex_angles[i]);
        const double rj = center_row + radius * vertex_radii[j] * std::sin(vertex_angles[j]);
        const double cj = center_col + radius * vertex_radii[j] * std::cos(vertex_angles[j]);
        if ((ri > row) != (rj > row) && col < (cj - ci) * (row - ri) / (rj - ri) + ci) inside = !inside;
      }
      return inside;
    }
    case ShapeKind::kBlob: {
      const double phi = std::atan2(dr, dc);
      double rho = 1.0;
      for (std::size_t k = 0; k + 1 < harmonics.size(); k += 2) {
        rho += harmonics[k] * std::sin(static_cast<double>(k / 2 + 2) * phi + harmonics[k + 1]);
      }
      return std::sqrt(dr * dr + dc * dc) <= radius * rho;
    }
  }
  return false;
}

std::uint64_t sample_seed(std::uint64_t corpus_seed, int group, int index) {
  // splitmix64 finalizer over a packed counter
  std::uint64_t z = corpus_seed * 0x9E3779B97F4A7C15ull + (static_cast<std::uint64_t>(group) << 32) +
                    static_cast<std::uint64_t>(index) + 0x632BE59BD9B4E019ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

Geometry sample_geometry(const CorpusSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  auto uniform = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  const double two_pi = 2.0 * std::numbers::pi;

  Geometry g;
  g.background = uniform(0.15, 0.35);
  g.gradient_row = uniform(-0.05, 0.05);
  g.gradient_col = uniform(-0.05, 0.05);
  const int count = std::uniform_int_distribution<int>(1, spec.max_shapes)(rng);
  for (int i = 0; i < count; ++i) {
    Shape s;
    s.kind = spec.shapes[std::uniform_int_distribution<std::size_t>(0, spec.shapes.size() - 1)(rng)];
    s.radius = uniform(spec.min_radius, spec.max_radius);
    const double margin = kMaxExtent * s.radius + 1.0;
    s.center_row = uniform(margin, spec.image_size - margin);
    s.center_col = uniform(margin, spec.image_size - margin);
    switch (s.kind) {
      case ShapeKind::kEllipse:
        s.aspect = uniform(0.5, 1.0);
        s.angle = uniform(0.0, std::numbers::pi);
        break;
      case ShapeKind::kPolygon: {
        const int n = std::uniform_int_distribution<int>(3, 7)(rng);
        for (int v = 0; v < n; ++v) {
          s.vertex_angles.push_back(uniform(0.0, two_pi));
          s.vertex_radii.push_back(uniform(0.7, 1.0));
        }
        // Sorted angles give a star-shaped simple polygon.
        std::vector<std::size_t> order(static_cast<std::size_t>(n));
        for (std::size_t v = 0; v < order.size(); ++v) order[v] = v;
        std::sort(order.begin(), order.end(),
                  [&s](std::size_t a, std::size_t b) { return s.vertex_angles[a] < s.vertex_angles[b]; });
        std::vector<double> angles, radii;
        for (std::size_t v : order) {
          angles.push_back(s.vertex_angles[v]);
          radii.push_back(s.vertex_radii[v]);
        }
        s.vertex_angles = std::move(angles);
        s.vertex_radii = std::move(radii);
        break;
      }
      case ShapeKind::kBlob:
        for (int k = 0; k < 3; ++k) {
          s.harmonics.push_back(uniform(-0.15, 0.15));
          s.harmonics.push_back(uniform(0.0, two_pi));
        }
        break;
    }
    g.shapes.push_back(std::move(s));
    g.jitter.push_back(uniform(0.85, 1.15));
  }
  return g;
}

BinaryMask rasterize(const Geometry& geometry, int image_size) {
  BinaryMask mask = BinaryMask::Zero(image_size, image_size);
  for (int r = 0; r < image_size; ++r) {
    for (int c = 0; c < image_size; ++c) {
      for (const Shape& s : geometry.shapes) {
        if (s.contains(r + 0.5, c + 0.5)) {
          mask(r, c) = 1;
          break;
        }
      }
    }
  }
  return mask;
}

namespace {

std::vector<double> box_blur(const std::vector<double>& src, int size, int radius) {
  if (radius == 0) return src;
  auto at = [&](int r, int c) {
    r = std::clamp(r, 0, size - 1);
    c = std::clamp(c, 0, size - 1);
    return src[static_cast<std::size_t>(r) * size + c];
  };
  std::vector<double> out(src.size());
  const double norm = 1.0 / ((2 * radius + 1) * (2 * radius + 1));
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      double s = 0;
      for (int dr = -radius; dr <= radius; ++dr) {
        for (int dc = -radius; dc <= radius; ++dc) s += at(r + dr, c + dc);
      }
      out[static_cast<std::size_t>(r) * size + c] = s * norm;
    }
  }
  return out;
}

float quantize(double v) { return static_cast<float>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.0f; }

}  // namespace

ImageSample render_sample(const CorpusSpec& spec, const Geometry& geometry, Domain domain, std::uint64_t noise_seed) {
  const int n = spec.image_size;
  const double contrast = domain == Domain::kSource ? spec.source_contrast : spec.target_contrast;
  ImageSample sample;
  sample.domain = domain;
  sample.mask = rasterize(geometry, n);

  std::vector<double> pixels(static_cast<std::size_t>(n) * n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      double v = geometry.background + geometry.gradient_row * (r - n / 2.0) / n +
                 geometry.gradient_col * (c - n / 2.0) / n;
      for (std::size_t i = 0; i < geometry.shapes.size(); ++i) {
        if (geometry.shapes[i].contains(r + 0.5, c + 0.5)) {
          v += contrast * geometry.jitter[i];
          break;
        }
      }
      pixels[static_cast<std::size_t>(r) * n + c] = v;
    }
  }
  if (domain == Domain::kTarget) {
    pixels = box_blur(pixels, n, spec.blur_radius);
    if (spec.target_noise_std > 0) {
      std::mt19937_64 rng(noise_seed);
      std::normal_distribution<double> noise(0.0, spec.target_noise_std);
      for (double& v : pixels) v += noise(rng);
    }
  }
  sample.image = Image(n, n, 1);
  for (std::size_t i = 0; i < pixels.size(); ++i) sample.image.pixels[i] = quantize(pixels[i]);
  return sample;
}

std::vector<ImageSample> generate_group(const CorpusSpec& spec, Domain domain, Split split, int count, int group) {
  spec.validate();
  std::vector<ImageSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const std::uint64_t seed = sample_seed(spec.seed, group, i);
    // Resample until the union mask is nonempty; every shape here has a
    // radius of at least one pixel, so this essentially never loops.
    ImageSample s;
    for (int attempt = 0;; ++attempt) {
      if (attempt == 100) throw GenerationError("could not draw a nonempty mask");
      const Geometry g = sample_geometry(spec, seed + static_cast<std::uint64_t>(attempt) * 0x9E3779B97F4A7C15ull);
      s = render_sample(spec, g, domain, seed ^ 0xD1B54A32D192ED03ull);
      if (s.mask.cast<int>().sum() > 0) break;
    }
    s.split = split;
    std::ostringstream id;
    id << to_string(domain) << "_" << to_string(split) << "_" << (group >= 3 ? "x" : "") << i;
    s.id = id.str();
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<ImageSample> generate_corpus(const CorpusSpec& spec) {
  spec.validate();
  std::vector<ImageSample> out = generate_group(spec, Domain::kSource, Split::kTrain, spec.n_train, 0);
  auto target_train = generate_group(spec, Domain::kTarget, Split::kTrain, spec.n_train, 1);
  auto target_test = generate_group(spec, Domain::kTarget, Split::kTest, spec.n_test, 2);
  out.insert(out.end(), std::make_move_iterator(target_train.begin()), std::make_move_iterator(target_train.end()));
  out.insert(out.end(), std::make_move_iterator(target_test.begin()), std::make_move_iterator(target_test.end()));
  return out;
}

std::vector<ImageSample> generate_source_test(const CorpusSpec& spec, int count) {
  return generate_group(spec, Domain::kSource, Split::kTest, count, 3);
}

std::vector<ImageSample> select(const std::vector<ImageSample>& samples, Domain domain, Split split) {
  std::vector<ImageSample> out;
  for (const auto& s : samples) {
    if (s.domain == domain && s.split == split) out.push_back(s);
  }
  return out;
}

// ---- ground truth prompts ----------------------------------------------------

BoxPrompt gt_box(const BinaryMask& mask) {
  BoxPrompt b{static_cast<int>(mask.rows()), static_cast<int>(mask.cols()), -1, -1};
  for (Eigen::Index r = 0; r < mask.rows(); ++r) {
    for (Eigen::Index c = 0; c < mask.cols(); ++c) {
      if (!mask(r, c)) continue;
      b.row_min = std::min<int>(b.row_min, static_cast<int>(r));
      b.col_min = std::min<int>(b.col_min, static_cast<int>(c));
      b.row_max = std::max<int>(b.row_max, static_cast<int>(r));
      b.col_max = std::max<int>(b.col_max, static_cast<int>(c));
    }
  }
  if (b.row_max < 0) throw InputError("gt_box: mask has no foreground");
  return b;
}

PointPrompt gt_point(const BinaryMask& mask, PointStrategy strategy, std::uint64_t seed) {
  std::vector<std::pair<int, int>> fg;
  for (Eigen::Index r = 0; r < mask.rows(); ++r) {
    for (Eigen::Index c = 0; c < mask.cols(); ++c) {
      if (mask(r, c)) fg.emplace_back(static_cast<int>(r), static_cast<int>(c));
    }
  }
  if (fg.empty()) throw InputError("gt_point: mask has no foreground");
  counters().ground_truth_prompts++;

  if (strategy == PointStrategy::kRandom) {
    std::mt19937_64 rng(seed);
    const auto& [r, c] = fg[std::uniform_int_distribution<std::size_t>(0, fg.size() - 1)(rng)];
    return PointPrompt{r, c, true};
  }
  double mr = 0, mc = 0;
  for (const auto& [r, c] : fg) {
    mr += r;
    mc += c;
  }
  mr /= static_cast<double>(fg.size());
  mc /= static_cast<double>(fg.size());
  // First pixel in scan order wins ties.
  std::pair<int, int> best = fg.front();
  double best_d = INFINITY;
  for (const auto& [r, c] : fg) {
    const double d = (r - mr) * (r - mr) + (c - mc) * (c - mc);
    if (d < best_d) {
      best_d = d;
      best = {r, c};
    }
  }
  return PointPrompt{best.first, best.second, true};
}

// ---- interchange -------------------------------------------------------------

Image image_from_raster(const Raster& raster, int channels) {
  Image img(raster.height, raster.width, channels);
  const int src_c = raster.channels;
  const bool src_color = src_c >= 3;
  for (int r = 0; r < raster.height; ++r) {
    for (int c = 0; c < raster.width; ++c) {
      const std::uint8_t* px = &raster.data[(static_cast<std::size_t>(r) * raster.width + c) * src_c];
      if (channels == 1) {
        const double v = src_color ? (0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]) : px[0];
        img.at(r, c) = static_cast<float>(v / 255.0);
      } else {
        for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = static_cast<float>((src_color ? px[ch] : px[0]) / 255.0);
      }
    }
  }
  return img;
}

Raster raster_from_image(const Image& image) {
  Raster out{image.width, image.height, image.channels, {}};
  out.data.resize(image.pixels.size());
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    out.data[i] = static_cast<std::uint8_t>(std::lround(std::clamp(image.pixels[i], 0.0f, 1.0f) * 255.0f));
  }
  return out;
}

Raster raster_from_mask(const BinaryMask& mask) {
  Raster out{static_cast<int>(mask.cols()), static_cast<int>(mask.rows()), 1, {}};
  out.data.resize(static_cast<std::size_t>(mask.size()));
  for (Eigen::Index i = 0; i < mask.size(); ++i) out.data[static_cast<std::size_t>(i)] = mask.data()[i] ? 255 : 0;
  return out;
}

Image resize_bilinear(const Image& src, int size) {
  if (src.height == size && src.width == size) return src;
  Image out(size, size, src.channels);
  for (int r = 0; r < size; ++r) {
    const double sr = std::clamp((r + 0.5) * src.height / size - 0.5, 0.0, src.height - 1.0);
    const int r0 = static_cast<int>(sr);
    const int r1 = std::min(r0 + 1, src.height - 1);
    const double fr = sr - r0;
    for (int c = 0; c < size; ++c) {
      const double sc = std::clamp((c + 0.5) * src.width / size - 0.5, 0.0, src.width - 1.0);
      const int c0 = static_cast<int>(sc);
      const int c1 = std::min(c0 + 1, src.width - 1);
      const double fc = sc - c0;
      for (int ch = 0; ch < src.channels; ++ch) {
        const double top = src.at(r0, c0, ch) * (1 - fc) + src.at(r0, c1, ch) * fc;
        const double bot = src.at(r1, c0, ch) * (1 - fc) + src.at(r1, c1, ch) * fc;
        out.at(r, c, ch) = static_cast<float>(top * (1 - fr) + bot * fr);
      }
    }
  }
  return out;
}

BinaryMask resize_nearest(const BinaryMask& src, int size) {
  if (src.rows() == size && src.cols() == size) return src;
  BinaryMask out(size, size);
  for (int r = 0; r < size; ++r) {
    const auto sr = std::min<Eigen::Index>(static_cast<Eigen::Index>((r + 0.5) * src.rows() / size), src.rows() - 1);
    for (int c = 0; c < size; ++c) {
      const auto sc = std::min<Eigen::Index>(static_cast<Eigen::Index>((c + 0.5) * src.cols() / size), src.cols() - 1);
      out(r, c) = src(sr, sc);
    }
  }
  return out;
}

namespace {

/// Mask from an 8-bit raster: at most two gray levels, foreground above 127.
BinaryMask mask_from_raster(const Raster& raster, const std::string& name) {
  std::set<int> levels;
  BinaryMask mask(raster.height, raster.width);
  const int ch = raster.channels;
  for (int r = 0; r < raster.height; ++r) {
    for (int c = 0; c < raster.width; ++c) {
      const int v = raster.data[(static_cast<std::size_t>(r) * raster.width + c) * ch];
      levels.insert(v);
      mask(r, c) = v > 127 ? 1 : 0;
    }
  }
  if (levels.size() > 2) {
    throw IngestionError("mask '" + name + "' has " + std::to_string(levels.size()) + " gray levels; expected binary");
  }
  return mask;
}

bool is_png(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return ext == ".png";
}

}  // namespace

void write_corpus(const std::string& dir, const std::vector<ImageSample>& samples) {
  const fs::path root(dir);
  fs::create_directories(root / "images");
  fs::create_directories(root / "masks");
  std::ostringstream manifest;
  manifest << "# id\timage\tmask\tsplit\tdomain\n";
  for (const auto& s : samples) {
    const std::string img_rel = "images/" + s.id + ".png";
    const std::string mask_rel = "masks/" + s.id + ".png";
    write_png((root / img_rel).string(), raster_from_image(s.image));
    write_png((root / mask_rel).string(), raster_from_mask(s.mask));
    manifest << s.id << '\t' << img_rel << '\t' << mask_rel << '\t' << to_string(s.split) << '\t'
             << to_string(s.domain) << '\n';
  }
  write_file((root / "manifest.tsv").string(), manifest.str());
}

std::vector<ImageSample> read_corpus(const std::string& dir) {
  const fs::path root(dir);
  std::istringstream in(read_file((root / "manifest.tsv").string()));
  std::vector<ImageSample> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto f = split(line, '\t');
    if (f.size() != 5) throw IngestionError("manifest line " + std::to_string(lineno) + ": expected 5 fields");
    ImageSample s;
    s.id = f[0];
    s.image = image_from_raster(read_png((root / f[1]).string()), 1);
    s.mask = mask_from_raster(read_png((root / f[2]).string()), f[2]);
    s.split = parse_split(f[3]);
    s.domain = parse_domain(f[4]);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<ImageSample> load_directory(const std::string& images_dir, const std::string& masks_dir,
                                        double split_ratio, int image_size, int channels) {
  if (!(split_ratio >= 0 && split_ratio <= 1)) throw ConfigError("split ratio must lie in [0, 1]");
  if (!fs::is_directory(images_dir)) throw IngestionError("'" + images_dir + "' is not a directory");
  if (!fs::is_directory(masks_dir)) throw IngestionError("'" + masks_dir + "' is not a directory");
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(images_dir)) {
    if (entry.is_regular_file() && is_png(entry.path())) names.push_back(entry.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  std::vector<ImageSample> out;
  for (const auto& name : names) {
    const fs::path mask_path = fs::path(masks_dir) / name;
    if (!fs::exists(mask_path)) throw IngestionError("no mask for image '" + name + "'");
    ImageSample s;
    s.id = fs::path(name).stem().string();
    s.domain = Domain::kTarget;
    s.image = resize_bilinear(image_from_raster(read_png((fs::path(images_dir) / name).string()), channels), image_size);
    const Raster mr = read_png(mask_path.string());
    s.mask = resize_nearest(mask_from_raster(mr, name), image_size);
    out.push_back(std::move(s));
  }
  // Split by filename-hash order so the assignment does not depend on the
  // directory listing.
  std::vector<std::size_t> order(out.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto ha = fnv1a(out[a].id);
    const auto hb = fnv1a(out[b].id);
    return ha != hb ? ha < hb : out[a].id < out[b].id;
  });
  const auto n_train = static_cast<std::size_t>(std::lround(split_ratio * static_cast<double>(out.size())));
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    out[order[rank]].split = rank < n_train ? Split::kTrain : Split::kTest;
  }
  return out;
}

}  // namespace sps
