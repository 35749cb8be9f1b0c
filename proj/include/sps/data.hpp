#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sps/png_io.hpp"
#include "sps/types.hpp"

namespace sps {

enum class Split { kTrain, kTest };
enum class Domain { kSource, kTarget };
enum class ShapeKind { kEllipse, kPolygon, kBlob };

std::string to_string(Split s);
std::string to_string(Domain d);
std::string to_string(ShapeKind k);
Split parse_split(const std::string& s);
Domain parse_domain(const std::string& s);
ShapeKind parse_shape(const std::string& s);

struct ImageSample {
  Image image;
  BinaryMask mask;
  std::string id;
  Split split = Split::kTrain;
  Domain domain = Domain::kSource;
};

/// Parameters of the synthetic shape corpus. The source domain renders
/// high-contrast clean shapes; the target domain renders the same kind of
/// geometry with lower contrast, a box blur, and additive Gaussian noise.
struct CorpusSpec {
  int n_train = 200;  // per domain
  int n_test = 50;    // target domain
  int image_size = 64;
  std::vector<ShapeKind> shapes{ShapeKind::kEllipse, ShapeKind::kPolygon, ShapeKind::kBlob};
  double source_contrast = 0.6;
  double target_contrast = 0.2;
  double target_noise_std = 0.1;
  int blur_radius = 1;
  double min_radius = 5.0;
  double max_radius = 14.0;
  int max_shapes = 3;
  std::uint64_t seed = 0;

  /// Throws GenerationError on geometry that cannot fit, ConfigError on
  /// other invalid fields.
  void validate() const;

  std::string to_text() const;
  static CorpusSpec from_key_values(const std::vector<std::pair<std::string, std::string>>& kv);
};

/// One rasterizable shape in pixel units.
struct Shape {
  ShapeKind kind = ShapeKind::kEllipse;
  double center_row = 0;
  double center_col = 0;
  double radius = 0;
  double aspect = 1;   // ellipse minor/major ratio
  double angle = 0;    // ellipse rotation
  std::vector<double> vertex_angles;  // polygon
  std::vector<double> vertex_radii;   // polygon, multiples of radius
  std::vector<double> harmonics;      // blob: amplitude, phase pairs

  bool contains(double row, double col) const;
};

struct Geometry {
  std::vector<Shape> shapes;
  /// Per-shape intensity jitter factors.
  std::vector<double> jitter;
  double background = 0.25;
  double gradient_row = 0;
  double gradient_col = 0;
};

/// Draws the geometry for one sample from its own seed.
Geometry sample_geometry(const CorpusSpec& spec, std::uint64_t sample_seed);
/// Union of the shapes, sampled at pixel centers.
BinaryMask rasterize(const Geometry& geometry, int image_size);
/// Renders the geometry in a domain. Only the image depends on the domain.
ImageSample render_sample(const CorpusSpec& spec, const Geometry& geometry, Domain domain, std::uint64_t noise_seed);

/// Deterministic per-sample seed for (corpus seed, group, index).
std::uint64_t sample_seed(std::uint64_t corpus_seed, int group, int index);

/// Generates `count` samples of one (domain, split) group.
std::vector<ImageSample> generate_group(const CorpusSpec& spec, Domain domain, Split split, int count, int group);

/// Source train (n_train), target train (n_train), target test (n_test).
std::vector<ImageSample> generate_corpus(const CorpusSpec& spec);

/// Held-out source-domain test set, disjoint in seed space from the corpus.
std::vector<ImageSample> generate_source_test(const CorpusSpec& spec, int count);

std::vector<ImageSample> select(const std::vector<ImageSample>& samples, Domain domain, Split split);

// ---- ground truth prompts ----------------------------------------------------

/// Tight inclusive bounding box of the foreground. Throws InputError on an
/// empty mask.
BoxPrompt gt_box(const BinaryMask& mask);

enum class PointStrategy { kRandom, kCenter };

/// Foreground point from the ground truth: uniformly random, or the
/// foreground pixel nearest the centroid. Counts as a ground-truth prompt.
PointPrompt gt_point(const BinaryMask& mask, PointStrategy strategy, std::uint64_t seed);

// ---- interchange -------------------------------------------------------------

/// Writes images/<id>.png, masks/<id>.png (0/255) and manifest.tsv.
void write_corpus(const std::string& dir, const std::vector<ImageSample>& samples);
std::vector<ImageSample> read_corpus(const std::string& dir);

/// Pairs every PNG in `images_dir` with the same file name in `masks_dir`,
/// resizes to `image_size`, and assigns round(ratio * n) of them to train by
/// filename-hash order. Samples are tagged as target domain.
std::vector<ImageSample> load_directory(const std::string& images_dir, const std::string& masks_dir,
                                        double split_ratio, int image_size, int channels);

Image image_from_raster(const Raster& raster, int channels);
Raster raster_from_image(const Image& image);
Raster raster_from_mask(const BinaryMask& mask);

/// Square bilinear resize; returns the input when already `size` x `size`.
Image resize_bilinear(const Image& src, int size);
BinaryMask resize_nearest(const BinaryMask& src, int size);

}  // namespace sps
