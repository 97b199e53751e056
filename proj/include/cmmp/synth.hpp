#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cmmp/eval.hpp"
#include "cmmp/raster.hpp"
#include "cmmp/rng.hpp"
#include "cmmp/trajectory.hpp"

namespace cmmp {

// One aligned training sample: aerial-style image (C=3, [0,1]), trajectory
// heat-map (C=1, [0,1]) and ground-truth road mask, all H x W.
struct SampleTriplet {
  RasterTile image;
  RasterTile heatmap;
  BinaryMask mask;
};

// Synthetic world description. Roads are random polylines; occluders are
// tree-like blobs drawn over roads in the image only; distractors are
// track-like lines present in the image but absent from mask and
// trajectories; spurious clusters put parking-lot-like trajectory blobs off
// road; fog blends the image toward white.
struct SceneSpec {
  std::size_t size = 64;  // H = W
  std::size_t road_count = 3;
  double road_width_min = 3.0, road_width_max = 5.0;  // px
  std::size_t occluder_count = 0;
  double occluder_min = 3.0, occluder_max = 6.0;  // blob radius, px
  std::size_t distractor_count = 0;
  double traj_density = 0.6;   // samples per road pixel
  double traj_noise_px = 1.0;  // gaussian positional noise sigma
  std::size_t spurious_cluster_count = 0;
  double fog_alpha = 0.0;  // 0 clear .. 1 white
  std::uint64_t seed = 0;

  void validate() const;
  std::string serialize() const;
  static SceneSpec parse(const std::string& text);
  static SceneSpec load_file(const std::string& path);
  void save_file(const std::string& path) const;
};

struct SynthResult {
  SampleTriplet triplet;
  std::vector<TrajectorySample> samples;  // raw fixes the heat-map was rendered from
  GeoBounds bounds;
};

// Fully deterministic for a given spec (the seed lives in the spec).
SynthResult synth_scene(const SceneSpec& spec);

// The seven augmentation variants of one square triplet: horizontal and
// vertical flips, rotations by 90/180/270 degrees, and two random crops
// (scale in [0.7, 0.9]) resized back; bilinear for image and heat-map,
// nearest for the mask. The same transform is applied to all three rasters.
std::vector<SampleTriplet> augment(const SampleTriplet& t, Rng& rng);

// Originals plus their variants, in input order: 8x the input size.
std::vector<SampleTriplet> augment_dataset(const std::vector<SampleTriplet>& in, Rng& rng);

// Seeded shuffle then split: ceil(n * train_frac) train indices, the rest
// validation.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> make_splits(
    std::size_t n, double train_frac, std::uint64_t seed);

// Raster transforms shared by the augmentation pipeline.
RasterTile flip_h(const RasterTile& t);
RasterTile flip_v(const RasterTile& t);
RasterTile rot90(const RasterTile& t, int quarter_turns);  // clockwise
RasterTile crop_resize_bilinear(const RasterTile& t, std::size_t r0, std::size_t c0,
                                std::size_t s);
RasterTile crop_resize_nearest(const RasterTile& t, std::size_t r0, std::size_t c0,
                               std::size_t s);

}  // namespace cmmp
