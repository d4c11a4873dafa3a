#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sscd/augment.hpp"
#include "sscd/image.hpp"
#include "sscd/rng.hpp"

namespace sscd {

struct Dataset {
  std::vector<ImagePair> samples;

  const ImagePair* find(const std::string& id) const {
    for (const auto& s : samples)
      if (s.id == id) return &s;
    return nullptr;
  }
};

struct IngestReject {
  std::string id;
  std::string reason;
};

struct IngestReport {
  std::vector<IngestReject> rejects;
};

// Reads aligned triplets root/A/<name>, root/B/<name>, root/label/<name>.
// Pairs missing a counterpart are reported, not fatal; a size mismatch
// inside an aligned triplet is fatal.
Dataset ingest(const std::string& root, IngestReport* report = nullptr);

// Writes the inverse layout consumed by ingest.
void write_dataset(const Dataset& dataset, const std::string& root);

// Row-major non-overlapping tiling; trailing remainders are discarded.
// Images smaller than the patch are reflect-padded to a single centered
// patch and counted in *pad_warnings.
std::vector<ImagePair> crop_patches(const ImagePair& sample, int patch_size,
                                    int* pad_warnings = nullptr);

struct SplitManifest {
  int schema_version = 1;
  double ratio = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::string> labeled_ids;
  std::vector<std::string> unlabeled_ids;
  std::vector<std::string> val_ids;
  std::vector<std::string> test_ids;

  std::string to_json() const;
  static SplitManifest from_json(const std::string& text);
  void save(const std::string& path) const;
  static SplitManifest load(const std::string& path);
};

// Carves val/test off the shuffled id list, then splits the remaining
// training ids into labeled/unlabeled at the requested ratio.
SplitManifest make_split(const std::vector<std::string>& ids, double ratio,
                         std::uint64_t seed, double val_fraction = 0.0,
                         double test_fraction = 0.0);

struct SynthParams {
  int count = 400;
  int size = 64;
  // Every tenth sample is change-free with an all-zero label.
  int zero_change_period = 10;
  double prevalence_lo = 0.02;
  double prevalence_hi = 0.30;
  int base_shapes_lo = 3;
  int base_shapes_hi = 7;
  // Contrast of painted shapes against the local background mean.
  double contrast_lo = 0.12;
  double contrast_hi = 0.30;
  // Label-free acquisition discrepancy applied to the second image only.
  double drift_brightness_lo = 0.75;
  double drift_brightness_hi = 1.25;
  double drift_cast = 0.10;
  double drift_shading = 0.18;
  double sensor_noise = 0.02;
};

// Procedural pair generator: textured background (several families) with
// disjoint shapes; the second image drops and adds shapes under global
// photometric drift, a shading gradient, and sensor noise, none of which is
// labeled. The label is exactly the union of dropped and added footprints.
Dataset synth_generate(const SynthParams& params, std::uint64_t seed);

}  // namespace sscd
