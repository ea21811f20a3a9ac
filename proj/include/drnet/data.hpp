#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "drnet/tensor.hpp"

namespace drnet {

// One synthetic RGB-D sample: rgb in [0, 1], depth in meters in [0.5, 10].
struct Scene {
  Tensor rgb;    // (1, 3, h, w)
  Tensor depth;  // (1, 1, h, w)
  std::uint64_t seed = 0;
};

struct SynthParams {
  int min_objects = 3;
  int max_objects = 8;
};

// Deterministic function of the seed: a slanted background plane plus random
// spheres and axis-aligned boxes under orthographic projection, shaded by a
// random directional light and quantized to 8 bits.
Scene synth_scene(std::uint64_t seed, int h, int w, const SynthParams& params = {});

// Binary PPM (P6, maxval 255) for RGB in [0, 1].
void save_ppm(const std::string& path, const Tensor& rgb);
Tensor load_ppm(const std::string& path);

// Binary PGM (P5, maxval 65535, big-endian samples) storing round(meters*1000).
void save_pgm16(const std::string& path, const Tensor& depth);
Tensor load_pgm16(const std::string& path);

struct ManifestEntry {
  std::string rgb;
  std::string depth;
};

struct DatasetManifest {
  std::vector<ManifestEntry> items;
  std::string split = "train";
  std::uint64_t seed = 0;
};

// The manifest file is a JSON array of {"rgb": path, "depth": path}; paths
// are relative to the manifest's directory.
void write_manifest(const std::string& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::string& path);

// Reads every scene referenced by dir/manifest.json.
std::vector<Scene> load_dataset(const std::string& dir);

}  // namespace drnet
