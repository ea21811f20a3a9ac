#include "drnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "drnet/rng.hpp"

namespace drnet {

namespace {

constexpr double kNear = 0.5;
constexpr double kFar = 10.0;

struct Sphere {
  double cx, cy, r;   // normalized image coordinates
  double cz, zr;      // front depth center and depth radius in meters
  double albedo[3];
};

struct Box {
  double x0, x1, y0, y1;  // normalized image coordinates
  double z;               // front face depth in meters
  double albedo[3];
};

double lambert(double nx, double ny, double nz, const double l[3]) {
  const double d = nx * l[0] + ny * l[1] + nz * l[2];
  return d > 0 ? d : 0.0;
}

}  // namespace

Scene synth_scene(std::uint64_t seed, int h, int w, const SynthParams& params) {
  if (h % 32 != 0 || w % 32 != 0 || h < 32 || w < 32) {
    throw ValueError("synth_scene: size " + std::to_string(h) + "x" +
                     std::to_string(w) + " must be divisible by 32");
  }
  if (params.min_objects < 0 || params.max_objects < params.min_objects) {
    throw ValueError("synth_scene: invalid object count range");
  }
  SplitMix64 rng(seed);

  // background plane, affine in the pixel grid, range kept inside [1, 7]
  const double d0 = rng.uniform(2.0, 6.0);
  const double sx = rng.uniform(-1.0, 1.0);
  const double sy = rng.uniform(-1.0, 1.0);
  double plane_albedo[3];
  for (auto& a : plane_albedo) a = rng.uniform(0.25, 1.0);

  // directional light, unit length, pointing toward the camera half-space
  double lx = rng.uniform(-0.6, 0.6);
  double ly = rng.uniform(-0.6, 0.6);
  double lz = -rng.uniform(0.5, 1.0);
  const double ln = std::sqrt(lx * lx + ly * ly + lz * lz);
  const double light[3] = {lx / ln, ly / ln, lz / ln};

  const int count =
      params.min_objects +
      static_cast<int>(rng.below(
          static_cast<std::uint64_t>(params.max_objects - params.min_objects + 1)));
  std::vector<Sphere> spheres;
  std::vector<Box> boxes;
  for (int i = 0; i < count; ++i) {
    const bool is_sphere = rng.uniform() < 0.5;
    if (is_sphere) {
      Sphere s;
      s.cx = rng.uniform(0.1, 0.9);
      s.cy = rng.uniform(0.1, 0.9);
      s.r = rng.uniform(0.06, 0.22);
      s.cz = rng.uniform(0.9, 0.8 * d0);
      s.zr = rng.uniform(0.1, 0.5);
      for (auto& a : s.albedo) a = rng.uniform(0.2, 1.0);
      spheres.push_back(s);
    } else {
      Box b;
      b.x0 = rng.uniform(0.05, 0.75);
      b.x1 = b.x0 + rng.uniform(0.08, 0.3);
      b.y0 = rng.uniform(0.05, 0.75);
      b.y1 = b.y0 + rng.uniform(0.08, 0.3);
      b.z = rng.uniform(0.9, 0.8 * d0);
      for (auto& a : b.albedo) a = rng.uniform(0.2, 1.0);
      boxes.push_back(b);
    }
  }

  std::vector<real_t> rgb(static_cast<std::size_t>(3) * h * w);
  std::vector<real_t> depth(static_cast<std::size_t>(h) * w);

  // plane normal from meters-per-unit slopes (shading only needs direction)
  const double pn_den = std::sqrt(sx * sx + sy * sy + 1.0);
  const double plane_n[3] = {sx / pn_den, sy / pn_den, -1.0 / pn_den};
  const double plane_shade = 0.25 + 0.75 * lambert(plane_n[0], plane_n[1],
                                                   plane_n[2], light);

  for (int y = 0; y < h; ++y) {
    const double v = h > 1 ? static_cast<double>(y) / (h - 1) : 0.0;
    for (int x = 0; x < w; ++x) {
      const double u = w > 1 ? static_cast<double>(x) / (w - 1) : 0.0;
      double z = d0 + sx * (u - 0.5) + sy * (v - 0.5);
      double shade = plane_shade;
      const double* albedo = plane_albedo;

      for (const auto& b : boxes) {
        if (u >= b.x0 && u <= b.x1 && v >= b.y0 && v <= b.y1 && b.z < z) {
          z = b.z;
          shade = 0.25 + 0.75 * lambert(0, 0, -1, light);
          albedo = b.albedo;
        }
      }
      for (const auto& s : spheres) {
        const double du = u - s.cx, dv = v - s.cy;
        const double rho2 = du * du + dv * dv;
        if (rho2 >= s.r * s.r) continue;
        const double g = std::sqrt(1.0 - rho2 / (s.r * s.r));
        const double zs = s.cz - s.zr * g;
        if (zs < z) {
          z = zs;
          // surface z(u,v) = cz - zr*g; normal ~ [-dz/du, -dz/dv, -1]
          const double dz_du = s.zr * du / (s.r * s.r * std::max(g, 1e-6));
          const double dz_dv = s.zr * dv / (s.r * s.r * std::max(g, 1e-6));
          const double den = std::sqrt(dz_du * dz_du + dz_dv * dz_dv + 1.0);
          shade = 0.25 + 0.75 * lambert(-dz_du / den, -dz_dv / den, -1.0 / den,
                                        light);
          albedo = s.albedo;
        }
      }

      z = std::min(std::max(z, kNear), kFar);
      depth[static_cast<std::size_t>(y) * w + x] = static_cast<real_t>(z);
      for (int c = 0; c < 3; ++c) {
        double val = std::min(std::max(albedo[c] * shade, 0.0), 1.0);
        // 8-bit quantization
        val = std::round(val * 255.0) / 255.0;
        rgb[(static_cast<std::size_t>(c) * h + y) * w + x] =
            static_cast<real_t>(val);
      }
    }
  }

  Scene scene;
  scene.rgb = Tensor::from_data({1, 3, h, w}, std::move(rgb));
  scene.depth = Tensor::from_data({1, 1, h, w}, std::move(depth));
  scene.seed = seed;
  return scene;
}

// ---- netpbm ----------------------------------------------------------------

namespace {

// Reads one whitespace-delimited token, skipping '#' comments.
std::string next_token(std::istream& is, const std::string& path) {
  std::string tok;
  int ch;
  while ((ch = is.get()) != EOF) {
    if (ch == '#') {
      while ((ch = is.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  if (tok.empty()) {
    throw ParseError(path + ": truncated header");
  }
  return tok;
}

int parse_dim(const std::string& tok, const std::string& path) {
  try {
    const int v = std::stoi(tok);
    if (v <= 0) throw ParseError(path + ": non-positive dimension");
    return v;
  } catch (const ParseError&) {
    throw;
  } catch (...) {
    throw ParseError(path + ": malformed header token '" + tok + "'");
  }
}

}  // namespace

void save_ppm(const std::string& path, const Tensor& rgb) {
  const Shape s = rgb.shape();
  if (s.n != 1 || s.c != 3) {
    throw DimensionError("save_ppm: expected (1,3,h,w), got " + to_string(s));
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError(path + ": cannot open for writing");
  os << "P6\n" << s.w << " " << s.h << "\n255\n";
  const auto& d = rgb.data();
  std::vector<unsigned char> row(static_cast<std::size_t>(s.w) * 3);
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  for (int y = 0; y < s.h; ++y) {
    for (int x = 0; x < s.w; ++x) {
      for (int c = 0; c < 3; ++c) {
        double v = d[c * plane + static_cast<std::size_t>(y) * s.w + x];
        v = std::min(std::max(v, 0.0), 1.0);
        row[static_cast<std::size_t>(x) * 3 + c] =
            static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
    os.write(reinterpret_cast<const char*>(row.data()),
             static_cast<std::streamsize>(row.size()));
  }
  if (!os) throw ParseError(path + ": write failed");
}

Tensor load_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError(path + ": cannot open");
  const std::string magic = next_token(is, path);
  if (magic != "P6") throw ParseError(path + ": bad magic '" + magic + "'");
  const int w = parse_dim(next_token(is, path), path);
  const int h = parse_dim(next_token(is, path), path);
  const std::string maxval = next_token(is, path);
  if (maxval != "255") {
    throw ParseError(path + ": maxval mismatch, expected 255 got " + maxval);
  }
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 3);
  if (!is.read(reinterpret_cast<char*>(raw.data()),
               static_cast<std::streamsize>(raw.size()))) {
    throw ParseError(path + ": truncated payload");
  }
  std::vector<real_t> data(raw.size());
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        data[c * plane + static_cast<std::size_t>(y) * w + x] =
            static_cast<real_t>(raw[(static_cast<std::size_t>(y) * w + x) * 3 + c] /
                                255.0);
      }
    }
  }
  return Tensor::from_data({1, 3, h, w}, std::move(data));
}

void save_pgm16(const std::string& path, const Tensor& depth) {
  const Shape s = depth.shape();
  if (s.n != 1 || s.c != 1) {
    throw DimensionError("save_pgm16: expected (1,1,h,w), got " + to_string(s));
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError(path + ": cannot open for writing");
  os << "P5\n" << s.w << " " << s.h << "\n65535\n";
  const auto& d = depth.data();
  std::vector<unsigned char> row(static_cast<std::size_t>(s.w) * 2);
  for (int y = 0; y < s.h; ++y) {
    for (int x = 0; x < s.w; ++x) {
      double mm = std::lround(
          std::min(std::max(static_cast<double>(d[static_cast<std::size_t>(y) * s.w + x]),
                            0.0),
                   65.535) *
          1000.0);
      const auto v = static_cast<std::uint16_t>(mm);
      row[static_cast<std::size_t>(x) * 2] = static_cast<unsigned char>(v >> 8);
      row[static_cast<std::size_t>(x) * 2 + 1] = static_cast<unsigned char>(v & 0xFF);
    }
    os.write(reinterpret_cast<const char*>(row.data()),
             static_cast<std::streamsize>(row.size()));
  }
  if (!os) throw ParseError(path + ": write failed");
}

Tensor load_pgm16(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError(path + ": cannot open");
  const std::string magic = next_token(is, path);
  if (magic != "P5") throw ParseError(path + ": bad magic '" + magic + "'");
  const int w = parse_dim(next_token(is, path), path);
  const int h = parse_dim(next_token(is, path), path);
  const std::string maxval = next_token(is, path);
  if (maxval != "65535") {
    throw ParseError(path + ": maxval mismatch, expected 65535 got " + maxval);
  }
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 2);
  if (!is.read(reinterpret_cast<char*>(raw.data()),
               static_cast<std::streamsize>(raw.size()))) {
    throw ParseError(path + ": truncated payload");
  }
  std::vector<real_t> data(static_cast<std::size_t>(w) * h);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::uint16_t v =
        static_cast<std::uint16_t>((raw[i * 2] << 8) | raw[i * 2 + 1]);
    data[i] = static_cast<real_t>(v / 1000.0);
  }
  return Tensor::from_data({1, 1, h, w}, std::move(data));
}

// ---- manifest ----------------------------------------------------------------

void write_manifest(const std::string& path, const DatasetManifest& manifest) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& item : manifest.items) {
    arr.push_back({{"rgb", item.rgb}, {"depth", item.depth}});
  }
  std::ofstream os(path);
  if (!os) throw ParseError(path + ": cannot open for writing");
  os << arr.dump(2) << "\n";
}

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParseError(path + ": cannot open");
  nlohmann::json doc;
  try {
    is >> doc;
  } catch (const std::exception& e) {
    throw ParseError(path + ": invalid JSON: " + e.what());
  }
  if (!doc.is_array()) throw ParseError(path + ": manifest must be a JSON array");
  DatasetManifest m;
  for (const auto& item : doc) {
    if (!item.is_object() || !item.contains("rgb") || !item.contains("depth")) {
      throw ParseError(path + ": manifest entries need \"rgb\" and \"depth\"");
    }
    m.items.push_back({item["rgb"].get<std::string>(),
                       item["depth"].get<std::string>()});
  }
  return m;
}

std::vector<Scene> load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  const auto manifest = read_manifest((fs::path(dir) / "manifest.json").string());
  std::vector<Scene> scenes;
  scenes.reserve(manifest.items.size());
  for (const auto& item : manifest.items) {
    Scene s;
    s.rgb = load_ppm((fs::path(dir) / item.rgb).string());
    s.depth = load_pgm16((fs::path(dir) / item.depth).string());
    if (s.rgb.shape().h != s.depth.shape().h ||
        s.rgb.shape().w != s.depth.shape().w) {
      throw ParseError(item.rgb + ": rgb and depth sizes disagree");
    }
    scenes.push_back(std::move(s));
  }
  return scenes;
}

}  // namespace drnet
