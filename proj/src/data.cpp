#include "d2a2/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "d2a2/image_io.hpp"
#include "d2a2/layers.hpp"
#include "d2a2/resample.hpp"

namespace d2a2 {

std::string to_string(DepthUnits units) {
  switch (units) {
    case DepthUnits::Centimeters: return "centimeters";
    case DepthUnits::Meters: return "meters";
    case DepthUnits::Disparity: return "disparity";
    case DepthUnits::Synthetic: return "synthetic";
  }
  return "synthetic";
}

DepthUnits parse_depth_units(const std::string& text) {
  if (text == "centimeters") return DepthUnits::Centimeters;
  if (text == "meters") return DepthUnits::Meters;
  if (text == "disparity") return DepthUnits::Disparity;
  if (text == "synthetic") return DepthUnits::Synthetic;
  throw std::invalid_argument("unknown depth units '" + text + "'");
}

NormalizationRecord NormalizationRecord::from_depth(const Tensor<double>& depth) {
  if (depth.empty()) throw ShapeError("normalization of an empty depth map");
  const auto [lo, hi] = std::minmax_element(depth.vec().begin(), depth.vec().end());
  return NormalizationRecord{*lo, *hi};
}

Tensor<double> NormalizationRecord::normalize(const Tensor<double>& t) const {
  Tensor<double> out(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = normalize(t[i]);
  return out;
}

Tensor<double> NormalizationRecord::denormalize(const Tensor<double>& t) const {
  Tensor<double> out(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = denormalize(t[i]);
  return out;
}

Tensor<double> degrade(const Tensor<double>& depth_hr, int scale) { return bicubic_resize(depth_hr, Ratio::down(scale)); }

SamplePair make_pair(Tensor<double> depth_hr, Tensor<double> rgb_hr, int scale, DepthUnits units, double depth_min,
                     double depth_max) {
  const Shape& d = depth_hr.shape();
  const Shape& r = rgb_hr.shape();
  if (d.n != 1 || d.c != 1) throw ShapeError("depth must be (1,1,H,W), got " + d.str());
  if (r.n != 1 || r.c != 3 || r.h != d.h || r.w != d.w) {
    throw ShapeError("rgb " + r.str() + " does not match depth " + d.str());
  }
  if (!(depth_min <= depth_max)) throw std::invalid_argument("depth_min exceeds depth_max");
  for (auto& v : depth_hr.vec()) v = std::clamp(v, depth_min, depth_max);
  SamplePair pair;
  pair.depth_lr = degrade(depth_hr, scale);
  pair.depth_hr = std::move(depth_hr);
  pair.rgb_hr = std::move(rgb_hr);
  pair.scale = scale;
  pair.units = units;
  pair.depth_min = depth_min;
  pair.depth_max = depth_max;
  return pair;
}

Dihedral Dihedral::compose(const Dihedral& first, const Dihedral& second) {
  // Canonical form rotate^r . hflip^f, using vflip = rotate^2 . hflip and
  // hflip . rotate = rotate^-1 . hflip.
  auto canon = [](const Dihedral& d) {
    const int r = ((d.quarter_turns + (d.vflip ? 2 : 0)) % 4 + 4) % 4;
    const bool f = d.hflip != d.vflip;
    return std::pair{r, f};
  };
  const auto [ra, fa] = canon(first);
  const auto [rb, fb] = canon(second);
  const int r = ((rb + (fb ? -ra : ra)) % 4 + 4) % 4;
  return Dihedral{fa != fb, false, r};
}

Tensor<double> apply_dihedral(const Tensor<double>& t, const Dihedral& d) {
  const Shape s = t.shape();
  Tensor<double> cur = t;
  if (d.hflip || d.vflip) {
    Tensor<double> out(s);
    for (std::size_t n = 0; n < s.n; ++n)
      for (std::size_t c = 0; c < s.c; ++c)
        for (std::size_t y = 0; y < s.h; ++y)
          for (std::size_t x = 0; x < s.w; ++x) {
            const std::size_t sy = d.vflip ? s.h - 1 - y : y;
            const std::size_t sx = d.hflip ? s.w - 1 - x : x;
            out.at(n, c, y, x) = cur.at(n, c, sy, sx);
          }
    cur = std::move(out);
  }
  const int turns = ((d.quarter_turns % 4) + 4) % 4;
  for (int k = 0; k < turns; ++k) {
    const Shape cs = cur.shape();
    Tensor<double> out(Shape{cs.n, cs.c, cs.w, cs.h});
    for (std::size_t n = 0; n < cs.n; ++n)
      for (std::size_t c = 0; c < cs.c; ++c)
        for (std::size_t i = 0; i < cs.w; ++i)
          for (std::size_t j = 0; j < cs.h; ++j) out.at(n, c, i, j) = cur.at(n, c, j, cs.w - 1 - i);
    cur = std::move(out);
  }
  return cur;
}

SamplePair apply_dihedral(const SamplePair& pair, const Dihedral& d) {
  SamplePair out = pair;
  out.depth_hr = apply_dihedral(pair.depth_hr, d);
  out.rgb_hr = apply_dihedral(pair.rgb_hr, d);
  out.depth_lr = apply_dihedral(pair.depth_lr, d);
  return out;
}

Dihedral draw_dihedral(std::mt19937_64& rng, bool rotations) {
  Dihedral d;
  d.hflip = (rng() >> 63) != 0;
  d.vflip = (rng() >> 63) != 0;
  d.quarter_turns = rotations ? static_cast<int>(rng() >> 62) : 0;
  return d;
}

SamplePair augment(const SamplePair& pair, std::mt19937_64& rng, bool rotations) {
  if (rotations && pair.depth_hr.shape().h != pair.depth_hr.shape().w) {
    throw ShapeError("rotation augmentation needs a square sample, got " + pair.depth_hr.shape().str());
  }
  return apply_dihedral(pair, draw_dihedral(rng, rotations));
}

SamplePair crop(const SamplePair& pair, std::size_t top, std::size_t left, std::size_t height, std::size_t width) {
  const Shape& s = pair.depth_hr.shape();
  if (top + height > s.h || left + width > s.w) {
    throw ShapeError("crop " + std::to_string(height) + "x" + std::to_string(width) + " at (" + std::to_string(top) +
                     "," + std::to_string(left) + ") exceeds image " + s.str());
  }
  auto cut = [&](const Tensor<double>& t) {
    Tensor<double> out(Shape{1, t.shape().c, height, width});
    for (std::size_t c = 0; c < t.shape().c; ++c)
      for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x) out.at(0, c, y, x) = t.at(0, c, top + y, left + x);
    return out;
  };
  SamplePair out = pair;
  out.depth_hr = cut(pair.depth_hr);
  out.rgb_hr = cut(pair.rgb_hr);
  out.depth_lr = degrade(out.depth_hr, pair.scale);
  return out;
}

SamplePair random_crop(const SamplePair& pair, std::size_t size, std::mt19937_64& rng) {
  const Shape& s = pair.depth_hr.shape();
  const auto step = static_cast<std::size_t>(pair.scale);
  if (size == 0 || size % step != 0) {
    throw ShapeError("crop size " + std::to_string(size) + " must be a positive multiple of scale " +
                     std::to_string(pair.scale));
  }
  if (size > s.h || size > s.w) throw ShapeError("crop size " + std::to_string(size) + " exceeds image " + s.str());
  const std::size_t rows = (s.h - size) / step + 1;
  const std::size_t cols = (s.w - size) / step + 1;
  const std::size_t top = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(rows)) * step;
  const std::size_t left = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(cols)) * step;
  return crop(pair, top, left, size, size);
}

SyntheticScene synth_scene_with_labels(std::uint64_t seed, std::size_t size, int scale) {
  if (size < 32 || size % 4 != 0 || scale < 1 || size % static_cast<std::size_t>(scale) != 0) {
    throw std::invalid_argument("synthetic scene size " + std::to_string(size) +
                                " must be >= 32 and divisible by 4 and by the scale");
  }
  std::mt19937_64 rng(seed);
  const double S = static_cast<double>(size);

  // Distinct depth levels so every region boundary is a depth discontinuity.
  std::vector<double> levels;
  for (int k = 0; k < 9; ++k) levels.push_back(1.5 + 0.9 * k);
  for (std::size_t i = levels.size() - 1; i > 0; --i) {
    std::swap(levels[i], levels[static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i + 1))]);
  }
  const int shapes = 3 + static_cast<int>(rng() % 4);
  const int regions = shapes + 1;

  std::vector<int> labels(size * size, 0);
  for (int r = 1; r < regions; ++r) {
    const bool ellipse = (rng() >> 63) != 0;
    const double cy = uniform(rng, 0.15, 0.85) * S;
    const double cx = uniform(rng, 0.15, 0.85) * S;
    const double hy = uniform(rng, 0.1, 0.3) * S;
    const double hx = uniform(rng, 0.1, 0.3) * S;
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        const double dy = (static_cast<double>(y) + 0.5 - cy) / hy;
        const double dx = (static_cast<double>(x) + 0.5 - cx) / hx;
        const bool inside = ellipse ? dy * dy + dx * dx <= 1.0 : std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
        if (inside) labels[y * size + x] = r;
      }
    }
  }

  struct Region {
    double level, gy, gx;
    double color[3];
    bool stripes;
    double period, angle, amp;
  };
  std::vector<Region> reg(static_cast<std::size_t>(regions));
  for (int r = 0; r < regions; ++r) {
    Region& g = reg[static_cast<std::size_t>(r)];
    g.level = levels[static_cast<std::size_t>(r)];
    g.gy = uniform(rng, -0.25, 0.25);
    g.gx = uniform(rng, -0.25, 0.25);
    for (double& c : g.color) c = uniform(rng, 0.2, 0.8);
    g.stripes = (rng() >> 63) != 0;
    g.period = uniform(rng, 3.0, 8.0);
    g.angle = uniform(rng, 0.0, std::numbers::pi);
    g.amp = uniform(rng, 0.08, 0.18);
  }

  Tensor<double> depth(Shape{1, 1, size, size});
  Tensor<double> rgb(Shape{1, 3, size, size});
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const Region& g = reg[static_cast<std::size_t>(labels[y * size + x])];
      const double u = static_cast<double>(y) / S - 0.5;
      const double v = static_cast<double>(x) / S - 0.5;
      depth.at(0, 0, y, x) = g.level + g.gy * u + g.gx * v;
      double pattern;
      if (g.stripes) {
        const double t = static_cast<double>(y) * std::sin(g.angle) + static_cast<double>(x) * std::cos(g.angle);
        pattern = std::sin(2.0 * std::numbers::pi * t / g.period);
      } else {
        const auto cell = static_cast<std::size_t>(g.period);
        pattern = ((y / cell + x / cell) % 2 == 0) ? 1.0 : -1.0;
      }
      for (std::size_t c = 0; c < 3; ++c) {
        rgb.at(0, c, y, x) = std::clamp(g.color[c] + g.amp * pattern, 0.0, 1.0);
      }
    }
  }
  SyntheticScene scene;
  scene.pair = make_pair(std::move(depth), std::move(rgb), scale, DepthUnits::Synthetic, 1.0, 10.0);
  scene.labels = std::move(labels);
  return scene;
}

SamplePair synth_scene(std::uint64_t seed, std::size_t size, int scale) {
  return synth_scene_with_labels(seed, size, scale).pair;
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path);
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path fp(p);
    return (fp.is_absolute() ? fp : base / fp).string();
  };
  std::vector<ManifestEntry> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, '\t')) fields.push_back(f);
    if (fields.size() != 5) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected 5 tab-separated fields, got " +
                               std::to_string(fields.size()));
    }
    ManifestEntry e;
    e.depth_path = resolve(fields[0]);
    e.rgb_path = resolve(fields[1]);
    try {
      e.units = parse_depth_units(fields[2]);
      e.depth_min = std::stod(fields[3]);
      e.depth_max = std::stod(fields[4]);
    } catch (const std::exception& ex) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + ex.what());
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

std::vector<SamplePair> load_manifest_pairs(const std::string& path, int scale, std::size_t multiple) {
  std::vector<SamplePair> pairs;
  for (const auto& e : read_manifest(path)) {
    Tensor<double> depth = read_image(e.depth_path);
    Tensor<double> rgb = read_image(e.rgb_path);
    if (depth.shape().c != 1) throw ImageError(e.depth_path + " is not a grayscale depth map");
    if (rgb.shape().c != 3) throw ImageError(e.rgb_path + " is not an RGB image");
    const std::size_t h = depth.shape().h / multiple * multiple;
    const std::size_t w = depth.shape().w / multiple * multiple;
    if (h == 0 || w == 0) throw ShapeError(e.depth_path + " is smaller than " + std::to_string(multiple) + " pixels");
    SamplePair full;
    full.depth_hr = std::move(depth);
    full.rgb_hr = std::move(rgb);
    full.scale = scale;
    const SamplePair cut = crop(full, 0, 0, h, w);
    pairs.push_back(make_pair(cut.depth_hr, cut.rgb_hr, scale, e.units, e.depth_min, e.depth_max));
  }
  return pairs;
}

std::vector<SamplePair> synthetic_set(std::size_t count, std::size_t size, int scale, std::uint64_t first_seed) {
  std::vector<SamplePair> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(synth_scene(first_seed + i, size, scale));
  return out;
}

bool is_synthetic_spec(const std::string& spec) { return spec.rfind("synthetic:", 0) == 0; }

std::vector<SamplePair> load_dataset(const std::string& spec, int scale, std::size_t multiple,
                                     std::size_t synthetic_size, std::uint64_t first_seed) {
  if (is_synthetic_spec(spec)) {
    const std::string count = spec.substr(10);
    std::size_t used = 0;
    unsigned long n = 0;
    try {
      n = std::stoul(count, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != count.size() || n == 0) throw std::invalid_argument("bad dataset spec '" + spec + "'");
    return synthetic_set(n, synthetic_size, scale, first_seed);
  }
  auto pairs = load_manifest_pairs(spec, scale, multiple);
  if (pairs.empty()) throw std::invalid_argument("manifest " + spec + " lists no pairs");
  return pairs;
}

Tensor<double> stack(const std::vector<const Tensor<double>*>& items) {
  if (items.empty()) throw ShapeError("stack of zero tensors");
  const Shape s = items.front()->shape();
  Tensor<double> out(Shape{items.size(), s.c, s.h, s.w});
  const std::size_t each = s.c * s.h * s.w;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const Shape& si = items[i]->shape();
    if (si.n != 1 || si.c != s.c || si.h != s.h || si.w != s.w) {
      throw ShapeError("stack: item " + std::to_string(i) + " has shape " + si.str() + ", expected " + s.str());
    }
    std::copy_n(items[i]->data(), each, out.data() + i * each);
  }
  return out;
}

}  // namespace d2a2
