#include "sscd/data.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sscd {

Dataset ingest(const std::string& root, IngestReport* report) {
  const fs::path a_dir = fs::path(root) / "A";
  const fs::path b_dir = fs::path(root) / "B";
  const fs::path l_dir = fs::path(root) / "label";
  for (const auto& d : {a_dir, b_dir, l_dir})
    if (!fs::is_directory(d))
      throw std::runtime_error("ingest: missing directory " + d.string());

  std::set<std::string> names;
  for (const auto& d : {a_dir, b_dir})
    for (const auto& e : fs::directory_iterator(d))
      if (e.is_regular_file()) names.insert(e.path().filename().string());

  Dataset ds;
  for (const auto& name : names) {
    const fs::path pa = a_dir / name, pb = b_dir / name, pl = l_dir / name;
    std::string missing;
    if (!fs::exists(pa)) missing = "missing A/" + name;
    else if (!fs::exists(pb)) missing = "missing B/" + name;
    else if (!fs::exists(pl)) missing = "missing label/" + name;
    if (!missing.empty()) {
      if (report) report->rejects.push_back({name, missing});
      continue;
    }
    ImagePair s;
    s.id = name;
    s.a = load_image_rgb(pa.string());
    s.b = load_image_rgb(pb.string());
    s.label = load_mask(pl.string());
    if (!s.a.same_shape(s.b) || s.label->shape(0) != s.a.shape(1) ||
        s.label->shape(1) != s.a.shape(2))
      throw std::runtime_error("ingest: size mismatch in triplet " + name);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

void write_dataset(const Dataset& dataset, const std::string& root) {
  const fs::path a_dir = fs::path(root) / "A";
  const fs::path b_dir = fs::path(root) / "B";
  const fs::path l_dir = fs::path(root) / "label";
  fs::create_directories(a_dir);
  fs::create_directories(b_dir);
  fs::create_directories(l_dir);
  for (const auto& s : dataset.samples) {
    const std::string name =
        s.id.find('.') == std::string::npos ? s.id + ".png" : s.id;
    save_image_rgb((a_dir / name).string(), s.a);
    save_image_rgb((b_dir / name).string(), s.b);
    if (!s.label)
      throw std::runtime_error("write_dataset: sample without label: " + s.id);
    save_mask((l_dir / name).string(), *s.label);
  }
}

std::vector<ImagePair> crop_patches(const ImagePair& sample, int patch_size,
                                    int* pad_warnings) {
  if (patch_size <= 0)
    throw std::invalid_argument("crop_patches: non-positive patch size");
  const int h = sample.a.shape(1), w = sample.a.shape(2);
  std::vector<ImagePair> out;

  if (h < patch_size || w < patch_size) {
    if (pad_warnings) ++*pad_warnings;
    const int need_h = std::max(0, patch_size - h);
    const int need_w = std::max(0, patch_size - w);
    const int top = need_h / 2, left = need_w / 2;
    ImagePair p;
    p.id = sample.id + "_pad";
    p.a = crop(reflect_pad(sample.a, top, need_h - top, left, need_w - left), 0,
               0, patch_size, patch_size);
    p.b = crop(reflect_pad(sample.b, top, need_h - top, left, need_w - left), 0,
               0, patch_size, patch_size);
    if (sample.label)
      p.label = crop(
          reflect_pad(*sample.label, top, need_h - top, left, need_w - left), 0,
          0, patch_size, patch_size);
    out.push_back(std::move(p));
    return out;
  }

  for (int row = 0; row + patch_size <= h; row += patch_size)
    for (int col = 0; col + patch_size <= w; col += patch_size) {
      ImagePair p;
      p.id = sample.id + "_r" + std::to_string(row / patch_size) + "c" +
             std::to_string(col / patch_size);
      p.a = crop(sample.a, row, col, patch_size, patch_size);
      p.b = crop(sample.b, row, col, patch_size, patch_size);
      if (sample.label)
        p.label = crop(*sample.label, row, col, patch_size, patch_size);
      out.push_back(std::move(p));
    }
  return out;
}

std::string SplitManifest::to_json() const {
  json j;
  j["schema_version"] = schema_version;
  j["ratio"] = ratio;
  j["seed"] = seed;
  j["labeled_ids"] = labeled_ids;
  j["unlabeled_ids"] = unlabeled_ids;
  j["val_ids"] = val_ids;
  j["test_ids"] = test_ids;
  return j.dump(2) + "\n";
}

SplitManifest SplitManifest::from_json(const std::string& text) {
  json j = json::parse(text);
  SplitManifest m;
  m.schema_version = j.at("schema_version").get<int>();
  if (m.schema_version != 1)
    throw std::runtime_error("manifest: unsupported schema_version " +
                             std::to_string(m.schema_version));
  m.ratio = j.at("ratio").get<double>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.labeled_ids = j.at("labeled_ids").get<std::vector<std::string>>();
  m.unlabeled_ids = j.at("unlabeled_ids").get<std::vector<std::string>>();
  m.val_ids = j.at("val_ids").get<std::vector<std::string>>();
  m.test_ids = j.at("test_ids").get<std::vector<std::string>>();
  return m;
}

void SplitManifest::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("manifest: cannot write " + path);
  f << to_json();
}

SplitManifest SplitManifest::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("manifest: cannot read " + path);
  std::string text((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  return from_json(text);
}

SplitManifest make_split(const std::vector<std::string>& ids, double ratio,
                         std::uint64_t seed, double val_fraction,
                         double test_fraction) {
  if (!(ratio > 0 && ratio <= 1))
    throw std::invalid_argument("make_split: ratio must be in (0,1]");
  if (val_fraction < 0 || test_fraction < 0 ||
      val_fraction + test_fraction >= 1)
    throw std::invalid_argument("make_split: bad val/test fractions");
  {
    std::set<std::string> uniq(ids.begin(), ids.end());
    if (uniq.size() != ids.size())
      throw std::invalid_argument("make_split: duplicate ids");
  }

  std::vector<std::string> shuffled = ids;
  Rng rng = StreamKey(seed).with("split").rng();
  std::shuffle(shuffled.begin(), shuffled.end(), rng);

  const auto n = static_cast<std::int64_t>(shuffled.size());
  const auto n_val = static_cast<std::int64_t>(std::lround(val_fraction * n));
  const auto n_test = static_cast<std::int64_t>(std::lround(test_fraction * n));
  const std::int64_t n_train = n - n_val - n_test;
  const auto n_labeled = static_cast<std::int64_t>(std::lround(ratio * n_train));
  if (n_labeled <= 0)
    throw std::invalid_argument("make_split: ratio selects zero labeled samples");

  SplitManifest m;
  m.ratio = ratio;
  m.seed = seed;
  auto it = shuffled.begin();
  m.val_ids.assign(it, it + n_val);
  it += n_val;
  m.test_ids.assign(it, it + n_test);
  it += n_test;
  m.labeled_ids.assign(it, it + n_labeled);
  it += n_labeled;
  m.unlabeled_ids.assign(it, shuffled.end());
  for (auto* v : {&m.val_ids, &m.test_ids, &m.labeled_ids, &m.unlabeled_ids})
    std::sort(v->begin(), v->end());
  return m;
}

namespace {

struct Shape {
  bool disc = false;
  int top = 0, left = 0, height = 0, width = 0;  // bbox; disc inscribed
  float color[3] = {0, 0, 0};

  bool contains(int y, int x) const {
    if (y < top || y >= top + height || x < left || x >= left + width)
      return false;
    if (!disc) return true;
    const double cy = top + (height - 1) / 2.0, cx = left + (width - 1) / 2.0;
    const double ry = height / 2.0, rx = width / 2.0;
    const double dy = (y - cy) / ry, dx = (x - cx) / rx;
    return dy * dy + dx * dx <= 1.0;
  }
  std::int64_t area(int h, int w) const {
    std::int64_t n = 0;
    for (int y = std::max(0, top); y < std::min(h, top + height); ++y)
      for (int x = std::max(0, left); x < std::min(w, left + width); ++x)
        if (contains(y, x)) ++n;
    return n;
  }
};

void paint(Tensor<float>& img, const Shape& s) {
  const int h = img.shape(1), w = img.shape(2);
  for (int y = std::max(0, s.top); y < std::min(h, s.top + s.height); ++y)
    for (int x = std::max(0, s.left); x < std::min(w, s.left + s.width); ++x)
      if (s.contains(y, x))
        for (int c = 0; c < 3; ++c) img.at(c, y, x) = s.color[c];
}

void mark(Tensor<std::uint8_t>& occ, const Shape& s, std::uint8_t v) {
  const int h = occ.shape(0), w = occ.shape(1);
  for (int y = std::max(0, s.top); y < std::min(h, s.top + s.height); ++y)
    for (int x = std::max(0, s.left); x < std::min(w, s.left + s.width); ++x)
      if (s.contains(y, x)) occ.at(y, x) = v;
}

bool overlaps(const Tensor<std::uint8_t>& occ, const Shape& s) {
  const int h = occ.shape(0), w = occ.shape(1);
  for (int y = std::max(0, s.top); y < std::min(h, s.top + s.height); ++y)
    for (int x = std::max(0, s.left); x < std::min(w, s.left + s.width); ++x)
      if (s.contains(y, x) && occ.at(y, x)) return true;
  return false;
}

// Draws a shape whose bbox fits the image and whose footprint avoids occ;
// side length targets sqrt(budget) when a budget is given.
bool place_shape(Shape& out, const Tensor<std::uint8_t>& occ, Rng& rng,
                 int size, double target_area, Tensor<float>& background,
                 double contrast_lo, double contrast_hi) {
  const int lo = 5;
  for (int attempt = 0; attempt < 60; ++attempt) {
    Shape s;
    s.disc = bernoulli(rng, 0.5);
    int side_h, side_w;
    if (target_area > 0) {
      const double side = std::sqrt(target_area);
      side_h = std::clamp(static_cast<int>(std::lround(
                              side * uniform(rng, 0.8, 1.25))),
                          lo, size - 2);
      side_w = std::clamp(static_cast<int>(std::lround(target_area / side_h *
                                                       (s.disc ? 4.0 / 3.14159 : 1.0))),
                          lo, size - 2);
    } else {
      side_h = uniform_int(rng, lo, std::max(lo, size / 3));
      side_w = uniform_int(rng, lo, std::max(lo, size / 3));
    }
    s.height = side_h;
    s.width = side_w;
    s.top = uniform_int(rng, 0, size - s.height);
    s.left = uniform_int(rng, 0, size - s.width);
    if (overlaps(occ, s)) continue;
    // Contrast the fill against the local background mean.
    const int cy = s.top + s.height / 2, cx = s.left + s.width / 2;
    for (int c = 0; c < 3; ++c) {
      const float bg = background.at(c, cy, cx);
      const float delta = static_cast<float>(uniform(rng, contrast_lo, contrast_hi)) *
                          (bg > 0.5f ? -1.f : 1.f);
      const float jitter = static_cast<float>(uniform(rng, -0.05, 0.05));
      s.color[c] = std::clamp(bg + delta + jitter, 0.0f, 1.0f);
    }
    out = s;
    return true;
  }
  return false;
}

// Three texture families (smooth, oriented stripes, coarse blotches) so a
// handful of labeled samples cannot cover the appearance distribution. All
// draws happen unconditionally to keep the stream layout family-independent.
Tensor<float> make_background(int size, Rng& rng) {
  Tensor<float> img({3, size, size});
  const int family = uniform_int(rng, 0, 2);
  const double gx = uniform(rng, -0.15, 0.15), gy = uniform(rng, -0.15, 0.15);
  float base[3];
  for (auto& b : base) b = static_cast<float>(uniform(rng, 0.2, 0.8));
  const double angle = uniform(rng, 0.0, 3.14159265);
  const double period = uniform(rng, 6.0, 16.0);
  const double stripe_amp = family == 1 ? uniform(rng, 0.05, 0.14) : 0.0;
  const double kx = std::cos(angle) * 2.0 * 3.14159265 / period;
  const double ky = std::sin(angle) * 2.0 * 3.14159265 / period;
  const double noise_amp = family == 2 ? 0.40 : 0.22;
  Tensor<float> noise({3, size, size});
  fill_uniform(noise, rng, -0.5f, 0.5f);
  noise = gaussian_blur(noise, family == 2 ? 2.5 : 1.5);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double g =
            gx * (x / double(size) - 0.5) + gy * (y / double(size) - 0.5);
        const double stripe = stripe_amp * std::sin(kx * x + ky * y);
        img.at(c, y, x) = std::clamp(
            static_cast<float>(base[c] + g + stripe +
                               noise_amp * noise.at(c, y, x)),
            0.0f, 1.0f);
      }
  return img;
}

}  // namespace

Dataset synth_generate(const SynthParams& params, std::uint64_t seed) {
  if (params.size <= 0 || params.count < 0)
    throw std::invalid_argument("synth_generate: bad count/size");
  Dataset ds;
  ds.samples.reserve(params.count);
  const int size = params.size;
  const auto total_px = static_cast<double>(size) * size;

  for (int i = 0; i < params.count; ++i) {
    Rng rng = StreamKey(seed).with("synth").with(static_cast<std::uint64_t>(i)).rng();
    const bool zero_change =
        params.zero_change_period > 0 && i % params.zero_change_period ==
                                             params.zero_change_period - 1;

    Tensor<float> background = make_background(size, rng);
    Tensor<std::uint8_t> occ({size, size}, std::uint8_t{0});
    std::vector<Shape> base_shapes;
    const int n_base = uniform_int(rng, params.base_shapes_lo, params.base_shapes_hi);
    for (int k = 0; k < n_base; ++k) {
      Shape s;
      if (place_shape(s, occ, rng, size, 0.0, background, params.contrast_lo,
                      params.contrast_hi)) {
        mark(occ, s, 1);
        base_shapes.push_back(s);
      }
    }

    std::vector<Shape> removed, added;
    Tensor<std::uint8_t> label({size, size}, std::uint8_t{0});
    if (!zero_change) {
      const double target =
          uniform(rng, params.prevalence_lo, params.prevalence_hi) * total_px;
      std::int64_t changed = 0;
      // Alternate removing base shapes and adding fresh ones until the
      // changed-footprint budget is met.
      std::vector<int> removable(base_shapes.size());
      std::iota(removable.begin(), removable.end(), 0);
      std::shuffle(removable.begin(), removable.end(), rng);
      int guard = 0;
      while (changed < target && guard++ < 40) {
        const bool do_remove = !removable.empty() && bernoulli(rng, 0.5);
        if (do_remove) {
          const int idx = removable.back();
          removable.pop_back();
          const std::int64_t area = base_shapes[idx].area(size, size);
          // Oversized removals would blow past the prevalence cap.
          if (changed + area > target + 0.02 * total_px) continue;
          removed.push_back(base_shapes[idx]);
          changed += area;
        } else {
          Shape s;
          const double budget = std::max(25.0, target - changed);
          if (!place_shape(s, occ, rng, size, std::min(budget, total_px / 8),
                           background, params.contrast_lo, params.contrast_hi))
            continue;
          mark(occ, s, 1);
          added.push_back(s);
          changed += s.area(size, size);
        }
      }
      for (const auto& s : removed) mark(label, s, 1);
      for (const auto& s : added) mark(label, s, 1);
    }

    ImagePair sample;
    char buf[32];
    std::snprintf(buf, sizeof buf, "synth_%06d", i);
    sample.id = buf;
    sample.a = background;
    for (const auto& s : base_shapes) paint(sample.a, s);

    sample.b = background;
    for (const auto& s : base_shapes) {
      bool keep = true;
      for (const auto& r : removed)
        if (r.top == s.top && r.left == s.left && r.height == s.height &&
            r.width == s.width && r.disc == s.disc)
          keep = false;
      if (keep) paint(sample.b, s);
    }
    for (const auto& s : added) paint(sample.b, s);

    // Global photometric drift, a shading gradient, and sensor noise on the
    // second acquisition; none of it counts as change.
    const double fb =
        uniform(rng, params.drift_brightness_lo, params.drift_brightness_hi);
    double cast[3];
    for (auto& c : cast) c = uniform(rng, -params.drift_cast, params.drift_cast);
    const double sgx = uniform(rng, -params.drift_shading, params.drift_shading);
    const double sgy = uniform(rng, -params.drift_shading, params.drift_shading);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
          const double shade = sgx * (x / double(size) - 0.5) +
                               sgy * (y / double(size) - 0.5);
          double v = sample.b.at(c, y, x) * fb + cast[c] + shade;
          if (params.sensor_noise > 0)
            v += truncated_normal(rng, params.sensor_noise);
          sample.b.at(c, y, x) = std::clamp(static_cast<float>(v), 0.0f, 1.0f);
        }

    sample.label = std::move(label);
    ds.samples.push_back(std::move(sample));
  }
  return ds;
}

}  // namespace sscd
