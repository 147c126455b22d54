#include "repose/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "repose/image_io.hpp"

namespace repose {

namespace fs = std::filesystem;

double HeadBox::diagonal() const { return std::hypot(x2 - x1, y2 - y1); }

AffineTransform AffineTransform::inverse() const {
  const double det = a * d - b * c;
  if (det == 0.0) throw std::invalid_argument("affine transform is singular");
  AffineTransform inv;
  inv.a = d / det;
  inv.b = -b / det;
  inv.c = -c / det;
  inv.d = a / det;
  inv.tx = -(inv.a * tx + inv.b * ty);
  inv.ty = -(inv.c * tx + inv.d * ty);
  return inv;
}

AffineTransform AffineTransform::compose(const AffineTransform& o, const AffineTransform& i) {
  AffineTransform r;
  r.a = o.a * i.a + o.b * i.c;
  r.b = o.a * i.b + o.b * i.d;
  r.c = o.c * i.a + o.d * i.c;
  r.d = o.c * i.b + o.d * i.d;
  r.tx = o.a * i.tx + o.b * i.ty + o.tx;
  r.ty = o.c * i.tx + o.d * i.ty + o.ty;
  return r;
}

void AugmentConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("augment config: " + m); };
  if (scale_min > scale_max || scale_min <= 0) fail("scale range ill-ordered");
  if (rotation_max_deg < 0) fail("rotation range negative");
  if (hflip_prob < 0 || hflip_prob > 1) fail("hflip_prob outside [0,1]");
  if (brightness_min > brightness_max || contrast_min > contrast_max) fail("color ranges ill-ordered");
  if (channel_jitter < 0) fail("channel_jitter negative");
}

// ---------------------------------------------------------------------------
// Annotation IO

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

[[noreturn]] void record_error(int record, const std::string& field, const std::string& detail) {
  throw std::runtime_error("annotations: record " + std::to_string(record) + " field '" + field + "': " + detail);
}

double parse_double(std::istringstream& line, int record, const std::string& field) {
  double v;
  if (!(line >> v)) record_error(record, field, "parse error");
  return v;
}

int parse_int(std::istringstream& line, int record, const std::string& field) {
  int v;
  if (!(line >> v)) record_error(record, field, "parse error");
  return v;
}

void maybe_load_image(PoseExample& ex, const fs::path& base_dir, bool load_images) {
  if (!load_images || ex.image_path == "-" || ex.image_path.empty()) return;
  fs::path p(ex.image_path);
  if (p.is_relative()) p = base_dir / p;
  ex.image = read_ppm(p.string());
}

LoadResult load_native(const std::string& path, bool load_images) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("annotations: cannot open " + path);
  std::string header;
  std::getline(in, header);
  if (header != "repose-annotations-v1")
    throw std::runtime_error("annotations: bad header in " + path + ": '" + header + "'");
  LoadResult result;
  const fs::path base_dir = fs::path(path).parent_path();
  std::string raw;
  int record = 0;
  while (std::getline(in, raw)) {
    if (raw.empty() || raw[0] == '#') continue;
    std::istringstream line(raw);
    PoseExample ex;
    ex.source = "native";
    if (!(line >> ex.image_path)) record_error(record, "image_path", "parse error");
    const int K = parse_int(line, record, "K");
    if (K < 1 || K > 64) record_error(record, "K", "out of range");
    ex.center_x = parse_double(line, record, "center_x");
    ex.center_y = parse_double(line, record, "center_y");
    ex.scale = parse_double(line, record, "scale");
    if (!(ex.scale > 0)) record_error(record, "scale", "must be positive");
    std::string hb;
    if (!(line >> hb)) record_error(record, "head_box", "parse error");
    if (hb == "hb") {
      HeadBox box;
      box.x1 = parse_double(line, record, "head_box.x1");
      box.y1 = parse_double(line, record, "head_box.y1");
      box.x2 = parse_double(line, record, "head_box.x2");
      box.y2 = parse_double(line, record, "head_box.y2");
      ex.head_box = box;
    } else if (hb != "-") {
      record_error(record, "head_box", "expected 'hb' or '-'");
    }
    for (int k = 0; k < K; ++k) {
      Keypoint2D kp;
      kp.x = parse_double(line, record, "kp" + std::to_string(k) + ".x");
      kp.y = parse_double(line, record, "kp" + std::to_string(k) + ".y");
      const int a = parse_int(line, record, "kp" + std::to_string(k) + ".annotated");
      if (a != 0 && a != 1) record_error(record, "kp" + std::to_string(k) + ".annotated", "must be 0 or 1");
      kp.annotated = a == 1;
      ex.keypoints.push_back(kp);
    }
    if (ex.mask().popcount() == 0) {
      ++result.dropped;
    } else {
      maybe_load_image(ex, base_dir, load_images);
      result.examples.push_back(std::move(ex));
    }
    ++record;
  }
  return result;
}

LoadResult load_lsp_style(const std::string& path, bool load_images) {
  // One line per example: image_path width height then 14 x,y,visible
  // triplets. Center and scale follow the LSP test convention: image center
  // and image size.
  std::ifstream in(path);
  if (!in) throw std::runtime_error("annotations: cannot open " + path);
  LoadResult result;
  const fs::path base_dir = fs::path(path).parent_path();
  std::string raw;
  int record = 0;
  while (std::getline(in, raw)) {
    if (raw.empty() || raw[0] == '#') continue;
    std::istringstream line(raw);
    PoseExample ex;
    ex.source = "lsp";
    if (!(line >> ex.image_path)) record_error(record, "image_path", "parse error");
    const int W = parse_int(line, record, "width");
    const int H = parse_int(line, record, "height");
    if (W < 1 || H < 1) record_error(record, "width/height", "must be positive");
    ex.center_x = W / 2.0;
    ex.center_y = H / 2.0;
    ex.scale = static_cast<double>(std::max(W, H));
    for (int k = 0; k < 14; ++k) {
      Keypoint2D kp;
      kp.x = parse_double(line, record, "kp" + std::to_string(k) + ".x");
      kp.y = parse_double(line, record, "kp" + std::to_string(k) + ".y");
      const int vis = parse_int(line, record, "kp" + std::to_string(k) + ".visible");
      kp.annotated = vis != 0 && kp.x >= 0 && kp.y >= 0;
      ex.keypoints.push_back(kp);
    }
    if (ex.mask().popcount() == 0) {
      ++result.dropped;
    } else {
      maybe_load_image(ex, base_dir, load_images);
      result.examples.push_back(std::move(ex));
    }
    ++record;
  }
  return result;
}

LoadResult load_mpii_style(const std::string& path, bool load_images) {
  // JSON export: [{image, center: [x,y], scale (height/200 units),
  // joints: [[x,y,vis] x 16], head_box: [x1,y1,x2,y2]}]. A joint with
  // negative coordinates is unannotated.
  std::ifstream in(path);
  if (!in) throw std::runtime_error("annotations: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("annotations: " + path + " is not valid JSON: " + e.what());
  }
  LoadResult result;
  const fs::path base_dir = fs::path(path).parent_path();
  int record = 0;
  for (const auto& r : j) {
    PoseExample ex;
    ex.source = "mpii";
    try {
      ex.image_path = r.at("image").get<std::string>();
      ex.center_x = r.at("center").at(0).get<double>();
      ex.center_y = r.at("center").at(1).get<double>();
      ex.scale = r.at("scale").get<double>() * 200.0;  // MPII scale is height/200
      for (const auto& joint : r.at("joints")) {
        Keypoint2D kp;
        kp.x = joint.at(0).get<double>();
        kp.y = joint.at(1).get<double>();
        kp.annotated = kp.x >= 0 && kp.y >= 0;
        ex.keypoints.push_back(kp);
      }
      if (ex.keypoints.size() != 16) record_error(record, "joints", "expected 16 joints");
      if (r.contains("head_box")) {
        const auto& hb = r.at("head_box");
        ex.head_box = HeadBox{hb.at(0).get<double>(), hb.at(1).get<double>(), hb.at(2).get<double>(),
                              hb.at(3).get<double>()};
      }
    } catch (const nlohmann::json::exception& e) {
      record_error(record, "json", e.what());
    }
    if (!(ex.scale > 0)) record_error(record, "scale", "must be positive");
    if (ex.mask().popcount() == 0) {
      ++result.dropped;
    } else {
      maybe_load_image(ex, base_dir, load_images);
      result.examples.push_back(std::move(ex));
    }
    ++record;
  }
  return result;
}

}  // namespace

LoadResult load_annotations(const std::string& path, AnnotationFormat format, bool load_images) {
  switch (format) {
    case AnnotationFormat::native: return load_native(path, load_images);
    case AnnotationFormat::lsp_style: return load_lsp_style(path, load_images);
    case AnnotationFormat::mpii_style: return load_mpii_style(path, load_images);
  }
  throw std::logic_error("load_annotations: unreachable");
}

void save_annotations(const std::string& path, const std::vector<PoseExample>& examples) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("annotations: cannot write " + path);
  out << "repose-annotations-v1\n";
  for (const auto& ex : examples) {
    out << (ex.image_path.empty() ? "-" : ex.image_path) << ' ' << ex.keypoints.size() << ' '
        << format_double(ex.center_x) << ' ' << format_double(ex.center_y) << ' ' << format_double(ex.scale);
    if (ex.head_box)
      out << " hb " << format_double(ex.head_box->x1) << ' ' << format_double(ex.head_box->y1) << ' '
          << format_double(ex.head_box->x2) << ' ' << format_double(ex.head_box->y2);
    else
      out << " -";
    for (const auto& kp : ex.keypoints)
      out << ' ' << format_double(kp.x) << ' ' << format_double(kp.y) << ' ' << (kp.annotated ? 1 : 0);
    out << '\n';
  }
}

void save_dataset(const std::string& dir, const std::string& name, std::vector<PoseExample> examples) {
  fs::create_directories(dir);
  int idx = 0;
  for (auto& ex : examples) {
    if (!ex.image.empty()) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%s_%05d.ppm", name.c_str(), idx);
      write_ppm(ex.image, (fs::path(dir) / buf).string());
      ex.image_path = buf;
    }
    ++idx;
  }
  save_annotations((fs::path(dir) / (name + ".txt")).string(), examples);
}

// ---------------------------------------------------------------------------
// Crop and augmentation

namespace {

// Bilinear image sample; returns false when any tap fell outside the frame.
bool sample_image(const Image& img, double x, double y, float out[3]) {
  const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0, fy = y - y0;
  bool inside = true;
  double acc[3] = {0, 0, 0};
  for (int dy = 0; dy <= 1; ++dy)
    for (int dx = 0; dx <= 1; ++dx) {
      const double w = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy);
      const int sx = x0 + dx, sy = y0 + dy;
      if (sx < 0 || sy < 0 || sx >= img.width || sy >= img.height) {
        inside = false;
        continue;  // zero padding
      }
      const std::uint8_t* px = &img.rgb[(static_cast<std::size_t>(sy) * img.width + sx) * 3];
      for (int c = 0; c < 3; ++c) acc[c] += w * px[c];
    }
  for (int c = 0; c < 3; ++c) out[c] = static_cast<float>(acc[c] / 255.0);
  return inside;
}

}  // namespace

CropResult crop_normalize(const PoseExample& ex, int out_size) {
  if (!(ex.scale > 0)) throw std::invalid_argument("crop_normalize: scale must be positive");
  CropResult res;
  const double s = static_cast<double>(out_size) / ex.scale;
  res.to_crop = AffineTransform{s, 0, out_size / 2.0 - s * ex.center_x, 0, s, out_size / 2.0 - s * ex.center_y};
  res.to_original = res.to_crop.inverse();
  res.image = Tensor<float>({3, out_size, out_size});
  const std::int64_t plane = static_cast<std::int64_t>(out_size) * out_size;
  if (!ex.image.empty()) {
    for (int oy = 0; oy < out_size; ++oy)
      for (int ox = 0; ox < out_size; ++ox) {
        auto [sx, sy] = res.to_original.apply(ox, oy);
        float px[3];
        if (!sample_image(ex.image, sx, sy, px)) res.padded = true;
        for (int c = 0; c < 3; ++c) res.image[c * plane + oy * static_cast<std::int64_t>(out_size) + ox] = px[c];
      }
  }
  res.keypoints.reserve(ex.keypoints.size());
  for (const auto& kp : ex.keypoints) res.keypoints.push_back(res.to_crop.apply(kp));
  return res;
}

PoseExample flip_example(const PoseExample& ex, const SkeletonGraph& skeleton) {
  if (static_cast<int>(ex.keypoints.size()) != skeleton.keypoint_count)
    throw std::invalid_argument("flip_example: keypoint count mismatch with skeleton");
  PoseExample out = ex;
  const int W = ex.image.width;
  if (!ex.image.empty()) {
    for (int y = 0; y < ex.image.height; ++y)
      for (int x = 0; x < W; ++x)
        for (int c = 0; c < 3; ++c)
          out.image.rgb[(static_cast<std::size_t>(y) * W + x) * 3 + c] =
              ex.image.rgb[(static_cast<std::size_t>(y) * W + (W - 1 - x)) * 3 + c];
  }
  const double width_span = ex.image.empty() ? 2.0 * ex.center_x : static_cast<double>(W - 1);
  for (int k = 0; k < skeleton.keypoint_count; ++k) {
    const Keypoint2D& src = ex.keypoints[static_cast<std::size_t>(skeleton.flip_pairs[static_cast<std::size_t>(k)])];
    out.keypoints[static_cast<std::size_t>(k)] = {width_span - src.x, src.y, src.annotated};
  }
  out.center_x = width_span - ex.center_x;
  if (ex.head_box) out.head_box = HeadBox{width_span - ex.head_box->x2, ex.head_box->y1, width_span - ex.head_box->x1, ex.head_box->y2};
  return out;
}

PoseExample rotate_example(const PoseExample& ex, double degrees) {
  if (degrees == 0.0) return ex;
  PoseExample out = ex;
  const double rad = degrees * 3.14159265358979323846 / 180.0;
  const double cs = std::cos(rad), sn = std::sin(rad);
  const double cx = ex.center_x, cy = ex.center_y;
  auto fwd = [&](double x, double y) {
    return std::pair<double, double>{cs * (x - cx) - sn * (y - cy) + cx, sn * (x - cx) + cs * (y - cy) + cy};
  };
  if (!ex.image.empty()) {
    for (int y = 0; y < ex.image.height; ++y)
      for (int x = 0; x < ex.image.width; ++x) {
        // inverse rotation gathers the source pixel
        const double sx = cs * (x - cx) + sn * (y - cy) + cx;
        const double sy = -sn * (x - cx) + cs * (y - cy) + cy;
        float px[3];
        sample_image(ex.image, sx, sy, px);
        for (int c = 0; c < 3; ++c)
          out.image.rgb[(static_cast<std::size_t>(y) * ex.image.width + x) * 3 + c] =
              static_cast<std::uint8_t>(std::lround(std::clamp(px[c] * 255.0f, 0.0f, 255.0f)));
      }
  }
  for (auto& kp : out.keypoints) {
    auto [x, y] = fwd(kp.x, kp.y);
    kp.x = x;
    kp.y = y;
  }
  if (ex.head_box) {
    const auto c1 = fwd(ex.head_box->x1, ex.head_box->y1);
    const auto c2 = fwd(ex.head_box->x2, ex.head_box->y1);
    const auto c3 = fwd(ex.head_box->x1, ex.head_box->y2);
    const auto c4 = fwd(ex.head_box->x2, ex.head_box->y2);
    out.head_box = HeadBox{std::min({c1.first, c2.first, c3.first, c4.first}),
                           std::min({c1.second, c2.second, c3.second, c4.second}),
                           std::max({c1.first, c2.first, c3.first, c4.first}),
                           std::max({c1.second, c2.second, c3.second, c4.second})};
  }
  return out;
}

PoseExample color_noise_example(const PoseExample& ex, double brightness, double contrast,
                                const std::vector<double>& channel_offsets) {
  if (brightness == 1.0 && contrast == 1.0 &&
      std::all_of(channel_offsets.begin(), channel_offsets.end(), [](double v) { return v == 0.0; }))
    return ex;
  PoseExample out = ex;
  for (std::size_t i = 0; i < ex.image.rgb.size(); ++i) {
    const int c = static_cast<int>(i % 3);
    double v = ex.image.rgb[i] / 255.0;
    v = (v - 0.5) * contrast + 0.5;
    v = v * brightness + (c < static_cast<int>(channel_offsets.size()) ? channel_offsets[static_cast<std::size_t>(c)] : 0.0);
    out.image.rgb[i] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
  }
  return out;
}

PoseExample augment(const PoseExample& ex, Rng& rng, const AugmentConfig& cfg, const SkeletonGraph& skeleton) {
  cfg.validate();
  // Draws happen in a fixed order so streams are reproducible regardless of
  // which stages end up as identity.
  const double zoom = rng.uniform(cfg.scale_min, cfg.scale_max);
  const double degrees = rng.uniform(-cfg.rotation_max_deg, cfg.rotation_max_deg);
  const bool flip = rng.bernoulli(cfg.hflip_prob);
  const double brightness = rng.uniform(cfg.brightness_min, cfg.brightness_max);
  const double contrast = rng.uniform(cfg.contrast_min, cfg.contrast_max);
  std::vector<double> offsets(3);
  for (auto& o : offsets) o = rng.uniform(-cfg.channel_jitter, cfg.channel_jitter);

  PoseExample out = ex;
  out.scale = ex.scale / zoom;  // zoom > 1 makes the person larger in the crop
  if (degrees != 0.0) out = rotate_example(out, degrees);
  if (flip) out = flip_example(out, skeleton);
  out = color_noise_example(out, brightness, contrast, offsets);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic stick figures

namespace {

struct Vec2 {
  double x = 0, y = 0;
};

Vec2 rotate(const Vec2& v, double theta) {
  const double cs = std::cos(theta), sn = std::sin(theta);
  return {v.x * cs - v.y * sn, v.x * sn + v.y * cs};
}

Vec2 add(const Vec2& a, const Vec2& b, double s = 1.0) { return {a.x + s * b.x, a.y + s * b.y}; }

struct Palette {
  Color color;
  const char* from;
  const char* to;
};

// Distinct per-limb colors give the desk-scale model a strong localization
// cue; jittered per example.
const Palette kSynthLimbs[] = {
    {{220, 50, 50}, "right_hip", "right_knee"},      {{245, 140, 40}, "right_knee", "right_ankle"},
    {{60, 190, 60}, "left_hip", "left_knee"},        {{40, 220, 160}, "left_knee", "left_ankle"},
    {{50, 80, 230}, "right_shoulder", "right_elbow"}, {{130, 60, 230}, "right_elbow", "right_wrist"},
    {{235, 60, 200}, "left_shoulder", "left_elbow"}, {{240, 170, 60}, "left_elbow", "left_wrist"},
    {{160, 150, 70}, "right_hip", "left_hip"},       {{70, 180, 220}, "right_shoulder", "left_shoulder"},
    {{210, 210, 210}, "neck", "head_top"},           {{130, 90, 50}, "right_hip", "right_shoulder"},
    {{100, 150, 100}, "left_hip", "left_shoulder"},
};

std::uint8_t jitter_channel(Rng& rng, std::uint8_t base) {
  return static_cast<std::uint8_t>(std::clamp(static_cast<int>(base) + rng.uniform_int(-12, 12), 0, 255));
}

}  // namespace

std::vector<PoseExample> synth_dataset(Rng& rng, const SynthConfig& cfg) {
  if (cfg.count < 1) throw std::invalid_argument("synth_dataset: count must be >= 1");
  if (cfg.keypoints != 14 && cfg.keypoints != 16)
    throw std::invalid_argument("synth_dataset: keypoints must be 14 or 16");
  if (cfg.canvas < 16) throw std::invalid_argument("synth_dataset: canvas must be >= 16");
  const SkeletonGraph skeleton = default_skeleton(cfg.keypoints);
  const int n = cfg.canvas;

  std::vector<PoseExample> out;
  out.reserve(static_cast<std::size_t>(cfg.count));
  for (int idx = 0; idx < cfg.count; ++idx) {
    Rng r = rng.fork(static_cast<std::uint64_t>(idx));
    PoseExample ex;
    ex.image_path = "-";
    ex.source = "synthetic";

    // background: random base color, vertical gradient, light pixel noise
    const std::uint8_t bg[3] = {static_cast<std::uint8_t>(r.uniform_int(30, 210)),
                                static_cast<std::uint8_t>(r.uniform_int(30, 210)),
                                static_cast<std::uint8_t>(r.uniform_int(30, 210))};
    const double grad = r.uniform(-20.0, 20.0);
    ex.image.width = n;
    ex.image.height = n;
    ex.image.rgb.resize(static_cast<std::size_t>(n) * n * 3);
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x)
        for (int c = 0; c < 3; ++c) {
          const double v = bg[c] + grad * (static_cast<double>(y) / n - 0.5) + r.uniform(-4.0, 4.0);
          ex.image.rgb[(static_cast<std::size_t>(y) * n + x) * 3 + c] =
              static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
        }

    // pose: pelvis-rooted joint-angle sampling with bounded limb lengths
    const double H = n * r.uniform(0.52, 0.74);
    const Vec2 pelvis{n / 2.0 + r.uniform(-0.08, 0.08) * n, n / 2.0 + r.uniform(-0.02, 0.10) * n};
    const double tilt = r.uniform(-0.30, 0.30);
    const Vec2 up = rotate({0.0, -1.0}, tilt);
    const Vec2 down{-up.x, -up.y};
    const Vec2 side = rotate(up, 3.14159265358979323846 / 2.0);  // screen-right

    const Vec2 neck = add(pelvis, up, 0.34 * H);
    const Vec2 head_top = add(neck, up, 0.17 * H);
    const double hip_w = 0.09 * H, shoulder_w = 0.13 * H;
    const Vec2 right_hip = add(pelvis, side, -hip_w), left_hip = add(pelvis, side, hip_w);
    const Vec2 right_shoulder = add(neck, side, -shoulder_w), left_shoulder = add(neck, side, shoulder_w);

    auto make_leg = [&](const Vec2& hip, double out_sign) {
      const double a1 = r.uniform(-0.45, 0.45) + 0.10 * out_sign;
      const Vec2 knee = add(hip, rotate(down, a1), 0.27 * H);
      const double a2 = a1 + r.uniform(-0.20, 0.70) * out_sign;
      const Vec2 ankle = add(knee, rotate(down, a2), 0.25 * H);
      return std::pair<Vec2, Vec2>{knee, ankle};
    };
    auto make_arm = [&](const Vec2& shoulder, double out_sign) {
      const double a1 = r.uniform(-0.9, 0.9) + 0.35 * out_sign;
      const Vec2 elbow = add(shoulder, rotate(down, a1), 0.21 * H);
      const double a2 = a1 + r.uniform(-1.0, 1.0);
      const Vec2 wrist = add(elbow, rotate(down, a2), 0.20 * H);
      return std::pair<Vec2, Vec2>{elbow, wrist};
    };
    const auto [right_knee, right_ankle] = make_leg(right_hip, -1.0);
    const auto [left_knee, left_ankle] = make_leg(left_hip, 1.0);
    const auto [right_elbow, right_wrist] = make_arm(right_shoulder, -1.0);
    const auto [left_elbow, left_wrist] = make_arm(left_shoulder, 1.0);

    auto clamp_pt = [&](Vec2 p) {
      return Vec2{std::clamp(p.x, 2.0, n - 3.0), std::clamp(p.y, 2.0, n - 3.0)};
    };
    auto set_kp = [&](const char* name, Vec2 p) {
      const int k = skeleton.index_of(name);
      if (k < 0) return;
      p = clamp_pt(p);
      ex.keypoints[static_cast<std::size_t>(k)] = {p.x, p.y, true};
    };
    ex.keypoints.assign(static_cast<std::size_t>(cfg.keypoints), Keypoint2D{});
    set_kp("right_ankle", right_ankle);
    set_kp("right_knee", right_knee);
    set_kp("right_hip", right_hip);
    set_kp("left_hip", left_hip);
    set_kp("left_knee", left_knee);
    set_kp("left_ankle", left_ankle);
    set_kp("right_wrist", right_wrist);
    set_kp("right_elbow", right_elbow);
    set_kp("right_shoulder", right_shoulder);
    set_kp("left_shoulder", left_shoulder);
    set_kp("left_elbow", left_elbow);
    set_kp("left_wrist", left_wrist);
    set_kp("neck", neck);
    set_kp("head_top", head_top);
    set_kp("pelvis", pelvis);
    set_kp("thorax", add(neck, up, -0.05 * H));

    // drawing: limbs as AA capsules at the clamped keypoint positions
    const double limb_r = std::max(1.4, 0.05 * H);
    for (const auto& limb : kSynthLimbs) {
      const int a = skeleton.index_of(limb.from), b = skeleton.index_of(limb.to);
      if (a < 0 || b < 0) continue;
      const Color col{jitter_channel(r, limb.color.r), jitter_channel(r, limb.color.g), jitter_channel(r, limb.color.b)};
      const auto& pa = ex.keypoints[static_cast<std::size_t>(a)];
      const auto& pb = ex.keypoints[static_cast<std::size_t>(b)];
      draw_segment(ex.image, pa.x, pa.y, pb.x, pb.y, col, limb_r);
    }
    {
      const int hk = skeleton.index_of("head_top"), nk = skeleton.index_of("neck");
      const auto& ph = ex.keypoints[static_cast<std::size_t>(hk)];
      const auto& pn = ex.keypoints[static_cast<std::size_t>(nk)];
      const Color head_col{jitter_channel(r, 235), jitter_channel(r, 215), jitter_channel(r, 170)};
      draw_disk(ex.image, (ph.x + pn.x) / 2.0, (ph.y + pn.y) / 2.0, 0.40 * std::hypot(ph.x - pn.x, ph.y - pn.y),
                head_col);
    }

    // occlusions: patches drawn over keypoints that stay annotated
    for (auto& kp : ex.keypoints)
      if (r.bernoulli(cfg.occluded_fraction)) {
        const Color patch{static_cast<std::uint8_t>(r.uniform_int(0, 255)),
                          static_cast<std::uint8_t>(r.uniform_int(0, 255)),
                          static_cast<std::uint8_t>(r.uniform_int(0, 255))};
        draw_disk(ex.image, kp.x + r.uniform(-1.0, 1.0), kp.y + r.uniform(-1.0, 1.0), r.uniform(1.5, 3.5), patch);
      }
    // annotation dropout exercises the partial loss masking
    for (auto& kp : ex.keypoints)
      if (r.bernoulli(cfg.unannotated_fraction)) kp.annotated = false;
    if (ex.mask().popcount() == 0) {
      ex.keypoints[static_cast<std::size_t>(skeleton.index_of("right_hip"))].annotated = true;
      ex.keypoints[static_cast<std::size_t>(skeleton.index_of("left_hip"))].annotated = true;
    }

    double min_x = n, min_y = n, max_x = 0, max_y = 0;
    for (const auto& kp : ex.keypoints) {
      min_x = std::min(min_x, kp.x);
      max_x = std::max(max_x, kp.x);
      min_y = std::min(min_y, kp.y);
      max_y = std::max(max_y, kp.y);
    }
    ex.center_x = (min_x + max_x) / 2.0 + r.uniform(-0.02, 0.02) * n;
    ex.center_y = (min_y + max_y) / 2.0 + r.uniform(-0.02, 0.02) * n;
    ex.scale = std::max({max_x - min_x, max_y - min_y, 8.0}) * r.uniform(1.18, 1.38);

    const Vec2 hc = {(neck.x + head_top.x) / 2.0, (neck.y + head_top.y) / 2.0};
    const double hr = 0.5 * std::hypot(head_top.x - neck.x, head_top.y - neck.y);
    ex.head_box = HeadBox{hc.x - hr, hc.y - hr, hc.x + hr, hc.y + hr};

    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<PoseExample> unify_keypoint_space(const std::vector<PoseExample>& examples,
                                              const SkeletonGraph& from_skeleton, const SkeletonGraph& to_skeleton,
                                              const std::vector<std::pair<std::string, std::string>>& name_map) {
  auto rename = [&](const std::string& name) {
    for (const auto& [a, b] : name_map)
      if (a == name) return b;
    return name;
  };
  std::vector<PoseExample> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    if (static_cast<int>(ex.keypoints.size()) != from_skeleton.keypoint_count)
      throw std::invalid_argument("unify_keypoint_space: example keypoint count does not match source skeleton");
    PoseExample u = ex;
    u.keypoints.assign(static_cast<std::size_t>(to_skeleton.keypoint_count), Keypoint2D{});
    for (int k = 0; k < from_skeleton.keypoint_count; ++k) {
      const int target = to_skeleton.index_of(rename(from_skeleton.names[static_cast<std::size_t>(k)]));
      if (target >= 0) u.keypoints[static_cast<std::size_t>(target)] = ex.keypoints[static_cast<std::size_t>(k)];
    }
    out.push_back(std::move(u));
  }
  return out;
}

Batch allocate_batch(int batch_size, int keypoints, int input_size) {
  Batch b;
  b.images = Tensor<float>({batch_size, 3, input_size, input_size});
  b.gt = Tensor<float>({batch_size, keypoints, input_size, input_size});
  b.masks.assign(static_cast<std::size_t>(batch_size), AnnotationMask{});
  b.crop_keypoints.assign(static_cast<std::size_t>(batch_size), {});
  b.to_original.assign(static_cast<std::size_t>(batch_size), AffineTransform{});
  return b;
}

bool prepare_example(const PoseExample& ex, int input_size, double sigma, const SkeletonGraph& skeleton,
                     Rng* augment_rng, const AugmentConfig* augment_cfg, Batch& out, int slot) {
  const PoseExample* src = &ex;
  PoseExample augmented;
  if (augment_rng && augment_cfg) {
    augmented = augment(ex, *augment_rng, *augment_cfg, skeleton);
    src = &augmented;
  }
  CropResult crop = crop_normalize(*src, input_size);

  AnnotationMask mask;
  mask.bits.reserve(crop.keypoints.size());
  for (auto& kp : crop.keypoints) {
    const bool usable =
        kp.annotated && kp.x >= 0.0 && kp.y >= 0.0 && kp.x <= input_size - 1.0 && kp.y <= input_size - 1.0;
    kp.annotated = usable;
    mask.bits.push_back(usable ? 1 : 0);
  }
  if (mask.popcount() == 0) return false;

  const std::int64_t img_len = crop.image.size();
  std::copy(crop.image.data(), crop.image.data() + img_len, out.images.data() + static_cast<std::int64_t>(slot) * img_len);
  const int K = static_cast<int>(crop.keypoints.size());
  const std::int64_t plane = static_cast<std::int64_t>(input_size) * input_size;
  for (int k = 0; k < K; ++k) {
    Tensor<float> grid = synth_heatmap<float>(crop.keypoints[static_cast<std::size_t>(k)], input_size, sigma);
    std::copy(grid.data(), grid.data() + grid.size(),
              out.gt.data() + (static_cast<std::int64_t>(slot) * K + k) * plane);
  }
  out.masks[static_cast<std::size_t>(slot)] = std::move(mask);
  out.crop_keypoints[static_cast<std::size_t>(slot)] = std::move(crop.keypoints);
  out.to_original[static_cast<std::size_t>(slot)] = crop.to_original;
  return true;
}

}  // namespace repose
