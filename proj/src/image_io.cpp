#include "repose/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace repose {

Image Image::solid(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  Image img;
  img.width = w;
  img.height = h;
  img.rgb.resize(static_cast<std::size_t>(w) * h * 3);
  for (std::size_t i = 0; i < img.rgb.size(); i += 3) {
    img.rgb[i] = r;
    img.rgb[i + 1] = g;
    img.rgb[i + 2] = b;
  }
  return img;
}

namespace {

int read_pnm_token(std::istream& in) {
  // skips whitespace and '#' comments
  while (true) {
    int ch = in.peek();
    if (ch == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(ch)) {
      in.get();
    } else {
      break;
    }
  }
  int value = 0;
  in >> value;
  return value;
}

}  // namespace

Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_ppm: cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P6") throw std::runtime_error("read_ppm: " + path + " is not a binary PPM (P6)");
  Image img;
  img.width = read_pnm_token(in);
  img.height = read_pnm_token(in);
  const int maxval = read_pnm_token(in);
  if (maxval != 255) throw std::runtime_error("read_ppm: only maxval 255 supported in " + path);
  in.get();  // single whitespace after header
  img.rgb.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  in.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (!in) throw std::runtime_error("read_ppm: truncated pixel data in " + path);
  return img;
}

void write_ppm(const Image& image, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_ppm: cannot write " + path);
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.rgb.data()), static_cast<std::streamsize>(image.rgb.size()));
  if (!out) throw std::runtime_error("write_ppm: short write to " + path);
}

void write_pgm_heatmap(const Tensor<float>& grid, const std::string& path) {
  if (grid.rank() != 2) throw std::invalid_argument("write_pgm_heatmap: expected rank-2 grid");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_pgm_heatmap: cannot write " + path);
  out << "P5\n" << grid.dim(1) << ' ' << grid.dim(0) << "\n255\n";
  for (std::int64_t i = 0; i < grid.size(); ++i) {
    const double v = std::clamp(static_cast<double>(grid[i]) * 255.0, 0.0, 255.0);
    const unsigned char byte = static_cast<unsigned char>(std::lround(v));
    out.write(reinterpret_cast<const char*>(&byte), 1);
  }
}

Tensor<float> image_to_tensor(const Image& image) {
  Tensor<float> t({3, image.height, image.width});
  const std::int64_t plane = static_cast<std::int64_t>(image.height) * image.width;
  for (std::int64_t i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c)
      t[static_cast<std::int64_t>(c) * plane + i] = static_cast<float>(image.rgb[static_cast<std::size_t>(i) * 3 + c]) / 255.0f;
  return t;
}

Image tensor_to_image(const Tensor<float>& chw) {
  if (chw.rank() != 3 || chw.dim(0) != 3) throw std::invalid_argument("tensor_to_image: expected (3,h,w)");
  Image img;
  img.height = chw.dim(1);
  img.width = chw.dim(2);
  img.rgb.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  const std::int64_t plane = static_cast<std::int64_t>(img.height) * img.width;
  for (std::int64_t i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c) {
      const double v = std::clamp(static_cast<double>(chw[static_cast<std::int64_t>(c) * plane + i]), 0.0, 1.0);
      img.rgb[static_cast<std::size_t>(i) * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  return img;
}

namespace {

void blend_pixel(Image& image, int x, int y, Color color, double alpha) {
  if (x < 0 || y < 0 || x >= image.width || y >= image.height || alpha <= 0.0) return;
  std::uint8_t* px = &image.rgb[(static_cast<std::size_t>(y) * image.width + x) * 3];
  const double a = std::min(alpha, 1.0);
  px[0] = static_cast<std::uint8_t>(std::lround(px[0] * (1.0 - a) + color.r * a));
  px[1] = static_cast<std::uint8_t>(std::lround(px[1] * (1.0 - a) + color.g * a));
  px[2] = static_cast<std::uint8_t>(std::lround(px[2] * (1.0 - a) + color.b * a));
}

}  // namespace

void draw_segment(Image& image, double x0, double y0, double x1, double y1, Color color, double radius, double dash) {
  const double dx = x1 - x0, dy = y1 - y0;
  const double len2 = dx * dx + dy * dy;
  const double len = std::sqrt(len2);
  const int min_x = static_cast<int>(std::floor(std::min(x0, x1) - radius - 1));
  const int max_x = static_cast<int>(std::ceil(std::max(x0, x1) + radius + 1));
  const int min_y = static_cast<int>(std::floor(std::min(y0, y1) - radius - 1));
  const int max_y = static_cast<int>(std::ceil(std::max(y0, y1) + radius + 1));
  for (int y = std::max(0, min_y); y <= std::min(image.height - 1, max_y); ++y)
    for (int x = std::max(0, min_x); x <= std::min(image.width - 1, max_x); ++x) {
      double t = 0.0;
      if (len2 > 0.0) t = std::clamp(((x - x0) * dx + (y - y0) * dy) / len2, 0.0, 1.0);
      if (dash > 0.0 && len > 0.0) {
        const double along = t * len;
        if (std::fmod(along, 2.0 * dash) >= dash) continue;
      }
      const double px = x0 + t * dx, py = y0 + t * dy;
      const double dist = std::hypot(x - px, y - py);
      blend_pixel(image, x, y, color, radius + 0.5 - dist);
    }
}

void draw_disk(Image& image, double cx, double cy, double radius, Color color) {
  draw_segment(image, cx, cy, cx, cy, color, radius);
}

namespace {

// One entry per limb; chosen to stay distinct after left/right dashing.
struct LimbSpec {
  const char* from;
  const char* to;
  Color color;
  bool left;
};

const LimbSpec kLimbs[] = {
    {"right_hip", "right_knee", {230, 60, 60}, false},
    {"right_knee", "right_ankle", {250, 130, 40}, false},
    {"left_hip", "left_knee", {60, 200, 60}, true},
    {"left_knee", "left_ankle", {40, 230, 160}, true},
    {"right_shoulder", "right_elbow", {60, 90, 230}, false},
    {"right_elbow", "right_wrist", {130, 60, 230}, false},
    {"left_shoulder", "left_elbow", {230, 60, 200}, true},
    {"left_elbow", "left_wrist", {230, 160, 60}, true},
    {"right_hip", "left_hip", {150, 150, 60}, false},
    {"right_shoulder", "left_shoulder", {60, 180, 220}, false},
    {"neck", "right_shoulder", {200, 200, 200}, false},
    {"neck", "left_shoulder", {160, 160, 160}, true},
    {"neck", "head_top", {240, 230, 60}, false},
    {"right_hip", "right_shoulder", {120, 80, 40}, false},
    {"left_hip", "left_shoulder", {90, 140, 90}, true},
    {"pelvis", "thorax", {180, 120, 200}, false},
};

}  // namespace

void draw_pose_overlay(Image& image, const std::vector<Keypoint2D>& keypoints, const SkeletonGraph& skeleton) {
  const double radius = std::max(1.0, image.width / 64.0);
  for (const auto& limb : kLimbs) {
    const int a = skeleton.index_of(limb.from);
    const int b = skeleton.index_of(limb.to);
    if (a < 0 || b < 0) continue;
    const auto& pa = keypoints[static_cast<std::size_t>(a)];
    const auto& pb = keypoints[static_cast<std::size_t>(b)];
    if (!pa.annotated || !pb.annotated) continue;
    draw_segment(image, pa.x, pa.y, pb.x, pb.y, limb.color, radius, limb.left ? 3.0 : 0.0);
  }
  for (const auto& kp : keypoints)
    if (kp.annotated) draw_disk(image, kp.x, kp.y, radius + 0.5, Color{255, 255, 255});
}

}  // namespace repose
