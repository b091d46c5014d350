#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "gik/error.hpp"
#include "gik/heatmap.hpp"
#include "gik/image.hpp"
#include "gik/intention.hpp"
#include "gik/labels.hpp"

namespace gik {

// Contiguous frames of a video covering [t_start, t_end].
struct Clip {
  std::size_t first_frame = 0;
  std::vector<Frame> frames;
  double t_start = 0.0;
  double t_end = 0.0;
};

// Frame k covers [k/fps, (k+1)/fps). A clip takes every frame whose window
// meets the half-open interval [t_start, t_end); a zero-length interval takes
// the single frame containing that instant.
inline Clip extract_clip(const HeatmapVideo& video, double t_start, double t_end) {
  if (t_start > t_end) throw InvariantError("clip start after end");
  if (video.frames.empty()) throw InvariantError("clip from an empty video");
  Clip clip;
  clip.t_start = std::clamp(t_start, 0.0, video.duration);
  clip.t_end = std::clamp(t_end, 0.0, video.duration);
  const std::size_t f = video.frames.size();

  std::size_t first = 0, last = 0;  // inclusive
  if (clip.t_start == clip.t_end) {
    first = last = std::min(f - 1, static_cast<std::size_t>(std::floor(clip.t_start * video.fps)));
  } else {
    const double lo = clip.t_start * video.fps, hi = clip.t_end * video.fps;
    // window k meets the interval iff k < hi and k + 1 > lo
    first = std::min(f - 1, static_cast<std::size_t>(std::floor(lo)));
    last = first;
    while (last + 1 < f && static_cast<double>(last + 1) < hi) ++last;
  }
  clip.first_frame = first;
  clip.frames.assign(video.frames.begin() + static_cast<std::ptrdiff_t>(first),
                     video.frames.begin() + static_cast<std::ptrdiff_t>(last + 1));
  return clip;
}

// Per-pixel, per-channel mean, accumulated exactly and rounded half up once.
inline Frame mean_image(const Clip& clip) {
  if (clip.frames.empty()) throw InvariantError("mean of an empty clip");
  const Image& first = clip.frames.front().image;
  std::vector<std::uint64_t> sum(first.pixels.size(), 0);
  for (const auto& fr : clip.frames) {
    if (fr.image.height != first.height || fr.image.width != first.width || fr.image.channels != first.channels)
      throw InvariantError("clip frames differ in shape");
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += fr.image.pixels[i];
  }
  const std::uint64_t n = clip.frames.size();
  Frame out;
  out.image = Image(first.height, first.width, first.channels);
  for (std::size_t i = 0; i < sum.size(); ++i)
    out.image.pixels[i] = static_cast<std::uint8_t>((2 * sum[i] + n) / (2 * n));
  out.t_center = 0.5 * (clip.t_start + clip.t_end);
  return out;
}

// Pixel rectangle [x0, x1) x [y0, y1).
struct BBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  bool empty() const { return x1 <= x0 || y1 <= y0; }

  bool operator==(const BBox&) const = default;
};

struct RoiResult {
  Frame mean_image;
  std::vector<std::uint8_t> mask;  // height x width, 0 or 1
  BBox bbox;
  Label label = Label::NoFinding;
  double peak_heat = 0.0;
};

// Heat left by the overlay: how far the brightest channel of `mean` rises
// above the base image, clamped at zero.
inline std::vector<double> overlay_heat(const Image& mean, const Image& base) {
  if (mean.height != base.height || mean.width != base.width)
    throw InvariantError("mean image and base image differ in size");
  const Image gray = to_gray(base);
  std::vector<double> heat(mean.pixel_count(), 0.0);
  for (std::size_t i = 0; i < heat.size(); ++i) {
    int best = 0;
    for (int c = 0; c < mean.channels; ++c)
      best = std::max(best, static_cast<int>(mean.pixels[i * mean.channels + c]) - gray.pixels[i]);
    heat[i] = best;
  }
  return heat;
}

inline RoiResult roi_mask(const Frame& mean, const Image& base_image, double threshold_frac,
                          Label label = Label::NoFinding) {
  if (!(threshold_frac > 0.0 && threshold_frac <= 1.0)) throw InvariantError("threshold_frac must lie in (0,1]");
  const auto heat = overlay_heat(mean.image, base_image);
  RoiResult r;
  r.mean_image = mean;
  r.label = label;
  r.mask.assign(heat.size(), 0);
  r.peak_heat = heat.empty() ? 0.0 : *std::max_element(heat.begin(), heat.end());
  if (r.peak_heat <= 0.0) return r;

  const double cut = threshold_frac * r.peak_heat;
  const int w = mean.image.width;
  int x0 = w, y0 = mean.image.height, x1 = -1, y1 = -1;
  for (std::size_t i = 0; i < heat.size(); ++i) {
    if (heat[i] < cut) continue;
    r.mask[i] = 1;
    const int x = static_cast<int>(i % w), y = static_cast<int>(i / w);
    x0 = std::min(x0, x);
    y0 = std::min(y0, y);
    x1 = std::max(x1, x);
    y1 = std::max(y1, y);
  }
  r.bbox = {x0, y0, x1 + 1, y1 + 1};
  return r;
}

// ---- overlay export ---------------------------------------------------------------

namespace detail {

// 3x5 glyphs, one row per string, '#' set.
inline const std::array<std::string_view, 5>* glyph(char ch) {
  struct G {
    char c;
    std::array<std::string_view, 5> rows;
  };
  static const G kFont[] = {
      {'A', {"###", "#.#", "###", "#.#", "#.#"}}, {'B', {"##.", "#.#", "##.", "#.#", "##."}},
      {'C', {"###", "#..", "#..", "#..", "###"}}, {'D', {"##.", "#.#", "#.#", "#.#", "##."}},
      {'E', {"###", "#..", "##.", "#..", "###"}}, {'F', {"###", "#..", "##.", "#..", "#.."}},
      {'G', {"###", "#..", "#.#", "#.#", "###"}}, {'H', {"#.#", "#.#", "###", "#.#", "#.#"}},
      {'I', {"###", ".#.", ".#.", ".#.", "###"}}, {'J', {"..#", "..#", "..#", "#.#", "###"}},
      {'K', {"#.#", "#.#", "##.", "#.#", "#.#"}}, {'L', {"#..", "#..", "#..", "#..", "###"}},
      {'M', {"#.#", "###", "###", "#.#", "#.#"}}, {'N', {"##.", "#.#", "#.#", "#.#", "#.#"}},
      {'O', {"###", "#.#", "#.#", "#.#", "###"}}, {'P', {"###", "#.#", "###", "#..", "#.."}},
      {'Q', {"###", "#.#", "#.#", "###", "..#"}}, {'R', {"##.", "#.#", "##.", "#.#", "#.#"}},
      {'S', {"###", "#..", "###", "..#", "###"}}, {'T', {"###", ".#.", ".#.", ".#.", ".#."}},
      {'U', {"#.#", "#.#", "#.#", "#.#", "###"}}, {'V', {"#.#", "#.#", "#.#", "#.#", ".#."}},
      {'W', {"#.#", "#.#", "###", "###", "#.#"}}, {'X', {"#.#", "#.#", ".#.", "#.#", "#.#"}},
      {'Y', {"#.#", "#.#", ".#.", ".#.", ".#."}}, {'Z', {"###", "..#", ".#.", "#..", "###"}},
      {'0', {"###", "#.#", "#.#", "#.#", "###"}}, {'1', {".#.", "##.", ".#.", ".#.", "###"}},
      {'2', {"###", "..#", "###", "#..", "###"}}, {'3', {"###", "..#", "###", "..#", "###"}},
      {'4', {"#.#", "#.#", "###", "..#", "..#"}}, {'5', {"###", "#..", "###", "..#", "###"}},
      {'6', {"###", "#..", "###", "#.#", "###"}}, {'7', {"###", "..#", "..#", "..#", "..#"}},
      {'8', {"###", "#.#", "###", "#.#", "###"}}, {'9', {"###", "#.#", "###", "..#", "###"}},
      {'.', {"...", "...", "...", "...", ".#."}}, {'-', {"...", "...", "###", "...", "..."}},
      {':', {"...", ".#.", "...", ".#.", "..."}}, {'(', {".#.", "#..", "#..", "#..", ".#."}},
      {')', {".#.", "..#", "..#", "..#", ".#."}},
  };
  const char up = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  for (const auto& g : kFont)
    if (g.c == up) return &g.rows;
  return nullptr;
}

inline void draw_text(Image& img, int x, int y, std::string_view s, std::array<std::uint8_t, 3> color) {
  for (char ch : s) {
    if (const auto* rows = glyph(ch)) {
      for (int gy = 0; gy < 5; ++gy)
        for (int gx = 0; gx < 3; ++gx) {
          if ((*rows)[gy][gx] != '#') continue;
          const int px = x + gx, py = y + gy;
          if (px < 0 || py < 0 || px >= img.width || py >= img.height) continue;
          for (int c = 0; c < 3; ++c) img.at(py, px, c) = color[c];
        }
    }
    x += 4;
  }
}

}  // namespace detail

// Base image with the ROI mask tinted red, the bounding box outlined and a
// caption strip on top.
inline Image render_roi_overlay(const RoiResult& roi, const Image& base_image, std::string_view caption) {
  const Image gray = to_gray(base_image);
  constexpr int kStrip = 9;
  Image out(gray.height + kStrip, gray.width, 3, 0);
  for (int y = 0; y < gray.height; ++y)
    for (int x = 0; x < gray.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * gray.width + x;
      const int g = gray.pixels[i];
      const bool m = !roi.mask.empty() && roi.mask[i];
      out.at(y + kStrip, x, 0) = static_cast<std::uint8_t>(m ? (g * 6 + 255 * 4 + 5) / 10 : g);
      out.at(y + kStrip, x, 1) = static_cast<std::uint8_t>(m ? (g * 6 + 5) / 10 : g);
      out.at(y + kStrip, x, 2) = static_cast<std::uint8_t>(m ? (g * 6 + 5) / 10 : g);
    }
  if (!roi.bbox.empty()) {
    auto plot = [&](int x, int y) {
      out.at(y + kStrip, x, 0) = 255;
      out.at(y + kStrip, x, 1) = 230;
      out.at(y + kStrip, x, 2) = 0;
    };
    for (int x = roi.bbox.x0; x < roi.bbox.x1; ++x) {
      plot(x, roi.bbox.y0);
      plot(x, roi.bbox.y1 - 1);
    }
    for (int y = roi.bbox.y0; y < roi.bbox.y1; ++y) {
      plot(roi.bbox.x0, y);
      plot(roi.bbox.x1 - 1, y);
    }
  }
  detail::draw_text(out, 2, 2, caption, {255, 255, 255});
  return out;
}

inline nlohmann::json roi_sidecar(const std::string& case_id, const IntentionSpan& span, const RoiResult& roi) {
  return {{"case_id", case_id},
          {"label", label_name(span.label)},
          {"verdict", verdict_name(span.verdict)},
          {"t_start", span.t_start},
          {"t_end", span.t_end},
          {"bbox", {roi.bbox.x0, roi.bbox.y0, roi.bbox.x1, roi.bbox.y1}}};
}

}  // namespace gik
