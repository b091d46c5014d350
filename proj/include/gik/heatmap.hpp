#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "gik/error.hpp"
#include "gik/gaze.hpp"
#include "gik/image.hpp"
#include "gik/text.hpp"

namespace gik {

struct RenderParams {
  double fps = 4.0;
  double sigma_frac = 0.05;      // Gaussian sigma as a fraction of the image diagonal
  double decay_half_life = 1.0;  // seconds
  double alpha = 0.5;
  std::string colormap = "inferno";
  unsigned workers = 1;          // does not affect output
};

inline void validate(const RenderParams& p) {
  if (!(p.fps > 0.0)) throw InvariantError("fps must be positive");
  if (!(p.sigma_frac > 0.0)) throw InvariantError("sigma_frac must be positive");
  if (!(p.decay_half_life > 0.0)) throw InvariantError("decay_half_life must be positive");
  if (!(p.alpha >= 0.0 && p.alpha <= 1.0)) throw InvariantError("alpha must lie in [0,1]");
}

struct HeatmapVideo {
  std::vector<Frame> frames;
  double fps = 4.0;
  double duration = 0.0;
  std::string base_image_ref;

  std::size_t frame_count() const { return frames.size(); }
};

// ---- colormaps ---------------------------------------------------------------

using Colormap = std::array<std::array<std::uint8_t, 3>, 256>;

// Control points sampled from matplotlib's inferno; intermediate entries are
// linear interpolations.
inline constexpr std::string_view kInfernoRamp = R"(0.000 0 0 4
0.125 31 12 72
0.250 85 15 109
0.375 136 34 106
0.500 186 54 85
0.625 227 89 51
0.750 249 140 10
0.875 249 201 50
1.000 252 255 164
)";

inline constexpr std::string_view kGrayRamp = "0 0 0 0\n1 255 255 255\n";

inline Colormap parse_ramp(std::string_view ramp) {
  std::vector<std::array<double, 4>> pts;
  for (auto line : text::split(ramp, '\n')) {
    line = text::trim(line);
    if (line.empty()) continue;
    std::array<double, 4> p{};
    std::size_t k = 0;
    for (auto f : text::split(line, ' ')) {
      if (f.empty()) continue;
      auto v = text::to_double(f);
      if (!v || k >= 4) throw ParseError("bad colormap row");
      p[k++] = *v;
    }
    if (k != 4) throw ParseError("colormap rows need position r g b");
    pts.push_back(p);
  }
  if (pts.size() < 2 || pts.front()[0] != 0.0 || pts.back()[0] != 1.0)
    throw ParseError("colormap must span [0,1]");
  Colormap cm{};
  std::size_t seg = 0;
  for (int i = 0; i < 256; ++i) {
    const double t = i / 255.0;
    while (seg + 2 < pts.size() && t > pts[seg + 1][0]) ++seg;
    const auto& a = pts[seg];
    const auto& b = pts[seg + 1];
    const double u = (t - a[0]) / (b[0] - a[0]);
    for (int c = 0; c < 3; ++c)
      cm[i][c] = static_cast<std::uint8_t>(std::lround(a[c + 1] + u * (b[c + 1] - a[c + 1])));
  }
  return cm;
}

inline const Colormap& colormap(std::string_view id) {
  static const Colormap inferno = parse_ramp(kInfernoRamp);
  static const Colormap gray = parse_ramp(kGrayRamp);
  if (id == "inferno") return inferno;
  if (id == "gray") return gray;
  throw InvariantError("unknown colormap '" + std::string(id) + "'");
}

// ---- heat field ----------------------------------------------------------------

inline std::size_t frame_count_for(double duration, double fps) {
  const double frames = duration * fps;
  // Guard against products like 0.7 * 10 = 7.000000000000001.
  const auto f = static_cast<std::size_t>(std::ceil(frames - 1e-9 * std::max(1.0, frames)));
  return std::max<std::size_t>(1, f);
}

// Unit-mass Gaussian sampled at pixel offsets inside a 3-sigma disc.
struct GaussianStencil {
  std::vector<int> dx, dy;
  std::vector<double> weight;
  double sigma_px = 0.0;
};

inline GaussianStencil make_stencil(int height, int width, double sigma_frac) {
  GaussianStencil st;
  st.sigma_px = sigma_frac * std::hypot(static_cast<double>(height), static_cast<double>(width));
  const double cutoff = 3.0 * st.sigma_px;
  const int r = static_cast<int>(std::ceil(cutoff));
  double total = 0.0;
  for (int y = -r; y <= r; ++y)
    for (int x = -r; x <= r; ++x) {
      const double d2 = static_cast<double>(x * x + y * y);
      if (d2 > cutoff * cutoff) continue;
      const double g = std::exp(-d2 / (2.0 * st.sigma_px * st.sigma_px));
      st.dx.push_back(x);
      st.dy.push_back(y);
      st.weight.push_back(g);
      total += g;
    }
  for (auto& g : st.weight) g /= total;
  return st;
}

// Pixel a normalized coordinate falls in.
inline int to_pixel(double v, int extent) {
  return std::clamp(static_cast<int>(std::floor(v * extent)), 0, extent - 1);
}

// Seconds of fixation `f` inside frame k's window [k/fps, (k+1)/fps).
inline double window_overlap(const FixationRecord& f, std::size_t k, double fps) {
  const double lo = static_cast<double>(k) / fps, hi = static_cast<double>(k + 1) / fps;
  return std::max(0.0, std::min(f.t_end, hi) - std::max(f.t_start, lo));
}

// Weight of fixation `f` in frame k: its overlap with every window up to and
// including k, each decayed by the elapsed frames. Closed form over frames,
// so any frame can be computed without its predecessors.
inline double fixation_weight(const FixationRecord& f, std::size_t k, const RenderParams& p) {
  const double first = std::floor(f.t_start * p.fps);
  if (first > static_cast<double>(k)) return 0.0;
  const auto j0 = static_cast<std::size_t>(std::max(0.0, first));
  const auto j1 = std::min(k, static_cast<std::size_t>(std::max(0.0, std::ceil(f.t_end * p.fps))));
  const double frames_per_half_life = p.fps * p.decay_half_life;
  double w = 0.0;
  for (std::size_t j = j0; j <= j1; ++j) {
    const double ov = window_overlap(f, j, p.fps);
    if (ov > 0.0) w += ov * std::exp2(-static_cast<double>(k - j) / frames_per_half_life);
  }
  return w;
}

// Pre-normalization heat of frame k, row-major height x width.
inline std::vector<double> heat_field(const GazeSession& session, int height, int width, const RenderParams& p,
                                      std::size_t k, const GaussianStencil& st) {
  std::vector<double> field(static_cast<std::size_t>(height) * width, 0.0);
  for (const auto& f : session.fixations) {
    const double w = fixation_weight(f, k, p);
    if (w <= 0.0) continue;
    const int cx = to_pixel(f.x, width), cy = to_pixel(f.y, height);
    for (std::size_t s = 0; s < st.weight.size(); ++s) {
      const int x = cx + st.dx[s], y = cy + st.dy[s];
      if (x < 0 || y < 0 || x >= width || y >= height) continue;
      field[static_cast<std::size_t>(y) * width + x] += w * st.weight[s];
    }
  }
  return field;
}

inline std::vector<double> heat_field(const GazeSession& session, int height, int width, const RenderParams& p,
                                      std::size_t k) {
  return heat_field(session, height, width, p, k, make_stencil(height, width, p.sigma_frac));
}

namespace detail {
template <typename Fn>
void parallel_for(std::size_t n, unsigned workers, Fn fn) {
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(1, n))));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([=, &fn] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
}
}  // namespace detail

// Renders the fixation heatmap video of a session over its base image.
// Heat is normalized by the maximum over the whole video, mapped through the
// colormap and blended with per-pixel weight alpha * heat, so pixels without
// heat keep the base value exactly.
inline HeatmapVideo render_heatmap_video(const GazeSession& session, const Image& base_image,
                                         const RenderParams& params) {
  validate(params);
  if (base_image.empty()) throw InvariantError("render needs a nonempty base image");
  const Image base = to_gray(base_image);
  const int h = base.height, w = base.width;
  const std::size_t f = frame_count_for(session.duration, params.fps);
  const Colormap& cm = colormap(params.colormap);
  const GaussianStencil st = make_stencil(h, w, params.sigma_frac);

  std::vector<std::vector<double>> fields(f);
  std::vector<double> frame_max(f, 0.0);
  detail::parallel_for(f, params.workers, [&](std::size_t k) {
    fields[k] = heat_field(session, h, w, params, k, st);
    frame_max[k] = *std::max_element(fields[k].begin(), fields[k].end());
  });
  const double peak = *std::max_element(frame_max.begin(), frame_max.end());

  HeatmapVideo video;
  video.fps = params.fps;
  video.duration = session.duration;
  video.base_image_ref = session.image_ref;
  video.frames.resize(f);
  const Image rgb = gray_to_rgb(base);
  detail::parallel_for(f, params.workers, [&](std::size_t k) {
    Frame& fr = video.frames[k];
    fr.t_center = (static_cast<double>(k) + 0.5) / params.fps;
    fr.image = rgb;
    if (peak <= 0.0) return;
    const auto& field = fields[k];
    for (std::size_t i = 0; i < field.size(); ++i) {
      if (field[i] <= 0.0) continue;
      const double heat = field[i] / peak;
      const auto& c = cm[static_cast<std::size_t>(std::lround(heat * 255.0))];
      const double a = params.alpha * heat;
      for (int ch = 0; ch < 3; ++ch)
        fr.image.pixels[i * 3 + ch] =
            static_cast<std::uint8_t>(std::lround((1.0 - a) * base.pixels[i] + a * c[ch]));
    }
    std::vector<double>().swap(fields[k]);
  });
  return video;
}

inline std::size_t frame_index_at(const HeatmapVideo& video, double t) {
  if (!(t >= 0.0) || t > video.duration) throw RangeError("time outside [0, duration]");
  const double k = std::floor(t * video.fps);
  const std::size_t last = video.frames.empty() ? 0 : video.frames.size() - 1;
  return std::min(last, static_cast<std::size_t>(k));
}

// ---- video directory ---------------------------------------------------------------
//
// frame_00000.png ... plus video.json:
//   {"fps", "duration", "frame_count", "base_image", "params": {...}}

inline std::string frame_file_name(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%05zu.png", k);
  return buf;
}

inline nlohmann::json to_json(const RenderParams& p) {
  return {{"fps", p.fps},
          {"sigma_frac", p.sigma_frac},
          {"decay_half_life", p.decay_half_life},
          {"alpha", p.alpha},
          {"colormap", p.colormap}};
}

inline void write_video_dir(const std::string& dir, const HeatmapVideo& video, const RenderParams& params) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (std::size_t k = 0; k < video.frames.size(); ++k)
    write_png((fs::path(dir) / frame_file_name(k)).string(), video.frames[k].image);
  const nlohmann::json manifest = {{"fps", video.fps},
                                   {"duration", video.duration},
                                   {"frame_count", video.frames.size()},
                                   {"base_image", video.base_image_ref},
                                   {"params", to_json(params)}};
  text::write_file((fs::path(dir) / "video.json").string(), manifest.dump(2) + "\n");
}

inline HeatmapVideo read_video_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text::read_file((fs::path(dir) / "video.json").string()));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(dir + "/video.json: " + e.what());
  }
  HeatmapVideo v;
  try {
    v.fps = j.at("fps").get<double>();
    v.duration = j.at("duration").get<double>();
    v.base_image_ref = j.value("base_image", "");
    const auto n = j.at("frame_count").get<std::size_t>();
    v.frames.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      v.frames[k].image = read_png((fs::path(dir) / frame_file_name(k)).string());
      v.frames[k].t_center = (static_cast<double>(k) + 0.5) / v.fps;
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(dir + "/video.json: " + e.what());
  }
  return v;
}

}  // namespace gik
