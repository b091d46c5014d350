#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "gik/error.hpp"
#include "gik/heatmap.hpp"
#include "gik/intention.hpp"
#include "gik/labels.hpp"
#include "gik/report_labeler.hpp"

namespace gik {

// ---- frame features ------------------------------------------------------------
//
// Stand-ins for a frozen spatial encoder: every frame becomes a d-vector and
// the video a max_frames x d matrix, zero-padded past the last frame.

enum class FeatureKind { Downsample16, IntensityHistogram, HeatMoments };

inline std::size_t feature_dim(FeatureKind k) {
  switch (k) {
    case FeatureKind::Downsample16: return 256;
    case FeatureKind::IntensityHistogram: return 64;
    case FeatureKind::HeatMoments: return 8;
  }
  return 0;
}

inline std::string_view feature_kind_name(FeatureKind k) {
  switch (k) {
    case FeatureKind::Downsample16: return "downsample16";
    case FeatureKind::IntensityHistogram: return "intensity_histogram";
    case FeatureKind::HeatMoments: return "heat_moments";
  }
  return "";
}

inline FeatureKind parse_feature_kind(std::string_view s) {
  for (auto k : {FeatureKind::Downsample16, FeatureKind::IntensityHistogram, FeatureKind::HeatMoments})
    if (feature_kind_name(k) == s) return k;
  throw UsageError("unknown feature kind '" + std::string(s) + "'");
}

struct FeatureParams {
  std::size_t max_frames = 100;
  FeatureKind kind = FeatureKind::Downsample16;

  std::size_t dim() const { return feature_dim(kind); }
};

struct FeatureMatrix {
  std::size_t max_frames = 0;
  std::size_t dim = 0;
  std::size_t valid_rows = 0;
  std::vector<double> values;  // row-major max_frames x dim

  std::span<const double> row(std::size_t r) const { return {values.data() + r * dim, dim}; }
  std::span<double> row(std::size_t r) { return {values.data() + r * dim, dim}; }

  bool operator==(const FeatureMatrix&) const = default;
};

namespace detail {

inline double gray_at(const Image& img, std::size_t i) {
  unsigned sum = 0;
  for (int c = 0; c < img.channels; ++c) sum += img.pixels[i * img.channels + c];
  return static_cast<double>(sum) / img.channels;
}

inline void downsample16(const Image& img, std::span<double> out) {
  for (int by = 0; by < 16; ++by) {
    const int y0 = by * img.height / 16, y1 = std::max(y0 + 1, (by + 1) * img.height / 16);
    for (int bx = 0; bx < 16; ++bx) {
      const int x0 = bx * img.width / 16, x1 = std::max(x0 + 1, (bx + 1) * img.width / 16);
      double sum = 0.0;
      std::size_t n = 0;
      for (int y = y0; y < std::min(y1, img.height); ++y)
        for (int x = x0; x < std::min(x1, img.width); ++x, ++n)
          sum += gray_at(img, static_cast<std::size_t>(y) * img.width + x);
      out[static_cast<std::size_t>(by) * 16 + bx] = n ? sum / (255.0 * n) : 0.0;
    }
  }
}

inline void intensity_histogram(const Image& img, std::span<double> out) {
  std::array<std::size_t, 64> counts{};
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    const auto g = static_cast<unsigned>(std::lround(gray_at(img, i)));
    ++counts[std::min(63u, g / 4)];
  }
  const double n = static_cast<double>(img.pixel_count());
  for (std::size_t b = 0; b < 64; ++b) out[b] = n > 0 ? counts[b] / n : 0.0;
}

// The overlay tints gray pixels toward the colormap; red minus blue is zero on
// an untinted gray pixel and grows with heat.
inline double overlay_heat(const Image& img, std::size_t i) {
  if (img.channels < 3) return 0.0;
  const int r = img.pixels[i * img.channels], b = img.pixels[i * img.channels + 2];
  return std::max(0, r - b);
}

inline void heat_moments(const Image& img, std::span<double> out) {
  double mass = 0.0, sx = 0.0, sy = 0.0, best = -1.0;
  std::size_t best_i = 0;
  const std::size_t n = img.pixel_count();
  for (std::size_t i = 0; i < n; ++i) {
    const double v = overlay_heat(img, i);
    if (v > best) {
      best = v;
      best_i = i;
    }
    if (v <= 0.0) continue;
    const double x = (static_cast<double>(i % img.width) + 0.5) / img.width;
    const double y = (static_cast<double>(i / img.width) + 0.5) / img.height;
    mass += v;
    sx += v * x;
    sy += v * y;
  }
  std::fill(out.begin(), out.end(), 0.0);
  if (mass <= 0.0) return;
  const double cx = sx / mass, cy = sy / mass;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = overlay_heat(img, i);
    if (v <= 0.0) continue;
    const double dx = (static_cast<double>(i % img.width) + 0.5) / img.width - cx;
    const double dy = (static_cast<double>(i / img.width) + 0.5) / img.height - cy;
    sxx += v * dx * dx;
    syy += v * dy * dy;
    sxy += v * dx * dy;
  }
  out[0] = mass / (255.0 * static_cast<double>(n));
  out[1] = cx;
  out[2] = cy;
  out[3] = sxx / mass;
  out[4] = syy / mass;
  out[5] = sxy / mass;
  out[6] = best / 255.0;
  out[7] = static_cast<double>(best_i) / static_cast<double>(n);
}

}  // namespace detail

inline void featurize_frame(const Image& img, FeatureKind kind, std::span<double> out) {
  switch (kind) {
    case FeatureKind::Downsample16: detail::downsample16(img, out); break;
    case FeatureKind::IntensityHistogram: detail::intensity_histogram(img, out); break;
    case FeatureKind::HeatMoments: detail::heat_moments(img, out); break;
  }
}

// Features of the first max_frames frames; rows past the video are zero.
inline FeatureMatrix extract_frame_features(const HeatmapVideo& video, const FeatureParams& params,
                                            unsigned workers = 1) {
  if (params.max_frames < 1) throw InvariantError("max_frames must be at least 1");
  FeatureMatrix m;
  m.max_frames = params.max_frames;
  m.dim = params.dim();
  m.valid_rows = std::min(video.frames.size(), params.max_frames);
  m.values.assign(m.max_frames * m.dim, 0.0);
  detail::parallel_for(m.valid_rows, workers,
                       [&](std::size_t k) { featurize_frame(video.frames[k].image, params.kind, m.row(k)); });
  return m;
}

// Mean over valid rows; the zero vector when there are none.
inline std::vector<double> row_mean(const FeatureMatrix& m) {
  std::vector<double> mean(m.dim, 0.0);
  if (m.valid_rows == 0) return mean;
  for (std::size_t r = 0; r < m.valid_rows; ++r) {
    const auto row = m.row(r);
    for (std::size_t c = 0; c < m.dim; ++c) mean[c] += row[c];
  }
  for (auto& v : mean) v /= static_cast<double>(m.valid_rows);
  return mean;
}

// Feature dump: 16-byte header of four little-endian uint32 (magic "GIKF",
// max_frames, dim, valid_rows) followed by max_frames * dim little-endian
// float64 values, row-major.
inline constexpr std::uint32_t kFeatureMagic = 0x464b4947;  // "GIKF" read as little-endian

namespace detail {
inline void put_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}
inline std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw ParseError("truncated feature header");
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}
}  // namespace detail

inline void write_features(std::ostream& out, const FeatureMatrix& m) {
  detail::put_u32(out, kFeatureMagic);
  detail::put_u32(out, static_cast<std::uint32_t>(m.max_frames));
  detail::put_u32(out, static_cast<std::uint32_t>(m.dim));
  detail::put_u32(out, static_cast<std::uint32_t>(m.valid_rows));
  for (double v : m.values) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
    out.write(b, 8);
  }
}

inline FeatureMatrix read_features(std::istream& in) {
  if (detail::get_u32(in) != kFeatureMagic) throw ParseError("not a feature dump");
  FeatureMatrix m;
  m.max_frames = detail::get_u32(in);
  m.dim = detail::get_u32(in);
  m.valid_rows = detail::get_u32(in);
  if (m.valid_rows > m.max_frames) throw ParseError("feature dump has valid_rows > max_frames");
  m.values.resize(m.max_frames * m.dim);
  for (auto& v : m.values) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) throw ParseError("truncated feature dump");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    std::memcpy(&v, &bits, sizeof v);
  }
  return m;
}

// ---- predictors -------------------------------------------------------------------

struct TrainingExample {
  std::string case_id;
  FeatureMatrix features;
  IntentionSequence sequence;
};

enum class PredictorKind { Retrieval, Prior, External };

inline std::string_view predictor_kind_name(PredictorKind k) {
  switch (k) {
    case PredictorKind::Retrieval: return "retrieval";
    case PredictorKind::Prior: return "prior";
    case PredictorKind::External: return "external";
  }
  return "";
}

inline PredictorKind parse_predictor_kind(std::string_view s) {
  for (auto k : {PredictorKind::Retrieval, PredictorKind::Prior, PredictorKind::External})
    if (predictor_kind_name(k) == s) return k;
  throw UsageError("unknown predictor '" + std::string(s) + "'");
}

// Lower-middle element for even counts.
inline double lower_median(std::vector<double> v) {
  if (v.empty()) throw InvariantError("median of an empty set");
  const std::size_t mid = (v.size() - 1) / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  return v[mid];
}

struct TimePrior {
  double t_start = 0.0;
  double t_end = 0.0;
  std::size_t support = 0;

  bool operator==(const TimePrior&) const = default;
};

using LabelTimePriors = std::map<std::pair<Label, Verdict>, TimePrior>;

inline LabelTimePriors fit_label_priors(std::span<const TrainingExample> train) {
  if (train.empty()) throw InvariantError("priors need at least one training example");
  std::map<std::pair<Label, Verdict>, std::pair<std::vector<double>, std::vector<double>>> obs;
  for (const auto& ex : train)
    for (const auto& s : ex.sequence.spans) {
      auto& [starts, ends] = obs[{s.label, s.verdict}];
      starts.push_back(s.t_start);
      ends.push_back(s.t_end);
    }
  LabelTimePriors priors;
  for (auto& [key, se] : obs) {
    TimePrior p{lower_median(se.first), lower_median(se.second), se.first.size()};
    p.t_end = std::max(p.t_end, p.t_start);
    priors[key] = p;
  }
  return priors;
}

// Nearest-neighbour baseline over row-mean feature vectors. Read-only after
// construction; concurrent queries are safe.
class RetrievalPredictor {
 public:
  explicit RetrievalPredictor(std::vector<TrainingExample> train) : train_(std::move(train)) {
    if (train_.empty()) throw InvariantError("retrieval needs at least one training example");
    std::stable_sort(train_.begin(), train_.end(),
                     [](const auto& a, const auto& b) { return a.case_id < b.case_id; });
    for (const auto& ex : train_) means_.push_back(row_mean(ex.features));
  }

  // Index into the case_id-ordered training set of the nearest example.
  std::size_t nearest(const FeatureMatrix& query) const {
    const auto q = row_mean(query);
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < means_.size(); ++i) {
      if (means_[i].size() != q.size()) throw InvariantError("feature dimension mismatch");
      double d = 0.0;
      for (std::size_t c = 0; c < q.size(); ++c) d += (q[c] - means_[i][c]) * (q[c] - means_[i][c]);
      if (d < best_d) {  // strict: ties keep the lower case_id
        best_d = d;
        best = i;
      }
    }
    return best;
  }

  IntentionSequence predict(const FeatureMatrix& query, double query_duration, std::string case_id = {}) const {
    const auto& nb = train_[nearest(query)].sequence;
    IntentionSequence out{std::move(case_id), query_duration, {}};
    const double scale = nb.duration > 0.0 ? query_duration / nb.duration : 1.0;
    for (auto s : nb.spans) {
      if (scale != 1.0) {
        s.t_start = std::min(s.t_start * scale, query_duration);
        s.t_end = std::min(s.t_end * scale, query_duration);
      }
      out.spans.push_back(s);
    }
    sort_spans(out);
    return out;
  }

  const std::vector<TrainingExample>& examples() const { return train_; }

 private:
  std::vector<TrainingExample> train_;
  std::vector<std::vector<double>> means_;
};

inline IntentionSequence predict_retrieval(const FeatureMatrix& query, double query_duration,
                                           std::span<const TrainingExample> train, std::string case_id = {}) {
  return RetrievalPredictor({train.begin(), train.end()}).predict(query, query_duration, std::move(case_id));
}

// One span per non-Absent label of the report, timed by the fitted prior for
// that (label, verdict) or by the default speech-onset window.
inline IntentionSequence predict_prior(const LabelVerdicts& report_labels, const LabelTimePriors& priors,
                                       double duration, std::string case_id = {}) {
  IntentionSequence out{std::move(case_id), duration, {}};
  for (Label l : kAllLabels) {
    const Verdict v = report_labels[static_cast<int>(l)];
    if (v == Verdict::Absent) continue;
    IntentionSpan s{l, std::min(kDefaultSpeechOnset, duration), duration, v};
    if (auto it = priors.find({l, v}); it != priors.end()) {
      s.t_start = std::clamp(it->second.t_start, 0.0, duration);
      s.t_end = std::clamp(it->second.t_end, s.t_start, duration);
    }
    out.spans.push_back(s);
  }
  sort_spans(out);
  return out;
}

inline std::map<std::string, IntentionSequence> load_external_predictions(std::istream& in) {
  auto seqs = read_sequences(in, {.clamp_times = true});
  for (const auto& [id, seq] : seqs) validate(seq);
  return seqs;
}

}  // namespace gik
