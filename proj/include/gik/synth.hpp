#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gik/error.hpp"
#include "gik/gaze.hpp"
#include "gik/image.hpp"
#include "gik/labels.hpp"
#include "gik/rng.hpp"
#include "gik/text.hpp"

namespace gik {

// Where the generator makes a synthetic reader look for each finding, and the
// phrase it uses to talk about it. Same content as data/anchors.tsv.
inline constexpr std::string_view kDefaultAnchorTable = R"(# label	center_x	center_y	radius	phrase
NoFinding	0.50	0.50	0.12	no acute findings
EnlargedCardiomediastinum	0.50	0.33	0.12	widened mediastinum
Cardiomegaly	0.56	0.62	0.12	cardiomegaly
LungOpacity	0.30	0.45	0.12	airspace opacity
LungLesion	0.70	0.32	0.12	pulmonary nodule
Edema	0.64	0.47	0.12	pulmonary edema
Consolidation	0.28	0.66	0.12	consolidation
Pneumonia	0.73	0.63	0.12	pneumonia
Atelectasis	0.68	0.78	0.12	atelectasis
Pneumothorax	0.24	0.22	0.12	pneumothorax
PleuralEffusion	0.20	0.82	0.12	pleural effusion
PleuralOther	0.87	0.52	0.12	pleural thickening
Fracture	0.13	0.40	0.12	rib fracture
SupportDevices	0.50	0.14	0.12	endotracheal tube
)";

struct Anchor {
  double cx = 0.0;
  double cy = 0.0;
  double radius = 0.0;
  std::string phrase;
};

using AnchorTable = std::array<Anchor, kLabelCount>;

inline AnchorTable parse_anchor_table(std::string_view tsv) {
  AnchorTable table{};
  std::array<bool, kLabelCount> seen{};
  std::size_t lineno = 0;
  for (auto line : text::split(tsv, '\n')) {
    ++lineno;
    line = text::trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto f = text::split(line, '\t');
    if (f.size() != 5) throw ParseError("anchor rows need 5 tab-separated fields", lineno);
    const auto label = label_from_word(text::lowercase(text::trim(f[0])));
    if (!label) throw ParseError("unknown label " + std::string(f[0]), lineno);
    Anchor a;
    a.cx = detail::require_number(f[1], "center_x", lineno);
    a.cy = detail::require_number(f[2], "center_y", lineno);
    a.radius = detail::require_number(f[3], "radius", lineno);
    a.phrase = std::string(text::trim(f[4]));
    table[static_cast<int>(*label)] = a;
    seen[static_cast<int>(*label)] = true;
  }
  for (std::size_t i = 0; i < kLabelCount; ++i)
    if (!seen[i]) throw ParseError("anchor table misses " + std::string(label_name(kAllLabels[i])));
  return table;
}

inline const AnchorTable& default_anchor_table() {
  static const AnchorTable table = parse_anchor_table(kDefaultAnchorTable);
  return table;
}

struct SynthConfig {
  std::size_t n_cases = 50;
  int image_h = 128;
  int image_w = 128;
  std::vector<Label> label_pool;  // empty means every label except NoFinding
  std::uint64_t seed = 0;
  double duration_min = 10.0;
  double duration_max = 24.0;
  // Share of spans voiced as a negated finding ("no pleural effusion").
  double negative_rate = 0.2;
};

inline void validate(const SynthConfig& c) {
  if (c.n_cases < 1) throw InvariantError("n_cases must be at least 1");
  if (c.image_h < 16 || c.image_w < 16) throw InvariantError("synthetic images need at least 16x16 pixels");
  if (!(c.duration_min > 0.0) || c.duration_min > c.duration_max)
    throw InvariantError("duration range must satisfy 0 < min <= max");
  if (c.negative_rate < 0.0 || c.negative_rate > 1.0) throw InvariantError("negative_rate outside [0,1]");
}

// The span layout the generator voiced for one case; ground truth for tests
// that check the generator itself rather than the labeler.
struct SynthSpan {
  Label label;
  Verdict verdict;
  double t_start;
  double t_end;
};

struct SynthCase {
  GazeSession session;
  std::vector<SynthSpan> spans;
};

inline std::string synth_case_id(std::size_t index, std::size_t n_cases) {
  int width = 4;
  for (std::size_t n = n_cases; n >= 10000; n /= 10) ++width;
  char buf[32];
  std::snprintf(buf, sizeof buf, "case_%0*zu", width, index + 1);
  return buf;
}

namespace detail {
inline std::vector<Label> effective_pool(const SynthConfig& c) {
  if (!c.label_pool.empty()) {
    std::vector<Label> pool = c.label_pool;
    std::sort(pool.begin(), pool.end());
    pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
    return pool;
  }
  std::vector<Label> pool;
  for (Label l : kAllLabels)
    if (l != Label::NoFinding) pool.push_back(l);
  return pool;
}
}  // namespace detail

// Generates one case. Cases are independent streams derived from the config
// seed, so case i is the same no matter how many cases are generated.
inline SynthCase generate_synthetic_case(const SynthConfig& config, std::size_t index,
                                         const AnchorTable& anchors = default_anchor_table()) {
  Rng rng(derive_seed(derive_seed(config.seed, "synth"), index));
  const auto pool = detail::effective_pool(config);

  SynthCase out;
  GazeSession& s = out.session;
  s.case_id = synth_case_id(index, config.n_cases);
  s.image_ref = "images/" + s.case_id + ".pgm";

  constexpr double kSpanMin = 2.0, kSpanMax = 3.5, kGapMin = 1.5, kGapMax = 2.5, kTail = 0.5;
  const double duration = rng.uniform(config.duration_min, config.duration_max);
  const double lead = rng.uniform(1.1, 1.6);
  const double available = std::max(0.5, duration - lead - kTail);
  const auto fits = static_cast<std::size_t>(
      std::floor((available + 0.5 * (kGapMin + kGapMax)) / (0.5 * (kSpanMin + kSpanMax + kGapMin + kGapMax))));
  std::size_t m = 1 + rng.below(4);
  m = std::clamp<std::size_t>(std::min({m, fits, pool.size()}), 1, 4);

  std::vector<Label> labels = pool;
  rng.shuffle(labels.begin(), labels.end());
  labels.resize(m);

  std::vector<double> lengths(m), gaps(m > 0 ? m - 1 : 0);
  for (auto& l : lengths) l = rng.uniform(kSpanMin, kSpanMax);
  for (auto& g : gaps) g = rng.uniform(kGapMin, kGapMax);
  const double total = std::accumulate(lengths.begin(), lengths.end(), 0.0) +
                       std::accumulate(gaps.begin(), gaps.end(), 0.0);
  const double scale = total > available ? available / total : 1.0;

  // Free scanning over the whole field outside the voiced findings.
  auto scan = [&](double from, double to) {
    double t = from;
    while (to - t > 0.1) {
      const double dur = std::min(rng.uniform(0.15, 0.3), to - t);
      s.fixations.push_back({rng.uniform(0.15, 0.85), rng.uniform(0.15, 0.85), t, t + dur});
      t += dur + rng.uniform(0.02, 0.06);
    }
  };
  scan(0.0, lead);

  static constexpr std::array<std::string_view, 4> kPositive = {
      "there is {}", "{} is present", "i see {}", "{} noted"};
  static constexpr std::array<std::string_view, 2> kNegative = {"no {}", "there is no {}"};
  auto fill = [](std::string_view tmpl, const std::string& phrase) {
    std::string out(tmpl);
    out.replace(out.find("{}"), 2, phrase);
    return out;
  };

  double cursor = lead;
  for (std::size_t i = 0; i < m; ++i) {
    const Label label = labels[i];
    const Anchor& a = anchors[static_cast<int>(label)];
    const double start = cursor, end = cursor + lengths[i] * scale;
    const Verdict verdict = rng.uniform() < config.negative_rate ? Verdict::Negative : Verdict::Positive;
    out.spans.push_back({label, verdict, start, end});

    double ft = start;
    while (end - ft > 0.05) {
      const double dur = std::min(rng.uniform(0.18, 0.4), end - ft);
      const double x = std::clamp(rng.normal(a.cx, a.radius * 0.3), 0.0, 1.0);
      const double y = std::clamp(rng.normal(a.cy, a.radius * 0.3), 0.0, 1.0);
      s.fixations.push_back({x, y, ft, ft + dur});
      ft += dur + rng.uniform(0.02, 0.06);
    }

    std::string sentence = verdict == Verdict::Negative
                               ? fill(kNegative[rng.below(kNegative.size())], a.phrase)
                               : fill(kPositive[rng.below(kPositive.size())], a.phrase);
    s.sentences.push_back({std::move(sentence), start, end, true});
    cursor = end + (i + 1 < m ? gaps[i] * scale : 0.0);
    scan(end, cursor);
  }
  s.duration = std::max(duration, cursor + kTail);
  scan(cursor, s.duration);
  return out;
}

inline Dataset generate_synthetic_dataset(const SynthConfig& config) {
  validate(config);
  Dataset ds;
  ds.sessions.reserve(config.n_cases);
  for (std::size_t i = 0; i < config.n_cases; ++i)
    ds.sessions.push_back(generate_synthetic_case(config, i).session);
  return ds;
}

// A crude frontal chest radiograph: dark lung fields, a brighter mediastinum
// and heart shadow, soft vignetting and film grain. Intensities stay within
// [16, 170] so an overlay always has headroom to brighten.
inline Image synthetic_base_image(const SynthConfig& config, std::size_t index) {
  Rng rng(derive_seed(derive_seed(config.seed, "image"), index));
  const int h = config.image_h, w = config.image_w;
  const double jitter_x = rng.uniform(-0.02, 0.02), jitter_y = rng.uniform(-0.02, 0.02);
  Image img(h, w, 1);
  auto ellipse = [](double x, double y, double cx, double cy, double rx, double ry) {
    const double dx = (x - cx) / rx, dy = (y - cy) / ry;
    return dx * dx + dy * dy;
  };
  for (int yi = 0; yi < h; ++yi) {
    for (int xi = 0; xi < w; ++xi) {
      const double x = (xi + 0.5) / w - jitter_x, y = (yi + 0.5) / h - jitter_y;
      double v = 120.0 - 40.0 * ellipse(x, y, 0.5, 0.5, 0.7, 0.8);
      const double lung_r = ellipse(x, y, 0.3, 0.5, 0.16, 0.3);
      const double lung_l = ellipse(x, y, 0.7, 0.5, 0.16, 0.3);
      if (lung_r < 1.0) v -= 60.0 * (1.0 - lung_r);
      if (lung_l < 1.0) v -= 60.0 * (1.0 - lung_l);
      const double heart = ellipse(x, y, 0.56, 0.64, 0.14, 0.12);
      if (heart < 1.0) v += 30.0 * (1.0 - heart);
      if (std::abs(x - 0.5) < 0.05) v += 20.0;
      v += rng.normal(0.0, 3.0);
      img.at(yi, xi) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 16L, 170L));
    }
  }
  return img;
}

}  // namespace gik
