#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "gik/error.hpp"
#include "gik/rng.hpp"
#include "gik/text.hpp"

namespace gik {

// A gaze fixation in normalized image coordinates (origin top-left).
struct FixationRecord {
  double x = 0.0;
  double y = 0.0;
  double t_start = 0.0;
  double t_end = 0.0;

  bool operator==(const FixationRecord&) const = default;
};

// One transcribed sentence. Untimed sentences come from report text that
// has no alignment to the recording.
struct TimedSentence {
  std::string text;
  double t_start = 0.0;
  double t_end = 0.0;
  bool timed = true;

  bool operator==(const TimedSentence&) const = default;
};

// One reviewed case: a single image read by a single radiologist.
struct GazeSession {
  std::string case_id;
  std::string image_ref;
  std::vector<FixationRecord> fixations;  // sorted by t_start
  std::vector<TimedSentence> sentences;   // sorted by t_start
  double duration = 0.0;

  bool operator==(const GazeSession&) const = default;
};

enum class SplitTag { Unsplit, Train, Val, Test };

inline std::string_view split_tag_name(SplitTag t) {
  switch (t) {
    case SplitTag::Train: return "train";
    case SplitTag::Val: return "val";
    case SplitTag::Test: return "test";
    default: return "unsplit";
  }
}

struct Dataset {
  std::vector<GazeSession> sessions;
  SplitTag split_tag = SplitTag::Unsplit;

  bool operator==(const Dataset&) const = default;
};

inline void check_unique_ids(const Dataset& ds) {
  std::set<std::string_view> seen;
  for (const auto& s : ds.sessions)
    if (!seen.insert(s.case_id).second) throw InvariantError("duplicate case_id " + s.case_id);
}

inline double max_event_end(const GazeSession& s) {
  double m = 0.0;
  for (const auto& f : s.fixations) m = std::max(m, f.t_end);
  for (const auto& t : s.sentences)
    if (t.timed) m = std::max(m, t.t_end);
  return m;
}

namespace detail {
inline void sort_fixations(std::vector<FixationRecord>& v) {
  std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
    return std::tie(a.t_start, a.t_end) < std::tie(b.t_start, b.t_end);
  });
}
inline void sort_sentences(std::vector<TimedSentence>& v) {
  std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
    // Untimed sentences sort after all timed ones, in input order.
    if (a.timed != b.timed) return a.timed;
    return std::tie(a.t_start, a.t_end) < std::tie(b.t_start, b.t_end);
  });
}

inline double require_number(std::string_view field, std::string_view name, std::size_t line) {
  auto v = text::to_double(field);
  if (!v) throw ParseError("non-numeric " + std::string(name) + " '" + std::string(field) + "'", line);
  return *v;
}
}  // namespace detail

// ---- fixation CSV -----------------------------------------------------------
//
// Header names the columns; required: case_id,x,y,t_start,t_end. Optional:
// image_w,image_h (x/y are then pixel coordinates and get normalized),
// duration, image_ref. Sessions come out in order of first appearance.

inline std::vector<GazeSession> parse_gaze_csv(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1 && line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
    if (text::trim(line).empty()) continue;
    for (auto f : text::split(line, ',')) header.emplace_back(text::trim(f));
    break;
  }
  if (header.empty()) return {};

  auto column = [&](std::string_view name) -> int {
    auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<int>(it - header.begin());
  };
  const int c_id = column("case_id"), c_x = column("x"), c_y = column("y");
  const int c_ts = column("t_start"), c_te = column("t_end");
  const int c_w = column("image_w"), c_h = column("image_h");
  const int c_dur = column("duration"), c_img = column("image_ref");
  if (c_id < 0 || c_x < 0 || c_y < 0 || c_ts < 0 || c_te < 0)
    throw ParseError("header must contain case_id,x,y,t_start,t_end", lineno);
  if ((c_w < 0) != (c_h < 0)) throw ParseError("image_w and image_h must appear together", lineno);

  std::vector<GazeSession> sessions;
  std::unordered_map<std::string, std::size_t> index;
  std::vector<bool> has_duration;

  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty()) continue;
    const auto fields = text::split(line, ',');
    if (fields.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " columns, got " +
                           std::to_string(fields.size()),
                       lineno);
    const std::string id(text::trim(fields[c_id]));
    if (id.empty()) throw ParseError("empty case_id", lineno);

    FixationRecord f;
    f.x = detail::require_number(fields[c_x], "x", lineno);
    f.y = detail::require_number(fields[c_y], "y", lineno);
    f.t_start = detail::require_number(fields[c_ts], "t_start", lineno);
    f.t_end = detail::require_number(fields[c_te], "t_end", lineno);
    if (c_w >= 0) {
      const double w = detail::require_number(fields[c_w], "image_w", lineno);
      const double h = detail::require_number(fields[c_h], "image_h", lineno);
      if (w <= 0.0 || h <= 0.0) throw RangeError("image size must be positive", lineno);
      f.x /= w;
      f.y /= h;
    }
    if (f.x < 0.0 || f.x > 1.0 || f.y < 0.0 || f.y > 1.0)
      throw RangeError("fixation outside the image", lineno);
    if (f.t_start < 0.0) throw RangeError("negative t_start", lineno);
    if (!(f.t_end > f.t_start)) throw RangeError("t_end must be greater than t_start", lineno);

    auto [it, inserted] = index.try_emplace(id, sessions.size());
    if (inserted) {
      sessions.push_back(GazeSession{.case_id = id});
      has_duration.push_back(false);
    }
    GazeSession& s = sessions[it->second];
    s.fixations.push_back(f);
    if (c_img >= 0) {
      std::string ref(text::trim(fields[c_img]));
      if (!ref.empty()) s.image_ref = std::move(ref);
    }
    if (c_dur >= 0 && !text::trim(fields[c_dur]).empty()) {
      const double d = detail::require_number(fields[c_dur], "duration", lineno);
      if (d < 0.0) throw RangeError("negative duration", lineno);
      if (has_duration[it->second] && d != s.duration)
        throw RangeError("conflicting durations for case " + id, lineno);
      s.duration = d;
      has_duration[it->second] = true;
    }
  }

  for (std::size_t i = 0; i < sessions.size(); ++i) {
    auto& s = sessions[i];
    detail::sort_fixations(s.fixations);
    const double end = max_event_end(s);
    if (!has_duration[i]) {
      s.duration = end;
    } else if (s.duration < end) {
      throw RangeError("duration of case " + s.case_id + " is shorter than its fixations");
    }
  }
  return sessions;
}

inline void write_gaze_csv(std::ostream& out, const std::vector<GazeSession>& sessions) {
  out << "case_id,x,y,t_start,t_end,duration\n";
  for (const auto& s : sessions)
    for (const auto& f : s.fixations)
      out << s.case_id << ',' << text::format_double(f.x) << ',' << text::format_double(f.y) << ','
          << text::format_double(f.t_start) << ',' << text::format_double(f.t_end) << ','
          << text::format_double(s.duration) << '\n';
}

// ---- transcript lines ---------------------------------------------------------
//
// {"case_id": "c1", "text": "heart is enlarged", "t_start": 1.2, "t_end": 3.4}
// Both times may be omitted for an untimed sentence.

inline std::map<std::string, std::vector<TimedSentence>> parse_transcript_jsonl(std::istream& in) {
  std::map<std::string, std::vector<TimedSentence>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw ParseError("invalid JSON", lineno);
    }
    if (!j.is_object() || !j.contains("case_id") || !j["case_id"].is_string() ||
        !j.contains("text") || !j["text"].is_string())
      throw ParseError("expected {case_id, text, t_start, t_end}", lineno);
    TimedSentence s;
    s.text = j["text"].get<std::string>();
    if (text::trim(s.text).empty()) throw ParseError("empty sentence text", lineno);
    const bool has_ts = j.contains("t_start"), has_te = j.contains("t_end");
    if (has_ts != has_te) throw ParseError("t_start and t_end must appear together", lineno);
    if (has_ts) {
      if (!j["t_start"].is_number() || !j["t_end"].is_number())
        throw ParseError("non-numeric sentence time", lineno);
      s.t_start = j["t_start"].get<double>();
      s.t_end = j["t_end"].get<double>();
      if (s.t_start < 0.0) throw RangeError("negative t_start", lineno);
      if (s.t_end < s.t_start) throw RangeError("t_end before t_start", lineno);
    } else {
      s.timed = false;
    }
    out[j["case_id"].get<std::string>()].push_back(std::move(s));
  }
  for (auto& [id, v] : out) detail::sort_sentences(v);
  return out;
}

inline void write_transcript_jsonl(std::ostream& out, const GazeSession& s) {
  for (const auto& t : s.sentences) {
    nlohmann::json j = {{"case_id", s.case_id}, {"text", t.text}};
    if (t.timed) {
      j["t_start"] = t.t_start;
      j["t_end"] = t.t_end;
    }
    out << j.dump() << '\n';
  }
}

// ---- dataset manifest -------------------------------------------------------
//
// case_id,image_path,gaze_path,transcript_path,duration
// Relative paths resolve against the manifest's directory. transcript_path
// and duration may be empty.

struct ManifestRow {
  std::string case_id;
  std::string image_path;
  std::string gaze_path;
  std::string transcript_path;
  std::optional<double> duration;
};

inline std::vector<ManifestRow> parse_manifest(std::istream& in) {
  std::vector<ManifestRow> rows;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty()) continue;
    const auto f = text::split(line, ',');
    if (!header_seen) {
      header_seen = true;
      if (f.size() != 5 || text::trim(f[0]) != "case_id")
        throw ParseError("manifest header must be case_id,image_path,gaze_path,transcript_path,duration",
                         lineno);
      continue;
    }
    if (f.size() != 5) throw ParseError("manifest rows need 5 columns", lineno);
    ManifestRow r{std::string(text::trim(f[0])), std::string(text::trim(f[1])),
                  std::string(text::trim(f[2])), std::string(text::trim(f[3])), std::nullopt};
    if (r.case_id.empty() || r.gaze_path.empty() || r.image_path.empty())
      throw ParseError("case_id, image_path and gaze_path are required", lineno);
    if (!text::trim(f[4]).empty()) {
      r.duration = detail::require_number(f[4], "duration", lineno);
      if (*r.duration < 0.0) throw RangeError("negative duration", lineno);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

inline void write_manifest(std::ostream& out, const std::vector<ManifestRow>& rows) {
  out << "case_id,image_path,gaze_path,transcript_path,duration\n";
  for (const auto& r : rows)
    out << r.case_id << ',' << r.image_path << ',' << r.gaze_path << ',' << r.transcript_path << ','
        << (r.duration ? text::format_double(*r.duration) : std::string()) << '\n';
}

// Loads every case listed in a manifest file. image_ref of each session is
// the resolved image path.
inline Dataset load_dataset(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  std::istringstream manifest(text::read_file(manifest_path));
  const auto rows = parse_manifest(manifest);
  const fs::path base = fs::path(manifest_path).parent_path();
  auto resolve = [&](const std::string& p) {
    const fs::path path(p);
    return fs::absolute(path.is_absolute() ? path : base / path).lexically_normal().string();
  };

  Dataset ds;
  std::map<std::string, std::vector<GazeSession>> gaze_cache;
  std::map<std::string, std::map<std::string, std::vector<TimedSentence>>> transcript_cache;
  for (const auto& r : rows) {
    const std::string gaze_path = resolve(r.gaze_path);
    auto git = gaze_cache.find(gaze_path);
    if (git == gaze_cache.end()) {
      std::istringstream in(text::read_file(gaze_path));
      try {
        git = gaze_cache.emplace(gaze_path, parse_gaze_csv(in)).first;
      } catch (const Error& e) {
        throw ParseError(gaze_path + ": " + e.what());
      }
    }
    auto match = std::find_if(git->second.begin(), git->second.end(),
                              [&](const GazeSession& s) { return s.case_id == r.case_id; });
    GazeSession s;
    if (match != git->second.end()) s = *match;
    s.case_id = r.case_id;
    s.image_ref = resolve(r.image_path);

    if (!r.transcript_path.empty()) {
      const std::string tpath = resolve(r.transcript_path);
      auto tit = transcript_cache.find(tpath);
      if (tit == transcript_cache.end()) {
        std::istringstream in(text::read_file(tpath));
        try {
          tit = transcript_cache.emplace(tpath, parse_transcript_jsonl(in)).first;
        } catch (const Error& e) {
          throw ParseError(tpath + ": " + e.what());
        }
      }
      if (auto it = tit->second.find(r.case_id); it != tit->second.end()) s.sentences = it->second;
    }

    const double end = max_event_end(s);
    if (r.duration) {
      if (*r.duration < end)
        throw RangeError("manifest duration of " + r.case_id + " is shorter than its events");
      s.duration = *r.duration;
    } else {
      s.duration = end;
    }
    ds.sessions.push_back(std::move(s));
  }
  check_unique_ids(ds);
  return ds;
}

// ---- splitting ----------------------------------------------------------------

struct DatasetSplit {
  Dataset train, val, test;
};

// Shuffles cases (ordered by case_id first, so the result depends only on the
// set of cases and the seed) and cuts them into train/val/test. Validation and
// test sizes are rounded to nearest; train takes the remainder.
inline DatasetSplit split_dataset(const Dataset& ds, std::uint64_t seed,
                                  std::array<double, 3> fractions) {
  if (ds.sessions.empty()) throw InvariantError("cannot split an empty dataset");
  for (double f : fractions)
    if (!(f >= 0.0)) throw InvariantError("split fractions must be nonnegative");
  if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9)
    throw InvariantError("split fractions must sum to 1");

  std::vector<std::size_t> order(ds.sessions.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return ds.sessions[a].case_id < ds.sessions[b].case_id;
  });
  Rng rng(derive_seed(seed, "split"));
  rng.shuffle(order.begin(), order.end());

  const std::size_t n = order.size();
  const auto n_val = std::min(n, static_cast<std::size_t>(std::llround(fractions[1] * n)));
  const auto n_test = std::min(n - n_val, static_cast<std::size_t>(std::llround(fractions[2] * n)));
  const std::size_t n_train = n - n_val - n_test;

  DatasetSplit out;
  out.train.split_tag = SplitTag::Train;
  out.val.split_tag = SplitTag::Val;
  out.test.split_tag = SplitTag::Test;
  for (std::size_t i = 0; i < n; ++i) {
    Dataset& dst = i < n_train ? out.train : (i < n_train + n_val ? out.val : out.test);
    dst.sessions.push_back(ds.sessions[order[i]]);
  }
  return out;
}

}  // namespace gik
