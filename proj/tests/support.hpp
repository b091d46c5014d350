#pragma once

// Test helpers and brute-force reference implementations. The oracles here
// are written from the metric definitions directly (string-keyed n-grams,
// explicit loops, full sorts) and share no code with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "gik/image.hpp"
#include "gik/intention.hpp"
#include "gik/labels.hpp"

namespace gik::testing {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("gik_test_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  std::string str(const std::string& rel = "") const { return rel.empty() ? path_.string() : (path_ / rel).string(); }

 private:
  fs::path path_;
};

inline std::string read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---- text metric oracles -------------------------------------------------------------

using Toks = std::vector<std::string>;

inline std::unordered_map<std::string, int> grams(const Toks& t, int n) {
  std::unordered_map<std::string, int> out;
  for (int i = 0; i + n <= static_cast<int>(t.size()); ++i) {
    std::string key;
    for (int j = 0; j < n; ++j) key += t[i + j] + '\x1f';
    out[key] += 1;
  }
  return out;
}

// BLEU-k for k = 1..4 straight from the definition.
inline std::vector<double> bleu_oracle(const std::vector<Toks>& cand, const std::vector<Toks>& ref) {
  long c_len = 0, r_len = 0;
  for (std::size_t i = 0; i < cand.size(); ++i) {
    c_len += static_cast<long>(cand[i].size());
    r_len += static_cast<long>(ref[i].size());
  }
  std::vector<double> p(4, 0.0);
  for (int n = 1; n <= 4; ++n) {
    long hit = 0, all = 0;
    for (std::size_t i = 0; i < cand.size(); ++i) {
      auto cg = grams(cand[i], n), rg = grams(ref[i], n);
      for (auto& [g, c] : cg) {
        all += c;
        hit += std::min(c, rg.count(g) ? rg[g] : 0);
      }
    }
    p[n - 1] = all == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(all);
  }
  std::vector<double> out(4, 0.0);
  if (c_len == 0) return out;
  const double bp = c_len >= r_len ? 1.0 : std::exp(1.0 - static_cast<double>(r_len) / static_cast<double>(c_len));
  for (int k = 1; k <= 4; ++k) {
    bool zero = false;
    double s = 0.0;
    for (int n = 1; n <= k; ++n) {
      if (p[n - 1] == 0.0) zero = true;
      else s += std::log(p[n - 1]);
    }
    out[k - 1] = zero ? 0.0 : bp * std::exp(s / k);
  }
  return out;
}

// CIDEr with one reference per case: dense TF-IDF vectors over the union of
// n-grams, idf from reference document frequency, cosine, mean over n and
// cases, times 10.
inline double cider_oracle(const std::vector<Toks>& cand, const std::vector<Toks>& ref) {
  const double N = static_cast<double>(ref.size());
  double sum = 0.0;
  for (int n = 1; n <= 4; ++n) {
    std::map<std::string, int> df;
    for (const auto& r : ref)
      for (auto& [g, c] : grams(r, n)) df[g] += 1;
    for (std::size_t i = 0; i < cand.size(); ++i) {
      auto cg = grams(cand[i], n), rg = grams(ref[i], n);
      std::vector<std::string> keys;
      for (auto& [g, c] : cg) keys.push_back(g);
      for (auto& [g, c] : rg) keys.push_back(g);
      std::sort(keys.begin(), keys.end());
      keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
      std::vector<double> a, b;
      for (const auto& g : keys) {
        const double idf = df.count(g) ? std::log(N / df[g]) : 0.0;
        a.push_back((cg.count(g) ? cg[g] : 0) * idf);
        b.push_back((rg.count(g) ? rg[g] : 0) * idf);
      }
      double dot = 0, na = 0, nb = 0;
      for (std::size_t k = 0; k < keys.size(); ++k) {
        dot += a[k] * b[k];
        na += a[k] * a[k];
        nb += b[k] * b[k];
      }
      if (na > 0 && nb > 0) sum += dot / std::sqrt(na * nb);
    }
  }
  return 10.0 * sum / (4.0 * static_cast<double>(cand.size()));
}

// Lower-middle median by full sort.
inline double median_oracle(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[(v.size() - 1) / 2];
}

// Per-value mean with round half up, by double arithmetic on each pixel.
inline Image mean_oracle(const std::vector<Image>& frames) {
  Image out = frames.front();
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    long s = 0;
    for (const auto& f : frames) s += f.pixels[i];
    out.pixels[i] = static_cast<std::uint8_t>(std::floor(static_cast<double>(s) / frames.size() + 0.5));
  }
  return out;
}

inline Toks random_tokens(std::mt19937_64& rng, std::size_t max_len, int alphabet) {
  std::uniform_int_distribution<std::size_t> len(0, max_len);
  std::uniform_int_distribution<int> sym(0, alphabet - 1);
  Toks t(len(rng));
  for (auto& s : t) s = std::string(1, static_cast<char>('a' + sym(rng)));
  return t;
}

inline IntentionSequence random_sequence(std::mt19937_64& rng, const std::string& id, std::size_t max_spans = 5) {
  std::uniform_real_distribution<double> dur(1.0, 60.0), u(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> count(0, max_spans);
  std::uniform_int_distribution<int> lab(0, static_cast<int>(kLabelCount) - 1), ver(0, 2);
  IntentionSequence s{id, dur(rng), {}};
  const std::size_t m = count(rng);
  for (std::size_t i = 0; i < m; ++i) {
    double a = u(rng) * s.duration, b = u(rng) * s.duration;
    if (a > b) std::swap(a, b);
    s.spans.push_back({static_cast<Label>(lab(rng)), a, b, static_cast<Verdict>(ver(rng))});
  }
  sort_spans(s);
  return s;
}

}  // namespace gik::testing
