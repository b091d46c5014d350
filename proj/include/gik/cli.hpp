#pragma once

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gik/error.hpp"
#include "gik/evaluation.hpp"
#include "gik/gaze.hpp"
#include "gik/heatmap.hpp"
#include "gik/image.hpp"
#include "gik/intention.hpp"
#include "gik/predictor.hpp"
#include "gik/region.hpp"
#include "gik/report_labeler.hpp"
#include "gik/synth.hpp"
#include "gik/text.hpp"
#include "gik/time_grammar.hpp"

namespace gik::cli {

namespace fs = std::filesystem;

enum ExitStatus : int { kOk = 0, kUsage = 1, kData = 2, kInternal = 3 };

// Everything a run needs. Flags override the --config file, which overrides
// these defaults.
struct RunConfig {
  std::string out = "out";
  std::string manifest;
  std::string videos;
  std::string features;
  std::string gt;
  std::string pred;
  std::string pred_file;
  std::string split_file;
  std::string vocab;

  std::uint64_t seed = 0;
  std::size_t cases = 50;
  int image_size = 128;
  std::string split = "0.8,0,0.2";
  bool train_eq_test = false;

  RenderParams render;
  FeatureParams feature_params{100, FeatureKind::HeatMoments};
  std::string feature_kind = "heat_moments";
  std::size_t vocab_size = 4096;
  std::size_t time_bins = 100;
  std::string predictor = "retrieval";
  double threshold_frac = 0.5;
  bool text_only = false;
};

// ---- logging -----------------------------------------------------------------------

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

inline LogLevel log_level() {
  const char* env = std::getenv("GIK_LOG");
  if (!env) return LogLevel::Info;
  const std::string v = text::lowercase(env);
  if (v == "error") return LogLevel::Error;
  if (v == "debug") return LogLevel::Debug;
  return LogLevel::Info;
}

inline void log(LogLevel level, const std::string& msg) {
  if (level > log_level()) return;
  static constexpr const char* kTag[] = {"error", "info", "debug"};
  std::cerr << "[gik " << kTag[static_cast<int>(level)] << "] " << msg << '\n';
}

// ---- helpers -------------------------------------------------------------------------

inline void require_path(const std::string& path, const char* what) {
  if (path.empty()) throw UsageError(std::string("missing required --") + what);
  if (!fs::exists(path)) throw IoError(std::string(what) + " not found: " + path);
}

inline void write_json(const fs::path& path, const nlohmann::json& j) {
  text::write_file(path.string(), j.dump(2) + "\n");
}

inline std::array<double, 3> parse_fractions(const std::string& s) {
  const auto parts = text::split(s, ',');
  if (parts.size() != 3) throw UsageError("--split needs three comma-separated fractions");
  std::array<double, 3> f{};
  for (std::size_t i = 0; i < 3; ++i) {
    auto v = text::to_double(parts[i]);
    if (!v) throw UsageError("bad split fraction '" + std::string(parts[i]) + "'");
    f[i] = *v;
  }
  return f;
}

inline std::map<std::string, IntentionSequence> read_sequences_file(const std::string& path) {
  std::istringstream in(text::read_file(path));
  try {
    return read_sequences(in);
  } catch (const Error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

inline void write_sequences_file(const fs::path& path, const std::map<std::string, IntentionSequence>& seqs) {
  std::ostringstream out;
  write_sequences(out, seqs);
  text::write_file(path.string(), out.str());
}

struct SplitIds {
  std::vector<std::string> train, val, test;
};

inline SplitIds read_split(const std::string& path) {
  try {
    const auto j = nlohmann::json::parse(text::read_file(path));
    return {j.at("train").get<std::vector<std::string>>(), j.at("val").get<std::vector<std::string>>(),
            j.at("test").get<std::vector<std::string>>()};
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

inline std::vector<std::string> ids_of(const Dataset& ds) {
  std::vector<std::string> ids;
  for (const auto& s : ds.sessions) ids.push_back(s.case_id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

// ---- subcommands -------------------------------------------------------------------------

inline int cmd_synth(const RunConfig& cfg) {
  SynthConfig sc;
  sc.n_cases = cfg.cases;
  sc.image_h = sc.image_w = cfg.image_size;
  sc.seed = cfg.seed;
  validate(sc);

  const fs::path out(cfg.out);
  fs::create_directories(out / "gaze");
  fs::create_directories(out / "transcripts");
  fs::create_directories(out / "images");

  std::vector<ManifestRow> rows;
  nlohmann::json voiced = nlohmann::json::array();
  for (std::size_t i = 0; i < sc.n_cases; ++i) {
    const SynthCase c = generate_synthetic_case(sc, i);
    const auto& s = c.session;
    std::ostringstream gaze, transcript;
    write_gaze_csv(gaze, {s});
    write_transcript_jsonl(transcript, s);
    const std::string gaze_rel = "gaze/" + s.case_id + ".csv";
    const std::string tr_rel = "transcripts/" + s.case_id + ".jsonl";
    text::write_file((out / gaze_rel).string(), gaze.str());
    text::write_file((out / tr_rel).string(), transcript.str());
    save_gray_image((out / s.image_ref).string(), synthetic_base_image(sc, i));
    rows.push_back({s.case_id, s.image_ref, gaze_rel, tr_rel, s.duration});
    for (const auto& sp : c.spans)
      voiced.push_back({{"case_id", s.case_id},
                        {"label", label_name(sp.label)},
                        {"verdict", verdict_name(sp.verdict)},
                        {"t_start", sp.t_start},
                        {"t_end", sp.t_end}});
  }
  std::ostringstream manifest;
  write_manifest(manifest, rows);
  text::write_file((out / "manifest.csv").string(), manifest.str());
  text::write_file((out / "anchors.tsv").string(), kDefaultAnchorTable);
  write_json(out / "synth_spans.json", voiced);
  write_json(out / "synth.json", {{"cases", sc.n_cases},
                                  {"seed", sc.seed},
                                  {"image_size", cfg.image_size},
                                  {"manifest", (out / "manifest.csv").string()}});
  log(LogLevel::Info, "synth: wrote " + std::to_string(sc.n_cases) + " cases to " + out.string());
  return kOk;
}

inline int cmd_ingest(const RunConfig& cfg) {
  require_path(cfg.manifest, "manifest");
  const Dataset ds = load_dataset(cfg.manifest);
  const auto fractions = parse_fractions(cfg.split);
  const DatasetSplit split = split_dataset(ds, cfg.seed, fractions);
  const fs::path out(cfg.out);
  fs::create_directories(out);
  std::size_t fixations = 0, sentences = 0;
  for (const auto& s : ds.sessions) {
    fixations += s.fixations.size();
    sentences += s.sentences.size();
  }
  write_json(out / "split.json", {{"seed", cfg.seed},
                                  {"fractions", fractions},
                                  {"train", ids_of(split.train)},
                                  {"val", ids_of(split.val)},
                                  {"test", ids_of(split.test)}});
  write_json(out / "ingest.json", {{"cases", ds.sessions.size()},
                                   {"fixations", fixations},
                                   {"sentences", sentences},
                                   {"train", split.train.sessions.size()},
                                   {"val", split.val.sessions.size()},
                                   {"test", split.test.sessions.size()}});
  log(LogLevel::Info, "ingest: " + std::to_string(ds.sessions.size()) + " cases, split " +
                          std::to_string(split.train.sessions.size()) + "/" +
                          std::to_string(split.val.sessions.size()) + "/" +
                          std::to_string(split.test.sessions.size()));
  return kOk;
}

inline int cmd_render(const RunConfig& cfg) {
  require_path(cfg.manifest, "manifest");
  validate(cfg.render);
  const Dataset ds = load_dataset(cfg.manifest);
  const fs::path out(cfg.out);
  nlohmann::json summary = nlohmann::json::object();
  for (const auto& s : ds.sessions) {
    const Image base = load_gray_image(s.image_ref);
    const HeatmapVideo video = render_heatmap_video(s, base, cfg.render);
    write_video_dir((out / "videos" / s.case_id).string(), video, cfg.render);
    summary[s.case_id] = video.frames.size();
    log(LogLevel::Debug, "render: " + s.case_id + " " + std::to_string(video.frames.size()) + " frames");
  }
  write_json(out / "render.json", {{"params", to_json(cfg.render)}, {"frames", summary}});
  log(LogLevel::Info, "render: " + std::to_string(ds.sessions.size()) + " videos under " + (out / "videos").string());
  return kOk;
}

inline int cmd_label(const RunConfig& cfg) {
  require_path(cfg.manifest, "manifest");
  const Dataset ds = load_dataset(cfg.manifest);
  const fs::path out(cfg.out);
  fs::create_directories(out);
  std::map<std::string, IntentionSequence> gts;
  nlohmann::json labels = nlohmann::json::object();
  std::vector<std::string> corpus;
  for (const auto& s : ds.sessions) {
    if (!(s.duration > 0.0)) throw RangeError("case " + s.case_id + " has zero duration");
    gts[s.case_id] = build_ground_truth(s.sentences, s.duration, default_rule_table(), {}, s.case_id);
    const auto verdicts = label_report(join_sentences(s.sentences));
    nlohmann::json lj = nlohmann::json::object();
    for (Label l : kAllLabels) lj[std::string(label_name(l))] = verdict_name(verdicts[static_cast<int>(l)]);
    labels[s.case_id] = lj;
    for (const auto& t : s.sentences) corpus.push_back(t.text);
  }
  if (corpus.empty()) corpus = grammar_words();
  const Vocab vocab = build_vocab(corpus, cfg.vocab_size, {cfg.time_bins, grammar_words()});
  write_sequences_file(out / "ground_truth.jsonl", gts);
  write_json(out / "report_labels.json", labels);
  std::ostringstream vs;
  write_vocab(vs, vocab);
  text::write_file((out / "vocab.txt").string(), vs.str());
  std::size_t spans = 0;
  for (const auto& [id, g] : gts) spans += g.spans.size();
  write_json(out / "label.json", {{"cases", gts.size()}, {"spans", spans}, {"vocab", vocab.fingerprint()}});
  log(LogLevel::Info, "label: " + std::to_string(spans) + " ground-truth spans over " + std::to_string(gts.size()) +
                          " cases");
  return kOk;
}

inline int cmd_features(const RunConfig& cfg) {
  require_path(cfg.videos, "videos");
  FeatureParams fp = cfg.feature_params;
  fp.kind = parse_feature_kind(cfg.feature_kind);
  const fs::path out(cfg.out);
  fs::create_directories(out / "features");
  std::vector<std::string> cases;
  for (const auto& e : fs::directory_iterator(cfg.videos))
    if (e.is_directory() && fs::exists(e.path() / "video.json")) cases.push_back(e.path().filename().string());
  std::sort(cases.begin(), cases.end());
  nlohmann::json summary = nlohmann::json::object();
  for (const auto& id : cases) {
    const HeatmapVideo video = read_video_dir((fs::path(cfg.videos) / id).string());
    const FeatureMatrix m = extract_frame_features(video, fp, cfg.render.workers);
    std::ostringstream bin;
    write_features(bin, m);
    text::write_file((out / "features" / (id + ".bin")).string(), bin.str());
    summary[id] = {{"valid_rows", m.valid_rows}, {"duration", video.duration}};
  }
  write_json(out / "features.json",
             {{"kind", feature_kind_name(fp.kind)}, {"max_frames", fp.max_frames}, {"dim", fp.dim()}, {"cases", summary}});
  log(LogLevel::Info, "features: " + std::to_string(cases.size()) + " matrices (" +
                          std::string(feature_kind_name(fp.kind)) + ")");
  return kOk;
}

inline FeatureMatrix load_feature_file(const fs::path& path) {
  std::istringstream in(text::read_file(path.string()));
  return read_features(in);
}

inline int cmd_predict(const RunConfig& cfg) {
  const PredictorKind kind = parse_predictor_kind(cfg.predictor);
  const fs::path out(cfg.out);
  fs::create_directories(out);
  std::map<std::string, IntentionSequence> preds;

  if (kind == PredictorKind::External) {
    require_path(cfg.pred_file, "pred-file");
    std::istringstream in(text::read_file(cfg.pred_file));
    preds = load_external_predictions(in);
  } else {
    require_path(cfg.gt, "gt");
    require_path(cfg.split_file, "split-file");
    const auto gts = read_sequences_file(cfg.gt);
    const SplitIds split = read_split(cfg.split_file);
    const auto& train_ids = split.train;
    const auto& query_ids = cfg.train_eq_test ? split.train : split.test;
    auto gt_of = [&](const std::string& id) -> const IntentionSequence& {
      auto it = gts.find(id);
      if (it == gts.end()) throw ParseError("no ground truth for case " + id);
      return it->second;
    };

    if (kind == PredictorKind::Retrieval) {
      require_path(cfg.features, "features");
      std::vector<TrainingExample> train;
      for (const auto& id : train_ids)
        train.push_back({id, load_feature_file(fs::path(cfg.features) / "features" / (id + ".bin")), gt_of(id)});
      const RetrievalPredictor predictor(std::move(train));
      for (const auto& id : query_ids) {
        const auto q = load_feature_file(fs::path(cfg.features) / "features" / (id + ".bin"));
        preds[id] = predictor.predict(q, gt_of(id).duration, id);
      }
    } else {
      require_path(cfg.manifest, "manifest");
      std::vector<TrainingExample> train;
      for (const auto& id : train_ids) train.push_back({id, {}, gt_of(id)});
      const LabelTimePriors priors = fit_label_priors(train);
      const Dataset ds = load_dataset(cfg.manifest);
      for (const auto& id : query_ids) {
        auto it = std::find_if(ds.sessions.begin(), ds.sessions.end(),
                               [&](const GazeSession& s) { return s.case_id == id; });
        if (it == ds.sessions.end()) throw ParseError("case " + id + " missing from manifest");
        preds[id] = predict_prior(label_report(join_sentences(it->sentences)), priors, gt_of(id).duration, id);
      }
    }
  }
  write_sequences_file(out / "predictions.jsonl", preds);
  std::size_t spans = 0;
  for (const auto& [id, p] : preds) spans += p.spans.size();
  write_json(out / "predict.json", {{"predictor", cfg.predictor}, {"cases", preds.size()}, {"spans", spans}});
  log(LogLevel::Info, "predict: " + cfg.predictor + " -> " + std::to_string(spans) + " spans over " +
                          std::to_string(preds.size()) + " cases");
  return kOk;
}

inline int cmd_extract_roi(const RunConfig& cfg) {
  require_path(cfg.videos, "videos");
  require_path(cfg.pred, "pred");
  const auto preds = read_sequences_file(cfg.pred);
  const fs::path out(cfg.out);
  fs::create_directories(out / "roi");
  std::size_t spans = 0, nonempty = 0;
  for (const auto& [id, seq] : preds) {
    const fs::path vdir = fs::path(cfg.videos) / id;
    const HeatmapVideo video = read_video_dir(vdir.string());
    const Image base = load_gray_image(video.base_image_ref);
    const fs::path cdir = out / "roi" / id;
    fs::create_directories(cdir);
    nlohmann::json sidecar = nlohmann::json::array();
    for (std::size_t k = 0; k < seq.spans.size(); ++k) {
      const auto& span = seq.spans[k];
      const Clip clip = extract_clip(video, span.t_start, span.t_end);
      const RoiResult roi = roi_mask(mean_image(clip), base, cfg.threshold_frac, span.label);
      const std::string caption = std::string(label_name(span.label)) + " " + std::string(verdict_name(span.verdict));
      char name[32];
      std::snprintf(name, sizeof name, "span_%02zu.png", k);
      write_png((cdir / name).string(), render_roi_overlay(roi, base, caption));
      auto entry = roi_sidecar(id, span, roi);
      entry["image"] = name;
      sidecar.push_back(entry);
      ++spans;
      nonempty += roi.bbox.empty() ? 0 : 1;
    }
    write_json(cdir / "roi.json", sidecar);
  }
  write_json(out / "extract_roi.json",
             {{"spans", spans}, {"nonempty_bboxes", nonempty}, {"threshold_frac", cfg.threshold_frac}});
  log(LogLevel::Info, "extract-roi: " + std::to_string(nonempty) + "/" + std::to_string(spans) +
                          " spans with a nonempty region");
  return kOk;
}

inline int cmd_evaluate(const RunConfig& cfg) {
  require_path(cfg.pred, "pred");
  require_path(cfg.gt, "gt");
  const auto preds = read_sequences_file(cfg.pred);
  const auto gts = read_sequences_file(cfg.gt);
  Vocab vocab;
  if (!cfg.vocab.empty()) {
    require_path(cfg.vocab, "vocab");
    std::istringstream in(text::read_file(cfg.vocab));
    vocab = read_vocab(in);
  } else {
    vocab = grammar_vocab(cfg.vocab_size, cfg.time_bins);
  }
  // With a split file, only the cases that were predicted from it are scored.
  std::map<std::string, IntentionSequence> scored = gts;
  if (!cfg.split_file.empty()) {
    require_path(cfg.split_file, "split-file");
    const SplitIds split = read_split(cfg.split_file);
    scored.clear();
    for (const auto& id : cfg.train_eq_test ? split.train : split.test) {
      auto it = gts.find(id);
      if (it == gts.end()) throw ParseError("no ground truth for case " + id);
      scored.emplace(id, it->second);
    }
  }
  const EvaluationReport rep = evaluate_dataset(preds, scored, vocab, {cfg.text_only, 0.1});
  const fs::path out(cfg.out);
  fs::create_directories(out);
  write_json(out / "evaluation.json", to_json(rep));
  std::ostringstream sh, eh;
  write_histogram_csv(sh, rep.start_hist);
  write_histogram_csv(eh, rep.end_hist);
  text::write_file((out / "start_hist.csv").string(), sh.str());
  text::write_file((out / "end_hist.csv").string(), eh.str());
  char line[160];
  std::snprintf(line, sizeof line, "evaluate: %zu cases, BLEU-1..4 %.3f %.3f %.3f %.3f, P %.3f R %.3f",
                rep.n_cases, rep.bleu[0], rep.bleu[1], rep.bleu[2], rep.bleu[3], rep.precision, rep.recall);
  log(LogLevel::Info, line);
  return kOk;
}

// synth (unless --manifest is given) -> ingest -> render -> label -> features
// -> predict -> extract-roi -> evaluate, all under --out.
inline int cmd_pipeline(const RunConfig& cfg) {
  const fs::path out(cfg.out);
  RunConfig c = cfg;
  if (c.manifest.empty()) {
    RunConfig s = cfg;
    s.out = (out / "data").string();
    cmd_synth(s);
    c.manifest = (out / "data" / "manifest.csv").string();
  }
  c.out = out.string();
  cmd_ingest(c);
  cmd_render(c);
  cmd_label(c);
  c.videos = (out / "videos").string();
  cmd_features(c);
  c.gt = (out / "ground_truth.jsonl").string();
  c.split_file = (out / "split.json").string();
  c.features = out.string();
  cmd_predict(c);
  c.pred = (out / "predictions.jsonl").string();
  cmd_extract_roi(c);
  c.vocab = (out / "vocab.txt").string();
  cmd_evaluate(c);
  write_json(out / "pipeline.json", {{"manifest", c.manifest},
                                     {"predictor", c.predictor},
                                     {"seed", c.seed},
                                     {"train_eq_test", c.train_eq_test},
                                     {"evaluation", (out / "evaluation.json").string()}});
  return kOk;
}

// ---- entry point -----------------------------------------------------------------------------

inline int run(int argc, const char* const* argv) {
  RunConfig cfg;
  CLI::App app{"Gaze-grounded intention detection toolkit"};
  app.set_config("--config", "", "Flat key = value config file; flags override it");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.fallthrough();
  app.require_subcommand(1);

  app.add_option("--out", cfg.out, "Output directory")->capture_default_str();
  app.add_option("--manifest", cfg.manifest, "Dataset manifest CSV");
  app.add_option("--videos", cfg.videos, "Directory of rendered videos (one subdirectory per case)");
  app.add_option("--features", cfg.features, "Directory holding features/<case>.bin");
  app.add_option("--gt", cfg.gt, "Ground-truth sequences (prediction line format)");
  app.add_option("--pred", cfg.pred, "Predicted sequences (prediction line format)");
  app.add_option("--pred-file", cfg.pred_file, "External predictions for --predictor external");
  app.add_option("--split-file", cfg.split_file, "split.json written by ingest");
  app.add_option("--vocab", cfg.vocab, "Vocab file written by label");
  app.add_option("--seed", cfg.seed, "Root random seed")->capture_default_str();
  app.add_option("--cases", cfg.cases, "Synthetic case count")->capture_default_str();
  app.add_option("--image-size", cfg.image_size, "Synthetic image side in pixels")->capture_default_str();
  app.add_option("--split", cfg.split, "train,val,test fractions")->capture_default_str();
  app.add_flag("--train-eq-test", cfg.train_eq_test, "Predict the training cases from themselves");
  app.add_option("--fps", cfg.render.fps, "Heatmap frames per second")->capture_default_str();
  app.add_option("--sigma-frac", cfg.render.sigma_frac, "Gaussian sigma / image diagonal")->capture_default_str();
  app.add_option("--decay-half-life", cfg.render.decay_half_life, "Heat half-life in seconds")->capture_default_str();
  app.add_option("--alpha", cfg.render.alpha, "Overlay blend weight")->capture_default_str();
  app.add_option("--colormap", cfg.render.colormap, "inferno or gray")->capture_default_str();
  app.add_option("--workers", cfg.render.workers, "Worker threads")->capture_default_str();
  app.add_option("--max-frames", cfg.feature_params.max_frames, "Feature matrix rows")->capture_default_str();
  app.add_option("--feature-kind", cfg.feature_kind, "downsample16, intensity_histogram or heat_moments")
      ->capture_default_str();
  app.add_option("--vocab-size", cfg.vocab_size, "Text vocabulary size v")->capture_default_str();
  app.add_option("--time-bins", cfg.time_bins, "Time token count n")->capture_default_str();
  app.add_option("--predictor", cfg.predictor, "retrieval, prior or external")->capture_default_str();
  app.add_option("--threshold-frac", cfg.threshold_frac, "ROI threshold as a fraction of peak heat")
      ->capture_default_str();
  app.add_flag("--text-only", cfg.text_only, "Score BLEU/CIDEr without time tokens");

  struct Sub {
    const char* name;
    const char* help;
    int (*fn)(const RunConfig&);
  };
  const Sub subs[] = {
      {"synth", "Generate a synthetic dataset", cmd_synth},
      {"ingest", "Validate a manifest and split it", cmd_ingest},
      {"render", "Render fixation heatmap videos", cmd_render},
      {"label", "Build ground-truth intention sequences and the vocab", cmd_label},
      {"features", "Extract frame feature matrices", cmd_features},
      {"predict", "Predict intention sequences", cmd_predict},
      {"extract-roi", "Extract regions of interest for predicted spans", cmd_extract_roi},
      {"evaluate", "Score predictions against ground truth", cmd_evaluate},
      {"pipeline", "Run every stage end to end", cmd_pipeline},
  };
  for (const auto& s : subs) app.add_subcommand(s.name, s.help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kUsage;
  }

  const auto* chosen = app.get_subcommands().front();
  try {
    for (const auto& s : subs)
      if (chosen->get_name() == s.name) return s.fn(cfg);
  } catch (const Error& e) {
    log(LogLevel::Error, e.what());
    switch (e.kind()) {
      case Error::Kind::Usage: return kUsage;
      case Error::Kind::Invariant: return kInternal;
      default: return kData;
    }
  } catch (const nlohmann::json::exception& e) {
    log(LogLevel::Error, e.what());
    return kData;
  } catch (const fs::filesystem_error& e) {
    log(LogLevel::Error, e.what());
    return kData;
  } catch (const std::exception& e) {
    log(LogLevel::Error, e.what());
    return kInternal;
  }
  return kInternal;
}

}  // namespace gik::cli
