#pragma once

// Command-line driver. Exit codes: 0 success, 1 usage error, 2 data error.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "ecgmi/config.hpp"
#include "ecgmi/dataset.hpp"
#include "ecgmi/eval.hpp"
#include "ecgmi/nn/checkpoint.hpp"
#include "ecgmi/pipeline.hpp"
#include "ecgmi/qgsvm.hpp"

namespace ecgmi::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

struct Context {
  std::string command;
  config::Config cfg;
  fs::path out;
  std::ostream& log;
};

namespace detail {

inline fs::path require_path(const Context& ctx, std::string_view key) {
  const auto& v = ctx.cfg.get(key);
  if (v.empty())
    throw config::UsageError(ctx.command + " requires --" + std::string(key) + " (config key '" + std::string(key) +
                             "')");
  return v;
}

inline std::vector<EcgImage> load_images(const fs::path& dir) { return dataset::read_images(dir); }

struct LoadedRecords {
  std::vector<wfdb::EcgRecord> admitted;
  std::vector<std::pair<std::string, std::string>> rejected;  // name, reason
};

inline LoadedRecords load_records(const fs::path& dir, bool strict) {
  LoadedRecords out;
  for (const auto& h : dataset::find_headers(dir)) {
    const auto name = dataset::record_name(dir, h);
    try {
      auto rec = wfdb::load_record(h, strict);
      rec.header.record_name = name;
      if (wfdb::admitted(rec.label))
        out.admitted.push_back(std::move(rec));
      else
        out.rejected.emplace_back(name, "label other");
    } catch (const Error& e) {
      out.rejected.emplace_back(name, e.what());
    }
  }
  return out;
}

struct PreprocessOutput {
  std::vector<dsp::BeatSegment> segments;
  std::vector<std::pair<std::string, std::string>> skipped;
  std::size_t dropped_windows = 0;
};

inline PreprocessOutput preprocess_all(std::span<const wfdb::EcgRecord> records, const PreprocessConfig& cfg) {
  PreprocessOutput out;
  for (const auto& rec : records) {
    try {
      auto s = preprocess_record(rec, cfg);
      out.dropped_windows += s.dropped;
      for (auto& seg : s.segments) out.segments.push_back(std::move(seg));
    } catch (const Error& e) {
      out.skipped.emplace_back(rec.header.record_name, e.what());
    }
  }
  return out;
}

inline std::string format_pairs(const std::vector<std::pair<std::string, std::string>>& rows,
                                std::string_view header) {
  std::string out(header);
  out += '\n';
  for (const auto& [a, b] : rows) out += a + '\t' + b + '\n';
  return out;
}

inline std::vector<EcgImage> render_all(std::span<const dsp::BeatSegment> segments) {
  std::vector<EcgImage> out;
  out.reserve(segments.size());
  for (const auto& s : segments) out.push_back(render(s, segment_id(s)));
  return out;
}

inline svm::SvmModel read_svm(const fs::path& p) { return svm::load_model(io::read_file(p.string())); }

inline std::string scaler_text(const eval::Standardizer& s) {
  std::string out = "mean\tscale\n";
  for (std::size_t j = 0; j < s.mean.size(); ++j)
    out += dataset::format_g17(s.mean[j]) + '\t' + dataset::format_g17(s.scale[j]) + '\n';
  return out;
}

inline eval::Standardizer parse_scaler(const std::string& path) {
  const auto text = io::read_text_file(path);
  eval::Standardizer s;
  for (auto row : dataset::table_rows(text, "mean\tscale", path)) {
    const auto f = dataset::split_tabs(row);
    if (f.size() != 2) throw Error(ErrorCode::MalformedFile, path + ": expected 2 columns");
    s.mean.push_back(std::stod(std::string(f[0])));
    s.scale.push_back(std::stod(std::string(f[1])));
  }
  return s;
}

}  // namespace detail

// ---- subcommands ----------------------------------------------------------------------------

inline void cmd_synth(Context& ctx) {
  const auto plan = synthetic_corpus_plan(ctx.cfg.synthetic());
  std::string records;
  for (const auto& [name, spec] : plan) {
    dataset::write_record(ctx.out, synth::generate_synthetic(spec, name).record);
    records += name + '\n';
  }
  io::write_text_file((ctx.out / "RECORDS").string(), records);
  ctx.log << "synth: " << plan.size() << " records\n";
}

inline void cmd_ingest(Context& ctx) {
  const auto data = detail::require_path(ctx, "data");
  auto loaded = detail::load_records(data, ctx.cfg.flag("strict_checksum"));
  std::vector<wfdb::ManifestEntry> manifest;
  std::size_t mi = 0, normal = 0;
  for (const auto& r : loaded.admitted) {
    manifest.push_back({r.header.record_name, r.label, r.header.n_samples});
    (r.label == Label::MI ? mi : normal) += 1;
  }
  io::write_text_file((ctx.out / "manifest.tsv").string(), wfdb::format_manifest(manifest));
  io::write_text_file((ctx.out / "rejected.tsv").string(), detail::format_pairs(loaded.rejected, "record\treason"));
  const std::string summary = "records=" + std::to_string(loaded.admitted.size() + loaded.rejected.size()) +
                              "\nadmitted_mi=" + std::to_string(mi) + "\nadmitted_normal=" + std::to_string(normal) +
                              "\nrejected=" + std::to_string(loaded.rejected.size()) + "\n";
  io::write_text_file((ctx.out / "ingest-summary.txt").string(), summary);
  ctx.log << "ingest: " << mi << " MI, " << normal << " normal, " << loaded.rejected.size() << " rejected\n";
  if (manifest.empty()) throw Error(ErrorCode::TooFewItems, "no admissible records under '" + data.string() + "'");
}

inline void cmd_preprocess(Context& ctx) {
  const auto data = detail::require_path(ctx, "data");
  const auto loaded = detail::load_records(data, ctx.cfg.flag("strict_checksum"));
  auto pre = detail::preprocess_all(loaded.admitted, ctx.cfg.preprocess());
  std::vector<std::string> ids;
  for (const auto& s : pre.segments) ids.push_back(segment_id(s));
  dataset::write_segments(ctx.out, pre.segments, ids);
  auto skipped = loaded.rejected;
  skipped.insert(skipped.end(), pre.skipped.begin(), pre.skipped.end());
  io::write_text_file((ctx.out / "skipped.tsv").string(), detail::format_pairs(skipped, "record\treason"));
  ctx.log << "preprocess: " << pre.segments.size() << " segments, " << pre.dropped_windows << " windows dropped, "
          << skipped.size() << " records skipped\n";
  if (pre.segments.empty()) throw Error(ErrorCode::TooFewItems, "no segments extracted");
}

inline void cmd_render(Context& ctx) {
  const auto stored = dataset::read_segments(detail::require_path(ctx, "data"));
  std::vector<EcgImage> images;
  images.reserve(stored.size());
  for (const auto& s : stored) images.push_back(render(s.segment, s.id));
  dataset::write_images(ctx.out, images);
  ctx.log << "render: " << images.size() << " images\n";
}

inline void cmd_augment(Context& ctx) {
  const auto images = detail::load_images(detail::require_path(ctx, "data"));
  std::vector<EcgImage> out;
  const bool enabled = ctx.cfg.flag("augment");
  for (const auto& img : images) {
    out.push_back(img);
    if (!enabled) continue;
    auto crops = augment::nine_crops(img);
    for (std::size_t k = 0; k < crops.size(); ++k) {
      crops[k].provenance = img.provenance + "_c" + std::to_string(k);
      out.push_back(std::move(crops[k]));
    }
  }
  dataset::write_images(ctx.out, out);
  ctx.log << "augment: " << images.size() << " -> " << out.size() << " images\n";
}

inline void cmd_train_mi1(Context& ctx) {
  const auto arch = ctx.cfg.architecture();
  const auto train = to_input_size(detail::load_images(detail::require_path(ctx, "data")), arch.input_size);
  std::vector<EcgImage> val;
  if (!ctx.cfg.get("validation").empty())
    val = to_input_size(detail::load_images(ctx.cfg.get("validation")), arch.input_size);
  std::string log = "epoch\ttrain_loss\ttrain_accuracy\tval_accuracy\n";
  auto result = nn::train_mi1(train, val, arch, ctx.cfg.train(), [&](const nn::EpochLog& e) {
    log += std::to_string(e.epoch) + '\t' + dataset::format_g17(e.train_loss) + '\t' +
           dataset::format_g17(e.train_accuracy) + '\t' + dataset::format_g17(e.val_accuracy) + '\n';
    ctx.log << "epoch " << e.epoch << " loss " << e.train_loss << " acc " << e.train_accuracy << "\n";
  });
  nn::write_checkpoint(result.params, (ctx.out / "checkpoint.bin").string());
  io::write_text_file((ctx.out / "train-log.tsv").string(), log);
  ctx.log << "train-mi1: selected epoch " << result.selected_epoch << "\n";
}

inline void cmd_extract_features(Context& ctx) {
  const auto net = nn::read_checkpoint(detail::require_path(ctx, "checkpoint").string());
  const auto images =
      to_input_size(detail::load_images(detail::require_path(ctx, "data")), net.arch.input_size);
  std::vector<dataset::FeatureRow> rows;
  rows.reserve(images.size());
  for (const auto& img : images) rows.push_back({img.provenance, img.label, nn::extract_features(net, img)});
  io::write_text_file((ctx.out / "features.tsv").string(), dataset::format_features(rows));
  ctx.log << "extract-features: " << rows.size() << " rows\n";
}

inline void cmd_train_svm(Context& ctx) {
  auto path = detail::require_path(ctx, "data");
  if (fs::is_directory(path)) path /= "features.tsv";
  auto rows = dataset::parse_features(io::read_text_file(path.string()), path.string());
  std::vector<svm::FeatureVector> x;
  std::vector<int> y;
  for (auto& r : rows) {
    y.push_back(class_index(r.label) == 1 ? 1 : -1);
    x.push_back(std::move(r.values));
  }
  if (ctx.cfg.flag("standardize_features")) {
    const auto scaler = eval::Standardizer::fit(x);
    for (auto& v : x) scaler.apply(v);
    io::write_text_file((ctx.out / "scaler.tsv").string(), detail::scaler_text(scaler));
  }
  const auto result = svm::train_svm(x, y, ctx.cfg.kernel(), ctx.cfg.smo());
  io::write_file((ctx.out / "svm.bin").string(), svm::save_model(result.model));
  const std::string summary = "support_vectors=" + std::to_string(result.model.support_vectors().size()) +
                              "\niterations=" + std::to_string(result.iterations) +
                              "\niteration_limit=" + (result.hit_iteration_limit ? "true" : "false") +
                              "\nmax_kkt_violation=" + dataset::format_g17(result.max_kkt_violation) +
                              "\ndual_objective=" + dataset::format_g17(result.objective) + "\n";
  io::write_text_file((ctx.out / "svm-summary.txt").string(), summary);
  if (result.hit_iteration_limit) ctx.log << "warning: SMO stopped at the iteration limit\n";
  ctx.log << "train-svm: " << result.model.support_vectors().size() << " support vectors\n";
}

inline void cmd_evaluate(Context& ctx) {
  eval::TrainedModel model{nn::read_checkpoint(detail::require_path(ctx, "checkpoint").string()), std::nullopt,
                           std::nullopt};
  const bool mi2 = ctx.cfg.get("model") == "mi2";
  if (mi2) {
    const auto model_path = detail::require_path(ctx, "model_file");
    model.svm = detail::read_svm(model_path);
    if (ctx.cfg.flag("standardize_features"))
      model.scaler = detail::parse_scaler((model_path.parent_path() / "scaler.tsv").string());
  }
  const auto images =
      to_input_size(detail::load_images(detail::require_path(ctx, "data")), model.network.arch.input_size);
  eval::ScenarioResult r{"evaluate-" + ctx.cfg.get("model"), {}, {}, {}};
  eval::FoldResult fold{0, {}, 0, images.size()};
  std::string predictions = "id\ttrue_class\tpredicted\n";
  for (const auto& img : images) {
    const int p = model.predict(img);
    fold.cm.add(class_index(img.label), p);
    predictions += img.provenance + '\t' + std::string(to_string(img.label)) + '\t' +
                   std::string(to_string(label_from_index(p))) + '\n';
  }
  r.folds.push_back(fold);
  r.pooled = fold.cm;
  if (r.pooled.total() == 0) throw Error(ErrorCode::EmptyMatrix, "no images to evaluate");
  r.metrics = eval::compute_metrics(r.pooled);
  io::write_text_file((ctx.out / "predictions.tsv").string(), predictions);
  eval::write_report(std::span(&r, 1), (ctx.out / "report.csv").string(), (ctx.out / "summary.txt").string());
  ctx.log << "evaluate: accuracy " << eval::format_metric(r.metrics.accuracy) << "%\n";
}

inline void cmd_cross_validate(Context& ctx) {
  const auto data = detail::require_path(ctx, "data");
  std::vector<EcgImage> images;
  if (dataset::is_image_directory(data)) {
    images = detail::load_images(data);
  } else {
    const auto loaded = detail::load_records(data, ctx.cfg.flag("strict_checksum"));
    images = detail::render_all(detail::preprocess_all(loaded.admitted, ctx.cfg.preprocess()).segments);
  }
  auto run = ctx.cfg.run();
  const auto r = eval::run_scenario(images, ctx.cfg.scenario(), run);
  eval::write_report(std::span(&r, 1), (ctx.out / "report.csv").string(), (ctx.out / "summary.txt").string());
  ctx.log << "cross-validate " << r.name << ": pooled accuracy " << eval::format_metric(r.metrics.accuracy) << "%\n";
}

// ---- entry point ----------------------------------------------------------------------------

struct Subcommand {
  const char* name;
  const char* help;
  void (*run)(Context&);
};

inline const std::vector<Subcommand>& subcommands() {
  static const std::vector<Subcommand> list = {
      {"ingest", "scan a WFDB directory and write the admitted-record manifest", cmd_ingest},
      {"preprocess", "filter, detect peaks and segment records into a segment dump", cmd_preprocess},
      {"render", "rasterize a segment dump into a 128x128 PGM image directory", cmd_render},
      {"augment", "add the nine crops of every image", cmd_augment},
      {"train-mi1", "train the network end to end on an image directory", cmd_train_mi1},
      {"extract-features", "write second fully connected layer features", cmd_extract_features},
      {"train-svm", "train the Q-Gaussian SVM on a feature table", cmd_train_svm},
      {"evaluate", "classify an image directory and write the report", cmd_evaluate},
      {"cross-validate", "run one noise x augmentation scenario with k-fold validation", cmd_cross_validate},
      {"synth", "write a synthetic WFDB corpus", cmd_synth},
  };
  return list;
}

inline int run_cli(const std::vector<std::string>& args, std::ostream& log = std::cerr) {
  CLI::App app{"ECG myocardial infarction detection pipeline", "ecgmi"};
  app.require_subcommand(1, 1);
  std::string config_path, out_dir;
  app.add_option("--config", config_path, "key = value configuration file");
  app.add_option("--out", out_dir, "output directory");
  std::map<std::string, std::string> overrides;
  std::map<std::string, CLI::Option*> override_opts;
  for (const auto& k : config::schema()) {
    const std::string key(k.key);
    override_opts[key] = app.add_option("--" + key, overrides[key], std::string(k.range));
  }
  std::map<std::string, CLI::App*> subs;
  for (const auto& s : subcommands()) subs[s.name] = app.add_subcommand(s.name, s.help)->fallthrough();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    log << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    log << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  const Subcommand* chosen = nullptr;
  for (const auto& s : subcommands())
    if (subs[s.name]->parsed()) chosen = &s;

  try {
    Context ctx{chosen->name, {}, out_dir, log};
    if (!config_path.empty()) ctx.cfg.merge_text(io::read_text_file(config_path), config_path);
    if (const char* env = std::getenv("ECGMI_THREADS")) ctx.cfg.set("threads", env);
    for (const auto& [key, opt] : override_opts)
      if (opt->count() > 0) ctx.cfg.set(key, overrides[key]);
    if (out_dir.empty()) throw config::UsageError(ctx.command + " requires --out");
    (void)ctx.cfg.run();
    fs::create_directories(ctx.out);
    io::write_text_file((ctx.out / "run-config.txt").string(), "# ecgmi " + ctx.command + "\n" + ctx.cfg.dump());
    chosen->run(ctx);
    return kExitOk;
  } catch (const config::UsageError& e) {
    log << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    log << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return kExitData;
  }
}

inline int run_cli(int argc, char** argv, std::ostream& log = std::cerr) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, log);
}

}  // namespace ecgmi::cli
