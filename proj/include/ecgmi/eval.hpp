#pragma once

// Confusion matrices, metrics, stratified folds and the scenario runner.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "ecgmi/augment.hpp"
#include "ecgmi/error.hpp"
#include "ecgmi/image.hpp"
#include "ecgmi/label.hpp"
#include "ecgmi/nn/trainer.hpp"
#include "ecgmi/pipeline.hpp"
#include "ecgmi/qgsvm.hpp"

namespace ecgmi::eval {

/// Positive class is MI.
struct ConfusionMatrix {
  std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;

  std::uint64_t total() const { return tp + tn + fp + fn; }
  void add(int truth, int predicted) {
    if (truth == 1)
      (predicted == 1 ? tp : fn) += 1;
    else
      (predicted == 1 ? fp : tn) += 1;
  }
  ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
    tp += o.tp;
    tn += o.tn;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  bool operator==(const ConfusionMatrix&) const = default;
};

/// Percentages; nullopt where the denominator is zero.
struct Metrics {
  std::optional<double> accuracy, sensitivity, predictivity, specificity;
};

inline Metrics compute_metrics(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw Error(ErrorCode::EmptyMatrix, "confusion matrix is empty");
  auto pct = [](std::uint64_t num, std::uint64_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return 100.0 * static_cast<double>(num) / static_cast<double>(den);
  };
  return {pct(cm.tp + cm.tn, cm.total()), pct(cm.tp, cm.tp + cm.fn), pct(cm.tp, cm.tp + cm.fp),
          pct(cm.tn, cm.tn + cm.fp)};
}

// ---- folds ------------------------------------------------------------------------------

/// Folds of item indices. Each class is shuffled and dealt round-robin; the dealing
/// position carries over from one class to the next so fold sizes also differ by at
/// most one overall.
inline std::vector<std::vector<std::size_t>> stratified_k_fold(std::span<const int> labels, std::size_t k,
                                                               std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::InvalidArgument, "k must be at least 2");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  for (const auto& [cls, idx] : by_class)
    if (idx.size() < k)
      throw Error(ErrorCode::TooFewItems, "class " + std::to_string(cls) + " has " + std::to_string(idx.size()) +
                                              " items, fewer than k = " + std::to_string(k));
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t next = 0;
  for (auto& [cls, idx] : by_class) {
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
    for (auto i : idx) folds[next++ % k].push_back(i);
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

/// Fold assignment by group (e.g. patient): every group lands in exactly one fold.
/// Groups are ordered by majority class then shuffled, and dealt to the currently
/// smallest fold.
inline std::vector<std::vector<std::size_t>> grouped_k_fold(std::span<const int> labels,
                                                            std::span<const std::string> groups, std::size_t k,
                                                            std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::InvalidArgument, "k must be at least 2");
  if (labels.size() != groups.size()) throw Error(ErrorCode::DimensionMismatch, "labels and groups differ in length");
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < groups.size(); ++i) members[groups[i]].push_back(i);
  if (members.size() < k)
    throw Error(ErrorCode::TooFewItems, std::to_string(members.size()) + " groups, fewer than k = " + std::to_string(k));
  std::vector<std::pair<int, const std::vector<std::size_t>*>> order;
  for (const auto& [g, idx] : members) {
    std::size_t mi = 0;
    for (auto i : idx) mi += labels[i] == 1;
    order.emplace_back(2 * mi >= idx.size() ? 1 : 0, &idx);
  }
  std::mt19937_64 rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::vector<std::size_t>> folds(k);
  std::vector<std::size_t> load(k, 0);
  for (const auto& [cls, idx] : order) {
    const auto f = static_cast<std::size_t>(std::min_element(load.begin(), load.end()) - load.begin());
    folds[f].insert(folds[f].end(), idx->begin(), idx->end());
    load[f] += idx->size();
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

struct HoldoutSplit {
  std::vector<std::size_t> train, validation, test;
};

/// Stratified 60/30/10 split.
inline HoldoutSplit holdout_60_30_10(std::span<const int> labels, std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::mt19937_64 rng(seed);
  HoldoutSplit s;
  for (auto& [cls, idx] : by_class) {
    if (idx.size() < 3) throw Error(ErrorCode::TooFewItems, "holdout split needs 3 items per class");
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
    const std::size_t n = idx.size();
    const std::size_t n_test = std::max<std::size_t>(1, (n + 5) / 10);
    const std::size_t n_val = std::max<std::size_t>(1, (3 * n + 5) / 10);
    const std::size_t n_train = n - n_test - n_val;
    s.train.insert(s.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.validation.insert(s.validation.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train),
                        idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.test.insert(s.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), idx.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.validation.begin(), s.validation.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

// ---- scenarios --------------------------------------------------------------------------

enum class ModelKind { MI1, MI2 };
enum class SplitMode { TenFold, Holdout60_30_10 };

inline std::string to_string(ModelKind m) { return m == ModelKind::MI1 ? "mi1" : "mi2"; }
inline std::string to_string(SplitMode m) { return m == SplitMode::TenFold ? "tenfold" : "holdout"; }

struct ScenarioSpec {
  NoiseCondition noise = NoiseCondition::Filtered;
  bool augmentation = true;
  ModelKind model = ModelKind::MI2;
  std::size_t folds = 10;
  SplitMode split = SplitMode::TenFold;
  bool patient_level = false;  // group folds by source record
  std::uint64_t seed = 42;
};

/// best-case1 = filtered + augmentation, best-case2 = filtered without, worst-case1 =
/// raw + augmentation, worst-case2 = raw without.
inline std::string scenario_name(const ScenarioSpec& s) {
  const bool filtered = s.noise == NoiseCondition::Filtered;
  return std::string(filtered ? "best-case" : "worst-case") + (s.augmentation ? "1" : "2");
}

struct FoldResult {
  std::size_t fold = 0;
  ConfusionMatrix cm;
  std::size_t train_size = 0;  // after augmentation
  std::size_t test_size = 0;
};

struct ScenarioResult {
  std::string name;
  std::vector<FoldResult> folds;
  ConfusionMatrix pooled;
  Metrics metrics;
};

struct RunConfig {
  nn::Architecture arch{};
  nn::TrainConfig train{};
  svm::QGKernelParams kernel{};
  svm::SmoConfig smo{};
  bool standardize_features = false;
  std::size_t threads = 1;  // 0 = hardware concurrency
};

/// Per-feature z-scoring fitted on training features (constant features keep scale 1).
struct Standardizer {
  std::vector<double> mean, scale;

  static Standardizer fit(std::span<const svm::FeatureVector> x) {
    Standardizer s;
    if (x.empty()) return s;
    const std::size_t d = x.front().size();
    s.mean.assign(d, 0.0);
    s.scale.assign(d, 0.0);
    for (const auto& v : x)
      for (std::size_t j = 0; j < d; ++j) s.mean[j] += v[j];
    for (auto& m : s.mean) m /= static_cast<double>(x.size());
    for (const auto& v : x)
      for (std::size_t j = 0; j < d; ++j) s.scale[j] += (v[j] - s.mean[j]) * (v[j] - s.mean[j]);
    for (auto& sc : s.scale) {
      sc = std::sqrt(sc / static_cast<double>(x.size()));
      if (!(sc > 0.0)) sc = 1.0;
    }
    return s;
  }
  void apply(svm::FeatureVector& v) const {
    if (mean.empty()) return;
    if (v.size() != mean.size()) throw Error(ErrorCode::DimensionMismatch, "feature length differs from scaler");
    for (std::size_t j = 0; j < v.size(); ++j) v[j] = (v[j] - mean[j]) / scale[j];
  }
};

/// A trained classifier: the network, plus the SVM head for MI2.
struct TrainedModel {
  nn::NetworkParams network;
  std::optional<svm::SvmModel> svm;
  std::optional<Standardizer> scaler;

  int predict(const EcgImage& input_sized) const {
    if (!svm) return nn::predict(network, input_sized).label;
    auto f = nn::extract_features(network, input_sized);
    if (scaler) scaler->apply(f);
    return svm::predict_svm(*svm, f).label > 0 ? 1 : 0;
  }
};

/// Trains MI1 (network only) or MI2 (network, then SVM on the training features).
/// Images must already have the network input size.
inline TrainedModel train_model(std::span<const EcgImage> train, std::span<const EcgImage> validation,
                                ModelKind model, const RunConfig& cfg) {
  TrainedModel m{nn::train_mi1(train, validation, cfg.arch, cfg.train).params, std::nullopt, std::nullopt};
  if (model == ModelKind::MI2) {
    std::vector<svm::FeatureVector> feats;
    std::vector<int> y;
    feats.reserve(train.size());
    for (const auto& img : train) {
      feats.push_back(nn::extract_features(m.network, img));
      y.push_back(class_index(img.label) == 1 ? 1 : -1);
    }
    if (cfg.standardize_features) {
      m.scaler = Standardizer::fit(feats);
      for (auto& f : feats) m.scaler->apply(f);
    }
    m.svm = svm::train_svm(feats, y, cfg.kernel, cfg.smo).model;
  }
  return m;
}

inline std::size_t resolve_threads(std::size_t requested) {
  if (requested != 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace detail {

inline std::vector<EcgImage> gather(std::span<const EcgImage> data, std::span<const std::size_t> idx) {
  std::vector<EcgImage> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(data[i]);
  return out;
}

/// Augments (optionally) and resizes one training portion.
inline std::vector<EcgImage> prepare_train(std::span<const EcgImage> originals, bool augment, std::size_t input_size) {
  if (!augment) return to_input_size(originals, input_size);
  return to_input_size(augment::augment_dataset(originals, true), input_size);
}

inline FoldResult evaluate_fold(std::size_t fold, std::span<const EcgImage> data, std::span<const std::size_t> train_idx,
                                std::span<const std::size_t> val_idx, std::span<const std::size_t> test_idx,
                                const ScenarioSpec& spec, const RunConfig& cfg) {
  const auto train = prepare_train(gather(data, train_idx), spec.augmentation, cfg.arch.input_size);
  const auto val = to_input_size(gather(data, val_idx), cfg.arch.input_size);
  const auto test = to_input_size(gather(data, test_idx), cfg.arch.input_size);
  const auto model = train_model(train, val, spec.model, cfg);
  FoldResult r{fold, {}, train.size(), test.size()};
  for (const auto& img : test) r.cm.add(class_index(img.label), model.predict(img));
  return r;
}

}  // namespace detail

/// Grouping key of a segment id `<record>_<start>`: the record, or for records stored
/// as `<patient>/<record>` the patient.
inline std::string group_of(const std::string& provenance) {
  const auto record = provenance.substr(0, provenance.rfind('_'));
  return record.substr(0, record.find('/'));
}

/// Runs one scenario on pre-augmentation 128x128 images of a single noise condition.
/// Folds train independently (up to cfg.threads at a time) and are merged in fold order.
inline ScenarioResult run_scenario(std::span<const EcgImage> data, const ScenarioSpec& spec, const RunConfig& cfg) {
  if (data.empty()) throw Error(ErrorCode::TooFewItems, "dataset is empty");
  std::vector<int> labels;
  std::vector<std::string> groups;
  for (const auto& img : data) {
    labels.push_back(class_index(img.label));
    groups.push_back(group_of(img.provenance));
  }
  ScenarioResult result{scenario_name(spec), {}, {}, {}};

  if (spec.split == SplitMode::Holdout60_30_10) {
    const auto s = holdout_60_30_10(labels, spec.seed);
    result.folds.push_back(detail::evaluate_fold(0, data, s.train, s.validation, s.test, spec, cfg));
  } else {
    if (spec.folds < 2) throw Error(ErrorCode::InvalidArgument, "ten-fold mode needs at least 2 folds");
    const auto folds = spec.patient_level ? grouped_k_fold(labels, groups, spec.folds, spec.seed)
                                          : stratified_k_fold(labels, spec.folds, spec.seed);
    result.folds.resize(folds.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
      for (std::size_t f = next++; f < folds.size(); f = next++) {
        try {
          std::vector<std::size_t> train;
          for (std::size_t g = 0; g < folds.size(); ++g)
            if (g != f) train.insert(train.end(), folds[g].begin(), folds[g].end());
          std::sort(train.begin(), train.end());
          result.folds[f] = detail::evaluate_fold(f, data, train, {}, folds[f], spec, cfg);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = folds.size();
        }
      }
    };
    const std::size_t n_threads = std::min(resolve_threads(cfg.threads), folds.size());
    if (n_threads <= 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
  }
  for (const auto& f : result.folds) result.pooled += f.cm;
  result.metrics = compute_metrics(result.pooled);
  return result;
}

// ---- report -----------------------------------------------------------------------------

inline std::string format_metric(const std::optional<double>& v) {
  if (!v) return "undefined";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", *v);
  return buf;
}

inline constexpr std::string_view kReportHeader =
    "scenario,fold,true_class,predicted_normal,predicted_mi,acc,se,pre,spe\n";

/// Per scenario: one row per true class for each fold, then the pooled rows.
inline std::string report_csv(std::span<const ScenarioResult> results) {
  std::string out(kReportHeader);
  auto rows = [&](const std::string& scenario, const std::string& fold, const ConfusionMatrix& cm) {
    Metrics m;
    if (cm.total() > 0) m = compute_metrics(cm);
    const std::string tail =
        format_metric(m.accuracy) + "," + format_metric(m.sensitivity) + "," + format_metric(m.predictivity) + "," +
        format_metric(m.specificity) + "\n";
    out += scenario + "," + fold + ",normal," + std::to_string(cm.tn) + "," + std::to_string(cm.fp) + "," + tail;
    out += scenario + "," + fold + ",mi," + std::to_string(cm.fn) + "," + std::to_string(cm.tp) + "," + tail;
  };
  for (const auto& r : results) {
    for (const auto& f : r.folds) rows(r.name, std::to_string(f.fold), f.cm);
    rows(r.name, "pooled", r.pooled);
  }
  return out;
}

inline std::string summary_text(std::span<const ScenarioResult> results) {
  std::string out;
  for (const auto& r : results) {
    out += "scenario=" + r.name + "\n";
    out += "folds=" + std::to_string(r.folds.size()) + "\n";
    out += "pooled_tp=" + std::to_string(r.pooled.tp) + "\n";
    out += "pooled_tn=" + std::to_string(r.pooled.tn) + "\n";
    out += "pooled_fp=" + std::to_string(r.pooled.fp) + "\n";
    out += "pooled_fn=" + std::to_string(r.pooled.fn) + "\n";
    out += "pooled_acc=" + format_metric(r.metrics.accuracy) + "\n";
    out += "pooled_se=" + format_metric(r.metrics.sensitivity) + "\n";
    out += "pooled_pre=" + format_metric(r.metrics.predictivity) + "\n";
    out += "pooled_spe=" + format_metric(r.metrics.specificity) + "\n";
  }
  return out;
}

inline void write_report(std::span<const ScenarioResult> results, const std::string& csv_path,
                         const std::string& summary_path) {
  io::write_text_file(csv_path, report_csv(results));
  io::write_text_file(summary_path, summary_text(results));
}

}  // namespace ecgmi::eval
