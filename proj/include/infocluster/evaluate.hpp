#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "infocluster/error.hpp"
#include "infocluster/image.hpp"
#include "infocluster/infogan.hpp"
#include "infocluster/metrics.hpp"
#include "infocluster/nn/layers.hpp"
#include "infocluster/nn/losses.hpp"
#include "infocluster/nn/optim.hpp"

namespace infocluster {

namespace fs = std::filesystem;

struct EvaluationReport {
  std::string method;
  std::optional<double> silhouette;
  std::optional<double> purity;
  std::optional<double> nmi;
  std::optional<double> val_acc;
  int n_samples = 0;
  uint64_t seed = 0;
};

inline void to_json(nlohmann::json& j, const EvaluationReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); };
  j = {{"method", r.method},         {"silhouette", opt(r.silhouette)},
       {"purity", opt(r.purity)},    {"nmi", opt(r.nmi)},
       {"val_acc", opt(r.val_acc)},  {"n_samples", r.n_samples},
       {"seed", r.seed}};
}

inline void from_json(const nlohmann::json& j, EvaluationReport& r) {
  auto opt = [&](const char* key) -> std::optional<double> {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
  };
  r.method = j.at("method").get<std::string>();
  r.silhouette = opt("silhouette");
  r.purity = opt("purity");
  r.nmi = opt("nmi");
  r.val_acc = opt("val_acc");
  r.n_samples = j.at("n_samples").get<int>();
  r.seed = j.at("seed").get<uint64_t>();
}

// ---------------------------------------------------------------------------
// Effect validation: how learnable are the cluster labels?

struct ClassifierConfig {
  int epochs = 20;
  int batch = 32;
  double lr = 1e-3;
  int width = 16;  // channels of the first convolution; doubled twice
  double leak = 0.1;
};

struct SplitIndices {
  std::vector<size_t> train;
  std::vector<size_t> val;
};

/// Per-class shuffle, then the first round(m·a/(a+b)) members of each class
/// go to training. Both lists are sorted.
inline SplitIndices stratified_split(const std::vector<int>& labels, int train_parts, int val_parts,
                                     uint64_t seed) {
  std::map<int, std::vector<size_t>> groups;
  for (size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);
  std::mt19937_64 rng(seed);
  SplitIndices split;
  for (auto& [label, members] : groups) {
    std::shuffle(members.begin(), members.end(), rng);
    const auto m = members.size();
    const auto n_train = static_cast<size_t>(
        std::lround(static_cast<double>(m) * train_parts / (train_parts + val_parts)));
    if (n_train == 0)
      throw Error(ErrorCode::DegenerateSplit, "class " + std::to_string(label) + " has no training samples");
    split.train.insert(split.train.end(), members.begin(), members.begin() + n_train);
    split.val.insert(split.val.end(), members.begin() + n_train, members.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  return split;
}

/// Three stride-2 convolutions and a linear head.
template <typename T>
class LabelClassifier {
 public:
  LabelClassifier(Size2 size, int classes, const ClassifierConfig& cfg, std::mt19937_64& rng) {
    int channels = 3;
    for (int i = 0; i < 3; ++i) {
      const int out = cfg.width << i;
      net_.template add<nn::Conv2d<T>>("cls.conv" + std::to_string(i), channels, out, rng);
      net_.template add<nn::LeakyRelu<T>>(cfg.leak);
      channels = out;
    }
    net_.template add<nn::Flatten<T>>();
    const int features = channels * (size.height >> 3) * (size.width >> 3);
    net_.template add<nn::Linear<T>>("cls.head", features, classes, rng, 0.05);
  }

  Matrix<T> logits(const Activation<T>& x) { return net_.forward(x).data; }
  void backward(const Matrix<T>& d_logits) { net_.backward(nn::make_flat(d_logits), true, false); }
  std::vector<nn::Parameter<T>*> parameters() { return net_.parameters(); }

 private:
  nn::Sequential<T> net_;
};

/// Trains a small classifier on a stratified train split of (records, labels)
/// and returns its top-1 accuracy on the held-out split.
inline double effect_validation(const std::vector<ImageRecord>& records, const std::vector<int>& labels,
                                int train_parts, int val_parts, const ClassifierConfig& cfg,
                                uint64_t seed) {
  if (records.size() != labels.size())
    throw Error(ErrorCode::LengthMismatch, "effect_validation: records and labels differ in length");
  if (records.size() < 8) throw Error(ErrorCode::TooFewSamples, "effect_validation needs >= 8 samples");
  const Size2 size = records.front().pixels.size();
  if (size.height % 8 != 0 || size.width % 8 != 0)
    throw Error(ErrorCode::ShapeMismatch, "effect_validation needs image sides divisible by 8");

  std::map<int, int> dense;
  for (int l : labels) dense.emplace(l, 0);
  int next = 0;
  for (auto& [label, idx] : dense) idx = next++;
  std::vector<int> y(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) y[i] = dense[labels[i]];

  const auto split = stratified_split(y, train_parts, val_parts, seed);
  {
    std::vector<char> present(next, 0);
    for (size_t i : split.train) present[y[i]] = 1;
    if (std::count(present.begin(), present.end(), 1) < 2)
      throw Error(ErrorCode::DegenerateSplit, "fewer than 2 classes in the training split");
  }
  if (split.val.empty()) throw Error(ErrorCode::DegenerateSplit, "validation split is empty");

  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  LabelClassifier<float> model(size, next, cfg, rng);
  nn::Adam<float> opt(model.parameters(), {cfg.lr, 0.9, 0.999});

  std::vector<size_t> order = split.train;
  std::vector<const ImageRecord*> batch;
  std::vector<int> targets;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (size_t begin = 0; begin < order.size(); begin += cfg.batch) {
      const size_t end = std::min(order.size(), begin + cfg.batch);
      batch.clear();
      targets.clear();
      for (size_t i = begin; i < end; ++i) {
        batch.push_back(&records[order[i]]);
        targets.push_back(y[order[i]]);
      }
      const auto x = to_network_batch<float>(batch, size);
      Matrix<float> grad;
      nn::softmax_cross_entropy(model.logits(x), targets, &grad);
      opt.zero_grad();
      model.backward(grad);
      opt.step();
    }
  }

  size_t correct = 0;
  for (size_t begin = 0; begin < split.val.size(); begin += 100) {
    const size_t end = std::min(split.val.size(), begin + 100);
    batch.clear();
    for (size_t i = begin; i < end; ++i) batch.push_back(&records[split.val[i]]);
    const auto logits = model.logits(to_network_batch<float>(batch, size));
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      Eigen::Index best = 0;
      for (Eigen::Index k = 1; k < logits.rows(); ++k)
        if (logits(k, j) > logits(best, j)) best = k;
      correct += static_cast<int>(best) == y[split.val[begin + j]] ? 1 : 0;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(split.val.size());
}

// ---------------------------------------------------------------------------
// Reports

inline std::string format_metric(const std::optional<double>& v) {
  if (!v) return "–";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

inline void write_report(const fs::path& json_path, const EvaluationReport& report) {
  if (json_path.has_parent_path()) fs::create_directories(json_path.parent_path());
  std::ofstream(json_path) << nlohmann::json(report).dump(2) << "\n";
  auto csv_path = json_path;
  csv_path.replace_extension(".csv");
  std::ofstream csv(csv_path);
  csv << "method,silhouette,purity,nmi,val_acc,n_samples,seed\n"
      << report.method << ',' << format_metric(report.silhouette) << ',' << format_metric(report.purity)
      << ',' << format_metric(report.nmi) << ',' << format_metric(report.val_acc) << ','
      << report.n_samples << ',' << report.seed << '\n';
}

inline EvaluationReport read_report(const fs::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw Error(ErrorCode::IoError, json_path.string() + ": cannot open report");
  return nlohmann::json::parse(in).get<EvaluationReport>();
}

/// Reports ordered by val_acc descending (missing last, otherwise stable).
inline std::vector<EvaluationReport> rank_reports(std::vector<EvaluationReport> reports) {
  std::stable_sort(reports.begin(), reports.end(), [](const auto& a, const auto& b) {
    if (a.val_acc.has_value() != b.val_acc.has_value()) return a.val_acc.has_value();
    return a.val_acc && *a.val_acc > *b.val_acc;
  });
  return reports;
}

/// Writes `out_path` as CSV and a padded text table next to it (`.txt`).
inline void compare_methods(const std::vector<EvaluationReport>& reports, const fs::path& out_path) {
  const auto ranked = rank_reports(reports);
  const std::vector<std::string> header{"method", "val_acc", "silhouette", "purity", "nmi", "n_samples"};
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : ranked)
    rows.push_back({r.method, format_metric(r.val_acc), format_metric(r.silhouette),
                    format_metric(r.purity), format_metric(r.nmi), std::to_string(r.n_samples)});

  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  std::ofstream csv(out_path);
  for (size_t c = 0; c < header.size(); ++c) csv << (c ? "," : "") << header[c];
  csv << '\n';
  for (const auto& row : rows) {
    for (size_t c = 0; c < row.size(); ++c) csv << (c ? "," : "") << row[c];
    csv << '\n';
  }

  // Column widths in code points so the en dash pads like one character.
  auto display_width = [](const std::string& s) {
    size_t n = 0;
    for (unsigned char ch : s) n += (ch & 0xC0) != 0x80;
    return n;
  };
  std::vector<size_t> width(header.size());
  for (size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& row : rows) width[c] = std::max(width[c], display_width(row[c]));
  }
  auto txt_path = out_path;
  txt_path.replace_extension(".txt");
  std::ofstream txt(txt_path);
  auto emit = [&](const std::vector<std::string>& row) {
    for (size_t c = 0; c < row.size(); ++c) {
      txt << (c ? "  " : "") << row[c];
      if (c + 1 < row.size()) txt << std::string(width[c] - display_width(row[c]), ' ');
    }
    txt << '\n';
  };
  emit(header);
  size_t total = 0;
  for (auto w : width) total += w;
  txt << std::string(total + 2 * (width.size() - 1), '-') << '\n';
  for (const auto& row : rows) emit(row);
}

}  // namespace infocluster
