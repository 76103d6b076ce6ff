#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "infocluster/dataset.hpp"
#include "infocluster/error.hpp"
#include "infocluster/evaluate.hpp"
#include "infocluster/gan_training.hpp"
#include "infocluster/preprocess.hpp"

namespace infocluster {

namespace fs = std::filesystem;

struct PipelineConfig {
  // paths
  fs::path corpus;   // image directory for `ingest`
  fs::path seg_dir;  // label images for `ingest`
  fs::path work_dir = "work";
  std::set<int> building_classes{kBuildingClass};

  LatentSpec latent;
  TrainConfig train;

  PreprocessMode mode = PreprocessMode::Mask;
  int size_cap = kDefaultSizeCap;

  std::optional<int> kmeans_k;  // defaults to latent.k_dis
  int kmeans_max_iter = 300;
  double kmeans_tol = 1e-4;
  uint64_t kmeans_seed = 0;

  uint64_t eval_seed = 0;
  int split_train = 3;
  int split_val = 1;
  ClassifierConfig classifier;
  std::string truth_factor;  // empty: first factor present in the records

  SynthSpec synth{2000, {{"color_system", 4}}, kNetworkSize, 7};

  bool classify_originals = false;
  int montage_per_cluster = 8;

  int grid_rows = 9;
  int grid_cols = 10;
  int grid_con_dim = 0;
  uint64_t grid_seed = 0;

  int effective_kmeans_k() const { return kmeans_k.value_or(latent.k_dis); }
};

namespace detail {

// Reads `key` from `obj` into `out`, naming the full field path on type errors.
template <typename V>
void read_field(const nlohmann::json& obj, const std::string& prefix, const char* key, V& out) {
  if (!obj.contains(key)) return;
  if constexpr (std::is_integral_v<V> && !std::is_same_v<V, bool>) {
    if (!obj.at(key).is_number_integer())
      throw Error(ErrorCode::ConfigError, prefix + key + ": expected an integer, got " + obj.at(key).dump());
  }
  try {
    out = obj.at(key).get<V>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, prefix + key + ": " + e.what());
  }
}

inline void reject_unknown(const nlohmann::json& obj, const std::string& prefix,
                           const std::set<std::string>& known) {
  if (!obj.is_object()) throw Error(ErrorCode::ConfigError, prefix + ": expected an object");
  for (const auto& [key, value] : obj.items())
    if (!known.contains(key)) throw Error(ErrorCode::ConfigError, prefix + key + ": unknown field");
}

}  // namespace detail

inline nlohmann::json to_json(const PipelineConfig& c) {
  nlohmann::json factors = nlohmann::json::array();
  for (const auto& f : c.synth.factors) factors.push_back({f.name, f.cardinality});
  return {
      {"paths", {{"corpus", c.corpus.string()}, {"seg_dir", c.seg_dir.string()}, {"work_dir", c.work_dir.string()}}},
      {"building_classes", c.building_classes},
      {"latent", c.latent},
      {"train", c.train},
      {"preprocess", {{"mode", mode_name(c.mode)}, {"size_cap", c.size_cap}}},
      {"kmeans",
       {{"k", c.effective_kmeans_k()}, {"max_iter", c.kmeans_max_iter}, {"tol", c.kmeans_tol}, {"seed", c.kmeans_seed}}},
      {"evaluate",
       {{"seed", c.eval_seed},
        {"split", {c.split_train, c.split_val}},
        {"truth_factor", c.truth_factor},
        {"classifier",
         {{"epochs", c.classifier.epochs},
          {"batch", c.classifier.batch},
          {"lr", c.classifier.lr},
          {"width", c.classifier.width},
          {"leak", c.classifier.leak}}}}},
      {"synth",
       {{"n_images", c.synth.n_images},
        {"factors", factors},
        {"image_size", {c.synth.image_size.height, c.synth.image_size.width}},
        {"seed", c.synth.seed}}},
      {"classify", {{"originals", c.classify_originals}, {"montage_per_cluster", c.montage_per_cluster}}},
      {"sample_grid", {{"rows", c.grid_rows}, {"cols", c.grid_cols}, {"con_dim", c.grid_con_dim}, {"seed", c.grid_seed}}},
  };
}

inline void validate(const PipelineConfig& c) {
  validate(c.latent);
  validate(c.train);
  if (c.building_classes.empty()) throw Error(ErrorCode::ConfigError, "building_classes: must not be empty");
  if (c.size_cap < 0) throw Error(ErrorCode::ConfigError, "preprocess.size_cap: must be >= 0");
  if (c.effective_kmeans_k() < 2) throw Error(ErrorCode::ConfigError, "kmeans.k: must be >= 2");
  if (c.kmeans_max_iter < 1) throw Error(ErrorCode::ConfigError, "kmeans.max_iter: must be >= 1");
  if (c.split_train < 1 || c.split_val < 1)
    throw Error(ErrorCode::ConfigError, "evaluate.split: both parts must be >= 1");
  if (c.classifier.epochs < 0 || c.classifier.batch < 1 || !(c.classifier.lr > 0) || c.classifier.width < 1)
    throw Error(ErrorCode::ConfigError, "evaluate.classifier: invalid settings");
  if (c.montage_per_cluster < 1)
    throw Error(ErrorCode::ConfigError, "classify.montage_per_cluster: must be >= 1");
}

/// Overlays a JSON config onto `c`. Unknown fields are errors.
inline void apply_json(PipelineConfig& c, const nlohmann::json& j) {
  using detail::read_field;
  detail::reject_unknown(j, "",
                         {"paths", "building_classes", "latent", "train", "preprocess", "kmeans", "evaluate",
                          "synth", "classify", "sample_grid"});
  if (j.contains("paths")) {
    const auto& p = j["paths"];
    detail::reject_unknown(p, "paths.", {"corpus", "seg_dir", "work_dir"});
    std::string s;
    if (p.contains("corpus")) read_field(p, "paths.", "corpus", s), c.corpus = s;
    if (p.contains("seg_dir")) read_field(p, "paths.", "seg_dir", s), c.seg_dir = s;
    if (p.contains("work_dir")) read_field(p, "paths.", "work_dir", s), c.work_dir = s;
  }
  read_field(j, "", "building_classes", c.building_classes);
  if (j.contains("latent")) {
    const auto& l = j["latent"];
    detail::reject_unknown(l, "latent.", {"k_dis", "n_con", "n_noise"});
    read_field(l, "latent.", "k_dis", c.latent.k_dis);
    read_field(l, "latent.", "n_con", c.latent.n_con);
    read_field(l, "latent.", "n_noise", c.latent.n_noise);
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    detail::reject_unknown(t, "train.",
                           {"lambda", "lr_d", "lr_gq", "batch", "epochs", "leak", "seed", "image_size", "beta1",
                            "beta2", "width", "depth", "sample_every", "info_updates_trunk"});
    auto& tr = c.train;
    read_field(t, "train.", "lambda", tr.lambda);
    read_field(t, "train.", "lr_d", tr.lr_d);
    read_field(t, "train.", "lr_gq", tr.lr_gq);
    read_field(t, "train.", "batch", tr.batch);
    read_field(t, "train.", "epochs", tr.epochs);
    read_field(t, "train.", "leak", tr.leak);
    read_field(t, "train.", "seed", tr.seed);
    read_field(t, "train.", "beta1", tr.beta1);
    read_field(t, "train.", "beta2", tr.beta2);
    read_field(t, "train.", "width", tr.width);
    read_field(t, "train.", "depth", tr.depth);
    read_field(t, "train.", "sample_every", tr.sample_every);
    read_field(t, "train.", "info_updates_trunk", tr.info_updates_trunk);
    if (t.contains("image_size")) {
      std::vector<int> size;
      read_field(t, "train.", "image_size", size);
      if (size.size() != 2) throw Error(ErrorCode::ConfigError, "train.image_size: expected [H, W]");
      tr.image_size = {size[0], size[1]};
    }
  }
  if (j.contains("preprocess")) {
    const auto& p = j["preprocess"];
    detail::reject_unknown(p, "preprocess.", {"mode", "size_cap"});
    std::string mode = mode_name(c.mode);
    read_field(p, "preprocess.", "mode", mode);
    c.mode = parse_mode(mode);
    read_field(p, "preprocess.", "size_cap", c.size_cap);
  }
  if (j.contains("kmeans")) {
    const auto& k = j["kmeans"];
    detail::reject_unknown(k, "kmeans.", {"k", "max_iter", "tol", "seed"});
    if (k.contains("k")) {
      int v = 0;
      read_field(k, "kmeans.", "k", v);
      c.kmeans_k = v;
    }
    read_field(k, "kmeans.", "max_iter", c.kmeans_max_iter);
    read_field(k, "kmeans.", "tol", c.kmeans_tol);
    read_field(k, "kmeans.", "seed", c.kmeans_seed);
  }
  if (j.contains("evaluate")) {
    const auto& e = j["evaluate"];
    detail::reject_unknown(e, "evaluate.", {"seed", "split", "truth_factor", "classifier"});
    read_field(e, "evaluate.", "seed", c.eval_seed);
    if (e.contains("split")) {
      std::vector<int> split;
      read_field(e, "evaluate.", "split", split);
      if (split.size() != 2) throw Error(ErrorCode::ConfigError, "evaluate.split: expected [train, val]");
      c.split_train = split[0];
      c.split_val = split[1];
    }
    read_field(e, "evaluate.", "truth_factor", c.truth_factor);
    if (e.contains("classifier")) {
      const auto& cl = e["classifier"];
      detail::reject_unknown(cl, "evaluate.classifier.", {"epochs", "batch", "lr", "width", "leak"});
      read_field(cl, "evaluate.classifier.", "epochs", c.classifier.epochs);
      read_field(cl, "evaluate.classifier.", "batch", c.classifier.batch);
      read_field(cl, "evaluate.classifier.", "lr", c.classifier.lr);
      read_field(cl, "evaluate.classifier.", "width", c.classifier.width);
      read_field(cl, "evaluate.classifier.", "leak", c.classifier.leak);
    }
  }
  if (j.contains("synth")) {
    const auto& s = j["synth"];
    detail::reject_unknown(s, "synth.", {"n_images", "factors", "image_size", "seed"});
    read_field(s, "synth.", "n_images", c.synth.n_images);
    read_field(s, "synth.", "seed", c.synth.seed);
    if (s.contains("image_size")) {
      std::vector<int> size;
      read_field(s, "synth.", "image_size", size);
      if (size.size() != 2) throw Error(ErrorCode::ConfigError, "synth.image_size: expected [H, W]");
      c.synth.image_size = {size[0], size[1]};
    }
    if (s.contains("factors")) {
      std::vector<std::pair<std::string, int>> factors;
      read_field(s, "synth.", "factors", factors);
      c.synth.factors.clear();
      for (const auto& [name, card] : factors) c.synth.factors.push_back({name, card});
    }
  }
  if (j.contains("classify")) {
    const auto& cl = j["classify"];
    detail::reject_unknown(cl, "classify.", {"originals", "montage_per_cluster"});
    read_field(cl, "classify.", "originals", c.classify_originals);
    read_field(cl, "classify.", "montage_per_cluster", c.montage_per_cluster);
  }
  if (j.contains("sample_grid")) {
    const auto& g = j["sample_grid"];
    detail::reject_unknown(g, "sample_grid.", {"rows", "cols", "con_dim", "seed"});
    read_field(g, "sample_grid.", "rows", c.grid_rows);
    read_field(g, "sample_grid.", "cols", c.grid_cols);
    read_field(g, "sample_grid.", "con_dim", c.grid_con_dim);
    read_field(g, "sample_grid.", "seed", c.grid_seed);
  }
}

inline PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "config: cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, "config: " + std::string(e.what()));
  }
  PipelineConfig c;
  apply_json(c, j);
  return c;
}

/// 64-bit FNV-1a, rendered as 16 hex digits.
inline std::string fnv1a_hex(const std::string& text) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string config_hash(const PipelineConfig& c) { return fnv1a_hex(to_json(c).dump()); }

}  // namespace infocluster
