#pragma once

// Command-line front end. Lives in a header so tests can drive it in-process.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "infocluster/dataset.hpp"
#include "infocluster/error.hpp"
#include "infocluster/evaluate.hpp"
#include "infocluster/exports.hpp"
#include "infocluster/gan_training.hpp"
#include "infocluster/kmeans.hpp"
#include "infocluster/metrics.hpp"
#include "infocluster/parallel.hpp"
#include "infocluster/pipeline_config.hpp"
#include "infocluster/preprocess.hpp"

namespace infocluster::cli {

namespace fs = std::filesystem;

inline const std::vector<std::string>& commands() {
  static const std::vector<std::string> names{"synth",    "ingest",   "preprocess",  "train", "classify",
                                              "kmeans",   "evaluate", "sample-grid", "report"};
  return names;
}

// Work directory layout.
inline fs::path corpus_dir(const PipelineConfig& c) { return c.work_dir / "corpus"; }
inline fs::path variant_dir(const PipelineConfig& c) { return c.work_dir / mode_name(c.mode); }
inline fs::path train_dir(const PipelineConfig& c) { return c.work_dir / ("train_" + mode_name(c.mode)); }
inline fs::path kmeans_dir(const PipelineConfig& c) { return c.work_dir / ("kmeans_" + mode_name(c.mode)); }
inline fs::path report_dir(const PipelineConfig& c) { return c.work_dir / "report"; }

inline void write_run_manifest(const PipelineConfig& c, const std::string& command,
                               const std::vector<std::string>& args, const std::vector<fs::path>& outputs) {
  nlohmann::json j;
  j["command"] = command;
  j["args"] = args;
  j["config_hash"] = config_hash(c);
  j["seed"] = c.train.seed;
  j["config"] = to_json(c);
  std::vector<std::string> paths;
  for (const auto& p : outputs) paths.push_back(p.string());
  j["outputs"] = paths;
  fs::create_directories(c.work_dir / "runs");
  std::ofstream(c.work_dir / "runs" / (command + ".json")) << j.dump(2) << "\n";
}

inline std::vector<ImageRecord> load_variant(const PipelineConfig& c) {
  return read_corpus(variant_dir(c) / "manifest.json");
}

/// Truth labels aligned with `records`, or nothing when the factor is absent.
inline std::optional<std::vector<int>> truth_labels(const std::vector<ImageRecord>& records,
                                                    const std::string& configured) {
  if (records.empty() || records.front().truth.empty()) return std::nullopt;
  const std::string factor = configured.empty() ? records.front().truth.begin()->first : configured;
  std::vector<int> out;
  for (const auto& r : records) {
    auto it = r.truth.find(factor);
    if (it == r.truth.end()) return std::nullopt;
    out.push_back(it->second);
  }
  return out;
}

/// Labels from `assignments` reordered to follow `records` by id.
inline std::vector<int> labels_for(const std::vector<ImageRecord>& records,
                                   const std::vector<ClusterAssignment>& assignments) {
  std::map<std::string, int> by_id;
  for (const auto& a : assignments) by_id[a.image_id] = a.category;
  std::vector<int> out;
  for (const auto& r : records) {
    auto it = by_id.find(r.id);
    if (it == by_id.end()) throw Error(ErrorCode::LengthMismatch, r.id + ": no cluster assignment");
    out.push_back(it->second);
  }
  return out;
}

inline EvaluationReport evaluate_labels(const PipelineConfig& c, const std::string& method,
                                        const std::vector<ImageRecord>& records,
                                        const std::vector<int>& labels) {
  EvaluationReport report;
  report.method = method;
  report.n_samples = static_cast<int>(records.size());
  report.seed = c.eval_seed;
  try {
    report.silhouette = silhouette(flatten_images(records), labels);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::SingleCluster) throw;
  }
  if (auto truth = truth_labels(records, c.truth_factor)) {
    report.purity = purity(labels, *truth);
    report.nmi = nmi(labels, *truth);
  }
  try {
    report.val_acc = effect_validation(records, labels, c.split_train, c.split_val, c.classifier, c.eval_seed);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::DegenerateSplit) throw;
  }
  return report;
}

struct Context {
  PipelineConfig config;
  std::vector<std::string> args;
  std::ostream& out;
};

inline std::vector<fs::path> cmd_synth(Context& ctx) {
  const auto& c = ctx.config;
  const auto records = generate_synthetic(c.synth);
  const auto manifest = write_corpus(corpus_dir(c), records);
  ctx.out << "wrote " << records.size() << " synthetic records to " << manifest.string() << "\n";
  return {manifest};
}

inline std::vector<fs::path> cmd_ingest(Context& ctx) {
  const auto& c = ctx.config;
  if (c.corpus.empty() || c.seg_dir.empty())
    throw Error(ErrorCode::ConfigError, "paths.corpus and paths.seg_dir are required for ingest");
  auto result = ingest(c.corpus, c.seg_dir, c.building_classes, c.train.image_size);
  const auto manifest = write_corpus(corpus_dir(c), result.records);
  ctx.out << "ingested " << result.records.size() << " records, dropped " << result.dropped.size()
          << " without building pixels\n";
  for (const auto& id : result.dropped) ctx.out << "  dropped " << id << "\n";
  return {manifest};
}

inline std::vector<fs::path> cmd_preprocess(Context& ctx) {
  const auto& c = ctx.config;
  const auto records = read_corpus(corpus_dir(c) / "manifest.json");
  std::vector<ImageRecord> out(records.size());
  parallel_for(records.size(), [&](size_t i) {
    out[i] = apply_mode(records[i], c.mode, c.train.image_size, c.size_cap);
  });
  const auto manifest = write_corpus(variant_dir(c), out);
  ctx.out << "preprocessed " << out.size() << " records (" << mode_name(c.mode) << ")\n";
  return {manifest};
}

inline std::vector<fs::path> cmd_train(Context& ctx) {
  const auto& c = ctx.config;
  const auto records = load_variant(c);
  const auto dir = train_dir(c);
  auto ckpt = train(records, c.train, c.latent, dir, [&](const EpochStats& s) {
    char line[160];
    std::snprintf(line, sizeof line, "epoch %d d %.4f adv %.4f cat %.4f con %.4f (%.1fs)\n", s.epoch,
                  s.d_loss, s.g_adv, s.q_cat, s.q_con, s.seconds);
    ctx.out << line << std::flush;
  });
  return {dir / "checkpoint.bin", dir / "losses.csv", dir / "samples"};
}

inline std::vector<fs::path> cmd_classify(Context& ctx) {
  const auto& c = ctx.config;
  const auto dir = train_dir(c);
  auto ckpt = load_checkpoint(dir / "checkpoint.bin");
  std::vector<ImageRecord> records;
  std::string suffix;
  if (c.classify_originals) {
    for (const auto& r : read_corpus(corpus_dir(c) / "manifest.json"))
      records.push_back(resize_uniform(r, ckpt.config.image_size));
    suffix = "_originals";
  } else {
    records = load_variant(c);
  }
  const auto assignments = classify(records, ckpt);
  const auto csv = dir / ("assignments" + suffix + ".csv");
  const auto montage = dir / ("montage" + suffix + ".png");
  export_assignments(assignments, csv);
  export_cluster_montage(records, assignments, c.montage_per_cluster, montage);
  ctx.out << "classified " << assignments.size() << " images into " << csv.string() << "\n";
  return {csv, montage};
}

inline std::vector<fs::path> cmd_kmeans(Context& ctx) {
  const auto& c = ctx.config;
  const auto records = load_variant(c);
  const int k = c.effective_kmeans_k();
  const auto result = kmeans(flatten_images(records), k, c.kmeans_seed, c.kmeans_max_iter, c.kmeans_tol);
  const auto dir = kmeans_dir(c);
  const auto assignments = one_hot_assignments(records, result.labels, k);
  export_assignments(assignments, dir / "assignments.csv");
  export_cluster_montage(records, assignments, c.montage_per_cluster, dir / "montage.png");
  ctx.out << "k-means k=" << k << " inertia " << result.inertia << " after " << result.iterations
          << " iterations\n";
  return {dir / "assignments.csv", dir / "montage.png"};
}

inline std::vector<fs::path> cmd_evaluate(Context& ctx, const std::string& method) {
  const auto& c = ctx.config;
  fs::path dir;
  if (method == "infogan") dir = train_dir(c);
  else if (method == "kmeans") dir = kmeans_dir(c);
  else throw Error(ErrorCode::ConfigError, "--method: expected infogan or kmeans, got '" + method + "'");
  const auto records = load_variant(c);
  const auto labels = labels_for(records, read_assignments(dir / "assignments.csv"));
  const auto report = evaluate_labels(c, method + "-" + mode_name(c.mode), records, labels);
  write_report(dir / "report.json", report);
  ctx.out << report.method << ": val_acc " << format_metric(report.val_acc) << " silhouette "
          << format_metric(report.silhouette) << " purity " << format_metric(report.purity) << " nmi "
          << format_metric(report.nmi) << "\n";
  return {dir / "report.json", dir / "report.csv"};
}

inline std::vector<fs::path> cmd_sample_grid(Context& ctx) {
  const auto& c = ctx.config;
  const auto dir = train_dir(c);
  auto ckpt = load_checkpoint(dir / "checkpoint.bin");
  const auto path = dir / "sample_grid.png";
  sample_grid(ckpt, c.grid_rows, c.grid_cols, c.grid_con_dim, path, c.grid_seed);
  ctx.out << "wrote " << path.string() << "\n";
  return {path};
}

inline std::vector<fs::path> cmd_report(Context& ctx) {
  const auto& c = ctx.config;
  std::vector<EvaluationReport> reports;
  if (fs::is_directory(c.work_dir)) {
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(c.work_dir))
      if (entry.is_directory() && fs::exists(entry.path() / "report.json")) dirs.push_back(entry.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs) reports.push_back(read_report(d / "report.json"));
  }
  if (reports.empty()) throw Error(ErrorCode::EmptyInput, c.work_dir.string() + ": no evaluation reports");
  const auto csv = report_dir(c) / "comparison.csv";
  compare_methods(reports, csv);
  auto txt = csv;
  txt.replace_extension(".txt");
  std::ifstream in(txt);
  ctx.out << in.rdbuf();
  return {csv, txt};
}

/// Runs one invocation. `args` excludes the program name. Returns the exit code.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Unsupervised facade clustering pipeline", "infocluster"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::string config_path, work_dir, mode, method = "infogan";
  std::optional<uint64_t> seed;
  std::optional<int> epochs, k_dis, rows, cols, con_dim;
  std::optional<double> lambda;
  std::optional<std::string> images, segs;
  bool originals = false;
  app.add_option("--config", config_path, "JSON pipeline config");
  app.add_option("--work-dir", work_dir, "Output root (default: work)");
  app.add_option("--mode", mode, "Preprocessing variant: mask, interp or rf");
  app.add_option("--seed", seed, "Seed for every stochastic stage");
  app.add_option("--epochs", epochs, "Training epochs");
  app.add_option("--k-dis", k_dis, "Number of categories");
  app.add_option("--lambda", lambda, "Weight of the information term");
  app.add_flag("--classify-originals", originals, "Classify unpreprocessed images");

  std::map<std::string, CLI::App*> subs;
  for (const auto& name : commands()) subs[name] = app.add_subcommand(name);
  subs["ingest"]->add_option("--images", images, "Directory of RGB images");
  subs["ingest"]->add_option("--segs", segs, "Directory of label images");
  subs["evaluate"]->add_option("--method", method, "infogan or kmeans");
  subs["sample-grid"]->add_option("--rows", rows);
  subs["sample-grid"]->add_option("--cols", cols);
  subs["sample-grid"]->add_option("--con-dim", con_dim);

  // Pick the command ourselves so an unknown name gets its own error code.
  const auto first = std::find_if(args.begin(), args.end(), [](const std::string& a) {
    return !a.empty() && a[0] != '-';
  });
  if (first != args.end() && std::find(commands().begin(), commands().end(), *first) == commands().end()) {
    bool is_value = first != args.begin() && (first - 1)->rfind("--", 0) == 0 &&
                    (first - 1)->find('=') == std::string::npos && *(first - 1) != "--classify-originals";
    if (!is_value) {
      err << "ERROR UnknownCommand: '" << *first << "'\n" << app.help();
      return 2;
    }
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "ERROR ConfigError: " << e.what() << "\n" << app.help();
    return 2;
  }

  std::string command;
  for (const auto& [name, sub] : subs)
    if (sub->parsed()) command = name;

  try {
    PipelineConfig c = config_path.empty() ? PipelineConfig{} : load_config(config_path);
    if (!work_dir.empty()) c.work_dir = work_dir;
    if (!mode.empty()) c.mode = parse_mode(mode);
    if (seed) {
      c.train.seed = c.kmeans_seed = c.eval_seed = c.synth.seed = c.grid_seed = *seed;
    }
    if (epochs) c.train.epochs = *epochs;
    if (k_dis) c.latent.k_dis = *k_dis;
    if (lambda) c.train.lambda = *lambda;
    if (originals) c.classify_originals = true;
    if (images) c.corpus = *images;
    if (segs) c.seg_dir = *segs;
    if (rows) c.grid_rows = *rows;
    if (cols) c.grid_cols = *cols;
    if (con_dim) c.grid_con_dim = *con_dim;
    validate(c);

    Context ctx{c, args, out};
    std::vector<fs::path> outputs;
    if (command == "synth") outputs = cmd_synth(ctx);
    else if (command == "ingest") outputs = cmd_ingest(ctx);
    else if (command == "preprocess") outputs = cmd_preprocess(ctx);
    else if (command == "train") outputs = cmd_train(ctx);
    else if (command == "classify") outputs = cmd_classify(ctx);
    else if (command == "kmeans") outputs = cmd_kmeans(ctx);
    else if (command == "evaluate") outputs = cmd_evaluate(ctx, method);
    else if (command == "sample-grid") outputs = cmd_sample_grid(ctx);
    else if (command == "report") outputs = cmd_report(ctx);
    write_run_manifest(c, command, args, outputs);
    return 0;
  } catch (const Error& e) {
    err << "ERROR " << e.what() << "\n";
  } catch (const std::exception& e) {
    err << "ERROR IoError: " << e.what() << "\n";
  }
  return 1;
}

}  // namespace infocluster::cli
