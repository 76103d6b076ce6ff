#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "infocluster/error.hpp"
#include "infocluster/image.hpp"
#include "infocluster/infogan.hpp"
#include "infocluster/nn/optim.hpp"
#include "infocluster/png_io.hpp"

namespace infocluster {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// JSON forms of the configuration types

inline void to_json(nlohmann::json& j, const LatentSpec& s) {
  j = {{"k_dis", s.k_dis}, {"n_con", s.n_con}, {"n_noise", s.n_noise}};
}

inline void from_json(const nlohmann::json& j, LatentSpec& s) {
  s.k_dis = j.value("k_dis", s.k_dis);
  s.n_con = j.value("n_con", s.n_con);
  s.n_noise = j.value("n_noise", s.n_noise);
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"lambda", c.lambda},
       {"lr_d", c.lr_d},
       {"lr_gq", c.lr_gq},
       {"batch", c.batch},
       {"epochs", c.epochs},
       {"leak", c.leak},
       {"seed", c.seed},
       {"image_size", {c.image_size.height, c.image_size.width}},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"width", c.width},
       {"depth", c.depth},
       {"sample_every", c.sample_every},
       {"info_updates_trunk", c.info_updates_trunk}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.lambda = j.value("lambda", c.lambda);
  c.lr_d = j.value("lr_d", c.lr_d);
  c.lr_gq = j.value("lr_gq", c.lr_gq);
  c.batch = j.value("batch", c.batch);
  c.epochs = j.value("epochs", c.epochs);
  c.leak = j.value("leak", c.leak);
  c.seed = j.value("seed", c.seed);
  if (j.contains("image_size")) {
    const auto& s = j.at("image_size");
    c.image_size = {s.at(0).get<int>(), s.at(1).get<int>()};
  }
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.width = j.value("width", c.width);
  c.depth = j.value("depth", c.depth);
  c.sample_every = j.value("sample_every", c.sample_every);
  c.info_updates_trunk = j.value("info_updates_trunk", c.info_updates_trunk);
}

// ---------------------------------------------------------------------------
// Checkpoint

/// Trained (or freshly initialised) networks plus the state that produced
/// them. The model's layers cache activations, so inference is serialised
/// through `inference_mutex`.
struct GanCheckpoint {
  LatentSpec latent;
  TrainConfig config;
  int epoch = 0;
  std::string rng_state;
  std::unique_ptr<InfoGanModel<float>> model;
  std::map<std::string, Matrix<float>> optimizer_state;
  long d_steps = 0;
  long gq_steps = 0;
  std::unique_ptr<std::mutex> inference_mutex = std::make_unique<std::mutex>();
};

inline GanCheckpoint initial_checkpoint(const LatentSpec& latent, const TrainConfig& cfg) {
  GanCheckpoint ckpt;
  ckpt.latent = latent;
  ckpt.config = cfg;
  std::mt19937_64 rng(cfg.seed);
  ckpt.model = std::make_unique<InfoGanModel<float>>(latent, cfg, rng);
  std::ostringstream os;
  os << rng;
  ckpt.rng_state = os.str();
  return ckpt;
}

inline constexpr char kCheckpointMagic[8] = {'I', 'N', 'F', 'O', 'C', 'K', 'P', 'T'};
inline constexpr uint32_t kCheckpointVersion = 1;

/// Layout: 8-byte magic, u32 version, u64 metadata length, JSON metadata,
/// then float32 little-endian tensor payloads at the offsets the metadata lists.
inline void save_checkpoint(const fs::path& path, GanCheckpoint& ckpt) {
  std::vector<std::pair<std::string, const Matrix<float>*>> tensors;
  for (auto* p : ckpt.model->all_parameters()) tensors.emplace_back(p->name, &p->value);
  for (auto& b : ckpt.model->buffers()) tensors.emplace_back(b.name, b.value);
  for (auto& [name, m] : ckpt.optimizer_state) tensors.emplace_back(name, &m);

  nlohmann::json meta;
  meta["format_version"] = kCheckpointVersion;
  meta["config"] = ckpt.config;
  meta["latent"] = ckpt.latent;
  meta["epoch"] = ckpt.epoch;
  meta["rng_state"] = ckpt.rng_state;
  meta["d_steps"] = ckpt.d_steps;
  meta["gq_steps"] = ckpt.gq_steps;
  nlohmann::json list = nlohmann::json::array();
  uint64_t offset = 0;
  for (const auto& [name, m] : tensors) {
    list.push_back({{"name", name}, {"rows", m->rows()}, {"cols", m->cols()}, {"offset", offset}});
    offset += static_cast<uint64_t>(m->size());
  }
  meta["tensors"] = std::move(list);
  const std::string text = meta.dump();

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, path.string() + ": cannot write checkpoint");
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  const uint32_t version = kCheckpointVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  const uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, m] : tensors)
    out.write(reinterpret_cast<const char*>(m->data()),
              static_cast<std::streamsize>(m->size() * sizeof(float)));
  if (!out) throw Error(ErrorCode::IoError, path.string() + ": write failed");
}

inline GanCheckpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, path.string() + ": cannot open checkpoint");
  char magic[8];
  uint32_t version = 0;
  uint64_t len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw Error(ErrorCode::IoError, path.string() + ": not a checkpoint file");
  if (version != kCheckpointVersion)
    throw Error(ErrorCode::IoError, path.string() + ": unsupported checkpoint version " +
                                        std::to_string(version));
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  const auto meta = nlohmann::json::parse(text);
  std::vector<float> payload;
  {
    const auto begin = in.tellg();
    in.seekg(0, std::ios::end);
    const auto bytes = static_cast<size_t>(in.tellg() - begin);
    in.seekg(begin);
    payload.resize(bytes / sizeof(float));
    in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(bytes));
  }

  GanCheckpoint ckpt = initial_checkpoint(meta.at("latent").get<LatentSpec>(),
                                          meta.at("config").get<TrainConfig>());
  ckpt.epoch = meta.at("epoch").get<int>();
  ckpt.rng_state = meta.at("rng_state").get<std::string>();
  ckpt.d_steps = meta.value("d_steps", 0L);
  ckpt.gq_steps = meta.value("gq_steps", 0L);

  std::map<std::string, Matrix<float>*> targets;
  for (auto* p : ckpt.model->all_parameters()) targets[p->name] = &p->value;
  for (auto& b : ckpt.model->buffers()) targets[b.name] = b.value;
  size_t restored = 0;
  for (const auto& t : meta.at("tensors")) {
    const auto name = t.at("name").get<std::string>();
    const auto rows = t.at("rows").get<Eigen::Index>(), cols = t.at("cols").get<Eigen::Index>();
    const auto offset = t.at("offset").get<size_t>();
    if (offset + static_cast<size_t>(rows * cols) > payload.size())
      throw Error(ErrorCode::IoError, path.string() + ": truncated tensor " + name);
    Matrix<float> m = Eigen::Map<const Matrix<float>>(payload.data() + offset, rows, cols);
    if (auto it = targets.find(name); it != targets.end()) {
      if (it->second->rows() != rows || it->second->cols() != cols)
        throw Error(ErrorCode::ShapeMismatch, path.string() + ": tensor " + name + " has wrong shape");
      *it->second = std::move(m);
      ++restored;
    } else {
      ckpt.optimizer_state[name] = std::move(m);
    }
  }
  if (restored != targets.size())
    throw Error(ErrorCode::IoError, path.string() + ": checkpoint is missing model tensors");
  for (const auto& [name, m] : ckpt.optimizer_state)
    if (!m.allFinite()) throw Error(ErrorCode::NonFiniteInput, name + " is not finite");
  return ckpt;
}

// ---------------------------------------------------------------------------
// Sample grids

/// rows = categories 0..rows-1; column j sets c_con[con_dim] to a linear sweep
/// over [-1, 1] (cols = 1 → -1); other continuous dims are 0; z_rnd is drawn
/// once per row from `seed`.
inline Image render_sample_grid(InfoGanModel<float>& model, int rows, int cols, int con_dim,
                                uint64_t seed) {
  const auto& latent = model.latent();
  if (rows < 1 || rows > latent.k_dis || cols < 1)
    throw Error(ErrorCode::InvalidGridShape, "rows must be in [1, k_dis] and cols >= 1");
  if (latent.n_con > 0 ? (con_dim < 0 || con_dim >= latent.n_con) : cols != 1)
    throw Error(ErrorCode::InvalidGridShape, "con_dim must index a continuous code");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  auto z = LatentBatch<float>::zeros(rows * cols, latent);
  for (int r = 0; r < rows; ++r) {
    std::vector<float> row_noise(latent.n_noise);
    for (auto& v : row_noise) v = static_cast<float>(noise(rng));
    for (int c = 0; c < cols; ++c) {
      const int i = r * cols + c;
      z.set_category(i, r);
      if (latent.n_con > 0)
        z.c_con(con_dim, i) = cols == 1 ? -1.0f : static_cast<float>(-1.0 + 2.0 * c / (cols - 1));
      for (int d = 0; d < latent.n_noise; ++d) z.z_rnd(d, i) = row_noise[d];
    }
  }
  model.set_training(false);
  const auto images = model.generate(z);
  model.set_training(true);

  const Size2 tile = model.image_size();
  constexpr int gap = 1;
  Image grid(rows * tile.height + (rows - 1) * gap, cols * tile.width + (cols - 1) * gap, 1.0f);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const Image img = from_network_batch(images, r * cols + c);
      const int oy = r * (tile.height + gap), ox = c * (tile.width + gap);
      for (int y = 0; y < tile.height; ++y)
        for (int x = 0; x < tile.width; ++x)
          for (int ch = 0; ch < 3; ++ch) grid.at(oy + y, ox + x, ch) = img.at(y, x, ch);
    }
  }
  return grid;
}

inline void sample_grid(GanCheckpoint& ckpt, int rows, int cols, int con_dim,
                        const fs::path& out_path, uint64_t seed = 0) {
  std::lock_guard lock(*ckpt.inference_mutex);
  const Image grid = render_sample_grid(*ckpt.model, rows, cols, con_dim, seed);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  png::write_rgb(out_path, grid);
}

// ---------------------------------------------------------------------------
// Training

struct EpochStats {
  int epoch = 0;
  double d_loss = 0;
  double g_adv = 0;
  double q_cat = 0;
  double q_con = 0;
  double seconds = 0;
};

/// Alternating updates per batch: one discriminator step (trunk + D head,
/// lr_d), then one joint step of G and the Q head (lr_gq) on the same fake
/// batch. Writes `losses.csv`, periodic `samples/epoch_NNNN.png` and
/// `checkpoint.bin` under `out_dir` unless it is empty.
inline GanCheckpoint train(const std::vector<ImageRecord>& corpus, const TrainConfig& cfg,
                           const LatentSpec& latent, const fs::path& out_dir = {},
                           const std::function<void(const EpochStats&)>& on_epoch = {}) {
  validate(cfg);
  validate(latent);
  if (static_cast<int>(corpus.size()) < cfg.batch)
    throw Error(ErrorCode::CorpusTooSmall, std::to_string(corpus.size()) +
                                               " images for batch size " + std::to_string(cfg.batch));
  for (const auto& rec : corpus)
    if (rec.pixels.size() != cfg.image_size)
      throw Error(ErrorCode::ShapeMismatch, rec.id + ": image size differs from train.image_size");

  GanCheckpoint ckpt;
  ckpt.latent = latent;
  ckpt.config = cfg;
  std::mt19937_64 rng(cfg.seed);
  ckpt.model = std::make_unique<InfoGanModel<float>>(latent, cfg, rng);
  auto& model = *ckpt.model;
  model.set_training(true);

  // Without info_updates_trunk the trunk and D head follow the discriminator
  // loss and the Q head trains with G. With it, the discriminator step also
  // minimises the information term through the trunk and Q head.
  auto d_params = model.d_parameters();
  auto gq_params = model.g_parameters();
  for (auto* p : model.q_head_parameters()) (cfg.info_updates_trunk ? d_params : gq_params).push_back(p);
  nn::Adam<float> opt_d(d_params, {cfg.lr_d, cfg.beta1, cfg.beta2});
  nn::Adam<float> opt_gq(gq_params, {cfg.lr_gq, cfg.beta1, cfg.beta2});

  std::ofstream loss_log;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    loss_log.open(out_dir / "losses.csv");
    loss_log << "epoch,d_loss,g_adv,q_cat,q_con\n";
  }

  std::vector<size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  const int n = cfg.batch;
  const int batches = static_cast<int>(corpus.size()) / n;
  std::vector<const ImageRecord*> batch_records(n);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    EpochStats stats;
    stats.epoch = epoch;
    for (int b = 0; b < batches; ++b) {
      for (int i = 0; i < n; ++i) batch_records[i] = &corpus[order[static_cast<size_t>(b) * n + i]];
      const auto real = to_network_batch<float>(batch_records, cfg.image_size);
      const auto z = sample_latent<float>(n, latent, rng);
      const auto fake = model.generate(z);

      try {
        // Discriminator step on real ∪ fake.
        Activation<float> both = real;
        both.batch = 2 * n;
        both.data.resize(3, real.data.cols() + fake.data.cols());
        both.data << real.data, fake.data;
        auto out = model.discriminate(both);
        const auto d_loss = loss_discriminator<float>(out.real_logit.leftCols(n),
                                                      out.real_logit.rightCols(n));
        opt_d.zero_grad();
        Matrix<float> d_logits(1, 2 * n);
        d_logits << d_loss.d_real, d_loss.d_fake;
        if (cfg.info_updates_trunk) {
          // Information term on the fake half only.
          const auto info = loss_generator_q<float>(out.real_logit.rightCols(n), out.q_logits.rightCols(n),
                                                    out.q_con_mean.rightCols(n), z, cfg.lambda);
          Matrix<float> d_q = Matrix<float>::Zero(latent.k_dis, 2 * n);
          Matrix<float> d_c = Matrix<float>::Zero(latent.n_con, 2 * n);
          d_q.rightCols(n) = info.d_q_logits;
          d_c.rightCols(n) = info.d_q_con;
          model.discriminate_backward(d_logits, d_q, d_c, {true, true, true, false});
        } else {
          model.discriminate_backward(d_logits, {}, {}, {true, true, false, false});
        }
        opt_d.step();

        // Generator + Q step.
        out = model.discriminate(fake);
        const auto g_loss =
            loss_generator_q<float>(out.real_logit, out.q_logits, out.q_con_mean, z, cfg.lambda);
        opt_gq.zero_grad();
        const auto d_fake_images =
            model.discriminate_backward(g_loss.d_fake_logit, g_loss.d_q_logits, g_loss.d_q_con,
                                        {false, false, !cfg.info_updates_trunk, true});
        model.generator_backward(d_fake_images);
        opt_gq.step();

        stats.d_loss += d_loss.value;
        stats.g_adv += g_loss.adv;
        stats.q_cat += g_loss.cat;
        stats.q_con += g_loss.con;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NonFiniteLoss) throw;
        throw Error(ErrorCode::NonFiniteLoss,
                    "epoch " + std::to_string(epoch) + " batch " + std::to_string(b) + ": " + e.detail());
      }
    }
    stats.d_loss /= batches;
    stats.g_adv /= batches;
    stats.q_cat /= batches;
    stats.q_con /= batches;
    stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    ckpt.epoch = epoch;
    if (loss_log.is_open()) {
      loss_log << epoch << ',' << stats.d_loss << ',' << stats.g_adv << ',' << stats.q_cat << ','
               << stats.q_con << '\n';
      loss_log.flush();
    }
    if (!out_dir.empty() && cfg.sample_every > 0 && epoch % cfg.sample_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%04d.png", epoch);
      fs::create_directories(out_dir / "samples");
      const int rows = std::min(latent.k_dis, 10);
      const int cols = latent.n_con > 0 ? 10 : 1;
      png::write_rgb(out_dir / "samples" / name, render_sample_grid(model, rows, cols, 0, cfg.seed));
    }
    if (on_epoch) on_epoch(stats);
  }

  std::ostringstream os;
  os << rng;
  ckpt.rng_state = os.str();
  ckpt.d_steps = opt_d.steps();
  ckpt.gq_steps = opt_gq.steps();
  for (auto& b : opt_d.state("adam_d")) ckpt.optimizer_state[b.name] = *b.value;
  for (auto& b : opt_gq.state("adam_gq")) ckpt.optimizer_state[b.name] = *b.value;
  if (!out_dir.empty()) save_checkpoint(out_dir / "checkpoint.bin", ckpt);
  return ckpt;
}

// ---------------------------------------------------------------------------
// Classification

struct ClusterAssignment {
  std::string image_id;
  int category = 0;
  std::vector<double> posterior;
  std::vector<double> con_estimate;
};

/// Lowest index wins ties.
inline int argmax(const std::vector<double>& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

/// Softmax in double precision.
inline std::vector<double> posterior_from_logits(const std::vector<double>& logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0;
  for (size_t i = 0; i < logits.size(); ++i) sum += (p[i] = std::exp(logits[i] - mx));
  for (auto& v : p) v /= sum;
  return p;
}

/// Q(c|x) for every record: posterior over categories and the continuous-code mean.
inline std::vector<ClusterAssignment> classify(const std::vector<ImageRecord>& images,
                                               GanCheckpoint& ckpt, int batch = 100) {
  std::lock_guard lock(*ckpt.inference_mutex);
  auto& model = *ckpt.model;
  model.set_training(false);
  std::vector<ClusterAssignment> out;
  out.reserve(images.size());
  std::vector<const ImageRecord*> chunk;
  for (size_t begin = 0; begin < images.size(); begin += batch) {
    const size_t end = std::min(images.size(), begin + batch);
    chunk.clear();
    for (size_t i = begin; i < end; ++i) chunk.push_back(&images[i]);
    const auto x = to_network_batch<float>(chunk, model.image_size());
    const auto result = model.discriminate(x);
    for (size_t i = 0; i < chunk.size(); ++i) {
      ClusterAssignment a;
      a.image_id = chunk[i]->id;
      std::vector<double> logits(result.q_logits.rows());
      for (Eigen::Index k = 0; k < result.q_logits.rows(); ++k)
        logits[k] = result.q_logits(k, static_cast<Eigen::Index>(i));
      a.posterior = posterior_from_logits(logits);
      a.category = argmax(a.posterior);
      for (Eigen::Index d = 0; d < result.q_con_mean.rows(); ++d)
        a.con_estimate.push_back(result.q_con_mean(d, static_cast<Eigen::Index>(i)));
      out.push_back(std::move(a));
    }
  }
  model.set_training(true);
  return out;
}

}  // namespace infocluster
