#include <cmath>
#include <map>
#include <random>

#include <gtest/gtest.h>

#include "infocluster/infogan.hpp"
#include "infocluster/nn/losses.hpp"
#include "oracles.hpp"

using namespace infocluster;
using Md = nn::Matrix<double>;

namespace {

using oracle::kMiniLatent;
using oracle::mini_config;
using oracle::concat;
using oracle::random_images;

}  // namespace

TEST(LatentSpec, Validation) {
  EXPECT_THROW(validate(LatentSpec{1, 2, 70}), Error);
  EXPECT_THROW(validate(LatentSpec{25, -1, 70}), Error);
  EXPECT_THROW(validate(LatentSpec{25, 2, 0}), Error);
  EXPECT_EQ((LatentSpec{25, 2, 70}).total(), 97);
}

TEST(SampleLatent, CategoryFrequenciesAreUniform) {
  std::mt19937_64 rng(1);
  const LatentSpec spec{25, 2, 70};
  const auto z = sample_latent<float>(10000, spec, rng);
  std::vector<int> counts(25, 0);
  for (int c : z.category) counts[c]++;
  for (int k = 0; k < 25; ++k) {
    EXPECT_GE(counts[k] / 10000.0, 0.03) << k;
    EXPECT_LE(counts[k] / 10000.0, 0.05) << k;
  }
}

TEST(SampleLatent, CodesSatisfyInvariants) {
  std::mt19937_64 rng(2);
  const auto z = sample_latent<double>(500, {5, 3, 7}, rng);
  for (int i = 0; i < z.size(); ++i) {
    const auto code = z.code(i);
    double sum = 0;
    int ones = 0;
    for (double v : code.c_dis) {
      sum += v;
      ones += v == 1.0;
    }
    EXPECT_EQ(sum, 1.0);
    EXPECT_EQ(ones, 1);
    EXPECT_EQ(code.c_dis[z.category[i]], 1.0);
    for (double v : code.c_con) {
      EXPECT_GE(v, -1.0);
      EXPECT_LE(v, 1.0);
    }
    for (double v : code.z_rnd) EXPECT_TRUE(std::isfinite(v));
  }
  // z_rnd is roughly standard normal.
  EXPECT_NEAR(z.z_rnd.mean(), 0.0, 0.05);
  EXPECT_NEAR((z.z_rnd.array() - z.z_rnd.mean()).square().mean(), 1.0, 0.05);
}

TEST(SampleLatent, ReplayIsIdentical) {
  std::mt19937_64 a(3), b(3);
  const auto za = sample_latent<float>(64, {25, 2, 70}, a);
  const auto zb = sample_latent<float>(64, {25, 2, 70}, b);
  EXPECT_EQ(za.category, zb.category);
  EXPECT_EQ(za.stacked(), zb.stacked());
}

TEST(SampleLatent, RejectsEmptyBatch) {
  std::mt19937_64 rng(4);
  EXPECT_THROW(sample_latent<float>(0, {25, 2, 70}, rng), Error);
}

TEST(TrainConfig, Validation) {
  auto expect_field = [](TrainConfig cfg, const std::string& field) {
    try {
      validate(cfg);
      ADD_FAILURE() << field;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::ConfigError);
      EXPECT_NE(std::string(e.what()).find(field), std::string::npos) << e.what();
    }
  };
  TrainConfig cfg;
  EXPECT_NO_THROW(validate(cfg));
  cfg.lr_d = 0;
  expect_field(cfg, "train.lr_d");
  cfg = {};
  cfg.batch = 1;
  expect_field(cfg, "train.batch");
  cfg = {};
  cfg.image_size = {30, 64};
  expect_field(cfg, "train.image_size");
}

TEST(InfoGanModel, GeneratorShapeAndRange) {
  std::mt19937_64 rng(5);
  TrainConfig cfg;
  cfg.width = 8;
  InfoGanModel<float> model({25, 2, 70}, cfg, rng);
  const auto z = sample_latent<float>(1, {25, 2, 70}, rng);
  const auto x = model.generate(z);
  EXPECT_EQ(x.batch, 1);
  EXPECT_EQ(x.channels, 3);
  EXPECT_EQ(x.height, 32);
  EXPECT_EQ(x.width, 64);
  EXPECT_GT(x.data.minCoeff(), -1.0f);
  EXPECT_LT(x.data.maxCoeff(), 1.0f);
}

TEST(InfoGanModel, EvalModeIsDeterministic) {
  std::mt19937_64 rng(6);
  InfoGanModel<double> model(kMiniLatent, mini_config(), rng);
  const auto z = sample_latent<double>(3, kMiniLatent, rng);
  model.generate(z);  // populate running statistics
  model.set_training(false);
  EXPECT_EQ(model.generate(z).data, model.generate(z).data);
}

TEST(InfoGanModel, GeneratorRejectsWrongLatent) {
  std::mt19937_64 rng(7);
  InfoGanModel<double> model(kMiniLatent, mini_config(), rng);
  const auto z = sample_latent<double>(2, {4, 1, 4}, rng);
  try {
    model.generate(z);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
  }
}

TEST(InfoGanModel, DiscriminatorRejectsWrongShape) {
  std::mt19937_64 rng(8);
  InfoGanModel<double> model(kMiniLatent, mini_config(), rng);
  try {
    model.discriminate(random_images(rng, 2, {8, 8}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
  }
}

TEST(InfoGanModel, DuplicatedInputGivesDuplicatedOutput) {
  std::mt19937_64 rng(9);
  InfoGanModel<double> model(kMiniLatent, mini_config(), rng);
  const auto one = random_images(rng, 1, {4, 8});
  const auto other = random_images(rng, 1, {4, 8});
  const auto out = model.discriminate(concat(concat(one, other), one));
  // Equal up to summation order inside the blocked matrix products.
  EXPECT_NEAR(out.real_logit(0, 0), out.real_logit(0, 2), 1e-14);
  EXPECT_LE((out.q_logits.col(0) - out.q_logits.col(2)).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LE((out.q_con_mean.col(0) - out.q_con_mean.col(2)).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_NE(out.real_logit(0, 0), out.real_logit(0, 1));
  EXPECT_EQ(out.q_logits.rows(), 3);
  EXPECT_EQ(out.q_con_mean.rows(), 1);
}

TEST(InfoGanModel, TrunkIsSharedBetweenDAndQ) {
  std::mt19937_64 rng(10);
  InfoGanModel<double> model(kMiniLatent, mini_config(), rng);
  const auto d = model.d_parameters();
  const auto q = model.q_parameters();
  const auto trunk = model.trunk_parameters();
  for (size_t i = 0; i < trunk.size(); ++i) {
    EXPECT_EQ(d[i], trunk[i]);
    EXPECT_EQ(q[i], trunk[i]);
  }
  const auto x = random_images(rng, 2, {4, 8});
  const Md before = model.discriminate(x).q_logits;
  d[0]->value(0, 0) += 0.5;  // through the D view
  const Md after = model.discriminate(x).q_logits;
  EXPECT_GT((after - before).cwiseAbs().maxCoeff(), 0.0);
}

TEST(InfoGanModel, AllParametersAreDistinct) {
  std::mt19937_64 rng(11);
  InfoGanModel<double> model(kMiniLatent, mini_config(), rng);
  auto all = model.all_parameters();
  std::set<std::string> names;
  for (auto* p : all) names.insert(p->name);
  EXPECT_EQ(names.size(), all.size());
  EXPECT_EQ(all.size(), model.g_parameters().size() + model.trunk_parameters().size() +
                            model.d_head_parameters().size() + model.q_head_parameters().size());
}

TEST(DiscriminatorLoss, HandValues) {
  Md zero = Md::Zero(1, 5);
  EXPECT_NEAR(loss_discriminator<double>(zero, zero).value, 2 * std::log(2.0), 1e-15);
  Md r(1, 1), f(1, 1);
  r << std::log(3.0);
  f << std::log(3.0);
  EXPECT_NEAR(loss_discriminator<double>(r, f).value, -std::log(0.75) - std::log(0.25), 1e-14);
  r << 60;
  f << -60;
  const auto perfect = loss_discriminator<double>(r, f);
  EXPECT_GE(perfect.value, 0.0);
  EXPECT_LT(perfect.value, 1e-20);
}

TEST(DiscriminatorLoss, NonFiniteRaises) {
  Md r(1, 1), f(1, 1);
  r << std::numeric_limits<double>::quiet_NaN();
  f << 0;
  try {
    loss_discriminator<double>(r, f);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonFiniteLoss);
  }
}

TEST(GeneratorQLoss, LambdaZeroIsPureAdversarial) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0, 3);
  for (int trial = 0; trial < 50; ++trial) {
    const int batch = 2 + trial % 7;
    const auto z = sample_latent<double>(batch, {4, 2, 3}, rng);
    Md fake(1, batch), q(4, batch), c(2, batch);
    for (auto* m : {&fake, &q, &c})
      for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = n(rng);
    const auto loss = loss_generator_q<double>(fake, q, c, z, 0.0);
    EXPECT_NEAR(loss.total, loss.adv, 1e-12);
    EXPECT_EQ(loss.d_q_logits.cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(GeneratorQLoss, PerfectRecognizer) {
  std::mt19937_64 rng(13);
  const auto z = sample_latent<double>(6, {4, 2, 3}, rng);
  Md q = z.c_dis * 80.0;
  const auto loss = loss_generator_q<double>(Md::Zero(1, 6), q, z.c_con, z, 1.0);
  EXPECT_LT(loss.cat, 1e-30);
  EXPECT_EQ(loss.con, 0.0);
}

TEST(GeneratorQLoss, UniformTwoWayIsLn2) {
  auto z = LatentBatch<double>::zeros(3, {2, 0, 1});
  z.set_category(1, 1);
  // adv = 0 needs a very confident fake logit; softplus(-60) ≈ 1e-26.
  const auto loss = loss_generator_q<double>(Md::Constant(1, 3, 60.0), Md::Zero(2, 3), Md(0, 3), z, 1.0);
  EXPECT_NEAR(loss.total, std::log(2.0), 1e-15);
  EXPECT_EQ(loss.con, 0.0);
}

TEST(GeneratorQLoss, ContinuousTermIsHalfMeanSquaredNorm) {
  auto z = LatentBatch<double>::zeros(2, {2, 2, 1});
  z.c_con << 0.5, -0.5, 0.25, 0.0;
  Md q(2, 2);
  q << 1.5, -0.5, 0.25, 2.0;  // diffs: (1, 0) and (0, 2)
  const auto loss = loss_generator_q<double>(Md::Zero(1, 2), Md::Zero(2, 2), q, z, 2.0);
  EXPECT_NEAR(loss.con, 0.5 * (1.0 + 4.0) / 2, 1e-15);
  EXPECT_NEAR(loss.total, loss.adv + 2.0 * (loss.cat + loss.con), 1e-15);
}

TEST(GeneratorQLoss, ShapeMismatchRaises) {
  std::mt19937_64 rng(14);
  const auto z = sample_latent<double>(3, {4, 2, 3}, rng);
  EXPECT_THROW(loss_generator_q<double>(Md::Zero(1, 3), Md::Zero(5, 3), Md::Zero(2, 3), z, 1.0), Error);
  EXPECT_THROW(loss_generator_q<double>(Md::Zero(1, 2), Md::Zero(4, 2), Md::Zero(2, 2), z, 1.0), Error);
}

TEST(GradientCheck, DiscriminatorLoss) {
  const auto r = oracle::check_discriminator_gradient(15);
  EXPECT_TRUE(r.failures.empty()) << r.failures.front();
  EXPECT_LE(r.max_rel_error, 1e-3);
}

TEST(GradientCheck, GeneratorQLoss) {
  const auto r = oracle::check_generator_q_gradient(16);
  EXPECT_TRUE(r.failures.empty()) << r.failures.front();
  EXPECT_LE(r.max_rel_error, 1e-3);
}

TEST(NetworkBatch, RoundTripThroughNetworkRange) {
  ImageRecord rec;
  rec.id = "a";
  rec.pixels = Image(2, 4);
  for (size_t i = 0; i < rec.pixels.data().size(); ++i) rec.pixels.data()[i] = (i % 5) / 4.0f;
  const ImageRecord* ptr = &rec;
  const auto x = to_network_batch<float>(std::span<const ImageRecord* const>(&ptr, 1), {2, 4});
  EXPECT_EQ(x.data.minCoeff(), -1.0f);
  EXPECT_EQ(x.data.maxCoeff(), 1.0f);
  const auto back = from_network_batch(x, 0);
  for (size_t i = 0; i < back.data().size(); ++i) EXPECT_NEAR(back.data()[i], rec.pixels.data()[i], 1e-6);
  EXPECT_THROW(to_network_batch<float>(std::span<const ImageRecord* const>(&ptr, 1), {4, 4}), Error);
}
