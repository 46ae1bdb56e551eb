// Copyright 2026 The xadapt Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "xadapt/metalearn/meta_train.hpp"

namespace xadapt::metalearn {
namespace {

using testing::random_batch;
using testing::tiny_config;

// 0.5 (x - c)^T A (x - c) with A symmetric positive definite.
struct Quadratic {
  std::vector<double> a;  // n x n
  Vec c;

  std::size_t n() const { return c.size(); }
  Vec apply(std::span<const double> v) const {
    Vec o(n(), 0.0);
    for (std::size_t i = 0; i < n(); ++i)
      for (std::size_t j = 0; j < n(); ++j) o[i] += a[i * n() + j] * v[j];
    return o;
  }
  LossGrad fn() const {
    return [q = *this](std::span<const double> x, Vec* g) {
      Vec d(q.n());
      for (std::size_t i = 0; i < q.n(); ++i) d[i] = x[i] - q.c[i];
      const Vec ad = q.apply(d);
      double l = 0.0;
      for (std::size_t i = 0; i < q.n(); ++i) l += 0.5 * d[i] * ad[i];
      if (g) *g = ad;
      return l;
    };
  }
  Hvp hvp() const {
    return [q = *this](std::span<const double>, std::span<const double> v) { return q.apply(v); };
  }

  static Quadratic random(std::size_t n, Rng& rng) {
    std::vector<double> b(n * n);
    for (auto& x : b) x = rng.normal(0.0, 0.5);
    Quadratic q;
    q.a.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      q.a[i * n + i] = 0.5;
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < n; ++k) q.a[i * n + j] += b[i * n + k] * b[j * n + k];
    }
    q.c.resize(n);
    for (auto& x : q.c) x = rng.normal();
    return q;
  }
};

// Closed-form one-step MAML gradient: (I - lr A_tr)^order A_val (theta' - c_val).
Vec maml_oracle(const Vec& theta, const Quadratic& tr, const Quadratic& val, double lr, bool second) {
  const std::size_t n = theta.size();
  Vec d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = theta[i] - tr.c[i];
  const Vec g_tr = tr.apply(d);
  Vec adapted(n);
  for (std::size_t i = 0; i < n; ++i) adapted[i] = theta[i] - lr * g_tr[i] - val.c[i];
  Vec g = val.apply(adapted);
  if (second) {
    const Vec hg = tr.apply(g);
    for (std::size_t i = 0; i < n; ++i) g[i] -= lr * hg[i];
  }
  return g;
}

TEST(Maml, QuadraticMetaGradientMatchesClosedForm) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    const std::size_t n = 2 + rng.below(4);
    std::vector<Quadratic> tr, val;
    std::vector<MetaTask> tasks;
    for (int i = 0; i < 3; ++i) {
      tr.push_back(Quadratic::random(n, rng));
      val.push_back(Quadratic::random(n, rng));
      tasks.push_back({"task" + std::to_string(i), tr.back().fn(), val.back().fn(), tr.back().hvp()});
    }
    Vec theta0(n);
    for (auto& x : theta0) x = rng.normal();
    for (bool second : {false, true}) {
      const double lr = 0.05, mu = 0.3;
      Vec theta = theta0;
      const auto r = meta_step(theta, tasks, mu, second ? Order::kSecond : Order::kFirst, {lr});
      Vec want(n, 0.0);
      for (int i = 0; i < 3; ++i) {
        const Vec g = maml_oracle(theta0, tr[i], val[i], lr, second);
        for (std::size_t k = 0; k < n; ++k) want[k] += g[k];
      }
      for (std::size_t k = 0; k < n; ++k) {
        EXPECT_NEAR(r.meta_gradient[k], want[k], 1e-10 * (1.0 + std::abs(want[k])));
        EXPECT_NEAR(theta[k], theta0[k] - mu * want[k], 1e-10 * (1.0 + std::abs(theta0[k])));
      }
    }
  }
}

TEST(Maml, SecondOrderThroughSeveralInnerSteps) {
  // With k SGD steps the Jacobian is (I - lr A_tr)^k.
  Rng rng(11);
  const auto tr = Quadratic::random(3, rng), val = Quadratic::random(3, rng);
  const std::vector<MetaTask> tasks{{"q", tr.fn(), val.fn(), tr.hvp()}};
  Vec theta0{0.3, -0.2, 1.0};
  InnerOptions inner{0.04, 3};
  Vec theta = theta0;
  const auto r = meta_step(theta, tasks, 0.0, Order::kSecond, inner);
  Vec w = theta0;
  for (int k = 0; k < 3; ++k) {
    Vec d(3);
    for (std::size_t i = 0; i < 3; ++i) d[i] = w[i] - tr.c[i];
    const Vec g = tr.apply(d);
    for (std::size_t i = 0; i < 3; ++i) w[i] -= inner.lr * g[i];
  }
  Vec d(3);
  for (std::size_t i = 0; i < 3; ++i) d[i] = w[i] - val.c[i];
  Vec g = val.apply(d);
  for (int k = 0; k < 3; ++k) {
    const Vec hg = tr.apply(g);
    for (std::size_t i = 0; i < 3; ++i) g[i] -= inner.lr * hg[i];
  }
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(r.meta_gradient[i], g[i], 1e-12);
  EXPECT_EQ(theta, theta0);
}

TEST(Maml, FiniteDifferenceHvpIsExactOnQuadratics) {
  Rng rng(12);
  const auto q = Quadratic::random(4, rng);
  const auto hvp = finite_difference_hvp(q.fn());
  const Vec x{0.1, 0.2, -0.3, 0.4}, v{1.0, -2.0, 0.5, 0.0};
  const Vec got = hvp(x, v), want = q.apply(v);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(got[i], want[i], 1e-7);
  EXPECT_EQ(hvp(x, Vec(4, 0.0)), Vec(4, 0.0));
}

TEST(Maml, AdamInnerFirstStepIsSignLike) {
  const MetaTask task{"lin", [](std::span<const double>, Vec* g) {
                        if (g) *g = {3.0, -0.01};
                        return 0.0;
                      }, nullptr, nullptr};
  InnerOptions opt{0.1, 1, InnerOptimizer::kAdamNoMomentum};
  const Vec w = inner_update(Vec{0.0, 0.0}, task, opt);
  EXPECT_NEAR(w[0], -0.1 * 3.0 / (3.0 + 1e-8), 1e-15);
  EXPECT_NEAR(w[1], 0.1 * 0.01 / (0.01 + 1e-8), 1e-15);
}

TEST(Maml, RejectsBadSettings) {
  Rng rng(13);
  const auto q = Quadratic::random(2, rng);
  Vec theta{0.0, 0.0};
  EXPECT_THROW(meta_step(theta, {}, 0.1, Order::kFirst, {}), MetaError);
  const std::vector<MetaTask> tasks{{"q", q.fn(), q.fn(), nullptr}};
  EXPECT_THROW(meta_step(theta, tasks, -1.0, Order::kFirst, {}), MetaError);
  EXPECT_THROW(meta_step(theta, tasks, 0.1, Order::kSecond, {}), MetaError);
  EXPECT_THROW(meta_step(theta, tasks, 0.1, Order::kSecond, {0.1, 1, InnerOptimizer::kAdamNoMomentum}), MetaError);
  EXPECT_THROW(inner_update(theta, tasks[0], {0.1, 0}), MetaError);
  const MetaTask bad{"nan", [](std::span<const double>, Vec* g) {
                       if (g) *g = {NAN, 0.0};
                       return 0.0;
                     }, q.fn(), nullptr};
  try {
    inner_update(theta, bad, {});
    FAIL();
  } catch (const MetaError& e) {
    EXPECT_NE(std::string(e.what()).find("nan"), std::string::npos);
  }
}

TEST(Maml, AnnealedStepDecreasesLinearly) {
  EXPECT_EQ(annealed_mu(0.5, 0, 10), 0.5);
  EXPECT_DOUBLE_EQ(annealed_mu(0.5, 5, 10), 0.25);
  EXPECT_GT(annealed_mu(0.5, 9, 10), 0.0);
  EXPECT_EQ(annealed_mu(0.5, 3, 0), 0.5);
}

TEST(MetaTrain, EpisodesSplitWithoutReplacement) {
  const auto cfg = tiny_config();
  Rng rng(14);
  const auto data = random_batch(cfg, 30, rng);
  MetaConfig mc;
  mc.episode_size = 10;
  const auto e = sample_episode({"x", &data}, mc, rng);
  EXPECT_EQ(e.train.size(), 8u);
  EXPECT_EQ(e.val.size(), 2u);
  std::set<std::string> ids;
  for (const auto* part : {&e.train, &e.val})
    for (const auto& u : *part) ids.insert(u.utt_id);
  EXPECT_EQ(ids.size(), 10u);
  const TaskBatch one(data.begin(), data.begin() + 1);
  EXPECT_THROW(sample_episode({"x", &one}, mc, rng), MetaError);
}

struct MetaFixture {
  backbone::BackboneConfig cfg = tiny_config();
  ParamSet<double> ps;
  std::vector<TaskBatch> data;
  std::vector<MetaSource> sources;
  MetaFixture() {
    Rng rng(15);
    backbone::Backbone<double>::init(ps, cfg, rng);
    for (const char* l : {"s1", "s2"}) backbone::LanguageHead<double>::init(ps, cfg, l, rng);
    adapters::init_adapters(ps, cfg, "meta", {}, rng);
    data.push_back(random_batch(cfg, 12, rng, "a"));
    data.push_back(random_batch(cfg, 12, rng, "b"));
    sources = {{"s1", &data[0]}, {"s2", &data[1]}};
    ps.freeze_all();
  }
};

TEST(MetaTrain, UpdatesOnlyTheSharedAdapter) {
  MetaFixture f;
  MetaConfig mc;
  mc.epochs = 2;
  mc.steps_per_epoch = 2;
  mc.episode_size = 6;
  mc.meta_step = 0.1;
  const auto before = f.ps.checksums();
  const auto log = meta_train(f.ps, f.cfg, mc, f.sources, 0.3);
  ASSERT_EQ(log.size(), 2u);
  EXPECT_EQ(log[0].mu, 0.1);
  EXPECT_DOUBLE_EQ(log[1].mu, 0.05);
  EXPECT_EQ(log[1].val_loss.size(), 2u);
  for (const auto& [p, h] : before) {
    if (p == partition::adapter("meta"))
      EXPECT_NE(f.ps.checksum(p), h);
    else
      EXPECT_EQ(f.ps.checksum(p), h) << p;
  }
  EXPECT_TRUE(f.ps.trainable_partitions().empty());
  const auto j = to_json(log[0]);
  EXPECT_TRUE(j.contains("per_language_val_loss"));
}

TEST(MetaTrain, IsDeterministic) {
  MetaFixture a, b;
  MetaConfig mc;
  mc.epochs = 1;
  mc.steps_per_epoch = 2;
  mc.episode_size = 6;
  mc.seed = 9;
  meta_train(a.ps, a.cfg, mc, a.sources, 0.3);
  meta_train(b.ps, b.cfg, mc, b.sources, 0.3);
  EXPECT_EQ(a.ps.snapshot(partition::adapter("meta")), b.ps.snapshot(partition::adapter("meta")));
}

TEST(MetaTrain, MissingPiecesAreReported) {
  MetaFixture f;
  MetaConfig mc;
  auto with_missing = f.sources;
  with_missing.push_back({"s9", &f.data[0]});
  EXPECT_THROW(meta_train(f.ps, f.cfg, mc, with_missing, 0.3), MetaError);
  EXPECT_THROW(meta_train(f.ps, f.cfg, mc, f.sources, 0.3, "none"), MetaError);
  EXPECT_THROW(meta_train(f.ps, f.cfg, mc, {}, 0.3), MetaError);
  mc.train_fraction = 1.0;
  EXPECT_THROW(meta_train(f.ps, f.cfg, mc, f.sources, 0.3), MetaError);
}

TEST(MetaTrain, PartitionObjectiveGradientMatchesDifferences) {
  MetaFixture f;
  Rng rng(16);
  testing::randomize(f.ps, partition::adapter("meta"), 0.3, rng);
  const TaskBatch batch(f.data[0].begin(), f.data[0].begin() + 2);
  auto fn = partition_objective(f.ps, f.cfg, "s1", "meta", batch, 0.3);
  Vec theta = f.ps.snapshot(partition::adapter("meta"));
  f.ps.train_only({partition::adapter("meta")});
  Vec g;
  fn(theta, &g);
  for (std::size_t i = 0; i < theta.size(); i += 17) {
    Vec up = theta, down = theta;
    up[i] += 1e-6;
    down[i] -= 1e-6;
    const double num = (fn(up, nullptr) - fn(down, nullptr)) / 2e-6;
    EXPECT_NEAR(g[i], num, 1e-6 * (1.0 + std::abs(num))) << i;
  }
}

TEST(MolTrain, UpdatesOnlyTheSharedAdapter) {
  MetaFixture f;
  Rng rng(17);
  adapters::init_adapters(f.ps, f.cfg, "mol", {}, rng);
  f.ps.freeze_all();
  const auto before = f.ps.checksums();
  mol_train(f.ps, f.cfg, f.sources, 1, 2, 3, 1e-2, 0.3, 5);
  for (const auto& [p, h] : before) {
    if (p == partition::adapter("mol"))
      EXPECT_NE(f.ps.checksum(p), h);
    else
      EXPECT_EQ(f.ps.checksum(p), h) << p;
  }
  EXPECT_THROW(mol_train(f.ps, f.cfg, {}, 1, 1, 1, 1e-2, 0.3, 5), MetaError);
}

}  // namespace
}  // namespace xadapt::metalearn
