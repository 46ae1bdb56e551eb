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
#include "xadapt/adapters/accounting.hpp"
#include "xadapt/adapters/adapter.hpp"
#include "xadapt/backbone/loss.hpp"
#include "xadapt/diffcalc/grad_check.hpp"
#include "xadapt/diffcalc/optim.hpp"

namespace xadapt::adapters {
namespace {

using testing::random_batch;
using testing::tiny_config;

Tensor<double> random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  std::vector<double> v(r * c);
  for (auto& x : v) x = rng.normal();
  return Tensor<double>({r, c}, std::move(v));
}

TEST(Adapter, HookPointsListEncoderThenDecoder) {
  const auto cfg = tiny_config();
  const auto pts = hook_points(cfg);
  ASSERT_EQ(pts.size(), 3u);
  EXPECT_FALSE(pts[0].decoder);
  EXPECT_EQ(pts[1].layer, 1u);
  EXPECT_TRUE(pts[2].decoder);
  EXPECT_EQ(pts[2].layer, 0u);
  EXPECT_EQ(pts[2].global, 2u);
  EXPECT_EQ(adapter_prefix("s1", pts[2]), "adapter.s1.dec.0");
}

TEST(Adapter, IdentityAtInitialization) {
  const auto cfg = tiny_config();
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    ParamSet<double> ps;
    init_adapters(ps, cfg, "x", {}, rng);
    AdapterStack<double> stack(ps, cfg, "x");
    Tape<double> tp(false);
    const auto z = random_matrix(5, cfg.model_dim, rng);
    for (const auto& at : hook_points(cfg)) {
      const auto y = stack.apply(tp, z, at);
      for (std::size_t i = 0; i < z.size(); ++i) EXPECT_LE(std::abs(y.values()[i] - z.values()[i]), 1e-12);
    }
  }
}

TEST(Adapter, ForwardMatchesHandComputation) {
  Rng rng(3);
  const std::size_t d = 4, b = 2;
  AdapterLayer<double> l{Tensor<double>({d}, {1.0, 2.0, 0.5, 1.0}), Tensor<double>({d}, {0.1, 0.0, -0.2, 0.3}),
                         random_matrix(d, b, rng), random_matrix(b, d, rng)};
  const auto z = random_matrix(3, d, rng);
  Tape<double> tp(false);
  const auto y = l.forward(tp, z);
  for (std::size_t t = 0; t < 3; ++t) {
    double mean = 0.0, var = 0.0;
    for (std::size_t k = 0; k < d; ++k) mean += z.at(t, k) / double(d);
    for (std::size_t k = 0; k < d; ++k) var += (z.at(t, k) - mean) * (z.at(t, k) - mean) / double(d);
    std::vector<double> n(d), h(b, 0.0);
    for (std::size_t k = 0; k < d; ++k)
      n[k] = (z.at(t, k) - mean) / std::sqrt(var + 1e-5) * l.ln_g.values()[k] + l.ln_b.values()[k];
    for (std::size_t j = 0; j < b; ++j) {
      for (std::size_t k = 0; k < d; ++k) h[j] += n[k] * l.w_down.at(k, j);
      h[j] = std::max(0.0, h[j]);
    }
    for (std::size_t k = 0; k < d; ++k) {
      double up = 0.0;
      for (std::size_t j = 0; j < b; ++j) up += h[j] * l.w_up.at(j, k);
      EXPECT_NEAR(y.at(t, k), z.at(t, k) + up, 1e-12);
    }
  }
}

TEST(Adapter, RejectsWidthMismatch) {
  Rng rng(4);
  ParamSet<double> ps;
  init_adapters(ps, tiny_config(), "x", {}, rng);
  const auto l = AdapterLayer<double>::bind(ps, "adapter.x.enc.0");
  Tape<double> tp(false);
  EXPECT_THROW(l.forward(tp, random_matrix(2, 5, rng)), dc::ShapeError);
}

TEST(Adapter, LossGradientThroughAdapters) {
  const auto cfg = tiny_config();
  Rng rng(5);
  ParamSet<double> ps;
  backbone::Backbone<double>::init(ps, cfg, rng);
  backbone::LanguageHead<double>::init(ps, cfg, "x", rng);
  init_adapters(ps, cfg, "x", {}, rng);
  testing::randomize(ps, partition::adapter("x"), 0.3, rng);
  ps.train_only({partition::adapter("x")});
  const auto batch = random_batch(cfg, 2, rng);
  const auto r = dc::grad_check(
      [&](auto& tp, auto& p) {
        using T = typename std::remove_reference_t<decltype(p)>::value_type;
        backbone::Backbone<T> model(cfg, p);
        backbone::LanguageHead<T> head(p, "x");
        AdapterStack<T> hook(p, cfg, "x");
        return backbone::asr_loss(tp, model, head, batch, T(0.3), &hook).total;
      },
      ps, 1e-5);
  EXPECT_EQ(r.checked, ps.count(partition::adapter("x")));
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_param;
}

TEST(Adapter, TrainingTouchesOnlyAdapterPartition) {
  const auto cfg = tiny_config();
  Rng rng(6);
  ParamSet<double> ps;
  backbone::Backbone<double>::init(ps, cfg, rng);
  backbone::LanguageHead<double>::init(ps, cfg, "x", rng);
  init_adapters(ps, cfg, "x", {}, rng);
  ps.train_only({partition::adapter("x")});
  const auto before = ps.checksums();
  dc::Adam adam({1e-2});
  const auto batch = random_batch(cfg, 3, rng);
  for (int step = 0; step < 3; ++step) {
    Tape<double> tp;
    backbone::Backbone<double> model(cfg, ps);
    backbone::LanguageHead<double> head(ps, "x");
    AdapterStack<double> hook(ps, cfg, "x");
    tp.backward(backbone::asr_loss(tp, model, head, batch, 0.3, &hook).total);
    adam.step(ps);
    ps.zero_grad();
  }
  const auto after = ps.checksums();
  for (const auto& [p, h] : before) {
    if (p == partition::adapter("x"))
      EXPECT_NE(after.at(p), h);
    else
      EXPECT_EQ(after.at(p), h) << p;
  }
}

TEST(Accounting, ReferenceSizes) {
  const auto inv = reference_inventory({}, "x");
  const std::size_t head = count(inv, partition::head("x"));
  const std::size_t adapter = count(inv, partition::adapter("x"));
  const std::size_t fus = count(inv, partition::kFusion);
  EXPECT_EQ(full_model_count(inv, "x"), 27235016u);
  EXPECT_EQ(head, 77000u);
  EXPECT_EQ(head + adapter, 676040u);
  EXPECT_EQ(head + adapter + fus, 4224200u);
}

TEST(Accounting, HeadMatchesClosedForm) {
  // Embedding V x d, output and CTC projections d x V with biases.
  const ReferenceArch a;
  const auto inv = reference_inventory(a, "x");
  EXPECT_EQ(count(inv, partition::head("x")), a.vocab * a.model_dim + 2 * (a.model_dim * a.vocab + a.vocab));
  const std::size_t per_adapter = 2 * a.model_dim + 2 * a.model_dim * a.adapter_bottleneck;
  EXPECT_EQ(count(inv, partition::adapter("x")), (a.encoder_layers + a.decoder_layers) * per_adapter);
}

TEST(Accounting, DeskInventoryMatchesAllocatedModel) {
  const auto cfg = tiny_config();
  Rng rng(7);
  ParamSet<double> ps;
  backbone::Backbone<double>::init(ps, cfg, rng);
  backbone::LanguageHead<double>::init(ps, cfg, "x", rng);
  init_adapters(ps, cfg, "x", {3}, rng);
  const auto inv = inventory_of(ps);
  EXPECT_EQ(count_all(inv), ps.count_all());
  EXPECT_EQ(count(inv, partition::adapter("x")), cfg.num_hook_points() * (2 * 6 + 2 * 6 * 3));
  const auto t = count_trainable(inv, {partition::head("x"), partition::adapter("x")}, full_model_count(inv, "x"));
  EXPECT_EQ(t.trainable, ps.count(partition::head("x")) + ps.count(partition::adapter("x")));
  EXPECT_EQ(t.full, ps.count(partition::kBackbone) + ps.count(partition::head("x")));
  EXPECT_GT(t.ratio(), 0.0);
  EXPECT_LT(t.ratio(), 1.0);
  std::size_t rows = 0;
  for (const auto& r : t.rows) rows += r.count;
  EXPECT_EQ(rows, ps.count_all());
}

}  // namespace
}  // namespace xadapt::adapters
