#include <gtest/gtest.h>

#include <cmath>

#include "svt/errors.hpp"
#include "svt/gridworld.hpp"
#include "svt/transfer.hpp"

using namespace svt;
using namespace svt::transfer;

namespace {

Mat random_states(int n, int cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Mat x(n, cols);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = uniform(rng, lo, hi);
  return x;
}

Mlp constant_net(int n, std::vector<double> out) {
  Mlp net({n, static_cast<int>(out.size())});
  for (std::size_t i = 0; i < out.size(); ++i) net.bias(0)(i, 0) = out[i];
  return net;
}

Mlp randomized(std::vector<int> sizes, Rng& rng) {
  Mlp net = Mlp::xavier(std::move(sizes), rng);
  for (int l = 0; l < net.num_layers(); ++l) {
    for (Eigen::Index i = 0; i < net.bias(l).size(); ++i) net.bias(l)(i) = uniform(rng, -0.2, 0.2);
  }
  return net;
}

std::vector<SourceNet> random_sources(int k, int n, int m, Rng& rng) {
  std::vector<SourceNet> s;
  for (int i = 0; i < k; ++i) s.push_back(std::make_shared<const Mlp>(randomized({n, 5, m}, rng)));
  return s;
}

A2tQ random_a2t(int n, int m, int k, Rng& rng, bool savt, double noise = 0.3) {
  auto sources = random_sources(k, n, m, rng);
  std::optional<std::vector<SourceTransforms>> tr;
  if (savt) {
    tr.emplace();
    for (int i = 0; i < k; ++i) {
      tr->push_back({nn::LinearTransform::identity_with_noise(n, noise, rng),
                     nn::LinearTransform::identity_with_noise(m, noise, rng)});
    }
  }
  return A2tQ(randomized({n, 6, 4, m}, rng), randomized({n, 5, k + 1}, rng), sources, tr);
}

}  // namespace

TEST(Attention, ZeroNetworkGivesEqualWeights) {
  auto src = std::make_shared<const Mlp>(constant_net(3, {0, 0}));
  A2tQ a(Mlp({3, 4, 2}), Mlp({3, 16, 3}), {src, src});
  Vec w = a.attention_weights(Vec(Vec::Ones(3)));
  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(w(i), 1.0 / 3.0);
}

TEST(Attention, LogitExamples) {
  auto src = std::make_shared<const Mlp>(constant_net(2, {0}));
  Mlp att({2, 2});
  att.bias(0)(0, 0) = std::log(2.0);
  A2tQ a(Mlp({2, 1}), att, {src});
  Vec w = a.attention_weights(Vec(Vec::Zero(2)));
  EXPECT_NEAR(w(0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(w(1), 1.0 / 3.0, 1e-15);
  att.bias(0)(0, 0) = 1000.0;
  A2tQ b(Mlp({2, 1}), att, {src});
  Vec v = b.attention_weights(Vec(Vec::Zero(2)));
  EXPECT_EQ(v(0), 1.0);
  EXPECT_EQ(v(1), 0.0);
}

TEST(A2t, NoSourcesIsBase) {
  Rng rng(1);
  Mlp base = randomized({3, 6, 2}, rng);
  A2tQ a(base, Mlp({3, 4, 1}), {});
  Mat x = random_states(3, 7, rng);
  EXPECT_TRUE(a.q_values(x) == base.forward(x));
}

TEST(A2t, ForcedWeightsMixture) {
  auto src = std::make_shared<const Mlp>(constant_net(2, {3, 0}));
  A2tQ a(constant_net(2, {1, 2}), Mlp({2, 2}), {src});
  Mat w(2, 1);
  w << 0.25, 0.75;
  Mat q = a.mix(Mat::Zero(2, 1), w);
  EXPECT_DOUBLE_EQ(q(0, 0), 2.5);
  EXPECT_DOUBLE_EQ(q(1, 0), 0.5);
  w << 1.0, 0.0;
  q = a.mix(Mat::Zero(2, 1), w);
  EXPECT_EQ(q(0, 0), 1.0);
  EXPECT_EQ(q(1, 0), 2.0);
}

TEST(A2t, OutputIsAttentionMixture) {
  Rng rng(5);
  auto a = random_a2t(4, 3, 2, rng, false);
  Mat x = random_states(4, 10, rng);
  Mat w = a.attention_weights(x);
  Mat want = a.base().forward(x).array().rowwise() * w.row(0).array();
  for (int i = 0; i < 2; ++i) {
    want += (a.sources()[i]->forward(x).array().rowwise() * w.row(i + 1).array()).matrix();
  }
  EXPECT_LT((a.q_values(x) - want).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(A2t, WeightsNormalizedAndMixtureBounded) {
  Rng rng(9);
  for (int draw = 0; draw < 20; ++draw) {
    auto a = random_a2t(4, 5, 3, rng, false);
    Mat x = random_states(4, 100, rng, -3, 3);
    Mat w = a.attention_weights(x);
    Mat q = a.q_values(x);
    std::vector<Mat> parts{a.base().forward(x)};
    for (const auto& s : a.sources()) parts.push_back(s->forward(x));
    for (int c = 0; c < 100; ++c) {
      EXPECT_NEAR(w.col(c).sum(), 1.0, 1e-9);
      EXPECT_GE(w.col(c).minCoeff(), 0.0);
      for (int r = 0; r < 5; ++r) {
        double lo = parts[0](r, c), hi = lo;
        for (const auto& p : parts) {
          lo = std::min(lo, p(r, c));
          hi = std::max(hi, p(r, c));
        }
        EXPECT_GE(q(r, c), lo - 1e-12);
        EXPECT_LE(q(r, c), hi + 1e-12);
      }
    }
  }
}

TEST(A2t, ShapeErrors) {
  auto wrong = std::make_shared<const Mlp>(Mlp({3, 4}));
  EXPECT_THROW(A2tQ(Mlp({3, 2}), Mlp({3, 2}), {wrong}), ShapeError);
  auto ok = std::make_shared<const Mlp>(Mlp({3, 2}));
  EXPECT_THROW(A2tQ(Mlp({3, 2}), Mlp({3, 3}), {ok}), ShapeError);
  std::vector<SourceTransforms> bad{{nn::LinearTransform(2), nn::LinearTransform(2)}};
  EXPECT_THROW(A2tQ(Mlp({3, 2}), Mlp({3, 2}), {ok}, bad), ShapeError);
}

TEST(Savt, IdentityTransformsMatchA2tBitForBit) {
  Rng rng(2);
  auto a = random_a2t(4, 9, 3, rng, false);
  std::vector<SourceTransforms> id(3, {nn::LinearTransform(4), nn::LinearTransform(9)});
  A2tQ s(a.base(), a.attention(), a.sources(), id);
  Mat x = random_states(4, 1000, rng);
  EXPECT_TRUE(s.q_values(x) == a.q_values(x));
}

TEST(Savt, ActionPermutation) {
  Rng rng(3);
  auto src = std::make_shared<const Mlp>(randomized({2, 5, 2}, rng));
  Mat perm(2, 2);
  perm << 0, 1, 1, 0;
  std::vector<SourceTransforms> tr{{nn::LinearTransform(2), nn::LinearTransform(perm)}};
  A2tQ s(randomized({2, 4, 2}, rng), Mlp({2, 2}), {src}, tr);
  Mat x = random_states(2, 5, rng);
  Mat w(2, 5);
  w.row(0).setZero();
  w.row(1).setOnes();
  Mat q = s.mix(x, w);
  Mat raw = src->forward(x);
  for (int c = 0; c < 5; ++c) {
    EXPECT_EQ(q(0, c), raw(1, c));
    EXPECT_EQ(q(1, c), raw(0, c));
  }
}

TEST(Savt, StateReflection) {
  Rng rng(4);
  auto src = std::make_shared<const Mlp>(randomized({4, 8, 9}, rng));
  Mat refl = Mat::Zero(4, 4);
  refl(0, 1) = refl(1, 0) = refl(2, 3) = refl(3, 2) = 1.0;
  std::vector<SourceTransforms> tr{{nn::LinearTransform(refl), nn::LinearTransform(9)}};
  A2tQ s(randomized({4, 4, 9}, rng), Mlp({4, 2}), {src}, tr);
  env::GridworldConfig cfg;
  cfg.width = cfg.height = 5;
  env::GridworldState st{{1, 3}, {4, 0}};
  env::GridworldState mirrored{{3, 1}, {0, 4}};
  Mat w(2, 1);
  w << 0.0, 1.0;
  Mat q = s.mix(Mat(env::gw_encode(st, cfg)), w);
  Vec want = src->forward(env::gw_encode(mirrored, cfg));
  for (int i = 0; i < 9; ++i) EXPECT_EQ(q(i, 0), want(i));
}

TEST(Gradients, CompositesPassOnTenSeeds) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    for (bool savt : {false, true}) {
      auto a = random_a2t(4, 3, 2, rng, savt);
      Mat x = random_states(4, 3, rng);
      Mat w = random_states(3, 3, rng);
      EXPECT_LT(nn::gradient_check(a, x, w), 1e-4) << "seed " << seed << " savt " << savt;
    }
    MlpQ scratch(randomized({4, 6, 3}, rng));
    MlpQ fine(randomized({4, 6, 3}, rng), true);
    Mat x = random_states(4, 3, rng);
    Mat w = random_states(3, 3, rng);
    EXPECT_LT(nn::gradient_check(scratch, x, w), 1e-4);
    EXPECT_LT(nn::gradient_check(fine, x, w), 1e-4);
  }
}

TEST(Build, Kinds) {
  Rng rng(6);
  auto sources = random_sources(2, 4, 9, rng);
  EXPECT_THROW(build_architecture(ArchitectureKind::a2t, {}, 4, 9, rng), MissingSources);
  EXPECT_THROW(build_architecture(ArchitectureKind::fine_tune, {}, 4, 9, rng), MissingSources);
  auto scratch = build_architecture(ArchitectureKind::scratch, {}, 4, 9, rng);
  EXPECT_EQ(dynamic_cast<MlpQ&>(*scratch).network().layer_sizes(), (std::vector<int>{4, 64, 32, 16, 9}));
  auto a2t = build_architecture(ArchitectureKind::a2t, sources, 4, 9, rng);
  auto& a = dynamic_cast<A2tQ&>(*a2t);
  EXPECT_EQ(a.attention().layer_sizes(), (std::vector<int>{4, 16, 3}));
  EXPECT_EQ(a.num_sources(), 2);
  EXPECT_EQ(a2t->kind(), "a2t");
}

TEST(Build, FineTuneCopiesLatestSource) {
  Rng rng(7);
  std::vector<SourceNet> sources{std::make_shared<const Mlp>(Mlp::xavier(base_layer_sizes(4, 9), rng)),
                                 std::make_shared<const Mlp>(Mlp::xavier(base_layer_sizes(4, 9), rng))};
  auto ft = build_architecture(ArchitectureKind::fine_tune, sources, 4, 9, rng);
  Mat x = random_states(4, 50, rng);
  EXPECT_TRUE(ft->q_values(x) == sources[1]->forward(x));
  std::size_t count = 0;
  for (auto* p : ft->trainable_parameters()) count += p->size();
  EXPECT_EQ(count, 9u * 16 + 9);
}

TEST(Build, SavtNoiseBoundAndZeroNoise) {
  Rng rng(8);
  auto sources = random_sources(3, 6, 5, rng);
  Rng r1(1), r2(1);
  auto savt = build_architecture(ArchitectureKind::a2t_savt, sources, 6, 5, r1);
  auto& s = dynamic_cast<A2tQ&>(*savt);
  for (const auto& t : s.transforms()) {
    EXPECT_LE((t.state.matrix() - Mat::Identity(6, 6)).cwiseAbs().maxCoeff(), 1e-3);
    EXPECT_LE((t.action_value.matrix() - Mat::Identity(5, 5)).cwiseAbs().maxCoeff(), 1e-3);
  }
  auto quiet = build_architecture(ArchitectureKind::a2t_savt, sources, 6, 5, r2, {.transform_noise = 0.0});
  auto& q = dynamic_cast<A2tQ&>(*quiet);
  A2tQ plain(q.base(), q.attention(), q.sources());
  Mat x = random_states(6, 200, rng);
  EXPECT_TRUE(quiet->q_values(x) == plain.q_values(x));
}

TEST(Training, SourcesStayFrozen) {
  Rng rng(10);
  auto cfg = env::GridworldConfig::from_ascii("...\n.#.\n..1\n");
  struct Still : env::GridSystemPolicy {
    int act(const env::GridworldState&, const env::GridworldConfig&) const override { return env::kStay; }
  };
  auto still = std::make_shared<Still>();
  env::EnvFactory f = [&] { return std::make_unique<env::GridworldAdversaryEnv>(cfg, still); };
  auto sources = random_sources(2, 4, 9, rng);
  std::vector<Mlp> before;
  for (const auto& s : sources) before.push_back(*s);
  dqn::DqnConfig d;
  d.training_steps = 1000;
  d.eval_every = 1000;
  d.eval_episodes = 5;
  d.batch_size = 16;
  for (auto kind : {ArchitectureKind::fine_tune, ArchitectureKind::a2t, ArchitectureKind::a2t_savt}) {
    auto arch = build_architecture(kind, sources, 4, 9, rng);
    std::vector<Mat> trainable_before;
    for (auto* p : arch->trainable_parameters()) trainable_before.push_back(*p);
    dqn::train(f, *arch, d);
    for (std::size_t i = 0; i < sources.size(); ++i) EXPECT_TRUE(*sources[i] == before[i]);
    bool moved = false;
    auto params = arch->trainable_parameters();
    for (std::size_t i = 0; i < params.size(); ++i) moved |= !(*params[i] == trainable_before[i]);
    EXPECT_TRUE(moved) << to_string(kind);
  }
  // fine-tuning leaves every hidden layer untouched
  auto ft = build_architecture(ArchitectureKind::fine_tune, sources, 4, 9, rng);
  dqn::train(f, *ft, d);
  const auto& net = dynamic_cast<MlpQ&>(*ft).network();
  EXPECT_TRUE(net.weight(0) == sources[1]->weight(0));
  EXPECT_FALSE(net.weight(1) == sources[1]->weight(1));
}

TEST(Checkpoint, RoundTripAllKinds) {
  Rng rng(11);
  auto sources = random_sources(2, 4, 9, rng);
  std::map<std::string, SourceNet> by_hash;
  for (const auto& s : sources) by_hash[io::content_hash(*s)] = s;
  SourceResolver resolve = [&](const std::string& h) -> SourceNet {
    auto it = by_hash.find(h);
    return it == by_hash.end() ? nullptr : it->second;
  };
  Mat x = random_states(4, 20, rng);
  for (auto kind : {ArchitectureKind::scratch, ArchitectureKind::fine_tune, ArchitectureKind::a2t,
                    ArchitectureKind::a2t_savt}) {
    auto arch = build_architecture(kind, sources, 4, 9, rng);
    auto doc = save_architecture(*arch, {1, 2, "h"});
    auto back = load_architecture(nlohmann::json::parse(doc.dump()), resolve);
    EXPECT_EQ(back->kind(), arch->kind());
    EXPECT_TRUE(back->q_values(x) == arch->q_values(x));
  }
  auto a2t = build_architecture(ArchitectureKind::a2t, sources, 4, 9, rng);
  auto doc = save_architecture(*a2t, {});
  SourceResolver none = [](const std::string&) -> SourceNet { return nullptr; };
  EXPECT_THROW(load_architecture(doc, none), IoError);
}

TEST(Names, RoundTrip) {
  for (auto k : {ArchitectureKind::scratch, ArchitectureKind::fine_tune, ArchitectureKind::a2t,
                 ArchitectureKind::a2t_savt}) {
    EXPECT_EQ(architecture_from_string(to_string(k)), k);
  }
  EXPECT_THROW(architecture_from_string("dueling"), InvalidConfig);
}
