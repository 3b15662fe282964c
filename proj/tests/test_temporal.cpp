#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hgcn/temporal.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

using namespace hgcn;

namespace {

Act random_act(Rng& rng, int b, int c, int t, int v) {
  Act a(b, c, t, v);
  for (auto& x : a.v) x = rng.normal(0, 1);
  return a;
}

Mat delta_kernel(int c, int ksize, int center) {
  Mat k = Mat::Zero(c, ksize * c);
  for (int i = 0; i < c; ++i) k(i, center * c + i) = 1;
  return k;
}

}  // namespace

TEST_CASE("delta kernel at the center tap is the identity") {
  Rng rng(3);
  Act u = random_act(rng, 1, 3, 7, 4);
  for (int dil : {1, 2}) {
    Act y = temporal_conv(u, delta_kernel(3, 5, 2), 5, dil, 1);
    REQUIRE(y.T == u.T);
    for (size_t i = 0; i < u.v.size(); ++i) CHECK(y.v[i] == doctest::Approx(u.v[i]));
  }
}

TEST_CASE("stride halves the frame count") {
  Rng rng(5);
  Act u = random_act(rng, 2, 4, 8, 3);
  Act y = temporal_conv(u, delta_kernel(4, 5, 2), 5, 1, 2);
  CHECK(y.T == 4);
  Act p = temporal_subsample(u, 2);
  CHECK(p.T == 4);
  std::vector<int> arg;
  Act m = temporal_maxpool(u, 3, 2, arg, nullptr);
  CHECK(m.T == 4);
  CHECK(strided_len(7, 2) == 4);
}

TEST_CASE("temporal conv matches the scalar oracle") {
  Rng rng(7);
  const int c_in = 3, c_out = 2, t = 6, n = 4;
  Act u = random_act(rng, 1, c_in, t, n);
  Mat kern(c_out, 5 * c_in);
  for (int i = 0; i < c_out; ++i)
    for (int j = 0; j < 5 * c_in; ++j) kern(i, j) = rng.uniform(-1, 1);

  for (int dil : {1, 2})
    for (int stride : {1, 2}) {
      Act y = temporal_conv(u, kern, 5, dil, stride);
      std::vector<real> want =
          oracle::temporal_conv(u.v, c_in, t, n, kern, 5, dil, stride);
      REQUIRE(y.v.size() == want.size());
      for (size_t i = 0; i < want.size(); ++i)
        CHECK(y.v[i] == doctest::Approx(want[i]).epsilon(1e-6));
    }
}

TEST_CASE("maxpool values and argmax routing") {
  Act u(1, 1, 4, 1);
  u.at(0, 0, 0, 0) = -1;
  u.at(0, 0, 1, 0) = 3;
  u.at(0, 0, 2, 0) = 2;
  u.at(0, 0, 3, 0) = -5;
  std::vector<int> arg;
  Act y = temporal_maxpool(u, 3, 1, arg, nullptr);
  CHECK(y.at(0, 0, 0, 0) == 3);   // window {pad, -1, 3}
  CHECK(y.at(0, 0, 1, 0) == 3);
  CHECK(y.at(0, 0, 2, 0) == 3);
  CHECK(y.at(0, 0, 3, 0) == 2);   // window {2, -5, pad}
  // padded zero wins against all-negative windows
  Act neg(1, 1, 2, 1);
  neg.at(0, 0, 0, 0) = -1;
  neg.at(0, 0, 1, 0) = -2;
  Act z = temporal_maxpool(neg, 3, 1, arg, nullptr);
  CHECK(z.at(0, 0, 0, 0) == 0);
  CHECK(arg[0] == -1);

  Act dy(1, 1, 2, 1);
  dy.at(0, 0, 0, 0) = 1;
  dy.at(0, 0, 1, 0) = 1;
  Act du = temporal_maxpool_backward(dy, neg, 3, 1, arg);
  CHECK(du.at(0, 0, 0, 0) == 0);  // gradient vanishes into the pad
}

TEST_CASE("mstc output shape and spatial locality") {
  Rng rng(11);
  MsTcLayer tc;
  tc.init(8, 8, 1, false, rng);
  Act x = random_act(rng, 1, 8, 6, 5);
  FwdCtx ctx = train_ctx();
  Act y = tc.forward(x, ctx);
  CHECK(y.C == 8);
  CHECK(y.T == 6);
  CHECK(y.V == 5);

  // perturb one joint; all other joints must be unchanged (train-mode batch
  // statistics couple joints, so compare in eval mode with frozen stats)
  FwdCtx eval = eval_ctx();
  Act y0 = tc.forward(x, eval);
  Act x2 = x;
  for (int c = 0; c < 8; ++c)
    for (int t = 0; t < 6; ++t) x2.at(0, c, t, 2) += rng.normal(0, 1);
  Act y2 = tc.forward(x2, eval);
  for (int c = 0; c < 8; ++c)
    for (int t = 0; t < 6; ++t)
      for (int v = 0; v < 5; ++v)
        if (v != 2) CHECK(y2.at(0, c, t, v) == doctest::Approx(y0.at(0, c, t, v)));
}

TEST_CASE("dilated branch has a nine-frame receptive field") {
  Rng rng(13);
  const int t = 24;
  Act u = random_act(rng, 1, 2, t, 1);
  Mat kern(2, 5 * 2);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 10; ++j) kern(i, j) = rng.uniform(-1, 1);

  Act base = temporal_conv(u, kern, 5, 2, 1);
  const int center = 12;
  for (int shift = -8; shift <= 8; ++shift) {
    Act pert = u;
    pert.at(0, 0, center + shift, 0) += 1.0;
    Act out = temporal_conv(pert, kern, 5, 2, 1);
    bool inside = std::abs(shift) <= 4 && shift % 2 == 0;
    bool changed =
        std::abs(out.at(0, 0, center, 0) - base.at(0, 0, center, 0)) > 1e-12;
    CHECK(changed == inside);
  }
}

TEST_CASE("mstc backward matches finite differences") {
  Rng rng(17);
  MsTcLayer tc;
  tc.init(8, 8, 2, false, rng);
  Act x = random_act(rng, 2, 8, 6, 3);

  // random contraction as the scalar objective
  Act w = random_act(rng, 2, 8, 3, 3);

  auto value = [&](MsTcLayer& layer) {
    FwdCtx ctx = train_ctx();
    ctx.update_running = false;
    Act y = layer.forward(x, ctx);
    real acc = 0;
    for (size_t i = 0; i < y.v.size(); ++i) acc += y.v[i] * w.v[i];
    return acc;
  };

  {
    FwdCtx ctx = train_ctx();
    ctx.update_running = false;
    Act y = tc.forward(x, ctx);
    tc.zero_grad();
    tc.backward(w);
  }

  const real step = 1e-6;
  auto check_mat = [&](Learnable<Mat>& p) {
    for (int reps = 0; reps < 8; ++reps) {
      int i = rng.uniform_int(0, static_cast<int>(p.v.rows()) - 1);
      int j = rng.uniform_int(0, static_cast<int>(p.v.cols()) - 1);
      real saved = p.v(i, j);
      p.v(i, j) = saved + step;
      real up = value(tc);
      p.v(i, j) = saved - step;
      real down = value(tc);
      p.v(i, j) = saved;
      real fd = (up - down) / (2 * step);
      real got = p.g(i, j);
      CHECK(std::abs(fd - got) / std::max({std::abs(fd), std::abs(got), real(1e-3)}) < 1e-4);
    }
  };
  for (auto& r : tc.reduce) check_mat(r);
  check_mat(tc.kern_d1);
  check_mat(tc.kern_d2);
  for (auto& bn : tc.bn) {
    for (int reps = 0; reps < 4; ++reps) {
      int i = rng.uniform_int(0, static_cast<int>(bn.gamma.v.size()) - 1);
      real saved = bn.gamma.v[i];
      bn.gamma.v[i] = saved + step;
      real up = value(tc);
      bn.gamma.v[i] = saved - step;
      real down = value(tc);
      bn.gamma.v[i] = saved;
      real fd = (up - down) / (2 * step);
      CHECK(std::abs(fd - bn.gamma.g[i]) /
                std::max({std::abs(fd), std::abs(bn.gamma.g[i]), real(1e-3)}) <
            1e-4);
    }
  }
}

TEST_CASE("batch norm inference uses running statistics") {
  Rng rng(19);
  BatchNorm bn;
  bn.init(3);
  Act x = random_act(rng, 2, 3, 4, 2);

  FwdCtx train = train_ctx();
  bn.forward(x, train);  // updates running stats
  Vec rm = bn.run_mean, rv = bn.run_var;

  FwdCtx eval = eval_ctx();
  Act y = bn.forward(x, eval);
  for (int c = 0; c < 3; ++c) {
    real scale = bn.gamma.v[c] / std::sqrt(rv[c] + kBatchNormEps);
    CHECK(y.at(0, c, 0, 0) ==
          doctest::Approx(scale * (x.at(0, c, 0, 0) - rm[c]) + bn.beta.v[c]));
  }
  // eval mode must not mutate the statistics
  Act y2 = bn.forward(x, eval);
  CHECK((bn.run_mean - rm).cwiseAbs().maxCoeff() == 0);
  for (size_t i = 0; i < y.v.size(); ++i) CHECK(y.v[i] == y2.v[i]);
}
