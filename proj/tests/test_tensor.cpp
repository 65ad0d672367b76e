#include <cmath>
#include <cstring>
#include <filesystem>

#include "bft/gradcheck.hpp"
#include "bft/ops.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace bft;

TEST_CASE("tensor shape invariants") {
  CHECK_THROWS_AS(Tensor<float>(Shape{2, 3}, std::vector<float>(5)), DimensionError);
  CHECK_THROWS_AS(Tensor<float>(Shape{2, 0}), DimensionError);
  Tensor<float> t({2, 3}, 1.5f);
  CHECK(t.size() == 6);
  CHECK(t.reshaped({3, 2}).shape() == Shape{3, 2});
  CHECK_THROWS_AS(t.reshaped({4, 2}), DimensionError);
  CHECK_THROWS_AS(t.item(), ContractError);
}

TEST_CASE("matmul examples") {
  Graph<float> g;
  auto id = g.constant(Tensor<float>({2, 2}, {1, 0, 0, 1}));
  auto m = g.constant(Tensor<float>({2, 2}, {5, 6, 7, 8}));
  CHECK(matmul(id, m).value().storage() == std::vector<float>{5, 6, 7, 8});
  auto row = g.constant(Tensor<float>({1, 2}, {1, 2}));
  auto col = g.constant(Tensor<float>({2, 1}, {3, 4}));
  CHECK(matmul(row, col).value().item() == 11.0f);
  CHECK_THROWS_AS(matmul(row, row), DimensionError);
}

TEST_CASE("matmul equals the triple-loop oracle on random instances") {
  Rng rng(3);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int m = trial == 0 ? 7 : rng.range(1, 12), k = trial == 0 ? 5 : rng.range(1, 12),
              n = trial == 0 ? 3 : rng.range(1, 12);
    auto a = oracle::random_tensor<float>({m, k}, rng);
    auto b = oracle::random_tensor<float>({k, n}, rng);
    Graph<float> g;
    auto c = matmul(g.constant(a), g.constant(b));
    std::vector<double> ad(a.data().begin(), a.data().end()), bd(b.data().begin(), b.data().end());
    const auto ref = oracle::matmul(ad, bd, m, k, n);
    for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(c.value()[i] - ref[i]));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("conv2d examples") {
  Graph<float> g;
  Rng rng(4);
  auto x = oracle::random_tensor<float>({3, 5, 6}, rng);
  Tensor<float> w({3, 3, 1, 1});
  for (int c = 0; c < 3; ++c) w[c * 3 + c] = 1.0f;
  auto y = conv2d(g.constant(x), g.constant(w), std::nullopt, 1, 0);
  CHECK(y.value().storage() == x.storage());

  auto ones = g.constant(Tensor<float>({1, 5, 5}, 1.0f));
  auto k = g.constant(Tensor<float>({1, 1, 3, 3}, 1.0f));
  auto counted = conv2d(ones, k, std::nullopt, 1, 1).value();
  CHECK(counted.at(0, 2, 2) == 9.0f);
  CHECK(counted.at(0, 0, 0) == 4.0f);
  CHECK(counted.at(0, 4, 4) == 4.0f);
  CHECK(counted.at(0, 0, 2) == 6.0f);

  CHECK_THROWS_AS(conv2d(g.constant(Tensor<float>({1, 2, 2})), k, std::nullopt, 1, 0), DimensionError);
  CHECK_THROWS_AS(conv2d(ones, g.constant(Tensor<float>({1, 2, 3, 3})), std::nullopt, 1, 1), DimensionError);
  CHECK_THROWS_AS(conv2d(ones, g.constant(Tensor<float>({1, 1, 2, 2})), std::nullopt, 1, 1), DimensionError);
}

TEST_CASE("conv2d equals the direct 6-loop oracle on random instances") {
  Rng rng(5);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int c = rng.range(1, 4), o = rng.range(1, 5), k = 2 * rng.range(0, 2) + 1;
    const int stride = rng.range(1, 2), pad = rng.range(0, k / 2);
    const int h = rng.range(k, 11), w = rng.range(k, 11);
    auto x = oracle::random_tensor<float>({c, h, w}, rng);
    auto wt = oracle::random_tensor<float>({o, c, k, k}, rng);
    auto b = oracle::random_tensor<float>({o}, rng);
    Graph<float> g;
    auto y = conv2d(g.constant(x), g.constant(wt), g.constant(b), stride, pad);
    const auto ref = oracle::conv2d(x.cast<double>(), wt.cast<double>(),
                                    std::vector<double>(b.data().begin(), b.data().end()), stride, pad);
    REQUIRE(y.shape() == ref.shape());
    worst = std::max(worst, oracle::max_abs_diff(y.value(), ref));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("elementwise suite") {
  Graph<float> g;
  CHECK(sigmoid(g.constant(Tensor<float>::scalar(0.0f))).value().item() == 0.5f);
  for (int n : {1, 3, 10}) {
    auto s = softmax(g.constant(Tensor<float>({n}, 2.5f)), 0).value();
    for (float v : s.data()) CHECK(v == doctest::Approx(1.0f / n));
  }
  CHECK_THROWS_AS(softmax(g.constant(Tensor<float>({2, 2})), 2), DimensionError);
  CHECK_THROWS_AS(concat(g.constant(Tensor<float>({2, 2})), g.constant(Tensor<float>({2, 3})), 0),
                  DimensionError);
  CHECK_THROWS_AS(slice(g.constant(Tensor<float>({2, 2})), 3, 0, 1), DimensionError);

  auto a = g.constant(Tensor<float>({2, 2}, {1, 2, 3, 4}));
  auto b = g.constant(Tensor<float>({2, 1}, {5, 6}));
  auto cat = concat(a, b, 1).value();
  CHECK(cat.storage() == std::vector<float>{1, 2, 5, 3, 4, 6});
  auto [l, r] = split(concat(a, b, 1), 1, 2);
  CHECK(l.value().storage() == a.value().storage());
  CHECK(r.value().storage() == b.value().storage());
  CHECK(relu(g.constant(Tensor<float>({3}, {-1, 0, 2}))).value().storage() == std::vector<float>{0, 0, 2});
}

TEST_CASE("channel and global pooling equal loop oracles") {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const int c = rng.range(1, 6), h = rng.range(1, 6), w = rng.range(1, 6);
    auto x = oracle::random_tensor<float>({c, h, w}, rng);
    Graph<float> g;
    auto xv = g.constant(x);
    auto cmax = channel_pool(xv, Pool::kMax).value();
    auto cavg = channel_pool(xv, Pool::kAvg).value();
    auto gmax = global_pool(xv, Pool::kMax).value();
    auto gavg = global_pool(xv, Pool::kAvg).value();
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        float mx = x.at(0, i, j);
        double s = 0;
        for (int ch = 0; ch < c; ++ch) {
          mx = std::max(mx, x.at(ch, i, j));
          s += x.at(ch, i, j);
        }
        CHECK(cmax.at(0, i, j) == mx);
        CHECK(cavg.at(0, i, j) == doctest::Approx(s / c));
      }
    for (int ch = 0; ch < c; ++ch) {
      float mx = x.at(ch, 0, 0);
      double s = 0;
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
          mx = std::max(mx, x.at(ch, i, j));
          s += x.at(ch, i, j);
        }
      CHECK(gmax[ch] == mx);
      CHECK(gavg[ch] == doctest::Approx(s / (h * w)));
    }
  }
}

TEST_CASE("softmax sums to one along its axis for arbitrary finite input") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const int a = rng.range(1, 5), b = rng.range(1, 9), c = rng.range(1, 5);
    auto x = oracle::random_tensor<double>({a, b, c}, rng, 30.0);
    Graph<double> g;
    const int axis = rng.range(0, 2);
    auto y = softmax(g.constant(x), axis).value();
    const int extents[3] = {a, b, c};
    for (int i = 0; i < a; ++i)
      for (int j = 0; j < b; ++j)
        for (int k = 0; k < c; ++k) {
          int idx[3] = {i, j, k};
          if (idx[axis] != 0) continue;
          double s = 0;
          for (int t = 0; t < extents[axis]; ++t) {
            idx[axis] = t;
            s += y[(static_cast<std::size_t>(idx[0]) * b + idx[1]) * c + idx[2]];
          }
          CHECK(std::abs(s - 1.0) <= 1e-6);
        }
  }
}

TEST_CASE("backward examples") {
  ParamStore<double> store;
  Rng rng(8);
  const auto p = store.add("p", oracle::random_tensor<double>({3, 4}, rng));
  const auto unused = store.add("unused", oracle::random_tensor<double>({2}, rng));
  {
    Graph<double> g(&store);
    backward(sum(g.param(p)), g, store);
    for (double v : store[p].grad.data()) CHECK(v == 1.0);
    for (double v : store[unused].grad.data()) CHECK(v == 0.0);
  }
  {
    Graph<double> g(&store);
    auto pv = g.param(p);
    backward(sum(mul(pv, pv)), g, store);
    for (std::size_t i = 0; i < store[p].value.size(); ++i) {
      CHECK(store[p].grad[i] == doctest::Approx(2.0 * store[p].value[i]));
    }
  }
  Graph<double> g(&store);
  CHECK_THROWS_AS(backward(g.param(p), g, store), ContractError);
}

TEST_CASE("shared parameter used twice accumulates one gradient") {
  ParamStore<double> store;
  const auto p = store.add("p", Tensor<double>({2}, {1.0, 2.0}));
  Graph<double> g(&store);
  auto loss = add(sum(g.param(p)), sum(scale(g.param(p), 3.0)));
  backward(loss, g, store);
  CHECK(store[p].grad[0] == 4.0);
  CHECK(store[p].grad[1] == 4.0);
}

TEST_CASE("non-finite values are an error state") {
  Graph<double> g;
  auto x = g.constant(Tensor<double>({2}, {0.0, 1.0}));
  CHECK_THROWS_AS(log(x), NumericError);
}

TEST_CASE("gradcheck on a quadratic is exact up to roundoff") {
  ParamStore<double> store;
  Rng rng(9);
  const auto p = store.add("p", oracle::random_tensor<double>({5}, rng));
  const auto q = store.add("q", oracle::random_tensor<double>({5}, rng));
  auto loss = [&](Graph<double>& g) {
    auto a = g.param(p), b = g.param(q);
    return add(sum(mul(a, b)), sum(square(a)));
  };
  const auto report = gradcheck(loss, store, GradcheckOptions{});
  CHECK(report.passed);
  CHECK(report.max_rel_err < 1e-8);
  CHECK(report.checked == 10);
}

TEST_CASE("gradcheck covers every differentiable op") {
  Rng rng(10);
  ParamStore<double> store;
  const auto a = store.add("a", oracle::random_tensor<double>({2, 3, 4}, rng));
  const auto b = store.add("b", oracle::random_tensor<double>({2, 3, 4}, rng));
  const auto w = store.add("w", oracle::random_tensor<double>({3, 2, 3, 3}, rng));
  const auto bias = store.add("bias", oracle::random_tensor<double>({3}, rng));
  const auto z = store.add("z", oracle::random_tensor<double>({2, 2, 3}, rng));
  const auto m = store.add("m", oracle::random_tensor<double>({4, 6}, rng));
  const auto s = store.add("s", oracle::random_tensor<double>({1}, rng));
  const auto lw = store.add("lw", oracle::random_tensor<double>({5, 4}, rng));
  const auto lb = store.add("lb", oracle::random_tensor<double>({5}, rng));
  auto loss = [&](Graph<double>& g) {
    auto av = g.param(a), bv = g.param(b);
    auto conv = conv2d(av, g.param(w), g.param(bias), 2, 1);           // [3,2,2]
    auto corr = xcorr_depthwise(av, g.param(z));                       // [2,3,4]
    auto grouped = group_sum(corr, 1);                                 // [1,3,4]
    auto e = add(mul(av, bv), div(sigmoid(bv), add_scalar(square(av), 1.0)));
    e = add(e, sub(maximum(av, bv), minimum(av, bv)));
    e = add(e, scale_by(g.param(s), abs(sub(av, bv))));
    auto gp = add(global_pool(e, Pool::kMax), global_pool(e, Pool::kAvg));  // [2,1,1]
    auto cp = add(channel_pool(e, Pool::kMax), channel_pool(e, Pool::kAvg)); // [1,3,4]
    auto prod = channel_spatial_product(gp, cp);                          // [2,3,4]
    auto flat = reshape(add(prod, corr), {2, 12});
    auto cat = concat(flat, reshape(grouped, {1, 12}), 0);                // [3,12]
    auto sm = softmax(cat, 1);
    auto [left, right] = split(sm, 1, 4);
    auto mm = matmul(reshape(right, {6, 4}), g.param(m));                // [6,6]
    auto lin = linear(g.param(lw), reshape(left, {4, 3}), g.param(lb));  // [5,3]
    auto rows = scale_rows(mm, reshape(slice(reshape(cat, {36}), 0, 0, 6), {6, 1}));
    auto cl = clamp(rows, -0.5, 0.5);
    auto c00 = cell(conv, 1, 1);
    return add(add(mean(log(add_scalar(sigmoid(cl), 0.5))), sum(relu(c00))), sum(relu(lin)));
  };
  const auto report = gradcheck(loss, store, GradcheckOptions{});
  INFO(report.failure);
  CHECK(report.passed);
  CHECK(report.max_rel_err <= 1e-4);
  CHECK(report.checked == store.total_values());
}

TEST_CASE("checkpoint layout is bit-exact") {
  ParamStore<float> store;
  store.add("ab", Tensor<float>({2}, {1.0f, -2.0f}));
  const auto bytes = encode_checkpoint(store);
  const std::vector<std::uint8_t> expected = {
      'B', 'F', 'T', '1', 1, 0, 0, 0,  // magic, count
      2, 0, 'a', 'b',                  // name
      1, 2, 0, 0, 0,                   // rank, extent
      0x00, 0x00, 0x80, 0x3f,          // 1.0f
      0x00, 0x00, 0x00, 0xc0,          // -2.0f
  };
  CHECK(bytes == expected);
  CHECK_THROWS_AS(decode_checkpoint({'B', 'F', 'T', '2', 0, 0, 0, 0}), IoError);
  auto truncated = bytes;
  truncated.pop_back();
  CHECK_THROWS_AS(decode_checkpoint(truncated), IoError);
}

TEST_CASE("checkpoint round trip preserves names, shapes and bits") {
  Rng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    ParamStore<float> store;
    const int entries = rng.range(0, 6);
    for (int e = 0; e < entries; ++e) {
      Shape shape(rng.range(1, 4));
      for (int& d : shape) d = rng.range(1, 5);
      store.add("p" + std::to_string(e) + std::string(rng.range(0, 3), 'x'),
                oracle::random_tensor<float>(shape, rng, 1e3));
    }
    const auto path = std::filesystem::temp_directory_path() / "bft_ckpt_roundtrip.bin";
    save_checkpoint(store, path);
    const auto back = load_checkpoint(path);
    REQUIRE(back.size() == store.size());
    for (std::size_t i = 0; i < store.size(); ++i) {
      CHECK(back[i].name == store[i].name);
      CHECK(back[i].value.shape() == store[i].value.shape());
      CHECK(std::memcmp(back[i].value.ptr(), store[i].value.ptr(), store[i].value.size() * 4) == 0);
    }
  }
}

TEST_CASE("branch replay evaluates the smooth piece of the recorded point") {
  Graph<double> rec;
  rec.record_branches();
  relu(rec.constant(Tensor<double>({3}, {-1.0, 2.0, 0.5})));
  const auto log = rec.branch_log();
  REQUIRE(log.size() == 3);

  Graph<double> rep;
  rep.replay_branches(log);
  auto y = relu(rep.constant(Tensor<double>({3}, {1.0, -2.0, 0.25})));
  // branch 0 at index 0 forces zero, branch 1 at index 1 passes the negative value
  CHECK(y.value().storage() == std::vector<double>{0.0, -2.0, 0.25});
  CHECK(rep.branch_signature() != rec.branch_signature());

  Graph<double> same;
  same.record_branches();
  relu(same.constant(Tensor<double>({3}, {-3.0, 1.0, 9.0})));
  CHECK(same.branch_signature() == rec.branch_signature());

  Graph<double> short_log;
  short_log.replay_branches({1});
  CHECK_THROWS_AS(relu(short_log.constant(Tensor<double>({2}, {1.0, 1.0}))), ContractError);
}

TEST_CASE("gradcheck stays exact across a relu kink") {
  ParamStore<double> store;
  // 1e-5 sits inside [p - eps, p + eps] for the default eps
  const auto p = store.add("p", Tensor<double>({2}, {1e-5, 0.7}));
  auto loss = [&](Graph<double>& g) { return sum(square(relu(g.param(p)))); };
  const auto report = gradcheck(loss, store, GradcheckOptions{});
  CHECK(report.passed);
  CHECK(report.frozen == 1);
  CHECK(report.max_rel_err < 1e-8);
}

TEST_CASE("gradcheck rejects a wrong backward") {
  ParamStore<double> store;
  Rng rng(12);
  const auto p = store.add("p", oracle::random_tensor<double>({4}, rng));
  auto loss = [&](Graph<double>& g) {
    Var<double> x = g.param(p);
    Tensor<double> v = x.value();
    for (auto& e : v.data()) e = e * e;
    // d(x^2)/dx reported as 2.01 x
    Var<double> y = g.record("bad_square", std::move(v), {x}, [x](Graph<double>& gr, const Tensor<double>& go) {
      Tensor<double>& gx = gr.grad(x);
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * 2.01 * gr.value(x)[i];
    });
    return sum(y);
  };
  const auto report = gradcheck(loss, store, GradcheckOptions{});
  CHECK_FALSE(report.passed);
  CHECK(report.max_rel_err > 4e-3);
  CHECK(report.failure.find("p[") != std::string::npos);
}
