#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "ediv/nn/checkpoint.hpp"
#include "ediv/nn/network.hpp"
#include "ediv/nn/ops.hpp"
#include "ediv/nn/optim.hpp"
#include "gradcheck.hpp"

using namespace ediv;

namespace {

Tensor random_tensor(Shape s, std::mt19937_64& rng, double sd = 1.0) {
  Tensor t(std::move(s));
  std::normal_distribution<double> d(0.0, sd);
  for (double& v : t.values()) v = d(rng);
  return t;
}

void randomize(Network& net, std::mt19937_64& rng) {
  for (auto& p : net.params()) p.value = random_tensor(p.value.shape(), rng, 0.5);
}

}  // namespace

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensor({2, 0, 3}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>(3)), std::invalid_argument);
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK_FALSE(t.has_grad());
  t.ensure_grad();
  CHECK(t.grad().size() == t.size());
}

TEST_CASE("forward: zero-weight network gives all-zero logits") {
  Network net = desk_network(3, 16, 16, 10);
  std::mt19937_64 rng(1);
  Tensor logits = forward(net, random_tensor({4, 3, 16, 16}, rng));
  CHECK(logits.shape() == Shape{4, 10});
  for (double v : logits.values()) CHECK(v == 0.0);
}

TEST_CASE("forward: 1x1 unit convolution on one channel is the identity") {
  Network net({1, 5, 4}, {LayerSpec::conv(1, 1, 1, 0)});
  net.param("conv0.weight").value.fill(1.0);
  std::mt19937_64 rng(2);
  Tensor x = random_tensor({2, 1, 5, 4}, rng);
  Tensor y = forward(net, x);
  CHECK(y.shape() == x.shape());
  CHECK(y.values() == x.values());
}

TEST_CASE("forward: conv + relu + linear matches a hand evaluation on a 3x3 image") {
  Network net({1, 3, 3}, {LayerSpec::conv(1, 2, 3, 1), LayerSpec::simple(LayerKind::relu),
                          LayerSpec::simple(LayerKind::flatten), LayerSpec::fc(18, 3)});
  std::mt19937_64 rng(3);
  randomize(net, rng);
  Tensor x = random_tensor({1, 1, 3, 3}, rng);

  const Tensor& w = net.param("conv0.weight").value;
  const Tensor& b = net.param("conv0.bias").value;
  const Tensor& fw = net.param("linear3.weight").value;
  const Tensor& fb = net.param("linear3.bias").value;
  std::vector<double> hidden(18);
  for (int o = 0; o < 2; ++o)
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) {
        double acc = b[o];
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc) {
            const int rr = r + dr, cc = c + dc;
            if (rr < 0 || rr > 2 || cc < 0 || cc > 2) continue;
            acc += w[o * 9 + (dr + 1) * 3 + (dc + 1)] * x[rr * 3 + cc];
          }
        hidden[o * 9 + r * 3 + c] = std::max(acc, 0.0);
      }
  Tensor logits = forward(net, x);
  for (int k = 0; k < 3; ++k) {
    double acc = fb[k];
    for (int j = 0; j < 18; ++j) acc += fw[k * 18 + j] * hidden[j];
    CHECK(logits[k] == doctest::Approx(acc).epsilon(1e-13));
  }
}

TEST_CASE("forward: shape mismatch names the layer") {
  Network net({3, 8, 8}, {LayerSpec::conv_same(3, 4, 3), LayerSpec::simple(LayerKind::relu)});
  std::mt19937_64 rng(4);
  CHECK_THROWS_WITH_AS(forward(net, random_tensor({1, 2, 8, 8}, rng)),
                       doctest::Contains("network input"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(Network({3, 8, 8}, {LayerSpec::conv_same(4, 4, 3)}),
                       doctest::Contains("layer 0 (conv2d)"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(Network({3, 8, 8}, {LayerSpec::simple(LayerKind::global_avg_pool),
                                           LayerSpec::fc(4, 2)}),
                       doctest::Contains("layer 1 (linear)"), std::invalid_argument);
  CHECK_THROWS_AS(Network({3, 8, 8}, {LayerSpec::conv(3, 0, 3, 1)}), std::invalid_argument);
}

TEST_CASE("backward: sum and sum of squares") {
  std::mt19937_64 rng(5);
  Tensor x = random_tensor({2, 3}, rng);
  {
    Graph g;
    Var v = g.leaf(x, true);
    Var s = ops::sum(g, v);
    g.backward(s, Tensor({1}, 1.0));
    const Tensor gr = g.grad(v);
    for (double d : gr.values()) CHECK(d == 1.0);
  }
  {
    Graph g;
    Var v = g.leaf(x, true);
    Var s = ops::sum(g, ops::mul(g, v, v));
    g.backward(s, Tensor({1}, 1.0));
    Tensor gr = g.grad(v);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(gr[i] == 2.0 * x[i]);
  }
}

TEST_CASE("backward: twice without a new forward is an error; each node visited once") {
  Network net = desk_network(3, 8, 8, 4);
  std::mt19937_64 rng(6);
  randomize(net, rng);
  Trace t = forward_trace(net, random_tensor({2, 3, 8, 8}, rng), {.input_grad = true});
  backward(t, Tensor({2, 4}, 1.0));
  CHECK(t.graph.backward_visits() <= t.graph.size());
  CHECK_THROWS_AS(backward(t, Tensor({2, 4}, 1.0)), std::logic_error);

  Trace t2 = forward_trace(net, random_tensor({2, 3, 8, 8}, rng));
  CHECK_THROWS_AS(backward(t2, Tensor({2, 5}, 1.0)), std::invalid_argument);
}

TEST_CASE("backward: random nets agree with central finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CAPTURE(seed);
    const auto result = testing::gradcheck_random_instance(seed);
    CHECK(result.params_checked > 0);
    CHECK(result.max_rel_error < 1e-4);
  }
}

TEST_CASE("layers: softmax, cross entropy and pooling edge cases") {
  Tensor equal({2, 5}, 0.3);
  Tensor p = ops::softmax(equal);
  for (double v : p.values()) CHECK(v == doctest::Approx(0.2).epsilon(1e-15));

  Graph g;
  Var logits = g.leaf(Tensor({1, 3}, {0.0, 800.0, 0.0}));
  const int label[] = {1};
  Var loss = ops::cross_entropy(g, logits, label);
  CHECK(g.value(loss)[0] == 0.0);

  Graph g2;
  Var x = g2.leaf(Tensor({1, 1, 2, 2}, {1, 2, 3, 4}));
  CHECK(g2.value(ops::maxpool2x2(g2, x))[0] == 4.0);

  std::mt19937_64 rng(9);
  Tensor big = random_tensor({50, 10}, rng, 20.0);
  Tensor probs = ops::softmax(big);
  for (std::size_t n = 0; n < 50; ++n) {
    double s = 0.0;
    for (std::size_t k = 0; k < 10; ++k) s += probs[n * 10 + k];
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
  Graph g3;
  Var tiny = g3.leaf(Tensor({1, 1, 1, 4}));
  CHECK_THROWS_AS(ops::maxpool2x2(g3, tiny), std::invalid_argument);
}

TEST_CASE("sgd: plain step, mask precedence, argument checks") {
  Network net({1, 2, 2}, {LayerSpec::simple(LayerKind::flatten), LayerSpec::fc(4, 1)});
  auto& w = net.param("linear1.weight");
  w.value = Tensor({1, 4}, {1.0, 2.0, 3.0, 4.0});
  net.install_mask("linear1.weight", Tensor({1, 4}, {1.0, 0.0, 1.0, 1.0}));
  net.apply_masks();
  SgdMomentum opt(net);
  std::vector<Tensor> grads{Tensor({1, 4}, {0.5, 7.0, -1.0, 0.0}), Tensor({1}, {2.0})};
  opt.step(net, grads, 0.1, 0.0);
  CHECK(w.value[0] == 1.0 - 0.1 * 0.5);
  CHECK(w.value[1] == 0.0);
  CHECK(w.value[2] == 3.0 + 0.1);
  CHECK(net.param("linear1.bias").value[0] == -0.2);
  for (int i = 0; i < 20; ++i) opt.step(net, grads, 0.1, 0.9);
  CHECK(w.value[1] == 0.0);
  CHECK_THROWS_AS(opt.step(net, grads, 0.0, 0.9), std::invalid_argument);
  CHECK_THROWS_AS(opt.step(net, grads, 0.1, 1.0), std::invalid_argument);
  std::vector<Tensor> huge{Tensor({1, 4}, 1e308), Tensor({1}, 1e308)};
  CHECK_THROWS_AS(opt.step(net, huge, 1e10, 0.0), std::overflow_error);
}

TEST_CASE("adam: f(w) = w^2 from w = 1 at lr 0.05") {
  // Independent replay of the Adam recurrence.
  double w_ref = 1.0, m = 0.0, v = 0.0;
  std::vector<double> w{1.0};
  Adam adam(1);
  for (int t = 1; t <= 500; ++t) {
    const double g = 2.0 * w_ref;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    w_ref -= 0.05 * (m / (1.0 - std::pow(0.9, t))) / (std::sqrt(v / (1.0 - std::pow(0.999, t))) + 1e-8);
    const double grad = 2.0 * w[0];
    adam.step(w, std::span<const double>(&grad, 1), 0.05);
    REQUIRE(w[0] == doctest::Approx(w_ref).epsilon(1e-12));
  }
  CHECK(std::abs(w[0]) < 1e-3);
  CHECK(w[0] * w[0] < 1e-3);
}

TEST_CASE("masks survive many optimizer steps") {
  Network net = desk_network(3, 8, 8, 3);
  net.init_he(11);
  std::mt19937_64 rng(12);
  for (auto& p : net.params()) {
    if (!p.prunable) continue;
    Tensor mask(p.value.shape());
    for (double& v : mask.values()) v = static_cast<double>(rng() & 1u);
    net.install_mask(p.name, std::move(mask));
  }
  net.apply_masks();
  auto zeros_at_mask = [&] {
    std::size_t n = 0;
    for (const auto& p : net.params())
      if (p.mask)
        for (std::size_t i = 0; i < p.value.size(); ++i)
          n += ((*p.mask)[i] == 0.0 && p.value[i] == 0.0);
    return n;
  };
  const std::size_t before = zeros_at_mask();
  SgdMomentum opt(net);
  const int labels[] = {0, 1, 2, 1};
  for (int step = 0; step < 15; ++step) {
    Trace t = forward_trace(net, random_tensor({4, 3, 8, 8}, rng));
    Var loss = ops::cross_entropy(t.graph, t.output, labels);
    t.output = loss;
    Gradients g = backward(t, Tensor({1}, 1.0));
    opt.step(net, g.params, 0.05, 0.9);
  }
  CHECK(zeros_at_mask() == before);
}

TEST_CASE("training is bitwise deterministic for a fixed seed") {
  auto run = [] {
    Network net = desk_network(3, 8, 8, 3);
    net.init_he(21);
    std::mt19937_64 rng(22);
    SgdMomentum opt(net);
    const int labels[] = {2, 0};
    for (int step = 0; step < 5; ++step) {
      Trace t = forward_trace(net, random_tensor({2, 3, 8, 8}, rng));
      t.output = ops::cross_entropy(t.graph, t.output, labels);
      opt.step(net, backward(t, Tensor({1}, 1.0)).params, 0.1, 0.9);
    }
    return net;
  };
  CHECK(run() == run());
}

TEST_CASE("checkpoint round-trip is bit-exact") {
  Network net = desk_network(3, 16, 16, 10);
  net.init_he(31);
  Tensor mask(net.param("conv3.weight").value.shape());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = (i * 7 % 3) == 0 ? 1.0 : 0.0;
  net.install_mask("conv3.weight", mask);
  net.apply_masks();
  const auto bytes = encode_checkpoint(net);
  CHECK(bytes[0] == 'E');
  CHECK(bytes[3] == 'V');
  CHECK(bytes[4] == 1);
  Network back = decode_checkpoint(bytes);
  CHECK(back == net);
  CHECK(encode_checkpoint(back) == bytes);

  const auto path = std::filesystem::temp_directory_path() / "ediv_ckpt_test.ediv";
  save_checkpoint(net, path);
  CHECK(load_checkpoint(path) == net);
  std::filesystem::remove(path);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS(decode_checkpoint(bad));
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  CHECK_THROWS(decode_checkpoint(truncated));
}
