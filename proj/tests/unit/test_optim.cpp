#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "adlite/optim.hpp"
#include "fixtures.hpp"

using namespace adlite;

namespace {

std::vector<TensorD> snapshot(AdliteNet<double>& net) {
  std::vector<TensorD> out;
  for (auto* p : net.parameters()) out.push_back(p->value);
  for (auto& b : net.buffers()) out.push_back(*b.tensor);
  return out;
}

LabeledImages toy_set(std::size_t per_class, std::uint64_t seed, std::size_t size = 32) {
  SyntheticSpec spec;
  spec.counts = {per_class, per_class};
  spec.image_size = size;
  spec.seed = seed;
  return fixture::synth_images(spec);
}

TrainOptions toy_options(std::size_t batch = 8) {
  TrainOptions opts;
  opts.batch_size = batch;
  opts.preprocess = {32, 1};
  return opts;
}

}  // namespace

TEST_CASE("adam: first step on p=1, g=1 moves by lr/(1+eps)") {
  Parameter<double> p("p", TensorD({1}, 1.0));
  p.grad[0] = 1.0;
  AdamState<double> st;
  Parameter<double>* ps[] = {&p};
  adam_step<double>(ps, st, 0.00095);
  CHECK(1.0 - p.value[0] == doctest::Approx(0.00095 / (1.0 + 1e-7)).epsilon(1e-12));
  CHECK(st.step == 1);
  CHECK(st.m[0][0] == doctest::Approx(0.1));
  CHECK(st.v[0][0] == doctest::Approx(0.001));
}

TEST_CASE("adam: zero gradients from zero moments leave parameters unchanged") {
  Rng rng(3);
  AdliteNet<double> net(fixture::tiny_net(), rng);
  const auto before = snapshot(net);
  auto params = net.parameters();
  AdamState<double> st;
  adam_step<double>(params, st, 0.01);
  CHECK(snapshot(net) == before);
  CHECK(st.step == 1);
}

TEST_CASE("adam: matches the recurrence over several steps") {
  Parameter<double> p("p", TensorD({2}, 0.5));
  AdamState<double> st;
  Parameter<double>* ps[] = {&p};
  double m = 0, v = 0, x = 0.5;
  const double grads[] = {0.3, -1.2, 0.05, 2.0};
  for (int t = 1; t <= 4; ++t) {
    const double g = grads[t - 1];
    p.grad[0] = g;
    p.grad[1] = -g;
    adam_step<double>(ps, st, 0.01);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    x -= 0.01 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-7);
    CHECK(p.value[0] == doctest::Approx(x).epsilon(1e-13));
    CHECK(p.value[1] == doctest::Approx(1.0 - x).epsilon(1e-13));
  }
  CHECK(st.step == 4);
}

TEST_CASE("adam: a non-finite update aborts the whole step") {
  Parameter<double> a("a", TensorD({2}, 1.0));
  Parameter<double> b("b", TensorD({1}, 2.0));
  a.grad[0] = 0.5;
  b.grad[0] = std::numeric_limits<double>::infinity();
  AdamState<double> st;
  Parameter<double>* ps[] = {&a, &b};
  CHECK_THROWS_AS(adam_step<double>(ps, st, 0.01), NumericError);
  CHECK(a.value[0] == 1.0);
  CHECK(b.value[0] == 2.0);
  CHECK(st.step == 0);
  CHECK(st.m[0][0] == 0.0);
}

TEST_CASE("adam: state mismatch is rejected") {
  Parameter<double> a("a", TensorD({2}, 1.0));
  Parameter<double> b("b", TensorD({1}, 2.0));
  AdamState<double> st;
  Parameter<double>* one[] = {&a};
  Parameter<double>* two[] = {&a, &b};
  adam_step<double>(one, st, 0.01);
  CHECK_THROWS_AS(adam_step<double>(two, st, 0.01), StateError);
}

TEST_CASE("lr schedule") {
  LrSchedule s;
  s.decay_start_epoch = 8;
  CHECK(lr_at_epoch(s, 1) == 0.00095);
  CHECK(lr_at_epoch(s, 8) == 0.00095);
  CHECK(lr_at_epoch(s, 9) == doctest::Approx(0.0009025).epsilon(1e-14));
  CHECK(lr_at_epoch(s, 10) == doctest::Approx(0.00095 * 0.95 * 0.95).epsilon(1e-14));
  for (int e = 1; e < 60; ++e) {
    CHECK(lr_at_epoch(s, e + 1) <= lr_at_epoch(s, e));
    CHECK(lr_at_epoch(s, e) > 0.0);
  }
  CHECK_THROWS_AS(lr_at_epoch(s, 0), ConfigError);

  LrSchedule constant;
  for (int e : {1, 8, 9, 100}) CHECK(lr_at_epoch(constant, e) == 0.00095);

  LrSchedule cut;
  cut.decay_start_epoch = 4;
  cut.kind = DecayKind::one_shot;
  CHECK(lr_at_epoch(cut, 4) == 0.00095);
  CHECK(lr_at_epoch(cut, 5) == doctest::Approx(0.0009025));
  CHECK(lr_at_epoch(cut, 20) == lr_at_epoch(cut, 5));
}

TEST_CASE("regime presets") {
  const auto ad = regime_preset("ad");
  CHECK(ad.epochs == 18);
  CHECK(lr_at_epoch(ad.schedule, 8) == 0.00095);
  CHECK(lr_at_epoch(ad.schedule, 9) < 0.00095);
  const auto adni = regime_preset("adni");
  CHECK(adni.epochs == 15);
  CHECK_FALSE(adni.schedule.decay_start_epoch.has_value());
  const auto oasis = regime_preset("oasis");
  CHECK(oasis.epochs == 7);
  CHECK(lr_at_epoch(oasis.schedule, 4) == 0.00095);
  CHECK(lr_at_epoch(oasis.schedule, 5) < 0.00095);
  CHECK_THROWS_AS(regime_preset("mnist"), ConfigError);
}

TEST_CASE("train_epoch with learning rate 0 leaves parameters unchanged") {
  const auto data = toy_set(6, 1);
  Rng rng(4);
  AdliteNet<double> net(fixture::tiny_net(), rng);
  const auto params_before = [&] {
    std::vector<TensorD> v;
    for (auto* p : net.parameters()) v.push_back(p->value);
    return v;
  }();
  AdamState<double> st;
  const auto order = fixture::iota(data.size());
  const auto stats = train_epoch(net, st, data, order, toy_options(5), 0.0);
  CHECK(stats.samples == 12);
  CHECK(st.step == 3);  // 5 + 5 + 2, partial batch kept
  auto params = net.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) CHECK(params[i]->value == params_before[i]);
}

TEST_CASE("fit with zero epochs returns no records and the initial model") {
  const auto data = toy_set(4, 2);
  Rng rng(5);
  AdliteNet<double> net(fixture::tiny_net(), rng);
  const auto before = snapshot(net);
  AdamState<double> st;
  const auto train = fixture::iota(6), val = fixture::iota(2, 6);
  const auto run = fit(net, st, data, train, val, LrSchedule{}, 0, toy_options(), 9);
  CHECK(run.records.empty());
  CHECK(snapshot(net) == before);
}

TEST_CASE("fit rejects overlapping train and validation positions") {
  const auto data = toy_set(4, 2);
  Rng rng(5);
  AdliteNet<double> net(fixture::tiny_net(), rng);
  AdamState<double> st;
  const auto train = fixture::iota(6), val = fixture::iota(3, 5);
  CHECK_THROWS_AS(fit(net, st, data, train, val, LrSchedule{}, 1, toy_options(), 9), SplitError);
}

TEST_CASE("fit records one entry per epoch with the scheduled rate") {
  const auto data = toy_set(8, 3);
  Rng rng(6);
  AdliteNet<float> net(fixture::tiny_net(), rng);
  AdamState<float> st;
  LrSchedule s;
  s.decay_start_epoch = 2;
  int callbacks = 0;
  const auto train = fixture::iota(12), val = fixture::iota(4, 12);
  const auto run = fit(net, st, data, train, val, s, 4, toy_options(), 1,
                       [&](const EpochRecord&) { ++callbacks; });
  REQUIRE(run.records.size() == 4);
  CHECK(callbacks == 4);
  for (int e = 1; e <= 4; ++e) {
    CHECK(run.records[e - 1].epoch == e);
    CHECK(run.records[e - 1].lr == lr_at_epoch(s, e));
  }
  CHECK(st.step == 4 * 2);
}

TEST_CASE("identical seeds give bitwise-identical runs") {
  const auto data = toy_set(10, 4);
  const auto train = fixture::iota(16), val = fixture::iota(4, 16);
  auto once = [&] {
    Rng rng(77);
    AdliteNet<float> net(fixture::tiny_net(), rng);
    AdamState<float> st;
    auto run = fit(net, st, data, train, val, LrSchedule{}, 3, toy_options(), 5);
    std::vector<Tensor> params;
    for (auto* p : net.parameters()) params.push_back(p->value);
    return std::pair{run, params};
  };
  const auto [a, pa] = once();
  const auto [b, pb] = once();
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].train_loss == b.records[i].train_loss);
    CHECK(a.records[i].train_acc == b.records[i].train_acc);
    CHECK(a.records[i].val_loss == b.records[i].val_loss);
    CHECK(a.records[i].val_acc == b.records[i].val_acc);
  }
  CHECK(pa == pb);
}

TEST_CASE("memorizes a 32-sample toy set") {
  const auto data = toy_set(16, 8);
  Rng rng(12);
  AdliteNet<float> net(fixture::tiny_net(), rng);
  AdamState<float> st;
  const auto all = fixture::iota(32);
  LrSchedule s;
  s.base_lr = 0.01;
  const auto run = fit(net, st, data, all, {}, s, 200, toy_options(8), 3);
  const auto ev = evaluate(net, data, {}, toy_options(8));
  CHECK(ev.accuracy() == 1.0);

  std::vector<double> deltas;
  for (std::size_t i = 1; i < run.records.size(); ++i) {
    deltas.push_back(run.records[i].train_loss - run.records[i - 1].train_loss);
  }
  std::nth_element(deltas.begin(), deltas.begin() + deltas.size() / 2, deltas.end());
  CHECK(deltas[deltas.size() / 2] < 0.0);
}

TEST_CASE("evaluation uses running statistics and leaves the model untouched") {
  const auto data = toy_set(8, 5);
  Rng rng(13);
  AdliteNet<double> net(fixture::tiny_net(), rng);
  AdamState<double> st;
  fit(net, st, data, fixture::iota(16), {}, LrSchedule{}, 2, toy_options(), 4);
  const auto before = snapshot(net);
  const auto m_before = st.m;

  const auto probe = fixture::iota(8, 4);
  const auto ev = evaluate(net, data, probe, toy_options());
  CHECK(snapshot(net) == before);
  CHECK(st.m == m_before);

  const auto x = make_batch<double>(data, probe, toy_options().preprocess);
  const auto infer = softmax(net.infer_logits(x));
  CHECK(std::vector<double>(infer.data().begin(), infer.data().end()) == ev.probabilities);
  const auto train = net.forward(x, Mode::train).probs;
  double diff = 0.0;
  for (std::size_t i = 0; i < train.size(); ++i) diff = std::max(diff, std::abs(train[i] - infer[i]));
  CHECK(diff > 1e-6);
}

TEST_CASE("evaluate is invariant to sample order and repeatable") {
  const auto data = toy_set(6, 6);
  Rng rng(14);
  AdliteNet<double> net(fixture::tiny_net(), rng);
  const auto fwd = fixture::iota(12);
  std::vector<std::size_t> rev(fwd.rbegin(), fwd.rend());
  const auto a = evaluate(net, data, fwd, toy_options(5));
  const auto b = evaluate(net, data, rev, toy_options(5));
  const auto c = evaluate(net, data, fwd, toy_options(5));
  CHECK(a.probabilities == c.probabilities);
  for (std::size_t i = 0; i < 12; ++i) {
    for (std::size_t k = 0; k < 2; ++k) {
      CHECK(a.probabilities[i * 2 + k] == b.probabilities[(11 - i) * 2 + k]);
    }
    CHECK(a.predictions[i] == b.predictions[11 - i]);
  }
}
