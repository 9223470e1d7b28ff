#include <doctest.h>

#include <set>
#include <utility>

#include "adlite/model.hpp"
#include "layer_gradchecks.hpp"
#include "model_gradcheck.hpp"

using namespace adlite;

namespace {

AdliteConfig scaled(std::size_t size = 64) {
  AdliteConfig cfg;
  cfg.input_size = size;
  return cfg;
}

TensorD random_input(const AdliteConfig& cfg, std::size_t n, Rng& rng) {
  TensorD x({n, cfg.input_channels, cfg.input_size, cfg.input_size});
  for (auto& v : x.data()) v = rng.uniform();
  return x;
}

// Layer-by-layer hand count of the default network with RGB input:
// convs (k^2 * in + 1) * out, DWSC depthwise 10 * C and pointwise (C + 1) * C,
// BN 2 * C, dense (192 + 1) * 4.
constexpr std::size_t kConvs = 1216 + 4640 + 18496 + 55392 + 110720;
constexpr std::size_t kPcbConvs = 18464 + 18496;
constexpr std::size_t kDense = 772;
constexpr std::size_t kDepthwise = 2 * 1280;
constexpr std::size_t kPointwise = 2 * 16512;
constexpr std::size_t kBn = 2 * (16 + 32 + 64 + 96 + 128) + 2 * 2 * 128 + 2 * (32 + 64);

}  // namespace

TEST_CASE("config validation") {
  AdliteConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.input_size = 100;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = AdliteConfig{};
  cfg.pcb_tap_block = 6;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = AdliteConfig{};
  cfg.num_classes = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = AdliteConfig{};
  cfg.input_channels = 2;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = AdliteConfig{};
  cfg.pcb_filters = {32};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = AdliteConfig{};
  cfg.tx_m = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  Rng rng(1);
  cfg.input_size = 48;
  CHECK_THROWS_AS(AdliteNet<float>(cfg, rng), ConfigError);
}

TEST_CASE("default network has 7 standard convolutions, 2 DWSC and a Tx node") {
  Rng rng(1);
  AdliteNet<float> net(AdliteConfig{}, rng);
  CHECK(net.standard_conv_count() == 7);
  CHECK(net.dwsc_count() == 2);
  CHECK(net.has_tx());
}

TEST_CASE("paper-mode audit reproduces the hand count") {
  AdliteConfig cfg;
  cfg.input_channels = 3;
  const auto a = param_audit(cfg, AuditMode::paper);
  CHECK(a.total == kConvs + kPcbConvs + kDepthwise + kDense);
  CHECK(a.total == 230756);
  CHECK(std::abs(static_cast<double>(a.total) - 232000.0) / 232000.0 < 0.01);
  std::size_t conv2 = 0, dwsc1 = 0;
  for (const auto& e : a.entries) {
    if (e.name == "block2.conv") conv2 = e.formula_count;
    if (e.name == "dwsc1") dwsc1 = e.formula_count;
  }
  CHECK(conv2 == 4640);
  CHECK(dwsc1 == 1280);
}

TEST_CASE("full-mode audit equals the allocated scalar count") {
  AdliteConfig cfg;
  cfg.input_channels = 3;
  const auto a = param_audit(cfg, AuditMode::full);
  CHECK(a.total == kConvs + kPcbConvs + kDepthwise + kPointwise + kBn + kDense);
  CHECK(a.total == 265156);
  Rng rng(3);
  AdliteNet<float> net(cfg, rng);
  CHECK(net.parameter_count() == a.total);
  CHECK(a.allocated_total == a.total);
  std::size_t sum = 0;
  for (const auto* p : std::as_const(net).parameters()) sum += p->value.size();
  CHECK(sum == a.total);
}

TEST_CASE("disabling the parallel branch removes exactly its parameters") {
  AdliteConfig on, off;
  off.pcb_enabled = false;
  const auto a = param_audit(on, AuditMode::full).total;
  const auto b = param_audit(off, AuditMode::full).total;
  // pcb convs + pcb BN + the 64 extra dense inputs per class
  CHECK(a - b == kPcbConvs + 2 * (32 + 64) + 64 * 4);
}

TEST_CASE("shape audit: 224 reaches (192, 7, 7) and 64 reaches (192, 2, 2)") {
  auto pre_gap = [](const AdliteConfig& cfg) {
    Shape s;
    for (const auto& e : shape_audit(cfg)) {
      if (e.name == "concat" || (e.name == "dwsc2.bn" && !cfg.pcb_enabled)) s = e.shape;
    }
    return s;
  };
  CHECK(pre_gap(AdliteConfig{}) == Shape{192, 7, 7});
  CHECK(pre_gap(scaled()) == Shape{192, 2, 2});
  AdliteConfig off;
  off.pcb_enabled = false;
  CHECK(pre_gap(off) == Shape{128, 7, 7});
  CHECK(shape_audit(AdliteConfig{}).back().shape == Shape{4});
  CHECK(pooled_extent(224, 0) == 224);
  CHECK(pooled_extent(224, 5) == 7);
  CHECK_THROWS_AS(pooled_extent(100, 5), ConfigError);
}

TEST_CASE("shape audit agrees with a live forward pass on every node") {
  for (bool pcb : {true, false}) {
    for (std::size_t channels : {1u, 3u}) {
      AdliteConfig cfg = scaled(64);
      cfg.pcb_enabled = pcb;
      cfg.input_channels = channels;
      Rng rng(5);
      AdliteNet<float> net(cfg, rng);
      Tensor x({2, channels, 64, 64}, 0.5f);
      Trace<float> trace;
      net.forward(x, Mode::train, &trace);
      const auto audit = shape_audit(cfg);
      REQUIRE(audit.size() == trace.names.size());
      for (std::size_t i = 0; i < audit.size(); ++i) {
        CHECK(audit[i].name == trace.names[i]);
        Shape live = trace.shapes[i];
        live.erase(live.begin());
        CHECK(audit[i].shape == live);
      }
    }
  }
}

TEST_CASE("forward: logits shape and normalized probabilities") {
  Rng rng(7);
  const auto cfg = scaled(64);
  AdliteNet<float> net(cfg, rng);
  Tensor x({2, 1, 64, 64});
  for (auto& v : x.data()) v = static_cast<float>(rng.uniform());
  for (Mode mode : {Mode::train, Mode::infer}) {
    auto out = net.forward(x, mode);
    CHECK(out.logits.shape() == Shape{2, 4});
    for (std::size_t n = 0; n < 2; ++n) {
      double s = 0;
      for (std::size_t k = 0; k < 4; ++k) s += out.probs[n * 4 + k];
      CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
    CHECK(out.cache.has_value() == (mode == Mode::train));
  }
  CHECK_THROWS_AS(net.forward(Tensor({2, 3, 64, 64}), Mode::infer), ShapeError);
  CHECK_THROWS_AS(net.forward(Tensor({2, 1, 32, 32}), Mode::infer), ShapeError);
}

TEST_CASE("infer mode is deterministic and leaves running statistics alone") {
  Rng rng(9);
  AdliteNet<double> net(scaled(32), rng);
  auto x = random_input(net.config(), 3, rng);
  net.forward(x, Mode::train);
  std::vector<TensorD> before;
  for (auto& b : net.buffers()) before.push_back(*b.tensor);
  auto a = net.infer_logits(x);
  auto b = net.infer_logits(x);
  CHECK(a == b);
  auto bufs = net.buffers();
  for (std::size_t i = 0; i < bufs.size(); ++i) CHECK(*bufs[i].tensor == before[i]);
}

TEST_CASE("zeroing the parallel branch only changes its concat channels") {
  Rng rng(11);
  const auto cfg = scaled(64);
  AdliteNet<double> net(cfg, rng);
  auto x = random_input(cfg, 2, rng);
  net.forward(x, Mode::train);  // move BN statistics off their initial values
  AdliteNet<double> zeroed = net;
  for (auto& b : zeroed.pcb_blocks()) {
    for (auto* p : {&b.conv.weights(), &b.conv.bias(), &b.bn.gamma(), &b.bn.beta()}) p->value.fill(0.0);
  }
  Trace<double> t1, t2;
  t1.keep_tensors = t2.keep_tensors = true;
  const auto l1 = net.infer_logits(x, &t1);
  const auto l2 = zeroed.infer_logits(x, &t2);
  const std::size_t pc = cfg.pcb_channels();
  const auto& c1 = t1.output("concat");
  const auto& c2 = t2.output("concat");
  CHECK(slice_channels(c1, pc, c1.dim(1)) == slice_channels(c2, pc, c2.dim(1)));
  CHECK_FALSE(slice_channels(c1, 0, pc) == slice_channels(c2, 0, pc));
  CHECK_FALSE(l1 == l2);
}

TEST_CASE("gradient at the tap is the sum of both branch gradients") {
  Rng rng(13);
  const auto cfg = scaled(32);
  AdliteNet<double> net(cfg, rng);
  auto x = random_input(cfg, 3, rng);
  auto fwd = net.forward(x, Mode::train);
  std::vector<std::uint32_t> y{0, 1, 3};
  auto res = softmax_cce(fwd.logits, y);
  TapGradients<double> both, base_only, pcb_only;
  net.backward(*fwd.cache, res.grad_logits, BranchMask::both, &both);
  net.backward(*fwd.cache, res.grad_logits, BranchMask::base_only, &base_only);
  net.backward(*fwd.cache, res.grad_logits, BranchMask::pcb_only, &pcb_only);
  CHECK(both.base == base_only.base);
  CHECK(both.pcb == pcb_only.pcb);
  for (double v : base_only.pcb.data()) CHECK(v == 0.0);
  for (double v : pcb_only.base.data()) CHECK(v == 0.0);
  for (std::size_t i = 0; i < both.total.size(); ++i) {
    CHECK(both.total[i] == base_only.base[i] + pcb_only.pcb[i]);
  }
}

TEST_CASE("zero upstream gradient gives zero parameter gradients") {
  Rng rng(15);
  AdliteNet<double> net(scaled(32), rng);
  auto x = random_input(net.config(), 2, rng);
  auto fwd = net.forward(x, Mode::train);
  for (auto* p : net.parameters()) p->grad.fill(1.0);
  net.backward(*fwd.cache, TensorD({2, 4}));
  for (auto* p : net.parameters()) {
    for (double g : p->grad.data()) CHECK(g == 0.0);
  }
}

TEST_CASE("backward rejects a stale or missing cache") {
  Rng rng(17);
  AdliteNet<double> net(scaled(32), rng);
  auto x = random_input(net.config(), 2, rng);
  auto first = net.forward(x, Mode::train);
  net.forward(x, Mode::train);
  CHECK_THROWS_AS(net.backward(*first.cache, TensorD({2, 4})), StateError);
  CHECK_THROWS_AS(net.backward(ModelCache<double>{}, TensorD({2, 4})), StateError);
}

TEST_CASE("without the branch, gradients equal a hand-assembled single-branch graph") {
  Rng rng(19);
  AdliteConfig cfg = scaled(32);
  cfg.pcb_enabled = false;
  AdliteNet<double> net(cfg, rng);
  AdliteNet<double> copy = net;
  auto x = random_input(cfg, 3, rng);
  std::vector<std::uint32_t> y{2, 0, 1};

  auto fwd = net.forward(x, Mode::train);
  net.backward(*fwd.cache, softmax_cce(fwd.logits, y).grad_logits);

  // The same computation spelled out with the layer API.
  struct BlockCache {
    ConvCache<double> conv;
    MaxPoolCache pool;
    BatchNormCache<double> bn;
  };
  std::vector<BlockCache> bc;
  TensorD h = x;
  for (auto& b : copy.base_blocks()) {
    BlockCache c;
    auto [co, cc] = b.conv.forward(h, Activation::relu);
    auto [po, pc] = maxpool_forward(co);
    auto [bo, bnc] = b.bn.forward(po, Mode::train);
    c.conv = std::move(cc);
    c.pool = std::move(pc);
    c.bn = std::move(bnc);
    bc.push_back(std::move(c));
    h = std::move(bo);
  }
  std::vector<std::pair<DwscCache<double>, BatchNormCache<double>>> dc;
  for (auto& d : copy.dwsc_blocks()) {
    auto [o, c] = d.dwsc.forward(h);
    auto [bo, bnc] = d.bn.forward(o, Mode::train);
    dc.emplace_back(std::move(c), std::move(bnc));
    h = std::move(bo);
  }
  const Shape pre_gap = h.shape();
  auto [logits, dcache] = copy.dense().forward(reduce_mean_spatial(h));
  CHECK(logits == fwd.logits);
  auto dg = copy.dense().backward(dcache, softmax_cce(logits, y).grad_logits);
  CHECK(dg.weights == net.dense().weights().grad);
  CHECK(dg.bias == net.dense().bias().grad);
  TensorD g = gap_backward(dg.input, pre_gap);
  for (std::size_t i = dc.size(); i-- > 0;) {
    auto& d = copy.dwsc_blocks()[i];
    auto bg = d.bn.backward(dc[i].second, g);
    CHECK(bg.gamma == net.dwsc_blocks()[i].bn.gamma().grad);
    auto wg = d.dwsc.backward(dc[i].first, bg.input);
    CHECK(wg.pointwise_weights == net.dwsc_blocks()[i].dwsc.pointwise_weights().grad);
    CHECK(wg.depthwise_weights == net.dwsc_blocks()[i].dwsc.depthwise_weights().grad);
    g = std::move(wg.input);
  }
  for (std::size_t i = bc.size(); i-- > 0;) {
    auto& b = copy.base_blocks()[i];
    auto bg = b.bn.backward(bc[i].bn, g);
    CHECK(bg.beta == net.base_blocks()[i].bn.beta().grad);
    auto pg = maxpool_backward(bc[i].pool, bg.input);
    auto cg = b.conv.backward(bc[i].conv, pg);
    CHECK(cg.weights == net.base_blocks()[i].conv.weights().grad);
    CHECK(cg.bias == net.base_blocks()[i].conv.bias().grad);
    g = std::move(cg.input);
  }
}

TEST_CASE("whole-graph gradients match finite differences") {
  const auto check = oracle::whole_graph_gradcheck(2024, 200);
  std::size_t within = 0;
  for (double e : check.errors) within += e < 1e-4;
  CHECK(within >= 198);
  CHECK(check.max_error < 1e-4);
}

TEST_CASE("parameters come in graph order with unique names") {
  Rng rng(21);
  AdliteNet<float> net(AdliteConfig{}, rng);
  auto params = net.parameters();
  CHECK(params.front()->name == "block1.conv.weight");
  CHECK(params.back()->name == "dense.bias");
  std::set<std::string> names;
  for (auto* p : params) names.insert(p->name);
  CHECK(names.size() == params.size());
  CHECK(net.buffers().size() == 2 * (5 + 2 + 2));
}

TEST_CASE("global average pooling gradient matches finite differences") {
  for (const auto& r : oracle::gap_gradcheck()) {
    CAPTURE(r.name);
    CHECK(r.max_error < 1e-6);
  }
}
