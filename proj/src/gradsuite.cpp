#include "eeggaze/gradsuite.hpp"

#include <algorithm>
#include <functional>

#include "eeggaze/gradcheck.hpp"
#include "eeggaze/nn.hpp"
#include "eeggaze/ops.hpp"

namespace eeggaze {

namespace {

using TD = Tensor<double>;

TD random(Shape shape, RngStream& rng, double scale = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.normal() * scale;
  return TD(std::move(shape), std::move(v));
}

// Random projection to a scalar so every output coordinate matters.
TD project(const TD& y, RngStream& rng) { return sum_all(mul(y, random(y.shape(), rng))); }

template <typename Layer>
std::vector<TD> params_of(const Layer& layer) {
  nn::ParamList<double> ps;
  layer.collect("", ps);
  std::vector<TD> out;
  for (auto& p : ps) out.push_back(p.tensor);
  return out;
}

void randomize(std::vector<TD>& ts, RngStream& rng, double scale) {
  for (auto& t : ts)
    for (auto& v : t.values_mut()) v = rng.normal() * scale;
}

using Check = std::function<GradCheckResult(RngStream&, double)>;

std::vector<std::pair<std::string, Check>> checks() {
  std::vector<std::pair<std::string, Check>> c;
  auto unary = [](std::function<TD(const TD&)> op, double shift = 0.0) {
    return [op, shift](RngStream& rng, double eps) {
      auto x = random({3, 4}, rng);
      for (auto& v : x.values_mut()) v += shift;
      RngStream w = rng.fork(1);
      return grad_check([&] { RngStream r = w; return project(op(x), r); }, {x}, eps);
    };
  };
  auto binary = [](std::function<TD(const TD&, const TD&)> op, Shape sa, Shape sb, double shift_b = 0.0) {
    return [op, sa, sb, shift_b](RngStream& rng, double eps) {
      auto a = random(sa, rng), b = random(sb, rng);
      for (auto& v : b.values_mut()) v = shift_b > 0 ? shift_b + std::abs(v) : v;
      RngStream w = rng.fork(1);
      return grad_check([&] { RngStream r = w; return project(op(a, b), r); }, {a, b}, eps);
    };
  };
  c.emplace_back("add (broadcast)", binary([](const TD& a, const TD& b) { return add(a, b); }, {3, 4}, {4}));
  c.emplace_back("sub (broadcast)", binary([](const TD& a, const TD& b) { return sub(a, b); }, {2, 3, 4}, {3, 1}));
  c.emplace_back("mul (broadcast)", binary([](const TD& a, const TD& b) { return mul(a, b); }, {3, 4}, {3, 1}));
  c.emplace_back("div", binary([](const TD& a, const TD& b) { return div(a, b); }, {3, 4}, {3, 4}, 0.5));
  c.emplace_back("add_scalar", unary([](const TD& x) { return add_scalar(x, 2.5); }));
  c.emplace_back("mul_scalar", unary([](const TD& x) { return mul_scalar(x, -1.5); }));
  c.emplace_back("neg", unary([](const TD& x) { return neg(x); }));
  c.emplace_back("exp", unary([](const TD& x) { return eeggaze::exp(x); }));
  c.emplace_back("sqrt", unary([](const TD& x) { return eeggaze::sqrt(square(x)) ; }, 0.0));
  c.emplace_back("gelu", unary([](const TD& x) { return gelu(x); }));
  c.emplace_back("relu", unary([](const TD& x) { return relu(x); }));
  c.emplace_back("square", unary([](const TD& x) { return square(x); }));
  c.emplace_back("sum axes", unary([](const TD& x) { return sum(x, {1}, true); }));
  c.emplace_back("mean axes", unary([](const TD& x) { return mean(x, {0}); }));
  c.emplace_back("max axes", unary([](const TD& x) { return eeggaze::max(x, {1}); }));
  c.emplace_back("mean_all", unary([](const TD& x) { return mean_all(x); }));
  c.emplace_back("softmax", unary([](const TD& x) { return softmax(x, -1); }));
  c.emplace_back("matmul", binary([](const TD& a, const TD& b) { return matmul(a, b); }, {3, 5}, {5, 2}));
  c.emplace_back("bmm (transposed)",
                 binary([](const TD& a, const TD& b) { return bmm(a, b, true, true); }, {2, 5, 3}, {2, 4, 5}));
  c.emplace_back("conv2d (stride, pad, groups)", [](RngStream& rng, double eps) {
    auto x = random({2, 4, 5, 6}, rng), k = random({6, 2, 3, 2}, rng), b = random({6}, rng);
    RngStream w = rng.fork(1);
    return grad_check(
        [&] {
          RngStream r = w;
          return project(conv2d(x, k, b, Conv2dOptions{{2, 1}, {1, 1}, 2}), r);
        },
        {x, k, b}, eps);
  });
  c.emplace_back("pad_zero", unary([](const TD& x) { return pad_zero(x, 1, 2, 1); }));
  c.emplace_back("reshape/permute", unary([](const TD& x) { return permute(reshape(x, Shape{2, 2, 3}), {2, 0, 1}); }));
  c.emplace_back("concat", binary([](const TD& a, const TD& b) { return concat(std::vector<TD>{a, b}, 1); },
                                  {3, 2}, {3, 4}));
  c.emplace_back("slice", unary([](const TD& x) { return slice(x, 1, 1, 2); }));
  c.emplace_back("index_select", unary([](const TD& x) {
                   return index_select(x, 1, std::vector<std::size_t>{3, 0, 0, 2});
                 }));

  c.emplace_back("linear layer", [](RngStream& rng, double eps) {
    nn::Linear<double> l(4, 3, rng);
    auto ps = params_of(l);
    randomize(ps, rng, 0.5);
    auto x = random({5, 4}, rng);
    ps.push_back(x);
    RngStream w = rng.fork(1);
    return grad_check([&] { RngStream r = w; return project(l.forward(x), r); }, ps, eps);
  });
  c.emplace_back("batchnorm2d (training)", [](RngStream& rng, double eps) {
    nn::BatchNorm2d<double> bn(2);
    auto ps = params_of(bn);
    randomize(ps, rng, 1.0);
    auto x = random({3, 2, 2, 3}, rng);
    ps.push_back(x);
    RngStream w = rng.fork(1);
    return grad_check([&] { RngStream r = w; return project(bn.forward(x, true), r); }, ps, eps);
  });
  c.emplace_back("layernorm", [](RngStream& rng, double eps) {
    nn::LayerNorm<double> ln(6);
    auto ps = params_of(ln);
    randomize(ps, rng, 1.0);
    auto x = random({2, 3, 6}, rng);
    ps.push_back(x);
    RngStream w = rng.fork(1);
    return grad_check([&] { RngStream r = w; return project(ln.forward(x), r); }, ps, eps);
  });
  c.emplace_back("multi-head attention", [](RngStream& rng, double eps) {
    nn::MultiHeadAttention<double> att(4, 2, rng);
    auto ps = params_of(att);
    randomize(ps, rng, 0.5);
    auto x = random({2, 3, 4}, rng);
    ps.push_back(x);
    RngStream w = rng.fork(1);
    return grad_check([&] { RngStream r = w; return project(att.forward(x), r); }, ps, eps);
  });
  c.emplace_back("transformer block", [](RngStream& rng, double eps) {
    nn::TransformerBlock<double> blk(4, 2, 8, 0.0, rng);
    auto ps = params_of(blk);
    randomize(ps, rng, 0.5);
    auto x = random({2, 3, 4}, rng);
    ps.push_back(x);
    RngStream w = rng.fork(1), drop = rng.fork(2);
    return grad_check([&] { RngStream r = w; return project(blk.forward(x, false, drop), r); }, ps, eps);
  });
  c.emplace_back("embedding block", [](RngStream& rng, double eps) {
    nn::EmbeddingBlock<double> emb(3, 4, rng);
    auto ps = params_of(emb);
    randomize(ps, rng, 0.5);
    auto x = random({2, 3, 4}, rng);
    ps.push_back(x);
    RngStream w = rng.fork(1);
    return grad_check([&] { RngStream r = w; return project(emb.forward(x), r); }, ps, eps);
  });
  c.emplace_back("dropout (fixed mask)", [](RngStream& rng, double eps) {
    auto x = random({4, 5}, rng);
    RngStream mask = rng.fork(2), w = rng.fork(1);
    return grad_check(
        [&] {
          RngStream m = mask, r = w;
          return project(dropout(x, 0.3, true, m), r);
        },
        {x}, eps);
  });
  c.emplace_back("end-to-end tiny model", [](RngStream& rng, double eps) {
    auto model = build_model<double>(gradcheck_tiny_config(), rng.fork(3));
    model.set_training(false);
    auto ps0 = model.parameters();
    std::vector<TD> ps;
    for (auto& p : ps0) ps.push_back(p.tensor);
    auto x = random({2, 1, 4, 32}, rng);
    ps.push_back(x);
    RngStream w = rng.fork(1);
    return grad_check([&] { RngStream r = w; return project(model.forward(x), r); }, ps, eps);
  });
  return c;
}

}  // namespace

ModelConfig gradcheck_tiny_config() {
  ModelConfig c;
  c.channels = 4;
  c.timepoints = 32;
  c.padded_timepoints = 32;
  c.temporal_filters = 2;
  c.temporal_kernel = 8;
  c.temporal_stride = 8;
  c.spatial_kernel_height = 4;
  c.spatial_out = 4;
  c.embed_dim = 4;
  c.vit_depth = 1;
  c.vit_heads = 2;
  c.vit_mlp_dim = 8;
  c.head_hidden = {4, 6};
  return c;
}

std::vector<GradSuiteEntry> run_gradient_suite(std::size_t seeds, double eps) {
  if (seeds == 0) throw ConfigError("gradient suite needs at least one seed");
  std::vector<GradSuiteEntry> out;
  for (auto& [name, check] : checks()) {
    GradSuiteEntry e{name, 0.0, seeds, 0};
    for (std::size_t s = 0; s < seeds; ++s) {
      RngStream rng = RngStream(0x9c4ec).fork(s);
      const auto r = check(rng, eps);
      e.max_relative_error = std::max(e.max_relative_error, r.max_relative_error);
      e.coordinates += r.coordinates;
    }
    out.push_back(e);
  }
  return out;
}

}  // namespace eeggaze
