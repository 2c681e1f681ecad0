#include "jepagrasp/gradsuite.hpp"

#include <functional>
#include <memory>

#include "jepagrasp/encoder.hpp"
#include "jepagrasp/grasphead.hpp"
#include "jepagrasp/layers.hpp"
#include "jepagrasp/pointops.hpp"
#include "jepagrasp/random.hpp"

namespace jepagrasp {

namespace {

using G = tc::Graph<double>;
using V = tc::Var<double>;
using P = tc::ParameterSet<double>;
using Builder = tc::LossBuilder;

tc::Tensor<double> random_tensor(tc::Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  tc::Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// Values bounded away from zero so kinks (relu, max) stay out of reach of h.
tc::Tensor<double> away_from_zero(tc::Shape shape, Rng& rng) {
  tc::Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.1, 1.0);
  return t;
}

// Contract a non-scalar output with fixed random weights.
V weigh(G& g, V y, std::uint64_t salt) {
  Rng rng(salt);
  return tc::sum(tc::mul(y, g.constant(random_tensor(y.shape(), rng))));
}

V p(G& g, const P& params, const char* name) { return g.parameter(params, name); }

using Case = std::function<Builder(P&, Rng&)>;

std::vector<std::pair<std::string, Case>> cases() {
  std::vector<std::pair<std::string, Case>> c;
  c.emplace_back("matmul", [](P& ps, Rng& r) -> Builder {
    ps.add("a", random_tensor({3, 4}, r));
    ps.add("b", random_tensor({4, 2}, r));
    return [&ps](G& g) { return weigh(g, tc::matmul(p(g, ps, "a"), p(g, ps, "b")), 1); };
  });
  c.emplace_back("add", [](P& ps, Rng& r) -> Builder {
    ps.add("a", random_tensor({3, 4}, r));
    ps.add("b", random_tensor({3, 4}, r));
    return [&ps](G& g) { return weigh(g, tc::add(p(g, ps, "a"), p(g, ps, "b")), 2); };
  });
  c.emplace_back("add_bias", [](P& ps, Rng& r) -> Builder {
    ps.add("a", random_tensor({3, 4}, r));
    ps.add("b", random_tensor({4}, r));
    return [&ps](G& g) { return weigh(g, tc::add(p(g, ps, "a"), p(g, ps, "b")), 3); };
  });
  c.emplace_back("sub", [](P& ps, Rng& r) -> Builder {
    ps.add("a", random_tensor({2, 5}, r));
    ps.add("b", random_tensor({2, 5}, r));
    return [&ps](G& g) { return weigh(g, tc::sub(p(g, ps, "a"), p(g, ps, "b")), 4); };
  });
  c.emplace_back("mul", [](P& ps, Rng& r) -> Builder {
    ps.add("a", random_tensor({2, 5}, r));
    ps.add("b", random_tensor({2, 5}, r));
    return [&ps](G& g) { return weigh(g, tc::mul(p(g, ps, "a"), p(g, ps, "b")), 5); };
  });
  c.emplace_back("scale", [](P& ps, Rng& r) -> Builder {
    ps.add("a", random_tensor({3, 3}, r));
    return [&ps](G& g) { return weigh(g, tc::scale(p(g, ps, "a"), 1.7), 6); };
  });
  c.emplace_back("affine_cols", [](P& ps, Rng& r) -> Builder {
    ps.add("a", random_tensor({2, 3}, r));
    return [&ps](G& g) {
      return weigh(g, tc::affine_cols(p(g, ps, "a"), std::vector<double>{0.5, -2.0, 1.5}, std::vector<double>{0.1, 0.0, -0.3}), 7);
    };
  });
  c.emplace_back("relu", [](P& ps, Rng& r) -> Builder {
    ps.add("a", away_from_zero({3, 4}, r));
    return [&ps](G& g) { return weigh(g, tc::relu(p(g, ps, "a")), 8); };
  });
  c.emplace_back("gelu", [](P& ps, Rng& r) -> Builder {
    ps.add("a", random_tensor({3, 4}, r, -3.0, 3.0));
    return [&ps](G& g) { return weigh(g, tc::gelu(p(g, ps, "a")), 9); };
  });
  c.emplace_back("tanh", [](P& ps, Rng& r) -> Builder {
    ps.add("a", random_tensor({3, 4}, r, -2.0, 2.0));
    return [&ps](G& g) { return weigh(g, tc::tanh(p(g, ps, "a")), 10); };
  });
  c.emplace_back("layernorm", [](P& ps, Rng& r) -> Builder {
    ps.add("x", random_tensor({3, 5}, r));
    ps.add("gamma", random_tensor({5}, r, 0.5, 1.5));
    ps.add("beta", random_tensor({5}, r));
    return [&ps](G& g) { return weigh(g, tc::layernorm(p(g, ps, "x"), p(g, ps, "gamma"), p(g, ps, "beta")), 11); };
  });
  c.emplace_back("softmax", [](P& ps, Rng& r) -> Builder {
    ps.add("a", random_tensor({3, 4}, r, -2.0, 2.0));
    return [&ps](G& g) { return weigh(g, tc::softmax(p(g, ps, "a")), 12); };
  });
  c.emplace_back("mean_over_axis0", [](P& ps, Rng& r) -> Builder {
    ps.add("a", random_tensor({4, 3}, r));
    return [&ps](G& g) { return weigh(g, tc::mean_over_axis(p(g, ps, "a"), 0), 13); };
  });
  c.emplace_back("mean_over_axis1", [](P& ps, Rng& r) -> Builder {
    ps.add("a", random_tensor({4, 3}, r));
    return [&ps](G& g) { return weigh(g, tc::mean_over_axis(p(g, ps, "a"), 1), 14); };
  });
  c.emplace_back("sum", [](P& ps, Rng& r) -> Builder {
    ps.add("a", random_tensor({2, 3}, r));
    return [&ps](G& g) { return tc::sum(p(g, ps, "a")); };
  });
  c.emplace_back("sum_squares", [](P& ps, Rng& r) -> Builder {
    ps.add("a", random_tensor({2, 3}, r));
    return [&ps](G& g) { return tc::sum_squares(p(g, ps, "a")); };
  });
  c.emplace_back("concat_rows", [](P& ps, Rng& r) -> Builder {
    ps.add("a", random_tensor({2, 3}, r));
    ps.add("b", random_tensor({1, 3}, r));
    return [&ps](G& g) { return weigh(g, tc::concat<double>({p(g, ps, "a"), p(g, ps, "b")}, 0), 15); };
  });
  c.emplace_back("concat_cols", [](P& ps, Rng& r) -> Builder {
    ps.add("a", random_tensor({2, 3}, r));
    ps.add("b", random_tensor({2, 2}, r));
    return [&ps](G& g) { return weigh(g, tc::concat<double>({p(g, ps, "a"), p(g, ps, "b")}, 1), 16); };
  });
  c.emplace_back("gather_rows", [](P& ps, Rng& r) -> Builder {
    ps.add("a", random_tensor({4, 3}, r));
    return [&ps](G& g) { return weigh(g, tc::gather_rows(p(g, ps, "a"), {2, 0, 2}), 17); };
  });
  c.emplace_back("slice_cols", [](P& ps, Rng& r) -> Builder {
    ps.add("a", random_tensor({3, 5}, r));
    return [&ps](G& g) { return weigh(g, tc::slice_cols(p(g, ps, "a"), 1, 3), 18); };
  });
  c.emplace_back("reshape", [](P& ps, Rng& r) -> Builder {
    ps.add("a", random_tensor({2, 6}, r));
    return [&ps](G& g) { return weigh(g, tc::reshape(p(g, ps, "a"), {4, 3}), 19); };
  });
  c.emplace_back("scaled_dot_attention", [](P& ps, Rng& r) -> Builder {
    ps.add("q", random_tensor({2, 4}, r));
    ps.add("k", random_tensor({3, 4}, r));
    ps.add("v", random_tensor({3, 4}, r));
    return [&ps](G& g) { return weigh(g, tc::scaled_dot_attention(p(g, ps, "q"), p(g, ps, "k"), p(g, ps, "v"), 1), 20); };
  });
  c.emplace_back("scaled_dot_attention_2heads", [](P& ps, Rng& r) -> Builder {
    ps.add("q", random_tensor({3, 4}, r));
    ps.add("k", random_tensor({3, 4}, r));
    ps.add("v", random_tensor({3, 4}, r));
    return [&ps](G& g) { return weigh(g, tc::scaled_dot_attention(p(g, ps, "q"), p(g, ps, "k"), p(g, ps, "v"), 2), 21); };
  });
  c.emplace_back("segment_max", [](P& ps, Rng& r) -> Builder {
    ps.add("a", random_tensor({6, 3}, r));
    return [&ps](G& g) { return weigh(g, tc::segment_max(p(g, ps, "a"), 3), 22); };
  });
  c.emplace_back("mse", [](P& ps, Rng& r) -> Builder {
    ps.add("a", random_tensor({2, 3}, r));
    ps.add("b", random_tensor({2, 3}, r));
    return [&ps](G& g) { return tc::mse(p(g, ps, "a"), p(g, ps, "b")); };
  });
  c.emplace_back("smooth_l1", [](P& ps, Rng& r) -> Builder {
    ps.add("a", random_tensor({2, 4}, r, -2.0, 2.0));
    ps.add("b", random_tensor({2, 4}, r, -2.0, 2.0));
    return [&ps](G& g) { return tc::smooth_l1(p(g, ps, "a"), p(g, ps, "b")); };
  });
  c.emplace_back("cross_entropy_from_logits", [](P& ps, Rng& r) -> Builder {
    ps.add("z", random_tensor({1, 4}, r, -2.0, 2.0));
    return [&ps](G& g) { return tc::cross_entropy_from_logits(p(g, ps, "z"), 2); };
  });
  c.emplace_back("linear_mse", [](P& ps, Rng& r) -> Builder {
    auto layer = std::make_shared<Linear<double>>();
    layer->init(ps, "fc", 3, 2, r);
    ps.get("fc.bias").value = random_tensor({2}, r);
    auto x = std::make_shared<tc::Tensor<double>>(random_tensor({4, 3}, r));
    auto y = std::make_shared<tc::Tensor<double>>(random_tensor({4, 2}, r));
    return [&ps, layer, x, y](G& g) { return tc::mse((*layer)(g, ps, g.constant(*x)), g.constant(*y)); };
  });
  c.emplace_back("patch_embedder", [](P& ps, Rng& r) -> Builder {
    TokenizerConfig cfg;
    cfg.group_size = 3;
    cfg.hidden_dim = 5;
    cfg.embed_dim = 4;
    auto emb = std::make_shared<PatchEmbedder<double>>();
    emb->init(ps, "patch", cfg, r);
    for (auto& prm : ps) {
      if (prm.name.ends_with(".bias")) prm.value = random_tensor(prm.value.shape(), r, -0.2, 0.2);
    }
    auto x = std::make_shared<tc::Tensor<double>>(random_tensor({6, 3}, r));
    return [&ps, emb, x](G& g) { return weigh(g, emb->forward(g, ps, g.constant(*x)), 23); };
  });
  c.emplace_back("transformer_block", [](P& ps, Rng& r) -> Builder {
    auto block = std::make_shared<TransformerBlock<double>>();
    block->init(ps, "block", 8, 16, r);
    auto x = std::make_shared<tc::Tensor<double>>(random_tensor({4, 8}, r));
    return [&ps, block, x](G& g) { return weigh(g, block->forward(g, ps, g.constant(*x), 2), 24); };
  });
  c.emplace_back("attention_pool", [](P& ps, Rng& r) -> Builder {
    auto pool = std::make_shared<AttentionPool<double>>();
    pool->init(ps, "pool", 4, r);
    ps.get("pool.query").value = random_tensor({1, 4}, r);
    ps.add("latents", random_tensor({5, 4}, r));
    return [&ps, pool](G& g) { return weigh(g, pool->forward(g, ps, p(g, ps, "latents")), 25); };
  });
  c.emplace_back("grasp_head_wta_loss", [](P& ps, Rng& r) -> Builder {
    HeadConfig hc;
    hc.num_hypotheses = 3;
    hc.hidden_dim = 8;
    hc.alpha = 0.1;
    auto head = std::make_shared<GraspHead<double>>(6, hc);
    head->init(ps, "head", r);
    for (auto& prm : ps) {
      if (prm.name.ends_with(".bias")) prm.value = random_tensor(prm.value.shape(), r, -0.2, 0.2);
    }
    ps.add("embedding", random_tensor({4, 6}, r));
    std::vector<HandPose> poses;
    auto truths = std::make_shared<std::vector<JointVector>>();
    for (int i = 0; i < 4; ++i) {
      poses.push_back(HandPose::canonical({r.uniform(-1, 1), r.uniform(-1, 1), r.uniform(-1, 1)},
                                          {r.uniform(-1, 1), r.uniform(-1, 1), r.uniform(-1, 1), r.uniform(-1, 1)}));
      JointVector j;
      for (auto& v : j) v = r.uniform(-1.2, 1.2);
      truths->push_back(j);
    }
    auto pose_t = std::make_shared<tc::Tensor<double>>(pose_tensor<double>(poses));
    return [&ps, head, truths, pose_t](G& g) {
      const auto out = head->forward(g, ps, p(g, ps, "embedding"), g.constant(*pose_t));
      return wta_batch_loss(out, *truths, 0.1);
    };
  });
  return c;
}

}  // namespace

std::vector<std::string> gradient_suite_cases() {
  std::vector<std::string> names;
  for (const auto& [name, fn] : cases()) names.push_back(name);
  return names;
}

std::vector<GradSuiteRow> run_gradient_suite(std::uint64_t seed, std::size_t points, double eps, double h) {
  std::vector<GradSuiteRow> rows;
  std::uint64_t stream = 0;
  for (const auto& [name, make] : cases()) {
    GradSuiteRow row;
    row.name = name;
    for (std::size_t k = 0; k < points; ++k) {
      Rng rng = Rng::derive(seed, ++stream);
      P params;
      const auto build = make(params, rng);
      const auto report = tc::grad_check(params, build, eps, h);
      ++row.points;
      row.checked += report.checked;
      row.max_error = std::max(row.max_error, report.max_error);
      row.passed = row.passed && report.passed();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace jepagrasp
