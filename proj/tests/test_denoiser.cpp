#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "csg/denoiser.hpp"

namespace {

csg::DenoiserConfig small_cfg() {
  csg::DenoiserConfig cfg;
  cfg.hidden_dim = 6;
  cfg.n_layers = 2;
  cfg.guidance_dim = 4;
  cfg.recency = 0.9;
  cfg.lambda_ve = 0.5;
  return cfg;
}

csg::DiscreteStructure random_structure(int L, int c, csg::Rng& rng) {
  csg::DiscreteStructure g(L, c);
  for (auto& s : g.node_states) s = static_cast<int>(rng.below(c));
  for (auto& s : g.edge_states_upper) s = static_cast<int>(rng.below(c));
  return g;
}

std::vector<csg::InteractionEvent> random_prefix(int len, int m, csg::Rng& rng) {
  std::vector<csg::InteractionEvent> prefix;
  for (int k = 0; k < len; ++k)
    prefix.push_back({static_cast<int>(rng.below(m)), rng.bernoulli(0.5) ? 1 : 0, k});
  return prefix;
}

}  // namespace

TEST_CASE("xavier initialization") {
  SECTION("deterministic under seed") {
    auto a = csg::init_params(small_cfg(), 4, 7, 2, 5);
    auto b = csg::init_params(small_cfg(), 4, 7, 2, 5);
    CHECK(csg::params_hash(a) == csg::params_hash(b));
  }
  SECTION("square 100x100 weight std is near sqrt(2/200)") {
    csg::Rng rng(3);
    auto w = csg::xavier_matrix(100, 100, rng);
    double mean = w.mean();
    double var = (w.array() - mean).square().mean();
    CHECK(std::sqrt(var) == Catch::Approx(std::sqrt(2.0 / 200.0)).epsilon(0.10));
  }
  SECTION("biases start at zero") {
    auto p = csg::init_params(small_cfg(), 4, 7, 2, 5);
    CHECK(p.node_head_b.cwiseAbs().maxCoeff() == 0.0);
    CHECK(p.layers[0].b_gproj.cwiseAbs().maxCoeff() == 0.0);
    CHECK(p.layers[1].b_edge1.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("graph features") {
  SECTION("empty structure at t=0") {
    csg::DiscreteStructure g(4, 2);
    auto f = csg::graph_features(g, 0, 100);
    CHECK(f == Eigen::Vector4d(0, 0, 0, 0));
  }
  SECTION("complete structure at t=T") {
    csg::DiscreteStructure g(4, 2);
    for (auto& s : g.node_states) s = 1;
    for (auto& s : g.edge_states_upper) s = 1;
    auto f = csg::graph_features(g, 100, 100);
    CHECK((f - Eigen::Vector4d(1, 1, 1, 1)).cwiseAbs().maxCoeff() <= 1e-15);
  }
  SECTION("hand-counted partial structure") {
    csg::DiscreteStructure g(4, 2);
    g.node_states = {1, 1, 0, 0};
    g.set_edge(0, 1, 1);  // one of six edges
    auto f = csg::graph_features(g, 25, 100);
    CHECK(f[0] == Catch::Approx(0.5));
    CHECK(f[1] == Catch::Approx(1.0 / 6.0));
    CHECK(f[2] == Catch::Approx((2.0 / 4.0) / 3.0));  // mean degree 0.5 over L-1
    CHECK(f[3] == Catch::Approx(0.25));
  }
}

TEST_CASE("guidance embedding") {
  auto cfg = small_cfg();
  auto p = csg::init_params(cfg, 4, 9, 2, 11);

  SECTION("single event with gamma 1 is the sum of its embeddings") {
    auto h = csg::guidance_embed(p, {{3, 1, 0}}, 1.0);
    Eigen::RowVectorXd want = p.q_embed.row(3) + p.r_embed.row(1);
    CHECK((h - want).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SECTION("two identical events average to the same vector") {
    auto one = csg::guidance_embed(p, {{2, 0, 0}}, 1.0);
    auto two = csg::guidance_embed(p, {{2, 0, 0}, {2, 0, 1}}, 1.0);
    CHECK((one - two).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SECTION("gamma 0.5 weights the newer event double") {
    std::vector<csg::InteractionEvent> prefix = {{1, 1, 0}, {4, 0, 1}};
    auto h = csg::guidance_embed(p, prefix, 0.5);
    Eigen::RowVectorXd v1 = p.q_embed.row(1) + p.r_embed.row(1);
    Eigen::RowVectorXd v2 = p.q_embed.row(4) + p.r_embed.row(0);
    Eigen::RowVectorXd want = (1.0 / 3.0) * v1 + (2.0 / 3.0) * v2;
    CHECK((h - want).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SECTION("empty prefix warns and returns zero") {
    std::vector<std::string> warnings;
    csg::set_warning_sink([&](const std::string& w) { warnings.push_back(w); });
    auto h = csg::guidance_embed(p, {}, 0.9);
    csg::set_warning_sink(nullptr);
    CHECK(h.cwiseAbs().maxCoeff() == 0.0);
    // The warning fires once per process; a second call stays quiet.
    csg::guidance_embed(p, {}, 0.9);
  }
}

TEST_CASE("denoise output forms valid distributions") {
  auto cfg = small_cfg();
  auto p = csg::init_params(cfg, 5, 9, 2, 21);
  csg::Rng rng(2);
  auto gt = random_structure(5, 2, rng);
  auto guide = csg::guidance_embed(p, random_prefix(6, 9, rng), cfg.recency);
  auto out = csg::denoise(p, gt, 7, 40, guide);
  REQUIRE(out.node_probs.rows() == 5);
  REQUIRE(out.edge_probs.rows() == 10);
  for (int i = 0; i < out.node_probs.rows(); ++i)
    CHECK(out.node_probs.row(i).sum() == Catch::Approx(1.0).margin(1e-9));
  for (int i = 0; i < out.edge_probs.rows(); ++i)
    CHECK(out.edge_probs.row(i).sum() == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("zeroed heads emit uniform rows") {
  auto cfg = small_cfg();
  auto p = csg::init_params(cfg, 4, 9, 2, 31);
  p.node_head_w.setZero();
  p.node_head_b.setZero();
  p.edge_head_w.setZero();
  p.edge_head_b.setZero();
  csg::Rng rng(3);
  auto gt = random_structure(4, 2, rng);
  auto out = csg::denoise(p, gt, 3, 40, Eigen::RowVectorXd::Zero(cfg.guidance_dim));
  CHECK((out.node_probs.array() - 0.5).abs().maxCoeff() <= 1e-12);
  CHECK((out.edge_probs.array() - 0.5).abs().maxCoeff() <= 1e-12);
}

TEST_CASE("denoise is equivariant to concept relabeling with fixed guidance") {
  const int L = 5;
  auto cfg = small_cfg();
  auto p = csg::init_params(cfg, L, 9, 2, 41);
  csg::Rng rng(4);
  auto gt = random_structure(L, 2, rng);
  Eigen::RowVectorXd guide = Eigen::RowVectorXd::Random(cfg.guidance_dim);

  std::vector<int> perm = {2, 4, 0, 3, 1};
  csg::DiscreteStructure permuted(L, 2);
  for (int l = 0; l < L; ++l)
    permuted.node_states[static_cast<std::size_t>(perm[static_cast<std::size_t>(l)])] =
        gt.node_states[static_cast<std::size_t>(l)];
  for (int a = 0; a < L; ++a)
    for (int b = a + 1; b < L; ++b)
      permuted.set_edge(perm[static_cast<std::size_t>(a)], perm[static_cast<std::size_t>(b)],
                        gt.edge(a, b));

  auto base = csg::denoise(p, gt, 11, 40, guide);
  auto moved = csg::denoise(p, permuted, 11, 40, guide);
  for (int l = 0; l < L; ++l)
    CHECK((base.node_probs.row(l) - moved.node_probs.row(perm[static_cast<std::size_t>(l)]))
              .cwiseAbs()
              .maxCoeff() <= 1e-10);
  for (int a = 0; a < L; ++a)
    for (int b = a + 1; b < L; ++b) {
      int src = csg::pair_index(a, b, L);
      int dst = csg::pair_index(perm[static_cast<std::size_t>(a)],
                                perm[static_cast<std::size_t>(b)], L);
      CHECK((base.edge_probs.row(src) - moved.edge_probs.row(dst)).cwiseAbs().maxCoeff() <= 1e-10);
    }
}

TEST_CASE("loss values") {
  csg::DiscreteStructure g0(3, 2);
  g0.node_states = {1, 0, 1};
  g0.edge_states_upper = {0, 1, 0};

  SECTION("one-hot on the truth is zero loss") {
    csg::DenoiserOutput out;
    out.node_probs = Eigen::MatrixXd::Zero(3, 2);
    out.edge_probs = Eigen::MatrixXd::Zero(3, 2);
    for (int i = 0; i < 3; ++i) {
      out.node_probs(i, g0.node_states[static_cast<std::size_t>(i)]) = 1.0;
      out.edge_probs(i, g0.edge_states_upper[static_cast<std::size_t>(i)]) = 1.0;
    }
    CHECK(csg::loss(out, g0, 0.5) == 0.0);
  }
  SECTION("uniform output gives ln2 * (1 + lambda)") {
    csg::DenoiserOutput out;
    out.node_probs = Eigen::MatrixXd::Constant(3, 2, 0.5);
    out.edge_probs = Eigen::MatrixXd::Constant(3, 2, 0.5);
    for (double lambda : {0.25, 0.5, 1.0})
      CHECK(csg::loss(out, g0, lambda) ==
            Catch::Approx(std::log(2.0) * (1.0 + lambda)).margin(1e-12));
  }
  SECTION("random case matches the independent double-loop oracle") {
    csg::Rng rng(5);
    csg::DenoiserOutput out;
    out.node_probs = Eigen::MatrixXd::Zero(3, 2);
    out.edge_probs = Eigen::MatrixXd::Zero(3, 2);
    for (int i = 0; i < 3; ++i) {
      double a = 0.05 + 0.9 * rng.u01();
      out.node_probs(i, 0) = a;
      out.node_probs(i, 1) = 1 - a;
      double b = 0.05 + 0.9 * rng.u01();
      out.edge_probs(i, 0) = b;
      out.edge_probs(i, 1) = 1 - b;
    }
    double naive_nodes = 0.0, naive_edges = 0.0;
    for (int i = 0; i < 3; ++i) {
      naive_nodes -= std::log(out.node_probs(i, g0.node_states[static_cast<std::size_t>(i)]));
      naive_edges -= std::log(out.edge_probs(i, g0.edge_states_upper[static_cast<std::size_t>(i)]));
    }
    double naive = naive_nodes / 3.0 + 0.7 * naive_edges / 3.0;
    CHECK(csg::loss(out, g0, 0.7) == Catch::Approx(naive).margin(1e-10));
  }
  SECTION("loss is strictly positive off the one-hot corner") {
    auto cfg = small_cfg();
    auto p = csg::init_params(cfg, 3, 5, 2, 6);
    csg::Rng rng(6);
    auto out = csg::denoise(p, g0, 2, 10, Eigen::RowVectorXd::Zero(cfg.guidance_dim));
    CHECK(csg::loss(out, g0, 0.5) > 0.0);
  }
}

TEST_CASE("analytic gradients agree with central finite differences") {
  auto cfg = small_cfg();
  const int L = 3, c = 2, M = 5, T = 12;
  auto params = csg::init_params(cfg, L, M, c, 7);
  csg::Rng rng(8);

  auto g0a = random_structure(L, c, rng);
  auto gta = random_structure(L, c, rng);
  auto g0b = random_structure(L, c, rng);
  auto gtb = random_structure(L, c, rng);
  auto prefix_a = random_prefix(4, M, rng);
  auto prefix_b = random_prefix(2, M, rng);
  std::vector<csg::GradItem> batch = {{&g0a, &gta, 3, &prefix_a}, {&g0b, &gtb, 9, &prefix_b}};

  auto analytic = csg::grad(params, cfg, T, batch);

  auto batch_loss = [&]() {
    double total = 0.0;
    for (const auto& item : batch) {
      auto guide = csg::guidance_embed(params, *item.prefix, cfg.recency);
      auto out = csg::denoise(params, *item.gt, item.t, T, guide);
      total += csg::loss(out, *item.g0, cfg.lambda_ve) / batch.size();
    }
    return total;
  };

  const double h = 1e-5;
  auto analytic_refs = csg::collect_params(analytic.grads);
  auto param_refs = csg::collect_params(params);
  int checked = 0;
  csg::Rng pick(9);
  for (std::size_t a = 0; a < param_refs.size(); ++a) {
    Eigen::MatrixXd& mat = *param_refs[a].mat;
    const int n_probe = std::min<int>(4, static_cast<int>(mat.size()));
    for (int probe = 0; probe < n_probe; ++probe) {
      int idx = static_cast<int>(pick.below(static_cast<std::uint64_t>(mat.size())));
      int i = idx % static_cast<int>(mat.rows());
      int j = idx / static_cast<int>(mat.rows());
      double saved = mat(i, j);
      mat(i, j) = saved + h;
      double up = batch_loss();
      mat(i, j) = saved - h;
      double down = batch_loss();
      mat(i, j) = saved;
      double numeric = (up - down) / (2.0 * h);
      double got = (*analytic_refs[a].mat)(i, j);
      double denom = std::max({std::abs(numeric), std::abs(got), 1e-6});
      INFO(param_refs[a].name << " (" << i << "," << j << ")");
      CHECK(std::abs(got - numeric) / denom < 1e-4);
      ++checked;
    }
  }
  CHECK(checked >= 100);
}

TEST_CASE("gradient batch semantics") {
  auto cfg = small_cfg();
  const int L = 3, M = 5, T = 10;
  auto params = csg::init_params(cfg, L, M, 2, 17);
  csg::Rng rng(18);
  auto g0 = random_structure(L, 2, rng);
  auto gt = random_structure(L, 2, rng);
  auto prefix = random_prefix(3, M, rng);

  std::vector<csg::GradItem> once = {{&g0, &gt, 4, &prefix}};
  std::vector<csg::GradItem> twice = {{&g0, &gt, 4, &prefix}, {&g0, &gt, 4, &prefix}};
  auto a = csg::grad(params, cfg, T, once);
  auto b = csg::grad(params, cfg, T, twice);
  CHECK(a.loss == Catch::Approx(b.loss).margin(1e-12));
  auto ra = csg::collect_params(a.grads);
  auto rb = csg::collect_params(b.grads);
  for (std::size_t i = 0; i < ra.size(); ++i)
    CHECK((*ra[i].mat - *rb[i].mat).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("adamw update rule") {
  csg::AdamWHyper hyper;
  hyper.lr = 0.01;

  SECTION("zero gradient and zero decay leave parameters alone") {
    Eigen::MatrixXd p = Eigen::MatrixXd::Constant(2, 2, 1.5);
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(2, 2);
    std::vector<csg::ParamRef> params = {{"p", &p, true}};
    std::vector<csg::ParamRef> grads = {{"p", &g, true}};
    auto st = csg::OptimizerState::init(params);
    csg::adamw_step(params, grads, st, hyper);
    CHECK((p.array() - 1.5).abs().maxCoeff() <= 1e-15);
  }
  SECTION("first step moves by about -lr * sign(g)") {
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(1, 2);
    Eigen::MatrixXd g(1, 2);
    g << 3.0, -0.2;
    std::vector<csg::ParamRef> params = {{"p", &p, true}};
    std::vector<csg::ParamRef> grads = {{"p", &g, true}};
    auto st = csg::OptimizerState::init(params);
    csg::adamw_step(params, grads, st, hyper);
    CHECK(p(0, 0) == Catch::Approx(-0.01).epsilon(1e-4));
    CHECK(p(0, 1) == Catch::Approx(0.01).epsilon(1e-3));
  }
  SECTION("decay-only step shrinks multiplicatively, skipping no-decay arrays") {
    hyper.weight_decay = 0.1;
    Eigen::MatrixXd w = Eigen::MatrixXd::Constant(1, 1, 2.0);
    Eigen::MatrixXd b = Eigen::MatrixXd::Constant(1, 1, 2.0);
    Eigen::MatrixXd zw = Eigen::MatrixXd::Zero(1, 1), zb = Eigen::MatrixXd::Zero(1, 1);
    std::vector<csg::ParamRef> params = {{"w", &w, true}, {"b", &b, false}};
    std::vector<csg::ParamRef> grads = {{"w", &zw, true}, {"b", &zb, false}};
    auto st = csg::OptimizerState::init(params);
    csg::adamw_step(params, grads, st, hyper);
    CHECK(w(0, 0) == Catch::Approx(2.0 * (1.0 - 0.01 * 0.1)).margin(1e-12));
    CHECK(b(0, 0) == Catch::Approx(2.0).margin(1e-15));
  }
}

TEST_CASE("checkpoint round trip and validation") {
  auto cfg = small_cfg();
  auto p = csg::init_params(cfg, 4, 6, 2, 51);
  auto dir = std::filesystem::temp_directory_path();
  auto path = (dir / "csg_ckpt.json").string();

  SECTION("save, load, denoise bitwise") {
    csg::save_checkpoint(p, path);
    auto q = csg::load_checkpoint(path);
    csg::Rng rng(1);
    auto gt = random_structure(4, 2, rng);
    Eigen::RowVectorXd guide = Eigen::RowVectorXd::Random(cfg.guidance_dim);
    auto a = csg::denoise(p, gt, 5, 20, guide);
    auto b = csg::denoise(q, gt, 5, 20, guide);
    CHECK(a.node_probs == b.node_probs);
    CHECK(a.edge_probs == b.edge_probs);
  }
  SECTION("optimizer state round trips") {
    auto refs = csg::collect_params(p);
    auto st = csg::OptimizerState::init(refs);
    st.step = 7;
    st.m[0].setConstant(0.25);
    csg::save_checkpoint(p, path, &st);
    csg::OptimizerState st2;
    csg::load_checkpoint(path, &st2);
    CHECK(st2.step == 7);
    CHECK((st2.m[0].array() - 0.25).abs().maxCoeff() <= 1e-15);
  }
  SECTION("corrupted shape names the array") {
    csg::save_checkpoint(p, path);
    std::ifstream in(path);
    auto j = nlohmann::json::parse(in);
    in.close();
    j["arrays"]["node_embed"]["shape"] = {3, 99};
    std::ofstream out(path);
    out << j.dump();
    out.close();
    CHECK_THROWS_WITH(csg::load_checkpoint(path),
                      Catch::Matchers::ContainsSubstring("node_embed"));
  }
  SECTION("checkpoint for a different concept count is rejected") {
    csg::save_checkpoint(p, path);
    CHECK_THROWS_WITH(csg::load_checkpoint(path, nullptr, 9),
                      Catch::Matchers::ContainsSubstring("incompatible"));
  }
  SECTION("version mismatch is rejected") {
    csg::save_checkpoint(p, path);
    std::ifstream in(path);
    auto j = nlohmann::json::parse(in);
    in.close();
    j["format_version"] = 999;
    std::ofstream out(path);
    out << j.dump();
    out.close();
    CHECK_THROWS_WITH(csg::load_checkpoint(path),
                      Catch::Matchers::ContainsSubstring("format_version"));
  }
  SECTION("truncated file is rejected") {
    csg::save_checkpoint(p, path);
    auto text = [&] {
      std::ifstream in(path);
      return std::string(std::istreambuf_iterator<char>(in), {});
    }();
    std::ofstream out(path);
    out << text.substr(0, text.size() / 2);
    out.close();
    CHECK_THROWS_WITH(csg::load_checkpoint(path), Catch::Matchers::ContainsSubstring("truncated"));
  }
}
