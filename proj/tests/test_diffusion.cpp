#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "csg/diffusion.hpp"

namespace {

csg::DiffusionConfig cfg_of(int T, int c, csg::ScheduleKind kind = csg::ScheduleKind::Cosine) {
  csg::DiffusionConfig cfg;
  cfg.n_steps = T;
  cfg.n_states = c;
  cfg.schedule = kind;
  return cfg;
}

csg::DiscreteStructure random_structure(int L, int c, csg::Rng& rng) {
  csg::DiscreteStructure g(L, c);
  for (auto& s : g.node_states) s = static_cast<int>(rng.below(c));
  for (auto& s : g.edge_states_upper) s = static_cast<int>(rng.below(c));
  return g;
}

}  // namespace

TEST_CASE("schedule invariants") {
  for (auto kind : {csg::ScheduleKind::Cosine, csg::ScheduleKind::Linear}) {
    auto sched = csg::make_schedule(cfg_of(500, 2, kind));
    REQUIRE(sched.n_steps() == 500);
    CHECK(sched.alpha_at(1) <= 1.0);
    CHECK(sched.alpha_bar_at(1) == Catch::Approx(sched.alpha_at(1)).margin(1e-15));
    for (int t = 2; t <= 500; ++t) {
      CHECK(sched.alpha_at(t) <= sched.alpha_at(t - 1) + 1e-12);  // nonincreasing
      CHECK(std::abs(sched.alpha_bar_at(t) - sched.alpha_bar_at(t - 1) * sched.alpha_at(t)) <=
            1e-12);
    }
    CHECK(sched.alpha_at(500) <= 1e-3);
  }
}

TEST_CASE("cosine endpoint and linear closed form") {
  auto cosine = csg::make_schedule(cfg_of(500, 2, csg::ScheduleKind::Cosine));
  CHECK(cosine.alpha_bar_at(500) < 1e-3);

  auto linear = csg::make_schedule(cfg_of(2, 2, csg::ScheduleKind::Linear));
  CHECK(linear.alpha_at(1) == Catch::Approx(0.5));
  CHECK(linear.alpha_at(2) == Catch::Approx(0.0));
}

TEST_CASE("uniform transition kernel") {
  SECTION("alpha 1 is the identity") {
    auto q = csg::transition_matrix(1.0, 3);
    CHECK((q - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() <= 1e-15);
  }
  SECTION("alpha 0 is uniform") {
    auto q = csg::transition_matrix(0.0, 4);
    CHECK((q.array() - 0.25).abs().maxCoeff() <= 1e-15);
  }
  SECTION("alpha 0.6, c 2") {
    auto q = csg::transition_matrix(0.6, 2);
    CHECK(q(0, 0) == Catch::Approx(0.8));
    CHECK(q(0, 1) == Catch::Approx(0.2));
    CHECK(q(1, 0) == Catch::Approx(0.2));
    CHECK(q(1, 1) == Catch::Approx(0.8));
  }
  SECTION("rows sum to one and the kernel is symmetric") {
    for (double a : {0.0, 0.123, 0.77, 1.0}) {
      auto q = csg::transition_matrix(a, 5);
      for (int i = 0; i < 5; ++i) CHECK(q.row(i).sum() == Catch::Approx(1.0).margin(1e-12));
      CHECK((q - q.transpose()).cwiseAbs().maxCoeff() <= 1e-15);
    }
  }
}

TEST_CASE("cumulative kernel collapses to the closed form") {
  auto sched = csg::make_schedule(cfg_of(20, 3));
  SECTION("t=1 equals the single-step kernel") {
    CHECK((csg::cumulative_matrix(sched, 1, 3) - csg::transition_matrix(sched.alpha_at(1), 3))
              .cwiseAbs()
              .maxCoeff() <= 1e-15);
  }
  SECTION("literal product of ten kernels, c=3") {
    Eigen::MatrixXd prod = Eigen::MatrixXd::Identity(3, 3);
    for (int t = 1; t <= 10; ++t) prod = prod * csg::transition_matrix(sched.alpha_at(t), 3);
    CHECK((prod - csg::cumulative_matrix(sched, 10, 3)).cwiseAbs().maxCoeff() < 1e-12);
  }
  SECTION("t=T cosine is within 1e-3 of uniform") {
    auto full = csg::make_schedule(cfg_of(500, 3));
    auto q = csg::cumulative_matrix(full, 500, 3);
    CHECK((q.array() - 1.0 / 3.0).abs().maxCoeff() < 1e-3);
  }
  SECTION("t out of range") {
    CHECK_THROWS_AS(csg::cumulative_matrix(sched, 0, 3), csg::CsgError);
    CHECK_THROWS_AS(csg::cumulative_matrix(sched, 21, 3), csg::CsgError);
  }
}

TEST_CASE("posterior-forward consistency is a matrix identity") {
  auto sched = csg::make_schedule(cfg_of(50, 4));
  for (int t : {2, 17, 50})
    for (int c : {2, 3, 4}) {
      Eigen::MatrixXd lhs = csg::transition_matrix(sched.alpha_bar_at(t - 1), c) *
                            csg::transition_matrix(sched.alpha_at(t), c);
      Eigen::MatrixXd rhs = csg::cumulative_matrix(sched, t, c);
      CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("forward sampling") {
  csg::Rng rng(17);
  SECTION("identity cumulative kernel keeps the input") {
    csg::NoiseSchedule sched;
    sched.alpha = Eigen::Vector2d(1.0, 0.5);
    sched.alpha_bar = Eigen::Vector2d(1.0, 0.5);
    auto g0 = random_structure(4, 2, rng);
    auto gt = csg::forward_sample(g0, 1, sched, rng);
    CHECK(gt == g0);
  }
  SECTION("terminal step is uniform within 0.01 at 1e5 draws") {
    auto sched = csg::make_schedule(cfg_of(500, 2));
    csg::DiscreteStructure g0(2, 2);
    g0.node_states = {1, 0};
    int ones = 0;
    const int n = 100000;
    for (int k = 0; k < n; ++k) ones += csg::forward_sample(g0, 500, sched, rng).node_states[0];
    CHECK(static_cast<double>(ones) / n == Catch::Approx(0.5).margin(0.01));
  }
  SECTION("retention probability follows the closed-form row") {
    csg::NoiseSchedule sched;
    sched.alpha = Eigen::Vector2d(0.9, 8.0 / 9.0);
    sched.alpha_bar = Eigen::Vector2d(0.9, 0.8);  // alpha_bar_2 = 0.8
    csg::DiscreteStructure g0(1, 2);
    g0.node_states = {1};
    int stays = 0;
    const int n = 10000;
    for (int k = 0; k < n; ++k) stays += csg::forward_sample(g0, 2, sched, rng).node_states[0];
    CHECK(static_cast<double>(stays) / n == Catch::Approx(0.9).margin(0.01));
  }
}

TEST_CASE("marginal closure: stepwise chain matches the one-shot kernel") {
  // Chi-square over c=3 states after composing two manual steps.
  auto sched = csg::make_schedule(cfg_of(30, 3));
  const int t = 7;
  csg::DiscreteStructure g0(1, 3);
  g0.node_states = {2};
  csg::Rng rng(3);
  Eigen::Vector3d counts = Eigen::Vector3d::Zero();
  const int n = 100000;
  for (int k = 0; k < n; ++k)
    counts[csg::forward_sample(g0, t, sched, rng).node_states[0]] += 1.0;
  Eigen::Vector3d expected = csg::cumulative_matrix(sched, t, 3).row(2).transpose() * n;
  double chi2 = 0.0;
  for (int s = 0; s < 3; ++s) {
    double d = counts[s] - expected[s];
    chi2 += d * d / expected[s];
    CHECK(counts[s] / n == Catch::Approx(expected[s] / n).margin(0.01));
  }
  CHECK(chi2 < 20.0);  // dof 2, far beyond the 0.999 quantile
}

TEST_CASE("uniform limit in total variation") {
  for (auto kind : {csg::ScheduleKind::Cosine, csg::ScheduleKind::Linear}) {
    auto sched = csg::make_schedule(cfg_of(500, 2, kind));
    auto q = csg::cumulative_matrix(sched, 500, 2);
    double tv = 0.5 * (q.row(0).array() - 0.5).abs().sum();
    CHECK(tv < 1e-3);
  }
}

TEST_CASE("posterior against brute-force Bayes enumeration") {
  for (int c : {2, 3, 4}) {
    auto sched = csg::make_schedule(cfg_of(40, c));
    csg::Rng rng(100 + c);
    for (int rep = 0; rep < 200; ++rep) {
      int t = 2 + static_cast<int>(rng.below(39));
      int x_t = static_cast<int>(rng.below(c));
      int x_0 = static_cast<int>(rng.below(c));
      auto post = csg::posterior(x_t, x_0, t, sched, c);
      post.validate();

      // Independent route: q(x_t | x_{t-1}) q(x_{t-1} | x_0) normalized.
      Eigen::MatrixXd q_t = csg::transition_matrix(sched.alpha_at(t), c);
      Eigen::MatrixXd q_prev = csg::transition_matrix(sched.alpha_bar_at(t - 1), c);
      Eigen::VectorXd brute(c);
      for (int x = 0; x < c; ++x) brute[x] = q_t(x, x_t) * q_prev(x_0, x);
      brute /= brute.sum();
      CHECK((post.probs - brute).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("posterior limiting cases") {
  SECTION("identity step gives a point mass at x_t") {
    csg::NoiseSchedule sched;
    sched.alpha = Eigen::Vector2d(0.8, 1.0);
    sched.alpha_bar = Eigen::Vector2d(0.8, 0.8);
    auto post = csg::posterior(1, 0, 2, sched, 2);
    CHECK(post.probs[1] == Catch::Approx(1.0));
  }
  SECTION("vanishing history prior leaves only the step column") {
    csg::NoiseSchedule sched;
    sched.alpha = Eigen::Vector2d(1e-12, 0.7);
    sched.alpha_bar = Eigen::Vector2d(1e-12, 0.7e-12);
    auto post = csg::posterior(0, 1, 2, sched, 2);
    Eigen::MatrixXd q_t = csg::transition_matrix(0.7, 2);
    Eigen::VectorXd col = q_t.col(0) / q_t.col(0).sum();
    CHECK((post.probs - col).cwiseAbs().maxCoeff() <= 1e-6);
  }
  SECTION("t=1 is rejected") {
    auto sched = csg::make_schedule(cfg_of(10, 2));
    CHECK_THROWS_AS(csg::posterior(0, 0, 1, sched, 2), csg::CsgError);
  }
}

TEST_CASE("reverse step") {
  csg::Rng rng(55);
  SECTION("t=1 with a point-mass denoiser reproduces the prediction") {
    auto sched = csg::make_schedule(cfg_of(10, 2));
    csg::DiscreteStructure gt(3, 2);
    gt.node_states = {1, 0, 1};
    gt.edge_states_upper = {0, 1, 0};
    csg::DenoiserOutput probs;
    probs.node_probs = Eigen::MatrixXd::Zero(3, 2);
    probs.edge_probs = Eigen::MatrixXd::Zero(3, 2);
    csg::DiscreteStructure want(3, 2);
    want.node_states = {0, 1, 1};
    want.edge_states_upper = {1, 1, 0};
    for (int i = 0; i < 3; ++i) {
      probs.node_probs(i, want.node_states[static_cast<std::size_t>(i)]) = 1.0;
      probs.edge_probs(i, want.edge_states_upper[static_cast<std::size_t>(i)]) = 1.0;
    }
    auto out = csg::reverse_step(gt, 1, probs, sched, rng);
    CHECK(out == want);
  }
  SECTION("uniform prediction mixes the two posteriors evenly") {
    auto sched = csg::make_schedule(cfg_of(30, 2));
    const int t = 9;
    Eigen::VectorXd uniform = Eigen::VectorXd::Constant(2, 0.5);
    for (int x_t : {0, 1}) {
      Eigen::VectorXd got = csg::detail::reverse_entry_dist(x_t, uniform, t, sched);
      Eigen::VectorXd want = 0.5 * csg::posterior(x_t, 0, t, sched, 2).probs +
                             0.5 * csg::posterior(x_t, 1, t, sched, 2).probs;
      CHECK((got - want).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
  SECTION("an oracle denoiser drives the chain to its target") {
    auto cfg = cfg_of(50, 2);
    auto sched = csg::make_schedule(cfg);
    csg::DiscreteStructure target(3, 2);
    target.node_states = {1, 0, 1};
    target.edge_states_upper = {1, 1, 0};
    csg::DenoiserOutput oracle;
    oracle.node_probs = Eigen::MatrixXd::Zero(3, 2);
    oracle.edge_probs = Eigen::MatrixXd::Zero(3, 2);
    for (int i = 0; i < 3; ++i) {
      oracle.node_probs(i, target.node_states[static_cast<std::size_t>(i)]) = 1.0;
      oracle.edge_probs(i, target.edge_states_upper[static_cast<std::size_t>(i)]) = 1.0;
    }
    int hits = 0;
    for (int run = 0; run < 100; ++run) {
      auto traj = csg::sample_chain([&](const csg::DiscreteStructure&, int) { return oracle; }, 3,
                                    cfg, sched, 1000 + static_cast<std::uint64_t>(run));
      if (traj.final_structure == target) ++hits;
    }
    CHECK(hits >= 99);
  }
}

TEST_CASE("trajectory sampling bookkeeping") {
  auto cfg = cfg_of(25, 2);
  auto sched = csg::make_schedule(cfg);
  csg::Rng rng(8);
  csg::DenoiserOutput noisy;
  noisy.node_probs = Eigen::MatrixXd::Constant(4, 2, 0.5);
  noisy.edge_probs = Eigen::MatrixXd::Constant(6, 2, 0.5);
  auto denoiser = [&](const csg::DiscreteStructure&, int) { return noisy; };

  SECTION("storing every step keeps T states plus the endpoint") {
    std::vector<int> all;
    for (int t = 1; t <= 25; ++t) all.push_back(t);
    auto traj = csg::sample_chain(denoiser, 4, cfg, sched, 5, all);
    CHECK(traj.stored.size() == 25);
    traj.final_structure.validate();
  }
  SECTION("same seed, same trajectory") {
    auto a = csg::sample_chain(denoiser, 4, cfg, sched, 123, {1, 10, 20});
    auto b = csg::sample_chain(denoiser, 4, cfg, sched, 123, {1, 10, 20});
    CHECK(a.final_structure == b.final_structure);
    REQUIRE(a.stored.size() == b.stored.size());
    for (const auto& [t, g] : a.stored) CHECK(g == b.stored.at(t));
  }
  SECTION("outputs are always structurally valid") {
    for (std::uint64_t s = 0; s < 20; ++s) {
      auto traj = csg::sample_chain(denoiser, 4, cfg, sched, s);
      traj.final_structure.validate();
    }
  }
  SECTION("trajectory dump writes parseable JSON") {
    auto traj = csg::sample_chain(denoiser, 4, cfg, sched, 9, {5, 25});
    auto path = (std::filesystem::temp_directory_path() / "csg_traj.json").string();
    csg::write_trajectory(traj, path);
    std::ifstream in(path);
    auto j = nlohmann::json::parse(in);
    CHECK(j.at("seed").get<std::uint64_t>() == 9);
    CHECK(j.at("stored").size() == 2);
    auto final = csg::structure_from_json(j.at("final"));
    CHECK(final == traj.final_structure);
  }
}

TEST_CASE("forward sampling commutes with concept relabeling under coupling") {
  const int L = 5;
  csg::Rng rng(77);
  auto sched = csg::make_schedule(cfg_of(40, 2));
  auto g0 = random_structure(L, 2, rng);

  std::vector<int> perm = {3, 0, 4, 1, 2};
  auto permute = [&](const csg::DiscreteStructure& g) {
    csg::DiscreteStructure out(L, g.n_states);
    for (int l = 0; l < L; ++l)
      out.node_states[static_cast<std::size_t>(perm[static_cast<std::size_t>(l)])] =
          g.node_states[static_cast<std::size_t>(l)];
    for (int a = 0; a < L; ++a)
      for (int b = a + 1; b < L; ++b)
        out.set_edge(perm[static_cast<std::size_t>(a)], perm[static_cast<std::size_t>(b)],
                     g.edge(a, b));
    return out;
  };

  csg::EntryUniforms u = csg::EntryUniforms::draw(L, rng);
  csg::EntryUniforms pu;
  pu.node_u.resize(L);
  pu.edge_u.resize(csg::n_upper_pairs(L));
  for (int l = 0; l < L; ++l) pu.node_u[perm[static_cast<std::size_t>(l)]] = u.node_u[l];
  for (int a = 0; a < L; ++a)
    for (int b = a + 1; b < L; ++b) {
      int src = csg::pair_index(a, b, L);
      int dst = csg::pair_index(perm[static_cast<std::size_t>(a)], perm[static_cast<std::size_t>(b)], L);
      pu.edge_u[dst] = u.edge_u[src];
    }

  const int t = 13;
  auto direct = permute(csg::forward_sample_with(g0, t, sched, u));
  auto coupled = csg::forward_sample_with(permute(g0), t, sched, pu);
  CHECK(direct == coupled);
}
