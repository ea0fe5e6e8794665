#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "csg/simulate.hpp"

namespace {

// Five-question fixture over two concepts (0 = sine-like, 1 = cosine-like):
// q0, q1, q4 test concept 0 alone; q2, q3 test both with equal weight.
// Responses: q0 right, q1 right, q2 right, q3 wrong, q4 wrong.
csg::QMatrix fixture_qm() {
  csg::QMatrix qm;
  qm.weights = Eigen::MatrixXd::Zero(5, 2);
  qm.weights(0, 0) = 1.0;
  qm.weights(1, 0) = 1.0;
  qm.weights(2, 0) = 0.5;
  qm.weights(2, 1) = 0.5;
  qm.weights(3, 0) = 0.5;
  qm.weights(3, 1) = 0.5;
  qm.weights(4, 0) = 1.0;
  return qm;
}

std::vector<csg::InteractionEvent> fixture_prefix() {
  return {{0, 1, 0}, {1, 1, 1}, {2, 1, 2}, {3, 0, 3}, {4, 0, 4}};
}

// Literal forms of the evidence ratios, keeping the 1/|T| factors that the
// implementation cancels.
double literal_concept(int l, const std::vector<csg::InteractionEvent>& prefix,
                       const csg::QMatrix& qm) {
  const double inv_t = 1.0 / static_cast<double>(prefix.size());
  double num = 0.0, den = 0.0;
  for (const auto& e : prefix) {
    num += qm.weight(e.question_id, l) * e.response * inv_t;
    den += qm.weight(e.question_id, l) * inv_t;
  }
  return num / den;
}

double literal_relation(int a, int b, const std::vector<csg::InteractionEvent>& prefix,
                        const csg::QMatrix& qm) {
  const double inv_t = 1.0 / static_cast<double>(prefix.size());
  double num = 0.0, den = 0.0;
  for (const auto& e : prefix) {
    double wa = qm.weight(e.question_id, a), wb = qm.weight(e.question_id, b);
    double gate = (wa > 0.0 && wb > 0.0) ? 1.0 : 0.0;
    num += gate * (wa + wb) * e.response * inv_t;
    den += gate * (wa + wb) * inv_t;
  }
  return num / den;
}

}  // namespace

TEST_CASE("worked five-question example") {
  auto qm = fixture_qm();
  auto prefix = fixture_prefix();
  auto v = csg::concept_construction(0, prefix, qm);
  REQUIRE(v.has_value());
  CHECK(*v == 0.625);  // 2.5 / 4.0, exact in doubles
  auto e = csg::relation_construction(0, 1, prefix, qm);
  REQUIRE(e.has_value());
  CHECK(*e == 0.5);

  SECTION("cancelled ratio equals the literal 1/|T| form") {
    CHECK(std::abs(*v - literal_concept(0, prefix, qm)) <= 1e-15);
    CHECK(std::abs(*e - literal_relation(0, 1, prefix, qm)) <= 1e-15);
  }
}

TEST_CASE("concept evidence edge cases") {
  auto qm = fixture_qm();
  SECTION("all correct on a tested concept gives 1") {
    std::vector<csg::InteractionEvent> prefix = {{0, 1, 0}, {2, 1, 1}};
    CHECK(*csg::concept_construction(0, prefix, qm) == 1.0);
  }
  SECTION("never-tagged concept is untested") {
    std::vector<csg::InteractionEvent> prefix = {{0, 1, 0}, {1, 0, 1}};
    CHECK_FALSE(csg::concept_construction(1, prefix, qm).has_value());
  }
}

TEST_CASE("relation evidence edge cases") {
  auto qm = fixture_qm();
  SECTION("self relation is an error") {
    auto prefix = fixture_prefix();
    CHECK_THROWS_AS(csg::relation_construction(1, 1, prefix, qm), csg::CsgError);
  }
  SECTION("one correct co-tested question gives 1") {
    std::vector<csg::InteractionEvent> prefix = {{2, 1, 0}};
    CHECK(*csg::relation_construction(0, 1, prefix, qm) == 1.0);
  }
  SECTION("never co-tested pair is untested") {
    std::vector<csg::InteractionEvent> prefix = {{0, 1, 0}, {4, 1, 1}};
    CHECK_FALSE(csg::relation_construction(0, 1, prefix, qm).has_value());
  }
}

TEST_CASE("simulate_structure composes the marginals") {
  auto qm = fixture_qm();
  auto cs = csg::simulate_structure(fixture_prefix(), qm);
  CHECK(cs.node_marginals[0] == 0.625);
  CHECK(cs.edge(0, 1) == 0.5);
  CHECK(cs.edge(1, 0) == 0.5);
  cs.validate();

  SECTION("single correct single-concept event") {
    std::vector<csg::InteractionEvent> prefix = {{0, 1, 0}};
    auto cs1 = csg::simulate_structure(prefix, qm);
    CHECK(cs1.node_marginals[0] == 1.0);
    CHECK(cs1.node_tested[0]);
    CHECK_FALSE(cs1.node_tested[1]);
    CHECK(cs1.node_marginals[1] == 0.5);     // untested default
    CHECK_FALSE(cs1.edge_is_tested(0, 1));
    CHECK(cs1.edge(0, 1) == 0.5);
  }
}

TEST_CASE("simulate_structure matches a brute-force recomputation on random logs") {
  csg::SynthConfig cfg;
  cfg.n_students = 1;
  cfg.n_questions = 14;
  cfg.n_concepts = 6;
  cfg.seq_len = 50;
  auto [ds, planted] = csg::synth_generate(cfg, 5);
  auto prefix = ds.prefix(0, 50);
  auto cs = csg::simulate_structure(prefix, ds.qmatrix);

  for (int l = 0; l < 6; ++l) {
    double den = 0.0;
    for (const auto& e : prefix) den += ds.qmatrix.weight(e.question_id, l);
    if (den <= 0.0) continue;
    CHECK(std::abs(cs.node_marginals[l] - literal_concept(l, prefix, ds.qmatrix)) <= 1e-12);
  }
  for (int a = 0; a < 6; ++a)
    for (int b = a + 1; b < 6; ++b) {
      if (!cs.edge_is_tested(a, b)) continue;
      CHECK(std::abs(cs.edge(a, b) - literal_relation(a, b, prefix, ds.qmatrix)) <= 1e-12);
    }
}

TEST_CASE("simulate_structure is invariant to event order") {
  csg::SynthConfig cfg;
  cfg.n_students = 1;
  cfg.n_questions = 10;
  cfg.n_concepts = 5;
  cfg.seq_len = 30;
  auto [ds, planted] = csg::synth_generate(cfg, 9);
  auto prefix = ds.prefix(0, 30);
  auto cs = csg::simulate_structure(prefix, ds.qmatrix);

  csg::Rng rng(4);
  auto shuffled = prefix;
  rng.shuffle(shuffled);
  auto cs2 = csg::simulate_structure(shuffled, ds.qmatrix);
  CHECK((cs.node_marginals - cs2.node_marginals).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((cs.edge_marginals - cs2.edge_marginals).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("appending a correct single-concept answer never lowers that concept") {
  auto qm = fixture_qm();
  csg::Rng rng(31);
  std::vector<csg::InteractionEvent> prefix;
  for (int k = 0; k < 40; ++k) {
    prefix.push_back({static_cast<int>(rng.below(5)), rng.bernoulli(0.5) ? 1 : 0, k});
    auto before = csg::concept_construction(0, prefix, qm);
    auto grown = prefix;
    grown.push_back({0, 1, k + 1});  // q0 tests concept 0 alone, answered right
    auto after = csg::concept_construction(0, grown, qm);
    if (before.has_value()) CHECK(*after >= *before - 1e-15);
  }
}

TEST_CASE("discretize modes") {
  csg::CognitiveStructure cs(2);
  cs.node_marginals[0] = 0.625;
  cs.node_tested[0] = true;
  cs.node_marginals[1] = 0.5;
  cs.node_tested[1] = true;
  cs.set_edge(0, 1, 0.2);
  cs.edge_tested_upper[0] = true;

  csg::Rng rng(1);
  SECTION("deterministic thresholds with ties constructing") {
    auto g = csg::discretize(cs, 0.5, csg::DiscretizeMode::Deterministic, rng);
    CHECK(g.node_states[0] == 1);
    CHECK(g.node_states[1] == 1);  // exactly at threshold
    CHECK(g.edge_states_upper[0] == 0);
  }
  SECTION("untested entries stay unconstructed") {
    cs.node_tested[1] = false;
    auto g = csg::discretize(cs, 0.5, csg::DiscretizeMode::Deterministic, rng);
    CHECK(g.node_states[1] == 0);
  }
  SECTION("bernoulli mode tracks the marginal") {
    cs.node_marginals[0] = 0.7;
    int ones = 0;
    const int n = 100000;
    for (int k = 0; k < n; ++k)
      ones += csg::discretize(cs, 0.5, csg::DiscretizeMode::Bernoulli, rng).node_states[0];
    CHECK(static_cast<double>(ones) / n == Catch::Approx(0.7).margin(0.01));
  }
  SECTION("threshold bounds enforced") {
    CHECK_THROWS_AS(csg::discretize(cs, 0.0, csg::DiscretizeMode::Deterministic, rng),
                    csg::CsgError);
  }
}

TEST_CASE("pretraining corpus prefix grid") {
  csg::SynthConfig cfg;
  cfg.n_students = 100;
  cfg.n_questions = 10;
  cfg.n_concepts = 4;
  cfg.seq_len = 20;
  auto [ds, planted] = csg::synth_generate(cfg, 8);

  SECTION("stride 5 over length 20 gives prefixes 5,10,15,20") {
    csg::CorpusOptions opts;
    opts.stride = 5;
    auto corpus = csg::build_pretrain_corpus(ds, opts);
    REQUIRE(corpus.size() == 400);  // 100 students x 4 prefixes
    std::vector<int> first;
    for (int k = 0; k < 4; ++k) first.push_back(corpus.records[static_cast<std::size_t>(k)].prefix_len);
    CHECK(first == std::vector<int>{5, 10, 15, 20});
  }
  SECTION("stride 1 gives one structure per timestamp") {
    csg::CorpusOptions opts;
    opts.stride = 1;
    auto corpus = csg::build_pretrain_corpus(ds, opts);
    CHECK(corpus.size() == 100 * 20);
  }
  SECTION("all emitted structures are structurally valid") {
    csg::CorpusOptions opts;
    auto corpus = csg::build_pretrain_corpus(ds, opts);
    for (const auto& rec : corpus.records) rec.structure.validate();
  }
}

TEST_CASE("corpus jsonl round trip") {
  csg::SynthConfig cfg;
  cfg.n_students = 6;
  cfg.n_questions = 8;
  cfg.n_concepts = 4;
  cfg.seq_len = 10;
  auto [ds, planted] = csg::synth_generate(cfg, 13);
  auto corpus = csg::build_pretrain_corpus(ds, {});
  auto path = (std::filesystem::temp_directory_path() / "csg_corpus.jsonl").string();
  csg::write_corpus(corpus, path);
  auto loaded = csg::load_corpus(path);
  REQUIRE(loaded.size() == corpus.size());
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    CHECK(loaded.records[i].student_id == corpus.records[i].student_id);
    CHECK(loaded.records[i].prefix_len == corpus.records[i].prefix_len);
    CHECK(loaded.records[i].structure == corpus.records[i].structure);
  }
}
