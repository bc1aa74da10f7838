#include "motifrep/error.hpp"
#include "motifrep/nce_trainer.hpp"
#include "motifrep/synthetic.hpp"
#include "motifrep/tour_estimator.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

using namespace motifrep;

namespace {

std::multiset<std::vector<double>> feature_rows(const Graph& g) {
  std::multiset<std::vector<double>> rows;
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    const auto r = g.features().row(v);
    rows.insert(std::vector<double>(r.data(), r.data() + r.size()));
  }
  return rows;
}

std::vector<std::size_t> degrees(const Graph& g) {
  std::vector<std::size_t> d;
  for (NodeId v = 0; v < g.num_nodes(); ++v) d.push_back(g.degree(v));
  return d;
}

double held_out_response(const Graph& g, const TrainResult& r, const TrainConfig& cfg, std::uint64_t seed) {
  const auto s = build_supernode(g, cfg.k, {cfg.supernode_budget, seed, std::nullopt});
  const auto est = estimate_energy(g, s, cfg.q, model_energy_function(r.model), seed);
  return nce_response(est.value, r.log_offset);
}

}  // namespace

TEST_CASE("forest fire sampling") {
  const auto karate = load_graph(std::string(MOTIFREP_DATA) + "/karate.edgelist");
  Rng rng(1);
  const auto whole = forest_fire_sample(karate, 34, 0.7, rng);
  CHECK(whole.num_nodes() == 34);
  CHECK(whole.num_edges() == 78);

  Rng rng0(2);
  const auto isolated = forest_fire_sample(karate, 10, 0.0, rng0);
  CHECK(isolated.num_nodes() == 10);

  // pinned regression fixture
  Rng rng15(2024);
  const auto s = forest_fire_sample(karate, 15, 0.7, rng15);
  CHECK(s.num_nodes() == 15);
  std::vector<std::string> ids = s.node_ids();
  CHECK(std::is_sorted(ids.begin(), ids.end(), [](const std::string& a, const std::string& b) { return std::stoi(a) < std::stoi(b); }));
  Rng again(2024);
  const auto s2 = forest_fire_sample(karate, 15, 0.7, again);
  CHECK(s2.node_ids() == s.node_ids());
  CHECK(s2.edge_list() == s.edge_list());
  CHECK(s.num_edges() == 31);
  const std::vector<std::string> pinned{"0", "1", "2", "3", "4", "5", "6", "7", "8", "10", "13", "16", "17", "19", "27"};
  CHECK(s.node_ids() == pinned);

  CHECK_THROWS_AS(forest_fire_sample(karate, 40, 0.7, rng), ValidationError);
}

TEST_CASE("noise generation") {
  const auto g = erdos_renyi(20, 0.2, 3, 3);
  Rng rng(5);
  const auto shuffled = make_noise(g, NoiseMode::shuffle_features, rng);
  CHECK(shuffled.edge_list() == g.edge_list());
  CHECK(degrees(shuffled) == degrees(g));
  CHECK(feature_rows(shuffled) == feature_rows(g));
  CHECK(shuffled.features() != g.features());

  FeatureMatrix one(1, 2);
  one << 1.0, 2.0;
  const Graph single(1, {}, one);
  CHECK(make_noise(single, NoiseMode::shuffle_features, rng).features() == one);

  const auto p5 = path_graph(5);
  const auto added = make_noise(p5, NoiseMode::add_edges, rng);
  CHECK(added.num_nodes() == 5);
  CHECK(added.num_edges() == 9);
  for (const auto& [u, v] : p5.edge_list()) CHECK(added.has_edge(u, v));

  // too few non-edges for n additions
  CHECK_THROWS(make_noise(complete_graph(5), NoiseMode::add_edges, rng));
}

TEST_CASE("nce response and loss values") {
  CHECK(nce_response(0.0, 0.0) == 0.5);
  CHECK(nce_response(-std::log(3.0), 0.0) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(nce_response(800.0, 0.0) < 1e-300);
  CHECK(nce_response(-800.0, 0.0) == 1.0);
  CHECK(nce_response(1.0, -1.0) == 0.5);

  const double half[] = {0.5};
  CHECK(nce_loss(half, half) == doctest::Approx(1.386294361).epsilon(1e-9));
  const double pos[] = {0.75}, neg[] = {0.25};
  CHECK(nce_loss(pos, neg) == doctest::Approx(0.575364145).epsilon(1e-9));
  const double one[] = {1.0}, zero[] = {0.0};
  CHECK(nce_loss(one, zero) < 1e-11);

  CHECK(nce_example_loss(-std::log(3.0), 0.0, true) == doctest::Approx(-std::log(0.75)).epsilon(1e-14));
  CHECK(nce_example_loss(-std::log(3.0), 0.0, false) == doctest::Approx(-std::log(0.25)).epsilon(1e-14));
  CHECK(std::isfinite(nce_example_loss(1e4, 0.0, true)));
}

TEST_CASE("loss derivative signs and finite differences") {
  for (double phi : {-5.0, -1.0, 0.0, 0.3, 2.0, 8.0}) {
    for (double c : {0.0, 1.5}) {
      const double h = 1e-6;
      for (bool positive : {true, false}) {
        const double fd = (nce_example_loss(phi + h, c, positive) - nce_example_loss(phi - h, c, positive)) / (2 * h);
        const double g = nce_energy_gradient(phi, c, positive);
        CHECK(g == doctest::Approx(fd).epsilon(1e-6));
        if (positive) CHECK(g >= 0.0);
        else CHECK(g <= 0.0);
      }
    }
  }
}

TEST_CASE("adam") {
  Adam zero(3, 0.1);
  std::vector<double> p{1.0, -2.0, 3.0};
  const std::vector<double> g0(3, 0.0);
  zero.step(p, g0);
  CHECK(p == std::vector<double>{1.0, -2.0, 3.0});

  // first step moves every coordinate by lr against the gradient sign
  Adam adam(2, 0.01);
  std::vector<double> q{0.5, 0.5};
  const std::vector<double> g{4.0, -0.001};
  adam.step(q, g);
  CHECK(q[0] == doctest::Approx(0.49).epsilon(1e-6));
  CHECK(q[1] == doctest::Approx(0.51).epsilon(1e-4));

  // minimizes a quadratic
  Adam opt(1, 0.1);
  std::vector<double> x{5.0};
  for (int i = 0; i < 2000; ++i) {
    const std::vector<double> grad{2.0 * (x[0] - 1.0)};
    opt.step(x, grad);
  }
  CHECK(x[0] == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("config validation and json") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.q = 0;
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("q"), ValidationError);
  TrainConfig back;
  TrainConfig src;
  src.k = 4;
  src.lr = 0.01;
  src.noise_mode = NoiseMode::add_edges;
  src.log_mpn_mode = LogMpnMode::learned_offset;
  back.update_from_json(src.to_json());
  CHECK(back.to_json() == src.to_json());
  CHECK_THROWS_AS(back.update_from_json({{"bogus", 1}}), ValidationError);
  CHECK_THROWS_AS(back.update_from_json({{"q", "many"}}), ValidationError);
}

TEST_CASE("training runs deterministically") {
  const auto g = erdos_renyi(60, 0.08, 1, 2);
  TrainConfig cfg;
  cfg.dims = {2, 6, 6, 6, 4, 1};
  cfg.num_samples = 4;
  cfg.sample_size = 15;
  cfg.q = 5;
  cfg.supernode_budget = 8;
  cfg.minibatch = 2;
  cfg.epochs = 0;
  const auto data = sample_positives(g, cfg);
  REQUIRE(data.size() == 4);

  const auto init = train(data, cfg);
  CHECK(init.model.params.flatten() == init_model(init.model.dims, cfg.leaky_slope, cfg.seed).params.flatten());
  CHECK(init.log.empty());

  cfg.epochs = 2;
  const auto a = train(data, cfg);
  const auto b = train(data, cfg);
  CHECK(training_log_csv(a.log, false) == training_log_csv(b.log, false));
  CHECK(a.model.params.flatten() == b.model.params.flatten());
  cfg.threads = 3;
  const auto c = train(data, cfg);
  CHECK(training_log_csv(a.log, false) == training_log_csv(c.log, false));
  CHECK(a.model.params.flatten() == c.model.params.flatten());
  CHECK(a.model.params.flatten() != init.model.params.flatten());
}

TEST_CASE("featureless graphs need edge noise") {
  const auto g = erdos_renyi(40, 0.1, 2);
  TrainConfig cfg;
  cfg.num_samples = 2;
  cfg.sample_size = 10;
  cfg.epochs = 1;
  const auto data = sample_positives(g, cfg);
  CHECK_THROWS_AS(train(data, cfg), ValidationError);
  cfg.noise_mode = NoiseMode::add_edges;
  cfg.q = 3;
  cfg.supernode_budget = 4;
  CHECK_NOTHROW(train(data, cfg));
}

TEST_CASE("training separates real from shuffled feature clusters") {
  PlantedTaskConfig pc;
  pc.num_nodes = 400;
  pc.num_planted = 120;
  pc.background_cliques = 200;
  pc.seed = 1;
  const auto planted = make_planted_task(pc);

  TrainConfig cfg;
  cfg.dims = {pc.feature_dim, 32, 32, 32, 16, 1};
  cfg.num_samples = 24;
  cfg.sample_size = 40;
  cfg.q = 20;
  cfg.supernode_budget = 30;
  cfg.lr = 2e-3;
  cfg.epochs = 30;
  cfg.log_mpn_mode = LogMpnMode::learned_offset;
  const auto result = train(sample_positives(planted.graph, cfg), cfg);

  TrainConfig held = cfg;
  held.seed = 999;
  const auto test = sample_positives(planted.graph, held);
  double pos = 0.0, neg = 0.0;
  Rng rng(77);
  for (std::size_t i = 0; i < test.size(); ++i) {
    pos += held_out_response(test[i], result, cfg, i);
    neg += held_out_response(make_noise(test[i], NoiseMode::shuffle_features, rng), result, cfg, i);
  }
  const double gap = (pos - neg) / static_cast<double>(test.size());
  MESSAGE("held-out mean response gap: " << gap);
  CHECK(gap > 0.2);
}
