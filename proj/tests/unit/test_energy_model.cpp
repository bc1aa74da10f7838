#include "../common/gradcheck.hpp"
#include "motifrep/energy_model.hpp"
#include "motifrep/error.hpp"
#include "motifrep/parallel.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

using namespace motifrep;

namespace {

// random connected motif on k nodes with p features
Motif random_motif(int k, int p, Rng& rng) {
  std::vector<std::uint8_t> adj(static_cast<std::size_t>(k * k), 0);
  auto link = [&](int i, int j) { adj[static_cast<std::size_t>(i * k + j)] = adj[static_cast<std::size_t>(j * k + i)] = 1; };
  for (int i = 1; i < k; ++i) link(i, static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(i))));
  for (int i = 0; i < k; ++i)
    for (int j = i + 1; j < k; ++j)
      if (uniform_unit(rng) < 0.3) link(i, j);
  FeatureMatrix x(k, p);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < p; ++j) x(i, j) = 2.0 * uniform_unit(rng) - 1.0;
  return Motif::from_parts(adj, x);
}

Motif permuted(const Motif& m, const std::vector<int>& perm) {
  const int k = m.size();
  std::vector<std::uint8_t> adj(static_cast<std::size_t>(k * k), 0);
  FeatureMatrix x(k, m.features.cols());
  for (int i = 0; i < k; ++i) {
    x.row(perm[static_cast<std::size_t>(i)]) = m.features.row(i);
    for (int j = 0; j < k; ++j)
      adj[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)] * k + perm[static_cast<std::size_t>(j)])] = m.adjacent(i, j);
  }
  return Motif::from_parts(adj, x);
}

Motif path3(FeatureMatrix x) {
  const std::uint8_t adj[] = {0, 1, 0, 1, 0, 1, 0, 1, 0};
  return Motif::from_parts(adj, std::move(x));
}

}  // namespace

TEST_CASE("init shapes and determinism") {
  const ModelDims dims{4, 8, 16, 128, 8, 1};
  const auto a = init_model(dims, 0.01, 7);
  const auto b = init_model(dims, 0.01, 7);
  const auto c = init_model(dims, 0.01, 8);
  CHECK(a.params.flatten() == b.params.flatten());
  CHECK(a.params.flatten() != c.params.flatten());
  REQUIRE(a.params.gnn.size() == 1);
  CHECK(a.params.gnn[0].weight.rows() == 8);
  CHECK(a.params.gnn[0].weight.cols() == 8);
  CHECK(a.params.readout_hidden.weight.rows() == 16);
  CHECK(a.params.readout_out.weight.rows() == 128);
  CHECK(a.params.rho_hidden.weight.cols() == 128);
  CHECK(a.params.rho_out.weight.rows() == 8);
  CHECK(a.params.energy.size() == 8);
  CHECK(a.params.readout_out.bias.isZero());
}

TEST_CASE("gnn forward edge cases") {
  const auto model = init_model({2, 4, 4, 4, 2, 1}, 0.01, 1);
  FeatureMatrix one(1, 2);
  one << 0.3, -0.2;
  const std::uint8_t no_edges[] = {0};
  const auto h = gnn_forward(Motif::from_parts(no_edges, one), model);
  CHECK(h.rows() == 1);
  CHECK(h.allFinite());

  FeatureMatrix same(4, 2);
  same.rowwise() = Eigen::RowVector2d(0.5, 1.5);
  std::vector<std::uint8_t> full(16, 1);
  for (int i = 0; i < 4; ++i) full[static_cast<std::size_t>(i * 5)] = 0;
  const auto hs = gnn_forward(Motif::from_parts(full, same), model);
  for (int i = 1; i < 4; ++i) CHECK((hs.row(i) - hs.row(0)).norm() == 0.0);
}

TEST_CASE("gnn forward on a 3-path with hand-set weights") {
  // one feature, one output: h_v = leaky(2 x_v + 3 mean_nbr + 0.5), slope 0.1
  EnergyModel model = init_model({1, 1, 1, 1, 1, 1}, 0.1, 0);
  model.params.gnn[0].weight << 2.0, 3.0;
  model.params.gnn[0].bias << 0.5;
  FeatureMatrix x(3, 1);
  x << 1.0, -2.0, 0.5;
  const auto h = gnn_forward(path3(x), model);
  // node 0: 2 + 3(-2) + 0.5 = -3.5 -> -0.35
  // node 1: -4 + 3(0.75) + 0.5 = -1.25 -> -0.125
  // node 2: 1 + 3(-2) + 0.5 = -4.5 -> -0.45
  CHECK(h(0, 0) == doctest::Approx(-0.35).epsilon(1e-15));
  CHECK(h(1, 0) == doctest::Approx(-0.125).epsilon(1e-15));
  CHECK(h(2, 0) == doctest::Approx(-0.45).epsilon(1e-15));
}

TEST_CASE("readout contracts") {
  const auto model = init_model({2, 6, 5, 4, 3, 1}, 0.01, 3);
  Eigen::MatrixXd emb(3, 6);
  emb.setRandom();
  Eigen::MatrixXd rev = emb.colwise().reverse();
  const auto a = readout(emb, model);
  const auto b = readout(rev, model);
  CHECK((a.vector - b.vector).norm() < 1e-12);
  CHECK(a.vector.norm() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK_FALSE(a.degenerate);

  auto zero = model;
  zero.params.set_zero();
  const auto z = readout(Eigen::MatrixXd::Zero(3, 6), zero);
  CHECK(z.degenerate);
  CHECK(z.vector.isZero());
}

TEST_CASE("energy examples") {
  Rng rng(5);
  auto model = init_model({3, 6, 6, 5, 4, 1}, 0.01, 9);
  const auto m = random_motif(4, 3, rng);
  CHECK(std::isfinite(motif_energy(m, model)));
  model.params.energy.setZero();
  CHECK(motif_energy(m, model) == 0.0);
}

TEST_CASE("forward pass matches the independent numpy oracle") {
  // tests/oracles/energy_forward.py
  const auto model = load_model(std::string(MOTIFREP_TEST_DATA) + "/oracle_model.json");
  const std::uint8_t adj[] = {0, 1, 0, 0, 1, 0, 1, 1, 0, 1, 0, 1, 0, 1, 1, 0};
  FeatureMatrix x(4, 3);
  x << 0.5, -1.0, 2.0, 1.5, 0.25, -0.75, -0.5, 0.0, 1.0, 2.0, -2.0, 0.5;
  const auto m = Motif::from_parts(adj, x);
  const double rep[] = {-0.4172131366006654, 0.5643245795090981, 0.09658507786394008, 0.7057919596763134};
  const auto r = motif_representation(m, model);
  for (int i = 0; i < 4; ++i) CHECK(r.vector(i) == doctest::Approx(rep[i]).epsilon(1e-12));
  CHECK(motif_energy(m, model) == doctest::Approx(-0.06897133825034632).epsilon(1e-12));
}

TEST_CASE("backward pass") {
  Rng rng(11);
  SUBCASE("zero upstream gives zero gradient") {
    const auto model = init_model({2, 4, 4, 4, 3, 1}, 0.01, 1);
    CHECK(motif_energy_gradient(random_motif(3, 2, rng), model, 0.0).max_abs() == 0.0);
  }
  SUBCASE("linear in upstream") {
    const auto model = init_model({2, 4, 4, 4, 3, 2}, 0.01, 1);
    const auto m = random_motif(4, 2, rng);
    auto g1 = motif_energy_gradient(m, model, 1.5);
    const auto g2 = motif_energy_gradient(m, model, 3.0);
    g1 *= 2.0;
    g1.add_scaled(g2, -1.0);
    CHECK(g1.max_abs() < 1e-12);
  }
  SUBCASE("finite differences on random models and motifs") {
    for (int trial = 0; trial < 30; ++trial) {
      const int k = 3 + trial % 3;
      const int layers = 1 + trial % 2;
      const bool rho_act = trial % 4 == 0;
      auto model = init_model({3, 5, 6, 4, 3, layers}, 0.1, 100 + static_cast<std::uint64_t>(trial), rho_act);
      for (auto& l : model.params.gnn) l.bias.setRandom();
      model.params.readout_out.bias.setRandom();
      const auto m = random_motif(k, 3, rng);
      const auto analytic = motif_energy_gradient(m, model, 1.0).flatten();
      auto flat = model.params.flatten();
      const double worst = testing::max_gradient_error(flat, analytic, [&](std::span<const double> w) {
        model.params.assign(w);
        return motif_energy(m, model);
      });
      CHECK(worst < 1e-5);
    }
  }
  SUBCASE("featureless motif") {
    auto model = init_model({0, 4, 4, 4, 3, 1}, 0.01, 2);
    const auto m = path3(FeatureMatrix(3, 0));
    const auto analytic = motif_energy_gradient(m, model, 1.0).flatten();
    auto flat = model.params.flatten();
    CHECK(testing::max_gradient_error(flat, analytic, [&](std::span<const double> w) {
            model.params.assign(w);
            return motif_energy(m, model);
          }) < 1e-5);
  }
}

TEST_CASE("permutation invariance over all relabelings") {
  Rng rng(3);
  for (int trial = 0; trial < 12; ++trial) {
    const int k = 2 + trial % 4;
    const auto model = init_model({2, 6, 6, 5, 4, 1 + trial % 2}, 0.01, static_cast<std::uint64_t>(trial));
    const auto m = random_motif(k, 2, rng);
    const double phi = motif_energy(m, model);
    const auto rep = motif_representation(m, model).vector;
    std::vector<int> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    do {
      const auto pm = permuted(m, perm);
      CHECK(std::abs(motif_energy(pm, model) - phi) < 1e-9);
      CHECK((motif_representation(pm, model).vector - rep).norm() < 1e-9);
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
}

TEST_CASE("serialization") {
  const auto dir = std::filesystem::temp_directory_path() / "motifrep_test_model";
  std::filesystem::create_directories(dir);
  const auto model = init_model({3, 5, 6, 4, 3, 2}, 0.2, 4, true);
  const auto path = (dir / "m.json").string();
  save_model(model, path, {{"k", 4}});
  nlohmann::json extra;
  const auto back = load_model(path, &extra);
  CHECK(back.params.flatten() == model.params.flatten());
  CHECK(back.dims == model.dims);
  CHECK(back.leaky_slope == model.leaky_slope);
  CHECK(back.rho_output_activation);
  CHECK(extra["k"] == 4);

  std::string text = serialize_model(model).dump();
  std::ofstream(dir / "trunc.json") << text.substr(0, text.size() / 2);
  CHECK_THROWS_AS(load_model((dir / "trunc.json").string()), ParseError);

  auto doc = serialize_model(model);
  doc["version"] = 99;
  CHECK_THROWS_AS(deserialize_model(doc), ValidationError);
  doc = serialize_model(model);
  doc["weights"]["energy"]["shape"] = {2, 1};
  CHECK_THROWS_AS(deserialize_model(doc), ValidationError);
}

TEST_CASE("hand-written minimal checkpoint") {
  // all widths 1, slope 0.5, one isolated node with feature 2
  // gnn: leaky(1*2 + 1*0 + 0) = 2; readout hidden: leaky(1*2 - 3) = -0.5;
  // readout out: 2*(-0.5) = -1 -> normalized -1; rho hidden: leaky(-1*1) = -0.5;
  // rho out: 4*(-0.5) + 1 = -1; energy: 3 * -1 = -3
  const nlohmann::json doc = nlohmann::json::parse(R"({
    "format": "motifrep-energy-model", "version": 1,
    "dims": {"p": 1, "d_gnn": 1, "d_hidden": 1, "d_rep": 1, "H": 1, "gnn_layers": 1},
    "leaky_slope": 0.5, "rho_output_activation": false,
    "weights": {
      "gnn.0.weight": {"shape": [1, 2], "data": [1, 1]}, "gnn.0.bias": {"shape": [1, 1], "data": [0]},
      "readout.hidden.weight": {"shape": [1, 1], "data": [1]}, "readout.hidden.bias": {"shape": [1, 1], "data": [-3]},
      "readout.out.weight": {"shape": [1, 1], "data": [2]}, "readout.out.bias": {"shape": [1, 1], "data": [0]},
      "rho.hidden.weight": {"shape": [1, 1], "data": [1]}, "rho.hidden.bias": {"shape": [1, 1], "data": [0]},
      "rho.out.weight": {"shape": [1, 1], "data": [4]}, "rho.out.bias": {"shape": [1, 1], "data": [1]},
      "energy": {"shape": [1, 1], "data": [3]}
    }})");
  const auto model = deserialize_model(doc);
  FeatureMatrix x(1, 1);
  x << 2.0;
  const std::uint8_t adj[] = {0};
  CHECK(motif_energy(Motif::from_parts(adj, x), model) == -3.0);
}

TEST_CASE("model validation rejects non-finite weights") {
  auto model = init_model({2, 3, 3, 3, 2, 1}, 0.01, 1);
  model.params.energy(0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS(validate_model(model));
}
