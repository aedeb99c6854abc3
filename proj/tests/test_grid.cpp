#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "fixtures.hpp"
#include "gridmp/errors.hpp"
#include "gridmp/grid.hpp"
#include "gridmp/hetero_graph.hpp"
#include "gridmp/sample.hpp"

using namespace gridmp;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "gridmp_tests";
  fs::create_directories(dir);
  return dir / name;
}

nlohmann::json minimal_two_bus_doc() {
  return nlohmann::json::parse(R"({
    "base_mva": 100.0,
    "units": "pu",
    "reference_bus": 1,
    "buses": [{"id": 1, "v_min": 0.95, "v_max": 1.05}, {"id": 2, "v_min": 0.95, "v_max": 1.05}],
    "generators": [{"bus": 1, "pg_min": 0, "pg_max": 2, "qg_min": -1, "qg_max": 1,
                    "cost_a": 1, "cost_b": 10, "cost_c": 0, "enabled": true}],
    "loads": [{"bus": 2, "pd": 0.5, "qd": 0.1}],
    "shunts": [],
    "branches": [{"from_bus": 1, "to_bus": 2, "r": 0.0, "x": 0.5, "b_charge": 0.0, "tap": 1.0, "shift": 0.0,
                  "s_max": 2.0, "ang_min": -1.0, "ang_max": 1.0, "kind": "line", "enabled": true}]
  })");
}

PowerGrid ring3() {
  PowerGrid g = fixtures::make_buses(3);
  g.generators.push_back(fixtures::gen(0, 2.0, 1.0, 1.0, 10.0));
  g.loads.push_back(Load{2, 0.5, 0.1});
  g.branches.push_back(fixtures::line(0, 1, 0.0, 0.1));
  g.branches.push_back(fixtures::line(1, 2, 0.0, 0.1));
  g.branches.push_back(fixtures::line(2, 0, 0.0, 0.1));
  return g;
}

Sample with_outage(const PowerGrid& g, Outage o) {
  Sample s = fixtures::nominal_sample(g);
  s.outage = o;
  return s;
}

}  // namespace

TEST_CASE("minimal two-bus file loads with one branch") {
  const fs::path p = temp_file("two_bus.json");
  std::ofstream(p) << minimal_two_bus_doc().dump();
  const PowerGrid g = load_grid(p);
  CHECK(g.num_buses() == 2);
  CHECK(g.branches.size() == 1);
  CHECK(g.reference_bus == 0);
  CHECK(g.branches[0].to_bus == 1);
  CHECK(g.loads[0].pd == doctest::Approx(0.5));
}

TEST_CASE("grid JSON round-trips") {
  const PowerGrid g = fixtures::six_bus();
  const PowerGrid back = grid_from_json(grid_to_json(g));
  CHECK(grid_to_json(back) == grid_to_json(g));
}

TEST_CASE("physical units are divided by base_mva") {
  nlohmann::json doc = minimal_two_bus_doc();
  doc["units"] = "physical";
  doc["loads"][0]["pd"] = 50.0;
  doc["loads"][0]["qd"] = 10.0;
  doc["generators"][0]["pg_max"] = 200.0;
  const PowerGrid g = grid_from_json(doc);
  CHECK(g.loads[0].pd == doctest::Approx(0.5));
  CHECK(g.loads[0].qd == doctest::Approx(0.1));
  CHECK(g.generators[0].pg_max == doctest::Approx(2.0));
}

TEST_CASE("dangling branch reference is a validation error") {
  nlohmann::json doc = minimal_two_bus_doc();
  doc["branches"][0]["to_bus"] = 99;
  CHECK_THROWS_AS(validate(grid_from_json(doc)), ValidationError);
}

TEST_CASE("inverted voltage bounds are a validation error") {
  nlohmann::json doc = minimal_two_bus_doc();
  doc["buses"][1]["v_min"] = 1.1;
  doc["buses"][1]["v_max"] = 0.9;
  CHECK_THROWS_AS(validate(grid_from_json(doc)), ValidationError);
}

TEST_CASE("malformed grid file is a parse error") {
  const fs::path p = temp_file("broken.json");
  std::ofstream(p) << "{ \"buses\": [";
  CHECK_THROWS_AS(load_grid(p), ParseError);
}

TEST_CASE("invalid branch parameters are rejected") {
  PowerGrid g = fixtures::two_bus();
  SUBCASE("zero impedance") {
    g.branches[0].x = 0.0;
    CHECK_THROWS_AS(validate(g), ValidationError);
  }
  SUBCASE("line with a tap") {
    g.branches[0].tap = 1.05;
    CHECK_THROWS_AS(validate(g), ValidationError);
  }
  SUBCASE("self loop") {
    g.branches[0].to_bus = 0;
    CHECK_THROWS_AS(validate(g), ValidationError);
  }
  SUBCASE("non-positive rating") {
    g.branches[0].s_max = 0.0;
    CHECK_THROWS_AS(validate(g), ValidationError);
  }
}

TEST_CASE("every validated branch has a finite admittance") {
  for (const PowerGrid& g : {fixtures::two_bus(), fixtures::three_bus(), fixtures::four_bus(), fixtures::six_bus()}) {
    validate(g);
    for (const Branch& b : g.branches) {
      const auto y = b.series_admittance();
      CHECK(std::isfinite(y.real()));
      CHECK(std::isfinite(y.imag()));
    }
  }
}

TEST_CASE("ring stays connected after any single branch outage") {
  const PowerGrid g = ring3();
  for (int i = 0; i < 3; ++i) {
    const PowerGrid out = apply_outage(g, Outage::branch(i));
    CHECK_FALSE(out.branches[static_cast<std::size_t>(i)].enabled);
    CHECK(is_connected(out));
    CHECK(out.enabled_branches().size() == 2);
  }
}

TEST_CASE("bridge removal is a disconnection error") {
  CHECK_THROWS_AS(apply_outage(fixtures::two_bus(), Outage::branch(0)), DisconnectedError);
}

TEST_CASE("removing the only generator is a last-generator error") {
  CHECK_THROWS_AS(apply_outage(fixtures::two_bus(), Outage::generator(0)), LastGeneratorError);
}

TEST_CASE("re-applying an outage fails") {
  const PowerGrid g = ring3();
  const PowerGrid once = apply_outage(g, Outage::branch(1));
  CHECK_THROWS_AS(apply_outage(once, Outage::branch(1)), AlreadyDisabledError);
  const PowerGrid six = apply_outage(fixtures::six_bus(), Outage::generator(3));
  CHECK_THROWS_AS(apply_outage(six, Outage::generator(3)), AlreadyDisabledError);
}

TEST_CASE("out-of-range outage index is rejected") {
  CHECK_THROWS_AS(apply_outage(ring3(), Outage::branch(7)), ValidationError);
}

TEST_CASE("two-bus graph counts nodes and edges") {
  const PowerGrid g = fixtures::two_bus();
  const HeteroGraph hg = fixtures::graph_of(g);
  CHECK(hg.count(NodeType::Bus) == 2);
  CHECK(hg.count(NodeType::Generator) == 1);
  CHECK(hg.count(NodeType::Load) == 1);
  CHECK(hg.count(NodeType::Shunt) == 0);
  CHECK(hg.total_nodes() == 4);
  CHECK(hg.edges[idx(EdgeType::Line)].size() == 2);  // one directed pair
  CHECK(hg.edges[idx(EdgeType::Transformer)].size() == 0);
  CHECK(hg.edges[idx(EdgeType::GenToBus)].size() == 1);
  CHECK(hg.edges[idx(EdgeType::BusToGen)].size() == 1);
  CHECK(hg.edges[idx(EdgeType::LoadToBus)].size() == 1);
  CHECK(hg.edges[idx(EdgeType::BusToLoad)].size() == 1);
  CHECK(hg.edges[idx(EdgeType::ShuntToBus)].size() == 0);
}

TEST_CASE("node features follow the documented layout") {
  const PowerGrid g = fixtures::three_bus();
  const HeteroGraph hg = fixtures::graph_of(g);
  const Matrix& bus = hg.features[idx(NodeType::Bus)];
  CHECK(bus.cols() == kBusFeatures);
  CHECK(bus(0, 0) == doctest::Approx(0.94));
  CHECK(bus(0, 1) == doctest::Approx(1.06));
  CHECK(bus(0, 2) == 1.0);
  CHECK(bus(1, 2) == 0.0);
  const Matrix& gen = hg.features[idx(NodeType::Generator)];
  CHECK(gen.cols() == kGenFeatures);
  CHECK(gen(1, 1) == doctest::Approx(1.5));   // pg_max
  CHECK(gen(1, 4) == doctest::Approx(2.0));   // a
  CHECK(gen(1, 5) == doctest::Approx(15.0));  // b
  const Matrix& shunt = hg.features[idx(NodeType::Shunt)];
  CHECK(shunt(0, 1) == doctest::Approx(0.05));
  const EdgeSet& tr = hg.edges[idx(EdgeType::Transformer)];
  REQUIRE(tr.size() == 2);
  CHECK(tr.features(0, 3) == doctest::Approx(1.01));  // tap
  CHECK(hg.edges[idx(EdgeType::GenToBus)].features.cols() == 0);
}

TEST_CASE("load features come from the sample") {
  const PowerGrid g = fixtures::two_bus();
  Sample s = fixtures::nominal_sample(g);
  s.load_values[0] = {0.7, 0.2};
  const HeteroGraph hg = to_hetero_graph(g, s, positional_encoding(g));
  CHECK(hg.features[idx(NodeType::Load)](0, 0) == doctest::Approx(0.7));
  CHECK(hg.features[idx(NodeType::Load)](0, 1) == doctest::Approx(0.2));
}

TEST_CASE("generator outage removes the generator node") {
  const PowerGrid g = fixtures::six_bus();
  const Sample s = with_outage(g, Outage::generator(2));
  const PowerGrid out = grid_for_sample(g, s);
  const HeteroGraph hg = to_hetero_graph(g, s, positional_encoding(out));
  CHECK(hg.count(NodeType::Generator) == 3);
  CHECK(std::find(hg.generator_index.begin(), hg.generator_index.end(), 2) == hg.generator_index.end());
  CHECK(hg.edges[idx(EdgeType::GenToBus)].size() == 3);
}

TEST_CASE("grid without shunts has no shunt nodes or connectors") {
  const PowerGrid g = fixtures::two_bus();
  const HeteroGraph hg = fixtures::graph_of(g);
  CHECK(hg.count(NodeType::Shunt) == 0);
  CHECK(hg.edges[idx(EdgeType::ShuntToBus)].size() == 0);
  CHECK(hg.edges[idx(EdgeType::BusToShunt)].size() == 0);
}

TEST_CASE("connector degree sum equals attached component count") {
  for (const PowerGrid& g : {fixtures::three_bus(), fixtures::four_bus(), fixtures::six_bus()}) {
    const HeteroGraph hg = fixtures::graph_of(g);
    const int to_bus = hg.edges[idx(EdgeType::GenToBus)].size() + hg.edges[idx(EdgeType::LoadToBus)].size() +
                       hg.edges[idx(EdgeType::ShuntToBus)].size();
    CHECK(to_bus == static_cast<int>(g.enabled_generators().size() + g.loads.size() + g.shunts.size()));
    const int branch_edges = hg.edges[idx(EdgeType::Line)].size() + hg.edges[idx(EdgeType::Transformer)].size();
    CHECK(branch_edges == 2 * static_cast<int>(g.enabled_branches().size()));
  }
}

TEST_CASE("branch outage removes one directed edge pair") {
  const PowerGrid g = fixtures::six_bus();
  const Sample s = with_outage(g, Outage::branch(1));
  const HeteroGraph hg = to_hetero_graph(g, s, positional_encoding(grid_for_sample(g, s)));
  CHECK(hg.edges[idx(EdgeType::Line)].size() == 2 * 7);
}

TEST_CASE("mismatched sample or PE shapes are dimension errors") {
  const PowerGrid g = fixtures::two_bus();
  Sample s = fixtures::nominal_sample(g);
  CHECK_THROWS_AS(to_hetero_graph(g, s, Matrix::Zero(3, kPeDim)), DimensionError);
  s.load_values.push_back({0.1, 0.1});
  CHECK_THROWS_AS(to_hetero_graph(g, s, positional_encoding(g)), DimensionError);
}

TEST_CASE("batched graph shifts indices per graph") {
  const HeteroGraph a = fixtures::graph_of(fixtures::two_bus());
  const HeteroGraph b = fixtures::graph_of(fixtures::three_bus());
  const HeteroGraph* parts[] = {&a, &b};
  const HeteroGraph u = batch_graphs(parts);
  CHECK(u.num_graphs() == 2);
  CHECK(u.count(NodeType::Bus) == 5);
  CHECK(u.reference_bus == std::vector<int>{0, 2});
  const EdgeSet& lines = u.edges[idx(EdgeType::Line)];
  CHECK(lines.size() == a.edges[idx(EdgeType::Line)].size() + b.edges[idx(EdgeType::Line)].size());
  for (int e = a.edges[idx(EdgeType::Line)].size(); e < lines.size(); ++e) {
    CHECK(lines.src[static_cast<std::size_t>(e)] >= 2);
    CHECK(lines.dst[static_cast<std::size_t>(e)] >= 2);
  }
  CHECK(u.graph_of(NodeType::Bus) == std::vector<int>{0, 0, 1, 1, 1});
}

TEST_CASE("split_dataset partitions 90/5/5") {
  std::vector<Sample> samples(100);
  for (std::size_t i = 0; i < samples.size(); ++i) samples[i].label_cost = static_cast<double>(i);
  const DatasetSplit s = split_dataset(samples, 11);
  CHECK(s.train.size() == 90);
  CHECK(s.val.size() == 5);
  CHECK(s.test.size() == 5);
  std::multiset<double> all;
  for (const auto* part : {&s.train, &s.val, &s.test})
    for (const Sample& x : *part) all.insert(x.label_cost);
  CHECK(all.size() == 100);
  CHECK(std::set<double>(all.begin(), all.end()).size() == 100);
}

TEST_CASE("split_dataset floors small partitions") {
  const SplitIndices s = split_indices(20, 3);
  CHECK(s.train.size() == 18);
  CHECK(s.val.size() == 1);
  CHECK(s.test.size() == 1);
  CHECK_THROWS_AS(split_indices(19, 3), TooFewSamplesError);
}

TEST_CASE("split_dataset is deterministic in the seed") {
  const SplitIndices a = split_indices(57, 5), b = split_indices(57, 5), c = split_indices(57, 6);
  CHECK(a.train == b.train);
  CHECK(a.val == b.val);
  CHECK(a.test == b.test);
  CHECK(a.train != c.train);
}

TEST_CASE("unique topology counts") {
  const PowerGrid g = fixtures::six_bus();
  std::vector<Sample> none(4, fixtures::nominal_sample(g));
  CHECK(unique_topology_count(none) == 1);
  std::vector<Sample> outs = {with_outage(g, Outage::branch(0)), with_outage(g, Outage::branch(1)),
                              with_outage(g, Outage::branch(0))};
  CHECK(unique_topology_count(outs) == 2);
  CHECK(unique_topology_count({}) == 0);
}

TEST_CASE("topology key depends only on enabled sets") {
  const PowerGrid g = fixtures::six_bus();
  PowerGrid loads_changed = g;
  loads_changed.loads[0].pd = 3.0;
  CHECK(topology_key(g) == topology_key(loads_changed));
  CHECK(topology_key(apply_outage(g, Outage::branch(2))) == topology_key(apply_outage(g, Outage::branch(2))));
  CHECK(topology_key(apply_outage(g, Outage::branch(2))) != topology_key(g));
  CHECK(topology_key(apply_outage(g, Outage::generator(1))) != topology_key(g));
}

TEST_CASE("samples round-trip through JSON Lines") {
  const PowerGrid g = fixtures::four_bus();
  Sample s = fixtures::nominal_sample(g);
  s.outage = Outage::branch(3);
  s.label_theta = {0.0, -0.0123456789012345, 0.1, 1.0 / 3.0};
  s.label_cost = 123.456;
  const fs::path p = temp_file("samples.jsonl");
  save_samples({s, s}, p);
  const std::vector<Sample> back = load_samples(p);
  REQUIRE(back.size() == 2);
  CHECK(back[1].outage == Outage::branch(3));
  CHECK(back[1].label_theta == s.label_theta);
  CHECK(back[1].label_cost == s.label_cost);
  CHECK(sample_to_line(back[0]) == sample_to_line(s));
}

TEST_CASE("outaged generator must carry zero labels") {
  const PowerGrid g = fixtures::six_bus();
  Sample s = with_outage(g, Outage::generator(1));
  check_sample(g, s);
  s.label_pg[1] = 0.3;
  CHECK_THROWS_AS(check_sample(g, s), ValidationError);
  s.label_pg.pop_back();
  CHECK_THROWS_AS(check_sample(g, s), DimensionError);
}
