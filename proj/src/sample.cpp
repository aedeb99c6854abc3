#include "gridmp/sample.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "gridmp/errors.hpp"

namespace gridmp {

namespace {

using nlohmann::json;

const char* kind_name(Outage::Kind k) {
  switch (k) {
    case Outage::Kind::None: return "none";
    case Outage::Kind::Branch: return "branch";
    case Outage::Kind::Generator: return "generator";
  }
  return "none";
}

void write_number(std::ostream& os, double v) {
  if (v == 0.0) {
    os << "0.0";
    return;
  }
  os << std::setprecision(17) << v;
}

void write_array(std::ostream& os, const std::vector<double>& v) {
  os << '[';
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << ',';
    write_number(os, v[i]);
  }
  os << ']';
}

std::vector<double> number_array(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end() || !it->is_array()) throw ParseError(std::string("labels.") + key + ": expected array");
  try {
    return it->get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("labels.") + key + ": " + e.what());
  }
}

}  // namespace

void check_sample(const PowerGrid& base, const Sample& s) {
  const std::size_t n = base.buses.size();
  const std::size_t g = base.generators.size();
  if (s.load_values.size() != base.loads.size())
    throw DimensionError("sample: load count " + std::to_string(s.load_values.size()) +
                         " does not match grid (" + std::to_string(base.loads.size()) + ")");
  if (s.label_theta.size() != n || s.label_vm.size() != n)
    throw DimensionError("sample: bus label length does not match grid");
  if (s.label_pg.size() != g || s.label_qg.size() != g)
    throw DimensionError("sample: generator label length does not match grid");
  if (s.outage.kind == Outage::Kind::Generator) {
    const auto i = static_cast<std::size_t>(s.outage.index);
    if (i >= g) throw ValidationError("sample: outage generator index out of range");
    if (s.label_pg[i] != 0.0 || s.label_qg[i] != 0.0)
      throw ValidationError("sample: outaged generator must carry zero labels");
  }
  if (s.outage.kind == Outage::Kind::Branch &&
      static_cast<std::size_t>(s.outage.index) >= base.branches.size())
    throw ValidationError("sample: outage branch index out of range");
}

json sample_to_json(const Sample& s) {
  json loads = json::array();
  for (auto [pd, qd] : s.load_values) loads.push_back({pd, qd});
  json outage = {{"kind", kind_name(s.outage.kind)}};
  if (!s.outage.is_none()) outage["index"] = s.outage.index;
  return {{"loads", loads},
          {"outage", outage},
          {"labels",
           {{"theta", s.label_theta},
            {"vm", s.label_vm},
            {"pg", s.label_pg},
            {"qg", s.label_qg},
            {"cost", s.label_cost}}}};
}

Sample sample_from_json(const json& doc) {
  if (!doc.is_object()) throw ParseError("sample: expected object");
  Sample s;
  auto loads = doc.find("loads");
  if (loads == doc.end() || !loads->is_array()) throw ParseError("sample.loads: expected array");
  for (const json& pair : *loads) {
    if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number() || !pair[1].is_number())
      throw ParseError("sample.loads: expected [pd, qd] pairs");
    s.load_values.emplace_back(pair[0].get<double>(), pair[1].get<double>());
  }
  auto outage = doc.find("outage");
  if (outage != doc.end()) {
    const std::string kind = outage->value("kind", "none");
    if (kind == "none") {
      s.outage = Outage::none();
    } else if (kind == "branch" || kind == "generator") {
      if (!outage->contains("index") || !(*outage)["index"].is_number_integer())
        throw ParseError("sample.outage.index: expected integer");
      const int idx = (*outage)["index"].get<int>();
      s.outage = kind == "branch" ? Outage::branch(idx) : Outage::generator(idx);
    } else {
      throw ParseError("sample.outage.kind: unknown kind \"" + kind + "\"");
    }
  }
  auto labels = doc.find("labels");
  if (labels == doc.end() || !labels->is_object()) throw ParseError("sample.labels: expected object");
  s.label_theta = number_array(*labels, "theta");
  s.label_vm = number_array(*labels, "vm");
  s.label_pg = number_array(*labels, "pg");
  s.label_qg = number_array(*labels, "qg");
  if (!labels->contains("cost") || !(*labels)["cost"].is_number())
    throw ParseError("sample.labels.cost: expected number");
  s.label_cost = (*labels)["cost"].get<double>();
  return s;
}

std::string sample_to_line(const Sample& s) {
  std::ostringstream os;
  os << "{\"loads\":[";
  for (std::size_t i = 0; i < s.load_values.size(); ++i) {
    if (i) os << ',';
    os << '[';
    write_number(os, s.load_values[i].first);
    os << ',';
    write_number(os, s.load_values[i].second);
    os << ']';
  }
  os << "],\"outage\":{\"kind\":\"" << kind_name(s.outage.kind) << '"';
  if (!s.outage.is_none()) os << ",\"index\":" << s.outage.index;
  os << "},\"labels\":{\"theta\":";
  write_array(os, s.label_theta);
  os << ",\"vm\":";
  write_array(os, s.label_vm);
  os << ",\"pg\":";
  write_array(os, s.label_pg);
  os << ",\"qg\":";
  write_array(os, s.label_qg);
  os << ",\"cost\":";
  write_number(os, s.label_cost);
  os << "}}";
  return os.str();
}

std::vector<Sample> load_samples(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open sample file " + file.string());
  std::vector<Sample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(sample_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw ParseError(file.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError(file.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void save_samples(const std::vector<Sample>& samples, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot write sample file " + file.string());
  for (const Sample& s : samples) out << sample_to_line(s) << '\n';
}

PowerGrid grid_for_sample(const PowerGrid& base, const Sample& sample) {
  if (sample.load_values.size() != base.loads.size())
    throw DimensionError("sample: load count does not match grid");
  PowerGrid g = apply_outage(base, sample.outage);
  for (std::size_t i = 0; i < g.loads.size(); ++i) {
    g.loads[i].pd = sample.load_values[i].first;
    g.loads[i].qd = sample.load_values[i].second;
  }
  return g;
}

SplitIndices split_indices(std::size_t count, std::uint64_t seed) {
  if (count < 20) throw TooFewSamplesError("split_dataset: need at least 20 samples, got " + std::to_string(count));
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t holdout = count * 5 / 100;
  SplitIndices out;
  const std::size_t n_train = count - 2 * holdout;
  out.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                 order.begin() + static_cast<std::ptrdiff_t>(n_train + holdout));
  out.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + holdout), order.end());
  return out;
}

DatasetSplit split_dataset(const std::vector<Sample>& samples, std::uint64_t seed) {
  const SplitIndices idx = split_indices(samples.size(), seed);
  DatasetSplit out;
  for (std::size_t i : idx.train) out.train.push_back(samples[i]);
  for (std::size_t i : idx.val) out.val.push_back(samples[i]);
  for (std::size_t i : idx.test) out.test.push_back(samples[i]);
  return out;
}

std::size_t unique_topology_count(const std::vector<Sample>& samples) {
  std::set<Outage> seen;
  for (const Sample& s : samples) seen.insert(s.outage);
  return seen.size();
}

}  // namespace gridmp
