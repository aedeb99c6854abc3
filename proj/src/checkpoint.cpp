#include "gridmp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "gridmp/errors.hpp"

namespace gridmp {

namespace {

void put_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  char bytes[8];
  std::memcpy(bytes, &bits, 8);
  out.write(bytes, 8);
}

double get_f64(const char* p) {
  std::uint64_t bits;
  std::memcpy(&bits, p, 8);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

nlohmann::json tensor_entry(const std::string& name, const Matrix& m) {
  return {{"name", name}, {"shape", {m.rows(), m.cols()}}};
}

void write_tensor(std::ostream& out, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) put_f64(out, m.data()[i]);
}

}  // namespace

std::filesystem::path blob_path(const std::filesystem::path& manifest) {
  return std::filesystem::path(manifest.string() + ".bin");
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const nn::ModelState& s = ckpt.state;
  nlohmann::json doc;
  doc["format_version"] = kCheckpointFormat;
  doc["config"] = nn::config_to_json(s.config);
  doc["random_feature_seed"] = s.config.seed;
  doc["blob"] = blob_path(path).filename().string();
  doc["parameters"] = nlohmann::json::array();
  for (std::size_t i = 0; i < s.size(); ++i) doc["parameters"].push_back(tensor_entry(s.name(i), s.param(i)));
  doc["buffers"] = nlohmann::json::array();
  for (std::size_t i = 0; i < s.buffer_count(); ++i)
    doc["buffers"].push_back(tensor_entry(s.buffer_name(i), s.buffer(i)));
  doc["parameter_count"] = s.parameter_count();
  doc["metadata"] = {{"lineage", ckpt.meta.lineage},
                     {"trained_on_outages", ckpt.meta.trained_on_outages},
                     {"epochs_completed", ckpt.meta.epochs_completed},
                     {"best_val_loss", ckpt.meta.best_val_loss},
                     {"train_config", ckpt.meta.train_config}};
  if (!ckpt.meta.best_checkpoint.empty()) doc["metadata"]["best_checkpoint"] = ckpt.meta.best_checkpoint;
  if (ckpt.optimizer) {
    if (ckpt.optimizer->m.size() != s.size() || ckpt.optimizer->v.size() != s.size())
      throw ShapeError("save_checkpoint: optimizer moments do not match the parameters");
    doc["optimizer"] = {{"kind", "adam"}, {"step", ckpt.optimizer->step}};
  }

  std::ofstream blob(blob_path(path), std::ios::binary);
  if (!blob) throw IoError("cannot write " + blob_path(path).string());
  for (std::size_t i = 0; i < s.size(); ++i) write_tensor(blob, s.param(i));
  for (std::size_t i = 0; i < s.buffer_count(); ++i) write_tensor(blob, s.buffer(i));
  if (ckpt.optimizer) {
    for (const Matrix& m : ckpt.optimizer->m) write_tensor(blob, m);
    for (const Matrix& v : ckpt.optimizer->v) write_tensor(blob, v);
  }
  blob.close();
  if (!blob) throw IoError("failed writing " + blob_path(path).string());

  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }

  Checkpoint ckpt;
  try {
    if (doc.at("format_version").get<int>() != kCheckpointFormat)
      throw ConfigMismatchError(path.string() + ": unsupported checkpoint format " +
                                std::to_string(doc.at("format_version").get<int>()));
    ckpt.state = nn::init_model(nn::config_from_json(doc.at("config")));
    const auto& meta = doc.at("metadata");
    ckpt.meta.lineage = meta.at("lineage").get<std::string>();
    ckpt.meta.trained_on_outages = meta.at("trained_on_outages").get<bool>();
    ckpt.meta.epochs_completed = meta.value("epochs_completed", 0);
    ckpt.meta.best_val_loss = meta.value("best_val_loss", 0.0);
    ckpt.meta.train_config = meta.value("train_config", nlohmann::json());
    ckpt.meta.best_checkpoint = meta.value("best_checkpoint", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ConfigMismatchError(path.string() + ": " + e.what());
  }

  nn::ModelState& s = ckpt.state;
  auto check_layout = [&](const nlohmann::json& list, std::size_t count, auto name_of, auto tensor_of,
                          const char* what) {
    if (!list.is_array() || list.size() != count)
      throw ConfigMismatchError(path.string() + ": " + what + " count does not match the configuration");
    for (std::size_t i = 0; i < count; ++i) {
      const auto& e = list[i];
      const Matrix& t = tensor_of(i);
      if (e.at("name").get<std::string>() != name_of(i) || e.at("shape").at(0).get<Eigen::Index>() != t.rows() ||
          e.at("shape").at(1).get<Eigen::Index>() != t.cols())
        throw ConfigMismatchError(path.string() + ": " + what + " '" + e.at("name").get<std::string>() +
                                  "' does not match the configuration");
    }
  };
  try {
    check_layout(doc.at("parameters"), s.size(), [&](std::size_t i) { return s.name(i); },
                 [&](std::size_t i) -> const Matrix& { return s.param(i); }, "parameter");
    check_layout(doc.at("buffers"), s.buffer_count(), [&](std::size_t i) { return s.buffer_name(i); },
                 [&](std::size_t i) -> const Matrix& { return s.buffer(i); }, "buffer");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }

  std::size_t doubles = 0;
  for (std::size_t i = 0; i < s.size(); ++i) doubles += static_cast<std::size_t>(s.param(i).size());
  for (std::size_t i = 0; i < s.buffer_count(); ++i) doubles += static_cast<std::size_t>(s.buffer(i).size());
  const bool has_opt = doc.contains("optimizer");
  const std::size_t param_doubles = s.parameter_count();
  const std::size_t expected = doubles + (has_opt ? 2 * param_doubles : 0);

  const std::filesystem::path bp = path.parent_path() / doc.value("blob", blob_path(path).filename().string());
  std::ifstream blob(bp, std::ios::binary);
  if (!blob) throw IoError("cannot read checkpoint blob " + bp.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(blob)), std::istreambuf_iterator<char>());
  if (bytes.size() != expected * 8)
    throw ConfigMismatchError(bp.string() + ": blob holds " + std::to_string(bytes.size() / 8) + " values, expected " +
                              std::to_string(expected));

  const char* p = bytes.data();
  auto fill = [&](Matrix& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i, p += 8) m.data()[i] = get_f64(p);
  };
  for (std::size_t i = 0; i < s.size(); ++i) fill(s.param(i));
  for (std::size_t i = 0; i < s.buffer_count(); ++i) fill(s.buffer(i));
  if (has_opt) {
    OptimizerState opt;
    opt.step = doc["optimizer"].at("step").get<std::uint64_t>();
    for (auto* moments : {&opt.m, &opt.v})
      for (std::size_t i = 0; i < s.size(); ++i) {
        Matrix m(s.param(i).rows(), s.param(i).cols());
        fill(m);
        moments->push_back(std::move(m));
      }
    ckpt.optimizer = std::move(opt);
  }
  if (!s.all_finite()) throw ConfigMismatchError(path.string() + ": checkpoint holds non-finite parameters");
  return ckpt;
}

}  // namespace gridmp
