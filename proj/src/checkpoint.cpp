#include "orca/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "orca/errors.hpp"

namespace orca {
namespace {

constexpr const char* kFormat = "orca-checkpoint/1";

std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0xff) << 24) | ((v & 0xff00) << 8) | ((v >> 8) & 0xff00) | (v >> 24);
  }
  return v;
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing checkpoint file '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed '" + path.string() + "': " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, OrcaModel& model, const Vocabulary& vocab,
                     const BinningSpec& binning, const nlohmann::json& run) {
  std::filesystem::create_directories(dir);
  nlohmann::json tensors = nlohmann::json::array();
  std::ofstream bin(dir / "params.bin", std::ios::binary);
  if (!bin) throw DataError("cannot write '" + (dir / "params.bin").string() + "'");
  std::int64_t offset = 0;
  for (const auto* p : model.parameters()) {
    tensors.push_back({{"name", p->name},
                       {"rows", p->value.rows()},
                       {"cols", p->value.cols()},
                       {"offset", offset}});
    const Eigen::Index n = p->value.size();
    for (Eigen::Index i = 0; i < n; ++i) {
      const float f = static_cast<float>(p->value.data()[i]);
      std::uint32_t bits;
      std::memcpy(&bits, &f, sizeof bits);
      bits = to_little_endian(bits);
      bin.write(reinterpret_cast<const char*>(&bits), sizeof bits);
    }
    offset += n;
  }
  if (!bin) throw DataError("failed writing params.bin");

  nlohmann::json manifest = {{"format", kFormat},
                             {"dtype", "float32-le"},
                             {"layout", "column-major"},
                             {"model", to_json(model.config())},
                             {"schema", model.schema().to_json()},
                             {"vocabulary", vocab.to_json()},
                             {"binning", binning.to_json()},
                             {"tensors", tensors},
                             {"run", run}};
  write_json(dir / "manifest.json", manifest);
  write_json(dir / "binning.json", binning.to_json());
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const auto manifest = read_json(dir / "manifest.json");
  if (manifest.value("format", std::string()) != kFormat) {
    throw DataError("'" + dir.string() + "' is not an orca checkpoint");
  }
  try {
    const auto cfg = model_config_from_json(manifest.at("model"));
    const auto schema = FeatureSchema::from_json(manifest.at("schema"));
    OrcaModel model(cfg, schema);

    std::ifstream bin(dir / "params.bin", std::ios::binary);
    if (!bin) throw DataError("missing checkpoint file '" + (dir / "params.bin").string() + "'");
    std::vector<char> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());

    auto params = model.parameters();
    const auto& tensors = manifest.at("tensors");
    if (tensors.size() != params.size()) throw DataError("checkpoint tensor count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& t = tensors[i];
      auto* p = params[i];
      if (t.at("name").get<std::string>() != p->name || t.at("rows").get<Eigen::Index>() != p->value.rows() ||
          t.at("cols").get<Eigen::Index>() != p->value.cols()) {
        throw DataError("checkpoint tensor '" + t.at("name").get<std::string>() +
                        "' does not match the model");
      }
      const auto offset = t.at("offset").get<std::size_t>();
      const auto n = static_cast<std::size_t>(p->value.size());
      if ((offset + n) * sizeof(std::uint32_t) > bytes.size()) {
        throw DataError("params.bin is truncated");
      }
      for (std::size_t k = 0; k < n; ++k) {
        std::uint32_t bits;
        std::memcpy(&bits, bytes.data() + (offset + k) * sizeof bits, sizeof bits);
        bits = to_little_endian(bits);
        float f;
        std::memcpy(&f, &bits, sizeof f);
        p->value.data()[k] = f;
      }
    }
    return Checkpoint{std::move(model), Vocabulary::from_json(manifest.at("vocabulary")),
                      BinningSpec::from_json(manifest.at("binning")),
                      manifest.value("run", nlohmann::json::object())};
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint manifest: ") + e.what());
  }
}

}  // namespace orca
