#include "mrt/archive.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "mrt/error.hpp"

namespace mrt {

namespace {

constexpr char kMagic[8] = {'M', 'R', 'T', 'A', 'R', 'C', 'H', '1'};

static_assert(std::endian::native == std::endian::little,
              "archive I/O assumes a little-endian host");

}  // namespace

const Tensor* Archive::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void Archive::put(std::string name, const Tensor& value) {
  for (auto& [n, t] : tensors) {
    if (n == name) {
      t = value;
      return;
    }
  }
  tensors.emplace_back(std::move(name), value);
}

void write_archive(const std::filesystem::path& path, const Archive& archive) {
  nlohmann::json header;
  header["meta"] = archive.meta;
  header["tensors"] = nlohmann::json::array();
  for (const auto& [name, t] : archive.tensors)
    header["tensors"].push_back({{"name", name}, {"shape", t.shape()}});
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidInput("cannot open " + path.string() + " for writing");
  out.write(kMagic, sizeof kMagic);
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  std::vector<float> buf;
  for (const auto& [name, t] : archive.tensors) {
    buf.assign(t.data().begin(), t.data().end());
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw InvalidInput("write failed for " + path.string());
}

Archive read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open archive " + path.string());
  char magic[8];
  std::uint64_t len = 0;
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw ParseError(path.string() + ": bad archive magic at byte 0");
  if (!in.read(reinterpret_cast<char*>(&len), sizeof len))
    throw ParseError(path.string() + ": truncated header length at byte 8");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len)))
    throw ParseError(path.string() + ": truncated JSON header at byte 16");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": invalid archive header: " + e.what());
  }
  Archive archive;
  archive.meta = header.value("meta", nlohmann::json::object());
  std::vector<float> buf;
  std::uint64_t offset = 16 + len;
  for (const auto& entry : header.at("tensors")) {
    Tensor t(entry.at("shape").get<Shape>());
    buf.resize(t.size());
    if (!in.read(reinterpret_cast<char*>(buf.data()),
                 static_cast<std::streamsize>(buf.size() * sizeof(float)))) {
      throw ParseError(path.string() + ": truncated data for tensor " +
                       entry.at("name").get<std::string>() + " at byte " + std::to_string(offset));
    }
    offset += buf.size() * sizeof(float);
    std::copy(buf.begin(), buf.end(), t.data().begin());
    archive.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(t));
  }
  return archive;
}

void store_params(Archive& archive, const ParamSet& params, const std::string& prefix) {
  for (const auto* p : params) archive.put(prefix + p->name, p->value);
}

void restore_params(const Archive& archive, const ParamSet& params, const std::string& prefix) {
  for (auto* p : params) {
    const Tensor* t = archive.find(prefix + p->name);
    if (!t) throw ConfigError("checkpoint is missing parameter " + prefix + p->name);
    if (t->shape() != p->value.shape()) {
      throw ConfigError("checkpoint parameter " + prefix + p->name + " has shape " +
                        shape_string(t->shape()) + ", model expects " +
                        shape_string(p->value.shape()));
    }
    p->value = *t;
    p->zero_grad();
  }
}

void store_adam(Archive& archive, const AdamState& state, const std::string& prefix) {
  archive.meta[prefix] = {{"lr", state.lr},       {"beta1", state.beta1}, {"beta2", state.beta2},
                          {"eps", state.eps},     {"step", state.step}};
  for (const auto& [name, mom] : state.moments) {
    archive.put(prefix + ".m." + name, mom.m);
    archive.put(prefix + ".v." + name, mom.v);
  }
}

void restore_adam(const Archive& archive, AdamState& state, const std::string& prefix) {
  if (!archive.meta.contains(prefix)) return;
  const auto& h = archive.meta.at(prefix);
  state.lr = h.at("lr").get<double>();
  state.beta1 = h.at("beta1").get<double>();
  state.beta2 = h.at("beta2").get<double>();
  state.eps = h.at("eps").get<double>();
  state.step = h.at("step").get<long>();
  state.moments.clear();
  const std::string m_prefix = prefix + ".m.";
  for (const auto& [name, t] : archive.tensors) {
    if (name.rfind(m_prefix, 0) != 0) continue;
    const std::string param = name.substr(m_prefix.size());
    const Tensor* v = archive.find(prefix + ".v." + param);
    if (!v) throw ParseError("archive has first moment but no second moment for " + param);
    state.moments[param] = AdamMoments{t, *v};
  }
}

}  // namespace mrt
