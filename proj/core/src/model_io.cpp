#include "ftconv/model.hpp"

#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

namespace ftconv {

using nlohmann::json;

static LayerConfig parse_layer(const json& j) {
  LayerConfig lc;
  lc.name = j.at("name").get<std::string>();
  lc.batch = j.at("batch").get<std::size_t>();
  lc.channels = j.at("channels").get<std::size_t>();
  lc.height = j.at("height").get<std::size_t>();
  lc.kernels = j.at("kernels").get<std::size_t>();
  lc.kernel_size = j.at("kernel_size").get<std::size_t>();
  lc.stride = j.value("stride", std::size_t(1));
  lc.pad = j.value("pad", std::size_t(0));
  lc.groups = j.value("groups", std::size_t(1));
  lc.bias = j.value("bias", false);
  return lc;
}

ModelConfig parse_model_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ModelConfig cfg;
  try {
    cfg.name = j.value("name", std::string("model"));
    cfg.element_type = j.value("element_type", std::string("f32"));
    cfg.tau = j.value("tau", 0.0);
    for (const json& lj : j.at("layers")) cfg.layers.push_back(parse_layer(lj));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  if (cfg.element_type != "f32" && cfg.element_type != "f64")
    throw ConfigError("element_type must be f32 or f64");
  if (cfg.layers.empty()) throw ConfigError("config has no layers");

  for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
    const LayerConfig& lc = cfg.layers[i];
    if (lc.groups == 0 || lc.channels % lc.groups != 0 || lc.kernels % lc.groups != 0)
      throw ConfigError("groups must divide channels and kernels in " + lc.name);
    const std::size_t E = output_extent(lc.height, lc.kernel_size, lc.params());
    if (i + 1 < cfg.layers.size()) {
      const LayerConfig& next = cfg.layers[i + 1];
      if (E != next.height)
        throw ConfigError("layer chain broken: extent of " + lc.name +
                          " does not match height of " + next.name);
      if (lc.kernels != next.channels)
        throw ConfigError("layer chain broken: kernels of " + lc.name +
                          " do not match channels of " + next.name);
      if (lc.batch != next.batch)
        throw ConfigError("layer chain broken: batch mismatch at " + next.name);
    }
  }
  return cfg;
}

ModelConfig load_model_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_model_config(ss.str());
}

static constexpr char kMagic[4] = {'F', 'T', 'C', 'N'};
static constexpr std::uint32_t kVersion = 1;

static void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

static std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw IoError("weight file truncated while reading header");
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
         (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
}

static void put_f32(std::ostream& out, const std::vector<float>& v) {
  for (float f : v) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    put_u32(out, u);
  }
}

void save_weights(const std::string& path, const ModelConfig& cfg,
                  const std::vector<RawLayerWeights>& w) {
  if (w.size() != cfg.layers.size())
    throw ConfigError("weight layer count does not match config");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open weight file for writing: " + path);
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(cfg.layers.size()));
  for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
    const LayerConfig& lc = cfg.layers[i];
    const std::size_t ckw = lc.channels / lc.groups;
    put_u32(out, static_cast<std::uint32_t>(lc.kernels));
    put_u32(out, static_cast<std::uint32_t>(ckw));
    put_u32(out, static_cast<std::uint32_t>(lc.kernel_size));
    put_u32(out, static_cast<std::uint32_t>(lc.kernel_size));
    put_u32(out, lc.bias ? 1u : 0u);
    if (w[i].kernel.size() != lc.kernels * ckw * lc.kernel_size * lc.kernel_size)
      throw ConfigError("kernel element count mismatch in layer " + lc.name);
    if (w[i].bias.size() != (lc.bias ? lc.kernels : 0))
      throw ConfigError("bias element count mismatch in layer " + lc.name);
    put_f32(out, w[i].kernel);
    put_f32(out, w[i].bias);
  }
  if (!out) throw IoError("failed writing weight file: " + path);
}

std::vector<RawLayerWeights> load_weights(const std::string& path,
                                          const ModelConfig& cfg) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open weight file: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("bad weight file magic (expected FTCN): " + path);
  if (get_u32(in) != kVersion) throw IoError("unsupported weight file version");
  const std::uint32_t layers = get_u32(in);
  if (layers != cfg.layers.size())
    throw ConfigError("weight file holds " + std::to_string(layers) +
                      " layers, config expects " +
                      std::to_string(cfg.layers.size()));

  std::vector<RawLayerWeights> out;
  for (std::uint32_t li = 0; li < layers; ++li) {
    const LayerConfig& lc = cfg.layers[li];
    const std::uint32_t M = get_u32(in), ckw = get_u32(in);
    const std::uint32_t r0 = get_u32(in), r1 = get_u32(in), bias = get_u32(in);
    if (M != lc.kernels || ckw != lc.channels / lc.groups ||
        r0 != lc.kernel_size || r1 != lc.kernel_size ||
        (bias != 0) != lc.bias)
      throw ConfigError("weight file dims disagree with config at layer " + lc.name);
    RawLayerWeights w;
    const std::size_t nk = std::size_t(M) * ckw * r0 * r1;
    const std::size_t nb = bias ? M : 0;
    w.kernel.resize(nk);
    w.bias.resize(nb);
    const std::size_t bytes = (nk + nb) * 4;
    std::vector<char> buf(bytes);
    in.read(buf.data(), static_cast<std::streamsize>(bytes));
    if (static_cast<std::size_t>(in.gcount()) != bytes)
      throw IoError("weight file truncated: expected " + std::to_string(bytes) +
                    " more bytes in layer " + lc.name);
    std::memcpy(w.kernel.data(), buf.data(), nk * 4);
    if (nb) std::memcpy(w.bias.data(), buf.data() + nk * 4, nb * 4);
    for (float f : w.kernel)
      if (!std::isfinite(f)) throw ConfigError("non-finite kernel value in " + lc.name);
    for (float f : w.bias)
      if (!std::isfinite(f)) throw ConfigError("non-finite bias value in " + lc.name);
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<RawLayerWeights> random_weights(const ModelConfig& cfg,
                                            std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<RawLayerWeights> out;
  for (const LayerConfig& lc : cfg.layers) {
    RawLayerWeights w;
    const std::size_t ckw = lc.channels / lc.groups;
    w.kernel.resize(lc.kernels * ckw * lc.kernel_size * lc.kernel_size);
    for (float& f : w.kernel) f = static_cast<float>(dist(rng));
    if (lc.bias) {
      w.bias.resize(lc.kernels);
      for (float& f : w.bias) f = static_cast<float>(dist(rng));
    }
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace ftconv
