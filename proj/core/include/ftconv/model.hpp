#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ftconv/checksums.hpp"
#include "ftconv/tensor.hpp"
#include "ftconv/workflow.hpp"

namespace ftconv {

struct LayerConfig {
  std::string name;
  std::size_t batch = 1;        // N
  std::size_t channels = 1;     // Ch
  std::size_t height = 1;       // H
  std::size_t kernels = 1;      // M
  std::size_t kernel_size = 1;  // R
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::size_t groups = 1;
  bool bias = false;

  ConvParams params() const {
    ConvParams p;
    p.stride = stride;
    p.groups = groups;
    p.pad = pad;
    p.bias_enabled = bias;
    return p;
  }
};

struct ModelConfig {
  std::string name;
  std::string element_type = "f32";  // f32 | f64
  double tau = 0.0;                  // 0 selects the per-type default
  std::vector<LayerConfig> layers;
};

/// Parses and validates a model config JSON document: integral output extents,
/// group divisibility, and chain compatibility (E_k == H_{k+1}, M_k == Ch_{k+1}).
ModelConfig load_model_config(const std::string& path);
ModelConfig parse_model_config(const std::string& json_text);

/// On-disk weights are always 32-bit little-endian floats, kernels then bias
/// per layer, behind a fixed magic/version header.
struct RawLayerWeights {
  std::vector<float> kernel;
  std::vector<float> bias;
};

std::vector<RawLayerWeights> load_weights(const std::string& path,
                                          const ModelConfig& cfg);
void save_weights(const std::string& path, const ModelConfig& cfg,
                  const std::vector<RawLayerWeights>& w);
std::vector<RawLayerWeights> random_weights(const ModelConfig& cfg,
                                            std::uint64_t seed);

template <typename T>
struct ModelLayer {
  LayerConfig cfg;
  std::size_t extent = 0;  // E
  Tensor4<T> W;            // golden copy; working copies are made per run
  Tensor4<T> bias;         // (M,1,1,1), empty when bias disabled
  Tensor4<T> cw1, cw2;     // kernel checksums precomputed at load
};

template <typename T>
struct Model {
  ModelConfig cfg;
  double tau = 0.0;
  std::vector<ModelLayer<T>> layers;
};

template <typename T>
Model<T> build_model(const ModelConfig& cfg, const std::vector<RawLayerWeights>& raw) {
  if (raw.size() != cfg.layers.size())
    throw ConfigError("weight file layer count does not match config");
  Model<T> m;
  m.cfg = cfg;
  m.tau = cfg.tau > 0 ? cfg.tau : default_tau(cfg.element_type == "f64");
  for (std::size_t li = 0; li < cfg.layers.size(); ++li) {
    const LayerConfig& lc = cfg.layers[li];
    ModelLayer<T> layer;
    layer.cfg = lc;
    layer.extent = output_extent(lc.height, lc.kernel_size, lc.params());
    const std::size_t ckw = lc.channels / lc.groups;
    layer.W = Tensor4<T>(lc.kernels, ckw, lc.kernel_size, lc.kernel_size);
    if (raw[li].kernel.size() != layer.W.size())
      throw ConfigError("kernel element count mismatch in layer " + lc.name);
    for (std::size_t i = 0; i < layer.W.size(); ++i)
      layer.W.raw()[i] = static_cast<T>(raw[li].kernel[i]);
    if (lc.bias) {
      if (raw[li].bias.size() != lc.kernels)
        throw ConfigError("bias element count mismatch in layer " + lc.name);
      layer.bias = Tensor4<T>(lc.kernels, 1, 1, 1);
      for (std::size_t i = 0; i < lc.kernels; ++i)
        layer.bias.raw()[i] = static_cast<T>(raw[li].bias[i]);
    }
    if (!layer.W.all_finite() || (lc.bias && !layer.bias.all_finite()))
      throw ConfigError("non-finite weights in layer " + lc.name);
    kernel_checksums(layer.W, lc.groups, layer.cw1, layer.cw2);
    m.layers.push_back(std::move(layer));
  }
  return m;
}

}  // namespace ftconv
