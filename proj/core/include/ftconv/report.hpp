#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace ftconv {

/// Stage of the protection pipeline that settled a layer's outcome.
enum class ResolveStage {
  none,       // clean run, nothing to do
  reload,     // kernel/kernel-checksum corruption fixed by reloading goldens
  coc,
  rc,
  clc,
  fc,
  discard,    // checksums implicated; output kept, checksums dropped
  recompute,  // full layer recomputation fallback
};

inline const char* to_string(ResolveStage s) {
  switch (s) {
    case ResolveStage::none: return "none";
    case ResolveStage::reload: return "reload";
    case ResolveStage::coc: return "coc";
    case ResolveStage::rc: return "rc";
    case ResolveStage::clc: return "clc";
    case ResolveStage::fc: return "fc";
    case ResolveStage::discard: return "discard";
    case ResolveStage::recompute: return "recompute";
  }
  return "?";
}

/// Per-layer outcome of one protected execution.
struct LayerReport {
  std::string layer;
  bool detected = false;
  ResolveStage stage = ResolveStage::none;
  bool weights_reloaded = false;
  bool recomputed = false;
  std::vector<std::array<std::size_t, 2>> corrected_blocks;
  std::vector<ResolveStage> stages_attempted;
  std::map<std::string, double> timings;  // filled only when timing is requested
};

/// Aggregate view over a fault-injection campaign.
struct CampaignReport {
  std::size_t runs = 0;
  std::size_t detected = 0;
  std::size_t above_threshold = 0;
  std::size_t recovered = 0;
  std::size_t ground_truth_mismatches = 0;
  std::size_t integrity_fatals = 0;
  std::map<std::string, std::size_t> by_stage;  // resolving stage -> count
  std::vector<LayerReport> entries;             // one per injected run
};

}  // namespace ftconv
