#pragma once

#include <map>
#include <string>
#include <vector>

#include "ftconv/fault.hpp"
#include "ftconv/report.hpp"
#include "ftconv/workflow.hpp"

namespace ftconv {

ResolveStage stage_from_string(const std::string& s);
FaultTarget target_from_string(const std::string& s);
ChecksumName checksum_from_string(const std::string& s);

/// Fault corpus: one JSON object per line, fault plus ground truth, with
/// alphabetically ordered keys so equal corpora are byte-identical.
std::string corpus_to_jsonl(const std::vector<CorpusEntry>& entries);
std::vector<CorpusEntry> corpus_from_jsonl(const std::string& text);
void save_corpus(const std::string& path, const std::vector<CorpusEntry>& entries);
std::vector<CorpusEntry> load_corpus(const std::string& path);

/// Plan file: layer name -> plan fields.
std::string plan_to_json(const std::map<std::string, LayerPlan>& plans);
std::map<std::string, LayerPlan> plan_from_json(const std::string& text);
void save_plan(const std::string& path, const std::map<std::string, LayerPlan>& plans);
std::map<std::string, LayerPlan> load_plan(const std::string& path);

/// Machine-readable reports. Wall times are emitted only when `timings` is
/// set, keeping default reports byte-reproducible across runs.
std::string report_to_json(const std::vector<LayerReport>& layers, bool timings);
std::string report_to_json(const CampaignReport& r, bool timings);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& text);

}  // namespace ftconv
