#include "ftconv/serialize.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace ftconv {

using nlohmann::json;

ResolveStage stage_from_string(const std::string& s) {
  for (ResolveStage st :
       {ResolveStage::none, ResolveStage::reload, ResolveStage::coc,
        ResolveStage::rc, ResolveStage::clc, ResolveStage::fc,
        ResolveStage::discard, ResolveStage::recompute})
    if (s == to_string(st)) return st;
  throw ConfigError("unknown resolve stage: " + s);
}

FaultTarget target_from_string(const std::string& s) {
  for (FaultTarget t :
       {FaultTarget::output_block, FaultTarget::output_row,
        FaultTarget::output_column, FaultTarget::fmap, FaultTarget::kernel,
        FaultTarget::checksum})
    if (s == to_string(t)) return t;
  throw ConfigError("unknown fault target: " + s);
}

ChecksumName checksum_from_string(const std::string& s) {
  for (ChecksumName c : {ChecksumName::none, ChecksumName::cd1, ChecksumName::cd2,
                         ChecksumName::cw1, ChecksumName::cw2})
    if (s == to_string(c)) return c;
  throw ConfigError("unknown checksum name: " + s);
}

static json fault_to_json(const FaultSpec& f) {
  json j;
  j["layer"] = f.layer_index;
  j["target"] = to_string(f.target);
  j["checksum"] = to_string(f.checksum);
  j["i"] = f.i;
  j["j"] = f.j;
  j["x"] = f.x;
  j["y"] = f.y;
  j["mode"] = f.mode == FaultMode::bitflip ? "bitflip" : "scale";
  j["bit"] = f.bit;
  j["seed"] = f.seed;
  return j;
}

static FaultSpec fault_from_json(const json& j) {
  FaultSpec f;
  f.layer_index = j.at("layer").get<std::size_t>();
  f.target = target_from_string(j.at("target").get<std::string>());
  f.checksum = checksum_from_string(j.at("checksum").get<std::string>());
  f.i = j.at("i").get<std::size_t>();
  f.j = j.at("j").get<std::size_t>();
  f.x = j.at("x").get<long long>();
  f.y = j.at("y").get<long long>();
  f.mode = j.at("mode").get<std::string>() == "bitflip" ? FaultMode::bitflip
                                                        : FaultMode::scale;
  f.bit = j.at("bit").get<unsigned>();
  f.seed = j.at("seed").get<std::uint64_t>();
  return f;
}

std::string corpus_to_jsonl(const std::vector<CorpusEntry>& entries) {
  std::ostringstream out;
  for (const CorpusEntry& e : entries) {
    json j;
    j["fault"] = fault_to_json(e.fault);
    j["truth"] = {{"benign", e.truth.benign},
                  {"diverges", e.truth.output_diverges},
                  {"stage", to_string(e.truth.expected_stage)}};
    out << j.dump() << "\n";
  }
  return out.str();
}

std::vector<CorpusEntry> corpus_from_jsonl(const std::string& text) {
  std::vector<CorpusEntry> entries;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
      CorpusEntry e;
      e.fault = fault_from_json(j.at("fault"));
      const json& t = j.at("truth");
      e.truth.benign = t.at("benign").get<bool>();
      e.truth.output_diverges = t.at("diverges").get<bool>();
      e.truth.expected_stage = stage_from_string(t.at("stage").get<std::string>());
      entries.push_back(e);
    } catch (const json::exception& ex) {
      throw IoError("corpus line " + std::to_string(lineno) + " malformed: " +
                    ex.what());
    }
  }
  return entries;
}

void save_corpus(const std::string& path, const std::vector<CorpusEntry>& entries) {
  write_file(path, corpus_to_jsonl(entries));
}

std::vector<CorpusEntry> load_corpus(const std::string& path) {
  return corpus_from_jsonl(read_file(path));
}

std::string plan_to_json(const std::map<std::string, LayerPlan>& plans) {
  json j = json::object();
  for (const auto& [name, p] : plans) {
    j[name] = {{"clc_enabled", p.clc_enabled}, {"p_r", p.p_r},
               {"rc_enabled", p.rc_enabled},   {"t0", p.t0},
               {"t1", p.t1},                   {"t2", p.t2},
               {"tau", p.tau}};
  }
  return j.dump(2) + "\n";
}

std::map<std::string, LayerPlan> plan_from_json(const std::string& text) {
  std::map<std::string, LayerPlan> plans;
  json j;
  try {
    j = json::parse(text);
    for (auto it = j.begin(); it != j.end(); ++it) {
      LayerPlan p;
      const json& v = it.value();
      p.rc_enabled = v.at("rc_enabled").get<bool>();
      p.clc_enabled = v.at("clc_enabled").get<bool>();
      p.tau = v.at("tau").get<double>();
      p.t0 = v.value("t0", 0.0);
      p.t1 = v.value("t1", 0.0);
      p.t2 = v.value("t2", 0.0);
      p.p_r = v.value("p_r", 0.5);
      plans[it.key()] = p;
    }
  } catch (const json::exception& ex) {
    throw IoError(std::string("malformed plan file: ") + ex.what());
  }
  return plans;
}

void save_plan(const std::string& path, const std::map<std::string, LayerPlan>& plans) {
  write_file(path, plan_to_json(plans));
}

std::map<std::string, LayerPlan> load_plan(const std::string& path) {
  return plan_from_json(read_file(path));
}

static json layer_report_to_json(const LayerReport& r, bool timings) {
  json j;
  j["layer"] = r.layer;
  j["detected"] = r.detected;
  j["stage"] = to_string(r.stage);
  j["weights_reloaded"] = r.weights_reloaded;
  j["recomputed"] = r.recomputed;
  json blocks = json::array();
  for (const auto& b : r.corrected_blocks) blocks.push_back({b[0], b[1]});
  j["corrected_blocks"] = blocks;
  json attempted = json::array();
  for (ResolveStage s : r.stages_attempted) attempted.push_back(to_string(s));
  j["stages_attempted"] = attempted;
  if (timings) j["timings"] = r.timings;
  return j;
}

std::string report_to_json(const std::vector<LayerReport>& layers, bool timings) {
  json j;
  json arr = json::array();
  for (const LayerReport& r : layers) arr.push_back(layer_report_to_json(r, timings));
  j["layers"] = arr;
  return j.dump(2) + "\n";
}

std::string report_to_json(const CampaignReport& r, bool timings) {
  json j;
  j["runs"] = r.runs;
  j["detected"] = r.detected;
  j["above_threshold"] = r.above_threshold;
  j["recovered"] = r.recovered;
  j["ground_truth_mismatches"] = r.ground_truth_mismatches;
  j["integrity_fatals"] = r.integrity_fatals;
  j["by_stage"] = r.by_stage;
  json arr = json::array();
  for (const LayerReport& e : r.entries) arr.push_back(layer_report_to_json(e, timings));
  j["entries"] = arr;
  return j.dump(2) + "\n";
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open file for writing: " + path);
  out << text;
  if (!out) throw IoError("failed writing file: " + path);
}

}  // namespace ftconv
