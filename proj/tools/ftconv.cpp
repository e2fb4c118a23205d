#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ftconv/ftconv.hpp"

namespace {

using namespace ftconv;

struct RunOptions {
  std::string mode;
  std::string config;
  std::string weights;
  std::string corpus;
  std::string plan;
  std::string json_path;
  std::string out_path;
  std::string impl = "direct";
  std::uint64_t seed = 1234;
  double tau = 0.0;
  bool timings = false;
};

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

template <typename T>
void write_tensor(const std::string& path, const Tensor4<T>& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open output file: " + path);
  out.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(T)));
  if (!out) throw IoError("failed writing output file: " + path);
}

template <typename T>
std::vector<LayerPlan> resolve_plans(const Model<T>& model, const RunOptions& o) {
  std::vector<LayerPlan> plans;
  std::map<std::string, LayerPlan> from_file;
  if (!o.plan.empty() && o.mode != "profile") from_file = load_plan(o.plan);
  for (const ModelLayer<T>& l : model.layers) {
    LayerPlan p;
    if (auto it = from_file.find(l.cfg.name); it != from_file.end()) {
      p = it->second;
    } else {
      LayerDims d{l.cfg.batch, l.cfg.kernels, l.cfg.channels,
                  l.cfg.height, l.cfg.kernel_size, l.extent};
      p = make_default_plan(d, model.tau);
    }
    if (o.tau > 0) p.tau = o.tau;
    plans.push_back(p);
  }
  return plans;
}

template <typename T>
int do_run(const RunOptions& o) {
  ModelConfig cfg = load_model_config(o.config);
  Model<T> model = build_model<T>(cfg, load_weights(o.weights, cfg));
  if (o.tau > 0) model.tau = o.tau;
  const ConvImpl impl = (o.impl == "mm") ? ConvImpl::mm : ConvImpl::direct;
  const LayerConfig& l0 = cfg.layers.front();
  Tensor4<T> D0 = Tensor4<T>::random(l0.batch, l0.channels, l0.height, l0.height,
                                     o.seed);
  std::vector<LayerPlan> plans = resolve_plans(model, o);

  if (o.mode == "baseline") {
    std::vector<Tensor4<T>> outs = clean_chain(model, D0, impl);
    std::printf("%-12s %5s %5s %5s %5s %5s %5s\n", "layer", "N", "Ch", "H", "M",
                "R", "E");
    for (const ModelLayer<T>& l : model.layers)
      std::printf("%-12s %5zu %5zu %5zu %5zu %5zu %5zu\n", l.cfg.name.c_str(),
                  l.cfg.batch, l.cfg.channels, l.cfg.height, l.cfg.kernels,
                  l.cfg.kernel_size, l.extent);
    if (!o.out_path.empty()) write_tensor(o.out_path, outs.back());
    if (!o.json_path.empty()) {
      nlohmann::json j;
      j["mode"] = "baseline";
      j["model"] = cfg.name;
      j["layers"] = nlohmann::json::array();
      for (const ModelLayer<T>& l : model.layers) j["layers"].push_back(l.cfg.name);
      write_file(o.json_path, j.dump(2) + "\n");
    }
    return 0;
  }

  if (o.mode == "protected") {
    std::vector<LayerReport> reports;
    Tensor4<T> x = D0;
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
      const ModelLayer<T>& l = model.layers[li];
      LayerReport rep;
      rep.layer = l.cfg.name;
      const double a = o.timings ? now_seconds() : 0.0;
      x = run_protected_layer(x, l.W, l.cfg.bias ? &l.bias : nullptr,
                              l.cfg.params(), plans[li], rep, impl,
                              FaultHooks<T>{}, &l.cw1, &l.cw2);
      if (o.timings) rep.timings["total"] = now_seconds() - a;
      reports.push_back(std::move(rep));
    }
    std::printf("%-12s %-9s %-10s %-3s %-4s\n", "layer", "detected", "stage",
                "rc", "clc");
    for (std::size_t li = 0; li < reports.size(); ++li)
      std::printf("%-12s %-9s %-10s %-3s %-4s\n", reports[li].layer.c_str(),
                  reports[li].detected ? "yes" : "no",
                  to_string(reports[li].stage),
                  plans[li].rc_enabled ? "on" : "off",
                  plans[li].clc_enabled ? "on" : "off");
    if (!o.out_path.empty()) write_tensor(o.out_path, x);
    if (!o.json_path.empty())
      write_file(o.json_path, report_to_json(reports, o.timings));
    return 0;
  }

  if (o.mode == "campaign") {
    if (o.corpus.empty()) throw ConfigError("campaign mode needs --corpus");
    std::vector<CorpusEntry> corpus = load_corpus(o.corpus);
    CampaignReport rep = run_campaign(model, D0, corpus, plans, impl);
    std::printf("runs                 %zu\n", rep.runs);
    std::printf("detected             %zu\n", rep.detected);
    std::printf("above threshold      %zu\n", rep.above_threshold);
    std::printf("recovered            %zu\n", rep.recovered);
    std::printf("truth mismatches     %zu\n", rep.ground_truth_mismatches);
    std::printf("resolving stage distribution:\n");
    for (const auto& [stage, count] : rep.by_stage)
      std::printf("  %-10s %zu\n", stage.c_str(), count);
    if (!o.json_path.empty())
      write_file(o.json_path, report_to_json(rep, o.timings));
    if (rep.integrity_fatals) return 4;
    return 0;
  }

  if (o.mode == "profile") {
    if (o.plan.empty()) throw ConfigError("profile mode needs --plan output path");
    std::map<std::string, LayerPlan> plan_map;
    Tensor4<T> x = D0;
    for (const ModelLayer<T>& l : model.layers) {
      ProfileResult pr = profile_layer(x, l.W, l.cfg.bias ? &l.bias : nullptr,
                                       l.cfg.params(), model.tau, 5);
      LayerDims d{l.cfg.batch, l.cfg.kernels, l.cfg.channels, l.cfg.height,
                  l.cfg.kernel_size, l.extent};
      const auto [p_r, p_c] = estimate_error_probs(d);
      LayerPlan p;
      p.tau = model.tau;
      p.t0 = pr.rc_t0;
      p.t1 = pr.rc_t1;
      p.t2 = pr.rc_t2;
      p.p_r = p_r;
      p.rc_enabled = decide_rc(pr.rc_t0, pr.rc_t1, pr.rc_t2, p_r, p_c);
      p.clc_enabled = decide_clc(pr.clc_t0, pr.clc_t1, pr.clc_t2, p_r, p_c);
      plan_map[l.cfg.name] = p;
      std::printf("%-12s t0=%.3e t1=%.3e t2=%.3e rc=%s clc=%s%s\n",
                  l.cfg.name.c_str(), p.t0, p.t1, p.t2,
                  p.rc_enabled ? "on" : "off", p.clc_enabled ? "on" : "off",
                  pr.used_cost_model ? " (cost model)" : "");
      x = conv_forward(x, l.W, l.cfg.bias ? &l.bias : nullptr, l.cfg.params(),
                       impl);
    }
    save_plan(o.plan, plan_map);
    return 0;
  }

  throw ConfigError("unknown mode: " + o.mode);
}

int dispatch_run(const RunOptions& o) {
  ModelConfig cfg = load_model_config(o.config);
  if (cfg.element_type == "f64") return do_run<double>(o);
  return do_run<float>(o);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"checksum-protected convolution engine"};
  app.require_subcommand(1);

  RunOptions ro;
  CLI::App* run = app.add_subcommand("run", "execute a model in one of four modes");
  run->add_option("--mode", ro.mode, "baseline | protected | campaign | profile")
      ->required()
      ->check(CLI::IsMember({"baseline", "protected", "campaign", "profile"}));
  run->add_option("--config", ro.config, "model config JSON")->required();
  run->add_option("--weights", ro.weights, "weight file")->required();
  run->add_option("--corpus", ro.corpus, "fault corpus (campaign mode)");
  run->add_option("--plan", ro.plan, "plan file (read; written by profile mode)");
  run->add_option("--seed", ro.seed, "input generation seed");
  run->add_option("--tau", ro.tau, "comparison tolerance override");
  run->add_option("--impl", ro.impl, "convolution implementation")
      ->check(CLI::IsMember({"direct", "mm"}));
  run->add_option("--json", ro.json_path, "write machine-readable report here");
  run->add_option("--out", ro.out_path, "write final output tensor (raw) here");
  run->add_flag("--timings", ro.timings, "include wall times in reports");

  struct {
    std::string config, out;
    std::uint64_t seed = 42;
  } mw;
  CLI::App* mkw = app.add_subcommand("make-weights", "generate a random weight file");
  mkw->add_option("--config", mw.config)->required();
  mkw->add_option("--out", mw.out)->required();
  mkw->add_option("--seed", mw.seed);

  struct {
    std::string config, out;
    std::size_t runs = 1000;
    std::uint64_t seed = 7;
  } gc;
  CLI::App* gen = app.add_subcommand("gen-corpus", "generate a fault corpus");
  gen->add_option("--config", gc.config)->required();
  gen->add_option("--out", gc.out)->required();
  gen->add_option("--runs", gc.runs);
  gen->add_option("--seed", gc.seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return dispatch_run(ro);
    if (mkw->parsed()) {
      ftconv::ModelConfig cfg = ftconv::load_model_config(mw.config);
      ftconv::save_weights(mw.out, cfg, ftconv::random_weights(cfg, mw.seed));
      return 0;
    }
    if (gen->parsed()) {
      ftconv::ModelConfig cfg = ftconv::load_model_config(gc.config);
      std::vector<ftconv::LayerGrid> grids;
      for (const ftconv::LayerConfig& l : cfg.layers)
        grids.push_back({l.batch, l.kernels, l.channels, l.height, l.kernel_size});
      ftconv::save_corpus(gc.out,
                          ftconv::campaign(grids, gc.runs, {}, gc.seed));
      return 0;
    }
  } catch (const ftconv::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ftconv::ShapeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ftconv::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const ftconv::IntegrityError& e) {
    std::cerr << "integrity error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
