// Copyright 2026 The xadapt Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// xadapt command line driver. Every subcommand reads and writes under
// --out-dir; see include/xadapt/harness/store.hpp for the layout.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "xadapt/harness/store.hpp"

namespace {

using namespace xadapt;
using namespace xadapt::harness;

struct Common {
  std::string config_path;
  std::string out_dir = "xadapt_out";
  std::optional<std::uint64_t> seed;
  std::string strategy;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "JSON experiment config");
  app->add_option("--out-dir", c.out_dir, "Output directory")->capture_default_str();
  app->add_option("--seed", c.seed, "Experiment seed (overrides the config)");
  app->add_option("--strategy", c.strategy, "Adaptation strategy (overrides the config)");
}

/// --config, else <out-dir>/config.json, else defaults; then flag overrides.
ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg;
  if (!c.config_path.empty())
    cfg = load_config(c.config_path);
  else if (fs::exists(fs::path(c.out_dir) / "config.json"))
    cfg = load_config((fs::path(c.out_dir) / "config.json").string());
  if (c.seed) cfg.seed = *c.seed;
  if (!c.strategy.empty()) cfg.strategy = c.strategy;
  cfg.validate();
  return cfg;
}

std::vector<std::string> selected_targets(const ExperimentConfig& cfg, const std::string& only) {
  std::vector<std::string> v;
  for (const auto& t : cfg.targets)
    if (only.empty() || t.id == only) v.push_back(t.id);
  if (v.empty()) throw ConfigError("unknown target '" + only + "'");
  return v;
}

void log_line(const std::string& s) { std::fprintf(stderr, "%s\n", s.c_str()); }

void print_report(const RunReport& r) {
  for (const auto& l : r.languages)
    std::printf("%s %s ter=%.4f test=%zu\n", r.strategy.c_str(), l.language.c_str(), l.ter, l.test_size);
  std::printf("%s AVG=%.4f WAVG=%.4f trainable=%zu/%zu (%.2f%%) audit=%s\n", r.strategy.c_str(), r.average,
              r.weighted_average, r.trainable_params, r.full_params, 100.0 * r.trainable_ratio(),
              r.freeze_audit_ok ? "ok" : "FAILED");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adapter-based cross-lingual adaptation on synthetic languages"};
  app.require_subcommand(1);
  Common common;

  auto* gen = app.add_subcommand("gen-data", "Generate languages and corpora");
  auto* pre = app.add_subcommand("pretrain", "Train the backbone and root head on the root language");
  auto* heads = app.add_subcommand("train-heads", "Train source-language heads on the frozen backbone");
  auto* adps = app.add_subcommand("train-adapters", "Train source-language adapters");
  auto* meta = app.add_subcommand("meta-train", "Pre-train a MetaAdapter over the sources");
  bool pooled = false;
  meta->add_flag("--pooled", pooled, "Pooled multi-objective pre-training instead of MAML");
  std::optional<std::size_t> meta_epochs;
  meta->add_option("--epochs", meta_epochs, "Pre-training epochs (default: config)");
  auto* fus = app.add_subcommand("train-fusion", "Train target head, adapter and fusion layers");
  std::string target;
  fus->add_option("--target", target, "Only this target language");
  auto* run = app.add_subcommand("run", "Train and evaluate one strategy on every target");
  auto* swp = app.add_subcommand("sweep", "Run one strategy over a list of values on one axis");
  std::string axis;
  std::vector<std::string> values;
  swp->add_option("--axis", axis, "gamma, meta_epochs or fusion_plan")->required();
  swp->add_option("--values", values, "Values (fusion_plan: enc<N>-dec<M>)")->required()->delimiter(',');
  auto* att = app.add_subcommand("export-attention", "Write mean fusion attention per language and layer");
  att->add_option("--target", target, "Only this target language");
  auto* rep = app.add_subcommand("report", "Summarize every report in the output directory");
  for (auto* sc : {gen, pre, heads, adps, meta, fus, run, swp, att, rep}) add_common(sc, common);

  CLI11_PARSE(app, argc, argv);

  try {
    const fs::path out = common.out_dir;
    const ExperimentConfig cfg = resolve(common);

    if (gen->parsed()) {
      Workspace ws;
      ws.cfg = cfg;
      generate_data(ws);
      save_config(out, cfg);
      save_data(ws, out);
      for (const auto& [id, c] : ws.corpora)
        std::printf("%s train=%zu valid=%zu test=%zu\n", id.c_str(), c.train.size(), c.valid.size(), c.test.size());
      return 0;
    }

    auto ws = load_workspace(cfg, out);

    if (pre->parsed()) {
      const auto r = pretrain_backbone(ws);
      save_stage(ws, out, "backbone", {partition::kBackbone, partition::head(kRoot)});
      std::printf("pretrain epochs=%zu final_train_loss=%.4f ms=%.0f\n", r.epochs_run, r.train_loss.back(),
                  ws.stage_ms["pretrain"]);
    } else if (heads->parsed()) {
      std::set<std::string> parts;
      for (const auto& s : ws.source_ids()) {
        const auto r = train_head(ws, s, false);
        parts.insert(partition::head(s));
        std::printf("head %s final_train_loss=%.4f\n", s.c_str(), r.train_loss.back());
      }
      save_stage(ws, out, "heads", parts);
    } else if (adps->parsed()) {
      std::set<std::string> parts;
      for (const auto& s : ws.source_ids()) {
        const auto r = train_adapter(ws, s, false);
        parts.insert(partition::adapter(s));
        std::printf("adapter %s final_train_loss=%.4f\n", s.c_str(), r.train_loss.back());
      }
      save_stage(ws, out, "adapters", parts);
    } else if (meta->parsed()) {
      if (pooled) {
        mol_pretrain(ws, meta_epochs.value_or(cfg.mol_epochs));
        save_stage(ws, out, "mol_adapter", {partition::adapter(kMolAdapter)});
        std::printf("pooled pre-training ms=%.0f\n", ws.stage_ms["mol-train"]);
      } else {
        const auto log = meta_pretrain(ws, meta_epochs.value_or(cfg.meta.epochs));
        save_stage(ws, out, "meta_adapter", {partition::adapter(kMetaAdapter)});
        write_text(out / "meta_log.jsonl", meta_log_jsonl(log));
        if (!log.empty()) std::printf("%s\n", metalearn::to_json(log.back()).dump().c_str());
      }
    } else if (fus->parsed()) {
      const std::string strategy = cfg.strategy == "simadapter_plus" ? "simadapter_plus" : "simadapter";
      for (const auto& t : selected_targets(cfg, target)) {
        Workspace w{ws.cfg, ws.specs, ws.corpora, ws.params.clone(), {}};
        const auto o = train_strategy(w, strategy, t);
        dc::Checkpoint::from_params(w.params, o.trainable).save(stage_path(out, strategy + "." + t).string());
        std::printf("%s %s fusion trained audit=%s\n", strategy.c_str(), t.c_str(),
                    o.audit_failures.empty() ? "ok" : "FAILED");
        for (const auto& f : o.audit_failures) log_line("audit: " + f);
      }
    } else if (run->parsed()) {
      const auto r = run_strategy(ws, cfg.strategy, [&](const std::string& t, ParamSet<double>& ps,
                                                         const StrategyOutcome& o) {
        dc::Checkpoint::from_params(ps, o.trainable).save(stage_path(out, cfg.strategy + "." + t).string());
      });
      save_report(r, out);
      print_report(r);
      if (!r.freeze_audit_ok) {
        for (const auto& f : r.audit_failures) log_line("audit: " + f);
        return 3;
      }
    } else if (swp->parsed()) {
      const ParamSet<double>* pretrained = ws.params.has_partition(partition::kBackbone) ? &ws.params : nullptr;
      const auto rows = sweep(cfg, axis, values, pretrained);
      for (const auto& row : rows) {
        const auto dir = out / "sweep" / (axis + "=" + row.value);
        fs::create_directories(dir);
        save_report(row.report, dir);
      }
      const auto csv = sweep_csv(axis, rows);
      write_text(out / ("sweep." + axis + ".csv"), csv);
      std::fputs(csv.c_str(), stdout);
    } else if (att->parsed()) {
      const std::string strategy = cfg.strategy == "simadapter_plus" ? "simadapter_plus" : "simadapter";
      for (const auto& t : selected_targets(cfg, target)) {
        const auto ck = stage_path(out, strategy + "." + t);
        if (!fs::exists(ck)) throw StageError("export-attention: no " + ck.string() + " (run train-fusion)");
        auto ps = ws.params.clone();
        dc::Checkpoint::load(ck.string()).apply_to(ps);
        const ModelSpec spec{t, t, cfg.fusion_plan(t), cfg.fusion.init.temperature};
        const auto a = attention_map(ps, cfg.backbone, spec, ws.corpus(t).test);
        write_text(out / ("attention." + strategy + "." + t + ".csv"), a.csv());
        std::fputs(a.csv().c_str(), stdout);
      }
    } else if (rep->parsed()) {
      const auto reports = load_reports(out);
      if (reports.empty()) throw StageError("report: no report.*.json in " + out.string());
      const auto csv = summary_csv(reports);
      write_text(out / "summary.csv", csv);
      for (const auto& r : reports) print_report(r);
      bool has_full = false;
      for (const auto& r : reports) has_full |= r.strategy == "full_ft";
      if (has_full) {
        const auto t = time_report(reports).csv();
        write_text(out / "time_report.csv", t);
        std::fputs(t.c_str(), stdout);
      } else {
        log_line("report: no full_ft report, skipping relative timing");
      }
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
