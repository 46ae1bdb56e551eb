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

#pragma once

// On-disk layout of an experiment directory:
//
//   config.json                 resolved configuration
//   data/<lang>/                spec.json + train/valid/test.bin (families: spec.json only)
//   ckpt/<stage>.ckpt           backbone, heads, adapters, meta_adapter, mol_adapter
//   ckpt/<strategy>.<target>.ckpt   target partitions after a run
//   meta_log.jsonl, report.<strategy>.json, decode.<strategy>.<target>.jsonl, ...

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "xadapt/harness/pipeline.hpp"
#include "xadapt/synth/corpus_io.hpp"

namespace xadapt::harness {

namespace fs = std::filesystem;

inline fs::path data_dir(const fs::path& out) { return out / "data"; }
inline fs::path stage_path(const fs::path& out, const std::string& stage) { return out / "ckpt" / (stage + ".ckpt"); }

inline void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  synth::write_file(p, text);
}

inline void save_config(const fs::path& out, const ExperimentConfig& cfg) {
  write_text(out / "config.json", to_json(cfg).dump(2) + "\n");
}

inline void save_data(const Workspace& ws, const fs::path& out) {
  for (const auto& [id, spec] : ws.specs) {
    const auto c = ws.corpora.find(id);
    if (c == ws.corpora.end())
      write_text(data_dir(out) / id / "spec.json", nlohmann::json(spec).dump(2) + "\n");
    else
      synth::save_language(data_dir(out) / id, spec, c->second);
  }
}

/// Specs and corpora from disk; languages listed in the config must exist.
inline Workspace load_data(const ExperimentConfig& cfg, const fs::path& out) {
  Workspace ws;
  ws.cfg = cfg;
  std::vector<std::string> ids{kRoot};
  for (const auto* list : {&cfg.sources, &cfg.targets})
    for (const auto& l : *list) ids.push_back(l.id);
  for (const auto& id : ids) {
    const auto dir = data_dir(out) / id;
    if (!fs::is_directory(dir)) throw StageError("missing corpus for language '" + id + "' (run gen-data)");
    ws.specs[id] = synth::load_spec(dir);
    ws.corpora[id] = synth::load_corpus(dir);
  }
  for (const auto& f : cfg.families)
    if (fs::exists(data_dir(out) / f.id / "spec.json")) ws.specs[f.id] = synth::load_spec(data_dir(out) / f.id);
  return ws;
}

inline void save_stage(const Workspace& ws, const fs::path& out, const std::string& stage,
                       const std::set<std::string>& partitions) {
  fs::create_directories(out / "ckpt");
  dc::Checkpoint::from_params(ws.params, partitions).save(stage_path(out, stage).string());
}

/// Applies every stage checkpoint present, in pipeline order.
inline void load_stages(Workspace& ws, const fs::path& out) {
  for (const char* stage : {"backbone", "heads", "adapters", "meta_adapter", "mol_adapter"}) {
    const auto p = stage_path(out, stage);
    if (fs::exists(p)) dc::Checkpoint::load(p.string()).apply_to(ws.params);
  }
  ws.params.freeze_all();
}

inline Workspace load_workspace(const ExperimentConfig& cfg, const fs::path& out) {
  auto ws = load_data(cfg, out);
  load_stages(ws, out);
  return ws;
}

inline std::string decode_jsonl(const std::vector<DecodeRecord>& records) {
  std::string out;
  for (const auto& r : records)
    out += nlohmann::json{{"utt_id", r.utt_id}, {"ref", r.ref}, {"hyp", r.hyp}, {"score", r.score}, {"ter", r.ter}}
               .dump() +
           "\n";
  return out;
}

inline std::string meta_log_jsonl(const std::vector<metalearn::MetaLogEntry>& log) {
  std::string out;
  for (const auto& e : log) out += metalearn::to_json(e).dump() + "\n";
  return out;
}

/// Saves the report, per-target decode records and attention maps.
inline void save_report(const RunReport& r, const fs::path& out) {
  write_text(out / ("report." + r.strategy + ".json"), to_json(r).dump(2) + "\n");
  for (const auto& l : r.languages)
    write_text(out / ("decode." + r.strategy + "." + l.language + ".jsonl"), decode_jsonl(l.records));
  for (const auto& [t, a] : r.attention) write_text(out / ("attention." + r.strategy + "." + t + ".csv"), a.csv());
}

inline std::vector<RunReport> load_reports(const fs::path& out) {
  std::vector<RunReport> v;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(out)) {
    const auto name = e.path().filename().string();
    if (name.starts_with("report.") && name.ends_with(".json")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& p : files) v.push_back(report_from_json(nlohmann::json::parse(synth::read_file(p))));
  return v;
}

inline std::string summary_csv(const std::vector<RunReport>& reports) {
  std::string out = "strategy,seed,language,ter,test_size\n";
  char buf[200];
  for (const auto& r : reports) {
    for (const auto& l : r.languages) {
      std::snprintf(buf, sizeof buf, "%s,%llu,%s,%.6f,%zu\n", r.strategy.c_str(),
                    static_cast<unsigned long long>(r.seed), l.language.c_str(), l.ter, l.test_size);
      out += buf;
    }
    std::snprintf(buf, sizeof buf, "%s,%llu,AVG,%.6f,\n%s,%llu,WAVG,%.6f,\n", r.strategy.c_str(),
                  static_cast<unsigned long long>(r.seed), r.average, r.strategy.c_str(),
                  static_cast<unsigned long long>(r.seed), r.weighted_average);
    out += buf;
  }
  return out;
}

}  // namespace xadapt::harness
