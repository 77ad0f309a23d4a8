#pragma once

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "heatmap.hpp"
#include "lareqa/config.hpp"
#include "lareqa/lareqa.hpp"
#include "lareqa/remote.hpp"

namespace lareqa::cli {

namespace fs = std::filesystem;
using nlohmann::json;

struct Run {
  json cfg;
  std::string command;

  fs::path out_dir() const { return cfg["output_dir"].get<std::string>(); }

  fs::path task_file() const {
    const auto& f = cfg["task"]["file"];
    return f.is_null() ? out_dir() / "task.json" : fs::path(f.get<std::string>());
  }

  json provenance() const {
    return {{"tool", "lareqa"},
            {"version", LAREQA_VERSION},
            {"command", command},
            {"config_hash", config::hash(cfg)},
            {"seeds", cfg["seeds"]}};
  }

  /// Writes report JSON with provenance attached.
  void write_report(const std::string& name, json body) const {
    body["provenance"] = provenance();
    const auto path = out_dir() / name;
    io::write_file(path, body.dump(2) + "\n");
    std::cout << "wrote " << path.string() << "\n";
  }

  void write_text(const std::string& name, const std::string& text) const {
    const auto path = out_dir() / name;
    io::write_file(path, text);
    std::cout << "wrote " << path.string() << "\n";
  }
};

template <typename T>
T get(const json& j, const char* key, const char* where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError(std::string("config: '") + where + "." + key + "' has the wrong type or is missing");
  }
}

// ---------------------------------------------------------------------------
// Task and embeddings

inline std::string stats_table(const RetrievalTask& task) {
  std::string out = "language  questions  candidates\n";
  char buf[64];
  std::size_t tq = 0, tc = 0;
  for (const auto& [lang, s] : task_stats(task)) {
    std::snprintf(buf, sizeof buf, "%-8s  %9zu  %10zu\n", lang.str().c_str(), s.questions, s.candidates);
    out += buf;
    tq += s.questions;
    tc += s.candidates;
  }
  std::snprintf(buf, sizeof buf, "%-8s  %9zu  %10zu\n", "total", tq, tc);
  return out + buf;
}

inline std::string stats_csv(const RetrievalTask& task) {
  std::string out = "language,questions,candidates\n";
  for (const auto& [lang, s] : task_stats(task)) {
    out += lang.str() + "," + std::to_string(s.questions) + "," + std::to_string(s.candidates) + "\n";
  }
  return out;
}

inline RetrievalTask load_run_task(const Run& run) {
  RetrievalTask task = load_task(run.task_file());
  const auto& table = run.cfg["task"]["translation_table"];
  if (!table.is_null()) {
    task = translate_task(task, parse_translation_table(io::read_file(table.get<std::string>())));
  }
  return task;
}

struct TaskEmbeddings {
  EmbeddingSet questions;
  EmbeddingSet candidates;
};

inline TaskEmbeddings embeddings_for(const Run& run, const RetrievalTask& task) {
  const json& e = run.cfg["embeddings"];
  const std::string source = get<std::string>(e, "source", "embeddings");
  std::vector<std::string> qids, cids;
  for (const auto& q : task.questions) qids.push_back(q.question_id);
  for (const auto& c : task.candidates) cids.push_back(c.candidate_id);

  if (source == "toy") {
    const json& t = e["toy"];
    const ToyEncoder enc{get<std::size_t>(t, "dim", "embeddings.toy"), get<std::uint64_t>(t, "seed", "embeddings.toy"),
                         get<double>(t, "strength", "embeddings.toy")};
    return {toy_question_embeddings(task, enc), toy_candidate_embeddings(task, enc)};
  }
  if (source == "file") {
    const json& f = e["file"];
    if (f["questions"].is_null() || f["candidates"].is_null()) {
      throw ValidationError("config: embeddings.file.questions and embeddings.file.candidates are required");
    }
    auto q = load_embeddings(f["questions"].get<std::string>(), qids, EmbeddingKind::question);
    auto c = load_embeddings(f["candidates"].get<std::string>(), cids, EmbeddingKind::candidate);
    for (const auto* set : {&q, &c}) {
      for (const auto& w : set->warnings()) std::cerr << "warning: " << w << "\n";
    }
    return {std::move(q), std::move(c)};
  }
  if (source == "remote") {
    const json& r = e["remote"];
    if (r["url"].is_null()) throw ValidationError("config: embeddings.remote.url is required");
    EncoderEndpoint ep;
    ep.url = r["url"].get<std::string>();
    ep.batch_size = get<std::size_t>(r, "batch_size", "embeddings.remote");
    ep.timeout = std::chrono::milliseconds(get<std::int64_t>(r, "timeout_ms", "embeddings.remote"));
    ep.retries = get<std::size_t>(r, "retries", "embeddings.remote");
    ep.parallelism = get<std::size_t>(r, "parallelism", "embeddings.remote");
    std::vector<EncodeItem> qi, ci;
    for (const auto& q : task.questions) qi.push_back({q.question_id, q.text, std::nullopt});
    for (const auto& c : task.candidates) ci.push_back({c.candidate_id, c.sentence, c.context});
    return {encode_remote(ep, qi, EmbeddingKind::question), encode_remote(ep, ci, EmbeddingKind::candidate)};
  }
  throw ValidationError("config: embeddings.source must be toy, file or remote, not '" + source + "'");
}

// ---------------------------------------------------------------------------
// Subcommands

struct ConvertOptions {
  std::vector<std::string> inputs;      // lang=path
  std::vector<std::string> boundaries;  // lang=path
  std::vector<std::string> languages;
};

inline std::pair<std::string, std::string> split_assignment(const std::string& s, const char* what) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == s.size()) {
    throw ValidationError(std::string(what) + " '" + s + "' must look like lang=path");
  }
  return {s.substr(0, eq), s.substr(eq + 1)};
}

inline int cmd_convert(Run& run, const ConvertOptions& opt) {
  json inputs = run.cfg["task"]["inputs"];
  for (const auto& s : opt.inputs) {
    const auto [lang, path] = split_assignment(s, "--input");
    inputs.push_back({{"language", lang}, {"path", path}});
  }
  for (const auto& s : opt.boundaries) {
    const auto [lang, path] = split_assignment(s, "--boundaries");
    bool found = false;
    for (auto& in : inputs) {
      if (in.value("language", "") == lang) {
        in["boundaries"] = path;
        found = true;
      }
    }
    if (!found) throw ValidationError("--boundaries given for " + lang + " but no input for that language");
  }
  if (!opt.languages.empty()) run.cfg["task"]["languages"] = opt.languages;
  run.cfg["task"]["inputs"] = inputs;
  if (inputs.empty()) throw ValidationError("convert: no inputs (task.inputs or --input)");

  std::optional<std::set<std::string>> keep;
  if (!run.cfg["task"]["languages"].is_null()) keep = run.cfg["task"]["languages"].get<std::set<std::string>>();

  std::vector<ParagraphRecord> records;
  std::set<std::string> seen;
  for (const auto& in : inputs) {
    const std::string lang = get<std::string>(in, "language", "task.inputs[]");
    if (keep && !keep->count(lang)) continue;
    seen.insert(lang);
    std::optional<fs::path> sidecar;
    if (in.contains("boundaries") && !in["boundaries"].is_null()) sidecar = in["boundaries"].get<std::string>();
    auto recs = load_squad_file(get<std::string>(in, "path", "task.inputs[]"), LanguageCode(lang), sidecar);
    records.insert(records.end(), std::make_move_iterator(recs.begin()), std::make_move_iterator(recs.end()));
  }
  if (keep) {
    for (const auto& l : *keep) {
      if (!seen.count(l)) throw ValidationError("--languages names " + l + " but there is no input for it");
    }
  }
  const RetrievalTask task = build_retrieval_task(records);
  for (const auto& w : task.meta.warnings) std::cerr << "warning: " << w << "\n";
  io::write_file(run.task_file(), serialize_task(task));
  std::cout << "wrote " << run.task_file().string() << "\n";
  run.write_text("stats.csv", stats_csv(task));
  std::cout << stats_table(task);
  return 0;
}

inline int cmd_stats(const Run& run) {
  std::cout << stats_table(load_run_task(run));
  return 0;
}

inline json zero_shot_json(const ZeroShotResult& z) {
  json per = json::object();
  for (const auto& [lang, r] : z.per_language) {
    per[lang.str()] = {{"map", round6(r.map_score)}, {"num_questions", r.num_questions}, {"num_dropped", r.num_dropped}};
  }
  return {{"per_language", per}, {"average", round6(z.average)}};
}

inline int cmd_zero_shot(const Run& run) {
  const auto task = load_run_task(run);
  const auto emb = embeddings_for(run, task);
  const auto z = zero_shot_eval(task, emb.questions, emb.candidates);
  run.write_report("zero_shot.json", zero_shot_json(z));
  char buf[64];
  for (const auto& [lang, r] : z.per_language) {
    std::snprintf(buf, sizeof buf, "%-8s %.4f\n", lang.str().c_str(), r.map_score);
    std::cout << buf;
  }
  std::snprintf(buf, sizeof buf, "%-8s %.4f\n", "avg", z.average);
  std::cout << buf;
  return 0;
}

inline int cmd_eval(const Run& run, bool zero_shot) {
  if (zero_shot) return cmd_zero_shot(run);
  const auto task = load_run_task(run);
  const auto emb = embeddings_for(run, task);
  const auto res = evaluate(task, emb.questions, emb.candidates);
  run.write_report("eval.json", eval_result_to_json(res));
  if (run.cfg["eval"]["rankings"].get<bool>()) {
    std::optional<std::size_t> top_k;
    if (!run.cfg["eval"]["top_k"].is_null()) top_k = run.cfg["eval"]["top_k"].get<std::size_t>();
    run.write_text("rankings.jsonl", rankings_to_jsonl(rank_all(task, emb.questions, emb.candidates, top_k)));
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "mAP %.4f over %zu questions (%zu dropped)\n", res.map_score, res.num_questions,
                res.num_dropped);
  std::cout << buf;
  return 0;
}

inline int cmd_bias(const Run& run) {
  const auto task = load_run_task(run);
  const auto emb = embeddings_for(run, task);
  const auto seed = get<std::uint64_t>(run.cfg["seeds"], "remove_one", "seeds");
  const auto rep = remove_one_report(task, emb.questions, emb.candidates, seed);
  run.write_report("remove_one.json", remove_one_to_json(rep));

  const auto single = single_target_matrix(task, emb.questions, emb.candidates);
  run.write_text("single_target.csv", matrix_to_csv(single));
  run.write_report("single_target.json", matrix_to_json(single));

  const auto k = std::min(get<std::size_t>(run.cfg["bias"], "top_k", "bias"), task.candidates.size());
  const auto dist = top_k_language_distribution(task, emb.questions, emb.candidates, k);
  run.write_text("top_k.csv", matrix_to_csv(dist));
  auto dist_json = matrix_to_json(dist);
  dist_json["k"] = k;
  run.write_report("top_k.json", dist_json);

  char buf[160];
  std::snprintf(buf, sizeof buf, "mAP(-rand) %.4f  mAP(-same) %.4f  %%delta %s\n", rep.map_minus_rand,
                rep.map_minus_same,
                rep.pct_delta ? std::to_string(round6(*rep.pct_delta)).c_str() : "n/a");
  std::cout << buf;
  std::snprintf(buf, sizeof buf, "single-target diagonal share %.4f, top-%zu diagonal share %.4f\n",
                diagonal_share(single), k, diagonal_share(dist));
  std::cout << buf;
  return 0;
}

inline PairSet load_pairs(const Run& run, Strategy strategy) {
  const json& t = run.cfg["training"];
  if (t["base"].is_null()) throw ValidationError("config: training.base is required");
  const fs::path base_path = t["base"].get<std::string>();
  std::vector<TrainingPair> base;
  if (base_path.extension() == ".jsonl") {
    base = parse_pairs_jsonl(io::read_file(base_path));
  } else {
    base = pairs_from_task(build_retrieval_task(load_squad_file(base_path, LanguageCode("en"))));
  }
  TranslationTable table;
  if (!t["translations"].is_null()) table = parse_translations_jsonl(io::read_file(t["translations"].get<std::string>()));
  std::vector<LanguageCode> langs;
  for (const auto& l : t["languages"]) langs.emplace_back(l.get<std::string>());
  return expand_pairs(std::move(base), std::move(table), std::move(langs), strategy);
}

inline int cmd_batches(Run& run, const std::optional<std::string>& strategy_flag) {
  if (strategy_flag) run.cfg["training"]["strategy"] = *strategy_flag;
  const json& t = run.cfg["training"];
  const Strategy strategy = parse_strategy(get<std::string>(t, "strategy", "training"));
  const PairSet pairs = load_pairs(run, strategy);
  auto stream = make_batches(pairs, strategy, get<std::size_t>(t, "sub_batch_size", "training"),
                             get<std::uint64_t>(run.cfg["seeds"], "batches", "seeds"));
  std::optional<std::size_t> limit;
  if (!t["max_batches"].is_null()) limit = t["max_batches"].get<std::size_t>();
  std::string out;
  std::size_t written = 0;
  while (!limit || written < *limit) {
    auto b = stream.next();
    if (!b) break;
    if (auto why = batch_violation(*b)) throw ValidationError("batch " + std::to_string(b->index) + ": " + *why);
    out += batch_to_jsonl(*b);
    ++written;
  }
  run.write_text("batches.jsonl", out);
  const auto& info = stream.info();
  run.write_report("batches_meta.json", {{"strategy", to_string(strategy)},
                                         {"num_pairs", pairs.size()},
                                         {"sub_batch_size", info.sub_batch_size},
                                         {"sub_batches_per_step", info.sub_batches_per_step},
                                         {"num_batches", info.num_batches},
                                         {"written", written},
                                         {"dropped_pairs", info.dropped_pairs},
                                         {"warnings", info.warnings}});
  for (const auto& w : info.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << pairs.size() << " pairs, " << written << " batches written, " << info.dropped_pairs
            << " pairs dropped\n";
  return 0;
}

inline int cmd_loss_check(const Run& run) {
  const json& l = run.cfg["loss_check"];
  GradientCheckOptions opt;
  opt.trials = get<std::size_t>(l, "trials", "loss_check");
  opt.size = get<std::size_t>(l, "size", "loss_check");
  opt.scale = get<double>(l, "scale", "loss_check");
  opt.step = get<double>(l, "step", "loss_check");
  opt.threshold = get<double>(l, "threshold", "loss_check");
  opt.seed = get<std::uint64_t>(l, "seed", "loss_check");
  const auto r = gradient_check(opt);
  run.write_report("loss_check.json", {{"trials", opt.trials},
                                       {"size", opt.size},
                                       {"scale", opt.scale},
                                       {"step", opt.step},
                                       {"threshold", opt.threshold},
                                       {"max_relative_error_exclusive", r.max_error_exclusive},
                                       {"max_relative_error_inclusive", r.max_error_inclusive},
                                       {"passed", r.passed}});
  char buf[160];
  std::snprintf(buf, sizeof buf, "max relative error: exclusive %.3e, inclusive %.3e (threshold %.1e) %s\n",
                r.max_error_exclusive, r.max_error_inclusive, opt.threshold, r.passed ? "ok" : "FAILED");
  std::cout << buf;
  if (!r.passed) throw ValidationError("analytic gradient disagrees with finite differences");
  return 0;
}

inline int cmd_probe(const Run& run) {
  const auto task = load_run_task(run);
  const auto emb = embeddings_for(run, task);
  const json& p = run.cfg["probe"];
  std::set<LanguageCode> langs;
  for (const auto& l : p["languages"]) langs.emplace(l.get<std::string>());
  const auto data = collect_embeddings(task, emb.questions, emb.candidates, langs);
  PowerIterationOptions pio;
  pio.seed = get<std::uint64_t>(run.cfg["seeds"], "pca", "seeds");
  const auto proj = project(data, pio);
  run.write_text("projection.csv", projection_to_csv(proj));
  ProbeOptions po;
  po.seed = get<std::uint64_t>(run.cfg["seeds"], "probe", "seeds");
  po.epochs = get<std::size_t>(p, "epochs", "probe");
  po.learning_rate = get<double>(p, "learning_rate", "probe");
  po.train_fraction = get<double>(p, "train_fraction", "probe");
  const auto r = language_id_probe(data.vectors, data.languages, po);
  auto body = probe_to_json(r);
  body["explained_variance"] = {proj.explained_variance[0], proj.explained_variance[1]};
  run.write_report("probe.json", body);
  char buf[128];
  std::snprintf(buf, sizeof buf, "language-ID holdout accuracy %.4f (%zu train, %zu held out)\n", r.holdout_accuracy,
                r.num_train, r.num_holdout);
  std::cout << buf;
  return 0;
}

struct ReportOptions {
  std::vector<std::string> matrices;
  std::vector<std::string> remove_one;  // name=path
};

inline int cmd_report(Run& run, const ReportOptions& opt) {
  std::vector<std::string> matrices = run.cfg["report"]["matrices"].get<std::vector<std::string>>();
  matrices.insert(matrices.end(), opt.matrices.begin(), opt.matrices.end());
  std::map<std::string, std::string> models = run.cfg["report"]["remove_one"].get<std::map<std::string, std::string>>();
  for (const auto& s : opt.remove_one) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ValidationError("--remove-one '" + s + "' must look like name=path");
    models[s.substr(0, eq)] = s.substr(eq + 1);
  }
  if (matrices.empty() && models.empty()) throw ValidationError("report: nothing to render");

  for (const auto& path : matrices) {
    const auto m = matrix_from_csv(io::read_file(path));
    const fs::path p(path);
    run.write_text(p.stem().string() + ".svg", report::heatmap_svg(m, p.stem().string()));
  }
  if (!models.empty()) {
    std::map<std::string, RemoveOneReport> reps;
    for (const auto& [name, path] : models) {
      json j;
      try {
        j = json::parse(io::read_file(path));
        RemoveOneReport r;
        r.map_minus_rand = j.at("map_minus_rand").get<double>();
        r.map_minus_same = j.at("map_minus_same").get<double>();
        if (!j.at("pct_delta").is_null()) r.pct_delta = j.at("pct_delta").get<double>();
        reps[name] = r;
      } catch (const json::exception& e) {
        throw ParseError(path + ": " + e.what());
      }
    }
    const auto ranks = rank_by_pct_delta(reps);
    std::string csv = "model,map_minus_rand,map_minus_same,pct_delta,rank\n";
    char buf[160];
    for (const auto& [name, r] : reps) {
      std::snprintf(buf, sizeof buf, ",%.2f,%.2f,%s,%zu\n", r.map_minus_rand, r.map_minus_same,
                    r.pct_delta ? std::to_string(round6(*r.pct_delta)).substr(0, 4).c_str() : "", ranks.at(name));
      csv += name + buf;
    }
    run.write_text("remove_one_table.csv", csv);
    std::cout << csv;
  }
  return 0;
}

}  // namespace lareqa::cli
