#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"

namespace {

using namespace lareqa;
using namespace lareqa::cli;

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("-c,--config", c.config_path, "JSON config file");
  sub->add_option("--set", c.overrides, "override a config value, e.g. --set embeddings.toy.strength=0.5")
      ->take_all();
  sub->add_option("-o,--out", c.out_dir, "output directory (overrides output_dir)");
}

Run make_run(const Common& c, const std::string& command) {
  Run run;
  run.command = command;
  run.cfg = c.config_path.empty() ? config::resolve(nlohmann::json::object()) : config::load(c.config_path);
  for (const auto& o : c.overrides) config::apply_override(run.cfg, o);
  if (!c.out_dir.empty()) run.cfg["output_dir"] = c.out_dir;
  run.cfg = config::resolve(run.cfg);
  return run;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Language-agnostic answer retrieval: corpus building, evaluation and bias analysis"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(LAREQA_VERSION));

  Common common;
  ConvertOptions convert_opt;
  ReportOptions report_opt;
  bool zero_shot = false;
  std::optional<std::string> strategy;

  auto* convert = app.add_subcommand("convert", "build a retrieval task from SQuAD-format files");
  add_common(convert, common);
  convert->add_option("--input", convert_opt.inputs, "lang=path of a SQuAD JSON file (repeatable)");
  convert->add_option("--boundaries", convert_opt.boundaries, "lang=path of a sentence-boundary sidecar");
  convert->add_option("--languages", convert_opt.languages, "keep only these languages")->delimiter(',');

  auto* stats = app.add_subcommand("stats", "per-language question and candidate counts");
  add_common(stats, common);

  auto* eval = app.add_subcommand("eval", "mAP over the full multilingual pool");
  add_common(eval, common);
  eval->add_flag("--zero-shot", zero_shot, "retrieve within each language separately");

  auto* zs = app.add_subcommand("zero-shot", "per-language mAP with monolingual pools");
  add_common(zs, common);

  auto* bias = app.add_subcommand("bias", "remove-one, single-target and top-k language analyses");
  add_common(bias, common);

  auto* batches = app.add_subcommand("batches", "generate training batches");
  add_common(batches, common);
  batches->add_option("--strategy", strategy, "EnEn, XX, XXmono or XY");

  auto* loss = app.add_subcommand("loss-check", "compare the loss gradient with finite differences");
  add_common(loss, common);

  auto* probe = app.add_subcommand("probe", "PCA projection and language-ID probe");
  add_common(probe, common);

  auto* report = app.add_subcommand("report", "render heatmaps and the remove-one ranking table");
  add_common(report, common);
  report->add_option("--matrix", report_opt.matrices, "matrix CSV to render (repeatable)");
  report->add_option("--remove-one", report_opt.remove_one, "name=path of a remove_one.json (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    auto* sub = app.get_subcommands().front();
    Run run = make_run(common, sub->get_name());
    if (sub == convert) return cmd_convert(run, convert_opt);
    if (sub == stats) return cmd_stats(run);
    if (sub == eval) return cmd_eval(run, zero_shot);
    if (sub == zs) return cmd_zero_shot(run);
    if (sub == bias) return cmd_bias(run);
    if (sub == batches) return cmd_batches(run, strategy);
    if (sub == loss) return cmd_loss_check(run);
    if (sub == probe) return cmd_probe(run);
    if (sub == report) return cmd_report(run, report_opt);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
