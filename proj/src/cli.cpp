#include "arf/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "arf/checkpoint.hpp"
#include "arf/config.hpp"
#include "arf/errors.hpp"
#include "arf/gradcheck.hpp"
#include "arf/io.hpp"

namespace arf {

namespace fs = std::filesystem;

namespace {

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::vector<std::string> split_header(const std::vector<Metrics>& runs, std::string_view prefix) {
  std::vector<std::string> names;
  for (const auto& m : runs)
    for (const auto& s : m.splits)
      if (s.split_name.starts_with(prefix) &&
          std::find(names.begin(), names.end(), s.split_name) == names.end())
        names.push_back(s.split_name);
  return names;
}

std::string cell(const Metrics& m, std::string_view split) {
  const auto* s = m.find(split);
  return s ? fixed2(s->accuracy_percent) : "-";
}

// RFC 4180 quoting for cells that contain separators or quotes.
std::string csv_field(const std::string& v) {
  if (v.find_first_of(",\"\n") == std::string::npos) return v;
  std::string q = "\"";
  for (char c : v) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

std::vector<double> parse_alphas(const std::string& text) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const std::string tok = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    double v = 0.0;
    const auto [end, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (tok.empty() || ec != std::errc() || end != tok.data() + tok.size()) {
      throw InvalidArgumentError("bad alpha value '" + tok + "'");
    }
    out.push_back(v);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

// Options shared by the pipeline stages.
struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "run configuration JSON")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "seed for every stochastic step");
}

// Config file (or built-in defaults), then the explicit seed. When neither
// names a seed, stages that read a bundle inherit the bundle's seed.
RunConfig resolve(const Common& c, const BenchmarkBundle* bundle) {
  RunConfig cfg;
  bool seeded = false;
  if (!c.config_path.empty()) {
    const std::string text = read_file(c.config_path);
    cfg = parse_run_config(text);
    seeded = Json::parse(text).contains("seed");
  }
  if (c.seed) {
    cfg.seed = *c.seed;
  } else if (!seeded && bundle) {
    cfg.seed = bundle->config.seed;
  }
  return cfg;
}

void write_text(const std::string& path, const std::string& text) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  write_file_atomic(p, text);
}

}  // namespace

std::string render_report(std::span<const Metrics> runs_in, ReportTable table, ReportFormat format) {
  const std::vector<Metrics> runs(runs_in.begin(), runs_in.end());
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  switch (table) {
    case ReportTable::ds: {
      const auto ds = split_header(runs, "ds");
      header = {"Method", "ID"};
      header.insert(header.end(), ds.begin(), ds.end());
      header.push_back("Avg OOD");
      for (const auto& m : runs) {
        std::vector<std::string> r = {m.label, cell(m, "id")};
        for (const auto& d : ds) r.push_back(cell(m, d));
        const auto mean = m.mean_ds();
        r.push_back(mean ? fixed2(*mean) : "-");
        rows.push_back(std::move(r));
      }
      break;
    }
    case ReportTable::zsl:
      header = {"Method", "ID", "ZSL"};
      for (const auto& m : runs) rows.push_back({m.label, cell(m, "id"), cell(m, "zsl")});
      break;
    case ReportTable::ablation:
      header = {"L_CL", "L_Cap", "L_Ret", "ID", "DS", "ZSL"};
      for (const auto& m : runs) {
        LossSet set;
        try {
          set = parse_loss_set(m.label);
        } catch (const Error&) {
          throw InvalidArgumentError("ablation rows need loss-set labels such as 'cl,cap', got '" +
                                     m.label + "'");
        }
        const auto mark = [&](bool on) { return std::string(on ? "x" : ""); };
        const auto mean = m.mean_ds();
        rows.push_back({mark(set.cl), mark(set.cap), mark(set.ret), cell(m, "id"),
                        mean ? fixed2(*mean) : "-", cell(m, "zsl")});
      }
      break;
  }

  std::string out;
  const auto line = [&](const std::vector<std::string>& cells) {
    if (format == ReportFormat::csv) {
      for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + csv_field(cells[i]);
    } else {
      out += "|";
      for (const auto& c : cells) out += " " + c + " |";
    }
    out += "\n";
  };
  line(header);
  if (format == ReportFormat::markdown) {
    out += "|";
    for (std::size_t i = 0; i < header.size(); ++i) out += i ? " ---: |" : " --- |";
    out += "\n";
  }
  for (const auto& r : rows) line(r);
  return out;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"arf: anchor-regularized finetuning of a toy dual encoder"};
  app.name("arf");
  app.require_subcommand(1);

  // benchgen
  Common bg_common;
  std::string bg_out;
  auto* bg = app.add_subcommand("benchgen", "generate the synthetic benchmark bundle");
  add_common(bg, bg_common);
  bg->add_option("--out", bg_out, "bundle directory")->required();

  // pretrain
  Common pt_common;
  std::string pt_bundle, pt_out, pt_log;
  auto* pt = app.add_subcommand("pretrain", "contrastive pretraining on the bundle's pool");
  add_common(pt, pt_common);
  pt->add_option("--bundle", pt_bundle, "bundle directory")->required();
  pt->add_option("--out", pt_out, "checkpoint path")->required();
  pt->add_option("--log", pt_log, "training log JSONL path");

  // precompute
  std::string pc_bundle, pc_ckpt, pc_out;
  auto* pc = app.add_subcommand("precompute", "embed the candidate pool into a retrieval index");
  pc->add_option("--bundle", pc_bundle, "bundle directory")->required();
  pc->add_option("--checkpoint", pc_ckpt, "pretrained checkpoint")->required();
  pc->add_option("--out", pc_out, "index directory")->required();

  // train
  Common tr_common;
  std::string tr_bundle, tr_ckpt, tr_index, tr_out, tr_log, tr_assign;
  std::optional<std::string> tr_losses, tr_layout, tr_mode;
  std::optional<std::size_t> tr_k;
  bool tr_paper = false, tr_print = false;
  auto* tr = app.add_subcommand("train", "anchor-regularized finetuning");
  add_common(tr, tr_common);
  tr->add_option("--bundle", tr_bundle, "bundle directory");
  tr->add_option("--checkpoint", tr_ckpt, "pretrained checkpoint");
  tr->add_option("--index", tr_index, "retrieval index directory (needed when ret is active)");
  tr->add_option("--out", tr_out, "finetuned checkpoint path");
  tr->add_option("--log", tr_log, "training log JSONL path");
  tr->add_option("--assignments", tr_assign, "retrieval assignments JSONL path");
  tr->add_option("--losses", tr_losses, "subset of cl,cap,ret");
  tr->add_option("--anchor-mode", tr_layout, "sep or merge");
  tr->add_option("--retrieval-mode", tr_mode, "v2t, v2v, t2t or t2v");
  tr->add_option("--retrieval-k", tr_k, "retrieved candidates per sample");
  tr->add_flag("--paper-defaults", tr_paper, "B = 512, lr = 1e-5, wd = 0.1, 10 epochs");
  tr->add_flag("--print-config", tr_print, "print the resolved configuration and exit");

  // eval
  std::string ev_bundle, ev_ckpt, ev_out, ev_label;
  std::optional<std::string> ev_splits;
  bool ev_strict = false;
  Common ev_common;
  auto* ev = app.add_subcommand("eval", "zero-shot accuracy on the evaluation splits");
  add_common(ev, ev_common);
  ev->add_option("--bundle", ev_bundle, "bundle directory")->required();
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint to evaluate")->required();
  ev->add_option("--out", ev_out, "metrics JSON path");
  ev->add_option("--splits", ev_splits, "subset of id,ds,zsl");
  ev->add_option("--label", ev_label, "label stored in the metrics");
  ev->add_flag("--strict-zsl", ev_strict, "classify ZSL images over all classes");

  // ensemble
  std::string en_bundle, en_pre, en_ft, en_out;
  std::optional<std::string> en_alphas, en_splits;
  Common en_common;
  auto* en = app.add_subcommand("ensemble", "weight-space interpolation sweep");
  add_common(en, en_common);
  en->add_option("--bundle", en_bundle, "bundle directory")->required();
  en->add_option("--pretrained", en_pre, "pretrained checkpoint")->required();
  en->add_option("--finetuned", en_ft, "finetuned checkpoint")->required();
  en->add_option("--out", en_out, "curve CSV path");
  en->add_option("--alphas", en_alphas, "comma-separated mixing coefficients");
  en->add_option("--splits", en_splits, "subset of id,ds,zsl");

  // gradcheck
  std::uint64_t gc_seed = 0;
  std::size_t gc_seeds = 1;
  double gc_eps = 1e-5;
  auto* gc = app.add_subcommand("gradcheck", "compare analytic gradients with finite differences");
  gc->add_option("--seed", gc_seed, "first seed");
  gc->add_option("--seeds", gc_seeds, "number of consecutive seeds")->check(CLI::PositiveNumber);
  gc->add_option("--eps", gc_eps, "finite-difference step");

  // report
  std::vector<std::string> rp_metrics;
  std::string rp_table = "ds", rp_format = "md", rp_out;
  auto* rp = app.add_subcommand("report", "tabulate metrics files");
  rp->add_option("--metrics", rp_metrics, "metrics JSON files, one row each")->required();
  rp->add_option("--table", rp_table, "ds, zsl or ablation")
      ->check(CLI::IsMember({"ds", "zsl", "ablation"}));
  rp->add_option("--format", rp_format, "csv or md")->check(CLI::IsMember({"csv", "md"}));
  rp->add_option("--out", rp_out, "output path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const CLI::App* sub = nullptr;
    for (const auto* s : app.get_subcommands()) sub = s;
    err << (sub ? sub->help() : app.help());
    return kExitUsage;
  }

  try {
    if (bg->parsed()) {
      const RunConfig cfg = resolve(bg_common, nullptr);
      const BenchmarkBundle bundle = generate_benchmark(cfg.gen_config());
      write_bundle(bg_out, bundle);
      out << "bundle written to " << bg_out << " (seed " << cfg.seed << ")\n";
      return kExitOk;
    }
    if (pt->parsed()) {
      const BenchmarkBundle bundle = read_bundle(pt_bundle);
      const RunConfig cfg = resolve(pt_common, &bundle);
      const TrainResult r =
          pretrain(bundle.pretrain_pool, bundle.input_dims(), cfg.model, cfg.pretrain_config());
      write_text(pt_out, serialize_checkpoint(r.checkpoint));
      if (!pt_log.empty()) write_text(pt_log, encode_training_log(r.log));
      out << "pretrained checkpoint " << r.checkpoint.id << "\n";
      return kExitOk;
    }
    if (pc->parsed()) {
      const BenchmarkBundle bundle = read_bundle(pc_bundle);
      const Checkpoint ckpt = read_checkpoint(pc_ckpt);
      write_index(pc_out, build_candidate_index(ckpt, bundle.candidates));
      out << "index of " << bundle.candidates.size() << " candidates written to " << pc_out << "\n";
      return kExitOk;
    }
    if (tr->parsed()) {
      std::optional<BenchmarkBundle> bundle;
      if (!tr_bundle.empty()) bundle = read_bundle(tr_bundle);
      RunConfig cfg = resolve(tr_common, bundle ? &*bundle : nullptr);
      if (tr_paper) cfg.finetune = with_paper_defaults(cfg.finetune);
      if (tr_losses) cfg.finetune.enabled_losses = parse_loss_set(*tr_losses);
      if (tr_layout) cfg.finetune.anchor_layout = parse_anchor_layout(*tr_layout);
      if (tr_mode) cfg.finetune.retrieval_mode = parse_retrieval_mode(*tr_mode);
      if (tr_k) cfg.finetune.retrieval_k = *tr_k;
      const TrainConfig ft = cfg.finetune_config();
      validate(ft);
      if (tr_print) {
        out << dump_run_config(cfg);
        return kExitOk;
      }
      if (!bundle || tr_ckpt.empty() || tr_out.empty()) {
        throw InvalidArgumentError("train needs --bundle, --checkpoint and --out");
      }
      const Checkpoint start = read_checkpoint(tr_ckpt);
      std::optional<CandidateIndex> index;
      if (term_active(ft, ft.enabled_losses.ret, ft.loss_weights.ret)) {
        if (tr_index.empty()) throw InvalidArgumentError("the ret loss needs --index (see precompute)");
        index = read_index(tr_index);
      }
      const FinetuneInputs inputs{bundle->finetune, &bundle->id_prompts, bundle->captions,
                                  bundle->candidates, index ? &*index : nullptr};
      const FinetuneResult r = run_finetune(inputs, start, ft);
      write_text(tr_out, serialize_checkpoint(r.checkpoint));
      if (!tr_log.empty()) write_text(tr_log, encode_training_log(r.log));
      if (!tr_assign.empty()) write_text(tr_assign, encode_assignments(r.assignments));
      out << "finetuned checkpoint " << r.checkpoint.id << "\n";
      return kExitOk;
    }
    if (ev->parsed()) {
      const BenchmarkBundle bundle = read_bundle(ev_bundle);
      RunConfig cfg = resolve(ev_common, &bundle);
      if (ev_splits) cfg.eval.splits = parse_split_selection(*ev_splits);
      if (ev_strict) cfg.eval.strict_zsl = true;
      const Checkpoint ckpt = read_checkpoint(ev_ckpt);
      Metrics m = evaluate_splits(ckpt.params, bundle, cfg.eval);
      m.label = ev_label;
      const std::string text = encode_metrics(m);
      if (!ev_out.empty()) write_text(ev_out, text);
      out << text;
      return kExitOk;
    }
    if (en->parsed()) {
      const BenchmarkBundle bundle = read_bundle(en_bundle);
      RunConfig cfg = resolve(en_common, &bundle);
      if (en_alphas) cfg.alphas = parse_alphas(*en_alphas);
      if (en_splits) cfg.eval.splits = parse_split_selection(*en_splits);
      const Checkpoint pre = read_checkpoint(en_pre);
      const Checkpoint ft = read_checkpoint(en_ft);
      const std::string csv =
          ensemble_curve_csv(ensemble_sweep(pre, ft, cfg.alphas, bundle, cfg.eval));
      if (!en_out.empty()) write_text(en_out, csv);
      out << csv;
      return kExitOk;
    }
    if (gc->parsed()) {
      bool ok = true;
      for (std::size_t i = 0; i < gc_seeds; ++i) {
        const std::uint64_t s = gc_seed + i;
        const CheckReport basic = grad_check(s, {}, gc_eps);
        const CheckReport full = full_objective_grad_check(s, gc_eps);
        out << "seed " << s << " contrastive: " << describe(basic) << "\n";
        out << "seed " << s << " full objective: " << describe(full) << "\n";
        ok = ok && basic.passed && full.passed;
      }
      if (!ok) {
        err << "error: gradient check failed\n";
        return kExitVerify;
      }
      return kExitOk;
    }
    if (rp->parsed()) {
      std::vector<Metrics> runs;
      for (const auto& p : rp_metrics) runs.push_back(decode_metrics(read_file(p)));
      const ReportTable table = rp_table == "zsl"        ? ReportTable::zsl
                                : rp_table == "ablation" ? ReportTable::ablation
                                                         : ReportTable::ds;
      const std::string text = render_report(
          runs, table, rp_format == "csv" ? ReportFormat::csv : ReportFormat::markdown);
      if (!rp_out.empty()) write_text(rp_out, text);
      out << text;
      return kExitOk;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace arf
