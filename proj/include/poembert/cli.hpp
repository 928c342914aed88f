#pragma once

#include <chrono>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "poembert/checkpoint.hpp"
#include "poembert/corpus.hpp"
#include "poembert/error.hpp"
#include "poembert/evaluation.hpp"
#include "poembert/io.hpp"
#include "poembert/model.hpp"
#include "poembert/preprocess.hpp"
#include "poembert/taxonomy.hpp"
#include "poembert/tokenizer.hpp"
#include "poembert/training.hpp"

namespace poembert::cli {

enum ExitCode : int { kOk = 0, kDomainError = 1, kUsageError = 2 };

/// Inputs, resolved settings and outputs of one invocation, written as
/// `<output>.manifest.json`.
class RunManifest {
 public:
  explicit RunManifest(std::string command) : command_(std::move(command)) {}

  void input(const std::string& path) { inputs_[path] = file_digest(path); }
  void output(const std::string& path) { outputs_.push_back(path); }
  void set(const std::string& key, json value) { config_[key] = std::move(value); }
  void result(const std::string& key, json value) { results_[key] = std::move(value); }

  json to_json(double seconds) const {
    return json{{"command", command_}, {"config", config_},   {"inputs", inputs_},
                {"outputs", outputs_}, {"results", results_}, {"duration_seconds", seconds}};
  }

  /// Writes the manifest next to the first output.
  void write() const {
    if (outputs_.empty()) return;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    write_file(outputs_.front().get<std::string>() + ".manifest.json", to_json(secs).dump(2) + "\n");
  }

 private:
  std::string command_;
  json config_ = json::object();
  json inputs_ = json::object();
  json outputs_ = json::array();
  json results_ = json::object();
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

namespace detail {

inline std::vector<std::string> read_lines(std::istream& in) {
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(std::move(line));
  }
  return out;
}

inline std::vector<std::string> read_lines(const std::string& path) {
  std::istringstream in(read_file(path));
  return read_lines(in);
}

/// Verse text of a preprocessed file: lines are `verse_id<TAB>line`, or
/// bare lines. Blank lines are skipped.
inline std::vector<std::string> read_verse_lines(const std::string& path) {
  std::vector<std::string> out;
  for (auto& l : read_lines(path)) {
    const auto tab = l.find('\t');
    std::string text = tab == std::string::npos ? std::move(l) : l.substr(tab + 1);
    if (!text.empty()) out.push_back(std::move(text));
  }
  return out;
}

inline json read_config(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidConfig, path + ": " + e.what());
  }
}

/// Verses of `corpus` that carry a label for `task`, preprocessed.
inline std::vector<LabeledLine> labeled_lines(const CorpusStore& corpus, Task task) {
  std::vector<LabeledLine> out;
  for (const auto& r : corpus.records()) {
    if (auto label = task_label(r, task)) out.push_back({preprocess_verse(r).line, *label});
  }
  return out;
}

inline CorpusStore labeled_subset(const CorpusStore& corpus, Task task) {
  std::vector<VerseRecord> kept;
  for (const auto& r : corpus.records()) {
    if (task_label(r, task)) kept.push_back(r);
  }
  return CorpusStore(std::move(kept), corpus.provenance());
}

/// Raw verse from `predict` input: hemistichs separated by a TAB or by a
/// literal "[s]"; otherwise the whole line is the first hemistich.
inline VerseRecord parse_raw_verse(const std::string& line, std::int64_t id) {
  VerseRecord r;
  r.verse_id = id;
  auto cut = line.find('\t');
  std::size_t skip = 1;
  if (cut == std::string::npos) {
    cut = line.find(kHemistichSep);
    skip = kHemistichSep.size();
  }
  if (cut == std::string::npos) {
    r.hemistich1 = line;
  } else {
    r.hemistich1 = line.substr(0, cut);
    r.hemistich2 = line.substr(cut + skip);
  }
  return r;
}

struct Presets {
  std::string preset = "tiny";
  std::string config_path;

  void add(CLI::App* app) {
    app->add_option("--preset", preset, "Scale preset")
        ->check(CLI::IsMember({"tiny", "paper"}))
        ->capture_default_str();
    app->add_option("--config", config_path, "JSON config; explicit flags override it");
  }

  ModelConfig model() const {
    ModelConfig m = preset == "paper" ? ModelConfig::paper() : ModelConfig::tiny();
    if (!config_path.empty()) {
      const json j = read_config(config_path);
      if (j.contains("model")) m = model_config_from_json(j.at("model"), m);
    }
    return m;
  }

  TrainConfig train() const {
    TrainConfig t = preset == "paper" ? TrainConfig::paper() : TrainConfig::tiny();
    if (!config_path.empty()) t = train_config_from_json(read_config(config_path), t);
    return t;
  }
};

/// Training flags that, when given, override preset and config values.
struct TrainOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> steps;
  std::optional<std::size_t> batch_size;
  std::optional<double> lr;

  void add(CLI::App* app) {
    app->add_option("--seed", seed, "Random seed");
    app->add_option("--steps", steps, "Number of optimiser steps");
    app->add_option("--batch-size", batch_size, "Sequences per step");
    app->add_option("--lr", lr, "Learning rate");
  }

  void apply(TrainConfig& t) const {
    if (seed) t.seed = *seed;
    if (steps) t.max_steps = *steps;
    if (batch_size) t.batch_size = *batch_size;
    if (lr) t.lr = *lr;
  }
};

}  // namespace detail

/// Runs one subcommand. Returns the process exit code; diagnostics go to `err`.
inline int dispatch(std::vector<std::string> args, std::istream& in, std::ostream& out,
                    std::ostream& err) {
  CLI::App app{"Arabic poetry encoder: corpus tools, tokenizer, pretraining, fine-tuning"};
  app.name("poembert");
  app.require_subcommand(1);
  std::function<void()> run;

  // synth
  std::size_t synth_n = 1000;
  std::uint64_t synth_seed = 1;
  std::string synth_signal = "rhyme", synth_out;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus with a planted label");
  synth->add_option("--n", synth_n, "Number of verses")->capture_default_str();
  synth->add_option("--seed", synth_seed, "Random seed")->capture_default_str();
  synth->add_option("--signal", synth_signal, "Task whose label is planted")->capture_default_str();
  synth->add_option("--out", synth_out, "Output corpus (TSV)")->required();
  synth->callback([&] {
    run = [&] {
      const Task task = parse_task(synth_signal);
      RunManifest m("synth");
      m.set("n", synth_n);
      m.set("seed", synth_seed);
      m.set("signal", task_name(task));
      write_corpus(generate_synthetic(synth_n, synth_seed, task), synth_out);
      m.output(synth_out);
      m.write();
    };
  });

  // preprocess
  std::string pre_in, pre_out;
  bool pre_dedupe = false;
  auto* pre = app.add_subcommand("preprocess", "Clean verses into `verse_id<TAB>line`");
  pre->add_option("--in", pre_in, "Input corpus (TSV)")->required();
  pre->add_option("--out", pre_out, "Output file")->required();
  pre->add_flag("--dedupe", pre_dedupe, "Drop verses that repeat after cleaning");
  pre->callback([&] {
    run = [&] {
      RunManifest m("preprocess");
      m.input(pre_in);
      m.set("dedupe", pre_dedupe);
      CorpusStore corpus = load_corpus(pre_in);
      if (pre_dedupe) corpus = deduplicate(corpus);
      std::string text;
      for (const auto& r : corpus.records()) {
        const auto v = preprocess_verse(r);
        text += std::to_string(v.verse_id) + "\t" + v.line + "\n";
      }
      write_file(pre_out, text);
      m.output(pre_out);
      m.result("verses", corpus.size());
      m.write();
    };
  });

  // train-tokenizer
  std::string tok_in, tok_out;
  std::size_t tok_size = 512, tok_min_freq = 2;
  auto* tok = app.add_subcommand("train-tokenizer", "Train a WordPiece vocabulary");
  tok->add_option("--in", tok_in, "Preprocessed lines")->required();
  tok->add_option("--vocab-size", tok_size, "Target vocabulary size")->capture_default_str();
  tok->add_option("--min-frequency", tok_min_freq, "Minimum pair count for a merge")
      ->capture_default_str();
  tok->add_option("--out", tok_out, "Vocabulary file")->required();
  tok->callback([&] {
    run = [&] {
      RunManifest m("train-tokenizer");
      m.input(tok_in);
      m.set("vocab_size", tok_size);
      m.set("min_frequency", tok_min_freq);
      const Vocab v = train_wordpiece(detail::read_verse_lines(tok_in), tok_size, tok_min_freq);
      v.save(tok_out);
      m.output(tok_out);
      m.result("vocab_size", v.size());
      m.result("vocab_digest", v.digest());
      m.write();
    };
  });

  // encode
  std::string enc_vocab, enc_in, enc_out;
  std::size_t enc_max_len = 32;
  auto* enc = app.add_subcommand("encode", "Encode preprocessed lines to token ids");
  enc->add_option("--vocab", enc_vocab, "Vocabulary file")->required();
  enc->add_option("--max-len", enc_max_len, "Sequence length")->capture_default_str();
  enc->add_option("--in", enc_in, "Input lines (default: standard input)");
  enc->add_option("--out", enc_out, "Output file (default: standard output)");
  enc->callback([&] {
    run = [&] {
      RunManifest m("encode");
      m.input(enc_vocab);
      m.set("max_len", enc_max_len);
      const Vocab v = Vocab::load(enc_vocab);
      std::vector<std::string> lines;
      if (enc_in.empty()) {
        for (auto& l : detail::read_lines(in)) {
          const auto tab = l.find('\t');
          lines.push_back(tab == std::string::npos ? l : l.substr(tab + 1));
        }
      } else {
        m.input(enc_in);
        lines = detail::read_verse_lines(enc_in);
      }
      std::string text;
      for (const auto& l : lines) {
        const TokenSequence s = encode(l, v, enc_max_len);
        for (std::size_t i = 0; i < s.ids.size(); ++i) text += (i ? " " : "") + std::to_string(s.ids[i]);
        text += '\n';
      }
      if (enc_out.empty()) {
        out << text;
      } else {
        write_file(enc_out, text);
        m.output(enc_out);
        m.write();
      }
    };
  });

  // pretrain
  std::string pt_lines, pt_vocab, pt_out;
  detail::Presets pt_presets;
  detail::TrainOverrides pt_over;
  auto* pt = app.add_subcommand("pretrain", "Masked-LM pretraining");
  pt->add_option("--lines", pt_lines, "Preprocessed lines")->required();
  pt->add_option("--vocab", pt_vocab, "Vocabulary file")->required();
  pt->add_option("--out", pt_out, "Output checkpoint")->required();
  pt_presets.add(pt);
  pt_over.add(pt);
  pt->callback([&] {
    run = [&] {
      RunManifest m("pretrain");
      m.input(pt_lines);
      m.input(pt_vocab);
      const ModelConfig mc = pt_presets.model();
      TrainConfig tc = pt_presets.train();
      pt_over.apply(tc);
      const Vocab v = Vocab::load(pt_vocab);
      m.set("preset", pt_presets.preset);
      m.set("model", to_json(mc));
      m.set("train", to_json(tc));
      const TrainResult res = pretrain(detail::read_verse_lines(pt_lines), v, mc, tc,
                                       [&](std::int64_t step, double loss) {
                                         err << "step " << step << " loss " << loss << '\n';
                                       });
      save_checkpoint(res.checkpoint, pt_out);
      m.output(pt_out);
      m.result("final_loss", res.losses.empty() ? json(nullptr) : json(res.losses.back()));
      m.result("steps", res.checkpoint.global_step);
      m.write();
    };
  });

  // finetune
  std::string ft_ckpt, ft_task, ft_corpus, ft_out;
  double ft_val_ratio = 0.1;
  bool ft_head_only = false;
  detail::Presets ft_presets;
  detail::TrainOverrides ft_over;
  auto* ft = app.add_subcommand("finetune", "Train a classification head for one task");
  ft->add_option("--ckpt", ft_ckpt, "Pretrained checkpoint")->required();
  ft->add_option("--task", ft_task, "Task id")->required();
  ft->add_option("--corpus", ft_corpus, "Labelled corpus (TSV)")->required();
  ft->add_option("--out", ft_out, "Output checkpoint")->required();
  ft->add_option("--val-ratio", ft_val_ratio, "Held-out share, stratified by label")
      ->check(CLI::Range(0.0, 0.99))
      ->capture_default_str();
  ft->add_flag("--head-only", ft_head_only, "Freeze the encoder");
  ft_presets.add(ft);
  ft_over.add(ft);
  ft->callback([&] {
    run = [&] {
      RunManifest m("finetune");
      m.input(ft_ckpt);
      m.input(ft_corpus);
      const Task task = parse_task(ft_task);
      TrainConfig tc = ft_presets.train();
      ft_over.apply(tc);
      if (ft_head_only) tc.head_only = true;
      m.set("task", task_name(task));
      m.set("val_ratio", ft_val_ratio);
      m.set("train", to_json(tc));
      const Checkpoint base = load_checkpoint(ft_ckpt);
      const CorpusStore labeled = detail::labeled_subset(load_corpus(ft_corpus), task);
      CorpusSplit parts{labeled, CorpusStore{}};
      if (ft_val_ratio > 0.0) parts = split(labeled, 1.0 - ft_val_ratio, tc.seed, task);
      const auto& tax = taxonomy(task);
      TrainResult res = finetune(base, detail::labeled_lines(parts.train, task), tax, tc,
                                 base.vocab(), [&](std::int64_t step, double loss) {
                                   err << "step " << step << " loss " << loss << '\n';
                                 });
      m.result("train_verses", parts.train.size());
      m.result("val_verses", parts.val.size());
      if (!parts.val.empty()) {
        const EvalReport rep = evaluate(res.checkpoint, detail::labeled_lines(parts.val, task), tax);
        m.result("val_accuracy", rep.accuracy);
        res.checkpoint.metadata["val_accuracy"] = rep.accuracy;
        err << "validation accuracy " << rep.accuracy << '\n';
      }
      save_checkpoint(res.checkpoint, ft_out);
      m.output(ft_out);
      m.write();
    };
  });

  // evaluate
  std::string ev_ckpt, ev_corpus, ev_task, ev_out, ev_csv;
  auto* ev = app.add_subcommand("evaluate", "Score a fine-tuned checkpoint");
  ev->add_option("--ckpt", ev_ckpt, "Fine-tuned checkpoint")->required();
  ev->add_option("--corpus", ev_corpus, "Labelled corpus (TSV)")->required();
  ev->add_option("--task", ev_task, "Task id")->required();
  ev->add_option("--out", ev_out, "Report (JSON)")->required();
  ev->add_option("--csv", ev_csv, "Confusion matrix CSV (default: <out>.confusion.csv)");
  ev->callback([&] {
    run = [&] {
      RunManifest m("evaluate");
      m.input(ev_ckpt);
      m.input(ev_corpus);
      const Task task = parse_task(ev_task);
      m.set("task", task_name(task));
      const Checkpoint ck = load_checkpoint(ev_ckpt);
      const EvalReport rep =
          evaluate(ck, detail::labeled_lines(load_corpus(ev_corpus), task), taxonomy(task));
      const std::string csv = ev_csv.empty() ? ev_out + ".confusion.csv" : ev_csv;
      write_file(ev_out, to_json(rep).dump(2) + "\n");
      write_file(csv, confusion_csv(rep));
      out << format_report(rep);
      m.output(ev_out);
      m.output(csv);
      m.result("accuracy", rep.accuracy);
      m.write();
    };
  });

  // predict
  std::string pr_ckpt;
  auto* pr = app.add_subcommand("predict", "Label raw verses read from standard input");
  pr->add_option("--ckpt", pr_ckpt, "Fine-tuned checkpoint")->required();
  pr->callback([&] {
    run = [&] {
      const Checkpoint ck = load_checkpoint(pr_ckpt);
      if (!ck.params.head) throw Error(Errc::MissingHead, pr_ckpt + " has no classification head");
      std::vector<std::string> lines;
      std::int64_t id = 0;
      for (const auto& raw : detail::read_lines(in)) {
        if (raw.empty()) continue;
        lines.push_back(preprocess_verse(detail::parse_raw_verse(raw, id++)).line);
      }
      const auto preds = predict(ck, lines);
      for (const auto& p : preds) {
        out << ck.params.head->labels.at(p.label) << '\t' << std::fixed << std::setprecision(6)
            << p.confidence << '\n';
      }
    };
  });

  // taxonomy
  std::string tx_task, tx_out;
  auto* tx = app.add_subcommand("taxonomy", "Print or export a task's label list");
  tx->add_option("--task", tx_task, "Task id")->required();
  tx->add_option("--out", tx_out, "Write the labels as JSON");
  tx->callback([&] {
    run = [&] {
      const auto& tax = taxonomy(parse_task(tx_task));
      if (tx_out.empty()) {
        for (std::size_t i = 0; i < tax.size(); ++i) out << i << '\t' << tax.label(i) << '\n';
      } else {
        write_file(tx_out,
                   json{{"task", task_name(tax.task())}, {"labels", tax.labels()}}.dump(2) + "\n");
      }
    };
  });

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return kOk;
  } catch (const CLI::ParseError& e) {
    const auto subs = app.get_subcommands();
    err << e.what() << '\n' << (subs.empty() ? app.help() : subs.front()->help());
    return kUsageError;
  }

  try {
    run();
  } catch (const Error& e) {
    err << e.what() << '\n';
    return kDomainError;
  }
  return kOk;
}

inline int dispatch(int argc, const char* const* argv, std::istream& in = std::cin,
                    std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return dispatch(std::vector<std::string>(argv + 1, argv + argc), in, out, err);
}

}  // namespace poembert::cli
