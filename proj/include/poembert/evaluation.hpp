#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "poembert/checkpoint.hpp"
#include "poembert/error.hpp"
#include "poembert/model.hpp"
#include "poembert/taxonomy.hpp"
#include "poembert/tokenizer.hpp"
#include "poembert/training.hpp"
#include "poembert/utf8.hpp"

namespace poembert {

using ConfusionMatrix = std::vector<std::vector<std::size_t>>;

/// Rows are true labels, columns predictions.
inline ConfusionMatrix confusion_matrix(const std::vector<std::size_t>& preds,
                                        const std::vector<std::size_t>& truths, std::size_t k) {
  if (preds.size() != truths.size()) {
    throw Error(Errc::LengthMismatch, std::to_string(preds.size()) + " predictions for " +
                                          std::to_string(truths.size()) + " labels");
  }
  ConfusionMatrix m(k, std::vector<std::size_t>(k, 0));
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] >= k || truths[i] >= k) {
      throw Error(Errc::LabelOutOfRange, "sample " + std::to_string(i) + " has a label outside [0, " +
                                             std::to_string(k) + ")");
    }
    ++m[truths[i]][preds[i]];
  }
  return m;
}

struct ClassMetrics {
  std::string label;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct AverageMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct EvalReport {
  std::string task;
  std::vector<ClassMetrics> per_class;
  double accuracy = 0.0;
  AverageMetrics macro_avg;
  AverageMetrics weighted_avg;
  ConfusionMatrix confusion;
  std::size_t total_samples = 0;
};

namespace detail {

inline double safe_div(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace detail

/// Per-class precision, recall and F1 with 0/0 taken as 0. Macro averages are
/// unweighted means over all classes; weighted averages use the true-class
/// support, and weighted F1 averages the per-class F1 values.
inline EvalReport prf_report(const ConfusionMatrix& m, const std::vector<std::string>& labels,
                             std::string task = {}) {
  const std::size_t k = m.size();
  for (const auto& row : m) {
    if (row.size() != k) throw Error(Errc::ShapeMismatch, "confusion matrix is not square");
  }
  if (labels.size() != k) {
    throw Error(Errc::ShapeMismatch, std::to_string(labels.size()) + " labels for a " +
                                         std::to_string(k) + "-class matrix");
  }
  EvalReport r;
  r.task = std::move(task);
  r.confusion = m;
  std::size_t correct = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t row = 0, col = 0;
    for (std::size_t j = 0; j < k; ++j) {
      row += m[c][j];
      col += m[j][c];
    }
    r.total_samples += row;
    correct += m[c][c];
    ClassMetrics cm;
    cm.label = labels[c];
    cm.support = row;
    const double tp = static_cast<double>(m[c][c]);
    cm.precision = detail::safe_div(tp, static_cast<double>(col));
    cm.recall = detail::safe_div(tp, static_cast<double>(row));
    cm.f1 = detail::safe_div(2.0 * cm.precision * cm.recall, cm.precision + cm.recall);
    r.per_class.push_back(std::move(cm));
  }
  r.accuracy = detail::safe_div(static_cast<double>(correct), static_cast<double>(r.total_samples));
  for (const auto& c : r.per_class) {
    r.macro_avg.precision += c.precision;
    r.macro_avg.recall += c.recall;
    r.macro_avg.f1 += c.f1;
    const double w = static_cast<double>(c.support);
    r.weighted_avg.precision += w * c.precision;
    r.weighted_avg.recall += w * c.recall;
    r.weighted_avg.f1 += w * c.f1;
  }
  const double kd = static_cast<double>(k);
  const double n = static_cast<double>(r.total_samples);
  r.macro_avg = {detail::safe_div(r.macro_avg.precision, kd),
                 detail::safe_div(r.macro_avg.recall, kd), detail::safe_div(r.macro_avg.f1, kd)};
  r.weighted_avg = {detail::safe_div(r.weighted_avg.precision, n),
                    detail::safe_div(r.weighted_avg.recall, n),
                    detail::safe_div(r.weighted_avg.f1, n)};
  return r;
}

inline EvalReport prf_report(const ConfusionMatrix& m, const LabelTaxonomy& tax) {
  return prf_report(m, tax.labels(), std::string(task_name(tax.task())));
}

/// Plain-text table: Class, Precision, Recall, F1-Score, Number of Samples,
/// then Accuracy, Macro Avg and Weighted Avg rows.
inline std::string format_report(const EvalReport& r, int precision = 4) {
  std::size_t w = std::string("Weighted Avg").size();
  for (const auto& c : r.per_class) w = std::max(w, utf8::length(c.label));
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision);
  auto label = [&](const std::string& s) {
    os << s << std::string(w - utf8::length(s) + 2, ' ');
  };
  const int cw = precision + 7;
  label("Class");
  os << std::setw(cw) << "Precision" << std::setw(cw) << "Recall" << std::setw(cw)
     << "F1-Score" << std::setw(20) << "Number of Samples" << '\n';
  for (const auto& c : r.per_class) {
    label(c.label);
    os << std::setw(cw) << c.precision << std::setw(cw) << c.recall << std::setw(cw) << c.f1
       << std::setw(20) << c.support << '\n';
  }
  label("Accuracy");
  os << std::setw(cw) << "" << std::setw(cw) << "" << std::setw(cw) << r.accuracy
     << std::setw(20) << r.total_samples << '\n';
  for (const auto& [name, a] : {std::pair<std::string, AverageMetrics>{"Macro Avg", r.macro_avg},
                                {"Weighted Avg", r.weighted_avg}}) {
    label(name);
    os << std::setw(cw) << a.precision << std::setw(cw) << a.recall << std::setw(cw) << a.f1
       << std::setw(20) << r.total_samples << '\n';
  }
  return os.str();
}

inline json to_json(const EvalReport& r) {
  json per_class = json::array();
  for (const auto& c : r.per_class) {
    per_class.push_back({{"label", c.label},
                         {"precision", c.precision},
                         {"recall", c.recall},
                         {"f1", c.f1},
                         {"support", c.support}});
  }
  auto avg = [](const AverageMetrics& a) {
    return json{{"precision", a.precision}, {"recall", a.recall}, {"f1", a.f1}};
  };
  return json{{"task", r.task},
              {"total_samples", r.total_samples},
              {"accuracy", r.accuracy},
              {"per_class", per_class},
              {"macro_avg", avg(r.macro_avg)},
              {"weighted_avg", avg(r.weighted_avg)},
              {"confusion", r.confusion}};
}

/// Label header row, then one row per true label.
inline std::string confusion_csv(const EvalReport& r) {
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  };
  std::string out = "true\\pred";
  for (const auto& c : r.per_class) out += "," + quote(c.label);
  out += '\n';
  for (std::size_t i = 0; i < r.confusion.size(); ++i) {
    out += quote(r.per_class[i].label);
    for (auto v : r.confusion[i]) out += "," + std::to_string(v);
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Inference

struct Prediction {
  std::size_t label = 0;
  double confidence = 0.0;  // softmax probability of the chosen label
};

/// Classifies preprocessed lines with the checkpoint's head, in batches.
inline std::vector<Prediction> predict(const Checkpoint& ck, const std::vector<std::string>& lines,
                                       std::size_t batch_size = 64) {
  if (!ck.params.head) throw Error(Errc::MissingHead, "checkpoint has no classification head");
  const Vocab vocab = ck.vocab();
  std::vector<Prediction> out;
  out.reserve(lines.size());
  for (std::size_t start = 0; start < lines.size(); start += batch_size) {
    const std::size_t end = std::min(lines.size(), start + batch_size);
    std::vector<TokenSequence> seqs;
    for (std::size_t i = start; i < end; ++i) seqs.push_back(encode(lines[i], vocab, ck.config.max_len));
    Tape tape(false);
    Tensor hidden = encoder_forward(tape, detail::trim_padding(std::move(seqs)), ck.config, ck.params);
    Tensor logits = classify(tape, hidden, *ck.params.head);
    Tensor probs = tape.softmax_rows(logits);
    const std::size_t c = probs.last_dim();
    for (std::size_t r = 0; r < end - start; ++r) {
      const auto row = probs.data().subspan(r * c, c);
      const std::size_t best = argmax(logits.data().subspan(r * c, c));
      out.push_back({best, row[best]});
    }
  }
  return out;
}

/// Runs the head over `data` and reports against `tax`. When `vocab` is
/// given it must be the checkpoint's vocabulary.
inline EvalReport evaluate(const Checkpoint& ck, const std::vector<LabeledLine>& data,
                           const LabelTaxonomy& tax, const Vocab* vocab = nullptr) {
  if (vocab) ck.require_vocab(*vocab);
  if (!ck.params.head || ck.params.head->labels != tax.labels()) {
    throw Error(Errc::MissingHead, "checkpoint has no head for task " + std::string(task_name(tax.task())));
  }
  std::vector<std::string> lines;
  std::vector<std::size_t> truths;
  for (const auto& d : data) {
    lines.push_back(d.line);
    truths.push_back(d.label);
  }
  std::vector<std::size_t> preds;
  for (const auto& p : predict(ck, lines)) preds.push_back(p.label);
  return prf_report(confusion_matrix(preds, truths, tax.size()), tax);
}

}  // namespace poembert
