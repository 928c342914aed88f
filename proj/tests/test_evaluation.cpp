#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "poembert/poembert.hpp"

using namespace poembert;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::Io;
}

std::vector<std::string> names(std::size_t k) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back("c" + std::to_string(i));
  return out;
}

}  // namespace

TEST(Confusion, SmallExample) {
  const ConfusionMatrix m = confusion_matrix({0, 1, 1}, {0, 1, 0}, 2);
  EXPECT_EQ(m, (ConfusionMatrix{{1, 1}, {0, 1}}));
}

TEST(Confusion, EmptyAndErrors) {
  EXPECT_EQ(confusion_matrix({}, {}, 3), ConfusionMatrix(3, std::vector<std::size_t>(3, 0)));
  EXPECT_EQ(code_of([] { confusion_matrix({0, 1}, {0}, 2); }), Errc::LengthMismatch);
  EXPECT_EQ(code_of([] { confusion_matrix({0, 2}, {0, 1}, 2); }), Errc::LabelOutOfRange);
  EXPECT_EQ(code_of([] { confusion_matrix({0, 1}, {0, 5}, 2); }), Errc::LabelOutOfRange);
}

TEST(Prf, MatchesPerSampleCounting) {
  Rng rng = make_rng(17, Stream::Data);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 + uniform_index(rng, 9);
    const std::size_t n = uniform_index(rng, 200);
    std::vector<std::size_t> truths(n), preds(n);
    for (std::size_t i = 0; i < n; ++i) {
      truths[i] = uniform_index(rng, k);
      // bias toward correct so precision/recall are not all tiny
      preds[i] = uniform01(rng) < 0.5 ? truths[i] : uniform_index(rng, k);
    }
    const EvalReport r = prf_report(confusion_matrix(preds, truths, k), names(k));
    const oracle::Prf o = oracle::prf_by_counting(truths, preds, k);
    ASSERT_EQ(r.per_class.size(), k);
    for (std::size_t c = 0; c < k; ++c) {
      EXPECT_NEAR(r.per_class[c].precision, o.precision[c], 1e-12);
      EXPECT_NEAR(r.per_class[c].recall, o.recall[c], 1e-12);
      EXPECT_NEAR(r.per_class[c].f1, o.f1[c], 1e-12);
      EXPECT_EQ(r.per_class[c].support, o.support[c]);
    }
    EXPECT_NEAR(r.accuracy, o.accuracy, 1e-12);
    EXPECT_NEAR(r.macro_avg.precision, o.macro_p, 1e-12);
    EXPECT_NEAR(r.macro_avg.recall, o.macro_r, 1e-12);
    EXPECT_NEAR(r.macro_avg.f1, o.macro_f1, 1e-12);
    EXPECT_NEAR(r.weighted_avg.precision, o.weighted_p, 1e-12);
    EXPECT_NEAR(r.weighted_avg.recall, o.weighted_r, 1e-12);
    EXPECT_NEAR(r.weighted_avg.f1, o.weighted_f1, 1e-12);
    EXPECT_EQ(r.total_samples, n);
  }
}

TEST(Prf, ZeroOverZeroIsZero) {
  // class 2 never appears and is never predicted; class 1 is never predicted
  const EvalReport r = prf_report(confusion_matrix({0, 0}, {0, 1}, 3), names(3));
  EXPECT_EQ(r.per_class[1].precision, 0.0);
  EXPECT_EQ(r.per_class[1].recall, 0.0);
  EXPECT_EQ(r.per_class[1].f1, 0.0);
  EXPECT_EQ(r.per_class[2].precision, 0.0);
  EXPECT_EQ(r.per_class[2].support, 0u);
  EXPECT_DOUBLE_EQ(r.per_class[0].precision, 0.5);
  EXPECT_DOUBLE_EQ(r.per_class[0].recall, 1.0);
  EXPECT_DOUBLE_EQ(r.macro_avg.recall, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.weighted_avg.recall, 0.5);
}

TEST(Prf, EmptyMatrixReportsZeros) {
  const EvalReport r = prf_report(ConfusionMatrix(2, std::vector<std::size_t>(2, 0)), names(2));
  EXPECT_EQ(r.accuracy, 0.0);
  EXPECT_EQ(r.weighted_avg.f1, 0.0);
  EXPECT_EQ(r.total_samples, 0u);
}

TEST(Prf, SingleSample) {
  const EvalReport r = prf_report(confusion_matrix({1}, {1}, 2), names(2));
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.per_class[1].f1, 1.0);
  EXPECT_EQ(r.macro_avg.f1, 0.5);
  EXPECT_EQ(r.weighted_avg.f1, 1.0);
}

TEST(Prf, ShapeErrors) {
  EXPECT_EQ(code_of([] { prf_report(ConfusionMatrix{{1, 0}, {0}}, names(2)); }),
            Errc::ShapeMismatch);
  EXPECT_EQ(code_of([] { prf_report(ConfusionMatrix{{1, 0}, {0, 1}}, names(3)); }),
            Errc::ShapeMismatch);
}

TEST(Report, TextJsonAndCsv) {
  const EvalReport r =
      prf_report(confusion_matrix({0, 1, 1, 2}, {0, 1, 0, 2}, 3), {"ا", "b,c", "d"}, "Test");
  const std::string text = format_report(r);
  for (const char* row : {"Class", "Precision", "Recall", "F1-Score", "Number of Samples",
                          "Accuracy", "Macro Avg", "Weighted Avg", "0.7500"}) {
    EXPECT_NE(text.find(row), std::string::npos) << row;
  }
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 7);

  const json j = to_json(r);
  EXPECT_EQ(j["task"], "Test");
  EXPECT_EQ(j["total_samples"], 4);
  EXPECT_DOUBLE_EQ(j["accuracy"].get<double>(), 0.75);
  EXPECT_EQ(j["per_class"].size(), 3u);
  EXPECT_EQ(j["confusion"][0][1], 1);

  EXPECT_EQ(confusion_csv(r), "true\\pred,ا,\"b,c\",d\nا,1,1,0\n\"b,c\",0,1,0\nd,0,0,1\n");
}

TEST(Evaluate, ConsistentWithPredict) {
  const auto data = fixture::planted(48, 5, Task::Gender);
  const Vocab vocab = train_wordpiece(data.lines, 100);
  ModelConfig m = ModelConfig::tiny();
  m.hidden = 16;
  m.ffn_dim = 32;
  TrainConfig t = TrainConfig::tiny();
  t.batch_size = 8;
  t.max_steps = 5;
  const Checkpoint base = pretrain(data.lines, vocab, m, t).checkpoint;
  const LabelTaxonomy tax = taxonomy(Task::Gender);

  EXPECT_EQ(code_of([&] { evaluate(base, data.labeled, tax); }), Errc::MissingHead);
  EXPECT_EQ(code_of([&] { predict(base, data.lines); }), Errc::MissingHead);

  const Checkpoint ck = finetune(base, data.labeled, tax, t, vocab).checkpoint;
  const EvalReport r = evaluate(ck, data.labeled, tax, &vocab);
  const auto preds = predict(ck, data.lines, 7);
  ASSERT_EQ(preds.size(), data.lines.size());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    correct += preds[i].label == data.labeled[i].label;
    EXPECT_GT(preds[i].confidence, 0.0);
    EXPECT_LE(preds[i].confidence, 1.0);
  }
  EXPECT_DOUBLE_EQ(r.accuracy, static_cast<double>(correct) / static_cast<double>(preds.size()));

  // batch size does not change predictions
  const auto one_by_one = predict(ck, data.lines, 1);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    EXPECT_EQ(one_by_one[i].label, preds[i].label);
    EXPECT_NEAR(one_by_one[i].confidence, preds[i].confidence, 1e-12);
  }

  const Vocab other = train_wordpiece({"قفا"}, 10);
  EXPECT_EQ(code_of([&] { evaluate(ck, data.labeled, tax, &other); }), Errc::DigestMismatch);
  EXPECT_EQ(code_of([&] { evaluate(ck, data.labeled, taxonomy(Task::Rhyme)); }), Errc::MissingHead);
}
