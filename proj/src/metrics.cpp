#include "sgsl/errors.hpp"
#include "sgsl/train.hpp"

namespace sgsl::train {

namespace {

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

double f1_of(double tp, double fp, double fn) { return ratio(2.0 * tp, 2.0 * tp + fp + fn); }

}  // namespace

Metrics compute_metrics(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                        std::size_t num_classes) {
  SGSL_EXPECT(truth.size() == predicted.size(), "metrics: truth and predictions differ in length");
  if (truth.empty()) throw ConfigError("metrics: empty dataset");
  std::vector<double> tp(num_classes, 0.0), fp(num_classes, 0.0), fn(num_classes, 0.0);
  std::vector<std::size_t> support(num_classes, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    SGSL_EXPECT(truth[i] < num_classes && predicted[i] < num_classes, "metrics: class index out of range");
    ++support[truth[i]];
    if (truth[i] == predicted[i]) {
      tp[truth[i]] += 1.0;
    } else {
      fp[predicted[i]] += 1.0;
      fn[truth[i]] += 1.0;
    }
  }

  Metrics m;
  m.count = truth.size();
  double TP = 0.0, FP = 0.0, FN = 0.0, macro = 0.0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    ClassStats s;
    s.precision = ratio(tp[c], tp[c] + fp[c]);
    s.recall = ratio(tp[c], tp[c] + fn[c]);
    s.f1 = f1_of(tp[c], fp[c], fn[c]);
    s.support = support[c];
    macro += s.f1;
    m.per_class.push_back(s);
    TP += tp[c];
    FP += fp[c];
    FN += fn[c];
  }
  m.accuracy = TP / static_cast<double>(truth.size());
  m.micro_f1 = f1_of(TP, FP, FN);
  m.macro_f1 = macro / static_cast<double>(num_classes);
  return m;
}

}  // namespace sgsl::train
