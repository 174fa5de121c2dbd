#pragma once

#include <string>
#include <vector>

namespace psf {

// A labelled span [begin, end) of tokens.
struct Span {
  std::string type;
  int begin = 0;
  int end = 0;
  auto operator<=>(const Span&) const = default;
};

// BIO decoding. An I-X that does not continue an open X span starts a new
// span, as if it were B-X.
std::vector<Span> decode_bio(const std::vector<std::string>& tags);

struct SpanCounts {
  long long correct = 0;
  long long predicted = 0;
  long long gold = 0;

  SpanCounts& operator+=(const SpanCounts& o);
  double precision() const;
  double recall() const;
  // Harmonic mean of precision and recall; 0 when there is nothing to score.
  double f1() const;
};

// Exact-match span counts for one sentence.
SpanCounts count_spans(const std::vector<std::string>& gold, const std::vector<std::string>& predicted);

struct Correlation {
  double r = 0.0;
  double p_value = 1.0;
};

// Pearson r with a two-tailed p-value from the t transform
// t = r sqrt((n-2)/(1-r^2)) on n-2 degrees of freedom. Throws NumericError
// for fewer than 3 points or when either variable has zero variance.
Correlation pearson(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace psf
