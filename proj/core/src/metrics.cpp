#include "psf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <boost/math/distributions/students_t.hpp>

#include "psf/error.hpp"

namespace psf {

std::vector<Span> decode_bio(const std::vector<std::string>& tags) {
  std::vector<Span> spans;
  bool open = false;
  Span cur;
  auto close = [&](int at) {
    if (open) {
      cur.end = at;
      spans.push_back(cur);
      open = false;
    }
  };
  for (int i = 0; i < static_cast<int>(tags.size()); ++i) {
    const std::string& tag = tags[static_cast<std::size_t>(i)];
    const bool begin = tag.rfind("B-", 0) == 0;
    const bool inside = tag.rfind("I-", 0) == 0;
    if (!begin && !inside) {
      close(i);
      continue;
    }
    const std::string type = tag.substr(2);
    if (inside && open && cur.type == type) continue;
    close(i);
    cur = Span{type, i, i};
    open = true;
  }
  close(static_cast<int>(tags.size()));
  return spans;
}

SpanCounts& SpanCounts::operator+=(const SpanCounts& o) {
  correct += o.correct;
  predicted += o.predicted;
  gold += o.gold;
  return *this;
}

double SpanCounts::precision() const {
  return predicted == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(predicted);
}

double SpanCounts::recall() const {
  return gold == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(gold);
}

double SpanCounts::f1() const {
  const long long denom = predicted + gold;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(correct) / static_cast<double>(denom);
}

SpanCounts count_spans(const std::vector<std::string>& gold, const std::vector<std::string>& predicted) {
  if (gold.size() != predicted.size()) throw DataError("span scoring: sequence lengths differ");
  const auto g = decode_bio(gold);
  const auto p = decode_bio(predicted);
  const std::set<Span> gs(g.begin(), g.end());
  SpanCounts c;
  c.gold = static_cast<long long>(g.size());
  c.predicted = static_cast<long long>(p.size());
  for (const auto& s : p) c.correct += static_cast<long long>(gs.count(s));
  return c;
}

Correlation pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw NumericError("pearson: inputs differ in length");
  const std::size_t n = x.size();
  if (n < 3) throw NumericError("pearson: need at least 3 points, got " + std::to_string(n));
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) throw NumericError("pearson: zero variance");
  Correlation c;
  c.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double df = static_cast<double>(n - 2);
  const double denom = 1.0 - c.r * c.r;
  if (denom <= 0.0) {
    c.p_value = 0.0;
    return c;
  }
  const double t = std::abs(c.r) * std::sqrt(df / denom);
  const boost::math::students_t dist(df);
  c.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, t));
  return c;
}

}  // namespace psf
