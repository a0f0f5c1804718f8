#include "riskdrive/experiments/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace riskdrive::experiments {

double binomial_upper_tail(int n, int k) {
  if (n < 0) throw std::invalid_argument("binomial_upper_tail: n < 0");
  if (k <= 0) return 1.0;
  if (k > n) return 0.0;
  // Sum in log space; n stays small but 2^-n underflows past ~1000.
  double total = 0.0;
  for (int j = k; j <= n; ++j) {
    const double log_term = std::lgamma(n + 1.0) - std::lgamma(j + 1.0) -
                            std::lgamma(n - j + 1.0) - n * std::log(2.0);
    total += std::exp(log_term);
  }
  return std::min(1.0, total);
}

SignTest sign_test(int plus, int minus, int ties) {
  if (plus < 0 || minus < 0 || ties < 0) throw std::invalid_argument("sign_test: negative count");
  SignTest t{plus, minus, ties, 1.0};
  t.p_value = binomial_upper_tail(plus + minus, plus);
  return t;
}

SignTest sign_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("sign_test: unmatched samples");
  int plus = 0, minus = 0, ties = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] > b[i]) ++plus;
    else if (a[i] < b[i]) ++minus;
    else ++ties;
  }
  return sign_test(plus, minus, ties);
}

}  // namespace riskdrive::experiments
