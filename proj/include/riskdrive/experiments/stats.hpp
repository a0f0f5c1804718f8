#pragma once

#include <span>

namespace riskdrive::experiments {

/// One-sided sign test of "a beats b" over matched samples; ties dropped.
struct SignTest {
  int plus = 0;
  int minus = 0;
  int ties = 0;
  double p_value = 1.0;

  bool significant(double alpha = 0.05) const { return p_value < alpha; }
};

/// P[X >= k] for X ~ Binomial(n, 1/2).
double binomial_upper_tail(int n, int k);

SignTest sign_test(int plus, int minus, int ties = 0);
SignTest sign_test(std::span<const double> a, std::span<const double> b);

}  // namespace riskdrive::experiments
