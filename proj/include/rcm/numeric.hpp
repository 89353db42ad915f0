#pragma once

#include <cmath>
#include <limits>

namespace rcm {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// 1/p with 1/inf = 0
inline double inv_exponent(double p) { return std::isinf(p) ? 0.0 : 1.0 / p; }

// Hoelder conjugate p/(p-1); conjugate of inf is 1, of 1 is inf
inline double conjugate_exponent(double p) {
  if (std::isinf(p)) return 1.0;
  if (p == 1.0) return kInf;
  return p / (p - 1.0);
}

// Neumaier compensated sum. Order of add() calls fixes the result.
class NeumaierSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::fabs(sum_) >= std::fabs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  NeumaierSum& operator+=(double x) {
    add(x);
    return *this;
  }
  void merge(const NeumaierSum& other) {
    add(other.sum_);
    add(other.comp_);
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace rcm
