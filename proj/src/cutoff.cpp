#include "augscat/cutoff.hpp"

#include <cmath>

namespace augscat {

namespace {

double bump(double s) { return s > 0.0 ? std::exp(-1.0 / s) : 0.0; }
double bump_d1(double s) { return s > 0.0 ? bump(s) / (s * s) : 0.0; }
double bump_d2(double s) {
  if (s <= 0.0) return 0.0;
  return bump(s) * (1.0 / (s * s * s * s) - 2.0 / (s * s * s));
}

}  // namespace

double Cutoff::value(double t) const {
  const double s = t - 1.0;
  if (s <= 0.0) return 0.0;
  if (s >= 1.0) return 1.0;
  switch (kind) {
    case CutoffKind::Smoothstep5:
      return s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
    case CutoffKind::Smoothstep7:
      return s * s * s * s * (35.0 + s * (-84.0 + s * (70.0 - 20.0 * s)));
    case CutoffKind::Exponential: {
      const double a = bump(s), b = bump(1.0 - s);
      return a / (a + b);
    }
  }
  return 0.0;
}

double Cutoff::d1(double t) const {
  const double s = t - 1.0;
  if (s <= 0.0 || s >= 1.0) return 0.0;
  switch (kind) {
    case CutoffKind::Smoothstep5:
      return 30.0 * s * s * (1.0 - s) * (1.0 - s);
    case CutoffKind::Smoothstep7:
      return 140.0 * s * s * s * (1.0 - s) * (1.0 - s) * (1.0 - s);
    case CutoffKind::Exponential: {
      const double a = bump(s), b = bump(1.0 - s);
      const double da = bump_d1(s), db = -bump_d1(1.0 - s);
      const double S = a + b;
      return (da * S - a * (da + db)) / (S * S);
    }
  }
  return 0.0;
}

double Cutoff::d2(double t) const {
  const double s = t - 1.0;
  if (s <= 0.0 || s >= 1.0) return 0.0;
  switch (kind) {
    case CutoffKind::Smoothstep5:
      return 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s);
    case CutoffKind::Smoothstep7:
      return 420.0 * s * s * (1.0 - s) * (1.0 - s) * (1.0 - 2.0 * s);
    case CutoffKind::Exponential: {
      const double a = bump(s), b = bump(1.0 - s);
      const double da = bump_d1(s), db = -bump_d1(1.0 - s);
      const double dda = bump_d2(s), ddb = bump_d2(1.0 - s);
      const double S = a + b, dS = da + db, ddS = dda + ddb;
      const double num = da * S - a * dS;
      const double dnum = dda * S - a * ddS;
      return (dnum * S - 2.0 * dS * num) / (S * S * S);
    }
  }
  return 0.0;
}

}  // namespace augscat
