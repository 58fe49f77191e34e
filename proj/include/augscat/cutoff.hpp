#pragma once

namespace augscat {

// Smooth ramp from 0 (t <= 1) to 1 (t >= 2). Used both as the arm cutoff chi
// and, shifted by T, as the blending ramp psi.
enum class CutoffKind { Smoothstep5, Smoothstep7, Exponential };

struct Cutoff {
  CutoffKind kind = CutoffKind::Smoothstep5;

  double value(double t) const;
  double d1(double t) const;
  double d2(double t) const;
};

}  // namespace augscat
