#pragma once

#include "geovar/common.hpp"

#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace geovar {

using OdeRhs = std::function<void(double t, const Vec& y, Vec& dy)>;
using OdeInside = std::function<bool(const Vec& y)>;

struct OdeOptions {
  double rtol = 1e-10;
  double atol = 1e-12;
  double initial_step = 0.0;  // 0: automatic
  double max_step = std::numeric_limits<double>::infinity();
  bool fixed_step = false;
  double step = 1e-2;  // fixed-step size (rounded so that it divides the span)
  long max_steps = 2000000;
};

enum class OdeStatus { completed, domain_exit, step_failure };
const char* ode_status_name(OdeStatus s);

// Piecewise quartic dense output of a Dormand-Prince 5(4) run; valid on the
// whole integration span, not just the last step.
class DenseTrajectory {
 public:
  struct Segment {
    double t0 = 0.0;
    double h = 0.0;    // signed step
    double len = 0.0;  // usable fraction of the step in (0,1]
    Vec r1, r2, r3, r4, r5;
  };

  int size() const { return dim_; }
  double t_begin() const { return t_begin_; }
  double t_end() const { return t_end_; }
  bool empty() const { return segs_.empty(); }
  const std::vector<Segment>& segments() const { return segs_; }
  // Node times including both ends.
  std::vector<double> nodes() const;
  Vec eval(double t) const;
  Vec state_at_node(size_t i) const;

  void start(double t0, const Vec& y0);
  void push(Segment s);
  // Copy with time shifted by dt and state shifted by offset.
  DenseTrajectory shifted(double dt, const Vec& offset) const;
  // Append another trajectory whose start matches this end in time.
  void append(const DenseTrajectory& other);

 private:
  int dim_ = 0;
  double t_begin_ = 0.0;
  double t_end_ = 0.0;
  Vec y_begin_;
  std::vector<Segment> segs_;
};

struct OdeResult {
  DenseTrajectory trajectory;
  OdeStatus status = OdeStatus::completed;
  double t_final = 0.0;
  Vec y_final;
  long steps = 0;
  long rejected = 0;
  std::string message;
};

// Integrates y' = f(t, y) from t0 to t1 (either direction). If `inside` is
// given, integration stops at the first time it becomes false (located by
// bisection on the dense output).
OdeResult integrate_dopri5(const OdeRhs& f, double t0, const Vec& y0, double t1, const OdeOptions& opts,
                           const OdeInside& inside = nullptr);

}  // namespace geovar
