#pragma once

#include <stdexcept>
#include <string>

namespace gwip {

// Root finding failed to converge; carries the last residual.
class solver_error : public std::runtime_error {
 public:
  solver_error(const std::string& what, double residual)
      : std::runtime_error(what + " (residual=" + std::to_string(residual) + ")"),
        residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

// A hard budget (node count, memory) was exceeded.
class resource_error : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A Monte Carlo estimate could not be formed (certification or acceptance
// rate too low). Carries the observed rate so callers can report it.
class inconclusive_error : public std::runtime_error {
 public:
  inconclusive_error(const std::string& what, double rate)
      : std::runtime_error(what + " (rate=" + std::to_string(rate) + ")"), rate_(rate) {}
  double rate() const { return rate_; }

 private:
  double rate_;
};

namespace detail {
[[noreturn]] inline void assert_fail(const char* expr, const char* file, int line) {
  throw std::logic_error(std::string("internal assertion failed: ") + expr + " at " +
                         file + ":" + std::to_string(line));
}
}  // namespace detail

// Always-on internal assertion; these guard invariants that must hold even in
// release builds (NDEBUG does not disable them).
#define GWIP_ASSERT(expr) \
  ((expr) ? (void)0 : ::gwip::detail::assert_fail(#expr, __FILE__, __LINE__))

}  // namespace gwip
