#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qlab {

enum class ErrorCode {
  dimension_too_small,
  grid_too_small,
  grid_too_large,
  nonpositive_conformal_factor,
  zero_volume,
  point_at_infinity,
  nonpositive_scale,
  pole_hit,
  depth_overflow,
  nonconvergent_ratio,
  point_not_in_tile,
  sampling_failure,
  sphere_exits_domain,
  negative_source,
  negative_sample,
  ill_conditioned_fit,
  nonpositive_leading_coefficient,
  verification_failure,
  scan_exhausted,
  boundary_outside_domain,
  point_outside_domain,
  fit_nonconvergent,
  invalid_argument,
  config_error,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers (and tests) can branch on the kind rather than the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace qlab
