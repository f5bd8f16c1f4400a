#include "qlab/error.hpp"

namespace qlab {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::dimension_too_small: return "dimension-too-small";
    case ErrorCode::grid_too_small: return "grid-too-small";
    case ErrorCode::grid_too_large: return "grid-too-large";
    case ErrorCode::nonpositive_conformal_factor: return "nonpositive-conformal-factor";
    case ErrorCode::zero_volume: return "zero-volume";
    case ErrorCode::point_at_infinity: return "point-at-infinity";
    case ErrorCode::nonpositive_scale: return "nonpositive-scale";
    case ErrorCode::pole_hit: return "pole-hit";
    case ErrorCode::depth_overflow: return "depth-overflow";
    case ErrorCode::nonconvergent_ratio: return "nonconvergent-ratio";
    case ErrorCode::point_not_in_tile: return "point-not-in-tile";
    case ErrorCode::sampling_failure: return "sampling-failure";
    case ErrorCode::sphere_exits_domain: return "sphere-exits-domain";
    case ErrorCode::negative_source: return "negative-source";
    case ErrorCode::negative_sample: return "negative-sample";
    case ErrorCode::ill_conditioned_fit: return "ill-conditioned-fit";
    case ErrorCode::nonpositive_leading_coefficient: return "nonpositive-leading-coefficient";
    case ErrorCode::verification_failure: return "verification-failure";
    case ErrorCode::scan_exhausted: return "scan-exhausted";
    case ErrorCode::boundary_outside_domain: return "boundary-outside-domain";
    case ErrorCode::point_outside_domain: return "point-outside-domain";
    case ErrorCode::fit_nonconvergent: return "fit-nonconvergent";
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::config_error: return "config-error";
  }
  return "unknown";
}

}  // namespace qlab
