#include "pvfd/init.hpp"

#include <cmath>

namespace pvfd {

void init_segment(std::span<double> flat, const ParamSegment& segment, Rng& rng) {
  auto out = flat.subspan(segment.offset, segment.length);
  if (segment.is_bias) {
    for (auto& v : out) v = 0.0;
    return;
  }
  const std::size_t fan_out = segment.shape.back();
  const std::size_t fan_in = segment.length / fan_out;
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : out) v = rng.uniform(-limit, limit);
}

}  // namespace pvfd
