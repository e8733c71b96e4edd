#include "pvfd/params.hpp"

#include "pvfd/error.hpp"

namespace pvfd {

std::size_t ParamLayout::add(std::string name, Shape shape, ParamGroup group, bool is_bias) {
  if (group == ParamGroup::kBase && base_count_ != total_) {
    throw ConfigError("base segment '" + name + "' added after a head segment");
  }
  ParamSegment seg;
  seg.name = std::move(name);
  seg.offset = total_;
  seg.length = shape_product(shape);
  seg.shape = std::move(shape);
  seg.group = group;
  seg.is_bias = is_bias;
  total_ += seg.length;
  if (group == ParamGroup::kBase) base_count_ = total_;
  segments_.push_back(std::move(seg));
  return segments_.size() - 1;
}

const ParamSegment& ParamLayout::find(const std::string& name) const {
  for (const auto& s : segments_) {
    if (s.name == name) return s;
  }
  throw ConfigError("unknown parameter segment: " + name);
}

Tensor segment_tensor(std::span<const double> flat, const ParamSegment& segment) {
  if (segment.offset + segment.length > flat.size()) {
    throw DimensionError("segment '" + segment.name + "' exceeds parameter vector of length " +
                         std::to_string(flat.size()));
  }
  auto first = flat.begin() + static_cast<std::ptrdiff_t>(segment.offset);
  return Tensor(segment.shape,
                std::vector<double>(first, first + static_cast<std::ptrdiff_t>(segment.length)));
}

}  // namespace pvfd
