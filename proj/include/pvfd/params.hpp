#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pvfd/tensor.hpp"

namespace pvfd {

enum class ParamGroup { kBase, kHead };

// A named, shaped slice of the flat parameter vector.
struct ParamSegment {
  std::string name;
  std::size_t offset = 0;
  std::size_t length = 0;
  Shape shape;
  ParamGroup group = ParamGroup::kBase;
  // Bias-like segments are zero-initialized.
  bool is_bias = false;
};

// Segment map over one flat vector. Base segments are laid out first, so the
// base part is the prefix [0, base_count) and the head part is the suffix.
class ParamLayout {
 public:
  // Segments must be added base-first; adding a base segment after a head
  // segment throws.
  std::size_t add(std::string name, Shape shape, ParamGroup group, bool is_bias = false);

  const std::vector<ParamSegment>& segments() const { return segments_; }
  const ParamSegment& segment(std::size_t index) const { return segments_.at(index); }
  const ParamSegment& find(const std::string& name) const;
  std::size_t total() const { return total_; }
  std::size_t base_count() const { return base_count_; }
  std::size_t head_count() const { return total_ - base_count_; }

 private:
  std::vector<ParamSegment> segments_;
  std::size_t total_ = 0;
  std::size_t base_count_ = 0;
};

// Copies one segment out of a flat vector into a shaped tensor.
Tensor segment_tensor(std::span<const double> flat, const ParamSegment& segment);

}  // namespace pvfd
