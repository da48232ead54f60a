#pragma once

#include <string>
#include <utility>
#include <vector>

#include "roodso/common.hpp"

namespace roodso {

/// Samples of one source distribution, one row per draw.
class Dataset {
 public:
  Dataset() = default;
  Dataset(Matrix samples, std::string label = {})
      : samples_(std::move(samples)), label_(std::move(label)) {
    require(samples_.rows() >= 1, "dataset '" + label_ + "' has no samples");
    require(samples_.cols() >= 1, "dataset '" + label_ + "' has zero dimension");
    require(samples_.allFinite(), "dataset '" + label_ + "' contains non-finite values");
  }

  const Matrix& samples() const { return samples_; }
  const std::string& label() const { return label_; }
  Index size() const { return samples_.rows(); }
  Index dim() const { return samples_.cols(); }
  auto row(Index i) const { return samples_.row(i); }

 private:
  Matrix samples_;
  std::string label_;
};

/// Ordered list of source datasets sharing one sample dimension.
class SourceCollection {
 public:
  SourceCollection() = default;
  explicit SourceCollection(std::vector<Dataset> sources) : sources_(std::move(sources)) {
    require(!sources_.empty(), "source collection is empty");
    for (const auto& s : sources_) {
      require(s.dim() == sources_.front().dim(),
              "dataset '" + s.label() + "' has dimension " + std::to_string(s.dim()) +
                  ", expected " + std::to_string(sources_.front().dim()));
    }
  }

  std::size_t size() const { return sources_.size(); }
  Index dim() const { return sources_.empty() ? 0 : sources_.front().dim(); }
  const Dataset& operator[](std::size_t i) const { return sources_[i]; }
  const std::vector<Dataset>& sources() const { return sources_; }
  auto begin() const { return sources_.begin(); }
  auto end() const { return sources_.end(); }

  Index total_samples() const {
    Index n = 0;
    for (const auto& s : sources_) n += s.size();
    return n;
  }

  /// All samples stacked in source order.
  Matrix pooled() const {
    Matrix out(total_samples(), dim());
    Index r = 0;
    for (const auto& s : sources_) {
      out.middleRows(r, s.size()) = s.samples();
      r += s.size();
    }
    return out;
  }

 private:
  std::vector<Dataset> sources_;
};

}  // namespace roodso
