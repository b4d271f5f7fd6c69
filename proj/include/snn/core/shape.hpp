#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace snn {

/// Ordered list of positive extents. Sequences use T x C x H x W, batched
/// sequences B x T x C x H x W.
class Shape {
public:
    Shape() = default;
    Shape(std::initializer_list<std::size_t> dims);
    explicit Shape(std::vector<std::size_t> dims);

    std::size_t rank() const noexcept { return dims_.size(); }
    std::size_t numel() const noexcept;
    std::size_t operator[](std::size_t axis) const { return dims_.at(axis); }
    const std::vector<std::size_t>& dims() const noexcept { return dims_; }

    /// Resolves a possibly negative axis against the rank; throws on overflow.
    std::size_t axis(int axis) const;

    /// Product of extents in [begin, end).
    std::size_t span(std::size_t begin, std::size_t end) const;

    std::string str() const;

    friend bool operator==(const Shape&, const Shape&) = default;

private:
    std::vector<std::size_t> dims_;
};

}  // namespace snn
