#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <string>
#include <vector>

#include "distenc/errors.hpp"

namespace distenc {

// Shape of a dense tensor: rank 0 (scalar) through rank 3.
class Shape {
public:
    Shape() = default;

    Shape(std::initializer_list<int> dims) {
        if (dims.size() > 3) throw ShapeError("rank > 3 not supported");
        for (int d : dims) {
            if (d <= 0) throw ShapeError("non-positive extent in shape " + str_of(dims));
            dims_[rank_++] = d;
        }
    }

    static Shape scalar() { return Shape{}; }
    static Shape vec(int n) { return Shape{n}; }
    static Shape mat(int r, int c) { return Shape{r, c}; }

    int rank() const { return rank_; }
    int dim(int i) const { return dims_[i]; }

    long numel() const {
        long n = 1;
        for (int i = 0; i < rank_; ++i) n *= dims_[i];
        return n;
    }

    // Rank <= 2 accessors. A vector is a single column; a scalar is 1x1.
    int rows() const { return rank_ >= 1 ? dims_[0] : 1; }
    int cols() const { return rank_ >= 2 ? dims_[1] : 1; }

    bool operator==(const Shape& o) const {
        if (rank_ != o.rank_) return false;
        for (int i = 0; i < rank_; ++i)
            if (dims_[i] != o.dims_[i]) return false;
        return true;
    }
    bool operator!=(const Shape& o) const { return !(*this == o); }

    std::string str() const {
        std::string s = "[";
        for (int i = 0; i < rank_; ++i) {
            if (i) s += "x";
            s += std::to_string(dims_[i]);
        }
        return s + "]";
    }

private:
    static std::string str_of(std::initializer_list<int> dims) {
        std::string s = "[";
        bool first = true;
        for (int d : dims) {
            if (!first) s += "x";
            s += std::to_string(d);
            first = false;
        }
        return s + "]";
    }

    std::array<int, 3> dims_{1, 1, 1};
    int rank_ = 0;
};

// Dense row-major tensor of 32-bit reals. `grad` is empty unless the tensor
// participates in differentiation; `node_id` points into the tape that
// recorded it (-1 when off-tape).
struct Tensor {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad;
    int node_id = -1;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(s), data(static_cast<size_t>(s.numel()), 0.f) {}
    Tensor(Shape s, std::vector<float> d) : shape(s), data(std::move(d)) {
        if (static_cast<long>(data.size()) != shape.numel())
            throw ShapeError("data length " + std::to_string(data.size()) +
                             " does not match shape " + shape.str());
    }

    static Tensor scalar(float v) { return Tensor(Shape::scalar(), {v}); }
    static Tensor vec(std::vector<float> v) {
        int n = static_cast<int>(v.size());
        return Tensor(Shape::vec(n), std::move(v));
    }
    static Tensor mat(int r, int c, std::vector<float> v) {
        return Tensor(Shape::mat(r, c), std::move(v));
    }
    static Tensor zeros(Shape s) { return Tensor(s); }
    static Tensor filled(Shape s, float v) {
        Tensor t(s);
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    long numel() const { return shape.numel(); }
    int rows() const { return shape.rows(); }
    int cols() const { return shape.cols(); }

    float& at(int i, int j) { return data[static_cast<size_t>(i) * cols() + j]; }
    float at(int i, int j) const { return data[static_cast<size_t>(i) * cols() + j]; }
    float& operator[](size_t i) { return data[i]; }
    float operator[](size_t i) const { return data[i]; }

    bool same_bits(const Tensor& o) const {
        if (shape != o.shape) return false;
        return std::memcmp(data.data(), o.data.data(), data.size() * sizeof(float)) == 0;
    }
};

}  // namespace distenc
