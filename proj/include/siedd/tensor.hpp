#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "siedd/errors.hpp"

namespace siedd {

// Dense row-major float32 matrix. The universal carrier for weights,
// activations, coordinates and pixel batches.
class Tensor2D {
  public:
    Tensor2D() = default;
    Tensor2D(std::size_t rows, std::size_t cols, float fill = 0.0f)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Tensor2D from(std::size_t rows, std::size_t cols, std::vector<float> data) {
        if (data.size() != rows * cols)
            throw ShapeError("Tensor2D: data length " + std::to_string(data.size()) +
                             " != " + std::to_string(rows) + "x" + std::to_string(cols));
        Tensor2D t;
        t.rows_ = rows;
        t.cols_ = cols;
        t.data_ = std::move(data);
        return t;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    float* row(std::size_t r) { return data_.data() + r * cols_; }
    const float* row(std::size_t r) const { return data_.data() + r * cols_; }

    float& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    float at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    void fill(float v) { data_.assign(data_.size(), v); }

    bool same_shape(const Tensor2D& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    bool all_finite() const {
        for (float v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    bool operator==(const Tensor2D& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
    }

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<float> data_;
};

inline void require_shape(const Tensor2D& t, std::size_t rows, std::size_t cols, const char* what) {
    if (t.rows() != rows || t.cols() != cols)
        throw ShapeError(std::string(what) + ": expected " + std::to_string(rows) + "x" +
                         std::to_string(cols) + ", got " + std::to_string(t.rows()) + "x" +
                         std::to_string(t.cols()));
}

}  // namespace siedd
