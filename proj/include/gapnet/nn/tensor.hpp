#pragma once

#include <Eigen/Core>

#include <sstream>
#include <stdexcept>
#include <string>

namespace gapnet::nn {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Shape {
    Index n = 0;
    Index c = 0;
    Index h = 0;
    Index w = 0;

    Index size() const { return n * c * h * w; }
    friend bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s) {
    std::ostringstream os;
    os << s.n << "x" << s.c << "x" << s.h << "x" << s.w;
    return os.str();
}

/// Dense NCHW batch. Sample `i` is viewable as an (h*w) x c column-major
/// matrix whose columns are the channel planes.
template <typename Scalar>
class Tensor {
public:
    using SampleMap = Eigen::Map<Matrix<Scalar>>;
    using ConstSampleMap = Eigen::Map<const Matrix<Scalar>>;

    Tensor() = default;
    explicit Tensor(Shape shape) : shape_(shape), data_(Vector<Scalar>::Zero(shape.size())) {}
    Tensor(Index n, Index c, Index h, Index w) : Tensor(Shape{n, c, h, w}) {}

    const Shape& shape() const { return shape_; }
    Index n() const { return shape_.n; }
    Index c() const { return shape_.c; }
    Index h() const { return shape_.h; }
    Index w() const { return shape_.w; }
    Index size() const { return data_.size(); }
    Index plane() const { return shape_.h * shape_.w; }
    Index sample_size() const { return shape_.c * plane(); }

    Scalar& operator()(Index i, Index ch, Index y, Index x) {
        return data_[((i * shape_.c + ch) * shape_.h + y) * shape_.w + x];
    }
    Scalar operator()(Index i, Index ch, Index y, Index x) const {
        return data_[((i * shape_.c + ch) * shape_.h + y) * shape_.w + x];
    }

    SampleMap sample(Index i) { return SampleMap(data_.data() + i * sample_size(), plane(), shape_.c); }
    ConstSampleMap sample(Index i) const {
        return ConstSampleMap(data_.data() + i * sample_size(), plane(), shape_.c);
    }

    Vector<Scalar>& flat() { return data_; }
    const Vector<Scalar>& flat() const { return data_; }
    Scalar* data() { return data_.data(); }
    const Scalar* data() const { return data_.data(); }

    template <typename Other>
    Tensor<Other> cast() const {
        Tensor<Other> out(shape_);
        out.flat() = data_.template cast<Other>();
        return out;
    }

private:
    Shape shape_;
    Vector<Scalar> data_;
};

}  // namespace gapnet::nn
