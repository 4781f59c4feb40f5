#include "framecast/tensor.hpp"

#include <cmath>
#include <sstream>

namespace framecast {

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) {
        if (d < 0) throw DimensionError("negative dimension in shape " + shape_str(s));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

static std::shared_ptr<TensorImpl> make_impl(Shape shape, DType dt) {
    auto impl = std::make_shared<TensorImpl>();
    impl->dtype = dt;
    int64_t n = shape_numel(shape);
    impl->shape = std::move(shape);
    if (dt == DType::f32)
        impl->data_f32.assign(static_cast<size_t>(n), 0.0f);
    else
        impl->data_f64.assign(static_cast<size_t>(n), 0.0);
    return impl;
}

Tensor Tensor::zeros(Shape shape, DType dt, bool requires_grad) {
    Tensor t = wrap(make_impl(std::move(shape), dt));
    t.impl_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::full(Shape shape, double value, DType dt) {
    Tensor t = zeros(std::move(shape), dt);
    int64_t n = t.numel();
    if (dt == DType::f32) {
        float v = static_cast<float>(value);
        for (int64_t i = 0; i < n; ++i) t.impl_->data_f32[static_cast<size_t>(i)] = v;
    } else {
        for (int64_t i = 0; i < n; ++i) t.impl_->data_f64[static_cast<size_t>(i)] = value;
    }
    return t;
}

Tensor Tensor::from_data(Shape shape, const std::vector<double>& values, DType dt) {
    Tensor t = zeros(std::move(shape), dt);
    if (static_cast<int64_t>(values.size()) != t.numel())
        throw DimensionError("from_data: " + std::to_string(values.size()) + " values for shape " +
                             shape_str(t.shape()));
    for (int64_t i = 0; i < t.numel(); ++i) t.set(i, values[static_cast<size_t>(i)]);
    return t;
}

Tensor Tensor::randn(Shape shape, Rng& rng, DType dt) {
    Tensor t = zeros(std::move(shape), dt);
    int64_t n = t.numel();
    for (int64_t i = 0; i < n; ++i) t.set(i, rng.normal());
    return t;
}

Tensor Tensor::rand_uniform(Shape shape, double lo, double hi, Rng& rng, DType dt) {
    Tensor t = zeros(std::move(shape), dt);
    int64_t n = t.numel();
    for (int64_t i = 0; i < n; ++i) t.set(i, rng.uniform(lo, hi));
    return t;
}

int64_t Tensor::numel() const { return shape_numel(impl_->shape); }

double Tensor::at(int64_t flat) const {
    if (flat < 0 || flat >= numel()) throw DimensionError("element index out of range");
    return impl_->dtype == DType::f32 ? static_cast<double>(impl_->data_f32[static_cast<size_t>(flat)])
                                      : impl_->data_f64[static_cast<size_t>(flat)];
}

void Tensor::set(int64_t flat, double v) {
    if (flat < 0 || flat >= numel()) throw DimensionError("element index out of range");
    if (impl_->dtype == DType::f32)
        impl_->data_f32[static_cast<size_t>(flat)] = static_cast<float>(v);
    else
        impl_->data_f64[static_cast<size_t>(flat)] = v;
}

double Tensor::item() const {
    if (numel() != 1) throw DimensionError("item() on tensor with " + std::to_string(numel()) + " elements");
    return at(0);
}

Tensor Tensor::grad() const {
    if (!impl_ || !impl_->grad) return Tensor();
    return wrap(impl_->grad);
}

void Tensor::accumulate_grad(const Tensor& g) {
    if (g.dtype() != dtype() || g.shape() != shape())
        throw DimensionError("grad accumulation shape/dtype mismatch");
    if (!impl_->grad) impl_->grad = make_impl(impl_->shape, impl_->dtype);
    int64_t n = numel();
    if (dtype() == DType::f32) {
        float* dst = impl_->grad->data_f32.data();
        const float* src = g.ptr<float>();
        for (int64_t i = 0; i < n; ++i) dst[i] += src[i];
    } else {
        double* dst = impl_->grad->data_f64.data();
        const double* src = g.ptr<double>();
        for (int64_t i = 0; i < n; ++i) dst[i] += src[i];
    }
}

Tensor Tensor::clone() const {
    Tensor t = zeros(impl_->shape, impl_->dtype);
    t.impl_->data_f32 = impl_->data_f32;
    t.impl_->data_f64 = impl_->data_f64;
    return t;
}

Tensor Tensor::detach() const {
    Tensor t = wrap(std::make_shared<TensorImpl>(*impl_));
    t.impl_->requires_grad = false;
    t.impl_->grad = nullptr;
    return t;
}

Tensor Tensor::to(DType dt) const {
    if (dt == dtype()) return clone();
    Tensor t = zeros(impl_->shape, dt);
    int64_t n = numel();
    for (int64_t i = 0; i < n; ++i) t.set(i, at(i));
    return t;
}

Tensor Tensor::reshaped_view(Shape s) const {
    if (shape_numel(s) != numel())
        throw DimensionError("reshape " + shape_str(shape()) + " -> " + shape_str(s) +
                             " changes element count");
    auto impl = std::make_shared<TensorImpl>(*impl_);
    impl->shape = std::move(s);
    return wrap(impl);
}

std::vector<double> Tensor::to_vector() const {
    std::vector<double> out(static_cast<size_t>(numel()));
    for (int64_t i = 0; i < numel(); ++i) out[static_cast<size_t>(i)] = at(i);
    return out;
}

void Tensor::copy_from(const Tensor& src) {
    if (src.shape() != shape()) throw DimensionError("copy_from shape mismatch");
    if (src.dtype() == dtype()) {
        impl_->data_f32 = src.impl_->data_f32;
        impl_->data_f64 = src.impl_->data_f64;
    } else {
        for (int64_t i = 0; i < numel(); ++i) set(i, src.at(i));
    }
}

Tape& Tape::current() {
    thread_local Tape tape;
    return tape;
}

void Tape::record(std::function<void()> backward_fn) {
    if (recording()) nodes_.push_back(std::move(backward_fn));
}

void Tape::backward(Tensor& loss) {
    if (loss.numel() != 1) throw UsageError("backward: loss must be scalar, got " + shape_str(loss.shape()));
    if (!loss.requires_grad()) throw UsageError("backward: loss does not require grad");
    if (nodes_.empty()) throw UsageError("backward: tape is empty (no differentiable ops recorded)");
    Tensor seed = Tensor::full({1}, 1.0, loss.dtype()).reshaped_view(loss.shape());
    loss.accumulate_grad(seed);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    clear();
}

void backward(Tensor loss) { Tape::current().backward(loss); }

}  // namespace framecast
