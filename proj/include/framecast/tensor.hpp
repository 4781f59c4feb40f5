#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "framecast/error.hpp"
#include "framecast/rng.hpp"

namespace framecast {

enum class DType : uint8_t { f32 = 0, f64 = 1 };

inline const char* dtype_name(DType dt) { return dt == DType::f32 ? "f32" : "f64"; }
inline size_t dtype_size(DType dt) { return dt == DType::f32 ? 4 : 8; }

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorImpl {
    Shape shape;
    DType dtype = DType::f32;
    bool requires_grad = false;
    std::vector<float> data_f32;
    std::vector<double> data_f64;
    std::shared_ptr<TensorImpl> grad;  // same shape/dtype, allocated on first accumulation

    template <class T>
    std::vector<T>& buf() {
        if constexpr (std::is_same_v<T, float>)
            return data_f32;
        else
            return data_f64;
    }
    template <class T>
    const std::vector<T>& buf() const {
        if constexpr (std::is_same_v<T, float>)
            return data_f32;
        else
            return data_f64;
    }
};

// Value-semantics handle onto a shared buffer. Ops return fresh tensors; the
// tape keeps intermediates alive through the closures it records.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, DType dt = DType::f32, bool requires_grad = false);
    static Tensor full(Shape shape, double value, DType dt = DType::f32);
    static Tensor from_data(Shape shape, const std::vector<double>& values, DType dt = DType::f32);
    static Tensor randn(Shape shape, Rng& rng, DType dt = DType::f32);
    static Tensor rand_uniform(Shape shape, double lo, double hi, Rng& rng, DType dt = DType::f32);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int ndim() const { return static_cast<int>(impl_->shape.size()); }
    int64_t dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
    int64_t numel() const;
    DType dtype() const { return impl_->dtype; }

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool v) {
        impl_->requires_grad = v;
        return *this;
    }

    // Element access in double regardless of storage dtype (test/host-side use).
    double at(int64_t flat) const;
    void set(int64_t flat, double v);
    double item() const;  // requires numel() == 1

    template <class T>
    T* ptr() {
        return impl_->buf<T>().data();
    }
    template <class T>
    const T* ptr() const {
        return impl_->buf<T>().data();
    }

    bool has_grad() const { return impl_ && impl_->grad != nullptr; }
    Tensor grad() const;  // handle onto the grad buffer (undefined Tensor if absent)
    void zero_grad() { impl_->grad = nullptr; }
    // Adds `g` into this tensor's grad buffer, allocating it on first use.
    void accumulate_grad(const Tensor& g);

    Tensor clone() const;          // deep copy, grad-free, requires_grad off
    Tensor detach() const;         // shares the buffer, requires_grad off
    Tensor to(DType dt) const;     // dtype conversion (copy), grad-free
    Tensor reshaped_view(Shape s) const;  // shares the buffer under a new shape

    std::vector<double> to_vector() const;
    void copy_from(const Tensor& src);  // in-place element copy, shapes must match

    TensorImpl* impl() const { return impl_.get(); }
    std::shared_ptr<TensorImpl> impl_ptr() const { return impl_; }

    static Tensor wrap(std::shared_ptr<TensorImpl> impl) {
        Tensor t;
        t.impl_ = std::move(impl);
        return t;
    }

private:
    std::shared_ptr<TensorImpl> impl_;
};

// Reverse-mode tape: an ordered record of backward closures pushed by each
// differentiable op. backward() seeds d(loss)=1, replays in reverse (execution
// order is already topological), and clears the tape. Fan-out accumulates
// additively via Tensor::accumulate_grad. One tape per thread; evaluation
// threads run under NoGradGuard and never record.
class Tape {
public:
    static Tape& current();

    bool enabled() const { return enabled_; }
    void set_enabled(bool v) { enabled_ = v; }

    bool recording() const { return enabled_ && !suspended_; }
    void record(std::function<void()> backward_fn);

    void backward(Tensor& loss);
    void clear() { nodes_.clear(); }
    size_t size() const { return nodes_.size(); }

private:
    std::vector<std::function<void()>> nodes_;
    bool enabled_ = true;
    bool suspended_ = false;

    friend class NoGradGuard;
};

class NoGradGuard {
public:
    NoGradGuard() : tape_(Tape::current()), prev_(tape_.suspended_) { tape_.suspended_ = true; }
    ~NoGradGuard() { tape_.suspended_ = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    Tape& tape_;
    bool prev_;
};

void backward(Tensor loss);

}  // namespace framecast
