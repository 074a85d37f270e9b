#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace bwe {

// Shaped numeric array [batch, channels, length] with an optional gradient
// buffer. Shared ownership: ops hand out TensorPtr so the tape can hold the
// graph alive and fan-out accumulates into one grad buffer.
template <class T>
struct TensorT {
    int batch = 0;
    int channels = 0;
    int length = 0;
    std::vector<T> data;
    std::vector<T> grad;  // empty until first accumulation
    bool requires_grad = false;

    TensorT() = default;
    TensorT(int b, int c, int l, bool rg = false)
        : batch(b), channels(c), length(l),
          data(static_cast<std::size_t>(b) * c * l, T(0)), requires_grad(rg) {
        if (b <= 0 || c <= 0 || l <= 0)
            throw std::invalid_argument("tensor dimensions must be positive");
    }

    std::size_t size() const { return static_cast<std::size_t>(batch) * channels * length; }

    bool same_shape(const TensorT& o) const {
        return batch == o.batch && channels == o.channels && length == o.length;
    }

    std::string shape_str() const {
        return "(" + std::to_string(batch) + "," + std::to_string(channels) + "," +
               std::to_string(length) + ")";
    }

    // Contiguous row for one (batch, channel) pair.
    T* row(int b, int c) {
        return data.data() + (static_cast<std::size_t>(b) * channels + c) * length;
    }
    const T* row(int b, int c) const {
        return data.data() + (static_cast<std::size_t>(b) * channels + c) * length;
    }
    T* grad_row(int b, int c) {
        return grad.data() + (static_cast<std::size_t>(b) * channels + c) * length;
    }
    const T* grad_row(int b, int c) const {
        return grad.data() + (static_cast<std::size_t>(b) * channels + c) * length;
    }

    void ensure_grad() {
        if (grad.size() != size()) grad.assign(size(), T(0));
    }

    void zero_grad() {
        if (!grad.empty()) grad.assign(grad.size(), T(0));
    }

    bool has_grad() const { return grad.size() == size(); }
};

template <class T>
using TensorPtr = std::shared_ptr<TensorT<T>>;

template <class T>
TensorPtr<T> make_tensor(int b, int c, int l, bool requires_grad = false) {
    return std::make_shared<TensorT<T>>(b, c, l, requires_grad);
}

using Tensor = TensorT<float>;

// One recorded operation; backward() pushes the output gradient to inputs.
template <class T>
struct OpNode {
    virtual ~OpNode() = default;
    virtual void backward() = 0;
};

// Ordered record of executed operations. Replaying in reverse visits every
// node exactly once; gradients accumulate additively across fan-out.
template <class T>
class Tape {
public:
    void record(std::unique_ptr<OpNode<T>> node) { nodes_.push_back(std::move(node)); }

    std::size_t size() const { return nodes_.size(); }

    // Seeds d(loss)/d(loss) = 1 and runs all recorded ops backward.
    void backward_from(const TensorPtr<T>& loss) {
        if (!loss || loss->size() != 1)
            throw std::invalid_argument("backward requires a scalar loss tensor");
        if (consumed_)
            throw std::logic_error("backward called twice on the same tape; reset() first");
        consumed_ = true;
        loss->ensure_grad();
        loss->grad[0] += T(1);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)->backward();
    }

    void reset() {
        nodes_.clear();
        consumed_ = false;
    }

private:
    std::vector<std::unique_ptr<OpNode<T>>> nodes_;
    bool consumed_ = false;
};

// Trainable tensor plus its Adam state.
template <class T>
struct Parameter {
    std::string name;
    TensorPtr<T> tensor;
    std::vector<T> adam_m;
    std::vector<T> adam_v;
    std::uint64_t step_count = 0;

    Parameter() = default;
    Parameter(std::string n, TensorPtr<T> t) : name(std::move(n)), tensor(std::move(t)) {
        tensor->requires_grad = true;
        adam_m.assign(tensor->size(), T(0));
        adam_v.assign(tensor->size(), T(0));
    }
};

}  // namespace bwe
