#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "mcf/errors.hpp"
#include "mcf/rng.hpp"

namespace mcf {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

namespace detail {

// Data and gradient buffers are shared between a tensor and its reshaped
// views, so a gradient written through one view is visible through all.
struct TensorStorage {
    std::vector<double> data;
    std::vector<double> grad;  // empty until first needed
    bool requires_grad = false;
};

}  // namespace detail

class Tape;
Tape* active_tape();

// Dense row-major tensor of 64-bit floats. Value semantics with shared
// storage: copies and reshapes alias the same data/grad buffers. The shape of
// a given instance never changes; reshape returns a new view.
class Tensor {
public:
    Tensor() : st_(std::make_shared<detail::TensorStorage>()) {}

    static Tensor zeros(const Shape& shape) { return filled(shape, 0.0); }
    static Tensor zeros(std::initializer_list<long long> dims) {
        return filled(checked_shape(dims), 0.0);
    }

    static Tensor full(const Shape& shape, double value) { return filled(shape, value); }
    static Tensor full(std::initializer_list<long long> dims, double value) {
        return filled(checked_shape(dims), value);
    }

    static Tensor from_data(const Shape& shape, std::vector<double> values) {
        Tensor t = filled(shape, 0.0);
        if (values.size() != t.numel())
            throw InvalidShape("from_data: " + std::to_string(values.size()) +
                               " values for shape " + shape_str(shape));
        t.st_->data = std::move(values);
        return t;
    }
    static Tensor from_data(std::initializer_list<long long> dims, std::vector<double> values) {
        return from_data(checked_shape(dims), std::move(values));
    }

    static Tensor scalar(double value) { return from_data(Shape{1}, {value}); }

    static Tensor seeded_normal(const Shape& shape, std::uint64_t seed, double mean = 0.0,
                                double stddev = 1.0) {
        Tensor t = filled(shape, 0.0);
        NormalSampler gen(seed, mean, stddev);
        for (double& v : t.st_->data) v = gen.next();
        return t;
    }
    static Tensor seeded_normal(std::initializer_list<long long> dims, std::uint64_t seed,
                                double mean = 0.0, double stddev = 1.0) {
        return seeded_normal(checked_shape(dims), seed, mean, stddev);
    }

    const Shape& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t numel() const { return st_->data.size(); }
    std::size_t dim(std::size_t i) const { return shape_[i]; }

    std::vector<double>& data() { return st_->data; }
    const std::vector<double>& data() const { return st_->data; }

    double value() const {
        if (numel() != 1) throw NotScalar("value(): tensor has " + std::to_string(numel()) + " elements");
        return st_->data[0];
    }

    double at(std::initializer_list<std::size_t> idx) const { return st_->data[flat_index(idx)]; }
    void set(std::initializer_list<std::size_t> idx, double v) { st_->data[flat_index(idx)] = v; }

    bool requires_grad() const { return st_->requires_grad; }
    Tensor& set_requires_grad(bool rg) {
        st_->requires_grad = rg;
        return *this;
    }

    bool has_grad() const { return !st_->grad.empty(); }

    // Gradient buffer, zero-filled on first access.
    std::vector<double>& grad() {
        if (st_->grad.empty()) st_->grad.assign(st_->data.size(), 0.0);
        return st_->grad;
    }
    const std::vector<double>& grad() const {
        const_cast<Tensor*>(this)->grad();
        return st_->grad;
    }

    void zero_grad() {
        if (!st_->grad.empty()) st_->grad.assign(st_->data.size(), 0.0);
    }

    int node_id() const { return node_id_; }

    // New view over the same storage; the original keeps its shape.
    Tensor reshape(const Shape& new_shape) const {
        if (shape_numel(new_shape) != numel())
            throw ShapeError("reshape: " + shape_str(shape_) + " -> " + shape_str(new_shape));
        for (std::size_t d : new_shape)
            if (d == 0) throw InvalidShape("reshape: zero dimension");
        Tensor t(*this);
        t.shape_ = new_shape;
        return t;
    }
    Tensor reshape(std::initializer_list<long long> dims) const {
        return reshape(checked_shape(dims));
    }

    bool same_storage(const Tensor& other) const { return st_ == other.st_; }

    const std::shared_ptr<detail::TensorStorage>& storage() const { return st_; }

private:
    friend class Tape;
    friend void record_op(Tensor&, std::initializer_list<const Tensor*>, std::function<void()>);

    static Shape checked_shape(std::initializer_list<long long> dims) {
        Shape s;
        s.reserve(dims.size());
        for (long long d : dims) {
            if (d <= 0)
                throw InvalidShape("dimension must be positive, got " + std::to_string(d));
            s.push_back(static_cast<std::size_t>(d));
        }
        return s;
    }

    static Tensor filled(const Shape& shape, double value) {
        for (std::size_t d : shape)
            if (d == 0) throw InvalidShape("dimension must be positive, got 0");
        Tensor t;
        t.shape_ = shape;
        t.st_->data.assign(shape_numel(shape), value);
        return t;
    }

    std::size_t flat_index(std::initializer_list<std::size_t> idx) const {
        if (idx.size() != shape_.size())
            throw ShapeError("index rank " + std::to_string(idx.size()) + " for shape " +
                             shape_str(shape_));
        std::size_t flat = 0;
        std::size_t i = 0;
        for (std::size_t v : idx) {
            if (v >= shape_[i])
                throw ShapeError("index out of range in dim " + std::to_string(i));
            flat = flat * shape_[i] + v;
            ++i;
        }
        return flat;
    }

    std::shared_ptr<detail::TensorStorage> st_;
    Shape shape_;
    int node_id_ = -1;
};

// Reverse-mode tape. Operations append nodes in execution order, so inputs
// always precede the node that consumes them; backward() walks the list once
// in reverse. One tape per forward pass, no graph reuse.
class Tape {
public:
    struct Node {
        std::vector<int> input_ids;  // -1 marks a leaf input
        int output_id = -1;
        Tensor output;
        std::function<void()> backward;
    };

    int record(std::vector<int> input_ids, const Tensor& output, std::function<void()> fn) {
        Node n;
        n.input_ids = std::move(input_ids);
        n.output_id = static_cast<int>(nodes_.size());
        n.output = output;
        n.backward = std::move(fn);
        nodes_.push_back(std::move(n));
        return nodes_.back().output_id;
    }

    const std::vector<Node>& nodes() const { return nodes_; }
    std::size_t size() const { return nodes_.size(); }

private:
    std::vector<Node> nodes_;
};

namespace detail {
inline Tape*& active_tape_slot() {
    thread_local Tape* slot = nullptr;
    return slot;
}
}  // namespace detail

inline Tape* active_tape() { return detail::active_tape_slot(); }

// Activates a fresh tape for the current thread for the scope's lifetime.
class TapeScope {
public:
    TapeScope() : prev_(detail::active_tape_slot()) { detail::active_tape_slot() = &tape_; }
    ~TapeScope() { detail::active_tape_slot() = prev_; }
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

    Tape& tape() { return tape_; }

private:
    Tape tape_;
    Tape* prev_;
};

// Suspends recording (evaluation paths, finite-difference probes).
class NoGradScope {
public:
    NoGradScope() : prev_(detail::active_tape_slot()) { detail::active_tape_slot() = nullptr; }
    ~NoGradScope() { detail::active_tape_slot() = prev_; }
    NoGradScope(const NoGradScope&) = delete;
    NoGradScope& operator=(const NoGradScope&) = delete;

private:
    Tape* prev_;
};

// Marks `out` as gradient-carrying when any input is, and records the node on
// the active tape. Ops call this once with their backward closure.
inline void record_op(Tensor& out, std::initializer_list<const Tensor*> inputs,
                      std::function<void()> backward_fn) {
    bool rg = false;
    for (const Tensor* t : inputs) rg = rg || t->requires_grad();
    out.set_requires_grad(rg);
    Tape* tape = active_tape();
    if (!tape || !rg) return;
    std::vector<int> ids;
    ids.reserve(inputs.size());
    for (const Tensor* t : inputs) ids.push_back(t->node_id());
    out.node_id_ = tape->record(std::move(ids), out, std::move(backward_fn));
}

// Seeds d(loss)/d(loss) = 1 and runs every recorded node's backward rule once
// in reverse order. Gradients of op outputs are reset first, so leaf
// gradients accumulate across calls: running backward twice on the same tape
// doubles them.
inline void backward(Tape& tape, Tensor& loss) {
    if (loss.numel() != 1)
        throw NotScalar("backward: loss has " + std::to_string(loss.numel()) + " elements");
    for (const Tape::Node& n : tape.nodes()) {
        Tensor out = n.output;
        out.grad().assign(out.numel(), 0.0);
    }
    loss.grad()[0] += 1.0;
    const auto& nodes = tape.nodes();
    for (std::size_t i = nodes.size(); i-- > 0;) {
        if (nodes[i].backward) nodes[i].backward();
    }
}

}  // namespace mcf
