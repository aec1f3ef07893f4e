#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <unordered_map>
#include <vector>

#include "simvit/tensor.hpp"

namespace simvit {

// Handle to a value recorded on a Tape.
struct Var {
    std::size_t id = 0;
};

// Per-worker gradient accumulator that stands in for Parameter::grad when
// several tapes run concurrently against the same parameters.
template <Real T>
class GradBuffer {
   public:
    explicit GradBuffer(std::vector<const Parameter<T>*> params);

    void add(const Parameter<T>& param, const Tensor<T>& grad);
    void add(const GradBuffer& other);
    // Adds the buffered gradients into each Parameter::grad in registration order.
    void deposit() const;
    void clear();

    std::span<const Tensor<T>> grads() const { return grads_; }

   private:
    std::vector<const Parameter<T>*> params_;
    std::unordered_map<const Parameter<T>*, std::size_t> index_;
    std::vector<Tensor<T>> grads_;
};

// Records forward computations and replays their vector-Jacobian products
// in reverse. Forward ops append nodes; one backward() call walks them from
// the output to the first node, and parameter gradients are added (never
// assigned) to Parameter::grad or to a redirected GradBuffer.
template <Real T>
class Tape {
   public:
    using Backward = std::function<void(Tape&, Var self, const Tensor<T>& grad_out)>;

    explicit Tape(bool recording = true) : recording_(recording) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const { return recording_; }

    // A leaf that never receives a gradient.
    Var constant(Tensor<T> value);
    // A leaf whose gradient stays readable through grad() after backward().
    Var input(Tensor<T> value);
    // A leaf bound to a parameter; its value is referenced, not copied.
    Var param(const Parameter<T>& p);

    // Appends an op result. `fn` runs during backward only if some input
    // requires a gradient and the tape is recording.
    Var record(Tensor<T> value, std::initializer_list<Var> inputs, Backward fn);

    const Tensor<T>& value(Var v) const;
    bool requires_grad(Var v) const { return node(v).requires_grad; }

    // Gradient accumulated so far for v; zeros if none arrived.
    Tensor<T> grad(Var v) const;

    // Mutable, lazily zero-initialized gradient slot. Only valid while
    // backward() is running (from inside a Backward callback).
    Tensor<T>& grad_slot(Var v);
    void accumulate(Var v, const Tensor<T>& g);

    void backward(Var out);
    void backward(Var out, const Tensor<T>& seed);

    void redirect_gradients(GradBuffer<T>* buffer) { sink_ = buffer; }

    std::size_t size() const { return nodes_.size(); }

   private:
    struct Node {
        Tensor<T> owned;
        const Tensor<T>* view = nullptr;
        const Parameter<T>* param = nullptr;
        Tensor<T> grad;
        Backward backward;
        bool requires_grad = false;
        bool has_grad = false;
        bool keep_grad = false;
    };

    Node& node(Var v);
    const Node& node(Var v) const;
    Var push(Node n);

    bool recording_;
    bool backward_done_ = false;
    GradBuffer<T>* sink_ = nullptr;
    std::deque<Node> nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;
extern template class GradBuffer<float>;
extern template class GradBuffer<double>;

}  // namespace simvit
