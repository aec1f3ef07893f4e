#include "simvit/tape.hpp"

#include <stdexcept>
#include <string>

namespace simvit {

template <Real T>
GradBuffer<T>::GradBuffer(std::vector<const Parameter<T>*> params) : params_(std::move(params)) {
    grads_.reserve(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
        index_.emplace(params_[i], i);
        grads_.emplace_back(params_[i]->shape());
    }
}

template <Real T>
void GradBuffer<T>::add(const Parameter<T>& param, const Tensor<T>& grad) {
    auto it = index_.find(&param);
    if (it == index_.end()) {
        throw std::logic_error("gradient for unregistered parameter '" + param.name + "'");
    }
    grads_[it->second] += grad;
}

template <Real T>
void GradBuffer<T>::add(const GradBuffer& other) {
    if (other.params_ != params_) {
        throw std::logic_error("gradient buffers cover different parameter sets");
    }
    for (std::size_t i = 0; i < grads_.size(); ++i) grads_[i] += other.grads_[i];
}

template <Real T>
void GradBuffer<T>::deposit() const {
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i]->grad += grads_[i];
}

template <Real T>
void GradBuffer<T>::clear() {
    for (auto& g : grads_) g.fill(T(0));
}

template <Real T>
typename Tape<T>::Node& Tape<T>::node(Var v) {
    if (v.id >= nodes_.size()) throw std::out_of_range("var " + std::to_string(v.id) + " not on tape");
    return nodes_[v.id];
}

template <Real T>
const typename Tape<T>::Node& Tape<T>::node(Var v) const {
    if (v.id >= nodes_.size()) throw std::out_of_range("var " + std::to_string(v.id) + " not on tape");
    return nodes_[v.id];
}

template <Real T>
Var Tape<T>::push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

template <Real T>
Var Tape<T>::constant(Tensor<T> value) {
    Node n;
    n.owned = std::move(value);
    return push(std::move(n));
}

template <Real T>
Var Tape<T>::input(Tensor<T> value) {
    Node n;
    n.owned = std::move(value);
    n.requires_grad = recording_;
    n.keep_grad = true;
    return push(std::move(n));
}

template <Real T>
Var Tape<T>::param(const Parameter<T>& p) {
    Node n;
    n.view = &p.value;
    n.param = &p;
    n.requires_grad = recording_;
    return push(std::move(n));
}

template <Real T>
Var Tape<T>::record(Tensor<T> value, std::initializer_list<Var> inputs, Backward fn) {
    Node n;
    n.owned = std::move(value);
    if (recording_) {
        for (Var in : inputs) {
            if (node(in).requires_grad) {
                n.requires_grad = true;
                break;
            }
        }
        if (n.requires_grad) n.backward = std::move(fn);
    }
    return push(std::move(n));
}

template <Real T>
const Tensor<T>& Tape<T>::value(Var v) const {
    const Node& n = node(v);
    return n.view ? *n.view : n.owned;
}

template <Real T>
Tensor<T> Tape<T>::grad(Var v) const {
    const Node& n = node(v);
    if (n.has_grad) return n.grad;
    return Tensor<T>(value(v).shape());
}

template <Real T>
Tensor<T>& Tape<T>::grad_slot(Var v) {
    Node& n = node(v);
    if (!n.has_grad) {
        n.grad = Tensor<T>(value(v).shape());
        n.has_grad = true;
    }
    return n.grad;
}

template <Real T>
void Tape<T>::accumulate(Var v, const Tensor<T>& g) {
    if (!node(v).requires_grad) return;
    grad_slot(v) += g;
}

template <Real T>
void Tape<T>::backward(Var out) {
    backward(out, Tensor<T>::full(value(out).shape(), T(1)));
}

template <Real T>
void Tape<T>::backward(Var out, const Tensor<T>& seed) {
    if (!recording_) throw std::logic_error("backward() on a non-recording tape");
    if (backward_done_) throw std::logic_error("backward() may run once per tape");
    if (seed.shape() != value(out).shape()) {
        throw DimensionError("backward seed " + shape_string(seed.shape()) + " vs output " +
                             shape_string(value(out).shape()));
    }
    backward_done_ = true;
    if (!node(out).requires_grad) return;
    grad_slot(out) += seed;

    for (std::size_t i = out.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.has_grad) continue;
        if (n.backward) n.backward(*this, Var{i}, n.grad);
        if (n.param) {
            if (sink_) {
                sink_->add(*n.param, n.grad);
            } else {
                n.param->grad += n.grad;
            }
        }
        if (!n.keep_grad) {
            n.grad = Tensor<T>();
            n.has_grad = false;
        }
        n.backward = nullptr;
    }
}

template class Tape<float>;
template class Tape<double>;
template class GradBuffer<float>;
template class GradBuffer<double>;

}  // namespace simvit
