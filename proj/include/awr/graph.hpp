#pragma once

#include <deque>
#include <functional>
#include <vector>

#include "awr/tensor.hpp"

namespace awr::nn {

// Handle into a Tape.
struct Var {
    int i = -1;
    bool valid() const { return i >= 0; }
};

// Reverse-mode tape. Ops append nodes eagerly; backward() replays the
// recorded closures in reverse. All math is double precision so analytic
// gradients can be pitted against central finite differences tightly.
class Tape {
public:
    explicit Tape(bool record_grad = true) : record_(record_grad) {}

    Var input(Tensor v) {
        nodes_.push_back({std::move(v), Tensor(), nullptr});
        return Var{static_cast<int>(nodes_.size()) - 1};
    }
    Var constant(double v) { return input(Tensor::scalar(v)); }

    Var make(Tensor v, std::function<void(Tape&)> back) {
        nodes_.push_back({std::move(v), Tensor(), record_ ? std::move(back) : nullptr});
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    const Tensor& val(Var x) const { return nodes_[static_cast<size_t>(x.i)].val; }
    double scalar(Var x) const {
        const Tensor& t = val(x);
        if (t.size() != 1) throw ShapeError("scalar() on non-scalar var " + t.shape_str());
        return t[0];
    }

    // Valid after backward(); zero tensor if the var was never reached.
    const Tensor& grad(Var x) {
        Node& n = nodes_[static_cast<size_t>(x.i)];
        if (n.grad.empty()) n.grad = Tensor::zeros(n.val.dims());
        return n.grad;
    }
    Tensor& grad_mut(Var x) {
        Node& n = nodes_[static_cast<size_t>(x.i)];
        if (n.grad.empty()) n.grad = Tensor::zeros(n.val.dims());
        return n.grad;
    }

    bool recording() const { return record_; }
    size_t node_count() const { return nodes_.size(); }

    void backward(Var loss);

private:
    struct Node {
        Tensor val;
        Tensor grad;
        std::function<void(Tape&)> back;
    };
    // deque: appending never invalidates references handed out by val()
    std::deque<Node> nodes_;
    bool record_;
};

// ---- elementwise ----
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var div(Tape& t, Var a, Var b);
Var neg(Tape& t, Var a);
Var scale(Tape& t, Var a, double k);
Var add_scalar(Tape& t, Var a, double c);
Var relu(Tape& t, Var a);
Var lrelu(Tape& t, Var a, double slope = 0.2);
Var sigmoid(Tape& t, Var a);
Var abs_v(Tape& t, Var a);
Var sqrt_v(Tape& t, Var a);
Var exp_v(Tape& t, Var a);
Var log_v(Tape& t, Var a);
Var pow_scalar(Tape& t, Var a, double p);  // requires positive inputs

// ---- reductions / vector ops ----
Var sum(Tape& t, Var a);
Var mean(Tape& t, Var a);
Var dot(Tape& t, Var a, Var b);

// ---- linear algebra ----
// x: (in), w: (out, in), b: (out) or invalid -> (out)
Var dense(Tape& t, Var x, Var w, Var b);
Var matmul(Tape& t, Var a, Var b);  // (m,k) x (k,n) -> (m,n)
Var transpose(Tape& t, Var a);      // (m,n) -> (n,m)
Var softmax_rows(Tape& t, Var a);   // row-wise softmax on (m,n)

// ---- shape ----
Var reshape(Tape& t, Var a, std::vector<int> dims);
Var slice_last(Tape& t, Var a, int from, int count);
Var concat_last(Tape& t, const std::vector<Var>& parts);

// ---- spatial (rank-3, h x w x c) ----
Var conv2d(Tape& t, Var x, Var w, Var b, int stride, int pad);  // w: (kh,kw,cin,cout)
Var upsample2(Tape& t, Var x);                                  // nearest 2x
Var avgpool2(Tape& t, Var x);                                   // 2x2 mean, even dims
Var global_avg_pool(Tape& t, Var x);                            // (h,w,c) -> (c)
Var broadcast_hw(Tape& t, Var v, int h, int w);                 // (c) -> (h,w,c)
Var broadcast_c(Tape& t, Var m, int c);                         // (h,w) -> (h,w,c)
// Depthwise correlation with a fixed (non-learned) kernel, valid padding.
Var blur_valid(Tape& t, Var x, const Tensor& kernel);

}  // namespace awr::nn
