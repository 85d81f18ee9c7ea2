#include "awr/graph.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

namespace awr::nn {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using CMapM = Eigen::Map<const MatRM>;

void Tape::backward(Var loss) {
    if (!record_) throw Error("backward() on a non-recording tape");
    const Tensor& lv = val(loss);
    if (lv.size() != 1) throw ShapeError("backward() requires a scalar loss");
    grad_mut(loss)[0] = 1.0;
    for (int i = loss.i; i >= 0; --i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (n.back && !n.grad.empty()) n.back(*this);
    }
}

namespace {

// The index the next make() will occupy; lets closures capture their result.
Var next_var(Tape& t) { return Var{static_cast<int>(t.node_count())}; }

template <typename F>
Tensor map1(const Tensor& a, F f) {
    Tensor out(a.dims());
    for (int64_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
    return out;
}

}  // namespace

// ---------------- elementwise ----------------

Var add(Tape& t, Var a, Var b) {
    require_same_shape(t.val(a), t.val(b), "add");
    const Tensor& av = t.val(a);
    const Tensor& bv = t.val(b);
    Tensor out(av.dims());
    for (int64_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
    Var r = next_var(t);
    return t.make(std::move(out), [a, b, r](Tape& tp) {
        const Tensor& g = tp.grad(r);
        Tensor& ga = tp.grad_mut(a);
        Tensor& gb = tp.grad_mut(b);
        for (int64_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i];
            gb[i] += g[i];
        }
    });
}

Var sub(Tape& t, Var a, Var b) {
    require_same_shape(t.val(a), t.val(b), "sub");
    const Tensor& av = t.val(a);
    const Tensor& bv = t.val(b);
    Tensor out(av.dims());
    for (int64_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
    Var r = next_var(t);
    return t.make(std::move(out), [a, b, r](Tape& tp) {
        const Tensor& g = tp.grad(r);
        Tensor& ga = tp.grad_mut(a);
        Tensor& gb = tp.grad_mut(b);
        for (int64_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i];
            gb[i] -= g[i];
        }
    });
}

Var mul(Tape& t, Var a, Var b) {
    require_same_shape(t.val(a), t.val(b), "mul");
    const Tensor& av = t.val(a);
    const Tensor& bv = t.val(b);
    Tensor out(av.dims());
    for (int64_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
    Var r = next_var(t);
    return t.make(std::move(out), [a, b, r](Tape& tp) {
        const Tensor& g = tp.grad(r);
        const Tensor& av2 = tp.val(a);
        const Tensor& bv2 = tp.val(b);
        Tensor& ga = tp.grad_mut(a);
        Tensor& gb = tp.grad_mut(b);
        for (int64_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i] * bv2[i];
            gb[i] += g[i] * av2[i];
        }
    });
}

Var div(Tape& t, Var a, Var b) {
    require_same_shape(t.val(a), t.val(b), "div");
    const Tensor& av = t.val(a);
    const Tensor& bv = t.val(b);
    Tensor out(av.dims());
    for (int64_t i = 0; i < av.size(); ++i) out[i] = av[i] / bv[i];
    Var r = next_var(t);
    return t.make(std::move(out), [a, b, r](Tape& tp) {
        const Tensor& g = tp.grad(r);
        const Tensor& av2 = tp.val(a);
        const Tensor& bv2 = tp.val(b);
        Tensor& ga = tp.grad_mut(a);
        Tensor& gb = tp.grad_mut(b);
        for (int64_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i] / bv2[i];
            gb[i] -= g[i] * av2[i] / (bv2[i] * bv2[i]);
        }
    });
}

Var neg(Tape& t, Var a) { return scale(t, a, -1.0); }

Var scale(Tape& t, Var a, double k) {
    Tensor out = map1(t.val(a), [k](double x) { return k * x; });
    Var r = next_var(t);
    return t.make(std::move(out), [a, r, k](Tape& tp) {
        const Tensor& g = tp.grad(r);
        Tensor& ga = tp.grad_mut(a);
        for (int64_t i = 0; i < g.size(); ++i) ga[i] += k * g[i];
    });
}

Var add_scalar(Tape& t, Var a, double c) {
    Tensor out = map1(t.val(a), [c](double x) { return x + c; });
    Var r = next_var(t);
    return t.make(std::move(out), [a, r](Tape& tp) {
        const Tensor& g = tp.grad(r);
        Tensor& ga = tp.grad_mut(a);
        for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

Var relu(Tape& t, Var a) {
    Tensor out = map1(t.val(a), [](double x) { return x > 0.0 ? x : 0.0; });
    Var r = next_var(t);
    return t.make(std::move(out), [a, r](Tape& tp) {
        const Tensor& g = tp.grad(r);
        const Tensor& av = tp.val(a);
        Tensor& ga = tp.grad_mut(a);
        for (int64_t i = 0; i < g.size(); ++i)
            if (av[i] > 0.0) ga[i] += g[i];
    });
}

Var lrelu(Tape& t, Var a, double slope) {
    Tensor out = map1(t.val(a), [slope](double x) { return x > 0.0 ? x : slope * x; });
    Var r = next_var(t);
    return t.make(std::move(out), [a, r, slope](Tape& tp) {
        const Tensor& g = tp.grad(r);
        const Tensor& av = tp.val(a);
        Tensor& ga = tp.grad_mut(a);
        for (int64_t i = 0; i < g.size(); ++i) ga[i] += (av[i] > 0.0 ? 1.0 : slope) * g[i];
    });
}

Var sigmoid(Tape& t, Var a) {
    Tensor out = map1(t.val(a), [](double x) { return 1.0 / (1.0 + std::exp(-x)); });
    Var r = next_var(t);
    return t.make(std::move(out), [a, r](Tape& tp) {
        const Tensor& g = tp.grad(r);
        const Tensor& y = tp.val(r);
        Tensor& ga = tp.grad_mut(a);
        for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
    });
}

Var abs_v(Tape& t, Var a) {
    Tensor out = map1(t.val(a), [](double x) { return std::fabs(x); });
    Var r = next_var(t);
    return t.make(std::move(out), [a, r](Tape& tp) {
        const Tensor& g = tp.grad(r);
        const Tensor& av = tp.val(a);
        Tensor& ga = tp.grad_mut(a);
        for (int64_t i = 0; i < g.size(); ++i) ga[i] += (av[i] >= 0.0 ? 1.0 : -1.0) * g[i];
    });
}

Var sqrt_v(Tape& t, Var a) {
    Tensor out = map1(t.val(a), [](double x) { return std::sqrt(x); });
    Var r = next_var(t);
    return t.make(std::move(out), [a, r](Tape& tp) {
        const Tensor& g = tp.grad(r);
        const Tensor& y = tp.val(r);
        Tensor& ga = tp.grad_mut(a);
        for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * 0.5 / y[i];
    });
}

Var exp_v(Tape& t, Var a) {
    Tensor out = map1(t.val(a), [](double x) { return std::exp(x); });
    Var r = next_var(t);
    return t.make(std::move(out), [a, r](Tape& tp) {
        const Tensor& g = tp.grad(r);
        const Tensor& y = tp.val(r);
        Tensor& ga = tp.grad_mut(a);
        for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
    });
}

Var log_v(Tape& t, Var a) {
    Tensor out = map1(t.val(a), [](double x) { return std::log(x); });
    Var r = next_var(t);
    return t.make(std::move(out), [a, r](Tape& tp) {
        const Tensor& g = tp.grad(r);
        const Tensor& av = tp.val(a);
        Tensor& ga = tp.grad_mut(a);
        for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] / av[i];
    });
}

Var pow_scalar(Tape& t, Var a, double p) {
    Tensor out = map1(t.val(a), [p](double x) { return std::pow(x, p); });
    Var r = next_var(t);
    return t.make(std::move(out), [a, r, p](Tape& tp) {
        const Tensor& g = tp.grad(r);
        const Tensor& av = tp.val(a);
        Tensor& ga = tp.grad_mut(a);
        for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * p * std::pow(av[i], p - 1.0);
    });
}

// ---------------- reductions ----------------

Var sum(Tape& t, Var a) {
    const Tensor& av = t.val(a);
    double s = 0.0;
    for (int64_t i = 0; i < av.size(); ++i) s += av[i];
    Var r = next_var(t);
    return t.make(Tensor::scalar(s), [a, r](Tape& tp) {
        double g = tp.grad(r)[0];
        Tensor& ga = tp.grad_mut(a);
        for (int64_t i = 0; i < ga.size(); ++i) ga[i] += g;
    });
}

Var mean(Tape& t, Var a) {
    const Tensor& av = t.val(a);
    if (av.size() == 0) throw ShapeError("mean of empty tensor");
    double s = 0.0;
    for (int64_t i = 0; i < av.size(); ++i) s += av[i];
    double inv = 1.0 / static_cast<double>(av.size());
    Var r = next_var(t);
    return t.make(Tensor::scalar(s * inv), [a, r, inv](Tape& tp) {
        double g = tp.grad(r)[0] * inv;
        Tensor& ga = tp.grad_mut(a);
        for (int64_t i = 0; i < ga.size(); ++i) ga[i] += g;
    });
}

Var dot(Tape& t, Var a, Var b) {
    require_same_shape(t.val(a), t.val(b), "dot");
    const Tensor& av = t.val(a);
    const Tensor& bv = t.val(b);
    double s = 0.0;
    for (int64_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
    Var r = next_var(t);
    return t.make(Tensor::scalar(s), [a, b, r](Tape& tp) {
        double g = tp.grad(r)[0];
        const Tensor& av2 = tp.val(a);
        const Tensor& bv2 = tp.val(b);
        Tensor& ga = tp.grad_mut(a);
        Tensor& gb = tp.grad_mut(b);
        for (int64_t i = 0; i < ga.size(); ++i) {
            ga[i] += g * bv2[i];
            gb[i] += g * av2[i];
        }
    });
}

// ---------------- linear algebra ----------------

Var dense(Tape& t, Var x, Var w, Var b) {
    const Tensor& xv = t.val(x);
    const Tensor& wv = t.val(w);
    if (wv.rank() != 2 || xv.rank() != 1 || wv.dim(1) != xv.dim(0))
        throw ShapeError("dense: w " + wv.shape_str() + " x " + xv.shape_str());
    int out_n = wv.dim(0), in_n = wv.dim(1);
    Tensor out({out_n});
    CMapM W(wv.data(), out_n, in_n);
    Eigen::Map<const Eigen::VectorXd> X(xv.data(), in_n);
    Eigen::Map<Eigen::VectorXd> O(out.data(), out_n);
    O = W * X;
    if (b.valid()) {
        const Tensor& bv = t.val(b);
        if (bv.size() != out_n) throw ShapeError("dense: bias size");
        for (int i = 0; i < out_n; ++i) out[i] += bv[i];
    }
    Var r = next_var(t);
    return t.make(std::move(out), [x, w, b, r, out_n, in_n](Tape& tp) {
        const Tensor& g = tp.grad(r);
        const Tensor& xv2 = tp.val(x);
        const Tensor& wv2 = tp.val(w);
        Eigen::Map<const Eigen::VectorXd> G(g.data(), out_n);
        Eigen::Map<const Eigen::VectorXd> X(xv2.data(), in_n);
        CMapM W(wv2.data(), out_n, in_n);
        {
            Tensor& gw = tp.grad_mut(w);
            MapM GW(gw.data(), out_n, in_n);
            GW.noalias() += G * X.transpose();
        }
        {
            Tensor& gx = tp.grad_mut(x);
            Eigen::Map<Eigen::VectorXd> GX(gx.data(), in_n);
            GX.noalias() += W.transpose() * G;
        }
        if (b.valid()) {
            Tensor& gb = tp.grad_mut(b);
            for (int i = 0; i < out_n; ++i) gb[i] += g[i];
        }
    });
}

Var matmul(Tape& t, Var a, Var b) {
    const Tensor& av = t.val(a);
    const Tensor& bv = t.val(b);
    if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0))
        throw ShapeError("matmul: " + av.shape_str() + " x " + bv.shape_str());
    int m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    Tensor out({m, n});
    CMapM A(av.data(), m, k);
    CMapM B(bv.data(), k, n);
    MapM O(out.data(), m, n);
    O.noalias() = A * B;
    Var r = next_var(t);
    return t.make(std::move(out), [a, b, r, m, k, n](Tape& tp) {
        const Tensor& g = tp.grad(r);
        CMapM G(g.data(), m, n);
        CMapM A(tp.val(a).data(), m, k);
        CMapM B(tp.val(b).data(), k, n);
        {
            Tensor& ga = tp.grad_mut(a);
            MapM GA(ga.data(), m, k);
            GA.noalias() += G * B.transpose();
        }
        {
            Tensor& gb = tp.grad_mut(b);
            MapM GB(gb.data(), k, n);
            GB.noalias() += A.transpose() * G;
        }
    });
}

Var transpose(Tape& t, Var a) {
    const Tensor& av = t.val(a);
    if (av.rank() != 2) throw ShapeError("transpose: rank-2 required");
    int m = av.dim(0), n = av.dim(1);
    Tensor out({n, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.at(j, i) = av.at(i, j);
    Var r = next_var(t);
    return t.make(std::move(out), [a, r, m, n](Tape& tp) {
        const Tensor& g = tp.grad(r);
        Tensor& ga = tp.grad_mut(a);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) ga.at(i, j) += g.at(j, i);
    });
}

Var softmax_rows(Tape& t, Var a) {
    const Tensor& av = t.val(a);
    if (av.rank() != 2) throw ShapeError("softmax_rows: rank-2 required");
    int m = av.dim(0), n = av.dim(1);
    Tensor out({m, n});
    for (int i = 0; i < m; ++i) {
        double mx = av.at(i, 0);
        for (int j = 1; j < n; ++j) mx = std::max(mx, av.at(i, j));
        double z = 0.0;
        for (int j = 0; j < n; ++j) {
            double e = std::exp(av.at(i, j) - mx);
            out.at(i, j) = e;
            z += e;
        }
        for (int j = 0; j < n; ++j) out.at(i, j) /= z;
    }
    Var r = next_var(t);
    return t.make(std::move(out), [a, r, m, n](Tape& tp) {
        const Tensor& g = tp.grad(r);
        const Tensor& y = tp.val(r);
        Tensor& ga = tp.grad_mut(a);
        for (int i = 0; i < m; ++i) {
            double dotgy = 0.0;
            for (int j = 0; j < n; ++j) dotgy += g.at(i, j) * y.at(i, j);
            for (int j = 0; j < n; ++j) ga.at(i, j) += y.at(i, j) * (g.at(i, j) - dotgy);
        }
    });
}

// ---------------- shape ----------------

Var reshape(Tape& t, Var a, std::vector<int> dims) {
    const Tensor& av = t.val(a);
    if (Tensor::count(dims) != av.size())
        throw ShapeError("reshape: element count mismatch");
    Tensor out(dims);
    for (int64_t i = 0; i < av.size(); ++i) out[i] = av[i];
    Var r = next_var(t);
    return t.make(std::move(out), [a, r](Tape& tp) {
        const Tensor& g = tp.grad(r);
        Tensor& ga = tp.grad_mut(a);
        for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

Var slice_last(Tape& t, Var a, int from, int count) {
    const Tensor& av = t.val(a);
    if (av.rank() < 1) throw ShapeError("slice_last: rank >= 1 required");
    int last = av.dim(av.rank() - 1);
    if (from < 0 || count <= 0 || from + count > last) throw ShapeError("slice_last: bad range");
    std::vector<int> dims = av.dims();
    dims.back() = count;
    int64_t rows = av.size() / last;
    Tensor out(dims);
    for (int64_t rw = 0; rw < rows; ++rw)
        for (int j = 0; j < count; ++j) out[rw * count + j] = av[rw * last + from + j];
    Var r = next_var(t);
    return t.make(std::move(out), [a, r, from, count, last, rows](Tape& tp) {
        const Tensor& g = tp.grad(r);
        Tensor& ga = tp.grad_mut(a);
        for (int64_t rw = 0; rw < rows; ++rw)
            for (int j = 0; j < count; ++j) ga[rw * last + from + j] += g[rw * count + j];
    });
}

Var concat_last(Tape& t, const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_last: empty");
    const Tensor& first = t.val(parts[0]);
    std::vector<int> lead(first.dims().begin(), first.dims().end() - 1);
    int total = 0;
    std::vector<int> widths;
    for (Var p : parts) {
        const Tensor& pv = t.val(p);
        std::vector<int> plead(pv.dims().begin(), pv.dims().end() - 1);
        if (plead != lead) throw ShapeError("concat_last: leading dims mismatch");
        widths.push_back(pv.dim(pv.rank() - 1));
        total += widths.back();
    }
    std::vector<int> dims = lead;
    dims.push_back(total);
    int64_t rows = Tensor::count(dims) / total;
    Tensor out(dims);
    int off = 0;
    for (size_t pi = 0; pi < parts.size(); ++pi) {
        const Tensor& pv = t.val(parts[pi]);
        int w = widths[pi];
        for (int64_t rw = 0; rw < rows; ++rw)
            for (int j = 0; j < w; ++j) out[rw * total + off + j] = pv[rw * w + j];
        off += w;
    }
    Var r = next_var(t);
    std::vector<Var> ps = parts;
    return t.make(std::move(out), [ps, widths, r, total, rows](Tape& tp) {
        const Tensor& g = tp.grad(r);
        int off2 = 0;
        for (size_t pi = 0; pi < ps.size(); ++pi) {
            Tensor& gp = tp.grad_mut(ps[pi]);
            int w = widths[pi];
            for (int64_t rw = 0; rw < rows; ++rw)
                for (int j = 0; j < w; ++j) gp[rw * w + j] += g[rw * total + off2 + j];
            off2 += w;
        }
    });
}

// ---------------- spatial ----------------

namespace {

struct ConvDims {
    int h, w, cin, kh, kw, cout, oh, ow;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int pad) {
    if (x.rank() != 3 || w.rank() != 4) throw ShapeError("conv2d: x rank-3, w rank-4 required");
    ConvDims d{};
    d.h = x.dim(0);
    d.w = x.dim(1);
    d.cin = x.dim(2);
    d.kh = w.dim(0);
    d.kw = w.dim(1);
    if (w.dim(2) != d.cin) throw ShapeError("conv2d: cin mismatch");
    d.cout = w.dim(3);
    d.oh = (d.h + 2 * pad - d.kh) / stride + 1;
    d.ow = (d.w + 2 * pad - d.kw) / stride + 1;
    if (d.oh <= 0 || d.ow <= 0) throw ShapeError("conv2d: output would be empty");
    return d;
}

// Patch matrix: (oh*ow, kh*kw*cin), zero-filled outside the image.
Tensor im2col(const Tensor& x, const ConvDims& d, int stride, int pad) {
    Tensor m({d.oh * d.ow, d.kh * d.kw * d.cin});
    int64_t idx = 0;
    for (int oy = 0; oy < d.oh; ++oy) {
        for (int ox = 0; ox < d.ow; ++ox) {
            for (int ky = 0; ky < d.kh; ++ky) {
                int y = oy * stride - pad + ky;
                for (int kx = 0; kx < d.kw; ++kx) {
                    int xx = ox * stride - pad + kx;
                    if (y >= 0 && y < d.h && xx >= 0 && xx < d.w) {
                        const double* src = x.data() + (static_cast<int64_t>(y) * d.w + xx) * d.cin;
                        for (int c = 0; c < d.cin; ++c) m[idx++] = src[c];
                    } else {
                        for (int c = 0; c < d.cin; ++c) m[idx++] = 0.0;
                    }
                }
            }
        }
    }
    return m;
}

void col2im_add(Tensor& gx, const Tensor& gm, const ConvDims& d, int stride, int pad) {
    int64_t idx = 0;
    for (int oy = 0; oy < d.oh; ++oy) {
        for (int ox = 0; ox < d.ow; ++ox) {
            for (int ky = 0; ky < d.kh; ++ky) {
                int y = oy * stride - pad + ky;
                for (int kx = 0; kx < d.kw; ++kx) {
                    int xx = ox * stride - pad + kx;
                    if (y >= 0 && y < d.h && xx >= 0 && xx < d.w) {
                        double* dst = gx.data() + (static_cast<int64_t>(y) * d.w + xx) * d.cin;
                        for (int c = 0; c < d.cin; ++c) dst[c] += gm[idx++];
                    } else {
                        idx += d.cin;
                    }
                }
            }
        }
    }
}

}  // namespace

Var conv2d(Tape& t, Var x, Var w, Var b, int stride, int pad) {
    const Tensor& xv = t.val(x);
    const Tensor& wv = t.val(w);
    ConvDims d = conv_dims(xv, wv, stride, pad);
    Tensor cols = im2col(xv, d, stride, pad);
    int64_t rows = static_cast<int64_t>(d.oh) * d.ow;
    int64_t kk = static_cast<int64_t>(d.kh) * d.kw * d.cin;
    Tensor out({d.oh, d.ow, d.cout});
    {
        CMapM M(cols.data(), rows, kk);
        CMapM W(wv.data(), kk, d.cout);
        MapM O(out.data(), rows, d.cout);
        O.noalias() = M * W;
    }
    if (b.valid()) {
        const Tensor& bv = t.val(b);
        if (bv.size() != d.cout) throw ShapeError("conv2d: bias size");
        for (int64_t rw = 0; rw < rows; ++rw)
            for (int c = 0; c < d.cout; ++c) out[rw * d.cout + c] += bv[c];
    }
    Var r = next_var(t);
    // Recompute the patch matrix in backward instead of keeping it alive;
    // trades a little CPU for tape memory.
    return t.make(std::move(out), [x, w, b, r, d, stride, pad, rows, kk](Tape& tp) {
        const Tensor& g = tp.grad(r);
        const Tensor& xv2 = tp.val(x);
        const Tensor& wv2 = tp.val(w);
        Tensor cols2 = im2col(xv2, d, stride, pad);
        CMapM G(g.data(), rows, d.cout);
        {
            Tensor& gw = tp.grad_mut(w);
            CMapM M(cols2.data(), rows, kk);
            MapM GW(gw.data(), kk, d.cout);
            GW.noalias() += M.transpose() * G;
        }
        {
            Tensor gm({static_cast<int>(rows), static_cast<int>(kk)});
            CMapM W(wv2.data(), kk, d.cout);
            MapM GM(gm.data(), rows, kk);
            GM.noalias() = G * W.transpose();
            Tensor& gx = tp.grad_mut(x);
            col2im_add(gx, gm, d, stride, pad);
        }
        if (b.valid()) {
            Tensor& gb = tp.grad_mut(b);
            for (int64_t rw = 0; rw < rows; ++rw)
                for (int c = 0; c < d.cout; ++c) gb[c] += g[rw * d.cout + c];
        }
    });
}

Var upsample2(Tape& t, Var x) {
    const Tensor& xv = t.val(x);
    if (xv.rank() != 3) throw ShapeError("upsample2: rank-3 required");
    int h = xv.dim(0), w = xv.dim(1), c = xv.dim(2);
    Tensor out({h * 2, w * 2, c});
    for (int y = 0; y < 2 * h; ++y)
        for (int xx = 0; xx < 2 * w; ++xx)
            for (int ch = 0; ch < c; ++ch) out.at(y, xx, ch) = xv.at(y / 2, xx / 2, ch);
    Var r = next_var(t);
    return t.make(std::move(out), [x, r, h, w, c](Tape& tp) {
        const Tensor& g = tp.grad(r);
        Tensor& gx = tp.grad_mut(x);
        for (int y = 0; y < 2 * h; ++y)
            for (int xx = 0; xx < 2 * w; ++xx)
                for (int ch = 0; ch < c; ++ch) gx.at(y / 2, xx / 2, ch) += g.at(y, xx, ch);
    });
}

Var avgpool2(Tape& t, Var x) {
    const Tensor& xv = t.val(x);
    if (xv.rank() != 3) throw ShapeError("avgpool2: rank-3 required");
    int h = xv.dim(0), w = xv.dim(1), c = xv.dim(2);
    if (h % 2 || w % 2) throw ShapeError("avgpool2: even spatial dims required");
    Tensor out({h / 2, w / 2, c});
    for (int y = 0; y < h / 2; ++y)
        for (int xx = 0; xx < w / 2; ++xx)
            for (int ch = 0; ch < c; ++ch)
                out.at(y, xx, ch) = 0.25 * (xv.at(2 * y, 2 * xx, ch) + xv.at(2 * y, 2 * xx + 1, ch) +
                                            xv.at(2 * y + 1, 2 * xx, ch) + xv.at(2 * y + 1, 2 * xx + 1, ch));
    Var r = next_var(t);
    return t.make(std::move(out), [x, r, h, w, c](Tape& tp) {
        const Tensor& g = tp.grad(r);
        Tensor& gx = tp.grad_mut(x);
        for (int y = 0; y < h / 2; ++y)
            for (int xx = 0; xx < w / 2; ++xx)
                for (int ch = 0; ch < c; ++ch) {
                    double gv = 0.25 * g.at(y, xx, ch);
                    gx.at(2 * y, 2 * xx, ch) += gv;
                    gx.at(2 * y, 2 * xx + 1, ch) += gv;
                    gx.at(2 * y + 1, 2 * xx, ch) += gv;
                    gx.at(2 * y + 1, 2 * xx + 1, ch) += gv;
                }
    });
}

Var global_avg_pool(Tape& t, Var x) {
    const Tensor& xv = t.val(x);
    if (xv.rank() != 3) throw ShapeError("global_avg_pool: rank-3 required");
    int h = xv.dim(0), w = xv.dim(1), c = xv.dim(2);
    double inv = 1.0 / (static_cast<double>(h) * w);
    Tensor out({c});
    for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
            for (int ch = 0; ch < c; ++ch) out[ch] += xv.at(y, xx, ch) * inv;
    Var r = next_var(t);
    return t.make(std::move(out), [x, r, h, w, c, inv](Tape& tp) {
        const Tensor& g = tp.grad(r);
        Tensor& gx = tp.grad_mut(x);
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx)
                for (int ch = 0; ch < c; ++ch) gx.at(y, xx, ch) += g[ch] * inv;
    });
}

Var broadcast_hw(Tape& t, Var v, int h, int w) {
    const Tensor& vv = t.val(v);
    if (vv.rank() != 1) throw ShapeError("broadcast_hw: rank-1 required");
    int c = vv.dim(0);
    Tensor out({h, w, c});
    for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
            for (int ch = 0; ch < c; ++ch) out.at(y, xx, ch) = vv[ch];
    Var r = next_var(t);
    return t.make(std::move(out), [v, r, h, w, c](Tape& tp) {
        const Tensor& g = tp.grad(r);
        Tensor& gv = tp.grad_mut(v);
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx)
                for (int ch = 0; ch < c; ++ch) gv[ch] += g.at(y, xx, ch);
    });
}

Var broadcast_c(Tape& t, Var m, int c) {
    const Tensor& mv = t.val(m);
    if (mv.rank() != 2) throw ShapeError("broadcast_c: rank-2 required");
    int h = mv.dim(0), w = mv.dim(1);
    Tensor out({h, w, c});
    for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
            for (int ch = 0; ch < c; ++ch) out.at(y, xx, ch) = mv.at(y, xx);
    Var r = next_var(t);
    return t.make(std::move(out), [m, r, h, w, c](Tape& tp) {
        const Tensor& g = tp.grad(r);
        Tensor& gm = tp.grad_mut(m);
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) {
                double s = 0.0;
                for (int ch = 0; ch < c; ++ch) s += g.at(y, xx, ch);
                gm.at(y, xx) += s;
            }
    });
}

Var blur_valid(Tape& t, Var x, const Tensor& kernel) {
    const Tensor& xv = t.val(x);
    if (xv.rank() != 3 || kernel.rank() != 2) throw ShapeError("blur_valid: x rank-3, kernel rank-2");
    int h = xv.dim(0), w = xv.dim(1), c = xv.dim(2);
    int kh = kernel.dim(0), kw = kernel.dim(1);
    int oh = h - kh + 1, ow = w - kw + 1;
    if (oh <= 0 || ow <= 0) throw ShapeError("blur_valid: kernel larger than image");
    Tensor out({oh, ow, c});
    for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox)
            for (int ch = 0; ch < c; ++ch) {
                double s = 0.0;
                for (int ky = 0; ky < kh; ++ky)
                    for (int kx = 0; kx < kw; ++kx) s += kernel.at(ky, kx) * xv.at(oy + ky, ox + kx, ch);
                out.at(oy, ox, ch) = s;
            }
    Var r = next_var(t);
    Tensor k = kernel;
    return t.make(std::move(out), [x, r, k, oh, ow, c](Tape& tp) {
        const Tensor& g = tp.grad(r);
        Tensor& gx = tp.grad_mut(x);
        int kh = k.dim(0), kw = k.dim(1);
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox)
                for (int ch = 0; ch < c; ++ch) {
                    double gv = g.at(oy, ox, ch);
                    for (int ky = 0; ky < kh; ++ky)
                        for (int kx = 0; kx < kw; ++kx) gx.at(oy + ky, ox + kx, ch) += gv * k.at(ky, kx);
                }
    });
}

}  // namespace awr::nn
