#include <cmath>
#include <cstring>

#include "met2net/ops.hpp"
#include "met2net/threading.hpp"

namespace met2net::ops {

namespace {

void check_same_dtype(const char* op, const Tensor& a, const Tensor& b) {
    if (a.dtype() != b.dtype()) {
        throw ShapeError(std::string(op) + ": dtype mismatch " +
                         dtype_name(a.dtype()) + " vs " + dtype_name(b.dtype()));
    }
}

// b broadcasts to a: same rank, every extent equal or 1.
bool broadcastable(const Shape& a, const Shape& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (b[i] != a[i] && b[i] != 1) return false;
    return true;
}

std::vector<std::int64_t> row_major_strides(const Shape& s) {
    std::vector<std::int64_t> st(s.size(), 1);
    for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
    return st;
}

// Maps each flat index of `full` onto a flat index of the broadcast operand.
struct BroadcastIndex {
    std::vector<std::int64_t> full_stride, b_stride;
    explicit BroadcastIndex(const Shape& full, const Shape& b)
        : full_stride(row_major_strides(full)), b_stride(row_major_strides(b)) {
        for (std::size_t i = 0; i < b.size(); ++i)
            if (b[i] == 1) b_stride[i] = 0;
    }
    std::int64_t map(std::int64_t flat) const {
        std::int64_t out = 0;
        for (std::size_t i = 0; i < full_stride.size(); ++i) {
            out += (flat / full_stride[i]) * b_stride[i];
            flat %= full_stride[i];
        }
        return out;
    }
};

// Sums g (shape `full`) over the dimensions where `b` has extent 1.
Tensor reduce_to(const Tensor& g, const Shape& bshape) {
    if (g.shape() == bshape) return g;
    Tensor out = Tensor::zeros(bshape, g.dtype());
    BroadcastIndex bi(g.shape(), bshape);
    dispatch(g.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto src = g.data<T>();
        auto dst = out.data<T>();
        for (std::int64_t i = 0; i < g.numel(); ++i) dst[bi.map(i)] += src[i];
    });
    return out;
}

template <class FwdFn, class BwdFn>
Tensor unary_op(const char* name, const Tensor& x, FwdFn fwd, BwdFn make_dx) {
    Tensor out(x.shape(), x.dtype());
    dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto in = x.data<T>();
        auto o = out.data<T>();
        parallel_for(x.numel(), 1 << 16, [&](std::int64_t lo, std::int64_t hi) {
            for (std::int64_t i = lo; i < hi; ++i) o[i] = fwd(in[i]);
        });
    });
    autodiff::record(out, name, {x}, [x, out, make_dx](const Tensor& g, const autodiff::GradSink& sink) {
        Tensor dx(x.shape(), x.dtype());
        dispatch(x.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto in = x.data<T>();
            auto y = out.data<T>();
            auto gg = g.data<T>();
            auto d = dx.data<T>();
            for (std::int64_t i = 0; i < x.numel(); ++i) d[i] = make_dx(in[i], y[i]) * gg[i];
        });
        sink(0, dx);
    });
    return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_dtype("add", a, b);
    bool same = a.same_shape(b);
    if (!same && !broadcastable(a.shape(), b.shape())) {
        throw ShapeError("add: incompatible shapes " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    Tensor out(a.shape(), a.dtype());
    dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto pa = a.data<T>();
        auto pb = b.data<T>();
        auto po = out.data<T>();
        if (same) {
            parallel_for(a.numel(), 1 << 16, [&](std::int64_t lo, std::int64_t hi) {
                for (std::int64_t i = lo; i < hi; ++i) po[i] = pa[i] + pb[i];
            });
        } else {
            BroadcastIndex bi(a.shape(), b.shape());
            for (std::int64_t i = 0; i < a.numel(); ++i) po[i] = pa[i] + pb[bi.map(i)];
        }
    });
    autodiff::record(out, "add", {a, b}, [a, b](const Tensor& g, const autodiff::GradSink& sink) {
        sink(0, g);
        sink(1, reduce_to(g, b.shape()));
    });
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_dtype("sub", a, b);
    if (!a.same_shape(b)) {
        throw ShapeError("sub: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    Tensor out(a.shape(), a.dtype());
    dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto pa = a.data<T>();
        auto pb = b.data<T>();
        auto po = out.data<T>();
        for (std::int64_t i = 0; i < a.numel(); ++i) po[i] = pa[i] - pb[i];
    });
    autodiff::record(out, "sub", {a, b}, [](const Tensor& g, const autodiff::GradSink& sink) {
        sink(0, g);
        Tensor ng(g.shape(), g.dtype());
        dispatch(g.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto gg = g.data<T>();
            auto pn = ng.data<T>();
            for (std::int64_t i = 0; i < g.numel(); ++i) pn[i] = -gg[i];
        });
        sink(1, ng);
    });
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_dtype("mul", a, b);
    bool same = a.same_shape(b);
    if (!same && !broadcastable(a.shape(), b.shape())) {
        throw ShapeError("mul: incompatible shapes " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    Tensor out(a.shape(), a.dtype());
    dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto pa = a.data<T>();
        auto pb = b.data<T>();
        auto po = out.data<T>();
        if (same) {
            parallel_for(a.numel(), 1 << 16, [&](std::int64_t lo, std::int64_t hi) {
                for (std::int64_t i = lo; i < hi; ++i) po[i] = pa[i] * pb[i];
            });
        } else {
            BroadcastIndex bi(a.shape(), b.shape());
            for (std::int64_t i = 0; i < a.numel(); ++i) po[i] = pa[i] * pb[bi.map(i)];
        }
    });
    autodiff::record(out, "mul", {a, b}, [a, b, same](const Tensor& g, const autodiff::GradSink& sink) {
        dispatch(a.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto pa = a.data<T>();
            auto pb = b.data<T>();
            auto gg = g.data<T>();
            Tensor da(a.shape(), a.dtype());
            Tensor db_full(a.shape(), a.dtype());
            auto pda = da.data<T>();
            auto pdb = db_full.data<T>();
            if (same) {
                for (std::int64_t i = 0; i < a.numel(); ++i) {
                    pda[i] = gg[i] * pb[i];
                    pdb[i] = gg[i] * pa[i];
                }
            } else {
                BroadcastIndex bi(a.shape(), b.shape());
                for (std::int64_t i = 0; i < a.numel(); ++i) {
                    pda[i] = gg[i] * pb[bi.map(i)];
                    pdb[i] = gg[i] * pa[i];
                }
            }
            sink(0, da);
            sink(1, reduce_to(db_full, b.shape()));
        });
    });
    return out;
}

Tensor scale(const Tensor& a, double c) {
    Tensor out(a.shape(), a.dtype());
    dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto pa = a.data<T>();
        auto po = out.data<T>();
        const T k = static_cast<T>(c);
        for (std::int64_t i = 0; i < a.numel(); ++i) po[i] = pa[i] * k;
    });
    autodiff::record(out, "scale", {a}, [c](const Tensor& g, const autodiff::GradSink& sink) {
        sink(0, scale(g.detached(), c));
    });
    return out;
}

Tensor silu(const Tensor& x) {
    return unary_op(
        "silu", x,
        [](auto v) {
            using T = decltype(v);
            return static_cast<T>(v / (T(1) + std::exp(-v)));
        },
        [](auto v, auto) {
            using T = decltype(v);
            T s = T(1) / (T(1) + std::exp(-v));
            return s * (T(1) + v * (T(1) - s));
        });
}

Tensor leaky_relu(const Tensor& x, double negative_slope) {
    return unary_op(
        "leaky_relu", x,
        [negative_slope](auto v) {
            using T = decltype(v);
            return v > T(0) ? v : static_cast<T>(negative_slope) * v;
        },
        [negative_slope](auto v, auto) {
            using T = decltype(v);
            return v > T(0) ? T(1) : static_cast<T>(negative_slope);
        });
}

Tensor sigmoid(const Tensor& x) {
    return unary_op(
        "sigmoid", x,
        [](auto v) {
            using T = decltype(v);
            return T(1) / (T(1) + std::exp(-v));
        },
        [](auto, auto y) {
            using T = decltype(y);
            return y * (T(1) - y);
        });
}

Tensor mean(const Tensor& x) {
    double acc = 0.0;
    dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto p = x.data<T>();
        for (std::int64_t i = 0; i < x.numel(); ++i) acc += static_cast<double>(p[i]);
    });
    Tensor out = Tensor::scalar(acc / static_cast<double>(x.numel()), x.dtype());
    autodiff::record(out, "mean", {x}, [x](const Tensor& g, const autodiff::GradSink& sink) {
        sink(0, Tensor::full(x.shape(), g.item() / static_cast<double>(x.numel()), x.dtype()));
    });
    return out;
}

Tensor mse(const Tensor& a, const Tensor& b) {
    check_same_dtype("mse", a, b);
    if (!a.same_shape(b)) {
        throw ShapeError("mse: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    double acc = 0.0;
    dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto pa = a.data<T>();
        auto pb = b.data<T>();
        for (std::int64_t i = 0; i < a.numel(); ++i) {
            double d = static_cast<double>(pa[i]) - static_cast<double>(pb[i]);
            acc += d * d;
        }
    });
    const std::int64_t n = a.numel();
    Tensor out = Tensor::scalar(acc / static_cast<double>(n), a.dtype());
    autodiff::record(out, "mse", {a, b}, [a, b, n](const Tensor& g, const autodiff::GradSink& sink) {
        dispatch(a.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto pa = a.data<T>();
            auto pb = b.data<T>();
            const T k = static_cast<T>(2.0 * g.item() / static_cast<double>(n));
            Tensor da(a.shape(), a.dtype());
            Tensor db(a.shape(), a.dtype());
            auto pda = da.data<T>();
            auto pdb = db.data<T>();
            for (std::int64_t i = 0; i < n; ++i) {
                T d = k * (pa[i] - pb[i]);
                pda[i] = d;
                pdb[i] = -d;
            }
            sink(0, da);
            sink(1, db);
        });
    });
    return out;
}

Tensor softmax(const Tensor& x, int axis) {
    if (axis < 0) axis += x.ndim();
    if (axis < 0 || axis >= x.ndim()) {
        throw ShapeError("softmax: axis out of range for shape " + shape_str(x.shape()));
    }
    const std::int64_t n = x.dim(axis);
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= x.dim(i);
    for (int i = axis + 1; i < x.ndim(); ++i) inner *= x.dim(i);

    Tensor out(x.shape(), x.dtype());
    dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto in = x.data<T>();
        auto o = out.data<T>();
        for (std::int64_t ou = 0; ou < outer; ++ou) {
            for (std::int64_t in_i = 0; in_i < inner; ++in_i) {
                const std::int64_t base = ou * n * inner + in_i;
                T mx = in[base];
                for (std::int64_t j = 1; j < n; ++j) mx = std::max(mx, in[base + j * inner]);
                double sum = 0.0;
                for (std::int64_t j = 0; j < n; ++j) {
                    T e = std::exp(in[base + j * inner] - mx);
                    o[base + j * inner] = e;
                    sum += static_cast<double>(e);
                }
                const T inv = static_cast<T>(1.0 / sum);
                for (std::int64_t j = 0; j < n; ++j) o[base + j * inner] *= inv;
            }
        }
    });
    autodiff::record(out, "softmax", {x},
                     [out, n, outer, inner](const Tensor& g, const autodiff::GradSink& sink) {
        Tensor dx(out.shape(), out.dtype());
        dispatch(out.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto y = out.data<T>();
            auto gg = g.data<T>();
            auto d = dx.data<T>();
            for (std::int64_t ou = 0; ou < outer; ++ou) {
                for (std::int64_t in_i = 0; in_i < inner; ++in_i) {
                    const std::int64_t base = ou * n * inner + in_i;
                    double dot = 0.0;
                    for (std::int64_t j = 0; j < n; ++j)
                        dot += static_cast<double>(gg[base + j * inner]) * y[base + j * inner];
                    for (std::int64_t j = 0; j < n; ++j) {
                        const std::int64_t k = base + j * inner;
                        d[k] = y[k] * (gg[k] - static_cast<T>(dot));
                    }
                }
            }
        });
        sink(0, dx);
    });
    return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(shape));
    }
    Tensor res(shape, x.dtype());
    dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        std::memcpy(res.data<T>().data(), x.data<T>().data(), sizeof(T) * x.numel());
    });
    autodiff::record(res, "reshape", {x}, [x](const Tensor& g, const autodiff::GradSink& sink) {
        sink(0, reshape(g.detached(), x.shape()));
    });
    return res;
}

Tensor permute(const Tensor& x, const std::vector<int>& perm) {
    if (static_cast<int>(perm.size()) != x.ndim()) {
        throw ShapeError("permute: " + std::to_string(perm.size()) + " axes for rank " +
                         std::to_string(x.ndim()));
    }
    std::vector<bool> used(perm.size(), false);
    Shape out_shape(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) {
        int p = perm[i];
        if (p < 0 || p >= x.ndim() || used[p]) throw ShapeError("permute: invalid axis list");
        used[p] = true;
        out_shape[i] = x.dim(p);
    }
    Tensor out(out_shape, x.dtype());
    auto in_strides = row_major_strides(x.shape());
    auto out_strides = row_major_strides(out_shape);
    dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto src = x.data<T>();
        auto dst = out.data<T>();
        std::vector<std::int64_t> idx(perm.size());
        for (std::int64_t o = 0; o < out.numel(); ++o) {
            std::int64_t rem = o, src_off = 0;
            for (std::size_t i = 0; i < perm.size(); ++i) {
                idx[i] = rem / out_strides[i];
                rem %= out_strides[i];
                src_off += idx[i] * in_strides[perm[i]];
            }
            dst[o] = src[src_off];
        }
    });
    autodiff::record(out, "permute", {x}, [x, perm](const Tensor& g, const autodiff::GradSink& sink) {
        std::vector<int> inv(perm.size());
        for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = static_cast<int>(i);
        sink(0, permute(g.detached(), inv));
    });
    return out;
}

Tensor concat(const std::vector<Tensor>& xs, int axis) {
    if (xs.empty()) throw ShapeError("concat: empty input list");
    const Tensor& first = xs.front();
    if (axis < 0) axis += first.ndim();
    if (axis < 0 || axis >= first.ndim()) throw ShapeError("concat: axis out of range");
    Shape out_shape = first.shape();
    std::int64_t total = 0;
    for (const auto& t : xs) {
        if (t.ndim() != first.ndim() || t.dtype() != first.dtype())
            throw ShapeError("concat: rank/dtype mismatch");
        for (int i = 0; i < first.ndim(); ++i) {
            if (i != axis && t.dim(i) != first.dim(i)) {
                throw ShapeError("concat: extent mismatch on axis " + std::to_string(i) +
                                 ": " + shape_str(t.shape()) + " vs " + shape_str(first.shape()));
            }
        }
        total += t.dim(axis);
    }
    out_shape[axis] = total;

    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= first.dim(i);
    for (int i = axis + 1; i < first.ndim(); ++i) inner *= first.dim(i);

    Tensor out(out_shape, first.dtype());
    dispatch(first.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto dst = out.data<T>();
        std::int64_t off = 0;
        for (const auto& t : xs) {
            auto src = t.data<T>();
            const std::int64_t rows = t.dim(axis) * inner;
            for (std::int64_t ou = 0; ou < outer; ++ou) {
                std::memcpy(dst.data() + ou * total * inner + off, src.data() + ou * rows,
                            sizeof(T) * rows);
            }
            off += rows;
        }
    });
    autodiff::record(out, "concat", xs, [xs, axis](const Tensor& g, const autodiff::GradSink& sink) {
        std::int64_t off = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            sink(i, slice(g.detached(), axis, off, xs[i].dim(axis)));
            off += xs[i].dim(axis);
        }
    });
    return out;
}

Tensor slice(const Tensor& x, int axis, std::int64_t start, std::int64_t length) {
    if (axis < 0) axis += x.ndim();
    if (axis < 0 || axis >= x.ndim()) throw ShapeError("slice: axis out of range");
    if (start < 0 || length < 1 || start + length > x.dim(axis)) {
        throw ShapeError("slice: range [" + std::to_string(start) + "," +
                         std::to_string(start + length) + ") out of bounds for axis " +
                         std::to_string(axis) + " of " + shape_str(x.shape()));
    }
    Shape out_shape = x.shape();
    out_shape[axis] = length;
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= x.dim(i);
    for (int i = axis + 1; i < x.ndim(); ++i) inner *= x.dim(i);
    const std::int64_t n_axis = x.dim(axis);

    Tensor out(out_shape, x.dtype());
    dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto src = x.data<T>();
        auto dst = out.data<T>();
        for (std::int64_t ou = 0; ou < outer; ++ou) {
            std::memcpy(dst.data() + ou * length * inner,
                        src.data() + (ou * n_axis + start) * inner, sizeof(T) * length * inner);
        }
    });
    autodiff::record(out, "slice", {x},
                     [x, axis, start, length, outer, inner, n_axis](const Tensor& g,
                                                                    const autodiff::GradSink& sink) {
        Tensor dx = Tensor::zeros(x.shape(), x.dtype());
        dispatch(x.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto gg = g.data<T>();
            auto d = dx.data<T>();
            for (std::int64_t ou = 0; ou < outer; ++ou) {
                std::memcpy(d.data() + (ou * n_axis + start) * inner,
                            gg.data() + ou * length * inner, sizeof(T) * length * inner);
            }
        });
        sink(0, dx);
    });
    return out;
}

Tensor stack(const std::vector<Tensor>& xs, int axis) {
    if (xs.empty()) throw ShapeError("stack: empty input list");
    const Tensor& first = xs.front();
    int out_rank = first.ndim() + 1;
    if (axis < 0) axis += out_rank;
    if (axis < 0 || axis >= out_rank) throw ShapeError("stack: axis out of range");
    std::vector<Tensor> expanded;
    expanded.reserve(xs.size());
    Shape unit = first.shape();
    unit.insert(unit.begin() + axis, 1);
    for (const auto& t : xs) {
        if (!t.same_shape(first)) {
            throw ShapeError("stack: shape mismatch " + shape_str(t.shape()) + " vs " +
                             shape_str(first.shape()));
        }
        expanded.push_back(reshape(t, unit));
    }
    return concat(expanded, axis);
}

Tensor global_avg_pool(const Tensor& x) {
    if (x.ndim() != 4) throw ShapeError("global_avg_pool: expected [B,C,H,W], got " + shape_str(x.shape()));
    const std::int64_t b = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    Tensor out({b, c, 1, 1}, x.dtype());
    dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto src = x.data<T>();
        auto dst = out.data<T>();
        for (std::int64_t i = 0; i < b * c; ++i) {
            double acc = 0.0;
            for (std::int64_t j = 0; j < hw; ++j) acc += static_cast<double>(src[i * hw + j]);
            dst[i] = static_cast<T>(acc / static_cast<double>(hw));
        }
    });
    autodiff::record(out, "global_avg_pool", {x},
                     [x, b, c, hw](const Tensor& g, const autodiff::GradSink& sink) {
        Tensor dx(x.shape(), x.dtype());
        dispatch(x.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto gg = g.data<T>();
            auto d = dx.data<T>();
            const T inv = static_cast<T>(1.0 / static_cast<double>(hw));
            for (std::int64_t i = 0; i < b * c; ++i) {
                const T v = gg[i] * inv;
                for (std::int64_t j = 0; j < hw; ++j) d[i * hw + j] = v;
            }
        });
        sink(0, dx);
    });
    return out;
}

}  // namespace met2net::ops
