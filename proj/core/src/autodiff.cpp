#include "sumix/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

namespace sumix::ad {

namespace {

std::atomic<std::uint64_t> g_seq{1};
thread_local int g_no_grad_depth = 0;

std::shared_ptr<Node> make_node(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->seq = g_seq.fetch_add(1, std::memory_order_relaxed);
    return n;
}

// Attach parents and a backprop only when grad mode is on and some parent
// participates in differentiation.
Value finish(std::shared_ptr<Node> n, std::vector<std::shared_ptr<Node>> parents,
             std::function<void(Node&)> backprop) {
    if (grad_enabled()) {
        bool needs = false;
        for (const auto& p : parents)
            if (p->requires_grad) { needs = true; break; }
        if (needs) {
            n->requires_grad = true;
            n->parents = std::move(parents);
            n->backprop = std::move(backprop);
        }
    }
    return Value::wrap(std::move(n));
}

}  // namespace

Tensor& Node::ensure_grad() {
    if (grad.empty() && value.size() > 0) grad = Tensor(value.shape());
    return grad;
}

Value Value::leaf(Tensor v, bool requires_grad) {
    // Grad mode gates op recording, not leaf creation: parameters built
    // inside a NoGradGuard must still be trainable afterwards.
    auto n = make_node(std::move(v));
    n->requires_grad = requires_grad;
    return wrap(std::move(n));
}

Value Value::wrap(std::shared_ptr<Node> n) {
    Value v;
    v.node_ = std::move(n);
    return v;
}

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }
bool grad_enabled() { return g_no_grad_depth == 0; }

Value add(const Value& a, const Value& b) {
    check_same_shape(a.val(), b.val(), "add");
    Tensor out(a.val().shape());
    const double* pa = a.val().data();
    const double* pb = b.val().data();
    double* po = out.data();
    for (long i = 0; i < out.size(); ++i) po[i] = pa[i] + pb[i];
    return finish(make_node(std::move(out)), {a.node(), b.node()}, [](Node& self) {
        for (int k = 0; k < 2; ++k) {
            Node& p = *self.parents[k];
            if (!p.requires_grad) continue;
            Tensor& g = p.ensure_grad();
            for (long i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

Value sub(const Value& a, const Value& b) {
    check_same_shape(a.val(), b.val(), "sub");
    Tensor out(a.val().shape());
    for (long i = 0; i < out.size(); ++i) out[i] = a.val()[i] - b.val()[i];
    return finish(make_node(std::move(out)), {a.node(), b.node()}, [](Node& self) {
        if (self.parents[0]->requires_grad) {
            Tensor& g = self.parents[0]->ensure_grad();
            for (long i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (self.parents[1]->requires_grad) {
            Tensor& g = self.parents[1]->ensure_grad();
            for (long i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
        }
    });
}

Value mul(const Value& a, const Value& b) {
    check_same_shape(a.val(), b.val(), "mul");
    Tensor out(a.val().shape());
    for (long i = 0; i < out.size(); ++i) out[i] = a.val()[i] * b.val()[i];
    return finish(make_node(std::move(out)), {a.node(), b.node()}, [](Node& self) {
        const Tensor& va = self.parents[0]->value;
        const Tensor& vb = self.parents[1]->value;
        if (self.parents[0]->requires_grad) {
            Tensor& g = self.parents[0]->ensure_grad();
            for (long i = 0; i < g.size(); ++i) g[i] += self.grad[i] * vb[i];
        }
        if (self.parents[1]->requires_grad) {
            Tensor& g = self.parents[1]->ensure_grad();
            for (long i = 0; i < g.size(); ++i) g[i] += self.grad[i] * va[i];
        }
    });
}

Value scale(const Value& a, double s) {
    Tensor out(a.val().shape());
    for (long i = 0; i < out.size(); ++i) out[i] = a.val()[i] * s;
    return finish(make_node(std::move(out)), {a.node()}, [s](Node& self) {
        Tensor& g = self.parents[0]->ensure_grad();
        for (long i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s;
    });
}

Value neg(const Value& a) { return scale(a, -1.0); }

Value exp(const Value& a) {
    Tensor out(a.val().shape());
    for (long i = 0; i < out.size(); ++i) out[i] = std::exp(a.val()[i]);
    return finish(make_node(std::move(out)), {a.node()}, [](Node& self) {
        Tensor& g = self.parents[0]->ensure_grad();
        for (long i = 0; i < g.size(); ++i) g[i] += self.grad[i] * self.value[i];
    });
}

Value relu(const Value& a) {
    Tensor out(a.val().shape());
    for (long i = 0; i < out.size(); ++i) out[i] = a.val()[i] > 0.0 ? a.val()[i] : 0.0;
    return finish(make_node(std::move(out)), {a.node()}, [](Node& self) {
        const Tensor& x = self.parents[0]->value;
        Tensor& g = self.parents[0]->ensure_grad();
        for (long i = 0; i < g.size(); ++i)
            if (x[i] > 0.0) g[i] += self.grad[i];
    });
}

Value reshape(const Value& a, std::vector<long> shape) {
    Tensor out = a.val().reshaped(std::move(shape));
    return finish(make_node(std::move(out)), {a.node()}, [](Node& self) {
        Tensor& g = self.parents[0]->ensure_grad();
        for (long i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

Value affine(const Value& x, const Value& w, const Value& b) {
    const Tensor& xv = x.val();
    const Tensor& wv = w.val();
    const Tensor& bv = b.val();
    if (xv.rank() != 2 || wv.rank() != 2 || bv.rank() != 1)
        throw ShapeError("affine expects x(N,I), w(O,I), b(O)");
    if (xv.dim(1) != wv.dim(1) || wv.dim(0) != bv.dim(0))
        throw ShapeError("affine dimension mismatch " + xv.shape_str() + " x " + wv.shape_str());
    Tensor out = matmul(xv, wv, false, true);  // (N,O)
    const long n = out.dim(0), o = out.dim(1);
    for (long i = 0; i < n; ++i)
        for (long j = 0; j < o; ++j) out.at(i, j) += bv[j];
    return finish(make_node(std::move(out)), {x.node(), w.node(), b.node()}, [](Node& self) {
        const Tensor& xv = self.parents[0]->value;
        const Tensor& wv = self.parents[1]->value;
        const Tensor& dy = self.grad;
        if (self.parents[0]->requires_grad)
            matmul_acc(dy, wv, self.parents[0]->ensure_grad());  // (N,O)x(O,I)
        if (self.parents[1]->requires_grad)
            matmul_acc(dy, xv, self.parents[1]->ensure_grad(), /*trans_a=*/true);  // (O,N)x(N,I)
        if (self.parents[2]->requires_grad) {
            Tensor& db = self.parents[2]->ensure_grad();
            const long n = dy.dim(0), o = dy.dim(1);
            for (long i = 0; i < n; ++i)
                for (long j = 0; j < o; ++j) db[j] += dy.at(i, j);
        }
    });
}

Value softmax_rows(const Value& x) {
    const Tensor& xv = x.val();
    if (xv.rank() != 2) throw ShapeError("softmax_rows expects (N,D)");
    const long n = xv.dim(0), d = xv.dim(1);
    Tensor out({n, d});
    for (long i = 0; i < n; ++i) {
        double m = xv.at(i, 0);
        for (long j = 1; j < d; ++j) m = std::max(m, xv.at(i, j));
        double z = 0.0;
        for (long j = 0; j < d; ++j) {
            double e = std::exp(xv.at(i, j) - m);
            out.at(i, j) = e;
            z += e;
        }
        for (long j = 0; j < d; ++j) out.at(i, j) /= z;
    }
    return finish(make_node(std::move(out)), {x.node()}, [](Node& self) {
        const Tensor& s = self.value;
        const Tensor& dy = self.grad;
        Tensor& dx = self.parents[0]->ensure_grad();
        const long n = s.dim(0), d = s.dim(1);
        for (long i = 0; i < n; ++i) {
            double dot = 0.0;
            for (long j = 0; j < d; ++j) dot += dy.at(i, j) * s.at(i, j);
            for (long j = 0; j < d; ++j) dx.at(i, j) += s.at(i, j) * (dy.at(i, j) - dot);
        }
    });
}

Value l2_norm_rows(const Value& x) {
    const Tensor& xv = x.val();
    if (xv.rank() != 2) throw ShapeError("l2_norm_rows expects (N,D)");
    const long n = xv.dim(0), d = xv.dim(1);
    Tensor out({n});
    for (long i = 0; i < n; ++i) {
        double s = 0.0;
        for (long j = 0; j < d; ++j) s += xv.at(i, j) * xv.at(i, j);
        out[i] = std::sqrt(s);
    }
    return finish(make_node(std::move(out)), {x.node()}, [](Node& self) {
        const Tensor& xv = self.parents[0]->value;
        Tensor& dx = self.parents[0]->ensure_grad();
        const long n = xv.dim(0), d = xv.dim(1);
        for (long i = 0; i < n; ++i) {
            double y = self.value[i];
            if (y <= 1e-300) continue;
            double c = self.grad[i] / y;
            for (long j = 0; j < d; ++j) dx.at(i, j) += c * xv.at(i, j);
        }
    });
}

Value mul_rows(const Value& x, const Value& s) {
    const Tensor& xv = x.val();
    const Tensor& sv = s.val();
    if (xv.rank() != 2 || sv.rank() != 1 || sv.dim(0) != xv.dim(0))
        throw ShapeError("mul_rows expects (N,K) and (N,)");
    const long n = xv.dim(0), k = xv.dim(1);
    Tensor out({n, k});
    for (long i = 0; i < n; ++i)
        for (long j = 0; j < k; ++j) out.at(i, j) = xv.at(i, j) * sv[i];
    return finish(make_node(std::move(out)), {x.node(), s.node()}, [](Node& self) {
        const Tensor& xv = self.parents[0]->value;
        const Tensor& sv = self.parents[1]->value;
        const Tensor& dy = self.grad;
        const long n = xv.dim(0), k = xv.dim(1);
        if (self.parents[0]->requires_grad) {
            Tensor& dx = self.parents[0]->ensure_grad();
            for (long i = 0; i < n; ++i)
                for (long j = 0; j < k; ++j) dx.at(i, j) += dy.at(i, j) * sv[i];
        }
        if (self.parents[1]->requires_grad) {
            Tensor& ds = self.parents[1]->ensure_grad();
            for (long i = 0; i < n; ++i) {
                double acc = 0.0;
                for (long j = 0; j < k; ++j) acc += dy.at(i, j) * xv.at(i, j);
                ds[i] += acc;
            }
        }
    });
}

Value ce_rows(const Value& logits, const std::vector<int>& labels) {
    const Tensor& lv = logits.val();
    if (lv.rank() != 2) throw ShapeError("ce_rows expects (N,K)");
    const long n = lv.dim(0), k = lv.dim(1);
    if (static_cast<long>(labels.size()) != n) throw ShapeError("ce_rows label count mismatch");
    for (int y : labels)
        if (y < 0 || y >= k) throw InvalidParameter("ce_rows: label out of range");
    Tensor out({n});
    for (long i = 0; i < n; ++i) {
        double m = lv.at(i, 0);
        for (long j = 1; j < k; ++j) m = std::max(m, lv.at(i, j));
        double z = 0.0;
        for (long j = 0; j < k; ++j) z += std::exp(lv.at(i, j) - m);
        out[i] = std::log(z) + m - lv.at(i, labels[static_cast<std::size_t>(i)]);
    }
    return finish(make_node(std::move(out)), {logits.node()}, [labels](Node& self) {
        const Tensor& lv = self.parents[0]->value;
        Tensor& dl = self.parents[0]->ensure_grad();
        const long n = lv.dim(0), k = lv.dim(1);
        for (long i = 0; i < n; ++i) {
            double m = lv.at(i, 0);
            for (long j = 1; j < k; ++j) m = std::max(m, lv.at(i, j));
            double z = 0.0;
            for (long j = 0; j < k; ++j) z += std::exp(lv.at(i, j) - m);
            double g = self.grad[i];
            for (long j = 0; j < k; ++j) {
                double p = std::exp(lv.at(i, j) - m) / z;
                dl.at(i, j) += g * (p - (j == labels[static_cast<std::size_t>(i)] ? 1.0 : 0.0));
            }
        }
    });
}

Value sum_all(const Value& x) {
    Tensor out({}, {x.val().sum()});
    return finish(make_node(std::move(out)), {x.node()}, [](Node& self) {
        Tensor& g = self.parents[0]->ensure_grad();
        const double d = self.grad[0];
        for (long i = 0; i < g.size(); ++i) g[i] += d;
    });
}

Value mean_all(const Value& x) {
    const double inv = 1.0 / static_cast<double>(x.val().size());
    Tensor out({}, {x.val().sum() * inv});
    return finish(make_node(std::move(out)), {x.node()}, [inv](Node& self) {
        Tensor& g = self.parents[0]->ensure_grad();
        const double d = self.grad[0] * inv;
        for (long i = 0; i < g.size(); ++i) g[i] += d;
    });
}

namespace {

struct ConvDims {
    long n, c, h, w, o, oh, ow;
    int stride;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride) {
    if (x.rank() != 4 || w.rank() != 4 || w.dim(2) != 3 || w.dim(3) != 3)
        throw ShapeError("conv2d expects x(N,C,H,W), w(O,C,3,3)");
    if (x.dim(1) != w.dim(1)) throw ShapeError("conv2d channel mismatch");
    if (stride != 1 && stride != 2) throw InvalidParameter("conv2d stride must be 1 or 2");
    ConvDims d{};
    d.n = x.dim(0); d.c = x.dim(1); d.h = x.dim(2); d.w = x.dim(3);
    d.o = w.dim(0);
    d.oh = (d.h - 1) / stride + 1;
    d.ow = (d.w - 1) / stride + 1;
    d.stride = stride;
    return d;
}

// col (C*9, N*OH*OW); kernel offsets ky,kx in [-1,1].
Tensor im2col(const Tensor& x, const ConvDims& d) {
    const long cols = d.n * d.oh * d.ow;
    Tensor col({d.c * 9, cols});
    for (long c = 0; c < d.c; ++c) {
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                double* row = col.data() + ((c * 3 + ky) * 3 + kx) * cols;
                for (long n = 0; n < d.n; ++n) {
                    const double* img = x.data() + (n * d.c + c) * d.h * d.w;
                    for (long oy = 0; oy < d.oh; ++oy) {
                        long iy = oy * d.stride + ky - 1;
                        double* dst = row + (n * d.oh + oy) * d.ow;
                        if (iy < 0 || iy >= d.h) {
                            std::fill(dst, dst + d.ow, 0.0);
                            continue;
                        }
                        const double* src = img + iy * d.w;
                        for (long ox = 0; ox < d.ow; ++ox) {
                            long ix = ox * d.stride + kx - 1;
                            dst[ox] = (ix >= 0 && ix < d.w) ? src[ix] : 0.0;
                        }
                    }
                }
            }
        }
    }
    return col;
}

void col2im_acc(const Tensor& dcol, const ConvDims& d, Tensor& dx) {
    const long cols = d.n * d.oh * d.ow;
    for (long c = 0; c < d.c; ++c) {
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const double* row = dcol.data() + ((c * 3 + ky) * 3 + kx) * cols;
                for (long n = 0; n < d.n; ++n) {
                    double* img = dx.data() + (n * d.c + c) * d.h * d.w;
                    for (long oy = 0; oy < d.oh; ++oy) {
                        long iy = oy * d.stride + ky - 1;
                        if (iy < 0 || iy >= d.h) continue;
                        const double* src = row + (n * d.oh + oy) * d.ow;
                        double* dst = img + iy * d.w;
                        for (long ox = 0; ox < d.ow; ++ox) {
                            long ix = ox * d.stride + kx - 1;
                            if (ix >= 0 && ix < d.w) dst[ix] += src[ox];
                        }
                    }
                }
            }
        }
    }
}

}  // namespace

Value conv2d(const Value& x, const Value& w, const Value& b, int stride) {
    const Tensor& xv = x.val();
    const Tensor& wv = w.val();
    const Tensor& bv = b.val();
    ConvDims d = conv_dims(xv, wv, stride);
    if (bv.rank() != 1 || bv.dim(0) != d.o) throw ShapeError("conv2d bias shape");

    Tensor col = im2col(xv, d);
    Tensor wmat = wv.reshaped({d.o, d.c * 9});
    Tensor y = matmul(wmat, col);  // (O, N*OH*OW)

    Tensor out({d.n, d.o, d.oh, d.ow});
    const long plane = d.oh * d.ow;
    for (long o = 0; o < d.o; ++o) {
        const double* src = y.data() + o * d.n * plane;
        const double bias = bv[o];
        for (long n = 0; n < d.n; ++n) {
            double* dst = out.data() + (n * d.o + o) * plane;
            const double* s = src + n * plane;
            for (long i = 0; i < plane; ++i) dst[i] = s[i] + bias;
        }
    }

    auto col_cache = std::make_shared<Tensor>(std::move(col));
    return finish(make_node(std::move(out)), {x.node(), w.node(), b.node()},
                  [d, col_cache](Node& self) {
        const long plane = d.oh * d.ow;
        // regroup dout (N,O,OH,OW) -> dY (O, N*OH*OW)
        Tensor dy({d.o, d.n * plane});
        for (long o = 0; o < d.o; ++o) {
            double* dst = dy.data() + o * d.n * plane;
            for (long n = 0; n < d.n; ++n) {
                const double* src = self.grad.data() + (n * d.o + o) * plane;
                std::copy(src, src + plane, dst + n * plane);
            }
        }
        if (self.parents[1]->requires_grad) {
            Tensor& dw = self.parents[1]->ensure_grad();
            Tensor dwmat = dw.reshaped({d.o, d.c * 9});
            matmul_acc(dy, *col_cache, dwmat, false, /*trans_b=*/true);
            dw = dwmat.reshaped({d.o, d.c, 3, 3});
        }
        if (self.parents[2]->requires_grad) {
            Tensor& db = self.parents[2]->ensure_grad();
            for (long o = 0; o < d.o; ++o) {
                const double* row = dy.data() + o * d.n * plane;
                double acc = 0.0;
                for (long i = 0; i < d.n * plane; ++i) acc += row[i];
                db[o] += acc;
            }
        }
        if (self.parents[0]->requires_grad) {
            const Tensor& wv = self.parents[1]->value;
            Tensor wmat = wv.reshaped({d.o, d.c * 9});
            Tensor dcol = matmul(wmat, dy, /*trans_a=*/true);  // (C*9, N*OH*OW)
            col2im_acc(dcol, d, self.parents[0]->ensure_grad());
        }
    });
}

Value global_avg_pool(const Value& x) {
    const Tensor& xv = x.val();
    if (xv.rank() != 4) throw ShapeError("global_avg_pool expects (N,C,H,W)");
    const long n = xv.dim(0), c = xv.dim(1), plane = xv.dim(2) * xv.dim(3);
    Tensor out({n, c});
    for (long i = 0; i < n; ++i)
        for (long j = 0; j < c; ++j) {
            const double* p = xv.data() + (i * c + j) * plane;
            double acc = 0.0;
            for (long t = 0; t < plane; ++t) acc += p[t];
            out.at(i, j) = acc / static_cast<double>(plane);
        }
    return finish(make_node(std::move(out)), {x.node()}, [](Node& self) {
        const Tensor& xv = self.parents[0]->value;
        Tensor& dx = self.parents[0]->ensure_grad();
        const long n = xv.dim(0), c = xv.dim(1), plane = xv.dim(2) * xv.dim(3);
        const double inv = 1.0 / static_cast<double>(plane);
        for (long i = 0; i < n; ++i)
            for (long j = 0; j < c; ++j) {
                double g = self.grad.at(i, j) * inv;
                double* p = dx.data() + (i * c + j) * plane;
                for (long t = 0; t < plane; ++t) p[t] += g;
            }
    });
}

Value batchnorm(const Value& x, const Value& gamma, const Value& beta, Tensor& running_mean,
                Tensor& running_var, BnMode mode, double eps, double momentum) {
    const Tensor& xv = x.val();
    if (xv.rank() != 4) throw ShapeError("batchnorm expects (N,C,H,W)");
    const long n = xv.dim(0), c = xv.dim(1), plane = xv.dim(2) * xv.dim(3);
    const long m = n * plane;
    const Tensor& gv = gamma.val();
    const Tensor& bv = beta.val();
    if (gv.size() != c || bv.size() != c || running_mean.size() != c || running_var.size() != c)
        throw ShapeError("batchnorm parameter size mismatch");

    Tensor mean({c}), var({c});
    if (mode == BnMode::eval) {
        mean = running_mean;
        var = running_var;
    } else {
        for (long j = 0; j < c; ++j) {
            double acc = 0.0;
            for (long i = 0; i < n; ++i) {
                const double* p = xv.data() + (i * c + j) * plane;
                for (long t = 0; t < plane; ++t) acc += p[t];
            }
            mean[j] = acc / static_cast<double>(m);
        }
        for (long j = 0; j < c; ++j) {
            double acc = 0.0;
            for (long i = 0; i < n; ++i) {
                const double* p = xv.data() + (i * c + j) * plane;
                for (long t = 0; t < plane; ++t) {
                    double dvt = p[t] - mean[j];
                    acc += dvt * dvt;
                }
            }
            var[j] = acc / static_cast<double>(m);
        }
        if (mode == BnMode::train) {
            const double unbias = m > 1 ? static_cast<double>(m) / static_cast<double>(m - 1) : 1.0;
            for (long j = 0; j < c; ++j) {
                running_mean[j] = (1.0 - momentum) * running_mean[j] + momentum * mean[j];
                running_var[j] = (1.0 - momentum) * running_var[j] + momentum * var[j] * unbias;
            }
        }
    }

    Tensor inv_std({c});
    for (long j = 0; j < c; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + eps);

    Tensor xhat(xv.shape());
    Tensor out(xv.shape());
    for (long i = 0; i < n; ++i)
        for (long j = 0; j < c; ++j) {
            const double* p = xv.data() + (i * c + j) * plane;
            double* ph = xhat.data() + (i * c + j) * plane;
            double* po = out.data() + (i * c + j) * plane;
            const double mu = mean[j], is = inv_std[j], g = gv[j], bb = bv[j];
            for (long t = 0; t < plane; ++t) {
                ph[t] = (p[t] - mu) * is;
                po[t] = g * ph[t] + bb;
            }
        }

    const bool batch_stats = mode != BnMode::eval;
    auto xhat_cache = std::make_shared<Tensor>(std::move(xhat));
    auto inv_std_cache = std::make_shared<Tensor>(std::move(inv_std));
    return finish(make_node(std::move(out)), {x.node(), gamma.node(), beta.node()},
                  [xhat_cache, inv_std_cache, batch_stats](Node& self) {
        const Tensor& xh = *xhat_cache;
        const Tensor& is = *inv_std_cache;
        const Tensor& dy = self.grad;
        const long n = xh.dim(0), c = xh.dim(1), plane = xh.dim(2) * xh.dim(3);
        const long m = n * plane;
        const Tensor& gv = self.parents[1]->value;

        Tensor sum_dy({c}), sum_dy_xh({c});
        for (long j = 0; j < c; ++j) {
            double a = 0.0, b = 0.0;
            for (long i = 0; i < n; ++i) {
                const double* pdy = dy.data() + (i * c + j) * plane;
                const double* pxh = xh.data() + (i * c + j) * plane;
                for (long t = 0; t < plane; ++t) {
                    a += pdy[t];
                    b += pdy[t] * pxh[t];
                }
            }
            sum_dy[j] = a;
            sum_dy_xh[j] = b;
        }
        if (self.parents[1]->requires_grad) {
            Tensor& dg = self.parents[1]->ensure_grad();
            for (long j = 0; j < c; ++j) dg[j] += sum_dy_xh[j];
        }
        if (self.parents[2]->requires_grad) {
            Tensor& db = self.parents[2]->ensure_grad();
            for (long j = 0; j < c; ++j) db[j] += sum_dy[j];
        }
        if (self.parents[0]->requires_grad) {
            Tensor& dx = self.parents[0]->ensure_grad();
            const double inv_m = 1.0 / static_cast<double>(m);
            for (long i = 0; i < n; ++i)
                for (long j = 0; j < c; ++j) {
                    const double* pdy = dy.data() + (i * c + j) * plane;
                    const double* pxh = xh.data() + (i * c + j) * plane;
                    double* pdx = dx.data() + (i * c + j) * plane;
                    const double k = gv[j] * is[j];
                    if (batch_stats) {
                        const double mdy = sum_dy[j] * inv_m;
                        const double mdyxh = sum_dy_xh[j] * inv_m;
                        for (long t = 0; t < plane; ++t)
                            pdx[t] += k * (pdy[t] - mdy - pxh[t] * mdyxh);
                    } else {
                        for (long t = 0; t < plane; ++t) pdx[t] += k * pdy[t];
                    }
                }
        }
    });
}

void backward(const Value& root) {
    if (!root.defined() || !root.requires_grad())
        throw InvalidParameter("backward: root does not depend on any differentiable leaf");
    if (root.val().size() != 1)
        throw InvalidParameter("backward: root must be scalar");

    // Reachable differentiable subgraph; creation order is topological.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{root.node().get()};
    seen.insert(root.node().get());
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (const auto& p : n->parents)
            if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
    std::sort(order.begin(), order.end(), [](const Node* a, const Node* b) { return a->seq > b->seq; });

    root.node()->ensure_grad();
    root.node()->grad.fill(1.0);
    for (Node* n : order)
        if (n->backprop && !n->grad.empty()) n->backprop(*n);
}

}  // namespace sumix::ad
