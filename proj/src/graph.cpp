#include "egossl/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <thread>

namespace egossl::numerics {

namespace {

// EGOSSL_THREADS caps internal parallelism; unset or 1 keeps everything on
// the calling thread. Work splits over disjoint output ranges, so results do
// not depend on the thread count.
std::size_t thread_cap() {
    static const std::size_t cap = [] {
        const char* env = std::getenv("EGOSSL_THREADS");
        if (!env) return std::size_t{1};
        long v = std::atol(env);
        if (v < 1) return std::size_t{1};
        return static_cast<std::size_t>(v);
    }();
    return cap;
}

template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    const std::size_t workers = std::min(thread_cap(), n > 0 ? n : std::size_t{1});
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::size_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

void require(bool cond, const char* msg) {
    if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

Var Graph::emplace(Tensor value, std::function<void()> backprop) {
    Node n;
    n.grad = Tensor::zeros(value.shape);
    n.value = std::move(value);
    n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

double Graph::scalar_value(Var v) const {
    const Tensor& t = nodes_[v.id].value;
    require(t.size() == 1, "expected a scalar node");
    return t.data[0];
}

Var Graph::input(Tensor value) { return emplace(std::move(value)); }

Var Graph::param(const std::string& name) {
    require(store_ != nullptr, "graph has no parameter store");
    Var v = emplace(store_->tensor(name));
    param_leaves_.emplace_back(v.id, name);
    return v;
}

Var Graph::add(Var a, Var b) {
    require(val(a).same_shape(val(b)), "add: shape mismatch");
    Tensor out(val(a).shape);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = val(a).data[i] + val(b).data[i];
    Var r = emplace(std::move(out));
    nodes_[r.id].backprop = [this, a, b, r] {
        const auto& g = grd(r).data;
        auto& ga = grd(a).data;
        auto& gb = grd(b).data;
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i];
            gb[i] += g[i];
        }
    };
    return r;
}

Var Graph::sub(Var a, Var b) {
    require(val(a).same_shape(val(b)), "sub: shape mismatch");
    Tensor out(val(a).shape);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = val(a).data[i] - val(b).data[i];
    Var r = emplace(std::move(out));
    nodes_[r.id].backprop = [this, a, b, r] {
        const auto& g = grd(r).data;
        auto& ga = grd(a).data;
        auto& gb = grd(b).data;
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i];
            gb[i] -= g[i];
        }
    };
    return r;
}

Var Graph::mul(Var a, Var b) {
    require(val(a).same_shape(val(b)), "mul: shape mismatch");
    Tensor out(val(a).shape);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = val(a).data[i] * val(b).data[i];
    Var r = emplace(std::move(out));
    nodes_[r.id].backprop = [this, a, b, r] {
        const auto& g = grd(r).data;
        const auto& xa = val(a).data;
        const auto& xb = val(b).data;
        auto& ga = grd(a).data;
        auto& gb = grd(b).data;
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i] * xb[i];
            gb[i] += g[i] * xa[i];
        }
    };
    return r;
}

Var Graph::scale(Var a, double c) {
    Tensor out(val(a).shape);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = val(a).data[i] * c;
    Var r = emplace(std::move(out));
    nodes_[r.id].backprop = [this, a, r, c] {
        const auto& g = grd(r).data;
        auto& ga = grd(a).data;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
    };
    return r;
}

Var Graph::relu(Var a) {
    Tensor out(val(a).shape);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data[i] = val(a).data[i] > 0.0 ? val(a).data[i] : 0.0;
    }
    Var r = emplace(std::move(out));
    nodes_[r.id].backprop = [this, a, r] {
        const auto& g = grd(r).data;
        const auto& x = val(a).data;
        auto& ga = grd(a).data;
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (x[i] > 0.0) ga[i] += g[i];
        }
    };
    return r;
}

Var Graph::matmul(Var a, Var b) {
    require(val(a).rank() == 2 && val(b).rank() == 2, "matmul: rank-2 operands required");
    const std::size_t m = val(a).shape[0], k = val(a).shape[1];
    require(val(b).shape[0] == k, "matmul: inner dimension mismatch");
    const std::size_t n = val(b).shape[1];
    Tensor out(Shape{m, n});
    {
        const double* A = val(a).data.data();
        const double* B = val(b).data.data();
        double* C = out.data.data();
        parallel_for(m, [&](std::size_t i) {
            for (std::size_t j = 0; j < n; ++j) {
                double acc = 0.0;
                for (std::size_t p = 0; p < k; ++p) acc += A[i * k + p] * B[p * n + j];
                C[i * n + j] = acc;
            }
        });
    }
    Var r = emplace(std::move(out));
    nodes_[r.id].backprop = [this, a, b, r, m, n, k] {
        const double* G = grd(r).data.data();
        const double* A = val(a).data.data();
        const double* B = val(b).data.data();
        double* GA = grd(a).data.data();
        double* GB = grd(b).data.data();
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * B[p * n + j];
                GA[i * k + p] += acc;
            }
        }
        for (std::size_t p = 0; p < k; ++p) {
            for (std::size_t j = 0; j < n; ++j) {
                double acc = 0.0;
                for (std::size_t i = 0; i < m; ++i) acc += A[i * k + p] * G[i * n + j];
                GB[p * n + j] += acc;
            }
        }
    };
    return r;
}

Var Graph::matmul_nt(Var a, Var b) {
    require(val(a).rank() == 2 && val(b).rank() == 2, "matmul_nt: rank-2 operands required");
    const std::size_t m = val(a).shape[0], k = val(a).shape[1];
    require(val(b).shape[1] == k, "matmul_nt: inner dimension mismatch");
    const std::size_t n = val(b).shape[0];
    Tensor out(Shape{m, n});
    {
        const double* A = val(a).data.data();
        const double* B = val(b).data.data();
        double* C = out.data.data();
        parallel_for(m, [&](std::size_t i) {
            for (std::size_t j = 0; j < n; ++j) {
                double acc = 0.0;
                for (std::size_t p = 0; p < k; ++p) acc += A[i * k + p] * B[j * k + p];
                C[i * n + j] = acc;
            }
        });
    }
    Var r = emplace(std::move(out));
    nodes_[r.id].backprop = [this, a, b, r, m, n, k] {
        const double* G = grd(r).data.data();
        const double* A = val(a).data.data();
        const double* B = val(b).data.data();
        double* GA = grd(a).data.data();
        double* GB = grd(b).data.data();
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * B[j * k + p];
                GA[i * k + p] += acc;
            }
        }
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t p = 0; p < k; ++p) {
                double acc = 0.0;
                for (std::size_t i = 0; i < m; ++i) acc += G[i * n + j] * A[i * k + p];
                GB[j * k + p] += acc;
            }
        }
    };
    return r;
}

Var Graph::add_rowvec(Var x, Var bias) {
    require(val(x).rank() == 2 && val(bias).rank() == 1, "add_rowvec: [m,n] and [n] required");
    const std::size_t m = val(x).shape[0], n = val(x).shape[1];
    require(val(bias).shape[0] == n, "add_rowvec: width mismatch");
    Tensor out(Shape{m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out.data[i * n + j] = val(x).data[i * n + j] + val(bias).data[j];
        }
    }
    Var r = emplace(std::move(out));
    nodes_[r.id].backprop = [this, x, bias, r, m, n] {
        const auto& g = grd(r).data;
        auto& gx = grd(x).data;
        auto& gb = grd(bias).data;
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                gx[i * n + j] += g[i * n + j];
                gb[j] += g[i * n + j];
            }
        }
    };
    return r;
}

Var Graph::transpose(Var a) {
    require(val(a).rank() == 2, "transpose: rank-2 operand required");
    const std::size_t m = val(a).shape[0], n = val(a).shape[1];
    Tensor out(Shape{n, m});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) out.data[j * m + i] = val(a).data[i * n + j];
    }
    Var r = emplace(std::move(out));
    nodes_[r.id].backprop = [this, a, r, m, n] {
        const auto& g = grd(r).data;
        auto& ga = grd(a).data;
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
        }
    };
    return r;
}

Var Graph::conv2d(Var x, Var w, Var bias, std::size_t sh, std::size_t sw) {
    require(val(x).rank() == 4, "conv2d: input must be [B,C,H,W]");
    require(val(w).rank() == 4, "conv2d: kernel must be [F,C,kh,kw]");
    require(sh >= 1 && sw >= 1, "conv2d: strides must be positive");
    const std::size_t B = val(x).shape[0], C = val(x).shape[1];
    const std::size_t H = val(x).shape[2], W = val(x).shape[3];
    const std::size_t F = val(w).shape[0], kh = val(w).shape[2], kw = val(w).shape[3];
    require(val(w).shape[1] == C, "input shape mismatch");
    require(H >= kh && W >= kw, "input shape mismatch");
    require(val(bias).rank() == 1 && val(bias).shape[0] == F, "conv2d: bias must be [F]");
    const std::size_t OH = (H - kh) / sh + 1, OW = (W - kw) / sw + 1;

    Tensor out(Shape{B, F, OH, OW});
    {
        const double* X = val(x).data.data();
        const double* K = val(w).data.data();
        const double* Bv = val(bias).data.data();
        double* Y = out.data.data();
        parallel_for(B, [&](std::size_t b) {
            for (std::size_t f = 0; f < F; ++f) {
                for (std::size_t oh = 0; oh < OH; ++oh) {
                    for (std::size_t ow = 0; ow < OW; ++ow) {
                        double acc = Bv[f];
                        for (std::size_t c = 0; c < C; ++c) {
                            for (std::size_t i = 0; i < kh; ++i) {
                                const double* xrow = X + ((b * C + c) * H + oh * sh + i) * W + ow * sw;
                                const double* krow = K + ((f * C + c) * kh + i) * kw;
                                for (std::size_t j = 0; j < kw; ++j) acc += xrow[j] * krow[j];
                            }
                        }
                        Y[((b * F + f) * OH + oh) * OW + ow] = acc;
                    }
                }
            }
        });
    }
    Var r = emplace(std::move(out));
    nodes_[r.id].backprop = [this, x, w, bias, r, B, C, H, W, F, kh, kw, sh, sw] {
        const std::size_t OH = (H - kh) / sh + 1, OW = (W - kw) / sw + 1;
        const double* G = grd(r).data.data();
        const double* X = val(x).data.data();
        const double* K = val(w).data.data();
        double* GX = grd(x).data.data();
        double* GK = grd(w).data.data();
        double* GB = grd(bias).data.data();
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t f = 0; f < F; ++f) {
                for (std::size_t oh = 0; oh < OH; ++oh) {
                    for (std::size_t ow = 0; ow < OW; ++ow) {
                        const double g = G[((b * F + f) * OH + oh) * OW + ow];
                        GB[f] += g;
                        for (std::size_t c = 0; c < C; ++c) {
                            for (std::size_t i = 0; i < kh; ++i) {
                                double* gxrow = GX + ((b * C + c) * H + oh * sh + i) * W + ow * sw;
                                const double* xrow = X + ((b * C + c) * H + oh * sh + i) * W + ow * sw;
                                const double* krow = K + ((f * C + c) * kh + i) * kw;
                                double* gkrow = GK + ((f * C + c) * kh + i) * kw;
                                for (std::size_t j = 0; j < kw; ++j) {
                                    gxrow[j] += g * krow[j];
                                    gkrow[j] += g * xrow[j];
                                }
                            }
                        }
                    }
                }
            }
        }
    };
    return r;
}

Var Graph::conv3d(Var x, Var w, Var bias, std::size_t st, std::size_t sh, std::size_t sw) {
    require(val(x).rank() == 5, "conv3d: input must be [B,C,T,H,W]");
    require(val(w).rank() == 5, "conv3d: kernel must be [F,C,kt,kh,kw]");
    require(st >= 1 && sh >= 1 && sw >= 1, "conv3d: strides must be positive");
    const std::size_t B = val(x).shape[0], C = val(x).shape[1];
    const std::size_t T = val(x).shape[2], H = val(x).shape[3], W = val(x).shape[4];
    const std::size_t F = val(w).shape[0];
    const std::size_t kt = val(w).shape[2], kh = val(w).shape[3], kw = val(w).shape[4];
    require(val(w).shape[1] == C, "input shape mismatch");
    require(T >= kt && H >= kh && W >= kw, "input shape mismatch");
    require(val(bias).rank() == 1 && val(bias).shape[0] == F, "conv3d: bias must be [F]");
    const std::size_t OT = (T - kt) / st + 1;
    const std::size_t OH = (H - kh) / sh + 1, OW = (W - kw) / sw + 1;

    Tensor out(Shape{B, F, OT, OH, OW});
    {
        const double* X = val(x).data.data();
        const double* K = val(w).data.data();
        const double* Bv = val(bias).data.data();
        double* Y = out.data.data();
        parallel_for(B, [&](std::size_t b) {
            for (std::size_t f = 0; f < F; ++f) {
                for (std::size_t ot = 0; ot < OT; ++ot) {
                    for (std::size_t oh = 0; oh < OH; ++oh) {
                        for (std::size_t ow = 0; ow < OW; ++ow) {
                            double acc = Bv[f];
                            for (std::size_t c = 0; c < C; ++c) {
                                for (std::size_t q = 0; q < kt; ++q) {
                                    for (std::size_t i = 0; i < kh; ++i) {
                                        const double* xrow =
                                            X + ((((b * C + c) * T + ot * st + q) * H + oh * sh + i) * W) +
                                            ow * sw;
                                        const double* krow = K + (((f * C + c) * kt + q) * kh + i) * kw;
                                        for (std::size_t j = 0; j < kw; ++j) acc += xrow[j] * krow[j];
                                    }
                                }
                            }
                            Y[(((b * F + f) * OT + ot) * OH + oh) * OW + ow] = acc;
                        }
                    }
                }
            }
        });
    }
    Var r = emplace(std::move(out));
    nodes_[r.id].backprop = [this, x, w, bias, r, B, C, T, H, W, F, kt, kh, kw, st, sh, sw] {
        const std::size_t OT = (T - kt) / st + 1;
        const std::size_t OH = (H - kh) / sh + 1, OW = (W - kw) / sw + 1;
        const double* G = grd(r).data.data();
        const double* X = val(x).data.data();
        const double* K = val(w).data.data();
        double* GX = grd(x).data.data();
        double* GK = grd(w).data.data();
        double* GB = grd(bias).data.data();
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t f = 0; f < F; ++f) {
                for (std::size_t ot = 0; ot < OT; ++ot) {
                    for (std::size_t oh = 0; oh < OH; ++oh) {
                        for (std::size_t ow = 0; ow < OW; ++ow) {
                            const double g = G[(((b * F + f) * OT + ot) * OH + oh) * OW + ow];
                            GB[f] += g;
                            for (std::size_t c = 0; c < C; ++c) {
                                for (std::size_t q = 0; q < kt; ++q) {
                                    for (std::size_t i = 0; i < kh; ++i) {
                                        const std::size_t base =
                                            (((b * C + c) * T + ot * st + q) * H + oh * sh + i) * W + ow * sw;
                                        const std::size_t kbase = (((f * C + c) * kt + q) * kh + i) * kw;
                                        for (std::size_t j = 0; j < kw; ++j) {
                                            GX[base + j] += g * K[kbase + j];
                                            GK[kbase + j] += g * X[base + j];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    };
    return r;
}

Var Graph::reshape(Var a, Shape s) {
    require(shape_size(s) == val(a).size(), "reshape: element count mismatch");
    Tensor out(std::move(s), val(a).data);
    Var r = emplace(std::move(out));
    nodes_[r.id].backprop = [this, a, r] {
        const auto& g = grd(r).data;
        auto& ga = grd(a).data;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    };
    return r;
}

Var Graph::mean_axis(Var a, std::size_t axis) {
    const Shape& s = val(a).shape;
    require(axis < s.size(), "mean_axis: axis out of range");
    require(s.size() >= 2, "mean_axis: rank must be at least 2");
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    const std::size_t n = s[axis];
    Shape out_shape;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i != axis) out_shape.push_back(s[i]);
    }
    Tensor out(out_shape);
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += val(a).data[(o * n + j) * inner + i];
            out.data[o * inner + i] = acc * inv;
        }
    }
    Var r = emplace(std::move(out));
    nodes_[r.id].backprop = [this, a, r, outer, inner, n, inv] {
        const auto& g = grd(r).data;
        auto& ga = grd(a).data;
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t i = 0; i < inner; ++i) {
                const double gv = g[o * inner + i] * inv;
                for (std::size_t j = 0; j < n; ++j) ga[(o * n + j) * inner + i] += gv;
            }
        }
    };
    return r;
}

Var Graph::mean_all(Var a) {
    const std::size_t n = val(a).size();
    double acc = 0.0;
    for (double v : val(a).data) acc += v;
    Var r = emplace(Tensor::scalar(acc / static_cast<double>(n)));
    nodes_[r.id].backprop = [this, a, r, n] {
        const double g = grd(r).data[0] / static_cast<double>(n);
        auto& ga = grd(a).data;
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    };
    return r;
}

Var Graph::sum_all(Var a) {
    double acc = 0.0;
    for (double v : val(a).data) acc += v;
    Var r = emplace(Tensor::scalar(acc));
    nodes_[r.id].backprop = [this, a, r] {
        const double g = grd(r).data[0];
        auto& ga = grd(a).data;
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    };
    return r;
}

Var Graph::row_l2_normalize(Var a) {
    require(val(a).rank() == 2, "row_l2_normalize: rank-2 operand required");
    const std::size_t m = val(a).shape[0], n = val(a).shape[1];
    Tensor out(Shape{m, n});
    std::vector<double> norms(m);
    for (std::size_t i = 0; i < m; ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double v = val(a).data[i * n + j];
            sq += v * v;
        }
        const double norm = std::sqrt(sq);
        if (!(norm > 0.0)) throw std::invalid_argument("degenerate embedding");
        norms[i] = norm;
        for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] = val(a).data[i * n + j] / norm;
    }
    Var r = emplace(std::move(out));
    nodes_[r.id].backprop = [this, a, r, m, n, norms = std::move(norms)] {
        const auto& g = grd(r).data;
        const auto& y = val(r).data;
        auto& ga = grd(a).data;
        for (std::size_t i = 0; i < m; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
            for (std::size_t j = 0; j < n; ++j) {
                ga[i * n + j] += (g[i * n + j] - y[i * n + j] * dot) / norms[i];
            }
        }
    };
    return r;
}

Var Graph::logsumexp_rows(Var a) {
    require(val(a).rank() == 2, "logsumexp_rows: rank-2 operand required");
    const std::size_t m = val(a).shape[0], n = val(a).shape[1];
    Tensor out(Shape{m});
    for (std::size_t i = 0; i < m; ++i) {
        double mx = val(a).data[i * n];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, val(a).data[i * n + j]);
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += std::exp(val(a).data[i * n + j] - mx);
        out.data[i] = mx + std::log(acc);
    }
    Var r = emplace(std::move(out));
    nodes_[r.id].backprop = [this, a, r, m, n] {
        const auto& g = grd(r).data;
        const auto& x = val(a).data;
        const auto& y = val(r).data;
        auto& ga = grd(a).data;
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                ga[i * n + j] += g[i] * std::exp(x[i * n + j] - y[i]);
            }
        }
    };
    return r;
}

Var Graph::softmax_rows(Var a) {
    require(val(a).rank() == 2, "softmax_rows: rank-2 operand required");
    const std::size_t m = val(a).shape[0], n = val(a).shape[1];
    Tensor out(Shape{m, n});
    for (std::size_t i = 0; i < m; ++i) {
        double mx = val(a).data[i * n];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, val(a).data[i * n + j]);
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double e = std::exp(val(a).data[i * n + j] - mx);
            out.data[i * n + j] = e;
            acc += e;
        }
        for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] /= acc;
    }
    Var r = emplace(std::move(out));
    nodes_[r.id].backprop = [this, a, r, m, n] {
        const auto& g = grd(r).data;
        const auto& y = val(r).data;
        auto& ga = grd(a).data;
        for (std::size_t i = 0; i < m; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
            for (std::size_t j = 0; j < n; ++j) {
                ga[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
            }
        }
    };
    return r;
}

Var Graph::diag_part(Var a) {
    require(val(a).rank() == 2 && val(a).shape[0] == val(a).shape[1],
            "diag_part: square matrix required");
    const std::size_t n = val(a).shape[0];
    Tensor out(Shape{n});
    for (std::size_t i = 0; i < n; ++i) out.data[i] = val(a).data[i * n + i];
    Var r = emplace(std::move(out));
    nodes_[r.id].backprop = [this, a, r, n] {
        const auto& g = grd(r).data;
        auto& ga = grd(a).data;
        for (std::size_t i = 0; i < n; ++i) ga[i * n + i] += g[i];
    };
    return r;
}

Var Graph::gather_cols(Var x, std::vector<std::size_t> cols) {
    require(val(x).rank() == 2, "gather_cols: rank-2 operand required");
    const std::size_t m = val(x).shape[0], n = val(x).shape[1];
    require(cols.size() == m, "gather_cols: one index per row required");
    for (std::size_t c : cols) require(c < n, "gather_cols: index out of range");
    Tensor out(Shape{m});
    for (std::size_t i = 0; i < m; ++i) out.data[i] = val(x).data[i * n + cols[i]];
    Var r = emplace(std::move(out));
    nodes_[r.id].backprop = [this, x, r, n, cols = std::move(cols)] {
        const auto& g = grd(r).data;
        auto& gx = grd(x).data;
        for (std::size_t i = 0; i < g.size(); ++i) gx[i * n + cols[i]] += g[i];
    };
    return r;
}

void Graph::backward(Var loss) {
    require(loss.id < nodes_.size(), "backward: unknown node");
    require(nodes_[loss.id].value.size() == 1, "backward: loss must be scalar");
    for (auto& n : nodes_) {
        for (auto& g : n.grad.data) g = 0.0;
    }
    nodes_[loss.id].grad.data[0] = 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        if (nodes_[i].backprop) nodes_[i].backprop();
    }
    if (store_) {
        for (const auto& [id, name] : param_leaves_) {
            auto& dst = store_->grad(name).data;
            const auto& src = nodes_[id].grad.data;
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
        }
    }
}

double forward_backward(const GraphFn& fn, ParamStore& params) {
    params.zero_grads();
    Graph g(&params);
    Var loss = fn(g);
    if (g.value(loss).size() != 1) throw std::invalid_argument("loss must be scalar");
    const double value = g.value(loss).data[0];
    if (!std::isfinite(value)) throw std::runtime_error("numerical overflow");
    g.backward(loss);
    return value;
}

double forward_value(const GraphFn& fn, ParamStore& params) {
    Graph g(&params);
    Var loss = fn(g);
    if (g.value(loss).size() != 1) throw std::invalid_argument("loss must be scalar");
    return g.value(loss).data[0];
}

double fd_check(const GraphFn& fn, ParamStore& params, double step) {
    if (!(step > 0.0)) throw std::invalid_argument("fd step must be positive");
    forward_backward(fn, params);

    // Snapshot analytic gradients before the probing evaluations overwrite
    // anything.
    std::vector<std::vector<double>> analytic;
    for (const auto& name : params.names()) analytic.push_back(params.grad(name).data);

    double worst = 0.0;
    std::size_t pi = 0;
    for (const auto& name : params.names()) {
        auto& value = params.tensor(name).data;
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double saved = value[i];
            value[i] = saved + step;
            const double up = forward_value(fn, params);
            value[i] = saved - step;
            const double down = forward_value(fn, params);
            value[i] = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double a = analytic[pi][i];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-12});
            worst = std::max(worst, std::abs(a - numeric) / denom);
        }
        ++pi;
    }
    return worst;
}

}  // namespace egossl::numerics
