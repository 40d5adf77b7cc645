#include "mtabgen/graph.hpp"

#include <algorithm>
#include <cmath>

namespace mtabgen {

namespace {

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double stable_softplus(double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

constexpr double kMaskedScore = -1e30;

}  // namespace

Var Graph::push(Node n, const std::string& label) {
    n.label = label;
    if (check_finite_ && !n.value.all_finite()) {
        throw NumericError("non-finite value produced by op '" + label + "'");
    }
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Tensor& Graph::ensure_grad(int id) {
    Node& n = node(id);
    if (!n.grad_live) {
        n.grad = Tensor::zeros(n.value.shape());
        n.grad_live = true;
    }
    return n.grad;
}

void Graph::accumulate(int id, const Tensor& g) {
    Node& n = node(id);
    if (!n.requires_grad) return;
    Tensor& dst = ensure_grad(id);
    const double* src = g.data();
    double* d = dst.data();
    for (size_t i = 0; i < dst.size(); ++i) d[i] += src[i];
}

double Graph::scalar(Var v) const {
    const Tensor& t = value(v);
    require(t.size() == 1, "scalar: tensor is not a scalar");
    return t[0];
}

const Tensor& Graph::grad_of(Var v) const {
    const Node& n = node(v.id);
    require(n.grad_live, "grad_of: no gradient recorded (run backward first)");
    return n.grad;
}

Var Graph::constant(Tensor t) {
    Node n;
    n.value = std::move(t);
    n.requires_grad = false;
    return push(std::move(n), "constant");
}

Var Graph::param(Parameter& p) {
    Node n;
    n.value = p.value;
    n.requires_grad = true;
    n.bound = &p;
    return push(std::move(n), "param:" + p.name);
}

Var Graph::linear(Var x, Var weight, Var bias) {
    const Tensor& xv = value(x);
    const Tensor& wv = value(weight);
    const Tensor& bv = value(bias);
    require(wv.rank() == 2, "linear: weight must be rank 2");
    const size_t n_in = wv.extent(0);
    const size_t n_out = wv.extent(1);
    if (xv.cols() != n_in) {
        throw ShapeError("linear: input " + xv.shape_str() + " incompatible with weight " +
                         wv.shape_str());
    }
    require(bv.size() == n_out, "linear: bias size mismatch");

    std::vector<size_t> out_shape(xv.shape());
    out_shape.back() = n_out;
    Tensor out(out_shape);
    const size_t rows = xv.rows();
    for (size_t r = 0; r < rows; ++r) {
        double* o = out.data() + r * n_out;
        for (size_t j = 0; j < n_out; ++j) o[j] = bv[j];
    }
    matmul_acc(xv.data(), wv.data(), out.data(), rows, n_in, n_out);

    Node nd;
    nd.value = std::move(out);
    nd.requires_grad = node(x.id).requires_grad || node(weight.id).requires_grad ||
                       node(bias.id).requires_grad;
    const int xi = x.id, wi = weight.id, bi = bias.id;
    Var out_var = push(std::move(nd), "linear");
    const int oi = out_var.id;
    node(oi).back = [xi, wi, bi, oi, rows, n_in, n_out](Graph& g) {
        const Tensor& dout = g.node(oi).grad;
        if (g.node(xi).requires_grad) {
            Tensor& dx = g.ensure_grad(xi);
            matmul_bt_acc(dout.data(), g.node(wi).value.data(), dx.data(), rows, n_out, n_in);
        }
        if (g.node(wi).requires_grad) {
            Tensor& dw = g.ensure_grad(wi);
            matmul_at_acc(g.node(xi).value.data(), dout.data(), dw.data(), rows, n_in, n_out);
        }
        if (g.node(bi).requires_grad) {
            Tensor& db = g.ensure_grad(bi);
            for (size_t r = 0; r < rows; ++r) {
                const double* d = dout.data() + r * n_out;
                for (size_t j = 0; j < n_out; ++j) db[j] += d[j];
            }
        }
    };
    return out_var;
}

Var Graph::embedding(Var table, std::vector<int> codes) {
    const Tensor& tv = value(table);
    require(tv.rank() == 2, "embedding: table must be rank 2");
    const size_t cl = tv.extent(0);
    const size_t d = tv.extent(1);
    for (size_t i = 0; i < codes.size(); ++i) {
        if (codes[i] < 0 || static_cast<size_t>(codes[i]) >= cl) {
            throw Error("embedding: code " + std::to_string(codes[i]) + " out of range [0," +
                        std::to_string(cl) + ") at row " + std::to_string(i));
        }
    }
    Tensor out({codes.size(), d});
    for (size_t i = 0; i < codes.size(); ++i) {
        const double* src = tv.data() + static_cast<size_t>(codes[i]) * d;
        std::copy(src, src + d, out.data() + i * d);
    }
    Node nd;
    nd.value = std::move(out);
    nd.requires_grad = node(table.id).requires_grad;
    Var out_var = push(std::move(nd), "embedding");
    const int oi = out_var.id, ti = table.id;
    node(oi).back = [oi, ti, codes = std::move(codes), d](Graph& g) {
        if (!g.node(ti).requires_grad) return;
        const Tensor& dout = g.node(oi).grad;
        Tensor& dt = g.ensure_grad(ti);
        for (size_t i = 0; i < codes.size(); ++i) {
            double* dst = dt.data() + static_cast<size_t>(codes[i]) * d;
            const double* src = dout.data() + i * d;
            for (size_t c = 0; c < d; ++c) dst[c] += src[c];
        }
    };
    return out_var;
}

Var Graph::layer_norm(Var x, Var gain, Var shift, double eps) {
    const Tensor& xv = value(x);
    const size_t d = xv.cols();
    const size_t rows = xv.rows();
    require(value(gain).size() == d && value(shift).size() == d,
            "layer_norm: gain/shift must match the last dimension");

    Tensor out(xv.shape());
    Tensor xhat(xv.shape());
    std::vector<double> inv_sigma(rows);
    const double* gv = value(gain).data();
    const double* sv = value(shift).data();
    for (size_t r = 0; r < rows; ++r) {
        const double* row = xv.data() + r * d;
        double mean = 0.0;
        for (size_t c = 0; c < d; ++c) mean += row[c];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (size_t c = 0; c < d; ++c) {
            const double dv = row[c] - mean;
            var += dv * dv;
        }
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_sigma[r] = inv;
        double* xr = xhat.data() + r * d;
        double* orow = out.data() + r * d;
        for (size_t c = 0; c < d; ++c) {
            xr[c] = (row[c] - mean) * inv;
            orow[c] = xr[c] * gv[c] + sv[c];
        }
    }

    Node nd;
    nd.value = std::move(out);
    nd.requires_grad = node(x.id).requires_grad || node(gain.id).requires_grad ||
                       node(shift.id).requires_grad;
    Var out_var = push(std::move(nd), "layer_norm");
    const int oi = out_var.id, xi = x.id, gi = gain.id, si = shift.id;
    node(oi).back = [oi, xi, gi, si, xhat = std::move(xhat), inv_sigma = std::move(inv_sigma),
                     rows, d](Graph& g) {
        const Tensor& dout = g.node(oi).grad;
        const double* gv = g.node(gi).value.data();
        const bool need_x = g.node(xi).requires_grad;
        const bool need_g = g.node(gi).requires_grad;
        const bool need_s = g.node(si).requires_grad;
        Tensor* dx = need_x ? &g.ensure_grad(xi) : nullptr;
        Tensor* dg = need_g ? &g.ensure_grad(gi) : nullptr;
        Tensor* ds = need_s ? &g.ensure_grad(si) : nullptr;
        for (size_t r = 0; r < rows; ++r) {
            const double* dyr = dout.data() + r * d;
            const double* xr = xhat.data() + r * d;
            if (need_g || need_s) {
                for (size_t c = 0; c < d; ++c) {
                    if (dg) (*dg)[c] += dyr[c] * xr[c];
                    if (ds) (*ds)[c] += dyr[c];
                }
            }
            if (need_x) {
                double mean_gdy = 0.0, mean_gdy_x = 0.0;
                for (size_t c = 0; c < d; ++c) {
                    const double gdy = gv[c] * dyr[c];
                    mean_gdy += gdy;
                    mean_gdy_x += gdy * xr[c];
                }
                mean_gdy /= static_cast<double>(d);
                mean_gdy_x /= static_cast<double>(d);
                double* dxr = dx->data() + r * d;
                for (size_t c = 0; c < d; ++c) {
                    const double gdy = gv[c] * dyr[c];
                    dxr[c] += (gdy - mean_gdy - xr[c] * mean_gdy_x) * inv_sigma[r];
                }
            }
        }
    };
    return out_var;
}

Var Graph::relu(Var x) {
    const Tensor& xv = value(x);
    Tensor out(xv.shape());
    for (size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    Node nd;
    nd.value = std::move(out);
    nd.requires_grad = node(x.id).requires_grad;
    Var out_var = push(std::move(nd), "relu");
    const int oi = out_var.id, xi = x.id;
    node(oi).back = [oi, xi](Graph& g) {
        if (!g.node(xi).requires_grad) return;
        const Tensor& dout = g.node(oi).grad;
        const Tensor& xv = g.node(xi).value;
        Tensor& dx = g.ensure_grad(xi);
        for (size_t i = 0; i < dx.size(); ++i) {
            if (xv[i] > 0.0) dx[i] += dout[i];
        }
    };
    return out_var;
}

Var Graph::mish(Var x) {
    const Tensor& xv = value(x);
    Tensor out(xv.shape());
    for (size_t i = 0; i < xv.size(); ++i) {
        out[i] = xv[i] * std::tanh(stable_softplus(xv[i]));
    }
    Node nd;
    nd.value = std::move(out);
    nd.requires_grad = node(x.id).requires_grad;
    Var out_var = push(std::move(nd), "mish");
    const int oi = out_var.id, xi = x.id;
    node(oi).back = [oi, xi](Graph& g) {
        if (!g.node(xi).requires_grad) return;
        const Tensor& dout = g.node(oi).grad;
        const Tensor& xv = g.node(xi).value;
        Tensor& dx = g.ensure_grad(xi);
        for (size_t i = 0; i < dx.size(); ++i) {
            const double t = std::tanh(stable_softplus(xv[i]));
            const double deriv = t + xv[i] * (1.0 - t * t) * stable_sigmoid(xv[i]);
            dx[i] += dout[i] * deriv;
        }
    };
    return out_var;
}

Var Graph::softmax_rows(Var x) {
    const Tensor& xv = value(x);
    const size_t d = xv.cols();
    const size_t rows = xv.rows();
    Tensor out(xv.shape());
    for (size_t r = 0; r < rows; ++r) {
        const double* row = xv.data() + r * d;
        double* orow = out.data() + r * d;
        double mx = row[0];
        for (size_t c = 1; c < d; ++c) mx = std::max(mx, row[c]);
        double total = 0.0;
        for (size_t c = 0; c < d; ++c) {
            orow[c] = std::exp(row[c] - mx);
            total += orow[c];
        }
        const double inv = 1.0 / total;
        for (size_t c = 0; c < d; ++c) orow[c] *= inv;
    }
    Node nd;
    nd.value = std::move(out);
    nd.requires_grad = node(x.id).requires_grad;
    Var out_var = push(std::move(nd), "softmax");
    const int oi = out_var.id, xi = x.id;
    node(oi).back = [oi, xi, rows, d](Graph& g) {
        if (!g.node(xi).requires_grad) return;
        const Tensor& dout = g.node(oi).grad;
        const Tensor& y = g.node(oi).value;
        Tensor& dx = g.ensure_grad(xi);
        for (size_t r = 0; r < rows; ++r) {
            const double* dyr = dout.data() + r * d;
            const double* yr = y.data() + r * d;
            double dot = 0.0;
            for (size_t c = 0; c < d; ++c) dot += dyr[c] * yr[c];
            double* dxr = dx.data() + r * d;
            for (size_t c = 0; c < d; ++c) dxr[c] += yr[c] * (dyr[c] - dot);
        }
    };
    return out_var;
}

Var Graph::add(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (!av.same_shape(bv)) {
        throw ShapeError("add: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
    }
    Tensor out(av.shape());
    for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    Node nd;
    nd.value = std::move(out);
    nd.requires_grad = node(a.id).requires_grad || node(b.id).requires_grad;
    Var out_var = push(std::move(nd), "add");
    const int oi = out_var.id, ai = a.id, bi = b.id;
    node(oi).back = [oi, ai, bi](Graph& g) {
        const Tensor& dout = g.node(oi).grad;
        g.accumulate(ai, dout);
        g.accumulate(bi, dout);
    };
    return out_var;
}

Var Graph::affine(Var x, double c1, double c2) {
    const Tensor& xv = value(x);
    Tensor out(xv.shape());
    for (size_t i = 0; i < out.size(); ++i) out[i] = c1 * xv[i] + c2;
    Node nd;
    nd.value = std::move(out);
    nd.requires_grad = node(x.id).requires_grad;
    Var out_var = push(std::move(nd), "affine");
    const int oi = out_var.id, xi = x.id;
    node(oi).back = [oi, xi, c1](Graph& g) {
        if (!g.node(xi).requires_grad) return;
        const Tensor& dout = g.node(oi).grad;
        Tensor& dx = g.ensure_grad(xi);
        for (size_t i = 0; i < dx.size(); ++i) dx[i] += c1 * dout[i];
    };
    return out_var;
}

Var Graph::add_bias_tokens(Var x, Var per_row) {
    const Tensor& xv = value(x);
    const Tensor& pv = value(per_row);
    require(xv.rank() == 3 && pv.rank() == 2, "add_bias_tokens: want [b,L,d] and [b,d]");
    const size_t b = xv.extent(0), len = xv.extent(1), d = xv.extent(2);
    require(pv.extent(0) == b && pv.extent(1) == d, "add_bias_tokens: shape mismatch");
    Tensor out(xv.shape());
    for (size_t r = 0; r < b; ++r) {
        const double* pr = pv.data() + r * d;
        for (size_t l = 0; l < len; ++l) {
            const double* xr = xv.data() + (r * len + l) * d;
            double* orow = out.data() + (r * len + l) * d;
            for (size_t c = 0; c < d; ++c) orow[c] = xr[c] + pr[c];
        }
    }
    Node nd;
    nd.value = std::move(out);
    nd.requires_grad = node(x.id).requires_grad || node(per_row.id).requires_grad;
    Var out_var = push(std::move(nd), "add_bias_tokens");
    const int oi = out_var.id, xi = x.id, pi = per_row.id;
    node(oi).back = [oi, xi, pi, b, len, d](Graph& g) {
        const Tensor& dout = g.node(oi).grad;
        if (g.node(xi).requires_grad) g.accumulate(xi, dout);
        if (g.node(pi).requires_grad) {
            Tensor& dp = g.ensure_grad(pi);
            for (size_t r = 0; r < b; ++r) {
                double* dpr = dp.data() + r * d;
                for (size_t l = 0; l < len; ++l) {
                    const double* drow = dout.data() + (r * len + l) * d;
                    for (size_t c = 0; c < d; ++c) dpr[c] += drow[c];
                }
            }
        }
    };
    return out_var;
}

Var Graph::bmm(Var a, Var b, bool transpose_b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    require(av.rank() == 3 && bv.rank() == 3, "bmm: want rank-3 operands");
    const size_t groups = av.extent(0);
    require(bv.extent(0) == groups, "bmm: group count mismatch");
    const size_t n = av.extent(1);
    const size_t k = av.extent(2);
    const size_t m = transpose_b ? bv.extent(1) : bv.extent(2);
    const size_t bk = transpose_b ? bv.extent(2) : bv.extent(1);
    if (bk != k) {
        throw ShapeError("bmm: inner dimensions disagree: " + av.shape_str() + " vs " +
                         bv.shape_str());
    }
    Tensor out({groups, n, m});
    for (size_t gi = 0; gi < groups; ++gi) {
        const double* ap = av.data() + gi * n * k;
        const double* bp = bv.data() + gi * (transpose_b ? m * k : k * m);
        double* cp = out.data() + gi * n * m;
        if (transpose_b) {
            matmul_bt_acc(ap, bp, cp, n, k, m);
        } else {
            matmul_acc(ap, bp, cp, n, k, m);
        }
    }
    Node nd;
    nd.value = std::move(out);
    nd.requires_grad = node(a.id).requires_grad || node(b.id).requires_grad;
    Var out_var = push(std::move(nd), "bmm");
    const int oi = out_var.id, ai = a.id, bi = b.id;
    node(oi).back = [oi, ai, bi, groups, n, k, m, transpose_b](Graph& g) {
        const Tensor& dout = g.node(oi).grad;
        const Tensor& av = g.node(ai).value;
        const Tensor& bv = g.node(bi).value;
        const bool need_a = g.node(ai).requires_grad;
        const bool need_b = g.node(bi).requires_grad;
        Tensor* da = need_a ? &g.ensure_grad(ai) : nullptr;
        Tensor* db = need_b ? &g.ensure_grad(bi) : nullptr;
        for (size_t gi = 0; gi < groups; ++gi) {
            const double* dop = dout.data() + gi * n * m;
            const double* ap = av.data() + gi * n * k;
            const double* bp = bv.data() + gi * (transpose_b ? m * k : k * m);
            if (!transpose_b) {
                // C = A*B: dA += dC*B^T, dB += A^T*dC
                if (need_a) matmul_bt_acc(dop, bp, da->data() + gi * n * k, n, m, k);
                if (need_b) matmul_at_acc(ap, dop, db->data() + gi * k * m, n, k, m);
            } else {
                // C = A*B^T with B [m,k]: dA += dC*B, dB += dC^T*A
                if (need_a) matmul_acc(dop, bp, da->data() + gi * n * k, n, m, k);
                if (need_b) matmul_at_acc(dop, ap, db->data() + gi * m * k, n, m, k);
            }
        }
    };
    return out_var;
}

Var Graph::split_heads(Var x, size_t heads) {
    const Tensor& xv = value(x);
    require(xv.rank() == 3, "split_heads: want [b,L,d]");
    const size_t b = xv.extent(0), len = xv.extent(1), d = xv.extent(2);
    if (heads == 0 || d % heads != 0) {
        throw ConfigError("split_heads: model dim " + std::to_string(d) +
                          " not divisible by heads " + std::to_string(heads));
    }
    const size_t hd = d / heads;
    Tensor out({b * heads, len, hd});
    for (size_t r = 0; r < b; ++r) {
        for (size_t h = 0; h < heads; ++h) {
            for (size_t l = 0; l < len; ++l) {
                const double* src = xv.data() + (r * len + l) * d + h * hd;
                double* dst = out.data() + (((r * heads + h) * len) + l) * hd;
                std::copy(src, src + hd, dst);
            }
        }
    }
    Node nd;
    nd.value = std::move(out);
    nd.requires_grad = node(x.id).requires_grad;
    Var out_var = push(std::move(nd), "split_heads");
    const int oi = out_var.id, xi = x.id;
    node(oi).back = [oi, xi, b, len, d, heads, hd](Graph& g) {
        if (!g.node(xi).requires_grad) return;
        const Tensor& dout = g.node(oi).grad;
        Tensor& dx = g.ensure_grad(xi);
        for (size_t r = 0; r < b; ++r) {
            for (size_t h = 0; h < heads; ++h) {
                for (size_t l = 0; l < len; ++l) {
                    const double* src = dout.data() + (((r * heads + h) * len) + l) * hd;
                    double* dst = dx.data() + (r * len + l) * d + h * hd;
                    for (size_t c = 0; c < hd; ++c) dst[c] += src[c];
                }
            }
        }
    };
    return out_var;
}

Var Graph::merge_heads(Var x, size_t heads) {
    const Tensor& xv = value(x);
    require(xv.rank() == 3, "merge_heads: want [b*h,L,dh]");
    require(heads > 0 && xv.extent(0) % heads == 0, "merge_heads: bad group count");
    const size_t b = xv.extent(0) / heads, len = xv.extent(1), hd = xv.extent(2);
    const size_t d = hd * heads;
    Tensor out({b, len, d});
    for (size_t r = 0; r < b; ++r) {
        for (size_t h = 0; h < heads; ++h) {
            for (size_t l = 0; l < len; ++l) {
                const double* src = xv.data() + (((r * heads + h) * len) + l) * hd;
                double* dst = out.data() + (r * len + l) * d + h * hd;
                std::copy(src, src + hd, dst);
            }
        }
    }
    Node nd;
    nd.value = std::move(out);
    nd.requires_grad = node(x.id).requires_grad;
    Var out_var = push(std::move(nd), "merge_heads");
    const int oi = out_var.id, xi = x.id;
    node(oi).back = [oi, xi, b, len, d, heads, hd](Graph& g) {
        if (!g.node(xi).requires_grad) return;
        const Tensor& dout = g.node(oi).grad;
        Tensor& dx = g.ensure_grad(xi);
        for (size_t r = 0; r < b; ++r) {
            for (size_t h = 0; h < heads; ++h) {
                for (size_t l = 0; l < len; ++l) {
                    const double* src = dout.data() + (r * len + l) * d + h * hd;
                    double* dst = dx.data() + (((r * heads + h) * len) + l) * hd;
                    for (size_t c = 0; c < hd; ++c) dst[c] += src[c];
                }
            }
        }
    };
    return out_var;
}

Var Graph::mask_scores(Var scores, const KeyMask& mask, size_t heads) {
    const Tensor& sv = value(scores);
    require(sv.rank() == 3, "mask_scores: want [b*h,Lq,Lk]");
    require(sv.extent(0) == mask.batch * heads, "mask_scores: batch/head mismatch");
    require(sv.extent(2) == mask.len, "mask_scores: key length mismatch");
    const size_t lq = sv.extent(1), lk = sv.extent(2);
    Tensor out = sv;
    std::vector<uint8_t> valid = mask.valid;
    for (size_t gi = 0; gi < sv.extent(0); ++gi) {
        const size_t row = gi / heads;
        for (size_t q = 0; q < lq; ++q) {
            double* s = out.data() + (gi * lq + q) * lk;
            for (size_t kix = 0; kix < lk; ++kix) {
                if (!valid[row * lk + kix]) s[kix] = kMaskedScore;
            }
        }
    }
    Node nd;
    nd.value = std::move(out);
    nd.requires_grad = node(scores.id).requires_grad;
    Var out_var = push(std::move(nd), "mask_scores");
    const int oi = out_var.id, si = scores.id;
    node(oi).back = [oi, si, valid = std::move(valid), heads, lq, lk](Graph& g) {
        if (!g.node(si).requires_grad) return;
        const Tensor& dout = g.node(oi).grad;
        Tensor& ds = g.ensure_grad(si);
        const size_t groups = ds.extent(0);
        for (size_t gi = 0; gi < groups; ++gi) {
            const size_t row = gi / heads;
            for (size_t q = 0; q < lq; ++q) {
                const double* d = dout.data() + (gi * lq + q) * lk;
                double* dd = ds.data() + (gi * lq + q) * lk;
                for (size_t kix = 0; kix < lk; ++kix) {
                    if (valid[row * lk + kix]) dd[kix] += d[kix];
                }
            }
        }
    };
    return out_var;
}

Var Graph::stack_tokens(const std::vector<Var>& tokens) {
    require(!tokens.empty(), "stack_tokens: no tokens");
    const Tensor& first = value(tokens[0]);
    require(first.rank() == 2, "stack_tokens: want [b,d] inputs");
    const size_t b = first.extent(0), d = first.extent(1);
    const size_t len = tokens.size();
    bool needs = false;
    for (Var t : tokens) {
        const Tensor& tv = value(t);
        require(tv.rank() == 2 && tv.extent(0) == b && tv.extent(1) == d,
                "stack_tokens: inconsistent token shapes");
        needs = needs || node(t.id).requires_grad;
    }
    Tensor out({b, len, d});
    for (size_t l = 0; l < len; ++l) {
        const Tensor& tv = value(tokens[l]);
        for (size_t r = 0; r < b; ++r) {
            std::copy(tv.data() + r * d, tv.data() + (r + 1) * d,
                      out.data() + (r * len + l) * d);
        }
    }
    Node nd;
    nd.value = std::move(out);
    nd.requires_grad = needs;
    Var out_var = push(std::move(nd), "stack_tokens");
    const int oi = out_var.id;
    std::vector<int> ids(len);
    for (size_t l = 0; l < len; ++l) ids[l] = tokens[l].id;
    node(oi).back = [oi, ids = std::move(ids), b, d](Graph& g) {
        const Tensor& dout = g.node(oi).grad;
        const size_t len = ids.size();
        for (size_t l = 0; l < len; ++l) {
            if (!g.node(ids[l]).requires_grad) continue;
            Tensor& dt = g.ensure_grad(ids[l]);
            for (size_t r = 0; r < b; ++r) {
                const double* src = dout.data() + (r * len + l) * d;
                double* dst = dt.data() + r * d;
                for (size_t c = 0; c < d; ++c) dst[c] += src[c];
            }
        }
    };
    return out_var;
}

Var Graph::select_token(Var x, size_t l) {
    const Tensor& xv = value(x);
    require(xv.rank() == 3, "select_token: want [b,L,d]");
    const size_t b = xv.extent(0), len = xv.extent(1), d = xv.extent(2);
    require(l < len, "select_token: index out of range");
    Tensor out({b, d});
    for (size_t r = 0; r < b; ++r) {
        const double* src = xv.data() + (r * len + l) * d;
        std::copy(src, src + d, out.data() + r * d);
    }
    Node nd;
    nd.value = std::move(out);
    nd.requires_grad = node(x.id).requires_grad;
    Var out_var = push(std::move(nd), "select_token");
    const int oi = out_var.id, xi = x.id;
    node(oi).back = [oi, xi, l, len, d](Graph& g) {
        if (!g.node(xi).requires_grad) return;
        const Tensor& dout = g.node(oi).grad;
        Tensor& dx = g.ensure_grad(xi);
        const size_t b = dout.extent(0);
        for (size_t r = 0; r < b; ++r) {
            const double* src = dout.data() + r * d;
            double* dst = dx.data() + (r * len + l) * d;
            for (size_t c = 0; c < d; ++c) dst[c] += src[c];
        }
    };
    return out_var;
}

Var Graph::gather_tokens(Var x, const std::vector<std::vector<int>>& row_indices) {
    const Tensor& xv = value(x);
    require(xv.rank() == 3, "gather_tokens: want [b,L,d]");
    const size_t b = xv.extent(0), len = xv.extent(1), d = xv.extent(2);
    require(row_indices.size() == b, "gather_tokens: one index list per row required");
    size_t lmax = 1;
    for (const auto& idx : row_indices) {
        lmax = std::max(lmax, idx.size());
        for (int i : idx) {
            require(i >= 0 && static_cast<size_t>(i) < len, "gather_tokens: index out of range");
        }
    }
    Tensor out({b, lmax, d});
    for (size_t r = 0; r < b; ++r) {
        const auto& idx = row_indices[r];
        for (size_t p = 0; p < idx.size(); ++p) {
            const double* src = xv.data() + (r * len + static_cast<size_t>(idx[p])) * d;
            std::copy(src, src + d, out.data() + (r * lmax + p) * d);
        }
    }
    Node nd;
    nd.value = std::move(out);
    nd.requires_grad = node(x.id).requires_grad;
    Var out_var = push(std::move(nd), "gather_tokens");
    const int oi = out_var.id, xi = x.id;
    node(oi).back = [oi, xi, indices = row_indices, len, d](Graph& g) {
        if (!g.node(xi).requires_grad) return;
        const Tensor& dout = g.node(oi).grad;
        Tensor& dx = g.ensure_grad(xi);
        const size_t lmax = dout.extent(1);
        for (size_t r = 0; r < indices.size(); ++r) {
            for (size_t p = 0; p < indices[r].size(); ++p) {
                const double* src = dout.data() + (r * lmax + p) * d;
                double* dst = dx.data() + (r * len + static_cast<size_t>(indices[r][p])) * d;
                for (size_t c = 0; c < d; ++c) dst[c] += src[c];
            }
        }
    };
    return out_var;
}

Var Graph::custom(const std::string& label, const std::vector<Var>& inputs, Tensor value,
                  CustomBackward backward) {
    bool needs = false;
    for (Var v : inputs) needs = needs || node(v.id).requires_grad;
    Node nd;
    nd.value = std::move(value);
    nd.requires_grad = needs;
    Var out_var = push(std::move(nd), label);
    const int oi = out_var.id;
    std::vector<int> ids(inputs.size());
    for (size_t i = 0; i < inputs.size(); ++i) ids[i] = inputs[i].id;
    node(oi).back = [oi, ids = std::move(ids), backward = std::move(backward)](Graph& g) {
        std::vector<const Tensor*> vals(ids.size());
        std::vector<Tensor*> grads(ids.size(), nullptr);
        for (size_t i = 0; i < ids.size(); ++i) {
            vals[i] = &g.node(ids[i]).value;
            if (g.node(ids[i]).requires_grad) grads[i] = &g.ensure_grad(ids[i]);
        }
        backward(g.node(oi).grad, vals, grads);
    };
    return out_var;
}

void Graph::backward(Var loss) {
    Node& ln = node(loss.id);
    require(ln.value.size() == 1, "backward: loss must be scalar");
    ensure_grad(loss.id)[0] += 1.0;
    for (int i = loss.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (!n.requires_grad || !n.grad_live) continue;
        if (n.back) n.back(*this);
        if (n.bound != nullptr) {
            double* dst = n.bound->grad.data();
            const double* src = n.grad.data();
            for (size_t j = 0; j < n.grad.size(); ++j) dst[j] += src[j];
        }
    }
}

}  // namespace mtabgen
