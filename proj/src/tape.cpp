#include "relcl/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

namespace relcl {

NodeId Tape::push(Tensor value, bool needs_grad, std::function<void()> back) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = grad_enabled_ && needs_grad;
    if (n.needs_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::leaf(Tensor value) { return push(std::move(value), false, {}); }

NodeId Tape::param(Tensor& external) {
    NodeId id = push(external, grad_enabled_, {});
    if (grad_enabled_) param_bindings_.emplace_back(id, &external);
    return id;
}

NodeId Tape::embed_rows(NodeId table, std::vector<size_t> ids) {
    const Tensor& t = value(table);
    if (t.ndim() != 2) throw std::invalid_argument("embed_rows: table must be 2-D");
    const size_t d = t.cols();
    Tensor out({ids.size(), d});
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= t.rows()) throw std::invalid_argument("embed_rows: id out of range");
        std::copy(t.row_ptr(ids[i]), t.row_ptr(ids[i]) + d, out.row_ptr(i));
    }
    NodeId id = nodes_.size();
    return push(std::move(out), track(table), [this, table, id, ids = std::move(ids)] {
        const Tensor& g = grad_ref(id);
        Tensor& tg = grad_ref(table);
        const size_t dd = tg.cols();
        for (size_t i = 0; i < ids.size(); ++i) {
            const double* gr = g.row_ptr(i);
            double* tr = tg.row_ptr(ids[i]);
            for (size_t j = 0; j < dd; ++j) tr[j] += gr[j];
        }
    });
}

NodeId Tape::select_rows(NodeId a, std::vector<size_t> ids) { return embed_rows(a, std::move(ids)); }

NodeId Tape::row(NodeId a, size_t i) {
    const Tensor& v = value(a);
    if (v.ndim() != 2 || i >= v.rows()) throw std::invalid_argument("row: index out of range");
    Tensor out({v.cols()});
    std::copy(v.row_ptr(i), v.row_ptr(i) + v.cols(), out.data.begin());
    NodeId id = nodes_.size();
    return push(std::move(out), track(a), [this, a, id, i] {
        const Tensor& g = grad_ref(id);
        double* ar = grad_ref(a).row_ptr(i);
        for (size_t j = 0; j < g.numel(); ++j) ar[j] += g.at(j);
    });
}

NodeId Tape::slice_cols(NodeId a, size_t c0, size_t c1) {
    const Tensor& v = value(a);
    if (v.ndim() != 2 || c0 >= c1 || c1 > v.cols())
        throw std::invalid_argument("slice_cols: bad column range");
    const size_t m = v.rows(), w = c1 - c0;
    Tensor out({m, w});
    for (size_t i = 0; i < m; ++i)
        std::copy(v.row_ptr(i) + c0, v.row_ptr(i) + c1, out.row_ptr(i));
    NodeId id = nodes_.size();
    return push(std::move(out), track(a), [this, a, id, c0, w] {
        const Tensor& g = grad_ref(id);
        Tensor& ag = grad_ref(a);
        for (size_t i = 0; i < g.rows(); ++i) {
            const double* gr = g.row_ptr(i);
            double* ar = ag.row_ptr(i) + c0;
            for (size_t j = 0; j < w; ++j) ar[j] += gr[j];
        }
    });
}

NodeId Tape::concat_cols(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty list");
    const size_t m = value(parts[0]).rows();
    size_t total = 0;
    bool needs = false;
    for (NodeId p : parts) {
        const Tensor& v = value(p);
        if (v.ndim() != 2 || v.rows() != m) throw std::invalid_argument("concat_cols: row mismatch");
        total += v.cols();
        needs = needs || track(p);
    }
    Tensor out({m, total});
    size_t off = 0;
    for (NodeId p : parts) {
        const Tensor& v = value(p);
        for (size_t i = 0; i < m; ++i)
            std::copy(v.row_ptr(i), v.row_ptr(i) + v.cols(), out.row_ptr(i) + off);
        off += v.cols();
    }
    NodeId id = nodes_.size();
    return push(std::move(out), needs, [this, id, parts] {
        const Tensor& g = grad_ref(id);
        size_t off2 = 0;
        for (NodeId p : parts) {
            Tensor& pg = grad_ref(p);
            const size_t w = pg.cols();
            if (track(p)) {
                for (size_t i = 0; i < g.rows(); ++i) {
                    const double* gr = g.row_ptr(i) + off2;
                    double* pr = pg.row_ptr(i);
                    for (size_t j = 0; j < w; ++j) pr[j] += gr[j];
                }
            }
            off2 += value(p).cols();
        }
    });
}

NodeId Tape::concat_vec(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (va.ndim() != 1 || vb.ndim() != 1) throw std::invalid_argument("concat_vec: inputs must be 1-D");
    Tensor out({va.numel() + vb.numel()});
    std::copy(va.data.begin(), va.data.end(), out.data.begin());
    std::copy(vb.data.begin(), vb.data.end(), out.data.begin() + va.numel());
    NodeId id = nodes_.size();
    const size_t na = va.numel();
    return push(std::move(out), track(a) || track(b), [this, a, b, id, na] {
        const Tensor& g = grad_ref(id);
        if (track(a)) {
            Tensor& ga = grad_ref(a);
            for (size_t i = 0; i < na; ++i) ga.at(i) += g.at(i);
        }
        if (track(b)) {
            Tensor& gb = grad_ref(b);
            for (size_t i = 0; i < gb.numel(); ++i) gb.at(i) += g.at(na + i);
        }
    });
}

NodeId Tape::stack_scalars(const std::vector<NodeId>& scalars) {
    Tensor out({scalars.size()});
    bool needs = false;
    for (size_t i = 0; i < scalars.size(); ++i) {
        out.at(i) = value(scalars[i]).item();
        needs = needs || track(scalars[i]);
    }
    NodeId id = nodes_.size();
    return push(std::move(out), needs, [this, id, scalars] {
        const Tensor& g = grad_ref(id);
        for (size_t i = 0; i < scalars.size(); ++i)
            if (track(scalars[i])) grad_ref(scalars[i]).at(0) += g.at(i);
    });
}

NodeId Tape::add(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (!va.same_shape(vb)) throw std::invalid_argument("add: shape mismatch");
    Tensor out = va;
    for (size_t i = 0; i < out.numel(); ++i) out.at(i) += vb.at(i);
    NodeId id = nodes_.size();
    return push(std::move(out), track(a) || track(b), [this, a, b, id] {
        const Tensor& g = grad_ref(id);
        if (track(a)) {
            Tensor& ga = grad_ref(a);
            for (size_t i = 0; i < g.numel(); ++i) ga.at(i) += g.at(i);
        }
        if (track(b)) {
            Tensor& gb = grad_ref(b);
            for (size_t i = 0; i < g.numel(); ++i) gb.at(i) += g.at(i);
        }
    });
}

NodeId Tape::sub(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (!va.same_shape(vb)) throw std::invalid_argument("sub: shape mismatch");
    Tensor out = va;
    for (size_t i = 0; i < out.numel(); ++i) out.at(i) -= vb.at(i);
    NodeId id = nodes_.size();
    return push(std::move(out), track(a) || track(b), [this, a, b, id] {
        const Tensor& g = grad_ref(id);
        if (track(a)) {
            Tensor& ga = grad_ref(a);
            for (size_t i = 0; i < g.numel(); ++i) ga.at(i) += g.at(i);
        }
        if (track(b)) {
            Tensor& gb = grad_ref(b);
            for (size_t i = 0; i < g.numel(); ++i) gb.at(i) -= g.at(i);
        }
    });
}

NodeId Tape::scale(NodeId a, double c) {
    Tensor out = value(a);
    for (double& v : out.data) v *= c;
    NodeId id = nodes_.size();
    return push(std::move(out), track(a), [this, a, id, c] {
        const Tensor& g = grad_ref(id);
        Tensor& ga = grad_ref(a);
        for (size_t i = 0; i < g.numel(); ++i) ga.at(i) += c * g.at(i);
    });
}

NodeId Tape::add_row_broadcast(NodeId mat, NodeId vec) {
    const Tensor& m = value(mat);
    const Tensor& v = value(vec);
    if (m.ndim() != 2 || v.ndim() != 1 || v.numel() != m.cols())
        throw std::invalid_argument("add_row_broadcast: shape mismatch");
    Tensor out = m;
    for (size_t i = 0; i < m.rows(); ++i) {
        double* r = out.row_ptr(i);
        for (size_t j = 0; j < m.cols(); ++j) r[j] += v.at(j);
    }
    NodeId id = nodes_.size();
    return push(std::move(out), track(mat) || track(vec), [this, mat, vec, id] {
        const Tensor& g = grad_ref(id);
        if (track(mat)) {
            Tensor& mg = grad_ref(mat);
            for (size_t i = 0; i < g.numel(); ++i) mg.at(i) += g.at(i);
        }
        if (track(vec)) {
            Tensor& vg = grad_ref(vec);
            for (size_t i = 0; i < g.rows(); ++i) {
                const double* gr = g.row_ptr(i);
                for (size_t j = 0; j < g.cols(); ++j) vg.at(j) += gr[j];
            }
        }
    });
}

NodeId Tape::matmul(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (va.ndim() != 2 || vb.ndim() != 2 || va.cols() != vb.rows())
        throw std::invalid_argument("matmul: shape mismatch " + va.shape_str() + " . " + vb.shape_str());
    const size_t m = va.rows(), k = va.cols(), n = vb.cols();
    Tensor out({m, n});
    kernels::matmul_nn(va.data.data(), vb.data.data(), out.data.data(), m, k, n, false);
    NodeId id = nodes_.size();
    return push(std::move(out), track(a) || track(b), [this, a, b, id, m, k, n] {
        const Tensor& g = grad_ref(id);
        if (track(a)) // dA += g . B^T
            kernels::matmul_nt(g.data.data(), value(b).data.data(), grad_ref(a).data.data(), m, n, k, true);
        if (track(b)) // dB += A^T . g
            kernels::matmul_tn(value(a).data.data(), g.data.data(), grad_ref(b).data.data(), k, m, n, true);
    });
}

NodeId Tape::transpose(NodeId a) {
    const Tensor& v = value(a);
    if (v.ndim() != 2) throw std::invalid_argument("transpose: input must be 2-D");
    Tensor out({v.cols(), v.rows()});
    for (size_t i = 0; i < v.rows(); ++i)
        for (size_t j = 0; j < v.cols(); ++j) out.at(j, i) = v.at(i, j);
    NodeId id = nodes_.size();
    return push(std::move(out), track(a), [this, a, id] {
        const Tensor& g = grad_ref(id);
        Tensor& ag = grad_ref(a);
        for (size_t i = 0; i < g.rows(); ++i)
            for (size_t j = 0; j < g.cols(); ++j) ag.at(j, i) += g.at(i, j);
    });
}

NodeId Tape::affine_vec(NodeId w, NodeId x, NodeId b) {
    const Tensor& vw = value(w);
    const Tensor& vx = value(x);
    const Tensor& vb = value(b);
    if (vw.ndim() != 2 || vx.ndim() != 1 || vb.ndim() != 1 || vw.cols() != vx.numel() ||
        vw.rows() != vb.numel())
        throw std::invalid_argument("affine_vec: shape mismatch");
    const size_t out_n = vw.rows(), in_n = vw.cols();
    Tensor out({out_n});
    for (size_t o = 0; o < out_n; ++o) {
        const double* wr = vw.row_ptr(o);
        double acc = vb.at(o);
        for (size_t i = 0; i < in_n; ++i) acc += wr[i] * vx.at(i);
        out.at(o) = acc;
    }
    NodeId id = nodes_.size();
    return push(std::move(out), track(w) || track(x) || track(b), [this, w, x, b, id, out_n, in_n] {
        const Tensor& g = grad_ref(id);
        const Tensor& vx2 = value(x);
        const Tensor& vw2 = value(w);
        if (track(w)) {
            Tensor& wg = grad_ref(w);
            for (size_t o = 0; o < out_n; ++o) {
                double* wr = wg.row_ptr(o);
                const double go = g.at(o);
                for (size_t i = 0; i < in_n; ++i) wr[i] += go * vx2.at(i);
            }
        }
        if (track(x)) {
            Tensor& xg = grad_ref(x);
            for (size_t o = 0; o < out_n; ++o) {
                const double* wr = vw2.row_ptr(o);
                const double go = g.at(o);
                for (size_t i = 0; i < in_n; ++i) xg.at(i) += go * wr[i];
            }
        }
        if (track(b)) {
            Tensor& bg = grad_ref(b);
            for (size_t o = 0; o < out_n; ++o) bg.at(o) += g.at(o);
        }
    });
}

NodeId Tape::combine_scalars(const std::vector<NodeId>& xs, const std::vector<double>& coeffs) {
    if (xs.empty() || xs.size() != coeffs.size())
        throw std::invalid_argument("combine_scalars: size mismatch");
    double acc = 0.0;
    bool needs = false;
    for (size_t i = 0; i < xs.size(); ++i) {
        acc += coeffs[i] * value(xs[i]).item();
        needs = needs || track(xs[i]);
    }
    NodeId id = nodes_.size();
    return push(Tensor::scalar(acc), needs, [this, id, xs, coeffs] {
        const double g = grad_ref(id).at(0);
        for (size_t i = 0; i < xs.size(); ++i)
            if (track(xs[i])) grad_ref(xs[i]).at(0) += coeffs[i] * g;
    });
}

NodeId Tape::sum_elements(NodeId a) {
    const Tensor& v = value(a);
    double acc = 0.0;
    for (double x : v.data) acc += x;
    NodeId id = nodes_.size();
    return push(Tensor::scalar(acc), track(a), [this, a, id] {
        const double g = grad_ref(id).at(0);
        Tensor& ag = grad_ref(a);
        for (double& x : ag.data) x += g;
    });
}

NodeId Tape::gelu(NodeId a) {
    Tensor out = value(a);
    for (double& v : out.data) v = kernels::gelu(v);
    NodeId id = nodes_.size();
    return push(std::move(out), track(a), [this, a, id] {
        const Tensor& g = grad_ref(id);
        const Tensor& x = value(a);
        Tensor& ag = grad_ref(a);
        for (size_t i = 0; i < g.numel(); ++i) ag.at(i) += g.at(i) * kernels::gelu_derivative(x.at(i));
    });
}

NodeId Tape::dropout(NodeId a, double rate, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0,1)");
    if (rate == 0.0) return a;
    const Tensor& v = value(a);
    auto mask = std::make_shared<std::vector<double>>(v.numel());
    const double keep_scale = 1.0 / (1.0 - rate);
    Tensor out = v;
    for (size_t i = 0; i < v.numel(); ++i) {
        (*mask)[i] = rng.uniform() < rate ? 0.0 : keep_scale;
        out.at(i) *= (*mask)[i];
    }
    NodeId id = nodes_.size();
    return push(std::move(out), track(a), [this, a, id, mask] {
        const Tensor& g = grad_ref(id);
        Tensor& ag = grad_ref(a);
        for (size_t i = 0; i < g.numel(); ++i) ag.at(i) += g.at(i) * (*mask)[i];
    });
}

NodeId Tape::add_relative_bias(NodeId scores, NodeId bias, size_t radius) {
    const Tensor& s = value(scores);
    const Tensor& b = value(bias);
    if (s.ndim() != 2 || s.rows() != s.cols())
        throw std::invalid_argument("add_relative_bias: scores must be square");
    if (b.ndim() != 1 || b.numel() != 2 * radius + 1)
        throw std::invalid_argument("add_relative_bias: bias must have length 2*radius+1");
    const auto r = static_cast<long long>(radius);
    auto bucket = [r](size_t i, size_t j) {
        long long d = static_cast<long long>(j) - static_cast<long long>(i);
        d = std::max(-r, std::min(r, d));
        return static_cast<size_t>(d + r);
    };
    Tensor out = s;
    for (size_t i = 0; i < s.rows(); ++i)
        for (size_t j = 0; j < s.cols(); ++j) out.at(i, j) += b.at(bucket(i, j));
    NodeId id = nodes_.size();
    return push(std::move(out), track(scores) || track(bias), [this, scores, bias, id, bucket] {
        const Tensor& g = grad_ref(id);
        if (track(scores)) {
            Tensor& sg = grad_ref(scores);
            for (size_t i = 0; i < g.numel(); ++i) sg.at(i) += g.at(i);
        }
        if (track(bias)) {
            Tensor& bg = grad_ref(bias);
            for (size_t i = 0; i < g.rows(); ++i)
                for (size_t j = 0; j < g.cols(); ++j) bg.at(bucket(i, j)) += g.at(i, j);
        }
    });
}

NodeId Tape::softmax_rows(NodeId a) {
    const Tensor& v = value(a);
    if (v.ndim() != 2) throw std::invalid_argument("softmax_rows: input must be 2-D");
    Tensor out = v;
    for (size_t i = 0; i < out.rows(); ++i) kernels::softmax_row(out.row_ptr(i), out.cols());
    NodeId id = nodes_.size();
    return push(std::move(out), track(a), [this, a, id] {
        const Tensor& g = grad_ref(id);
        const Tensor& y = value(id);
        Tensor& ag = grad_ref(a);
        for (size_t i = 0; i < y.rows(); ++i) {
            const double* yr = y.row_ptr(i);
            const double* gr = g.row_ptr(i);
            double dot = 0.0;
            for (size_t j = 0; j < y.cols(); ++j) dot += yr[j] * gr[j];
            double* ar = ag.row_ptr(i);
            for (size_t j = 0; j < y.cols(); ++j) ar[j] += yr[j] * (gr[j] - dot);
        }
    });
}

NodeId Tape::softmax_vec(NodeId a) {
    const Tensor& v = value(a);
    if (v.ndim() != 1 || v.numel() == 0)
        throw std::domain_error("softmax_vec: input must be a non-empty 1-D tensor");
    Tensor out = v;
    kernels::softmax_row(out.data.data(), out.numel());
    NodeId id = nodes_.size();
    return push(std::move(out), track(a), [this, a, id] {
        const Tensor& g = grad_ref(id);
        const Tensor& y = value(id);
        Tensor& ag = grad_ref(a);
        double dot = 0.0;
        for (size_t j = 0; j < y.numel(); ++j) dot += y.at(j) * g.at(j);
        for (size_t j = 0; j < y.numel(); ++j) ag.at(j) += y.at(j) * (g.at(j) - dot);
    });
}

NodeId Tape::layer_norm_rows(NodeId x, NodeId gain, NodeId bias, double eps) {
    const Tensor& v = value(x);
    const Tensor& g = value(gain);
    const Tensor& b = value(bias);
    if (v.ndim() != 2 || g.numel() != v.cols() || b.numel() != v.cols())
        throw std::invalid_argument("layer_norm_rows: shape mismatch");
    const size_t m = v.rows(), d = v.cols();
    Tensor out({m, d});
    // Cache normalized activations and inverse stddev for the backward pass.
    auto xhat = std::make_shared<Tensor>(Tensor({m, d}));
    auto inv_sigma = std::make_shared<std::vector<double>>(m);
    for (size_t i = 0; i < m; ++i) {
        const double* r = v.row_ptr(i);
        double mean = 0.0;
        for (size_t j = 0; j < d; ++j) mean += r[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (size_t j = 0; j < d; ++j) {
            const double c = r[j] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_sigma)[i] = is;
        double* hr = xhat->row_ptr(i);
        double* orow = out.row_ptr(i);
        for (size_t j = 0; j < d; ++j) {
            hr[j] = (r[j] - mean) * is;
            orow[j] = g.at(j) * hr[j] + b.at(j);
        }
    }
    NodeId id = nodes_.size();
    return push(std::move(out), track(x) || track(gain) || track(bias),
                [this, x, gain, bias, id, m, d, xhat, inv_sigma] {
        const Tensor& go = grad_ref(id);
        const Tensor& gv = value(gain);
        for (size_t i = 0; i < m; ++i) {
            const double* gr = go.row_ptr(i);
            const double* hr = xhat->row_ptr(i);
            if (track(gain)) {
                Tensor& gg = grad_ref(gain);
                for (size_t j = 0; j < d; ++j) gg.at(j) += gr[j] * hr[j];
            }
            if (track(bias)) {
                Tensor& bg = grad_ref(bias);
                for (size_t j = 0; j < d; ++j) bg.at(j) += gr[j];
            }
            if (track(x)) {
                double mean_gy = 0.0, mean_gyh = 0.0;
                for (size_t j = 0; j < d; ++j) {
                    const double gy = gr[j] * gv.at(j);
                    mean_gy += gy;
                    mean_gyh += gy * hr[j];
                }
                mean_gy /= static_cast<double>(d);
                mean_gyh /= static_cast<double>(d);
                Tensor& xg = grad_ref(x);
                double* xr = xg.row_ptr(i);
                const double is = (*inv_sigma)[i];
                for (size_t j = 0; j < d; ++j) {
                    const double gy = gr[j] * gv.at(j);
                    xr[j] += is * (gy - mean_gy - hr[j] * mean_gyh);
                }
            }
        }
    });
}

NodeId Tape::mean_rows_range(NodeId a, size_t r0, size_t r1) {
    const Tensor& v = value(a);
    Tensor out = mean_pool(v, r0, r1);
    NodeId id = nodes_.size();
    const double inv = 1.0 / static_cast<double>(r1 - r0 + 1);
    return push(std::move(out), track(a), [this, a, id, r0, r1, inv] {
        const Tensor& g = grad_ref(id);
        Tensor& ag = grad_ref(a);
        for (size_t r = r0; r <= r1; ++r) {
            double* ar = ag.row_ptr(r);
            for (size_t j = 0; j < g.numel(); ++j) ar[j] += inv * g.at(j);
        }
    });
}

NodeId Tape::cosine(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    const double c = cosine_similarity(va, vb);
    double na2 = 0.0, nb2 = 0.0;
    for (size_t i = 0; i < va.numel(); ++i) {
        na2 += va.at(i) * va.at(i);
        nb2 += vb.at(i) * vb.at(i);
    }
    const double na = std::sqrt(na2), nb = std::sqrt(nb2);
    NodeId id = nodes_.size();
    return push(Tensor::scalar(c), track(a) || track(b), [this, a, b, id, c, na, nb] {
        const double g = grad_ref(id).at(0);
        const Tensor& va2 = value(a);
        const Tensor& vb2 = value(b);
        if (track(a)) {
            Tensor& ga = grad_ref(a);
            for (size_t i = 0; i < va2.numel(); ++i)
                ga.at(i) += g * (vb2.at(i) / (na * nb) - c * va2.at(i) / (na * na));
        }
        if (track(b)) {
            Tensor& gb = grad_ref(b);
            for (size_t i = 0; i < vb2.numel(); ++i)
                gb.at(i) += g * (va2.at(i) / (na * nb) - c * vb2.at(i) / (nb * nb));
        }
    });
}

NodeId Tape::ce_from_logits(NodeId logits, size_t target) {
    const Tensor& l = value(logits);
    if (l.ndim() != 1 || target >= l.numel())
        throw std::invalid_argument("ce_from_logits: bad logits/target");
    double mx = l.at(0);
    for (size_t i = 1; i < l.numel(); ++i) mx = std::max(mx, l.at(i));
    double sum = 0.0;
    for (size_t i = 0; i < l.numel(); ++i) sum += std::exp(l.at(i) - mx);
    const double loss = mx + std::log(sum) - l.at(target);
    NodeId id = nodes_.size();
    return push(Tensor::scalar(loss), track(logits), [this, logits, id, target] {
        const double g = grad_ref(id).at(0);
        const Tensor& l2 = value(logits);
        Tensor p = softmax(l2);
        Tensor& lg = grad_ref(logits);
        for (size_t i = 0; i < l2.numel(); ++i)
            lg.at(i) += g * (p.at(i) - (i == target ? 1.0 : 0.0));
    });
}

NodeId Tape::ce_from_probs(NodeId probs, size_t target, bool* clamped) {
    const Tensor& p = value(probs);
    CrossEntropyResult r = cross_entropy(p, target);
    if (clamped) *clamped = r.clamped;
    NodeId id = nodes_.size();
    const bool was_clamped = r.clamped;
    return push(Tensor::scalar(r.value), track(probs), [this, probs, id, target, was_clamped] {
        if (was_clamped) return; // flat region below the floor
        const double g = grad_ref(id).at(0);
        grad_ref(probs).at(target) += -g / value(probs).at(target);
    });
}

NodeId Tape::weighted_lse(NodeId scores, std::vector<double> weights) {
    const Tensor& s = value(scores);
    if (s.ndim() != 1 || s.numel() != weights.size())
        throw std::invalid_argument("weighted_lse: size mismatch");
    double mx = -std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < s.numel(); ++i)
        if (weights[i] > 0.0) mx = std::max(mx, s.at(i));
    if (!std::isfinite(mx)) throw std::invalid_argument("weighted_lse: all weights zero");
    double denom = 0.0;
    for (size_t i = 0; i < s.numel(); ++i)
        if (weights[i] > 0.0) denom += weights[i] * std::exp(s.at(i) - mx);
    const double out = mx + std::log(denom);
    NodeId id = nodes_.size();
    return push(Tensor::scalar(out), track(scores),
                [this, scores, id, mx, denom, weights = std::move(weights)] {
        const double g = grad_ref(id).at(0);
        const Tensor& s2 = value(scores);
        Tensor& sg = grad_ref(scores);
        for (size_t i = 0; i < s2.numel(); ++i)
            if (weights[i] > 0.0)
                sg.at(i) += g * weights[i] * std::exp(s2.at(i) - mx) / denom;
    });
}

const Tensor& Tape::grad(NodeId id) const {
    if (!ran_backward_) throw std::logic_error("Tape::grad before backward()");
    return nodes_[id].grad;
}

Tensor Tape::grad_of(const Tensor& external) const {
    if (!ran_backward_) throw std::logic_error("Tape::grad_of before backward()");
    Tensor acc = Tensor::zeros(external.shape);
    for (const auto& [id, ptr] : param_bindings_) {
        if (ptr != &external) continue;
        const Tensor& g = nodes_[id].grad;
        for (size_t i = 0; i < acc.numel(); ++i) acc.at(i) += g.at(i);
    }
    return acc;
}

void Tape::backward(NodeId loss) {
    if (!grad_enabled_) throw std::logic_error("Tape::backward on a no-grad tape");
    if (value(loss).numel() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got shape " + value(loss).shape_str());
    for (Node& n : nodes_)
        if (n.needs_grad) n.grad = Tensor::zeros(n.value.shape);
    if (!nodes_[loss].needs_grad)
        nodes_[loss].grad = Tensor::zeros(nodes_[loss].value.shape);
    nodes_[loss].grad.at(0) = 1.0;
    ran_backward_ = true;
    for (size_t i = loss + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.needs_grad && n.back) n.back();
    }
}

} // namespace relcl
