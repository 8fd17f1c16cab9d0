#include "srs/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>

namespace srs {

Var Tape::leaf(Tensor value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::make(Tensor value, std::initializer_list<Var> parents, BackFn back) {
    return make(std::move(value), std::vector<Var>(parents), std::move(back));
}

Var Tape::make(Tensor value, const std::vector<Var>& parents, BackFn back) {
    bool rg = false;
    for (const Var& p : parents) {
        if (p.tape() != this) throw DimensionError("op inputs live on different tapes");
        rg = rg || nodes_[static_cast<std::size_t>(p.id())].requires_grad;
    }
    Node n;
    n.value = std::move(value);
    n.requires_grad = rg;
    if (rg) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Tensor& Tape::grad_buf(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty() && n.value.size() > 0) n.grad = Tensor::zeros(n.value.shape());
    return n.grad;
}

bool Tape::has_grad(int id) const { return !nodes_[static_cast<std::size_t>(id)].grad.empty(); }

void Tape::backward(const Var& root) {
    if (root.value().size() != 1) throw DimensionError("backward() root must be scalar");
    backward(root, Tensor::scalar(1.0));
}

void Tape::backward(const Var& root, const Tensor& seed) {
    backward_multi({{root, seed}});
}

void Tape::backward_multi(const std::vector<std::pair<Var, Tensor>>& seeds) {
    int top = -1;
    for (const auto& [v, seed] : seeds) {
        if (v.tape() != this) throw DimensionError("backward root on wrong tape");
        if (!seed.same_shape(v.value())) throw DimensionError("backward seed shape mismatch");
        Tensor& g = grad_buf(v.id());
        for (int i = 0; i < seed.size(); ++i) g[i] += seed[i];
        top = std::max(top, v.id());
    }
    sweep(top);
}

void Tape::sweep(int from_id) {
    for (int id = from_id; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.requires_grad || n.grad.empty() || !n.back) continue;
        n.back(*this, n.grad);
    }
}

Tensor Tape::grad_or_zeros(const Var& v) const {
    const Node& n = nodes_[static_cast<std::size_t>(v.id())];
    if (n.grad.empty()) return Tensor::zeros(n.value.shape());
    return n.grad;
}

namespace ops {
namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a.value().same_shape(b.value()))
        throw DimensionError(std::string(op) + ": shape mismatch " + a.value().shape_str() +
                             " vs " + b.value().shape_str());
}

Tape& tape_of(const Var& v) {
    if (!v.valid()) throw DimensionError("operation on invalid Var");
    return *v.tape();
}

void accum(Tape& t, const Var& p, const Tensor& contrib) {
    if (!t.requires_grad(p.id())) return;
    Tensor& g = t.grad_buf(p.id());
    for (int i = 0; i < contrib.size(); ++i) g[i] += contrib[i];
}

}  // namespace

Var add(Var a, Var b) {
    check_same_shape(a, b, "add");
    Tape& t = tape_of(a);
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (int i = 0; i < out.size(); ++i) out[i] += bv[i];
    return t.make(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
        accum(tp, a, g);
        accum(tp, b, g);
    });
}

Var sub(Var a, Var b) {
    check_same_shape(a, b, "sub");
    Tape& t = tape_of(a);
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (int i = 0; i < out.size(); ++i) out[i] -= bv[i];
    return t.make(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
        accum(tp, a, g);
        if (tp.requires_grad(b.id())) {
            Tensor& gb = tp.grad_buf(b.id());
            for (int i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
    });
}

Var mul(Var a, Var b) {
    check_same_shape(a, b, "mul");
    Tape& t = tape_of(a);
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (int i = 0; i < out.size(); ++i) out[i] *= bv[i];
    return t.make(std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
        if (tp.requires_grad(a.id())) {
            const Tensor& bv2 = b.value();
            Tensor& ga = tp.grad_buf(a.id());
            for (int i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
        }
        if (tp.requires_grad(b.id())) {
            const Tensor& av2 = a.value();
            Tensor& gb = tp.grad_buf(b.id());
            for (int i = 0; i < g.size(); ++i) gb[i] += g[i] * av2[i];
        }
    });
}

Var scale(Var a, double c) {
    Tape& t = tape_of(a);
    Tensor out = a.value();
    for (int i = 0; i < out.size(); ++i) out[i] *= c;
    return t.make(std::move(out), {a}, [a, c](Tape& tp, const Tensor& g) {
        if (tp.requires_grad(a.id())) {
            Tensor& ga = tp.grad_buf(a.id());
            for (int i = 0; i < g.size(); ++i) ga[i] += c * g[i];
        }
    });
}

Var add_scalar(Var a, double c) {
    Tape& t = tape_of(a);
    Tensor out = a.value();
    for (int i = 0; i < out.size(); ++i) out[i] += c;
    return t.make(std::move(out), {a},
                  [a](Tape& tp, const Tensor& g) { accum(tp, a, g); });
}

Var relu(Var a) {
    Tape& t = tape_of(a);
    Tensor out = a.value();
    for (int i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
    return t.make(std::move(out), {a}, [a](Tape& tp, const Tensor& g) {
        if (!tp.requires_grad(a.id())) return;
        const Tensor& av = a.value();
        Tensor& ga = tp.grad_buf(a.id());
        for (int i = 0; i < g.size(); ++i)
            if (av[i] > 0.0) ga[i] += g[i];
    });
}

Var sigmoid(Var a) {
    Tape& t = tape_of(a);
    auto y = std::make_shared<Tensor>(a.value());
    for (int i = 0; i < y->size(); ++i) (*y)[i] = 1.0 / (1.0 + std::exp(-(*y)[i]));
    return t.make(*y, {a}, [a, y](Tape& tp, const Tensor& g) {
        if (!tp.requires_grad(a.id())) return;
        Tensor& ga = tp.grad_buf(a.id());
        for (int i = 0; i < g.size(); ++i) ga[i] += g[i] * (*y)[i] * (1.0 - (*y)[i]);
    });
}

Var tanh(Var a) {
    Tape& t = tape_of(a);
    auto y = std::make_shared<Tensor>(a.value());
    for (int i = 0; i < y->size(); ++i) (*y)[i] = std::tanh((*y)[i]);
    return t.make(*y, {a}, [a, y](Tape& tp, const Tensor& g) {
        if (!tp.requires_grad(a.id())) return;
        Tensor& ga = tp.grad_buf(a.id());
        for (int i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - (*y)[i] * (*y)[i]);
    });
}

Var sum(Var a) {
    Tape& t = tape_of(a);
    double s = 0.0;
    const Tensor& av = a.value();
    for (int i = 0; i < av.size(); ++i) s += av[i];
    return t.make(Tensor::scalar(s), {a}, [a](Tape& tp, const Tensor& g) {
        if (!tp.requires_grad(a.id())) return;
        Tensor& ga = tp.grad_buf(a.id());
        for (int i = 0; i < ga.size(); ++i) ga[i] += g[0];
    });
}

Var mean(Var a) {
    if (a.value().size() == 0) throw DimensionError("mean of empty tensor");
    return scale(sum(a), 1.0 / a.value().size());
}

Var matmul(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0))
        throw DimensionError("matmul: incompatible shapes " + av.shape_str() + " x " + bv.shape_str());
    const int m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    Tensor out({m, n});
    for (int i = 0; i < m; ++i)
        for (int kk = 0; kk < k; ++kk) {
            const double aik = av.at(i, kk);
            for (int j = 0; j < n; ++j) out.at(i, j) += aik * bv.at(kk, j);
        }
    Tape& t = tape_of(a);
    return t.make(std::move(out), {a, b}, [a, b, m, k, n](Tape& tp, const Tensor& g) {
        const Tensor& av2 = a.value();
        const Tensor& bv2 = b.value();
        if (tp.requires_grad(a.id())) {
            Tensor& ga = tp.grad_buf(a.id());  // g (m,n) * B^T (n,k)
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) {
                    const double gij = g.at(i, j);
                    for (int kk = 0; kk < k; ++kk) ga.at(i, kk) += gij * bv2.at(kk, j);
                }
        }
        if (tp.requires_grad(b.id())) {
            Tensor& gb = tp.grad_buf(b.id());  // A^T (k,m) * g (m,n)
            for (int i = 0; i < m; ++i)
                for (int kk = 0; kk < k; ++kk) {
                    const double aik = av2.at(i, kk);
                    for (int j = 0; j < n; ++j) gb.at(kk, j) += aik * g.at(i, j);
                }
        }
    });
}

Var matmul_nt(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(1))
        throw DimensionError("matmul_nt: incompatible shapes " + av.shape_str() + " x " + bv.shape_str());
    const int m = av.dim(0), k = av.dim(1), n = bv.dim(0);
    Tensor out({m, n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int kk = 0; kk < k; ++kk) s += av.at(i, kk) * bv.at(j, kk);
            out.at(i, j) = s;
        }
    Tape& t = tape_of(a);
    return t.make(std::move(out), {a, b}, [a, b, m, k, n](Tape& tp, const Tensor& g) {
        const Tensor& av2 = a.value();
        const Tensor& bv2 = b.value();
        if (tp.requires_grad(a.id())) {
            Tensor& ga = tp.grad_buf(a.id());  // g (m,n) * B (n,k)
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) {
                    const double gij = g.at(i, j);
                    for (int kk = 0; kk < k; ++kk) ga.at(i, kk) += gij * bv2.at(j, kk);
                }
        }
        if (tp.requires_grad(b.id())) {
            Tensor& gb = tp.grad_buf(b.id());  // g^T (n,m) * A (m,k)
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) {
                    const double gij = g.at(i, j);
                    for (int kk = 0; kk < k; ++kk) gb.at(j, kk) += gij * av2.at(i, kk);
                }
        }
    });
}

Var transpose(Var a) {
    const Tensor& av = a.value();
    if (av.rank() != 2) throw DimensionError("transpose: rank-2 required");
    const int m = av.dim(0), n = av.dim(1);
    Tensor out({n, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.at(j, i) = av.at(i, j);
    Tape& t = tape_of(a);
    return t.make(std::move(out), {a}, [a, m, n](Tape& tp, const Tensor& g) {
        if (!tp.requires_grad(a.id())) return;
        Tensor& ga = tp.grad_buf(a.id());
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) ga.at(i, j) += g.at(j, i);
    });
}

Var reshape(Var a, std::vector<int> shape) {
    Tape& t = tape_of(a);
    Tensor out = a.value().reshaped(std::move(shape));
    return t.make(std::move(out), {a}, [a](Tape& tp, const Tensor& g) {
        if (!tp.requires_grad(a.id())) return;
        Tensor& ga = tp.grad_buf(a.id());
        for (int i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

Var linear(Var x, Var w, Var b) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    const Tensor& bv = b.value();
    if (wv.rank() != 2) throw DimensionError("linear: weight must be rank-2");
    const int out_dim = wv.dim(0), in_dim = wv.dim(1);
    if (bv.size() != out_dim) throw DimensionError("linear: bias length mismatch");

    if (xv.rank() == 1) {
        if (xv.size() != in_dim)
            throw DimensionError("linear: input length " + std::to_string(xv.size()) +
                                 " != " + std::to_string(in_dim));
        Tensor out({out_dim});
        for (int o = 0; o < out_dim; ++o) {
            double s = bv[o];
            const double* wrow = wv.data() + static_cast<std::size_t>(o) * in_dim;
            for (int i = 0; i < in_dim; ++i) s += wrow[i] * xv[i];
            out[o] = s;
        }
        Tape& t = tape_of(x);
        return t.make(std::move(out), {x, w, b}, [x, w, b, out_dim, in_dim](Tape& tp, const Tensor& g) {
            const Tensor& xv2 = x.value();
            const Tensor& wv2 = w.value();
            if (tp.requires_grad(x.id())) {
                Tensor& gx = tp.grad_buf(x.id());
                for (int o = 0; o < out_dim; ++o) {
                    const double go = g[o];
                    const double* wrow = wv2.data() + static_cast<std::size_t>(o) * in_dim;
                    for (int i = 0; i < in_dim; ++i) gx[i] += go * wrow[i];
                }
            }
            if (tp.requires_grad(w.id())) {
                Tensor& gw = tp.grad_buf(w.id());
                for (int o = 0; o < out_dim; ++o) {
                    const double go = g[o];
                    double* grow = gw.data() + static_cast<std::size_t>(o) * in_dim;
                    for (int i = 0; i < in_dim; ++i) grow[i] += go * xv2[i];
                }
            }
            if (tp.requires_grad(b.id())) {
                Tensor& gb = tp.grad_buf(b.id());
                for (int o = 0; o < out_dim; ++o) gb[o] += g[o];
            }
        });
    }

    if (xv.rank() != 2 || xv.dim(1) != in_dim)
        throw DimensionError("linear: input shape " + xv.shape_str() + " incompatible with weight " +
                             wv.shape_str());
    const int rows = xv.dim(0);
    Tensor out({rows, out_dim});
    for (int r = 0; r < rows; ++r) {
        const double* xrow = xv.data() + static_cast<std::size_t>(r) * in_dim;
        double* orow = out.data() + static_cast<std::size_t>(r) * out_dim;
        for (int o = 0; o < out_dim; ++o) {
            double s = bv[o];
            const double* wrow = wv.data() + static_cast<std::size_t>(o) * in_dim;
            for (int i = 0; i < in_dim; ++i) s += wrow[i] * xrow[i];
            orow[o] = s;
        }
    }
    Tape& t = tape_of(x);
    return t.make(std::move(out), {x, w, b}, [x, w, b, rows, out_dim, in_dim](Tape& tp, const Tensor& g) {
        const Tensor& xv2 = x.value();
        const Tensor& wv2 = w.value();
        if (tp.requires_grad(x.id())) {
            Tensor& gx = tp.grad_buf(x.id());
            for (int r = 0; r < rows; ++r) {
                const double* grow = g.data() + static_cast<std::size_t>(r) * out_dim;
                double* gxrow = gx.data() + static_cast<std::size_t>(r) * in_dim;
                for (int o = 0; o < out_dim; ++o) {
                    const double go = grow[o];
                    const double* wrow = wv2.data() + static_cast<std::size_t>(o) * in_dim;
                    for (int i = 0; i < in_dim; ++i) gxrow[i] += go * wrow[i];
                }
            }
        }
        if (tp.requires_grad(w.id())) {
            Tensor& gw = tp.grad_buf(w.id());
            for (int r = 0; r < rows; ++r) {
                const double* grow = g.data() + static_cast<std::size_t>(r) * out_dim;
                const double* xrow = xv2.data() + static_cast<std::size_t>(r) * in_dim;
                for (int o = 0; o < out_dim; ++o) {
                    const double go = grow[o];
                    double* gwrow = gw.data() + static_cast<std::size_t>(o) * in_dim;
                    for (int i = 0; i < in_dim; ++i) gwrow[i] += go * xrow[i];
                }
            }
        }
        if (tp.requires_grad(b.id())) {
            Tensor& gb = tp.grad_buf(b.id());
            for (int r = 0; r < rows; ++r)
                for (int o = 0; o < out_dim; ++o) gb[o] += g.at(r, o);
        }
    });
}

Var concat(const std::vector<Var>& parts) {
    if (parts.empty()) throw DimensionError("concat of zero tensors");
    Tape& t = tape_of(parts[0]);
    int total = 0;
    for (const Var& p : parts) {
        if (p.value().rank() != 1) throw DimensionError("concat: rank-1 inputs required");
        total += p.value().size();
    }
    Tensor out({total});
    int off = 0;
    for (const Var& p : parts) {
        const Tensor& pv = p.value();
        for (int i = 0; i < pv.size(); ++i) out[off + i] = pv[i];
        off += pv.size();
    }
    std::vector<Var> parents = parts;
    return t.make(std::move(out), parents, [parents](Tape& tp, const Tensor& g) {
        int off2 = 0;
        for (const Var& p : parents) {
            const int n = p.value().size();
            if (tp.requires_grad(p.id())) {
                Tensor& gp = tp.grad_buf(p.id());
                for (int i = 0; i < n; ++i) gp[i] += g[off2 + i];
            }
            off2 += n;
        }
    });
}

Var concat_cols(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.rank() != 2 || bv.rank() != 2 || av.dim(0) != bv.dim(0))
        throw DimensionError("concat_cols: row count mismatch");
    const int rows = av.dim(0), ca = av.dim(1), cb = bv.dim(1);
    Tensor out({rows, ca + cb});
    for (int r = 0; r < rows; ++r) {
        for (int j = 0; j < ca; ++j) out.at(r, j) = av.at(r, j);
        for (int j = 0; j < cb; ++j) out.at(r, ca + j) = bv.at(r, j);
    }
    Tape& t = tape_of(a);
    return t.make(std::move(out), {a, b}, [a, b, rows, ca, cb](Tape& tp, const Tensor& g) {
        if (tp.requires_grad(a.id())) {
            Tensor& ga = tp.grad_buf(a.id());
            for (int r = 0; r < rows; ++r)
                for (int j = 0; j < ca; ++j) ga.at(r, j) += g.at(r, j);
        }
        if (tp.requires_grad(b.id())) {
            Tensor& gb = tp.grad_buf(b.id());
            for (int r = 0; r < rows; ++r)
                for (int j = 0; j < cb; ++j) gb.at(r, j) += g.at(r, ca + j);
        }
    });
}

Var stack_rows(const std::vector<Var>& rows) {
    if (rows.empty()) throw DimensionError("stack_rows of zero rows");
    const int d = rows[0].value().size();
    for (const Var& r : rows)
        if (r.value().rank() != 1 || r.value().size() != d)
            throw DimensionError("stack_rows: inconsistent row lengths");
    const int n = static_cast<int>(rows.size());
    Tensor out({n, d});
    for (int r = 0; r < n; ++r) {
        const Tensor& rv = rows[static_cast<std::size_t>(r)].value();
        for (int j = 0; j < d; ++j) out.at(r, j) = rv[j];
    }
    Tape& t = tape_of(rows[0]);
    std::vector<Var> parents = rows;
    return t.make(std::move(out), parents, [parents, d](Tape& tp, const Tensor& g) {
        for (std::size_t r = 0; r < parents.size(); ++r) {
            const Var& p = parents[r];
            if (!tp.requires_grad(p.id())) continue;
            Tensor& gp = tp.grad_buf(p.id());
            for (int j = 0; j < d; ++j) gp[j] += g.at(static_cast<int>(r), j);
        }
    });
}

Var row(Var x, int i) {
    const Tensor& xv = x.value();
    if (xv.rank() != 2 || i < 0 || i >= xv.dim(0)) throw DimensionError("row: index out of range");
    const int d = xv.dim(1);
    Tensor out({d});
    for (int j = 0; j < d; ++j) out[j] = xv.at(i, j);
    Tape& t = tape_of(x);
    return t.make(std::move(out), {x}, [x, i, d](Tape& tp, const Tensor& g) {
        if (!tp.requires_grad(x.id())) return;
        Tensor& gx = tp.grad_buf(x.id());
        for (int j = 0; j < d; ++j) gx.at(i, j) += g[j];
    });
}

Var softmax(Var logits) {
    const Tensor& lv = logits.value();
    if (lv.rank() != 1 || lv.size() == 0) throw DimensionError("softmax: non-empty rank-1 input required");
    const int n = lv.size();
    double mx = lv[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, lv[i]);
    Tensor out({n});
    double z = 0.0;
    for (int i = 0; i < n; ++i) {
        out[i] = std::exp(lv[i] - mx);
        z += out[i];
    }
    for (int i = 0; i < n; ++i) out[i] /= z;
    Tape& t = tape_of(logits);
    auto y = std::make_shared<Tensor>(std::move(out));
    return t.make(*y, {logits}, [logits, y, n](Tape& tp, const Tensor& g) {
        if (!tp.requires_grad(logits.id())) return;
        double dot = 0.0;
        for (int i = 0; i < n; ++i) dot += g[i] * (*y)[i];
        Tensor& gl = tp.grad_buf(logits.id());
        for (int i = 0; i < n; ++i) gl[i] += (*y)[i] * (g[i] - dot);
    });
}

Var masked_softmax_rows(Var scores, const std::vector<std::uint8_t>& key_mask,
                        const std::vector<std::uint8_t>& query_mask) {
    const Tensor& sv = scores.value();
    if (sv.rank() != 2) throw DimensionError("masked_softmax_rows: rank-2 input required");
    const int m = sv.dim(0), n = sv.dim(1);
    if (static_cast<int>(key_mask.size()) != n || static_cast<int>(query_mask.size()) != m)
        throw DimensionError("masked_softmax_rows: mask length mismatch");
    Tensor out({m, n});
    for (int i = 0; i < m; ++i) {
        if (!query_mask[static_cast<std::size_t>(i)]) continue;  // dead row stays zero
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < n; ++j)
            if (key_mask[static_cast<std::size_t>(j)]) mx = std::max(mx, sv.at(i, j));
        if (!std::isfinite(mx)) throw DimensionError("masked_softmax_rows: no unmasked keys");
        double z = 0.0;
        for (int j = 0; j < n; ++j) {
            if (!key_mask[static_cast<std::size_t>(j)]) continue;
            const double e = std::exp(sv.at(i, j) - mx);
            out.at(i, j) = e;
            z += e;
        }
        for (int j = 0; j < n; ++j) out.at(i, j) /= z;
    }
    Tape& t = tape_of(scores);
    auto y = std::make_shared<Tensor>(std::move(out));
    return t.make(*y, {scores},
                  [scores, y, m, n, key_mask, query_mask](Tape& tp, const Tensor& g) {
                      if (!tp.requires_grad(scores.id())) return;
                      Tensor& gs = tp.grad_buf(scores.id());
                      for (int i = 0; i < m; ++i) {
                          if (!query_mask[static_cast<std::size_t>(i)]) continue;
                          double dot = 0.0;
                          for (int j = 0; j < n; ++j) dot += g.at(i, j) * y->at(i, j);
                          for (int j = 0; j < n; ++j) {
                              if (!key_mask[static_cast<std::size_t>(j)]) continue;
                              gs.at(i, j) += y->at(i, j) * (g.at(i, j) - dot);
                          }
                      }
                  });
}

namespace {

// Shared layer-norm forward/backward over `rows` rows of width n.
Var layer_norm_impl(Var x, Var gain, Var bias, double eps, int rows, int n) {
    const Tensor& xv = x.value();
    if (gain.value().size() != n || bias.value().size() != n)
        throw DimensionError("layer_norm: gain/bias length mismatch");
    if (n < 2) throw DimensionError("layer_norm: need at least 2 elements");
    const Tensor& gv = gain.value();
    const Tensor& bv = bias.value();
    Tensor out(xv.shape());
    auto xhat = std::make_shared<Tensor>(Tensor(xv.shape()));
    std::vector<double> inv_std(static_cast<std::size_t>(rows));
    for (int r = 0; r < rows; ++r) {
        const double* xr = xv.data() + static_cast<std::size_t>(r) * n;
        double mu = 0.0;
        for (int i = 0; i < n; ++i) mu += xr[i];
        mu /= n;
        double var = 0.0;
        for (int i = 0; i < n; ++i) var += (xr[i] - mu) * (xr[i] - mu);
        var /= n;
        const double s = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<std::size_t>(r)] = s;
        double* hr = xhat->data() + static_cast<std::size_t>(r) * n;
        double* orow = out.data() + static_cast<std::size_t>(r) * n;
        for (int i = 0; i < n; ++i) {
            hr[i] = (xr[i] - mu) * s;
            orow[i] = gv[i] * hr[i] + bv[i];
        }
    }
    Tape& t = tape_of(x);
    return t.make(std::move(out), {x, gain, bias},
                  [x, gain, bias, xhat, inv_std, rows, n](Tape& tp, const Tensor& g) {
                      const Tensor& gv2 = gain.value();
                      for (int r = 0; r < rows; ++r) {
                          const double* hr = xhat->data() + static_cast<std::size_t>(r) * n;
                          const double* gr = g.data() + static_cast<std::size_t>(r) * n;
                          if (tp.requires_grad(gain.id())) {
                              Tensor& gg = tp.grad_buf(gain.id());
                              for (int i = 0; i < n; ++i) gg[i] += gr[i] * hr[i];
                          }
                          if (tp.requires_grad(bias.id())) {
                              Tensor& gb = tp.grad_buf(bias.id());
                              for (int i = 0; i < n; ++i) gb[i] += gr[i];
                          }
                          if (tp.requires_grad(x.id())) {
                              // dxhat = g*gain; dx = s*(dxhat - mean(dxhat) - xhat*mean(dxhat*xhat))
                              double m1 = 0.0, m2 = 0.0;
                              for (int i = 0; i < n; ++i) {
                                  const double dh = gr[i] * gv2[i];
                                  m1 += dh;
                                  m2 += dh * hr[i];
                              }
                              m1 /= n;
                              m2 /= n;
                              const double s = inv_std[static_cast<std::size_t>(r)];
                              Tensor& gx = tp.grad_buf(x.id());
                              double* gxr = gx.data() + static_cast<std::size_t>(r) * n;
                              for (int i = 0; i < n; ++i)
                                  gxr[i] += s * (gr[i] * gv2[i] - m1 - hr[i] * m2);
                          }
                      }
                  });
}

}  // namespace

Var layer_norm(Var x, Var gain, Var bias, double eps) {
    if (x.value().rank() != 1) throw DimensionError("layer_norm: rank-1 input required");
    return layer_norm_impl(x, gain, bias, eps, 1, x.value().size());
}

Var layer_norm_rows(Var x, Var gain, Var bias, double eps) {
    if (x.value().rank() != 2) throw DimensionError("layer_norm_rows: rank-2 input required");
    return layer_norm_impl(x, gain, bias, eps, x.value().dim(0), x.value().dim(1));
}

Var dropout(Var x, Tensor keep_mask, double keep_prob) {
    if (!keep_mask.same_shape(x.value())) throw DimensionError("dropout: mask shape mismatch");
    if (keep_prob <= 0.0 || keep_prob > 1.0) throw DimensionError("dropout: keep_prob out of range");
    Tape& t = tape_of(x);
    Tensor out = x.value();
    const double inv = 1.0 / keep_prob;
    for (int i = 0; i < out.size(); ++i) out[i] *= keep_mask[i] * inv;
    auto mask = std::make_shared<Tensor>(std::move(keep_mask));
    return t.make(std::move(out), {x}, [x, mask, inv](Tape& tp, const Tensor& g) {
        if (!tp.requires_grad(x.id())) return;
        Tensor& gx = tp.grad_buf(x.id());
        for (int i = 0; i < g.size(); ++i) gx[i] += g[i] * (*mask)[i] * inv;
    });
}

Var gather_rows(Var table, std::vector<int> ids) {
    const Tensor& tv = table.value();
    if (tv.rank() != 2) throw DimensionError("gather_rows: table must be rank-2");
    const int v = tv.dim(0), d = tv.dim(1);
    for (int id : ids)
        if (id < 0 || id >= v) throw DimensionError("gather_rows: id out of range");
    const int n = static_cast<int>(ids.size());
    Tensor out({n, d});
    for (int r = 0; r < n; ++r) {
        const double* src = tv.data() + static_cast<std::size_t>(ids[static_cast<std::size_t>(r)]) * d;
        double* dst = out.data() + static_cast<std::size_t>(r) * d;
        for (int j = 0; j < d; ++j) dst[j] = src[j];
    }
    Tape& t = tape_of(table);
    return t.make(std::move(out), {table}, [table, ids = std::move(ids), d](Tape& tp, const Tensor& g) {
        if (!tp.requires_grad(table.id())) return;
        Tensor& gt = tp.grad_buf(table.id());
        for (std::size_t r = 0; r < ids.size(); ++r) {
            double* dst = gt.data() + static_cast<std::size_t>(ids[r]) * d;
            const double* src = g.data() + r * static_cast<std::size_t>(d);
            for (int j = 0; j < d; ++j) dst[j] += src[j];
        }
    });
}

Var mean_rows_masked(Var x, const std::vector<std::uint8_t>& row_mask) {
    const Tensor& xv = x.value();
    if (xv.rank() != 2 || static_cast<int>(row_mask.size()) != xv.dim(0))
        throw DimensionError("mean_rows_masked: mask length mismatch");
    const int rows = xv.dim(0), d = xv.dim(1);
    int cnt = 0;
    for (std::uint8_t m : row_mask) cnt += m ? 1 : 0;
    Tensor out({d});
    if (cnt > 0) {
        for (int r = 0; r < rows; ++r) {
            if (!row_mask[static_cast<std::size_t>(r)]) continue;
            for (int j = 0; j < d; ++j) out[j] += xv.at(r, j);
        }
        for (int j = 0; j < d; ++j) out[j] /= cnt;
    }
    Tape& t = tape_of(x);
    return t.make(std::move(out), {x}, [x, row_mask, rows, d, cnt](Tape& tp, const Tensor& g) {
        if (!tp.requires_grad(x.id()) || cnt == 0) return;
        Tensor& gx = tp.grad_buf(x.id());
        for (int r = 0; r < rows; ++r) {
            if (!row_mask[static_cast<std::size_t>(r)]) continue;
            for (int j = 0; j < d; ++j) gx.at(r, j) += g[j] / cnt;
        }
    });
}

Var vecmat(Var w, Var x) {
    const Tensor& wv = w.value();
    const Tensor& xv = x.value();
    if (wv.rank() != 1 || xv.rank() != 2 || wv.size() != xv.dim(0))
        throw DimensionError("vecmat: shapes " + wv.shape_str() + " x " + xv.shape_str());
    const int m = xv.dim(0), d = xv.dim(1);
    Tensor out({d});
    for (int k = 0; k < m; ++k) {
        const double wk = wv[k];
        const double* xrow = xv.data() + static_cast<std::size_t>(k) * d;
        for (int j = 0; j < d; ++j) out[j] += wk * xrow[j];
    }
    Tape& t = tape_of(w);
    return t.make(std::move(out), {w, x}, [w, x, m, d](Tape& tp, const Tensor& g) {
        const Tensor& wv2 = w.value();
        const Tensor& xv2 = x.value();
        if (tp.requires_grad(w.id())) {
            Tensor& gw = tp.grad_buf(w.id());
            for (int k = 0; k < m; ++k) {
                double s = 0.0;
                const double* xrow = xv2.data() + static_cast<std::size_t>(k) * d;
                for (int j = 0; j < d; ++j) s += g[j] * xrow[j];
                gw[k] += s;
            }
        }
        if (tp.requires_grad(x.id())) {
            Tensor& gx = tp.grad_buf(x.id());
            for (int k = 0; k < m; ++k) {
                const double wk = wv2[k];
                double* gxrow = gx.data() + static_cast<std::size_t>(k) * d;
                for (int j = 0; j < d; ++j) gxrow[j] += wk * g[j];
            }
        }
    });
}

Var conv2d_s2(Var img, Var weight, Var bias) {
    const Tensor& iv = img.value();
    const Tensor& wv = weight.value();
    const Tensor& bv = bias.value();
    if (iv.rank() != 3 || wv.rank() != 4 || wv.dim(2) != 3 || wv.dim(3) != 3)
        throw DimensionError("conv2d_s2: expects image (c,h,w) and weight (co,ci,3,3)");
    const int ci = iv.dim(0), h = iv.dim(1), w = iv.dim(2);
    const int co = wv.dim(0);
    if (wv.dim(1) != ci) throw DimensionError("conv2d_s2: channel mismatch");
    if (bv.size() != co) throw DimensionError("conv2d_s2: bias length mismatch");
    if (h % 2 != 0 || w % 2 != 0) throw DimensionError("conv2d_s2: even spatial extents required");
    const int oh = h / 2, ow = w / 2;

    Tensor out({co, oh, ow});
    const auto iat = [&](const double* base, int c, int y, int x) {
        return base[(static_cast<std::size_t>(c) * h + y) * w + x];
    };
    for (int c = 0; c < co; ++c) {
        double* oplane = out.data() + static_cast<std::size_t>(c) * oh * ow;
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                double s = bv[c];
                for (int cc = 0; cc < ci; ++cc) {
                    const double* wbase =
                        wv.data() + ((static_cast<std::size_t>(c) * ci + cc) * 3) * 3;
                    for (int ky = 0; ky < 3; ++ky) {
                        const int y = oy * 2 + ky - 1;
                        if (y < 0 || y >= h) continue;
                        for (int kx = 0; kx < 3; ++kx) {
                            const int x = ox * 2 + kx - 1;
                            if (x < 0 || x >= w) continue;
                            s += wbase[ky * 3 + kx] * iat(iv.data(), cc, y, x);
                        }
                    }
                }
                oplane[oy * ow + ox] = s;
            }
    }
    Tape& t = tape_of(img);
    return t.make(std::move(out), {img, weight, bias},
                  [img, weight, bias, ci, h, w, co, oh, ow](Tape& tp, const Tensor& g) {
                      const Tensor& iv2 = img.value();
                      const Tensor& wv2 = weight.value();
                      const bool want_img = tp.requires_grad(img.id());
                      const bool want_w = tp.requires_grad(weight.id());
                      const bool want_b = tp.requires_grad(bias.id());
                      Tensor* gi = want_img ? &tp.grad_buf(img.id()) : nullptr;
                      Tensor* gw = want_w ? &tp.grad_buf(weight.id()) : nullptr;
                      Tensor* gb = want_b ? &tp.grad_buf(bias.id()) : nullptr;
                      for (int c = 0; c < co; ++c) {
                          const double* gplane = g.data() + static_cast<std::size_t>(c) * oh * ow;
                          for (int oy = 0; oy < oh; ++oy)
                              for (int ox = 0; ox < ow; ++ox) {
                                  const double gv = gplane[oy * ow + ox];
                                  if (gv == 0.0) continue;
                                  if (want_b) (*gb)[c] += gv;
                                  for (int cc = 0; cc < ci; ++cc) {
                                      const std::size_t wbase =
                                          ((static_cast<std::size_t>(c) * ci + cc) * 3) * 3;
                                      for (int ky = 0; ky < 3; ++ky) {
                                          const int y = oy * 2 + ky - 1;
                                          if (y < 0 || y >= h) continue;
                                          for (int kx = 0; kx < 3; ++kx) {
                                              const int x = ox * 2 + kx - 1;
                                              if (x < 0 || x >= w) continue;
                                              const std::size_t ii =
                                                  (static_cast<std::size_t>(cc) * h + y) * w + x;
                                              if (want_w)
                                                  (*gw)[static_cast<int>(wbase) + ky * 3 + kx] +=
                                                      gv * iv2[static_cast<int>(ii)];
                                              if (want_img)
                                                  (*gi)[static_cast<int>(ii)] +=
                                                      gv * wv2[static_cast<int>(wbase) + ky * 3 + kx];
                                          }
                                      }
                                  }
                              }
                      }
                  });
}

Var adaptive_avg_pool(Var x, int p) {
    const Tensor& xv = x.value();
    if (xv.rank() != 3) throw DimensionError("adaptive_avg_pool: rank-3 input required");
    const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    if (p < 1 || p > h || p > w) throw DimensionError("adaptive_avg_pool: bad output size");
    Tensor out({c, p, p});
    for (int cc = 0; cc < c; ++cc)
        for (int i = 0; i < p; ++i) {
            const int y0 = i * h / p, y1 = (i + 1) * h / p;
            for (int j = 0; j < p; ++j) {
                const int x0 = j * w / p, x1 = (j + 1) * w / p;
                double s = 0.0;
                for (int y = y0; y < y1; ++y)
                    for (int xx = x0; xx < x1; ++xx)
                        s += xv[(cc * h + y) * w + xx];
                out[(cc * p + i) * p + j] = s / ((y1 - y0) * (x1 - x0));
            }
        }
    Tape& t = tape_of(x);
    return t.make(std::move(out), {x}, [x, p, c, h, w](Tape& tp, const Tensor& g) {
        if (!tp.requires_grad(x.id())) return;
        Tensor& gx = tp.grad_buf(x.id());
        for (int cc = 0; cc < c; ++cc)
            for (int i = 0; i < p; ++i) {
                const int y0 = i * h / p, y1 = (i + 1) * h / p;
                for (int j = 0; j < p; ++j) {
                    const int x0 = j * w / p, x1 = (j + 1) * w / p;
                    const double gv = g[(cc * p + i) * p + j] / ((y1 - y0) * (x1 - x0));
                    for (int y = y0; y < y1; ++y)
                        for (int xx = x0; xx < x1; ++xx)
                            gx[(cc * h + y) * w + xx] += gv;
                }
            }
    });
}

Var relation_matrix(Var grid, Var words, Var w, const std::vector<std::uint8_t>& word_mask) {
    const Tensor& gv = grid.value();
    const Tensor& hv = words.value();
    const Tensor& wv = w.value();
    if (gv.rank() != 2 || hv.rank() != 2 || gv.dim(1) != hv.dim(1))
        throw DimensionError("relation_matrix: grid/word width mismatch");
    const int k = gv.dim(0), tx = hv.dim(0), d = gv.dim(1);
    if (wv.size() != 3 * d) throw DimensionError("relation_matrix: w must have length 3*d");
    if (static_cast<int>(word_mask.size()) != tx)
        throw DimensionError("relation_matrix: mask length mismatch");

    const double* w1 = wv.data();
    const double* w2 = wv.data() + d;
    const double* w3 = wv.data() + 2 * d;
    // m[k][j] = w1.g_k + w2.h_j + w3.(g_k*h_j)
    std::vector<double> ga(static_cast<std::size_t>(k)), hb(static_cast<std::size_t>(tx));
    for (int kk = 0; kk < k; ++kk) {
        const double* gr = gv.data() + static_cast<std::size_t>(kk) * d;
        double s = 0.0;
        for (int i = 0; i < d; ++i) s += w1[i] * gr[i];
        ga[static_cast<std::size_t>(kk)] = s;
    }
    for (int j = 0; j < tx; ++j) {
        const double* hr = hv.data() + static_cast<std::size_t>(j) * d;
        double s = 0.0;
        for (int i = 0; i < d; ++i) s += w2[i] * hr[i];
        hb[static_cast<std::size_t>(j)] = s;
    }
    Tensor out({k, tx});
    for (int kk = 0; kk < k; ++kk) {
        const double* gr = gv.data() + static_cast<std::size_t>(kk) * d;
        for (int j = 0; j < tx; ++j) {
            if (!word_mask[static_cast<std::size_t>(j)]) continue;
            const double* hr = hv.data() + static_cast<std::size_t>(j) * d;
            double cross = 0.0;
            for (int i = 0; i < d; ++i) cross += w3[i] * gr[i] * hr[i];
            out.at(kk, j) = ga[static_cast<std::size_t>(kk)] + hb[static_cast<std::size_t>(j)] + cross;
        }
    }
    Tape& t = tape_of(grid);
    return t.make(std::move(out), {grid, words, w},
                  [grid, words, w, word_mask, k, tx, d](Tape& tp, const Tensor& g) {
                      const Tensor& gv2 = grid.value();
                      const Tensor& hv2 = words.value();
                      const Tensor& wv2 = w.value();
                      const double* w1 = wv2.data();
                      const double* w2 = wv2.data() + d;
                      const double* w3 = wv2.data() + 2 * d;
                      const bool want_g = tp.requires_grad(grid.id());
                      const bool want_h = tp.requires_grad(words.id());
                      const bool want_w = tp.requires_grad(w.id());
                      Tensor* gg = want_g ? &tp.grad_buf(grid.id()) : nullptr;
                      Tensor* gh = want_h ? &tp.grad_buf(words.id()) : nullptr;
                      Tensor* gw = want_w ? &tp.grad_buf(w.id()) : nullptr;
                      for (int kk = 0; kk < k; ++kk) {
                          const double* gr = gv2.data() + static_cast<std::size_t>(kk) * d;
                          for (int j = 0; j < tx; ++j) {
                              if (!word_mask[static_cast<std::size_t>(j)]) continue;
                              const double gm = g.at(kk, j);
                              if (gm == 0.0) continue;
                              const double* hr = hv2.data() + static_cast<std::size_t>(j) * d;
                              for (int i = 0; i < d; ++i) {
                                  if (want_g)
                                      (*gg)[kk * d + i] += gm * (w1[i] + w3[i] * hr[i]);
                                  if (want_h)
                                      (*gh)[j * d + i] += gm * (w2[i] + w3[i] * gr[i]);
                                  if (want_w) {
                                      (*gw)[i] += gm * gr[i];
                                      (*gw)[d + i] += gm * hr[i];
                                      (*gw)[2 * d + i] += gm * gr[i] * hr[i];
                                  }
                              }
                          }
                      }
                  });
}

Var col_max_masked(Var m, const std::vector<std::uint8_t>& col_mask) {
    const Tensor& mv = m.value();
    if (mv.rank() != 2 || static_cast<int>(col_mask.size()) != mv.dim(1))
        throw DimensionError("col_max_masked: mask length mismatch");
    const int rows = mv.dim(0), cols = mv.dim(1);
    Tensor out({cols});
    std::vector<int> argmax(static_cast<std::size_t>(cols), -1);
    for (int j = 0; j < cols; ++j) {
        if (!col_mask[static_cast<std::size_t>(j)]) continue;
        int best = 0;
        double bv = mv.at(0, j);
        for (int i = 1; i < rows; ++i)
            if (mv.at(i, j) > bv) {  // strict: ties keep the lowest index
                bv = mv.at(i, j);
                best = i;
            }
        out[j] = bv;
        argmax[static_cast<std::size_t>(j)] = best;
    }
    Tape& t = tape_of(m);
    return t.make(std::move(out), {m}, [m, argmax = std::move(argmax), cols](Tape& tp, const Tensor& g) {
        if (!tp.requires_grad(m.id())) return;
        Tensor& gm = tp.grad_buf(m.id());
        for (int j = 0; j < cols; ++j)
            if (argmax[static_cast<std::size_t>(j)] >= 0)
                gm.at(argmax[static_cast<std::size_t>(j)], j) += g[j];
    });
}

Var row_max_masked(Var m, const std::vector<std::uint8_t>& col_mask) {
    const Tensor& mv = m.value();
    if (mv.rank() != 2 || static_cast<int>(col_mask.size()) != mv.dim(1))
        throw DimensionError("row_max_masked: mask length mismatch");
    const int rows = mv.dim(0), cols = mv.dim(1);
    bool any = false;
    for (std::uint8_t c : col_mask) any = any || c;
    if (!any) throw DimensionError("row_max_masked: no unmasked columns");
    Tensor out({rows});
    std::vector<int> argmax(static_cast<std::size_t>(rows), -1);
    for (int i = 0; i < rows; ++i) {
        int best = -1;
        double bv = 0.0;
        for (int j = 0; j < cols; ++j) {
            if (!col_mask[static_cast<std::size_t>(j)]) continue;
            if (best < 0 || mv.at(i, j) > bv) {
                bv = mv.at(i, j);
                best = j;
            }
        }
        out[i] = bv;
        argmax[static_cast<std::size_t>(i)] = best;
    }
    Tape& t = tape_of(m);
    return t.make(std::move(out), {m}, [m, argmax = std::move(argmax), rows](Tape& tp, const Tensor& g) {
        if (!tp.requires_grad(m.id())) return;
        Tensor& gm = tp.grad_buf(m.id());
        for (int i = 0; i < rows; ++i) gm.at(i, argmax[static_cast<std::size_t>(i)]) += g[i];
    });
}

Var nll_loss(Var logits, int label) {
    const Tensor& lv = logits.value();
    if (lv.rank() != 1 || lv.size() == 0) throw DimensionError("nll_loss: non-empty rank-1 logits required");
    if (label < 0 || label >= lv.size()) throw DimensionError("nll_loss: label out of range");
    const int n = lv.size();
    double mx = lv[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, lv[i]);
    double z = 0.0;
    for (int i = 0; i < n; ++i) z += std::exp(lv[i] - mx);
    const double lse = mx + std::log(z);
    Tape& t = tape_of(logits);
    return t.make(Tensor::scalar(lse - lv[label]), {logits},
                  [logits, label, n, mx, z](Tape& tp, const Tensor& g) {
                      if (!tp.requires_grad(logits.id())) return;
                      const Tensor& lv2 = logits.value();
                      Tensor& gl = tp.grad_buf(logits.id());
                      for (int i = 0; i < n; ++i) {
                          const double p = std::exp(lv2[i] - mx) / z;
                          gl[i] += g[0] * (p - (i == label ? 1.0 : 0.0));
                      }
                  });
}

}  // namespace ops
}  // namespace srs
