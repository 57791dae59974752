#include "factost/tape.hpp"

#include <cmath>

#include "factost/errors.hpp"

namespace factost::ag {

namespace {

void check_shape(bool ok, const char* what) {
    if (!ok) throw std::logic_error(std::string("tape shape mismatch in ") + what);
}

double gelu_fwd(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_bwd(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    return cdf + x * pdf;
}

}  // namespace

Var Tape::make(Mat val) {
    const size_t bytes = val.size() * sizeof(double);
    peak_bytes_ = std::max(peak_bytes_, bytes);
    total_bytes_ += bytes;
    Node n;
    n.val = std::move(val);
    nodes_.push_back(std::move(n));
    const int id = static_cast<int>(nodes_.size()) - 1;
    return Var{id, nodes_[id].val.rows, nodes_[id].val.cols};
}

Var Tape::input(Mat m) { return make(std::move(m)); }

Var Tape::param(const Mat& values, int slot) {
    auto it = param_by_slot_.find(slot);
    if (it != param_by_slot_.end()) {
        const int id = it->second;
        return Var{id, nodes_[id].val.rows, nodes_[id].val.cols};
    }
    Var v = make(values);
    param_by_slot_[slot] = v.id;
    params_.emplace_back(slot, v.id);
    return v;
}

Var Tape::zeros(int r, int c) { return make(Mat(r, c)); }

const Mat* Tape::grad_of(Var v) const {
    if (!ran_backward_) return nullptr;
    return &nodes_[v.id].grad;
}

Var Tape::matmul(Var a, Var b) {
    check_shape(a.cols == b.rows, "matmul");
    Mat out(a.rows, b.cols);
    mm_acc(nodes_[a.id].val, nodes_[b.id].val, out);
    Var c = make(std::move(out));
    if (with_grad_) {
        backs_.push_back([this, a, b, c] {
            mm_nt_acc(g(c.id), nodes_[b.id].val, g(a.id));  // dA += dC B^T
            mm_tn_acc(nodes_[a.id].val, g(c.id), g(b.id));  // dB += A^T dC
        });
    }
    return c;
}

Var Tape::matmul_nt(Var a, Var b) {
    check_shape(a.cols == b.cols, "matmul_nt");
    Mat out(a.rows, b.rows);
    mm_nt_acc(nodes_[a.id].val, nodes_[b.id].val, out);
    Var c = make(std::move(out));
    if (with_grad_) {
        backs_.push_back([this, a, b, c] {
            mm_acc(g(c.id), nodes_[b.id].val, g(a.id));     // dA += dC B
            mm_tn_acc(g(c.id), nodes_[a.id].val, g(b.id));  // dB += dC^T A
        });
    }
    return c;
}

Var Tape::add(Var a, Var b) {
    check_shape(a.rows == b.rows && a.cols == b.cols, "add");
    Mat out = nodes_[a.id].val;
    const Mat& bv = nodes_[b.id].val;
    for (size_t i = 0; i < out.size(); ++i) out.v[i] += bv.v[i];
    Var c = make(std::move(out));
    if (with_grad_) {
        backs_.push_back([this, a, b, c] {
            const Mat& dc = g(c.id);
            Mat& da = g(a.id);
            Mat& db = g(b.id);
            for (size_t i = 0; i < dc.size(); ++i) {
                da.v[i] += dc.v[i];
                db.v[i] += dc.v[i];
            }
        });
    }
    return c;
}

Var Tape::sub(Var a, Var b) {
    check_shape(a.rows == b.rows && a.cols == b.cols, "sub");
    Mat out = nodes_[a.id].val;
    const Mat& bv = nodes_[b.id].val;
    for (size_t i = 0; i < out.size(); ++i) out.v[i] -= bv.v[i];
    Var c = make(std::move(out));
    if (with_grad_) {
        backs_.push_back([this, a, b, c] {
            const Mat& dc = g(c.id);
            Mat& da = g(a.id);
            Mat& db = g(b.id);
            for (size_t i = 0; i < dc.size(); ++i) {
                da.v[i] += dc.v[i];
                db.v[i] -= dc.v[i];
            }
        });
    }
    return c;
}

Var Tape::add_rowvec(Var a, Var bias) {
    check_shape(bias.rows == 1 && bias.cols == a.cols, "add_rowvec");
    Mat out = nodes_[a.id].val;
    const Mat& bv = nodes_[bias.id].val;
    for (int i = 0; i < out.rows; ++i) {
        double* r = out.row_ptr(i);
        for (int j = 0; j < out.cols; ++j) r[j] += bv.v[j];
    }
    Var c = make(std::move(out));
    if (with_grad_) {
        backs_.push_back([this, a, bias, c] {
            const Mat& dc = g(c.id);
            Mat& da = g(a.id);
            Mat& db = g(bias.id);
            for (size_t i = 0; i < dc.size(); ++i) da.v[i] += dc.v[i];
            for (int i = 0; i < dc.rows; ++i) {
                const double* r = dc.row_ptr(i);
                for (int j = 0; j < dc.cols; ++j) db.v[j] += r[j];
            }
        });
    }
    return c;
}

Var Tape::mul(Var a, Var b) {
    check_shape(a.rows == b.rows && a.cols == b.cols, "mul");
    Mat out = nodes_[a.id].val;
    const Mat& bv = nodes_[b.id].val;
    for (size_t i = 0; i < out.size(); ++i) out.v[i] *= bv.v[i];
    Var c = make(std::move(out));
    if (with_grad_) {
        backs_.push_back([this, a, b, c] {
            const Mat& dc = g(c.id);
            const Mat& av = nodes_[a.id].val;
            const Mat& bv2 = nodes_[b.id].val;
            Mat& da = g(a.id);
            Mat& db = g(b.id);
            for (size_t i = 0; i < dc.size(); ++i) {
                da.v[i] += dc.v[i] * bv2.v[i];
                db.v[i] += dc.v[i] * av.v[i];
            }
        });
    }
    return c;
}

Var Tape::scale(Var a, double s) {
    Mat out = nodes_[a.id].val;
    for (double& x : out.v) x *= s;
    Var c = make(std::move(out));
    if (with_grad_) {
        backs_.push_back([this, a, c, s] {
            const Mat& dc = g(c.id);
            Mat& da = g(a.id);
            for (size_t i = 0; i < dc.size(); ++i) da.v[i] += s * dc.v[i];
        });
    }
    return c;
}

Var Tape::row_softmax(Var a) {
    Mat out = nodes_[a.id].val;
    for (int i = 0; i < out.rows; ++i) {
        double* r = out.row_ptr(i);
        double mx = r[0];
        for (int j = 1; j < out.cols; ++j) mx = std::max(mx, r[j]);
        double sum = 0.0;
        for (int j = 0; j < out.cols; ++j) {
            r[j] = std::exp(r[j] - mx);
            sum += r[j];
        }
        for (int j = 0; j < out.cols; ++j) r[j] /= sum;
    }
    Var c = make(std::move(out));
    if (with_grad_) {
        backs_.push_back([this, a, c] {
            const Mat& y = nodes_[c.id].val;
            const Mat& dy = g(c.id);
            Mat& da = g(a.id);
            for (int i = 0; i < y.rows; ++i) {
                const double* yr = y.row_ptr(i);
                const double* dr = dy.row_ptr(i);
                double dot = 0.0;
                for (int j = 0; j < y.cols; ++j) dot += yr[j] * dr[j];
                double* ar = da.row_ptr(i);
                for (int j = 0; j < y.cols; ++j) ar[j] += yr[j] * (dr[j] - dot);
            }
        });
    }
    return c;
}

Var Tape::sigmoid(Var a) {
    Mat out = nodes_[a.id].val;
    for (double& x : out.v) x = 1.0 / (1.0 + std::exp(-x));
    Var c = make(std::move(out));
    if (with_grad_) {
        backs_.push_back([this, a, c] {
            const Mat& y = nodes_[c.id].val;
            const Mat& dy = g(c.id);
            Mat& da = g(a.id);
            for (size_t i = 0; i < y.size(); ++i) da.v[i] += dy.v[i] * y.v[i] * (1.0 - y.v[i]);
        });
    }
    return c;
}

Var Tape::gelu(Var a) {
    Mat out = nodes_[a.id].val;
    for (double& x : out.v) x = gelu_fwd(x);
    Var c = make(std::move(out));
    if (with_grad_) {
        backs_.push_back([this, a, c] {
            const Mat& x = nodes_[a.id].val;
            const Mat& dy = g(c.id);
            Mat& da = g(a.id);
            for (size_t i = 0; i < x.size(); ++i) da.v[i] += dy.v[i] * gelu_bwd(x.v[i]);
        });
    }
    return c;
}

Var Tape::layer_norm(Var x, Var gain, Var bias, double eps) {
    check_shape(gain.rows == 1 && gain.cols == x.cols, "layer_norm gain");
    check_shape(bias.rows == 1 && bias.cols == x.cols, "layer_norm bias");
    const Mat& xv = nodes_[x.id].val;
    const int d = xv.cols;
    Mat out(xv.rows, d);
    std::vector<double> means(xv.rows), inv_stds(xv.rows);
    const Mat& gv = nodes_[gain.id].val;
    const Mat& bv = nodes_[bias.id].val;
    for (int i = 0; i < xv.rows; ++i) {
        const double* r = xv.row_ptr(i);
        double m = 0.0;
        for (int j = 0; j < d; ++j) m += r[j];
        m /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) var += (r[j] - m) * (r[j] - m);
        var /= d;
        const double inv = 1.0 / std::sqrt(var + eps);
        means[i] = m;
        inv_stds[i] = inv;
        double* o = out.row_ptr(i);
        for (int j = 0; j < d; ++j) o[j] = (r[j] - m) * inv * gv.v[j] + bv.v[j];
    }
    Var c = make(std::move(out));
    if (with_grad_) {
        backs_.push_back([this, x, gain, bias, c, eps, means, inv_stds] {
            (void)eps;
            const Mat& xv2 = nodes_[x.id].val;
            const Mat& gv2 = nodes_[gain.id].val;
            const Mat& dy = g(c.id);
            Mat& dx = g(x.id);
            Mat& dg = g(gain.id);
            Mat& db = g(bias.id);
            const int d2 = xv2.cols;
            for (int i = 0; i < xv2.rows; ++i) {
                const double* xr = xv2.row_ptr(i);
                const double* dr = dy.row_ptr(i);
                const double m = means[i];
                const double inv = inv_stds[i];
                // dL/dxhat, plus reductions for the mean/var chain
                double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                for (int j = 0; j < d2; ++j) {
                    const double xhat = (xr[j] - m) * inv;
                    const double dxhat = dr[j] * gv2.v[j];
                    sum_dxhat += dxhat;
                    sum_dxhat_xhat += dxhat * xhat;
                    dg.v[j] += dr[j] * xhat;
                    db.v[j] += dr[j];
                }
                double* dxr = dx.row_ptr(i);
                for (int j = 0; j < d2; ++j) {
                    const double xhat = (xr[j] - m) * inv;
                    const double dxhat = dr[j] * gv2.v[j];
                    dxr[j] += inv * (dxhat - sum_dxhat / d2 - xhat * sum_dxhat_xhat / d2);
                }
            }
        });
    }
    return c;
}

Var Tape::rope(Var x, std::vector<int> positions, const RopeSpec& spec) {
    check_shape(static_cast<int>(positions.size()) == x.rows, "rope positions");
    check_shape(spec.n_heads * spec.d_head == x.cols, "rope head layout");
    check_shape(spec.r_dim % 2 == 0 && spec.r_dim <= spec.d_head, "rope r_dim");
    const int pairs = spec.r_dim / 2;
    std::vector<double> thetas(pairs);
    for (int i = 0; i < pairs; ++i)
        thetas[i] = std::pow(spec.base, -2.0 * i / static_cast<double>(spec.d_head));

    Mat out = nodes_[x.id].val;
    for (int r = 0; r < out.rows; ++r) {
        const int pos = positions[r];
        if (pos < 0) continue;
        double* row = out.row_ptr(r);
        for (int h = 0; h < spec.n_heads; ++h) {
            double* hp = row + h * spec.d_head;
            for (int i = 0; i < pairs; ++i) {
                const double ang = pos * thetas[i];
                const double c = std::cos(ang), s = std::sin(ang);
                const double a = hp[2 * i], b = hp[2 * i + 1];
                hp[2 * i] = a * c - b * s;
                hp[2 * i + 1] = a * s + b * c;
            }
        }
    }
    Var cvar = make(std::move(out));
    if (with_grad_) {
        backs_.push_back([this, x, cvar, positions = std::move(positions), spec, thetas] {
            const Mat& dy = g(cvar.id);
            Mat& dx = g(x.id);
            const int pairs2 = spec.r_dim / 2;
            for (int r = 0; r < dy.rows; ++r) {
                const double* dr = dy.row_ptr(r);
                double* dxr = dx.row_ptr(r);
                const int pos = positions[r];
                if (pos < 0) {
                    for (int j = 0; j < dy.cols; ++j) dxr[j] += dr[j];
                    continue;
                }
                for (int h = 0; h < spec.n_heads; ++h) {
                    const double* dh = dr + h * spec.d_head;
                    double* dxh = dxr + h * spec.d_head;
                    for (int i = 0; i < pairs2; ++i) {
                        const double ang = pos * thetas[i];
                        const double c = std::cos(ang), s = std::sin(ang);
                        const double da = dh[2 * i], db = dh[2 * i + 1];
                        // transpose of the rotation
                        dxh[2 * i] += da * c + db * s;
                        dxh[2 * i + 1] += -da * s + db * c;
                    }
                    for (int j = spec.r_dim; j < spec.d_head; ++j) dxh[j] += dh[j];
                }
            }
        });
    }
    return cvar;
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
    check_shape(!parts.empty(), "concat_rows empty");
    const int cols = parts[0].cols;
    int rows = 0;
    for (const Var& p : parts) {
        check_shape(p.cols == cols, "concat_rows cols");
        rows += p.rows;
    }
    Mat out(rows, cols);
    int at = 0;
    for (const Var& p : parts) {
        const Mat& pv = nodes_[p.id].val;
        std::copy(pv.v.begin(), pv.v.end(), out.row_ptr(at));
        at += p.rows;
    }
    Var c = make(std::move(out));
    if (with_grad_) {
        backs_.push_back([this, parts, c] {
            const Mat& dc = g(c.id);
            int at2 = 0;
            for (const Var& p : parts) {
                Mat& dp = g(p.id);
                const double* src = dc.row_ptr(at2);
                for (size_t i = 0; i < dp.size(); ++i) dp.v[i] += src[i];
                at2 += p.rows;
            }
        });
    }
    return c;
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
    check_shape(!parts.empty(), "concat_cols empty");
    const int rows = parts[0].rows;
    int cols = 0;
    for (const Var& p : parts) {
        check_shape(p.rows == rows, "concat_cols rows");
        cols += p.cols;
    }
    Mat out(rows, cols);
    int at = 0;
    for (const Var& p : parts) {
        const Mat& pv = nodes_[p.id].val;
        for (int i = 0; i < rows; ++i)
            std::copy(pv.row_ptr(i), pv.row_ptr(i) + p.cols, out.row_ptr(i) + at);
        at += p.cols;
    }
    Var c = make(std::move(out));
    if (with_grad_) {
        backs_.push_back([this, parts, c, rows] {
            const Mat& dc = g(c.id);
            int at2 = 0;
            for (const Var& p : parts) {
                Mat& dp = g(p.id);
                for (int i = 0; i < rows; ++i) {
                    const double* src = dc.row_ptr(i) + at2;
                    double* dst = dp.row_ptr(i);
                    for (int j = 0; j < p.cols; ++j) dst[j] += src[j];
                }
                at2 += p.cols;
            }
        });
    }
    return c;
}

Var Tape::reshape(Var a, int r, int c) {
    check_shape(static_cast<size_t>(r) * c == nodes_[a.id].val.size(), "reshape");
    Mat out = nodes_[a.id].val;
    out.rows = r;
    out.cols = c;
    Var v = make(std::move(out));
    if (with_grad_) {
        backs_.push_back([this, a, v] {
            const Mat& dv = g(v.id);
            Mat& da = g(a.id);
            for (size_t i = 0; i < dv.size(); ++i) da.v[i] += dv.v[i];
        });
    }
    return v;
}

Var Tape::slice_rows(Var a, int r0, int n) {
    check_shape(r0 >= 0 && r0 + n <= a.rows, "slice_rows");
    const Mat& av = nodes_[a.id].val;
    Mat out(n, a.cols);
    std::copy(av.row_ptr(r0), av.row_ptr(r0) + static_cast<size_t>(n) * a.cols, out.v.begin());
    Var c = make(std::move(out));
    if (with_grad_) {
        backs_.push_back([this, a, c, r0] {
            const Mat& dc = g(c.id);
            Mat& da = g(a.id);
            double* dst = da.row_ptr(r0);
            for (size_t i = 0; i < dc.size(); ++i) dst[i] += dc.v[i];
        });
    }
    return c;
}

Var Tape::slice_cols(Var a, int c0, int n) {
    check_shape(c0 >= 0 && c0 + n <= a.cols, "slice_cols");
    const Mat& av = nodes_[a.id].val;
    Mat out(a.rows, n);
    for (int i = 0; i < a.rows; ++i) {
        const double* src = av.row_ptr(i) + c0;
        std::copy(src, src + n, out.row_ptr(i));
    }
    Var c = make(std::move(out));
    if (with_grad_) {
        backs_.push_back([this, a, c, c0, n] {
            const Mat& dc = g(c.id);
            Mat& da = g(a.id);
            for (int i = 0; i < dc.rows; ++i) {
                const double* src = dc.row_ptr(i);
                double* dst = da.row_ptr(i) + c0;
                for (int j = 0; j < n; ++j) dst[j] += src[j];
            }
        });
    }
    return c;
}

Var Tape::gather_rows(Var table, std::vector<int> idx) {
    const Mat& tv = nodes_[table.id].val;
    Mat out(static_cast<int>(idx.size()), table.cols);
    for (size_t i = 0; i < idx.size(); ++i) {
        check_shape(idx[i] >= 0 && idx[i] < table.rows, "gather_rows index");
        std::copy(tv.row_ptr(idx[i]), tv.row_ptr(idx[i]) + table.cols,
                  out.row_ptr(static_cast<int>(i)));
    }
    Var c = make(std::move(out));
    if (with_grad_) {
        backs_.push_back([this, table, c, idx = std::move(idx)] {
            const Mat& dc = g(c.id);
            Mat& dt = g(table.id);
            for (size_t i = 0; i < idx.size(); ++i) {
                const double* src = dc.row_ptr(static_cast<int>(i));
                double* dst = dt.row_ptr(idx[i]);
                for (int j = 0; j < dc.cols; ++j) dst[j] += src[j];
            }
        });
    }
    return c;
}

Var Tape::row_sum(Var a) {
    const Mat& av = nodes_[a.id].val;
    Mat out(a.rows, 1);
    for (int i = 0; i < a.rows; ++i) {
        const double* r = av.row_ptr(i);
        double s = 0.0;
        for (int j = 0; j < a.cols; ++j) s += r[j];
        out.v[i] = s;
    }
    Var c = make(std::move(out));
    if (with_grad_) {
        backs_.push_back([this, a, c] {
            const Mat& dc = g(c.id);
            Mat& da = g(a.id);
            for (int i = 0; i < da.rows; ++i) {
                double* r = da.row_ptr(i);
                for (int j = 0; j < da.cols; ++j) r[j] += dc.v[i];
            }
        });
    }
    return c;
}

Var Tape::col_mul(Var a, Var s) {
    check_shape(s.cols == 1 && s.rows == a.rows, "col_mul");
    Mat out = nodes_[a.id].val;
    const Mat& sv = nodes_[s.id].val;
    for (int i = 0; i < out.rows; ++i) {
        double* r = out.row_ptr(i);
        for (int j = 0; j < out.cols; ++j) r[j] *= sv.v[i];
    }
    Var c = make(std::move(out));
    if (with_grad_) {
        backs_.push_back([this, a, s, c] {
            const Mat& dc = g(c.id);
            const Mat& av = nodes_[a.id].val;
            const Mat& sv2 = nodes_[s.id].val;
            Mat& da = g(a.id);
            Mat& ds = g(s.id);
            for (int i = 0; i < dc.rows; ++i) {
                const double* dr = dc.row_ptr(i);
                const double* ar = av.row_ptr(i);
                double* dar = da.row_ptr(i);
                double acc = 0.0;
                for (int j = 0; j < dc.cols; ++j) {
                    dar[j] += dr[j] * sv2.v[i];
                    acc += dr[j] * ar[j];
                }
                ds.v[i] += acc;
            }
        });
    }
    return c;
}

Var Tape::mean_all(Var a) {
    const Mat& av = nodes_[a.id].val;
    double s = 0.0;
    for (double x : av.v) s += x;
    Mat out(1, 1);
    out.v[0] = s / static_cast<double>(av.size());
    Var c = make(std::move(out));
    if (with_grad_) {
        backs_.push_back([this, a, c] {
            const double d = g(c.id).v[0] / static_cast<double>(nodes_[a.id].val.size());
            Mat& da = g(a.id);
            for (double& x : da.v) x += d;
        });
    }
    return c;
}

Var Tape::dropout(Var a, double rate, Rng& rng) {
    if (rate <= 0.0) return a;
    const double keep = 1.0 - rate;
    const Mat& av = nodes_[a.id].val;
    Mat mask(av.rows, av.cols);
    for (size_t i = 0; i < mask.size(); ++i) mask.v[i] = rng.uniform() < rate ? 0.0 : 1.0 / keep;
    Mat out = av;
    for (size_t i = 0; i < out.size(); ++i) out.v[i] *= mask.v[i];
    Var c = make(std::move(out));
    if (with_grad_) {
        backs_.push_back([this, a, c, mask = std::move(mask)] {
            const Mat& dc = g(c.id);
            Mat& da = g(a.id);
            for (size_t i = 0; i < dc.size(); ++i) da.v[i] += dc.v[i] * mask.v[i];
        });
    }
    return c;
}

Var Tape::pinball_loss(Var pred, const Mat& target, const std::vector<double>& quantiles) {
    check_shape(pred.cols == static_cast<int>(quantiles.size()), "pinball quantile count");
    check_shape(target.rows == pred.rows && target.cols == 1, "pinball target");
    const Mat& pv = nodes_[pred.id].val;
    double loss = 0.0;
    for (int h = 0; h < pv.rows; ++h) {
        const double y = target.v[h];
        const double* pr = pv.row_ptr(h);
        for (int qi = 0; qi < pv.cols; ++qi) {
            const double e = y - pr[qi];
            const double q = quantiles[qi];
            loss += std::max((q - 1.0) * e, q * e);
        }
    }
    const double n = static_cast<double>(pv.size());
    Mat out(1, 1);
    out.v[0] = loss / n;
    Var c = make(std::move(out));
    if (with_grad_) {
        backs_.push_back([this, pred, c, target, quantiles, n] {
            const double dl = g(c.id).v[0] / n;
            const Mat& pv2 = nodes_[pred.id].val;
            Mat& dp = g(pred.id);
            for (int h = 0; h < pv2.rows; ++h) {
                const double y = target.v[h];
                const double* pr = pv2.row_ptr(h);
                double* dr = dp.row_ptr(h);
                for (int qi = 0; qi < pv2.cols; ++qi) {
                    const double e = y - pr[qi];
                    const double q = quantiles[qi];
                    // d/dpred of the active branch; e >= 0 picks q*e
                    dr[qi] += dl * (e >= 0.0 ? -q : (1.0 - q));
                }
            }
        });
    }
    return c;
}

Var Tape::l1_loss(Var pred, const Mat& target) {
    check_shape(target.rows == pred.rows && target.cols == pred.cols, "l1 target");
    const Mat& pv = nodes_[pred.id].val;
    double loss = 0.0;
    for (size_t i = 0; i < pv.size(); ++i) loss += std::fabs(pv.v[i] - target.v[i]);
    const double n = static_cast<double>(pv.size());
    Mat out(1, 1);
    out.v[0] = loss / n;
    Var c = make(std::move(out));
    if (with_grad_) {
        backs_.push_back([this, pred, c, target, n] {
            const double dl = g(c.id).v[0] / n;
            const Mat& pv2 = nodes_[pred.id].val;
            Mat& dp = g(pred.id);
            for (size_t i = 0; i < pv2.size(); ++i) {
                const double e = pv2.v[i] - target.v[i];
                dp.v[i] += dl * (e > 0.0 ? 1.0 : (e < 0.0 ? -1.0 : 0.0));
            }
        });
    }
    return c;
}

void Tape::backward(Var loss) {
    if (!with_grad_) throw std::logic_error("backward on a no-grad tape");
    check_shape(loss.rows == 1 && loss.cols == 1, "backward seed");
    for (Node& n : nodes_) {
        n.grad = Mat(n.val.rows, n.val.cols);
    }
    nodes_[loss.id].grad.v[0] = 1.0;
    for (auto it = backs_.rbegin(); it != backs_.rend(); ++it) (*it)();
    ran_backward_ = true;
}

void Tape::accumulate_param_grads(std::vector<Mat>& sink) const {
    for (const auto& [slot, node] : params_) {
        if (slot >= static_cast<int>(sink.size())) sink.resize(slot + 1);
        const Mat& gm = nodes_[node].grad;
        Mat& dst = sink[slot];
        if (dst.size() == 0) dst = Mat(gm.rows, gm.cols);
        for (size_t i = 0; i < gm.size(); ++i) dst.v[i] += gm.v[i];
    }
}

}  // namespace factost::ag
