#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "lexner/util.hpp"

namespace lexner {

// Dense row-major 2-D grid of doubles with a same-shape gradient buffer.
// Cheap to copy by handle: Tensor is a shared reference to its storage, so
// an op's backward closure can capture inputs and outputs by value.
class Tensor {
  public:
    Tensor() = default;

    Tensor(int rows, int cols, bool requires_grad = false)
        : d_(std::make_shared<Data>()) {
        if (rows <= 0 || cols <= 0)
            throw ValidationError("tensor shape must be positive, got " + std::to_string(rows) + "x" +
                                  std::to_string(cols));
        d_->rows = rows;
        d_->cols = cols;
        d_->v.assign(static_cast<size_t>(rows) * static_cast<size_t>(cols), 0.0);
        d_->g.assign(d_->v.size(), 0.0);
        d_->requires_grad = requires_grad;
    }

    static Tensor from(const std::vector<double>& values, int rows, int cols, bool requires_grad = false) {
        Tensor t(rows, cols, requires_grad);
        if (values.size() != t.numel()) throw ValidationError("value count does not match shape");
        t.d_->v = values;
        return t;
    }

    static Tensor row(const std::vector<double>& values, bool requires_grad = false) {
        return from(values, 1, static_cast<int>(values.size()), requires_grad);
    }

    bool defined() const { return static_cast<bool>(d_); }
    int rows() const { return d_->rows; }
    int cols() const { return d_->cols; }
    size_t numel() const { return d_->v.size(); }

    double& at(int r, int c) { return d_->v[static_cast<size_t>(r) * d_->cols + c]; }
    double at(int r, int c) const { return d_->v[static_cast<size_t>(r) * d_->cols + c]; }
    double& grad_at(int r, int c) { return d_->g[static_cast<size_t>(r) * d_->cols + c]; }

    std::vector<double>& values() { return d_->v; }
    const std::vector<double>& values() const { return d_->v; }
    std::vector<double>& grad() { return d_->g; }
    const std::vector<double>& grad() const { return d_->g; }

    bool requires_grad() const { return d_->requires_grad; }
    void set_requires_grad(bool rg) { d_->requires_grad = rg; }

    void zero_grad() { d_->g.assign(d_->g.size(), 0.0); }

    double item() const {
        if (numel() != 1) throw ValidationError("item() on non-scalar tensor");
        return d_->v[0];
    }

    // deep copy (fresh storage, zero grad)
    Tensor clone() const {
        Tensor t(rows(), cols(), requires_grad());
        t.d_->v = d_->v;
        return t;
    }

    bool same_storage(const Tensor& o) const { return d_ == o.d_; }

    double frobenius_norm() const {
        double s = 0.0;
        for (double x : d_->v) s += x * x;
        return std::sqrt(s);
    }

    void fill_uniform(Rng& rng, double lo, double hi) {
        for (auto& x : d_->v) x = rng.uniform(lo, hi);
    }

  private:
    struct Data {
        int rows = 0, cols = 0;
        std::vector<double> v;
        std::vector<double> g;
        bool requires_grad = false;
    };
    std::shared_ptr<Data> d_;
};

namespace detail {
inline void check_finite(const Tensor& t, const char* op) {
#ifndef NDEBUG
    for (double x : t.values())
        if (!std::isfinite(x)) throw RuntimeFailure(std::string("non-finite value out of op ") + op);
#else
    (void)t;
    (void)op;
#endif
}
}  // namespace detail

// Recorded computation. Every op executes its forward eagerly and pushes one
// backward closure; backward() replays the closures in exact reverse order
// and consumes the record, leaving gradients accumulated in the inputs.
class Tape {
  public:
    size_t size() const { return ops_.size(); }

    void backward(const Tensor& loss) {
        if (loss.numel() != 1) throw ValidationError("backward expects a scalar loss");
        Tensor l = loss;
        l.grad()[0] += 1.0;
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
        ops_.clear();
    }

    // --- primitives ---

    Tensor matmul(Tensor a, Tensor b) {
        if (a.cols() != b.rows())
            throw ValidationError("matmul shape mismatch: " + shape(a) + " x " + shape(b));
        Tensor y(a.rows(), b.cols(), a.requires_grad() || b.requires_grad());
        const int n = a.rows(), k = a.cols(), m = b.cols();
        for (int i = 0; i < n; ++i)
            for (int p = 0; p < k; ++p) {
                double av = a.at(i, p);
                if (av == 0.0) continue;
                for (int j = 0; j < m; ++j) y.at(i, j) += av * b.at(p, j);
            }
        detail::check_finite(y, "matmul");
        record([a, b, y, n, k, m]() mutable {
            if (a.requires_grad())
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < m; ++j) {
                        double gy = y.grad_at(i, j);
                        if (gy == 0.0) continue;
                        for (int p = 0; p < k; ++p) a.grad_at(i, p) += gy * b.at(p, j);
                    }
            if (b.requires_grad())
                for (int i = 0; i < n; ++i)
                    for (int p = 0; p < k; ++p) {
                        double av = a.at(i, p);
                        if (av == 0.0) continue;
                        for (int j = 0; j < m; ++j) b.grad_at(p, j) += av * y.grad_at(i, j);
                    }
        });
        return y;
    }

    Tensor transpose(Tensor a) {
        Tensor y(a.cols(), a.rows(), a.requires_grad());
        for (int i = 0; i < a.rows(); ++i)
            for (int j = 0; j < a.cols(); ++j) y.at(j, i) = a.at(i, j);
        record([a, y]() mutable {
            if (!a.requires_grad()) return;
            for (int i = 0; i < a.rows(); ++i)
                for (int j = 0; j < a.cols(); ++j) a.grad_at(i, j) += y.grad_at(j, i);
        });
        return y;
    }

    Tensor add(Tensor a, Tensor b) {
        check_same_shape(a, b, "add");
        Tensor y(a.rows(), a.cols(), a.requires_grad() || b.requires_grad());
        for (size_t i = 0; i < y.numel(); ++i) y.values()[i] = a.values()[i] + b.values()[i];
        detail::check_finite(y, "add");
        record([a, b, y]() mutable {
            if (a.requires_grad())
                for (size_t i = 0; i < y.numel(); ++i) a.grad()[i] += y.grad()[i];
            if (b.requires_grad())
                for (size_t i = 0; i < y.numel(); ++i) b.grad()[i] += y.grad()[i];
        });
        return y;
    }

    // (n x m) + broadcast (1 x m)
    Tensor add_bias(Tensor a, Tensor bias) {
        if (bias.rows() != 1 || bias.cols() != a.cols())
            throw ValidationError("add_bias expects a 1x" + std::to_string(a.cols()) + " bias, got " + shape(bias));
        Tensor y(a.rows(), a.cols(), a.requires_grad() || bias.requires_grad());
        for (int i = 0; i < a.rows(); ++i)
            for (int j = 0; j < a.cols(); ++j) y.at(i, j) = a.at(i, j) + bias.at(0, j);
        detail::check_finite(y, "add_bias");
        record([a, bias, y]() mutable {
            if (a.requires_grad())
                for (size_t i = 0; i < y.numel(); ++i) a.grad()[i] += y.grad()[i];
            if (bias.requires_grad())
                for (int i = 0; i < y.rows(); ++i)
                    for (int j = 0; j < y.cols(); ++j) bias.grad_at(0, j) += y.grad_at(i, j);
        });
        return y;
    }

    Tensor scale(Tensor a, double c) {
        Tensor y(a.rows(), a.cols(), a.requires_grad());
        for (size_t i = 0; i < y.numel(); ++i) y.values()[i] = a.values()[i] * c;
        detail::check_finite(y, "scale");
        record([a, y, c]() mutable {
            if (!a.requires_grad()) return;
            for (size_t i = 0; i < y.numel(); ++i) a.grad()[i] += c * y.grad()[i];
        });
        return y;
    }

    // elementwise product with a 1x1 tensor
    Tensor scale_by(Tensor a, Tensor s) {
        if (s.numel() != 1) throw ValidationError("scale_by expects a 1x1 scalar tensor");
        Tensor y(a.rows(), a.cols(), a.requires_grad() || s.requires_grad());
        double sv = s.values()[0];
        for (size_t i = 0; i < y.numel(); ++i) y.values()[i] = a.values()[i] * sv;
        detail::check_finite(y, "scale_by");
        record([a, s, y, sv]() mutable {
            if (a.requires_grad())
                for (size_t i = 0; i < y.numel(); ++i) a.grad()[i] += sv * y.grad()[i];
            if (s.requires_grad()) {
                double acc = 0.0;
                for (size_t i = 0; i < y.numel(); ++i) acc += a.values()[i] * y.grad()[i];
                s.grad()[0] += acc;
            }
        });
        return y;
    }

    Tensor concat_cols(Tensor a, Tensor b) {
        if (a.rows() != b.rows()) throw ValidationError("concat_cols row mismatch");
        Tensor y(a.rows(), a.cols() + b.cols(), a.requires_grad() || b.requires_grad());
        for (int i = 0; i < a.rows(); ++i) {
            for (int j = 0; j < a.cols(); ++j) y.at(i, j) = a.at(i, j);
            for (int j = 0; j < b.cols(); ++j) y.at(i, a.cols() + j) = b.at(i, j);
        }
        record([a, b, y]() mutable {
            for (int i = 0; i < a.rows(); ++i) {
                if (a.requires_grad())
                    for (int j = 0; j < a.cols(); ++j) a.grad_at(i, j) += y.grad_at(i, j);
                if (b.requires_grad())
                    for (int j = 0; j < b.cols(); ++j) b.grad_at(i, j) += y.grad_at(i, a.cols() + j);
            }
        });
        return y;
    }

    Tensor concat_rows(std::vector<Tensor> parts) {
        if (parts.empty()) throw ValidationError("concat_rows of nothing");
        int cols = parts[0].cols(), rows = 0;
        bool rg = false;
        for (const auto& p : parts) {
            if (p.cols() != cols) throw ValidationError("concat_rows column mismatch");
            rows += p.rows();
            rg = rg || p.requires_grad();
        }
        Tensor y(rows, cols, rg);
        int at = 0;
        for (const auto& p : parts) {
            for (int i = 0; i < p.rows(); ++i)
                for (int j = 0; j < cols; ++j) y.at(at + i, j) = p.at(i, j);
            at += p.rows();
        }
        record([parts, y, cols]() mutable {
            int at = 0;
            for (auto& p : parts) {
                if (p.requires_grad())
                    for (int i = 0; i < p.rows(); ++i)
                        for (int j = 0; j < cols; ++j) p.grad_at(i, j) += y.grad_at(at + i, j);
                at += p.rows();
            }
        });
        return y;
    }

    // row gather; duplicate indices scatter-add on the way back
    Tensor gather_rows(Tensor a, std::vector<int> idx) {
        for (int i : idx)
            if (i < 0 || i >= a.rows()) throw ValidationError("gather_rows index out of range: " + std::to_string(i));
        Tensor y(static_cast<int>(idx.size()), a.cols(), a.requires_grad());
        for (size_t r = 0; r < idx.size(); ++r)
            for (int j = 0; j < a.cols(); ++j) y.at(static_cast<int>(r), j) = a.at(idx[r], j);
        record([a, y, idx]() mutable {
            if (!a.requires_grad()) return;
            for (size_t r = 0; r < idx.size(); ++r)
                for (int j = 0; j < a.cols(); ++j) a.grad_at(idx[r], j) += y.grad_at(static_cast<int>(r), j);
        });
        return y;
    }

    Tensor select(Tensor a, int r, int c) {
        if (r < 0 || r >= a.rows() || c < 0 || c >= a.cols()) throw ValidationError("select out of range");
        Tensor y(1, 1, a.requires_grad());
        y.values()[0] = a.at(r, c);
        record([a, y, r, c]() mutable {
            if (a.requires_grad()) a.grad_at(r, c) += y.grad()[0];
        });
        return y;
    }

    Tensor tanh(Tensor a) {
        Tensor y(a.rows(), a.cols(), a.requires_grad());
        for (size_t i = 0; i < y.numel(); ++i) y.values()[i] = std::tanh(a.values()[i]);
        record([a, y]() mutable {
            if (!a.requires_grad()) return;
            for (size_t i = 0; i < y.numel(); ++i) {
                double t = y.values()[i];
                a.grad()[i] += (1.0 - t * t) * y.grad()[i];
            }
        });
        return y;
    }

    Tensor relu(Tensor a) {
        Tensor y(a.rows(), a.cols(), a.requires_grad());
        for (size_t i = 0; i < y.numel(); ++i) y.values()[i] = a.values()[i] > 0.0 ? a.values()[i] : 0.0;
        record([a, y]() mutable {
            if (!a.requires_grad()) return;
            for (size_t i = 0; i < y.numel(); ++i)
                if (a.values()[i] > 0.0) a.grad()[i] += y.grad()[i];
        });
        return y;
    }

    // Elementwise product with an externally supplied mask (entries already
    // scaled by 1/keep for inverted dropout). The mask is a constant.
    Tensor dropout(Tensor a, Tensor mask) {
        check_same_shape(a, mask, "dropout");
        Tensor y(a.rows(), a.cols(), a.requires_grad());
        for (size_t i = 0; i < y.numel(); ++i) y.values()[i] = a.values()[i] * mask.values()[i];
        record([a, mask, y]() mutable {
            if (!a.requires_grad()) return;
            for (size_t i = 0; i < y.numel(); ++i) a.grad()[i] += mask.values()[i] * y.grad()[i];
        });
        return y;
    }

    // rowwise exp-normalize with max subtraction; rows sum to 1
    Tensor softmax(Tensor a) {
        Tensor y(a.rows(), a.cols(), a.requires_grad());
        for (int i = 0; i < a.rows(); ++i) {
            double mx = a.at(i, 0);
            for (int j = 1; j < a.cols(); ++j) mx = std::max(mx, a.at(i, j));
            double sum = 0.0;
            for (int j = 0; j < a.cols(); ++j) {
                double e = std::exp(a.at(i, j) - mx);
                y.at(i, j) = e;
                sum += e;
            }
            for (int j = 0; j < a.cols(); ++j) y.at(i, j) /= sum;
        }
        detail::check_finite(y, "softmax");
        record([a, y]() mutable {
            if (!a.requires_grad()) return;
            for (int i = 0; i < y.rows(); ++i) {
                double dot = 0.0;
                for (int j = 0; j < y.cols(); ++j) dot += y.grad_at(i, j) * y.at(i, j);
                for (int j = 0; j < y.cols(); ++j) a.grad_at(i, j) += y.at(i, j) * (y.grad_at(i, j) - dot);
            }
        });
        return y;
    }

    // per row: (x - mean) / sqrt(var + eps) * gain + bias
    Tensor layer_norm(Tensor a, Tensor gain, Tensor bias, double eps = 1e-5) {
        if (gain.rows() != 1 || gain.cols() != a.cols() || bias.rows() != 1 || bias.cols() != a.cols())
            throw ValidationError("layer_norm gain/bias must be 1x" + std::to_string(a.cols()));
        if (eps <= 0.0) throw ValidationError("layer_norm eps must be positive");
        const int n = a.rows(), m = a.cols();
        Tensor y(n, m, a.requires_grad() || gain.requires_grad() || bias.requires_grad());
        Tensor xhat(n, m);      // normalized rows, kept for backward
        std::vector<double> inv_sd(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
            double mean = 0.0;
            for (int j = 0; j < m; ++j) mean += a.at(i, j);
            mean /= m;
            double var = 0.0;
            for (int j = 0; j < m; ++j) {
                double d = a.at(i, j) - mean;
                var += d * d;
            }
            var /= m;
            double is = 1.0 / std::sqrt(var + eps);
            inv_sd[static_cast<size_t>(i)] = is;
            for (int j = 0; j < m; ++j) {
                xhat.at(i, j) = (a.at(i, j) - mean) * is;
                y.at(i, j) = xhat.at(i, j) * gain.at(0, j) + bias.at(0, j);
            }
        }
        detail::check_finite(y, "layer_norm");
        record([a, gain, bias, y, xhat, inv_sd, n, m]() mutable {
            for (int i = 0; i < n; ++i) {
                double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                for (int j = 0; j < m; ++j) {
                    double dy = y.grad_at(i, j);
                    if (gain.requires_grad()) gain.grad_at(0, j) += dy * xhat.at(i, j);
                    if (bias.requires_grad()) bias.grad_at(0, j) += dy;
                    double dxhat = dy * gain.at(0, j);
                    mean_dxhat += dxhat;
                    mean_dxhat_xhat += dxhat * xhat.at(i, j);
                }
                if (!a.requires_grad()) continue;
                mean_dxhat /= m;
                mean_dxhat_xhat /= m;
                for (int j = 0; j < m; ++j) {
                    double dxhat = y.grad_at(i, j) * gain.at(0, j);
                    a.grad_at(i, j) +=
                        inv_sd[static_cast<size_t>(i)] * (dxhat - mean_dxhat - xhat.at(i, j) * mean_dxhat_xhat);
                }
            }
        });
        return y;
    }

    // mean over rows of -log softmax(logits)[target]; stable log-sum-exp
    Tensor cross_entropy(Tensor logits, std::vector<int> targets) {
        if (static_cast<int>(targets.size()) != logits.rows())
            throw ValidationError("cross_entropy: one target per row required");
        for (int t : targets)
            if (t < 0 || t >= logits.cols()) throw ValidationError("cross_entropy target out of range");
        const int n = logits.rows(), m = logits.cols();
        Tensor probs(n, m);
        double loss = 0.0;
        for (int i = 0; i < n; ++i) {
            double mx = logits.at(i, 0);
            for (int j = 1; j < m; ++j) mx = std::max(mx, logits.at(i, j));
            double sum = 0.0;
            for (int j = 0; j < m; ++j) sum += std::exp(logits.at(i, j) - mx);
            double lse = mx + std::log(sum);
            loss += lse - logits.at(i, targets[static_cast<size_t>(i)]);
            for (int j = 0; j < m; ++j) probs.at(i, j) = std::exp(logits.at(i, j) - lse);
        }
        Tensor y(1, 1, logits.requires_grad());
        y.values()[0] = loss / n;
        detail::check_finite(y, "cross_entropy");
        record([logits, probs, y, targets, n, m]() mutable {
            if (!logits.requires_grad()) return;
            double gy = y.grad()[0] / n;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j)
                    logits.grad_at(i, j) +=
                        gy * (probs.at(i, j) - (j == targets[static_cast<size_t>(i)] ? 1.0 : 0.0));
        });
        return y;
    }

    // mean over rows of sum_j p ln(p/q); entries clamped at 1e-12 inside the
    // logs, so identical rows contribute exactly zero
    Tensor kl_divergence(Tensor p, Tensor q) {
        check_same_shape(p, q, "kl_divergence");
        constexpr double kClamp = 1e-12;
        const int n = p.rows(), m = p.cols();
        Tensor y(1, 1, p.requires_grad() || q.requires_grad());
        double total = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) {
                double pc = std::max(p.at(i, j), kClamp);
                double qc = std::max(q.at(i, j), kClamp);
                total += pc * (std::log(pc) - std::log(qc));
            }
        y.values()[0] = total / n;
        detail::check_finite(y, "kl_divergence");
        record([p, q, y, n, m]() mutable {
            double gy = y.grad()[0] / n;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j) {
                    double pc = std::max(p.at(i, j), 1e-12);
                    double qc = std::max(q.at(i, j), 1e-12);
                    if (p.requires_grad() && p.at(i, j) > 1e-12)
                        p.grad_at(i, j) += gy * (std::log(pc) - std::log(qc) + 1.0);
                    if (q.requires_grad() && q.at(i, j) > 1e-12) q.grad_at(i, j) += gy * (-pc / qc);
                }
        });
        return y;
    }

    // Frobenius norm as a 1x1 tensor
    Tensor l2_norm(Tensor a) {
        Tensor y(1, 1, a.requires_grad());
        y.values()[0] = a.frobenius_norm();
        record([a, y]() mutable {
            if (!a.requires_grad()) return;
            double norm = y.values()[0];
            if (norm == 0.0) return;
            double gy = y.grad()[0] / norm;
            for (size_t i = 0; i < a.numel(); ++i) a.grad()[i] += gy * a.values()[i];
        });
        return y;
    }

    Tensor mean(Tensor a) {
        Tensor y(1, 1, a.requires_grad());
        double s = 0.0;
        for (double x : a.values()) s += x;
        y.values()[0] = s / static_cast<double>(a.numel());
        record([a, y]() mutable {
            if (!a.requires_grad()) return;
            double gy = y.grad()[0] / static_cast<double>(a.numel());
            for (size_t i = 0; i < a.numel(); ++i) a.grad()[i] += gy;
        });
        return y;
    }

    // identity forward; backward multiplies the flowing gradient by -lambda
    Tensor grad_reverse(Tensor a, double lambda) {
        Tensor y(a.rows(), a.cols(), a.requires_grad());
        y.values() = a.values();
        record([a, y, lambda]() mutable {
            if (!a.requires_grad()) return;
            for (size_t i = 0; i < a.numel(); ++i) a.grad()[i] += -lambda * y.grad()[i];
        });
        return y;
    }

  private:
    static std::string shape(const Tensor& t) {
        return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
    }
    static void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
        if (a.rows() != b.rows() || a.cols() != b.cols())
            throw ValidationError(std::string(op) + " shape mismatch: " + shape(a) + " vs " + shape(b));
    }
    void record(std::function<void()> f) { ops_.push_back(std::move(f)); }

    std::vector<std::function<void()>> ops_;
};

// Inverted-dropout mask: entries are 0 with probability p, else 1/(1-p).
inline Tensor dropout_mask(int rows, int cols, double p, Rng& rng) {
    Tensor m(rows, cols);
    double keep = 1.0 - p;
    for (auto& x : m.values()) x = rng.bernoulli(p) ? 0.0 : 1.0 / keep;
    return m;
}

// Central finite differences against the tape gradient. `f` must build a
// scalar from `x` on the tape it is given; it is re-evaluated ~2*numel
// times, so keep it small.
inline double grad_check(const std::function<Tensor(Tape&, Tensor)>& f, Tensor x, double eps = 1e-5) {
    Tensor xg = x.clone();
    xg.set_requires_grad(true);
    Tape tape;
    Tensor loss = f(tape, xg);
    if (loss.numel() != 1) throw ValidationError("grad_check requires a scalar-valued function");
    tape.backward(loss);
    std::vector<double> analytic = xg.grad();

    double max_rel = 0.0;
    for (size_t i = 0; i < x.numel(); ++i) {
        Tensor xp = x.clone();
        xp.values()[i] += eps;
        Tape tp;
        double fp = f(tp, xp).item();
        Tensor xm = x.clone();
        xm.values()[i] -= eps;
        Tape tm;
        double fm = f(tm, xm).item();
        double numeric = (fp - fm) / (2.0 * eps);
        double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
        max_rel = std::max(max_rel, std::abs(analytic[i] - numeric) / denom);
    }
    return max_rel;
}

// Named parameter collection with deterministic iteration order.
struct ParamSet {
    std::vector<std::pair<std::string, Tensor>> items;
    std::map<std::string, size_t> index;

    Tensor& add(const std::string& name, int rows, int cols) {
        if (index.count(name)) throw ValidationError("duplicate parameter " + name);
        index[name] = items.size();
        items.emplace_back(name, Tensor(rows, cols, true));
        return items.back().second;
    }

    bool has(const std::string& name) const { return index.count(name) > 0; }

    Tensor& get(const std::string& name) {
        auto it = index.find(name);
        if (it == index.end()) throw ValidationError("unknown parameter " + name);
        return items[it->second].second;
    }
    const Tensor& get(const std::string& name) const {
        auto it = index.find(name);
        if (it == index.end()) throw ValidationError("unknown parameter " + name);
        return items[it->second].second;
    }

    void zero_grads() {
        for (auto& [name, t] : items) t.zero_grad();
    }

    ParamSet clone() const {
        ParamSet c;
        for (const auto& [name, t] : items) {
            c.index[name] = c.items.size();
            Tensor ct = t.clone();
            ct.set_requires_grad(true);
            c.items.emplace_back(name, ct);
        }
        return c;
    }
};

// Adam with linear warmup to the base rate followed by linear decay to zero.
class AdamOptimizer {
  public:
    AdamOptimizer(double lr, long total_steps, double warmup_proportion = 0.06, double beta1 = 0.9,
                  double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr),
          total_steps_(total_steps),
          warmup_steps_(static_cast<long>(warmup_proportion * static_cast<double>(total_steps))),
          beta1_(beta1),
          beta2_(beta2),
          eps_(eps) {}

    double rate_at(long step) const {  // step is 1-based
        if (warmup_steps_ > 0 && step <= warmup_steps_)
            return lr_ * static_cast<double>(step) / static_cast<double>(warmup_steps_);
        if (total_steps_ <= warmup_steps_) return lr_;
        double rest = static_cast<double>(total_steps_ - step) / static_cast<double>(total_steps_ - warmup_steps_);
        return lr_ * std::max(0.0, rest);
    }

    void step(ParamSet& params) {
        ++t_;
        if (m_.empty()) {
            m_.resize(params.items.size());
            v_.resize(params.items.size());
            for (size_t i = 0; i < params.items.size(); ++i) {
                m_[i].assign(params.items[i].second.numel(), 0.0);
                v_[i].assign(params.items[i].second.numel(), 0.0);
            }
        }
        double lr_t = rate_at(t_);
        double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (size_t i = 0; i < params.items.size(); ++i) {
            Tensor& p = params.items[i].second;
            for (size_t k = 0; k < p.numel(); ++k) {
                double g = p.grad()[k];
                m_[i][k] = beta1_ * m_[i][k] + (1.0 - beta1_) * g;
                v_[i][k] = beta2_ * v_[i][k] + (1.0 - beta2_) * g * g;
                double mhat = m_[i][k] / bc1;
                double vhat = v_[i][k] / bc2;
                p.values()[k] -= lr_t * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

    long step_count() const { return t_; }

  private:
    double lr_;
    long total_steps_;
    long warmup_steps_;
    double beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

}  // namespace lexner
