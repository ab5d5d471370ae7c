#include "srp/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "srp/errors.hpp"

namespace srp::nn {

namespace {

void require(bool ok, const char* what) {
    if (!ok) {
        throw ConfigError(std::string("shape mismatch in ") + what);
    }
}

void require_same(const Tensor& a, const Tensor& b, const char* what) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), what);
}

}  // namespace

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        throw ConfigError("tensor data length does not match its shape");
    }
}

Tensor Tensor::row_vector(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor(1, n, std::move(v));
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

Parameter::Parameter(std::string name_, std::size_t rows, std::size_t cols)
    : name(std::move(name_)),
      value(rows, cols),
      grad(rows, cols),
      first_moment(rows, cols),
      second_moment(rows, cols) {}

void glorot_uniform(Parameter& p, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(p.value.rows() + p.value.cols()));
    for (double& x : p.value.data()) {
        x = rng.uniform(-a, a);
    }
}

const Tensor& Var::value() const { return tape->value(id); }

// --- Tape ----------------------------------------------------------------------

Var Tape::constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, false, nullptr, {}});
    return Var{this, nodes_.size() - 1};
}

Var Tape::parameter(Parameter& p) {
    nodes_.push_back(Node{p.value, {}, false, &p, {}});
    return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, BackwardFn backward) {
    nodes_.push_back(Node{std::move(value), {}, false, nullptr, std::move(backward)});
    return Var{this, nodes_.size() - 1};
}

Tensor& Tape::grad(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.has_grad) {
        n.grad = Tensor(n.value.rows(), n.value.cols());
        n.has_grad = true;
    }
    return n.grad;
}

void Tape::backward(Var loss) {
    if (loss.tape != this) {
        throw ConfigError("loss does not belong to this tape");
    }
    const Tensor& lv = nodes_[loss.id].value;
    if (lv.rows() != 1 || lv.cols() != 1) {
        throw ConfigError("backward needs a scalar loss");
    }
    grad(loss.id)[0] = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.has_grad) {
            continue;
        }
        if (n.param != nullptr) {
            auto dst = n.param->grad.data();
            auto src = n.grad.data();
            for (std::size_t j = 0; j < dst.size(); ++j) {
                dst[j] += src[j];
            }
        } else if (n.backward) {
            n.backward(*this, n.grad);
        }
    }
    nodes_.clear();
}

void backward(Tape& tape, Var loss) { tape.backward(loss); }

// --- Operations ------------------------------------------------------------------

Var matmul(Var a, Var b) {
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    require(A.cols() == B.rows(), "matmul");
    const std::size_t n = A.rows(), m = A.cols(), k = B.cols();
    Tensor C(n, k);
    for (std::size_t i = 0; i < n; ++i) {
        double* crow = C.row(i).data();
        for (std::size_t p = 0; p < m; ++p) {
            const double aip = A(i, p);
            if (aip == 0.0) {
                continue;
            }
            const double* brow = B.row(p).data();
            for (std::size_t j = 0; j < k; ++j) {
                crow[j] += aip * brow[j];
            }
        }
    }
    const std::size_t ia = a.id, ib = b.id;
    return a.tape->record(std::move(C), [ia, ib, n, m, k](Tape& t, const Tensor& g) {
        const Tensor& A = t.value(ia);
        const Tensor& B = t.value(ib);
        Tensor& gA = t.grad(ia);
        for (std::size_t i = 0; i < n; ++i) {
            const double* grow = g.row(i).data();
            for (std::size_t p = 0; p < m; ++p) {
                const double* brow = B.row(p).data();
                double s = 0.0;
                for (std::size_t j = 0; j < k; ++j) {
                    s += grow[j] * brow[j];
                }
                gA(i, p) += s;
            }
        }
        Tensor& gB = t.grad(ib);
        for (std::size_t i = 0; i < n; ++i) {
            const double* grow = g.row(i).data();
            for (std::size_t p = 0; p < m; ++p) {
                const double aip = A(i, p);
                if (aip == 0.0) {
                    continue;
                }
                double* gbrow = gB.row(p).data();
                for (std::size_t j = 0; j < k; ++j) {
                    gbrow[j] += aip * grow[j];
                }
            }
        }
    });
}

Var add(Var a, Var b) {
    require_same(a.value(), b.value(), "add");
    Tensor out = a.value();
    auto bd = b.value().data();
    auto od = out.data();
    for (std::size_t i = 0; i < od.size(); ++i) {
        od[i] += bd[i];
    }
    const std::size_t ia = a.id, ib = b.id;
    return a.tape->record(std::move(out), [ia, ib](Tape& t, const Tensor& g) {
        for (std::size_t id : {ia, ib}) {
            auto gd = t.grad(id).data();
            for (std::size_t i = 0; i < gd.size(); ++i) {
                gd[i] += g[i];
            }
        }
    });
}

Var add_row(Var a, Var bias) {
    const Tensor& A = a.value();
    const Tensor& b = bias.value();
    require(b.rows() == 1 && b.cols() == A.cols(), "add_row");
    Tensor out = A;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto r = out.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) {
            r[j] += b[j];
        }
    }
    const std::size_t ia = a.id, ib = bias.id;
    return a.tape->record(std::move(out), [ia, ib](Tape& t, const Tensor& g) {
        auto ga = t.grad(ia).data();
        for (std::size_t i = 0; i < ga.size(); ++i) {
            ga[i] += g[i];
        }
        Tensor& gb = t.grad(ib);
        for (std::size_t i = 0; i < g.rows(); ++i) {
            auto r = g.row(i);
            for (std::size_t j = 0; j < r.size(); ++j) {
                gb[j] += r[j];
            }
        }
    });
}

Var mul(Var a, Var b) {
    require_same(a.value(), b.value(), "mul");
    Tensor out = a.value();
    auto bd = b.value().data();
    auto od = out.data();
    for (std::size_t i = 0; i < od.size(); ++i) {
        od[i] *= bd[i];
    }
    const std::size_t ia = a.id, ib = b.id;
    return a.tape->record(std::move(out), [ia, ib](Tape& t, const Tensor& g) {
        const Tensor& A = t.value(ia);
        const Tensor& B = t.value(ib);
        auto ga = t.grad(ia).data();
        for (std::size_t i = 0; i < ga.size(); ++i) {
            ga[i] += g[i] * B[i];
        }
        auto gb = t.grad(ib).data();
        for (std::size_t i = 0; i < gb.size(); ++i) {
            gb[i] += g[i] * A[i];
        }
    });
}

Var scale(Var a, double s) {
    Tensor out = a.value();
    for (double& x : out.data()) {
        x *= s;
    }
    const std::size_t ia = a.id;
    return a.tape->record(std::move(out), [ia, s](Tape& t, const Tensor& g) {
        auto ga = t.grad(ia).data();
        for (std::size_t i = 0; i < ga.size(); ++i) {
            ga[i] += s * g[i];
        }
    });
}

Var relu(Var a) {
    Tensor out = a.value();
    for (double& x : out.data()) {
        x = x > 0.0 ? x : 0.0;
    }
    const std::size_t ia = a.id;
    return a.tape->record(std::move(out), [ia](Tape& t, const Tensor& g) {
        const Tensor& A = t.value(ia);
        auto ga = t.grad(ia).data();
        for (std::size_t i = 0; i < ga.size(); ++i) {
            if (A[i] > 0.0) {
                ga[i] += g[i];
            }
        }
    });
}

Var sigmoid(Var a) {
    Tensor out = a.value();
    for (double& x : out.data()) {
        x = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    }
    Tensor saved = out;
    const std::size_t ia = a.id;
    return a.tape->record(std::move(out), [ia, y = std::move(saved)](Tape& t, const Tensor& g) {
        auto ga = t.grad(ia).data();
        for (std::size_t i = 0; i < ga.size(); ++i) {
            ga[i] += g[i] * y[i] * (1.0 - y[i]);
        }
    });
}

Var softmax(Var a) {
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto r = out.row(i);
        if (r.empty()) {
            continue;
        }
        const double mx = *std::max_element(r.begin(), r.end());
        double sum = 0.0;
        for (double& x : r) {
            x = std::exp(x - mx);
            sum += x;
        }
        for (double& x : r) {
            x /= sum;
        }
    }
    Tensor saved = out;
    const std::size_t ia = a.id;
    return a.tape->record(std::move(out), [ia, y = std::move(saved)](Tape& t, const Tensor& g) {
        Tensor& ga = t.grad(ia);
        for (std::size_t i = 0; i < y.rows(); ++i) {
            auto yr = y.row(i);
            auto gr = g.row(i);
            double dot = 0.0;
            for (std::size_t j = 0; j < yr.size(); ++j) {
                dot += gr[j] * yr[j];
            }
            auto out_row = ga.row(i);
            for (std::size_t j = 0; j < yr.size(); ++j) {
                out_row[j] += yr[j] * (gr[j] - dot);
            }
        }
    });
}

Var concat_cols(std::span<const Var> parts) {
    require(!parts.empty(), "concat_cols");
    const std::size_t n = parts[0].rows();
    std::vector<std::size_t> ids, widths;
    std::size_t total = 0;
    for (const Var& p : parts) {
        require(p.rows() == n, "concat_cols");
        ids.push_back(p.id);
        widths.push_back(p.cols());
        total += p.cols();
    }
    Tensor out(n, total);
    std::size_t offset = 0;
    for (const Var& p : parts) {
        const Tensor& v = p.value();
        for (std::size_t i = 0; i < n; ++i) {
            std::copy(v.row(i).begin(), v.row(i).end(), out.row(i).begin() + offset);
        }
        offset += v.cols();
    }
    return parts[0].tape->record(std::move(out), [ids, widths](Tape& t, const Tensor& g) {
        std::size_t offset = 0;
        for (std::size_t p = 0; p < ids.size(); ++p) {
            Tensor& gp = t.grad(ids[p]);
            for (std::size_t i = 0; i < g.rows(); ++i) {
                auto src = g.row(i);
                auto dst = gp.row(i);
                for (std::size_t j = 0; j < widths[p]; ++j) {
                    dst[j] += src[offset + j];
                }
            }
            offset += widths[p];
        }
    });
}

Var concat_rows(std::span<const Var> parts) {
    require(!parts.empty(), "concat_rows");
    const std::size_t c = parts[0].cols();
    std::vector<std::size_t> ids, heights;
    std::size_t total = 0;
    for (const Var& p : parts) {
        require(p.cols() == c, "concat_rows");
        ids.push_back(p.id);
        heights.push_back(p.rows());
        total += p.rows();
    }
    Tensor out(total, c);
    std::size_t offset = 0;
    for (const Var& p : parts) {
        auto src = p.value().data();
        std::copy(src.begin(), src.end(), out.data().begin() + offset * c);
        offset += p.rows();
    }
    return parts[0].tape->record(std::move(out), [ids, heights, c](Tape& t, const Tensor& g) {
        std::size_t offset = 0;
        for (std::size_t p = 0; p < ids.size(); ++p) {
            auto gp = t.grad(ids[p]).data();
            for (std::size_t j = 0; j < gp.size(); ++j) {
                gp[j] += g[offset * c + j];
            }
            offset += heights[p];
        }
    });
}

Var gather_rows(Var a, std::span<const std::size_t> index) {
    const Tensor& A = a.value();
    Tensor out(index.size(), A.cols());
    for (std::size_t i = 0; i < index.size(); ++i) {
        require(index[i] < A.rows(), "gather_rows");
        std::copy(A.row(index[i]).begin(), A.row(index[i]).end(), out.row(i).begin());
    }
    std::vector<std::size_t> idx(index.begin(), index.end());
    const std::size_t ia = a.id;
    return a.tape->record(std::move(out), [ia, idx = std::move(idx)](Tape& t, const Tensor& g) {
        Tensor& ga = t.grad(ia);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            auto src = g.row(i);
            auto dst = ga.row(idx[i]);
            for (std::size_t j = 0; j < src.size(); ++j) {
                dst[j] += src[j];
            }
        }
    });
}

Var segment_mean(Var src, std::span<const std::size_t> src_rows, std::span<const std::size_t> dst_rows,
                 std::size_t dst_count) {
    require(src_rows.size() == dst_rows.size(), "segment_mean");
    const Tensor& S = src.value();
    const std::size_t c = S.cols();
    std::vector<double> degree(dst_count, 0.0);
    for (std::size_t e = 0; e < dst_rows.size(); ++e) {
        require(dst_rows[e] < dst_count && src_rows[e] < S.rows(), "segment_mean");
        degree[dst_rows[e]] += 1.0;
    }
    Tensor out(dst_count, c);
    for (std::size_t e = 0; e < dst_rows.size(); ++e) {
        auto from = S.row(src_rows[e]);
        auto to = out.row(dst_rows[e]);
        for (std::size_t j = 0; j < c; ++j) {
            to[j] += from[j];
        }
    }
    for (std::size_t d = 0; d < dst_count; ++d) {
        if (degree[d] > 0.0) {
            for (double& x : out.row(d)) {
                x /= degree[d];
            }
        }
    }
    std::vector<std::size_t> s(src_rows.begin(), src_rows.end());
    std::vector<std::size_t> d(dst_rows.begin(), dst_rows.end());
    const std::size_t is = src.id;
    return src.tape->record(std::move(out), [is, s = std::move(s), d = std::move(d),
                                             degree = std::move(degree)](Tape& t, const Tensor& g) {
        Tensor& gs = t.grad(is);
        for (std::size_t e = 0; e < s.size(); ++e) {
            auto from = g.row(d[e]);
            auto to = gs.row(s[e]);
            const double w = 1.0 / degree[d[e]];
            for (std::size_t j = 0; j < from.size(); ++j) {
                to[j] += w * from[j];
            }
        }
    });
}

Var mean_rows(Var a) {
    const Tensor& A = a.value();
    Tensor out(1, A.cols());
    const double n = static_cast<double>(A.rows());
    for (std::size_t i = 0; i < A.rows(); ++i) {
        for (std::size_t j = 0; j < A.cols(); ++j) {
            out[j] += A(i, j);
        }
    }
    if (A.rows() > 0) {
        for (double& x : out.data()) {
            x /= n;
        }
    }
    const std::size_t ia = a.id;
    return a.tape->record(std::move(out), [ia, n](Tape& t, const Tensor& g) {
        Tensor& ga = t.grad(ia);
        for (std::size_t i = 0; i < ga.rows(); ++i) {
            auto r = ga.row(i);
            for (std::size_t j = 0; j < r.size(); ++j) {
                r[j] += g[j] / n;
            }
        }
    });
}

Var dropout(Var a, double rate, Rng& rng) {
    if (rate <= 0.0) {
        return a;
    }
    if (rate >= 1.0) {
        throw ConfigError("dropout rate must be below 1");
    }
    const Tensor& A = a.value();
    Tensor mask(A.rows(), A.cols());
    const double keep = 1.0 / (1.0 - rate);
    for (double& m : mask.data()) {
        m = rng.uniform() < rate ? 0.0 : keep;
    }
    return mul(a, a.tape->constant(std::move(mask)));
}

Var broadcast_rows(Var row, std::size_t n) {
    const Tensor& R = row.value();
    require(R.rows() == 1, "broadcast_rows");
    Tensor out(n, R.cols());
    for (std::size_t i = 0; i < n; ++i) {
        std::copy(R.data().begin(), R.data().end(), out.row(i).begin());
    }
    const std::size_t ir = row.id;
    return row.tape->record(std::move(out), [ir](Tape& t, const Tensor& g) {
        Tensor& gr = t.grad(ir);
        for (std::size_t i = 0; i < g.rows(); ++i) {
            auto r = g.row(i);
            for (std::size_t j = 0; j < r.size(); ++j) {
                gr[j] += r[j];
            }
        }
    });
}

namespace {
constexpr double kProbFloor = 1e-12;

double clamp_prob(double p) { return std::clamp(p, kProbFloor, 1.0 - kProbFloor); }
}  // namespace

Var bce(Var p, std::span<const double> labels) {
    const Tensor& P = p.value();
    require(P.cols() == 1 && P.rows() == labels.size() && !labels.empty(), "bce");
    const double n = static_cast<double>(labels.size());
    double loss = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double q = clamp_prob(P[i]);
        loss -= labels[i] * std::log(q) + (1.0 - labels[i]) * std::log(1.0 - q);
    }
    std::vector<double> y(labels.begin(), labels.end());
    const std::size_t ip = p.id;
    return p.tape->record(Tensor::scalar(loss / n), [ip, y = std::move(y), n](Tape& t, const Tensor& g) {
        const Tensor& P = t.value(ip);
        auto gp = t.grad(ip).data();
        for (std::size_t i = 0; i < y.size(); ++i) {
            // Gradient of the clamped expression: zero where the clamp is active.
            if (P[i] <= kProbFloor || P[i] >= 1.0 - kProbFloor) {
                continue;
            }
            gp[i] += g[0] * (-(y[i] / P[i]) + (1.0 - y[i]) / (1.0 - P[i])) / n;
        }
    });
}

Var cross_entropy(Var p, std::span<const std::size_t> labels) {
    const Tensor& P = p.value();
    require(P.rows() == labels.size() && !labels.empty(), "cross_entropy");
    const double n = static_cast<double>(labels.size());
    double loss = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        require(labels[i] < P.cols(), "cross_entropy");
        loss -= std::log(clamp_prob(P(i, labels[i])));
    }
    std::vector<std::size_t> y(labels.begin(), labels.end());
    const std::size_t ip = p.id;
    return p.tape->record(Tensor::scalar(loss / n), [ip, y = std::move(y), n](Tape& t, const Tensor& g) {
        const Tensor& P = t.value(ip);
        Tensor& gp = t.grad(ip);
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double q = P(i, y[i]);
            if (q <= kProbFloor || q >= 1.0 - kProbFloor) {
                continue;
            }
            gp(i, y[i]) -= g[0] / (q * n);
        }
    });
}

Var mse(Var pred, std::span<const double> targets) {
    const Tensor& P = pred.value();
    require(P.cols() == 1 && P.rows() == targets.size() && !targets.empty(), "mse");
    const double n = static_cast<double>(targets.size());
    double loss = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const double d = P[i] - targets[i];
        loss += d * d;
    }
    std::vector<double> y(targets.begin(), targets.end());
    const std::size_t ip = pred.id;
    return pred.tape->record(Tensor::scalar(loss / n), [ip, y = std::move(y), n](Tape& t, const Tensor& g) {
        const Tensor& P = t.value(ip);
        auto gp = t.grad(ip).data();
        for (std::size_t i = 0; i < y.size(); ++i) {
            gp[i] += g[0] * 2.0 * (P[i] - y[i]) / n;
        }
    });
}

Var linear(Var x, Var weight, Var bias) { return add_row(matmul(x, weight), bias); }

// --- Adam -------------------------------------------------------------------------

void adam_step(std::span<Parameter* const> params, const AdamOptions& o) {
    for (Parameter* p : params) {
        p->steps += 1;
        const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(p->steps));
        const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(p->steps));
        auto v = p->value.data();
        auto g = p->grad.data();
        auto m1 = p->first_moment.data();
        auto m2 = p->second_moment.data();
        for (std::size_t i = 0; i < v.size(); ++i) {
            m1[i] = o.beta1 * m1[i] + (1.0 - o.beta1) * g[i];
            m2[i] = o.beta2 * m2[i] + (1.0 - o.beta2) * g[i] * g[i];
            const double mhat = m1[i] / c1;
            const double vhat = m2[i] / c2;
            v[i] -= o.learning_rate * mhat / (std::sqrt(vhat) + o.epsilon);
            g[i] = 0.0;
        }
    }
}

// --- Checkpoints --------------------------------------------------------------------

namespace {

constexpr char kMagic[] = "SRPCKPT1";

template <typename T>
void put(std::string& out, T v) {
    static_assert(std::is_integral_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
    }
}

class ByteReader {
  public:
    explicit ByteReader(const std::string& s) : s_(s) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s_[pos_ + i])) << (8 * i);
        }
        pos_ += sizeof(T);
        return static_cast<T>(v);
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string out = s_.substr(pos_, n);
        pos_ += n;
        return out;
    }
    bool done() const { return pos_ == s_.size(); }

  private:
    void need(std::size_t n) const {
        if (pos_ + n > s_.size()) {
            throw DataError("truncated checkpoint");
        }
    }
    const std::string& s_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string checkpoint_bytes(std::span<const Parameter* const> params) {
    std::string out(kMagic, 8);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
    for (const Parameter* p : params) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
        out += p->name;
        put<std::uint32_t>(out, 2);
        put<std::uint64_t>(out, p->value.rows());
        put<std::uint64_t>(out, p->value.cols());
    }
    for (const Parameter* p : params) {
        for (double x : p->value.data()) {
            put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(x));
        }
    }
    return out;
}

void save_checkpoint(const std::filesystem::path& path, std::span<const Parameter* const> params) {
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw DataError("cannot write checkpoint " + path.string());
    }
    const std::string bytes = checkpoint_bytes(params);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void load_checkpoint_bytes(const std::string& bytes, std::span<Parameter* const> params) {
    ByteReader r(bytes);
    if (r.bytes(8) != std::string(kMagic, 8)) {
        throw DataError("not a checkpoint");
    }
    const auto count = r.get<std::uint32_t>();
    if (count != params.size()) {
        throw DataError("checkpoint holds " + std::to_string(count) + " parameters, model has " +
                        std::to_string(params.size()));
    }
    for (Parameter* p : params) {
        const auto len = r.get<std::uint32_t>();
        const std::string name = r.bytes(len);
        const auto rank = r.get<std::uint32_t>();
        std::vector<std::uint64_t> dims;
        for (std::uint32_t i = 0; i < rank; ++i) {
            dims.push_back(r.get<std::uint64_t>());
        }
        if (name != p->name || rank != 2 || dims[0] != p->value.rows() || dims[1] != p->value.cols()) {
            throw DataError("checkpoint parameter " + name + " does not match " + p->name);
        }
    }
    for (Parameter* p : params) {
        for (double& x : p->value.data()) {
            x = std::bit_cast<double>(r.get<std::uint64_t>());
        }
    }
    if (!r.done()) {
        throw DataError("trailing bytes in checkpoint");
    }
}

void load_checkpoint(const std::filesystem::path& path, std::span<Parameter* const> params) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw DataError("cannot read checkpoint " + path.string());
    }
    std::ostringstream ss;
    ss << f.rdbuf();
    load_checkpoint_bytes(ss.str(), params);
}

}  // namespace srp::nn
