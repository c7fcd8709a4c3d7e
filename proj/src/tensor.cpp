#include "takt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <utility>

namespace takt {

namespace {

std::size_t numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t s : shape) n *= s;
    return n;
}

std::string to_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shapes " + a.shape_str() + " and " +
                             b.shape_str() + " do not match");
    }
}

}  // namespace

// --- Tensor ----------------------------------------------------------------

Tensor::Data& Tensor::data() const {
    if (!d_) throw Error("use of undefined tensor");
    return *d_;
}

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value, bool requires_grad) {
    auto d = std::make_shared<Data>();
    d->values.assign(numel(shape), value);
    d->shape = std::move(shape);
    d->requires_grad = requires_grad;
    if (requires_grad) d->grad.assign(d->values.size(), 0.0);
    return Tensor(std::move(d));
}

Tensor Tensor::from(std::vector<double> values, std::vector<std::size_t> shape,
                    bool requires_grad) {
    if (values.size() != numel(shape)) {
        throw DimensionError("tensor of shape " + to_str(shape) + " needs " +
                             std::to_string(numel(shape)) + " values, got " +
                             std::to_string(values.size()));
    }
    auto d = std::make_shared<Data>();
    d->shape = std::move(shape);
    d->values = std::move(values);
    d->requires_grad = requires_grad;
    if (requires_grad) d->grad.assign(d->values.size(), 0.0);
    return Tensor(std::move(d));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from({value}, {1}, requires_grad);
}

Tensor Tensor::row(std::vector<double> values, bool requires_grad) {
    const std::size_t n = values.size();
    return from(std::move(values), {n}, requires_grad);
}

const std::vector<std::size_t>& Tensor::shape() const { return data().shape; }

std::size_t Tensor::size() const { return data().values.size(); }

std::size_t Tensor::rows() const {
    if (rank() != 2) throw DimensionError("rows(): tensor " + shape_str() + " is not rank-2");
    return shape()[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) throw DimensionError("cols(): tensor " + shape_str() + " is not rank-2");
    return shape()[1];
}

bool Tensor::requires_grad() const { return data().requires_grad; }

const std::vector<double>& Tensor::values() const { return data().values; }
std::vector<double>& Tensor::values_mut() const { return data().values; }

double Tensor::value() const {
    if (size() != 1) throw DimensionError("value(): tensor " + shape_str() + " is not a scalar");
    return data().values[0];
}

double Tensor::at(std::size_t i) const {
    if (i >= size()) throw IndexError("index " + std::to_string(i) + " out of range for size " +
                                      std::to_string(size()));
    return data().values[i];
}

double Tensor::at(std::size_t r, std::size_t c) const {
    return data().values[r * cols() + c];
}

const std::vector<double>& Tensor::grad() const {
    if (!requires_grad()) throw Error("tensor does not require grad");
    return data().grad;
}

std::vector<double>& Tensor::grad_mut() const {
    if (!requires_grad()) throw Error("tensor does not require grad");
    return data().grad;
}

void Tensor::zero_grad() const {
    if (requires_grad()) std::fill(data().grad.begin(), data().grad.end(), 0.0);
}

Tensor Tensor::clone() const {
    auto d = std::make_shared<Data>(data());
    return Tensor(std::move(d));
}

std::string Tensor::shape_str() const { return to_str(shape()); }

// --- Tape --------------------------------------------------------------------

void Tape::record(Tensor output, std::function<void()> pull) {
    if (!recording_) return;
    nodes_.push_back(Node{std::move(output), std::move(pull)});
}

void Tape::backward(const Tensor& loss) {
    if (consumed_) throw TapeError("backward() already ran on this tape");
    if (!loss.defined() || loss.size() != 1) {
        throw TapeError("backward() expects a scalar loss");
    }
    bool on_tape = false;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (it->output.same_data(loss)) {
            on_tape = true;
            break;
        }
    }
    if (!on_tape) throw TapeError("loss tensor was not produced on this tape");
    consumed_ = true;
    Tensor seed = loss;  // handle copy, same buffer
    seed.grad_mut()[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        it->pull();
    }
}

// --- op helpers ----------------------------------------------------------------

namespace {

bool track(const Tape& tape, std::initializer_list<const Tensor*> inputs) {
    if (!tape.recording()) return false;
    for (const Tensor* t : inputs) {
        if (t->requires_grad()) return true;
    }
    return false;
}

}  // namespace

// --- matmul / vecmat / dot ----------------------------------------------------

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
        throw DimensionError("matmul: incompatible shapes " + a.shape_str() + " and " +
                             b.shape_str());
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    std::vector<double> out(m * n, 0.0);
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            for (std::size_t j = 0; j < n; ++j) {
                out[i * n + j] += aip * bv[p * n + j];
            }
        }
    }
    const bool rg = track(tape, {&a, &b});
    Tensor y = Tensor::from(std::move(out), {m, n}, rg);
    if (rg) {
        tape.record(y, [a, b, y, m, k, n] {
            const auto& g = y.grad();
            if (a.requires_grad()) {
                auto& ga = a.grad_mut();
                const auto& bv2 = b.values();
                // dA = G * B^T
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        double s = 0.0;
                        for (std::size_t j = 0; j < n; ++j)
                            s += g[i * n + j] * bv2[p * n + j];
                        ga[i * k + p] += s;
                    }
            }
            if (b.requires_grad()) {
                auto& gb = b.grad_mut();
                const auto& av2 = a.values();
                // dB = A^T * G
                for (std::size_t p = 0; p < k; ++p)
                    for (std::size_t j = 0; j < n; ++j) {
                        double s = 0.0;
                        for (std::size_t i = 0; i < m; ++i)
                            s += av2[i * k + p] * g[i * n + j];
                        gb[p * n + j] += s;
                    }
            }
        });
    }
    return y;
}

Tensor vecmat(Tape& tape, const Tensor& v, const Tensor& m) {
    if (v.rank() != 1 || m.rank() != 2 || v.size() != m.rows()) {
        throw DimensionError("vecmat: incompatible shapes " + v.shape_str() + " and " +
                             m.shape_str());
    }
    const std::size_t k = v.size(), n = m.cols();
    std::vector<double> out(n, 0.0);
    const auto& vv = v.values();
    const auto& mv = m.values();
    for (std::size_t p = 0; p < k; ++p) {
        const double vp = vv[p];
        for (std::size_t j = 0; j < n; ++j) out[j] += vp * mv[p * n + j];
    }
    const bool rg = track(tape, {&v, &m});
    Tensor y = Tensor::from(std::move(out), {n}, rg);
    if (rg) {
        tape.record(y, [v, m, y, k, n] {
            const auto& g = y.grad();
            if (v.requires_grad()) {
                auto& gv = v.grad_mut();
                const auto& mv2 = m.values();
                for (std::size_t p = 0; p < k; ++p) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < n; ++j) s += g[j] * mv2[p * n + j];
                    gv[p] += s;
                }
            }
            if (m.requires_grad()) {
                auto& gm = m.grad_mut();
                const auto& vv2 = v.values();
                for (std::size_t p = 0; p < k; ++p)
                    for (std::size_t j = 0; j < n; ++j) gm[p * n + j] += vv2[p] * g[j];
            }
        });
    }
    return y;
}

Tensor dot(Tape& tape, const Tensor& a, const Tensor& b) {
    if (a.rank() != 1 || b.rank() != 1 || a.size() != b.size()) {
        throw DimensionError("dot: incompatible shapes " + a.shape_str() + " and " +
                             b.shape_str());
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.values()[i] * b.values()[i];
    const bool rg = track(tape, {&a, &b});
    Tensor y = Tensor::scalar(s, rg);
    if (rg) {
        tape.record(y, [a, b, y] {
            const double g = y.grad()[0];
            if (a.requires_grad()) {
                auto& ga = a.grad_mut();
                for (std::size_t i = 0; i < a.size(); ++i) ga[i] += g * b.values()[i];
            }
            if (b.requires_grad()) {
                auto& gb = b.grad_mut();
                for (std::size_t i = 0; i < b.size(); ++i) gb[i] += g * a.values()[i];
            }
        });
    }
    return y;
}

// --- elementwise ---------------------------------------------------------------

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
    const bool rg = track(tape, {&a, &b});
    Tensor y = Tensor::from(std::move(out), a.shape(), rg);
    if (rg) {
        tape.record(y, [a, b, y] {
            const auto& g = y.grad();
            if (a.requires_grad()) {
                auto& ga = a.grad_mut();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (b.requires_grad()) {
                auto& gb = b.grad_mut();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            }
        });
    }
    return y;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
    const bool rg = track(tape, {&a, &b});
    Tensor y = Tensor::from(std::move(out), a.shape(), rg);
    if (rg) {
        tape.record(y, [a, b, y] {
            const auto& g = y.grad();
            if (a.requires_grad()) {
                auto& ga = a.grad_mut();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (b.requires_grad()) {
                auto& gb = b.grad_mut();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
            }
        });
    }
    return y;
}

Tensor hadamard(Tape& tape, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "hadamard");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
    const bool rg = track(tape, {&a, &b});
    Tensor y = Tensor::from(std::move(out), a.shape(), rg);
    if (rg) {
        tape.record(y, [a, b, y] {
            const auto& g = y.grad();
            if (a.requires_grad()) {
                auto& ga = a.grad_mut();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b.values()[i];
            }
            if (b.requires_grad()) {
                auto& gb = b.grad_mut();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a.values()[i];
            }
        });
    }
    return y;
}

Tensor add(Tape& tape, const Tensor& a, double c) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + c;
    const bool rg = track(tape, {&a});
    Tensor y = Tensor::from(std::move(out), a.shape(), rg);
    if (rg) {
        tape.record(y, [a, y] {
            const auto& g = y.grad();
            auto& ga = a.grad_mut();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        });
    }
    return y;
}

Tensor sub(Tape& tape, const Tensor& a, double c) { return add(tape, a, -c); }

Tensor sub(Tape& tape, double c, const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = c - a.values()[i];
    const bool rg = track(tape, {&a});
    Tensor y = Tensor::from(std::move(out), a.shape(), rg);
    if (rg) {
        tape.record(y, [a, y] {
            const auto& g = y.grad();
            auto& ga = a.grad_mut();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] -= g[i];
        });
    }
    return y;
}

Tensor scale(Tape& tape, const Tensor& a, double c) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * c;
    const bool rg = track(tape, {&a});
    Tensor y = Tensor::from(std::move(out), a.shape(), rg);
    if (rg) {
        tape.record(y, [a, y, c] {
            const auto& g = y.grad();
            auto& ga = a.grad_mut();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
        });
    }
    return y;
}

// --- nonlinearities ----------------------------------------------------------

double sigmoid_scalar(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Tensor sigmoid(Tape& tape, const Tensor& x) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_scalar(x.values()[i]);
    const bool rg = track(tape, {&x});
    Tensor y = Tensor::from(std::move(out), x.shape(), rg);
    if (rg) {
        tape.record(y, [x, y] {
            const auto& g = y.grad();
            auto& gx = x.grad_mut();
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double s = y.values()[i];
                gx[i] += g[i] * s * (1.0 - s);
            }
        });
    }
    return y;
}

Tensor tanh(Tape& tape, const Tensor& x) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x.values()[i]);
    const bool rg = track(tape, {&x});
    Tensor y = Tensor::from(std::move(out), x.shape(), rg);
    if (rg) {
        tape.record(y, [x, y] {
            const auto& g = y.grad();
            auto& gx = x.grad_mut();
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double t = y.values()[i];
                gx[i] += g[i] * (1.0 - t * t);
            }
        });
    }
    return y;
}

Tensor log(Tape& tape, const Tensor& x) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(x.values()[i]);
    const bool rg = track(tape, {&x});
    Tensor y = Tensor::from(std::move(out), x.shape(), rg);
    if (rg) {
        tape.record(y, [x, y] {
            const auto& g = y.grad();
            auto& gx = x.grad_mut();
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] / x.values()[i];
        });
    }
    return y;
}

Tensor clamp(Tape& tape, const Tensor& x, double lo, double hi) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::min(hi, std::max(lo, x.values()[i]));
    }
    const bool rg = track(tape, {&x});
    Tensor y = Tensor::from(std::move(out), x.shape(), rg);
    if (rg) {
        tape.record(y, [x, y, lo, hi] {
            const auto& g = y.grad();
            auto& gx = x.grad_mut();
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double v = x.values()[i];
                if (v >= lo && v <= hi) gx[i] += g[i];
            }
        });
    }
    return y;
}

// --- concat / gather / reductions ---------------------------------------------

Tensor concat(Tape& tape, const Tensor& a, const Tensor& b) {
    if (a.rank() == 1 && b.rank() == 1) {
        std::vector<double> out;
        out.reserve(a.size() + b.size());
        out.insert(out.end(), a.values().begin(), a.values().end());
        out.insert(out.end(), b.values().begin(), b.values().end());
        const bool rg = track(tape, {&a, &b});
        Tensor y = Tensor::from(std::move(out), {a.size() + b.size()}, rg);
        if (rg) {
            const std::size_t na = a.size();
            tape.record(y, [a, b, y, na] {
                const auto& g = y.grad();
                if (a.requires_grad()) {
                    auto& ga = a.grad_mut();
                    for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
                }
                if (b.requires_grad()) {
                    auto& gb = b.grad_mut();
                    for (std::size_t i = 0; i < b.size(); ++i) gb[i] += g[na + i];
                }
            });
        }
        return y;
    }
    if (a.rank() == 2 && b.rank() == 2 && a.rows() == b.rows()) {
        const std::size_t r = a.rows(), ca = a.cols(), cb = b.cols();
        std::vector<double> out(r * (ca + cb));
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < ca; ++j) out[i * (ca + cb) + j] = a.at(i, j);
            for (std::size_t j = 0; j < cb; ++j) out[i * (ca + cb) + ca + j] = b.at(i, j);
        }
        const bool rg = track(tape, {&a, &b});
        Tensor y = Tensor::from(std::move(out), {r, ca + cb}, rg);
        if (rg) {
            tape.record(y, [a, b, y, r, ca, cb] {
                const auto& g = y.grad();
                if (a.requires_grad()) {
                    auto& ga = a.grad_mut();
                    for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < ca; ++j)
                            ga[i * ca + j] += g[i * (ca + cb) + j];
                }
                if (b.requires_grad()) {
                    auto& gb = b.grad_mut();
                    for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < cb; ++j)
                            gb[i * cb + j] += g[i * (ca + cb) + ca + j];
                }
            });
        }
        return y;
    }
    throw DimensionError("concat: incompatible shapes " + a.shape_str() + " and " +
                         b.shape_str());
}

Tensor gather_rows(Tape& tape, const Tensor& m, std::size_t idx) {
    if (m.rank() != 2) {
        throw DimensionError("gather_rows: tensor " + m.shape_str() + " is not rank-2");
    }
    if (idx >= m.rows()) {
        throw IndexError("gather_rows: row " + std::to_string(idx) +
                         " out of range for matrix with " + std::to_string(m.rows()) + " rows");
    }
    const std::size_t d = m.cols();
    std::vector<double> out(m.values().begin() + idx * d, m.values().begin() + (idx + 1) * d);
    const bool rg = track(tape, {&m});
    Tensor y = Tensor::from(std::move(out), {d}, rg);
    if (rg) {
        tape.record(y, [m, y, idx, d] {
            const auto& g = y.grad();
            auto& gm = m.grad_mut();
            for (std::size_t j = 0; j < d; ++j) gm[idx * d + j] += g[j];
        });
    }
    return y;
}

Tensor sum(Tape& tape, const Tensor& x) {
    double s = 0.0;
    for (double v : x.values()) s += v;
    const bool rg = track(tape, {&x});
    Tensor y = Tensor::scalar(s, rg);
    if (rg) {
        tape.record(y, [x, y] {
            const double g = y.grad()[0];
            auto& gx = x.grad_mut();
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
        });
    }
    return y;
}

Tensor sum_squares(Tape& tape, const Tensor& x) {
    double s = 0.0;
    for (double v : x.values()) s += v * v;
    const bool rg = track(tape, {&x});
    Tensor y = Tensor::scalar(s, rg);
    if (rg) {
        tape.record(y, [x, y] {
            const double g = y.grad()[0];
            auto& gx = x.grad_mut();
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g * 2.0 * x.values()[i];
        });
    }
    return y;
}

}  // namespace takt
