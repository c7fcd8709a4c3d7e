#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "takt/errors.hpp"

namespace takt {

// Dense double-precision tensor of rank 1 or 2, held by a shared handle.
// Copying a Tensor copies the handle, not the buffer; this is what lets the
// tape's backward closures reach the same storage the caller sees.
//
// Gradients accumulate into `grad()` across backward passes until the caller
// zeroes them; a training step is expected to zero_grad() after each update.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
    static Tensor full(std::vector<std::size_t> shape, double value, bool requires_grad = false);
    static Tensor from(std::vector<double> values, std::vector<std::size_t> shape,
                       bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor row(std::vector<double> values, bool requires_grad = false);

    bool defined() const { return static_cast<bool>(d_); }
    const std::vector<std::size_t>& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t size() const;

    // Rank-2 accessors; throw DimensionError on rank-1 tensors.
    std::size_t rows() const;
    std::size_t cols() const;

    bool requires_grad() const;

    const std::vector<double>& values() const;

    double value() const;  // scalar accessor, size() must be 1
    double at(std::size_t i) const;
    double at(std::size_t r, std::size_t c) const;

    const std::vector<double>& grad() const;

    // The handle is const; the shared buffers are not. Mutators are
    // const-qualified so backward closures can write through captured copies.
    std::vector<double>& values_mut() const;
    std::vector<double>& grad_mut() const;
    void zero_grad() const;

    // Handle identity (same underlying buffer).
    bool same_data(const Tensor& other) const { return d_ == other.d_; }

    // Deep copy with fresh buffers.
    Tensor clone() const;

    std::string shape_str() const;

private:
    struct Data {
        std::vector<std::size_t> shape;
        std::vector<double> values;
        bool requires_grad = false;
        std::vector<double> grad;  // same length as values when requires_grad
    };
    std::shared_ptr<Data> d_;

    explicit Tensor(std::shared_ptr<Data> d) : d_(std::move(d)) {}
    Data& data() const;
};

// Wengert-list tape. Ops append one node per recorded operation, so the list
// is in topological order by construction; backward() walks it once in
// reverse. A tape and its tensors belong to one thread; independent tapes may
// run concurrently.
class Tape {
public:
    explicit Tape(bool recording = true) : recording_(recording) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const { return recording_; }
    std::size_t node_count() const { return nodes_.size(); }

    void record(Tensor output, std::function<void()> pull);

    // Seeds d(loss)/d(loss) = 1 and propagates through every node in reverse
    // order. Throws TapeError if loss is not a scalar, was not produced on
    // this tape, or if the tape has already been backpropagated.
    void backward(const Tensor& loss);

private:
    struct Node {
        Tensor output;
        std::function<void()> pull;
    };
    std::vector<Node> nodes_;
    bool recording_;
    bool consumed_ = false;
};

// --- Differentiable operations -------------------------------------------
//
// Every op validates shapes, computes the forward value, and (when the tape
// is recording and any input requires a gradient) records a pull closure that
// scatters d(loss)/d(output) into the inputs' grad buffers.

// [m x k] * [k x n] -> [m x n]
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);

// [k] * [k x n] -> [n]   (row vector times matrix)
Tensor vecmat(Tape& tape, const Tensor& v, const Tensor& m);

// [n] . [n] -> scalar
Tensor dot(Tape& tape, const Tensor& a, const Tensor& b);

// Elementwise; equal shapes required (no broadcasting beyond the scalar
// overloads below).
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor hadamard(Tape& tape, const Tensor& a, const Tensor& b);

// Scalar second (or first) operand variants.
Tensor add(Tape& tape, const Tensor& a, double c);
Tensor sub(Tape& tape, const Tensor& a, double c);   // a - c
Tensor sub(Tape& tape, double c, const Tensor& a);   // c - a
Tensor scale(Tape& tape, const Tensor& a, double c);

Tensor sigmoid(Tape& tape, const Tensor& x);
Tensor tanh(Tape& tape, const Tensor& x);
Tensor log(Tape& tape, const Tensor& x);

// Pass-through gradient inside [lo, hi], zero outside.
Tensor clamp(Tape& tape, const Tensor& x, double lo, double hi);

// Rank-1 concatenation (segments preserved in order) or rank-2 with equal
// row counts (concatenation along columns).
Tensor concat(Tape& tape, const Tensor& a, const Tensor& b);

// Row `idx` of a [R x d] matrix as a rank-1 [d] tensor; backward
// scatter-adds into that row.
Tensor gather_rows(Tape& tape, const Tensor& m, std::size_t idx);

Tensor sum(Tape& tape, const Tensor& x);
Tensor sum_squares(Tape& tape, const Tensor& x);

// Numerically stable scalar sigmoid, shared with non-tape code paths.
double sigmoid_scalar(double x);

}  // namespace takt
