#include "paraformer/core.hpp"

#include <charconv>

#include <malloc.h>

namespace paraformer {

void require_shape(bool ok, const std::string& what) {
    if (!ok) throw ShapeError("shape mismatch: " + what);
}

bool all_finite(const Matrix& m) {
    return m.allFinite();
}

Matrix uniform_matrix(Index rows, Index cols, double bound, Rng& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
    return m;
}

Matrix normal_matrix(Index rows, Index cols, double stddev, Rng& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
    return m;
}

Matrix random_stochastic(Index n, Rng& rng) {
    std::uniform_real_distribution<double> dist(0.05, 1.0);
    Matrix m(n, n);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) m(i, j) = dist(rng);
        m.row(i) /= m.row(i).sum();
    }
    return m;
}

void configure_allocator() {
    mallopt(M_MMAP_THRESHOLD, 32 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 512 * 1024 * 1024);
    mallopt(M_TOP_PAD, 64 * 1024 * 1024);
}

std::string format_number(double x) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    if (ec != std::errc()) throw NumericError("format_number: conversion failed");
    return std::string(buf, ptr);
}

}  // namespace paraformer
